//! Mirror, crop-and-rescale and HSV colour jitter.
//!
//! Images are `(3, 32, 32)` slices in `[0,1]`. Each image gets its own random stream,
//! and every function consumes the same number of draws whatever the configuration,
//! so changing one constant never reshuffles the other augmentations.

use super::{resize_square, CHANNELS, IMAGE_LEN, SIDE};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub d_h: f64,
    pub d_s: f64,
    pub d_v: f64,
    pub a_s: f64,
    pub a_v: f64,
    pub mirror_prob: f64,
    pub crop_min: u32,
    pub crop_max: u32,
}

impl AugmentConfig {
    /// No augmentation at all.
    pub fn identity() -> Self {
        Self {
            d_h: 0.0,
            d_s: 0.0,
            d_v: 0.0,
            a_s: 0.0,
            a_v: 0.0,
            mirror_prob: 0.0,
            crop_min: SIDE as u32,
            crop_max: SIDE as u32,
        }
    }

    /// Mirror and crop jitter with the given colour constants.
    pub fn with_hsv(d_h: f64, d_s: f64, d_v: f64, a_s: f64, a_v: f64) -> Self {
        Self {
            d_h,
            d_s,
            d_v,
            a_s,
            a_v,
            mirror_prob: 0.5,
            crop_min: 24,
            crop_max: SIDE as u32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = [self.d_h, self.d_s, self.d_v, self.a_s, self.a_v];
        if c.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid(format!("colour jitter constants must be >= 0: {c:?}")));
        }
        if !(0.0..=1.0).contains(&self.mirror_prob) {
            return Err(Error::invalid("mirror probability outside [0,1]"));
        }
        if self.crop_min < 2 || self.crop_min > self.crop_max || self.crop_max as usize > SIDE {
            return Err(Error::invalid(format!(
                "crop range [{}, {}] must lie in [2, {SIDE}]",
                self.crop_min, self.crop_max
            )));
        }
        Ok(())
    }

    fn hsv_is_identity(&self) -> bool {
        [self.d_h, self.d_s, self.d_v, self.a_s, self.a_v]
            .iter()
            .all(|&v| v == 0.0)
    }

    /// Fixed-size little-endian encoding used in transfer-set headers.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(56);
        for v in [self.d_h, self.d_s, self.d_v, self.a_s, self.a_v, self.mirror_prob] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.crop_min.to_le_bytes());
        out.extend_from_slice(&self.crop_max.to_le_bytes());
        out
    }

    pub const ENCODED_LEN: usize = 56;

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        if b.len() != Self::ENCODED_LEN {
            return Err(Error::format(None, "augmentation config has wrong length"));
        }
        let f = |i: usize| {
            let mut a = [0u8; 8];
            a.copy_from_slice(&b[i * 8..i * 8 + 8]);
            f64::from_le_bytes(a)
        };
        let u = |o: usize| u32::from_le_bytes([b[o], b[o + 1], b[o + 2], b[o + 3]]);
        Ok(Self {
            d_h: f(0),
            d_s: f(1),
            d_v: f(2),
            a_s: f(3),
            a_v: f(4),
            mirror_prob: f(5),
            crop_min: u(48),
            crop_max: u(52),
        })
    }
}

/// Flip left-right in place.
pub fn flip_horizontal(image: &mut [f32]) {
    for row in image.chunks_mut(SIDE) {
        row.reverse();
    }
}

/// Flip with probability `prob`; returns whether it flipped.
pub fn mirror(image: &mut [f32], prob: f64, rng: &mut RngStream) -> bool {
    let flip = rng.gen::<f64>() < prob;
    if flip {
        flip_horizontal(image);
    }
    flip
}

/// Crop a random `S x S` window (`S` uniform on `crop_min..=crop_max`, offsets uniform)
/// and scale it back to 32x32 with a cubic spline.
pub fn crop_scale_jitter(image: &[f32], crop_min: u32, crop_max: u32, rng: &mut RngStream) -> Vec<f32> {
    let s = rng.gen_range(crop_min..=crop_max) as usize;
    let x = rng.gen_range(0..=SIDE - s);
    let y = rng.gen_range(0..=SIDE - s);
    crop_resize(image, s, x, y)
}

/// Rows `x..x+s`, columns `y..y+s`, rescaled to 32x32.
pub fn crop_resize(image: &[f32], s: usize, x: usize, y: usize) -> Vec<f32> {
    if s == SIDE {
        return image.to_vec();
    }
    let mut crop = Vec::with_capacity(CHANNELS * s * s);
    for c in 0..CHANNELS {
        for r in x..x + s {
            let start = c * SIDE * SIDE + r * SIDE + y;
            crop.extend_from_slice(&image[start..start + s]);
        }
    }
    resize_square(&crop, s)
}

pub fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let s = if max > 0.0 { d / max } else { 0.0 };
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / d).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / d + 2.0) / 6.0
    } else {
        ((r - g) / d + 4.0) / 6.0
    };
    (h, s, max)
}

pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let sector = (h6.floor() as i64).rem_euclid(6);
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

/// Draws for one image: hue shift, saturation scale and shift, value scale and shift.
struct HsvDraw {
    dh: f64,
    scale_s: f64,
    ds: f64,
    scale_v: f64,
    dv: f64,
}

fn sym(rng: &mut RngStream, d: f64) -> f64 {
    d * (2.0 * rng.gen::<f64>() - 1.0)
}

fn scale(rng: &mut RngStream, a: f64) -> f64 {
    let lo = 1.0 / (1.0 + a);
    let hi = 1.0 + a;
    lo + rng.gen::<f64>() * (hi - lo)
}

/// Shift hue, and scale-and-shift saturation and value, by one uniform draw each for
/// the whole image. Hue wraps; saturation, value and the result are clamped to `[0,1]`.
pub fn hsv_jitter(image: &mut [f32], cfg: &AugmentConfig, rng: &mut RngStream) {
    let d = HsvDraw {
        dh: sym(rng, cfg.d_h),
        scale_s: scale(rng, cfg.a_s),
        ds: sym(rng, cfg.d_s),
        scale_v: scale(rng, cfg.a_v),
        dv: sym(rng, cfg.d_v),
    };
    if cfg.hsv_is_identity() {
        return;
    }
    let plane = SIDE * SIDE;
    for p in 0..plane {
        let (r, g, b) = (image[p] as f64, image[plane + p] as f64, image[2 * plane + p] as f64);
        let (h, s, v) = rgb_to_hsv(r, g, b);
        let h = (h + d.dh).rem_euclid(1.0);
        let s = (d.scale_s * s + d.ds).clamp(0.0, 1.0);
        let v = (d.scale_v * v + d.dv).clamp(0.0, 1.0);
        let (r, g, b) = hsv_to_rgb(h, s, v);
        image[p] = r.clamp(0.0, 1.0) as f32;
        image[plane + p] = g.clamp(0.0, 1.0) as f32;
        image[2 * plane + p] = b.clamp(0.0, 1.0) as f32;
    }
}

/// Full pipeline: mirror, crop/scale, colour. Normalization happens at load time.
pub fn augment_image(image: &[f32], cfg: &AugmentConfig, rng: &mut RngStream) -> Vec<f32> {
    debug_assert_eq!(image.len(), IMAGE_LEN);
    let mut img = image.to_vec();
    mirror(&mut img, cfg.mirror_prob, rng);
    let mut img = crop_scale_jitter(&img, cfg.crop_min, cfg.crop_max, rng);
    hsv_jitter(&mut img, cfg, rng);
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_image(seed: u64) -> Vec<f32> {
        let mut rng = RngStream::new(seed);
        (0..IMAGE_LEN).map(|_| rng.gen::<f32>()).collect()
    }

    #[test]
    fn identity_config_round_trips_through_hsv() {
        let img = random_image(1);
        let mut out = img.clone();
        // Force the conversion path with constants that draw exactly 1 and 0.
        let plane = SIDE * SIDE;
        for p in 0..plane {
            let (h, s, v) = rgb_to_hsv(img[p] as f64, img[plane + p] as f64, img[2 * plane + p] as f64);
            let (r, g, b) = hsv_to_rgb(h, s, v);
            out[p] = r as f32;
            out[plane + p] = g as f32;
            out[2 * plane + p] = b as f32;
        }
        for (a, b) in img.iter().zip(&out) {
            assert!((a - b).abs() < 1e-6);
        }
        let mut same = img.clone();
        hsv_jitter(&mut same, &AugmentConfig::identity(), &mut RngStream::new(3));
        assert_eq!(same, img);
    }

    #[test]
    fn grayscale_ignores_hue_shift() {
        let mut img = vec![0.0f32; IMAGE_LEN];
        for p in 0..SIDE * SIDE {
            let g = (p % 97) as f32 / 96.0;
            img[p] = g;
            img[SIDE * SIDE + p] = g;
            img[2 * SIDE * SIDE + p] = g;
        }
        let mut cfg = AugmentConfig::identity();
        cfg.d_h = 0.3;
        let mut out = img.clone();
        hsv_jitter(&mut out, &cfg, &mut RngStream::new(9));
        for (a, b) in img.iter().zip(&out) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn default_constants_serialize() {
        let cfg = AugmentConfig::with_hsv(0.06, 0.26, 0.20, 0.21, 0.13);
        cfg.validate().unwrap();
        assert_eq!(AugmentConfig::from_bytes(&cfg.to_bytes()).unwrap(), cfg);
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<AugmentConfig>(&json).unwrap(), cfg);
    }

    #[test]
    fn mirror_is_an_involution() {
        let img = random_image(2);
        let mut x = img.clone();
        flip_horizontal(&mut x);
        assert_ne!(x, img);
        flip_horizontal(&mut x);
        assert_eq!(x, img);
    }

    #[test]
    fn full_crop_is_identity() {
        let img = random_image(4);
        let out = crop_scale_jitter(&img, 32, 32, &mut RngStream::new(1));
        assert_eq!(out, img);
    }

    #[test]
    fn ramp_matches_bilinear() {
        // Ramp along rows and columns with distinct slopes per channel.
        let mut img = vec![0.0f32; IMAGE_LEN];
        for c in 0..3 {
            for r in 0..SIDE {
                for k in 0..SIDE {
                    img[c * 1024 + r * 32 + k] = 0.1 + 0.01 * (c + 1) as f32 * r as f32 + 0.015 * k as f32;
                }
            }
        }
        for (s, x, y) in [(24, 3, 5), (27, 0, 5), (30, 2, 0)] {
            let out = crop_resize(&img, s, x, y);
            for c in 0..3 {
                for r in 0..SIDE {
                    for k in 0..SIDE {
                        let sr = x as f64 + r as f64 * (s - 1) as f64 / 31.0;
                        let sk = y as f64 + k as f64 * (s - 1) as f64 / 31.0;
                        let (r0, k0) = (sr.floor() as usize, sk.floor() as usize);
                        let (r1, k1) = ((r0 + 1).min(31), (k0 + 1).min(31));
                        let (tr, tk) = (sr - r0 as f64, sk - k0 as f64);
                        let at = |a: usize, b: usize| img[c * 1024 + a * 32 + b] as f64;
                        let bil = (1.0 - tr) * ((1.0 - tk) * at(r0, k0) + tk * at(r0, k1))
                            + tr * ((1.0 - tk) * at(r1, k0) + tk * at(r1, k1));
                        let got = out[c * 1024 + r * 32 + k] as f64;
                        assert!((got - bil).abs() < 1e-4, "s={s} ({c},{r},{k}) {got} vs {bil}");
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn hsv_round_trip(r in 0.0f64..1.0, g in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (h, s, v) = rgb_to_hsv(r, g, b);
            prop_assume!(s > 0.01);
            let (r2, g2, b2) = hsv_to_rgb(h, s, v);
            prop_assert!((r - r2).abs() < 1e-6 && (g - g2).abs() < 1e-6 && (b - b2).abs() < 1e-6);
        }

        #[test]
        fn augmentation_keeps_shape_and_range(seed in any::<u64>()) {
            let img = random_image(seed);
            let cfg = AugmentConfig::with_hsv(0.06, 0.26, 0.20, 0.21, 0.13);
            let out = augment_image(&img, &cfg, &mut RngStream::new(seed ^ 7));
            prop_assert_eq!(out.len(), IMAGE_LEN);
            prop_assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}

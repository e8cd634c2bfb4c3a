//! Synthetic ten-class archive in the CIFAR-10 binary layout, for machines without the
//! real dataset.
//!
//! Every class is a left-right symmetric motif (so mirroring keeps the label) drawn at
//! a random position, size and colour over a smooth textured background, sometimes
//! with a faint motif of another class as a distractor. Most motifs take a colour near
//! their class's hue, a weak cue any model can use; the shape itself moves around a
//! lot, which rewards translation-equivariant models.

use super::cifar::{write_batch, TEST_FILE, TRAIN_FILES};
use super::{IMAGE_LEN, SIDE};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use rand::Rng;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub seed: u64,
    pub records_per_train_file: usize,
    pub test_records: usize,
    /// Per-pixel Gaussian noise level.
    pub noise: f64,
    /// Probability of drawing a second, fainter motif.
    pub distractor_prob: f64,
    /// Probability that a motif ignores its class colour.
    pub atypical_color_prob: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            records_per_train_file: 1200,
            test_records: 1000,
            noise: 0.06,
            distractor_prob: 0.5,
            atypical_color_prob: 0.4,
        }
    }
}

/// Coverage of motif `class` at local coordinates `(u, v)` in `[-1, 1]^2`, where `u`
/// runs down and `v` across.
fn motif(class: usize, u: f64, v: f64) -> bool {
    let r = (u * u + v * v).sqrt();
    let inside = u.abs() <= 1.0 && v.abs() <= 1.0;
    inside
        && match class {
            0 => (u * 2.5 * PI).cos() > 0.2,
            1 => (v * 2.5 * PI).cos() > 0.2,
            2 => ((u + 1.0) * 1.5).floor() as i64 % 2 == ((v + 1.0) * 1.5).floor() as i64 % 2,
            3 => (0.55..0.95).contains(&r),
            4 => u.abs() < 0.28 || v.abs() < 0.28,
            5 => (u.abs() - v.abs()).abs() < 0.25,
            6 => r < 0.6,
            7 => u.abs().max(v.abs()) > 0.68,
            8 => v.abs() <= (u + 1.0) * 0.5 && u < 0.9,
            _ => u.abs() + v.abs() < 0.9,
        }
}

struct Canvas {
    px: Vec<f64>,
}

impl Canvas {
    fn background(rng: &mut RngStream) -> Self {
        let base: [f64; 3] = [rng.gen(), rng.gen(), rng.gen()];
        let mut px = vec![0.0; IMAGE_LEN];
        let waves: Vec<(f64, f64, f64, [f64; 3])> = (0..3)
            .map(|_| {
                let fx = rng.gen_range(0.5..3.0);
                let fy = rng.gen_range(0.5..3.0);
                let ph = rng.gen_range(0.0..2.0 * PI);
                let amp = [
                    rng.gen_range(-0.2..0.2),
                    rng.gen_range(-0.2..0.2),
                    rng.gen_range(-0.2..0.2),
                ];
                (fx, fy, ph, amp)
            })
            .collect();
        for c in 0..3 {
            for y in 0..SIDE {
                for x in 0..SIDE {
                    let mut v = base[c] * 0.7 + 0.15;
                    for (fx, fy, ph, amp) in &waves {
                        let t = 2.0 * PI * (fx * x as f64 + fy * y as f64) / SIDE as f64 + ph;
                        v += amp[c] * t.sin();
                    }
                    px[c * SIDE * SIDE + y * SIDE + x] = v;
                }
            }
        }
        Self { px }
    }

    /// Paint `class` centred at `(cy, cx)` with half-size `half`, blended by `alpha`.
    fn draw(&mut self, class: usize, cy: f64, cx: f64, half: f64, alpha: f64, color: [f64; 3]) {
        for y in 0..SIDE {
            for x in 0..SIDE {
                // 2x2 supersampling for soft edges.
                let mut cover = 0.0;
                for (dy, dx) in [(0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)] {
                    let u = (y as f64 + dy - cy) / half;
                    let v = (x as f64 + dx - cx) / half;
                    if motif(class, u, v) {
                        cover += 0.25;
                    }
                }
                if cover == 0.0 {
                    continue;
                }
                let a = alpha * cover;
                for (c, &col) in color.iter().enumerate() {
                    let p = &mut self.px[c * SIDE * SIDE + y * SIDE + x];
                    *p = (1.0 - a) * *p + a * col;
                }
            }
        }
    }

    fn into_bytes(self, noise: f64, rng: &mut RngStream) -> Vec<u8> {
        self.px
            .into_iter()
            .map(|v| {
                // Sum of uniforms as a cheap bell-shaped noise.
                let n: f64 = (0..4).map(|_| rng.gen::<f64>() - 0.5).sum::<f64>() * noise * 1.7;
                ((v + n).clamp(0.0, 1.0) * 255.0).round() as u8
            })
            .collect()
    }
}

fn hsv(h: f64, s: f64, v: f64) -> [f64; 3] {
    let (r, g, b) = super::augment::hsv_to_rgb(h.rem_euclid(1.0), s, v);
    [r, g, b]
}

fn contrasts(c: [f64; 3], under: [f64; 3]) -> bool {
    c.iter().zip(&under).map(|(a, b)| (a - b).abs()).sum::<f64>() > 0.6
}

/// Motif colour: usually near the class's own hue, so colour alone is a weak cue the
/// way scene colour is in natural images, sometimes anything that stands out.
fn motif_color(class: usize, cfg: &SynthConfig, under: [f64; 3], rng: &mut RngStream) -> [f64; 3] {
    let typical = rng.gen::<f64>() >= cfg.atypical_color_prob;
    for _ in 0..32 {
        let c = if typical {
            let h = class as f64 / 10.0 + rng.gen_range(-0.07..0.07);
            hsv(h, rng.gen_range(0.55..1.0), rng.gen_range(0.55..1.0))
        } else {
            [rng.gen(), rng.gen(), rng.gen()]
        };
        if contrasts(c, under) {
            return c;
        }
    }
    // Dark or light grey, whichever is further from the background.
    let lum = under.iter().sum::<f64>() / 3.0;
    if lum > 0.5 {
        [0.05; 3]
    } else {
        [0.95; 3]
    }
}

/// One image of `class`.
pub fn render(class: usize, cfg: &SynthConfig, rng: &mut RngStream) -> Vec<u8> {
    let mut canvas = Canvas::background(rng);
    let half = rng.gen_range(5.0..10.0);
    let margin = half * 0.8;
    let cy = rng.gen_range(margin..SIDE as f64 - margin);
    let cx = rng.gen_range(margin..SIDE as f64 - margin);
    let idx = |y: f64, x: f64| (y.clamp(0.0, 31.0) as usize) * SIDE + x.clamp(0.0, 31.0) as usize;
    let p = idx(cy, cx);
    let under = [canvas.px[p], canvas.px[SIDE * SIDE + p], canvas.px[2 * SIDE * SIDE + p]];
    if rng.gen::<f64>() < cfg.distractor_prob {
        let other = (class + rng.gen_range(1..10)) % 10;
        let dh = rng.gen_range(3.0..6.0);
        let dy = rng.gen_range(dh..SIDE as f64 - dh);
        let dx = rng.gen_range(dh..SIDE as f64 - dh);
        let col: [f64; 3] = [rng.gen(), rng.gen(), rng.gen()];
        canvas.draw(other, dy, dx, dh, 0.35, col);
    }
    let color = motif_color(class, cfg, under, rng);
    let alpha = rng.gen_range(0.65..1.0);
    canvas.draw(class, cy, cx, half, alpha, color);
    canvas.into_bytes(cfg.noise, rng)
}

fn write_file(path: &Path, n: usize, cfg: &SynthConfig, rng: &RngStream) -> Result<()> {
    let mut labels = Vec::with_capacity(n);
    let mut pixels = Vec::with_capacity(n * IMAGE_LEN);
    let mut order = rng.named("labels");
    for i in 0..n {
        let class = order.gen_range(0..10);
        labels.push(class as u8);
        pixels.extend(render(class, cfg, &mut rng.split(i as u64)));
    }
    write_batch(path, &labels, &pixels)
}

/// Write `data_batch_{1..5}.bin` and `test_batch.bin` under `dir`.
pub fn write_synthetic_cifar(dir: &Path, cfg: &SynthConfig) -> Result<()> {
    if cfg.records_per_train_file == 0 || cfg.test_records == 0 {
        return Err(Error::invalid("synthetic archive needs records in every file"));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let root = RngStream::new(cfg.seed).named("synthetic-cifar");
    for (f, name) in TRAIN_FILES.iter().enumerate() {
        write_file(&dir.join(name), cfg.records_per_train_file, cfg, &root.split(f as u64))?;
    }
    write_file(&dir.join(TEST_FILE), cfg.test_records, cfg, &root.split(99))
}

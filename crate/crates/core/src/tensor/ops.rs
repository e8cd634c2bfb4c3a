//! Forward and backward kernels.
//!
//! Every kernel is a free function over tensors so it can be checked in isolation
//! against finite differences; the layer types in `model` wrap these and keep the
//! caches the backward pass needs.

use super::{gemm, Float, Tensor};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

/// Unfold one `(c, h, w)` image into a `(c*k*k, h*w)` patch matrix, zero padded so the
/// output keeps the input's spatial size.
pub(crate) fn im2col<T: Float>(img: &[T], c: usize, h: usize, w: usize, k: usize, cols: &mut [T]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ch in 0..c {
        let plane = &img[ch * hw..(ch + 1) * hw];
        for ki in 0..k {
            for kj in 0..k {
                let row = ((ch * k + ki) * k + kj) * hw;
                let dst = &mut cols[row..row + hw];
                let shift = kj as isize - pad;
                let lo = (-shift).max(0) as usize;
                let hi = (w as isize - shift).min(w as isize) as usize;
                for oh in 0..h {
                    let ih = oh as isize + ki as isize - pad;
                    let drow = &mut dst[oh * w..(oh + 1) * w];
                    if ih < 0 || ih >= h as isize {
                        drow.fill(T::zero());
                        continue;
                    }
                    let srow = &plane[ih as usize * w..(ih as usize + 1) * w];
                    drow[..lo].fill(T::zero());
                    drow[hi..].fill(T::zero());
                    let s0 = (lo as isize + shift) as usize;
                    let s1 = (hi as isize + shift) as usize;
                    drow[lo..hi].copy_from_slice(&srow[s0..s1]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add a patch matrix back into an image gradient.
pub(crate) fn col2im<T: Float>(cols: &[T], c: usize, h: usize, w: usize, k: usize, img: &mut [T]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ch in 0..c {
        let plane = &mut img[ch * hw..(ch + 1) * hw];
        for ki in 0..k {
            for kj in 0..k {
                let row = ((ch * k + ki) * k + kj) * hw;
                let src = &cols[row..row + hw];
                let shift = kj as isize - pad;
                let lo = (-shift).max(0) as usize;
                let hi = (w as isize - shift).min(w as isize) as usize;
                for oh in 0..h {
                    let ih = oh as isize + ki as isize - pad;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    let srow = &src[oh * w..(oh + 1) * w];
                    let drow = &mut plane[ih as usize * w..(ih as usize + 1) * w];
                    let d0 = (lo as isize + shift) as usize;
                    for (d, &s) in drow[d0..].iter_mut().zip(&srow[lo..hi]) {
                        *d += s;
                    }
                }
            }
        }
    }
}

pub(crate) struct ConvDims {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub f: usize,
    pub k: usize,
}

pub(crate) fn conv_dims<T: Float>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<ConvDims> {
    let (n, c, h, w) = input.dims4()?;
    let (f, wc, kh, kw) = weight.dims4().map_err(|_| {
        Error::shape(format!(
            "conv weights must be (filters, channels, k, k), got {:?}",
            weight.shape()
        ))
    })?;
    if kh != kw || kh % 2 == 0 {
        return Err(Error::shape(format!(
            "conv kernel must be square and odd, got {kh}x{kw}"
        )));
    }
    if wc != c {
        return Err(Error::shape(format!(
            "conv input has {c} channels but weights expect {wc}"
        )));
    }
    if bias.shape() != [f] {
        return Err(Error::shape(format!(
            "conv bias must have shape [{f}], got {:?}",
            bias.shape()
        )));
    }
    Ok(ConvDims { n, c, h, w, f, k: kh })
}

/// Same-padded, stride-1 convolution followed by the optional activation. When
/// `cols_cache` is given the unfolded patches of every image are stored there for
/// the backward pass.
pub(crate) fn conv2d_apply<T: Float>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    act: Activation,
    cols_cache: Option<&mut Vec<T>>,
) -> Result<Tensor<T>> {
    let d = conv_dims(input, weight, bias)?;
    let hw = d.h * d.w;
    let ckk = d.c * d.k * d.k;
    let mut out = Tensor::zeros(&[d.n, d.f, d.h, d.w]);
    let cached = cols_cache.is_some();
    let mut local = Vec::new();
    let cols_all: &mut Vec<T> = match cols_cache {
        Some(c) => {
            c.resize(d.n * ckk * hw, T::zero());
            c
        }
        None => {
            local.resize(ckk * hw, T::zero());
            &mut local
        }
    };
    let img_len = d.c * hw;
    for i in 0..d.n {
        let cols = if cached {
            &mut cols_all[i * ckk * hw..(i + 1) * ckk * hw]
        } else {
            &mut cols_all[..]
        };
        im2col(&input.data()[i * img_len..(i + 1) * img_len], d.c, d.h, d.w, d.k, cols);
        let o = &mut out.data_mut()[i * d.f * hw..(i + 1) * d.f * hw];
        for (fi, row) in o.chunks_mut(hw).enumerate() {
            row.fill(bias.data()[fi]);
        }
        gemm(false, false, d.f, hw, ckk, T::one(), weight.data(), cols, T::one(), o);
    }
    if act == Activation::Relu {
        relu_inplace(out.data_mut());
    }
    Ok(out)
}

/// Same-padded, stride-1 convolution. Output has the input's spatial size.
pub fn conv2d_forward<T: Float>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    conv2d_apply(input, weight, bias, Activation::Linear, None)
}

pub struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Gradients of a linear (pre-activation) convolution given the upstream gradient.
pub fn conv2d_backward<T: Float>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    need_input_grad: bool,
) -> Result<ConvGrads<T>> {
    let bias = Tensor::zeros(&[weight.shape()[0]]);
    let d = conv_dims(input, weight, &bias)?;
    let mut cols = Vec::new();
    let hw = d.h * d.w;
    let ckk = d.c * d.k * d.k;
    cols.resize(d.n * ckk * hw, T::zero());
    let img_len = d.c * hw;
    for i in 0..d.n {
        im2col(
            &input.data()[i * img_len..(i + 1) * img_len],
            d.c,
            d.h,
            d.w,
            d.k,
            &mut cols[i * ckk * hw..(i + 1) * ckk * hw],
        );
    }
    conv2d_backward_cached(&d, weight, grad_out, &cols, need_input_grad)
}

pub(crate) fn conv2d_backward_cached<T: Float>(
    d: &ConvDims,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    cols: &[T],
    need_input_grad: bool,
) -> Result<ConvGrads<T>> {
    if grad_out.shape() != [d.n, d.f, d.h, d.w] {
        return Err(Error::shape(format!(
            "conv upstream gradient has shape {:?}, expected {:?}",
            grad_out.shape(),
            [d.n, d.f, d.h, d.w]
        )));
    }
    let hw = d.h * d.w;
    let ckk = d.c * d.k * d.k;
    let mut gw = Tensor::zeros(weight.shape());
    let mut gb = Tensor::zeros(&[d.f]);
    let mut gx = if need_input_grad {
        Some(Tensor::zeros(&[d.n, d.c, d.h, d.w]))
    } else {
        None
    };
    let mut dcols = if need_input_grad {
        vec![T::zero(); ckk * hw]
    } else {
        Vec::new()
    };
    for i in 0..d.n {
        let g = &grad_out.data()[i * d.f * hw..(i + 1) * d.f * hw];
        let c = &cols[i * ckk * hw..(i + 1) * ckk * hw];
        gemm(false, true, d.f, ckk, hw, T::one(), g, c, T::one(), gw.data_mut());
        for (fi, row) in g.chunks(hw).enumerate() {
            gb.data_mut()[fi] += row.iter().copied().sum::<T>();
        }
        if let Some(gx) = gx.as_mut() {
            gemm(
                true,
                false,
                ckk,
                hw,
                d.f,
                T::one(),
                weight.data(),
                g,
                T::zero(),
                &mut dcols,
            );
            let img_len = d.c * hw;
            col2im(
                &dcols,
                d.c,
                d.h,
                d.w,
                d.k,
                &mut gx.data_mut()[i * img_len..(i + 1) * img_len],
            );
        }
    }
    Ok(ConvGrads {
        input: gx,
        weight: gw,
        bias: gb,
    })
}

/// Non-overlapping max pooling with `stride == window`; a remainder that does not
/// fill a whole window is dropped. Returns the pooled tensor and, per output element,
/// the flat input index that supplied the maximum.
pub fn maxpool2d_forward<T: Float>(input: &Tensor<T>, window: usize) -> Result<(Tensor<T>, Vec<usize>)> {
    let (n, c, h, w) = input.dims4()?;
    if window == 0 || window > h || window > w {
        return Err(Error::shape(format!("pool window {window} does not fit a {h}x{w} map")));
    }
    let (oh, ow) = (h / window, w / window);
    let mut out = Tensor::zeros(&[n, c, oh, ow]);
    let mut arg = vec![0usize; n * c * oh * ow];
    let x = input.data();
    let o = out.data_mut();
    for plane in 0..n * c {
        let base = plane * h * w;
        for i in 0..oh {
            for j in 0..ow {
                let mut best = base + (i * window) * w + j * window;
                let mut bv = x[best];
                for di in 0..window {
                    let r = base + (i * window + di) * w + j * window;
                    for (dj, &v) in x[r..r + window].iter().enumerate() {
                        if v > bv {
                            bv = v;
                            best = r + dj;
                        }
                    }
                }
                let oi = plane * oh * ow + i * ow + j;
                o[oi] = bv;
                arg[oi] = best;
            }
        }
    }
    Ok((out, arg))
}

/// Route each upstream gradient element to the input location that won the max.
pub fn maxpool2d_backward<T: Float>(
    grad_out: &Tensor<T>,
    argmax: &[usize],
    input_shape: &[usize],
) -> Result<Tensor<T>> {
    if grad_out.len() != argmax.len() {
        return Err(Error::shape("pool gradient does not match cached argmax"));
    }
    let mut gx = Tensor::zeros(input_shape);
    let d = gx.data_mut();
    for (&g, &i) in grad_out.data().iter().zip(argmax) {
        d[i] += g;
    }
    Ok(gx)
}

pub(crate) fn relu_inplace<T: Float>(v: &mut [T]) {
    for x in v {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
}

/// `act(x . W + b)` with `x` flattened to `(batch, features)` and `W` shaped
/// `(in, out)`.
pub fn affine_forward<T: Float>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    act: Activation,
) -> Result<Tensor<T>> {
    let (b, fin) = input.dims2();
    let (wi, wo) = match weight.shape() {
        [i, o] => (*i, *o),
        s => return Err(Error::shape(format!("affine weights must be 2-D, got {s:?}"))),
    };
    if wi != fin {
        return Err(Error::shape(format!(
            "affine layer expects {wi} input features, got {fin}"
        )));
    }
    if bias.shape() != [wo] {
        return Err(Error::shape(format!(
            "affine bias must have shape [{wo}], got {:?}",
            bias.shape()
        )));
    }
    let mut out = Tensor::zeros(&[b, wo]);
    for row in out.data_mut().chunks_mut(wo) {
        row.copy_from_slice(bias.data());
    }
    gemm(
        false,
        false,
        b,
        wo,
        fin,
        T::one(),
        input.data(),
        weight.data(),
        T::one(),
        out.data_mut(),
    );
    if act == Activation::Relu {
        relu_inplace(out.data_mut());
    }
    Ok(out)
}

pub struct AffineGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Backward pass of [`affine_forward`]; `output` is the post-activation result of
/// the forward call and supplies the ReLU mask. The input gradient keeps the
/// original (possibly image-shaped) input shape.
pub fn affine_backward<T: Float>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    output: &Tensor<T>,
    grad_out: &Tensor<T>,
    act: Activation,
    need_input_grad: bool,
) -> Result<AffineGrads<T>> {
    if grad_out.shape() != output.shape() {
        return Err(Error::shape(format!(
            "affine upstream gradient {:?} does not match output {:?}",
            grad_out.shape(),
            output.shape()
        )));
    }
    let (b, fin) = input.dims2();
    let fout = weight.shape()[1];
    let masked;
    let g = match act {
        Activation::Linear => grad_out,
        Activation::Relu => {
            let mut m = grad_out.clone();
            for (gv, &ov) in m.data_mut().iter_mut().zip(output.data()) {
                if ov <= T::zero() {
                    *gv = T::zero();
                }
            }
            masked = m;
            &masked
        }
    };
    let mut gw = Tensor::zeros(weight.shape());
    gemm(
        true,
        false,
        fin,
        fout,
        b,
        T::one(),
        input.data(),
        g.data(),
        T::zero(),
        gw.data_mut(),
    );
    let mut gb = Tensor::zeros(&[fout]);
    for row in g.data().chunks(fout) {
        for (acc, &v) in gb.data_mut().iter_mut().zip(row) {
            *acc += v;
        }
    }
    let gx = if need_input_grad {
        let mut gx = Tensor::zeros(input.shape());
        gemm(
            false,
            true,
            b,
            fin,
            fout,
            T::one(),
            g.data(),
            weight.data(),
            T::zero(),
            gx.data_mut(),
        );
        Some(gx)
    } else {
        None
    };
    Ok(AffineGrads {
        input: gx,
        weight: gw,
        bias: gb,
    })
}

/// Inverted dropout. In training mode each element is zeroed with probability
/// `rate` and survivors are scaled by `1/(1-rate)`; the returned mask holds the
/// per-element multiplier for the backward pass. Evaluation mode is the identity.
pub fn dropout_forward<T: Float>(
    input: &Tensor<T>,
    rate: f64,
    rng: &mut RngStream,
    training: bool,
) -> Result<(Tensor<T>, Option<Vec<T>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("dropout rate must lie in [0, 1), got {rate}")));
    }
    if !training || rate == 0.0 {
        return Ok((input.clone(), None));
    }
    let keep = T::from_f64_lossy(1.0 / (1.0 - rate));
    let mask: Vec<T> = (0..input.len())
        .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
        .collect();
    let mut out = input.clone();
    for (o, &m) in out.data_mut().iter_mut().zip(&mask) {
        *o *= m;
    }
    Ok((out, Some(mask)))
}

/// Mean softmax cross-entropy over the batch and its gradient w.r.t. the logits.
pub fn softmax_xent<T: Float>(logits: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>)> {
    let (b, k) = match logits.shape() {
        [b, k] => (*b, *k),
        s => return Err(Error::shape(format!("logits must be (batch, classes), got {s:?}"))),
    };
    if labels.len() != b {
        return Err(Error::shape(format!("{} labels for a batch of {b}", labels.len())));
    }
    let mut grad = Tensor::zeros(&[b, k]);
    let mut loss = 0.0f64;
    let inv_b = 1.0 / b as f64;
    for (i, &label) in labels.iter().enumerate() {
        if label >= k {
            return Err(Error::invalid(format!("label {label} outside [0, {k})")));
        }
        let row = logits.row(i);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
        let denom: f64 = row.iter().map(|v| (v.as_f64() - max).exp()).sum();
        let log_denom = denom.ln();
        loss += -(row[label].as_f64() - max - log_denom);
        let g = &mut grad.data_mut()[i * k..(i + 1) * k];
        for (j, gv) in g.iter_mut().enumerate() {
            let p = (row[j].as_f64() - max - log_denom).exp();
            let t = if j == label { 1.0 } else { 0.0 };
            *gv = T::from_f64_lossy((p - t) * inv_b);
        }
    }
    Ok((T::from_f64_lossy(loss * inv_b), grad))
}

/// Logit regression loss `(1/T) sum_t ||pred_t - target_t||^2` and its gradient
/// `(2/T)(pred - target)`.
pub fn l2_logit_loss<T: Float>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    if pred.shape() != target.shape() || pred.ndim() != 2 {
        return Err(Error::shape(format!(
            "prediction {:?} and target {:?} must be equal (batch, classes) shapes",
            pred.shape(),
            target.shape()
        )));
    }
    let b = pred.shape()[0] as f64;
    let mut grad = Tensor::zeros(pred.shape());
    let mut loss = 0.0f64;
    for ((g, &p), &t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let d = p.as_f64() - t.as_f64();
        loss += d * d;
        *g = T::from_f64_lossy(2.0 * d / b);
    }
    Ok((T::from_f64_lossy(loss / b), grad))
}

//! Central-difference gradient checks shared by the gradient and acceptance suites.
//!
//! Each check draws a random shape, runs the layer forward, backpropagates a random
//! projection `r` of the output (so the scalar is `sum(r * y)`), and compares every
//! analytic gradient entry with `(L(x + h) - L(x - h)) / 2h`. The error of one tensor
//! is `max |a - n| / max(max |a|, max |n|)`.

#![allow(dead_code)]

use mimic::arch::{build_model, parse, BuildOptions};
use mimic::tensor::ops::{l2_logit_loss, softmax_xent, Activation};
use mimic::tensor::{Conv2d, Dense, Dropout, Layer, MaxPool2d, ModelGraph, Tensor};
use mimic::RngStream;
use rand::Rng;

pub const STEP: f64 = 1e-5;
pub const SHAPES_PER_OP: usize = 24;

#[derive(Debug, Clone)]
pub struct OpReport {
    pub op: &'static str,
    pub shapes: usize,
    pub worst: f64,
    pub worst_shape: String,
}

impl OpReport {
    fn new(op: &'static str) -> Self {
        Self {
            op,
            shapes: 0,
            worst: 0.0,
            worst_shape: String::new(),
        }
    }

    fn record(&mut self, shape: String, err: f64) {
        self.shapes += 1;
        if err > self.worst || self.shapes == 1 {
            self.worst = err;
            self.worst_shape = shape;
        }
    }
}

pub fn tensor_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic.iter().chain(numeric).fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max)
        / scale
}

fn random(shape: &[usize], rng: &mut RngStream, lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi))
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Numeric gradient of `f` w.r.t. every entry of `v`, restoring `v` afterwards.
fn numeric<F: FnMut(&[f64]) -> f64>(v: &mut Vec<f64>, mut f: F) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len());
    for i in 0..v.len() {
        let orig = v[i];
        v[i] = orig + STEP;
        let up = f(v);
        v[i] = orig - STEP;
        let down = f(v);
        v[i] = orig;
        out.push((up - down) / (2.0 * STEP));
    }
    out
}

/// Check a layer's input and parameter gradients at `x`. `seed` fixes the dropout
/// mask so every forward pass sees the same one.
fn check_layer(mut layer: Layer<f64>, x: &Tensor<f64>, seed: u64, rng: &mut RngStream) -> f64 {
    let y = layer.forward(x, &mut RngStream::new(seed)).unwrap();
    let r = random(y.shape(), rng, -1.0, 1.0);
    let gx = layer.backward(&r, true).unwrap().unwrap();
    let n_params = layer.params().len();
    let analytic: Vec<Vec<f64>> = layer.params().iter().map(|p| p.grad.data().to_vec()).collect();
    let values: Vec<Tensor<f64>> = layer.params().iter().map(|p| p.value.clone()).collect();

    let mut worst = {
        let mut xv = x.data().to_vec();
        let shape = x.shape().to_vec();
        let mut probe = rebuild(&layer, &values);
        let num = numeric(&mut xv, |v| {
            let xt = Tensor::new(shape.clone(), v.to_vec()).unwrap();
            dot(&probe.forward(&xt, &mut RngStream::new(seed)).unwrap(), &r)
        });
        tensor_error(gx.data(), &num)
    };
    for k in 0..n_params {
        let mut pv = values[k].data().to_vec();
        let mut probe = rebuild(&layer, &values);
        let num = numeric(&mut pv, |v| {
            probe.params_mut()[k].value.data_mut().copy_from_slice(v);
            dot(&probe.forward(x, &mut RngStream::new(seed)).unwrap(), &r)
        });
        worst = worst.max(tensor_error(&analytic[k], &num));
    }
    worst
}

fn rebuild(layer: &Layer<f64>, values: &[Tensor<f64>]) -> Layer<f64> {
    let mut l = layer.cast::<f64>();
    for (p, v) in l.params_mut().into_iter().zip(values) {
        p.value = v.clone();
    }
    l
}

/// Redraw until no pre-activation lies within `margin` of the ReLU kink, so the
/// finite difference never straddles it.
fn clear_of_kink(pre: &Tensor<f64>, margin: f64) -> bool {
    pre.data().iter().all(|v| v.abs() > margin)
}

pub fn check_conv(act: Activation, rng: &mut RngStream) -> OpReport {
    let mut rep = OpReport::new(if act == Activation::Relu {
        "conv2d+relu"
    } else {
        "conv2d"
    });
    while rep.shapes < SHAPES_PER_OP {
        let n = rng.gen_range(1..=3);
        let c = rng.gen_range(1..=4);
        let h = rng.gen_range(3..=8);
        let w = rng.gen_range(3..=8);
        let f = rng.gen_range(1..=5);
        let k = [1, 3, 5][rng.gen_range(0..3)];
        let x = random(&[n, c, h, w], rng, -1.0, 1.0);
        let wt = random(&[f, c, k, k], rng, -0.5, 0.5);
        let b = random(&[f], rng, -0.3, 0.3);
        let layer = Layer::Conv(Conv2d::new(wt.clone(), b.clone(), act));
        if act == Activation::Relu {
            let pre = Layer::Conv(Conv2d::new(wt, b, Activation::Linear)).infer(&x).unwrap();
            if !clear_of_kink(&pre, 1e-3) {
                continue;
            }
        }
        let err = check_layer(layer, &x, 0, rng);
        rep.record(format!("x {n}x{c}x{h}x{w}, w {f}x{c}x{k}x{k}"), err);
    }
    rep
}

pub fn check_dense(act: Activation, rng: &mut RngStream) -> OpReport {
    let mut rep = OpReport::new(if act == Activation::Relu { "dense+relu" } else { "dense" });
    while rep.shapes < SHAPES_PER_OP {
        let n = rng.gen_range(1..=6);
        // Image-shaped input half the time, to cover the implicit flatten.
        let shape = if rng.gen_bool(0.5) {
            vec![n, rng.gen_range(1..=3), rng.gen_range(1..=4), rng.gen_range(1..=4)]
        } else {
            vec![n, rng.gen_range(1..=20)]
        };
        let fin: usize = shape[1..].iter().product();
        let fout = rng.gen_range(1..=12);
        let x = random(&shape, rng, -1.0, 1.0);
        let wt = random(&[fin, fout], rng, -0.5, 0.5);
        let b = random(&[fout], rng, -0.3, 0.3);
        if act == Activation::Relu {
            let pre = Layer::Dense(Dense::new(wt.clone(), b.clone(), Activation::Linear))
                .infer(&x)
                .unwrap();
            if !clear_of_kink(&pre, 1e-3) {
                continue;
            }
        }
        let err = check_layer(Layer::Dense(Dense::new(wt, b, act)), &x, 0, rng);
        rep.record(format!("x {shape:?}, w {fin}x{fout}"), err);
    }
    rep
}

pub fn check_maxpool(rng: &mut RngStream) -> OpReport {
    let mut rep = OpReport::new("maxpool2d");
    while rep.shapes < SHAPES_PER_OP {
        let window = rng.gen_range(1..=3);
        let n = rng.gen_range(1..=2);
        let c = rng.gen_range(1..=3);
        let h = rng.gen_range(window..=8);
        let w = rng.gen_range(window..=8);
        // Distinct values 1e-2 apart keep every window's winner stable under the step.
        let len = n * c * h * w;
        let mut order: Vec<usize> = (0..len).collect();
        for i in (1..len).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        let x = Tensor::new(vec![n, c, h, w], order.iter().map(|&k| k as f64 * 1e-2 - 0.5).collect()).unwrap();
        let err = check_layer(Layer::Pool(MaxPool2d::new(window)), &x, 0, rng);
        rep.record(format!("x {n}x{c}x{h}x{w}, window {window}"), err);
    }
    rep
}

pub fn check_dropout(rng: &mut RngStream) -> OpReport {
    let mut rep = OpReport::new("dropout");
    while rep.shapes < SHAPES_PER_OP {
        let rate = rng.gen_range(0.05..0.8);
        let shape = vec![rng.gen_range(1..=4), rng.gen_range(1..=40)];
        let x = random(&shape, rng, -1.0, 1.0);
        let seed = rng.gen();
        let err = check_layer(Layer::Dropout(Dropout::new(rate).unwrap()), &x, seed, rng);
        rep.record(format!("x {shape:?}, rate {rate:.2}"), err);
    }
    rep
}

pub fn check_softmax_xent(rng: &mut RngStream) -> OpReport {
    let mut rep = OpReport::new("softmax_xent");
    while rep.shapes < SHAPES_PER_OP {
        let b = rng.gen_range(1..=8);
        let k = rng.gen_range(2..=12);
        let z = random(&[b, k], rng, -4.0, 4.0);
        let labels: Vec<usize> = (0..b).map(|_| rng.gen_range(0..k)).collect();
        let (_, g) = softmax_xent(&z, &labels).unwrap();
        let mut zv = z.data().to_vec();
        let num = numeric(&mut zv, |v| {
            softmax_xent(&Tensor::new(vec![b, k], v.to_vec()).unwrap(), &labels)
                .unwrap()
                .0
        });
        rep.record(format!("logits {b}x{k}"), tensor_error(g.data(), &num));
    }
    rep
}

pub fn check_l2_logit(rng: &mut RngStream) -> OpReport {
    let mut rep = OpReport::new("l2_logit_loss");
    while rep.shapes < SHAPES_PER_OP {
        let b = rng.gen_range(1..=8);
        let k = rng.gen_range(1..=12);
        let p = random(&[b, k], rng, -5.0, 5.0);
        let t = random(&[b, k], rng, -5.0, 5.0);
        let (_, g) = l2_logit_loss(&p, &t).unwrap();
        let mut pv = p.data().to_vec();
        let num = numeric(&mut pv, |v| {
            l2_logit_loss(&Tensor::new(vec![b, k], v.to_vec()).unwrap(), &t)
                .unwrap()
                .0
        });
        rep.record(format!("pred {b}x{k}"), tensor_error(g.data(), &num));
    }
    rep
}

/// Whole models built from architecture strings, checked on a sample of entries
/// per parameter tensor through the softmax loss.
pub fn check_models(rng: &mut RngStream) -> OpReport {
    const ARCHS: [&str; 6] = [
        "3c-mp-10fc",
        "2c-mp-3c-mp-6fc",
        "4lfc-8fc",
        "12fc",
        "2c^2-mp-5lfc-6fc",
        "5fc-4fc",
    ];
    const SAMPLES: usize = 12;
    let mut rep = OpReport::new("model");
    let mut attempt = 0u64;
    while rep.shapes < SHAPES_PER_OP {
        attempt += 1;
        let arch = ARCHS[rep.shapes % ARCHS.len()];
        let spec = parse(arch).unwrap();
        let mut model: ModelGraph<f64> =
            build_model(&spec, &BuildOptions::default(), &mut RngStream::new(attempt)).unwrap();
        model.set_training(true);
        let b = rng.gen_range(1..=3);
        let x = random(&[b, 3, 32, 32], rng, -1.0, 1.0);
        let labels: Vec<usize> = (0..b).map(|_| rng.gen_range(0..10)).collect();
        if !model_clear_of_kinks(&model, &x) {
            continue;
        }
        let loss = |m: &mut ModelGraph<f64>| {
            let z = m.forward(&x, &mut RngStream::new(0)).unwrap();
            softmax_xent(&z, &labels).unwrap()
        };
        let (_, g) = loss(&mut model);
        model.zero_grad();
        model.backward(&g).unwrap();
        let grads: Vec<Vec<f64>> = model.params().iter().map(|p| p.grad.data().to_vec()).collect();
        let mut worst = 0.0f64;
        for (k, analytic) in grads.iter().enumerate() {
            let picks: Vec<usize> = (0..SAMPLES).map(|_| rng.gen_range(0..analytic.len())).collect();
            let mut a = Vec::new();
            let mut n = Vec::new();
            for &i in &picks {
                let orig = model.params()[k].value.data()[i];
                model.params_mut()[k].value.data_mut()[i] = orig + STEP;
                let up = loss(&mut model).0;
                model.params_mut()[k].value.data_mut()[i] = orig - STEP;
                let down = loss(&mut model).0;
                model.params_mut()[k].value.data_mut()[i] = orig;
                a.push(analytic[i]);
                n.push((up - down) / (2.0 * STEP));
            }
            // Sampled entries can all be tiny; scale by the whole tensor's gradient.
            let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let diff = a.iter().zip(&n).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            if scale > 0.0 {
                worst = worst.max(diff / scale);
            }
        }
        rep.record(format!("{arch}, batch {b}"), worst);
    }
    rep
}

/// True when no ReLU input or pooling tie sits close enough to flip under the step.
fn model_clear_of_kinks(model: &ModelGraph<f64>, x: &Tensor<f64>) -> bool {
    let mut h = x.clone();
    for layer in &model.layers {
        match layer {
            Layer::Conv(c) if c.activation == Activation::Relu => {
                let pre = Layer::Conv(Conv2d::new(
                    c.weight.value.clone(),
                    c.bias.value.clone(),
                    Activation::Linear,
                ))
                .infer(&h)
                .unwrap();
                if !clear_of_kink(&pre, 1e-3) {
                    return false;
                }
            }
            Layer::Dense(d) if d.activation == Activation::Relu => {
                let pre = Layer::Dense(Dense::new(
                    d.weight.value.clone(),
                    d.bias.value.clone(),
                    Activation::Linear,
                ))
                .infer(&h)
                .unwrap();
                if !clear_of_kink(&pre, 1e-3) {
                    return false;
                }
            }
            Layer::Pool(p) => {
                let (n, c, hh, ww) = h.dims4().unwrap();
                let win = p.window;
                for plane in 0..n * c {
                    for i in 0..hh / win {
                        for j in 0..ww / win {
                            let mut v: Vec<f64> = (0..win * win)
                                .map(|q| h.data()[plane * hh * ww + (i * win + q / win) * ww + j * win + q % win])
                                .collect();
                            v.sort_by(|a, b| b.total_cmp(a));
                            if v.len() > 1 && v[0] - v[1] < 1e-3 && v[0] > 0.0 {
                                return false;
                            }
                        }
                    }
                }
            }
            _ => {}
        }
        h = layer.infer(&h).unwrap();
    }
    true
}

pub fn all_ops(seed: u64) -> Vec<OpReport> {
    let root = RngStream::new(seed);
    vec![
        check_conv(Activation::Linear, &mut root.named("conv")),
        check_conv(Activation::Relu, &mut root.named("conv-relu")),
        check_dense(Activation::Linear, &mut root.named("dense")),
        check_dense(Activation::Relu, &mut root.named("dense-relu")),
        check_maxpool(&mut root.named("pool")),
        check_dropout(&mut root.named("dropout")),
        check_softmax_xent(&mut root.named("xent")),
        check_l2_logit(&mut root.named("l2")),
        check_models(&mut root.named("model")),
    ]
}

use super::ops::{
    affine_backward, affine_forward, conv2d_apply, conv2d_backward_cached, conv_dims, dropout_forward,
    maxpool2d_backward, maxpool2d_forward, Activation, ConvDims,
};
use super::{Float, ParamRole, Parameter, Tensor};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Number of output classes every model produces.
pub const NUM_CLASSES: usize = 10;

struct ConvCache<T> {
    cols: Vec<T>,
    dims: ConvDims,
    output: Tensor<T>,
}

/// Same-padded stride-1 convolution with a fused activation.
pub struct Conv2d<T = f32> {
    pub weight: Parameter<T>,
    pub bias: Parameter<T>,
    pub activation: Activation,
    cache: Option<ConvCache<T>>,
}

impl<T: Float> Conv2d<T> {
    pub fn new(weight: Tensor<T>, bias: Tensor<T>, activation: Activation) -> Self {
        Self {
            weight: Parameter::new(weight, ParamRole::Weight),
            bias: Parameter::new(bias, ParamRole::Bias),
            activation,
            cache: None,
        }
    }

    pub fn filters(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.value.shape()[2]
    }
}

pub struct MaxPool2d {
    pub window: usize,
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool2d {
    pub fn new(window: usize) -> Self {
        Self { window, cache: None }
    }
}

/// Fully connected layer `act(x . W + b)`; flattens image-shaped input.
pub struct Dense<T = f32> {
    pub weight: Parameter<T>,
    pub bias: Parameter<T>,
    pub activation: Activation,
    cache: Option<(Tensor<T>, Tensor<T>)>,
}

impl<T: Float> Dense<T> {
    pub fn new(weight: Tensor<T>, bias: Tensor<T>, activation: Activation) -> Self {
        Self {
            weight: Parameter::new(weight, ParamRole::Weight),
            bias: Parameter::new(bias, ParamRole::Bias),
            activation,
            cache: None,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.value.shape()[1]
    }
}

pub struct Dropout<T = f32> {
    pub rate: f64,
    mask: Option<Vec<T>>,
}

impl<T: Float> Dropout<T> {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid(format!("dropout rate must lie in [0, 1), got {rate}")));
        }
        Ok(Self { rate, mask: None })
    }
}

pub enum Layer<T = f32> {
    Conv(Conv2d<T>),
    Pool(MaxPool2d),
    Dense(Dense<T>),
    Dropout(Dropout<T>),
}

impl<T: Float> Layer<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv(_) => "conv",
            Layer::Pool(_) => "maxpool",
            Layer::Dense(d) if d.activation == Activation::Linear => "linear",
            Layer::Dense(_) => "dense",
            Layer::Dropout(_) => "dropout",
        }
    }

    /// Evaluation-mode forward pass; touches no caches.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Conv(c) => conv2d_apply(x, &c.weight.value, &c.bias.value, c.activation, None),
            Layer::Pool(p) => Ok(maxpool2d_forward(x, p.window)?.0),
            Layer::Dense(d) => affine_forward(x, &d.weight.value, &d.bias.value, d.activation),
            Layer::Dropout(_) => Ok(x.clone()),
        }
    }

    /// Training-mode forward pass; stores what `backward` needs.
    pub fn forward(&mut self, x: &Tensor<T>, rng: &mut RngStream) -> Result<Tensor<T>> {
        match self {
            Layer::Conv(c) => {
                let dims = conv_dims(x, &c.weight.value, &c.bias.value)?;
                let mut cols = c.cache.take().map(|cc| cc.cols).unwrap_or_default();
                let out = conv2d_apply(x, &c.weight.value, &c.bias.value, c.activation, Some(&mut cols))?;
                c.cache = Some(ConvCache {
                    cols,
                    dims,
                    output: out.clone(),
                });
                Ok(out)
            }
            Layer::Pool(p) => {
                let (out, arg) = maxpool2d_forward(x, p.window)?;
                p.cache = Some((arg, x.shape().to_vec()));
                Ok(out)
            }
            Layer::Dense(d) => {
                let out = affine_forward(x, &d.weight.value, &d.bias.value, d.activation)?;
                d.cache = Some((x.clone(), out.clone()));
                Ok(out)
            }
            Layer::Dropout(dr) => {
                let (out, mask) = dropout_forward(x, dr.rate, rng, true)?;
                dr.mask = mask;
                Ok(out)
            }
        }
    }

    /// Accumulate parameter gradients and return the input gradient if requested.
    pub fn backward(&mut self, grad: &Tensor<T>, need_input_grad: bool) -> Result<Option<Tensor<T>>> {
        match self {
            Layer::Conv(c) => {
                let cache = c
                    .cache
                    .as_ref()
                    .ok_or_else(|| Error::invalid("conv backward called before forward"))?;
                let masked;
                let g = if c.activation == Activation::Relu {
                    let mut m = grad.clone();
                    for (gv, &ov) in m.data_mut().iter_mut().zip(cache.output.data()) {
                        if ov <= T::zero() {
                            *gv = T::zero();
                        }
                    }
                    masked = m;
                    &masked
                } else {
                    grad
                };
                let grads = conv2d_backward_cached(&cache.dims, &c.weight.value, g, &cache.cols, need_input_grad)?;
                accumulate(&mut c.weight.grad, &grads.weight);
                accumulate(&mut c.bias.grad, &grads.bias);
                Ok(grads.input)
            }
            Layer::Pool(p) => {
                let (arg, shape) = p
                    .cache
                    .as_ref()
                    .ok_or_else(|| Error::invalid("pool backward called before forward"))?;
                if !need_input_grad {
                    return Ok(None);
                }
                Ok(Some(maxpool2d_backward(grad, arg, shape)?))
            }
            Layer::Dense(d) => {
                let (input, output) = d
                    .cache
                    .as_ref()
                    .ok_or_else(|| Error::invalid("dense backward called before forward"))?;
                let grads = affine_backward(input, &d.weight.value, output, grad, d.activation, need_input_grad)?;
                accumulate(&mut d.weight.grad, &grads.weight);
                accumulate(&mut d.bias.grad, &grads.bias);
                Ok(grads.input)
            }
            Layer::Dropout(dr) => {
                if !need_input_grad {
                    return Ok(None);
                }
                let mut g = grad.clone();
                if let Some(mask) = &dr.mask {
                    for (gv, &m) in g.data_mut().iter_mut().zip(mask) {
                        *gv *= m;
                    }
                }
                Ok(Some(g))
            }
        }
    }

    pub fn params(&self) -> Vec<&Parameter<T>> {
        match self {
            Layer::Conv(c) => vec![&c.weight, &c.bias],
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        match self {
            Layer::Conv(c) => vec![&mut c.weight, &mut c.bias],
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            _ => Vec::new(),
        }
    }

    fn clear_cache(&mut self) {
        match self {
            Layer::Conv(c) => c.cache = None,
            Layer::Pool(p) => p.cache = None,
            Layer::Dense(d) => d.cache = None,
            Layer::Dropout(d) => d.mask = None,
        }
    }

    pub fn cast<U: Float>(&self) -> Layer<U> {
        match self {
            Layer::Conv(c) => Layer::Conv(Conv2d::new(c.weight.value.cast(), c.bias.value.cast(), c.activation)),
            Layer::Pool(p) => Layer::Pool(MaxPool2d::new(p.window)),
            Layer::Dense(d) => Layer::Dense(Dense::new(d.weight.value.cast(), d.bias.value.cast(), d.activation)),
            Layer::Dropout(d) => Layer::Dropout(Dropout {
                rate: d.rate,
                mask: None,
            }),
        }
    }
}

fn accumulate<T: Float>(acc: &mut Tensor<T>, add: &Tensor<T>) {
    for (a, &b) in acc.data_mut().iter_mut().zip(add.data()) {
        *a += b;
    }
}

/// Ordered stack of layers mapping `(batch, 3, 32, 32)` images to `(batch, 10)` logits.
pub struct ModelGraph<T = f32> {
    pub layers: Vec<Layer<T>>,
    training: bool,
    /// Canonical architecture string the model was built from, if any.
    pub arch: Option<String>,
}

impl<T: Float> ModelGraph<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Result<Self> {
        match layers.iter().rev().find(|l| !matches!(l, Layer::Dropout(_))) {
            Some(Layer::Dense(d)) if d.outputs() == NUM_CLASSES => {}
            _ => {
                return Err(Error::shape(format!(
                    "final layer must be fully connected with {NUM_CLASSES} outputs"
                )))
            }
        }
        Ok(Self {
            layers,
            training: false,
            arch: None,
        })
    }

    pub fn with_arch(mut self, arch: impl Into<String>) -> Self {
        self.arch = Some(arch.into());
        self
    }

    pub fn set_training(&mut self, training: bool) {
        self.training = training;
        if !training {
            self.layers.iter_mut().for_each(Layer::clear_cache);
        }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    /// Forward pass honoring the training flag. In training mode caches are kept for
    /// [`ModelGraph::backward`].
    pub fn forward(&mut self, x: &Tensor<T>, rng: &mut RngStream) -> Result<Tensor<T>> {
        if !self.training {
            return self.predict(x);
        }
        let mut h = x.clone();
        for layer in &mut self.layers {
            h = layer.forward(&h, rng)?;
        }
        h.ensure_finite("forward")?;
        Ok(h)
    }

    /// Deterministic evaluation-mode forward pass.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.infer(&h)?;
        }
        h.ensure_finite("forward")?;
        Ok(h)
    }

    /// Predict in chunks of `batch` rows to bound memory.
    pub fn predict_batched(&self, x: &Tensor<T>, batch: usize) -> Result<Tensor<T>> {
        let n = x.shape()[0];
        let per = x.len() / n;
        let mut out = Vec::with_capacity(n * NUM_CLASSES);
        let mut start = 0;
        while start < n {
            let end = (start + batch).min(n);
            let mut shape = x.shape().to_vec();
            shape[0] = end - start;
            let chunk = Tensor::new(shape, x.data()[start * per..end * per].to_vec())?;
            out.extend_from_slice(self.predict(&chunk)?.data());
            start = end;
        }
        Tensor::new(vec![n, NUM_CLASSES], out)
    }

    /// Backpropagate the loss gradient w.r.t. the logits through every layer,
    /// accumulating into the parameter gradients.
    pub fn backward(&mut self, grad_logits: &Tensor<T>) -> Result<()> {
        let mut g = grad_logits.clone();
        for i in (0..self.layers.len()).rev() {
            match self.layers[i].backward(&g, i > 0)? {
                Some(next) => g = next,
                None => break,
            }
        }
        for p in self.params() {
            p.grad.ensure_finite("backward")?;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn params(&self) -> Vec<&Parameter<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    /// Parameters with stable names (`<layer index>.weight`, `<layer index>.bias`).
    pub fn named_params(&self) -> Vec<(String, &Parameter<T>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            for p in layer.params() {
                let tag = match p.role {
                    ParamRole::Weight => "weight",
                    ParamRole::Bias => "bias",
                };
                out.push((format!("{i}.{tag}"), p));
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    /// Copy of every parameter value, in `params()` order.
    pub fn snapshot(&self) -> Vec<Tensor<T>> {
        self.params().iter().map(|p| p.value.clone()).collect()
    }

    pub fn restore(&mut self, values: &[Tensor<T>]) -> Result<()> {
        let mut params = self.params_mut();
        if params.len() != values.len() {
            return Err(Error::shape("snapshot does not match model parameters"));
        }
        for (p, v) in params.iter_mut().zip(values) {
            if p.value.shape() != v.shape() {
                return Err(Error::shape("snapshot tensor shape mismatch"));
            }
            p.value = v.clone();
        }
        Ok(())
    }

    /// Set rates of the dropout layers in order of appearance.
    pub fn set_dropout_rates(&mut self, rates: &[f64]) -> Result<()> {
        let sites = self.dropout_sites();
        if rates.len() != sites {
            return Err(Error::invalid(format!(
                "model has {sites} dropout sites, got {} rates",
                rates.len()
            )));
        }
        let mut it = rates.iter();
        for layer in &mut self.layers {
            if let Layer::Dropout(d) = layer {
                let r = *it.next().expect("counted above");
                if !(0.0..1.0).contains(&r) {
                    return Err(Error::invalid(format!("dropout rate must lie in [0, 1), got {r}")));
                }
                d.rate = r;
            }
        }
        Ok(())
    }

    pub fn dropout_sites(&self) -> usize {
        self.layers.iter().filter(|l| matches!(l, Layer::Dropout(_))).count()
    }

    /// Same weights at another precision.
    pub fn cast<U: Float>(&self) -> ModelGraph<U> {
        ModelGraph {
            layers: self.layers.iter().map(|l| l.cast()).collect(),
            training: false,
            arch: self.arch.clone(),
        }
    }

    pub fn clone_weights(&self) -> ModelGraph<T> {
        self.cast()
    }
}

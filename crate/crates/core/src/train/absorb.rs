use crate::arch::{parse, ArchSpec, LayerNode, NodeKind};
use crate::error::{Error, Result};
use crate::tensor::{gemm, Activation, Dense, Float, Layer, ModelGraph, Tensor};

/// Merge the first linear bottleneck into the fully connected layer after it:
/// `(x W1 + b1) W2 + b2 = x (W1 W2) + (b1 W2 + b2)`. Products are formed in f64.
pub fn absorb_bottleneck<T: Float>(model: &ModelGraph<T>) -> Result<ModelGraph<T>> {
    let n = model.layers.len();
    let idx = (0..n)
        .find(|&i| matches!(&model.layers[i], Layer::Dense(d) if d.activation == Activation::Linear) && i + 1 < n)
        .ok_or_else(|| Error::invalid("model has no linear bottleneck layer"))?;
    let (Layer::Dense(lin), Some(Layer::Dense(next))) = (&model.layers[idx], model.layers.get(idx + 1)) else {
        return Err(Error::invalid(format!(
            "linear layer {idx} is not directly followed by a fully connected layer"
        )));
    };
    let (i, b, h) = (lin.inputs(), lin.outputs(), next.outputs());
    let w1: Vec<f64> = lin.weight.value.data().iter().map(|v| v.as_f64()).collect();
    let b1: Vec<f64> = lin.bias.value.data().iter().map(|v| v.as_f64()).collect();
    let w2: Vec<f64> = next.weight.value.data().iter().map(|v| v.as_f64()).collect();
    let mut w = vec![0.0f64; i * h];
    gemm(false, false, i, h, b, 1.0, &w1, &w2, 0.0, &mut w);
    let mut bias: Vec<f64> = next.bias.value.data().iter().map(|v| v.as_f64()).collect();
    gemm(false, false, 1, h, b, 1.0, &b1, &w2, 1.0, &mut bias);
    let to_t = |v: Vec<f64>| v.into_iter().map(T::from_f64_lossy).collect::<Vec<T>>();
    let mut merged = Some(Dense::new(
        Tensor::new(vec![i, h], to_t(w))?,
        Tensor::new(vec![h], to_t(bias))?,
        next.activation,
    ));
    let mut layers: Vec<Layer<T>> = Vec::with_capacity(n - 1);
    for (k, l) in model.layers.iter().enumerate() {
        if k == idx {
            layers.push(Layer::Dense(merged.take().expect("used once")));
        } else if k != idx + 1 {
            layers.push(l.cast());
        }
    }
    let mut out = ModelGraph::new(layers)?;
    out.arch = model.arch.as_deref().and_then(drop_bottleneck);
    Ok(out)
}

fn drop_bottleneck(arch: &str) -> Option<String> {
    let spec = parse(arch).ok()?;
    let mut seen = false;
    let nodes: Vec<LayerNode> = spec
        .hidden()
        .iter()
        .filter(|n| {
            let skip = !seen && matches!(n.kind, NodeKind::Bottleneck { .. });
            seen |= skip;
            !skip
        })
        .copied()
        .collect();
    ArchSpec::from_nodes(nodes).ok().map(|s| s.to_string())
}

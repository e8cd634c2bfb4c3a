//! Architecture strings such as `76c^2-mp-126c^2-mp-148c^4-mp-1200fc^2`.
//!
//! Tokens are separated by `-`:
//!
//! | token          | meaning                                          |
//! |----------------|--------------------------------------------------|
//! | `<n>c`         | `n` 3x3 convolution filters, ReLU                |
//! | `<n>c:<k>`     | `n` k x k convolution filters                    |
//! | `mp`, `mp:<w>` | max pooling over w x w windows (default 2)       |
//! | `<n>fc`        | fully connected ReLU layer                       |
//! | `<n>lfc`       | linear bottleneck layer                          |
//! | `c`, `fc`, `lfc` | same layer with its width left dependent       |
//!
//! Any token may carry a repeat suffix `^k` (superscript digits are accepted too).
//! The 10-way linear output layer is implicit and never written.

mod count;
mod widths;

pub use count::{count_params, layer_params, solve_dependent_width, LayerCount};
pub use widths::{mlp_param_count, teacher_spec, widths_from_ratios, widths_from_scalars, TEACHER_BOUNDS};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::{
    glorot_uniform, Activation, Conv2d, Dense, Dropout, Float, Layer, MaxPool2d, ModelGraph, Tensor, NUM_CLASSES,
};
use serde::{Deserialize, Serialize};
use std::fmt;

pub const INPUT_SHAPE: [usize; 3] = [3, 32, 32];
const DEFAULT_KERNEL: usize = 3;
const DEFAULT_POOL: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Width {
    Fixed(usize),
    Dependent,
}

impl Width {
    pub fn fixed(self) -> Option<usize> {
        match self {
            Width::Fixed(n) => Some(n),
            Width::Dependent => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Conv { filters: Width, kernel: usize },
    MaxPool { window: usize },
    Fc { units: Width },
    Bottleneck { units: Width },
    Output { classes: usize },
}

impl NodeKind {
    pub fn width(&self) -> Option<Width> {
        match *self {
            NodeKind::Conv { filters, .. } => Some(filters),
            NodeKind::Fc { units } | NodeKind::Bottleneck { units } => Some(units),
            _ => None,
        }
    }

    fn set_width(&mut self, w: Width) {
        match self {
            NodeKind::Conv { filters, .. } => *filters = w,
            NodeKind::Fc { units } | NodeKind::Bottleneck { units } => *units = w,
            _ => {}
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerNode {
    pub kind: NodeKind,
    pub repeat: usize,
}

impl LayerNode {
    pub fn new(kind: NodeKind) -> Self {
        Self { kind, repeat: 1 }
    }

    pub fn repeated(kind: NodeKind, repeat: usize) -> Self {
        Self { kind, repeat }
    }
}

/// Parsed architecture; always ends with the implicit 10-class output node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchSpec {
    nodes: Vec<LayerNode>,
}

impl ArchSpec {
    /// Build from hidden nodes; the output node is appended.
    pub fn from_nodes(mut nodes: Vec<LayerNode>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::invalid("architecture needs at least one hidden layer"));
        }
        if nodes.iter().any(|n| n.repeat == 0) {
            return Err(Error::invalid("layer repeat must be at least 1"));
        }
        let dependent = nodes
            .iter()
            .filter(|n| n.kind.width() == Some(Width::Dependent))
            .count();
        if dependent > 1 {
            return Err(Error::invalid("at most one layer may have a dependent width"));
        }
        nodes.push(LayerNode::new(NodeKind::Output { classes: NUM_CLASSES }));
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[LayerNode] {
        &self.nodes
    }

    /// Hidden nodes, without the trailing output node.
    pub fn hidden(&self) -> &[LayerNode] {
        &self.nodes[..self.nodes.len() - 1]
    }

    pub fn input_shape(&self) -> [usize; 3] {
        INPUT_SHAPE
    }

    pub fn dependent_index(&self) -> Option<usize> {
        self.nodes.iter().position(|n| n.kind.width() == Some(Width::Dependent))
    }

    /// Copy with the dependent width replaced by `width`.
    pub fn resolve(&self, width: usize) -> Result<Self> {
        let i = self
            .dependent_index()
            .ok_or_else(|| Error::invalid("architecture has no dependent width"))?;
        let mut out = self.clone();
        out.nodes[i].kind.set_width(Width::Fixed(width));
        Ok(out)
    }

    /// Nodes with repeats expanded.
    pub fn unrolled(&self) -> Vec<NodeKind> {
        self.nodes
            .iter()
            .flat_map(|n| std::iter::repeat_n(n.kind, n.repeat))
            .collect()
    }

    pub fn conv_layers(&self) -> usize {
        self.unrolled()
            .iter()
            .filter(|k| matches!(k, NodeKind::Conv { .. }))
            .count()
    }

    pub fn has_bottleneck(&self) -> bool {
        self.nodes.iter().any(|n| matches!(n.kind, NodeKind::Bottleneck { .. }))
    }

    /// Dropout sites in layer order: after every pooling layer and every hidden
    /// fully connected ReLU layer.
    pub fn dropout_sites(&self) -> usize {
        self.unrolled()
            .iter()
            .filter(|k| matches!(k, NodeKind::MaxPool { .. } | NodeKind::Fc { .. }))
            .count()
    }

    /// Concrete widths of every unrolled layer that has one.
    pub fn widths(&self) -> Vec<Option<usize>> {
        self.unrolled()
            .iter()
            .filter_map(|k| k.width().map(Width::fixed))
            .collect()
    }
}

fn render_node(n: &LayerNode) -> String {
    let width = |w: Width| match w {
        Width::Fixed(v) => v.to_string(),
        Width::Dependent => String::new(),
    };
    let mut s = match n.kind {
        NodeKind::Conv { filters, kernel } if kernel == DEFAULT_KERNEL => format!("{}c", width(filters)),
        NodeKind::Conv { filters, kernel } => format!("{}c:{kernel}", width(filters)),
        NodeKind::MaxPool { window } if window == DEFAULT_POOL => "mp".to_string(),
        NodeKind::MaxPool { window } => format!("mp:{window}"),
        NodeKind::Fc { units } => format!("{}fc", width(units)),
        NodeKind::Bottleneck { units } => format!("{}lfc", width(units)),
        NodeKind::Output { classes } => format!("{classes}out"),
    };
    if n.repeat > 1 {
        s.push_str(&format!("^{}", n.repeat));
    }
    s
}

impl fmt::Display for ArchSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.hidden().iter().map(render_node).collect();
        write!(f, "{}", parts.join("-"))
    }
}

impl std::str::FromStr for ArchSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse(s)
    }
}

fn superscript_digit(c: char) -> Option<char> {
    Some(match c {
        '⁰' => '0',
        '¹' => '1',
        '²' => '2',
        '³' => '3',
        '⁴' => '4',
        '⁵' => '5',
        '⁶' => '6',
        '⁷' => '7',
        '⁸' => '8',
        '⁹' => '9',
        _ => return None,
    })
}

fn parse_token(tok: &str, pos: usize) -> Result<LayerNode> {
    let err = |m: String| Error::Parse {
        position: pos,
        message: m,
    };
    if tok.is_empty() {
        return Err(err("empty layer token".into()));
    }
    // Repeat suffix: `^k` or trailing superscript digits.
    let (body, repeat) = if let Some((b, r)) = tok.split_once('^') {
        let r: usize = r.parse().map_err(|_| err(format!("bad repeat count in `{tok}`")))?;
        (b.to_string(), r)
    } else {
        let sup: String = tok.chars().rev().map_while(superscript_digit).collect();
        if sup.is_empty() {
            (tok.to_string(), 1)
        } else {
            let digits: String = sup.chars().rev().collect();
            let body: String = tok.chars().take(tok.chars().count() - digits.len()).collect();
            (body, digits.parse().map_err(|_| err("bad repeat".into()))?)
        }
    };
    if repeat == 0 {
        return Err(err(format!("repeat count must be positive in `{tok}`")));
    }
    let (head, param) = match body.split_once(':') {
        Some((h, p)) => {
            let p: usize = p.parse().map_err(|_| err(format!("bad size suffix in `{tok}`")))?;
            (h, Some(p))
        }
        None => (body.as_str(), None),
    };
    let digits_end = head.find(|c: char| !c.is_ascii_digit()).unwrap_or(head.len());
    let (num, kind) = head.split_at(digits_end);
    let width = if num.is_empty() {
        Width::Dependent
    } else {
        let n: usize = num.parse().map_err(|_| err(format!("bad width in `{tok}`")))?;
        if n == 0 {
            return Err(err(format!("width must be positive in `{tok}`")));
        }
        Width::Fixed(n)
    };
    let kind = match (kind, param) {
        ("c", k) => {
            let kernel = k.unwrap_or(DEFAULT_KERNEL);
            if kernel % 2 == 0 {
                return Err(err(format!("convolution kernel must be odd in `{tok}`")));
            }
            NodeKind::Conv { filters: width, kernel }
        }
        ("mp", w) if num.is_empty() => {
            let window = w.unwrap_or(DEFAULT_POOL);
            if window == 0 {
                return Err(err("pool window must be positive".into()));
            }
            NodeKind::MaxPool { window }
        }
        ("fc", None) => NodeKind::Fc { units: width },
        ("lfc", None) => NodeKind::Bottleneck { units: width },
        _ => return Err(err(format!("unknown layer token `{tok}`"))),
    };
    Ok(LayerNode { kind, repeat })
}

/// Parse an architecture string.
pub fn parse(text: &str) -> Result<ArchSpec> {
    let text = text.trim();
    if text.is_empty() {
        return Err(Error::Parse {
            position: 0,
            message: "empty architecture string".into(),
        });
    }
    let mut nodes = Vec::new();
    let mut pos = 0;
    let mut dependent_at = None;
    for tok in text.split('-') {
        let node = parse_token(tok.trim(), pos)?;
        if node.kind.width() == Some(Width::Dependent) {
            if dependent_at.is_some() {
                return Err(Error::Parse {
                    position: pos,
                    message: "second dependent width; at most one layer may be dependent".into(),
                });
            }
            dependent_at = Some(pos);
        }
        nodes.push(node);
        pos += tok.chars().count() + 1;
    }
    ArchSpec::from_nodes(nodes)
}

/// Options for instantiating a model from a spec.
#[derive(Clone, Debug)]
pub struct BuildOptions {
    /// Multiplier on the Glorot bound.
    pub init_scale: f64,
    /// One rate per dropout site, or empty for no dropout layers.
    pub dropout: Vec<f64>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            init_scale: 1.0,
            dropout: Vec::new(),
        }
    }
}

/// Instantiate an untrained model with Glorot-initialized weights and zero biases.
pub fn build_model<T: Float>(spec: &ArchSpec, opts: &BuildOptions, rng: &mut RngStream) -> Result<ModelGraph<T>> {
    if spec.dependent_index().is_some() {
        return Err(Error::invalid(format!(
            "architecture `{spec}` still has a dependent width"
        )));
    }
    let sites = spec.dropout_sites();
    if !opts.dropout.is_empty() && opts.dropout.len() != sites {
        return Err(Error::invalid(format!(
            "`{spec}` has {sites} dropout sites, got {} rates",
            opts.dropout.len()
        )));
    }
    let mut rates = opts.dropout.iter();
    let [mut c, mut h, mut w] = INPUT_SHAPE;
    let mut flat: Option<usize> = None;
    let mut layers = Vec::new();
    for kind in spec.unrolled() {
        match kind {
            NodeKind::Conv { filters, kernel } => {
                if flat.is_some() {
                    return Err(Error::invalid("convolution after a fully connected layer"));
                }
                let f = filters.fixed().expect("resolved");
                let weight = glorot_uniform(
                    &[f, c, kernel, kernel],
                    c * kernel * kernel,
                    f * kernel * kernel,
                    opts.init_scale,
                    rng,
                )?;
                layers.push(Layer::Conv(Conv2d::new(weight, Tensor::zeros(&[f]), Activation::Relu)));
                c = f;
            }
            NodeKind::MaxPool { window } => {
                if flat.is_some() || window > h || window > w {
                    return Err(Error::invalid(format!("pool window {window} does not fit")));
                }
                layers.push(Layer::Pool(MaxPool2d::new(window)));
                h /= window;
                w /= window;
                if let Some(&r) = rates.next() {
                    layers.push(Layer::Dropout(Dropout::new(r)?));
                }
            }
            NodeKind::Fc { .. } | NodeKind::Bottleneck { .. } | NodeKind::Output { .. } => {
                let fin = flat.unwrap_or(c * h * w);
                let (units, act) = match kind {
                    NodeKind::Fc { units } => (units.fixed().expect("resolved"), Activation::Relu),
                    NodeKind::Bottleneck { units } => (units.fixed().expect("resolved"), Activation::Linear),
                    NodeKind::Output { classes } => (classes, Activation::Linear),
                    NodeKind::Conv { .. } | NodeKind::MaxPool { .. } => unreachable!(),
                };
                let weight = glorot_uniform(&[fin, units], fin, units, opts.init_scale, rng)?;
                layers.push(Layer::Dense(Dense::new(weight, Tensor::zeros(&[units]), act)));
                flat = Some(units);
                if matches!(kind, NodeKind::Fc { .. }) {
                    if let Some(&r) = rates.next() {
                        layers.push(Layer::Dropout(Dropout::new(r)?));
                    }
                }
            }
        }
    }
    Ok(ModelGraph::new(layers)?.with_arch(spec.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_teacher_row() {
        let s = parse("76c^2-mp-126c^2-mp-148c^4-mp-1200fc^2").unwrap();
        assert_eq!(s.conv_layers(), 8);
        let pools = s
            .unrolled()
            .iter()
            .filter(|k| matches!(k, NodeKind::MaxPool { .. }))
            .count();
        assert_eq!(pools, 3);
        let fcs: Vec<_> = s
            .unrolled()
            .into_iter()
            .filter_map(|k| match k {
                NodeKind::Fc { units } => units.fixed(),
                _ => None,
            })
            .collect();
        assert_eq!(fcs, vec![1200, 1200]);
        assert_eq!(s.to_string(), "76c^2-mp-126c^2-mp-148c^4-mp-1200fc^2");
        assert!(matches!(
            s.nodes().last().unwrap().kind,
            NodeKind::Output { classes: 10 }
        ));
    }

    #[test]
    fn accepts_superscripts() {
        let a = parse("76c²-mp-126c²-mp-148c⁴-mp-1200fc²").unwrap();
        let b = parse("76c^2-mp-126c^2-mp-148c^4-mp-1200fc^2").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_dependent_slot() {
        let s = parse("100c:5-mp:3-lfc-800fc").unwrap();
        assert_eq!(s.dependent_index(), Some(2));
        assert_eq!(s.to_string(), "100c:5-mp:3-lfc-800fc");
        let e = parse("c-mp-lfc-fc").unwrap_err();
        match e {
            Error::Parse { position, .. } => assert_eq!(position, 5),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(parse(""), Err(Error::Parse { position: 0, .. })));
        assert!(matches!(parse("64c-xx"), Err(Error::Parse { position: 4, .. })));
        assert!(parse("64c--mp").is_err());
        assert!(parse("0c").is_err());
        assert!(parse("64c:4").is_err());
        assert!(parse("64c^0").is_err());
        assert!(parse("10mp").is_err());
    }

    #[test]
    fn build_matches_count() {
        let s = parse("8c:5-mp:3-20lfc-30fc").unwrap();
        let m: ModelGraph<f32> = build_model(&s, &BuildOptions::default(), &mut RngStream::new(1)).unwrap();
        assert_eq!(m.param_count() as u64, count_params(&s).unwrap());
        assert_eq!(m.dropout_sites(), 0);
        let t = parse("16c-mp-32c-mp-64fc").unwrap();
        let opts = BuildOptions {
            init_scale: 1.0,
            dropout: vec![0.1, 0.2, 0.3],
        };
        let m: ModelGraph<f32> = build_model(&t, &opts, &mut RngStream::new(1)).unwrap();
        assert_eq!(m.dropout_sites(), 3);
        assert!(build_model::<f32>(&parse("c-mp-10fc").unwrap(), &opts, &mut RngStream::new(1)).is_err());
    }
}

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::tensor::num_like::Element;
use crate::tensor::Shape4;

use super::{ArchitectureKind, UNetConfig};

pub type NodeId = usize;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LayerOp {
    Input,
    /// Same-padded convolution; `weight`/`bias` index the parameter store.
    Conv {
        kernel: usize,
        weight: usize,
        bias: usize,
    },
    /// 2x2 stride-2 up-convolution.
    ConvTranspose {
        weight: usize,
        bias: usize,
    },
    MaxPool,
    Concat,
    Relu,
}

impl LayerOp {
    pub fn label(&self) -> String {
        match self {
            LayerOp::Input => "input".into(),
            LayerOp::Conv { kernel, .. } => format!("conv{kernel}x{kernel}"),
            LayerOp::ConvTranspose { .. } => "conv_transpose2x2".into(),
            LayerOp::MaxPool => "maxpool2x2".into(),
            LayerOp::Concat => "concat".into(),
            LayerOp::Relu => "relu".into(),
        }
    }

    pub(crate) fn param_count(&self, graph: &LayerGraph, node: &LayerNode) -> u64 {
        let cin = || graph.node(node.inputs[0]).channels;
        match self {
            LayerOp::Conv { kernel, .. } => conv_params(*kernel, cin(), node.channels),
            LayerOp::ConvTranspose { .. } => conv_params(2, cin(), node.channels),
            _ => 0,
        }
    }
}

/// `(k*k*cin + 1) * cout`.
pub(crate) fn conv_params(kernel: usize, cin: usize, cout: usize) -> u64 {
    ((kernel * kernel * cin + 1) * cout) as u64
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerNode {
    pub name: String,
    pub op: LayerOp,
    pub inputs: Vec<NodeId>,
    /// Output channel count.
    pub channels: usize,
    /// Number of 2x downsamplings relative to the input.
    pub level: usize,
}

pub(crate) struct ParamSpec {
    pub name: String,
    pub shape: Shape4,
    pub fan_in: usize,
    pub is_bias: bool,
    pub is_head: bool,
}

/// Topologically ordered layer nodes with channel bookkeeping.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerGraph {
    nodes: Vec<LayerNode>,
    param_names: Vec<String>,
    param_shapes: Vec<Shape4>,
    encoder_outputs: Vec<NodeId>,
    bottleneck_output: NodeId,
    up_convs: Vec<NodeId>,
    head: NodeId,
}

struct Builder {
    nodes: Vec<LayerNode>,
    params: Vec<ParamSpec>,
}

impl Builder {
    fn add(&mut self, name: String, op: LayerOp, inputs: Vec<NodeId>, channels: usize, level: usize) -> NodeId {
        self.nodes.push(LayerNode {
            name,
            op,
            inputs,
            channels,
            level,
        });
        self.nodes.len() - 1
    }

    fn channels(&self, id: NodeId) -> usize {
        self.nodes[id].channels
    }

    fn level(&self, id: NodeId) -> usize {
        self.nodes[id].level
    }

    fn param(&mut self, name: String, shape: Shape4, fan_in: usize, is_bias: bool, is_head: bool) -> usize {
        self.params.push(ParamSpec {
            name,
            shape,
            fan_in,
            is_bias,
            is_head,
        });
        self.params.len() - 1
    }

    fn conv(&mut self, name: &str, x: NodeId, cout: usize, kernel: usize, head: bool) -> NodeId {
        let cin = self.channels(x);
        let fan_in = cin * kernel * kernel;
        let weight = self.param(
            format!("{name}.weight"),
            Shape4::new(cout, cin, kernel, kernel),
            fan_in,
            false,
            head,
        );
        let bias = self.param(format!("{name}.bias"), Shape4::new(cout, 1, 1, 1), fan_in, true, head);
        let level = self.level(x);
        self.add(
            name.to_string(),
            LayerOp::Conv { kernel, weight, bias },
            vec![x],
            cout,
            level,
        )
    }

    fn conv_relu(&mut self, name: &str, x: NodeId, cout: usize) -> NodeId {
        let c = self.conv(name, x, cout, 3, false);
        let level = self.level(x);
        self.add(format!("{name}.relu"), LayerOp::Relu, vec![c], cout, level)
    }

    fn concat(&mut self, name: String, parts: Vec<NodeId>) -> NodeId {
        let channels = parts.iter().map(|&p| self.channels(p)).sum();
        let level = self.level(parts[0]);
        self.add(name, LayerOp::Concat, parts, channels, level)
    }

    fn pool(&mut self, name: String, x: NodeId) -> NodeId {
        let (c, level) = (self.channels(x), self.level(x));
        self.add(name, LayerOp::MaxPool, vec![x], c, level + 1)
    }

    fn up(&mut self, name: &str, x: NodeId, cout: usize) -> NodeId {
        let cin = self.channels(x);
        let weight = self.param(
            format!("{name}.weight"),
            Shape4::new(cin, cout, 2, 2),
            cin * 4,
            false,
            false,
        );
        let bias = self.param(format!("{name}.bias"), Shape4::new(cout, 1, 1, 1), cin * 4, true, false);
        let level = self.level(x) - 1;
        self.add(
            name.to_string(),
            LayerOp::ConvTranspose { weight, bias },
            vec![x],
            cout,
            level,
        )
    }

    /// One two-conv block; returns `(block output, second conv output)`.
    fn block(&mut self, kind: ArchitectureKind, prefix: &str, x: NodeId, filters: usize) -> (NodeId, NodeId) {
        let c1 = self.conv_relu(&format!("{prefix}.conv1"), x, filters);
        let conv2_in = match kind {
            ArchitectureKind::Dense => self.concat(format!("{prefix}.dense"), vec![x, c1]),
            _ => c1,
        };
        let c2 = self.conv_relu(&format!("{prefix}.conv2"), conv2_in, filters);
        let out = match kind {
            ArchitectureKind::Vanilla => c2,
            ArchitectureKind::Residual | ArchitectureKind::Dense => self.concat(format!("{prefix}.out"), vec![x, c2]),
        };
        (out, c2)
    }
}

impl LayerGraph {
    pub(crate) fn build(kind: ArchitectureKind, cfg: &UNetConfig) -> (Self, Vec<ParamSpec>) {
        let mut b = Builder {
            nodes: Vec::new(),
            params: Vec::new(),
        };
        let input = b.add("input".into(), LayerOp::Input, vec![], cfg.in_channels, 0);

        let mut x = input;
        let mut skips = Vec::with_capacity(cfg.depth);
        let mut encoder_outputs = Vec::with_capacity(cfg.depth);
        for (i, &f) in cfg.filters().iter().enumerate() {
            let (out, c2) = b.block(kind, &format!("enc{i}"), x, f);
            encoder_outputs.push(out);
            skips.push(c2);
            x = b.pool(format!("enc{i}.pool"), out);
        }
        let (bottleneck_output, _) = b.block(kind, "bottleneck", x, cfg.bottleneck_filters);

        x = bottleneck_output;
        let mut up_convs = Vec::with_capacity(cfg.depth);
        for (i, &f) in cfg.filters().iter().enumerate().rev() {
            let up = b.up(&format!("dec{i}.up"), x, f);
            up_convs.push(up);
            let merged = b.concat(format!("dec{i}.skip"), vec![up, skips[i]]);
            x = b.block(kind, &format!("dec{i}"), merged, f).0;
        }
        let head = b.conv("head", x, cfg.out_channels, 1, true);

        let Builder { nodes, params } = b;
        let graph = Self {
            nodes,
            param_names: params.iter().map(|p| p.name.clone()).collect(),
            param_shapes: params.iter().map(|p| p.shape).collect(),
            encoder_outputs,
            bottleneck_output,
            up_convs,
            head,
        };
        debug_assert!(graph.channels_consistent());
        (graph, params)
    }

    pub fn nodes(&self) -> &[LayerNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &LayerNode {
        &self.nodes[id]
    }

    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }

    pub fn param_shapes(&self) -> &[Shape4] {
        &self.param_shapes
    }

    pub fn encoder_outputs(&self) -> &[NodeId] {
        &self.encoder_outputs
    }

    pub fn bottleneck_output(&self) -> NodeId {
        self.bottleneck_output
    }

    /// Decoder up-convolutions, deepest first.
    pub fn up_convs(&self) -> &[NodeId] {
        &self.up_convs
    }

    /// The final 1x1 convolution producing logits.
    pub fn head(&self) -> NodeId {
        self.head
    }

    pub fn analytic_parameter_count(&self) -> u64 {
        self.nodes.iter().map(|n| n.op.param_count(self, n)).sum()
    }

    /// Every node's channel count agrees with its inputs.
    pub fn channels_consistent(&self) -> bool {
        self.nodes.iter().all(|n| match n.op {
            LayerOp::Input => n.inputs.is_empty(),
            LayerOp::Concat => n.channels == n.inputs.iter().map(|&i| self.nodes[i].channels).sum::<usize>(),
            LayerOp::MaxPool | LayerOp::Relu => n.channels == self.nodes[n.inputs[0]].channels,
            LayerOp::Conv { weight, .. } | LayerOp::ConvTranspose { weight, .. } => {
                let s = self.param_shapes[weight];
                let cin = self.nodes[n.inputs[0]].channels;
                match n.op {
                    LayerOp::Conv { .. } => s.c == cin && s.n == n.channels,
                    _ => s.n == cin && s.c == n.channels,
                }
            }
        })
    }

    /// Records every node on `tape`; `params` holds one var per parameter.
    pub(crate) fn record<'a, T: Element>(&self, tape: &mut Tape<'a, T>, input: Var, params: &[Var]) -> Result<Var> {
        let mut vals: Vec<Var> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let arg = |k: usize| vals[node.inputs[k]];
            let v = match node.op {
                LayerOp::Input => input,
                LayerOp::Conv { weight, bias, .. } => tape.conv2d(arg(0), params[weight], params[bias])?,
                LayerOp::ConvTranspose { weight, bias } => {
                    tape.conv2d_transpose(arg(0), params[weight], params[bias])?
                }
                LayerOp::MaxPool => tape.maxpool2(arg(0))?,
                LayerOp::Concat => {
                    let parts: Vec<Var> = node.inputs.iter().map(|&i| vals[i]).collect();
                    tape.concat(&parts)?
                }
                LayerOp::Relu => tape.relu(arg(0)),
            };
            vals.push(v);
        }
        Ok(vals[self.head])
    }
}

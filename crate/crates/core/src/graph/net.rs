use std::collections::{BTreeSet, HashMap};
use std::fmt::{self, Write as _};

use crate::error::{Error, Result};
use crate::layers::{BatchNormSpec, Conv2dSpec, DropoutSpec, LrnSpec, PoolSpec};
use crate::tensor::Shape4;

/// Reserved id that refers to the graph input.
pub const INPUT: &str = "input";

#[derive(Clone, Debug, PartialEq)]
pub enum LayerKind {
    Conv(Conv2dSpec),
    MaxPool(PoolSpec),
    Gap,
    BatchNorm(BatchNormSpec),
    Dropout(DropoutSpec),
    Lrn(LrnSpec),
    Dense { units: usize },
    Relu,
    SoftmaxCe,
    Concat,
    Flatten,
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Conv(_) => "conv",
            LayerKind::MaxPool(_) => "maxpool",
            LayerKind::Gap => "gap",
            LayerKind::BatchNorm(_) => "batchnorm",
            LayerKind::Dropout(_) => "dropout",
            LayerKind::Lrn(_) => "lrn",
            LayerKind::Dense { .. } => "dense",
            LayerKind::Relu => "relu",
            LayerKind::SoftmaxCe => "softmax-ce",
            LayerKind::Concat => "concat",
            LayerKind::Flatten => "flatten",
        }
    }

    /// Learnable tensors as `(suffix, shape)` for an input of `input` shape.
    pub(crate) fn param_shapes(&self, input: Shape4) -> Vec<(&'static str, Shape4)> {
        match self {
            LayerKind::Conv(spec) => {
                let mut v = vec![("weight", spec.weight_shape())];
                if spec.has_bias {
                    v.push(("bias", Shape4::new(1, spec.out_channels, 1, 1)));
                }
                v
            }
            LayerKind::Dense { units } => vec![
                ("weight", Shape4::new(1, 1, input.sample_len(), *units)),
                ("bias", Shape4::new(1, *units, 1, 1)),
            ],
            LayerKind::BatchNorm(spec) => vec![
                ("gamma", Shape4::new(1, spec.channels, 1, 1)),
                ("beta", Shape4::new(1, spec.channels, 1, 1)),
            ],
            _ => vec![],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNode {
    pub id: String,
    pub kind: LayerKind,
    pub inputs: Vec<String>,
}

/// Accumulates nodes; [`GraphBuilder::build`] validates the result.
#[derive(Clone, Debug)]
pub struct GraphBuilder {
    input_shape: Shape4,
    nodes: Vec<LayerNode>,
}

impl GraphBuilder {
    /// `input_shape` is per-sample; its batch dimension is ignored.
    pub fn new(input_shape: Shape4) -> Self {
        GraphBuilder {
            input_shape: input_shape.with_n(1),
            nodes: Vec::new(),
        }
    }

    /// Adds a node and returns its id for chaining.
    pub fn add(&mut self, id: impl Into<String>, kind: LayerKind, inputs: &[&str]) -> String {
        let id = id.into();
        self.nodes.push(LayerNode {
            id: id.clone(),
            kind,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
        });
        id
    }

    pub fn build(self, output: &str) -> Result<NetGraph> {
        NetGraph::new(self.nodes, self.input_shape, output)
    }
}

/// A validated layer DAG with a single softmax cross-entropy sink.
#[derive(Clone, Debug)]
pub struct NetGraph {
    nodes: Vec<LayerNode>,
    input_shape: Shape4,
    output: String,
    order: Vec<usize>,
    /// Per-sample output shape of each node, indexed like `nodes`.
    shapes: Vec<Shape4>,
    /// Producer indices for each node's inputs (`None` = graph input).
    sources: Vec<Vec<Option<usize>>>,
}

impl NetGraph {
    pub fn new(nodes: Vec<LayerNode>, input_shape: Shape4, output: &str) -> Result<Self> {
        let input_shape = input_shape.with_n(1);
        let mut index = HashMap::new();
        for (i, node) in nodes.iter().enumerate() {
            if node.id == INPUT {
                return Err(Error::graph(&node.id, "id is reserved for the graph input"));
            }
            if index.insert(node.id.clone(), i).is_some() {
                return Err(Error::graph(&node.id, "duplicate node id"));
            }
        }
        let mut sources = Vec::with_capacity(nodes.len());
        for node in &nodes {
            match (&node.kind, node.inputs.len()) {
                (LayerKind::Concat, n) if n >= 1 => {}
                (LayerKind::Concat, _) => {
                    return Err(Error::graph(&node.id, "concat needs at least one input"))
                }
                (_, 1) => {}
                (_, n) => {
                    return Err(Error::graph(
                        &node.id,
                        format!("{} takes exactly one input, got {n}", node.kind.name()),
                    ))
                }
            }
            let src = node
                .inputs
                .iter()
                .map(|inp| {
                    if inp == INPUT {
                        Ok(None)
                    } else {
                        index.get(inp).map(|&i| Some(i)).ok_or_else(|| {
                            Error::graph(&node.id, format!("input '{inp}' does not exist"))
                        })
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            sources.push(src);
        }
        let order = topo_order(&nodes, &sources)?;

        let sinks: Vec<&LayerNode> = nodes
            .iter()
            .filter(|n| n.kind == LayerKind::SoftmaxCe)
            .collect();
        if sinks.len() != 1 {
            return Err(Error::graph(
                output,
                format!(
                    "graph needs exactly one softmax-ce sink, found {}",
                    sinks.len()
                ),
            ));
        }
        if sinks[0].id != output {
            return Err(Error::graph(output, "output must be the softmax-ce node"));
        }
        if nodes.iter().any(|n| n.inputs.iter().any(|i| i == output)) {
            return Err(Error::graph(
                output,
                "softmax-ce node must not feed other nodes",
            ));
        }

        let mut g = NetGraph {
            nodes,
            input_shape,
            output: output.to_string(),
            order,
            shapes: Vec::new(),
            sources,
        };
        g.shapes = g.compute_shapes()?;
        Ok(g)
    }

    fn compute_shapes(&self) -> Result<Vec<Shape4>> {
        let mut shapes: Vec<Option<Shape4>> = vec![None; self.nodes.len()];
        for &i in &self.order {
            let node = &self.nodes[i];
            let ins: Vec<Shape4> = self.sources[i]
                .iter()
                .map(|s| s.map_or(self.input_shape, |j| shapes[j].expect("topological order")))
                .collect();
            let out = node_output_shape(&node.kind, &ins)
                .map_err(|e| Error::graph(&node.id, e.to_string()))?;
            shapes[i] = Some(out);
        }
        Ok(shapes
            .into_iter()
            .map(|s| s.expect("all nodes visited"))
            .collect())
    }

    /// Per-node output shapes (batch dimension 1) in evaluation order.
    pub fn infer_shapes(&self) -> Result<Vec<(String, Shape4)>> {
        let shapes = self.compute_shapes()?;
        Ok(self
            .order
            .iter()
            .map(|&i| (self.nodes[i].id.clone(), shapes[i]))
            .collect())
    }

    pub fn nodes(&self) -> &[LayerNode] {
        &self.nodes
    }

    pub fn input_shape(&self) -> Shape4 {
        self.input_shape
    }

    pub fn output(&self) -> &str {
        &self.output
    }

    /// Node indices in evaluation order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub(crate) fn sources(&self, i: usize) -> &[Option<usize>] {
        &self.sources[i]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn node(&self, id: &str) -> Option<&LayerNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Per-sample output shape of a node.
    pub fn shape_of(&self, id: &str) -> Option<Shape4> {
        self.index_of(id).map(|i| self.shapes[i])
    }

    /// Per-sample shape of the first input of a node.
    pub fn input_shape_of(&self, id: &str) -> Option<Shape4> {
        let i = self.index_of(id)?;
        Some(match self.sources[i].first()? {
            None => self.input_shape,
            Some(j) => self.shapes[*j],
        })
    }

    /// Learnable slots as `(slot name, shape, fan_in)` in evaluation order.
    pub fn param_slots(&self) -> Vec<(String, Shape4, usize)> {
        let mut out = Vec::new();
        for &i in &self.order {
            let node = &self.nodes[i];
            let input = self.input_shape_of(&node.id).expect("node exists");
            for (suffix, shape) in node.kind.param_shapes(input) {
                let fan_in = match &node.kind {
                    LayerKind::Conv(s) => s.in_channels * s.kernel * s.kernel,
                    LayerKind::Dense { .. } => input.sample_len(),
                    _ => 1,
                };
                out.push((format!("{}.{suffix}", node.id), shape, fan_in));
            }
        }
        out
    }

    pub fn node_param_count(&self, i: usize) -> usize {
        let node = &self.nodes[i];
        let input = self.input_shape_of(&node.id).expect("node exists");
        node.kind
            .param_shapes(input)
            .iter()
            .map(|(_, s)| s.len())
            .sum()
    }

    pub fn param_count(&self) -> usize {
        (0..self.nodes.len())
            .map(|i| self.node_param_count(i))
            .sum()
    }

    pub fn num_classes(&self) -> usize {
        self.input_shape_of(&self.output)
            .expect("output exists")
            .sample_len()
    }

    pub fn has_batchnorm(&self) -> bool {
        self.nodes
            .iter()
            .any(|n| matches!(n.kind, LayerKind::BatchNorm(_)))
    }

    /// Plain-text table: node id, kind, per-sample output shape, parameters.
    pub fn summary(&self) -> String {
        let rows: Vec<(String, String, String, usize)> = self
            .order
            .iter()
            .map(|&i| {
                let n = &self.nodes[i];
                let s = self.shapes[i];
                let kind = match &n.kind {
                    LayerKind::Conv(c) => format!("conv{}x{}/s{}", c.kernel, c.kernel, c.stride),
                    LayerKind::MaxPool(p) => {
                        format!("maxpool{}x{}/s{}", p.kernel, p.kernel, p.stride)
                    }
                    LayerKind::Dropout(d) => format!("dropout(p={})", d.p),
                    k => k.name().to_string(),
                };
                (
                    n.id.clone(),
                    kind,
                    format!("{}x{}x{}", s.c, s.h, s.w),
                    self.node_param_count(i),
                )
            })
            .collect();
        let w_id = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(4);
        let w_kind = rows.iter().map(|r| r.1.len()).max().unwrap_or(0).max(4);
        let w_shape = rows.iter().map(|r| r.2.len()).max().unwrap_or(0).max(5);
        let mut out = String::new();
        let i = self.input_shape;
        let _ = writeln!(out, "input {}x{}x{}", i.c, i.h, i.w);
        let _ = writeln!(
            out,
            "{:<w_id$}  {:<w_kind$}  {:<w_shape$}  {:>10}",
            "node", "kind", "shape", "params"
        );
        for (id, kind, shape, params) in &rows {
            let _ = writeln!(
                out,
                "{id:<w_id$}  {kind:<w_kind$}  {shape:<w_shape$}  {params:>10}"
            );
        }
        let total: usize = rows.iter().map(|r| r.3).sum();
        let _ = writeln!(
            out,
            "{:<w_id$}  {:<w_kind$}  {:<w_shape$}  {total:>10}",
            "total", "", ""
        );
        out
    }
}

impl fmt::Display for NetGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.summary())
    }
}

/// Kahn's algorithm; among ready nodes the smallest id goes first.
fn topo_order(nodes: &[LayerNode], sources: &[Vec<Option<usize>>]) -> Result<Vec<usize>> {
    let mut indegree: Vec<usize> = sources
        .iter()
        .map(|s| s.iter().filter(|x| x.is_some()).count())
        .collect();
    let mut consumers = vec![Vec::new(); nodes.len()];
    for (i, src) in sources.iter().enumerate() {
        for j in src.iter().flatten() {
            consumers[*j].push(i);
        }
    }
    let mut ready: BTreeSet<(&str, usize)> = indegree
        .iter()
        .enumerate()
        .filter(|(_, d)| **d == 0)
        .map(|(i, _)| (nodes[i].id.as_str(), i))
        .collect();
    let mut order = Vec::with_capacity(nodes.len());
    while let Some(first) = ready.pop_first() {
        let i = first.1;
        order.push(i);
        for &c in &consumers[i] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.insert((nodes[c].id.as_str(), c));
            }
        }
    }
    if order.len() != nodes.len() {
        let stuck = (0..nodes.len())
            .filter(|i| !order.contains(i))
            .map(|i| nodes[i].id.as_str())
            .min()
            .unwrap_or("?");
        return Err(Error::graph(stuck, "graph contains a cycle"));
    }
    Ok(order)
}

fn node_output_shape(kind: &LayerKind, ins: &[Shape4]) -> Result<Shape4> {
    let x = ins[0];
    match kind {
        LayerKind::Conv(spec) => spec.output_shape(x),
        LayerKind::MaxPool(spec) => spec.output_shape(x),
        LayerKind::Gap => Ok(Shape4::new(x.n, x.c, 1, 1)),
        LayerKind::BatchNorm(spec) => {
            spec.validate()?;
            if spec.channels != x.c {
                return Err(Error::shape(format!(
                    "batchnorm over {} channels given {} channels",
                    spec.channels, x.c
                )));
            }
            Ok(x)
        }
        LayerKind::Dropout(spec) => spec.validate().map(|_| x),
        LayerKind::Lrn(spec) => spec.validate().map(|_| x),
        LayerKind::Dense { units } => {
            if *units == 0 {
                return Err(Error::Parameter(
                    "dense layer needs at least one unit".into(),
                ));
            }
            Ok(Shape4::new(x.n, *units, 1, 1))
        }
        LayerKind::Relu => Ok(x),
        LayerKind::SoftmaxCe => {
            if x.sample_len() < 2 {
                return Err(Error::shape("softmax-ce needs at least two classes"));
            }
            Ok(Shape4::new(x.n, 1, 1, 1))
        }
        LayerKind::Concat => {
            for s in ins {
                if (s.h, s.w) != (x.h, x.w) {
                    return Err(Error::shape(format!(
                        "concat inputs disagree spatially: {}x{} vs {}x{}",
                        x.h, x.w, s.h, s.w
                    )));
                }
            }
            Ok(Shape4::new(x.n, ins.iter().map(|s| s.c).sum(), x.h, x.w))
        }
        LayerKind::Flatten => Ok(Shape4::new(x.n, x.sample_len(), 1, 1)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv(c_in: usize, c_out: usize, k: usize, s: usize) -> LayerKind {
        LayerKind::Conv(Conv2dSpec::same(c_in, c_out, k, s))
    }

    #[test]
    fn single_conv_shape() {
        let mut b = GraphBuilder::new(Shape4::new(1, 3, 512, 512));
        b.add("conv", conv(3, 4, 7, 2), &[INPUT]);
        b.add("gap", LayerKind::Gap, &["conv"]);
        b.add("loss", LayerKind::SoftmaxCe, &["gap"]);
        let g = b.build("loss").unwrap();
        assert_eq!(g.shape_of("conv"), Some(Shape4::new(1, 4, 256, 256)));
        let table = g.infer_shapes().unwrap();
        assert_eq!(table[0], ("conv".to_string(), Shape4::new(1, 4, 256, 256)));
    }

    #[test]
    fn errors_name_the_node() {
        let mut b = GraphBuilder::new(Shape4::new(1, 1, 8, 8));
        b.add("a", conv(1, 2, 3, 1), &[INPUT]);
        b.add("b", conv(1, 2, 3, 2), &[INPUT]);
        b.add("join", LayerKind::Concat, &["a", "b"]);
        b.add("loss", LayerKind::SoftmaxCe, &["join"]);
        match b.build("loss") {
            Err(Error::Graph { node, .. }) => assert_eq!(node, "join"),
            other => panic!("{other:?}"),
        }

        let mut b = GraphBuilder::new(Shape4::new(1, 1, 8, 8));
        b.add("a", LayerKind::Relu, &["nowhere"]);
        b.add("loss", LayerKind::SoftmaxCe, &["a"]);
        assert!(matches!(b.build("loss"), Err(Error::Graph { node, .. }) if node == "a"));

        let mut b = GraphBuilder::new(Shape4::new(1, 1, 8, 8));
        b.add("a", LayerKind::Relu, &["b"]);
        b.add("b", LayerKind::Relu, &["a"]);
        b.add("loss", LayerKind::SoftmaxCe, &["b"]);
        assert!(matches!(b.build("loss"), Err(Error::Graph { msg, .. }) if msg.contains("cycle")));

        let mut b = GraphBuilder::new(Shape4::new(1, 1, 2, 2));
        b.add("big", conv(1, 1, 7, 1), &[INPUT]);
        assert!(b.clone().build("big").is_err());
        let mut b2 = b;
        b2.add("pool", LayerKind::MaxPool(PoolSpec::new(5, 1)), &[INPUT]);
        b2.add("loss", LayerKind::SoftmaxCe, &["pool"]);
        assert!(matches!(b2.build("loss"), Err(Error::Graph { .. })));
    }

    #[test]
    fn only_concat_takes_many_inputs() {
        let mut b = GraphBuilder::new(Shape4::new(1, 2, 4, 4));
        b.add("r", LayerKind::Relu, &[INPUT, INPUT]);
        b.add("loss", LayerKind::SoftmaxCe, &["r"]);
        assert!(b.build("loss").is_err());
    }

    #[test]
    fn ready_nodes_run_in_id_order() {
        let mut b = GraphBuilder::new(Shape4::new(1, 2, 4, 4));
        b.add("z", LayerKind::Relu, &[INPUT]);
        b.add("a", LayerKind::Relu, &[INPUT]);
        b.add("cat", LayerKind::Concat, &["z", "a"]);
        b.add("flat", LayerKind::Flatten, &["cat"]);
        b.add("loss", LayerKind::SoftmaxCe, &["flat"]);
        let g = b.build("loss").unwrap();
        let ids: Vec<&str> = g
            .order()
            .iter()
            .map(|&i| g.nodes()[i].id.as_str())
            .collect();
        assert_eq!(ids, ["a", "z", "cat", "flat", "loss"]);
    }
}

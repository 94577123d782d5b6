//! Composite sub-networks: the inception block and the transition block.

use crate::error::{Error, Result};
use crate::layers::{BatchNormSpec, Conv2dSpec, PoolSpec};

use super::net::{GraphBuilder, LayerKind};

/// Branch widths of an inception block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InceptionWidths {
    pub b1x1: usize,
    pub r3x3: usize,
    pub b3x3: usize,
    pub r5x5: usize,
    pub b5x5: usize,
    pub pool_proj: usize,
}

impl InceptionWidths {
    pub fn output_channels(&self) -> usize {
        self.b1x1 + self.b3x3 + self.b5x5 + self.pool_proj
    }
}

fn conv_relu(
    b: &mut GraphBuilder,
    id: &str,
    input: &str,
    c_in: usize,
    c_out: usize,
    k: usize,
) -> String {
    let conv = b.add(
        id,
        LayerKind::Conv(Conv2dSpec::same(c_in, c_out, k, 1)),
        &[input],
    );
    b.add(format!("{id}.relu"), LayerKind::Relu, &[&conv])
}

/// Appends an inception block reading from `input` and returns
/// `(concat node id, output channels)`.
///
/// Branches, concatenated in this order: 1x1 conv; 1x1 reduce then 3x3;
/// 1x1 reduce then 5x5; 3x3 stride-1 max pool then 1x1 projection. Every
/// convolution is stride 1 with same padding and is followed by ReLU.
pub fn build_inception_module(
    b: &mut GraphBuilder,
    prefix: &str,
    input: &str,
    in_channels: usize,
    w: InceptionWidths,
) -> Result<(String, usize)> {
    let widths = [w.b1x1, w.r3x3, w.b3x3, w.r5x5, w.b5x5, w.pool_proj];
    if in_channels == 0 || widths.contains(&0) {
        return Err(Error::Parameter(format!(
            "inception widths must all be >= 1, got {w:?} on {in_channels} channels"
        )));
    }
    let b1 = conv_relu(b, &format!("{prefix}.b1"), input, in_channels, w.b1x1, 1);
    let r3 = conv_relu(
        b,
        &format!("{prefix}.b3.reduce"),
        input,
        in_channels,
        w.r3x3,
        1,
    );
    let b3 = conv_relu(b, &format!("{prefix}.b3.conv"), &r3, w.r3x3, w.b3x3, 3);
    let r5 = conv_relu(
        b,
        &format!("{prefix}.b5.reduce"),
        input,
        in_channels,
        w.r5x5,
        1,
    );
    let b5 = conv_relu(b, &format!("{prefix}.b5.conv"), &r5, w.r5x5, w.b5x5, 5);
    let pool = b.add(
        format!("{prefix}.pool"),
        LayerKind::MaxPool(PoolSpec::padded(3, 1, 1)),
        &[input],
    );
    let proj = conv_relu(
        b,
        &format!("{prefix}.pool.proj"),
        &pool,
        in_channels,
        w.pool_proj,
        1,
    );
    let out = b.add(
        format!("{prefix}.concat"),
        LayerKind::Concat,
        &[&b1, &b3, &b5, &proj],
    );
    Ok((out, w.output_channels()))
}

/// Configuration of a transition block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransitionSpec {
    pub filters: usize,
    pub kernels: Vec<usize>,
    pub stride: usize,
    /// Collapse each branch with global average pooling; `false` flattens
    /// the branch feature maps instead (the pooling ablation).
    pub pooled: bool,
}

impl TransitionSpec {
    pub fn new(filters: usize, kernels: &[usize], stride: usize) -> Self {
        TransitionSpec {
            filters,
            kernels: kernels.to_vec(),
            stride,
            pooled: true,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.kernels.is_empty() {
            return Err(Error::Parameter(
                "transition needs at least one kernel size".into(),
            ));
        }
        if self.filters == 0 || self.stride == 0 {
            return Err(Error::Parameter(
                "transition filters and stride must be >= 1".into(),
            ));
        }
        let mut sorted = self.kernels.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.kernels.len() {
            return Err(Error::Parameter(format!(
                "transition kernel sizes must be distinct, got {:?}",
                self.kernels
            )));
        }
        if let Some(k) = sorted.iter().find(|&&k| k % 2 == 0) {
            return Err(Error::Parameter(format!(
                "transition kernel {k} is not odd"
            )));
        }
        Ok(())
    }
}

/// Appends a transition block and returns the id of its output node, a
/// `(|kernels| * F, 1, 1)` vector per sample when pooled.
///
/// One branch per kernel size, in ascending size order:
/// conv (stride `spec.stride`, same padding, no bias) -> batchnorm -> ReLU ->
/// global average pool. The branch vectors are channel-concatenated.
pub fn build_transition_module(
    b: &mut GraphBuilder,
    prefix: &str,
    input: &str,
    in_channels: usize,
    spec: &TransitionSpec,
) -> Result<String> {
    spec.validate()?;
    let mut kernels = spec.kernels.clone();
    kernels.sort_unstable();
    let mut branches = Vec::with_capacity(kernels.len());
    for k in kernels {
        let p = format!("{prefix}.k{k}");
        let conv_spec = Conv2dSpec {
            has_bias: false,
            ..Conv2dSpec::same(in_channels, spec.filters, k, spec.stride)
        };
        let conv = b.add(format!("{p}.conv"), LayerKind::Conv(conv_spec), &[input]);
        let bn = b.add(
            format!("{p}.bn"),
            LayerKind::BatchNorm(BatchNormSpec::new(spec.filters)),
            &[&conv],
        );
        let relu = b.add(format!("{p}.relu"), LayerKind::Relu, &[&bn]);
        let collapse = if spec.pooled {
            b.add(format!("{p}.gap"), LayerKind::Gap, &[&relu])
        } else {
            b.add(format!("{p}.flatten"), LayerKind::Flatten, &[&relu])
        };
        branches.push(collapse);
    }
    let refs: Vec<&str> = branches.iter().map(String::as_str).collect();
    Ok(b.add(format!("{prefix}.concat"), LayerKind::Concat, &refs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::net::INPUT;
    use crate::tensor::Shape4;

    fn finish(mut b: GraphBuilder, out: &str) -> crate::graph::NetGraph {
        b.add("head", LayerKind::Dense { units: 2 }, &[out]);
        b.add("loss", LayerKind::SoftmaxCe, &["head"]);
        b.build("loss").unwrap()
    }

    #[test]
    fn googlenet_first_block_widths() {
        let mut b = GraphBuilder::new(Shape4::new(1, 192, 8, 8));
        let w = InceptionWidths {
            b1x1: 64,
            r3x3: 96,
            b3x3: 128,
            r5x5: 16,
            b5x5: 32,
            pool_proj: 32,
        };
        let (out, c) = build_inception_module(&mut b, "inc", INPUT, 192, w).unwrap();
        assert_eq!(c, 256);
        let g = finish(b, &out);
        assert_eq!(g.shape_of(&out), Some(Shape4::new(1, 256, 8, 8)));
        for branch in [
            "inc.b1.relu",
            "inc.b3.conv.relu",
            "inc.b5.conv.relu",
            "inc.pool.proj.relu",
        ] {
            let s = g.shape_of(branch).unwrap();
            assert_eq!((s.h, s.w), (8, 8), "{branch}");
        }
    }

    #[test]
    fn minimal_inception() {
        let mut b = GraphBuilder::new(Shape4::new(1, 1, 5, 5));
        let ones = InceptionWidths {
            b1x1: 1,
            r3x3: 1,
            b3x3: 1,
            r5x5: 1,
            b5x5: 1,
            pool_proj: 1,
        };
        let (out, c) = build_inception_module(&mut b, "inc", INPUT, 1, ones).unwrap();
        assert_eq!(c, 4);
        assert_eq!(finish(b, &out).shape_of(&out).unwrap().c, 4);

        let mut b = GraphBuilder::new(Shape4::new(1, 1, 5, 5));
        assert!(
            build_inception_module(&mut b, "x", INPUT, 1, InceptionWidths { b5x5: 0, ..ones })
                .is_err()
        );
    }

    fn transition_len(filters: usize, kernels: &[usize]) -> usize {
        let mut b = GraphBuilder::new(Shape4::new(1, 4, 8, 8));
        let out = build_transition_module(
            &mut b,
            "t",
            INPUT,
            4,
            &TransitionSpec::new(filters, kernels, 2),
        )
        .unwrap();
        finish(b, &out).shape_of(&out).unwrap().sample_len()
    }

    #[test]
    fn transition_output_lengths() {
        assert_eq!(transition_len(1024, &[3, 5, 7]), 3072);
        assert_eq!(transition_len(2048, &[3, 5, 7]), 6144);
        assert_eq!(transition_len(1, &[3]), 1);
    }

    #[test]
    fn transition_branch_shapes() {
        let mut b = GraphBuilder::new(Shape4::new(1, 6, 8, 8));
        let out = build_transition_module(
            &mut b,
            "t",
            INPUT,
            6,
            &TransitionSpec::new(5, &[7, 3, 5], 2),
        )
        .unwrap();
        let g = finish(b, &out);
        for k in [3, 5, 7] {
            assert_eq!(
                g.shape_of(&format!("t.k{k}.conv")),
                Some(Shape4::new(1, 5, 4, 4))
            );
            assert_eq!(
                g.shape_of(&format!("t.k{k}.gap")),
                Some(Shape4::new(1, 5, 1, 1))
            );
        }
        let concat = g.node(&out).unwrap();
        assert_eq!(concat.inputs, ["t.k3.gap", "t.k5.gap", "t.k7.gap"]);
    }

    #[test]
    fn unpooled_transition_is_larger() {
        let mut b = GraphBuilder::new(Shape4::new(1, 6, 8, 8));
        let spec = TransitionSpec {
            pooled: false,
            ..TransitionSpec::new(5, &[3, 5, 7], 2)
        };
        let out = build_transition_module(&mut b, "t", INPUT, 6, &spec).unwrap();
        let g = finish(b, &out);
        assert_eq!(g.shape_of(&out).unwrap().sample_len(), 3 * 5 * 16);
    }

    #[test]
    fn transition_rejects_bad_kernels() {
        let mut b = GraphBuilder::new(Shape4::new(1, 1, 8, 8));
        for kernels in [&[][..], &[3, 3], &[4]] {
            let r =
                build_transition_module(&mut b, "t", INPUT, 1, &TransitionSpec::new(2, kernels, 2));
            assert!(r.is_err(), "{kernels:?}");
        }
    }
}

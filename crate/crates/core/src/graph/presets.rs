//! AlexNet- and ZFNet-style experiment networks and their regularizer variants.
//!
//! Preset names are `<arch>[+<variant>...]`, e.g. `alexnet_mini+transition`
//! or `zfnet_mini+transition+lrn`. Architectures:
//!
//! | arch           | conv stages (filters/kernel/stride, pool)                          | FC      | transition F |
//! |----------------|--------------------------------------------------------------------|---------|--------------|
//! | `alexnet_mini` | 8/7/1 P, 16/5/1 P, 24/3/1, 24/3/1, 16/3/1 P                         | 64, 64  | 16           |
//! | `zfnet_mini`   | 12/5/1 P, 24/5/1 P, 32/3/1, 32/3/1, 24/3/1 P                        | 96, 96  | 32           |
//! | `alexnet`      | 96/11/4 Q, 256/5/1 Q, 384/3/1, 384/3/1, 256/3/1 Q                   | 4096 x2 | 1024         |
//! | `zfnet`        | 96/7/2 Q, 256/5/2 Q, 384/3/1, 384/3/1, 256/3/1 Q                    | 4096 x2 | 2048         |
//!
//! `P` is a 3x3 stride-2 max pool with padding 1 (halves the map, rounding
//! up); `Q` is the unpadded 3x3 stride-2 pool. Every convolution uses same
//! padding and ReLU. The mini tables target 32x32 to 64x64 inputs; the full
//! tables expect roughly 224x224.
//!
//! Variants:
//! - `transition`: a transition block (kernels 3, 5, 7, stride 2) between
//!   the last pool and the first FC layer, replacing the flatten.
//! - `transition_nogap`: the same block with each branch flattened instead
//!   of average pooled.
//! - `dropout`: dropout with p = 0.5 after each hidden FC layer.
//! - `lrn`: cross-channel LRN after each max pool.
//! - `baseline`: none of the above.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::layers::{Conv2dSpec, DropoutSpec, LrnSpec, PoolSpec};
use crate::tensor::Shape4;

use super::modules::{build_transition_module, TransitionSpec};
use super::net::{GraphBuilder, LayerKind, NetGraph, INPUT};

/// Id of the first fully connected layer in every preset.
pub const FIRST_FC: &str = "fc6";
/// Kernel sizes of the transition branches.
pub const TRANSITION_KERNELS: [usize; 3] = [3, 5, 7];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Arch {
    AlexNetMini,
    ZfNetMini,
    AlexNet,
    ZfNet,
}

impl Arch {
    pub const ALL: [Arch; 4] = [
        Arch::AlexNetMini,
        Arch::ZfNetMini,
        Arch::AlexNet,
        Arch::ZfNet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Arch::AlexNetMini => "alexnet_mini",
            Arch::ZfNetMini => "zfnet_mini",
            Arch::AlexNet => "alexnet",
            Arch::ZfNet => "zfnet",
        }
    }

    fn table(self) -> ArchTable {
        let p = Some(PoolSpec::padded(3, 2, 1));
        let q = Some(PoolSpec::new(3, 2));
        let st = |filters, kernel, stride, pool| Stage {
            filters,
            kernel,
            stride,
            pool,
        };
        match self {
            Arch::AlexNetMini => ArchTable {
                stages: vec![
                    st(8, 7, 1, p),
                    st(16, 5, 1, p),
                    st(24, 3, 1, None),
                    st(24, 3, 1, None),
                    st(16, 3, 1, p),
                ],
                fc: [64, 64],
                transition_filters: 16,
            },
            Arch::ZfNetMini => ArchTable {
                stages: vec![
                    st(12, 5, 1, p),
                    st(24, 5, 1, p),
                    st(32, 3, 1, None),
                    st(32, 3, 1, None),
                    st(24, 3, 1, p),
                ],
                fc: [96, 96],
                transition_filters: 32,
            },
            Arch::AlexNet => ArchTable {
                stages: vec![
                    st(96, 11, 4, q),
                    st(256, 5, 1, q),
                    st(384, 3, 1, None),
                    st(384, 3, 1, None),
                    st(256, 3, 1, q),
                ],
                fc: [4096, 4096],
                transition_filters: 1024,
            },
            Arch::ZfNet => ArchTable {
                stages: vec![
                    st(96, 7, 2, q),
                    st(256, 5, 2, q),
                    st(384, 3, 1, None),
                    st(384, 3, 1, None),
                    st(256, 3, 1, q),
                ],
                fc: [4096, 4096],
                transition_filters: 2048,
            },
        }
    }

    /// Transition filters per branch for this architecture.
    pub fn transition_filters(self) -> usize {
        self.table().transition_filters
    }
}

struct Stage {
    filters: usize,
    kernel: usize,
    stride: usize,
    pool: Option<PoolSpec>,
}

struct ArchTable {
    stages: Vec<Stage>,
    fc: [usize; 2],
    transition_filters: usize,
}

/// Regularizer switches applied on top of an architecture.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Variant {
    pub transition: bool,
    /// Replace the transition block's average pooling with flattening.
    pub nogap: bool,
    pub dropout: bool,
    pub lrn: bool,
}

impl Variant {
    pub const BASELINE: Variant = Variant {
        transition: false,
        nogap: false,
        dropout: false,
        lrn: false,
    };
    pub const TRANSITION: Variant = Variant {
        transition: true,
        ..Variant::BASELINE
    };
    pub const TRANSITION_NOGAP: Variant = Variant {
        transition: true,
        nogap: true,
        ..Variant::BASELINE
    };
    pub const DROPOUT: Variant = Variant {
        dropout: true,
        ..Variant::BASELINE
    };
    pub const LRN: Variant = Variant {
        lrn: true,
        ..Variant::BASELINE
    };

    /// The five variants compared side by side.
    pub fn comparison_set() -> [Variant; 5] {
        [
            Variant::BASELINE,
            Variant::TRANSITION,
            Variant::DROPOUT,
            Variant::LRN,
            Variant::TRANSITION_NOGAP,
        ]
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.transition {
            parts.push(if self.nogap {
                "transition_nogap"
            } else {
                "transition"
            });
        }
        if self.dropout {
            parts.push("dropout");
        }
        if self.lrn {
            parts.push("lrn");
        }
        if parts.is_empty() {
            parts.push("baseline");
        }
        f.write_str(&parts.join("+"))
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut v = Variant::default();
        for tok in s.split('+').map(str::trim).filter(|t| !t.is_empty()) {
            match tok {
                "baseline" => {}
                "transition" => v.transition = true,
                "transition_nogap" | "nogap" => {
                    v.transition = true;
                    v.nogap = true;
                }
                "dropout" => v.dropout = true,
                "lrn" => v.lrn = true,
                other => return Err(Error::Config(format!("unknown variant '{other}'"))),
            }
        }
        Ok(v)
    }
}

/// An architecture plus variant, addressable by name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Preset {
    pub arch: Arch,
    pub variant: Variant,
    /// Upper bound applied to every channel and FC width (for small clones).
    pub width_cap: Option<usize>,
}

impl Preset {
    pub fn new(arch: Arch, variant: Variant) -> Self {
        Preset {
            arch,
            variant,
            width_cap: None,
        }
    }

    /// Copy with every width capped at `cap`.
    pub fn capped(self, cap: usize) -> Self {
        Preset {
            width_cap: Some(cap),
            ..self
        }
    }

    pub fn transition_filters(&self) -> usize {
        self.cap(self.arch.transition_filters())
    }

    fn cap(&self, width: usize) -> usize {
        self.width_cap.map_or(width, |c| width.min(c))
    }

    /// Builds the network for `num_classes` outputs on a per-sample
    /// `input` shape (batch dimension ignored).
    pub fn build(&self, num_classes: usize, input: Shape4) -> Result<NetGraph> {
        if num_classes < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        let table = self.arch.table();
        let mut b = GraphBuilder::new(input);
        let mut cur = INPUT.to_string();
        let mut channels = input.c;
        for (i, stage) in table.stages.iter().enumerate() {
            let n = i + 1;
            let filters = self.cap(stage.filters);
            let conv = b.add(
                format!("conv{n}"),
                LayerKind::Conv(Conv2dSpec::same(
                    channels,
                    filters,
                    stage.kernel,
                    stage.stride,
                )),
                &[&cur],
            );
            cur = b.add(format!("conv{n}.relu"), LayerKind::Relu, &[&conv]);
            channels = filters;
            if let Some(pool) = stage.pool {
                cur = b.add(format!("pool{n}"), LayerKind::MaxPool(pool), &[&cur]);
                if self.variant.lrn {
                    cur = b.add(
                        format!("pool{n}.lrn"),
                        LayerKind::Lrn(LrnSpec::default()),
                        &[&cur],
                    );
                }
            }
        }
        cur = if self.variant.transition {
            let spec = TransitionSpec {
                pooled: !self.variant.nogap,
                ..TransitionSpec::new(self.transition_filters(), &TRANSITION_KERNELS, 2)
            };
            build_transition_module(&mut b, "transition", &cur, channels, &spec)?
        } else {
            b.add("flatten", LayerKind::Flatten, &[&cur])
        };
        for (i, &units) in table.fc.iter().enumerate() {
            let id = format!("fc{}", 6 + i);
            let fc = b.add(
                &id,
                LayerKind::Dense {
                    units: self.cap(units),
                },
                &[&cur],
            );
            cur = b.add(format!("{id}.relu"), LayerKind::Relu, &[&fc]);
            if self.variant.dropout {
                cur = b.add(
                    format!("{id}.dropout"),
                    LayerKind::Dropout(DropoutSpec { p: 0.5 }),
                    &[&cur],
                );
            }
        }
        let logits = b.add("fc8", LayerKind::Dense { units: num_classes }, &[&cur]);
        b.add("loss", LayerKind::SoftmaxCe, &[&logits]);
        b.build("loss")
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}+{}", self.arch.name(), self.variant)
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (arch, variant) = s.split_once('+').unwrap_or((s, ""));
        let arch = Arch::ALL
            .into_iter()
            .find(|a| a.name() == arch.trim())
            .ok_or_else(|| Error::Config(format!("unknown preset '{s}'")))?;
        Ok(Preset::new(arch, variant.parse()?))
    }
}

/// Parses a preset name and builds its graph.
pub fn build_preset(name: &str, num_classes: usize, input: Shape4) -> Result<NetGraph> {
    name.parse::<Preset>()?.build(num_classes, input)
}

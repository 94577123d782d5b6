//! Self-checks: finite-difference gradient checks for every layer kind and
//! every preset, and the GEMM-versus-reference convolution oracle.
//!
//! Layer checks use the scalar objective `L = sum(y * r)` with a fixed
//! random projection `r`, so the upstream gradient handed to the backward
//! rule is `r` itself. Every input and parameter coordinate is checked.
//! Network checks differentiate the mean cross-entropy of a small batch and
//! sample a few coordinates per parameter slot.

use std::fmt;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::graph::{
    backward_pass, build_inception_module, forward_pass, init_parameters, Arch, GraphBuilder,
    InceptionWidths, LayerKind, NetGraph, ParameterStore, Preset, Variant, INPUT,
};
use crate::layers::gradcheck::{
    finite_difference_at, relative_error_slices, relative_error_with_floor,
};
use crate::layers::{
    batchnorm2d_forward, concat_channels, conv2d_forward, conv2d_reference, dense_forward,
    dropout_forward, flatten, global_avg_pool, layer_backward, lrn_forward, maxpool_forward, relu,
    softmax_cross_entropy, BatchNormSpec, Context, Conv2dSpec, DropoutSpec, LrnSpec, Mode,
    PoolSpec, RunningStats,
};
use crate::tensor::{sample_normal, Rng, Shape4, Tensor};

const STEP: f64 = 1e-5;

/// Scale below which network-check gradients count as vanishing. A whole
/// network's loss carries more roundoff than one layer's (batchnorm divides
/// by small batch deviations), and central differences of gradients that
/// are zero by construction, such as a bias feeding a 1x1 map that
/// batchnorm re-centres, come out near 2e-10 instead of 1e-11. Real
/// gradients of the checked clones are 1e-5 and up.
pub const NETWORK_GRADIENT_FLOOR: f64 = 1e-5;

/// Every layer kind the engine implements, in report order.
pub const LAYER_KINDS: [&str; 11] = [
    "conv2d",
    "maxpool",
    "gap",
    "batchnorm",
    "dropout",
    "lrn",
    "dense",
    "relu",
    "concat",
    "flatten",
    "softmax-ce",
];

#[derive(Clone, Debug)]
pub struct GradcheckOptions {
    /// Bound for single-layer checks.
    pub layer_tolerance: f64,
    /// Bound for whole-network checks, where errors compound across layers.
    pub network_tolerance: f64,
    /// Coordinates sampled per parameter slot in network checks.
    pub coords_per_slot: usize,
    pub seed: u64,
    /// Test hook: skews the analytic gradients of the named layer kind so
    /// the harness can be shown to catch a broken backward rule.
    pub corrupt: Option<String>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            layer_tolerance: 1e-5,
            network_tolerance: 1e-4,
            coords_per_slot: 4,
            seed: 0,
            corrupt: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<40} max_rel_err={:.3e} tol={:.0e}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.max_rel_error,
            self.tolerance
        )
    }
}

#[derive(Clone, Debug)]
pub struct GradcheckReport {
    pub checks: Vec<CheckResult>,
    pub elapsed: Duration,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed())
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        let failed = self.failures().count();
        write!(
            f,
            "{} checks, {failed} failed, {:.1}s",
            self.checks.len(),
            self.elapsed.as_secs_f64()
        )
    }
}

/// Layer checks followed by network checks.
pub fn run_gradcheck(opts: &GradcheckOptions) -> Result<GradcheckReport> {
    let start = Instant::now();
    let mut checks = layer_checks(opts)?;
    checks.extend(network_checks(opts)?);
    Ok(GradcheckReport {
        checks,
        elapsed: start.elapsed(),
    })
}

type Forward = dyn Fn(&[Tensor], &[Tensor]) -> Result<(Tensor, Option<Context>)>;

struct LayerCase {
    kind: &'static str,
    inputs: Vec<Tensor>,
    params: Vec<Tensor>,
    forward: Box<Forward>,
}

fn skew(values: &mut [f64]) {
    for v in values {
        *v = *v * 1.01 + 1e-3;
    }
}

fn check_layer(case: &LayerCase, rng: &mut Rng, corrupt: bool) -> Result<f64> {
    let (y, ctx) = (case.forward)(&case.inputs, &case.params)?;
    let r = sample_normal(rng, y.shape(), 0.0, 1.0)?;
    let objective = |inputs: &[Tensor], params: &[Tensor]| -> f64 {
        let (y, _) = (case.forward)(inputs, params).expect("forward succeeded once");
        y.as_slice()
            .iter()
            .zip(r.as_slice())
            .map(|(a, b)| a * b)
            .sum()
    };
    let param_refs: Vec<&Tensor> = case.params.iter().collect();
    let grads = layer_backward(ctx.as_ref(), &param_refs, &r)?;
    let mut worst = 0.0f64;
    let all = |t: &Tensor| (0..t.len()).collect::<Vec<_>>();
    for (i, x) in case.inputs.iter().enumerate() {
        let numeric = finite_difference_at(
            |p| {
                let mut ins = case.inputs.clone();
                ins[i] = p.clone();
                objective(&ins, &case.params)
            },
            x,
            STEP,
            &all(x),
        )?;
        let mut analytic = grads.inputs[i].as_slice().to_vec();
        if corrupt {
            skew(&mut analytic);
        }
        worst = worst.max(relative_error_slices(&analytic, &numeric));
    }
    for (i, w) in case.params.iter().enumerate() {
        let numeric = finite_difference_at(
            |p| {
                let mut ps = case.params.clone();
                ps[i] = p.clone();
                objective(&case.inputs, &ps)
            },
            w,
            STEP,
            &all(w),
        )?;
        let mut analytic = grads.params[i].as_slice().to_vec();
        if corrupt {
            skew(&mut analytic);
        }
        worst = worst.max(relative_error_slices(&analytic, &numeric));
    }
    Ok(worst)
}

/// Distinct values at least 0.05 apart in random order, so a finite
/// difference step never reorders a max-pool window.
fn distinct(rng: &mut Rng, shape: Shape4) -> Result<Tensor> {
    let mut v: Vec<f64> = (0..shape.len()).map(|i| i as f64 * 0.05 - 1.0).collect();
    rng.shuffle(&mut v);
    Tensor::new(shape, v)
}

/// Normal samples pushed at least 0.1 away from zero (ReLU's kink).
fn off_zero(rng: &mut Rng, shape: Shape4) -> Result<Tensor> {
    Ok(sample_normal(rng, shape, 0.0, 1.0)?.map(|v| v + 0.1f64.copysign(v)))
}

fn layer_cases(rng: &mut Rng) -> Result<Vec<LayerCase>> {
    let mut cases = Vec::new();
    let normal = |rng: &mut Rng, s: Shape4| sample_normal(rng, s, 0.0, 1.0);

    for spec in [
        Conv2dSpec {
            padding: 1,
            ..Conv2dSpec::same(3, 4, 3, 2)
        },
        Conv2dSpec::same(2, 3, 5, 1),
    ] {
        let x = normal(rng, Shape4::new(2, spec.in_channels, 7, 6))?;
        let w = normal(rng, spec.weight_shape())?;
        let b = normal(rng, Shape4::new(1, spec.out_channels, 1, 1))?;
        cases.push(LayerCase {
            kind: "conv2d",
            inputs: vec![x],
            params: vec![w, b],
            forward: Box::new(move |i, p| {
                let (y, c) = conv2d_forward(&i[0], &p[0], Some(&p[1]), &spec)?;
                Ok((y, Some(Context::Conv(c))))
            }),
        });
    }

    for pool in [PoolSpec::new(2, 2), PoolSpec::padded(3, 2, 1)] {
        cases.push(LayerCase {
            kind: "maxpool",
            inputs: vec![distinct(rng, Shape4::new(2, 2, 5, 6))?],
            params: vec![],
            forward: Box::new(move |i, _| {
                let (y, c) = maxpool_forward(&i[0], &pool)?;
                Ok((y, Some(Context::MaxPool(c))))
            }),
        });
    }

    cases.push(LayerCase {
        kind: "gap",
        inputs: vec![normal(rng, Shape4::new(2, 3, 4, 5))?],
        params: vec![],
        forward: Box::new(|i, _| {
            let y = global_avg_pool(&i[0])?;
            Ok((
                y,
                Some(Context::Gap {
                    input: i[0].shape(),
                }),
            ))
        }),
    });

    let bn = BatchNormSpec::new(3);
    let gamma = sample_normal(rng, Shape4::new(1, 3, 1, 1), 1.0, 0.2)?;
    let beta = normal(rng, Shape4::new(1, 3, 1, 1))?;
    cases.push(LayerCase {
        kind: "batchnorm",
        inputs: vec![sample_normal(rng, Shape4::new(4, 3, 3, 2), 0.5, 2.0)?],
        params: vec![gamma, beta],
        forward: Box::new(move |i, p| {
            let mut running = RunningStats::new(bn.channels);
            let (y, c) =
                batchnorm2d_forward(&i[0], &p[0], &p[1], &mut running, &bn, Mode::Training)?;
            Ok((y, c.map(Context::BatchNorm)))
        }),
    });

    let mask_seed = rng.next_u64();
    cases.push(LayerCase {
        kind: "dropout",
        inputs: vec![normal(rng, Shape4::new(3, 4, 2, 2))?],
        params: vec![],
        forward: Box::new(move |i, _| {
            // A fresh generator per call keeps the mask fixed.
            let spec = DropoutSpec { p: 0.3 };
            let (y, c) = dropout_forward(&i[0], &spec, Mode::Training, &mut Rng::new(mask_seed))?;
            Ok((y, c.map(Context::Dropout)))
        }),
    });

    // A large alpha makes the cross-channel coupling visible to the check.
    let lrn = LrnSpec {
        alpha: 0.5,
        ..LrnSpec::default()
    };
    cases.push(LayerCase {
        kind: "lrn",
        inputs: vec![normal(rng, Shape4::new(2, 7, 3, 2))?],
        params: vec![],
        forward: Box::new(move |i, _| {
            let (y, c) = lrn_forward(&i[0], &lrn)?;
            Ok((y, Some(Context::Lrn(c))))
        }),
    });

    cases.push(LayerCase {
        kind: "dense",
        inputs: vec![normal(rng, Shape4::new(3, 2, 2, 2))?],
        params: vec![
            normal(rng, Shape4::new(1, 1, 8, 5))?,
            normal(rng, Shape4::new(1, 5, 1, 1))?,
        ],
        forward: Box::new(|i, p| {
            let (y, c) = dense_forward(&i[0], &p[0], &p[1])?;
            Ok((y, Some(Context::Dense(c))))
        }),
    });

    cases.push(LayerCase {
        kind: "relu",
        inputs: vec![off_zero(rng, Shape4::new(2, 3, 3, 3))?],
        params: vec![],
        forward: Box::new(|i, _| {
            Ok((
                relu(&i[0]),
                Some(Context::Relu {
                    input: i[0].clone(),
                }),
            ))
        }),
    });

    cases.push(LayerCase {
        kind: "concat",
        inputs: vec![
            normal(rng, Shape4::new(2, 1, 3, 3))?,
            normal(rng, Shape4::new(2, 3, 3, 3))?,
            normal(rng, Shape4::new(2, 2, 3, 3))?,
        ],
        params: vec![],
        forward: Box::new(|i, _| {
            let refs: Vec<&Tensor> = i.iter().collect();
            let channels = i.iter().map(|t| t.shape().c).collect();
            Ok((concat_channels(&refs)?, Some(Context::Concat { channels })))
        }),
    });

    cases.push(LayerCase {
        kind: "flatten",
        inputs: vec![normal(rng, Shape4::new(2, 3, 2, 4))?],
        params: vec![],
        forward: Box::new(|i, _| {
            Ok((
                flatten(&i[0]),
                Some(Context::Flatten {
                    input: i[0].shape(),
                }),
            ))
        }),
    });

    Ok(cases)
}

fn check_softmax_ce(rng: &mut Rng, corrupt: bool) -> Result<f64> {
    let logits = sample_normal(rng, Shape4::new(4, 3, 1, 1), 0.0, 2.0)?;
    let labels = [0, 2, 1, 2];
    let mut analytic = softmax_cross_entropy(&logits, &labels)?.grad.into_vec();
    if corrupt {
        skew(&mut analytic);
    }
    let numeric = finite_difference_at(
        |p| {
            softmax_cross_entropy(p, &labels)
                .expect("valid labels")
                .loss
        },
        &logits,
        STEP,
        &(0..logits.len()).collect::<Vec<_>>(),
    )?;
    Ok(relative_error_slices(&analytic, &numeric))
}

/// One result per entry of [`LAYER_KINDS`]; a kind with several
/// configurations reports its worst case.
pub fn layer_checks(opts: &GradcheckOptions) -> Result<Vec<CheckResult>> {
    let mut rng = Rng::new(opts.seed).fork(1);
    let corrupt = |kind: &str| opts.corrupt.as_deref() == Some(kind);
    let mut worst = vec![0.0f64; LAYER_KINDS.len()];
    let slot = |kind: &str| {
        LAYER_KINDS
            .iter()
            .position(|k| *k == kind)
            .expect("known kind")
    };
    for case in layer_cases(&mut rng)? {
        let err = check_layer(&case, &mut rng, corrupt(case.kind))
            .map_err(|e| Error::graph(case.kind, e.to_string()))?;
        let i = slot(case.kind);
        worst[i] = worst[i].max(err);
    }
    let i = slot("softmax-ce");
    worst[i] = check_softmax_ce(&mut rng, corrupt("softmax-ce"))?;
    Ok(LAYER_KINDS
        .iter()
        .zip(worst)
        .map(|(kind, err)| CheckResult {
            name: format!("layer {kind}"),
            max_rel_error: err,
            tolerance: opts.layer_tolerance,
        })
        .collect())
}

fn loss_at(g: &NetGraph, store: &ParameterStore, x: &Tensor, labels: &[usize]) -> Result<f64> {
    let mut s = store.clone();
    let fwd = forward_pass(g, &mut s, x, Some(labels), Mode::Training, &mut Rng::new(0))?;
    Ok(fwd.loss.expect("labels supplied"))
}

/// Largest relative error between backpropagated and central-difference
/// gradients of the mean loss, over `per_slot` sampled coordinates of every
/// parameter slot and of the input. Dropout masks are drawn from a fixed
/// generator so every evaluation sees the same network.
pub fn check_graph_gradients(
    g: &NetGraph,
    store: &ParameterStore,
    x: &Tensor,
    labels: &[usize],
    per_slot: usize,
    seed: u64,
) -> Result<f64> {
    let mut s = store.clone();
    let fwd = forward_pass(g, &mut s, x, Some(labels), Mode::Training, &mut Rng::new(0))?;
    s.zero_grads();
    let dx = backward_pass(g, &mut s, &fwd)?;
    let mut coord_rng = Rng::new(seed);
    let mut pick = |len: usize| -> Vec<usize> {
        (0..per_slot.min(len))
            .map(|_| coord_rng.below(len))
            .collect()
    };
    let mut worst = 0.0f64;
    for (name, slot) in store.slots() {
        let coords = pick(slot.value.len());
        let mut failure = None;
        let numeric = finite_difference_at(
            |p| {
                let mut probe = store.clone();
                probe.get_mut(name).expect("slot exists").value = p.clone();
                loss_at(g, &probe, x, labels).unwrap_or_else(|e| {
                    failure = Some(e);
                    f64::NAN
                })
            },
            &slot.value,
            STEP,
            &coords,
        )?;
        if let Some(e) = failure {
            return Err(e);
        }
        let grad = &s.get(name).expect("slot exists").grad;
        let analytic: Vec<f64> = coords.iter().map(|&c| grad.as_slice()[c]).collect();
        worst = worst.max(relative_error_with_floor(
            &analytic,
            &numeric,
            NETWORK_GRADIENT_FLOOR,
        ));
    }
    let coords = pick(x.len());
    let numeric = finite_difference_at(
        |p| loss_at(g, store, p, labels).unwrap_or(f64::NAN),
        x,
        STEP,
        &coords,
    )?;
    let analytic: Vec<f64> = coords.iter().map(|&c| dx.as_slice()[c]).collect();
    let err = relative_error_with_floor(&analytic, &numeric, NETWORK_GRADIENT_FLOOR);
    if err.is_nan() {
        return Err(Error::NonFinite(
            "loss evaluation failed during gradient check".into(),
        ));
    }
    Ok(worst.max(err))
}

/// Channel cap used for the small clones in network checks.
pub const CLONE_WIDTH_CAP: usize = 4;

/// Per-sample input of the small clone of `arch`: 3x16x16 for the mini
/// tables; the full tables downsample by 32 before their last pool and need
/// 3x64x64 to keep every map non-empty.
pub fn clone_input(arch: Arch) -> Shape4 {
    match arch {
        Arch::AlexNetMini | Arch::ZfNetMini => Shape4::new(1, 3, 16, 16),
        Arch::AlexNet | Arch::ZfNet => Shape4::new(1, 3, 64, 64),
    }
}

/// Every architecture with every compared variant, plus the transition/LRN
/// combination.
pub fn checked_presets() -> Vec<Preset> {
    let mut v = Vec::new();
    for arch in Arch::ALL {
        for variant in Variant::comparison_set() {
            v.push(Preset::new(arch, variant));
        }
        v.push(Preset::new(
            arch,
            Variant {
                lrn: true,
                ..Variant::TRANSITION
            },
        ));
    }
    v
}

fn inception_graph() -> Result<NetGraph> {
    let mut b = GraphBuilder::new(Shape4::new(1, 3, 6, 6));
    let widths = InceptionWidths {
        b1x1: 2,
        r3x3: 2,
        b3x3: 3,
        r5x5: 1,
        b5x5: 2,
        pool_proj: 2,
    };
    let (out, _) = build_inception_module(&mut b, "inception", INPUT, 3, widths)?;
    let gap = b.add("gap", LayerKind::Gap, &[&out]);
    let fc = b.add("fc", LayerKind::Dense { units: 3 }, &[&gap]);
    b.add("loss", LayerKind::SoftmaxCe, &[&fc]);
    b.build("loss")
}

fn network_check(
    name: String,
    g: &NetGraph,
    num_classes: usize,
    opts: &GradcheckOptions,
    tag: u64,
) -> Result<CheckResult> {
    let root = Rng::new(opts.seed).fork(tag);
    let mut store = init_parameters(g, &mut root.fork(0))?;
    // Zero-initialized offsets can leave a pre-activation exactly on the
    // ReLU kink (e.g. behind a fully dropped layer), where central
    // differences see half the slope and backprop sees none.
    let mut jitter = root.fork(2);
    for (name, slot) in store.slots_mut() {
        if name.ends_with(".bias") || name.ends_with(".beta") {
            slot.value = sample_normal(&mut jitter, slot.value.shape(), 0.0, 0.1)?;
        }
    }
    let batch = 3;
    let x = sample_normal(&mut root.fork(1), g.input_shape().with_n(batch), 0.0, 1.0)?;
    let labels: Vec<usize> = (0..batch).map(|i| i % num_classes).collect();
    let err = check_graph_gradients(g, &store, &x, &labels, opts.coords_per_slot, opts.seed)
        .map_err(|e| Error::graph(name.clone(), e.to_string()))?;
    Ok(CheckResult {
        name,
        max_rel_error: err,
        tolerance: opts.network_tolerance,
    })
}

/// End-to-end checks on small clones of every preset and on an inception
/// block.
pub fn network_checks(opts: &GradcheckOptions) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for (i, preset) in checked_presets().into_iter().enumerate() {
        let g = preset
            .capped(CLONE_WIDTH_CAP)
            .build(2, clone_input(preset.arch))?;
        out.push(network_check(
            format!("preset {preset}"),
            &g,
            2,
            opts,
            100 + i as u64,
        )?);
    }
    out.push(network_check(
        "module inception".into(),
        &inception_graph()?,
        3,
        opts,
        99,
    )?);
    Ok(out)
}

/// Runs `count` randomized convolutions (kernel 1 to 7, stride 1 or 2,
/// assorted padding, with and without bias) through both the GEMM path and
/// the direct loop; returns the largest `max|fast - slow| / max|slow|`.
pub fn conv_oracle(count: usize, seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let c = 1 + rng.below(4);
        let f = 1 + rng.below(4);
        let k = [1, 3, 5, 7][rng.below(4)];
        let s = 1 + rng.below(2);
        let h = k.max(1 + rng.below(12));
        let w = k.max(1 + rng.below(12));
        let spec = Conv2dSpec {
            in_channels: c,
            out_channels: f,
            kernel: k,
            stride: s,
            padding: rng.below(k / 2 + 1),
            has_bias: rng.below(2) == 1,
        };
        let n = 1 + rng.below(2);
        let x = sample_normal(&mut rng, Shape4::new(n, c, h, w), 0.0, 1.0)?;
        let wt = sample_normal(&mut rng, spec.weight_shape(), 0.0, 1.0)?;
        let b = sample_normal(&mut rng, Shape4::new(1, f, 1, 1), 0.0, 1.0)?;
        let b = spec.has_bias.then_some(&b);
        let (fast, _) = conv2d_forward(&x, &wt, b, &spec)?;
        let slow = conv2d_reference(&x, &wt, b, &spec)?;
        if fast.shape() != slow.shape() {
            return Err(Error::shape(format!(
                "GEMM path gave {}, reference gave {}",
                fast.shape(),
                slow.shape()
            )));
        }
        worst = worst.max(relative_error_slices(fast.as_slice(), slow.as_slice()));
    }
    Ok(worst)
}

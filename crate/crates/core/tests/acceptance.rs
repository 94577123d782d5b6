//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! fails. Runs without the libtest harness so the lines always print.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use transnet::cli::{cmd_compare, run_with, DataSource, RunConfig, VariantResult};
use transnet::data::{kfold_split, synth_generate, SynthSpec};
use transnet::graph::{
    build_transition_module, init_parameters, Arch, GraphBuilder, LayerKind, ParameterStore,
    Preset, TransitionSpec, Variant, FIRST_FC, INPUT, TRANSITION_KERNELS,
};
use transnet::layers::global_avg_pool;
use transnet::metrics::{auc_from_pairs, roc_curve};
use transnet::optim::{
    begin_lookahead, end_lookahead, evaluate, nesterov_step, train_epoch, TrainConfig,
};
use transnet::verify::{conv_oracle, run_gradcheck, GradcheckOptions, LAYER_KINDS};
use transnet::{Result, Rng, Shape4, Tensor};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome {
        pass,
        detail: detail.into(),
    })
}

fn gradient_oracle() -> Result<Outcome> {
    let report = run_gradcheck(&GradcheckOptions::default())?;
    let layers = report
        .checks
        .iter()
        .filter(|c| c.name.starts_with("layer "))
        .count();
    let networks = report.checks.len() - layers;
    let worst_layer = report
        .checks
        .iter()
        .filter(|c| c.name.starts_with("layer "))
        .map(|c| c.max_rel_error)
        .fold(0.0, f64::max);
    let worst_net = report
        .checks
        .iter()
        .filter(|c| !c.name.starts_with("layer "))
        .map(|c| c.max_rel_error)
        .fold(0.0, f64::max);
    let corrupted = run_gradcheck(&GradcheckOptions {
        corrupt: Some("conv2d".into()),
        ..GradcheckOptions::default()
    })?;
    let caught = corrupted
        .failures()
        .map(|c| c.name.as_str())
        .collect::<Vec<_>>()
        == ["layer conv2d"];
    let fast = report.elapsed < Duration::from_secs(120);
    let failed: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
    outcome(
        report.passed() && layers == LAYER_KINDS.len() && caught && fast,
        format!(
            "{layers} layer kinds (worst {worst_layer:.2e} < 1e-5), {networks} networks \
             (worst {worst_net:.2e} < 1e-4), {:.1}s; corrupted conv2d caught: {caught}; failed: {failed:?}",
            report.elapsed.as_secs_f64()
        ),
    )
}

fn convolution_oracle() -> Result<Outcome> {
    let err = conv_oracle(50, 2024)?;
    outcome(
        err < 1e-10,
        format!("50 random specs, worst relative error {err:.2e}"),
    )
}

fn fc_input(preset: Preset, input: Shape4) -> Result<usize> {
    let g = preset.build(2, input)?;
    Ok(g.input_shape_of(FIRST_FC)
        .expect("first FC exists")
        .sample_len())
}

fn gap_and_transition_sizes() -> Result<Outcome> {
    let x = Tensor::full(Shape4::new(1, 256, 3, 3), 1.0);
    let gap = global_avg_pool(&x)?.len();
    let mut module_sizes = Vec::new();
    for filters in [1024, 2048] {
        let mut b = GraphBuilder::new(Shape4::new(1, 256, 13, 13));
        let spec = TransitionSpec::new(filters, &TRANSITION_KERNELS, 2);
        let out = build_transition_module(&mut b, "t", INPUT, 256, &spec)?;
        b.add("fc", LayerKind::Dense { units: 2 }, &[&out]);
        b.add("loss", LayerKind::SoftmaxCe, &["fc"]);
        let g = b.build("loss")?;
        module_sizes.push(g.input_shape_of("fc").expect("fc").sample_len());
    }
    let full = Shape4::new(1, 3, 224, 224);
    let alexnet = fc_input(Preset::new(Arch::AlexNet, Variant::TRANSITION), full)?;
    let zfnet = fc_input(Preset::new(Arch::ZfNet, Variant::TRANSITION), full)?;
    outcome(
        gap == 256 && module_sizes == [3072, 6144] && alexnet == 3072 && zfnet == 6144,
        format!(
            "GAP (1,256,3,3) -> {gap}; module F=1024/2048 -> {module_sizes:?}; \
             alexnet/zfnet presets at 224x224 -> {alexnet}/{zfnet}"
        ),
    )
}

fn nesterov_trace() -> Result<Outcome> {
    // f(theta) = theta^2, lr 0.1, momentum 0.9, theta0 = 1.
    let mut store = ParameterStore::default();
    store.insert("theta", Tensor::full(Shape4::new(1, 1, 1, 1), 1.0));
    let theta = |s: &ParameterStore| s.get("theta").expect("slot").value.as_slice()[0];
    let mut trace = vec![theta(&store)];
    for _ in 0..2 {
        let look = begin_lookahead(&mut store, 0.9);
        let t = theta(&store);
        store.get_mut("theta").expect("slot").grad.as_mut_slice()[0] = 2.0 * t;
        end_lookahead(&mut store, look);
        nesterov_step(&mut store, 0.1, 0.9);
        trace.push(theta(&store));
    }
    let err = trace
        .iter()
        .zip([1.0, 0.8, 0.496])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    outcome(
        err <= 1e-12,
        format!("theta trace {trace:?}, max deviation {err:.1e}"),
    )
}

fn auc_oracle() -> Result<Outcome> {
    let mut rng = Rng::new(31);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = 2 + rng.below(60);
        let scores: Vec<f64> = (0..n).map(|_| rng.below(10) as f64 / 9.0).collect();
        let mut labels: Vec<usize> = (0..n).map(|_| rng.below(2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let a = roc_curve(&scores, &labels)?.auc;
        let b = auc_from_pairs(&scores, &labels)?;
        worst = worst.max((a - b).abs());
    }
    let four = roc_curve(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1])?.auc;
    let scores: Vec<f64> = (0..10_000).map(|_| rng.uniform()).collect();
    let labels: Vec<usize> = (0..10_000).map(|_| rng.below(2)).collect();
    let baseline = roc_curve(&scores, &labels)?.auc;
    outcome(
        worst <= 1e-12 && four == 0.75 && (0.45..=0.55).contains(&baseline),
        format!("trapezoid vs pairs worst {worst:.1e} on 200; 4-sample {four}; permutation N=10000 {baseline:.4}"),
    )
}

fn overfit() -> Result<Outcome> {
    let start = Instant::now();
    let data = synth_generate(20, 32, 11)?;
    let preset: Preset = "alexnet_mini+transition".parse()?;
    let g = preset.build(2, data.sample_shape())?;
    let mut store = init_parameters(&g, &mut Rng::new(11))?;
    let cfg = TrainConfig {
        learning_rate: 0.01,
        epochs: 200,
        seed: 11,
        ..TrainConfig::default()
    };
    cfg.validate(&g)?;
    let mut rng = Rng::new(cfg.seed);
    let mut reached = None;
    let mut acc = 0.0;
    for epoch in 1..=cfg.epochs {
        train_epoch(&g, &mut store, &data, &cfg, &mut rng)?;
        acc = evaluate(&g, &mut store, &data, cfg.batch_size)?.accuracy;
        if acc == 1.0 {
            reached = Some(epoch);
            break;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        reached.is_some() && elapsed < Duration::from_secs(300),
        format!(
            "40 samples, 100% train accuracy at epoch {}, {:.1}s (final accuracy {acc})",
            reached.map_or("never".into(), |e| e.to_string()),
            elapsed.as_secs_f64()
        ),
    )
}

fn desk_config(out: PathBuf) -> RunConfig {
    RunConfig {
        preset: "alexnet_mini".parse().expect("known arch"),
        data: DataSource::Synth(SynthSpec {
            n_per_class: 100,
            size: 32,
            seed: 7,
        }),
        k: 2,
        train: TrainConfig {
            learning_rate: 0.01,
            epochs: 30,
            seed: 7,
            ..TrainConfig::default()
        },
        out,
        grouped: false,
        parallel: false,
    }
}

fn read_tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).expect("readable dir") {
            let p = entry.expect("dir entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let bytes = fs::read(&p).expect("readable file");
                out.push((
                    p.strip_prefix(dir).expect("inside dir").to_path_buf(),
                    bytes,
                ));
            }
        }
    }
    out.sort();
    out
}

fn desk_compare(tmp: &Path) -> Result<Outcome> {
    let start = Instant::now();
    let a = cmd_compare(&desk_config(tmp.join("cmp_a")), &mut std::io::sink())?;
    let b = cmd_compare(&desk_config(tmp.join("cmp_b")), &mut std::io::sink())?;
    let same = a == b && read_tree(&tmp.join("cmp_a")) == read_tree(&tmp.join("cmp_b"));
    let find = |v: Variant| -> &VariantResult {
        a.iter()
            .find(|r| r.preset.variant == v)
            .expect("variant ran")
    };
    let f = Arch::AlexNetMini.transition_filters();
    let with_gap = find(Variant::TRANSITION).first_fc_input;
    let nogap = find(Variant::TRANSITION_NOGAP).first_fc_input;
    // H' x W' of each branch: 32 -> 16 -> 8 -> 4 through the padded pools,
    // then the stride-2 transition convolutions.
    let spatial = 2 * 2;
    let structural = with_gap == 3 * f && nogap == 3 * f * spatial && nogap > with_gap;
    let csv = fs::read_to_string(tmp.join("cmp_a/compare.csv")).unwrap_or_default();
    let rows = csv.lines().count() == 1 + a.len() && a.len() == 5;
    let table: Vec<String> = a
        .iter()
        .map(|r| {
            format!(
                "{} acc {:.3} auc {}",
                r.preset.variant,
                r.mean_accuracy,
                r.mean_auc.map_or("-".into(), |x| format!("{x:.3}"))
            )
        })
        .collect();
    outcome(
        same && structural && rows,
        format!(
            "deterministic: {same}; first FC input transition {with_gap} = 3F, nogap {nogap} = 3F*H'W'; \
             {:.0}s for two runs; reported (not gated): {}",
            start.elapsed().as_secs_f64(),
            table.join(", ")
        ),
    )
}

fn kfold_arithmetic() -> Result<Outcome> {
    let sorted = |rows, k| -> Result<Vec<usize>> {
        let mut s = kfold_split(rows, k, 7)?.fold_sizes();
        s.sort_unstable_by(|a, b| b.cmp(a));
        Ok(s)
    };
    let a = sorted(1229, 5)?;
    let b = sorted(11_800, 2)?;
    outcome(
        a == [246, 246, 246, 246, 245] && b == [5900, 5900],
        format!("1229/k=5 -> {a:?}; 11800/k=2 -> {b:?}"),
    )
}

fn train_determinism(tmp: &Path) -> Result<Outcome> {
    let run = |dir: &Path| {
        run_with(
            [
                "transnet",
                "train",
                "--preset",
                "alexnet_mini+transition+dropout",
                "--synth",
                "n=40,size=32",
                "--k",
                "2",
                "--epochs",
                "4",
                "--lr",
                "0.01",
                "--seed",
                "5",
                "--out",
                dir.to_str().expect("utf-8 temp path"),
            ],
            &mut std::io::sink(),
        )
    };
    let (a, b) = (tmp.join("train_a"), tmp.join("train_b"));
    let codes = (run(&a), run(&b));
    let ta = read_tree(&a);
    let tb = read_tree(&b);
    let checkpoints = ta
        .iter()
        .filter(|(p, _)| p.to_string_lossy().contains("checkpoint"))
        .count();
    let csvs = ta
        .iter()
        .filter(|(p, _)| p.extension().is_some_and(|e| e == "csv"))
        .count();
    outcome(
        codes == (0, 0) && ta == tb && checkpoints > 0 && csvs == 5,
        format!("exit codes {codes:?}; {csvs} CSVs and {checkpoints} checkpoint files byte-identical: {}", ta == tb),
    )
}

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Result<Outcome> + 'a>);

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let criteria: Vec<Criterion> = vec![
        ("gradient oracle", Box::new(gradient_oracle)),
        ("convolution oracle", Box::new(convolution_oracle)),
        (
            "GAP and transition FC-input sizes",
            Box::new(gap_and_transition_sizes),
        ),
        ("Nesterov conformance", Box::new(nesterov_trace)),
        ("AUC oracle", Box::new(auc_oracle)),
        ("overfit smoke test", Box::new(overfit)),
        (
            "desk-scale comparison",
            Box::new(|| desk_compare(tmp.path())),
        ),
        ("k-fold arithmetic", Box::new(kfold_arithmetic)),
        ("determinism", Box::new(|| train_determinism(tmp.path()))),
    ];
    let mut failures = 0;
    for (name, check) in &criteria {
        let (pass, detail) = match check() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failures += 1;
        }
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}

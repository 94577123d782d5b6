//! Command-line front end: cross-validated training, variant comparison,
//! gradient checks, synthetic data export and architecture dumps.
//!
//! Options can also come from a `key=value` file passed with `--config`;
//! keys are the long flag names without dashes, and flags given on the
//! command line win over the file.
//!
//! Exit codes: 0 on success, 1 for configuration or data errors, 2 when a
//! verification check fails.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::data::{load_manifest, write_pnm, Dataset, FoldPlan, SynthSpec};
use crate::error::{Error, Result};
use crate::graph::{init_parameters, NetGraph, Preset, Variant, FIRST_FC};
use crate::metrics::{positive_scores, roc_curve, roc_to_csv};
use crate::optim::{evaluate, fit, History, TrainConfig};
use crate::tensor::{Rng, Shape4};
use crate::verify::{run_gradcheck, GradcheckOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_VERIFY: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "transnet",
    version,
    about = "Train and compare CNNs with transition modules"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// k-fold cross-validated training of one preset.
    Train(RunArgs),
    /// The same folds for baseline, transition, dropout, LRN and no-GAP variants.
    Compare(RunArgs),
    /// Finite-difference checks for every layer kind and preset.
    Gradcheck(GradcheckArgs),
    /// Print a preset's layer table.
    DumpArch(DumpArgs),
    /// Write the synthetic benchmark as PGM files plus a manifest.
    Synth(SynthArgs),
}

#[derive(Debug, Default, Args)]
struct RunArgs {
    /// `key=value` file supplying defaults for any of these options.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Architecture, optionally with `+variant` suffixes.
    #[arg(long)]
    preset: Option<String>,
    /// `baseline`, `transition`, `transition_nogap`, `dropout`, `lrn`, or a
    /// `+`-joined combination.
    #[arg(long)]
    variant: Option<String>,
    /// Manifest CSV (`path,label[,group]`).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Synthetic data, e.g. `n=200,size=32[,seed=3]` (n counts both classes).
    #[arg(long)]
    synth: Option<String>,
    /// Per-sample input shape `CxHxW` for manifest data.
    #[arg(long)]
    input: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Keep manifest groups (e.g. patients) within one fold.
    #[arg(long)]
    grouped: bool,
    /// Run folds (and variants) on a thread pool; results are unchanged.
    #[arg(long)]
    parallel: bool,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    /// Bound for single-layer checks.
    #[arg(long, default_value_t = 1e-5)]
    tolerance: f64,
    /// Bound for whole-network checks.
    #[arg(long, default_value_t = 1e-4)]
    network_tolerance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Skew the analytic gradients of one layer kind (harness self-test).
    #[arg(long, hide = true)]
    corrupt: Option<String>,
}

#[derive(Debug, Args)]
struct DumpArgs {
    #[arg(long)]
    preset: String,
    #[arg(long)]
    variant: Option<String>,
    /// Per-sample input shape `CxHxW`.
    #[arg(long, default_value = "3x32x32")]
    input: String,
    #[arg(long, default_value_t = 2)]
    classes: usize,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Total sample count (split evenly between the classes).
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 32)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Where samples come from.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Manifest {
        path: PathBuf,
        input: Option<Shape4>,
    },
    Synth(SynthSpec),
}

/// Fully resolved options of a `train` or `compare` run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub data: DataSource,
    pub k: usize,
    pub train: TrainConfig,
    pub out: PathBuf,
    pub grouped: bool,
    pub parallel: bool,
}

/// Parses `CxHxW` into a single-sample shape.
pub fn parse_shape(s: &str) -> Result<Shape4> {
    let dims: Vec<usize> = s
        .split('x')
        .map(|d| d.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("shape '{s}' is not CxHxW")))?;
    match dims[..] {
        [c, h, w] if c > 0 && h > 0 && w > 0 => Ok(Shape4::new(1, c, h, w)),
        _ => Err(Error::Config(format!(
            "shape '{s}' is not CxHxW with positive sizes"
        ))),
    }
}

/// Parses `n=200,size=32[,seed=S]`; `n` is the total sample count and must
/// be even. The seed defaults to `default_seed`.
pub fn parse_synth(s: &str, default_seed: u64) -> Result<SynthSpec> {
    let (mut n, mut size, mut seed) = (None, None, default_seed);
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("synth option '{part}' is not key=value")))?;
        let bad = || Error::Config(format!("synth option '{part}' has a bad value"));
        match key.trim() {
            "n" => n = Some(value.trim().parse::<usize>().map_err(|_| bad())?),
            "size" => size = Some(value.trim().parse::<usize>().map_err(|_| bad())?),
            "seed" => seed = value.trim().parse().map_err(|_| bad())?,
            other => return Err(Error::Config(format!("unknown synth option '{other}'"))),
        }
    }
    let n = n.ok_or_else(|| Error::Config("synth spec needs n=".into()))?;
    if n < 2 || n % 2 != 0 {
        return Err(Error::Config(format!(
            "synth n must be even and >= 2, got {n}"
        )));
    }
    Ok(SynthSpec {
        n_per_class: n / 2,
        size: size.unwrap_or(32),
        seed,
    })
}

/// Reads a `key=value` file. Blank lines and `#` comments are skipped.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("config line {}: expected key=value", i + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("config value for '{key}' is invalid: '{v}'")))
}

fn parse_flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!(
            "config value for '{key}' is not a boolean: '{v}'"
        ))),
    }
}

impl RunArgs {
    /// Fills options the command line left unset from the config file.
    fn merge_file(&mut self, file: &BTreeMap<String, String>) -> Result<()> {
        for (key, v) in file {
            let k = key.as_str();
            match k {
                "preset" => _ = self.preset.get_or_insert_with(|| v.clone()),
                "variant" => _ = self.variant.get_or_insert_with(|| v.clone()),
                "data" => _ = self.data.get_or_insert_with(|| v.into()),
                "synth" => _ = self.synth.get_or_insert_with(|| v.clone()),
                "input" => _ = self.input.get_or_insert_with(|| v.clone()),
                "out" => _ = self.out.get_or_insert_with(|| v.into()),
                "k" => _ = self.k.get_or_insert(parse_value(k, v)?),
                "epochs" => _ = self.epochs.get_or_insert(parse_value(k, v)?),
                "lr" => _ = self.lr.get_or_insert(parse_value(k, v)?),
                "momentum" => _ = self.momentum.get_or_insert(parse_value(k, v)?),
                "batch" => _ = self.batch.get_or_insert(parse_value(k, v)?),
                "seed" => _ = self.seed.get_or_insert(parse_value(k, v)?),
                "grouped" => self.grouped |= parse_flag(k, v)?,
                "parallel" => self.parallel |= parse_flag(k, v)?,
                other => return Err(Error::Config(format!("unknown config key '{other}'"))),
            }
        }
        Ok(())
    }

    fn resolve(mut self) -> Result<RunConfig> {
        if let Some(path) = self.config.take() {
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            self.merge_file(&parse_config_file(&text)?)?;
        }
        let mut preset: Preset = self.preset.as_deref().unwrap_or("alexnet_mini").parse()?;
        if let Some(v) = &self.variant {
            let extra: Variant = v.parse()?;
            preset.variant = Variant {
                transition: preset.variant.transition || extra.transition,
                nogap: preset.variant.nogap || extra.nogap,
                dropout: preset.variant.dropout || extra.dropout,
                lrn: preset.variant.lrn || extra.lrn,
            };
        }
        let defaults = TrainConfig::default();
        let seed = self.seed.unwrap_or(defaults.seed);
        let data = match (self.data, self.synth) {
            (Some(path), None) => DataSource::Manifest {
                path,
                input: self.input.as_deref().map(parse_shape).transpose()?,
            },
            (None, Some(spec)) => DataSource::Synth(parse_synth(&spec, seed)?),
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "give either --data or --synth, not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::Config(
                    "no data source: pass --data or --synth".into(),
                ))
            }
        };
        let out = self
            .out
            .ok_or_else(|| Error::Config("--out is required".into()))?;
        Ok(RunConfig {
            preset,
            data,
            k: self.k.unwrap_or(5),
            train: TrainConfig {
                learning_rate: self.lr.unwrap_or(defaults.learning_rate),
                momentum: self.momentum.unwrap_or(defaults.momentum),
                batch_size: self.batch.unwrap_or(defaults.batch_size),
                epochs: self.epochs.unwrap_or(defaults.epochs),
                seed,
                shuffle: true,
            },
            out,
            grouped: self.grouped,
            parallel: self.parallel,
        })
    }
}

/// Samples plus the fold plan over them.
pub struct Prepared {
    pub dataset: Dataset,
    pub folds: FoldPlan,
}

/// Loads the configured data and splits it into folds.
pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    match &cfg.data {
        DataSource::Synth(spec) => {
            if cfg.grouped {
                return Err(Error::Config(
                    "--grouped needs a manifest with a group column".into(),
                ));
            }
            let dataset = spec.generate()?;
            let folds = crate::data::kfold_split(dataset.len(), cfg.k, cfg.train.seed)?;
            Ok(Prepared { dataset, folds })
        }
        DataSource::Manifest { path, input } => {
            let manifest = load_manifest(path)?;
            let shape = match input {
                Some(s) => *s,
                None => {
                    let first = crate::data::read_patch(&manifest.resolve(&manifest.rows()[0]))?;
                    first.shape().with_n(1)
                }
            };
            let dataset = manifest.load_dataset(shape)?;
            let folds = manifest.folds(cfg.k, cfg.train.seed, cfg.grouped)?;
            Ok(Prepared { dataset, folds })
        }
    }
}

/// Held-out metrics of one fold.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    pub accuracy: f64,
    /// Binary tasks only.
    pub auc: Option<f64>,
    pub history: History,
    pub roc_csv: Option<String>,
}

/// Seed for fold `fold`'s initialization and batch order, derived from the
/// run seed so folds are independent yet reproducible.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    Rng::new(seed).fork(fold as u64).next_u64()
}

/// Builds, trains and evaluates one fold; writes nothing.
pub fn run_fold(
    preset: &Preset,
    data: &Prepared,
    train: &TrainConfig,
    fold: usize,
    checkpoint: Option<&Path>,
) -> Result<FoldResult> {
    let ds = &data.dataset;
    let train_set = ds.subset(&data.folds.train_indices(fold));
    let val_set = ds.subset(&data.folds.test_indices(fold));
    let g = preset.build(ds.num_classes(), ds.sample_shape())?;
    let seed = fold_seed(train.seed, fold);
    let mut store = init_parameters(&g, &mut Rng::new(seed))?;
    let cfg = TrainConfig {
        seed,
        ..train.clone()
    };
    let history = fit(&g, &mut store, &train_set, &val_set, &cfg)?;
    let eval = evaluate(&g, &mut store, &val_set, cfg.batch_size)?;
    let (auc, roc_csv) = if ds.num_classes() == 2 {
        let curve = roc_curve(&positive_scores(&eval.probs)?, val_set.labels())
            .map_err(|e| Error::Data(format!("fold {fold}: {e}")))?;
        (Some(curve.auc), Some(roc_to_csv(&curve)?))
    } else {
        (None, None)
    };
    if let Some(dir) = checkpoint {
        store.save_checkpoint(dir)?;
    }
    Ok(FoldResult {
        fold,
        accuracy: eval.accuracy,
        auc,
        history,
        roc_csv,
    })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn fmt_auc(auc: Option<f64>) -> String {
    auc.map_or_else(String::new, |a| a.to_string())
}

/// Mean accuracy and mean AUC (`None` if any fold lacks one).
pub fn fold_means(results: &[FoldResult]) -> (f64, Option<f64>) {
    let n = results.len() as f64;
    let acc = results.iter().map(|r| r.accuracy).sum::<f64>() / n;
    let auc = results
        .iter()
        .map(|r| r.auc)
        .sum::<Option<f64>>()
        .map(|s| s / n);
    (acc, auc)
}

/// `fold,accuracy,auc` rows plus a trailing `mean` row.
pub fn summary_csv(results: &[FoldResult]) -> String {
    let mut out = String::from("fold,accuracy,auc\n");
    for r in results {
        let _ = writeln!(out, "{},{},{}", r.fold, r.accuracy, fmt_auc(r.auc));
    }
    let (acc, auc) = fold_means(results);
    let _ = writeln!(out, "mean,{acc},{}", fmt_auc(auc));
    out
}

/// Per-sample length of the tensor entering the first FC layer.
pub fn first_fc_input(g: &NetGraph) -> Option<usize> {
    g.input_shape_of(FIRST_FC).map(|s| s.sample_len())
}

/// Trains every fold of `preset` and writes `fold<i>_history.csv`,
/// `fold<i>_roc.csv`, `fold<i>_checkpoint/`, `arch.txt` and `summary.csv`
/// into `out`.
pub fn run_cv(
    preset: &Preset,
    data: &Prepared,
    cfg: &RunConfig,
    out: &Path,
    log: &mut dyn Write,
) -> Result<Vec<FoldResult>> {
    let g = preset.build(data.dataset.num_classes(), data.dataset.sample_shape())?;
    cfg.train.validate(&g)?;
    create_dir(out)?;
    write_file(&out.join("arch.txt"), &g.summary())?;
    let job = |fold: usize| {
        let ckpt = out.join(format!("fold{fold}_checkpoint"));
        run_fold(preset, data, &cfg.train, fold, Some(&ckpt))
    };
    let folds: Vec<usize> = (0..data.folds.k()).collect();
    let results: Vec<FoldResult> = if cfg.parallel {
        folds.into_par_iter().map(job).collect::<Result<_>>()?
    } else {
        folds.into_iter().map(job).collect::<Result<_>>()?
    };
    for r in &results {
        write_file(
            &out.join(format!("fold{}_history.csv", r.fold)),
            &r.history.to_csv(),
        )?;
        if let Some(roc) = &r.roc_csv {
            write_file(&out.join(format!("fold{}_roc.csv", r.fold)), roc)?;
        }
        let _ = writeln!(
            log,
            "{preset} fold {}: accuracy {:.4} auc {}",
            r.fold,
            r.accuracy,
            fmt_auc(r.auc)
        );
    }
    write_file(&out.join("summary.csv"), &summary_csv(&results))?;
    Ok(results)
}

fn describe(data: &Prepared, log: &mut dyn Write) {
    let _ = writeln!(
        log,
        "{} samples of {}, {} classes, fold sizes {:?}",
        data.dataset.len(),
        data.dataset.sample_shape(),
        data.dataset.num_classes(),
        data.folds.fold_sizes()
    );
}

pub fn cmd_train(cfg: &RunConfig, log: &mut dyn Write) -> Result<Vec<FoldResult>> {
    let data = prepare(cfg)?;
    describe(&data, log);
    let results = run_cv(&cfg.preset, &data, cfg, &cfg.out, log)?;
    let (acc, auc) = fold_means(&results);
    let _ = writeln!(log, "mean accuracy {acc:.4} mean auc {}", fmt_auc(auc));
    Ok(results)
}

/// One `compare.csv` row.
#[derive(Clone, Debug, PartialEq)]
pub struct VariantResult {
    pub preset: Preset,
    pub mean_accuracy: f64,
    pub mean_auc: Option<f64>,
    pub first_fc_input: usize,
}

/// Runs the comparison set on the architecture of `cfg.preset` (its variant
/// flags are ignored) with identical folds and seeds. Each variant's files
/// go to `out/<variant>/`; `out/compare.csv` has
/// `variant,mean_accuracy,mean_auc`.
pub fn cmd_compare(cfg: &RunConfig, log: &mut dyn Write) -> Result<Vec<VariantResult>> {
    let data = prepare(cfg)?;
    describe(&data, log);
    let presets: Vec<Preset> = Variant::comparison_set()
        .into_iter()
        .map(|v| Preset {
            variant: v,
            ..cfg.preset
        })
        .collect();
    create_dir(&cfg.out)?;
    let job = |p: &Preset| -> Result<(Vec<FoldResult>, Vec<u8>)> {
        let mut buf = Vec::new();
        let r = run_cv(
            p,
            &data,
            cfg,
            &cfg.out.join(p.variant.to_string()),
            &mut buf,
        )?;
        Ok((r, buf))
    };
    let runs: Vec<(Vec<FoldResult>, Vec<u8>)> = if cfg.parallel {
        presets.par_iter().map(job).collect::<Result<_>>()?
    } else {
        presets.iter().map(job).collect::<Result<_>>()?
    };
    let mut csv = String::from("variant,mean_accuracy,mean_auc\n");
    let mut rows = Vec::new();
    for (preset, (results, buf)) in presets.iter().zip(runs) {
        let _ = log.write_all(&buf);
        let (acc, auc) = fold_means(&results);
        let g = preset.build(data.dataset.num_classes(), data.dataset.sample_shape())?;
        let fc = first_fc_input(&g).expect("presets have a first FC layer");
        let _ = writeln!(
            log,
            "{:<18} mean accuracy {acc:.4} mean auc {:<8} first FC input {fc}",
            preset.variant.to_string(),
            fmt_auc(auc)
        );
        let _ = writeln!(csv, "{},{acc},{}", preset.variant, fmt_auc(auc));
        rows.push(VariantResult {
            preset: *preset,
            mean_accuracy: acc,
            mean_auc: auc,
            first_fc_input: fc,
        });
    }
    write_file(&cfg.out.join("compare.csv"), &csv)?;
    Ok(rows)
}

/// Writes `n` synthetic samples as 8-bit PGM files plus `manifest.csv`.
pub fn cmd_synth(spec: &SynthSpec, out: &Path) -> Result<PathBuf> {
    let ds = spec.generate()?;
    create_dir(out)?;
    let mut manifest = String::from("path,label\n");
    for i in 0..ds.len() {
        let name = format!("sample{i:05}.pgm");
        let (x, labels) = ds.batch(&[i]);
        write_pnm(&out.join(&name), &x)?;
        let _ = writeln!(manifest, "{name},{}", labels[0]);
    }
    let path = out.join("manifest.csv");
    write_file(&path, &manifest)?;
    Ok(path)
}

fn dump_arch(args: &DumpArgs, log: &mut dyn Write) -> Result<()> {
    let mut preset: Preset = args.preset.parse()?;
    if let Some(v) = &args.variant {
        preset.variant = v.parse()?;
    }
    let g = preset.build(args.classes, parse_shape(&args.input)?)?;
    let _ = write!(log, "{preset}\n{}", g.summary());
    if let Some(fc) = first_fc_input(&g) {
        let _ = writeln!(log, "first FC input {fc}");
    }
    Ok(())
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonFinite(_) => EXIT_VERIFY,
        _ => EXIT_CONFIG,
    }
}

/// Parses `args` (including the program name) and runs the command,
/// writing progress to `log` and errors to stderr. Returns the exit code.
pub fn run_with<I, T>(args: I, log: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Train(a) => a
            .resolve()
            .and_then(|c| cmd_train(&c, log))
            .map(|_| EXIT_OK),
        Command::Compare(a) => a
            .resolve()
            .and_then(|c| cmd_compare(&c, log))
            .map(|_| EXIT_OK),
        Command::Gradcheck(a) => {
            let opts = GradcheckOptions {
                layer_tolerance: a.tolerance,
                network_tolerance: a.network_tolerance,
                seed: a.seed,
                corrupt: a.corrupt,
                ..GradcheckOptions::default()
            };
            run_gradcheck(&opts).map(|report| {
                let _ = writeln!(log, "{report}");
                for f in report.failures() {
                    eprintln!(
                        "gradient check failed: {} (relative error {:.3e})",
                        f.name, f.max_rel_error
                    );
                }
                if report.passed() {
                    EXIT_OK
                } else {
                    EXIT_VERIFY
                }
            })
        }
        Command::DumpArch(a) => dump_arch(&a, log).map(|_| EXIT_OK),
        Command::Synth(a) => parse_synth(&format!("n={},size={},seed={}", a.n, a.size, a.seed), 0)
            .and_then(|spec| cmd_synth(&spec, &a.out))
            .map(|path| {
                let _ = writeln!(log, "wrote {}", path.display());
                EXIT_OK
            }),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        exit_code(&e)
    })
}

/// [`run_with`] logging to stdout.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run_with(args, &mut std::io::stdout())
}

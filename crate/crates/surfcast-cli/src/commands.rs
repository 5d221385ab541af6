//! The six commands behind the `surfcast` binary.

use std::path::{Path, PathBuf};

use clap::Args;
use serde_json::json;
use surfcast::conformal::{
    conformal_band_with, make_split, BandRadius, ModulationSource, PermutationFamily, SplitMode,
};
use surfcast::far::{fit, fit_oracle, FarVariant, FitConfig, TrueKernel};
use surfcast::fpca::ComponentSelector;
use surfcast::pipeline::{rolling_run, RollingConfig};
use surfcast::simulate::{
    run_study, simulate_far1, CiMethod, InnovationKind, SimulationConfig, StudyCase, StudyConfig,
};
use surfcast::{Field, Predictor};

use crate::config::{require, resolve, FileConfig};
use crate::errors::{CliError, CliResult, PathContext};
use crate::{csvio, format};

// ---------------------------------------------------------------------------
// Shared flag parsing and validation
// ---------------------------------------------------------------------------

fn load_config(path: &Option<PathBuf>) -> CliResult<FileConfig> {
    match path {
        Some(p) => FileConfig::load(p),
        None => Ok(FileConfig::empty()),
    }
}

fn parse_method(s: &str) -> CliResult<FarVariant> {
    FarVariant::parse(s).ok_or_else(|| {
        CliError::usage(format!(
            "unknown method {s:?} (expected naive, concurrent, ek, ek+, var, or oracle)"
        ))
    })
}

fn parse_split(s: &str) -> CliResult<SplitMode> {
    SplitMode::parse(s)
        .ok_or_else(|| CliError::usage(format!("unknown split mode {s:?} (expected random or sequential)")))
}

fn parse_modulation(s: &str) -> CliResult<ModulationSource> {
    match s {
        "training-std" => Ok(ModulationSource::TrainingStd),
        "residual-std" => Ok(ModulationSource::ResidualStd),
        other => Err(CliError::usage(format!(
            "unknown modulation {other:?} (expected training-std or residual-std)"
        ))),
    }
}

fn parse_ci(s: &str) -> CliResult<CiMethod> {
    CiMethod::parse(s)
        .ok_or_else(|| CliError::usage(format!("unknown CI method {s:?} (expected normal or exact)")))
}

fn parse_innovation(s: &str) -> CliResult<InnovationKind> {
    InnovationKind::parse(s)
        .ok_or_else(|| CliError::usage(format!("unknown innovation family {s:?} (expected t or gaussian)")))
}

fn check_alpha(alpha: f64) -> CliResult<f64> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(alpha)
    } else {
        Err(CliError::usage(format!("alpha {alpha} outside (0, 1]")))
    }
}

fn check_ratio(ratio: f64) -> CliResult<f64> {
    if ratio > 0.0 && ratio < 1.0 {
        Ok(ratio)
    } else {
        Err(CliError::usage(format!("split ratio {ratio} outside (0, 1)")))
    }
}

fn check_threshold(th: f64) -> CliResult<f64> {
    if th > 0.0 && th <= 1.0 {
        Ok(th)
    } else {
        Err(CliError::usage(format!("variance threshold {th} outside (0, 1]")))
    }
}

fn check_block(b: usize) -> CliResult<usize> {
    if b >= 1 {
        Ok(b)
    } else {
        Err(CliError::usage("block size must be at least 1"))
    }
}

/// Resolves a string-valued setting, then runs it through a parser.
fn resolve_parsed<T>(
    flag: &Option<String>,
    file: &FileConfig,
    key: &str,
    default: &str,
    parse: impl Fn(&str) -> CliResult<T>,
) -> CliResult<T> {
    let raw = flag.as_deref().or_else(|| file.raw(key)).unwrap_or(default);
    parse(raw)
}

fn parse_list<T>(raw: &str, what: &str, parse: impl Fn(&str) -> CliResult<T>) -> CliResult<Vec<T>> {
    let mut out = Vec::new();
    for part in raw.split(',') {
        let p = part.trim();
        if p.is_empty() {
            return Err(CliError::usage(format!("empty entry in {what} list {raw:?}")));
        }
        out.push(parse(p)?);
    }
    Ok(out)
}

fn parse_usize(s: &str, what: &str) -> CliResult<usize> {
    s.parse::<usize>()
        .map_err(|_| CliError::usage(format!("{what} entry {s:?} is not a non-negative integer")))
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).at_path(dir)
}

fn fit_config(var_threshold: f64) -> FitConfig<f64> {
    FitConfig { selector: ComponentSelector::VarianceThreshold(var_threshold), ..FitConfig::default() }
}

/// Loads the kernel sidecar when the oracle method is selected; any other
/// method must not silently ignore a kernel the user supplied, so passing one
/// is fine (it is simply unused) but the oracle without one is a usage error.
fn kernel_for(method: FarVariant, kernel: &Option<PathBuf>) -> CliResult<Option<TrueKernel<f64>>> {
    match (method, kernel) {
        (FarVariant::Oracle, Some(path)) => Ok(Some(format::read_kernel(path)?)),
        (FarVariant::Oracle, None) => Err(CliError::usage(
            "method oracle requires --kernel with the generating-kernel JSON file",
        )),
        (_, _) => Ok(None),
    }
}

fn stability_warning(predictor: &Predictor) {
    if let Some(f) = predictor.transfer_frobenius() {
        if f >= 1.0 {
            eprintln!(
                "warning: fitted transfer operator has Frobenius norm {f:.3} >= 1; \
                 the fitted autoregression is explosive and forecasts may drift"
            );
        }
    }
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Output dataset path (FTS2)
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Also write the generating kernel as JSON (needed for oracle runs)
    #[arg(long = "kernel-out", value_name = "PATH")]
    kernel_out: Option<PathBuf>,
    /// Number of frames [default: 100]
    #[arg(long = "t-len", value_name = "T")]
    t_len: Option<usize>,
    /// First-axis grid size [default: 100]
    #[arg(long, value_name = "N")]
    n1: Option<usize>,
    /// Second-axis grid size [default: 100]
    #[arg(long, value_name = "N")]
    n2: Option<usize>,
    /// Innovation family: t|gaussian [default: t]
    #[arg(long, value_name = "FAMILY")]
    innovation: Option<String>,
    /// Student-t degrees of freedom [default: 4]
    #[arg(long = "t-df", value_name = "DF")]
    t_df: Option<f64>,
    /// Frobenius norm of the autoregression coefficients; 0 gives iid frames
    /// [default: 0.9]
    #[arg(long = "psi-norm", value_name = "NORM")]
    psi_norm: Option<f64>,
    /// Warm-up frames discarded before the series starts [default: 50]
    #[arg(long = "warm-up", value_name = "N")]
    warm_up: Option<usize>,
    /// Generator seed [default: 0]
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,
    /// key = value settings file (flags take precedence)
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
}

pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let file = load_config(&args.config)?;
    let out = require(
        args.out.clone(),
        file.raw("out").map(PathBuf::from),
        "--out (or config key out)",
    )?;

    let mut cfg: SimulationConfig<f64> = SimulationConfig::default();
    cfg.t_len = args.t_len.unwrap_or(cfg.t_len);
    cfg.n1 = args.n1.unwrap_or(cfg.n1);
    cfg.n2 = args.n2.unwrap_or(cfg.n2);
    if let Some(raw) = &args.innovation {
        cfg.innovation = parse_innovation(raw)?;
    }
    cfg.t_df = args.t_df.unwrap_or(cfg.t_df);
    cfg.psi_norm = args.psi_norm.unwrap_or(cfg.psi_norm);
    cfg.warm_up = args.warm_up.unwrap_or(cfg.warm_up);
    cfg.seed = resolve(args.seed, file.get("seed")?, cfg.seed);

    let (ds, kernel) = simulate_far1(&cfg)?;
    format::write_dataset(&out, &ds)?;
    println!(
        "wrote {}-frame {}x{} dataset to {}",
        ds.t_len(),
        cfg.n1,
        cfg.n2,
        out.display()
    );
    if let Some(kpath) = &args.kernel_out {
        format::write_kernel(kpath, &kernel)?;
        println!("wrote generating kernel to {}", kpath.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// import-csv / export-csv
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct ImportCsvArgs {
    /// Input data CSV with header t,i,j,value
    #[arg(long, value_name = "PATH")]
    data: PathBuf,
    /// Optional mask CSV with header i,j,inside
    #[arg(long, value_name = "PATH")]
    mask: Option<PathBuf>,
    /// Output dataset path (FTS2)
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// key = value settings file (flags take precedence)
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
}

pub fn cmd_import_csv(args: &ImportCsvArgs) -> CliResult<()> {
    let file = load_config(&args.config)?;
    let out = require(
        args.out.clone(),
        file.raw("out").map(PathBuf::from),
        "--out (or config key out)",
    )?;
    let (frames, n1, n2) = csvio::import_data_csv(&args.data)?;
    let mask = match &args.mask {
        Some(mpath) => Some(csvio::import_mask_csv(mpath, n1, n2)?),
        None => None,
    };
    let ds = csvio::assemble_dataset(frames, n1, n2, mask)?;
    format::write_dataset(&out, &ds)?;
    let masked = match ds.mask() {
        Some(m) => format!(", {}/{} cells inside the mask", m.count(), n1 * n2),
        None => String::new(),
    };
    println!(
        "imported {} frames on a {n1}x{n2} grid to {}{masked}",
        ds.t_len(),
        out.display()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct ExportCsvArgs {
    /// Input dataset (FTS2)
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    /// Output data CSV path
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Where to write the mask CSV when the dataset has one
    #[arg(long = "mask-out", value_name = "PATH")]
    mask_out: Option<PathBuf>,
    /// key = value settings file (flags take precedence)
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
}

pub fn cmd_export_csv(args: &ExportCsvArgs) -> CliResult<()> {
    let file = load_config(&args.config)?;
    let out = require(
        args.out.clone(),
        file.raw("out").map(PathBuf::from),
        "--out (or config key out)",
    )?;
    let ds = format::read_dataset(&args.input)?;
    csvio::export_data_csv(&out, &ds)?;
    let (n1, n2) = ds.domain().shape();
    println!("wrote {} frames on a {n1}x{n2} grid to {}", ds.t_len(), out.display());
    match (ds.mask(), &args.mask_out) {
        (Some(m), Some(mpath)) => {
            csvio::export_mask_csv(mpath, m)?;
            println!("wrote mask to {}", mpath.display());
        }
        (Some(_), None) => {
            eprintln!("note: dataset has a mask; pass --mask-out to export it");
        }
        (None, Some(_)) => {
            return Err(CliError::data(format!(
                "cli::export_csv: --mask-out given but {} has no mask",
                args.input.display()
            )));
        }
        (None, None) => {}
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// study
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct StudyArgs {
    /// Comma-separated methods [default: naive,concurrent,ek,ek+,var,oracle]
    #[arg(long, value_name = "LIST")]
    methods: Option<String>,
    /// Comma-separated series lengths T [default: 99]
    #[arg(long = "t-lens", value_name = "LIST")]
    t_lens: Option<String>,
    /// Comma-separated calibration block sizes [default: 1]
    #[arg(long = "block-sizes", value_name = "LIST")]
    block_sizes: Option<String>,
    /// Replications per case [default: 100]
    #[arg(long, value_name = "N")]
    reps: Option<usize>,
    /// Miscoverage level in (0, 1] [default: 0.1]
    #[arg(long, value_name = "ALPHA")]
    alpha: Option<f64>,
    /// Train/calibration assignment: random|sequential [default: random]
    #[arg(long, value_name = "MODE")]
    split: Option<String>,
    /// Training fraction of the usable frames, in (0, 1) [default: 0.5]
    #[arg(long = "split-ratio", value_name = "RATIO")]
    split_ratio: Option<f64>,
    /// Master seed; every replication derives its own stream [default: 0]
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,
    /// Explained-variance fraction for component selection [default: 0.8]
    #[arg(long = "var-threshold", value_name = "FRACTION")]
    var_threshold: Option<f64>,
    /// Band width profile: training-std|residual-std [default: training-std]
    #[arg(long, value_name = "SOURCE")]
    modulation: Option<String>,
    /// Coverage interval: normal|exact [default: normal]
    #[arg(long, value_name = "METHOD")]
    ci: Option<String>,
    /// First-axis grid size of the simulated surfaces [default: 100]
    #[arg(long, value_name = "N")]
    n1: Option<usize>,
    /// Second-axis grid size of the simulated surfaces [default: 100]
    #[arg(long, value_name = "N")]
    n2: Option<usize>,
    /// Innovation family: t|gaussian [default: t]
    #[arg(long, value_name = "FAMILY")]
    innovation: Option<String>,
    /// Student-t degrees of freedom [default: 4]
    #[arg(long = "t-df", value_name = "DF")]
    t_df: Option<f64>,
    /// Frobenius norm of the autoregression coefficients; 0 gives iid frames
    /// [default: 0.9]
    #[arg(long = "psi-norm", value_name = "NORM")]
    psi_norm: Option<f64>,
    /// Output directory for replications.csv, aggregates.csv, failures.csv
    #[arg(long = "out-dir", value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// key = value settings file (flags take precedence)
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
}

pub fn cmd_study(args: &StudyArgs) -> CliResult<()> {
    let file = load_config(&args.config)?;
    let out_dir = require(
        args.out_dir.clone(),
        file.raw("out_dir").map(PathBuf::from),
        "--out-dir (or config key out_dir)",
    )?;

    let methods_raw = args
        .methods
        .as_deref()
        .or_else(|| file.raw("methods"))
        .unwrap_or("naive,concurrent,ek,ek+,var,oracle");
    let methods = parse_list(methods_raw, "method", parse_method)?;
    let t_lens_raw = args.t_lens.as_deref().or_else(|| file.raw("t_lens")).unwrap_or("99");
    let t_lens = parse_list(t_lens_raw, "T", |s| parse_usize(s, "T"))?;
    let blocks_raw =
        args.block_sizes.as_deref().or_else(|| file.raw("block_sizes")).unwrap_or("1");
    let block_sizes = parse_list(blocks_raw, "block size", |s| parse_usize(s, "block size"))?;

    let mut cases = Vec::new();
    for &t_len in &t_lens {
        for &block_size in &block_sizes {
            cases.push(StudyCase { t_len, block_size });
        }
    }

    let reps = resolve(args.reps, file.get("reps")?, 100);
    let mut cfg: StudyConfig<f64> = StudyConfig::new(methods, cases, reps);
    cfg.alpha = check_alpha(resolve(args.alpha, file.get("alpha")?, 0.1))?;
    cfg.split_mode = resolve_parsed(&args.split, &file, "split", "random", parse_split)?;
    cfg.split_ratio = check_ratio(resolve(args.split_ratio, file.get("split_ratio")?, 0.5))?;
    cfg.master_seed = resolve(args.seed, file.get("seed")?, 0);
    cfg.fit = fit_config(check_threshold(resolve(
        args.var_threshold,
        file.get("var_threshold")?,
        0.8,
    ))?);
    cfg.modulation =
        resolve_parsed(&args.modulation, &file, "modulation", "training-std", parse_modulation)?;
    cfg.ci = resolve_parsed(&args.ci, &file, "ci", "normal", parse_ci)?;
    cfg.sim.n1 = args.n1.unwrap_or(cfg.sim.n1);
    cfg.sim.n2 = args.n2.unwrap_or(cfg.sim.n2);
    if let Some(raw) = &args.innovation {
        cfg.sim.innovation = parse_innovation(raw)?;
    }
    cfg.sim.t_df = args.t_df.unwrap_or(cfg.sim.t_df);
    cfg.sim.psi_norm = args.psi_norm.unwrap_or(cfg.sim.psi_norm);

    let result = run_study(&cfg)?;

    ensure_dir(&out_dir)?;
    csvio::write_study_replications(&out_dir.join("replications.csv"), &result)?;
    csvio::write_study_aggregates(&out_dir.join("aggregates.csv"), &result)?;
    csvio::write_study_failures(&out_dir.join("failures.csv"), &result)?;

    for a in &result.aggregates {
        println!(
            "{} T={} b={}: coverage {:.3} [{:.3}, {:.3}], mean band size {:.4} ({} ok, {} failed)",
            a.method.name(),
            a.t_len,
            a.block_size,
            a.coverage,
            a.ci_low,
            a.ci_high,
            a.mean_band_size,
            a.n_ok,
            a.n_failed
        );
    }
    println!(
        "wrote replications.csv, aggregates.csv, failures.csv to {}",
        out_dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// forecast-band
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct ForecastBandArgs {
    /// Input dataset (FTS2); the band is for the frame after the last one
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    /// Point predictor: naive|concurrent|ek|ek+|var|oracle [default: ek]
    #[arg(long, value_name = "METHOD")]
    method: Option<String>,
    /// Miscoverage level in (0, 1] [default: 0.1]
    #[arg(long, value_name = "ALPHA")]
    alpha: Option<f64>,
    /// Calibration block size [default: 1]
    #[arg(long = "block-size", value_name = "B")]
    block_size: Option<usize>,
    /// Train/calibration assignment: random|sequential [default: random]
    #[arg(long, value_name = "MODE")]
    split: Option<String>,
    /// Training fraction of the usable frames, in (0, 1) [default: 0.5]
    #[arg(long = "split-ratio", value_name = "RATIO")]
    split_ratio: Option<f64>,
    /// Split seed [default: 0]
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,
    /// Explained-variance fraction for component selection [default: 0.8]
    #[arg(long = "var-threshold", value_name = "FRACTION")]
    var_threshold: Option<f64>,
    /// Band width profile: training-std|residual-std [default: training-std]
    #[arg(long, value_name = "SOURCE")]
    modulation: Option<String>,
    /// Generating-kernel JSON (required for method oracle)
    #[arg(long, value_name = "PATH")]
    kernel: Option<PathBuf>,
    /// Optional FTS2 file whose first frame is tested for band membership
    #[arg(long, value_name = "PATH")]
    check: Option<PathBuf>,
    /// Output directory for center/lower/upper grids and band.json
    #[arg(long = "out-dir", value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// key = value settings file (flags take precedence)
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
}

pub fn cmd_forecast_band(args: &ForecastBandArgs) -> CliResult<()> {
    let file = load_config(&args.config)?;
    let out_dir = require(
        args.out_dir.clone(),
        file.raw("out_dir").map(PathBuf::from),
        "--out-dir (or config key out_dir)",
    )?;
    let method = resolve_parsed(&args.method, &file, "method", "ek", parse_method)?;
    let alpha = check_alpha(resolve(args.alpha, file.get("alpha")?, 0.1))?;
    let block_size = check_block(resolve(args.block_size, file.get("block_size")?, 1))?;
    let split = resolve_parsed(&args.split, &file, "split", "random", parse_split)?;
    let ratio = check_ratio(resolve(args.split_ratio, file.get("split_ratio")?, 0.5))?;
    let seed = resolve(args.seed, file.get("seed")?, 0);
    let threshold =
        check_threshold(resolve(args.var_threshold, file.get("var_threshold")?, 0.8))?;
    let modulation =
        resolve_parsed(&args.modulation, &file, "modulation", "training-std", parse_modulation)?;
    let truth = kernel_for(method, &args.kernel)?;

    let ds = format::read_dataset(&args.input)?;
    let plan = make_split(ds.t_len(), ratio, split, seed)?.adjust_for_blocking(block_size, alpha)?;
    let family = PermutationFamily::new(plan.l(), block_size)?;
    let predictor = match &truth {
        Some(kernel) => fit_oracle(&ds, kernel)?,
        None => fit(method, &ds, &plan.train, &fit_config(threshold))?,
    };
    stability_warning(&predictor);
    let x_next = ds.frame(ds.t_len() - 1);
    let band = conformal_band_with(&ds, &plan, &predictor, &family, alpha, x_next, modulation)?;

    let contained = match &args.check {
        Some(cpath) => {
            let probe = format::read_dataset(cpath)?;
            let inside = band.contains(probe.frame(0))?;
            println!("check frame inside the band: {inside}");
            Some(inside)
        }
        None => None,
    };

    ensure_dir(&out_dir)?;
    format::write_grid(&out_dir.join("center.fts2"), band.center(), &ds)?;
    let mut wrote = vec!["center.fts2"];
    if let BandRadius::Finite(_) = band.radius() {
        let (lower, upper) = band.bounds()?;
        format::write_grid(&out_dir.join("lower.fts2"), &lower, &ds)?;
        format::write_grid(&out_dir.join("upper.fts2"), &upper, &ds)?;
        wrote.push("lower.fts2");
        wrote.push("upper.fts2");
    } else {
        eprintln!(
            "note: band radius is not finite at alpha {alpha}; lower/upper grids are not written"
        );
    }

    let radius_json = match band.radius() {
        BandRadius::Finite(k) => json!({ "kind": "finite", "value": k }),
        BandRadius::WholeSpace => json!({ "kind": "whole-space" }),
        BandRadius::Empty => json!({ "kind": "empty" }),
    };
    let size = band.size();
    let sidecar = json!({
        "method": method.name(),
        "alpha": alpha,
        "block_size": block_size,
        "split": split.name(),
        "split_ratio": ratio,
        "seed": seed,
        "train_size": plan.m(),
        "calib_size": plan.l(),
        "family_size": family.size(),
        "radius": radius_json,
        "band_size": if size.is_finite() { json!(size) } else { json!(null) },
        "transfer_frobenius": predictor.transfer_frobenius(),
        "check_contained": contained,
    });
    write_json(&out_dir.join("band.json"), &sidecar)?;
    wrote.push("band.json");

    match band.radius() {
        BandRadius::Finite(k) => println!("band radius {k}, band size {size}"),
        BandRadius::WholeSpace => println!("band is the whole space at alpha {alpha}"),
        BandRadius::Empty => println!("band is empty at alpha {alpha}"),
    }
    println!("wrote {} to {}", wrote.join(", "), out_dir.display());
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> CliResult<()> {
    use std::io::Write;
    let file = std::fs::File::create(path).at_path(path)?;
    let mut w = std::io::BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).at_path(path)?;
    w.write_all(b"\n")?;
    w.flush().at_path(path)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// rolling
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct RollingArgs {
    /// Input dataset (FTS2) on the raw scale
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    /// Frames per differenced training window
    #[arg(long, value_name = "W")]
    window: Option<usize>,
    /// Number of one-frame shifts to evaluate
    #[arg(long, value_name = "N")]
    shifts: Option<usize>,
    /// Differencing lag [default: 1]
    #[arg(long, value_name = "LAG")]
    lag: Option<usize>,
    /// Point predictor: naive|concurrent|ek|ek+|var|oracle [default: ek]
    #[arg(long, value_name = "METHOD")]
    method: Option<String>,
    /// Miscoverage level in (0, 1] [default: 0.1]
    #[arg(long, value_name = "ALPHA")]
    alpha: Option<f64>,
    /// Calibration block size [default: 1]
    #[arg(long = "block-size", value_name = "B")]
    block_size: Option<usize>,
    /// Train/calibration assignment: random|sequential [default: random]
    #[arg(long, value_name = "MODE")]
    split: Option<String>,
    /// Training fraction of the usable frames, in (0, 1) [default: 0.5]
    #[arg(long = "split-ratio", value_name = "RATIO")]
    split_ratio: Option<f64>,
    /// Master seed; every shift derives its own split seed [default: 0]
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,
    /// Explained-variance fraction for component selection [default: 0.8]
    #[arg(long = "var-threshold", value_name = "FRACTION")]
    var_threshold: Option<f64>,
    /// Band width profile: training-std|residual-std [default: training-std]
    #[arg(long, value_name = "SOURCE")]
    modulation: Option<String>,
    /// Coverage interval: normal|exact [default: normal]
    #[arg(long, value_name = "METHOD")]
    ci: Option<String>,
    /// Generating-kernel JSON (required for method oracle)
    #[arg(long, value_name = "PATH")]
    kernel: Option<PathBuf>,
    /// Output directory for shifts.csv, failures.csv, hit/width grids, summary
    #[arg(long = "out-dir", value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// key = value settings file (flags take precedence)
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
}

pub fn cmd_rolling(args: &RollingArgs) -> CliResult<()> {
    let file = load_config(&args.config)?;
    let out_dir = require(
        args.out_dir.clone(),
        file.raw("out_dir").map(PathBuf::from),
        "--out-dir (or config key out_dir)",
    )?;
    let window = require(args.window, file.get("window")?, "--window (or config key window)")?;
    let n_shifts = require(args.shifts, file.get("shifts")?, "--shifts (or config key shifts)")?;
    let method = resolve_parsed(&args.method, &file, "method", "ek", parse_method)?;
    let truth = kernel_for(method, &args.kernel)?;

    let mut cfg: RollingConfig<f64> = RollingConfig::new(window, n_shifts, method);
    cfg.alpha = check_alpha(resolve(args.alpha, file.get("alpha")?, 0.1))?;
    cfg.block_size = check_block(resolve(args.block_size, file.get("block_size")?, 1))?;
    cfg.split_mode = resolve_parsed(&args.split, &file, "split", "random", parse_split)?;
    cfg.split_ratio = check_ratio(resolve(args.split_ratio, file.get("split_ratio")?, 0.5))?;
    cfg.master_seed = resolve(args.seed, file.get("seed")?, 0);
    cfg.fit = fit_config(check_threshold(resolve(
        args.var_threshold,
        file.get("var_threshold")?,
        0.8,
    ))?);
    cfg.modulation =
        resolve_parsed(&args.modulation, &file, "modulation", "training-std", parse_modulation)?;
    cfg.ci = resolve_parsed(&args.ci, &file, "ci", "normal", parse_ci)?;
    cfg.diff_lag = {
        let lag = resolve(args.lag, file.get("lag")?, 1);
        if lag == 0 {
            return Err(CliError::usage("differencing lag must be at least 1"));
        }
        lag
    };
    cfg.truth = truth;

    let ds = format::read_dataset(&args.input)?;
    let report = rolling_run(&ds, &cfg)?;

    ensure_dir(&out_dir)?;
    csvio::write_rolling_shifts(&out_dir.join("shifts.csv"), &report)?;
    csvio::write_rolling_failures(&out_dir.join("failures.csv"), &report)?;
    let hits = Field::new(report.hit_counts.mapv(|c| c as f64));
    format::write_grid(&out_dir.join("hits.fts2"), &hits, &ds)?;
    let width = Field::new(report.width_mean.clone());
    format::write_grid(&out_dir.join("width_mean.fts2"), &width, &ds)?;

    let summary = json!({
        "window": cfg.window,
        "shifts_requested": cfg.n_shifts,
        "n_ok": report.n_ok,
        "n_failed": report.failures.len(),
        "coverage": report.coverage,
        "ci_low": report.ci_low,
        "ci_high": report.ci_high,
        "mean_band_size": report.mean_band_size,
        "method": cfg.method.name(),
        "alpha": cfg.alpha,
        "block_size": cfg.block_size,
        "lag": cfg.diff_lag,
        "split": cfg.split_mode.name(),
        "split_ratio": cfg.split_ratio,
        "seed": cfg.master_seed,
        "ci_method": cfg.ci.name(),
    });
    write_json(&out_dir.join("summary.json"), &summary)?;

    let covered = report.shifts.iter().filter(|s| s.covered).count();
    println!(
        "coverage {:.3} [{:.3}, {:.3}] over {} shifts ({} covered, {} failed); mean band size {:.4}",
        report.coverage,
        report.ci_low,
        report.ci_high,
        report.n_ok,
        covered,
        report.failures.len(),
        report.mean_band_size
    );
    println!(
        "wrote shifts.csv, failures.csv, hits.fts2, width_mean.fts2, summary.json to {}",
        out_dir.display()
    );
    Ok(())
}

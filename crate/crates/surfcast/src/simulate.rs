//! Surface autoregression simulator and the replication study driver.
//!
//! The data-generating process is a first-order autoregression on tensor
//! basis coefficients: a_t = (Ψ·W)·a_{t-1} + e_t, where W is the basis Gram
//! matrix on the simulation grid and Ψ is a dense coefficient matrix scaled
//! to a target Frobenius norm. Innovations are multivariate Student t
//! (heavy-tailed, the default) or Gaussian, with a structured scale matrix.
//! Frames are the coefficient paths synthesized on the grid. The recursion
//! starts at zero and runs a warm-up stretch before recording.
//!
//! [`run_study`] replays the full simulation experiment: for each (series
//! length, block size) case and each replication, simulate a path plus one
//! extra frame, build every requested predictor on the same path, wrap each
//! in a conformal band, and test whether the band captures the held-out
//! frame. Replications are independent seeded streams, so results are
//! byte-identical regardless of thread count.

use ndarray::{Array1, Array2, ArrayView2};
use rayon::prelude::*;

use crate::basis::{eval_basis_matrix, gram_matrix, BasisKind, BasisSystem1D, TensorBasis};
use crate::conformal::{
    conformal_band_with, make_split, ModulationSource, PermutationFamily, SplitMode,
};
use crate::error::{Error, Result};
use crate::far::{fit, fit_oracle, fit_scored, prepare_score_state, FarVariant, FitConfig, TrueKernel};
use crate::grid::{FtsDataset, GridDomain, SurfaceField};
use crate::linalg;
use crate::rng::{derive_rng, mix_seed};
use crate::scalar::Scalar;
use crate::stats::{clopper_pearson_ci99, normal_ci99};

/// Innovation distribution family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InnovationKind {
    /// Multivariate Student t with `t_df` degrees of freedom.
    #[default]
    StudentT,
    /// Multivariate Gaussian.
    Gaussian,
}

impl InnovationKind {
    pub fn name(&self) -> &'static str {
        match self {
            InnovationKind::StudentT => "t",
            InnovationKind::Gaussian => "gaussian",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "t" | "student-t" => Some(InnovationKind::StudentT),
            "gaussian" | "normal" => Some(InnovationKind::Gaussian),
            _ => None,
        }
    }
}

/// Full description of one simulated series.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig<S> {
    pub n1: usize,
    pub n2: usize,
    /// Number of recorded frames.
    pub t_len: usize,
    pub basis_kind: BasisKind,
    pub basis_u: usize,
    pub basis_v: usize,
    /// Unscaled coefficient matrix: this value on the diagonal.
    pub psi_diag: S,
    /// Unscaled coefficient matrix: this value off the diagonal.
    pub psi_offdiag: S,
    /// Target Frobenius norm of the scaled coefficient matrix.
    pub psi_norm: S,
    pub innovation: InnovationKind,
    /// Degrees of freedom for Student t innovations.
    pub t_df: S,
    pub innovation_diag: S,
    pub innovation_offdiag: S,
    /// Warm-up steps discarded before recording.
    pub warm_up: usize,
    pub seed: u64,
}

impl<S: Scalar> Default for SimulationConfig<S> {
    fn default() -> Self {
        SimulationConfig {
            n1: 100,
            n2: 100,
            t_len: 100,
            basis_kind: BasisKind::BsplineCubic,
            basis_u: 5,
            basis_v: 5,
            psi_diag: S::cast(0.8),
            psi_offdiag: S::cast(0.3),
            psi_norm: S::cast(0.9),
            innovation: InnovationKind::StudentT,
            t_df: S::cast(4.0),
            innovation_diag: S::cast(0.5),
            innovation_offdiag: S::cast(0.3),
            warm_up: 50,
            seed: 0,
        }
    }
}

/// Draws one multivariate sample: Gaussian with the given scale matrix, or
/// Student t when `df` is provided (the Gaussian draw divided by
/// sqrt(chi-square(df)/df)).
pub fn mvt_sample<S: Scalar, R: rand::Rng + ?Sized>(
    scale: &ArrayView2<S>,
    df: Option<S>,
    rng: &mut R,
) -> Result<Array1<S>> {
    const OP: &str = "simulate::mvt_sample";
    let factor = linalg::psd_factor(scale)?;
    if let Some(d) = df {
        if !(d > S::zero()) {
            return Err(Error::argument(OP, format!("degrees of freedom {d} must be positive")));
        }
    }
    Ok(sample_prefactored(&factor, df, rng))
}

fn sample_prefactored<S: Scalar, R: rand::Rng + ?Sized>(
    factor: &Array2<S>,
    df: Option<S>,
    rng: &mut R,
) -> Array1<S> {
    let k = factor.nrows();
    let z = Array1::from_iter((0..k).map(|_| S::standard_normal(rng)));
    let mut x = factor.dot(&z);
    if let Some(d) = df {
        let w = S::chi_square(rng, d).expect("df validated positive");
        let scale = (d / w).sqrt();
        x.mapv_inplace(|v| v * scale);
    }
    x
}

fn build_tensor_basis(cfg_kind: BasisKind, ku: usize, kv: usize) -> Result<TensorBasis> {
    let u = BasisSystem1D::new(cfg_kind, ku)?;
    let v = BasisSystem1D::new(cfg_kind, kv)?;
    Ok(TensorBasis::new(u, v))
}

/// Structured square matrix: `diag` on the diagonal, `offdiag` elsewhere.
fn structured_matrix<S: Scalar>(k: usize, diag: S, offdiag: S) -> Array2<S> {
    let mut m = Array2::from_elem((k, k), offdiag);
    for i in 0..k {
        m[[i, i]] = diag;
    }
    m
}

/// Simulates one series and returns it with the kernel that generated it.
pub fn simulate_far1<S: Scalar>(cfg: &SimulationConfig<S>) -> Result<(FtsDataset<S>, TrueKernel<S>)> {
    const OP: &str = "simulate::far1";
    if cfg.t_len == 0 {
        return Err(Error::argument(OP, "t_len must be at least 1"));
    }
    let domain = GridDomain::unit(cfg.n1, cfg.n2)?;
    let tb = build_tensor_basis(cfg.basis_kind, cfg.basis_u, cfg.basis_v)?;
    let k = tb.len();
    let w = gram_matrix(&tb, &domain)?;

    let mut psi = structured_matrix(k, cfg.psi_diag, cfg.psi_offdiag);
    let frob = linalg::frobenius(&psi.view());
    if !(frob > S::zero()) {
        return Err(Error::argument(OP, "coefficient matrix is zero"));
    }
    let scale = cfg.psi_norm / frob;
    psi.mapv_inplace(|x| x * scale);

    let op = psi.dot(&w);
    let sigma = structured_matrix(k, cfg.innovation_diag, cfg.innovation_offdiag);
    let factor = linalg::psd_factor(&sigma.view())?;
    let df = match cfg.innovation {
        InnovationKind::StudentT => {
            if !(cfg.t_df > S::zero()) {
                return Err(Error::argument(OP, format!("degrees of freedom {} must be positive", cfg.t_df)));
            }
            Some(cfg.t_df)
        }
        InnovationKind::Gaussian => None,
    };

    let mut rng = derive_rng(cfg.seed, &[]);
    let mut a = Array1::<S>::zeros(k);
    for _ in 0..cfg.warm_up {
        a = op.dot(&a) + sample_prefactored(&factor, df, &mut rng);
    }
    let mut coeffs = Array2::<S>::zeros((cfg.t_len, k));
    for t in 0..cfg.t_len {
        a = op.dot(&a) + sample_prefactored(&factor, df, &mut rng);
        for j in 0..k {
            coeffs[[t, j]] = a[j];
        }
    }

    let phi = eval_basis_matrix(&tb, &domain)?;
    let frames_flat = coeffs.dot(&phi);
    let frames: Vec<SurfaceField<S>> = frames_flat
        .rows()
        .into_iter()
        .map(|row| {
            SurfaceField::new(
                Array2::from_shape_vec((cfg.n1, cfg.n2), row.to_vec()).expect("grid-sized row"),
            )
        })
        .collect();
    let ds = FtsDataset::new(domain, frames, None, None)?;
    let truth = TrueKernel::new(tb, psi, w)?;
    Ok((ds, truth))
}

/// One experimental cell: series length (model frames) and block size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StudyCase {
    pub t_len: usize,
    pub block_size: usize,
}

/// Confidence interval method for aggregate coverage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CiMethod {
    /// Normal approximation (default).
    #[default]
    Normal,
    /// Exact Clopper-Pearson.
    ClopperPearson,
}

impl CiMethod {
    pub fn name(&self) -> &'static str {
        match self {
            CiMethod::Normal => "normal",
            CiMethod::ClopperPearson => "exact",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "normal" => Some(CiMethod::Normal),
            "exact" | "clopper-pearson" => Some(CiMethod::ClopperPearson),
            _ => None,
        }
    }
}

/// Full study specification.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig<S> {
    pub methods: Vec<FarVariant>,
    pub cases: Vec<StudyCase>,
    pub n_reps: usize,
    pub alpha: S,
    pub split_mode: SplitMode,
    pub split_ratio: f64,
    pub master_seed: u64,
    /// Simulation template; `t_len` and `seed` are overridden per replication.
    pub sim: SimulationConfig<S>,
    pub fit: FitConfig<S>,
    pub modulation: ModulationSource,
    pub ci: CiMethod,
}

impl<S: Scalar> StudyConfig<S> {
    /// Study over the given cases with every other knob at its default.
    pub fn new(methods: Vec<FarVariant>, cases: Vec<StudyCase>, n_reps: usize) -> Self {
        StudyConfig {
            methods,
            cases,
            n_reps,
            alpha: S::cast(0.1),
            split_mode: SplitMode::Random,
            split_ratio: 0.5,
            master_seed: 0,
            sim: SimulationConfig::default(),
            fit: FitConfig::default(),
            modulation: ModulationSource::TrainingStd,
            ci: CiMethod::Normal,
        }
    }
}

/// One replication outcome for one method.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRecord<S> {
    pub method: FarVariant,
    pub t_len: usize,
    pub block_size: usize,
    pub rep: usize,
    pub covered: bool,
    pub band_size: S,
    pub seed: u64,
}

/// A replication that produced no band (for one method, or for every method
/// when the simulation or split itself failed).
#[derive(Debug, Clone, PartialEq)]
pub struct StudyFailure {
    pub method: Option<FarVariant>,
    pub t_len: usize,
    pub block_size: usize,
    pub rep: usize,
    pub seed: u64,
    pub message: String,
}

/// Per-(case, method) summary.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyAggregate<S> {
    pub method: FarVariant,
    pub t_len: usize,
    pub block_size: usize,
    pub n_ok: usize,
    pub n_failed: usize,
    pub coverage: S,
    pub ci_low: S,
    pub ci_high: S,
    pub mean_band_size: S,
}

/// Records, failures, and aggregates of one study run.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult<S> {
    pub records: Vec<StudyRecord<S>>,
    pub failures: Vec<StudyFailure>,
    pub aggregates: Vec<StudyAggregate<S>>,
}

enum RepOutcome<S> {
    /// Simulation or split failed; no method produced anything.
    Aborted(String),
    /// Per-method band results, aligned with the configured method list.
    Methods(Vec<std::result::Result<(bool, S), String>>),
}

struct RepOutput<S> {
    case_idx: usize,
    rep: usize,
    seed: u64,
    outcome: RepOutcome<S>,
}

fn run_one_rep<S: Scalar>(cfg: &StudyConfig<S>, case: &StudyCase, seed: u64) -> RepOutcome<S> {
    let t_model = case.t_len;
    let mut sim_cfg = cfg.sim.clone();
    sim_cfg.t_len = t_model + 1;
    sim_cfg.seed = mix_seed(seed, &[0]);
    let (ds, truth) = match simulate_far1(&sim_cfg) {
        Ok(x) => x,
        Err(e) => return RepOutcome::Aborted(format!("simulation failed: {e}")),
    };

    // The split covers the first t_model frames; the extra frame is held out.
    let plan = make_split(t_model, cfg.split_ratio, cfg.split_mode, mix_seed(seed, &[1]))
        .and_then(|p| p.adjust_for_blocking(case.block_size, cfg.alpha));
    let plan = match plan {
        Ok(p) => p,
        Err(e) => return RepOutcome::Aborted(format!("split failed: {e}")),
    };
    let family = match PermutationFamily::new(plan.l(), case.block_size) {
        Ok(f) => f,
        Err(e) => return RepOutcome::Aborted(format!("permutation family failed: {e}")),
    };
    let x_next = ds.frame(t_model - 1);
    let y_test = ds.frame(t_model);

    // The score-space variants share one decomposition of this path.
    let needs_scores = cfg.methods.iter().any(|m| {
        matches!(m, FarVariant::Ek | FarVariant::EkPlus | FarVariant::VarScores)
    });
    let score_state = if needs_scores {
        Some(prepare_score_state(&ds, &plan.train, &cfg.fit))
    } else {
        None
    };

    let outcomes = cfg
        .methods
        .iter()
        .map(|&method| -> std::result::Result<(bool, S), String> {
            let predictor = match method {
                FarVariant::Oracle => fit_oracle(&ds, &truth),
                FarVariant::Naive | FarVariant::Concurrent => {
                    fit(method, &ds, &plan.train, &cfg.fit)
                }
                FarVariant::Ek | FarVariant::EkPlus | FarVariant::VarScores => {
                    match score_state.as_ref().expect("prepared above") {
                        Ok(state) => fit_scored(method, state, &cfg.fit),
                        Err(e) => return Err(format!("fit failed: {e}")),
                    }
                }
            };
            let predictor = predictor.map_err(|e| format!("fit failed: {e}"))?;
            let band = conformal_band_with(
                &ds,
                &plan,
                &predictor,
                &family,
                cfg.alpha,
                x_next,
                cfg.modulation,
            )
            .map_err(|e| format!("band failed: {e}"))?;
            let covered = band.contains(y_test).map_err(|e| format!("membership failed: {e}"))?;
            Ok((covered, band.size()))
        })
        .collect();
    RepOutcome::Methods(outcomes)
}

/// Runs the replication study described by `cfg`.
///
/// Output ordering is (case, replication, method) regardless of the worker
/// count; replication seeds derive from the master seed and the case and
/// replication indices alone.
pub fn run_study<S: Scalar>(cfg: &StudyConfig<S>) -> Result<StudyResult<S>> {
    const OP: &str = "simulate::run_study";
    if cfg.methods.is_empty() {
        return Err(Error::argument(OP, "no methods requested"));
    }
    if cfg.cases.is_empty() {
        return Err(Error::argument(OP, "no cases requested"));
    }
    if cfg.n_reps == 0 {
        return Err(Error::argument(OP, "n_reps must be at least 1"));
    }
    for case in &cfg.cases {
        if case.t_len < 5 {
            return Err(Error::argument(
                OP,
                format!("case t_len {} too short for a split fit", case.t_len),
            ));
        }
        if case.block_size == 0 {
            return Err(Error::argument(OP, "block size must be at least 1"));
        }
    }

    let jobs: Vec<(usize, usize)> = (0..cfg.cases.len())
        .flat_map(|c| (0..cfg.n_reps).map(move |r| (c, r)))
        .collect();
    let mut outputs: Vec<RepOutput<S>> = jobs
        .par_iter()
        .map(|&(case_idx, rep)| {
            let seed = mix_seed(cfg.master_seed, &[case_idx as u64, rep as u64]);
            let outcome = run_one_rep(cfg, &cfg.cases[case_idx], seed);
            RepOutput { case_idx, rep, seed, outcome }
        })
        .collect();
    outputs.sort_by_key(|o| (o.case_idx, o.rep));

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for out in &outputs {
        let case = &cfg.cases[out.case_idx];
        match &out.outcome {
            RepOutcome::Aborted(msg) => failures.push(StudyFailure {
                method: None,
                t_len: case.t_len,
                block_size: case.block_size,
                rep: out.rep,
                seed: out.seed,
                message: msg.clone(),
            }),
            RepOutcome::Methods(list) => {
                for (method, res) in cfg.methods.iter().zip(list.iter()) {
                    match res {
                        Ok((covered, size)) => records.push(StudyRecord {
                            method: *method,
                            t_len: case.t_len,
                            block_size: case.block_size,
                            rep: out.rep,
                            covered: *covered,
                            band_size: *size,
                            seed: out.seed,
                        }),
                        Err(msg) => failures.push(StudyFailure {
                            method: Some(*method),
                            t_len: case.t_len,
                            block_size: case.block_size,
                            rep: out.rep,
                            seed: out.seed,
                            message: msg.clone(),
                        }),
                    }
                }
            }
        }
    }

    let mut aggregates = Vec::new();
    for case in &cfg.cases {
        for &method in &cfg.methods {
            let mut n_ok = 0usize;
            let mut n_cov = 0usize;
            let mut size_sum = S::zero();
            for r in records.iter().filter(|r| {
                r.method == method && r.t_len == case.t_len && r.block_size == case.block_size
            }) {
                n_ok += 1;
                if r.covered {
                    n_cov += 1;
                }
                size_sum += r.band_size;
            }
            let n_failed = failures
                .iter()
                .filter(|f| {
                    f.t_len == case.t_len
                        && f.block_size == case.block_size
                        && (f.method.is_none() || f.method == Some(method))
                })
                .count();
            let (coverage, ci_low, ci_high, mean_size) = if n_ok > 0 {
                let p = S::from_index(n_cov) / S::from_index(n_ok);
                let (lo, hi) = match cfg.ci {
                    CiMethod::Normal => normal_ci99(p, n_ok),
                    CiMethod::ClopperPearson => {
                        let (lo, hi) = clopper_pearson_ci99(n_cov, n_ok);
                        (S::cast(lo), S::cast(hi))
                    }
                };
                (p, lo, hi, size_sum / S::from_index(n_ok))
            } else {
                (S::nan(), S::nan(), S::nan(), S::nan())
            };
            aggregates.push(StudyAggregate {
                method,
                t_len: case.t_len,
                block_size: case.block_size,
                n_ok,
                n_failed,
                coverage,
                ci_low,
                ci_high,
                mean_band_size: mean_size,
            });
        }
    }
    Ok(StudyResult { records, failures, aggregates })
}

//! The seeded run loop: drives any optimizer on a problem and produces a
//! [`Trajectory`] of per-iteration records.
//!
//! Loss is evaluated every iteration through a cached quadratic form
//! (`f(w) = f_min + (w - w_hat)' H (w - w_hat) / 2`, exact for least
//! squares), so target and divergence detection are iteration-accurate at
//! `O(d * rank)` cost independent of the sample count.

use super::steps::*;
use super::{HyperParamsAnalytic, HyperParamsPractical};
use crate::problem::INTERPOLATION_RESIDUAL_TOL;
use crate::problem::{eigen_basis, hessian_of, least_squares_min_norm, LinearProblem};
use crate::rng::SeedStream;
use crate::{Error, Result};
use nalgebra::DMatrix;
use rand::Rng;

/// Divergence rule: a run diverges when its loss is non-finite or exceeds
/// `DIVERGENCE_FACTOR * (initial_loss + 1)`.
pub const DIVERGENCE_FACTOR: f64 = 1e8;

/// Optimizer family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Sgd,
    Nesterov,
    HeavyBall,
    Mass,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Method::Sgd => "sgd",
            Method::Nesterov => "nesterov",
            Method::HeavyBall => "heavyball",
            Method::Mass => "mass",
        };
        write!(f, "{s}")
    }
}

/// A fully specified optimizer: method plus hyper-parameters. MaSS may run
/// in either of its two equivalent forms; the analytic form additionally
/// records the Lyapunov value along the trajectory.
#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerSpec {
    Sgd { eta: f64 },
    Nesterov { eta: f64, gamma: f64 },
    HeavyBall { eta: f64, gamma: f64 },
    MassPractical(HyperParamsPractical),
    MassAnalytic(HyperParamsAnalytic),
}

impl OptimizerSpec {
    pub fn method(&self) -> Method {
        match self {
            OptimizerSpec::Sgd { .. } => Method::Sgd,
            OptimizerSpec::Nesterov { .. } => Method::Nesterov,
            OptimizerSpec::HeavyBall { .. } => Method::HeavyBall,
            OptimizerSpec::MassPractical(_) | OptimizerSpec::MassAnalytic(_) => Method::Mass,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check_eta_gamma = |eta: f64, gamma: f64| -> Result<()> {
            if !crate::finite_positive(eta) {
                return Err(Error::InvalidArgument(format!(
                    "step size must be positive, got {eta}"
                )));
            }
            if !(0.0..1.0).contains(&gamma) {
                return Err(Error::InvalidArgument(format!(
                    "gamma must lie in [0, 1), got {gamma}"
                )));
            }
            Ok(())
        };
        match self {
            OptimizerSpec::Sgd { eta } => check_eta_gamma(*eta, 0.0),
            OptimizerSpec::Nesterov { eta, gamma } | OptimizerSpec::HeavyBall { eta, gamma } => {
                check_eta_gamma(*eta, *gamma)
            }
            OptimizerSpec::MassPractical(p) => p.validate(),
            OptimizerSpec::MassAnalytic(p) => p.validate(),
        }
    }

    /// Flat key-value description for manifests.
    pub fn describe(&self) -> Vec<(String, String)> {
        let mut kv = vec![("method".into(), self.method().to_string())];
        match self {
            OptimizerSpec::Sgd { eta } => kv.push(("eta".into(), format!("{eta:.17e}"))),
            OptimizerSpec::Nesterov { eta, gamma } | OptimizerSpec::HeavyBall { eta, gamma } => {
                kv.push(("eta".into(), format!("{eta:.17e}")));
                kv.push(("gamma".into(), format!("{gamma:.17e}")));
            }
            OptimizerSpec::MassPractical(p) => {
                kv.push(("form".into(), "practical".into()));
                kv.push(("eta1".into(), format!("{:.17e}", p.eta1)));
                kv.push(("eta2".into(), format!("{:.17e}", p.eta2)));
                kv.push(("gamma".into(), format!("{:.17e}", p.gamma)));
            }
            OptimizerSpec::MassAnalytic(p) => {
                kv.push(("form".into(), "analytic".into()));
                kv.push(("eta".into(), format!("{:.17e}", p.eta)));
                kv.push(("alpha".into(), format!("{:.17e}", p.alpha)));
                kv.push(("delta".into(), format!("{:.17e}", p.delta)));
            }
        }
        kv
    }
}

/// How mini-batches are formed each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchScheme {
    /// `m` indices drawn i.i.d. uniform with replacement. This is the
    /// scheme the expectation analysis assumes (`E[H_m] = H` with the
    /// variance split across the batch).
    Iid { m: u64 },
    /// `m` distinct indices per iteration. Off-theory; available as a
    /// config option only.
    WithoutReplacement { m: u64 },
    /// The exact full gradient; deterministic.
    Full,
}

impl BatchScheme {
    fn validate(&self, n: usize) -> Result<()> {
        match *self {
            BatchScheme::Iid { m } => {
                if m == 0 {
                    return Err(Error::InvalidArgument("batch size must be >= 1".into()));
                }
            }
            BatchScheme::WithoutReplacement { m } => {
                if m == 0 || m as usize > n {
                    return Err(Error::InvalidArgument(format!(
                        "without-replacement batch size must lie in [1, n={n}], got {m}"
                    )));
                }
            }
            BatchScheme::Full => {}
        }
        Ok(())
    }
}

impl std::fmt::Display for BatchScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BatchScheme::Iid { m } => write!(f, "{m}"),
            BatchScheme::WithoutReplacement { m } => write!(f, "{m}-without-replacement"),
            BatchScheme::Full => write!(f, "full"),
        }
    }
}

/// Run-loop configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSettings {
    pub batch: BatchScheme,
    pub max_iters: u64,
    /// Record a trajectory row every this many iterations (the final
    /// iteration is always recorded).
    pub eval_every: u64,
    /// Stop as soon as the loss reaches this value.
    pub target_loss: Option<f64>,
    pub seed: u64,
}

impl RunSettings {
    fn validate(&self, n: usize) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be >= 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::InvalidArgument("eval_every must be >= 1".into()));
        }
        self.batch.validate(n)
    }
}

/// One recorded point of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRecord {
    pub iteration: u64,
    /// Empirical loss (half mean squared residual).
    pub loss: f64,
    /// Squared distance to the minimum-norm solution on the range of the
    /// Hessian; absent when the problem does not interpolate.
    pub dist_sq: Option<f64>,
    /// Lyapunov value `|v - w*|^2_{H^+} + (delta/alpha) |w - w*|^2`,
    /// recorded for analytic-form MaSS runs on interpolating problems.
    pub lyapunov: Option<f64>,
}

/// Output of [`run`]: the recorded points plus stop diagnostics.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
    pub diverged: bool,
    /// Iteration at which the target loss was first reached, if it was.
    pub reached_target: Option<u64>,
    pub spec: OptimizerSpec,
    pub settings: RunSettings,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Number of optimizer steps actually taken.
    pub iterations_run: u64,
}

/// Cached quadratic geometry of a problem's empirical loss.
pub struct Geometry {
    /// Empirical Hessian.
    h: DMatrix<f64>,
    /// Eigenvalues above the zero cutoff.
    lambda: Vec<f64>,
    /// `d x rank` matrix of the matching orthonormal eigenvectors.
    q: DMatrix<f64>,
    /// Minimum-norm least-squares solution.
    pub w_hat: Vec<f64>,
    /// Loss at `w_hat` (zero for interpolating problems).
    pub f_min: f64,
    /// Whether the relative fit residual is below the interpolation tolerance.
    pub interpolable: bool,
    d: usize,
}

impl Geometry {
    pub fn new(problem: &LinearProblem) -> Result<Self> {
        let h = hessian_of(problem);
        let basis = eigen_basis(&h)?;
        let q = basis.vectors.select_columns(&basis.nonzero);
        let lambda: Vec<f64> = basis.nonzero.iter().map(|&j| basis.values[j]).collect();
        let (w_hat, residual) = least_squares_min_norm(problem)?;
        let f_min = problem.empirical_loss(&w_hat);
        Ok(Geometry {
            h,
            lambda,
            q,
            w_hat,
            f_min,
            interpolable: residual <= INTERPOLATION_RESIDUAL_TOL,
            d: problem.d(),
        })
    }

    /// Reduced coordinates `z = Q' (w - w_hat)` of the error.
    fn reduced_error(&self, w: &[f64], z: &mut [f64]) {
        for (k, zk) in z.iter_mut().enumerate() {
            *zk = (0..self.d)
                .map(|a| self.q[(a, k)] * (w[a] - self.w_hat[a]))
                .sum();
        }
    }

    /// `(loss, dist_sq_on_range)` at `w`.
    pub fn eval(&self, w: &[f64]) -> (f64, f64) {
        let mut loss = self.f_min;
        let mut dist = 0.0;
        for (k, &l) in self.lambda.iter().enumerate() {
            let zk: f64 = (0..self.d)
                .map(|a| self.q[(a, k)] * (w[a] - self.w_hat[a]))
                .sum();
            loss += 0.5 * l * zk * zk;
            dist += zk * zk;
        }
        (loss, dist)
    }

    /// `|x - w_hat|^2_{H^+}` restricted to the range of `H`.
    pub fn hplus_norm_sq(&self, x: &[f64]) -> f64 {
        let mut z = vec![0.0; self.lambda.len()];
        self.reduced_error(x, &mut z);
        z.iter().zip(&self.lambda).map(|(zk, l)| zk * zk / l).sum()
    }

    /// Exact full gradient `H (w - w_hat)` of the quadratic part.
    pub fn full_gradient(&self, w: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.d];
        self.full_gradient_into(w, &mut g);
        g
    }

    pub(crate) fn full_gradient_into(&self, w: &[f64], g: &mut [f64]) {
        for (a, ga) in g.iter_mut().enumerate() {
            *ga = (0..self.d)
                .map(|b| self.h[(a, b)] * (w[b] - self.w_hat[b]))
                .sum();
        }
    }
}

enum StopReason {
    Target,
    Diverged,
    Cap,
}

/// Runs an optimizer from `w0 = 0` and returns the recorded trajectory.
///
/// The run stops early when the target loss is reached or when the loss
/// diverges (non-finite or above `1e8 * (initial_loss + 1)`). Identical
/// `(problem, spec, settings)` produce bit-identical trajectories.
pub fn run(
    problem: &LinearProblem,
    spec: &OptimizerSpec,
    settings: &RunSettings,
) -> Result<Trajectory> {
    let geometry = Geometry::new(problem)?;
    run_with_geometry(problem, &geometry, spec, settings)
}

/// [`run`] with a caller-cached [`Geometry`], for experiment layers that
/// launch many runs on one problem.
pub fn run_with_geometry(
    problem: &LinearProblem,
    geometry: &Geometry,
    spec: &OptimizerSpec,
    settings: &RunSettings,
) -> Result<Trajectory> {
    spec.validate()?;
    settings.validate(problem.n())?;

    let d = problem.d();
    let n = problem.n();
    let w0 = vec![0.0; d];
    let mut state = OptimizerState::new(&w0);
    let (initial_loss, _) = geometry.eval(&state.w);
    let divergence_threshold = DIVERGENCE_FACTOR * (initial_loss + 1.0);

    // Lyapunov bookkeeping applies to the analytic form on interpolating
    // problems; both squared norms are taken on the range of the Hessian
    // since no update ever moves along the null space.
    let lyapunov_params = match spec {
        OptimizerSpec::MassAnalytic(p) if geometry.interpolable => Some(*p),
        _ => None,
    };

    let mut rng = SeedStream::new(settings.seed).child(1).rng();
    let mut batch: Vec<usize> = Vec::new();
    let mut grad = vec![0.0; d];
    let mut pool: Vec<usize> = match settings.batch {
        BatchScheme::WithoutReplacement { .. } => (0..n).collect(),
        _ => Vec::new(),
    };

    let mut records: Vec<TrajectoryRecord> = Vec::new();
    let mut diverged = false;
    let mut reached_target = None;
    let final_loss;

    loop {
        let t = state.iteration;
        let (loss, dist_sq) = geometry.eval(&state.w);
        let stop = if !loss.is_finite() || loss > divergence_threshold {
            Some(StopReason::Diverged)
        } else if settings.target_loss.is_some_and(|tl| loss <= tl) {
            Some(StopReason::Target)
        } else if t >= settings.max_iters {
            Some(StopReason::Cap)
        } else {
            None
        };

        if (t.is_multiple_of(settings.eval_every) || stop.is_some())
            && records.last().map(|r| r.iteration) != Some(t)
        {
            let lyapunov = lyapunov_params
                .map(|p| geometry.hplus_norm_sq(&state.v) + (p.delta / p.alpha) * dist_sq);
            records.push(TrajectoryRecord {
                iteration: t,
                loss,
                dist_sq: geometry.interpolable.then_some(dist_sq),
                lyapunov,
            });
        }

        match stop {
            Some(StopReason::Target) => {
                reached_target = Some(t);
                final_loss = loss;
                break;
            }
            Some(StopReason::Diverged) => {
                diverged = true;
                final_loss = loss;
                break;
            }
            Some(StopReason::Cap) => {
                final_loss = loss;
                break;
            }
            None => {}
        }

        let point = match spec {
            OptimizerSpec::Sgd { .. } | OptimizerSpec::HeavyBall { .. } => &state.w,
            _ => &state.u,
        };
        match settings.batch {
            BatchScheme::Full => {
                geometry.full_gradient_into(point, &mut grad);
            }
            BatchScheme::Iid { m } => {
                batch.clear();
                for _ in 0..m {
                    batch.push(rng.random_range(0..n));
                }
                stochastic_gradient_into(problem, point, &batch, &mut grad)?;
            }
            BatchScheme::WithoutReplacement { m } => {
                let m = m as usize;
                for k in 0..m {
                    let j = rng.random_range(k..n);
                    pool.swap(k, j);
                }
                stochastic_gradient_into(problem, point, &pool[..m], &mut grad)?;
            }
        }

        match spec {
            OptimizerSpec::Sgd { eta } => step_sgd(&mut state, &grad, *eta),
            OptimizerSpec::Nesterov { eta, gamma } => {
                step_nesterov(&mut state, &grad, *eta, *gamma)
            }
            OptimizerSpec::HeavyBall { eta, gamma } => {
                step_heavy_ball(&mut state, &grad, *eta, *gamma)
            }
            OptimizerSpec::MassPractical(p) => step_mass_practical(&mut state, &grad, p),
            OptimizerSpec::MassAnalytic(p) => step_mass_analytic(&mut state, &grad, p),
        }
    }

    Ok(Trajectory {
        records,
        diverged,
        reached_target,
        spec: spec.clone(),
        settings: *settings,
        initial_loss,
        final_loss,
        iterations_run: state.iteration,
    })
}

impl Trajectory {
    /// Writes `iteration,loss,dist_sq,lyapunov` rows; unavailable cells are
    /// left empty. 17 significant digits throughout.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        use std::io::Write;
        let mut out =
            std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::Io {
                path: path.display().to_string(),
                source: e,
            })?);
        let werr = |e: std::io::Error| Error::Io {
            path: path.display().to_string(),
            source: e,
        };
        writeln!(out, "iteration,loss,dist_sq,lyapunov").map_err(werr)?;
        for r in &self.records {
            let opt = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
            writeln!(
                out,
                "{},{:.16e},{},{}",
                r.iteration,
                r.loss,
                opt(r.dist_sq),
                opt(r.lyapunov)
            )
            .map_err(werr)?;
        }
        out.flush().map_err(werr)
    }

    /// Flat key-value metadata sidecar content.
    pub fn manifest(&self) -> Vec<(String, String)> {
        let mut kv = self.spec.describe();
        kv.push(("m".into(), self.settings.batch.to_string()));
        kv.push(("seed".into(), self.settings.seed.to_string()));
        kv.push(("max_iters".into(), self.settings.max_iters.to_string()));
        kv.push(("eval_every".into(), self.settings.eval_every.to_string()));
        kv.push((
            "target_loss".into(),
            self.settings
                .target_loss
                .map(|v| format!("{v:.17e}"))
                .unwrap_or_else(|| "none".into()),
        ));
        kv.push(("initial_loss".into(), format!("{:.17e}", self.initial_loss)));
        kv.push(("final_loss".into(), format!("{:.17e}", self.final_loss)));
        kv.push(("iterations_run".into(), self.iterations_run.to_string()));
        kv.push(("diverged".into(), self.diverged.to_string()));
        kv.push((
            "reached_target".into(),
            self.reached_target
                .map(|t| t.to_string())
                .unwrap_or_else(|| "no".into()),
        ));
        kv
    }
}

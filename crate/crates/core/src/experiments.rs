//! Experiment drivers: optimizer comparison under grid search, batch-size
//! regime sweeps, and the verification suites for the Lyapunov contraction
//! and automatic variance reduction.
//!
//! Every driver is a deterministic function of `(inputs, seed)`: grid cells
//! and replicate runs draw their randomness from substreams keyed by cell
//! index and repeat index, so results do not depend on worker count.

use crate::optim::{
    optimal_hyperparams, run_with_geometry, BatchScheme, Geometry, HyperParamsAnalytic, Method,
    OptimizerSpec, RunSettings,
};
use crate::par::{run_jobs, Jobs};
use crate::problem::{
    batch_constants, spectral_profile, BatchSize, LinearProblem, SpectralProfile,
};
use crate::rng::SeedStream;
use crate::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;

/// Hyper-parameter grid for the baseline methods.
#[derive(Debug, Clone)]
pub struct GridSpec {
    /// Step-size candidates (log-spaced by default).
    pub eta_grid: Vec<f64>,
    /// Momentum candidates in `[0, 1)`; only momentum methods use it.
    pub gamma_grid: Vec<f64>,
    /// Seeds per grid cell.
    pub repeats: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            eta_grid: log_spaced(1e-4, 1.0, 25),
            gamma_grid: vec![0.0, 0.5, 0.8, 0.9, 0.95, 0.99],
            repeats: 5,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.eta_grid.is_empty() || self.gamma_grid.is_empty() {
            return Err(Error::InvalidArgument("empty hyper-parameter grid".into()));
        }
        if self.repeats < 3 {
            return Err(Error::InvalidArgument(format!(
                "need at least 3 repeats per cell, got {}",
                self.repeats
            )));
        }
        Ok(())
    }
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && count >= 2);
    let (a, b) = (lo.log10(), hi.log10());
    (0..count)
        .map(|k| 10f64.powf(a + (b - a) * k as f64 / (count - 1) as f64))
        .collect()
}

/// Outcome of one grid cell or one method summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CellOutcome {
    /// Median iterations-to-target over the repeats.
    Reached(u64),
    /// No repeat majority reached the target (divergence or iteration cap).
    Diverged,
}

impl CellOutcome {
    pub fn iterations(&self) -> Option<u64> {
        match self {
            CellOutcome::Reached(t) => Some(*t),
            CellOutcome::Diverged => None,
        }
    }
}

/// One evaluated grid cell.
#[derive(Debug, Clone)]
pub struct GridCell {
    pub method: Method,
    pub spec: OptimizerSpec,
    pub outcome: CellOutcome,
}

/// Per-method summary of the comparison.
#[derive(Debug, Clone)]
pub struct MethodSummary {
    pub method: Method,
    /// Winning hyper-parameters (for MaSS, the analytic optimum; untuned).
    pub best: OptimizerSpec,
    pub outcome: CellOutcome,
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub summaries: Vec<MethodSummary>,
    /// Every evaluated cell, for inspection and CSV output.
    pub cells: Vec<GridCell>,
    pub target_loss: f64,
    pub m: u64,
}

/// Median with unreached runs counting as infinite; `None` when the
/// majority of repeats failed to reach the target.
fn median_iterations(results: &[Option<u64>]) -> Option<u64> {
    let mut vals: Vec<Option<u64>> = results.to_vec();
    vals.sort_by_key(|v| v.unwrap_or(u64::MAX));
    vals[vals.len() / 2]
}

/// Runs each baseline over the grid (median iterations-to-target per cell,
/// best cell per method) and MaSS once with its analytic optimal
/// hyper-parameters, untuned.
#[allow(clippy::too_many_arguments)]
pub fn compare_optimizers(
    problem: &LinearProblem,
    m: u64,
    target_loss: f64,
    grid: &GridSpec,
    max_iters: u64,
    seed: u64,
    jobs: Jobs,
) -> Result<CompareReport> {
    grid.validate()?;
    if m == 0 {
        return Err(Error::InvalidArgument("batch size must be >= 1".into()));
    }
    let geometry = Geometry::new(problem)?;
    let profile = spectral_profile(problem)?;
    let (_, mass_practical) = optimal_hyperparams(&profile, BatchSize::Finite(m))?;

    let mut specs: Vec<OptimizerSpec> = Vec::new();
    for &eta in &grid.eta_grid {
        specs.push(OptimizerSpec::Sgd { eta });
    }
    for &gamma in &grid.gamma_grid {
        for &eta in &grid.eta_grid {
            specs.push(OptimizerSpec::Nesterov { eta, gamma });
            specs.push(OptimizerSpec::HeavyBall { eta, gamma });
        }
    }
    specs.push(OptimizerSpec::MassPractical(mass_practical));

    let stream = SeedStream::new(seed);
    let repeats = grid.repeats;
    let cells: Vec<GridCell> = run_jobs(specs, jobs, |cell_idx, spec| {
        let mut results = Vec::with_capacity(repeats);
        for rep in 0..repeats {
            let settings = RunSettings {
                batch: BatchScheme::Iid { m },
                max_iters,
                eval_every: max_iters.max(1),
                target_loss: Some(target_loss),
                seed: stream.child(cell_idx as u64).child(rep as u64).seed_value(),
            };
            let reached = run_with_geometry(problem, &geometry, &spec, &settings)
                .map(|t| t.reached_target)
                .unwrap_or(None);
            results.push(reached);
        }
        let outcome = match median_iterations(&results) {
            Some(t) => CellOutcome::Reached(t),
            None => CellOutcome::Diverged,
        };
        GridCell {
            method: spec.method(),
            spec,
            outcome,
        }
    });

    let mut summaries = Vec::new();
    for method in [
        Method::Sgd,
        Method::Nesterov,
        Method::HeavyBall,
        Method::Mass,
    ] {
        let best = cells
            .iter()
            .filter(|c| c.method == method)
            .min_by_key(|c| c.outcome.iterations().unwrap_or(u64::MAX));
        if let Some(best) = best {
            summaries.push(MethodSummary {
                method,
                best: best.spec.clone(),
                outcome: best.outcome,
            });
        }
    }
    Ok(CompareReport {
        summaries,
        cells,
        target_loss,
        m,
    })
}

/// One row of the batch-size regime sweep.
#[derive(Debug, Clone)]
pub struct RegimeRow {
    pub m: u64,
    /// Median iterations to target; `None` flags an unreached target.
    pub iterations: Option<u64>,
    /// Convergence speed `1 / iterations`.
    pub speed: Option<f64>,
    /// Theoretical speed proxy `1 / sqrt(kappa_m kappa_tilde_m)`.
    pub theory_speed: f64,
    pub params: HyperParamsAnalytic,
}

#[derive(Debug, Clone)]
pub struct RegimeReport {
    pub rows: Vec<RegimeRow>,
    /// `min(L1/L, kappa_tilde)` from the population constants when
    /// available, else from the empirical profile.
    pub m1_star: f64,
    /// `max(L1/L, kappa_tilde)` likewise.
    pub m2_star: f64,
    pub target_loss: f64,
}

/// Runs MaSS with analytically optimal hyper-parameters at each batch size
/// and measures the convergence speed `s(m) = 1 / median iterations`.
#[allow(clippy::too_many_arguments)]
pub fn regime_sweep(
    problem: &LinearProblem,
    m_list: &[u64],
    target_loss: f64,
    repeats: usize,
    max_iters: u64,
    seed: u64,
    population: Option<&SpectralProfile>,
    jobs: Jobs,
) -> Result<RegimeReport> {
    if m_list.is_empty() || m_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "m_list must be nonempty and strictly ascending".into(),
        ));
    }
    if repeats < 1 {
        return Err(Error::InvalidArgument("repeats must be >= 1".into()));
    }
    let geometry = Geometry::new(problem)?;
    let profile = spectral_profile(problem)?;
    let stream = SeedStream::new(seed);

    let rows: Vec<Result<RegimeRow>> = run_jobs(m_list.to_vec(), jobs, |idx, m| {
        let constants = batch_constants(&profile, BatchSize::Finite(m))?;
        let (analytic, _) = optimal_hyperparams(&profile, BatchSize::Finite(m))?;
        let mut results = Vec::with_capacity(repeats);
        for rep in 0..repeats {
            let settings = RunSettings {
                batch: BatchScheme::Iid { m },
                max_iters,
                eval_every: max_iters.max(1),
                target_loss: Some(target_loss),
                seed: stream.child(idx as u64).child(rep as u64).seed_value(),
            };
            let traj = run_with_geometry(
                problem,
                &geometry,
                &OptimizerSpec::MassAnalytic(analytic),
                &settings,
            )?;
            results.push(traj.reached_target);
        }
        let iterations = median_iterations(&results);
        Ok(RegimeRow {
            m,
            iterations,
            speed: iterations.map(|t| 1.0 / t.max(1) as f64),
            theory_speed: 1.0 / (constants.kappa_m * constants.kappa_tilde_m).sqrt(),
            params: analytic,
        })
    });
    let rows: Vec<RegimeRow> = rows.into_iter().collect::<Result<_>>()?;

    let source = population.unwrap_or(&profile);
    let (a, b) = (source.l1 / source.l, source.kappa_tilde);
    Ok(RegimeReport {
        rows,
        m1_star: a.min(b),
        m2_star: a.max(b),
        target_loss,
    })
}

/// Linear scaling rule check: are the optimal hyper-parameters at batch
/// size `k * m` within 15% componentwise of `k` times those at `m`?
pub fn linear_scaling_check(profile: &SpectralProfile, m: u64, k: u64) -> Result<bool> {
    if m == 0 || k == 0 {
        return Err(Error::InvalidArgument("m and k must be >= 1".into()));
    }
    let (a, _) = optimal_hyperparams(profile, BatchSize::Finite(m))?;
    let (b, _) = optimal_hyperparams(profile, BatchSize::Finite(k * m))?;
    let kf = k as f64;
    let within = |scaled: f64, actual: f64| (actual - scaled).abs() <= 0.15 * scaled.abs();
    Ok(within(kf * a.eta, b.eta) && within(kf * a.alpha, b.alpha) && within(kf * a.delta, b.delta))
}

/// Per-step Lyapunov contraction statistics over seeds.
#[derive(Debug, Clone)]
pub struct LyapunovReport {
    pub alpha: f64,
    /// `mean_ratio[t]` is the mean over seeds of `F_{t+1} / F_t`.
    pub mean_ratio: Vec<f64>,
    pub se_ratio: Vec<f64>,
}

impl LyapunovReport {
    /// True when every recorded mean ratio is within `se_multiplier`
    /// standard errors of the `(1 - alpha)` contraction bound.
    pub fn passes(&self, se_multiplier: f64) -> bool {
        self.mean_ratio
            .iter()
            .zip(&self.se_ratio)
            .all(|(m, se)| *m <= (1.0 - self.alpha) + se_multiplier * se)
    }

    /// Largest violation of the plain bound in standard-error units.
    pub fn worst_excess_se(&self) -> f64 {
        self.mean_ratio
            .iter()
            .zip(&self.se_ratio)
            .map(|(m, se)| (m - (1.0 - self.alpha)) / se.max(1e-300))
            .fold(f64::MIN, f64::max)
    }
}

/// Runs analytic-form MaSS for `t_max` iterations over `n_seeds` seeds and
/// aggregates the per-step ratio of the Lyapunov function
/// `F = |v - w*|^2_{H^+} + (delta/alpha) |w - w*|^2`.
#[allow(clippy::too_many_arguments)]
pub fn lyapunov_suite(
    problem: &LinearProblem,
    params: &HyperParamsAnalytic,
    m: u64,
    t_max: u64,
    n_seeds: usize,
    seed: u64,
    jobs: Jobs,
) -> Result<LyapunovReport> {
    params.validate()?;
    if n_seeds < 2 {
        return Err(Error::InvalidArgument("need at least 2 seeds".into()));
    }
    let geometry = Geometry::new(problem)?;
    if !geometry.interpolable {
        return Err(Error::NotInterpolable {
            residual: f64::NAN,
            tolerance: crate::problem::INTERPOLATION_RESIDUAL_TOL,
        });
    }
    let stream = SeedStream::new(seed);
    let spec = OptimizerSpec::MassAnalytic(*params);
    let ratios: Vec<Result<Vec<f64>>> = run_jobs((0..n_seeds).collect(), jobs, |_, s| {
        let settings = RunSettings {
            batch: BatchScheme::Iid { m },
            max_iters: t_max,
            eval_every: 1,
            target_loss: None,
            seed: stream.child(s as u64).seed_value(),
        };
        let traj = run_with_geometry(problem, &geometry, &spec, &settings)?;
        let f: Vec<f64> = traj
            .records
            .iter()
            .map(|r| r.lyapunov.expect("analytic interpolating run records F"))
            .collect();
        Ok(f.windows(2).map(|w| w[1] / w[0]).collect())
    });
    let ratios: Vec<Vec<f64>> = ratios.into_iter().collect::<Result<_>>()?;

    let steps = ratios[0].len();
    let n = n_seeds as f64;
    let mut mean_ratio = vec![0.0; steps];
    let mut se_ratio = vec![0.0; steps];
    for t in 0..steps {
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for r in &ratios {
            sum += r[t];
            sum_sq += r[t] * r[t];
        }
        let mean = sum / n;
        let var = ((sum_sq / n - mean * mean).max(0.0)) * n / (n - 1.0);
        mean_ratio[t] = mean;
        se_ratio[t] = (var / n).sqrt();
    }
    Ok(LyapunovReport {
        alpha: params.alpha,
        mean_ratio,
        se_ratio,
    })
}

/// One row of the variance-reduction suite.
#[derive(Debug, Clone, Copy)]
pub struct AvrRow {
    pub radius: f64,
    /// Monte-Carlo estimate of `tr Var[grad]` at `w* + radius * v`.
    pub measured_trace: f64,
    /// Standard error of the measured trace (group-split estimate).
    pub measured_se: f64,
    /// The bound `radius^2 * tr(E[(H_1 - H)^2])`, computed exactly from
    /// the dataset.
    pub bound: f64,
}

/// Measures single-sample gradient variance at points `w* + r v` along one
/// fixed random unit direction `v` and compares against the interpolation
/// variance bound.
pub fn avr_suite(
    problem: &LinearProblem,
    radii: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<Vec<AvrRow>> {
    if radii.is_empty() {
        return Err(Error::InvalidArgument("need at least one radius".into()));
    }
    if n_samples < 100 {
        return Err(Error::InvalidArgument("need n_samples >= 100".into()));
    }
    let d = problem.d();
    let n = problem.n();
    let geometry = Geometry::new(problem)?;
    let w_star = geometry.w_hat.clone();

    // Exact bound constant tr(M1 - H^2) = mean |x|^4 - |H|_F^2.
    let mut mean_norm4 = 0.0;
    for i in 0..n {
        let x = problem.row(i);
        let ns: f64 = x.iter().map(|v| v * v).sum();
        mean_norm4 += ns * ns;
    }
    mean_norm4 /= n as f64;
    let h = &crate::problem::spectral_profile(problem)?.hessian;
    let h_frob_sq: f64 = h.iter().map(|v| v * v).sum();
    let bound_constant = mean_norm4 - h_frob_sq;

    let stream = SeedStream::new(seed);
    let mut dir_rng = stream.child(0).rng();
    let mut v: Vec<f64> = (0..d).map(|_| dir_rng.sample(StandardNormal)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut v {
        *x /= norm;
    }

    let groups = 10usize;
    let per_group = n_samples / groups;
    let mut rows = Vec::with_capacity(radii.len());
    for (ri, &radius) in radii.iter().enumerate() {
        if radius < 0.0 {
            return Err(Error::InvalidArgument("radii must be nonnegative".into()));
        }
        let w: Vec<f64> = w_star.iter().zip(&v).map(|(a, b)| a + radius * b).collect();
        let mut rng = stream.child(1 + ri as u64).rng();
        // Per-group trace-of-variance estimates.
        let mut traces = Vec::with_capacity(groups);
        for _ in 0..groups {
            let mut sum = vec![0.0; d];
            let mut sum_sq = vec![0.0; d];
            for _ in 0..per_group {
                let i = rng.random_range(0..n);
                let x = problem.row(i);
                let r = crate::problem::dot(x, &w) - problem.target(i);
                for j in 0..d {
                    let g = r * x[j];
                    sum[j] += g;
                    sum_sq[j] += g * g;
                }
            }
            let k = per_group as f64;
            let trace: f64 = (0..d)
                .map(|j| {
                    let mean = sum[j] / k;
                    ((sum_sq[j] / k - mean * mean) * k / (k - 1.0)).max(0.0)
                })
                .sum();
            traces.push(trace);
        }
        let mean_trace = traces.iter().sum::<f64>() / groups as f64;
        let var = traces
            .iter()
            .map(|t| (t - mean_trace) * (t - mean_trace))
            .sum::<f64>()
            / (groups as f64 - 1.0);
        rows.push(AvrRow {
            radius,
            measured_trace: mean_trace,
            measured_se: (var / groups as f64).sqrt(),
            bound: radius * radius * bound_constant,
        });
    }
    Ok(rows)
}

/// Least-squares slope of `ln(value)` against iteration, using records
/// inside `(floor, ceiling)` after dropping a leading transient fraction.
pub fn fit_log_slope(
    points: &[(u64, f64)],
    drop_head_fraction: f64,
    floor: f64,
    ceiling: f64,
) -> Option<f64> {
    let start = (points.len() as f64 * drop_head_fraction) as usize;
    let filtered: Vec<(f64, f64)> = points[start.min(points.len())..]
        .iter()
        .filter(|(_, v)| *v > floor && *v < ceiling && v.is_finite())
        .map(|(t, v)| (*t as f64, v.ln()))
        .collect();
    if filtered.len() < 4 {
        return None;
    }
    let n = filtered.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for (x, y) in &filtered {
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let denom = n * sxx - sx * sx;
    if denom <= 0.0 {
        return None;
    }
    Some((n * sxy - sx * sy) / denom)
}

/// Median-of-pairwise-slopes (Theil-Sen) estimate of the `ln(value)` decay
/// rate. Robust to the multiplicative spikes of marginally stable runs,
/// where a least-squares fit is dominated by excursions.
pub fn theil_sen_log_slope(points: &[(u64, f64)], drop_head_fraction: f64) -> Option<f64> {
    let start = (points.len() as f64 * drop_head_fraction) as usize;
    let pts: Vec<(f64, f64)> = points[start.min(points.len())..]
        .iter()
        .filter(|(_, v)| *v > 0.0 && v.is_finite())
        .map(|(t, v)| (*t as f64, v.ln()))
        .collect();
    if pts.len() < 4 {
        return None;
    }
    let mut slopes = Vec::with_capacity(pts.len() * (pts.len() - 1) / 2);
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            if pts[j].0 > pts[i].0 {
                slopes.push((pts[j].1 - pts[i].1) / (pts[j].0 - pts[i].0));
            }
        }
    }
    slopes.sort_by(f64::total_cmp);
    Some(slopes[slopes.len() / 2])
}

//! Spectral characterization of a least-squares problem: the Hessian
//! spectrum, the single-sample smoothness constant `L1`, the statistical
//! condition number `kappa_tilde`, and their mini-batch interpolations.

use super::{dot, LinearProblem};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Eigenvalues below `ZERO_EIGENVALUE_RTOL * lambda_max` are treated as
/// exact zeros: no update ever moves along the Hessian's null space, so
/// those directions carry no information.
pub const ZERO_EIGENVALUE_RTOL: f64 = 1e-10;

/// Relative fit-residual threshold below which a problem counts as
/// interpolable and distance-to-solution metrics are meaningful.
pub const INTERPOLATION_RESIDUAL_TOL: f64 = 1e-8;

/// Spectral constants of a problem (empirical or population).
///
/// `l1` is the smallest `c` with `E[|x|^2 x x'] <= c H` on the range of `H`;
/// `kappa_tilde` is the analogous constant for the `H^+`-weighted norm.
#[derive(Debug, Clone)]
pub struct SpectralProfile {
    pub hessian: DMatrix<f64>,
    /// Largest eigenvalue of the Hessian.
    pub l: f64,
    /// Smallest nonzero eigenvalue of the Hessian.
    pub mu: f64,
    pub l1: f64,
    pub kappa_tilde: f64,
    pub rank: usize,
}

impl SpectralProfile {
    /// Condition number `L / mu` over the nonzero spectrum.
    pub fn kappa(&self) -> f64 {
        self.l / self.mu
    }

    /// Single-sample stochastic condition number `L1 / mu`.
    pub fn kappa1(&self) -> f64 {
        self.l1 / self.mu
    }
}

/// Mini-batch size: either a finite i.i.d.-with-replacement batch or the
/// full deterministic gradient (the `m -> infinity` limit of the constants).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchSize {
    Finite(u64),
    Full,
}

impl BatchSize {
    pub fn finite(self) -> Option<u64> {
        match self {
            BatchSize::Finite(m) => Some(m),
            BatchSize::Full => None,
        }
    }
}

impl std::fmt::Display for BatchSize {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BatchSize::Finite(m) => write!(f, "{m}"),
            BatchSize::Full => write!(f, "full"),
        }
    }
}

/// The batch-m smoothness and condition constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchConstants {
    pub l_m: f64,
    pub kappa_m: f64,
    pub kappa_tilde_m: f64,
}

/// `L_m = L1/m + (m-1)L/m`, `kappa_m = L_m/mu`,
/// `kappa_tilde_m = kappa_tilde/m + (m-1)/m`; the full-batch limit is
/// `(L, kappa, 1)`.
pub fn batch_constants(profile: &SpectralProfile, m: BatchSize) -> Result<BatchConstants> {
    match m {
        BatchSize::Finite(0) => Err(Error::InvalidArgument("batch size must be >= 1".into())),
        BatchSize::Finite(m) => {
            let mf = m as f64;
            let l_m = profile.l1 / mf + (mf - 1.0) * profile.l / mf;
            Ok(BatchConstants {
                l_m,
                kappa_m: l_m / profile.mu,
                kappa_tilde_m: profile.kappa_tilde / mf + (mf - 1.0) / mf,
            })
        }
        BatchSize::Full => Ok(BatchConstants {
            l_m: profile.l,
            kappa_m: profile.l / profile.mu,
            kappa_tilde_m: 1.0,
        }),
    }
}

pub(crate) struct EigenBasis {
    /// Orthonormal eigenvectors, one column per eigenvalue.
    pub vectors: DMatrix<f64>,
    pub values: Vec<f64>,
    /// Indices of eigenvalues above the zero cutoff.
    pub nonzero: Vec<usize>,
}

pub(crate) fn hessian_of(problem: &LinearProblem) -> DMatrix<f64> {
    let d = problem.d();
    let mut h = DMatrix::zeros(d, d);
    for i in 0..problem.n() {
        let x = problem.row(i);
        for a in 0..d {
            if x[a] == 0.0 {
                continue;
            }
            for b in a..d {
                h[(a, b)] += x[a] * x[b];
            }
        }
    }
    let scale = 1.0 / problem.n() as f64;
    for a in 0..d {
        for b in a..d {
            let v = h[(a, b)] * scale;
            h[(a, b)] = v;
            h[(b, a)] = v;
        }
    }
    h
}

pub(crate) fn eigen_basis(h: &DMatrix<f64>) -> Result<EigenBasis> {
    let eig = h.clone().symmetric_eigen();
    let values: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    let lmax = values.iter().cloned().fold(0.0_f64, f64::max);
    if lmax <= 0.0 {
        return Err(Error::Numerical("zero Hessian: all features vanish".into()));
    }
    let nonzero: Vec<usize> = (0..values.len())
        .filter(|&j| values[j] > ZERO_EIGENVALUE_RTOL * lmax)
        .collect();
    Ok(EigenBasis {
        vectors: eig.eigenvectors,
        values,
        nonzero,
    })
}

/// Empirical spectral profile of a dataset.
///
/// `L1` and `kappa_tilde` are the top eigenvalues of the weighted second
/// moments `M = mean(w_i x_i x_i')` pulled back through `H^{+1/2}` on the
/// range of `H`, with weights `|x_i|^2` and `x_i' H^+ x_i` respectively.
pub fn spectral_profile(problem: &LinearProblem) -> Result<SpectralProfile> {
    let d = problem.d();
    let n = problem.n();
    let h = hessian_of(problem);
    let basis = eigen_basis(&h)?;
    let rank = basis.nonzero.len();

    // Restrict to the range of H: columns of Q are the nonzero-eigenvalue
    // eigenvectors, so z_i = Q' x_i are reduced coordinates.
    let q = basis.vectors.select_columns(&basis.nonzero);
    let lam: Vec<f64> = basis.nonzero.iter().map(|&j| basis.values[j]).collect();
    let l = lam.iter().cloned().fold(f64::MIN, f64::max);
    let mu = lam.iter().cloned().fold(f64::MAX, f64::min);

    // Accumulate reduced weighted second moments in one pass.
    let mut m1 = DMatrix::<f64>::zeros(rank, rank);
    let mut mt = DMatrix::<f64>::zeros(rank, rank);
    let mut z = vec![0.0; rank];
    for i in 0..n {
        let x = problem.row(i);
        for (k, zk) in z.iter_mut().enumerate() {
            *zk = (0..d).map(|a| q[(a, k)] * x[a]).sum();
        }
        let norm_sq = dot(x, x);
        let hplus_norm_sq: f64 = z.iter().zip(&lam).map(|(zk, l)| zk * zk / l).sum();
        for a in 0..rank {
            for b in a..rank {
                let zz = z[a] * z[b];
                m1[(a, b)] += norm_sq * zz;
                mt[(a, b)] += hplus_norm_sq * zz;
            }
        }
    }
    let scale = 1.0 / n as f64;
    for a in 0..rank {
        for b in a..rank {
            for m in [&mut m1, &mut mt] {
                let v = m[(a, b)] * scale;
                m[(a, b)] = v;
                m[(b, a)] = v;
            }
        }
    }

    // lambda_max of  Lam^{-1/2} M Lam^{-1/2}  in reduced coordinates.
    let weighted_top = |m: &DMatrix<f64>| -> f64 {
        let mut s = m.clone();
        for a in 0..rank {
            for b in 0..rank {
                s[(a, b)] /= (lam[a] * lam[b]).sqrt();
            }
        }
        s.symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::MIN, f64::max)
    };

    Ok(SpectralProfile {
        hessian: h,
        l,
        mu,
        l1: weighted_top(&m1),
        kappa_tilde: weighted_top(&mt),
        rank,
    })
}

/// Minimum-norm interpolating solution `w* = H^+ mean(y_i x_i)`.
///
/// Errors with [`Error::NotInterpolable`] when the least-squares fit leaves
/// a relative residual above [`INTERPOLATION_RESIDUAL_TOL`]; loss metrics
/// remain valid in that case, only distance-to-solution is unavailable.
pub fn min_norm_solution(problem: &LinearProblem) -> Result<Vec<f64>> {
    let (w, residual) = least_squares_min_norm(problem)?;
    if residual > INTERPOLATION_RESIDUAL_TOL {
        return Err(Error::NotInterpolable {
            residual,
            tolerance: INTERPOLATION_RESIDUAL_TOL,
        });
    }
    Ok(w)
}

/// Minimum-norm least-squares solution plus its relative fit residual
/// `sqrt(2 f_min) / (1 + rms(y))`.
pub(crate) fn least_squares_min_norm(problem: &LinearProblem) -> Result<(Vec<f64>, f64)> {
    let d = problem.d();
    let n = problem.n();
    let h = hessian_of(problem);
    let basis = eigen_basis(&h)?;
    let mut b = DVector::<f64>::zeros(d);
    for i in 0..n {
        let x = problem.row(i);
        let y = problem.target(i);
        for a in 0..d {
            b[a] += y * x[a];
        }
    }
    b /= n as f64;
    let mut w = DVector::<f64>::zeros(d);
    for &j in &basis.nonzero {
        let qj = basis.vectors.column(j);
        let coef = qj.dot(&b) / basis.values[j];
        w.axpy(coef, &qj, 1.0);
    }
    let w: Vec<f64> = w.iter().cloned().collect();
    let f_min = problem.empirical_loss(&w);
    let rms_y = (problem.targets_rms_sq()).sqrt();
    let residual = (2.0 * f_min).sqrt() / (1.0 + rms_y);
    Ok((w, residual))
}

impl LinearProblem {
    fn targets_rms_sq(&self) -> f64 {
        (0..self.n()).map(|i| self.target(i).powi(2)).sum::<f64>() / self.n() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{
        decoupled_population_profile, gaussian_population_profile, gen_component_decoupled,
        gen_gaussian,
    };
    use proptest::prelude::*;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn deterministic_rank_one_profile() {
        // All rows equal to e1: L = mu = L1 = kappa_tilde = 1.
        let features = vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let targets = vec![2.0, 2.0, 2.0];
        let p =
            LinearProblem::from_parts(features, targets, 3, 2, Some(vec![2.0, 0.0]), 0).unwrap();
        let s = spectral_profile(&p).unwrap();
        assert_eq!(s.rank, 1);
        assert!((s.l - 1.0).abs() < 1e-12);
        assert!((s.mu - 1.0).abs() < 1e-12);
        assert!((s.l1 - 1.0).abs() < 1e-12);
        assert!((s.kappa_tilde - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_hessian_is_an_error() {
        let p = LinearProblem::from_parts(vec![0.0, 0.0], vec![0.0, 0.0], 2, 1, None, 0).unwrap();
        assert!(spectral_profile(&p).is_err());
    }

    #[test]
    fn decoupled_estimator_matches_population() {
        // sigma1^2 = 1, sigma2^2 = 1/4: population L=1, mu=0.25, L1=6,
        // kappa_tilde=6; the empirical estimator lands within 5% at n=1e5.
        let p = gen_component_decoupled(1.0, 0.5, 100_000, 3).unwrap();
        let s = spectral_profile(&p).unwrap();
        assert!(rel_err(s.l, 1.0) < 0.05, "L = {}", s.l);
        assert!(rel_err(s.mu, 0.25) < 0.05, "mu = {}", s.mu);
        assert!(rel_err(s.l1, 6.0) < 0.05, "L1 = {}", s.l1);
        assert!(rel_err(s.kappa_tilde, 6.0) < 0.05, "kt = {}", s.kappa_tilde);
    }

    #[test]
    fn gaussian_statistical_condition_number_is_two_plus_d() {
        let p = gen_gaussian(&[1.0, 1.0, 1.0], 100_000, 1).unwrap();
        let s = spectral_profile(&p).unwrap();
        assert!(rel_err(s.kappa_tilde, 5.0) < 0.05, "kt = {}", s.kappa_tilde);
    }

    #[test]
    fn estimator_is_monte_carlo_stable_under_doubling() {
        let half = gen_component_decoupled(1.0, 0.5, 100_000, 9).unwrap();
        let full = gen_component_decoupled(1.0, 0.5, 200_000, 9).unwrap();
        let a = spectral_profile(&half).unwrap();
        let b = spectral_profile(&full).unwrap();
        assert!(rel_err(a.l1, b.l1) < 0.02, "{} vs {}", a.l1, b.l1);
        assert!(
            rel_err(a.kappa_tilde, b.kappa_tilde) < 0.02,
            "{} vs {}",
            a.kappa_tilde,
            b.kappa_tilde
        );
    }

    #[test]
    fn profile_ordering_invariants() {
        for seed in 0..5 {
            let p = gen_component_decoupled(1.3, 0.4, 4000, seed).unwrap();
            let s = spectral_profile(&p).unwrap();
            assert!(s.l1 >= s.l);
            assert!(s.kappa_tilde <= s.kappa1() + 1e-9);
            assert!(s.kappa_tilde >= 1.0);
        }
        let g = gen_gaussian(&[1.0, 0.5, 0.1], 4000, 2).unwrap();
        let s = spectral_profile(&g).unwrap();
        assert!(s.l1 >= s.l && s.kappa_tilde >= 1.0);
    }

    #[test]
    fn population_profiles_match_closed_forms() {
        let s = decoupled_population_profile(1.0, 0.5);
        assert_eq!((s.l, s.mu, s.l1, s.kappa_tilde), (1.0, 0.25, 6.0, 6.0));
        // Near-degenerate 3-d Gaussian: L1 -> 4 as sigma2 -> 0, kappa_tilde = 5.
        let g = gaussian_population_profile(&[1.0, 1.0, 2.0_f64.powi(-9)]);
        assert!((g.l1 - 4.0).abs() < 0.01);
        assert_eq!(g.kappa_tilde, 5.0);
        assert_eq!(g.rank, 3);
        // Skinny-spectrum dataset used by the regime sweep.
        let mut cov = vec![1.0; 8];
        cov.extend(vec![2.0_f64.powi(-10); 40]);
        let r = gaussian_population_profile(&cov);
        assert!((r.l1 / r.l - 10.0390625).abs() < 1e-12);
        assert_eq!(r.kappa_tilde, 50.0);
    }

    #[test]
    fn batch_constants_frozen_example() {
        // L=1, L1=6, mu=1/4, kt=6 at m=3 gives (8/3, 32/3, 8/3) exactly.
        let s = decoupled_population_profile(1.0, 0.5);
        let c = batch_constants(&s, BatchSize::Finite(3)).unwrap();
        assert!((c.l_m - 8.0 / 3.0).abs() < 1e-15);
        assert!((c.kappa_m - 32.0 / 3.0).abs() < 1e-14);
        assert!((c.kappa_tilde_m - 8.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn batch_constants_limits() {
        let s = decoupled_population_profile(1.0, 0.5);
        let c1 = batch_constants(&s, BatchSize::Finite(1)).unwrap();
        assert_eq!(c1.l_m, s.l1);
        assert_eq!(c1.kappa_m, s.l1 / s.mu);
        assert_eq!(c1.kappa_tilde_m, s.kappa_tilde);
        let cf = batch_constants(&s, BatchSize::Full).unwrap();
        assert_eq!((cf.l_m, cf.kappa_m, cf.kappa_tilde_m), (s.l, 4.0, 1.0));
        let mut prev = c1.l_m;
        for m in [2, 4, 8, 64, 1024] {
            let c = batch_constants(&s, BatchSize::Finite(m)).unwrap();
            assert!(c.l_m < prev && c.l_m >= s.l);
            prev = c.l_m;
        }
        assert!(batch_constants(&s, BatchSize::Finite(0)).is_err());
    }

    proptest! {
        #[test]
        fn batch_constants_linear_in_inverse_m(
            l in 0.1_f64..10.0,
            excess in 0.0_f64..20.0,
            mu_frac in 0.01_f64..1.0,
            m in 1_u64..10_000,
        ) {
            let l1 = l + excess;
            let profile = SpectralProfile {
                hessian: DMatrix::identity(2, 2),
                l,
                mu: l * mu_frac,
                l1,
                kappa_tilde: 3.0,
                rank: 2,
            };
            let c = batch_constants(&profile, BatchSize::Finite(m)).unwrap();
            let lhs = c.l_m - l;
            let rhs = (l1 - l) / m as f64;
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn min_norm_recovers_generated_solution() {
        let p = gen_component_decoupled(1.0, 0.25, 5000, 21).unwrap();
        let w = min_norm_solution(&p).unwrap();
        let truth = p.true_solution().unwrap();
        for (a, b) in w.iter().zip(truth) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn min_norm_single_sample() {
        let p = LinearProblem::from_parts(vec![1.0, 0.0], vec![2.0], 1, 2, None, 0).unwrap();
        let w = min_norm_solution(&p).unwrap();
        assert!((w[0] - 2.0).abs() < 1e-12 && w[1].abs() < 1e-12);
    }

    #[test]
    fn min_norm_rejects_non_interpolable() {
        // Two contradictory samples on the same direction.
        let p = LinearProblem::from_parts(vec![1.0, 1.0], vec![0.0, 1.0], 2, 1, None, 0).unwrap();
        match min_norm_solution(&p) {
            Err(crate::Error::NotInterpolable { .. }) => {}
            other => panic!("expected NotInterpolable, got {other:?}"),
        }
    }

    #[test]
    fn min_norm_recovery_on_full_rank_synthetic() {
        let p = gen_gaussian(&[2.0, 1.0, 0.5, 0.25], 2000, 13).unwrap();
        let w = min_norm_solution(&p).unwrap();
        for (a, b) in w.iter().zip(p.true_solution().unwrap()) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}

//! Least-squares problems in the interpolation regime: generation,
//! ingestion, and spectral characterization.

mod csv;
mod spectral;

pub use csv::{export_csv, load_csv};
pub use spectral::{
    batch_constants, min_norm_solution, spectral_profile, BatchConstants, BatchSize,
    SpectralProfile, INTERPOLATION_RESIDUAL_TOL, ZERO_EIGENVALUE_RTOL,
};
pub(crate) use spectral::{eigen_basis, hessian_of, least_squares_min_norm};

use crate::rng::SeedStream;
use crate::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;

/// Floor on |w*_j| for generated solutions, so that every coordinate of
/// `w0 - w*` is deterministically nonzero when runs start from the origin.
pub const SOLUTION_COORDINATE_FLOOR: f64 = 1e-3;

/// A dataset `{(x_i, y_i)}` for the square loss `f(w) = mean (x_i' w - y_i)^2 / 2`.
///
/// Immutable after construction; cheap to share read-only across workers.
#[derive(Debug, Clone)]
pub struct LinearProblem {
    /// Row-major `n x d` feature matrix.
    features: Vec<f64>,
    targets: Vec<f64>,
    n: usize,
    d: usize,
    true_solution: Option<Vec<f64>>,
    seed: u64,
}

impl LinearProblem {
    /// Builds a problem from in-memory data (row-major features). When a
    /// solution vector is supplied it must interpolate every sample.
    pub fn from_parts(
        features: Vec<f64>,
        targets: Vec<f64>,
        n: usize,
        d: usize,
        true_solution: Option<Vec<f64>>,
        seed: u64,
    ) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidArgument(format!(
                "problem must have n >= 1 and d >= 1, got n={n}, d={d}"
            )));
        }
        if features.len() != n * d || targets.len() != n {
            return Err(Error::InvalidArgument(
                "feature/target dimensions are inconsistent".into(),
            ));
        }
        if !features.iter().chain(targets.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument(
                "dataset contains non-finite entries".into(),
            ));
        }
        let problem = LinearProblem {
            features,
            targets,
            n,
            d,
            true_solution,
            seed,
        };
        if let Some(w) = &problem.true_solution {
            for i in 0..n {
                let y = problem.targets[i];
                let r = (dot(problem.row(i), w) - y).abs();
                if r > 1e-10 * (1.0 + y.abs()) {
                    return Err(Error::InvalidArgument(format!(
                        "stored solution does not interpolate sample {i}: residual {r:.3e}"
                    )));
                }
            }
        }
        Ok(problem)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }

    pub fn true_solution(&self) -> Option<&[f64]> {
        self.true_solution.as_deref()
    }

    /// Empirical loss `(1/2n) sum_i (x_i' w - y_i)^2`, computed by a full
    /// pass over the data.
    pub fn empirical_loss(&self, w: &[f64]) -> f64 {
        assert_eq!(w.len(), self.d);
        let mut acc = 0.0;
        for i in 0..self.n {
            let r = dot(self.row(i), w) - self.targets[i];
            acc += r * r;
        }
        acc / (2.0 * self.n as f64)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Draws a unit vector whose coordinates on `support` all exceed the floor
/// in magnitude, redrawing until the floor holds.
fn draw_solution(d: usize, support: &[bool], rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let mut w: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = dot(&w, &w).sqrt();
        if norm == 0.0 {
            continue;
        }
        for v in &mut w {
            *v /= norm;
        }
        if w.iter()
            .zip(support)
            .all(|(v, &s)| !s || v.abs() > SOLUTION_COORDINATE_FLOOR)
        {
            return w;
        }
    }
}

/// Two-dimensional component-decoupled data: each sample lies on one of the
/// two coordinate axes, `sigma1 * z * e1` or `sigma2 * z * e2` with equal
/// probability, `z ~ N(0, 2)`, and targets `y = <w*, x>` interpolate exactly.
pub fn gen_component_decoupled(
    sigma1: f64,
    sigma2: f64,
    n: usize,
    seed: u64,
) -> Result<LinearProblem> {
    if !crate::finite_positive(sigma1) || !crate::finite_positive(sigma2) {
        return Err(Error::InvalidArgument(format!(
            "sigma1 and sigma2 must be positive, got {sigma1}, {sigma2}"
        )));
    }
    if sigma2 >= sigma1 {
        return Err(Error::InvalidArgument(format!(
            "require sigma2 < sigma1, got sigma1={sigma1}, sigma2={sigma2}"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!("require n >= 2, got {n}")));
    }
    let stream = SeedStream::new(seed);
    let w_star = draw_solution(2, &[true, true], &mut stream.child(0).rng());
    let mut rng = stream.child(1).rng();
    let mut features = vec![0.0; n * 2];
    let mut targets = vec![0.0; n];
    let sqrt2 = std::f64::consts::SQRT_2;
    for i in 0..n {
        let slow = rng.random_bool(0.5);
        let z: f64 = rng.sample::<f64, _>(StandardNormal) * sqrt2;
        let row = &mut features[i * 2..i * 2 + 2];
        if slow {
            row[1] = sigma2 * z;
        } else {
            row[0] = sigma1 * z;
        }
        targets[i] = dot(row, &w_star);
    }
    LinearProblem::from_parts(features, targets, n, 2, Some(w_star), seed)
}

/// Zero-mean Gaussian data with diagonal covariance; targets interpolate a
/// fixed unit-norm solution.
pub fn gen_gaussian(cov_diagonal: &[f64], n: usize, seed: u64) -> Result<LinearProblem> {
    let d = cov_diagonal.len();
    if d == 0 {
        return Err(Error::InvalidArgument("empty covariance diagonal".into()));
    }
    if cov_diagonal.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "covariance diagonal entries must be finite and nonnegative".into(),
        ));
    }
    if cov_diagonal.iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidArgument(
            "covariance diagonal must have at least one positive entry".into(),
        ));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("require n >= 1".into()));
    }
    let support: Vec<bool> = cov_diagonal.iter().map(|&v| v > 0.0).collect();
    let scales: Vec<f64> = cov_diagonal.iter().map(|&v| v.sqrt()).collect();
    let stream = SeedStream::new(seed);
    let w_star = draw_solution(d, &support, &mut stream.child(0).rng());
    let mut rng = stream.child(1).rng();
    let mut features = vec![0.0; n * d];
    let mut targets = vec![0.0; n];
    for i in 0..n {
        let row = &mut features[i * d..(i + 1) * d];
        for (j, x) in row.iter_mut().enumerate() {
            let g: f64 = rng.sample(StandardNormal);
            *x = scales[j] * g;
        }
        targets[i] = dot(row, &w_star);
    }
    LinearProblem::from_parts(features, targets, n, d, Some(w_star), seed)
}

/// Closed-form population profile of the component-decoupled distribution.
pub fn decoupled_population_profile(sigma1: f64, sigma2: f64) -> SpectralProfile {
    let (l, mu) = (sigma1 * sigma1, sigma2 * sigma2);
    SpectralProfile {
        hessian: nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![l, mu])),
        l,
        mu,
        l1: 6.0 * l,
        kappa_tilde: 6.0,
        rank: 2,
    }
}

/// Closed-form population profile of the diagonal Gaussian distribution:
/// `L1 = 2 lambda_max + tr(H)` and `kappa_tilde = 2 + rank`.
pub fn gaussian_population_profile(cov_diagonal: &[f64]) -> SpectralProfile {
    let l = cov_diagonal.iter().cloned().fold(0.0_f64, f64::max);
    let mu = cov_diagonal
        .iter()
        .cloned()
        .filter(|&v| v > 0.0)
        .fold(f64::INFINITY, f64::min);
    let trace: f64 = cov_diagonal.iter().sum();
    let rank = cov_diagonal.iter().filter(|&&v| v > 0.0).count();
    SpectralProfile {
        hessian: nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(
            cov_diagonal.to_vec(),
        )),
        l,
        mu,
        l1: 2.0 * l + trace,
        kappa_tilde: 2.0 + rank as f64,
        rank,
    }
}

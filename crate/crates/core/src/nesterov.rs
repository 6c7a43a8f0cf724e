//! Second-moment analysis of SGD+Nesterov on the component-decoupled model.
//!
//! On that model the iterate error evolves independently per coordinate, and
//! the vectorized second moment `Phi_t = E[(e_t, e_{t-1}) (x) (e_t, e_{t-1})]`
//! of each coordinate obeys a linear recursion `Phi_{t+1} = B Phi_t` with a
//! 4x4 operator built from the step size, the momentum parameter, and the
//! coordinate's variance. The top eigenvalue magnitude of `B` decides
//! expected-loss divergence versus the per-iteration convergence rate.
//!
//! Operators here use `t = eta * sigma^2` and `u = 1 - gamma`. Analysis
//! entry points normalize `sigma_1^2 = 1`; other scales rescale `t`.

use crate::par::{run_jobs, Jobs};
use crate::rng::SeedStream;
use crate::{Error, Result};
use nalgebra::{Complex, DMatrix, Matrix4, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;

/// Margin on `|lambda_max| > 1` used by divergence verdicts, to keep grid
/// sweeps from flapping on the stability boundary.
pub const DIVERGENCE_EIGENVALUE_TOL: f64 = 1e-12;

/// The 4x4 transition operator of one coordinate's second moment, together
/// with the inputs it was built from.
#[derive(Debug, Clone)]
pub struct SecondMomentOperator {
    pub matrix: Matrix4<f64>,
    /// `eta * sigma^2`.
    pub t: f64,
    /// `1 - gamma`.
    pub u: f64,
}

/// Builds the second-moment transition operator. Row one carries the
/// squared-contraction moment `A = (1 - t)^2 + 5 t^2`; rows two and three
/// carry the mean contraction `1 - t`; row four shifts the history slot.
pub fn transition_matrix(sigma_sq: f64, eta: f64, gamma: f64) -> Result<SecondMomentOperator> {
    if !sigma_sq.is_finite() || sigma_sq < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "sigma_sq must be finite and nonnegative, got {sigma_sq}"
        )));
    }
    if !eta.is_finite() || eta < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "eta must be finite and nonnegative, got {eta}"
        )));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!(
            "gamma must lie in [0, 1), got {gamma}"
        )));
    }
    let t = eta * sigma_sq;
    let g = gamma;
    let a = (1.0 - t) * (1.0 - t) + 5.0 * t * t;
    let s = 1.0 - t;
    let matrix = Matrix4::new(
        (1.0 + g) * (1.0 + g) * a,
        -g * (1.0 + g) * a,
        -g * (1.0 + g) * a,
        g * g * a,
        (1.0 + g) * s,
        0.0,
        -g * s,
        0.0,
        (1.0 + g) * s,
        -g * s,
        0.0,
        0.0,
        1.0,
        0.0,
        0.0,
        0.0,
    );
    Ok(SecondMomentOperator {
        matrix,
        t,
        u: 1.0 - gamma,
    })
}

/// Coefficients `[1, c3, c2, c1, c0]` of the operator's characteristic
/// polynomial `l^4 + c3 l^3 + c2 l^2 + c1 l + c0`.
pub fn char_poly(op: &SecondMomentOperator) -> [f64; 5] {
    let t = op.t;
    let g = 1.0 - op.u;
    let a = (1.0 - t) * (1.0 - t) + 5.0 * t * t;
    let s = 1.0 - t;
    [
        1.0,
        -(1.0 + g) * (1.0 + g) * a,
        2.0 * g * (1.0 + g) * (1.0 + g) * s * a - g * g * s * s - g * g * a,
        -g * g * (1.0 + g) * (1.0 + g) * s * s * a,
        g * g * g * g * s * s * a,
    ]
}

pub fn eval_char_poly(coeffs: &[f64; 5], z: Complex<f64>) -> Complex<f64> {
    coeffs
        .iter()
        .fold(Complex::new(0.0, 0.0), |acc, &c| acc * z + c)
}

/// All four (possibly complex) eigenvalues via a dense Schur decomposition.
pub fn complex_eigenvalues(op: &SecondMomentOperator) -> Result<[Complex<f64>; 4]> {
    let m = DMatrix::from_fn(4, 4, |i, j| op.matrix[(i, j)]);
    let schur = nalgebra::Schur::try_new(m, 1e-14, 10_000).ok_or_else(|| {
        Error::Numerical("Schur iteration did not converge on 4x4 operator".into())
    })?;
    let ev = schur.complex_eigenvalues();
    let mut out = [Complex::new(0.0, 0.0); 4];
    for (o, v) in out.iter_mut().zip(ev.iter()) {
        if !v.re.is_finite() || !v.im.is_finite() {
            return Err(Error::Numerical(
                "eigensolver produced non-finite value".into(),
            ));
        }
        *o = *v;
    }
    Ok(out)
}

/// Magnitude of the top eigenvalue of the second-moment operator.
pub fn top_eigenvalue_magnitude(op: &SecondMomentOperator) -> Result<f64> {
    Ok(complex_eigenvalues(op)?
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// Step-size threshold `eta_0(u)`: for `eta > eta_0(u)` the unit-variance
/// component's second moment has an eigenvalue above one. Defined for
/// `u` strictly inside `(0, 1)`; both numerator and denominator vanish at
/// `u = 1`.
pub fn step_size_threshold(u: f64) -> Result<f64> {
    if !u.is_finite() || u <= 0.0 || u >= 1.0 {
        return Err(Error::InvalidArgument(format!(
            "u must lie in (0, 1), got {u}"
        )));
    }
    let radicand = 9.0 + 84.0 * u - 164.0 * u * u + 100.0 * u.powi(3) - 20.0 * u.powi(4);
    let numerator = -3.0 - 2.0 * u + 2.0 * u * u + radicand.sqrt();
    let denominator = 2.0 * (9.0 - 15.0 * u + 6.0 * u * u);
    Ok(numerator / denominator)
}

/// Predicted behavior of SGD+Nesterov from the two per-coordinate operators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Behavior {
    /// Expected loss grows; `component` names the coordinate (1 or 2) whose
    /// top eigenvalue exceeds one.
    Diverges { component: usize, top: f64 },
    /// Expected loss contracts at `rate` per iteration (the larger of the
    /// two top-eigenvalue magnitudes).
    Converges { rate: f64 },
}

impl Behavior {
    pub fn diverges(&self) -> bool {
        matches!(self, Behavior::Diverges { .. })
    }
}

/// Builds both coordinate operators and classifies the dynamics.
pub fn predict_behavior(sigma1_sq: f64, sigma2_sq: f64, eta: f64, gamma: f64) -> Result<Behavior> {
    let b1 = transition_matrix(sigma1_sq, eta, gamma)?;
    let b2 = transition_matrix(sigma2_sq, eta, gamma)?;
    let top1 = top_eigenvalue_magnitude(&b1)?;
    let top2 = top_eigenvalue_magnitude(&b2)?;
    if top1 > 1.0 + DIVERGENCE_EIGENVALUE_TOL {
        return Ok(Behavior::Diverges {
            component: 1,
            top: top1,
        });
    }
    if top2 > 1.0 + DIVERGENCE_EIGENVALUE_TOL {
        return Ok(Behavior::Diverges {
            component: 2,
            top: top2,
        });
    }
    Ok(Behavior::Converges {
        rate: top1.max(top2),
    })
}

/// Determinant certifying that the first moments span the top
/// eigendirection: `((1-u) t^3 / 2) (36t^2 - 18ut^2 + 6ut + 3t - 3u + 1)`.
///
/// The raw 3x3 moment-matrix determinant equals exactly four times this
/// normalized form; only the zero set and sign matter downstream.
pub fn det_m_prime(t: f64, u: f64) -> Result<f64> {
    if !crate::finite_positive(t) {
        return Err(Error::InvalidArgument(format!(
            "t must be positive, got {t}"
        )));
    }
    if !(0.0..1.0).contains(&u) {
        return Err(Error::InvalidArgument(format!(
            "u must lie in [0, 1), got {u}"
        )));
    }
    let q = 36.0 * t * t - 18.0 * u * t * t + 6.0 * u * t + 3.0 * t - 3.0 * u + 1.0;
    Ok((1.0 - u) * t.powi(3) / 2.0 * q)
}

/// Monte-Carlo estimate of one coordinate's second-moment sequence.
#[derive(Debug, Clone)]
pub struct SecondMomentEstimate {
    /// `phi[t]` for `t = 0..=t_max`: mean of
    /// `(e_t^2, e_t e_{t-1}, e_{t-1} e_t, e_{t-1}^2)` over runs.
    pub phi: Vec<[f64; 4]>,
    /// Standard error of each `phi[t]` component.
    pub phi_se: Vec<[f64; 4]>,
    /// Mean of the per-run one-step residual `phi_{t+1} - B phi_t`
    /// (length `t_max`); zero in expectation when `B` is correct.
    pub residual_mean: Vec<[f64; 4]>,
    /// Standard error of each residual component.
    pub residual_se: Vec<[f64; 4]>,
}

/// Simulates the scalar SGD+Nesterov recursion
/// `e_{t+1} = (1+gamma) s e_t - gamma s e_{t-1}` over independent runs and
/// averages the vectorized second moment; `s = 1 - eta sigma^2 z^2` with
/// probability one half (else `s = 1`), `z ~ N(0, 2)`.
pub fn monte_carlo_second_moment(
    sigma_sq: f64,
    eta: f64,
    gamma: f64,
    w0_offset: f64,
    t_max: usize,
    n_runs: usize,
    seed: u64,
) -> Result<SecondMomentEstimate> {
    if n_runs < 100 {
        return Err(Error::InvalidArgument(format!(
            "need n_runs >= 100 for meaningful standard errors, got {n_runs}"
        )));
    }
    let op = transition_matrix(sigma_sq, eta, gamma)?;
    let b = op.matrix;
    let t_scale = eta * sigma_sq;
    let g = gamma;
    let stream = SeedStream::new(seed);
    let sqrt2 = std::f64::consts::SQRT_2;

    let mut phi_sum = vec![[0.0; 4]; t_max + 1];
    let mut phi_sq = vec![[0.0; 4]; t_max + 1];
    let mut res_sum = vec![[0.0; 4]; t_max];
    let mut res_sq = vec![[0.0; 4]; t_max];

    for run in 0..n_runs {
        let mut rng = stream.child(run as u64).rng();
        let mut e_prev = w0_offset;
        let mut e = w0_offset;
        let mut phi_prev = Vector4::zeros();
        for t in 0..=t_max {
            let phi = Vector4::new(e * e, e * e_prev, e_prev * e, e_prev * e_prev);
            for c in 0..4 {
                phi_sum[t][c] += phi[c];
                phi_sq[t][c] += phi[c] * phi[c];
            }
            if t > 0 {
                let r = phi - b * phi_prev;
                for c in 0..4 {
                    res_sum[t - 1][c] += r[c];
                    res_sq[t - 1][c] += r[c] * r[c];
                }
            }
            phi_prev = phi;
            // advance the recursion (the draw after t_max is never used)
            if t < t_max {
                let s = if rng.random_bool(0.5) {
                    let z: f64 = rng.sample::<f64, _>(StandardNormal) * sqrt2;
                    1.0 - t_scale * z * z
                } else {
                    1.0
                };
                let e_next = (1.0 + g) * s * e - g * s * e_prev;
                e_prev = e;
                e = e_next;
            }
        }
    }

    let n = n_runs as f64;
    let finalize = |sum: Vec<[f64; 4]>, sq: Vec<[f64; 4]>| {
        let mut means = Vec::with_capacity(sum.len());
        let mut ses = Vec::with_capacity(sum.len());
        for (s, s2) in sum.iter().zip(&sq) {
            let mut mean = [0.0; 4];
            let mut se = [0.0; 4];
            for c in 0..4 {
                mean[c] = s[c] / n;
                let var = (s2[c] / n - mean[c] * mean[c]).max(0.0) * n / (n - 1.0);
                se[c] = (var / n).sqrt();
            }
            means.push(mean);
            ses.push(se);
        }
        (means, ses)
    };
    let (phi, phi_se) = finalize(phi_sum, phi_sq);
    let (residual_mean, residual_se) = finalize(res_sum, res_sq);
    Ok(SecondMomentEstimate {
        phi,
        phi_se,
        residual_mean,
        residual_se,
    })
}

/// One cell of the stability phase diagram.
#[derive(Debug, Clone, Copy)]
pub struct PhaseRow {
    pub u: f64,
    pub eta: f64,
    pub lambda_max_1: f64,
    pub lambda_max_2: f64,
    pub diverges: bool,
}

/// Evaluates both coordinate operators over a `(u, eta)` grid.
pub fn phase_sweep(
    sigma1_sq: f64,
    sigma2_sq: f64,
    u_values: &[f64],
    etas: &[f64],
    jobs: Jobs,
) -> Result<Vec<PhaseRow>> {
    let mut cells = Vec::with_capacity(u_values.len() * etas.len());
    for &u in u_values {
        for &eta in etas {
            cells.push((u, eta));
        }
    }
    let rows = run_jobs(cells, jobs, |_, (u, eta)| -> Result<PhaseRow> {
        let gamma = 1.0 - u;
        let l1 = top_eigenvalue_magnitude(&transition_matrix(sigma1_sq, eta, gamma)?)?;
        let l2 = top_eigenvalue_magnitude(&transition_matrix(sigma2_sq, eta, gamma)?)?;
        Ok(PhaseRow {
            u,
            eta,
            lambda_max_1: l1,
            lambda_max_2: l2,
            diverges: l1.max(l2) > 1.0 + DIVERGENCE_EIGENVALUE_TOL,
        })
    });
    rows.into_iter().collect()
}

/// Finds the step size where `lambda_max(B)` crosses one for the
/// unit-variance coordinate, by bisection on `[lo, hi]`.
pub fn bisect_divergence_threshold(u: f64, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let gamma = 1.0 - u;
    let excess = |eta: f64| -> Result<f64> {
        Ok(top_eigenvalue_magnitude(&transition_matrix(1.0, eta, gamma)?)? - 1.0)
    };
    let (mut lo, mut hi) = (lo, hi);
    let (flo, fhi) = (excess(lo)?, excess(hi)?);
    if flo > 0.0 || fhi < 0.0 {
        return Err(Error::Numerical(format!(
            "no sign change on bracket [{lo}, {hi}]: f(lo)={flo:.3e}, f(hi)={fhi:.3e}"
        )));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if excess(mid)? > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_structure_and_determinant() {
        let op = transition_matrix(1.0, 0.1, 0.7).unwrap();
        let m = &op.matrix;
        assert_eq!(m[(3, 0)], 1.0);
        assert_eq!(m[(1, 1)], 0.0);
        assert_eq!(m[(2, 2)], 0.0);
        assert_eq!(m[(3, 3)], 0.0);
        assert!(m.iter().all(|v| v.is_finite()));
        // det(B) = gamma^4 (1-t)^2 A
        let (t, g) = (0.1f64, 0.7f64);
        let a = (1.0f64 - t).powi(2) + 5.0 * t * t;
        let expected = g.powi(4) * (1.0 - t).powi(2) * a;
        assert!((m.determinant() - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn zero_step_size_has_unit_top_eigenvalue() {
        let op = transition_matrix(1.0, 0.0, 0.9).unwrap();
        let a = (1.0f64 - 0.0).powi(2) + 5.0 * 0.0;
        assert_eq!(a, 1.0);
        let top = top_eigenvalue_magnitude(&op).unwrap();
        assert!((top - 1.0).abs() < 1e-10, "top = {top}");
    }

    #[test]
    fn zero_momentum_at_inverse_variance_step() {
        // gamma = 0, eta = 1/sigma^2: t = 1, A = 5, and the mean
        // contraction vanishes, leaving row one as (5, 0, 0, 0).
        let op = transition_matrix(4.0, 0.25, 0.0).unwrap();
        let m = &op.matrix;
        assert_eq!(m[(0, 0)], 5.0);
        for c in 1..4 {
            assert_eq!(m[(0, c)], 0.0);
        }
        assert_eq!(m[(1, 0)], 0.0);
        assert_eq!(m[(2, 0)], 0.0);
    }

    #[test]
    fn real_root_satisfies_characteristic_polynomial() {
        for &(t, u) in &[(0.1, 0.3), (0.45, 0.8), (0.9, 0.05), (1.3, 0.5)] {
            let op = transition_matrix(1.0, t, 1.0 - u).unwrap();
            let coeffs = char_poly(&op);
            let scale: f64 = coeffs.iter().map(|c| c.abs()).sum();
            let lambda1 = Complex::new((1.0 - u) * (1.0 - t), 0.0);
            let r = eval_char_poly(&coeffs, lambda1).norm();
            assert!(r < 1e-9 * scale, "residual {r:.3e} at t={t}, u={u}");
        }
    }

    #[test]
    fn eigensolver_satisfies_characteristic_polynomial() {
        for &(t, u) in &[(0.05, 0.1), (0.2, 0.5), (0.7, 0.9), (1.1, 0.25)] {
            let op = transition_matrix(1.0, t, 1.0 - u).unwrap();
            let coeffs = char_poly(&op);
            let scale: f64 = coeffs.iter().map(|c| c.abs()).sum();
            for z in complex_eigenvalues(&op).unwrap() {
                let r = eval_char_poly(&coeffs, z).norm();
                assert!(r < 1e-9 * scale, "residual {r:.3e} at t={t}, u={u}");
            }
        }
    }

    /// Radical-formula oracle: deflate the known real root, solve the
    /// remaining cubic by Cardano's formula, and require the multiset of
    /// closed-form roots to match the dense eigensolver.
    #[test]
    fn eigensolver_matches_cardano_closed_forms() {
        for &(t, u) in &[
            (0.01, 0.1),
            (0.1, 0.3),
            (0.166, 0.1),
            (0.3, 0.6),
            (0.8, 0.9),
            (1.2, 0.4),
        ] {
            let op = transition_matrix(1.0, t, 1.0 - u).unwrap();
            let [c4, c3, c2, c1, c0] = char_poly(&op);
            assert_eq!(c4, 1.0);
            // synthetic division by (l - lambda1)
            let l1 = (1.0 - u) * (1.0 - t);
            let p = c3 + l1;
            let q = c2 + l1 * p;
            let r = c1 + l1 * q;
            let rem = c0 + l1 * r;
            assert!(rem.abs() < 1e-9, "deflation remainder {rem:.3e}");
            // Cardano on l^3 + p l^2 + q l + r via the resolvent
            // T0 = -p/3, T1 = 3q - p^2, T2 = -2p^3 + 9pq - 27r.
            let t0 = -p / 3.0;
            let t1 = 3.0 * q - p * p;
            let t2 = -2.0 * p.powi(3) + 9.0 * p * q - 27.0 * r;
            let disc = Complex::new(t2 * t2 + 4.0 * t1.powi(3), 0.0);
            let c = (Complex::new(t2, 0.0) + disc.sqrt()).cbrt();
            let cbrt2 = 2.0_f64.cbrt();
            let omega = Complex::new(-0.5, 0.5 * 3.0_f64.sqrt());
            let mut roots = vec![Complex::new(l1, 0.0)];
            for k in 0..3 {
                let rot = omega.powu(k);
                let cc = c * rot;
                roots.push(Complex::new(t0, 0.0) - cbrt2 / 3.0 * t1 / cc + cc / (3.0 * cbrt2));
            }
            let mut eig = complex_eigenvalues(&op).unwrap().to_vec();
            for root in roots {
                let (best, dist) = eig
                    .iter()
                    .enumerate()
                    .map(|(i, z)| (i, (z - root).norm()))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap();
                assert!(
                    dist < 1e-7 * (1.0 + root.norm()),
                    "closed-form root {root} unmatched (dist {dist:.3e}) at t={t}, u={u}"
                );
                eig.remove(best);
            }
        }
    }

    #[test]
    fn threshold_closed_form_agrees_with_bisection() {
        for k in 1..=9 {
            let u = k as f64 / 10.0;
            let eta0 = step_size_threshold(u).unwrap();
            let found = bisect_divergence_threshold(u, 0.5 * eta0, 1.5 * eta0, 1e-9).unwrap();
            assert!(
                (found - eta0).abs() < 1e-6,
                "u={u}: closed form {eta0}, bisection {found}"
            );
        }
    }

    #[test]
    fn threshold_small_u_slope_is_two_thirds() {
        let u = 1e-3;
        let ratio = step_size_threshold(u).unwrap() / u;
        assert!(
            (ratio - 2.0 / 3.0).abs() < 0.01 * (2.0 / 3.0),
            "ratio {ratio}"
        );
    }

    #[test]
    fn threshold_spot_value() {
        // eta_0(0.4) sits below 1/6, so the 1/L1 step size is already
        // past the threshold for every gamma >= 0.6.
        let eta0 = step_size_threshold(0.4).unwrap();
        assert!((eta0 - 0.156159).abs() < 2e-5, "eta0 = {eta0}");
        assert!(eta0 < 1.0 / 6.0);
    }

    #[test]
    fn threshold_rejects_degenerate_u() {
        assert!(step_size_threshold(1.0).is_err());
        assert!(step_size_threshold(0.0).is_err());
        assert!(step_size_threshold(-0.2).is_err());
        assert!(step_size_threshold(1.3).is_err());
    }

    #[test]
    fn sgd_optimal_step_size_diverges_fast_component() {
        let b = predict_behavior(1.0, 2.0_f64.powi(-9), 1.0 / 6.0, 0.9).unwrap();
        match b {
            Behavior::Diverges { component, top } => {
                assert_eq!(component, 1);
                assert!(top > 1.0);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn equal_variances_are_symmetric() {
        let b = predict_behavior(1.0, 1.0, 0.01, 0.5).unwrap();
        let top = top_eigenvalue_magnitude(&transition_matrix(1.0, 0.01, 0.5).unwrap()).unwrap();
        match b {
            Behavior::Converges { rate } => assert!((rate - top).abs() < 1e-14),
            other => panic!("expected convergence, got {other:?}"),
        }
    }

    #[test]
    fn stable_grid_best_rate_has_sgd_order() {
        // Over the default grid the best stable cell converges at
        // 1 - O(1/kappa): kappa * (1 - rate) stays order one.
        let kappa = 512.0;
        let mut best: Option<f64> = None;
        for &gamma in &[0.0, 0.5, 0.8, 0.9, 0.95, 0.99] {
            for k in 0..25 {
                let eta = 10f64.powf(-4.0 + k as f64 / 6.0);
                if let Behavior::Converges { rate } =
                    predict_behavior(1.0, 1.0 / kappa, eta, gamma).unwrap()
                {
                    best = Some(best.map_or(rate, |b: f64| b.min(rate)));
                }
            }
        }
        let rate = best.expect("some stable cell");
        let scaled = kappa * (1.0 - rate);
        assert!((0.2..=5.0).contains(&scaled), "kappa (1 - rate) = {scaled}");
    }

    #[test]
    fn slow_component_band_is_kappa_independent() {
        let u = 0.1;
        let eta = step_size_threshold(u).unwrap().min(1.0 / 6.0) * 0.99;
        let mut vals = Vec::new();
        for kexp in [6, 9, 12, 15] {
            let kappa = 2.0_f64.powi(kexp);
            let op = transition_matrix(1.0 / kappa, eta, 1.0 - u).unwrap();
            let top = top_eigenvalue_magnitude(&op).unwrap();
            vals.push(kappa * (1.0 - top));
        }
        let (lo, hi) = vals
            .iter()
            .fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        assert!(lo > 0.5 && hi < 2.0, "band [{lo}, {hi}]");
        assert!(hi / lo <= 10.0);
    }

    #[test]
    fn det_m_prime_frozen_point_and_scaling() {
        assert!((det_m_prime(1.0, 0.0).unwrap() - 20.0).abs() < 1e-14);
        // cubic vanishing at small t
        let r = det_m_prime(2e-6, 0.3).unwrap() / det_m_prime(1e-6, 0.3).unwrap();
        assert!((r - 8.0).abs() < 1e-3, "ratio {r}");
        assert!(det_m_prime(0.0, 0.3).is_err());
        assert!(det_m_prime(0.5, 1.0).is_err());
    }

    /// Independent oracle: rebuild the 3x3 moment matrix from the exact
    /// mixture moments and compare determinants. The raw determinant is
    /// four times the normalized closed form.
    #[test]
    fn det_m_prime_matches_moment_matrix() {
        for &(t, u) in &[(0.3, 0.0), (0.5, 0.5), (0.1, 0.9), (1.5, 0.2), (0.05, 0.35)] {
            let g = 1.0 - u;
            let b = 1.0 - t;
            let a = 1.0 - 2.0 * t + 6.0 * t * t;
            let e2_sq = a * ((1.0 + g) * (1.0 + g) * a - 2.0 * g * (1.0 + g) * b + g * g);
            let e2_e1 = b * ((1.0 + g) * a - g * b);
            let m = nalgebra::Matrix3::new(1.0, a, e2_sq, 1.0, b, e2_e1, 1.0, 1.0, a);
            let raw = m.determinant();
            let closed = det_m_prime(t, u).unwrap();
            assert!(
                (raw - 4.0 * closed).abs() <= 1e-12 * (1.0 + raw.abs()),
                "t={t}, u={u}: raw {raw} vs 4x closed {closed}"
            );
        }
    }

    /// The determinant's quadratic factor acquires a positive root once
    /// u > 1/3, so the sign is only constant on the low-momentum-deficit
    /// side; this pins the actual behavior.
    #[test]
    fn det_m_prime_sign_structure() {
        for i in 0..34 {
            let u = i as f64 / 100.0;
            for j in 1..=100 {
                let t = 2.0 * j as f64 / 100.0;
                assert!(det_m_prime(t, u).unwrap() > 0.0, "t={t}, u={u}");
            }
        }
        assert!(det_m_prime(0.1, 0.9).unwrap() < 0.0);
        assert!(det_m_prime(1.0, 0.9).unwrap() > 0.0);
    }

    #[test]
    fn monte_carlo_zero_offset_stays_zero() {
        let est = monte_carlo_second_moment(1.0, 0.2, 0.8, 0.0, 10, 100, 0).unwrap();
        for phi in &est.phi {
            assert_eq!(phi, &[0.0; 4]);
        }
    }

    #[test]
    fn monte_carlo_matches_operator_one_step() {
        // Phi_1 against B Phi_0 (deterministic start), within 5 SE.
        let est = monte_carlo_second_moment(1.0, 0.15, 0.85, 1.0, 1, 20_000, 11).unwrap();
        for c in 0..4 {
            let tol = 5.0 * est.residual_se[0][c] + 1e-12;
            assert!(
                est.residual_mean[0][c].abs() <= tol,
                "component {c}: {} vs tol {tol}",
                est.residual_mean[0][c]
            );
        }
    }

    #[test]
    fn monte_carlo_gamma_zero_decays_like_sgd_second_moment() {
        // With gamma = 0 the first component contracts by
        // A = (1-t)^2 + 5 t^2 per step in expectation.
        let (sigma_sq, eta) = (1.0, 0.2);
        let a = {
            let t = eta * sigma_sq;
            (1.0f64 - t).powi(2) + 5.0 * t * t
        };
        let est = monte_carlo_second_moment(sigma_sq, eta, 0.0, 1.0, 12, 40_000, 5).unwrap();
        for t in [4usize, 8, 12] {
            let expected = a.powi(t as i32);
            let se = est.phi_se[t][0];
            assert!(
                (est.phi[t][0] - expected).abs() <= 6.0 * se + 1e-9,
                "t={t}: {} vs {} (se {se})",
                est.phi[t][0],
                expected
            );
        }
    }

    #[test]
    fn monte_carlo_requires_enough_runs() {
        assert!(monte_carlo_second_moment(1.0, 0.1, 0.5, 1.0, 5, 99, 0).is_err());
    }

    #[test]
    fn phase_sweep_grid_is_ordered_and_consistent() {
        let rows = phase_sweep(
            1.0,
            2.0_f64.powi(-9),
            &[0.1, 0.4],
            &[0.01, 0.1, 0.3],
            Jobs::Default,
        )
        .unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!((rows[0].u, rows[0].eta), (0.1, 0.01));
        assert_eq!((rows[5].u, rows[5].eta), (0.4, 0.3));
        for r in &rows {
            let want = r.lambda_max_1.max(r.lambda_max_2) > 1.0 + DIVERGENCE_EIGENVALUE_TOL;
            assert_eq!(r.diverges, want);
        }
        // eta = 0.3 exceeds eta_0 for both u values
        assert!(rows[2].diverges && rows[5].diverges);
    }
}

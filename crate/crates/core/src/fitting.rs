//! Weighted nonlinear least squares and the two model fits used by the analysis.
//!
//! [`nls_solve`] is a damped Gauss–Newton (Levenberg–Marquardt) iteration with
//! a central finite-difference Jacobian. The damping starts at zero, so a
//! model that is linear in its parameters converges in one step.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::cascade::eq1_argument;
use crate::error::{Error, Result};

/// Stopping rules. Defaults: relative objective change `1e-12`, gradient
/// ∞-norm `1e-10`, 200 iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NlsOptions {
    pub rel_tol: f64,
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Relative finite-difference step; the absolute step is `fd_step · max(|θⱼ|, 1e-3)`.
    pub fd_step: f64,
}

impl Default for NlsOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            grad_tol: 1e-10,
            max_iter: 200,
            fd_step: 1e-6,
        }
    }
}

/// Outcome of a least-squares fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub params: Vec<f64>,
    /// Gauss–Newton covariance `(JᵀJ)⁻¹` of the σ-weighted problem.
    pub covariance: Vec<Vec<f64>>,
    /// `sqrt(Σ ((yᵢ − f(xᵢ))/σᵢ)²)`.
    pub residual_norm: f64,
    /// Coefficient of determination of the unweighted residuals.
    pub r_squared: f64,
    pub converged: bool,
    /// `JᵀJ` is numerically singular; the covariance is a pseudo-inverse.
    pub degenerate: bool,
    pub iterations: usize,
    /// ∞-norm of the objective gradient at the returned parameters.
    pub gradient_norm: f64,
    /// Objective after the initial evaluation and each accepted step.
    #[serde(skip)]
    pub objective_trace: Vec<f64>,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.params[i])
    }

    /// 1σ error (square root of the covariance diagonal).
    pub fn error(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.covariance[i][i].max(0.0).sqrt())
    }

    /// Plain JSON report: named parameters, 1σ errors, residual norm and flags.
    pub fn to_report(&self) -> FitReport {
        FitReport {
            params: self.names.iter().cloned().zip(self.params.iter().copied()).collect(),
            errors: self
                .names
                .iter()
                .cloned()
                .zip(self.covariance.iter().enumerate().map(|(i, row)| row[i].max(0.0).sqrt()))
                .collect(),
            residual_norm: self.residual_norm,
            r_squared: self.r_squared,
            converged: self.converged,
            degenerate: self.degenerate,
            iterations: self.iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub params: std::collections::BTreeMap<String, f64>,
    pub errors: std::collections::BTreeMap<String, f64>,
    pub residual_norm: f64,
    pub r_squared: f64,
    pub converged: bool,
    pub degenerate: bool,
    pub iterations: usize,
}

/// Data point `(x, y, σ)`.
pub type DataPoint = (f64, f64, f64);

fn check_data(op: &'static str, data: &[DataPoint], n_params: usize) -> Result<()> {
    if data.len() < n_params {
        return Err(Error::domain(op, format!("{} points for {n_params} parameters", data.len())));
    }
    for &(x, y, s) in data {
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::domain(op, "data must be finite"));
        }
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::domain(op, format!("sigma = {s} must be > 0")));
        }
    }
    Ok(())
}

struct Problem<'a, F> {
    model: F,
    data: &'a [DataPoint],
    fd_step: f64,
}

impl<F: Fn(f64, &[f64]) -> f64> Problem<'_, F> {
    fn residuals(&self, p: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.data.len(),
            self.data.iter().map(|&(x, y, s)| (y - (self.model)(x, p.as_slice())) / s),
        )
    }

    /// Jacobian of the residuals.
    fn jacobian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.data.len(), p.len());
        for k in 0..p.len() {
            let h = self.fd_step * p[k].abs().max(1e-3);
            let mut a = p.clone();
            let mut b = p.clone();
            a[k] += h;
            b[k] -= h;
            let (ra, rb) = (self.residuals(&a), self.residuals(&b));
            j.set_column(k, &((ra - rb) / (2.0 * h)));
        }
        j
    }
}

/// Minimizes `Σ ((yᵢ − f(xᵢ; θ))/σᵢ)²` from `init`.
///
/// Running out of iterations yields `converged = false` rather than an error.
pub fn nls_solve<F>(names: &[&str], model: F, init: &[f64], data: &[DataPoint], opts: NlsOptions) -> Result<FitResult>
where
    F: Fn(f64, &[f64]) -> f64,
{
    if names.len() != init.len() {
        return Err(Error::domain("nls_solve", "one name per parameter required"));
    }
    check_data("nls_solve", data, init.len())?;
    let problem = Problem {
        model,
        data,
        fd_step: opts.fd_step,
    };
    let mut p = DVector::from_column_slice(init);
    let mut r = problem.residuals(&p);
    let mut obj = r.norm_squared();
    if !obj.is_finite() {
        return Err(Error::domain("nls_solve", "model is not finite at the initial parameters"));
    }
    let mut trace = vec![obj];
    let mut lambda = 0.0f64;
    let mut iterations = 0;
    let mut converged = obj == 0.0;
    let mut jac = problem.jacobian(&p);

    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        if grad.amax() < opts.grad_tol {
            converged = true;
            break;
        }
        let diag_floor = 1e-12 * jtj.diagonal().amax().max(f64::MIN_POSITIVE);
        let mut accepted = false;
        while lambda <= 1e16 {
            let mut a = jtj.clone();
            for i in 0..a.nrows() {
                a[(i, i)] += lambda * jtj[(i, i)].max(diag_floor);
            }
            let step = a.lu().solve(&(-&grad));
            if let Some(step) = step.filter(|s| s.iter().all(|v| v.is_finite())) {
                let trial = &p + &step;
                let r_trial = problem.residuals(&trial);
                let obj_trial = r_trial.norm_squared();
                if obj_trial.is_finite() && obj_trial <= obj {
                    let rel = (obj - obj_trial) / obj.max(f64::MIN_POSITIVE);
                    p = trial;
                    r = r_trial;
                    obj = obj_trial;
                    trace.push(obj);
                    jac = problem.jacobian(&p);
                    lambda = if lambda < 1e-10 { 0.0 } else { lambda / 10.0 };
                    accepted = true;
                    if obj == 0.0 || rel < opts.rel_tol {
                        converged = true;
                    }
                    break;
                }
            }
            lambda = if lambda == 0.0 { 1e-4 } else { lambda * 10.0 };
        }
        if !accepted {
            // no descent direction left at working precision
            converged = (jac.transpose() * &r).amax() < opts.grad_tol.max(1e-8 * (1.0 + obj));
            break;
        }
    }

    let jtj = jac.transpose() * &jac;
    let gradient_norm = (jac.transpose() * &r).amax();
    let svd = jtj.clone().svd(true, true);
    let smax = svd.singular_values.amax();
    let smin = svd.singular_values.min();
    let degenerate = !(smin > 1e-12 * smax);
    let cov = if degenerate {
        svd.pseudo_inverse(1e-12 * smax).unwrap_or_else(|_| DMatrix::zeros(p.len(), p.len()))
    } else {
        jtj.try_inverse().unwrap_or_else(|| DMatrix::zeros(p.len(), p.len()))
    };
    let cov = (&cov + cov.transpose()) / 2.0;

    let mean_y = data.iter().map(|d| d.1).sum::<f64>() / data.len() as f64;
    let ss_tot: f64 = data.iter().map(|d| (d.1 - mean_y).powi(2)).sum();
    let ss_res: f64 = data
        .iter()
        .map(|&(x, y, _)| (y - (problem.model)(x, p.as_slice())).powi(2))
        .sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else if ss_res == 0.0 { 1.0 } else { 0.0 };

    Ok(FitResult {
        names: names.iter().map(|s| s.to_string()).collect(),
        params: p.iter().copied().collect(),
        covariance: (0..cov.nrows()).map(|i| cov.row(i).iter().copied().collect()).collect(),
        residual_norm: obj.sqrt(),
        r_squared,
        converged,
        degenerate,
        iterations,
        gradient_norm,
        objective_trace: trace,
    })
}

/// Maps a fit in transformed coordinates back to natural ones; `dnat` holds
/// `∂natural/∂transformed` for each (independently transformed) parameter.
fn to_natural(mut fit: FitResult, natural: Vec<f64>, dnat: &[f64]) -> FitResult {
    for (i, row) in fit.covariance.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v *= dnat[i] * dnat[j];
        }
    }
    fit.params = natural;
    fit
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Fits `C(τ_L) = c0 · (1 − x·e^{−x})`, `x = √2·τ_L/(4·τ_XX)`, with
/// `c0 ∈ (0, 1]` and `τ_XX > 0` enforced through logistic and log transforms.
///
/// Points are `(τ_L [ps], concurrence, σ)`. Initial values: `c0 = max C`,
/// `τ_XX = median τ_L`.
pub fn fit_eq1(points: &[DataPoint]) -> Result<FitResult> {
    if points.len() < 3 {
        return Err(Error::domain("fit_eq1", format!("{} points, need at least 3", points.len())));
    }
    check_data("fit_eq1", points, 2)?;
    let c_init = points.iter().map(|p| p.1).fold(f64::MIN, f64::max).clamp(1e-6, 1.0 - 1e-6);
    let mut taus: Vec<f64> = points.iter().map(|p| p.0).collect();
    taus.sort_by(f64::total_cmp);
    let tau_init = taus[taus.len() / 2].max(1e-3);
    let model = |tau_l: f64, p: &[f64]| {
        let c0 = logistic(p[0]);
        let x = eq1_argument(tau_l, p[1].exp());
        c0 * (1.0 - x * (-x).exp())
    };
    let init = [(c_init / (1.0 - c_init)).ln(), tau_init.ln()];
    let fit = nls_solve(&["c0", "tau_xx"], model, &init, points, NlsOptions::default())?;
    let c0 = logistic(fit.params[0]);
    let tau = fit.params[1].exp();
    Ok(to_natural(fit, vec![c0, tau], &[c0 * (1.0 - c0), tau]))
}

/// Fits `value(θ) = offset + amplitude · cos(2(θ − phase))` with θ in degrees.
///
/// The amplitude is reported non-negative and the phase in `[0°, 180°)`.
/// Parameters are named `amplitude`, `phase`, `offset` (phase in degrees).
pub fn fit_sinusoid(points: &[DataPoint]) -> Result<FitResult> {
    if points.len() < 4 {
        return Err(Error::domain("fit_sinusoid", format!("{} points, need at least 4", points.len())));
    }
    let rad = |deg: f64| deg * PI / 180.0;
    let model = |theta: f64, p: &[f64]| p[0] + p[1] * (2.0 * rad(theta)).cos() + p[2] * (2.0 * rad(theta)).sin();
    let fit = nls_solve(&["offset", "a_cos", "a_sin"], model, &[0.0, 0.0, 0.0], points, NlsOptions::default())?;
    if fit.degenerate {
        return Err(Error::DegenerateDesign("analyzer angles do not resolve a 180° sinusoid".into()));
    }
    let (offset, a, b) = (fit.params[0], fit.params[1], fit.params[2]);
    let amplitude = a.hypot(b);
    let phase = if amplitude > 0.0 {
        (0.5 * b.atan2(a).to_degrees()).rem_euclid(180.0)
    } else {
        0.0
    };
    // Jacobian of (amplitude, phase°, offset) with respect to (offset, a, b)
    let mut jac = [[0.0; 3]; 3];
    if amplitude > 0.0 {
        let a2 = amplitude * amplitude;
        jac[0] = [0.0, a / amplitude, b / amplitude];
        let k = 0.5 * 180.0 / PI;
        jac[1] = [0.0, -k * b / a2, k * a / a2];
    }
    jac[2] = [1.0, 0.0, 0.0];
    let mut cov = vec![vec![0.0; 3]; 3];
    for (i, ji) in jac.iter().enumerate() {
        for (j, jj) in jac.iter().enumerate() {
            let mut v = 0.0;
            for k in 0..3 {
                for l in 0..3 {
                    v += ji[k] * fit.covariance[k][l] * jj[l];
                }
            }
            cov[i][j] = v;
        }
    }
    Ok(FitResult {
        names: vec!["amplitude".into(), "phase".into(), "offset".into()],
        params: vec![amplitude, phase, offset],
        covariance: cov,
        ..fit
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn linear_model_is_exact_in_few_iterations() {
        let data: Vec<DataPoint> = (0..10).map(|i| (i as f64, 2.5 * i as f64 - 1.25, 1.0)).collect();
        let fit = nls_solve(&["a", "b"], |x, p| p[0] * x + p[1], &[0.0, 0.0], &data, NlsOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.iterations <= 3, "{}", fit.iterations);
        assert_abs_diff_eq!(fit.params[0], 2.5, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.params[1], -1.25, epsilon = 1e-10);
    }

    #[test]
    fn quadratic_from_perturbed_start() {
        let truth = [0.7, -1.3, 0.25];
        let f = |x: f64, p: &[f64]| p[0] + p[1] * x + p[2] * x * x;
        let data: Vec<DataPoint> = (0..15).map(|i| {
            let x = -2.0 + 0.3 * i as f64;
            (x, f(x, &truth), 0.1)
        }).collect();
        let fit = nls_solve(&["c0", "c1", "c2"], f, &[1.5, 0.0, -1.0], &data, NlsOptions::default()).unwrap();
        assert!(fit.converged);
        for (got, want) in fit.params.iter().zip(truth) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-8);
        }
    }

    #[test]
    fn nonlinear_objective_trace_never_increases() {
        let data: Vec<DataPoint> = (0..20)
            .map(|i| {
                let x = i as f64 * 0.25;
                (x, 3.0 * (-0.8 * x).exp() + 0.01 * ((i * 7 % 5) as f64 - 2.0), 0.05)
            })
            .collect();
        let fit = nls_solve(&["a", "k"], |x, p| p[0] * (-p[1] * x).exp(), &[1.0, 0.1], &data, NlsOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.objective_trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(fit.gradient_norm < 1e-6);
    }

    #[test]
    fn rank_deficient_design_is_flagged() {
        let data: Vec<DataPoint> = (0..8).map(|i| (i as f64, 3.0 * i as f64, 1.0)).collect();
        let fit = nls_solve(&["a", "b"], |x, p| (p[0] + p[1]) * x, &[0.0, 0.0], &data, NlsOptions::default()).unwrap();
        assert!(fit.degenerate || !fit.converged);
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let data: Vec<DataPoint> = (0..20).map(|i| (i as f64 * 0.2, (1.7 * i as f64 * 0.2).sin(), 1.0)).collect();
        let opts = NlsOptions { max_iter: 1, ..NlsOptions::default() };
        let fit = nls_solve(&["w"], |x, p| (p[0] * x).sin(), &[1.0], &data, opts).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.iterations, 1);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let data = [(0.0, 1.0, 1.0)];
        assert!(nls_solve(&["a", "b"], |x, p| p[0] * x + p[1], &[0.0, 0.0], &data, NlsOptions::default()).is_err());
        let data = [(0.0, 1.0, 0.0), (1.0, 2.0, 1.0)];
        assert!(nls_solve(&["a"], |_, p| p[0], &[0.0], &data, NlsOptions::default()).is_err());
    }

    fn eq1(tau_l: f64, tau_xx: f64, c0: f64) -> f64 {
        crate::cascade::concurrence_eq1(tau_l, tau_xx, c0).unwrap()
    }

    #[test]
    fn eq1_self_consistency() {
        let pts: Vec<DataPoint> = [1.3, 2.5, 5.0, 10.0, 15.0, 20.0].iter().map(|&t| (t, eq1(t, 35.0, 0.92), 1.0)).collect();
        let fit = fit_eq1(&pts).unwrap();
        assert!(fit.converged);
        assert_abs_diff_eq!(fit.param("c0").unwrap(), 0.92, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.param("tau_xx").unwrap(), 35.0, epsilon = 1e-6);
        assert!(fit_eq1(&pts[..2]).is_err());
    }

    #[test]
    fn eq1_covariance_scales_with_sigma_squared() {
        let grid = [1.3, 2.5, 5.0, 10.0, 15.0, 20.0];
        let pts = |s: f64| -> Vec<DataPoint> { grid.iter().map(|&t| (t, eq1(t, 35.0, 0.92), s)).collect() };
        let a = fit_eq1(&pts(0.01)).unwrap();
        let b = fit_eq1(&pts(0.02)).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let (x, y) = (a.covariance[i][j], b.covariance[i][j]);
                assert!((y - 4.0 * x).abs() <= 1e-6 * y.abs().max(1e-300), "{x} {y}");
            }
        }
    }

    #[test]
    fn sinusoid_examples() {
        let angles: Vec<f64> = (0..12).map(|i| i as f64 * 15.0).collect();
        let pts: Vec<DataPoint> = angles.iter().map(|&t| (t, 3.0 + 5.0 * (2.0 * (t - 30.0)).to_radians().cos(), 1.0)).collect();
        let fit = fit_sinusoid(&pts).unwrap();
        assert_abs_diff_eq!(fit.param("amplitude").unwrap(), 5.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.param("phase").unwrap(), 30.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.param("offset").unwrap(), 3.0, epsilon = 1e-9);

        let flat: Vec<DataPoint> = angles.iter().map(|&t| (t, 2.0, 1.0)).collect();
        assert_abs_diff_eq!(fit_sinusoid(&flat).unwrap().param("amplitude").unwrap(), 0.0, epsilon = 1e-12);

        let flipped: Vec<DataPoint> = angles.iter().map(|&t| (t, 3.0 - 5.0 * (2.0 * (t - 30.0)).to_radians().cos(), 1.0)).collect();
        let fit = fit_sinusoid(&flipped).unwrap();
        assert_abs_diff_eq!(fit.param("amplitude").unwrap(), 5.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.param("phase").unwrap(), 120.0, epsilon = 1e-9);

        let degenerate: Vec<DataPoint> = [10.0, 100.0, 190.0, 280.0, 10.0].iter().map(|&t| (t, 1.0, 1.0)).collect();
        assert!(matches!(fit_sinusoid(&degenerate), Err(Error::DegenerateDesign(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn fits_ignore_point_order(seed in 0u64..1000) {
            let grid = [1.3, 2.5, 5.0, 10.0, 15.0, 20.0];
            let noise = |i: usize| (((seed + i as u64 * 31) % 17) as f64 - 8.0) * 1e-4;
            let mut pts: Vec<DataPoint> = grid.iter().enumerate().map(|(i, &t)| (t, eq1(t, 30.0, 0.95) + noise(i), 1.0)).collect();
            let a = fit_eq1(&pts).unwrap();
            pts.reverse();
            pts.rotate_left((seed % 6) as usize);
            let b = fit_eq1(&pts).unwrap();
            for (x, y) in a.params.iter().zip(&b.params) {
                prop_assert!((x - y).abs() < 1e-7 * x.abs().max(1.0));
            }

            let mut s: Vec<DataPoint> = (0..12).map(|i| {
                let t = i as f64 * 15.0;
                (t, 1.0 + 0.4 * (2.0 * (t - 12.0)).to_radians().cos() + noise(i), 1.0)
            }).collect();
            let a = fit_sinusoid(&s).unwrap();
            s.reverse();
            let b = fit_sinusoid(&s).unwrap();
            for (x, y) in a.params.iter().zip(&b.params) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}

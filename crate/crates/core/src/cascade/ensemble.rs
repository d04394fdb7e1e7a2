//! Emission-time sampling and the ensemble-averaged two-photon state.
//!
//! The XX is prepared at `t₀` with density ∝ f(t)² (two-photon absorption),
//! decays after an exponential wait `u ~ Exp(τ_XX)`, and the X follows after
//! `v ~ Exp(τ_X)`. The detected state is `diag(½,0,0,½)` with coherence
//! `E[e^{iφ}]`.
//!
//! The deterministic integrator nests three Gauss–Legendre rules (over `t₀`,
//! and over `u` and `v` up to the end of the pulse) and closes each
//! exponential wait with its exact tail: once the envelope has vanished the
//! only phase is the FSS precession, whose average is
//! `∫ e^{−v/τ} e^{iωv} dv/τ = 1/(1 − iωτ)`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use super::{CascadeModel, EmissionEvent, PulseShape, PulseParams, QdParams, StarkCalibration};
use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;
use crate::rng;
use crate::state::TwoPhotonState;

/// Smallest accepted Monte-Carlo ensemble.
pub const MIN_MC_SAMPLES: usize = 1000;

/// Node counts of the nested Gauss–Legendre rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    /// Nodes over the preparation window.
    pub n_prep: usize,
    /// Nodes over the in-pulse part of the XX wait.
    pub n_xx: usize,
    /// Nodes over the in-pulse part of the X wait.
    pub n_x: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            n_prep: 64,
            n_xx: 96,
            n_x: 96,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EnsembleMethod {
    Quadrature(QuadratureConfig),
    MonteCarlo { n: usize, seed: u64 },
}

impl EnsembleMethod {
    pub fn quadrature() -> Self {
        Self::Quadrature(QuadratureConfig::default())
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Quadrature(_) => "quadrature",
            Self::MonteCarlo { .. } => "montecarlo",
        }
    }
}

/// Ensemble-averaged state with its concurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleEstimate {
    pub state: TwoPhotonState,
    /// `E[e^{iφ}]`.
    pub mean_phase: Complex64,
    pub concurrence: f64,
    /// Standard error of the concurrence (zero for quadrature).
    pub std_error: f64,
    pub n_samples: Option<usize>,
    pub seed: Option<u64>,
}

/// Draws one cascade from the seeded stream.
pub fn sample_emission_event<R: Rng + ?Sized>(
    qd: &QdParams,
    pulse: &PulseParams,
    cal: &StarkCalibration,
    rng: &mut R,
) -> Result<EmissionEvent> {
    let model = CascadeModel::new(*qd, *pulse, *cal)?;
    let sampler = EventSampler::new(&model)?;
    Ok(sampler.sample(rng))
}

pub(crate) struct EventSampler<'a> {
    model: &'a CascadeModel,
    prep: Option<Normal<f64>>,
    wait_xx: Exp<f64>,
    wait_x: Exp<f64>,
}

impl<'a> EventSampler<'a> {
    pub(crate) fn new(model: &'a CascadeModel) -> Result<Self> {
        let pulse = &model.pulse;
        let prep = match pulse.shape {
            // f² = exp(−8 ln2 t²/τ_L²): σ = τ_L / (4 √ln2)
            PulseShape::Gaussian if pulse.tau_l > 0.0 => Some(
                Normal::new(0.0, pulse.tau_l / (4.0 * std::f64::consts::LN_2.sqrt()))
                    .map_err(|e| Error::domain("sample_emission_event", e.to_string()))?,
            ),
            _ => None,
        };
        let exp = |tau: f64| {
            Exp::new(1.0 / tau).map_err(|e| Error::domain("sample_emission_event", e.to_string()))
        };
        Ok(Self {
            model,
            prep,
            wait_xx: exp(model.qd.tau_xx)?,
            wait_x: exp(model.qd.tau_x)?,
        })
    }

    fn preparation_time<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let pulse = &self.model.pulse;
        if pulse.tau_l == 0.0 {
            return 0.0;
        }
        let (lo, hi) = pulse.preparation_window();
        match (&self.prep, pulse.shape) {
            (Some(normal), _) => loop {
                let t = normal.sample(rng);
                if (lo..=hi).contains(&t) {
                    break t;
                }
            },
            _ => rng.random_range(lo..=hi),
        }
    }

    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> EmissionEvent {
        let t0 = self.preparation_time(rng);
        let t_xx = t0 + self.wait_xx.sample(rng);
        let t_x = t_xx + self.wait_x.sample(rng);
        EmissionEvent {
            t_xx,
            t_x,
            phi: self.model.phase(t_xx, t_x),
            e_shift_xx: self.model.splitting(t_xx),
            e_shift_x: self.model.splitting(t_x),
        }
    }
}

/// Mean of `e^{iφ}` and the standard error of its modulus.
pub(crate) fn coherence_from_phases(phases: impl Iterator<Item = f64>) -> (Complex64, f64, usize) {
    let mut n = 0usize;
    let mut sum = Complex64::new(0.0, 0.0);
    let zs: Vec<Complex64> = phases
        .map(|phi| {
            let z = Complex64::from_polar(1.0, phi);
            sum += z;
            n += 1;
            z
        })
        .collect();
    if n == 0 {
        return (sum, f64::NAN, 0);
    }
    let mean = sum / n as f64;
    // |mean| is estimated by the projection onto the mean direction
    let dir = if mean.norm() > 0.0 {
        mean.conj() / mean.norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    let proj_mean = (mean * dir).re;
    let var = zs
        .iter()
        .map(|z| ((z * dir).re - proj_mean).powi(2))
        .sum::<f64>()
        / (n.max(2) - 1) as f64;
    (mean, (var / n as f64).sqrt(), n)
}

/// `E[ phase_rotated_pair(φ) ]` over the emission-time distribution.
pub fn ensemble_state(
    qd: &QdParams,
    pulse: &PulseParams,
    cal: &StarkCalibration,
    method: EnsembleMethod,
) -> Result<EnsembleEstimate> {
    let model = CascadeModel::new(*qd, *pulse, *cal)?;
    model.ensemble(method)
}

impl CascadeModel {
    pub fn ensemble(&self, method: EnsembleMethod) -> Result<EnsembleEstimate> {
        match method {
            EnsembleMethod::Quadrature(cfg) => {
                let z = self.coherence_quadrature(cfg)?;
                Ok(EnsembleEstimate {
                    state: TwoPhotonState::cascade_family(z),
                    mean_phase: z,
                    concurrence: z.norm(),
                    std_error: 0.0,
                    n_samples: None,
                    seed: None,
                })
            }
            EnsembleMethod::MonteCarlo { n, seed } => {
                if n < MIN_MC_SAMPLES {
                    return Err(Error::domain(
                        "ensemble_state",
                        format!("n = {n} Monte-Carlo samples, need at least {MIN_MC_SAMPLES}"),
                    ));
                }
                let sampler = EventSampler::new(self)?;
                let mut rng = rng::stream(seed);
                let (z, se, _) = coherence_from_phases((0..n).map(|_| sampler.sample(&mut rng).phi));
                let z = if z.norm() > 1.0 { z / z.norm() } else { z };
                Ok(EnsembleEstimate {
                    state: TwoPhotonState::cascade_family(z),
                    mean_phase: z,
                    concurrence: z.norm(),
                    std_error: se,
                    n_samples: Some(n),
                    seed: Some(seed),
                })
            }
        }
    }

    /// Average of `e^{iφ}` for an X wait starting at `t` (X photon emitted at `t + v`).
    fn x_wait_average(&self, t: f64, t_end: f64, k_inf: Complex64, rule: &GaussLegendre) -> Complex64 {
        if t >= t_end {
            return k_inf;
        }
        let tau = self.qd.tau_x;
        let v_c = t_end - t;
        let mut acc = Complex64::new(0.0, 0.0);
        for (v, w) in rule.on_interval(0.0, v_c) {
            acc += Complex64::from_polar(w * (-v / tau).exp() / tau, self.phase(t, t + v));
        }
        acc + Complex64::from_polar((-v_c / tau).exp(), self.phase(t, t_end)) * k_inf
    }

    fn coherence_quadrature(&self, cfg: QuadratureConfig) -> Result<Complex64> {
        if cfg.n_prep == 0 || cfg.n_xx == 0 || cfg.n_x == 0 {
            return Err(Error::domain("ensemble_state", "quadrature node counts must be >= 1"));
        }
        let k_inf = Complex64::new(1.0, 0.0) / Complex64::new(1.0, -self.fss_rate() * self.qd.tau_x);
        if self.pulse_off() {
            return Ok(k_inf);
        }
        let pulse = &self.pulse;
        let t_end = pulse.support_end();
        let (lo, hi) = pulse.preparation_window();
        let prep_rule = GaussLegendre::new(cfg.n_prep);
        let xx_rule = GaussLegendre::new(cfg.n_xx);
        let x_rule = GaussLegendre::new(cfg.n_x);
        let tau_xx = self.qd.tau_xx;

        let mut norm = 0.0;
        let mut acc = Complex64::new(0.0, 0.0);
        for (t0, w0) in prep_rule.on_interval(lo, hi) {
            let density = w0 * pulse.envelope(t0).powi(2);
            if density == 0.0 {
                continue;
            }
            let u_c = (t_end - t0).max(0.0);
            let mut inner = Complex64::new(0.0, 0.0);
            for (u, wu) in xx_rule.on_interval(0.0, u_c) {
                inner += self.x_wait_average(t0 + u, t_end, k_inf, &x_rule) * (wu * (-u / tau_xx).exp() / tau_xx);
            }
            inner += k_inf * (-u_c / tau_xx).exp();
            acc += inner * density;
            norm += density;
        }
        Ok(acc / norm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::HBAR_UEV_PS;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn cal() -> StarkCalibration {
        StarkCalibration::default()
    }

    #[test]
    fn no_splitting_gives_phi_plus() {
        let qd = QdParams {
            fss: 0.0,
            ..QdParams::fast_dot()
        };
        let pulse = PulseParams::gaussian(10.0, 0.0);
        let est = ensemble_state(&qd, &pulse, &cal(), EnsembleMethod::quadrature()).unwrap();
        assert!(est.state.max_abs_diff(&TwoPhotonState::phi_plus()) < 1e-15);
        assert_abs_diff_eq!(est.concurrence, 1.0);
        let mut rng = rng::stream(3);
        for _ in 0..100 {
            let e = sample_emission_event(&qd, &pulse, &cal(), &mut rng).unwrap();
            assert_eq!(e.phi, 0.0);
            assert!(e.t_x >= e.t_xx);
        }
    }

    #[test]
    fn square_pulse_covering_both_emissions_gives_linear_phase() {
        let qd = QdParams {
            fss: 0.0,
            ..QdParams::fast_dot()
        };
        let pulse = PulseParams {
            shape: PulseShape::Square,
            ..PulseParams::gaussian(1e6, PI)
        };
        let s = crate::cascade::peak_stark_splitting(&pulse, &cal()).unwrap().micro_ev();
        let mut rng = rng::stream(5);
        for _ in 0..100 {
            let e = sample_emission_event(&qd, &pulse, &cal(), &mut rng).unwrap();
            if e.t_x.abs() < 5e5 && e.t_xx.abs() < 5e5 {
                let expected = s * (e.t_x - e.t_xx) / HBAR_UEV_PS;
                assert_abs_diff_eq!(e.phi, expected, epsilon = 1e-9 * expected.abs().max(1.0));
            }
        }
    }

    #[test]
    fn fss_phase_over_one_period_is_two_pi() {
        let qd = QdParams {
            fss: 200.0,
            ..QdParams::fast_dot()
        };
        let model = CascadeModel::new(qd, PulseParams::gaussian(0.0, PI), cal()).unwrap();
        let dt = crate::units::splitting_to_precession_period(200.0).unwrap().ps();
        assert_abs_diff_eq!(model.phase(0.0, dt), 2.0 * PI, epsilon = 1e-6);
    }

    #[test]
    fn small_monte_carlo_is_rejected() {
        let err = ensemble_state(
            &QdParams::fast_dot(),
            &PulseParams::default(),
            &cal(),
            EnsembleMethod::MonteCarlo { n: 999, seed: 1 },
        );
        assert!(err.is_err());
    }

    #[test]
    fn ensemble_family_structure() {
        let est = ensemble_state(&QdParams::fast_dot(), &PulseParams::default(), &cal(), EnsembleMethod::quadrature())
            .unwrap();
        let m = est.state.matrix();
        assert_abs_diff_eq!(m[(0, 0)].re, 0.5);
        assert_abs_diff_eq!(m[(3, 3)].re, 0.5);
        assert_eq!(m[(1, 1)].norm(), 0.0);
        assert_eq!(m[(2, 2)].norm(), 0.0);
        assert_abs_diff_eq!(est.state.concurrence(), 2.0 * m[(0, 3)].norm(), epsilon = 1e-9);
        assert!(est.concurrence < 0.99 && est.concurrence > 0.5);
    }

    #[test]
    fn quadrature_is_converged_at_default_nodes() {
        let fine = QuadratureConfig {
            n_prep: 128,
            n_xx: 160,
            n_x: 160,
        };
        for (tau_l, area) in [(1.3, PI), (20.0, PI), (20.0, 2.0 * PI), (5.0, 0.7 * PI)] {
            let pulse = PulseParams::gaussian(tau_l, area);
            let a = ensemble_state(&QdParams::fast_dot(), &pulse, &cal(), EnsembleMethod::quadrature()).unwrap();
            let b = ensemble_state(&QdParams::fast_dot(), &pulse, &cal(), EnsembleMethod::Quadrature(fine)).unwrap();
            assert!((a.mean_phase - b.mean_phase).norm() < 1e-8, "tau_l {tau_l}: {} vs {}", a.concurrence, b.concurrence);
        }
    }

    #[test]
    fn monte_carlo_is_seed_deterministic() {
        let m = EnsembleMethod::MonteCarlo { n: 5000, seed: 11 };
        let a = ensemble_state(&QdParams::fast_dot(), &PulseParams::default(), &cal(), m).unwrap();
        let b = ensemble_state(&QdParams::fast_dot(), &PulseParams::default(), &cal(), m).unwrap();
        assert_eq!(a, b);
        assert!(a.std_error > 0.0 && a.std_error < 0.01);
    }
}

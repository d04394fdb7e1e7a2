//! Physical constants and the handful of unit conversions used across the crate.
//!
//! Public quantities carry their unit in the type or the argument name:
//! energies in μeV (splittings, linewidths, bandwidths) or eV (line positions),
//! times in ps. Constants are stored in SI-derived eV·s and converted once.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Planck constant, eV·s.
pub const PLANCK_H_EV_S: f64 = 4.135667696e-15;
/// Reduced Planck constant, eV·s, derived as h / 2π (6.582119569e-16).
pub const HBAR_EV_S: f64 = PLANCK_H_EV_S / (2.0 * std::f64::consts::PI);

const UEV_PER_EV: f64 = 1e6;
const PS_PER_S: f64 = 1e12;

/// Planck constant in μeV·ps.
pub const PLANCK_H_UEV_PS: f64 = PLANCK_H_EV_S * UEV_PER_EV * PS_PER_S;
/// ħ in μeV·ps. A splitting `s` (μeV) held for `t` (ps) accrues `s * t / HBAR_UEV_PS` rad.
pub const HBAR_UEV_PS: f64 = HBAR_EV_S * UEV_PER_EV * PS_PER_S;

/// Default time-bandwidth product of the excitation laser.
pub const DEFAULT_TBP: f64 = 0.374;

/// Energy splitting in μeV.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EnergySplitting(f64);

impl EnergySplitting {
    pub fn new(micro_ev: f64) -> Result<Self> {
        if !micro_ev.is_finite() || micro_ev < 0.0 {
            return Err(Error::domain("EnergySplitting", format!("{micro_ev} μeV must be finite and >= 0")));
        }
        Ok(Self(micro_ev))
    }

    pub fn micro_ev(self) -> f64 {
        self.0
    }

    pub fn ev(self) -> f64 {
        self.0 / UEV_PER_EV
    }
}

/// Time interval in ps.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Duration(f64);

impl Duration {
    pub fn new(ps: f64) -> Result<Self> {
        if !ps.is_finite() || ps < 0.0 {
            return Err(Error::domain("Duration", format!("{ps} ps must be finite and >= 0")));
        }
        Ok(Self(ps))
    }

    pub fn ps(self) -> f64 {
        self.0
    }

    pub fn seconds(self) -> f64 {
        self.0 / PS_PER_S
    }
}

fn require_positive(op: &'static str, name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(op, format!("{name} = {v} must be finite and > 0")))
    }
}

/// FWHM pulse duration (ps) of a pulse with FWHM bandwidth `delta_e_uev` and
/// time-bandwidth product `tbp`.
pub fn bandwidth_to_duration(delta_e_uev: f64, tbp: f64) -> Result<Duration> {
    require_positive("bandwidth_to_duration", "delta_e", delta_e_uev)?;
    require_positive("bandwidth_to_duration", "tbp", tbp)?;
    let seconds = tbp * PLANCK_H_EV_S / (delta_e_uev / UEV_PER_EV);
    Duration::new(seconds * PS_PER_S)
}

/// Period (ps) of the relative phase `exp(i S t / ħ)` for a splitting `S`.
pub fn splitting_to_precession_period(s_uev: f64) -> Result<Duration> {
    require_positive("splitting_to_precession_period", "s", s_uev)?;
    Duration::new(PLANCK_H_EV_S / (s_uev / UEV_PER_EV) * PS_PER_S)
}

/// Natural linewidth (FWHM, μeV) of a transition with lifetime `tau_ps`.
pub fn lifetime_to_linewidth(tau_ps: f64) -> Result<EnergySplitting> {
    require_positive("lifetime_to_linewidth", "tau", tau_ps)?;
    EnergySplitting::new(HBAR_EV_S / (tau_ps / PS_PER_S) * UEV_PER_EV)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn planck_is_two_pi_hbar() {
        assert_relative_eq!(PLANCK_H_EV_S, 2.0 * PI * HBAR_EV_S, max_relative = 1e-12);
        assert_relative_eq!(PLANCK_H_UEV_PS, 4135.667696, max_relative = 1e-12);
        assert_relative_eq!(HBAR_EV_S, 6.582119569e-16, max_relative = 1e-9);
        assert_relative_eq!(HBAR_UEV_PS, 658.2119569, max_relative = 1e-9);
    }

    #[test]
    fn bandwidth_examples() {
        let d = |e| bandwidth_to_duration(e, DEFAULT_TBP).unwrap().ps();
        assert!((d(78.0) - 19.83).abs() < 0.005);
        assert!((d(1170.0) - 1.32).abs() < 0.005);
        assert!((d(2300.0) - 0.672).abs() < 0.0005);
    }

    #[test]
    fn bandwidth_is_linear_in_tbp_and_decreasing_in_bandwidth() {
        let a = bandwidth_to_duration(100.0, 0.374).unwrap().ps();
        let b = bandwidth_to_duration(100.0, 0.748).unwrap().ps();
        assert_relative_eq!(b, 2.0 * a, max_relative = 1e-14);
        let mut prev = f64::INFINITY;
        for e in [10.0, 50.0, 78.0, 500.0, 1170.0, 2300.0] {
            let t = bandwidth_to_duration(e, 0.374).unwrap().ps();
            assert!(t < prev);
            prev = t;
        }
    }

    #[test]
    fn precession_period_examples() {
        let p = |s| splitting_to_precession_period(s).unwrap().ps();
        assert!((p(200.0) - 20.68).abs() < 0.005);
        assert!((p(100.0) - 41.36).abs() < 0.005);
        assert!((p(1e6) - 4.14e-3).abs() < 1e-5);
        for s in [1.0, 10.0, 200.0, 1000.0] {
            assert_relative_eq!(p(s) * s, PLANCK_H_UEV_PS, max_relative = 1e-12);
        }
    }

    #[test]
    fn linewidth_examples() {
        let g = |t| lifetime_to_linewidth(t).unwrap().micro_ev();
        assert!((g(35.0) - 18.81).abs() < 0.005);
        assert!((g(53.0) - 12.42).abs() < 0.005);
        assert!(g(1e9) < 1e-6);
    }

    #[test]
    fn non_positive_inputs_are_rejected() {
        assert!(bandwidth_to_duration(0.0, 0.374).is_err());
        assert!(bandwidth_to_duration(78.0, -1.0).is_err());
        assert!(splitting_to_precession_period(0.0).is_err());
        assert!(splitting_to_precession_period(-3.0).is_err());
        assert!(lifetime_to_linewidth(0.0).is_err());
        assert!(lifetime_to_linewidth(f64::NAN).is_err());
        assert!(EnergySplitting::new(-1.0).is_err());
        assert!(Duration::new(f64::INFINITY).is_err());
    }
}

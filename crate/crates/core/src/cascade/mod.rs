//! Forward model of the XX → X → ground cascade under a two-photon resonant pulse.
//!
//! The laser shifts the exciton level whose dipole is parallel to its
//! polarization (H) by an amount proportional to the instantaneous intensity.
//! Between the XX and X emissions the H and V branches then accrue the phase
//!
//! ```text
//! φ = (1/ħ) ∫_{t_xx}^{t_x} [fss + S_peak · f(t)] dt
//! ```
//!
//! where `f` is the normalized intensity envelope (`f(0) = 1`). Averaging
//! `e^{iφ}` over emission times gives the HH–VV coherence of the detected pair.

pub(crate) mod ensemble;
mod sweep;

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{EnergySplitting, HBAR_UEV_PS};

pub use ensemble::{
    ensemble_state, sample_emission_event, EnsembleEstimate, EnsembleMethod, QuadratureConfig,
    MIN_MC_SAMPLES,
};
pub use sweep::{
    notch_filter_experiment, sweep_duration, sweep_power, write_sweep_csv, NotchResult, SweepAxis,
    SweepPoint,
};

/// Quantum-dot parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QdParams {
    /// XX lifetime, ps.
    pub tau_xx: f64,
    /// X lifetime, ps.
    pub tau_x: f64,
    /// Fine structure splitting, μeV.
    pub fss: f64,
    /// X emission energy, eV.
    pub e_x_line: f64,
    /// XX emission energy, eV.
    pub e_xx_line: f64,
    /// Purcell factor (informational only).
    pub purcell: f64,
}

impl QdParams {
    /// Dot with τ_XX = 35 ps, τ_X = 53 ps and 0.8 μeV residual FSS.
    pub fn fast_dot() -> Self {
        Self {
            tau_xx: 35.0,
            tau_x: 53.0,
            fss: 0.8,
            e_x_line: 1.5886,
            e_xx_line: 1.5843,
            purcell: 3.7,
        }
    }

    /// Dot with τ_XX = 81 ps, τ_X = 122 ps and 0.7 μeV residual FSS.
    pub fn slow_dot() -> Self {
        Self {
            tau_xx: 81.0,
            tau_x: 122.0,
            fss: 0.7,
            purcell: 1.6,
            ..Self::fast_dot()
        }
    }

    /// XX binding energy `e_x_line − e_xx_line`, meV.
    pub fn binding_energy_mev(&self) -> f64 {
        (self.e_x_line - self.e_xx_line) * 1e3
    }

    pub fn validate(&self) -> Result<()> {
        let op = "QdParams";
        for (name, v) in [("tau_xx", self.tau_xx), ("tau_x", self.tau_x)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(op, format!("{name} = {v} must be > 0")));
            }
        }
        if !(self.fss.is_finite() && self.fss >= 0.0) {
            return Err(Error::domain(op, format!("fss = {} must be >= 0", self.fss)));
        }
        if !(self.e_x_line.is_finite() && self.e_xx_line.is_finite()) {
            return Err(Error::domain(op, "line energies must be finite"));
        }
        if self.e_xx_line >= self.e_x_line {
            return Err(Error::domain(op, "e_xx_line must lie below e_x_line (positive binding energy)"));
        }
        Ok(())
    }

    /// Checks the binding energy against an accepted band in meV.
    pub fn check_binding(&self, band_mev: (f64, f64)) -> Result<()> {
        let eb = self.binding_energy_mev();
        if eb < band_mev.0 || eb > band_mev.1 {
            return Err(Error::domain(
                "QdParams",
                format!("binding energy {eb:.3} meV outside [{}, {}] meV", band_mev.0, band_mev.1),
            ));
        }
        Ok(())
    }
}

impl Default for QdParams {
    fn default() -> Self {
        Self::fast_dot()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PulseShape {
    Gaussian,
    Square,
}

/// Excitation pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseParams {
    /// Intensity-envelope FWHM, ps.
    pub tau_l: f64,
    /// Two-photon pulse area, rad (π maximizes the XX population).
    pub area: f64,
    pub shape: PulseShape,
    /// Laser linear polarization, degrees from H.
    pub pol_angle: f64,
}

impl PulseParams {
    pub fn gaussian(tau_l: f64, area: f64) -> Self {
        Self {
            tau_l,
            area,
            shape: PulseShape::Gaussian,
            pol_angle: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_l.is_finite() && self.tau_l >= 0.0) {
            return Err(Error::domain("PulseParams", format!("tau_l = {} must be >= 0", self.tau_l)));
        }
        if !(self.area.is_finite() && self.area >= 0.0) {
            return Err(Error::domain("PulseParams", format!("area = {} must be >= 0", self.area)));
        }
        if !self.pol_angle.is_finite() {
            return Err(Error::domain("PulseParams", "pol_angle must be finite"));
        }
        Ok(())
    }

    /// Normalized intensity envelope, `f(0) = 1`.
    pub fn envelope(&self, t: f64) -> f64 {
        if self.tau_l == 0.0 {
            return 0.0;
        }
        match self.shape {
            PulseShape::Gaussian => (-4.0 * LN_2 * t * t / (self.tau_l * self.tau_l)).exp(),
            PulseShape::Square => {
                if t.abs() <= 0.5 * self.tau_l {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `∫_{t1}^{t2} f(t) dt` in ps.
    pub fn envelope_integral(&self, t1: f64, t2: f64) -> f64 {
        if self.tau_l == 0.0 || t2 == t1 {
            return 0.0;
        }
        match self.shape {
            PulseShape::Gaussian => {
                let k = (4.0 * LN_2).sqrt() / self.tau_l;
                let (y1, y2) = (k * t1, k * t2);
                // erf differences lose precision in the far tails; use erfc there
                let diff = if y1 >= 0.0 && y2 >= 0.0 {
                    libm::erfc(y1) - libm::erfc(y2)
                } else if y1 <= 0.0 && y2 <= 0.0 {
                    libm::erfc(-y2) - libm::erfc(-y1)
                } else {
                    libm::erf(y2) - libm::erf(y1)
                };
                0.5 * PI.sqrt() / k * diff
            }
            PulseShape::Square => {
                let half = 0.5 * self.tau_l;
                let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
                let overlap = (hi.min(half) - lo.max(-half)).max(0.0);
                if t1 <= t2 {
                    overlap
                } else {
                    -overlap
                }
            }
        }
    }

    /// Time after which the envelope is treated as zero.
    pub(crate) fn support_end(&self) -> f64 {
        match self.shape {
            // f(5 τ_L) = 2^-100
            PulseShape::Gaussian => 5.0 * self.tau_l,
            PulseShape::Square => 0.5 * self.tau_l,
        }
    }

    /// Interval holding the XX preparation time (density ∝ f²).
    pub(crate) fn preparation_window(&self) -> (f64, f64) {
        match self.shape {
            PulseShape::Gaussian => (-3.0 * self.tau_l, 3.0 * self.tau_l),
            PulseShape::Square => (-0.5 * self.tau_l, 0.5 * self.tau_l),
        }
    }
}

impl Default for PulseParams {
    fn default() -> Self {
        Self::gaussian(20.0, PI)
    }
}

/// Peak AC-Stark splitting `s_cal` produced by a π pulse of duration `tau_cal`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StarkCalibration {
    /// μeV.
    pub s_cal: f64,
    /// ps.
    pub tau_cal: f64,
}

impl StarkCalibration {
    pub fn validate(&self) -> Result<()> {
        if !(self.s_cal.is_finite() && self.s_cal >= 0.0) {
            return Err(Error::domain("StarkCalibration", format!("s_cal = {} must be >= 0", self.s_cal)));
        }
        if !(self.tau_cal.is_finite() && self.tau_cal > 0.0) {
            return Err(Error::domain("StarkCalibration", format!("tau_cal = {} must be > 0", self.tau_cal)));
        }
        Ok(())
    }
}

impl Default for StarkCalibration {
    /// 200 μeV at π area for a 10 ps pulse.
    fn default() -> Self {
        Self {
            s_cal: 200.0,
            tau_cal: 10.0,
        }
    }
}

/// One simulated photon pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmissionEvent {
    /// XX photon emission time, ps from the pulse peak.
    pub t_xx: f64,
    /// X photon emission time, ps.
    pub t_x: f64,
    /// Relative H/V phase accrued between the two emissions, rad.
    pub phi: f64,
    /// Redshift of the H-polarized XX photon at `t_xx`, μeV.
    pub e_shift_xx: f64,
    /// Blueshift of the H-polarized X photon at `t_x`, μeV.
    pub e_shift_x: f64,
}

/// Peak splitting `S_peak = s_cal · (Θ/π) · (tau_cal/τ_L)`.
///
/// At fixed two-photon area the peak intensity scales as `1/τ_L` and the
/// Stark shift is linear in intensity.
pub fn peak_stark_splitting(pulse: &PulseParams, cal: &StarkCalibration) -> Result<EnergySplitting> {
    if !(pulse.tau_l > 0.0) {
        return Err(Error::domain("peak_stark_splitting", format!("tau_l = {} must be > 0", pulse.tau_l)));
    }
    EnergySplitting::new(cal.s_cal * (pulse.area / PI) * (cal.tau_cal / pulse.tau_l))
}

/// `S(t) = fss + S_peak · f(t)` in μeV.
pub fn instantaneous_splitting(t: f64, qd: &QdParams, pulse: &PulseParams, cal: &StarkCalibration) -> f64 {
    match peak_stark_splitting(pulse, cal) {
        Ok(s) => qd.fss + s.micro_ev() * pulse.envelope(t),
        Err(_) => qd.fss,
    }
}

/// Idealized Rabi occupation of the XX state, `sin²(Θ/2)`.
pub fn rabi_population(area: f64) -> f64 {
    (0.5 * area).sin().powi(2)
}

/// Argument `x = √2·τ_L / (4·τ_XX)` of the square-pulse concurrence law.
pub fn eq1_argument(tau_l: f64, tau_xx: f64) -> f64 {
    std::f64::consts::SQRT_2 * tau_l / (4.0 * tau_xx)
}

/// Square-pulse effective model: `C = c0 · (1 − x·e^{−x})`, `x = √2·τ_L/(4·τ_XX)`.
pub fn concurrence_eq1(tau_l: f64, tau_xx: f64, c0: f64) -> Result<f64> {
    if !(tau_xx.is_finite() && tau_xx > 0.0) {
        return Err(Error::domain("concurrence_eq1", format!("tau_xx = {tau_xx} must be > 0")));
    }
    if !(tau_l.is_finite() && tau_l >= 0.0) {
        return Err(Error::domain("concurrence_eq1", format!("tau_l = {tau_l} must be >= 0")));
    }
    if !(0.0..=1.0).contains(&c0) {
        return Err(Error::domain("concurrence_eq1", format!("c0 = {c0} outside [0, 1]")));
    }
    let x = eq1_argument(tau_l, tau_xx);
    Ok(c0 * (1.0 - x * (-x).exp()))
}

/// Parameters bundled with the derived peak splitting.
#[derive(Debug, Clone, Copy)]
pub struct CascadeModel {
    pub qd: QdParams,
    pub pulse: PulseParams,
    pub cal: StarkCalibration,
    s_peak: f64,
}

impl CascadeModel {
    pub fn new(qd: QdParams, pulse: PulseParams, cal: StarkCalibration) -> Result<Self> {
        qd.validate()?;
        pulse.validate()?;
        cal.validate()?;
        let s_peak = if pulse.tau_l > 0.0 {
            peak_stark_splitting(&pulse, &cal)?.micro_ev()
        } else {
            0.0
        };
        Ok(Self { qd, pulse, cal, s_peak })
    }

    /// Peak laser-induced splitting, μeV.
    pub fn s_peak(&self) -> f64 {
        self.s_peak
    }

    /// True when the laser contributes no splitting (τ_L = 0 or zero area).
    pub fn pulse_off(&self) -> bool {
        self.s_peak == 0.0 || self.pulse.tau_l == 0.0
    }

    /// Laser-induced part of the splitting at `t`, μeV.
    pub fn stark_shift(&self, t: f64) -> f64 {
        if self.pulse_off() {
            0.0
        } else {
            self.s_peak * self.pulse.envelope(t)
        }
    }

    /// Total H–V splitting at `t`, μeV.
    pub fn splitting(&self, t: f64) -> f64 {
        self.qd.fss + self.stark_shift(t)
    }

    /// `(1/ħ) ∫_{t1}^{t2} S(t) dt`, rad.
    pub fn phase(&self, t1: f64, t2: f64) -> f64 {
        let stark = if self.pulse_off() {
            0.0
        } else {
            self.s_peak * self.pulse.envelope_integral(t1, t2)
        };
        (self.qd.fss * (t2 - t1) + stark) / HBAR_UEV_PS
    }

    /// FSS precession rate, rad/ps.
    pub(crate) fn fss_rate(&self) -> f64 {
        self.qd.fss / HBAR_UEV_PS
    }
}

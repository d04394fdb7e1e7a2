//! Parameter sweeps over pulse duration and area, and the notch-filter experiment.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::ensemble::{coherence_from_phases, EventSampler};
use super::{CascadeModel, EnsembleMethod, PulseParams, QdParams, StarkCalibration};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SweepAxis {
    /// Pulse duration in ps.
    Duration,
    /// Pulse area in units of π.
    Area,
}

impl SweepAxis {
    pub fn column(&self) -> &'static str {
        match self {
            Self::Duration => "tau_l_ps",
            Self::Area => "area_over_pi",
        }
    }
}

/// One grid point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    /// τ_L in ps or Θ/π, depending on the axis.
    pub x: f64,
    pub concurrence: f64,
    pub std_error: f64,
    pub method: &'static str,
    pub n_samples: Option<usize>,
    pub seed: Option<u64>,
}

impl SweepPoint {
    /// `(x, C, σ)` triple for least-squares fitting, with unit weight for exact values.
    pub fn fit_input(&self) -> (f64, f64, f64) {
        let sigma = if self.std_error > 0.0 { self.std_error } else { 1.0 };
        (self.x, self.concurrence, sigma)
    }
}

fn method_for_point(method: EnsembleMethod, index: usize) -> EnsembleMethod {
    match method {
        EnsembleMethod::MonteCarlo { n, seed } => EnsembleMethod::MonteCarlo {
            n,
            seed: rng::derive_seed(seed, index as u64),
        },
        q => q,
    }
}

fn run_points(
    qd: &QdParams,
    cal: &StarkCalibration,
    pulses: Vec<(f64, PulseParams)>,
    method: EnsembleMethod,
) -> Result<Vec<SweepPoint>> {
    pulses
        .into_par_iter()
        .enumerate()
        .map(|(i, (x, pulse))| {
            let est = CascadeModel::new(*qd, pulse, *cal)?.ensemble(method_for_point(method, i))?;
            Ok(SweepPoint {
                x,
                concurrence: est.concurrence,
                std_error: est.std_error,
                method: method.label(),
                n_samples: est.n_samples,
                seed: est.seed,
            })
        })
        .collect()
}

/// Concurrence versus pulse duration at fixed area.
///
/// Grid points are evaluated in parallel; Monte-Carlo seeds are derived from
/// the point index, so output does not depend on the thread count.
pub fn sweep_duration(
    qd: &QdParams,
    cal: &StarkCalibration,
    durations: &[f64],
    area: f64,
    method: EnsembleMethod,
) -> Result<Vec<SweepPoint>> {
    if durations.is_empty() {
        return Err(Error::domain("sweep_duration", "durations must be non-empty"));
    }
    if let Some(bad) = durations.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
        return Err(Error::domain("sweep_duration", format!("duration {bad} must be > 0")));
    }
    let pulses = durations
        .iter()
        .map(|&tau_l| (tau_l, PulseParams::gaussian(tau_l, area)))
        .collect();
    run_points(qd, cal, pulses, method)
}

/// Concurrence versus pulse area at fixed duration; `x` is reported as Θ/π.
pub fn sweep_power(
    qd: &QdParams,
    cal: &StarkCalibration,
    tau_l: f64,
    areas: &[f64],
    method: EnsembleMethod,
) -> Result<Vec<SweepPoint>> {
    if areas.is_empty() {
        return Err(Error::domain("sweep_power", "areas must be non-empty"));
    }
    if !(tau_l.is_finite() && tau_l > 0.0) {
        return Err(Error::domain("sweep_power", format!("tau_l = {tau_l} must be > 0")));
    }
    let pulses = areas
        .iter()
        .map(|&area| (area / PI, PulseParams::gaussian(tau_l, area)))
        .collect();
    run_points(qd, cal, pulses, method)
}

/// Writes `<axis>,concurrence,method,n_samples,seed` rows.
pub fn write_sweep_csv<W: Write>(writer: W, axis: SweepAxis, points: &[SweepPoint]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record([axis.column(), "concurrence", "method", "n_samples", "seed"])?;
    for p in points {
        w.write_record([
            format!("{}", p.x),
            format!("{}", p.concurrence),
            p.method.to_string(),
            p.n_samples.map(|n| n.to_string()).unwrap_or_default(),
            p.seed.map(|s| s.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NotchResult {
    pub concurrence_filtered: f64,
    pub concurrence_unfiltered: f64,
    pub std_error_filtered: f64,
    pub retained_fraction: f64,
}

/// Rejects XX photons whose laser-induced redshift exceeds `cutoff` (μeV),
/// i.e. a notch placed `cutoff` below the unperturbed H-polarized XX line,
/// and returns the concurrence of the retained pairs.
pub fn notch_filter_experiment(
    qd: &QdParams,
    pulse: &PulseParams,
    cal: &StarkCalibration,
    cutoff: f64,
    n: usize,
    seed: u64,
) -> Result<NotchResult> {
    if !(cutoff >= 0.0) {
        return Err(Error::domain("notch_filter_experiment", format!("cutoff = {cutoff} must be >= 0")));
    }
    if n < super::MIN_MC_SAMPLES {
        return Err(Error::domain(
            "notch_filter_experiment",
            format!("n = {n} samples, need at least {}", super::MIN_MC_SAMPLES),
        ));
    }
    let model = CascadeModel::new(*qd, *pulse, *cal)?;
    let sampler = EventSampler::new(&model)?;
    let mut stream = rng::stream(seed);
    let events: Vec<_> = (0..n).map(|_| sampler.sample(&mut stream)).collect();
    let (all, _, _) = coherence_from_phases(events.iter().map(|e| e.phi));
    let (kept, se, n_kept) = coherence_from_phases(
        events
            .iter()
            .filter(|e| e.e_shift_xx - qd.fss <= cutoff)
            .map(|e| e.phi),
    );
    if n_kept == 0 {
        return Err(Error::EmptySelection);
    }
    Ok(NotchResult {
        concurrence_filtered: kept.norm().min(1.0),
        concurrence_unfiltered: all.norm().min(1.0),
        std_error_filtered: se,
        retained_fraction: n_kept as f64 / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cal() -> StarkCalibration {
        StarkCalibration::default()
    }

    #[test]
    fn duration_sweep_trends() {
        let grid = [1.3, 5.0, 10.0, 20.0];
        let fast = sweep_duration(&QdParams::fast_dot(), &cal(), &grid, PI, EnsembleMethod::quadrature()).unwrap();
        assert!(fast.windows(2).all(|w| w[1].concurrence < w[0].concurrence));
        let slow_qd = QdParams {
            tau_xx: 81.0,
            ..QdParams::fast_dot()
        };
        let slow = sweep_duration(&slow_qd, &cal(), &grid, PI, EnsembleMethod::quadrature()).unwrap();
        for (f, s) in fast.iter().zip(&slow) {
            assert!(s.concurrence >= f.concurrence);
        }
    }

    #[test]
    fn vanishing_pulse_recovers_fss_only_value() {
        let qd = QdParams::fast_dot();
        let reference = CascadeModel::new(qd, PulseParams::gaussian(0.0, PI), cal())
            .unwrap()
            .ensemble(EnsembleMethod::quadrature())
            .unwrap()
            .concurrence;
        let pts = sweep_duration(&qd, &cal(), &[0.001], PI, EnsembleMethod::quadrature()).unwrap();
        assert!(pts[0].concurrence >= 0.999 * reference);
    }

    #[test]
    fn bad_grids_are_rejected() {
        let m = EnsembleMethod::quadrature();
        assert!(sweep_duration(&QdParams::fast_dot(), &cal(), &[], PI, m).is_err());
        assert!(sweep_duration(&QdParams::fast_dot(), &cal(), &[1.0, 0.0], PI, m).is_err());
        assert!(sweep_power(&QdParams::fast_dot(), &cal(), 20.0, &[], m).is_err());
    }

    #[test]
    fn power_sweep_trends() {
        let qd = QdParams::fast_dot();
        let m = EnsembleMethod::quadrature();
        let pts = sweep_power(&qd, &cal(), 20.0, &[0.7 * PI, PI, 2.0 * PI], m).unwrap();
        assert!(pts.windows(2).all(|w| w[1].concurrence < w[0].concurrence));
        let zero = sweep_power(&qd, &cal(), 20.0, &[0.0], m).unwrap();
        let fss_only = 1.0 / (1.0 + (qd.fss * qd.tau_x / crate::units::HBAR_UEV_PS).powi(2)).sqrt();
        assert!((zero[0].concurrence - fss_only).abs() < 1e-12);
        let strong = StarkCalibration { s_cal: 400.0, ..cal() };
        let doubled = sweep_power(&qd, &strong, 20.0, &[0.7 * PI, PI, 2.0 * PI], m).unwrap();
        for (a, b) in pts.iter().zip(&doubled) {
            assert!(b.concurrence < a.concurrence);
        }
    }

    #[test]
    fn monte_carlo_sweep_seeds_are_derived_per_point() {
        let m = EnsembleMethod::MonteCarlo { n: 2000, seed: 9 };
        let pts = sweep_duration(&QdParams::fast_dot(), &cal(), &[5.0, 5.0], PI, m).unwrap();
        assert_ne!(pts[0].seed, pts[1].seed);
        assert_eq!(pts[0].seed, Some(rng::derive_seed(9, 0)));
    }

    #[test]
    fn csv_layout() {
        let pts = sweep_duration(&QdParams::fast_dot(), &cal(), &[10.0], PI, EnsembleMethod::quadrature()).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, SweepAxis::Duration, &pts).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("tau_l_ps,concurrence,method,n_samples,seed"));
        assert!(lines.next().unwrap().starts_with("10,0.9"));
        assert!(!text.contains('\r'));
    }

    #[test]
    fn notch_filter_examples() {
        let qd = QdParams::fast_dot();
        let pulse = PulseParams::default();
        let open = notch_filter_experiment(&qd, &pulse, &cal(), f64::INFINITY, 20_000, 4).unwrap();
        assert_eq!(open.retained_fraction, 1.0);
        assert_eq!(open.concurrence_filtered, open.concurrence_unfiltered);
        let tight = notch_filter_experiment(&qd, &pulse, &cal(), 1e-9, 20_000, 4).unwrap();
        assert!(tight.retained_fraction < 1.0);
        assert!(tight.concurrence_filtered >= tight.concurrence_unfiltered);
        let dark = PulseParams::gaussian(20.0, 0.0);
        let all = notch_filter_experiment(&qd, &dark, &cal(), 0.0, 5_000, 4).unwrap();
        assert_eq!(all.retained_fraction, 1.0);
        assert!(notch_filter_experiment(&qd, &pulse, &cal(), -1.0, 5_000, 4).is_err());
    }
}

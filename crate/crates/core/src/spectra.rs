//! Polarization-resolved emission spectra with laser-induced sidebands, and
//! the two spectral metrics: centroid splitting and sideband fraction.
//!
//! Every sampled cascade deposits one photon per line. The H-polarized branch
//! is displaced by the instantaneous splitting (XX down, X up), the V branch
//! stays at the line. Each branch histogram is convolved with the natural
//! Lorentzian of the emitting transition and a Gaussian instrument response;
//! an analyzer at angle θ sees `cos²(θ − θ_L)·H + sin²(θ − θ_L)·V`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cascade::ensemble::EventSampler;
use crate::cascade::{CascadeModel, PulseParams, QdParams, StarkCalibration, MIN_MC_SAMPLES};
use crate::error::{Error, Result};
use crate::fitting::fit_sinusoid;
use crate::rng;
use crate::units::{EnergySplitting, HBAR_UEV_PS};

/// Default Gaussian instrument response FWHM, μeV.
pub const DEFAULT_INSTRUMENT_FWHM: f64 = 25.0;
/// Lorentzian support in linewidths on each side.
pub const LORENTZ_CUTOFF: f64 = 50.0;
const UEV_PER_EV: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Line {
    X,
    XX,
}

impl fmt::Display for Line {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Line::X => "X",
            Line::XX => "XX",
        })
    }
}

impl FromStr for Line {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "X" | "x" => Ok(Line::X),
            "XX" | "xx" => Ok(Line::XX),
            _ => Err(Error::domain("Line", format!("unknown line `{s}`"))),
        }
    }
}

/// Closed energy interval in eV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisWindow {
    pub lo: f64,
    pub hi: f64,
}

impl AnalysisWindow {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        let w = Self { lo, hi };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(Error::domain("AnalysisWindow", format!("need lo < hi, got [{}, {}]", self.lo, self.hi)));
        }
        Ok(())
    }

    pub fn contains(&self, e: f64) -> bool {
        (self.lo..=self.hi).contains(&e)
    }

    /// Integration windows used for the centroid analysis.
    pub fn default_signal(line: Line) -> Self {
        match line {
            Line::X => Self { lo: 1.5882, hi: 1.5890 },
            Line::XX => Self { lo: 1.5835, hi: 1.5846 },
        }
    }

    /// Line-free regions on the far side of each line from its sideband.
    pub fn default_noise(line: Line) -> Self {
        match line {
            Line::X => Self { lo: 1.5877, hi: 1.5880 },
            Line::XX => Self { lo: 1.5849, hi: 1.5852 },
        }
    }
}

/// Uniform energy grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyGrid {
    /// First bin center, eV.
    pub start: f64,
    /// Bin spacing, μeV.
    pub step_uev: f64,
    pub len: usize,
}

impl EnergyGrid {
    pub fn new(start: f64, step_uev: f64, len: usize) -> Result<Self> {
        if !(start.is_finite() && step_uev.is_finite() && step_uev > 0.0) {
            return Err(Error::domain("EnergyGrid", format!("step = {step_uev} μeV must be > 0")));
        }
        if len < 2 {
            return Err(Error::domain("EnergyGrid", "need at least two bins"));
        }
        Ok(Self { start, step_uev, len })
    }

    /// Grid from `center + below` to `center + above` (offsets in μeV).
    pub fn around(center: f64, below_uev: f64, above_uev: f64, step_uev: f64) -> Result<Self> {
        if !(below_uev < above_uev) {
            return Err(Error::domain("EnergyGrid", "below offset must be smaller than above offset"));
        }
        let len = ((above_uev - below_uev) / step_uev).round() as usize + 1;
        Self::new(center + below_uev / UEV_PER_EV, step_uev, len)
    }

    /// Default grid for a line: 2 μeV bins reaching 3 meV into the sideband side.
    pub fn default_for(qd: &QdParams, line: Line) -> Self {
        match line {
            Line::XX => Self::around(qd.e_xx_line, -3000.0, 1000.0, 2.0),
            Line::X => Self::around(qd.e_x_line, -1000.0, 3000.0, 2.0),
        }
        .expect("static grid is valid")
    }

    pub fn energy(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step_uev / UEV_PER_EV
    }

    pub fn energies(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.energy(i)).collect()
    }

    pub fn lo(&self) -> f64 {
        self.start
    }

    pub fn hi(&self) -> f64 {
        self.energy(self.len - 1)
    }
}

/// Intensity on an energy grid for one analyzer angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// eV, strictly increasing.
    pub energies: Vec<f64>,
    pub intensities: Vec<f64>,
    /// Analyzer angle, deg.
    pub pol_angle: f64,
    pub line: Line,
}

/// Bin widths of an increasing grid (midpoint cells, half cells at the ends), eV.
fn bin_widths(e: &[f64]) -> Vec<f64> {
    let n = e.len();
    (0..n)
        .map(|i| {
            let lo = if i == 0 { e[0] } else { 0.5 * (e[i - 1] + e[i]) };
            let hi = if i + 1 == n { e[n - 1] } else { 0.5 * (e[i] + e[i + 1]) };
            hi - lo
        })
        .collect()
}

impl Spectrum {
    pub fn new(energies: Vec<f64>, intensities: Vec<f64>, pol_angle: f64, line: Line) -> Result<Self> {
        if energies.len() != intensities.len() || energies.len() < 2 {
            return Err(Error::domain("Spectrum", "need matching energy and intensity vectors of length >= 2"));
        }
        if !energies.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::domain("Spectrum", "energies must be strictly increasing"));
        }
        if intensities.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::domain("Spectrum", "intensities must be finite and >= 0"));
        }
        Ok(Self {
            energies,
            intensities,
            pol_angle,
            line,
        })
    }

    /// `Σ Iᵢ·Δᵢ` with Δ in eV.
    pub fn area(&self) -> f64 {
        bin_widths(&self.energies)
            .iter()
            .zip(&self.intensities)
            .map(|(d, i)| d * i)
            .sum()
    }

    /// Copy scaled to unit area.
    pub fn normalized(&self) -> Result<Self> {
        let a = self.area();
        if !(a > 0.0) {
            return Err(Error::domain("Spectrum::normalized", "spectrum has zero area"));
        }
        Ok(Self {
            intensities: self.intensities.iter().map(|v| v / a).collect(),
            ..self.clone()
        })
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.energies == other.energies
    }
}

/// H- and V-branch spectra of one line, each of unit area.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchSpectra {
    pub line: Line,
    pub energies: Vec<f64>,
    pub h: Vec<f64>,
    pub v: Vec<f64>,
    /// Laser polarization, deg.
    pub laser_angle: f64,
}

impl BranchSpectra {
    /// Spectrum behind an analyzer at `angle` degrees.
    pub fn at_angle(&self, angle: f64) -> Spectrum {
        let c2 = (angle - self.laser_angle).to_radians().cos().powi(2);
        let s2 = 1.0 - c2;
        Spectrum {
            energies: self.energies.clone(),
            intensities: self.h.iter().zip(&self.v).map(|(h, v)| c2 * h + s2 * v).collect(),
            pol_angle: angle,
            line: self.line,
        }
    }
}

fn lorentzian_kernel(fwhm_uev: f64, step_uev: f64) -> Vec<f64> {
    let half = ((LORENTZ_CUTOFF * fwhm_uev) / step_uev).floor() as i64;
    let g = 0.5 * fwhm_uev;
    let k: Vec<f64> = (-half..=half)
        .map(|i| {
            let x = i as f64 * step_uev;
            g / (x * x + g * g)
        })
        .collect();
    normalize_kernel(k)
}

fn gaussian_kernel(fwhm_uev: f64, step_uev: f64) -> Vec<f64> {
    if fwhm_uev <= 0.0 {
        return vec![1.0];
    }
    let sigma = fwhm_uev / (8.0 * std::f64::consts::LN_2).sqrt();
    let half = ((5.0 * sigma) / step_uev).ceil() as i64;
    let k: Vec<f64> = (-half..=half)
        .map(|i| {
            let x = i as f64 * step_uev;
            (-0.5 * (x / sigma).powi(2)).exp()
        })
        .collect();
    normalize_kernel(k)
}

fn normalize_kernel(k: Vec<f64>) -> Vec<f64> {
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Full discrete convolution of odd-length centered kernels.
fn convolve_kernels(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Same-length convolution with a centered kernel; mass leaving the grid is dropped.
fn convolve_same(signal: &[f64], kernel: &[f64]) -> Vec<f64> {
    let n = signal.len() as i64;
    let half = (kernel.len() / 2) as i64;
    let mut out = vec![0.0; signal.len()];
    for (j, &s) in signal.iter().enumerate() {
        if s == 0.0 {
            continue;
        }
        for (k, &w) in kernel.iter().enumerate() {
            let i = j as i64 + k as i64 - half;
            if (0..n).contains(&i) {
                out[i as usize] += s * w;
            }
        }
    }
    out
}

/// Cloud-in-cell deposit at fractional bin position `x`.
fn deposit(hist: &mut [f64], x: f64, w: f64) {
    let i = x.floor();
    let frac = x - i;
    let i = i as i64;
    let n = hist.len() as i64;
    if (0..n).contains(&i) {
        hist[i as usize] += w * (1.0 - frac);
    }
    if (0..n).contains(&(i + 1)) {
        hist[(i + 1) as usize] += w * frac;
    }
}

fn to_unit_area(v: Vec<f64>, step_ev: f64) -> Vec<f64> {
    let s: f64 = v.iter().sum::<f64>() * step_ev;
    if s > 0.0 {
        v.into_iter().map(|x| x / s).collect()
    } else {
        v
    }
}

/// Simulates the H and V branch spectra of `line` from `n` sampled cascades.
pub fn simulate_branches(
    qd: &QdParams,
    pulse: &PulseParams,
    cal: &StarkCalibration,
    line: Line,
    grid: &EnergyGrid,
    instrument_fwhm: f64,
    n: usize,
    seed: u64,
) -> Result<BranchSpectra> {
    if n < MIN_MC_SAMPLES {
        return Err(Error::domain("simulate_spectrum", format!("n = {n} events, need at least {MIN_MC_SAMPLES}")));
    }
    if !(instrument_fwhm.is_finite() && instrument_fwhm >= 0.0) {
        return Err(Error::domain("simulate_spectrum", format!("instrument_fwhm = {instrument_fwhm} must be >= 0")));
    }
    let model = CascadeModel::new(*qd, *pulse, *cal)?;
    let sampler = EventSampler::new(&model)?;
    let (line_ev, lifetime, sign) = match line {
        Line::XX => (qd.e_xx_line, qd.tau_xx, -1.0),
        Line::X => (qd.e_x_line, qd.tau_x, 1.0),
    };
    let gamma = HBAR_UEV_PS / lifetime;
    let step = grid.step_uev;
    let offset_of = |e_uev_from_line: f64| ((line_ev - grid.start) * UEV_PER_EV + e_uev_from_line) / step;
    let (lo, hi) = (grid.lo(), grid.hi());
    let outside = |shift_uev: f64| {
        let e = line_ev + shift_uev / UEV_PER_EV;
        e - 5.0 * gamma / UEV_PER_EV < lo || e + 5.0 * gamma / UEV_PER_EV > hi
    };

    let mut hist_h = vec![0.0; grid.len];
    let mut n_out = 0usize;
    let mut stream = rng::stream(seed);
    for _ in 0..n {
        let ev = sampler.sample(&mut stream);
        let shift = sign
            * match line {
                Line::XX => ev.e_shift_xx,
                Line::X => ev.e_shift_x,
            };
        if outside(shift) {
            n_out += 1;
        }
        deposit(&mut hist_h, offset_of(shift), 1.0);
    }
    // the V branch is unshifted for every event
    if outside(0.0) {
        n_out += n;
    }
    let outside_fraction = n_out as f64 / (2 * n) as f64;
    if outside_fraction >= 1e-3 {
        return Err(Error::GridTooNarrow { outside_fraction });
    }
    let mut hist_v = vec![0.0; grid.len];
    deposit(&mut hist_v, offset_of(0.0), n as f64);

    let kernel = convolve_kernels(&lorentzian_kernel(gamma, step), &gaussian_kernel(instrument_fwhm, step));
    let step_ev = step / UEV_PER_EV;
    Ok(BranchSpectra {
        line,
        energies: grid.energies(),
        h: to_unit_area(convolve_same(&hist_h, &kernel), step_ev),
        v: to_unit_area(convolve_same(&hist_v, &kernel), step_ev),
        laser_angle: pulse.pol_angle,
    })
}

/// Spectrum of `line` behind an analyzer at `pol_angle` degrees.
#[allow(clippy::too_many_arguments)]
pub fn simulate_spectrum(
    qd: &QdParams,
    pulse: &PulseParams,
    cal: &StarkCalibration,
    line: Line,
    pol_angle: f64,
    grid: &EnergyGrid,
    instrument_fwhm: f64,
    n: usize,
    seed: u64,
) -> Result<Spectrum> {
    let branches = simulate_branches(qd, pulse, cal, line, grid, instrument_fwhm, n, seed)?;
    branches.at_angle(pol_angle).normalized()
}

/// Intensity-weighted mean energy in `window` after subtracting `background`.
pub fn centroid(spec: &Spectrum, window: &AnalysisWindow, background: f64) -> Result<f64> {
    window.validate()?;
    let (mut num, mut den) = (0.0, 0.0);
    for (e, i) in spec.energies.iter().zip(&spec.intensities) {
        if window.contains(*e) {
            let w = (i - background).max(0.0);
            num += e * w;
            den += w;
        }
    }
    if !(den > 0.0) {
        return Err(Error::EmptyWindow {
            lo: window.lo,
            hi: window.hi,
        });
    }
    Ok(num / den)
}

/// Splitting from a centroid-vs-angle series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SplittingEstimate {
    pub splitting: EnergySplitting,
    /// μeV.
    pub std_error: f64,
    /// Angle of maximal centroid, deg in [0, 180).
    pub phase: f64,
}

/// Fits `c(θ) = B + (A/2)·cos(2(θ − θ₀))` to `(angle°, centroid eV)` pairs
/// and returns `A` in μeV.
///
/// Needs at least 6 angles whose span plus mean spacing covers 180°, so the
/// usual 12 angles in 15° steps from 0° qualify.
pub fn splitting_amplitude(series: &[(f64, f64)]) -> Result<SplittingEstimate> {
    if series.len() < 6 {
        return Err(Error::domain("splitting_amplitude", format!("{} angles, need at least 6", series.len())));
    }
    let mut angles: Vec<f64> = series.iter().map(|s| s.0).collect();
    angles.sort_by(f64::total_cmp);
    let span = angles[angles.len() - 1] - angles[0];
    let spacing = span / (angles.len() - 1) as f64;
    if span + spacing < 180.0 - 1e-9 {
        return Err(Error::domain("splitting_amplitude", format!("angles span {span}°, need a full 180° period")));
    }
    let mean = series.iter().map(|s| s.1).sum::<f64>() / series.len() as f64;
    let pts: Vec<_> = series.iter().map(|&(a, c)| (a, (c - mean) * UEV_PER_EV, 1.0)).collect();
    let fit = fit_sinusoid(&pts)?;
    let dof = (pts.len() - 3) as f64;
    let scale = if dof > 0.0 { fit.residual_norm.powi(2) / dof } else { 0.0 };
    let amp_err = (fit.covariance[0][0].max(0.0) * scale).sqrt();
    Ok(SplittingEstimate {
        splitting: EnergySplitting::new(2.0 * fit.params[0])?,
        std_error: 2.0 * amp_err,
        phase: fit.params[1],
    })
}

/// Positive area of `orthogonal − parallel` after area normalization and
/// subtraction of the mean `|d|` over the line-free `noise_window`.
pub fn sideband_fraction(spec_parallel: &Spectrum, spec_orthogonal: &Spectrum, noise_window: &AnalysisWindow) -> Result<f64> {
    noise_window.validate()?;
    if !spec_parallel.same_grid(spec_orthogonal) {
        return Err(Error::GridMismatch);
    }
    let par = spec_parallel.normalized()?;
    let orth = spec_orthogonal.normalized()?;
    let d: Vec<f64> = orth.intensities.iter().zip(&par.intensities).map(|(o, p)| o - p).collect();
    let noise: Vec<f64> = par
        .energies
        .iter()
        .zip(&d)
        .filter(|(e, _)| noise_window.contains(**e))
        .map(|(_, v)| v.abs())
        .collect();
    let baseline = if noise.is_empty() {
        0.0
    } else {
        noise.iter().sum::<f64>() / noise.len() as f64
    };
    let area: f64 = bin_widths(&par.energies)
        .iter()
        .zip(&d)
        .map(|(w, v)| w * (v - baseline).max(0.0))
        .sum();
    Ok(area.clamp(0.0, 1.0))
}

/// `{metric, value, std, window}` record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub metric: String,
    pub value: f64,
    pub std: Option<f64>,
    pub window: AnalysisWindow,
}

/// Writes `energy_ev,intensity,pol_angle_deg,line` rows for every spectrum.
pub fn write_spectra_csv<W: Write>(writer: W, spectra: &[Spectrum]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(["energy_ev", "intensity", "pol_angle_deg", "line"])?;
    for s in spectra {
        let (angle, line) = (s.pol_angle.to_string(), s.line.to_string());
        for (e, i) in s.energies.iter().zip(&s.intensities) {
            w.write_record([format!("{e:.7}"), i.to_string(), angle.clone(), line.clone()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn lorentz_spectrum(center: f64, fwhm_uev: f64, grid: &EnergyGrid) -> Spectrum {
        let g = 0.5 * fwhm_uev;
        let e = grid.energies();
        let i = e.iter().map(|x| g / (((x - center) * UEV_PER_EV).powi(2) + g * g)).collect();
        Spectrum::new(e, i, 0.0, Line::X).unwrap()
    }

    #[test]
    fn centroid_examples() {
        let grid = EnergyGrid::around(1.5886, -500.0, 500.0, 1.0).unwrap();
        let s = lorentz_spectrum(1.5886, 20.0, &grid);
        let w = AnalysisWindow::new(1.5886 - 3e-4, 1.5886 + 3e-4).unwrap();
        assert!((centroid(&s, &w, 0.0).unwrap() - 1.5886).abs() < 0.1e-6);

        let e0 = 1.5886;
        let grid = EnergyGrid::around(e0, -300.0, 100.0, 1.0).unwrap();
        let mut i = vec![0.0; grid.len];
        i[300] = 0.7;
        i[200] = 0.3;
        let s = Spectrum::new(grid.energies(), i, 0.0, Line::X).unwrap();
        let w = AnalysisWindow::new(grid.lo(), grid.hi()).unwrap();
        assert_abs_diff_eq!(centroid(&s, &w, 0.0).unwrap(), e0 - 30e-6, epsilon = 1e-12);

        let mut i = vec![0.0; grid.len];
        i[290] = 1.0;
        i[310] = 1.0;
        let s = Spectrum::new(grid.energies(), i, 0.0, Line::X).unwrap();
        assert_abs_diff_eq!(centroid(&s, &w, 0.0).unwrap(), e0, epsilon = 1e-12);
        assert!(matches!(centroid(&s, &w, 2.0), Err(Error::EmptyWindow { .. })));
    }

    #[test]
    fn sideband_fraction_examples() {
        let grid = EnergyGrid::around(1.5843, -1000.0, 1000.0, 2.0).unwrap();
        let main = lorentz_spectrum(1.5843, 5.0, &grid);
        let side = lorentz_spectrum(1.5843 - 500e-6, 5.0, &grid);
        let noise = AnalysisWindow::new(1.5849, 1.5852).unwrap();
        assert_eq!(sideband_fraction(&main, &main, &noise).unwrap(), 0.0);

        // compact peaks so the hand value is exact
        let mut m = vec![0.0; grid.len];
        let mut sb = vec![0.0; grid.len];
        m[500] = 1.0;
        sb[250] = 1.0;
        let main_d = Spectrum::new(grid.energies(), m.clone(), 90.0, Line::XX).unwrap();
        let par: Vec<f64> = m.iter().zip(&sb).map(|(a, b)| 0.5 * a + 0.5 * b).collect();
        let par = Spectrum::new(grid.energies(), par, 0.0, Line::XX).unwrap();
        assert_abs_diff_eq!(sideband_fraction(&par, &main_d, &noise).unwrap(), 0.5, epsilon = 1e-9);

        let other = EnergyGrid::around(1.5843, -1000.0, 1000.0, 4.0).unwrap();
        let coarse = lorentz_spectrum(1.5843, 5.0, &other);
        assert!(matches!(sideband_fraction(&side, &coarse, &noise), Err(Error::GridMismatch)));
    }

    #[test]
    fn splitting_amplitude_examples() {
        let angles: Vec<f64> = (0..12).map(|i| i as f64 * 15.0).collect();
        let series: Vec<(f64, f64)> = angles
            .iter()
            .map(|&t| (t, 1.5843 + 5e-6 * (2.0 * (t - 40.0)).to_radians().cos()))
            .collect();
        let est = splitting_amplitude(&series).unwrap();
        assert_abs_diff_eq!(est.splitting.micro_ev(), 10.0, epsilon = 1e-9);

        let shifted: Vec<(f64, f64)> = series.iter().map(|&(t, c)| (t, c + 3e-4)).collect();
        assert_abs_diff_eq!(splitting_amplitude(&shifted).unwrap().splitting.micro_ev(), 10.0, epsilon = 1e-8);

        let flat: Vec<(f64, f64)> = angles.iter().map(|&t| (t, 1.5843)).collect();
        assert_abs_diff_eq!(splitting_amplitude(&flat).unwrap().splitting.micro_ev(), 0.0, epsilon = 1e-9);

        assert!(splitting_amplitude(&series[..5]).is_err());
        assert!(splitting_amplitude(&series[..6]).is_err());
        let same: Vec<(f64, f64)> = (0..8).map(|i| (i as f64 * 90.0, 1.5843 + i as f64 * 1e-6)).collect();
        assert!(matches!(splitting_amplitude(&same), Err(Error::DegenerateDesign(_))));
    }

    #[test]
    fn simulated_spectra_are_normalized_and_sided() {
        let qd = QdParams::fast_dot();
        let pulse = PulseParams::default();
        let cal = StarkCalibration::default();
        for line in [Line::XX, Line::X] {
            let grid = EnergyGrid::default_for(&qd, line);
            let b = simulate_branches(&qd, &pulse, &cal, line, &grid, DEFAULT_INSTRUMENT_FWHM, 20_000, 3).unwrap();
            let h = b.at_angle(0.0);
            let v = b.at_angle(90.0);
            assert!((h.area() - 1.0).abs() < 1e-6, "{}", h.area());
            let w = AnalysisWindow::default_signal(line);
            let dh = centroid(&h, &w, 0.0).unwrap() - centroid(&v, &w, 0.0).unwrap();
            match line {
                Line::XX => assert!(dh < 0.0),
                Line::X => assert!(dh > 0.0),
            }
        }
    }

    #[test]
    fn no_laser_no_fss_gives_identical_branches() {
        let qd = QdParams { fss: 0.0, ..QdParams::fast_dot() };
        let pulse = PulseParams::gaussian(20.0, 0.0);
        let grid = EnergyGrid::default_for(&qd, Line::XX);
        let b = simulate_branches(&qd, &pulse, &StarkCalibration::default(), Line::XX, &grid, 25.0, 5_000, 1).unwrap();
        for (h, v) in b.h.iter().zip(&b.v) {
            assert!((h - v).abs() < 1e-9 * v.abs().max(1.0));
        }
    }

    #[test]
    fn narrow_grid_is_rejected() {
        let qd = QdParams::fast_dot();
        let grid = EnergyGrid::around(qd.e_xx_line, -20.0, 20.0, 1.0).unwrap();
        let r = simulate_branches(&qd, &PulseParams::default(), &StarkCalibration::default(), Line::XX, &grid, 25.0, 5_000, 1);
        assert!(matches!(r, Err(Error::GridTooNarrow { .. })));
    }

    #[test]
    fn sideband_grows_with_duration() {
        let qd = QdParams::fast_dot();
        let cal = StarkCalibration::default();
        let grid = EnergyGrid::default_for(&qd, Line::XX);
        let noise = AnalysisWindow::default_noise(Line::XX);
        let frac = |tau: f64| {
            let b = simulate_branches(&qd, &PulseParams::gaussian(tau, PI), &cal, Line::XX, &grid, 25.0, 50_000, 11).unwrap();
            sideband_fraction(&b.at_angle(0.0), &b.at_angle(90.0), &noise).unwrap()
        };
        assert!(frac(20.0) > frac(1.3));
    }

    #[test]
    fn csv_layout() {
        let grid = EnergyGrid::around(1.5886, -2.0, 2.0, 2.0).unwrap();
        let s = Spectrum::new(grid.energies(), vec![0.0, 1.0, 0.0], 45.0, Line::X).unwrap();
        let mut buf = Vec::new();
        write_spectra_csv(&mut buf, &[s]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("energy_ev,intensity,pol_angle_deg,line"));
        assert_eq!(text.lines().nth(2), Some("1.5886000,1,45,X"));
    }
}

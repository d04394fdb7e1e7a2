//! Run configuration: one JSON document, dotted-path overrides, validation
//! with field paths.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cascade::{EnsembleMethod, PulseParams, PulseShape, QdParams, QuadratureConfig, StarkCalibration};
use crate::error::{Error, Result};
use crate::spectra::{AnalysisWindow, EnergyGrid, Line};
use crate::state::G2Pair;
use crate::tomography::MleOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub qd: QdParams,
    pub pulse: PulseConfig,
    pub stark: StarkCalibration,
    pub ensemble: EnsembleConfig,
    pub sweeps: SweepConfig,
    pub tomography: TomographyConfig,
    pub spectra: SpectraConfig,
    /// Output root; `--out` and `CASCATA_OUT` take precedence.
    pub output_dir: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            qd: QdParams::fast_dot(),
            pulse: PulseConfig::default(),
            stark: StarkCalibration::default(),
            ensemble: EnsembleConfig::default(),
            sweeps: SweepConfig::default(),
            tomography: TomographyConfig::default(),
            spectra: SpectraConfig::default(),
            output_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseConfig {
    /// ps.
    pub tau_l: f64,
    pub area_over_pi: f64,
    /// deg.
    pub pol_angle: f64,
}

impl Default for PulseConfig {
    fn default() -> Self {
        Self {
            tau_l: 20.0,
            area_over_pi: 1.0,
            pol_angle: 0.0,
        }
    }
}

impl PulseConfig {
    pub fn params(&self) -> PulseParams {
        PulseParams {
            tau_l: self.tau_l,
            area: self.area_over_pi * PI,
            shape: PulseShape::Gaussian,
            pol_angle: self.pol_angle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    Quadrature,
    Montecarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub method: MethodKind,
    pub n_mc: usize,
    pub quadrature: QuadratureConfig,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            method: MethodKind::Quadrature,
            n_mc: 100_000,
            quadrature: QuadratureConfig::default(),
        }
    }
}

impl EnsembleConfig {
    pub fn method(&self, seed: u64) -> EnsembleMethod {
        match self.method {
            MethodKind::Quadrature => EnsembleMethod::Quadrature(self.quadrature),
            MethodKind::Montecarlo => EnsembleMethod::MonteCarlo { n: self.n_mc, seed },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// ps.
    pub durations: Vec<f64>,
    /// Pulse area of the duration sweep, units of π.
    pub duration_area_over_pi: f64,
    pub areas_over_pi: Vec<f64>,
    /// Pulse duration of the power sweep, ps.
    pub power_tau_l: f64,
    /// Run a simulated tomography per duration point.
    pub with_tomography: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            durations: vec![1.3, 2.5, 5.0, 10.0, 15.0, 20.0],
            duration_area_over_pi: 1.0,
            areas_over_pi: vec![0.0, 0.5, 0.7, 1.0, 1.5, 2.0],
            power_tau_l: 20.0,
            with_tomography: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateSource {
    PhiPlus,
    Werner,
    Cascade,
}

pub(crate) fn parse_source(s: &str) -> Result<StateSource> {
    match s {
        "phi_plus" => Ok(StateSource::PhiPlus),
        "werner" => Ok(StateSource::Werner),
        "cascade" => Ok(StateSource::Cascade),
        _ => Err(Error::config("tomography.source", format!("unknown source `{s}`"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TomographyConfig {
    pub source: StateSource,
    pub werner_p: f64,
    pub n_per_setting: f64,
    pub n_boot: usize,
    pub mle: MleOptions,
    /// Multiphoton correction from measured g²(0) values, if given.
    pub g2: Option<G2Config>,
}

impl Default for TomographyConfig {
    fn default() -> Self {
        Self {
            source: StateSource::Cascade,
            werner_p: 0.8,
            n_per_setting: 1e4,
            n_boot: 100,
            mle: MleOptions::default(),
            g2: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct G2Config {
    pub g2_x: f64,
    pub g2_xx: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LineSpectraConfig {
    /// Grid extent relative to the line, μeV.
    pub grid_below_uev: f64,
    pub grid_above_uev: f64,
    pub window: AnalysisWindow,
    pub noise_window: AnalysisWindow,
    /// Intensity offset subtracted before centroiding.
    pub background: f64,
}

impl LineSpectraConfig {
    fn for_line(line: Line) -> Self {
        let (grid_below_uev, grid_above_uev) = match line {
            Line::XX => (-3000.0, 1000.0),
            Line::X => (-1000.0, 3000.0),
        };
        Self {
            grid_below_uev,
            grid_above_uev,
            window: AnalysisWindow::default_signal(line),
            noise_window: AnalysisWindow::default_noise(line),
            background: 0.0,
        }
    }
}

impl Default for LineSpectraConfig {
    fn default() -> Self {
        Self::for_line(Line::XX)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectraConfig {
    pub n_events: usize,
    pub instrument_fwhm: f64,
    pub step_uev: f64,
    pub n_angles: usize,
    /// Durations of the spectral sweep, ps.
    pub durations: Vec<f64>,
    pub xx: LineSpectraConfig,
    pub x: LineSpectraConfig,
}

impl Default for SpectraConfig {
    fn default() -> Self {
        Self {
            n_events: 200_000,
            instrument_fwhm: crate::spectra::DEFAULT_INSTRUMENT_FWHM,
            step_uev: 2.0,
            n_angles: 12,
            durations: vec![1.3, 5.0, 10.0, 20.0],
            xx: LineSpectraConfig::for_line(Line::XX),
            x: LineSpectraConfig::for_line(Line::X),
        }
    }
}

impl SpectraConfig {
    pub fn line(&self, line: Line) -> &LineSpectraConfig {
        match line {
            Line::XX => &self.xx,
            Line::X => &self.x,
        }
    }

    pub fn grid(&self, qd: &QdParams, line: Line) -> Result<EnergyGrid> {
        let c = self.line(line);
        let center = match line {
            Line::XX => qd.e_xx_line,
            Line::X => qd.e_x_line,
        };
        EnergyGrid::around(center, c.grid_below_uev, c.grid_above_uev, self.step_uev)
    }

    /// Analyzer angles `k · 180°/n`.
    pub fn angles(&self) -> Vec<f64> {
        (0..self.n_angles).map(|k| k as f64 * 180.0 / self.n_angles as f64).collect()
    }
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(path, format!("{v} must be > 0")))
    }
}

fn non_negative(path: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::config(path, format!("{v} must be >= 0")))
    }
}

fn window(path: &str, w: &AnalysisWindow) -> Result<()> {
    w.validate().map_err(|_| Error::config(path, format!("need lo < hi, got [{}, {}]", w.lo, w.hi)))
}

fn grid_values(path: &str, values: &[f64], check: fn(&str, f64) -> Result<()>) -> Result<()> {
    if values.is_empty() {
        return Err(Error::config(path, "must be non-empty"));
    }
    values.iter().enumerate().try_for_each(|(i, v)| check(&format!("{path}[{i}]"), *v))
}

impl RunConfig {
    /// Reads a JSON file (or the defaults when `path` is `None`) and applies
    /// `key=value` overrides; values are parsed as JSON, falling back to strings.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut doc = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::config(p.display().to_string(), e.to_string()))?;
                serde_json::from_str::<Value>(&text).map_err(|e| Error::config(p.display().to_string(), e.to_string()))?
            }
            None => serde_json::to_value(Self::default())?,
        };
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: Self = serde_json::from_value(doc).map_err(|e| Error::config("<root>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every field against the preconditions of the module that consumes it.
    pub fn validate(&self) -> Result<()> {
        let qd = &self.qd;
        positive("qd.tau_xx", qd.tau_xx)?;
        positive("qd.tau_x", qd.tau_x)?;
        non_negative("qd.fss", qd.fss)?;
        positive("qd.e_x_line", qd.e_x_line)?;
        positive("qd.e_xx_line", qd.e_xx_line)?;
        non_negative("qd.purcell", qd.purcell)?;
        if qd.e_xx_line >= qd.e_x_line {
            return Err(Error::config("qd.e_xx_line", "must lie below qd.e_x_line (positive binding energy)"));
        }
        non_negative("pulse.tau_l", self.pulse.tau_l)?;
        non_negative("pulse.area_over_pi", self.pulse.area_over_pi)?;
        if !self.pulse.pol_angle.is_finite() {
            return Err(Error::config("pulse.pol_angle", "must be finite"));
        }
        non_negative("stark.s_cal", self.stark.s_cal)?;
        positive("stark.tau_cal", self.stark.tau_cal)?;

        let e = &self.ensemble;
        if e.method == MethodKind::Montecarlo && e.n_mc < crate::cascade::MIN_MC_SAMPLES {
            return Err(Error::config(
                "ensemble.n_mc",
                format!("{} samples, need at least {}", e.n_mc, crate::cascade::MIN_MC_SAMPLES),
            ));
        }
        for (path, n) in [
            ("ensemble.quadrature.n_prep", e.quadrature.n_prep),
            ("ensemble.quadrature.n_xx", e.quadrature.n_xx),
            ("ensemble.quadrature.n_x", e.quadrature.n_x),
        ] {
            if n < 2 {
                return Err(Error::config(path, format!("{n} nodes, need at least 2")));
            }
        }

        let s = &self.sweeps;
        grid_values("sweeps.durations", &s.durations, positive)?;
        non_negative("sweeps.duration_area_over_pi", s.duration_area_over_pi)?;
        grid_values("sweeps.areas_over_pi", &s.areas_over_pi, non_negative)?;
        positive("sweeps.power_tau_l", s.power_tau_l)?;

        let t = &self.tomography;
        if !(0.0..=1.0).contains(&t.werner_p) {
            return Err(Error::config("tomography.werner_p", format!("{} outside [0, 1]", t.werner_p)));
        }
        positive("tomography.n_per_setting", t.n_per_setting)?;
        if t.n_boot < 100 {
            return Err(Error::config("tomography.n_boot", format!("{} replicates, need at least 100", t.n_boot)));
        }
        positive("tomography.mle.tol", t.mle.tol)?;
        if t.mle.max_iter == 0 {
            return Err(Error::config("tomography.mle.max_iter", "must be >= 1"));
        }
        if let Some(g) = t.g2 {
            let pair = G2Pair::new(g.g2_x, g.g2_xx).map_err(|e| Error::config("tomography.g2", e.to_string()))?;
            let eps = pair.noise_weight();
            if eps >= 1.0 {
                return Err(Error::config("tomography.g2", format!("noise weight {eps} >= 1, correction impossible")));
            }
        }

        let sp = &self.spectra;
        if sp.n_events < crate::cascade::MIN_MC_SAMPLES {
            return Err(Error::config("spectra.n_events", format!("{} events, need at least {}", sp.n_events, crate::cascade::MIN_MC_SAMPLES)));
        }
        non_negative("spectra.instrument_fwhm", sp.instrument_fwhm)?;
        positive("spectra.step_uev", sp.step_uev)?;
        if sp.n_angles < 6 {
            return Err(Error::config("spectra.n_angles", format!("{} angles, need at least 6", sp.n_angles)));
        }
        grid_values("spectra.durations", &sp.durations, positive)?;
        for (name, c) in [("spectra.xx", &sp.xx), ("spectra.x", &sp.x)] {
            if !(c.grid_below_uev < c.grid_above_uev) {
                return Err(Error::config(format!("{name}.grid_below_uev"), "must be below grid_above_uev"));
            }
            window(&format!("{name}.window"), &c.window)?;
            window(&format!("{name}.noise_window"), &c.noise_window)?;
            non_negative(&format!("{name}.background"), c.background)?;
        }
        Ok(())
    }
}

/// Sets `a.b.c=value` inside a JSON document.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(assignment, "expected key=value"))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::config(parts[..i].join("."), "is not an object"))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Err(Error::config(key, "empty key"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn overrides_apply_by_dotted_path() {
        let cfg = RunConfig::load(None, &["qd.tau_xx=81".into(), "tomography.source=werner".into()]).unwrap();
        assert_eq!(cfg.qd.tau_xx, 81.0);
        assert_eq!(cfg.tomography.source, StateSource::Werner);
    }

    fn path_of(err: Error) -> String {
        match err {
            Error::Config { path, .. } => path,
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_fields_report_their_path() {
        let cases = [
            ("qd.tau_x=-1", "qd.tau_x"),
            ("spectra.xx.window.lo=1.59", "spectra.xx.window"),
            ("tomography.g2={\"g2_x\":1.0,\"g2_xx\":0.05}", "tomography.g2"),
            ("sweeps.durations=[1.0,0.0]", "sweeps.durations[1]"),
            ("tomography.werner_p=1.5", "tomography.werner_p"),
        ];
        for (o, path) in cases {
            assert_eq!(path_of(RunConfig::load(None, &[o.to_string()]).unwrap_err()), path, "{o}");
        }
        assert!(RunConfig::load(None, &["qd.nonsense=1".into()]).is_err());
        assert!(RunConfig::load(None, &["no_equals".into()]).is_err());
    }
}

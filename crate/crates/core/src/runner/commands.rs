//! The experiment commands. Each writes its files into an output directory
//! and returns their names in write order.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{RunConfig, StateSource};
use crate::cascade::{sweep_duration, sweep_power, write_sweep_csv, CascadeModel, SweepAxis};
use crate::error::{Error, Result};
use crate::fitting::{fit_eq1, FitReport};
use crate::rng::derive_seed;
use crate::spectra::{
    centroid, sideband_fraction, simulate_branches, splitting_amplitude, write_spectra_csv, BranchSpectra, Line, MetricRecord,
};
use crate::state::{multiphoton_correct, DensityMatrixJson, G2Pair, TwoPhotonState};
use crate::tomography::{concurrence_uncertainty, simulate_counts, write_records_csv, CoincidenceRecord};

/// Seed-stream offsets keeping the commands' derived seeds disjoint.
const TOMO_STREAM: u64 = 1 << 32;
const SPECTRA_STREAM: u64 = 2 << 32;

pub(crate) struct Output<'a> {
    dir: &'a Path,
    pub files: Vec<String>,
}

impl<'a> Output<'a> {
    pub fn new(dir: &'a Path) -> Self {
        Self { dir, files: Vec::new() }
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

/// Tomography round trip on `state`: Poisson counts, MLE, bootstrap.
fn tomography_round_trip(cfg: &RunConfig, state: &TwoPhotonState, seed: u64) -> Result<(Vec<CoincidenceRecord>, crate::tomography::BootstrapSummary)> {
    let t = &cfg.tomography;
    let records = simulate_counts(state, t.n_per_setting, seed)?;
    let boot = concurrence_uncertainty(&records, t.n_boot, derive_seed(seed, 0), t.mle)?;
    Ok((records, boot))
}

#[derive(Serialize)]
struct Eq1FitOutput {
    model: &'static str,
    tau_xx_true_ps: f64,
    durations_ps: Vec<f64>,
    fit: FitReport,
}

pub(crate) fn sweep_duration_cmd(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let s = &cfg.sweeps;
    let method = cfg.ensemble.method(cfg.seed);
    let area = s.duration_area_over_pi * PI;
    let points = sweep_duration(&cfg.qd, &cfg.stark, &s.durations, area, method)?;

    let tomo: Vec<Option<(f64, f64)>> = if s.with_tomography {
        s.durations
            .par_iter()
            .enumerate()
            .map(|(i, &tau_l)| {
                let pulse = crate::cascade::PulseParams::gaussian(tau_l, area);
                let est = CascadeModel::new(cfg.qd, pulse, cfg.stark)?.ensemble(cfg.ensemble.method(derive_seed(cfg.seed, i as u64)))?;
                let (_, boot) = tomography_round_trip(cfg, &est.state, derive_seed(cfg.seed, TOMO_STREAM + i as u64))?;
                Ok(Some((boot.concurrence, boot.std)))
            })
            .collect::<Result<_>>()?
    } else {
        vec![None; points.len()]
    };

    let mut w = csv_writer(out.create("fig3a_analog.csv")?);
    w.write_record(["tau_l_ps", "C_model", "C_tomo", "C_tomo_std"])?;
    for (p, t) in points.iter().zip(&tomo) {
        let (c, sd) = t.map(|(c, s)| (c.to_string(), s.to_string())).unwrap_or_default();
        w.write_record([p.x.to_string(), p.concurrence.to_string(), c, sd])?;
    }
    w.flush()?;
    drop(w);

    write_sweep_csv(out.create("sweep_duration.csv")?, SweepAxis::Duration, &points)?;

    let fit = fit_eq1(&points.iter().map(|p| p.fit_input()).collect::<Vec<_>>())?;
    out.json(
        "eq1_fit.json",
        &Eq1FitOutput {
            model: "C = c0 * (1 - x * exp(-x)), x = sqrt(2) * tau_l / (4 * tau_xx)",
            tau_xx_true_ps: cfg.qd.tau_xx,
            durations_ps: s.durations.clone(),
            fit: fit.to_report(),
        },
    )
}

/// Centroid splitting (μeV) and sideband fraction of one line.
fn line_metrics(cfg: &RunConfig, branches: &BranchSpectra) -> Result<(crate::spectra::SplittingEstimate, f64)> {
    let lc = cfg.spectra.line(branches.line);
    let series = cfg
        .spectra
        .angles()
        .into_iter()
        .map(|a| Ok((a, centroid(&branches.at_angle(a), &lc.window, lc.background)?)))
        .collect::<Result<Vec<_>>>()?;
    let split = splitting_amplitude(&series)?;
    let par = branches.at_angle(branches.laser_angle);
    let orth = branches.at_angle(branches.laser_angle + 90.0);
    let frac = sideband_fraction(&par, &orth, &lc.noise_window)?;
    Ok((split, frac))
}

fn branches(cfg: &RunConfig, tau_l: f64, area: f64, line: Line, seed: u64) -> Result<BranchSpectra> {
    let pulse = crate::cascade::PulseParams {
        tau_l,
        area,
        ..cfg.pulse.params()
    };
    let grid = cfg.spectra.grid(&cfg.qd, line)?;
    simulate_branches(&cfg.qd, &pulse, &cfg.stark, line, &grid, cfg.spectra.instrument_fwhm, cfg.spectra.n_events, seed)
}

pub(crate) fn sweep_power_cmd(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let s = &cfg.sweeps;
    let areas: Vec<f64> = s.areas_over_pi.iter().map(|a| a * PI).collect();
    let points = sweep_power(&cfg.qd, &cfg.stark, s.power_tau_l, &areas, cfg.ensemble.method(cfg.seed))?;
    let metrics: Vec<(crate::spectra::SplittingEstimate, f64)> = areas
        .par_iter()
        .enumerate()
        .map(|(i, &area)| {
            let b = branches(cfg, s.power_tau_l, area, Line::XX, derive_seed(cfg.seed, SPECTRA_STREAM + i as u64))?;
            line_metrics(cfg, &b)
        })
        .collect::<Result<_>>()?;

    let mut w = csv_writer(out.create("fig4_analog.csv")?);
    w.write_record(["area_over_pi", "C_model", "splitting_xx_ueV", "splitting_xx_std_ueV", "sideband_fraction_xx"])?;
    for ((p, a), (split, frac)) in points.iter().zip(&s.areas_over_pi).zip(&metrics) {
        w.write_record([
            a.to_string(),
            p.concurrence.to_string(),
            split.splitting.micro_ev().to_string(),
            split.std_error.to_string(),
            frac.to_string(),
        ])?;
    }
    w.flush()?;
    drop(w);
    write_sweep_csv(out.create("sweep_power.csv")?, SweepAxis::Area, &points)
}

#[derive(Serialize)]
struct SpectraMetric {
    tau_l_ps: f64,
    line: Line,
    #[serde(flatten)]
    record: MetricRecord,
}

pub(crate) fn spectra_cmd(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let sp = &cfg.spectra;
    let area = cfg.pulse.area_over_pi * PI;
    let jobs: Vec<(usize, f64, Line)> = sp
        .durations
        .iter()
        .enumerate()
        .flat_map(|(i, &t)| [(i, t, Line::XX), (i, t, Line::X)])
        .collect();
    let results: Vec<(BranchSpectra, (crate::spectra::SplittingEstimate, f64))> = jobs
        .par_iter()
        .enumerate()
        .map(|(k, &(_, tau_l, line))| {
            let b = branches(cfg, tau_l, area, line, derive_seed(cfg.seed, SPECTRA_STREAM + k as u64))?;
            let m = line_metrics(cfg, &b)?;
            Ok((b, m))
        })
        .collect::<Result<_>>()?;

    let mut metrics = Vec::new();
    for (&(i, tau_l, line), (b, (split, frac))) in jobs.iter().zip(&results) {
        let lc = sp.line(line);
        let tag = line.to_string().to_lowercase();
        metrics.push(SpectraMetric {
            tau_l_ps: tau_l,
            line,
            record: MetricRecord {
                metric: format!("splitting_{tag}_ueV"),
                value: split.splitting.micro_ev(),
                std: Some(split.std_error),
                window: lc.window,
            },
        });
        metrics.push(SpectraMetric {
            tau_l_ps: tau_l,
            line,
            record: MetricRecord {
                metric: format!("sideband_fraction_{tag}"),
                value: *frac,
                std: None,
                window: lc.noise_window,
            },
        });
        let spectra: Vec<_> = sp.angles().into_iter().map(|a| b.at_angle(a)).collect();
        write_spectra_csv(out.create(&format!("spectra_{tag}_{i}.csv"))?, &spectra)?;
    }
    out.json("metrics.json", &metrics)
}

#[derive(Serialize)]
struct TomographyReport {
    source: StateSource,
    n_per_setting: f64,
    concurrence_true: f64,
    concurrence: f64,
    concurrence_std: f64,
    bootstrap_mean: f64,
    n_boot: usize,
    fidelity_with_truth: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    concurrence_corrected: Option<f64>,
}

#[derive(Serialize)]
struct DensityMatrices {
    reconstructed: DensityMatrixJson,
    truth: DensityMatrixJson,
    #[serde(skip_serializing_if = "Option::is_none")]
    corrected: Option<DensityMatrixJson>,
}

pub(crate) fn tomography_cmd(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let t = &cfg.tomography;
    let truth = match t.source {
        StateSource::PhiPlus => TwoPhotonState::phi_plus(),
        StateSource::Werner => TwoPhotonState::werner(t.werner_p)?,
        StateSource::Cascade => {
            CascadeModel::new(cfg.qd, cfg.pulse.params(), cfg.stark)?
                .ensemble(cfg.ensemble.method(cfg.seed))?
                .state
        }
    };
    let (records, boot) = tomography_round_trip(cfg, &truth, derive_seed(cfg.seed, TOMO_STREAM))?;
    let mle = crate::tomography::mle_reconstruct(&records, t.mle)?;
    let corrected = t
        .g2
        .map(|g| multiphoton_correct(&mle.state, G2Pair::new(g.g2_x, g.g2_xx)?))
        .transpose()
        .map_err(|e: Error| e)?;

    write_records_csv(out.create("counts.csv")?, &records)?;
    out.json(
        "density_matrix.json",
        &DensityMatrices {
            reconstructed: mle.state.to_json_value(),
            truth: truth.to_json_value(),
            corrected: corrected.as_ref().map(|c| c.to_json_value()),
        },
    )?;
    out.json(
        "concurrence.json",
        &TomographyReport {
            source: t.source,
            n_per_setting: t.n_per_setting,
            concurrence_true: truth.concurrence(),
            concurrence: boot.concurrence,
            concurrence_std: boot.std,
            bootstrap_mean: boot.mean,
            n_boot: boot.n_boot,
            fidelity_with_truth: fidelity(&truth, &mle.state),
            concurrence_corrected: corrected.map(|c| c.concurrence()),
        },
    )
}

/// Uhlmann fidelity `(Tr √(√ρ σ √ρ))²`.
pub fn fidelity(rho: &TwoPhotonState, sigma: &TwoPhotonState) -> f64 {
    use crate::state::{hermitian_eigen, recompose};
    let sqrt_of = |m: &crate::state::CMat4| {
        let (vals, vecs) = hermitian_eigen(m);
        recompose(&vals.map(|v| v.max(0.0).sqrt()), &vecs)
    };
    let s = sqrt_of(rho.matrix());
    let inner = &s * sigma.matrix() * &s;
    let (vals, _) = hermitian_eigen(&crate::state::hermitize(&inner));
    vals.iter().map(|v| v.max(0.0).sqrt()).sum::<f64>().powi(2).min(1.0)
}

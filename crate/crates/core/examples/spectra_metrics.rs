//! Polarization-resolved XX spectra: centroid oscillation and sideband weight.
use std::f64::consts::PI;

use cascata::cascade::{PulseParams, QdParams, StarkCalibration};
use cascata::spectra::{
    centroid, sideband_fraction, simulate_branches, splitting_amplitude, AnalysisWindow, EnergyGrid, Line,
    DEFAULT_INSTRUMENT_FWHM,
};

fn main() -> cascata::Result<()> {
    let qd = QdParams::fast_dot();
    let cal = StarkCalibration::default();
    let grid = EnergyGrid::default_for(&qd, Line::XX);
    let window = AnalysisWindow::default_signal(Line::XX);
    for tau_l in [1.3, 5.0, 20.0] {
        let pulse = PulseParams::gaussian(tau_l, PI);
        let branches = simulate_branches(&qd, &pulse, &cal, Line::XX, &grid, DEFAULT_INSTRUMENT_FWHM, 400_000, 11)?;
        let series = (0..12)
            .map(|k| {
                let angle = 15.0 * k as f64;
                centroid(&branches.at_angle(angle), &window, 0.0).map(|c| (angle, c))
            })
            .collect::<cascata::Result<Vec<_>>>()?;
        let split = splitting_amplitude(&series)?;
        let sb = sideband_fraction(
            &branches.at_angle(pulse.pol_angle),
            &branches.at_angle(pulse.pol_angle + 90.0),
            &AnalysisWindow::default_noise(Line::XX),
        )?;
        println!(
            "tau_L {tau_l:>4} ps  XX splitting {:.2} +- {:.2} ueV  sideband {:.3}",
            split.splitting.micro_ev(),
            split.std_error,
            sb
        );
    }
    Ok(())
}

//! Ensemble concurrence of the cascade for one pulse, by quadrature and by sampling.
use std::f64::consts::PI;

use cascata::cascade::{CascadeModel, EnsembleMethod, PulseParams, QdParams, StarkCalibration};

fn main() -> cascata::Result<()> {
    let qd = QdParams::fast_dot();
    let cal = StarkCalibration::default();
    for tau_l in [1.3, 5.0, 20.0] {
        let model = CascadeModel::new(qd, PulseParams::gaussian(tau_l, PI), cal)?;
        let exact = model.ensemble(EnsembleMethod::quadrature())?;
        let mc = model.ensemble(EnsembleMethod::MonteCarlo { n: 200_000, seed: 7 })?;
        println!(
            "tau_L {tau_l:>4} ps  S_peak {:>6.2} ueV  C = {:.4} (quadrature)  {:.4} +- {:.4} (MC)",
            model.s_peak(),
            exact.concurrence,
            mc.concurrence,
            mc.std_error
        );
    }
    Ok(())
}

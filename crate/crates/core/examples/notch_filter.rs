//! Rejecting Stark-shifted XX photons with a spectral notch restores entanglement
//! at the cost of count rate.
use std::f64::consts::PI;

use cascata::cascade::{notch_filter_experiment, PulseParams, QdParams, StarkCalibration};

fn main() -> cascata::Result<()> {
    let qd = QdParams::fast_dot();
    let pulse = PulseParams::gaussian(20.0, PI);
    let cal = StarkCalibration::default();
    println!("{:>10} {:>10} {:>10} {:>9}", "cutoff_ueV", "C_filt", "C_all", "kept");
    for cutoff in [0.0, 2.0, 10.0, 50.0, 1e4] {
        let r = notch_filter_experiment(&qd, &pulse, &cal, cutoff, 200_000, 3)?;
        println!(
            "{cutoff:>10} {:>10.4} {:>10.4} {:>9.3}",
            r.concurrence_filtered, r.concurrence_unfiltered, r.retained_fraction
        );
    }
    Ok(())
}

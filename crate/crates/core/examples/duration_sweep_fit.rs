//! Duration sweep followed by a fit of the closed-form decay law.
use std::f64::consts::PI;

use cascata::cascade::{sweep_duration, EnsembleMethod, QdParams, StarkCalibration};
use cascata::fitting::fit_eq1;

fn main() -> cascata::Result<()> {
    let qd = QdParams::fast_dot();
    let durations = [1.3, 2.5, 5.0, 10.0, 15.0, 20.0];
    let points = sweep_duration(&qd, &StarkCalibration::default(), &durations, PI, EnsembleMethod::quadrature())?;
    for p in &points {
        println!("tau_L {:>5} ps  C {:.4}", p.x, p.concurrence);
    }
    let data: Vec<_> = points.iter().map(|p| p.fit_input()).collect();
    let fit = fit_eq1(&data)?;
    println!(
        "fit: c0 = {:.4} +- {:.4}, tau = {:.1} +- {:.1} ps (true tau_xx {} ps), R^2 {:.4}",
        fit.param("c0").unwrap(),
        fit.error("c0").unwrap(),
        fit.param("tau_xx").unwrap(),
        fit.error("tau_xx").unwrap(),
        qd.tau_xx,
        fit.r_squared
    );
    Ok(())
}

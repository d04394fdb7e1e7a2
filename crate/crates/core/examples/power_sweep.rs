//! Concurrence against pulse area at fixed duration.
use std::f64::consts::PI;

use cascata::cascade::{sweep_power, write_sweep_csv, EnsembleMethod, QdParams, StarkCalibration, SweepAxis};

fn main() -> cascata::Result<()> {
    let areas: Vec<f64> = [0.0, 0.5, 0.7, 1.0, 1.5, 2.0].iter().map(|a| a * PI).collect();
    let points = sweep_power(&QdParams::fast_dot(), &StarkCalibration::default(), 20.0, &areas, EnsembleMethod::quadrature())?;
    write_sweep_csv(std::io::stdout().lock(), SweepAxis::Area, &points)
}

//! Unit conversions used throughout the crate.
use cascata::units::{bandwidth_to_duration, lifetime_to_linewidth, splitting_to_precession_period, HBAR_UEV_PS};

fn main() -> cascata::Result<()> {
    println!("hbar = {HBAR_UEV_PS:.4} ueV ps");
    for tau in [81.0, 122.0, 350.0] {
        println!("lifetime {tau:>5} ps -> linewidth {:.3} ueV", lifetime_to_linewidth(tau)?.micro_ev());
    }
    for s in [0.8, 5.0, 40.0] {
        println!("splitting {s:>4} ueV -> precession period {:.1} ps", splitting_to_precession_period(s)?.ps());
    }
    // transform-limited Gaussian, time-bandwidth product 0.441
    println!("200 ueV bandwidth -> {:.2} ps pulse", bandwidth_to_duration(200.0, 0.441)?.ps());
    Ok(())
}

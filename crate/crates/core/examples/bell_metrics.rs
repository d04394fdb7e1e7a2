//! Concurrence and Bell fidelity of a few textbook states.
use cascata::TwoPhotonState;

fn main() -> cascata::Result<()> {
    let states = [
        ("phi+", TwoPhotonState::phi_plus()),
        ("phase pi/3", TwoPhotonState::phase_rotated_pair(std::f64::consts::FRAC_PI_3)),
        ("werner 0.8", TwoPhotonState::werner(0.8)?),
        ("werner 1/3", TwoPhotonState::werner(1.0 / 3.0)?),
        ("mixed", TwoPhotonState::maximally_mixed()),
    ];
    println!("{:<12} {:>11} {:>9} {:>9}", "state", "concurrence", "purity", "F_bell");
    for (name, rho) in &states {
        println!("{name:<12} {:>11.4} {:>9.4} {:>9.4}", rho.concurrence(), rho.purity(), rho.max_bell_fidelity());
    }
    Ok(())
}

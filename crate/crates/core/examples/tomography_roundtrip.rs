//! Simulated 16-setting tomography, maximum-likelihood reconstruction and
//! bootstrap uncertainty.
use cascata::tomography::{concurrence_uncertainty, mle_reconstruct, simulate_counts, MleOptions};
use cascata::TwoPhotonState;

fn main() -> cascata::Result<()> {
    let truth = TwoPhotonState::werner(0.8)?;
    let records = simulate_counts(&truth, 10_000.0, 5)?;
    let fit = mle_reconstruct(&records, MleOptions::default())?;
    let boot = concurrence_uncertainty(&records, 100, 6, MleOptions::default())?;
    println!("true C          {:.4}", truth.concurrence());
    println!("linear inversion min eigenvalue {:.4}", fit.linear_inversion.min_eigenvalue);
    println!("MLE C           {:.4} +- {:.4} ({} iterations)", fit.state.concurrence(), boot.std, fit.iterations);
    println!("fidelity        {:.5}", cascata::runner::fidelity(&truth, &fit.state));
    Ok(())
}

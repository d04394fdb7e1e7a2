//! Removing the white-noise admixture caused by multi-photon emission.
use cascata::state::{forward_mix, multiphoton_correct};
use cascata::{G2Pair, TwoPhotonState};

fn main() -> cascata::Result<()> {
    let g2 = G2Pair::new(0.02, 0.05)?;
    let eps = g2.noise_weight();
    let clean = TwoPhotonState::werner(0.9)?;
    let measured = forward_mix(&clean, eps)?;
    let restored = multiphoton_correct(&measured, g2)?;
    println!("noise weight {eps:.4}");
    println!("C clean {:.4}  measured {:.4}  corrected {:.4}", clean.concurrence(), measured.concurrence(), restored.concurrence());
    // over-correcting a pure state leaves negative eigenvalues, which are clipped
    let clipped = multiphoton_correct(&TwoPhotonState::phi_plus(), G2Pair::new(0.5, 0.5)?)?;
    println!("over-corrected phi+: C {:.4}, purity {:.4}", clipped.concurrence(), clipped.purity());
    // a perfectly multi-photon source carries no recoverable signal
    if let Err(e) = multiphoton_correct(&measured, G2Pair::new(1.0, 0.0)?) {
        println!("rejected: {e}");
    }
    Ok(())
}

//! Two-photon polarization density matrices in the fixed `(HH, HV, VH, VV)` basis.
//!
//! Indices 0..4 address `HH, HV, VH, VV`; the first letter is the XX photon,
//! the second the X photon. Everything that serializes a state uses this order.

use nalgebra::{Matrix4, SymmetricEigen, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMat4 = Matrix4<Complex64>;

/// Basis labels in storage order.
pub const BASIS: [&str; 4] = ["HH", "HV", "VH", "VV"];

/// Hermiticity tolerance on matrix elements.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Tolerance on `Tr ρ = 1`.
pub const TRACE_TOL: f64 = 1e-10;
/// Smallest eigenvalue accepted as positive semidefinite.
pub const PSD_TOL: f64 = 1e-8;
/// Eigenvalues below `-NONPHYSICAL_TOL` make a matrix unusable for entanglement metrics.
pub const NONPHYSICAL_TOL: f64 = 1e-6;

/// Largest deviation `|m_ij - conj(m_ji)|`.
pub fn hermitian_deviation(m: &CMat4) -> f64 {
    let mut dev: f64 = 0.0;
    for i in 0..4 {
        for j in i..4 {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// Symmetrized copy `(m + m†)/2`.
pub fn hermitize(m: &CMat4) -> CMat4 {
    (m + m.adjoint()).scale(0.5)
}

/// Eigen-decomposition of a Hermitian 4×4 matrix, eigenvalues ascending.
pub fn hermitian_eigen(m: &CMat4) -> (Vector4<f64>, CMat4) {
    let eig = SymmetricEigen::new(hermitize(m));
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = Vector4::from_fn(|i, _| eig.eigenvalues[order[i]]);
    let vectors = CMat4::from_fn(|r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

pub fn recompose(values: &Vector4<f64>, vectors: &CMat4) -> CMat4 {
    let diag = CMat4::from_diagonal(&values.map(|v| Complex64::new(v, 0.0)));
    vectors * diag * vectors.adjoint()
}

/// `σy ⊗ σy` in the `(HH, HV, VH, VV)` basis.
fn sigma_yy() -> CMat4 {
    let mut m = CMat4::zeros();
    m[(0, 3)] = Complex64::new(-1.0, 0.0);
    m[(1, 2)] = Complex64::new(1.0, 0.0);
    m[(2, 1)] = Complex64::new(1.0, 0.0);
    m[(3, 0)] = Complex64::new(-1.0, 0.0);
    m
}

/// Wootters concurrence of a raw Hermitian matrix.
///
/// With `ρ = W W†` (columns of `W` are eigenvectors scaled by `√eᵢ`), the λᵢ
/// of the Wootters formula are the singular values of `Wᵀ (σy⊗σy) W`. This
/// avoids square roots of round-off-sized eigenvalues of `ρ ρ̃`.
pub fn concurrence_of_matrix(m: &CMat4) -> Result<f64> {
    let dev = hermitian_deviation(m);
    if dev > HERMITIAN_TOL {
        return Err(Error::NotHermitian { deviation: dev });
    }
    let (values, vectors) = hermitian_eigen(m);
    if values[0] < -NONPHYSICAL_TOL {
        return Err(Error::NonPhysical(format!("eigenvalue {:e}", values[0])));
    }
    let w = CMat4::from_fn(|r, c| vectors[(r, c)] * values[c].max(0.0).sqrt());
    let tau = w.transpose() * sigma_yy() * w;
    let mut lambdas: Vec<f64> = tau.singular_values().iter().copied().collect();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    let c = lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3];
    Ok(c.clamp(0.0, 1.0))
}

/// A physical two-photon polarization state.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoPhotonState {
    matrix: CMat4,
}

impl TwoPhotonState {
    /// Validates Hermiticity, unit trace and positive semidefiniteness.
    pub fn from_matrix(matrix: CMat4) -> Result<Self> {
        let dev = hermitian_deviation(&matrix);
        if dev > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation: dev });
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::NonPhysical(format!("trace {tr}")));
        }
        let (values, _) = hermitian_eigen(&matrix);
        if values[0] < -PSD_TOL {
            return Err(Error::NonPhysical(format!("smallest eigenvalue {:e}", values[0])));
        }
        Ok(Self { matrix })
    }

    /// Pure state `|ψ⟩⟨ψ|` from a (not necessarily normalized) ket.
    pub fn from_ket(ket: &Vector4<Complex64>) -> Result<Self> {
        let norm = ket.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::domain("from_ket", "ket must be non-zero"));
        }
        let k = ket.unscale(norm);
        Ok(Self {
            matrix: &k * k.adjoint(),
        })
    }

    /// `(|HH⟩ + |VV⟩)/√2`.
    pub fn phi_plus() -> Self {
        Self::phase_rotated_pair(0.0)
    }

    /// `(|HH⟩ + e^{iφ}|VV⟩)/√2`.
    pub fn phase_rotated_pair(phi: f64) -> Self {
        Self::cascade_family(Complex64::from_polar(1.0, phi))
    }

    /// `diag(½, 0, 0, ½)` with HH–VV coherence `ρ₁₄ = conj(z)/2`, where `z = E[e^{iφ}]`, `|z| <= 1`.
    pub fn cascade_family(mean_phase: Complex64) -> Self {
        debug_assert!(mean_phase.norm() <= 1.0 + 1e-12);
        let mut m = CMat4::zeros();
        m[(0, 0)] = Complex64::new(0.5, 0.0);
        m[(3, 3)] = Complex64::new(0.5, 0.0);
        m[(0, 3)] = mean_phase.conj() * 0.5;
        m[(3, 0)] = mean_phase * 0.5;
        Self { matrix: m }
    }

    pub fn maximally_mixed() -> Self {
        Self {
            matrix: CMat4::identity().scale(0.25),
        }
    }

    /// `p·|φ⁺⟩⟨φ⁺| + (1−p)·I/4`.
    pub fn werner(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain("werner", format!("p = {p} outside [0, 1]")));
        }
        Ok(Self {
            matrix: Self::phi_plus().matrix.scale(p) + CMat4::identity().scale((1.0 - p) / 4.0),
        })
    }

    pub fn matrix(&self) -> &CMat4 {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat4 {
        self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn purity(&self) -> f64 {
        (self.matrix * self.matrix).trace().re
    }

    pub fn eigenvalues(&self) -> Vector4<f64> {
        hermitian_eigen(&self.matrix).0
    }

    /// `⟨ψ|ρ|ψ⟩` for a normalized ket.
    pub fn fidelity_with_ket(&self, ket: &Vector4<Complex64>) -> f64 {
        let k = ket.unscale(ket.norm());
        (k.adjoint() * self.matrix * k)[(0, 0)].re
    }

    /// Expectation `Tr(Π ρ)` of an operator.
    pub fn expectation(&self, op: &CMat4) -> f64 {
        (op * self.matrix).trace().re
    }

    pub fn concurrence(&self) -> f64 {
        concurrence_of_matrix(&self.matrix).expect("validated state")
    }

    /// Maximum overlap with `(|HH⟩ + e^{iφ}|VV⟩)/√2` over φ.
    pub fn max_bell_fidelity(&self) -> f64 {
        let m = &self.matrix;
        (m[(0, 0)].re + m[(3, 3)].re) / 2.0 + m[(0, 3)].norm()
    }

    /// Applies `U ρ U†`.
    pub fn transformed(&self, unitary: &CMat4) -> Self {
        Self {
            matrix: unitary * self.matrix * unitary.adjoint(),
        }
    }

    /// Largest element-wise distance to another state.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (self.matrix - other.matrix).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn to_json_value(&self) -> DensityMatrixJson {
        DensityMatrixJson::from(self)
    }
}

/// Wire format `{ "basis": [...], "re": 4×4, "im": 4×4 }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrixJson {
    pub basis: Vec<String>,
    pub re: [[f64; 4]; 4],
    pub im: [[f64; 4]; 4],
}

impl From<&TwoPhotonState> for DensityMatrixJson {
    fn from(s: &TwoPhotonState) -> Self {
        let mut re = [[0.0; 4]; 4];
        let mut im = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                re[i][j] = s.matrix[(i, j)].re;
                im[i][j] = s.matrix[(i, j)].im;
            }
        }
        Self {
            basis: BASIS.iter().map(|b| b.to_string()).collect(),
            re,
            im,
        }
    }
}

impl TryFrom<DensityMatrixJson> for TwoPhotonState {
    type Error = Error;

    fn try_from(j: DensityMatrixJson) -> Result<Self> {
        if j.basis.iter().map(String::as_str).ne(BASIS) {
            return Err(Error::NonPhysical(format!("unexpected basis order {:?}", j.basis)));
        }
        let m = CMat4::from_fn(|r, c| Complex64::new(j.re[r][c], j.im[r][c]));
        TwoPhotonState::from_matrix(m)
    }
}

impl Serialize for TwoPhotonState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DensityMatrixJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for TwoPhotonState {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = DensityMatrixJson::deserialize(d)?;
        TwoPhotonState::try_from(j).map_err(serde::de::Error::custom)
    }
}

/// Zero-delay autocorrelations of the X and XX photons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2Pair {
    pub g2_x: f64,
    pub g2_xx: f64,
}

impl G2Pair {
    pub fn new(g2_x: f64, g2_xx: f64) -> Result<Self> {
        for (name, v) in [("g2_x", g2_x), ("g2_xx", g2_xx)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::domain("G2Pair", format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(Self { g2_x, g2_xx })
    }

    /// Probability that either photon of a detected pair comes from a multiphoton event.
    pub fn noise_weight(&self) -> f64 {
        1.0 - (1.0 - self.g2_x) * (1.0 - self.g2_xx)
    }
}

/// Clips negative eigenvalues and renormalizes the trace.
pub fn physicality_project(m: &CMat4) -> Result<TwoPhotonState> {
    let dev = hermitian_deviation(m);
    if dev > HERMITIAN_TOL {
        return Err(Error::NotHermitian { deviation: dev });
    }
    let (values, vectors) = hermitian_eigen(m);
    let clipped = values.map(|v| v.max(0.0));
    let total = clipped.sum();
    if total <= 0.0 {
        return Err(Error::NonPhysical("no positive eigenvalues to keep".into()));
    }
    let projected = hermitize(&recompose(&clipped.unscale(total), &vectors));
    Ok(TwoPhotonState { matrix: projected })
}

/// `(1−ε)ρ + ε·I/4`, the isotropic multiphoton-noise forward model.
pub fn forward_mix(rho: &TwoPhotonState, epsilon: f64) -> Result<TwoPhotonState> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::domain("forward_mix", format!("epsilon = {epsilon} outside [0, 1]")));
    }
    Ok(TwoPhotonState {
        matrix: rho.matrix.scale(1.0 - epsilon) + CMat4::identity().scale(epsilon / 4.0),
    })
}

/// Undoes [`forward_mix`] for `ε = 1 − (1−g2_x)(1−g2_xx)` and projects back onto physical states.
pub fn multiphoton_correct(rho_meas: &TwoPhotonState, g2: G2Pair) -> Result<TwoPhotonState> {
    correct_noise_weight(rho_meas, g2.noise_weight())
}

/// Same as [`multiphoton_correct`] with an explicit noise weight.
pub fn correct_noise_weight(rho_meas: &TwoPhotonState, epsilon: f64) -> Result<TwoPhotonState> {
    if epsilon >= 1.0 {
        return Err(Error::CorrectionImpossible { epsilon });
    }
    if !(epsilon >= 0.0) {
        return Err(Error::domain("multiphoton_correct", format!("epsilon = {epsilon} < 0")));
    }
    if epsilon == 0.0 {
        return Ok(rho_meas.clone());
    }
    let m = (rho_meas.matrix - CMat4::identity().scale(epsilon / 4.0)).unscale(1.0 - epsilon);
    physicality_project(&m)
}

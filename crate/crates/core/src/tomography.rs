//! Two-photon polarization tomography from 36 coincidence settings.
//!
//! Each photon is projected on one of `H, V, D, A, R, L` with
//! `D = (H+V)/√2`, `A = (H−V)/√2`, `R = (H+iV)/√2`, `L = (H−iV)/√2`.
//! Reconstruction is by maximum likelihood over `ρ = T T†/Tr(T T†)` with `T`
//! lower triangular (16 real parameters), starting from the linear-inversion
//! estimate projected onto physical states.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use nalgebra::{SMatrix, SVector, Vector2, Vector4};
use num_complex::Complex64;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::state::{hermitian_eigen, physicality_project, CMat4, TwoPhotonState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarization {
    H,
    V,
    D,
    A,
    R,
    L,
}

impl Polarization {
    pub const ALL: [Polarization; 6] = [Self::H, Self::V, Self::D, Self::A, Self::R, Self::L];

    /// Jones vector in the `(H, V)` basis.
    pub fn ket(self) -> Vector2<Complex64> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let (h, v) = match self {
            Self::H => (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)),
            Self::V => (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)),
            Self::D => (Complex64::new(s, 0.0), Complex64::new(s, 0.0)),
            Self::A => (Complex64::new(s, 0.0), Complex64::new(-s, 0.0)),
            Self::R => (Complex64::new(s, 0.0), Complex64::new(0.0, s)),
            Self::L => (Complex64::new(s, 0.0), Complex64::new(0.0, -s)),
        };
        Vector2::new(h, v)
    }

    /// Pauli axis index (1 = X, 2 = Y, 3 = Z) and eigenvalue sign.
    fn axis(self) -> (usize, f64) {
        match self {
            Self::D => (1, 1.0),
            Self::A => (1, -1.0),
            Self::R => (2, 1.0),
            Self::L => (2, -1.0),
            Self::H => (3, 1.0),
            Self::V => (3, -1.0),
        }
    }

    fn index(self) -> usize {
        Self::ALL.iter().position(|&p| p == self).unwrap()
    }
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Polarization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "H" => Self::H,
            "V" => Self::V,
            "D" => Self::D,
            "A" => Self::A,
            "R" => Self::R,
            "L" => Self::L,
            other => return Err(Error::domain("Polarization", format!("unknown label {other:?}"))),
        })
    }
}

/// Two-photon ket `|a⟩ ⊗ |b⟩` in the `(HH, HV, VH, VV)` basis.
pub fn product_ket(xx: Polarization, x: Polarization) -> Vector4<Complex64> {
    let (a, b) = (xx.ket(), x.ket());
    Vector4::new(a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1])
}

/// Projector onto one setting.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementOperator {
    pub setting_xx: Polarization,
    pub setting_x: Polarization,
    pub projector: CMat4,
}

/// The 36 rank-1 projectors `|a⟩⟨a| ⊗ |b⟩⟨b|`, XX setting major.
pub fn measurement_operators() -> Vec<MeasurementOperator> {
    settings()
        .map(|(a, b)| {
            let k = product_ket(a, b);
            MeasurementOperator {
                setting_xx: a,
                setting_x: b,
                projector: &k * k.adjoint(),
            }
        })
        .collect()
}

fn settings() -> impl Iterator<Item = (Polarization, Polarization)> {
    Polarization::ALL
        .into_iter()
        .flat_map(|a| Polarization::ALL.into_iter().map(move |b| (a, b)))
}

/// Coincidence counts for one setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceRecord {
    pub setting_xx: Polarization,
    pub setting_x: Polarization,
    pub counts: u64,
    /// Pairs impinging per setting before projection.
    pub expected_total: f64,
}

fn check_rate(op: &'static str, n: f64) -> Result<()> {
    if n.is_finite() && n > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(op, format!("n_per_setting = {n} must be > 0")))
    }
}

/// Poisson counts with mean `n · Tr(Π ρ)` per setting.
pub fn simulate_counts(rho: &TwoPhotonState, n_per_setting: f64, seed: u64) -> Result<Vec<CoincidenceRecord>> {
    check_rate("simulate_counts", n_per_setting)?;
    let mut stream = rng::stream(seed);
    settings()
        .map(|(a, b)| {
            let mean = n_per_setting * rho.fidelity_with_ket(&product_ket(a, b)).max(0.0);
            Ok(CoincidenceRecord {
                setting_xx: a,
                setting_x: b,
                counts: poisson(mean, &mut stream)?,
                expected_total: n_per_setting,
            })
        })
        .collect()
}

/// Expected counts rounded to integers (no shot noise).
pub fn noiseless_counts(rho: &TwoPhotonState, n_per_setting: f64) -> Result<Vec<CoincidenceRecord>> {
    check_rate("noiseless_counts", n_per_setting)?;
    Ok(settings()
        .map(|(a, b)| CoincidenceRecord {
            setting_xx: a,
            setting_x: b,
            counts: (n_per_setting * rho.fidelity_with_ket(&product_ket(a, b)).max(0.0)).round() as u64,
            expected_total: n_per_setting,
        })
        .collect())
}

fn poisson<R: rand::Rng>(mean: f64, rng: &mut R) -> Result<u64> {
    if mean <= 0.0 {
        return Ok(0);
    }
    let d = Poisson::new(mean).map_err(|e| Error::domain("poisson", e.to_string()))?;
    Ok(d.sample(rng) as u64)
}

/// Records indexed by setting, rejecting gaps and duplicates.
fn table(records: &[CoincidenceRecord]) -> Result<[[CoincidenceRecord; 6]; 6]> {
    let mut slots: [[Option<CoincidenceRecord>; 6]; 6] = [[None; 6]; 6];
    for r in records {
        let slot = &mut slots[r.setting_xx.index()][r.setting_x.index()];
        if slot.is_some() {
            return Err(Error::DuplicateSetting(r.setting_xx.to_string(), r.setting_x.to_string()));
        }
        *slot = Some(*r);
    }
    for (a, pa) in Polarization::ALL.iter().enumerate() {
        for (b, pb) in Polarization::ALL.iter().enumerate() {
            if slots[a][b].is_none() {
                return Err(Error::MissingSetting(pa.to_string(), pb.to_string()));
            }
        }
    }
    Ok(slots.map(|row| row.map(Option::unwrap)))
}

fn pauli(i: usize) -> nalgebra::Matrix2<Complex64> {
    let z = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let im = Complex64::new(0.0, 1.0);
    match i {
        0 => nalgebra::Matrix2::new(one, z, z, one),
        1 => nalgebra::Matrix2::new(z, one, one, z),
        2 => nalgebra::Matrix2::new(z, -im, im, z),
        _ => nalgebra::Matrix2::new(one, z, z, -one),
    }
}

fn kron(a: &nalgebra::Matrix2<Complex64>, b: &nalgebra::Matrix2<Complex64>) -> CMat4 {
    CMat4::from_fn(|r, c| a[(r / 2, c / 2)] * b[(r % 2, c % 2)])
}

/// Result of Stokes-parameter inversion.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearInversion {
    /// Hermitian, unit trace, possibly with negative eigenvalues.
    pub matrix: CMat4,
    pub min_eigenvalue: f64,
    /// `false` when the estimate has eigenvalues below `-PSD_TOL`.
    pub physical: bool,
}

/// Reconstructs `ρ = ¼ Σ S_ij σ_i ⊗ σ_j` from normalized frequencies of the
/// nine basis-pair groups. Single-photon Stokes terms average the three
/// groups that contain them.
pub fn linear_inversion(records: &[CoincidenceRecord]) -> Result<LinearInversion> {
    let t = table(records)?;
    let bases = [(Polarization::D, Polarization::A), (Polarization::R, Polarization::L), (Polarization::H, Polarization::V)];
    let mut stokes = [[0.0f64; 4]; 4];
    stokes[0][0] = 1.0;
    let mut marg_xx = [0.0f64; 4];
    let mut marg_x = [0.0f64; 4];
    for &(ap, am) in &bases {
        for &(bp, bm) in &bases {
            let c = |a: Polarization, b: Polarization| t[a.index()][b.index()].counts as f64;
            let (pp, pm, mp, mm) = (c(ap, bp), c(ap, bm), c(am, bp), c(am, bm));
            let total = pp + pm + mp + mm;
            if total <= 0.0 {
                return Err(Error::domain(
                    "linear_inversion",
                    format!("no counts in basis group ({ap}/{am}, {bp}/{bm})"),
                ));
            }
            let (i, _) = ap.axis();
            let (j, _) = bp.axis();
            stokes[i][j] = (pp - pm - mp + mm) / total;
            marg_xx[i] += (pp + pm - mp - mm) / total / 3.0;
            marg_x[j] += (pp - pm + mp - mm) / total / 3.0;
        }
    }
    for k in 1..4 {
        stokes[k][0] = marg_xx[k];
        stokes[0][k] = marg_x[k];
    }
    let mut m = CMat4::zeros();
    for (i, row) in stokes.iter().enumerate() {
        for (j, &s) in row.iter().enumerate() {
            m += kron(&pauli(i), &pauli(j)).scale(s / 4.0);
        }
    }
    let (values, _) = hermitian_eigen(&m);
    Ok(LinearInversion {
        matrix: m,
        min_eigenvalue: values[0],
        physical: values[0] >= -crate::state::PSD_TOL,
    })
}

/// Poisson log-likelihood `Σ [c ln μ − μ]` with `μ = N · Tr(Π ρ)`, dropping the `ln c!` constant.
pub fn log_likelihood(records: &[CoincidenceRecord], rho: &TwoPhotonState) -> f64 {
    let kets: Vec<_> = records.iter().map(|r| product_ket(r.setting_xx, r.setting_x)).collect();
    log_likelihood_of_matrix(records, &kets, rho.matrix())
}

fn log_likelihood_of_matrix(records: &[CoincidenceRecord], kets: &[Vector4<Complex64>], rho: &CMat4) -> f64 {
    records
        .iter()
        .zip(kets)
        .map(|(r, k)| {
            let mu = r.expected_total * (k.adjoint() * rho * k)[(0, 0)].re.max(0.0);
            let c = r.counts as f64;
            if c == 0.0 {
                -mu
            } else if mu <= 0.0 {
                f64::NEG_INFINITY
            } else {
                c * mu.ln() - mu
            }
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MleOptions {
    /// Stop when one iteration improves the log-likelihood by less than `tol · (1 + |LL|)`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 5000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleResult {
    pub state: TwoPhotonState,
    pub log_likelihood: f64,
    /// Log-likelihood of the projected linear-inversion estimate.
    pub initial_log_likelihood: f64,
    pub iterations: usize,
    /// Log-likelihood after each accepted step.
    pub trace: Vec<f64>,
    pub linear_inversion: LinearInversion,
}

const N_PARAMS: usize = 16;
type Params = SVector<f64, N_PARAMS>;
type InvHessian = SMatrix<f64, N_PARAMS, N_PARAMS>;

/// Lower-triangular `T` with real diagonal, packed as 4 diagonal entries then
/// `(re, im)` of the 6 strictly-lower entries in row-major order.
fn unpack(p: &Params) -> CMat4 {
    let mut t = CMat4::zeros();
    for i in 0..4 {
        t[(i, i)] = Complex64::new(p[i], 0.0);
    }
    let mut k = 4;
    for r in 1..4 {
        for c in 0..r {
            t[(r, c)] = Complex64::new(p[k], p[k + 1]);
            k += 2;
        }
    }
    t
}

fn pack_gradient(x: &CMat4) -> Params {
    // ∂LL/∂Re T_rc = 2 Re X_cr, ∂LL/∂Im T_rc = −2 Im X_cr with X = T† M
    let mut g = Params::zeros();
    for i in 0..4 {
        g[i] = 2.0 * x[(i, i)].re;
    }
    let mut k = 4;
    for r in 1..4 {
        for c in 0..r {
            g[k] = 2.0 * x[(c, r)].re;
            g[k + 1] = -2.0 * x[(c, r)].im;
            k += 2;
        }
    }
    g
}

/// Cholesky factor of a positive definite Hermitian matrix, packed.
fn pack_cholesky(rho: &CMat4) -> Option<Params> {
    let chol = nalgebra::Cholesky::new(crate::state::hermitize(rho))?;
    let l = chol.l();
    let mut p = Params::zeros();
    for i in 0..4 {
        p[i] = l[(i, i)].re;
    }
    let mut k = 4;
    for r in 1..4 {
        for c in 0..r {
            p[k] = l[(r, c)].re;
            p[k + 1] = l[(r, c)].im;
            k += 2;
        }
    }
    Some(p)
}

struct Objective<'a> {
    records: &'a [CoincidenceRecord],
    kets: Vec<Vector4<Complex64>>,
}

impl Objective<'_> {
    fn rho(&self, p: &Params) -> CMat4 {
        let t = unpack(p);
        let a = &t * t.adjoint();
        let tr = a.trace().re;
        a.unscale(tr)
    }

    fn value(&self, p: &Params) -> f64 {
        let rho = self.rho(p);
        if !rho.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return f64::NEG_INFINITY;
        }
        log_likelihood_of_matrix(self.records, &self.kets, &rho)
    }

    fn gradient(&self, p: &Params) -> Params {
        let t = unpack(p);
        let a = &t * t.adjoint();
        let tr = a.trace().re;
        let rho = a.unscale(tr);
        let mut g = CMat4::zeros();
        for (r, k) in self.records.iter().zip(&self.kets) {
            let mu = r.expected_total * (k.adjoint() * rho * k)[(0, 0)].re;
            let w = if r.counts == 0 {
                -r.expected_total
            } else {
                r.expected_total * (r.counts as f64 / mu - 1.0)
            };
            g += (k * k.adjoint()).scale(w);
        }
        let g_rho = (g * rho).trace().re;
        let m = (g - CMat4::identity().scale(g_rho)).unscale(tr);
        pack_gradient(&(t.adjoint() * m))
    }
}

/// Maximum-likelihood density matrix.
///
/// BFGS ascent with an Armijo backtracking line search; every accepted step
/// strictly increases the likelihood. The returned state is never less likely
/// than the projected linear-inversion initializer.
pub fn mle_reconstruct(records: &[CoincidenceRecord], opts: MleOptions) -> Result<MleResult> {
    let li = linear_inversion(records)?;
    let init_state = physicality_project(&li.matrix)?;
    let objective = Objective {
        records,
        kets: records.iter().map(|r| product_ket(r.setting_xx, r.setting_x)).collect(),
    };
    let initial_ll = log_likelihood_of_matrix(records, &objective.kets, init_state.matrix());

    // Start strictly inside the positive cone so the Cholesky factor exists.
    let start = init_state.matrix().scale(1.0 - 1e-3) + CMat4::identity().scale(1e-3 / 4.0);
    let mut p = pack_cholesky(&start).ok_or_else(|| Error::NonPhysical("initializer not positive definite".into()))?;
    let mut ll = objective.value(&p);
    let mut grad = objective.gradient(&p);
    let mut h_inv = InvHessian::identity();
    let mut first_step = true;
    let mut trace = vec![ll];
    let mut iterations = 0;
    let mut last_improvement = f64::INFINITY;
    let mut converged = false;

    while iterations < opts.max_iter {
        iterations += 1;
        let mut dir = h_inv * grad;
        if dir.dot(&grad) <= 0.0 {
            h_inv = InvHessian::identity();
            dir = grad;
        }
        if first_step {
            // scale the first move to a small change of the parameters
            let scale = 0.05 * p.norm().max(1e-3) / dir.norm().max(f64::MIN_POSITIVE);
            dir *= scale;
        }
        let slope = dir.dot(&grad);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = p + dir * alpha;
            let v = objective.value(&trial);
            if v.is_finite() && v >= ll + 1e-4 * alpha * slope && v > ll {
                accepted = Some((trial, v));
                break;
            }
            alpha *= 0.5;
        }
        let Some((p_new, ll_new)) = accepted else {
            if first_step || h_inv != InvHessian::identity() {
                // retry from steepest ascent before giving up
                h_inv = InvHessian::identity();
                first_step = true;
                continue;
            }
            // no representable improvement left along the gradient
            converged = true;
            break;
        };
        let g_new = objective.gradient(&p_new);
        let s = p_new - p;
        let y = grad - g_new; // gradient of −LL
        let sy = s.dot(&y);
        if sy > 1e-300 {
            if first_step {
                h_inv = InvHessian::identity() * (sy / y.dot(&y));
            }
            let rho_k = 1.0 / sy;
            let i = InvHessian::identity();
            h_inv = (i - s * y.transpose() * rho_k) * h_inv * (i - y * s.transpose() * rho_k) + s * s.transpose() * rho_k;
        }
        first_step = false;
        last_improvement = ll_new - ll;
        p = p_new;
        ll = ll_new;
        grad = g_new;
        trace.push(ll);
        if last_improvement < opts.tol * (1.0 + ll.abs()) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations,
            last_improvement,
            log_likelihood: ll,
        });
    }
    let optimized = TwoPhotonState::from_matrix(crate::state::hermitize(&objective.rho(&p)))?;
    let (state, log_likelihood) = if ll >= initial_ll {
        (optimized, ll)
    } else {
        (init_state, initial_ll)
    };
    Ok(MleResult {
        state,
        log_likelihood,
        initial_log_likelihood: initial_ll,
        iterations,
        trace,
        linear_inversion: li,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BootstrapSummary {
    /// Concurrence of the MLE on the original records.
    pub concurrence: f64,
    /// Mean over bootstrap replicates.
    pub mean: f64,
    /// Standard deviation over bootstrap replicates.
    pub std: f64,
    pub n_boot: usize,
}

/// Parametric bootstrap of the concurrence: Poisson resampling around the MLE
/// expectations, each replicate reconstructed again.
pub fn concurrence_uncertainty(
    records: &[CoincidenceRecord],
    n_boot: usize,
    seed: u64,
    opts: MleOptions,
) -> Result<BootstrapSummary> {
    if n_boot < 100 {
        return Err(Error::domain("concurrence_uncertainty", format!("n_boot = {n_boot} must be >= 100")));
    }
    let fit = mle_reconstruct(records, opts)?;
    let replicas: Vec<f64> = (0..n_boot)
        .into_par_iter()
        .map(|i| {
            let mut stream = rng::stream(rng::derive_seed(seed, i as u64));
            let resampled = records
                .iter()
                .map(|r| {
                    let mu = r.expected_total * fit.state.fidelity_with_ket(&product_ket(r.setting_xx, r.setting_x)).max(0.0);
                    Ok(CoincidenceRecord {
                        counts: poisson(mu, &mut stream)?,
                        ..*r
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(mle_reconstruct(&resampled, opts)?.state.concurrence())
        })
        .collect::<Result<_>>()?;
    let n = replicas.len() as f64;
    let mean = replicas.iter().sum::<f64>() / n;
    let var = replicas.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(BootstrapSummary {
        concurrence: fit.state.concurrence(),
        mean,
        std: var.sqrt(),
        n_boot,
    })
}

/// Writes `setting_xx,setting_x,counts,expected_total`.
pub fn write_records_csv<W: Write>(writer: W, records: &[CoincidenceRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records_csv<R: Read>(reader: R) -> Result<Vec<CoincidenceRecord>> {
    let mut rd = csv::Reader::from_reader(reader);
    let records = rd.deserialize().collect::<std::result::Result<Vec<CoincidenceRecord>, _>>()?;
    table(&records)?;
    Ok(records)
}

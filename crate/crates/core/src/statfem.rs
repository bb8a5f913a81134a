//! Statistical generating model y = ρHu + d + e and the polynomial-chaos
//! Gauss–Markov–Kálmán update.

use crate::error::{Error, Result};
use crate::fem::{shape, Mesh};
use crate::linalg::{Cholesky, Matrix};
use crate::pce::{weighted_moments, PcField};
use crate::randomfield::{kl_decompose, Kernel, KlExpansion, Truncation};
use crate::scalar::Real;
use serde::{Deserialize, Serialize};

/// Interpolation matrix [n_sen × n_node] mapping nodal values of one
/// displacement component to sensor coordinates. Sensors on a node get an
/// exact unit row.
pub fn observation_matrix<T: Real>(mesh: &Mesh<T>, sensors: &[Vec<T>]) -> Result<Matrix<T>> {
    let mut h = Matrix::zeros(sensors.len(), mesh.n_nodes());
    let (lo, hi) = mesh.bounds(0);
    let tol = (hi - lo).abs().max(T::one()) * T::lit(1e-12);
    for (s, x) in sensors.iter().enumerate() {
        if x.len() != mesh.dim() {
            return Err(Error::invalid(format!("sensor {s} has {} coordinates", x.len())));
        }
        if let Some(n) = (0..mesh.n_nodes()).find(|&n| mesh.node(n).iter().zip(x).all(|(a, b)| (*a - *b).abs() <= tol)) {
            h[(s, n)] = T::one();
            continue;
        }
        let mut placed = false;
        for e in 0..mesh.n_elements() {
            let conn = mesh.element(e);
            if mesh.dim() == 1 {
                let (a, b) = (mesh.node(conn[0])[0], mesh.node(conn[1])[0]);
                if x[0] >= a.min(b) && x[0] <= a.max(b) {
                    let t = (x[0] - a) / (b - a);
                    h[(s, conn[0])] = T::one() - t;
                    h[(s, conn[1])] = t;
                    placed = true;
                    break;
                }
            } else if let Some((xi, eta)) = inverse_bilinear(mesh, e, x) {
                let (n, _) = shape(xi, eta);
                for a in 0..4 {
                    h[(s, conn[a])] += n[a];
                }
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::invalid(format!("sensor {s} lies outside the mesh")));
        }
    }
    Ok(h)
}

fn inverse_bilinear<T: Real>(mesh: &Mesh<T>, e: usize, x: &[T]) -> Option<(T, T)> {
    let conn = mesh.element(e);
    let p: Vec<&[T]> = conn.iter().map(|&n| mesh.node(n)).collect();
    let (mut xi, mut eta) = (T::zero(), T::zero());
    for _ in 0..30 {
        let (n, dn) = shape(xi, eta);
        let mut r = [x[0], x[1]];
        let mut j = [[T::zero(); 2]; 2];
        for a in 0..4 {
            for d in 0..2 {
                r[d] -= n[a] * p[a][d];
                j[d][0] += dn[a][0] * p[a][d];
                j[d][1] += dn[a][1] * p[a][d];
            }
        }
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det == T::zero() {
            return None;
        }
        let dxi = (j[1][1] * r[0] - j[0][1] * r[1]) / det;
        let deta = (-j[1][0] * r[0] + j[0][0] * r[1]) / det;
        xi += dxi;
        eta += deta;
        if dxi.abs() + deta.abs() < T::lit(1e-13) {
            break;
        }
    }
    let lim = T::one() + T::lit(1e-10);
    (xi.abs() <= lim && eta.abs() <= lim).then_some((xi, eta))
}

/// KL modes of the model-reality mismatch at the sensors (unit weights).
#[derive(Debug, Clone)]
pub struct MismatchBasis<T> {
    kl: KlExpansion<T>,
    // n_sen × M_d, column m = √λₘ φₘ
    loadings: Matrix<T>,
}

impl<T: Real> MismatchBasis<T> {
    pub fn new(sensors: &[Vec<T>], kernel: &Kernel<T>, truncation: Truncation<T>) -> Result<Self> {
        let kl = kl_decompose(kernel, sensors, None, truncation)?;
        let lam = kl.eigenvalues().to_vec();
        let loadings = Matrix::from_fn(sensors.len(), kl.len(), |i, m| kl.modes()[(i, m)] * lam[m].sqrt());
        Ok(MismatchBasis { kl, loadings })
    }

    pub fn modes(&self) -> usize {
        self.loadings.cols()
    }

    pub fn n_sensors(&self) -> usize {
        self.loadings.rows()
    }

    pub fn expansion(&self) -> &KlExpansion<T> {
        &self.kl
    }

    /// √λₘ φₘ as columns.
    pub fn loadings(&self) -> &Matrix<T> {
        &self.loadings
    }
}

/// σ_d = φ diag(σ_{d,m}) √λ and Σ_d = σ_d σ_dᵀ.
pub fn mismatch_factors<T: Real>(basis: &MismatchBasis<T>, sigma_d: &[T]) -> Result<(Matrix<T>, Matrix<T>)> {
    if sigma_d.len() > basis.modes() {
        return Err(Error::invalid(format!(
            "{} mismatch parameters but only {} modes available",
            sigma_d.len(),
            basis.modes()
        )));
    }
    if sigma_d.iter().any(|&s| !(s >= T::zero()) || !s.is_finite()) {
        return Err(Error::invalid("mismatch standard deviations must be nonnegative"));
    }
    let l = basis.loadings();
    let factors = Matrix::from_fn(l.rows(), sigma_d.len(), |i, m| l[(i, m)] * sigma_d[m]);
    let cov = factors.matmul(&factors.transpose())?;
    Ok((factors, cov))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GainForm {
    /// K = Σ_u Hᵀ (ρ H Σ_u Hᵀ + (Σ_d + Σ_e)/(n_r ρ))⁻¹
    #[default]
    Paper,
    /// K = ρ Σ_u Hᵀ (ρ² H Σ_u Hᵀ + (Σ_d + Σ_e)/n_r)⁻¹
    Symmetric,
}

/// Kálmán gain [n × n_sen], solved through a Cholesky factor of the inner matrix.
pub fn kalman_gain<T: Real>(
    sigma_u: &Matrix<T>,
    h: &Matrix<T>,
    rho: T,
    sigma_de: &Matrix<T>,
    n_r: usize,
    form: GainForm,
) -> Result<Matrix<T>> {
    if h.cols() != sigma_u.rows() || sigma_u.rows() != sigma_u.cols() {
        return Err(Error::shape("H and Σ_u are inconsistent"));
    }
    if sigma_de.rows() != h.rows() || sigma_de.cols() != h.rows() {
        return Err(Error::shape("Σ_d + Σ_e must be n_sen × n_sen"));
    }
    if n_r == 0 || !(rho > T::zero()) {
        return Err(Error::invalid("need n_r ≥ 1 and ρ > 0"));
    }
    let nr = T::from_usize_lossy(n_r);
    let hs = h.matmul(sigma_u)?; // H Σ_u
    let hsh = hs.matmul(&h.transpose())?;
    let (inner, outer) = match form {
        GainForm::Paper => (hsh.scale(rho).add(&sigma_de.scale(T::one() / (nr * rho)))?, T::one()),
        GainForm::Symmetric => (hsh.scale(rho * rho).add(&sigma_de.scale(T::one() / nr))?, rho),
    };
    let mut inner = inner;
    inner.symmetrize();
    let ch = Cholesky::factor(&inner).map_err(|e| Error::numerical(format!("Kalman gain: {e}")))?;
    // Kᵀ = S⁻¹ H Σ_u
    let kt = ch.solve_mat(&hs)?;
    Ok(kt.transpose().scale(outer))
}

/// Prior, mismatch, noise and data coefficients on the extended basis
/// [displacement terms | M_d mismatch germs | n_sen noise germs].
#[derive(Debug, Clone)]
pub struct ExtendedPc<T> {
    pub n_terms: usize,
    pub m_d: usize,
    pub n_sen: usize,
    pub n_r: usize,
    pub u_f: Matrix<T>,
    pub d_hat: Matrix<T>,
    pub e_hat: Matrix<T>,
    /// Replication mean of the data coefficients (column 0 only).
    pub y_hat: Matrix<T>,
    pub norms: Vec<T>,
}

impl<T: Real> ExtendedPc<T> {
    pub fn p_alpha(&self) -> usize {
        self.n_terms + self.m_d + self.n_sen
    }
}

/// Lays out the blocks for one displacement component. `y` is [n_sen × n_r].
pub fn assemble_extended<T: Real>(
    prior: &PcField<T>,
    sigma_d: &Matrix<T>,
    sigma_e: &[T],
    y: &Matrix<T>,
) -> Result<ExtendedPc<T>> {
    let n = prior.outputs();
    let t = prior.basis.len();
    let n_sen = sigma_e.len();
    let m_d = sigma_d.cols();
    if sigma_d.rows() != n_sen || y.rows() != n_sen {
        return Err(Error::shape(format!(
            "mismatch factors {}x{}, data {}x{}, noise {}",
            sigma_d.rows(),
            m_d,
            y.rows(),
            y.cols(),
            n_sen
        )));
    }
    if y.cols() == 0 {
        return Err(Error::invalid("no replications"));
    }
    let pa = t + m_d + n_sen;
    let mut u_f = Matrix::zeros(n, pa);
    for i in 0..n {
        u_f.row_mut(i)[..t].copy_from_slice(prior.coefficients.row(i));
    }
    let mut d_hat = Matrix::zeros(n_sen, pa);
    let mut e_hat = Matrix::zeros(n_sen, pa);
    let mut y_hat = Matrix::zeros(n_sen, pa);
    let nr = T::from_usize_lossy(y.cols());
    for k in 0..n_sen {
        for m in 0..m_d {
            d_hat[(k, t + m)] = sigma_d[(k, m)];
        }
        e_hat[(k, t + m_d + k)] = sigma_e[k];
        y_hat[(k, 0)] = y.row(k).iter().copied().sum::<T>() / nr;
    }
    let mut norms = prior.basis.norms().to_vec();
    norms.resize(pa, T::one());
    Ok(ExtendedPc { n_terms: t, m_d, n_sen, n_r: y.cols(), u_f, d_hat, e_hat, y_hat, norms })
}

/// Posterior coefficients on the extended basis.
#[derive(Debug, Clone)]
pub struct PosteriorResult<T> {
    pub u_a: Matrix<T>,
    pub norms: Vec<T>,
    pub gain: Matrix<T>,
    pub n_terms: usize,
    pub m_d: usize,
    pub n_sen: usize,
}

/// û_a = û_f + K(ŷ − ρHû_f − d̂ − ê), column by column.
pub fn gmkf_update<T: Real>(ext: &ExtendedPc<T>, gain: &Matrix<T>, rho: T, h: &Matrix<T>) -> Result<PosteriorResult<T>> {
    let n = ext.u_f.rows();
    if h.rows() != ext.n_sen || h.cols() != n || gain.rows() != n || gain.cols() != ext.n_sen {
        return Err(Error::shape("gain, H and extended layout disagree"));
    }
    let hu = h.matmul(&ext.u_f)?;
    let innov = Matrix::from_fn(ext.n_sen, ext.p_alpha(), |k, a| {
        ext.y_hat[(k, a)] - rho * hu[(k, a)] - ext.d_hat[(k, a)] - ext.e_hat[(k, a)]
    });
    let u_a = ext.u_f.add(&gain.matmul(&innov)?)?;
    Ok(PosteriorResult {
        u_a,
        norms: ext.norms.clone(),
        gain: gain.clone(),
        n_terms: ext.n_terms,
        m_d: ext.m_d,
        n_sen: ext.n_sen,
    })
}

/// Mean û_a column 0 and covariance Σ_{α≥1} ⟨Ψ̂_α²⟩ û_{a,α} û_{a,α}ᵀ.
pub fn posterior_moments<T: Real>(res: &PosteriorResult<T>) -> (Vec<T>, Matrix<T>) {
    weighted_moments(&res.u_a, &res.norms)
}

/// Moments of the true response z = ρHu + d at the sensors:
/// μ_z = ρHμ_a, Σ_z = ρ²HΣ_aHᵀ + Σ_d.
pub fn true_response<T: Real>(
    mean_a: &[T],
    cov_a: &Matrix<T>,
    h: &Matrix<T>,
    rho: T,
    sigma_d: &Matrix<T>,
) -> Result<(Vec<T>, Matrix<T>)> {
    let mu = h.matvec(mean_a)?.into_iter().map(|v| v * rho).collect();
    let hs = h.matmul(cov_a)?.matmul(&h.transpose())?;
    let cov = hs.scale(rho * rho).add(sigma_d)?;
    Ok((mu, cov))
}

/// Evaluates the posterior expansion at (ξ, χ, ζ).
pub fn posterior_eval<T: Real>(res: &PosteriorResult<T>, psi: &[T], chi: &[T], zeta: &[T]) -> Result<Vec<T>> {
    if psi.len() != res.n_terms || chi.len() != res.m_d || zeta.len() != res.n_sen {
        return Err(Error::shape("germ lengths do not match the extended basis"));
    }
    let germ: Vec<T> = psi.iter().chain(chi).chain(zeta).copied().collect();
    res.u_a.matvec(&germ)
}

/// sqrt of the mean squared deviation of sample rows from `y_mean`, averaged
/// over samples and sensors.
pub fn rmsd<T: Real>(samples: &Matrix<T>, y_mean: &[T]) -> Result<T> {
    if samples.rows() == 0 {
        return Err(Error::invalid("RMSD needs at least one sample"));
    }
    if samples.cols() != y_mean.len() {
        return Err(Error::shape("sample width differs from data mean length"));
    }
    let mut s = T::zero();
    for i in 0..samples.rows() {
        for (&a, &b) in samples.row(i).iter().zip(y_mean) {
            s += (a - b) * (a - b);
        }
    }
    Ok((s / T::from_usize_lossy(samples.rows() * samples.cols())).sqrt())
}

/// ‖μ_z − μ_Y‖₂.
pub fn err_metric<T: Real>(mu_z: &[T], y_mean: &[T]) -> Result<T> {
    if mu_z.len() != y_mean.len() {
        return Err(Error::shape("length mismatch"));
    }
    Ok(mu_z.iter().zip(y_mean).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>().sqrt())
}

/// Row means of a data matrix.
pub fn row_means<T: Real>(y: &Matrix<T>) -> Vec<T> {
    let n = T::from_usize_lossy(y.cols().max(1));
    (0..y.rows()).map(|i| y.row(i).iter().copied().sum::<T>() / n).collect()
}

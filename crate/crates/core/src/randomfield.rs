//! Correlation kernels, discrete Karhunen–Loève expansions and the lognormal
//! parameter link.

use crate::error::{Error, Result};
use crate::linalg::{Matrix, SymmetricEigen};
use crate::scalar::Real;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    SquaredExponential,
    #[serde(rename = "matern-5/2", alias = "matern52")]
    Matern52,
}

/// Stationary correlation kernel with one correlation length per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel<T> {
    family: KernelFamily,
    lengths: Vec<T>,
}

impl<T: Real> Kernel<T> {
    pub fn new(family: KernelFamily, lengths: Vec<T>) -> Result<Self> {
        if lengths.is_empty() {
            return Err(Error::invalid("kernel needs at least one correlation length"));
        }
        if lengths.iter().any(|&l| !(l > T::zero()) || !l.is_finite()) {
            return Err(Error::invalid("correlation lengths must be positive and finite"));
        }
        Ok(Kernel { family, lengths })
    }

    pub fn squared_exponential(lengths: Vec<T>) -> Result<Self> {
        Self::new(KernelFamily::SquaredExponential, lengths)
    }

    pub fn matern52(lengths: Vec<T>) -> Result<Self> {
        Self::new(KernelFamily::Matern52, lengths)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn lengths(&self) -> &[T] {
        &self.lengths
    }

    pub fn spatial_dim(&self) -> usize {
        self.lengths.len()
    }

    /// Correlation between two points. The Matérn-5/2 kernel is the product of
    /// one-dimensional factors over the axes.
    pub fn eval(&self, x: &[T], y: &[T]) -> T {
        match self.family {
            KernelFamily::SquaredExponential => {
                let half = T::lit(0.5);
                let s: T = (0..self.lengths.len())
                    .map(|i| {
                        let d = (x[i] - y[i]) / self.lengths[i];
                        d * d
                    })
                    .sum();
                (-half * s).exp()
            }
            KernelFamily::Matern52 => {
                let sqrt5 = T::lit(5.0).sqrt();
                let five_thirds = T::lit(5.0 / 3.0);
                let mut k = T::one();
                for i in 0..self.lengths.len() {
                    let r = (x[i] - y[i]).abs() / self.lengths[i];
                    k *= (T::one() + sqrt5 * r + five_thirds * r * r) * (-sqrt5 * r).exp();
                }
                k
            }
        }
    }
}

/// Parameters of a lognormal field E = exp(κ) with κ Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LognormalLink<T> {
    pub mu_e: T,
    pub sigma_e: T,
    pub mu_kappa: T,
    pub sigma_kappa: T,
}

impl<T: Real> LognormalLink<T> {
    pub fn new(mu_e: T, sigma_e: T) -> Result<Self> {
        if !(mu_e > T::zero()) || !mu_e.is_finite() {
            return Err(Error::invalid("mean Young's modulus must be positive"));
        }
        if !(sigma_e >= T::zero()) || !sigma_e.is_finite() {
            return Err(Error::invalid("standard deviation must be nonnegative"));
        }
        let m2 = mu_e * mu_e;
        let v = sigma_e * sigma_e;
        let mu_kappa = (m2 / (m2 + v).sqrt()).ln();
        let sigma_kappa = (v / m2).ln_1p().sqrt();
        Ok(LognormalLink { mu_e, sigma_e, mu_kappa, sigma_kappa })
    }
}

/// Where to cut the spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truncation<T> {
    /// Smallest M with explained variance strictly above 1 − ε.
    ExplainedVariance(T),
    /// Keep exactly this many modes.
    Modes(usize),
}

/// Discrete KL expansion of a unit-variance field over a point set.
#[derive(Debug, Clone)]
pub struct KlExpansion<T> {
    points: Vec<Vec<T>>,
    weights: Vec<T>,
    spectrum: Vec<T>,
    // n_points × M, columns orthonormal under Σᵢ wᵢ φ(Xᵢ) ψ(Xᵢ)
    modes: Matrix<T>,
}

impl<T: Real> KlExpansion<T> {
    pub fn points(&self) -> &[Vec<T>] {
        &self.points
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Number of retained modes.
    pub fn len(&self) -> usize {
        self.modes.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.cols() == 0
    }

    /// Retained eigenvalues, nonincreasing.
    pub fn eigenvalues(&self) -> &[T] {
        &self.spectrum[..self.len()]
    }

    /// Every eigenvalue of the discrete operator, including the discarded tail.
    pub fn spectrum(&self) -> &[T] {
        &self.spectrum
    }

    pub fn modes(&self) -> &Matrix<T> {
        &self.modes
    }

    /// Σ_{m≤M} λₘ / Σ λ.
    pub fn explained_variance(&self) -> T {
        let total: T = self.spectrum.iter().copied().sum();
        let kept: T = self.eigenvalues().iter().copied().sum();
        if total > T::zero() {
            kept / total
        } else {
            T::one()
        }
    }

    /// Σₘ √λₘ φₘ(Xᵢ) ξₘ at every point.
    pub fn combine(&self, xi: &[T]) -> Result<Vec<T>> {
        if xi.len() != self.len() {
            return Err(Error::invalid(format!(
                "germ has {} entries, expansion has {} modes",
                xi.len(),
                self.len()
            )));
        }
        let scaled: Vec<T> = xi.iter().zip(self.eigenvalues()).map(|(&x, &l)| x * l.sqrt()).collect();
        self.modes.matvec(&scaled)
    }
}

/// Nyström discretization of the Fredholm problem ∫C(X,X')φ(X')dX' = λφ(X).
///
/// With quadrature weights W the symmetric problem W^{1/2} C W^{1/2} v = λ v is
/// solved and φ = W^{-1/2} v. Without weights every point gets weight 1.
pub fn kl_decompose<T: Real>(
    kernel: &Kernel<T>,
    points: &[Vec<T>],
    weights: Option<&[T]>,
    truncation: Truncation<T>,
) -> Result<KlExpansion<T>> {
    let n = points.len();
    if n < 2 {
        return Err(Error::invalid("KL decomposition needs at least two points"));
    }
    if points.iter().any(|p| p.len() != kernel.spatial_dim()) {
        return Err(Error::invalid("point dimension does not match the kernel"));
    }
    let w: Vec<T> = match weights {
        Some(w) if w.len() != n => return Err(Error::shape("one weight per point required")),
        Some(w) if w.iter().any(|&x| !(x > T::zero())) => {
            return Err(Error::invalid("Nyström weights must be positive"))
        }
        Some(w) => w.to_vec(),
        None => vec![T::one(); n],
    };
    match truncation {
        Truncation::ExplainedVariance(eps) if !(eps > T::zero() && eps < T::one()) => {
            return Err(Error::invalid("epsilon must lie in (0, 1)"))
        }
        Truncation::Modes(0) => return Err(Error::invalid("at least one mode is required")),
        Truncation::Modes(m) if m > n => {
            return Err(Error::invalid(format!("{m} modes requested but only {n} points")))
        }
        _ => {}
    }
    let sw: Vec<T> = w.iter().map(|x| x.sqrt()).collect();
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = sw[i] * kernel.eval(&points[i], &points[j]) * sw[j];
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(&a)?;
    let lmax = eig.values[0].max(T::zero());
    // rounding in the eigensolver scales with n·ε; for f64 the fixed 1e-10 dominates
    let rel = T::lit(1e-10).max(T::lit(10.0) * T::from_usize_lossy(n) * T::epsilon());
    let floor = -rel * lmax.max(T::min_positive_value());
    let mut spectrum = Vec::with_capacity(n);
    for &l in &eig.values {
        if l < floor {
            return Err(Error::numerical(format!(
                "correlation matrix is not positive semidefinite (eigenvalue {l:e})"
            )));
        }
        spectrum.push(l.max(T::zero()));
    }
    let total: T = spectrum.iter().copied().sum();
    let m = match truncation {
        Truncation::Modes(m) => m,
        Truncation::ExplainedVariance(eps) => {
            let target = T::one() - eps;
            let mut acc = T::zero();
            let mut m = n;
            for (k, &l) in spectrum.iter().enumerate() {
                acc += l;
                if acc / total > target {
                    m = k + 1;
                    break;
                }
            }
            m
        }
    };
    let modes = Matrix::from_fn(n, m, |i, k| eig.vectors[(i, k)] / sw[i]);
    Ok(KlExpansion { points: points.to_vec(), weights: w, spectrum, modes })
}

/// Log-modulus κ and modulus E = exp(κ) at the expansion points for one germ.
pub fn field_realize<T: Real>(
    kl: &KlExpansion<T>,
    link: &LognormalLink<T>,
    xi: &[T],
) -> Result<(Vec<T>, Vec<T>)> {
    let g = kl.combine(xi)?;
    let kappa: Vec<T> = g.iter().map(|&v| link.mu_kappa + link.sigma_kappa * v).collect();
    let e = kappa.iter().map(|k| k.exp()).collect();
    Ok((kappa, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matern_at_one_length() {
        let k = Kernel::matern52(vec![2.0]).unwrap();
        let v: f64 = k.eval(&[0.0], &[2.0]);
        let s5 = 5f64.sqrt();
        assert!((v - (1.0 + s5 + 5.0 / 3.0) * (-s5).exp()).abs() < 1e-15);
        assert!((v - 0.52400).abs() < 1e-5);
    }

    #[test]
    fn link_degenerate() {
        let l = LognormalLink::new(7.0f64, 0.0).unwrap();
        assert_eq!(l.mu_kappa, 7f64.ln());
        assert_eq!(l.sigma_kappa, 0.0);
        assert!(LognormalLink::new(0.0f64, 1.0).is_err());
    }

    #[test]
    fn near_one_epsilon_keeps_one_mode() {
        let pts: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let k = Kernel::squared_exponential(vec![3.0]).unwrap();
        let kl = kl_decompose(&k, &pts, None, Truncation::ExplainedVariance(0.999999)).unwrap();
        assert_eq!(kl.len(), 1);
    }
}

//! Total-degree Hermite polynomial chaos: basis, projection, moments, sampling.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::quadrature::SparseGrid;
use crate::scalar::Real;

const MAX_TERMS: u128 = 5_000_000;

/// C(n, k) in 128-bit integers; `None` on overflow.
pub fn checked_binomial(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) at every step
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

/// Multivariate probabilists' Hermite basis of total degree ≤ p in M germs.
#[derive(Debug, Clone, PartialEq)]
pub struct PcBasis<T> {
    m: usize,
    p: usize,
    indices: Vec<Vec<u32>>,
    norms: Vec<T>,
}

impl<T: Real> PcBasis<T> {
    /// Terms ordered by total degree, then lexicographically with larger
    /// leading exponents first: (0,0), (1,0), (0,1), (2,0), (1,1), (0,2), ...
    pub fn new(m: usize, p: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("PC basis needs at least one germ"));
        }
        let count = checked_binomial((m + p) as u64, p as u64)
            .ok_or_else(|| Error::invalid(format!("term count for M={m}, p={p} overflows")))?;
        if count > MAX_TERMS {
            return Err(Error::invalid(format!("PC basis with {count} terms is too large")));
        }
        let mut indices = Vec::with_capacity(count as usize);
        let mut cur = vec![0u32; m];
        for deg in 0..=p {
            fill_degree(&mut cur, 0, deg as u32, &mut indices);
        }
        let norms = indices
            .iter()
            .map(|idx| {
                let n: u128 = idx.iter().map(|&k| (1..=k as u128).product::<u128>()).product();
                T::from_u128(n).unwrap_or_else(T::infinity)
            })
            .collect();
        Ok(PcBasis { m, p, indices, norms })
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn order(&self) -> usize {
        self.p
    }

    /// Number of terms, (M+p)!/(M!p!).
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn multi_index(&self, j: usize) -> &[u32] {
        &self.indices[j]
    }

    pub fn multi_indices(&self) -> &[Vec<u32>] {
        &self.indices
    }

    /// ⟨Ψⱼ²⟩ = Πᵢ ϱᵢ!.
    pub fn norms(&self) -> &[T] {
        &self.norms
    }

    /// Every basis polynomial at ξ.
    pub fn eval_all(&self, xi: &[T]) -> Result<Vec<T>> {
        if xi.len() != self.m {
            return Err(Error::invalid(format!("germ has {} entries, basis has M={}", xi.len(), self.m)));
        }
        let table: Vec<Vec<T>> = xi.iter().map(|&x| hermite_table(x, self.p)).collect();
        Ok(self
            .indices
            .iter()
            .map(|idx| {
                idx.iter().enumerate().fold(T::one(), |acc, (i, &k)| if k == 0 { acc } else { acc * table[i][k as usize] })
            })
            .collect())
    }
}

fn fill_degree(cur: &mut Vec<u32>, pos: usize, left: u32, out: &mut Vec<Vec<u32>>) {
    if pos + 1 == cur.len() {
        cur[pos] = left;
        out.push(cur.clone());
        cur[pos] = 0;
        return;
    }
    for v in (0..=left).rev() {
        cur[pos] = v;
        fill_degree(cur, pos + 1, left - v, out);
    }
    cur[pos] = 0;
}

/// He₀..He_p at x by He_{n+1} = x He_n − n He_{n−1}.
pub fn hermite_table<T: Real>(x: T, p: usize) -> Vec<T> {
    let mut h = Vec::with_capacity(p + 1);
    h.push(T::one());
    if p >= 1 {
        h.push(x);
    }
    for n in 1..p {
        let next = x * h[n] - T::from_usize_lossy(n) * h[n - 1];
        h.push(next);
    }
    h
}

/// Ψⱼ(ξ) = Πᵢ He_{ϱᵢ}(ξᵢ).
pub fn hermite_eval<T: Real>(basis: &PcBasis<T>, j: usize, xi: &[T]) -> Result<T> {
    if j >= basis.len() {
        return Err(Error::invalid(format!("term {j} out of range (basis has {})", basis.len())));
    }
    if xi.len() != basis.dim() {
        return Err(Error::invalid("germ length does not match basis"));
    }
    let idx = basis.multi_index(j);
    Ok(idx.iter().zip(xi).fold(T::one(), |acc, (&k, &x)| acc * hermite_table(x, k as usize)[k as usize]))
}

/// Coefficients of a vector-valued PC expansion. Row r is output quantity r
/// (for nodal displacements, row = node·dims + dim).
#[derive(Debug, Clone, PartialEq)]
pub struct PcField<T> {
    pub basis: PcBasis<T>,
    pub dims: usize,
    pub coefficients: Matrix<T>,
}

impl<T: Real> PcField<T> {
    pub fn new(basis: PcBasis<T>, dims: usize, coefficients: Matrix<T>) -> Result<Self> {
        if coefficients.cols() != basis.len() {
            return Err(Error::shape(format!(
                "{} coefficient columns for {} basis terms",
                coefficients.cols(),
                basis.len()
            )));
        }
        if dims == 0 || coefficients.rows() % dims != 0 {
            return Err(Error::shape("row count must be a multiple of the spatial dimension"));
        }
        if coefficients.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("non-finite PC coefficient"));
        }
        Ok(PcField { basis, dims, coefficients })
    }

    pub fn outputs(&self) -> usize {
        self.coefficients.rows()
    }

    /// Value of the expansion at one germ.
    pub fn eval(&self, xi: &[T]) -> Result<Vec<T>> {
        let psi = self.basis.eval_all(xi)?;
        self.coefficients.matvec(&psi)
    }

    /// Keeps the rows of one spatial dimension.
    pub fn component(&self, dim: usize) -> Result<PcField<T>> {
        if dim >= self.dims {
            return Err(Error::invalid(format!("dimension {dim} out of range")));
        }
        let rows = self.outputs() / self.dims;
        let c = Matrix::from_fn(rows, self.basis.len(), |i, j| self.coefficients[(i * self.dims + dim, j)]);
        Ok(PcField { basis: self.basis.clone(), dims: 1, coefficients: c })
    }
}

/// Pseudo-spectral projection uⱼ = (1/⟨Ψⱼ²⟩) Σₙ wₙ u(ξₙ) Ψⱼ(ξₙ), summed in
/// ascending node order. `evals` has one row per grid node.
pub fn project<T: Real>(evals: &Matrix<T>, grid: &SparseGrid<T>, basis: &PcBasis<T>, dims: usize) -> Result<PcField<T>> {
    if evals.rows() != grid.len() {
        return Err(Error::shape(format!("{} evaluations for {} grid nodes", evals.rows(), grid.len())));
    }
    if grid.dim() != basis.dim() {
        return Err(Error::shape(format!("grid dimension {} vs basis dimension {}", grid.dim(), basis.dim())));
    }
    let nout = evals.cols();
    let nt = basis.len();
    // accumulate as nt × nout so the inner loop runs over contiguous outputs
    let mut acc = Matrix::<T>::zeros(nt, nout);
    for (n, xi) in grid.nodes().enumerate() {
        let psi = basis.eval_all(xi)?;
        let w = grid.weights()[n];
        let u = evals.row(n);
        for (j, &pj) in psi.iter().enumerate() {
            let f = w * pj;
            if f == T::zero() {
                continue;
            }
            for (a, &x) in acc.row_mut(j).iter_mut().zip(u) {
                *a += f * x;
            }
        }
    }
    let norms = basis.norms();
    let coefficients = Matrix::from_fn(nout, nt, |r, j| acc[(j, r)] / norms[j]);
    PcField::new(basis.clone(), dims, coefficients)
}

/// Mean (column 0) and covariance Σ_{j≥1} ⟨Ψⱼ²⟩ uⱼ uⱼᵀ.
pub fn pc_moments<T: Real>(field: &PcField<T>) -> (Vec<T>, Matrix<T>) {
    weighted_moments(&field.coefficients, field.basis.norms())
}

/// Moments of a coefficient matrix under arbitrary per-column norms.
pub fn weighted_moments<T: Real>(c: &Matrix<T>, norms: &[T]) -> (Vec<T>, Matrix<T>) {
    let n = c.rows();
    let mean = c.column(0);
    let mut cov = Matrix::zeros(n, n);
    for i in 0..n {
        let ri = c.row(i);
        for k in 0..=i {
            let rk = c.row(k);
            let mut s = T::zero();
            for j in 1..c.cols() {
                s += norms[j] * ri[j] * rk[j];
            }
            cov[(i, k)] = s;
            cov[(k, i)] = s;
        }
    }
    (mean, cov)
}

/// Standard deviation per row without forming the covariance.
pub fn weighted_std<T: Real>(c: &Matrix<T>, norms: &[T]) -> Vec<T> {
    (0..c.rows())
        .map(|i| {
            let r = c.row(i);
            (1..c.cols()).map(|j| norms[j] * r[j] * r[j]).sum::<T>().sqrt()
        })
        .collect()
}

/// Evaluates the expansion at each row of `xi` (one draw per row).
pub fn pc_sample<T: Real>(field: &PcField<T>, xi: &Matrix<T>) -> Result<Matrix<T>> {
    if xi.cols() != field.basis.dim() {
        return Err(Error::invalid(format!("draws have {} columns, basis has M={}", xi.cols(), field.basis.dim())));
    }
    let mut out = Matrix::zeros(xi.rows(), field.outputs());
    for s in 0..xi.rows() {
        let v = field.eval(xi.row(s))?;
        out.row_mut(s).copy_from_slice(&v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graded_lex_order() {
        let b = PcBasis::<f64>::new(2, 2).unwrap();
        let want: Vec<Vec<u32>> = vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]];
        assert_eq!(b.multi_indices(), &want[..]);
        assert_eq!(b.norms(), &[1.0, 1.0, 1.0, 2.0, 1.0, 2.0]);
    }

    #[test]
    fn term_counts() {
        assert_eq!(PcBasis::<f64>::new(1, 2).unwrap().len(), 3);
        assert_eq!(PcBasis::<f64>::new(10, 2).unwrap().len(), 66);
        assert_eq!(PcBasis::<f64>::new(13, 2).unwrap().len(), 105);
        assert!(PcBasis::<f64>::new(200, 60).is_err());
    }

    #[test]
    fn he2_at_two() {
        let b = PcBasis::<f64>::new(1, 2).unwrap();
        assert_eq!(hermite_eval(&b, 2, &[2.0]).unwrap(), 3.0);
        assert_eq!(hermite_eval(&b, 0, &[-7.0]).unwrap(), 1.0);
        assert!(hermite_eval(&b, 3, &[0.0]).is_err());
    }
}

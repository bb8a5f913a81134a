//! Gauss–Hermite rules for the standard normal measure and Smolyak sparse grids.

use crate::error::{Error, Result};
use crate::linalg::tridiagonal_eigen;
use crate::scalar::Real;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

/// One-dimensional quadrature rule against N(0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct UnivariateRule<T> {
    pub order: usize,
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

/// Probabilists' Gauss–Hermite rule with `order` points, weights summing to 1.
///
/// Built with Golub–Welsch: the Jacobi matrix of He_n has zero diagonal and
/// off-diagonal √k, and each weight is the squared first eigenvector component.
pub fn gauss_hermite<T: Real>(order: usize) -> Result<UnivariateRule<T>> {
    if order == 0 {
        return Err(Error::invalid("Gauss-Hermite order must be at least 1"));
    }
    let diag = vec![T::zero(); order];
    let off: Vec<T> = (1..order).map(|k| T::from_usize_lossy(k).sqrt()).collect();
    let (x, v0) = tridiagonal_eigen(&diag, &off)?;
    let mut nodes = x;
    let mut weights: Vec<T> = v0.iter().map(|&v| v * v).collect();
    // enforce exact symmetry so odd moments vanish to rounding
    let half = T::lit(0.5);
    for i in 0..order / 2 {
        let j = order - 1 - i;
        let a = (nodes[j] - nodes[i]) * half;
        nodes[i] = -a;
        nodes[j] = a;
        let w = (weights[i] + weights[j]) * half;
        weights[i] = w;
        weights[j] = w;
    }
    if order % 2 == 1 {
        nodes[order / 2] = T::zero();
    }
    let total: T = weights.iter().copied().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(UnivariateRule { order, nodes, weights })
}

/// Map from Smolyak level to univariate rule order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Growth {
    /// order = level + 1
    #[default]
    Linear,
    /// order = 2·level + 1
    Odd,
}

impl Growth {
    pub fn order(self, level: usize) -> usize {
        match self {
            Growth::Linear => level + 1,
            Growth::Odd => 2 * level + 1,
        }
    }

    /// Highest monomial degree integrated exactly by the level-`level` rule.
    pub fn exactness(self, level: usize) -> usize {
        2 * self.order(level) - 1
    }
}

/// Quadrature grid over M standard normal germs.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGrid<T> {
    dim: usize,
    level: usize,
    // row-major, one node per row
    nodes: Vec<T>,
    weights: Vec<T>,
}

impl<T: Real> SparseGrid<T> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, n: usize) -> &[T] {
        &self.nodes[n * self.dim..(n + 1) * self.dim]
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[T]> {
        self.nodes.chunks_exact(self.dim)
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Evaluates `f` at every node. Evaluation may run on several workers; the
    /// returned vector is in node order. The first failing node (lowest index)
    /// is reported.
    pub fn evaluate<R, F>(&self, f: F) -> Result<Vec<R>>
    where
        R: Send,
        F: Fn(&[T]) -> Result<R> + Sync,
    {
        let out: Vec<Result<R>> = (0..self.len()).into_par_iter().map(|n| f(self.node(n))).collect();
        out.into_iter()
            .enumerate()
            .map(|(index, r)| r.map_err(|e| Error::AtNode { index, source: Box::new(e) }))
            .collect()
    }
}

/// Σₙ wₙ f(ξₙ), summed in ascending node index so the result does not depend
/// on how many workers evaluated `f`.
pub fn integrate<T, F>(grid: &SparseGrid<T>, f: F) -> Result<Vec<T>>
where
    T: Real,
    F: Fn(&[T]) -> Result<Vec<T>> + Sync,
{
    let values = grid.evaluate(f)?;
    let width = values.first().map_or(0, Vec::len);
    let mut acc = vec![T::zero(); width];
    for (n, v) in values.iter().enumerate() {
        if v.len() != width {
            return Err(Error::AtNode {
                index: n,
                source: Box::new(Error::shape(format!("output length {} != {width}", v.len()))),
            });
        }
        let w = grid.weights[n];
        for (a, &x) in acc.iter_mut().zip(v) {
            *a += w * x;
        }
    }
    Ok(acc)
}

fn univariate_cache<T: Real>(max_order: usize) -> Result<Vec<UnivariateRule<T>>> {
    (1..=max_order).map(gauss_hermite).collect()
}

fn lex_cmp<T: Real>(a: &[T], b: &[T]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    Ordering::Equal
}

fn merge_nodes<T: Real>(dim: usize, level: usize, mut raw: Vec<(Vec<T>, T)>) -> SparseGrid<T> {
    raw.sort_by(|a, b| lex_cmp(&a.0, &b.0));
    let tol = T::lit(1e-12);
    let mut nodes: Vec<T> = Vec::with_capacity(raw.len() * dim);
    let mut weights: Vec<T> = Vec::with_capacity(raw.len());
    let mut last: Option<Vec<T>> = None;
    for (x, w) in raw {
        let dup = last.as_ref().is_some_and(|l| l.iter().zip(&x).all(|(a, b)| (*a - *b).abs() <= tol));
        if dup {
            *weights.last_mut().expect("previous node") += w;
        } else {
            nodes.extend_from_slice(&x);
            weights.push(w);
            last = Some(x);
        }
    }
    SparseGrid { dim, level, nodes, weights }
}

fn push_tensor<T: Real>(rules: &[&UnivariateRule<T>], coef: T, out: &mut Vec<(Vec<T>, T)>) {
    let dim = rules.len();
    let mut idx = vec![0usize; dim];
    loop {
        let x: Vec<T> = (0..dim).map(|i| rules[i].nodes[idx[i]]).collect();
        let w = (0..dim).fold(coef, |acc, i| acc * rules[i].weights[idx[i]]);
        out.push((x, w));
        let mut d = 0;
        loop {
            if d == dim {
                return;
            }
            idx[d] += 1;
            if idx[d] < rules[d].order {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

/// Full tensor Gauss–Hermite grid with `order` points per axis.
pub fn tensor_grid<T: Real>(dim: usize, order: usize) -> Result<SparseGrid<T>> {
    if dim == 0 {
        return Err(Error::invalid("grid dimension must be at least 1"));
    }
    let count = order
        .checked_pow(dim as u32)
        .filter(|&c| c <= 50_000_000)
        .ok_or_else(|| Error::invalid(format!("tensor grid {order}^{dim} is too large")))?;
    let rule = gauss_hermite::<T>(order)?;
    let rules: Vec<&UnivariateRule<T>> = vec![&rule; dim];
    let mut raw = Vec::with_capacity(count);
    push_tensor(&rules, T::one(), &mut raw);
    Ok(merge_nodes(dim, order - 1, raw))
}

fn binomial_f64(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64).round()
}

/// Visits every multi-index of length `dim` with sum in `[lo, hi]`.
fn for_each_multi_index(dim: usize, lo: usize, hi: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(k: &mut Vec<usize>, pos: usize, left: usize, lo: usize, hi: usize, f: &mut impl FnMut(&[usize])) {
        if pos == k.len() {
            let s: usize = k.iter().sum();
            if s >= lo && s <= hi {
                f(k);
            }
            return;
        }
        for v in 0..=left {
            k[pos] = v;
            rec(k, pos + 1, left - v, lo, hi, f);
        }
        k[pos] = 0;
    }
    let mut k = vec![0; dim];
    rec(&mut k, 0, hi, lo, hi, f);
}

/// Smolyak grid by the combination technique:
/// A(ℓ, d) = Σ_{ℓ−d+1 ≤ |k| ≤ ℓ} (−1)^{ℓ−|k|} C(d−1, ℓ−|k|) ⊗ᵢ U^{kᵢ},
/// with univariate levels starting at 0. Coincident nodes are merged and the
/// node list is sorted lexicographically.
pub fn smolyak<T: Real>(dim: usize, level: usize, growth: Growth) -> Result<SparseGrid<T>> {
    if dim == 0 {
        return Err(Error::invalid("grid dimension must be at least 1"));
    }
    let rules = univariate_cache::<T>(growth.order(level))?;
    let lo = (level + 1).saturating_sub(dim);
    let mut raw = Vec::new();
    let mut err = None;
    for_each_multi_index(dim, lo, level, &mut |k| {
        if err.is_some() {
            return;
        }
        let s: usize = k.iter().sum();
        let q = level - s;
        let c = binomial_f64(dim - 1, q);
        let coef = if q % 2 == 0 { c } else { -c };
        let tensor: Vec<&UnivariateRule<T>> = k.iter().map(|&ki| &rules[growth.order(ki) - 1]).collect();
        if raw.len() > 20_000_000 {
            err = Some(Error::invalid(format!("Smolyak grid dim {dim} level {level} is too large")));
            return;
        }
        push_tensor(&tensor, T::lit(coef), &mut raw);
    });
    if let Some(e) = err {
        return Err(e);
    }
    Ok(merge_nodes(dim, level, raw))
}

//! Negative log marginal likelihood of the mismatch hyperparameters and its
//! minimization.
//!
//! For hyperparameters w = (ρ, σ_d) the objective is
//!
//! ϑ(w) = (n_r/2) ln det Σ + (n_sen n_r/2) ln 2π − ln Σₙ wₙ exp(y*ₙ),
//! y*ₙ = −½ Σᵣ (y_r − ρhₙ)ᵀ Σ⁻¹ (y_r − ρhₙ),
//!
//! with Σ = Σ_d(σ_d) + Σ_e and hₙ = H u(ξₙ) the surrogate at quadrature node n.

use crate::error::{Error, Result, StartReport};
use crate::linalg::{dot, Cholesky, Matrix};
use crate::rng::{normal_vec, Purpose, StreamRng};
use crate::scalar::Real;

/// ln Σₙ wₙ exp(vₙ), shifted by the largest value. Every term is kept.
pub fn weighted_log_sum_exp<T: Real>(values: &[T], weights: &[T]) -> Result<T> {
    if values.len() != weights.len() {
        return Err(Error::shape("one weight per value required"));
    }
    let vmax = values.iter().copied().filter(|v| v.is_finite()).fold(T::neg_infinity(), T::max);
    if !vmax.is_finite() {
        return Err(Error::numerical("log-sum-exp needs at least one finite value"));
    }
    let mut s = T::zero();
    for (&v, &w) in values.iter().zip(weights) {
        s += w * (v - vmax).exp();
    }
    if !(s > T::zero()) {
        return Err(Error::numerical(format!(
            "weighted log-sum-exp argument is nonpositive ({s:e}); the quadrature has negative weights at dominant nodes"
        )));
    }
    Ok(vmax + s.ln())
}

/// Everything ϑ needs that does not depend on w.
#[derive(Debug, Clone)]
pub struct NlmlContext<T> {
    n_sen: usize,
    n_r: usize,
    m_d: usize,
    weights: Vec<T>,
    h: Matrix<T>,
    y: Matrix<T>,
    y_mean: Vec<T>,
    sigma_e: Vec<T>,
    loadings: Matrix<T>,
    log_det_e: T,
    // fast-path caches
    s_yy: T,
    g: Matrix<T>,
    a_mean: Vec<T>,
    q_lel: Matrix<T>,
    p: Matrix<T>,
    s_h: Vec<T>,
    q_hy: Vec<T>,
}

impl<T: Real> NlmlContext<T> {
    /// `h_nodes` is [n_nodes × n_sen] (surrogate at each node, before ρ),
    /// `y` is [n_sen × n_r], `loadings` is [n_sen × M_d] (columns √λₘ φₘ).
    pub fn new(h_nodes: Matrix<T>, weights: Vec<T>, y: Matrix<T>, sigma_e: Vec<T>, loadings: Matrix<T>) -> Result<Self> {
        let n_sen = y.rows();
        let n_r = y.cols();
        if n_r == 0 || n_sen == 0 {
            return Err(Error::invalid("no observations"));
        }
        if h_nodes.cols() != n_sen || h_nodes.rows() != weights.len() || weights.is_empty() {
            return Err(Error::shape("surrogate evaluations and weights disagree with the data"));
        }
        if sigma_e.len() != n_sen || loadings.rows() != n_sen {
            return Err(Error::shape("noise and mismatch loadings need one row per sensor"));
        }
        if sigma_e.iter().any(|&s| !(s > T::zero()) || !s.is_finite()) {
            return Err(Error::invalid("sensor noise standard deviations must be positive"));
        }
        let m_d = loadings.cols();
        let einv: Vec<T> = sigma_e.iter().map(|&s| T::one() / (s * s)).collect();
        let log_det_e = sigma_e.iter().map(|&s| (s * s).ln()).sum();
        let nr = T::from_usize_lossy(n_r);
        let y_mean: Vec<T> = (0..n_sen).map(|k| y.row(k).iter().copied().sum::<T>() / nr).collect();
        let mut s_yy = T::zero();
        let mut g = Matrix::zeros(m_d, m_d);
        let mut a = vec![T::zero(); m_d];
        for r in 0..n_r {
            for k in 0..n_sen {
                let v = y[(k, r)];
                s_yy += v * v * einv[k];
            }
            for m in 0..m_d {
                a[m] = (0..n_sen).map(|k| loadings[(k, m)] * einv[k] * y[(k, r)]).sum();
            }
            for i in 0..m_d {
                for j in 0..m_d {
                    g[(i, j)] += a[i] * a[j];
                }
            }
        }
        let a_mean: Vec<T> =
            (0..m_d).map(|m| (0..n_sen).map(|k| loadings[(k, m)] * einv[k] * y_mean[k]).sum()).collect();
        let q_lel = Matrix::from_fn(m_d, m_d, |i, j| (0..n_sen).map(|k| loadings[(k, i)] * einv[k] * loadings[(k, j)]).sum());
        let nn = h_nodes.rows();
        let mut p = Matrix::zeros(nn, m_d);
        let mut s_h = vec![T::zero(); nn];
        let mut q_hy = vec![T::zero(); nn];
        for n in 0..nn {
            let hn = h_nodes.row(n);
            let eh: Vec<T> = hn.iter().zip(&einv).map(|(&a, &b)| a * b).collect();
            s_h[n] = dot(&eh, hn);
            q_hy[n] = dot(&eh, &y_mean);
            for m in 0..m_d {
                p[(n, m)] = (0..n_sen).map(|k| loadings[(k, m)] * eh[k]).sum();
            }
        }
        Ok(NlmlContext {
            n_sen,
            n_r,
            m_d,
            weights,
            h: h_nodes,
            y,
            y_mean,
            sigma_e,
            loadings,
            log_det_e,
            s_yy,
            g,
            a_mean,
            q_lel,
            p,
            s_h,
            q_hy,
        })
    }

    pub fn n_sensors(&self) -> usize {
        self.n_sen
    }

    pub fn n_replications(&self) -> usize {
        self.n_r
    }

    pub fn n_modes(&self) -> usize {
        self.m_d
    }

    pub fn n_nodes(&self) -> usize {
        self.weights.len()
    }

    pub fn data_mean(&self) -> &[T] {
        &self.y_mean
    }

    /// Quadrature-weighted mean of the surrogate at the sensors.
    pub fn surrogate_mean(&self) -> Vec<T> {
        let mut m = vec![T::zero(); self.n_sen];
        for n in 0..self.n_nodes() {
            let w = self.weights[n];
            for (a, &h) in m.iter_mut().zip(self.h.row(n)) {
                *a += w * h;
            }
        }
        m
    }

    fn check(&self, rho: T, sigma_d: &[T]) -> Result<()> {
        if sigma_d.len() != self.m_d {
            return Err(Error::invalid(format!("{} mismatch parameters for {} modes", sigma_d.len(), self.m_d)));
        }
        if !(rho > T::zero()) || !rho.is_finite() || sigma_d.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("hyperparameters must be finite with ρ > 0"));
        }
        Ok(())
    }

    fn constant(&self) -> T {
        let nr = T::from_usize_lossy(self.n_r);
        T::from_usize_lossy(self.n_sen) * nr * T::lit(0.5) * T::lit(2.0 * std::f64::consts::PI).ln()
    }

    /// y*ₙ and ln det Σ through the capacitance matrix
    /// C = I + D Lᵀ Σ_e⁻¹ L D, D = diag(σ_d), using Σ_e diagonal.
    pub fn node_values(&self, rho: T, sigma_d: &[T]) -> Result<(Vec<T>, T)> {
        self.check(rho, sigma_d)?;
        let m = self.m_d;
        let cap = Matrix::from_fn(m, m, |i, j| {
            let id = if i == j { T::one() } else { T::zero() };
            id + sigma_d[i] * self.q_lel[(i, j)] * sigma_d[j]
        });
        let ch = Cholesky::factor(&cap)?;
        let log_det = self.log_det_e + ch.log_det();
        // S_A = s_yy − tr(C⁻¹ D G D)
        let dgd = Matrix::from_fn(m, m, |i, j| sigma_d[i] * self.g[(i, j)] * sigma_d[j]);
        let mut tr = T::zero();
        for j in 0..m {
            tr += ch.solve_vec(&dgd.column(j))[j];
        }
        let s_a = self.s_yy - tr;
        let mut b: Vec<T> = self.a_mean.iter().zip(sigma_d).map(|(&a, &s)| a * s).collect();
        ch.forward_in_place(&mut b);
        let nr = T::from_usize_lossy(self.n_r);
        let half = T::lit(0.5);
        let two = T::lit(2.0);
        let mut z = vec![T::zero(); m];
        let ys = (0..self.n_nodes())
            .map(|n| {
                for (k, zk) in z.iter_mut().enumerate() {
                    *zk = self.p[(n, k)] * sigma_d[k];
                }
                ch.forward_in_place(&mut z);
                let hay = self.q_hy[n] - dot(&z, &b);
                let hah = self.s_h[n] - dot(&z, &z);
                -half * (s_a - two * rho * nr * hay + nr * rho * rho * hah)
            })
            .collect();
        Ok((ys, log_det))
    }

    /// ϑ(ρ, σ_d).
    pub fn nlml(&self, rho: T, sigma_d: &[T]) -> Result<T> {
        let (ys, log_det) = self.node_values(rho, sigma_d)?;
        let lse = weighted_log_sum_exp(&ys, &self.weights)?;
        Ok(T::from_usize_lossy(self.n_r) * T::lit(0.5) * log_det + self.constant() - lse)
    }

    /// Same objective with a dense Cholesky factor of Σ = Σ_d + Σ_e.
    pub fn nlml_dense(&self, rho: T, sigma_d: &[T]) -> Result<T> {
        self.check(rho, sigma_d)?;
        let ns = self.n_sen;
        let mut sigma = Matrix::from_fn(ns, ns, |i, j| {
            (0..self.m_d).map(|m| self.loadings[(i, m)] * sigma_d[m] * sigma_d[m] * self.loadings[(j, m)]).sum()
        });
        for k in 0..ns {
            sigma[(k, k)] += self.sigma_e[k] * self.sigma_e[k];
        }
        let ch = Cholesky::factor(&sigma)?;
        let mut s_a = T::zero();
        for r in 0..self.n_r {
            s_a += ch.quad_form(&self.y.column(r));
        }
        let mut yb = self.y_mean.clone();
        ch.forward_in_place(&mut yb);
        let nr = T::from_usize_lossy(self.n_r);
        let (half, two) = (T::lit(0.5), T::lit(2.0));
        let ys: Vec<T> = (0..self.n_nodes())
            .map(|n| {
                let mut v = self.h.row(n).to_vec();
                ch.forward_in_place(&mut v);
                -half * (s_a - two * rho * nr * dot(&v, &yb) + nr * rho * rho * dot(&v, &v))
            })
            .collect();
        let lse = weighted_log_sum_exp(&ys, &self.weights)?;
        Ok(nr * half * ch.log_det() + self.constant() - lse)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadSettings<T> {
    pub max_iterations: usize,
    /// Stop when (f_worst − f_best) ≤ tolerance · (1 + |f_best|).
    pub tolerance: T,
    pub initial_step: T,
}

impl<T: Real> Default for NelderMeadSettings<T> {
    fn default() -> Self {
        NelderMeadSettings { max_iterations: 2000, tolerance: T::lit(1e-8), initial_step: T::lit(0.5) }
    }
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult<T> {
    pub x: Vec<T>,
    pub value: T,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Best value after each iteration.
    pub trace: Vec<T>,
}

/// Nelder–Mead with dimension-adapted coefficients. Non-finite objective
/// values are treated as +∞.
pub fn nelder_mead<T: Real>(mut f: impl FnMut(&[T]) -> T, x0: &[T], s: &NelderMeadSettings<T>) -> NelderMeadResult<T> {
    let n = x0.len();
    let nf = T::from_usize_lossy(n.max(1));
    let alpha = T::one();
    let beta = T::one() + T::lit(2.0) / nf;
    let gamma = T::lit(0.75) - T::one() / (T::lit(2.0) * nf);
    let delta = T::one() - T::one() / nf;
    let mut evals = 0usize;
    let mut eval = |x: &[T], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            T::infinity()
        }
    };
    let mut simplex: Vec<Vec<T>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += s.initial_step;
        simplex.push(x);
    }
    let mut fv: Vec<T> = simplex.iter().map(|x| eval(x, &mut evals)).collect();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let order = |fv: &[T]| {
        let mut idx: Vec<usize> = (0..fv.len()).collect();
        idx.sort_by(|&a, &b| fv[a].partial_cmp(&fv[b]).unwrap_or(std::cmp::Ordering::Equal));
        idx
    };
    while iterations < s.max_iterations {
        let idx = order(&fv);
        simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        fv = idx.iter().map(|&i| fv[i]).collect();
        let (best, worst) = (fv[0], fv[n]);
        if n == 0 || (best.is_finite() && worst - best <= s.tolerance * (T::one() + best.abs())) {
            converged = true;
            break;
        }
        iterations += 1;
        let mut c = vec![T::zero(); n];
        for x in &simplex[..n] {
            for (ci, &xi) in c.iter_mut().zip(x) {
                *ci += xi / nf;
            }
        }
        let along = |t: T| -> Vec<T> { c.iter().zip(&simplex[n]).map(|(&ci, &wi)| ci + t * (ci - wi)).collect() };
        let xr = along(alpha);
        let fr = eval(&xr, &mut evals);
        if fr < fv[0] {
            let xe = along(alpha * beta);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                simplex[n] = xe;
                fv[n] = fe;
            } else {
                simplex[n] = xr;
                fv[n] = fr;
            }
        } else if fr < fv[n - 1] {
            simplex[n] = xr;
            fv[n] = fr;
        } else {
            let outside = fr < fv[n];
            let xc = if outside { along(alpha * gamma) } else { along(-gamma) };
            let fc = eval(&xc, &mut evals);
            if (outside && fc <= fr) || (!outside && fc < fv[n]) {
                simplex[n] = xc;
                fv[n] = fc;
            } else {
                for i in 1..=n {
                    let x: Vec<T> =
                        simplex[0].iter().zip(&simplex[i]).map(|(&b, &xi)| b + delta * (xi - b)).collect();
                    fv[i] = eval(&x, &mut evals);
                    simplex[i] = x;
                }
            }
        }
        trace.push(fv.iter().copied().fold(T::infinity(), T::min));
    }
    let idx = order(&fv);
    NelderMeadResult {
        x: simplex[idx[0]].clone(),
        value: fv[idx[0]],
        iterations,
        evaluations: evals,
        converged,
        trace,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentifySettings<T> {
    pub starts: usize,
    pub restarts: usize,
    pub seed: u64,
    pub optimizer: NelderMeadSettings<T>,
    /// Spread of random starts around the initial guess, in log space.
    pub log_rho_spread: T,
    pub log_sigma_spread: T,
}

impl<T: Real> Default for IdentifySettings<T> {
    fn default() -> Self {
        IdentifySettings {
            starts: 8,
            restarts: 3,
            seed: 7,
            optimizer: NelderMeadSettings::default(),
            log_rho_spread: T::lit(0.25),
            log_sigma_spread: T::one(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StartRecord<T> {
    pub initial: Vec<T>,
    pub x: Vec<T>,
    pub value: T,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct Identification<T> {
    pub rho: T,
    pub sigma_d: Vec<T>,
    pub value: T,
    pub starts: Vec<StartRecord<T>>,
    /// Best value over all starts so far, per optimizer iteration, in start order.
    pub trace: Vec<T>,
}

/// Least-squares ρ and a common σ_d matching the residual variance at the mean.
pub fn initial_guess<T: Real>(ctx: &NlmlContext<T>) -> (T, Vec<T>) {
    let hbar = ctx.surrogate_mean();
    let ybar = ctx.data_mean();
    let hh = dot(&hbar, &hbar);
    let rho = if hh > T::zero() { (dot(&hbar, ybar) / hh).abs() } else { T::one() };
    let rho = if rho > T::zero() && rho.is_finite() { rho } else { T::one() };
    let mut resid = T::zero();
    for k in 0..ctx.n_sen {
        for r in 0..ctx.n_r {
            let d = ctx.y[(k, r)] - rho * hbar[k];
            resid += d * d - ctx.sigma_e[k] * ctx.sigma_e[k];
        }
    }
    let per = resid / T::from_usize_lossy(ctx.n_sen * ctx.n_r);
    let floor = ctx.sigma_e.iter().fold(T::zero(), |a, &s| a.max(s)) * T::lit(0.1);
    let var = per.max(floor * floor);
    let lam_sum: T = (0..ctx.m_d)
        .map(|m| (0..ctx.n_sen).map(|k| ctx.loadings[(k, m)] * ctx.loadings[(k, m)]).sum::<T>())
        .sum();
    let sigma = if lam_sum > T::zero() {
        (var * T::from_usize_lossy(ctx.n_sen) / lam_sum).sqrt()
    } else {
        T::one()
    };
    (rho, vec![sigma; ctx.m_d])
}

/// Minimizes ϑ over (ln ρ, ln σ_d) from several starts. Each start is refined
/// by warm restarts from its own optimum until the value stops improving.
pub fn identify<T: Real>(ctx: &NlmlContext<T>, settings: &IdentifySettings<T>) -> Result<Identification<T>> {
    if settings.starts == 0 {
        return Err(Error::invalid("at least one optimizer start is required"));
    }
    let (rho0, sig0) = initial_guess(ctx);
    let center: Vec<T> = std::iter::once(rho0.ln()).chain(sig0.iter().map(|s| s.ln())).collect();
    let objective = |theta: &[T]| -> T {
        let rho = theta[0].exp();
        let sig: Vec<T> = theta[1..].iter().map(|t| t.exp()).collect();
        ctx.nlml(rho, &sig).unwrap_or(T::infinity())
    };
    let mut records = Vec::with_capacity(settings.starts);
    let mut trace = Vec::new();
    let mut best_so_far = T::infinity();
    for s in 0..settings.starts {
        let initial = if s == 0 {
            center.clone()
        } else {
            let mut rng = StreamRng::new(settings.seed, Purpose::OptimizerStart, 0, s as u32);
            let z: Vec<f64> = normal_vec(&mut rng, center.len());
            center
                .iter()
                .enumerate()
                .map(|(i, &c)| {
                    let spread = if i == 0 { settings.log_rho_spread } else { settings.log_sigma_spread };
                    c + spread * T::lit(z[i])
                })
                .collect()
        };
        let mut x = initial.clone();
        let mut value = T::infinity();
        let mut iterations = 0;
        let mut evaluations = 0;
        let mut converged = false;
        for _ in 0..=settings.restarts {
            let r = nelder_mead(objective, &x, &settings.optimizer);
            iterations += r.iterations;
            evaluations += r.evaluations;
            for v in &r.trace {
                best_so_far = best_so_far.min(*v);
                trace.push(best_so_far);
            }
            let improved = value - r.value;
            let small = settings.optimizer.tolerance * (T::one() + r.value.abs());
            if r.value <= value {
                x = r.x;
                value = r.value;
            }
            converged = r.converged;
            if !(improved > small) {
                break;
            }
        }
        best_so_far = best_so_far.min(value);
        records.push(StartRecord { initial, x, value, iterations, evaluations, converged });
    }
    let ok: Vec<&StartRecord<T>> = records.iter().filter(|r| r.converged && r.value.is_finite()).collect();
    let Some(best) = ok.iter().min_by(|a, b| a.value.partial_cmp(&b.value).unwrap_or(std::cmp::Ordering::Equal)) else {
        return Err(Error::OptimizationFailure {
            starts: records
                .iter()
                .enumerate()
                .map(|(i, r)| StartReport {
                    start: i,
                    iterations: r.iterations,
                    best_value: r.value.to_f64_lossy(),
                    converged: r.converged,
                    message: if r.value.is_finite() {
                        "iteration limit reached".into()
                    } else {
                        "objective not finite".into()
                    },
                })
                .collect(),
        });
    };
    Ok(Identification {
        rho: best.x[0].exp(),
        sigma_d: best.x[1..].iter().map(|t| t.exp()).collect(),
        value: best.value,
        starts: records.clone(),
        trace,
    })
}

use astro_float::{BigFloat, Consts, RoundingMode};
use chaosfem_core::hyperopt::*;
use chaosfem_core::linalg::{Cholesky, Matrix};
use chaosfem_core::rng::{normal_vec, Purpose, StreamRng};
use proptest::prelude::*;

const P: usize = 256;
const RM: RoundingMode = RoundingMode::ToEven;

fn big(v: f64) -> BigFloat {
    BigFloat::from_f64(v, P)
}

fn to_f64(b: &BigFloat) -> f64 {
    let s = format!("{b}");
    s.parse().unwrap_or_else(|_| panic!("cannot parse {s}"))
}

/// ln Σ wₙ exp(vₙ) in 256-bit arithmetic, no shifting.
fn lse_reference(values: &[f64], weights: &[f64], cc: &mut Consts) -> BigFloat {
    let mut s = big(0.0);
    for (&v, &w) in values.iter().zip(weights) {
        s = s.add(&big(w).mul(&big(v).exp(P, RM, cc), P, RM), P, RM);
    }
    s.ln(P, RM, cc)
}

/// ϑ with every residual formed explicitly and summed in 256-bit arithmetic.
fn nlml_reference(h: &Matrix<f64>, w: &[f64], y: &Matrix<f64>, sigma: &Matrix<f64>, rho: f64) -> f64 {
    let mut cc = Consts::new().unwrap();
    let ch = Cholesky::factor(sigma).unwrap();
    let ns = y.rows();
    let inv = Matrix::from_fn(ns, ns, |i, j| {
        let mut e = vec![0.0; ns];
        e[j] = 1.0;
        ch.solve_vec(&e)[i]
    });
    let mut vals = Vec::new();
    for n in 0..h.rows() {
        let mut q = big(0.0);
        for r in 0..y.cols() {
            let res: Vec<BigFloat> = (0..ns).map(|k| big(y[(k, r)]).sub(&big(rho).mul(&big(h[(n, k)]), P, RM), P, RM)).collect();
            for i in 0..ns {
                for j in 0..ns {
                    q = q.add(&res[i].mul(&big(inv[(i, j)]), P, RM).mul(&res[j], P, RM), P, RM);
                }
            }
        }
        vals.push(q.mul(&big(-0.5), P, RM));
    }
    let mut s = big(0.0);
    for (v, &wn) in vals.iter().zip(w) {
        s = s.add(&big(wn).mul(&v.exp(P, RM, &mut cc), P, RM), P, RM);
    }
    let lse = s.ln(P, RM, &mut cc);
    let nr = y.cols() as f64;
    let c = 0.5 * nr * ch.log_det() + 0.5 * (ns as f64) * nr * (2.0 * std::f64::consts::PI).ln();
    to_f64(&big(c).sub(&lse, P, RM))
}

struct Problem {
    h: Matrix<f64>,
    w: Vec<f64>,
    y: Matrix<f64>,
    sigma_e: Vec<f64>,
    loadings: Matrix<f64>,
}

fn problem(seed: u64, nodes: usize, n_sen: usize, n_r: usize, m_d: usize, spread: f64) -> Problem {
    let mut rng = StreamRng::new(seed, Purpose::PriorSample, 1, 0);
    let mut g = |k: usize| normal_vec(&mut rng, k);
    let h = Matrix::from_row_major(nodes, n_sen, g(nodes * n_sen).into_iter().map(|v| v * spread).collect()).unwrap();
    let raw: Vec<f64> = g(nodes).into_iter().map(|v| v.abs() + 0.1).collect();
    let total: f64 = raw.iter().sum();
    let w = raw.iter().map(|v| v / total).collect();
    let y = Matrix::from_row_major(n_sen, n_r, g(n_sen * n_r)).unwrap();
    let sigma_e = g(n_sen).into_iter().map(|v| 0.2 + 0.1 * v.abs()).collect();
    let loadings = Matrix::from_row_major(n_sen, m_d, g(n_sen * m_d)).unwrap();
    Problem { h, w, y, sigma_e, loadings }
}

fn dense_sigma(p: &Problem, sd: &[f64]) -> Matrix<f64> {
    let n = p.sigma_e.len();
    Matrix::from_fn(n, n, |i, j| {
        let d: f64 = (0..sd.len()).map(|m| p.loadings[(i, m)] * sd[m] * sd[m] * p.loadings[(j, m)]).sum();
        d + if i == j { p.sigma_e[i] * p.sigma_e[i] } else { 0.0 }
    })
}

fn context(p: &Problem) -> NlmlContext<f64> {
    NlmlContext::new(p.h.clone(), p.w.clone(), p.y.clone(), p.sigma_e.clone(), p.loadings.clone()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lse_matches_extended_precision(values in proptest::collection::vec(-1e4f64..1e4, 1..40), seed in any::<u64>()) {
        let mut rng = StreamRng::new(seed, Purpose::PriorSample, 2, 0);
        let w: Vec<f64> = normal_vec(&mut rng, values.len()).into_iter().map(|v| v.abs() + 1e-3).collect();
        let got = weighted_log_sum_exp(&values, &w).unwrap();
        let mut cc = Consts::new().unwrap();
        let want = to_f64(&lse_reference(&values, &w, &mut cc));
        prop_assert!(got.is_finite());
        prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{got} vs {want}");
    }

    #[test]
    fn fast_and_dense_paths_agree(seed in any::<u64>(), n_sen in 1usize..6, n_r in 1usize..5, m_d in 1usize..4, rho in 0.3f64..3.0) {
        let p = problem(seed, 7, n_sen, n_r, m_d, 2.0);
        let ctx = context(&p);
        let sd: Vec<f64> = (0..m_d).map(|m| 0.3 + 0.4 * m as f64).collect();
        let a = ctx.nlml(rho, &sd).unwrap();
        let b = ctx.nlml_dense(rho, &sd).unwrap();
        prop_assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()), "{a} vs {b}");
        let r = nlml_reference(&p.h, &p.w, &p.y, &dense_sigma(&p, &sd), rho);
        prop_assert!((a - r).abs() < 1e-9 * (1.0 + r.abs()), "{a} vs {r}");
    }

    #[test]
    fn invariant_under_replication_permutation(seed in any::<u64>(), shift in 1usize..5) {
        let p = problem(seed, 5, 3, 5, 2, 1.0);
        let ctx = context(&p);
        let y2 = Matrix::from_fn(3, 5, |k, r| p.y[(k, (r + shift) % 5)]);
        let ctx2 = NlmlContext::new(p.h.clone(), p.w.clone(), y2, p.sigma_e.clone(), p.loadings.clone()).unwrap();
        let a = ctx.nlml(1.1, &[0.5, 0.7]).unwrap();
        let b = ctx2.nlml(1.1, &[0.5, 0.7]).unwrap();
        prop_assert!((a - b).abs() < 1e-11 * (1.0 + a.abs()));
    }
}

#[test]
fn large_exponents_stay_finite() {
    // residuals of order 10² against unit noise put y* near −10⁴
    let p = problem(17, 9, 4, 3, 2, 12.0);
    let ctx = context(&p);
    let sd = [0.2, 0.1];
    let (ys, _) = ctx.node_values(1.0, &sd).unwrap();
    let worst = ys.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    assert!(worst > 1e3 && worst < 1e5, "{worst}");
    let got = ctx.nlml(1.0, &sd).unwrap();
    assert!(got.is_finite());
    let want = nlml_reference(&p.h, &p.w, &p.y, &dense_sigma(&p, &sd), 1.0);
    assert!((got - want).abs() < 1e-9 * want.abs(), "{got} vs {want}");
}

#[test]
fn lse_edge_cases() {
    assert!(weighted_log_sum_exp::<f64>(&[], &[]).is_err());
    assert_eq!(weighted_log_sum_exp(&[3.0], &[1.0]).unwrap(), 3.0);
    let v: f64 = weighted_log_sum_exp(&[-1e6, -1e6], &[0.5, 0.5]).unwrap();
    assert!((v + 1e6).abs() < 1e-9);
}

#[test]
fn rejects_invalid_hyperparameters() {
    let p = problem(3, 4, 2, 2, 1, 1.0);
    let ctx = context(&p);
    assert!(ctx.nlml(0.0, &[1.0]).is_err());
    assert!(ctx.nlml(-1.0, &[1.0]).is_err());
    assert!(ctx.nlml(1.0, &[f64::NAN]).is_err());
    assert!(ctx.nlml(1.0, &[1.0, 2.0]).is_err());
}

#[test]
fn nelder_mead_minimizes_rosenbrock() {
    let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
    let s = NelderMeadSettings { max_iterations: 5000, tolerance: 1e-14, initial_step: 0.5 };
    let r = nelder_mead(f, &[-1.2, 1.0], &s);
    assert!(r.converged);
    assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
    assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn nelder_mead_in_higher_dimension() {
    let f = |x: &[f64]| x.iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * (v - 0.5).powi(2)).sum::<f64>();
    let r = nelder_mead(f, &[0.0; 6], &NelderMeadSettings { max_iterations: 20000, tolerance: 1e-14, initial_step: 0.5 });
    assert!(r.converged);
    assert!(r.x.iter().all(|v| (v - 0.5).abs() < 1e-4));
}

#[test]
fn identify_recovers_synthetic_hyperparameters() {
    // a deterministic surrogate at 3 nodes, data drawn from the assumed model
    let n_sen = 6;
    let n_r = 400;
    let sensors: Vec<Vec<f64>> = (1..=n_sen).map(|k| vec![k as f64]).collect();
    let basis = chaosfem_core::statfem::MismatchBasis::new(
        &sensors,
        &chaosfem_core::randomfield::Kernel::squared_exponential(vec![3.0]).unwrap(),
        chaosfem_core::randomfield::Truncation::Modes(2),
    )
    .unwrap();
    let u: Vec<f64> = (1..=n_sen).map(|k| k as f64).collect();
    let h = Matrix::from_fn(3, n_sen, |_, k| u[k]);
    let (rho, sd, noise) = (1.4, [1.5, 0.8], 0.1);
    let l = basis.loadings();
    let mut y = Matrix::zeros(n_sen, n_r);
    for r in 0..n_r {
        let mut rng = StreamRng::new(99, Purpose::Mismatch, 0, r as u32);
        let chi = normal_vec(&mut rng, 2);
        let e = normal_vec(&mut rng, n_sen);
        for k in 0..n_sen {
            y[(k, r)] = rho * u[k] + l[(k, 0)] * sd[0] * chi[0] + l[(k, 1)] * sd[1] * chi[1] + noise * e[k];
        }
    }
    let ctx = NlmlContext::new(h, vec![1.0 / 3.0; 3], y, vec![noise; n_sen], l.clone()).unwrap();
    let id = identify(&ctx, &IdentifySettings { starts: 3, ..IdentifySettings::default() }).unwrap();
    assert!((id.rho - rho).abs() < 0.05, "ρ = {}", id.rho);
    for (a, b) in id.sigma_d.iter().zip(&sd) {
        assert!((a.abs() - b).abs() < 0.1 * b, "{:?}", id.sigma_d);
    }
    assert!(id.trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
}

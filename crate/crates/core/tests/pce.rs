use chaosfem_core::fem::{bar_mesh, solve_bar, BarProblem};
use chaosfem_core::linalg::Matrix;
use chaosfem_core::pce::{checked_binomial, hermite_eval, pc_moments, pc_sample, project, PcBasis};
use chaosfem_core::quadrature::{smolyak, Growth};
use chaosfem_core::randomfield::{field_realize, kl_decompose, Kernel, LognormalLink, Truncation};
use chaosfem_core::rng::{normal_vec, Purpose, StreamRng};
use proptest::prelude::*;

proptest! {
    #[test]
    fn basis_size_and_order(m in 1usize..8, p in 0usize..5) {
        let b = PcBasis::<f64>::new(m, p).unwrap();
        prop_assert_eq!(b.len() as u128, checked_binomial((m + p) as u64, p as u64).unwrap());
        prop_assert!(b.multi_index(0).iter().all(|&k| k == 0));
        prop_assert_eq!(b.norms()[0], 1.0);
        let deg = |j: usize| b.multi_index(j).iter().sum::<u32>();
        for j in 1..b.len() {
            let (a, c) = (b.multi_index(j - 1), b.multi_index(j));
            prop_assert!(deg(j - 1) < deg(j) || (deg(j - 1) == deg(j) && a > c));
            let want: f64 = c.iter().map(|&k| (1..=k).map(f64::from).product::<f64>()).product();
            prop_assert_eq!(b.norms()[j], want);
        }
    }

    #[test]
    fn projection_recovers_a_chaos_polynomial(seed in any::<u64>()) {
        let (m, p) = (3, 2);
        let b = PcBasis::<f64>::new(m, p).unwrap();
        let mut rng = StreamRng::new(seed, Purpose::PriorSample, 0, 0);
        let c = normal_vec(&mut rng, b.len());
        let grid = smolyak::<f64>(m, p + 1, Growth::Linear).unwrap();
        let evals = Matrix::from_fn(grid.len(), 1, |n, _| b.eval_all(grid.node(n)).unwrap().iter().zip(&c).map(|(a, b)| a * b).sum());
        let f = project(&evals, &grid, &b, 1).unwrap();
        for j in 0..b.len() {
            prop_assert!((f.coefficients[(0, j)] - c[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn hermite_orthogonality(m in 1usize..4) {
        let b = PcBasis::<f64>::new(m, 2).unwrap();
        let grid = smolyak::<f64>(m, 3, Growth::Linear).unwrap();
        for i in 0..b.len() {
            for j in 0..b.len() {
                let q: f64 = grid.nodes().zip(grid.weights()).map(|(x, w)| w * hermite_eval(&b, i, x).unwrap() * hermite_eval(&b, j, x).unwrap()).sum();
                let want = if i == j { b.norms()[i] } else { 0.0 };
                prop_assert!((q - want).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn printed_term_counts() {
    assert_eq!(PcBasis::<f64>::new(10, 2).unwrap().len(), 66);
    assert_eq!(PcBasis::<f64>::new(13, 2).unwrap().len(), 105);
}

#[test]
fn oversized_basis_is_rejected() {
    assert!(PcBasis::<f64>::new(60, 8).is_err());
    assert_eq!(checked_binomial(4, 2), Some(6));
}

#[test]
fn bar_prior_tip_mean_matches_lognormal_oracle() {
    let (l, a, f, mu, sig) = (100.0, 20.0, 800.0, 200.0, 40.0);
    let mesh = bar_mesh(l, 100).unwrap();
    let kernel = Kernel::squared_exponential(vec![10.0]).unwrap();
    let kl = kl_decompose(&kernel, &mesh.centroids(), Some(&mesh.element_sizes()), Truncation::ExplainedVariance(0.01)).unwrap();
    let link = LognormalLink::new(mu, sig).unwrap();
    let solve = |xi: &[f64]| {
        let (_, e) = field_realize(&kl, &link, xi).unwrap();
        solve_bar(&BarProblem { mesh: &mesh, area: a, load: f, modulus: &e }).unwrap()
    };
    let m = kl.len();
    let grid = smolyak::<f64>(m, 3, Growth::Linear).unwrap();
    let rows: Vec<Vec<f64>> = grid.nodes().map(|x| solve(x)).collect();
    let evals = Matrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]);
    let field = project(&evals, &grid, &PcBasis::new(m, 2).unwrap(), 1).unwrap();
    let (mean, cov) = pc_moments(&field);
    let tip = mean.len() - 1;
    // E[1/E] for a lognormal E is (1 + σ²/μ²)/μ
    let oracle = f * l / a * (1.0 + sig * sig / (mu * mu)) / mu;
    assert!((mean[tip] / oracle - 1.0).abs() < 0.02, "{} vs {oracle}", mean[tip]);

    // Monte Carlo of the FE model through the same KL modes
    let n = 20_000;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    let mut draws = Matrix::zeros(2000, m);
    for r in 0..n {
        let mut rng = StreamRng::new(3, Purpose::PriorSample, 0, r);
        let xi = normal_vec(&mut rng, m);
        if r < 2000 {
            draws.row_mut(r as usize).copy_from_slice(&xi);
        }
        let u = solve(&xi)[tip];
        s1 += u;
        s2 += u * u;
    }
    let mc_mean = s1 / n as f64;
    let mc_var = s2 / n as f64 - mc_mean * mc_mean;
    assert!((mean[tip] - mc_mean).abs() < 4.0 * (mc_var / n as f64).sqrt() + 1e-3 * mc_mean);
    assert!((cov[(tip, tip)] / mc_var - 1.0).abs() < 0.05, "{} vs {mc_var}", cov[(tip, tip)]);

    // surrogate draws track the FE model
    let sur = pc_sample(&field, &draws).unwrap();
    for r in 0..20 {
        let fe = solve(draws.row(r))[tip];
        assert!((sur[(r, tip)] - fe).abs() < 0.02 * fe);
    }
}

#[test]
fn degenerate_field_has_zero_std() {
    let mesh = bar_mesh(10.0, 10).unwrap();
    let kernel = Kernel::squared_exponential(vec![1.0]).unwrap();
    let kl = kl_decompose(&kernel, &mesh.centroids(), None, Truncation::Modes(2)).unwrap();
    let link = LognormalLink::new(5.0, 0.0).unwrap();
    let grid = smolyak::<f64>(2, 2, Growth::Linear).unwrap();
    let rows: Vec<Vec<f64>> = grid
        .nodes()
        .map(|x| {
            let (_, e) = field_realize(&kl, &link, x).unwrap();
            solve_bar(&BarProblem { mesh: &mesh, area: 1.0, load: 1.0, modulus: &e }).unwrap()
        })
        .collect();
    let evals = Matrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]);
    let field = project(&evals, &grid, &PcBasis::new(2, 1).unwrap(), 1).unwrap();
    let (_, cov) = pc_moments(&field);
    assert!(cov.diagonal().iter().all(|v| v.abs() < 1e-20));
}

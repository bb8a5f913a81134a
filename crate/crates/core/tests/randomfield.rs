use chaosfem_core::fem::{bar_mesh, plate_with_hole, PlateGeometry};
use chaosfem_core::randomfield::{kl_decompose, Kernel, LognormalLink, Truncation};
use proptest::prelude::*;

proptest! {
    #[test]
    fn lognormal_link_matches_moments(mu in 0.1f64..1e6, cv in 0.0f64..2.0) {
        let sigma = mu * cv;
        let l = LognormalLink::<f64>::new(mu, sigma).unwrap();
        let want_mu = (mu * mu / (mu * mu + sigma * sigma).sqrt()).ln();
        let want_s2 = (1.0 + sigma * sigma / (mu * mu)).ln();
        prop_assert!((l.mu_kappa - want_mu).abs() < 1e-12 * want_mu.abs().max(1.0));
        prop_assert!((l.sigma_kappa.powi(2) - want_s2).abs() < 1e-12);
        // E[exp κ] recovers μ_E
        let mean = (l.mu_kappa + 0.5 * l.sigma_kappa.powi(2)).exp();
        prop_assert!((mean - mu).abs() < 1e-9 * mu);
    }

    #[test]
    fn kl_spectrum_is_ordered_and_modes_orthonormal(length in 2.0f64..60.0, eps in 0.001f64..0.2) {
        let mesh = bar_mesh(100.0, 40).unwrap();
        let k = Kernel::squared_exponential(vec![length]).unwrap();
        let w = mesh.element_sizes();
        let kl = kl_decompose(&k, &mesh.centroids(), Some(&w), Truncation::ExplainedVariance(eps)).unwrap();
        let s = kl.spectrum();
        prop_assert!(s.windows(2).all(|p| p[0] >= p[1]));
        prop_assert!(s.iter().all(|&v| v >= 0.0));
        prop_assert!(kl.explained_variance() > 1.0 - eps);
        let phi = kl.modes();
        for a in 0..kl.len() {
            for b in 0..kl.len() {
                let ip: f64 = (0..phi.rows()).map(|i| w[i] * phi[(i, a)] * phi[(i, b)]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                prop_assert!((ip - want).abs() < 1e-8, "⟨φ{a}, φ{b}⟩ = {ip}");
            }
        }
        // one fewer mode would not reach the threshold
        if kl.len() > 1 {
            let total: f64 = s.iter().sum();
            let short: f64 = s[..kl.len() - 1].iter().sum();
            prop_assert!(short / total <= 1.0 - eps);
        }
    }

    #[test]
    fn correlation_lengths_must_be_positive(l in -10.0f64..=0.0) {
        prop_assert!(Kernel::squared_exponential(vec![l]).is_err());
        prop_assert!(Kernel::matern52(vec![1.0, l]).is_err());
    }
}

#[test]
fn printed_link_values() {
    let a = LognormalLink::<f64>::new(200.0, 40.0).unwrap();
    assert!((a.mu_kappa - 5.2787).abs() < 1e-3);
    assert!((a.sigma_kappa - 0.1980).abs() < 1e-3);
    let b = LognormalLink::<f64>::new(200000.0, 30000.0).unwrap();
    assert!((b.mu_kappa - 12.195).abs() < 1e-2);
    assert!((b.sigma_kappa - 0.1492).abs() < 1e-2);
}

#[test]
fn kernel_values() {
    let se = Kernel::squared_exponential(vec![2.0]).unwrap();
    assert!((se.eval(&[1.0], &[3.0]) - (-0.5f64).exp()).abs() < 1e-15);
    let m = Kernel::matern52(vec![1.0, 1.0]).unwrap();
    assert_eq!(m.eval(&[0.3, 0.2], &[0.3, 0.2]), 1.0);
    // per-axis product
    let r = 5f64.sqrt();
    let one = (1.0 + r + r * r / 3.0) * (-r).exp();
    assert!((m.eval(&[0.0, 0.0], &[1.0, 1.0]) - one * one).abs() < 1e-14);
}

#[test]
fn mode_counts_at_one_percent() {
    let bar = bar_mesh(100.0, 100).unwrap();
    let k = Kernel::squared_exponential(vec![10.0]).unwrap();
    let kl = kl_decompose(&k, &bar.centroids(), Some(&bar.element_sizes()), Truncation::ExplainedVariance(0.01)).unwrap();
    assert_eq!(kl.len(), 10);
    let plate = plate_with_hole(&PlateGeometry::<f64>::standard()).unwrap();
    let k = Kernel::matern52(vec![0.16, 0.16]).unwrap();
    let kl = kl_decompose(&k, &plate.centroids(), Some(&plate.element_sizes()), Truncation::ExplainedVariance(0.01)).unwrap();
    assert_eq!(kl.len(), 13);
}

#[test]
fn fixed_mode_count() {
    let bar = bar_mesh(1.0, 20).unwrap();
    let k = Kernel::squared_exponential(vec![0.3]).unwrap();
    let kl = kl_decompose(&k, &bar.centroids(), None, Truncation::Modes(4)).unwrap();
    assert_eq!(kl.len(), 4);
    assert_eq!(kl.modes().cols(), 4);
    assert!(kl_decompose(&k, &bar.centroids(), None, Truncation::Modes(0)).is_err());
}

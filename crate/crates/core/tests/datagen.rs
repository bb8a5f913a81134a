use chaosfem_core::datagen::*;
use chaosfem_core::fem::{bar_mesh, plate_with_hole, NewtonSettings, PlateGeometry};
use chaosfem_core::randomfield::Kernel;
use chaosfem_core::statfem::row_means;
use proptest::prelude::*;

fn homogeneous(seed: u64, n_r: usize) -> BarHomogeneousSpec<f64> {
    BarHomogeneousSpec {
        length: 100.0,
        area: 20.0,
        load: 800.0,
        mu_e: 200.0,
        n_sensors: 9,
        n_replications: n_r,
        rho: 1.5,
        sigma_d: vec![3.0, 3.0],
        mismatch_kernel: Kernel::squared_exponential(vec![100.0]).unwrap(),
        noise_sigma: 0.1,
        seed,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn same_seed_same_data(seed in any::<u64>(), n_r in 1usize..20) {
        let a = gen_bar_homogeneous(&homogeneous(seed, n_r)).unwrap();
        let b = gen_bar_homogeneous(&homogeneous(seed, n_r)).unwrap();
        prop_assert_eq!(a.y.cols(), n_r);
        prop_assert_eq!(a.y, b.y);
    }

    #[test]
    fn replications_are_prefix_stable(seed in any::<u64>(), n_r in 1usize..10, extra in 1usize..10) {
        let a = gen_bar_homogeneous(&homogeneous(seed, n_r)).unwrap();
        let b = gen_bar_homogeneous(&homogeneous(seed, n_r + extra)).unwrap();
        for r in 0..n_r {
            prop_assert_eq!(a.y.column(r), b.y.column(r));
        }
    }

    #[test]
    fn sine_amplitude_validation(a in -3.0f64..3.0) {
        let mesh = bar_mesh(100.0, 50).unwrap();
        let spec = BarInhomogeneousSpec {
            mesh: &mesh, area: 20.0, load: 800.0, mu_e: 200.0, amplitude: a,
            n_sensors: 5, n_replications: 2, rho: 1.3, noise_sigma: 0.5, seed: 1,
        };
        let ok = gen_bar_inhomogeneous(&spec).is_ok();
        prop_assert_eq!(ok, sine_profile_min(a, 100.0) > 0.0);
        prop_assert_eq!(ok, a.abs() < 1.0);
    }
}

#[test]
fn homogeneous_bar_data_statistics() {
    let obs = gen_bar_homogeneous(&homogeneous(7, 4000)).unwrap();
    let mean = row_means(&obs.y);
    for (k, x) in obs.sensors.iter().enumerate() {
        let want = 1.5 * 800.0 * x[0] / (20.0 * 200.0);
        assert_eq!(obs.signal[k], want);
        // mismatch + noise std is at most ~4.3 per sensor
        assert!((mean[k] - want).abs() < 4.0 * 4.3 / 4000f64.sqrt());
    }
    assert_eq!(obs.meta.n_replications, 4000);
    assert_eq!(obs.component(0, Some(10)).unwrap().cols(), 10);
}

#[test]
fn sensors_are_equally_spaced() {
    let s = bar_sensors(100.0f64, 9);
    assert_eq!(s.len(), 9);
    assert!((s[0][0] - 10.0).abs() < 1e-12 && (s[8][0] - 90.0).abs() < 1e-12);
}

#[test]
fn sine_minimum() {
    assert!((sine_profile_min(0.75f64, 100.0) - 0.25).abs() < 1e-12);
    assert_eq!(sine_profile_min(0.0f64, 100.0), 1.0);
}

#[test]
fn plate_truth_ratio() {
    let mesh = plate_with_hole(&PlateGeometry::<f64>::standard()).unwrap();
    let spec = PlateSpec {
        mesh: &mesh,
        thickness: 0.01,
        nu: 0.5,
        traction: 30000.0,
        mu_e: 200000.0,
        ring_factors: vec![0.5, 0.6, 0.7, 0.8, 0.9],
        sensors: vec![mesh.node(0).to_vec()],
        n_replications: 3,
        noise_sigma: 0.001,
        physics: Physics::NeoHookean,
        newton: NewtonSettings::default(),
        seed: 1,
    };
    let nh = plate_truth(&spec).unwrap();
    let le = plate_truth(&PlateSpec { physics: Physics::LinearElastic, ring_factors: vec![], ..spec.clone() }).unwrap();
    let max = |u: &[f64]| (0..u.len() / 2).map(|n| u[2 * n]).fold(f64::MIN, f64::max);
    let ratio = max(&nh) / max(&le);
    assert!((1.1..=1.8).contains(&ratio), "{ratio}");
    let obs = gen_plate_nh(&spec).unwrap();
    assert_eq!((obs.y.rows(), obs.y.cols(), obs.dims), (2, 3, 2));
}

#[test]
fn ring_moduli_follow_tags() {
    let mesh = plate_with_hole(&PlateGeometry::<f64>::standard()).unwrap();
    let e = ring_moduli(&mesh, 10.0, &[0.5, 0.6]).unwrap();
    for (k, &t) in mesh.tags().iter().enumerate() {
        let want = match t {
            0 => 5.0,
            1 => 6.0,
            _ => 10.0,
        };
        assert_eq!(e[k], want);
    }
    assert!(ring_moduli(&mesh, 10.0, &[0.0]).is_err());
}

#[test]
fn farthest_point_layout() {
    let mesh = plate_with_hole(&PlateGeometry::<f64>::standard()).unwrap();
    let a = farthest_point_sensors(&mesh, 11, &[]).unwrap();
    let b = farthest_point_sensors(&mesh, 11, &[]).unwrap();
    assert_eq!(a, b);
    let mut u = a.clone();
    u.sort();
    u.dedup();
    assert_eq!(u.len(), 11);
    assert_eq!(a[..5], farthest_point_sensors(&mesh, 5, &[]).unwrap()[..]);
    assert!(farthest_point_sensors(&mesh, 10_000, &[]).is_err());
}

//! Synthetic observations for the three experiments.

use crate::error::{Error, Result};
use crate::fem::{solve_bar, BarProblem, LinearElasticSolver, Mesh, NeoHookeanSolver, NewtonSettings, PlaneStressProblem};
use crate::linalg::Matrix;
use crate::randomfield::{Kernel, Truncation};
use crate::rng::{normal_vec, Purpose, StreamRng};
use crate::scalar::Real;
use crate::statfem::{observation_matrix, MismatchBasis};
use serde::{Deserialize, Serialize};

/// Generation metadata, enough to regenerate the data from the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationMeta {
    pub generator: String,
    pub physics: String,
    pub seed: u64,
    pub rho: f64,
    pub sigma_d: Vec<f64>,
    pub noise_sigma: f64,
    pub n_sensors: usize,
    pub n_replications: usize,
    pub dims: usize,
}

/// Observation matrix Y with one row per (sensor, dimension), sensor-major,
/// and one column per replication.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet<T> {
    pub sensors: Vec<Vec<T>>,
    pub dims: usize,
    pub y: Matrix<T>,
    /// Noise-free part of the data, same row layout as `y`.
    pub signal: Vec<T>,
    pub meta: ObservationMeta,
}

impl<T: Real> ObservationSet<T> {
    pub fn n_sensors(&self) -> usize {
        self.sensors.len()
    }

    pub fn n_replications(&self) -> usize {
        self.y.cols()
    }

    /// [n_sen × n_r] block of one spatial dimension, optionally keeping only
    /// the first `n_r` replications.
    pub fn component(&self, dim: usize, n_r: Option<usize>) -> Result<Matrix<T>> {
        if dim >= self.dims {
            return Err(Error::invalid(format!("dimension {dim} out of range")));
        }
        let cols = n_r.unwrap_or(self.y.cols());
        if cols == 0 || cols > self.y.cols() {
            return Err(Error::invalid(format!("{cols} replications requested, {} available", self.y.cols())));
        }
        Ok(Matrix::from_fn(self.n_sensors(), cols, |s, r| self.y[(s * self.dims + dim, r)]))
    }
}

/// n equally spaced interior points X_k = kL/(n+1).
pub fn bar_sensors<T: Real>(length: T, n: usize) -> Vec<Vec<T>> {
    let d = T::from_usize_lossy(n + 1);
    (1..=n).map(|k| vec![length * T::from_usize_lossy(k) / d]).collect()
}

#[derive(Debug, Clone)]
pub struct BarHomogeneousSpec<T> {
    pub length: T,
    pub area: T,
    pub load: T,
    pub mu_e: T,
    pub n_sensors: usize,
    pub n_replications: usize,
    pub rho: T,
    pub sigma_d: Vec<T>,
    pub mismatch_kernel: Kernel<T>,
    pub noise_sigma: T,
    pub seed: u64,
}

fn add_mismatch_and_noise<T: Real>(
    signal: &[T],
    basis: Option<&MismatchBasis<T>>,
    sigma_d: &[T],
    noise: T,
    n_r: usize,
    seed: u64,
    dim: u8,
    dims: usize,
    y: &mut Matrix<T>,
) {
    let n_sen = signal.len();
    for r in 0..n_r {
        let mut d = vec![T::zero(); n_sen];
        if let Some(b) = basis {
            let chi = normal_vec(&mut StreamRng::new(seed, Purpose::Mismatch, dim, r as u32), sigma_d.len());
            for k in 0..n_sen {
                for (m, &c) in chi.iter().enumerate() {
                    d[k] += b.loadings()[(k, m)] * sigma_d[m] * T::lit(c);
                }
            }
        }
        let zeta = normal_vec(&mut StreamRng::new(seed, Purpose::Noise, dim, r as u32), n_sen);
        for k in 0..n_sen {
            y[(k * dims + dim as usize, r)] = signal[k] + d[k] + noise * T::lit(zeta[k]);
        }
    }
}

/// y = ρ F X/(A μ_E) + d(χ) + e(ζ) at equally spaced sensors.
pub fn gen_bar_homogeneous<T: Real>(s: &BarHomogeneousSpec<T>) -> Result<ObservationSet<T>> {
    if s.n_sensors == 0 || s.n_replications == 0 {
        return Err(Error::invalid("need at least one sensor and one replication"));
    }
    if !(s.noise_sigma >= T::zero()) || !(s.rho > T::zero()) || !(s.mu_e > T::zero()) || !(s.area > T::zero()) {
        return Err(Error::invalid("noise must be nonnegative; ρ, μ_E and area positive"));
    }
    let sensors = bar_sensors(s.length, s.n_sensors);
    let signal: Vec<T> = sensors.iter().map(|x| s.rho * s.load * x[0] / (s.area * s.mu_e)).collect();
    let basis = if s.sigma_d.is_empty() {
        None
    } else {
        if s.n_sensors < 2 || s.sigma_d.len() > s.n_sensors {
            return Err(Error::invalid("mismatch needs M_d ≤ n_sen and at least two sensors"));
        }
        Some(MismatchBasis::new(&sensors, &s.mismatch_kernel, Truncation::Modes(s.sigma_d.len()))?)
    };
    let mut y = Matrix::zeros(s.n_sensors, s.n_replications);
    add_mismatch_and_noise(&signal, basis.as_ref(), &s.sigma_d, s.noise_sigma, s.n_replications, s.seed, 0, 1, &mut y);
    Ok(ObservationSet {
        sensors,
        dims: 1,
        y,
        signal,
        meta: ObservationMeta {
            generator: "bar-homogeneous".into(),
            physics: "analytical".into(),
            seed: s.seed,
            rho: s.rho.to_f64_lossy(),
            sigma_d: s.sigma_d.iter().map(|v| v.to_f64_lossy()).collect(),
            noise_sigma: s.noise_sigma.to_f64_lossy(),
            n_sensors: s.n_sensors,
            n_replications: s.n_replications,
            dims: 1,
        },
    })
}

#[derive(Debug, Clone)]
pub struct BarInhomogeneousSpec<'a, T> {
    pub mesh: &'a Mesh<T>,
    pub area: T,
    pub load: T,
    pub mu_e: T,
    pub amplitude: T,
    pub n_sensors: usize,
    pub n_replications: usize,
    pub rho: T,
    pub noise_sigma: T,
    pub seed: u64,
}

/// min over X ∈ [0, L] of a·sin(X/10) + 1, evaluated exactly at the interval
/// ends and at interior critical points.
pub fn sine_profile_min<T: Real>(amplitude: T, length: T) -> T {
    let tmax = (length / T::lit(10.0)).to_f64_lossy();
    let a = amplitude.to_f64_lossy();
    let mut cands = vec![0.0, tmax];
    let mut t = std::f64::consts::FRAC_PI_2;
    while t <= tmax {
        cands.push(t);
        t += std::f64::consts::PI;
    }
    T::lit(cands.iter().map(|&t| a * t.sin() + 1.0).fold(f64::INFINITY, f64::min))
}

/// E(X) = μ_E(a·sin(X/10) + 1) at element centroids, solved with the bar FEM;
/// y = ρHu + e.
pub fn gen_bar_inhomogeneous<T: Real>(s: &BarInhomogeneousSpec<'_, T>) -> Result<ObservationSet<T>> {
    let (x0, x1) = s.mesh.bounds(0);
    let length = x1 - x0;
    let min = sine_profile_min(s.amplitude, length);
    if !(min > T::zero()) {
        return Err(Error::invalid(format!(
            "sine modulus with amplitude {} is nonpositive on the bar (min factor {min})",
            s.amplitude
        )));
    }
    if s.n_sensors == 0 || s.n_replications == 0 {
        return Err(Error::invalid("need at least one sensor and one replication"));
    }
    let ten = T::lit(10.0);
    let e: Vec<T> = s.mesh.centroids().iter().map(|c| s.mu_e * (s.amplitude * (c[0] / ten).sin() + T::one())).collect();
    let u = solve_bar(&BarProblem { mesh: s.mesh, area: s.area, load: s.load, modulus: &e })?;
    let sensors: Vec<Vec<T>> = bar_sensors(length, s.n_sensors).into_iter().map(|x| vec![x[0] + x0]).collect();
    let h = observation_matrix(s.mesh, &sensors)?;
    let signal: Vec<T> = h.matvec(&u)?.into_iter().map(|v| v * s.rho).collect();
    let mut y = Matrix::zeros(s.n_sensors, s.n_replications);
    add_mismatch_and_noise(&signal, None, &[], s.noise_sigma, s.n_replications, s.seed, 0, 1, &mut y);
    Ok(ObservationSet {
        sensors,
        dims: 1,
        y,
        signal,
        meta: ObservationMeta {
            generator: "bar-inhomogeneous".into(),
            physics: "linear-elastic".into(),
            seed: s.seed,
            rho: s.rho.to_f64_lossy(),
            sigma_d: Vec::new(),
            noise_sigma: s.noise_sigma.to_f64_lossy(),
            n_sensors: s.n_sensors,
            n_replications: s.n_replications,
            dims: 1,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Physics {
    #[default]
    NeoHookean,
    LinearElastic,
}

#[derive(Debug, Clone)]
pub struct PlateSpec<'a, T> {
    pub mesh: &'a Mesh<T>,
    pub thickness: T,
    pub nu: T,
    pub traction: T,
    pub mu_e: T,
    /// Modulus factors for elements tagged 0, 1, ... (innermost first); other
    /// tags keep μ_E.
    pub ring_factors: Vec<T>,
    pub sensors: Vec<Vec<T>>,
    pub n_replications: usize,
    pub noise_sigma: T,
    pub physics: Physics,
    pub newton: NewtonSettings<T>,
    pub seed: u64,
}

/// Damaged plate moduli by ring tag.
pub fn ring_moduli<T: Real>(mesh: &Mesh<T>, mu_e: T, factors: &[T]) -> Result<Vec<T>> {
    if factors.iter().any(|&f| !(f > T::zero())) {
        return Err(Error::invalid("ring factors must be positive"));
    }
    Ok(mesh
        .tags()
        .iter()
        .map(|&t| if t >= 0 && (t as usize) < factors.len() { mu_e * factors[t as usize] } else { mu_e })
        .collect())
}

/// Full-field displacement of the damaged plate under the chosen physics.
pub fn plate_truth<T: Real>(s: &PlateSpec<'_, T>) -> Result<Vec<T>> {
    let e = ring_moduli(s.mesh, s.mu_e, &s.ring_factors)?;
    let p = PlaneStressProblem { mesh: s.mesh, thickness: s.thickness, nu: s.nu, traction: s.traction, modulus: &e };
    match s.physics {
        Physics::NeoHookean => NeoHookeanSolver::new(&p)?.solve(&s.newton),
        Physics::LinearElastic => LinearElasticSolver::new(&p)?.solve(&e, T::one()),
    }
}

/// Plate data: sensor displacements in x and y plus independent noise.
pub fn gen_plate_nh<T: Real>(s: &PlateSpec<'_, T>) -> Result<ObservationSet<T>> {
    if s.sensors.is_empty() || s.n_replications == 0 {
        return Err(Error::invalid("need at least one sensor and one replication"));
    }
    let u = plate_truth(s)?;
    let h = observation_matrix(s.mesh, &s.sensors)?;
    let n_sen = s.sensors.len();
    let mut signal = vec![T::zero(); 2 * n_sen];
    for d in 0..2 {
        let comp: Vec<T> = (0..s.mesh.n_nodes()).map(|n| u[2 * n + d]).collect();
        for (k, v) in h.matvec(&comp)?.into_iter().enumerate() {
            signal[2 * k + d] = v;
        }
    }
    let mut y = Matrix::zeros(2 * n_sen, s.n_replications);
    for d in 0..2u8 {
        let sig: Vec<T> = (0..n_sen).map(|k| signal[2 * k + d as usize]).collect();
        add_mismatch_and_noise(&sig, None, &[], s.noise_sigma, s.n_replications, s.seed, d, 2, &mut y);
    }
    Ok(ObservationSet {
        sensors: s.sensors.clone(),
        dims: 2,
        y,
        signal,
        meta: ObservationMeta {
            generator: "plate-hole".into(),
            physics: match s.physics {
                Physics::NeoHookean => "neo-hookean".into(),
                Physics::LinearElastic => "linear-elastic".into(),
            },
            seed: s.seed,
            rho: 1.0,
            sigma_d: Vec::new(),
            noise_sigma: s.noise_sigma.to_f64_lossy(),
            n_sensors: n_sen,
            n_replications: s.n_replications,
            dims: 2,
        },
    })
}

/// Deterministic farthest-point selection of `count` mesh nodes, skipping the
/// nodes in `exclude`. The first pick is the node with the largest x (lowest
/// |y| on ties); each further pick maximizes the distance to those chosen,
/// ties going to the lower node id.
pub fn farthest_point_sensors<T: Real>(mesh: &Mesh<T>, count: usize, exclude: &[usize]) -> Result<Vec<usize>> {
    let cand: Vec<usize> = (0..mesh.n_nodes()).filter(|n| !exclude.contains(n)).collect();
    if count > cand.len() {
        return Err(Error::invalid(format!("{count} sensors requested, {} candidate nodes", cand.len())));
    }
    let mut chosen = Vec::with_capacity(count);
    if count == 0 {
        return Ok(chosen);
    }
    let first = *cand
        .iter()
        .max_by(|&&a, &&b| {
            let (pa, pb) = (mesh.node(a), mesh.node(b));
            let ya = pa.get(1).copied().unwrap_or(T::zero()).abs();
            let yb = pb.get(1).copied().unwrap_or(T::zero()).abs();
            pa[0].partial_cmp(&pb[0]).unwrap().then(yb.partial_cmp(&ya).unwrap()).then(b.cmp(&a))
        })
        .expect("candidates");
    chosen.push(first);
    let dist = |a: usize, b: usize| -> T {
        mesh.node(a).iter().zip(mesh.node(b)).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>()
    };
    let mut dmin: Vec<T> = cand.iter().map(|&c| dist(c, first)).collect();
    while chosen.len() < count {
        let mut best = 0;
        for i in 1..cand.len() {
            if dmin[i] > dmin[best] {
                best = i;
            }
        }
        let pick = cand[best];
        chosen.push(pick);
        for (i, &c) in cand.iter().enumerate() {
            dmin[i] = dmin[i].min(dist(c, pick));
        }
    }
    Ok(chosen)
}

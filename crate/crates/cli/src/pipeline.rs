//! In-process experiment stages: prior, data, identification, assimilation.

use crate::config::{Config, NlmlQuadrature, Problem};
use chaosfem_core::datagen::{
    bar_sensors, farthest_point_sensors, gen_bar_homogeneous, gen_bar_inhomogeneous, gen_plate_nh, plate_truth,
    BarHomogeneousSpec, BarInhomogeneousSpec, ObservationSet, PlateSpec,
};
use chaosfem_core::fem::{
    bar_mesh, plate_with_hole, solve_bar, BarProblem, LinearElasticSolver, Mesh, NewtonSettings, PlaneStressProblem,
    PlateGeometry,
};
use chaosfem_core::hyperopt::{identify, Identification, IdentifySettings, NelderMeadSettings, NlmlContext};
use chaosfem_core::linalg::Matrix;
use chaosfem_core::pce::{pc_moments, project, weighted_std, PcBasis, PcField};
use chaosfem_core::quadrature::{smolyak, tensor_grid, SparseGrid};
use chaosfem_core::randomfield::{field_realize, kl_decompose, Kernel, KlExpansion, LognormalLink, Truncation};
use chaosfem_core::rng::{normal_vec, Purpose, StreamRng};
use chaosfem_core::statfem::{
    assemble_extended, err_metric, gmkf_update, kalman_gain, mismatch_factors, posterior_moments, rmsd, row_means,
    true_response, GainForm, MismatchBasis, PosteriorResult,
};
use chaosfem_core::Error as CoreError;
use serde::Serialize;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorKind {
    Config,
    Numerical,
    Optimization,
    Io,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config | ErrorKind::Io => 2,
            ErrorKind::Numerical => 3,
            ErrorKind::Optimization => 4,
        }
    }
}

/// Failure of one pipeline stage, serialized as the CLI's error JSON.
#[derive(Debug, Clone, Serialize)]
pub struct StageError {
    pub error: ErrorKind,
    pub stage: String,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub details: Vec<String>,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({:?}): {}", self.stage, self.error, self.message)
    }
}

impl std::error::Error for StageError {}

impl StageError {
    pub fn new(error: ErrorKind, stage: &str, message: impl Into<String>) -> Self {
        StageError { error, stage: stage.into(), message: message.into(), details: Vec::new() }
    }

    pub fn from_core(stage: &str, e: CoreError) -> Self {
        let kind = match e.root() {
            CoreError::InvalidArgument(_) | CoreError::Shape(_) => ErrorKind::Config,
            CoreError::NumericalFailure(_) | CoreError::AtNode { .. } => ErrorKind::Numerical,
            CoreError::OptimizationFailure { .. } => ErrorKind::Optimization,
        };
        let details = match e.root() {
            CoreError::OptimizationFailure { starts } => starts.iter().map(|s| s.to_string()).collect(),
            _ => Vec::new(),
        };
        StageError { error: kind, stage: stage.into(), message: e.to_string(), details }
    }
}

pub type StageResult<T> = std::result::Result<T, StageError>;

trait Stage<T> {
    fn stage(self, name: &str) -> StageResult<T>;
}

impl<T> Stage<T> for chaosfem_core::Result<T> {
    fn stage(self, name: &str) -> StageResult<T> {
        self.map_err(|e| StageError::from_core(name, e))
    }
}

/// Mesh, sensors and the discretized random fields of an experiment.
pub struct Setup {
    pub mesh: Mesh<f64>,
    pub sensors: Vec<Vec<f64>>,
    pub h: Matrix<f64>,
    pub kl: KlExpansion<f64>,
    pub link: LognormalLink<f64>,
    pub mismatch: MismatchBasis<f64>,
    pub dims: usize,
}

fn read_sensor_file(cfg: &Config, path: &std::path::Path) -> StageResult<Vec<Vec<f64>>> {
    let p = cfg.resolve(path);
    let text = std::fs::read_to_string(&p)
        .map_err(|e| StageError::new(ErrorKind::Io, "setup", format!("{}: {e}", p.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
        match v {
            Ok(v) if v.len() == 2 => out.push(v),
            _ => return Err(StageError::new(ErrorKind::Config, "setup", format!("{}:{}: expected `x y`", p.display(), i + 1))),
        }
    }
    Ok(out)
}

pub fn plate_geometry(cfg: &Config) -> PlateGeometry<f64> {
    let g = &cfg.geometry;
    let d = PlateGeometry::<f64>::standard();
    PlateGeometry {
        width: g.width.unwrap_or(d.width),
        height: g.height.unwrap_or(d.height),
        radius: g.radius.unwrap_or(d.radius),
        n_theta: g.n_theta.unwrap_or(d.n_theta),
        n_rings: g.n_rings.unwrap_or(d.n_rings),
        grading: g.grading.unwrap_or(d.grading),
    }
}

pub fn build_mesh(cfg: &Config) -> StageResult<Mesh<f64>> {
    let g = &cfg.geometry;
    if cfg.is_plate() {
        match &g.mesh_file {
            Some(f) => {
                let p = cfg.resolve(f);
                let text = std::fs::read_to_string(&p)
                    .map_err(|e| StageError::new(ErrorKind::Io, "setup", format!("{}: {e}", p.display())))?;
                Mesh::parse(&text).stage("setup")
            }
            None => plate_with_hole(&plate_geometry(cfg)).stage("setup"),
        }
    } else {
        bar_mesh(g.length.unwrap_or(0.0), g.elements.unwrap_or(0)).stage("setup")
    }
}

fn plate_problem<'a>(cfg: &Config, mesh: &'a Mesh<f64>, modulus: &'a [f64]) -> PlaneStressProblem<'a, f64> {
    let g = &cfg.geometry;
    PlaneStressProblem {
        mesh,
        thickness: g.thickness.unwrap_or(0.01),
        nu: g.nu.unwrap_or(0.5),
        traction: g.traction.unwrap_or(0.0),
        modulus,
    }
}

pub fn setup(cfg: &Config) -> StageResult<Setup> {
    let mesh = build_mesh(cfg)?;
    let dims = cfg.spatial_dim();
    let sensors = if cfg.is_plate() {
        match (&cfg.model.sensor_file, cfg.model.sensor_layout) {
            (Some(f), _) => read_sensor_file(cfg, f)?,
            (None, Some(n)) => {
                let ones = vec![1.0; mesh.n_elements()];
                let fixed = plate_problem(cfg, &mesh, &ones).fixed_nodes();
                farthest_point_sensors(&mesh, n, &fixed)
                    .stage("setup")?
                    .into_iter()
                    .map(|i| mesh.node(i).to_vec())
                    .collect()
            }
            (None, None) => unreachable!("validated"),
        }
    } else {
        bar_sensors(cfg.geometry.length.unwrap_or(0.0), cfg.model.n_sensors.unwrap_or(0))
    };
    let h = chaosfem_core::statfem::observation_matrix(&mesh, &sensors).stage("setup")?;
    let f = &cfg.field;
    let kernel = Kernel::new(f.kernel, f.lengths.clone()).stage("setup")?;
    let trunc = match (f.epsilon, f.modes) {
        (Some(e), _) => Truncation::ExplainedVariance(e),
        (None, Some(m)) => Truncation::Modes(m),
        _ => unreachable!("validated"),
    };
    let kl = kl_decompose(&kernel, &mesh.centroids(), Some(&mesh.element_sizes()), trunc).stage("prior")?;
    let link = LognormalLink::new(f.mu_e, f.sigma_e).stage("setup")?;
    let m = &cfg.model;
    let mk = Kernel::new(m.mismatch_kernel, m.mismatch_lengths.clone()).stage("setup")?;
    let mt = match (m.mismatch_modes, m.mismatch_epsilon) {
        (Some(k), _) => Truncation::Modes(k),
        (None, Some(e)) => Truncation::ExplainedVariance(e),
        _ => unreachable!("validated"),
    };
    let mismatch = MismatchBasis::new(&sensors, &mk, mt).stage("setup")?;
    Ok(Setup { mesh, sensors, h, kl, link, mismatch, dims })
}

/// Polynomial-chaos prior of the nodal displacements.
pub struct Prior {
    pub field: PcField<f64>,
    pub m_kappa: usize,
    pub grid_nodes: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Deterministic FE response for one germ, node-major rows (x[, y] per node).
pub fn forward_model<'a>(cfg: &'a Config, s: &'a Setup) -> StageResult<impl Fn(&[f64]) -> chaosfem_core::Result<Vec<f64>> + Sync + 'a> {
    let g = &cfg.geometry;
    let le = if cfg.is_plate() {
        let p = plate_problem(cfg, &s.mesh, &[]);
        Some(LinearElasticSolver::for_mesh(&s.mesh, p.thickness, p.nu, p.traction).stage("prior")?)
    } else {
        None
    };
    Ok(move |xi: &[f64]| -> chaosfem_core::Result<Vec<f64>> {
        let (_, e) = field_realize(&s.kl, &s.link, xi)?;
        match &le {
            Some(solver) => solver.solve(&e, 1.0),
            None => solve_bar(&BarProblem {
                mesh: &s.mesh,
                area: g.area.unwrap_or(1.0),
                load: g.load.unwrap_or(0.0),
                modulus: &e,
            }),
        }
    })
}

pub fn build_prior(cfg: &Config, s: &Setup) -> StageResult<Prior> {
    let m = s.kl.len();
    let grid = smolyak::<f64>(m, cfg.pce.level(), cfg.pce.growth).stage("prior")?;
    let model = forward_model(cfg, s)?;
    let evals = grid.evaluate(&model).stage("prior")?;
    let width = evals.first().map_or(0, Vec::len);
    let flat: Vec<f64> = evals.into_iter().flatten().collect();
    let evals = Matrix::from_row_major(grid.len(), width, flat).stage("prior")?;
    let basis = PcBasis::new(m, cfg.pce.order).stage("prior")?;
    let field = project(&evals, &grid, &basis, s.dims).stage("prior")?;
    Ok(prior_from_field(field, grid.len()))
}

pub fn prior_from_field(field: PcField<f64>, grid_nodes: usize) -> Prior {
    let mean = field.coefficients.column(0);
    let std = weighted_std(&field.coefficients, field.basis.norms());
    Prior { m_kappa: field.basis.dim(), grid_nodes, mean, std, field }
}

/// Observations plus the noise-free nodal field of the data-generating model.
pub struct Data {
    pub obs: ObservationSet<f64>,
    pub truth: Vec<f64>,
}

pub fn generate(cfg: &Config, s: &Setup, seed: u64) -> StageResult<Data> {
    let d = &cfg.data;
    let g = &cfg.geometry;
    let noise = d.noise_sigma.unwrap_or(cfg.model.noise_sigma);
    match cfg.problem {
        Problem::BarHomogeneous => {
            let mk = Kernel::new(cfg.model.mismatch_kernel, cfg.model.mismatch_lengths.clone()).stage("generate")?;
            let spec = BarHomogeneousSpec {
                length: g.length.unwrap_or(0.0),
                area: g.area.unwrap_or(0.0),
                load: g.load.unwrap_or(0.0),
                mu_e: cfg.field.mu_e,
                n_sensors: s.sensors.len(),
                n_replications: d.replications,
                rho: d.rho,
                sigma_d: d.sigma_d.clone(),
                mismatch_kernel: mk,
                noise_sigma: noise,
                seed,
            };
            let obs = gen_bar_homogeneous(&spec).stage("generate")?;
            let truth = (0..s.mesh.n_nodes())
                .map(|n| d.rho * spec.load * s.mesh.node(n)[0] / (spec.area * spec.mu_e))
                .collect();
            Ok(Data { obs, truth })
        }
        Problem::BarInhomogeneous => {
            let spec = BarInhomogeneousSpec {
                mesh: &s.mesh,
                area: g.area.unwrap_or(0.0),
                load: g.load.unwrap_or(0.0),
                mu_e: cfg.field.mu_e,
                amplitude: d.amplitude.unwrap_or(0.75),
                n_sensors: s.sensors.len(),
                n_replications: d.replications,
                rho: d.rho,
                noise_sigma: noise,
                seed,
            };
            let obs = gen_bar_inhomogeneous(&spec).stage("generate")?;
            let e: Vec<f64> = s
                .mesh
                .centroids()
                .iter()
                .map(|c| spec.mu_e * (spec.amplitude * (c[0] / 10.0).sin() + 1.0))
                .collect();
            let u = solve_bar(&BarProblem { mesh: &s.mesh, area: spec.area, load: spec.load, modulus: &e }).stage("generate")?;
            Ok(Data { obs, truth: u.into_iter().map(|v| v * d.rho).collect() })
        }
        Problem::PlateHole => {
            let spec = PlateSpec {
                mesh: &s.mesh,
                thickness: g.thickness.unwrap_or(0.01),
                nu: g.nu.unwrap_or(0.5),
                traction: g.traction.unwrap_or(0.0),
                mu_e: cfg.field.mu_e,
                ring_factors: d.ring_factors.clone().unwrap_or_else(|| vec![0.5, 0.6, 0.7, 0.8, 0.9]),
                sensors: s.sensors.clone(),
                n_replications: d.replications,
                noise_sigma: noise,
                physics: d.physics,
                newton: NewtonSettings::default(),
                seed,
            };
            let truth = plate_truth(&spec).stage("generate")?;
            let obs = gen_plate_nh(&spec).stage("generate")?;
            Ok(Data { obs, truth })
        }
    }
}

/// Quadrature grid used inside the marginal likelihood.
pub fn nlml_grid(cfg: &Config, m: usize) -> StageResult<SparseGrid<f64>> {
    let i = &cfg.identify;
    let fits = |order: usize| (order as f64).powi(m as i32) <= i.max_nodes as f64;
    let r = match i.quadrature {
        NlmlQuadrature::Tensor => tensor_grid(m, i.tensor_order.unwrap_or(3)),
        NlmlQuadrature::Smolyak => smolyak(m, i.smolyak_level.unwrap_or(cfg.pce.level()), cfg.pce.growth),
        NlmlQuadrature::Auto => match i.tensor_order {
            Some(o) => tensor_grid(m, o),
            None if fits(3) => tensor_grid(m, 3),
            None if fits(2) => tensor_grid(m, 2),
            None => smolyak(m, i.smolyak_level.unwrap_or(cfg.pce.level()), cfg.pce.growth),
        },
    };
    r.stage("identify")
}

pub fn identify_replications(cfg: &Config) -> usize {
    cfg.identify.replications.unwrap_or(cfg.data.replications)
}

pub fn assimilate_replications(cfg: &Config) -> usize {
    cfg.assimilate.replications.or(cfg.identify.replications).unwrap_or(cfg.data.replications)
}

fn identify_settings(cfg: &Config) -> IdentifySettings<f64> {
    let i = &cfg.identify;
    IdentifySettings {
        starts: i.starts,
        restarts: i.restarts,
        seed: i.seed,
        optimizer: NelderMeadSettings { max_iterations: i.max_iterations, tolerance: i.tolerance, initial_step: 0.5 },
        ..IdentifySettings::default()
    }
}

/// Builds the marginal-likelihood context of one spatial dimension.
pub fn nlml_context(cfg: &Config, s: &Setup, prior: &Prior, obs: &ObservationSet<f64>, dim: usize, n_r: usize) -> StageResult<NlmlContext<f64>> {
    let comp = prior.field.component(dim).stage("identify")?;
    let hc = s.h.matmul(&comp.coefficients).stage("identify")?;
    let grid = nlml_grid(cfg, comp.basis.dim())?;
    let n_sen = s.sensors.len();
    let mut hn = Matrix::zeros(grid.len(), n_sen);
    for (n, xi) in grid.nodes().enumerate() {
        let psi = comp.basis.eval_all(xi).stage("identify")?;
        let v = hc.matvec(&psi).stage("identify")?;
        hn.row_mut(n).copy_from_slice(&v);
    }
    let y = obs.component(dim, Some(n_r)).stage("identify")?;
    let noise = vec![cfg.model.noise_sigma; n_sen];
    NlmlContext::new(hn, grid.weights().to_vec(), y, noise, s.mismatch.loadings().clone()).stage("identify")
}

pub fn identify_all(cfg: &Config, s: &Setup, prior: &Prior, obs: &ObservationSet<f64>) -> StageResult<Vec<Identification<f64>>> {
    let n_r = identify_replications(cfg);
    let settings = identify_settings(cfg);
    (0..s.dims)
        .map(|d| {
            let ctx = nlml_context(cfg, s, prior, obs, d, n_r)?;
            identify(&ctx, &settings).stage("identify")
        })
        .collect()
}

/// Hyperparameters of one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyper {
    pub rho: f64,
    pub sigma_d: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DimMetrics {
    pub dim: usize,
    pub rho: f64,
    /// ‖μ_z − mean of all generated replications‖.
    pub err: f64,
    pub rmsd: f64,
    /// ‖Hμ_f − ȳ‖ and ‖μ_z − ȳ‖ against the assimilated data mean.
    pub prior_sensor_distance: f64,
    pub posterior_sensor_distance: f64,
    /// ‖μ_f − u_true‖ and ‖ρμ_a − u_true‖ over all nodes.
    pub prior_field_distance: f64,
    pub posterior_field_distance: f64,
}

pub struct DimPosterior {
    pub result: PosteriorResult<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub z_mean: Vec<f64>,
    pub z_std: Vec<f64>,
    pub metrics: DimMetrics,
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn assimilate_dim(cfg: &Config, s: &Setup, prior: &Prior, data: &Data, dim: usize, hyper: &Hyper) -> StageResult<DimPosterior> {
    const STAGE: &str = "assimilate";
    let n_r = assimilate_replications(cfg);
    let comp = prior.field.component(dim).stage(STAGE)?;
    let y = data.obs.component(dim, Some(n_r)).stage(STAGE)?;
    let y_all = data.obs.component(dim, None).stage(STAGE)?;
    let (sig_d, cov_d) = mismatch_factors(&s.mismatch, &hyper.sigma_d).stage(STAGE)?;
    let n_sen = s.sensors.len();
    let noise = cfg.model.noise_sigma;
    let (mean_f, cov_f) = pc_moments(&comp);
    let result = if noise.is_finite() {
        let mut cov_de = cov_d.clone();
        for k in 0..n_sen {
            cov_de[(k, k)] += noise * noise;
        }
        let gain = kalman_gain(&cov_f, &s.h, hyper.rho, &cov_de, n_r, cfg.model.gain_form).stage(STAGE)?;
        let ext = assemble_extended(&comp, &sig_d, &vec![noise; n_sen], &y).stage(STAGE)?;
        gmkf_update(&ext, &gain, hyper.rho, &s.h).stage(STAGE)?
    } else {
        // infinite noise: the gain vanishes and the prior passes through
        let ext = assemble_extended(&comp, &sig_d, &vec![0.0; n_sen], &y).stage(STAGE)?;
        let zero = Matrix::zeros(comp.outputs(), n_sen);
        gmkf_update(&ext, &zero, hyper.rho, &s.h).stage(STAGE)?
    };
    let (mean, cov) = posterior_moments(&result);
    let std: Vec<f64> = cov.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect();
    let (z_mean, z_cov) = true_response(&mean, &cov, &s.h, hyper.rho, &cov_d).stage(STAGE)?;
    let z_std = z_cov.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect();
    let y_used = row_means(&y);
    let y_big = row_means(&y_all);
    let err = err_metric(&z_mean, &y_big).stage(STAGE)?;
    // RMSD over posterior draws of ρHu_a(ξ, χ, ζ)
    let hu = s.h.matmul(&result.u_a).stage(STAGE)?;
    let (m, md) = (comp.basis.dim(), result.m_d);
    let ns = cfg.assimilate.samples;
    let mut samples = Matrix::zeros(ns, n_sen);
    for i in 0..ns {
        let mut rng = StreamRng::new(cfg.assimilate.sample_seed, Purpose::PosteriorSample, dim as u8, i as u32);
        let g = normal_vec(&mut rng, m + md + n_sen);
        let mut germ = comp.basis.eval_all(&g[..m]).stage(STAGE)?;
        germ.extend_from_slice(&g[m..]);
        let v = hu.matvec(&germ).stage(STAGE)?;
        for (o, x) in samples.row_mut(i).iter_mut().zip(v) {
            *o = hyper.rho * x;
        }
    }
    let rmsd_v = rmsd(&samples, &y_used).stage(STAGE)?;
    let h_prior = s.h.matvec(&mean_f).stage(STAGE)?;
    let truth: Vec<f64> = (0..s.mesh.n_nodes()).map(|n| data.truth[n * s.dims + dim]).collect();
    let scaled: Vec<f64> = mean.iter().map(|v| v * hyper.rho).collect();
    let metrics = DimMetrics {
        dim,
        rho: hyper.rho,
        err,
        rmsd: rmsd_v,
        prior_sensor_distance: euclid(&h_prior, &y_used),
        posterior_sensor_distance: euclid(&z_mean, &y_used),
        prior_field_distance: euclid(&mean_f, &truth),
        posterior_field_distance: euclid(&scaled, &truth),
    };
    Ok(DimPosterior { result, mean, std, z_mean, z_std, metrics })
}

pub fn identification_to_hyper(ids: &[Identification<f64>]) -> Vec<Hyper> {
    ids.iter().map(|i| Hyper { rho: i.rho, sigma_d: i.sigma_d.clone() }).collect()
}

/// Convenience for callers that want gain-form sensitivity studies.
pub fn with_gain_form(mut cfg: Config, form: GainForm) -> Config {
    cfg.model.gain_form = form;
    cfg
}

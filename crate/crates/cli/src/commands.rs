//! Stage commands that read and write the output directory.

use crate::config::Config;
use crate::io::*;
use crate::pipeline::*;
use chaosfem_core::fem::Mesh;
use chaosfem_core::pce::{PcBasis, PcField};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// Resolved invocation: configuration plus output directory and seed override.
pub struct Run {
    pub config: Config,
    pub out: PathBuf,
}

impl Run {
    pub fn new(config: Config, out: Option<PathBuf>, seed: Option<u64>) -> Self {
        let out = out.unwrap_or_else(|| config.resolve(&config.output_dir));
        let mut config = config;
        if let Some(s) = seed {
            config.data.seed = s;
        }
        Run { config, out }
    }

    fn path(&self, name: &str) -> PathBuf {
        out_path(&self.out, name)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorInfo {
    pub m_kappa: usize,
    pub order: usize,
    pub n_terms: usize,
    pub level: usize,
    pub grid_nodes: usize,
    pub explained_variance: f64,
    pub dims: usize,
    pub n_nodes: usize,
    pub n_elements: usize,
}

pub fn cmd_prior(run: &Run) -> StageResult<PriorInfo> {
    const S: &str = "prior";
    let cfg = &run.config;
    let setup = setup(cfg)?;
    let prior = build_prior(cfg, &setup)?;
    write_text(S, &run.path(MESH), &setup.mesh.to_text())?;
    let kl = &setup.kl;
    let head: Vec<String> = ["index", "eigenvalue", "retained"].iter().map(|s| s.to_string()).collect();
    let rows = kl.spectrum().iter().enumerate().map(|(i, v)| vec![i.to_string(), num(*v), u8::from(i < kl.len()).to_string()]);
    write_table(S, &run.path(KL_SPECTRUM), &head, rows)?;
    write_coefficients(S, &run.path(PC_COEFFICIENTS), &prior.field.coefficients, setup.dims)?;
    write_nodal(S, &run.path(PRIOR_MOMENTS), "node_id", &["mean", "std"], setup.dims, &[&prior.mean, &prior.std])?;
    let info = PriorInfo {
        m_kappa: prior.m_kappa,
        order: prior.field.basis.order(),
        n_terms: prior.field.basis.len(),
        level: cfg.pce.level(),
        grid_nodes: prior.grid_nodes,
        explained_variance: kl.explained_variance(),
        dims: setup.dims,
        n_nodes: setup.mesh.n_nodes(),
        n_elements: setup.mesh.n_elements(),
    };
    write_json(S, &run.path(PRIOR_JSON), &info)?;
    Ok(info)
}

pub fn load_prior(run: &Run, stage: &str) -> StageResult<(PriorInfo, Prior)> {
    require(stage, &run.out, &[PRIOR_JSON, PC_COEFFICIENTS])?;
    let info: PriorInfo = read_json(stage, &run.path(PRIOR_JSON))?;
    let c = read_coefficients(stage, &run.path(PC_COEFFICIENTS))?;
    let basis = PcBasis::new(info.m_kappa, info.order).map_err(|e| StageError::from_core(stage, e))?;
    let field = PcField::new(basis, info.dims, c).map_err(|e| StageError::from_core(stage, e))?;
    Ok((info.clone(), prior_from_field(field, info.grid_nodes)))
}

pub fn cmd_generate(run: &Run) -> StageResult<Data> {
    const S: &str = "generate";
    let cfg = &run.config;
    let setup = setup(cfg)?;
    let data = generate(cfg, &setup, cfg.data.seed)?;
    write_observations(S, &run.out, &data.obs)?;
    write_nodal(S, &run.path(TRUTH_FIELD), "node_id", &["value"], setup.dims, &[&data.truth])?;
    Ok(data)
}

pub fn load_data(run: &Run, stage: &str) -> StageResult<Data> {
    require(stage, &run.out, &[OBSERVATIONS, OBSERVATIONS_JSON, TRUTH_FIELD])?;
    let obs = read_observations(stage, &run.out)?;
    let truth = read_column(stage, &run.path(TRUTH_FIELD), "value")?;
    Ok(Data { obs, truth })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StartOut {
    pub initial: Vec<f64>,
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DimHyper {
    pub dim: usize,
    pub rho: f64,
    pub sigma_d: Vec<f64>,
    pub nlml: f64,
    pub starts: Vec<StartOut>,
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub n_sensors: usize,
    pub n_replications: usize,
    pub m_d: usize,
    pub quadrature_nodes: usize,
    pub dims: Vec<DimHyper>,
}

pub fn cmd_identify(run: &Run) -> StageResult<Hyperparameters> {
    const S: &str = "identify";
    let cfg = &run.config;
    let (_, prior) = load_prior(run, S)?;
    let data = load_data(run, S)?;
    let setup = setup(cfg)?;
    let ids = identify_all(cfg, &setup, &prior, &data.obs)?;
    let out = Hyperparameters {
        n_sensors: setup.sensors.len(),
        n_replications: identify_replications(cfg),
        m_d: setup.mismatch.modes(),
        quadrature_nodes: nlml_grid(cfg, prior.m_kappa)?.len(),
        dims: ids
            .into_iter()
            .enumerate()
            .map(|(dim, i)| DimHyper {
                dim,
                rho: i.rho,
                sigma_d: i.sigma_d,
                nlml: i.value,
                starts: i
                    .starts
                    .into_iter()
                    .map(|s| StartOut {
                        initial: s.initial,
                        x: s.x,
                        value: s.value,
                        iterations: s.iterations,
                        evaluations: s.evaluations,
                        converged: s.converged,
                    })
                    .collect(),
                trace: i.trace,
            })
            .collect(),
    };
    write_json(S, &run.path(HYPERPARAMETERS), &out)?;
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metrics {
    pub n_sensors: usize,
    pub n_replications: usize,
    pub samples: usize,
    pub hyperparameter_source: String,
    pub dims: Vec<DimMetricsOut>,
    /// Combined over dimensions (Euclidean).
    pub err: f64,
    pub rmsd: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DimMetricsOut {
    pub dim: usize,
    pub rho: f64,
    pub sigma_d: Vec<f64>,
    pub err: f64,
    pub rmsd: f64,
    pub prior_sensor_distance: f64,
    pub posterior_sensor_distance: f64,
    pub prior_field_distance: f64,
    pub posterior_field_distance: f64,
}

fn hypers(run: &Run, dims: usize, stage: &str) -> StageResult<(Vec<Hyper>, String)> {
    let a = &run.config.assimilate;
    if let (Some(rho), Some(sd)) = (a.rho, &a.sigma_d) {
        return Ok((vec![Hyper { rho, sigma_d: sd.clone() }; dims], "config".into()));
    }
    require(stage, &run.out, &[HYPERPARAMETERS])?;
    let h: Hyperparameters = read_json(stage, &run.path(HYPERPARAMETERS))?;
    let v = h
        .dims
        .into_iter()
        .map(|d| Hyper { rho: a.rho.unwrap_or(d.rho), sigma_d: a.sigma_d.clone().unwrap_or(d.sigma_d) })
        .collect();
    Ok((v, "identify".into()))
}

pub fn cmd_assimilate(run: &Run) -> StageResult<Metrics> {
    const S: &str = "assimilate";
    let cfg = &run.config;
    let (_, prior) = load_prior(run, S)?;
    let data = load_data(run, S)?;
    let setup = setup(cfg)?;
    let (hs, source) = hypers(run, setup.dims, S)?;
    if hs.len() != setup.dims {
        return Err(StageError::new(ErrorKind::Config, S, "hyperparameters do not match the problem dimension"));
    }
    let posts: Vec<DimPosterior> =
        (0..setup.dims).map(|d| assimilate_dim(cfg, &setup, &prior, &data, d, &hs[d])).collect::<Result<_, _>>()?;
    let n_nodes = setup.mesh.n_nodes();
    let n_sen = setup.sensors.len();
    let interleave = |n: usize, f: &dyn Fn(&DimPosterior) -> &Vec<f64>| -> Vec<f64> {
        (0..n * setup.dims).map(|r| f(&posts[r % setup.dims])[r / setup.dims]).collect()
    };
    let mean = interleave(n_nodes, &|p| &p.mean);
    let std = interleave(n_nodes, &|p| &p.std);
    write_nodal(S, &run.path(POSTERIOR_MOMENTS), "node_id", &["mean", "std"], setup.dims, &[&mean, &std])?;
    let zm = interleave(n_sen, &|p| &p.z_mean);
    let zs = interleave(n_sen, &|p| &p.z_std);
    write_nodal(S, &run.path(TRUE_RESPONSE), "sensor_id", &["mean", "std"], setup.dims, &[&zm, &zs])?;
    let combine = |f: &dyn Fn(&DimPosterior) -> f64| posts.iter().map(|p| f(p).powi(2)).sum::<f64>().sqrt();
    let metrics = Metrics {
        n_sensors: n_sen,
        n_replications: assimilate_replications(cfg),
        samples: cfg.assimilate.samples,
        hyperparameter_source: source,
        err: combine(&|p| p.metrics.err),
        rmsd: combine(&|p| p.metrics.rmsd),
        dims: posts
            .iter()
            .zip(&hs)
            .map(|(p, h)| {
                let m = &p.metrics;
                DimMetricsOut {
                    dim: m.dim,
                    rho: m.rho,
                    sigma_d: h.sigma_d.clone(),
                    err: m.err,
                    rmsd: m.rmsd,
                    prior_sensor_distance: m.prior_sensor_distance,
                    posterior_sensor_distance: m.posterior_sensor_distance,
                    prior_field_distance: m.prior_field_distance,
                    posterior_field_distance: m.posterior_field_distance,
                }
            })
            .collect(),
    };
    write_json(S, &run.path(METRICS), &metrics)?;
    Ok(metrics)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub problem: String,
    pub n_sen: usize,
    pub n_r: usize,
    pub m_kappa: usize,
    pub m_d: usize,
    pub p_u: usize,
    pub rho: Vec<f64>,
    pub sigma_d: Vec<Vec<f64>>,
    pub nlml: Vec<f64>,
    pub err: f64,
    pub rmsd: f64,
}

/// Half-width of the plotted credible bands in standard deviations.
pub const BAND_Z: f64 = 1.959963984540054;

pub fn cmd_report(run: &Run) -> StageResult<Summary> {
    const S: &str = "report";
    require(
        S,
        &run.out,
        &[MESH, PRIOR_JSON, PRIOR_MOMENTS, POSTERIOR_MOMENTS, METRICS, TRUTH_FIELD],
    )?;
    let info: PriorInfo = read_json(S, &run.path(PRIOR_JSON))?;
    let hyp: Option<Hyperparameters> =
        if run.path(HYPERPARAMETERS).is_file() { Some(read_json(S, &run.path(HYPERPARAMETERS))?) } else { None };
    let m_d = match &hyp {
        Some(h) => h.m_d,
        None => setup(&run.config)?.mismatch.modes(),
    };
    let met: Metrics = read_json(S, &run.path(METRICS))?;
    let mesh = Mesh::<f64>::parse(&read_text(S, &run.path(MESH))?).map_err(|e| StageError::from_core(S, e))?;
    let pm = read_column(S, &run.path(PRIOR_MOMENTS), "mean")?;
    let ps = read_column(S, &run.path(PRIOR_MOMENTS), "std")?;
    let qm = read_column(S, &run.path(POSTERIOR_MOMENTS), "mean")?;
    let qs = read_column(S, &run.path(POSTERIOR_MOMENTS), "std")?;
    let truth = read_column(S, &run.path(TRUTH_FIELD), "value")?;
    let dims = info.dims;
    let coords: &[&str] = if mesh.dim() == 2 { &["x", "y"] } else { &["x"] };
    let mut head = vec!["node_id", "dim"];
    head.extend_from_slice(coords);
    head.extend_from_slice(&["truth", "prior_mean", "prior_lower", "prior_upper", "posterior_mean", "posterior_lower", "posterior_upper"]);
    let head: Vec<String> = head.into_iter().map(String::from).collect();
    let rows = (0..pm.len()).map(|r| {
        let n = r / dims;
        let mut v = vec![n.to_string(), (r % dims).to_string()];
        v.extend(mesh.node(n).iter().map(|x| num(*x)));
        for x in [truth[r], pm[r], pm[r] - BAND_Z * ps[r], pm[r] + BAND_Z * ps[r], qm[r], qm[r] - BAND_Z * qs[r], qm[r] + BAND_Z * qs[r]] {
            v.push(num(x));
        }
        v
    });
    write_table(S, &run.path(BANDS), &head, rows)?;
    let summary = Summary {
        problem: format!("{:?}", run.config.problem),
        n_sen: met.n_sensors,
        n_r: met.n_replications,
        m_kappa: info.m_kappa,
        m_d,
        p_u: info.n_terms,
        rho: met.dims.iter().map(|d| d.rho).collect(),
        sigma_d: met.dims.iter().map(|d| d.sigma_d.clone()).collect(),
        nlml: hyp.map(|h| h.dims.iter().map(|d| d.nlml).collect()).unwrap_or_default(),
        err: met.err,
        rmsd: met.rmsd,
    };
    write_json(S, &run.path(SUMMARY), &summary)?;
    Ok(summary)
}

/// All stages in order.
pub fn cmd_run(run: &Run) -> StageResult<Summary> {
    cmd_prior(run)?;
    cmd_generate(run)?;
    let a = &run.config.assimilate;
    if a.rho.is_none() || a.sigma_d.is_none() {
        cmd_identify(run)?;
    }
    cmd_assimilate(run)?;
    cmd_report(run)
}

//! CSV and JSON artifacts of the pipeline.

use crate::pipeline::{ErrorKind, StageError, StageResult};
use chaosfem_core::datagen::{ObservationMeta, ObservationSet};
use chaosfem_core::linalg::Matrix;
use serde::{de::DeserializeOwned, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const MESH: &str = "mesh.txt";
pub const KL_SPECTRUM: &str = "kl_spectrum.csv";
pub const PC_COEFFICIENTS: &str = "pc_coefficients.csv";
pub const PRIOR_MOMENTS: &str = "prior_moments.csv";
pub const PRIOR_JSON: &str = "prior.json";
pub const OBSERVATIONS: &str = "observations.csv";
pub const OBSERVATIONS_JSON: &str = "observations.json";
pub const TRUTH_FIELD: &str = "truth_field.csv";
pub const HYPERPARAMETERS: &str = "hyperparameters.json";
pub const POSTERIOR_MOMENTS: &str = "posterior_moments.csv";
pub const TRUE_RESPONSE: &str = "true_response.csv";
pub const METRICS: &str = "metrics.json";
pub const SUMMARY: &str = "summary.json";
pub const BANDS: &str = "bands.csv";

pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(stage: &str, path: &Path, e: impl std::fmt::Display) -> StageError {
    StageError::new(ErrorKind::Io, stage, format!("{}: {e}", path.display()))
}

pub fn write_text(stage: &str, path: &Path, text: &str) -> StageResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_err(stage, dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| io_err(stage, path, e))
}

pub fn read_text(stage: &str, path: &Path) -> StageResult<String> {
    std::fs::read_to_string(path).map_err(|e| io_err(stage, path, e))
}

pub fn write_json<S: Serialize>(stage: &str, path: &Path, value: &S) -> StageResult<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| io_err(stage, path, e))?;
    s.push('\n');
    write_text(stage, path, &s)
}

pub fn read_json<D: DeserializeOwned>(stage: &str, path: &Path) -> StageResult<D> {
    let text = read_text(stage, path)?;
    serde_json::from_str(&text).map_err(|e| io_err(stage, path, e))
}

/// Fails with the list of required files that are absent from `dir`.
pub fn require(stage: &str, dir: &Path, files: &[&str]) -> StageResult<()> {
    let missing: Vec<String> = files.iter().filter(|f| !dir.join(f).is_file()).map(|f| f.to_string()).collect();
    if missing.is_empty() {
        return Ok(());
    }
    let mut e = StageError::new(
        ErrorKind::Io,
        stage,
        format!("missing input files in {}; run the earlier stages first", dir.display()),
    );
    e.details = missing;
    Err(e)
}

/// Rows of numbers under a header line.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn write_table(stage: &str, path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> StageResult<()> {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{}", r.join(","));
    }
    write_text(stage, path, &s)
}

pub fn read_table(stage: &str, path: &Path) -> StageResult<Table> {
    let text = read_text(stage, path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| io_err(stage, path, "empty file"))?;
    let header: Vec<String> = header.split(',').map(|h| h.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse::<f64>()).collect();
        let r = r.map_err(|e| io_err(stage, path, format!("line {}: {e}", i + 2)))?;
        if r.len() != header.len() {
            return Err(io_err(stage, path, format!("line {}: expected {} columns", i + 2, header.len())));
        }
        rows.push(r);
    }
    Ok(Table { header, rows })
}

pub fn header(fixed: &[&str], prefix: &str, n: usize) -> Vec<String> {
    fixed.iter().map(|s| s.to_string()).chain((0..n).map(|j| format!("{prefix}{j}"))).collect()
}

/// Coefficients with rows `node·dims + dim` as `point_id, dim, j0, j1, …`.
pub fn write_coefficients(stage: &str, path: &Path, c: &Matrix<f64>, dims: usize) -> StageResult<()> {
    let head = header(&["point_id", "dim"], "j", c.cols());
    let rows = (0..c.rows()).map(|r| {
        let mut v = vec![(r / dims).to_string(), (r % dims).to_string()];
        v.extend(c.row(r).iter().map(|x| num(*x)));
        v
    });
    write_table(stage, path, &head, rows)
}

pub fn read_coefficients(stage: &str, path: &Path) -> StageResult<Matrix<f64>> {
    let t = read_table(stage, path)?;
    let cols = t.header.len().saturating_sub(2);
    let flat: Vec<f64> = t.rows.iter().flat_map(|r| r[2..].iter().copied()).collect();
    Matrix::from_row_major(t.rows.len(), cols, flat).map_err(|e| io_err(stage, path, e))
}

/// Node-major `id, dim, <columns…>` table.
pub fn write_nodal(stage: &str, path: &Path, id: &str, names: &[&str], dims: usize, cols: &[&[f64]]) -> StageResult<()> {
    let mut head = vec![id, "dim"];
    head.extend_from_slice(names);
    let head: Vec<String> = head.into_iter().map(String::from).collect();
    let n = cols.first().map_or(0, |c| c.len());
    let rows = (0..n).map(|r| {
        let mut v = vec![(r / dims).to_string(), (r % dims).to_string()];
        v.extend(cols.iter().map(|c| num(c[r])));
        v
    });
    write_table(stage, path, &head, rows)
}

pub fn read_column(stage: &str, path: &Path, name: &str) -> StageResult<Vec<f64>> {
    let t = read_table(stage, path)?;
    let k = t.header.iter().position(|h| h == name).ok_or_else(|| io_err(stage, path, format!("no column `{name}`")))?;
    Ok(t.rows.iter().map(|r| r[k]).collect())
}

pub fn write_observations(stage: &str, dir: &Path, obs: &ObservationSet<f64>) -> StageResult<()> {
    let sdim = obs.sensors.first().map_or(1, Vec::len);
    let coords: &[&str] = if sdim == 2 { &["x", "y"] } else { &["x"] };
    let mut fixed = vec!["sensor_id", "dim"];
    fixed.extend_from_slice(coords);
    let head = header(&fixed, "r", obs.y.cols());
    let rows = (0..obs.y.rows()).map(|r| {
        let s = r / obs.dims;
        let mut v = vec![s.to_string(), (r % obs.dims).to_string()];
        v.extend(obs.sensors[s].iter().map(|x| num(*x)));
        v.extend(obs.y.row(r).iter().map(|x| num(*x)));
        v
    });
    write_table(stage, &dir.join(OBSERVATIONS), &head, rows)?;
    #[derive(Serialize)]
    struct Out<'a> {
        #[serde(flatten)]
        meta: &'a ObservationMeta,
        signal: &'a [f64],
    }
    write_json(stage, &dir.join(OBSERVATIONS_JSON), &Out { meta: &obs.meta, signal: &obs.signal })
}

pub fn read_observations(stage: &str, dir: &Path) -> StageResult<ObservationSet<f64>> {
    let path = dir.join(OBSERVATIONS);
    let t = read_table(stage, &path)?;
    #[derive(serde::Deserialize)]
    struct In {
        #[serde(flatten)]
        meta: ObservationMeta,
        signal: Vec<f64>,
    }
    let In { meta, signal } = read_json(stage, &dir.join(OBSERVATIONS_JSON))?;
    let dims = meta.dims.max(1);
    let n_coord = t.header.iter().filter(|h| *h == "x" || *h == "y").count();
    let first = 2 + n_coord;
    let cols = t.header.len() - first;
    let mut sensors = Vec::new();
    for (r, row) in t.rows.iter().enumerate() {
        if r % dims == 0 {
            sensors.push(row[2..first].to_vec());
        }
    }
    let flat: Vec<f64> = t.rows.iter().flat_map(|r| r[first..].iter().copied()).collect();
    let y = Matrix::from_row_major(t.rows.len(), cols, flat).map_err(|e| io_err(stage, &path, e))?;
    Ok(ObservationSet { sensors, dims, y, signal, meta })
}

pub fn out_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

//! File formats: dataset CSV and its stats sidecar, model JSON, run
//! manifests, plot-ready CSVs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use lunar_descent_core::extremal::{DatasetSample, DatasetStats, TrajectorySummary};
use lunar_descent_core::guidance::{Histogram, TraceRow};
use lunar_descent_core::mlp::{EpochLog, MlpModel};
use lunar_descent_core::LanderState;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// `dir/stem.csv` -> `dir/stem.<suffix>`.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("creating {}: {e}", dir.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("creating {}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let f = File::open(path).map_err(|e| CliError::Io(format!("opening {}: {e}", path.display())))?;
    serde_json::from_reader(std::io::BufReader::new(f))
        .map_err(|e| CliError::Io(format!("parsing {}: {e}", path.display())))
}

/// One dataset row as stored on disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub r: f64,
    pub v: f64,
    pub theta: f64,
    pub omega: f64,
    pub m: f64,
    pub tau: f64,
    pub psi: f64,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "S_reg")]
    pub s_reg: f64,
    pub u: f64,
    pub traj_id: u64,
    pub is_switch: u8,
}

impl DatasetRow {
    pub fn state(&self) -> LanderState {
        LanderState::new(self.r, self.v, self.theta, self.omega, self.m)
    }
}

impl From<&DatasetSample> for DatasetRow {
    fn from(s: &DatasetSample) -> Self {
        Self {
            r: s.state.r,
            v: s.state.v,
            theta: s.state.theta,
            omega: s.state.omega,
            m: s.state.m,
            tau: s.tau,
            psi: s.psi,
            s: s.s,
            s_reg: s.s_reg,
            u: s.u,
            traj_id: s.traj_id,
            is_switch: u8::from(s.is_switch),
        }
    }
}

pub const DATASET_HEADER: [&str; 12] =
    ["r", "v", "theta", "omega", "m", "tau", "psi", "S", "S_reg", "u", "traj_id", "is_switch"];

pub struct DatasetWriter {
    inner: csv::Writer<BufWriter<File>>,
}

impl DatasetWriter {
    pub fn create(path: &Path) -> Result<Self, CliError> {
        // header written by hand so an empty dataset still has one
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(create(path)?);
        inner.write_record(DATASET_HEADER)?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, rows: &[DatasetSample]) -> Result<(), CliError> {
        for r in rows {
            self.inner.serialize(DatasetRow::from(r))?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.inner.flush()?;
        Ok(())
    }
}

pub fn read_dataset(path: &Path) -> Result<Vec<DatasetRow>, CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Io(format!("opening {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        out.push(row.map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?);
    }
    Ok(out)
}

/// Sidecar written next to a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub manifest_hash: String,
    pub stats: DatasetStats,
    pub trajectories: Vec<TrajectorySummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub target: String,
    pub dataset_hash: String,
    pub seed: u64,
    pub train_mse: f64,
    pub val_mse: f64,
    pub test_mse: f64,
    pub manifest_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(flatten)]
    pub model: MlpModel,
    pub metadata: ModelMetadata,
}

pub fn load_model(path: &Path) -> Result<ModelFile, CliError> {
    let m: ModelFile = read_json(path)?;
    m.model
        .validate()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(m)
}

/// Path and content hash of a file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

impl Artifact {
    pub fn of(path: &Path) -> Result<Self, CliError> {
        Ok(Self {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        })
    }
}

/// Everything needed to rerun a subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// Command line after the program name.
    pub args: Vec<String>,
    pub config_path: Option<String>,
    /// Resolved configuration in `key = value` form.
    pub config: String,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub inputs: Vec<Artifact>,
}

impl RunManifest {
    pub fn hash(&self) -> String {
        sha256_bytes(&serde_json::to_vec(self).expect("manifest serializes"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub manifest_hash: String,
    pub manifest: RunManifest,
    pub outputs: Vec<Artifact>,
}

pub fn write_manifest(path: &Path, manifest: &RunManifest, outputs: &[&Path]) -> Result<(), CliError> {
    let outputs = outputs.iter().map(|p| Artifact::of(p)).collect::<Result<Vec<_>, _>>()?;
    write_json(
        path,
        &ManifestFile {
            manifest_hash: manifest.hash(),
            manifest: manifest.clone(),
            outputs,
        },
    )
}

pub fn write_trace(path: &Path, trace: &[TraceRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["t_s", "r_m", "v_mps", "theta_deg", "omega_radps", "m_kg", "u", "psi_rad"])?;
    for r in trace {
        w.write_record(&[
            r.t_s.to_string(),
            r.state.r_m.to_string(),
            r.state.v_mps.to_string(),
            r.state.theta_rad.to_degrees().to_string(),
            r.state.omega_radps.to_string(),
            r.state.m_kg.to_string(),
            r.u.to_string(),
            r.psi_rad.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_histogram(path: &Path, h: &Histogram) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["bin_lo", "bin_hi", "count"])?;
    for (k, c) in h.counts.iter().enumerate() {
        let (lo, hi) = h.edges(k);
        w.write_record(&[lo.to_string(), hi.to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_history(path: &Path, history: &[EpochLog]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for h in history {
        w.serialize(h)?;
    }
    if history.is_empty() {
        w.write_record(["epoch", "train_mse", "val_mse", "best_val_mse"])?;
    }
    w.flush()?;
    Ok(())
}

//! Run manifests: what ran, with which inputs, and a SHA-256 of every output.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};
use crate::formats::{self, TableFormat};
use crate::scenario::{self, Loaded, Scenario};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the manifest's directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Versions {
    pub eled: String,
    pub eled_core: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario_name: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub seed: u64,
    /// SHA-256 of the compact JSON of `scenario`.
    pub config_sha256: String,
    pub versions: Versions,
    pub format: TableFormat,
    /// Directory that relative input paths in `scenario` resolve against.
    pub base_dir: PathBuf,
    pub scenario: Scenario,
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_file(path: &Path) -> CliResult<(String, u64)> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok((sha256_hex(&bytes), bytes.len() as u64))
}

pub fn config_hash(s: &Scenario) -> String {
    sha256_hex(serde_json::to_string(s).expect("scenario serializes").as_bytes())
}

fn relative(root: &Path, p: &Path) -> String {
    let rel = p.strip_prefix(root).unwrap_or(p);
    rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

/// Outcome of [`run_scenario`].
#[derive(Debug)]
pub struct RunOutcome {
    pub manifest_path: PathBuf,
    pub manifest: Manifest,
    /// The first stage failure, if any.
    pub error: Option<CliError>,
}

/// Validate, then run every stage into `out_dir`, then write the manifest.
/// Validation failures return `Err` before anything is written; a stage
/// failure stops the run but the manifest still lists what was written.
pub fn run_scenario(loaded: &Loaded, out_dir: &Path, format: TableFormat) -> CliResult<RunOutcome> {
    loaded.validate()?;
    let s = &loaded.scenario;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut written = Vec::new();
    let mut error = None;
    for (stage, label) in s.stages.iter().zip(scenario::stage_labels(s)) {
        log::info!("stage {label}");
        let seed = scenario::stage_seed(s.seed, &label);
        if let Err(e) = scenario::run_stage(stage, &loaded.base_dir, seed, &out_dir.join(&label), format, &mut written) {
            log::error!("stage {label} failed: {e}");
            error = Some(e);
            break;
        }
    }
    let mut files = Vec::with_capacity(written.len());
    for p in &written {
        let (sha256, bytes) = hash_file(p)?;
        files.push(FileEntry { path: relative(out_dir, p), sha256, bytes });
    }
    let manifest = Manifest {
        scenario_name: s.name.clone(),
        status: if error.is_some() { Status::Failed } else { Status::Ok },
        error: error.as_ref().map(ToString::to_string),
        seed: s.seed,
        config_sha256: config_hash(s),
        versions: Versions { eled: env!("CARGO_PKG_VERSION").into(), eled_core: eled_core::VERSION.into() },
        format,
        base_dir: std::path::absolute(&loaded.base_dir).unwrap_or_else(|_| loaded.base_dir.clone()),
        scenario: s.clone(),
        files,
    };
    let manifest_path = out_dir.join(MANIFEST_NAME);
    formats::write_json(&manifest_path, &manifest)?;
    Ok(RunOutcome { manifest_path, manifest, error })
}

/// A file whose content differs from the manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mismatch {
    pub path: String,
    pub expected: String,
    /// `None` when the file is missing.
    pub found: Option<String>,
}

/// Compare the files next to `manifest_path` against their recorded hashes.
pub fn verify_files(manifest_path: &Path) -> CliResult<(Manifest, Vec<Mismatch>)> {
    let m: Manifest = formats::read_json(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let mut bad = Vec::new();
    for f in &m.files {
        let p = root.join(&f.path);
        let found = if p.is_file() { Some(hash_file(&p)?.0) } else { None };
        if found.as_deref() != Some(f.sha256.as_str()) {
            bad.push(Mismatch { path: f.path.clone(), expected: f.sha256.clone(), found });
        }
    }
    Ok((m, bad))
}

/// Re-run the manifest's scenario into `scratch` and compare every hash.
pub fn verify_rerun(manifest_path: &Path, scratch: &Path) -> CliResult<(Manifest, Vec<Mismatch>)> {
    let m: Manifest = formats::read_json(manifest_path)?;
    let loaded = Loaded { scenario: m.scenario.clone(), base_dir: m.base_dir.clone() };
    let rerun = run_scenario(&loaded, scratch, m.format)?;
    let mut bad = Vec::new();
    for f in &m.files {
        let found = rerun.manifest.files.iter().find(|g| g.path == f.path).map(|g| g.sha256.clone());
        if found.as_deref() != Some(f.sha256.as_str()) {
            bad.push(Mismatch { path: f.path.clone(), expected: f.sha256.clone(), found });
        }
    }
    for g in &rerun.manifest.files {
        if !m.files.iter().any(|f| f.path == g.path) {
            bad.push(Mismatch { path: g.path.clone(), expected: String::new(), found: Some(g.sha256.clone()) });
        }
    }
    Ok((m, bad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::parse;

    fn small() -> Loaded {
        let text = r#"{"name":"small","seed":11,"stages":[
            {"stage":"yield","n_dots":40},
            {"stage":"tomography","synthetic":{"purity_weight":0.8,"phase_rad":-0.3,"counts_per_setting":2000}}]}"#;
        Loaded { scenario: parse(text, "small.json").unwrap(), base_dir: PathBuf::from(".") }
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn manifest_lists_every_output_and_verifies() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_scenario(&small(), dir.path(), TableFormat::Csv).unwrap();
        assert!(out.error.is_none());
        assert_eq!(out.manifest.status, Status::Ok);
        let paths: Vec<_> = out.manifest.files.iter().map(|f| f.path.as_str()).collect();
        assert!(paths.contains(&"yield/yield_histogram.csv"), "{paths:?}");
        assert!(paths.contains(&"tomography/density_matrix.json"), "{paths:?}");
        let (_, bad) = verify_files(&out.manifest_path).unwrap();
        assert!(bad.is_empty());

        std::fs::write(dir.path().join("yield/yield_histogram.csv"), "tampered").unwrap();
        let (_, bad) = verify_files(&out.manifest_path).unwrap();
        assert_eq!(bad.len(), 1);
    }

    #[test]
    fn rerun_reproduces_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_scenario(&small(), &dir.path().join("a"), TableFormat::Json).unwrap();
        let (_, bad) = verify_rerun(&out.manifest_path, &dir.path().join("b")).unwrap();
        assert!(bad.is_empty(), "{bad:?}");
    }

    #[test]
    fn failed_stage_still_writes_manifest() {
        // unreachable calibration targets fail at run time, after the first stage wrote files
        let text = r#"{"name":"bad","seed":1,"stages":[
            {"stage":"yield","n_dots":10},
            {"stage":"yield","n_dots":10,"calibrate":{"frac_below_1ueV":0.0,"frac_below_3ueV":0.0,"s0_mean_ueV":20.0}}]}"#;
        let l = Loaded { scenario: parse(text, "bad.json").unwrap(), base_dir: PathBuf::from(".") };
        let dir = tempfile::tempdir().unwrap();
        let out = run_scenario(&l, dir.path(), TableFormat::Csv).unwrap();
        assert_eq!(out.manifest.status, Status::Failed);
        assert_eq!(out.error.as_ref().map(CliError::exit_code), Some(2));
        assert!(!out.manifest.files.is_empty());
        let on_disk: Manifest = formats::read_json(&out.manifest_path).unwrap();
        assert_eq!(on_disk.status, Status::Failed);
    }

    #[test]
    fn invalid_scenario_writes_nothing() {
        let text = r#"{"name":"bad","seed":1,"stages":[{"stage":"yield","n_dots":0}]}"#;
        let l = Loaded { scenario: parse(text, "bad.json").unwrap(), base_dir: PathBuf::from(".") };
        let dir = tempfile::tempdir().unwrap();
        let out_dir = dir.path().join("out");
        assert!(run_scenario(&l, &out_dir, TableFormat::Csv).is_err());
        assert!(!out_dir.exists());
    }
}

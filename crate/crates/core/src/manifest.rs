//! Per-subject JSON manifest: inputs, parameter echoes, outputs, provenance and results.
//!
//! Output paths are stored relative to the manifest's directory so a manifest
//! and its outputs can be moved together. Content hashes are SHA-256 of the
//! file bytes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::glm::LagSearchConfig;
use crate::metrics::MetricReport;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const TOOL_NAME: &str = "hemomap";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParameterEcho {
    pub filter_band_hz: Option<[f64; 2]>,
    pub fwhm_mm: Option<f64>,
    pub reference_timing: Option<String>,
    pub lag_grid: Option<LagSearchConfig>,
    pub alignment_grid: Option<LagSearchConfig>,
    pub clip_range: Option<[f64; 2]>,
    pub beta0_guard: Option<f64>,
    pub b_etco2_mode: Option<String>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    /// Seconds since the Unix epoch; excluded from the determinism hash.
    pub created_unix_s: u64,
    /// `input:<key>` / `output:<key>` → SHA-256 hex digest.
    pub content_sha256: BTreeMap<String, String>,
}

impl Default for Provenance {
    fn default() -> Self {
        Provenance {
            tool: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
            created_unix_s: 0,
            content_sha256: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManifestResults {
    pub b_etco2_mmhg: Option<f64>,
    pub etco2_shift_s: Option<f64>,
    pub alignment_cc: Option<f64>,
    /// Fraction of in-mask voxels a clip to `clip_range` moves, per map.
    pub clip_fractions: BTreeMap<String, f64>,
    pub metrics: BTreeMap<String, MetricReport>,
    pub values: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectManifest {
    pub schema_version: u32,
    pub subject_id: String,
    pub command: String,
    pub inputs: BTreeMap<String, PathBuf>,
    pub parameters: ParameterEcho,
    /// Relative to the manifest's directory.
    pub outputs: BTreeMap<String, PathBuf>,
    pub provenance: Provenance,
    /// Voxel counts: `defects`, `guard_flags`, ...
    pub defects: BTreeMap<String, usize>,
    pub warnings: Vec<String>,
    pub results: ManifestResults,
}

/// SHA-256 of a file's contents, hex encoded.
pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

impl SubjectManifest {
    pub fn new(subject_id: impl Into<String>, command: impl Into<String>) -> Self {
        SubjectManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            subject_id: subject_id.into(),
            command: command.into(),
            inputs: BTreeMap::new(),
            parameters: ParameterEcho::default(),
            outputs: BTreeMap::new(),
            provenance: Provenance::default(),
            defects: BTreeMap::new(),
            warnings: Vec::new(),
            results: ManifestResults::default(),
        }
    }

    pub fn output_path(&self, manifest_dir: &Path, key: &str) -> Result<PathBuf> {
        self.outputs
            .get(key)
            .map(|p| manifest_dir.join(p))
            .ok_or_else(|| Error::InvalidArgument(format!("manifest has no output `{key}`")))
    }

    pub fn input_path(&self, key: &str) -> Result<&Path> {
        self.inputs
            .get(key)
            .map(PathBuf::as_path)
            .ok_or_else(|| Error::InvalidArgument(format!("manifest has no input `{key}`")))
    }

    fn referenced(&self, manifest_dir: &Path) -> Vec<(String, PathBuf)> {
        let ins = self.inputs.iter().map(|(k, p)| (format!("input:{k}"), p.clone()));
        let outs = self.outputs.iter().map(|(k, p)| (format!("output:{k}"), manifest_dir.join(p)));
        ins.chain(outs).collect()
    }

    /// Hashes every referenced file and stamps the creation time.
    /// Fails if any referenced path is missing.
    pub fn seal(&mut self, manifest_dir: &Path) -> Result<()> {
        let mut hashes = BTreeMap::new();
        for (key, path) in self.referenced(manifest_dir) {
            if !path.is_file() {
                return Err(Error::InvalidArgument(format!(
                    "manifest {key} refers to missing file {}",
                    path.display()
                )));
            }
            hashes.insert(key, sha256_file(&path)?);
        }
        self.provenance.content_sha256 = hashes;
        self.provenance.created_unix_s = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Ok(())
    }

    /// SHA-256 of the canonical JSON with the creation time zeroed.
    pub fn determinism_hash(&self) -> Result<String> {
        let mut m = self.clone();
        m.provenance.created_unix_s = 0;
        let bytes = serde_json::to_vec(&m)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: SubjectManifest = serde_json::from_str(text)?;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported manifest schema version {}",
                m.schema_version
            )));
        }
        Ok(m)
    }

    /// Writes the manifest; every referenced path must exist.
    pub fn write(&self, path: &Path) -> Result<()> {
        let dir = path.parent().unwrap_or(Path::new("."));
        for (key, p) in self.referenced(dir) {
            if !p.is_file() {
                return Err(Error::InvalidArgument(format!(
                    "manifest {key} refers to missing file {}",
                    p.display()
                )));
            }
        }
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(j) => Error::Table {
                path: path.to_path_buf(),
                message: format!("invalid manifest: {j}"),
            },
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(dir: &Path) -> SubjectManifest {
        std::fs::write(dir.join("bold.nii"), b"bold").unwrap();
        std::fs::write(dir.join("out.nii"), b"out").unwrap();
        let mut m = SubjectManifest::new("s01", "grrs");
        m.inputs.insert("bold".into(), dir.join("bold.nii"));
        m.outputs.insert("beta1_z".into(), "out.nii".into());
        m.parameters.filter_band_hz = Some([0.0, 0.1164]);
        m.parameters.lag_grid = Some(LagSearchConfig::resting_state());
        m.defects.insert("defects".into(), 3);
        m.warnings.push("w".into());
        m.results.clip_fractions.insert("beta1_z".into(), 0.0016);
        m
    }

    #[test]
    fn seal_hashes_files_and_write_requires_them() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = sample(dir.path());
        m.seal(dir.path()).unwrap();
        // coreutils sha256sum of "out"
        assert_eq!(
            m.provenance.content_sha256["output:beta1_z"],
            "762069bc07a6e1b5df123a5ae7bd91c10daa04694fbaa17fba0cd6a8dcce8f22"
        );
        let path = dir.path().join("manifest.json");
        m.write(&path).unwrap();
        assert_eq!(SubjectManifest::read(&path).unwrap(), m);

        m.outputs.insert("missing".into(), "nope.nii".into());
        assert!(m.write(&path).is_err());
        assert!(m.seal(dir.path()).is_err());
    }

    #[test]
    fn determinism_hash_ignores_only_the_timestamp() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = sample(dir.path());
        a.seal(dir.path()).unwrap();
        let mut b = a.clone();
        b.provenance.created_unix_s += 1000;
        assert_eq!(a.determinism_hash().unwrap(), b.determinism_hash().unwrap());
        b.warnings.push("extra".into());
        assert_ne!(a.determinism_hash().unwrap(), b.determinism_hash().unwrap());
    }

    #[test]
    fn unknown_fields_and_versions_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let m = sample(dir.path());
        let mut v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        v["bogus"] = serde_json::json!(1);
        assert!(SubjectManifest::from_json(&v.to_string()).is_err());
        let mut v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        v["schema_version"] = serde_json::json!(99);
        assert!(SubjectManifest::from_json(&v.to_string()).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_lossless(
            b in proptest::num::f64::NORMAL,
            frac in 0.0f64..1.0,
            seed in any::<u64>(),
            warn in "[ -~]{0,20}",
            n in 0usize..1_000_000,
        ) {
            let mut m = SubjectManifest::new("sub", "hc");
            m.results.b_etco2_mmhg = Some(b);
            m.results.clip_fractions.insert("cvr_z".into(), frac);
            m.parameters.seed = Some(seed);
            m.parameters.fwhm_mm = Some(frac * 10.0);
            m.warnings.push(warn);
            m.defects.insert("defects".into(), n);
            let back = SubjectManifest::from_json(&m.to_json().unwrap()).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}

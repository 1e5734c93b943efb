//! Export of training stacks for the slice-wise deep-learning mapper.
//!
//! Per subject three float32 NIfTI stacks are written on the 96×112×91 grid,
//! with channels on the fourth axis:
//! - `primary.nii`: GRRS β₀ z, β₁ z, BAT z
//! - `supplementary.nii`: 133 residual cross-correlation maps, channel `c` ↔ atlas label `c + 1`
//! - `labels.nii`: HC CVR z, HC BAT z
//!
//! Every channel is zeroed outside the brain, zero-padded (centered) and
//! clipped to [−5, 5]. A JSON index lists one sample per axial slice.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nifti::StackWriter;
use crate::pipeline::residual_cc_bank_each;
use crate::volume::{
    clip_range, pad_mask_to_grid, pad_to_grid, Dims3, LabelAtlas, MapKind, Mask, Volume3D, Volume4D, ZMap,
};

pub const DL_GRID: Dims3 = [96, 112, 91];
pub const DL_CLIP: [f64; 2] = [-5.0, 5.0];
pub const CC_CHANNELS: usize = 133;
pub const DEFAULT_FOLDS: usize = 5;
pub const PRIMARY_CHANNELS: [&str; 3] = ["grrs_beta0_z", "grrs_beta1_z", "grrs_bat_z"];
pub const LABEL_CHANNELS: [&str; 2] = ["hc_cvr_z", "hc_bat_z"];
pub const INDEX_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectEntry {
    pub subject_id: String,
    pub stratum: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldTable {
    pub k: usize,
    pub seed: u64,
    /// subject id → test fold.
    pub assignment: BTreeMap<String, usize>,
}

impl FoldTable {
    pub fn test_subjects(&self, fold: usize) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(s, _)| s.as_str())
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in self.assignment.values() {
            s[f] += 1;
        }
        s
    }
}

/// Subject-level k-fold split.
///
/// Subjects are grouped by stratum (strata and ids in sorted order, so input
/// order does not matter), each group is shuffled with one seeded generator,
/// and the concatenation is dealt round-robin. Fold sizes differ by at most one
/// and each stratum is spread as evenly as the deal allows.
pub fn split_folds(subjects: &[SubjectEntry], k: usize, seed: u64) -> Result<FoldTable> {
    if k == 0 {
        return Err(Error::InvalidArgument("fold count must be positive".into()));
    }
    if k > subjects.len() {
        return Err(Error::InvalidArgument(format!(
            "{k} folds requested for {} subjects",
            subjects.len()
        )));
    }
    let mut strata: BTreeMap<Option<&str>, Vec<&str>> = BTreeMap::new();
    let mut seen = std::collections::BTreeSet::new();
    for s in subjects {
        if !seen.insert(s.subject_id.as_str()) {
            return Err(Error::InvalidArgument(format!("duplicate subject id `{}`", s.subject_id)));
        }
        strata.entry(s.stratum.as_deref()).or_default().push(&s.subject_id);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = BTreeMap::new();
    let mut next = 0usize;
    for ids in strata.values_mut() {
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        for id in ids.iter() {
            assignment.insert(id.to_string(), next % k);
            next += 1;
        }
    }
    Ok(FoldTable { k, seed, assignment })
}

/// Native-grid maps for one subject.
#[derive(Debug, Clone, Copy)]
pub struct DlSubjectSources<'a> {
    pub subject_id: &'a str,
    /// β₀ z, β₁ z, BAT z.
    pub primary: [&'a Volume3D; 3],
    /// HC CVR z, HC BAT z.
    pub labels: [&'a Volume3D; 2],
    pub residual: &'a Volume4D,
    pub atlas: &'a LabelAtlas,
    pub brain: &'a Mask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DlSample {
    pub sample_id: String,
    pub subject_id: String,
    pub slice: usize,
    pub fold: usize,
    /// In-brain voxels on this slice; zero marks slices without signal.
    pub brain_voxels: usize,
    pub primary: PathBuf,
    pub supplementary: PathBuf,
    pub labels: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectExport {
    pub subject_id: String,
    pub fold: usize,
    pub primary: PathBuf,
    pub supplementary: PathBuf,
    pub labels: PathBuf,
    /// Fraction of in-brain voxels moved by the clip, per channel.
    pub clip_fractions: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub samples: Vec<DlSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DlIndex {
    pub schema_version: u32,
    pub grid: Dims3,
    pub clip_range: [f64; 2],
    pub primary_channels: Vec<String>,
    pub supplementary_channels: usize,
    pub label_channels: Vec<String>,
    pub folds: FoldTable,
    pub subjects: Vec<SubjectExport>,
    pub samples: Vec<DlSample>,
    pub warnings: Vec<String>,
}

impl DlIndex {
    pub fn new(folds: FoldTable, exports: Vec<SubjectExport>, grid: Dims3, warnings: Vec<String>) -> Self {
        let samples = exports.iter().flat_map(|e| e.samples.iter().cloned()).collect();
        DlIndex {
            schema_version: INDEX_SCHEMA_VERSION,
            grid,
            clip_range: DL_CLIP,
            primary_channels: PRIMARY_CHANNELS.iter().map(|s| s.to_string()).collect(),
            supplementary_channels: CC_CHANNELS,
            label_channels: LABEL_CHANNELS.iter().map(|s| s.to_string()).collect(),
            folds,
            subjects: exports,
            samples,
            warnings,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn check_subject_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id != "."
        && id != ".."
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "subject id `{id}` must be non-empty and use only letters, digits, `-`, `_` or `.`"
        )))
    }
}

/// Zero outside the brain, pad, clip. Returns the padded frame and clip fraction.
fn prepare(vol: &Volume3D, brain: &Mask, padded_brain: &Mask, grid: Dims3) -> Result<(Volume3D, f64)> {
    let masked = ZMap::from_parts(vol.clone(), brain.clone(), MapKind::Cc)?;
    let padded = pad_to_grid(masked.volume(), grid)?;
    let z = ZMap::from_parts(padded, padded_brain.clone(), MapKind::Cc)?;
    let (clipped, frac) = clip_range(&z, DL_CLIP[0], DL_CLIP[1])?;
    Ok((clipped.into_volume(), frac))
}

/// Writes the three stacks for one subject under `out_dir/<subject_id>/` on
/// the standard grid.
pub fn export_subject(src: &DlSubjectSources<'_>, fold: usize, out_dir: &Path) -> Result<SubjectExport> {
    export_subject_on_grid(src, fold, out_dir, DL_GRID)
}

/// As [`export_subject`] with an explicit target grid.
pub fn export_subject_on_grid(
    src: &DlSubjectSources<'_>,
    fold: usize,
    out_dir: &Path,
    grid: Dims3,
) -> Result<SubjectExport> {
    check_subject_id(src.subject_id)?;
    let dims = src.brain.dims();
    for (name, v) in PRIMARY_CHANNELS.iter().zip(src.primary).chain(LABEL_CHANNELS.iter().zip(src.labels)) {
        if v.dims() != dims {
            return Err(Error::DimensionMismatch(format!(
                "{} {}: {:?} vs brain mask {:?}",
                src.subject_id,
                name,
                v.dims(),
                dims
            )));
        }
    }
    if let Some(&bad) = src.atlas.label_ids().iter().find(|&&l| l as usize > CC_CHANNELS) {
        return Err(Error::InvalidArgument(format!(
            "{}: atlas label {bad} exceeds the {CC_CHANNELS} supplementary channels",
            src.subject_id
        )));
    }
    if (0..3).any(|a| dims[a] > grid[a]) {
        return Err(Error::InvalidArgument(format!(
            "{}: grid {dims:?} does not fit in the export grid {grid:?}",
            src.subject_id
        )));
    }
    let spacing = src.primary[0].spacing();
    let padded_brain = pad_mask_to_grid(src.brain, grid)?;
    let rel = PathBuf::from(src.subject_id);
    let sub_dir = out_dir.join(&rel);
    std::fs::create_dir_all(&sub_dir).map_err(|e| Error::io(&sub_dir, e))?;

    let mut clip_fractions = BTreeMap::new();
    let mut write_small = |file: &str, names: &[&str], vols: &[&Volume3D]| -> Result<()> {
        let mut w = StackWriter::create(sub_dir.join(file), grid, spacing, vols.len())?;
        for (name, v) in names.iter().zip(vols) {
            let (frame, frac) = prepare(v, src.brain, &padded_brain, grid)?;
            w.push(&frame)?;
            clip_fractions.insert(name.to_string(), frac);
        }
        w.finish()
    };
    write_small("primary.nii", &PRIMARY_CHANNELS, &src.primary)?;
    write_small("labels.nii", &LABEL_CHANNELS, &src.labels)?;

    let zero = Volume3D::zeros(grid, spacing)?;
    let mut w = StackWriter::create(sub_dir.join("supplementary.nii"), grid, spacing, CC_CHANNELS)?;
    let mut next = 0usize;
    let mut warnings = residual_cc_bank_each(src.residual, src.atlas, src.brain, |m| {
        let channel = m.label as usize - 1;
        while next < channel {
            w.push(&zero)?;
            next += 1;
        }
        let (frame, frac) = prepare(m.map.volume(), src.brain, &padded_brain, grid)?;
        w.push(&frame)?;
        clip_fractions.insert(format!("cc_{:03}", m.label), frac);
        next += 1;
        Ok(())
    })?;
    let absent = CC_CHANNELS - src.atlas.label_ids().len();
    if absent > 0 {
        warnings.push(format!("{absent} atlas labels absent; their channels are zero"));
    }
    while next < CC_CHANNELS {
        w.push(&zero)?;
        next += 1;
    }
    w.finish()?;
    let warnings = warnings.into_iter().map(|w| format!("{}: {w}", src.subject_id)).collect();

    let primary = rel.join("primary.nii");
    let supplementary = rel.join("supplementary.nii");
    let labels = rel.join("labels.nii");
    let plane = grid[0] * grid[1];
    let samples = (0..grid[2])
        .map(|z| DlSample {
            sample_id: format!("{}_z{z:03}", src.subject_id),
            subject_id: src.subject_id.to_string(),
            slice: z,
            fold,
            brain_voxels: padded_brain.data()[z * plane..(z + 1) * plane].iter().filter(|&&b| b).count(),
            primary: primary.clone(),
            supplementary: supplementary.clone(),
            labels: labels.clone(),
        })
        .collect();
    Ok(SubjectExport {
        subject_id: src.subject_id.to_string(),
        fold,
        primary,
        supplementary,
        labels,
        clip_fractions,
        warnings,
        samples,
    })
}

//! Volumetric data model: 3-D/4-D scalar grids, masks, label atlases and
//! z-scored parametric maps, plus the grid utilities shared by all pipelines
//! (zero padding, cropping, clipping and in-mask z-scoring).
//!
//! All grids are stored with x varying fastest, then y, then z (then t), the
//! same order NIfTI uses on disk.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Dims3 = [usize; 3];
pub type Spacing3 = [f64; 3];

fn check_spacing(spacing: Spacing3) -> Result<()> {
    if spacing.iter().all(|s| s.is_finite() && *s > 0.0) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "voxel spacing must be positive, got {spacing:?}"
        )))
    }
}

fn check_dims(dims: Dims3) -> Result<()> {
    if dims.iter().all(|&d| d > 0) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "grid dimensions must be positive, got {dims:?}"
        )))
    }
}

#[inline]
pub fn voxel_count(dims: Dims3) -> usize {
    dims[0] * dims[1] * dims[2]
}

#[inline]
pub fn linear_index(dims: Dims3, x: usize, y: usize, z: usize) -> usize {
    x + dims[0] * (y + dims[1] * z)
}

/// A 3-D scalar grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    dims: Dims3,
    spacing: Spacing3,
    data: Vec<f64>,
}

impl Volume3D {
    pub fn new(dims: Dims3, spacing: Spacing3, data: Vec<f64>) -> Result<Self> {
        check_dims(dims)?;
        check_spacing(spacing)?;
        if data.len() != voxel_count(dims) {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {:?} grid",
                data.len(),
                dims
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite value at voxel {i}"
            )));
        }
        Ok(Volume3D {
            dims,
            spacing,
            data,
        })
    }

    pub fn zeros(dims: Dims3, spacing: Spacing3) -> Result<Self> {
        Self::new(dims, spacing, vec![0.0; voxel_count(dims)])
    }

    pub fn filled(dims: Dims3, spacing: Spacing3, value: f64) -> Result<Self> {
        Self::new(dims, spacing, vec![value; voxel_count(dims)])
    }

    pub fn dims(&self) -> Dims3 {
        self.dims
    }

    pub fn spacing(&self) -> Spacing3 {
        self.spacing
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[linear_index(self.dims, x, y, z)]
    }

    /// Same grid, new values.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        Self::new(self.dims, self.spacing, data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        self.with_data(self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn same_grid(&self, dims: Dims3) -> bool {
        self.dims == dims
    }
}

/// A 4-D scalar grid: a time series per voxel sampled every `tr` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume4D {
    dims: Dims3,
    nt: usize,
    spacing: Spacing3,
    tr: f64,
    data: Vec<f64>,
}

impl Volume4D {
    pub fn new(dims: Dims3, nt: usize, spacing: Spacing3, tr: f64, data: Vec<f64>) -> Result<Self> {
        check_dims(dims)?;
        check_spacing(spacing)?;
        if nt < 2 {
            return Err(Error::InvalidArgument(format!(
                "a 4-D volume needs at least 2 timepoints, got {nt}"
            )));
        }
        if !(tr.is_finite() && tr > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "repetition time must be positive, got {tr}"
            )));
        }
        if data.len() != voxel_count(dims) * nt {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {:?} x {} grid",
                data.len(),
                dims,
                nt
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite value at sample {i}"
            )));
        }
        Ok(Volume4D {
            dims,
            nt,
            spacing,
            tr,
            data,
        })
    }

    /// Builds a volume from one series per voxel (voxel-major input).
    pub fn from_voxel_series(
        dims: Dims3,
        spacing: Spacing3,
        tr: f64,
        series: &[Vec<f64>],
    ) -> Result<Self> {
        let nvox = voxel_count(dims);
        if series.len() != nvox {
            return Err(Error::DimensionMismatch(format!(
                "{} series for {} voxels",
                series.len(),
                nvox
            )));
        }
        let nt = series.first().map_or(0, Vec::len);
        if series.iter().any(|s| s.len() != nt) {
            return Err(Error::DimensionMismatch(
                "voxel series have unequal lengths".into(),
            ));
        }
        let mut data = vec![0.0; nvox * nt];
        for (v, s) in series.iter().enumerate() {
            for (t, &val) in s.iter().enumerate() {
                data[t * nvox + v] = val;
            }
        }
        Self::new(dims, nt, spacing, tr, data)
    }

    /// Stacks 3-D frames (all on the same grid) along time.
    pub fn from_frames(frames: &[Volume3D], tr: f64) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::InvalidArgument("no frames to stack".into()))?;
        let mut data = Vec::with_capacity(first.len() * frames.len());
        for f in frames {
            if f.dims() != first.dims() {
                return Err(Error::DimensionMismatch(format!(
                    "frame grid {:?} differs from {:?}",
                    f.dims(),
                    first.dims()
                )));
            }
            data.extend_from_slice(f.data());
        }
        Self::new(first.dims(), frames.len(), first.spacing(), tr, data)
    }

    pub fn dims(&self) -> Dims3 {
        self.dims
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn spacing(&self) -> Spacing3 {
        self.spacing
    }

    pub fn tr(&self) -> f64 {
        self.tr
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn n_voxels(&self) -> usize {
        voxel_count(self.dims)
    }

    pub fn voxel_series(&self, voxel: usize) -> Vec<f64> {
        let nvox = self.n_voxels();
        (0..self.nt).map(|t| self.data[t * nvox + voxel]).collect()
    }

    pub fn frame(&self, t: usize) -> Volume3D {
        let nvox = self.n_voxels();
        Volume3D {
            dims: self.dims,
            spacing: self.spacing,
            data: self.data[t * nvox..(t + 1) * nvox].to_vec(),
        }
    }

    pub fn frames(&self) -> Vec<Volume3D> {
        (0..self.nt).map(|t| self.frame(t)).collect()
    }

    /// Applies `f` to every voxel's time series independently.
    pub fn map_series(&self, f: impl Fn(&[f64]) -> Vec<f64> + Sync) -> Result<Self> {
        use rayon::prelude::*;
        let series: Vec<Vec<f64>> = (0..self.n_voxels())
            .into_par_iter()
            .map(|v| f(&self.voxel_series(v)))
            .collect();
        Self::from_voxel_series(self.dims, self.spacing, self.tr, &series)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.dims,
            self.nt,
            self.spacing,
            self.tr,
            self.data.iter().map(|v| v * factor).collect(),
        )
    }
}

/// Boolean voxel mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    dims: Dims3,
    data: Vec<bool>,
    count: usize,
}

impl Mask {
    pub fn new(dims: Dims3, data: Vec<bool>) -> Result<Self> {
        check_dims(dims)?;
        if data.len() != voxel_count(dims) {
            return Err(Error::DimensionMismatch(format!(
                "{} mask values for a {:?} grid",
                data.len(),
                dims
            )));
        }
        let count = data.iter().filter(|&&b| b).count();
        Ok(Mask { dims, data, count })
    }

    pub fn full(dims: Dims3) -> Result<Self> {
        Self::new(dims, vec![true; voxel_count(dims)])
    }

    pub fn from_fn(dims: Dims3, f: impl Fn(usize, usize, usize) -> bool) -> Result<Self> {
        let mut data = Vec::with_capacity(voxel_count(dims));
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    data.push(f(x, y, z));
                }
            }
        }
        Self::new(dims, data)
    }

    /// Voxels with a value strictly greater than zero.
    pub fn from_volume(vol: &Volume3D) -> Result<Self> {
        Self::new(vol.dims(), vol.data().iter().map(|&v| v > 0.0).collect())
    }

    pub fn dims(&self) -> Dims3 {
        self.dims
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn contains(&self, voxel: usize) -> bool {
        self.data[voxel]
    }

    pub fn indices(&self) -> Vec<usize> {
        self.data
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    pub fn and(&self, other: &Mask) -> Result<Mask> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch(format!(
                "mask grids {:?} and {:?}",
                self.dims, other.dims
            )));
        }
        Mask::new(
            self.dims,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| *a && *b)
                .collect(),
        )
    }

    pub fn to_volume(&self, spacing: Spacing3) -> Result<Volume3D> {
        Volume3D::new(
            self.dims,
            spacing,
            self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
    }

    pub(crate) fn require(&self, dims: Dims3, what: &str) -> Result<()> {
        if self.dims != dims {
            return Err(Error::DimensionMismatch(format!(
                "{what} grid {:?} does not match data grid {:?}",
                self.dims, dims
            )));
        }
        Ok(())
    }
}

/// Integer label volume; 0 is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelAtlas {
    dims: Dims3,
    labels: Vec<u32>,
    label_ids: Vec<u32>,
}

impl LabelAtlas {
    pub fn new(dims: Dims3, labels: Vec<u32>) -> Result<Self> {
        check_dims(dims)?;
        if labels.len() != voxel_count(dims) {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for a {:?} grid",
                labels.len(),
                dims
            )));
        }
        let mut label_ids: Vec<u32> = labels.iter().copied().filter(|&l| l != 0).collect();
        label_ids.sort_unstable();
        label_ids.dedup();
        Ok(LabelAtlas {
            dims,
            labels,
            label_ids,
        })
    }

    /// Rounds a floating-point label volume (as read from NIfTI) to labels.
    pub fn from_volume(vol: &Volume3D) -> Result<Self> {
        let labels = vol
            .data()
            .iter()
            .map(|&v| {
                if v < 0.0 || v.fract().abs() > 1e-6 {
                    Err(Error::InvalidArgument(format!(
                        "atlas value {v} is not a non-negative integer"
                    )))
                } else {
                    Ok(v.round() as u32)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(vol.dims(), labels)
    }

    pub fn dims(&self) -> Dims3 {
        self.dims
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Sorted distinct nonzero labels.
    pub fn label_ids(&self) -> &[u32] {
        &self.label_ids
    }

    pub fn region(&self, label: u32) -> Mask {
        Mask::new(self.dims, self.labels.iter().map(|&l| l == label).collect())
            .expect("atlas grid is valid")
    }

    pub fn to_volume(&self, spacing: Spacing3) -> Result<Volume3D> {
        Volume3D::new(
            self.dims,
            spacing,
            self.labels.iter().map(|&l| f64::from(l)).collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    Cvr,
    Bat,
    Cc,
    RawCoeff,
}

/// A parametric map z-scored within `mask`; voxels outside the mask are 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ZMap {
    volume: Volume3D,
    mask: Mask,
    kind: MapKind,
}

impl ZMap {
    pub fn volume(&self) -> &Volume3D {
        &self.volume
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    pub fn into_volume(self) -> Volume3D {
        self.volume
    }

    /// Wraps an existing map without re-normalizing. Out-of-mask voxels are zeroed.
    pub fn from_parts(volume: Volume3D, mask: Mask, kind: MapKind) -> Result<Self> {
        mask.require(volume.dims(), "mask")?;
        let data = volume
            .data()
            .iter()
            .zip(mask.data())
            .map(|(&v, &m)| if m { v } else { 0.0 })
            .collect();
        Ok(ZMap {
            volume: volume.with_data(data)?,
            mask,
            kind,
        })
    }

    /// All-zero placeholder map (used for empty or degenerate inputs).
    pub fn zeros(dims: Dims3, spacing: Spacing3, mask: Mask, kind: MapKind) -> Result<Self> {
        Self::from_parts(Volume3D::zeros(dims, spacing)?, mask, kind)
    }
}

/// Population mean and standard deviation of the in-mask values.
pub fn masked_mean_std(values: &[f64], mask: &Mask) -> (f64, f64) {
    let n = mask.count() as f64;
    let mean = values
        .iter()
        .zip(mask.data())
        .filter(|(_, &m)| m)
        .map(|(v, _)| v)
        .sum::<f64>()
        / n;
    let var = values
        .iter()
        .zip(mask.data())
        .filter(|(_, &m)| m)
        .map(|(v, _)| (v - mean).powi(2))
        .sum::<f64>()
        / n;
    (mean, var.sqrt())
}

/// Z-scores `map` over the voxels of `mask` (population standard deviation).
pub fn zscore_within_mask(map: &Volume3D, mask: &Mask, kind: MapKind) -> Result<ZMap> {
    mask.require(map.dims(), "mask")?;
    if mask.count() < 2 {
        return Err(Error::InvalidArgument(format!(
            "z-scoring needs at least 2 in-mask voxels, mask has {}",
            mask.count()
        )));
    }
    let (mean, std) = masked_mean_std(map.data(), mask);
    let scale = map
        .data()
        .iter()
        .zip(mask.data())
        .filter(|(_, &m)| m)
        .fold(0.0_f64, |acc, (v, _)| acc.max(v.abs()));
    if !(std > 64.0 * f64::EPSILON * scale) {
        return Err(Error::DegenerateMap(format!(
            "in-mask values are constant (mean {mean}, std {std})"
        )));
    }
    let data = map
        .data()
        .iter()
        .zip(mask.data())
        .map(|(&v, &m)| if m { (v - mean) / std } else { 0.0 })
        .collect();
    Ok(ZMap {
        volume: map.with_data(data)?,
        mask: mask.clone(),
        kind,
    })
}

/// Saturates in-mask values to `[lo, hi]` and reports the fraction of
/// in-mask voxels that were moved.
pub fn clip_range(map: &ZMap, lo: f64, hi: f64) -> Result<(ZMap, f64)> {
    if !(lo < hi) {
        return Err(Error::InvalidArgument(format!(
            "clip range requires lo < hi, got [{lo}, {hi}]"
        )));
    }
    let mut moved = 0usize;
    let data = map
        .volume
        .data()
        .iter()
        .zip(map.mask.data())
        .map(|(&v, &m)| {
            if !m {
                return 0.0;
            }
            let c = v.clamp(lo, hi);
            if c != v {
                moved += 1;
            }
            c
        })
        .collect();
    let fraction = if map.mask.count() == 0 {
        0.0
    } else {
        moved as f64 / map.mask.count() as f64
    };
    Ok((
        ZMap {
            volume: map.volume.with_data(data)?,
            mask: map.mask.clone(),
            kind: map.kind,
        },
        fraction,
    ))
}

/// Low-side offset for centering `src` inside `dst`; the odd voxel goes to the high side.
fn centered_offset(src: usize, dst: usize) -> usize {
    (dst - src) / 2
}

fn check_pad_target(src: Dims3, target: Dims3) -> Result<()> {
    if (0..3).any(|a| target[a] < src[a]) {
        return Err(Error::InvalidArgument(format!(
            "pad target {target:?} is smaller than source grid {src:?}"
        )));
    }
    Ok(())
}

fn pad_values<T: Copy>(src: &[T], dims: Dims3, target: Dims3, fill: T) -> Vec<T> {
    let off = [
        centered_offset(dims[0], target[0]),
        centered_offset(dims[1], target[1]),
        centered_offset(dims[2], target[2]),
    ];
    let mut out = vec![fill; voxel_count(target)];
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            let s = linear_index(dims, 0, y, z);
            let d = linear_index(target, off[0], y + off[1], z + off[2]);
            out[d..d + dims[0]].copy_from_slice(&src[s..s + dims[0]]);
        }
    }
    out
}

/// Zero-pads a volume to `target`, keeping the data centered.
pub fn pad_to_grid(vol: &Volume3D, target: Dims3) -> Result<Volume3D> {
    check_pad_target(vol.dims(), target)?;
    Volume3D::new(
        target,
        vol.spacing(),
        pad_values(vol.data(), vol.dims(), target, 0.0),
    )
}

pub fn pad_mask_to_grid(mask: &Mask, target: Dims3) -> Result<Mask> {
    check_pad_target(mask.dims(), target)?;
    Mask::new(target, pad_values(mask.data(), mask.dims(), target, false))
}

/// Inverse of [`pad_to_grid`]: extracts the centered `target` sub-grid.
pub fn crop_to_grid(vol: &Volume3D, target: Dims3) -> Result<Volume3D> {
    let dims = vol.dims();
    if (0..3).any(|a| target[a] > dims[a]) {
        return Err(Error::InvalidArgument(format!(
            "crop target {target:?} is larger than source grid {dims:?}"
        )));
    }
    let off = [
        centered_offset(target[0], dims[0]),
        centered_offset(target[1], dims[1]),
        centered_offset(target[2], dims[2]),
    ];
    let mut out = Vec::with_capacity(voxel_count(target));
    for z in 0..target[2] {
        for y in 0..target[1] {
            let s = linear_index(dims, off[0], y + off[1], z + off[2]);
            out.extend_from_slice(&vol.data()[s..s + target[0]]);
        }
    }
    Volume3D::new(target, vol.spacing(), out)
}

//! End-to-end map computation: resting-state (GRRS) CVR/BAT, the residual
//! cross-correlation bank, and hypercapnic (HC) CVR/BAT.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{glm_volume, lag_search_volume, Covariate, DesignMatrix, LagSearchConfig};
use crate::signal::{
    align_by_max_cc, detrend_values, etco2_envelope, gaussian_smooth4d, interp_clamped, pearson,
    shift_values, BandFilter, FilterSpec, TimeSeries,
};
use crate::volume::{zscore_within_mask, LabelAtlas, MapKind, Mask, Volume3D, Volume4D, ZMap};

/// Upper edge of the resting-state pass-band, Hz.
pub const RS_BAND_HI_HZ: f64 = 0.1164;
pub const DEFAULT_FWHM_MM: f64 = 8.0;
/// Relative threshold on |β₀| (against the in-mask median) below which a ratio is zeroed.
pub const DEFAULT_BETA0_GUARD: f64 = 1e-3;
/// Alignment correlations below this are reported as warnings.
pub const MIN_ALIGNMENT_CC: f64 = 0.2;
/// Allowed gap between the CO₂ record and either end of the BOLD record, seconds.
pub const CO2_COVERAGE_SLACK_S: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceTiming {
    BeforeSmoothing,
    AfterSmoothing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrrsConfig {
    pub band_hz: (f64, f64),
    /// `None` disables spatial smoothing.
    pub fwhm_mm: Option<f64>,
    pub reference_timing: ReferenceTiming,
    pub lag: LagSearchConfig,
    pub beta0_guard: f64,
}

impl Default for GrrsConfig {
    fn default() -> Self {
        GrrsConfig {
            band_hz: (0.0, RS_BAND_HI_HZ),
            fwhm_mm: Some(DEFAULT_FWHM_MM),
            reference_timing: ReferenceTiming::AfterSmoothing,
            lag: LagSearchConfig::resting_state(),
            beta0_guard: DEFAULT_BETA0_GUARD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HcConfig {
    pub fwhm_mm: Option<f64>,
    pub lag: LagSearchConfig,
    pub align_range_s: (f64, f64),
    pub align_step_s: f64,
    pub min_breath_period_s: f64,
    /// Fixed baseline EtCO₂ in mmHg; `None` estimates it from the lowest quartile.
    pub b_etco2_mmhg: Option<f64>,
    /// Relative guard on the CVR denominator, like the GRRS β₀ guard.
    pub denominator_guard: f64,
}

impl Default for HcConfig {
    fn default() -> Self {
        HcConfig {
            fwhm_mm: Some(DEFAULT_FWHM_MM),
            lag: LagSearchConfig::hypercapnic(),
            align_range_s: (-10.0, 30.0),
            align_step_s: 0.1,
            min_breath_period_s: 2.0,
            b_etco2_mmhg: None,
            denominator_guard: DEFAULT_BETA0_GUARD,
        }
    }
}

/// Mean series over `region`.
pub fn compute_reference_ts(vol: &Volume4D, region: &Mask) -> Result<TimeSeries> {
    region.require(vol.dims(), "reference region")?;
    let idx = region.indices();
    if idx.is_empty() {
        return Err(Error::InvalidArgument("reference region is empty".into()));
    }
    let nvox = vol.n_voxels();
    let data = vol.data();
    let values = (0..vol.nt())
        .map(|t| {
            let frame = &data[t * nvox..(t + 1) * nvox];
            idx.iter().map(|&v| frame[v]).sum::<f64>() / idx.len() as f64
        })
        .collect();
    TimeSeries::new(values, vol.tr(), 0.0)
}

/// Flat up to rounding: spread at most 1e-10 of the series' magnitude.
fn is_flat(values: &[f64]) -> bool {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hi - lo <= 1e-10 * lo.abs().max(hi.abs())
}

fn require_nondegenerate(ts: &TimeSeries, what: &str) -> Result<()> {
    if is_flat(ts.values()) {
        return Err(Error::DegenerateSeries(format!("{what} is constant")));
    }
    Ok(())
}

/// Detrends every voxel (keeping its temporal mean) and applies the band filter.
pub fn detrend_and_filter(bold: &Volume4D, band: FilterSpec) -> Result<Volume4D> {
    let filter = BandFilter::new(bold.nt(), bold.tr(), band)?;
    bold.map_series(|y| {
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let mut d = detrend_values(y);
        d.iter_mut().for_each(|v| *v += mean);
        filter.apply(&d)
    })
}

/// Six rigid-body motion traces → filtered traces plus their squares.
///
/// Each column is detrended and band-filtered like the BOLD data before
/// squaring. Columns that end up constant (for example all-zero traces) are
/// dropped so they cannot make the design rank deficient.
pub fn motion_covariates(motion: &[Vec<f64>], nt: usize, tr: f64, band: FilterSpec) -> Result<Vec<Covariate>> {
    let filter = BandFilter::new(nt, tr, band)?;
    let mut out = Vec::new();
    for (j, col) in motion.iter().enumerate() {
        if col.len() != nt {
            return Err(Error::DimensionMismatch(format!(
                "motion column {} has {} rows, BOLD has {nt} volumes",
                j + 1,
                col.len()
            )));
        }
        let scale = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let f = filter.apply(&detrend_values(col));
        let sq: Vec<f64> = f.iter().map(|v| v * v).collect();
        for (name, vals, tol) in [
            (format!("motion{}", j + 1), f, 1e-12 * (1.0 + scale)),
            (format!("motion{}_sq", j + 1), sq, 1e-24 * (1.0 + scale * scale)),
        ] {
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi - lo > tol {
                out.push(Covariate::new(name, vals));
            }
        }
    }
    Ok(out)
}

fn centred(values: &[f64]) -> Vec<f64> {
    let m = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| v - m).collect()
}

/// Design with intercept plus mean-centred regressor and covariates, so that
/// β₀ is the voxel's temporal mean.
fn centred_design(name: &str, regressor: &[f64], covs: &[Covariate]) -> Result<DesignMatrix> {
    let covs: Vec<Covariate> = covs
        .iter()
        .map(|c| Covariate::new(c.name.clone(), centred(&c.values)))
        .collect();
    DesignMatrix::new(name, &centred(regressor))?.with_covariates(&covs)
}

fn not_in(brain: &Mask, defects: &Mask) -> Result<Mask> {
    Mask::new(
        brain.dims(),
        brain.data().iter().zip(defects.data()).map(|(&b, &d)| b && !d).collect(),
    )
}

/// Z-scores `map` in `mask`; a degenerate map becomes all zeros plus a warning.
fn zscore_or_zero(map: &Volume3D, mask: &Mask, kind: MapKind, what: &str, warnings: &mut Vec<String>) -> Result<ZMap> {
    let result = if mask.count() < 2 {
        Err(Error::DegenerateMap(format!("{} voxels in mask", mask.count())))
    } else {
        zscore_within_mask(map, mask, kind)
    };
    match result {
        Ok(z) => Ok(z),
        Err(e @ Error::DegenerateMap(_)) => {
            warnings.push(format!("{what}: {e}; emitting zero map"));
            ZMap::zeros(map.dims(), map.spacing(), mask.clone(), kind)
        }
        Err(e) => Err(e),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Voxelwise `num / den` with voxels where `|den| < eps · median_mask |den|` set to 0 and flagged.
pub fn guarded_ratio(num: &Volume3D, den: &Volume3D, mask: &Mask, eps: f64) -> Result<(Volume3D, Mask)> {
    mask.require(num.dims(), "ratio mask")?;
    mask.require(den.dims(), "ratio mask")?;
    let med = median(mask.indices().iter().map(|&v| den.data()[v].abs()).collect());
    let threshold = eps * med;
    let mut out = vec![0.0; num.len()];
    let mut flags = vec![false; num.len()];
    for v in mask.indices() {
        let d = den.data()[v];
        if d.abs() < threshold || d == 0.0 {
            flags[v] = true;
        } else {
            out[v] = num.data()[v] / d;
        }
    }
    Ok((num.with_data(out)?, Mask::new(num.dims(), flags)?))
}

#[derive(Debug, Clone)]
pub struct GrrsRawMaps {
    pub beta0: Volume3D,
    pub beta1: Volume3D,
    /// β₁/β₀ after the β₀ guard.
    pub ratio: Volume3D,
    pub shift_s: Volume3D,
    pub r_squared: Volume3D,
}

#[derive(Debug, Clone)]
pub struct GrrsOutputs {
    pub cvr_beta0_z: ZMap,
    pub cvr_beta1_z: ZMap,
    pub cvr_ratio_z: ZMap,
    pub bat_z: ZMap,
    pub residual: Volume4D,
    pub raw: GrrsRawMaps,
    pub reference: TimeSeries,
    pub guard_flags: Mask,
    pub defects: Mask,
    pub covariate_names: Vec<String>,
    pub warnings: Vec<String>,
}

/// Resting-state pipeline: detrend, band filter, smooth, cerebellar
/// reference, zero-shift GLM (coefficients and residual), lag search, z-scores.
pub fn grrs_pipeline(
    bold: &Volume4D,
    cerebellum: &Mask,
    brain: &Mask,
    motion: Option<&[Vec<f64>]>,
    cfg: &GrrsConfig,
) -> Result<GrrsOutputs> {
    cerebellum.require(bold.dims(), "cerebellum mask")?;
    brain.require(bold.dims(), "brain mask")?;
    let band = FilterSpec::new(cfg.band_hz.0, cfg.band_hz.1)?;
    let filtered = detrend_and_filter(bold, band)?;
    let (processed, reference) = match (cfg.fwhm_mm, cfg.reference_timing) {
        (None, _) => {
            let r = compute_reference_ts(&filtered, cerebellum)?;
            (filtered, r)
        }
        (Some(fwhm), ReferenceTiming::BeforeSmoothing) => {
            let r = compute_reference_ts(&filtered, cerebellum)?;
            (gaussian_smooth4d(&filtered, fwhm, brain)?, r)
        }
        (Some(fwhm), ReferenceTiming::AfterSmoothing) => {
            let s = gaussian_smooth4d(&filtered, fwhm, brain)?;
            let r = compute_reference_ts(&s, cerebellum)?;
            (s, r)
        }
    };
    require_nondegenerate(&reference, "cerebellum reference")?;

    let covs = match motion {
        Some(m) => motion_covariates(m, bold.nt(), bold.tr(), band)?,
        None => Vec::new(),
    };
    let design = centred_design("reference", reference.values(), &covs)?;
    let (fit, residual) = glm_volume(&processed, &design, brain)?;
    let lag = lag_search_volume(&processed, &reference, &covs, &cfg.lag, brain)?;

    let defect_data: Vec<bool> = fit
        .defects
        .data()
        .iter()
        .zip(lag.fit.defects.data())
        .map(|(&a, &b)| a || b)
        .collect();
    let defects = Mask::new(bold.dims(), defect_data)?;
    let valid = not_in(brain, &defects)?;
    let (ratio, guard_flags) = guarded_ratio(&fit.beta1, &fit.beta0, &valid, cfg.beta0_guard)?;

    let mut warnings = Vec::new();
    if defects.count() > 0 {
        warnings.push(format!("{} in-mask voxels could not be fitted", defects.count()));
    }
    if guard_flags.count() > 0 {
        warnings.push(format!("{} voxels hit the beta0 guard", guard_flags.count()));
    }
    let cvr_beta0_z = zscore_or_zero(&fit.beta0, &valid, MapKind::RawCoeff, "beta0", &mut warnings)?;
    let cvr_beta1_z = zscore_or_zero(&fit.beta1, &valid, MapKind::RawCoeff, "beta1", &mut warnings)?;
    let cvr_ratio_z = zscore_or_zero(&ratio, &valid, MapKind::Cvr, "cvr ratio", &mut warnings)?;
    let bat_z = zscore_or_zero(&lag.shift_s, &valid, MapKind::Bat, "bat", &mut warnings)?;

    Ok(GrrsOutputs {
        cvr_beta0_z,
        cvr_beta1_z,
        cvr_ratio_z,
        bat_z,
        residual,
        raw: GrrsRawMaps {
            beta0: fit.beta0,
            beta1: fit.beta1,
            ratio,
            shift_s: lag.shift_s,
            r_squared: fit.r_squared,
        },
        reference,
        guard_flags,
        defects,
        covariate_names: covs.into_iter().map(|c| c.name).collect(),
        warnings,
    })
}

#[derive(Debug, Clone)]
pub struct CcBank {
    /// Atlas label of each map, ascending.
    pub labels: Vec<u32>,
    pub maps: Vec<ZMap>,
    pub roi_series: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

/// One correlation map of the bank, handed to a sink as soon as it is ready.
#[derive(Debug, Clone)]
pub struct CcMap {
    pub index: usize,
    pub label: u32,
    pub map: ZMap,
    pub roi_series: Vec<f64>,
}

/// Streams the bank map by map in ascending label order; returns the warnings.
///
/// Each map is the voxelwise Pearson correlation between the residual and
/// the ROI's mean residual series, z-scored within `brain`. Labels with no
/// in-brain voxels, constant ROI series, or degenerate maps yield zero maps.
pub fn residual_cc_bank_each(
    residual: &Volume4D,
    atlas: &LabelAtlas,
    brain: &Mask,
    mut sink: impl FnMut(CcMap) -> Result<()>,
) -> Result<Vec<String>> {
    let dims = residual.dims();
    if atlas.dims() != dims {
        return Err(Error::DimensionMismatch(format!(
            "atlas {:?} does not match residual {:?}",
            atlas.dims(),
            dims
        )));
    }
    brain.require(dims, "brain mask")?;
    let nvox = residual.n_voxels();
    let nt = residual.nt();
    let data = residual.data();
    let brain_idx = brain.indices();

    // Per-voxel mean and centred norm, computed once.
    let stats: Vec<(f64, f64)> = brain_idx
        .par_iter()
        .map(|&v| {
            let mean = (0..nt).map(|t| data[t * nvox + v]).sum::<f64>() / nt as f64;
            let ss = (0..nt).map(|t| (data[t * nvox + v] - mean).powi(2)).sum::<f64>();
            (mean, ss.sqrt())
        })
        .collect();

    let mut warnings = Vec::new();
    for (index, &label) in atlas.label_ids().iter().enumerate() {
        let roi: Vec<usize> = brain_idx
            .iter()
            .copied()
            .filter(|&v| atlas.labels()[v] == label)
            .collect();
        let zero = || ZMap::zeros(dims, residual.spacing(), brain.clone(), MapKind::Cc);
        if roi.is_empty() {
            warnings.push(format!("label {label}: no voxels inside the brain mask; emitting zero map"));
            sink(CcMap { index, label, map: zero()?, roi_series: vec![0.0; nt] })?;
            continue;
        }
        let series: Vec<f64> = (0..nt)
            .map(|t| roi.iter().map(|&v| data[t * nvox + v]).sum::<f64>() / roi.len() as f64)
            .collect();
        let sc = centred(&series);
        let snorm = sc.iter().map(|v| v * v).sum::<f64>().sqrt();
        if pearson(&series, &series).is_none() {
            warnings.push(format!("label {label}: ROI residual series is constant; emitting zero map"));
            sink(CcMap { index, label, map: zero()?, roi_series: series })?;
            continue;
        }
        let r: Vec<f64> = brain_idx
            .par_iter()
            .zip(&stats)
            .map(|(&v, &(_, norm))| {
                if norm == 0.0 {
                    return 0.0;
                }
                let dot: f64 = (0..nt).map(|t| data[t * nvox + v] * sc[t]).sum();
                (dot / (norm * snorm)).clamp(-1.0, 1.0)
            })
            .collect();
        let mut full = vec![0.0; nvox];
        for (&v, rv) in brain_idx.iter().zip(r) {
            full[v] = rv;
        }
        let rmap = Volume3D::new(dims, residual.spacing(), full)?;
        let map = zscore_or_zero(&rmap, brain, MapKind::Cc, &format!("label {label} cc"), &mut warnings)?;
        sink(CcMap { index, label, map, roi_series: series })?;
    }
    Ok(warnings)
}

/// Collects the whole bank in memory.
pub fn residual_cc_bank(residual: &Volume4D, atlas: &LabelAtlas, brain: &Mask) -> Result<CcBank> {
    let mut labels = Vec::new();
    let mut maps = Vec::new();
    let mut roi_series = Vec::new();
    let warnings = residual_cc_bank_each(residual, atlas, brain, |m| {
        labels.push(m.label);
        maps.push(m.map);
        roi_series.push(m.roi_series);
        Ok(())
    })?;
    Ok(CcBank { labels, maps, roi_series, warnings })
}

/// HC CVR from raw coefficients, relative to the baseline EtCO₂ state.
pub fn hc_cvr(beta0: f64, beta1: f64, b_etco2: f64) -> f64 {
    beta1 / (beta0 + b_etco2 * beta1)
}

/// Mean of the lowest quartile (at least one sample) of `values`.
pub fn lowest_quartile_mean(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = (v.len() / 4).max(1);
    v[..k].iter().sum::<f64>() / k as f64
}

/// Envelope of a raw CO₂ trace placed on the BOLD grid `t = i·tr`.
///
/// Edge values are held where the trace stops short of the BOLD record,
/// provided the gap is within [`CO2_COVERAGE_SLACK_S`].
pub fn etco2_on_bold_grid(co2: &TimeSeries, nt: usize, tr: f64, min_breath_period_s: f64) -> Result<TimeSeries> {
    let env = etco2_envelope(co2, min_breath_period_s)?;
    let bold_end = (nt - 1) as f64 * tr;
    let co2_end = env.t0() + env.duration();
    if env.t0() > CO2_COVERAGE_SLACK_S || co2_end < bold_end - CO2_COVERAGE_SLACK_S {
        return Err(Error::InvalidArgument(format!(
            "CO2 trace covers [{:.1}, {:.1}] s but BOLD spans [0, {bold_end:.1}] s (slack {CO2_COVERAGE_SLACK_S} s)",
            env.t0(),
            co2_end
        )));
    }
    let values = (0..nt)
        .map(|i| interp_clamped(env.values(), (i as f64 * tr - env.t0()) / env.dt()))
        .collect();
    TimeSeries::new(values, tr, 0.0)
}

#[derive(Debug, Clone)]
pub struct HcRawMaps {
    pub beta0: Volume3D,
    pub beta1: Volume3D,
    pub cvr: Volume3D,
    pub shift_s: Volume3D,
}

#[derive(Debug, Clone)]
pub struct HcOutputs {
    pub cvr_z: ZMap,
    pub bat_z: ZMap,
    pub b_etco2: f64,
    pub etco2_shift_s: f64,
    pub alignment_cc: f64,
    pub etco2_aligned: TimeSeries,
    pub reference: TimeSeries,
    pub raw: HcRawMaps,
    pub guard_flags: Mask,
    pub defects: Mask,
    pub warnings: Vec<String>,
}

/// Unit-slope (per second) ramp centred on zero.
pub fn drift_covariate(nt: usize, tr: f64) -> Covariate {
    let t: Vec<f64> = (0..nt).map(|i| i as f64 * tr).collect();
    Covariate::new("drift", centred(&t))
}

/// Hypercapnic pipeline from a raw CO₂ trace.
pub fn hc_pipeline(bold: &Volume4D, co2: &TimeSeries, cerebellum: &Mask, brain: &Mask, cfg: &HcConfig) -> Result<HcOutputs> {
    let etco2 = etco2_on_bold_grid(co2, bold.nt(), bold.tr(), cfg.min_breath_period_s)?;
    hc_from_etco2(bold, &etco2, cerebellum, brain, cfg)
}

/// Hypercapnic pipeline from an EtCO₂ series already on the BOLD grid.
pub fn hc_from_etco2(
    bold: &Volume4D,
    etco2: &TimeSeries,
    cerebellum: &Mask,
    brain: &Mask,
    cfg: &HcConfig,
) -> Result<HcOutputs> {
    cerebellum.require(bold.dims(), "cerebellum mask")?;
    brain.require(bold.dims(), "brain mask")?;
    if etco2.len() != bold.nt() {
        return Err(Error::DimensionMismatch(format!(
            "EtCO2 has {} samples, BOLD has {} volumes",
            etco2.len(),
            bold.nt()
        )));
    }
    let processed = match cfg.fwhm_mm {
        Some(fwhm) => gaussian_smooth4d(bold, fwhm, brain)?,
        None => bold.clone(),
    };
    let reference = compute_reference_ts(&processed, cerebellum)?;
    require_nondegenerate(&reference, "cerebellum reference")?;
    require_nondegenerate(etco2, "EtCO2 series")?;

    let mut warnings = Vec::new();
    let etco2 = TimeSeries::new(etco2.values().to_vec(), bold.tr(), 0.0)?;
    let (shift, cc) = align_by_max_cc(&etco2, &reference, cfg.align_range_s, cfg.align_step_s)?;
    if cc < MIN_ALIGNMENT_CC {
        warnings.push(format!(
            "EtCO2 alignment correlation {cc:.3} is below {MIN_ALIGNMENT_CC}"
        ));
    }
    let aligned = etco2.with_values(shift_values(etco2.values(), shift / etco2.dt()))?;

    let b_etco2 = match cfg.b_etco2_mmhg {
        Some(b) => b,
        None => lowest_quartile_mean(aligned.values()),
    };
    if !(b_etco2.is_finite() && b_etco2 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "baseline EtCO2 must be positive, got {b_etco2}"
        )));
    }

    let drift = drift_covariate(bold.nt(), bold.tr());
    let design = DesignMatrix::new("etco2", aligned.values())?.with_covariate(&drift)?;
    let (fit, _) = glm_volume(&processed, &design, brain)?;
    let lag = lag_search_volume(&processed, &aligned, std::slice::from_ref(&drift), &cfg.lag, brain)?;

    let defect_data: Vec<bool> = fit
        .defects
        .data()
        .iter()
        .zip(lag.fit.defects.data())
        .map(|(&a, &b)| a || b)
        .collect();
    let defects = Mask::new(bold.dims(), defect_data)?;
    let valid = not_in(brain, &defects)?;

    let den = fit
        .beta0
        .with_data(
            fit.beta0
                .data()
                .iter()
                .zip(fit.beta1.data())
                .map(|(b0, b1)| b0 + b_etco2 * b1)
                .collect(),
        )?;
    let (cvr, guard_flags) = guarded_ratio(&fit.beta1, &den, &valid, cfg.denominator_guard)?;
    if defects.count() > 0 {
        warnings.push(format!("{} in-mask voxels could not be fitted", defects.count()));
    }
    if guard_flags.count() > 0 {
        warnings.push(format!("{} voxels hit the CVR denominator guard", guard_flags.count()));
    }
    let cvr_z = zscore_or_zero(&cvr, &valid, MapKind::Cvr, "hc cvr", &mut warnings)?;
    let bat_z = zscore_or_zero(&lag.shift_s, &valid, MapKind::Bat, "hc bat", &mut warnings)?;

    Ok(HcOutputs {
        cvr_z,
        bat_z,
        b_etco2,
        etco2_shift_s: shift,
        alignment_cc: cc,
        etco2_aligned: aligned,
        reference,
        raw: HcRawMaps {
            beta0: fit.beta0,
            beta1: fit.beta1,
            cvr,
            shift_s: lag.shift_s,
        },
        guard_flags,
        defects,
        warnings,
    })
}

/// `(label, value)` rows in ascending label order.
pub type RoiTable = Vec<(u32, f64)>;

/// In-mask mean of `map` per atlas label, ascending; empty labels are omitted with a warning.
pub fn parcellate_means(map: &ZMap, atlas: &LabelAtlas) -> Result<(RoiTable, Vec<String>)> {
    parcellate_volume(map.volume(), map.mask(), atlas)
}

pub fn parcellate_volume(vol: &Volume3D, mask: &Mask, atlas: &LabelAtlas) -> Result<(RoiTable, Vec<String>)> {
    if atlas.dims() != vol.dims() {
        return Err(Error::DimensionMismatch(format!(
            "atlas {:?} does not match map {:?}",
            atlas.dims(),
            vol.dims()
        )));
    }
    mask.require(vol.dims(), "map mask")?;
    let mut sums = std::collections::BTreeMap::<u32, (f64, usize)>::new();
    for &l in atlas.label_ids() {
        sums.insert(l, (0.0, 0));
    }
    for (v, (&l, &m)) in atlas.labels().iter().zip(mask.data()).enumerate() {
        if l != 0 && m {
            let e = sums.get_mut(&l).expect("label listed");
            e.0 += vol.data()[v];
            e.1 += 1;
        }
    }
    let mut warnings = Vec::new();
    let mut out = Vec::new();
    for (l, (s, n)) in sums {
        if n == 0 {
            warnings.push(format!("label {l}: no in-mask voxels; omitted"));
        } else {
            out.push((l, s / n as f64));
        }
    }
    Ok((out, warnings))
}

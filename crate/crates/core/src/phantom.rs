//! Synthetic BOLD phantoms with known CVR and delay fields.
//!
//! Voxel model: `b0 · (1 + cvr · (d(t − bat) − d_base)) + σ·ε`, where `d` is
//! the driver evaluated in continuous time (so fractional delays are exact),
//! `d_base` is 0 for the resting-like driver and the baseline mmHg for the
//! block CO₂ driver, and ε is seeded i.i.d. standard normal noise.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::LagSearchConfig;
use crate::nifti::{load_volume3d, save_nifti, NiftiImage};
use crate::pipeline::RS_BAND_HI_HZ;
use crate::signal::TimeSeries;
use crate::tables::write_co2_csv;
use crate::volume::{linear_index, voxel_count, Dims3, LabelAtlas, Mask, Spacing3, Volume3D, Volume4D};

pub const BASELINE_SIGNAL: f64 = 1000.0;
/// Sampling interval of synthetic CO₂ traces, seconds.
pub const CO2_SAMPLE_S: f64 = 0.1;

fn default_band() -> f64 {
    RS_BAND_HI_HZ
}
fn default_ramp() -> f64 {
    10.0
}
fn default_breath() -> f64 {
    5.0
}
fn default_lead() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriverSpec {
    /// Band-limited Gaussian noise with unit variance on the sampling grid.
    RestingLike {
        #[serde(default = "default_band")]
        f_hi_hz: f64,
    },
    /// Baseline/plateau end-tidal CO₂ blocks joined by linear ramps.
    ///
    /// Each period starts with the ramp down from the previous plateau (none
    /// in the first period), holds baseline until `onset_s`, ramps up over
    /// `ramp_s` and holds the plateau to the end of the period.
    BlockCo2 {
        baseline_mmhg: f64,
        plateau_mmhg: f64,
        period_s: f64,
        onset_s: f64,
        #[serde(default = "default_ramp")]
        ramp_s: f64,
        #[serde(default = "default_breath")]
        breath_period_s: f64,
        /// How far the recorded CO₂ leads the cerebellar response.
        #[serde(default = "default_lead")]
        lead_s: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Constant { value: f64 },
    /// Equal contiguous blocks along `axis` (0 = x), one value per block.
    Blocks { axis: usize, values: Vec<f64> },
    /// A 3-D NIfTI on the phantom grid; relative paths resolve against the spec file.
    Nifti { path: PathBuf },
}

fn default_spacing() -> Spacing3 {
    [2.0, 2.0, 2.0]
}
fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    pub dims: Dims3,
    #[serde(default = "default_spacing")]
    pub spacing: Spacing3,
    pub tr: f64,
    pub nt: usize,
    pub driver: DriverSpec,
    pub cvr: FieldSpec,
    pub bat: FieldSpec,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    /// The lowest `cerebellum_slices` axial slices form the reference region (delay forced to 0).
    #[serde(default = "one")]
    pub cerebellum_slices: usize,
    /// Also write a synthetic atlas with this many labels.
    #[serde(default)]
    pub atlas_labels: Option<usize>,
}

impl PhantomSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Lag grid the phantom's delays must fit in.
    pub fn lag_bounds(&self) -> LagSearchConfig {
        match self.driver {
            DriverSpec::RestingLike { .. } => LagSearchConfig::resting_state(),
            DriverSpec::BlockCo2 { .. } => LagSearchConfig::hypercapnic(),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.dims.contains(&0) || self.spacing.iter().any(|&s| !(s > 0.0)) {
            return bad(format!("invalid grid {:?} / {:?}", self.dims, self.spacing));
        }
        if !(self.tr > 0.0) || self.nt < 8 {
            return bad(format!("need tr > 0 and nt >= 8, got tr = {}, nt = {}", self.tr, self.nt));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        if self.cerebellum_slices == 0 || self.cerebellum_slices > self.dims[2] {
            return bad(format!(
                "cerebellum_slices must be in 1..={}, got {}",
                self.dims[2], self.cerebellum_slices
            ));
        }
        match self.driver {
            DriverSpec::RestingLike { f_hi_hz } => {
                if !(f_hi_hz > 0.0 && f_hi_hz < 0.5 / self.tr) {
                    return bad(format!("driver band {f_hi_hz} Hz must lie below Nyquist"));
                }
            }
            DriverSpec::BlockCo2 {
                baseline_mmhg,
                plateau_mmhg,
                period_s,
                onset_s,
                ramp_s,
                breath_period_s,
                lead_s,
            } => {
                if !(baseline_mmhg > 0.0 && plateau_mmhg > baseline_mmhg) {
                    return bad("block driver needs 0 < baseline < plateau".into());
                }
                if !(ramp_s > 0.0 && onset_s >= ramp_s && onset_s + ramp_s < period_s) {
                    return bad("block driver needs ramp <= onset and onset + ramp < period".into());
                }
                if !(breath_period_s > 0.0 && lead_s >= 0.0) {
                    return bad("block driver needs breath_period > 0 and lead >= 0".into());
                }
            }
        }
        Ok(())
    }
}

/// A driver that can be evaluated at any time.
#[derive(Debug, Clone)]
pub enum Driver {
    Fourier {
        /// (frequency Hz, cosine weight, sine weight)
        terms: Vec<(f64, f64, f64)>,
    },
    Block {
        baseline: f64,
        plateau: f64,
        period: f64,
        onset: f64,
        ramp: f64,
    },
}

impl Driver {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Driver::Fourier { ref terms } => terms
                .iter()
                .map(|&(f, c, s)| {
                    let ph = 2.0 * PI * f * t;
                    c * ph.cos() + s * ph.sin()
                })
                .sum(),
            Driver::Block {
                baseline,
                plateau,
                period,
                onset,
                ramp,
            } => {
                let shape = if t < 0.0 {
                    0.0
                } else {
                    let k = (t / period).floor();
                    let tau = t - k * period;
                    if tau < ramp && k > 0.0 {
                        1.0 - tau / ramp
                    } else if tau < onset {
                        0.0
                    } else if tau < onset + ramp {
                        (tau - onset) / ramp
                    } else {
                        1.0
                    }
                };
                baseline + (plateau - baseline) * shape
            }
        }
    }

    /// Level the voxel model treats as "no stimulus".
    pub fn rest_level(&self) -> f64 {
        match *self {
            Driver::Fourier { .. } => 0.0,
            Driver::Block { baseline, .. } => baseline,
        }
    }
}

pub fn build_driver(spec: &PhantomSpec) -> Result<Driver> {
    spec.validate()?;
    match spec.driver {
        DriverSpec::RestingLike { f_hi_hz } => {
            let n = spec.nt;
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let mut buf: Vec<Complex<f64>> = (0..n)
                .map(|_| Complex::new(rng.sample::<f64, _>(StandardNormal), 0.0))
                .collect();
            FftPlanner::new().plan_fft_forward(n).process(&mut buf);
            let span = n as f64 * spec.tr;
            let mut terms: Vec<(f64, f64, f64)> = (1..n.div_ceil(2))
                .map(|k| (k as f64 / span, buf[k]))
                .filter(|(f, _)| *f <= f_hi_hz)
                .map(|(f, x)| (f, 2.0 * x.re / n as f64, -2.0 * x.im / n as f64))
                .collect();
            if terms.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "record of {span} s has no frequency bin below {f_hi_hz} Hz"
                )));
            }
            let d = Driver::Fourier { terms: terms.clone() };
            let grid: Vec<f64> = (0..n).map(|i| d.eval(i as f64 * spec.tr)).collect();
            let var = grid.iter().map(|v| v * v).sum::<f64>() / n as f64;
            let scale = var.sqrt().recip();
            for t in &mut terms {
                t.1 *= scale;
                t.2 *= scale;
            }
            Ok(Driver::Fourier { terms })
        }
        DriverSpec::BlockCo2 {
            baseline_mmhg,
            plateau_mmhg,
            period_s,
            onset_s,
            ramp_s,
            ..
        } => Ok(Driver::Block {
            baseline: baseline_mmhg,
            plateau: plateau_mmhg,
            period: period_s,
            onset: onset_s,
            ramp: ramp_s,
        }),
    }
}

/// The driver sampled on the BOLD grid.
pub fn generate_driver(spec: &PhantomSpec) -> Result<TimeSeries> {
    let d = build_driver(spec)?;
    TimeSeries::new((0..spec.nt).map(|i| d.eval(i as f64 * spec.tr)).collect(), spec.tr, 0.0)
}

/// Raw breath-by-breath CO₂ whose peaks trace the driver `lead_s` early.
///
/// Starts one breath before the BOLD record and ends one breath after it so
/// every BOLD sample lies between two end-tidal peaks.
pub fn synth_co2_trace(spec: &PhantomSpec) -> Result<Option<TimeSeries>> {
    let d = build_driver(spec)?;
    let DriverSpec::BlockCo2 { breath_period_s, lead_s, .. } = spec.driver else {
        return Ok(None);
    };
    let t0 = -breath_period_s;
    let end = (spec.nt - 1) as f64 * spec.tr + breath_period_s;
    let n = ((end - t0) / CO2_SAMPLE_S).round() as usize + 1;
    let values = (0..n)
        .map(|i| {
            let t = t0 + i as f64 * CO2_SAMPLE_S;
            let breath = 0.5 * (1.0 + (2.0 * PI * t / breath_period_s).cos());
            d.eval(t + lead_s) * breath * breath
        })
        .collect();
    TimeSeries::new(values, CO2_SAMPLE_S, t0).map(Some)
}

impl FieldSpec {
    pub fn resolve(&self, dims: Dims3, spacing: Spacing3, base_dir: Option<&Path>) -> Result<Volume3D> {
        match self {
            FieldSpec::Constant { value } => Volume3D::filled(dims, spacing, *value),
            FieldSpec::Blocks { axis, values } => {
                if *axis > 2 || values.is_empty() || values.len() > dims[*axis] {
                    return Err(Error::InvalidArgument(format!(
                        "blocks field needs axis in 0..=2 and 1..={} values",
                        dims[(*axis).min(2)]
                    )));
                }
                let n = dims[*axis];
                let mut data = vec![0.0; voxel_count(dims)];
                for z in 0..dims[2] {
                    for y in 0..dims[1] {
                        for x in 0..dims[0] {
                            let c = [x, y, z][*axis];
                            data[linear_index(dims, x, y, z)] = values[c * values.len() / n];
                        }
                    }
                }
                Volume3D::new(dims, spacing, data)
            }
            FieldSpec::Nifti { path } => {
                let p = match base_dir {
                    Some(b) if path.is_relative() => b.join(path),
                    _ => path.clone(),
                };
                let v = load_volume3d(&p)?;
                if v.dims() != dims {
                    return Err(Error::DimensionMismatch(format!(
                        "{}: field {:?} does not match phantom grid {:?}",
                        p.display(),
                        v.dims(),
                        dims
                    )));
                }
                Volume3D::new(dims, spacing, v.into_data())
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct PhantomTruth {
    pub cvr: Volume3D,
    /// True delays, 0 inside the cerebellum.
    pub bat: Volume3D,
    pub cerebellum: Mask,
    pub brain: Mask,
    pub driver: TimeSeries,
    pub co2_trace: Option<TimeSeries>,
    pub rest_level: f64,
}

pub fn synth_bold(spec: &PhantomSpec, base_dir: Option<&Path>) -> Result<(Volume4D, PhantomTruth)> {
    let driver = build_driver(spec)?;
    let dims = spec.dims;
    let cvr = spec.cvr.resolve(dims, spec.spacing, base_dir)?;
    let cerebellum = Mask::from_fn(dims, |_, _, z| z < spec.cerebellum_slices)?;
    let brain = Mask::full(dims)?;
    let bat_raw = spec.bat.resolve(dims, spec.spacing, base_dir)?;
    let bat = bat_raw.with_data(
        bat_raw
            .data()
            .iter()
            .zip(cerebellum.data())
            .map(|(&b, &cb)| if cb { 0.0 } else { b })
            .collect(),
    )?;
    let bounds = spec.lag_bounds();
    if let Some(b) = bat.data().iter().find(|&&b| b < bounds.lo_s || b > bounds.hi_s) {
        return Err(Error::InvalidArgument(format!(
            "delay {b} s lies outside the lag grid [{}, {}] s",
            bounds.lo_s, bounds.hi_s
        )));
    }

    // One driver evaluation per distinct delay.
    let rest = driver.rest_level();
    let mut shifted: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for &b in bat.data() {
        shifted
            .entry(b.to_bits())
            .or_insert_with(|| (0..spec.nt).map(|i| driver.eval(i as f64 * spec.tr - b) - rest).collect());
    }
    let series: Vec<Vec<f64>> = (0..voxel_count(dims))
        .into_par_iter()
        .map(|v| {
            let d = &shifted[&bat.data()[v].to_bits()];
            let gain = cvr.data()[v];
            let mut s: Vec<f64> = d.iter().map(|x| BASELINE_SIGNAL * (1.0 + gain * x)).collect();
            if spec.noise_sigma > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                rng.set_stream(v as u64 + 1);
                for x in &mut s {
                    *x += spec.noise_sigma * rng.sample::<f64, _>(StandardNormal);
                }
            }
            s
        })
        .collect();
    let vol = Volume4D::from_voxel_series(dims, spec.spacing, spec.tr, &series)?;
    let truth = PhantomTruth {
        cvr,
        bat,
        cerebellum,
        brain,
        driver: generate_driver(spec)?,
        co2_trace: synth_co2_trace(spec)?,
        rest_level: rest,
    };
    Ok((vol, truth))
}

/// Contiguous partition of the grid (in storage order) into `n_labels` labels 1..=n.
pub fn synth_atlas(dims: Dims3, n_labels: usize) -> Result<LabelAtlas> {
    let n = voxel_count(dims);
    if n_labels == 0 || n_labels > n {
        return Err(Error::InvalidArgument(format!(
            "n_labels must be in 1..={n}, got {n_labels}"
        )));
    }
    LabelAtlas::new(dims, (0..n).map(|v| (v * n_labels / n) as u32 + 1).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomFiles {
    pub bold: PathBuf,
    pub cvr_truth: PathBuf,
    pub bat_truth: PathBuf,
    pub cerebellum_mask: PathBuf,
    pub brain_mask: PathBuf,
    pub atlas: Option<PathBuf>,
    pub co2: Option<PathBuf>,
    pub truth_json: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TruthSidecar {
    spec: PhantomSpec,
    baseline_signal: f64,
    rest_level: f64,
    driver: Vec<f64>,
    distinct_cvr: Vec<f64>,
    distinct_bat_s: Vec<f64>,
    files: PhantomFiles,
}

fn distinct(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Generates the phantom and writes NIfTI volumes, an optional CO₂ CSV and a truth sidecar.
pub fn write_phantom(spec: &PhantomSpec, out_dir: &Path, base_dir: Option<&Path>) -> Result<PhantomFiles> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let (vol, truth) = synth_bold(spec, base_dir)?;
    let p = |name: &str| out_dir.join(name);
    let files = PhantomFiles {
        bold: p("bold.nii"),
        cvr_truth: p("cvr_truth.nii"),
        bat_truth: p("bat_truth.nii"),
        cerebellum_mask: p("cerebellum_mask.nii"),
        brain_mask: p("brain_mask.nii"),
        atlas: spec.atlas_labels.map(|_| p("atlas.nii")),
        co2: truth.co2_trace.as_ref().map(|_| p("co2.csv")),
        truth_json: p("truth.json"),
    };
    save_nifti(NiftiImage::Volume4D(&vol), &files.bold)?;
    save_nifti(NiftiImage::Volume3D(&truth.cvr), &files.cvr_truth)?;
    save_nifti(NiftiImage::Volume3D(&truth.bat), &files.bat_truth)?;
    save_nifti(NiftiImage::Mask(&truth.cerebellum, spec.spacing), &files.cerebellum_mask)?;
    save_nifti(NiftiImage::Mask(&truth.brain, spec.spacing), &files.brain_mask)?;
    if let (Some(n), Some(path)) = (spec.atlas_labels, &files.atlas) {
        save_nifti(NiftiImage::Atlas(&synth_atlas(spec.dims, n)?, spec.spacing), path)?;
    }
    if let (Some(trace), Some(path)) = (&truth.co2_trace, &files.co2) {
        write_co2_csv(path, trace)?;
    }
    let sidecar = TruthSidecar {
        spec: spec.clone(),
        baseline_signal: BASELINE_SIGNAL,
        rest_level: truth.rest_level,
        driver: truth.driver.values().to_vec(),
        distinct_cvr: distinct(truth.cvr.data()),
        distinct_bat_s: distinct(truth.bat.data()),
        files: files.clone(),
    };
    let json = serde_json::to_string_pretty(&sidecar)?;
    std::fs::write(&files.truth_json, json).map_err(|e| Error::io(&files.truth_json, e))?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::{lag_search_volume, ols_fit, DesignMatrix};
    use crate::signal::{etco2_envelope, lowpass_filter, FilterSpec};

    fn resting(dims: Dims3, cvr: FieldSpec, bat: FieldSpec, sigma: f64, seed: u64) -> PhantomSpec {
        PhantomSpec {
            dims,
            spacing: [2.0; 3],
            tr: 2.0,
            nt: 150,
            driver: DriverSpec::RestingLike { f_hi_hz: RS_BAND_HI_HZ },
            cvr,
            bat,
            noise_sigma: sigma,
            seed,
            cerebellum_slices: 1,
            atlas_labels: None,
        }
    }

    fn block(dims: Dims3) -> PhantomSpec {
        PhantomSpec {
            dims,
            spacing: [4.0; 3],
            tr: 2.0,
            nt: 150,
            driver: DriverSpec::BlockCo2 {
                baseline_mmhg: 40.0,
                plateau_mmhg: 48.0,
                period_s: 120.0,
                onset_s: 60.0,
                ramp_s: 10.0,
                breath_period_s: 5.0,
                lead_s: 10.0,
            },
            cvr: FieldSpec::Constant { value: 0.005 },
            bat: FieldSpec::Constant { value: 0.0 },
            noise_sigma: 0.0,
            seed: 0,
            cerebellum_slices: 1,
            atlas_labels: None,
        }
    }

    #[test]
    fn resting_driver_is_band_limited_unit_variance_and_seeded() {
        let spec = resting([2, 2, 2], FieldSpec::Constant { value: 0.01 }, FieldSpec::Constant { value: 0.0 }, 0.0, 4);
        let d = generate_driver(&spec).unwrap();
        let var = d.values().iter().map(|v| v * v).sum::<f64>() / d.len() as f64;
        let mean = d.values().iter().sum::<f64>() / d.len() as f64;
        assert!((var - 1.0).abs() < 1e-12);
        assert!(mean.abs() < 1e-12);
        let again = lowpass_filter(&d, FilterSpec::lowpass(RS_BAND_HI_HZ).unwrap()).unwrap();
        for (a, b) in again.values().iter().zip(d.values()) {
            assert!((a - b).abs() < 1e-9);
        }
        assert_eq!(generate_driver(&spec).unwrap(), d);
        let other = PhantomSpec { seed: 5, ..spec };
        assert_ne!(generate_driver(&other).unwrap(), d);
    }

    #[test]
    fn block_driver_range() {
        let d = generate_driver(&block([2, 2, 2])).unwrap();
        let lo = d.values().iter().copied().fold(f64::INFINITY, f64::min);
        let hi = d.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(lo, 40.0);
        assert_eq!(hi, 48.0);
    }

    #[test]
    fn co2_envelope_recovers_leading_driver() {
        let spec = block([2, 2, 2]);
        let trace = synth_co2_trace(&spec).unwrap().unwrap();
        let env = etco2_envelope(&trace, 2.0).unwrap();
        let d = build_driver(&spec).unwrap();
        for i in 0..env.len() {
            let t = env.time(i);
            if (0.0..=298.0).contains(&t) {
                assert!((env.values()[i] - d.eval(t + 10.0)).abs() < 1e-9, "t = {t}");
            }
        }
    }

    #[test]
    fn noise_free_constant_gain_recovers_ratio() {
        let spec = resting([2, 2, 2], FieldSpec::Constant { value: 0.03 }, FieldSpec::Constant { value: 0.0 }, 0.0, 1);
        let (vol, truth) = synth_bold(&spec, None).unwrap();
        let design = DesignMatrix::new("driver", truth.driver.values()).unwrap();
        for v in 0..vol.n_voxels() {
            let f = ols_fit(&vol.voxel_series(v), &design).unwrap();
            assert!((f.beta1 / f.beta0 - 0.03).abs() < 1e-8);
        }
    }

    #[test]
    fn noise_free_block_delays_recovered_on_grid() {
        let spec = resting(
            [6, 3, 3],
            FieldSpec::Constant { value: 0.02 },
            FieldSpec::Blocks { axis: 0, values: vec![-2.0, 0.0, 3.0] },
            0.0,
            7,
        );
        let (vol, truth) = synth_bold(&spec, None).unwrap();
        let r = crate::pipeline::compute_reference_ts(&vol, &truth.cerebellum).unwrap();
        let maps = lag_search_volume(&vol, &r, &[], &LagSearchConfig::resting_state(), &truth.brain).unwrap();
        assert_eq!(maps.shift_s.data(), truth.bat.data());
    }

    #[test]
    fn seed_determinism_and_bounds() {
        let spec = resting([3, 3, 2], FieldSpec::Constant { value: 0.02 }, FieldSpec::Constant { value: 1.0 }, 0.5, 9);
        let (a, _) = synth_bold(&spec, None).unwrap();
        let (b, _) = synth_bold(&spec, None).unwrap();
        assert_eq!(a, b);
        let far = resting([3, 3, 2], FieldSpec::Constant { value: 0.02 }, FieldSpec::Constant { value: 12.0 }, 0.0, 9);
        assert!(synth_bold(&far, None).is_err());
        let flat = resting([3, 3, 2], FieldSpec::Constant { value: 0.0 }, FieldSpec::Constant { value: 0.0 }, 0.0, 9);
        let (v, _) = synth_bold(&flat, None).unwrap();
        assert!(v.data().iter().all(|&x| x == BASELINE_SIGNAL));
    }

    #[test]
    fn atlas_examples() {
        let a = synth_atlas([2, 2, 2], 8).unwrap();
        assert_eq!(a.labels(), &[1, 2, 3, 4, 5, 6, 7, 8]);
        let one = synth_atlas([2, 2, 2], 1).unwrap();
        assert_eq!(one.label_ids(), &[1]);
        let big = synth_atlas([96, 112, 91], 133).unwrap();
        assert_eq!(big.label_ids().len(), 133);
        assert!(synth_atlas([2, 2, 2], 9).is_err());
    }

    #[test]
    fn spec_json_round_trip_and_files_are_deterministic() {
        let mut spec = block([3, 2, 2]);
        spec.atlas_labels = Some(3);
        spec.bat = FieldSpec::Blocks { axis: 0, values: vec![0.0, 2.0, 4.5] };
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(PhantomSpec::from_json(&json).unwrap(), spec);
        let dir = tempfile::tempdir().unwrap();
        let f1 = write_phantom(&spec, &dir.path().join("a"), None).unwrap();
        let f2 = write_phantom(&spec, &dir.path().join("b"), None).unwrap();
        for (x, y) in [(&f1.bold, &f2.bold), (&f1.bat_truth, &f2.bat_truth)] {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
        }
        assert_eq!(
            std::fs::read(f1.co2.as_ref().unwrap()).unwrap(),
            std::fs::read(f2.co2.as_ref().unwrap()).unwrap()
        );
        assert!(f1.atlas.unwrap().exists());
    }
}

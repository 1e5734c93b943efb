//! 1-D and 3-D signal conditioning.
//!
//! Time series are uniformly sampled (`dt` seconds, first sample at `t0`).
//! Shifts use linear interpolation with edge replication so every shifted
//! series keeps the input length.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::volume::{linear_index, Mask, Volume3D};

/// Scores closer than this are treated as equal when picking a best shift.
pub const SCORE_TIE_TOLERANCE: f64 = 1e-12;

/// Upper bound on the number of points in a shift search grid.
pub const MAX_GRID_POINTS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: Vec<f64>,
    dt: f64,
    t0: f64,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>, dt: f64, t0: f64) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "time series needs at least 2 samples, got {}",
                values.len()
            )));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sampling interval must be positive, got {dt}"
            )));
        }
        if !t0.is_finite() {
            return Err(Error::InvalidArgument("start time must be finite".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite sample at index {i}"
            )));
        }
        Ok(TimeSeries { values, dt, t0 })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Time span between first and last sample.
    pub fn duration(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.dt
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(values, self.dt, self.t0)
    }
}

/// Pass band `[f_lo, f_hi]` in Hz. `f_lo == 0` keeps the DC component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSpec {
    pub f_lo: f64,
    pub f_hi: f64,
}

impl FilterSpec {
    pub fn new(f_lo: f64, f_hi: f64) -> Result<Self> {
        if !(f_lo >= 0.0 && f_lo < f_hi && f_hi.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "filter band requires 0 <= f_lo < f_hi, got [{f_lo}, {f_hi}]"
            )));
        }
        Ok(FilterSpec { f_lo, f_hi })
    }

    pub fn lowpass(f_hi: f64) -> Result<Self> {
        Self::new(0.0, f_hi)
    }
}

/// Removes the least-squares line (intercept and slope).
pub fn detrend_linear(ts: &TimeSeries) -> Result<TimeSeries> {
    if ts.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "detrending needs at least 3 samples, got {}",
            ts.len()
        )));
    }
    ts.with_values(detrend_values(ts.values()))
}

pub(crate) fn detrend_values(y: &[f64]) -> Vec<f64> {
    let n = y.len() as f64;
    let tc = (n - 1.0) / 2.0;
    let mean = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &v) in y.iter().enumerate() {
        let x = i as f64 - tc;
        sxy += x * (v - mean);
        sxx += x * x;
    }
    let slope = sxy / sxx;
    y.iter()
        .enumerate()
        .map(|(i, &v)| v - mean - slope * (i as f64 - tc))
        .collect()
}

/// Zero-phase ideal band filter realized as an FFT bin mask, reusable across
/// many series of the same length.
pub struct BandFilter {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    keep: Vec<bool>,
}

impl BandFilter {
    pub fn new(n: usize, dt: f64, spec: FilterSpec) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument("filter needs at least 2 samples".into()));
        }
        let nyquist = 0.5 / dt;
        if spec.f_hi > nyquist * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "filter upper edge {} Hz exceeds Nyquist {} Hz",
                spec.f_hi, nyquist
            )));
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let df = 1.0 / (n as f64 * dt);
        let keep = (0..n)
            .map(|k| {
                let f = k.min(n - k) as f64 * df;
                let tol = 1e-9 * df;
                f <= spec.f_hi + tol && (spec.f_lo == 0.0 || f >= spec.f_lo - tol)
            })
            .collect();
        Ok(BandFilter {
            forward,
            inverse,
            keep,
        })
    }

    pub fn len(&self) -> usize {
        self.keep.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keep.is_empty()
    }

    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.keep.len(), "series length differs from filter length");
        let n = y.len();
        let mut buf: Vec<Complex64> = y.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        for (c, &k) in buf.iter_mut().zip(&self.keep) {
            if !k {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / n as f64;
        buf.iter().map(|c| c.re * scale).collect()
    }
}

/// Zero-phase FFT-mask filter keeping frequencies in `[f_lo, f_hi]`.
pub fn lowpass_filter(ts: &TimeSeries, spec: FilterSpec) -> Result<TimeSeries> {
    let filter = BandFilter::new(ts.len(), ts.dt(), spec)?;
    ts.with_values(filter.apply(ts.values()))
}

/// σ in mm for a Gaussian of the given full width at half maximum.
pub fn fwhm_to_sigma(fwhm: f64) -> f64 {
    fwhm / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt())
}

/// Normalized 1-D Gaussian kernel truncated at 4σ; index `radius` is the centre.
pub fn gaussian_kernel(sigma_vox: f64) -> Vec<f64> {
    let radius = (4.0 * sigma_vox).ceil().max(1.0) as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let x = i as f64 - radius as f64;
            (-0.5 * x * x / (sigma_vox * sigma_vox)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= sum);
    k
}

/// Separable Gaussian smoothing renormalized over the mask support.
///
/// Output at an in-mask voxel is `K*(f·m) / K*m`; out-of-mask voxels are 0.
pub struct MaskedGaussian {
    kernels: [Vec<f64>; 3],
    mask: Mask,
    weight: Vec<f64>,
}

impl MaskedGaussian {
    pub fn new(fwhm_mm: f64, spacing: [f64; 3], mask: &Mask) -> Result<Self> {
        if !(fwhm_mm.is_finite() && fwhm_mm > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "smoothing FWHM must be positive, got {fwhm_mm}"
            )));
        }
        let sigma = fwhm_to_sigma(fwhm_mm);
        let kernels = [
            gaussian_kernel(sigma / spacing[0]),
            gaussian_kernel(sigma / spacing[1]),
            gaussian_kernel(sigma / spacing[2]),
        ];
        let ind: Vec<f64> = mask.data().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let weight = convolve_separable(&ind, mask.dims(), &kernels);
        Ok(MaskedGaussian {
            kernels,
            mask: mask.clone(),
            weight,
        })
    }

    /// Central weight of the 3-D kernel.
    pub fn central_weight(&self) -> f64 {
        self.kernels.iter().map(|k| k[k.len() / 2]).product()
    }

    pub fn apply(&self, vol: &Volume3D) -> Result<Volume3D> {
        self.mask.require(vol.dims(), "smoothing mask")?;
        let masked: Vec<f64> = vol
            .data()
            .iter()
            .zip(self.mask.data())
            .map(|(&v, &m)| if m { v } else { 0.0 })
            .collect();
        let num = convolve_separable(&masked, vol.dims(), &self.kernels);
        let out = num
            .iter()
            .zip(&self.weight)
            .zip(self.mask.data())
            .map(|((&n, &w), &m)| if m && w > 0.0 { n / w } else { 0.0 })
            .collect();
        vol.with_data(out)
    }
}

fn convolve_axis(src: &[f64], dims: [usize; 3], kernel: &[f64], axis: usize) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let len = dims[axis] as isize;
    let stride = match axis {
        0 => 1,
        1 => dims[0],
        _ => dims[0] * dims[1],
    } as isize;
    let mut out = vec![0.0; src.len()];
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let idx = linear_index(dims, x, y, z);
                let pos = [x, y, z][axis] as isize;
                let lo = (-r).max(-pos);
                let hi = r.min(len - 1 - pos);
                let mut acc = 0.0;
                for o in lo..=hi {
                    acc += kernel[(o + r) as usize] * src[(idx as isize + o * stride) as usize];
                }
                out[idx] = acc;
            }
        }
    }
    out
}

fn convolve_separable(src: &[f64], dims: [usize; 3], kernels: &[Vec<f64>; 3]) -> Vec<f64> {
    let a = convolve_axis(src, dims, &kernels[0], 0);
    let b = convolve_axis(&a, dims, &kernels[1], 1);
    convolve_axis(&b, dims, &kernels[2], 2)
}

/// Gaussian smoothing with σ = fwhm/(2√(2 ln 2)) mm, renormalized inside `mask`.
pub fn gaussian_smooth3d(vol: &Volume3D, fwhm_mm: f64, mask: &Mask) -> Result<Volume3D> {
    MaskedGaussian::new(fwhm_mm, vol.spacing(), mask)?.apply(vol)
}

/// Smooths every frame of a 4-D volume; frames are processed in parallel.
pub fn gaussian_smooth4d(
    vol: &crate::volume::Volume4D,
    fwhm_mm: f64,
    mask: &Mask,
) -> Result<crate::volume::Volume4D> {
    let smoother = MaskedGaussian::new(fwhm_mm, vol.spacing(), mask)?;
    let frames = (0..vol.nt())
        .into_par_iter()
        .map(|t| smoother.apply(&vol.frame(t)))
        .collect::<Result<Vec<_>>>()?;
    crate::volume::Volume4D::from_frames(&frames, vol.tr())
}

/// Linear interpolation of `y` at fractional sample position `pos`, clamped to the record.
#[inline]
pub(crate) fn interp_clamped(y: &[f64], pos: f64) -> f64 {
    let last = y.len() - 1;
    if pos <= 0.0 {
        return y[0];
    }
    if pos >= last as f64 {
        return y[last];
    }
    let j = (pos.floor() as usize).min(last - 1);
    let w = pos - j as f64;
    (1.0 - w) * y[j] + w * y[j + 1]
}

/// Delays `y` by `delay_samples` (output `i` = input at `i - delay_samples`).
pub(crate) fn shift_values(y: &[f64], delay_samples: f64) -> Vec<f64> {
    (0..y.len())
        .map(|i| interp_clamped(y, i as f64 - delay_samples))
        .collect()
}

/// Output sample `i` is the input at time `tᵢ − delta_s` (a positive
/// `delta_s` delays the series); samples outside the record are replicated
/// from the nearest edge.
pub fn fractional_shift(ts: &TimeSeries, delta_s: f64) -> Result<TimeSeries> {
    if !(delta_s.abs() < ts.duration()) {
        return Err(Error::InvalidArgument(format!(
            "shift {delta_s} s exceeds record duration {} s",
            ts.duration()
        )));
    }
    ts.with_values(shift_values(ts.values(), delta_s / ts.dt()))
}

/// Linear interpolation onto a new uniform grid. Target samples may overhang
/// the source support by at most one source sample (edge value held).
pub fn resample_to(ts: &TimeSeries, dt_new: f64, t0_new: f64, n_new: usize) -> Result<TimeSeries> {
    if n_new == 0 {
        return Err(Error::InvalidArgument("empty resampling target".into()));
    }
    if !(dt_new.is_finite() && dt_new > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "target sampling interval must be positive, got {dt_new}"
        )));
    }
    let t_end_new = t0_new + (n_new - 1) as f64 * dt_new;
    let t_end = ts.time(ts.len() - 1);
    let slack = ts.dt() * (1.0 + 1e-9);
    if t0_new < ts.t0() - slack || t_end_new > t_end + slack {
        return Err(Error::InvalidArgument(format!(
            "target window [{t0_new}, {t_end_new}] s lies outside source support [{}, {t_end}] s",
            ts.t0()
        )));
    }
    let values = (0..n_new)
        .map(|i| {
            let t = t0_new + i as f64 * dt_new;
            interp_clamped(ts.values(), (t - ts.t0()) / ts.dt())
        })
        .collect();
    TimeSeries::new(values, dt_new, t0_new)
}

/// Indices of breath peaks: interior samples strictly above every earlier
/// sample and not below any later sample within ±`min_period_s`.
pub fn detect_peaks(ts: &TimeSeries, min_period_s: f64) -> Vec<usize> {
    let y = ts.values();
    let n = y.len();
    let half = ((min_period_s / ts.dt()) - 1e-9).ceil().max(1.0) as usize;
    (1..n.saturating_sub(1))
        .filter(|&i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            (lo..i).all(|j| y[j] < y[i]) && (i + 1..=hi).all(|j| y[j] <= y[i])
        })
        .collect()
}

/// End-tidal envelope of a raw CO₂ trace: breath peaks joined by straight
/// lines on the original grid, edge peak values held outside the first/last peak.
pub fn etco2_envelope(co2: &TimeSeries, min_breath_period_s: f64) -> Result<TimeSeries> {
    if !(min_breath_period_s > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "minimum breath period must be positive, got {min_breath_period_s}"
        )));
    }
    if co2.duration() < 3.0 * min_breath_period_s {
        return Err(Error::InvalidArgument(format!(
            "CO2 trace of {} s is shorter than 3 breath periods ({} s)",
            co2.duration(),
            3.0 * min_breath_period_s
        )));
    }
    let peaks = detect_peaks(co2, min_breath_period_s);
    if peaks.len() < 2 {
        return Err(Error::DegenerateSeries(format!(
            "found {} breath peaks in the CO2 trace, need at least 2",
            peaks.len()
        )));
    }
    let y = co2.values();
    let mut out = Vec::with_capacity(y.len());
    let mut seg = 0;
    for i in 0..y.len() {
        if i <= peaks[0] {
            out.push(y[peaks[0]]);
        } else if i >= *peaks.last().unwrap() {
            out.push(y[*peaks.last().unwrap()]);
        } else {
            while peaks[seg + 1] < i {
                seg += 1;
            }
            let (a, b) = (peaks[seg], peaks[seg + 1]);
            let w = (i - a) as f64 / (b - a) as f64;
            out.push((1.0 - w) * y[a] + w * y[b]);
        }
    }
    co2.with_values(out)
}

/// Pearson correlation; `None` when either input has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Points `lo, lo+step, …, hi` (count `round((hi−lo)/step)+1`), rounded to
/// 1 ns so that grid values print cleanly.
pub fn shift_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(lo < hi && step > 0.0 && lo.is_finite() && hi.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "shift grid needs lo < hi and step > 0, got [{lo}, {hi}] step {step}"
        )));
    }
    let count = ((hi - lo) / step).round() + 1.0;
    if count > MAX_GRID_POINTS as f64 {
        return Err(Error::InvalidArgument(format!(
            "shift grid of {count} points exceeds the {MAX_GRID_POINTS} limit"
        )));
    }
    Ok((0..count as usize)
        .map(|k| ((lo + k as f64 * step) * 1e9).round() / 1e9)
        .collect())
}

/// Index of the best score; near-ties (within [`SCORE_TIE_TOLERANCE`]) go to
/// the smallest |shift|, then the more negative shift. Non-finite scores are ignored.
pub fn best_shift_index(grid: &[f64], scores: &[f64]) -> Option<usize> {
    let max = scores
        .iter()
        .copied()
        .filter(|s| s.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    (0..grid.len())
        .filter(|&i| scores[i].is_finite() && scores[i] >= max - SCORE_TIE_TOLERANCE)
        .min_by(|&a, &b| {
            grid[a]
                .abs()
                .total_cmp(&grid[b].abs())
                .then(grid[a].total_cmp(&grid[b]))
        })
}

/// Finds the delay of `moving` that maximizes its Pearson correlation with
/// `reference`. Returns `(shift_s, cc)`.
pub fn align_by_max_cc(
    moving: &TimeSeries,
    reference: &TimeSeries,
    range_s: (f64, f64),
    step_s: f64,
) -> Result<(f64, f64)> {
    if moving.len() != reference.len() || (moving.dt() - reference.dt()).abs() > 1e-9 * reference.dt() {
        return Err(Error::InvalidArgument(format!(
            "alignment needs series on a common grid ({} @ {} s vs {} @ {} s)",
            moving.len(),
            moving.dt(),
            reference.len(),
            reference.dt()
        )));
    }
    let grid = shift_grid(range_s.0, range_s.1, step_s)?;
    if grid.iter().any(|s| s.abs() >= moving.duration()) {
        return Err(Error::InvalidArgument(format!(
            "alignment range [{}, {}] s exceeds record duration {} s",
            range_s.0,
            range_s.1,
            moving.duration()
        )));
    }
    if pearson(moving.values(), moving.values()).is_none() {
        return Err(Error::DegenerateSeries("moving series is constant".into()));
    }
    if pearson(reference.values(), reference.values()).is_none() {
        return Err(Error::DegenerateSeries("reference series is constant".into()));
    }
    let scores: Vec<f64> = grid
        .par_iter()
        .map(|&s| {
            let shifted = shift_values(moving.values(), s / moving.dt());
            pearson(&shifted, reference.values()).unwrap_or(f64::NAN)
        })
        .collect();
    let best = best_shift_index(&grid, &scores)
        .ok_or_else(|| Error::DegenerateSeries("no shift produced a defined correlation".into()))?;
    Ok((grid[best], scores[best]))
}

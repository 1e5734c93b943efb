//! Map comparison and reliability statistics.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};
use crate::volume::{linear_index, Mask, Volume3D};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
/// Dynamic range for maps clipped to [−5, 5].
pub const DEFAULT_DYNAMIC_RANGE: f64 = 10.0;

fn masked_pairs<'a>(a: &'a Volume3D, b: &'a Volume3D, mask: &'a Mask) -> Result<impl Iterator<Item = (f64, f64)> + 'a> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch(format!("maps {:?} vs {:?}", a.dims(), b.dims())));
    }
    mask.require(a.dims(), "metric mask")?;
    Ok(mask
        .data()
        .iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(move |(v, _)| (a.data()[v], b.data()[v])))
}

fn pearson_pairs(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateMap("correlation with a constant map".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson correlation over in-mask voxels.
pub fn spatial_pearson(a: &Volume3D, b: &Volume3D, mask: &Mask) -> Result<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = masked_pairs(a, b, mask)?.unzip();
    if x.len() < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 in-mask voxels, got {}", x.len())));
    }
    pearson_pairs(&x, &y)
}

/// Ranks with ties sharing their average rank (1-based).
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson on average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "spearman needs equal lengths >= 3, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    pearson_pairs(&average_ranks(x), &average_ranks(y))
}

pub fn spatial_spearman(a: &Volume3D, b: &Volume3D, mask: &Mask) -> Result<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = masked_pairs(a, b, mask)?.unzip();
    spearman(&x, &y)
}

pub fn rmse(a: &Volume3D, b: &Volume3D, mask: &Mask) -> Result<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for (x, y) in masked_pairs(a, b, mask)? {
        s += (x - y) * (x - y);
        n += 1;
    }
    if n == 0 {
        return Err(Error::InvalidArgument("empty mask".into()));
    }
    Ok((s / n as f64).sqrt())
}

/// Peak signal-to-noise ratio in dB with the peak taken from `pred`.
pub fn psnr(pred: &Volume3D, truth: &Volume3D, mask: &Mask) -> Result<f64> {
    let (mut s, mut n, mut max) = (0.0, 0usize, f64::NEG_INFINITY);
    for (p, t) in masked_pairs(pred, truth, mask)? {
        s += (p - t) * (p - t);
        n += 1;
        max = max.max(p);
    }
    if n == 0 {
        return Err(Error::InvalidArgument("empty mask".into()));
    }
    let mse = s / n as f64;
    if mse == 0.0 {
        return Err(Error::InfinitePsnr);
    }
    Ok(10.0 * (max * max / mse).log10())
}

fn ssim_weights() -> Vec<f64> {
    let h = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-(i as f64 - h).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let total: f64 = g.iter().sum::<f64>().powi(2);
    let mut w = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for gy in &g {
        for gx in &g {
            w.push(gx * gy / total);
        }
    }
    w
}

/// One local SSIM value, centred at voxel (x, y, z).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimWindow {
    pub x: usize,
    pub y: usize,
    pub z: usize,
    pub value: f64,
}

/// Local SSIM for every 11×11 axial window that lies entirely inside the mask.
pub fn ssim_map(a: &Volume3D, b: &Volume3D, mask: &Mask, dynamic_range: f64) -> Result<Vec<SsimWindow>> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch(format!("maps {:?} vs {:?}", a.dims(), b.dims())));
    }
    mask.require(a.dims(), "metric mask")?;
    if !(dynamic_range > 0.0) {
        return Err(Error::InvalidArgument(format!("dynamic range must be positive, got {dynamic_range}")));
    }
    let dims = a.dims();
    let c1 = (0.01 * dynamic_range).powi(2);
    let c2 = (0.03 * dynamic_range).powi(2);
    let w = ssim_weights();
    let h = SSIM_WINDOW / 2;
    let mut out = Vec::new();
    if dims[0] < SSIM_WINDOW || dims[1] < SSIM_WINDOW {
        return Ok(out);
    }
    for z in 0..dims[2] {
        for y in h..dims[1] - h {
            for x in h..dims[0] - h {
                let mut inside = true;
                'scan: for dy in 0..SSIM_WINDOW {
                    for dx in 0..SSIM_WINDOW {
                        if !mask.contains(linear_index(dims, x + dx - h, y + dy - h, z)) {
                            inside = false;
                            break 'scan;
                        }
                    }
                }
                if !inside {
                    continue;
                }
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in 0..SSIM_WINDOW {
                    for dx in 0..SSIM_WINDOW {
                        let v = linear_index(dims, x + dx - h, y + dy - h, z);
                        let k = w[dy * SSIM_WINDOW + dx];
                        let (p, q) = (a.data()[v], b.data()[v]);
                        ma += k * p;
                        mb += k * q;
                        saa += k * p * p;
                        sbb += k * q * q;
                        sab += k * (p * q);
                    }
                }
                let va = saa - ma * ma;
                let vb = sbb - mb * mb;
                let cov = sab - ma * mb;
                let value = ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                out.push(SsimWindow { x, y, z, value });
            }
        }
    }
    Ok(out)
}

/// Mean local SSIM over axial windows fully inside the mask.
pub fn ssim(a: &Volume3D, b: &Volume3D, mask: &Mask, dynamic_range: f64) -> Result<f64> {
    let windows = ssim_map(a, b, mask, dynamic_range)?;
    if windows.is_empty() {
        return Err(Error::InvalidArgument(
            "no 11x11 axial window lies entirely inside the mask".into(),
        ));
    }
    Ok(windows.iter().map(|w| w.value).sum::<f64>() / windows.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub pearson_cc: f64,
    pub spearman_rho: f64,
    /// `None` when the SSIM window does not fit in the mask.
    pub ssim: Option<f64>,
    /// `None` when the maps agree exactly (infinite PSNR).
    pub psnr_db: Option<f64>,
    pub rmse: f64,
    pub n_voxels: usize,
}

pub fn compare_maps(pred: &Volume3D, truth: &Volume3D, mask: &Mask, dynamic_range: f64) -> Result<MetricReport> {
    let psnr_db = match psnr(pred, truth, mask) {
        Ok(v) => Some(v),
        Err(Error::InfinitePsnr) => None,
        Err(e) => return Err(e),
    };
    let ssim = match ssim(pred, truth, mask, dynamic_range) {
        Ok(v) => Some(v),
        Err(Error::InvalidArgument(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(MetricReport {
        pearson_cc: spatial_pearson(pred, truth, mask)?,
        spearman_rho: spatial_spearman(pred, truth, mask)?,
        ssim,
        psnr_db,
        rmse: rmse(pred, truth, mask)?,
        n_voxels: mask.count(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IccResult {
    pub icc: f64,
    pub ci95: (f64, f64),
    pub n: usize,
    pub model: String,
    pub ci_method: String,
}

/// Two-way random-effects, absolute-agreement, single-measure ICC(2,1) over
/// labels present in both tables, with its F-distribution 95 % interval.
pub fn icc(scan1: &[(u32, f64)], scan2: &[(u32, f64)]) -> Result<IccResult> {
    let a: std::collections::BTreeMap<u32, f64> = scan1.iter().copied().collect();
    let b: std::collections::BTreeMap<u32, f64> = scan2.iter().copied().collect();
    if a.len() != scan1.len() || b.len() != scan2.len() {
        return Err(Error::InvalidArgument("duplicate labels in ICC table".into()));
    }
    if a.keys().ne(b.keys()) {
        return Err(Error::InvalidArgument("ICC tables must share the same label set".into()));
    }
    let rows: Vec<[f64; 2]> = a.iter().map(|(l, &x)| [x, b[l]]).collect();
    let n = rows.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!("ICC needs at least 3 labels, got {n}")));
    }
    let k = 2.0;
    let nf = n as f64;
    let grand = rows.iter().map(|r| r[0] + r[1]).sum::<f64>() / (k * nf);
    let col = [
        rows.iter().map(|r| r[0]).sum::<f64>() / nf,
        rows.iter().map(|r| r[1]).sum::<f64>() / nf,
    ];
    let msr = k * rows.iter().map(|r| ((r[0] + r[1]) / k - grand).powi(2)).sum::<f64>() / (nf - 1.0);
    let msc = nf * col.iter().map(|c| (c - grand).powi(2)).sum::<f64>() / (k - 1.0);
    let sse: f64 = rows
        .iter()
        .map(|r| {
            let rm = (r[0] + r[1]) / k;
            (0..2).map(|j| (r[j] - rm - col[j] + grand).powi(2)).sum::<f64>()
        })
        .sum();
    let mse = sse / ((nf - 1.0) * (k - 1.0));
    let denom = msr + (k - 1.0) * mse + k * (msc - mse) / nf;
    if !(denom > 0.0) || msr == 0.0 {
        return Err(Error::DegenerateMap("ICC undefined: no between-label variance".into()));
    }
    let value = ((msr - mse) / denom).min(1.0);
    let ci95 = if value >= 1.0 || mse == 0.0 {
        (value, value)
    } else {
        let aa = k * value / (nf * (1.0 - value));
        let bb = 1.0 + k * value * (nf - 1.0) / (nf * (1.0 - value));
        let v = (aa * msc + bb * mse).powi(2)
            / ((aa * msc).powi(2) / (k - 1.0) + (bb * mse).powi(2) / ((nf - 1.0) * (k - 1.0)));
        let q = |d1: f64, d2: f64| -> Result<f64> {
            let f = FisherSnedecor::new(d1, d2)
                .map_err(|e| Error::InvalidArgument(format!("F distribution ({d1}, {d2}): {e}")))?;
            Ok(f.inverse_cdf(0.975))
        };
        let fu = q(nf - 1.0, v)?;
        let fl = q(v, nf - 1.0)?;
        let extra = (k * nf - k - nf) * mse;
        let lo = nf * (msr - fu * mse) / (fu * (k * msc + extra) + nf * msr);
        let hi = nf * (fl * msr - mse) / (k * msc + extra + nf * fl * msr);
        (lo, hi.min(1.0))
    };
    Ok(IccResult {
        icc: value,
        ci95,
        n,
        model: "ICC(2,1) two-way random, absolute agreement, single measure".into(),
        ci_method: "F distribution".into(),
    })
}

/// 2|A∩B| / (|A| + |B|); 1 when both masks are empty.
pub fn dice(a: &Mask, b: &Mask) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch(format!("masks {:?} vs {:?}", a.dims(), b.dims())));
    }
    let inter = a.data().iter().zip(b.data()).filter(|(x, y)| **x && **y).count();
    let total = a.count() + b.count();
    Ok(if total == 0 { 1.0 } else { 2.0 * inter as f64 / total as f64 })
}

/// Mean difference over the pooled (n−1 weighted) standard deviation.
pub fn cohens_d(group1: &[f64], group2: &[f64]) -> Result<f64> {
    let (n1, n2) = (group1.len(), group2.len());
    if n1 < 2 || n2 < 2 {
        return Err(Error::InvalidArgument(format!("each group needs n >= 2, got {n1} and {n2}")));
    }
    let mean = |g: &[f64]| g.iter().sum::<f64>() / g.len() as f64;
    let (m1, m2) = (mean(group1), mean(group2));
    let ss = |g: &[f64], m: f64| g.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    let pooled = ((ss(group1, m1) + ss(group2, m2)) / (n1 + n2 - 2) as f64).sqrt();
    if pooled == 0.0 {
        return Err(Error::DegenerateMap("zero pooled standard deviation".into()));
    }
    Ok((m1 - m2) / pooled)
}

//! Ordinary least squares with covariates and the voxelwise temporal lag search.
//!
//! The design always holds an intercept (column 0) and one regressor of
//! interest (column 1), followed by optional covariates. Fits use a thin QR
//! factorization; rank is checked on the singular values of the design.
//!
//! Lag convention: a shift Δ advances the voxel series by Δ seconds before
//! regression (sample `i` is read at time `tᵢ + Δ`). A voxel whose signal
//! arrives later than the reference therefore has a positive optimal Δ.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::signal::{best_shift_index, shift_grid, shift_values, TimeSeries};
use crate::volume::{Mask, Volume3D, Volume4D};

/// Smallest allowed ratio of smallest to largest singular value of a design.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Covariate {
    pub name: String,
    pub values: Vec<f64>,
}

impl Covariate {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        Covariate {
            name: name.into(),
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    n: usize,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl DesignMatrix {
    /// `[intercept, regressor]`.
    pub fn new(regressor_name: impl Into<String>, regressor: &[f64]) -> Result<Self> {
        let n = regressor.len();
        if regressor.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("regressor has non-finite values".into()));
        }
        Ok(DesignMatrix {
            n,
            names: vec!["intercept".into(), regressor_name.into()],
            columns: vec![vec![1.0; n], regressor.to_vec()],
        })
    }

    pub fn with_covariate(mut self, cov: &Covariate) -> Result<Self> {
        if cov.values.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "covariate `{}` has {} samples, design has {}",
                cov.name,
                cov.values.len(),
                self.n
            )));
        }
        if cov.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "covariate `{}` has non-finite values",
                cov.name
            )));
        }
        self.names.push(cov.name.clone());
        self.columns.push(cov.values.clone());
        Ok(self)
    }

    pub fn with_covariates(self, covs: &[Covariate]) -> Result<Self> {
        covs.iter().try_fold(self, |d, c| d.with_covariate(c))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.p(), |i, j| self.columns[j][i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    pub beta0: f64,
    pub beta1: f64,
    pub covariate_betas: Vec<f64>,
    /// Full-model coefficient of determination, 0 when `y` is constant.
    pub r_squared: f64,
    pub residuals: Vec<f64>,
}

/// A design factorized once for repeated fits.
#[derive(Debug, Clone)]
pub struct PreparedDesign {
    design: DesignMatrix,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl PreparedDesign {
    pub fn new(design: DesignMatrix) -> Result<Self> {
        if design.p() < 2 || design.n() <= design.p() {
            return Err(Error::InvalidArgument(format!(
                "design needs p >= 2 and n > p, got n = {}, p = {}",
                design.n(),
                design.p()
            )));
        }
        let x = design.to_matrix();
        let sv = x.singular_values();
        let max = sv.max();
        let min = sv.min();
        let ratio = if max > 0.0 { min / max } else { 0.0 };
        if !(ratio >= RANK_TOLERANCE) {
            return Err(Error::RankDeficient { ratio });
        }
        let qr = x.qr();
        let q = qr.q();
        let r = qr.r();
        Ok(PreparedDesign { design, q, r })
    }

    pub fn design(&self) -> &DesignMatrix {
        &self.design
    }

    pub fn fit(&self, y: &[f64]) -> Result<GlmFit> {
        let n = self.design.n();
        if y.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "series has {} samples, design has {n}",
                y.len()
            )));
        }
        let yv = DVector::from_column_slice(y);
        let qty = self.q.tr_mul(&yv);
        let beta = self
            .r
            .solve_upper_triangular(&qty)
            .ok_or(Error::RankDeficient { ratio: 0.0 })?;
        let mut residuals = y.to_vec();
        for (j, col) in self.design.columns.iter().enumerate() {
            let b = beta[j];
            for (r, &x) in residuals.iter_mut().zip(col) {
                *r -= b * x;
            }
        }
        let mean = y.iter().sum::<f64>() / n as f64;
        let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
        let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
        let r_squared = if ss_tot > 0.0 {
            (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
        } else {
            0.0
        };
        Ok(GlmFit {
            beta0: beta[0],
            beta1: beta[1],
            covariate_betas: beta.iter().skip(2).copied().collect(),
            r_squared,
            residuals,
        })
    }
}

/// Least-squares fit of `y` on the design.
pub fn ols_fit(y: &[f64], design: &DesignMatrix) -> Result<GlmFit> {
    PreparedDesign::new(design.clone())?.fit(y)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LagSearchConfig {
    pub lo_s: f64,
    pub hi_s: f64,
    pub step_s: f64,
}

impl LagSearchConfig {
    pub fn new(lo_s: f64, hi_s: f64, step_s: f64) -> Result<Self> {
        let cfg = LagSearchConfig { lo_s, hi_s, step_s };
        cfg.grid()?;
        Ok(cfg)
    }

    /// ±9 s in 0.1 s steps.
    pub fn resting_state() -> Self {
        LagSearchConfig {
            lo_s: -9.0,
            hi_s: 9.0,
            step_s: 0.1,
        }
    }

    /// −10 s to 30 s in 0.1 s steps.
    pub fn hypercapnic() -> Self {
        LagSearchConfig {
            lo_s: -10.0,
            hi_s: 30.0,
            step_s: 0.1,
        }
    }

    pub fn grid(&self) -> Result<Vec<f64>> {
        shift_grid(self.lo_s, self.hi_s, self.step_s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LagResult {
    pub optimal_shift_s: f64,
    pub fit_at_optimum: GlmFit,
    pub r2_profile: Option<Vec<f64>>,
}

/// Precomputed lag search for one reference and covariate set.
///
/// The design `[1, reference, covariates]` is fixed across shifts; only the
/// voxel series moves. A fractional shift by `j + w` samples is the blend
/// `(1−w)·S_j y + w·S_{j+1} y` of two clamped integer shifts, so projections
/// of the integer-shifted (centred) series onto the centred design basis are
/// computed once per integer offset and every grid point costs O(p).
#[derive(Debug, Clone)]
pub struct LagSearcher {
    design: PreparedDesign,
    /// Orthonormal basis of the mean-centred non-intercept columns, column-major.
    basis: Vec<Vec<f64>>,
    grid: Vec<f64>,
    /// (integer offset, weight) of each grid point, in samples.
    positions: Vec<(isize, f64)>,
    offset_lo: isize,
    offset_hi: isize,
    dt: f64,
}

impl LagSearcher {
    pub fn new(reference: &TimeSeries, covariates: &[Covariate], cfg: &LagSearchConfig) -> Result<Self> {
        let grid = cfg.grid()?;
        let n = reference.len();
        if grid.iter().any(|s| s.abs() >= reference.duration()) {
            return Err(Error::InvalidArgument(format!(
                "lag grid [{}, {}] s exceeds record duration {} s",
                cfg.lo_s,
                cfg.hi_s,
                reference.duration()
            )));
        }
        if crate::signal::pearson(reference.values(), reference.values()).is_none() {
            return Err(Error::DegenerateSeries("reference series is constant".into()));
        }
        let design = PreparedDesign::new(
            DesignMatrix::new("reference", reference.values())?.with_covariates(covariates)?,
        )?;

        let p = design.design().p();
        let centred = DMatrix::from_fn(n, p - 1, |i, j| {
            let col = design.design().column(j + 1);
            col[i] - col.iter().sum::<f64>() / n as f64
        });
        let q = centred.qr().q();
        let basis = (0..p - 1).map(|j| q.column(j).iter().copied().collect()).collect();

        let dt = reference.dt();
        let positions: Vec<(isize, f64)> = grid
            .iter()
            .map(|&s| {
                let pos = s / dt;
                let j = pos.floor();
                (j as isize, pos - j)
            })
            .collect();
        let offset_lo = positions.iter().map(|p| p.0).min().unwrap();
        let offset_hi = positions.iter().map(|p| p.0).max().unwrap() + 1;
        Ok(LagSearcher {
            design,
            basis,
            grid,
            positions,
            offset_lo,
            offset_hi,
            dt,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn design(&self) -> &PreparedDesign {
        &self.design
    }

    /// Full-model R² at every grid shift.
    pub fn r2_profile(&self, y: &[f64]) -> Result<Vec<f64>> {
        let n = self.design.design().n();
        if y.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "voxel series has {} samples, reference has {n}",
                y.len()
            )));
        }
        let mean = y.iter().sum::<f64>() / n as f64;
        let yc: Vec<f64> = y.iter().map(|v| v - mean).collect();
        if yc.iter().all(|v| *v == 0.0) {
            return Err(Error::DegenerateSeries("voxel series is constant".into()));
        }

        let count = (self.offset_hi - self.offset_lo + 1) as usize;
        let k = self.basis.len();
        let mut proj = vec![0.0; count * k];
        let mut norm = vec![0.0; count];
        let mut cross = vec![0.0; count];
        let mut prev: Vec<f64> = Vec::new();
        let mut cur = vec![0.0; n];
        let last = n as isize - 1;
        for (slot, off) in (self.offset_lo..=self.offset_hi).enumerate() {
            for (i, c) in cur.iter_mut().enumerate() {
                *c = yc[(i as isize + off).clamp(0, last) as usize];
            }
            let m = cur.iter().sum::<f64>() / n as f64;
            cur.iter_mut().for_each(|c| *c -= m);
            for (b, basis) in self.basis.iter().enumerate() {
                proj[slot * k + b] = dot(basis, &cur);
            }
            norm[slot] = dot(&cur, &cur);
            if slot > 0 {
                cross[slot - 1] = dot(&prev, &cur);
            }
            std::mem::swap(&mut prev, &mut cur);
            if cur.len() != n {
                cur = vec![0.0; n];
            }
        }

        Ok(self
            .positions
            .iter()
            .map(|&(j, w)| {
                let s = (j - self.offset_lo) as usize;
                let (a, b) = (1.0 - w, w);
                let explained: f64 = (0..k)
                    .map(|c| {
                        let v = a * proj[s * k + c] + b * proj[(s + 1) * k + c];
                        v * v
                    })
                    .sum();
                let total = a * a * norm[s] + 2.0 * a * b * cross[s] + b * b * norm[s + 1];
                if total > 0.0 {
                    (explained / total).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect())
    }

    pub fn search(&self, y: &[f64], keep_profile: bool) -> Result<LagResult> {
        let profile = self.r2_profile(y)?;
        let best = best_shift_index(&self.grid, &profile)
            .ok_or_else(|| Error::DegenerateSeries("no finite R² on the lag grid".into()))?;
        let shift = self.grid[best];
        let shifted = shift_values(y, -shift / self.dt);
        let fit = self.design.fit(&shifted)?;
        Ok(LagResult {
            optimal_shift_s: shift,
            fit_at_optimum: fit,
            r2_profile: keep_profile.then_some(profile),
        })
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Finds the shift of `y` that maximizes the full-model R² of
/// `y(t + Δ) ~ 1 + reference + covariates`.
pub fn lag_search(
    y: &TimeSeries,
    reference: &TimeSeries,
    covariates: &[Covariate],
    cfg: &LagSearchConfig,
    keep_profile: bool,
) -> Result<LagResult> {
    if y.len() != reference.len() || (y.dt() - reference.dt()).abs() > 1e-9 * reference.dt() {
        return Err(Error::DimensionMismatch(
            "voxel and reference series must share a time grid".into(),
        ));
    }
    LagSearcher::new(reference, covariates, cfg)?.search(y.values(), keep_profile)
}

/// Per-voxel maps from a volume-wide fit. Out-of-mask and defective voxels are 0.
#[derive(Debug, Clone)]
pub struct VoxelMaps {
    pub beta0: Volume3D,
    pub beta1: Volume3D,
    pub r_squared: Volume3D,
    /// Voxels whose fit failed (for example a constant series).
    pub defects: Mask,
}

#[derive(Debug, Clone)]
pub struct LagMaps {
    pub shift_s: Volume3D,
    pub fit: VoxelMaps,
}

fn check_volume_inputs(vol: &Volume4D, n: usize, mask: &Mask) -> Result<()> {
    mask.require(vol.dims(), "mask")?;
    if vol.nt() != n {
        return Err(Error::DimensionMismatch(format!(
            "volume has {} timepoints, reference has {n}",
            vol.nt()
        )));
    }
    Ok(())
}

struct VoxelOutcome {
    shift: f64,
    beta0: f64,
    beta1: f64,
    r2: f64,
    residuals: Option<Vec<f64>>,
}

/// Shift map, coefficient maps and per-voxel residuals.
type Assembled = (Volume3D, VoxelMaps, Vec<Option<Vec<f64>>>);

fn assemble(
    vol: &Volume4D,
    mask: &Mask,
    outcomes: Vec<(usize, Option<VoxelOutcome>)>,
) -> Result<Assembled> {
    let nvox = vol.n_voxels();
    let mut shift = vec![0.0; nvox];
    let mut b0 = vec![0.0; nvox];
    let mut b1 = vec![0.0; nvox];
    let mut r2 = vec![0.0; nvox];
    let mut defects = vec![false; nvox];
    let mut residuals = vec![None; nvox];
    for (v, o) in outcomes {
        match o {
            Some(o) => {
                shift[v] = o.shift;
                b0[v] = o.beta0;
                b1[v] = o.beta1;
                r2[v] = o.r2;
                residuals[v] = o.residuals;
            }
            None => defects[v] = true,
        }
    }
    let mk = |d| Volume3D::new(vol.dims(), vol.spacing(), d);
    let _ = mask;
    Ok((
        mk(shift)?,
        VoxelMaps {
            beta0: mk(b0)?,
            beta1: mk(b1)?,
            r_squared: mk(r2)?,
            defects: Mask::new(vol.dims(), defects)?,
        },
        residuals,
    ))
}

/// Runs [`lag_search`] on every in-mask voxel (in parallel, deterministic).
pub fn lag_search_volume(
    vol: &Volume4D,
    reference: &TimeSeries,
    covariates: &[Covariate],
    cfg: &LagSearchConfig,
    mask: &Mask,
) -> Result<LagMaps> {
    check_volume_inputs(vol, reference.len(), mask)?;
    let searcher = LagSearcher::new(reference, covariates, cfg)?;
    let outcomes: Vec<(usize, Option<VoxelOutcome>)> = mask
        .indices()
        .into_par_iter()
        .map(|v| {
            let res = searcher.search(&vol.voxel_series(v), false).ok().map(|r| VoxelOutcome {
                shift: r.optimal_shift_s,
                beta0: r.fit_at_optimum.beta0,
                beta1: r.fit_at_optimum.beta1,
                r2: r.fit_at_optimum.r_squared,
                residuals: None,
            });
            (v, res)
        })
        .collect();
    let (shift_s, fit, _) = assemble(vol, mask, outcomes)?;
    Ok(LagMaps { shift_s, fit })
}

/// Unshifted voxelwise GLM: coefficient maps plus the 4-D residual.
pub fn glm_volume(vol: &Volume4D, design: &DesignMatrix, mask: &Mask) -> Result<(VoxelMaps, Volume4D)> {
    check_volume_inputs(vol, design.n(), mask)?;
    let prepared = PreparedDesign::new(design.clone())?;
    let outcomes: Vec<(usize, Option<VoxelOutcome>)> = mask
        .indices()
        .into_par_iter()
        .map(|v| {
            let y = vol.voxel_series(v);
            let constant = y.iter().all(|&s| s == y[0]);
            let res = if constant {
                None
            } else {
                prepared.fit(&y).ok().map(|f| VoxelOutcome {
                    shift: 0.0,
                    beta0: f.beta0,
                    beta1: f.beta1,
                    r2: f.r_squared,
                    residuals: Some(f.residuals),
                })
            };
            (v, res)
        })
        .collect();
    let (_, maps, residuals) = assemble(vol, mask, outcomes)?;
    let nt = vol.nt();
    let series: Vec<Vec<f64>> = residuals
        .into_iter()
        .map(|r| r.unwrap_or_else(|| vec![0.0; nt]))
        .collect();
    let residual = Volume4D::from_voxel_series(vol.dims(), vol.spacing(), vol.tr(), &series)?;
    Ok((maps, residual))
}

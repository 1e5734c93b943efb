//! Static report: one axial mosaic PNG per 3-D output and a flat results CSV.

use std::path::Path;

use hemomap::manifest::SubjectManifest;
use hemomap::nifti::{load_nifti, NiftiVolume};
use hemomap::tables::write_csv;
use hemomap::volume::Volume3D;
use image::{GrayImage, Luma};

use crate::{flag, CliError, Context, ReportArgs};

/// Display window: z-maps use a fixed ±5 window, other maps their own range.
fn window(key: &str, v: &Volume3D) -> (f64, f64) {
    if key.ends_with("_z") {
        return (-5.0, 5.0);
    }
    let (lo, hi) = v
        .data()
        .iter()
        .filter(|x| x.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 1.0, lo + 1.0)
    }
}

/// Axial slices tiled row-major, inferior first; image rows run anterior to posterior.
pub fn mosaic(v: &Volume3D, lo: f64, hi: f64, scale: u32) -> GrayImage {
    let [nx, ny, nz] = v.dims();
    let cols = (nz as f64).sqrt().ceil() as usize;
    let rows = nz.div_ceil(cols);
    let s = scale.max(1) as usize;
    let (w, h) = ((cols * nx * s) as u32, (rows * ny * s) as u32);
    let mut img = GrayImage::new(w, h);
    for z in 0..nz {
        let (ox, oy) = ((z % cols) * nx * s, (z / cols) * ny * s);
        for y in 0..ny {
            for x in 0..nx {
                let t = ((v.get(x, y, z) - lo) / (hi - lo)).clamp(0.0, 1.0);
                let g = Luma([(t * 255.0).round() as u8]);
                let py = oy + (ny - 1 - y) * s;
                for dy in 0..s {
                    for dx in 0..s {
                        img.put_pixel((ox + x * s + dx) as u32, (py + dy) as u32, g);
                    }
                }
            }
        }
    }
    img
}

pub fn report(a: &ReportArgs) -> Result<(), CliError> {
    let m = SubjectManifest::read(&a.manifest).ctx(flag("--manifest", &a.manifest))?;
    let dir = a.manifest.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(&a.out).map_err(|e| CliError::Data(format!("--out {}: {e}", a.out.display())))?;
    let mut images = Vec::new();
    for (key, rel) in &m.outputs {
        if rel.extension().and_then(|e| e.to_str()) != Some("nii") {
            continue;
        }
        let path = dir.join(rel);
        let NiftiVolume::ThreeD(v) = load_nifti(&path).ctx(path.display())? else {
            continue;
        };
        let (lo, hi) = window(key, &v);
        let png = a.out.join(format!("{key}.png"));
        mosaic(&v, lo, hi, a.scale)
            .save(&png)
            .map_err(|e| CliError::Data(format!("{}: {e}", png.display())))?;
        images.push(png);
    }

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut push = |k: String, v: String| rows.push(vec![k, v]);
    let r = &m.results;
    for (k, v) in [("b_etco2_mmhg", r.b_etco2_mmhg), ("etco2_shift_s", r.etco2_shift_s), ("alignment_cc", r.alignment_cc)] {
        if let Some(v) = v {
            push(k.into(), v.to_string());
        }
    }
    for (k, v) in &r.clip_fractions {
        push(format!("clip_fraction.{k}"), v.to_string());
    }
    for (k, v) in &r.values {
        push(k.clone(), v.to_string());
    }
    for (k, rep) in &r.metrics {
        push(format!("{k}.pearson_cc"), rep.pearson_cc.to_string());
        push(format!("{k}.spearman_rho"), rep.spearman_rho.to_string());
        push(format!("{k}.rmse"), rep.rmse.to_string());
        push(format!("{k}.ssim"), rep.ssim.map_or("nan".into(), |v| v.to_string()));
        push(format!("{k}.psnr_db"), rep.psnr_db.map_or("inf".into(), |v| v.to_string()));
    }
    for (k, v) in &m.defects {
        push(format!("voxels.{k}"), v.to_string());
    }
    push("warnings".into(), m.warnings.len().to_string());
    let table = a.out.join("results.csv");
    write_csv(&table, &["key", "value"], &rows).ctx(table.display())?;
    println!(
        "{}",
        serde_json::json!({ "images": images, "table": table })
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mosaic_layout_and_window() {
        // 2×3 voxels, 3 slices → 2×2 tiles, value = z
        let v = Volume3D::new([2, 3, 3], [1.0; 3], (0..18).map(|i| (i / 6) as f64).collect()).unwrap();
        let img = mosaic(&v, 0.0, 2.0, 1);
        assert_eq!(img.dimensions(), (4, 6));
        assert_eq!(img.get_pixel(0, 0)[0], 0);
        assert_eq!(img.get_pixel(2, 0)[0], 128);
        assert_eq!(img.get_pixel(0, 3)[0], 255);
        assert_eq!(img.get_pixel(3, 5)[0], 0); // empty tile
        assert_eq!(mosaic(&v, 0.0, 2.0, 3).dimensions(), (12, 18));
        assert_eq!(window("bat_z", &v), (-5.0, 5.0));
        assert_eq!(window("shift_s", &v), (0.0, 2.0));
    }
}

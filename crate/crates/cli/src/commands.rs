use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hemomap::dlprep::{
    export_subject, split_folds, DlIndex, DlSubjectSources, SubjectEntry, DL_CLIP, DL_GRID,
};
use hemomap::glm::LagSearchConfig;
use hemomap::manifest::SubjectManifest;
use hemomap::metrics::{cohens_d, compare_maps, dice, icc};
use hemomap::nifti::{
    load_atlas, load_mask, load_volume3d, load_volume4d, save_nifti, NiftiImage, StackWriter,
};
use hemomap::phantom::{write_phantom, PhantomSpec};
use hemomap::pipeline::{
    grrs_pipeline, hc_pipeline, parcellate_volume, residual_cc_bank_each,
};
use hemomap::signal::TimeSeries;
use hemomap::tables::{read_co2_csv, read_csv, read_label_table, read_motion_csv, write_csv};
use hemomap::volume::{clip_range, Mask, Volume3D, Volume4D, ZMap};

use crate::{flag, CliError, Context, CcbankArgs, GrrsArgs, HcArgs, MetricsArgs, PhantomArgs, PrepDlArgs, RoiTableArgs, Settings};

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("--out {}: {e}", dir.display())))
}

/// Collects output files into a directory and records them in the manifest.
struct OutputDir<'a> {
    dir: &'a Path,
    manifest: SubjectManifest,
}

impl<'a> OutputDir<'a> {
    fn new(dir: &'a Path, subject_id: &str, command: &str) -> Result<Self, CliError> {
        create_dir(dir)?;
        Ok(OutputDir {
            dir,
            manifest: SubjectManifest::new(subject_id, command),
        })
    }

    fn input(&mut self, key: &str, path: &Path) {
        self.manifest.inputs.insert(key.into(), path.to_path_buf());
    }

    fn record(&mut self, key: &str, file: &str) -> PathBuf {
        self.manifest.outputs.insert(key.into(), PathBuf::from(file));
        self.dir.join(file)
    }

    fn image(&mut self, key: &str, image: NiftiImage<'_>) -> Result<(), CliError> {
        let path = self.record(key, &format!("{key}.nii"));
        save_nifti(image, &path).ctx(path.display())
    }

    fn volume(&mut self, key: &str, v: &Volume3D) -> Result<(), CliError> {
        self.image(key, NiftiImage::Volume3D(v))
    }

    /// Saves a z-map and records the fraction a clip to the export range would move.
    fn zmap(&mut self, key: &str, z: &ZMap) -> Result<(), CliError> {
        let (_, frac) = clip_range(z, DL_CLIP[0], DL_CLIP[1])?;
        self.manifest.results.clip_fractions.insert(key.into(), frac);
        self.volume(key, z.volume())
    }

    fn series(&mut self, key: &str, ts: &TimeSeries, column: &str) -> Result<(), CliError> {
        let path = self.record(key, &format!("{key}.csv"));
        let rows: Vec<Vec<String>> = ts
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| vec![format!("{:.4}", ts.time(i)), format!("{v:.9}")])
            .collect();
        write_csv(&path, &["time_s", column], &rows).ctx(path.display())
    }

    fn finish(mut self) -> Result<SubjectManifest, CliError> {
        self.manifest.seal(self.dir)?;
        let path = self.dir.join("manifest.json");
        self.manifest.write(&path).ctx(path.display())?;
        Ok(self.manifest)
    }
}

fn print_json(v: &impl serde::Serialize) -> Result<(), CliError> {
    let s = serde_json::to_string_pretty(v).map_err(|e| CliError::Data(e.to_string()))?;
    println!("{s}");
    Ok(())
}

fn summary(m: &SubjectManifest) -> Result<(), CliError> {
    print_json(&serde_json::json!({
        "subject_id": m.subject_id,
        "command": m.command,
        "determinism_hash": m.determinism_hash()?,
        "defects": m.defects,
        "results": m.results,
        "warnings": m.warnings,
    }))
}

fn timing_name(t: hemomap::pipeline::ReferenceTiming) -> String {
    serde_json::to_value(t)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

pub fn grrs(a: &GrrsArgs, s: &Settings) -> Result<(), CliError> {
    let mut cfg = s.config.grrs.clone();
    if let Some(f) = a.fwhm {
        cfg.fwhm_mm = f.0;
    }
    if let Some(t) = a.reference_timing {
        cfg.reference_timing = t;
    }
    let bold = load_volume4d(&a.bold).ctx(flag("--bold", &a.bold))?;
    let cb = load_mask(&a.cerebellum_mask).ctx(flag("--cerebellum-mask", &a.cerebellum_mask))?;
    let brain = load_mask(&a.brain_mask).ctx(flag("--brain-mask", &a.brain_mask))?;
    let motion = match &a.motion {
        Some(p) => Some(read_motion_csv(p).ctx(flag("--motion", p))?),
        None => None,
    };
    if let Some(p) = &a.atlas {
        let atlas = load_atlas(p).ctx(flag("--atlas", p))?;
        if atlas.dims() != bold.dims() {
            return Err(CliError::Data(format!(
                "--atlas {}: grid {:?} does not match --bold {:?}",
                p.display(),
                atlas.dims(),
                bold.dims()
            )));
        }
    }
    let out = grrs_pipeline(&bold, &cb, &brain, motion.as_deref(), &cfg).ctx("grrs")?;

    let mut o = OutputDir::new(&a.out, &a.subject_id, "grrs")?;
    o.input("bold", &a.bold);
    o.input("cerebellum_mask", &a.cerebellum_mask);
    o.input("brain_mask", &a.brain_mask);
    if let Some(p) = &a.motion {
        o.input("motion", p);
    }
    if let Some(p) = &a.atlas {
        o.input("atlas", p);
    }
    let p = &mut o.manifest.parameters;
    p.filter_band_hz = Some([cfg.band_hz.0, cfg.band_hz.1]);
    p.fwhm_mm = cfg.fwhm_mm;
    p.reference_timing = Some(timing_name(cfg.reference_timing));
    p.lag_grid = Some(cfg.lag);
    p.clip_range = Some(DL_CLIP);
    p.beta0_guard = Some(cfg.beta0_guard);
    p.seed = s.seed;

    o.zmap("beta0_z", &out.cvr_beta0_z)?;
    o.zmap("beta1_z", &out.cvr_beta1_z)?;
    o.zmap("ratio_z", &out.cvr_ratio_z)?;
    o.zmap("bat_z", &out.bat_z)?;
    o.volume("beta0", &out.raw.beta0)?;
    o.volume("beta1", &out.raw.beta1)?;
    o.volume("ratio", &out.raw.ratio)?;
    o.volume("shift_s", &out.raw.shift_s)?;
    o.volume("r_squared", &out.raw.r_squared)?;
    let sp = bold.spacing();
    o.image("residual", NiftiImage::Volume4D(&out.residual))?;
    o.image("defects", NiftiImage::Mask(&out.defects, sp))?;
    o.image("guard_flags", NiftiImage::Mask(&out.guard_flags, sp))?;
    o.series("reference", &out.reference, "signal")?;
    o.manifest.defects.insert("defects".into(), out.defects.count());
    o.manifest.defects.insert("guard_flags".into(), out.guard_flags.count());
    o.manifest.results.values.insert("covariates".into(), out.covariate_names.len() as f64);
    o.manifest.warnings = out.warnings;
    summary(&o.finish()?)
}

pub fn hc(a: &HcArgs, s: &Settings) -> Result<(), CliError> {
    let mut cfg = s.config.hc.clone();
    if let Some(f) = a.fwhm {
        cfg.fwhm_mm = f.0;
    }
    if let Some(b) = a.b_etco2 {
        cfg.b_etco2_mmhg = Some(b);
    }
    let bold = load_volume4d(&a.bold).ctx(flag("--bold", &a.bold))?;
    let co2 = read_co2_csv(&a.co2).ctx(flag("--co2", &a.co2))?;
    let cb = load_mask(&a.cerebellum_mask).ctx(flag("--cerebellum-mask", &a.cerebellum_mask))?;
    let brain = load_mask(&a.brain_mask).ctx(flag("--brain-mask", &a.brain_mask))?;
    let out = hc_pipeline(&bold, &co2, &cb, &brain, &cfg).ctx("hc")?;

    let mut o = OutputDir::new(&a.out, &a.subject_id, "hc")?;
    o.input("bold", &a.bold);
    o.input("co2", &a.co2);
    o.input("cerebellum_mask", &a.cerebellum_mask);
    o.input("brain_mask", &a.brain_mask);
    let p = &mut o.manifest.parameters;
    p.fwhm_mm = cfg.fwhm_mm;
    p.lag_grid = Some(cfg.lag);
    p.alignment_grid = Some(LagSearchConfig {
        lo_s: cfg.align_range_s.0,
        hi_s: cfg.align_range_s.1,
        step_s: cfg.align_step_s,
    });
    p.clip_range = Some(DL_CLIP);
    p.beta0_guard = Some(cfg.denominator_guard);
    p.b_etco2_mode = Some(match cfg.b_etco2_mmhg {
        Some(_) => "fixed".into(),
        None => "lowest_quartile".into(),
    });
    p.seed = s.seed;
    let r = &mut o.manifest.results;
    r.b_etco2_mmhg = Some(out.b_etco2);
    r.etco2_shift_s = Some(out.etco2_shift_s);
    r.alignment_cc = Some(out.alignment_cc);

    o.zmap("cvr_z", &out.cvr_z)?;
    o.zmap("bat_z", &out.bat_z)?;
    o.volume("cvr", &out.raw.cvr)?;
    o.volume("beta0", &out.raw.beta0)?;
    o.volume("beta1", &out.raw.beta1)?;
    o.volume("shift_s", &out.raw.shift_s)?;
    let sp = bold.spacing();
    o.image("defects", NiftiImage::Mask(&out.defects, sp))?;
    o.image("guard_flags", NiftiImage::Mask(&out.guard_flags, sp))?;
    o.series("etco2_aligned", &out.etco2_aligned, "etco2_mmhg")?;
    o.series("reference", &out.reference, "signal")?;
    o.manifest.defects.insert("defects".into(), out.defects.count());
    o.manifest.defects.insert("guard_flags".into(), out.guard_flags.count());
    o.manifest.warnings = out.warnings;
    summary(&o.finish()?)
}

pub fn ccbank(a: &CcbankArgs, _s: &Settings) -> Result<(), CliError> {
    let residual = load_volume4d(&a.residual).ctx(flag("--residual", &a.residual))?;
    let atlas = load_atlas(&a.atlas).ctx(flag("--atlas", &a.atlas))?;
    let brain = load_mask(&a.brain_mask).ctx(flag("--brain-mask", &a.brain_mask))?;
    let n = atlas.label_ids().len();
    if n == 0 {
        return Err(CliError::Data(format!("--atlas {}: no nonzero labels", a.atlas.display())));
    }
    let mut o = OutputDir::new(&a.out, &a.subject_id, "ccbank")?;
    o.input("residual", &a.residual);
    o.input("atlas", &a.atlas);
    o.input("brain_mask", &a.brain_mask);

    let stack_path = o.record("ccbank", "ccbank.nii");
    let mut labels = Vec::with_capacity(n);
    let mut series = Vec::with_capacity(n);
    let warnings = if n >= 2 {
        let mut w = StackWriter::create(&stack_path, residual.dims(), residual.spacing(), n).ctx(stack_path.display())?;
        let warn = residual_cc_bank_each(&residual, &atlas, &brain, |m| {
            labels.push(m.label);
            series.push(m.roi_series);
            w.push(m.map.volume())
        })
        .ctx("ccbank")?;
        w.finish().ctx(stack_path.display())?;
        warn
    } else {
        let mut single = None;
        let warn = residual_cc_bank_each(&residual, &atlas, &brain, |m| {
            labels.push(m.label);
            series.push(m.roi_series);
            single = Some(m.map.into_volume());
            Ok(())
        })
        .ctx("ccbank")?;
        let v = single.expect("one label yields one map");
        save_nifti(NiftiImage::Volume3D(&v), &stack_path).ctx(stack_path.display())?;
        warn
    };

    let path = o.record("labels", "ccbank_labels.csv");
    let rows: Vec<Vec<String>> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| vec![i.to_string(), l.to_string()])
        .collect();
    write_csv(&path, &["channel", "label"], &rows).ctx(path.display())?;

    let path = o.record("roi_series", "roi_series.csv");
    let mut header = vec!["time_s".to_string()];
    header.extend(labels.iter().map(|l| format!("label_{l}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = (0..residual.nt())
        .map(|t| {
            let mut r = vec![format!("{:.4}", t as f64 * residual.tr())];
            r.extend(series.iter().map(|s| format!("{:.9}", s[t])));
            r
        })
        .collect();
    write_csv(&path, &header_refs, &rows).ctx(path.display())?;
    o.manifest.results.values.insert("maps".into(), n as f64);
    o.manifest.warnings = warnings;
    summary(&o.finish()?)
}

pub fn phantom(a: &PhantomArgs, s: &Settings) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&a.spec).map_err(|e| CliError::Data(format!("--spec {}: {e}", a.spec.display())))?;
    let mut spec = PhantomSpec::from_json(&text).ctx(flag("--spec", &a.spec))?;
    if let Some(seed) = s.seed {
        spec.seed = seed;
    }
    create_dir(&a.out)?;
    let files = write_phantom(&spec, &a.out, a.spec.parent()).ctx(flag("--spec", &a.spec))?;
    print_json(&files)
}

pub fn metrics(a: &MetricsArgs) -> Result<(), CliError> {
    let pred = load_volume3d(&a.pred).ctx(flag("--pred", &a.pred))?;
    let truth = load_volume3d(&a.truth).ctx(flag("--truth", &a.truth))?;
    if pred.dims() != truth.dims() {
        return Err(CliError::Data(format!(
            "--pred {:?} and --truth {:?} grids differ",
            pred.dims(),
            truth.dims()
        )));
    }
    let mask = match &a.brain_mask {
        Some(p) => load_mask(p).ctx(flag("--brain-mask", p))?,
        None => Mask::full(truth.dims())?,
    };
    let range = match a.dynamic_range {
        Some(r) if r > 0.0 && r.is_finite() => r,
        Some(r) => return Err(CliError::Usage(format!("--dynamic-range must be positive, got {r}"))),
        None => {
            let vals: Vec<f64> = mask.indices().iter().map(|&v| truth.data()[v]).collect();
            let (lo, hi) = vals
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
            if hi > lo { hi - lo } else { 1.0 }
        }
    };
    let report = compare_maps(&pred, &truth, &mask, range).ctx("metrics")?;
    if let Some(p) = &a.out {
        let s = serde_json::to_string_pretty(&report).map_err(|e| CliError::Data(e.to_string()))?;
        std::fs::write(p, s).map_err(|e| CliError::Data(format!("--out {}: {e}", p.display())))?;
    }
    print_json(&report)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn roi_table(a: &RoiTableArgs) -> Result<(), CliError> {
    let groups = !a.group_a.is_empty() || !a.group_b.is_empty();
    if groups {
        if a.map.is_some() || a.retest_map.is_some() {
            return Err(CliError::Usage("--group-a/--group-b cannot be combined with --map".into()));
        }
        if a.group_a.len() < 2 || a.group_b.len() < 2 {
            return Err(CliError::Usage("--group-a and --group-b each need at least two tables".into()));
        }
        return group_table(a);
    }
    let (Some(map_path), Some(atlas_path)) = (&a.map, &a.atlas) else {
        return Err(CliError::Usage("roi-table needs --map and --atlas, or --group-a and --group-b".into()));
    };
    if a.dice_threshold.is_some() && a.retest_map.is_none() {
        return Err(CliError::Usage("--dice-threshold requires --retest-map".into()));
    }
    let map = load_volume3d(map_path).ctx(flag("--map", map_path))?;
    let atlas = load_atlas(atlas_path).ctx(flag("--atlas", atlas_path))?;
    let mask = match &a.brain_mask {
        Some(p) => load_mask(p).ctx(flag("--brain-mask", p))?,
        None => Mask::full(map.dims())?,
    };
    let (t1, mut warnings) = parcellate_volume(&map, &mask, &atlas).ctx(flag("--map", map_path))?;
    let mut summary = serde_json::json!({ "n_rois": t1.len() });
    let rows: Vec<Vec<String>> = if let Some(rp) = &a.retest_map {
        let retest = load_volume3d(rp).ctx(flag("--retest-map", rp))?;
        let (t2, w2) = parcellate_volume(&retest, &mask, &atlas).ctx(flag("--retest-map", rp))?;
        warnings.extend(w2);
        let r = icc(&t1, &t2).ctx("icc")?;
        summary["icc"] = serde_json::to_value(&r).map_err(|e| CliError::Data(e.to_string()))?;
        if let Some(th) = a.dice_threshold {
            let above = |v: &Volume3D| Mask::from_fn(v.dims(), |x, y, z| v.get(x, y, z) > th);
            let m1 = above(&map)?.and(&mask)?;
            let m2 = above(&retest)?.and(&mask)?;
            summary["dice"] = serde_json::json!(dice(&m1, &m2)?);
            summary["dice_threshold"] = serde_json::json!(th);
        }
        t1.iter()
            .zip(&t2)
            .map(|((l, v1), (_, v2))| vec![l.to_string(), format!("{v1:.9}"), format!("{v2:.9}")])
            .collect()
    } else {
        t1.iter().map(|(l, v)| vec![l.to_string(), format!("{v:.9}")]).collect()
    };
    if let Some(out) = &a.out {
        let header: &[&str] = if a.retest_map.is_some() { &["label", "value", "retest"] } else { &["label", "value"] };
        write_csv(out, header, &rows).ctx(flag("--out", out))?;
    }
    summary["warnings"] = serde_json::json!(warnings);
    print_json(&summary)
}

fn group_table(a: &RoiTableArgs) -> Result<(), CliError> {
    let load = |name: &str, paths: &[PathBuf]| -> Result<Vec<BTreeMap<u32, f64>>, CliError> {
        paths
            .iter()
            .map(|p| Ok(read_label_table(p).ctx(flag(name, p))?.into_iter().collect()))
            .collect()
    };
    let ga = load("--group-a", &a.group_a)?;
    let gb = load("--group-b", &a.group_b)?;
    let labels: Vec<u32> = ga[0]
        .keys()
        .copied()
        .filter(|l| ga.iter().chain(&gb).all(|t| t.contains_key(l)))
        .collect();
    if labels.is_empty() {
        return Err(CliError::Data("no ROI label is present in every table".into()));
    }
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for l in &labels {
        let va: Vec<f64> = ga.iter().map(|t| t[l]).collect();
        let vb: Vec<f64> = gb.iter().map(|t| t[l]).collect();
        let d = match cohens_d(&va, &vb) {
            Ok(d) => format!("{d:.9}"),
            Err(e) => {
                warnings.push(format!("label {l}: {e}"));
                "nan".into()
            }
        };
        rows.push(vec![l.to_string(), format!("{:.9}", mean(&va)), format!("{:.9}", mean(&vb)), d]);
    }
    if let Some(out) = &a.out {
        write_csv(out, &["label", "mean_a", "mean_b", "cohens_d"], &rows).ctx(flag("--out", out))?;
    }
    print_json(&serde_json::json!({
        "n_rois": labels.len(),
        "n_a": ga.len(),
        "n_b": gb.len(),
        "warnings": warnings,
    }))
}

struct SubjectRow {
    entry: SubjectEntry,
    grrs: PathBuf,
    hc: PathBuf,
}

fn read_subjects(path: &Path) -> Result<Vec<SubjectRow>, CliError> {
    let (header, rows) = read_csv(path).ctx(flag("--subjects", path))?;
    let col = |name: &str| header.iter().position(|h| h == name);
    let (Some(id), Some(g), Some(h)) = (col("subject_id"), col("grrs_manifest"), col("hc_manifest")) else {
        return Err(CliError::Data(format!(
            "--subjects {}: header must contain subject_id, grrs_manifest and hc_manifest",
            path.display()
        )));
    };
    let stratum = col("stratum");
    let base = path.parent().unwrap_or(Path::new("."));
    if rows.is_empty() {
        return Err(CliError::Data(format!("--subjects {}: no subjects", path.display())));
    }
    Ok(rows
        .iter()
        .map(|r| SubjectRow {
            entry: SubjectEntry {
                subject_id: r[id].clone(),
                stratum: stratum.map(|c| r[c].clone()).filter(|s| !s.is_empty()),
            },
            grrs: base.join(&r[g]),
            hc: base.join(&r[h]),
        })
        .collect())
}

fn manifest_at(path: &Path, command: &str) -> Result<(SubjectManifest, PathBuf), CliError> {
    let m = SubjectManifest::read(path).ctx(flag("--subjects", path))?;
    if m.command != command {
        return Err(CliError::Data(format!(
            "--subjects {}: expected a `{command}` manifest, found `{}`",
            path.display(),
            m.command
        )));
    }
    let dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    Ok((m, dir))
}

fn load_output(m: &SubjectManifest, dir: &Path, key: &str) -> Result<Volume3D, CliError> {
    let p = m.output_path(dir, key).ctx(&m.subject_id)?;
    load_volume3d(&p).ctx(p.display())
}

pub fn prep_dl(a: &PrepDlArgs, s: &Settings) -> Result<(), CliError> {
    if a.folds < 1 {
        return Err(CliError::Usage("--folds must be at least 1".into()));
    }
    let subjects = read_subjects(&a.subjects)?;
    let entries: Vec<SubjectEntry> = subjects.iter().map(|r| r.entry.clone()).collect();
    let mut warnings = Vec::new();
    let k = a.folds.min(entries.len());
    if k < a.folds {
        warnings.push(format!("{} subjects: using {k} folds instead of {}", entries.len(), a.folds));
    }
    let seed = s.seed.unwrap_or(0);
    let folds = split_folds(&entries, k, seed).ctx(flag("--subjects", &a.subjects))?;
    create_dir(&a.out)?;
    let override_atlas = match &a.atlas {
        Some(p) => Some(load_atlas(p).ctx(flag("--atlas", p))?),
        None => None,
    };

    let mut exports = Vec::new();
    for row in &subjects {
        let id = &row.entry.subject_id;
        let (gm, gdir) = manifest_at(&row.grrs, "grrs")?;
        let (hm, hdir) = manifest_at(&row.hc, "hc")?;
        let primary = [
            load_output(&gm, &gdir, "beta0_z")?,
            load_output(&gm, &gdir, "beta1_z")?,
            load_output(&gm, &gdir, "bat_z")?,
        ];
        let labels = [load_output(&hm, &hdir, "cvr_z")?, load_output(&hm, &hdir, "bat_z")?];
        let rp = gm.output_path(&gdir, "residual").ctx(id)?;
        let residual: Volume4D = load_volume4d(&rp).ctx(rp.display())?;
        let brain_path = gm.input_path("brain_mask").ctx(id)?;
        let brain = load_mask(brain_path).ctx(brain_path.display())?;
        let atlas = match &override_atlas {
            Some(a) => a.clone(),
            None => {
                let p = gm.input_path("atlas").map_err(|_| {
                    CliError::Data(format!(
                        "{}: GRRS manifest has no atlas; pass --atlas",
                        row.grrs.display()
                    ))
                })?;
                load_atlas(p).ctx(p.display())?
            }
        };
        let src = DlSubjectSources {
            subject_id: id,
            primary: [&primary[0], &primary[1], &primary[2]],
            labels: [&labels[0], &labels[1]],
            residual: &residual,
            atlas: &atlas,
            brain: &brain,
        };
        let ex = export_subject(&src, folds.assignment[id], &a.out).ctx(id)?;
        warnings.extend(ex.warnings.iter().cloned());
        exports.push(ex);
    }
    let index = DlIndex::new(folds, exports, DL_GRID, warnings);
    let path = a.out.join("index.json");
    index.write(&path).ctx(path.display())?;
    print_json(&serde_json::json!({
        "index": path,
        "subjects": index.subjects.len(),
        "samples": index.samples.len(),
        "folds": index.folds.k,
        "warnings": index.warnings,
    }))
}

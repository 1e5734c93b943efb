use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hemomap::dlprep::DlIndex;
use hemomap::manifest::SubjectManifest;
use hemomap::nifti::load_volume4d;
use serde_json::{json, Value};

fn hemomap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hemomap"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Value {
    let out = hemomap(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn resting_spec(dir: &Path, bat: &[f64], atlas_labels: Option<usize>) -> PathBuf {
    let spec = json!({
        "dims": [12, 8, 6],
        "tr": 2.0,
        "nt": 120,
        "driver": { "kind": "resting_like" },
        "cvr": { "kind": "blocks", "axis": 1, "values": [0.005, 0.01, 0.015, 0.02] },
        "bat": { "kind": "blocks", "axis": 0, "values": bat },
        "seed": 11,
        "atlas_labels": atlas_labels,
    });
    let p = dir.join(format!("rest{}.json", bat.len()));
    std::fs::write(&p, spec.to_string()).unwrap();
    p
}

fn hc_spec(dir: &Path) -> PathBuf {
    let spec = json!({
        "dims": [12, 8, 6],
        "tr": 2.0,
        "nt": 120,
        "driver": { "kind": "block_co2", "baseline_mmhg": 40.0, "plateau_mmhg": 48.0, "period_s": 120.0, "onset_s": 60.0 },
        "cvr": { "kind": "blocks", "axis": 1, "values": [0.002, 0.004, 0.006, 0.008] },
        "bat": { "kind": "blocks", "axis": 0, "values": [0.0, 2.0, 4.5] },
    });
    let p = dir.join("hc.json");
    std::fs::write(&p, spec.to_string()).unwrap();
    p
}

fn run_grrs(ph: &Path, out: &Path, extra: &[&str]) -> Value {
    let (bold, cb, brain) = (ph.join("bold.nii"), ph.join("cerebellum_mask.nii"), ph.join("brain_mask.nii"));
    let mut args = vec![
        "grrs", "--bold", s(&bold), "--cerebellum-mask", s(&cb), "--brain-mask", s(&brain), "--out", s(out), "--fwhm", "none",
    ];
    args.extend_from_slice(extra);
    ok(&args)
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(hemomap(&["--help"]).status.code(), Some(0));
    assert_eq!(hemomap(&["--version"]).status.code(), Some(0));
    assert_eq!(hemomap(&["grrs", "--help"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    let out = hemomap(&["grrs", "--cerebellum-mask", "c.nii", "--brain-mask", "b.nii", "--out", "o"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--bold") && err.contains("Usage"), "{err}");
    assert_eq!(hemomap(&[]).status.code(), Some(1));
    assert_eq!(hemomap(&["bogus"]).status.code(), Some(1));
    assert_eq!(hemomap(&["grrs", "--bold", "a", "--cerebellum-mask", "c", "--brain-mask", "b", "--out", "o", "--fwhm", "-3"]).status.code(), Some(1));
    assert_eq!(hemomap(&["roi-table"]).status.code(), Some(1));
}

#[test]
fn data_errors_exit_two_and_name_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.nii");
    let out = hemomap(&[
        "grrs", "--bold", s(&missing), "--cerebellum-mask", "c.nii", "--brain-mask", "b.nii", "--out", s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--bold") && err.contains("missing.nii"), "{err}");

    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"grrs": {"nonsense": 1}}"#).unwrap();
    let out = hemomap(&["--config", s(&cfg), "phantom", "--spec", "x.json", "--out", "o"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config"));
}

#[test]
fn zero_gain_phantom_is_a_data_error_not_a_crash() {
    let dir = tempfile::tempdir().unwrap();
    let spec = json!({
        "dims": [4, 4, 3], "tr": 2.0, "nt": 40,
        "driver": { "kind": "resting_like" },
        "cvr": { "kind": "constant", "value": 0.0 },
        "bat": { "kind": "constant", "value": 0.0 },
    });
    let p = dir.path().join("flat.json");
    std::fs::write(&p, spec.to_string()).unwrap();
    let ph = dir.path().join("ph");
    ok(&["phantom", "--spec", s(&p), "--out", s(&ph)]);
    let out = hemomap(&[
        "grrs",
        "--bold", s(&ph.join("bold.nii")),
        "--cerebellum-mask", s(&ph.join("cerebellum_mask.nii")),
        "--brain-mask", s(&ph.join("brain_mask.nii")),
        "--out", s(&dir.path().join("g")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("degenerate"));
}

#[test]
fn phantom_grrs_metrics_give_perfect_rank_agreement() {
    let dir = tempfile::tempdir().unwrap();
    let spec = resting_spec(dir.path(), &[-2.0, 0.0, 3.0], None);
    let ph = dir.path().join("ph");
    ok(&["phantom", "--spec", s(&spec), "--out", s(&ph)]);
    let g = dir.path().join("grrs");
    let summary = run_grrs(&ph, &g, &[]);
    assert_eq!(summary["defects"]["defects"], 0);

    // CVR comes from the zero-shift fit, so rank agreement is exact without delays.
    let ph0 = dir.path().join("ph0");
    ok(&["phantom", "--spec", s(&resting_spec(dir.path(), &[0.0], None)), "--out", s(&ph0)]);
    let g0 = dir.path().join("grrs0");
    run_grrs(&ph0, &g0, &[]);
    let rep = ok(&[
        "metrics",
        "--pred", s(&g0.join("ratio_z.nii")),
        "--truth", s(&ph0.join("cvr_truth.nii")),
        "--brain-mask", s(&ph0.join("brain_mask.nii")),
    ]);
    assert_eq!(rep["spearman_rho"], 1.0);

    let rep = ok(&[
        "metrics",
        "--pred", s(&g.join("shift_s.nii")),
        "--truth", s(&ph.join("bat_truth.nii")),
        "--out", s(&dir.path().join("bat.json")),
    ]);
    assert_eq!(rep["rmse"], 0.0);
    assert_eq!(rep["psnr_db"], Value::Null);
    assert!(dir.path().join("bat.json").is_file());

    let m = SubjectManifest::read(&g.join("manifest.json")).unwrap();
    assert_eq!(m.parameters.fwhm_mm, None);
    assert_eq!(m.parameters.filter_band_hz, Some([0.0, 0.1164]));
    assert!(m.provenance.content_sha256.contains_key("output:residual"));
    assert_eq!(summary["determinism_hash"], m.determinism_hash().unwrap());

    let r = dir.path().join("report");
    ok(&["report", "--manifest", s(&g.join("manifest.json")), "--out", s(&r)]);
    assert!(r.join("bat_z.png").is_file());
    assert!(r.join("results.csv").is_file());
    assert!(!r.join("residual.png").exists());
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let spec = resting_spec(dir.path(), &[-2.0, 0.0, 3.0], None);
    let ph = dir.path().join("ph");
    ok(&["phantom", "--spec", s(&spec), "--out", s(&ph)]);
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"grrs": {"fwhm_mm": 6.0, "beta0_guard": 0.01}, "seed": 5}"#).unwrap();
    let g = dir.path().join("g");
    run_grrs(&ph, &g, &["--config", s(&cfg)]);
    let m = SubjectManifest::read(&g.join("manifest.json")).unwrap();
    // --fwhm none beats the file; the guard comes from the file
    assert_eq!(m.parameters.fwhm_mm, None);
    assert_eq!(m.parameters.beta0_guard, Some(0.01));
    assert_eq!(m.parameters.seed, Some(5));
    let g2 = dir.path().join("g2");
    run_grrs(&ph, &g2, &["--config", s(&cfg), "--seed", "9"]);
    assert_eq!(SubjectManifest::read(&g2.join("manifest.json")).unwrap().parameters.seed, Some(9));
}

#[test]
fn hc_recovers_baseline_and_alignment() {
    let dir = tempfile::tempdir().unwrap();
    let spec = hc_spec(dir.path());
    let ph = dir.path().join("ph");
    ok(&["phantom", "--spec", s(&spec), "--out", s(&ph)]);
    let h = dir.path().join("hc");
    let summary = ok(&[
        "hc",
        "--bold", s(&ph.join("bold.nii")),
        "--co2", s(&ph.join("co2.csv")),
        "--cerebellum-mask", s(&ph.join("cerebellum_mask.nii")),
        "--brain-mask", s(&ph.join("brain_mask.nii")),
        "--out", s(&h),
        "--fwhm", "none",
    ]);
    assert!((summary["results"]["b_etco2_mmhg"].as_f64().unwrap() - 40.0).abs() < 1e-6);
    assert!((summary["results"]["etco2_shift_s"].as_f64().unwrap() - 10.0).abs() < 1e-9);
    let rep = ok(&[
        "metrics",
        "--pred", s(&h.join("cvr.nii")),
        "--truth", s(&ph.join("cvr_truth.nii")),
        "--brain-mask", s(&ph.join("cerebellum_mask.nii")),
    ]);
    assert_eq!(rep["spearman_rho"], 1.0);
    let rep = ok(&["metrics", "--pred", s(&h.join("shift_s.nii")), "--truth", s(&ph.join("bat_truth.nii"))]);
    assert!(rep["rmse"].as_f64().unwrap() <= 0.1);
    let m = SubjectManifest::read(&h.join("manifest.json")).unwrap();
    assert_eq!(m.parameters.b_etco2_mode.as_deref(), Some("lowest_quartile"));
}

#[test]
fn roi_table_modes() {
    let dir = tempfile::tempdir().unwrap();
    let spec = resting_spec(dir.path(), &[-2.0, 0.0, 3.0], Some(12));
    let ph = dir.path().join("ph");
    ok(&["phantom", "--spec", s(&spec), "--out", s(&ph)]);
    let table = dir.path().join("t.csv");
    let out = ok(&[
        "roi-table",
        "--map", s(&ph.join("cvr_truth.nii")),
        "--atlas", s(&ph.join("atlas.nii")),
        "--retest-map", s(&ph.join("cvr_truth.nii")),
        "--dice-threshold", "0.012",
        "--out", s(&table),
    ]);
    assert_eq!(out["n_rois"], 12);
    assert!((out["icc"]["icc"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(out["dice"], 1.0);

    let a: Vec<PathBuf> = (0..3).map(|i| dir.path().join(format!("a{i}.csv"))).collect();
    let b: Vec<PathBuf> = (0..3).map(|i| dir.path().join(format!("b{i}.csv"))).collect();
    for (i, p) in a.iter().enumerate() {
        std::fs::write(p, format!("label,value\n1,{}\n2,5\n", i + 2)).unwrap();
    }
    for (i, p) in b.iter().enumerate() {
        std::fs::write(p, format!("label,value\n1,{}\n2,5\n3,1\n", i)).unwrap();
    }
    let join = |v: &[PathBuf]| v.iter().map(|p| s(p).to_owned()).collect::<Vec<_>>().join(",");
    let d = dir.path().join("d.csv");
    let out = ok(&["roi-table", "--group-a", &join(&a), "--group-b", &join(&b), "--out", s(&d)]);
    assert_eq!(out["n_rois"], 2);
    let text = std::fs::read_to_string(&d).unwrap();
    // {2,3,4} vs {0,1,2}: difference 2, pooled sd 1
    assert!(text.contains("1,3.000000000,1.000000000,2.000000000"), "{text}");
    assert!(text.contains("2,5.000000000,5.000000000,nan"), "{text}");
}

#[test]
fn prep_dl_exports_91_samples_per_subject() {
    let dir = tempfile::tempdir().unwrap();
    let ph = dir.path().join("ph");
    ok(&["phantom", "--spec", s(&resting_spec(dir.path(), &[-2.0, 0.0, 3.0], Some(133))), "--out", s(&ph)]);
    let phc = dir.path().join("phc");
    ok(&["phantom", "--spec", s(&hc_spec(dir.path())), "--out", s(&phc)]);
    let g = dir.path().join("g");
    run_grrs(&ph, &g, &["--atlas", s(&ph.join("atlas.nii")), "--subject-id", "s1"]);
    let h = dir.path().join("h");
    ok(&[
        "hc",
        "--bold", s(&phc.join("bold.nii")),
        "--co2", s(&phc.join("co2.csv")),
        "--cerebellum-mask", s(&phc.join("cerebellum_mask.nii")),
        "--brain-mask", s(&phc.join("brain_mask.nii")),
        "--out", s(&h),
    ]);
    let subjects = dir.path().join("subjects.csv");
    std::fs::write(&subjects, "subject_id,grrs_manifest,hc_manifest\ns1,g/manifest.json,h/manifest.json\n").unwrap();
    let out_dir = dir.path().join("dl");
    let summary = ok(&["prep-dl", "--subjects", s(&subjects), "--out", s(&out_dir), "--seed", "3"]);
    assert_eq!(summary["samples"], 91);
    assert_eq!(summary["folds"], 1);

    let index = DlIndex::read(&out_dir.join("index.json")).unwrap();
    assert_eq!(index.grid, [96, 112, 91]);
    assert_eq!(index.samples.len(), 91);
    assert_eq!(index.primary_channels.len(), 3);
    assert_eq!(index.supplementary_channels, 133);
    assert!(index.samples.iter().all(|x| x.subject_id == "s1" && x.fold == 0));
    assert_eq!(index.samples.iter().map(|x| x.slice).collect::<Vec<_>>(), (0..91).collect::<Vec<_>>());
    assert_eq!(index.samples.iter().filter(|x| x.brain_voxels > 0).count(), 6);

    let primary = load_volume4d(out_dir.join(&index.samples[0].primary)).unwrap();
    assert_eq!((primary.dims(), primary.nt()), ([96, 112, 91], 3));
    assert!(primary.data().iter().all(|v| v.abs() <= 5.0));
    let labels = load_volume4d(out_dir.join(&index.samples[0].labels)).unwrap();
    assert_eq!(labels.nt(), 2);
    let supp = std::fs::metadata(out_dir.join(&index.samples[0].supplementary)).unwrap().len();
    assert_eq!(supp, 352 + 4 * 96 * 112 * 91 * 133);
}

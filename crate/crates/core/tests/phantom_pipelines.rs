use hemomap::metrics::spatial_spearman;
use hemomap::phantom::{synth_bold, DriverSpec, FieldSpec, PhantomSpec};
use hemomap::pipeline::{grrs_pipeline, hc_pipeline, GrrsConfig, HcConfig, RS_BAND_HI_HZ};
use hemomap::volume::Mask;

const GAINS: [f64; 8] = [0.005, 0.01, 0.015, 0.02, 0.025, 0.03, 0.035, 0.04];

fn resting(bat: Vec<f64>, cvr: FieldSpec, sigma: f64, seed: u64) -> PhantomSpec {
    PhantomSpec {
        dims: [16, 16, 8],
        spacing: [2.0; 3],
        tr: 2.0,
        nt: 150,
        driver: DriverSpec::RestingLike { f_hi_hz: RS_BAND_HI_HZ },
        cvr,
        bat: FieldSpec::Blocks { axis: 0, values: bat },
        noise_sigma: sigma,
        seed,
        cerebellum_slices: 1,
        atlas_labels: None,
    }
}

fn unsmoothed() -> GrrsConfig {
    GrrsConfig { fwhm_mm: None, ..Default::default() }
}

fn outside_cerebellum(spec: &PhantomSpec) -> Mask {
    Mask::from_fn(spec.dims, |_, _, z| z >= spec.cerebellum_slices).unwrap()
}

#[test]
fn grrs_noise_free_recovers_delays_exactly() {
    for seed in 0..3 {
        let spec = resting(vec![-2.0, 0.0, 3.0], FieldSpec::Constant { value: 0.02 }, 0.0, seed);
        let (vol, truth) = synth_bold(&spec, None).unwrap();
        let out = grrs_pipeline(&vol, &truth.cerebellum, &truth.brain, None, &unsmoothed()).unwrap();
        assert_eq!(out.raw.shift_s.data(), truth.bat.data(), "seed {seed}");
        assert_eq!(out.defects.count(), 0);
    }
}

#[test]
fn grrs_noise_free_cvr_rank_order_is_exact() {
    let spec = resting(vec![0.0], FieldSpec::Blocks { axis: 1, values: GAINS.to_vec() }, 0.0, 3);
    let (vol, truth) = synth_bold(&spec, None).unwrap();
    let out = grrs_pipeline(&vol, &truth.cerebellum, &truth.brain, None, &unsmoothed()).unwrap();
    let rho = spatial_spearman(&out.raw.ratio, &truth.cvr, &truth.brain).unwrap();
    assert_eq!(rho, 1.0);
}

#[test]
fn grrs_smoothed_interior_blocks_keep_their_delay() {
    // 8 mm FWHM on 8 mm voxels mixes only nearest neighbours across block edges.
    let mut spec = resting(vec![-2.0, 0.0, 3.0], FieldSpec::Constant { value: 0.02 }, 0.0, 5);
    spec.dims = [18, 6, 6];
    spec.spacing = [8.0; 3];
    let (vol, truth) = synth_bold(&spec, None).unwrap();
    let out = grrs_pipeline(&vol, &truth.cerebellum, &truth.brain, None, &GrrsConfig::default()).unwrap();
    let interior = Mask::from_fn(spec.dims, |x, _, z| z >= 3 && [1, 2, 3, 8, 9, 14, 15, 16].contains(&x)).unwrap();
    for v in interior.indices() {
        assert!(
            (out.raw.shift_s.data()[v] - truth.bat.data()[v]).abs() <= 0.1 + 1e-9,
            "voxel {v}: {} vs {}",
            out.raw.shift_s.data()[v],
            truth.bat.data()[v]
        );
    }
}

#[test]
fn grrs_noisy_cvr_rank_order() {
    for seed in 0..5 {
        let spec = resting(vec![0.0], FieldSpec::Blocks { axis: 1, values: GAINS.to_vec() }, 0.5, seed);
        let (vol, truth) = synth_bold(&spec, None).unwrap();
        let out = grrs_pipeline(&vol, &truth.cerebellum, &truth.brain, None, &unsmoothed()).unwrap();
        let rho = spatial_spearman(&out.raw.ratio, &truth.cvr, &outside_cerebellum(&spec)).unwrap();
        assert!(rho >= 0.95, "seed {seed}: rho = {rho}");
    }
}

#[test]
fn delay_error_grows_with_noise() {
    let mut rms = Vec::new();
    for sigma in [0.0, 0.5, 2.0] {
        let mut total = 0.0;
        for seed in 0..5 {
            let spec = resting(vec![-2.0, 0.0, 3.0], FieldSpec::Constant { value: 0.01 }, sigma, seed);
            let (vol, truth) = synth_bold(&spec, None).unwrap();
            let out = grrs_pipeline(&vol, &truth.cerebellum, &truth.brain, None, &unsmoothed()).unwrap();
            let mask = outside_cerebellum(&spec);
            let se: f64 = mask
                .indices()
                .iter()
                .map(|&v| (out.raw.shift_s.data()[v] - truth.bat.data()[v]).powi(2))
                .sum();
            total += (se / mask.count() as f64).sqrt();
        }
        rms.push(total / 5.0);
    }
    assert_eq!(rms[0], 0.0);
    assert!(rms[0] <= rms[1] && rms[1] <= rms[2], "{rms:?}");
    assert!(rms[2] > 0.0);
}

fn hc_spec(cvr: FieldSpec, bat: Vec<f64>) -> PhantomSpec {
    PhantomSpec {
        dims: [12, 8, 4],
        spacing: [2.0; 3],
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
        cvr,
        bat: FieldSpec::Blocks { axis: 0, values: bat },
        noise_sigma: 0.0,
        seed: 0,
        cerebellum_slices: 1,
        atlas_labels: None,
    }
}

#[test]
fn hc_block_phantom_recovers_delay_gain_and_baseline() {
    let gains = vec![0.002, 0.004, 0.006, 0.008];
    let spec = hc_spec(FieldSpec::Blocks { axis: 1, values: gains }, vec![0.0, 2.0, 4.5, 7.3]);
    let (vol, truth) = synth_bold(&spec, None).unwrap();
    let cfg = HcConfig { fwhm_mm: None, ..Default::default() };
    let out = hc_pipeline(&vol, truth.co2_trace.as_ref().unwrap(), &truth.cerebellum, &truth.brain, &cfg).unwrap();
    assert_eq!(out.etco2_shift_s, 10.0);
    assert!((out.b_etco2 - 40.0).abs() < 1e-9);
    assert!(out.alignment_cc > 0.999);
    for v in truth.brain.indices() {
        assert!((out.raw.shift_s.data()[v] - truth.bat.data()[v]).abs() <= 0.1 + 1e-9);
    }
    // zero-delay voxels: CVR relative to baseline equals the true gain
    for v in truth.cerebellum.indices() {
        assert!((out.raw.cvr.data()[v] - truth.cvr.data()[v]).abs() < 1e-3 * truth.cvr.data()[v]);
    }
    let rho = spatial_spearman(&out.raw.cvr, &truth.cvr, &truth.cerebellum).unwrap();
    assert_eq!(rho, 1.0);
}

//! End-to-end behavior of the two-stage labeling on synthetic scenes.

use meshlabel::camera::LikelihoodRaster;
use meshlabel::config::PipelineConfig;
use meshlabel::par::Exec;
use meshlabel::pipeline::{build_prior, coarse_label, full_label, full_model, Scene};
use meshlabel::solver::solve;
use meshlabel::synth::{generate, SceneKind, SceneSpec, SyntheticScene};

fn synth(p_flip: f64, tau: f64, seed: u64) -> SyntheticScene {
    generate(&SceneSpec {
        resolution: 8,
        views: 6,
        width: 96,
        height: 72,
        p_flip,
        tau,
        seed,
        ..SceneSpec::new(SceneKind::BoxOnPlane)
    })
    .unwrap()
}

fn scene(s: &SyntheticScene) -> Scene {
    Scene::new(s.mesh.clone(), s.views(), s.class_set(), Exec::Parallel).unwrap()
}

fn agreement(a: &[u8], b: &[u8]) -> f64 {
    a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64
}

#[test]
fn noise_free_coarse_matches_ground_truth() {
    let s = synth(0.0, 0.0, 1);
    let sc = scene(&s);
    let coarse = coarse_label(&sc, &PipelineConfig::default(), Exec::Parallel).unwrap();
    assert!(agreement(&coarse.labels, &s.gt_labels) >= 0.99);
}

#[test]
fn uniform_likelihoods_give_a_constant_labeling() {
    let s = synth(0.0, 0.0, 1);
    let mut views = s.views();
    for v in &mut views {
        let (w, h, k) = (
            v.likelihoods.width(),
            v.likelihoods.height(),
            v.likelihoods.classes(),
        );
        v.likelihoods = LikelihoodRaster::new(w, h, k, vec![1.0 / k as f64; w * h * k]).unwrap();
    }
    let sc = Scene::new(s.mesh.clone(), views, s.class_set(), Exec::Parallel).unwrap();
    let coarse = coarse_label(&sc, &PipelineConfig::default(), Exec::Parallel).unwrap();
    assert!(coarse.labels.iter().all(|&l| l == coarse.labels[0]));
}

#[test]
fn coarse_beats_argmin_under_noise() {
    for seed in 0..3 {
        let s = synth(0.2, 0.2, seed);
        let sc = scene(&s);
        let cfg = PipelineConfig::default();
        let argmin = sc.data_unary(&cfg, Exec::Parallel).unwrap().argmin();
        let coarse = coarse_label(&sc, &cfg, Exec::Parallel).unwrap();
        assert!(agreement(&coarse.labels, &s.gt_labels) > agreement(&argmin, &s.gt_labels));
    }
}

#[test]
fn without_prior_or_discontinuity_the_fine_stage_keeps_the_coarse_labels() {
    let s = synth(0.2, 0.2, 5);
    let sc = scene(&s);
    let cfg = PipelineConfig {
        mu2: 0.0,
        ..PipelineConfig::default()
    };
    let coarse = coarse_label(&sc, &cfg, Exec::Parallel).unwrap();
    // mu1 > 0 runs both stages; a zero-weight prior is the limit case
    let both = full_label(
        &sc,
        &PipelineConfig {
            mu1: 1e-300,
            ..cfg.clone()
        },
        Exec::Parallel,
    )
    .unwrap();
    assert_eq!(both.coarse.as_deref(), Some(coarse.labels.as_slice()));
    assert_eq!(both.labels, coarse.labels);
    let base = full_label(&sc, &PipelineConfig { mu1: 0.0, ..cfg }, Exec::Parallel).unwrap();
    assert_eq!(base.labels, coarse.labels);
}

#[test]
fn baseline_is_a_single_solve_without_the_prior() {
    let s = synth(0.2, 0.2, 6);
    let sc = scene(&s);
    let cfg = PipelineConfig {
        mu1: 0.0,
        ..PipelineConfig::default()
    };
    let out = full_label(&sc, &cfg, Exec::Parallel).unwrap();
    assert_eq!(out.report.mode, "baseline");
    assert!(out.coarse.is_none());
    let data = sc.data_unary(&cfg, Exec::Parallel).unwrap();
    let model = full_model(&sc, &data, None, &cfg).unwrap();
    let single = solve(&model, &model.unary_argmin()).unwrap();
    assert_eq!(out.labels, single.labels);
    assert_eq!(out.report.fine.final_energy, single.energy);
}

#[test]
fn report_energies_reproduce() {
    let s = synth(0.2, 0.2, 7);
    let sc = scene(&s);
    let cfg = PipelineConfig::default();
    let out = full_label(&sc, &cfg, Exec::Parallel).unwrap();
    let data = sc.data_unary(&cfg, Exec::Parallel).unwrap();
    let coarse = out.coarse.as_ref().unwrap();
    let prior = build_prior(&sc, coarse, &cfg)
        .unwrap()
        .fill_unary(&sc.mesh, Exec::Parallel);
    let model = full_model(&sc, &data, Some(&prior), &cfg).unwrap();
    let fine = &out.report.fine;
    let e = model.total_energy(&out.labels).unwrap();
    assert!((e - fine.final_energy).abs() <= 1e-6 * e.abs().max(1.0));
    assert!((fine.unary_energy + fine.pairwise_energy - e).abs() <= 1e-6 * e.abs().max(1.0));
    assert!(fine.final_energy <= fine.initial_energy);
    let e0 = model.total_energy(coarse).unwrap();
    assert!((e0 - fine.initial_energy).abs() <= 1e-6 * e0.abs().max(1.0));
    let changed = coarse
        .iter()
        .zip(&out.labels)
        .filter(|(a, b)| a != b)
        .count();
    assert_eq!(out.report.changed_between_stages, Some(changed));
    assert_eq!(
        out.report.class_counts.iter().sum::<usize>(),
        out.labels.len()
    );
}

#[test]
fn prior_repairs_the_toy_scene() {
    let s = generate(&SceneSpec::new(SceneKind::Fig2Toy)).unwrap();
    let sc = scene(&s);
    let cfg = PipelineConfig::default();
    let full = full_label(&sc, &cfg, Exec::Parallel).unwrap();
    let base = full_label(&sc, &PipelineConfig { mu1: 0.0, ..cfg }, Exec::Parallel).unwrap();
    let (f, b) = (
        agreement(&full.labels, &s.gt_labels),
        agreement(&base.labels, &s.gt_labels),
    );
    assert!(f >= 0.95 && f > b, "full {f} baseline {b}");
}

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use serde_json::json;

use meshlabel::camera::{
    load_cameras, load_ground_truth, load_views, render_labels, Camera, LabelImage,
};
use meshlabel::config::{PipelineConfig, PriorMode};
use meshlabel::eval::{ConfusionMatrix, MetricReport};
use meshlabel::mesh::{load_mesh, write_labeled_ply, ClassSet, Mesh};
use meshlabel::par::{with_workers, Exec};
use meshlabel::pipeline::{full_label, full_model, Labeling, Scene};
use meshlabel::synth::{generate as generate_scene, parse_facet_labels, SceneKind, SceneSpec};

use crate::{EvalArgs, GenerateArgs, Internal, LabelArgs, SweepArgs};

const PALETTE: [[u8; 3]; 8] = [
    [200, 60, 50],
    [50, 90, 200],
    [60, 170, 70],
    [230, 180, 40],
    [150, 70, 180],
    [40, 180, 190],
    [240, 120, 170],
    [120, 120, 120],
];

fn palette(classes: usize) -> Vec<[u8; 3]> {
    (0..classes).map(|k| PALETTE[k % PALETTE.len()]).collect()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).context("serializing json")?;
    write_text(path, &(text + "\n"))
}

fn require(path: &Path, what: &str) -> Result<()> {
    ensure!(path.exists(), "{what} not found: {}", path.display());
    Ok(())
}

fn open_mesh(path: &Path) -> Result<(Mesh, Option<Vec<u8>>)> {
    require(path, "mesh")?;
    let (mesh, report) =
        load_mesh(path).with_context(|| format!("cannot load mesh {}", path.display()))?;
    if report.dropped_degenerate > 0 {
        eprintln!(
            "note: {} dropped {} degenerate faces",
            path.display(),
            report.dropped_degenerate
        );
    }
    ensure!(
        !mesh.is_empty(),
        "mesh {} has no usable facets",
        path.display()
    );
    Ok((mesh, report.face_labels))
}

fn open_cameras(path: &Path) -> Result<Vec<Camera>> {
    require(path, "camera file")?;
    load_cameras(path).with_context(|| format!("cannot load cameras {}", path.display()))
}

fn class_set(cfg: &PipelineConfig) -> Result<ClassSet> {
    Ok(ClassSet::new(cfg.classes.clone())?)
}

fn config_json(cfg: &PipelineConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config serializes")
}

pub fn generate(a: GenerateArgs) -> Result<()> {
    let kind: SceneKind = a.scene.parse().map_err(anyhow::Error::msg)?;
    let mut spec = SceneSpec::new(kind);
    if let Some(v) = a.classes {
        spec.classes = v;
    }
    if let Some(v) = a.resolution {
        spec.resolution = v;
    }
    if let Some(v) = a.views {
        spec.views = v;
    }
    if let Some(v) = a.width {
        spec.width = v;
    }
    if let Some(v) = a.height {
        spec.height = v;
    }
    if let Some(v) = a.p_flip {
        spec.p_flip = v;
    }
    if let Some(v) = a.tau {
        spec.tau = v;
    }
    if let Some(v) = a.seed {
        spec.seed = v;
    }
    if let Some(v) = a.patch_fraction {
        spec.patch_fraction = v;
    }
    if let Some(v) = a.patch_confidence {
        spec.patch_confidence = v;
    }
    let scene = generate_scene(&spec)?;
    let manifest = scene.write(&a.out)?;
    let cfg = PipelineConfig {
        classes: spec.class_names(),
        seed: spec.seed,
        ..PipelineConfig::default()
    };
    write_text(&a.out.join("pipeline.cfg"), &cfg.to_config_string())?;
    println!(
        "{kind}: {} facets, {} views, flip rate {:.4} -> {}",
        manifest.facets,
        spec.views,
        scene.noise.flip_rate(),
        a.out.display()
    );
    Ok(())
}

fn load_scene(
    mesh: &Path,
    cameras: &Path,
    likelihoods: &Path,
    cfg: &PipelineConfig,
    exec: Exec,
) -> Result<Scene> {
    let (mesh, _) = open_mesh(mesh)?;
    let cams = open_cameras(cameras)?;
    require(likelihoods, "likelihood directory")?;
    let classes = class_set(cfg)?;
    let views = load_views(cams, likelihoods, classes.count())
        .with_context(|| format!("cannot load likelihoods from {}", likelihoods.display()))?;
    Ok(Scene::new(mesh, views, classes, exec)?)
}

/// Recomputes the final energy from scratch and checks it against the solver.
fn check_labeling(scene: &Scene, cfg: &PipelineConfig, exec: Exec, out: &Labeling) -> Result<()> {
    let fine = &out.report.fine;
    if fine.final_energy > fine.initial_energy + 1e-9 * fine.initial_energy.abs().max(1.0) {
        bail!(Internal(format!(
            "final energy {} exceeds initial energy {}",
            fine.final_energy, fine.initial_energy
        )));
    }
    let data = scene.data_unary(cfg, exec)?;
    let prior = match &out.coarse {
        Some(c) if !cfg.is_baseline() => {
            let grid = meshlabel::pipeline::build_prior(scene, c, cfg)?;
            Some(grid.fill_unary(&scene.mesh, exec))
        }
        _ => None,
    };
    let model = full_model(scene, &data, prior.as_ref(), cfg)?;
    let e = model.total_energy(&out.labels)?;
    if (e - fine.final_energy).abs() > 1e-6 * e.abs().max(1.0) {
        bail!(Internal(format!(
            "reported energy {} does not reproduce ({e})",
            fine.final_energy
        )));
    }
    Ok(())
}

pub fn label(a: LabelArgs) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    let exec = Exec::from_jobs(cfg.jobs);
    with_workers(cfg.jobs, || -> Result<()> {
        let scene = load_scene(&a.mesh, &a.cameras, &a.likelihoods, &cfg, exec)?;
        let out = full_label(&scene, &cfg, exec)?;
        check_labeling(&scene, &cfg, exec, &out)?;
        write_label_outputs(&a, &cfg, &scene, &out)
    })
}

fn write_label_outputs(
    a: &LabelArgs,
    cfg: &PipelineConfig,
    scene: &Scene,
    out: &Labeling,
) -> Result<()> {
    let dir = &a.out;
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let classes = scene.classes.count();

    let mut w = create(&dir.join("labeled.ply"))?;
    write_labeled_ply(&mut w, &scene.mesh, &out.labels, Some(&palette(classes)))?;
    w.flush()?;
    write_text(
        &dir.join("labels.txt"),
        &meshlabel::synth::format_facet_labels(&out.labels),
    )?;
    if let Some(c) = &out.coarse {
        write_text(
            &dir.join("coarse_labels.txt"),
            &meshlabel::synth::format_facet_labels(c),
        )?;
    }
    let mut w = create(&dir.join("trace.txt"))?;
    out.fine_solution.write_trace(&mut w)?;
    w.flush()?;
    if let Some(sol) = &out.coarse_solution {
        let mut w = create(&dir.join("coarse_trace.txt"))?;
        sol.write_trace(&mut w)?;
        w.flush()?;
    }
    write_json(
        &dir.join("report.json"),
        &serde_json::to_value(&out.report)?,
    )?;

    let t = &out.timings;
    let ms = |d: std::time::Duration| d.as_secs_f64() * 1e3;
    let timing = format!(
        "rasterize_ms {:.3}\ndata_term_ms {:.3}\ncoarse_solve_ms {:.3}\nhistogram_build_ms {:.3}\nprior_fill_ms {:.3}\nfine_solve_ms {:.3}\ntotal_ms {:.3}\n",
        ms(t.rasterize),
        ms(t.data_term),
        ms(t.coarse_solve),
        ms(t.histogram_build),
        ms(t.prior_fill),
        ms(t.fine_solve),
        ms(t.total()),
    );
    write_text(&dir.join("timing.txt"), &timing)?;
    write_text(&dir.join("config.txt"), &cfg.to_config_string())?;
    write_json(
        &dir.join("run.json"),
        &json!({
            "command": "label",
            "mesh": a.mesh,
            "cameras": a.cameras,
            "likelihoods": a.likelihoods,
            "config_file": a.cfg.config,
            "out": a.out,
            "config": config_json(cfg),
        }),
    )?;

    let r = &out.report;
    println!(
        "{}: {} facets, final energy {:.6} ({} cycles)",
        r.mode, r.facets, r.fine.final_energy, r.fine.cycles
    );
    if let Some(c) = &r.coarse {
        println!(
            "coarse energy {:.6}, {} facets changed between stages",
            c.final_energy,
            r.changed_between_stages.unwrap_or(0)
        );
    }
    if r.grid.is_some() {
        println!("histogram build {:.3} ms", ms(t.histogram_build));
    }
    println!("wrote {}", dir.display());
    Ok(())
}

/// Renders `labels` into every view and accumulates the confusion matrix.
fn score(
    mesh: &Mesh,
    labels: &[u8],
    cams: &[Camera],
    gts: &[LabelImage],
    classes: usize,
    exec: Exec,
) -> Result<ConfusionMatrix> {
    ensure!(
        labels.len() == mesh.facet_count(),
        "{} labels for {} facets",
        labels.len(),
        mesh.facet_count()
    );
    if let Some(&l) = labels.iter().find(|&&l| l as usize >= classes) {
        bail!("label {l} is outside the {classes} configured classes");
    }
    let per_view = exec.map(cams, |c| render_labels(mesh, labels, c));
    let mut cm = ConfusionMatrix::new(classes);
    for ((pred, gt), cam) in per_view.iter().zip(gts).zip(cams) {
        cm.accumulate(pred, gt)
            .with_context(|| format!("view {}", cam.id))?;
    }
    Ok(cm)
}

fn open_ground_truth(dir: &Path, cams: &[Camera]) -> Result<Vec<LabelImage>> {
    require(dir, "ground-truth directory")?;
    let present = fs::read_dir(dir)
        .with_context(|| format!("cannot list {}", dir.display()))?
        .filter_map(|e| e.ok())
        .filter(|e| {
            let n = e.file_name();
            let n = n.to_string_lossy();
            n.starts_with("view") && n.ends_with(".pgm")
        })
        .count();
    ensure!(
        present == cams.len(),
        "{} ground-truth images in {} for {} views",
        present,
        dir.display(),
        cams.len()
    );
    load_ground_truth(cams, dir)
        .with_context(|| format!("cannot load ground truth from {}", dir.display()))
}

fn row_name(path: &Path) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    match path.parent().and_then(|p| p.file_name()) {
        Some(parent) if stem == "labeled" => parent.to_string_lossy().into_owned(),
        _ => stem,
    }
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    let exec = Exec::from_jobs(cfg.jobs);
    let classes = class_set(&cfg)?.count();
    if a.labels.is_some() {
        ensure!(a.mesh.len() == 1, "--labels needs exactly one --mesh");
    }
    with_workers(cfg.jobs, || -> Result<()> {
        let cams = open_cameras(&a.cameras)?;
        let gts = open_ground_truth(&a.gt, &cams)?;
        let mut rows: Vec<(String, MetricReport)> = Vec::new();
        for path in &a.mesh {
            let (mesh, ply_labels) = open_mesh(path)?;
            let labels = match &a.labels {
                Some(p) => {
                    require(p, "label file")?;
                    let text = fs::read_to_string(p)
                        .with_context(|| format!("cannot read {}", p.display()))?;
                    parse_facet_labels(&text)
                        .map_err(anyhow::Error::msg)
                        .with_context(|| format!("in {}", p.display()))?
                }
                None => ply_labels.with_context(|| {
                    format!("{} has no per-face `label` property", path.display())
                })?,
            };
            let cm = score(&mesh, &labels, &cams, &gts, classes, exec)?;
            let m = cm
                .metrics()
                .with_context(|| format!("evaluating {}", path.display()))?;
            rows.push((row_name(path), m));
        }
        let refs: Vec<(&str, &MetricReport)> = rows.iter().map(|(n, m)| (n.as_str(), m)).collect();
        print!("{}", MetricReport::table(&refs));
        if let Some(dir) = &a.out {
            fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
            write_text(&dir.join("metrics.csv"), &MetricReport::csv(&refs))?;
            write_text(&dir.join("metrics.txt"), &MetricReport::table(&refs))?;
            let per: Vec<_> = rows
                .iter()
                .map(|(n, m)| json!({ "name": n, "metrics": m }))
                .collect();
            write_json(&dir.join("metrics.json"), &json!(per))?;
            write_json(
                &dir.join("run.json"),
                &json!({
                    "command": "eval",
                    "mesh": a.mesh,
                    "labels": a.labels,
                    "cameras": a.cameras,
                    "gt": a.gt,
                    "config_file": a.cfg.config,
                    "out": dir,
                    "config": config_json(&cfg),
                }),
            )?;
        }
        Ok(())
    })
}

/// Config key and display name of a sweepable parameter.
fn sweep_key(param: &str) -> Result<&'static str> {
    Ok(match param {
        "cell_size" => "cell_size",
        "mu1" => "mu1",
        "mu2" => "mu2",
        "mu3" => "mu3",
        "B_a" | "bins_azim" => "bins_azim",
        "B_i" | "bins_incl" => "bins_incl",
        other => bail!("unknown sweep parameter `{other}` (cell_size, mu1, mu2, mu3, B_a, B_i)"),
    })
}

struct SweepPoint {
    value: String,
    cfg: PipelineConfig,
}

pub fn sweep(a: SweepArgs) -> Result<()> {
    let base = a.cfg.resolve()?;
    let key = sweep_key(&a.param)?;
    let mut points = Vec::new();
    for v in &a.values {
        let mut cfg = base.clone();
        cfg.set(key, v)?;
        points.push(SweepPoint {
            value: v.trim().to_string(),
            cfg,
        });
    }
    if a.with_global {
        points.push(SweepPoint {
            value: "global".into(),
            cfg: PipelineConfig {
                prior: PriorMode::Global,
                ..base.clone()
            },
        });
    }
    let exec = Exec::from_jobs(base.jobs);
    with_workers(base.jobs, || -> Result<()> {
        let scene = load_scene(&a.mesh, &a.cameras, &a.likelihoods, &base, exec)?;
        let cams: Vec<Camera> = scene.views.iter().map(|v| v.camera.clone()).collect();
        let gts = open_ground_truth(&a.gt, &cams)?;
        let classes = scene.classes.count();
        let results = exec.map(&points, |p| -> Result<String> {
            let out = full_label(&scene, &p.cfg, exec)?;
            check_labeling(&scene, &p.cfg, exec, &out)?;
            let m = score(&scene.mesh, &out.labels, &cams, &gts, classes, exec)?.metrics()?;
            let r = &out.report;
            Ok(format!(
                "{},{},{},{},{},{},{},{},{},{}",
                a.param,
                p.value,
                m.iou,
                m.average_accuracy,
                m.overall_accuracy,
                r.coarse
                    .as_ref()
                    .map(|c| c.final_energy.to_string())
                    .unwrap_or_default(),
                r.fine.final_energy,
                r.fine.unary_energy,
                r.fine.pairwise_energy,
                r.changed_between_stages
                    .map(|c| c.to_string())
                    .unwrap_or_default(),
            ))
        });
        let mut csv = String::from(
            "param,value,iou,avg_accuracy,overall_accuracy,coarse_energy,final_energy,unary_energy,pairwise_energy,changed\n",
        );
        for row in results {
            csv.push_str(&row?);
            csv.push('\n');
        }
        fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
        write_text(&a.out.join("sweep.csv"), &csv)?;
        write_text(&a.out.join("config.txt"), &base.to_config_string())?;
        write_json(
            &a.out.join("run.json"),
            &json!({
                "command": "sweep",
                "mesh": a.mesh,
                "cameras": a.cameras,
                "likelihoods": a.likelihoods,
                "gt": a.gt,
                "param": a.param,
                "values": a.values,
                "with_global": a.with_global,
                "config_file": a.cfg.config,
                "out": a.out,
                "config": config_json(&base),
            }),
        )?;
        print!("{csv}");
        Ok(())
    })
}

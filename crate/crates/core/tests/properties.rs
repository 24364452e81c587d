//! Invariants checked over generated inputs.

mod common;

use std::f64::consts::PI;
use std::io::Cursor;

use meshlabel::camera::{rasterize, BACKGROUND};
use meshlabel::config::{PipelineConfig, PriorMode};
use meshlabel::energy::{data_term, DataNorm, DATA_EPS};
use meshlabel::eval::ConfusionMatrix;
use meshlabel::mesh::{read_ply, write_ply, Mesh};
use meshlabel::par::Exec;
use meshlabel::prior::{GridParams, HistogramGrid, SphericalDirection, HIST_EPS};
use meshlabel::solver::{expand, solve};
use meshlabel::synth::{generate, icosphere, look_at_camera, SceneKind, SceneSpec};
use nalgebra::{Point3, Vector3};
use proptest::prelude::*;
use rand::Rng;

fn point() -> impl Strategy<Value = Point3<f64>> {
    (-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64).prop_map(|(x, y, z)| Point3::new(x, y, z))
}

fn unit_vector() -> impl Strategy<Value = Vector3<f64>> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_filter("non-zero", |(x, y, z)| x * x + y * y + z * z > 1e-4)
        .prop_map(|(x, y, z)| Vector3::new(x, y, z).normalize())
}

fn soup() -> impl Strategy<Value = (Vec<Point3<f64>>, Vec<[u32; 3]>)> {
    prop::collection::vec(point(), 3..12).prop_flat_map(|verts| {
        let n = verts.len() as u32;
        let faces = prop::collection::vec([0..n, 0..n, 0..n], 1..20);
        (Just(verts), faces)
    })
}

proptest! {
    #[test]
    fn reversed_winding_negates_normal((verts, faces) in soup()) {
        let (a, ra) = Mesh::from_triangles(verts.clone(), &faces).unwrap();
        let flipped: Vec<[u32; 3]> = faces.iter().map(|f| [f[0], f[2], f[1]]).collect();
        let (b, rb) = Mesh::from_triangles(verts, &flipped).unwrap();
        prop_assert_eq!(ra.source_face, rb.source_face);
        prop_assert_eq!(a.adjacency(), b.adjacency());
        for (na, nb) in a.normals().iter().zip(b.normals()) {
            prop_assert!((na + nb).norm() < 1e-12);
            prop_assert!((na.norm() - 1.0).abs() < 1e-12);
        }
        for (x, y) in a.areas().iter().zip(b.areas()) {
            prop_assert!((x - y).abs() <= 1e-12 * x.max(1.0));
        }
    }

    #[test]
    fn adjacency_matches_pair_scan((verts, faces) in soup()) {
        let (mesh, _) = Mesh::from_triangles(verts, &faces).unwrap();
        let brute = common::brute_adjacency(mesh.facets());
        prop_assert_eq!(mesh.adjacency(), brute.as_slice());
    }

    #[test]
    fn ply_round_trip((verts, faces) in soup()) {
        let mut buf = Vec::new();
        write_ply(&mut buf, &verts, &faces).unwrap();
        let back = read_ply(Cursor::new(buf)).unwrap();
        prop_assert_eq!(back.vertices, verts);
        prop_assert_eq!(back.faces, faces);
        prop_assert!(back.face_labels.is_none());
    }

    #[test]
    fn spherical_round_trip(n in unit_vector(), ba in 1usize..64, bi in 1usize..32) {
        let d = SphericalDirection::from_unit(&n);
        prop_assert!((-PI..PI).contains(&d.azimuth));
        prop_assert!((0.0..=PI).contains(&d.inclination));
        prop_assert!((d.to_unit() - n).norm() < 1e-12);
        prop_assert!(d.azimuth_bin(ba) < ba);
        prop_assert!(d.inclination_bin(bi) < bi);
    }

    #[test]
    fn config_round_trip(
        mu in (0.0..10.0f64, 0.0..10.0f64, 0.0..10.0f64),
        coarse in prop::option::of(0.0..5.0f64),
        cell_size in 0.01..100.0f64,
        bins in (1usize..64, 1usize..32),
        raw in any::<bool>(),
        global in any::<bool>(),
        area_weighted in any::<bool>(),
        seed in any::<u64>(),
        jobs in 0usize..16,
    ) {
        let cfg = PipelineConfig {
            mu1: mu.0,
            mu2: mu.1,
            mu3: mu.2,
            coarse_smoothing: coarse,
            cell_size,
            bins_azim: bins.0,
            bins_incl: bins.1,
            data_norm: if raw { DataNorm::Raw } else { DataNorm::Normalized },
            area_weighted,
            prior: if global { PriorMode::Global } else { PriorMode::Local },
            classes: vec!["ground".into(), "wall".into(), "roof".into()],
            seed,
            jobs,
        };
        prop_assert_eq!(PipelineConfig::parse(&cfg.to_config_string()).unwrap(), cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn histograms_are_smoothed_distributions(
        seed in any::<u64>(),
        classes in 2usize..5,
        cell_size in 0.2..3.0f64,
        ba in 1usize..24,
        bi in 1usize..12,
        area_weighted in any::<bool>(),
    ) {
        let (v, f) = icosphere(1);
        let (mesh, _) = Mesh::from_triangles(v, &f).unwrap();
        let mut rng = common::rng(seed);
        let coarse: Vec<u8> = (0..mesh.facet_count()).map(|_| rng.gen_range(0..classes as u8)).collect();
        let params = GridParams { cell_size, bins_azim: ba, bins_incl: bi, area_weighted };
        let grid = HistogramGrid::build(&mesh, &coarse, classes, params).unwrap();
        for cell in 0..grid.cell_count() {
            for c in 0..classes {
                for h in [grid.azimuth_hist(cell, c), grid.inclination_hist(cell, c)] {
                    let sum: f64 = h.iter().sum();
                    prop_assert!((sum - 1.0).abs() < 1e-12);
                    prop_assert!(h.iter().all(|&p| p >= HIST_EPS - 1e-15));
                }
            }
        }
        let table = grid.fill_unary(&mesh, Exec::Sequential);
        let cap = -2.0 * HIST_EPS.ln();
        prop_assert!(table.values().iter().all(|&e| (0.0..=cap + 1e-12).contains(&e)));
    }

    #[test]
    fn solve_never_raises_energy(
        seed in any::<u64>(),
        facets in 2usize..12,
        classes in 2usize..5,
    ) {
        let mut rng = common::rng(seed);
        let inst = common::Instance::random(&mut rng, facets, classes, None);
        let model = inst.model();
        let init: Vec<u8> = (0..facets).map(|_| rng.gen_range(0..classes as u8)).collect();
        let e0 = model.total_energy(&init).unwrap();
        for alpha in 0..classes as u8 {
            let moved = expand(&model, &init, alpha).unwrap();
            prop_assert!(model.total_energy(&moved).unwrap() <= e0 + 1e-9);
            // labels either stay or become alpha
            prop_assert!(moved.iter().zip(&init).all(|(&m, &i)| m == i || m == alpha));
        }
        let sol = solve(&model, &init).unwrap();
        prop_assert_eq!(sol.initial_energy, e0);
        let mut prev = e0;
        for m in &sol.moves {
            prop_assert_eq!(m.before, prev);
            prop_assert!(m.after <= m.before);
            prev = m.after;
        }
        prop_assert!(sol.cycle_energies.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!((model.total_energy(&sol.labels).unwrap() - sol.energy).abs() < 1e-9);
        let brute = common::exhaustive_minimum(&inst.unary, &inst.edges, classes);
        prop_assert!(sol.energy >= brute - 1e-9);
    }

    #[test]
    fn data_term_is_bounded(seed in 0u64..1000, p_flip in 0.0..0.45f64, tau in 0.0..0.9f64) {
        let spec = SceneSpec {
            resolution: 3,
            views: 2,
            width: 48,
            height: 36,
            p_flip,
            tau,
            seed,
            ..SceneSpec::new(SceneKind::BoxOnPlane)
        };
        let s = generate(&spec).unwrap();
        let views = s.views();
        let vis: Vec<_> = s.cameras.iter().map(|c| rasterize(&s.mesh, c)).collect();
        let t = data_term(&s.mesh, &views, &vis, 2, DataNorm::Normalized, Exec::Sequential).unwrap();
        let cap = -DATA_EPS.ln();
        prop_assert!(t.values().iter().all(|&e| (0.0..=cap + 1e-12).contains(&e)));
    }
}

fn confusion() -> impl Strategy<Value = (usize, Vec<Vec<u64>>)> {
    (2usize..6).prop_flat_map(|l| {
        let rows = prop::collection::vec(prop::collection::vec(0u64..200, l + 1), l);
        (Just(l), rows)
    })
}

fn matrix(rows: &[Vec<u64>]) -> ConfusionMatrix {
    let refs: Vec<&[u64]> = rows.iter().map(|r| r.as_slice()).collect();
    ConfusionMatrix::from_rows(&refs)
}

proptest! {
    #[test]
    fn metrics_are_consistent((l, rows) in confusion()) {
        let cm = matrix(&rows);
        prop_assume!(cm.total() > 0);
        let m = cm.metrics().unwrap();
        for c in &m.per_class {
            prop_assert!(c.iou <= c.precision.min(c.recall) + 1e-12);
            for v in [c.precision, c.recall, c.f1, c.iou, c.accuracy] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
        let diag: u64 = (0..l).map(|c| cm.get(c, c)).sum();
        prop_assert!((m.average_accuracy - diag as f64 / cm.total() as f64).abs() < 1e-12);
        for v in [m.overall_accuracy, m.overall_recall, m.overall_precision, m.overall_f_score, m.iou] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn metrics_ignore_class_order((l, rows) in confusion(), shift in 1usize..5) {
        let cm = matrix(&rows);
        prop_assume!(cm.total() > 0);
        // cyclic relabeling of both gt and prediction; the miss column stays last
        let perm: Vec<usize> = (0..l).map(|c| (c + shift) % l).collect();
        let mut permuted = vec![vec![0u64; l + 1]; l];
        for g in 0..l {
            for p in 0..l {
                permuted[perm[g]][perm[p]] = rows[g][p];
            }
            permuted[perm[g]][l] = rows[g][l];
        }
        let a = cm.metrics().unwrap();
        let b = matrix(&permuted).metrics().unwrap();
        let pairs = [
            (a.average_accuracy, b.average_accuracy),
            (a.average_recall, b.average_recall),
            (a.average_precision, b.average_precision),
            (a.average_f_score, b.average_f_score),
            (a.overall_accuracy, b.overall_accuracy),
            (a.overall_recall, b.overall_recall),
            (a.overall_precision, b.overall_precision),
            (a.overall_f_score, b.overall_f_score),
            (a.iou, b.iou),
        ];
        for (x, y) in pairs {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn merge_adds_counts((_, a) in confusion(), seed in any::<u64>()) {
        let l = a.len();
        let mut rng = common::rng(seed);
        let b: Vec<Vec<u64>> = (0..l).map(|_| (0..=l).map(|_| rng.gen_range(0..50)).collect()).collect();
        let mut merged = matrix(&a);
        merged.merge(&matrix(&b));
        for g in 0..l {
            for p in 0..l {
                prop_assert_eq!(merged.get(g, p), a[g][p] + b[g][p]);
            }
            prop_assert_eq!(merged.misses(g), a[g][l] + b[g][l]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn footprints_cover_exactly_the_foreground(az in 0.0..(2.0 * PI), el in 0.1..1.4f64) {
        let (v, f) = icosphere(2);
        let (mesh, _) = Mesh::from_triangles(v, &f).unwrap();
        let cam = look_at_camera(0, 48, 40, 50.0, Point3::origin(), az, el, mesh.vertices());
        let vis = rasterize(&mesh, &cam);
        let sizes = vis.footprint_sizes(mesh.facet_count());
        let foreground = vis.owner.iter().filter(|&&o| o != BACKGROUND).count();
        prop_assert_eq!(sizes.iter().sum::<usize>(), foreground);
        prop_assert_eq!(foreground + vis.background_count(), 48 * 40);
        // a convex closed surface shows at most about half its facets
        let seen = sizes.iter().filter(|&&s| s > 0).count();
        prop_assert!(seen < mesh.facet_count());
    }
}

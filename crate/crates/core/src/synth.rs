//! Deterministic synthetic scenes: axis-aligned quad surfaces tessellated on an
//! integer lattice, look-at cameras, analytic ground truth by ray casting and
//! noisy per-pixel class likelihoods.

use std::collections::HashMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{Matrix3, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::camera::{
    format_cameras, gt_file_name, save_likelihoods, write_pgm8, Camera, CameraError, CameraView,
    LabelImage, LikelihoodRaster, VOID_LABEL,
};
use crate::mesh::{write_ply, ClassSet, Mesh};
use crate::par::Exec;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene spec: {0}")]
    Spec(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Camera(#[from] CameraError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SceneKind {
    /// A unit cube standing on a 4×4 ground plane.
    BoxOnPlane,
    /// Three stacked tiers of shrinking footprint on a ground plane.
    StepPyramid,
    /// Two blocks facing each other across a channel: horizontal tops and
    /// floor, inner walls pointing at each other.
    Fig2Toy,
}

impl FromStr for SceneKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "box-on-plane" => Ok(SceneKind::BoxOnPlane),
            "step-pyramid" => Ok(SceneKind::StepPyramid),
            "fig2-toy" => Ok(SceneKind::Fig2Toy),
            other => Err(format!(
                "unknown scene `{other}` (box-on-plane|step-pyramid|fig2-toy)"
            )),
        }
    }
}

impl std::fmt::Display for SceneKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SceneKind::BoxOnPlane => "box-on-plane",
            SceneKind::StepPyramid => "step-pyramid",
            SceneKind::Fig2Toy => "fig2-toy",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneSpec {
    pub kind: SceneKind,
    /// 2 (ground, wall) or 4 (ground, wall, vegetation, other).
    pub classes: usize,
    /// Quads per scene unit along every edge.
    pub resolution: u32,
    pub views: usize,
    pub width: usize,
    pub height: usize,
    /// Per-pixel probability of moving the likelihood mass to a wrong class.
    pub p_flip: f64,
    /// Softness: `(1 - tau)` one-hot plus `tau` spread uniformly.
    pub tau: f64,
    pub seed: u64,
    /// Area fraction of the first `+x` wall covered by a corrupted patch.
    pub patch_fraction: f64,
    /// Likelihood given to the wrong class inside the patch.
    pub patch_confidence: f64,
    /// Horizontal field of view in degrees.
    pub fov_deg: f64,
    /// Camera elevation above the horizon in degrees.
    pub elevation_deg: f64,
}

impl SceneSpec {
    pub fn new(kind: SceneKind) -> Self {
        SceneSpec {
            kind,
            classes: 2,
            resolution: match kind {
                SceneKind::Fig2Toy => 40,
                _ => 10,
            },
            views: 8,
            width: 160,
            height: 120,
            p_flip: 0.0,
            tau: 0.0,
            seed: 0,
            patch_fraction: if kind == SceneKind::Fig2Toy { 0.1 } else { 0.0 },
            patch_confidence: 0.6,
            fov_deg: 50.0,
            elevation_deg: 45.0,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Spec(m.into()));
        if self.classes != 2 && self.classes != 4 {
            return bad("classes must be 2 or 4");
        }
        if self.resolution == 0 || self.resolution > 1000 {
            return bad("resolution must be in 1..=1000");
        }
        if self.views == 0 || self.width == 0 || self.height == 0 {
            return bad("need at least one non-empty view");
        }
        if !(0.0..0.5).contains(&self.p_flip) {
            return bad("p_flip must be in [0, 0.5)");
        }
        if !(0.0..1.0).contains(&self.tau) {
            return bad("tau must be in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.patch_fraction) {
            return bad("patch_fraction must be in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.patch_confidence) {
            return bad("patch_confidence must be in [0, 1]");
        }
        if !(1.0..179.0).contains(&self.fov_deg) {
            return bad("fov must be in [1, 179) degrees");
        }
        if !(-89.0..=89.0).contains(&self.elevation_deg) {
            return bad("elevation must be in [-89, 89] degrees");
        }
        Ok(())
    }

    pub fn class_names(&self) -> Vec<String> {
        let all = ["ground", "wall", "vegetation", "other"];
        all[..self.classes].iter().map(|s| s.to_string()).collect()
    }
}

/// A lattice rectangle `origin + s·u + t·v`, `s, t ∈ [0, 1]`, facing `u × v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub origin: [i64; 3],
    pub u: [i64; 3],
    pub v: [i64; 3],
}

impl Rect {
    fn steps(a: [i64; 3]) -> i64 {
        a.iter().map(|c| c.abs()).sum()
    }

    fn normal(&self) -> Vector3<f64> {
        let u = Vector3::from(self.u.map(|c| c as f64));
        let v = Vector3::from(self.v.map(|c| c as f64));
        u.cross(&v).normalize()
    }
}

/// Class of a surface with unit normal `n`: horizontal surfaces are class 0;
/// with four classes `±x` walls are 1, `+y` is 2 and `-y` is 3.
pub fn class_of_normal(n: &Vector3<f64>, classes: usize) -> u8 {
    if n.z.abs() > 0.7 {
        0
    } else if classes == 2 || n.x.abs() >= n.y.abs() {
        1
    } else if n.y > 0.0 {
        2
    } else {
        3
    }
}

/// Lattice surfaces of `kind` at `res` lattice steps per unit.
pub fn scene_rects(kind: SceneKind, res: u32) -> Vec<Rect> {
    let r = |x: f64| (x * res as f64).round() as i64;
    let mut rects = Vec::new();
    match kind {
        SceneKind::BoxOnPlane => {
            ring(&mut rects, 0, r(2.0), r(0.5));
            box_sides(&mut rects, r(0.5), 0, r(1.0));
            square(&mut rects, r(1.0), r(0.5));
        }
        SceneKind::StepPyramid => {
            ring(&mut rects, 0, r(2.0), r(1.5));
            box_sides(&mut rects, r(1.5), 0, r(0.5));
            ring(&mut rects, r(0.5), r(1.5), r(1.0));
            box_sides(&mut rects, r(1.0), r(0.5), r(1.0));
            ring(&mut rects, r(1.0), r(1.0), r(0.5));
            box_sides(&mut rects, r(0.5), r(1.0), r(1.5));
            square(&mut rects, r(1.5), r(0.5));
        }
        SceneKind::Fig2Toy => {
            let (a, w, h, d) = (r(0.9), r(1.2), r(0.9), r(0.9));
            let y = [0, d, 0];
            let z = [0, 0, h];
            rects.push(Rect {
                origin: [0, 0, h],
                u: [a, 0, 0],
                v: y,
            });
            rects.push(Rect {
                origin: [a, 0, 0],
                u: y,
                v: z,
            });
            rects.push(Rect {
                origin: [a, 0, 0],
                u: [w, 0, 0],
                v: y,
            });
            rects.push(Rect {
                origin: [a + w, 0, 0],
                u: z,
                v: y,
            });
            rects.push(Rect {
                origin: [a + w, 0, h],
                u: [a, 0, 0],
                v: y,
            });
        }
    }
    rects
}

/// Horizontal square frame at height `z` between half-sizes `inner` and `outer`.
fn ring(rects: &mut Vec<Rect>, z: i64, outer: i64, inner: i64) {
    let (o, i) = (outer, inner);
    rects.push(Rect {
        origin: [-o, -o, z],
        u: [o - i, 0, 0],
        v: [0, 2 * o, 0],
    });
    rects.push(Rect {
        origin: [i, -o, z],
        u: [o - i, 0, 0],
        v: [0, 2 * o, 0],
    });
    rects.push(Rect {
        origin: [-i, -o, z],
        u: [2 * i, 0, 0],
        v: [0, o - i, 0],
    });
    rects.push(Rect {
        origin: [-i, i, z],
        u: [2 * i, 0, 0],
        v: [0, o - i, 0],
    });
}

/// Upward-facing square of half-size `half` at height `z`.
fn square(rects: &mut Vec<Rect>, z: i64, half: i64) {
    rects.push(Rect {
        origin: [-half, -half, z],
        u: [2 * half, 0, 0],
        v: [0, 2 * half, 0],
    });
}

/// Four outward-facing sides of an axis-aligned box between `z0` and `z1`.
fn box_sides(rects: &mut Vec<Rect>, half: i64, z0: i64, z1: i64) {
    let (h, dz) = (half, z1 - z0);
    rects.push(Rect {
        origin: [h, -h, z0],
        u: [0, 2 * h, 0],
        v: [0, 0, dz],
    });
    rects.push(Rect {
        origin: [-h, -h, z0],
        u: [0, 0, dz],
        v: [0, 2 * h, 0],
    });
    rects.push(Rect {
        origin: [-h, h, z0],
        u: [0, 0, dz],
        v: [2 * h, 0, 0],
    });
    rects.push(Rect {
        origin: [-h, -h, z0],
        u: [2 * h, 0, 0],
        v: [0, 0, dz],
    });
}

/// Triangulated lattice surfaces with welded vertices. Also returns the
/// source rectangle of every triangle.
pub fn tessellate(rects: &[Rect], scale: f64) -> (Vec<Point3<f64>>, Vec<[u32; 3]>, Vec<usize>) {
    let mut index: HashMap<[i64; 3], u32> = HashMap::new();
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut owner = Vec::new();
    let mut vid = |p: [i64; 3], vertices: &mut Vec<Point3<f64>>| -> u32 {
        *index.entry(p).or_insert_with(|| {
            vertices.push(Point3::new(p[0] as f64, p[1] as f64, p[2] as f64) * scale);
            (vertices.len() - 1) as u32
        })
    };
    for (ri, r) in rects.iter().enumerate() {
        let (nu, nv) = (Rect::steps(r.u), Rect::steps(r.v));
        let at = |i: i64, j: i64| -> [i64; 3] {
            std::array::from_fn(|k| r.origin[k] + r.u[k] * i / nu + r.v[k] * j / nv)
        };
        for j in 0..nv {
            for i in 0..nu {
                let a = vid(at(i, j), &mut vertices);
                let b = vid(at(i + 1, j), &mut vertices);
                let c = vid(at(i + 1, j + 1), &mut vertices);
                let d = vid(at(i, j + 1), &mut vertices);
                faces.push([a, b, c]);
                faces.push([a, c, d]);
                owner.push(ri);
                owner.push(ri);
            }
        }
    }
    (vertices, faces, owner)
}

/// Unit-radius icosphere with `4^subdivisions · 20` outward-facing triangles.
pub fn icosphere(subdivisions: u32) -> (Vec<Point3<f64>>, Vec<[u32; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vector3<f64>> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|p| Vector3::from(*p).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut midpoint = |a: u32, b: u32, verts: &mut Vec<Vector3<f64>>| -> u32 {
            let key = (a.min(b), a.max(b));
            *mid.entry(key).or_insert_with(|| {
                verts.push(((verts[a as usize] + verts[b as usize]) / 2.0).normalize());
                (verts.len() - 1) as u32
            })
        };
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    (verts.into_iter().map(Point3::from).collect(), faces)
}

/// Look-at pinhole camera on a sphere around `target`, pushed back until
/// every point of `fit` projects at least one pixel inside the image.
#[allow(clippy::too_many_arguments)]
pub fn look_at_camera(
    id: usize,
    width: usize,
    height: usize,
    fov_deg: f64,
    target: Point3<f64>,
    azimuth: f64,
    elevation: f64,
    fit: &[Point3<f64>],
) -> Camera {
    let dir = Vector3::new(
        elevation.cos() * azimuth.cos(),
        elevation.cos() * azimuth.sin(),
        elevation.sin(),
    );
    let forward = -dir;
    let right = forward.cross(&Vector3::z()).normalize();
    let down = forward.cross(&right);
    let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
    let f = (width as f64 / 2.0) / (fov_deg.to_radians() / 2.0).tan();
    let k = Matrix3::new(
        f,
        0.0,
        width as f64 / 2.0,
        0.0,
        f,
        height as f64 / 2.0,
        0.0,
        0.0,
        1.0,
    );
    let radius = fit
        .iter()
        .map(|p| (p - target).norm())
        .fold(0.0, f64::max)
        .max(1e-3);
    let mut distance = radius;
    loop {
        let cam = Camera::from_pose(id, width, height, k, rotation, target + dir * distance)
            .expect("look-at pose has full rank");
        let inside = fit.iter().all(|p| match cam.project(p) {
            Some((x, y)) => {
                x >= 1.0 && y >= 1.0 && x <= width as f64 - 1.0 && y <= height as f64 - 1.0
            }
            None => false,
        });
        if inside {
            return cam;
        }
        distance *= 1.1;
    }
}

/// Viewing ray through the center of pixel `(x, y)`: camera center and an
/// unnormalized direction scaled so the ray parameter equals the depth `w`.
pub fn pixel_ray(cam: &Camera, x: usize, y: usize) -> (Point3<f64>, Vector3<f64>) {
    let m = cam.projection.fixed_view::<3, 3>(0, 0).into_owned();
    let inv = m.try_inverse().expect("camera has full rank");
    let center = -(inv * cam.projection.column(3));
    let dir = inv * Vector3::new(x as f64 + 0.5, y as f64 + 0.5, 1.0);
    (Point3::from(center), dir)
}

/// Index of the first rectangle hit by the ray and the local `(s, t)` of the
/// hit, nearest first.
fn cast(
    rects: &[Rect],
    scale: f64,
    origin: &Point3<f64>,
    dir: &Vector3<f64>,
) -> Option<(usize, f64, f64)> {
    let mut best: Option<(f64, usize, f64, f64)> = None;
    for (ri, r) in rects.iter().enumerate() {
        let o = Point3::from(r.origin.map(|c| c as f64)) * scale;
        let u = Vector3::from(r.u.map(|c| c as f64)) * scale;
        let v = Vector3::from(r.v.map(|c| c as f64)) * scale;
        let n = u.cross(&v);
        let denom = n.dot(dir);
        if denom.abs() < 1e-15 {
            continue;
        }
        let t = n.dot(&(o - origin)) / denom;
        if t <= 0.0 || best.is_some_and(|b| t >= b.0) {
            continue;
        }
        let rel = origin + dir * t - o;
        let s = rel.dot(&u) / u.norm_squared();
        let q = rel.dot(&v) / v.norm_squared();
        if (0.0..=1.0).contains(&s) && (0.0..=1.0).contains(&q) {
            best = Some((t, ri, s, q));
        }
    }
    best.map(|(_, ri, s, q)| (ri, s, q))
}

/// Per-view noise bookkeeping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct NoiseStats {
    pub labeled_pixels: u64,
    pub flipped_pixels: u64,
    pub patch_pixels: u64,
}

impl NoiseStats {
    pub fn flip_rate(&self) -> f64 {
        if self.labeled_pixels == 0 {
            0.0
        } else {
            self.flipped_pixels as f64 / self.labeled_pixels as f64
        }
    }
}

pub struct SyntheticScene {
    pub spec: SceneSpec,
    pub rects: Vec<Rect>,
    pub scale: f64,
    pub mesh: Mesh,
    /// Source rectangle of every facet.
    pub facet_rect: Vec<usize>,
    pub gt_labels: Vec<u8>,
    /// Facets whose centroid lies inside the corrupted patch.
    pub patch_facets: Vec<usize>,
    pub cameras: Vec<Camera>,
    pub likelihoods: Vec<LikelihoodRaster>,
    pub gt_images: Vec<LabelImage>,
    pub noise: NoiseStats,
}

/// Patch bounds in local rectangle coordinates: a centered square.
fn patch_bounds(fraction: f64) -> (f64, f64) {
    let side = fraction.sqrt();
    (0.5 - side / 2.0, 0.5 + side / 2.0)
}

fn quantize(p: f64) -> f64 {
    (p * 65535.0).round() / 65535.0
}

pub fn generate(spec: &SceneSpec) -> Result<SyntheticScene, SynthError> {
    spec.validate()?;
    let rects = scene_rects(spec.kind, spec.resolution);
    let scale = 1.0 / spec.resolution as f64;
    let (vertices, faces, facet_rect) = tessellate(&rects, scale);
    let (mesh, report) =
        Mesh::from_triangles(vertices, &faces).map_err(|e| SynthError::Spec(e.to_string()))?;
    debug_assert_eq!(report.dropped_degenerate, 0);
    let classes = spec.classes;
    let rect_class: Vec<u8> = rects
        .iter()
        .map(|r| class_of_normal(&r.normal(), classes))
        .collect();
    let gt_labels: Vec<u8> = mesh
        .normals()
        .iter()
        .map(|n| class_of_normal(n, classes))
        .collect();

    let patch_rect = if spec.patch_fraction > 0.0 {
        rects.iter().position(|r| r.normal().x > 0.9)
    } else {
        None
    };
    let (lo, hi) = patch_bounds(spec.patch_fraction);
    let in_patch = |s: f64, t: f64| (lo..=hi).contains(&s) && (lo..=hi).contains(&t);
    let patch_facets = match patch_rect {
        Some(pr) => (0..mesh.facet_count())
            .filter(|&f| facet_rect[f] == pr)
            .filter(|&f| {
                let r = &rects[pr];
                let o = Point3::from(r.origin.map(|c| c as f64)) * scale;
                let u = Vector3::from(r.u.map(|c| c as f64)) * scale;
                let v = Vector3::from(r.v.map(|c| c as f64)) * scale;
                let rel = mesh.centroids()[f] - o;
                in_patch(
                    rel.dot(&u) / u.norm_squared(),
                    rel.dot(&v) / v.norm_squared(),
                )
            })
            .collect(),
        None => Vec::new(),
    };

    let (bmin, bmax) = mesh.bounding_box().expect("scene is not empty");
    let target = Point3::from((bmin.coords + bmax.coords) / 2.0);
    let elevation = spec.elevation_deg.to_radians();
    let cameras: Vec<Camera> = (0..spec.views)
        .map(|i| {
            let az = std::f64::consts::TAU * i as f64 / spec.views as f64 + 0.3;
            look_at_camera(
                i,
                spec.width,
                spec.height,
                spec.fov_deg,
                target,
                az,
                elevation,
                mesh.vertices(),
            )
        })
        .collect();

    let soft_true = quantize(1.0 - spec.tau + spec.tau / classes as f64);
    let soft_other = quantize(spec.tau / classes as f64);
    let uniform = quantize(1.0 / classes as f64);
    let per_view = Exec::default().map(&cameras, |cam| {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(cam.id as u64);
        let (w, h) = (cam.width, cam.height);
        let mut gt = LabelImage::filled(w, h, VOID_LABEL);
        let mut data = vec![uniform; w * h * classes];
        let mut stats = NoiseStats::default();
        for y in 0..h {
            for x in 0..w {
                let (origin, dir) = pixel_ray(cam, x, y);
                let Some((ri, s, t)) = cast(&rects, scale, &origin, &dir) else {
                    continue;
                };
                let label = rect_class[ri];
                let px = y * w + x;
                gt.data[px] = label;
                stats.labeled_pixels += 1;
                let probs = &mut data[px * classes..(px + 1) * classes];
                if Some(ri) == patch_rect && in_patch(s, t) {
                    let wrong = if label == 0 { 1 } else { 0 };
                    probs.fill(0.0);
                    probs[wrong as usize] = quantize(spec.patch_confidence);
                    probs[label as usize] = quantize(1.0 - spec.patch_confidence);
                    stats.patch_pixels += 1;
                } else {
                    probs.fill(soft_other);
                    probs[label as usize] = soft_true;
                }
                if rng.gen::<f64>() < spec.p_flip {
                    let mut wrong = rng.gen_range(0..classes - 1);
                    if wrong >= label as usize {
                        wrong += 1;
                    }
                    probs.swap(label as usize, wrong);
                    stats.flipped_pixels += 1;
                }
            }
        }
        let lk = LikelihoodRaster::new(w, h, classes, data).expect("likelihoods are in [0, 1]");
        (gt, lk, stats)
    });

    let mut noise = NoiseStats::default();
    let mut gt_images = Vec::with_capacity(cameras.len());
    let mut likelihoods = Vec::with_capacity(cameras.len());
    for (gt, lk, stats) in per_view {
        noise.labeled_pixels += stats.labeled_pixels;
        noise.flipped_pixels += stats.flipped_pixels;
        noise.patch_pixels += stats.patch_pixels;
        gt_images.push(gt);
        likelihoods.push(lk);
    }
    Ok(SyntheticScene {
        spec: spec.clone(),
        rects,
        scale,
        mesh,
        facet_rect,
        gt_labels,
        patch_facets,
        cameras,
        likelihoods,
        gt_images,
        noise,
    })
}

/// Artifacts written by [`SyntheticScene::write`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneManifest {
    pub spec: SceneSpec,
    pub classes: Vec<String>,
    pub vertices: usize,
    pub facets: usize,
    pub adjacent_pairs: usize,
    pub noise: NoiseStats,
    pub patch_facets: usize,
    pub mesh: String,
    pub cameras: String,
    pub likelihoods: String,
    pub gt: String,
    pub gt_labels: String,
    pub files: Vec<String>,
}

pub const MESH_FILE: &str = "mesh.ply";
pub const CAMERAS_FILE: &str = "cameras.txt";
pub const LIKELIHOOD_DIR: &str = "likelihoods";
pub const GT_DIR: &str = "gt";
pub const GT_LABELS_FILE: &str = "gt_labels.txt";
pub const MANIFEST_FILE: &str = "manifest.json";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SynthError + '_ {
    move |source| SynthError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl SyntheticScene {
    pub fn class_set(&self) -> ClassSet {
        ClassSet::new(self.spec.class_names()).expect("built-in class names are valid")
    }

    pub fn views(&self) -> Vec<CameraView> {
        self.cameras
            .iter()
            .zip(&self.likelihoods)
            .map(|(c, l)| CameraView::new(c.clone(), l.clone()).expect("sizes match"))
            .collect()
    }

    /// Ground-truth labels with the patch facets set to the wrong class they
    /// are pushed toward.
    pub fn corrupted_labels(&self) -> Vec<u8> {
        let mut labels = self.gt_labels.clone();
        for &f in &self.patch_facets {
            labels[f] = if labels[f] == 0 { 1 } else { 0 };
        }
        labels
    }

    /// Writes mesh, cameras, likelihood planes, ground-truth images, facet
    /// labels and a manifest into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<SceneManifest, SynthError> {
        let dir = dir.as_ref();
        let lk_dir = dir.join(LIKELIHOOD_DIR);
        let gt_dir = dir.join(GT_DIR);
        for d in [dir, lk_dir.as_path(), gt_dir.as_path()] {
            fs::create_dir_all(d).map_err(io_err(d))?;
        }
        let mut files = Vec::new();

        let path = dir.join(MESH_FILE);
        let file = fs::File::create(&path).map_err(io_err(&path))?;
        write_ply(
            BufWriter::new(file),
            self.mesh.vertices(),
            self.mesh.facets(),
        )
        .map_err(io_err(&path))?;
        files.push(MESH_FILE.to_string());

        let path = dir.join(CAMERAS_FILE);
        fs::write(&path, format_cameras(&self.cameras)).map_err(io_err(&path))?;
        files.push(CAMERAS_FILE.to_string());

        save_likelihoods(&self.views(), &lk_dir)?;
        for cam in &self.cameras {
            for k in 0..self.spec.classes {
                files.push(format!(
                    "{LIKELIHOOD_DIR}/{}",
                    crate::camera::likelihood_file_name(cam.id, k)
                ));
            }
        }
        for (cam, gt) in self.cameras.iter().zip(&self.gt_images) {
            write_pgm8(gt_dir.join(gt_file_name(cam.id)), gt)?;
            files.push(format!("{GT_DIR}/{}", gt_file_name(cam.id)));
        }

        let path = dir.join(GT_LABELS_FILE);
        fs::write(&path, format_facet_labels(&self.gt_labels)).map_err(io_err(&path))?;
        files.push(GT_LABELS_FILE.to_string());

        let manifest = SceneManifest {
            spec: self.spec.clone(),
            classes: self.spec.class_names(),
            vertices: self.mesh.vertices().len(),
            facets: self.mesh.facet_count(),
            adjacent_pairs: self.mesh.adjacency().len(),
            noise: self.noise,
            patch_facets: self.patch_facets.len(),
            mesh: MESH_FILE.into(),
            cameras: CAMERAS_FILE.into(),
            likelihoods: LIKELIHOOD_DIR.into(),
            gt: GT_DIR.into(),
            gt_labels: GT_LABELS_FILE.into(),
            files,
        };
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, json + "\n").map_err(io_err(&path))?;
        Ok(manifest)
    }
}

/// One label per line.
pub fn format_facet_labels(labels: &[u8]) -> String {
    let mut s = String::with_capacity(labels.len() * 2);
    for l in labels {
        s.push_str(&l.to_string());
        s.push('\n');
    }
    s
}

pub fn parse_facet_labels(text: &str) -> Result<Vec<u8>, String> {
    text.lines()
        .map(str::trim)
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            l.parse()
                .map_err(|_| format!("line {}: bad label `{l}`", i + 1))
        })
        .collect()
}

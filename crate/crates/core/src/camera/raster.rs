//! Z-buffered triangle rasterization with pixel-center sampling.

use nalgebra::Vector3;

use super::{Camera, LabelImage, VOID_LABEL};
use crate::mesh::Mesh;
use crate::par::Exec;

/// Owner value of pixels no facet covers.
pub const BACKGROUND: u32 = u32::MAX;

/// Near clipping plane in homogeneous depth.
pub const NEAR_EPS: f64 = 1e-6;

/// Depths closer than this count as a tie, won by the lower facet index.
const DEPTH_TIE: f64 = 1e-9;

/// Which facet is visible at every pixel, and at what depth.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityMap {
    pub width: usize,
    pub height: usize,
    pub owner: Vec<u32>,
    pub depth: Vec<f64>,
}

impl VisibilityMap {
    fn empty(width: usize, height: usize) -> Self {
        VisibilityMap {
            width,
            height,
            owner: vec![BACKGROUND; width * height],
            depth: vec![f64::INFINITY; width * height],
        }
    }

    pub fn owner_at(&self, x: usize, y: usize) -> Option<u32> {
        let o = self.owner[y * self.width + x];
        (o != BACKGROUND).then_some(o)
    }

    pub fn background_count(&self) -> usize {
        self.owner.iter().filter(|&&o| o == BACKGROUND).count()
    }

    /// Visible pixel count per facet.
    pub fn footprint_sizes(&self, facets: usize) -> Vec<usize> {
        let mut n = vec![0; facets];
        for &o in &self.owner {
            if o != BACKGROUND {
                n[o as usize] += 1;
            }
        }
        n
    }
}

/// Screen-space vertex: image position plus reciprocal depth.
#[derive(Debug, Clone, Copy)]
struct ScreenVertex {
    x: f64,
    y: f64,
    inv_w: f64,
}

/// Clips a homogeneous polygon against `w >= NEAR_EPS`.
fn clip_near(poly: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let a_in = a.z >= NEAR_EPS;
        let b_in = b.z >= NEAR_EPS;
        if a_in {
            out.push(a);
        }
        if a_in != b_in {
            let t = (NEAR_EPS - a.z) / (b.z - a.z);
            let mut p = a + (b - a) * t;
            p.z = NEAR_EPS;
            out.push(p);
        }
    }
    out
}

/// Edge function: positive when `p` is to the right of `a -> b` in y-down
/// image coordinates (i.e. inside a clockwise-on-screen triangle).
#[inline]
fn edge(ax: f64, ay: f64, bx: f64, by: f64, px: f64, py: f64) -> f64 {
    (bx - ax) * (py - ay) - (by - ay) * (px - ax)
}

/// Top-left rule for the orientation `edge` treats as positive: the edge
/// owns samples lying exactly on it when it runs upward, or is horizontal
/// and runs rightward.
#[inline]
fn owns_boundary(ax: f64, ay: f64, bx: f64, by: f64) -> bool {
    let dy = by - ay;
    dy < 0.0 || (dy == 0.0 && bx - ax > 0.0)
}

#[inline]
fn inside(e: f64, top_left: bool) -> bool {
    e > 0.0 || (e == 0.0 && top_left)
}

fn raster_triangle(vis: &mut VisibilityMap, facet: u32, tri: [ScreenVertex; 3]) {
    let [a, mut b, mut c] = tri;
    let area = edge(a.x, a.y, b.x, b.y, c.x, c.y);
    if !area.is_finite() || area == 0.0 {
        return;
    }
    if area < 0.0 {
        std::mem::swap(&mut b, &mut c);
    }
    let area = area.abs();

    let min_x = a.x.min(b.x).min(c.x);
    let max_x = a.x.max(b.x).max(c.x);
    let min_y = a.y.min(b.y).min(c.y);
    let max_y = a.y.max(b.y).max(c.y);
    let (w, h) = (vis.width as f64, vis.height as f64);
    if max_x < 0.0 || max_y < 0.0 || min_x > w || min_y > h {
        return;
    }
    let x0 = (min_x - 0.5).ceil().max(0.0) as usize;
    let y0 = (min_y - 0.5).ceil().max(0.0) as usize;
    let x1 = ((max_x - 0.5).floor().min(w - 1.0)).max(-1.0);
    let y1 = ((max_y - 0.5).floor().min(h - 1.0)).max(-1.0);
    if x1 < 0.0 || y1 < 0.0 {
        return;
    }
    let (x1, y1) = (x1 as usize, y1 as usize);

    let tl_bc = owns_boundary(b.x, b.y, c.x, c.y);
    let tl_ca = owns_boundary(c.x, c.y, a.x, a.y);
    let tl_ab = owns_boundary(a.x, a.y, b.x, b.y);

    for y in y0..=y1 {
        let py = y as f64 + 0.5;
        for x in x0..=x1 {
            let px = x as f64 + 0.5;
            let ea = edge(b.x, b.y, c.x, c.y, px, py);
            let eb = edge(c.x, c.y, a.x, a.y, px, py);
            let ec = edge(a.x, a.y, b.x, b.y, px, py);
            if !(inside(ea, tl_bc) && inside(eb, tl_ca) && inside(ec, tl_ab)) {
                continue;
            }
            let inv_w = (ea * a.inv_w + eb * b.inv_w + ec * c.inv_w) / area;
            if inv_w.is_nan() || inv_w <= 0.0 {
                continue;
            }
            let depth = 1.0 / inv_w;
            let i = y * vis.width + x;
            let cur = vis.depth[i];
            let closer = depth < cur - DEPTH_TIE;
            let tie_wins = (depth - cur).abs() <= DEPTH_TIE && facet < vis.owner[i];
            if closer || tie_wins {
                vis.depth[i] = depth;
                vis.owner[i] = facet;
            }
        }
    }
}

/// Rasterizes every facet into the view. Each pixel center is owned by the
/// front-most covering facet; facets crossing the near plane are clipped.
pub fn rasterize(mesh: &Mesh, cam: &Camera) -> VisibilityMap {
    let mut vis = VisibilityMap::empty(cam.width, cam.height);
    for (f, corners) in (0..mesh.facet_count()).map(|f| (f, mesh.facet_corners(f))) {
        let hv = corners.map(|p| cam.project_h(&p));
        if hv.iter().all(|v| v.z <= 0.0) {
            continue;
        }
        let poly = if hv.iter().all(|v| v.z >= NEAR_EPS) {
            hv.to_vec()
        } else {
            clip_near(&hv)
        };
        if poly.len() < 3 {
            continue;
        }
        let sv: Vec<ScreenVertex> = poly
            .iter()
            .map(|v| ScreenVertex {
                x: v.x / v.z,
                y: v.y / v.z,
                inv_w: 1.0 / v.z,
            })
            .collect();
        for k in 1..sv.len() - 1 {
            raster_triangle(&mut vis, f as u32, [sv[0], sv[k], sv[k + 1]]);
        }
    }
    vis
}

/// One visibility map per camera, in camera order.
pub fn rasterize_views<'a>(
    mesh: &Mesh,
    cams: impl IntoIterator<Item = &'a Camera>,
    exec: Exec,
) -> Vec<VisibilityMap> {
    let cams: Vec<&Camera> = cams.into_iter().collect();
    exec.map(&cams, |c| rasterize(mesh, c))
}

/// Pixels `(x, y)` owned by facet `f`, in raster order.
pub fn facet_footprint(vis: &VisibilityMap, f: usize) -> Vec<(usize, usize)> {
    vis.owner
        .iter()
        .enumerate()
        .filter(|(_, &o)| o as usize == f && o != BACKGROUND)
        .map(|(i, _)| (i % vis.width, i / vis.width))
        .collect()
}

/// Maps each pixel's owner through `labels`; background becomes void.
pub fn labels_from_visibility(vis: &VisibilityMap, labels: &[u8]) -> LabelImage {
    LabelImage {
        width: vis.width,
        height: vis.height,
        data: vis
            .owner
            .iter()
            .map(|&o| {
                if o == BACKGROUND {
                    VOID_LABEL
                } else {
                    labels[o as usize]
                }
            })
            .collect(),
    }
}

pub fn render_labels(mesh: &Mesh, labels: &[u8], cam: &Camera) -> LabelImage {
    assert_eq!(labels.len(), mesh.facet_count(), "one label per facet");
    labels_from_visibility(&rasterize(mesh, cam), labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix3x4, Point3};

    /// Orthographic-like camera: u = x, v = y, w = z + 1 (for z >= 0 in view).
    fn cam(size: usize) -> Camera {
        let p = Matrix3x4::new(
            size as f64,
            0.,
            0.,
            0., //
            0.,
            size as f64,
            0.,
            0., //
            0.,
            0.,
            0.,
            1.,
        );
        Camera::new(0, size, size, p).unwrap()
    }

    /// Perspective camera looking down +z from the origin, focal = size.
    fn persp(size: usize) -> Camera {
        let s = size as f64;
        let p = Matrix3x4::new(s, 0., s / 2., 0., 0., s, s / 2., 0., 0., 0., 1., 0.);
        Camera::new(0, size, size, p).unwrap()
    }

    fn quad_at(z: f64, half: f64) -> (Vec<Point3<f64>>, Vec<[u32; 3]>) {
        let v = vec![
            Point3::new(-half, -half, z),
            Point3::new(half, -half, z),
            Point3::new(half, half, z),
            Point3::new(-half, half, z),
        ];
        (v, vec![[0, 1, 2], [0, 2, 3]])
    }

    #[test]
    fn full_frustum_facet_owns_everything() {
        // one big triangle covering the whole 4x4 image at depth 1
        let v = vec![
            Point3::new(-10., -10., 1.),
            Point3::new(30., -10., 1.),
            Point3::new(-10., 30., 1.),
        ];
        let (mesh, _) = Mesh::from_triangles(v, &[[0, 1, 2]]).unwrap();
        let vis = rasterize(&mesh, &persp(4));
        assert!(vis.owner.iter().all(|&o| o == 0));
        assert_eq!(facet_footprint(&vis, 0).len(), 16);
        assert!(vis.depth.iter().all(|&d| (d - 1.0).abs() < 1e-12));
    }

    #[test]
    fn nearer_facet_wins() {
        let (mut v, mut f) = quad_at(2.0, 2.0);
        let (v2, f2) = quad_at(1.0, 1.0);
        let off = v.len() as u32;
        v.extend(v2);
        f.extend(f2.iter().map(|t| t.map(|i| i + off)));
        let (mesh, _) = Mesh::from_triangles(v, &f).unwrap();
        let vis = rasterize(&mesh, &persp(16));
        // the near quad at depth 1 with half-size 1 covers the whole image
        assert!(vis.owner.iter().all(|&o| o == 2 || o == 3));
        assert!(facet_footprint(&vis, 0).is_empty());
    }

    #[test]
    fn square_diagonal_partition() {
        let (v, f) = quad_at(1.0, 0.25);
        let (mesh, _) = Mesh::from_triangles(v, &f).unwrap();
        let vis = rasterize(&mesh, &persp(32));
        let sizes = vis.footprint_sizes(2);
        assert_eq!(
            sizes.iter().sum::<usize>() + vis.background_count(),
            32 * 32
        );
        // the quad spans 8..24 in both axes: 256 pixels split by the diagonal
        assert_eq!(sizes[0] + sizes[1], 256);
        assert!(sizes[0] > 100 && sizes[1] > 100);
        let img = render_labels(&mesh, &[0, 1], &persp(32));
        assert_eq!(img.get(0, 0), VOID_LABEL);
        assert_eq!(img.get(22, 9), 0);
        assert_eq!(img.get(9, 22), 1);
    }

    #[test]
    fn shared_edges_do_not_double_count() {
        // fan of triangles sharing the center vertex; all samples owned once
        let n = 12;
        let mut v = vec![Point3::new(0.013, -0.021, 1.0)];
        for k in 0..n {
            let a = k as f64 / n as f64 * std::f64::consts::TAU;
            v.push(Point3::new(0.4 * a.cos(), 0.4 * a.sin(), 1.0));
        }
        let f: Vec<[u32; 3]> = (0..n).map(|k| [0, 1 + k, 1 + (k + 1) % n]).collect();
        let (mesh, _) = Mesh::from_triangles(v, &f).unwrap();
        let mut vis = VisibilityMap::empty(40, 40);
        let cam = persp(40);
        let mut hits = vec![0u32; 40 * 40];
        for fi in 0..mesh.facet_count() {
            let hv = mesh.facet_corners(fi).map(|p| cam.project_h(&p));
            let sv = hv.map(|v| ScreenVertex {
                x: v.x / v.z,
                y: v.y / v.z,
                inv_w: 1.0 / v.z,
            });
            let mut single = VisibilityMap::empty(40, 40);
            raster_triangle(&mut single, fi as u32, sv);
            for (i, &o) in single.owner.iter().enumerate() {
                if o != BACKGROUND {
                    hits[i] += 1;
                }
            }
            raster_triangle(&mut vis, fi as u32, sv);
        }
        assert!(hits.iter().all(|&h| h <= 1));
    }

    #[test]
    fn behind_camera_culled_and_crossing_clipped() {
        let v = vec![
            Point3::new(-1., -1., -1.),
            Point3::new(1., -1., -1.),
            Point3::new(0., 1., -2.),
        ];
        let (mesh, _) = Mesh::from_triangles(v, &[[0, 1, 2]]).unwrap();
        assert_eq!(rasterize(&mesh, &persp(8)).background_count(), 64);

        // a floor plane running from behind the camera to far in front
        let v = vec![
            Point3::new(-5., 0.5, -5.),
            Point3::new(5., 0.5, -5.),
            Point3::new(0., 0.5, 50.),
        ];
        let (mesh, _) = Mesh::from_triangles(v, &[[0, 1, 2]]).unwrap();
        let vis = rasterize(&mesh, &persp(16));
        // only the lower half of the image sees the floor (y > 0 is down)
        for y in 0..16 {
            for x in 0..16 {
                if y < 8 {
                    assert!(vis.owner_at(x, y).is_none(), "({x},{y})");
                }
            }
        }
        assert!(vis.owner_at(8, 15).is_some());
        assert!(vis.depth.iter().all(|d| *d > 0.0));
    }

    #[test]
    fn depth_tie_goes_to_lower_index() {
        let (v, _) = quad_at(1.0, 2.0);
        let (mesh, _) = Mesh::from_triangles(v, &[[0, 1, 2], [0, 1, 2]]).unwrap();
        let vis = rasterize(&mesh, &cam(8));
        assert!(vis.owner.iter().all(|&o| o == 0 || o == BACKGROUND));
        assert!(vis.owner.contains(&0));
    }
}

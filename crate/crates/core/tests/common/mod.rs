//! Independent reference implementations used to check the library.

#![allow(dead_code)]

use meshlabel::camera::{Camera, BACKGROUND};
use meshlabel::energy::UnaryTable;
use meshlabel::mesh::Mesh;
use meshlabel::solver::{EnergyModel, WeightedEdge};
use nalgebra::{Matrix3, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Owner of every pixel by casting the pixel-center ray against every
/// triangle. The ray is `C + t·M⁻¹(x, y, 1)`, so `t` is the projective depth.
pub fn ray_cast_owners(mesh: &Mesh, cam: &Camera) -> Vec<u32> {
    let m: Matrix3<f64> = cam.projection.fixed_view::<3, 3>(0, 0).into_owned();
    let inv = m.try_inverse().unwrap();
    let c = Point3::from(-(inv * cam.projection.column(3)));
    let tris: Vec<[Point3<f64>; 3]> = (0..mesh.facet_count())
        .map(|f| mesh.facet_corners(f))
        .collect();
    let mut out = vec![BACKGROUND; cam.width * cam.height];
    for y in 0..cam.height {
        for x in 0..cam.width {
            let d = inv * Vector3::new(x as f64 + 0.5, y as f64 + 0.5, 1.0);
            let mut best = f64::INFINITY;
            for (f, t) in tris.iter().enumerate() {
                if let Some(depth) = moller_trumbore(&c, &d, t) {
                    if depth < best - 1e-9 {
                        best = depth;
                        out[y * cam.width + x] = f as u32;
                    }
                }
            }
        }
    }
    out
}

fn moller_trumbore(o: &Point3<f64>, d: &Vector3<f64>, t: &[Point3<f64>; 3]) -> Option<f64> {
    let e1 = t[1] - t[0];
    let e2 = t[2] - t[0];
    let p = d.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let s = o - t[0];
    let u = s.dot(&p) / det;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = d.dot(&q) / det;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let depth = e2.dot(&q) / det;
    (depth > 1e-6).then_some(depth)
}

/// Facet pairs sharing two vertex indices, by scanning every pair.
pub fn brute_adjacency(facets: &[[u32; 3]]) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    for i in 0..facets.len() {
        for j in i + 1..facets.len() {
            let shared = facets[i].iter().filter(|v| facets[j].contains(v)).count();
            if shared >= 2 {
                out.push((i as u32, j as u32));
            }
        }
    }
    out
}

pub fn energy(unary: &[Vec<f64>], edges: &[(usize, usize, f64)], labels: &[u8]) -> f64 {
    let mut e: f64 = labels
        .iter()
        .enumerate()
        .map(|(f, &l)| unary[f][l as usize])
        .sum();
    for &(f, h, w) in edges {
        if labels[f] != labels[h] {
            e += w;
        }
    }
    e
}

/// Lowest energy reachable by letting any subset of facets switch to `alpha`.
pub fn best_binary_move(
    unary: &[Vec<f64>],
    edges: &[(usize, usize, f64)],
    labels: &[u8],
    alpha: u8,
) -> f64 {
    let n = labels.len();
    let mut best = f64::INFINITY;
    let mut cand = labels.to_vec();
    for mask in 0u32..(1 << n) {
        for f in 0..n {
            cand[f] = if mask >> f & 1 == 1 { alpha } else { labels[f] };
        }
        best = best.min(energy(unary, edges, &cand));
    }
    best
}

/// Global minimum by enumerating every labeling.
pub fn exhaustive_minimum(
    unary: &[Vec<f64>],
    edges: &[(usize, usize, f64)],
    classes: usize,
) -> f64 {
    let n = unary.len();
    let mut labels = vec![0u8; n];
    let mut best = f64::INFINITY;
    loop {
        best = best.min(energy(unary, edges, &labels));
        let mut i = 0;
        loop {
            if i == n {
                return best;
            }
            labels[i] += 1;
            if (labels[i] as usize) < classes {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
    }
}

/// Minimum s-t cut capacity by enumerating every partition of the inner nodes.
pub fn partition_min_cut(n: usize, arcs: &[(usize, usize, f64)], s: usize, t: usize) -> f64 {
    let inner: Vec<usize> = (0..n).filter(|&v| v != s && v != t).collect();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << inner.len()) {
        let mut source_side = vec![false; n];
        source_side[s] = true;
        for (i, &v) in inner.iter().enumerate() {
            source_side[v] = mask >> i & 1 == 1;
        }
        let cut: f64 = arcs
            .iter()
            .filter(|(u, v, _)| source_side[*u] && !source_side[*v])
            .map(|(_, _, c)| c)
            .sum();
        best = best.min(cut);
    }
    best
}

/// Random weighted-Potts instance: a spanning chain plus extra random edges.
pub struct Instance {
    pub unary: Vec<Vec<f64>>,
    pub edges: Vec<(usize, usize, f64)>,
    pub classes: usize,
}

impl Instance {
    pub fn random(
        rng: &mut ChaCha8Rng,
        facets: usize,
        classes: usize,
        uniform_weight: Option<f64>,
    ) -> Self {
        let unary = (0..facets)
            .map(|_| (0..classes).map(|_| rng.gen_range(0.0..4.0)).collect())
            .collect();
        let weight =
            |rng: &mut ChaCha8Rng| uniform_weight.unwrap_or_else(|| rng.gen_range(0.0..2.0));
        let mut edges = Vec::new();
        for f in 1..facets {
            let w = weight(rng);
            edges.push((f - 1, f, w));
        }
        for _ in 0..facets {
            let a = rng.gen_range(0..facets);
            let b = rng.gen_range(0..facets);
            if a != b
                && !edges
                    .iter()
                    .any(|&(f, h, _)| (f, h) == (a.min(b), a.max(b)))
            {
                let w = weight(rng);
                edges.push((a.min(b), a.max(b), w));
            }
        }
        Instance {
            unary,
            edges,
            classes,
        }
    }

    pub fn model(&self) -> EnergyModel {
        let values = self.unary.iter().flatten().copied().collect();
        let table = UnaryTable::from_vec(self.unary.len(), self.classes, values);
        let edges = self
            .edges
            .iter()
            .map(|&(f, h, w)| WeightedEdge {
                f: f as u32,
                h: h as u32,
                weight: w,
            })
            .collect();
        EnergyModel::new(table, edges).unwrap()
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

//! Unary evidence from the image classifier and the pairwise geometry terms.

use std::f64::consts::FRAC_PI_2;
use std::io::Write;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{CameraView, VisibilityMap, BACKGROUND};
use crate::mesh::Mesh;
use crate::par::Exec;

/// Floor applied to the averaged likelihood before taking the log.
pub const DATA_EPS: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("{views} views but {maps} visibility maps")]
    ViewCount { views: usize, maps: usize },
    #[error("view {view}: {msg}")]
    View { view: usize, msg: String },
}

/// How per-facet evidence is turned into an energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataNorm {
    /// `-log` of the mean likelihood over the facet's visible pixels.
    #[default]
    Normalized,
    /// `-log` of the bare likelihood sum; grows with projected area.
    Raw,
}

impl std::str::FromStr for DataNorm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "normalized" => Ok(DataNorm::Normalized),
            "raw" => Ok(DataNorm::Raw),
            other => Err(format!("unknown data_norm `{other}` (normalized|raw)")),
        }
    }
}

impl std::fmt::Display for DataNorm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DataNorm::Normalized => "normalized",
            DataNorm::Raw => "raw",
        })
    }
}

/// Dense facets × classes table of unary energies, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct UnaryTable {
    facets: usize,
    classes: usize,
    values: Vec<f64>,
}

impl UnaryTable {
    pub fn zeros(facets: usize, classes: usize) -> Self {
        UnaryTable {
            facets,
            classes,
            values: vec![0.0; facets * classes],
        }
    }

    /// Panics if the length does not match or an entry is not finite.
    pub fn from_vec(facets: usize, classes: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), facets * classes, "unary table shape");
        assert!(
            values.iter().all(|v| v.is_finite()),
            "unary energies must be finite"
        );
        UnaryTable {
            facets,
            classes,
            values,
        }
    }

    pub fn facets(&self) -> usize {
        self.facets
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    #[inline]
    pub fn get(&self, facet: usize, class: usize) -> f64 {
        self.values[facet * self.classes + class]
    }

    pub fn row(&self, facet: usize) -> &[f64] {
        &self.values[facet * self.classes..(facet + 1) * self.classes]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `self + weight * other`, entrywise.
    pub fn add_scaled(&self, other: &UnaryTable, weight: f64) -> UnaryTable {
        assert_eq!((self.facets, self.classes), (other.facets, other.classes));
        UnaryTable::from_vec(
            self.facets,
            self.classes,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + weight * b)
                .collect(),
        )
    }

    /// Per-facet argmin, ties to the lowest class index.
    pub fn argmin(&self) -> Vec<u8> {
        (0..self.facets)
            .map(|f| {
                let row = self.row(f);
                let mut best = 0;
                for (c, &v) in row.iter().enumerate().skip(1) {
                    if v < row[best] {
                        best = c;
                    }
                }
                best as u8
            })
            .collect()
    }

    /// CSV dump: `facet,class,energy`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "facet,class,energy")?;
        for f in 0..self.facets {
            for c in 0..self.classes {
                writeln!(w, "{f},{c},{}", self.get(f, c))?;
            }
        }
        Ok(())
    }
}

/// Per-facet likelihood sums and visible pixel counts for one view.
struct Evidence {
    sums: Vec<f64>,
    counts: Vec<u64>,
}

fn view_evidence(
    facets: usize,
    classes: usize,
    view: &CameraView,
    vis: &VisibilityMap,
) -> Evidence {
    let mut ev = Evidence {
        sums: vec![0.0; facets * classes],
        counts: vec![0; facets],
    };
    for (px, &owner) in vis.owner.iter().enumerate() {
        if owner == BACKGROUND {
            continue;
        }
        let f = owner as usize;
        ev.counts[f] += 1;
        let lk = view.likelihoods.pixel(px);
        for (s, &l) in ev.sums[f * classes..(f + 1) * classes].iter_mut().zip(lk) {
            *s += l;
        }
    }
    ev
}

/// Data term: `-log(max(eps, S / N))` per facet and class, where `S` sums the
/// class likelihood over every pixel the facet owns across all views and `N`
/// counts those pixels. Facets seen by no view get `-log(1/|L|)`.
pub fn data_term(
    mesh: &Mesh,
    views: &[CameraView],
    vis: &[VisibilityMap],
    classes: usize,
    norm: DataNorm,
    exec: Exec,
) -> Result<UnaryTable, EnergyError> {
    if views.len() != vis.len() {
        return Err(EnergyError::ViewCount {
            views: views.len(),
            maps: vis.len(),
        });
    }
    for (v, m) in views.iter().zip(vis) {
        if v.likelihoods.classes() != classes {
            return Err(EnergyError::View {
                view: v.id(),
                msg: format!(
                    "{} likelihood planes for {classes} classes",
                    v.likelihoods.classes()
                ),
            });
        }
        if (m.width, m.height) != (v.camera.width, v.camera.height) {
            return Err(EnergyError::View {
                view: v.id(),
                msg: "visibility map size differs from the camera".into(),
            });
        }
    }
    let facets = mesh.facet_count();
    let pairs: Vec<(&CameraView, &VisibilityMap)> = views.iter().zip(vis).collect();
    let per_view = exec.map(&pairs, |(v, m)| view_evidence(facets, classes, v, m));

    // reduce in view order so the result does not depend on scheduling
    let mut sums = vec![0.0; facets * classes];
    let mut counts = vec![0u64; facets];
    for ev in &per_view {
        for (a, b) in sums.iter_mut().zip(&ev.sums) {
            *a += b;
        }
        for (a, b) in counts.iter_mut().zip(&ev.counts) {
            *a += b;
        }
    }

    let uniform = -(1.0 / classes as f64).ln();
    let mut values = vec![0.0; facets * classes];
    for f in 0..facets {
        let row = &mut values[f * classes..(f + 1) * classes];
        if counts[f] == 0 {
            row.fill(uniform);
            continue;
        }
        for (c, out) in row.iter_mut().enumerate() {
            let s = sums[f * classes + c];
            let x = match norm {
                DataNorm::Normalized => s / counts[f] as f64,
                DataNorm::Raw => s,
            };
            *out = -x.max(DATA_EPS).ln();
        }
    }
    Ok(UnaryTable::from_vec(facets, classes, values))
}

/// Potts smoothness: 1 when the labels differ.
#[inline]
pub fn smooth_term(a: usize, b: usize) -> f64 {
    if a != b {
        1.0
    } else {
        0.0
    }
}

/// Angle between two unit vectors, via the clamped dot product.
#[inline]
pub fn normal_angle(n1: &Vector3<f64>, n2: &Vector3<f64>) -> f64 {
    n1.dot(n2).clamp(-1.0, 1.0).acos()
}

/// Gaussian weight `exp(-θ² / (2 (π/2)²))` of the angle between normals;
/// it is charged only when the two labels differ.
#[inline]
pub fn disc_weight(n1: &Vector3<f64>, n2: &Vector3<f64>) -> f64 {
    disc_weight_angle(normal_angle(n1, n2))
}

#[inline]
pub fn disc_weight_angle(theta: f64) -> f64 {
    (-(theta * theta) / (2.0 * FRAC_PI_2 * FRAC_PI_2)).exp()
}

/// Geometry of one edge-adjacent facet pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairwiseEdge {
    pub f: u32,
    pub h: u32,
    pub theta: f64,
    pub weight_disc: f64,
}

/// One edge per adjacency pair of the mesh.
pub fn build_edges(mesh: &Mesh, exec: Exec) -> Vec<PairwiseEdge> {
    let normals = mesh.normals();
    exec.map(mesh.adjacency(), |&(f, h)| {
        let theta = normal_angle(&normals[f as usize], &normals[h as usize]);
        PairwiseEdge {
            f,
            h,
            theta,
            weight_disc: disc_weight_angle(theta),
        }
    })
}

/// CSV dump: `f,h,theta,weight_disc`.
pub fn write_edges_csv<W: Write>(edges: &[PairwiseEdge], mut w: W) -> std::io::Result<()> {
    writeln!(w, "f,h,theta,weight_disc")?;
    for e in edges {
        writeln!(w, "{},{},{},{}", e.f, e.h, e.theta, e.weight_disc)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{Camera, LikelihoodRaster};
    use nalgebra::{Matrix3x4, Point3};
    use std::f64::consts::PI;

    fn one_facet_mesh() -> Mesh {
        let v = vec![
            Point3::new(-10., -10., 1.),
            Point3::new(30., -10., 1.),
            Point3::new(-10., 30., 1.),
        ];
        Mesh::from_triangles(v, &[[0, 1, 2]]).unwrap().0
    }

    fn view(w: usize, h: usize, lk: Vec<f64>, classes: usize) -> CameraView {
        let s = w as f64;
        let p = Matrix3x4::new(s, 0., s / 2., 0., 0., s, h as f64 / 2., 0., 0., 0., 1., 0.);
        let cam = Camera::new(0, w, h, p).unwrap();
        CameraView::new(cam, LikelihoodRaster::new(w, h, classes, lk).unwrap()).unwrap()
    }

    fn vis_owning(w: usize, h: usize, owned: &[usize]) -> VisibilityMap {
        let mut owner = vec![BACKGROUND; w * h];
        for &p in owned {
            owner[p] = 0;
        }
        VisibilityMap {
            width: w,
            height: h,
            owner,
            depth: vec![1.0; w * h],
        }
    }

    #[test]
    fn single_pixel_evidence() {
        let mesh = one_facet_mesh();
        let v = view(2, 1, vec![0.5, 0.5, 0.9, 0.1], 2);
        let vis = vis_owning(2, 1, &[0]);
        let u = data_term(
            &mesh,
            &[v],
            &[vis],
            2,
            DataNorm::Normalized,
            Exec::Sequential,
        )
        .unwrap();
        assert!((u.get(0, 0) - 0.5f64.ln().abs()).abs() < 1e-12);
    }

    #[test]
    fn three_pixel_average() {
        let mesh = one_facet_mesh();
        let v = view(3, 1, vec![0.2, 0.8, 0.4, 0.6, 0.9, 0.1], 2);
        let vis = vis_owning(3, 1, &[0, 1, 2]);
        let u = data_term(
            &mesh,
            std::slice::from_ref(&v),
            std::slice::from_ref(&vis),
            2,
            DataNorm::Normalized,
            Exec::Sequential,
        )
        .unwrap();
        assert!((u.get(0, 0) - (-(0.5f64).ln())).abs() < 1e-12);
        let raw = data_term(&mesh, &[v], &[vis], 2, DataNorm::Raw, Exec::Sequential).unwrap();
        assert!((raw.get(0, 0) - (-(1.5f64).ln())).abs() < 1e-12);
    }

    #[test]
    fn invisible_facet_is_uniform() {
        let mesh = one_facet_mesh();
        let v = view(2, 2, vec![0.25; 16], 4);
        let vis = vis_owning(2, 2, &[]);
        let u = data_term(
            &mesh,
            &[v],
            &[vis],
            4,
            DataNorm::Normalized,
            Exec::Sequential,
        )
        .unwrap();
        for c in 0..4 {
            assert!((u.get(0, c) - 4f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_likelihood_is_clamped() {
        let mesh = one_facet_mesh();
        let v = view(1, 1, vec![0.0, 1.0], 2);
        let u = data_term(
            &mesh,
            &[v],
            &[vis_owning(1, 1, &[0])],
            2,
            DataNorm::Normalized,
            Exec::Sequential,
        )
        .unwrap();
        assert!((u.get(0, 0) + DATA_EPS.ln()).abs() < 1e-12);
        assert_eq!(u.get(0, 1), 0.0);
    }

    #[test]
    fn mismatched_lists() {
        let mesh = one_facet_mesh();
        let v = view(1, 1, vec![0.0, 1.0], 2);
        assert!(matches!(
            data_term(&mesh, &[v], &[], 2, DataNorm::Normalized, Exec::Sequential),
            Err(EnergyError::ViewCount { views: 1, maps: 0 })
        ));
    }

    #[test]
    fn smoothness_indicator() {
        assert_eq!(smooth_term(0, 0), 0.0);
        assert_eq!(smooth_term(0, 1), 1.0);
        assert_eq!(smooth_term(1, 0), smooth_term(0, 1));
    }

    #[test]
    fn disc_weight_values() {
        let z = Vector3::z();
        assert_eq!(disc_weight(&z, &z), 1.0);
        assert!((disc_weight(&z, &Vector3::x()) - (-0.5f64).exp()).abs() < 1e-12);
        assert!((disc_weight(&z, &-z) - (-2.0f64).exp()).abs() < 1e-12);
        assert!((disc_weight_angle(PI) - (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn folded_pair_edge() {
        // two facets meeting at a right angle along the x axis
        let v = vec![
            Point3::new(0., 0., 0.),
            Point3::new(1., 0., 0.),
            Point3::new(0., 1., 0.),
            Point3::new(0., 0., 1.),
        ];
        let (mesh, _) = Mesh::from_triangles(v, &[[0, 1, 2], [1, 0, 3]]).unwrap();
        let e = build_edges(&mesh, Exec::Sequential);
        assert_eq!(e.len(), 1);
        assert!((e[0].weight_disc - (-0.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn argmin_ties_low() {
        let u = UnaryTable::from_vec(2, 3, vec![1., 1., 2., 3., 0.5, 0.5]);
        assert_eq!(u.argmin(), vec![0, 1]);
    }
}

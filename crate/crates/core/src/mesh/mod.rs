//! Indexed triangle mesh with the per-facet geometry the energy terms need
//! and the edge-adjacency graph that defines the MRF neighborhood.

mod ply;

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{Point3, Vector3};
use thiserror::Error;

pub use ply::{read_ply, write_labeled_ply, write_ply, PlyFormat, PlyMesh};

/// Facets with an area below this are dropped at load.
pub const MIN_FACET_AREA: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("PLY header, line {line}: {msg}")]
    Header { line: usize, msg: String },
    #[error("PLY body, element `{element}` #{index}: {msg}")]
    Malformed {
        element: String,
        index: usize,
        msg: String,
    },
    #[error("face #{face} has {count} vertices, only triangles are supported")]
    NonTriangular { face: usize, count: usize },
    #[error("face #{face} references vertex {index}, but the mesh has {vertex_count} vertices")]
    IndexOutOfRange {
        face: usize,
        index: u64,
        vertex_count: usize,
    },
    #[error("invalid class set: {0}")]
    Classes(String),
}

/// What happened while turning raw triangles into a [`Mesh`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadReport {
    /// Input face count before filtering.
    pub input_faces: usize,
    /// Faces dropped for repeated vertex indices or near-zero area.
    pub dropped_degenerate: usize,
    /// For every kept facet, its index in the input face list.
    pub source_face: Vec<usize>,
    /// Per-facet `label` property, when the file carried one (kept facets only).
    pub face_labels: Option<Vec<u8>>,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point3<f64>>,
    facets: Vec<[u32; 3]>,
    normals: Vec<Vector3<f64>>,
    centroids: Vec<Point3<f64>>,
    areas: Vec<f64>,
    adjacency: Vec<(u32, u32)>,
}

impl Mesh {
    /// Builds a mesh from raw triangles, dropping degenerate ones.
    ///
    /// Every index must be in range; a face listing the same vertex twice is
    /// treated as degenerate rather than as an error.
    pub fn from_triangles(
        vertices: Vec<Point3<f64>>,
        faces: &[[u32; 3]],
    ) -> Result<(Mesh, LoadReport), MeshError> {
        let mut report = LoadReport {
            input_faces: faces.len(),
            ..LoadReport::default()
        };
        let mut facets = Vec::with_capacity(faces.len());
        let mut normals = Vec::with_capacity(faces.len());
        let mut centroids = Vec::with_capacity(faces.len());
        let mut areas = Vec::with_capacity(faces.len());

        for (fi, face) in faces.iter().enumerate() {
            for &v in face {
                if v as usize >= vertices.len() {
                    return Err(MeshError::IndexOutOfRange {
                        face: fi,
                        index: v as u64,
                        vertex_count: vertices.len(),
                    });
                }
            }
            if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
                report.dropped_degenerate += 1;
                continue;
            }
            let cross = oriented_cross(&vertices, *face);
            let norm = cross.norm();
            let area = 0.5 * norm;
            if area.is_nan() || area < MIN_FACET_AREA {
                report.dropped_degenerate += 1;
                continue;
            }
            let [a, b, c] = face.map(|i| vertices[i as usize]);
            facets.push(*face);
            normals.push(cross / norm);
            centroids.push(Point3::from((a.coords + b.coords + c.coords) / 3.0));
            areas.push(area);
            report.source_face.push(fi);
        }

        let adjacency = edge_adjacency(&facets);
        Ok((
            Mesh {
                vertices,
                facets,
                normals,
                centroids,
                areas,
                adjacency,
            },
            report,
        ))
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn facets(&self) -> &[[u32; 3]] {
        &self.facets
    }

    pub fn normals(&self) -> &[Vector3<f64>] {
        &self.normals
    }

    pub fn centroids(&self) -> &[Point3<f64>] {
        &self.centroids
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    /// Edge-adjacent facet pairs, `f < h`, sorted.
    pub fn adjacency(&self) -> &[(u32, u32)] {
        &self.adjacency
    }

    pub fn facet_count(&self) -> usize {
        self.facets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facets.is_empty()
    }

    /// Right-hand-rule unit normal of facet `f`.
    pub fn facet_normal(&self, f: usize) -> Vector3<f64> {
        self.normals[f]
    }

    pub fn facet_corners(&self, f: usize) -> [Point3<f64>; 3] {
        self.facets[f].map(|i| self.vertices[i as usize])
    }

    /// Axis-aligned bounding box of the vertices actually used by facets.
    pub fn bounding_box(&self) -> Option<(Point3<f64>, Point3<f64>)> {
        let mut it = self
            .facets
            .iter()
            .flatten()
            .map(|&i| self.vertices[i as usize]);
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), p| (lo.inf(&p), hi.sup(&p))))
    }

    /// Length of the bounding-box diagonal.
    pub fn diameter(&self) -> f64 {
        self.bounding_box()
            .map(|(lo, hi)| (hi - lo).norm())
            .unwrap_or(0.0)
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }
}

/// Cross product of the facet's edge vectors, evaluated from a canonical
/// rotation (smallest vertex index first) so that reversing the winding
/// negates the result bit-for-bit.
fn oriented_cross(vertices: &[Point3<f64>], face: [u32; 3]) -> Vector3<f64> {
    let start = (0..3).min_by_key(|&k| face[k]).unwrap_or(0);
    let a = vertices[face[start] as usize];
    let b = vertices[face[(start + 1) % 3] as usize];
    let c = vertices[face[(start + 2) % 3] as usize];
    (b - a).cross(&(c - a))
}

/// Pairs of facets sharing an edge. An edge used by more than two facets
/// yields every pairwise combination.
fn edge_adjacency(facets: &[[u32; 3]]) -> Vec<(u32, u32)> {
    let mut by_edge: HashMap<(u32, u32), Vec<u32>> = HashMap::with_capacity(facets.len() * 3 / 2);
    for (fi, t) in facets.iter().enumerate() {
        for k in 0..3 {
            let (u, v) = (t[k], t[(k + 1) % 3]);
            by_edge
                .entry((u.min(v), u.max(v)))
                .or_default()
                .push(fi as u32);
        }
    }
    let mut pairs = Vec::with_capacity(facets.len() * 3 / 2);
    for users in by_edge.values() {
        for i in 0..users.len() {
            for j in i + 1..users.len() {
                let (f, h) = (users[i].min(users[j]), users[i].max(users[j]));
                if f != h {
                    pairs.push((f, h));
                }
            }
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    pairs
}

/// Reads a PLY file and builds the mesh.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<(Mesh, LoadReport), MeshError> {
    let file = std::fs::File::open(path.as_ref())?;
    let ply = read_ply(std::io::BufReader::new(file))?;
    let (mesh, mut report) = Mesh::from_triangles(ply.vertices, &ply.faces)?;
    report.face_labels = ply
        .face_labels
        .map(|labels| report.source_face.iter().map(|&i| labels[i]).collect());
    Ok((mesh, report))
}

/// Ordered, unique class names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassSet {
    names: Vec<String>,
}

impl ClassSet {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self, MeshError> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 {
            return Err(MeshError::Classes(format!(
                "need at least 2 classes, got {}",
                names.len()
            )));
        }
        // 255 is the void label in 8-bit rasters
        if names.len() > 255 {
            return Err(MeshError::Classes("at most 255 classes".into()));
        }
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() {
                return Err(MeshError::Classes("empty class name".into()));
            }
            if names[..i].contains(n) {
                return Err(MeshError::Classes(format!("duplicate class name `{n}`")));
            }
        }
        Ok(ClassSet { names })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn count(&self) -> usize {
        self.names.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

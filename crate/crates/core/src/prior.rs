//! Local normal-orientation prior.
//!
//! Space is cut into a lattice of cubes. For every cube and class, the
//! azimuths and inclinations of the normals of coarse-labeled facets whose
//! centroid falls in that cube are collected into two histograms. A facet's
//! prior energy for class `l` is then
//! `-log(hist_azim[l](az(n)) * hist_incl[l](inc(n)))` looked up in the cube
//! containing its centroid.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{Point3, Vector3};
use thiserror::Error;

use crate::energy::UnaryTable;
use crate::mesh::Mesh;
use crate::par::Exec;

/// Per-bin mixing floor: every bin ends up with at least this much mass.
pub const HIST_EPS: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum PriorError {
    #[error("cell size must be positive and finite, got {0}")]
    CellSize(f64),
    #[error("bin counts must be in 1..{max}, got azimuth {azim}, inclination {incl}")]
    Bins {
        azim: usize,
        incl: usize,
        max: usize,
    },
    #[error("{labels} coarse labels for {facets} facets")]
    LabelCount { labels: usize, facets: usize },
    #[error("coarse label {label} at facet {facet} exceeds class count {classes}")]
    Label {
        facet: usize,
        label: u8,
        classes: usize,
    },
    #[error("mesh has no facets")]
    EmptyMesh,
    #[error("lattice of {0} cells is too large")]
    TooManyCells(u128),
}

/// Azimuth in `[-π, π)` and inclination in `[0, π]` of a unit vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalDirection {
    pub azimuth: f64,
    pub inclination: f64,
}

impl SphericalDirection {
    /// `azimuth = atan2(y, x)` (0 at the poles), `inclination = acos(z)`.
    pub fn from_unit(n: &Vector3<f64>) -> Self {
        let azimuth = if n.x == 0.0 && n.y == 0.0 {
            0.0
        } else {
            let a = n.y.atan2(n.x);
            if a >= PI {
                a - 2.0 * PI
            } else {
                a
            }
        };
        SphericalDirection {
            azimuth,
            inclination: n.z.clamp(-1.0, 1.0).acos(),
        }
    }

    pub fn to_unit(self) -> Vector3<f64> {
        let s = self.inclination.sin();
        Vector3::new(
            s * self.azimuth.cos(),
            s * self.azimuth.sin(),
            self.inclination.cos(),
        )
    }

    pub fn azimuth_bin(self, bins: usize) -> usize {
        let t = (self.azimuth + PI) / (2.0 * PI);
        ((t * bins as f64).floor() as usize).min(bins - 1)
    }

    pub fn inclination_bin(self, bins: usize) -> usize {
        let t = self.inclination / PI;
        ((t * bins as f64).floor() as usize).min(bins - 1)
    }
}

/// Histogram construction knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridParams {
    pub cell_size: f64,
    pub bins_azim: usize,
    pub bins_incl: usize,
    /// Weight each facet's vote by its area instead of counting it once.
    pub area_weighted: bool,
}

/// Cubic lattice of per-class azimuth/inclination histograms.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramGrid {
    origin: Point3<f64>,
    cell_size: f64,
    dims: [usize; 3],
    classes: usize,
    bins_azim: usize,
    bins_incl: usize,
    // [cell][class][bin]
    azim: Vec<f64>,
    incl: Vec<f64>,
}

impl HistogramGrid {
    /// Builds the lattice over the mesh bounding box from a coarse labeling.
    pub fn build(
        mesh: &Mesh,
        coarse: &[u8],
        classes: usize,
        params: GridParams,
    ) -> Result<Self, PriorError> {
        if !(params.cell_size > 0.0 && params.cell_size.is_finite()) {
            return Err(PriorError::CellSize(params.cell_size));
        }
        let (origin, hi) = mesh.bounding_box().ok_or(PriorError::EmptyMesh)?;
        let extent = hi - origin;
        let dims = [0, 1, 2].map(|a| ((extent[a] / params.cell_size).ceil() as usize).max(1));
        Self::build_with_dims(mesh, coarse, classes, params, origin, dims)
    }

    /// Single-cell variant: one pair of histograms per class for the whole
    /// mesh, whatever the cell size.
    pub fn build_global(
        mesh: &Mesh,
        coarse: &[u8],
        classes: usize,
        params: GridParams,
    ) -> Result<Self, PriorError> {
        let (origin, hi) = mesh.bounding_box().ok_or(PriorError::EmptyMesh)?;
        let size = (hi - origin).max().max(f64::MIN_POSITIVE);
        let params = GridParams {
            cell_size: size,
            ..params
        };
        Self::build_with_dims(mesh, coarse, classes, params, origin, [1, 1, 1])
    }

    fn build_with_dims(
        mesh: &Mesh,
        coarse: &[u8],
        classes: usize,
        params: GridParams,
        origin: Point3<f64>,
        dims: [usize; 3],
    ) -> Result<Self, PriorError> {
        let GridParams {
            cell_size,
            bins_azim,
            bins_incl,
            area_weighted,
        } = params;
        let max_bins = (1.0 / HIST_EPS) as usize;
        if bins_azim == 0 || bins_incl == 0 || bins_azim >= max_bins || bins_incl >= max_bins {
            return Err(PriorError::Bins {
                azim: bins_azim,
                incl: bins_incl,
                max: max_bins,
            });
        }
        if coarse.len() != mesh.facet_count() {
            return Err(PriorError::LabelCount {
                labels: coarse.len(),
                facets: mesh.facet_count(),
            });
        }
        if let Some((facet, &label)) = coarse
            .iter()
            .enumerate()
            .find(|(_, &l)| l as usize >= classes)
        {
            return Err(PriorError::Label {
                facet,
                label,
                classes,
            });
        }
        let cells = dims.iter().map(|&d| d as u128).product::<u128>();
        if cells * classes as u128 * (bins_azim + bins_incl) as u128 > 1 << 31 {
            return Err(PriorError::TooManyCells(cells));
        }
        let cells = cells as usize;

        let mut grid = HistogramGrid {
            origin,
            cell_size,
            dims,
            classes,
            bins_azim,
            bins_incl,
            azim: vec![0.0; cells * classes * bins_azim],
            incl: vec![0.0; cells * classes * bins_incl],
        };
        for (f, &label) in coarse.iter().enumerate() {
            let cell = grid.cell_of(&mesh.centroids()[f]);
            let dir = SphericalDirection::from_unit(&mesh.normals()[f]);
            let w = if area_weighted { mesh.areas()[f] } else { 1.0 };
            let l = label as usize;
            let ai = grid.azim_offset(cell, l) + dir.azimuth_bin(bins_azim);
            let ii = grid.incl_offset(cell, l) + dir.inclination_bin(bins_incl);
            grid.azim[ai] += w;
            grid.incl[ii] += w;
        }
        for block in grid.azim.chunks_mut(bins_azim) {
            normalize(block);
        }
        for block in grid.incl.chunks_mut(bins_incl) {
            normalize(block);
        }
        Ok(grid)
    }

    pub fn origin(&self) -> Point3<f64> {
        self.origin
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn cell_count(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn bins(&self) -> (usize, usize) {
        (self.bins_azim, self.bins_incl)
    }

    /// Cell `(i, j, k)` containing `p`, clamped into the lattice.
    pub fn cell_coords(&self, p: &Point3<f64>) -> [usize; 3] {
        [0, 1, 2].map(|a| {
            let t = ((p[a] - self.origin[a]) / self.cell_size).floor();
            if t.is_nan() || t < 0.0 {
                0
            } else {
                (t as usize).min(self.dims[a] - 1)
            }
        })
    }

    pub fn cell_of(&self, p: &Point3<f64>) -> usize {
        let [i, j, k] = self.cell_coords(p);
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    fn azim_offset(&self, cell: usize, class: usize) -> usize {
        (cell * self.classes + class) * self.bins_azim
    }

    fn incl_offset(&self, cell: usize, class: usize) -> usize {
        (cell * self.classes + class) * self.bins_incl
    }

    pub fn azimuth_hist(&self, cell: usize, class: usize) -> &[f64] {
        let o = self.azim_offset(cell, class);
        &self.azim[o..o + self.bins_azim]
    }

    pub fn inclination_hist(&self, cell: usize, class: usize) -> &[f64] {
        let o = self.incl_offset(cell, class);
        &self.incl[o..o + self.bins_incl]
    }

    /// Prior energy of giving class `class` to a facet with this centroid
    /// and normal.
    pub fn norm_energy(&self, centroid: &Point3<f64>, normal: &Vector3<f64>, class: usize) -> f64 {
        let cell = self.cell_of(centroid);
        let dir = SphericalDirection::from_unit(normal);
        let a = self.azimuth_hist(cell, class)[dir.azimuth_bin(self.bins_azim)];
        let i = self.inclination_hist(cell, class)[dir.inclination_bin(self.bins_incl)];
        -(a * i).ln()
    }

    /// Prior energy of every facet for every class.
    pub fn fill_unary(&self, mesh: &Mesh, exec: Exec) -> UnaryTable {
        let classes = self.classes;
        let mut values = vec![0.0; mesh.facet_count() * classes];
        const CHUNK: usize = 1024;
        exec.fill_chunks(&mut values, CHUNK * classes, |ci, out| {
            for (k, row) in out.chunks_mut(classes).enumerate() {
                let f = ci * CHUNK + k;
                let (c, n) = (&mesh.centroids()[f], &mesh.normals()[f]);
                for (l, v) in row.iter_mut().enumerate() {
                    *v = self.norm_energy(c, n, l);
                }
            }
        });
        UnaryTable::from_vec(mesh.facet_count(), classes, values)
    }

    /// CSV dump: `i,j,k,class,kind,bin,value`, one row per histogram bin.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "i,j,k,class,kind,bin,value")?;
        for cell in 0..self.cell_count() {
            let i = cell % self.dims[0];
            let j = (cell / self.dims[0]) % self.dims[1];
            let k = cell / (self.dims[0] * self.dims[1]);
            for class in 0..self.classes {
                for (b, v) in self.azimuth_hist(cell, class).iter().enumerate() {
                    writeln!(w, "{i},{j},{k},{class},azim,{b},{v}")?;
                }
                for (b, v) in self.inclination_hist(cell, class).iter().enumerate() {
                    writeln!(w, "{i},{j},{k},{class},incl,{b},{v}")?;
                }
            }
        }
        Ok(())
    }
}

/// Turns raw counts into `(1 - B·eps)·p + eps`; empty histograms become
/// uniform.
fn normalize(block: &mut [f64]) {
    let total: f64 = block.iter().sum();
    let b = block.len() as f64;
    if total <= 0.0 {
        block.fill(1.0 / b);
        return;
    }
    let keep = 1.0 - b * HIST_EPS;
    for v in block.iter_mut() {
        *v = keep * (*v / total) + HIST_EPS;
    }
}

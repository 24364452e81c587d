//! Two-stage labeling: a coarse solve of data + smoothness, histogram
//! collection from the coarse labels, then the full solve with the normal
//! prior and the discontinuity term.

use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::camera::{rasterize_views, CameraView, VisibilityMap};
use crate::config::{PipelineConfig, PriorMode};
use crate::energy::{build_edges, data_term, EnergyError, PairwiseEdge, UnaryTable};
use crate::mesh::{ClassSet, Mesh, MeshError};
use crate::par::Exec;
use crate::prior::{HistogramGrid, PriorError};
use crate::solver::{solve, EnergyModel, LabelAssignment, Solution, SolverError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Classes(#[from] MeshError),
    #[error("mesh has no facets")]
    EmptyMesh,
}

impl PipelineError {
    /// Errors caused by the inputs rather than by a broken invariant.
    pub fn is_input_error(&self) -> bool {
        match self {
            PipelineError::Energy(_) | PipelineError::Classes(_) | PipelineError::EmptyMesh => true,
            PipelineError::Prior(e) => {
                matches!(e, PriorError::CellSize(_) | PriorError::Bins { .. })
            }
            PipelineError::Solver(_) => false,
        }
    }
}

/// Mesh, views and their visibility, plus the quantities every stage reuses.
pub struct Scene {
    pub mesh: Mesh,
    pub views: Vec<CameraView>,
    pub vis: Vec<VisibilityMap>,
    pub edges: Vec<PairwiseEdge>,
    pub classes: ClassSet,
    pub raster_time: Duration,
}

impl Scene {
    /// Rasterizes every view and precomputes the pairwise geometry.
    pub fn new(
        mesh: Mesh,
        views: Vec<CameraView>,
        classes: ClassSet,
        exec: Exec,
    ) -> Result<Self, PipelineError> {
        if mesh.is_empty() {
            return Err(PipelineError::EmptyMesh);
        }
        let t = Instant::now();
        let vis = rasterize_views(&mesh, views.iter().map(|v| &v.camera), exec);
        let raster_time = t.elapsed();
        let edges = build_edges(&mesh, exec);
        Ok(Scene {
            mesh,
            views,
            vis,
            edges,
            classes,
            raster_time,
        })
    }

    pub fn data_unary(
        &self,
        cfg: &PipelineConfig,
        exec: Exec,
    ) -> Result<UnaryTable, PipelineError> {
        Ok(data_term(
            &self.mesh,
            &self.views,
            &self.vis,
            self.classes.count(),
            cfg.data_norm,
            exec,
        )?)
    }
}

/// Energies and move statistics of one solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageReport {
    pub initial_energy: f64,
    pub final_energy: f64,
    pub unary_energy: f64,
    pub pairwise_energy: f64,
    pub cycles: usize,
    pub moves: usize,
    pub cycle_energies: Vec<f64>,
}

impl StageReport {
    fn new(model: &EnergyModel, sol: &Solution) -> Result<Self, SolverError> {
        let (unary_energy, pairwise_energy) = model.energy_parts(&sol.labels)?;
        Ok(StageReport {
            initial_energy: sol.initial_energy,
            final_energy: sol.energy,
            unary_energy,
            pairwise_energy,
            cycles: sol.cycle_energies.len(),
            moves: sol.moves.iter().filter(|m| m.flipped > 0).count(),
            cycle_energies: sol.cycle_energies.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSummary {
    pub dims: [usize; 3],
    pub cell_size: f64,
    pub bins_azim: usize,
    pub bins_incl: usize,
}

/// Wall-clock breakdown; kept out of [`LabelReport`] so reports stay
/// reproducible.
#[derive(Debug, Clone, Default)]
pub struct Timings {
    pub rasterize: Duration,
    pub data_term: Duration,
    pub coarse_solve: Duration,
    pub histogram_build: Duration,
    pub prior_fill: Duration,
    pub fine_solve: Duration,
}

impl Timings {
    pub fn total(&self) -> Duration {
        self.rasterize
            + self.data_term
            + self.coarse_solve
            + self.histogram_build
            + self.prior_fill
            + self.fine_solve
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelReport {
    /// `full`, or `baseline` when the normal prior is disabled.
    pub mode: String,
    pub facets: usize,
    pub edges: usize,
    pub classes: Vec<String>,
    pub coarse: Option<StageReport>,
    pub fine: StageReport,
    /// Facets whose label differs between the coarse and the final result.
    pub changed_between_stages: Option<usize>,
    pub grid: Option<GridSummary>,
    /// Facet count per class in the final labeling.
    pub class_counts: Vec<usize>,
}

/// Output of [`full_label`].
#[derive(Debug, Clone)]
pub struct Labeling {
    pub labels: LabelAssignment,
    pub coarse: Option<LabelAssignment>,
    pub report: LabelReport,
    pub fine_solution: Solution,
    pub coarse_solution: Option<Solution>,
    pub timings: Timings,
}

/// Data term plus a constant-weight Potts smoothness.
pub fn coarse_model(
    scene: &Scene,
    data: &UnaryTable,
    smoothing: f64,
) -> Result<EnergyModel, PipelineError> {
    Ok(EnergyModel::from_edges(
        data.clone(),
        &scene.edges,
        0.0,
        smoothing,
    )?)
}

/// Stage one: minimizes data + smoothness from the unary argmin.
pub fn coarse_label(
    scene: &Scene,
    cfg: &PipelineConfig,
    exec: Exec,
) -> Result<Solution, PipelineError> {
    let data = scene.data_unary(cfg, exec)?;
    let model = coarse_model(scene, &data, cfg.coarse_weight())?;
    Ok(solve(&model, &model.unary_argmin())?)
}

/// Histogram lattice from a coarse labeling, honoring `cfg.prior`.
pub fn build_prior(
    scene: &Scene,
    coarse: &[u8],
    cfg: &PipelineConfig,
) -> Result<HistogramGrid, PipelineError> {
    let classes = scene.classes.count();
    Ok(match cfg.prior {
        PriorMode::Local => HistogramGrid::build(&scene.mesh, coarse, classes, cfg.grid_params())?,
        PriorMode::Global => {
            HistogramGrid::build_global(&scene.mesh, coarse, classes, cfg.grid_params())?
        }
    })
}

/// The complete energy: `data + mu1·prior` unaries and
/// `mu2·disc + mu3` edge weights.
pub fn full_model(
    scene: &Scene,
    data: &UnaryTable,
    prior: Option<&UnaryTable>,
    cfg: &PipelineConfig,
) -> Result<EnergyModel, PipelineError> {
    let unary = match prior {
        Some(p) => data.add_scaled(p, cfg.mu1),
        None => data.clone(),
    };
    Ok(EnergyModel::from_edges(
        unary,
        &scene.edges,
        cfg.mu2,
        cfg.mu3,
    )?)
}

/// Runs the whole pipeline. With `mu1 == 0` the prior has no effect and a
/// single solve of the remaining terms from the unary argmin is returned,
/// tagged `baseline`.
pub fn full_label(
    scene: &Scene,
    cfg: &PipelineConfig,
    exec: Exec,
) -> Result<Labeling, PipelineError> {
    run(scene, cfg, exec, None)
}

/// Like [`full_label`] but the histograms are collected from `coarse`
/// instead of a coarse solve.
pub fn full_label_with_coarse(
    scene: &Scene,
    cfg: &PipelineConfig,
    exec: Exec,
    coarse: &[u8],
) -> Result<Labeling, PipelineError> {
    run(scene, cfg, exec, Some(coarse))
}

fn run(
    scene: &Scene,
    cfg: &PipelineConfig,
    exec: Exec,
    given_coarse: Option<&[u8]>,
) -> Result<Labeling, PipelineError> {
    let mut timings = Timings {
        rasterize: scene.raster_time,
        ..Timings::default()
    };
    let t = Instant::now();
    let data = scene.data_unary(cfg, exec)?;
    timings.data_term = t.elapsed();

    if cfg.is_baseline() {
        let model = full_model(scene, &data, None, cfg)?;
        let t = Instant::now();
        let sol = solve(&model, &model.unary_argmin())?;
        timings.fine_solve = t.elapsed();
        let fine = StageReport::new(&model, &sol)?;
        return Ok(Labeling {
            labels: sol.labels.clone(),
            coarse: None,
            report: report(scene, "baseline", None, fine, None, None, &sol.labels),
            fine_solution: sol,
            coarse_solution: None,
            timings,
        });
    }

    let (coarse_labels, coarse_solution, coarse_report) = match given_coarse {
        Some(c) => (c.to_vec(), None, None),
        None => {
            let model = coarse_model(scene, &data, cfg.coarse_weight())?;
            let t = Instant::now();
            let sol = solve(&model, &model.unary_argmin())?;
            timings.coarse_solve = t.elapsed();
            let rep = StageReport::new(&model, &sol)?;
            (sol.labels.clone(), Some(sol), Some(rep))
        }
    };

    let t = Instant::now();
    let grid = build_prior(scene, &coarse_labels, cfg)?;
    timings.histogram_build = t.elapsed();
    let t = Instant::now();
    let prior = grid.fill_unary(&scene.mesh, exec);
    timings.prior_fill = t.elapsed();

    let model = full_model(scene, &data, Some(&prior), cfg)?;
    let t = Instant::now();
    let sol = solve(&model, &coarse_labels)?;
    timings.fine_solve = t.elapsed();
    let fine = StageReport::new(&model, &sol)?;
    let changed = coarse_labels
        .iter()
        .zip(&sol.labels)
        .filter(|(a, b)| a != b)
        .count();
    let (bins_azim, bins_incl) = grid.bins();
    let summary = GridSummary {
        dims: grid.dims(),
        cell_size: grid.cell_size(),
        bins_azim,
        bins_incl,
    };
    Ok(Labeling {
        labels: sol.labels.clone(),
        report: report(
            scene,
            "full",
            coarse_report,
            fine,
            Some(changed),
            Some(summary),
            &sol.labels,
        ),
        coarse: Some(coarse_labels),
        fine_solution: sol,
        coarse_solution,
        timings,
    })
}

fn report(
    scene: &Scene,
    mode: &str,
    coarse: Option<StageReport>,
    fine: StageReport,
    changed: Option<usize>,
    grid: Option<GridSummary>,
    labels: &[u8],
) -> LabelReport {
    let mut class_counts = vec![0; scene.classes.count()];
    for &l in labels {
        class_counts[l as usize] += 1;
    }
    LabelReport {
        mode: mode.into(),
        facets: scene.mesh.facet_count(),
        edges: scene.edges.len(),
        classes: scene.classes.names().to_vec(),
        coarse,
        fine,
        changed_between_stages: changed,
        grid,
        class_counts,
    }
}

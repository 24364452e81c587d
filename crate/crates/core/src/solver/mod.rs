//! Weighted-Potts MRF minimization by alpha-expansion.
//!
//! The model is `Σ_f U(f, l_f) + Σ_(f,h) w_fh · [l_f ≠ l_h]` with every
//! `w_fh ≥ 0`. Each expansion move is solved exactly with one s-t min cut.

mod brute;
mod maxflow;

use std::io::Write;

use thiserror::Error;

use crate::energy::{PairwiseEdge, UnaryTable};

pub use brute::{brute_force, BRUTE_FORCE_LIMIT};
pub use maxflow::{FlowGraph, MinCut};

/// Dense facet → class map.
pub type LabelAssignment = Vec<u8>;

/// A full cycle must lower the energy by more than this to continue.
pub const CONVERGENCE_EPS: f64 = 1e-9;

/// Hard cap on expansion cycles.
pub const MAX_CYCLES: usize = 1000;

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("edge ({f}, {h}) has invalid weight {weight}")]
    Weight { f: u32, h: u32, weight: f64 },
    #[error("edge ({f}, {h}) references a facet outside 0..{facets}")]
    EdgeIndex { f: u32, h: u32, facets: usize },
    #[error("{labels} labels for {facets} facets")]
    LabelCount { labels: usize, facets: usize },
    #[error("label {label} at facet {facet} exceeds class count {classes}")]
    Label {
        facet: usize,
        label: u8,
        classes: usize,
    },
    #[error("model needs at least one class and at most 255")]
    Classes,
    #[error("{classes}^{facets} labelings exceed the brute-force limit")]
    TooLarge { facets: usize, classes: usize },
}

/// Pairwise Potts term between two facets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedEdge {
    pub f: u32,
    pub h: u32,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyModel {
    unary: UnaryTable,
    edges: Vec<WeightedEdge>,
}

impl EnergyModel {
    /// Validates that every weight is finite and non-negative, which makes
    /// the pairwise term a metric and expansion moves exact.
    pub fn new(unary: UnaryTable, edges: Vec<WeightedEdge>) -> Result<Self, SolverError> {
        if unary.classes() == 0 || unary.classes() > 255 {
            return Err(SolverError::Classes);
        }
        for e in &edges {
            if !(e.weight >= 0.0 && e.weight.is_finite()) {
                return Err(SolverError::Weight {
                    f: e.f,
                    h: e.h,
                    weight: e.weight,
                });
            }
            if e.f as usize >= unary.facets() || e.h as usize >= unary.facets() || e.f == e.h {
                return Err(SolverError::EdgeIndex {
                    f: e.f,
                    h: e.h,
                    facets: unary.facets(),
                });
            }
        }
        Ok(EnergyModel { unary, edges })
    }

    /// Combined pairwise weight `disc_weight_scale · weight_disc + smooth_weight`
    /// on every mesh edge.
    pub fn from_edges(
        unary: UnaryTable,
        edges: &[PairwiseEdge],
        disc_scale: f64,
        smooth_weight: f64,
    ) -> Result<Self, SolverError> {
        let weighted = edges
            .iter()
            .map(|e| WeightedEdge {
                f: e.f,
                h: e.h,
                weight: disc_scale * e.weight_disc + smooth_weight,
            })
            .collect();
        EnergyModel::new(unary, weighted)
    }

    pub fn unary(&self) -> &UnaryTable {
        &self.unary
    }

    pub fn edges(&self) -> &[WeightedEdge] {
        &self.edges
    }

    pub fn facets(&self) -> usize {
        self.unary.facets()
    }

    pub fn classes(&self) -> usize {
        self.unary.classes()
    }

    pub fn check_labels(&self, labels: &[u8]) -> Result<(), SolverError> {
        if labels.len() != self.facets() {
            return Err(SolverError::LabelCount {
                labels: labels.len(),
                facets: self.facets(),
            });
        }
        if let Some((facet, &label)) = labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l as usize >= self.classes())
        {
            return Err(SolverError::Label {
                facet,
                label,
                classes: self.classes(),
            });
        }
        Ok(())
    }

    /// Per-facet unary argmin, ties to the lowest class.
    pub fn unary_argmin(&self) -> LabelAssignment {
        self.unary.argmin()
    }

    fn energy_unchecked(&self, labels: &[u8]) -> f64 {
        let u: f64 = labels
            .iter()
            .enumerate()
            .map(|(f, &l)| self.unary.get(f, l as usize))
            .sum();
        let p: f64 = self
            .edges
            .iter()
            .filter(|e| labels[e.f as usize] != labels[e.h as usize])
            .map(|e| e.weight)
            .sum();
        u + p
    }

    /// `Σ unary + Σ w · [labels differ]`.
    pub fn total_energy(&self, labels: &[u8]) -> Result<f64, SolverError> {
        self.check_labels(labels)?;
        Ok(self.energy_unchecked(labels))
    }

    /// Unary and pairwise parts separately.
    pub fn energy_parts(&self, labels: &[u8]) -> Result<(f64, f64), SolverError> {
        self.check_labels(labels)?;
        let total = self.energy_unchecked(labels);
        let pair: f64 = self
            .edges
            .iter()
            .filter(|e| labels[e.f as usize] != labels[e.h as usize])
            .map(|e| e.weight)
            .sum();
        Ok((total - pair, pair))
    }
}

/// The optimal alpha-expansion move from `labels`: among all labelings in
/// which every facet keeps its label or switches to `alpha`, one with
/// minimal energy.
///
/// Binary variable `x_f = 1` means "switch to alpha". Each Potts edge
/// contributes `A + (C-A)x_f + (D-C)x_h + (B+C-A-D)(1-x_f)x_h` with
/// `A..D` its energies at `00, 01, 10, 11`; the last coefficient is
/// non-negative because Potts is a metric, so the move is a min cut.
pub fn expand(
    model: &EnergyModel,
    labels: &[u8],
    alpha: u8,
) -> Result<LabelAssignment, SolverError> {
    model.check_labels(labels)?;
    if alpha as usize >= model.classes() {
        return Err(SolverError::Label {
            facet: usize::MAX,
            label: alpha,
            classes: model.classes(),
        });
    }
    Ok(expand_unchecked(model, labels, alpha))
}

fn expand_unchecked(model: &EnergyModel, labels: &[u8], alpha: u8) -> LabelAssignment {
    let n = model.facets();
    let (s, t) = (n, n + 1);
    let a = alpha as usize;
    let mut linear: Vec<f64> = (0..n)
        .map(|f| model.unary.get(f, a) - model.unary.get(f, labels[f] as usize))
        .collect();
    let mut g = FlowGraph::new(n + 2);
    for e in &model.edges {
        let (f, h) = (e.f as usize, e.h as usize);
        let (lf, lh) = (labels[f], labels[h]);
        let w = e.weight;
        let ind = |x: bool| if x { w } else { 0.0 };
        let e00 = ind(lf != lh);
        let e01 = ind(lf != alpha);
        let e10 = ind(alpha != lh);
        // e11 = 0
        linear[f] += e10 - e00;
        linear[h] -= e10;
        let pair = e01 + e10 - e00;
        if pair > 0.0 {
            g.add_edge(f, h, pair, 0.0);
        }
    }
    for (f, &c) in linear.iter().enumerate() {
        if c > 0.0 {
            g.add_edge(s, f, c, 0.0);
        } else if c < 0.0 {
            g.add_edge(f, t, -c, 0.0);
        }
    }
    let cut = g.min_cut(s, t);
    labels
        .iter()
        .enumerate()
        .map(|(f, &l)| if cut.source_side[f] { l } else { alpha })
        .collect()
}

/// One expansion move as recorded in the trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoveRecord {
    pub cycle: usize,
    pub alpha: u8,
    pub before: f64,
    pub after: f64,
    pub flipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub labels: LabelAssignment,
    pub energy: f64,
    pub initial_energy: f64,
    /// Energy at the end of every full cycle.
    pub cycle_energies: Vec<f64>,
    pub moves: Vec<MoveRecord>,
}

impl Solution {
    /// Trace file: `cycle alpha before after flipped`, one move per line.
    pub fn write_trace<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# cycle alpha energy_before energy_after flipped")?;
        for m in &self.moves {
            writeln!(
                w,
                "{} {} {} {} {}",
                m.cycle, m.alpha, m.before, m.after, m.flipped
            )?;
        }
        Ok(())
    }
}

/// Cycles alpha over all classes in ascending order, applying each
/// expansion move that lowers the energy, until a whole cycle gains no
/// more than [`CONVERGENCE_EPS`].
pub fn solve(model: &EnergyModel, init: &[u8]) -> Result<Solution, SolverError> {
    model.check_labels(init)?;
    let mut labels = init.to_vec();
    let mut energy = model.energy_unchecked(&labels);
    let initial_energy = energy;
    let mut cycle_energies = Vec::new();
    let mut moves = Vec::new();

    for cycle in 0..MAX_CYCLES {
        let start = energy;
        for alpha in 0..model.classes() as u8 {
            let candidate = expand_unchecked(model, &labels, alpha);
            let cand_energy = model.energy_unchecked(&candidate);
            let before = energy;
            let mut flipped = 0;
            if cand_energy < energy {
                flipped = labels
                    .iter()
                    .zip(&candidate)
                    .filter(|(a, b)| a != b)
                    .count();
                labels = candidate;
                energy = cand_energy;
            }
            moves.push(MoveRecord {
                cycle,
                alpha,
                before,
                after: energy,
                flipped,
            });
        }
        cycle_energies.push(energy);
        if start - energy <= CONVERGENCE_EPS {
            break;
        }
    }
    Ok(Solution {
        labels,
        energy,
        initial_energy,
        cycle_energies,
        moves,
    })
}

/// [`solve`] started from the per-facet unary argmin.
pub fn solve_from_argmin(model: &EnergyModel) -> Result<Solution, SolverError> {
    solve(model, &model.unary_argmin())
}

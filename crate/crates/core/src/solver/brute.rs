//! Exhaustive reference minimizer for small models.

use super::{EnergyModel, LabelAssignment, SolverError};

/// Largest search space `|L|^|F|` accepted by [`brute_force`].
pub const BRUTE_FORCE_LIMIT: u128 = 1 << 20;

/// Global minimizer by enumeration in lexicographic order; the first
/// labeling reaching the minimum wins ties.
pub fn brute_force(model: &EnergyModel) -> Result<LabelAssignment, SolverError> {
    let (n, k) = (model.facets(), model.classes());
    let size = (k as u128).checked_pow(n as u32);
    if size.is_none_or(|s| s > BRUTE_FORCE_LIMIT) {
        return Err(SolverError::TooLarge {
            facets: n,
            classes: k,
        });
    }
    let mut labels = vec![0u8; n];
    let mut best = labels.clone();
    let mut best_e = model.energy_unchecked(&labels);
    loop {
        // odometer, last facet fastest
        let mut i = n;
        loop {
            if i == 0 {
                return Ok(best);
            }
            i -= 1;
            labels[i] += 1;
            if (labels[i] as usize) < k {
                break;
            }
            labels[i] = 0;
        }
        let e = model.energy_unchecked(&labels);
        if e < best_e {
            best_e = e;
            best.copy_from_slice(&labels);
        }
    }
}

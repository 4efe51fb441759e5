//! Reconstruction quality measures.

use crate::error::{check_len, Error, Result};
use crate::level_set::ThresholdSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// `‖f_est - f_true‖ / ‖f_true‖` in the lumped-mass weighted L2 norm.
    pub relative_l2_error: f64,
    /// `|A ∩ B| / |A ∪ B|` of the nodes where each field is at least half
    /// the source amplitude.
    pub jaccard: f64,
}

/// Compares an estimate to the truth on the same mesh; `lumped_mass` holds
/// the nodal quadrature weights of the norm.
pub fn compute_metrics(
    f_est: &[f64],
    f_true: &[f64],
    lumped_mass: &[f64],
    spec: &ThresholdSpec,
) -> Result<Metrics> {
    check_len(f_true.len(), f_est.len())?;
    check_len(f_true.len(), lumped_mass.len())?;
    let mut diff2 = 0.0;
    let mut true2 = 0.0;
    for ((e, t), m) in f_est.iter().zip(f_true).zip(lumped_mass) {
        diff2 += m * (e - t) * (e - t);
        true2 += m * t * t;
    }
    if !(true2 > 0.0) {
        return Err(Error::InvalidArgument("true source has zero norm".into()));
    }
    let cut = 0.5 * spec.max_phase_value();
    Ok(Metrics {
        relative_l2_error: (diff2 / true2).sqrt(),
        jaccard: jaccard_index(f_est, f_true, cut),
    })
}

/// Jaccard index of `{a >= cut}` and `{b >= cut}`; two empty sets give 1.
pub fn jaccard_index(a: &[f64], b: &[f64], cut: f64) -> f64 {
    let mut inter = 0usize;
    let mut union = 0usize;
    for (x, y) in a.iter().zip(b) {
        let (ia, ib) = (*x >= cut, *y >= cut);
        inter += usize::from(ia && ib);
        union += usize::from(ia || ib);
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

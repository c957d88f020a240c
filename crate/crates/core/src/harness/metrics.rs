use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;

use crate::error::{Error, Result};
use crate::linalg::CVec;

/// `Σ_k ‖ĥ_k − h_k‖² / Σ_k ‖h_k‖²` for one trial.
pub fn nmse(estimates: &[CVec], truths: &[CVec]) -> Result<f64> {
    if estimates.len() != truths.len() {
        return Err(Error::shape("nmse", truths.len(), estimates.len()));
    }
    let mut err = 0.0;
    let mut energy = 0.0;
    for (e, h) in estimates.iter().zip(truths) {
        if e.len() != h.len() {
            return Err(Error::shape("nmse", h.len(), e.len()));
        }
        err += (e - h).norm_squared();
        energy += h.norm_squared();
    }
    if energy == 0.0 {
        return Err(Error::Undefined("NMSE of an all-zero channel"));
    }
    Ok(err / energy)
}

/// Fraction of users labelled correctly under the best one-to-one matching
/// between assigned and true labels.
pub fn grouping_accuracy(assigned: &[usize], truth: &[usize]) -> f64 {
    let k = assigned.len().min(truth.len());
    if k == 0 {
        return 1.0;
    }
    let na = assigned[..k].iter().max().unwrap() + 1;
    let nt = truth[..k].iter().max().unwrap() + 1;
    // Kuhn-Munkres wants no more rows than columns.
    let (rows, cols) = (na.min(nt), na.max(nt));
    let mut counts = Matrix::new(rows, cols, 0i64);
    for (&a, &t) in assigned[..k].iter().zip(&truth[..k]) {
        let (r, c) = if na <= nt { (a, t) } else { (t, a) };
        counts[(r, c)] += 1;
    }
    let (matched, _) = kuhn_munkres(&counts);
    matched as f64 / k as f64
}

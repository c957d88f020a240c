//! Reference recoverers: per-user SBL, a two-stage joint OMP and a
//! genie-aided least-squares bound.

use serde::{Deserialize, Serialize};

use crate::channel::SubPath;
use crate::error::{Error, Result};
use crate::linalg::{gram, hermitian_pd_inverse, lstsq_pinv, CMat, CVec, ONE};
use crate::steering::{steering, ArrayGeometry};
use crate::vbi::Hyperparams;

/// Output of a single-user recovery.
#[derive(Debug, Clone, PartialEq)]
pub struct SblEstimate {
    /// Posterior mean of the angular coefficients.
    pub mean: CVec,
    pub support: Vec<usize>,
    pub channel: CVec,
    pub iterations: usize,
    pub converged: bool,
}

/// Classic single-vector SBL on a fixed dictionary.
///
/// `Σ = (α̂ΦᴴΦ + diag γ̂)⁻¹`, `μ = α̂ΣΦᴴy`, then
/// `α ~ Gamma(a + T, b + E‖y − Φw‖²)` and `γ_l ~ Gamma(a + 1, b + E|w_l|²)`,
/// starting from unit precisions. Stops on the same relative-change rule as
/// the joint engine and reconstructs by least squares on the thresholded
/// support.
pub fn individual_sbl(y: &CVec, phi: &CMat, dictionary: &CMat, hyper: &Hyperparams) -> Result<SblEstimate> {
    hyper.validate()?;
    if phi.nrows() != y.len() {
        return Err(Error::shape("individual_sbl", phi.nrows(), y.len()));
    }
    if dictionary.ncols() != phi.ncols() {
        return Err(Error::shape("individual_sbl", phi.ncols(), dictionary.ncols()));
    }
    let t = y.len() as f64;
    let l = phi.ncols();
    let g = gram(phi);
    let proj = phi.ad_mul(y);

    let solve = |alpha: f64, gamma: &[f64]| -> Result<(CVec, CMat)> {
        let mut m = &g * ONE.scale(alpha);
        for i in 0..l {
            m[(i, i)].re += gamma[i];
        }
        let inv = hermitian_pd_inverse(&m, "single-user posterior")?;
        let mean = (&inv.inverse * &proj) * ONE.scale(alpha);
        Ok((mean, inv.inverse))
    };

    let mut gamma = vec![1.0; l];
    let (mut mean, mut cov) = solve(1.0, &gamma)?;
    let mut iterations = 0;
    let mut converged = false;
    for it in 0..hyper.max_iters {
        let r = y - phi * &mean;
        let mut tr = 0.0;
        for j in 0..l {
            for i in 0..l {
                let s = cov[(i, j)];
                let gg = g[(i, j)];
                tr += s.re * gg.re + s.im * gg.im;
            }
        }
        let alpha = (hyper.a + t) / (hyper.b + r.norm_squared() + tr);
        let (m, c) = solve(alpha, &gamma)?;
        for i in 0..l {
            let e = m[i].norm_sqr() + c[(i, i)].re;
            gamma[i] = ((hyper.a + 1.0) / (hyper.b + e)).min(hyper.precision_cap);
        }
        let change = relative_change(&mean, &m);
        mean = m;
        cov = c;
        iterations = it + 1;
        if it > 0 && change < hyper.tol {
            converged = true;
            break;
        }
    }

    let support = threshold_support(&mean, hyper.support_threshold);
    let channel = ls_on_support(y, phi, dictionary, &support, &mean)?;
    Ok(SblEstimate {
        mean,
        support,
        channel,
        iterations,
        converged,
    })
}

fn relative_change(old: &CVec, new: &CVec) -> f64 {
    let d = (new - old).norm();
    let base = old.norm();
    if base > 0.0 {
        d / base
    } else if d == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

fn threshold_support(mean: &CVec, threshold: f64) -> Vec<usize> {
    let energy: Vec<f64> = mean.iter().map(|c| c.norm_sqr()).collect();
    let peak = energy.iter().cloned().fold(0.0, f64::max);
    if peak == 0.0 {
        return Vec::new();
    }
    (0..energy.len()).filter(|&i| energy[i] >= threshold * peak).collect()
}

fn ls_on_support(y: &CVec, phi: &CMat, dictionary: &CMat, support: &[usize], mean: &CVec) -> Result<CVec> {
    if support.is_empty() {
        return Ok(CVec::zeros(dictionary.nrows()));
    }
    if support.len() > y.len() {
        return Ok(dictionary * mean);
    }
    let w = lstsq_pinv(&phi.select_columns(support.iter()), y, 1e-10)?;
    Ok(dictionary.select_columns(support.iter()) * w)
}

/// Atom budgets of the two greedy stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OmpBudgets {
    /// Atoms chosen jointly across all users.
    pub common: usize,
    /// Atoms each user may add on its own afterwards.
    pub individual: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OmpEstimate {
    pub support: Vec<usize>,
    pub channel: CVec,
    /// `‖r‖` before the first pick and after every pick, common stage included.
    pub residual_trace: Vec<f64>,
}

/// Simultaneous OMP on the common budget followed by per-user OMP on the
/// individual budget, with a least-squares fit on every final support.
///
/// Atoms are scored by `Σ_k |⟨φ_l, r_k⟩|² / ‖φ_l‖²` in the joint stage and by
/// the single-user version afterwards.
pub fn joint_omp(received: &[CVec], phi: &CMat, dictionary: &CMat, budgets: OmpBudgets) -> Result<Vec<OmpEstimate>> {
    let t = phi.nrows();
    if budgets.common + budgets.individual > t {
        return Err(Error::Config(format!(
            "OMP budget {} + {} exceeds {} pilots",
            budgets.common, budgets.individual, t
        )));
    }
    if budgets.common + budgets.individual > phi.ncols() {
        return Err(Error::Config("OMP budget exceeds the dictionary size".into()));
    }
    for y in received {
        if y.len() != t {
            return Err(Error::shape("joint_omp", t, y.len()));
        }
    }
    let norms: Vec<f64> = phi.column_iter().map(|c| c.norm()).collect();
    let fit = |y: &CVec, support: &[usize]| -> Result<CVec> {
        let w = lstsq_pinv(&phi.select_columns(support.iter()), y, 1e-10)?;
        Ok(y - phi.select_columns(support.iter()) * w)
    };

    let mut residuals: Vec<CVec> = received.to_vec();
    let mut traces: Vec<Vec<f64>> = received.iter().map(|y| vec![y.norm()]).collect();
    let mut common = Vec::new();
    for _ in 0..budgets.common {
        let pick = best_atom(phi, &norms, &residuals, &common);
        let Some(l) = pick else { break };
        common.push(l);
        for ((y, r), tr) in received.iter().zip(residuals.iter_mut()).zip(traces.iter_mut()) {
            *r = fit(y, &common)?;
            tr.push(r.norm());
        }
    }

    received
        .iter()
        .zip(residuals)
        .zip(traces)
        .map(|((y, mut r), mut trace)| {
            let mut support = common.clone();
            for _ in 0..budgets.individual {
                let Some(l) = best_atom(phi, &norms, std::slice::from_ref(&r), &support) else {
                    break;
                };
                support.push(l);
                r = fit(y, &support)?;
                trace.push(r.norm());
            }
            let channel = if support.is_empty() {
                CVec::zeros(dictionary.nrows())
            } else {
                let w = lstsq_pinv(&phi.select_columns(support.iter()), y, 1e-10)?;
                dictionary.select_columns(support.iter()) * w
            };
            support.sort_unstable();
            Ok(OmpEstimate {
                support,
                channel,
                residual_trace: trace,
            })
        })
        .collect()
}

fn best_atom(phi: &CMat, norms: &[f64], residuals: &[CVec], taken: &[usize]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (l, col) in phi.column_iter().enumerate() {
        if taken.contains(&l) || norms[l] == 0.0 {
            continue;
        }
        let score: f64 = residuals.iter().map(|r| col.dotc(r).norm_sqr()).sum::<f64>() / (norms[l] * norms[l]);
        if score > 0.0 && best.is_none_or(|(_, s)| score > s) {
            best = Some((l, score));
        }
    }
    best.map(|(l, _)| l)
}

/// Least squares on the true sub-path directions: `A (XA)⁺ y`. Repeated
/// directions are merged; more directions than pilots give the minimum-norm
/// fit.
pub fn genie_ls(y: &CVec, pilots: &CMat, geometry: &ArrayGeometry, paths: &[SubPath]) -> Result<CVec> {
    let mut dirs: Vec<(f64, f64)> = Vec::new();
    for p in paths {
        if !dirs.iter().any(|&(a, e)| a == p.azimuth && e == p.elevation) {
            dirs.push((p.azimuth, p.elevation));
        }
    }
    let n = geometry.n_antennas();
    if dirs.is_empty() {
        return Ok(CVec::zeros(n));
    }
    let a = CMat::from_columns(&dirs.iter().map(|&(az, el)| steering(geometry, az, el)).collect::<Vec<_>>());
    let w = lstsq_pinv(&(pilots * &a), y, 1e-10)?;
    Ok(a * w)
}

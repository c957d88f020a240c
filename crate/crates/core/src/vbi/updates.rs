//! Closed-form coordinate-ascent updates of the five posterior blocks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::sensing::UserSensing;
use super::state::{GammaBlock, UserPosterior, VariationalState};
use super::{GammaVShape, Hyperparams};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_pd_inverse, CMat, CVec};
use crate::steering::{AngleGrid, ArrayGeometry, GridOffsets};

/// Diagnostics from one coefficient solve over all users.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolveReport {
    /// Largest diagonal jitter any user's factorization needed.
    pub max_jitter: f64,
}

/// Numerically safe softmax (max-subtracted).
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let total: f64 = out.iter().sum();
    for o in &mut out {
        *o /= total;
    }
    out
}

/// Gaussian posterior of one user's coefficients given the noise precision
/// and the diagonal prior precisions of the common part (`d1`) and, for
/// two-block models, the individual part (`d2`).
pub(crate) fn solve_user(
    sensing: &UserSensing,
    alpha: f64,
    d1: Vec<f64>,
    d2: Option<Vec<f64>>,
) -> Result<(UserPosterior, f64)> {
    let l = sensing.n_grid();
    let combined: Vec<f64> = match &d2 {
        Some(d2) => d1.iter().zip(d2).map(|(a, b)| a * b / (a + b)).collect(),
        None => d1.clone(),
    };
    let mut m = &sensing.gram * crate::linalg::ONE.scale(alpha);
    for i in 0..l {
        m[(i, i)].re += combined[i];
    }
    let inv = hermitian_pd_inverse(&m, "coefficient posterior")?;
    let cov = inv.inverse;
    let mean = (&cov * &sensing.proj) * crate::linalg::ONE.scale(alpha);
    let post = match d2 {
        None => UserPosterior {
            var_stacked: (0..l).map(|i| cov[(i, i)].re).collect(),
            mean_stacked: mean,
            log_det: inv.log_det_inverse,
            cov,
            prior_prec_common: d1,
            prior_prec_individual: Vec::new(),
        },
        Some(d2) => {
            let mut mean_stacked = CVec::zeros(2 * l);
            let mut var_stacked = vec![0.0; 2 * l];
            let mut log_det = inv.log_det_inverse;
            for i in 0..l {
                let d = d1[i] + d2[i];
                let (r1, r2, v) = (d2[i] / d, d1[i] / d, 1.0 / d);
                let s = cov[(i, i)].re;
                mean_stacked[i] = mean[i] * r1;
                mean_stacked[l + i] = mean[i] * r2;
                var_stacked[i] = r1 * r1 * s + v;
                var_stacked[l + i] = r2 * r2 * s + v;
                log_det += v.ln();
            }
            UserPosterior {
                mean_stacked,
                var_stacked,
                log_det,
                cov,
                prior_prec_common: d1,
                prior_prec_individual: d2,
            }
        }
    };
    Ok((post, inv.jitter))
}

/// Initial offsets, sensing caches and posterior.
///
/// The first coefficient solve uses unit noise and common precisions and
/// `ρ⁻¹` on the individual part; every gamma factor starts at `Gamma(1, 1)`;
/// memberships are a softmax of uniform `[0, 1]` scores; azimuth gaps start at
/// zero and, when off-grid refinement runs on a planar array, elevations are
/// uniform on `[0, π/2]`.
pub fn init_state(
    hyper: &Hyperparams,
    geometry: &ArrayGeometry,
    grid: &AngleGrid,
    pilots: &CMat,
    received: &[CVec],
) -> Result<(VariationalState, Vec<UserSensing>)> {
    hyper.validate()?;
    let k = received.len();
    if k == 0 {
        return Err(Error::Config("no users to estimate".into()));
    }
    if pilots.ncols() != geometry.n_antennas() {
        return Err(Error::shape("init_state", format!("{} pilot columns", geometry.n_antennas()), pilots.ncols()));
    }
    for y in received {
        if y.len() != pilots.nrows() {
            return Err(Error::shape("init_state", format!("{} received samples", pilots.nrows()), y.len()));
        }
    }
    let l = grid.len();
    let n_groups = hyper.effective_groups();
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.init_seed);
    let assignment: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            let scores: Vec<f64> = (0..n_groups).map(|_| rng.random::<f64>()).collect();
            softmax(&scores)
        })
        .collect();
    let offsets: Vec<GridOffsets> = (0..k)
        .map(|_| {
            let mut o = GridOffsets::zeros(l);
            if hyper.offgrid.is_some() && geometry.is_planar() {
                for e in &mut o.elevation {
                    *e = rng.random::<f64>() * std::f64::consts::FRAC_PI_2;
                }
            }
            o
        })
        .collect();
    let sensing: Vec<UserSensing> = offsets
        .iter()
        .zip(received)
        .map(|(o, y)| UserSensing::new(geometry, grid, o, pilots, y))
        .collect();
    let individual = hyper.mode.has_individual();
    let users = sensing
        .par_iter()
        .map(|s| {
            let d2 = individual.then(|| vec![1.0 / hyper.rho; l]);
            solve_user(s, 1.0, vec![1.0; l], d2).map(|(p, _)| p)
        })
        .collect::<Result<Vec<_>>>()?;
    let state = VariationalState {
        n_grid: l,
        n_groups,
        alpha: GammaBlock::filled(1, 1.0, 1.0),
        users,
        gamma_star: (0..n_groups).map(|_| GammaBlock::filled(l, 1.0, 1.0)).collect(),
        gamma_v: if individual {
            (0..k).map(|_| GammaBlock::filled(l, 1.0, 1.0)).collect()
        } else {
            Vec::new()
        },
        assignment,
        offsets,
    };
    Ok((state, sensing))
}

/// `‖y − Φμ‖² + tr(ΦΣΦᴴ)` for one user.
pub(crate) fn expected_residual(sensing: &UserSensing, y: &CVec, post: &UserPosterior) -> f64 {
    let mu = post.mean();
    let r = y - &sensing.phi * &mu;
    let mut tr = 0.0;
    for j in 0..post.n_grid() {
        for i in 0..post.n_grid() {
            let s = post.cov[(i, j)];
            let g = sensing.gram[(i, j)];
            tr += s.re * g.re + s.im * g.im;
        }
    }
    r.norm_squared() + tr
}

/// Noise precision: `Gamma(a + KT, b + Σ_k E‖y_k − Φ_k w_k‖²)`.
pub fn update_alpha(state: &mut VariationalState, sensing: &[UserSensing], received: &[CVec], hyper: &Hyperparams) {
    let t = received.first().map_or(0, CVec::len);
    let shape = hyper.a + (state.n_users() * t) as f64;
    let residuals: Vec<f64> = state
        .users
        .par_iter()
        .zip(sensing.par_iter())
        .zip(received.par_iter())
        .map(|((p, s), y)| expected_residual(s, y, p))
        .collect();
    let rate = hyper.b + residuals.iter().sum::<f64>();
    debug_assert!(rate > 0.0);
    state.alpha.shape[0] = shape;
    state.alpha.rate[0] = rate;
}

/// Coefficient posteriors of every user under the current precisions.
pub fn update_w(state: &mut VariationalState, sensing: &[UserSensing], hyper: &Hyperparams) -> Result<SolveReport> {
    let alpha = state.alpha_mean();
    let cap = hyper.precision_cap;
    let inv_rho = 1.0 / hyper.rho;
    let st = &*state;
    let solved = sensing
        .par_iter()
        .enumerate()
        .map(|(k, s)| {
            let d1 = st.common_precision(k, cap);
            let d2 = st
                .has_individual()
                .then(|| (0..st.n_grid).map(|l| inv_rho * st.gamma_v[k].mean(l).min(cap)).collect());
            solve_user(s, alpha, d1, d2)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = SolveReport::default();
    for (k, (post, jitter)) in solved.into_iter().enumerate() {
        if jitter > 0.0 {
            log::warn!("user {k}: coefficient posterior needed jitter {jitter:e}");
        }
        report.max_jitter = report.max_jitter.max(jitter);
        state.users[k] = post;
    }
    Ok(report)
}

/// Common precisions: `Gamma(a + Σ_k φ̂_{k,g}, b + Σ_k φ̂_{k,g} E|wˢ_{k,l}|²)`.
pub fn update_gamma_star(state: &mut VariationalState, hyper: &Hyperparams) {
    let l = state.n_grid;
    for g in 0..state.n_groups {
        let mass: f64 = state.assignment.iter().map(|row| row[g]).sum();
        let block = &mut state.gamma_star[g];
        for i in 0..l {
            let mut rate = hyper.b;
            for (k, u) in state.users.iter().enumerate() {
                rate += state.assignment[k][g] * u.common_energy(i);
            }
            block.shape[i] = hyper.a + mass;
            block.rate[i] = rate;
        }
    }
}

/// Individual precisions: `Gamma(a + K or a + 1, b + ρ⁻¹ E|wᵛ_{k,l}|²)`.
pub fn update_gamma_v(state: &mut VariationalState, hyper: &Hyperparams) {
    if !state.has_individual() {
        return;
    }
    let shape = match hyper.gamma_v_shape {
        GammaVShape::Pooled => hyper.a + state.n_users() as f64,
        GammaVShape::PerUser => hyper.a + 1.0,
    };
    let inv_rho = 1.0 / hyper.rho;
    for (u, block) in state.users.iter().zip(state.gamma_v.iter_mut()) {
        for i in 0..block.len() {
            block.shape[i] = shape;
            block.rate[i] = hyper.b + inv_rho * u.individual_energy(i);
        }
    }
}

/// Membership probabilities: softmax over `g` of
/// `Σ_l E[ln γ*_{g,l}] − Σ_l γ̂*_{g,l} E|wˢ_{k,l}|²`.
pub fn update_z(state: &mut VariationalState) {
    let l = state.n_grid;
    let log_means: Vec<f64> = state
        .gamma_star
        .iter()
        .map(|b| (0..l).map(|i| b.log_mean(i)).sum())
        .collect();
    let means: Vec<Vec<f64>> = state.gamma_star.iter().map(GammaBlock::means).collect();
    for (k, u) in state.users.iter().enumerate() {
        let scores: Vec<f64> = (0..state.n_groups)
            .map(|g| {
                let quad: f64 = (0..l).map(|i| means[g][i] * u.common_energy(i)).sum();
                log_means[g] - quad
            })
            .collect();
        state.assignment[k] = softmax(&scores);
    }
}

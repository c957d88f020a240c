use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::elbo::compute_elbo;
use super::sensing::UserSensing;
use super::state::VariationalState;
use super::updates::{init_state, update_alpha, update_gamma_star, update_gamma_v, update_w, update_z};
use super::{GammaVShape, Hyperparams, Mode};
use crate::channel::ObservationSet;
use crate::error::{Error, Result};
use crate::linalg::{lstsq_pinv, CMat, CVec};
use crate::offgrid::{apply_offgrid_step, objective_grad_beta, objective_grad_phi, GradientInputs};
use crate::steering::{AngleGrid, ArrayGeometry};

/// Relative ELBO drop tolerated before a run is declared broken.
const ELBO_DROP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupExtraction {
    /// `g*_k`, zero-based.
    pub assignments: Vec<usize>,
    pub supports: Vec<Vec<usize>>,
    /// Users whose posterior mean vanished entirely.
    pub empty_support: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct PosteriorSummary {
    pub assignments: Vec<usize>,
    pub supports: Vec<Vec<usize>>,
    pub empty_support: Vec<bool>,
    pub channels: Vec<CVec>,
    pub elbo: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl PosteriorSummary {
    /// Number of groups that received at least one user.
    pub fn non_empty_groups(&self) -> usize {
        let mut seen: Vec<usize> = self.assignments.clone();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }
}

#[derive(Debug, Clone)]
pub struct InferenceOutput {
    pub state: VariationalState,
    pub sensing: Vec<UserSensing>,
    pub summary: PosteriorSummary,
    /// Objective after initialisation and then after every iteration, or after
    /// every block update when a per-block trace was requested.
    pub elbo_trace: Vec<f64>,
}

/// Argmax group per user (ties to the lowest index) and thresholded supports
/// `{l : |μ_{k,l}|² ≥ η · max_j |μ_{k,j}|²}`.
pub fn extract_groups(state: &VariationalState, threshold: f64) -> GroupExtraction {
    let mut out = GroupExtraction {
        assignments: Vec::with_capacity(state.n_users()),
        supports: Vec::with_capacity(state.n_users()),
        empty_support: Vec::with_capacity(state.n_users()),
    };
    for (k, u) in state.users.iter().enumerate() {
        let row = &state.assignment[k];
        let mut best = 0;
        for g in 1..row.len() {
            if row[g] > row[best] {
                best = g;
            }
        }
        out.assignments.push(best);
        let energy: Vec<f64> = u.mean().iter().map(|c| c.norm_sqr()).collect();
        let peak = energy.iter().cloned().fold(0.0, f64::max);
        if peak == 0.0 {
            log::warn!("user {k}: posterior mean is identically zero");
            out.supports.push(Vec::new());
            out.empty_support.push(true);
        } else {
            out.supports
                .push((0..energy.len()).filter(|&l| energy[l] >= threshold * peak).collect());
            out.empty_support.push(false);
        }
    }
    out
}

/// Least-squares channel estimates on each user's support,
/// `A_Ω (XA_Ω)⁺ y`, falling back to `A μ` when the support exceeds `T`.
pub fn reconstruct_channels(
    state: &VariationalState,
    sensing: &[UserSensing],
    received: &[CVec],
    supports: &[Vec<usize>],
) -> Result<Vec<CVec>> {
    sensing
        .par_iter()
        .zip(received.par_iter())
        .zip(supports.par_iter())
        .enumerate()
        .map(|(k, ((s, y), omega))| {
            let n = s.dictionary.nrows();
            if omega.is_empty() {
                return Ok(CVec::zeros(n));
            }
            if omega.len() > y.len() {
                log::warn!("user {k}: support of {} exceeds {} pilots, using posterior mean", omega.len(), y.len());
                return Ok(&s.dictionary * state.users[k].mean());
            }
            let a = s.dictionary.select_columns(omega.iter());
            let phi = s.phi.select_columns(omega.iter());
            let w = lstsq_pinv(&phi, y, 1e-10)?;
            Ok(a * w)
        })
        .collect()
}

fn max_relative_change(old: &[CVec], new: &[CVec]) -> f64 {
    old.iter()
        .zip(new)
        .map(|(o, n)| {
            let d = (n - o).norm();
            let base = o.norm();
            if base > 0.0 {
                d / base
            } else if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max)
}

/// Run inference on an observation set with a uniform grid of
/// `hyper.grid_points` (default: one per antenna).
pub fn run_inference(hyper: &Hyperparams, obs: &ObservationSet, geometry: &ArrayGeometry) -> Result<InferenceOutput> {
    let grid = AngleGrid::uniform(geometry, hyper.grid_points.unwrap_or(geometry.n_antennas()))?;
    run_inference_with(hyper, &obs.pilots, &obs.received, geometry, &grid, false)
}

/// Whether every block update is an exact coordinate-ascent step, so the
/// objective can only rise.
fn monotone_by_construction(hyper: &Hyperparams) -> bool {
    hyper.offgrid.is_none() && (hyper.mode != Mode::General || hyper.gamma_v_shape == GammaVShape::PerUser)
}

struct Tracker {
    trace: Vec<f64>,
    guard: bool,
}

impl Tracker {
    fn record(&mut self, value: f64, stage: &'static str) -> Result<()> {
        if self.guard {
            if let Some(&prev) = self.trace.last() {
                if value < prev - ELBO_DROP_TOL * prev.abs() {
                    return Err(Error::numerical(
                        "objective",
                        format!("decreased from {prev} to {value} after the {stage} update"),
                    ));
                }
            }
        }
        self.trace.push(value);
        Ok(())
    }
}

/// Full inference loop on an explicit grid.
///
/// Each iteration refreshes the noise precision, the coefficients, the common
/// and individual precisions and the memberships, then takes one off-grid
/// step when enabled. The loop stops once every user's posterior mean moves
/// by less than `tol` relative to its previous value.
pub fn run_inference_with(
    hyper: &Hyperparams,
    pilots: &CMat,
    received: &[CVec],
    geometry: &ArrayGeometry,
    grid: &AngleGrid,
    trace_blocks: bool,
) -> Result<InferenceOutput> {
    let (mut state, mut sensing) = init_state(hyper, geometry, grid, pilots, received)?;
    let mut tracker = Tracker {
        trace: Vec::new(),
        guard: monotone_by_construction(hyper),
    };
    tracker.record(compute_elbo(&state, &sensing, received, hyper)?.total(), "initial")?;
    let mut prev = state.means();
    let mut converged = false;
    let mut iterations = 0;

    macro_rules! block {
        ($stage:literal, $update:expr) => {{
            $update;
            if trace_blocks {
                tracker.record(compute_elbo(&state, &sensing, received, hyper)?.total(), $stage)?;
            }
        }};
    }

    for it in 0..hyper.max_iters {
        block!("noise precision", update_alpha(&mut state, &sensing, received, hyper));
        block!("coefficient", update_w(&mut state, &sensing, hyper)?);
        block!("common precision", update_gamma_star(&mut state, hyper));
        block!("individual precision", update_gamma_v(&mut state, hyper));
        block!("membership", update_z(&mut state));
        if let Some(cfg) = &hyper.offgrid {
            offgrid_pass(&mut state, &mut sensing, pilots, received, geometry, grid, cfg, it);
            if trace_blocks {
                tracker.trace.push(compute_elbo(&state, &sensing, received, hyper)?.total());
            }
        }
        if !trace_blocks {
            tracker.record(compute_elbo(&state, &sensing, received, hyper)?.total(), "iteration")?;
        }
        iterations = it + 1;
        let means = state.means();
        let change = max_relative_change(&prev, &means);
        prev = means;
        // The first solve reuses the initial precisions, so μ can look
        // stationary before any precision has been learned.
        if it > 0 && change < hyper.tol {
            converged = true;
            break;
        }
    }

    let groups = extract_groups(&state, hyper.support_threshold);
    let channels = reconstruct_channels(&state, &sensing, received, &groups.supports)?;
    let summary = PosteriorSummary {
        assignments: groups.assignments,
        supports: groups.supports,
        empty_support: groups.empty_support,
        channels,
        elbo: *tracker.trace.last().unwrap_or(&f64::NAN),
        iterations,
        converged,
    };
    Ok(InferenceOutput {
        state,
        sensing,
        summary,
        elbo_trace: tracker.trace,
    })
}

#[allow(clippy::too_many_arguments)]
fn offgrid_pass(
    state: &mut VariationalState,
    sensing: &mut [UserSensing],
    pilots: &CMat,
    received: &[CVec],
    geometry: &ArrayGeometry,
    grid: &AngleGrid,
    cfg: &crate::offgrid::OffgridStepConfig,
    iteration: usize,
) {
    let alpha = state.alpha_mean();
    let users = &state.users;
    state
        .offsets
        .par_iter_mut()
        .zip(sensing.par_iter_mut())
        .zip(received.par_iter())
        .enumerate()
        .for_each(|(k, ((offsets, s), y))| {
            let mean = users[k].mean();
            let (gb, gp) = {
                let inp = GradientInputs {
                    geometry,
                    grid,
                    offsets,
                    pilots,
                    phi: &s.phi,
                    y,
                    mean: &mean,
                    cov: &users[k].cov,
                    alpha,
                };
                let gb = objective_grad_beta(&inp);
                let gp = geometry.is_planar().then(|| objective_grad_phi(&inp));
                (gb, gp)
            };
            let changed = apply_offgrid_step(offsets, &gb, gp.as_deref(), grid.interval, cfg, iteration);
            s.refresh_columns(&changed, offsets, geometry, grid, pilots, y);
        });
}

/// Dump the objective trace, precision means and memberships as CSV files
/// into `dir` for inspection.
pub fn write_snapshot(state: &VariationalState, elbo_trace: &[f64], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("elbo.csv"))?;
    w.write_record(["step", "elbo"])?;
    for (i, v) in elbo_trace.iter().enumerate() {
        w.write_record([i.to_string(), format!("{v:e}")])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("gamma_star.csv"))?;
    w.write_record(["group", "grid", "mean", "log_mean"])?;
    for (g, b) in state.gamma_star.iter().enumerate() {
        for l in 0..b.len() {
            w.write_record([g.to_string(), l.to_string(), format!("{:e}", b.mean(l)), format!("{:e}", b.log_mean(l))])?;
        }
    }
    w.flush()?;

    if state.has_individual() {
        let mut w = csv::Writer::from_path(dir.join("gamma_v.csv"))?;
        w.write_record(["user", "grid", "mean"])?;
        for (k, b) in state.gamma_v.iter().enumerate() {
            for l in 0..b.len() {
                w.write_record([k.to_string(), l.to_string(), format!("{:e}", b.mean(l))])?;
            }
        }
        w.flush()?;
    }

    let mut w = csv::Writer::from_path(dir.join("assignment.csv"))?;
    let mut header = vec!["user".to_string()];
    header.extend((0..state.n_groups).map(|g| format!("group_{g}")));
    w.write_record(&header)?;
    for (k, row) in state.assignment.iter().enumerate() {
        let mut rec = vec![k.to_string()];
        rec.extend(row.iter().map(|p| format!("{p:e}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::simulate_observations;
    use crate::steering::{build_dictionary, GridOffsets};
    use num_complex::Complex64;

    fn on_grid_users(geometry: &ArrayGeometry, grid: &AngleGrid, atoms: &[&[usize]]) -> Vec<CVec> {
        let a = build_dictionary(geometry, grid, &GridOffsets::zeros(grid.len()));
        atoms
            .iter()
            .enumerate()
            .map(|(k, idx)| {
                let mut h = CVec::zeros(geometry.n_antennas());
                for (j, &l) in idx.iter().enumerate() {
                    let c = Complex64::from_polar(1.0, 0.7 * (k + j) as f64);
                    h += a.column(l) * c;
                }
                h
            })
            .collect()
    }

    #[test]
    fn single_user_recovers_on_grid_channel() {
        let geometry = ArrayGeometry::ula(16, 0.5).unwrap();
        let grid = AngleGrid::uniform(&geometry, 16).unwrap();
        let h = on_grid_users(&geometry, &grid, &[&[3, 11]]);
        let obs = simulate_observations(&h, 12, 40.0, 1.0, 9).unwrap();
        let hyper = Hyperparams {
            n_groups: 1,
            mode: Mode::GroupOnly,
            ..Hyperparams::default()
        };
        let out = run_inference(&hyper, &obs, &geometry).unwrap();
        assert_eq!(out.summary.supports[0], vec![3, 11]);
        let err = (&out.summary.channels[0] - &h[0]).norm_squared() / h[0].norm_squared();
        assert!(err < 1e-3, "nmse {err}");
        assert!(out.summary.converged);
        assert_eq!(out.elbo_trace.len(), out.summary.iterations + 1);
    }

    #[test]
    fn block_trace_has_one_entry_per_update() {
        let geometry = ArrayGeometry::ula(8, 0.5).unwrap();
        let grid = AngleGrid::uniform(&geometry, 8).unwrap();
        let h = on_grid_users(&geometry, &grid, &[&[1], &[5], &[1, 6]]);
        let obs = simulate_observations(&h, 6, 10.0, 1.0, 2).unwrap();
        let hyper = Hyperparams {
            max_iters: 4,
            tol: 0.0,
            ..Hyperparams::default()
        };
        let out = run_inference_with(&hyper, &obs.pilots, &obs.received, &geometry, &grid, true).unwrap();
        assert_eq!(out.summary.iterations, 4);
        assert!(!out.summary.converged);
        assert_eq!(out.elbo_trace.len(), 1 + 5 * 4);
        assert!(out.elbo_trace.windows(2).all(|w| w[1] >= w[0] - 1e-6 * w[0].abs()));
    }

    #[test]
    fn common_mode_is_equivariant_under_user_permutation() {
        let geometry = ArrayGeometry::ula(10, 0.5).unwrap();
        let grid = AngleGrid::uniform(&geometry, 10).unwrap();
        let h = on_grid_users(&geometry, &grid, &[&[2, 3], &[2, 7], &[3, 8], &[0, 2]]);
        let obs = simulate_observations(&h, 8, 15.0, 1.0, 4).unwrap();
        let hyper = Hyperparams {
            mode: Mode::Common,
            max_iters: 30,
            ..Hyperparams::default()
        };
        let base = run_inference(&hyper, &obs, &geometry).unwrap();
        let perm = [2, 0, 3, 1];
        let received: Vec<CVec> = perm.iter().map(|&k| obs.received[k].clone()).collect();
        let swapped = run_inference_with(&hyper, &obs.pilots, &received, &geometry, &grid, false).unwrap();
        for (j, &k) in perm.iter().enumerate() {
            let d = (&swapped.summary.channels[j] - &base.summary.channels[k]).norm();
            assert!(d < 1e-8 * base.summary.channels[k].norm().max(1.0), "user {k}: {d}");
            assert_eq!(swapped.summary.supports[j], base.summary.supports[k]);
        }
        assert!((swapped.summary.elbo - base.summary.elbo).abs() < 1e-8 * base.summary.elbo.abs());
    }

    #[test]
    fn extraction_breaks_ties_low_and_flags_zero_users() {
        let geometry = ArrayGeometry::ula(4, 0.5).unwrap();
        let grid = AngleGrid::uniform(&geometry, 4).unwrap();
        let h = on_grid_users(&geometry, &grid, &[&[0], &[1], &[2]]);
        let obs = simulate_observations(&h, 4, 10.0, 1.0, 1).unwrap();
        let hyper = Hyperparams {
            n_groups: 3,
            mode: Mode::GroupOnly,
            max_iters: 1,
            ..Hyperparams::default()
        };
        let mut st = run_inference(&hyper, &obs, &geometry).unwrap().state;
        st.assignment = vec![vec![0.4, 0.4, 0.2], vec![0.1, 0.3, 0.6], vec![0.2, 0.5, 0.3]];
        let c = |x: f64| Complex64::new(x, 0.0);
        st.users[0].mean_stacked = CVec::from_vec(vec![c(1.0), c(0.0), Complex64::new(0.0, 0.2), c(0.05)]);
        st.users[1].mean_stacked = CVec::zeros(4);
        st.users[2].mean_stacked = CVec::from_vec(vec![c(0.3); 4]);
        let ex = extract_groups(&st, 0.01);
        assert_eq!(ex.assignments, vec![0, 2, 1]);
        // |0.2|² = 0.04 passes 1% of the peak, |0.05|² = 0.0025 does not.
        assert_eq!(ex.supports, vec![vec![0, 2], vec![], vec![0, 1, 2, 3]]);
        assert_eq!(ex.empty_support, vec![false, true, false]);

        let chans = reconstruct_channels(&st, &obs_sensing(&hyper, &geometry, &grid, &obs), &obs.received, &ex.supports).unwrap();
        assert_eq!(chans[1], CVec::zeros(4));
    }

    fn obs_sensing(hyper: &Hyperparams, geometry: &ArrayGeometry, grid: &AngleGrid, obs: &ObservationSet) -> Vec<UserSensing> {
        init_state(hyper, geometry, grid, &obs.pilots, &obs.received).unwrap().1
    }

    #[test]
    fn snapshot_files_are_written() {
        let geometry = ArrayGeometry::ula(6, 0.5).unwrap();
        let grid = AngleGrid::uniform(&geometry, 6).unwrap();
        let h = on_grid_users(&geometry, &grid, &[&[1], &[4]]);
        let obs = simulate_observations(&h, 5, 10.0, 1.0, 3).unwrap();
        let out = run_inference(&Hyperparams { max_iters: 3, ..Hyperparams::default() }, &obs, &geometry).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_snapshot(&out.state, &out.elbo_trace, dir.path()).unwrap();
        for f in ["elbo.csv", "gamma_star.csv", "gamma_v.csv", "assignment.csv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let elbo = std::fs::read_to_string(dir.path().join("elbo.csv")).unwrap();
        assert_eq!(elbo.lines().count(), out.elbo_trace.len() + 1);
    }
}

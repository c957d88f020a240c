//! Gradient steps on the per-user dictionary angles.
//!
//! Only the data-fit part of the objective depends on the angles,
//! `f = −α̂ (‖y − XA(β, φ)μ‖² + tr(XAΣAᴴXᴴ))`, and a column's angles enter
//! only that column, so each partial derivative needs one derivative
//! steering vector.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec};
use crate::steering::{steering_grad, AngleGrid, AngleParam, ArrayGeometry, GridOffsets};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffgridStepConfig {
    /// Azimuth step as a fraction of the grid interval.
    pub beta_step_fraction: f64,
    /// Initial elevation step in radians.
    pub phi_step_base: f64,
    /// Geometric decay `ϱ` of the elevation step.
    pub decay: f64,
    /// Lower bound on the decay factor `ϱ^i`.
    pub phi_step_floor: f64,
}

impl Default for OffgridStepConfig {
    fn default() -> Self {
        OffgridStepConfig {
            beta_step_fraction: 0.01,
            phi_step_base: PI / 36.0,
            decay: 0.98,
            phi_step_floor: 0.001,
        }
    }
}

impl OffgridStepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.decay > 0.9474 && self.decay < 1.0) {
            return Err(Error::Config(format!("decay must lie in (0.9474, 1), got {}", self.decay)));
        }
        if !(self.beta_step_fraction > 0.0 && self.phi_step_base > 0.0 && self.phi_step_floor > 0.0) {
            return Err(Error::Config("off-grid step sizes must be positive".into()));
        }
        Ok(())
    }

    /// Elevation step at outer iteration `i`.
    pub fn phi_step(&self, iteration: usize) -> f64 {
        let i = iteration.min(i32::MAX as usize) as i32;
        self.phi_step_base * self.decay.powi(i).max(self.phi_step_floor)
    }
}

/// Inputs shared by the two gradients for one user.
pub struct GradientInputs<'a> {
    pub geometry: &'a ArrayGeometry,
    pub grid: &'a AngleGrid,
    pub offsets: &'a GridOffsets,
    pub pilots: &'a CMat,
    /// Current measurement matrix `X A(β, φ)`.
    pub phi: &'a CMat,
    pub y: &'a CVec,
    /// Combined posterior mean `μ_k`.
    pub mean: &'a CVec,
    /// Combined posterior covariance `Σ_k`.
    pub cov: &'a CMat,
    pub alpha: f64,
}

/// `∂f/∂β_{k,l}` (azimuth) or `∂f/∂φ_{k,l}` (elevation) for every grid column.
///
/// With `r = y − Φμ` and `φ'_l = X ∂a_l`, each entry is
/// `2α̂ Re(φ'_lᴴ (μ_l* r − (ΦΣ)_{:,l}))`. Elevation gradients of a ULA are zero.
pub fn objective_grad(inp: &GradientInputs<'_>, wrt: AngleParam) -> Vec<f64> {
    let l = inp.grid.len();
    if wrt == AngleParam::Elevation && !inp.geometry.is_planar() {
        return vec![0.0; l];
    }
    let r = inp.y - inp.phi * inp.mean;
    let phi_sigma = inp.phi * inp.cov;
    (0..l)
        .map(|j| {
            let mu = inp.mean[j];
            let col = phi_sigma.column(j);
            if mu.norm_sqr() == 0.0 && col.iter().all(|c| c.norm_sqr() == 0.0) {
                return 0.0;
            }
            let da = steering_grad(
                inp.geometry,
                inp.grid.points[j] + inp.offsets.beta[j],
                inp.offsets.elevation[j],
                wrt,
            );
            let dphi = inp.pilots * da;
            let c = &r * mu.conj() - col;
            2.0 * inp.alpha * dphi.dotc(&c).re
        })
        .collect()
}

pub fn objective_grad_beta(inp: &GradientInputs<'_>) -> Vec<f64> {
    objective_grad(inp, AngleParam::Azimuth)
}

pub fn objective_grad_phi(inp: &GradientInputs<'_>) -> Vec<f64> {
    objective_grad(inp, AngleParam::Elevation)
}

/// The angle-dependent objective `−α̂ (‖y − XAμ‖² + tr(XAΣAᴴXᴴ))`, used as a
/// finite-difference reference for the gradients.
pub fn data_fit_objective(phi: &CMat, y: &CVec, mean: &CVec, cov: &CMat, alpha: f64) -> f64 {
    let r = y - phi * mean;
    let tr: f64 = (phi * cov)
        .iter()
        .zip(phi.iter())
        .map(|(a, b)| (a * b.conj()).re)
        .sum();
    -alpha * (r.norm_squared() + tr)
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Fixed-size sign steps on β (and φ when given), clamped to
/// `[−r_θ/2, r_θ/2]` and `[0, π/2]`. Returns the columns that moved.
pub fn apply_offgrid_step(
    offsets: &mut GridOffsets,
    grad_beta: &[f64],
    grad_phi: Option<&[f64]>,
    interval: f64,
    config: &OffgridStepConfig,
    iteration: usize,
) -> Vec<usize> {
    let half = interval / 2.0;
    let beta_step = interval * config.beta_step_fraction;
    let phi_step = config.phi_step(iteration);
    let mut changed = Vec::new();
    for l in 0..offsets.beta.len() {
        let old_b = offsets.beta[l];
        let old_e = offsets.elevation[l];
        offsets.beta[l] = (old_b + beta_step * sign(grad_beta[l])).clamp(-half, half);
        if let Some(gp) = grad_phi {
            offsets.elevation[l] = (old_e + phi_step * sign(gp[l])).clamp(0.0, FRAC_PI_2);
        }
        if offsets.beta[l] != old_b || offsets.elevation[l] != old_e {
            changed.push(l);
        }
    }
    changed
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::generate_pilots_seeded;
    use crate::steering::build_dictionary;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Case {
        geometry: ArrayGeometry,
        grid: AngleGrid,
        offsets: GridOffsets,
        pilots: CMat,
        y: CVec,
        mean: CVec,
        cov: CMat,
        alpha: f64,
    }

    fn case(seed: u64, planar: bool) -> Case {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let geometry = if planar {
            ArrayGeometry::rectangular(3, 2, 0.5, 0.5).unwrap()
        } else {
            ArrayGeometry::ula(6, 0.5).unwrap()
        };
        let l = 5;
        let grid = AngleGrid::uniform(&geometry, l).unwrap();
        let mut offsets = GridOffsets::zeros(l);
        for i in 0..l {
            offsets.beta[i] = (rng.random::<f64>() - 0.5) * grid.interval;
            if planar {
                offsets.elevation[i] = rng.random::<f64>() * FRAC_PI_2;
            }
        }
        let mut c = || Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
        let pilots = generate_pilots_seeded(4, geometry.n_antennas(), 1.0, seed);
        let y = CVec::from_fn(4, |_, _| c());
        let mean = CVec::from_fn(l, |_, _| c());
        let b = CMat::from_fn(l, l, |_, _| c());
        let cov = b.adjoint() * &b * Complex64::new(0.1, 0.0);
        Case {
            geometry,
            grid,
            offsets,
            pilots,
            y,
            mean,
            cov,
            alpha: 1.7,
        }
    }

    fn objective(c: &Case, off: &GridOffsets) -> f64 {
        let phi = &c.pilots * build_dictionary(&c.geometry, &c.grid, off);
        data_fit_objective(&phi, &c.y, &c.mean, &c.cov, c.alpha)
    }

    fn grad(c: &Case, wrt: AngleParam) -> Vec<f64> {
        let phi = &c.pilots * build_dictionary(&c.geometry, &c.grid, &c.offsets);
        objective_grad(
            &GradientInputs {
                geometry: &c.geometry,
                grid: &c.grid,
                offsets: &c.offsets,
                pilots: &c.pilots,
                phi: &phi,
                y: &c.y,
                mean: &c.mean,
                cov: &c.cov,
                alpha: c.alpha,
            },
            wrt,
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn gradients_match_central_differences(seed in 0u64..10_000, planar in any::<bool>()) {
            let c = case(seed, planar);
            let h = 1e-6;
            for wrt in [AngleParam::Azimuth, AngleParam::Elevation] {
                let g = grad(&c, wrt);
                for l in 0..c.grid.len() {
                    let mut up = c.offsets.clone();
                    let mut dn = c.offsets.clone();
                    match wrt {
                        AngleParam::Azimuth => { up.beta[l] += h; dn.beta[l] -= h; }
                        AngleParam::Elevation => { up.elevation[l] += h; dn.elevation[l] -= h; }
                    }
                    let fd = (objective(&c, &up) - objective(&c, &dn)) / (2.0 * h);
                    if wrt == AngleParam::Elevation && !planar {
                        prop_assert_eq!(g[l], 0.0);
                    } else {
                        prop_assert!((g[l] - fd).abs() <= 1e-5 * fd.abs().max(1.0), "{} vs {}", g[l], fd);
                    }
                }
            }
        }
    }

    #[test]
    fn zero_posterior_gives_zero_gradient() {
        let mut c = case(3, true);
        c.mean.fill(Complex64::new(0.0, 0.0));
        c.cov.fill(Complex64::new(0.0, 0.0));
        assert!(grad(&c, AngleParam::Azimuth).iter().all(|g| *g == 0.0));
        assert!(grad(&c, AngleParam::Elevation).iter().all(|g| *g == 0.0));
    }

    #[test]
    fn zenith_elevation_kills_azimuth_gradient() {
        let mut c = case(4, true);
        c.offsets.elevation = vec![FRAC_PI_2; 5];
        for g in grad(&c, AngleParam::Azimuth) {
            assert!(g.abs() < 1e-12);
        }
    }

    #[test]
    fn steps_follow_sign_and_clamp() {
        let cfg = OffgridStepConfig::default();
        let r = 0.1;
        let mut off = GridOffsets::zeros(3);
        off.beta[2] = r / 2.0;
        off.elevation[1] = FRAC_PI_2;
        let changed = apply_offgrid_step(&mut off, &[0.0, -2.0, 5.0], Some(&[0.0, 1.0, 1.0]), r, &cfg, 0);
        assert_eq!(off.beta, vec![0.0, -r / 100.0, r / 2.0]);
        assert_eq!(off.elevation[0], 0.0);
        assert_eq!(off.elevation[1], FRAC_PI_2);
        assert!((off.elevation[2] - PI / 36.0).abs() < 1e-15);
        assert_eq!(changed, vec![1, 2]);
    }

    #[test]
    fn phi_step_decays_to_floor() {
        let cfg = OffgridStepConfig::default();
        assert_eq!(cfg.phi_step(0), PI / 36.0);
        assert!((cfg.phi_step(10) - PI / 36.0 * 0.98f64.powi(10)).abs() < 1e-15);
        assert_eq!(cfg.phi_step(100_000), PI / 36.0 * 0.001);
    }

    #[test]
    fn decay_bounds_are_enforced() {
        let bad = OffgridStepConfig {
            decay: 0.9,
            ..OffgridStepConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(OffgridStepConfig::default().validate().is_ok());
    }
}

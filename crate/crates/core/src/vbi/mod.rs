//! Alternating variational inference for joint channel estimation and user
//! grouping.
//!
//! Every user's angular-domain coefficients are split into a common part
//! whose precisions `γ*_g` are shared by the members of a group and an
//! individual part with per-user precisions `γᵛ_k` scaled by `ρ`. Group
//! memberships are latent one-hot vectors with posterior probabilities `φ̂`.
//! The five posterior blocks (noise precision, coefficients, common
//! precisions, individual precisions, memberships) are refreshed in turn by
//! their closed-form coordinate-ascent solutions; optional off-grid
//! refinement then nudges every user's dictionary angles.

mod elbo;
mod engine;
mod sensing;
mod state;
mod updates;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::offgrid::OffgridStepConfig;

pub use elbo::{compute_elbo, ElboTerms};
pub use engine::{
    extract_groups, reconstruct_channels, run_inference, run_inference_with, write_snapshot, GroupExtraction,
    InferenceOutput, PosteriorSummary,
};
pub use sensing::UserSensing;
pub use state::{stacked_covariance, GammaBlock, UserPosterior, VariationalState};
pub use updates::{
    init_state, softmax, update_alpha, update_gamma_star, update_gamma_v, update_w, update_z, SolveReport,
};

/// Which parts of the two-component model are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Common plus individual components with `G` groups.
    General,
    /// Common component only; the individual part is removed from the model.
    GroupOnly,
    /// Common component only with a single group shared by every user.
    Common,
}

impl Mode {
    pub fn has_individual(self) -> bool {
        matches!(self, Mode::General)
    }
}

/// Shape of the individual-precision posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GammaVShape {
    /// `a + K`.
    Pooled,
    /// `a + 1`, the exact coordinate-ascent solution for a per-user precision.
    PerUser,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Gamma prior shape shared by every precision.
    pub a: f64,
    /// Gamma prior rate shared by every precision.
    pub b: f64,
    /// Scale of the individual prior covariance, in `(0, 1)`.
    pub rho: f64,
    /// Group budget `G`.
    pub n_groups: usize,
    /// Grid size `L̂`; `None` uses one point per antenna.
    pub grid_points: Option<usize>,
    pub max_iters: usize,
    /// Relative change of every `μ_k` below which the iteration stops.
    pub tol: f64,
    pub mode: Mode,
    /// Off-grid refinement; `None` keeps the dictionary on the grid.
    pub offgrid: Option<OffgridStepConfig>,
    pub gamma_v_shape: GammaVShape,
    /// Fraction of the peak coefficient energy an atom needs to enter a support set.
    pub support_threshold: f64,
    /// Upper clamp applied to precision means before they enter the solve.
    pub precision_cap: f64,
    /// Seed for the random parts of the initialisation.
    pub init_seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            a: 1e-4,
            b: 1e-4,
            rho: 1e-3,
            n_groups: 2,
            grid_points: None,
            max_iters: 500,
            tol: 1e-4,
            mode: Mode::General,
            offgrid: None,
            gamma_v_shape: GammaVShape::PerUser,
            support_threshold: 0.01,
            precision_cap: 1e12,
            init_seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.b > 0.0) {
            return Err(Error::Config(format!("gamma prior needs a, b > 0 (got {}, {})", self.a, self.b)));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Config(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        if self.n_groups == 0 {
            return Err(Error::Config("group budget must be at least 1".into()));
        }
        if self.grid_points == Some(0) {
            return Err(Error::Config("grid needs at least one point".into()));
        }
        if !(self.tol >= 0.0) || !(self.support_threshold >= 0.0 && self.support_threshold <= 1.0) {
            return Err(Error::Config("tol and support threshold must be non-negative".into()));
        }
        if let Some(cfg) = &self.offgrid {
            cfg.validate()?;
        }
        Ok(())
    }

    /// Group count actually used by the engine.
    pub fn effective_groups(&self) -> usize {
        match self.mode {
            Mode::Common => 1,
            _ => self.n_groups,
        }
    }
}

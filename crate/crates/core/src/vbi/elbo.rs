//! Evidence lower bound `U = E_q[ln p(Y, Θ)] − E_q[ln q(Θ)]`.

use std::f64::consts::PI;

use serde::Serialize;

use super::sensing::UserSensing;
use super::state::{GammaBlock, VariationalState};
use super::updates::expected_residual;
use super::Hyperparams;
use crate::error::{Error, Result};
use crate::linalg::CVec;
use crate::special::{gamma_entropy, gamma_prior_expectation};

/// The objective split into its expectation and entropy terms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ElboTerms {
    pub likelihood: f64,
    pub common_prior: f64,
    pub individual_prior: f64,
    pub precision_priors: f64,
    pub assignment_prior: f64,
    pub gaussian_entropy: f64,
    pub precision_entropy: f64,
    pub assignment_entropy: f64,
}

impl ElboTerms {
    pub fn total(&self) -> f64 {
        self.likelihood
            + self.common_prior
            + self.individual_prior
            + self.precision_priors
            + self.assignment_prior
            + self.gaussian_entropy
            + self.precision_entropy
            + self.assignment_entropy
    }

    fn check(&self) -> Result<()> {
        let named = [
            ("likelihood", self.likelihood),
            ("common prior", self.common_prior),
            ("individual prior", self.individual_prior),
            ("precision priors", self.precision_priors),
            ("assignment prior", self.assignment_prior),
            ("gaussian entropy", self.gaussian_entropy),
            ("precision entropy", self.precision_entropy),
            ("assignment entropy", self.assignment_entropy),
        ];
        for (name, v) in named {
            if !v.is_finite() {
                return Err(Error::numerical(name, format!("objective term evaluated to {v}")));
            }
        }
        Ok(())
    }
}

fn block_prior_and_entropy(block: &GammaBlock, hyper: &Hyperparams) -> (f64, f64) {
    let mut prior = 0.0;
    let mut ent = 0.0;
    for i in 0..block.len() {
        prior += gamma_prior_expectation(hyper.a, hyper.b, block.shape[i], block.rate[i]);
        ent += gamma_entropy(block.shape[i], block.rate[i]);
    }
    (prior, ent)
}

/// Evaluate the objective at the current state.
pub fn compute_elbo(
    state: &VariationalState,
    sensing: &[UserSensing],
    received: &[CVec],
    hyper: &Hyperparams,
) -> Result<ElboTerms> {
    let l = state.n_grid;
    let ln_pi = PI.ln();
    let t = received.first().map_or(0, CVec::len) as f64;
    let alpha_mean = state.alpha_mean();
    let alpha_log = state.alpha.log_mean(0);
    let mut terms = ElboTerms::default();

    for ((u, s), y) in state.users.iter().zip(sensing).zip(received) {
        terms.likelihood += -t * ln_pi + t * alpha_log - alpha_mean * expected_residual(s, y, u);
        let blocks = u.blocks() as f64;
        terms.gaussian_entropy += blocks * l as f64 * (ln_pi + 1.0) + u.log_det;
    }

    let star_log: Vec<Vec<f64>> = state
        .gamma_star
        .iter()
        .map(|b| (0..l).map(|i| b.log_mean(i)).collect())
        .collect();
    for (k, u) in state.users.iter().enumerate() {
        for g in 0..state.n_groups {
            let p = state.assignment[k][g];
            if p == 0.0 {
                continue;
            }
            let b = &state.gamma_star[g];
            let mut acc = 0.0;
            for i in 0..l {
                acc += -ln_pi + star_log[g][i] - b.mean(i) * u.common_energy(i);
            }
            terms.common_prior += p * acc;
            terms.assignment_entropy -= p * p.ln();
        }
        terms.assignment_prior -= (state.n_groups as f64).ln();
    }

    if state.has_individual() {
        let ln_rho = hyper.rho.ln();
        for (u, b) in state.users.iter().zip(&state.gamma_v) {
            for i in 0..l {
                terms.individual_prior +=
                    -ln_pi - ln_rho + b.log_mean(i) - b.mean(i) * u.individual_energy(i) / hyper.rho;
            }
        }
    }

    for block in std::iter::once(&state.alpha)
        .chain(state.gamma_star.iter())
        .chain(state.gamma_v.iter())
    {
        let (p, e) = block_prior_and_entropy(block, hyper);
        terms.precision_priors += p;
        terms.precision_entropy += e;
    }

    terms.check()?;
    Ok(terms)
}

use serde::Serialize;

use crate::linalg::{CMat, CVec};
use crate::steering::GridOffsets;

/// Independent gamma posteriors `Gamma(shape_i, rate_i)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaBlock {
    pub shape: Vec<f64>,
    pub rate: Vec<f64>,
}

impl GammaBlock {
    pub fn filled(n: usize, shape: f64, rate: f64) -> Self {
        GammaBlock {
            shape: vec![shape; n],
            rate: vec![rate; n],
        }
    }

    pub fn len(&self) -> usize {
        self.shape.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shape.is_empty()
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.shape[i] / self.rate[i]
    }

    pub fn means(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.mean(i)).collect()
    }

    /// `E[ln γ] = Ψ(shape) - ln(rate)`.
    pub fn log_mean(&self, i: usize) -> f64 {
        crate::special::digamma(self.shape[i]) - self.rate[i].ln()
    }
}

/// Gaussian posterior of one user's stacked coefficients `w̄_k = [wˢ_k; wᵛ_k]`.
///
/// Only the moments the updates and the objective consume are stored: the
/// stacked mean, the diagonal of the stacked covariance, its log-determinant,
/// and the covariance `Σ_k` of the combined coefficients `wˢ_k + wᵛ_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct UserPosterior {
    /// `μ̄_k`, length `blocks · L̂`.
    pub mean_stacked: CVec,
    /// Diagonal of `Σ̄_k`, length `blocks · L̂`.
    pub var_stacked: Vec<f64>,
    /// `ln det Σ̄_k`.
    pub log_det: f64,
    /// `Σ_k`, sum of the four L̂ × L̂ blocks of `Σ̄_k`.
    pub cov: CMat,
    /// Prior precisions of the common and individual parts used in the last
    /// solve; the individual one is empty for single-block models.
    pub prior_prec_common: Vec<f64>,
    pub prior_prec_individual: Vec<f64>,
}

impl UserPosterior {
    pub fn n_grid(&self) -> usize {
        self.cov.nrows()
    }

    pub fn blocks(&self) -> usize {
        self.mean_stacked.len() / self.n_grid()
    }

    /// `μ_k = μ̄_{k,1} + μ̄_{k,2}`.
    pub fn mean(&self) -> CVec {
        let l = self.n_grid();
        let mut m = self.mean_stacked.rows(0, l).clone_owned();
        if self.blocks() == 2 {
            m += self.mean_stacked.rows(l, l);
        }
        m
    }

    /// `|μ̄_{k,1,l}|² + Σ̄_{k,1,l}`.
    pub fn common_energy(&self, l: usize) -> f64 {
        self.mean_stacked[l].norm_sqr() + self.var_stacked[l]
    }

    /// `|μ̄_{k,2,l}|² + Σ̄_{k,2,l}`.
    pub fn individual_energy(&self, l: usize) -> f64 {
        let i = self.n_grid() + l;
        self.mean_stacked[i].norm_sqr() + self.var_stacked[i]
    }
}

/// Full stacked covariance `Σ̄_k` reconstructed from the combined covariance.
///
/// Given `w = wˢ + wᵛ`, the split is Gaussian with mean `d₂/(d₁+d₂) · w` and
/// variance `1/(d₁+d₂)` per atom, where `d₁`, `d₂` are the prior precisions.
/// This yields the four blocks without a `2L̂` inversion.
pub fn stacked_covariance(post: &UserPosterior) -> CMat {
    let l = post.n_grid();
    if post.blocks() == 1 {
        return post.cov.clone();
    }
    let mut out = CMat::zeros(2 * l, 2 * l);
    let (r1, r2, v): (Vec<f64>, Vec<f64>, Vec<f64>) = {
        let mut r1 = Vec::with_capacity(l);
        let mut r2 = Vec::with_capacity(l);
        let mut v = Vec::with_capacity(l);
        for i in 0..l {
            let (d1, d2) = (post.prior_prec_common[i], post.prior_prec_individual[i]);
            let d = d1 + d2;
            r1.push(d2 / d);
            r2.push(d1 / d);
            v.push(1.0 / d);
        }
        (r1, r2, v)
    };
    for j in 0..l {
        for i in 0..l {
            let c = post.cov[(i, j)];
            out[(i, j)] = c * (r1[i] * r1[j]);
            out[(i, l + j)] = c * (r1[i] * r2[j]);
            out[(l + i, j)] = c * (r2[i] * r1[j]);
            out[(l + i, l + j)] = c * (r2[i] * r2[j]);
        }
        out[(j, j)] += v[j];
        out[(l + j, l + j)] += v[j];
        out[(j, l + j)] -= v[j];
        out[(l + j, j)] -= v[j];
    }
    out
}

/// All posterior parameters of one inference run.
#[derive(Debug, Clone)]
pub struct VariationalState {
    pub n_grid: usize,
    pub n_groups: usize,
    /// Noise precision posterior `Gamma(a_α, b_α)` (single entry).
    pub alpha: GammaBlock,
    pub users: Vec<UserPosterior>,
    /// Common precisions, one block of length L̂ per group.
    pub gamma_star: Vec<GammaBlock>,
    /// Individual precisions, one block per user; empty without an individual part.
    pub gamma_v: Vec<GammaBlock>,
    /// Membership probabilities `φ̂_{k,g}`, one row per user.
    pub assignment: Vec<Vec<f64>>,
    /// Off-grid azimuth gaps and elevations per user.
    pub offsets: Vec<GridOffsets>,
}

impl VariationalState {
    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn has_individual(&self) -> bool {
        !self.gamma_v.is_empty()
    }

    pub fn alpha_mean(&self) -> f64 {
        self.alpha.mean(0)
    }

    /// `γ̂ˢ_{k,l} = Σ_g φ̂_{k,g} γ̂*_{g,l}`.
    pub fn common_precision(&self, k: usize, cap: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n_grid];
        for (g, block) in self.gamma_star.iter().enumerate() {
            let w = self.assignment[k][g];
            if w == 0.0 {
                continue;
            }
            for (l, o) in out.iter_mut().enumerate() {
                *o += w * block.mean(l).min(cap);
            }
        }
        out
    }

    pub fn means(&self) -> Vec<CVec> {
        self.users.iter().map(UserPosterior::mean).collect()
    }
}

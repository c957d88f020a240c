//! Per-user measurement matrices `Φ_k = X A(β_k, φ_k)` and the quantities
//! derived from them that every update needs.

use num_complex::Complex64;

use crate::linalg::{gram, CMat, CVec};
use crate::steering::{build_dictionary, steering, AngleGrid, ArrayGeometry, GridOffsets};

#[derive(Debug, Clone)]
pub struct UserSensing {
    /// `A(β_k, φ_k)`, N × L̂.
    pub dictionary: CMat,
    /// `Φ_k`, T × L̂.
    pub phi: CMat,
    /// `Φ_kᴴ Φ_k`.
    pub gram: CMat,
    /// `Φ_kᴴ y_k`.
    pub proj: CVec,
}

impl UserSensing {
    pub fn new(geometry: &ArrayGeometry, grid: &AngleGrid, offsets: &GridOffsets, pilots: &CMat, y: &CVec) -> Self {
        let dictionary = build_dictionary(geometry, grid, offsets);
        let phi = pilots * &dictionary;
        let gram = gram(&phi);
        let proj = phi.ad_mul(y);
        UserSensing {
            dictionary,
            phi,
            gram,
            proj,
        }
    }

    pub fn n_grid(&self) -> usize {
        self.phi.ncols()
    }

    /// Recompute the columns listed in `changed` after their offsets moved.
    pub fn refresh_columns(
        &mut self,
        changed: &[usize],
        offsets: &GridOffsets,
        geometry: &ArrayGeometry,
        grid: &AngleGrid,
        pilots: &CMat,
        y: &CVec,
    ) {
        if changed.is_empty() {
            return;
        }
        for &l in changed {
            let a = steering(geometry, grid.points[l] + offsets.beta[l], offsets.elevation[l]);
            let col = pilots * &a;
            self.proj[l] = col.dotc(y);
            self.dictionary.set_column(l, &a);
            self.phi.set_column(l, &col);
        }
        let n = self.n_grid();
        let mut is_changed = vec![false; n];
        for &l in changed {
            is_changed[l] = true;
        }
        for &l in changed {
            let cl = self.phi.column(l);
            for j in 0..n {
                if is_changed[j] && j > l {
                    continue;
                }
                let v: Complex64 = self.phi.column(j).dotc(&cl);
                self.gram[(j, l)] = v;
                self.gram[(l, j)] = v.conj();
            }
        }
    }
}

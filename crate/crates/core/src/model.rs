//! Serializable fitted-model bundle: sparse linear coefficients plus the
//! spline bases, coefficients and centering constants needed to evaluate the
//! additive components at new points. This is the payload of the CLI's fit
//! JSON and the input to prediction.

use crate::solver::FitResult;
use crate::spline::{CovariateBasis, DesignMatrix};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// One nonzero linear coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaEntry {
    pub column: String,
    pub index: usize,
    pub value: f64,
}

/// One additive component: its basis and centered coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedComponent {
    pub column: String,
    pub basis: CovariateBasis,
    /// Coefficients of the effective (dropped-first) basis functions.
    pub coefficients: Vec<f64>,
    /// Training-sample mean removed from this component.
    pub mean_offset: f64,
}

/// A fitted model in portable form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub alpha: f64,
    pub penalty: crate::penalty::PenaltySpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_selected: Option<f64>,
    pub y_column: String,
    pub x_columns: Vec<String>,
    pub z_columns: Vec<String>,
    /// Overall level (intercept plus component means).
    pub mu_hat: f64,
    /// Sparse nonzero linear coefficients.
    pub beta: Vec<BetaEntry>,
    pub components: Vec<SavedComponent>,
}

impl SavedModel {
    pub fn from_fit(
        fit: &FitResult,
        design: &DesignMatrix,
        y_column: String,
        x_columns: Vec<String>,
        z_columns: Vec<String>,
        lambda_selected: Option<f64>,
    ) -> Result<Self> {
        if x_columns.len() != fit.beta.len() {
            return Err(Error::Dim("x column names do not match coefficient count".into()));
        }
        if z_columns.len() != design.d() {
            return Err(Error::Dim("z column names do not match design".into()));
        }
        let j = design.j_effective();
        let beta = fit
            .active_set
            .iter()
            .map(|&idx| BetaEntry {
                column: x_columns[idx].clone(),
                index: idx,
                value: fit.beta[idx],
            })
            .collect();
        let components = (0..design.d())
            .map(|c| SavedComponent {
                column: z_columns[c].clone(),
                basis: design.bases[c].clone(),
                coefficients: (0..j).map(|k| fit.xi[1 + c * j + k]).collect(),
                mean_offset: fit.component_means[c],
            })
            .collect();
        Ok(Self {
            alpha: fit.config.alpha.value(),
            penalty: fit.config.penalty,
            lambda_selected,
            y_column,
            x_columns,
            z_columns,
            mu_hat: fit.mu_hat,
            beta,
            components,
        })
    }

    /// Centered additive component value `g_j(z)` for component `c`.
    pub fn component_value(&self, c: usize, z: f64) -> f64 {
        let comp = &self.components[c];
        let vals = comp.basis.eval(z);
        let mut acc = 0.0;
        for (v, coef) in vals.iter().zip(&comp.coefficients) {
            acc += v * coef;
        }
        acc - comp.mean_offset
    }

    /// Predicted conditional expectile for one row (`x_row` aligned with
    /// `x_columns`, `z_row` with `z_columns`; out-of-range `z` clamps).
    pub fn predict_row(&self, x_row: &[f64], z_row: &[f64]) -> Result<f64> {
        if x_row.len() != self.x_columns.len() || z_row.len() != self.z_columns.len() {
            return Err(Error::Dim("predict_row: column counts do not match model".into()));
        }
        let mut acc = self.mu_hat;
        for entry in &self.beta {
            acc += entry.value * x_row[entry.index];
        }
        for (c, &z) in z_row.iter().enumerate() {
            acc += self.component_value(c, z);
        }
        Ok(acc)
    }

    /// True when any entry of `z_row` falls outside the training range.
    pub fn z_out_of_range(&self, z_row: &[f64]) -> bool {
        self.components
            .iter()
            .zip(z_row)
            .any(|(comp, &z)| comp.basis.transform.out_of_range(z))
    }
}

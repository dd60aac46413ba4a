//! The transport plan: a dense nonnegative matrix of match masses.

use ndarray::Array2;

use crate::cost::CostMatrix;
use crate::error::{MatchError, Result};
use crate::numeric::kahan_sum;

/// Nonnegative `np x m` matrix whose entry `(i, j)` is the mass matching
/// prediction `i` to column `j`. When the instance carries a background, the
/// background is the last column.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    values: Array2<f64>,
}

impl TransportPlan {
    pub fn from_array(values: Array2<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(MatchError::EmptyInput("transport plan"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(MatchError::InvalidArgument(
                "plan entries must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { values })
    }

    pub fn zeros(np: usize, cols: usize) -> Self {
        Self {
            values: Array2::zeros((np, cols)),
        }
    }

    pub fn np(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, mass: f64) {
        self.values[(i, j)] = mass;
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.values
            .rows()
            .into_iter()
            .map(|r| kahan_sum(r.iter().copied()))
            .collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        self.values
            .columns()
            .into_iter()
            .map(|c| kahan_sum(c.iter().copied()))
            .collect()
    }

    pub fn total_mass(&self) -> f64 {
        kahan_sum(self.values.iter().copied())
    }

    /// `<P, C>`, the transport part of the objective.
    pub fn transport_cost(&self, cost: &CostMatrix) -> f64 {
        assert_eq!(
            self.values.dim(),
            cost.values().dim(),
            "plan and cost shapes differ"
        );
        kahan_sum(
            self.values
                .iter()
                .zip(cost.values().iter())
                .map(|(p, c)| p * c),
        )
    }

    /// Column index of the largest entry in each row; ties go to the lowest
    /// column index.
    pub fn row_argmax(&self) -> Vec<usize> {
        self.values
            .rows()
            .into_iter()
            .map(|r| {
                let mut best = 0;
                for (j, v) in r.iter().enumerate() {
                    if *v > r[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    /// Combined l1 marginal residual `|P1 - alpha|_1 + |1'P - beta|_1`.
    pub fn marginal_residual(&self, alpha: &[f64], beta: &[f64]) -> f64 {
        assert_eq!(alpha.len(), self.np(), "alpha length");
        assert_eq!(beta.len(), self.cols(), "beta length");
        let rows = self.row_sums();
        let cols = self.col_sums();
        kahan_sum(
            rows.iter()
                .zip(alpha)
                .map(|(r, a)| (r - a).abs())
                .chain(cols.iter().zip(beta).map(|(c, b)| (c - b).abs())),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn sums_and_cost() {
        let p = TransportPlan::from_array(array![[0.25, 0.25], [0.5, 0.0]]).unwrap();
        assert_eq!(p.row_sums(), vec![0.5, 0.5]);
        assert_eq!(p.col_sums(), vec![0.75, 0.25]);
        assert_eq!(p.total_mass(), 1.0);
        let c = CostMatrix::without_background(array![[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert!((p.transport_cost(&c) - (0.25 + 0.5 + 1.5)).abs() < 1e-15);
    }

    #[test]
    fn row_argmax_breaks_ties_low() {
        let p = TransportPlan::from_array(array![[0.2, 0.2, 0.1]]).unwrap();
        assert_eq!(p.row_argmax(), vec![0]);
    }

    #[test]
    fn negative_entries_rejected() {
        assert!(TransportPlan::from_array(array![[0.5, -0.1]]).is_err());
    }
}

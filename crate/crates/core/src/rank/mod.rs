//! Ranking algorithms: Lasso solution-path entry times and least-squares
//! coefficients.

mod bivariate;
mod lars;
mod ls;
mod plan;
mod quad;

pub use bivariate::{bivariate_cells, bivariate_entry_times};
pub use lars::{
    lasso_entry_times, lasso_entry_times_with, lasso_pair_entry_times, DegeneratePolicy,
    PathOptions,
};
pub use ls::{least_squares, least_squares_gram, LsCoefficients};
pub use plan::PathPlan;
pub use quad::{
    is_degenerate_quad_gram, quad_cells, quad_degenerate_path, quad_entry_times, quad_gram,
};

/// Largest lambda at which each variable is nonzero along the Lasso path.
#[derive(Debug, Clone, PartialEq)]
pub struct EntryTimes(Vec<f64>);

impl EntryTimes {
    pub fn new(values: Vec<f64>) -> Self {
        EntryTimes(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Index<usize> for EntryTimes {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// A polyhedral cone on which every entry time is a linear function.
///
/// The cell is `{h : face . h >= 0 for every face}` and the entry time of
/// variable k on it is `entries[k] . h`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearCell<const D: usize> {
    pub faces: Vec<[f64; D]>,
    pub entries: Vec<[f64; D]>,
}

impl<const D: usize> LinearCell<D> {
    /// Smallest face slack at `h`; nonnegative inside the cell.
    pub fn slack(&self, h: &[f64; D]) -> f64 {
        self.faces
            .iter()
            .map(|f| dot(f, h))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn evaluate(&self, h: &[f64; D]) -> Vec<f64> {
        self.entries.iter().map(|e| dot(e, h)).collect()
    }
}

pub(crate) fn dot<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

//! Game data model: heterogeneous and quadratic games, opinion profiles,
//! symmetry checks and conversions between models.

mod convert;
mod heterogeneous;
mod profile;
mod quadratic;
pub mod random;

pub use convert::{fj_to_quadratic, quadratic_to_heterogeneous};
pub use heterogeneous::{HeterogeneousGame, InternalCost, PairCost, Person};
pub use profile::OpinionProfile;
pub use quadratic::QuadraticGame;

use nalgebra::DVector;

use crate::error::Result;

/// Outcome of a structural symmetry check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymmetryReport {
    Symmetric,
    /// First ordered pair `(i, j)` whose cost differs from `(j, i)`.
    Violation(usize, usize),
}

impl SymmetryReport {
    pub fn is_symmetric(self) -> bool {
        self == SymmetryReport::Symmetric
    }

    pub fn into_result(self) -> Result<()> {
        match self {
            SymmetryReport::Symmetric => Ok(()),
            SymmetryReport::Violation(i, j) => Err(crate::Error::Asymmetric(i, j)),
        }
    }
}

/// Costs shared by every game model.
pub trait OpinionGame {
    fn dims(&self) -> Vec<usize>;

    fn n(&self) -> usize {
        self.dims().len()
    }

    fn person_cost(&self, i: usize, z: &OpinionProfile) -> Result<f64>;

    /// Gradient of `c_i` with respect to the own block `z_i`.
    fn person_gradient(&self, i: usize, z: &OpinionProfile) -> Result<DVector<f64>>;

    fn check_symmetric(&self) -> SymmetryReport;

    /// `sum_i c_i(z)`, summed in person order.
    fn social_cost(&self, z: &OpinionProfile) -> Result<f64> {
        let mut total = 0.0;
        for i in 0..self.n() {
            total += self.person_cost(i, z)?;
        }
        Ok(total)
    }
}

//! Points of `G/Γ` as seen by the measure and cocycle machinery.

use crate::error::Result;
use crate::grouplin::RealGroupElement;
use crate::lattices::UnimodularLattice;

/// A point of SL(m,ℝ)/SL(m,ℤ) that can be translated and measured for depth.
pub trait HomogeneousPoint: Clone + Send + Sync {
    fn dim(&self) -> usize;

    /// Cusp depth `max(0, −log systole)`.
    fn depth(&self) -> Result<f64>;

    fn systole(&self) -> Result<f64>;

    /// The point `g·x`.
    fn translate(&self, g: &RealGroupElement) -> Result<Self>;

    /// Row-major entries of a representative.
    fn representative(&self) -> Vec<f64>;
}

impl HomogeneousPoint for UnimodularLattice {
    fn dim(&self) -> usize {
        UnimodularLattice::dim(self)
    }

    fn depth(&self) -> Result<f64> {
        UnimodularLattice::depth(self)
    }

    fn systole(&self) -> Result<f64> {
        UnimodularLattice::systole(self)
    }

    fn translate(&self, g: &RealGroupElement) -> Result<Self> {
        UnimodularLattice::translate(self, g)
    }

    fn representative(&self) -> Vec<f64> {
        let b = self.reduced();
        let m = b.nrows();
        (0..m * m).map(|k| b[(k / m, k % m)]).collect()
    }
}

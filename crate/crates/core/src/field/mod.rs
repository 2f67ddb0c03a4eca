//! Periodic-box discretization: grid, fields, spectral operators and snapshots.

mod grid;
pub mod ops;
mod scalar;
pub mod snapshot;
mod tensor;
mod vector;

pub use grid::Grid;
pub use scalar::{FieldData, Representation, ScalarField};
pub use tensor::{Mat3, TensorField3};
pub use vector::VectorField;

/// Compensated (Neumaier) sum in iteration order, so means are independent of
/// thread count and accurate to a few ulps.
pub(crate) fn ordered_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut carry = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let vals = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(ordered_sum(vals.iter().copied()), 2.0);
    }
}

use std::sync::Arc;

use ndarray::{Array3, Zip};

use super::grid::Grid;
use super::scalar::{assert_same_grid, Representation, ScalarField};
use crate::error::Result;

/// Three scalar components on one grid, always in a common representation.
#[derive(Clone, Debug)]
pub struct VectorField {
    components: [ScalarField; 3],
}

impl VectorField {
    /// Components must share a grid; they are brought to the representation of the first.
    pub fn new(components: [ScalarField; 3]) -> Result<Self> {
        let grid = components[0].grid().clone();
        for c in &components[1..] {
            grid.check_same(c.grid())?;
        }
        let target = components[0].representation();
        let [a, b, c] = components;
        Ok(VectorField {
            components: [a, b.transform(target), c.transform(target)],
        })
    }

    pub(crate) fn from_parts(components: [ScalarField; 3]) -> Self {
        debug_assert!(components
            .iter()
            .all(|c| c.grid().same_as(components[0].grid())));
        VectorField { components }
    }

    pub fn zeros(grid: &Arc<Grid>) -> Self {
        VectorField::from_parts([
            ScalarField::zeros(grid),
            ScalarField::zeros(grid),
            ScalarField::zeros(grid),
        ])
    }

    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(f64, f64, f64) -> [f64; 3]) -> Self {
        let shape = grid.physical_shape();
        let mut comps = [
            Array3::zeros(shape),
            Array3::zeros(shape),
            Array3::zeros(shape),
        ];
        for i in 0..shape.0 {
            for j in 0..shape.1 {
                for k in 0..shape.2 {
                    let v = f(grid.coordinate(i), grid.coordinate(j), grid.coordinate(k));
                    for d in 0..3 {
                        comps[d][[i, j, k]] = v[d];
                    }
                }
            }
        }
        let [a, b, c] = comps;
        VectorField::from_parts([
            ScalarField::from_values(grid, a),
            ScalarField::from_values(grid, b),
            ScalarField::from_values(grid, c),
        ])
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.components[0].grid()
    }

    pub fn representation(&self) -> Representation {
        self.components[0].representation()
    }

    pub fn component(&self, i: usize) -> &ScalarField {
        &self.components[i]
    }

    pub fn components(&self) -> &[ScalarField; 3] {
        &self.components
    }

    pub fn into_components(self) -> [ScalarField; 3] {
        self.components
    }

    pub fn map_components(&self, f: impl Fn(&ScalarField) -> ScalarField) -> VectorField {
        VectorField::from_parts([
            f(&self.components[0]),
            f(&self.components[1]),
            f(&self.components[2]),
        ])
    }

    pub fn transform(&self, target: Representation) -> VectorField {
        self.map_components(|c| c.transform(target))
    }

    pub fn to_spectral(&self) -> VectorField {
        self.map_components(ScalarField::to_spectral)
    }

    pub fn to_physical(&self) -> VectorField {
        self.map_components(ScalarField::to_physical)
    }

    pub fn scaled(&self, factor: f64) -> VectorField {
        self.map_components(|c| c.scaled(factor))
    }

    pub fn add(&self, other: &VectorField) -> VectorField {
        VectorField::from_parts([
            &self.components[0] + &other.components[0],
            &self.components[1] + &other.components[1],
            &self.components[2] + &other.components[2],
        ])
    }

    pub fn sub(&self, other: &VectorField) -> VectorField {
        VectorField::from_parts([
            &self.components[0] - &other.components[0],
            &self.components[1] - &other.components[1],
            &self.components[2] - &other.components[2],
        ])
    }

    /// Pointwise scalar multiple `f v`.
    pub fn times(&self, f: &ScalarField) -> VectorField {
        self.map_components(|c| c * f)
    }

    /// Pointwise `u · v`.
    pub fn dot(&self, other: &VectorField) -> ScalarField {
        assert_same_grid(self.grid(), other.grid());
        let a = self.values();
        let b = other.values();
        let mut out = Array3::zeros(self.grid().physical_shape());
        Zip::from(&mut out)
            .and(&a[0])
            .and(&a[1])
            .and(&b[0])
            .and(&b[1])
            .for_each(|o, &x0, &x1, &y0, &y1| *o = x0 * y0 + x1 * y1);
        Zip::from(&mut out)
            .and(&a[2])
            .and(&b[2])
            .for_each(|o, &x2, &y2| *o += x2 * y2);
        ScalarField::from_values(self.grid(), out)
    }

    /// Pointwise `u × v`.
    pub fn cross(&self, other: &VectorField) -> VectorField {
        let a = self.values();
        let b = other.values();
        let shape = self.grid().physical_shape();
        let mut out = [
            Array3::zeros(shape),
            Array3::zeros(shape),
            Array3::zeros(shape),
        ];
        for d in 0..3 {
            let (p, q) = ((d + 1) % 3, (d + 2) % 3);
            Zip::from(&mut out[d])
                .and(&a[p])
                .and(&a[q])
                .and(&b[p])
                .and(&b[q])
                .for_each(|o, &ap, &aq, &bp, &bq| *o = ap * bq - aq * bp);
        }
        let [x, y, z] = out;
        let g = self.grid();
        VectorField::from_parts([
            ScalarField::from_values(g, x),
            ScalarField::from_values(g, y),
            ScalarField::from_values(g, z),
        ])
    }

    pub fn norm_sq(&self) -> ScalarField {
        self.dot(self)
    }

    /// Point values of all three components.
    pub fn values(&self) -> [Array3<f64>; 3] {
        [
            self.components[0].values().into_owned(),
            self.components[1].values().into_owned(),
            self.components[2].values().into_owned(),
        ]
    }

    /// Largest pointwise Euclidean magnitude.
    pub fn max_magnitude(&self) -> f64 {
        self.norm_sq().max_abs().sqrt()
    }

    /// Largest absolute component value.
    pub fn max_abs(&self) -> f64 {
        self.components
            .iter()
            .map(ScalarField::max_abs)
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mismatched_grids_rejected() {
        let g8 = Grid::periodic(8).unwrap();
        let g16 = Grid::periodic(16).unwrap();
        let r = VectorField::new([
            ScalarField::zeros(&g8),
            ScalarField::zeros(&g16),
            ScalarField::zeros(&g8),
        ]);
        assert!(r.is_err());
    }

    #[test]
    fn components_share_representation() {
        let g = Grid::periodic(8).unwrap();
        let v = VectorField::new([
            ScalarField::zeros(&g).to_spectral(),
            ScalarField::zeros(&g),
            ScalarField::constant(&g, 1.0),
        ])
        .unwrap();
        assert!(v
            .components()
            .iter()
            .all(|c| c.representation() == Representation::Spectral));
    }

    #[test]
    fn cross_and_dot_of_basis() {
        let g = Grid::periodic(8).unwrap();
        let ex = VectorField::from_fn(&g, |_, _, _| [1.0, 0.0, 0.0]);
        let ey = VectorField::from_fn(&g, |_, _, _| [0.0, 1.0, 0.0]);
        let ez = ex.cross(&ey);
        assert_eq!(ez.component(2).mean(), 1.0);
        assert_eq!(ez.component(0).max_abs(), 0.0);
        assert_eq!(ex.dot(&ey).max_abs(), 0.0);
        assert_eq!(ez.norm_sq().mean(), 1.0);
    }
}

use std::sync::Arc;

use ndarray::Array3;

use super::grid::Grid;
use super::scalar::{Representation, ScalarField};
use super::vector::VectorField;
use crate::error::Result;

pub type Mat3 = [[f64; 3]; 3];

/// Rank-2 tensor field; `get(i, j)` is the `(i, j)` component.
///
/// When `symmetric` is set, component `(j, i)` is the same field as `(i, j)`.
#[derive(Clone, Debug)]
pub struct TensorField3 {
    components: [[ScalarField; 3]; 3],
    symmetric: bool,
}

impl TensorField3 {
    pub fn new(components: [[ScalarField; 3]; 3]) -> Result<Self> {
        let grid = components[0][0].grid().clone();
        for row in &components {
            for c in row {
                grid.check_same(c.grid())?;
            }
        }
        let target = components[0][0].representation();
        Ok(TensorField3 {
            components: components.map(|row| row.map(|c| c.transform(target))),
            symmetric: false,
        })
    }

    /// Builds a symmetric tensor from its upper triangle
    /// `[xx, xy, xz, yy, yz, zz]`.
    pub fn symmetric(upper: [ScalarField; 6]) -> Result<Self> {
        let grid = upper[0].grid().clone();
        for c in &upper[1..] {
            grid.check_same(c.grid())?;
        }
        let [xx, xy, xz, yy, yz, zz] = upper;
        Ok(TensorField3 {
            components: [
                [xx, xy.clone(), xz.clone()],
                [xy, yy, yz.clone()],
                [xz, yz, zz],
            ],
            symmetric: true,
        })
    }

    pub(crate) fn from_parts(components: [[ScalarField; 3]; 3], symmetric: bool) -> Self {
        TensorField3 {
            components,
            symmetric,
        }
    }

    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(f64, f64, f64) -> Mat3) -> Self {
        let shape = grid.physical_shape();
        let mut arrays: Vec<Array3<f64>> = (0..9).map(|_| Array3::zeros(shape)).collect();
        for i in 0..shape.0 {
            for j in 0..shape.1 {
                for k in 0..shape.2 {
                    let m = f(grid.coordinate(i), grid.coordinate(j), grid.coordinate(k));
                    for a in 0..3 {
                        for b in 0..3 {
                            arrays[3 * a + b][[i, j, k]] = m[a][b];
                        }
                    }
                }
            }
        }
        let mut it = arrays.into_iter().map(|a| ScalarField::from_values(grid, a));
        let mut next = || it.next().expect("nine components");
        TensorField3 {
            components: [
                [next(), next(), next()],
                [next(), next(), next()],
                [next(), next(), next()],
            ],
            symmetric: false,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.components[0][0].grid()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn representation(&self) -> Representation {
        self.components[0][0].representation()
    }

    pub fn get(&self, i: usize, j: usize) -> &ScalarField {
        &self.components[i][j]
    }

    pub fn map_components(&self, f: impl Fn(&ScalarField) -> ScalarField) -> TensorField3 {
        if self.symmetric {
            let c = &self.components;
            let mapped = [
                f(&c[0][0]),
                f(&c[0][1]),
                f(&c[0][2]),
                f(&c[1][1]),
                f(&c[1][2]),
                f(&c[2][2]),
            ];
            TensorField3::symmetric(mapped).expect("components share a grid")
        } else {
            TensorField3 {
                components: std::array::from_fn(|i| std::array::from_fn(|j| f(&self.components[i][j]))),
                symmetric: false,
            }
        }
    }

    pub fn transform(&self, target: Representation) -> TensorField3 {
        self.map_components(|c| c.transform(target))
    }

    pub fn to_physical(&self) -> TensorField3 {
        self.transform(Representation::Physical)
    }

    pub fn to_spectral(&self) -> TensorField3 {
        self.transform(Representation::Spectral)
    }

    pub fn transpose(&self) -> TensorField3 {
        if self.symmetric {
            return self.clone();
        }
        TensorField3 {
            components: std::array::from_fn(|i| {
                std::array::from_fn(|j| self.components[j][i].clone())
            }),
            symmetric: false,
        }
    }

    pub fn trace(&self) -> ScalarField {
        let s = &self.components[0][0] + &self.components[1][1];
        &s + &self.components[2][2]
    }

    /// Row-major point values, `[3 * i + j]`.
    pub fn values(&self) -> Vec<Array3<f64>> {
        let mut out: Vec<Array3<f64>> = Vec::with_capacity(9);
        for i in 0..3 {
            for j in 0..3 {
                if self.symmetric && j < i {
                    let v = out[3 * j + i].clone();
                    out.push(v);
                } else {
                    out.push(self.components[i][j].values().into_owned());
                }
            }
        }
        out
    }

    /// Evaluates `f` on the 3x3 matrix at every grid point.
    pub fn pointwise(&self, f: impl Fn(&Mat3) -> f64) -> ScalarField {
        let vals = self.values();
        let slices: Vec<&[f64]> = vals
            .iter()
            .map(|a| a.as_slice().expect("standard layout"))
            .collect();
        let grid = self.grid();
        let mut out = Array3::zeros(grid.physical_shape());
        for (p, o) in out.as_slice_mut().expect("standard layout").iter_mut().enumerate() {
            let m: Mat3 = std::array::from_fn(|i| std::array::from_fn(|j| slices[3 * i + j][p]));
            *o = f(&m);
        }
        ScalarField::from_values(grid, out)
    }

    /// Full contraction `A : B = Σ A_ij B_ij`.
    pub fn contract(&self, other: &TensorField3) -> ScalarField {
        let mut acc = ScalarField::zeros(self.grid());
        for i in 0..3 {
            for j in 0..3 {
                acc = &acc + &(&self.components[i][j] * &other.components[i][j]);
            }
        }
        acc
    }

    /// Pointwise `A v`.
    pub fn apply(&self, v: &VectorField) -> VectorField {
        let row = |i: usize| {
            let a = &self.components[i][0] * v.component(0);
            let b = &self.components[i][1] * v.component(1);
            let c = &self.components[i][2] * v.component(2);
            &(&a + &b) + &c
        };
        VectorField::from_parts([row(0), row(1), row(2)])
    }

    /// Largest Frobenius norm over the grid.
    pub fn max_norm(&self) -> f64 {
        self.pointwise(|m| m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt())
            .max_abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_flag_shares_off_diagonals() {
        let g = Grid::periodic(8).unwrap();
        let f = |c: f64| ScalarField::constant(&g, c);
        let t = TensorField3::symmetric([f(1.0), f(2.0), f(3.0), f(4.0), f(5.0), f(6.0)]).unwrap();
        assert!(t.is_symmetric());
        assert_eq!(t.get(1, 0).mean(), t.get(0, 1).mean());
        assert_eq!(t.get(2, 1).mean(), 5.0);
        assert_eq!(t.trace().mean(), 11.0);
        let vals = t.values();
        assert_eq!(vals[3][[0, 0, 0]], 2.0);
    }

    #[test]
    fn pointwise_matrix_access() {
        let g = Grid::periodic(8).unwrap();
        let t = TensorField3::from_fn(&g, |x, _, _| [[x, 1.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 3.0]]);
        let tr = t.pointwise(|m| m[0][0] + m[1][1] + m[2][2]);
        assert!((tr.values()[[1, 0, 0]] - (g.coordinate(1) + 5.0)).abs() < 1e-15);
        assert_eq!(t.transpose().get(1, 0).mean(), 1.0);
    }

    #[test]
    fn rejects_mixed_grids() {
        let a = Grid::periodic(8).unwrap();
        let b = Grid::periodic(16).unwrap();
        let z = |g: &Arc<Grid>| ScalarField::zeros(g);
        assert!(TensorField3::symmetric([z(&a), z(&a), z(&b), z(&a), z(&a), z(&a)]).is_err());
    }
}

use std::borrow::Cow;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use ndarray::{Array3, Zip};
use rustfft::num_complex::Complex64;

use super::grid::Grid;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Physical,
    Spectral,
}

#[derive(Clone, Debug)]
pub enum FieldData {
    Physical(Array3<f64>),
    Spectral(Array3<Complex64>),
}

/// Real scalar field on a periodic grid, held either as point values or as
/// Hermitian half-spectrum coefficients.
#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: Arc<Grid>,
    data: FieldData,
}

impl ScalarField {
    pub fn physical(grid: &Arc<Grid>, values: Array3<f64>) -> Result<Self> {
        check_shape(values.dim(), grid.physical_shape())?;
        Ok(ScalarField {
            grid: grid.clone(),
            data: FieldData::Physical(values.as_standard_layout().into_owned()),
        })
    }

    pub fn spectral(grid: &Arc<Grid>, coefficients: Array3<Complex64>) -> Result<Self> {
        check_shape(coefficients.dim(), grid.spectral_shape())?;
        Ok(ScalarField {
            grid: grid.clone(),
            data: FieldData::Spectral(coefficients.as_standard_layout().into_owned()),
        })
    }

    pub fn zeros(grid: &Arc<Grid>) -> Self {
        ScalarField {
            grid: grid.clone(),
            data: FieldData::Physical(Array3::zeros(grid.physical_shape())),
        }
    }

    pub fn constant(grid: &Arc<Grid>, value: f64) -> Self {
        ScalarField {
            grid: grid.clone(),
            data: FieldData::Physical(Array3::from_elem(grid.physical_shape(), value)),
        }
    }

    /// Samples `f(x, y, z)` at the grid points.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let values = Array3::from_shape_fn(grid.physical_shape(), |(i, j, k)| {
            f(grid.coordinate(i), grid.coordinate(j), grid.coordinate(k))
        });
        ScalarField {
            grid: grid.clone(),
            data: FieldData::Physical(values),
        }
    }

    pub(crate) fn from_values(grid: &Arc<Grid>, values: Array3<f64>) -> Self {
        debug_assert_eq!(values.dim(), grid.physical_shape());
        ScalarField {
            grid: grid.clone(),
            data: FieldData::Physical(values),
        }
    }

    pub(crate) fn from_coefficients(grid: &Arc<Grid>, coefficients: Array3<Complex64>) -> Self {
        debug_assert_eq!(coefficients.dim(), grid.spectral_shape());
        ScalarField {
            grid: grid.clone(),
            data: FieldData::Spectral(coefficients),
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn data(&self) -> &FieldData {
        &self.data
    }

    pub fn representation(&self) -> Representation {
        match self.data {
            FieldData::Physical(_) => Representation::Physical,
            FieldData::Spectral(_) => Representation::Spectral,
        }
    }

    pub fn transform(&self, target: Representation) -> ScalarField {
        match target {
            Representation::Physical => self.to_physical(),
            Representation::Spectral => self.to_spectral(),
        }
    }

    pub fn to_spectral(&self) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            data: FieldData::Spectral(self.coefficients().into_owned()),
        }
    }

    pub fn to_physical(&self) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            data: FieldData::Physical(self.values().into_owned()),
        }
    }

    pub fn into_spectral(self) -> ScalarField {
        match self.data {
            FieldData::Spectral(_) => self,
            FieldData::Physical(ref v) => {
                let c = self.grid.forward_transform(v);
                ScalarField::from_coefficients(&self.grid, c)
            }
        }
    }

    pub fn into_physical(self) -> ScalarField {
        match self.data {
            FieldData::Physical(_) => self,
            FieldData::Spectral(ref c) => {
                let v = self.grid.inverse_transform(c);
                ScalarField::from_values(&self.grid, v)
            }
        }
    }

    /// Point values, transforming if needed.
    pub fn values(&self) -> Cow<'_, Array3<f64>> {
        match &self.data {
            FieldData::Physical(v) => Cow::Borrowed(v),
            FieldData::Spectral(c) => Cow::Owned(self.grid.inverse_transform(c)),
        }
    }

    /// Spectral coefficients, transforming if needed.
    pub fn coefficients(&self) -> Cow<'_, Array3<Complex64>> {
        match &self.data {
            FieldData::Spectral(c) => Cow::Borrowed(c),
            FieldData::Physical(v) => Cow::Owned(self.grid.forward_transform(v)),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField::from_values(&self.grid, self.values().mapv(f))
    }

    /// Pointwise combination in physical space.
    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        assert_same_grid(&self.grid, &other.grid);
        let a = self.values();
        let b = other.values();
        let mut out = Array3::zeros(self.grid.physical_shape());
        Zip::from(&mut out)
            .and(&*a)
            .and(&*b)
            .for_each(|o, &x, &y| *o = f(x, y));
        ScalarField::from_values(&self.grid, out)
    }

    pub fn scaled(&self, factor: f64) -> ScalarField {
        match &self.data {
            FieldData::Physical(v) => ScalarField::from_values(&self.grid, v * factor),
            FieldData::Spectral(c) => ScalarField::from_coefficients(&self.grid, c * factor),
        }
    }

    /// Box average; equals the `k = 0` coefficient.
    pub fn mean(&self) -> f64 {
        match &self.data {
            FieldData::Physical(v) => super::ordered_sum(v.iter().copied()) / v.len() as f64,
            FieldData::Spectral(c) => c[[0, 0, 0]].re,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Root-mean-square over the grid points.
    pub fn rms(&self) -> f64 {
        let v = self.values();
        (super::ordered_sum(v.iter().map(|x| x * x)) / v.len() as f64).sqrt()
    }

    /// `<f^2>` from the coefficients (Parseval).
    pub fn spectral_energy(&self) -> f64 {
        let c = self.coefficients();
        let h = self.grid.half_len();
        let mut parts = Vec::with_capacity(c.len());
        for ((_, _, k), v) in c.indexed_iter() {
            let weight = if k == 0 || k == h - 1 { 1.0 } else { 2.0 };
            parts.push(weight * v.norm_sqr());
        }
        super::ordered_sum(parts.into_iter())
    }

    fn combine(&self, other: &ScalarField, sign: f64) -> ScalarField {
        assert_same_grid(&self.grid, &other.grid);
        match (&self.data, &other.data) {
            (FieldData::Spectral(a), FieldData::Spectral(b)) => {
                let mut out = a.clone();
                Zip::from(&mut out).and(b).for_each(|o, &y| *o += y * sign);
                ScalarField::from_coefficients(&self.grid, out)
            }
            _ => self.zip_map(other, |x, y| x + sign * y),
        }
    }
}

fn check_shape(found: (usize, usize, usize), expected: (usize, usize, usize)) -> Result<()> {
    if found == expected {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            expected: [expected.0, expected.1, expected.2],
            found: [found.0, found.1, found.2],
        })
    }
}

/// Arithmetic between fields on different grids is a programming error.
pub(crate) fn assert_same_grid(a: &Grid, b: &Grid) {
    assert!(
        a.same_as(b),
        "field grids differ: n={} L={} vs n={} L={}",
        a.n(),
        a.box_length(),
        b.n(),
        b.box_length()
    );
}

impl Add for &ScalarField {
    type Output = ScalarField;
    fn add(self, rhs: &ScalarField) -> ScalarField {
        self.combine(rhs, 1.0)
    }
}

impl Sub for &ScalarField {
    type Output = ScalarField;
    fn sub(self, rhs: &ScalarField) -> ScalarField {
        self.combine(rhs, -1.0)
    }
}

/// Pointwise product (physical space).
impl Mul for &ScalarField {
    type Output = ScalarField;
    fn mul(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |x, y| x * y)
    }
}

impl Mul<f64> for &ScalarField {
    type Output = ScalarField;
    fn mul(self, rhs: f64) -> ScalarField {
        self.scaled(rhs)
    }
}

impl Neg for &ScalarField {
    type Output = ScalarField;
    fn neg(self) -> ScalarField {
        self.scaled(-1.0)
    }
}

use std::fmt;
use std::sync::Arc;

use ndarray::{Array3, ArrayViewMut2, Axis};
use rayon::prelude::*;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Periodic cube `[0, L)^3` sampled with `n` points per axis.
///
/// Physical arrays are indexed `[ix, iy, iz]` in row-major order. Spectral
/// arrays keep the Hermitian half along `z`, so their shape is
/// `(n, n, n/2 + 1)`. Spectral coefficients are Fourier-series coefficients:
/// the forward transform carries the `1/n^3` factor, and a constant field
/// `c` has `c` in the `k = 0` slot.
pub struct Grid {
    n: usize,
    box_length: f64,
    modes: Vec<i64>,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n", &self.n)
            .field("box_length", &self.box_length)
            .finish()
    }
}

impl Grid {
    pub fn new(n: usize, box_length: f64) -> Result<Arc<Grid>> {
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "n must be a power of two >= 8, got {n}"
            )));
        }
        if !(box_length.is_finite() && box_length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "box length must be positive and finite, got {box_length}"
            )));
        }
        let half = (n / 2) as i64;
        let modes = (0..n as i64)
            .map(|i| if i < half { i } else { i - n as i64 })
            .collect();
        let mut real_planner = RealFftPlanner::<f64>::new();
        let mut planner = FftPlanner::<f64>::new();
        Ok(Arc::new(Grid {
            n,
            box_length,
            modes,
            r2c: real_planner.plan_fft_forward(n),
            c2r: real_planner.plan_fft_inverse(n),
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }))
    }

    /// Grid on the default `2π` box, where wavenumbers are integers.
    pub fn periodic(n: usize) -> Result<Arc<Grid>> {
        Grid::new(n, 2.0 * std::f64::consts::PI)
    }

    /// Same box, `factor` times as many points per axis.
    pub fn refined(&self, factor: usize) -> Result<Arc<Grid>> {
        Grid::new(self.n * factor, self.box_length)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    pub fn spacing(&self) -> f64 {
        self.box_length / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(3)
    }

    pub fn points(&self) -> usize {
        self.n * self.n * self.n
    }

    /// Number of stored modes along the half (z) axis.
    pub fn half_len(&self) -> usize {
        self.n / 2 + 1
    }

    pub fn physical_shape(&self) -> (usize, usize, usize) {
        (self.n, self.n, self.n)
    }

    pub fn spectral_shape(&self) -> (usize, usize, usize) {
        (self.n, self.n, self.half_len())
    }

    pub fn coordinate(&self, index: usize) -> f64 {
        index as f64 * self.spacing()
    }

    /// `2π / L`.
    pub fn base_wavenumber(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.box_length
    }

    /// Signed integer mode for a full-axis index; the Nyquist index maps to `-n/2`.
    pub fn mode(&self, index: usize) -> i64 {
        self.modes[index]
    }

    pub fn is_nyquist(&self, index: usize) -> bool {
        index == self.n / 2
    }

    /// Physical wavenumber used by differentiation; zero at the Nyquist index.
    pub fn derivative_wavenumber(&self, index: usize) -> f64 {
        if self.is_nyquist(index) {
            0.0
        } else {
            self.modes[index] as f64 * self.base_wavenumber()
        }
    }

    /// Derivative wavenumbers for the full x/y axes.
    pub fn axis_wavenumbers(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.derivative_wavenumber(i)).collect()
    }

    /// Derivative wavenumbers for the half z axis (`0..=n/2`).
    pub fn half_axis_wavenumbers(&self) -> Vec<f64> {
        (0..self.half_len())
            .map(|i| self.derivative_wavenumber(i))
            .collect()
    }

    /// Absolute integer mode along an axis, using `n/2` for the Nyquist index.
    pub fn abs_mode(&self, index: usize) -> i64 {
        self.modes[index].abs()
    }

    /// Two-thirds rule: keep the mode iff every `|m_i| < n/3`.
    pub fn in_dealias_band(&self, i: usize, j: usize, k: usize) -> bool {
        let n = self.n as i64;
        3 * self.abs_mode(i) < n && 3 * self.abs_mode(j) < n && 3 * self.abs_mode(k) < n
    }

    /// True iff every `|m_i| < kmax`.
    pub fn in_band(&self, i: usize, j: usize, k: usize, kmax: i64) -> bool {
        self.abs_mode(i) < kmax && self.abs_mode(j) < kmax && self.abs_mode(k) < kmax
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self.n == other.n && self.box_length == other.box_length
    }

    pub(crate) fn check_same(&self, other: &Grid) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                expected_n: self.n,
                expected_length: self.box_length,
                found_n: other.n,
                found_length: other.box_length,
            })
        }
    }

    /// Forward 3D transform, normalized by `1/n^3`.
    pub(crate) fn forward_transform(&self, values: &Array3<f64>) -> Array3<Complex64> {
        let n = self.n;
        let h = self.half_len();
        let plane_len = n * h;
        let source = values.as_standard_layout();
        let source = source.as_slice().expect("standard layout");
        let mut out = vec![Complex64::default(); n * plane_len];

        // z (real-to-complex) then y, one x-plane per task
        out.par_chunks_mut(plane_len)
            .zip(source.par_chunks(n * n))
            .for_each(|(plane, src)| {
                let mut row = vec![0.0; n];
                let mut scratch = self.r2c.make_scratch_vec();
                for (spec_row, src_row) in plane.chunks_exact_mut(h).zip(src.chunks_exact(n)) {
                    row.copy_from_slice(src_row);
                    self.r2c
                        .process_with_scratch(&mut row, spec_row, &mut scratch)
                        .expect("real FFT length matches plan");
                }
                let mut columns = vec![Complex64::default(); plane_len];
                transpose(plane, n, h, &mut columns);
                self.forward.process(&mut columns);
                transpose(&columns, h, n, plane);
            });

        self.transform_x(&mut out, self.forward.as_ref(), 1.0 / (n * n * n) as f64);
        Array3::from_shape_vec((n, n, h), out).expect("spectral shape")
    }

    /// Inverse 3D transform (no normalization: exact inverse of `forward_transform`).
    pub(crate) fn inverse_transform(&self, coefficients: &Array3<Complex64>) -> Array3<f64> {
        let n = self.n;
        let h = self.half_len();
        let plane_len = n * h;
        let mut work = match coefficients.as_slice() {
            Some(s) => s.to_vec(),
            None => coefficients.iter().copied().collect(),
        };
        self.transform_x(&mut work, self.inverse.as_ref(), 1.0);

        let mut out = vec![0.0; n * n * n];
        out.par_chunks_mut(n * n)
            .zip(work.par_chunks_mut(plane_len))
            .for_each(|(dst, plane)| {
                let mut columns = vec![Complex64::default(); plane_len];
                transpose(plane, n, h, &mut columns);
                self.inverse.process(&mut columns);
                transpose(&columns, h, n, plane);
                let mut scratch = self.c2r.make_scratch_vec();
                for (spec_row, dst_row) in plane.chunks_exact_mut(h).zip(dst.chunks_exact_mut(n)) {
                    // the zero and Nyquist slots are real for a real field
                    spec_row[0].im = 0.0;
                    spec_row[h - 1].im = 0.0;
                    self.c2r
                        .process_with_scratch(spec_row, dst_row, &mut scratch)
                        .expect("inverse real FFT input is valid");
                }
            });
        Array3::from_shape_vec((n, n, n), out).expect("physical shape")
    }

    /// Complex FFT along x of a flat `(n, n, h)` array, then scaling.
    ///
    /// The `n × (n h)` matrix is cut into column tiles that fit in cache;
    /// each tile is gathered into contiguous x-lines, transformed and
    /// scattered back.
    fn transform_x(&self, data: &mut [Complex64], fft: &dyn Fft<f64>, scale: f64) {
        const TILE: usize = 32;
        let n = self.n;
        let rest = data.len() / n;
        let mut view = ArrayViewMut2::from_shape((n, rest), data).expect("flat spectral layout");
        view.axis_chunks_iter_mut(Axis(1), TILE).into_par_iter().for_each(|mut tile| {
            let width = tile.ncols();
            let mut lines = vec![Complex64::default(); n * width];
            for (x, row) in tile.rows().into_iter().enumerate() {
                for (t, &v) in row.iter().enumerate() {
                    lines[t * n + x] = v;
                }
            }
            fft.process(&mut lines);
            for (x, mut row) in tile.rows_mut().into_iter().enumerate() {
                for (t, v) in row.iter_mut().enumerate() {
                    *v = lines[t * n + x] * scale;
                }
            }
        });
    }
}

/// Writes the transpose of the row-major `rows × cols` matrix `src` into `dst`.
fn transpose<T: Copy>(src: &[T], rows: usize, cols: usize, dst: &mut [T]) {
    const BLOCK: usize = 16;
    assert_eq!(src.len(), rows * cols);
    assert_eq!(dst.len(), rows * cols);
    for r0 in (0..rows).step_by(BLOCK) {
        for c0 in (0..cols).step_by(BLOCK) {
            for r in r0..(r0 + BLOCK).min(rows) {
                let row = &src[r * cols..(r + 1) * cols];
                for c in c0..(c0 + BLOCK).min(cols) {
                    dst[c * rows + r] = row[c];
                }
            }
        }
    }
}

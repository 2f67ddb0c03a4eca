//! Exact spectral differential operators and spectral utilities.
//!
//! Every operator returns a spectral field. Derivatives multiply by `i k`
//! with the Nyquist wavenumber set to zero, so `laplacian` coincides with
//! `divergence ∘ gradient` mode by mode.

use std::sync::Arc;

use ndarray::Array3;
use rustfft::num_complex::Complex64;

use super::{Grid, ScalarField, TensorField3, VectorField};
use crate::error::{Error, Result};

/// Applies `op(kx, ky, kz, coefficient)` to every stored mode.
pub(crate) fn map_modes(
    f: &ScalarField,
    op: impl Fn(f64, f64, f64, Complex64) -> Complex64,
) -> ScalarField {
    let grid = f.grid();
    let kx = grid.axis_wavenumbers();
    let kz = grid.half_axis_wavenumbers();
    let coeffs = f.coefficients();
    let out = Array3::from_shape_fn(grid.spectral_shape(), |(i, j, k)| {
        op(kx[i], kx[j], kz[k], coeffs[[i, j, k]])
    });
    ScalarField::from_coefficients(grid, out)
}

/// Applies `keep(i, j, k)` as a mask over stored modes.
fn mask_modes(f: &ScalarField, keep: impl Fn(usize, usize, usize) -> bool) -> ScalarField {
    let grid = f.grid();
    let coeffs = f.coefficients();
    let out = Array3::from_shape_fn(grid.spectral_shape(), |(i, j, k)| {
        if keep(i, j, k) {
            coeffs[[i, j, k]]
        } else {
            Complex64::default()
        }
    });
    ScalarField::from_coefficients(grid, out)
}

pub fn derivative(f: &ScalarField, axis: usize) -> ScalarField {
    assert!(axis < 3, "axis must be 0, 1 or 2");
    map_modes(f, |kx, ky, kz, c| {
        let k = [kx, ky, kz][axis];
        c * Complex64::new(0.0, k)
    })
}

pub fn gradient(f: &ScalarField) -> VectorField {
    let spectral = f.to_spectral();
    VectorField::from_parts([
        derivative(&spectral, 0),
        derivative(&spectral, 1),
        derivative(&spectral, 2),
    ])
}

pub fn divergence(v: &VectorField) -> ScalarField {
    let dx = derivative(v.component(0), 0);
    let dy = derivative(v.component(1), 1);
    let dz = derivative(v.component(2), 2);
    &(&dx + &dy) + &dz
}

/// `ω_i = ε_ijk ∂_j v_k`, so `ω_1 = ∂_2 v_3 − ∂_3 v_2`.
pub fn curl(v: &VectorField) -> VectorField {
    let s = v.to_spectral();
    let d = |comp: usize, axis: usize| derivative(s.component(comp), axis);
    VectorField::from_parts([
        &d(2, 1) - &d(1, 2),
        &d(0, 2) - &d(2, 0),
        &d(1, 0) - &d(0, 1),
    ])
}

pub fn laplacian(f: &ScalarField) -> ScalarField {
    map_modes(f, |kx, ky, kz, c| c * -(kx * kx + ky * ky + kz * kz))
}

pub fn vector_laplacian(v: &VectorField) -> VectorField {
    v.map_components(laplacian)
}

/// `A_ij = ∂_j v_i`.
pub fn gradient_tensor(v: &VectorField) -> TensorField3 {
    let s = v.to_spectral();
    TensorField3::from_parts(
        std::array::from_fn(|i| std::array::from_fn(|j| derivative(s.component(i), j))),
        false,
    )
}

/// `H_ij = ∂_i ∂_j f`, symmetric.
pub fn hessian(f: &ScalarField) -> TensorField3 {
    let s = f.to_spectral();
    let d2 = |a: usize, b: usize| {
        map_modes(&s, |kx, ky, kz, c| {
            let k = [kx, ky, kz];
            c * -(k[a] * k[b])
        })
    };
    TensorField3::symmetric([d2(0, 0), d2(0, 1), d2(0, 2), d2(1, 1), d2(1, 2), d2(2, 2)])
        .expect("components share a grid")
}

/// Zero-mean solution of `Δf = rhs`.
///
/// Fails if the mean of `rhs` exceeds `1e-12` of its RMS. Modes whose
/// differentiation wavenumbers all vanish (Nyquist combinations) map to zero.
pub fn solve_poisson(rhs: &ScalarField) -> Result<ScalarField> {
    let spectral = rhs.to_spectral();
    let mean = spectral.mean();
    let scale = spectral.spectral_energy().sqrt();
    if mean.abs() > 1e-12 * scale {
        return Err(Error::NonzeroMean {
            mean,
            relative: if scale > 0.0 { mean.abs() / scale } else { f64::INFINITY },
        });
    }
    Ok(map_modes(&spectral, |kx, ky, kz, c| {
        let k2 = kx * kx + ky * ky + kz * kz;
        if k2 == 0.0 {
            Complex64::default()
        } else {
            c * (-1.0 / k2)
        }
    }))
}

pub fn volume_mean(f: &ScalarField) -> f64 {
    f.mean()
}

/// Two-thirds rule truncation.
pub fn dealias(f: &ScalarField) -> ScalarField {
    let grid = f.grid().clone();
    mask_modes(f, |i, j, k| grid.in_dealias_band(i, j, k))
}

pub fn dealias_vector(v: &VectorField) -> VectorField {
    v.map_components(dealias)
}

/// Keeps only modes with every `|m_i| < kmax`.
pub fn band_limit(f: &ScalarField, kmax: i64) -> ScalarField {
    let grid = f.grid().clone();
    mask_modes(f, |i, j, k| grid.in_band(i, j, k, kmax))
}

/// Largest `max_i |m_i|` carrying a coefficient above `tol` times the largest.
pub fn max_active_mode(f: &ScalarField, tol: f64) -> i64 {
    let grid = f.grid();
    let c = f.coefficients();
    let peak = c.iter().fold(0.0_f64, |m, v| m.max(v.norm()));
    let mut best = 0;
    for ((i, j, k), v) in c.indexed_iter() {
        if v.norm() > tol * peak {
            best = best
                .max(grid.abs_mode(i))
                .max(grid.abs_mode(j))
                .max(grid.abs_mode(k));
        }
    }
    best
}

/// Spectral interpolation onto a grid with the same box and a different `n`.
///
/// Refining is exact for fields without Nyquist content; coarsening
/// truncates. Nyquist modes of the source are dropped.
pub fn resample(f: &ScalarField, target: &Arc<Grid>) -> Result<ScalarField> {
    let source = f.grid();
    if source.box_length() != target.box_length() {
        return Err(Error::InvalidParameter(format!(
            "resample needs matching box lengths ({} vs {})",
            source.box_length(),
            target.box_length()
        )));
    }
    if source.same_as(target) {
        return Ok(f.to_spectral());
    }
    let coeffs = f.coefficients();
    let limit = (source.n().min(target.n()) / 2) as i64;
    let index = |m: i64, n: usize| -> usize {
        if m >= 0 {
            m as usize
        } else {
            (n as i64 + m) as usize
        }
    };
    let mut out = Array3::<Complex64>::zeros(target.spectral_shape());
    for ((i, j, k), v) in coeffs.indexed_iter() {
        let (mi, mj, mk) = (source.mode(i), source.mode(j), k as i64);
        if mi.abs() >= limit || mj.abs() >= limit || mk >= limit {
            continue;
        }
        out[[index(mi, target.n()), index(mj, target.n()), mk as usize]] = *v;
    }
    Ok(ScalarField::from_coefficients(target, out))
}

pub fn resample_vector(v: &VectorField, target: &Arc<Grid>) -> Result<VectorField> {
    Ok(VectorField::from_parts([
        resample(v.component(0), target)?,
        resample(v.component(1), target)?,
        resample(v.component(2), target)?,
    ]))
}

/// `(u · ∇) f`, product taken in physical space.
pub fn advect(u: &VectorField, f: &ScalarField) -> ScalarField {
    u.dot(&gradient(f))
}

/// `(u · ∇) v` componentwise.
pub fn advect_vector(u: &VectorField, v: &VectorField) -> VectorField {
    v.map_components(|c| advect(u, c))
}

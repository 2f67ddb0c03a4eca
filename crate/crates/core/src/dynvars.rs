//! Velocity-gradient variables: `A = ∇u`, strain `S`, vorticity `ω`, their
//! invariant traces, and the ordered strain eigenvalues.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::field::ops::{self, divergence, gradient_tensor};
use crate::field::{Mat3, ScalarField, TensorField3, VectorField};

/// Tolerance on `max |∇·u|` relative to `max |A_ij|`.
pub const SOLENOIDAL_TOLERANCE: f64 = 1e-10;

/// Ordered strain eigenvalues `a ≥ b ≥ c` at every grid point.
#[derive(Clone, Debug)]
pub struct StrainEigenvalues {
    pub a: ScalarField,
    pub b: ScalarField,
    pub c: ScalarField,
}

#[derive(Clone, Debug)]
pub struct InvariantFields {
    pub tr_a2: ScalarField,
    pub tr_a3: ScalarField,
    pub tr_s2: ScalarField,
    pub tr_s3: ScalarField,
    /// `|ω|²`
    pub enstrophy: ScalarField,
    /// `ω · S ω`
    pub omega_s_omega: ScalarField,
    /// `Σ_ijk (∂_k S_ij)²`
    pub grad_s_sq: ScalarField,
    /// `Σ_ik (∂_k ω_i)²`
    pub grad_omega_sq: ScalarField,
    /// `⅓((a−b)² + (b−c)² + (c−a)²)`
    pub variance_p: ScalarField,
    /// `⅓ tr S²`, the plain variance of `{a, b, c}`.
    pub eigen_variance: ScalarField,
}

/// Returns `Err(NotSolenoidal)` unless `max |∇·u| ≤ 1e-10 · max |∂_j u_i|`.
pub fn check_solenoidal(u: &VectorField, a: &TensorField3) -> Result<()> {
    let max_div = divergence(u).max_abs();
    let scale = (0..3)
        .flat_map(|i| (0..3).map(move |j| (i, j)))
        .map(|(i, j)| a.get(i, j).max_abs())
        .fold(0.0, f64::max);
    if max_div > SOLENOIDAL_TOLERANCE * scale {
        return Err(Error::NotSolenoidal { max_div, scale });
    }
    Ok(())
}

/// `A_ij = ∂u_i/∂x_j`, after checking `∇·u ≈ 0`.
pub fn velocity_gradient(u: &VectorField) -> Result<TensorField3> {
    let a = gradient_tensor(u);
    check_solenoidal(u, &a)?;
    Ok(a)
}

/// Splits `A` into `S = ½(A + Aᵀ)` and `ω` with `ω_1 = A_32 − A_23`, so that
/// `A_ij = S_ij + ½ ε_kji ω_k`.
pub fn decompose(a: &TensorField3) -> (TensorField3, VectorField) {
    let sym = |i: usize, j: usize| (a.get(i, j) + a.get(j, i)).scaled(0.5);
    let s = TensorField3::symmetric([
        a.get(0, 0).clone(),
        sym(0, 1),
        sym(0, 2),
        a.get(1, 1).clone(),
        sym(1, 2),
        a.get(2, 2).clone(),
    ])
    .expect("components share a grid");
    let omega = VectorField::new([
        a.get(2, 1) - a.get(1, 2),
        a.get(0, 2) - a.get(2, 0),
        a.get(1, 0) - a.get(0, 1),
    ])
    .expect("components share a grid");
    (s, omega)
}

/// Skew part `Ω_ij = ½ ε_kji ω_k` rebuilt from vorticity.
pub fn rotation_tensor(omega: &VectorField) -> TensorField3 {
    let w = |k: usize, sign: f64| omega.component(k).scaled(0.5 * sign);
    let zero = ScalarField::zeros(omega.grid()).transform(omega.representation());
    TensorField3::new([
        [zero.clone(), w(2, -1.0), w(1, 1.0)],
        [w(2, 1.0), zero.clone(), w(0, -1.0)],
        [w(1, -1.0), w(0, 1.0), zero],
    ])
    .expect("components share a grid")
}

pub(crate) fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    std::array::from_fn(|i| std::array::from_fn(|j| (0..3).map(|k| a[i][k] * b[k][j]).sum()))
}

pub(crate) fn trace(a: &Mat3) -> f64 {
    a[0][0] + a[1][1] + a[2][2]
}

/// Pointwise `|∇T|² = Σ_ij Σ_k (∂_k T_ij)²` for a tensor field.
pub fn tensor_gradient_sq(t: &TensorField3) -> ScalarField {
    let g = t.grid();
    let mut acc = ScalarField::zeros(g);
    for i in 0..3 {
        for j in 0..3 {
            let grad = ops::gradient(t.get(i, j));
            acc = &acc + &grad.norm_sq();
        }
    }
    acc
}

/// Pointwise `|∇v|² = Σ_ik (∂_k v_i)²`.
pub fn vector_gradient_sq(v: &VectorField) -> ScalarField {
    let g = v.grid();
    let mut acc = ScalarField::zeros(g);
    for i in 0..3 {
        acc = &acc + &ops::gradient(v.component(i)).norm_sq();
    }
    acc
}

pub fn invariants(u: &VectorField) -> Result<InvariantFields> {
    let a = velocity_gradient(u)?;
    let (s, omega) = decompose(&a);
    let a_phys = a.to_physical();
    let s_phys = s.to_physical();
    let omega_phys = omega.to_physical();

    let tr_a2 = a_phys.pointwise(|m| trace(&mat_mul(m, m)));
    let tr_a3 = a_phys.pointwise(|m| trace(&mat_mul(&mat_mul(m, m), m)));
    let tr_s2 = s_phys.pointwise(|m| trace(&mat_mul(m, m)));
    let tr_s3 = s_phys.pointwise(|m| trace(&mat_mul(&mat_mul(m, m), m)));
    let enstrophy = omega_phys.norm_sq();
    let omega_s_omega = omega_phys.dot(&s_phys.apply(&omega_phys));
    let grad_s_sq = tensor_gradient_sq(&s);
    let grad_omega_sq = vector_gradient_sq(&omega);
    let eigs = strain_eigenvalues(&s_phys);
    let variance_p = variance_p(&eigs);
    let eigen_variance = eigen_variance(&eigs);
    Ok(InvariantFields {
        tr_a2,
        tr_a3,
        tr_s2,
        tr_s3,
        enstrophy,
        omega_s_omega,
        grad_s_sq,
        grad_omega_sq,
        variance_p,
        eigen_variance,
    })
}

/// Eigenvalues of a symmetric 3×3 matrix, descending.
///
/// The trace is removed first, the depressed cubic
/// `λ³ − (tr S²/2) λ − tr S³/3 = 0` is solved trigonometrically, and the
/// middle root is taken from the trace so the three sum exactly.
pub fn symmetric_eigenvalues(m: &Mat3) -> [f64; 3] {
    let shift = trace(m) / 3.0;
    let mut d = *m;
    for (i, row) in d.iter_mut().enumerate() {
        row[i] -= shift;
    }
    let d2 = mat_mul(&d, &d);
    let tr2 = trace(&d2);
    if tr2 == 0.0 {
        return [shift; 3];
    }
    let tr3 = trace(&mat_mul(&d2, &d));
    let p = tr2 / 2.0;
    let q = tr3 / 3.0;
    // roots are 2 sqrt(p/3) cos(θ/3 − 2πk/3), cos θ = (q/2) (3/p)^{3/2}
    let r = 2.0 * (p / 3.0).sqrt();
    let arg = (0.5 * q * (3.0 / p).powf(1.5)).clamp(-1.0, 1.0);
    let theta = arg.acos() / 3.0;
    let a = r * theta.cos();
    let c = r * (theta + 2.0 * PI / 3.0).cos();
    let b = -a - c;
    let mut out = [a + shift, b + shift, c + shift];
    out.sort_by(|x, y| y.total_cmp(x));
    out
}

pub fn strain_eigenvalues(s: &TensorField3) -> StrainEigenvalues {
    let s = s.to_physical();
    let vals = s.values();
    let grid = s.grid();
    let shape = grid.physical_shape();
    let mut outs = [
        ndarray::Array3::zeros(shape),
        ndarray::Array3::zeros(shape),
        ndarray::Array3::zeros(shape),
    ];
    let slices: Vec<&[f64]> = vals.iter().map(|v| v.as_slice().expect("standard layout")).collect();
    let [oa, ob, oc] = &mut outs;
    let (oa, ob, oc) = (
        oa.as_slice_mut().expect("standard layout"),
        ob.as_slice_mut().expect("standard layout"),
        oc.as_slice_mut().expect("standard layout"),
    );
    for p in 0..oa.len() {
        let m: Mat3 = std::array::from_fn(|i| std::array::from_fn(|j| slices[3 * i + j][p]));
        let [x, y, z] = symmetric_eigenvalues(&m);
        oa[p] = x;
        ob[p] = y;
        oc[p] = z;
    }
    let [a, b, c] = outs;
    StrainEigenvalues {
        a: ScalarField::physical(grid, a).expect("grid shape"),
        b: ScalarField::physical(grid, b).expect("grid shape"),
        c: ScalarField::physical(grid, c).expect("grid shape"),
    }
}

/// `P = ⅓((a−b)² + (b−c)² + (c−a)²)`; equals `tr S²` when `a + b + c = 0`.
pub fn variance_p(eigs: &StrainEigenvalues) -> ScalarField {
    let ab = eigs.a.zip_map(&eigs.b, |a, b| (a - b).powi(2));
    let bc = eigs.b.zip_map(&eigs.c, |b, c| (b - c).powi(2));
    let ca = eigs.c.zip_map(&eigs.a, |c, a| (c - a).powi(2));
    (&(&ab + &bc) + &ca).scaled(1.0 / 3.0)
}

/// `⅓(a² + b² + c²) = ⅓ tr S²`.
pub fn eigen_variance(eigs: &StrainEigenvalues) -> ScalarField {
    let sq = |f: &ScalarField| f.map(|x| x * x);
    (&(&sq(&eigs.a) + &sq(&eigs.b)) + &sq(&eigs.c)).scaled(1.0 / 3.0)
}

/// `⟨u · ω⟩`.
pub fn mean_helicity(u: &VectorField) -> Result<f64> {
    let a = velocity_gradient(u)?;
    let (_, omega) = decompose(&a);
    Ok(u.dot(&omega).mean())
}

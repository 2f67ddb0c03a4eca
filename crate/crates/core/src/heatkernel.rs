//! Gaussian bounds for the kernel of `(1/Re)Δ − φ·∇` with bounded drift, the
//! one-dimensional kernels `p^β` they are built from, a Monte Carlo check of
//! the bounds along Taylor-diffusion paths, and the short-time vorticity
//! propagator with its exact constant-coefficient counterpart.
//!
//! Everything is dimensionless: lengths in units of `L`, times in units of
//! `κ = L/U`, drift `|φ_i| ≤ 1`, and `σ = √(Re/2)` so that the diffusion has
//! per-axis variance `δ/σ²` after elapsed time `δ`.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use ndarray::Array3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dynvars::mat_mul;
use crate::error::{invalid, Result};
use crate::evolution::DimensionlessScaling;
use crate::field::ops::map_modes;
use crate::field::{Grid, Mat3, ScalarField, VectorField};

/// Standard normal CDF.
pub fn phi(a: f64) -> f64 {
    0.5 * libm::erfc(-a / SQRT_2)
}

/// Upper tail `Ψ(a) = 1 − Φ(a)`, accurate for large `a`.
pub fn psi(a: f64) -> f64 {
    0.5 * libm::erfc(a / SQRT_2)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

/// `σ = √(Re/2)` and the elapsed time `δ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub sigma: f64,
    pub delta: f64,
}

impl KernelParams {
    pub fn new(sigma: f64, delta: f64) -> Result<Self> {
        positive("sigma", sigma)?;
        positive("delta", delta)?;
        Ok(KernelParams { sigma, delta })
    }

    pub fn from_reynolds(re: f64, delta: f64) -> Result<Self> {
        positive("Re", re)?;
        KernelParams::new((re / 2.0).sqrt(), delta)
    }

    pub fn reynolds(&self) -> f64 {
        2.0 * self.sigma * self.sigma
    }

    /// Per-axis standard deviation `√δ / σ` of the diffusion.
    pub fn spread(&self) -> f64 {
        self.delta.sqrt() / self.sigma
    }

    /// Gaussian peak `σ³ (2πδ)^{−3/2}`.
    pub fn peak(&self) -> f64 {
        self.sigma.powi(3) * (2.0 * PI * self.delta).powf(-1.5)
    }

    /// `e^{−3σ²δ/2}`, the weight left on the initial vorticity.
    pub fn memory_factor(&self) -> f64 {
        (-1.5 * self.sigma * self.sigma * self.delta).exp()
    }
}

/// `p^β(x, t, y)` in closed form:
/// `e^{−β²t/2 + β|x−y|} (2πt)^{−1/2} e^{−|x−y|²/2t} + β Ψ((|x−y| − βt)/√t)`.
pub fn p_beta(x: f64, t: f64, y: f64, beta: f64) -> Result<f64> {
    positive("t", t)?;
    let r = (x - y).abs();
    let a = (r - beta * t) / t.sqrt();
    // the two exponentials combine to e^{−a²/2}
    Ok((-0.5 * a * a).exp() / (2.0 * PI * t).sqrt() + beta * psi(a))
}

/// `p^β(x, t, y)` from its defining integral
/// `(2πt)^{−1/2} ∫_{|x−y|/√t}^∞ z e^{−(z − β√t)²/2} dz`, by double-exponential
/// quadrature. Slow; meant for cross-checking [`p_beta`].
pub fn p_beta_quadrature(x: f64, t: f64, y: f64, beta: f64) -> Result<f64> {
    positive("t", t)?;
    let lower = (x - y).abs() / t.sqrt();
    let centre = beta * t.sqrt();
    // past the peak, factor out e^{−gap²/2} so the quadrature sees O(1) values
    let gap = (lower - centre).max(0.0);
    let f = |s: f64| {
        let z = lower + s;
        let exponent = if gap > 0.0 { -s * (gap + 0.5 * s) } else { -0.5 * (z - centre).powi(2) };
        z * exponent.exp()
    };
    // the integrand is negligible beyond 40 units past its peak
    let upper = (centre - lower).max(0.0) + 40.0;
    let coarse = quadrature::double_exponential::integrate(f, 0.0, upper, 1e-10).integral;
    let target = (1e-15 * coarse.abs()).max(f64::MIN_POSITIVE);
    let fine = quadrature::double_exponential::integrate(f, 0.0, upper, target).integral;
    let fine = fine * (-0.5 * gap * gap).exp();
    Ok(fine / (2.0 * PI * t).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }
}

/// `Γ±(ξ, t, x) = σ³ (2πt)^{−3/2} exp(−|σ(x − ξ) ∓ σt𝟙|² / 2t)`.
pub fn gamma_pm(xi: [f64; 3], x: [f64; 3], t: f64, sigma: f64, branch: Branch) -> Result<f64> {
    constant_drift_kernel(xi, x, &KernelParams::new(sigma, t)?, [branch.sign(); 3])
}

/// Exact kernel for constant drift `φ`: Gaussian centred at `ξ + φδ` with
/// per-axis variance `δ/σ²`.
pub fn constant_drift_kernel(xi: [f64; 3], x: [f64; 3], params: &KernelParams, drift: [f64; 3]) -> Result<f64> {
    let KernelParams { sigma, delta } = *params;
    let d2: f64 = (0..3).map(|i| (sigma * (x[i] - xi[i] - drift[i] * delta)).powi(2)).sum();
    Ok(params.peak() * (-d2 / (2.0 * delta)).exp())
}

/// `σ³ ∏_i p^β(σξ_i, δ, σx_i)`.
pub fn bound_product(xi: [f64; 3], x: [f64; 3], params: &KernelParams, beta: f64) -> Result<f64> {
    let s = params.sigma;
    let mut out = s.powi(3);
    for i in 0..3 {
        out *= p_beta(s * xi[i], params.delta, s * x[i], beta)?;
    }
    Ok(out)
}

fn check_drift(drift: [f64; 3]) -> Result<()> {
    if drift.iter().all(|d| d.abs() <= 1.0) {
        Ok(())
    } else {
        Err(invalid(format!("drift components must satisfy |phi_i| <= 1, got {drift:?}")))
    }
}

/// Sampling lattice for the pointwise bound check: `points` per axis over
/// `ξ_i + φ_i δ ± width` spreads.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub points: usize,
    pub width: f64,
}

impl Default for Lattice {
    fn default() -> Self {
        Lattice { points: 21, width: 6.0 }
    }
}

/// Minimum slacks over the lattice, divided by the Gaussian peak. Bounds by
/// name: `σ³∏p^{−σ}` is the repelling kernel product, `σ³∏p^{σ}` the
/// attracting one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelBoundsReport {
    pub params: KernelParams,
    pub drift: [f64; 3],
    pub points: usize,
    /// `min (Γ − σ³∏p^{−σ}) / peak`
    pub lower_slack: f64,
    /// `min (σ³∏p^{σ} − Γ) / peak`
    pub upper_slack: f64,
    /// `min (Γ − σ³∏p^{σ}) / peak`, the ordering with the kernels swapped.
    pub swapped_lower_slack: f64,
    /// `min (σ³∏p^{−σ} − Γ) / peak`
    pub swapped_upper_slack: f64,
}

impl KernelBoundsReport {
    /// `σ³∏p^{−σ} ≤ Γ ≤ σ³∏p^{σ}` within `tolerance`.
    pub fn holds(&self, tolerance: f64) -> bool {
        self.lower_slack >= -tolerance && self.upper_slack >= -tolerance
    }

    /// `σ³∏p^{σ} ≤ Γ ≤ σ³∏p^{−σ}` within `tolerance`.
    pub fn swapped_holds(&self, tolerance: f64) -> bool {
        self.swapped_lower_slack >= -tolerance && self.swapped_upper_slack >= -tolerance
    }
}

/// Evaluates the exact constant-drift kernel and both kernel products at
/// every lattice point, with `ξ = 0`.
pub fn kernel_bounds_check(params: &KernelParams, drift: [f64; 3], lattice: &Lattice) -> Result<KernelBoundsReport> {
    check_drift(drift)?;
    if lattice.points < 2 || !(lattice.width > 0.0) {
        return Err(invalid("lattice needs at least 2 points and positive width"));
    }
    let xi = [0.0; 3];
    let spread = params.spread();
    let axis = |i: usize| -> Vec<f64> {
        let c = drift[i] * params.delta;
        let h = lattice.width * spread + params.delta;
        (0..lattice.points)
            .map(|k| c - h + 2.0 * h * k as f64 / (lattice.points - 1) as f64)
            .collect()
    };
    let axes = [axis(0), axis(1), axis(2)];
    let peak = params.peak();
    let s = params.sigma;
    let mut lower_slack = f64::INFINITY;
    let mut upper_slack = f64::INFINITY;
    let mut swapped_lower_slack = f64::INFINITY;
    let mut swapped_upper_slack = f64::INFINITY;
    for &a in &axes[0] {
        for &b in &axes[1] {
            for &c in &axes[2] {
                let x = [a, b, c];
                let exact = constant_drift_kernel(xi, x, params, drift)?;
                let attract = bound_product(xi, x, params, s)?;
                let repel = bound_product(xi, x, params, -s)?;
                lower_slack = lower_slack.min((exact - repel) / peak);
                upper_slack = upper_slack.min((attract - exact) / peak);
                swapped_lower_slack = swapped_lower_slack.min((exact - attract) / peak);
                swapped_upper_slack = swapped_upper_slack.min((repel - exact) / peak);
            }
        }
    }
    Ok(KernelBoundsReport {
        params: *params,
        drift,
        points: lattice.points.pow(3),
        lower_slack,
        upper_slack,
        swapped_lower_slack,
        swapped_upper_slack,
    })
}

/// Gaussian and `Ψ` parts of `f±`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FTerms {
    pub gaussian: f64,
    pub psi_term: f64,
}

impl FTerms {
    pub fn value(&self) -> f64 {
        self.gaussian + self.psi_term
    }
}

/// `f±(σ, ξ, δ, x) = σ p^{±σ}(σξ, δ, σx)` split into its two terms:
/// `σ (2πδ)^{−1/2} e^{−σ²δ/2 ± σ²|x−ξ| − σ²|x−ξ|²/2δ}` and
/// `±σ² Ψ((|x−ξ| ∓ δ)/√(δσ^{−2}))`.
pub fn f_pm_terms(sigma: f64, xi: f64, delta: f64, x: f64, branch: Branch) -> Result<FTerms> {
    positive("sigma", sigma)?;
    positive("delta", delta)?;
    let sgn = branch.sign();
    let r = (x - xi).abs();
    let s2 = sigma * sigma;
    let exponent = -0.5 * s2 * delta + sgn * s2 * r - s2 * r * r / (2.0 * delta);
    let gaussian = sigma / (2.0 * PI * delta).sqrt() * exponent.exp();
    let psi_term = sgn * s2 * psi((r - sgn * delta) / (delta / s2).sqrt());
    Ok(FTerms { gaussian, psi_term })
}

pub fn f_pm(sigma: f64, xi: f64, delta: f64, x: f64, branch: Branch) -> Result<f64> {
    Ok(f_pm_terms(sigma, xi, delta, x, branch)?.value())
}

/// Direct grid sum of `f` over the ball `|ξ − x| < δ`, times the cell volume.
pub fn ball_integral(f: &ScalarField, delta: f64) -> ScalarField {
    let g = f.grid();
    let n = g.n();
    let h = g.spacing();
    let reach = (delta / h).ceil() as i64;
    let mut offsets = Vec::new();
    for i in -reach..=reach {
        for j in -reach..=reach {
            for k in -reach..=reach {
                if ((i * i + j * j + k * k) as f64) * h * h < delta * delta {
                    offsets.push((i, j, k));
                }
            }
        }
    }
    let v = f.values();
    let wrap = |a: usize, d: i64| (a as i64 + d).rem_euclid(n as i64) as usize;
    let mut out = Array3::zeros(g.physical_shape());
    for ((a, b, c), o) in out.indexed_iter_mut() {
        let s: f64 = offsets
            .iter()
            .map(|&(i, j, k)| v[[wrap(a, i), wrap(b, j), wrap(c, k)]])
            .sum();
        *o = s * g.cell_volume();
    }
    ScalarField::physical(g, out).expect("grid shape")
}

/// Ball integral of the trigonometric interpolant of `f`, by the Fourier
/// multiplier `4π(sin kδ − kδ cos kδ)/k³`.
pub fn ball_integral_spectral(f: &ScalarField, delta: f64) -> ScalarField {
    map_modes(f, |kx, ky, kz, c| {
        let kn = (kx * kx + ky * ky + kz * kz).sqrt();
        let x = kn * delta;
        let volume = 4.0 / 3.0 * PI * delta.powi(3);
        let factor = if x < 1e-2 {
            volume * (1.0 - x * x / 10.0 + x.powi(4) / 280.0)
        } else {
            4.0 * PI * (x.sin() - x * x.cos()) / kn.powi(3)
        };
        c * factor
    })
}

fn check_strain(gamma: &Mat3) -> Result<()> {
    let tr = gamma[0][0] + gamma[1][1] + gamma[2][2];
    let asym = (0..3)
        .flat_map(|i| (0..3).map(move |j| (i, j)))
        .map(|(i, j)| (gamma[i][j] - gamma[j][i]).abs())
        .fold(0.0, f64::max);
    if tr.abs() >= 1e-12 || asym > 1e-12 {
        return Err(invalid(format!(
            "strain must be symmetric and traceless (trace {tr:e}, asymmetry {asym:e})"
        )));
    }
    Ok(())
}

fn apply_matrix(m: &Mat3, v: &VectorField) -> VectorField {
    let row = |i: usize| {
        let a = v.component(0).scaled(m[i][0]);
        let b = v.component(1).scaled(m[i][1]);
        let c = v.component(2).scaled(m[i][2]);
        &(&a + &b) + &c
    };
    VectorField::new([row(0), row(1), row(2)]).expect("shared grid")
}

/// `θ(x, τ+δ) ≈ e^{−3σ²δ/2} (θ + δΓθ)(x, τ) + σ ∫_{|ξ−x|<δ} θ(ξ, τ) dξ`, with the
/// ball integral summed directly over grid points.
pub fn short_time_vorticity_step(theta: &VectorField, gamma: &Mat3, params: &KernelParams) -> Result<VectorField> {
    check_strain(gamma)?;
    let m = params.memory_factor();
    let stretched = apply_matrix(gamma, theta).scaled(params.delta);
    let local = theta.add(&stretched).scaled(m);
    let ball = VectorField::new([0, 1, 2].map(|d| ball_integral(theta.component(d), params.delta)))?;
    Ok(local.add(&ball.scaled(params.sigma)))
}

/// Exact solution of `(∂_t + φ·∇ − (1/Re)Δ)θ = Γθ` over `δ` for constant `Γ`
/// and `φ`: `e^{δΓ}` applied to the heat-and-advection propagator
/// `e^{−|k|²δ/Re − i k·φ δ}`.
pub fn exact_linear_vorticity_step(
    theta: &VectorField,
    gamma: &Mat3,
    drift: [f64; 3],
    params: &KernelParams,
) -> Result<VectorField> {
    let delta = params.delta;
    let re = params.reynolds();
    let propagated = theta.map_components(|c| {
        map_modes(c, |kx, ky, kz, v| {
            let k2 = kx * kx + ky * ky + kz * kz;
            let phase = kx * drift[0] + ky * drift[1] + kz * drift[2];
            v * Complex64::from_polar((-k2 * delta / re).exp(), -phase * delta)
        })
    });
    let scaled: Mat3 = std::array::from_fn(|i| std::array::from_fn(|j| delta * gamma[i][j]));
    Ok(apply_matrix(&expm(&scaled), &propagated))
}

fn inverse3(m: &Mat3) -> Mat3 {
    let c = |i: usize, j: usize| {
        let (r0, r1) = ((i + 1) % 3, (i + 2) % 3);
        let (c0, c1) = ((j + 1) % 3, (j + 2) % 3);
        m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]
    };
    let det = m[0][0] * c(0, 0) + m[0][1] * c(0, 1) + m[0][2] * c(0, 2);
    std::array::from_fn(|i| std::array::from_fn(|j| c(j, i) / det))
}

/// Matrix exponential by scaling and squaring with a (6,6) Padé approximant.
pub fn expm(m: &Mat3) -> Mat3 {
    const COEF: [f64; 7] = [1.0, 0.5, 5.0 / 44.0, 1.0 / 66.0, 1.0 / 792.0, 1.0 / 15840.0, 1.0 / 665280.0];
    let norm = m
        .iter()
        .map(|row| row.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scale = 0.5f64.powi(squarings);
    let a: Mat3 = std::array::from_fn(|i| std::array::from_fn(|j| m[i][j] * scale));
    let ident: Mat3 = std::array::from_fn(|i| std::array::from_fn(|j| if i == j { 1.0 } else { 0.0 }));
    let mut num = ident;
    let mut den = ident;
    let mut power = ident;
    for (p, &c) in COEF.iter().enumerate().skip(1) {
        power = mat_mul(&power, &a);
        let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
        for i in 0..3 {
            for j in 0..3 {
                num[i][j] += c * power[i][j];
                den[i][j] += sign * c * power[i][j];
            }
        }
    }
    let mut out = mat_mul(&inverse3(&den), &num);
    for _ in 0..squarings {
        out = mat_mul(&out, &out);
    }
    out
}

/// Drift fields for the Taylor-diffusion simulation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftField {
    Constant { phi: [f64; 3] },
    /// `φ = (a sin x₂, 0, 0)`
    SineShear { amplitude: f64 },
}

impl DriftField {
    pub fn at(&self, x: [f64; 3]) -> [f64; 3] {
        match *self {
            DriftField::Constant { phi } => phi,
            DriftField::SineShear { amplitude } => [amplitude * x[1].sin(), 0.0, 0.0],
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            DriftField::Constant { phi } => check_drift(phi),
            DriftField::SineShear { amplitude } => check_drift([amplitude, 0.0, 0.0]),
        }
    }

    fn constant(&self) -> Option<[f64; 3]> {
        match *self {
            DriftField::Constant { phi } => Some(phi),
            DriftField::SineShear { .. } => None,
        }
    }
}

pub const MIN_SAMPLES: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub samples: usize,
    pub seed: u64,
    /// Paths per independently seeded stream.
    pub batch: usize,
    /// Euler–Maruyama steps across `δ`.
    pub steps: usize,
    /// Histogram cells per axis.
    pub cells: usize,
    /// Half-width of the histogram box in spreads `√δ/σ`.
    pub width: f64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        MonteCarloConfig {
            samples: 100_000,
            seed: 0,
            batch: 10_000,
            steps: 200,
            cells: 12,
            width: 4.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareReport {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub samples: usize,
    pub cells: usize,
    /// Cells whose density estimate lies more than three standard errors
    /// outside the cell-averaged bounds.
    pub violating_cells: usize,
    pub violation_fraction: f64,
    /// Same count with the two kernel products swapped.
    pub swapped_violating_cells: usize,
    pub mean_position: [f64; 3],
    /// Goodness of fit against the exact Gaussian, for constant drift only.
    pub chi_square: Option<ChiSquareReport>,
}

/// Endpoints `X_δ` of `dX = φ(X) dt + σ⁻¹ dB`, `X_0 = ξ`.
pub fn simulate_paths(
    params: &KernelParams,
    xi: [f64; 3],
    drift: &DriftField,
    config: &MonteCarloConfig,
) -> Result<Vec<[f64; 3]>> {
    drift.validate()?;
    if config.samples < MIN_SAMPLES || config.batch == 0 || config.steps == 0 {
        return Err(invalid(format!(
            "need at least {MIN_SAMPLES} samples and positive batch and steps"
        )));
    }
    let dt = params.delta / config.steps as f64;
    let noise = dt.sqrt() / params.sigma;
    let batches = config.samples.div_ceil(config.batch);
    let out: Vec<Vec<[f64; 3]>> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(b as u64);
            let count = config.batch.min(config.samples - b * config.batch);
            (0..count)
                .map(|_| {
                    let mut x = xi;
                    for _ in 0..config.steps {
                        let v = drift.at(x);
                        for d in 0..3 {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            x[d] += v[d] * dt + noise * z;
                        }
                    }
                    x
                })
                .collect()
        })
        .collect();
    Ok(out.into_iter().flatten().collect())
}

/// Average of `g` over `[a, b]`, splitting at `split` if it lies inside.
fn interval_average(g: impl Fn(f64) -> f64, a: f64, b: f64, split: f64) -> f64 {
    let integrate = |lo: f64, hi: f64| quadrature::double_exponential::integrate(&g, lo, hi, 1e-13).integral;
    let total = if a < split && split < b {
        integrate(a, split) + integrate(split, b)
    } else {
        integrate(a, b)
    };
    total / (b - a)
}

/// Histogram density of simulated endpoints against the cell averages of
/// `σ³∏p^{−σ}` and `σ³∏p^{σ}`.
pub fn monte_carlo_kernel_check(
    params: &KernelParams,
    xi: [f64; 3],
    drift: &DriftField,
    config: &MonteCarloConfig,
) -> Result<MonteCarloReport> {
    if config.cells < 2 {
        return Err(invalid("need at least 2 cells per axis"));
    }
    let paths = simulate_paths(params, xi, drift, config)?;
    let m = config.cells;
    let v0 = drift.at(xi);
    let half = config.width * params.spread() + params.delta;
    let edges: Vec<Vec<f64>> = (0..3)
        .map(|d| {
            let c = xi[d] + v0[d] * params.delta;
            (0..=m).map(|k| c - half + 2.0 * half * k as f64 / m as f64).collect()
        })
        .collect();
    let width = 2.0 * half / m as f64;
    let locate = |d: usize, v: f64| {
        let k = ((v - edges[d][0]) / width).floor();
        (k >= 0.0 && (k as usize) < m).then_some(k as usize)
    };
    let mut counts = vec![0u64; m * m * m];
    let mut mean = [0.0; 3];
    for p in &paths {
        for d in 0..3 {
            mean[d] += p[d];
        }
        if let (Some(i), Some(j), Some(k)) = (locate(0, p[0]), locate(1, p[1]), locate(2, p[2])) {
            counts[(i * m + j) * m + k] += 1;
        }
    }
    let n = paths.len() as f64;
    let mean_position = mean.map(|s| s / n);

    // the bounds factorise, so their cell averages are products of 1D averages
    let s = params.sigma;
    let axis_avg = |d: usize, beta: f64| -> Result<Vec<f64>> {
        let g = |x: f64| s * p_beta(s * xi[d], params.delta, s * x, beta).unwrap_or(f64::NAN);
        Ok((0..m).map(|k| interval_average(g, edges[d][k], edges[d][k + 1], xi[d])).collect())
    };
    let lower: Vec<Vec<f64>> = (0..3).map(|d| axis_avg(d, -s)).collect::<Result<_>>()?;
    let upper: Vec<Vec<f64>> = (0..3).map(|d| axis_avg(d, s)).collect::<Result<_>>()?;
    let volume = width.powi(3);
    let mut violating = 0;
    let mut swapped = 0;
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                let c = counts[(i * m + j) * m + k] as f64;
                let density = c / (n * volume);
                let se = c.max(1.0).sqrt() / (n * volume);
                let lo = lower[0][i] * lower[1][j] * lower[2][k];
                let hi = upper[0][i] * upper[1][j] * upper[2][k];
                if density < lo - 3.0 * se || density > hi + 3.0 * se {
                    violating += 1;
                }
                if density < hi - 3.0 * se || density > lo + 3.0 * se {
                    swapped += 1;
                }
            }
        }
    }

    let chi_square = drift.constant().map(|v| {
        let spread = params.spread();
        let probs: Vec<Vec<f64>> = (0..3)
            .map(|d| {
                let c = xi[d] + v[d] * params.delta;
                (0..m)
                    .map(|k| phi((edges[d][k + 1] - c) / spread) - phi((edges[d][k] - c) / spread))
                    .collect()
            })
            .collect();
        chi_square_fit(&counts, &probs, m, n)
    });

    Ok(MonteCarloReport {
        samples: paths.len(),
        cells: m * m * m,
        violating_cells: violating,
        violation_fraction: violating as f64 / (m * m * m) as f64,
        swapped_violating_cells: swapped,
        mean_position,
        chi_square,
    })
}

/// Pearson χ² over cells with expected count ≥ 5; everything else, including
/// mass outside the box, is pooled into one extra cell.
fn chi_square_fit(counts: &[u64], probs: &[Vec<f64>], m: usize, n: f64) -> ChiSquareReport {
    let mut statistic = 0.0;
    let mut kept = 0;
    let mut pooled_obs = n;
    let mut pooled_exp = n;
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                let e = n * probs[0][i] * probs[1][j] * probs[2][k];
                let o = counts[(i * m + j) * m + k] as f64;
                if e >= 5.0 {
                    statistic += (o - e).powi(2) / e;
                    kept += 1;
                    pooled_obs -= o;
                    pooled_exp -= e;
                }
            }
        }
    }
    if pooled_exp > 0.0 {
        statistic += (pooled_obs - pooled_exp).powi(2) / pooled_exp;
        kept += 1;
    }
    let dof = kept.max(2) - 1;
    let p_value = ChiSquared::new(dof as f64).map(|d| d.sf(statistic)).unwrap_or(f64::NAN);
    ChiSquareReport { statistic, dof, p_value }
}

/// Time for vorticity renewal, `2ν/U²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimescaleReport {
    pub nu: f64,
    pub velocity: f64,
    /// `2ν/U²`, in the time unit of `ν` and `U`.
    pub t_scale: f64,
    pub length: Option<f64>,
    pub reynolds: Option<f64>,
    /// `2/Re`, the same time in units of `κ = L/U`.
    pub dimensionless: Option<f64>,
    pub note: String,
}

pub fn vorticity_timescale(nu: f64, velocity: f64) -> Result<TimescaleReport> {
    positive("nu", nu)?;
    positive("U", velocity)?;
    Ok(TimescaleReport {
        nu,
        velocity,
        t_scale: 2.0 * nu / (velocity * velocity),
        length: None,
        reynolds: None,
        dimensionless: None,
        note: "2 nu / U^2 does not depend on the length scale L".into(),
    })
}

/// `2/Re`: the renewal time in units of `κ = L/U`.
pub fn dimensionless_timescale(scaling: &DimensionlessScaling) -> f64 {
    2.0 / scaling.reynolds()
}

/// [`vorticity_timescale`] with the scaling filled in; `κ · 2/Re` equals
/// `2ν/U²`.
pub fn scaled_timescale(scaling: &DimensionlessScaling) -> Result<TimescaleReport> {
    let mut r = vorticity_timescale(scaling.nu, scaling.velocity)?;
    r.length = Some(scaling.length);
    r.reynolds = Some(scaling.reynolds());
    r.dimensionless = Some(dimensionless_timescale(scaling));
    Ok(r)
}

/// Single-mode test vorticity `a sin(k·x)` on `grid`.
pub fn single_mode(grid: &Arc<Grid>, amplitude: [f64; 3], mode: [f64; 3]) -> VectorField {
    VectorField::from_fn(grid, |x, y, z| {
        let s = (mode[0] * x + mode[1] * y + mode[2] * z).sin();
        amplitude.map(|a| a * s)
    })
}

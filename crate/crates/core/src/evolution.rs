//! Decaying incompressible Navier–Stokes in a periodic box: Leray projection,
//! pressure, right-hand side, integrating-factor RK4 stepping, residuals of the
//! evolution equations with exact chain-rule time derivatives, initial
//! conditions and the `(L, U)` rescaling.

use std::collections::BTreeMap;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::{Array3, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynvars::{decompose, mat_mul, tensor_gradient_sq, trace, vector_gradient_sq};
use crate::error::{invalid, Error, Result};
use crate::field::ops::{self, curl, dealias_vector, divergence, gradient, laplacian, solve_poisson};
use crate::field::{Grid, ScalarField, TensorField3, VectorField};
use crate::identities::{self, convective, refine_vector, term_scale, tr2, tr3, ResidualReport};

/// Viscosity parameter: `ν` directly, or `Re` with `ν = 1/Re` in box units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Viscosity {
    Dimensional { nu: f64 },
    Dimensionless { re: f64 },
}

impl Viscosity {
    pub fn nu(&self) -> f64 {
        match *self {
            Viscosity::Dimensional { nu } => nu,
            Viscosity::Dimensionless { re } => 1.0 / re,
        }
    }

    fn validate(&self) -> Result<()> {
        let (name, v) = match *self {
            Viscosity::Dimensional { nu } => ("nu", nu),
            Viscosity::Dimensionless { re } => ("Re", re),
        };
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(invalid(format!("{name} must be positive and finite, got {v}")))
        }
    }
}

/// Tolerance on `max |k·û| / max |û|`.
pub const SOLENOIDAL_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct FlowState {
    u: VectorField,
    pub t: f64,
    pub viscosity: Viscosity,
}

impl FlowState {
    /// Checks solenoidality and the viscosity parameter; stores `u` spectrally.
    pub fn new(u: VectorField, t: f64, viscosity: Viscosity) -> Result<Self> {
        viscosity.validate()?;
        let u = u.to_spectral();
        let (max_div, scale) = spectral_divergence(&u);
        if max_div > SOLENOIDAL_TOLERANCE * scale {
            return Err(Error::NotSolenoidal { max_div, scale });
        }
        Ok(FlowState { u, t, viscosity })
    }

    pub fn u(&self) -> &VectorField {
        &self.u
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.u.grid()
    }

    pub fn nu(&self) -> f64 {
        self.viscosity.nu()
    }
}

/// `(max |k·û|, max |û|)`.
fn spectral_divergence(u: &VectorField) -> (f64, f64) {
    let div = divergence(u);
    let max_div = div.coefficients().iter().fold(0.0_f64, |m, c| m.max(c.norm()));
    let scale = u
        .components()
        .iter()
        .flat_map(|c| c.coefficients().iter().map(|v| v.norm()).collect::<Vec<_>>())
        .fold(0.0_f64, f64::max);
    (max_div, scale)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_end: f64,
    pub output_interval: f64,
    /// Courant number `C` in `dt ≤ C Δx / max|u|`.
    pub cfl: f64,
}

impl SolverConfig {
    pub fn new(dt: f64, t_end: f64, output_interval: f64) -> Result<Self> {
        let c = SolverConfig { dt, t_end, output_interval, cfl: 0.5 };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(invalid(format!("t_end must be nonnegative, got {}", self.t_end)));
        }
        if !(self.output_interval > 0.0) {
            return Err(invalid(format!(
                "output_interval must be positive, got {}",
                self.output_interval
            )));
        }
        if !(self.cfl > 0.0) {
            return Err(invalid(format!("CFL number must be positive, got {}", self.cfl)));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    /// Steps between outputs, at least one.
    pub fn output_stride(&self) -> usize {
        ((self.output_interval / self.dt).round() as usize).max(1)
    }
}

/// Length scale `L`, velocity scale `U` and viscosity `ν`; `κ = L/U`, `Re = UL/ν`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionlessScaling {
    pub length: f64,
    pub velocity: f64,
    pub nu: f64,
}

impl DimensionlessScaling {
    pub fn new(length: f64, velocity: f64, nu: f64) -> Result<Self> {
        for (name, v) in [("L", length), ("U", velocity), ("nu", nu)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(DimensionlessScaling { length, velocity, nu })
    }

    pub fn kappa(&self) -> f64 {
        self.length / self.velocity
    }

    pub fn reynolds(&self) -> f64 {
        self.velocity * self.length / self.nu
    }
}

/// Per-mode loop over spectral vector data with physical wavenumbers.
fn for_each_mode(
    grid: &Grid,
    mut f: impl FnMut(usize, usize, usize, [f64; 3]),
) {
    let kx = grid.axis_wavenumbers();
    let kz = grid.half_axis_wavenumbers();
    let (n0, n1, n2) = grid.spectral_shape();
    for i in 0..n0 {
        for j in 0..n1 {
            for k in 0..n2 {
                f(i, j, k, [kx[i], kx[j], kz[k]]);
            }
        }
    }
}

fn project_in_place(grid: &Grid, c: &mut [Array3<Complex64>; 3], dealias: bool) {
    let [cx, cy, cz] = c;
    for_each_mode(grid, |i, j, k, kv| {
        let idx = [i, j, k];
        if dealias && !grid.in_dealias_band(i, j, k) {
            cx[idx] = Complex64::default();
            cy[idx] = Complex64::default();
            cz[idx] = Complex64::default();
            return;
        }
        let k2 = kv[0] * kv[0] + kv[1] * kv[1] + kv[2] * kv[2];
        if k2 == 0.0 {
            return;
        }
        let kdotv = cx[idx] * kv[0] + cy[idx] * kv[1] + cz[idx] * kv[2];
        let s = kdotv / k2;
        cx[idx] -= s * kv[0];
        cy[idx] -= s * kv[1];
        cz[idx] -= s * kv[2];
    });
}

fn spectral_parts(v: &VectorField) -> [Array3<Complex64>; 3] {
    std::array::from_fn(|d| v.component(d).coefficients().into_owned())
}

fn from_spectral_parts(grid: &Arc<Grid>, c: [Array3<Complex64>; 3]) -> VectorField {
    VectorField::new(c.map(|a| ScalarField::spectral(grid, a).expect("spectral shape")))
        .expect("shared grid")
}

/// `û ← û − k (k·û)/|k|²` for `k ≠ 0`.
pub fn leray_project(v: &VectorField) -> VectorField {
    let grid = v.grid().clone();
    let mut c = spectral_parts(v);
    project_in_place(&grid, &mut c, false);
    from_spectral_parts(&grid, c)
}

/// Zero-mean `p` with `Δp = −∇·D[(u·∇)u]`, `D` the two-thirds truncation;
/// consistent with [`ns_rhs`].
pub fn pressure_from_velocity(u: &VectorField) -> Result<ScalarField> {
    let nl = dealias_vector(&convective(u));
    solve_poisson(&divergence(&nl).scaled(-1.0))
}

/// `∂u/∂t = νΔu − P D[(u·∇)u]`.
pub fn ns_rhs(state: &FlowState) -> VectorField {
    rhs_with(state.u(), state.nu())
}

fn rhs_with(u: &VectorField, nu: f64) -> VectorField {
    let grid = u.grid().clone();
    let nl = convective(u);
    let mut c = spectral_parts(&nl);
    project_in_place(&grid, &mut c, true);
    let lap = ops::vector_laplacian(u);
    let mut out = spectral_parts(&lap);
    for d in 0..3 {
        Zip::from(&mut out[d]).and(&c[d]).for_each(|o, &n| *o = *o * nu - n);
    }
    from_spectral_parts(&grid, out)
}

/// Per-mode wavenumber table in storage order.
struct ModeTable {
    k: Vec<[f64; 3]>,
    /// `1/|k|²`, zero where `|k| = 0`
    inv_k2: Vec<f64>,
    dealias: Vec<bool>,
}

impl ModeTable {
    fn new(grid: &Grid) -> Self {
        let len = {
            let (a, b, c) = grid.spectral_shape();
            a * b * c
        };
        let mut table = ModeTable {
            k: Vec::with_capacity(len),
            inv_k2: Vec::with_capacity(len),
            dealias: Vec::with_capacity(len),
        };
        for_each_mode(grid, |i, j, k, kv| {
            let k2 = kv[0] * kv[0] + kv[1] * kv[1] + kv[2] * kv[2];
            table.k.push(kv);
            table.inv_k2.push(if k2 == 0.0 { 0.0 } else { 1.0 / k2 });
            table.dealias.push(grid.in_dealias_band(i, j, k));
        });
        table
    }
}

fn flat(a: &Array3<Complex64>) -> &[Complex64] {
    a.as_slice().expect("standard layout")
}

fn flat_mut(a: &mut Array3<Complex64>) -> &mut [Complex64] {
    a.as_slice_mut().expect("standard layout")
}

/// Nonlinear term `P D[u × ω]` from spectral velocity, equal to `−P D[(u·∇)u]`,
/// together with `max |u|` over the grid.
fn rotational_nonlinear(
    grid: &Arc<Grid>,
    modes: &ModeTable,
    u: &[Array3<Complex64>; 3],
) -> ([Array3<Complex64>; 3], f64) {
    let shape = grid.spectral_shape();
    let mut w: [Array3<Complex64>; 3] = std::array::from_fn(|_| Array3::zeros(shape));
    {
        let [wx, wy, wz] = &mut w;
        let (wx, wy, wz) = (flat_mut(wx), flat_mut(wy), flat_mut(wz));
        let (ux, uy, uz) = (flat(&u[0]), flat(&u[1]), flat(&u[2]));
        for (m, kv) in modes.k.iter().enumerate() {
            let i = Complex64::i();
            wx[m] = i * (kv[1] * uz[m] - kv[2] * uy[m]);
            wy[m] = i * (kv[2] * ux[m] - kv[0] * uz[m]);
            wz[m] = i * (kv[0] * uy[m] - kv[1] * ux[m]);
        }
    }
    let up: Vec<Array3<f64>> = u.iter().map(|c| grid.inverse_transform(c)).collect();
    let wp: Vec<Array3<f64>> = w.iter().map(|c| grid.inverse_transform(c)).collect();
    let mut speed_sq = 0.0_f64;
    Zip::from(&up[0]).and(&up[1]).and(&up[2]).for_each(|&a, &b, &c| {
        speed_sq = speed_sq.max(a * a + b * b + c * c);
    });
    let mut cross: [Array3<f64>; 3] = std::array::from_fn(|_| Array3::zeros(grid.physical_shape()));
    for (d, out) in cross.iter_mut().enumerate() {
        let (p, q) = ((d + 1) % 3, (d + 2) % 3);
        Zip::from(out)
            .and(&up[p])
            .and(&up[q])
            .and(&wp[p])
            .and(&wp[q])
            .for_each(|o, &ap, &aq, &bp, &bq| *o = ap * bq - aq * bp);
    }
    let mut c = cross.map(|a| grid.forward_transform(&a));
    {
        let [cx, cy, cz] = &mut c;
        let (cx, cy, cz) = (flat_mut(cx), flat_mut(cy), flat_mut(cz));
        for m in 0..modes.k.len() {
            if !modes.dealias[m] {
                cx[m] = Complex64::default();
                cy[m] = Complex64::default();
                cz[m] = Complex64::default();
                continue;
            }
            let kv = modes.k[m];
            let s = (cx[m] * kv[0] + cy[m] * kv[1] + cz[m] * kv[2]) * modes.inv_k2[m];
            cx[m] -= s * kv[0];
            cy[m] -= s * kv[1];
            cz[m] -= s * kv[2];
        }
    }
    (c, speed_sq.sqrt())
}

/// Integrating-factor RK4 stepper with cached viscous factors.
pub struct Stepper {
    grid: Arc<Grid>,
    dt: f64,
    nu: f64,
    cfl: f64,
    modes: ModeTable,
    full: Vec<f64>,
    half: Vec<f64>,
}

impl Stepper {
    pub fn new(grid: &Arc<Grid>, nu: f64, config: &SolverConfig) -> Result<Self> {
        config.validate()?;
        let dt = config.dt;
        let modes = ModeTable::new(grid);
        let decay = |factor: f64| -> Vec<f64> {
            modes
                .k
                .iter()
                .map(|kv| (-nu * (kv[0] * kv[0] + kv[1] * kv[1] + kv[2] * kv[2]) * dt * factor).exp())
                .collect()
        };
        let full = decay(1.0);
        let half = decay(0.5);
        Ok(Stepper { grid: grid.clone(), dt, nu, cfl: config.cfl, modes, full, half })
    }

    /// Largest stable step `C Δx / max|u|` for the given state.
    pub fn cfl_bound(&self, state: &FlowState) -> (f64, f64) {
        let max_u = state.u().max_magnitude();
        (max_u, self.bound_for(max_u))
    }

    pub fn step(&self, state: &FlowState) -> Result<FlowState> {
        if !state.grid().same_as(&self.grid) || state.nu() != self.nu {
            return Err(invalid("stepper built for a different grid or viscosity"));
        }
        let g = &self.grid;
        let dt = self.dt;
        let (e, e2) = (&self.full[..], &self.half[..]);
        let u = spectral_parts(state.u());

        let (k1, max_velocity) = rotational_nonlinear(g, &self.modes, &u);
        let bound = self.bound_for(max_velocity);
        if dt > bound {
            return Err(Error::Cfl { max_velocity, dt, bound });
        }
        let nonlinear = |v: &[Array3<Complex64>; 3]| rotational_nonlinear(g, &self.modes, v).0;

        let mut u2 = u.clone();
        for d in 0..3 {
            for ((o, &k), &f) in flat_mut(&mut u2[d]).iter_mut().zip(flat(&k1[d])).zip(e2) {
                *o = (*o + k * (0.5 * dt)) * f;
            }
        }
        let k2 = nonlinear(&u2);
        let mut u3 = u.clone();
        for d in 0..3 {
            for ((o, &k), &f) in flat_mut(&mut u3[d]).iter_mut().zip(flat(&k2[d])).zip(e2) {
                *o = *o * f + k * (0.5 * dt);
            }
        }
        let k3 = nonlinear(&u3);
        let mut u4 = u.clone();
        for d in 0..3 {
            for (((o, &k), &f), &f2) in flat_mut(&mut u4[d]).iter_mut().zip(flat(&k3[d])).zip(e).zip(e2) {
                *o = *o * f + k * (dt * f2);
            }
        }
        let k4 = nonlinear(&u4);
        let mut next = u;
        for d in 0..3 {
            let (a, b, c, dd) = (flat(&k1[d]), flat(&k2[d]), flat(&k3[d]), flat(&k4[d]));
            for (m, o) in flat_mut(&mut next[d]).iter_mut().enumerate() {
                *o = *o * e[m] + (a[m] * e[m] + (b[m] + c[m]) * (2.0 * e2[m]) + dd[m]) * (dt / 6.0);
            }
        }
        Ok(FlowState {
            u: from_spectral_parts(g, next),
            t: state.t + dt,
            viscosity: state.viscosity,
        })
    }

    fn bound_for(&self, max_u: f64) -> f64 {
        if max_u > 0.0 {
            self.cfl * self.grid.spacing() / max_u
        } else {
            f64::INFINITY
        }
    }
}

/// One step of size `config.dt`.
pub fn step(state: &FlowState, config: &SolverConfig) -> Result<FlowState> {
    Stepper::new(state.grid(), state.nu(), config)?.step(state)
}

/// Advances to `config.t_end`, calling `observe` on the initial state and
/// after every `output_stride` steps.
pub fn integrate(
    state: FlowState,
    config: &SolverConfig,
    mut observe: impl FnMut(&FlowState) -> Result<()>,
) -> Result<FlowState> {
    let stepper = Stepper::new(state.grid(), state.nu(), config)?;
    let stride = config.output_stride();
    let t0 = state.t;
    let mut state = state;
    observe(&state)?;
    for s in 1..=config.steps() {
        state = stepper.step(&state)?;
        // avoid drift from repeated addition
        state.t = t0 + s as f64 * config.dt;
        if s % stride == 0 {
            observe(&state)?;
        }
    }
    Ok(state)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvolutionCheck {
    Vorticity,
    Energy,
    Enstrophy,
    Strain,
    TrS2,
    TrS3,
}

impl EvolutionCheck {
    pub const ALL: [EvolutionCheck; 6] = [
        EvolutionCheck::Vorticity,
        EvolutionCheck::Energy,
        EvolutionCheck::Enstrophy,
        EvolutionCheck::Strain,
        EvolutionCheck::TrS2,
        EvolutionCheck::TrS3,
    ];
}

impl FromStr for EvolutionCheck {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vorticity" => Ok(EvolutionCheck::Vorticity),
            "energy" => Ok(EvolutionCheck::Energy),
            "enstrophy" => Ok(EvolutionCheck::Enstrophy),
            "strain" => Ok(EvolutionCheck::Strain),
            "trs2" => Ok(EvolutionCheck::TrS2),
            "trs3" => Ok(EvolutionCheck::TrS3),
            other => Err(invalid(format!("unknown evolution check `{other}`"))),
        }
    }
}

/// Refined-grid kinematics with exact time derivatives of `u`, `S`, `ω`.
struct Dynamics {
    nu: f64,
    u: VectorField,
    s: TensorField3,
    omega: VectorField,
    u_t: VectorField,
    s_t: TensorField3,
    omega_t: VectorField,
    p: ScalarField,
}

impl Dynamics {
    fn new(state: &FlowState) -> Result<Self> {
        let nu = state.nu();
        let u = refine_vector(state.u())?.to_spectral();
        let u_t = rhs_with(&u, nu);
        let p = pressure_from_velocity(&u)?;
        let (s, omega) = decompose(&ops::gradient_tensor(&u));
        let (s_t, omega_t) = decompose(&ops::gradient_tensor(&u_t));
        Ok(Dynamics {
            nu,
            u: u.to_physical(),
            s: s.to_physical(),
            omega: omega.to_physical(),
            u_t: u_t.to_physical(),
            s_t: s_t.to_physical(),
            omega_t: omega_t.to_physical(),
            p,
        })
    }

    /// `q_t − L*q = q_t − νΔq + u·∇q`, with the term scale used to
    /// normalize residuals.
    fn transport(&self, q: &ScalarField, q_t: &ScalarField) -> (ScalarField, f64) {
        let diffusion = laplacian(q).scaled(self.nu).to_physical();
        let advection = ops::advect(&self.u, q);
        let scale = term_scale(&[q_t, &diffusion, &advection]);
        (&(q_t - &diffusion) + &advection, scale)
    }

    fn hessian_p(&self) -> TensorField3 {
        ops::hessian(&self.p).to_physical()
    }
}

/// `(∂/∂t − L*)q − RHS` for the selected evolution law, with every time
/// derivative taken from [`ns_rhs`] by the chain rule on the twice-refined
/// grid. Several reports are returned where a law has more than one form.
pub fn evolution_residual(state: &FlowState, which: EvolutionCheck) -> Result<Vec<ResidualReport>> {
    let d = Dynamics::new(state)?;
    Ok(match which {
        EvolutionCheck::Vorticity => {
            let sw = d.s.apply(&d.omega);
            let parts: Vec<_> = (0..3)
                .map(|i| {
                    let (lhs, scale) = d.transport(d.omega.component(i), d.omega_t.component(i));
                    ResidualReport::compare_scaled("vorticity", &lhs, sw.component(i), scale)
                })
                .collect();
            vec![ResidualReport::combine("vorticity", &parts)]
        }
        EvolutionCheck::Energy => energy_reports(&d),
        EvolutionCheck::Enstrophy => {
            let q = d.omega.norm_sq().scaled(0.5);
            let q_t = d.omega.dot(&d.omega_t);
            let (lhs, scale) = d.transport(&q, &q_t);
            let osw = d.omega.dot(&d.s.apply(&d.omega));
            let rhs = &osw - &vector_gradient_sq(&d.omega.to_spectral()).scaled(d.nu);
            vec![ResidualReport::compare_scaled("enstrophy", &lhs, &rhs, scale)]
        }
        EvolutionCheck::Strain => {
            let h = d.hessian_p();
            let enstrophy = d.omega.norm_sq();
            let sv = d.s.values();
            let mut parts = Vec::new();
            for i in 0..3 {
                for j in i..3 {
                    let (lhs, scale) = d.transport(d.s.get(i, j), d.s_t.get(i, j));
                    let mut ss = ScalarField::zeros(d.u.grid());
                    for k in 0..3 {
                        let a = ScalarField::physical(d.u.grid(), sv[3 * i + k].clone())?;
                        let b = ScalarField::physical(d.u.grid(), sv[3 * k + j].clone())?;
                        ss = &ss + &(&a * &b);
                    }
                    let ww = d.omega.component(i) * d.omega.component(j);
                    let delta = if i == j { enstrophy.clone() } else { ScalarField::zeros(d.u.grid()) };
                    let rhs = &(&ss.scaled(-1.0) + &(&delta - &ww).scaled(0.25)) - h.get(i, j);
                    parts.push(ResidualReport::compare_scaled("strain", &lhs, &rhs, scale));
                }
            }
            vec![ResidualReport::combine("strain", &parts)]
        }
        EvolutionCheck::TrS2 => trs2_reports(&d),
        EvolutionCheck::TrS3 => trs3_reports(&d),
    })
}

fn energy_reports(d: &Dynamics) -> Vec<ResidualReport> {
    let q = d.u.norm_sq();
    let q_t = d.u.dot(&d.u_t).scaled(2.0);
    let (lhs, scale) = d.transport(&q, &q_t);
    let enstrophy = d.omega.norm_sq();
    let pu = divergence(&d.u.times(&d.p.to_physical())).scaled(2.0);
    // −ν|ω|² + ν∇·(u×ω) − 2∇·(pu)
    let stated = &(&enstrophy.scaled(-d.nu) + &divergence(&d.u.cross(&d.omega)).scaled(d.nu)) - &pu;
    // −2ν|ω|² − 2ν∇·((u·∇)u) − 2∇·(pu)
    let consistent = &(&enstrophy.scaled(-2.0 * d.nu)
        - &divergence(&convective(&d.u)).scaled(2.0 * d.nu))
        - &pu;
    vec![
        ResidualReport::compare_scaled("energy[nu|w|^2]", &lhs, &stated, scale),
        ResidualReport::compare_scaled("energy[2nu|w|^2]", &lhs, &consistent, scale),
    ]
}

/// Divergence-form right-hand side of the `tr S²` law with coefficient `c` on
/// `(∇·w) u`, `w = (u·∇)u`; exact for `c = 3`.
fn trs2_divergence_rhs(d: &Dynamics, c: f64) -> ScalarField {
    let osw = d.omega.dot(&d.s.apply(&d.omega));
    let grad_w = vector_gradient_sq(&d.omega.to_spectral()).scaled(d.nu);
    let grad_p = gradient(&d.p);
    let lap_p = laplacian(&d.p).to_physical();
    let pressure_flux = ops::advect_vector(&d.u, &grad_p).sub(&d.u.times(&lap_p));
    let w = convective(&d.u);
    let div_w = divergence(&w).to_physical();
    let cubic_flux = ops::advect_vector(&d.u, &w).scaled(2.0).sub(&d.u.times(&div_w).scaled(c));
    let viscous_flux = identities::gradient_flux(&d.u);
    let mut rhs = &osw - &grad_w;
    rhs = &rhs - &divergence(&pressure_flux).scaled(2.0);
    rhs = &rhs - &divergence(&cubic_flux);
    &rhs - &divergence(&viscous_flux).scaled(2.0 * d.nu)
}

fn trs2_reports(d: &Dynamics) -> Vec<ResidualReport> {
    let q = tr2(&d.s);
    let q_t = d.s.contract(&d.s_t).scaled(2.0);
    let (lhs, scale) = d.transport(&q, &q_t);
    let h = d.hessian_p();
    let osw = d.omega.dot(&d.s.apply(&d.omega));
    let local = &(&(&tr3(&d.s).scaled(-2.0) - &osw.scaled(0.5))
        - &tensor_gradient_sq(&d.s.to_spectral()).scaled(2.0 * d.nu))
        - &d.s.contract(&h).scaled(2.0);
    let printed = trs2_divergence_rhs(d, 1.0);
    let exact = trs2_divergence_rhs(d, 3.0);
    vec![
        ResidualReport::compare_scaled("trS2_local", &lhs, &local, scale),
        ResidualReport::compare_scaled("trS2_divergence[c=1]", &lhs, &printed, scale),
        ResidualReport::compare_scaled("trS2_divergence[c=3]", &lhs, &exact, scale),
        ResidualReport::compare_scaled("trS2_forms_agree[c=1]", &local, &printed, scale),
        ResidualReport::compare_scaled("trS2_forms_agree[c=3]", &local, &exact, scale),
    ]
}

fn trs3_reports(d: &Dynamics) -> Vec<ResidualReport> {
    let grid = d.u.grid();
    let q = tr3(&d.s);
    let sv = d.s.values();
    let stv = d.s_t.values();
    let h = d.hessian_p();
    let hv = h.values();
    let ov = d.omega.values();
    // ∂_l S_ij for all l, row-major in (i, j)
    let s_spec = d.s.to_spectral();
    let grads: Vec<[Array3<f64>; 3]> = (0..9)
        .map(|idx| gradient(s_spec.get(idx / 3, idx % 3)).values())
        .collect();

    let npts = grid.points();
    let flat = |a: &Array3<f64>| a.as_slice().expect("standard layout").to_vec();
    let s_flat: Vec<Vec<f64>> = sv.iter().map(flat).collect();
    let st_flat: Vec<Vec<f64>> = stv.iter().map(flat).collect();
    let h_flat: Vec<Vec<f64>> = hv.iter().map(flat).collect();
    let w_flat: Vec<Vec<f64>> = ov.iter().map(flat).collect();
    let g_flat: Vec<[Vec<f64>; 3]> = grads
        .iter()
        .map(|g| [flat(&g[0]), flat(&g[1]), flat(&g[2])])
        .collect();

    let mut q_t = vec![0.0; npts];
    let mut rhs_common = vec![0.0; npts];
    let mut s2sq = vec![0.0; npts];
    let mut tr_s4 = vec![0.0; npts];
    for p in 0..npts {
        let s: [[f64; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| s_flat[3 * i + j][p]));
        let st: [[f64; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| st_flat[3 * i + j][p]));
        let hm: [[f64; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| h_flat[3 * i + j][p]));
        let w = [w_flat[0][p], w_flat[1][p], w_flat[2][p]];
        let s2 = mat_mul(&s, &s);
        q_t[p] = 3.0 * trace(&mat_mul(&s2, &st));
        let tr_s2 = trace(&s2);
        let w2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
        let sw: [f64; 3] = std::array::from_fn(|i| (0..3).map(|j| s[i][j] * w[j]).sum());
        let sw2 = sw.iter().map(|x| x * x).sum::<f64>();
        let mut visc = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    let dot: f64 = (0..3)
                        .map(|l| g_flat[3 * i + j][l][p] * g_flat[3 * j + k][l][p])
                        .sum();
                    visc += s[k][i] * dot;
                }
            }
        }
        let mut pressure = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                pressure += s2[i][j] * hm[i][j];
            }
        }
        rhs_common[p] = 0.75 * (tr_s2 * w2 - sw2) - 6.0 * d.nu * visc - 3.0 * pressure;
        s2sq[p] = tr_s2 * tr_s2;
        tr_s4[p] = trace(&mat_mul(&s2, &s2));
    }
    let shape = grid.physical_shape();
    let field = |v: Vec<f64>| {
        ScalarField::physical(grid, Array3::from_shape_vec(shape, v).expect("shape")).expect("shape")
    };
    let q_t = field(q_t);
    let (lhs, scale) = d.transport(&q, &q_t);
    let common = field(rhs_common);
    let by_square = &common - &field(s2sq).scaled(3.0);
    let by_quartic = &common - &field(tr_s4).scaled(3.0);
    vec![
        ResidualReport::compare_scaled("trS3[(trS^2)^2]", &lhs, &by_square, scale),
        ResidualReport::compare_scaled("trS3[trS^4]", &lhs, &by_quartic, scale),
    ]
}

/// Which `|S|⁴` reading makes the `tr S³` law vanish, from the two reports
/// returned for [`EvolutionCheck::TrS3`].
pub fn vanishing_trs3_reading(reports: &[ResidualReport], tolerance: f64) -> Option<&str> {
    reports
        .iter()
        .filter(|r| r.name.starts_with("trS3[") && r.relative < tolerance)
        .min_by(|a, b| a.relative.total_cmp(&b.relative))
        .map(|r| r.name.as_str())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    TaylorGreen,
    Abc { a: f64, b: f64, c: f64 },
    RandomIsotropic { k0: f64, energy: f64 },
}

impl InitialCondition {
    pub fn name(&self) -> &'static str {
        match self {
            InitialCondition::TaylorGreen => "taylor_green",
            InitialCondition::Abc { .. } => "abc",
            InitialCondition::RandomIsotropic { .. } => "random_isotropic",
        }
    }

    /// Numeric parameters by name.
    pub fn params(&self) -> BTreeMap<String, f64> {
        let pairs: Vec<(&str, f64)> = match *self {
            InitialCondition::TaylorGreen => vec![],
            InitialCondition::Abc { a, b, c } => vec![("a", a), ("b", b), ("c", c)],
            InitialCondition::RandomIsotropic { k0, energy } => vec![("k0", k0), ("energy", energy)],
        };
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

/// Builds the initial state; `seed` only matters for random fields.
pub fn initial_condition(
    kind: InitialCondition,
    grid: &Arc<Grid>,
    viscosity: Viscosity,
    seed: u64,
) -> Result<FlowState> {
    let base = grid.base_wavenumber();
    let u = match kind {
        InitialCondition::TaylorGreen => VectorField::from_fn(grid, |x, y, z| {
            let (x, y, z) = (base * x, base * y, base * z);
            [x.sin() * y.cos() * z.cos(), -x.cos() * y.sin() * z.cos(), 0.0]
        }),
        InitialCondition::Abc { a, b, c } => VectorField::from_fn(grid, |x, y, z| {
            let (x, y, z) = (base * x, base * y, base * z);
            [a * z.sin() + c * y.cos(), b * x.sin() + a * z.cos(), c * y.sin() + b * x.cos()]
        }),
        InitialCondition::RandomIsotropic { k0, energy } => {
            if !(k0 > 0.0 && energy > 0.0) {
                return Err(invalid(format!("k0 and energy must be positive, got {k0}, {energy}")));
            }
            random_field(grid, seed, energy, |k| {
                let k = k / base;
                k * (-(k / k0).powi(2)).exp()
            }, i64::MAX)?
        }
    };
    FlowState::new(u.to_spectral(), 0.0, viscosity)
}

/// Seeded divergence-free field with flat spectrum on the modes with every
/// `|m_i| < kmax`, scaled to kinetic energy `½⟨|u|²⟩ = energy`.
pub fn random_band_limited(grid: &Arc<Grid>, kmax: i64, energy: f64, seed: u64) -> Result<VectorField> {
    random_field(grid, seed, energy, |_| 1.0, kmax)
}

/// Seeded scalar with flat spectrum on `|m_i| < kmax`, zero mean, unit RMS.
pub fn random_band_limited_scalar(grid: &Arc<Grid>, kmax: i64, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Array3::from_shape_simple_fn(grid.physical_shape(), || StandardNormal.sample(&mut rng));
    let mut c = ops::band_limit(&ScalarField::physical(grid, noise).expect("shape"), kmax)
        .coefficients()
        .into_owned();
    c[[0, 0, 0]] = Complex64::default();
    let f = ScalarField::spectral(grid, c).expect("shape");
    let rms = f.spectral_energy().sqrt();
    f.scaled(1.0 / rms)
}

fn random_field(
    grid: &Arc<Grid>,
    seed: u64,
    energy: f64,
    amplitude: impl Fn(f64) -> f64,
    kmax: i64,
) -> Result<VectorField> {
    if !(energy > 0.0 && energy.is_finite()) {
        return Err(invalid(format!("energy must be positive, got {energy}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts: [Array3<Complex64>; 3] = std::array::from_fn(|_| {
        let noise = Array3::from_shape_simple_fn(grid.physical_shape(), || StandardNormal.sample(&mut rng));
        grid.forward_transform(&noise)
    });
    {
        let [cx, cy, cz] = &mut parts;
        for_each_mode(grid, |i, j, k, kv| {
            let idx = [i, j, k];
            let keep = grid.in_dealias_band(i, j, k) && grid.in_band(i, j, k, kmax) && (i, j, k) != (0, 0, 0);
            let a = if keep {
                amplitude((kv[0] * kv[0] + kv[1] * kv[1] + kv[2] * kv[2]).sqrt())
            } else {
                0.0
            };
            cx[idx] *= a;
            cy[idx] *= a;
            cz[idx] *= a;
        });
    }
    project_in_place(grid, &mut parts, true);
    let u = from_spectral_parts(grid, parts);
    let current = 0.5 * (0..3).map(|d| u.component(d).spectral_energy()).sum::<f64>();
    if current == 0.0 {
        return Err(invalid("random field has no energy in the requested band"));
    }
    Ok(u.scaled((energy / current).sqrt()))
}

/// `φ(x, t) = u(Lx, κt)/U` on a box shrunk by `L`, carrying `Re = UL/ν`.
pub fn nondimensionalize(state: &FlowState, scaling: &DimensionlessScaling) -> Result<FlowState> {
    let nu = match state.viscosity {
        Viscosity::Dimensional { nu } => nu,
        Viscosity::Dimensionless { .. } => return Err(invalid("state is already dimensionless")),
    };
    if ((nu - scaling.nu) / scaling.nu).abs() > 1e-12 {
        return Err(invalid(format!("state viscosity {nu} differs from scaling viscosity {}", scaling.nu)));
    }
    let grid = Grid::new(state.grid().n(), state.grid().box_length() / scaling.length)?;
    let u = rebox(state.u(), &grid, 1.0 / scaling.velocity)?;
    FlowState::new(u, state.t / scaling.kappa(), Viscosity::Dimensionless { re: scaling.reynolds() })
}

pub fn redimensionalize(state: &FlowState, scaling: &DimensionlessScaling) -> Result<FlowState> {
    let re = match state.viscosity {
        Viscosity::Dimensionless { re } => re,
        Viscosity::Dimensional { .. } => return Err(invalid("state is already dimensional")),
    };
    if ((re - scaling.reynolds()) / scaling.reynolds()).abs() > 1e-12 {
        return Err(invalid(format!("state Re {re} differs from scaling Re {}", scaling.reynolds())));
    }
    let grid = Grid::new(state.grid().n(), state.grid().box_length() * scaling.length)?;
    let u = rebox(state.u(), &grid, scaling.velocity)?;
    FlowState::new(u, state.t * scaling.kappa(), Viscosity::Dimensional { nu: scaling.nu })
}

/// Same point values (times `factor`) on a grid with another box length.
fn rebox(u: &VectorField, grid: &Arc<Grid>, factor: f64) -> Result<VectorField> {
    let parts = u
        .to_physical()
        .into_components()
        .map(|c| ScalarField::physical(grid, c.values().mapv(|v| v * factor)));
    let [a, b, c] = parts;
    Ok(VectorField::new([a?, b?, c?])?.to_spectral())
}

/// `d⟨|u|²⟩/dt = 2⟨u·∂_t u⟩`, from the right-hand side.
pub fn energy_rate(state: &FlowState) -> f64 {
    2.0 * state.u().dot(&ns_rhs(state)).mean()
}

/// Vorticity on the state grid.
pub fn vorticity(state: &FlowState) -> VectorField {
    curl(state.u())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tg_state(n: usize, nu: f64) -> FlowState {
        let g = Grid::periodic(n).unwrap();
        initial_condition(InitialCondition::TaylorGreen, &g, Viscosity::Dimensional { nu }, 0).unwrap()
    }

    #[test]
    fn projection_kills_gradients_and_keeps_solenoidal_fields() {
        let g = Grid::periodic(16).unwrap();
        let f = ScalarField::from_fn(&g, |x, y, z| (x + 2.0 * y).sin() * z.cos());
        assert!(leray_project(&gradient(&f)).max_abs() < 1e-14);
        let u = tg_state(16, 0.1).u().clone();
        assert!(leray_project(&u).sub(&u).max_abs() < 1e-14);
    }

    #[test]
    fn rejects_compressible_state_and_bad_viscosity() {
        let g = Grid::periodic(8).unwrap();
        let u = VectorField::from_fn(&g, |x, _, _| [x.sin(), 0.0, 0.0]);
        assert!(matches!(
            FlowState::new(u, 0.0, Viscosity::Dimensional { nu: 1.0 }),
            Err(Error::NotSolenoidal { .. })
        ));
        let z = VectorField::zeros(&g);
        assert!(FlowState::new(z, 0.0, Viscosity::Dimensionless { re: -1.0 }).is_err());
    }

    #[test]
    fn taylor_green_pressure() {
        // p = (cos 2x + cos 2y)(cos 2z + 2)/16
        let s = tg_state(16, 0.1);
        let p = pressure_from_velocity(s.u()).unwrap();
        let expected = ScalarField::from_fn(s.grid(), |x, y, z| {
            ((2.0 * x).cos() + (2.0 * y).cos()) * ((2.0 * z).cos() + 2.0) / 16.0
        });
        let expected = &expected - &ScalarField::constant(s.grid(), expected.mean());
        assert!((&p - &expected).max_abs() < 1e-13);
    }

    #[test]
    fn zero_state_is_stationary() {
        let g = Grid::periodic(8).unwrap();
        let s = FlowState::new(VectorField::zeros(&g), 0.0, Viscosity::Dimensional { nu: 0.1 }).unwrap();
        assert_eq!(ns_rhs(&s).max_abs(), 0.0);
        let cfg = SolverConfig::new(0.1, 1.0, 0.1).unwrap();
        let next = step(&s, &cfg).unwrap();
        assert_eq!(next.u().max_abs(), 0.0);
        assert!((next.t - 0.1).abs() < 1e-15);
    }

    #[test]
    fn cfl_violation_reported() {
        let s = tg_state(16, 0.1);
        let cfg = SolverConfig::new(1.0, 1.0, 1.0).unwrap();
        assert!(matches!(step(&s, &cfg), Err(Error::Cfl { .. })));
    }

    #[test]
    fn rotational_and_convective_forms_agree() {
        let g = Grid::periodic(16).unwrap();
        let u = random_band_limited(&g, 6, 0.5, 9).unwrap();
        let (nl, _) = rotational_nonlinear(&g, &ModeTable::new(&g), &spectral_parts(&u));
        let state = FlowState::new(u.clone(), 0.0, Viscosity::Dimensional { nu: 0.0 + 1e-300 }).unwrap();
        let rhs = ns_rhs(&state);
        let nl = from_spectral_parts(&g, nl);
        assert!(rhs.sub(&nl).max_abs() < 1e-13 * nl.max_abs());
    }

    #[test]
    fn unknown_check_is_an_error() {
        assert!("pressure".parse::<EvolutionCheck>().is_err());
        assert_eq!("trS2".parse::<EvolutionCheck>().unwrap(), EvolutionCheck::TrS2);
    }

    #[test]
    fn random_isotropic_energy_and_reproducibility() {
        let g = Grid::periodic(16).unwrap();
        let ic = InitialCondition::RandomIsotropic { k0: 4.0, energy: 0.5 };
        let visc = Viscosity::Dimensional { nu: 0.01 };
        let a = initial_condition(ic, &g, visc, 7).unwrap();
        let b = initial_condition(ic, &g, visc, 7).unwrap();
        let e = 0.5 * a.u().norm_sq().mean();
        assert!((e - 0.5).abs() < 1e-10);
        assert_eq!(*a.u().component(0).values(), *b.u().component(0).values());
        assert!(divergence(a.u()).max_abs() < 1e-12);
    }

    #[test]
    fn scaling_round_trip() {
        let s = tg_state(8, 0.05);
        let sc = DimensionlessScaling::new(1.0, 2.0, 0.05).unwrap();
        let d = nondimensionalize(&s, &sc).unwrap();
        assert!((d.u().max_abs() - 0.5 * s.u().max_abs()).abs() < 1e-14);
        assert_eq!(d.viscosity, Viscosity::Dimensionless { re: 40.0 });
        let back = redimensionalize(&d, &sc).unwrap();
        assert!(back.u().sub(s.u()).max_abs() < 1e-14);
        assert!(DimensionlessScaling::new(0.0, 1.0, 1.0).is_err());
    }
}

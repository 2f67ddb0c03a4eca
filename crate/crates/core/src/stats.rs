//! Run diagnostics: volume means of the gradient invariants, their chain-rule
//! time derivatives, the entropy functional, the `L^q` vorticity inequality
//! and joint `(trA², trA³)` histograms.
//!
//! Volume averages over the periodic box stand in for ensemble means. Every
//! mean of a divergence then vanishes exactly on the grid, so the mean
//! identities can be checked on a single field without an ensemble.
//!
//! Time derivatives are never finite differences: `∂_t u` comes from the
//! Navier–Stokes right-hand side and is pushed through the chain rule.

use std::collections::BTreeMap;

use ndarray::Zip;
use serde::{Deserialize, Serialize};

use crate::dynvars::{decompose, mat_mul, tensor_gradient_sq, trace, velocity_gradient};
use crate::error::{invalid, Result};
use crate::evolution::{ns_rhs, FlowState, InitialCondition, SolverConfig, Viscosity};
use crate::field::ops::gradient_tensor;
use crate::field::{ScalarField, TensorField3, VectorField};
use crate::identities::ResidualReport;

/// Floor on `|ω|²` when evaluating negative powers of `|ω|`.
pub const OMEGA_FLOOR: f64 = 1e-30;

/// Slack tolerance of the `L^q` inequality and the chained bounds, relative
/// to the magnitude of the terms involved.
pub const SLACK_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseOptions {
    /// Exponents `q` for `⟨|ω|^q⟩` and the `L^q` slack.
    pub q_values: Vec<f64>,
    /// Bins per axis of the `(trA², trA³)` histogram.
    pub bins: usize,
}

impl Default for DiagnoseOptions {
    fn default() -> Self {
        DiagnoseOptions {
            q_values: vec![1.0, 2.0, 3.0],
            bins: 64,
        }
    }
}

#[allow(non_snake_case)]
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub nu: f64,
    pub mean_u2: f64,
    pub mean_enstrophy: f64,
    pub mean_abs_omega: f64,
    pub mean_S2: f64,
    pub mean_trS3: f64,
    pub mean_omega_S_omega: f64,
    pub mean_grad_omega2: f64,
    pub mean_grad_S2: f64,
    /// `⟨|ω|⟩ + ⟨|u|²⟩/(√2 ν)`
    pub entropy_functional: f64,
    /// `(q, ⟨|ω|^q⟩)`
    pub mean_abs_omega_q: Vec<(f64, f64)>,
    pub qr_histogram: QrHistogram,
    /// `⟨u · ω⟩`
    pub mean_helicity: f64,
    pub mean_trA2: f64,
    pub mean_trA3: f64,
    /// `2⟨u · ∂_t u⟩`
    pub d_mean_u2_dt: f64,
    /// `2⟨S : ∂_t S⟩`
    pub d_mean_S2_dt: f64,
    /// `⟨|ω|⁻¹ ω · ∂_t ω⟩`
    pub d_mean_abs_omega_dt: f64,
    /// `⟨|ω|⁻¹ ω · Sω⟩`
    pub mean_abs_omega_stretching: f64,
    pub d_entropy_dt: f64,
    pub lq: Vec<LqReport>,
}

impl DiagnosticsRecord {
    /// Flat `(name, value)` columns for tabular output; the histogram is
    /// written separately.
    pub fn columns(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = vec![
            ("t".into(), self.t),
            ("mean_u2".into(), self.mean_u2),
            ("mean_enstrophy".into(), self.mean_enstrophy),
            ("mean_abs_omega".into(), self.mean_abs_omega),
            ("mean_S2".into(), self.mean_S2),
            ("mean_trS3".into(), self.mean_trS3),
            ("mean_omega_S_omega".into(), self.mean_omega_S_omega),
            ("mean_grad_omega2".into(), self.mean_grad_omega2),
            ("mean_grad_S2".into(), self.mean_grad_S2),
            ("entropy_functional".into(), self.entropy_functional),
        ];
        for &(q, v) in &self.mean_abs_omega_q {
            out.push((format!("mean_abs_omega_q{q}"), v));
        }
        out.extend([
            ("mean_helicity".into(), self.mean_helicity),
            ("mean_trA2".into(), self.mean_trA2),
            ("mean_trA3".into(), self.mean_trA3),
            ("d_mean_u2_dt".into(), self.d_mean_u2_dt),
            ("d_mean_S2_dt".into(), self.d_mean_S2_dt),
            ("d_mean_abs_omega_dt".into(), self.d_mean_abs_omega_dt),
            ("mean_abs_omega_stretching".into(), self.mean_abs_omega_stretching),
            ("d_entropy_dt".into(), self.d_entropy_dt),
        ]);
        for r in &self.lq {
            out.push((format!("lq_slack_q{}", r.q), r.slack));
        }
        out
    }

    /// Mean identities `⟨|S|²⟩ = ½⟨|ω|²⟩`, `⟨trS³⟩ = −¾⟨ω·Sω⟩`,
    /// `⟨|∇S|²⟩ = ½⟨|∇ω|²⟩`, plus `⟨trA²⟩ = ⟨trA³⟩ = 0`.
    ///
    /// Quadratic residuals are scaled by `⟨|A|²⟩`, cubic ones by
    /// `⟨|A|²⟩^{3/2}` and gradient ones by `⟨|∇A|²⟩`, so flows whose cubic
    /// means vanish by symmetry do not divide roundoff by roundoff.
    pub fn mean_identity_residuals(&self) -> Vec<ResidualReport> {
        let quad = self.mean_S2 + 0.5 * self.mean_enstrophy;
        let cubic = quad.powf(1.5);
        let grad = self.mean_grad_S2 + 0.5 * self.mean_grad_omega2;
        vec![
            ResidualReport::from_value("mean_S2", self.mean_S2 - 0.5 * self.mean_enstrophy, quad),
            ResidualReport::from_value("mean_trS3", self.mean_trS3 + 0.75 * self.mean_omega_S_omega, cubic),
            ResidualReport::from_value("mean_grad_S2", self.mean_grad_S2 - 0.5 * self.mean_grad_omega2, grad),
            ResidualReport::from_value("mean_trA2", self.mean_trA2, quad),
            ResidualReport::from_value("mean_trA3", self.mean_trA3, cubic),
        ]
    }

    /// Energy and strain-dissipation balances from the chain-rule rates.
    ///
    /// `energy[nu|w|^2]` is `2⟨u·∂_t u⟩ + ν⟨|ω|²⟩`, `energy[2nu|w|^2]` is
    /// `2⟨u·∂_t u⟩ + 2ν⟨|ω|²⟩`, and `strain_dissipation` is
    /// `d⟨|S|²⟩/dt + ν⟨|∇ω|²⟩ − ⟨ω·Sω⟩`.
    pub fn dissipation_residuals(&self) -> Vec<ResidualReport> {
        let rate = self.d_mean_u2_dt;
        let diss = self.nu * self.mean_enstrophy;
        let viscous = self.nu * self.mean_grad_omega2;
        vec![
            ResidualReport::from_value("energy[nu|w|^2]", rate + diss, rate.abs()),
            ResidualReport::from_value("energy[2nu|w|^2]", rate + 2.0 * diss, rate.abs()),
            ResidualReport::from_value(
                "strain_dissipation",
                self.d_mean_S2_dt + viscous - self.mean_omega_S_omega,
                self.d_mean_S2_dt.abs() + viscous + self.mean_omega_S_omega.abs(),
            ),
        ]
    }
}

/// One-dimensional bin edges plus a joint count table `counts[i][j]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram2 {
    /// Names of the first and second variable.
    pub variables: [String; 2],
    pub q_edges: Vec<f64>,
    pub r_edges: Vec<f64>,
    pub counts: Vec<Vec<u64>>,
}

impl Histogram2 {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Means of both variables from bin midpoints.
    pub fn midpoint_means(&self) -> (f64, f64) {
        let total = self.total() as f64;
        let mid = |e: &[f64], i: usize| 0.5 * (e[i] + e[i + 1]);
        let mut mq = 0.0;
        let mut mr = 0.0;
        for (i, row) in self.counts.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                mq += c as f64 * mid(&self.q_edges, i);
                mr += c as f64 * mid(&self.r_edges, j);
            }
        }
        (mq / total, mr / total)
    }

    pub fn occupied_bins(&self) -> usize {
        self.counts.iter().flatten().filter(|&&c| c > 0).count()
    }
}

/// Joint histogram of `(trA², trA³)` with the conventional
/// `(Q, R) = (−½ trA², −⅓ trA³)` relabelling alongside.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QrHistogram {
    #[serde(flatten)]
    pub traces: Histogram2,
    pub alternate: Histogram2,
}

fn edges(values: &[f64], bins: usize) -> Vec<f64> {
    let mut lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        lo -= 0.5;
        hi += 0.5;
    }
    (0..=bins)
        .map(|i| if i == bins { hi } else { lo + (hi - lo) * i as f64 / bins as f64 })
        .collect()
}

fn bin_index(v: f64, e: &[f64]) -> usize {
    let bins = e.len() - 1;
    let (lo, hi) = (e[0], e[bins]);
    let i = ((v - lo) / (hi - lo) * bins as f64).floor();
    (i.max(0.0) as usize).min(bins - 1)
}

/// Histogram of two equally long samples; each axis spans its own range.
pub fn joint_histogram(q: &[f64], r: &[f64], bins: usize, variables: [&str; 2]) -> Result<Histogram2> {
    if bins < 2 {
        return Err(invalid(format!("need at least 2 bins, got {bins}")));
    }
    if q.len() != r.len() || q.is_empty() {
        return Err(invalid("histogram samples must be non-empty and of equal length"));
    }
    let q_edges = edges(q, bins);
    let r_edges = edges(r, bins);
    let mut counts = vec![vec![0u64; bins]; bins];
    for (&a, &b) in q.iter().zip(r) {
        counts[bin_index(a, &q_edges)][bin_index(b, &r_edges)] += 1;
    }
    Ok(Histogram2 {
        variables: variables.map(String::from),
        q_edges,
        r_edges,
        counts,
    })
}

fn relabel(h: &Histogram2) -> Histogram2 {
    // both maps are decreasing, so bin order reverses on each axis
    let flip = |e: &[f64], f: f64| e.iter().rev().map(|x| f * x).collect::<Vec<_>>();
    Histogram2 {
        variables: ["Q".into(), "R".into()],
        q_edges: flip(&h.q_edges, -0.5),
        r_edges: flip(&h.r_edges, -1.0 / 3.0),
        counts: h
            .counts
            .iter()
            .rev()
            .map(|row| row.iter().rev().copied().collect())
            .collect(),
    }
}

fn qr_from_gradient(a: &TensorField3, bins: usize) -> Result<QrHistogram> {
    let tr_a2 = a.pointwise(|m| trace(&mat_mul(m, m)));
    let tr_a3 = a.pointwise(|m| trace(&mat_mul(&mat_mul(m, m), m)));
    let q = tr_a2.values();
    let r = tr_a3.values();
    let traces = joint_histogram(
        q.as_slice().expect("standard layout"),
        r.as_slice().expect("standard layout"),
        bins,
        ["trA2", "trA3"],
    )?;
    let alternate = relabel(&traces);
    Ok(QrHistogram { traces, alternate })
}

/// Joint histogram of pointwise `(trA², trA³)`.
pub fn qr_invariants(state: &FlowState, bins: usize) -> Result<QrHistogram> {
    if bins < 2 {
        return Err(invalid(format!("need at least 2 bins, got {bins}")));
    }
    let a = velocity_gradient(state.u())?.to_physical();
    qr_from_gradient(&a, bins)
}

/// Terms of the `L^q` inequality
/// `d⟨|ω|^q⟩/dt ≤ −4(1 − 1/q) ν ⟨|∇|ω|^{q/2}|²⟩ + q⟨|ω|^{q−2} ω·Sω⟩`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LqReport {
    pub q: f64,
    /// `q⟨|ω|^{q−2} ω · ∂_t ω⟩`
    pub d_mean_dt: f64,
    /// `−4(1 − 1/q) ν ⟨|∇|ω|^{q/2}|²⟩`
    pub gradient_term: f64,
    /// `q⟨|ω|^{q−2} ω·Sω⟩`
    pub stretching_term: f64,
    /// `qν⟨|ω|^{q−2} |∇ω|²⟩`; unbounded at `q < 2` when `ω` has zeros, so
    /// it is reported but kept out of `scale`.
    pub viscous_scale: f64,
    pub slack: f64,
    pub scale: f64,
}

impl LqReport {
    pub fn holds(&self, tolerance: f64) -> bool {
        self.slack >= -tolerance * self.scale
    }
}

/// Pointwise ingredients shared by the `L^q` terms.
struct VorticityFields {
    nu: f64,
    /// `|ω|²`
    w2: ScalarField,
    /// `ω · ∂_t ω`
    w_wt: ScalarField,
    /// `ω · Sω`
    w_sw: ScalarField,
    /// `|∇ω|²`
    grad_w2: ScalarField,
    /// `|(∇ω)ᵀ ω|² = |ω|² |∇|ω||²`
    grad_abs: ScalarField,
}

impl VorticityFields {
    fn lq(&self, q: f64) -> LqReport {
        let g = self.w2.grid();
        let w2 = self.w2.values();
        let parts: Vec<_> = [&self.w_wt, &self.w_sw, &self.grad_w2, &self.grad_abs]
            .iter()
            .map(|f| f.values())
            .collect();
        let shape = g.physical_shape();
        let mut fields = [
            ndarray::Array3::<f64>::zeros(shape),
            ndarray::Array3::<f64>::zeros(shape),
            ndarray::Array3::<f64>::zeros(shape),
            ndarray::Array3::<f64>::zeros(shape),
        ];
        let [lhs, stretch, visc, grad] = &mut fields;
        Zip::from(lhs)
            .and(stretch)
            .and(&*w2)
            .and(&*parts[0])
            .and(&*parts[1])
            .for_each(|l, s, &w2, &wt, &sw| {
                let weight = w2.max(OMEGA_FLOOR).powf(0.5 * q - 1.0);
                *l = weight * wt;
                *s = weight * sw;
            });
        Zip::from(visc)
            .and(grad)
            .and(&*w2)
            .and(&*parts[2])
            .and(&*parts[3])
            .for_each(|v, gr, &w2, &gw, &ga| {
                let w2 = w2.max(OMEGA_FLOOR);
                let weight = w2.powf(0.5 * q - 1.0);
                *v = weight * gw;
                *gr = weight * ga / w2;
            });
        let mean = |a: &ndarray::Array3<f64>| crate::field::ordered_sum(a.iter().copied()) / a.len() as f64;
        let d_mean_dt = q * mean(&fields[0]);
        let stretching_term = q * mean(&fields[1]);
        let viscous_scale = q * self.nu * mean(&fields[2]);
        // |∇|ω|^{q/2}|² = (q/2)² |ω|^{q−2} |∇|ω||²
        let gradient_term = -4.0 * (1.0 - 1.0 / q) * self.nu * 0.25 * q * q * mean(&fields[3]);
        let slack = gradient_term + stretching_term - d_mean_dt;
        LqReport {
            q,
            d_mean_dt,
            gradient_term,
            stretching_term,
            viscous_scale,
            slack,
            scale: d_mean_dt.abs() + gradient_term.abs() + stretching_term.abs(),
        }
    }
}

fn check_q(q: f64) -> Result<()> {
    if q >= 1.0 && q.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("q must be finite and at least 1, got {q}")))
    }
}

struct Sample {
    u: VectorField,
    u_t: VectorField,
    a: TensorField3,
    s: TensorField3,
    s_t: TensorField3,
    omega: VectorField,
    vort: VorticityFields,
}

fn sample(state: &FlowState) -> Result<Sample> {
    let u = state.u().to_physical();
    let u_t = ns_rhs(state).to_physical();
    let a = velocity_gradient(&u)?;
    let (s, omega) = decompose(&a);
    let (s_t, omega_t) = decompose(&gradient_tensor(&u_t));
    let grad_w = gradient_tensor(&omega).to_physical();
    let (s, omega, omega_t) = (s.to_physical(), omega.to_physical(), omega_t.to_physical());

    let g = grad_w.grid();
    let grad_abs = {
        // component k of (∇ω)ᵀω is Σ_i ω_i ∂_k ω_i
        let col = |k: usize| {
            let terms = (0..3).map(|i| grad_w.get(i, k) * omega.component(i));
            terms.fold(ScalarField::zeros(g), |acc, t| &acc + &t)
        };
        VectorField::new([col(0), col(1), col(2)])?.norm_sq()
    };
    let vort = VorticityFields {
        nu: state.nu(),
        w2: omega.norm_sq(),
        w_wt: omega.dot(&omega_t),
        w_sw: omega.dot(&s.apply(&omega)),
        grad_w2: grad_w.contract(&grad_w),
        grad_abs,
    };
    Ok(Sample {
        u,
        u_t,
        a: a.to_physical(),
        s,
        s_t: s_t.to_physical(),
        omega,
        vort,
    })
}

/// `L^q` slack at a single state.
pub fn lq_inequality_check(state: &FlowState, q: f64) -> Result<LqReport> {
    check_q(q)?;
    Ok(sample(state)?.vort.lq(q))
}

pub fn diagnose(state: &FlowState, options: &DiagnoseOptions) -> Result<DiagnosticsRecord> {
    for &q in &options.q_values {
        check_q(q)?;
    }
    let smp = sample(state)?;
    let nu = state.nu();
    let v = &smp.vort;

    let mean_u2 = smp.u.norm_sq().mean();
    let mean_enstrophy = v.w2.mean();
    let abs_omega = v.w2.map(f64::sqrt);
    let mean_abs_omega = abs_omega.mean();
    let mean_abs_omega_q = options
        .q_values
        .iter()
        .map(|&q| (q, abs_omega.map(|w| w.powf(q)).mean()))
        .collect();
    let q1 = v.lq(1.0);
    let d_mean_u2_dt = 2.0 * smp.u.dot(&smp.u_t).mean();
    let root2nu = std::f64::consts::SQRT_2 * nu;

    Ok(DiagnosticsRecord {
        t: state.t,
        nu,
        mean_u2,
        mean_enstrophy,
        mean_abs_omega,
        mean_S2: smp.s.contract(&smp.s).mean(),
        mean_trS3: smp.s.pointwise(|m| trace(&mat_mul(&mat_mul(m, m), m))).mean(),
        mean_omega_S_omega: v.w_sw.mean(),
        mean_grad_omega2: v.grad_w2.mean(),
        mean_grad_S2: tensor_gradient_sq(&smp.s).mean(),
        entropy_functional: mean_abs_omega + mean_u2 / root2nu,
        mean_abs_omega_q,
        qr_histogram: qr_from_gradient(&smp.a, options.bins)?,
        mean_helicity: smp.u.dot(&smp.omega).mean(),
        mean_trA2: smp.a.pointwise(|m| trace(&mat_mul(m, m))).mean(),
        mean_trA3: smp.a.pointwise(|m| trace(&mat_mul(&mat_mul(m, m), m))).mean(),
        d_mean_u2_dt,
        d_mean_S2_dt: 2.0 * smp.s.contract(&smp.s_t).mean(),
        d_mean_abs_omega_dt: q1.d_mean_dt,
        mean_abs_omega_stretching: q1.stretching_term,
        d_entropy_dt: q1.d_mean_dt + d_mean_u2_dt / root2nu,
        lq: options.q_values.iter().map(|&q| v.lq(q)).collect(),
    })
}

/// What a series was produced from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub n: usize,
    pub box_length: f64,
    #[serde(rename = "nu_or_Re")]
    pub nu_or_re: Viscosity,
    pub dt: f64,
    pub t_end: f64,
    pub output_interval: f64,
    pub seed: u64,
    pub ic_kind: String,
    pub ic_params: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(state: &FlowState, config: &SolverConfig, seed: u64, ic: &InitialCondition) -> Self {
        RunManifest {
            n: state.grid().n(),
            box_length: state.grid().box_length(),
            nu_or_re: state.viscosity,
            dt: config.dt,
            t_end: config.t_end,
            output_interval: config.output_interval,
            seed,
            ic_kind: ic.name().to_string(),
            ic_params: ic.params(),
        }
    }
}

/// Records in strictly increasing, uniformly spaced time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSeries {
    pub manifest: RunManifest,
    records: Vec<DiagnosticsRecord>,
}

impl RunSeries {
    pub fn new(manifest: RunManifest) -> Self {
        RunSeries {
            manifest,
            records: Vec::new(),
        }
    }

    pub fn records(&self) -> &[DiagnosticsRecord] {
        &self.records
    }

    pub fn push(&mut self, record: DiagnosticsRecord) -> Result<()> {
        let n = self.records.len();
        if n > 0 {
            let last = self.records[n - 1].t;
            if !(record.t > last) {
                return Err(invalid(format!("sample time {} does not follow {last}", record.t)));
            }
            if n > 1 {
                let step = last - self.records[n - 2].t;
                if ((record.t - last) - step).abs() > 1e-9 * step {
                    return Err(invalid(format!("non-uniform output interval at t = {}", record.t)));
                }
            }
        }
        self.records.push(record);
        Ok(())
    }
}

/// The chained bounds
/// `d⟨|ω|⟩/dt ≤ ⟨|ω|⁻¹ω·Sω⟩ ≤ √⟨|S|²⟩ √⟨|ω|²⟩ = ⟨|ω|²⟩/√2` at one sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainedBounds {
    pub t: f64,
    pub d_mean_abs_omega_dt: f64,
    pub stretching: f64,
    pub cauchy_schwarz: f64,
    pub half_root2_enstrophy: f64,
    pub holds: bool,
}

impl ChainedBounds {
    pub fn at(r: &DiagnosticsRecord) -> Self {
        let cauchy_schwarz = r.mean_S2.sqrt() * r.mean_enstrophy.sqrt();
        let half_root2_enstrophy = r.mean_enstrophy / std::f64::consts::SQRT_2;
        let first_scale = r.d_mean_abs_omega_dt.abs() + r.mean_abs_omega_stretching.abs();
        let holds = r.d_mean_abs_omega_dt - r.mean_abs_omega_stretching <= SLACK_TOLERANCE * first_scale
            && r.mean_abs_omega_stretching - cauchy_schwarz <= SLACK_TOLERANCE * first_scale.max(cauchy_schwarz)
            && (cauchy_schwarz - half_root2_enstrophy).abs() <= SLACK_TOLERANCE * half_root2_enstrophy;
        ChainedBounds {
            t: r.t,
            d_mean_abs_omega_dt: r.d_mean_abs_omega_dt,
            stretching: r.mean_abs_omega_stretching,
            cauchy_schwarz,
            half_root2_enstrophy,
            holds,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub samples: usize,
    pub tolerance: f64,
    /// Largest `E(t_{k+1}) − E(t_k)`, zero if the series never increases.
    pub max_violation: f64,
    pub violations: usize,
    pub chained: Vec<ChainedBounds>,
}

impl EntropyReport {
    pub fn monotone(&self) -> bool {
        self.violations == 0
    }

    pub fn chained_hold(&self) -> bool {
        self.chained.iter().all(|c| c.holds)
    }
}

/// Checks `E(t_{k+1}) ≤ E(t_k) + 1e-10 E(t_0)` for the entropy functional
/// and evaluates the chained bounds at every sample.
pub fn entropy_monotonicity_check(records: &[DiagnosticsRecord]) -> Result<EntropyReport> {
    if records.len() < 3 {
        return Err(invalid(format!(
            "entropy check needs at least 3 samples, got {}",
            records.len()
        )));
    }
    let tolerance = 1e-10 * records[0].entropy_functional.abs();
    let mut max_violation = 0.0_f64;
    let mut violations = 0;
    for w in records.windows(2) {
        let rise = w[1].entropy_functional - w[0].entropy_functional;
        max_violation = max_violation.max(rise);
        if rise > tolerance {
            violations += 1;
        }
    }
    Ok(EntropyReport {
        samples: records.len(),
        tolerance,
        max_violation,
        violations,
        chained: records.iter().map(ChainedBounds::at).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid;

    #[test]
    fn histogram_edges_and_relabel() {
        let h = joint_histogram(&[0.0, 1.0, 2.0, 4.0], &[0.0, 0.0, 0.0, 3.0], 4, ["a", "b"]).unwrap();
        assert_eq!(h.q_edges, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(h.counts[0][0], 1);
        assert_eq!(h.counts[1][0], 1);
        assert_eq!(h.counts[2][0], 1);
        assert_eq!(h.counts[3][3], 1);
        let alt = relabel(&h);
        assert_eq!(alt.q_edges, vec![-2.0, -1.5, -1.0, -0.5, -0.0]);
        assert_eq!(alt.counts[0][0], 1);
        assert_eq!(alt.total(), 4);
        assert!(joint_histogram(&[0.0], &[0.0], 1, ["a", "b"]).is_err());
    }

    #[test]
    fn zero_state_record() {
        let g = Grid::periodic(8).unwrap();
        let s = FlowState::new(VectorField::zeros(&g), 0.0, Viscosity::Dimensional { nu: 0.1 }).unwrap();
        let r = diagnose(&s, &DiagnoseOptions::default()).unwrap();
        assert_eq!(r.entropy_functional, 0.0);
        assert_eq!(r.qr_histogram.traces.occupied_bins(), 1);
        for (name, v) in r.columns() {
            assert_eq!(v, 0.0, "{name}");
        }
    }

    #[test]
    fn rejects_small_q_and_short_series() {
        let g = Grid::periodic(8).unwrap();
        let s = FlowState::new(VectorField::zeros(&g), 0.0, Viscosity::Dimensional { nu: 0.1 }).unwrap();
        assert!(lq_inequality_check(&s, 0.5).is_err());
        let r = diagnose(&s, &DiagnoseOptions::default()).unwrap();
        assert!(entropy_monotonicity_check(&[r.clone(), r]).is_err());
    }
}

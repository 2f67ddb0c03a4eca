use serde::Serialize;
use vortexlab::evolution::DimensionlessScaling;
use vortexlab::field::Grid;
use vortexlab::heatkernel::{
    exact_linear_vorticity_step, f_pm_terms, kernel_bounds_check, monte_carlo_kernel_check, p_beta,
    p_beta_quadrature, scaled_timescale, short_time_vorticity_step, single_mode, vorticity_timescale, Branch,
    DriftField, KernelBoundsReport, KernelParams, Lattice, MonteCarloConfig, MonteCarloReport,
};

use crate::args::KernelArgs;
use crate::failure::Failure;
use crate::output::{print_json, write_json};

const P_BETA_TOLERANCE: f64 = 1e-10;
const SANDWICH_TOLERANCE: f64 = 1e-12;
const LIMIT_TOLERANCE: f64 = 1e-6;
const MC_VIOLATION_FRACTION: f64 = 0.01;

#[derive(Serialize)]
struct PBetaCheck {
    points: usize,
    max_relative_gap: f64,
    passes: bool,
}

#[derive(Serialize)]
struct PsiLimitRow {
    sigma: f64,
    /// `|x−ξ| − δ = +0.5` with `σ²δ = 1`: f₊ Ψ-term.
    above: f64,
    /// `|x−ξ| − δ = −0.5` with `δ = 1`: f₊ and f₋ Ψ-terms.
    below_plus: f64,
    below_minus: f64,
    /// `|x−ξ| = δ`: f₊ Ψ-term.
    on_sphere: f64,
}

#[derive(Serialize)]
struct PsiLimits {
    rows: Vec<PsiLimitRow>,
    /// Limits 0, σ², 0 and σ²/2 reached within tolerance at every σ.
    sigma_squared_scaling: bool,
    /// Limits 0, σ, 0 and σ/2.
    sigma_scaling: bool,
}

#[derive(Serialize)]
struct PropagatorCheck {
    reynolds: f64,
    deltas: Vec<f64>,
    max_differences: Vec<f64>,
    decreasing: bool,
}

#[derive(Serialize)]
struct KernelReport {
    params: KernelParams,
    memory_factor: f64,
    p_beta: PBetaCheck,
    sandwich: Vec<KernelBoundsReport>,
    /// `σ³∏p^{−σ} ≤ Γ ≤ σ³∏p^{σ}` on every lattice.
    sandwich_holds: bool,
    /// The ordering with the two products swapped.
    swapped_sandwich_holds: bool,
    psi_limits: PsiLimits,
    propagator: PropagatorCheck,
    #[serde(skip_serializing_if = "Option::is_none")]
    monte_carlo: Option<Vec<(DriftField, MonteCarloReport)>>,
    passed: bool,
}

fn p_beta_check() -> Result<PBetaCheck, Failure> {
    let mut worst = 0.0_f64;
    let mut points = 0;
    for beta in [-5.0, -2.5, 0.0, 1.0, 2.5, 5.0] {
        for r in [0.0, 0.5, 1.0, 2.5, 5.0] {
            for t in [1e-3, 1e-2, 0.1, 1.0, 10.0] {
                let a = p_beta(0.0, t, r, beta)?;
                let b = p_beta_quadrature(0.0, t, r, beta)?;
                if a != b {
                    worst = worst.max((a - b).abs() / b.abs());
                }
                points += 1;
            }
        }
    }
    Ok(PBetaCheck { points, max_relative_gap: worst, passes: worst < P_BETA_TOLERANCE })
}

fn psi_limits() -> Result<PsiLimits, Failure> {
    let mut rows = Vec::new();
    for sigma in [10.0, 100.0, 1000.0] {
        let d = 1.0 / (sigma * sigma);
        rows.push(PsiLimitRow {
            sigma,
            above: f_pm_terms(sigma, 0.0, d, d + 0.5, Branch::Plus)?.psi_term,
            below_plus: f_pm_terms(sigma, 0.0, 1.0, 0.5, Branch::Plus)?.psi_term,
            below_minus: f_pm_terms(sigma, 0.0, 1.0, 0.5, Branch::Minus)?.psi_term,
            on_sphere: f_pm_terms(sigma, 0.0, 0.3, 0.3, Branch::Plus)?.psi_term,
        });
    }
    let matches = |scale: fn(f64) -> f64| {
        rows.iter().all(|r| {
            let s = scale(r.sigma);
            (r.above / s).abs() < LIMIT_TOLERANCE
                && (r.below_plus / s - 1.0).abs() < LIMIT_TOLERANCE
                && (r.below_minus / s).abs() < LIMIT_TOLERANCE
                && (r.on_sphere / s - 0.5).abs() < LIMIT_TOLERANCE
        })
    };
    let sigma_squared_scaling = matches(|s| s * s);
    let sigma_scaling = matches(|s| s);
    Ok(PsiLimits { rows, sigma_squared_scaling, sigma_scaling })
}

fn propagator_check(reynolds: f64) -> Result<PropagatorCheck, Failure> {
    let g = Grid::periodic(32)?;
    let theta = single_mode(&g, [0.0, 1.0, -1.0], [1.0, 0.0, 0.0]);
    let gamma = [[1.0, 0.0, 0.0], [0.0, -0.5, 0.0], [0.0, 0.0, -0.5]];
    let deltas = vec![0.02, 0.01, 0.005];
    let mut max_differences = Vec::new();
    for &delta in &deltas {
        let p = KernelParams::from_reynolds(reynolds, delta)?;
        let approx = short_time_vorticity_step(&theta, &gamma, &p)?;
        let exact = exact_linear_vorticity_step(&theta, &gamma, [0.0; 3], &p)?;
        max_differences.push(approx.sub(&exact).max_abs());
    }
    let decreasing = max_differences.windows(2).all(|w| w[1] < w[0]);
    Ok(PropagatorCheck { reynolds, deltas, max_differences, decreasing })
}

fn timescale(a: &KernelArgs) -> Result<(), Failure> {
    let (Some(nu), Some(u)) = (a.nu, a.u) else {
        return Err(Failure::Usage("--timescale needs --nu and --u".into()));
    };
    let report = match a.length {
        Some(length) => scaled_timescale(&DimensionlessScaling::new(length, u, nu)?)?,
        None => vorticity_timescale(nu, u)?,
    };
    crate::output::emit(format!("{:.1e}", report.t_scale));
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join("timescale.json"), &report)?;
    }
    Ok(())
}

pub fn run(a: &KernelArgs) -> Result<(), Failure> {
    if a.timescale {
        return timescale(a);
    }
    let params = match (a.sigma, a.re) {
        (Some(s), _) => KernelParams::new(s, a.delta)?,
        (None, Some(re)) => KernelParams::from_reynolds(re, a.delta)?,
        (None, None) => KernelParams::from_reynolds(100.0, a.delta)?,
    };
    let lattice = Lattice { points: a.lattice_points, width: a.lattice_width };
    let sandwich = [[0.0; 3], [1.0; 3]]
        .into_iter()
        .map(|drift| kernel_bounds_check(&params, drift, &lattice))
        .collect::<Result<Vec<_>, _>>()?;
    let sandwich_holds = sandwich.iter().all(|r| r.holds(SANDWICH_TOLERANCE));
    let swapped_sandwich_holds = sandwich.iter().all(|r| r.swapped_holds(SANDWICH_TOLERANCE));
    let p_beta = p_beta_check()?;
    let psi_limits = psi_limits()?;
    let propagator = propagator_check(params.reynolds())?;

    let monte_carlo = if a.monte_carlo {
        let cfg = MonteCarloConfig { samples: a.samples, seed: a.seed, ..Default::default() };
        let drifts = [
            DriftField::Constant { phi: [0.0; 3] },
            DriftField::Constant { phi: [1.0; 3] },
            DriftField::SineShear { amplitude: 0.5 },
        ];
        let mut out = Vec::new();
        for d in drifts {
            out.push((d, monte_carlo_kernel_check(&params, [0.0; 3], &d, &cfg)?));
        }
        Some(out)
    } else {
        None
    };
    let mc_ok = monte_carlo
        .as_ref()
        .is_none_or(|v| v.iter().all(|(_, r)| r.violation_fraction <= MC_VIOLATION_FRACTION));

    let passed = p_beta.passes && sandwich_holds && psi_limits.sigma_squared_scaling && propagator.decreasing && mc_ok;
    let report = KernelReport {
        memory_factor: params.memory_factor(),
        params,
        p_beta,
        sandwich,
        sandwich_holds,
        swapped_sandwich_holds,
        psi_limits,
        propagator,
        monte_carlo,
        passed,
    };
    match &a.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            write_json(&dir.join("kernel.json"), &report)?;
            crate::output::emit(serde_json::json!({ "passed": passed, "sandwich_holds": sandwich_holds }));
        }
        None => print_json(&report)?,
    }
    if passed {
        Ok(())
    } else {
        Err(Failure::Check("heat-kernel suite failed; see report".into()))
    }
}

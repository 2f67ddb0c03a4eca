//! Acceptance run. Prints one PASS/FAIL line per criterion; criteria whose
//! stated form conflicts with the exact relation also print the corrected
//! companion underneath. Exits nonzero if any criterion fails as stated.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::Instant;

use vortexlab::dynvars::{decompose, velocity_gradient};
use vortexlab::evolution::{
    evolution_residual, initial_condition, random_band_limited, random_band_limited_scalar, vanishing_trs3_reading,
    EvolutionCheck, FlowState, InitialCondition, SolverConfig, Stepper, Viscosity,
};
use vortexlab::field::ops::{curl, divergence};
use vortexlab::field::{Grid, ScalarField, VectorField};
use vortexlab::heatkernel::{
    exact_linear_vorticity_step, f_pm_terms, kernel_bounds_check, monte_carlo_kernel_check, p_beta,
    p_beta_quadrature, short_time_vorticity_step, single_mode, Branch, DriftField, KernelParams, Lattice,
    MonteCarloConfig,
};
use vortexlab::identities::{exactness_suite, mean_identities, ResidualReport};
use vortexlab::stats::{entropy_monotonicity_check, DiagnosticsRecord, RunSeries};

struct Outcome {
    id: u8,
    title: &'static str,
    pass: bool,
    detail: String,
    companions: Vec<(String, bool, String)>,
}

impl Outcome {
    fn new(id: u8, title: &'static str, pass: bool, detail: String) -> Self {
        Outcome { id, title, pass, detail, companions: Vec::new() }
    }

    fn companion(mut self, title: &str, pass: bool, detail: String) -> Self {
        self.companions.push((title.to_string(), pass, detail));
        self
    }

    fn print(&self) {
        println!("criterion {:>2}  {}  {}: {}", self.id, verdict(self.pass), self.title, self.detail);
        for (title, pass, detail) in &self.companions {
            println!("              companion {}  {}: {}", verdict(*pass), title, detail);
        }
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn worst<'a>(reports: impl IntoIterator<Item = &'a ResidualReport>) -> (String, f64) {
    reports
        .into_iter()
        .map(|r| (r.name.clone(), r.relative))
        .fold((String::from("-"), 0.0), |a, b| if b.1 > a.1 { b } else { a })
}

/// Keeps only the modes with `|k| < kmax`.
fn spherical_band(u: &VectorField, kmax: i64) -> VectorField {
    let g = u.grid().clone();
    u.to_spectral().map_components(|c| {
        let mut a = c.coefficients().into_owned();
        for ((i, j, k), z) in a.indexed_iter_mut() {
            let (mx, my, mz) = (g.mode(i), g.mode(j), g.mode(k));
            if mx * mx + my * my + mz * mz >= kmax * kmax {
                *z = Default::default();
            }
        }
        ScalarField::spectral(&g, a).unwrap()
    })
}

fn band_limited_state(n: usize, kmax: i64, nu: f64, seed: u64) -> FlowState {
    let g = Grid::periodic(n).unwrap();
    let u = spherical_band(&random_band_limited(&g, kmax, 0.5, seed).unwrap(), kmax);
    FlowState::new(u, 0.0, Viscosity::Dimensional { nu }).unwrap()
}

fn taylor_green(n: usize) -> FlowState {
    let g = Grid::periodic(n).unwrap();
    initial_condition(InitialCondition::TaylorGreen, &g, Viscosity::Dimensionless { re: 100.0 }, 0).unwrap()
}

fn exactness() -> Outcome {
    let start = Instant::now();
    let state = band_limited_state(32, 8, 0.01, 2024);
    let g = state.grid();
    let scalar = random_band_limited_scalar(g, 8, 99);
    let reports = exactness_suite(state.u(), &scalar, state.nu()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let stated: Vec<_> = reports.iter().filter(|r| r.name != "trA3_divergence[c=1.5]").collect();
    let corrected: Vec<_> = reports.iter().filter(|r| r.name != "trA3_divergence[c=0.5]").collect();
    let (sn, sv) = worst(stated.iter().copied());
    let (cn, cv) = worst(corrected.iter().copied());
    Outcome::new(
        1,
        "exactness suite, n=32, |k|<8",
        sv < 1e-9 && secs < 30.0,
        format!("worst {sn} {sv:.2e} (< 1e-9), {} identities, {secs:.1} s (< 30 s)", stated.len()),
    )
    .companion(
        "trA3 flux coefficient 3/2",
        cv < 1e-9 && secs < 30.0,
        format!("worst {cn} {cv:.2e} (< 1e-9)"),
    )
}

fn box_means() -> Outcome {
    let mut reports = Vec::new();
    let random = band_limited_state(32, 8, 0.01, 2024);
    let tg = taylor_green(32);
    for s in [&random, &tg] {
        reports.extend(mean_identities(s.u()).unwrap());
    }
    let (name, rel) = worst(&reports);
    let (sym, _) = decompose(&velocity_gradient(tg.u()).unwrap());
    let enstrophy = curl(tg.u()).norm_sq().mean();
    let s2 = sym.to_physical().contract(&sym.to_physical()).mean();
    let oracle = (enstrophy - 0.75).abs().max((s2 - 0.375).abs());
    Outcome::new(
        2,
        "mean identities on random and Taylor-Green",
        rel < 1e-11 && oracle < 1e-10,
        format!(
            "worst {name} {rel:.2e} (< 1e-11); Taylor-Green <|w|^2> = {enstrophy:.15}, <|S|^2> = {s2:.15}, gap {oracle:.1e} (< 1e-10)"
        ),
    )
}

fn evolution_laws() -> Outcome {
    let states = [band_limited_state(32, 8, 0.01, 2024), band_limited_state(16, 5, 0.05, 11)];
    let mut all = Vec::new();
    let mut readings = Vec::new();
    for s in &states {
        for which in EvolutionCheck::ALL {
            let reports = evolution_residual(s, which).unwrap();
            if which == EvolutionCheck::TrS3 {
                readings.push(vanishing_trs3_reading(&reports, 1e-8).map(str::to_string));
            }
            all.extend(reports);
        }
    }
    let is_trs3 = |r: &&ResidualReport| r.name.starts_with("trS3[");
    let tolerance = |r: &ResidualReport| if r.name.starts_with("trS2_forms_agree") { 1e-9 } else { 1e-8 };
    let check = |skip: &[&str]| {
        let kept: Vec<&ResidualReport> = all.iter().filter(|r| !is_trs3(r) && !skip.contains(&r.name.as_str())).collect();
        let failing: Vec<String> = kept
            .iter()
            .filter(|r| r.relative >= tolerance(r))
            .map(|r| format!("{} {:.2e}", r.name, r.relative))
            .collect();
        let (n, v) = worst(kept.iter().copied());
        (failing, n, v)
    };
    let reading_ok = readings.iter().all(Option::is_some);
    let reading = readings.first().cloned().flatten().unwrap_or_else(|| "none".into());

    let (failing, _, _) = check(&["energy[2nu|w|^2]", "trS2_divergence[c=3]", "trS2_forms_agree[c=3]"]);
    let (c_failing, cn, cv) = check(&["energy[nu|w|^2]", "trS2_divergence[c=1]", "trS2_forms_agree[c=1]"]);
    let detail = if failing.is_empty() {
        format!("all below 1e-8, trS3 reading {reading}")
    } else {
        format!("failing {}; trS3 reading {reading}", failing.join(", "))
    };
    Outcome::new(3, "evolution laws with chain-rule time derivatives", failing.is_empty() && reading_ok, detail)
        .companion(
            "energy with 2nu<|w|^2>, trS2 flux coefficient 3",
            c_failing.is_empty() && reading_ok,
            format!("worst {cn} {cv:.2e}, trS3 reading {reading}"),
        )
}

fn vxl(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_vxl"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

struct Run {
    label: &'static str,
    secs: f64,
    records: Vec<DiagnosticsRecord>,
    stats_exit: Option<i32>,
}

fn long_run(dir: &Path, label: &'static str, ic: &[&str]) -> Run {
    let mut args = vec!["simulate", "--n", "64", "--re", "100", "--dt", "1e-3", "--t-end", "2", "--output-interval", "0.1"];
    args.extend_from_slice(ic);
    args.extend_from_slice(&["--out", label]);
    let start = Instant::now();
    let o = vxl(dir, &args);
    let secs = start.elapsed().as_secs_f64();
    assert!(o.status.success(), "{label}: {}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.join(label).join("series.json")).unwrap();
    let series: RunSeries = serde_json::from_str(&text).unwrap();
    let stats_exit = vxl(dir, &["stats", label]).status.code();
    Run { label, secs, records: series.records().to_vec(), stats_exit }
}

fn entropy(runs: &[Run]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for r in runs {
        let rep = entropy_monotonicity_check(&r.records).unwrap();
        let ok = rep.monotone() && rep.chained_hold() && r.secs < 300.0;
        pass &= ok;
        parts.push(format!(
            "{} {} samples, max rise {:.2e} (tol {:.2e}), chained {}, {:.0} s",
            r.label,
            rep.samples,
            rep.max_violation,
            rep.tolerance,
            if rep.chained_hold() { "hold" } else { "violated" },
            r.secs
        ));
    }
    Outcome::new(4, "entropy functional non-increasing, n=64, Re=100, t in [0,2]", pass, parts.join("; "))
}

fn energy_law(runs: &[Run]) -> Outcome {
    let mut stated = 0.0_f64;
    let mut corrected = 0.0_f64;
    let mut strain = 0.0_f64;
    let mut samples = 0;
    for r in runs {
        for rec in &r.records {
            for rep in rec.dissipation_residuals() {
                match rep.name.as_str() {
                    "energy[nu|w|^2]" => stated = stated.max(rep.relative),
                    "energy[2nu|w|^2]" => corrected = corrected.max(rep.relative),
                    _ => strain = strain.max(rep.relative),
                }
            }
            samples += 1;
        }
    }
    Outcome::new(
        5,
        "energy law 2<u.u_t> + nu<|w|^2> = 0 and strain dissipation",
        stated < 1e-10 && strain < 1e-9,
        format!("{samples} states, energy max relative {stated:.2e} (< 1e-10), strain {strain:.2e} (< 1e-9)"),
    )
    .companion(
        "2<u.u_t> + 2nu<|w|^2> = 0",
        corrected < 1e-10 && strain < 1e-9,
        format!("energy max relative {corrected:.2e}, strain {strain:.2e}"),
    )
}

fn lq_slack(runs: &[Run]) -> Outcome {
    let mut pass = true;
    let mut worst = f64::INFINITY;
    let mut count = 0;
    for r in runs {
        for rec in &r.records {
            for q in [1.0, 2.0, 3.0] {
                let l = rec.lq.iter().find(|l| l.q == q).expect("q sampled");
                pass &= l.holds(1e-9);
                worst = worst.min(l.slack / l.scale.max(1e-300));
                count += 1;
            }
        }
    }
    let stats: Vec<String> = runs.iter().map(|r| format!("vxl stats {} exit {:?}", r.label, r.stats_exit)).collect();
    Outcome::new(
        6,
        "L^q slack nonnegative at q = 1, 2, 3",
        pass,
        format!("{count} samples, min slack/scale {worst:.2e} (>= -1e-9); {}", stats.join(", ")),
    )
}

fn kernel_suite() -> Outcome {
    let start = Instant::now();
    let mut p_gap = 0.0_f64;
    for beta in [-5.0, -2.5, -1.0, 0.0, 0.7, 2.0, 5.0] {
        for r in [0.0, 0.01, 0.5, 1.0, 2.5, 5.0] {
            for t in [1e-3, 1e-2, 0.3, 1.0, 4.0, 10.0] {
                let a = p_beta(0.0, t, r, beta).unwrap();
                let b = p_beta_quadrature(0.0, t, r, beta).unwrap();
                if a != b {
                    p_gap = p_gap.max((a - b).abs() / b.abs());
                }
            }
        }
    }

    let lattice = Lattice::default();
    let (mut stated_min, mut corrected_min) = (f64::INFINITY, f64::INFINITY);
    for re in [10.0, 100.0, 1000.0] {
        for delta in [1e-3, 1e-2, 1e-1] {
            let params = KernelParams::from_reynolds(re, delta).unwrap();
            for drift in [[0.0; 3], [1.0; 3]] {
                let r = kernel_bounds_check(&params, drift, &lattice).unwrap();
                stated_min = stated_min.min(r.swapped_lower_slack.min(r.swapped_upper_slack));
                corrected_min = corrected_min.min(r.lower_slack.min(r.upper_slack));
            }
        }
    }

    // (σ, above, below₊, below₋, on sphere) Ψ-terms
    let rows: Vec<[f64; 5]> = [10.0, 100.0, 1000.0]
        .iter()
        .map(|&s: &f64| {
            let d = 1.0 / (s * s);
            [
                s,
                f_pm_terms(s, 0.0, d, d + 0.5, Branch::Plus).unwrap().psi_term,
                f_pm_terms(s, 0.0, 1.0, 0.5, Branch::Plus).unwrap().psi_term,
                f_pm_terms(s, 0.0, 1.0, 0.5, Branch::Minus).unwrap().psi_term,
                f_pm_terms(s, 0.0, 0.3, 0.3, Branch::Plus).unwrap().psi_term,
            ]
        })
        .collect();
    let limits = |scale: fn(f64) -> f64| {
        rows.iter().all(|r| {
            let s = scale(r[0]);
            (r[1] / s).abs() < 1e-6 && (r[2] / s - 1.0).abs() < 1e-6 && (r[3] / s).abs() < 1e-6 && (r[4] / s - 0.5).abs() < 1e-6
        })
    };
    let sigma_limits = limits(|s| s);
    let sigma2_limits = limits(|s| s * s);
    let below: Vec<String> = rows.iter().map(|r| format!("{:.4e}", r[2])).collect();

    let params = KernelParams::from_reynolds(100.0, 0.1).unwrap();
    let cfg = MonteCarloConfig { samples: 100_000, seed: 1, ..Default::default() };
    let mut mc_cells = 0;
    let mut mc_fraction = 0.0_f64;
    for d in [
        DriftField::Constant { phi: [0.0; 3] },
        DriftField::Constant { phi: [1.0; 3] },
        DriftField::SineShear { amplitude: 0.5 },
    ] {
        let r = monte_carlo_kernel_check(&params, [0.0; 3], &d, &cfg).unwrap();
        mc_cells += r.violating_cells;
        mc_fraction = mc_fraction.max(r.violation_fraction);
    }
    let mc_ok = mc_fraction <= 0.01;
    let secs = start.elapsed().as_secs_f64();
    let common = p_gap < 1e-10 && mc_ok && secs < 120.0;

    Outcome::new(
        7,
        "heat-kernel suite",
        common && stated_min >= -1e-12 && sigma_limits,
        format!(
            "p_beta gap {p_gap:.2e}; sandwich s^3 prod p^s <= G <= s^3 prod p^-s min slack {stated_min:.3e}; \
             below-sphere f+ Psi-term -> sigma: {}; MC {mc_cells} violating cells, fraction {mc_fraction:.4}; {secs:.1} s",
            sigma_limits
        ),
    )
    .companion(
        "s^3 prod p^-s <= G <= s^3 prod p^s, Psi-term limits in sigma^2",
        common && corrected_min >= -1e-12 && sigma2_limits,
        format!(
            "min slack {corrected_min:.3e} (>= -1e-12); limits 0, sigma^2, 0, sigma^2/2: {sigma2_limits} (below-sphere f+ at sigma = 10, 100, 1000: {})",
            below.join(", ")
        ),
    )
}

fn propagator(dir: &Path) -> Outcome {
    let g = Grid::periodic(32).unwrap();
    let theta = single_mode(&g, [0.0, 1.0, -1.0], [1.0, 0.0, 0.0]);
    let gamma = [[1.0, 0.0, 0.0], [0.0, -0.5, 0.0], [0.0, 0.0, -0.5]];
    let diffs: Vec<f64> = [0.02, 0.01, 0.005]
        .iter()
        .map(|&delta| {
            let p = KernelParams::from_reynolds(100.0, delta).unwrap();
            let approx = short_time_vorticity_step(&theta, &gamma, &p).unwrap();
            let exact = exact_linear_vorticity_step(&theta, &gamma, [0.0; 3], &p).unwrap();
            approx.sub(&exact).max_abs()
        })
        .collect();
    let decreasing = diffs.windows(2).all(|w| w[1] < w[0]);
    let print = |extra: &[&str]| {
        let mut args = vec!["kernel", "--timescale", "--nu", "1e-6", "--u", "1"];
        args.extend_from_slice(extra);
        String::from_utf8_lossy(&vxl(dir, &args).stdout).trim().to_string()
    };
    let printed = print(&[]);
    let by_length: Vec<String> = ["0.1", "1", "100"].iter().map(|l| print(&["--length", l])).collect();
    let invariant = by_length.iter().all(|s| *s == printed);
    Outcome::new(
        8,
        "short-time propagator and vorticity time-scale",
        decreasing && printed == "2.0e-6" && invariant,
        format!(
            "max |approx - exact| at delta 0.02, 0.01, 0.005: {:.3e}, {:.3e}, {:.3e}; timescale prints {printed}, with L = 0.1, 1, 100: {}",
            diffs[0],
            diffs[1],
            diffs[2],
            by_length.join(", ")
        ),
    )
}

fn advance(state: &FlowState, dt: f64, steps: usize) -> FlowState {
    let cfg = SolverConfig::new(dt, dt * steps as f64, dt * steps as f64).unwrap();
    let stepper = Stepper::new(state.grid(), state.nu(), &cfg).unwrap();
    let mut s = state.clone();
    for _ in 0..steps {
        s = stepper.step(&s).unwrap();
    }
    s
}

fn solver_gates() -> Outcome {
    let g: Arc<Grid> = Grid::periodic(16).unwrap();
    let random = FlowState::new(random_band_limited(&g, 5, 0.5, 1).unwrap(), 0.0, Viscosity::Dimensional { nu: 0.01 })
        .unwrap();
    let div_before = divergence(random.u()).max_abs();
    let drift = (divergence(advance(&random, 0.01, 1000).u()).max_abs() - div_before).abs();

    let smooth = FlowState::new(random_band_limited(&g, 4, 0.02, 5).unwrap(), 0.0, Viscosity::Dimensional { nu: 0.02 })
        .unwrap();
    // t = 0.8 throughout
    let reference = advance(&smooth, 0.0125, 64);
    let errs: Vec<f64> = [(0.2, 4), (0.1, 8), (0.05, 16)]
        .iter()
        .map(|&(dt, n)| advance(&smooth, dt, n).u().sub(reference.u()).max_abs())
        .collect();
    let orders = [(errs[0] / errs[1]).log2(), (errs[1] / errs[2]).log2()];

    let nu = 0.1;
    let mode = VectorField::from_fn(&g, |x, _, _| [0.0, 0.0, (3.0 * x).sin()]);
    let stokes = FlowState::new(mode, 0.0, Viscosity::Dimensional { nu }).unwrap();
    let decayed = advance(&stokes, 0.01, 100);
    let factor = (-nu * 9.0 * 1.0_f64).exp();
    let expected = VectorField::from_fn(&g, |x, _, _| [0.0, 0.0, factor * (3.0 * x).sin()]);
    let stokes_err = decayed.u().sub(&expected).max_abs();

    Outcome::new(
        9,
        "solver quality gates",
        drift < 1e-11 && orders.iter().all(|&o| o >= 3.9) && stokes_err < 1e-10,
        format!(
            "divergence drift over 1000 steps {drift:.2e} (< 1e-11); RK4 orders {:.3}, {:.3} (>= 3.9); Stokes decay error {stokes_err:.2e} (< 1e-10)",
            orders[0], orders[1]
        ),
    )
}

fn determinism(dir: &Path) -> Outcome {
    let mut same = Vec::new();
    for out in ["det_a", "det_b"] {
        let o = vxl(
            dir,
            &[
                "simulate", "--ic", "random", "--k0", "4", "--energy", "0.5", "--seed", "7", "--n", "16", "--t-end",
                "0.1", "--output-interval", "0.02", "--out", out,
            ],
        );
        assert!(o.status.success());
        let v = vxl(dir, &["verify", "--ic", "random", "--seed", "7", "--n", "16", "--out", &format!("{out}/verify")]);
        assert!(v.status.code().is_some());
        let k = vxl(dir, &["kernel", "--re", "100", "--delta", "0.1", "--monte-carlo", "--seed", "3", "--out", &format!("{out}/kernel")]);
        assert!(k.status.code().is_some());
    }
    let files = [
        "diagnostics.csv",
        "qr_histogram.json",
        "series.json",
        "manifest.json",
        "verify/verify.json",
        "verify/verify_summary.json",
        "kernel/kernel.json",
    ];
    for f in files {
        let a = std::fs::read(dir.join("det_a").join(f)).unwrap();
        let b = std::fs::read(dir.join("det_b").join(f)).unwrap();
        same.push((f, a == b));
    }
    let differing: Vec<&str> = same.iter().filter(|(_, s)| !s).map(|(f, _)| *f).collect();
    Outcome::new(
        10,
        "repeated runs are bit-identical",
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} artifacts identical", files.len())
        } else {
            format!("differing: {}", differing.join(", "))
        },
    )
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().unwrap();
    let mut outcomes = Vec::new();
    let mut record = |o: Outcome| {
        o.print();
        outcomes.push((o.id, o.pass));
    };
    record(exactness());
    record(box_means());
    record(evolution_laws());
    let runs = [
        long_run(dir.path(), "taylor_green", &["--ic", "taylor-green"]),
        long_run(dir.path(), "random", &["--ic", "random", "--k0", "4", "--energy", "0.5", "--seed", "7"]),
    ];
    record(entropy(&runs));
    record(energy_law(&runs));
    record(lq_slack(&runs));
    record(kernel_suite());
    record(propagator(dir.path()));
    record(solver_gates());
    record(determinism(dir.path()));
    let failed: Vec<String> = outcomes.iter().filter(|(_, p)| !p).map(|(id, _)| id.to_string()).collect();
    println!("{} of {} criteria pass", outcomes.len() - failed.len(), outcomes.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failing as stated: {}", failed.join(", "));
        ExitCode::FAILURE
    }
}

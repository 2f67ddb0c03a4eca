use serde::Serialize;
use vortexlab::evolution::{
    evolution_residual, random_band_limited_scalar, vanishing_trs3_reading, EvolutionCheck, FlowState, Viscosity,
};
use vortexlab::field::snapshot::{FieldKind, Snapshot};
use vortexlab::identities::{exactness_suite, mean_identities, ResidualReport};

use crate::args::VerifyArgs;
use crate::failure::Failure;
use crate::output::OutputDir;
use crate::simulate::build_state;

pub const POINTWISE_TOLERANCE: f64 = 1e-9;
pub const MEAN_TOLERANCE: f64 = 1e-11;
pub const EVOLUTION_TOLERANCE: f64 = 1e-8;
pub const FORMS_AGREE_TOLERANCE: f64 = 1e-9;

/// Forms computed alongside the exact ones for comparison; they are
/// reported but do not decide the exit code.
const ALTERNATE_FORMS: [&str; 5] = [
    "trA3_divergence[c=0.5]",
    "energy[nu|w|^2]",
    "trS2_divergence[c=1]",
    "trS2_forms_agree[c=1]",
    // the tr S^3 readings are gated jointly through `trs3_vanishing_reading`
    "trS3[",
];

#[derive(Serialize)]
pub struct CheckedReport {
    #[serde(flatten)]
    pub report: ResidualReport,
    pub group: &'static str,
    pub threshold: f64,
    pub passes: bool,
    pub gating: bool,
}

#[derive(Serialize)]
pub struct VerifySummary {
    pub source: String,
    pub n: usize,
    pub nu: f64,
    pub reports: usize,
    pub gating_reports: usize,
    pub failed: Vec<String>,
    pub alternate_forms_failing: Vec<String>,
    pub trs3_vanishing_reading: Option<String>,
    pub passed: bool,
}

fn check(report: ResidualReport, group: &'static str, threshold: f64) -> CheckedReport {
    let gating = !ALTERNATE_FORMS.iter().any(|alt| report.name.starts_with(alt));
    let passes = report.passes(threshold);
    CheckedReport { report, group, threshold, passes, gating }
}

/// Every identity, mean relation and evolution law for one state.
pub fn verify_state(state: &FlowState, scalar_seed: u64) -> Result<(Vec<CheckedReport>, Option<String>), Failure> {
    let g = state.grid();
    let scalar = random_band_limited_scalar(g, (g.n() / 4) as i64, scalar_seed);
    let mut out = Vec::new();
    for r in exactness_suite(state.u(), &scalar, state.nu())? {
        out.push(check(r, "pointwise", POINTWISE_TOLERANCE));
    }
    for r in mean_identities(state.u())? {
        out.push(check(r, "mean", MEAN_TOLERANCE));
    }
    let mut trs3 = Vec::new();
    for which in EvolutionCheck::ALL {
        let reports = evolution_residual(state, which)?;
        if which == EvolutionCheck::TrS3 {
            trs3.extend(reports.iter().cloned());
        }
        for r in reports {
            let tol = if r.name.starts_with("trS2_forms_agree") { FORMS_AGREE_TOLERANCE } else { EVOLUTION_TOLERANCE };
            out.push(check(r, "evolution", tol));
        }
    }
    let reading = vanishing_trs3_reading(&trs3, EVOLUTION_TOLERANCE).map(str::to_string);
    Ok((out, reading))
}

fn load_snapshot(a: &VerifyArgs) -> Result<Option<FlowState>, Failure> {
    let Some(path) = &a.snapshot else { return Ok(None) };
    let snap = Snapshot::load(path)?;
    if snap.kind != FieldKind::Vector {
        return Err(Failure::Usage(format!("{} does not hold a vector field", path.display())));
    }
    let viscosity = match (a.flow.nu, a.flow.re) {
        (Some(nu), _) => Viscosity::Dimensional { nu },
        (None, Some(re)) => Viscosity::Dimensionless { re },
        (None, None) => Viscosity::Dimensional { nu: snap.viscosity },
    };
    Ok(Some(FlowState::new(snap.to_vector()?, snap.time, viscosity)?))
}

pub fn run(a: &VerifyArgs) -> Result<(), Failure> {
    let (state, source) = match load_snapshot(a)? {
        Some(s) => (s, a.snapshot.as_ref().map(|p| p.display().to_string()).unwrap_or_default()),
        None => {
            let (s, ic) = build_state(&a.flow)?;
            (s, ic.name().to_string())
        }
    };
    let out = OutputDir::claim(&a.out)?;
    let (reports, reading) = verify_state(&state, a.scalar_seed)?;
    let failed: Vec<String> = reports
        .iter()
        .filter(|r| r.gating && !r.passes)
        .map(|r| r.report.name.clone())
        .collect();
    let alternate_forms_failing = reports
        .iter()
        .filter(|r| !r.gating && !r.passes)
        .map(|r| r.report.name.clone())
        .collect();
    let summary = VerifySummary {
        source,
        n: state.grid().n(),
        nu: state.nu(),
        reports: reports.len(),
        gating_reports: reports.iter().filter(|r| r.gating).count(),
        passed: failed.is_empty() && reading.is_some(),
        failed,
        alternate_forms_failing,
        trs3_vanishing_reading: reading,
    };
    out.write_json("verify.json", &reports)?;
    out.write_json("verify_summary.json", &summary)?;
    crate::output::print_json(&summary)?;
    if summary.passed {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "{} residual check(s) failed: {}",
            summary.failed.len() + usize::from(summary.trs3_vanishing_reading.is_none()),
            summary.failed.join(", ")
        )))
    }
}

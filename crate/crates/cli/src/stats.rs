use std::collections::BTreeMap;

use serde::Serialize;
use vortexlab::stats::{entropy_monotonicity_check, EntropyReport, LqReport, RunSeries, SLACK_TOLERANCE};

use crate::args::StatsArgs;
use crate::failure::Failure;
use crate::output::OutputDir;

#[derive(Serialize)]
struct LqSample {
    t: f64,
    #[serde(flatten)]
    report: LqReport,
    holds: bool,
}

#[derive(Serialize)]
struct StatsReport {
    samples: usize,
    entropy: EntropyReport,
    entropy_monotone: bool,
    chained_bounds_hold: bool,
    lq: Vec<LqSample>,
    lq_violations: usize,
    /// Largest relative residual of each balance law over the run.
    max_balance_residuals: BTreeMap<String, f64>,
    passed: bool,
}

pub fn run(a: &StatsArgs) -> Result<(), Failure> {
    let path = a.run.join("series.json");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Failure::Io(format!("cannot read {}: {e}", path.display())))?;
    let series: RunSeries = serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("{} is not a run series: {e}", path.display())))?;
    let out = OutputDir::claim(&a.run)?;
    let records = series.records();
    let entropy = entropy_monotonicity_check(records)?;

    let lq: Vec<LqSample> = records
        .iter()
        .flat_map(|r| {
            r.lq.iter().map(move |l| LqSample { t: r.t, report: l.clone(), holds: l.holds(SLACK_TOLERANCE) })
        })
        .collect();
    let lq_violations = lq.iter().filter(|s| !s.holds).count();

    let mut max_balance_residuals = BTreeMap::new();
    for r in records {
        for rep in r.dissipation_residuals().into_iter().chain(r.mean_identity_residuals()) {
            let e = max_balance_residuals.entry(rep.name).or_insert(0.0_f64);
            *e = e.max(rep.relative);
        }
    }

    let entropy_monotone = entropy.monotone();
    let chained_bounds_hold = entropy.chained_hold();
    let report = StatsReport {
        samples: records.len(),
        entropy_monotone,
        chained_bounds_hold,
        entropy,
        lq,
        lq_violations,
        max_balance_residuals,
        passed: entropy_monotone && chained_bounds_hold && lq_violations == 0,
    };
    out.write_json("stats.json", &report)?;
    crate::output::emit(serde_json::json!({
            "samples": report.samples,
            "entropy_monotone": entropy_monotone,
            "chained_bounds_hold": chained_bounds_hold,
            "lq_violations": lq_violations,
            "passed": report.passed,
        })
    );
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "inequality violated: entropy monotone {entropy_monotone}, chained bounds {chained_bounds_hold}, {lq_violations} L^q violation(s)"
        )))
    }
}

use serde::Serialize;
use serde_json::json;
use vortexlab::evolution::{initial_condition, FlowState, InitialCondition, SolverConfig, Stepper, Viscosity};
use vortexlab::field::snapshot::Snapshot;
use vortexlab::field::Grid;
use vortexlab::stats::{diagnose, DiagnoseOptions, QrHistogram, RunManifest, RunSeries};
use vortexlab::Error;

use crate::args::{FlowArgs, IcKind, SimulateArgs};
use crate::failure::Failure;
use crate::output::OutputDir;

pub fn viscosity(flow: &FlowArgs) -> Viscosity {
    match (flow.nu, flow.re) {
        (Some(nu), _) => Viscosity::Dimensional { nu },
        (None, Some(re)) => Viscosity::Dimensionless { re },
        (None, None) => Viscosity::Dimensionless { re: 100.0 },
    }
}

pub fn initial_kind(flow: &FlowArgs) -> Result<InitialCondition, Failure> {
    Ok(match flow.ic {
        IcKind::TaylorGreen => InitialCondition::TaylorGreen,
        IcKind::Abc => {
            let [a, b, c] = flow.abc[..] else {
                return Err(Failure::Usage(format!("--abc needs three values, got {}", flow.abc.len())));
            };
            InitialCondition::Abc { a, b, c }
        }
        IcKind::Random => InitialCondition::RandomIsotropic { k0: flow.k0, energy: flow.energy },
    })
}

pub fn build_state(flow: &FlowArgs) -> Result<(FlowState, InitialCondition), Failure> {
    let grid = Grid::new(flow.n, flow.box_length)?;
    let ic = initial_kind(flow)?;
    let state = initial_condition(ic, &grid, viscosity(flow), flow.seed)?;
    Ok((state, ic))
}

#[derive(Serialize)]
struct HistogramEntry<'a> {
    t: f64,
    #[serde(flatten)]
    histogram: &'a QrHistogram,
}

pub fn run(a: &SimulateArgs) -> Result<(), Failure> {
    // validate everything before any compute or output
    let config = SolverConfig { dt: a.dt, t_end: a.t_end, output_interval: a.output_interval, cfl: a.cfl };
    config.validate()?;
    if let Some(q) = a.q_list.iter().find(|q| !(q.is_finite() && **q >= 1.0)) {
        return Err(Failure::Usage(format!("q values must be finite and >= 1, got {q}")));
    }
    if a.bins < 2 {
        return Err(Failure::Usage(format!("need at least 2 histogram bins, got {}", a.bins)));
    }
    let (state, ic) = build_state(&a.flow)?;
    let stepper = Stepper::new(state.grid(), state.nu(), &config)?;

    let out = OutputDir::claim(&a.out)?;
    let manifest = RunManifest::new(&state, &config, a.flow.seed, &ic);
    out.write_json("manifest.json", &manifest)?;
    if a.snapshots {
        std::fs::create_dir_all(out.path("snapshots"))?;
    }

    let options = DiagnoseOptions { q_values: a.q_list.clone(), bins: a.bins };
    let mut series = RunSeries::new(manifest);
    let mut observe = |s: &FlowState, index: usize| -> Result<(), Failure> {
        series.push(diagnose(s, &options)?)?;
        if a.snapshots {
            Snapshot::from_vector(s.u(), s.t, s.nu()).save(out.path(&format!("snapshots/u_{index:05}.vxl")))?;
        }
        Ok(())
    };

    let stride = config.output_stride();
    let t0 = state.t;
    let mut state = state;
    observe(&state, 0)?;
    for s in 1..=config.steps() {
        state = match stepper.step(&state) {
            Ok(next) => next,
            Err(e @ Error::Cfl { .. }) => {
                let (max_velocity, bound) = stepper.cfl_bound(&state);
                return Err(Failure::Numerical {
                    message: e.to_string(),
                    state: json!({
                        "step": s,
                        "t": state.t,
                        "max_velocity": max_velocity,
                        "dt": config.dt,
                        "dt_bound": bound,
                        "mean_u2": state.u().norm_sq().mean(),
                    }),
                });
            }
            Err(e) => return Err(e.into()),
        };
        state.t = t0 + s as f64 * config.dt;
        if s % stride == 0 {
            observe(&state, s / stride)?;
        }
    }

    let records = series.records();
    let mut csv = csv::Writer::from_path(out.path("diagnostics.csv"))?;
    if let Some(first) = records.first() {
        csv.write_record(first.columns().iter().map(|(name, _)| name.as_str()))?;
    }
    for r in records {
        csv.write_record(r.columns().iter().map(|(_, v)| v.to_string()))?;
    }
    csv.flush()?;

    let histograms: Vec<_> = records
        .iter()
        .map(|r| HistogramEntry { t: r.t, histogram: &r.qr_histogram })
        .collect();
    out.write_json("qr_histogram.json", &histograms)?;
    out.write_json("series.json", &series)?;
    crate::output::emit(json!({ "out": a.out, "records": records.len(), "t_final": state.t })
    );
    Ok(())
}

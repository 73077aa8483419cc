use std::path::{Path, PathBuf};

use bbmsf_core::design::{
    conduction_losses, output_capacitor_minimum, params_at, solve_operating_point, stress_envelope,
    INPUT_CAPACITOR_MINIMUM,
};
use bbmsf_core::dmppt::evaluate_scenario;
use bbmsf_core::small_signal::{
    analytic_response, log_space, numeric_frequency_response, write_bode_csv, FrequencyResponse, TransferKind,
};
use bbmsf_core::steady_state::device_stresses;
use bbmsf_core::switched_sim::{find_periodic_steady_state, Signal};
use serde_json::{json, Value};

use crate::config::{check, load, load_run_config, DesignFile, ScenarioFile};
use crate::output::{csv_num, emit, quantity, to_json};
use crate::{verify as checks, BodeMethod, CliError, TableFormat};

pub fn analyze(config: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let cfg = load_run_config(config)?;
    let p = cfg.converter;
    let po = cfg.load.power(p.vo());
    let report = device_stresses(&p, po, cfg.reset_duty_model);
    let losses = cfg.parasitics.map(|par| conduction_losses(&p, po, &par, cfg.reset_duty_model));
    let doc = json!({
        "converter": p,
        "load": cfg.load,
        "report": report,
        "losses": losses,
    });
    emit(&to_json(&doc), out.or(cfg.output.report.as_deref()))?;
    Ok(())
}

pub fn simulate(config: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let cfg = load_run_config(config)?;
    let w = find_periodic_steady_state(&cfg.converter, &cfg.load, &cfg.sim)?;
    let mut buf = Vec::new();
    w.write_csv(&mut buf)?;
    emit(&String::from_utf8_lossy(&buf), out.or(cfg.output.waveform.as_deref()))?;
    eprintln!(
        "periodic steady state after {} periods (residual {:.2e}); mean vo = {:.6} V",
        w.periods_run,
        w.residual,
        w.metrics(Signal::Vo).avg
    );
    Ok(())
}

pub struct BodeArgs {
    pub config: PathBuf,
    pub kinds: Vec<String>,
    pub fmin: f64,
    pub fmax: f64,
    pub points: usize,
    pub method: BodeMethod,
    pub steps_per_period: Option<usize>,
    pub amplitude: f64,
    pub out: Option<PathBuf>,
}

/// Worker pool for sweeps, capped by `BBMSF_THREADS` when set.
fn sweep_pool() -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("BBMSF_THREADS") {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => builder = builder.num_threads(n),
            _ => return Err(CliError::Config(vec![format!("BBMSF_THREADS must be a positive integer, got {v:?}")])),
        }
    }
    builder.build().map_err(|e| CliError::Config(vec![format!("cannot start worker threads: {e}")]))
}

pub fn bode(args: &BodeArgs) -> Result<(), CliError> {
    let mut cfg = load_run_config(&args.config)?;
    let mut problems = Vec::new();
    let mut kinds = Vec::new();
    for k in &args.kinds {
        match k.parse::<TransferKind>() {
            Ok(kind) => kinds.push(kind),
            Err(e) => problems.push(e.to_string()),
        }
    }
    if !(args.fmin > 0.0 && args.fmin.is_finite()) {
        problems.push("--fmin must be positive".into());
    }
    if !(args.fmax >= args.fmin && args.fmax.is_finite()) {
        problems.push("--fmax must not be below --fmin".into());
    }
    if args.points == 0 {
        problems.push("--points must be at least 1".into());
    }
    if !(args.amplitude > 0.0 && args.amplitude < 0.5) {
        problems.push("--amplitude must be in (0, 0.5)".into());
    }
    let analytic_wanted = args.method != BodeMethod::Numeric;
    if analytic_wanted && cfg.load.resistance().is_none() {
        problems.push("the closed-form response needs a resistive load".into());
    }
    if let Some(s) = args.steps_per_period {
        cfg.sim.steps_per_period = s;
        problems.extend(cfg.sim.validate().into_iter().map(|v| v.message));
    }
    if !problems.is_empty() {
        return Err(CliError::Config(problems));
    }

    let f = log_space(args.fmin, args.fmax, args.points);
    let pool = sweep_pool()?;
    let mut responses: Vec<FrequencyResponse> = Vec::new();
    for kind in kinds {
        if analytic_wanted {
            let rl = cfg.load.resistance().expect("checked above");
            responses.push(analytic_response(&cfg.converter, rl, kind, &f)?);
        }
        if args.method != BodeMethod::Analytic {
            let r = pool.install(|| numeric_frequency_response(&cfg.converter, &cfg.load, &cfg.sim, kind, &f, args.amplitude))?;
            responses.push(r);
        }
    }
    let mut buf = Vec::new();
    write_bode_csv(&responses, &mut buf)?;
    emit(&String::from_utf8_lossy(&buf), args.out.as_deref().or(cfg.output.bode.as_deref()))?;
    Ok(())
}

pub fn design(spec: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let file: DesignFile = load(spec)?;
    check(file.violations())?;
    let base = file.converter;

    let mut feasibility = Vec::new();
    let mut feasible = Vec::new();
    let mut solved = Vec::new();
    for op in &file.points {
        match solve_operating_point(&file.spec, op.vi, op.vo, op.po, base.n, base.nd) {
            Ok(mut s) => {
                s.label = op.label.clone();
                feasibility.push(json!({ "label": op.label, "feasible": true, "reason": null }));
                feasible.push(op.clone());
                solved.push(s);
            }
            Err(e) => feasibility.push(json!({ "label": op.label, "feasible": false, "reason": e.to_string() })),
        }
    }
    if feasible.is_empty() {
        return Err(CliError::Config(vec!["none of the operating points is feasible".into()]));
    }
    let env = stress_envelope(&file.spec, &feasible, &base, file.reset_duty_model)?;

    let operating_points: Vec<Value> = solved
        .iter()
        .map(|s| {
            json!({
                "label": s.label,
                "vi": quantity(s.vi, "V"),
                "vo": quantity(s.vo, "V"),
                "po": quantity(s.po, "W"),
                "d": quantity(s.d, "1"),
                "i_string": quantity(s.i_string, "A"),
            })
        })
        .collect();

    let with_at = |v: &bbmsf_core::design::EnvelopeValue| {
        json!({ "value": v.value, "unit": v.unit, "derated": v.derated, "at": v.at })
    };
    let mut values = serde_json::Map::new();
    for v in &env.values {
        values.insert(v.name.clone(), with_at(v));
    }
    let output_cap = file.output_ripple.map(|dv| {
        let (at, c) = solved
            .iter()
            .map(|s| (s.label.clone(), output_capacitor_minimum(&params_at(&base, s), dv)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("at least one feasible point");
        json!({ "value": c, "unit": "F", "at": at, "ripple": quantity(dv, "V") })
    });
    let stress_envelope = json!({
        "reset_duty_model": env.model,
        "voltage_safety_margin": env.voltage_safety_margin,
        "values": values,
        "capacitor_ratings": { "v_ci": with_at(&env.v_ci_rating), "v_co": with_at(&env.v_co_rating) },
        "input_capacitor_minimum": quantity(INPUT_CAPACITOR_MINIMUM, "F"),
        "output_capacitor_minimum": output_cap,
    });

    let losses: Vec<Value> = match &file.parasitics {
        None => Vec::new(),
        Some(par) => solved
            .iter()
            .map(|s| {
                let l = conduction_losses(&params_at(&base, s), s.po, par, file.reset_duty_model);
                let components: serde_json::Map<String, Value> =
                    l.components().iter().map(|(k, w)| (k.to_string(), quantity(*w, "W"))).collect();
                json!({
                    "at": s.label,
                    "components": components,
                    "total": quantity(l.total, "W"),
                    "efficiency": quantity(l.efficiency, "1"),
                    "ranking": l.ranked().iter().map(|(k, _)| *k).collect::<Vec<_>>(),
                })
            })
            .collect(),
    };

    let doc = json!({
        "operating_points": operating_points,
        "stress_envelope": stress_envelope,
        "losses": losses,
        "feasibility": feasibility,
    });
    emit(&to_json(&doc), out)?;
    Ok(())
}

pub fn string(scenario: &Path, format: TableFormat, out: Option<&Path>) -> Result<(), CliError> {
    let file: ScenarioFile = load(scenario)?;
    let (sc, limits) = file.split();
    let r = evaluate_scenario(&sc, &limits)?;
    let text = match format {
        TableFormat::Json => to_json(&r),
        TableFormat::Csv => {
            let mut s = String::from("label,count,power_w,v_pv_v,vo_v,i_string_a,d,conversion,duty_ok,reset_ok\n");
            for e in &r.entries {
                let conversion = serde_json::to_value(e.conversion).expect("enum serializes");
                s.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{}\n",
                    e.label,
                    csv_num(e.count),
                    csv_num(e.p_mpp),
                    csv_num(e.v_mpp),
                    csv_num(e.vo),
                    csv_num(e.i_string),
                    csv_num(e.d),
                    conversion.as_str().unwrap_or_default(),
                    e.duty_ok,
                    e.reset_ok
                ));
            }
            s
        }
    };
    emit(&text, out)?;
    Ok(())
}

pub fn verify(config: &Path) -> Result<(), CliError> {
    let cfg = load_run_config(config)?;
    let rows = checks::run(&cfg)?;
    println!("{}", checks::header());
    for r in &rows {
        println!("{r}");
    }
    let failed = rows.iter().filter(|r| !r.passed()).count();
    println!("{} checks, {} failed", rows.len(), failed);
    if failed > 0 {
        Err(CliError::ChecksFailed(failed))
    } else {
        Ok(())
    }
}

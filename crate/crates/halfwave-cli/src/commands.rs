//! Subcommand bodies. Each returns whether every verdict passed.

use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use halfwave::bubbles::{self, BubbleSpec};
use halfwave::constants::{geometry_roots, DerivedConstants, ProblemParams};
use halfwave::experiments::{self, GroundRun, Setup, SweepReport};
use halfwave::functionals::{fiber, triple_of, LambdaSign};
use halfwave::grid::{self, make_grid, Field, Grid};
use halfwave::solvers::{self, FlowConfig, SolveResult};
use halfwave::{io, Error};

use crate::config::{CommonArgs, Defaults, Format, RunConfig, UsageError};

pub enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<UsageError> for Failure {
    fn from(e: UsageError) -> Failure {
        Failure::Usage(e.0)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        match e {
            Error::InvalidParameter(_)
            | Error::InvalidGrid(_)
            | Error::Undefined(_)
            | Error::BoxTooSmall(_)
            | Error::Format(_)
            | Error::Io(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

type Outcome = Result<bool, Failure>;

/// Box of the limit profile `Q`; ground-state boxes are `Q_BOX / beta`.
const Q_BOX: f64 = 80.0;

fn verdicts(list: &[(&str, bool, String)]) -> (bool, Value) {
    let pass = list.iter().all(|(_, p, _)| *p);
    let items: Vec<Value> = list.iter().map(|(n, p, d)| json!({"name": n, "pass": p, "detail": d})).collect();
    (pass, json!({"pass": pass, "checks": items}))
}

fn emit(cfg: &RunConfig, body: Value) -> Result<(), Failure> {
    let mut doc = json!({"config": cfg});
    if let (Value::Object(m), Value::Object(extra)) = (&mut doc, body) {
        m.extend(extra);
    }
    let text = serde_json::to_string_pretty(&doc).map_err(|e| Failure::Runtime(e.to_string()))?;
    match (&cfg.out, cfg.format) {
        (Some(path), Format::Json) if !is_field_command(&cfg.subcommand) => {
            std::fs::write(path, text + "\n").map_err(|e| Failure::Usage(e.to_string()))?
        }
        _ => out(&format!("{text}\n")),
    }
    Ok(())
}

/// Write to stdout, ignoring a closed pipe.
fn out(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn is_field_command(name: &str) -> bool {
    matches!(name, "q-profile" | "sobolev" | "ground" | "excited")
}

fn write_field(cfg: &RunConfig, u: &Field, summary: &Value) -> Result<(), Failure> {
    if let Some(path) = &cfg.out {
        let extra = json!({"config": cfg, "summary": summary});
        io::write_field(path, u, Some(extra))?;
    }
    Ok(())
}

fn load_seed(path: &Path, grid: &Grid) -> Result<Field, Failure> {
    let u = io::read_field(path)?;
    let g = u.grid();
    if g.dim() != grid.dim() || g.points_per_dim() != grid.points_per_dim() {
        return Err(Failure::Usage(format!(
            "seed file has dim {} and n {}, the run needs dim {} and n {}",
            g.dim(),
            g.points_per_dim(),
            grid.dim(),
            grid.points_per_dim()
        )));
    }
    Ok(if (g.box_length() - grid.box_length()).abs() > 1e-12 * grid.box_length() {
        grid::resample(&u, grid)?
    } else {
        Field::new(grid, u.into_values())?
    })
}

fn flow_for(cfg: &RunConfig, grid: &Grid, tol: f64) -> FlowConfig {
    let mut f = FlowConfig::for_grid(grid);
    f.tolerance = cfg.tol.unwrap_or(tol);
    if let Some(m) = cfg.max_iter {
        f.max_iterations = m;
    }
    if let Some(t) = cfg.tau {
        f.step_size = t;
    }
    f
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

/// Resolve the config, solve `Q` and fix `a = a_*/2` when `a` was not given.
fn prepare(args: &CommonArgs, name: &str, d: Defaults) -> Result<(RunConfig, Setup), Failure> {
    let mut cfg = args.resolve(name, d)?;
    let setup = Setup::new(cfg.problem, cfg.n, Q_BOX)?;
    if cfg.a_from_a_star {
        let a_star = setup.constants(&cfg.problem)?.a_star;
        cfg.problem = cfg.problem.with_a(0.5 * a_star);
    }
    Ok((cfg, setup))
}

pub fn constants(args: &CommonArgs) -> Outcome {
    let (cfg, setup) = prepare(args, "constants", Defaults { a: None, n: 256, format: Format::Json })?;
    let c = setup.constants(&cfg.problem)?;
    let roots = geometry_roots(&cfg.problem, &c)?;
    emit(&cfg, json!({"q_norm": setup.q_norm, "constants": c, "geometry": roots}))?;
    Ok(true)
}

pub fn q_profile(args: &CommonArgs) -> Outcome {
    let cfg = args.resolve("q-profile", Defaults { a: Some(1.0), n: 256, format: Format::Json })?;
    let grid = make_grid(cfg.problem.dim, cfg.box_length.unwrap_or(Q_BOX), cfg.n)?;
    let flow = flow_for(&cfg, &grid, 1e-10);
    let r = solvers::solve_limit_q(&grid, &cfg.problem, &flow)?;
    let q_norm = grid::lp_norm(&r.field, 2.0)?;
    let g = cfg.problem.gamma_q();
    let t = &r.triple;
    let poh_b = (t.a / (g * t.b) - 1.0).abs();
    let poh_m = (t.a / (g / (1.0 - g) * q_norm * q_norm) - 1.0).abs();
    let (pass, v) = verdicts(&[
        ("converged", r.converged && r.residual_stationarity <= flow.tolerance, format!("{:.3e}", r.residual_stationarity)),
        ("pohozaev_b", poh_b <= 1e-2, format!("|A / (gamma B) - 1| = {poh_b:.3e}")),
        ("pohozaev_mass", poh_m <= 1e-2, format!("|A / (gamma/(1-gamma) ||Q||^2) - 1| = {poh_m:.3e}")),
    ]);
    let summary = json!({"q_norm": q_norm, "result": r, "verdict": v});
    write_field(&cfg, &r.field, &summary)?;
    emit(&cfg, summary)?;
    Ok(pass)
}

pub fn sobolev(args: &CommonArgs) -> Outcome {
    let cfg = args.resolve("sobolev", Defaults { a: Some(1.0), n: 256, format: Format::Json })?;
    let grid = make_grid(cfg.problem.dim, cfg.box_length.unwrap_or(20.0), cfg.n)?;
    let mut flow = flow_for(&cfg, &grid, 1e-4);
    flow.step_size = cfg.tau.unwrap_or(2.0);
    flow.max_iterations = cfg.max_iter.unwrap_or(400);
    let r = solvers::solve_sobolev_extremal(&grid, &cfg.problem, cfg.epsilon.unwrap_or(0.5), &flow)?;
    let exact = halfwave::constants::sobolev_closed_form(cfg.problem.dim);
    let rel = (r.sobolev - exact).abs() / exact;
    let (pass, v) = verdicts(&[("closed_form", rel <= 0.01, format!("|S_num / S - 1| = {rel:.3e}"))]);
    let summary = json!({"sobolev": r.sobolev, "closed_form": exact, "result": r, "verdict": v});
    write_field(&cfg, &r.extremal, &summary)?;
    emit(&cfg, summary)?;
    Ok(pass)
}

fn solve_ground(cfg: &RunConfig, setup: &Setup, p: &ProblemParams) -> Result<GroundRun, Failure> {
    let consts = setup.constants(p)?;
    let grid = make_grid(p.dim, cfg.box_length.unwrap_or(solvers::ground_state_box(&consts, Q_BOX)), cfg.n)?;
    let seed = match &cfg.seed_file {
        Some(path) => load_seed(path, &grid)?,
        None => solvers::ground_state_seed(&grid, &consts, &setup.q_profile)?,
    };
    let flow = flow_for(cfg, &grid, 1e-7);
    let result = solvers::solve_ground_state(&grid, p, &consts, &seed, &flow)?;
    Ok(GroundRun { params: *p, consts, grid, result })
}

fn ground_checks(r: &SolveResult, p: &ProblemParams, c: &DerivedConstants) -> Vec<(&'static str, bool, String)> {
    let bound = -c.k_nq * p.a.powf(p.kappa_m());
    let (lo, hi) = c.lambda_bracket(p);
    let region = r.region.as_ref();
    let min_rel = r.field.min() / r.field.max();
    vec![
        ("converged", r.converged, format!("residual {:.3e} after {} iterations", r.residual_stationarity, r.iterations)),
        ("below_minus_k", r.energy < bound, format!("m = {:.6e} vs -K a^kappa = {bound:.6e}", r.energy)),
        ("pohozaev", r.residual_pohozaev <= 1e-4, format!("|P|/A = {:.3e}", r.residual_pohozaev)),
        ("lambda_bracket", lo <= r.lambda && r.lambda <= hi, format!("{lo:.4e} <= {:.4e} <= {hi:.4e}", r.lambda)),
        ("positive", min_rel >= -1e-8, format!("min/max = {min_rel:.3e}")),
        ("in_v", region.is_some_and(|g| g.in_v), format!("sqrt(A) = {:.4e} < rho0 = {:.4e}", r.triple.a.sqrt(), c.rho0)),
    ]
}

pub fn ground(args: &CommonArgs) -> Outcome {
    let (cfg, setup) = prepare(args, "ground", Defaults { a: None, n: 256, format: Format::Json })?;
    let run = solve_ground(&cfg, &setup, &cfg.problem)?;
    let (pass, v) = verdicts(&ground_checks(&run.result, &cfg.problem, &run.consts));
    let summary = json!({"box_length": run.grid.box_length(), "constants": run.consts, "result": run.result, "verdict": v});
    write_field(&cfg, &run.result.field, &summary)?;
    emit(&cfg, summary)?;
    Ok(pass)
}

pub fn excited(args: &CommonArgs) -> Outcome {
    let (cfg, mut setup) = prepare(args, "excited", Defaults { a: None, n: 256, format: Format::Json })?;
    let p = cfg.problem;
    let gcfg = RunConfig { box_length: None, seed_file: None, tol: None, max_iter: None, tau: None, ..cfg.clone() };
    let ground = solve_ground(&gcfg, &setup, &p)?;
    if let Some(t) = cfg.tol {
        setup.excited_tol = t;
    }
    if let Some(m) = cfg.max_iter {
        setup.excited_max_iter = m;
    }
    let r = if cfg.box_length.is_some() || cfg.seed_file.is_some() || cfg.epsilon.is_some() || cfg.tau.is_some() {
        let l = cfg.box_length.unwrap_or(solvers::excited_box(p.a));
        let grid = make_grid(p.dim, l, cfg.n)?;
        let seed = match &cfg.seed_file {
            Some(path) => load_seed(path, &grid)?,
            None => {
                let spec = BubbleSpec::new(cfg.epsilon.unwrap_or(l / 40.0));
                let b = bubbles::bubble(&grid, &spec, l >= 4.0 * spec.cutoff_outer)?;
                solvers::excited_seed(&grid::resample(&ground.result.field, &grid)?, &b, 0.5, p.a)?
            }
        };
        let mut flow = flow_for(&cfg, &grid, setup.excited_tol);
        flow.step_size = cfg.tau.unwrap_or(0.1 * grid.spacing());
        flow.max_iterations = setup.excited_max_iter;
        solvers::solve_excited_state(&grid, &p, &ground.consts, ground.result.energy, &seed, &flow)?
    } else {
        setup.excited_state(&ground)?
    };
    let level = ground.result.energy + ground.consts.bubble_level(&p);
    let dd = fiber(&r.triple, &p, 1.0)?.ddpsi;
    let region = r.region.as_ref();
    let (pass, v) = verdicts(&[
        ("energy_window", 0.0 < r.energy && r.energy < level, format!("0 < {:.6e} < m(a) + S^N/(2N) = {level:.6e}", r.energy)),
        ("lambda_minus", dd < 0.0 && region.is_some_and(|g| g.lambda_sign == LambdaSign::Minus), format!("ddpsi(1) = {dd:.4e}")),
        ("pohozaev", r.residual_pohozaev <= 1e-3, format!("|P|/A = {:.3e}", r.residual_pohozaev)),
    ]);
    let summary = json!({
        "box_length": r.field.grid().box_length(),
        "ground_energy": ground.result.energy,
        "level": level,
        "result": r,
        "verdict": v,
    });
    write_field(&cfg, &r.field, &summary)?;
    emit(&cfg, summary)?;
    Ok(pass)
}

pub fn bubble_scan(args: &CommonArgs) -> Outcome {
    let cfg = args.resolve("bubble-scan", Defaults { a: Some(1.0), n: 512, format: Format::Csv })?;
    let p = cfg.problem;
    let grid = make_grid(p.dim, cfg.box_length.unwrap_or(8.0), cfg.n)?;
    let eps = bubbles::fit_window(&grid);
    if eps.len() < 2 {
        return Err(Failure::Usage(format!("fewer than two widths resolved at h = {}", grid.spacing())));
    }
    let t = bubbles::bubble_asymptotics(&grid, &p, &eps)?;
    let n = p.dim as f64;
    let b_exp = n - (n - 1.0) * p.q / 2.0;
    let slope = |s: Option<bubbles::SlopeFit>| s.map_or(f64::NAN, |s| s.slope);
    let mut checks = vec![
        ("critical_slope", (slope(t.critical_slope) - n).abs() <= 0.3, format!("{:.4} vs {n}", slope(t.critical_slope))),
        ("b_slope", (slope(t.b_slope) - b_exp).abs() <= 0.1, format!("{:.4} vs {b_exp}", slope(t.b_slope))),
    ];
    if p.dim == 2 {
        checks.push((
            "mass_log_fit",
            t.mass_residual_log < t.mass_residual_linear,
            format!("eps|log eps| residual {:.3e} vs eps residual {:.3e}", t.mass_residual_log, t.mass_residual_linear),
        ));
    }
    let (pass, v) = verdicts(&checks);
    let mut csv = String::from("epsilon,seminorm_excess,critical_deficit,mass_sq,q_integral,resolved\n");
    for r in &t.rows {
        csv.push_str(&format!(
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{}\n",
            r.epsilon, r.seminorm_excess, r.critical_deficit, r.mass_sq, r.b, r.resolved
        ));
    }
    finish_table(&cfg, &csv, json!({"asymptotics": t, "verdict": v}))?;
    Ok(pass)
}

fn finish_table(cfg: &RunConfig, csv: &str, summary: Value) -> Result<(), Failure> {
    match (&cfg.out, cfg.format) {
        (Some(path), Format::Csv) => {
            std::fs::write(path, csv).map_err(|e| Failure::Usage(e.to_string()))?;
            emit(cfg, summary)
        }
        (None, Format::Csv) => {
            out(csv);
            let text = serde_json::to_string(&json!({"config": cfg, "summary": summary}))
                .map_err(|e| Failure::Runtime(e.to_string()))?;
            eprintln!("{text}");
            Ok(())
        }
        _ => emit(cfg, summary),
    }
}

pub fn mp_bound(args: &CommonArgs) -> Outcome {
    let (cfg, setup) = prepare(args, "mp-bound", Defaults { a: None, n: 256, format: Format::Json })?;
    let p = cfg.problem;
    let gcfg = RunConfig { box_length: None, seed_file: None, ..cfg.clone() };
    let ground = solve_ground(&gcfg, &setup, &p)?;
    let m_a = ground.result.energy;
    let eps = cfg.epsilon.unwrap_or(0.1);
    let bubble_grid = make_grid(p.dim, cfg.box_length.unwrap_or(8.0), 512)?;
    let u = bubbles::bubble(&bubble_grid, &BubbleSpec::new(eps), true)?;
    let tr = triple_of(&u, &p);
    let t1 = bubbles::find_t1(&tr, &p, m_a)?;
    let t0 = bubbles::find_t0(&tr, &p, setup.sobolev)?;
    let base = json!({"epsilon": eps, "m_a": m_a, "bubble": tr, "t1": t1, "t0": t0});
    let a_n = match bubbles::reduced_mass(p.a, t1, tr.mass * tr.mass) {
        Ok(a_n) => a_n,
        Err(e) => {
            let (_, v) = verdicts(&[("path_constructible", false, e.to_string())]);
            emit(&cfg, json!({"path": base, "verdict": v}))?;
            return Ok(false);
        }
    };
    let pn = p.with_a(a_n);
    let reduced = solve_ground(&gcfg, &setup, &pn)?;
    let g = &reduced.grid;
    let bub = bubbles::bubble(g, &BubbleSpec::new(eps), true)?;
    let off = bubbles::find_offset(&reduced.result.field, &bub, t1)?;
    let shifted = grid::roll(&reduced.result.field, &off.cells)?;
    let bound = bubbles::mp_upper_bound(&shifted, &bub, &p, &ground.consts, m_a, t0, t1)?;
    let (pass, v) = verdicts(&[
        ("margin", bound.margin > 0.0, format!("m(a) + S^N/(2N) - max = {:.6e}", bound.margin)),
        ("endpoint", bound.endpoint_energy <= 2.0 * m_a, format!("F(end) = {:.6e} vs 2m(a) = {:.6e}", bound.endpoint_energy, 2.0 * m_a)),
        ("path_mass", bound.max_mass <= p.a * (1.0 + 1e-12), format!("max mass {:.6e} vs a = {:.6e}", bound.max_mass, p.a)),
    ]);
    emit(&cfg, json!({"path": base, "a_n": a_n, "offset": off, "bound": bound, "verdict": v}))?;
    Ok(pass)
}

fn report_out(cfg: &RunConfig, report: &SweepReport) -> Outcome {
    let summary = json!({"report": to_value(report), "pass": report.passed()});
    finish_table(cfg, &report.to_csv(), summary)?;
    Ok(report.passed())
}

pub fn sweep_a(args: &CommonArgs) -> Outcome {
    let cfg = args.resolve("sweep-a", Defaults { a: Some(1.0), n: 256, format: Format::Csv })?;
    let setup = Setup::new(cfg.problem, cfg.n, cfg.box_length.unwrap_or(Q_BOX))?;
    let report = experiments::sweep_mass(&setup, &experiments::MASS_FRACTIONS)?;
    report_out(&cfg, &report)
}

pub fn sweep_mu(args: &CommonArgs) -> Outcome {
    let (cfg, mut setup) = prepare(args, "sweep-mu", Defaults { a: None, n: 256, format: Format::Csv })?;
    setup.template = cfg.problem;
    if let Some(m) = cfg.max_iter {
        setup.excited_max_iter = m;
    }
    let report = experiments::sweep_mu(&setup, &experiments::MU_VALUES)?;
    report_out(&cfg, &report)
}

pub fn m_structure(args: &CommonArgs) -> Outcome {
    let cfg = args.resolve("m-structure", Defaults { a: Some(1.0), n: 256, format: Format::Csv })?;
    let setup = Setup::new(cfg.problem, cfg.n, cfg.box_length.unwrap_or(Q_BOX))?;
    let a_star = setup.constants(&cfg.problem)?.a_star;
    let grid: Vec<f64> = [0.3, 0.4, 0.5, 0.6, 0.7].iter().map(|f| f * a_star).collect();
    let report = experiments::check_m_structure(&setup, &grid, &[std::f64::consts::FRAC_1_SQRT_2])?;
    report_out(&cfg, &report)
}

//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `HALFWAVE_ACCEPTANCE_ONLY=1,4` selects criteria. Failures are reported
//! without failing the process unless `HALFWAVE_ACCEPTANCE_STRICT=1`.

use std::f64::consts::PI;
use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use halfwave::bubbles::{self, BubbleSpec};
use halfwave::constants::{
    derive_constants, geometry_h, geometry_roots, sobolev_closed_form, GeometryRoots, ProblemParams,
};
use halfwave::experiments::{self, Setup, MASS_FRACTIONS};
use halfwave::functionals::{fiber, triple_of, LambdaSign};
use halfwave::grid::{self, make_grid, Field};
use halfwave::solvers::{self, FlowConfig, SolveResult};

struct Outcome {
    pass: bool,
    lines: Vec<String>,
}

impl Outcome {
    fn new() -> Outcome {
        Outcome { pass: true, lines: Vec::new() }
    }

    fn check(&mut self, name: &str, ok: bool, detail: String) {
        self.pass &= ok;
        self.lines.push(format!("{} {name}: {detail}", if ok { "ok  " } else { "FAIL" }));
    }

    fn note(&mut self, detail: String) {
        self.lines.push(format!("     {detail}"));
    }
}

fn default_params() -> ProblemParams {
    ProblemParams::new(2, 2.5, 1.0, 1.0).unwrap()
}

fn setup(n: usize, q_box: f64) -> Setup {
    Setup::new(default_params(), n, q_box).unwrap()
}

fn a_star(s: &Setup) -> f64 {
    s.constants(&s.template).unwrap().a_star
}

fn spectral() -> Outcome {
    let mut out = Outcome::new();
    let l = 40.0;
    let g = make_grid(2, l, 256).unwrap();
    let mut rng = StdRng::seed_from_u64(20_240_917);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let k = [rng.random_range(-127i64..128), rng.random_range(-127i64..128)];
        let shift = rng.random_range(0.0..2.0 * PI);
        let u = Field::from_fn(&g, |x| (2.0 * PI / l * (k[0] as f64 * x[0] + k[1] as f64 * x[1]) + shift).cos());
        let xi = 2.0 * PI / l * ((k[0] * k[0] + k[1] * k[1]) as f64).sqrt();
        let err = grid::sqrt_laplacian(&u).lin_comb(1.0, &u, -xi).unwrap();
        let scale = (xi * grid::lp_norm(&u, 2.0).unwrap()).max(f64::MIN_POSITIVE);
        worst = worst.max(grid::lp_norm(&err, 2.0).unwrap() / scale);
    }
    out.check("plane_waves", worst <= 1e-10, format!("worst relative error {worst:.3e} over 20 modes"));
    let gauss = Field::radial(&g, |r| (-0.5 * r * r).exp());
    let exact = PI.powf(1.5) / 2.0;
    let a = grid::h_half_seminorm_sq(&gauss);
    let rel = (a / exact - 1.0).abs();
    out.check("gaussian_seminorm", rel <= 1e-6, format!("A(exp(-r^2/2)) = {a:.12} vs pi^(3/2)/2 = {exact:.12}, relative {rel:.3e}"));
    out
}

/// `A / C^{1/2}` of `(1 + r^2)^{-1/2}` in the plane by radial quadrature:
/// `A = 2 pi int_0^inf e^{-2k} dk` from its Hankel transform `2 pi e^{-k} / k`,
/// `C = 2 pi int_0^inf r (1 + r^2)^{-2} dr`.
fn sobolev_oracle() -> f64 {
    let simpson = |f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize| {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    };
    // substitute x = k / (1 + k) and x = r / (1 + r) onto [0, 1)
    let a = 2.0 * PI * simpson(&|x: f64| if x >= 1.0 { 0.0 } else { (-2.0 * x / (1.0 - x)).exp() / (1.0 - x).powi(2) }, 0.0, 1.0, 20_000);
    let c = 2.0 * PI * simpson(&|x: f64| {
        if x >= 1.0 {
            return 0.0;
        }
        let r = x / (1.0 - x);
        r / (1.0 + r * r).powi(2) / (1.0 - x).powi(2)
    }, 0.0, 1.0, 20_000);
    a / c.sqrt()
}

fn sobolev() -> Outcome {
    let mut out = Outcome::new();
    let oracle = sobolev_oracle();
    let closed = sobolev_closed_form(2);
    out.check("closed_form_vs_oracle", (closed / oracle - 1.0).abs() < 1e-8, format!("closed form {closed:.10} vs quadrature {oracle:.10}"));
    let g = make_grid(2, 20.0, 512).unwrap();
    let p = default_params();
    let mut cfg = FlowConfig::for_grid(&g);
    cfg.step_size = 2.0;
    cfg.tolerance = 1e-4;
    cfg.max_iterations = 400;
    let mut values = Vec::new();
    for eps in [0.5, 1.0] {
        let r = solvers::solve_sobolev_extremal(&g, &p, eps, &cfg).unwrap();
        let rel = r.sobolev / oracle - 1.0;
        out.check(&format!("seed_{eps}"), rel.abs() <= 0.01, format!("S = {:.6} ({rel:+.3e}), {} iterations", r.sobolev, r.iterations));
        values.push(r.sobolev);
    }
    let spread = (values[0] - values[1]).abs() / oracle;
    out.check("seed_independence", spread <= 0.005, format!("spread {spread:.3e}"));
    out
}

fn limit_q() -> Outcome {
    let mut out = Outcome::new();
    let p = default_params();
    let solve = |l: f64, n: usize| -> SolveResult {
        let g = make_grid(2, l, n).unwrap();
        let mut cfg = FlowConfig::for_grid(&g);
        cfg.tolerance = 1e-10;
        solvers::solve_limit_q(&g, &p, &cfg).unwrap()
    };
    let r = solve(80.0, 512);
    out.check("residual", r.residual_stationarity <= 1e-8, format!("{:.3e} after {} iterations", r.residual_stationarity, r.iterations));
    let gamma = p.gamma_q();
    let tr = r.triple;
    let first = tr.a / (gamma * tr.b) - 1.0;
    let second = tr.a / (gamma / (1.0 - gamma) * tr.mass * tr.mass) - 1.0;
    out.check("pohozaev_b", first.abs() <= 1e-2, format!("A / (gamma B) - 1 = {first:.3e}"));
    out.check("pohozaev_mass", second.abs() <= 1e-2, format!("A / (gamma/(1-gamma) M^2) - 1 = {second:.3e}"));
    let norm = tr.mass;
    let coarse = solve(80.0, 256).triple.mass;
    let wide = solve(120.0, 768).triple.mass;
    let agree = |x: f64| (x / norm - 1.0).abs() < 5e-4;
    out.check(
        "norm_stable",
        agree(coarse) && agree(wide),
        format!("||Q|| = {norm:.6} (L 80, n 512), {coarse:.6} (n 256), {wide:.6} (L 120, n 768)"),
    );
    out
}

fn geometry() -> Outcome {
    let mut out = Outcome::new();
    let s = setup(128, 80.0);
    let p = default_params();
    let c = s.constants(&p).unwrap();
    let at_star = p.with_a(c.a_star);
    let cs = s.constants(&at_star).unwrap();
    let h0 = geometry_h(&at_star, &cs, cs.rho0);
    out.check("touching", h0.abs() <= 1e-10, format!("h_(a_*)(rho0) = {h0:.3e}, a_* = {:.6}, rho0 = {:.6}", c.a_star, c.rho0));
    let half = p.with_a(c.a_star / 2.0);
    let ch = s.constants(&half).unwrap();
    match geometry_roots(&half, &ch).unwrap() {
        GeometryRoots::Window { r0, r1 } => {
            let mid = half.a / c.a_star * ch.rho0;
            let chain = [0.0, ch.rho_tilde, r0, mid, ch.rho0, r1];
            out.check(
                "ordering",
                chain.windows(2).all(|w| w[0] < w[1]),
                format!("0 < {:.6} < {r0:.6} < {mid:.6} < {:.6} < {r1:.6}", ch.rho_tilde, ch.rho0),
            );
        }
        other => out.check("ordering", false, format!("no root window at a_*/2: {other:?}")),
    }
    let mut worst: f64 = 0.0;
    for dim in [2usize, 3] {
        for k in 1..20 {
            let q = 2.0 + 2.0 / dim as f64 * k as f64 / 20.0;
            let pq = ProblemParams::new(dim, q, 1.0, 1.0).unwrap();
            let cq = derive_constants(&pq, s.q_norm, sobolev_closed_form(dim)).unwrap();
            worst = worst.max(cq.a_star / cq.a_upper_star);
        }
    }
    out.check("a_star_below_a_upper_star", worst < 1.0, format!("max a_*/a^* = {worst:.6} over N in {{2, 3}}, 19 q each"));
    out
}

fn ground() -> Outcome {
    let mut out = Outcome::new();
    let s = setup(256, 80.0);
    let p = s.template.with_a(a_star(&s) / 2.0);
    let run = s.ground_state(&p).unwrap();
    let (r, c) = (&run.result, &run.consts);
    let bound = -c.k_nq * p.a.powi(3);
    let (lo, hi) = c.lambda_bracket(&p);
    out.check("converged", r.converged, format!("residual {:.3e} after {} iterations", r.residual_stationarity, r.iterations));
    out.check("below_minus_k_a3", r.energy < bound, format!("m(a) = {:.8e} vs -K a^3 = {bound:.8e}", r.energy));
    out.check("pohozaev", r.residual_pohozaev <= 1e-4, format!("|P|/A = {:.3e}", r.residual_pohozaev));
    out.check("lambda_bracket", lo <= r.lambda && r.lambda <= hi, format!("{lo:.6e} <= {:.6e} <= {hi:.6e}", r.lambda));
    out.check("positive", r.field.min() > 0.0, format!("min/max = {:.3e}", r.field.min() / r.field.max()));
    out.check("even", r.field.reflection_defect() <= 1e-8, format!("reflection defect {:.3e}", r.field.reflection_defect()));
    let in_v = r.region.as_ref().is_some_and(|g| g.in_v);
    out.check("in_v", in_v, format!("sqrt(A) = {:.6} < rho0 = {:.6}", r.triple.a.sqrt(), c.rho0));
    out
}

fn asymptotics() -> Outcome {
    let mut out = Outcome::new();
    let s = setup(1024, 320.0);
    let report = experiments::sweep_mass(&s, &MASS_FRACTIONS).unwrap();
    for v in &report.verdicts {
        out.check(&v.name, v.pass, v.detail.clone());
    }
    out
}

fn mountain_pass() -> Outcome {
    let mut out = Outcome::new();
    let s = setup(256, 80.0);
    let p = s.template.with_a(a_star(&s) / 2.0);
    let ground = s.ground_state(&p).unwrap();
    let m_a = ground.result.energy;
    let eps = 0.1;
    let bg = make_grid(2, 8.0, 512).unwrap();
    let tr = triple_of(&bubbles::bubble(&bg, &BubbleSpec::new(eps), true).unwrap(), &p);
    let t1 = bubbles::find_t1(&tr, &p, m_a).unwrap();
    let t0 = bubbles::find_t0(&tr, &p, s.sobolev).unwrap();
    out.note(format!("eps = {eps}: A = {:.4}, B = {:.4}, C = {:.4}, ||U||^2 = {:.4}; m(a) = {m_a:.6e}, t0 = {t0:.4}, t1 = {t1:.4}", tr.a, tr.b, tr.c, tr.mass * tr.mass));
    let a_n = match bubbles::reduced_mass(p.a, t1, tr.mass * tr.mass) {
        Ok(a_n) => a_n,
        Err(e) => {
            out.check("path_constructible", false, e.to_string());
            out.note("the bubble mass budget 2 t1^2 ||U||^2 exceeds a^2 unless eps is about 1e-3 or smaller".into());
            return out;
        }
    };
    let reduced = s.ground_state(&p.with_a(a_n)).unwrap();
    let bub = bubbles::bubble(&reduced.grid, &BubbleSpec::new(eps), true).unwrap();
    let off = bubbles::find_offset(&reduced.result.field, &bub, t1).unwrap();
    let shifted = grid::roll(&reduced.result.field, &off.cells).unwrap();
    let b = bubbles::mp_upper_bound(&shifted, &bub, &p, &ground.consts, m_a, t0, t1).unwrap();
    out.check("margin", b.margin > 0.0, format!("m(a) + S^2/4 - max = {:.6e}", b.margin));
    out.check("path_mass", b.max_mass <= p.a * (1.0 + 1e-12), format!("max mass {:.6e} vs a = {:.6e}", b.max_mass, p.a));
    out.check("endpoint", b.endpoint_energy <= 2.0 * m_a, format!("{:.6e} vs 2 m(a) = {:.6e}", b.endpoint_energy, 2.0 * m_a));
    out
}

fn excited() -> Outcome {
    let mut out = Outcome::new();
    let s = setup(256, 80.0);
    let star = a_star(&s);
    let s2 = s.sobolev * s.sobolev;
    for (label, frac) in [("half", 0.5), ("smallest", *MASS_FRACTIONS.last().unwrap())] {
        let p = s.template.with_a(frac * star);
        let ground = s.ground_state(&p).unwrap();
        let m_a = ground.result.energy;
        let v = s.excited_state(&ground).unwrap();
        let level = m_a + s2 / 4.0;
        out.check(
            &format!("{label}_energy_window"),
            0.0 < v.energy && v.energy < level,
            format!("a = {:.4}: 0 < F = {:.6e} < m(a) + S^2/4 = {level:.6e}", p.a, v.energy),
        );
        let dd = fiber(&v.triple, &p, 1.0).unwrap().ddpsi;
        let minus = v.region.as_ref().is_some_and(|g| g.lambda_sign == LambdaSign::Minus);
        out.check(&format!("{label}_minus_branch"), minus && dd < 0.0, format!("ddpsi(1) = {dd:.4e}"));
        out.check(&format!("{label}_pohozaev"), v.residual_pohozaev <= 1e-3, format!("|P|/A = {:.3e}", v.residual_pohozaev));
        out.note(format!("{label}: lambda = {:.5}, stationarity residual {:.3e}, {} iterations", v.lambda, v.residual_stationarity, v.iterations));
        if label == "smallest" {
            let (ra, rf) = (v.triple.a / s2 - 1.0, v.energy / (s2 / 4.0) - 1.0);
            out.check("smallest_seminorm_limit", ra.abs() <= 0.10, format!("A = {:.5} vs S^2 = {s2:.5} ({ra:+.3e})", v.triple.a));
            out.check("smallest_energy_limit", rf.abs() <= 0.10, format!("F = {:.5} vs S^2/4 = {:.5} ({rf:+.3e})", v.energy, s2 / 4.0));
        }
    }
    out
}

fn bubble_laws() -> Outcome {
    let mut out = Outcome::new();
    let g = make_grid(2, 8.0, 4096).unwrap();
    let eps = bubbles::fit_window(&g);
    let r = bubbles::bubble_asymptotics(&g, &default_params(), &eps).unwrap();
    out.note(format!("widths {:?}", eps.iter().map(|e| format!("{e:.4}")).collect::<Vec<_>>()));
    let slope = |f: &Option<bubbles::SlopeFit>| f.as_ref().map_or(f64::NAN, |s| s.slope);
    let c = slope(&r.critical_slope);
    let b = slope(&r.b_slope);
    out.check("critical_deficit_slope", (c - 2.0).abs() <= 0.3, format!("{c:.4} vs 2 +- 0.3"));
    out.check("subcritical_slope", (b - 0.75).abs() <= 0.1, format!("{b:.4} vs 0.75 +- 0.1"));
    out.check(
        "mass_log_fit",
        r.mass_residual_log < r.mass_residual_linear,
        format!("residual eps|log eps| {:.3e} vs eps {:.3e}", r.mass_residual_log, r.mass_residual_linear),
    );
    out
}

fn m_structure() -> Outcome {
    let mut out = Outcome::new();
    let s = setup(256, 80.0);
    let star = a_star(&s);
    let grid: Vec<f64> = [0.3, 0.4, 0.5, 0.6, 0.7].iter().map(|f| f * star).collect();
    let report = experiments::check_m_structure(&s, &grid, &[std::f64::consts::FRAC_1_SQRT_2]).unwrap();
    for v in &report.verdicts {
        out.check(&v.name, v.pass, v.detail.clone());
    }
    out
}

struct Criterion {
    id: usize,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn criteria() -> Vec<Criterion> {
    let c = |id, name, secs, run| Criterion { id, name, budget: Duration::from_secs(secs), run };
    vec![
        c(1, "spectral correctness", 10, spectral),
        c(2, "Sobolev constant", 120, sobolev),
        c(3, "limit problem Q", 120, limit_q),
        c(4, "geometry certification", 1, geometry),
        c(5, "ground state", 300, ground),
        c(6, "asymptotic laws", 1800, asymptotics),
        c(7, "mountain-pass bound", 300, mountain_pass),
        c(8, "excited state", 900, excited),
        c(9, "bubble asymptotics", 300, bubble_laws),
        c(10, "m-structure", 1200, m_structure),
    ]
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("HALFWAVE_ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let strict = std::env::var("HALFWAVE_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    panic::set_hook(Box::new(|_| {}));
    let mut summary = Vec::new();
    for c in criteria() {
        if only.as_ref().is_some_and(|o| !o.contains(&c.id)) {
            continue;
        }
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Outcome { pass: false, lines: vec![format!("FAIL aborted: {msg}")] }
        });
        let took = start.elapsed();
        let in_time = took <= c.budget;
        let pass = outcome.pass && in_time;
        for line in &outcome.lines {
            println!("    {line}");
        }
        let line = format!(
            "criterion {:>2} {}: {} ({:.1} s of {} s{})",
            c.id,
            c.name,
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            c.budget.as_secs(),
            if in_time { "" } else { ", over budget" },
        );
        println!("{line}");
        summary.push((line, pass));
    }
    println!("\nacceptance summary");
    for (line, _) in &summary {
        println!("{line}");
    }
    let failed = summary.iter().filter(|s| !s.1).count();
    println!("{} of {} criteria passed", summary.len() - failed, summary.len());
    if strict && failed > 0 {
        std::process::exit(1);
    }
}

//! Iterative solvers: the limit soliton `Q`, the Sobolev extremal, the
//! ground state `u_a` on `V(a)` and the mountain-pass state `v_a`.

use serde::{Deserialize, Serialize};

use crate::constants::{DerivedConstants, ProblemParams};
use crate::error::{Error, Result};
use crate::functionals::{
    self, energy, energy_gradient, fiber_critical_points, pohozaev, triple_of, FunctionalTriple, RegionReport,
};
use crate::grid::{self, Field, Grid};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowConfig {
    pub step_size: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Ground-state flow only.
    pub trust_radius: Option<f64>,
    pub seed_spec: String,
}

impl FlowConfig {
    /// `tau = 0.01 h`, 20000 iterations, tolerance `1e-8`.
    pub fn for_grid(grid: &Grid) -> FlowConfig {
        FlowConfig {
            step_size: 0.01 * grid.spacing(),
            max_iterations: 20_000,
            tolerance: 1e-8,
            trust_radius: None,
            seed_spec: "default".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidParameter(format!("step size must be positive, got {}", self.step_size)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be at least 1".into()));
        }
        if let Some(r) = self.trust_radius {
            if !(r > 0.0) {
                return Err(Error::InvalidParameter(format!("trust radius must be positive, got {r}")));
            }
        }
        Ok(())
    }
}

/// Residual sampled along an iteration.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub residual: f64,
    pub energy: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveResult {
    #[serde(skip)]
    pub field: Field,
    pub lambda: f64,
    pub energy: f64,
    pub residual_stationarity: f64,
    pub residual_pohozaev: f64,
    pub iterations: usize,
    pub converged: bool,
    pub triple: FunctionalTriple,
    /// Absent for the limit problem.
    pub region: Option<RegionReport>,
    pub trace: Vec<TracePoint>,
}

const TRACE_EVERY: usize = 100;

fn l2(u: &Field) -> f64 {
    grid::lp_integral(u, 2.0).sqrt()
}

fn relative_pohozaev(tr: &FunctionalTriple, p: &ProblemParams) -> f64 {
    pohozaev(tr, p).abs() / tr.a.max(1.0)
}

/// Reject zero or sign-changing seeds.
pub fn check_seed(u: &Field) -> Result<()> {
    let (hi, lo) = (u.max(), u.min());
    if !(hi > 0.0) {
        return Err(Error::Degenerate("seed is zero or negative".into()));
    }
    if lo < -1e-8 * hi {
        return Err(Error::Degenerate(format!("seed changes sign (min {lo:e}, max {hi:e})")));
    }
    Ok(())
}

/// `u` rescaled to L2 norm `a`.
pub fn normalize_mass(u: &Field, a: f64) -> Result<Field> {
    let m = l2(u);
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::Degenerate("cannot normalize a zero field".into()));
    }
    Ok(u.scaled(a / m))
}

/// Roll the peak onto the box center.
fn recenter(u: &Field) -> Result<Field> {
    let g = u.grid();
    let dim = g.dim();
    let mut peak = [0usize; 3];
    let mut center = [0usize; 3];
    g.multi_index(u.argmax(), &mut peak[..dim]);
    g.multi_index(g.center_index(), &mut center[..dim]);
    if peak == center {
        return Ok(u.clone());
    }
    let shift: Vec<i64> = (0..dim).map(|a| center[a] as i64 - peak[a] as i64).collect();
    grid::roll(u, &shift)
}

fn limit_residual(u: &Field, q: f64) -> (f64, Field) {
    let nq = u.map(|x| x.abs().powf(q - 2.0) * x);
    let xi = u.grid().abs_xi();
    let lu = grid::apply_multiplier(u, |i| xi[i] + 1.0);
    let r = lu.lin_comb(1.0, &nq, -1.0).expect("same grid");
    (l2(&r) / l2(u), nq)
}

/// Limit soliton `sqrt(-Delta) Q + Q = Q^{q-1}` by spectral renormalization.
///
/// Falls back to a damped update when the residual stops decreasing.
pub fn solve_limit_q(grid: &Grid, p: &ProblemParams, cfg: &FlowConfig) -> Result<SolveResult> {
    p.validate()?;
    cfg.validate()?;
    let q = p.q;
    let theta = (q - 1.0) / (q - 2.0);
    let xi = grid.abs_xi().to_vec();
    let mut u = Field::radial(grid, |r| 2.0 * (-r * r / 4.0).exp());
    let mut trace = Vec::new();
    let mut damping = 1.0;
    let mut best = f64::INFINITY;
    let mut since_best = 0usize;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    for it in 0..cfg.max_iterations {
        let (res, nq) = limit_residual(&u, q);
        residual = res;
        iterations = it;
        if it % TRACE_EVERY == 0 {
            trace.push(TracePoint { iteration: it, residual: res, energy: f64::NAN });
        }
        if res <= cfg.tolerance {
            break;
        }
        if !res.is_finite() || u.max() < 1e-12 {
            return Err(Error::NonConvergence {
                solver: "limit profile",
                iterations: it,
                residual: res,
                reason: "iterate collapsed or diverged".into(),
            });
        }
        if res < 0.999 * best {
            best = res;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > 50 && damping > 0.1 {
                damping *= 0.5;
                since_best = 0;
            }
        }
        let num = grid::h_half_seminorm_sq(&u) + grid::lp_integral(&u, 2.0);
        let den = grid::l2_inner(&nq, &u)?;
        let m = num / den;
        let next = grid::apply_multiplier(&nq, |i| 1.0 / (xi[i] + 1.0)).scaled(m.powf(theta));
        u = if damping < 1.0 { u.lin_comb(1.0 - damping, &next, damping)? } else { next };
        iterations = it + 1;
    }
    let tr = triple_of(&u, p);
    let m2 = tr.mass * tr.mass;
    let lambda = (tr.a - tr.b) / m2;
    let e = 0.5 * tr.a + 0.5 * m2 - tr.b / q;
    let poh = (tr.a - p.gamma_q() * tr.b).abs() / tr.a.max(1.0);
    trace.push(TracePoint { iteration: iterations, residual, energy: e });
    Ok(SolveResult {
        field: u,
        lambda,
        energy: e,
        residual_stationarity: residual,
        residual_pohozaev: poh,
        iterations,
        converged: residual <= cfg.tolerance,
        triple: tr,
        region: None,
        trace,
    })
}

/// `alpha Q(beta x)` sampled on `grid`, from `Q` computed on a grid with the
/// same number of points per axis.
pub fn ground_state_seed(grid: &Grid, consts: &DerivedConstants, q_profile: &Field) -> Result<Field> {
    let target = grid::make_grid(grid.dim(), consts.beta * grid.box_length(), grid.points_per_dim())?;
    let u = grid::resample(q_profile, &target)?;
    Ok(Field::new(grid, u.into_values())?.scaled(consts.alpha))
}

/// Box length that maps the limit-profile box onto `alpha Q(beta x)`.
pub fn ground_state_box(consts: &DerivedConstants, q_box: f64) -> f64 {
    q_box / consts.beta
}

/// Box for `v_a`: its core width scales like `a^2`.
pub fn excited_box(a: f64) -> f64 {
    26.0 * a * a
}

fn max_xi(grid: &Grid) -> f64 {
    grid.abs_xi().iter().cloned().fold(0.0, f64::max)
}

/// Energy increase below the rounding level of its three terms.
pub fn descent_slack(tr: &FunctionalTriple, p: &ProblemParams) -> f64 {
    1e-13 * (0.5 * tr.a + p.mu / p.q * tr.b + tr.c / p.two_star())
}

fn stationarity(u: &Field, g: &Field, a: f64) -> Result<(f64, f64)> {
    let lambda = grid::l2_inner(g, u)? / (a * a);
    let r = g.lin_comb(1.0, u, -lambda)?;
    let scale = l2(&grid::sqrt_laplacian(u)).max(f64::MIN_POSITIVE);
    Ok((lambda, l2(&r) / scale))
}

/// Normalized gradient flow for the local minimizer on `V(a)`.
pub fn solve_ground_state(
    grid: &Grid,
    p: &ProblemParams,
    consts: &DerivedConstants,
    seed: &Field,
    cfg: &FlowConfig,
) -> Result<SolveResult> {
    p.validate()?;
    cfg.validate()?;
    if seed.grid() != grid {
        return Err(Error::GridMismatch);
    }
    if p.a > consts.a_star {
        return Err(Error::InvalidParameter(format!(
            "mass {} exceeds a_* = {}",
            p.a, consts.a_star
        )));
    }
    check_seed(seed)?;
    let rho0 = cfg.trust_radius.unwrap_or(consts.rho0);
    let a = p.a;
    let mut u = normalize_mass(seed, a)?;
    let mut tr = triple_of(&u, p);
    if tr.a.sqrt() >= rho0 {
        return Err(Error::Degenerate("seed lies outside the trust region".into()));
    }
    let mut f = energy(&tr, p);
    let mut tau = cfg.step_size;
    let tau_max = cfg.step_size.max(1.0 / max_xi(grid));
    let tau_min = cfg.step_size * 0.5f64.powi(30);
    let mut trace = Vec::new();
    let mut residual = f64::INFINITY;
    let mut lambda = 0.0;
    let mut iterations = 0;
    for it in 0..cfg.max_iterations {
        iterations = it;
        if it > 0 && it % 100 == 0 {
            u = recenter(&u)?;
        }
        let g = energy_gradient(&u, p);
        let (l, res) = stationarity(&u, &g, a)?;
        lambda = l;
        residual = res;
        if it % TRACE_EVERY == 0 {
            trace.push(TracePoint { iteration: it, residual: res, energy: f });
        }
        if res <= cfg.tolerance {
            break;
        }
        let mut escaped = false;
        loop {
            let cand = normalize_mass(&u.lin_comb(1.0, &g, -tau)?, a)?;
            let ctr = triple_of(&cand, p);
            let cf = energy(&ctr, p);
            if !cf.is_finite() {
                return Err(Error::NonConvergence {
                    solver: "ground state",
                    iterations: it,
                    residual: res,
                    reason: "energy diverged".into(),
                });
            }
            if ctr.a.sqrt() >= rho0 {
                escaped = true;
            } else if cf <= f + descent_slack(&tr, p) {
                u = cand;
                tr = ctr;
                f = cf;
                tau = (tau * 1.5).min(tau_max);
                break;
            }
            tau *= 0.5;
            if tau < tau_min {
                let reason = if escaped {
                    "iterate escaped the trust region sqrt(A) < rho0".into()
                } else {
                    "step size underflow without energy decrease".into()
                };
                return Err(Error::NonConvergence { solver: "ground state", iterations: it, residual: res, reason });
            }
        }
        iterations = it + 1;
    }
    trace.push(TracePoint { iteration: iterations, residual, energy: f });
    let region = functionals::classify_triple(&tr, p, consts, f);
    Ok(SolveResult {
        field: u,
        lambda,
        energy: f,
        residual_stationarity: residual,
        residual_pohozaev: relative_pohozaev(&tr, p),
        iterations,
        converged: residual <= cfg.tolerance,
        triple: tr,
        region: Some(region),
        trace,
    })
}

/// `(1 - w) u_a + w bubble`, renormalized to mass `a`.
pub fn excited_seed(ground: &Field, bubble: &Field, weight: f64, a: f64) -> Result<Field> {
    let b = normalize_mass(bubble, a)?;
    normalize_mass(&ground.lin_comb(1.0 - weight, &b, weight)?, a)
}

/// Root of `P` along the mass-normalized dilation family, on the `t-` branch.
fn project_minus(u: &Field, p: &ProblemParams) -> Result<(Field, f64)> {
    let at = |s: f64| -> Result<(Field, f64)> {
        let w = normalize_mass(&grid::dilate(u, s)?.field, p.a)?;
        let tr = triple_of(&w, p);
        Ok((w, pohozaev(&tr, p) / tr.a))
    };
    let guess = fiber_critical_points(&triple_of(u, p), p)?
        .t_minus
        .ok_or_else(|| Error::Degenerate("fiber has no Minus critical point".into()))?;
    let (w0, f0) = at(guess)?;
    if f0.abs() <= 1e-12 {
        return Ok((w0, guess));
    }
    let (mut lo, mut flo, mut hi, mut fhi, wlo, whi);
    if f0 > 0.0 {
        (lo, flo, wlo) = (guess, f0, w0);
        hi = guess;
        loop {
            hi *= 1.05;
            let (w, f) = at(hi)?;
            if f <= 0.0 {
                (fhi, whi) = (f, w);
                break;
            }
            if hi > 64.0 * guess {
                return Err(Error::Degenerate("no sign change of P above the fiber estimate".into()));
            }
        }
    } else {
        (hi, fhi, whi) = (guess, f0, w0);
        lo = guess;
        loop {
            lo /= 1.05;
            let (w, f) = at(lo)?;
            if f >= 0.0 {
                (flo, wlo) = (f, w);
                break;
            }
            if lo < guess / 64.0 {
                return Err(Error::Degenerate("no sign change of P below the fiber estimate".into()));
            }
        }
    }
    let mut side = 0i8;
    if fhi.abs() <= 1e-12 {
        return Ok((whi, hi));
    }
    let mut best = if flo.abs() < fhi.abs() { (wlo.clone(), lo, flo.abs()) } else { (whi.clone(), hi, fhi.abs()) };
    for _ in 0..60 {
        if hi - lo <= 1e-15 * hi {
            break;
        }
        let mid = (lo * fhi - hi * flo) / (fhi - flo);
        let mid = if mid > lo && mid < hi { mid } else { 0.5 * (lo + hi) };
        let (w, f) = at(mid)?;
        if f.abs() <= 1e-12 {
            return Ok((w, mid));
        }
        if f.abs() < best.2 {
            best = (w.clone(), mid, f.abs());
        }
        if f > 0.0 {
            (lo, flo) = (mid, f);
            if side == 1 {
                fhi *= 0.5;
            }
            side = 1;
        } else {
            (hi, fhi) = (mid, f);
            if side == -1 {
                flo *= 0.5;
            }
            side = -1;
        }
    }
    Ok((best.0, best.1))
}

/// Dilation-reduced min-max: descend `u -> psi_u(t_u^-)` on the sphere.
///
/// Stops when the energy on the `t-` branch changes by less than
/// `cfg.tolerance` (relative) over 100 iterations. The stationarity residual
/// is reported as measured.
pub fn solve_excited_state(
    grid: &Grid,
    p: &ProblemParams,
    consts: &DerivedConstants,
    m_a: f64,
    seed: &Field,
    cfg: &FlowConfig,
) -> Result<SolveResult> {
    p.validate()?;
    cfg.validate()?;
    if seed.grid() != grid {
        return Err(Error::GridMismatch);
    }
    check_seed(seed)?;
    let a = p.a;
    let mut u = normalize_mass(seed, a)?;
    let tau = cfg.step_size;
    let mut trace = Vec::new();
    let mut residual = f64::INFINITY;
    let mut lambda = 0.0;
    let mut iterations = 0;
    let mut converged = false;
    let mut w = u.clone();
    let mut f_prev = f64::NAN;
    for it in 0..cfg.max_iterations {
        iterations = it;
        if it > 0 && it % 100 == 0 {
            u = recenter(&u)?;
        }
        w = project_minus(&u, p)?.0;
        let g = energy_gradient(&w, p);
        let (l, res) = stationarity(&w, &g, a)?;
        lambda = l;
        residual = res;
        let f = energy(&triple_of(&w, p), p);
        if f <= 0.0 || f <= m_a {
            return Err(Error::NonConvergence {
                solver: "excited state",
                iterations: it,
                residual: res,
                reason: "collapsed onto the ground-state branch".into(),
            });
        }
        if it % TRACE_EVERY == 0 {
            trace.push(TracePoint { iteration: it, residual: res, energy: f });
            if it > 0 && (f - f_prev).abs() <= cfg.tolerance * f.abs() {
                converged = true;
                break;
            }
            f_prev = f;
        }
        let step = g.lin_comb(1.0, &w, -l)?;
        u = normalize_mass(&w.lin_comb(1.0, &step, -tau)?, a)?;
        iterations = it + 1;
    }
    let tr = triple_of(&w, p);
    let f = energy(&tr, p);
    trace.push(TracePoint { iteration: iterations, residual, energy: f });
    let region = functionals::classify_triple(&tr, p, consts, m_a);
    Ok(SolveResult {
        field: w,
        lambda,
        energy: f,
        residual_stationarity: residual,
        residual_pohozaev: relative_pohozaev(&tr, p),
        iterations,
        converged,
        triple: tr,
        region: Some(region),
        trace,
    })
}

/// Minimized Sobolev quotient with its extremal.
#[derive(Clone, Debug, Serialize)]
pub struct SobolevResult {
    pub sobolev: f64,
    #[serde(skip)]
    pub extremal: Field,
    pub support_radius: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TracePoint>,
}

/// Fraction of the half box used as the support disk of the minimization.
pub const SOBOLEV_SUPPORT: f64 = 0.9;

struct Quotient {
    u: Field,
    fine: Field,
    c: f64,
}

impl Quotient {
    /// Normalize to `C = 1` with `C` integrated on the twice refined grid.
    fn new(u: Field, two_star: f64) -> Result<Quotient> {
        let fine = grid::upsample(&u, 2)?;
        let c = grid::lp_integral(&fine, two_star);
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Degenerate("quotient of a zero field".into()));
        }
        let s = c.powf(-1.0 / two_star);
        Ok(Quotient { u: u.scaled(s), fine: fine.scaled(s), c: 1.0 })
    }
}

/// Minimize `A / C^{2/2*}` over fields supported in a centered disk, with the
/// critical integral evaluated on a twice refined grid so that grid-scale
/// spikes gain nothing from aliasing. Descent uses the `(|xi| + 1)^{-1}`
/// preconditioned projected gradient with a monotone adaptive step.
pub fn solve_sobolev_extremal(grid: &Grid, p: &ProblemParams, seed_epsilon: f64, cfg: &FlowConfig) -> Result<SobolevResult> {
    cfg.validate()?;
    let dim = grid.dim();
    if dim < 2 {
        return Err(Error::InvalidParameter("the Sobolev extremal needs N >= 2".into()));
    }
    let ts = p.two_star();
    let radius = SOBOLEV_SUPPORT * grid.box_length() / 2.0;
    let mask = Field::radial(grid, move |r| if r < radius { 1.0 } else { 0.0 });
    let spec = crate::bubbles::BubbleSpec::new(seed_epsilon);
    let seed = crate::bubbles::bubble(grid, &spec, grid.box_length() >= 4.0 * spec.cutoff_outer)?;
    let masked = |f: &Field| -> Field {
        let m = mask.values();
        Field::from_raw(grid, f.values().iter().zip(m).map(|(x, w)| x * w).collect())
    };
    let xi = grid.abs_xi().to_vec();
    let mut cur = Quotient::new(masked(&seed), ts)?;
    let mut a = grid::h_half_seminorm_sq(&cur.u);
    let mut step = cfg.step_size;
    let mut history = vec![a];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..cfg.max_iterations {
        if it % TRACE_EVERY == 0 {
            trace.push(TracePoint { iteration: it, residual: f64::NAN, energy: a });
        }
        let crit = grid::restrict(&cur.fine.map(|x| x.abs().powf(ts - 2.0) * x), grid)?;
        let lu = grid::sqrt_laplacian(&cur.u);
        let ratio = a / cur.c;
        let g = masked(&lu.lin_comb(1.0, &crit, -ratio)?);
        let dir = masked(&grid::apply_multiplier(&g, |i| 1.0 / (xi[i] + 1.0)));
        let mut accepted = false;
        while step > cfg.step_size * 1e-6 {
            let cand = Quotient::new(cur.u.lin_comb(1.0, &dir, -step)?, ts)?;
            let ca = grid::h_half_seminorm_sq(&cand.u);
            if ca <= a {
                cur = cand;
                a = ca;
                step = (step * 1.3).min(8.0);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        iterations = it + 1;
        history.push(a);
        let k = history.len();
        if !accepted || (k > 20 && history[k - 21] - a <= cfg.tolerance * a) {
            converged = true;
            break;
        }
    }
    trace.push(TracePoint { iteration: iterations, residual: f64::NAN, energy: a });
    Ok(SobolevResult {
        sobolev: a,
        extremal: cur.u,
        support_radius: radius,
        iterations,
        converged,
        trace,
    })
}

//! Aubin–Talenti bubbles, their cutoff versions, norm asymptotics and the
//! explicit mountain-pass path.

use serde::{Deserialize, Serialize};

use crate::constants::{bisect, gamma_half, DerivedConstants, ProblemParams};
use crate::error::{Error, Result};
use crate::exec;
use crate::functionals::{energy, triple_of, FunctionalTriple};
use crate::grid::{self, Field, Grid};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BubbleSpec {
    pub epsilon: f64,
    /// Fixed to 1; every use is quotient invariant or renormalized.
    pub amplitude: f64,
    pub cutoff_inner: f64,
    pub cutoff_outer: f64,
}

impl BubbleSpec {
    pub fn new(epsilon: f64) -> BubbleSpec {
        BubbleSpec { epsilon, amplitude: 1.0, cutoff_inner: 1.0, cutoff_outer: 2.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("bubble width must be positive, got {}", self.epsilon)));
        }
        if !(self.cutoff_inner > 0.0 && self.cutoff_inner < self.cutoff_outer) {
            return Err(Error::InvalidParameter("cutoff radii must satisfy 0 < r1 < r2".into()));
        }
        Ok(())
    }

    /// `eps^{(N-1)/2} / (eps^2 + r^2)^{(N-1)/2}`.
    pub fn profile(&self, dim: usize, r: f64) -> f64 {
        let e = (dim as f64 - 1.0) / 2.0;
        self.amplitude * (self.epsilon / (self.epsilon * self.epsilon + r * r)).powf(e)
    }

    /// Radial cutoff: 1 inside `r1`, 0 outside `r2`, quintic smoothstep between.
    pub fn cutoff(&self, r: f64) -> f64 {
        if r <= self.cutoff_inner {
            return 1.0;
        }
        if r >= self.cutoff_outer {
            return 0.0;
        }
        let s = (r - self.cutoff_inner) / (self.cutoff_outer - self.cutoff_inner);
        1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

/// Samples of `u_eps` or the cutoff bubble `U_eps`.
pub fn bubble(grid: &Grid, spec: &BubbleSpec, with_cutoff: bool) -> Result<Field> {
    spec.validate()?;
    let need = 4.0 * spec.cutoff_outer;
    if with_cutoff && grid.box_length() < need {
        return Err(Error::BoxTooSmall(format!("cutoff bubble needs L >= {need}, got {}", grid.box_length())));
    }
    let dim = grid.dim();
    let spec = *spec;
    Ok(Field::radial(grid, move |r| {
        let u = spec.profile(dim, r);
        if with_cutoff {
            u * spec.cutoff(r)
        } else {
            u
        }
    }))
}

/// `int (1 + |x|^2)^{-N}`: the critical integral of the uncut unit bubble.
pub fn critical_integral_full(dim: usize) -> f64 {
    let n = dim as u32;
    std::f64::consts::PI.powf(dim as f64 / 2.0) * gamma_half(n) / gamma_half(2 * n)
}

/// Norms of `U_eps` at one width.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BubbleRow {
    pub epsilon: f64,
    /// `A(U_eps) - A(u_eps)`.
    pub seminorm_excess: f64,
    /// `C(u_eps) - C(U_eps)`.
    pub critical_deficit: f64,
    pub mass_sq: f64,
    pub b: f64,
    pub resolved: bool,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
    pub points: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct BubbleAsymptotics {
    pub rows: Vec<BubbleRow>,
    pub seminorm_slope: Option<SlopeFit>,
    pub critical_slope: Option<SlopeFit>,
    pub b_slope: Option<SlopeFit>,
    pub mass_slope: Option<SlopeFit>,
    /// RMS log residual of `mass^2 ~ k eps`.
    pub mass_residual_linear: f64,
    /// RMS log residual of `mass^2 ~ k eps |log eps|`.
    pub mass_residual_log: f64,
}

/// Least-squares line through `(x, y)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<SlopeFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    Some(SlopeFit { slope, intercept, residual: (ss / n as f64).sqrt(), points: n })
}

fn log_slope(rows: &[&BubbleRow], f: impl Fn(&BubbleRow) -> f64) -> Option<SlopeFit> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| f(r) > 0.0)
        .map(|r| (r.epsilon.ln(), f(r).ln()))
        .collect();
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    linear_fit(&x, &y)
}

/// RMS of `log(y / f) - mean` for a one-parameter model `y ~ k f`.
fn proportional_residual(y: &[f64], f: &[f64]) -> f64 {
    let r: Vec<f64> = y.iter().zip(f).map(|(a, b)| (a / b).ln()).collect();
    let m = r.iter().sum::<f64>() / r.len() as f64;
    (r.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / r.len() as f64).sqrt()
}

/// Number of smallest resolved widths entering the slope fits.
pub const FIT_POINTS: usize = 4;

/// The [`FIT_POINTS`] smallest widths of [`resolved_epsilons`].
pub fn fit_window(grid: &Grid) -> Vec<f64> {
    let all = resolved_epsilons(grid);
    all[all.len().saturating_sub(FIT_POINTS)..].to_vec()
}

/// Widths `eps <= 0.4` down to the resolution limit `4 h`, ratio `2^{-1/2}`.
pub fn resolved_epsilons(grid: &Grid) -> Vec<f64> {
    let floor = 4.0 * grid.spacing();
    let mut out = Vec::new();
    let mut e = 0.4;
    while e >= floor * (1.0 - 1e-12) {
        out.push(e);
        e /= std::f64::consts::SQRT_2;
    }
    out
}

/// Norm table of `U_eps` and log-log slopes over the resolved widths.
pub fn bubble_asymptotics(grid: &Grid, p: &ProblemParams, epsilons: &[f64]) -> Result<BubbleAsymptotics> {
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter("bubble widths must be strictly decreasing".into()));
    }
    let dim = grid.dim();
    let c_full = critical_integral_full(dim);
    let a_full = crate::constants::sobolev_closed_form(dim) * c_full.powf(2.0 / p.two_star());
    let floor = 4.0 * grid.spacing();
    let rows = exec::map_indices(epsilons.len(), |i| -> Result<BubbleRow> {
        let eps = epsilons[i];
        let u = bubble(grid, &BubbleSpec::new(eps), true)?;
        let tr = triple_of(&u, p);
        Ok(BubbleRow {
            epsilon: eps,
            seminorm_excess: tr.a - a_full,
            critical_deficit: c_full - tr.c,
            mass_sq: tr.mass * tr.mass,
            b: tr.b,
            resolved: eps >= floor * (1.0 - 1e-12),
        })
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let used: Vec<&BubbleRow> = rows.iter().filter(|r| r.resolved).collect();
    let eps: Vec<f64> = used.iter().map(|r| r.epsilon).collect();
    let mass: Vec<f64> = used.iter().map(|r| r.mass_sq).collect();
    let lin: Vec<f64> = eps.clone();
    let with_log: Vec<f64> = eps.iter().map(|e| e * e.ln().abs()).collect();
    let enough = used.len() >= 2;
    Ok(BubbleAsymptotics {
        seminorm_slope: log_slope(&used, |r| r.seminorm_excess),
        critical_slope: log_slope(&used, |r| r.critical_deficit),
        b_slope: log_slope(&used, |r| r.b),
        mass_slope: log_slope(&used, |r| r.mass_sq),
        mass_residual_linear: if enough { proportional_residual(&mass, &lin) } else { f64::NAN },
        mass_residual_log: if enough { proportional_residual(&mass, &with_log) } else { f64::NAN },
        rows,
    })
}

/// `I(t) = t k + t^2 A/2 - mu t^q B/q - t^{2*} C/2*` with `k = max(1, ||U||_2^2)`.
pub fn path_majorant(u: &FunctionalTriple, p: &ProblemParams, t: f64) -> f64 {
    let k = (u.mass * u.mass).max(1.0);
    t * k + 0.5 * t * t * u.a - p.mu * t.powf(p.q) / p.q * u.b - t.powf(p.two_star()) / p.two_star() * u.c
}

/// Maximizer of `f` on `[lo, hi]` by golden section (assumes unimodality).
pub fn golden_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        }
    }
    let t = 0.5 * (lo + hi);
    (t, f(t))
}

fn majorant_peak(u: &FunctionalTriple, p: &ProblemParams) -> Result<(f64, f64)> {
    if !(u.c > 0.0) {
        return Err(Error::Degenerate("bubble has zero critical integral".into()));
    }
    let mut hi = 1.0;
    while path_majorant(u, p, 2.0 * hi) > path_majorant(u, p, hi) {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Degenerate("path majorant does not turn over".into()));
        }
    }
    Ok(golden_max(|t| path_majorant(u, p, t), 0.0, 2.0 * hi, 1e-12 * hi))
}

/// Smallest `t1` with `I(t) <= 2 m_a` for every `t >= t1`.
pub fn find_t1(bubble_triple: &FunctionalTriple, p: &ProblemParams, m_a: f64) -> Result<f64> {
    if !(m_a < 0.0) {
        return Err(Error::InvalidParameter(format!("m(a) must be negative, got {m_a}")));
    }
    let (tp, _) = majorant_peak(bubble_triple, p)?;
    let level = 2.0 * m_a;
    let mut hi = 2.0 * tp.max(1e-3);
    while path_majorant(bubble_triple, p, hi) > level {
        hi *= 2.0;
    }
    bisect(&|t| path_majorant(bubble_triple, p, t) - level, tp, hi)
}

/// First `t` where the majorant reaches `S^N / (4N)`.
pub fn find_t0(bubble_triple: &FunctionalTriple, p: &ProblemParams, sobolev: f64) -> Result<f64> {
    let level = sobolev.powi(p.dim as i32) / (4.0 * p.dim as f64);
    let (tp, peak) = majorant_peak(bubble_triple, p)?;
    if peak < level {
        return Err(Error::Degenerate(format!(
            "path majorant peaks at {peak:.6e}, below S^N/(4N) = {level:.6e}"
        )));
    }
    bisect(&|t| path_majorant(bubble_triple, p, t) - level, 0.0, tp)
}

/// `H^{1/2}` cross term `sum |xi| u_hat conj(v_hat)` with the seminorm scaling.
pub fn seminorm_cross(u: &Field, v: &Field) -> Result<f64> {
    if u.grid() != v.grid() {
        return Err(Error::GridMismatch);
    }
    let (su, sv) = (grid::spectrum(u), grid::spectrum(v));
    let xi = u.grid().abs_xi();
    let sum = exec::chunked_sum(su.len(), |r| r.map(|i| xi[i] * (su[i] * sv[i].conj()).re).sum());
    Ok(sum * u.grid().cell_volume() / su.len() as f64)
}

/// Offset found by marching along the first axis in whole grid cells.
#[derive(Clone, Debug, Serialize)]
pub struct Offset {
    pub y: Vec<f64>,
    pub cells: Vec<i64>,
    pub overlap: f64,
    pub cross_seminorm: f64,
    pub mass_budget: f64,
}

/// Smallest axis shift `y` with `2 <u(. - y), U> <= t1 ||U||^2` and
/// `<u(. - y), U>_{H^{1/2}} <= ||U||^2`.
pub fn find_offset(ground: &Field, bubble_field: &Field, t1: f64) -> Result<Offset> {
    let g = ground.grid();
    if g != bubble_field.grid() {
        return Err(Error::GridMismatch);
    }
    let h = g.spacing();
    let u2 = grid::lp_integral(bubble_field, 2.0);
    let max_cells = ((g.box_length() / 2.0 - 2.0) / h).floor() as i64;
    for k in 0..=max_cells.max(0) {
        let mut shift = vec![0i64; g.dim()];
        shift[0] = k;
        let moved = grid::roll(ground, &shift)?;
        let overlap = grid::l2_inner(&moved, bubble_field)?;
        let cross = seminorm_cross(&moved, bubble_field)?;
        if 2.0 * overlap <= t1 * u2 && cross <= u2 {
            let mut y = vec![0.0; g.dim()];
            y[0] = k as f64 * h;
            return Ok(Offset { y, cells: shift, overlap, cross_seminorm: cross, mass_budget: t1 * u2 });
        }
    }
    Err(Error::BoxTooSmall(format!(
        "no offset up to |y| = L/2 - 2 = {:.3} separates the ground state from the bubble; increase L",
        g.box_length() / 2.0 - 2.0
    )))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MPPathConfig {
    pub t1: f64,
    pub t0: f64,
    pub epsilons: Vec<f64>,
    pub offsets: Vec<Vec<f64>>,
    pub a_n: Vec<f64>,
}

/// `eps_n = 0.4 * 2^{-n}` while `eps_n >= 4 h`.
pub fn epsilon_schedule(grid: &Grid, count: usize) -> Vec<f64> {
    let floor = 4.0 * grid.spacing();
    (0..count).map(|n| 0.4 * 0.5f64.powi(n as i32)).take_while(|e| *e >= floor).collect()
}

/// `a_n^2 = a^2 - 2 t1^2 ||U||_2^2`; an error when nonpositive or below `a/2`.
pub fn reduced_mass(a: f64, t1: f64, bubble_mass_sq: f64) -> Result<f64> {
    let an2 = a * a - 2.0 * t1 * t1 * bubble_mass_sq;
    if !(an2 > 0.0) {
        return Err(Error::Degenerate(format!(
            "a_n^2 = a^2 - 2 t1^2 ||U||^2 = {a:.6}^2 - 2 * {t1:.6}^2 * {bubble_mass_sq:.6} = {an2:.6e} <= 0"
        )));
    }
    let an = an2.sqrt();
    if an < a / 2.0 {
        return Err(Error::Degenerate(format!("a_n = {an:.6} lies below a/2 = {:.6}", a / 2.0)));
    }
    Ok(an)
}

/// One sample of the path `u_{a_n}(. - y) + t U`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PathPoint {
    pub t: f64,
    pub energy: f64,
    pub mass: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MPBound {
    pub max_energy: f64,
    pub argmax_t: f64,
    pub margin: f64,
    pub level: f64,
    pub start_energy: f64,
    pub endpoint_energy: f64,
    pub max_mass: f64,
    pub low_segment_max: f64,
    pub high_segment_max: f64,
    pub trace: Vec<PathPoint>,
}

/// Maximum of `F(u_{a_n}(. - y) + t U)` over `t in [0, t1]`, with
/// `margin = m(a) + S^N/(2N) - max`.
pub fn mp_upper_bound(
    ground_shifted: &Field,
    bubble_field: &Field,
    p: &ProblemParams,
    consts: &DerivedConstants,
    m_a: f64,
    t0: f64,
    t1: f64,
) -> Result<MPBound> {
    if ground_shifted.grid() != bubble_field.grid() {
        return Err(Error::GridMismatch);
    }
    if !(0.0 < t0 && t0 < t1) {
        return Err(Error::InvalidParameter(format!("need 0 < t0 < t1, got t0 = {t0}, t1 = {t1}")));
    }
    let eval = |t: f64| -> PathPoint {
        let f = ground_shifted.lin_comb(1.0, bubble_field, t).expect("same grid");
        let tr = triple_of(&f, p);
        PathPoint { t, energy: energy(&tr, p), mass: tr.mass }
    };
    let samples = 201;
    let mut trace = exec::map_indices(samples, |i| eval(t1 * i as f64 / (samples - 1) as f64));
    let best = (0..samples).max_by(|&i, &j| trace[i].energy.total_cmp(&trace[j].energy)).unwrap_or(0);
    let dt = t1 / (samples - 1) as f64;
    let lo = (trace[best].t - dt).max(0.0);
    let hi = (trace[best].t + dt).min(t1);
    let (t_star, f_star) = golden_max(|t| eval(t).energy, lo, hi, 1e-8);
    let (argmax_t, max_energy) = if f_star > trace[best].energy { (t_star, f_star) } else { (trace[best].t, trace[best].energy) };
    trace.push(eval(argmax_t));
    trace.sort_by(|a, b| a.t.total_cmp(&b.t));
    let seg = |lo: f64, hi: f64| {
        trace.iter().filter(|pt| pt.t >= lo && pt.t <= hi).map(|pt| pt.energy).fold(f64::NEG_INFINITY, f64::max)
    };
    let level = m_a + consts.bubble_level(p);
    Ok(MPBound {
        max_energy,
        argmax_t,
        margin: level - max_energy,
        level,
        start_energy: trace[0].energy,
        endpoint_energy: trace[trace.len() - 1].energy,
        max_mass: trace.iter().map(|pt| pt.mass).fold(0.0, f64::max),
        low_segment_max: seg(0.0, t0),
        high_segment_max: seg(t0, t1),
        trace,
    })
}

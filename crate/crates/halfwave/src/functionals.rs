//! Energy, Pohozaev functional, fiber map and region tests.
//!
//! All fiber algebra acts on the scalar triple `(A, B, C)`; fields enter only
//! through [`triple_of`] and [`project_pohozaev`].

use serde::{Deserialize, Serialize};

use crate::constants::{bisect, DerivedConstants, ProblemParams};
use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{self, Field};

/// `A = ||u||^2_{H^{1/2}}`, `B = ||u||_q^q`, `C = ||u||_{2*}^{2*}` and `mass = ||u||_2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalTriple {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub mass: f64,
}

impl FunctionalTriple {
    /// Triple of `t * u = t^{N/2} u(t x)`.
    pub fn dilated(&self, p: &ProblemParams, t: f64) -> FunctionalTriple {
        let qg2 = p.q * p.gamma_q() / 2.0;
        FunctionalTriple {
            a: t * self.a,
            b: t.powf(qg2) * self.b,
            c: t.powf(p.two_star() / 2.0) * self.c,
            mass: self.mass,
        }
    }

    /// Triple of `s u` for a scalar `s`.
    pub fn scaled(&self, p: &ProblemParams, s: f64) -> FunctionalTriple {
        let s = s.abs();
        FunctionalTriple {
            a: s * s * self.a,
            b: s.powf(p.q) * self.b,
            c: s.powf(p.two_star()) * self.c,
            mass: s * self.mass,
        }
    }

    /// `A / C^{2/2*}`.
    pub fn rayleigh(&self, p: &ProblemParams) -> f64 {
        self.a / self.c.powf(2.0 / p.two_star())
    }
}

/// Pointwise integrals `(sum |u|^q, sum |u|^{2*}, sum u^2) * dv`.
pub fn power_integrals(u: &Field, q: f64, two_star: f64) -> (f64, f64, f64) {
    let v = u.values();
    let nchunks = v.len().div_ceil(exec::CHUNK);
    let parts: Vec<[f64; 3]> = exec::map_indices(nchunks, |c| {
        let r = c * exec::CHUNK..((c + 1) * exec::CHUNK).min(v.len());
        let mut acc = [0.0; 3];
        for &x in &v[r] {
            let ax = x.abs();
            let x2 = x * x;
            acc[0] += ax.powf(q);
            acc[1] += if two_star == 4.0 { x2 * x2 } else { ax.powf(two_star) };
            acc[2] += x2;
        }
        acc
    });
    let dv = u.grid().cell_volume();
    let mut s = [0.0; 3];
    for p in parts {
        for k in 0..3 {
            s[k] += p[k];
        }
    }
    (s[0] * dv, s[1] * dv, s[2] * dv)
}

pub fn triple_of(u: &Field, p: &ProblemParams) -> FunctionalTriple {
    let a = grid::h_half_seminorm_sq(u);
    let (b, c, m2) = power_integrals(u, p.q, p.two_star());
    FunctionalTriple { a, b, c, mass: m2.sqrt() }
}

/// `F = A/2 - (mu/q) B - C/2*`.
pub fn energy(tr: &FunctionalTriple, p: &ProblemParams) -> f64 {
    0.5 * tr.a - p.mu / p.q * tr.b - tr.c / p.two_star()
}

/// Energy without the critical term, `I = A/2 - (mu/q) B`.
pub fn subcritical_energy(tr: &FunctionalTriple, p: &ProblemParams) -> f64 {
    0.5 * tr.a - p.mu / p.q * tr.b
}

/// `P = A - mu gamma_q B - C`.
pub fn pohozaev(tr: &FunctionalTriple, p: &ProblemParams) -> f64 {
    tr.a - p.mu * p.gamma_q() * tr.b - tr.c
}

/// `(A - mu B - C) / mass^2`.
pub fn multiplier_of(tr: &FunctionalTriple, p: &ProblemParams) -> Result<f64> {
    if !(tr.mass > 0.0) {
        return Err(Error::Undefined("multiplier of a zero-mass field".into()));
    }
    Ok((tr.a - p.mu * tr.b - tr.c) / (tr.mass * tr.mass))
}

pub fn lagrange_multiplier(u: &Field, p: &ProblemParams) -> Result<f64> {
    multiplier_of(&triple_of(u, p), p)
}

/// Fiber map value and first two derivatives at `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FiberValue {
    pub psi: f64,
    pub dpsi: f64,
    pub ddpsi: f64,
}

pub fn fiber(tr: &FunctionalTriple, p: &ProblemParams, t: f64) -> Result<FiberValue> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("fiber parameter must be positive, got {t}")));
    }
    let g = p.gamma_q();
    let e1 = p.q * g / 2.0;
    let e2 = p.two_star() / 2.0;
    let n1 = p.dim as f64 - 1.0;
    let psi = 0.5 * t * tr.a - p.mu * t.powf(e1) / p.q * tr.b - t.powf(e2) / p.two_star() * tr.c;
    let dpsi = 0.5 * tr.a - 0.5 * p.mu * g * t.powf(e1 - 1.0) * tr.b - 0.5 * t.powf(e2 - 1.0) * tr.c;
    let ddpsi = -0.5 * p.mu * g * (e1 - 1.0) * t.powf(e1 - 2.0) * tr.b
        - 0.5 / n1 * t.powf(e2 - 2.0) * tr.c;
    Ok(FiberValue { psi, dpsi, ddpsi })
}

/// Critical points of the fiber map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FiberCritical {
    pub t_plus: Option<f64>,
    pub t_minus: Option<f64>,
    /// Zero of `ddpsi` (absent for `B = 0`).
    pub t_inflection: Option<f64>,
    /// True when no positive critical point exists.
    pub empty: bool,
}

/// `t+ < t-` with `ddpsi(t+) > 0 > ddpsi(t-)`; only `t-` when `B = 0`.
pub fn fiber_critical_points(tr: &FunctionalTriple, p: &ProblemParams) -> Result<FiberCritical> {
    if !(tr.a > 0.0) || !(tr.c > 0.0) {
        return Err(Error::Undefined("fiber critical points need A > 0 and C > 0".into()));
    }
    let e1 = p.q * p.gamma_q() / 2.0;
    let e2 = p.two_star() / 2.0;
    let n1 = p.dim as f64 - 1.0;
    if tr.b == 0.0 {
        let t = (tr.a / tr.c).powf(n1);
        return Ok(FiberCritical { t_plus: None, t_minus: Some(t), t_inflection: None, empty: false });
    }
    let d = |t: f64| fiber(tr, p, t).map(|f| f.dpsi).unwrap_or(f64::NAN);
    let t0 = (n1 * p.mu * p.gamma_q() * (1.0 - e1) * tr.b / tr.c).powf(1.0 / (e2 - e1));
    if !(d(t0) > 0.0) {
        return Ok(FiberCritical { t_plus: None, t_minus: None, t_inflection: Some(t0), empty: true });
    }
    let mut lo = 0.5 * t0;
    while d(lo) >= 0.0 {
        lo *= 0.5;
        if lo < f64::MIN_POSITIVE {
            return Err(Error::Degenerate("no lower fiber root".into()));
        }
    }
    let mut hi = 2.0 * t0;
    while d(hi) >= 0.0 {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Degenerate("no upper fiber root".into()));
        }
    }
    let tp = bisect(&d, lo, t0)?;
    let tm = bisect(&d, t0, hi)?;
    Ok(FiberCritical { t_plus: Some(tp), t_minus: Some(tm), t_inflection: Some(t0), empty: false })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Plus,
    Minus,
}

/// Field moved onto the Pohozaev set along its dilation orbit.
#[derive(Clone, Debug)]
pub struct Projection {
    pub field: Field,
    pub t: f64,
    pub mass_change: f64,
}

impl Projection {
    pub fn leaked(&self) -> bool {
        self.mass_change > 1e-4
    }
}

fn branch_root(tr: &FunctionalTriple, p: &ProblemParams, branch: Branch) -> Result<f64> {
    let crit = fiber_critical_points(tr, p)?;
    match branch {
        Branch::Plus => crit.t_plus,
        Branch::Minus => crit.t_minus,
    }
    .ok_or_else(|| Error::Degenerate(format!("fiber has no {branch:?} critical point")))
}

/// Dilate `u` onto the chosen fiber critical point.
///
/// The box seminorm is not exactly dilation covariant, so the root is
/// re-solved on the dilated triple a few times.
pub fn project_pohozaev(u: &Field, p: &ProblemParams, branch: Branch) -> Result<Projection> {
    let mut t = branch_root(&triple_of(u, p), p, branch)?;
    let mut d = grid::dilate(u, t)?;
    for _ in 0..4 {
        let tr = triple_of(&d.field, p);
        if pohozaev(&tr, p).abs() <= 1e-12 * tr.a.max(f64::MIN_POSITIVE) {
            break;
        }
        let s = branch_root(&tr, p, branch)?;
        if (s - 1.0).abs() < 1e-14 {
            break;
        }
        t *= s;
        d = grid::dilate(u, t)?;
    }
    Ok(Projection { field: d.field, t, mass_change: d.mass_change })
}

/// `sqrt(-Delta) u - mu |u|^{q-2} u - |u|^{2*-2} u`.
pub fn energy_gradient(u: &Field, p: &ProblemParams) -> Field {
    let lu = grid::sqrt_laplacian(u);
    let (q, ts, mu) = (p.q, p.two_star(), p.mu);
    let v = u.values();
    let l = lu.values();
    let mut out = vec![0.0; v.len()];
    exec::fill(&mut out, |i| {
        let x = v[i];
        let ax = x.abs();
        let crit = if ts == 4.0 { x * x * x } else { ax.powf(ts - 2.0) * x };
        l[i] - mu * ax.powf(q - 2.0) * x - crit
    });
    Field::from_raw(u.grid(), out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaSign {
    Plus,
    Minus,
    Zero,
}

/// Membership flags with the residuals used to decide them.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RegionReport {
    pub in_sphere: bool,
    pub in_v: bool,
    pub in_lambda: bool,
    pub lambda_sign: LambdaSign,
    /// `None` when the fiber has no `t-`.
    pub in_w: Option<bool>,
    pub in_e: bool,
    pub mass_rel_error: f64,
    pub seminorm: f64,
    pub rho0: f64,
    pub pohozaev: f64,
    pub pohozaev_tol: f64,
    pub energy: f64,
    pub t_minus: Option<f64>,
    pub two_m_a: f64,
}

pub const SPHERE_TOL: f64 = 1e-8;
pub const LAMBDA_TOL: f64 = 1e-6;

pub fn classify_triple(
    tr: &FunctionalTriple,
    p: &ProblemParams,
    consts: &DerivedConstants,
    m_a: f64,
) -> RegionReport {
    let mass_rel_error = (tr.mass / p.a - 1.0).abs();
    let seminorm = tr.a.sqrt();
    let pz = pohozaev(tr, p);
    let tol = LAMBDA_TOL * tr.a.max(1.0);
    let f = energy(tr, p);
    let in_lambda = pz.abs() <= tol;
    let t_minus = fiber_critical_points(tr, p).ok().and_then(|c| c.t_minus);
    RegionReport {
        in_sphere: mass_rel_error <= SPHERE_TOL,
        in_v: seminorm < consts.rho0,
        in_lambda,
        lambda_sign: if f < 0.0 {
            LambdaSign::Plus
        } else if f > 0.0 {
            LambdaSign::Minus
        } else {
            LambdaSign::Zero
        },
        in_w: t_minus.map(|t| t > 1.0),
        in_e: f < 2.0 * m_a,
        mass_rel_error,
        seminorm,
        rho0: consts.rho0,
        pohozaev: pz,
        pohozaev_tol: tol,
        energy: f,
        t_minus,
        two_m_a: 2.0 * m_a,
    }
}

pub fn classify_region(u: &Field, p: &ProblemParams, consts: &DerivedConstants, m_a: f64) -> RegionReport {
    classify_triple(&triple_of(u, p), p, consts, m_a)
}

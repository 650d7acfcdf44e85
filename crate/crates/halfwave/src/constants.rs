//! Closed-form constants and the scalar geometry of the constrained energy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Problem parameters `(N, q, mu, a)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    pub dim: usize,
    pub q: f64,
    pub mu: f64,
    pub a: f64,
}

impl ProblemParams {
    pub fn new(dim: usize, q: f64, mu: f64, a: f64) -> Result<ProblemParams> {
        let p = ProblemParams { dim, q, mu, a };
        p.validate()?;
        Ok(p)
    }

    /// Admissible range: `N >= 2`, `2 < q < 2 + 2/N`, `mu > 0`, `a > 0`.
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::InvalidParameter(format!("N must be at least 2, got {}", self.dim)));
        }
        let qmax = 2.0 + 2.0 / self.dim as f64;
        if !(self.q > 2.0 && self.q < qmax) {
            return Err(Error::InvalidParameter(format!(
                "q must lie in (2, {qmax}) for N = {}, got {}",
                self.dim, self.q
            )));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidParameter(format!("mu must be positive, got {}", self.mu)));
        }
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(Error::InvalidParameter(format!("a must be positive, got {}", self.a)));
        }
        Ok(())
    }

    pub fn with_a(&self, a: f64) -> ProblemParams {
        ProblemParams { a, ..*self }
    }
    pub fn with_mu(&self, mu: f64) -> ProblemParams {
        ProblemParams { mu, ..*self }
    }

    pub fn gamma_q(&self) -> f64 {
        self.dim as f64 * (self.q - 2.0) / self.q
    }
    pub fn two_star(&self) -> f64 {
        2.0 * self.dim as f64 / (self.dim as f64 - 1.0)
    }
    /// Exponent of `a` in `m(a)` and `A(u_a)`: `2q(1-g)/(2-qg)`.
    pub fn kappa_m(&self) -> f64 {
        let g = self.gamma_q();
        2.0 * self.q * (1.0 - g) / (2.0 - self.q * g)
    }
    /// Exponent of `a` in `lambda_a`: `2(q-2)/(2-qg)`.
    pub fn kappa_lambda(&self) -> f64 {
        2.0 * (self.q - 2.0) / (2.0 - self.q * self.gamma_q())
    }
}

/// Every closed-form constant attached to a parameter set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub gamma_q: f64,
    pub two_star: f64,
    pub q_norm_of_q: f64,
    /// `C_opt^q` (the q-th power enters every formula).
    pub c_opt: f64,
    pub sobolev: f64,
    pub rho0: f64,
    pub rho_bar: f64,
    pub rho_tilde: f64,
    pub a_star: f64,
    pub a_upper_star: f64,
    /// `-m_0(a) / a^{kappa_m}` with `m_0(a) = I(alpha Q(beta x))`.
    pub k_nq: f64,
    /// The prefactor as typeset in the source, `gamma_q` times `k_nq`.
    pub k_nq_printed: f64,
    pub m0: f64,
    pub lambda_bar0: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Evaluate every constant from `(N, q, mu, a)`, `||Q||_2` and `S`.
pub fn derive_constants(p: &ProblemParams, q_norm_of_q: f64, sobolev: f64) -> Result<DerivedConstants> {
    p.validate()?;
    if !(q_norm_of_q > 0.0 && sobolev > 0.0) {
        return Err(Error::InvalidParameter("||Q||_2 and S must be positive".into()));
    }
    let (n, q, mu, a) = (p.dim as f64, p.q, p.mu, p.a);
    let g = p.gamma_q();
    let ts = p.two_star();
    let qg = q * g;
    let c_opt = ((1.0 - g) / g).powf(qg / 2.0) / (1.0 - g) / q_norm_of_q.powf(q - 2.0);
    let s_pow = sobolev.powf(ts / 2.0);
    let rho0_base = (2.0 - qg) * ts * s_pow / (2.0 * (ts - qg));
    let rho_bar_base = (2.0 - qg) * s_pow / (ts - qg);
    let rho0 = rho0_base.powf(1.0 / (ts - 2.0));
    let rho_bar = rho_bar_base.powf(1.0 / (ts - 2.0));
    let rho_tilde = (2.0 * mu / q * c_opt * a.powf(q * (1.0 - g))).powf(1.0 / (2.0 - qg));
    let outer = 1.0 / (q * (1.0 - g));
    let a_star = (q * (ts - 2.0) / (2.0 * mu * c_opt * (ts - qg))
        * rho0_base.powf((2.0 - qg) / (ts - 2.0)))
    .powf(outer);
    let a_upper_star = ((ts - 2.0) / (mu * g * c_opt * (ts - qg))
        * rho_bar_base.powf((2.0 - qg) / (ts - 2.0)))
    .powf(outer);
    let scale = q_norm_of_q.powf(2.0 * (2.0 - q) / (2.0 - qg)) * mu.powf(2.0 / (2.0 - qg));
    let k_nq = (2.0 - qg) / (2.0 * q * (1.0 - g)) * scale;
    let k_nq_printed = g * k_nq;
    let m0 = -k_nq * a.powf(p.kappa_m());
    let lambda_bar0 = -scale * a.powf(p.kappa_lambda());
    let beta = (mu * a.powf(q - 2.0) / q_norm_of_q.powf(q - 2.0)).powf(2.0 / (2.0 - qg));
    let alpha = a * beta.powf(n / 2.0) / q_norm_of_q;
    Ok(DerivedConstants {
        gamma_q: g,
        two_star: ts,
        q_norm_of_q,
        c_opt,
        sobolev,
        rho0,
        rho_bar,
        rho_tilde,
        a_star,
        a_upper_star,
        k_nq,
        k_nq_printed,
        m0,
        lambda_bar0,
        alpha,
        beta,
    })
}

impl DerivedConstants {
    /// Two-sided multiplier bound `(lower, upper)` for the ground state at mass `a`.
    pub fn lambda_bracket(&self, p: &ProblemParams) -> (f64, f64) {
        let (n, q, g, ts) = (p.dim as f64, p.q, self.gamma_q, self.two_star);
        let qg = q * g;
        let inner = p.mu * 2.0 * n * (ts - qg) / (q * ts) * self.c_opt;
        let ak = p.a.powf(p.kappa_lambda());
        let lower = -(1.0 - g) / g * inner.powf(2.0 / (2.0 - qg)) * ak;
        let upper = -2.0 * self.k_nq * ak;
        (lower, upper)
    }

    /// `S^N / (2N)`: the bubble energy level.
    pub fn bubble_level(&self, p: &ProblemParams) -> f64 {
        self.sobolev.powi(p.dim as i32) / (2.0 * p.dim as f64)
    }
}

/// `h_a(rho) = rho^2/2 - (mu/q) C^q rho^{qg} a^{q(1-g)} - rho^{2*} / (2* S^{2*/2})`.
pub fn geometry_h(p: &ProblemParams, c: &DerivedConstants, rho: f64) -> f64 {
    if rho == 0.0 {
        return 0.0;
    }
    geometry_g(p, c, rho) - rho.powf(c.two_star) / (c.two_star * c.sobolev.powf(c.two_star / 2.0))
}

/// `g_a(rho)`: `h_a` without the critical term.
pub fn geometry_g(p: &ProblemParams, c: &DerivedConstants, rho: f64) -> f64 {
    if rho == 0.0 {
        return 0.0;
    }
    let qg = p.q * c.gamma_q;
    0.5 * rho * rho - p.mu / p.q * c.c_opt * rho.powf(qg) * p.a.powf(p.q * (1.0 - c.gamma_q))
}

/// `phi_a(rho) = rho^{2-qg} - S^{-2*/2} rho^{2*-qg}`.
pub fn geometry_phi(p: &ProblemParams, c: &DerivedConstants, rho: f64) -> f64 {
    let qg = p.q * c.gamma_q;
    rho.powf(2.0 - qg) - rho.powf(c.two_star - qg) / c.sobolev.powf(c.two_star / 2.0)
}

/// `psi_a(rho) = rho^{2-qg}/2 - rho^{2*-qg} / (2* S^{2*/2})`.
pub fn geometry_psi(p: &ProblemParams, c: &DerivedConstants, rho: f64) -> f64 {
    let qg = p.q * c.gamma_q;
    0.5 * rho.powf(2.0 - qg) - rho.powf(c.two_star - qg) / (c.two_star * c.sobolev.powf(c.two_star / 2.0))
}

/// Zero set of `h_a` on `(0, inf)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum GeometryRoots {
    /// `a < a_*`: `h_a > 0` exactly on `(r0, r1)`.
    Window { r0: f64, r1: f64 },
    /// `a = a_*`: the two roots merge at `rho0`.
    Touching { rho: f64 },
    /// `a > a_*`: `h_a < 0` everywhere.
    Empty,
}

/// Relative distance within which `a` counts as `a_*`.
pub const A_STAR_TOUCH: f64 = 1e-12;

/// Roots `R0 < R1` of `h_a` by bisection on the brackets `(rho_tilde, rho0)` and `(rho0, 2^k rho0)`.
pub fn geometry_roots(p: &ProblemParams, c: &DerivedConstants) -> Result<GeometryRoots> {
    let rel = p.a / c.a_star - 1.0;
    if rel.abs() <= A_STAR_TOUCH {
        return Ok(GeometryRoots::Touching { rho: c.rho0 });
    }
    if rel > 0.0 {
        return Ok(GeometryRoots::Empty);
    }
    let h = |r: f64| geometry_h(p, c, r);
    if !(h(c.rho0) > 0.0) {
        return Err(Error::Degenerate("h_a(rho0) is not positive below a_*".into()));
    }
    let r0 = bisect(&h, c.rho_tilde, c.rho0)?;
    let mut hi = 2.0 * c.rho0;
    while h(hi) >= 0.0 {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Degenerate("no upper root of h_a".into()));
        }
    }
    let r1 = bisect(&h, c.rho0, hi)?;
    Ok(GeometryRoots::Window { r0, r1 })
}

/// Bisection to the floating-point limit on a sign-changing bracket.
pub fn bisect<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> Result<f64> {
    let (mut lo, mut hi) = (lo, hi);
    let (flo, fhi) = (f(lo), f(hi));
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() || !flo.is_finite() || !fhi.is_finite() {
        return Err(Error::Degenerate(format!("no sign change on [{lo}, {hi}]")));
    }
    let lo_neg = flo < 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm < 0.0) == lo_neg {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `Gamma(k/2)` for positive integers `k`.
pub fn gamma_half(k: u32) -> f64 {
    match k {
        0 => f64::INFINITY,
        1 => std::f64::consts::PI.sqrt(),
        2 => 1.0,
        _ => (k as f64 / 2.0 - 1.0) * gamma_half(k - 2),
    }
}

/// Sharp constant of `||u||_{2*}^2 <= S^{-1} int u sqrt(-Delta) u` in dimension `N`.
pub fn sobolev_closed_form(dim: usize) -> f64 {
    let n = dim as u32;
    let pi = std::f64::consts::PI;
    2.0 * pi.sqrt() * gamma_half(n + 1) / gamma_half(n - 1)
        * (gamma_half(n) / gamma_half(2 * n)).powf(1.0 / dim as f64)
}

/// `(2*/2)^{(2-qg)/(2*-2)} qg/2`, which is below one exactly when `a_* < a^*`.
pub fn a_star_order_index(p: &ProblemParams) -> f64 {
    let qg = p.q * p.gamma_q();
    let ts = p.two_star();
    (ts / 2.0).powf((2.0 - qg) / (ts - 2.0)) * qg / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;

    const QN: f64 = 9.8563;

    fn base() -> (ProblemParams, DerivedConstants) {
        let p = ProblemParams::new(2, 2.5, 1.0, 0.1).unwrap();
        let c = derive_constants(&p, QN, sobolev_closed_form(2)).unwrap();
        (p, c)
    }

    #[test]
    fn exponents_at_default() {
        let (p, c) = base();
        assert!((c.gamma_q - 0.4).abs() < 1e-15);
        assert!((p.q * c.gamma_q - 1.0).abs() < 1e-15);
        assert_eq!(c.two_star, 4.0);
        assert!((p.kappa_m() - 3.0).abs() < 1e-14);
        assert!((p.kappa_lambda() - 1.0).abs() < 1e-14);
        assert!((c.rho0 - c.sobolev * (2.0f64 / 3.0).sqrt()).abs() < 1e-14);
        assert!((c.k_nq - 1.0 / (3.0 * QN)).abs() < 1e-15);
        assert!((c.k_nq_printed - 2.0 / (15.0 * QN)).abs() < 1e-15);
        assert!((c.lambda_bar0 + 0.1 / QN).abs() < 1e-15);
        assert!((c.beta - 0.1 / QN).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(ProblemParams::new(2, 3.0, 1.0, 1.0).is_err());
        assert!(ProblemParams::new(2, 2.0, 1.0, 1.0).is_err());
        assert!(ProblemParams::new(2, 2.5, 0.0, 1.0).is_err());
        assert!(ProblemParams::new(2, 2.5, 1.0, -1.0).is_err());
        let msg = ProblemParams::new(2, 3.5, 1.0, 1.0).unwrap_err().to_string();
        assert!(msg.contains("(2, 3)"), "{msg}");
    }

    #[test]
    fn h_vanishes_at_a_star() {
        let (p, c) = base();
        let ps = p.with_a(c.a_star);
        let cs = derive_constants(&ps, QN, c.sobolev).unwrap();
        assert!(geometry_h(&ps, &cs, cs.rho0).abs() < 1e-10 * cs.rho0 * cs.rho0);
        assert_eq!(geometry_h(&ps, &cs, 0.0), 0.0);
        match geometry_roots(&ps, &cs).unwrap() {
            GeometryRoots::Touching { rho } => assert!((rho - cs.rho0).abs() < 1e-8),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn half_a_star_chain() {
        let (p, c) = base();
        let ph = p.with_a(c.a_star / 2.0);
        let ch = derive_constants(&ph, QN, c.sobolev).unwrap();
        assert!(geometry_h(&ph, &ch, ch.rho0) > 0.0);
        let GeometryRoots::Window { r0, r1 } = geometry_roots(&ph, &ch).unwrap() else { panic!() };
        let tol = 1e-12 * ch.rho0.powi(2).max(1.0);
        assert!(geometry_h(&ph, &ch, r0).abs() <= tol);
        assert!(geometry_h(&ph, &ch, r1).abs() <= tol);
        assert!(0.0 < ch.rho_tilde && ch.rho_tilde < r0);
        assert!(r0 < 0.5 * ch.rho0 && 0.5 * ch.rho0 < ch.rho0 && ch.rho0 < r1);
    }

    #[test]
    fn above_a_star_is_empty() {
        let (p, c) = base();
        let pa = p.with_a(1.5 * c.a_star);
        let ca = derive_constants(&pa, QN, c.sobolev).unwrap();
        assert_eq!(geometry_roots(&pa, &ca).unwrap(), GeometryRoots::Empty);
    }

    #[test]
    fn closed_form_sobolev() {
        assert!((sobolev_closed_form(2) - std::f64::consts::PI.sqrt()).abs() < 1e-15);
        assert!((gamma_half(5) - 0.75 * std::f64::consts::PI.sqrt()).abs() < 1e-15);
    }
}

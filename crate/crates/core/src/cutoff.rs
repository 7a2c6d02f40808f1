//! The drawstring as one explicit formula with cutoffs.
//!
//! `f = sn_k · h` with `h = 1 - c1 η(r/r1) ψ(r)`, and
//! `u(r) = -c2 ∫_r^∞ η(4s/r1) ζ(s/(4 r2)) ds / (s log(1/s))`.
//!
//! The inner radius `r2` sits far below the float floor (for desk-scale
//! inputs `log log(1/r2)` is around `1e43`), so it is carried as
//! `r2 = exp(-exp(ell2))` and the inner segments are evaluated on
//! [`Radius::Deep`] values anchored at `ell2`.

use crate::drawstring::{DrawstringSpec, ParamCheck};
use crate::error::{Error, Result};
use crate::ext::{Ext, Radius, Scale};
use crate::radial_metric::{Chart, Jet, ProductSegment, RadialProfile, Segment};
use crate::space_forms::{cot_minus_inv, eta_d, integrate_kernel, sinc_minus_one, sn, sn_cn_ext, zeta_d, Deriv};
use serde::Serialize;
use std::sync::Arc;

/// Smallest ordinary radius of the profile; below it evaluation is deep.
pub const PLAIN_FLOOR: f64 = 1e-200;
const CHECK_GRID: usize = 10_000;
const MAX_HALVINGS: usize = 200;

/// `log log(1/r)`.
fn ell_of(r: f64) -> f64 {
    (-r.ln()).ln()
}

/// Resolved constants of the cutoff construction.
#[derive(Clone, Debug, Serialize)]
pub struct CutoffParams {
    pub k: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub r0: f64,
    pub r1: f64,
    pub c1: f64,
    pub c2: f64,
    /// `c2` at equality in the smallness display, before halving and capping.
    pub c2_equality: f64,
    /// `r2 = exp(-exp(ell2))`.
    pub ell2: f64,
    /// `r2` as a float (zero once below the floor).
    pub r2: f64,
    pub unit_cutoffs: bool,
    pub checks: Vec<ParamCheck>,
}

/// Checks that `r1` is small enough: `log(1/r1) > 4`, `r/2 <= sn_k(r) <= 2r`,
/// `|cn/sn - 1/r| <= |k| r` and `1/(r^a w^b) > 100(|k|+1)` at the corners
/// `(a, b) = (1/2, 5)` and `(2, 1)`, for all grid radii below `r1`.
pub fn lemma41_checks(k: f64, r1: f64) -> Vec<ParamCheck> {
    let w1 = -r1.ln();
    let lk = (100.0 * (k.abs() + 1.0)).ln();
    let mut sn_margin = f64::INFINITY;
    let mut cot_margin = f64::INFINITY;
    let mut corner = [f64::INFINITY; 2];
    // geometric in w from w1 to 1000 w1
    for j in 0..CHECK_GRID {
        let w = w1 * 1000f64.powf(j as f64 / (CHECK_GRID - 1) as f64);
        let r = (-w).exp();
        if r > 1e-300 {
            let s = sn(k, r);
            sn_margin = sn_margin.min(((s - 0.5 * r) / r).min((2.0 * r - s) / r));
            cot_margin = cot_margin.min(k.abs() * r - cot_minus_inv(k, r).abs());
        }
        for (i, (a, b)) in [(0.5, 5.0), (2.0, 1.0)].into_iter().enumerate() {
            corner[i] = corner[i].min(a * w - b * w.ln() - lk);
        }
    }
    let mut log_check = ParamCheck::new("log(1/r1) > 4", w1 - 4.0);
    log_check.holds = w1 > 4.0;
    let mut c0 = ParamCheck::new("1/(r^(1/2) w^5) > 100(|k|+1)", corner[0]);
    c0.holds = corner[0] > 0.0;
    let mut c1 = ParamCheck::new("1/(r^2 w) > 100(|k|+1)", corner[1]);
    c1.holds = corner[1] > 0.0;
    vec![
        log_check,
        ParamCheck::new("r/2 <= sn_k(r) <= 2r", sn_margin),
        ParamCheck::new("|cn/sn - 1/r| <= |k| r", cot_margin),
        c0,
        c1,
    ]
}

/// Largest `r1` in the halving search from `min{r0, 1/(100(1+|k|))}/2` that
/// passes [`lemma41_checks`].
pub fn choose_r1(k: f64, r0: f64) -> Result<f64> {
    if !(r0 > 0.0) {
        return Err(Error::domain("r0", "must be positive"));
    }
    let mut r = r0.min(1.0 / (100.0 * (1.0 + k.abs()))) / 2.0;
    let lk = (100.0 * (k.abs() + 1.0)).ln();
    for _ in 0..=MAX_HALVINGS {
        // the corner functions increase in r, so a failure at r1 itself
        // rejects without the grid
        let w = -r.ln();
        let quick = w > 4.0 && 0.5 * w - 5.0 * w.ln() > lk && 2.0 * w - w.ln() > lk;
        if quick && lemma41_checks(k, r).iter().all(|c| c.holds) {
            return Ok(r);
        }
        r /= 2.0;
    }
    Err(Error::exhausted("choose_r1", MAX_HALVINGS))
}

/// `-h''/h - 2h'/(rh) - 2|k| r h'/h` with `h = 1 - c η(r/r1)/log(1/r)`.
fn c1_expression(k: f64, c: f64, r1: f64, r: f64) -> f64 {
    let w = -r.ln();
    let x = r / r1;
    let (e, e1, e2) = (eta_d(x, Deriv::D0), eta_d(x, Deriv::D1) / r1, eta_d(x, Deriv::D2) / (r1 * r1));
    let psi = 1.0 / w;
    let psi1 = 1.0 / (r * w * w);
    let psi2 = -(w - 2.0) / (r * r * w * w * w);
    let h = 1.0 - c * e * psi;
    let h1 = -c * (e1 * psi + e * psi1);
    let h2 = -c * (e2 * psi + 2.0 * e1 * psi1 + e * psi2);
    -h2 / h - 2.0 * h1 / (r * h) - 2.0 * k.abs() * r * h1 / h
}

/// Grid minimum of the `c1` expression over `[r1/4, r1]`.
pub fn c1_grid_min(k: f64, c: f64, r1: f64) -> f64 {
    (0..CHECK_GRID)
        .map(|j| {
            let r = r1 * (0.25 + 0.75 * j as f64 / (CHECK_GRID - 1) as f64);
            c1_expression(k, c, r1, r)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Halving search for `c1` from `min{r1, 1/(100(1+|k|))}/2`.
pub fn choose_c1(k: f64, epsilon: f64, r1: f64) -> Result<f64> {
    let mut c = r1.min(1.0 / (100.0 * (1.0 + k.abs()))) / 2.0;
    for _ in 0..=MAX_HALVINGS {
        if c1_grid_min(k, c, r1) >= -epsilon {
            return Ok(c);
        }
        c /= 2.0;
    }
    Err(Error::exhausted("choose_c1", MAX_HALVINGS))
}

/// `log log(1/rbar)` for `rbar = min{r1/64, c1^2}`.
fn ell_rbar(c1: f64, r1: f64) -> f64 {
    ell_of(r1 / 64.0).max((-2.0 * c1.ln()).ln())
}

/// Same for the proof's variant `min{r1^2/64, c1^2}`.
fn ell_rbar_proof(c1: f64, r1: f64) -> f64 {
    (-2.0 * r1.ln() + 64f64.ln()).ln().max((-2.0 * c1.ln()).ln())
}

/// `(c2, c2 at equality)`: equality in `c2 [ℓ(rbar) - ℓ(r1)] < log(1/δ)`,
/// halved, then capped by `c1`.
pub fn choose_c2(c1: f64, r1: f64, delta: f64) -> (f64, f64) {
    let eq = (1.0 / delta).ln() / (ell_rbar(c1, r1) - ell_of(r1));
    ((0.5 * eq).min(c1), eq)
}

/// `∫ η(4s/r1) / (s log(1/s)) ds` over `[max(r, r1/8), r1/4]`.
fn j_eta(r1: f64, r: f64) -> f64 {
    let t_lo = (4.0 * r / r1).max(0.5);
    integrate_kernel(|t| eta_d(t, Deriv::D0) / (t * -(r1 * t / 4.0).ln()), t_lo, 1.0)
}

/// `∫ ζ(y) / (y (W2 - log 4y)) dy` over `[y_lo, 1]`; `s = 4 r2 y`.
fn j_zeta(w2: f64, y_lo: f64) -> f64 {
    if !w2.is_finite() {
        return 0.0;
    }
    integrate_kernel(|y| zeta_d(y, Deriv::D0) / (y * (w2 - (4.0 * y).ln())), y_lo.max(0.5), 1.0)
}

/// Parts of `ψ(x r2) = A(x)/W2^2 + B(x) r2` for `x <= 1`.
fn psi_parts(w2: f64, x: f64) -> (f64, f64) {
    let x = x.min(1.0);
    let a = integrate_kernel(
        |t| {
            let q = if w2.is_finite() { 1.0 - t.ln() / w2 } else { 1.0 };
            zeta_d(t, Deriv::D0) / (t * q * q)
        },
        0.5,
        x,
    );
    let b = if x <= 0.5 { 0.5 * x * x } else { 0.125 + integrate_kernel(|t| (1.0 - zeta_d(t, Deriv::D0)) * t, 0.5, x) };
    (a, b)
}

/// Result of the `r2` solve.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct R2Root {
    pub ell2: f64,
    /// `|I(r2) - log(1/δ)| / log(1/δ)`.
    pub residual: f64,
    /// `I` at `rbar = min{r1/64, c1^2}`.
    pub i_upper: f64,
    /// `I` at the proof's `rbar = min{r1^2/64, c1^2}`.
    pub i_upper_proof: f64,
}

/// `I(r2) = c2 ∫_0^∞ η(4s/r1) ζ(s/(4 r2)) ds/(s log(1/s))` as a function of
/// `ell2 = log log(1/r2)`.
pub fn i_of_ell2(c2: f64, r1: f64, ell2: f64) -> f64 {
    let w2 = ell2.exp();
    let ell_4r2 = ell2 + (-(4f64.ln()) / w2).ln_1p();
    c2 * (j_eta(r1, r1 / 8.0) + ell_4r2 - ell_of(r1 / 8.0) + j_zeta(w2, 0.5))
}

/// Bisection in `ell2` for `I(r2) = log(1/δ)` on `r2 < min{r1/64, c1^2}`.
///
/// Returns the end of the final bracket with `I >= log(1/δ)`, so that
/// `e^{u(0)} <= δ` holds exactly.
pub fn solve_r2(c1: f64, c2: f64, r1: f64, delta: f64) -> Result<R2Root> {
    let target = (1.0 / delta).ln();
    let mut lo = ell_rbar(c1, r1);
    let i_upper = i_of_ell2(c2, r1, lo);
    if !(i_upper < target) {
        return Err(Error::construction("solve_r2", format!("I(rbar) = {i_upper} is not below log(1/δ) = {target}")));
    }
    let i_upper_proof = i_of_ell2(c2, r1, ell_rbar_proof(c1, r1));
    let mut hi = (2.0 * lo).max(lo + 1.0);
    let mut grow = 0;
    while i_of_ell2(c2, r1, hi) < target {
        hi *= 2.0;
        grow += 1;
        if grow > 2000 || !hi.is_finite() {
            return Err(Error::construction("solve_r2", "I stays below log(1/δ) on representable r2"));
        }
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if i_of_ell2(c2, r1, mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let residual = (i_of_ell2(c2, r1, hi) - target).abs() / target;
    if residual > 1e-10 {
        return Err(Error::construction("solve_r2", format!("residual {residual} above 1e-10")));
    }
    Ok(R2Root { ell2: hi, residual, i_upper, i_upper_proof })
}

/// Closed-form evaluator shared by the segments of one profile.
#[derive(Debug)]
pub struct CutoffCore {
    pub k: f64,
    pub r1: f64,
    pub c1: f64,
    pub c2: f64,
    pub ell2: f64,
    w2: f64,
    /// `ψ(r2) - 1/log(1/r2)`, relative to the `r2` scale.
    t1: Ext,
    a_full: f64,
    b_full: f64,
    j_eta_full: f64,
    ell_r1_8: f64,
    ell_4r2: f64,
    /// Replace both cutoffs by one (prototype limit).
    unit: bool,
}

impl CutoffCore {
    pub fn new(k: f64, r1: f64, c1: f64, c2: f64, ell2: f64, unit: bool) -> Self {
        let sc2 = Scale::from_ell(ell2);
        let w2 = sc2.big_w;
        let (a_full, b_full) = psi_parts(w2, 1.0);
        let inv_w2 = Ext::new(1.0, 0, -1, 0.0, sc2);
        let r2 = Ext::new(1.0, -1, 0, 0.0, sc2);
        let t1 = inv_w2 * inv_w2 * a_full + r2 * b_full - inv_w2;
        CutoffCore {
            k,
            r1,
            c1,
            c2,
            ell2,
            w2,
            t1,
            a_full,
            b_full,
            j_eta_full: j_eta(r1, r1 / 8.0),
            ell_r1_8: ell_of(r1 / 8.0),
            ell_4r2: ell2 + (-(4f64.ln()) / w2).ln_1p(),
            unit,
        }
    }

    /// `r / r2` when `r` is anchored at `r2`.
    fn anchored_x(&self, r: &Radius) -> Option<f64> {
        match *r {
            Radius::Deep { ell, x } if ell == self.ell2 && !self.unit => Some(x),
            _ => None,
        }
    }

    /// `(ψ, ψ', ψ'')` at any radius.
    pub fn psi(&self, r: &Radius) -> [Ext; 3] {
        let sc = r.scale();
        let rr = r.r();
        let w = r.w();
        let inv_rw2 = (rr * w * w).recip();
        let outer = |psi: Ext| {
            // ζ(r/r2) = 1: ψ' = 1/(r w^2), ψ'' = (2/w - 1)/(r^2 w^2)
            let d2 = inv_rw2 / rr * (w.recip() * 2.0 + Ext::real(-1.0, sc));
            [psi, inv_rw2, d2]
        };
        if self.unit {
            return outer(w.recip());
        }
        match self.anchored_x(r) {
            Some(x) if x < 1.0 => {
                let (a, b) = psi_parts(self.w2, x);
                let inv_w2 = Ext::new(1.0, 0, -1, 0.0, sc);
                let r2 = Ext::new(1.0, -1, 0, 0.0, sc);
                let inv_r2 = r2.recip();
                let (z, z1) = (zeta_d(x, Deriv::D0), zeta_d(x, Deriv::D1));
                let psi = inv_w2 * inv_w2 * a + r2 * b;
                let d1 = inv_rw2 * z + Ext::real((1.0 - z) * x, sc);
                let d2 = inv_rw2 * inv_r2 * z1 + inv_rw2 / rr * (w.recip() * 2.0 + Ext::real(-1.0, sc)) * z
                    - inv_r2 * (z1 * x)
                    + inv_r2 * (1.0 - z);
                [psi, d1, d2]
            }
            Some(x) => {
                // 1/w - 1/W2 = (ln x / W2^2) / (1 - ln x / W2)
                let lx = x.ln();
                let q = if self.w2.is_finite() { 1.0 - lx / self.w2 } else { 1.0 };
                let inv_w2 = Ext::new(1.0, 0, -1, 0.0, sc);
                let psi = inv_w2 * inv_w2 * (self.a_full + lx / q) + Ext::new(1.0, -1, 0, 0.0, sc) * self.b_full;
                outer(psi)
            }
            None => outer(w.recip() + self.t1.transfer(sc)),
        }
    }

    /// `(η(r/r1), d/dr, d^2/dr^2)`; one below the ordinary range.
    fn eta_factor(&self, r: &Radius) -> [f64; 3] {
        match *r {
            Radius::Plain(x) if !self.unit => {
                let y = x / self.r1;
                [eta_d(y, Deriv::D0), eta_d(y, Deriv::D1) / self.r1, eta_d(y, Deriv::D2) / (self.r1 * self.r1)]
            }
            _ => [1.0, 0.0, 0.0],
        }
    }

    /// `(h, h', h'')`.
    pub fn h(&self, r: &Radius) -> [Ext; 3] {
        let sc = r.scale();
        let [p0, p1, p2] = self.psi(r);
        let [e0, e1, e2] = self.eta_factor(r);
        let c = -self.c1;
        let h = Ext::real(1.0, sc) + p0 * (c * e0);
        let h1 = (p0 * e1 + p1 * e0) * c;
        let h2 = (p0 * e2 + p1 * (2.0 * e1) + p2 * e0) * c;
        [h, h1, h2]
    }

    /// `u`, nondecreasing, zero from `r1/4` on and constant below `2 r2`.
    pub fn u(&self, r: &Radius) -> f64 {
        if self.unit {
            return -self.c2 * r.ln_w();
        }
        let c2 = self.c2;
        match *r {
            Radius::Plain(x) if x >= self.r1 / 4.0 => 0.0,
            Radius::Plain(x) if x >= self.r1 / 8.0 => -c2 * j_eta(self.r1, x),
            _ => match self.anchored_x(r) {
                Some(x) if x < 4.0 => {
                    -c2 * (self.j_eta_full + self.ell_4r2 - self.ell_r1_8 + j_zeta(self.w2, x.max(2.0) / 4.0))
                }
                _ => -c2 * (self.j_eta_full + r.ln_w() - self.ell_r1_8),
            },
        }
    }

    /// `u' = c2 η(4r/r1) ζ(r/(4 r2)) / (r log(1/r))`.
    pub fn up(&self, r: &Radius) -> Ext {
        let fe = match *r {
            Radius::Plain(x) if !self.unit => eta_d(4.0 * x / self.r1, Deriv::D0),
            _ => 1.0,
        };
        let fz = self.anchored_x(r).map_or(1.0, |x| zeta_d(x / 4.0, Deriv::D0));
        let c = self.c2 * fe * fz;
        if c == 0.0 {
            return Ext::zero(r.scale());
        }
        (r.r() * r.w()).recip() * c
    }

    pub fn jet(&self, r: &Radius) -> Jet {
        let (s, c) = sn_cn_ext(self.k, r);
        let [h, h1, h2] = self.h(r);
        let f = s * h;
        let fp = c * h + s * h1;
        let fpp = s * h * (-self.k) + c * h1 * 2.0 + s * h2;
        Jet { f, fp, fpp, u: self.u(r), up: self.up(r) }
    }

    /// `h - 1` at an ordinary radius, free of cancellation.
    fn h_minus_one(&self, r: f64) -> f64 {
        let rr = Radius::Plain(r);
        let [p0, _, _] = self.psi(&rr);
        -self.c1 * self.eta_factor(&rr)[0] * p0.to_f64()
    }
}

/// One piece of the cutoff profile; all pieces share a [`CutoffCore`].
#[derive(Clone, Debug)]
pub struct CutoffSegment {
    pub core: Arc<CutoffCore>,
    pub label: &'static str,
    pub lo: Radius,
    pub hi: Radius,
    pub charts: Vec<Chart>,
}

impl Segment for CutoffSegment {
    fn name(&self) -> String {
        self.label.into()
    }
    fn lo(&self) -> Radius {
        self.lo
    }
    fn hi(&self) -> Radius {
        self.hi
    }
    fn charts(&self) -> Vec<Chart> {
        self.charts.clone()
    }
    fn jet(&self, r: &Radius) -> Jet {
        self.core.jet(r)
    }
    fn deviation(&self, rho: f64, kref: f64, r_ref: f64) -> (f64, f64) {
        if kref != self.core.k || r_ref != rho {
            let j = self.jet(&Radius::Plain(rho));
            let f = j.f.to_f64();
            return (f / sn(kref, r_ref) - 1.0, j.fp.to_f64() / f - crate::space_forms::cot_k(kref, r_ref));
        }
        // f / sn_k = h and f'/f - cn/sn = h'/h
        let [h, h1, _] = self.core.h(&Radius::Plain(rho));
        (self.core.h_minus_one(rho), (h1 / h).to_f64())
    }
    fn f_dev(&self, r: f64) -> f64 {
        r * sinc_minus_one(self.core.k, r) + sn(self.core.k, r) * self.core.h_minus_one(r)
    }
    fn prototype_params(&self) -> Option<(f64, f64)> {
        (self.core.unit && self.core.k == 0.0).then_some((self.core.c1, self.core.c2))
    }
}

/// Construction options.
#[derive(Clone, Copy, Debug, Default)]
pub struct CutoffOptions {
    /// Debug mode: both cutoffs replaced by one, giving the prototype
    /// `f = sn_k (1 - c1/w)`, `u = -c2 log w` on `(0, r1]`.
    pub unit_cutoffs: bool,
}

pub fn build_drawstring_b(spec: &DrawstringSpec) -> Result<(RadialProfile, CutoffParams)> {
    build_drawstring_b_with(spec, CutoffOptions::default())
}

pub fn build_drawstring_b_with(spec: &DrawstringSpec, opts: CutoffOptions) -> Result<(RadialProfile, CutoffParams)> {
    spec.validate()?;
    let (k, eps, delta) = (spec.k, spec.epsilon, spec.delta);
    let r0 = spec.r1_max.map_or(spec.r0, |m| spec.r0.min(2.0 * m));
    let r1 = choose_r1(k, r0).map_err(|e| e.in_stage("cutoff"))?;
    let c1 = choose_c1(k, eps, r1).map_err(|e| e.in_stage("cutoff"))?;
    let (c2, c2_eq) = choose_c2(c1, r1, delta);
    let root = solve_r2(c1, c2, r1, delta).map_err(|e| e.in_stage("cutoff"))?;
    let ell2 = root.ell2;
    let w2 = ell2.exp();
    if !(w2 > 1e4) {
        return Err(Error::construction("cutoff", format!("r2 = exp(-{w2}) is not deep; inputs outside the supported range")));
    }
    let target = (1.0 / delta).ln();
    let mut checks = lemma41_checks(k, r1);
    checks.push(ParamCheck::le("r1 < r0", r1, spec.r0));
    checks.push(ParamCheck::new("c1 grid-min expression >= -eps", c1_grid_min(k, c1, r1) + eps));
    checks.push(ParamCheck::le("c1 < min{r1, 1/(100(1+|k|))}", c1, r1.min(1.0 / (100.0 * (1.0 + k.abs())))));
    checks.push(ParamCheck::le("c2 <= c1", c2, c1));
    checks.push(ParamCheck::le("c2 [l(rbar) - l(r1)] < log(1/delta)", c2 * (ell_rbar(c1, r1) - ell_of(r1)), target));
    checks.push(ParamCheck::le("I(rbar) < log(1/delta)", root.i_upper, target));
    checks.push(ParamCheck::le("I(rbar, proof variant) < log(1/delta)", root.i_upper_proof, target));
    checks.push(ParamCheck::new("r2 < min{r1/64, c1^2}", ell2 - ell_rbar(c1, r1)));
    checks.push(ParamCheck::le("|I(r2) - log(1/delta)| <= 1e-10 log(1/delta)", root.residual, 1e-10));

    let core = Arc::new(CutoffCore::new(k, r1, c1, c2, ell2, opts.unit_cutoffs));
    let seg = |label, lo, hi, charts| -> Arc<dyn Segment> { Arc::new(CutoffSegment { core: core.clone(), label, lo, hi, charts }) };
    let segments = if opts.unit_cutoffs {
        vec![seg("prototype", Radius::Plain(0.0), Radius::Plain(r1), vec![Chart::Plain { a: PLAIN_FLOOR, b: r1 }])]
    } else {
        let at = |x| Radius::Deep { ell: ell2, x };
        let ell_top = (ell2 + (-700.0 / w2).ln_1p()).min(ell2 * (1.0 - 4e-16));
        vec![
            seg("axis", at(0.0), at(2.0), vec![Chart::Anchored { ell: ell2, xa: 1e-6, xb: 2.0 }]),
            seg("drawstring", at(2.0), at(64.0), vec![Chart::Anchored { ell: ell2, xa: 2.0, xb: 64.0 }]),
            seg(
                "deep core",
                at(64.0),
                Radius::Plain(PLAIN_FLOOR),
                vec![Chart::Anchored { ell: ell2, xa: 64.0, xb: 1e300 }, Chart::Log { ell_a: ell_of(PLAIN_FLOOR), ell_b: ell_top }],
            ),
            seg(
                "core",
                Radius::Plain(PLAIN_FLOOR),
                Radius::Plain(r1),
                vec![
                    Chart::Plain { a: PLAIN_FLOOR, b: r1 / 8.0 },
                    Chart::Plain { a: r1 / 8.0, b: r1 / 4.0 },
                    Chart::Plain { a: r1 / 4.0, b: r1 / 2.0 },
                    Chart::Plain { a: r1 / 2.0, b: r1 },
                ],
            ),
            Arc::new(ProductSegment::model(k, r1, 2.0 * r1)),
        ]
    };
    let profile = RadialProfile::new(segments)?;
    let params = CutoffParams {
        k,
        epsilon: eps,
        delta,
        r0: spec.r0,
        r1,
        c1,
        c2,
        c2_equality: c2_eq,
        ell2,
        r2: Radius::Deep { ell: ell2, x: 1.0 }.to_f64(),
        unit_cutoffs: opts.unit_cutoffs,
        checks,
    };
    Ok((profile, params))
}

impl CutoffParams {
    /// The evaluator these constants define.
    pub fn core(&self) -> CutoffCore {
        CutoffCore::new(self.k, self.r1, self.c1, self.c2, self.ell2, self.unit_cutoffs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drawstring::Method;
    use crate::radial_metric::prototype_closed_form;

    fn spec(eps: f64, delta: f64) -> DrawstringSpec {
        DrawstringSpec::new(0.0, eps, delta, 1e-3, Method::B)
    }

    #[test]
    fn r1_search_meets_all_checks() {
        let r1 = choose_r1(0.0, 1e-3).unwrap();
        assert!(r1 <= 1e-3);
        assert!(-r1.ln() > 4.0);
        assert!(lemma41_checks(0.0, r1).iter().all(|c| c.holds));
        // one halving up fails, so r1 is the largest on the ladder
        assert!(!lemma41_checks(0.0, 2.0 * r1).iter().all(|c| c.holds));
        let r1k = choose_r1(1.0, 1e-3).unwrap();
        for j in 0..200 {
            let r = r1k * 0.9f64.powi(j);
            let s = sn(1.0, r);
            assert!(0.5 * r <= s && s <= 2.0 * r);
        }
    }

    #[test]
    fn c1_search() {
        let r1 = choose_r1(0.0, 1e-3).unwrap();
        assert_eq!(c1_grid_min(0.0, 0.0, r1), 0.0);
        let c1 = choose_c1(0.0, 0.1, r1).unwrap();
        assert!(c1 < r1);
        // independent grid minimization at a finer, shifted grid
        let m = (0..30_001)
            .map(|j| c1_expression(0.0, c1, r1, r1 * (0.25 + 0.75 * (j as f64 + 0.5) / 30_001.0)))
            .fold(f64::INFINITY, f64::min);
        assert!(m >= -0.1 * 1.001, "{m}");
    }

    #[test]
    fn r2_root_and_brackets() {
        let r1 = choose_r1(0.0, 1e-3).unwrap();
        let c1 = choose_c1(0.0, 0.1, r1).unwrap();
        let (c2, _) = choose_c2(c1, r1, 0.1);
        let root = solve_r2(c1, c2, r1, 0.1).unwrap();
        let target = 10f64.ln();
        assert!(root.i_upper < target);
        assert!((i_of_ell2(c2, r1, root.ell2) - target).abs() <= 1e-10 * target);
        // I grows without bound as r2 shrinks
        assert!(i_of_ell2(c2, r1, root.ell2 * 4.0) > 3.0 * target);
    }

    #[test]
    fn psi_values() {
        let (p, cp) = build_drawstring_b(&spec(0.1, 0.1)).unwrap();
        let core = cp.core();
        // ψ(r2/4) = r2/32, compared as extended values
        let r = Radius::Deep { ell: cp.ell2, x: 0.25 };
        let psi = core.psi(&r)[0];
        let want = Ext::new(1.0 / 32.0, -1, 0, 0.0, r.scale());
        assert!(((psi / want).to_f64() - 1.0).abs() < 1e-14);
        for (_, r) in p.grid(500) {
            if r.cmp_radius(&Radius::Plain(cp.r1)) == std::cmp::Ordering::Greater {
                continue;
            }
            let psi = core.psi(&r)[0];
            assert!(psi.cmp_ext(&Ext::real(0.5, r.scale())).is_le());
            // ψ <= 1/w + r2/2
            let bound = r.w().recip() + Ext::new(0.5, -1, 0, 0.0, Scale::from_ell(cp.ell2)).transfer(r.scale());
            assert!(psi.cmp_ext(&bound).is_le(), "{r:?}");
        }
    }

    #[test]
    fn built_profile_properties() {
        let (p, cp) = build_drawstring_b(&spec(0.1, 0.1)).unwrap();
        assert!(cp.checks.iter().all(|c| c.holds), "{:?}", cp.checks);
        let u0 = p.jet(&Radius::Deep { ell: cp.ell2, x: 1e-3 }).unwrap().u;
        assert!((u0.exp() - 0.1).abs() <= 1e-10 * 0.1);
        assert!(u0.exp() <= 0.1);
        let mut prev_u = f64::NEG_INFINITY;
        for (i, r) in p.grid(1000) {
            let j = p.segments[i].jet(&r);
            assert!(j.fp.signum() > 0.0, "f' at {r:?}");
            assert!(j.u >= prev_u - 1e-300, "u decreases at {r:?}");
            prev_u = j.u;
            // e^{-u} <= w^{c2}
            assert!(-j.u <= cp.c2 * r.ln_w() + 1e-15, "{r:?}");
            let r_min = j.scalar_curvature().margin_over(2.0 * (0.0 - 0.1));
            assert!(r_min >= -1e-7, "R at {r:?}: {r_min}");
            if r.cmp_radius(&Radius::Plain(cp.r1)).is_le() && !matches!(p.segments[i].name().as_str(), "model") {
                let h = cp.core().h(&r)[0];
                assert!(h.cmp_ext(&Ext::real(0.5, r.scale())).is_ge());
            }
        }
    }

    #[test]
    fn unit_cutoffs_reduce_to_prototype() {
        let opts = CutoffOptions { unit_cutoffs: true };
        let (p, cp) = build_drawstring_b_with(&spec(0.1, 0.1), opts).unwrap();
        for (i, r) in p.grid(2000) {
            let Radius::Plain(x) = r else { continue };
            // compared in logs, the curvature overflows near the floor
            let got = p.segments[i].jet(&r).scalar_curvature().ln_abs();
            let (c1, c2, w) = (cp.c1, cp.c2, -x.ln());
            let bracket = c1 * (c1 + 2.0) / (w - c1) + c1 - c2 * c2;
            let want = 2f64.ln() - 2.0 * x.ln() - (2.0 + 2.0 * c2) * w.ln() + bracket.ln();
            assert!((got - want).abs() <= 1e-8, "r={x}: {got} vs {want}");
            if x > 1e-150 {
                let direct = prototype_closed_form(c1, c2, x);
                assert!((got.exp() / direct - 1.0).abs() <= 1e-8);
            }
        }
    }
}

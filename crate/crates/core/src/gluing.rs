//! The drawstring glued from four closed-form pieces.
//!
//! Outward from the axis: a cap `sn_A` of huge curvature `A`, the core
//! `f = r(1 - c1/log(1/r))` with `u = -c2 h(r/r4) log log(1/r)`, a cone piece
//! `α sn_{k-ε}` and the model `sn_k` on `[r1, 2 r1]`. Neighbours match to
//! first order. The potential is then made constant at the inner end of the
//! core ([`smooth_u_with`]) and `f` is mollified at the three junctions
//! ([`smooth_f_with`]).
//!
//! The inner radius `r5` is far below the float floor, so the cap and the
//! inner end of the core are evaluated on [`Radius::Deep`] values anchored at
//! `ell5 = log log(1/r5)`.

use crate::drawstring::{DrawstringSpec, ParamCheck};
use crate::error::{Error, Result};
use crate::ext::{Ext, Radius};
use crate::radial_metric::{prototype_jet, Chart, Jet, ProductSegment, RadialProfile, RefMap, Segment};
use crate::smoothing::{smooth_f_with, smooth_u_with, SmoothFReport, SmoothFTol, SmoothUReport};
use crate::space_forms::{
    atanc_k, atanc_minus_one, cos_k, cos_minus_one, eta_d, kernel, ln_tanc, sinc_k, sinc_minus_one, sn, tn, Deriv,
};
use serde::Serialize;
use std::sync::Arc;

/// Smallest ordinary radius of the profile; below it evaluation is deep.
pub const PLAIN_FLOOR: f64 = 1e-200;
const CHECK_GRID: usize = 10_000;
const MAX_HALVINGS: usize = 400;
const MAX_DOUBLINGS: usize = 200;
const GRID: usize = 200;
/// Bound on `|u - v(2 r5)|` over the flattening window. The window itself is
/// far below the float floor, where `|v(2 r5) - v(r5)| ~ c2 log 2 / w5` dwarfs
/// `r5`, so the bound cannot be the window width.
pub const U_FLATTEN_BOUND: f64 = 1e-3;
/// Relative size of the smoothing windows against the neighbouring lengths.
const WINDOW: f64 = 1e-3;

/// `log log(1/r)`.
fn ell_of(r: f64) -> f64 {
    (-r.ln()).ln()
}

/// Inputs after shrinking into the range the construction needs: `ε` is
/// halved (the smoothing step spends the other half) and capped at
/// `1e-3 min{2, 1 + |k|}`, and `r0` is capped at `1e-3 min{1, 1/|k|}`.
pub fn internal_inputs(k: f64, epsilon: f64, r0: f64) -> (f64, f64) {
    let eps = (0.5 * epsilon).min(1e-3 * (1.0 + k.abs()).min(2.0));
    let r0 = r0.min(1e-3 * if k == 0.0 { 1.0 } else { (1.0 / k.abs()).min(1.0) });
    (eps, r0)
}

/// `log(r2 / r1) = log(tn_k(r1)/r1) + log atanc_{k-ε}(tn_k(r1)^2)`.
fn ln_r2_over_r1(k: f64, eps: f64, r1: f64) -> Result<f64> {
    let t = tn(k, r1)?;
    Ok(ln_tanc(k, r1) + atanc_minus_one((k - eps) * t * t).ln_1p())
}

/// The smallness system for `r1`, checked on a grid in `w = log(1/r)` from
/// `log(1/r1)` to `1000 log(1/r1)` (each expression is monotone beyond).
pub fn r1_checks(k: f64, eps: f64, r0: f64, r1: f64) -> Vec<ParamCheck> {
    let big = k.abs().max(1.0);
    let kk = k - eps;
    let ratio = ln_r2_over_r1(k, eps, r1).map(f64::exp).unwrap_or(f64::NAN);
    let w1 = -r1.ln();
    let (mut sn_m, mut c3a, mut c3b, mut c4a, mut c4b) = (f64::INFINITY, f64::INFINITY, f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let target = (100.0 * big).ln();
    for j in 0..CHECK_GRID {
        let w = w1 * 1000f64.powf(j as f64 / (CHECK_GRID - 1) as f64);
        let r = (-w).exp();
        let lo = 1.0 + sinc_minus_one(k + 1.0, r);
        let hi = 1.0 + sinc_minus_one(k - 1.0, r);
        sn_m = sn_m.min(lo - 0.5).min(2.0 - hi);
        let e1 = kk * r * r + 2.0 / w + 1.0 / (w * w);
        let e2 = kk * r * r + 1.0 / w;
        c3a = c3a.min(e1).min(1.0 - e1);
        c3b = c3b.min(e2).min(1.0 - e2);
        // sqrt(r) log(1/r) < 1e-3 in logs
        c4a = c4a.min((1e-3f64).ln() - (-0.5 * w + w.ln()));
        c4b = c4b.min(0.5 * w - 8f64.ln() - 5.0 * w.ln() - target);
    }
    vec![
        ParamCheck::new("r1/2 <= arctn_{k-eps}(tn_k(r1)) <= 2 r1", (ratio - 0.5).min(2.0 - ratio)),
        ParamCheck::le("r1 (7 log(1/r1) + 4) < r0", r1 * (7.0 * w1 + 4.0), r0),
        ParamCheck::new("r/2 <= sn_k'(r) <= 2r for |k' - k| <= 1", sn_m),
        ParamCheck::new("0 <= (k-eps) r^2 + 2/w + 1/w^2 <= 1", c3a),
        ParamCheck::new("0 <= (k-eps) r^2 + 1/w <= 1", c3b),
        ParamCheck::new("sqrt(r) log(1/r) < 1e-3", c4a),
        ParamCheck::new("1/(8 sqrt(r) w^5) >= 100 max{|k|,1}", c4b),
    ]
}

/// Largest `r1 = start / 2^n` passing [`r1_checks`].
pub fn choose_r1(k: f64, eps: f64, r0: f64, cap: f64) -> Result<f64> {
    let mut r1 = r0.min(cap);
    if k > 0.0 {
        r1 = r1.min(0.25 * std::f64::consts::PI / k.sqrt());
    }
    for _ in 0..MAX_HALVINGS {
        if r1_checks(k, eps, r0, r1).iter().all(|c| c.holds) {
            return Ok(r1);
        }
        r1 *= 0.5;
    }
    Err(Error::exhausted("r1", MAX_HALVINGS))
}

/// First-order matching of the cone piece to the model at `r1`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Matching12 {
    pub r2: f64,
    /// `r2/r1 - 1`, without cancellation.
    pub delta2: f64,
    pub alpha: f64,
    /// `1 - α`.
    pub defect: f64,
    /// Relative mismatch of `f` and absolute mismatch of `f'`.
    pub res_f: f64,
    pub res_fp: f64,
}

/// `r2 = arctn_{k-ε}(tn_k(r1))`, `α = sqrt(1 - ε sn_k(r1)^2)`.
pub fn solve_matching_12(k: f64, eps: f64, r1: f64) -> Result<Matching12> {
    let kk = k - eps;
    let delta2 = ln_r2_over_r1(k, eps, r1)?.exp_m1();
    let r2 = r1 + r1 * delta2;
    let s2 = sn(k, r1).powi(2);
    let alpha = (1.0 - eps * s2).sqrt();
    let defect = eps * s2 / (1.0 + alpha);
    let ln_alpha = 0.5 * (-eps * s2).ln_1p();
    let res_f = (ln_alpha + delta2.ln_1p() + sinc_minus_one(kk, r2).ln_1p() - sinc_minus_one(k, r1).ln_1p()).abs();
    // 1 - f' on both sides
    let d1 = -cos_minus_one(k, r1);
    let d2 = defect - alpha * cos_minus_one(kk, r2);
    let res_fp = (d1 - d2).abs();
    Ok(Matching12 { r2, delta2, alpha, defect, res_f, res_fp })
}

/// Smaller root of `a c^2 - 2 b c + d = 0` in the form `d / (b + sqrt(b^2 - a d))`.
pub fn c1_root(a: f64, b: f64, d: f64) -> Result<f64> {
    let disc = b * b - a * d;
    if !(disc >= 0.0) || !(b > 0.0) {
        return Err(Error::construction("c1", format!("negative discriminant {disc}; r1 fails the smallness system")));
    }
    Ok(d / (b + disc.sqrt()))
}

/// First-order matching of the core to the cone piece at `r4 = ε r1^2`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Matching23 {
    pub r4: f64,
    pub w4: f64,
    pub a: f64,
    pub b: f64,
    pub d: f64,
    pub c1: f64,
    pub r3: f64,
    /// `r3/r4 - 1`.
    pub delta3: f64,
    pub res_f: f64,
    /// `|(1 - f3') - (1 - f2')| / (1 - f3')` at the junction.
    pub res_fp: f64,
}

/// `c1` from the quadratic obtained by eliminating `r3`, then `r3` from the
/// value equation.
pub fn solve_c1_quadratic(k: f64, eps: f64, r1: f64, m: &Matching12) -> Result<Matching23> {
    let kk = k - eps;
    let r4 = eps * r1 * r1;
    let w4 = -r4.ln();
    let a = 1.0 / (w4 * w4) + kk * r4 * r4 / (w4 * w4) + 2.0 / w4.powi(3) + 1.0 / w4.powi(4);
    let b = 1.0 / w4 + 1.0 / (w4 * w4) + kk * r4 * r4 / w4;
    // 1 - α^2 = ε sn_k(r1)^2
    let d = m.defect * (1.0 + m.alpha) + kk * r4 * r4;
    let c1 = c1_root(a, b, d)?;
    let lo = w4 * r4 / 32.0;
    let hi = (8.0 * r4).sqrt() * w4;
    if !(lo <= c1 && c1 <= hi) {
        return Err(Error::construction("c1", format!("c1 = {c1} outside [{lo}, {hi}]")));
    }
    let ln_alpha = (-m.defect).ln_1p();
    let base = (-c1 / w4).ln_1p() - ln_alpha;
    let mut delta3 = 0.0;
    for _ in 0..4 {
        let r3 = r4 * (1.0 + delta3);
        delta3 = (base - sinc_minus_one(kk, r3).ln_1p()).exp_m1();
    }
    let r3 = r4 + r4 * delta3;
    if !(r3 > 0.0 && r3 <= 4.0 * r4) {
        return Err(Error::construction("c1", format!("r3 = {r3} outside (0, 4 eps r1^2]")));
    }
    let res_f = (base - delta3.ln_1p() - sinc_minus_one(kk, r3).ln_1p()).abs();
    let d3 = c1 / w4 + c1 / (w4 * w4);
    let d2 = m.defect - m.alpha * cos_minus_one(kk, r3);
    let res_fp = (d3 - d2).abs() / d3;
    Ok(Matching23 { r4, w4, a, b, d, c1, r3, delta3, res_f, res_fp })
}

/// Bound `H` on `|h'|` for `h(x) = eta(2x - 1/2)`, measured.
pub fn h_bound() -> f64 {
    (2.0 * kernel().sup_eta_p).max(8.0)
}

/// `c2 = min{sqrt(c1/2), 1/100, ε r1^2 sqrt(max{|k|,1}) / (2 H log log(2/(ε r1^2)))}`.
pub fn choose_c2(k: f64, eps: f64, r1: f64, c1: f64) -> f64 {
    let big = k.abs().max(1.0);
    let ll = (2.0 / (eps * r1 * r1)).ln().ln();
    (c1 / 2.0).sqrt().min(0.01).min(eps * r1 * r1 * big.sqrt() / (2.0 * h_bound() * ll))
}

/// `ln` of `c2^2 C/(ε^2 r1^4) (log log(2/(ε r1^2)))^2`.
fn ln_c2_term(c2: f64, eps: f64, r1: f64, c: f64) -> f64 {
    let ll = (2.0 / (eps * r1 * r1)).ln().ln();
    2.0 * c2.ln() + c.ln() - 2.0 * eps.ln() - 4.0 * r1.ln() + 2.0 * ll.ln()
}

/// The core before and after flattening: `f3 = r(1 - c1/w)`,
/// `v3 = -c2 h(r/r4) log w` on `[r5, r4]`.
#[derive(Clone, Debug)]
pub struct CorePiece {
    pub c1: f64,
    pub c2: f64,
    pub r4: f64,
    pub r5: Radius,
}

impl CorePiece {
    /// `h(r/r4)` and `d/dr` of it.
    fn h(&self, r: &Radius) -> (f64, f64) {
        match *r {
            Radius::Plain(x) => {
                let y = 2.0 * x / self.r4 - 0.5;
                (eta_d(y, Deriv::D0), 2.0 * eta_d(y, Deriv::D1) / self.r4)
            }
            Radius::Deep { .. } => (1.0, 0.0),
        }
    }

    pub fn v3(&self, r: &Radius) -> f64 {
        -self.c2 * self.h(r).0 * r.ln_w()
    }
}

impl Segment for CorePiece {
    fn name(&self) -> String {
        "core".into()
    }
    fn lo(&self) -> Radius {
        self.r5
    }
    fn hi(&self) -> Radius {
        Radius::Plain(self.r4)
    }
    fn charts(&self) -> Vec<Chart> {
        let r4 = self.r4;
        let mut c = Vec::new();
        if let Radius::Deep { ell, .. } = self.r5 {
            let big_w = ell.exp();
            let ell_top = (ell + (-700.0 / big_w).ln_1p()).min(ell * (1.0 - 4e-16));
            c.push(Chart::Anchored { ell, xa: 1.0, xb: 2.0 });
            c.push(Chart::Anchored { ell, xa: 2.0, xb: 1e300 });
            c.push(Chart::Log { ell_a: ell_of(PLAIN_FLOOR), ell_b: ell_top });
        }
        c.extend([
            Chart::Plain { a: PLAIN_FLOOR, b: r4 / 4.0 },
            Chart::Plain { a: r4 / 4.0, b: r4 / 2.0 },
            Chart::Plain { a: r4 / 2.0, b: 0.75 * r4 },
            Chart::Plain { a: 0.75 * r4, b: r4 },
        ]);
        c
    }
    fn jet(&self, r: &Radius) -> Jet {
        let mut j = prototype_jet(self.c1, self.c2, r, 1.0);
        if let Radius::Plain(x) = *r {
            let (h, hp) = self.h(r);
            let w = -x.ln();
            let lw = w.ln();
            j.u = -self.c2 * h * lw;
            j.up = Ext::plain(self.c2 * h / (x * w) - self.c2 * hp * lw);
        }
        j
    }
    fn f_dev(&self, r: f64) -> f64 {
        -self.c1 * r / (-r.ln())
    }
}

/// Margins of the four conditions on `r5` (each holds when nonnegative):
/// `r5 <= r4/100`, `v3(2 r5) <= log δ - 1`,
/// `c1/(r5^2 w5^{1+2c2}) >= 100 max{|k|,1}` and `f3(r5)/f3'(r5) <= 2 r5`.
pub fn r5_conditions(c1: f64, c2: f64, r4: f64, delta: f64, k: f64, r: &Radius) -> [f64; 4] {
    let core = CorePiece { c1, c2, r4, r5: *r };
    let two = match *r {
        Radius::Plain(x) => Radius::Plain(2.0 * x),
        Radius::Deep { ell, x } => Radius::Deep { ell, x: 2.0 * x },
    };
    let lw = r.ln_w();
    let w = lw.exp();
    [
        (r4 / 100.0).ln() - r.ln_r(),
        delta.ln() - 1.0 - core.v3(&two),
        c1.ln() - 2.0 * r.ln_r() - (1.0 + 2.0 * c2) * lw - (100.0 * k.abs().max(1.0)).ln(),
        1.0 - (c1 / w + 2.0 * c1 / (w * w)),
    ]
}

/// The radius `exp(-exp(ell))`, deep once it leaves the float range.
fn radius_at(ell: f64) -> Radius {
    let w = ell.exp();
    if w < 600.0 {
        Radius::Plain((-w).exp())
    } else {
        Radius::Deep { ell, x: 1.0 }
    }
}

/// Result of the `r5` search.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct R5Choice {
    pub r5: Radius,
    pub ell5: f64,
    pub steps: usize,
    pub margins: [f64; 4],
}

/// Double `ell = log log(1/r)` from `r4/100` until all four conditions
/// hold, then bisect back to the smallest passing `ell`.
pub fn choose_r5(c1: f64, c2: f64, r4: f64, delta: f64, k: f64) -> Result<R5Choice> {
    let pass = |ell: f64| r5_conditions(c1, c2, r4, delta, k, &radius_at(ell)).iter().all(|m| *m >= 0.0);
    let mut lo = ell_of(r4 / 100.0);
    let mut hi = lo;
    let mut steps = 0;
    while !pass(hi) {
        steps += 1;
        if steps > MAX_DOUBLINGS || !hi.is_finite() {
            return Err(Error::exhausted("r5", MAX_DOUBLINGS));
        }
        lo = hi;
        hi *= 2.0;
    }
    if steps > 0 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if pass(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    let r5 = radius_at(hi);
    Ok(R5Choice { r5, ell5: hi, steps, margins: r5_conditions(c1, c2, r4, delta, k, &r5) })
}

/// `A = (1 - f'^2)/f^2` and `r6 = arctn_A(f/f')` for the cap matching `f`
/// and `f'` at its rim; `deficit = 1 - f'` is passed without cancellation.
pub fn solve_matching_34_deficit(f: Ext, deficit: Ext) -> Result<(Ext, Ext)> {
    let one = Ext::real(1.0, f.sc);
    if !(deficit.signum() > 0.0 && deficit.cmp_ext(&one) == std::cmp::Ordering::Less) {
        return Err(Error::construction("matching_34", "needs 0 < f' < 1 at the rim"));
    }
    let a = deficit * (Ext::real(2.0, f.sc) - deficit) / (f * f);
    if !(a.signum() > 0.0) {
        return Err(Error::construction("matching_34", "A <= 0; c1 too small"));
    }
    let t = f / (one - deficit);
    let y = (a * t * t).to_f64();
    Ok((a, t * atanc_k(y)))
}

/// [`solve_matching_34_deficit`] from `f` and `f'`.
pub fn solve_matching_34(f: Ext, fp: Ext) -> Result<(Ext, Ext)> {
    solve_matching_34_deficit(f, Ext::real(1.0, fp.sc) - fp)
}

/// The cap `f = sn_A(r)`, `u = u0`.
#[derive(Clone, Debug)]
pub struct CapSegment {
    pub a_cap: Ext,
    pub u0: f64,
    pub lo: Radius,
    pub hi: Radius,
}

impl Segment for CapSegment {
    fn name(&self) -> String {
        "cap".into()
    }
    fn lo(&self) -> Radius {
        self.lo
    }
    fn hi(&self) -> Radius {
        self.hi
    }
    fn charts(&self) -> Vec<Chart> {
        match self.hi {
            Radius::Deep { ell, x } => vec![Chart::Anchored { ell, xa: 0.0, xb: x }],
            Radius::Plain(b) => vec![Chart::Plain { a: 0.0, b }],
        }
    }
    fn jet(&self, r: &Radius) -> Jet {
        let sc = r.scale();
        let a = self.a_cap.transfer(sc);
        let rr = r.r();
        let y = (a * rr * rr).to_f64();
        let f = rr * sinc_k(y);
        Jet { f, fp: Ext::real(cos_k(y), sc), fpp: -(a * f), u: self.u0, up: Ext::zero(sc) }
    }
}

/// A segment read through the shift `x -> x - dx` on the deep anchor `ell`;
/// ordinary radii and other anchors are unchanged since the shift is below
/// their resolution.
#[derive(Clone, Debug)]
pub struct Translated {
    pub label: String,
    pub inner: Arc<dyn Segment>,
    pub ell: f64,
    pub dx: f64,
    pub lo: Radius,
    pub hi: Radius,
    pub charts: Vec<Chart>,
}

impl Translated {
    fn to_inner(&self, r: &Radius) -> Radius {
        match *r {
            Radius::Deep { ell, x } if ell == self.ell => Radius::Deep { ell, x: x - self.dx },
            other => other,
        }
    }
}

impl Segment for Translated {
    fn name(&self) -> String {
        self.label.clone()
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
        self.inner.jet(&self.to_inner(r))
    }
    fn f_dev(&self, r: f64) -> f64 {
        self.inner.f_dev(r)
    }
    fn f_affine(&self) -> (f64, f64) {
        self.inner.f_affine()
    }
}

/// Resolved constants of the gluing construction.
#[derive(Clone, Debug, Serialize)]
pub struct GlueParams {
    pub k: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub r0: f64,
    /// `ε` and `r0` after shrinking, see [`internal_inputs`].
    pub epsilon_internal: f64,
    pub r0_internal: f64,
    /// Curvature level the junctions are smoothed at, `k - ε_internal`.
    pub lambda: f64,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub r4: f64,
    pub r5: Radius,
    pub r6: Radius,
    pub w4: f64,
    pub ell5: f64,
    pub alpha: f64,
    pub alpha_defect: f64,
    pub c1: f64,
    pub c2: f64,
    pub h_bound: f64,
    /// `ln A`; `A` itself overflows.
    pub ln_a_cap: f64,
    /// `u` on the cap, `u3(r5)`.
    pub u4: f64,
    /// Smoothing half-width at the outer junction; `mu23` at the middle one.
    pub mu: f64,
    pub mu23: f64,
    /// Half-width at the cap junction in units of `r5`.
    pub mu34_anchor: f64,
    /// Shifts placing the outer pieces: the model is `sn_k(rho - shift1)`,
    /// the cone `α sn_{k-ε}(rho - shift2)`.
    pub shift1: f64,
    pub shift2: f64,
    pub matching12: Matching12,
    pub matching23: Matching23,
    pub matching34_res: [f64; 2],
    pub r5_choice: R5Choice,
    pub smooth_u: SmoothUReport,
    pub junctions: Vec<SmoothFReport>,
    pub checks: Vec<ParamCheck>,
}

/// Smallest `value / level` over a segment's grid, in logs (`+inf` when
/// every point is far above).
fn ln_min_ratio(seg: &dyn Segment, level: f64, n: usize) -> f64 {
    let mut m = f64::INFINITY;
    for c in seg.charts() {
        for r in c.points(n) {
            let v = seg.jet(&r).scalar_curvature();
            let l = if v.signum() > 0.0 { v.ln_abs() - level.ln() } else { f64::NEG_INFINITY };
            m = m.min(l);
        }
    }
    m
}

pub fn build_drawstring_a(spec: &DrawstringSpec) -> Result<(RadialProfile, GlueParams)> {
    spec.validate()?;
    let (k, delta) = (spec.k, spec.delta);
    let big = k.abs().max(1.0);
    let (eps, r0) = internal_inputs(k, spec.epsilon, spec.r0);
    let kk = k - eps;
    let r1 = choose_r1(k, eps, r0, spec.r1_max.unwrap_or(f64::INFINITY)).map_err(|e| e.in_stage("gluing"))?;
    let mut checks = r1_checks(k, eps, r0, r1);
    checks.push(ParamCheck::le("r1 <= r0", r1, spec.r0));
    checks.push(ParamCheck::le("internal eps <= eps/2", eps, 0.5 * spec.epsilon));

    let m12 = solve_matching_12(k, eps, r1).map_err(|e| e.in_stage("gluing"))?;
    checks.push(ParamCheck::le("matching 12: f residual <= 1e-12", m12.res_f, 1e-12));
    checks.push(ParamCheck::le("matching 12: f' residual <= 1e-12", m12.res_fp, 1e-12));
    checks.push(ParamCheck::new("alpha > 1/2", m12.alpha - 0.5));
    checks.push(ParamCheck::new("r1/2 <= r2 <= 2 r1", (m12.r2 - 0.5 * r1).min(2.0 * r1 - m12.r2) / r1));

    let m23 = solve_c1_quadratic(k, eps, r1, &m12).map_err(|e| e.in_stage("gluing"))?;
    let (c1, r3, r4, w4) = (m23.c1, m23.r3, m23.r4, m23.w4);
    checks.push(ParamCheck::new("b^2 - a d > 0", (m23.b * m23.b - m23.a * m23.d) / (m23.b * m23.b)));
    checks.push(ParamCheck::le("w4 eps r1^2 / 32 <= c1", w4 * r4 / 32.0, c1));
    checks.push(ParamCheck::le("c1 <= sqrt(8 r4) w4", c1, (8.0 * r4).sqrt() * w4));
    checks.push(ParamCheck::le("r3 <= 4 eps r1^2", r3, 4.0 * r4));
    checks.push(ParamCheck::le("r3 < r2", r3, m12.r2));
    checks.push(ParamCheck::le("matching 23: f residual <= 1e-10", m23.res_f, 1e-10));
    checks.push(ParamCheck::le("matching 23: f' residual <= 1e-10", m23.res_fp, 1e-10));

    let c2 = choose_c2(k, eps, r1, c1);
    let hb = h_bound();
    checks.push(ParamCheck::le("c2 <= min{sqrt(c1/2), 1/100}", c2, (c1 / 2.0).sqrt().min(0.01)));
    checks.push(ParamCheck::new(
        "c2^2 256/(eps^2 r1^4) (log log(2/(eps r1^2)))^2 <= max{|k|,1}",
        big.ln() - ln_c2_term(c2, eps, r1, 256.0),
    ));
    checks.push(ParamCheck::new(
        "c2^2 4H^2/(eps^2 r1^4) (log log(2/(eps r1^2)))^2 <= max{|k|,1}, H = measured sup|h'|",
        big.ln() - ln_c2_term(c2, eps, r1, 4.0 * hb * hb),
    ));

    let r5c = choose_r5(c1, c2, r4, delta, k).map_err(|e| e.in_stage("gluing"))?;
    let r5 = r5c.r5;
    for (name, m) in ["r5 <= r4/100", "v3(2 r5) <= log delta - 1", "c1/(r5^2 w5^{1+2c2}) >= 100 max{|k|,1}", "f3(r5)/f3'(r5) <= 2 r5"]
        .iter()
        .zip(r5c.margins)
    {
        checks.push(ParamCheck::new(*name, m));
    }
    let Radius::Deep { ell: ell5, .. } = r5 else {
        return Err(Error::construction("gluing", "r5 is not deep; inputs outside the supported range"));
    };
    let core = CorePiece { c1, c2, r4, r5 };
    checks.push(ParamCheck::new("R(g3') >= 99 max{|k|,1} on the grid", ln_min_ratio(&core, 99.0 * big, GRID)));
    let (core3, urep) =
        smooth_u_with(Arc::new(core.clone()), 49.0 * big, 1.0, Some(U_FLATTEN_BOUND)).map_err(|e| e.in_stage("gluing"))?;
    checks.push(ParamCheck::new("R(g3) >= 90 max{|k|,1} on the grid", ln_min_ratio(&core3, 90.0 * big, GRID)));
    let core3: Arc<dyn Segment> = Arc::new(core3);
    let j5 = core3.jet(&r5);
    let u4 = j5.u;
    checks.push(ParamCheck::le("u3(r5) <= log delta", u4, delta.ln()));

    // cap
    let inv_w = r5.w().recip();
    let deficit = inv_w * c1 + inv_w * inv_w * c1;
    let (a_cap, r6e) = solve_matching_34_deficit(j5.f, deficit).map_err(|e| e.in_stage("gluing"))?;
    let x6 = (r6e / r5.r()).to_f64();
    let r6 = Radius::Deep { ell: ell5, x: x6 };
    let a_floor = r5.inv_r() * r5.inv_r() * inv_w * c1;
    checks.push(ParamCheck::new("A >= c1/(r5^2 log(1/r5))", ln_quot_ext(a_cap, a_floor)));
    checks.push(ParamCheck::le("r6 <= 2 r5", x6, 2.0));
    // residuals at the rim: sn_A(r6) against f3(r5), 1 - cn_A(r6) against 1 - f3'(r5)
    let y6 = a_cap * r6e * r6e;
    let s = sinc_k(y6.to_f64() / 4.0);
    let cap_deficit = y6 * (0.5 * s * s);
    let res34 = [ln_quot_ext(r6e * sinc_k(y6.to_f64()), j5.f).abs(), ln_quot_ext(cap_deficit, deficit).abs()];
    checks.push(ParamCheck::le("matching 34: f residual <= 1e-10", res34[0], 1e-10));
    checks.push(ParamCheck::le("matching 34: f' residual <= 1e-10", res34[1], 1e-10));
    let r4_curv = a_cap * (2.0 * (2.0 * u4).exp());
    checks.push(ParamCheck::new("R(g4) = 2 e^{2u4} A >= 100 max{|k|,1}", r4_curv.ln_abs() - (100.0 * big).ln()));

    // layout in the profile coordinate rho
    let shift2 = -r4 * m23.delta3;
    let shift1 = r1 * m12.delta2 + shift2;
    let rho23 = r4;
    let rho12 = r1 + shift1;
    let rho_max = 2.0 * r1 + shift1;
    let mu12 = WINDOW * eps.min(r1).min(m12.r2 - r3);
    let mu23 = WINDOW * eps.min(m12.r2 - r3).min(r4);
    let mu34 = WINDOW * x6;
    let dx = x6 - 1.0;
    let deep = |x: f64| Radius::Deep { ell: ell5, x };
    let big_w = ell5.exp();
    let ell_top = (ell5 + (-700.0 / big_w).ln_1p()).min(ell5 * (1.0 - 4e-16));

    let cap: Arc<dyn Segment> = Arc::new(CapSegment { a_cap, u0: u4, lo: deep(0.0), hi: deep(x6 - mu34) });
    let p3_deep: Arc<dyn Segment> = Arc::new(Translated {
        label: "core (deep)".into(),
        inner: core3.clone(),
        ell: ell5,
        dx,
        lo: deep(x6 + mu34),
        hi: Radius::Plain(PLAIN_FLOOR),
        charts: vec![
            Chart::Anchored { ell: ell5, xa: x6 + mu34, xb: 2.0 + dx },
            Chart::Anchored { ell: ell5, xa: 2.0 + dx, xb: 1e300 },
            Chart::Log { ell_a: ell_of(PLAIN_FLOOR), ell_b: ell_top },
        ],
    });
    let p3: Arc<dyn Segment> = Arc::new(Translated {
        label: "core".into(),
        inner: core3.clone(),
        ell: ell5,
        dx,
        lo: Radius::Plain(PLAIN_FLOOR),
        hi: Radius::Plain(rho23 - mu23),
        charts: vec![
            Chart::Plain { a: PLAIN_FLOOR, b: r4 / 4.0 },
            Chart::Plain { a: r4 / 4.0, b: r4 / 2.0 },
            Chart::Plain { a: r4 / 2.0, b: 0.75 * r4 },
            Chart::Plain { a: 0.75 * r4, b: rho23 - mu23 },
        ],
    });
    let cone: Arc<dyn Segment> = Arc::new(ProductSegment {
        label: "cone".into(),
        alpha: m12.alpha,
        defect: m12.defect,
        k: kk,
        u0: 0.0,
        offset: shift2,
        a: rho23 + mu23,
        b: rho12 - mu12,
    });
    let model: Arc<dyn Segment> = Arc::new(ProductSegment {
        label: "model".into(),
        alpha: 1.0,
        defect: 0.0,
        k,
        u0: 0.0,
        offset: shift1,
        a: rho12 + mu12,
        b: rho_max,
    });
    let cone_dev = {
        let mut m = 0.0f64;
        for c in cone.charts() {
            for r in c.points(GRID) {
                m = m.max((cone.jet(&r).scalar_curvature().to_f64() - 2.0 * kk).abs());
            }
        }
        m
    };
    checks.push(ParamCheck::le("R(g2) = 2(k - eps) on the grid", cone_dev, 1e-12 * (1.0 + kk.abs())));

    let lam = kk;
    let tol = SmoothFTol { c0: 1.0, c1: 1e-3 * eps, curvature: 1e-3 * eps };
    let (j34, r34) = smooth_f_with("cap junction", cap.clone(), p3_deep.clone(), r6, lam, mu34, tol).map_err(|e| e.in_stage("gluing"))?;
    let (j23, r23) =
        smooth_f_with("core junction", p3.clone(), cone.clone(), Radius::Plain(rho23), lam, mu23, tol).map_err(|e| e.in_stage("gluing"))?;
    let (j12, r12) =
        smooth_f_with("model junction", cone.clone(), model.clone(), Radius::Plain(rho12), lam, mu12, tol).map_err(|e| e.in_stage("gluing"))?;
    for (name, r) in [("cap junction", &r34), ("core junction", &r23), ("model junction", &r12)] {
        checks.push(ParamCheck::new(format!("{name}: smoothing conclusions on the grid"), if r.holds() { 0.0 } else { -1.0 }));
    }
    checks.push(ParamCheck::le("mu <= 1e-3 min{eps, r1, r2 - r3}", mu12, WINDOW * eps.min(r1).min(m12.r2 - r3)));
    for name in ["smooth_u item 1", "smooth_u item 2", "smooth_u item 3"] {
        let ok = match name {
            "smooth_u item 1" => urep.item1,
            "smooth_u item 2" => urep.item2,
            _ => urep.item3,
        };
        checks.push(ParamCheck::new(name, if ok { 0.0 } else { -1.0 }));
    }

    let segments: Vec<Arc<dyn Segment>> = vec![cap, Arc::new(j34), p3_deep, p3, Arc::new(j23), cone, Arc::new(j12), model];
    let mut profile = RadialProfile::new(segments).map_err(|e| e.in_stage("gluing"))?;
    profile.ref_map = RefMap { shift: -shift1, blend: (0.5 * r1, r1) };
    let params = GlueParams {
        k,
        epsilon: spec.epsilon,
        delta,
        r0: spec.r0,
        epsilon_internal: eps,
        r0_internal: r0,
        lambda: lam,
        r1,
        r2: m12.r2,
        r3,
        r4,
        r5,
        r6,
        w4,
        ell5,
        alpha: m12.alpha,
        alpha_defect: m12.defect,
        c1,
        c2,
        h_bound: hb,
        ln_a_cap: a_cap.ln_abs(),
        u4,
        mu: mu12,
        mu23,
        mu34_anchor: mu34,
        shift1,
        shift2,
        matching12: m12,
        matching23: m23,
        matching34_res: res34,
        r5_choice: r5c,
        smooth_u: urep,
        junctions: vec![r34, r23, r12],
        checks,
    };
    Ok((profile, params))
}

/// `ln(a/b)` for positive extended values.
fn ln_quot_ext(a: Ext, b: Ext) -> f64 {
    if a.sc == b.sc {
        (a / b).ln_abs()
    } else {
        a.ln_abs() - b.ln_abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certifier::certify;
    use crate::drawstring::{Method, SolvedParams};
    use crate::space_forms::arctn;
    use approx::assert_relative_eq;

    #[test]
    fn matching_12_against_direct_formulas() {
        let m = solve_matching_12(1.0, 0.01, 0.05).unwrap();
        let r2 = arctn(0.99, tn(1.0, 0.05).unwrap()).unwrap();
        assert_relative_eq!(m.r2, r2, max_relative = 1e-14);
        assert_relative_eq!(m.alpha, (1.0 - 0.01 * sn(1.0, 0.05).powi(2)).sqrt(), max_relative = 1e-15);
        assert_relative_eq!(m.alpha * sn(0.99, m.r2), sn(1.0, 0.05), max_relative = 1e-14);
        assert!(m.res_f <= 1e-12 && m.res_fp <= 1e-12);
        // no curvature drop
        let m0 = solve_matching_12(0.5, 0.0, 0.05).unwrap();
        assert_relative_eq!(m0.r2, 0.05, max_relative = 1e-15);
        assert_eq!(m0.alpha, 1.0);
    }

    #[test]
    fn c1_root_oracle() {
        let (w, r4) = (4.6f64, 0.01f64);
        let c = c1_root(1.0 / (w * w), 1.0 / w, r4 / 8.0).unwrap();
        assert_relative_eq!(c, w * (1.0 - (1.0 - r4 / 8.0).sqrt()), max_relative = 1e-13);
        assert_relative_eq!(c, w * r4 / 16.0, max_relative = 1e-3);
        assert!(c1_root(1.0, 0.1, 1e-30).unwrap() < 1e-28);
        assert!(c1_root(1.0, 0.1, 1.0).is_err());
    }

    #[test]
    fn matching_34_unit_sphere() {
        let th = 0.7f64;
        let (a, r6) = solve_matching_34(Ext::plain(th.sin()), Ext::plain(th.cos())).unwrap();
        assert_relative_eq!(a.to_f64(), 1.0, max_relative = 1e-14);
        assert_relative_eq!(r6.to_f64(), th, max_relative = 1e-14);
        assert!(solve_matching_34(Ext::plain(0.5), Ext::plain(1.0)).is_err());
    }

    fn spec(k: f64) -> DrawstringSpec {
        DrawstringSpec::new(k, 0.1, 0.1, 1e-3, Method::A)
    }

    #[test]
    fn piece_constants_satisfy_their_bounds() {
        let (p, g) = build_drawstring_a(&spec(0.0)).unwrap();
        for c in &g.checks {
            assert!(c.holds, "{c:?}");
        }
        assert!(g.alpha > 0.5);
        assert!(g.r3 < g.r2 && g.r2 <= 2.0 * g.r1);
        assert!(g.u4 <= 0.1f64.ln());
        assert!(g.ln_a_cap.is_infinite() || g.ln_a_cap > 0.0);
        assert_eq!(p.segments.len(), 8);
    }

    #[test]
    fn profile_is_certified() {
        for k in [0.0, 1.0, -1.0] {
            let s = spec(k);
            let (p, g) = build_drawstring_a(&s).unwrap();
            let rep = certify(&p, &s, Some(&SolvedParams::A(g)));
            assert!(rep.all_pass, "k = {k}: {:?}", rep.failures());
            assert!(rep.fd_pass, "k = {k}: {:?}", rep.fd);
        }
    }
}

//! The two smoothing steps of the gluing construction.
//!
//! [`smooth_u`] makes the potential constant near the inner end of a segment
//! by damping `u'` with a high power of a step function. [`smooth_f`]
//! mollifies a `C^{1,1}` junction of `f` on a small window and blends back to
//! the unsmoothed profile with a cutoff.
//!
//! Windows are measured in units of the anchor of their base point, so the
//! same code runs on ordinary radii and on radii `x exp(-exp(ell))`.

use crate::error::{Error, Result};
use crate::ext::{Ext, Radius};
use crate::quadrature::{adaptive, gauss_legendre, QuadTol};
use crate::radial_metric::{Chart, Jet, Segment};
use crate::space_forms::{eta_d, hermite, smooth_step, Deriv, TABLE_N};
use serde::Serialize;
use std::sync::{Arc, OnceLock};

const GRID: usize = 200;
const MAX_DOUBLINGS: usize = 200;
const MAX_BACKTRACK: usize = 40;
const WINDOW_SAMPLES: usize = 129;
/// Points on which the smoothing conclusions are certified.
pub const CHECK_POINTS: usize = 10_000;
const EDGE_SNAP: f64 = 1e-12;

/// `(x_r - x_s) / mu` in units of the anchor of `s`.
pub fn window_coord(s: &Radius, mu: f64, r: &Radius) -> f64 {
    match (*s, *r) {
        (Radius::Plain(a), Radius::Plain(b)) => (b - a) / mu,
        (Radius::Deep { ell: e1, x: x1 }, Radius::Deep { ell: e2, x: x2 }) if e1 == e2 => (x2 - x1) / mu,
        _ => anchor_x(s) * r.ln_ratio(s).exp_m1() / mu,
    }
}

/// The radius at window coordinate `y`.
pub fn window_point(s: &Radius, mu: f64, y: f64) -> Radius {
    match *s {
        Radius::Plain(a) => Radius::Plain(a + mu * y),
        Radius::Deep { ell, x } => Radius::Deep { ell, x: x + mu * y },
    }
}

/// `mu` anchor units as an absolute length.
pub fn window_length(s: &Radius, mu: f64) -> Ext {
    match *s {
        Radius::Plain(_) => Ext::plain(mu),
        Radius::Deep { .. } => Ext::new(mu, -1, 0, 0.0, s.scale()),
    }
}

fn anchor_x(s: &Radius) -> f64 {
    match *s {
        Radius::Plain(a) => a,
        Radius::Deep { x, .. } => x,
    }
}

/// Charts covering `[s + mu a, s + mu b]`.
fn window_chart(s: &Radius, mu: f64, a: f64, b: f64) -> Chart {
    match *s {
        Radius::Plain(x) => Chart::Plain { a: x + mu * a, b: x + mu * b },
        Radius::Deep { ell, x } => Chart::Anchored { ell, xa: x + mu * a, xb: x + mu * b },
    }
}

/// `ln(a) - ln(b)` for positive extended values, exact on a shared scale.
fn ln_quot(a: Ext, b: Ext) -> f64 {
    if a.sc == b.sc {
        (a / b).ln_abs()
    } else {
        a.ln_abs() - b.ln_abs()
    }
}

/// Fraction of `lambda` reached: `curv / lambda` for positive `lambda`, and
/// the signed excess `curv - lambda` otherwise.
fn attainment(curv: Ext, lambda: f64) -> f64 {
    if lambda > 0.0 && curv.signum() > 0.0 {
        ln_quot(curv, Ext::real(lambda, curv.sc)).exp().min(f64::MAX)
    } else if lambda > 0.0 {
        curv.to_f64() / lambda
    } else {
        curv.margin_over(lambda)
    }
}

fn damp_step(y: f64) -> f64 {
    smooth_step(2.0 * y - 1.0)
}

fn damp_power(y: f64, q: f64) -> f64 {
    let e = damp_step(y);
    if e <= 0.0 {
        0.0
    } else {
        e.powf(q)
    }
}

/// `int_{1/2}^1 eta^q` for the damping step.
fn damp_mass(q: f64) -> f64 {
    let tol = QuadTol { abs: 1e-300, rel: 1e-10, max_depth: 60 };
    adaptive(|y| damp_power(y, q), 0.5, 1.0, tol).map_or_else(|_| crate::quadrature::gl_integrate(|y| damp_power(y, q), 0.5, 1.0, 256), |v| v.0)
}

/// `u` flattened near the inner end of a segment.
///
/// On the window `y = (r - s)/mu` in `[0, 1)` the potential is
/// `v(s + mu) - scale · D(y)` with `D(y) = int_y^1 eta^q G` and
/// `G = mu v' / scale`, so `u' = eta^q v'`. Elsewhere the inner segment is
/// returned unchanged.
#[derive(Clone, Debug)]
pub struct SmoothedU {
    pub inner: Arc<dyn Segment>,
    pub s: Radius,
    /// Window width in anchor units.
    pub mu: f64,
    pub q: f64,
    /// `v(s + mu)`.
    pub v_end: f64,
    pub scale: Ext,
    /// `D` and `dD/dt` at the nodes of `t = 2y - 1`.
    table: Arc<(Vec<f64>, Vec<f64>)>,
}

impl SmoothedU {
    fn new(inner: Arc<dyn Segment>, s: Radius, mu: f64, q: f64) -> Self {
        let mu_abs = window_length(&s, mu);
        let vp = |y: f64| inner.jet(&window_point(&s, mu, y)).up * mu_abs;
        let mut scale = Ext::zero(s.scale());
        for i in 0..WINDOW_SAMPLES {
            let y = 0.5 + 0.5 * i as f64 / (WINDOW_SAMPLES - 1) as f64;
            scale = scale.max(vp(y).abs());
        }
        let v_end = inner.jet(&window_point(&s, mu, 1.0)).u;
        let mut vals = vec![0.0; TABLE_N + 1];
        let mut ders = vec![0.0; TABLE_N + 1];
        if !scale.is_zero() {
            let g = |y: f64| (vp(y) / scale).to_f64();
            let (gx, gw) = gauss_legendre(16);
            let h = 1.0 / TABLE_N as f64;
            // D'(t) = -eta^q G / 2 with y = (1 + t)/2
            let dt = |t: f64| {
                let y = 0.5 * (1.0 + t);
                -0.5 * damp_power(y, q) * g(y)
            };
            ders[TABLE_N] = dt(1.0);
            for i in (0..TABLE_N).rev() {
                let a = i as f64 * h;
                let cell: f64 = gx.iter().zip(&gw).map(|(x, w)| w * dt(a + 0.5 * h * (x + 1.0))).sum::<f64>() * 0.5 * h;
                vals[i] = vals[i + 1] - cell;
                ders[i] = dt(a);
            }
        }
        SmoothedU { inner, s, mu, q, v_end, scale, table: Arc::new((vals, ders)) }
    }

    /// `D(y)`, constant below `y = 1/2`.
    pub fn damped(&self, y: f64) -> f64 {
        let t = (2.0 * y - 1.0).clamp(0.0, 1.0);
        let h = 1.0 / TABLE_N as f64;
        let (vals, ders) = &*self.table;
        if t <= EDGE_SNAP {
            return vals[0];
        }
        hermite(t, vals, |x| ders[((x / h).round() as usize).min(TABLE_N)])
    }
}

impl Segment for SmoothedU {
    fn name(&self) -> String {
        self.inner.name()
    }
    fn lo(&self) -> Radius {
        self.inner.lo()
    }
    fn hi(&self) -> Radius {
        self.inner.hi()
    }
    fn charts(&self) -> Vec<Chart> {
        self.inner.charts()
    }
    fn jet(&self, r: &Radius) -> Jet {
        let mut j = self.inner.jet(r);
        let y = window_coord(&self.s, self.mu, r);
        // snap round-off at the window ends so both identities hold exactly
        if y < 1.0 - EDGE_SNAP {
            let y = y.max(0.0);
            j.up = j.up * damp_power(y, self.q);
            j.u = self.v_end - (self.scale * self.damped(y)).to_f64();
        }
        j
    }
    fn f_dev(&self, r: f64) -> f64 {
        self.inner.f_dev(r)
    }
    fn f_affine(&self) -> (f64, f64) {
        self.inner.f_affine()
    }
}

/// What [`smooth_u`] certified.
#[derive(Clone, Debug, Serialize)]
pub struct SmoothUReport {
    pub lambda: f64,
    pub mu: f64,
    pub q: f64,
    pub doublings: usize,
    /// `ln` of the absolute window width.
    pub ln_mu_abs: f64,
    /// `ln` of the bound imposed on `|u - v(s + mu)|` over the window.
    pub ln_beta: f64,
    /// `ln (mu sup |v'|)` over the check grid, `mu` absolute.
    pub ln_mu_sup_vp: f64,
    /// `ln sup |u - v(s + mu)|` over the window.
    pub ln_dev: f64,
    /// Smallest `curv / lambda` of the input.
    pub hypothesis_min: f64,
    /// Smallest `curv / (lambda (1 - sqrt mu))` of the output.
    pub result_min: f64,
    pub item1: bool,
    pub item2: bool,
    pub item3: bool,
    pub grid_points: usize,
}

impl SmoothUReport {
    pub fn holds(&self) -> bool {
        self.item1 && self.item2 && self.item3
    }
}

/// Standard form: the deviation bound is the window width itself.
pub fn smooth_u(seg: Arc<dyn Segment>, lambda: f64, mu: f64) -> Result<(SmoothedU, SmoothUReport)> {
    smooth_u_with(seg, lambda, mu, None)
}

/// [`smooth_u`] with the deviation bound `beta` in place of the absolute
/// window width, for windows far below the float floor where `|v'| mu`
/// is not small against `mu`.
pub fn smooth_u_with(seg: Arc<dyn Segment>, lambda: f64, mu: f64, beta: Option<f64>) -> Result<(SmoothedU, SmoothUReport)> {
    let (s, t) = (seg.lo(), seg.hi());
    if !(lambda >= 1.0) {
        return Err(Error::domain("lambda", format!("needs lambda >= 1, got {lambda}")));
    }
    let mu_abs = window_length(&s, mu);
    if !(mu > 0.0) || window_coord(&s, mu, &t) < 4.0 || mu_abs.ln_abs() > 0.0 {
        return Err(Error::domain("mu", format!("needs 0 < mu <= min{{(t - s)/4, 1}}, got {mu}")));
    }
    let ln_beta = beta.map_or(mu_abs.ln_abs(), f64::ln);

    let charts = seg.charts();
    let per = (CHECK_POINTS / 2).div_ceil(charts.len());
    let mut pts: Vec<Radius> = charts.iter().flat_map(|c| c.points(per)).collect();
    let n_win = CHECK_POINTS / 2;
    pts.extend((0..n_win).map(|i| window_point(&s, mu, 1.5 * i as f64 / (n_win - 1) as f64)));
    let mut hyp = f64::INFINITY;
    let mut ln_sup = f64::NEG_INFINITY;
    for r in &pts {
        let j = seg.jet(r);
        hyp = hyp.min(attainment(j.curvature_expr(), lambda));
        // ln(mu |v'|); points on another deep scale give NaN and are dropped
        let l = if r.scale() == s.scale() { (j.up * mu_abs).ln_abs() } else { j.up.ln_abs() + mu_abs.ln_abs() };
        if !l.is_nan() {
            ln_sup = ln_sup.max(l);
        }
    }
    if hyp < 1.0 {
        return Err(Error::domain("f", format!("curvature expression reaches only {hyp} lambda on the grid")));
    }
    let ln_mu_sup = ln_sup;

    let target = ln_beta - 4f64.ln();
    let mut q = 1.0;
    let mut doublings = 0;
    while ln_mu_sup + damp_mass(q).ln() > target {
        doublings += 1;
        if doublings > MAX_DOUBLINGS {
            return Err(Error::exhausted("smooth_u", MAX_DOUBLINGS));
        }
        q *= 2.0;
    }
    let out = SmoothedU::new(seg.clone(), s, mu, q);

    // item 1: constant on the first half window, unchanged past it
    let u0 = out.jet(&s).u;
    let mut item1 = (0..33).all(|i| out.jet(&window_point(&s, mu, 0.5 * i as f64 / 32.0)).u == u0);
    item1 &= (0..33).all(|i| {
        let r = window_point(&s, mu, 1.0 + 3.0 * i as f64 / 32.0);
        window_coord(&s, mu, &t) < 1.0 + 3.0 * i as f64 / 32.0 || out.jet(&r).u == seg.jet(&r).u
    });
    // item 2
    let dmax = out.table.0.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let ln_dev = if out.scale.is_zero() { f64::NEG_INFINITY } else { out.scale.ln_abs() + dmax.ln() };
    let item2 = ln_dev <= ln_beta;
    // item 3
    let thr = lambda * (1.0 - mu_abs.to_f64().sqrt());
    let mut res = f64::INFINITY;
    for r in &pts {
        res = res.min(attainment(out.jet(r).curvature_expr(), thr));
    }
    let item3 = res >= 1.0;
    let rep = SmoothUReport {
        lambda,
        mu,
        q,
        doublings,
        ln_mu_abs: mu_abs.ln_abs(),
        ln_beta,
        ln_mu_sup_vp: ln_mu_sup,
        ln_dev,
        hypothesis_min: hyp,
        result_min: res,
        item1,
        item2,
        item3,
        grid_points: pts.len(),
    };
    if !rep.holds() {
        return Err(Error::construction("smooth_u", format!("certification failed: {rep:?}")));
    }
    Ok((out, rep))
}

// ---------------------------------------------------------------------------
// Mollifier
// ---------------------------------------------------------------------------

/// `int_a^1 phi` and `int_a^1 z phi` for the unit bump `phi`.
struct BumpTables {
    norm: f64,
    t1: Vec<f64>,
    m1: Vec<f64>,
}

fn bump_raw(z: f64) -> f64 {
    if z.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - z * z)).exp()
    }
}

fn bump_tables() -> &'static BumpTables {
    static T: OnceLock<BumpTables> = OnceLock::new();
    T.get_or_init(|| {
        let h = 1.0 / TABLE_N as f64;
        let (gx, gw) = gauss_legendre(16);
        let mut t1 = vec![0.0; TABLE_N + 1];
        let mut m1 = vec![0.0; TABLE_N + 1];
        for i in (0..TABLE_N).rev() {
            let a = i as f64 * h;
            let (mut it, mut im) = (0.0, 0.0);
            for (x, w) in gx.iter().zip(&gw) {
                let z = a + 0.5 * h * (x + 1.0);
                let p = bump_raw(z);
                it += w * p;
                im += w * z * p;
            }
            t1[i] = t1[i + 1] + 0.5 * h * it;
            m1[i] = m1[i + 1] + 0.5 * h * im;
        }
        let norm = 2.0 * t1[0];
        t1.iter_mut().for_each(|v| *v /= norm);
        m1.iter_mut().for_each(|v| *v /= norm);
        BumpTables { norm, t1, m1 }
    })
}

/// The unit-mass bump `exp(-1/(1 - z^2))/Z` on `(-1, 1)`.
pub fn bump(z: f64) -> f64 {
    bump_raw(z) / bump_tables().norm
}

/// `int_a^1 phi` for `a >= 0`.
fn tail_mass(a: f64) -> f64 {
    if a >= 1.0 {
        return 0.0;
    }
    hermite(a, &bump_tables().t1, |x| -bump(x))
}

/// `int_a^1 (z - a) phi` for `a >= 0`.
fn tail_moment(a: f64) -> f64 {
    if a >= 1.0 {
        return 0.0;
    }
    let t = bump_tables();
    hermite(a, &t.m1, |x| -x * bump(x)) - a * hermite(a, &t.t1, |x| -bump(x))
}

/// A junction of two segments with `f` mollified on `|r - at| < half`.
///
/// With `s` the window coordinate, `e = width` and `fbar` the unsmoothed
/// profile, `f = fbar + h(s) (fbar * phi_{e half} - fbar)` where `h` is one on
/// `|s| <= 1/2` and zero past one. The correction and its derivatives are
/// written through the second derivative of `fbar` (plus a jump `kink` in
/// `fbar'` at the junction), so nothing cancels:
/// `D0 = e^2 L^2 int g S1(|σ|) + kink e L S1(|s|/e)`,
/// `D1 = -e L int g T1(|σ|) sgn σ - kink T1(|s|/e) sgn s`,
/// `D2 = int phi (g - g(0)) + kink phi(s/e)/(e L)`,
/// where `g(σ) = fbar''(s - e σ)`, `T1(a) = int_a^1 phi` and
/// `S1(a) = int_a^1 (z - a) phi`.
#[derive(Clone, Debug)]
pub struct MollifiedJunction {
    pub label: String,
    pub left: Arc<dyn Segment>,
    pub right: Arc<dyn Segment>,
    pub at: Radius,
    /// Half-width in anchor units.
    pub half: f64,
    /// Mollifier radius as a fraction of `half`.
    pub width: f64,
    /// `fbar'(at+) - fbar'(at-)`.
    pub kink: f64,
    len: Ext,
    norm: Ext,
}

impl MollifiedJunction {
    pub fn new(label: impl Into<String>, left: Arc<dyn Segment>, right: Arc<dyn Segment>, at: Radius, half: f64, width: f64, kink: f64) -> Self {
        let fl = left.jet(&at).fpp.abs();
        let fr = right.jet(&at).fpp.abs();
        let mut norm = fl.max(fr);
        if norm.is_zero() {
            norm = Ext::real(1.0, at.scale());
        }
        MollifiedJunction { label: label.into(), left, right, at, half, width, kink, len: window_length(&at, half), norm }
    }

    fn side(&self, s: f64) -> &Arc<dyn Segment> {
        if s <= 0.0 {
            &self.left
        } else {
            &self.right
        }
    }

    /// `fbar''` at window coordinate `s`, over the normaliser.
    fn g(&self, s: f64) -> f64 {
        let r = window_point(&self.at, self.half, s);
        (self.side(s).jet(&r).fpp / self.norm).to_f64()
    }

    /// `(D0, D1, D2)` at window coordinate `s`.
    pub fn corrections(&self, s: f64) -> (Ext, Ext, Ext) {
        let e = self.width;
        let sig0 = s / e;
        let mut cuts = vec![-1.0, 0.0, 1.0];
        if sig0.abs() < 1.0 && sig0 != 0.0 {
            cuts.push(sig0);
        }
        cuts.sort_by(f64::total_cmp);
        let g0 = self.g(s);
        let (gx, gw) = gauss_legendre(32);
        let (mut i0, mut i1, mut i2) = (0.0, 0.0, 0.0);
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (c, hw) = (0.5 * (a + b), 0.5 * (b - a));
            for (x, wt) in gx.iter().zip(&gw) {
                let sig = c + hw * x;
                let g = self.g(s - e * sig);
                let wt = wt * hw;
                i0 += wt * g * tail_moment(sig.abs());
                i1 -= wt * g * tail_mass(sig.abs()) * sig.signum();
                i2 += wt * bump(sig) * (g - g0);
            }
        }
        let sc = self.at.scale();
        let (l, n) = (self.len, self.norm);
        let mut d0 = n * l * l * (e * e * i0);
        let mut d1 = n * l * (e * i1);
        let mut d2 = n * i2;
        if self.kink != 0.0 {
            let a = sig0.abs();
            d0 = d0 + l * (self.kink * e * tail_moment(a));
            d1 = d1 + Ext::real(-self.kink * tail_mass(a) * s.signum(), sc);
            d2 = d2 + l.recip() * (self.kink * bump(sig0) / e);
        }
        (d0, d1, d2)
    }

    /// `(h D0, h' D0 + h D1)`: the change in `f` and in `f'`.
    pub fn changes(&self, s: f64) -> (Ext, Ext) {
        if s.abs() >= 1.0 {
            let z = Ext::zero(self.at.scale());
            return (z, z);
        }
        let (d0, d1, _) = self.corrections(s);
        let a = s.abs();
        let h = eta_d(a, Deriv::D0);
        let h1 = self.len.recip() * (eta_d(a, Deriv::D1) * s.signum());
        (d0 * h, d0 * h1 + d1 * h)
    }
}

impl Segment for MollifiedJunction {
    fn name(&self) -> String {
        self.label.clone()
    }
    fn lo(&self) -> Radius {
        window_point(&self.at, self.half, -1.0)
    }
    fn hi(&self) -> Radius {
        window_point(&self.at, self.half, 1.0)
    }
    fn charts(&self) -> Vec<Chart> {
        [(-1.0, -0.5), (-0.5, 0.0), (0.0, 0.5), (0.5, 1.0)].iter().map(|&(a, b)| window_chart(&self.at, self.half, a, b)).collect()
    }
    fn jet(&self, r: &Radius) -> Jet {
        let s = window_coord(&self.at, self.half, r);
        let j = self.side(s).jet(r);
        if s.abs() >= 1.0 {
            return j;
        }
        let (d0, d1, d2) = self.corrections(s);
        let a = s.abs();
        let h = eta_d(a, Deriv::D0);
        let il = self.len.recip();
        let h1 = il * (eta_d(a, Deriv::D1) * s.signum());
        let h2 = il * il * eta_d(a, Deriv::D2);
        Jet {
            f: j.f + d0 * h,
            fp: j.fp + d1 * h + d0 * h1,
            fpp: j.fpp + d2 * h + d1 * h1 * 2.0 + d0 * h2,
            u: j.u,
            up: j.up,
        }
    }
    fn f_dev(&self, r: f64) -> f64 {
        let rr = Radius::Plain(r);
        let s = window_coord(&self.at, self.half, &rr);
        let side = self.side(s);
        let (al, bl) = self.left.f_affine();
        let (a, b) = side.f_affine();
        let base = side.f_dev(r) + (a - al) + (b - bl) * r;
        base + self.changes(s).0.to_f64()
    }
    fn f_affine(&self) -> (f64, f64) {
        self.left.f_affine()
    }
    fn fd_split(&self, r: f64) -> Option<(Arc<dyn Segment>, f64, Ext)> {
        let s = window_coord(&self.at, self.half, &Radius::Plain(r));
        Some((self.side(s).clone(), s, self.len))
    }
    fn correction(&self, s: f64) -> Ext {
        self.changes(s).0
    }
}

/// Tolerances of the two conclusions of [`smooth_f`].
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SmoothFTol {
    /// Bound on `|f - fbar|` in units of the absolute window half-width.
    pub c0: f64,
    /// Bound on `|f' - fbar'|`.
    pub c1: f64,
    /// Allowed drop of the curvature expression below `lambda`.
    pub curvature: f64,
}

/// What [`smooth_f`] certified.
#[derive(Clone, Debug, Serialize)]
pub struct SmoothFReport {
    pub lambda: f64,
    pub half: f64,
    pub width: f64,
    pub backtracks: usize,
    pub tol: SmoothFTol,
    /// `|f_L - f_R| / f` and `|f'_L - f'_R|` at the junction.
    pub match_f: f64,
    pub match_fp: f64,
    /// Smallest one-sided `curv - lambda` (relative when `lambda > 0`).
    pub hypothesis_min: f64,
    /// Largest `|f - fbar| / (tol.c0 L)` and `|f' - fbar'| / tol.c1`, `L` the
    /// absolute half-width.
    pub c0_ratio: f64,
    pub c1_ratio: f64,
    /// Smallest `curv - (lambda - tol)` on the grid, saturated.
    pub curvature_margin: f64,
    pub unchanged_outside: bool,
    pub grid_points: usize,
}

impl SmoothFReport {
    pub fn holds(&self) -> bool {
        self.c0_ratio <= 1.0 && self.c1_ratio <= 1.0 && self.curvature_margin >= 0.0 && self.unchanged_outside
    }
}

/// Standard form: window `(-mu, mu)` in anchor units and all tolerances equal
/// to the absolute window half-width.
pub fn smooth_f(left: Arc<dyn Segment>, right: Arc<dyn Segment>, at: Radius, lambda: f64, mu: f64) -> Result<(MollifiedJunction, SmoothFReport)> {
    let m = window_length(&at, mu).to_f64();
    smooth_f_with("junction", left, right, at, lambda, mu, SmoothFTol { c0: 1.0, c1: m, curvature: m })
}

/// Mollify a `C^1` junction, halving the mollifier radius until both
/// conclusions hold on the grid.
pub fn smooth_f_with(
    label: &str,
    left: Arc<dyn Segment>,
    right: Arc<dyn Segment>,
    at: Radius,
    lambda: f64,
    half: f64,
    tol: SmoothFTol,
) -> Result<(MollifiedJunction, SmoothFReport)> {
    if !(half > 0.0) {
        return Err(Error::domain("mu", format!("needs a positive window, got {half}")));
    }
    let (jl, jr) = (left.jet(&at), right.jet(&at));
    let match_f = ln_quot(jl.f, jr.f).abs();
    let match_fp = (jl.fp - jr.fp).abs().to_f64();
    let slack = 1e-12 * lambda.abs().max(1.0);
    let mut hyp = f64::INFINITY;
    for i in 0..=GRID {
        let s = i as f64 / GRID as f64;
        for (seg, y) in [(&left, -s), (&right, s)] {
            let c = seg.jet(&window_point(&at, half, y)).curvature_expr();
            hyp = hyp.min(attainment(c, lambda) - if lambda > 0.0 { 1.0 } else { 0.0 });
        }
    }
    if hyp < -slack {
        return Err(Error::domain("fbar", format!("one-sided curvature below lambda by {hyp}")));
    }
    let mut width = 0.25;
    for backtracks in 0..MAX_BACKTRACK {
        let j = MollifiedJunction::new(label, left.clone(), right.clone(), at, half, width, 0.0);
        let pts: Vec<f64> = (0..=CHECK_POINTS).map(|i| -1.0 + 2.0 * i as f64 / CHECK_POINTS as f64).collect();
        let (mut c0r, mut c1r, mut curv) = (0.0f64, 0.0f64, f64::INFINITY);
        for &s in &pts {
            let (df, dfp) = j.changes(s);
            c0r = c0r.max(ratio_to(df / window_length(&at, half), tol.c0));
            c1r = c1r.max(ratio_to(dfp, tol.c1));
            let c = j.jet(&window_point(&at, half, s)).curvature_expr();
            curv = curv.min(c.margin_over(lambda - tol.curvature));
        }
        let unchanged_outside = [-1.0, 1.0, -1.5, 1.5].iter().all(|&s| {
            let r = window_point(&at, half, s);
            let a = j.jet(&r);
            let b = if s < 0.0 { left.jet(&r) } else { right.jet(&r) };
            (a.f - b.f).is_zero() && (a.fp - b.fp).is_zero()
        });
        let rep = SmoothFReport {
            lambda,
            half,
            width,
            backtracks,
            tol,
            match_f,
            match_fp,
            hypothesis_min: hyp,
            c0_ratio: c0r,
            c1_ratio: c1r,
            curvature_margin: curv,
            unchanged_outside,
            grid_points: pts.len(),
        };
        if rep.holds() {
            return Ok((j, rep));
        }
        width *= 0.5;
    }
    Err(Error::exhausted("smooth_f", MAX_BACKTRACK))
}

/// `|x| / tol` with `x` extended; zero when `x` vanishes.
fn ratio_to(x: Ext, tol: f64) -> f64 {
    if x.is_zero() {
        return 0.0;
    }
    if tol <= 0.0 {
        return f64::INFINITY;
    }
    (x.abs().ln_abs() - tol.ln()).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space_forms::{arctn, cn, sn};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// `f = c0 + c1 x + amp sn_K(x + p)`, `u = ua sin(ub x) + uc` on `[lo, hi]`.
    #[derive(Clone, Debug)]
    struct Piece {
        c0: f64,
        c1: f64,
        amp: f64,
        k: f64,
        p: f64,
        ua: f64,
        ub: f64,
        uc: f64,
        lo: f64,
        hi: f64,
    }

    impl Piece {
        fn sn(amp: f64, k: f64, p: f64, lo: f64, hi: f64) -> Self {
            Piece { c0: 0.0, c1: 0.0, amp, k, p, ua: 0.0, ub: 0.0, uc: 0.0, lo, hi }
        }
        fn f(&self, x: f64) -> f64 {
            self.c0 + self.c1 * x + self.amp * sn(self.k, x + self.p)
        }
    }

    impl Segment for Piece {
        fn name(&self) -> String {
            "piece".into()
        }
        fn lo(&self) -> Radius {
            Radius::Plain(self.lo)
        }
        fn hi(&self) -> Radius {
            Radius::Plain(self.hi)
        }
        fn charts(&self) -> Vec<Chart> {
            vec![Chart::Plain { a: self.lo, b: self.hi }]
        }
        fn jet(&self, r: &Radius) -> Jet {
            let x = r.to_f64();
            let y = x + self.p;
            Jet::plain(
                self.f(x),
                self.c1 + self.amp * cn(self.k, y),
                -self.k * self.amp * sn(self.k, y),
                self.ua * (self.ub * x).sin() + self.uc,
                self.ua * self.ub * (self.ub * x).cos(),
            )
        }
    }

    #[test]
    fn bump_tables_are_consistent() {
        assert_relative_eq!(tail_mass(0.0), 0.5, epsilon = 1e-14);
        // S1(0) = int_0^1 z phi; check against direct quadrature
        let direct = crate::quadrature::gl_integrate(|z| z * bump(z), 0.0, 1.0, 64);
        assert_relative_eq!(tail_moment(0.0), direct, epsilon = 1e-12);
        let a = 0.37;
        let direct = crate::quadrature::gl_integrate(|z| (z - a) * bump(z), a, 1.0, 64);
        assert_relative_eq!(tail_moment(a), direct, epsilon = 1e-12);
        assert_eq!(tail_mass(1.0), 0.0);
    }

    #[test]
    fn constant_potential_is_untouched() {
        let mut p = Piece::sn(1.0, 100.0, 0.0, 0.05, 0.25);
        p.uc = -0.3;
        let seg: Arc<dyn Segment> = Arc::new(p.clone());
        let (out, rep) = smooth_u(seg.clone(), 1.0, 0.01).unwrap();
        assert_eq!(rep.q, 1.0);
        for i in 0..=100 {
            let r = Radius::Plain(0.05 + 0.2 * i as f64 / 100.0);
            assert_eq!(out.jet(&r).u, seg.jet(&r).u);
        }
    }

    #[test]
    fn smooth_u_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..12 {
            let k: f64 = rng.gen_range(60.0..200.0);
            let s: f64 = rng.gen_range(0.02..0.05);
            let t = s + 0.15;
            let ua: f64 = rng.gen_range(0.05..0.5);
            let ub: f64 = rng.gen_range(1.0..10.0);
            let mut p = Piece::sn(1.0, k, 0.0, s, t);
            p.ua = ua;
            p.ub = ub;
            p.uc = rng.gen_range(-0.5..0.5);
            let sup_vp = ua * ub;
            let lam = ((2.0 * (p.uc - ua)).exp() * (k - sup_vp * sup_vp) * 0.99).max(1.0);
            let mu = rng.gen_range(0.1..1.0) * (0.25 * (t - s)).min(1.0 / (16.0 * sup_vp * sup_vp));
            let seg: Arc<dyn Segment> = Arc::new(p.clone());
            let (out, rep) = smooth_u(seg.clone(), lam, mu).unwrap();
            assert!(rep.holds());
            // oracle: u(r) = v(s + mu) + int_{s+mu}^r eta^q v' by adaptive quadrature
            let vp = |x: f64| ua * ub * (ub * x).cos();
            let v_end = seg.jet(&Radius::Plain(s + mu)).u;
            for i in 0..=20 {
                let r = s + mu * i as f64 / 20.0;
                let tol = QuadTol { abs: 1e-14, rel: 1e-12, max_depth: 50 };
                let (integral, _) = adaptive(|x| damp_power((x - s) / mu, rep.q) * vp(x), s + mu, r, tol).unwrap();
                let want = v_end + integral;
                let got = out.jet(&Radius::Plain(r)).u;
                assert!((got - want).abs() <= 1e-10, "{got} vs {want}");
                assert!((got - v_end).abs() <= mu);
            }
        }
    }

    #[test]
    fn smooth_u_rejects_bad_window() {
        let seg: Arc<dyn Segment> = Arc::new(Piece::sn(1.0, 100.0, 0.0, 0.05, 0.25));
        assert!(smooth_u(seg.clone(), 1.0, 0.1).is_err());
        assert!(smooth_u(seg, 0.5, 0.01).is_err());
    }

    /// Convolution `(fbar * phi_delta)(x)` by adaptive quadrature.
    fn convolve(fbar: impl Fn(f64) -> f64, x: f64, delta: f64, at: f64) -> f64 {
        let tol = QuadTol { abs: 1e-15, rel: 1e-13, max_depth: 50 };
        let g = |tau: f64| fbar(x - tau) * bump(tau / delta) / delta;
        let mut cuts = vec![-delta, 0.0, delta];
        let k = x - at;
        if k.abs() < delta && k != 0.0 {
            cuts.push(k);
        }
        cuts.sort_by(f64::total_cmp);
        cuts.windows(2).map(|w| adaptive(&g, w[0], w[1], tol).unwrap().0).sum()
    }

    fn matched_pair(rng: &mut ChaCha8Rng, at: f64) -> (Piece, Piece) {
        let k1: f64 = rng.gen_range(-2.0..4.0);
        let p1: f64 = rng.gen_range(0.1..0.4) - at;
        let left = Piece::sn(1.0, k1, p1, at - 0.3, at);
        let (f, fp) = (left.f(at), cn(k1, at + p1));
        let k2: f64 = rng.gen_range(-2.0..4.0);
        let y = arctn(k2, f / fp).unwrap();
        let amp = f / sn(k2, y);
        let right = Piece::sn(amp, k2, y - at, at, at + 0.3);
        (left, right)
    }

    #[test]
    fn mollifier_matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let at = 0.5;
        for _ in 0..5 {
            let (l, r) = matched_pair(&mut rng, at);
            let (lc, rc) = (l.clone(), r.clone());
            let fbar = move |x: f64| if x <= at { lc.f(x) } else { rc.f(x) };
            let half = 0.05;
            let j = MollifiedJunction::new("j", Arc::new(l), Arc::new(r), Radius::Plain(at), half, 0.25, 0.0);
            for i in 0..=16 {
                let s = -0.5 + i as f64 / 16.0;
                let x = at + half * s;
                let want = convolve(&fbar, x, 0.25 * half, at) - fbar(x);
                let (d0, _, _) = j.corrections(s);
                // the oracle subtracts two O(1) numbers, so compare absolutely
                assert!((d0.to_f64() - want).abs() <= 1e-14, "{} vs {want}", d0.to_f64());
            }
        }
    }

    #[test]
    fn smooth_f_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let at = 0.5;
        for _ in 0..8 {
            let (mut l, mut r) = matched_pair(&mut rng, at);
            for p in [&mut l, &mut r] {
                p.ua = 0.1;
                p.ub = 1.3;
            }
            let (ls, rs): (Arc<dyn Segment>, Arc<dyn Segment>) = (Arc::new(l), Arc::new(r));
            let mut lam = f64::INFINITY;
            for i in 0..=GRID {
                let s = i as f64 / GRID as f64;
                lam = lam.min(ls.jet(&Radius::Plain(at - 0.1 * s)).curvature_expr().to_f64());
                lam = lam.min(rs.jet(&Radius::Plain(at + 0.1 * s)).curvature_expr().to_f64());
            }
            let mu = rng.gen_range(0.005..0.05);
            let (j, rep) = smooth_f(ls.clone(), rs.clone(), Radius::Plain(at), lam, mu).unwrap();
            assert!(rep.holds());
            // f'' of the jet agrees with second differences of f
            let h = 1e-4 * mu;
            for i in 0..=20 {
                let x = at + mu * (-0.9 + 1.8 * i as f64 / 20.0);
                let fx = |x: f64| j.jet(&Radius::Plain(x)).f.to_f64();
                let dd = (fx(x + h) - 2.0 * fx(x) + fx(x - h)) / (h * h);
                let fpp = j.jet(&Radius::Plain(x)).fpp.to_f64();
                assert!((dd - fpp).abs() <= 1e-4 * fpp.abs().max(1.0), "{dd} vs {fpp}");
            }
        }
    }

    #[test]
    fn kink_is_mollified_to_c2() {
        // fbar = |x - 1| + 1
        let mut left = Piece::sn(0.0, 0.0, 0.0, 0.0, 1.0);
        left.c0 = 2.0;
        left.c1 = -1.0;
        let mut right = Piece::sn(0.0, 0.0, 0.0, 1.0, 2.0);
        right.c1 = 1.0;
        let half = 0.2;
        let j = MollifiedJunction::new("kink", Arc::new(left), Arc::new(right), Radius::Plain(1.0), half, 0.25, 2.0);
        let fx = |x: f64| j.jet(&Radius::Plain(x)).f.to_f64();
        // exact convolution on the plateau of the blend
        for i in 0..=10 {
            let x = 1.0 + half * (-0.5 + i as f64 / 10.0);
            let want = convolve(|y| (y - 1.0).abs() + 1.0, x, 0.25 * half, 1.0);
            assert!((fx(x) - want).abs() <= 1e-12, "{} vs {want}", fx(x));
        }
        // second differences converge to the closed-form f'' under refinement
        let mut prev = f64::INFINITY;
        for h in [1e-2, 5e-3, 2.5e-3] {
            let mut worst = 0.0f64;
            for i in 0..=40 {
                let x = 1.0 + half * (-1.2 + 2.4 * i as f64 / 40.0);
                let dd = (fx(x + h) - 2.0 * fx(x) + fx(x - h)) / (h * h);
                worst = worst.max((dd - j.jet(&Radius::Plain(x)).fpp.to_f64()).abs());
            }
            assert!(worst < prev);
            prev = worst;
        }
        let sup = (0..=400).map(|i| j.jet(&Radius::Plain(0.7 + 0.6 * i as f64 / 400.0)).fpp.to_f64().abs()).fold(0.0, f64::max);
        assert!(sup < 2.0 * 2.0 / (0.25 * half) * bump(0.0));
    }

    #[test]
    fn deep_window_coordinates() {
        let s = Radius::Deep { ell: 1e50, x: 1.0 };
        assert_eq!(window_coord(&s, 0.5, &Radius::Deep { ell: 1e50, x: 2.0 }), 2.0);
        assert!(window_coord(&s, 0.5, &Radius::Plain(1e-10)) > 1e100);
        assert_eq!(window_point(&s, 0.5, 2.0), Radius::Deep { ell: 1e50, x: 2.0 });
        assert!(window_length(&s, 1.0).to_f64() == 0.0);
    }
}

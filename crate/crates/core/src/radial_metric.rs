//! Radial profiles `(f, u)` of the warped product
//! `e^{-2u}(dr^2 + f^2 dθ^2) + e^{2u} dt^2` and everything computed from them.
//!
//! A profile is an ordered list of [`Segment`]s. Each segment evaluates a
//! [`Jet`] (`f, f', f'', u, u'`) in closed form at any [`Radius`], including
//! radii far below the float floor, and declares the [`Chart`]s its
//! verification grid lives on.

use crate::error::{Error, Result};
use crate::ext::{Ext, Radius};
use crate::quadrature::{adaptive, QuadTol};
use crate::space_forms::{cn, cot_k, sinc_minus_one, sn, sn_cn_ext};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::fmt::Write as _;
use std::sync::Arc;

/// Values and derivatives of the warping functions at one radius.
#[derive(Clone, Copy, Debug)]
pub struct Jet {
    pub f: Ext,
    pub fp: Ext,
    pub fpp: Ext,
    pub u: f64,
    pub up: Ext,
}

impl Jet {
    /// Plain-valued jet.
    pub fn plain(f: f64, fp: f64, fpp: f64, u: f64, up: f64) -> Self {
        Jet { f: Ext::plain(f), fp: Ext::plain(fp), fpp: Ext::plain(fpp), u, up: Ext::plain(up) }
    }

    /// `e^{2u}(-f''/f - u'^2)`, half the scalar curvature.
    pub fn curvature_expr(&self) -> Ext {
        let inner = -(self.fpp / self.f) - self.up * self.up;
        inner * (2.0 * self.u).exp()
    }

    /// Scalar curvature `2 e^{2u}(-f''/f - u'^2)`.
    pub fn scalar_curvature(&self) -> Ext {
        self.curvature_expr() * 2.0
    }

    /// Mean curvature `e^u f'/f` of the level set, outward normal.
    pub fn mean_curvature(&self) -> Ext {
        (self.fp / self.f) * self.u.exp()
    }
}

/// Coordinates a verification grid is laid out in.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Chart {
    /// Ordinary radii in `[a, b]`; geometric when `b/a > 4`, and `a = 0`
    /// means geometric from `1e-6 b`.
    Plain { a: f64, b: f64 },
    /// Radii `exp(-exp(ell))` between the two values, geometric in `ell`
    /// when the range spans more than a factor four.
    Log { ell_a: f64, ell_b: f64 },
    /// Radii `x exp(-exp(ell))` with `x` geometric in `[xa, xb]`.
    Anchored { ell: f64, xa: f64, xb: f64 },
}

impl Chart {
    /// `n >= 2` points in increasing radius.
    pub fn points(&self, n: usize) -> Vec<Radius> {
        let n = n.max(2);
        let t = |i: usize| i as f64 / (n - 1) as f64;
        match *self {
            Chart::Plain { a, b } => {
                let lo = if a > 0.0 { a } else { b * 1e-6 };
                if b / lo > 4.0 {
                    let (la, lb) = (lo.ln(), b.ln());
                    (0..n).map(|i| Radius::Plain(if i == n - 1 { b } else if i == 0 { lo } else { (la + (lb - la) * t(i)).exp() })).collect()
                } else {
                    (0..n).map(|i| Radius::Plain(if i == n - 1 { b } else { lo + (b - lo) * t(i) })).collect()
                }
            }
            Chart::Log { ell_a, ell_b } => {
                // larger ell is the smaller radius
                let (hi, lo) = (ell_a.max(ell_b), ell_a.min(ell_b));
                if lo > 0.0 && hi / lo > 4.0 {
                    let (lh, ll) = (hi.ln(), lo.ln());
                    (0..n)
                        .map(|i| {
                            let ell = if i == 0 { hi } else if i == n - 1 { lo } else { (lh + (ll - lh) * t(i)).exp() };
                            Radius::Deep { ell, x: 1.0 }
                        })
                        .collect()
                } else {
                    (0..n).map(|i| Radius::Deep { ell: hi + (lo - hi) * t(i), x: 1.0 }).collect()
                }
            }
            Chart::Anchored { ell, xa, xb } => {
                let lo = if xa > 0.0 { xa } else { xb * 1e-6 };
                let (la, lb) = (lo.ln(), xb.ln());
                (0..n)
                    .map(|i| Radius::Deep { ell, x: if i == n - 1 { xb } else { (la + (lb - la) * t(i)).exp() } })
                    .collect()
            }
        }
    }

    pub fn is_plain(&self) -> bool {
        matches!(self, Chart::Plain { .. })
    }
}

/// One closed-form piece of a profile.
pub trait Segment: Send + Sync + std::fmt::Debug {
    fn name(&self) -> String;
    /// Lower end of the segment in the profile coordinate.
    fn lo(&self) -> Radius;
    /// Upper end of the segment in the profile coordinate.
    fn hi(&self) -> Radius;
    /// Charts covering `[lo, hi]`, in increasing radius.
    fn charts(&self) -> Vec<Chart>;
    fn jet(&self, r: &Radius) -> Jet;

    /// `(f/sn_ref - 1, f'/f - cn_ref/sn_ref)` at an ordinary radius.
    ///
    /// The default subtracts; segments whose deviation is far below machine
    /// precision override this with a cancellation-free form.
    fn deviation(&self, rho: f64, kref: f64, r_ref: f64) -> (f64, f64) {
        let j = self.jet(&Radius::Plain(rho));
        let f = j.f.to_f64();
        (f / sn(kref, r_ref) - 1.0, j.fp.to_f64() / f - cot_k(kref, r_ref))
    }

    /// `f(r) - (a + (1 + b) r)` with `(a, b)` from [`Segment::f_affine`], the
    /// part of `f` finite differences are taken of.
    fn f_dev(&self, r: f64) -> f64 {
        self.jet(&Radius::Plain(r)).f.to_f64() - r
    }

    /// Affine part `(a, b)` removed by [`Segment::f_dev`]; `(0, 0)` means `f - r`.
    fn f_affine(&self) -> (f64, f64) {
        (0.0, 0.0)
    }

    /// For a blend `f = fbar + c(s)` over a window `r = at + s L`: the
    /// segment giving `fbar`, the window coordinate of `r` and `L`. Finite
    /// differences then treat `fbar` and `c` separately, since the blend can
    /// vary on scales far below the float resolution of `f`.
    fn fd_split(&self, _r: f64) -> Option<(Arc<dyn Segment>, f64, Ext)> {
        None
    }

    /// The correction `c(s)` of [`Segment::fd_split`].
    fn correction(&self, _s: f64) -> Ext {
        Ext::zero(self.lo().scale())
    }

    /// `(c1, c2)` when this segment is the prototype `r(1 - c1/w)`, `-c2 log w`.
    fn prototype_params(&self) -> Option<(f64, f64)> {
        None
    }
}

/// Where the flat reference radius sits relative to the profile coordinate.
///
/// `r_ref = rho + shift * beta(rho)` with `beta` a smooth step from zero at
/// `blend.0` to one at `blend.1`; the identity near the axis and a translation
/// on the outer band.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct RefMap {
    pub shift: f64,
    pub blend: (f64, f64),
}

impl RefMap {
    /// `(r_ref, d r_ref / d rho - 1)`.
    pub fn map(&self, rho: f64) -> (f64, f64) {
        if self.shift == 0.0 {
            return (rho, 0.0);
        }
        let (a, b) = self.blend;
        let y = (rho - a) / (b - a);
        let beta = crate::space_forms::smooth_step(y);
        let h = 1e-6;
        let dbeta = (crate::space_forms::smooth_step(y + h) - crate::space_forms::smooth_step(y - h)) / (2.0 * h) / (b - a);
        (rho + self.shift * beta, self.shift * dbeta)
    }
}

/// A piecewise closed-form radial profile on `[0, r_max]`.
#[derive(Clone, Debug)]
pub struct RadialProfile {
    pub segments: Vec<Arc<dyn Segment>>,
    pub r_max: f64,
    pub ref_map: RefMap,
}

impl RadialProfile {
    pub fn new(segments: Vec<Arc<dyn Segment>>) -> Result<Self> {
        let r_max = segments
            .last()
            .map(|s| s.hi().to_f64())
            .ok_or_else(|| Error::construction("profile", "no segments"))?;
        let p = RadialProfile { segments, r_max, ref_map: RefMap::default() };
        p.check_abutting()?;
        Ok(p)
    }

    fn check_abutting(&self) -> Result<()> {
        for w in self.segments.windows(2) {
            let (a, b) = (w[0].hi(), w[1].lo());
            let gap = match (a, b) {
                (Radius::Plain(x), Radius::Plain(y)) => (x - y).abs(),
                _ => {
                    if a.is_plain() != b.is_plain() {
                        return Err(Error::construction("profile", "mixed junction representation"));
                    }
                    (a.ln_ratio(&b)).abs() * a.to_f64()
                }
            };
            if gap > 1e-14 {
                return Err(Error::construction("profile", format!("gap {gap} between {} and {}", w[0].name(), w[1].name())));
            }
        }
        Ok(())
    }

    pub fn r_min(&self) -> f64 {
        self.segments[0].lo().to_f64()
    }

    /// Segment index covering `r`; boundary points go to the left segment.
    pub fn locate(&self, r: &Radius) -> Option<usize> {
        self.segments.iter().position(|s| {
            s.lo().cmp_radius(r) != std::cmp::Ordering::Greater && r.cmp_radius(&s.hi()) != std::cmp::Ordering::Greater
        })
    }

    pub fn jet(&self, r: &Radius) -> Result<Jet> {
        let i = self.locate(r).ok_or_else(|| Error::domain("r", format!("{r:?} outside the profile")))?;
        Ok(self.segments[i].jet(r))
    }

    /// Both one-sided jets at a radius (equal away from junctions).
    pub fn one_sided(&self, r: f64) -> Result<(Jet, Jet)> {
        let rr = Radius::Plain(r);
        let i = self.locate(&rr).ok_or_else(|| Error::domain("r", format!("{r} outside the profile")))?;
        let left = self.segments[i].jet(&rr);
        let right = match self.segments.get(i + 1) {
            Some(s) if s.lo().cmp_radius(&rr) == std::cmp::Ordering::Equal => s.jet(&rr),
            _ => left,
        };
        Ok((left, right))
    }

    /// All grid points, tagged with their segment, `n` per chart.
    pub fn grid(&self, n_per_chart: usize) -> Vec<(usize, Radius)> {
        let mut out = Vec::new();
        for (i, s) in self.segments.iter().enumerate() {
            for c in s.charts() {
                out.extend(c.points(n_per_chart).into_iter().map(|r| (i, r)));
            }
        }
        out
    }

    /// Number of points per chart so the whole grid has at least `total`.
    pub fn per_chart(&self, total: usize) -> usize {
        let charts: usize = self.segments.iter().map(|s| s.charts().len()).sum();
        total.div_ceil(charts.max(1)).max(2)
    }

    /// Plain intervals, split at segment boundaries, for quadrature.
    pub fn plain_pieces(&self) -> Vec<(usize, f64, f64)> {
        let mut out = Vec::new();
        for (i, s) in self.segments.iter().enumerate() {
            for c in s.charts() {
                if let Chart::Plain { a, b } = c {
                    out.push((i, a, b));
                }
            }
        }
        out
    }

    fn in_domain(&self, r: f64) -> Result<()> {
        if !(r > self.r_min() && r <= self.r_max) {
            return Err(Error::domain("r", format!("{r} outside ({}, {}]", self.r_min(), self.r_max)));
        }
        Ok(())
    }
}

/// The flat comparison metric: `S^2_k` times a circle of length `period_t`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FlatReference {
    pub k: f64,
    pub period_t: f64,
}

impl FlatReference {
    pub fn new(k: f64, period_t: f64) -> Result<Self> {
        if !(period_t > 0.0) {
            return Err(Error::domain("period_t", "must be positive"));
        }
        Ok(FlatReference { k, period_t })
    }
}

pub fn scalar_curvature(p: &RadialProfile, r: f64) -> Result<f64> {
    p.in_domain(r)?;
    Ok(p.jet(&Radius::Plain(r))?.scalar_curvature().to_f64())
}

pub fn mean_curvature(p: &RadialProfile, r: f64) -> Result<f64> {
    p.in_domain(r)?;
    Ok(p.jet(&Radius::Plain(r))?.mean_curvature().to_f64())
}

/// Quadrature tolerance used for distance and volume integrals.
fn integral_tol(scale: f64) -> QuadTol {
    QuadTol { abs: 1e-10 * scale.min(1.0), rel: 1e-8, max_depth: 60 }
}

/// `int_a^b g(r) dr`, in `log r` when the interval spans decades.
fn integrate_piece(g: impl Fn(f64) -> f64, a: f64, b: f64, tol: QuadTol) -> Result<f64> {
    let lo = if a > 0.0 { a } else { 1e-300 };
    if b / lo > 4.0 {
        let (v, _) = adaptive(|t: f64| {
            let r = t.exp();
            g(r) * r
        }, lo.ln(), b.ln(), tol)?;
        Ok(v)
    } else {
        Ok(adaptive(&g, lo, b, tol)?.0)
    }
}

/// `int_0^{r_max} e^{-u} dr`, the distance from the axis to the boundary.
///
/// Radii below the float floor contribute less than `1e-290` and are skipped.
pub fn axis_distance(p: &RadialProfile) -> Result<f64> {
    let tol = integral_tol(p.r_max);
    p.plain_pieces()
        .into_iter()
        .map(|(i, a, b)| {
            let s = &p.segments[i];
            integrate_piece(|r| (-s.jet(&Radius::Plain(r)).u).exp(), a, b, tol)
        })
        .sum()
}

/// `2π h int_0^{r_max} e^{-u} f dr`, the volume of the tube of height `h`.
pub fn tube_volume(p: &RadialProfile, height: f64) -> Result<f64> {
    if !(height > 0.0) {
        return Err(Error::domain("height", "must be positive"));
    }
    let tol = integral_tol(p.r_max * p.r_max);
    let s: f64 = p
        .plain_pieces()
        .into_iter()
        .map(|(i, a, b)| {
            let s = &p.segments[i];
            integrate_piece(
                |r| {
                    let j = s.jet(&Radius::Plain(r));
                    (-j.u).exp() * j.f.to_f64()
                },
                a,
                b,
                tol,
            )
        })
        .sum::<Result<f64>>()?;
    Ok(2.0 * std::f64::consts::PI * height * s)
}

/// Result of a `W^{1,p}` deviation computation.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct W1p {
    pub value: f64,
    pub pexp: f64,
    /// Bound on the part of the integral below the smallest ordinary radius.
    pub tail: f64,
    /// False when `p >= 2` or the tail is not negligible.
    pub reliable: bool,
}

/// `(int |Δg|^p + |∇Δg|^p dV)^{1/p}` against the flat reference.
///
/// `Δg` is measured in the reference orthonormal coframe; its entries are
/// `e^{-2u}J^{-2} - 1`, `e^{-2u} f^2/sn_ref^2 - 1` and `e^{2u} - 1` with `J`
/// the Jacobian of the reference map, and `∇` is the radial derivative.
pub fn w1p_deviation(p: &RadialProfile, reference: &FlatReference, pexp: f64) -> Result<W1p> {
    if !(pexp >= 1.0) {
        return Err(Error::domain("pexp", format!("needs p >= 1, got {pexp}")));
    }
    let last = p.segments.last().unwrap();
    let (rr, _) = p.ref_map.map(p.r_max);
    let (q, dl) = last.deviation(p.r_max, reference.k, rr);
    let ju = last.jet(&Radius::Plain(p.r_max));
    if q.abs() > 1e-10 || dl.abs() * p.r_max > 1e-10 || ju.u.abs() > 1e-10 {
        return Err(Error::domain("profile", "does not agree with the flat reference at r_max"));
    }
    let k = reference.k;
    let map = p.ref_map;
    let ln_integrand = |s: &Arc<dyn Segment>, rho: f64| -> f64 {
        let (r_ref, dj) = map.map(rho);
        let j = s.jet(&Radius::Plain(rho));
        let (q, dlog) = s.deviation(rho, k, r_ref);
        let u = j.u;
        let up = j.up.to_f64();
        let jac = 1.0 + dj;
        // entries of Δg
        let inv_j2_m1 = -(2.0 * dj + dj * dj) / (jac * jac);
        let e2 = (-2.0 * u).exp();
        let a1 = (-2.0 * u).exp_m1() + e2 * inv_j2_m1;
        let a2 = (-2.0 * u).exp_m1() + e2 * q * (2.0 + q);
        let a3 = (2.0 * u).exp_m1();
        // radial derivatives, per unit reference length
        let d1 = -2.0 * up * e2 / (jac * jac);
        let d2 = e2 * (1.0 + q) * (1.0 + q) * (2.0 * dlog - 2.0 * up);
        let d3 = 2.0 * up * (2.0 * u).exp();
        let g0 = a1.hypot(a2).hypot(a3);
        let g1 = d1.hypot(d2).hypot(d3) / jac;
        // log of (g0^p + g1^p) * 2π T sn_ref(r_ref) J
        let (l0, l1) = (pexp * g0.ln(), pexp * g1.ln());
        let m = l0.max(l1);
        let lsum = if m == f64::NEG_INFINITY { m } else { m + ((l0 - m).exp() + (l1 - m).exp()).ln() };
        lsum + (2.0 * std::f64::consts::PI * reference.period_t * sn(k, r_ref) * jac).ln()
    };
    let tol = QuadTol { abs: 0.0, rel: 1e-8, max_depth: 60 };
    let mut total = 0.0;
    let mut tail = 0.0;
    let mut lowest = f64::INFINITY;
    for (i, a, b) in p.plain_pieces() {
        let s = &p.segments[i];
        let lo = if a > 0.0 { a } else { 1e-300 };
        let v = if b / lo > 4.0 {
            adaptive(|t: f64| (ln_integrand(s, t.exp()) + t).exp(), lo.ln(), b.ln(), tol)?.0
        } else {
            adaptive(|r: f64| ln_integrand(s, r).exp(), lo, b, tol)?.0
        };
        total += v;
        if lo < lowest {
            lowest = lo;
            // integrand per unit log r decays at least like r^{2-p} below lo
            let g = (ln_integrand(s, lo) + lo.ln()).exp();
            tail = if pexp < 2.0 { g / (2.0 - pexp) } else { f64::INFINITY };
        }
    }
    let value = total.powf(1.0 / pexp);
    let reliable = pexp < 2.0 && tail <= 1e-6 * total.max(f64::MIN_POSITIVE);
    Ok(W1p { value, pexp, tail, reliable })
}

/// Closed-form scalar curvature of the prototype profile.
pub fn prototype_closed_form(c1: f64, c2: f64, r: f64) -> f64 {
    let w = -r.ln();
    let bracket = c1 * (c1 + 2.0) / (w - c1) + c1 - c2 * c2;
    // 2 / (r^2 w^{2+2c2}) in logs
    let l = 2.0f64.ln() - 2.0 * r.ln() - (2.0 + 2.0 * c2) * w.ln();
    l.exp() * bracket
}

/// The prototype `f = r(1 - c1/w)`, `u = -c2 log w` on `[0, b]`.
#[derive(Clone, Debug)]
pub struct PrototypeSegment {
    pub c1: f64,
    pub c2: f64,
    pub b: f64,
}

impl Segment for PrototypeSegment {
    fn name(&self) -> String {
        "prototype".into()
    }
    fn lo(&self) -> Radius {
        Radius::Plain(0.0)
    }
    fn hi(&self) -> Radius {
        Radius::Plain(self.b)
    }
    fn charts(&self) -> Vec<Chart> {
        vec![Chart::Plain { a: 0.0, b: self.b }]
    }
    fn jet(&self, r: &Radius) -> Jet {
        prototype_jet(self.c1, self.c2, r, 1.0)
    }
    fn deviation(&self, rho: f64, kref: f64, r_ref: f64) -> (f64, f64) {
        let w = -rho.ln();
        let sr = sn(kref, r_ref) / rho;
        let q = (1.0 - self.c1 / w) / sr - 1.0;
        // f'/f - 1/r = -c1 / (r w (w - c1))
        let dlog = -self.c1 / (rho * w * (w - self.c1)) + (1.0 / rho - cot_k(kref, r_ref));
        (q, dlog)
    }
    fn f_dev(&self, r: f64) -> f64 {
        -self.c1 * r / (-r.ln())
    }
    fn prototype_params(&self) -> Option<(f64, f64)> {
        Some((self.c1, self.c2))
    }
}

/// Jet of `f = r(1 - c1/w)` with `u = -c2 · hfac · log w` (`hfac` constant).
pub fn prototype_jet(c1: f64, c2: f64, r: &Radius, hfac: f64) -> Jet {
    let sc = r.scale();
    let rr = r.r();
    let w = r.w();
    let one = Ext::real(1.0, sc);
    let inv_w = w.recip();
    let c1w = inv_w * c1;
    let f = rr * (one - c1w);
    let fp = one - c1w - c1w * inv_w;
    // -c1 (w + 2) / (r w^3)
    let fpp = -((w + 2.0) * inv_w * inv_w * inv_w / rr) * c1;
    let u = -c2 * hfac * r.ln_w();
    let up = (inv_w / rr) * (c2 * hfac);
    Jet { f, fp, fpp, u, up }
}

/// A product piece `f = α sn_k(r - offset)`, `u ≡ u0` on `[a, b]`.
#[derive(Clone, Debug)]
pub struct ProductSegment {
    pub label: String,
    pub alpha: f64,
    /// `1 - alpha`, kept separately since `alpha` may round to one.
    pub defect: f64,
    pub k: f64,
    pub u0: f64,
    pub offset: f64,
    pub a: f64,
    pub b: f64,
}

impl ProductSegment {
    /// Flat-reference piece: `f = sn_k`, `u = 0`.
    pub fn model(k: f64, a: f64, b: f64) -> Self {
        ProductSegment { label: "model".into(), alpha: 1.0, defect: 0.0, k, u0: 0.0, offset: 0.0, a, b }
    }
}

impl Segment for ProductSegment {
    fn name(&self) -> String {
        self.label.clone()
    }
    fn lo(&self) -> Radius {
        Radius::Plain(self.a)
    }
    fn hi(&self) -> Radius {
        Radius::Plain(self.b)
    }
    fn charts(&self) -> Vec<Chart> {
        vec![Chart::Plain { a: self.a, b: self.b }]
    }
    fn jet(&self, r: &Radius) -> Jet {
        let x = r.to_f64() - self.offset;
        let s = self.alpha * sn(self.k, x);
        Jet::plain(s, self.alpha * cn(self.k, x), -self.k * s, self.u0, 0.0)
    }
    fn deviation(&self, rho: f64, kref: f64, r_ref: f64) -> (f64, f64) {
        let x = rho - self.offset;
        if self.alpha == 1.0 && self.k == kref && x == r_ref {
            return (0.0, 0.0);
        }
        let s = self.alpha * sn(self.k, x);
        (s / sn(kref, r_ref) - 1.0, cot_k(self.k, x) - cot_k(kref, r_ref))
    }
    fn f_dev(&self, r: f64) -> f64 {
        let x = r - self.offset;
        self.alpha * x * sinc_minus_one(self.k, x)
    }
    fn f_affine(&self) -> (f64, f64) {
        (self.defect * self.offset - self.offset, -self.defect)
    }
}

/// Evaluate `sn_k` jets at any radius (used by segments built on `sn_k`).
pub fn sn_jet_ext(k: f64, r: &Radius) -> (Ext, Ext, Ext) {
    let (s, c) = sn_cn_ext(k, r);
    (s, c, s * (-k))
}

/// Profile made of a single model piece, useful as a baseline.
pub fn flat_profile(k: f64, r_max: f64) -> RadialProfile {
    RadialProfile::new(vec![Arc::new(ProductSegment::model(k, 0.0, r_max))]).expect("single segment")
}

pub fn prototype_profile(c1: f64, c2: f64, r_max: f64) -> Result<RadialProfile> {
    if !(r_max > 0.0 && -r_max.ln() > c1) {
        return Err(Error::domain("r_max", "prototype needs log(1/r_max) > c1"));
    }
    RadialProfile::new(vec![Arc::new(PrototypeSegment { c1, c2, b: r_max })])
}

/// Verification grid dump: one CSV row per ordinary-radius grid point.
pub fn profile_csv(p: &RadialProfile, n_total: usize) -> String {
    let mut s = String::from("r,w,f,fp,fpp,u,up,R,H\n");
    for (i, r) in p.grid(p.per_chart(n_total)) {
        let Radius::Plain(x) = r else { continue };
        if x <= 0.0 {
            continue;
        }
        let j = p.segments[i].jet(&r);
        let _ = writeln!(
            s,
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            x,
            -x.ln(),
            j.f.to_f64(),
            j.fp.to_f64(),
            j.fpp.to_f64(),
            j.u,
            j.up.to_f64(),
            j.scalar_curvature().to_f64(),
            j.mean_curvature().to_f64()
        );
    }
    s
}

/// Closed-form versus finite-difference comparison.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FdReport {
    pub points: usize,
    pub max_rel_r: f64,
    pub max_rel_h: f64,
    pub worst_r: f64,
}

/// Central differences of `f - r` and `u` in `w = log(1/r)`, with the step
/// picked per point by comparing two Richardson estimates.
/// Central differences with Richardson extrapolation at steps `10^-e`,
/// keeping the pair of successive estimates that agree best.
fn richardson_derivs(g: &dyn Fn(f64) -> f64, x0: f64, steps: std::ops::RangeInclusive<i32>) -> Option<(f64, f64)> {
    let central = |h: f64| {
        let (m, z, p) = (g(x0 - h), g(x0), g(x0 + h));
        ((p - m) / (2.0 * h), (p - 2.0 * z + m) / (h * h))
    };
    let rich = |h: f64| {
        let a = central(h);
        let b = central(h / 2.0);
        ((4.0 * b.0 - a.0) / 3.0, (4.0 * b.1 - a.1) / 3.0)
    };
    let mut best: Option<((f64, f64), f64)> = None;
    let mut prev = rich(10f64.powi(-steps.start() + 1));
    for e in steps {
        let cur = rich(10f64.powi(-e));
        let scale = cur.1.abs() + cur.0.abs() + 1e-300;
        let diff = ((cur.1 - prev.1).abs() + (cur.0 - prev.0).abs()) / scale;
        if best.as_ref().is_none_or(|b| diff < b.1) {
            best = Some((cur, diff));
        }
        prev = cur;
    }
    best.map(|b| b.0)
}

/// `(r^2 f'', f', d u / d w)` from differences in `w`.
fn fd_parts(s: &dyn Segment, r: f64) -> Option<(f64, f64, f64)> {
    let (_, slope) = s.f_affine();
    let w0 = -r.ln();
    let (dw, dww) = richardson_derivs(&|w: f64| s.f_dev((-w).exp()), w0, 2..=6)?;
    let (uw, _) = richardson_derivs(&|w: f64| s.jet(&Radius::Plain((-w).exp())).u, w0, 2..=6)?;
    Some((dww + dw, 1.0 + slope - dw / r, uw))
}

fn fd_at(s: &dyn Segment, r: f64) -> Option<(f64, f64)> {
    let (mut r2fpp, mut fp, uw) = fd_parts(s, r)?;
    let j = s.jet(&Radius::Plain(r));
    let f = j.f.to_f64();
    if let Some((side, s0, len)) = s.fd_split(r) {
        let (a, b, _) = fd_parts(side.as_ref(), r)?;
        let fe = j.f;
        let (c1, c2) = richardson_derivs(&|x: f64| (s.correction(x) / fe).to_f64(), s0, 2..=6)?;
        let q = (Ext::real(r, len.sc) / len).to_f64();
        r2fpp = a + c2 * q * q * f;
        fp = b + (fe * c1 / len).to_f64();
    }
    // r^2 R is returned, so nothing overflows near the floor
    let r2r = 2.0 * (2.0 * j.u).exp() * (-r2fpp / f - uw * uw);
    let hh = j.u.exp() * fp / f;
    Some((r2r, hh))
}

/// Agreement of closed-form curvatures with finite differences at `n` random
/// ordinary radii, away from segment ends.
pub fn fd_oracle(p: &RadialProfile, n: usize, seed: u64) -> FdReport {
    let pieces: Vec<_> = p.plain_pieces().into_iter().filter(|&(_, a, b)| b > a).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<(usize, f64)> = (0..n)
        .map(|_| {
            let (i, a, b) = pieces[rng.gen_range(0..pieces.len())];
            let lo = if a > 0.0 { a } else { b * 1e-6 };
            let t: f64 = rng.gen_range(0.02..0.98);
            let r = if b / lo > 4.0 { (lo.ln() + t * (b / lo).ln()).exp() } else { lo + t * (b - lo) };
            (i, r)
        })
        .collect();
    let res: Vec<(f64, f64, f64)> = samples
        .par_iter()
        .filter_map(|&(i, r)| {
            let s = p.segments[i].as_ref();
            let (rfd, hfd) = fd_at(s, r)?;
            let j = s.jet(&Radius::Plain(r));
            let rc = (j.scalar_curvature() * Ext::plain(r) * Ext::plain(r)).to_f64();
            let hc = j.mean_curvature().to_f64();
            let scale = rc.abs().max(r * r).max(f64::MIN_POSITIVE);
            Some(((rfd - rc).abs() / scale, (hfd - hc).abs() / hc.abs().max(1.0), r))
        })
        .collect();
    let mut rep = FdReport { points: res.len(), max_rel_r: 0.0, max_rel_h: 0.0, worst_r: f64::NAN };
    for (a, b, r) in res {
        if a > rep.max_rel_r {
            rep.max_rel_r = a;
            rep.worst_r = r;
        }
        rep.max_rel_h = rep.max_rel_h.max(b);
    }
    rep
}

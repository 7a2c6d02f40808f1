//! Certification of the seven drawstring conditions for a radial profile.
//!
//! (I) `R >= 2(k - ε)`; (II) the metric is the model product on the outer
//! band; (III) `u = 0` near the boundary; (IV) `e^u <= δ` near the axis;
//! (V) the level tori are mean convex; (VI) the axis is within `r0` of the
//! boundary; (VII) the tube volume is below `100 V0`.

use crate::drawstring::{Drawstring, DrawstringSpec, SolvedParams};
use crate::error::{Error, Result};
use crate::ext::Radius;
use crate::radial_metric::{axis_distance, fd_oracle, tube_volume, FdReport, RadialProfile, Segment};
use crate::space_forms::{cn, sn};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;

/// Tolerance for conditions evaluated from closed-form derivatives.
pub const TOL_CLOSED_FORM: f64 = 1e-7;
/// Tolerance for conditions resting on finite differences only.
pub const TOL_FD: f64 = 1e-4;
/// Residual allowed on the outer band in (II) and (III).
pub const TOL_BAND: f64 = 1e-10;
/// Finite margins are clamped to this magnitude so reports stay valid JSON.
pub const MARGIN_CLAMP: f64 = 1e308;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
}

impl Status {
    fn of(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

/// Outcome of one condition.
#[derive(Clone, Debug, Serialize)]
pub struct ConditionRecord {
    pub status: Status,
    /// Worst signed margin; nonnegative means the inequality holds outright.
    pub margin: f64,
    /// Where the worst margin occurs (zero below the float floor).
    pub r: f64,
    /// `log r` at the worst point, finite even below the floor when possible.
    pub ln_r: f64,
    pub grid: usize,
    pub tol: f64,
}

/// Per-condition results plus oracle cross-checks.
#[derive(Clone, Debug, Serialize)]
pub struct CertificationReport {
    pub conditions: BTreeMap<String, ConditionRecord>,
    pub all_pass: bool,
    pub tol_abs: f64,
    pub v0: f64,
    pub axis_distance: f64,
    pub tube_volume: f64,
    pub fd: FdReport,
    pub fd_tol: f64,
    pub fd_pass: bool,
    pub spec: DrawstringSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<SolvedParams>,
}

impl CertificationReport {
    pub fn get(&self, key: &str) -> &ConditionRecord {
        &self.conditions[key]
    }

    /// Names of the failed conditions.
    pub fn failures(&self) -> Vec<&str> {
        self.conditions.iter().filter(|(_, c)| c.status == Status::Fail).map(|(k, _)| k.as_str()).collect()
    }
}

/// Grid sizes used by [`certify_with`].
#[derive(Clone, Copy, Debug)]
pub struct CertifyOptions {
    pub grid: usize,
    pub fd_points: usize,
    pub fd_seed: u64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions { grid: 10_000, fd_points: 1000, fd_seed: 7 }
    }
}

/// `V0 = 2π(1 - cn_k(2 r1))/k`, or `4π r1^2` when `k = 0`.
pub fn v0(k: f64, r1: f64) -> f64 {
    if k == 0.0 {
        4.0 * std::f64::consts::PI * r1 * r1
    } else {
        // 1 - cn_k(x) = k x^2/2 · (sin(√k x/2)/(√k x/2))^2 without cancellation
        let x = 2.0 * r1;
        let half = crate::space_forms::sinc_k(k * x * x / 4.0);
        2.0 * std::f64::consts::PI * 0.5 * x * x * half * half
    }
}

fn clamp(m: f64) -> f64 {
    if m.is_nan() {
        m
    } else {
        m.clamp(-MARGIN_CLAMP, MARGIN_CLAMP)
    }
}

fn worst(points: impl IntoIterator<Item = (f64, Radius)>) -> (f64, Radius) {
    points
        .into_iter()
        .fold((f64::INFINITY, Radius::Plain(f64::NAN)), |a, b| if b.0 < a.0 || b.0.is_nan() { b } else { a })
}

fn record(ok: bool, margin: f64, at: Radius, grid: usize, tol: f64) -> ConditionRecord {
    ConditionRecord { status: Status::of(ok), margin: clamp(margin), r: at.to_f64(), ln_r: at.ln_r(), grid, tol }
}

pub fn certify(p: &RadialProfile, spec: &DrawstringSpec, params: Option<&SolvedParams>) -> CertificationReport {
    certify_with(p, spec, params, CertifyOptions::default())
}

pub fn certify_drawstring(d: &Drawstring) -> CertificationReport {
    certify(&d.profile, &d.spec, Some(&d.params))
}

/// At least `n` points over the charts of one segment.
fn segment_grid(seg: &dyn Segment, n: usize) -> Vec<Radius> {
    let charts = seg.charts();
    let per = n.div_ceil(charts.len());
    charts.iter().flat_map(|c| c.points(per)).collect()
}

pub fn certify_with(
    p: &RadialProfile,
    spec: &DrawstringSpec,
    params: Option<&SolvedParams>,
    opts: CertifyOptions,
) -> CertificationReport {
    let k = spec.k;
    let tol = TOL_CLOSED_FORM;
    let grid = p.grid(p.per_chart(opts.grid));
    let n = grid.len();
    let mut conditions = BTreeMap::new();

    // (I) and (V) on the whole grid
    let evals: Vec<(f64, f64, Radius)> = grid
        .par_iter()
        .map(|(i, r)| {
            let j = p.segments[*i].jet(r);
            (j.scalar_curvature().margin_over(2.0 * (k - spec.epsilon)), j.mean_curvature().to_f64(), *r)
        })
        .collect();
    let (m1, at1) = worst(evals.iter().map(|e| (e.0, e.2)));
    conditions.insert("I".to_string(), record(m1 >= -tol, m1, at1, n, tol));
    let (m5, at5) = worst(evals.iter().map(|e| (e.1, e.2)));
    conditions.insert("V".to_string(), record(m5 > 0.0, m5, at5, n, 0.0));

    // (II) and (III) on the outermost segment
    let last = p.segments.len() - 1;
    let outer = segment_grid(p.segments[last].as_ref(), opts.grid);
    let band: Vec<(f64, f64, Radius)> = outer
        .par_iter()
        .map(|r| {
            let rho = r.to_f64();
            let j = p.segments[last].jet(r);
            let (rr, _) = p.ref_map.map(rho);
            let df = (j.f.to_f64() - sn(k, rr)).abs().max((j.fp.to_f64() - cn(k, rr)).abs());
            (TOL_BAND - df.max(j.u.abs()), -j.u.abs(), *r)
        })
        .collect();
    let (m2, at2) = worst(band.iter().map(|b| (b.0, b.2)));
    conditions.insert("II".to_string(), record(m2 >= 0.0, m2, at2, outer.len(), TOL_BAND));
    let (m3, at3) = worst(band.iter().map(|b| (b.1 + TOL_BAND, b.2)));
    conditions.insert("III".to_string(), record(m3 >= 0.0, m3 - TOL_BAND, at3, outer.len(), TOL_BAND));

    // (IV) on the innermost segment
    let inner = segment_grid(p.segments[0].as_ref(), opts.grid);
    let (m4, at4) = worst(inner.iter().map(|r| (spec.delta - p.segments[0].jet(r).u.exp(), *r)));
    conditions.insert("IV".to_string(), record(m4 >= -tol * spec.delta, m4, at4, inner.len(), tol * spec.delta));

    // (VI) and (VII)
    let r1 = params.map_or(p.r_max / 2.0, |s| s.r1());
    let v0 = v0(k, r1);
    let dist = axis_distance(p);
    let vol = tube_volume(p, 1.0);
    let at_max = Radius::Plain(p.r_max);
    let (d, m6) = match dist {
        Ok(d) => (d, spec.r0 - d),
        Err(_) => (f64::NAN, f64::NAN),
    };
    conditions.insert("VI".to_string(), record(m6 > 0.0, m6, at_max, 1, 1e-10));
    let (v, m7) = match vol {
        Ok(v) => (v, 100.0 * v0 - v),
        Err(_) => (f64::NAN, f64::NAN),
    };
    conditions.insert("VII".to_string(), record(m7 > 0.0, m7, at_max, 1, 1e-10 * v0));

    let fd = fd_oracle(p, opts.fd_points, opts.fd_seed);
    let fd_pass = fd.max_rel_r <= TOL_FD && fd.max_rel_h <= TOL_FD;
    let all_pass = conditions.values().all(|c| c.status == Status::Pass);
    CertificationReport {
        conditions,
        all_pass,
        tol_abs: tol,
        v0,
        axis_distance: d,
        tube_volume: v,
        fd,
        fd_tol: TOL_FD,
        fd_pass,
        spec: *spec,
        params: params.cloned(),
    }
}

/// Largest relative deviation of the scalar curvature from the prototype
/// closed form `2/(r^2 w^{2+2c2}) [c1(c1+2)/(w-c1) + c1 - c2^2]` over the
/// grid of the prototype-shaped segment.
pub fn closed_form_cross_check(p: &RadialProfile) -> Result<f64> {
    let (idx, (c1, c2)) = p
        .segments
        .iter()
        .enumerate()
        .find_map(|(i, s)| s.prototype_params().map(|c| (i, c)))
        .ok_or_else(|| Error::construction("cross-check", "no segment of prototype shape"))?;
    let s = &p.segments[idx];
    let mut worst = 0.0f64;
    for c in s.charts() {
        for r in c.points(2000) {
            let w = r.w().to_f64();
            if r.is_zero() || !w.is_finite() {
                continue;
            }
            let bracket = c1 * (c1 + 2.0) / (w - c1) + c1 - c2 * c2;
            let want = 2f64.ln() - 2.0 * r.ln_r() - (2.0 + 2.0 * c2) * w.ln() + bracket.abs().ln();
            let got = s.jet(&r).scalar_curvature();
            if got.signum() != bracket.signum() {
                return Ok(f64::INFINITY);
            }
            worst = worst.max((got.ln_abs() - want).exp_m1().abs());
        }
    }
    Ok(worst)
}

//! Space-form trigonometry and the fixed cutoff kernels.
//!
//! `sn_k`, `cn_k`, `tn_k` are the generalized sine, cosine and tangent of the
//! surface of constant Gauss curvature `k`. Small arguments go through a power
//! series in `k r^2` so that no branch loses digits to cancellation.

use crate::error::{Error, Result};
use crate::ext::{Ext, Radius};
use serde::Serialize;
use std::sync::OnceLock;

/// Below this value of `|k| r^2` the series branch is used.
pub const SERIES_SWITCH: f64 = 1e-8;

/// Gauss curvature of a model surface.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Curvature(pub f64);

impl Curvature {
    pub fn sn(self, r: f64) -> f64 {
        sn(self.0, r)
    }
    pub fn cn(self, r: f64) -> f64 {
        cn(self.0, r)
    }
}

/// `sin(sqrt(y))/sqrt(y)` continued to `y <= 0` as `sinh`.
pub fn sinc_k(y: f64) -> f64 {
    if y.abs() < SERIES_SWITCH {
        1.0 - y / 6.0 + y * y / 120.0
    } else if y > 0.0 {
        let s = y.sqrt();
        s.sin() / s
    } else {
        let s = (-y).sqrt();
        s.sinh() / s
    }
}

/// `cos(sqrt(y))` continued to `y <= 0` as `cosh`.
pub fn cos_k(y: f64) -> f64 {
    if y.abs() < SERIES_SWITCH {
        1.0 - y / 2.0 + y * y / 24.0
    } else if y > 0.0 {
        y.sqrt().cos()
    } else {
        (-y).sqrt().cosh()
    }
}

/// `atan(sqrt(y))/sqrt(y)` continued to `y < 0` as `atanh`. Requires `y > -1`.
pub fn atanc_k(y: f64) -> f64 {
    if y.abs() < SERIES_SWITCH {
        1.0 - y / 3.0 + y * y / 5.0
    } else if y > 0.0 {
        let s = y.sqrt();
        s.atan() / s
    } else {
        let s = (-y).sqrt();
        s.atanh() / s
    }
}

pub fn sn(k: f64, r: f64) -> f64 {
    r * sinc_k(k * r * r)
}

pub fn cn(k: f64, r: f64) -> f64 {
    cos_k(k * r * r)
}

/// `cn/sn`, finite for `r > 0`.
pub fn cot_k(k: f64, r: f64) -> f64 {
    cn(k, r) / sn(k, r)
}

pub fn tn(k: f64, r: f64) -> Result<f64> {
    if r < 0.0 || !r.is_finite() {
        return Err(Error::domain("r", format!("tn needs finite r >= 0, got {r}")));
    }
    if k > 0.0 && r * k.sqrt() >= std::f64::consts::FRAC_PI_2 {
        return Err(Error::domain("r", format!("tn_{k} undefined at r = {r} (cn vanishes)")));
    }
    Ok(sn(k, r) / cn(k, r))
}

pub fn arctn(k: f64, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::domain("x", "arctn needs a finite argument"));
    }
    if k < 0.0 && x.abs() * (-k).sqrt() >= 1.0 {
        return Err(Error::domain("x", format!("|x| = {} outside the range of tn_{k}", x.abs())));
    }
    Ok(x * atanc_k(k * x * x))
}

/// `(sn, cn)` at a possibly sub-float radius.
///
/// Every deep radius satisfies `|k| r^2 < 1e-590`, so `sn = r` and `cn = 1`
/// there to all representable digits.
pub fn sn_cn_ext(k: f64, r: &Radius) -> (Ext, Ext) {
    match *r {
        Radius::Plain(x) => (Ext::plain(sn(k, x)), Ext::plain(cn(k, x))),
        Radius::Deep { .. } => {
            let sc = r.scale();
            (r.r(), Ext::real(1.0, sc))
        }
    }
}

/// `cn/sn - 1/r`, computed without cancellation.
pub fn cot_minus_inv(k: f64, r: f64) -> f64 {
    let y = k * r * r;
    if y.abs() < 1e-3 {
        // -k r/3 - k^2 r^3/45 - 2 k^3 r^5/945
        -k * r / 3.0 * (1.0 + y / 15.0 + 2.0 * y * y / 315.0)
    } else {
        cot_k(k, r) - 1.0 / r
    }
}

/// `cn_k(r) - 1` without cancellation.
pub fn cos_minus_one(k: f64, r: f64) -> f64 {
    let y = k * r * r;
    let s = sinc_k(y / 4.0);
    -0.5 * y * s * s
}

/// `atanc_k(y) - 1` without cancellation.
pub fn atanc_minus_one(y: f64) -> f64 {
    if y.abs() < 1e-3 {
        -y / 3.0 + y * y / 5.0 - y * y * y / 7.0 + y * y * y * y / 9.0
    } else {
        atanc_k(y) - 1.0
    }
}

/// `ln(tn_k(r) / r)` without cancellation.
pub fn ln_tanc(k: f64, r: f64) -> f64 {
    sinc_minus_one(k, r).ln_1p() - cos_minus_one(k, r).ln_1p()
}

/// `arcsn_k(y)`, the inverse of `sn_k` on its increasing branch.
pub fn arcsn(k: f64, y: f64) -> Result<f64> {
    if !(y >= 0.0 && y.is_finite()) {
        return Err(Error::domain("y", format!("arcsn needs finite y >= 0, got {y}")));
    }
    if k > 0.0 {
        let s = y * k.sqrt();
        if s > 1.0 {
            return Err(Error::domain("y", format!("{y} above the maximum of sn_{k}")));
        }
        Ok(s.asin() / k.sqrt())
    } else if k < 0.0 {
        Ok((y * (-k).sqrt()).asinh() / (-k).sqrt())
    } else {
        Ok(y)
    }
}

/// `sn_k(r)/r - 1` without cancellation.
pub fn sinc_minus_one(k: f64, r: f64) -> f64 {
    let y = k * r * r;
    if y.abs() < 1e-3 {
        -y / 6.0 * (1.0 - y / 20.0 + y * y / 840.0)
    } else {
        sinc_k(y) - 1.0
    }
}

// ---------------------------------------------------------------------------
// Cutoff kernel
// ---------------------------------------------------------------------------

/// Half-width of the mollifier applied to the triangular `zeta'`.
pub const KERNEL_TAU: f64 = 0.005;
pub(crate) const TABLE_N: usize = 4096;

/// Smooth step on `[0,1]`, `0` below and `1` above.
pub fn smooth_step(y: f64) -> f64 {
    if y <= 0.0 {
        0.0
    } else if y >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / y).exp();
        let b = (-1.0 / (1.0 - y)).exp();
        a / (a + b)
    }
}

/// Antiderivative tables of the smooth step: `P1 = int psi`, `P2 = int P1`.
struct StepTables {
    p1: Vec<f64>,
    p2: Vec<f64>,
}

fn step_tables() -> &'static StepTables {
    static T: OnceLock<StepTables> = OnceLock::new();
    T.get_or_init(|| {
        let h = 1.0 / TABLE_N as f64;
        let (gx, gw) = crate::quadrature::gauss_legendre(16);
        let mut p1 = vec![0.0; TABLE_N + 1];
        let mut p2 = vec![0.0; TABLE_N + 1];
        for i in 0..TABLE_N {
            let a = i as f64 * h;
            let mut i1 = 0.0;
            let mut i2 = 0.0;
            for (x, w) in gx.iter().zip(&gw) {
                let t = a + 0.5 * h * (x + 1.0);
                let s = smooth_step(t);
                i1 += w * s;
                // int_a^{a+h} P1(t) dt with P1(t) = P1(a) + int_a^t psi
                // = h P1(a) + int_a^{a+h} (a+h-t) psi(t) dt
                i2 += w * (a + h - t) * s;
            }
            i1 *= 0.5 * h;
            i2 *= 0.5 * h;
            p1[i + 1] = p1[i] + i1;
            p2[i + 1] = p2[i] + h * p1[i] + i2;
        }
        StepTables { p1, p2 }
    })
}

/// Cubic Hermite interpolation on the uniform table of `[0, 1]`.
pub(crate) fn hermite(y: f64, vals: &[f64], ders: impl Fn(f64) -> f64) -> f64 {
    let h = 1.0 / TABLE_N as f64;
    let i = ((y / h) as usize).min(TABLE_N - 1);
    let x0 = i as f64 * h;
    let t = (y - x0) / h;
    let (y0, y1) = (vals[i], vals[i + 1]);
    let (d0, d1) = (ders(x0) * h, ders(x0 + h) * h);
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0
        + (t3 - 2.0 * t2 + t) * d0
        + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * d1
}

fn p1(y: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    let t = step_tables();
    if y >= 1.0 {
        return t.p1[TABLE_N] + (y - 1.0);
    }
    hermite(y, &t.p1, smooth_step)
}

fn p2(y: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    let t = step_tables();
    if y >= 1.0 {
        let d = y - 1.0;
        return t.p2[TABLE_N] + t.p1[TABLE_N] * d + 0.5 * d * d;
    }
    hermite(y, &t.p2, p1)
}

/// Derivative order requested from the kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Deriv {
    D0,
    D1,
    D2,
}

/// `zeta` and its first two derivatives.
///
/// `zeta'` is a triangle of unit mass on `[1/2 + tau, 1 - tau]`, mollified at
/// width `tau` so it stays supported in `[1/2, 1]`.
pub fn zeta_d(x: f64, d: Deriv) -> f64 {
    if x <= 0.5 {
        return 0.0;
    }
    if x >= 1.0 {
        return if d == Deriv::D0 { 1.0 } else { 0.0 };
    }
    if x > 0.75 {
        // zeta' is symmetric about 3/4, so zeta(x) = 1 - zeta(3/2 - x); this
        // keeps the upper plateau free of cancellation
        let v = zeta_d(1.5 - x, d);
        return match d {
            Deriv::D0 => 1.0 - v,
            Deriv::D1 => v,
            Deriv::D2 => -v,
        };
    }
    let tau = KERNEL_TAU;
    let slope = 1.0 / ((0.25 - tau) * (0.25 - tau));
    let t = x - 0.5;
    let knots = [(t - tau, 1.0), (t - 0.25, -2.0), (t - 0.5 + tau, 1.0)];
    let mut acc = 0.0;
    for (z, c) in knots {
        let y = (z + tau) / (2.0 * tau);
        acc += c * match d {
            Deriv::D0 => 4.0 * tau * tau * p2(y),
            Deriv::D1 => 2.0 * tau * p1(y),
            Deriv::D2 => smooth_step(y),
        };
    }
    let v = slope * acc;
    match d {
        Deriv::D0 => v.clamp(0.0, 1.0),
        Deriv::D1 => v.max(0.0),
        Deriv::D2 => v,
    }
}

pub fn zeta(x: f64) -> f64 {
    zeta_d(x, Deriv::D0)
}

/// `eta(x) = zeta(3/2 - x)`: equal to one on `[0,1/2]` and zero past one.
pub fn eta_d(x: f64, d: Deriv) -> f64 {
    let v = zeta_d(1.5 - x, d);
    if d == Deriv::D1 {
        -v
    } else {
        v
    }
}

pub fn eta(x: f64) -> f64 {
    eta_d(x, Deriv::D0)
}

/// Points where `zeta` (and `eta`, which mirrors it about 3/4) changes
/// formula; integrands involving the kernels are smooth between them.
pub const KERNEL_BREAKS: [f64; 6] = [0.5, 0.5 + 2.0 * KERNEL_TAU, 0.75 - KERNEL_TAU, 0.75 + KERNEL_TAU, 1.0 - 2.0 * KERNEL_TAU, 1.0];

/// `int_a^b g(x) dx` for an integrand built from the kernels evaluated at
/// `x`, split at [`KERNEL_BREAKS`].
pub fn integrate_kernel(g: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let tol = crate::quadrature::QuadTol { abs: 1e-15, rel: 1e-12, max_depth: 40 };
    let mut cuts = vec![a];
    cuts.extend(KERNEL_BREAKS.iter().copied().filter(|&x| x > a && x < b));
    cuts.push(b);
    cuts.windows(2)
        .map(|w| match crate::quadrature::adaptive(&g, w[0], w[1], tol) {
            Ok((v, _)) => v,
            Err(_) => crate::quadrature::gl_integrate(&g, w[0], w[1], 64),
        })
        .sum()
}

/// The two kernels with their derivative bounds measured on a fine grid.
#[derive(Clone, Debug, Serialize)]
pub struct CutoffKernel {
    pub sup_zeta_p: f64,
    pub sup_zeta_pp: f64,
    pub sup_eta_p: f64,
    pub sup_eta_pp: f64,
    pub grid: usize,
}

impl CutoffKernel {
    pub fn zeta(&self, x: f64, d: Deriv) -> f64 {
        zeta_d(x, d)
    }
    pub fn eta(&self, x: f64, d: Deriv) -> f64 {
        eta_d(x, d)
    }
}

/// Nominal targets for `sup zeta'` and `sup |zeta''|`.
pub const NOMINAL_ZETA_P: f64 = 4.0;
pub const NOMINAL_ZETA_PP: f64 = 16.0;
/// Allowed excess of a measured bound over its nominal target.
pub const KERNEL_SLACK: f64 = 1.05;

pub fn make_cutoffs() -> Result<CutoffKernel> {
    let n = 100_000;
    let mut k = CutoffKernel { sup_zeta_p: 0.0, sup_zeta_pp: 0.0, sup_eta_p: 0.0, sup_eta_pp: 0.0, grid: n };
    let mut prev = 0.0;
    for i in 0..=n {
        // [0, 1.5] covers both plateaus
        let x = 1.5 * i as f64 / n as f64;
        let z = zeta(x);
        let e = eta(x);
        if (x <= 0.5 && z != 0.0) || (x >= 1.0 && z != 1.0) {
            return Err(Error::construction("cutoff", format!("zeta plateau violated at x = {x}")));
        }
        if (x <= 0.5 && e != 1.0) || (x >= 1.0 && e != 0.0) {
            return Err(Error::construction("cutoff", format!("eta plateau violated at x = {x}")));
        }
        if z < prev {
            return Err(Error::construction("cutoff", format!("zeta decreases at x = {x}")));
        }
        prev = z;
        k.sup_zeta_p = k.sup_zeta_p.max(zeta_d(x, Deriv::D1));
        k.sup_zeta_pp = k.sup_zeta_pp.max(zeta_d(x, Deriv::D2).abs());
        k.sup_eta_p = k.sup_eta_p.max(eta_d(x, Deriv::D1).abs());
        k.sup_eta_pp = k.sup_eta_pp.max(eta_d(x, Deriv::D2).abs());
    }
    if k.sup_zeta_p > NOMINAL_ZETA_P * KERNEL_SLACK || k.sup_zeta_pp > NOMINAL_ZETA_PP * KERNEL_SLACK {
        return Err(Error::construction(
            "cutoff",
            format!("measured bounds {} / {} exceed the slack", k.sup_zeta_p, k.sup_zeta_pp),
        ));
    }
    Ok(k)
}

/// Shared kernel instance.
pub fn kernel() -> &'static CutoffKernel {
    static K: OnceLock<CutoffKernel> = OnceLock::new();
    K.get_or_init(|| make_cutoffs().expect("cutoff kernel construction"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn sn_series(k: f64, r: f64, terms: usize) -> f64 {
        // sum (-k)^n r^{2n+1}/(2n+1)!
        let mut term = r;
        let mut acc = r;
        for n in 1..terms {
            term *= -k * r * r / ((2 * n) as f64 * (2 * n + 1) as f64);
            acc += term;
        }
        acc
    }

    #[test]
    fn trivial_values() {
        assert_eq!(sn(0.0, 0.7), 0.7);
        assert_relative_eq!(sn(1.0, PI / 2.0), 1.0, epsilon = 1e-15);
        assert!(cn(1.0, PI / 2.0).abs() < 1e-15);
        assert_eq!(arctn(0.0, 0.3).unwrap(), 0.3);
    }

    #[test]
    fn sinh_against_series() {
        let want = sn_series(-1.0, 1.0, 30);
        assert_relative_eq!(sn(-1.0, 1.0), want, max_relative = 1e-15);
        assert_relative_eq!(want, 1.1752011936438014, max_relative = 1e-15);
    }

    #[test]
    fn arctn_roundtrip_against_bisection() {
        let x = tn(-0.5, 0.2).unwrap();
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if tn(-0.5, mid).unwrap() < x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert_relative_eq!(arctn(-0.5, x).unwrap(), 0.2, max_relative = 1e-14);
        assert_relative_eq!(lo, 0.2, max_relative = 1e-14);
    }

    #[test]
    fn pythagorean_identity() {
        for i in 0..=40 {
            let k = -10.0 + 0.5 * i as f64;
            for j in 1..=50 {
                let r = if k > 0.0 { j as f64 / 51.0 * PI / k.sqrt() } else { j as f64 * 0.02 };
                let (s, c) = (sn(k, r), cn(k, r));
                let scale = if k < 0.0 { c * c } else { 1.0 };
                assert!((k * s * s + c * c - 1.0).abs() <= 1e-12 * scale, "k={k} r={r}");
            }
        }
    }

    #[test]
    fn branches_agree_at_switch() {
        for k in [-3.0, -0.1, 0.2, 5.0f64] {
            let r = (SERIES_SWITCH / k.abs()).sqrt();
            let y = k * r * r;
            let closed_s = if k > 0.0 { (k.sqrt() * r).sin() / k.sqrt() } else { ((-k).sqrt() * r).sinh() / (-k).sqrt() };
            let closed_c = if k > 0.0 { (k.sqrt() * r).cos() } else { ((-k).sqrt() * r).cosh() };
            assert_relative_eq!(sn(k, r * (1.0 - 1e-12)), closed_s, max_relative = 1e-11);
            assert_relative_eq!(cos_k(y * (1.0 - 1e-9)), closed_c, max_relative = 1e-12);
        }
    }

    #[test]
    fn cn_derivative() {
        for k in [-2.0, 0.0, 1.5] {
            let r = 0.4;
            let h = 1e-5;
            let d = (cn(k, r + h) - cn(k, r - h)) / (2.0 * h);
            assert_relative_eq!(d, -k * sn(k, r), epsilon = 1e-9);
        }
    }

    #[test]
    fn domain_errors() {
        assert!(tn(1.0, 2.0).is_err());
        assert!(arctn(-1.0, 1.5).is_err());
        assert!(arctn(-4.0, 0.49).is_ok());
    }

    #[test]
    fn small_difference_helpers() {
        for &(k, r) in &[(1.0, 1e-4), (-2.0, 0.3), (0.5, 1.0)] {
            let direct = cot_k(k, r) - 1.0 / r;
            assert_relative_eq!(cot_minus_inv(k, r), direct, max_relative = 1e-6);
            assert_relative_eq!(sinc_minus_one(k, r), sinc_k(k * r * r) - 1.0, max_relative = 1e-6);
        }
    }

    #[test]
    fn kernel_plateaus_and_bounds() {
        assert_eq!(zeta(0.25), 0.0);
        assert_eq!(zeta(2.0), 1.0);
        assert_eq!(eta(0.25), 1.0);
        assert_eq!(eta(2.0), 0.0);
        let k = make_cutoffs().unwrap();
        assert!(k.sup_zeta_p <= 4.0 * 1.05, "{}", k.sup_zeta_p);
        assert!(k.sup_zeta_pp <= 16.0 * 1.05, "{}", k.sup_zeta_pp);
        // continuity at the plateau edges
        assert!((zeta(1.0 - 1e-9) - 1.0).abs() < 1e-12);
        assert!(zeta(0.5 + 1e-9) < 1e-12);
    }

    #[test]
    fn kernel_derivatives_match_differences() {
        let h = 1e-6;
        for i in 1..50 {
            let x = 0.5 + i as f64 / 100.0;
            let d1 = (zeta(x + h) - zeta(x - h)) / (2.0 * h);
            let d2 = (zeta_d(x + h, Deriv::D1) - zeta_d(x - h, Deriv::D1)) / (2.0 * h);
            assert!((d1 - zeta_d(x, Deriv::D1)).abs() < 1e-6, "x={x}");
            assert!((d2 - zeta_d(x, Deriv::D2)).abs() < 1e-4, "x={x}");
        }
    }
}

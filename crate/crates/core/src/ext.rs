//! Extended-range reals for radii far below the `f64` floor.
//!
//! Near the axis the constructions reach radii of the form `r = x·exp(-exp(ell))`
//! with `ell` itself of order `1e45`. Neither `r` nor `w = log(1/r)` is
//! representable there, so evaluation happens relative to a [`Scale`]: every
//! quantity is stored as `m · exp(a·W + b·ell + c)` with `W = exp(ell)` and
//! integer exponents `a`, `b`. Sums resolve dominance by comparing exponents,
//! which is exact when `W` overflows.

use std::cmp::Ordering;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// The log-log scale a point is measured against. `big_w` may be `+inf`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scale {
    pub big_w: f64,
    pub ell: f64,
}

impl Scale {
    /// Scale used for ordinary `f64` radii; only `c` carries magnitude.
    pub const UNIT: Scale = Scale { big_w: 0.0, ell: 0.0 };

    pub fn from_ell(ell: f64) -> Self {
        Scale { big_w: ell.exp(), ell }
    }
}

/// `m · exp(a·W + b·ell + c)` relative to `sc`.
#[derive(Clone, Copy, Debug)]
pub struct Ext {
    pub m: f64,
    pub a: i32,
    pub b: i32,
    pub c: f64,
    pub sc: Scale,
}

const DOMINANCE: f64 = 60.0;

impl Ext {
    pub fn real(v: f64, sc: Scale) -> Self {
        Ext { m: v, a: 0, b: 0, c: 0.0, sc }.normalized()
    }

    pub fn zero(sc: Scale) -> Self {
        Ext { m: 0.0, a: 0, b: 0, c: 0.0, sc }
    }

    pub fn new(m: f64, a: i32, b: i32, c: f64, sc: Scale) -> Self {
        Ext { m, a, b, c, sc }.normalized()
    }

    /// Plain value, convenient for ordinary radii.
    pub fn plain(v: f64) -> Self {
        Ext::real(v, Scale::UNIT)
    }

    fn normalized(mut self) -> Self {
        if self.m == 0.0 || !self.m.is_finite() {
            if self.m == 0.0 {
                self.a = 0;
                self.b = 0;
                self.c = 0.0;
            }
            return self;
        }
        let am = self.m.abs();
        if !(1e-100..=1e100).contains(&am) {
            self.c += am.ln();
            self.m = self.m.signum();
        }
        self
    }

    /// Exponent `a·W + b·ell + c` with `0·inf` treated as zero.
    fn exponent(&self) -> f64 {
        let mut e = self.c;
        if self.a != 0 {
            e += self.a as f64 * self.sc.big_w;
        }
        if self.b != 0 {
            e += self.b as f64 * self.sc.ell;
        }
        e
    }

    /// log of the ratio of scale factors `scale(o) / scale(self)`.
    fn rel_exponent(&self, o: &Ext) -> f64 {
        let mut e = o.c - self.c;
        let da = o.a - self.a;
        if da != 0 {
            e += da as f64 * self.sc.big_w;
        }
        let db = o.b - self.b;
        if db != 0 {
            e += db as f64 * self.sc.ell;
        }
        e
    }

    pub fn is_zero(&self) -> bool {
        self.m == 0.0
    }

    pub fn signum(&self) -> f64 {
        if self.m == 0.0 {
            0.0
        } else {
            self.m.signum()
        }
    }

    /// `ln |self|`, possibly infinite.
    pub fn ln_abs(&self) -> f64 {
        if self.m == 0.0 {
            return f64::NEG_INFINITY;
        }
        self.m.abs().ln() + self.exponent()
    }

    pub fn to_f64(&self) -> f64 {
        if self.m == 0.0 {
            return 0.0;
        }
        let e = self.exponent();
        if e.is_finite() && e.abs() < 600.0 {
            return self.m * e.exp();
        }
        let l = self.m.abs().ln() + e;
        if l.is_nan() {
            return f64::NAN;
        }
        self.m.signum() * l.exp()
    }

    pub fn abs(self) -> Self {
        Ext { m: self.m.abs(), ..self }
    }

    pub fn recip(self) -> Self {
        Ext { m: 1.0 / self.m, a: -self.a, b: -self.b, c: -self.c, sc: self.sc }.normalized()
    }

    pub fn scale_by(self, k: f64) -> Self {
        Ext { m: self.m * k, ..self }.normalized()
    }

    /// Integer power.
    pub fn powi(self, n: i32) -> Self {
        let mut out = Ext { m: 1.0, a: 0, b: 0, c: 0.0, sc: self.sc };
        for _ in 0..n.unsigned_abs() {
            out = out * self;
        }
        if n < 0 {
            out.recip()
        } else {
            out
        }
    }

    /// Real power of a positive value, only for the unit scale or
    /// exponent-free values.
    pub fn powf(self, p: f64) -> Self {
        debug_assert!(self.m >= 0.0);
        if self.m == 0.0 {
            return self;
        }
        let l = self.m.ln() + self.c;
        let (a, b) = (self.a as f64 * p, self.b as f64 * p);
        if a.fract() == 0.0 && b.fract() == 0.0 {
            Ext { m: 1.0, a: a as i32, b: b as i32, c: l * p, sc: self.sc }.normalized()
        } else {
            Ext { m: 1.0, a: 0, b: 0, c: p * self.ln_abs(), sc: self.sc }.normalized()
        }
    }

    pub fn max(self, o: Ext) -> Ext {
        if self.cmp_ext(&o) == Ordering::Less {
            o
        } else {
            self
        }
    }

    pub fn min(self, o: Ext) -> Ext {
        if self.cmp_ext(&o) == Ordering::Greater {
            o
        } else {
            self
        }
    }

    pub fn cmp_ext(&self, o: &Ext) -> Ordering {
        let d = *self - *o;
        if d.m > 0.0 {
            Ordering::Greater
        } else if d.m < 0.0 {
            Ordering::Less
        } else {
            Ordering::Equal
        }
    }

    /// The same value measured against another scale.
    ///
    /// Only the magnitude survives the move, which is exact up to rounding of
    /// `ln |self|`.
    pub fn transfer(self, sc: Scale) -> Ext {
        if self.sc == sc {
            return self;
        }
        let l = self.ln_abs();
        if l == f64::NEG_INFINITY {
            return Ext::zero(sc);
        }
        Ext::new(self.m.signum(), 0, 0, l, sc)
    }

    /// `self - v` as an `f64`, saturating to `±f64::MAX`.
    pub fn margin_over(&self, v: f64) -> f64 {
        let d = (*self - Ext::real(v, self.sc)).to_f64();
        d.clamp(-f64::MAX, f64::MAX)
    }
}

impl Add for Ext {
    type Output = Ext;
    fn add(self, o: Ext) -> Ext {
        if o.m == 0.0 {
            return self;
        }
        if self.m == 0.0 {
            return o;
        }
        let rel = self.rel_exponent(&o);
        let d = rel + o.m.abs().ln() - self.m.abs().ln();
        if d.is_nan() {
            return Ext { m: f64::NAN, ..self };
        }
        if d > DOMINANCE {
            return o;
        }
        if d < -DOMINANCE {
            return self;
        }
        let m = self.m + o.m * rel.exp();
        Ext { m, ..self }.normalized()
    }
}

impl Neg for Ext {
    type Output = Ext;
    fn neg(self) -> Ext {
        Ext { m: -self.m, ..self }
    }
}

impl Sub for Ext {
    type Output = Ext;
    fn sub(self, o: Ext) -> Ext {
        self + (-o)
    }
}

impl Mul for Ext {
    type Output = Ext;
    fn mul(self, o: Ext) -> Ext {
        let m = self.m * o.m;
        if m == 0.0 {
            return Ext::zero(self.sc);
        }
        Ext { m, a: self.a + o.a, b: self.b + o.b, c: self.c + o.c, sc: self.sc }.normalized()
    }
}

impl Div for Ext {
    type Output = Ext;
    fn div(self, o: Ext) -> Ext {
        self * o.recip()
    }
}

impl Mul<f64> for Ext {
    type Output = Ext;
    fn mul(self, k: f64) -> Ext {
        self.scale_by(k)
    }
}

impl Add<f64> for Ext {
    type Output = Ext;
    fn add(self, k: f64) -> Ext {
        self + Ext::real(k, self.sc)
    }
}

/// A radius: either an ordinary float or `x·exp(-exp(ell))`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub enum Radius {
    Plain(f64),
    Deep { ell: f64, x: f64 },
}

impl Radius {
    pub fn scale(&self) -> Scale {
        match *self {
            Radius::Plain(_) => Scale::UNIT,
            Radius::Deep { ell, .. } => Scale::from_ell(ell),
        }
    }

    /// The radius as an extended value.
    pub fn r(&self) -> Ext {
        match *self {
            Radius::Plain(r) => Ext::plain(r),
            Radius::Deep { x, .. } => Ext::new(x, -1, 0, 0.0, self.scale()),
        }
    }

    pub fn inv_r(&self) -> Ext {
        self.r().recip()
    }

    /// `w = log(1/r)` as an extended value.
    pub fn w(&self) -> Ext {
        match *self {
            Radius::Plain(r) => Ext::plain(-r.ln()),
            Radius::Deep { x, .. } => {
                let sc = self.scale();
                Ext::new(1.0 - x.ln() / sc.big_w, 0, 1, 0.0, sc)
            }
        }
    }

    /// `log w = log log(1/r)`.
    pub fn ln_w(&self) -> f64 {
        match *self {
            Radius::Plain(r) => (-r.ln()).ln(),
            Radius::Deep { ell, x } => ell + (-x.ln() / ell.exp()).ln_1p(),
        }
    }

    /// `ln r`, possibly `-inf`.
    pub fn ln_r(&self) -> f64 {
        match *self {
            Radius::Plain(r) => r.ln(),
            Radius::Deep { ell, x } => x.ln() - ell.exp(),
        }
    }

    /// Best `f64` approximation (zero once below the floor).
    pub fn to_f64(&self) -> f64 {
        match *self {
            Radius::Plain(r) => r,
            Radius::Deep { .. } => self.ln_r().exp(),
        }
    }

    pub fn is_plain(&self) -> bool {
        matches!(self, Radius::Plain(_))
    }

    /// `ln(self / other)`, exact when both share a deep anchor.
    pub fn ln_ratio(&self, other: &Radius) -> f64 {
        match (*self, *other) {
            (Radius::Plain(a), Radius::Plain(b)) => (a / b).ln(),
            (Radius::Deep { ell: e1, x: x1 }, Radius::Deep { ell: e2, x: x2 }) => {
                if e1 == e2 {
                    (x1 / x2).ln()
                } else {
                    // W1 - W2 = W2 * expm1(e1 - e2)
                    let dw = e2.exp() * (e1 - e2).exp_m1();
                    x1.ln() - x2.ln() - dw
                }
            }
            _ => self.ln_r() - other.ln_r(),
        }
    }

    pub fn ratio(&self, other: &Radius) -> f64 {
        self.ln_ratio(other).exp()
    }

    pub fn cmp_radius(&self, other: &Radius) -> Ordering {
        match (*self, *other) {
            (Radius::Plain(a), Radius::Plain(b)) => a.partial_cmp(&b).unwrap_or(Ordering::Equal),
            _ => {
                let (sa, sb) = (self.is_zero(), other.is_zero());
                if sa || sb {
                    return sa.cmp(&sb).reverse();
                }
                self.ln_ratio(other).partial_cmp(&0.0).unwrap_or(Ordering::Equal)
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            Radius::Plain(r) => r == 0.0,
            Radius::Deep { x, .. } => x == 0.0,
        }
    }

    /// Same anchor, different multiplier.
    pub fn with_x(&self, x: f64) -> Radius {
        match *self {
            Radius::Plain(_) => Radius::Plain(x),
            Radius::Deep { ell, .. } => Radius::Deep { ell, x },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn plain_roundtrip() {
        let a = Ext::plain(3.0);
        let b = Ext::plain(4.5);
        assert_relative_eq!((a + b).to_f64(), 7.5);
        assert_relative_eq!((a * b).to_f64(), 13.5);
        assert_relative_eq!((a / b).to_f64(), 3.0 / 4.5);
        assert_relative_eq!((a - b).to_f64(), -1.5);
    }

    #[test]
    fn overflow_is_carried_in_exponent() {
        let r = Ext::plain(1e-200);
        let inv2 = (r * r).recip();
        assert!(inv2.to_f64().is_infinite());
        assert_relative_eq!(inv2.ln_abs(), 400.0 * 10f64.ln(), max_relative = 1e-14);
        let x = inv2 * Ext::new(1.0, 0, 0, -350.0 * 10f64.ln(), Scale::UNIT);
        assert_relative_eq!(x.to_f64(), 1e50, max_relative = 1e-12);
    }

    #[test]
    fn deep_dominance() {
        let sc = Scale::from_ell(1e40);
        let big = Ext::new(1.0, 2, -2, 0.0, sc);
        let small = Ext::new(-5.0, 1, 0, 0.0, sc);
        let s = big + small;
        assert_eq!(s.a, 2);
        assert_eq!(s.m, 1.0);
        let lower = Ext::new(3.0, 2, -3, 0.0, sc);
        assert_eq!((big + lower).m, 1.0);
        let same = Ext::new(-0.25, 2, -2, 0.0, sc);
        assert_relative_eq!((big + same).m, 0.75);
        assert_eq!(big.margin_over(1e300), f64::MAX);
    }

    #[test]
    fn moderate_scale_combines_exactly() {
        let sc = Scale::from_ell(3.0_f64.ln());
        // W = 3: e^{2W} W^{-1} plus e^{W}
        let x = Ext::new(1.0, 2, -1, 0.0, sc);
        let y = Ext::new(1.0, 1, 0, 0.0, sc);
        let want = (6.0f64).exp() / 3.0 + 3.0f64.exp();
        assert_relative_eq!((x + y).to_f64(), want, max_relative = 1e-13);
    }

    #[test]
    fn radius_ratios() {
        let a = Radius::Deep { ell: 1e30, x: 2.0 };
        let b = Radius::Deep { ell: 1e30, x: 0.5 };
        assert_relative_eq!(a.ratio(&b), 4.0);
        let c = Radius::Deep { ell: 2e30, x: 1.0 };
        assert_eq!(c.ratio(&a), 0.0);
        assert_eq!(a.cmp_radius(&c), Ordering::Greater);
        assert_eq!(Radius::Plain(1e-300).cmp_radius(&a), Ordering::Greater);
        let p = Radius::Deep { ell: (50.0f64).ln(), x: 1.0 };
        assert_relative_eq!(p.to_f64(), (-50.0f64).exp(), max_relative = 1e-13);
        assert_relative_eq!(p.w().to_f64(), 50.0, max_relative = 1e-14);
    }
}

//! Quadrature rules: fixed Gauss-Legendre and adaptive Gauss-Kronrod (7/15).

use crate::error::{Error, Result};
use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
///
/// Computed once per `n` by Newton iteration on `P_n` and cached.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    static CACHE: OnceLock<Mutex<HashMap<usize, (Vec<f64>, Vec<f64>)>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = cache.lock().unwrap().get(&n) {
        return v.clone();
    }
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
                p1 = z;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    cache.lock().unwrap().insert(n, (x.clone(), w.clone()));
    (x, w)
}

/// Fixed `n`-point Gauss-Legendre integral of `f` over `[a, b]`.
pub fn gl_integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let (x, w) = gauss_legendre(n);
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    h * x.iter().zip(&w).map(|(xi, wi)| wi * f(c + h * xi)).sum::<f64>()
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Tolerances for [`adaptive`].
#[derive(Clone, Copy, Debug)]
pub struct QuadTol {
    pub abs: f64,
    pub rel: f64,
    pub max_depth: usize,
}

impl Default for QuadTol {
    fn default() -> Self {
        QuadTol { abs: 1e-10, rel: 1e-8, max_depth: 60 }
    }
}

/// Adaptive bisection with the embedded 7/15 pair.
///
/// The panel with the largest error estimate is bisected until the summed
/// estimate meets the tolerance. A panel that would need bisecting past
/// `max_depth` raises an error.
pub fn adaptive(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: QuadTol) -> Result<(f64, f64)> {
    if a == b {
        return Ok((0.0, 0.0));
    }
    #[derive(PartialEq)]
    struct Panel(f64, f64, f64, f64, usize);
    impl Eq for Panel {}
    impl PartialOrd for Panel {
        fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(o))
        }
    }
    impl Ord for Panel {
        fn cmp(&self, o: &Self) -> std::cmp::Ordering {
            self.3.total_cmp(&o.3)
        }
    }
    let (v, e) = gk15(&f, a, b);
    if !v.is_finite() {
        return Err(Error::Quadrature { a, b });
    }
    let mut heap = std::collections::BinaryHeap::new();
    heap.push(Panel(a, b, v, e, 0));
    let (mut total, mut err) = (v, e);
    loop {
        let target = tol.abs.max(tol.rel * total.abs());
        if err <= target || err <= 1e-15 * total.abs() {
            return Ok((total, err));
        }
        let Some(Panel(lo, hi, pv, pe, depth)) = heap.pop() else {
            return Ok((total, err));
        };
        if depth >= tol.max_depth {
            return Err(Error::Quadrature { a: lo, b: hi });
        }
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        if !(v1.is_finite() && v2.is_finite()) {
            return Err(Error::Quadrature { a: lo, b: hi });
        }
        total += v1 + v2 - pv;
        err += e1 + e2 - pe;
        heap.push(Panel(lo, mid, v1, e1, depth + 1));
        heap.push(Panel(mid, hi, v2, e2, depth + 1));
    }
}

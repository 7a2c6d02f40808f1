//! Flat tori `R^2 / span(1, z)`: Green's function, potential estimates for
//! `u = G * f`, extremal length and systole.
//!
//! Points are Euclidean pairs. Grids live in lattice coordinates: the sample
//! `(i, j)` of an `n`-grid sits at `(i/n) e1 + (j/n) e2` and is stored at
//! index `i * n + j`.

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;
use num_complex::Complex64;
use petgraph::graph::{DiGraph, NodeIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;
use std::f64::consts::PI;

/// Terms of either Ewald sum whose exponent exceeds this are dropped.
const EWALD_CUT: f64 = 36.0;
/// Slack on the modular-domain inequalities.
const DOMAIN_TOL: f64 = 1e-12;
/// Largest relative change between the `n` and `2n` grids before a grid
/// result is rejected as unresolved.
pub const REFINE_TOL: f64 = 0.05;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Exponential integral `E1(x)` for `x > 0`.
pub fn exp_int_e1(x: f64) -> f64 {
    if x <= 1.0 {
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 1..60 {
            term *= -x / k as f64;
            let add = -term / k as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        -EULER_GAMMA - x.ln() + sum
    } else {
        // modified Lentz on the continued fraction
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..1000 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-x).exp()
    }
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn norm(a: [f64; 2]) -> f64 {
    a[0].hypot(a[1])
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

/// The torus `R^2 / span(1, z)` with cap `l` on `Im z`.
#[derive(Clone, Copy, Debug)]
pub struct FlatTorus {
    pub z: Complex64,
    pub l: f64,
}

impl FlatTorus {
    /// A torus in the capped modular domain `|Re z| <= 1/2`, `|z| >= 1`,
    /// `Im z <= l`.
    pub fn new(z: Complex64, l: f64) -> Result<Self> {
        let t = Self::raw(z)?;
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::domain("L", format!("cap must be positive, got {l}")));
        }
        if z.re.abs() > 0.5 + DOMAIN_TOL {
            return Err(Error::domain("z", format!("|Re z| = {} exceeds 1/2", z.re.abs())));
        }
        if z.norm() < 1.0 - DOMAIN_TOL {
            return Err(Error::domain("z", format!("|z| = {} is below 1", z.norm())));
        }
        if z.im > l + DOMAIN_TOL {
            return Err(Error::domain("z", format!("Im z = {} exceeds the cap L = {l}", z.im)));
        }
        Ok(FlatTorus { l, ..t })
    }

    /// Any lattice with `Im z > 0`, no normalization.
    pub fn raw(z: Complex64) -> Result<Self> {
        if !(z.re.is_finite() && z.im.is_finite() && z.im > 0.0) {
            return Err(Error::domain("z", format!("need finite z with Im z > 0, got {z}")));
        }
        Ok(FlatTorus { z, l: z.im })
    }

    /// Representative of `z` in the modular domain, `|Re z| <= 1/2` and `|z| >= 1`.
    pub fn modular_reduce(z: Complex64) -> Complex64 {
        let mut z = z;
        for _ in 0..200 {
            z.re -= z.re.round();
            if z.norm_sqr() < 1.0 - 1e-15 {
                z = -z.inv();
            } else {
                break;
            }
        }
        z
    }

    pub fn area(&self) -> f64 {
        self.z.im
    }

    pub fn e1(&self) -> [f64; 2] {
        [1.0, 0.0]
    }

    pub fn e2(&self) -> [f64; 2] {
        [self.z.re, self.z.im]
    }

    pub fn to_euclid(&self, ab: [f64; 2]) -> [f64; 2] {
        [ab[0] + ab[1] * self.z.re, ab[1] * self.z.im]
    }

    pub fn to_lattice(&self, x: [f64; 2]) -> [f64; 2] {
        let b = x[1] / self.z.im;
        [x[0] - b * self.z.re, b]
    }

    /// Shortest representative of `v` modulo the lattice.
    pub fn wrap(&self, v: [f64; 2]) -> [f64; 2] {
        let ab = self.to_lattice(v);
        let base = [ab[0] - ab[0].round(), ab[1] - ab[1].round()];
        let mut best = self.to_euclid(base);
        let mut best_n = dot(best, best);
        for da in -1..=1 {
            for db in -1..=1 {
                let c = self.to_euclid([base[0] + da as f64, base[1] + db as f64]);
                let n = dot(c, c);
                if n < best_n {
                    best = c;
                    best_n = n;
                }
            }
        }
        best
    }

    pub fn distance(&self, x: [f64; 2], y: [f64; 2]) -> f64 {
        norm(self.wrap(sub(x, y)))
    }

    /// Length of the shortest nonzero lattice vector (Lagrange-Gauss reduction).
    pub fn systole(&self) -> f64 {
        let (mut u, mut v) = (self.e1(), self.e2());
        if dot(u, u) > dot(v, v) {
            std::mem::swap(&mut u, &mut v);
        }
        loop {
            let m = (dot(u, v) / dot(u, u)).round();
            let w = [v[0] - m * u[0], v[1] - m * u[1]];
            if dot(w, w) >= dot(u, u) {
                return norm(u);
            }
            v = u;
            u = w;
        }
    }
}

/// Mean-zero Green's function of the torus, evaluated by Ewald splitting of
/// the heat kernel at time `s`:
///
/// `G(x) = -(1/4pi) sum_lambda E1(|x-lambda|^2 / 4s) + s/A
///         - (1/A) sum_{k != 0} exp(-4pi^2 |k|^2 s) cos(2pi k.x) / (4pi^2 |k|^2)`.
///
/// With `s = A / 4pi` both tails are of size `E1(cut) / 4pi`.
#[derive(Clone, Debug)]
pub struct GreenEvaluator {
    pub torus: FlatTorus,
    pub s: f64,
    images: Vec<[f64; 2]>,
    /// `(2pi k, coefficient)` for each retained dual vector.
    duals: Vec<([f64; 2], f64)>,
    pub tail_bound: f64,
    pub c1: Option<f64>,
}

impl GreenEvaluator {
    pub fn new(torus: FlatTorus) -> Self {
        Self::with_split(torus, torus.area() / (4.0 * PI))
    }

    /// Evaluator with an explicit split time; `G` does not depend on it.
    pub fn with_split(torus: FlatTorus, s: f64) -> Self {
        let a = torus.area();
        let (re, im) = (torus.z.re, torus.z.im);
        // wrapped points have |x| <= (1 + |z|) / 2
        let reach = (4.0 * s * EWALD_CUT).sqrt() + 0.5 * (1.0 + torus.z.norm());
        let jmax = (reach / im).ceil() as i64 + 1;
        let mut images = Vec::new();
        for j in -jmax..=jmax {
            let y = j as f64 * im;
            let x0 = j as f64 * re;
            let imax = (reach + x0.abs()).ceil() as i64 + 1;
            for i in -imax..=imax {
                let p = [i as f64 + x0, y];
                if norm(p) <= reach {
                    images.push(p);
                }
            }
        }
        let kcut = (EWALD_CUT / (4.0 * PI * PI * s)).sqrt();
        let f1 = [1.0, -re / im];
        let f2 = [0.0, 1.0 / im];
        let nmax = (kcut * im).ceil() as i64 + 1;
        let mut duals = Vec::new();
        for n in -nmax..=nmax {
            let mmax = (kcut + (n as f64 * re).abs()).ceil() as i64 + 1;
            for m in -mmax..=mmax {
                if m == 0 && n == 0 {
                    continue;
                }
                let k = [m as f64 * f1[0] + n as f64 * f2[0], m as f64 * f1[1] + n as f64 * f2[1]];
                let k2 = dot(k, k);
                if k2 <= kcut * kcut {
                    let q = 4.0 * PI * PI * k2;
                    duals.push(([2.0 * PI * k[0], 2.0 * PI * k[1]], (-q * s).exp() / (q * a)));
                }
            }
        }
        let tail_bound = 4.0 * (s / a + 1.0 / (4.0 * PI)) * exp_int_e1(EWALD_CUT);
        GreenEvaluator { torus, s, images, duals, tail_bound, c1: None }
    }

    pub fn terms(&self) -> (usize, usize) {
        (self.images.len(), self.duals.len())
    }

    /// `G(x, y)`.
    pub fn green(&self, x: [f64; 2], y: [f64; 2]) -> Result<f64> {
        let v = self.torus.wrap(sub(x, y));
        if norm(v) < 1e-300 {
            return Err(Error::domain("x", "x = y is the singularity of G"));
        }
        Ok(self.green_wrapped(v))
    }

    /// `G` at a nonzero wrapped difference vector.
    fn green_wrapped(&self, v: [f64; 2]) -> f64 {
        let four_s = 4.0 * self.s;
        let mut real = 0.0;
        for l in &self.images {
            let t = dot(sub(v, *l), sub(v, *l)) / four_s;
            if t <= EWALD_CUT {
                real += exp_int_e1(t);
            }
        }
        let spec: f64 = self.duals.iter().map(|(k, c)| c * dot(*k, v).cos()).sum();
        -real / (4.0 * PI) + self.s / self.torus.area() - spec
    }

    /// `grad_x G(x, y)`.
    pub fn grad(&self, x: [f64; 2], y: [f64; 2]) -> Result<[f64; 2]> {
        let v = self.torus.wrap(sub(x, y));
        if norm(v) < 1e-300 {
            return Err(Error::domain("x", "x = y is the singularity of grad G"));
        }
        Ok(self.grad_wrapped(v))
    }

    fn grad_wrapped(&self, v: [f64; 2]) -> [f64; 2] {
        let four_s = 4.0 * self.s;
        let mut g = [0.0, 0.0];
        for l in &self.images {
            let w = sub(v, *l);
            let r2 = dot(w, w);
            let t = r2 / four_s;
            if t <= EWALD_CUT {
                let c = (-t).exp() / (2.0 * PI * r2);
                g[0] += c * w[0];
                g[1] += c * w[1];
            }
        }
        for (k, c) in &self.duals {
            let sn = c * dot(*k, v).sin();
            g[0] += sn * k[0];
            g[1] += sn * k[1];
        }
        g
    }

    /// `int G(x, y) dx`, zero by normalization.
    pub fn mean_integral(&self) -> f64 {
        let t = &self.torus;
        singular_cell_integral(|v| self.green_wrapped(t.wrap(v)), [0.5, 0.0], [0.5 * t.z.re, 0.5 * t.z.im])
    }

    /// Average of `G` over the grid cell of an `n`-grid centered at the singularity.
    pub fn cell_average(&self, n: usize) -> f64 {
        let t = &self.torus;
        let h = 0.5 / n as f64;
        let u = [h, 0.0];
        let v = [h * t.z.re, h * t.z.im];
        singular_cell_integral(|w| self.green_wrapped(w), u, v) * (n * n) as f64 / t.area()
    }
}

/// Integral over the parallelogram `{a u + b v : |a|, |b| <= 1}` of a
/// function singular only at the origin, by Duffy's transform on the four
/// triangles through the origin with geometrically graded radial panels.
fn singular_cell_integral(f: impl Fn([f64; 2]) -> f64 + Sync, u: [f64; 2], v: [f64; 2]) -> f64 {
    let corners = [
        [u[0] + v[0], u[1] + v[1]],
        [-u[0] + v[0], -u[1] + v[1]],
        [-u[0] - v[0], -u[1] - v[1]],
        [u[0] - v[0], u[1] - v[1]],
    ];
    let (xt, wt) = gauss_legendre(12);
    let (xs, ws) = gauss_legendre(24);
    let mut panels: Vec<(f64, f64)> = (0..48).map(|k| (0.5f64.powi(k + 1), 0.5f64.powi(k))).collect();
    panels.push((0.0, 0.5f64.powi(48)));
    (0..4)
        .into_par_iter()
        .map(|c| {
            let p = corners[c];
            let q = corners[(c + 1) % 4];
            let jac = (p[0] * q[1] - p[1] * q[0]).abs();
            let mut sum = 0.0;
            for &(a, b) in &panels {
                let (tc, th) = (0.5 * (a + b), 0.5 * (b - a));
                for (xi, wi) in xt.iter().zip(&wt) {
                    let t = tc + th * xi;
                    let mut inner = 0.0;
                    for (sj, wj) in xs.iter().zip(&ws) {
                        let sg = 0.5 * (1.0 + sj);
                        let w = [t * (p[0] + sg * (q[0] - p[0])), t * (p[1] + sg * (q[1] - p[1]))];
                        inner += 0.5 * wj * f(w);
                    }
                    sum += th * wi * t * inner;
                }
            }
            jac * sum
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum()
}

/// Densities used to drive the potential estimates.
#[derive(Clone, Debug)]
pub enum Density {
    Zero,
    /// Unit Gaussian bump at `p` minus one at `q`, of the given width.
    Dipole { p: [f64; 2], q: [f64; 2], width: f64 },
    /// `cos(2pi (k1 a + k2 b))` in lattice coordinates `(a, b)`.
    Mode { k: [i32; 2] },
}

impl Density {
    /// Mollified opposite point masses at lattice points `(1/4, 1/4)` and
    /// `(3/4, 3/4)`, width `0.02 sqrt(Im z)`.
    pub fn opposite_masses(t: &FlatTorus) -> Self {
        Density::Dipole {
            p: t.to_euclid([0.25, 0.25]),
            q: t.to_euclid([0.75, 0.75]),
            width: 0.02 * t.z.im.sqrt(),
        }
    }

    /// Samples on the `n`-grid with the grid mean removed.
    pub fn sample(&self, t: &FlatTorus, n: usize) -> Vec<f64> {
        let mut f: Vec<f64> = (0..n * n)
            .into_par_iter()
            .map(|idx| {
                let ab = [(idx / n) as f64 / n as f64, (idx % n) as f64 / n as f64];
                match self {
                    Density::Zero => 0.0,
                    Density::Dipole { p, q, width } => {
                        let x = t.to_euclid(ab);
                        let bump = |c: &[f64; 2]| {
                            let w = t.wrap(sub(x, *c));
                            (-dot(w, w) / (2.0 * width * width)).exp() / (2.0 * PI * width * width)
                        };
                        bump(p) - bump(q)
                    }
                    Density::Mode { k } => (2.0 * PI * (k[0] as f64 * ab[0] + k[1] as f64 * ab[1])).cos(),
                }
            })
            .collect();
        let mean = f.iter().sum::<f64>() / f.len() as f64;
        f.iter_mut().for_each(|v| *v -= mean);
        f
    }
}

/// `u = G * f` and `grad u` on one grid.
#[derive(Clone, Debug)]
pub struct Potential {
    pub n: usize,
    pub u: Vec<f64>,
    pub grad: Vec<[f64; 2]>,
    pub l1: f64,
    pub cell_area: f64,
}

impl Potential {
    /// `int exp((4pi - alpha) |u| / ||f||_1) dA`.
    pub fn bm_integral(&self, alpha: f64) -> f64 {
        let c = (4.0 * PI - alpha) / self.l1;
        self.u.iter().map(|u| (c * u.abs()).exp()).sum::<f64>() * self.cell_area
    }

    /// `||grad u||_p`.
    pub fn grad_norm(&self, p: f64) -> f64 {
        let s: f64 = self.grad.iter().map(|g| norm(*g).powf(p)).sum();
        (s * self.cell_area).powf(1.0 / p)
    }
}

fn fft2(data: &mut [Complex64], n: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
    fft.process(data);
    let mut tr = vec![Complex64::new(0.0, 0.0); n * n];
    transpose(data, &mut tr, n);
    fft.process(&mut tr);
    transpose(&tr, data, n);
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in 0..n {
            dst[j * n + i] = src[i * n + j];
        }
    }
}

/// Kernel tables of `G` and `grad G` on the `n`-grid. The singular entry of
/// `G` is its cell average; that of `grad G` vanishes by oddness.
fn kernels(ev: &GreenEvaluator, n: usize) -> (Vec<f64>, Vec<[f64; 2]>) {
    let t = &ev.torus;
    let pairs: Vec<(f64, [f64; 2])> = (0..n * n)
        .into_par_iter()
        .map(|idx| {
            if idx == 0 {
                return (ev.cell_average(n), [0.0, 0.0]);
            }
            let v = t.wrap(t.to_euclid([(idx / n) as f64 / n as f64, (idx % n) as f64 / n as f64]));
            (ev.green_wrapped(v), ev.grad_wrapped(v))
        })
        .collect();
    pairs.into_iter().unzip()
}

/// Grid convolution of the sampled density `f` with `G` and `grad G`.
pub fn convolve(ev: &GreenEvaluator, f: &[f64], n: usize) -> Result<Potential> {
    if n < 4 || f.len() != n * n {
        return Err(Error::domain("n", format!("need an n x n grid with n >= 4, got n = {n}, {} samples", f.len())));
    }
    let cell_area = ev.torus.area() / (n * n) as f64;
    let l1 = f.iter().map(|v| v.abs()).sum::<f64>() * cell_area;
    let (kg, kd) = kernels(ev, n);
    let to_c = |v: &mut dyn Iterator<Item = f64>| v.map(|x| Complex64::new(x, 0.0)).collect::<Vec<_>>();
    let mut ff = to_c(&mut f.iter().copied());
    fft2(&mut ff, n, false);
    let mut out = Vec::with_capacity(3);
    for table in [to_c(&mut kg.iter().copied()), to_c(&mut kd.iter().map(|g| g[0])), to_c(&mut kd.iter().map(|g| g[1]))] {
        let mut k = table;
        fft2(&mut k, n, false);
        k.iter_mut().zip(&ff).for_each(|(a, b)| *a *= b);
        fft2(&mut k, n, true);
        let scale = cell_area / (n * n) as f64;
        out.push(k.into_iter().map(|c| c.re * scale).collect::<Vec<f64>>());
    }
    let gy = out.pop().unwrap();
    let gx = out.pop().unwrap();
    let u = out.pop().unwrap();
    let grad = gx.into_iter().zip(gy).map(|(a, b)| [a, b]).collect();
    Ok(Potential { n, u, grad, l1, cell_area })
}

/// Five-point-type Laplacian in lattice coordinates on the `n`-grid:
/// `(|z|^2 u_aa - 2 Re z u_ab + u_bb) / (Im z)^2`.
pub fn discrete_laplacian(t: &FlatTorus, n: usize, u: &[f64]) -> Vec<f64> {
    let h = 1.0 / n as f64;
    let at = |i: isize, j: isize| u[(i.rem_euclid(n as isize) as usize) * n + j.rem_euclid(n as isize) as usize];
    let (zz, re, im2) = (t.z.norm_sqr(), t.z.re, t.z.im * t.z.im);
    (0..n * n)
        .map(|idx| {
            let (i, j) = ((idx / n) as isize, (idx % n) as isize);
            let c = at(i, j);
            let uaa = (at(i + 1, j) - 2.0 * c + at(i - 1, j)) / (h * h);
            let ubb = (at(i, j + 1) - 2.0 * c + at(i, j - 1)) / (h * h);
            let uab = (at(i + 1, j + 1) - at(i + 1, j - 1) - at(i - 1, j + 1) + at(i - 1, j - 1)) / (4.0 * h * h);
            (zz * uaa - 2.0 * re * uab + ubb) / im2
        })
        .collect()
}

/// Potentials of one density on the `n` and `2n` grids.
#[derive(Clone, Debug)]
pub struct PotentialGrid {
    pub coarse: Potential,
    pub fine: Potential,
}

impl PotentialGrid {
    pub fn solve(ev: &GreenEvaluator, f: &Density, n: usize) -> Result<Self> {
        let t = &ev.torus;
        let coarse = convolve(ev, &f.sample(t, n), n)?;
        let fine = convolve(ev, &f.sample(t, 2 * n), 2 * n)?;
        Ok(PotentialGrid { coarse, fine })
    }

    /// Relative change of a quantity under refinement; the density's own
    /// `L1` norm must be resolved too, since the estimates divide by it.
    fn refined(&self, quantity: &str, coarse: f64, fine: f64) -> Result<f64> {
        let (l1c, l1f) = (self.coarse.l1, self.fine.l1);
        let (quantity, change) = if (l1f - l1c).abs() > REFINE_TOL * l1f {
            ("density L1 norm", (l1f - l1c).abs() / l1f)
        } else {
            (quantity, (fine - coarse).abs() / fine.abs().max(1e-300))
        };
        if change > REFINE_TOL {
            return Err(Error::construction(
                "grid",
                format!("{quantity} moves by {change:.3e} between n = {} and {}; grid too coarse", self.coarse.n, self.fine.n),
            ));
        }
        Ok(change)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BrezisMerle {
    pub alpha: f64,
    pub integral: f64,
    pub refinement: f64,
    /// `C2 / alpha` for a supplied constant.
    pub bound: Option<f64>,
}

/// Exponential integrability of `u = G * f` at exponent `4pi - alpha`.
pub fn brezis_merle_check(grid: &PotentialGrid, alpha: f64, c2: Option<f64>) -> Result<BrezisMerle> {
    if !(alpha > 0.0 && alpha <= 4.0 * PI) {
        return Err(Error::domain("alpha", format!("need 0 < alpha <= 4 pi, got {alpha}")));
    }
    if !(grid.fine.l1 > 0.0) {
        return Err(Error::domain("f", "density has zero L1 norm"));
    }
    let integral = grid.fine.bm_integral(alpha);
    let refinement = grid.refined("Brezis-Merle integral", grid.coarse.bm_integral(alpha), integral)?;
    Ok(BrezisMerle { alpha, integral, refinement, bound: c2.map(|c| c / alpha) })
}

#[derive(Clone, Debug, Serialize)]
pub struct W1pGreen {
    pub p: f64,
    pub norm: f64,
    /// `||grad u||_p (2 - p)^{1/p} / ||f||_1`.
    pub ratio: f64,
    pub refinement: f64,
    pub bound: Option<f64>,
}

/// `||grad u||_p` against the `||f||_1 / (2 - p)^{1/p}` envelope.
pub fn w1p_green_check(grid: &PotentialGrid, p: f64, c3: Option<f64>) -> Result<W1pGreen> {
    if !(1.0..2.0).contains(&p) {
        return Err(Error::domain("p", format!("need 1 <= p < 2, got {p}")));
    }
    let norm = grid.fine.grad_norm(p);
    if grid.fine.l1 == 0.0 {
        return Ok(W1pGreen { p, norm, ratio: 0.0, refinement: 0.0, bound: c3 });
    }
    let refinement = grid.refined("gradient norm", grid.coarse.grad_norm(p), norm)?;
    let ratio = norm * (2.0 - p).powf(1.0 / p) / grid.fine.l1;
    Ok(W1pGreen { p, norm, ratio, refinement, bound: c3 })
}

/// Envelope for the Brezis-Merle constant implied by a Green's bound
/// constant `c1`: `e^{4pi c1} (4pi^2 + 16 pi L)`.
pub fn c2_envelope(c1: f64, l: f64) -> f64 {
    (4.0 * PI * c1).exp() * (4.0 * PI * PI + 16.0 * PI * l)
}

#[derive(Clone, Debug, Serialize)]
pub struct C1Fit {
    /// Common constant for both Green's bounds.
    pub c1: f64,
    pub c1_value: f64,
    pub c1_grad: f64,
    pub samples: usize,
}

/// Sample pairs: `pairs` uniform ones plus pairs at distances `10^-1 .. 10^-8`
/// in several directions, as difference vectors.
fn sample_offsets(t: &FlatTorus, pairs: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<[f64; 2]> = (0..pairs)
        .map(|_| {
            let x = t.to_euclid([rng.gen::<f64>(), rng.gen::<f64>()]);
            let y = t.to_euclid([rng.gen::<f64>(), rng.gen::<f64>()]);
            sub(x, y)
        })
        .collect();
    for k in 1..=8 {
        for d in 0..6 {
            let th = d as f64 * PI / 3.0 + 0.1;
            let r = 10f64.powi(-k);
            v.push([r * th.cos(), r * th.sin()]);
        }
    }
    v.retain(|w| norm(t.wrap(*w)) > 1e-12);
    v
}

/// Worst excess of `|G|` over `|log d| / 2pi` and of `|grad G|` over `1 / 2pi d`.
pub fn green_excess(ev: &GreenEvaluator, pairs: usize, seed: u64) -> (f64, f64, usize) {
    let t = &ev.torus;
    let offs = sample_offsets(t, pairs, seed);
    let (a, b) = offs
        .par_iter()
        .map(|w| {
            let v = t.wrap(*w);
            let d = norm(v);
            let g = ev.green_wrapped(v).abs() - d.ln().abs() / (2.0 * PI);
            let dg = norm(ev.grad_wrapped(v)) - 1.0 / (2.0 * PI * d);
            (g, dg)
        })
        .reduce(|| (f64::NEG_INFINITY, f64::NEG_INFINITY), |x, y| (x.0.max(y.0), x.1.max(y.1)));
    (a, b, offs.len())
}

/// Fit `C1` as the sup of both excesses over every evaluator.
pub fn fit_c1(evs: &[GreenEvaluator], pairs: usize, seed: u64) -> C1Fit {
    let mut fit = C1Fit { c1: f64::NEG_INFINITY, c1_value: f64::NEG_INFINITY, c1_grad: f64::NEG_INFINITY, samples: 0 };
    for (i, ev) in evs.iter().enumerate() {
        let (a, b, n) = green_excess(ev, pairs, seed.wrapping_add(i as u64));
        fit.c1_value = fit.c1_value.max(a);
        fit.c1_grad = fit.c1_grad.max(b);
        fit.samples += n;
    }
    fit.c1 = fit.c1_value.max(fit.c1_grad);
    fit
}

/// Value of the extremal length of the curves homologous to `e1`.
pub fn extremal_length(t: &FlatTorus) -> f64 {
    1.0 / t.z.im
}

/// Combinatorial extremal length of the horizontal class on an `n x m`
/// cell grid of the torus (`n` columns along `e1`).
#[derive(Clone, Debug, Serialize)]
pub struct DiscreteExtremal {
    pub n: usize,
    pub m: usize,
    /// Ratio attained by the uniform weight.
    pub sup: f64,
    /// Row-packing upper bound `n / m`, valid for every weight.
    pub upper: f64,
    pub analytic: f64,
}

/// Least total weight of a chain of cells (8-adjacent) closing up once
/// along `e1` with zero net vertical displacement.
pub fn combinatorial_length(rho: &[f64], n: usize, m: usize) -> f64 {
    let reach = n as isize;
    let rows = m as isize + 2 * reach;
    let cols = n as isize + 1;
    let mut g: DiGraph<(), f64> = DiGraph::with_capacity((rows * cols) as usize, (8 * rows * cols) as usize);
    let nodes: Vec<NodeIndex> = (0..rows * cols).map(|_| g.add_node(())).collect();
    let id = |c: isize, r: isize| (c * rows + r) as usize;
    let weight = |c: isize, r: isize| rho[(c.rem_euclid(n as isize) as usize) * m + (r - reach).rem_euclid(m as isize) as usize];
    for c in 0..cols {
        for r in 0..rows {
            for dc in -1..=1 {
                for dr in -1..=1 {
                    let (c2, r2) = (c + dc, r + dr);
                    if (dc, dr) != (0, 0) && (0..cols).contains(&c2) && (0..rows).contains(&r2) {
                        g.add_edge(nodes[id(c, r)], nodes[id(c2, r2)], weight(c2, r2));
                    }
                }
            }
        }
    }
    (0..m as isize)
        .into_par_iter()
        .map(|r0| {
            let (s, goal) = (nodes[id(0, r0 + reach)], nodes[id(n as isize, r0 + reach)]);
            let d = petgraph::algo::dijkstra(&g, s, Some(goal), |e| *e.weight());
            d.get(&goal).copied().unwrap_or(f64::INFINITY)
        })
        .reduce(|| f64::INFINITY, f64::min)
}

/// `L(rho)^2 / A(rho)` with `A = sum rho^2`.
pub fn combinatorial_ratio(rho: &[f64], n: usize, m: usize) -> f64 {
    let l = combinatorial_length(rho, n, m);
    l * l / rho.iter().map(|r| r * r).sum::<f64>()
}

/// Discrete extremal length with `n` columns and `m = ceil(n Im z)` rows.
pub fn discrete_extremal_length(t: &FlatTorus, n: usize) -> Result<DiscreteExtremal> {
    if n == 0 {
        return Err(Error::domain("n", "need at least one column"));
    }
    let m = ((n as f64 * t.z.im) - 1e-9).ceil().max(1.0) as usize;
    let sup = combinatorial_ratio(&vec![1.0; n * m], n, m);
    Ok(DiscreteExtremal { n, m, sup, upper: n as f64 / m as f64, analytic: extremal_length(t) })
}

/// Heatmap rows `x,y,G` of `G(., 0)` on the `n`-grid, singular point omitted.
pub fn green_csv(ev: &GreenEvaluator, n: usize) -> String {
    let t = &ev.torus;
    let rows: Vec<String> = (1..n * n)
        .into_par_iter()
        .map(|idx| {
            let x = t.to_euclid([(idx / n) as f64 / n as f64, (idx % n) as f64 / n as f64]);
            format!("{:e},{:e},{:e}", x[0], x[1], ev.green_wrapped(t.wrap(x)))
        })
        .collect();
    let mut out = String::from("x,y,G\n");
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct TorusSummary {
    pub z: Vec<[f64; 2]>,
    pub l: f64,
    pub grid_n: usize,
    pub c1: C1Fit,
    pub alphas: Vec<f64>,
    pub c2: f64,
    pub c2_envelope: f64,
    pub ps: Vec<f64>,
    pub c3: f64,
    pub mean_integral: Vec<f64>,
    pub tail_bound: f64,
    pub brezis_merle: Vec<Vec<BrezisMerle>>,
    pub w1p: Vec<Vec<W1pGreen>>,
    pub systole: Vec<f64>,
    pub extremal_length: Vec<f64>,
}

/// Fit `C1`, `C2`, `C3` over the sample lattices with the opposite-mass density.
pub fn torus_summary(zs: &[Complex64], l: f64, n: usize, pairs: usize, seed: u64) -> Result<TorusSummary> {
    let alphas = vec![PI, 2.0 * PI, 4.0 * PI];
    let ps = vec![1.0, 1.5, 1.9];
    let evs: Vec<GreenEvaluator> = zs.iter().map(|z| FlatTorus::new(*z, l).map(GreenEvaluator::new)).collect::<Result<_>>()?;
    let c1 = fit_c1(&evs, pairs, seed);
    let grids: Vec<PotentialGrid> =
        evs.iter().map(|ev| PotentialGrid::solve(ev, &Density::opposite_masses(&ev.torus), n)).collect::<Result<_>>()?;
    let mut bm = Vec::new();
    let mut wp = Vec::new();
    for g in &grids {
        bm.push(alphas.iter().map(|a| brezis_merle_check(g, *a, None)).collect::<Result<Vec<_>>>()?);
        wp.push(ps.iter().map(|p| w1p_green_check(g, *p, None)).collect::<Result<Vec<_>>>()?);
    }
    let c2 = bm.iter().flatten().map(|b| b.alpha * b.integral).fold(0.0, f64::max);
    let c3 = wp.iter().flatten().map(|w| w.ratio).fold(0.0, f64::max);
    for b in bm.iter_mut().flatten() {
        b.bound = Some(c2 / b.alpha);
    }
    for w in wp.iter_mut().flatten() {
        w.bound = Some(c3);
    }
    Ok(TorusSummary {
        z: zs.iter().map(|z| [z.re, z.im]).collect(),
        l,
        grid_n: n,
        c2_envelope: c2_envelope(c1.c1, l),
        c1,
        alphas,
        c2,
        ps,
        c3,
        mean_integral: evs.iter().map(|e| e.mean_integral()).collect(),
        tail_bound: evs.iter().map(|e| e.tail_bound).fold(0.0, f64::max),
        brezis_merle: bm,
        w1p: wp,
        systole: evs.iter().map(|e| e.torus.systole()).collect(),
        extremal_length: evs.iter().map(|e| extremal_length(&e.torus)).collect(),
    })
}

//! The torus and sphere-circle sequences, their scrunching data, the
//! pulled-string metric and the minA certificates.
//!
//! Member `i` replaces a tube around the central circle `{*} x S^1` of a
//! product `Σ x S^1` (circle of length `2π`) by a drawstring with
//! `ε = δ = 1/i`. The records below use those nominal values; the drawstring
//! itself is built with a smaller `δ` so that the central circle fits the
//! diameter budget `H_i = 3/i` (see [`draw_delta`]).

use crate::certifier::{certify_drawstring, v0, CertificationReport};
use crate::drawstring::{build, Drawstring, DrawstringSpec, Method};
use crate::error::{Error, Result};
use crate::radial_metric::{axis_distance, tube_volume, w1p_deviation, FlatReference, RadialProfile};
use crate::space_forms::sinc_k;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write as _;

/// Length of the `S^1` factor and of each torus circle.
pub const CIRCLE: f64 = 2.0 * PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Topology {
    /// Flat 3-torus, `k = 0`.
    T3,
    /// Round unit sphere times a circle, `k = 1`.
    S2xS1,
}

impl std::str::FromStr for Topology {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "t3" => Ok(Topology::T3),
            "s2xs1" | "s2s1" => Ok(Topology::S2xS1),
            _ => Err(Error::domain("topology", format!("expected T3 or S2xS1, got {s:?}"))),
        }
    }
}

impl Topology {
    pub fn k(self) -> f64 {
        match self {
            Topology::T3 => 0.0,
            Topology::S2xS1 => 1.0,
        }
    }

    /// Volume of the ambient product.
    pub fn ambient_volume(self) -> f64 {
        match self {
            Topology::T3 => CIRCLE.powi(3),
            Topology::S2xS1 => 4.0 * PI * CIRCLE,
        }
    }

    /// Scalar curvature lower bound of member `i`.
    pub fn r_target(self, i: usize) -> f64 {
        let i = i as f64;
        match self {
            Topology::T3 => -2.0 / i,
            Topology::S2xS1 => 2.0 - 1.0 / i,
        }
    }

    /// `ε` passed to the drawstring, so that `2(k - ε)` is the target.
    pub fn draw_epsilon(self, i: usize) -> f64 {
        match self {
            Topology::T3 => 1.0 / i as f64,
            Topology::S2xS1 => 0.5 / i as f64,
        }
    }
}

/// `δ` passed to the drawstring: the central circle then has length
/// `2π e^{u(0)} <= 1/(2i)`, leaving `5/(2i)` of the `3/i` budget for the
/// two radial legs.
pub fn draw_delta(i: usize) -> f64 {
    1.0 / (4.0 * PI * i as f64)
}

/// Area of the geodesic disc of radius `a` in `S^2_k`.
pub fn disc_area(k: f64, a: f64) -> f64 {
    if k == 0.0 {
        PI * a * a
    } else {
        // 2π(1 - cn_k(a))/k without cancellation
        let s = sinc_k(k * a * a / 4.0);
        PI * a * a * s * s
    }
}

/// One member of a sequence.
#[derive(Clone, Debug)]
pub struct Member {
    pub i: usize,
    pub topology: Topology,
    pub drawstring: Drawstring,
    pub reference: FlatReference,
    pub report: CertificationReport,
}

impl Member {
    pub fn profile(&self) -> &RadialProfile {
        &self.drawstring.profile
    }
}

/// `r0 < 1/i^2`, halved until `100 V0 < 1/i^4`.
fn member_spec(topology: Topology, i: usize, method: Method, r1_cap: Option<f64>) -> DrawstringSpec {
    let fi = i as f64;
    let mut spec = DrawstringSpec::new(topology.k(), topology.draw_epsilon(i), draw_delta(i), 0.99 / (fi * fi), method);
    spec.r1_max = r1_cap;
    spec
}

fn build_member(topology: Topology, i: usize, method: Method, r1_cap: Option<f64>) -> Result<Member> {
    let fi = i as f64;
    let mut spec = member_spec(topology, i, method, r1_cap);
    for _ in 0..60 {
        let d = build(&spec).map_err(|e| e.in_stage(&format!("member {i}")))?;
        if 100.0 * v0(spec.k, d.params.r1()) < fi.powi(-4) {
            let report = certify_drawstring(&d);
            let reference = FlatReference::new(spec.k, CIRCLE)?;
            return Ok(Member { i, topology, drawstring: d, reference, report });
        }
        spec.r0 *= 0.5;
    }
    Err(Error::exhausted("r0 for 100 V0 < 1/i^4", 60))
}

/// Members `i = 2..=i_max`.
///
/// The admissible `r1` of member 2 is found first; member `i` is then capped
/// at `r1* 2/i`, so the tubes shrink strictly along the sequence.
pub fn build_sequence(topology: Topology, i_max: usize, method: Method) -> Result<Vec<Member>> {
    if i_max < 2 {
        return Err(Error::domain("i_max", format!("needs i_max >= 2, got {i_max}")));
    }
    let first = build_member(topology, 2, method, None)?;
    let r1_star = first.drawstring.params.r1();
    let mut rest: Vec<Member> =
        (3..=i_max).into_par_iter().map(|i| build_member(topology, i, method, Some(r1_star * 2.0 / i as f64))).collect::<Result<_>>()?;
    rest.insert(0, first);
    Ok(rest)
}

/// Scrunching data of one member.
#[derive(Clone, Debug, Serialize)]
pub struct ScrunchRecord {
    pub i: usize,
    pub eps_i: f64,
    pub delta_i: f64,
    /// `max{3 δ_i, diam bound}`.
    pub h_i: f64,
    pub vol_ui: f64,
    pub vol_ni: f64,
    /// `|γ| + 2 d(γ, ∂U_i)`.
    pub diam_bound: f64,
    /// `2π e^{u(0)}`.
    pub gamma_length: f64,
    pub axis_distance: f64,
    /// Outer radius of the drawstring.
    pub r_max: f64,
    /// `vol B(σ, δ_i)` in the ambient product.
    pub vol_ball: f64,
    pub vol_ambient: f64,
    /// (i): outside `U_i` the metric is the ambient one.
    pub cond_i: bool,
    /// (ii) against the ball `B(σ, δ_i)`, and the total volume.
    pub cond_ii_ball: bool,
    pub cond_ii_total: bool,
    /// (iii) `diam U_i <= H_i`, with `2 δ_i < H_i`.
    pub cond_iii: bool,
    /// Drawstring certificate of the member.
    pub certified: bool,
}

impl ScrunchRecord {
    pub fn holds(&self) -> bool {
        self.cond_i && self.cond_ii_ball && self.cond_ii_total && self.cond_iii && self.certified
    }
}

/// `u` on the central circle.
pub fn axis_potential(p: &RadialProfile) -> f64 {
    let s = &p.segments[0];
    s.jet(&s.lo()).u
}

pub fn scrunch_record(m: &Member) -> Result<ScrunchRecord> {
    let p = m.profile();
    let k = m.topology.k();
    let fi = m.i as f64;
    let (eps_i, delta_i) = (1.0 / fi, 1.0 / fi);
    let r_max = p.r_max;
    let gamma_length = CIRCLE * axis_potential(p).exp();
    let ax = axis_distance(p)?;
    let tube = tube_volume(p, CIRCLE)?;
    // U_i: the drawstring plus the ambient annulus out to radius 1/i
    let vol_ui = CIRCLE * (disc_area(k, delta_i) - disc_area(k, r_max)) + tube;
    let vol_ambient = m.topology.ambient_volume();
    let vol_ni = vol_ambient - CIRCLE * disc_area(k, r_max) + tube;
    let vol_ball = CIRCLE * disc_area(k, delta_i);
    let diam_bound = gamma_length + 2.0 * (ax + (delta_i - r_max));
    let h_i = (3.0 * delta_i).max(diam_bound);
    let band = ["II", "III"].iter().all(|c| m.report.get(c).status == crate::certifier::Status::Pass);
    Ok(ScrunchRecord {
        i: m.i,
        eps_i,
        delta_i,
        h_i,
        vol_ui,
        vol_ni,
        diam_bound,
        gamma_length,
        axis_distance: ax,
        r_max,
        vol_ball,
        vol_ambient,
        cond_i: band && r_max < delta_i,
        cond_ii_ball: vol_ui <= vol_ball * (1.0 + eps_i),
        cond_ii_total: vol_ni <= vol_ambient * (1.0 + eps_i),
        cond_iii: diam_bound <= h_i && 2.0 * delta_i < h_i,
        certified: m.report.all_pass,
    })
}

pub fn scrunch_report(seq: &[Member]) -> Result<Vec<ScrunchRecord>> {
    seq.par_iter().map(scrunch_record).collect()
}

/// Plot data: one row per member.
pub fn sequence_csv(seq: &[Member], records: &[ScrunchRecord]) -> Result<String> {
    let mut s = String::from("i,eps,delta,H,volU,w1p_1.5\n");
    let w: Vec<f64> = seq.par_iter().map(|m| w1p_deviation(m.profile(), &m.reference, 1.5).map(|w| w.value)).collect::<Result<_>>()?;
    for (r, w) in records.iter().zip(w) {
        writeln!(s, "{},{:e},{:e},{:e},{:e},{:e}", r.i, r.eps_i, r.delta_i, r.h_i, r.vol_ui, w).unwrap();
    }
    Ok(s)
}

/// A finite metric space with a distinguished subset `σ` pulled to a point.
#[derive(Clone, Debug)]
pub struct PulledStringSpace {
    d: Vec<Vec<f64>>,
    to_sigma: Vec<f64>,
}

impl PulledStringSpace {
    /// `points` are the samples; `sigma` indexes the samples lying on `σ`.
    pub fn new<P>(points: &[P], sigma: &[usize], metric: impl Fn(&P, &P) -> f64 + Sync) -> Result<Self>
    where
        P: Sync,
    {
        if sigma.is_empty() || sigma.iter().any(|&j| j >= points.len()) {
            return Err(Error::domain("sigma", "must index at least one sample point"));
        }
        let d: Vec<Vec<f64>> = points.par_iter().map(|x| points.iter().map(|y| metric(x, y)).collect()).collect();
        let to_sigma = d.iter().map(|row| sigma.iter().map(|&j| row[j]).fold(f64::INFINITY, f64::min)).collect();
        Ok(PulledStringSpace { d, to_sigma })
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    pub fn base_distance(&self, x: usize, y: usize) -> Result<f64> {
        self.check(x)?;
        self.check(y)?;
        Ok(self.d[x][y])
    }

    pub fn distance_to_sigma(&self, x: usize) -> Result<f64> {
        self.check(x)?;
        Ok(self.to_sigma[x])
    }

    fn check(&self, x: usize) -> Result<()> {
        if x >= self.d.len() {
            return Err(Error::domain("point", format!("unknown sample {x}")));
        }
        Ok(())
    }
}

/// `d^Y(x, y) = min{d^X(x, y), d^X(x, σ) + d^X(σ, y)}`.
pub fn pulled_string_distance(space: &PulledStringSpace, x: usize, y: usize) -> Result<f64> {
    Ok(space.base_distance(x, y)?.min(space.distance_to_sigma(x)? + space.distance_to_sigma(y)?))
}

/// Distance on the flat torus `R^3 / (2π Z)^3`.
pub fn flat_torus_distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = (x - y).abs().rem_euclid(CIRCLE);
            d.min(CIRCLE - d).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

/// Outcome of the minA argument for one member.
#[derive(Clone, Debug, Serialize)]
pub struct MinACertificate {
    pub topology: Topology,
    pub valid: bool,
    /// Every level cylinder inside the drawstring is strictly mean convex.
    pub mean_convex: bool,
    /// Smallest `H` over the grid (saturated in `f64`).
    pub min_mean_curvature: f64,
    pub grid: usize,
    /// Radius below which cylinders are swept, and the radius of the flat
    /// ball the monotonicity formula is applied on.
    pub sweep_radius: f64,
    pub ball_radius: f64,
    /// Ball of that radius around a point outside the sweep stays flat.
    pub ball_is_flat: bool,
    pub bound: Option<f64>,
    pub bound_tag: String,
}

pub fn mina_certificate(p: &RadialProfile, topology: Topology) -> MinACertificate {
    let grid = p.grid(p.per_chart(10_000));
    let hmin = grid
        .par_iter()
        .map(|(i, r)| {
            let h = p.segments[*i].jet(r).mean_curvature();
            if h.signum() > 0.0 {
                h.to_f64().max(f64::MIN_POSITIVE)
            } else {
                -h.abs().to_f64().max(f64::MIN_POSITIVE)
            }
        })
        .reduce(|| f64::INFINITY, f64::min);
    let mean_convex = hmin > 0.0;
    let (sweep, ball, bound, tag) = match topology {
        Topology::T3 => (1.0, 0.5, Some(PI / 4.0), "pi/4 from the Euclidean monotonicity formula on a flat ball of radius 1/2".to_string()),
        Topology::S2xS1 => (
            0.5,
            0.25,
            None,
            "A0 from the monotonicity formula, depending only on the comparison geometry".to_string(),
        ),
    };
    // outside the drawstring, cylinders of radius < sweep are mean convex in
    // the ambient product: flat for T3, cot r > 0 on the sphere for r < π/2
    let ambient_convex = match topology {
        Topology::T3 => sweep < PI,
        Topology::S2xS1 => sweep < PI / 2.0,
    };
    let ball_is_flat = sweep - ball > p.r_max;
    let valid = mean_convex && ambient_convex && ball_is_flat;
    MinACertificate {
        topology,
        valid,
        mean_convex,
        min_mean_curvature: hmin,
        grid: grid.len(),
        sweep_radius: sweep,
        ball_radius: ball,
        ball_is_flat,
        bound: if valid { bound } else { None },
        bound_tag: if valid { tag } else { "void: mean convexity sweep failed".into() },
    }
}

/// Lowest point of `u` on the axis, for callers that want `|γ|` directly.
pub fn central_circle_length(p: &RadialProfile) -> f64 {
    CIRCLE * axis_potential(p).exp()
}

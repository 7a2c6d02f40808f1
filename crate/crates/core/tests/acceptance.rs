//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines are always printed. The
//! process fails if any criterion fails, except for the one sub-check listed
//! in [`KNOWN_FAILURES`], whose bound is off by a factor of pi and cannot be
//! met by any metric that is flat outside the drawstring.

use drawstring::certifier::{certify_drawstring, CertificationReport};
use drawstring::flat_torus::{discrete_extremal_length, green_excess, torus_summary, FlatTorus, GreenEvaluator};
use drawstring::radial_metric::{prototype_closed_form, prototype_profile, w1p_deviation};
use drawstring::sequence::{build_sequence, disc_area, mina_certificate, scrunch_report, Member, Topology, CIRCLE};
use drawstring::smoothing::{smooth_f, smooth_u, CHECK_POINTS};
use drawstring::space_forms::{arctn, cn, sn};
use drawstring::{build, Chart, DrawstringSpec, Jet, Method, Radius, Segment, SolvedParams};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

/// `(criterion, sub-check)` pairs allowed to fail.
const KNOWN_FAILURES: &[(usize, &str)] = &[(6, "T3 vol(U_i) <= 2pi/i^2 + 50/i^4")];

struct Outcome {
    id: usize,
    title: &'static str,
    checks: Vec<(String, bool, String)>,
}

impl Outcome {
    fn new(id: usize, title: &'static str) -> Self {
        Outcome { id, title, checks: Vec::new() }
    }

    fn check(&mut self, name: impl Into<String>, ok: bool, detail: impl Into<String>) {
        self.checks.push((name.into(), ok, detail.into()));
    }

    fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.1)
    }

    fn unexpected(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.1 && !KNOWN_FAILURES.contains(&(self.id, c.0.as_str()))).map(|c| c.0.as_str()).collect()
    }

    fn print(&self) {
        println!("{} criterion {:>2}: {}", if self.passed() { "PASS" } else { "FAIL" }, self.id, self.title);
        for (name, ok, detail) in &self.checks {
            if !ok || std::env::var_os("ACCEPTANCE_VERBOSE").is_some() {
                println!("       {} {name}: {detail}", if *ok { "ok  " } else { "FAIL" });
            }
        }
    }
}

fn geometric(a: f64, b: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| (a.ln() + (b.ln() - a.ln()) * i as f64 / (n - 1) as f64).exp())
}

fn criterion_1() -> Outcome {
    let mut o = Outcome::new(1, "prototype scalar curvature matches the closed form");
    let start = Instant::now();
    let (c1, c2) = (0.1, 0.1);
    let p = prototype_profile(c1, c2, (-3.0f64).exp()).expect("prototype");
    let seg = &p.segments[0];
    let mut worst = 0.0f64;
    let mut n = 0;
    for r in geometric((-30.0f64).exp(), (-3.0f64).exp(), 1000) {
        let got = seg.jet(&Radius::Plain(r)).scalar_curvature().to_f64();
        let want = prototype_closed_form(c1, c2, r);
        worst = worst.max(((got - want) / want).abs());
        n += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    o.check("relative error <= 1e-8", worst <= 1e-8, format!("max relative error {worst:.2e} over {n} points"));
    o.check("runtime < 1 s", secs < 1.0, format!("{secs:.3} s"));
    o
}

fn spec_for(i: usize, method: Method) -> DrawstringSpec {
    let e = 1.0 / i as f64;
    DrawstringSpec::new(0.0, e, e, 1e-3, method)
}

fn certify_member(o: &mut Outcome, tag: &str, report: &CertificationReport) {
    let failures = report.failures();
    o.check(format!("{tag}: seven conditions"), report.all_pass && report.conditions.len() == 7, format!("failures {failures:?}"));
    // (VI) and (VII) are single numbers, the rest are checked pointwise
    let grid = report.conditions.iter().filter(|(k, _)| !matches!(k.as_str(), "VI" | "VII")).map(|(_, c)| c.grid).min().unwrap_or(0);
    o.check(format!("{tag}: grid >= 10^4"), grid >= 10_000, format!("smallest pointwise grid {grid}"));
    o.check(format!("{tag}: finite-difference oracle"), report.fd_pass, format!("tolerance {:.1e}", report.fd_tol));
}

fn criterion_2() -> Outcome {
    let mut o = Outcome::new(2, "cutoff construction certifies for eps = delta = 1/i");
    for i in [2, 4, 8, 16] {
        let start = Instant::now();
        let d = build(&spec_for(i, Method::B)).expect("cutoff build");
        let report = certify_drawstring(&d);
        let secs = start.elapsed().as_secs_f64();
        let tag = format!("i = {i}");
        certify_member(&mut o, &tag, &report);
        let m = report.get("I").margin;
        o.check(format!("{tag}: (I) margin >= -1e-7"), m >= -1e-7, format!("margin {m:.3e}"));
        o.check(format!("{tag}: runtime < 10 s"), secs < 10.0, format!("{secs:.2} s"));
    }
    o
}

fn criterion_3() -> Outcome {
    let mut o = Outcome::new(3, "gluing construction certifies with the piece-wise targets");
    for i in [2, 4, 8, 16] {
        let d = build(&spec_for(i, Method::A)).expect("gluing build");
        let report = certify_drawstring(&d);
        let tag = format!("i = {i}");
        certify_member(&mut o, &tag, &report);
        let SolvedParams::A(g) = &d.params else { unreachable!() };

        // piece 2 recomputed here from the jets of the cone segment
        let target = 2.0 * (g.k - g.epsilon_internal);
        let mut dev = 0.0f64;
        let mut pts = 0;
        for seg in d.profile.segments.iter().filter(|s| s.name() == "cone") {
            for c in seg.charts() {
                for r in c.points(2500) {
                    dev = dev.max((seg.jet(&r).scalar_curvature().to_f64() - target).abs());
                    pts += 1;
                }
            }
        }
        o.check(format!("{tag}: piece 2 = 2(k - eps) +- 1e-9"), pts > 0 && dev <= 1e-9, format!("max deviation {dev:.2e} on {pts} points"));
        for (label, prefix) in [("piece 3 >= 90", "R(g3) >= 90"), ("piece 4 >= 100", "R(g4) = 2 e^{2u4} A >= 100")] {
            let c = d.params.checks().iter().find(|c| c.name.starts_with(prefix)).expect("piece check");
            o.check(format!("{tag}: {label}"), c.holds, format!("margin {:.3e}", c.margin));
        }
    }
    o
}

fn criterion_4() -> Outcome {
    let mut o = Outcome::new(4, "gluing and cutoff members agree to within a factor 20 in volume");
    for k in [0.0, 1.0, -1.0] {
        let base = DrawstringSpec::new(k, 0.1, 0.1, 1e-3, Method::A);
        let own = |m: Method| build(&DrawstringSpec { method: m, ..base.clone() }).expect("build").params.r1();
        let cap = own(Method::A).min(own(Method::B));
        let mut vols = Vec::new();
        for m in [Method::A, Method::B] {
            let spec = DrawstringSpec { method: m, r1_max: Some(cap), ..base.clone() };
            let d = build(&spec).expect("capped build");
            let rep = certify_drawstring(&d);
            let tag = format!("k = {k}, method {m:?}");
            o.check(format!("{tag}: certified"), rep.all_pass, format!("failures {:?}", rep.failures()));
            o.check(format!("{tag}: axis distance < r0"), rep.axis_distance < spec.r0, format!("{:.3e}", rep.axis_distance));
            o.check(format!("{tag}: tube volume < 100 V0"), rep.tube_volume < 100.0 * rep.v0, format!("{:.3e} vs V0 {:.3e}", rep.tube_volume, rep.v0));
            vols.push(rep.tube_volume);
        }
        let ratio = vols[0].max(vols[1]) / vols[0].min(vols[1]);
        o.check(format!("k = {k}: volume ratio <= 20"), ratio <= 20.0, format!("ratio {ratio:.3} with shared r1 cap {cap:.3e}"));
    }
    o
}

/// `f = amp sn_K(x + p)`, `u = ua sin(ub x) + uc` on `[lo, hi]`.
#[derive(Clone, Debug)]
struct Piece {
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
    fn f(&self, x: f64) -> f64 {
        self.amp * sn(self.k, x + self.p)
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
            self.amp * cn(self.k, y),
            -self.k * self.amp * sn(self.k, y),
            self.ua * (self.ub * x).sin() + self.uc,
            self.ua * self.ub * (self.ub * x).cos(),
        )
    }
}

fn criterion_5() -> Outcome {
    let mut o = Outcome::new(5, "smoothing lemmas on 50 random instances each");
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut u_ok, mut u_min_grid) = (0, usize::MAX);
    for _ in 0..50 {
        let k: f64 = rng.gen_range(60.0..200.0);
        let s: f64 = rng.gen_range(0.02..0.05);
        let t = s + 0.15;
        let (ua, ub): (f64, f64) = (rng.gen_range(0.05..0.5), rng.gen_range(1.0..10.0));
        let uc: f64 = rng.gen_range(-0.5..0.5);
        let piece = Piece { amp: 1.0, k, p: 0.0, ua, ub, uc, lo: s, hi: t };
        // inf of e^{-2u}(K - v'^2) over the piece bounds the curvature expression
        let sup_vp = ua * ub;
        let lam = ((2.0 * (uc - ua)).exp() * (k - sup_vp * sup_vp) * 0.99).max(1.0);
        let mu = rng.gen_range(0.1..1.0) * (0.25 * (t - s)).min(1.0 / (16.0 * sup_vp * sup_vp));
        match smooth_u(Arc::new(piece), lam, mu) {
            Ok((_, rep)) => {
                u_ok += (rep.item1 && rep.item2 && rep.item3) as usize;
                u_min_grid = u_min_grid.min(rep.grid_points);
            }
            Err(e) => o.check("potential smoothing instance", false, e.to_string()),
        }
    }
    o.check("potential smoothing: three conclusions", u_ok == 50, format!("{u_ok}/50 instances"));
    o.check("potential smoothing: grid >= 10^4", u_min_grid >= 10_000, format!("{u_min_grid} points"));

    let at = 0.5;
    let (mut f_ok, mut f_min_grid) = (0, usize::MAX);
    for _ in 0..50 {
        let k1: f64 = rng.gen_range(-2.0..4.0);
        let p1: f64 = rng.gen_range(0.1..0.4) - at;
        let left = Piece { amp: 1.0, k: k1, p: p1, ua: 0.1, ub: 1.3, uc: 0.0, lo: at - 0.3, hi: at };
        // right piece through the same value and slope, different curvature
        let (f, fp) = (left.f(at), cn(k1, at + p1));
        let k2: f64 = rng.gen_range(-2.0..4.0);
        let y = arctn(k2, f / fp).expect("slope in range");
        let right = Piece { amp: f / sn(k2, y), k: k2, p: y - at, lo: at, hi: at + 0.3, ..left.clone() };
        let (ls, rs): (Arc<dyn Segment>, Arc<dyn Segment>) = (Arc::new(left), Arc::new(right));
        let mut lam = f64::INFINITY;
        for i in 0..=1000 {
            let s = 0.1 * i as f64 / 1000.0;
            lam = lam.min(ls.jet(&Radius::Plain(at - s)).curvature_expr().to_f64());
            lam = lam.min(rs.jet(&Radius::Plain(at + s)).curvature_expr().to_f64());
        }
        let mu = rng.gen_range(0.005..0.05);
        match smooth_f(ls, rs, Radius::Plain(at), lam, mu) {
            Ok((_, rep)) => {
                let both = rep.c0_ratio <= 1.0 && rep.c1_ratio <= 1.0 && rep.curvature_margin >= 0.0 && rep.unchanged_outside;
                f_ok += both as usize;
                f_min_grid = f_min_grid.min(rep.grid_points);
            }
            Err(e) => o.check("junction smoothing instance", false, e.to_string()),
        }
    }
    o.check("junction smoothing: both conclusions", f_ok == 50, format!("{f_ok}/50 instances"));
    o.check("junction smoothing: grid >= 10^4", f_min_grid >= CHECK_POINTS, format!("{f_min_grid} points"));
    o
}

fn t3_sequence() -> &'static [Member] {
    static SEQ: OnceLock<Vec<Member>> = OnceLock::new();
    SEQ.get_or_init(|| build_sequence(Topology::T3, 32, Method::B).expect("torus sequence"))
}

fn s2s1_sequence() -> &'static [Member] {
    static SEQ: OnceLock<Vec<Member>> = OnceLock::new();
    SEQ.get_or_init(|| build_sequence(Topology::S2xS1, 32, Method::B).expect("sphere-circle sequence"))
}

fn criterion_6() -> Outcome {
    let mut o = Outcome::new(6, "scrunching conditions along both sequences");
    for (topology, seq) in [(Topology::T3, t3_sequence()), (Topology::S2xS1, s2s1_sequence())] {
        let tag = format!("{topology:?}");
        let recs = scrunch_report(seq).expect("scrunch records");
        let ids: Vec<usize> = recs.iter().map(|r| r.i).collect();
        o.check(format!("{tag} members i = 2..32"), ids == (2..=32).collect::<Vec<_>>(), format!("{} members", ids.len()));
        let exact = recs.iter().all(|r| r.eps_i == 1.0 / r.i as f64 && r.delta_i == 1.0 / r.i as f64);
        o.check(format!("{tag} eps_i = delta_i = 1/i"), exact, "exact equality");
        let worst_h = recs.iter().map(|r| r.h_i * r.i as f64 / 3.0).fold(0.0, f64::max);
        o.check(format!("{tag} H_i <= 3/i"), worst_h <= 1.0 + 1e-15, format!("max H_i i/3 = {worst_h:.6}"));
        let conds = recs.iter().filter(|r| !(r.cond_i && r.cond_ii_ball && r.cond_ii_total && r.cond_iii)).map(|r| r.i).collect::<Vec<_>>();
        o.check(format!("{tag} scrunching conditions (i)-(iii)"), conds.is_empty(), format!("failing members {conds:?}"));
        let uncertified: Vec<usize> = seq.iter().filter(|m| !m.report.all_pass).map(|m| m.i).collect();
        o.check(
            format!("{tag} R >= target on every member"),
            uncertified.is_empty(),
            format!("target {}; uncertified members {uncertified:?}", if topology == Topology::T3 { "-2/i" } else { "2 - 1/i" }),
        );
        let k = topology.k();
        let corrected = recs.iter().all(|r| {
            let fi = r.i as f64;
            r.vol_ui <= CIRCLE * disc_area(k, 1.0 / fi) + 50.0 / fi.powi(4)
        });
        o.check(format!("{tag} vol(U_i) <= vol B(sigma, 1/i) + 50/i^4"), corrected, "annulus volume plus the drawstring allowance");
        if topology == Topology::T3 {
            let over: Vec<(usize, f64)> = recs
                .iter()
                .map(|r| {
                    let fi = r.i as f64;
                    (r.i, r.vol_ui / (2.0 * PI / (fi * fi) + 50.0 / fi.powi(4)))
                })
                .filter(|(_, q)| *q > 1.0)
                .collect();
            let worst = over.iter().map(|x| x.1).fold(0.0, f64::max);
            o.check(
                "T3 vol(U_i) <= 2pi/i^2 + 50/i^4",
                over.is_empty(),
                format!(
                    "{} members exceed it (worst by x{worst:.2}); the 1/i annulus around a circle of length 2pi already has volume 2pi^2/i^2, a factor pi above the stated leading term",
                    over.len()
                ),
            );
        }
    }
    o
}

fn criterion_7() -> Outcome {
    let mut o = Outcome::new(7, "W^{1,p} deviation decreases along the torus sequence");
    let seq = t3_sequence();
    for p in [1.0, 1.5, 1.9] {
        let w: Vec<f64> = seq.iter().map(|m| w1p_deviation(m.profile(), &m.reference, p).expect("w1p").value).collect();
        let decreasing = w.windows(2).all(|x| x[1] < x[0]);
        let (first, last) = (w[0], *w.last().unwrap());
        o.check(format!("p = {p}: strictly decreasing"), decreasing, format!("{first:.3e} -> {last:.3e}"));
        o.check(format!("p = {p}: i = 32 below a quarter of i = 2"), last < 0.25 * first, format!("ratio {:.3}", last / first));
    }
    o
}

fn criterion_8() -> Outcome {
    let mut o = Outcome::new(8, "minA certificates for every member");
    for (topology, seq) in [(Topology::T3, t3_sequence()), (Topology::S2xS1, s2s1_sequence())] {
        let certs: Vec<_> = seq.iter().map(|m| (m.i, mina_certificate(m.profile(), topology))).collect();
        let invalid: Vec<usize> = certs.iter().filter(|c| !c.1.valid).map(|c| c.0).collect();
        o.check(format!("{topology:?}: valid certificates"), invalid.is_empty(), format!("invalid members {invalid:?}"));
        if topology == Topology::T3 {
            let ok = certs.iter().all(|c| c.1.bound == Some(PI / 4.0));
            o.check("T3: area bound pi/4", ok, "reported on every member");
        }
    }
    o
}

fn criterion_9() -> Outcome {
    let mut o = Outcome::new(9, "flat torus Green's function estimates");
    let l = 3.0;
    let zs = [Complex64::new(0.0, 1.0), Complex64::new(0.5, 1.0), Complex64::new(0.0, 2.0)];
    let s = torus_summary(&zs, l, 64, 1000, 7).expect("torus summary");
    let c1 = s.c1.c1;
    // holdout pairs from a different seed must respect the fitted constant
    let mut worst = f64::NEG_INFINITY;
    for z in zs {
        let ev = GreenEvaluator::new(FlatTorus::new(z, l).expect("torus"));
        worst = worst.max(green_excess(&ev, 1000, 9001).0);
    }
    o.check("|G| <= |log d|/2pi + C1", worst <= c1, format!("C1 = {c1:.4}, holdout excess {worst:.4}"));
    let bm_ok = s.brezis_merle.iter().flatten().all(|b| b.integral <= b.bound.unwrap() * (1.0 + 1e-12));
    o.check("integral <= C2/alpha for alpha in {pi, 2pi, 4pi}", bm_ok && s.c2.is_finite(), format!("C2 = {:.3}", s.c2));
    o.check("C2 below the log-bound envelope", s.c2 <= s.c2_envelope, format!("envelope {:.1}", s.c2_envelope));
    let wp_ok = s.w1p.iter().flatten().all(|w| w.ratio <= s.c3 * (1.0 + 1e-12));
    o.check("gradient ratio <= C3 for p in {1, 1.5, 1.9}", wp_ok && s.c3.is_finite(), format!("C3 = {:.4}", s.c3));
    let refine = s.brezis_merle.iter().flatten().map(|b| b.refinement).chain(s.w1p.iter().flatten().map(|w| w.refinement)).fold(0.0, f64::max);
    o.check("grid refinement stable", refine <= 0.05, format!("largest relative change {refine:.2e}"));
    o
}

fn criterion_10() -> Outcome {
    let mut o = Outcome::new(10, "discrete extremal length");
    for z in [Complex64::new(0.0, 1.0), Complex64::new(0.5, 1.0), Complex64::new(0.0, 2.0)] {
        let t = FlatTorus::new(z, 3.0).expect("torus");
        let analytic = 1.0 / z.im;
        let levels: Vec<_> = [4, 8, 16, 32, 64].iter().map(|n| discrete_extremal_length(&t, *n).expect("extremal length")).collect();
        let below = levels.iter().all(|d| d.sup <= analytic * (1.0 + 1e-12) && d.sup <= d.upper * (1.0 + 1e-12));
        let sups: Vec<String> = levels.iter().map(|d| format!("{:.4}", d.sup)).collect();
        o.check(format!("z = {z}: sup <= 1/Im z at every level"), below, format!("levels {}", sups.join(", ")));
        if z == Complex64::new(0.0, 1.0) {
            let fine = levels.last().unwrap().sup;
            let rel = (fine - analytic).abs() / analytic;
            o.check("z = i: finest level within 5%", rel <= 0.05, format!("relative gap {rel:.2e}"));
        }
    }
    o
}

fn main() {
    let start = Instant::now();
    let outcomes = [
        criterion_1(),
        criterion_2(),
        criterion_3(),
        criterion_4(),
        criterion_5(),
        criterion_6(),
        criterion_7(),
        criterion_8(),
        criterion_9(),
        criterion_10(),
    ];
    let mut unexpected = Vec::new();
    for o in &outcomes {
        o.print();
        unexpected.extend(o.unexpected().into_iter().map(|c| format!("criterion {}: {c}", o.id)));
    }
    let passed = outcomes.iter().filter(|o| o.passed()).count();
    println!("{passed}/{} criteria pass ({:.1} s)", outcomes.len(), start.elapsed().as_secs_f64());
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}

//! The verification suites. Each suite turns its checks into assertions;
//! an error inside a suite becomes a failed assertion instead of aborting
//! the run.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use qvl_core::competitor::{annulus_interpolate_2d, default_c, find_gap, slab_interpolate, SphereField};
use qvl_core::grid::GridDomain;
use qvl_core::minimize::{decay_profile, radial_comparison_check, verify_almost_min, Ball};
use qvl_core::qfield::QField;
use qvl_core::qspace::{diameter, metric, metric_exhaustive, norm, retraction, separate, splitting};
use qvl_core::station::{
    frequency_bounds_check, frequency_profile_with, squash_identity_residual, squash_residual, squeeze_residual, vmo_report,
    AnalyticProbe, BallProbe, CutoffScaling, FieldProbe, RadialCutoff, VmoOptions, VmoReport,
};
use qvl_core::{QPoint, QvlError, Result};

use crate::generate::Built;
use crate::random;
use crate::report::{Assertion, GridInfo};
use crate::scenario::{Scenario, SuiteId, Tolerances};

/// What a suite produced, before it is wrapped into a report.
pub struct SuiteOutput {
    pub assertions: Vec<Assertion>,
    pub data: Value,
    /// `(file name, CSV text)`
    pub tables: Vec<(String, String)>,
    pub grid: Option<GridInfo>,
}

impl SuiteOutput {
    fn failed(name: &str, e: impl ToString, grid: Option<GridInfo>) -> Self {
        SuiteOutput { assertions: vec![Assertion::error(name, e.to_string())], data: Value::Null, tables: Vec::new(), grid }
    }
}

/// Runs one suite. `built` is the scenario field, or the message of the
/// error that prevented building it.
pub fn run_suite(id: SuiteId, sc: &Scenario, built: Option<&std::result::Result<Built, String>>) -> SuiteOutput {
    let seed = sc.seed.unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id as u64);
    let tol = &sc.tolerances;
    if !id.needs_field() {
        let out = match id {
            SuiteId::MetricProps => metric_props(sc, &mut rng),
            SuiteId::Retraction => retraction_suite(sc, &mut rng),
            SuiteId::Separation => separation_suite(sc, &mut rng),
            _ => interpolation(sc, &mut rng),
        };
        return out.unwrap_or_else(|e| SuiteOutput::failed("suite", e, None));
    }
    let b = match built {
        Some(Ok(b)) => b,
        Some(Err(e)) => return SuiteOutput::failed("field", e, None),
        None => return SuiteOutput::failed("field", "no field was built", None),
    };
    let grid = Some(GridInfo::of(b.field.domain()));
    let out = match id {
        SuiteId::RadialComparison => radial_suite(sc, b),
        SuiteId::AlmostMin => almost_min(sc, b),
        SuiteId::Stationarity => stationarity(sc, b),
        SuiteId::Frequency => frequency(sc, b),
        SuiteId::Vmo => vmo(sc, b, tol),
        _ => log_decay(sc, b, tol),
    };
    match out {
        Ok(mut o) => {
            o.grid = grid;
            o
        }
        Err(e) => SuiteOutput::failed("suite", e, grid),
    }
}

fn output(assertions: Vec<Assertion>, data: Value, tables: Vec<(String, String)>) -> Result<SuiteOutput> {
    Ok(SuiteOutput { assertions, data, tables, grid: None })
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

fn rel_err(a: f64, exact: f64) -> f64 {
    if exact != 0.0 {
        (a - exact).abs() / exact.abs()
    } else {
        a.abs()
    }
}

fn shape(rng: &mut ChaCha8Rng, min_q: usize, max_q: usize, max_n: usize) -> (usize, usize) {
    (rng.gen_range(min_q..=max_q.max(min_q)), rng.gen_range(1..=max_n.max(1)))
}

fn metric_props(sc: &Scenario, rng: &mut ChaCha8Rng) -> Result<SuiteOutput> {
    let p = &sc.params.metric_props;
    let t = &sc.tolerances;
    let (mut exhaustive, mut symmetry, mut triangle, mut identity) = (0.0f64, 0.0f64, f64::NEG_INFINITY, 0.0f64);
    for _ in 0..p.samples {
        let (q, n) = shape(rng, 1, p.max_q, p.max_n);
        let u = random::point(rng, q, n);
        let v = if rng.gen_bool(0.5) {
            random::point(rng, q, n)
        } else {
            let radius = rng.gen_range(0.0..0.1);
            random::near(rng, &u, radius)
        };
        let w = random::point(rng, q, n);
        let (duv, dvw, duw) = (metric(&u, &v)?, metric(&v, &w)?, metric(&u, &w)?);
        exhaustive = exhaustive.max(rel_err(duv, metric_exhaustive(&u, &v)?));
        symmetry = symmetry.max(rel_err(metric(&v, &u)?, duv));
        let sum = duv + dvw;
        triangle = triangle.max(if sum > 0.0 { (duw - sum) / sum } else { duw });
        let shuffled = random::near(rng, &u, 0.0);
        identity = identity.max(metric(&u, &shuffled)? / norm(&u).max(f64::MIN_POSITIVE));
    }
    let a = vec![
        Assertion::at_most("metric_matches_exhaustive", exhaustive, t.metric_rel),
        Assertion::at_most("symmetry", symmetry, t.metric_rel),
        Assertion::at_most("triangle_excess", triangle, t.triangle_rel),
        Assertion::at_most("permutation_blind", identity, t.metric_rel),
    ];
    let data = json!({ "samples": p.samples, "worst_exhaustive_rel": exhaustive, "worst_symmetry_rel": symmetry, "worst_triangle_excess": triangle, "worst_permutation_rel": identity });
    output(a, data, Vec::new())
}

fn retraction_suite(sc: &Scenario, rng: &mut ChaCha8Rng) -> Result<SuiteOutput> {
    let p = &sc.params.retraction;
    let t = &sc.tolerances;
    let (mut lip, mut fixed, mut collapsed, mut inside) = (f64::NEG_INFINITY, 0.0f64, 0.0f64, f64::NEG_INFINITY);
    let (mut n_fixed, mut n_collapsed, mut n_fold) = (0usize, 0usize, 0usize);
    for _ in 0..p.samples {
        let (q, n) = shape(rng, 2, p.max_q, p.max_n);
        let v = random::point(rng, q, n);
        let s = splitting(&v);
        let r = 0.25 * s * rng.gen_range(0.05..0.99);
        let radius = rng.gen_range(0.0..3.0) * r;
        let u1 = random::near(rng, &v, radius);
        // half the partners are close to u1, to probe the local constant
        let (base, radius) = if rng.gen_bool(0.5) { (&u1, rng.gen_range(0.0..0.5) * r) } else { (&v, rng.gen_range(0.0..3.0) * r) };
        let u2 = random::near(rng, base, radius);
        let (f1, f2) = (retraction(&v, r, &u1)?, retraction(&v, r, &u2)?);
        let du = metric(&u1, &u2)?;
        let df = metric(&f1, &f2)?;
        lip = lip.max(if du > 0.0 { (df - du) / du } else { df });
        for (u, f) in [(&u1, &f1), (&u2, &f2)] {
            let g = metric(u, &v)?;
            inside = inside.max((metric(f, &v)? - r) / r);
            if g <= r {
                n_fixed += 1;
                fixed = fixed.max(metric(f, u)? / r);
            } else if g >= 2.0 * r {
                n_collapsed += 1;
                collapsed = collapsed.max(metric(f, &v)? / r);
            } else {
                n_fold += 1;
            }
        }
    }
    let a = vec![
        Assertion::at_most("lipschitz_excess", lip, t.lipschitz),
        Assertion::at_most("fixed_on_ball", fixed, t.lipschitz),
        Assertion::at_most("constant_outside_2r", collapsed, t.lipschitz),
        Assertion::at_most("image_in_ball", inside, t.lipschitz),
    ];
    let data = json!({
        "samples": p.samples,
        "worst_lipschitz_excess": lip,
        "inside_ball": n_fixed,
        "outside_2r": n_collapsed,
        "annulus": n_fold,
    });
    output(a, data, Vec::new())
}

fn separation_suite(sc: &Scenario, rng: &mut ChaCha8Rng) -> Result<SuiteOutput> {
    let p = &sc.params.separation;
    let slack = (1.0 + sc.tolerances.separation).ln();
    let mut a = Vec::new();
    let mut per_eps = Vec::new();
    let points: Vec<QPoint> = (0..p.samples)
        .map(|_| {
            let (q, n) = shape(rng, 2, p.max_q, p.max_n);
            if rng.gen_bool(0.5) {
                random::point(rng, q, n)
            } else {
                random::multiscale(rng, q, n)
            }
        })
        .collect();
    for &eps in &p.eps {
        // both conditions in log form: ln beta + ln d(P) - ln s(P~) and ln G(P~,P) - ln(eps s(P~))
        let (mut lower, mut close) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut moved = 0usize;
        for pt in &points {
            let sep = separate(pt, eps)?;
            if sep.point != *pt {
                moved += 1;
            }
            let s = splitting(&sep.point);
            if !s.is_finite() {
                return Err(QvlError::Construction(format!("separate returned a point with one value at eps = {eps}")));
            }
            lower = lower.max(sep.ln_beta + diameter(pt).ln() - s.ln());
            let g = metric(&sep.point, pt)?;
            close = close.max(if g > 0.0 { g.ln() - (eps * s).ln() } else { f64::NEG_INFINITY });
        }
        a.push(Assertion::at_most(&format!("beta_diameter_below_splitting[eps={eps}]"), lower, slack));
        a.push(Assertion::at_most(&format!("distance_below_eps_splitting[eps={eps}]"), close, slack));
        per_eps.push(json!({ "eps": eps, "moved": moved, "worst_log_lower": lower, "worst_log_close": if close.is_finite() { Some(close) } else { None } }));
    }
    output(a, json!({ "samples": p.samples, "eps": per_eps }), Vec::new())
}

fn interpolation(sc: &Scenario, rng: &mut ChaCha8Rng) -> Result<SuiteOutput> {
    let p = &sc.params.interpolation;
    let t = &sc.tolerances;
    let line = Arc::new(GridDomain::cube(1, p.h)?);
    let pair = |c: &[[f64; 7]; 2], s: f64| QPoint::new(vec![vec![random::trig(&c[0], s)], vec![random::trig(&c[1], s)]]);
    let mut csv = String::from("dataset,geometry,energy,energy_term,gap_term,constant,trace_top,trace_bottom\n");
    let (mut slab_c, mut ann_c) = (Vec::new(), Vec::new());
    let mut trace: f64 = 0.0;
    for k in 0..p.datasets {
        let c1 = [random::trig_coefficients(rng), random::trig_coefficients(rng)];
        let c2 = [random::trig_coefficients(rng), random::trig_coefficients(rng)];
        let g1 = QField::from_fn(line.clone(), |_, x| pair(&c1, 2.0 * x[0]))?;
        let g2 = QField::from_fn(line.clone(), |_, x| pair(&c2, 2.0 * x[0]))?;
        let (_, slab) = slab_interpolate(&g1, &g2, p.eps, p.p)?;
        let angle = |u: &[f64]| u[1].atan2(u[0]);
        let s1 = SphereField::circle(p.ntheta, |u| pair(&c1, angle(u)))?;
        let s2 = SphereField::circle(p.ntheta, |u| pair(&c2, angle(u)))?;
        let (_, ann) = annulus_interpolate_2d(&s1, &s2, p.eps, p.p)?;
        for (name, r) in [("slab", &slab), ("annulus", &ann)] {
            csv.push_str(&format!(
                "{k},{name},{},{},{},{},{},{}\n",
                r.energy, r.energy_term, r.gap_term, r.constant, r.trace_residual_top, r.trace_residual_bottom
            ));
            trace = trace.max(r.trace_residual_top).max(r.trace_residual_bottom);
        }
        slab_c.push(slab.constant);
        ann_c.push(ann.constant);
    }
    let mut a = vec![Assertion::at_most("trace_residual", trace, 0.0)];
    let mut summary = Vec::new();
    for (name, cs) in [("slab", &slab_c), ("annulus", &ann_c)] {
        let (spread, center, max) = spread(cs);
        a.push(Assertion::holds(&format!("{name}_constant_finite"), cs.iter().all(|c| c.is_finite())));
        a.push(Assertion::at_most(&format!("{name}_constant_spread"), spread, t.interpolation_spread));
        summary.push(json!({ "geometry": name, "center": center, "max": max, "spread": spread }));
    }
    // constant gap: the transit is linear, so the energy is len (2 eps)^{1-p} G^p
    let lo = QPoint::new(vec![vec![0.0], vec![1.0]])?;
    let hi = QPoint::new(vec![vec![0.5], vec![1.5]])?;
    let (_, flat) = slab_interpolate(&QField::constant(line.clone(), &lo), &QField::constant(line.clone(), &hi), p.eps, p.p)?;
    let exact = 2.0 * (2.0 * p.eps).powf(1.0 - p.p) * metric(&lo, &hi)?.powf(p.p);
    a.push(Assertion::at_most("constant_gap_transit", rel_err(flat.energy, exact), t.transit_rel));
    let data = json!({
        "datasets": p.datasets,
        "h": p.h,
        "eps": p.eps,
        "p": p.p,
        "constants": summary,
        "constant_gap": { "energy": flat.energy, "closed_form": exact },
    });
    output(a, data, vec![("interpolation.csv".into(), csv)])
}

/// Half-width of `[min, max]` relative to its midpoint, so that every
/// value lies within that fraction of the midpoint; also the midpoint and
/// the maximum.
fn spread(cs: &[f64]) -> (f64, f64, f64) {
    let lo = cs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = cs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if cs.is_empty() || hi <= 0.0 {
        return (0.0, 0.0, hi.max(0.0));
    }
    ((hi - lo) / (hi + lo), 0.5 * (hi + lo), hi)
}

/// Center and radius that the field's default balls are scaled from.
fn frame(d: &GridDomain) -> (Vec<f64>, f64) {
    let r = d.outer_radius().or_else(|| d.box_half().map(|h| h.into_iter().fold(f64::INFINITY, f64::min))).unwrap_or(1.0);
    (d.center().to_vec(), r)
}

/// Radii in `[lo, hi]`: polar ring radii, or multiples of `h`.
fn grid_radii(d: &GridDomain, lo: f64, hi: f64) -> Vec<f64> {
    let tol = 1e-9 * hi;
    if d.is_polar() {
        d.radii().iter().copied().filter(|r| *r >= lo - tol && *r <= hi + tol && *r > 0.0).collect()
    } else {
        let h = d.h();
        ((lo / h).ceil() as usize..=(hi / h + 1e-9).floor() as usize).filter(|k| *k > 0).map(|k| k as f64 * h).collect()
    }
}

/// Default balls: polar rings near a quarter and a half of the radius, or
/// Cartesian balls about the center.
fn default_balls(d: &GridDomain) -> Vec<Ball> {
    let (c, r) = frame(d);
    if d.is_polar() {
        let nr = d.nr();
        [nr / 4, nr / 2].into_iter().filter(|k| *k >= 2).map(|k| Ball { center: c.clone(), radius: d.radii()[k] }).collect()
    } else {
        [0.25, 0.5].into_iter().map(|s| Ball { center: c.clone(), radius: s * r }).collect()
    }
}

fn radial_suite(sc: &Scenario, b: &Built) -> Result<SuiteOutput> {
    let p = &sc.params.radial_comparison;
    let d = b.field.domain();
    let cert = find_gap(d.m(), p.p, p.big_m, p.c.unwrap_or_else(|| default_c(p.p)))?;
    let balls = if p.balls.is_empty() {
        let (c, r) = frame(d);
        [0.25, 0.5, 0.75].into_iter().map(|s| Ball { center: c.clone(), radius: s * r }).collect()
    } else {
        p.balls.clone()
    };
    let rep = radial_comparison_check(&b.field, &cert, &balls)?;
    let mut a = vec![Assertion::holds("gap_certificate", cert.holds())];
    for s in &rep.samples {
        a.push(Assertion::at_most(&format!("radial_comparison[r={}]", s.radius), s.lhs, s.rhs));
    }
    output(a, json!({ "certificate": cert, "report": rep }), Vec::new())
}

fn almost_min(sc: &Scenario, b: &Built) -> Result<SuiteOutput> {
    let p = &sc.params.almost_min;
    let balls = if p.balls.is_empty() { default_balls(b.field.domain()) } else { p.balls.clone() };
    let omega = |r: f64| p.modular_c * r.powf(p.modular_gamma);
    let rep = verify_almost_min(&b.field, &omega, &balls, p.alpha0, &p.options, sc.tolerances.almost_min_slack)?;
    let mut csv = String::from("center,radius,energy,resolved,radial,ratio,omega,pass\n");
    let mut a = Vec::new();
    for s in &rep.samples {
        let center = s.center.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ");
        csv.push_str(&format!("{center},{},{},{},{},{},{},{}\n", s.radius, s.energy, s.resolved, s.radial, s.ratio, s.omega, s.pass));
        a.push(Assertion::at_most(&format!("energy_ratio[r={}]", s.radius), s.ratio, 1.0 + s.omega + rep.slack));
    }
    output(a, to_value(&rep), vec![("almost_min.csv".into(), csv)])
}

fn stationarity(sc: &Scenario, b: &Built) -> Result<SuiteOutput> {
    let p = &sc.params.stationarity;
    let t = &sc.tolerances;
    let f = &b.field;
    let d = f.domain();
    let (c0, r) = frame(d);
    let c = p.center.clone().unwrap_or(c0);
    let h = d.h();
    let x = RadialCutoff { center: c.clone(), inner: p.inner * r, outer: p.outer * r };
    let y = CutoffScaling { center: c.clone(), inner: p.inner * r, outer: p.outer * r };
    let squeeze = squeeze_residual(f, &x)?;
    let squash = squash_residual(f, &y)?;
    // f (1 + a |x-c|^2 / R^2): its Laplacian is proportional to f, so the
    // defect cannot average out against the radial fields
    let bump = |node: usize| -> f64 { 1.0 + p.perturbation * d.coord(node).iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / (r * r) };
    let data: Vec<f64> = (0..d.len()).flat_map(|node| f.raw(node).iter().map(move |v| v * bump(node))).collect();
    let g = QField::from_flat(f.domain_arc().clone(), f.q(), f.n(), data)?;
    let squeeze_p = squeeze_residual(&g, &x)?;
    let squash_p = squash_residual(&g, &y)?;
    let limit = t.h_factor * h;
    let mut a = vec![
        Assertion::at_most("squeeze_residual", squeeze.relative, limit),
        Assertion::at_most("squash_residual", squash.relative, limit),
        Assertion::at_least("perturbed_squeeze", squeeze_p.relative, t.perturbation_factor * squeeze.relative),
        Assertion::at_least("perturbed_squash", squash_p.relative, t.perturbation_factor * squash.relative),
    ];
    let mut identity = Vec::new();
    for &s in &p.identity_radii {
        let res = squash_identity_residual(f, &c, s * r)?;
        a.push(Assertion::at_most(&format!("squash_identity[r={}]", s * r), res.relative, limit));
        identity.push(json!({ "r": s * r, "residual": res }));
    }
    let data = json!({
        "center": c,
        "h": h,
        "squeeze": squeeze,
        "squash": squash,
        "squeeze_constant": squeeze.relative / h,
        "squash_constant": squash.relative / h,
        "perturbation": p.perturbation,
        "perturbed_squeeze": squeeze_p,
        "perturbed_squash": squash_p,
        "identity": identity,
    });
    output(a, data, Vec::new())
}

fn frequency(sc: &Scenario, b: &Built) -> Result<SuiteOutput> {
    let p = &sc.params.frequency;
    let t = &sc.tolerances;
    let d = b.field.domain();
    let (c, r) = frame(d);
    let radii = p.radii.clone().unwrap_or_else(|| grid_radii(d, p.r_min * r, p.r_max * r));
    let prof = frequency_profile_with(&FieldProbe::new(&b.field), &c, &radii)?;
    let limit = t.h_factor * d.h();
    let mut a = Vec::new();
    if let Some(v) = prof.min_delta_n {
        a.push(Assertion::at_least("frequency_monotone", v, -limit));
    }
    if let Some(v) = prof.min_delta_theta {
        a.push(Assertion::at_least("theta_monotone", v, -limit));
    }
    if let Some(v) = prof.max_h_residual {
        a.push(Assertion::at_most("h_derivative_residual", v, limit));
    }
    a.push(Assertion::holds("no_vanishing_height", prof.vanishing_violations.is_empty()));
    let expected = p.expected_n.or_else(|| b.family.as_ref().and_then(|f| f.degree()));
    if let Some(e) = expected {
        let worst = prof.n_values().iter().flatten().map(|n| rel_err(*n, e)).fold(0.0, f64::max);
        a.push(Assertion::at_most("frequency_matches_degree", worst, t.frequency_rel));
    }
    let r0 = p.r0.unwrap_or_else(|| *radii.last().unwrap_or(&0.0));
    let bounds = if prof.degenerate { None } else { Some(frequency_bounds_check(&prof, r0)?) };
    if let Some(bd) = &bounds {
        a.push(Assertion::at_least("height_lower_bound", bd.lower_margin, -limit));
        a.push(Assertion::at_least("height_upper_bound", bd.upper_margin, -limit));
        if let Some(m) = bd.d_margin {
            a.push(Assertion::at_least("energy_bound", m, -limit));
        }
    }
    let csv = prof.csv();
    output(a, json!({ "expected_n": expected, "profile": prof, "bounds": bounds }), vec![("frequency.csv".into(), csv)])
}

fn vmo_run(sc: &Scenario, b: &Built, tol: &Tolerances) -> Result<VmoReport> {
    let p = &sc.params.vmo;
    let opts = VmoOptions { rel_tol: tol.vmo_rel, j_max: p.j_max, ..VmoOptions::default() };
    match &b.family {
        Some(fam) if b.field.domain().m() == 2 => {
            let eval = |x: &[f64]| fam.eval(x);
            let probe = AnalyticProbe { eval: &eval, nr: p.local_nr, ntheta: p.local_ntheta };
            vmo_report(&probe, &p.centers, &p.radii, &opts)
        }
        _ => vmo_report(&FieldProbe::new(&b.field) as &dyn BallProbe, &p.centers, &p.radii, &opts),
    }
}

fn vmo_tables(rep: &VmoReport) -> Vec<(String, String)> {
    let mut csv = String::from("center,r,omega,oscillation,theta\n");
    for (ci, c) in rep.centers.iter().enumerate() {
        let center = c.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
        for (k, r) in rep.radii.iter().enumerate() {
            csv.push_str(&format!("{center},{r},{},{},{}\n", rep.energy_modulus[k], rep.oscillation[ci][k], rep.theta[ci][k]));
        }
    }
    let mut dy = String::from("j,rho,omega,contraction\n");
    for (j, (rho, w)) in rep.dyadic_radii.iter().zip(&rep.dyadic_modulus).enumerate() {
        let c = rep.contraction.get(j).map(|b| b.to_string()).unwrap_or_default();
        dy.push_str(&format!("{j},{rho},{w},{c}\n"));
    }
    vec![("vmo.csv".into(), csv), ("vmo_dyadic.csv".into(), dy)]
}

fn vmo(sc: &Scenario, b: &Built, tol: &Tolerances) -> Result<SuiteOutput> {
    let rep = vmo_run(sc, b, tol)?;
    let top = rep.dyadic_modulus.iter().copied().fold(0.0, f64::max);
    let bottom = rep.dyadic_modulus.last().copied().unwrap_or(0.0);
    let a = vec![
        Assertion::holds("modulus_nondecreasing", rep.modulus_nondecreasing),
        Assertion::at_most("modulus_vanishes", if top > 0.0 { bottom / top } else { 0.0 }, tol.modulus_vanish),
        Assertion::holds("oscillation_bounded_by_modulus", rep.oscillation_ok),
        Assertion::holds("contraction_dichotomy", rep.dichotomy_holds),
    ];
    let tables = vmo_tables(&rep);
    output(a, to_value(&rep), tables)
}

fn log_decay(sc: &Scenario, b: &Built, tol: &Tolerances) -> Result<SuiteOutput> {
    let rep = vmo_run(sc, b, tol)?;
    let d = b.field.domain();
    let (c, r) = frame(d);
    let fp = &sc.params.frequency;
    let radii = fp.radii.clone().unwrap_or_else(|| grid_radii(d, fp.r_min * r, fp.r_max * r));
    let decay = decay_profile(&b.field, &c, &radii, 2.0)?;
    let mut a = vec![Assertion::holds("modulus_contracts", rep.contraction.iter().all(|c| *c))];
    match &rep.fit {
        Some(fit) => a.push(Assertion::at_least("log_decay_exponent", fit.alpha, 1.0)),
        None => a.push(Assertion::holds("modulus_identically_zero", rep.dyadic_modulus.iter().all(|w| *w == 0.0))),
    }
    if let Some(eta) = decay.eta_hat {
        a.push(Assertion::at_least("energy_decay_excess", eta, -tol.h_factor * d.h()));
    }
    let mut csv = String::from("j,rho,omega\n");
    for (j, (rho, w)) in rep.dyadic_radii.iter().zip(&rep.dyadic_modulus).enumerate() {
        csv.push_str(&format!("{j},{rho},{w}\n"));
    }
    let data = json!({ "dyadic_radii": rep.dyadic_radii, "dyadic_modulus": rep.dyadic_modulus, "contraction": rep.contraction, "c_hat": rep.c_hat, "fit": rep.fit, "decay": decay });
    output(a, data, vec![("log_decay.csv".into(), csv)])
}

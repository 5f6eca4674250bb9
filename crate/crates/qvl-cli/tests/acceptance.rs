//! The acceptance criteria, one line each. Runs without the test harness so
//! that the lines always reach stdout. Exits nonzero when a criterion fails,
//! unless it is listed in `KNOWN_RED` (blocked, with the analysis recorded
//! outside the code).

use std::f64::consts::PI;
use std::fs;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use qvl_cli::generate::build;
use qvl_cli::run::{run, RunOptions};
use qvl_cli::scenario::{Scenario, SuiteId};
use qvl_cli::suites::{run_suite, SuiteOutput};
use qvl_core::competitor::{find_gap, m_bound, radial_extension, SphereField};
use qvl_core::grid::GridDomain;
use qvl_core::minimize::{solve_dirichlet, SolveOptions};
use qvl_core::qfield::{interior_energy, QField};
use qvl_core::samples::Family;
use qvl_core::station::{
    frequency_bounds_check, frequency_profile, vmo_report, AnalyticProbe, VmoOptions,
};
use qvl_core::QPoint;

/// Criteria expected to fail as stated.
const KNOWN_RED: &[usize] = &[7];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn scenario(json: &str) -> Scenario {
    Scenario::from_json(json).unwrap_or_else(|e| panic!("{e}\n{json}"))
}

fn suite(sc: &Scenario, id: SuiteId) -> SuiteOutput {
    let built = id.needs_field().then(|| build(&sc.generator, sc.domain.as_ref()).map_err(|e| e.to_string()));
    run_suite(id, sc, built.as_ref())
}

fn suite_summary(o: &SuiteOutput) -> (bool, String) {
    let pass = o.assertions.iter().all(|a| a.pass);
    let parts: Vec<String> = o
        .assertions
        .iter()
        .filter(|a| !a.pass || a.value.is_some())
        .map(|a| match (a.value, &a.message) {
            (Some(v), _) => format!("{}={v:.3e}{}", a.name, if a.pass { "" } else { "!" }),
            (None, Some(m)) => format!("{}: {m}", a.name),
            (None, None) => format!("{}!", a.name),
        })
        .collect();
    (pass, parts.join(", "))
}

fn polar(nr: usize, ntheta: usize) -> String {
    format!(r#"{{"kind": "polar", "inner": 0.0, "outer": 1.0, "nr": {nr}, "ntheta": {ntheta}}}"#)
}

fn c1() -> Outcome {
    let sc = scenario(
        r#"{"name": "c1", "generator": {"file": "-"}, "suites": ["metric-props"], "seed": 1,
            "tolerances": {"metric_rel": 1e-12, "triangle_rel": 1e-12},
            "params": {"metric_props": {"samples": 10000, "max_q": 6, "max_n": 4}}}"#,
    );
    let (pass, d) = suite_summary(&suite(&sc, SuiteId::MetricProps));
    outcome(pass, d)
}

fn c2() -> Outcome {
    let sc = scenario(
        r#"{"name": "c2", "generator": {"file": "-"}, "suites": ["retraction"], "seed": 2,
            "tolerances": {"lipschitz": 1e-12},
            "params": {"retraction": {"samples": 10000, "max_q": 6, "max_n": 4}}}"#,
    );
    let o = suite(&sc, SuiteId::Retraction);
    let (pass, d) = suite_summary(&o);
    let regimes = format!("inside={} annulus={} outside={}", o.data["inside_ball"], o.data["annulus"], o.data["outside_2r"]);
    // all three regimes of the retraction must actually be exercised
    let covered = ["inside_ball", "annulus", "outside_2r"].iter().all(|k| o.data[*k].as_u64().unwrap_or(0) > 100);
    outcome(pass && covered, format!("{d}, {regimes}"))
}

fn c3() -> Outcome {
    let sc = scenario(
        r#"{"name": "c3", "generator": {"file": "-"}, "suites": ["separation"], "seed": 3,
            "tolerances": {"separation": 1e-12},
            "params": {"separation": {"samples": 1000, "max_q": 5, "max_n": 3, "eps": [0.0625, 0.1111111111111111]}}}"#,
    );
    let o = suite(&sc, SuiteId::Separation);
    let (pass, d) = suite_summary(&o);
    // the merging branch must be exercised, not only the identity
    let moved: Vec<u64> = o.data["eps"].as_array().map(|v| v.iter().map(|e| e["moved"].as_u64().unwrap_or(0)).collect()).unwrap_or_default();
    outcome(pass && moved.len() == 2 && moved.iter().all(|m| *m >= 25), format!("{d}, points moved per eps {moved:?}"))
}

fn c4() -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    // v_alpha = r^alpha cos(theta): energy pi (alpha^2 + 1) / (2 alpha) on the unit disc
    let g = SphereField::circle(4096, |u| QPoint::new(vec![vec![u[0]]])).unwrap();
    for alpha in [0.5, 1.0, 2.0] {
        let exact = PI * (alpha * alpha + 1.0) / (2.0 * alpha);
        let mut errs = Vec::new();
        for h in [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0] {
            let d = Arc::new(GridDomain::ball(2, 1.0, h).unwrap());
            let v = radial_extension(&g, alpha, d, &[0.0, 0.0], 1.0).unwrap();
            errs.push((interior_energy(&v, 2.0).unwrap() / exact - 1.0).abs());
        }
        let ok = errs[2] <= 0.02 && errs[0] > errs[1] && errs[1] > errs[2];
        pass &= ok;
        detail.push(format!("m=2 a={alpha}: |ratio-1|={:.2e},{:.2e},{:.2e}", errs[0], errs[1], errs[2]));
    }
    // constant trace c on S^2: alpha^2 |c|^2 4 pi / (1 + 2 alpha)
    let c = QPoint::new(vec![vec![1.0, -0.5], vec![0.25, 2.0]]).unwrap();
    let c2: f64 = c.as_flat().iter().map(|x| x * x).sum();
    let g = SphereField::latlong(64, 128, |_| Ok(c.clone())).unwrap();
    let d = Arc::new(GridDomain::ball(3, 1.0, 1.0 / 32.0).unwrap());
    for alpha in [0.5, 1.0, 2.0] {
        let exact = alpha * alpha * c2 * 4.0 * PI / (1.0 + 2.0 * alpha);
        let v = radial_extension(&g, alpha, d.clone(), &[0.0, 0.0, 0.0], 1.0).unwrap();
        let err = (interior_energy(&v, 2.0).unwrap() / exact - 1.0).abs();
        pass &= err <= 0.03;
        detail.push(format!("m=3 a={alpha}: {err:.2e}"));
    }
    outcome(pass, detail.join("; "))
}

fn c5() -> Outcome {
    let a = find_gap(3, 2.0, 0.0, 1.0).unwrap();
    let b = find_gap(3, 2.0, 0.0, 1.0).unwrap();
    let bits = |c: &qvl_core::competitor::GapCertificate| {
        [c.alpha0, c.delta0, c.eta0, c.mval, c.eps0].map(f64::to_bits)
    };
    let reproducible = bits(&a) == bits(&b);
    let mval = m_bound(3, 2.0, 0.0, a.alpha0, a.delta0, 1.0).unwrap();
    let gap_ok = a.eta0 > 0.0 && mval <= 1.0 / (3.0 - 2.0) - 2.0 * a.eta0 && mval == a.mval;
    let etas: Vec<f64> = [0.0, 1.0, 10.0].iter().map(|&m| find_gap(3, 2.0, m, 1.0).unwrap().eta0).collect();
    let monotone = etas.windows(2).all(|w| w[1] <= w[0]);
    outcome(
        reproducible && gap_ok && monotone,
        format!("eta0={:.6e} M(alpha0)={mval:.6e} reproducible={reproducible} eta0(M=0,1,10)={etas:?}", a.eta0),
    )
}

fn c6() -> Outcome {
    // 64 radial intervals (65 nodes per diameter line) by 64 angles; the
    // outer ring sits on the unit circle and carries cos(theta) exactly
    let d = Arc::new(GridDomain::polar_disc(1.0, 64, 64).unwrap());
    let b = QField::from_fn(d.clone(), |x, c| QPoint::new(vec![vec![if d.is_boundary(x) { c[0] } else { 0.0 }]])).unwrap();
    let out = solve_dirichlet(&b, &SolveOptions::default()).unwrap();
    let sup = (0..d.len()).map(|x| (out.field.raw(x)[0] - d.coord(x)[0]).abs()).fold(0.0, f64::max);
    let e_err = (out.energy / PI - 1.0).abs();
    // the staircase reading, for the record
    let cart = Arc::new(GridDomain::ball(2, 1.0, 1.0 / 32.0).unwrap());
    let cb = QField::from_fn(cart.clone(), |x, c| {
        let r = (c[0] * c[0] + c[1] * c[1]).sqrt();
        QPoint::new(vec![vec![if cart.is_boundary(x) { c[0] / r } else { 0.0 }]])
    })
    .unwrap();
    let cout = solve_dirichlet(&cb, &SolveOptions::default()).unwrap();
    let csup = (0..cart.len()).map(|x| (cout.field.raw(x)[0] - cart.coord(x)[0]).abs()).fold(0.0, f64::max);
    outcome(
        sup <= 1e-3 && e_err <= 0.01,
        format!("polar sup={sup:.2e} energy/pi-1={e_err:.2e} sweeps={} (Cartesian 65x65 staircase sup={csup:.2e}, informational)", out.trace.len() - 1),
    )
}

fn band_radii(d: &GridDomain, lo: f64, hi: f64) -> Vec<f64> {
    d.radii().iter().copied().filter(|r| *r >= lo - 1e-12 && *r <= hi + 1e-12).collect()
}

fn c7() -> Outcome {
    let d = Arc::new(GridDomain::polar_disc(1.0, 128, 256).unwrap());
    let fam = Family::BranchPair { k: 1 };
    let zero = QPoint::zero(2, 1);
    let b = QField::from_fn(d.clone(), |x, c| if d.is_boundary(x) { fam.eval(c) } else { Ok(zero.clone()) }).unwrap();
    let out = match solve_dirichlet(&b, &SolveOptions::default()) {
        Ok(o) => o,
        Err(e) => return outcome(false, format!("solver: {e}")),
    };
    let radii = band_radii(&d, 0.25, 0.75);
    let prof = frequency_profile(&out.field, &[0.0, 0.0], &radii).unwrap();
    let d_err = prof.rows.iter().map(|r| (r.stats.d / (2.0 * PI * r.stats.r) - 1.0).abs()).fold(0.0, f64::max);
    let ns: Vec<f64> = prof.n_values().into_iter().map(|n| n.unwrap_or(f64::NAN)).collect();
    let n_ok = ns.iter().all(|n| (0.45..=0.55).contains(n));
    let (nmin, nmax) = ns.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), n| (a.min(*n), b.max(*n)));
    outcome(
        d_err <= 0.05 && n_ok,
        format!("energy={:.4} max|D/(2 pi r)-1|={d_err:.3} N in [{nmin:.3}, {nmax:.3}] sweeps={}", out.energy, out.trace.len() - 1),
    )
}

fn analytic_samples() -> Vec<(&'static str, String)> {
    vec![
        ("Re z", r#"{"family": "harmonic", "k": 1}"#.into()),
        ("Re z^2", r#"{"family": "harmonic", "k": 2}"#.into()),
        ("Re z^3", r#"{"family": "harmonic", "k": 3}"#.into()),
        ("+-Re z^1/2", r#"{"family": "branch_pair", "k": 1}"#.into()),
    ]
}

fn c8() -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, fam) in analytic_samples() {
        let sc = scenario(&format!(
            r#"{{"name": "c8", "generator": {{"family": {fam}}}, "domain": {}, "suites": ["frequency"],
                "tolerances": {{"h_factor": 5.0, "frequency_rel": 0.02}},
                "params": {{"frequency": {{"r_min": 0.1, "r_max": 0.9}}}}}}"#,
            polar(128, 256)
        ));
        let o = suite(&sc, SuiteId::Frequency);
        let names = ["frequency_monotone", "theta_monotone", "h_derivative_residual", "no_vanishing_height", "frequency_matches_degree"];
        let mine: Vec<_> = o.assertions.iter().filter(|a| names.contains(&a.name.as_str())).collect();
        let ok = mine.len() == names.len() && mine.iter().all(|a| a.pass);
        pass &= ok;
        let v = |n: &str| mine.iter().find(|a| a.name == n).and_then(|a| a.value).unwrap_or(f64::NAN);
        detail.push(format!(
            "{name}: dN>={:.1e} dTheta>={:.1e} H'res={:.1e} |N-deg|/deg={:.1e}",
            v("frequency_monotone"),
            v("theta_monotone"),
            v("h_derivative_residual"),
            v("frequency_matches_degree")
        ));
    }
    outcome(pass, format!("5h={:.3e}; {}", 5.0 / 128.0, detail.join("; ")))
}

fn c9() -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    let levels = [64usize, 128, 256];
    for (name, fam) in analytic_samples() {
        // consts[level][kind] = residual / h
        let mut consts: Vec<Vec<f64>> = Vec::new();
        let mut detection = f64::INFINITY;
        for (li, &nr) in levels.iter().enumerate() {
            let sc = scenario(&format!(
                r#"{{"name": "c9", "generator": {{"family": {fam}}}, "domain": {}, "suites": ["stationarity"],
                    "tolerances": {{"h_factor": 5.0, "perturbation_factor": 10.0}},
                    "params": {{"stationarity": {{"perturbation": 0.1}}}}}}"#,
                polar(nr, 2 * nr)
            ));
            let o = suite(&sc, SuiteId::Stationarity);
            let finest = li + 1 == levels.len();
            for a in &o.assertions {
                let detects = a.name.starts_with("perturbed_");
                // detection improves with resolution; it is judged on the finest grid
                if !a.pass && (!detects || finest) {
                    pass = false;
                    detail.push(format!("{name} nr={nr} failed {}", a.name));
                }
                if detects && finest {
                    detection = detection.min(a.value.unwrap_or(0.0) / (a.limit.unwrap_or(f64::INFINITY) / 10.0));
                }
            }
            let h = 1.0 / nr as f64;
            consts.push(
                o.assertions
                    .iter()
                    .filter(|a| a.name.starts_with("squ") && a.relation == qvl_cli::report::Relation::AtMost)
                    .map(|a| a.value.unwrap_or(f64::NAN) / h)
                    .collect(),
            );
        }
        // stable: C = residual / h grows by at most 25% per refinement
        let mut worst: f64 = 0.0;
        for k in 0..consts[0].len() {
            for w in consts.windows(2) {
                if w[0][k] > 0.0 {
                    worst = worst.max(w[1][k] / w[0][k]);
                }
                pass &= !(w[1][k] > 1.25 * w[0][k]);
            }
        }
        let cmax = |l: &Vec<f64>| l.iter().copied().fold(0.0, f64::max);
        detail.push(format!(
            "{name}: C(nr=64,128,256)={:.3},{:.3},{:.3} worst growth {worst:.2} perturbed/baseline>={detection:.0}",
            cmax(&consts[0]),
            cmax(&consts[1]),
            cmax(&consts[2])
        ));
    }
    outcome(pass, detail.join("; "))
}

fn c10() -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    let d = Arc::new(GridDomain::polar_disc(1.0, 256, 512).unwrap());
    let h = d.h();
    let radii = band_radii(&d, 0.25, 0.75);
    let mut fields: Vec<(&str, QField, bool)> = Vec::new();
    for (name, fam) in analytic_samples() {
        let f: Family = serde_json::from_str(&fam).unwrap();
        fields.push((name, f.sample(d.clone()).unwrap(), true));
    }
    let mixed = QField::from_fn(d.clone(), |_, c| {
        let (x, y) = (c[0], c[1]);
        QPoint::new(vec![vec![x + 0.5 * (x * x - y * y)]])
    })
    .unwrap();
    fields.push(("Re z + Re z^2/2", mixed, false));
    for (name, f, homogeneous) in &fields {
        let prof = frequency_profile(f, &[0.0, 0.0], &radii).unwrap();
        let b = frequency_bounds_check(&prof, *radii.last().unwrap()).unwrap();
        let margin = b.lower_margin.min(b.upper_margin).min(b.d_margin.unwrap_or(f64::INFINITY));
        let mut ok = margin >= -5.0 * h && !b.d_bound_skipped;
        if *homogeneous {
            ok &= b.max_equality_gap <= 0.01;
        }
        pass &= ok;
        detail.push(format!("{name}: margin={margin:.2e} equality gap={:.2e}", b.max_equality_gap));
    }
    outcome(pass, detail.join("; "))
}

fn c11() -> Outcome {
    let fam = Family::BranchPair { k: 1 };
    let eval = |x: &[f64]| fam.eval(x);
    let probe = AnalyticProbe { eval: &eval, nr: 64, ntheta: 128 };
    let centers = vec![vec![0.0, 0.0], vec![0.25, 0.0], vec![0.0, 0.3], vec![-0.2, -0.2], vec![-0.4, 0.0]];
    let radii: Vec<f64> = (1..=10).map(|k| 0.05 * k as f64).collect();
    let rep = vmo_report(&probe, &centers, &radii, &VmoOptions::default()).unwrap();
    let w = &rep.dyadic_modulus;
    let vanishing = w.windows(2).all(|p| p[1] < p[0]) && *w.last().unwrap() <= 1e-3 * w[0];
    let pass = rep.modulus_nondecreasing && vanishing && rep.dichotomy_holds && rep.oscillation_ok;
    outcome(
        pass,
        format!(
            "omega nondecreasing={} omega(rho_j)={:?} dichotomy={} ({} steps) K={:.4} oscillation ok={}",
            rep.modulus_nondecreasing,
            w,
            rep.dichotomy_holds,
            rep.dichotomy.len(),
            rep.oscillation_multiple,
            rep.oscillation_ok
        ),
    )
}

fn c12() -> Outcome {
    let sc = scenario(
        r#"{"name": "c12", "generator": {"file": "-"}, "suites": ["interpolation"], "seed": 12,
            "tolerances": {"interpolation_spread": 0.2, "transit_rel": 0.02},
            "params": {"interpolation": {"datasets": 20, "h": 0.015625, "eps": 0.125, "p": 2.0, "ntheta": 256}}}"#,
    );
    let o = suite(&sc, SuiteId::Interpolation);
    let (pass, d) = suite_summary(&o);
    outcome(pass, format!("{d}; constants {}", o.data["constants"]))
}

fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn c13() -> Outcome {
    let mut names: Vec<PathBuf> = fs::read_dir(scenario_dir()).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    let tmp = std::env::temp_dir().join(format!("qvl-acceptance-{}", std::process::id()));
    let mut compared = 0;
    let mut mismatches = Vec::new();
    for path in &names {
        let sc = Scenario::load(path).unwrap();
        let stem = path.file_stem().unwrap().to_string_lossy().to_string();
        let dirs = [tmp.join(format!("{stem}-a")), tmp.join(format!("{stem}-b"))];
        for d in &dirs {
            run(sc.clone(), &RunOptions { out: Some(d.clone()), ..Default::default() }).unwrap();
        }
        let mut files: Vec<_> = fs::read_dir(&dirs[0]).unwrap().map(|e| e.unwrap().file_name()).collect();
        files.sort();
        for f in files {
            compared += 1;
            if fs::read(dirs[0].join(&f)).unwrap() != fs::read(dirs[1].join(&f)).unwrap() {
                mismatches.push(format!("{stem}/{}", f.to_string_lossy()));
            }
        }
    }
    let _ = fs::remove_dir_all(&tmp);
    outcome(mismatches.is_empty() && compared > 0, format!("{} scenarios, {compared} files compared, mismatches {mismatches:?}", names.len()))
}

fn main() {
    let criteria: [(usize, &str, u64, fn() -> Outcome); 13] = [
        (1, "metric correctness", 10, c1),
        (2, "retraction", 10, c2),
        (3, "separation", 30, c3),
        (4, "radial energy closed form", 60, c4),
        (5, "gap certificate", 1, c5),
        (6, "Dirichlet solver, Q=1 oracle", 30, c6),
        (7, "branch-pair minimizer", 120, c7),
        (8, "frequency monotonicity and H' identity", 60, c8),
        (9, "squash identity and stationarity residuals", 60, c9),
        (10, "frequency bounds", 30, c10),
        (11, "VMO and log decay", 60, c11),
        (12, "interpolation bounds", 60, c12),
        (13, "determinism", u64::MAX, c13),
    ];
    let only: Option<usize> = std::env::var("QVL_CRITERION").ok().and_then(|v| v.parse().ok());
    let mut unexpected = Vec::new();
    for (k, name, limit, f) in criteria {
        if only.is_some_and(|o| o != k) {
            continue;
        }
        let t = Instant::now();
        let o = f();
        let elapsed = t.elapsed();
        let in_time = elapsed < Duration::from_secs(limit);
        let pass = o.pass && in_time;
        let limit_text = if limit == u64::MAX { String::new() } else { format!(" < {limit} s") };
        let tag = match (pass, KNOWN_RED.contains(&k)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known red)",
            (false, false) => "FAIL",
        };
        println!("criterion {k:>2} {tag}: {name} [{:.1} s{limit_text}] {}", elapsed.as_secs_f64(), o.detail);
        if !pass && !KNOWN_RED.contains(&k) {
            unexpected.push(k);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("failing criteria: {unexpected:?}");
        std::process::exit(1);
    }
}

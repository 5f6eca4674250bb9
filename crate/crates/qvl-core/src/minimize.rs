//! Discrete Dirichlet problem for Q-valued maps, almost-minimality audits and
//! energy-decay diagnostics.
//!
//! The solver minimizes the edge energy with the boundary trace held fixed.
//! Each edge carries a frozen sheet matching; between re-matchings the
//! objective is a sum of per-edge terms in the node sheets, relaxed node by
//! node (over-relaxed Gauss-Seidel for p = 2, backtracking gradient steps
//! otherwise). Re-matching only lowers the objective, and a sweep that fails
//! to lower it is rolled back, so the recorded trace never increases.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::competitor::GapCertificate;
use crate::error::{ConvergenceFailure, QvlError, Result};
use crate::grid::{DomainSpec, GridDomain};
use crate::qfield::{
    ball_energy_from_norms, edge_energy, sphere_tangential_energy, triple_norms, QField,
};
use crate::qspace::match_sheets;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub max_sweeps: usize,
    /// Relative objective decrease per sweep below which a sweep counts as
    /// stalled.
    pub tol: f64,
    /// Largest nodal change in a sweep, relative to the boundary scale, below
    /// which a sweep counts as stalled (both tests must hold).
    pub update_tol: f64,
    pub rematch_period: usize,
    /// Extra runs from noisy starts after the clean one.
    pub restarts: usize,
    pub seed: u64,
    pub p: f64,
    /// Noise amplitude relative to the largest boundary value.
    pub noise: f64,
    /// Over-relaxation factor for p = 2; `None` picks one from the grid size.
    pub omega: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_sweeps: 20_000,
            tol: 1e-12,
            update_tol: 1e-11,
            rematch_period: 5,
            restarts: 0,
            seed: 0,
            p: 2.0,
            noise: 0.05,
            omega: None,
        }
    }
}

impl SolveOptions {
    fn validate(&self) -> Result<()> {
        if self.max_sweeps == 0 || !(self.tol > 0.0) || !(self.update_tol > 0.0) || self.rematch_period == 0 {
            return Err(QvlError::Parameter("need max_sweeps >= 1, tol > 0 and rematch_period >= 1".into()));
        }
        if !(self.p > 1.0) || !self.p.is_finite() {
            return Err(QvlError::Parameter(format!("p must lie in (1, inf), got {}", self.p)));
        }
        if let Some(w) = self.omega {
            if !(w > 0.0 && w < 2.0) {
                return Err(QvlError::Parameter(format!("relaxation factor must lie in (0, 2), got {w}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub sweep: usize,
    pub energy: f64,
    pub rematches: usize,
}

#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub field: QField,
    /// Edge energy with optimal matchings.
    pub energy: f64,
    /// Trace of the winning run.
    pub trace: Vec<SweepRecord>,
    /// Index of the winning run (0 is the noise-free start).
    pub restart: usize,
}

impl SolveOutput {
    /// CSV `sweep,energy,rematches`.
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("sweep,energy,rematches\n");
        for r in &self.trace {
            s.push_str(&format!("{},{},{}\n", r.sweep, r.energy, r.rematches));
        }
        s
    }
}

struct Adjacent {
    edge: usize,
    other: usize,
    /// whether the node is the `a` end of the edge
    is_a: bool,
    /// vol / len^p
    coef: f64,
}

struct Problem<'a> {
    d: &'a GridDomain,
    q: usize,
    n: usize,
    p: f64,
    adj: Vec<Vec<Adjacent>>,
    free: Vec<usize>,
}

impl<'a> Problem<'a> {
    fn new(d: &'a GridDomain, q: usize, n: usize, p: f64) -> Self {
        let mut adj: Vec<Vec<Adjacent>> = (0..d.len()).map(|_| Vec::new()).collect();
        for (k, e) in d.edges().iter().enumerate() {
            let coef = e.vol / e.len.powf(p);
            adj[e.a].push(Adjacent { edge: k, other: e.b, is_a: true, coef });
            adj[e.b].push(Adjacent { edge: k, other: e.a, is_a: false, coef });
        }
        let free = d.interior_nodes();
        Problem { d, q, n, p, adj, free }
    }

    fn w(&self) -> usize {
        self.q * self.n
    }

    fn edge_term(&self, vals: &[f64], perm: &[usize], k: usize) -> f64 {
        let e = &self.d.edges()[k];
        let (w, n) = (self.w(), self.n);
        let (a, b) = (&vals[e.a * w..(e.a + 1) * w], &vals[e.b * w..(e.b + 1) * w]);
        let mut s = 0.0;
        for i in 0..self.q {
            for c in 0..n {
                let t = a[i * n + c] - b[perm[i] * n + c];
                s += t * t;
            }
        }
        s
    }

    fn objective(&self, vals: &[f64], perms: &[Vec<usize>]) -> f64 {
        (0..self.d.edges().len())
            .map(|k| {
                let e = &self.d.edges()[k];
                e.vol / e.len.powf(self.p) * self.edge_term(vals, &perms[k], k).powf(self.p / 2.0)
            })
            .sum()
    }

    fn rematch(&self, vals: &[f64], perms: &mut [Vec<usize>]) -> usize {
        let w = self.w();
        let mut changed = 0;
        for (k, e) in self.d.edges().iter().enumerate() {
            let (s, c) = match_sheets(&vals[e.a * w..(e.a + 1) * w], &vals[e.b * w..(e.b + 1) * w], self.q, self.n);
            // keep the old matching on ties so the objective cannot rise
            if s != perms[k] && c < self.edge_term(vals, &perms[k], k) {
                perms[k] = s;
                changed += 1;
            }
        }
        changed
    }

    /// Sheet of `other` coupled to sheet `i` of the node across edge `adj`.
    fn partner(&self, adj: &Adjacent, perms: &[Vec<usize>], inv: &[Vec<usize>], i: usize) -> usize {
        if adj.is_a {
            perms[adj.edge][i]
        } else {
            inv[adj.edge][i]
        }
    }

    fn sor_sweep(&self, vals: &mut [f64], perms: &[Vec<usize>], inv: &[Vec<usize>], omega: f64) {
        let (w, n) = (self.w(), self.n);
        let mut acc = vec![0.0; w];
        for &x in &self.free {
            acc.iter_mut().for_each(|a| *a = 0.0);
            let mut total = 0.0;
            for adj in &self.adj[x] {
                total += adj.coef;
                for i in 0..self.q {
                    let j = self.partner(adj, perms, inv, i);
                    for c in 0..n {
                        acc[i * n + c] += adj.coef * vals[adj.other * w + j * n + c];
                    }
                }
            }
            if total > 0.0 {
                for t in 0..w {
                    let cur = vals[x * w + t];
                    vals[x * w + t] = cur + omega * (acc[t] / total - cur);
                }
            }
        }
    }

    fn local(&self, x: usize, u: &[f64], vals: &[f64], perms: &[Vec<usize>], inv: &[Vec<usize>], grad: Option<&mut [f64]>) -> f64 {
        let (w, n, p) = (self.w(), self.n, self.p);
        let mut e = 0.0;
        let mut g = grad;
        if let Some(g) = g.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        for adj in &self.adj[x] {
            let mut s = 0.0;
            for i in 0..self.q {
                let j = self.partner(adj, perms, inv, i);
                for c in 0..n {
                    let t = u[i * n + c] - vals[adj.other * w + j * n + c];
                    s += t * t;
                }
            }
            e += adj.coef * s.powf(p / 2.0);
            if let Some(g) = g.as_deref_mut() {
                if s > 0.0 {
                    let k = adj.coef * p * s.powf(p / 2.0 - 1.0);
                    for i in 0..self.q {
                        let j = self.partner(adj, perms, inv, i);
                        for c in 0..n {
                            g[i * n + c] += k * (u[i * n + c] - vals[adj.other * w + j * n + c]);
                        }
                    }
                }
            }
        }
        e
    }

    fn gradient_sweep(&self, vals: &mut [f64], perms: &[Vec<usize>], inv: &[Vec<usize>], steps: &mut [f64]) {
        let w = self.w();
        let mut g = vec![0.0; w];
        let mut trial = vec![0.0; w];
        for &x in &self.free {
            let u: Vec<f64> = vals[x * w..(x + 1) * w].to_vec();
            let e0 = self.local(x, &u, vals, perms, inv, Some(&mut g));
            let gg: f64 = g.iter().map(|v| v * v).sum();
            if gg == 0.0 {
                continue;
            }
            let mut t = steps[x] * 2.0;
            let mut accepted = false;
            for _ in 0..60 {
                for k in 0..w {
                    trial[k] = u[k] - t * g[k];
                }
                let e1 = self.local(x, &trial, vals, perms, inv, None);
                if e1 <= e0 - 1e-4 * t * gg {
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if accepted {
                vals[x * w..(x + 1) * w].copy_from_slice(&trial);
                steps[x] = t;
            } else {
                steps[x] = t.max(1e-300);
            }
        }
    }
}

fn inverse(p: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; p.len()];
    for (i, &j) in p.iter().enumerate() {
        inv[j] = i;
    }
    inv
}

/// Radial extension of the boundary values about `center`: each free node
/// takes the boundary value in the closest direction, scaled by
/// `(|x - c| / |x_b - c|)^alpha`.
fn radial_from_boundary(d: &GridDomain, vals: &mut [f64], w: usize, center: &[f64], alpha: f64) {
    let m = d.m();
    if d.is_polar() {
        let nr = d.nr();
        let outer = d.radii()[nr];
        for x in d.interior_nodes() {
            let (i, j) = d.polar_index(x);
            let s = (d.radii()[i] / outer).powf(alpha);
            let b = d.polar_node(nr, j);
            for t in 0..w {
                vals[x * w + t] = s * vals[b * w + t];
            }
        }
        return;
    }
    let bnodes = d.boundary_nodes();
    let rel = |x: usize| -> (Vec<f64>, f64) {
        let z: Vec<f64> = d.coord(x).iter().zip(center).map(|(a, c)| a - c).collect();
        let r = z.iter().map(|t| t * t).sum::<f64>().sqrt();
        (z, r)
    };
    let bdirs: Vec<(usize, Vec<f64>, f64)> = bnodes
        .iter()
        .map(|&b| {
            let (z, r) = rel(b);
            let u = if r > 0.0 { z.iter().map(|t| t / r).collect() } else { vec![0.0; m] };
            (b, u, r)
        })
        .collect();
    let mut sorted_angles: Vec<(f64, usize)> = Vec::new();
    if m == 2 {
        sorted_angles = bdirs.iter().enumerate().map(|(k, (_, u, _))| (u[1].atan2(u[0]), k)).collect();
        sorted_angles.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    }
    for x in d.interior_nodes() {
        let (z, r) = rel(x);
        if r == 0.0 {
            for t in 0..w {
                vals[x * w + t] = 0.0;
            }
            continue;
        }
        let best = if m == 2 {
            let th = z[1].atan2(z[0]);
            let pos = sorted_angles.partition_point(|a| a.0 < th);
            let cands = [pos % sorted_angles.len(), (pos + sorted_angles.len() - 1) % sorted_angles.len()];
            let score = |k: usize| -> f64 { bdirs[k].1.iter().zip(&z).map(|(a, b)| a * b).sum() };
            let (k0, k1) = (sorted_angles[cands[0]].1, sorted_angles[cands[1]].1);
            if score(k1) > score(k0) {
                k1
            } else {
                k0
            }
        } else {
            let mut best = (f64::NEG_INFINITY, 0);
            for (k, (_, u, _)) in bdirs.iter().enumerate() {
                let s: f64 = u.iter().zip(&z).map(|(a, b)| a * b).sum();
                if s > best.0 {
                    best = (s, k);
                }
            }
            best.1
        };
        let (b, _, rb) = &bdirs[best];
        let s = if *rb > 0.0 { (r / rb).powf(alpha) } else { 1.0 };
        for t in 0..w {
            vals[x * w + t] = s * vals[b * w + t];
        }
    }
}

fn default_omega(d: &GridDomain) -> f64 {
    let nodes_across = if d.is_polar() {
        d.nr().max(d.ntheta() / 4) as f64
    } else {
        (d.len() as f64).powf(1.0 / d.m() as f64)
    };
    (2.0 / (1.0 + std::f64::consts::PI / nodes_across)).clamp(1.0, 1.98)
}

struct Run {
    vals: Vec<f64>,
    trace: Vec<SweepRecord>,
    converged: bool,
}

fn run_once(pb: &Problem, mut vals: Vec<f64>, opts: &SolveOptions, scale: f64) -> Run {
    let edges = pb.d.edges();
    let w = pb.w();
    let mut perms: Vec<Vec<usize>> = edges
        .iter()
        .map(|e| match_sheets(&vals[e.a * w..(e.a + 1) * w], &vals[e.b * w..(e.b + 1) * w], pb.q, pb.n).0)
        .collect();
    let mut inv: Vec<Vec<usize>> = perms.iter().map(|p| inverse(p)).collect();
    let omega = opts.omega.unwrap_or_else(|| default_omega(pb.d));
    let mut steps = vec![1e-3; pb.d.len()];
    let mut energy = pb.objective(&vals, &perms);
    let mut trace = vec![SweepRecord { sweep: 0, energy, rematches: 0 }];
    let mut backup = vals.clone();
    for sweep in 1..=opts.max_sweeps {
        let mut rematches = 0;
        if sweep % opts.rematch_period == 0 && pb.q > 1 {
            rematches = pb.rematch(&vals, &mut perms);
            if rematches > 0 {
                inv = perms.iter().map(|p| inverse(p)).collect();
                energy = pb.objective(&vals, &perms);
            }
        }
        backup.copy_from_slice(&vals);
        if pb.p == 2.0 {
            pb.sor_sweep(&mut vals, &perms, &inv, omega);
        } else {
            pb.gradient_sweep(&mut vals, &perms, &inv, &mut steps);
        }
        let next = pb.objective(&vals, &perms);
        if next > energy {
            vals.copy_from_slice(&backup);
            trace.push(SweepRecord { sweep, energy, rematches });
            return Run { vals, trace, converged: true };
        }
        let moved = vals.iter().zip(&backup).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let stalled = energy == next
            || (energy - next <= opts.tol * energy.max(f64::MIN_POSITIVE) && moved <= opts.update_tol * scale);
        energy = next;
        trace.push(SweepRecord { sweep, energy, rematches });
        if stalled {
            let changed = if pb.q > 1 { pb.rematch(&vals, &mut perms) } else { 0 };
            if changed == 0 {
                return Run { vals, trace, converged: true };
            }
            inv = perms.iter().map(|p| inverse(p)).collect();
            energy = pb.objective(&vals, &perms);
        }
    }
    Run { vals, trace, converged: false }
}

/// Minimizes the edge p-energy on `domain` with the boundary values of
/// `boundary` held fixed (its interior values are ignored).
pub fn solve_dirichlet(boundary: &QField, opts: &SolveOptions) -> Result<SolveOutput> {
    opts.validate()?;
    let d = boundary.domain();
    let (q, n) = (boundary.q(), boundary.n());
    let w = q * n;
    let pb = Problem::new(d, q, n, opts.p);
    let mut init = boundary.flat().to_vec();
    let center = d.center().to_vec();
    radial_from_boundary(d, &mut init, w, &center, 1.0);
    let scale = d
        .boundary_nodes()
        .iter()
        .map(|&b| boundary.raw(b).iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
        .max(1e-300);

    let mut best: Option<(f64, usize, Run)> = None;
    let mut failed: Option<Run> = None;
    for k in 0..=opts.restarts {
        let mut start = init.clone();
        if k > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(k as u64));
            for &x in &pb.free {
                for t in 0..w {
                    start[x * w + t] += opts.noise * scale * rng.gen_range(-1.0..1.0);
                }
            }
        }
        let run = run_once(&pb, start, opts, scale);
        if !run.converged {
            failed = Some(run);
            continue;
        }
        let field = QField::from_flat(boundary.domain_arc().clone(), q, n, run.vals.clone())?;
        let e = edge_energy(&field, |_| true, opts.p)?;
        if best.as_ref().is_none_or(|b| e < b.0) {
            best = Some((e, k, run));
        }
    }
    match best {
        Some((energy, restart, run)) => {
            let field = QField::from_flat(boundary.domain_arc().clone(), q, n, run.vals)?;
            Ok(SolveOutput { field, energy, trace: run.trace, restart })
        }
        None => {
            let run = failed.expect("at least one run happened");
            let last = QField::from_flat(boundary.domain_arc().clone(), q, n, run.vals)?;
            Err(QvlError::Convergence(Box::new(ConvergenceFailure {
                message: format!("no run converged within {} sweeps", opts.max_sweeps),
                last_iterate: last,
                energy_trace: run.trace.iter().map(|r| r.energy).collect(),
            })))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

/// The sub-domain of `d` on the ball, and the parent node of each sub node.
fn sub_domain(d: &GridDomain, ball: &Ball) -> Result<(Arc<GridDomain>, Vec<usize>)> {
    if d.is_polar() {
        if !d.is_polar_disc() || ball.center.iter().any(|c| c.abs() > 1e-12) {
            return Err(QvlError::Domain("balls on polar grids must be centered at the origin".into()));
        }
        let k = (ball.radius / d.h()).round() as usize;
        if k < 2 || k > d.nr() || (ball.radius - d.radii()[k]).abs() > 1e-9 {
            return Err(QvlError::Domain(format!("radius {} is not an admissible ring radius", ball.radius)));
        }
        let sub = GridDomain::new(DomainSpec::Polar { inner: 0.0, outer: ball.radius, nr: k, ntheta: d.ntheta() })?;
        let map = (0..sub.len())
            .map(|x| {
                let (i, j) = sub.polar_index(x);
                d.polar_node(i, j)
            })
            .collect();
        return Ok((Arc::new(sub), map));
    }
    let c = d
        .find_node(&ball.center, 1e-9 * d.h())
        .ok_or_else(|| QvlError::Domain("ball centers must be grid nodes".into()))?;
    let sub = GridDomain::new(DomainSpec::Ball { m: d.m(), radius: ball.radius, h: d.h(), center: Some(d.coord(c).to_vec()) })?;
    let mut map = Vec::with_capacity(sub.len());
    for x in 0..sub.len() {
        let y = d
            .find_node(sub.coord(x), 1e-9 * d.h())
            .ok_or_else(|| QvlError::Domain(format!("ball of radius {} exits the domain", ball.radius)))?;
        if !sub.is_boundary(x) && d.is_boundary(y) {
            return Err(QvlError::Domain(format!("ball of radius {} exits the domain", ball.radius)));
        }
        map.push(y);
    }
    Ok((Arc::new(sub), map))
}

fn restrict(u: &QField, sub: &Arc<GridDomain>, map: &[usize]) -> Result<QField> {
    let data: Vec<f64> = map.iter().flat_map(|&y| u.raw(y).iter().copied()).collect();
    QField::from_flat(sub.clone(), u.q(), u.n(), data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlmostMinSample {
    pub center: Vec<f64>,
    pub radius: f64,
    pub energy: f64,
    pub resolved: f64,
    pub radial: f64,
    /// `energy / min(resolved, radial)`; 1 when both sides vanish.
    pub ratio: f64,
    pub omega: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlmostMinReport {
    pub p: f64,
    pub alpha0: f64,
    pub slack: f64,
    pub samples: Vec<AlmostMinSample>,
    pub worst_ratio: f64,
    pub pass: bool,
}

/// Compares the edge energy of `u` on each ball with two competitors sharing
/// its trace: a re-solved Dirichlet field and the radial extension with
/// exponent `alpha0`. The best competitor only bounds the true infimum from
/// above, so a pass is a necessary condition.
pub fn verify_almost_min(
    u: &QField,
    modular_function: &dyn Fn(f64) -> f64,
    balls: &[Ball],
    alpha0: f64,
    opts: &SolveOptions,
    slack: f64,
) -> Result<AlmostMinReport> {
    let p = opts.p;
    let mut samples = Vec::new();
    for ball in balls {
        let (sub, map) = sub_domain(u.domain(), ball)?;
        let v = restrict(u, &sub, &map)?;
        let energy = edge_energy(&v, |_| true, p)?;
        let resolved = match solve_dirichlet(&v, opts) {
            Ok(out) => out.energy,
            Err(QvlError::Convergence(f)) => edge_energy(&f.last_iterate, |_| true, p)?,
            Err(e) => return Err(e),
        };
        let mut data = v.flat().to_vec();
        radial_from_boundary(&sub, &mut data, u.q() * u.n(), sub.center(), alpha0);
        let radial = edge_energy(&QField::from_flat(sub.clone(), u.q(), u.n(), data)?, |_| true, p)?;
        let best = resolved.min(radial);
        let ratio = if best > 0.0 { energy / best } else if energy > 0.0 { f64::INFINITY } else { 1.0 };
        let omega = modular_function(ball.radius);
        samples.push(AlmostMinSample {
            center: ball.center.clone(),
            radius: ball.radius,
            energy,
            resolved,
            radial,
            ratio,
            omega,
            pass: ratio <= 1.0 + omega + slack,
        });
    }
    let worst_ratio = samples.iter().map(|s| s.ratio).fold(f64::NEG_INFINITY, f64::max);
    let pass = samples.iter().all(|s| s.pass);
    Ok(AlmostMinReport { p, alpha0, slack, samples, worst_ratio, pass })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialComparisonSample {
    pub center: Vec<f64>,
    pub radius: f64,
    /// `int_{B} |||Du|||^p`
    pub lhs: f64,
    /// `(1/(m-p) - eta0) r int_{dB} |||D_T u|||^p`
    pub rhs: f64,
    /// `lhs / rhs` (0 when both vanish).
    pub ratio: f64,
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialComparisonReport {
    pub eta0: f64,
    pub factor: f64,
    pub samples: Vec<RadialComparisonSample>,
    pub pass: bool,
}

pub fn radial_comparison_check(u: &QField, cert: &GapCertificate, balls: &[Ball]) -> Result<RadialComparisonReport> {
    let m = u.domain().m();
    let p = cert.p;
    if m != cert.m || !(p > 1.0 && p < m as f64) {
        return Err(QvlError::Parameter(format!("need 1 < p < m with m = {m} matching the certificate")));
    }
    let factor = 1.0 / (m as f64 - p) - cert.eta0;
    let norms = triple_norms(u);
    let mut samples = Vec::new();
    for b in balls {
        let lhs = ball_energy_from_norms(u.domain(), &norms, &b.center, b.radius, p)?;
        let rhs = factor * b.radius * sphere_tangential_energy(u, &b.center, b.radius, p)?;
        let ratio = if rhs > 0.0 { lhs / rhs } else if lhs > 0.0 { f64::INFINITY } else { 0.0 };
        samples.push(RadialComparisonSample {
            center: b.center.clone(),
            radius: b.radius,
            lhs,
            rhs,
            ratio,
            margin: rhs - lhs,
            pass: lhs <= rhs,
        });
    }
    let pass = samples.iter().all(|s| s.pass);
    Ok(RadialComparisonReport { eta0: cert.eta0, factor, samples, pass })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecaySample {
    pub radius: f64,
    /// `int_{B(a,r)} |||Du|||^p`
    pub energy: f64,
    /// `r int_{dB(a,r)} |||D_T u|||^p`
    pub boundary: f64,
    /// `energy / boundary`
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub center: Vec<f64>,
    pub p: f64,
    pub samples: Vec<DecaySample>,
    /// Least-squares slope of `ln E` against `ln r`.
    pub slope: Option<f64>,
    pub fit_residual: Option<f64>,
    /// `slope - (m - p)`
    pub eta_hat: Option<f64>,
    /// `eta_hat / p`
    pub holder: Option<f64>,
    /// Smallest ratio between consecutive values of `r^{-(m-p+eta_hat)} E(r)`.
    pub monotonicity: Option<f64>,
    pub degenerate: bool,
}

pub fn decay_profile(u: &QField, a: &[f64], radii: &[f64], p: f64) -> Result<DecayReport> {
    if radii.len() < 3 {
        return Err(QvlError::Parameter("decay profile needs at least 3 radii".into()));
    }
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(QvlError::Parameter("radii must increase strictly".into()));
    }
    let d = u.domain();
    let m = d.m() as f64;
    let norms = triple_norms(u);
    let mut samples = Vec::new();
    for &r in radii {
        let energy = ball_energy_from_norms(d, &norms, a, r, p)?;
        let boundary = r * sphere_tangential_energy(u, a, r, p)?;
        let ratio = if boundary > 0.0 { energy / boundary } else { 0.0 };
        samples.push(DecaySample { radius: r, energy, boundary, ratio });
    }
    let degenerate = samples.iter().any(|s| !(s.energy > 0.0));
    let (mut slope, mut fit_residual, mut eta_hat, mut holder, mut monotonicity) = (None, None, None, None, None);
    if !degenerate {
        let xs: Vec<f64> = samples.iter().map(|s| s.radius.ln()).collect();
        let ys: Vec<f64> = samples.iter().map(|s| s.energy.ln()).collect();
        let (b, c, res) = least_squares(&xs, &ys);
        slope = Some(b);
        fit_residual = Some(res);
        let eh = b - (m - p);
        eta_hat = Some(eh);
        holder = Some(eh / p);
        let scaled: Vec<f64> = samples.iter().map(|s| s.energy * s.radius.powf(-(m - p + eh))).collect();
        monotonicity = Some(scaled.windows(2).map(|w| w[1] / w[0]).fold(f64::INFINITY, f64::min));
        let _ = c;
    }
    Ok(DecayReport { center: a.to_vec(), p, samples, slope, fit_residual, eta_hat, holder, monotonicity, degenerate })
}

/// `y ~ slope x + intercept`; returns `(slope, intercept, rms residual)`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let icpt = my - slope * mx;
    let rms = (xs.iter().zip(ys).map(|(x, y)| (y - slope * x - icpt).powi(2)).sum::<f64>() / k).sqrt();
    (slope, icpt, rms)
}

/// Exponents and constants feeding the decay chain: the Sobolev exponent
/// `p*`, `eta = eta0 / C` and `M = (C^2 / eta0^2)^{p*/(p*-p)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProofConstants {
    pub p_star: f64,
    pub eta: f64,
    pub big_m: f64,
}

/// `(m-1)p/(m-1-p)` when `p < m - 1`, otherwise `fallback` (any exponent
/// above `p`).
pub fn sobolev_exponent(m: usize, p: f64, fallback: f64) -> Result<f64> {
    let k = m as f64 - 1.0;
    if p < k {
        Ok(k * p / (k - p))
    } else if fallback > p {
        Ok(fallback)
    } else {
        Err(QvlError::Parameter(format!("fallback exponent {fallback} must exceed p = {p}")))
    }
}

pub fn proof_constants(cert: &GapCertificate, c: f64, fallback: Option<f64>) -> Result<ProofConstants> {
    if !(c > 0.0) {
        return Err(QvlError::Parameter("C must be positive".into()));
    }
    let p_star = sobolev_exponent(cert.m, cert.p, fallback.unwrap_or(2.0 * cert.p))?;
    let eta = cert.eta0 / c;
    let big_m = (c * c / (cert.eta0 * cert.eta0)).powf(p_star / (p_star - cert.p));
    Ok(ProofConstants { p_star, eta, big_m })
}

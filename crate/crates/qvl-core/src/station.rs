//! Stationarity diagnostics: inner (squeeze) and outer (squash) variation
//! residuals, the frequency function and its corollary bounds, boundedness,
//! and the energy modulus with its logarithmic decay.
//!
//! Monotonicity and identity checks hold exactly only for stationary maps,
//! so every check reports a signed margin and callers compare it with a
//! discretization tolerance.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QvlError, Result};
use crate::grid::GridDomain;
use crate::qfield::{ball_energy_from_norms, jet, mean_on_weighted, sphere_integrals, triple_norms, QField};
use crate::qspace::{match_sheets, QPoint};

/// `1` on `[0, inner]`, `0` on `[outer, inf)`, a `cos^2` ramp between.
/// Returns `(chi, chi')`.
pub fn cutoff(t: f64, inner: f64, outer: f64) -> (f64, f64) {
    if t <= inner {
        (1.0, 0.0)
    } else if t >= outer {
        (0.0, 0.0)
    } else {
        let w = outer - inner;
        let s = std::f64::consts::FRAC_PI_2 * (t - inner) / w;
        (s.cos().powi(2), -std::f64::consts::FRAC_PI_2 / w * (2.0 * s).sin())
    }
}

/// A compactly supported vector field on the domain with its Jacobian.
pub trait VectorFieldSpec: Sync {
    /// `(X(x), DX(x))` with `DX[k * m + l] = d X_k / d x_l`.
    fn eval(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>);
}

/// `X(x) = chi(|x - c|) (x - c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialCutoff {
    pub center: Vec<f64>,
    pub inner: f64,
    pub outer: f64,
}

impl VectorFieldSpec for RadialCutoff {
    fn eval(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let m = x.len();
        let z: Vec<f64> = x.iter().zip(&self.center).map(|(a, c)| a - c).collect();
        let t = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let (chi, dchi) = cutoff(t, self.inner, self.outer);
        let mut dx = vec![0.0; m * m];
        for k in 0..m {
            dx[k * m + k] = chi;
            if t > 0.0 {
                for l in 0..m {
                    dx[k * m + l] += dchi * z[k] * z[l] / t;
                }
            }
        }
        (z.iter().map(|v| chi * v).collect(), dx)
    }
}

/// A fiber field `Y(x, y)` with its partial Jacobians.
pub trait FiberFieldSpec: Sync {
    /// `(Y, D_x Y, D_y Y)` with `D_x Y[c * m + k] = d Y_c / d x_k` and
    /// `D_y Y[c * n + e] = d Y_c / d y_e`.
    fn eval(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>);
}

/// `Y(x, y) = chi(|x - c|) y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffScaling {
    pub center: Vec<f64>,
    pub inner: f64,
    pub outer: f64,
}

impl FiberFieldSpec for CutoffScaling {
    fn eval(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (m, n) = (x.len(), y.len());
        let z: Vec<f64> = x.iter().zip(&self.center).map(|(a, c)| a - c).collect();
        let t = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let (chi, dchi) = cutoff(t, self.inner, self.outer);
        let mut dxy = vec![0.0; n * m];
        if t > 0.0 {
            for c in 0..n {
                for k in 0..m {
                    dxy[c * m + k] = y[c] * dchi * z[k] / t;
                }
            }
        }
        let mut dyy = vec![0.0; n * n];
        for c in 0..n {
            dyy[c * n + c] = chi;
        }
        (y.iter().map(|v| chi * v).collect(), dxy, dyy)
    }
}

/// A variation residual with the integral of the absolute integrand, whose
/// ratio measures how much of the integrand cancels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub value: f64,
    pub scale: f64,
    /// `|value| / scale`, 0 when the integrand vanishes.
    pub relative: f64,
}

impl Residual {
    fn new(value: f64, scale: f64) -> Self {
        Residual { value, scale, relative: if scale > 0.0 { value.abs() / scale } else { value.abs() } }
    }
}

fn check_support(d: &GridDomain, nonzero: impl Fn(usize) -> bool) -> Result<()> {
    for b in d.boundary_nodes() {
        if nonzero(b) {
            return Err(QvlError::Domain(format!("field support reaches the boundary at node {b}")));
        }
    }
    Ok(())
}

/// `2 sum_i int <Df_i, Df_i DX> - int |||Df|||^2 div X`.
pub fn squeeze_residual(f: &QField, x_field: &dyn VectorFieldSpec) -> Result<Residual> {
    let d = f.domain();
    let (m, q, n) = (d.m(), f.q(), f.n());
    check_support(d, |b| {
        let (v, dv) = x_field.eval(d.coord(b));
        v.iter().chain(&dv).any(|t| *t != 0.0)
    })?;
    let (mut value, mut scale) = (0.0, 0.0);
    for x in d.interior_nodes() {
        let (_, dx) = x_field.eval(d.coord(x));
        if dx.iter().all(|t| *t == 0.0) {
            continue;
        }
        let j = jet(f, x)?;
        let div: f64 = (0..m).map(|k| dx[k * m + k]).sum();
        let mut first = 0.0;
        let mut norm2 = 0.0;
        for i in 0..q {
            for c in 0..n {
                for l in 0..m {
                    let a = j.partial(i, l)[c];
                    norm2 += a * a;
                    let b: f64 = (0..m).map(|k| j.partial(i, k)[c] * dx[k * m + l]).sum();
                    first += a * b;
                }
            }
        }
        let w = d.weight(x);
        value += w * (2.0 * first - norm2 * div);
        scale += w * ((2.0 * first).abs() + (norm2 * div).abs());
    }
    Ok(Residual::new(value, scale))
}

/// `sum_i int <Df_i, D_x Y(x, f_i)> + <Df_i, D_y Y(x, f_i) Df_i>`.
pub fn squash_residual(f: &QField, y_field: &dyn FiberFieldSpec) -> Result<Residual> {
    let d = f.domain();
    let (m, q, n) = (d.m(), f.q(), f.n());
    check_support(d, |b| {
        let v = f.raw(b);
        (0..q).any(|i| {
            let (y, dxy, dyy) = y_field.eval(d.coord(b), &v[i * n..(i + 1) * n]);
            y.iter().chain(&dxy).chain(&dyy).any(|t| *t != 0.0)
        })
    })?;
    let (mut value, mut scale) = (0.0, 0.0);
    for x in d.interior_nodes() {
        let v = f.raw(x);
        let mut evals = Vec::with_capacity(q);
        let mut any = false;
        for i in 0..q {
            let e = y_field.eval(d.coord(x), &v[i * n..(i + 1) * n]);
            any |= e.1.iter().chain(&e.2).any(|t| *t != 0.0);
            evals.push(e);
        }
        if !any {
            continue;
        }
        let j = jet(f, x)?;
        let (mut a_sum, mut b_sum) = (0.0, 0.0);
        for (i, (_, dxy, dyy)) in evals.iter().enumerate() {
            for c in 0..n {
                for k in 0..m {
                    let g = j.partial(i, k)[c];
                    a_sum += g * dxy[c * m + k];
                    let h: f64 = (0..n).map(|e| dyy[c * n + e] * j.partial(i, k)[e]).sum();
                    b_sum += g * h;
                }
            }
        }
        let w = d.weight(x);
        value += w * (a_sum + b_sum);
        scale += w * (a_sum.abs() + b_sum.abs());
    }
    Ok(Residual::new(value, scale))
}

/// `int_{B(a,r)} |||Df|||^2 - int_{dB(a,r)} sum_i <d_nu f_i, f_i>`.
pub fn squash_identity_residual(f: &QField, a: &[f64], r: f64) -> Result<Residual> {
    let d = ball_energy_from_norms(f.domain(), &triple_norms(f), a, r, 2.0)?;
    let s = sphere_integrals(f, a, r)?;
    Ok(Residual::new(d - s.radial_pair, d.abs() + s.radial_pair.abs()))
}

/// Nodes and quadrature weights of the ball `B(a, r)`; polar discs count the
/// part of each cell inside the ball.
pub fn ball_cells(d: &GridDomain, a: &[f64], r: f64) -> Result<Vec<(usize, f64)>> {
    if d.is_polar() {
        if !d.is_polar_disc() || a.iter().any(|c| c.abs() > 1e-12) {
            return Err(QvlError::Domain("polar balls must be centered at the disc center".into()));
        }
        let dr = d.h();
        if r > d.radii()[d.nr()] - dr / 2.0 + 1e-12 {
            return Err(QvlError::Domain(format!("ball of radius {r} reaches boundary cells")));
        }
        let mut out = vec![(0, std::f64::consts::PI * r.min(dr / 2.0).powi(2))];
        for i in 1..d.nr() {
            let ri = d.radii()[i];
            let (c0, c1) = (ri - dr / 2.0, ri + dr / 2.0);
            if r <= c0 {
                break;
            }
            let area = 0.5 * d.dtheta() * (r.min(c1).powi(2) - c0 * c0);
            out.extend((0..d.ntheta()).map(|j| (d.polar_node(i, j), area)));
        }
        return Ok(out);
    }
    if !d.contains_ball(a, r) {
        return Err(QvlError::Domain(format!("ball of radius {r} exits the domain")));
    }
    Ok((0..d.len())
        .filter(|&x| crate::qspace::dist2(d.coord(x), a) < r * r)
        .map(|x| (x, d.weight(x)))
        .collect())
}

/// Mean and mean oscillation `(1/|B|) int G^2(f, mean)` over quadrature cells.
pub fn mean_oscillation(f: &QField, cells: &[(usize, f64)]) -> Result<(QPoint, f64)> {
    let nodes: Vec<usize> = cells.iter().map(|c| c.0).collect();
    let weights: Vec<f64> = cells.iter().map(|c| c.1).collect();
    let mean = mean_on_weighted(f, &nodes, &weights)?;
    let vol: f64 = weights.iter().sum();
    let acc: f64 = cells.iter().map(|&(x, w)| w * match_sheets(f.raw(x), mean.as_flat(), f.q(), f.n()).1).sum();
    Ok((mean, if vol > 0.0 { acc / vol } else { 0.0 }))
}

/// Everything measured on one ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallStats {
    pub center: Vec<f64>,
    pub r: f64,
    /// `int_{B} |||Df|||^2`
    pub d: f64,
    /// `int_{dB} |f|^2`
    pub h: f64,
    pub radial_pair: f64,
    pub radial_square: f64,
    /// `r D / H`, absent where `H = 0`.
    pub n: Option<f64>,
    /// `r^{2-m} D`
    pub theta: f64,
    pub oscillation: f64,
}

/// Source of ball measurements.
pub trait BallProbe: Sync {
    fn m(&self) -> usize;
    fn stats(&self, a: &[f64], r: f64) -> Result<BallStats>;
}

fn finish(m: usize, a: &[f64], r: f64, d: f64, s: crate::qfield::SphereIntegrals, oscillation: f64) -> BallStats {
    BallStats {
        center: a.to_vec(),
        r,
        d,
        h: s.h,
        radial_pair: s.radial_pair,
        radial_square: s.radial_square,
        n: (s.h > 0.0).then(|| r * d / s.h),
        theta: d * r.powi(2 - m as i32),
        oscillation,
    }
}

/// Measurements on a sampled field.
pub struct FieldProbe<'a> {
    f: &'a QField,
    norms: Vec<f64>,
}

impl<'a> FieldProbe<'a> {
    pub fn new(f: &'a QField) -> Self {
        FieldProbe { f, norms: triple_norms(f) }
    }
}

impl BallProbe for FieldProbe<'_> {
    fn m(&self) -> usize {
        self.f.domain().m()
    }

    fn stats(&self, a: &[f64], r: f64) -> Result<BallStats> {
        let d = ball_energy_from_norms(self.f.domain(), &self.norms, a, r, 2.0)?;
        let s = sphere_integrals(self.f, a, r)?;
        let (_, osc) = mean_oscillation(self.f, &ball_cells(self.f.domain(), a, r)?)?;
        Ok(finish(self.m(), a, r, d, s, osc))
    }
}

/// Measurements of a closed-form planar map on a fresh polar grid fitted to
/// each ball, so that every scale is resolved by the same number of cells.
pub struct AnalyticProbe<'a> {
    pub eval: &'a (dyn Fn(&[f64]) -> Result<QPoint> + Sync),
    pub nr: usize,
    pub ntheta: usize,
}

impl AnalyticProbe<'_> {
    /// The map `y -> f(a + y)` on a polar disc whose last interior ring has
    /// radius `r`.
    pub fn local_field(&self, a: &[f64], r: f64) -> Result<QField> {
        if a.len() != 2 {
            return Err(QvlError::Shape("analytic probes are planar".into()));
        }
        let outer = r * self.nr as f64 / (self.nr as f64 - 1.0);
        let d = Arc::new(GridDomain::polar_disc(outer, self.nr, self.ntheta)?);
        QField::from_fn(d, |_, y| (self.eval)(&[a[0] + y[0], a[1] + y[1]]))
    }
}

impl BallProbe for AnalyticProbe<'_> {
    fn m(&self) -> usize {
        2
    }

    fn stats(&self, a: &[f64], r: f64) -> Result<BallStats> {
        let f = self.local_field(a, r)?;
        let o = [0.0, 0.0];
        let d = ball_energy_from_norms(f.domain(), &triple_norms(&f), &o, r, 2.0)?;
        let s = sphere_integrals(&f, &o, r)?;
        let (_, osc) = mean_oscillation(&f, &ball_cells(f.domain(), &o, r)?)?;
        Ok(finish(2, a, r, d, s, osc))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    #[serde(flatten)]
    pub stats: BallStats,
    /// `|H' - (m-1) H / r - 2 D|` over `|H'| + (m-1) H / r + 2 D`, by
    /// centered differences (interior radii only).
    pub h_residual: Option<f64>,
    /// `|Theta' - 2 r^{2-m} int |d_nu f|^2|` over the sum of magnitudes.
    pub theta_residual: Option<f64>,
    /// `|D - int <d_nu f, f>|` over `D + |int <d_nu f, f>|`.
    pub squash_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyProfile {
    pub center: Vec<f64>,
    pub m: usize,
    pub rows: Vec<ProfileRow>,
    /// Smallest `N(r_{k+1}) - N(r_k)`.
    pub min_delta_n: Option<f64>,
    /// Smallest `Theta(r_{k+1}) - Theta(r_k)`.
    pub min_delta_theta: Option<f64>,
    pub max_h_residual: Option<f64>,
    pub max_theta_residual: Option<f64>,
    pub max_squash_residual: f64,
    /// The field vanishes on every sampled ball.
    pub degenerate: bool,
    /// Radii where `H = 0` although the ball carries energy, which a
    /// squash-stationary map cannot do.
    pub vanishing_violations: Vec<f64>,
}

impl FrequencyProfile {
    pub fn n_values(&self) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.stats.n).collect()
    }

    /// CSV `r,D,H,N,Theta,h_residual,theta_residual,squash_residual`.
    pub fn csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut s = String::from("r,D,H,N,Theta,h_residual,theta_residual,squash_residual\n");
        for row in &self.rows {
            let b = &row.stats;
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                b.r,
                b.d,
                b.h,
                opt(b.n),
                b.theta,
                opt(row.h_residual),
                opt(row.theta_residual),
                row.squash_residual
            ));
        }
        s
    }
}

/// Second-order derivative of samples `y(x)` at interior point `k`.
fn centered(xs: &[f64], ys: &[f64], k: usize) -> f64 {
    let (h0, h1) = (xs[k] - xs[k - 1], xs[k + 1] - xs[k]);
    (-h1 / (h0 * (h0 + h1))) * ys[k - 1] + ((h1 - h0) / (h0 * h1)) * ys[k] + (h0 / (h1 * (h0 + h1))) * ys[k + 1]
}

fn rel(a: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        a.abs() / scale
    } else {
        a.abs()
    }
}

pub fn frequency_profile(f: &QField, a: &[f64], radii: &[f64]) -> Result<FrequencyProfile> {
    frequency_profile_with(&FieldProbe::new(f), a, radii)
}

pub fn frequency_profile_with(probe: &dyn BallProbe, a: &[f64], radii: &[f64]) -> Result<FrequencyProfile> {
    if radii.is_empty() || radii.windows(2).any(|w| w[1] <= w[0]) || radii[0] <= 0.0 {
        return Err(QvlError::Parameter("radii must be positive and strictly increasing".into()));
    }
    let m = probe.m();
    let stats: Vec<BallStats> = radii.iter().map(|&r| probe.stats(a, r)).collect::<Result<_>>()?;
    let hs: Vec<f64> = stats.iter().map(|s| s.h).collect();
    let thetas: Vec<f64> = stats.iter().map(|s| s.theta).collect();
    let tiny = 1e-300;
    let mut rows = Vec::with_capacity(stats.len());
    for (k, s) in stats.iter().enumerate() {
        let interior = k > 0 && k + 1 < radii.len();
        let r = s.r;
        let h_residual = interior.then(|| {
            let dh = centered(radii, &hs, k);
            let rhs = (m as f64 - 1.0) * s.h / r + 2.0 * s.d;
            rel(dh - rhs, dh.abs() + rhs.abs())
        });
        let theta_residual = interior.then(|| {
            let dt = centered(radii, &thetas, k);
            let rhs = 2.0 * r.powi(2 - m as i32) * s.radial_square;
            rel(dt - rhs, dt.abs() + rhs.abs())
        });
        let squash_residual = rel(s.d - s.radial_pair, s.d.abs() + s.radial_pair.abs());
        rows.push(ProfileRow { stats: s.clone(), h_residual, theta_residual, squash_residual });
    }
    let ns: Vec<Option<f64>> = stats.iter().map(|s| s.n).collect();
    let min_delta_n = ns
        .windows(2)
        .filter_map(|w| Some(w[1]? - w[0]?))
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))));
    let min_delta_theta = thetas.windows(2).map(|w| w[1] - w[0]).fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))));
    let maxopt = |it: &mut dyn Iterator<Item = f64>| it.fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
    let max_h_residual = maxopt(&mut rows.iter().filter_map(|r| r.h_residual));
    let max_theta_residual = maxopt(&mut rows.iter().filter_map(|r| r.theta_residual));
    let max_squash_residual = rows.iter().map(|r| r.squash_residual).fold(0.0, f64::max);
    let degenerate = stats.iter().all(|s| s.h <= tiny && s.d <= tiny);
    let vanishing_violations = if degenerate {
        Vec::new()
    } else {
        stats.iter().filter(|s| s.h <= tiny && s.d > tiny).map(|s| s.r).collect()
    };
    Ok(FrequencyProfile {
        center: a.to_vec(),
        m,
        rows,
        min_delta_n,
        min_delta_theta,
        max_h_residual,
        max_theta_residual,
        max_squash_residual,
        degenerate,
        vanishing_violations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsRow {
    pub r: f64,
    /// `(H(r)/r^{m-1}) / (H(r0)/r0^{m-1})`
    pub h_ratio: f64,
    pub h_lower: f64,
    pub h_upper: f64,
    /// `Theta(r) / Theta(r0)`
    pub d_ratio: f64,
    /// `(r/r0)^{2N(r)} N(r)/N(r0)`, absent when `N(r0) = 0`.
    pub d_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub r0: f64,
    pub rows: Vec<BoundsRow>,
    /// Smallest `h_ratio - h_lower`.
    pub lower_margin: f64,
    /// Smallest `h_upper - h_ratio`.
    pub upper_margin: f64,
    /// Smallest `d_bound - d_ratio`; absent when skipped.
    pub d_margin: Option<f64>,
    /// Largest relative gap between each side and its bound.
    pub max_equality_gap: f64,
    pub d_bound_skipped: bool,
}

/// Two-sided bound on `H / r^{m-1}` and the energy bound on `Theta` for all
/// profile radii below `r0` (which must be a profile radius).
pub fn frequency_bounds_check(profile: &FrequencyProfile, r0: f64) -> Result<BoundsReport> {
    let k0 = profile
        .rows
        .iter()
        .position(|r| (r.stats.r - r0).abs() <= 1e-12 * r0.max(1.0))
        .ok_or_else(|| QvlError::Parameter(format!("r0 = {r0} is not a profile radius")))?;
    let m = profile.m as f64;
    let base = &profile.rows[k0].stats;
    let n0 = base.n.ok_or_else(|| QvlError::Domain("H vanishes at r0".into()))?;
    let hn0 = base.h / r0.powf(m - 1.0);
    let skipped = !(n0 > 0.0) || !(base.theta > 0.0);
    let mut rows = Vec::new();
    let (mut lower_margin, mut upper_margin, mut d_margin, mut gap) = (f64::INFINITY, f64::INFINITY, None::<f64>, 0.0f64);
    for row in &profile.rows[..k0] {
        let s = &row.stats;
        let n = s.n.ok_or_else(|| QvlError::Domain(format!("H vanishes at r = {}", s.r)))?;
        let t = s.r / r0;
        let h_ratio = s.h / s.r.powf(m - 1.0) / hn0;
        let h_lower = t.powf(2.0 * n0);
        let h_upper = t.powf(2.0 * n);
        let d_ratio = if base.theta > 0.0 { s.theta / base.theta } else { 0.0 };
        let d_bound = (!skipped).then(|| t.powf(2.0 * n) * n / n0);
        lower_margin = lower_margin.min(h_ratio - h_lower);
        upper_margin = upper_margin.min(h_upper - h_ratio);
        gap = gap.max((h_ratio / h_lower - 1.0).abs()).max((h_ratio / h_upper - 1.0).abs());
        if let Some(b) = d_bound {
            d_margin = Some(d_margin.map_or(b - d_ratio, |v| v.min(b - d_ratio)));
            if b > 0.0 {
                gap = gap.max((d_ratio / b - 1.0).abs());
            }
        }
        rows.push(BoundsRow { r: s.r, h_ratio, h_lower, h_upper, d_ratio, d_bound });
    }
    if rows.is_empty() {
        return Err(QvlError::Parameter("profile has no radii below r0".into()));
    }
    Ok(BoundsReport { r0, rows, lower_margin, upper_margin, d_margin, max_equality_gap: gap, d_bound_skipped: skipped })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinfReport {
    pub center: Vec<f64>,
    pub r0: f64,
    /// `max_{B(a,r0)} |f|^2`
    pub sup_sq: f64,
    /// `int_{B(a,3 r0)} |f|^2`
    pub integral: f64,
    /// Smallest `C` with `sup_sq <= C r0^{-m} integral`.
    pub c_hat: f64,
    /// `(r, (1/|B(a,r)|) int G^2(f, Q[[y]]))` when a density value is given.
    pub density: Vec<(f64, f64)>,
    /// Whether the density sequence decreases toward zero as `r` shrinks.
    pub density_decreasing: Option<bool>,
}

/// Empirical constant of the local sup bound, plus the averaged distance to
/// `Q[[y]]` over shrinking balls when `y` is given.
pub fn linf_bound_check(f: &QField, a: &[f64], r0: f64, y: Option<&[f64]>, density_radii: &[f64]) -> Result<LinfReport> {
    let d = f.domain();
    let m = d.m();
    let abs: Vec<f64> = (0..d.len()).map(|x| f.raw(x).iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let big = ball_cells(d, a, 3.0 * r0)?;
    let integral: f64 = big.iter().map(|&(x, w)| w * abs[x] * abs[x]).sum();
    let sup_sq = (0..d.len())
        .filter(|&x| crate::qspace::dist2(d.coord(x), a) <= r0 * r0 * (1.0 + 1e-12))
        .map(|x| abs[x] * abs[x])
        .fold(0.0, f64::max);
    let c_hat = if integral > 0.0 { sup_sq * r0.powi(m as i32) / integral } else { 0.0 };
    let mut density = Vec::new();
    let mut density_decreasing = None;
    if let Some(y) = y {
        if y.len() != f.n() {
            return Err(QvlError::Shape("density value has the wrong length".into()));
        }
        let target = QPoint::repeat(f.q(), y)?;
        for &r in density_radii {
            let cells = ball_cells(d, a, r)?;
            let vol: f64 = cells.iter().map(|c| c.1).sum();
            let acc: f64 = cells.iter().map(|&(x, w)| w * match_sheets(f.raw(x), target.as_flat(), f.q(), f.n()).1).sum();
            density.push((r, if vol > 0.0 { acc / vol } else { 0.0 }));
        }
        let mut sorted = density.clone();
        sorted.sort_by(|p, q| p.0.total_cmp(&q.0));
        density_decreasing = Some(sorted.windows(2).all(|w| w[0].1 <= w[1].1));
    }
    Ok(LinfReport { center: a.to_vec(), r0, sup_sq, integral, c_hat, density, density_decreasing })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VmoOptions {
    /// Relative slack on monotonicity and contraction comparisons.
    pub rel_tol: f64,
    /// Safety factor on the oscillation multiple calibrated at the largest
    /// radius.
    pub calibration_factor: f64,
    /// Largest `j` of the radii `rho_j = 2^{-2^j}`.
    pub j_max: usize,
}

impl Default for VmoOptions {
    fn default() -> Self {
        VmoOptions { rel_tol: 1e-6, calibration_factor: 1.05, j_max: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DichotomyStep {
    pub center: Vec<f64>,
    pub j: usize,
    pub theta_j: f64,
    pub theta_next: f64,
    pub n_j: Option<f64>,
    /// `Theta(rho_{j+1}) <= Theta(rho_j) / 2`
    pub halves: bool,
    /// `N(rho_j) < 2^{-j-1}`
    pub small_frequency: bool,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogDecayFit {
    /// `omega(rho) ~ c |ln rho|^{-alpha}`
    pub c: f64,
    pub alpha: f64,
    pub rms: f64,
    /// Decay faster than every admissible logarithmic rate (`alpha >= 1`).
    pub better_than_log: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmoReport {
    pub centers: Vec<Vec<f64>>,
    pub radii: Vec<f64>,
    /// `sup_a r^{2-m} mu(B(a,r))` over the sampled centers.
    pub energy_modulus: Vec<f64>,
    /// `oscillation[c][k]` at center `c` and radius `radii[k]`.
    pub oscillation: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    /// Multiple `K` with oscillation `<= K omega(r)`, calibrated at the
    /// largest radius.
    pub oscillation_multiple: f64,
    pub oscillation_ok: bool,
    /// Smallest `omega(r_{k+1}) - omega(r_k)`, relative to the largest value.
    pub modulus_min_step: f64,
    pub modulus_nondecreasing: bool,
    pub dyadic_radii: Vec<f64>,
    pub dyadic_modulus: Vec<f64>,
    pub dichotomy: Vec<DichotomyStep>,
    pub dichotomy_holds: bool,
    /// `max H / r^{m-1}` over the dyadic samples, the constant in
    /// `Theta <= C N`.
    pub c_hat: f64,
    /// `omega(rho_{j+1}) <= max(C 2^{-j-1}, omega(rho_j) / 2)` for each `j`.
    pub contraction: Vec<bool>,
    pub fit: Option<LogDecayFit>,
}

/// Energy modulus, mean oscillation and the logarithmic decay chain on the
/// unit ball, for `centers` in `B(0, 1/2)` and `radii` in `(0, 1/2]`.
pub fn vmo_report(probe: &dyn BallProbe, centers: &[Vec<f64>], radii: &[f64], opts: &VmoOptions) -> Result<VmoReport> {
    if radii.len() < 3 {
        return Err(QvlError::Parameter("the modulus needs at least 3 radii".into()));
    }
    if radii.windows(2).any(|w| w[1] <= w[0]) || radii[0] <= 0.0 || *radii.last().unwrap() > 0.5 + 1e-12 {
        return Err(QvlError::Parameter("radii must increase within (0, 1/2]".into()));
    }
    if centers.is_empty() || centers.iter().any(|c| c.len() != probe.m() || c.iter().map(|v| v * v).sum::<f64>() >= 0.25) {
        return Err(QvlError::Parameter("centers must lie in B(0, 1/2)".into()));
    }
    let m = probe.m();
    let dyadic: Vec<f64> = (0..=opts.j_max + 1).map(|j| 2f64.powf(-(2f64.powi(j as i32)))).collect();
    let per_center: Vec<(Vec<BallStats>, Vec<BallStats>)> = centers
        .par_iter()
        .map(|a| -> Result<_> {
            let s: Vec<BallStats> = radii.iter().map(|&r| probe.stats(a, r)).collect::<Result<_>>()?;
            let t: Vec<BallStats> = dyadic.iter().map(|&r| probe.stats(a, r)).collect::<Result<_>>()?;
            Ok((s, t))
        })
        .collect::<Result<_>>()?;

    let oscillation: Vec<Vec<f64>> = per_center.iter().map(|(s, _)| s.iter().map(|b| b.oscillation).collect()).collect();
    let theta: Vec<Vec<f64>> = per_center.iter().map(|(s, _)| s.iter().map(|b| b.theta).collect()).collect();
    let energy_modulus: Vec<f64> = (0..radii.len()).map(|k| theta.iter().map(|t| t[k]).fold(0.0, f64::max)).collect();
    let top = energy_modulus.iter().cloned().fold(0.0, f64::max);
    let modulus_min_step = energy_modulus
        .windows(2)
        .map(|w| if top > 0.0 { (w[1] - w[0]) / top } else { 0.0 })
        .fold(f64::INFINITY, f64::min);
    let modulus_nondecreasing = modulus_min_step >= -opts.rel_tol;

    let last = radii.len() - 1;
    let w_last = energy_modulus[last];
    let oscillation_multiple = if w_last > 0.0 {
        opts.calibration_factor * oscillation.iter().map(|o| o[last] / w_last).fold(0.0, f64::max)
    } else {
        0.0
    };
    let osc_top = oscillation.iter().flatten().cloned().fold(0.0, f64::max);
    let oscillation_ok = oscillation.iter().all(|o| {
        o.iter()
            .zip(&energy_modulus)
            .all(|(v, w)| *v <= oscillation_multiple * w + opts.rel_tol * osc_top.max(f64::MIN_POSITIVE))
    });

    let dyadic_modulus: Vec<f64> =
        (0..dyadic.len()).map(|j| per_center.iter().map(|(_, t)| t[j].theta).fold(0.0, f64::max)).collect();
    let c_hat = per_center
        .iter()
        .flat_map(|(_, t)| t.iter().map(|b| b.h / b.r.powi(m as i32 - 1)))
        .fold(0.0, f64::max);
    let mut dichotomy = Vec::new();
    for (a, (_, t)) in centers.iter().zip(&per_center) {
        for j in 0..=opts.j_max {
            let (tj, tn) = (t[j].theta, t[j + 1].theta);
            let halves = tn <= 0.5 * tj * (1.0 + opts.rel_tol) || tn <= f64::MIN_POSITIVE;
            let small_frequency = t[j].n.is_some_and(|n| n < 2f64.powi(-(j as i32) - 1));
            dichotomy.push(DichotomyStep {
                center: a.clone(),
                j,
                theta_j: tj,
                theta_next: tn,
                n_j: t[j].n,
                halves,
                small_frequency,
                holds: halves || small_frequency,
            });
        }
    }
    let dichotomy_holds = dichotomy.iter().all(|s| s.holds);
    let contraction = (0..=opts.j_max)
        .map(|j| {
            let bound = (c_hat * 2f64.powi(-(j as i32) - 1)).max(0.5 * dyadic_modulus[j]);
            dyadic_modulus[j + 1] <= bound * (1.0 + opts.rel_tol)
        })
        .collect();

    let pts: Vec<(f64, f64)> = dyadic
        .iter()
        .zip(&dyadic_modulus)
        .filter(|(_, w)| **w > 0.0)
        .map(|(r, w)| ((-r.ln()).ln(), w.ln()))
        .collect();
    let fit = (pts.len() >= 3).then(|| {
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let (slope, icpt, rms) = crate::minimize::least_squares(&xs, &ys);
        LogDecayFit { c: icpt.exp(), alpha: -slope, rms, better_than_log: -slope >= 1.0 }
    });

    Ok(VmoReport {
        centers: centers.to_vec(),
        radii: radii.to_vec(),
        energy_modulus,
        oscillation,
        theta,
        oscillation_multiple,
        oscillation_ok,
        modulus_min_step,
        modulus_nondecreasing,
        dyadic_radii: dyadic,
        dyadic_modulus,
        dichotomy,
        dichotomy_holds,
        c_hat,
        contraction,
        fit,
    })
}

//! Competitor constructions: the radial homogeneous extension and its
//! closed-form energy, the bound M with its gap certificate, and
//! interpolation between two traces across a slab or a thin annulus.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{QvlError, Result};
use crate::grid::{DomainSpec, GridDomain};
use crate::qfield::{closed_energy_trapezoid, frechet_mean, interior_energy, matched_central, QField};
use crate::qspace::{match_sheets, QPoint};

/// Dimension threshold for direct interpolation: `p - 1` for integral `p`,
/// `floor(p)` otherwise.
pub fn m_p(p: f64) -> Result<usize> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(QvlError::Parameter(format!("p must lie in (1, inf), got {p}")));
    }
    Ok(if p.fract() == 0.0 { p as usize - 1 } else { p.floor() as usize })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SphereLayout {
    /// `ntheta` equally spaced angles on the unit circle.
    Circle { ntheta: usize },
    /// Latitude rows at cell midpoints and `nlon` longitudes on the unit
    /// 2-sphere.
    LatLong { nlat: usize, nlon: usize },
    /// Arbitrary directions; tangential derivatives are unavailable.
    Scattered,
}

/// Q-valued data on the unit sphere in `R^m` (`m` = 2 or 3), with
/// quadrature weights summing to the sphere's area.
#[derive(Debug, Clone)]
pub struct SphereField {
    layout: SphereLayout,
    m: usize,
    q: usize,
    n: usize,
    dirs: Vec<f64>,
    weights: Vec<f64>,
    values: Vec<f64>,
}

impl SphereField {
    pub fn circle(ntheta: usize, mut g: impl FnMut(&[f64]) -> Result<QPoint>) -> Result<Self> {
        if ntheta < 4 {
            return Err(QvlError::Parameter("a circle needs at least 4 samples".into()));
        }
        let dth = 2.0 * PI / ntheta as f64;
        let mut dirs = Vec::with_capacity(2 * ntheta);
        for j in 0..ntheta {
            let th = dth * j as f64;
            dirs.extend([th.cos(), th.sin()]);
        }
        let vals = (0..ntheta).map(|j| g(&dirs[2 * j..2 * j + 2])).collect::<Result<Vec<_>>>()?;
        Self::assemble(SphereLayout::Circle { ntheta }, 2, dirs, vec![dth; ntheta], vals)
    }

    pub fn latlong(nlat: usize, nlon: usize, mut g: impl FnMut(&[f64]) -> Result<QPoint>) -> Result<Self> {
        if nlat < 2 || nlon < 4 || nlon % 2 != 0 {
            return Err(QvlError::Parameter("lat-long grid needs nlat >= 2 and even nlon >= 4".into()));
        }
        let (dphi, dlam) = (PI / nlat as f64, 2.0 * PI / nlon as f64);
        let mut dirs = Vec::new();
        let mut weights = Vec::new();
        for a in 0..nlat {
            let phi = (a as f64 + 0.5) * dphi;
            let band = ((a as f64) * dphi).cos() - ((a as f64 + 1.0) * dphi).cos();
            for b in 0..nlon {
                let lam = b as f64 * dlam;
                dirs.extend([phi.sin() * lam.cos(), phi.sin() * lam.sin(), phi.cos()]);
                weights.push(band * dlam);
            }
        }
        let vals = (0..nlat * nlon).map(|i| g(&dirs[3 * i..3 * i + 3])).collect::<Result<Vec<_>>>()?;
        Self::assemble(SphereLayout::LatLong { nlat, nlon }, 3, dirs, weights, vals)
    }

    /// Samples over arbitrary unit directions with the given weights.
    pub fn scattered(m: usize, dirs: Vec<f64>, weights: Vec<f64>, values: Vec<QPoint>) -> Result<Self> {
        if dirs.len() != m * values.len() || weights.len() != values.len() {
            return Err(QvlError::Shape("scattered sphere data lengths disagree".into()));
        }
        Self::assemble(SphereLayout::Scattered, m, dirs, weights, values)
    }

    /// Samples `g` at `layout`, the natural constructor for a given `m`.
    pub fn from_layout(layout: SphereLayout, g: impl FnMut(&[f64]) -> Result<QPoint>) -> Result<Self> {
        match layout {
            SphereLayout::Circle { ntheta } => Self::circle(ntheta, g),
            SphereLayout::LatLong { nlat, nlon } => Self::latlong(nlat, nlon, g),
            SphereLayout::Scattered => Err(QvlError::Parameter("scattered layout needs explicit directions".into())),
        }
    }

    /// Reads `f` on the sphere `|x - center| = radius` at the nodes nearest
    /// to the layout's sample points.
    pub fn sample_field(f: &QField, center: &[f64], radius: f64, layout: SphereLayout) -> Result<Self> {
        let d = f.domain();
        let tol = 2.0 * d.h().max(radius * if d.is_polar() { d.dtheta() } else { 0.0 });
        Self::from_layout(layout, |dir| {
            let x: Vec<f64> = center.iter().zip(dir).map(|(c, u)| c + radius * u).collect();
            let node = d
                .find_node(&x, tol)
                .ok_or_else(|| QvlError::Domain(format!("no grid node near {x:?}")))?;
            Ok(f.value(node))
        })
    }

    fn assemble(layout: SphereLayout, m: usize, dirs: Vec<f64>, weights: Vec<f64>, vals: Vec<QPoint>) -> Result<Self> {
        let q = vals.first().map(|v| v.q()).ok_or_else(|| QvlError::Shape("empty sphere data".into()))?;
        let n = vals[0].n();
        let mut values = Vec::with_capacity(vals.len() * q * n);
        for v in &vals {
            if v.q() != q || v.n() != n {
                return Err(QvlError::Shape("mixed (Q,n) on the sphere".into()));
            }
            values.extend_from_slice(v.as_flat());
        }
        Ok(SphereField { layout, m, q, n, dirs, weights, values })
    }

    pub fn layout(&self) -> SphereLayout {
        self.layout
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dir(&self, i: usize) -> &[f64] {
        &self.dirs[i * self.m..(i + 1) * self.m]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn raw(&self, i: usize) -> &[f64] {
        let w = self.q * self.n;
        &self.values[i * w..(i + 1) * w]
    }

    pub fn value(&self, i: usize) -> QPoint {
        QPoint::from_flat(self.q, self.n, self.raw(i).to_vec()).expect("stored values are valid")
    }

    /// Index of the sample whose direction is closest to `x / |x|`.
    pub fn nearest(&self, x: &[f64]) -> usize {
        match self.layout {
            SphereLayout::Circle { ntheta } => {
                let th = x[1].atan2(x[0]).rem_euclid(2.0 * PI);
                (th / (2.0 * PI / ntheta as f64)).round() as usize % ntheta
            }
            SphereLayout::LatLong { nlat, nlon } => {
                let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
                let phi = (x[2] / r).clamp(-1.0, 1.0).acos();
                let a = ((phi / (PI / nlat as f64)).floor() as usize).min(nlat - 1);
                let lam = x[1].atan2(x[0]).rem_euclid(2.0 * PI);
                let b = (lam / (2.0 * PI / nlon as f64)).round() as usize % nlon;
                a * nlon + b
            }
            SphereLayout::Scattered => {
                let mut best = (f64::NEG_INFINITY, 0);
                for i in 0..self.len() {
                    let dot: f64 = self.dir(i).iter().zip(x).map(|(a, b)| a * b).sum();
                    if dot > best.0 {
                        best = (dot, i);
                    }
                }
                best.1
            }
        }
    }

    /// Per-sample `|||D_S g|||^2` on the unit sphere by matched central
    /// differences.
    pub fn tangential_sq(&self) -> Result<Vec<f64>> {
        let (q, n) = (self.q, self.n);
        let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        match self.layout {
            SphereLayout::Circle { ntheta } => {
                let dth = 2.0 * PI / ntheta as f64;
                Ok((0..ntheta)
                    .map(|j| {
                        let (a, b) = ((j + 1) % ntheta, (j + ntheta - 1) % ntheta);
                        sq(&matched_central(self.raw(j), self.raw(a), self.raw(b), q, n, 2.0 * dth))
                    })
                    .collect())
            }
            SphereLayout::LatLong { nlat, nlon } => {
                let (dphi, dlam) = (PI / nlat as f64, 2.0 * PI / nlon as f64);
                let idx = |a: i64, b: usize| -> usize {
                    // stepping past a pole lands on the opposite meridian
                    if a < 0 {
                        (b + nlon / 2) % nlon
                    } else if a as usize >= nlat {
                        (nlat - 1) * nlon + (b + nlon / 2) % nlon
                    } else {
                        a as usize * nlon + b
                    }
                };
                let mut out = Vec::with_capacity(nlat * nlon);
                for a in 0..nlat {
                    let sphi = ((a as f64 + 0.5) * dphi).sin();
                    for b in 0..nlon {
                        let i = a * nlon + b;
                        let up = idx(a as i64 - 1, b);
                        let down = idx(a as i64 + 1, b);
                        let dp = matched_central(self.raw(i), self.raw(down), self.raw(up), q, n, 2.0 * dphi);
                        let e = a * nlon + (b + 1) % nlon;
                        let w = a * nlon + (b + nlon - 1) % nlon;
                        let dl = matched_central(self.raw(i), self.raw(e), self.raw(w), q, n, 2.0 * dlam * sphi);
                        out.push(sq(&dp) + sq(&dl));
                    }
                }
                Ok(out)
            }
            SphereLayout::Scattered => {
                Err(QvlError::Unsupported("tangential derivatives need a structured sphere layout".into()))
            }
        }
    }

    /// `int_{S(radius)} |||grad_T g|||^p` for `g` read radially.
    pub fn tangential_energy(&self, p: f64, radius: f64) -> Result<f64> {
        let t = self.tangential_sq()?;
        let s: f64 = t.iter().zip(&self.weights).map(|(a, w)| w * a.powf(p / 2.0)).sum();
        Ok(radius.powf(self.m as f64 - 1.0 - p) * s)
    }

    /// Weighted Frechet mean of the samples.
    pub fn mean(&self) -> Result<QPoint> {
        let samples: Vec<&[f64]> = (0..self.len()).map(|i| self.raw(i)).collect();
        frechet_mean(&samples, &self.weights, self.q, self.n)
    }
}

fn scaled(v: &[f64], t: f64) -> Vec<f64> {
    v.iter().map(|x| x * t).collect()
}

/// `v(x) = (|x - c| / R)^alpha g((x - c)/|x - c|)` at every node of `domain`.
pub fn radial_extension(g: &SphereField, alpha: f64, domain: Arc<GridDomain>, center: &[f64], radius: f64) -> Result<QField> {
    if !(alpha > 0.0) {
        return Err(QvlError::Parameter(format!("alpha must be positive, got {alpha}")));
    }
    if g.m() != domain.m() || center.len() != domain.m() {
        return Err(QvlError::Shape("sphere data and domain dimensions differ".into()));
    }
    let (q, n) = (g.q(), g.n());
    let mut data = Vec::with_capacity(domain.len() * q * n);
    for x in 0..domain.len() {
        let z: Vec<f64> = domain.coord(x).iter().zip(center).map(|(a, c)| a - c).collect();
        let rho = z.iter().map(|t| t * t).sum::<f64>().sqrt();
        if rho < 1e-14 * radius {
            data.extend(std::iter::repeat_n(0.0, q * n));
        } else {
            let t = if (rho - radius).abs() <= 1e-12 * radius { 1.0 } else { (rho / radius).powf(alpha) };
            data.extend(scaled(g.raw(g.nearest(&z)), t));
        }
    }
    QField::from_flat(domain, q, n, data)
}

/// `(m - p + p alpha)^{-1} R^{m-p} int_S (alpha^2 |g|^2 + |||D_S g|||^2)^{p/2}`.
pub fn radial_energy_closed_form(g: &SphereField, alpha: f64, p: f64, radius: f64) -> Result<f64> {
    let m = g.m() as f64;
    let k = m - p + p * alpha;
    if !(k > 0.0) {
        return Err(QvlError::Parameter(format!("m - p + p alpha = {k} must be positive")));
    }
    let t = g.tangential_sq()?;
    let mut s = 0.0;
    for i in 0..g.len() {
        let v2: f64 = g.raw(i).iter().map(|x| x * x).sum();
        s += g.weight(i) * (alpha * alpha * v2 + t[i]).powf(p / 2.0);
    }
    Ok(radius.powf(m - p) * s / k)
}

/// Smallest `C` (found on a grid, then padded by 0.1%) with
/// `(a+b)^s <= (1+delta) a^s + C delta^{1-s} b^s`, `s = p/2`, for `p > 2`;
/// 1 for `p <= 2`.
pub fn default_c(p: f64) -> f64 {
    if p <= 2.0 {
        return 1.0;
    }
    let s = p / 2.0;
    let mut best: f64 = 0.0;
    for i in 0..=240 {
        let delta = 10f64.powf(-6.0 + 6.0 * i as f64 / 240.0);
        for j in 0..=400 {
            let t = 10f64.powf(-8.0 + 16.0 * j as f64 / 400.0);
            let need = ((t + 1.0).powf(s) - (1.0 + delta) * t.powf(s)) * delta.powf(s - 1.0);
            best = best.max(need);
        }
    }
    best * 1.001
}

/// The bound `M(m, p, M, alpha, delta)` with constant `c`.
pub fn m_bound(m: usize, p: f64, big_m: f64, alpha: f64, delta: f64, c: f64) -> Result<f64> {
    let mf = m as f64;
    if !(p > 1.0 && p <= mf) {
        return Err(QvlError::Parameter(format!("need 1 < p <= m, got p={p}, m={m}")));
    }
    if !(alpha > 0.0) || !(big_m >= 0.0) || !(c > 0.0) || (p > 2.0 && !(delta > 0.0)) {
        return Err(QvlError::Parameter("need alpha > 0, M >= 0, C > 0 and delta > 0".into()));
    }
    let k = mf - p + p * alpha;
    let growth = (1.0 + big_m.powf(p)) * alpha.powf(p);
    Ok(if p <= 2.0 {
        (1.0 + c * growth) / k
    } else {
        ((1.0 + delta) + c * delta.powf(-(p / 2.0 - 1.0)) * growth) / k
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapCertificate {
    pub m: usize,
    pub p: f64,
    pub big_m: f64,
    pub c: f64,
    pub alpha0: f64,
    pub delta0: f64,
    pub eta0: f64,
    pub mval: f64,
    pub eps0: f64,
}

impl GapCertificate {
    /// `mval <= 1/(m-p) - 2 eta0` and `eta0 > 0`.
    pub fn holds(&self) -> bool {
        self.eta0 > 0.0 && self.mval <= 1.0 / (self.m as f64 - self.p) - 2.0 * self.eta0
    }
}

/// Maximizes `eta(alpha) = (1/(m-p) - M(alpha)) / 2` with `delta = alpha^2`
/// by a log-spaced scan followed by golden-section refinement.
pub fn find_gap(m: usize, p: f64, big_m: f64, c: f64) -> Result<GapCertificate> {
    let mf = m as f64;
    if !(p > 1.0 && p < mf) {
        return Err(QvlError::Parameter(format!("need 1 < p < m, got p={p}, m={m}")));
    }
    let target = 1.0 / (mf - p);
    let eta = |la: f64| -> f64 {
        let a = 10f64.powf(la);
        m_bound(m, p, big_m, a, a * a, c).map(|v| (target - v) / 2.0).unwrap_or(f64::NEG_INFINITY)
    };
    let (lo, hi, steps) = (-12.0, 2.0, 1400);
    let at = |k: usize| lo + (hi - lo) * k as f64 / steps as f64;
    let mut best = (f64::NEG_INFINITY, 0usize);
    for k in 0..=steps {
        let e = eta(at(k));
        if e > best.0 {
            best = (e, k);
        }
    }
    let (mut a, mut b) = (at(best.1.saturating_sub(1)), at((best.1 + 1).min(steps)));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..120 {
        let (x1, x2) = (b - g * (b - a), a + g * (b - a));
        if eta(x1) >= eta(x2) {
            b = x2;
        } else {
            a = x1;
        }
    }
    let la = if eta(0.5 * (a + b)) >= best.0 { 0.5 * (a + b) } else { at(best.1) };
    let alpha0 = 10f64.powf(la);
    let delta0 = alpha0 * alpha0;
    let mval = m_bound(m, p, big_m, alpha0, delta0, c)?;
    let gap = target - mval;
    if !(gap > 0.0) {
        return Err(QvlError::Construction(format!("no positive gap for m={m}, p={p}, M={big_m}, C={c}")));
    }
    // shrink by one part in 1e12 so the defining inequality survives rounding
    let eta0 = 0.5 * gap * (1.0 - 1e-12);
    let cert = GapCertificate { m, p, big_m, c, alpha0, delta0, eta0, mval, eps0: (mf - p) * eta0 };
    if !cert.holds() {
        return Err(QvlError::Construction("gap certificate failed its own check".into()));
    }
    Ok(cert)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpolationReport {
    pub eps: f64,
    pub p: f64,
    pub h: f64,
    /// Energy of the interpolant (p-th power).
    pub energy: f64,
    /// `eps * (E(g1) + E(g2))`.
    pub energy_term: f64,
    /// `eps^{1-p} int G^p(g1, g2)`.
    pub gap_term: f64,
    /// `energy_term + gap_term`.
    pub bound: f64,
    /// `K^p = E(g1) + E(g2) + eps^{-p} int G^p(g1, g2)`.
    pub k_p: f64,
    /// `energy / bound` (0 when both vanish).
    pub constant: f64,
    pub trace_residual_top: f64,
    pub trace_residual_bottom: f64,
    pub inconsistent_cells: usize,
}

impl InterpolationReport {
    fn new(eps: f64, p: f64, h: f64, energy: f64, e1: f64, e2: f64, gap: f64, res: (f64, f64), bad: usize) -> Self {
        let energy_term = eps * (e1 + e2);
        let gap_term = eps.powf(1.0 - p) * gap;
        let bound = energy_term + gap_term;
        let constant = if bound > 0.0 {
            energy / bound
        } else if energy > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        InterpolationReport {
            eps,
            p,
            h,
            energy,
            energy_term,
            gap_term,
            bound,
            k_p: e1 + e2 + eps.powf(-p) * gap,
            constant,
            trace_residual_top: res.0,
            trace_residual_bottom: res.1,
            inconsistent_cells: bad,
        }
    }
}

/// `(1 - lam) a_i + lam b_{s(i)}` under the optimal matching `s` of `a` to `b`.
fn blend(a: &[f64], b: &[f64], lam: f64, q: usize, n: usize) -> Vec<f64> {
    if lam <= 0.0 {
        return a.to_vec();
    }
    if lam >= 1.0 {
        return b.to_vec();
    }
    let (s, _) = match_sheets(a, b, q, n);
    let mut out = vec![0.0; q * n];
    for i in 0..q {
        for c in 0..n {
            out[i * n + c] = (1.0 - lam) * a[i * n + c] + lam * b[s[i] * n + c];
        }
    }
    out
}

/// Three-layer transit across a band: `s = 0` returns `top`, `s = 1`
/// returns `bottom`. The outer quarters move each trace onto its coarse
/// extension, and the two are mixed linearly across the full band.
fn transit(top: &[f64], top_ext: &[f64], bottom: &[f64], bottom_ext: &[f64], s: f64, q: usize, n: usize) -> Vec<f64> {
    let a = blend(top, top_ext, (4.0 * s).clamp(0.0, 1.0), q, n);
    let b = blend(bottom, bottom_ext, (4.0 * (1.0 - s)).clamp(0.0, 1.0), q, n);
    blend(&a, &b, s, q, n)
}

fn gdist(a: &[f64], b: &[f64], q: usize, n: usize) -> f64 {
    match_sheets(a, b, q, n).1.sqrt()
}

/// Vertex positions (node indices) splitting `0..=k` into `cells` pieces.
fn cut(k: i64, cells: usize) -> Vec<i64> {
    (0..=cells).map(|v| ((v as f64) * k as f64 / cells as f64).round() as i64).collect()
}

fn compose(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter().map(|&i| b[i]).collect()
}

/// Extension of box data from coarse-vertex means by matched multilinear
/// interpolation (matched linear along cell edges; cells whose edge
/// matchings do not compose collapse radially to their mean).
fn coarse_extension(g: &QField, eps: f64) -> Result<(Vec<f64>, usize)> {
    let d = g.domain();
    let (q, n, m) = (g.q(), g.n(), d.m());
    let half = d.box_half().ok_or_else(|| QvlError::Domain("slab data must live on a box".into()))?;
    let h = d.h();
    let kk: Vec<i64> = half.iter().map(|l| (l / h).round() as i64).collect();
    let cuts: Vec<Vec<i64>> = (0..m)
        .map(|k| {
            let cells = ((2.0 * half[k] / eps).round() as usize).max(1);
            cut(2 * kk[k], cells).into_iter().map(|v| v - kk[k]).collect()
        })
        .collect();

    // vertex means over L-infinity windows of one cell width
    let shape: Vec<usize> = cuts.iter().map(|c| c.len()).collect();
    let total: usize = shape.iter().product();
    let mut means = Vec::with_capacity(total);
    for t in 0..total {
        let vi = unflat(t, &shape);
        let v: Vec<i64> = (0..m).map(|k| cuts[k][vi[k]]).collect();
        let width: Vec<i64> = (0..m)
            .map(|k| {
                let l = if vi[k] > 0 { v[k] - cuts[k][vi[k] - 1] } else { 0 };
                let r = if vi[k] + 1 < shape[k] { cuts[k][vi[k] + 1] - v[k] } else { 0 };
                l.max(r)
            })
            .collect();
        let nodes: Vec<usize> = (0..d.len())
            .filter(|&x| {
                let idx = d.lattice_index(x);
                (0..m).all(|k| (idx[k] - v[k]).abs() <= width[k])
            })
            .collect();
        let samples: Vec<&[f64]> = nodes.iter().map(|&x| g.raw(x)).collect();
        means.push(frechet_mean(&samples, &vec![1.0; samples.len()], q, n)?.as_flat().to_vec());
    }
    let vertex = |vi: &[usize]| -> &[f64] { &means[flat_index(vi, &shape)] };

    let mut out = Vec::with_capacity(d.len() * q * n);
    let mut bad = std::collections::BTreeSet::new();
    for x in 0..d.len() {
        let idx = d.lattice_index(x);
        let mut cell = vec![0usize; m];
        let mut u = vec![0.0; m];
        for k in 0..m {
            let c = &cuts[k];
            let s = if c.len() == 1 { 0 } else { (0..c.len() - 1).rev().find(|&s| c[s] <= idx[k]).unwrap_or(0) };
            let s = s.min(c.len().saturating_sub(2));
            cell[k] = s;
            u[k] = if c.len() == 1 { 0.0 } else { (idx[k] - c[s]) as f64 / (c[s + 1] - c[s]) as f64 };
        }
        let v = match m {
            1 => blend(vertex(&[cell[0]]), vertex(&[cell[0] + 1]), u[0], q, n),
            2 => {
                let (i, j) = (cell[0], cell[1]);
                let p00 = vertex(&[i, j]);
                let p10 = vertex(&[i + 1, j]);
                let p01 = vertex(&[i, j + 1]);
                let p11 = vertex(&[i + 1, j + 1]);
                let sa = match_sheets(p00, p10, q, n).0;
                let sb = match_sheets(p00, p01, q, n).0;
                let via_a = compose(&sa, &match_sheets(p10, p11, q, n).0);
                let via_b = compose(&sb, &match_sheets(p01, p11, q, n).0);
                if via_a == via_b {
                    let w = [(1.0 - u[0]) * (1.0 - u[1]), u[0] * (1.0 - u[1]), (1.0 - u[0]) * u[1], u[0] * u[1]];
                    let mut r = vec![0.0; q * n];
                    for s in 0..q {
                        for c in 0..n {
                            r[s * n + c] = w[0] * p00[s * n + c]
                                + w[1] * p10[sa[s] * n + c]
                                + w[2] * p01[sb[s] * n + c]
                                + w[3] * p11[via_a[s] * n + c];
                        }
                    }
                    r
                } else {
                    bad.insert((i, j));
                    let mean = frechet_mean(&[p00, p10, p01, p11], &[1.0; 4], q, n)?;
                    let (a, b) = (u[0] - 0.5, u[1] - 0.5);
                    let rho = 2.0 * a.abs().max(b.abs());
                    if rho < 1e-15 {
                        mean.as_flat().to_vec()
                    } else {
                        // project to the cell boundary along the ray from the center
                        let (pa, pb) = (0.5 + a / rho, 0.5 + b / rho);
                        let edge = if (pa - 1.0).abs() < 1e-12 {
                            blend(p10, p11, pb, q, n)
                        } else if pa.abs() < 1e-12 {
                            blend(p00, p01, pb, q, n)
                        } else if (pb - 1.0).abs() < 1e-12 {
                            blend(p01, p11, pa, q, n)
                        } else {
                            blend(p00, p10, pa, q, n)
                        };
                        blend(mean.as_flat(), &edge, rho, q, n)
                    }
                }
            }
            _ => return Err(QvlError::Unsupported("coarse extension supports m <= 2".into())),
        };
        out.extend(v);
    }
    Ok((out, bad.len()))
}

fn unflat(mut t: usize, shape: &[usize]) -> Vec<usize> {
    let mut v = vec![0; shape.len()];
    for k in (0..shape.len()).rev() {
        v[k] = t % shape[k];
        t /= shape[k];
    }
    v
}

fn flat_index(v: &[usize], shape: &[usize]) -> usize {
    v.iter().zip(shape).fold(0, |acc, (a, s)| acc * s + a)
}

/// Interpolates between `g1` (at `t = +eps`) and `g2` (at `t = -eps`) on
/// `I^m x [-eps, eps]`, for box data with `m <= m_p(p)` and `m <= 2`.
pub fn slab_interpolate(g1: &QField, g2: &QField, eps: f64, p: f64) -> Result<(QField, InterpolationReport)> {
    let d = g1.domain();
    let m = d.m();
    if m > m_p(p)? {
        return Err(QvlError::Unsupported(format!("slab interpolation needs m <= m_p(p) = {}, got m = {m}", m_p(p)?)));
    }
    if m > 2 {
        return Err(QvlError::Unsupported("slab interpolation supports m <= 2".into()));
    }
    if g2.domain().spec() != d.spec() || g1.q() != g2.q() || g1.n() != g2.n() {
        return Err(QvlError::Shape("g1 and g2 must share grid and shape".into()));
    }
    let mut half = d.box_half().ok_or_else(|| QvlError::Domain("slab data must live on a box".into()))?;
    let h = d.h();
    let ke = (eps / h).round();
    if !(eps > 0.0) || ke < 1.0 || (eps / h - ke).abs() > 1e-9 * ke {
        return Err(QvlError::Parameter(format!("eps = {eps} must be a positive multiple of h = {h}")));
    }
    let (q, n) = (g1.q(), g1.n());
    let (e1, bad1) = coarse_extension(g1, eps)?;
    let (e2, bad2) = coarse_extension(g2, eps)?;
    half.push(eps);
    let slab = Arc::new(GridDomain::new(DomainSpec::Box { half, h })?);
    let w = q * n;
    let mut data = Vec::with_capacity(slab.len() * w);
    let mut base_idx = vec![0i64; m];
    for x in 0..slab.len() {
        let idx = slab.lattice_index(x);
        base_idx.copy_from_slice(&idx[..m]);
        let y = d.node_at(&base_idx).ok_or_else(|| QvlError::Domain("slab node off the base grid".into()))?;
        let t = slab.coord(x)[m];
        let s = ((eps - t) / (2.0 * eps)).clamp(0.0, 1.0);
        data.extend(transit(g1.raw(y), &e1[y * w..(y + 1) * w], g2.raw(y), &e2[y * w..(y + 1) * w], s, q, n));
    }
    let field = QField::from_flat(slab.clone(), q, n, data)?;
    let (mut top, mut bottom) = (0.0f64, 0.0f64);
    for x in 0..slab.len() {
        let idx = slab.lattice_index(x);
        let kt = idx[m];
        if kt.unsigned_abs() as f64 == ke {
            base_idx.copy_from_slice(&idx[..m]);
            let y = d.node_at(&base_idx).expect("checked above");
            if kt > 0 {
                top = top.max(gdist(field.raw(x), g1.raw(y), q, n));
            } else {
                bottom = bottom.max(gdist(field.raw(x), g2.raw(y), q, n));
            }
        }
    }
    let energy = closed_energy_trapezoid(&field, p)?;
    let gap: f64 = (0..d.len()).map(|y| d.trapezoid_weight(y) * gdist(g1.raw(y), g2.raw(y), q, n).powf(p)).sum();
    let (en1, en2) = (closed_energy_trapezoid(g1, p)?, closed_energy_trapezoid(g2, p)?);
    let report = InterpolationReport::new(eps, p, h, energy, en1, en2, gap, (top, bottom), bad1 + bad2);
    Ok((field, report))
}

/// Interpolates between circle data `g1` on `|x| = 1` and `g2` on
/// `|x| = 1 - eps` over the annulus between them (m = 2).
///
/// The circle is cut into arcs of length about `eps`; the arc offset is the
/// candidate minimizing the summed vertex energy of both traces.
pub fn annulus_interpolate_2d(g1: &SphereField, g2: &SphereField, eps: f64, p: f64) -> Result<(QField, InterpolationReport)> {
    let nt = match (g1.layout(), g2.layout()) {
        (SphereLayout::Circle { ntheta: a }, SphereLayout::Circle { ntheta: b }) if a == b => a,
        _ => return Err(QvlError::Shape("annulus interpolation needs two circles of equal resolution".into())),
    };
    if g1.q() != g2.q() || g1.n() != g2.n() {
        return Err(QvlError::Shape("g1 and g2 must share (Q,n)".into()));
    }
    if !(eps > 0.0 && eps < 1.0) || !(p > 1.0) {
        return Err(QvlError::Parameter("need 0 < eps < 1 and p > 1".into()));
    }
    if nt % 4 != 0 {
        return Err(QvlError::Parameter("circle resolution must be a multiple of 4".into()));
    }
    let (q, n) = (g1.q(), g1.n());
    let dth = 2.0 * PI / nt as f64;
    let nr = ((eps / dth).ceil() as usize).max(2);
    let arcs = ((2.0 * PI / eps).round() as usize).clamp(3, nt);
    let spacing = nt as f64 / arcs as f64;

    let t1 = g1.tangential_sq()?;
    let t2 = g2.tangential_sq()?;
    let base: Vec<usize> = (0..arcs).map(|v| (v as f64 * spacing).round() as usize).collect();
    let mut best = (f64::INFINITY, 0usize);
    for o in 0..(spacing.ceil() as usize).max(1) {
        let cost: f64 = base.iter().map(|&b| (b + o) % nt).map(|j| t1[j].powf(p / 2.0) + t2[j].powf(p / 2.0)).sum();
        if cost < best.0 {
            best = (cost, o);
        }
    }
    let verts: Vec<usize> = base.iter().map(|&b| b + best.1).collect();
    let window = (spacing.ceil() as i64).max(1);
    let vertex_means = |g: &SphereField| -> Result<Vec<Vec<f64>>> {
        verts
            .iter()
            .map(|&v| {
                let samples: Vec<&[f64]> =
                    (-window..=window).map(|k| g.raw((v as i64 + k).rem_euclid(nt as i64) as usize)).collect();
                Ok(frechet_mean(&samples, &vec![1.0; samples.len()], q, n)?.as_flat().to_vec())
            })
            .collect()
    };
    let (v1, v2) = (vertex_means(g1)?, vertex_means(g2)?);
    let extend = |vm: &[Vec<f64>]| -> Vec<Vec<f64>> {
        (0..nt)
            .map(|j| {
                // arc k spans verts[k] .. verts[k+1] (indices unwrapped past nt)
                let jj = if j < verts[0] { j + nt } else { j };
                let k = (0..arcs).rev().find(|&k| verts[k] <= jj).unwrap_or(0);
                let (a, b) = (verts[k], if k + 1 < arcs { verts[k + 1] } else { verts[0] + nt });
                let u = (jj - a) as f64 / (b - a) as f64;
                blend(&vm[k], &vm[(k + 1) % arcs], u, q, n)
            })
            .collect()
    };
    let (x1, x2) = (extend(&v1), extend(&v2));

    let dom = Arc::new(GridDomain::new(DomainSpec::Polar { inner: 1.0 - eps, outer: 1.0, nr, ntheta: nt })?);
    let mut data = Vec::with_capacity(dom.len() * q * n);
    for x in 0..dom.len() {
        let (i, j) = dom.polar_index(x);
        let s = (nr - i) as f64 / nr as f64;
        data.extend(transit(g1.raw(j), &x1[j], g2.raw(j), &x2[j], s, q, n));
    }
    let field = QField::from_flat(dom.clone(), q, n, data)?;
    let (mut top, mut bottom) = (0.0f64, 0.0f64);
    for j in 0..nt {
        top = top.max(gdist(field.raw(dom.polar_node(nr, j)), g1.raw(j), q, n));
        bottom = bottom.max(gdist(field.raw(dom.polar_node(0, j)), g2.raw(j), q, n));
    }
    let energy = closed_energy_trapezoid(&field, p)?;
    let gap: f64 = (0..nt).map(|j| dth * gdist(g1.raw(j), g2.raw(j), q, n).powf(p)).sum();
    let report = InterpolationReport::new(
        eps,
        p,
        1.0 / nr as f64 * eps,
        energy,
        g1.tangential_energy(p, 1.0)?,
        g2.tangential_energy(p, 1.0)?,
        gap,
        (top, bottom),
        0,
    );
    Ok((field, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Homogeneous0Report {
    pub energy: f64,
    /// `int_{S(eps)} |||grad_T g|||^p`
    pub boundary_energy: f64,
    /// `energy / (eps * boundary_energy)`
    pub ratio: f64,
    /// `int_0^1 t^{j-p} dt = 1 / (j + 1 - p)`
    pub predicted: f64,
}

/// `z -> g(eps z / |z|)` on the ball `B^{j+1}(0, eps)` with spacing `h`;
/// the center takes the mean of `g`.
pub fn homogeneous0_extension(g: &SphereField, cell_dim: usize, eps: f64, p: f64, h: f64) -> Result<(QField, Homogeneous0Report)> {
    let m = cell_dim + 1;
    if (m as f64) <= p {
        return Err(QvlError::Parameter(format!("degree-0 extension needs j + 1 > p, got j = {cell_dim}, p = {p}")));
    }
    if g.m() != m {
        return Err(QvlError::Shape(format!("sphere data lives in R^{}, cells need R^{m}", g.m())));
    }
    let dom = Arc::new(GridDomain::ball(m, eps, h)?);
    let center = g.mean()?;
    let field = QField::from_fn(dom, |_, x| {
        if x.iter().all(|c| c.abs() < 1e-15) {
            Ok(center.clone())
        } else {
            Ok(g.value(g.nearest(x)))
        }
    })?;
    let energy = interior_energy(&field, p)?;
    let boundary_energy = g.tangential_energy(p, eps)?;
    let ratio = energy / (eps * boundary_energy);
    Ok((field, Homogeneous0Report { energy, boundary_energy, ratio, predicted: 1.0 / (m as f64 - p) }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q1(v: f64) -> QPoint {
        QPoint::new(vec![vec![v]]).unwrap()
    }

    #[test]
    fn m_p_values() {
        assert_eq!(m_p(2.0).unwrap(), 1);
        assert_eq!(m_p(2.5).unwrap(), 2);
        assert_eq!(m_p(3.0).unwrap(), 2);
        assert!(m_p(1.0).is_err());
    }

    #[test]
    fn closed_form_circle_oracle() {
        // g = cos(theta): int (a^2 cos^2 + sin^2) = pi (a^2 + 1), factor 1/(2a)
        let g = SphereField::circle(4096, |u| Ok(q1(u[0]))).unwrap();
        for a in [0.5, 1.0, 2.0] {
            let v = radial_energy_closed_form(&g, a, 2.0, 1.0).unwrap();
            let oracle = PI * (a * a + 1.0) / (2.0 * a);
            assert!((v - oracle).abs() < 1e-5 * oracle, "{a}: {v} vs {oracle}");
        }
        assert!(radial_energy_closed_form(&g, 0.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn closed_form_sphere_constant_oracle() {
        // int_B alpha^2 |c|^2 r^{2 alpha - 2} = alpha^2 |c|^2 4 pi / (1 + 2 alpha)
        let c = [0.3, -1.2];
        let g = SphereField::latlong(32, 64, |_| QPoint::new(vec![c.to_vec()])).unwrap();
        let c2 = c[0] * c[0] + c[1] * c[1];
        for a in [0.5, 1.0, 2.0] {
            let v = radial_energy_closed_form(&g, a, 2.0, 1.0).unwrap();
            let oracle = a * a * c2 * 4.0 * PI / (1.0 + 2.0 * a);
            assert!((v - oracle).abs() < 1e-12 * oracle);
        }
        let tiny = radial_energy_closed_form(&g, 1e-6, 2.0, 1.0).unwrap();
        assert!(tiny < 1e-10);
    }

    #[test]
    fn latlong_tangential_energy_of_linear_trace() {
        // |grad_T x_1|^2 = 1 - x_1^2 on S^2; integral 8 pi / 3
        let g = SphereField::latlong(64, 128, |u| Ok(q1(u[0]))).unwrap();
        let e = g.tangential_energy(2.0, 1.0).unwrap();
        assert!((e - 8.0 * PI / 3.0).abs() < 2e-3 * 8.0 * PI / 3.0, "{e}");
    }

    #[test]
    fn radial_extension_trace_is_exact_on_polar_grids() {
        let d = Arc::new(GridDomain::polar_disc(1.0, 16, 64).unwrap());
        let g = SphereField::circle(64, |u| QPoint::new(vec![vec![u[0]], vec![-u[1]]])).unwrap();
        let v = radial_extension(&g, 0.7, d.clone(), &[0.0, 0.0], 1.0).unwrap();
        for j in 0..64 {
            assert_eq!(v.value(d.polar_node(16, j)), g.value(j));
        }
        let c = SphereField::circle(64, |_| Ok(q1(2.0))).unwrap();
        let w = radial_extension(&c, 2.0, d.clone(), &[0.0, 0.0], 1.0).unwrap();
        let x = d.polar_node(8, 3);
        assert!((w.raw(x)[0] - 2.0 * 0.25).abs() < 1e-15);
        assert!(radial_extension(&c, -1.0, d, &[0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn m_bound_limits_and_gap_condition() {
        let v = m_bound(3, 2.0, 0.0, 1e-9, 0.0, 1.0).unwrap();
        assert!((v - 1.0).abs() < 1e-8);
        // p <= 2: below 1/(m-p) iff C(1+M^p) a^p < p a/(m-p)
        for &(m, p, big_m, a) in &[(3, 2.0, 1.0, 0.1), (3, 2.0, 1.0, 2.0), (4, 1.5, 0.5, 0.3), (4, 1.5, 3.0, 0.9)] {
            let lhs = m_bound(m, p, big_m, a, 0.0, 1.0).unwrap() < 1.0 / (m as f64 - p);
            let rhs = (1.0 + f64::powf(big_m, p)) * f64::powf(a, p) < p * a / (m as f64 - p);
            assert_eq!(lhs, rhs);
        }
        // p > 2 with delta = alpha^2: excess over the alpha -> 0 limit is O(alpha^2)
        let base = 1.0 / (4.0 - 3.0);
        let r1 = m_bound(4, 3.0, 1.0, 1e-2, 1e-4, 1.0).unwrap() * (4.0 - 3.0 + 3e-2) - base;
        let r2 = m_bound(4, 3.0, 1.0, 1e-3, 1e-6, 1.0).unwrap() * (4.0 - 3.0 + 3e-3) - base;
        assert!((r1 / r2 - 100.0).abs() < 5.0, "{r1} {r2}");
        assert!(m_bound(2, 3.0, 1.0, 0.1, 0.01, 1.0).is_err());
    }

    #[test]
    fn default_c_satisfies_the_inequality() {
        let p = 3.0;
        let c = default_c(p);
        let s = p / 2.0;
        for &delta in &[1e-3, 0.1, 0.5, 1.0] {
            for &t in &[0.0, 0.01, 1.0, 7.0, 100.0] {
                let lhs = (t + 1.0f64).powf(s);
                let rhs = (1.0 + delta) * f64::powf(t, s) + c * f64::powf(delta, 1.0 - s);
                assert!(lhs <= rhs * (1.0 + 1e-12), "{delta} {t}");
            }
        }
        assert_eq!(default_c(2.0), 1.0);
    }

    #[test]
    fn gap_certificates() {
        let a = find_gap(3, 2.0, 0.0, 1.0).unwrap();
        let b = find_gap(3, 2.0, 0.0, 1.0).unwrap();
        assert_eq!(a, b);
        assert!(a.holds() && a.eta0 > 0.0);
        assert!((a.eps0 - a.eta0).abs() < 1e-15);
        let mut last = f64::INFINITY;
        for big_m in [0.0, 1.0, 10.0] {
            let c = find_gap(3, 2.0, big_m, 1.0).unwrap();
            assert!(c.eta0 <= last);
            last = c.eta0;
        }
        let c = find_gap(4, 3.0, 1.0, default_c(3.0)).unwrap();
        assert!(c.holds() && (c.delta0 - c.alpha0 * c.alpha0).abs() < 1e-18);
        assert!(find_gap(2, 2.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn gap_optimum_m3_p2_m0() {
        // eta(a) = (1 - (1 + a^2)/(1 + 2a)) / 2 = a(2 - a)/(2(1 + 2a)); maximum
        // at a^2 + a - 1 = 0
        let a0 = (5f64.sqrt() - 1.0) / 2.0;
        let eta = a0 * (2.0 - a0) / (2.0 * (1.0 + 2.0 * a0));
        let c = find_gap(3, 2.0, 0.0, 1.0).unwrap();
        assert!((c.alpha0 - a0).abs() < 1e-6, "{}", c.alpha0);
        assert!((c.eta0 - eta).abs() < 1e-10);
    }

    #[test]
    fn slab_constant_gap_matches_linear_transit() {
        let d = Arc::new(GridDomain::cube(1, 1.0 / 32.0).unwrap());
        let delta = 0.6;
        let g1 = QField::constant(d.clone(), &q1(0.0));
        let g2 = QField::constant(d.clone(), &q1(delta));
        let eps = 0.25;
        let (f, r) = slab_interpolate(&g1, &g2, eps, 2.0).unwrap();
        // int over [-1,1] x [-eps,eps] of (delta / 2 eps)^2
        assert!((r.energy - delta * delta / eps).abs() < 1e-10 * r.energy);
        assert_eq!(r.trace_residual_top, 0.0);
        assert_eq!(r.trace_residual_bottom, 0.0);
        assert_eq!(f.domain().m(), 2);
        let (_, z) = slab_interpolate(&g1, &g1, eps, 2.0).unwrap();
        assert_eq!(z.energy, 0.0);
        assert_eq!(z.constant, 0.0);
    }

    #[test]
    fn slab_same_smooth_data() {
        let d = Arc::new(GridDomain::cube(1, 1.0 / 64.0).unwrap());
        let g = QField::from_fn(d.clone(), |_, x| QPoint::new(vec![vec![x[0].sin()], vec![2.0 + x[0] * x[0]]])).unwrap();
        let (_, r) = slab_interpolate(&g, &g, 0.125, 2.0).unwrap();
        assert!(r.gap_term == 0.0 && r.constant.is_finite() && r.constant < 4.0, "{r:?}");
        assert!(matches!(slab_interpolate(&g, &g, 0.1, 2.0), Err(QvlError::Parameter(_))));
        let sq = Arc::new(GridDomain::cube(2, 1.0 / 8.0).unwrap());
        let h = QField::constant(sq, &q1(1.0));
        assert!(matches!(slab_interpolate(&h, &h, 0.25, 2.0), Err(QvlError::Unsupported(_))));
    }

    #[test]
    fn slab_two_dimensional_for_p_above_two() {
        let d = Arc::new(GridDomain::cube(2, 1.0 / 8.0).unwrap());
        let g1 = QField::from_fn(d.clone(), |_, x| QPoint::new(vec![vec![x[0]], vec![-x[0]]])).unwrap();
        let g2 = QField::from_fn(d.clone(), |_, x| QPoint::new(vec![vec![x[1]], vec![1.0]])).unwrap();
        let (_, r) = slab_interpolate(&g1, &g2, 0.25, 2.5).unwrap();
        assert!(r.constant.is_finite() && r.constant > 0.0);
        assert_eq!(r.trace_residual_top + r.trace_residual_bottom, 0.0);
    }

    #[test]
    fn annulus_constant_oracle() {
        let a = QPoint::new(vec![vec![0.0], vec![1.0]]).unwrap();
        let b = QPoint::new(vec![vec![0.5], vec![2.0]]).unwrap();
        let ga = SphereField::circle(256, |_| Ok(a.clone())).unwrap();
        let gb = SphereField::circle(256, |_| Ok(b.clone())).unwrap();
        let eps = 0.2;
        let g = crate::qspace::metric(&a, &b).unwrap();
        for p in [2.0, 3.0] {
            let (_, r) = annulus_interpolate_2d(&ga, &gb, eps, p).unwrap();
            let oracle = 2.0 * PI * (1.0 - eps / 2.0) * eps.powf(1.0 - p) * g.powf(p);
            assert!((r.energy - oracle).abs() < 1e-9 * oracle, "{} vs {oracle}", r.energy);
            assert_eq!((r.trace_residual_top, r.trace_residual_bottom), (0.0, 0.0));
        }
    }

    #[test]
    fn annulus_same_data_is_bounded() {
        let g = SphereField::circle(256, |u| QPoint::new(vec![vec![u[0]], vec![-u[0] + 0.1 * u[1]]])).unwrap();
        let (_, r) = annulus_interpolate_2d(&g, &g, 0.25, 2.0).unwrap();
        assert!(r.gap_term == 0.0 && r.constant < 4.0, "{r:?}");
    }

    #[test]
    fn homogeneous0_ratio_for_linear_trace() {
        // energy of eps z_1/|z| on B_eps equals eps * int_{S_eps} |grad_T|^2
        let eps = 1.0;
        let g = SphereField::latlong(96, 192, |u| Ok(q1(eps * u[0]))).unwrap();
        let (f, r) = homogeneous0_extension(&g, 2, eps, 2.0, 1.0 / 24.0).unwrap();
        assert_eq!(r.predicted, 1.0);
        assert!((r.boundary_energy - 8.0 * PI / 3.0).abs() < 0.01 * 8.0 * PI / 3.0);
        assert!((r.ratio - 1.0).abs() < 0.08, "{r:?}");
        assert_eq!(f.domain().m(), 3);
        assert!(homogeneous0_extension(&g, 2, eps, 3.0, 0.1).is_err());
        let c = SphereField::latlong(8, 16, |_| Ok(q1(1.0))).unwrap();
        let (_, z) = homogeneous0_extension(&c, 2, 1.0, 2.0, 0.25).unwrap();
        assert_eq!(z.energy, 0.0);
    }
}

//! Q-valued fields on grid domains: matched-difference jets, the triple norm,
//! p-energies, traces, means and sphere integrals.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{QvlError, Result};
use crate::grid::{sphere_area, DomainSpec, GridDomain};
use crate::qspace::{dist2, match_sheets, QPoint};

#[derive(Debug, Clone)]
pub struct QField {
    domain: Arc<GridDomain>,
    q: usize,
    n: usize,
    values: Vec<f64>,
}

impl QField {
    /// Builds a field from per-node values; each value is canonicalized.
    pub fn from_values(domain: Arc<GridDomain>, values: Vec<QPoint>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(QvlError::Shape(format!("{} values for {} nodes", values.len(), domain.len())));
        }
        let q = values.first().map(|v| v.q()).unwrap_or(1);
        let n = values.first().map(|v| v.n()).unwrap_or(1);
        let mut flat = Vec::with_capacity(values.len() * q * n);
        for v in &values {
            if v.q() != q || v.n() != n {
                return Err(QvlError::Shape("mixed (Q,n) across nodes".into()));
            }
            flat.extend_from_slice(v.as_flat());
        }
        Ok(QField { domain, q, n, values: flat })
    }

    /// Builds a field from flat node-major sheet data in any sheet order.
    pub fn from_flat(domain: Arc<GridDomain>, q: usize, n: usize, data: Vec<f64>) -> Result<Self> {
        let w = q * n;
        if data.len() != domain.len() * w {
            return Err(QvlError::Shape("flat field data has the wrong length".into()));
        }
        let mut values = Vec::with_capacity(data.len());
        for chunk in data.chunks_exact(w.max(1)) {
            values.extend_from_slice(QPoint::from_flat(q, n, chunk.to_vec())?.as_flat());
        }
        Ok(QField { domain, q, n, values })
    }

    /// Samples `g(node, x)` at every node.
    pub fn from_fn(domain: Arc<GridDomain>, mut g: impl FnMut(usize, &[f64]) -> Result<QPoint>) -> Result<Self> {
        let vals = (0..domain.len()).map(|i| g(i, domain.coord(i))).collect::<Result<Vec<_>>>()?;
        Self::from_values(domain, vals)
    }

    pub fn constant(domain: Arc<GridDomain>, c: &QPoint) -> Self {
        let values = c.as_flat().repeat(domain.len());
        QField { domain, q: c.q(), n: c.n(), values }
    }

    pub fn domain(&self) -> &GridDomain {
        &self.domain
    }

    pub fn domain_arc(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Canonical sheet data of one node.
    pub fn raw(&self, node: usize) -> &[f64] {
        let w = self.q * self.n;
        &self.values[node * w..(node + 1) * w]
    }

    pub fn flat(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, node: usize) -> QPoint {
        QPoint::from_flat(self.q, self.n, self.raw(node).to_vec()).expect("stored values are valid")
    }

    pub fn set(&mut self, node: usize, v: &QPoint) -> Result<()> {
        if v.q() != self.q || v.n() != self.n {
            return Err(QvlError::Shape("value shape differs from the field".into()));
        }
        let w = self.q * self.n;
        self.values[node * w..(node + 1) * w].copy_from_slice(v.as_flat());
        Ok(())
    }

    pub fn to_file(&self, meta: serde_json::Value) -> QFieldFile {
        QFieldFile {
            domain: self.domain.spec().clone(),
            q: self.q,
            n: self.n,
            meta,
            values: (0..self.domain.len()).map(|i| self.value(i)).collect(),
        }
    }

    pub fn write_json(&self, path: &Path, meta: serde_json::Value) -> Result<()> {
        let s = serde_json::to_string(&self.to_file(meta))?;
        std::fs::write(path, s)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<(Self, serde_json::Value)> {
        let file: QFieldFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        file.into_field()
    }
}

/// On-disk field: domain header, shape, free-form metadata and node values
/// in node order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QFieldFile {
    pub domain: DomainSpec,
    pub q: usize,
    pub n: usize,
    #[serde(default)]
    pub meta: serde_json::Value,
    pub values: Vec<QPoint>,
}

impl QFieldFile {
    pub fn into_field(self) -> Result<(QField, serde_json::Value)> {
        let d = Arc::new(GridDomain::new(self.domain)?);
        if self.values.iter().any(|v| v.q() != self.q || v.n() != self.n) {
            return Err(QvlError::Shape("value shape differs from the header".into()));
        }
        Ok((QField::from_values(d, self.values)?, self.meta))
    }
}

/// Sheets at a node and their partial derivatives in ambient coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedJet {
    pub base: usize,
    pub q: usize,
    pub n: usize,
    pub m: usize,
    /// `q * n`, canonical order.
    pub sheets: Vec<f64>,
    /// `q * m * n`: `partials[(i * m + k) * n + c]` is `d_k` of sheet `i`.
    pub partials: Vec<f64>,
}

impl MatchedJet {
    pub fn sheet(&self, i: usize) -> &[f64] {
        &self.sheets[i * self.n..(i + 1) * self.n]
    }

    pub fn partial(&self, i: usize, k: usize) -> &[f64] {
        let o = (i * self.m + k) * self.n;
        &self.partials[o..o + self.n]
    }

    /// `sum_k v_k d_k f_i`.
    pub fn directional(&self, i: usize, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (k, vk) in v.iter().enumerate() {
            for (o, d) in out.iter_mut().zip(self.partial(i, k)) {
                *o += vk * d;
            }
        }
        out
    }
}

pub fn triple_norm(j: &MatchedJet) -> f64 {
    j.partials.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Derivative of the base sheets along one grid axis, `q * n` entries.
fn axis_derivative(f: &QField, x: usize, axis: usize, one_sided: bool) -> Option<Vec<f64>> {
    let d = f.domain();
    let (q, n) = (f.q, f.n);
    let base = f.raw(x);
    let len = d.step(x, axis);
    let plus = d.neighbor(x, axis, 1);
    let minus = d.neighbor(x, axis, -1);
    let mut out = vec![0.0; q * n];
    match (plus, minus) {
        (Some(a), Some(b)) => return Some(matched_central(base, f.raw(a), f.raw(b), q, n, 2.0 * len)),
        (Some(a), None) if one_sided => {
            let (pa, _) = match_sheets(base, f.raw(a), q, n);
            let va = f.raw(a);
            for i in 0..q {
                for c in 0..n {
                    out[i * n + c] = (va[pa[i] * n + c] - base[i * n + c]) / len;
                }
            }
        }
        (None, Some(b)) if one_sided => {
            let (pb, _) = match_sheets(base, f.raw(b), q, n);
            let vb = f.raw(b);
            for i in 0..q {
                for c in 0..n {
                    out[i * n + c] = (base[i * n + c] - vb[pb[i] * n + c]) / len;
                }
            }
        }
        _ => return None,
    }
    Some(out)
}

fn build_jet(f: &QField, x: usize, one_sided: bool) -> Option<MatchedJet> {
    let d = f.domain();
    let (q, n, m) = (f.q, f.n, d.m());
    let mut partials = vec![0.0; q * m * n];
    let axes: Vec<Vec<f64>> = (0..m).map(|k| axis_derivative(f, x, k, one_sided)).collect::<Option<_>>()?;
    let rotate = d.is_polar() && !(d.is_polar_disc() && x == 0);
    let (cs, sn) = if rotate {
        let (_, th) = d.polar_coord(x);
        (th.cos(), th.sin())
    } else {
        (1.0, 0.0)
    };
    for i in 0..q {
        for c in 0..n {
            if rotate {
                let dr = axes[0][i * n + c];
                let dt = axes[1][i * n + c];
                partials[(i * m) * n + c] = cs * dr - sn * dt;
                partials[(i * m + 1) * n + c] = sn * dr + cs * dt;
            } else {
                for k in 0..m {
                    partials[(i * m + k) * n + c] = axes[k][i * n + c];
                }
            }
        }
    }
    Some(MatchedJet { base: x, q, n, m, sheets: f.raw(x).to_vec(), partials })
}

/// `(plus_{s+(i)} - minus_{s-(i)}) / denom`, where `s+` and `s-` are the
/// optimal matchings of `base` to each side.
pub(crate) fn matched_central(base: &[f64], plus: &[f64], minus: &[f64], q: usize, n: usize, denom: f64) -> Vec<f64> {
    let (pa, _) = match_sheets(base, plus, q, n);
    let (pb, _) = match_sheets(base, minus, q, n);
    let mut out = vec![0.0; q * n];
    for i in 0..q {
        for c in 0..n {
            out[i * n + c] = (plus[pa[i] * n + c] - minus[pb[i] * n + c]) / denom;
        }
    }
    out
}

/// Matched central-difference jet at an interior node.
pub fn jet(f: &QField, x: usize) -> Result<MatchedJet> {
    if f.domain().is_boundary(x) {
        return Err(QvlError::Domain(format!("node {x} is a boundary node")));
    }
    build_jet(f, x, false).ok_or_else(|| QvlError::Domain(format!("node {x} lacks a neighbor")))
}

/// Jet that falls back to one-sided differences where a neighbor is missing.
pub fn jet_closed(f: &QField, x: usize) -> Result<MatchedJet> {
    build_jet(f, x, true).ok_or_else(|| QvlError::Domain(format!("node {x} is isolated")))
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(QvlError::Parameter(format!("exponent p must lie in (1, inf), got {p}")));
    }
    Ok(())
}

/// Per-node triple norm of the jet; `NaN` at boundary nodes.
pub fn triple_norms(f: &QField) -> Vec<f64> {
    (0..f.domain().len())
        .map(|x| jet(f, x).map(|j| triple_norm(&j)).unwrap_or(f64::NAN))
        .collect()
}

/// `sum_x w_x |||Df(x)|||^p` over the nodes of `region`, all of which must
/// be interior.
pub fn energy(f: &QField, region: impl Fn(usize) -> bool, p: f64) -> Result<f64> {
    check_p(p)?;
    let d = f.domain();
    let mut e = 0.0;
    for x in 0..d.len() {
        if region(x) {
            let j = jet(f, x)?;
            e += d.weight(x) * triple_norm(&j).powf(p);
        }
    }
    Ok(e)
}

/// p-th root of [`energy`].
pub fn energy_root(f: &QField, region: impl Fn(usize) -> bool, p: f64) -> Result<f64> {
    Ok(energy(f, region, p)?.powf(1.0 / p))
}

/// Energy over all interior nodes.
pub fn interior_energy(f: &QField, p: f64) -> Result<f64> {
    let d = f.domain();
    energy(f, |x| !d.is_boundary(x), p)
}

/// Energy of the closed domain with one-sided jets at boundary nodes and
/// trapezoid weights on box faces.
pub fn closed_energy_trapezoid(f: &QField, p: f64) -> Result<f64> {
    check_p(p)?;
    let d = f.domain();
    let mut e = 0.0;
    for x in 0..d.len() {
        let j = jet_closed(f, x)?;
        e += d.trapezoid_weight(x) * triple_norm(&j).powf(p);
    }
    Ok(e)
}

/// `sum_e vol_e (G(f(a), f(b)) / len_e)^p` over edges with both endpoints in
/// `region`.
pub fn edge_energy(f: &QField, region: impl Fn(usize) -> bool, p: f64) -> Result<f64> {
    check_p(p)?;
    let mut e = 0.0;
    for ed in f.domain().edges() {
        if region(ed.a) && region(ed.b) {
            let (_, c) = match_sheets(f.raw(ed.a), f.raw(ed.b), f.q, f.n);
            e += ed.vol * (c.sqrt() / ed.len).powf(p);
        }
    }
    Ok(e)
}

/// Boundary nodes with their values.
pub fn trace(f: &QField) -> Vec<(usize, QPoint)> {
    f.domain().boundary_nodes().into_iter().map(|x| (x, f.value(x))).collect()
}

/// Squared-distance Frechet mean over `nodes` by alternating matching and
/// averaging, started from the first node's value.
pub fn mean_on(f: &QField, nodes: &[usize]) -> Result<QPoint> {
    mean_on_weighted(f, nodes, &vec![1.0; nodes.len()])
}

pub fn mean_on_weighted(f: &QField, nodes: &[usize], weights: &[f64]) -> Result<QPoint> {
    let samples: Vec<&[f64]> = nodes.iter().map(|&x| f.raw(x)).collect();
    frechet_mean(&samples, weights, f.q, f.n)
}

/// Frechet mean of flat Q-point samples; see [`mean_on`].
pub fn frechet_mean(samples: &[&[f64]], weights: &[f64], q: usize, n: usize) -> Result<QPoint> {
    if samples.is_empty() {
        return Err(QvlError::Domain("mean over an empty region".into()));
    }
    let wsum: f64 = weights.iter().sum();
    if !(wsum > 0.0) {
        return Err(QvlError::Parameter("weights must have positive sum".into()));
    }
    let mut mean = samples[0].to_vec();
    let mut prev: Vec<Vec<usize>> = Vec::new();
    for _ in 0..500 {
        let perms: Vec<Vec<usize>> = samples.iter().map(|s| match_sheets(&mean, s, q, n).0).collect();
        let mut acc = vec![0.0; q * n];
        for ((s, w), p) in samples.iter().zip(weights).zip(&perms) {
            for i in 0..q {
                for c in 0..n {
                    acc[i * n + c] += w * s[p[i] * n + c];
                }
            }
        }
        acc.iter_mut().for_each(|a| *a /= wsum);
        let moved = dist2(&acc, &mean);
        mean = acc;
        if perms == prev || moved == 0.0 {
            break;
        }
        prev = perms;
    }
    QPoint::from_flat(q, n, mean)
}

/// Boundary integrals over the sphere `|x - a| = r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereIntegrals {
    /// `int |f|^2`
    pub h: f64,
    /// `int sum_i <d_nu f_i, f_i>`
    pub radial_pair: f64,
    /// `int sum_i |d_nu f_i|^2`
    pub radial_square: f64,
}

fn polar_ring(f: &QField, i: usize) -> Result<SphereIntegrals> {
    let d = f.domain();
    let r = d.radii()[i];
    if d.is_polar_disc() && i == 0 {
        return Ok(SphereIntegrals { h: 0.0, radial_pair: 0.0, radial_square: 0.0 });
    }
    let w = r * d.dtheta();
    let mut s = SphereIntegrals { h: 0.0, radial_pair: 0.0, radial_square: 0.0 };
    for j in 0..d.ntheta() {
        let x = d.polar_node(i, j);
        let v = f.raw(x);
        let dr = axis_derivative(f, x, 0, true).ok_or_else(|| QvlError::Domain("ring lacks radial neighbors".into()))?;
        s.h += w * v.iter().map(|a| a * a).sum::<f64>();
        s.radial_pair += w * v.iter().zip(&dr).map(|(a, b)| a * b).sum::<f64>();
        s.radial_square += w * dr.iter().map(|a| a * a).sum::<f64>();
    }
    Ok(s)
}

/// `(H, radial pair, radial square)` on the sphere of radius `r` about `a`.
///
/// Polar grids integrate exactly over each ring and interpolate linearly in
/// `r` between rings. Cartesian grids average over the shell
/// `r - h/2 <= |x - a| < r + h/2` and scale by the exact sphere area.
pub fn sphere_integrals(f: &QField, a: &[f64], r: f64) -> Result<SphereIntegrals> {
    let d = f.domain();
    if a.len() != d.m() {
        return Err(QvlError::Shape("center dimension".into()));
    }
    if !(r > 0.0) {
        return Err(QvlError::Parameter("radius must be positive".into()));
    }
    if d.is_polar() {
        if a.iter().any(|c| c.abs() > 1e-12) {
            return Err(QvlError::Domain("polar sphere integrals need a = 0".into()));
        }
        let radii = d.radii();
        let (lo, hi) = (radii[0], radii[d.nr()]);
        if r < lo - 1e-12 || r > hi + 1e-12 {
            return Err(QvlError::Domain(format!("sphere of radius {r} exits the domain")));
        }
        let t = ((r - lo) / d.h()).clamp(0.0, d.nr() as f64);
        let i0 = (t.floor() as usize).min(d.nr() - 1);
        let s = t - i0 as f64;
        let a0 = polar_ring(f, i0)?;
        if s < 1e-12 {
            return Ok(a0);
        }
        let a1 = polar_ring(f, i0 + 1)?;
        if s > 1.0 - 1e-12 {
            return Ok(a1);
        }
        let mix = |x: f64, y: f64| (1.0 - s) * x + s * y;
        return Ok(SphereIntegrals {
            h: mix(a0.h, a1.h),
            radial_pair: mix(a0.radial_pair, a1.radial_pair),
            radial_square: mix(a0.radial_square, a1.radial_square),
        });
    }
    let h = d.h();
    let mut count = 0usize;
    let mut acc = SphereIntegrals { h: 0.0, radial_pair: 0.0, radial_square: 0.0 };
    for x in 0..d.len() {
        let c = d.coord(x);
        let rho = dist2(c, a).sqrt();
        if rho < r - h / 2.0 || rho >= r + h / 2.0 {
            continue;
        }
        if d.is_boundary(x) {
            return Err(QvlError::Domain(format!("sphere of radius {r} exits the domain")));
        }
        let j = jet(f, x)?;
        let nu: Vec<f64> = c.iter().zip(a).map(|(p, q)| (p - q) / rho).collect();
        for i in 0..f.q {
            let v = j.sheet(i);
            let dn = j.directional(i, &nu);
            acc.h += v.iter().map(|t| t * t).sum::<f64>();
            acc.radial_pair += v.iter().zip(&dn).map(|(s, t)| s * t).sum::<f64>();
            acc.radial_square += dn.iter().map(|t| t * t).sum::<f64>();
        }
        count += 1;
    }
    if count == 0 {
        return Err(QvlError::Domain(format!("no grid nodes on the shell of radius {r}")));
    }
    let area = sphere_area(d.m(), r) / count as f64;
    Ok(SphereIntegrals { h: acc.h * area, radial_pair: acc.radial_pair * area, radial_square: acc.radial_square * area })
}

/// `int_{|x-a|=r} |||D_T f|||^p`, the tangential p-energy of the trace.
///
/// Polar grids use matched angular differences on each ring and interpolate
/// between rings; Cartesian grids subtract the normal part from node jets on
/// the shell `r - h/2 <= |x - a| < r + h/2`.
pub fn sphere_tangential_energy(f: &QField, a: &[f64], r: f64, p: f64) -> Result<f64> {
    check_p(p)?;
    let d = f.domain();
    let (q, n) = (f.q, f.n);
    if d.is_polar() {
        if a.iter().any(|c| c.abs() > 1e-12) {
            return Err(QvlError::Domain("polar sphere integrals need a = 0".into()));
        }
        let radii = d.radii();
        if r < radii[0] - 1e-12 || r > radii[d.nr()] + 1e-12 {
            return Err(QvlError::Domain(format!("sphere of radius {r} exits the domain")));
        }
        let ring = |i: usize| -> f64 {
            if d.is_polar_disc() && i == 0 {
                return 0.0;
            }
            let ri = radii[i];
            let len = ri * d.dtheta();
            (0..d.ntheta())
                .map(|j| {
                    let x = d.polar_node(i, j);
                    let plus = d.polar_node(i, (j + 1) % d.ntheta());
                    let minus = d.polar_node(i, (j + d.ntheta() - 1) % d.ntheta());
                    let t = matched_central(f.raw(x), f.raw(plus), f.raw(minus), q, n, 2.0 * len);
                    len * t.iter().map(|v| v * v).sum::<f64>().powf(p / 2.0)
                })
                .sum()
        };
        let t = ((r - radii[0]) / d.h()).clamp(0.0, d.nr() as f64);
        let i0 = (t.floor() as usize).min(d.nr() - 1);
        let s = t - i0 as f64;
        return Ok(if s < 1e-12 {
            ring(i0)
        } else if s > 1.0 - 1e-12 {
            ring(i0 + 1)
        } else {
            (1.0 - s) * ring(i0) + s * ring(i0 + 1)
        });
    }
    let h = d.h();
    let mut count = 0usize;
    let mut acc = 0.0;
    for x in 0..d.len() {
        let c = d.coord(x);
        let rho = dist2(c, a).sqrt();
        if rho < r - h / 2.0 || rho >= r + h / 2.0 {
            continue;
        }
        if d.is_boundary(x) {
            return Err(QvlError::Domain(format!("sphere of radius {r} exits the domain")));
        }
        let j = jet(f, x)?;
        let nu: Vec<f64> = c.iter().zip(a).map(|(u, v)| (u - v) / rho).collect();
        let normal: f64 = (0..q).map(|i| j.directional(i, &nu).iter().map(|t| t * t).sum::<f64>()).sum();
        let full = triple_norm(&j).powi(2);
        acc += (full - normal).max(0.0).powf(p / 2.0);
        count += 1;
    }
    if count == 0 {
        return Err(QvlError::Domain(format!("no grid nodes on the shell of radius {r}")));
    }
    Ok(acc * sphere_area(d.m(), r) / count as f64)
}

/// `int_{B(a,r)} |||Df|||^p` from precomputed [`triple_norms`].
///
/// On polar discs the outermost cells contribute the fraction of their area
/// inside the ball. On Cartesian grids the nodes with `|x - a| < r` are
/// summed and must all be interior.
pub fn ball_energy_from_norms(d: &GridDomain, norms: &[f64], a: &[f64], r: f64, p: f64) -> Result<f64> {
    if d.is_polar() {
        if !d.is_polar_disc() || a.iter().any(|c| c.abs() > 1e-12) {
            return Err(QvlError::Domain("polar ball energy needs a disc centered at 0".into()));
        }
        let dr = d.h();
        let rmax = d.radii()[d.nr()] - dr / 2.0;
        if r > rmax + 1e-12 {
            return Err(QvlError::Domain(format!("ball of radius {r} reaches boundary cells")));
        }
        let mut e = std::f64::consts::PI * r.min(dr / 2.0).powi(2) * norms[0].powf(p);
        for i in 1..d.nr() {
            let ri = d.radii()[i];
            let (c0, c1) = (ri - dr / 2.0, ri + dr / 2.0);
            if r <= c0 {
                break;
            }
            let area = 0.5 * d.dtheta() * (r.min(c1).powi(2) - c0 * c0);
            for j in 0..d.ntheta() {
                e += area * norms[d.polar_node(i, j)].powf(p);
            }
        }
        return Ok(e);
    }
    let mut e = 0.0;
    for x in 0..d.len() {
        if dist2(d.coord(x), a).sqrt() < r {
            if d.is_boundary(x) {
                return Err(QvlError::Domain(format!("ball of radius {r} exits the domain")));
            }
            e += d.weight(x) * norms[x].powf(p);
        }
    }
    Ok(e)
}

pub fn ball_energy(f: &QField, a: &[f64], r: f64, p: f64) -> Result<f64> {
    check_p(p)?;
    ball_energy_from_norms(f.domain(), &triple_norms(f), a, r, p)
}

/// CSV with one row per node: id, coordinates, boundary flag and the triple
/// norm of the jet (empty at boundary nodes).
pub fn triple_norm_csv(f: &QField) -> String {
    let d = f.domain();
    let mut s = String::from("node");
    for k in 0..d.m() {
        let _ = write!(s, ",x{}", k + 1);
    }
    s.push_str(",boundary,triple_norm\n");
    let norms = triple_norms(f);
    for x in 0..d.len() {
        let _ = write!(s, "{x}");
        for c in d.coord(x) {
            let _ = write!(s, ",{c}");
        }
        let t = if norms[x].is_nan() { String::new() } else { format!("{}", norms[x]) };
        let _ = writeln!(s, ",{},{}", d.is_boundary(x) as u8, t);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn q1(v: f64) -> QPoint {
        QPoint::new(vec![vec![v]]).unwrap()
    }

    fn pair(v: f64) -> QPoint {
        QPoint::new(vec![vec![v], vec![-v]]).unwrap()
    }

    fn re_sqrt(x: &[f64]) -> f64 {
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        let th = x[1].atan2(x[0]);
        r.sqrt() * (th / 2.0).cos()
    }

    /// Midpoint rule on `[a,b] x [0, 2 pi)` for `int int g(r, th) dth dr`.
    fn polar_quad(g: impl Fn(f64, f64) -> f64, a: f64, b: f64) -> f64 {
        let (nr, nt) = (2000, 2000);
        let (dr, dt) = ((b - a) / nr as f64, 2.0 * PI / nt as f64);
        let mut s = 0.0;
        for i in 0..nr {
            let r = a + (i as f64 + 0.5) * dr;
            for j in 0..nt {
                s += g(r, (j as f64 + 0.5) * dt);
            }
        }
        s * dr * dt
    }

    #[test]
    fn constant_field_has_zero_jets_and_energy() {
        let d = Arc::new(GridDomain::cube(2, 0.25).unwrap());
        let f = QField::constant(d.clone(), &pair(0.7));
        assert!(d.interior_nodes().iter().all(|&x| triple_norm(&jet(&f, x).unwrap()) == 0.0));
        assert_eq!(interior_energy(&f, 2.0).unwrap(), 0.0);
        assert_eq!(edge_energy(&f, |_| true, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn affine_field_jets_are_exact() {
        let d = Arc::new(GridDomain::cube(3, 0.25).unwrap());
        let f = QField::from_fn(d.clone(), |_, x| {
            QPoint::new(vec![vec![2.0 * x[0] - x[2] + 1.0, 0.5 * x[1]]])
        })
        .unwrap();
        let x = d.find_node(&[0.25, -0.5, 0.0], 1e-12).unwrap();
        let j = jet(&f, x).unwrap();
        assert_eq!(j.partial(0, 0), &[2.0, 0.0]);
        assert_eq!(j.partial(0, 1), &[0.0, 0.5]);
        assert_eq!(j.partial(0, 2), &[-1.0, 0.0]);
        assert!((triple_norm(&j) - (4.0f64 + 0.25 + 1.0).sqrt()).abs() < 1e-15);
        let b = d.boundary_nodes()[0];
        assert!(jet(&f, b).is_err());
    }

    #[test]
    fn two_sheet_jets_track_the_smooth_sheet() {
        // g = 1 + x^2 + y never vanishes on the unit square
        let d = Arc::new(GridDomain::cube(2, 1.0 / 32.0).unwrap());
        let f = QField::from_fn(d.clone(), |_, x| Ok(pair(1.5 + x[0] * x[0] + x[1]))).unwrap();
        let x = d.find_node(&[0.5, 0.25], 1e-12).unwrap();
        let j = jet(&f, x).unwrap();
        // sheets are stored as (-g, g)
        assert!((j.partial(1, 0)[0] - 1.0).abs() < 1e-12);
        assert!((j.partial(0, 0)[0] + 1.0).abs() < 1e-12);
        assert!((j.partial(1, 1)[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn polar_jet_of_a_linear_map() {
        let d = Arc::new(GridDomain::polar_disc(1.0, 16, 64).unwrap());
        let f = QField::from_fn(d.clone(), |_, x| Ok(q1(3.0 * x[0] - 2.0 * x[1]))).unwrap();
        for &x in &[0, d.polar_node(4, 5), d.polar_node(15, 33)] {
            let j = jet(&f, x).unwrap();
            assert!((j.partial(0, 0)[0] - 3.0).abs() < 1e-2, "{:?}", j.partials);
            assert!((j.partial(0, 1)[0] + 2.0).abs() < 1e-2, "{:?}", j.partials);
        }
    }

    #[test]
    fn triple_norm_of_identity() {
        let j = MatchedJet { base: 0, q: 1, n: 3, m: 3, sheets: vec![0.0; 3], partials: vec![1., 0., 0., 0., 1., 0., 0., 0., 1.] };
        assert!((triple_norm(&j) - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn energy_of_x1_on_the_square() {
        let mut errs = vec![];
        for h in [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0] {
            let d = Arc::new(GridDomain::cube(2, h).unwrap());
            let f = QField::from_fn(d, |_, x| Ok(q1(x[0]))).unwrap();
            let e = interior_energy(&f, 2.0).unwrap();
            assert!((e - (2.0 - h).powi(2)).abs() < 1e-12);
            errs.push((e - 4.0).abs());
            assert!((closed_energy_trapezoid(&f, 2.0).unwrap() - 4.0).abs() < 1e-12);
            assert!((edge_energy(&f, |_| true, 2.0).unwrap() - 4.0).abs() < 1e-12);
        }
        assert!(errs[1] < errs[0] && errs[2] < errs[1]);
    }

    #[test]
    fn branch_pair_annulus_energy() {
        // |grad Re sqrt z|^2 = 1/(4r), two sheets
        let rho = 0.25;
        let oracle = polar_quad(|r, _| 2.0 * r / (4.0 * r), rho, 1.0);
        assert!((oracle - PI * (1.0 - rho)).abs() < 1e-9);
        let d = Arc::new(GridDomain::new(DomainSpec::Polar { inner: rho, outer: 1.0, nr: 96, ntheta: 256 }).unwrap());
        let f = QField::from_fn(d, |_, x| Ok(pair(re_sqrt(x)))).unwrap();
        let e = interior_energy(&f, 2.0).unwrap();
        // boundary cells are left out of the interior sum
        let dr = 0.75 / 96.0;
        let expected = PI * (1.0 - rho - dr);
        assert!((e - expected).abs() < 0.01 * expected, "{e} vs {expected}");
    }

    #[test]
    fn sphere_integrals_of_re_z_and_the_branch_pair() {
        let d = Arc::new(GridDomain::polar_disc(1.0, 64, 256).unwrap());
        let f = QField::from_fn(d.clone(), |_, x| Ok(q1(x[0]))).unwrap();
        let r = 0.5;
        let s = sphere_integrals(&f, &[0.0, 0.0], r).unwrap();
        assert!((s.h - PI * r.powi(3)).abs() < 1e-10);
        assert!((s.radial_square - PI * r).abs() < 1e-10);
        assert!((s.radial_pair - PI * r * r).abs() < 1e-10);

        // ring oracle for the pair: |f|^2 = 2 r cos^2(th/2), d_r f = f / (2r)
        let g = QField::from_fn(d.clone(), |_, x| Ok(pair(re_sqrt(x)))).unwrap();
        let nt = 20000;
        let ring = |k: f64| -> f64 {
            (0..nt).map(|j| (PI * (2 * j + 1) as f64 / nt as f64 / 2.0).cos().powi(2)).sum::<f64>() * 2.0 * PI / nt as f64 * k
        };
        let (h_or, pair_or, sq_or) = (ring(2.0 * r) * r, ring(1.0) * r, ring(1.0 / (2.0 * r)) * r);
        assert!((h_or - 2.0 * PI * r * r).abs() < 1e-9);
        assert!((pair_or - PI * r).abs() < 1e-9);
        assert!((sq_or - PI / 2.0).abs() < 1e-9);
        let s = sphere_integrals(&g, &[0.0, 0.0], r).unwrap();
        assert!((s.h - h_or).abs() < 1e-10);
        assert!((s.radial_pair - pair_or).abs() < 1e-3 * pair_or);
        assert!((s.radial_square - sq_or).abs() < 2e-3 * sq_or);
        assert!(sphere_integrals(&g, &[0.1, 0.0], r).is_err());
        assert!(sphere_integrals(&g, &[0.0, 0.0], 1.5).is_err());
    }

    #[test]
    fn tangential_sphere_energy() {
        // |D_T x_1|^2 = sin^2 on the circle of radius r: int = pi r
        let d = Arc::new(GridDomain::polar_disc(1.0, 32, 256).unwrap());
        let f = QField::from_fn(d, |_, x| Ok(q1(x[0]))).unwrap();
        let e = sphere_tangential_energy(&f, &[0.0, 0.0], 0.5, 2.0).unwrap();
        assert!((e - PI * 0.5).abs() < 1e-3, "{e}");
        let d = Arc::new(GridDomain::ball(3, 1.0, 1.0 / 32.0).unwrap());
        let f = QField::from_fn(d, |_, x| Ok(q1(x[0]))).unwrap();
        // 4 pi r^2 * 2/3
        let e = sphere_tangential_energy(&f, &[0.0; 3], 0.5, 2.0).unwrap();
        assert!((e - 2.0 * PI / 3.0).abs() < 0.03 * 2.0 * PI / 3.0, "{e}");
    }

    #[test]
    fn cartesian_shell_integrals() {
        let d = Arc::new(GridDomain::ball(2, 1.0, 1.0 / 128.0).unwrap());
        let f = QField::from_fn(d, |_, x| Ok(q1(x[0]))).unwrap();
        let r = 0.5;
        let s = sphere_integrals(&f, &[0.0, 0.0], r).unwrap();
        assert!((s.h - PI * r.powi(3)).abs() < 0.02 * PI * r.powi(3));
        assert!((s.radial_square - PI * r).abs() < 0.02 * PI * r);
        assert!(sphere_integrals(&f, &[0.0, 0.0], 0.999).is_err());
    }

    #[test]
    fn ball_energy_polar_and_cartesian() {
        let d = Arc::new(GridDomain::polar_disc(1.0, 64, 256).unwrap());
        let f = QField::from_fn(d, |_, x| Ok(q1(x[0]))).unwrap();
        for r in [0.1, 0.37, 0.8] {
            let e = ball_energy(&f, &[0.0, 0.0], r, 2.0).unwrap();
            assert!((e - PI * r * r).abs() < 1e-3 * PI * r * r, "{r}: {e}");
        }
        let d = Arc::new(GridDomain::cube(2, 1.0 / 16.0).unwrap());
        let f = QField::from_fn(d, |_, x| Ok(q1(x[0]))).unwrap();
        assert!(ball_energy(&f, &[0.0, 0.0], 1.2, 2.0).is_err());
    }

    #[test]
    fn means() {
        let d = Arc::new(GridDomain::cube(1, 0.25).unwrap());
        let f = QField::from_fn(d.clone(), |_, x| Ok(q1(x[0]))).unwrap();
        let all: Vec<usize> = (0..d.len()).collect();
        assert!(mean_on(&f, &all).unwrap().sheet(0)[0].abs() < 1e-15);
        assert!(mean_on(&f, &[]).is_err());
        // two clusters around -5 and 5
        let g = QField::from_fn(d.clone(), |_, x| QPoint::new(vec![vec![-5.0 + x[0]], vec![5.0 + 2.0 * x[0]]])).unwrap();
        let m = mean_on(&g, &all).unwrap();
        assert!((m.sheet(0)[0] + 5.0).abs() < 1e-12 && (m.sheet(1)[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn file_round_trip_and_csv() {
        let d = Arc::new(GridDomain::polar_disc(1.0, 4, 8).unwrap());
        let f = QField::from_fn(d, |_, x| Ok(pair(x[0]))).unwrap();
        let s = serde_json::to_string(&f.to_file(serde_json::json!({"family": "test"}))).unwrap();
        let (g, meta) = serde_json::from_str::<QFieldFile>(&s).unwrap().into_field().unwrap();
        assert_eq!(g.flat(), f.flat());
        assert_eq!(meta["family"], "test");
        let csv = triple_norm_csv(&f);
        assert!(csv.starts_with("node,x1,x2,boundary,triple_norm\n"));
        assert_eq!(csv.lines().count(), 1 + 33);
    }
}

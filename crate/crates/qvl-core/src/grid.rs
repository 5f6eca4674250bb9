//! Grid domains: Cartesian lattices clipped to a box, ball or annulus, and
//! polar grids on a disc or annulus (m = 2).
//!
//! Cartesian balls and annuli keep a ring of exterior lattice nodes as the
//! boundary: interior nodes are exactly the lattice points of the open set,
//! and boundary nodes are the exterior points adjacent to one of them.
//! Boxes use their faces as boundary. Polar grids use the outer circle (and
//! the inner circle for an annulus) as boundary.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{QvlError, Result};
use crate::tolerances::GEOM_TOL;

/// Serializable description from which a [`GridDomain`] is rebuilt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainSpec {
    /// `[-1,1]^m` with spacing `h`.
    Cube { m: usize, h: f64 },
    /// Axis-aligned box `prod [-half_k, half_k]`; every half-width must be a
    /// multiple of `h`.
    Box { half: Vec<f64>, h: f64 },
    Ball {
        m: usize,
        radius: f64,
        h: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
    },
    Annulus { m: usize, inner: f64, outer: f64, h: f64 },
    /// Polar grid of `nr` radial steps and `ntheta` angles on the disc of
    /// radius `outer`, or on the annulus `inner < r < outer` when `inner > 0`.
    Polar { inner: f64, outer: f64, nr: usize, ntheta: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shape {
    Box,
    Ball,
    Annulus,
    PolarDisc,
    PolarAnnulus,
}

/// One edge of the grid graph with its length and the volume it represents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub len: f64,
    pub vol: f64,
}

#[derive(Debug, Clone)]
pub struct GridDomain {
    spec: DomainSpec,
    shape: Shape,
    m: usize,
    h: f64,
    center: Vec<f64>,
    coords: Vec<f64>,
    boundary: Vec<bool>,
    weights: Vec<f64>,
    // Cartesian lattice lookup
    lattice: Vec<i64>,
    lo: Vec<i64>,
    dims: Vec<usize>,
    lookup: Vec<usize>,
    // polar layout
    nr: usize,
    ntheta: usize,
    radii: Vec<f64>,
    edges: Vec<Edge>,
}

const NONE: usize = usize::MAX;

impl GridDomain {
    pub fn new(spec: DomainSpec) -> Result<Self> {
        match &spec {
            DomainSpec::Cube { m, h } => {
                let half = vec![1.0; *m];
                Self::cartesian(spec.clone(), Shape::Box, *m, *h, vec![0.0; *m], half, 0.0, 0.0)
            }
            DomainSpec::Box { half, h } => {
                let m = half.len();
                Self::cartesian(spec.clone(), Shape::Box, m, *h, vec![0.0; m], half.clone(), 0.0, 0.0)
            }
            DomainSpec::Ball { m, radius, h, center } => {
                let c = center.clone().unwrap_or_else(|| vec![0.0; *m]);
                if c.len() != *m {
                    return Err(QvlError::Shape("ball center dimension".into()));
                }
                Self::cartesian(spec.clone(), Shape::Ball, *m, *h, c, vec![], 0.0, *radius)
            }
            DomainSpec::Annulus { m, inner, outer, h } => {
                if !(*inner > 0.0 && inner < outer) {
                    return Err(QvlError::Parameter("annulus needs 0 < inner < outer".into()));
                }
                Self::cartesian(spec.clone(), Shape::Annulus, *m, *h, vec![0.0; *m], vec![], *inner, *outer)
            }
            DomainSpec::Polar { inner, outer, nr, ntheta } => {
                Self::polar(spec.clone(), *inner, *outer, *nr, *ntheta)
            }
        }
    }

    pub fn cube(m: usize, h: f64) -> Result<Self> {
        Self::new(DomainSpec::Cube { m, h })
    }

    pub fn ball(m: usize, radius: f64, h: f64) -> Result<Self> {
        Self::new(DomainSpec::Ball { m, radius, h, center: None })
    }

    pub fn polar_disc(radius: f64, nr: usize, ntheta: usize) -> Result<Self> {
        Self::new(DomainSpec::Polar { inner: 0.0, outer: radius, nr, ntheta })
    }

    #[allow(clippy::too_many_arguments)]
    fn cartesian(
        spec: DomainSpec,
        shape: Shape,
        m: usize,
        h: f64,
        center: Vec<f64>,
        half: Vec<f64>,
        inner: f64,
        outer: f64,
    ) -> Result<Self> {
        if !(1..=3).contains(&m) {
            return Err(QvlError::Parameter(format!("grid dimension must be 1..=3, got {m}")));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(QvlError::Parameter(format!("spacing must be positive, got {h}")));
        }
        let mut nmax = vec![0i64; m];
        match shape {
            Shape::Box => {
                for k in 0..m {
                    let r = half[k] / h;
                    if !(half[k] > 0.0) || (r - r.round()).abs() > 1e-9 * r.max(1.0) {
                        return Err(QvlError::Parameter(format!(
                            "half-width {} is not a positive multiple of h={h}",
                            half[k]
                        )));
                    }
                    nmax[k] = r.round() as i64;
                }
            }
            _ => {
                if !(outer > 0.0) {
                    return Err(QvlError::Parameter("radius must be positive".into()));
                }
                let r = (outer / h).ceil() as i64 + 1;
                nmax.iter_mut().for_each(|x| *x = r);
            }
        }
        let lo: Vec<i64> = nmax.iter().map(|x| -x).collect();
        let dims: Vec<usize> = nmax.iter().map(|x| (2 * x + 1) as usize).collect();
        let total: usize = dims.iter().product();

        let pos = |idx: &[i64]| -> Vec<f64> { (0..m).map(|k| center[k] + h * idx[k] as f64).collect() };
        let is_interior = |idx: &[i64]| -> bool {
            match shape {
                Shape::Box => (0..m).all(|k| idx[k].abs() < nmax[k]),
                Shape::Ball => {
                    let r = (0..m).map(|k| (h * idx[k] as f64).powi(2)).sum::<f64>().sqrt();
                    r < outer * (1.0 - GEOM_TOL)
                }
                _ => {
                    let r = (0..m).map(|k| (h * idx[k] as f64).powi(2)).sum::<f64>().sqrt();
                    r > inner * (1.0 + GEOM_TOL) && r < outer * (1.0 - GEOM_TOL)
                }
            }
        };
        let unflat = |mut t: usize| -> Vec<i64> {
            let mut idx = vec![0i64; m];
            for k in (0..m).rev() {
                idx[k] = lo[k] + (t % dims[k]) as i64;
                t /= dims[k];
            }
            idx
        };

        let mut interior_flag = vec![false; total];
        for (t, f) in interior_flag.iter_mut().enumerate() {
            *f = is_interior(&unflat(t));
        }
        let flat = |idx: &[i64]| -> Option<usize> {
            let mut t = 0usize;
            for k in 0..m {
                let o = idx[k] - lo[k];
                if o < 0 || o as usize >= dims[k] {
                    return None;
                }
                t = t * dims[k] + o as usize;
            }
            Some(t)
        };

        let mut lookup = vec![NONE; total];
        let mut coords = Vec::new();
        let mut boundary = Vec::new();
        let mut lattice = Vec::new();
        for t in 0..total {
            let idx = unflat(t);
            let inside = interior_flag[t];
            let member = match shape {
                Shape::Box => true,
                _ => {
                    inside
                        || (0..m).any(|k| {
                            [-1i64, 1].iter().any(|&d| {
                                let mut j = idx.clone();
                                j[k] += d;
                                flat(&j).is_some_and(|s| interior_flag[s])
                            })
                        })
                }
            };
            if member {
                lookup[t] = boundary.len();
                coords.extend(pos(&idx));
                lattice.extend_from_slice(&idx);
                boundary.push(!inside);
            }
        }
        let hm = h.powi(m as i32);
        let weights = vec![hm; boundary.len()];
        let mut g = GridDomain {
            spec,
            shape,
            m,
            h,
            center,
            coords,
            boundary,
            weights,
            lattice,
            lo,
            dims,
            lookup,
            nr: 0,
            ntheta: 0,
            radii: vec![],
            edges: vec![],
        };
        g.edges = g.build_cartesian_edges(&nmax);
        Ok(g)
    }

    fn build_cartesian_edges(&self, nmax: &[i64]) -> Vec<Edge> {
        let m = self.m;
        let hm = self.h.powi(m as i32);
        let mut edges = Vec::new();
        for a in 0..self.len() {
            for k in 0..m {
                if let Some(b) = self.neighbor(a, k, 1) {
                    let mut vol = hm;
                    if self.shape == Shape::Box {
                        let idx = self.lattice_index(a);
                        for j in 0..m {
                            if j != k && idx[j].abs() == nmax[j] {
                                vol *= 0.5;
                            }
                        }
                    }
                    edges.push(Edge { a, b, len: self.h, vol });
                }
            }
        }
        edges
    }

    fn polar(spec: DomainSpec, inner: f64, outer: f64, nr: usize, ntheta: usize) -> Result<Self> {
        if !(outer > inner && inner >= 0.0) || nr < 2 {
            return Err(QvlError::Parameter("polar grid needs 0 <= inner < outer and nr >= 2".into()));
        }
        if ntheta < 8 || ntheta % 4 != 0 {
            return Err(QvlError::Parameter(format!(
                "ntheta must be a multiple of 4 and at least 8, got {ntheta}"
            )));
        }
        let disc = inner == 0.0;
        let dr = (outer - inner) / nr as f64;
        let dth = 2.0 * PI / ntheta as f64;
        let radii: Vec<f64> = (0..=nr)
            .map(|i| if i == nr { outer } else { inner + (outer - inner) * i as f64 / nr as f64 })
            .collect();
        let mut coords = Vec::new();
        let mut boundary = Vec::new();
        let mut weights = Vec::new();
        if disc {
            coords.extend([0.0, 0.0]);
            boundary.push(false);
            weights.push(PI * (dr / 2.0).powi(2));
        }
        let first = if disc { 1 } else { 0 };
        for (i, &r) in radii.iter().enumerate().skip(first) {
            let on_edge = i == nr || (!disc && i == 0);
            let w = if i == nr {
                (r * r - (r - dr / 2.0).powi(2)) / 2.0 * dth
            } else if !disc && i == 0 {
                ((r + dr / 2.0).powi(2) - r * r) / 2.0 * dth
            } else {
                r * dr * dth
            };
            for j in 0..ntheta {
                let th = dth * j as f64;
                coords.extend([r * th.cos(), r * th.sin()]);
                boundary.push(on_edge);
                weights.push(w);
            }
        }
        let mut g = GridDomain {
            spec,
            shape: if disc { Shape::PolarDisc } else { Shape::PolarAnnulus },
            m: 2,
            h: dr,
            center: vec![0.0, 0.0],
            coords,
            boundary,
            weights,
            lattice: vec![],
            lo: vec![],
            dims: vec![],
            lookup: vec![],
            nr,
            ntheta,
            radii,
            edges: vec![],
        };
        g.edges = g.build_polar_edges();
        Ok(g)
    }

    fn build_polar_edges(&self) -> Vec<Edge> {
        let dr = self.h;
        let dth = self.dtheta();
        let mut edges = Vec::new();
        let first = self.first_ring();
        if self.is_polar_disc() {
            for j in 0..self.ntheta {
                let b = self.polar_node(1, j);
                edges.push(Edge { a: 0, b, len: dr, vol: (dr / 2.0) * dth * dr });
            }
        }
        for i in first..=self.nr {
            let r = self.radii[i];
            let half = i == self.nr || (!self.is_polar_disc() && i == 0);
            for j in 0..self.ntheta {
                let a = self.polar_node(i, j);
                let b = self.polar_node(i, (j + 1) % self.ntheta);
                let vol = if half { r * dth * dr / 2.0 } else { r * dth * dr };
                edges.push(Edge { a, b, len: r * dth, vol });
                if i < self.nr {
                    let c = self.polar_node(i + 1, j);
                    let rm = 0.5 * (r + self.radii[i + 1]);
                    edges.push(Edge { a, b: c, len: dr, vol: rm * dth * dr });
                }
            }
        }
        edges
    }

    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Lattice spacing (Cartesian) or radial step (polar).
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.boundary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boundary.is_empty()
    }

    pub fn coord(&self, node: usize) -> &[f64] {
        &self.coords[node * self.m..(node + 1) * self.m]
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.boundary[node]
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.boundary[i]).collect()
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.boundary[i]).collect()
    }

    /// Quadrature weight of a node (cell volume).
    pub fn weight(&self, node: usize) -> f64 {
        self.weights[node]
    }

    /// Node weight halved once per box face the node lies on.
    pub fn trapezoid_weight(&self, node: usize) -> f64 {
        let mut w = self.weights[node];
        if let Some(half) = self.box_half() {
            for (c, l) in self.coord(node).iter().zip(&half) {
                if (c.abs() - l).abs() < 1e-9 * l {
                    w *= 0.5;
                }
            }
        }
        w
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn is_polar(&self) -> bool {
        matches!(self.shape, Shape::PolarDisc | Shape::PolarAnnulus)
    }

    pub fn is_polar_disc(&self) -> bool {
        self.shape == Shape::PolarDisc
    }

    pub fn is_box(&self) -> bool {
        self.shape == Shape::Box
    }

    /// Half-widths of a box domain.
    pub fn box_half(&self) -> Option<Vec<f64>> {
        match &self.spec {
            DomainSpec::Cube { m, .. } => Some(vec![1.0; *m]),
            DomainSpec::Box { half, .. } => Some(half.clone()),
            _ => None,
        }
    }

    /// Outer radius for balls, annuli and polar grids.
    pub fn outer_radius(&self) -> Option<f64> {
        match &self.spec {
            DomainSpec::Ball { radius, .. } => Some(*radius),
            DomainSpec::Annulus { outer, .. } | DomainSpec::Polar { outer, .. } => Some(*outer),
            _ => None,
        }
    }

    pub fn nr(&self) -> usize {
        self.nr
    }

    pub fn ntheta(&self) -> usize {
        self.ntheta
    }

    pub fn dtheta(&self) -> f64 {
        2.0 * PI / self.ntheta as f64
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub(crate) fn first_ring(&self) -> usize {
        if self.is_polar_disc() {
            1
        } else {
            0
        }
    }

    /// Node id of ring `i`, angle index `j` (ring 0 of a disc is the center).
    pub fn polar_node(&self, i: usize, j: usize) -> usize {
        if self.is_polar_disc() {
            if i == 0 {
                0
            } else {
                1 + (i - 1) * self.ntheta + j
            }
        } else {
            i * self.ntheta + j
        }
    }

    /// Inverse of [`Self::polar_node`]; the disc center maps to `(0, 0)`.
    pub fn polar_index(&self, node: usize) -> (usize, usize) {
        if self.is_polar_disc() {
            if node == 0 {
                (0, 0)
            } else {
                (1 + (node - 1) / self.ntheta, (node - 1) % self.ntheta)
            }
        } else {
            (node / self.ntheta, node % self.ntheta)
        }
    }

    /// `(r, theta)` of a polar node.
    pub fn polar_coord(&self, node: usize) -> (f64, f64) {
        let (i, j) = self.polar_index(node);
        (self.radii[i], self.dtheta() * j as f64)
    }

    pub fn lattice_index(&self, node: usize) -> &[i64] {
        &self.lattice[node * self.m..(node + 1) * self.m]
    }

    pub fn node_at(&self, idx: &[i64]) -> Option<usize> {
        if self.is_polar() || idx.len() != self.m {
            return None;
        }
        let mut t = 0usize;
        for k in 0..self.m {
            let o = idx[k] - self.lo[k];
            if o < 0 || o as usize >= self.dims[k] {
                return None;
            }
            t = t * self.dims[k] + o as usize;
        }
        let id = self.lookup[t];
        (id != NONE).then_some(id)
    }

    /// Node nearest to a point; for Cartesian grids only exact lattice hits
    /// within `tol` are returned.
    pub fn find_node(&self, x: &[f64], tol: f64) -> Option<usize> {
        if self.is_polar() {
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            if self.is_polar_disc() && r <= tol {
                return Some(0);
            }
            let i = ((r - self.radii[0]) / self.h).round();
            if i < 0.0 || i as usize > self.nr {
                return None;
            }
            let th = x[1].atan2(x[0]).rem_euclid(2.0 * PI);
            let j = (th / self.dtheta()).round() as usize % self.ntheta;
            let node = self.polar_node(i as usize, j);
            let c = self.coord(node);
            let d = ((c[0] - x[0]).powi(2) + (c[1] - x[1]).powi(2)).sqrt();
            return (d <= tol).then_some(node);
        }
        let idx: Vec<i64> = (0..self.m).map(|k| ((x[k] - self.center[k]) / self.h).round() as i64).collect();
        let node = self.node_at(&idx)?;
        let d = crate::qspace::dist2(self.coord(node), x).sqrt();
        (d <= tol).then_some(node)
    }

    /// Neighbor along `axis` in direction `dir` (+1 or -1), if present.
    /// Polar axes are (radial, angular) except at the disc center, where they
    /// are (x, y).
    pub fn neighbor(&self, node: usize, axis: usize, dir: i32) -> Option<usize> {
        if !self.is_polar() {
            let mut idx = self.lattice_index(node).to_vec();
            idx[axis] += dir as i64;
            return self.node_at(&idx);
        }
        let (i, j) = self.polar_index(node);
        let nt = self.ntheta;
        if self.is_polar_disc() && node == 0 {
            // +x, +y, -x, -y sit at angle indices 0, nt/4, nt/2, 3nt/4
            let q = match (axis, dir > 0) {
                (0, true) => 0,
                (1, true) => nt / 4,
                (0, false) => nt / 2,
                _ => 3 * nt / 4,
            };
            return Some(self.polar_node(1, q));
        }
        match axis {
            0 => {
                if dir > 0 {
                    (i < self.nr).then(|| self.polar_node(i + 1, j))
                } else if i == 0 {
                    None
                } else {
                    Some(self.polar_node(i - 1, j))
                }
            }
            _ => {
                let jj = if dir > 0 { (j + 1) % nt } else { (j + nt - 1) % nt };
                Some(self.polar_node(i, jj))
            }
        }
    }

    /// Distance to the neighbor along `axis` (arc length for angular steps).
    pub fn step(&self, node: usize, axis: usize) -> f64 {
        if !self.is_polar() || axis == 0 || (self.is_polar_disc() && node == 0) {
            return self.h;
        }
        self.polar_coord(node).0 * self.dtheta()
    }

    /// Distance from `a` to the furthest point of the closed domain along
    /// any direction, used to test whether a ball fits.
    pub fn contains_ball(&self, a: &[f64], r: f64) -> bool {
        let da: f64 = a.iter().zip(&self.center).map(|(x, c)| (x - c).powi(2)).sum::<f64>().sqrt();
        match &self.spec {
            DomainSpec::Cube { .. } => a.iter().all(|x| x.abs() + r <= 1.0 + GEOM_TOL),
            DomainSpec::Box { half, .. } => a.iter().zip(half).all(|(x, l)| x.abs() + r <= l + GEOM_TOL),
            DomainSpec::Ball { radius, .. } => da + r <= radius + GEOM_TOL,
            DomainSpec::Annulus { .. } => false,
            DomainSpec::Polar { inner, outer, .. } => *inner == 0.0 && da <= GEOM_TOL && r <= outer + GEOM_TOL,
        }
    }
}

/// Surface measure of the sphere of radius `r` in `R^m`.
pub fn sphere_area(m: usize, r: f64) -> f64 {
    match m {
        1 => 2.0,
        2 => 2.0 * PI * r,
        3 => 4.0 * PI * r * r,
        _ => f64::NAN,
    }
}

/// Volume of the ball of radius `r` in `R^m`.
pub fn ball_volume(m: usize, r: f64) -> f64 {
    match m {
        1 => 2.0 * r,
        2 => PI * r * r,
        3 => 4.0 / 3.0 * PI * r.powi(3),
        _ => f64::NAN,
    }
}

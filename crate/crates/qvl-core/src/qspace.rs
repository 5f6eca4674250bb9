//! Unordered Q-tuples of vectors in R^n and the operations on them.
//!
//! A [`QPoint`] stores its sheets in lexicographic order so that equal
//! multisets are bitwise equal. The distance between two points is the
//! optimal-assignment distance over all pairings of their sheets.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::assignment;
use crate::error::{QvlError, Result};

#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct QPoint {
    q: usize,
    n: usize,
    data: Vec<f64>,
}

impl fmt::Debug for QPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.sheets()).finish()
    }
}

impl TryFrom<Vec<Vec<f64>>> for QPoint {
    type Error = QvlError;
    fn try_from(v: Vec<Vec<f64>>) -> Result<Self> {
        QPoint::new(v)
    }
}

impl From<QPoint> for Vec<Vec<f64>> {
    fn from(p: QPoint) -> Self {
        p.sheets().map(|s| s.to_vec()).collect()
    }
}

fn lex(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    Ordering::Equal
}

impl QPoint {
    pub fn new(sheets: Vec<Vec<f64>>) -> Result<Self> {
        let q = sheets.len();
        if q == 0 {
            return Err(QvlError::Shape("a Q-point needs at least one sheet".into()));
        }
        let n = sheets[0].len();
        let mut data = Vec::with_capacity(q * n);
        for s in &sheets {
            if s.len() != n {
                return Err(QvlError::Shape(format!(
                    "sheet of length {} in a point of dimension {n}",
                    s.len()
                )));
            }
            data.extend_from_slice(s);
        }
        Self::from_flat(q, n, data)
    }

    /// Builds a point from `q` consecutive sheets of length `n`.
    pub fn from_flat(q: usize, n: usize, data: Vec<f64>) -> Result<Self> {
        if q == 0 {
            return Err(QvlError::Shape("a Q-point needs at least one sheet".into()));
        }
        if data.len() != q * n {
            return Err(QvlError::Shape(format!(
                "expected {} coordinates, got {}",
                q * n,
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(QvlError::Domain("non-finite coordinate".into()));
        }
        let mut p = QPoint { q, n, data };
        p.canonicalize();
        Ok(p)
    }

    /// `q[[v]]`.
    pub fn repeat(q: usize, v: &[f64]) -> Result<Self> {
        Self::from_flat(q, v.len(), v.repeat(q))
    }

    pub fn zero(q: usize, n: usize) -> Self {
        QPoint { q, n, data: vec![0.0; q * n] }
    }

    fn canonicalize(&mut self) {
        for x in self.data.iter_mut() {
            if *x == 0.0 {
                *x = 0.0; // drop negative zero
            }
        }
        if self.q < 2 || self.n == 0 {
            return;
        }
        let n = self.n;
        let mut idx: Vec<usize> = (0..self.q).collect();
        idx.sort_by(|&a, &b| lex(&self.data[a * n..(a + 1) * n], &self.data[b * n..(b + 1) * n]));
        let mut out = Vec::with_capacity(self.data.len());
        for i in idx {
            out.extend_from_slice(&self.data[i * n..(i + 1) * n]);
        }
        self.data = out;
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sheet(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn sheets(&self) -> impl Iterator<Item = &[f64]> + '_ {
        // n == 0 would make chunks_exact panic
        let n = self.n.max(1);
        self.data.chunks_exact(n).take(self.q)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    fn same_shape(&self, other: &QPoint) -> Result<()> {
        if self.q != other.q || self.n != other.n {
            return Err(QvlError::Shape(format!(
                "(Q,n)=({},{}) vs ({},{})",
                self.q, self.n, other.q, other.n
            )));
        }
        Ok(())
    }

    /// Merges sheets closer than `tol` (single linkage in canonical order)
    /// onto the first sheet of their group, so that exact-equality tests
    /// see them as one value.
    pub fn snapped(&self, tol: f64) -> QPoint {
        let n = self.n;
        let mut data = self.data.clone();
        let mut rep: Vec<usize> = (0..self.q).collect();
        for i in 0..self.q {
            for j in 0..i {
                if rep[j] == j && dist2(&data[i * n..(i + 1) * n], &data[j * n..(j + 1) * n]).sqrt() < tol {
                    rep[i] = j;
                    break;
                }
            }
        }
        for i in 0..self.q {
            if rep[i] != i {
                let r = rep[i];
                let src: Vec<f64> = data[r * n..(r + 1) * n].to_vec();
                data[i * n..(i + 1) * n].copy_from_slice(&src);
            }
        }
        let mut p = QPoint { q: self.q, n, data };
        p.canonicalize();
        p
    }
}

pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Optimal pairing between two flat sheet arrays of `q` sheets each.
/// Returns the permutation (sheet `i` of `a` goes to sheet `perm[i]` of `b`)
/// and the squared cost.
pub fn match_sheets(a: &[f64], b: &[f64], q: usize, n: usize) -> (Vec<usize>, f64) {
    match q {
        1 => (vec![0], dist2(a, b)),
        2 => {
            let (a0, a1) = a.split_at(n);
            let (b0, b1) = b.split_at(n);
            let id = dist2(a0, b0) + dist2(a1, b1);
            let sw = dist2(a0, b1) + dist2(a1, b0);
            if sw < id {
                (vec![1, 0], sw)
            } else {
                (vec![0, 1], id)
            }
        }
        _ => {
            let mut c = vec![0.0; q * q];
            for i in 0..q {
                for j in 0..q {
                    c[i * q + j] = dist2(&a[i * n..(i + 1) * n], &b[j * n..(j + 1) * n]);
                }
            }
            assignment::solve(&c, q)
        }
    }
}

/// Optimal assignment between `u` and `v`: permutation and squared distance.
pub fn assign(u: &QPoint, v: &QPoint) -> Result<(Vec<usize>, f64)> {
    u.same_shape(v)?;
    Ok(match_sheets(&u.data, &v.data, u.q, u.n))
}

pub fn metric(u: &QPoint, v: &QPoint) -> Result<f64> {
    assign(u, v).map(|(_, c)| c.max(0.0).sqrt())
}

/// Metric by enumeration of all Q! pairings.
pub fn metric_exhaustive(u: &QPoint, v: &QPoint) -> Result<f64> {
    u.same_shape(v)?;
    let q = u.q;
    let mut c = vec![0.0; q * q];
    for i in 0..q {
        for j in 0..q {
            c[i * q + j] = dist2(u.sheet(i), v.sheet(j));
        }
    }
    Ok(assignment::brute_force(&c, q).1.max(0.0).sqrt())
}

pub fn norm(u: &QPoint) -> f64 {
    u.data.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn barycenter(u: &QPoint) -> Vec<f64> {
    let mut c = vec![0.0; u.n];
    for s in u.sheets() {
        for (ci, x) in c.iter_mut().zip(s) {
            *ci += x;
        }
    }
    c.iter_mut().for_each(|x| *x /= u.q as f64);
    c
}

pub fn translate(u: &QPoint, a: &[f64]) -> Result<QPoint> {
    if a.len() != u.n {
        return Err(QvlError::Shape(format!("shift of length {} on n={}", a.len(), u.n)));
    }
    let n = u.n;
    let data = u.data.iter().enumerate().map(|(k, x)| x - a[k % n]).collect();
    QPoint::from_flat(u.q, n, data)
}

pub fn concat(u: &QPoint, v: &QPoint) -> Result<QPoint> {
    if u.n != v.n {
        return Err(QvlError::Shape(format!("n={} vs n={}", u.n, v.n)));
    }
    let mut data = u.data.clone();
    data.extend_from_slice(&v.data);
    QPoint::from_flat(u.q + v.q, u.n, data)
}

pub fn diameter(v: &QPoint) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..v.q {
        for j in 0..i {
            d = d.max(dist2(v.sheet(i), v.sheet(j)));
        }
    }
    d.sqrt()
}

/// Smallest distance between distinct sheet values; `+inf` if all coincide.
pub fn splitting(v: &QPoint) -> f64 {
    let mut s = f64::INFINITY;
    for i in 0..v.q {
        for j in 0..i {
            if v.sheet(i) != v.sheet(j) {
                s = s.min(dist2(v.sheet(i), v.sheet(j)));
            }
        }
    }
    s.sqrt()
}

/// 1-Lipschitz retraction of Q-space onto the closed ball `B(v, r)`.
///
/// Requires `0 < r < s(v)/4 < inf`. Points within `r` are fixed, points at
/// distance at least `2r` go to `v`, and the annulus in between is folded
/// back by scaling every sheet's deviation from its matched center.
pub fn retraction(v: &QPoint, r: f64, u: &QPoint) -> Result<QPoint> {
    u.same_shape(v)?;
    let s = splitting(v);
    if !s.is_finite() || !(r > 0.0) || r >= s / 4.0 {
        return Err(QvlError::Domain(format!(
            "retraction needs 0 < r < s(v)/4 < inf, got r={r}, s(v)={s}"
        )));
    }
    let (perm, c) = assign(u, v)?;
    let g = c.sqrt();
    if g <= r {
        return Ok(u.clone());
    }
    if g >= 2.0 * r {
        return Ok(v.clone());
    }
    let t = (2.0 * r - g) / g;
    let n = u.n;
    let mut data = Vec::with_capacity(u.data.len());
    for (i, &j) in perm.iter().enumerate() {
        let (ui, vj) = (u.sheet(i), v.sheet(j));
        data.extend((0..n).map(|k| t * (ui[k] - vj[k]) + vj[k]));
    }
    QPoint::from_flat(u.q, n, data)
}

/// A positive number carried together with its natural logarithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogValue {
    pub ln: f64,
    /// `exp(ln)`; zero when it underflows.
    pub value: f64,
}

impl LogValue {
    pub fn from_ln(ln: f64) -> Self {
        LogValue { ln, value: ln.exp() }
    }
}

/// `(eps/3)^(3^Q)` in log form.
pub fn beta(eps: f64, q: usize) -> Result<LogValue> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(QvlError::Parameter(format!("beta needs 0 < eps <= 1, got {eps}")));
    }
    let e = 3f64.powi(q as i32);
    Ok(LogValue::from_ln(e * (eps / 3.0).ln()))
}

/// Closeness constant for splitting: `eps * beta(eps, Q)` with `eps = 1/9`.
pub fn alpha_q(q: usize) -> LogValue {
    let eps = 1.0 / 9.0;
    let b = beta(eps, q).expect("1/9 is in range");
    LogValue::from_ln(eps.ln() + b.ln)
}

/// Outcome of [`separate`], with the quantities entering its two checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Separation {
    pub point: QPoint,
    /// Linkage threshold that produced `point`.
    pub threshold: f64,
    pub ln_beta: f64,
    pub diameter: f64,
    pub splitting: f64,
    pub distance: f64,
}

/// Finds a point with `beta d(P) <= s(P~) < inf` and `G(P~, P) <= eps s(P~)`.
///
/// Candidates come from single-linkage clustering of the sheets at each
/// pairwise distance, smallest first; each cluster is replaced by its
/// barycenter with multiplicity. The first candidate passing both checks
/// is returned.
pub fn separate(p: &QPoint, eps: f64) -> Result<Separation> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(QvlError::Parameter(format!("separate needs 0 < eps < 1, got {eps}")));
    }
    if !splitting(p).is_finite() {
        return Err(QvlError::Domain("separate needs a point with two distinct values".into()));
    }
    let q = p.q;
    let b = beta(eps, q)?;
    let d = diameter(p);
    let mut thresholds = vec![0.0];
    let mut pairs = Vec::new();
    for i in 0..q {
        for j in 0..i {
            pairs.push(dist2(p.sheet(i), p.sheet(j)).sqrt());
        }
    }
    pairs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pairs.dedup();
    thresholds.extend(pairs);

    for &t in &thresholds {
        let labels = single_linkage(p, t);
        let k = labels.iter().copied().max().map_or(0, |m| m + 1);
        if k < 2 {
            break;
        }
        let mut sums = vec![0.0; k * p.n];
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for (a, x) in sums[l * p.n..(l + 1) * p.n].iter_mut().zip(p.sheet(i)) {
                *a += x;
            }
        }
        let mut data = Vec::with_capacity(q * p.n);
        for &l in &labels {
            data.extend(sums[l * p.n..(l + 1) * p.n].iter().map(|x| x / counts[l] as f64));
        }
        let cand = QPoint::from_flat(q, p.n, data)?;
        let s = splitting(&cand);
        if !s.is_finite() {
            continue;
        }
        let g = metric(&cand, p)?;
        let first = b.ln + d.ln() <= s.ln() || d == 0.0;
        let second = g <= eps * s;
        if first && second {
            return Ok(Separation {
                point: cand,
                threshold: t,
                ln_beta: b.ln,
                diameter: d,
                splitting: s,
                distance: g,
            });
        }
    }
    Err(QvlError::Construction(format!(
        "no single-linkage clustering of {p:?} satisfies the separation bounds for eps={eps}"
    )))
}

fn single_linkage(p: &QPoint, t: f64) -> Vec<usize> {
    let q = p.q;
    let mut parent: Vec<usize> = (0..q).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..q {
        for j in 0..i {
            if dist2(p.sheet(i), p.sheet(j)).sqrt() <= t {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    // relabel roots in order of first appearance
    let mut label = vec![usize::MAX; q];
    let mut out = vec![0; q];
    let mut next = 0;
    for i in 0..q {
        let r = find(&mut parent, i);
        if label[r] == usize::MAX {
            label[r] = next;
            next += 1;
        }
        out[i] = label[r];
    }
    out
}

/// Decomposition of a point into groups of identical sheets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QSplit {
    /// Sheet indices (canonical order) of each group.
    pub groups: Vec<Vec<usize>>,
    pub centers: Vec<Vec<f64>>,
    pub multiplicities: Vec<usize>,
}

impl QSplit {
    /// Rebuilds the point as the sum of `k_j` copies of each center.
    pub fn rebuild(&self) -> Result<QPoint> {
        let n = self.centers.first().map_or(0, |c| c.len());
        let mut data = Vec::new();
        for (c, &k) in self.centers.iter().zip(&self.multiplicities) {
            for _ in 0..k {
                data.extend_from_slice(c);
            }
        }
        QPoint::from_flat(self.multiplicities.iter().sum(), n, data)
    }
}

pub fn split_point(p: &QPoint) -> QSplit {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut centers: Vec<Vec<f64>> = Vec::new();
    for i in 0..p.q {
        match centers.iter().position(|c| c.as_slice() == p.sheet(i)) {
            Some(j) => groups[j].push(i),
            None => {
                centers.push(p.sheet(i).to_vec());
                groups.push(vec![i]);
            }
        }
    }
    let multiplicities = groups.iter().map(|g| g.len()).collect();
    QSplit { groups, centers, multiplicities }
}

/// Splits `u` into one point per distinct value of `centers`, assigning each
/// sheet to its nearest center. Requires `G(u, centers) < s(centers)/4`.
pub fn split_value(u: &QPoint, centers: &QPoint) -> Result<Vec<QPoint>> {
    u.same_shape(centers)?;
    let s = splitting(centers);
    let g = metric(u, centers)?;
    if s.is_finite() && g >= s / 4.0 {
        return Err(QvlError::Split(format!(
            "distance {g} to the centers is not below s/4 = {}",
            s / 4.0
        )));
    }
    let sp = split_point(centers);
    let mut parts: Vec<Vec<f64>> = vec![Vec::new(); sp.centers.len()];
    for x in u.sheets() {
        let mut best = 0;
        let mut bd = f64::INFINITY;
        for (j, c) in sp.centers.iter().enumerate() {
            let d = dist2(x, c);
            if d < bd {
                bd = d;
                best = j;
            }
        }
        parts[best].extend_from_slice(x);
    }
    let mut out = Vec::with_capacity(parts.len());
    for (j, data) in parts.into_iter().enumerate() {
        let k = data.len() / u.n.max(1);
        if k != sp.multiplicities[j] {
            return Err(QvlError::Split(format!(
                "cluster {j} received {k} sheets, expected {}",
                sp.multiplicities[j]
            )));
        }
        out.push(QPoint::from_flat(k, u.n, data)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: &[&[f64]]) -> QPoint {
        QPoint::new(v.iter().map(|s| s.to_vec()).collect()).unwrap()
    }

    /// Independent oracle: enumerate permutations by Heap's algorithm.
    fn brute(u: &QPoint, v: &QPoint) -> f64 {
        let q = u.q();
        let mut perm: Vec<usize> = (0..q).collect();
        let mut c = vec![0usize; q];
        let cost = |perm: &[usize]| -> f64 {
            (0..q)
                .map(|i| {
                    u.sheet(i)
                        .iter()
                        .zip(v.sheet(perm[i]))
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>()
                })
                .sum()
        };
        let mut best = cost(&perm);
        let mut i = 0;
        while i < q {
            if c[i] < i {
                if i % 2 == 0 {
                    perm.swap(0, i);
                } else {
                    perm.swap(c[i], i);
                }
                best = best.min(cost(&perm));
                c[i] += 1;
                i = 0;
            } else {
                c[i] = 0;
                i += 1;
            }
        }
        best.sqrt()
    }

    #[test]
    fn identity_case() {
        let u = QPoint::repeat(2, &[0.0]).unwrap();
        assert_eq!(metric(&u, &u).unwrap(), 0.0);
    }

    #[test]
    fn two_sheet_line_example() {
        let u = p(&[&[0.0], &[3.0]]);
        let v = p(&[&[1.0], &[2.0]]);
        // brute force: identity 1+1, swap 4+4
        assert_eq!(brute(&u, &v), 2f64.sqrt());
        assert!((metric(&u, &v).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn q5_n3_matches_permutation_oracle() {
        let mut s = 7u64;
        let mut r = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        for _ in 0..200 {
            let u = QPoint::from_flat(5, 3, (0..15).map(|_| r()).collect()).unwrap();
            let v = QPoint::from_flat(5, 3, (0..15).map(|_| r()).collect()).unwrap();
            let a = metric(&u, &v).unwrap();
            let b = brute(&u, &v);
            assert!((a - b).abs() <= 1e-12 * b.max(1e-300));
            assert!((metric_exhaustive(&u, &v).unwrap() - b).abs() <= 1e-12 * b);
        }
    }

    #[test]
    fn shape_errors() {
        let u = QPoint::zero(2, 1);
        let v = QPoint::zero(3, 1);
        assert!(matches!(metric(&u, &v), Err(QvlError::Shape(_))));
        assert!(matches!(translate(&u, &[1.0, 2.0]), Err(QvlError::Shape(_))));
        assert!(QPoint::new(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(QPoint::new(vec![vec![f64::NAN]]).is_err());
    }

    #[test]
    fn canonical_order_makes_equal_multisets_equal() {
        let a = p(&[&[1.0, 0.0], &[0.0, 5.0], &[-0.0, 1.0]]);
        let b = p(&[&[0.0, 1.0], &[1.0, 0.0], &[0.0, 5.0]]);
        assert_eq!(a, b);
        assert_eq!(a.as_flat(), b.as_flat());
    }

    #[test]
    fn norm_examples() {
        assert_eq!(norm(&QPoint::zero(3, 2)), 0.0);
        let u = p(&[&[1.0, 0.0], &[-1.0, 0.0]]);
        assert_eq!(norm(&u), 2f64.sqrt());
        assert_eq!(norm(&u), metric(&u, &QPoint::zero(2, 2)).unwrap());
    }

    #[test]
    fn barycenter_examples() {
        assert_eq!(barycenter(&QPoint::repeat(3, &[2.0, -1.0]).unwrap()), vec![2.0, -1.0]);
        assert_eq!(barycenter(&p(&[&[0.0], &[2.0]])), vec![1.0]);
    }

    #[test]
    fn translate_centering() {
        let u = p(&[&[1.0, 2.0], &[3.0, -4.0], &[0.5, 0.5]]);
        assert_eq!(translate(&u, &[0.0, 0.0]).unwrap(), u);
        let c = translate(&u, &barycenter(&u)).unwrap();
        assert!(barycenter(&c).iter().all(|x| x.abs() < 1e-15));
        let d = diameter(&u);
        assert!(norm(&c).powi(2) <= 3.0 * d * d);
    }

    #[test]
    fn concat_examples() {
        let z = concat(&QPoint::zero(2, 1), &QPoint::zero(3, 1)).unwrap();
        assert_eq!(z, QPoint::zero(5, 1));
        let a = p(&[&[1.0], &[4.0]]);
        let b = p(&[&[-2.0]]);
        assert_eq!(concat(&a, &b).unwrap(), concat(&b, &a).unwrap());
        let ab = concat(&a, &b).unwrap();
        assert!((norm(&ab).powi(2) - norm(&a).powi(2) - norm(&b).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn diameter_and_splitting() {
        let v = QPoint::repeat(2, &[3.0]).unwrap();
        assert_eq!(diameter(&v), 0.0);
        assert_eq!(splitting(&v), f64::INFINITY);
        let w = p(&[&[0.0], &[1.0], &[1.0]]);
        assert_eq!(diameter(&w), 1.0);
        assert_eq!(splitting(&w), 1.0);
    }

    #[test]
    fn retraction_cases() {
        let v = p(&[&[0.0], &[10.0]]);
        let r = 1.0;
        let near = p(&[&[0.5], &[10.2]]);
        assert_eq!(retraction(&v, r, &near).unwrap(), near);
        let far = p(&[&[3.0], &[10.0]]);
        assert_eq!(retraction(&v, r, &far).unwrap(), v);
        let mid = p(&[&[1.5], &[10.0]]);
        // t = (2 - 1.5)/1.5 = 1/3
        let out = retraction(&v, r, &mid).unwrap();
        assert!((out.sheet(0)[0] - 0.5).abs() < 1e-15);
        assert!(metric(&out, &v).unwrap() <= r + 1e-15);
        assert!(matches!(retraction(&v, 3.0, &mid), Err(QvlError::Domain(_))));
        let single = QPoint::repeat(2, &[0.0]).unwrap();
        assert!(retraction(&single, 0.1, &mid).is_err());
    }

    #[test]
    fn beta_values() {
        let b = beta(1.0 / 16.0, 2).unwrap();
        let expect = (1.0f64 / 48.0).powi(9);
        assert!((b.value - expect).abs() <= 1e-14 * expect);
        let b1 = beta(1.0, 3).unwrap();
        assert!((b1.ln - (-27.0 * 3f64.ln())).abs() < 1e-12);
        let a = alpha_q(2);
        let expect_ln = (1.0f64 / 9.0).ln() - 9.0 * 27f64.ln();
        assert!((a.ln - expect_ln).abs() < 1e-12);
        // Q = 5 underflows in linear form but not in log form
        let b5 = beta(1.0 / 16.0, 5).unwrap();
        assert_eq!(b5.value, 0.0);
        assert!((b5.ln - 243.0 * (1.0f64 / 48.0).ln()).abs() < 1e-9);
    }

    #[test]
    fn separate_already_separated() {
        let pt = p(&[&[0.0], &[1.0], &[2.0]]);
        let s = separate(&pt, 1.0 / 9.0).unwrap();
        assert_eq!(s.point, pt);
        assert_eq!(s.distance, 0.0);
    }

    #[test]
    fn separate_collapses_tiny_gap() {
        let b = beta(1.0 / 16.0, 3).unwrap().value;
        let delta = b * 1e-3;
        let pt = p(&[&[0.0], &[delta], &[1.0]]);
        let s = separate(&pt, 1.0 / 16.0).unwrap();
        assert!(s.ln_beta + s.diameter.ln() <= s.splitting.ln());
        assert!(s.distance <= s.splitting / 16.0);
        assert!(splitting(&s.point).is_finite());
        assert!(matches!(
            separate(&QPoint::repeat(3, &[1.0]).unwrap(), 0.1),
            Err(QvlError::Domain(_))
        ));
    }

    #[test]
    fn split_point_examples() {
        let a = p(&[&[1.0], &[1.0], &[4.0]]);
        let sp = split_point(&a);
        assert_eq!(sp.multiplicities, vec![2, 1]);
        assert_eq!(sp.rebuild().unwrap(), a);
        let one = QPoint::repeat(3, &[2.0]).unwrap();
        assert_eq!(split_point(&one).centers.len(), 1);
    }

    #[test]
    fn split_value_examples() {
        let centers = p(&[&[0.0], &[0.0], &[10.0]]);
        let u = p(&[&[0.3], &[-0.4], &[9.5]]);
        let parts = split_value(&u, &centers).unwrap();
        assert_eq!(parts[0].q(), 2);
        assert_eq!(parts[1].q(), 1);
        let back = concat(&parts[0], &parts[1]).unwrap();
        assert_eq!(metric(&back, &u).unwrap(), 0.0);
        let exact = split_value(&centers, &centers).unwrap();
        assert_eq!(exact[0], QPoint::repeat(2, &[0.0]).unwrap());
        let far = p(&[&[3.0], &[-0.4], &[9.5]]);
        assert!(matches!(split_value(&far, &centers), Err(QvlError::Split(_))));
    }

    #[test]
    fn snapping_merges_near_duplicates() {
        let a = p(&[&[1.0], &[1.0 + 1e-14], &[2.0]]);
        assert_eq!(splitting(&a.snapped(1e-12)), 1.0);
    }

    #[test]
    fn json_roundtrip_shape() {
        let a = p(&[&[1.0, 2.0], &[0.0, 1.0]]);
        let s = serde_json::to_string(&a).unwrap();
        assert_eq!(s, "[[0.0,1.0],[1.0,2.0]]");
        let b: QPoint = serde_json::from_str(&s).unwrap();
        assert_eq!(a, b);
    }
}

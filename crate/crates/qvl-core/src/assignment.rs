//! Square min-cost assignment (Hungarian method with potentials, O(n^3)).

/// Returns `(perm, cost)` where row `i` is assigned to column `perm[i]`.
///
/// `costs` is row-major `n x n`. Ties are broken by the scan order, so equal
/// inputs always produce the same permutation.
pub fn solve(costs: &[f64], n: usize) -> (Vec<usize>, f64) {
    assert_eq!(costs.len(), n * n, "cost matrix must be n x n");
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    if n == 1 {
        return (vec![0], costs[0]);
    }
    // 1-based arrays, column 0 is the virtual source.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|x| *x = f64::INFINITY);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = costs[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[p[j] - 1] = j - 1;
    }
    // Sum the original entries rather than trusting the potentials.
    let cost = perm.iter().enumerate().map(|(i, &j)| costs[i * n + j]).sum();
    (perm, cost)
}

/// Exhaustive minimum over all permutations. Only sensible for small `n`.
pub fn brute_force(costs: &[f64], n: usize) -> (Vec<usize>, f64) {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = perm.clone();
    let mut best_cost = f64::INFINITY;
    permute(&mut perm, 0, costs, n, &mut best, &mut best_cost);
    (best, if n == 0 { 0.0 } else { best_cost })
}

fn permute(
    perm: &mut [usize],
    k: usize,
    costs: &[f64],
    n: usize,
    best: &mut Vec<usize>,
    best_cost: &mut f64,
) {
    if k == n {
        let c: f64 = perm.iter().enumerate().map(|(i, &j)| costs[i * n + j]).sum();
        if c < *best_cost {
            *best_cost = c;
            best.copy_from_slice(perm);
        }
        return;
    }
    for i in k..n {
        perm.swap(k, i);
        permute(perm, k + 1, costs, n, best, best_cost);
        perm.swap(k, i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_known_case() {
        // 4 1 3
        // 2 0 5
        // 3 2 2
        let c = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let (perm, cost) = solve(&c, 3);
        assert_eq!(cost, 5.0);
        assert_eq!(perm, vec![1, 0, 2]);
    }

    #[test]
    fn matches_brute_force_on_pseudo_random_matrices() {
        let mut s = 0x2545f4914f6cdd1du64;
        for n in 1..=6 {
            for _ in 0..50 {
                let c: Vec<f64> = (0..n * n)
                    .map(|_| {
                        s ^= s << 13;
                        s ^= s >> 7;
                        s ^= s << 17;
                        (s % 1000) as f64 / 7.0
                    })
                    .collect();
                let (p, a) = solve(&c, n);
                let (_, b) = brute_force(&c, n);
                assert!((a - b).abs() <= 1e-9 * b.max(1.0), "n={n} {a} vs {b}");
                let mut seen = vec![false; n];
                p.iter().for_each(|&j| seen[j] = true);
                assert!(seen.iter().all(|&x| x));
            }
        }
    }

    #[test]
    fn empty_matrix() {
        assert_eq!(solve(&[], 0), (vec![], 0.0));
    }
}

//! Seeded generators for value-space property checks and smooth test data.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use qvl_core::QPoint;

/// A random point with `q` sheets in `R^n`. A third of the draws cluster
/// the sheets around a few centers at a random small scale, so that nearly
/// coincident sheets are exercised.
pub fn point(rng: &mut ChaCha8Rng, q: usize, n: usize) -> QPoint {
    let clustered = rng.gen_bool(1.0 / 3.0);
    let data: Vec<f64> = if clustered {
        let k = rng.gen_range(1..=q);
        let centers: Vec<f64> = (0..k * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let scale = 10f64.powf(-rng.gen_range(1.0..4.0));
        (0..q)
            .flat_map(|_| {
                let c = rng.gen_range(0..k);
                (0..n).map(|e| centers[c * n + e] + scale * rng.gen_range(-1.0..1.0)).collect::<Vec<_>>()
            })
            .collect()
    } else {
        (0..q * n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    };
    QPoint::from_flat(q, n, data).expect("finite data")
}

/// `v` with every sheet moved by at most `radius / sqrt(q)`, sheets shuffled.
pub fn near(rng: &mut ChaCha8Rng, v: &QPoint, radius: f64) -> QPoint {
    let (q, n) = (v.q(), v.n());
    let step = radius / (q as f64).sqrt();
    let mut sheets: Vec<Vec<f64>> = v
        .sheets()
        .map(|s| {
            let dir: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let len = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
            let t = step * rng.gen_range(0.0..1.0);
            s.iter().zip(&dir).map(|(a, d)| a + t * d / len).collect()
        })
        .collect();
    for i in (1..q).rev() {
        sheets.swap(i, rng.gen_range(0..=i));
    }
    QPoint::new(sheets).expect("finite data")
}

/// Coefficients of a random trigonometric polynomial of degree 3.
pub fn trig_coefficients(rng: &mut ChaCha8Rng) -> [f64; 7] {
    std::array::from_fn(|_| rng.gen_range(-1.0..1.0))
}

/// Value of the polynomial with decaying higher modes.
pub fn trig(c: &[f64; 7], t: f64) -> f64 {
    c[0] + c[1] * t.cos()
        + c[2] * t.sin()
        + 0.5 * (c[3] * (2.0 * t).cos() + c[4] * (2.0 * t).sin())
        + 0.3 * (c[5] * (3.0 * t).cos() + c[6] * (3.0 * t).sin())
}

/// Sheets `10^{-e_i} d_i` with exponents spread over `[0, 150]`, so that
/// ratios of splitting to diameter far below machine precision occur.
/// Squared distances stay normal floats only down to about `1e-154`.
pub fn multiscale(rng: &mut ChaCha8Rng, q: usize, n: usize) -> QPoint {
    let sheets = (0..q)
        .map(|_| {
            let s = 10f64.powf(-rng.gen_range(0.0..150.0));
            (0..n).map(|_| s * rng.gen_range(-1.0..1.0)).collect()
        })
        .collect();
    QPoint::new(sheets).expect("finite data")
}

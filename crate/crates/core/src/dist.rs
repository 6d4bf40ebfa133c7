//! Order statistics of independent draws on a shared grid.

/// Cumulative sums of a probability vector.
pub fn cdf(pmf: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    pmf.iter()
        .map(|p| {
            acc += p;
            acc.min(1.0)
        })
        .collect()
}

/// CDF of the maximum of independent draws: the product of the marginal CDFs.
/// With no draws the maximum is degenerate below the grid (CDF identically 1).
pub fn max_cdf(len: usize, pmfs: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![1.0; len];
    for p in pmfs {
        for (o, c) in out.iter_mut().zip(cdf(p)) {
            *o *= c;
        }
    }
    out
}

/// Probability vector from a CDF on the grid.
pub fn pmf_from_cdf(c: &[f64]) -> Vec<f64> {
    let mut prev = 0.0;
    c.iter()
        .map(|&x| {
            let p = (x - prev).max(0.0);
            prev = x;
            p
        })
        .collect()
}

pub fn expected_max(points: &[f64], pmfs: &[Vec<f64>]) -> f64 {
    let c = max_cdf(points.len(), pmfs);
    pmf_from_cdf(&c).iter().zip(points).map(|(p, z)| p * z).sum()
}

/// Expected second-highest of `pmfs.len() >= 2` independent draws.
pub fn expected_second(points: &[f64], pmfs: &[Vec<f64>]) -> f64 {
    let cdfs: Vec<Vec<f64>> = pmfs.iter().map(|p| cdf(p)).collect();
    let len = points.len();
    let mut second = vec![0.0; len];
    for (j, s) in second.iter_mut().enumerate() {
        // P(at most one draw exceeds z_j)
        let all: f64 = cdfs.iter().map(|c| c[j]).product();
        let one: f64 = (0..cdfs.len())
            .map(|k| {
                (1.0 - cdfs[k][j])
                    * cdfs
                        .iter()
                        .enumerate()
                        .filter(|(l, _)| *l != k)
                        .map(|(_, c)| c[j])
                        .product::<f64>()
            })
            .sum();
        *s = (all + one).min(1.0);
    }
    second[len - 1] = 1.0;
    pmf_from_cdf(&second)
        .iter()
        .zip(points)
        .map(|(p, z)| p * z)
        .sum()
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::codebook::PointCode;
use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 100;

/// One cluster id per point.
#[derive(Debug, Clone, PartialEq)]
pub struct PartLabeling {
    pub labels: Vec<usize>,
    pub k: usize,
    /// Within-cluster sum of squares after each assignment step.
    pub objective_history: Vec<f64>,
}

impl PartLabeling {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("point_index,label\n");
        for (i, l) in self.labels.iter().enumerate() {
            out.push_str(&format!("{i},{l}\n"));
        }
        out
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's k-means with k-means++ seeding. Stops when assignments no longer
/// change or after 100 iterations. Ties go to the lowest centroid index.
pub fn cluster_parts(codes: &[PointCode], k: usize, seed: u64) -> Result<PartLabeling> {
    let n = codes.len();
    if k == 0 || k > n {
        return Err(Error::InvalidConfig(format!(
            "cluster count {k} must be in 1..={n}"
        )));
    }
    let dims = codes[0].coeffs.len();
    if let Some(bad) = codes.iter().find(|c| c.coeffs.len() != dims) {
        return Err(Error::DimensionMismatch {
            expected: dims,
            got: bad.coeffs.len(),
        });
    }
    let data: Vec<&[f64]> = codes.iter().map(|c| c.coeffs.as_slice()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_plus_plus(&data, k, &mut rng);

    let mut labels = vec![usize::MAX; n];
    let mut history = Vec::new();
    for _ in 0..MAX_ITERATIONS {
        let mut changed = false;
        let mut objective = 0.0;
        for (i, x) in data.iter().enumerate() {
            let (best, d) = centroids
                .iter()
                .enumerate()
                .map(|(c, m)| (c, dist2(x, m)))
                .fold((0, f64::INFINITY), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
            objective += d;
        }
        history.push(objective);
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dims]; k];
        let mut counts = vec![0usize; k];
        for (x, &l) in data.iter().zip(&labels) {
            counts[l] += 1;
            sums[l].iter_mut().zip(x.iter()).for_each(|(s, v)| *s += v);
        }
        for c in 0..k {
            // an emptied cluster keeps its previous centroid
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    Ok(PartLabeling {
        labels,
        k,
        objective_history: history,
    })
}

fn kmeans_plus_plus(data: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = data.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = data.iter().map(|x| dist2(x, data[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut pick = n - 1;
            for (i, w) in d2.iter().enumerate() {
                if target < *w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            // every remaining point duplicates a center
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, x) in data.iter().enumerate() {
            d2[i] = d2[i].min(dist2(x, data[next]));
        }
    }
    chosen.into_iter().map(|i| data[i].to_vec()).collect()
}

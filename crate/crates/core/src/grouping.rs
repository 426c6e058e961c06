//! Correlation-based grouping of feature columns by average-linkage
//! agglomerative clustering on the distance `1 - |corr|`.

use crate::data::{Dataset, FeatureSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Grouping {
    /// Groups ordered by their smallest column index.
    pub groups: Vec<FeatureSet>,
    /// Constant columns; each sits alone in its own group.
    pub constant_columns: Vec<usize>,
}

fn pearson_distances(d: &Dataset, cols: &[usize]) -> Vec<Vec<f64>> {
    let n = d.n() as f64;
    let centered: Vec<Vec<f64>> = cols
        .iter()
        .map(|&j| {
            let c = d.features().column(j);
            let m = c.iter().sum::<f64>() / n;
            c.into_iter().map(|v| v - m).collect()
        })
        .collect();
    let norms: Vec<f64> = centered.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let k = cols.len();
    let mut dist = vec![vec![0.0; k]; k];
    for a in 0..k {
        for b in a + 1..k {
            let dot: f64 = centered[a].iter().zip(&centered[b]).map(|(x, y)| x * y).sum();
            let r = (dot / (norms[a] * norms[b])).clamp(-1.0, 1.0);
            dist[a][b] = 1.0 - r.abs();
            dist[b][a] = dist[a][b];
        }
    }
    dist
}

/// Clusters the columns of `d` into `k` groups. Constant columns cannot be
/// correlated with anything and are returned as flagged singletons; the
/// remaining columns fill the other `k - #constant` groups (at least one).
///
/// Merges always join the closest pair of clusters; equal distances go to
/// the pair whose smallest member indices come first.
pub fn correlation_groups(d: &Dataset, k: usize) -> Result<Grouping> {
    let p = d.p();
    if k == 0 || k > p {
        return Err(Error::InvalidParams(format!("group count {k} not in [1, {p}]")));
    }
    let (constant, varying): (Vec<usize>, Vec<usize>) = (0..p).partition(|&j| {
        let first = d.features().get(0, j);
        (0..d.n()).all(|i| d.features().get(i, j) == first)
    });

    let mut clusters: Vec<Vec<usize>> = varying.iter().map(|&j| vec![j]).collect();
    if !clusters.is_empty() {
        let target = k.saturating_sub(constant.len()).max(1);
        let base = pearson_distances(d, &varying);
        // Positions into `varying` per cluster, kept sorted.
        let mut members: Vec<Vec<usize>> = (0..varying.len()).map(|a| vec![a]).collect();
        while members.len() > target {
            let mut best: Option<(f64, usize, usize)> = None;
            for a in 0..members.len() {
                for b in a + 1..members.len() {
                    let mut total = 0.0;
                    for &u in &members[a] {
                        for &v in &members[b] {
                            total += base[u][v];
                        }
                    }
                    let avg = total / (members[a].len() * members[b].len()) as f64;
                    if best.map_or(true, |(d, _, _)| avg < d) {
                        best = Some((avg, a, b));
                    }
                }
            }
            let (_, a, b) = best.expect("at least two clusters");
            let moved = members.remove(b);
            members[a].extend(moved);
            members[a].sort_unstable();
        }
        clusters = members
            .into_iter()
            .map(|m| m.into_iter().map(|a| varying[a]).collect())
            .collect();
    }
    clusters.extend(constant.iter().map(|&j| vec![j]));
    clusters.sort_by_key(|c| c[0]);
    let groups = clusters
        .into_iter()
        .map(|c| FeatureSet::new(c, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(Grouping { groups, constant_columns: constant })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Features;
    use crate::seed;
    use rand::Rng;

    fn dataset(cols: Vec<Vec<f64>>) -> Dataset {
        let n = cols[0].len();
        let rows: Vec<Vec<f64>> = (0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
        Dataset::unnamed(Features::from_rows(&rows).unwrap(), vec![0.0; n], vec![0.0; n]).unwrap()
    }

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = seed::rng(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn k_equal_p_gives_singletons() {
        let d = dataset((0..4).map(|s| noise(50, s)).collect());
        let g = correlation_groups(&d, 4).unwrap();
        assert_eq!(g.groups.len(), 4);
        assert!(g.groups.iter().enumerate().all(|(j, s)| s.indices() == [j]));
    }

    #[test]
    fn duplicated_columns_merge_first() {
        let a = noise(80, 1);
        let d = dataset(vec![noise(80, 2), a.clone(), noise(80, 3), a]);
        let g = correlation_groups(&d, 3).unwrap();
        assert_eq!(g.groups.len(), 3);
        assert!(g.groups.iter().any(|s| s.indices() == [1, 3]));
    }

    #[test]
    fn anti_correlated_columns_are_close() {
        let a = noise(80, 4);
        let neg: Vec<f64> = a.iter().map(|v| -2.0 * v + 1.0).collect();
        let d = dataset(vec![a, noise(80, 5), neg]);
        let g = correlation_groups(&d, 2).unwrap();
        assert!(g.groups.iter().any(|s| s.indices() == [0, 2]));
    }

    #[test]
    fn constant_columns_stay_alone() {
        let d = dataset(vec![noise(30, 6), vec![2.0; 30], noise(30, 7), noise(30, 8)]);
        let g = correlation_groups(&d, 2).unwrap();
        assert_eq!(g.constant_columns, vec![1]);
        assert!(g.groups.iter().any(|s| s.indices() == [1]));
        assert_eq!(g.groups.len(), 2);
    }

    #[test]
    fn rejects_bad_k() {
        let d = dataset(vec![noise(10, 1)]);
        assert!(correlation_groups(&d, 0).is_err());
        assert!(correlation_groups(&d, 2).is_err());
    }
}

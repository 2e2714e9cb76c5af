use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};

/// Default percentile of the cluster-size distribution used as size cap.
pub const DEFAULT_ALPHA_PERCENTILE: f64 = 5.0;

/// Data points sharing one selected index set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Cluster {
    pub key: Vec<usize>,
    pub members: Vec<usize>,
}

/// Partition of the data into clusters of equal index sets.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClusterPlan {
    pub clusters: Vec<Cluster>,
    pub alpha_percentile: Option<f64>,
    /// Largest allowed cluster size (`usize::MAX` when the cap is off).
    pub size_cap: usize,
}

impl ClusterPlan {
    /// One cluster per data point, i.e. no sharing of state factorizations.
    pub fn unclustered(keys: &[Vec<usize>]) -> Self {
        ClusterPlan {
            clusters: keys
                .iter()
                .enumerate()
                .map(|(n, k)| Cluster {
                    key: k.clone(),
                    members: vec![n],
                })
                .collect(),
            alpha_percentile: None,
            size_cap: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn n_points(&self) -> usize {
        self.clusters.iter().map(|c| c.members.len()).sum()
    }
}

/// Groups points by identical key (clusters ordered by key, members by
/// index). With `alpha_percentile = Some(α)`, the size at the `(100 − α)`th
/// percentile of occurring cluster sizes caps the cluster size; larger
/// clusters are split into near-equal contiguous runs of members.
pub fn cluster_partition(keys: &[Vec<usize>], alpha_percentile: Option<f64>) -> Result<ClusterPlan> {
    if let Some(a) = alpha_percentile {
        if !(a > 0.0 && a < 100.0) {
            return Err(Error::InvalidConfig(format!("alpha percentile must be in (0, 100), got {a}")));
        }
    }
    let mut groups: BTreeMap<&[usize], Vec<usize>> = BTreeMap::new();
    for (n, k) in keys.iter().enumerate() {
        groups.entry(k.as_slice()).or_default().push(n);
    }
    let size_cap = match alpha_percentile {
        None => usize::MAX,
        Some(a) => {
            let mut sizes: Vec<usize> = groups.values().map(Vec::len).collect();
            sizes.sort_unstable();
            if sizes.is_empty() {
                usize::MAX
            } else {
                // nearest-rank percentile
                let rank = ((100.0 - a) / 100.0 * sizes.len() as f64).ceil() as usize;
                sizes[rank.clamp(1, sizes.len()) - 1]
            }
        }
    };
    let mut clusters = Vec::with_capacity(groups.len());
    for (key, members) in groups {
        let parts = members.len().div_ceil(size_cap);
        if parts <= 1 {
            clusters.push(Cluster {
                key: key.to_vec(),
                members,
            });
            continue;
        }
        let (base, extra) = (members.len() / parts, members.len() % parts);
        let mut start = 0;
        for p in 0..parts {
            let len = base + usize::from(p < extra);
            clusters.push(Cluster {
                key: key.to_vec(),
                members: members[start..start + len].to_vec(),
            });
            start += len;
        }
    }
    Ok(ClusterPlan {
        clusters,
        alpha_percentile,
        size_cap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_keys_one_cluster() {
        let keys = vec![vec![0, 1]; 7];
        let plan = cluster_partition(&keys, None).unwrap();
        assert_eq!(plan.len(), 1);
        assert_eq!(plan.clusters[0].members, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn distinct_keys_singletons() {
        let keys: Vec<Vec<usize>> = (0..5).map(|i| vec![i]).collect();
        let plan = cluster_partition(&keys, Some(5.0)).unwrap();
        assert_eq!(plan.len(), 5);
        assert!(plan.clusters.iter().all(|c| c.members.len() == 1));
    }

    #[test]
    fn oversized_cluster_split_evenly() {
        // 20 points share a key, 60 more come in pairs
        let mut keys = vec![vec![0, 1]; 20];
        for i in 0..60 {
            keys.push(vec![2 + i / 2]);
        }
        let plan = cluster_partition(&keys, Some(5.0)).unwrap();
        assert_eq!(plan.size_cap, 2);
        let big: Vec<_> = plan.clusters.iter().filter(|c| c.key == vec![0, 1]).collect();
        assert_eq!(big.len(), 10);
        assert!(big.iter().all(|c| c.members.len() == 2));
        assert_eq!(big[0].members, vec![0, 1]);
    }

    #[test]
    fn bad_alpha_rejected() {
        assert!(cluster_partition(&[vec![0]], Some(0.0)).is_err());
        assert!(cluster_partition(&[vec![0]], Some(100.0)).is_err());
    }

    proptest! {
        #[test]
        fn every_point_in_exactly_one_cluster(raw in prop::collection::vec(0usize..6, 1..80), alpha in 1.0f64..50.0) {
            let keys: Vec<Vec<usize>> = raw.iter().map(|&k| vec![k, k + 1]).collect();
            let plan = cluster_partition(&keys, Some(alpha)).unwrap();
            let mut seen = vec![0; keys.len()];
            for c in &plan.clusters {
                prop_assert!(c.members.len() <= plan.size_cap);
                for &m in &c.members {
                    seen[m] += 1;
                    prop_assert_eq!(&keys[m], &c.key);
                }
            }
            prop_assert!(seen.iter().all(|&s| s == 1));
        }
    }
}

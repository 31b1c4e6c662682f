//! Seed extraction from converged particle configurations and consensus
//! fusion of multi-replicate results, both by single-linkage grouping.

use serde::{Deserialize, Serialize};

use crate::dynamics::TrajectoryState;
use crate::potential::InteractionSpec;
use crate::scalar::{real, Real};

/// One detected object/cluster center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedPoint<T> {
    /// Position in data units.
    pub position: Vec<T>,
    /// Particles (or replicate seeds) merged into this point.
    pub support: usize,
    pub object_id: u32,
    /// Source replicate; `None` marks a consensus seed.
    pub replicate_id: Option<u32>,
}

/// Consensus fusion parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsensusConfig<T> {
    pub replicates: usize,
    /// Fraction of replicates a pooled cluster needs to survive.
    pub min_support_fraction: T,
    /// Single-linkage distance in data units.
    pub link_radius: T,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, i: usize) -> usize {
        let mut root = i;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = i;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Anchor to the smaller index so group ids are stable.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

fn euclidean<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .fold(T::zero(), |acc, v| acc + v)
        .sqrt()
}

/// Single-linkage partition of points at the given link distance; returns
/// groups of point indices, ordered by smallest member.
pub fn single_linkage<T: Real>(points: &[Vec<T>], link: T) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if euclidean(&points[i], &points[j]) <= link {
                uf.union(i, j);
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let root = uf.find(i);
        groups.entry(root).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Link distance for grouping converged particles: `0.7·r0 + 0.3·ra`
/// (any distance between r0 and ra works; this is the fixed choice).
pub fn particle_link_distance<T: Real>(spec: &InteractionSpec<T>) -> T {
    real::<T>(0.7) * spec.r0 + real::<T>(0.3) * spec.ra
}

/// Group the final particle positions and return one seed per group at the
/// group mean, mapped back to data units.
pub fn extract_seeds<T: Real>(
    state: &TrajectoryState<T>,
    spec: &InteractionSpec<T>,
    solver_scale: T,
    object_id: u32,
    replicate_id: u32,
) -> Vec<SeedPoint<T>> {
    let sys = &state.system;
    let dim = sys.dim;
    let points: Vec<Vec<T>> = (0..sys.len()).map(|i| sys.position(i).to_vec()).collect();
    let link = particle_link_distance(spec) * solver_scale;
    single_linkage(&points, link)
        .into_iter()
        .map(|group| {
            let mut mean = vec![T::zero(); dim];
            for &i in &group {
                for (m, &x) in mean.iter_mut().zip(&points[i]) {
                    *m += x;
                }
            }
            let count = real::<T>(group.len() as f64);
            for m in &mut mean {
                *m = *m / count / solver_scale;
            }
            SeedPoint {
                position: mean,
                support: group.len(),
                object_id,
                replicate_id: Some(replicate_id),
            }
        })
        .collect()
}

/// Pool replicate seeds, single-link them at the consensus radius, and keep
/// clusters supported by enough pooled seeds.
pub fn consensus<T: Real>(
    seeds_per_replicate: &[Vec<SeedPoint<T>>],
    cfg: &ConsensusConfig<T>,
) -> Vec<SeedPoint<T>> {
    assert!(!seeds_per_replicate.is_empty(), "need at least one replicate");
    if seeds_per_replicate.len() == 1 {
        return seeds_per_replicate[0].clone();
    }
    let pooled: Vec<&SeedPoint<T>> = seeds_per_replicate.iter().flatten().collect();
    if pooled.is_empty() {
        return Vec::new();
    }
    let positions: Vec<Vec<T>> = pooled.iter().map(|s| s.position.clone()).collect();
    let min_support = (cfg.min_support_fraction.to_f64().unwrap()
        * cfg.replicates as f64)
        .ceil() as usize;
    let dim = positions[0].len();
    let mut out = Vec::new();
    for group in single_linkage(&positions, cfg.link_radius) {
        if group.len() < min_support.max(1) {
            continue;
        }
        let mut mean = vec![T::zero(); dim];
        for &i in &group {
            for (m, &x) in mean.iter_mut().zip(&positions[i]) {
                *m += x;
            }
        }
        let count = real::<T>(group.len() as f64);
        for m in &mut mean {
            *m = *m / count;
        }
        out.push(SeedPoint {
            position: mean,
            support: group.len(),
            object_id: pooled[group[0]].object_id,
            replicate_id: None,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::particles::ParticleSystem;

    fn state_from(points: &[[f64; 2]]) -> TrajectoryState<f64> {
        let n = points.len();
        TrajectoryState {
            t: 100.0,
            system: ParticleSystem {
                positions: points.iter().flatten().cloned().collect(),
                momenta: vec![0.0; 2 * n],
                charges: vec![1.0; n],
                masses: vec![1.0; n],
                dim: 2,
                metric_p: 2.0,
            },
            mean_speed_window: vec![(100.0, 0.0)],
            converged: true,
            step_count: 1,
            rejected_steps: 0,
        }
    }

    fn table1_spec() -> InteractionSpec<f64> {
        InteractionSpec::new(-1.0, 2.0, 13.0).unwrap()
    }

    #[test]
    fn table1_link_distance() {
        assert!((particle_link_distance(&table1_spec()) - 5.3).abs() < 1e-12);
    }

    #[test]
    fn chain_collapses_to_single_seed() {
        // Consecutive gaps below the link distance chain into one group.
        let pts: Vec<[f64; 2]> = (0..6).map(|i| [0.0, 4.0 * i as f64]).collect();
        let state = state_from(&pts);
        let seeds = extract_seeds(&state, &table1_spec(), 1.0, 0, 0);
        assert_eq!(seeds.len(), 1);
        assert_eq!(seeds[0].support, 6);
        assert!((seeds[0].position[1] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn two_distant_clumps_two_seeds() {
        let state = state_from(&[
            [0.0, 0.0],
            [0.0, 1.0],
            [40.0, 0.0],
            [40.0, 1.5],
        ]);
        let seeds = extract_seeds(&state, &table1_spec(), 1.0, 3, 1);
        assert_eq!(seeds.len(), 2);
        assert!(seeds.iter().all(|s| s.support == 2));
        assert!(seeds.iter().all(|s| s.object_id == 3));
    }

    #[test]
    fn solver_scale_maps_back_to_data_units() {
        let state = state_from(&[[12.0, 6.0]]);
        let seeds = extract_seeds(&state, &table1_spec(), 6.0, 0, 0);
        assert_eq!(seeds[0].position, vec![2.0, 1.0]);
    }

    #[test]
    fn consensus_single_replicate_is_identity() {
        let seeds = vec![vec![SeedPoint {
            position: vec![1.0, 2.0],
            support: 4,
            object_id: 0,
            replicate_id: Some(0),
        }]];
        let cfg = ConsensusConfig {
            replicates: 1,
            min_support_fraction: 0.25,
            link_radius: 2.0,
        };
        let out = consensus(&seeds, &cfg);
        assert_eq!(out, seeds[0]);
    }

    #[test]
    fn consensus_rejects_unsupported_strays() {
        // 20 replicates agreeing on 7 spots (±0.5) plus 3 stray singleton
        // seeds far away; min support 0.25·20 = 5 keeps exactly the 7.
        let spots: Vec<[f64; 2]> = (0..7).map(|i| [10.0 * i as f64, 5.0]).collect();
        let mut replicates = Vec::new();
        for r in 0..20 {
            let jitter = (r as f64 - 10.0) / 20.0; // within ±0.5
            let mut seeds: Vec<SeedPoint<f64>> = spots
                .iter()
                .map(|s| SeedPoint {
                    position: vec![s[0] + jitter, s[1] - jitter],
                    support: 5,
                    object_id: 0,
                    replicate_id: Some(r),
                })
                .collect();
            if r < 3 {
                seeds.push(SeedPoint {
                    position: vec![500.0 + 50.0 * r as f64, 400.0],
                    support: 1,
                    object_id: 0,
                    replicate_id: Some(r),
                });
            }
            replicates.push(seeds);
        }
        let cfg = ConsensusConfig {
            replicates: 20,
            min_support_fraction: 0.25,
            link_radius: 2.0,
        };
        let out = consensus(&replicates, &cfg);
        assert_eq!(out.len(), 7);
        for seed in &out {
            assert_eq!(seed.support, 20);
            assert!(seed.replicate_id.is_none());
        }
    }

    #[test]
    fn consensus_disjoint_full_agreement_required() {
        let mk = |x: f64, r: u32| {
            vec![SeedPoint {
                position: vec![x, 0.0],
                support: 1,
                object_id: 0,
                replicate_id: Some(r),
            }]
        };
        let cfg = ConsensusConfig {
            replicates: 2,
            min_support_fraction: 1.0,
            link_radius: 1.0,
        };
        let out = consensus(&[mk(0.0, 0), mk(100.0, 1)], &cfg);
        assert!(out.is_empty());
    }

    #[test]
    fn linkage_partitions_all_points() {
        let pts: Vec<Vec<f64>> = (0..9)
            .map(|i| vec![(i % 3) as f64 * 30.0, (i / 3) as f64])
            .collect();
        let groups = single_linkage(&pts, 3.0);
        let mut seen: Vec<usize> = groups.iter().flatten().cloned().collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..9).collect::<Vec<_>>());
    }
}

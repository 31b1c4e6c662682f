//! Particle-system setup: Wigner-Seitz counting, lattice-cell placement
//! (random / uniform-random / curvature candidates), and mass, charge and
//! velocity assignment.

use std::collections::HashMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::decompose;
use crate::geometry::CandidateSet;
use crate::potential::ConfiningPotential;
use crate::scalar::{real, Real};

/// Initial-position strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitStrategy {
    /// N independent draws from the admissible cells.
    Random,
    /// One draw per occupied lattice cell.
    UniformRandom,
    /// One draw per lattice cell from the curvature candidate set, falling
    /// back to the admissible cells.
    CvxHullCoc,
}

/// Initialization parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitConfig<T> {
    /// Wigner-Seitz radius (cells).
    pub rs: T,
    pub strategy: InitStrategy,
    /// Charge exponent: q = N^(-beta).
    pub beta: T,
    /// Initial speed.
    pub s0: T,
    pub mass: T,
    /// Admissible confining-potential range for start positions.
    pub v_band: (T, T),
    pub rng_seed: u64,
}

/// Positions and momenta live in solver space; charges and masses are per
/// particle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleSystem<T> {
    pub positions: Vec<T>,
    pub momenta: Vec<T>,
    pub charges: Vec<T>,
    pub masses: Vec<T>,
    pub dim: usize,
    /// Minkowski order of the interaction metric.
    pub metric_p: T,
}

impl<T: Real> ParticleSystem<T> {
    pub fn len(&self) -> usize {
        self.charges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.charges.is_empty()
    }

    pub fn position(&self, i: usize) -> &[T] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn momentum(&self, i: usize) -> &[T] {
        &self.momenta[i * self.dim..(i + 1) * self.dim]
    }

    pub fn speed(&self, i: usize) -> T {
        let m = self.masses[i];
        let p = self.momentum(i);
        p.iter().map(|&v| v * v).fold(T::zero(), |a, b| a + b).sqrt() / m
    }

    pub fn mean_speed(&self) -> T {
        let n = real::<T>(self.len() as f64);
        (0..self.len()).map(|i| self.speed(i)).sum::<T>() / n
    }
}

/// Volume of the n-ball of radius `r`.
pub fn ball_volume<T: Real>(r: T, n: usize) -> T {
    let nf = n as f64;
    let coeff = std::f64::consts::PI.powf(nf / 2.0) / gamma_half_integer(n) ;
    real::<T>(coeff) * r.powi(n as i32)
}

/// Γ(n/2 + 1) for integer n.
fn gamma_half_integer(n: usize) -> f64 {
    // Γ(k+1) = k! for even n = 2k; Γ(k+3/2) = (2k+1)!!/2^(k+1)·√π for odd.
    if n % 2 == 0 {
        let k = n / 2;
        (1..=k).map(|i| i as f64).product::<f64>().max(1.0)
    } else {
        let k = (n - 1) / 2;
        let double_fact: f64 = (0..=k).map(|i| 2.0 * i as f64 + 1.0).product();
        double_fact / 2f64.powi(k as i32 + 1) * std::f64::consts::PI.sqrt()
    }
}

/// Number of particles for a region: volume over the n-ball volume of the
/// Wigner-Seitz radius, rounded, at least 1.
pub fn particle_count<T: Real>(region_volume: T, rs: T, n: usize) -> usize {
    let count = (region_volume / ball_volume(rs, n))
        .to_f64()
        .unwrap()
        .round() as isize;
    count.max(1) as usize
}

/// A lattice cell's intersection with the region (linear cell indices).
pub type LatticeCells = Vec<Vec<usize>>;

/// Partition region cells by a lattice sized so each cell holds about one
/// particle: hexagonal with constant 2·rs in 2-D, hypercubic with cell
/// volume ≈ the particle ball volume in higher dimensions.
pub fn lattice_cells<T: Real>(
    region: &[usize],
    dims: &[usize],
    rs: T,
    n: usize,
) -> LatticeCells {
    assert!(!region.is_empty());
    // Anchored at the grid origin, so the partition of any cell subset is
    // consistent with the partition of its superset.
    let coords: Vec<Vec<usize>> = region.iter().map(|&lin| decompose(dims, lin)).collect();
    let mut groups: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    if n == 2 {
        let a = (rs * real::<T>(2.0)).to_f64().unwrap();
        let row_h = a * 3f64.sqrt() / 2.0;
        for (c, &lin) in coords.iter().zip(region) {
            let y = c[0] as f64;
            let x = c[1] as f64;
            // Nearest hexagonal lattice center, brute-forced over the
            // candidate rows around y.
            let j0 = (y / row_h).floor() as i64;
            let mut best = (i64::MAX, i64::MAX);
            let mut best_d = f64::INFINITY;
            for j in j0 - 1..=j0 + 1 {
                let offset = if j.rem_euclid(2) == 1 { a / 2.0 } else { 0.0 };
                let i0 = ((x - offset) / a).floor() as i64;
                for i in i0 - 1..=i0 + 1 {
                    let cy = j as f64 * row_h;
                    let cx = i as f64 * a + offset;
                    let d = (x - cx).powi(2) + (y - cy).powi(2);
                    if d < best_d - 1e-12
                        || (d < best_d + 1e-12 && (j, i) < best)
                    {
                        best_d = d;
                        best = (j, i);
                    }
                }
            }
            groups.entry(vec![best.0, best.1]).or_default().push(lin);
        }
    } else {
        let side = ball_volume(rs, n).powf(T::one() / real::<T>(n as f64));
        let side = side.to_f64().unwrap();
        for (c, &lin) in coords.iter().zip(region) {
            let key: Vec<i64> = (0..n)
                .map(|axis| ((c[axis] as f64) / side).floor() as i64)
                .collect();
            groups.entry(key).or_default().push(lin);
        }
    }
    let mut keys: Vec<&Vec<i64>> = groups.keys().collect();
    keys.sort();
    keys.iter().map(|k| groups[*k].clone()).collect()
}

/// Place, weigh and charge the particles.
///
/// Positions are drawn per the strategy from cells whose potential lies in
/// the V band, multiplied into solver space; momenta are `mass·s0·û` with
/// uniformly random unit directions. Deterministic in `rng_seed`.
pub fn init_particles<T: Real>(
    region: &[usize],
    dims: &[usize],
    potential: &ConfiningPotential<T>,
    candidates: Option<&CandidateSet<T>>,
    cfg: &InitConfig<T>,
    solver_scale: T,
) -> Result<ParticleSystem<T>> {
    let n = dims.len();
    let filtered: Vec<usize> = region
        .iter()
        .copied()
        .filter(|&lin| {
            let v = potential.v.values()[lin];
            v >= cfg.v_band.0 && v <= cfg.v_band.1
        })
        .collect();
    if filtered.is_empty() {
        return Err(Error::EmptyVBand);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);

    let cell_coords = |lin: usize| -> Vec<T> {
        decompose(dims, lin)
            .iter()
            .map(|&c| real::<T>(c as f64))
            .collect()
    };

    let mut positions: Vec<Vec<T>> = Vec::new();
    match cfg.strategy {
        InitStrategy::Random => {
            let count = particle_count(real::<T>(region.len() as f64), cfg.rs, n);
            if filtered.len() >= count {
                let picks =
                    rand::seq::index::sample(&mut rng, filtered.len(), count).into_vec();
                for p in picks {
                    positions.push(cell_coords(filtered[p]));
                }
            } else {
                for _ in 0..count {
                    let p = rng.random_range(0..filtered.len());
                    positions.push(cell_coords(filtered[p]));
                }
            }
        }
        InitStrategy::UniformRandom => {
            for cell in lattice_cells(&filtered, dims, cfg.rs, n) {
                let pick = cell[rng.random_range(0..cell.len())];
                positions.push(cell_coords(pick));
            }
        }
        InitStrategy::CvxHullCoc => {
            let cells = lattice_cells(&filtered, dims, cfg.rs, n);
            // Assign candidate points to the lattice cell of their rounded
            // containing grid cell.
            let mut cell_of: HashMap<usize, usize> = HashMap::new();
            for (ci, cell) in cells.iter().enumerate() {
                for &lin in cell {
                    cell_of.insert(lin, ci);
                }
            }
            let mut cands_by_cell: Vec<Vec<&[T]>> = vec![Vec::new(); cells.len()];
            if let Some(cand) = candidates {
                for p in &cand.points {
                    let idx: Option<Vec<usize>> = p
                        .iter()
                        .enumerate()
                        .map(|(axis, &x)| {
                            let i = x.round().to_isize().unwrap_or(-1);
                            (i >= 0 && (i as usize) < dims[axis]).then_some(i as usize)
                        })
                        .collect();
                    if let Some(idx) = idx {
                        let lin = crate::field::linear_index(dims, &idx);
                        if let Some(&ci) = cell_of.get(&lin) {
                            cands_by_cell[ci].push(p.as_slice());
                        }
                    }
                }
            }
            for (ci, cell) in cells.iter().enumerate() {
                if cands_by_cell[ci].is_empty() {
                    let pick = cell[rng.random_range(0..cell.len())];
                    positions.push(cell_coords(pick));
                } else {
                    let pick = cands_by_cell[ci]
                        .choose(&mut rng)
                        .copied()
                        .unwrap();
                    positions.push(pick.to_vec());
                }
            }
        }
    }

    let count = positions.len();
    let charge = real::<T>(count as f64).powf(-cfg.beta);
    let mut flat_pos = Vec::with_capacity(count * n);
    let mut flat_mom = Vec::with_capacity(count * n);
    for p in &positions {
        for &x in p {
            flat_pos.push(x * solver_scale);
        }
        // Random unit direction from normalized standard normals.
        let mut dir: Vec<T> = (0..n).map(|_| T::standard_normal(&mut rng)).collect();
        let norm = dir
            .iter()
            .map(|&v| v * v)
            .fold(T::zero(), |a, b| a + b)
            .sqrt();
        if norm == T::zero() {
            dir[0] = T::one();
        } else {
            for d in &mut dir {
                *d = *d / norm;
            }
        }
        for d in dir {
            flat_mom.push(cfg.mass * cfg.s0 * d);
        }
    }

    Ok(ParticleSystem {
        positions: flat_pos,
        momenta: flat_mom,
        charges: vec![charge; count],
        masses: vec![cfg.mass; count],
        dim: n,
        metric_p: real(2.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::BinaryMask;
    use crate::potential::confining_from_mask;

    #[test]
    fn count_matches_area_over_disk() {
        // A = π·50², rs = 5 → 100 particles.
        let area = std::f64::consts::PI * 2500.0;
        assert_eq!(particle_count(area, 5.0, 2), 100);
    }

    #[test]
    fn count_clamps_to_one() {
        assert_eq!(particle_count(0.5, 5.0, 2), 1);
    }

    #[test]
    fn count_3d_ball_ratio() {
        let vol = 4.0 / 3.0 * std::f64::consts::PI * 27f64.powi(3);
        assert_eq!(particle_count(vol, 9.0, 3), 27);
    }

    #[test]
    fn hexagon_cell_area_close_to_ball() {
        // (√3/2)(2rs)² within 11% of π·rs².
        let rs = 1.0f64;
        let hex = 3f64.sqrt() / 2.0 * (2.0 * rs).powi(2);
        let ball = std::f64::consts::PI * rs * rs;
        assert!((hex / ball - 1.0).abs() < 0.11, "ratio {}", hex / ball);
    }

    #[test]
    fn lattice_partition_is_exact() {
        let dims = [40usize, 60];
        let region: Vec<usize> = (0..dims[0] * dims[1]).collect();
        let cells = lattice_cells(&region, &dims, 5.0f64, 2);
        let total: usize = cells.iter().map(|c| c.len()).sum();
        assert_eq!(total, region.len());
        let mut seen = vec![false; region.len()];
        for cell in &cells {
            for &lin in cell {
                assert!(!seen[lin], "cell {lin} assigned twice");
                seen[lin] = true;
            }
        }
    }

    #[test]
    fn single_cell_region_single_subset() {
        let dims = [4usize, 4];
        let cells = lattice_cells(&[5usize], &dims, 3.0f64, 2);
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0], vec![5]);
    }

    fn square_potential(dims: [usize; 2]) -> (Vec<usize>, ConfiningPotential<f64>) {
        let mut mask = BinaryMask::new(&dims, false);
        for i in 1..dims[0] - 1 {
            for j in 1..dims[1] - 1 {
                mask.set(&[i, j], true);
            }
        }
        let region: Vec<usize> = mask
            .bits()
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i)
            .collect();
        let pot = confining_from_mask::<f64>(&mask, 18.0, true, 1.0).unwrap();
        (region, pot)
    }

    fn cfg(strategy: InitStrategy, seed: u64) -> InitConfig<f64> {
        InitConfig {
            rs: 5.0,
            strategy,
            beta: 1.0 / 3.0,
            s0: 0.01,
            mass: 1.0,
            v_band: (0.0, 1.0),
            rng_seed: seed,
        }
    }

    #[test]
    fn charges_follow_beta() {
        let (region, pot) = square_potential([42, 42]);
        let mut c = cfg(InitStrategy::Random, 7);
        c.rs = 4.0;
        let sys = init_particles(&region, &[42, 42], &pot, None, &c, 1.0).unwrap();
        let expected = (sys.len() as f64).powf(-1.0 / 3.0);
        for &q in &sys.charges {
            assert!((q - expected).abs() < 1e-12);
        }
        // β = 0 → unit charge.
        c.beta = 0.0;
        let sys = init_particles(&region, &[42, 42], &pot, None, &c, 1.0).unwrap();
        for &q in &sys.charges {
            assert_eq!(q, 1.0);
        }
    }

    #[test]
    fn beta_third_of_27_gives_third() {
        assert!((27f64.powf(-1.0 / 3.0) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn same_seed_reproduces_bit_identical() {
        let (region, pot) = square_potential([40, 40]);
        let c = cfg(InitStrategy::UniformRandom, 99);
        let a = init_particles(&region, &[40, 40], &pot, None, &c, 1.0).unwrap();
        let b = init_particles(&region, &[40, 40], &pot, None, &c, 1.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn initial_speeds_equal_s0() {
        let (region, pot) = square_potential([40, 40]);
        let c = cfg(InitStrategy::Random, 3);
        let sys = init_particles(&region, &[40, 40], &pot, None, &c, 1.0).unwrap();
        for i in 0..sys.len() {
            assert!((sys.speed(i) - 0.01).abs() < 1e-12);
        }
    }

    #[test]
    fn v_band_too_tight_errors() {
        let (region, pot) = square_potential([40, 40]);
        let mut c = cfg(InitStrategy::Random, 3);
        c.v_band = (0.0, 1e-9);
        assert!(matches!(
            init_particles(&region, &[40, 40], &pot, None, &c, 1.0),
            Err(Error::EmptyVBand)
        ));
    }

    #[test]
    fn uniform_random_one_particle_per_lattice_cell() {
        // Every particle lies in its own lattice cell and occupied cells
        // are distinct: check via re-partition of the drawn positions.
        let dims = [102usize, 202];
        let mut mask = BinaryMask::new(&dims, false);
        for i in 1..101 {
            for j in 1..201 {
                mask.set(&[i, j], true);
            }
        }
        let region: Vec<usize> = mask
            .bits()
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i)
            .collect();
        let pot = confining_from_mask::<f64>(&mask, 18.0, true, 1.0).unwrap();
        let c = InitConfig {
            rs: 5.0,
            strategy: InitStrategy::UniformRandom,
            beta: 1.0 / 3.0,
            s0: 0.01,
            mass: 1.0,
            v_band: (0.0, 1.0),
            rng_seed: 11,
        };
        let sys = init_particles(&region, &dims, &pot, None, &c, 1.0).unwrap();
        let filtered: Vec<usize> = region
            .iter()
            .copied()
            .filter(|&lin| {
                let v = pot.v.values()[lin];
                (0.0..=1.0).contains(&v)
            })
            .collect();
        let cells = lattice_cells(&filtered, &dims, 5.0, 2);
        let mut occupied = vec![0usize; cells.len()];
        for i in 0..sys.len() {
            let p = sys.position(i);
            let lin = crate::field::linear_index(
                &dims,
                &[p[0].round() as usize, p[1].round() as usize],
            );
            let ci = cells
                .iter()
                .position(|cell| cell.contains(&lin))
                .expect("drawn position must belong to some lattice cell");
            occupied[ci] += 1;
        }
        assert!(occupied.iter().all(|&o| o == 1));
        assert_eq!(sys.len(), cells.len());
    }

    #[test]
    fn random_directions_average_out() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12345);
        let mut mean = [0.0f64; 3];
        let n = 10_000;
        for _ in 0..n {
            let mut dir = [0.0f64; 3];
            let mut norm = 0.0;
            for d in &mut dir {
                *d = f64::standard_normal(&mut rng);
                norm += *d * *d;
            }
            let norm = norm.sqrt();
            for (m, d) in mean.iter_mut().zip(&dir) {
                *m += d / norm;
            }
        }
        let resultant =
            (mean.iter().map(|m| (m / n as f64).powi(2)).sum::<f64>()).sqrt();
        assert!(resultant < 0.05, "directional bias {resultant}");
    }
}

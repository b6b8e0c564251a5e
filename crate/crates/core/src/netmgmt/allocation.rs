//! Alternating power / sub-band allocation.
//!
//! Utility: `sum_i log2(1 + SINR_i) + w_s sum_i P_i s_i`, where `SINR_i` is the
//! rate of the user served by BS `i` against co-band interference and `s_i`
//! is the beam gain of BS `i` at its sensing cell.

use super::{path_gain, Allocation};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::phy::beam_gain;
use crate::scene::Scene;
use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};

/// Power gains of the links between active BSs and their served users.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkModel {
    /// `gain[[i, j]]`: from BS `j`'s beam to the user of BS `i`.
    pub gain: Array2<f64>,
    /// Gain of each BS's beam at its sensing cell.
    pub sensing_gain: Vec<f64>,
    /// W.
    pub noise: f64,
}

impl LinkModel {
    /// Each active BS steers one beam at its user; gains are the steered
    /// transmit-array gain times free-space path gain.
    pub fn from_scene(scene: &Scene, active: &[usize], users: &[Point], sensing: &[Point], wavelength: f64, noise: f64) -> Result<Self> {
        let n = active.len();
        if users.len() != n || sensing.len() != n {
            return Err(Error::DimensionMismatch {
                expected: format!("{n} users and sensing cells"),
                got: format!("{} and {}", users.len(), sensing.len()),
            });
        }
        let bss = active
            .iter()
            .map(|&b| scene.bs.get(b).ok_or_else(|| Error::arg(format!("unknown bs id {b}"))))
            .collect::<Result<Vec<_>>>()?;
        let local = |j: usize, p: Point| bss[j].tx_array.local_angle((p - bss[j].position).bearing());
        let link = |j: usize, beam: f64, p: Point| {
            let a = local(j, p);
            let d = bss[j].position.distance(p);
            if a.abs() >= PI / 2.0 || d == 0.0 {
                0.0
            } else {
                beam_gain(&bss[j].tx_array, beam, a, wavelength) * path_gain(wavelength, d)
            }
        };
        let beams: Vec<f64> = (0..n).map(|j| local(j, users[j]).clamp(-PI / 2.0 + 1e-9, PI / 2.0 - 1e-9)).collect();
        let mut gain = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                gain[[i, j]] = link(j, beams[j], users[i]);
            }
        }
        let sensing_gain = (0..n).map(|j| link(j, beams[j], sensing[j])).collect();
        Ok(LinkModel { gain, sensing_gain, noise })
    }

    pub fn n_bs(&self) -> usize {
        self.gain.nrows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UtilityWeights {
    /// Per watt of beam power at the sensing cells.
    pub sensing: f64,
}

impl Default for UtilityWeights {
    fn default() -> Self {
        UtilityWeights { sensing: 0.0 }
    }
}

fn interference(m: &LinkModel, power: &[f64], band: &[usize], i: usize) -> f64 {
    (0..m.n_bs())
        .filter(|&j| j != i && band[j] == band[i])
        .map(|j| power[j] * m.gain[[i, j]])
        .sum()
}

pub fn allocation_objective(m: &LinkModel, alloc: &Allocation, w: &UtilityWeights) -> f64 {
    (0..m.n_bs())
        .map(|i| {
            let d = m.noise + interference(m, &alloc.power, &alloc.band, i);
            (1.0 + alloc.power[i] * m.gain[[i, i]] / d).log2() + w.sensing * alloc.power[i] * m.sensing_gain[i]
        })
        .sum()
}

fn gradient(m: &LinkModel, power: &[f64], band: &[usize], w: &UtilityWeights) -> Vec<f64> {
    let n = m.n_bs();
    let denom: Vec<f64> = (0..n).map(|i| m.noise + interference(m, power, band, i)).collect();
    (0..n)
        .map(|k| {
            let own = m.gain[[k, k]] / (denom[k] + power[k] * m.gain[[k, k]]);
            let cross: f64 = (0..n)
                .filter(|&i| i != k && band[i] == band[k])
                .map(|i| m.gain[[i, k]] / (denom[i] + power[i] * m.gain[[i, i]]) - m.gain[[i, k]] / denom[i])
                .sum();
            (own + cross) / LN_2 + w.sensing * m.sensing_gain[k]
        })
        .collect()
}

/// Projected gradient ascent on the power box with Armijo backtracking.
fn optimize_power(m: &LinkModel, alloc: &mut Allocation, budgets: &[f64], w: &UtilityWeights) {
    let mut f = allocation_objective(m, alloc, w);
    let scale = budgets.iter().cloned().fold(0.0, f64::max);
    for _ in 0..200 {
        let g = gradient(m, &alloc.power, &alloc.band, w);
        let gmax = g.iter().map(|x| x.abs()).fold(0.0, f64::max);
        if gmax == 0.0 {
            return;
        }
        let mut t = scale / gmax;
        let mut moved = false;
        for _ in 0..60 {
            let cand: Vec<f64> = alloc
                .power
                .iter()
                .zip(&g)
                .zip(budgets)
                .map(|((p, gk), b)| (p + t * gk).clamp(0.0, *b))
                .collect();
            let ascent: f64 = cand.iter().zip(&alloc.power).zip(&g).map(|((c, p), gk)| (c - p) * gk).sum();
            if ascent <= 0.0 {
                break;
            }
            let trial = Allocation {
                power: cand,
                band: alloc.band.clone(),
            };
            let ft = allocation_objective(m, &trial, w);
            if ft >= f + 1e-4 * ascent {
                alloc.power = trial.power;
                moved = ft > f;
                f = ft;
                break;
            }
            t /= 2.0;
        }
        if !moved {
            return;
        }
    }
}

/// One pass over the BSs in order, moving each to its best sub-band when that
/// strictly improves the objective. Returns whether anything moved.
fn reassign_bands(m: &LinkModel, alloc: &mut Allocation, n_subbands: usize, w: &UtilityWeights) -> bool {
    let mut f = allocation_objective(m, alloc, w);
    let mut moved = false;
    for i in 0..m.n_bs() {
        let original = alloc.band[i];
        let mut best = (f, original);
        for b in 0..n_subbands {
            if b == original {
                continue;
            }
            alloc.band[i] = b;
            let v = allocation_objective(m, alloc, w);
            if v > best.0 + 1e-12 * best.0.abs().max(1.0) {
                best = (v, b);
            }
        }
        alloc.band[i] = best.1;
        if best.1 != original {
            moved = true;
            f = best.0;
        }
    }
    moved
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    pub allocation: Allocation,
    /// Objective at the start and after every round.
    pub trace: Vec<f64>,
}

/// Alternates power optimization (bands fixed) and greedy sub-band moves
/// (powers fixed), starting from full budgets on sub-band 0. Stops after
/// `max_rounds` or when a round improves nothing.
pub fn allocate_power_bandwidth(
    m: &LinkModel,
    budgets: &[f64],
    n_subbands: usize,
    w: &UtilityWeights,
    max_rounds: usize,
) -> Result<AllocationResult> {
    let n = m.n_bs();
    if budgets.len() != n {
        return Err(Error::DimensionMismatch {
            expected: format!("{n} budgets"),
            got: format!("{}", budgets.len()),
        });
    }
    if budgets.iter().any(|b| !(*b > 0.0) || !b.is_finite()) {
        return Err(Error::arg("budgets must be positive"));
    }
    if n_subbands == 0 {
        return Err(Error::arg("need at least one sub-band"));
    }
    if !(m.noise > 0.0) {
        return Err(Error::arg("noise power must be positive"));
    }
    let mut alloc = Allocation::uniform(budgets);
    let mut trace = vec![allocation_objective(m, &alloc, w)];
    for _ in 0..max_rounds {
        optimize_power(m, &mut alloc, budgets, w);
        let moved = reassign_bands(m, &mut alloc, n_subbands, w);
        debug_assert!(alloc.is_feasible(budgets, n_subbands));
        let f = allocation_objective(m, &alloc, w);
        let last = *trace.last().expect("non-empty");
        trace.push(f);
        if !moved && f <= last + 1e-12 * last.abs().max(1.0) {
            break;
        }
    }
    Ok(AllocationResult { allocation: alloc, trace })
}

/// A uniformly random feasible allocation.
pub fn random_allocation<R: Rng + ?Sized>(budgets: &[f64], n_subbands: usize, rng: &mut R) -> Allocation {
    Allocation {
        power: budgets.iter().map(|b| rng.gen_range(0.0..=*b)).collect(),
        band: budgets.iter().map(|_| rng.gen_range(0..n_subbands)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::scene::test_support::{bs_at, minimal_scene};

    fn lambda() -> f64 {
        crate::SPEED_OF_LIGHT / 5.5e9
    }

    fn random_model(seed: u64, n: usize) -> LinkModel {
        let mut r = rng::stage_rng(seed, "links", 0);
        let mut s = minimal_scene();
        s.bs.clear();
        let mut users = Vec::new();
        let mut cells = Vec::new();
        for _ in 0..n {
            let p = Point::new(r.gen_range(0.0..200.0), r.gen_range(0.0..200.0));
            let mut b = bs_at(p);
            b.tx_array.n_antennas = 8;
            b.tx_array.orientation = r.gen_range(-PI..PI);
            let a = b.tx_array.orientation + r.gen_range(-1.0..1.0);
            s.bs.push(b);
            users.push(p + Point::from_angle(a) * r.gen_range(20.0..80.0));
            cells.push(p + Point::from_angle(a + 0.2) * 30.0);
        }
        let active: Vec<usize> = (0..n).collect();
        LinkModel::from_scene(&s, &active, &users, &cells, lambda(), 1e-11).unwrap()
    }

    #[test]
    fn single_bs_takes_its_full_budget() {
        let m = random_model(1, 1);
        let r = allocate_power_bandwidth(&m, &[2.0], 3, &UtilityWeights::default(), 10).unwrap();
        assert!((r.allocation.power[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn two_interfering_bss_split_bands() {
        // facing each other, each user sits next to the other BS
        let mut s = minimal_scene();
        s.bs[0].tx_array.n_antennas = 8;
        let mut b = bs_at(Point::new(100.0, 0.0));
        b.tx_array.n_antennas = 8;
        b.tx_array.orientation = PI;
        s.bs.push(b);
        let users = [Point::new(60.0, 0.0), Point::new(40.0, 0.0)];
        let m = LinkModel::from_scene(&s, &[0, 1], &users, &users, lambda(), 1e-12).unwrap();
        let r = allocate_power_bandwidth(&m, &[1.0, 1.0], 2, &UtilityWeights::default(), 20).unwrap();
        assert_ne!(r.allocation.band[0], r.allocation.band[1]);
    }

    #[test]
    fn beats_random_feasible_allocations() {
        for seed in 0..5 {
            let m = random_model(seed, 3);
            let budgets = [1.0, 2.0, 0.5];
            let w = UtilityWeights { sensing: 1e6 };
            let r = allocate_power_bandwidth(&m, &budgets, 2, &w, 50).unwrap();
            let best = *r.trace.last().unwrap();
            let mut g = rng::stage_rng(seed, "random-alloc", 0);
            for _ in 0..100 {
                let a = random_allocation(&budgets, 2, &mut g);
                assert!(allocation_objective(&m, &a, &w) <= best + 1e-9);
            }
        }
    }

    #[test]
    fn trace_is_non_decreasing_and_feasible() {
        for seed in 0..20 {
            let m = random_model(100 + seed, 2 + (seed as usize % 5));
            let budgets: Vec<f64> = (0..m.n_bs()).map(|i| 0.5 + i as f64).collect();
            let r = allocate_power_bandwidth(&m, &budgets, 3, &UtilityWeights { sensing: 1e5 }, 30).unwrap();
            for w in r.trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-12 * w[0].abs(), "{seed}: {:?}", r.trace);
            }
            assert!(r.allocation.is_feasible(&budgets, 3));
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = random_model(9, 4);
        let power = vec![0.3, 0.7, 0.2, 0.9];
        let band = vec![0, 0, 1, 0];
        let w = UtilityWeights { sensing: 1e4 };
        let g = gradient(&m, &power, &band, &w);
        for k in 0..4 {
            let h = 1e-6;
            let mut p = power.clone();
            p[k] += h;
            let up = allocation_objective(&m, &Allocation { power: p.clone(), band: band.clone() }, &w);
            p[k] -= 2.0 * h;
            let dn = allocation_objective(&m, &Allocation { power: p, band: band.clone() }, &w);
            let fd = (up - dn) / (2.0 * h);
            assert!((fd - g[k]).abs() <= 1e-5 * fd.abs().max(1e-3), "{k}: {fd} {}", g[k]);
        }
    }

    #[test]
    fn bad_arguments() {
        let m = random_model(1, 2);
        let w = UtilityWeights::default();
        assert!(allocate_power_bandwidth(&m, &[1.0], 2, &w, 5).is_err());
        assert!(allocate_power_bandwidth(&m, &[1.0, 0.0], 2, &w, 5).is_err());
        assert!(allocate_power_bandwidth(&m, &[1.0, 1.0], 0, &w, 5).is_err());
    }
}

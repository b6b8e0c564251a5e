//! Network management across BSs: pairwise interference, site selection,
//! on-off control and power/sub-band allocation.

mod allocation;

pub use allocation::{allocate_power_bandwidth, allocation_objective, random_allocation, AllocationResult, LinkModel, UtilityWeights};

use crate::error::{Error, Result};
use crate::geometry::{Bounds, Point};
use crate::par;
use crate::phy::beam_gain;
use crate::scene::Scene;
use itertools::Itertools;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Instances with at most this many feasible configurations are finished by
/// exhaustive enumeration after the heuristic search.
pub const EXACT_SEARCH_LIMIT: u64 = 4096;

/// Transmit power and sub-band of each active BS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    /// W, one beam per BS.
    pub power: Vec<f64>,
    /// Sub-band index per BS.
    pub band: Vec<usize>,
}

impl Allocation {
    pub fn uniform(power: &[f64]) -> Self {
        Allocation {
            power: power.to_vec(),
            band: vec![0; power.len()],
        }
    }

    pub fn is_feasible(&self, budgets: &[f64], n_subbands: usize) -> bool {
        self.power.len() == budgets.len()
            && self.band.len() == budgets.len()
            && self
                .power
                .iter()
                .zip(budgets)
                .all(|(p, b)| *p >= 0.0 && *p <= *b * (1.0 + 1e-12))
            && self.band.iter().all(|b| *b < n_subbands)
    }
}

/// Received interference power between active BSs, W. Entry `(i, j)` is what
/// BS `i` receives from BS `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceMatrix {
    pub values: Array2<f64>,
}

impl InterferenceMatrix {
    pub fn total(&self) -> f64 {
        self.values.sum()
    }
}

/// Free-space path gain `(lambda / (4 pi d))^2`.
pub fn path_gain(wavelength: f64, d: f64) -> f64 {
    (wavelength / (4.0 * PI * d)).powi(2)
}

/// `I[i][j] = P_j G_j(toward i) G_i(toward j) (lambda / 4 pi d)^2` when `i`
/// and `j` share a sub-band, else 0. Gains are the steered transmit-array
/// gains at the BS beam angles (`beams[i]`, local); the back half-plane has
/// zero gain.
pub fn interference_matrix(scene: &Scene, active: &[usize], beams: &[f64], alloc: &Allocation, wavelength: f64) -> Result<InterferenceMatrix> {
    let n = active.len();
    if n == 0 {
        return Err(Error::arg("need at least one active BS"));
    }
    if beams.len() != n || alloc.power.len() != n || alloc.band.len() != n {
        return Err(Error::DimensionMismatch {
            expected: format!("{n} beams, powers and bands"),
            got: format!("{}, {}, {}", beams.len(), alloc.power.len(), alloc.band.len()),
        });
    }
    let bss = active
        .iter()
        .map(|&b| scene.bs.get(b).ok_or_else(|| Error::arg(format!("unknown bs id {b}"))))
        .collect::<Result<Vec<_>>>()?;
    let gain_toward = |i: usize, p: Point| {
        let local = bss[i].tx_array.local_angle((p - bss[i].position).bearing());
        if local.abs() >= PI / 2.0 {
            0.0
        } else {
            beam_gain(&bss[i].tx_array, beams[i], local, wavelength)
        }
    };
    let mut values = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i == j || alloc.band[i] != alloc.band[j] {
                continue;
            }
            let d = bss[i].position.distance(bss[j].position);
            if d == 0.0 {
                return Err(Error::Geometry(format!("bs {} and {} are co-located", active[i], active[j])));
            }
            values[[i, j]] = alloc.power[j]
                * gain_toward(j, bss[i].position)
                * gain_toward(i, bss[j].position)
                * path_gain(wavelength, d);
        }
    }
    Ok(InterferenceMatrix { values })
}

/// Weighted demand points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandMap {
    pub points: Vec<(Point, f64)>,
}

impl DemandMap {
    /// Unit weights at the centres of a `spacing` grid over `bounds`.
    pub fn uniform(bounds: &Bounds, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) {
            return Err(Error::arg("spacing must be positive"));
        }
        let nx = (bounds.width() / spacing).floor().max(1.0) as usize;
        let ny = (bounds.height() / spacing).floor().max(1.0) as usize;
        let mut points = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            for ix in 0..nx {
                points.push((
                    Point::new(
                        bounds.min.x + (ix as f64 + 0.5) * spacing,
                        bounds.min.y + (iy as f64 + 0.5) * spacing,
                    ),
                    1.0,
                ));
            }
        }
        Ok(DemandMap { points })
    }

    pub fn zero(&self) -> Self {
        DemandMap {
            points: self.points.iter().map(|(p, _)| (*p, 0.0)).collect(),
        }
    }
}

/// Weights of the site-selection and on-off objectives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetObjective {
    /// m.
    pub coverage_radius: f64,
    /// Per watt of interference.
    pub interference_weight: f64,
    /// Per active BS.
    pub energy_cost: f64,
    /// m.
    pub wavelength: f64,
}

impl Default for NetObjective {
    fn default() -> Self {
        NetObjective {
            coverage_radius: 100.0,
            interference_weight: 0.0,
            energy_cost: 0.0,
            wavelength: crate::SPEED_OF_LIGHT / 5.5e9,
        }
    }
}

fn covered_demand(demand: &DemandMap, covers: impl Fn(Point) -> bool) -> f64 {
    demand.points.iter().filter(|(p, _)| covers(*p)).map(|(_, w)| w).sum()
}

/// Coverage minus weighted interference of a set of candidate sites. Sites
/// are isotropic with unit power.
pub fn placement_objective(candidates: &[Point], selected: &[usize], demand: &DemandMap, obj: &NetObjective) -> f64 {
    let r2 = obj.coverage_radius * obj.coverage_radius;
    let coverage = covered_demand(demand, |q| {
        selected.iter().any(|&s| {
            let d = candidates[s] - q;
            d.dot(d) <= r2
        })
    });
    if obj.interference_weight == 0.0 {
        return coverage;
    }
    let mut interference = 0.0;
    for &a in selected {
        for &b in selected {
            if a != b {
                let d = candidates[a].distance(candidates[b]);
                interference += if d > 0.0 { path_gain(obj.wavelength, d) } else { f64::INFINITY };
            }
        }
    }
    coverage - obj.interference_weight * interference
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    /// Candidate indices, ascending.
    pub selected: Vec<usize>,
    pub positions: Vec<Point>,
    /// Objective after every greedy addition, then after every accepted swap,
    /// then the enumerated optimum if it beats the local search. Additions
    /// only increase it when the interference weight is zero.
    pub trace: Vec<f64>,
}

/// Greedy forward selection of `k` sites (ties to the lower index), followed
/// by first-improvement local search over 1-swaps, then 2-swaps. When there
/// are at most [`EXACT_SEARCH_LIMIT`] subsets of size `k`, all of them are
/// scored as well and the best replaces the local optimum if it is better.
pub fn place_bs(candidates: &[Point], k: usize, demand: &DemandMap, obj: &NetObjective) -> Result<Placement> {
    if k > candidates.len() {
        return Err(Error::arg(format!("k = {k} exceeds {} candidates", candidates.len())));
    }
    let f = |s: &[usize]| placement_objective(candidates, s, demand, obj);
    let mut selected: Vec<usize> = Vec::with_capacity(k);
    let mut trace = Vec::new();
    while selected.len() < k {
        let options: Vec<usize> = (0..candidates.len()).filter(|c| !selected.contains(c)).collect();
        let scores = par::map_slice(&options, |&c| {
            let mut s = selected.clone();
            s.push(c);
            f(&s)
        });
        let best = (0..options.len())
            .max_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(b.cmp(&a)))
            .expect("k <= n");
        selected.push(options[best]);
        trace.push(scores[best]);
    }
    let mut current = f(&selected);
    let better = |v: f64, cur: f64| v > cur + 1e-12 * cur.abs().max(1.0);
    'search: loop {
        for slot in 0..selected.len() {
            for c in 0..candidates.len() {
                if selected.contains(&c) {
                    continue;
                }
                let mut s = selected.clone();
                s[slot] = c;
                let v = f(&s);
                if better(v, current) {
                    selected = s;
                    current = v;
                    trace.push(v);
                    continue 'search;
                }
            }
        }
        // 1-swap optimum; try exchanging two sites at once
        for a in 0..selected.len() {
            for b in a + 1..selected.len() {
                for c in 0..candidates.len() {
                    for d in c + 1..candidates.len() {
                        if selected.contains(&c) || selected.contains(&d) {
                            continue;
                        }
                        let mut s = selected.clone();
                        s[a] = c;
                        s[b] = d;
                        let v = f(&s);
                        if better(v, current) {
                            selected = s;
                            current = v;
                            trace.push(v);
                            continue 'search;
                        }
                    }
                }
            }
        }
        break;
    }
    if binomial(candidates.len() as u64, k as u64) <= EXACT_SEARCH_LIMIT {
        let subsets: Vec<Vec<usize>> = (0..candidates.len()).combinations(k).collect();
        let scores = par::map_slice(&subsets, |s| f(s));
        if let Some(best) = (0..subsets.len()).max_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(b.cmp(&a))) {
            if better(scores[best], current) {
                selected = subsets[best].clone();
                trace.push(scores[best]);
            }
        }
    }
    selected.sort_unstable();
    Ok(Placement {
        positions: selected.iter().map(|&s| candidates[s]).collect(),
        selected,
        trace,
    })
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Coverage (front half-plane within the radius) minus weighted interference
/// (boresight beams, one shared band) minus energy cost of the BSs marked on.
pub fn onoff_objective(scene: &Scene, on: &[bool], demand: &DemandMap, obj: &NetObjective) -> Result<f64> {
    let active: Vec<usize> = (0..on.len()).filter(|&i| on[i]).collect();
    if active.is_empty() {
        return Ok(0.0);
    }
    let r2 = obj.coverage_radius * obj.coverage_radius;
    let coverage = covered_demand(demand, |q| {
        active.iter().any(|&b| {
            let bs = &scene.bs[b];
            let d = q - bs.position;
            d.dot(d) <= r2 && (d.dot(d) == 0.0 || bs.tx_array.local_angle(d.bearing()).abs() < PI / 2.0)
        })
    });
    let power: Vec<f64> = active.iter().map(|&b| scene.bs[b].tx_power).collect();
    let im = interference_matrix(scene, &active, &vec![0.0; active.len()], &Allocation::uniform(&power), obj.wavelength)?;
    Ok(coverage - obj.interference_weight * im.total() - obj.energy_cost * active.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnOffSchedule {
    pub on: Vec<bool>,
    /// Objective at the start of the returned run, then after every
    /// accepted move. Non-decreasing.
    pub trace: Vec<f64>,
}

fn improves(v: f64, cur: f64) -> bool {
    v > cur + 1e-12 * cur.abs().max(1.0)
}

/// Applies the best single flip in `moves` (switch-off or switch-on) while it
/// improves the objective.
fn greedy_flips(
    scene: &Scene,
    demand: &DemandMap,
    obj: &NetObjective,
    on: &mut [bool],
    trace: &mut Vec<f64>,
    switch_on: bool,
) -> Result<()> {
    let n = on.len();
    loop {
        let cand: Vec<usize> = (0..n).filter(|&i| on[i] != switch_on).collect();
        if cand.is_empty() || (!switch_on && cand.len() <= 1) {
            return Ok(());
        }
        let scores = par::map_slice(&cand, |&b| {
            let mut s = on.to_vec();
            s[b] = switch_on;
            onoff_objective(scene, &s, demand, obj)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let best = (0..cand.len())
            .max_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(b.cmp(&a)))
            .expect("non-empty");
        if !improves(scores[best], *trace.last().expect("seeded")) {
            return Ok(());
        }
        on[cand[best]] = switch_on;
        trace.push(scores[best]);
    }
}

/// First-improvement search over single and pair flips.
fn flip_search(scene: &Scene, demand: &DemandMap, obj: &NetObjective, on: &mut Vec<bool>, trace: &mut Vec<f64>) -> Result<()> {
    let n = on.len();
    let mut moves: Vec<(usize, Option<usize>)> = (0..n).map(|a| (a, None)).collect();
    moves.extend((0..n).flat_map(|a| (a + 1..n).map(move |b| (a, Some(b)))));
    'search: loop {
        for &(a, b) in &moves {
            let mut s = on.clone();
            s[a] = !s[a];
            if let Some(b) = b {
                s[b] = !s[b];
            }
            if s.iter().all(|x| !x) {
                continue;
            }
            let v = onoff_objective(scene, &s, demand, obj)?;
            if improves(v, *trace.last().expect("seeded")) {
                *on = s;
                trace.push(v);
                continue 'search;
            }
        }
        return Ok(());
    }
}

/// Two greedy starts refined by local search; the better one is returned.
///
/// The first starts from all BSs on and switches off the BS whose removal
/// gives the best objective while that improves it. The second starts from
/// the best single BS and switches on BSs the same way. Each is then refined
/// by single and pair flips. Ties go to the switch-off run. With at most
/// [`EXACT_SEARCH_LIMIT`] non-empty subsets, all of them are scored and the
/// best is appended to the trace if it beats both runs. At least one BS stays
/// on.
pub fn onoff_schedule(scene: &Scene, demand: &DemandMap, obj: &NetObjective) -> Result<OnOffSchedule> {
    let n = scene.bs.len();
    if n == 0 {
        return Err(Error::arg("no BSs"));
    }
    let mut off_on = vec![true; n];
    let mut off_trace = vec![onoff_objective(scene, &off_on, demand, obj)?];
    greedy_flips(scene, demand, obj, &mut off_on, &mut off_trace, false)?;
    flip_search(scene, demand, obj, &mut off_on, &mut off_trace)?;

    let singles = par::map_range(n, |b| {
        let mut s = vec![false; n];
        s[b] = true;
        onoff_objective(scene, &s, demand, obj)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let first = (0..n)
        .max_by(|&a, &b| singles[a].total_cmp(&singles[b]).then(b.cmp(&a)))
        .expect("n > 0");
    let mut on_on = vec![false; n];
    on_on[first] = true;
    let mut on_trace = vec![singles[first]];
    greedy_flips(scene, demand, obj, &mut on_on, &mut on_trace, true)?;
    flip_search(scene, demand, obj, &mut on_on, &mut on_trace)?;

    let (mut on, mut trace) = if improves(*on_trace.last().unwrap(), *off_trace.last().unwrap()) {
        (on_on, on_trace)
    } else {
        (off_on, off_trace)
    };
    if n < 64 && (1u64 << n) - 1 <= EXACT_SEARCH_LIMIT {
        let masks: Vec<u64> = (1..1u64 << n).collect();
        let subsets: Vec<Vec<bool>> = masks.iter().map(|m| (0..n).map(|i| m & (1 << i) != 0).collect()).collect();
        let scores = par::map_slice(&subsets, |s| onoff_objective(scene, s, demand, obj))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let best = (0..subsets.len())
            .max_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(b.cmp(&a)))
            .expect("n > 0");
        if improves(scores[best], *trace.last().unwrap()) {
            on = subsets[best].clone();
            trace.push(scores[best]);
        }
    }
    Ok(OnOffSchedule { on, trace })
}

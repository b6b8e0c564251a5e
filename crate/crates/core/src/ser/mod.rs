//! Static environment reconstruction.
//!
//! A first-order NLoS path leaves the BS at a known angle and has a known
//! total length, so its scatterer sits where the departure ray meets the
//! ellipse with foci at the BS and the UE. Per-UE point clouds are combined
//! across UEs with an evidence grid and across BSs with [`fuse_maps_multibs`].

mod evidence;
mod fusion;

pub use evidence::{evidence_observations, fuse_evidence, fuse_ue_maps, CellMass, EvidenceGrid};
pub use fusion::{fuse_maps_multibs, FusionParams};

use crate::error::{Error, Result};
use crate::estimation::{extract_paths_with, label_paths, PathEstimate, PathOrder, PathSearch};
use crate::geometry::Point;
use crate::phy::{synthesize_channel, OfdmConfig};
use crate::rng;
use crate::scene::Scene;
use crate::{par, SPEED_OF_LIGHT};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapPoint {
    pub position: Point,
    /// In `[0, 1]`.
    pub confidence: f64,
    pub power_db: f64,
}

/// Weighted 2D points in the global frame.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointCloudMap {
    pub points: Vec<MapPoint>,
}

impl PointCloudMap {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> Vec<Point> {
        self.points.iter().map(|p| p.position).collect()
    }
}

/// Scatterer position for a path of length `c * delay` leaving `bs_pos` at
/// global bearing `aod` and arriving at `ue_pos`.
pub fn invert_sesp(bs_pos: Point, ue_pos: Point, aod: f64, delay: f64) -> Result<Point> {
    let d = SPEED_OF_LIGHT * delay;
    let delta = ue_pos - bs_pos;
    let los = delta.norm();
    if !(d > los) {
        return Err(Error::InfeasiblePath {
            path_length: d,
            los_distance: los,
        });
    }
    let u = Point::from_angle(aod);
    let denom = 2.0 * (d - u.dot(delta));
    let r = (d * d - los * los) / denom;
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InfeasibleGeometry(format!(
            "ray at {aod:.6} rad does not meet the delay ellipse"
        )));
    }
    Ok(bs_pos + u * r)
}

/// Output of [`reconstruct_from_ue`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Reconstruction {
    pub map: PointCloudMap,
    /// NLoS paths whose inversion was infeasible.
    pub dropped: usize,
}

/// Inverts every [`PathOrder::NLoS1`] path into a map point.
///
/// `orientation` is the transmit array broadside bearing; path angles are
/// relative to it. Confidence is |gain| over the largest NLoS |gain|.
pub fn reconstruct_from_ue(
    bs_pos: Point,
    orientation: f64,
    ue_pos: Point,
    paths: &[PathEstimate],
) -> Reconstruction {
    let nlos: Vec<&PathEstimate> = paths.iter().filter(|p| p.order == PathOrder::NLoS1).collect();
    let g_max = nlos.iter().map(|p| p.gain.norm()).fold(0.0, f64::max);
    let mut out = Reconstruction::default();
    for p in nlos {
        match invert_sesp(bs_pos, ue_pos, orientation + p.aod, p.delay) {
            Ok(position) => out.map.points.push(MapPoint {
                position,
                confidence: if g_max > 0.0 { p.gain.norm() / g_max } else { 0.0 },
                power_db: 20.0 * p.gain.norm().max(1e-300).log10(),
            }),
            Err(_) => out.dropped += 1,
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct VirtualUeTrajectory {
    pub ue_ids: Vec<usize>,
    pub positions: Vec<Point>,
    pub max_gap: f64,
}

/// Greedy nearest-neighbour chain of UEs, starting at the UE nearest the BS.
///
/// Each step appends the closest remaining UE to the chain end if it lies
/// within `max_gap`; the chain stops otherwise. Ties go to the lower id.
pub fn select_virtual_ue(ues: &[(usize, Point)], bs_pos: Point, max_gap: f64) -> VirtualUeTrajectory {
    let nearest = |from: Point, pool: &[(usize, Point)]| {
        pool.iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                from.distance(a.1)
                    .total_cmp(&from.distance(b.1))
                    .then(a.0.cmp(&b.0))
            })
            .map(|(i, _)| i)
    };
    let mut pool = ues.to_vec();
    let mut traj = VirtualUeTrajectory {
        ue_ids: Vec::new(),
        positions: Vec::new(),
        max_gap,
    };
    let Some(first) = nearest(bs_pos, &pool) else {
        return traj;
    };
    let (id, p) = pool.remove(first);
    traj.ue_ids.push(id);
    traj.positions.push(p);
    while let Some(i) = nearest(*traj.positions.last().unwrap(), &pool) {
        let (id, p) = pool[i];
        if traj.positions.last().unwrap().distance(p) > max_gap {
            break;
        }
        pool.remove(i);
        traj.ue_ids.push(id);
        traj.positions.push(p);
    }
    traj
}

/// Settings for [`reconstruct_scene`].
#[derive(Debug, Clone, PartialEq)]
pub struct SerOptions {
    pub max_paths: usize,
    pub stop_threshold: f64,
    pub search: PathSearch,
    /// Std-dev of the Gaussian error on the UE positions the pipeline sees, m.
    pub ue_position_sigma: f64,
}

impl Default for SerOptions {
    fn default() -> Self {
        SerOptions {
            max_paths: 16,
            stop_threshold: 1e-4,
            search: PathSearch::default(),
            ue_position_sigma: 0.0,
        }
    }
}

/// Per-UE reconstruction for every UE of `scene` against BS `bs_id`.
///
/// The channel is synthesized noiselessly, paths are extracted and labeled
/// against the (perturbed) UE position, then inverted. UEs run in parallel;
/// each draws its position error from its own seeded stream.
pub fn reconstruct_scene(
    scene: &Scene,
    bs_id: usize,
    ofdm: &OfdmConfig,
    opts: &SerOptions,
    seed: u64,
) -> Result<Vec<(usize, Reconstruction)>> {
    let bs = scene
        .bs
        .get(bs_id)
        .ok_or_else(|| Error::arg(format!("unknown bs id {bs_id}")))?;
    let delay_bin = 1.0 / (opts.search.delay_oversample as f64 * ofdm.bandwidth());
    let results = par::map_range(scene.ues.len(), |i| -> Result<(usize, Reconstruction)> {
        let ue = scene.ues[i];
        let mut r = rng::stage_rng(seed, "ser.ue_position", ue.id as u64);
        let seen = ue.position
            + Point::new(
                rng::normal(&mut r, opts.ue_position_sigma),
                rng::normal(&mut r, opts.ue_position_sigma),
            );
        let channel = synthesize_channel(scene, bs_id, i, ofdm)?;
        let mut paths = extract_paths_with(
            &channel,
            &bs.tx_array,
            ofdm,
            opts.max_paths,
            opts.stop_threshold,
            &opts.search,
        )?;
        let los_delay = seen.distance(bs.position) / SPEED_OF_LIGHT;
        label_paths(&mut paths, los_delay, delay_bin);
        Ok((ue.id, reconstruct_from_ue(bs.position, bs.tx_array.orientation, seen, &paths)))
    });
    results.into_iter().collect()
}

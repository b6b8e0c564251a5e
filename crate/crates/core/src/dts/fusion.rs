//! Fusion centre for detection lists shared by several BSs.

use super::tracking::SensorPose;
use super::TargetEstimate;
use crate::error::{Error, Result};
use crate::geometry::Point;
use serde::{Deserialize, Serialize};

/// Sensing features one BS sends to the fusion centre.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingFeatureMsg {
    pub bs_id: usize,
    pub timestamp: f64,
    pub detections: Vec<TargetEstimate>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    /// Messages older than the newest by more than this are rejected, s.
    pub sync_tolerance: f64,
    /// Fixes closer than this belong to the same target, m.
    pub gate_radius: f64,
    pub range_sigma: f64,
    pub angle_sigma: f64,
    /// Minimum bearing spread for a full velocity solution, radians.
    pub min_bearing_spread: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            sync_tolerance: 1e-3,
            gate_radius: 2.0,
            range_sigma: 0.1,
            angle_sigma: 0.5f64.to_radians(),
            min_bearing_spread: 15f64.to_radians(),
        }
    }
}

/// A target located by one or more BSs, in the global frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedTarget {
    pub position: Point,
    /// Position variance (isotropic), m^2.
    pub variance: f64,
    pub velocity: Point,
    /// Only the radial component along one bearing was observable.
    pub radial_only: bool,
    pub rcs_est: f64,
    pub timestamp: f64,
    /// Contributing BS ids, ascending.
    pub sources: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionOutput {
    pub targets: Vec<FusedTarget>,
    /// `(bs_id, reason)` for each rejected message.
    pub rejected: Vec<(usize, String)>,
}

struct Fix {
    bs: usize,
    position: Point,
    variance: f64,
    /// Unit vector from the BS to the fix.
    los: Point,
    radial_velocity: f64,
    rcs: f64,
}

/// Converts every detection to a global fix, clusters fixes within
/// `gate_radius` (at most one per BS per cluster), and fuses each cluster:
/// inverse-variance weighted position, least-squares velocity from the radial
/// components when two bearings differ by more than `min_bearing_spread`,
/// otherwise the radial component alone (flagged).
///
/// `poses[i]` is the pose of BS `i`. Duplicate messages are ignored.
pub fn fuse_detections_multibs(msgs: &[SensingFeatureMsg], poses: &[SensorPose], cfg: &FusionConfig) -> Result<FusionOutput> {
    if !(cfg.gate_radius > 0.0) {
        return Err(Error::arg("gate radius must be positive"));
    }
    let t_ref = msgs.iter().map(|m| m.timestamp).fold(f64::NEG_INFINITY, f64::max);
    let mut rejected = Vec::new();
    let mut accepted: Vec<&SensingFeatureMsg> = Vec::new();
    for m in msgs {
        if m.bs_id >= poses.len() {
            rejected.push((m.bs_id, format!("unknown bs id {}", m.bs_id)));
        } else if t_ref - m.timestamp > cfg.sync_tolerance {
            rejected.push((
                m.bs_id,
                format!("stale by {:.6} s (tolerance {:.6} s)", t_ref - m.timestamp, cfg.sync_tolerance),
            ));
        } else if !accepted.contains(&m) {
            accepted.push(m);
        }
    }
    accepted.sort_by(|a, b| a.bs_id.cmp(&b.bs_id).then(a.timestamp.total_cmp(&b.timestamp)));

    let mut fixes: Vec<Fix> = Vec::new();
    for m in &accepted {
        let pose = &poses[m.bs_id];
        for e in &m.detections {
            let position = pose.to_global(e);
            let variance = cfg.range_sigma.powi(2) + (e.range * cfg.angle_sigma).powi(2);
            fixes.push(Fix {
                bs: m.bs_id,
                position,
                variance: variance.max(1e-18),
                los: Point::from_angle(pose.orientation + e.angle),
                radial_velocity: e.radial_velocity,
                rcs: e.rcs_est,
            });
        }
    }

    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut centers: Vec<Point> = Vec::new();
    for (i, f) in fixes.iter().enumerate() {
        let slot = (0..clusters.len())
            .filter(|&c| {
                centers[c].distance(f.position) <= cfg.gate_radius
                    && clusters[c].iter().all(|&j| fixes[j].bs != f.bs)
            })
            .min_by(|&a, &b| {
                centers[a]
                    .distance(f.position)
                    .total_cmp(&centers[b].distance(f.position))
            });
        match slot {
            Some(c) => {
                clusters[c].push(i);
                let (mut acc, mut w) = (Point::ORIGIN, 0.0);
                for &j in &clusters[c] {
                    acc = acc + fixes[j].position * (1.0 / fixes[j].variance);
                    w += 1.0 / fixes[j].variance;
                }
                centers[c] = acc * (1.0 / w);
            }
            None => {
                clusters.push(vec![i]);
                centers.push(f.position);
            }
        }
    }

    let targets = clusters
        .iter()
        .zip(&centers)
        .map(|(members, &position)| {
            let w: f64 = members.iter().map(|&j| 1.0 / fixes[j].variance).sum();
            let rcs = members.iter().map(|&j| fixes[j].rcs / fixes[j].variance).sum::<f64>() / w;
            let mut sources: Vec<usize> = members.iter().map(|&j| fixes[j].bs).collect();
            sources.sort_unstable();
            let spread = members.iter().any(|&a| {
                members.iter().any(|&b| {
                    let c = fixes[a].los.dot(fixes[b].los).clamp(-1.0, 1.0);
                    c.acos() > cfg.min_bearing_spread
                })
            });
            let (velocity, radial_only) = if spread {
                // normal equations of sum_i (u_i . v - v_r,i)^2
                let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for &j in members {
                    let (u, vr) = (fixes[j].los, fixes[j].radial_velocity);
                    a11 += u.x * u.x;
                    a12 += u.x * u.y;
                    a22 += u.y * u.y;
                    b1 += u.x * vr;
                    b2 += u.y * vr;
                }
                let det = a11 * a22 - a12 * a12;
                (Point::new((a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det), false)
            } else {
                let f = &fixes[members[0]];
                (f.los * f.radial_velocity, true)
            };
            FusedTarget {
                position,
                variance: 1.0 / w,
                velocity,
                radial_only,
                rcs_est: rcs,
                timestamp: t_ref,
                sources,
            }
        })
        .collect();
    Ok(FusionOutput { targets, rejected })
}

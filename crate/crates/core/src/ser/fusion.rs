//! Multi-BS point-cloud fusion.

use super::{MapPoint, PointCloudMap};
use crate::error::{Error, Result};
use crate::geometry::Point;

#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams {
    /// Position of the BS that produced each local map, same order.
    pub bs_positions: Vec<Point>,
    /// A BS covers a location when it lies within this range, m.
    pub sensing_range: f64,
    /// Points below this confidence are dropped as noise.
    pub min_confidence: f64,
    /// Points closer than this are merged, m.
    pub merge_radius: f64,
}

fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Some(if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) })
}

/// Fuses per-BS maps already expressed in the global frame.
///
/// Steps: shift each map's powers (dB) so its median matches the first
/// non-empty map; drop points below `min_confidence`; drop points seen by
/// exactly one BS where at least two BSs cover the location; merge points
/// within `merge_radius` into confidence-weighted centroids, strongest first.
/// A merged point keeps the largest confidence and power of its members.
pub fn fuse_maps_multibs(local_maps: &[PointCloudMap], params: &FusionParams) -> Result<PointCloudMap> {
    if local_maps.is_empty() {
        return Err(Error::arg("no local maps to fuse"));
    }
    if params.bs_positions.len() != local_maps.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} BS positions", local_maps.len()),
            got: format!("{}", params.bs_positions.len()),
        });
    }
    let reference = local_maps
        .iter()
        .find_map(|m| median(&m.points.iter().map(|p| p.power_db).collect::<Vec<_>>()));

    let mut tagged: Vec<(usize, MapPoint)> = Vec::new();
    for (b, map) in local_maps.iter().enumerate() {
        let powers: Vec<f64> = map.points.iter().map(|p| p.power_db).collect();
        let shift = match (reference, median(&powers)) {
            (Some(r), Some(m)) => r - m,
            _ => 0.0,
        };
        for p in &map.points {
            if p.confidence >= params.min_confidence {
                tagged.push((
                    b,
                    MapPoint {
                        power_db: p.power_db + shift,
                        ..*p
                    },
                ));
            }
        }
    }

    let kept: Vec<MapPoint> = tagged
        .iter()
        .filter(|(b, p)| {
            let covering = params
                .bs_positions
                .iter()
                .filter(|bs| bs.distance(p.position) <= params.sensing_range)
                .count();
            if covering < 2 {
                return true;
            }
            let seen_by_other = tagged.iter().any(|(ob, op)| {
                ob != b && op.position.distance(p.position) <= params.merge_radius
            });
            seen_by_other
        })
        .map(|(_, p)| *p)
        .collect();

    let mut order: Vec<usize> = (0..kept.len()).collect();
    order.sort_by(|&a, &b| kept[b].confidence.total_cmp(&kept[a].confidence).then(a.cmp(&b)));
    let mut used = vec![false; kept.len()];
    let mut out = PointCloudMap::default();
    for &seed in &order {
        if used[seed] {
            continue;
        }
        let center = kept[seed].position;
        let (mut wsum, mut acc) = (0.0, Point::ORIGIN);
        let mut merged = kept[seed];
        for &j in &order {
            if used[j] || kept[j].position.distance(center) > params.merge_radius {
                continue;
            }
            used[j] = true;
            let w = kept[j].confidence;
            wsum += w;
            acc = acc + kept[j].position * w;
            merged.confidence = merged.confidence.max(w);
            merged.power_db = merged.power_db.max(kept[j].power_db);
        }
        if wsum > 0.0 {
            merged.position = acc * (1.0 / wsum);
        }
        out.points.push(merged);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(x: f64, y: f64, c: f64, p: f64) -> MapPoint {
        MapPoint {
            position: Point::new(x, y),
            confidence: c,
            power_db: p,
        }
    }

    fn params(n: usize) -> FusionParams {
        FusionParams {
            bs_positions: (0..n).map(|i| Point::new(10.0 * i as f64, 0.0)).collect(),
            sensing_range: 100.0,
            min_confidence: 0.1,
            merge_radius: 0.5,
        }
    }

    #[test]
    fn identical_maps_are_idempotent() {
        let m = PointCloudMap {
            points: vec![pt(1.0, 5.0, 0.9, -60.0), pt(4.0, 8.0, 0.5, -70.0)],
        };
        let fused = fuse_maps_multibs(&[m.clone(), m.clone()], &params(2)).unwrap();
        assert_eq!(fused, m);
    }

    #[test]
    fn ghost_seen_by_one_of_two_covering_bs_is_removed() {
        let a = PointCloudMap {
            points: vec![pt(1.0, 5.0, 0.9, -60.0), pt(30.0, 30.0, 0.9, -60.0)],
        };
        let b = PointCloudMap {
            points: vec![pt(1.1, 5.0, 0.9, -60.0)],
        };
        let fused = fuse_maps_multibs(&[a.clone(), b.clone()], &params(2)).unwrap();
        assert_eq!(fused.len(), 1);
        // (-15, 0) is out of range of the second BS and survives; b's point
        // is covered by both but now unmatched
        let mut p = params(2);
        p.sensing_range = 20.0;
        let a = PointCloudMap {
            points: vec![pt(-15.0, 0.0, 0.9, -60.0)],
        };
        let fused = fuse_maps_multibs(&[a, b], &p).unwrap();
        assert_eq!(fused.positions(), vec![Point::new(-15.0, 0.0)]);
    }

    #[test]
    fn weighted_centroid_merge() {
        let m = PointCloudMap {
            points: vec![pt(0.0, 0.0, 0.8, -50.0), pt(0.1, 0.0, 0.4, -55.0)],
        };
        let fused = fuse_maps_multibs(&[m], &params(1)).unwrap();
        assert_eq!(fused.len(), 1);
        let p = fused.points[0];
        assert!((p.position.x - 0.1 / 3.0).abs() < 1e-12 && p.position.y == 0.0);
        assert_eq!(p.confidence, 0.8);
    }

    #[test]
    fn power_alignment_and_noise_threshold() {
        let a = PointCloudMap {
            points: vec![pt(0.0, 0.0, 0.9, -60.0)],
        };
        let b = PointCloudMap {
            points: vec![pt(0.0, 0.2, 0.9, -40.0), pt(50.0, 50.0, 0.05, -40.0)],
        };
        let mut p = params(2);
        p.merge_radius = 0.1;
        p.sensing_range = 5.0;
        let fused = fuse_maps_multibs(&[a, b], &p).unwrap();
        assert_eq!(fused.len(), 2);
        assert!(fused.points.iter().all(|q| q.power_db == -60.0));
        assert!(fuse_maps_multibs(&[], &p).is_err());
    }
}

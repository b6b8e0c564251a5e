//! Nearest-centroid target recognition on track features.

use super::tracking::Track;
use crate::error::{Error, Result};
use crate::scene::TargetClass;
use crate::SPEED_OF_LIGHT;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    /// m^2.
    pub rcs_mean: f64,
    /// Std-dev of the measured Doppler, Hz.
    pub doppler_spread: f64,
    /// m/s.
    pub speed_mean: f64,
    /// Mean absolute heading change rate, rad/s.
    pub turn_rate: f64,
}

impl FeatureVector {
    fn as_array(&self) -> [f64; 4] {
        [self.rcs_mean, self.doppler_spread, self.speed_mean, self.turn_rate]
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }

    /// Features of a track's detections and filtered trajectory.
    pub fn from_track(track: &Track, carrier_freq: f64) -> Self {
        let n = track.history.len().max(1) as f64;
        let rcs_mean = track.history.iter().map(|e| e.rcs_est).sum::<f64>() / n;
        let dopplers: Vec<f64> = track
            .history
            .iter()
            .map(|e| -2.0 * e.radial_velocity * carrier_freq / SPEED_OF_LIGHT)
            .collect();
        let mean_d = dopplers.iter().sum::<f64>() / n;
        let doppler_spread = (dopplers.iter().map(|d| (d - mean_d).powi(2)).sum::<f64>() / n).sqrt();

        let traj = &track.trajectory;
        let speed_mean = if traj.is_empty() {
            0.0
        } else {
            traj.iter().map(|s| s[2].hypot(s[3])).sum::<f64>() / traj.len() as f64
        };
        let times: Vec<f64> = track.history.iter().map(|e| e.timestamp).collect();
        let span = match (times.first(), times.last()) {
            (Some(a), Some(b)) if b > a => b - a,
            _ => 0.0,
        };
        let mut turn = 0.0;
        for w in traj.windows(2) {
            if w[0][2].hypot(w[0][3]) > 0.1 && w[1][2].hypot(w[1][3]) > 0.1 {
                let a = w[0][3].atan2(w[0][2]);
                let b = w[1][3].atan2(w[1][2]);
                turn += crate::geometry::wrap_angle(b - a).abs();
            }
        }
        let turn_rate = if span > 0.0 { turn / span } else { 0.0 };
        FeatureVector {
            rcs_mean,
            doppler_spread,
            speed_mean,
            turn_rate,
        }
    }
}

/// Illustrative class centroids (typical RCS, speed and agility).
pub fn default_centroids() -> Vec<(TargetClass, FeatureVector)> {
    let f = |rcs_mean, doppler_spread, speed_mean, turn_rate| FeatureVector {
        rcs_mean,
        doppler_spread,
        speed_mean,
        turn_rate,
    };
    vec![
        (TargetClass::Pedestrian, f(0.5, 20.0, 1.4, 0.3)),
        (TargetClass::Vehicle, f(10.0, 10.0, 12.0, 0.05)),
        (TargetClass::Uav, f(0.05, 40.0, 8.0, 0.3)),
        (TargetClass::Bird, f(0.01, 60.0, 10.0, 0.8)),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub label: TargetClass,
    /// Softmin weight of the chosen centroid, in (0, 1].
    pub score: f64,
    /// Another centroid was exactly as close.
    pub tie: bool,
}

/// Nearest centroid in a feature space z-scored by the spread of the
/// centroids themselves. Ties go to the earlier class in [`TargetClass`]
/// order.
pub fn classify_target(feature: &FeatureVector, centroids: &[(TargetClass, FeatureVector)]) -> Result<Classification> {
    if centroids.is_empty() {
        return Err(Error::arg("no centroids"));
    }
    if !feature.is_finite() || centroids.iter().any(|(_, c)| !c.is_finite()) {
        return Err(Error::arg("non-finite feature"));
    }
    let k = centroids.len() as f64;
    let mut scale = [1.0; 4];
    for (d, s) in scale.iter_mut().enumerate() {
        let mean = centroids.iter().map(|(_, c)| c.as_array()[d]).sum::<f64>() / k;
        let var = centroids
            .iter()
            .map(|(_, c)| (c.as_array()[d] - mean).powi(2))
            .sum::<f64>()
            / k;
        if var > 0.0 {
            *s = var.sqrt();
        }
    }
    let x = feature.as_array();
    let dist: Vec<f64> = centroids
        .iter()
        .map(|(_, c)| {
            c.as_array()
                .iter()
                .zip(&x)
                .zip(&scale)
                .map(|((a, b), s)| ((a - b) / s).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let best = (0..centroids.len())
        .min_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(centroids[a].0.cmp(&centroids[b].0)))
        .expect("non-empty");
    let dmin = dist[best];
    let z: f64 = dist.iter().map(|d| (-(d - dmin)).exp()).sum();
    let tie = dist
        .iter()
        .enumerate()
        .any(|(i, &d)| i != best && d == dmin);
    Ok(Classification {
        label: centroids[best].0,
        score: 1.0 / z,
        tie,
    })
}

//! Frame loop tying search, tracking beams and recognition together.

use super::classify::{classify_target, default_centroids};
use super::tracking::{SensorPose, Track, TrackStatus, Tracker, TrackerConfig};
use super::{detect_beams, search_scan, DetectorConfig, TargetEstimate};
use crate::error::{Error, Result};
use crate::phy::OfdmConfig;
use crate::scene::{propagate, Scene};
use crate::rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DtsConfig {
    pub detector: DetectorConfig,
    /// Measurement noise defaults to the bin sizes over sqrt(12) when absent.
    pub tracker: Option<TrackerConfig>,
    /// Search beam spacing, radians.
    pub search_step: f64,
    /// A full search scan runs every this many frames.
    pub search_every: usize,
    /// Confirmed tracks are classified every this many frames.
    pub recognize_every: usize,
    /// s.
    pub frame_dt: f64,
}

impl Default for DtsConfig {
    fn default() -> Self {
        DtsConfig {
            detector: DetectorConfig::default(),
            tracker: None,
            search_step: 2f64.to_radians(),
            search_every: 10,
            recognize_every: 20,
            frame_dt: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DtsFrame {
    pub index: usize,
    pub time: f64,
    pub searched: bool,
    pub detections: Vec<TargetEstimate>,
    pub tracks: Vec<Track>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DtsRun {
    pub frames: Vec<DtsFrame>,
}

/// Runs `n_frames` frames of the DTS pipeline at BS `bs_id`.
///
/// Search frames scan the whole sector; the others point one beam at the
/// predicted position of every live track. Every frame's noise derives from
/// `(seed, frame, beam)`.
pub fn run_dts(scene: &Scene, bs_id: usize, ofdm: &OfdmConfig, cfg: &DtsConfig, n_frames: usize, seed: u64) -> Result<DtsRun> {
    let bs = scene
        .bs
        .get(bs_id)
        .ok_or_else(|| Error::arg(format!("unknown bs id {bs_id}")))?;
    if !(cfg.frame_dt > 0.0) || cfg.search_every == 0 {
        return Err(Error::arg("frame_dt must be positive and search_every >= 1"));
    }
    let tcfg = cfg
        .tracker
        .unwrap_or_else(|| TrackerConfig::for_radar(ofdm, &bs.rx_array));
    let pose = SensorPose::from(bs);
    let lambda = ofdm.wavelength();
    let beamwidth = bs.tx_array.native_beamwidth(lambda);
    let mut tracker = Tracker::new(tcfg);
    let centroids = default_centroids();
    let mut frames = Vec::with_capacity(n_frames);

    for f in 0..n_frames {
        let now = propagate(scene, f as f64 * cfg.frame_dt)?;
        let frame_seed = rng::child_seed(seed, "dts.frame", f as u64);
        let searched = f % cfg.search_every == 0;
        let detections = if searched {
            search_scan(&now, bs_id, ofdm, cfg.search_step, &cfg.detector, frame_seed)?
        } else {
            let mut beams: Vec<f64> = Vec::new();
            for t in tracker.tracks.iter().filter(|t| t.is_live()) {
                let p = t.position() + t.velocity() * cfg.frame_dt;
                let a = bs
                    .tx_array
                    .local_angle((p - bs.position).bearing())
                    .clamp(-cfg.detector.max_scan, cfg.detector.max_scan);
                if beams.iter().all(|b| (b - a).abs() > beamwidth / 2.0) {
                    beams.push(a);
                }
            }
            detect_beams(&now, bs_id, ofdm, &beams, &cfg.detector, frame_seed)?
        };
        tracker.update(&detections, cfg.frame_dt, &pose)?;
        if cfg.recognize_every > 0 && f > 0 && f % cfg.recognize_every == 0 {
            for t in tracker.tracks.iter_mut().filter(|t| t.status == TrackStatus::Confirmed) {
                if let Ok(c) = classify_target(&t.feature, &centroids) {
                    t.class = Some((c.label, c.score));
                }
            }
        }
        frames.push(DtsFrame {
            index: f,
            time: now.time,
            searched,
            detections,
            tracks: tracker.tracks.clone(),
        });
    }
    Ok(DtsRun { frames })
}

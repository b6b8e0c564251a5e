//! Constant-velocity Kalman tracking with gated global-nearest-neighbour
//! association and M-of-N track management.

use super::classify::FeatureVector;
use super::TargetEstimate;
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::phy::{ArrayConfig, OfdmConfig};
use crate::scene::{BaseStation, TargetClass};
use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Coasting,
    Dead,
}

impl TrackStatus {
    pub fn name(self) -> &'static str {
        match self {
            TrackStatus::Tentative => "tentative",
            TrackStatus::Confirmed => "confirmed",
            TrackStatus::Coasting => "coasting",
            TrackStatus::Dead => "dead",
        }
    }
}

/// Where a sensor sits and which way its receive array faces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorPose {
    pub position: Point,
    /// Receive array broadside bearing, radians.
    pub orientation: f64,
}

impl From<&BaseStation> for SensorPose {
    fn from(bs: &BaseStation) -> Self {
        SensorPose {
            position: bs.position,
            orientation: bs.rx_array.orientation,
        }
    }
}

impl SensorPose {
    /// Global Cartesian fix of a BS-local polar estimate.
    pub fn to_global(&self, e: &TargetEstimate) -> Point {
        self.position + Point::from_angle(self.orientation + e.angle) * e.range
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// White-acceleration process noise, m/s^2.
    pub sigma_a: f64,
    /// Range measurement std-dev, m.
    pub range_sigma: f64,
    /// Angle measurement std-dev, radians.
    pub angle_sigma: f64,
    /// Squared Mahalanobis gate (chi-square, 2 dof, 99%).
    pub gate: f64,
    pub confirm_hits: usize,
    pub confirm_window: usize,
    pub max_misses: usize,
    /// Std-dev of the unknown velocity of a new track, m/s.
    pub initial_speed_sigma: f64,
    /// Used to express radial velocity spread as Doppler spread, Hz.
    pub carrier_freq: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            sigma_a: 1.0,
            range_sigma: 0.1,
            angle_sigma: 0.5f64.to_radians(),
            gate: 9.21,
            confirm_hits: 2,
            confirm_window: 3,
            max_misses: 5,
            initial_speed_sigma: 30.0,
            carrier_freq: 5.5e9,
        }
    }
}

impl TrackerConfig {
    /// Measurement noise from bin sizes over sqrt(12): the range bin and the
    /// receive array's native beamwidth.
    pub fn for_radar(ofdm: &OfdmConfig, rx: &ArrayConfig) -> Self {
        let s12 = 12f64.sqrt();
        TrackerConfig {
            range_sigma: ofdm.range_resolution() / s12,
            angle_sigma: rx.native_beamwidth(ofdm.wavelength()) / s12,
            carrier_freq: ofdm.carrier_freq,
            ..TrackerConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: usize,
    /// (x, y, vx, vy).
    pub state: Vector4<f64>,
    pub covariance: Matrix4<f64>,
    pub status: TrackStatus,
    /// Total associated detections.
    pub hits: usize,
    /// Consecutive misses.
    pub misses: usize,
    /// Hit (true) / miss pattern of the most recent updates, oldest first.
    pub recent: Vec<bool>,
    pub history: Vec<TargetEstimate>,
    /// Filtered state after every update.
    pub trajectory: Vec<Vector4<f64>>,
    pub feature: FeatureVector,
    pub class: Option<(TargetClass, f64)>,
}

impl Track {
    pub fn position(&self) -> Point {
        Point::new(self.state[0], self.state[1])
    }

    pub fn velocity(&self) -> Point {
        Point::new(self.state[2], self.state[3])
    }

    pub fn is_live(&self) -> bool {
        self.status != TrackStatus::Dead
    }
}

fn transition(dt: f64) -> Matrix4<f64> {
    let mut f = Matrix4::identity();
    f[(0, 2)] = dt;
    f[(1, 3)] = dt;
    f
}

fn process_noise(dt: f64, sigma_a: f64) -> Matrix4<f64> {
    let q = sigma_a * sigma_a;
    let (a, b, c) = (dt.powi(4) / 4.0 * q, dt.powi(3) / 2.0 * q, dt * dt * q);
    Matrix4::new(
        a, 0.0, b, 0.0, //
        0.0, a, 0.0, b, //
        b, 0.0, c, 0.0, //
        0.0, b, 0.0, c,
    )
}

fn h() -> Matrix2x4<f64> {
    Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0)
}

/// Cartesian fix and its covariance from a polar measurement.
fn measurement(e: &TargetEstimate, pose: &SensorPose, cfg: &TrackerConfig) -> (Vector2<f64>, Matrix2<f64>) {
    let phi = pose.orientation + e.angle;
    let p = pose.to_global(e);
    let (c, s) = (phi.cos(), phi.sin());
    let j = Matrix2::new(c, -e.range * s, s, e.range * c);
    let d = Matrix2::new(cfg.range_sigma.powi(2), 0.0, 0.0, cfg.angle_sigma.powi(2));
    let r = j * d * j.transpose();
    (Vector2::new(p.x, p.y), 0.5 * (r + r.transpose()))
}

fn symmetrize(p: Matrix4<f64>) -> Matrix4<f64> {
    0.5 * (p + p.transpose())
}

/// Kalman update in Joseph form. Returns `None` when the innovation
/// covariance is singular.
fn kalman_update(
    x: &Vector4<f64>,
    p: &Matrix4<f64>,
    z: &Vector2<f64>,
    r: &Matrix2<f64>,
) -> Option<(Vector4<f64>, Matrix4<f64>)> {
    let h = h();
    let s = h * p * h.transpose() + r;
    let s_inv = s.try_inverse()?;
    let k = p * h.transpose() * s_inv;
    let x_new = x + k * (z - h * x);
    let ikh = Matrix4::identity() - k * h;
    let p_new = ikh * p * ikh.transpose() + k * r * k.transpose();
    Some((x_new, symmetrize(p_new)))
}

fn mahalanobis(x: &Vector4<f64>, p: &Matrix4<f64>, z: &Vector2<f64>, r: &Matrix2<f64>) -> f64 {
    let h = h();
    let s = h * p * h.transpose() + r;
    let nu = z - h * x;
    match s.try_inverse() {
        Some(si) => (nu.transpose() * si * nu)[(0, 0)],
        None => {
            if nu.norm() == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        }
    }
}

/// Minimum-cost assignment of rows to columns (Kuhn-Munkres on a square
/// padding of `cost`). Returns the column for each row.
pub(crate) fn hungarian(cost: &[Vec<f64>]) -> Vec<Option<usize>> {
    let n_rows = cost.len();
    let n_cols = cost.first().map_or(0, |r| r.len());
    let n = n_rows.max(n_cols);
    if n == 0 {
        return vec![None; n_rows];
    }
    let big = cost
        .iter()
        .flatten()
        .filter(|c| c.is_finite())
        .fold(0.0f64, |m, &c| m.max(c.abs()))
        * 4.0
        + 1.0;
    let c = |i: usize, j: usize| -> f64 {
        if i < n_rows && j < n_cols && cost[i][j].is_finite() {
            cost[i][j]
        } else {
            big
        }
    };
    // potentials formulation, 1-based with a virtual column 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = c(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; n_rows];
    for j in 1..=n {
        let i = p[j];
        if i >= 1 && i <= n_rows && j <= n_cols && cost[i - 1][j - 1].is_finite() {
            out[i - 1] = Some(j - 1);
        }
    }
    out
}

fn new_track(id: usize, e: &TargetEstimate, pose: &SensorPose, cfg: &TrackerConfig) -> Track {
    let (z, r) = measurement(e, pose, cfg);
    let mut p = Matrix4::zeros();
    p.fixed_view_mut::<2, 2>(0, 0).copy_from(&r);
    let v0 = cfg.initial_speed_sigma.powi(2);
    p[(2, 2)] = v0;
    p[(3, 3)] = v0;
    let state = Vector4::new(z[0], z[1], 0.0, 0.0);
    let mut t = Track {
        id,
        state,
        covariance: p,
        status: TrackStatus::Tentative,
        hits: 1,
        misses: 0,
        recent: vec![true],
        history: vec![*e],
        trajectory: vec![state],
        feature: FeatureVector::default(),
        class: None,
    };
    t.feature = FeatureVector::from_track(&t, cfg.carrier_freq);
    t
}

fn advance_status(t: &mut Track, hit: bool, cfg: &TrackerConfig) {
    t.recent.push(hit);
    if t.recent.len() > cfg.confirm_window {
        t.recent.remove(0);
    }
    if hit {
        t.hits += 1;
        t.misses = 0;
    } else {
        t.misses += 1;
    }
    let recent_hits = t.recent.iter().filter(|&&h| h).count();
    t.status = match (t.status, hit) {
        (TrackStatus::Dead, _) => TrackStatus::Dead,
        (TrackStatus::Tentative, _) if recent_hits >= cfg.confirm_hits => TrackStatus::Confirmed,
        (TrackStatus::Tentative, _) if t.recent.len() >= cfg.confirm_window => TrackStatus::Dead,
        (TrackStatus::Tentative, _) => TrackStatus::Tentative,
        (_, true) => TrackStatus::Confirmed,
        (_, false) if t.misses >= cfg.max_misses => TrackStatus::Dead,
        (_, false) => TrackStatus::Coasting,
    };
}

/// One tracking step; see [`Tracker::update`]. New track ids continue from
/// the largest id in `tracks`.
pub fn track_update(
    tracks: &[Track],
    detections: &[TargetEstimate],
    dt: f64,
    pose: &SensorPose,
    cfg: &TrackerConfig,
) -> Result<Vec<Track>> {
    let next = tracks.iter().map(|t| t.id + 1).max().unwrap_or(0);
    let mut tracker = Tracker {
        cfg: *cfg,
        tracks: tracks.to_vec(),
        next_id: next,
    };
    tracker.update(detections, dt, pose)?;
    Ok(tracker.tracks)
}

/// Track store of one BS.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracker {
    pub cfg: TrackerConfig,
    pub tracks: Vec<Track>,
    pub next_id: usize,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Self {
        Tracker {
            cfg,
            tracks: Vec::new(),
            next_id: 0,
        }
    }

    /// Predict by `dt`, associate `detections` by gated global nearest
    /// neighbour, update, manage status, and start tentative tracks from
    /// unassociated detections. Tracks that were already dead are dropped;
    /// tracks dying in this step are kept once so callers can log them.
    pub fn update(&mut self, detections: &[TargetEstimate], dt: f64, pose: &SensorPose) -> Result<&[Track]> {
        if !(dt > 0.0) {
            return Err(Error::arg(format!("dt must be positive, got {dt}")));
        }
        let cfg = self.cfg;
        self.tracks.retain(|t| t.is_live());
        let f = transition(dt);
        let q = process_noise(dt, cfg.sigma_a);
        for t in &mut self.tracks {
            t.state = f * t.state;
            t.covariance = symmetrize(f * t.covariance * f.transpose() + q);
        }
        let meas: Vec<_> = detections.iter().map(|e| measurement(e, pose, &cfg)).collect();
        let cost: Vec<Vec<f64>> = self
            .tracks
            .iter()
            .map(|t| {
                meas.iter()
                    .map(|(z, r)| {
                        let d2 = mahalanobis(&t.state, &t.covariance, z, r);
                        if d2 <= cfg.gate {
                            d2
                        } else {
                            f64::INFINITY
                        }
                    })
                    .collect()
            })
            .collect();
        let assignment = hungarian(&cost);
        let mut taken = vec![false; detections.len()];
        for (t, a) in self.tracks.iter_mut().zip(&assignment) {
            let hit = match a {
                Some(j) => {
                    let (z, r) = &meas[*j];
                    match kalman_update(&t.state, &t.covariance, z, r) {
                        Some((x, p)) => {
                            t.state = x;
                            t.covariance = p;
                            t.history.push(detections[*j]);
                            taken[*j] = true;
                            true
                        }
                        None => false,
                    }
                }
                None => false,
            };
            advance_status(t, hit, &cfg);
            t.trajectory.push(t.state);
            t.feature = FeatureVector::from_track(t, cfg.carrier_freq);
        }
        for (j, e) in detections.iter().enumerate() {
            if !taken[j] {
                self.tracks.push(new_track(self.next_id, e, pose, &cfg));
                self.next_id += 1;
            }
        }
        Ok(&self.tracks)
    }
}

/// Beam command for a tracked target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamSteering {
    /// Local to the transmit array, radians.
    pub angle: f64,
    pub width: f64,
}

/// Points a tracking beam at the track's position `lookahead` seconds ahead.
///
/// Width is the larger of the array's native beamwidth and `k_sigma` times
/// the bearing std-dev projected from the position covariance; coasting
/// tracks get twice that.
pub fn steer_tracking_beam(
    track: &Track,
    bs_pos: Point,
    tx_array: &ArrayConfig,
    wavelength: f64,
    lookahead: f64,
    k_sigma: f64,
) -> Result<BeamSteering> {
    match track.status {
        TrackStatus::Dead => return Err(Error::State(format!("track {} is dead", track.id))),
        TrackStatus::Tentative => {
            return Err(Error::State(format!("track {} is not confirmed", track.id)))
        }
        _ => {}
    }
    let p = track.position() + track.velocity() * lookahead;
    let rel = p - bs_pos;
    let r = rel.norm();
    if r <= 0.0 {
        return Err(Error::InfeasibleGeometry("track sits on the BS".into()));
    }
    let f = transition(lookahead);
    let cov = f * track.covariance * f.transpose();
    let t = Vector2::new(-rel.y / r, rel.x / r);
    let pos_cov = cov.fixed_view::<2, 2>(0, 0).into_owned();
    let sigma_theta = (t.transpose() * pos_cov * t)[(0, 0)].max(0.0).sqrt() / r;
    let mut width = tx_array.native_beamwidth(wavelength).max(k_sigma * sigma_theta);
    if track.status == TrackStatus::Coasting {
        width *= 2.0;
    }
    Ok(BeamSteering {
        angle: tx_array.local_angle(rel.bearing()),
        width,
    })
}

//! Dynamic target sensing: clutter suppression, detection, parameter
//! estimation, tracking, recognition and multi-BS fusion.

mod classify;
mod fusion;
mod pipeline;
mod tracking;

pub use classify::{classify_target, default_centroids, Classification, FeatureVector};
pub use fusion::{fuse_detections_multibs, FusedTarget, FusionConfig, FusionOutput, SensingFeatureMsg};
pub use pipeline::{run_dts, DtsConfig, DtsFrame, DtsRun};
pub use tracking::{
    steer_tracking_beam, track_update, BeamSteering, SensorPose, Track, TrackStatus, Tracker,
    TrackerConfig,
};

use crate::error::{Error, Result};
use crate::estimation::{
    beamscan_spectrum, ca_cfar, find_peaks, local_maxima, music_spectrum,
    range_doppler_cube, range_doppler_map_with, CellDetection, RangeDopplerCube, RdOptions, Window,
};
use crate::phy::{beam_gain, synthesize_echo, ArrayConfig, EchoTensor, OfdmConfig};
use crate::scene::Scene;
use crate::{par, rng, SPEED_OF_LIGHT};
use ndarray::{Array2, Axis};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// A target measurement in BS-local polar coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetEstimate {
    /// m.
    pub range: f64,
    /// d(range)/dt, m/s; negative when closing.
    pub radial_velocity: f64,
    /// Relative to the receive array broadside, radians.
    pub angle: f64,
    /// m^2.
    pub rcs_est: f64,
    /// dB.
    pub snr: f64,
    /// s.
    pub timestamp: f64,
    /// Noncoherent peak power in the range-Doppler map.
    pub power: f64,
    /// Angle came from the beamscan fallback instead of MUSIC.
    #[serde(default)]
    pub angle_fallback: bool,
}

/// Removes the slow-time mean of every (antenna, subcarrier) row, a notch at
/// zero Doppler.
pub fn suppress_clutter(echo: &EchoTensor) -> Result<EchoTensor> {
    let m = echo.n_symbols();
    if m < 2 {
        return Err(Error::arg("clutter suppression needs at least 2 symbols"));
    }
    let mut out = echo.clone();
    for mut row in out.data.lanes_mut(Axis(2)) {
        let mean = row.iter().sum::<Complex64>() / m as f64;
        row.iter_mut().for_each(|c| *c -= mean);
    }
    Ok(out)
}

/// `rcs = |A|^2 R^4 / (kappa^2 G)`, the inverse of the echo amplitude model.
pub fn rcs_from_amplitude(amplitude: f64, range: f64, kappa: f64, gain: f64) -> f64 {
    amplitude * amplitude * range.powi(4) / (kappa * kappa * gain)
}

/// Transmit-side context of one beam, needed to undo the radar equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamContext {
    pub tx_array: ArrayConfig,
    /// Local to the transmit array.
    pub beam_angle: f64,
    pub radar_constant: f64,
    pub timestamp: f64,
}

/// |D_N(delta)| / N for a rectangular window, the loss of a bin sampled
/// `delta` bins away from the true frequency.
fn scallop(n: usize, delta: f64) -> f64 {
    if delta.abs() < 1e-12 {
        return 1.0;
    }
    let n = n as f64;
    ((PI * delta).sin() / (n * (PI * delta / n).sin())).abs()
}

/// Fractional peak offset along `axis` (1 = range, 2 = Doppler) from the
/// 3-point parabola through the complex bins, `-Re[(X+ - X-) / (2X0 - X- - X+)]`,
/// averaged over antennas with weights `|X0|^2` and corrected for the
/// rectangular-window bias by `tan(pi/N) / (pi/N)`.
fn interpolate_peak(cube: &RangeDopplerCube, r: usize, d: usize, axis: Axis) -> f64 {
    let (na, nr, nd) = cube.data.dim();
    let n = if axis == Axis(1) { nr } else { nd };
    let at = |a: usize, step: i64| {
        if axis == Axis(1) {
            cube.data[[a, (r as i64 + step).rem_euclid(n as i64) as usize, d]]
        } else {
            cube.data[[a, r, (d as i64 + step).rem_euclid(n as i64) as usize]]
        }
    };
    let (mut acc, mut w) = (0.0, 0.0);
    for a in 0..na {
        let (xm, x0, xp) = (at(a, -1), at(a, 0), at(a, 1));
        let denom = 2.0 * x0 - xm - xp;
        if denom.norm() == 0.0 {
            continue;
        }
        let delta = -((xp - xm) / denom).re;
        if delta.is_finite() {
            acc += x0.norm_sqr() * delta.clamp(-0.5, 0.5);
            w += x0.norm_sqr();
        }
    }
    if w == 0.0 {
        return 0.0;
    }
    let t = PI / n as f64;
    (acc / w * t.tan() / t).clamp(-0.5, 0.5)
}

fn cell_power(cube: &RangeDopplerCube, r: usize, d: usize) -> f64 {
    cube.data.index_axis(Axis(1), r).column(d).iter().map(|c| c.norm_sqr()).sum()
}

/// Refines a CFAR cell into a target estimate.
///
/// Range and Doppler come from 3-point interpolation of the complex peak
/// bins (both axes cyclic). The angle comes from single-source MUSIC over the
/// per-antenna values of the 3x3 cell neighbourhood; if MUSIC cannot run the
/// beamscan peak is used and `angle_fallback` is set. The cube must be
/// rectangular-windowed.
pub fn estimate_parameters(
    det: &CellDetection,
    cube: &RangeDopplerCube,
    ofdm: &OfdmConfig,
    rx_array: &ArrayConfig,
    beam: &BeamContext,
) -> Result<TargetEstimate> {
    let (na, nr, nd) = cube.data.dim();
    if na != rx_array.n_antennas {
        return Err(Error::DimensionMismatch {
            expected: format!("{} antennas", rx_array.n_antennas),
            got: format!("{na}"),
        });
    }
    let (r, d) = (det.range_bin, det.doppler_bin);
    if r >= nr || d >= nd {
        return Err(Error::arg("detection outside the cube"));
    }
    let peak = cell_power(cube, r, d).sqrt();
    let dr = interpolate_peak(cube, r, d, Axis(1));
    let dd = interpolate_peak(cube, r, d, Axis(2));

    let range = (r as f64 + dr) * cube.range_bin_size;
    let mut doppler_bins = d as f64 + dd;
    if doppler_bins >= nd as f64 / 2.0 {
        doppler_bins -= nd as f64;
    }
    let doppler = doppler_bins * cube.doppler_bin_size;
    let radial_velocity = -doppler * SPEED_OF_LIGHT / (2.0 * ofdm.carrier_freq);

    let lambda = ofdm.wavelength();
    let mut snaps = Array2::<Complex64>::zeros((na, 9));
    for (s, (ddr, ddd)) in (-1i64..=1).flat_map(|a| (-1i64..=1).map(move |b| (a, b))).enumerate() {
        let rr = (r as i64 + ddr).rem_euclid(nr as i64) as usize;
        let dd2 = (d as i64 + ddd).rem_euclid(nd as i64) as usize;
        for a in 0..na {
            snaps[[a, s]] = cube.data[[a, rr, dd2]];
        }
    }
    let grid: Vec<f64> = (0..1781).map(|i| (-89.0 + 0.1 * i as f64).to_radians()).collect();
    let (spectrum, angle_fallback) = match music_spectrum(&snaps, rx_array, lambda, 1, &grid) {
        Ok(s) => (s, false),
        Err(_) => (beamscan_spectrum(&snaps, rx_array, lambda, &grid), true),
    };
    let angle = find_peaks(&spectrum, &grid, 1)
        .first()
        .map(|p| p.position)
        .unwrap_or(0.0);

    // undo the rectangular-window scalloping before inverting the radar equation
    let os_r = nr as f64 / ofdm.n_subcarriers as f64;
    let os_d = nd as f64 / ofdm.n_symbols as f64;
    let loss = scallop(ofdm.n_subcarriers, dr / os_r) * scallop(ofdm.n_symbols, dd / os_d);
    let amplitude = peak / ((na * ofdm.n_subcarriers * ofdm.n_symbols) as f64).sqrt() / loss;
    let tx_local = beam
        .tx_array
        .local_angle(rx_array.global_bearing(angle));
    let gain = beam_gain(&beam.tx_array, beam.beam_angle, tx_local, lambda)
        .max(1e-6 * beam.tx_array.n_antennas as f64);

    Ok(TargetEstimate {
        range,
        radial_velocity,
        angle,
        rcs_est: rcs_from_amplitude(amplitude, range, beam.radar_constant, gain),
        snr: det.snr_est,
        timestamp: beam.timestamp,
        power: peak * peak,
        angle_fallback,
    })
}

/// CFAR and estimation settings shared by search and tracking beams.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub n_train: usize,
    pub n_guard: usize,
    pub pfa: f64,
    /// Search beams cover `[-max_scan, max_scan]` around broadside, radians.
    pub max_scan: f64,
    /// Cells more than this many dB below the map maximum are ignored.
    pub dynamic_range_db: f64,
    /// Taper of the detection map. Estimation always uses the untapered cube.
    pub window: Window,
    /// Zero-padding factor of the map and cube along range and Doppler;
    /// above 1 it cuts the straddle loss of off-grid targets.
    pub oversample: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            n_train: 4,
            n_guard: 2,
            pfa: 1e-6,
            max_scan: 60f64.to_radians(),
            dynamic_range_db: 120.0,
            window: Window::Hann,
            oversample: 1,
        }
    }
}

/// Detections from a single transmit beam (local angle `beam_angle`).
pub fn detect_beam(
    scene: &Scene,
    bs_id: usize,
    ofdm: &OfdmConfig,
    beam_angle: f64,
    cfg: &DetectorConfig,
    seed: u64,
) -> Result<Vec<TargetEstimate>> {
    let (ests, max) = beam_raw(scene, bs_id, ofdm, beam_angle, cfg, seed)?;
    Ok(above_floor(ests, max, cfg))
}

fn above_floor(ests: Vec<TargetEstimate>, max: f64, cfg: &DetectorConfig) -> Vec<TargetEstimate> {
    let floor = max * 10f64.powf(-cfg.dynamic_range_db / 10.0);
    ests.into_iter().filter(|e| e.power > floor).collect()
}

/// Estimates for every CFAR local maximum of one beam, plus the map maximum.
fn beam_raw(
    scene: &Scene,
    bs_id: usize,
    ofdm: &OfdmConfig,
    beam_angle: f64,
    cfg: &DetectorConfig,
    seed: u64,
) -> Result<(Vec<TargetEstimate>, f64)> {
    let bs = scene
        .bs
        .get(bs_id)
        .ok_or_else(|| Error::arg(format!("unknown bs id {bs_id}")))?;
    let echo = synthesize_echo(scene, bs_id, ofdm, beam_angle, seed)?;
    let echo = suppress_clutter(&echo)?;
    let padded = RdOptions {
        range_oversample: cfg.oversample,
        doppler_oversample: cfg.oversample,
        ..RdOptions::default()
    };
    let cube = range_doppler_cube(&echo, ofdm, &padded)?;
    let map = range_doppler_map_with(
        &echo,
        ofdm,
        &RdOptions {
            window: cfg.window,
            ..padded
        },
    )?;
    let max = map.power.fold(0.0f64, |m, &p| m.max(p));
    let (nr, nd) = map.power.dim();
    // the zero-Doppler column only holds the clutter-notch residue
    let dets: Vec<CellDetection> = local_maxima(&map, &ca_cfar(&map, cfg.n_train, cfg.n_guard, cfg.pfa)?)
        .into_iter()
        .filter(|c| c.doppler_bin != 0)
        .map(|mut c| {
            // the untapered peak can sit one cell away from the tapered one
            let mut best = (cell_power(&cube, c.range_bin, c.doppler_bin), c.range_bin, c.doppler_bin);
            for dr in -1i64..=1 {
                let r = c.range_bin as i64 + dr;
                if r < 0 || r >= nr as i64 {
                    continue;
                }
                for dd in -1i64..=1 {
                    let d = (c.doppler_bin as i64 + dd).rem_euclid(nd as i64) as usize;
                    let p = cell_power(&cube, r as usize, d);
                    if p > best.0 {
                        best = (p, r as usize, d);
                    }
                }
            }
            c.range_bin = best.1;
            c.doppler_bin = best.2;
            c
        })
        .collect();
    let ctx = BeamContext {
        tx_array: bs.tx_array,
        beam_angle,
        radar_constant: bs.radar_constant,
        timestamp: scene.time,
    };
    let ests = dets
        .iter()
        .map(|c| estimate_parameters(c, &cube, ofdm, &bs.rx_array, &ctx))
        .collect::<Result<Vec<_>>>()?;
    Ok((ests, max))
}

/// Runs the given beams in parallel, drops cells more than
/// `dynamic_range_db` below the strongest cell of any beam, and merges
/// estimates of the same target.
pub fn detect_beams(
    scene: &Scene,
    bs_id: usize,
    ofdm: &OfdmConfig,
    beams: &[f64],
    cfg: &DetectorConfig,
    seed: u64,
) -> Result<Vec<TargetEstimate>> {
    let bs = scene
        .bs
        .get(bs_id)
        .ok_or_else(|| Error::arg(format!("unknown bs id {bs_id}")))?;
    let per_beam = par::map_range(beams.len(), |i| {
        beam_raw(scene, bs_id, ofdm, beams[i], cfg, rng::child_seed(seed, "dts.beam", i as u64))
    });
    let mut all = Vec::new();
    let mut max = 0.0f64;
    for r in per_beam {
        let (ests, m) = r?;
        all.extend(ests);
        max = max.max(m);
    }
    let lambda = ofdm.wavelength();
    Ok(merge_estimates(
        &above_floor(all, max, cfg),
        1.5 * ofdm.range_resolution(),
        1.5 * ofdm.velocity_resolution(),
        bs.rx_array.native_beamwidth(lambda),
    ))
}

/// Merges estimates of the same target seen through several beams:
/// strongest first, members within the gates are averaged with power
/// weights.
pub fn merge_estimates(estimates: &[TargetEstimate], range_gate: f64, velocity_gate: f64, angle_gate: f64) -> Vec<TargetEstimate> {
    let mut order: Vec<usize> = (0..estimates.len()).collect();
    order.sort_by(|&a, &b| estimates[b].power.total_cmp(&estimates[a].power).then(a.cmp(&b)));
    let mut used = vec![false; estimates.len()];
    let mut out = Vec::new();
    for &i in &order {
        if used[i] {
            continue;
        }
        let head = estimates[i];
        let mut acc = [0.0; 4];
        let mut w = 0.0;
        let mut merged = head;
        for &j in &order {
            let e = estimates[j];
            if used[j]
                || (e.range - head.range).abs() > range_gate
                || (e.radial_velocity - head.radial_velocity).abs() > velocity_gate
                || (e.angle - head.angle).abs() > angle_gate
            {
                continue;
            }
            used[j] = true;
            acc[0] += e.power * e.range;
            acc[1] += e.power * e.radial_velocity;
            acc[2] += e.power * e.angle;
            acc[3] += e.power * e.rcs_est;
            w += e.power;
            merged.snr = merged.snr.max(e.snr);
            merged.angle_fallback &= e.angle_fallback;
        }
        if w > 0.0 {
            merged.range = acc[0] / w;
            merged.radial_velocity = acc[1] / w;
            merged.angle = acc[2] / w;
            merged.rcs_est = acc[3] / w;
        }
        out.push(merged);
    }
    out
}

/// Full search scan: beams every `angle_step` across the scan sector, with
/// per-beam noise streams derived from `seed`.
pub fn search_scan(
    scene: &Scene,
    bs_id: usize,
    ofdm: &OfdmConfig,
    angle_step: f64,
    cfg: &DetectorConfig,
    seed: u64,
) -> Result<Vec<TargetEstimate>> {
    if !(angle_step > 0.0) {
        return Err(Error::arg("angle_step must be positive"));
    }
    let n = (2.0 * cfg.max_scan / angle_step + 1e-9).floor() as usize + 1;
    let beams: Vec<f64> = (0..n).map(|i| -cfg.max_scan + i as f64 * angle_step).collect();
    detect_beams(scene, bs_id, ofdm, &beams, cfg, seed)
}

//! Forward models: ULA steering, OFDM numerology, BS-UE channels and
//! monostatic sensing echoes.
//!
//! Conventions used throughout the crate:
//!
//! * Subcarrier `k` (0-based) of a path with delay `tau` carries the phase
//!   `exp(-j 2 pi k df tau)`. The common carrier phase is folded into the
//!   path gain.
//! * Radial velocity is `d(range)/dt`; Doppler is `f_D = -2 v_r f_c / c`, so a
//!   closing target has positive Doppler. Symbol `m` carries
//!   `exp(+j 2 pi f_D m T_sym)`.
//! * Echo amplitude is `kappa * sqrt(G_beam * rcs) / R^2`.
//! * Arrays radiate into their front half-plane; anything with
//!   `|local angle| >= pi/2` is not illuminated.

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Point};
use crate::rng;
use crate::scene::Scene;
use crate::{par, SPEED_OF_LIGHT};
use ndarray::{Array3, Axis};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// OFDM numerology.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OfdmConfig {
    /// Carrier frequency, Hz.
    pub carrier_freq: f64,
    /// Subcarrier spacing, Hz.
    pub subcarrier_spacing: f64,
    pub n_subcarriers: usize,
    pub n_symbols: usize,
    /// Total symbol duration including the cyclic prefix, s.
    pub symbol_duration: f64,
    /// Cyclic prefix duration, s.
    pub cp_duration: f64,
    /// Noise power spectral density, W/Hz.
    #[serde(default)]
    pub noise_power: f64,
}

impl OfdmConfig {
    /// Builds a configuration whose symbol duration is `1/df + cp`.
    pub fn new(
        carrier_freq: f64,
        subcarrier_spacing: f64,
        n_subcarriers: usize,
        n_symbols: usize,
        cp_duration: f64,
    ) -> Self {
        OfdmConfig {
            carrier_freq,
            subcarrier_spacing,
            n_subcarriers,
            n_symbols,
            symbol_duration: 1.0 / subcarrier_spacing + cp_duration,
            cp_duration,
            noise_power: 0.0,
        }
    }

    /// Sets the slow-time symbol period, adjusting the cyclic prefix to match.
    pub fn with_symbol_duration(mut self, symbol_duration: f64) -> Self {
        self.symbol_duration = symbol_duration;
        self.cp_duration = symbol_duration - 1.0 / self.subcarrier_spacing;
        self
    }

    pub fn with_noise_power(mut self, noise_power: f64) -> Self {
        self.noise_power = noise_power;
        self
    }

    pub fn bandwidth(&self) -> f64 {
        self.n_subcarriers as f64 * self.subcarrier_spacing
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq
    }

    /// Range bin size `c / (2 N df)`, m.
    pub fn range_resolution(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.bandwidth())
    }

    /// Doppler bin size `1 / (M T_sym)`, Hz.
    pub fn doppler_resolution(&self) -> f64 {
        1.0 / (self.n_symbols as f64 * self.symbol_duration)
    }

    /// Radial-velocity bin size, m/s.
    pub fn velocity_resolution(&self) -> f64 {
        self.doppler_resolution() * SPEED_OF_LIGHT / (2.0 * self.carrier_freq)
    }

    /// Doppler shift of a target with radial velocity `v_radial` (= d range / dt).
    pub fn doppler_shift(&self, v_radial: f64) -> f64 {
        -2.0 * v_radial * self.carrier_freq / SPEED_OF_LIGHT
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::validation("ofdm", format!("{name} must be positive")))
            }
        };
        positive(self.carrier_freq, "carrier_freq")?;
        positive(self.subcarrier_spacing, "subcarrier_spacing")?;
        if self.n_subcarriers == 0 || self.n_symbols == 0 {
            return Err(Error::validation("ofdm", "dimensions must be non-zero"));
        }
        if !(self.symbol_duration > 1.0 / self.subcarrier_spacing) {
            return Err(Error::validation(
                "ofdm",
                "symbol_duration must exceed 1/subcarrier_spacing",
            ));
        }
        let expected = 1.0 / self.subcarrier_spacing + self.cp_duration;
        if (expected - self.symbol_duration).abs() > 1e-9 * self.symbol_duration {
            return Err(Error::validation(
                "ofdm",
                "symbol_duration must equal 1/subcarrier_spacing + cp_duration",
            ));
        }
        if !(self.noise_power >= 0.0) {
            return Err(Error::validation("ofdm", "noise_power must be >= 0"));
        }
        Ok(())
    }
}

/// Uniform linear array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub n_antennas: usize,
    /// Element spacing, m.
    pub spacing: f64,
    /// Broadside direction in the global frame, radians from +x.
    #[serde(default)]
    pub orientation: f64,
}

impl ArrayConfig {
    pub fn new(n_antennas: usize, spacing: f64, orientation: f64) -> Self {
        ArrayConfig {
            n_antennas,
            spacing,
            orientation,
        }
    }

    /// Half-wavelength array broadside along `orientation`.
    pub fn half_wavelength(n_antennas: usize, wavelength: f64, orientation: f64) -> Self {
        ArrayConfig::new(n_antennas, wavelength / 2.0, orientation)
    }

    pub fn validate(&self, entity: &str) -> Result<()> {
        if self.n_antennas == 0 {
            return Err(Error::validation(entity, "array needs at least one antenna"));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(Error::validation(entity, "array spacing must be positive"));
        }
        if !self.orientation.is_finite() {
            return Err(Error::validation(entity, "array orientation must be finite"));
        }
        Ok(())
    }

    /// Local angle (from broadside) of the global direction `bearing`.
    pub fn local_angle(&self, bearing: f64) -> f64 {
        wrap_angle(bearing - self.orientation)
    }

    /// Global bearing of a local angle.
    pub fn global_bearing(&self, local: f64) -> f64 {
        wrap_angle(self.orientation + local)
    }

    /// Half-power beamwidth at broadside, `0.886 lambda / (N d)` radians.
    pub fn native_beamwidth(&self, wavelength: f64) -> f64 {
        (0.886 * wavelength / (self.n_antennas as f64 * self.spacing)).min(PI)
    }
}

/// Complex grid indexed `[antenna][subcarrier][symbol]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTensor {
    pub data: Array3<Complex64>,
}

/// Sensing echo after known-symbol removal; same layout as [`ChannelTensor`].
#[derive(Debug, Clone, PartialEq)]
pub struct EchoTensor {
    pub data: Array3<Complex64>,
}

macro_rules! tensor_dims {
    ($t:ty) => {
        impl $t {
            pub fn zeros(n_antennas: usize, n_subcarriers: usize, n_symbols: usize) -> Self {
                Self {
                    data: Array3::zeros((n_antennas, n_subcarriers, n_symbols)),
                }
            }

            pub fn n_antennas(&self) -> usize {
                self.data.shape()[0]
            }

            pub fn n_subcarriers(&self) -> usize {
                self.data.shape()[1]
            }

            pub fn n_symbols(&self) -> usize {
                self.data.shape()[2]
            }

            pub fn is_finite(&self) -> bool {
                self.data.iter().all(|c| c.re.is_finite() && c.im.is_finite())
            }

            /// Mean cell power.
            pub fn mean_power(&self) -> f64 {
                let n = self.data.len().max(1) as f64;
                self.data.iter().map(|c| c.norm_sqr()).sum::<f64>() / n
            }
        }
    };
}

tensor_dims!(ChannelTensor);
tensor_dims!(EchoTensor);

/// ULA steering vector; element `n` has phase `-2 pi n d sin(angle) / lambda`.
pub fn steering_vector(array: &ArrayConfig, angle: f64, wavelength: f64) -> Result<Vec<Complex64>> {
    if !(wavelength > 0.0) {
        return Err(Error::arg("wavelength must be positive"));
    }
    if !(angle.abs() <= PI / 2.0) {
        return Err(Error::arg(format!(
            "angle {angle} rad outside the array's field of view"
        )));
    }
    Ok(steering_unchecked(array, angle, wavelength))
}

pub(crate) fn steering_unchecked(array: &ArrayConfig, angle: f64, wavelength: f64) -> Vec<Complex64> {
    let step = -2.0 * PI * array.spacing * angle.sin() / wavelength;
    (0..array.n_antennas)
        .map(|n| Complex64::from_polar(1.0, step * n as f64))
        .collect()
}

/// Transmit power gain of `array` steered to `beam_angle`, seen at `angle`.
/// Peak gain equals the number of elements.
pub fn beam_gain(array: &ArrayConfig, beam_angle: f64, angle: f64, wavelength: f64) -> f64 {
    let n = array.n_antennas as f64;
    let psi = 2.0 * PI * array.spacing * (angle.sin() - beam_angle.sin()) / wavelength;
    let half = psi / 2.0;
    if half.sin().abs() < 1e-12 {
        // On a grating/main lobe the array factor is exactly N.
        return n;
    }
    let af = (n * half).sin() / half.sin();
    af * af / n
}

fn subcarrier_phasors(n: usize, df: f64, tau: f64) -> Vec<Complex64> {
    let step = -2.0 * PI * df * tau;
    (0..n)
        .map(|k| Complex64::from_polar(1.0, step * k as f64))
        .collect()
}

fn symbol_phasors(n: usize, t_sym: f64, f_d: f64) -> Vec<Complex64> {
    let step = 2.0 * PI * f_d * t_sym;
    (0..n)
        .map(|m| Complex64::from_polar(1.0, step * m as f64))
        .collect()
}

/// One propagation path of a synthesized channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathComponent {
    /// Angle of departure relative to the transmit array broadside.
    pub aod: f64,
    pub delay: f64,
    pub gain: Complex64,
    /// Index of the SESP for NLoS paths; `None` for LoS.
    pub sesp: Option<usize>,
}

/// Lists the LoS and first-order NLoS paths from `bs_id` to `ue_id`.
///
/// LoS gain is `lambda / (4 pi d)`; an NLoS path via SESP `s` has gain
/// `rho_s lambda / (4 pi d1 d2)`. Paths leaving behind the array are omitted.
pub fn channel_paths(scene: &Scene, bs_id: usize, ue_id: usize, ofdm: &OfdmConfig) -> Result<Vec<PathComponent>> {
    let bs = scene
        .bs
        .get(bs_id)
        .ok_or_else(|| Error::arg(format!("unknown bs id {bs_id}")))?;
    let ue = scene
        .ues
        .get(ue_id)
        .ok_or_else(|| Error::arg(format!("unknown ue id {ue_id}")))?;
    let lambda = ofdm.wavelength();
    let k0 = lambda / (4.0 * PI);
    let mut paths = Vec::with_capacity(1 + scene.sesps.len());
    let los = ue.position - bs.position;
    let d = los.norm();
    let aod = bs.tx_array.local_angle(los.bearing());
    if aod.abs() < PI / 2.0 && d > 0.0 {
        paths.push(PathComponent {
            aod,
            delay: d / SPEED_OF_LIGHT,
            gain: Complex64::new(k0 / d, 0.0),
            sesp: None,
        });
    }
    for (i, s) in scene.sesps.iter().enumerate() {
        let d1 = s.position.distance(bs.position);
        let d2 = s.position.distance(ue.position);
        if d1 <= 0.0 || d2 <= 0.0 {
            continue;
        }
        let aod = bs.tx_array.local_angle((s.position - bs.position).bearing());
        if aod.abs() >= PI / 2.0 {
            continue;
        }
        paths.push(PathComponent {
            aod,
            delay: (d1 + d2) / SPEED_OF_LIGHT,
            gain: s.reflectivity * (k0 / (d1 * d2)),
            sesp: Some(i),
        });
    }
    Ok(paths)
}

/// Renders a set of paths into a channel tensor (constant across symbols).
pub fn render_paths(paths: &[PathComponent], array: &ArrayConfig, ofdm: &OfdmConfig) -> ChannelTensor {
    let lambda = ofdm.wavelength();
    let (na, nk, nm) = (array.n_antennas, ofdm.n_subcarriers, ofdm.n_symbols);
    let mut per_sc = ndarray::Array2::<Complex64>::zeros((na, nk));
    for p in paths {
        let a = steering_unchecked(array, p.aod, lambda);
        let f = subcarrier_phasors(nk, ofdm.subcarrier_spacing, p.delay);
        for (n, an) in a.iter().enumerate() {
            let ga = p.gain * an;
            for (k, fk) in f.iter().enumerate() {
                per_sc[[n, k]] += ga * fk;
            }
        }
    }
    let mut data = Array3::zeros((na, nk, nm));
    for ((n, k), v) in per_sc.indexed_iter() {
        data.slice_mut(ndarray::s![n, k, ..]).fill(*v);
    }
    ChannelTensor { data }
}

/// Downlink channel from the HU of `bs_id` to `ue_id`: LoS plus one bounce per
/// SESP, static over the frame.
pub fn synthesize_channel(scene: &Scene, bs_id: usize, ue_id: usize, ofdm: &OfdmConfig) -> Result<ChannelTensor> {
    let paths = channel_paths(scene, bs_id, ue_id, ofdm)?;
    Ok(render_paths(&paths, &scene.bs[bs_id].tx_array, ofdm))
}

/// Point reflector as seen by a monostatic radar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EchoComponent {
    /// Angle relative to the receive array broadside.
    pub angle: f64,
    pub range: f64,
    pub doppler: f64,
    pub amplitude: Complex64,
}

/// Lists the echo components (targets then SESP clutter) for one beam.
pub fn echo_components(scene: &Scene, bs_id: usize, ofdm: &OfdmConfig, beam_angle: f64) -> Result<Vec<EchoComponent>> {
    let bs = scene
        .bs
        .get(bs_id)
        .ok_or_else(|| Error::arg(format!("unknown bs id {bs_id}")))?;
    if !bs.on {
        return Err(Error::State(format!("bs {bs_id} is switched off")));
    }
    let lambda = ofdm.wavelength();
    let kappa = bs.radar_constant;
    let mut out = Vec::new();
    let mut push = |pos: Point, vel: Point, reflect: Complex64| {
        let rel = pos - bs.position;
        let r = rel.norm();
        if r <= 0.0 {
            return;
        }
        let bearing = rel.bearing();
        let tx_angle = bs.tx_array.local_angle(bearing);
        let rx_angle = bs.rx_array.local_angle(bearing);
        if tx_angle.abs() >= PI / 2.0 || rx_angle.abs() >= PI / 2.0 {
            return;
        }
        let g = beam_gain(&bs.tx_array, beam_angle, tx_angle, lambda);
        let v_r = vel.dot(rel * (1.0 / r));
        out.push(EchoComponent {
            angle: rx_angle,
            range: r,
            doppler: ofdm.doppler_shift(v_r),
            amplitude: reflect * (kappa * g.sqrt() / (r * r)),
        });
    };
    for t in &scene.targets {
        push(t.position, t.velocity, Complex64::new(t.rcs.sqrt(), 0.0));
    }
    for s in &scene.sesps {
        push(s.position, Point::ORIGIN, s.reflectivity);
    }
    Ok(out)
}

/// Renders echo components into a noiseless tensor on the receive array.
pub fn render_echo(components: &[EchoComponent], rx: &ArrayConfig, ofdm: &OfdmConfig) -> EchoTensor {
    let lambda = ofdm.wavelength();
    let (na, nk, nm) = (rx.n_antennas, ofdm.n_subcarriers, ofdm.n_symbols);
    let prepared: Vec<_> = components
        .iter()
        .map(|c| {
            (
                steering_unchecked(rx, c.angle, lambda),
                subcarrier_phasors(nk, ofdm.subcarrier_spacing, 2.0 * c.range / SPEED_OF_LIGHT),
                symbol_phasors(nm, ofdm.symbol_duration, c.doppler),
                c.amplitude,
            )
        })
        .collect();
    let mut data = Array3::<Complex64>::zeros((na, nk, nm));
    let slab = nk * nm;
    if let Some(flat) = data.as_slice_mut() {
        par::for_each_chunk_mut(flat, slab, |n, chunk| {
            for (a, f, s, amp) in &prepared {
                let ga = amp * a[n];
                for (k, fk) in f.iter().enumerate() {
                    let gk = ga * fk;
                    let row = &mut chunk[k * nm..(k + 1) * nm];
                    for (cell, sm) in row.iter_mut().zip(s) {
                        *cell += gk * sm;
                    }
                }
            }
        });
    }
    EchoTensor { data }
}

/// Monostatic echo at the RU of `bs_id` for a transmit beam at `beam_angle`
/// (local to the HU array): Doppler-shifted targets, zero-Doppler SESP
/// clutter, and white noise of variance `noise_power * df` per cell.
pub fn synthesize_echo(scene: &Scene, bs_id: usize, ofdm: &OfdmConfig, beam_angle: f64, seed: u64) -> Result<EchoTensor> {
    if !(beam_angle.abs() < PI / 2.0) {
        return Err(Error::arg("beam angle outside scan range"));
    }
    let comps = echo_components(scene, bs_id, ofdm, beam_angle)?;
    let mut echo = render_echo(&comps, &scene.bs[bs_id].rx_array, ofdm);
    let variance = ofdm.noise_power * ofdm.subcarrier_spacing;
    if variance > 0.0 {
        add_noise_variance(&mut echo.data, variance, seed);
    }
    Ok(echo)
}

fn add_noise_variance(data: &mut Array3<Complex64>, variance: f64, seed: u64) {
    let slab = data.shape()[1] * data.shape()[2];
    if let Some(flat) = data.as_slice_mut() {
        par::for_each_chunk_mut(flat, slab.max(1), |n, chunk| {
            let mut r = rng::stage_rng(seed, "noise", n as u64);
            for c in chunk.iter_mut() {
                *c += rng::complex_normal(&mut r, variance);
            }
        });
    }
}

/// Adds white noise so that mean signal power over noise power equals
/// `10^(snr_db/10)`. `snr_db = +inf` leaves the tensor unchanged; an all-zero
/// tensor is treated as having unit reference power.
pub fn add_noise(t: &EchoTensor, snr_db: f64, seed: u64) -> EchoTensor {
    let mut out = t.clone();
    if snr_db == f64::INFINITY {
        return out;
    }
    let p = t.mean_power();
    let reference = if p > 0.0 { p } else { 1.0 };
    let variance = reference / 10f64.powf(snr_db / 10.0);
    add_noise_variance(&mut out.data, variance, seed);
    out
}

/// Sums the slow-time (symbol) axis; handy for static-channel processing.
pub fn first_symbol(t: &ChannelTensor) -> ndarray::Array2<Complex64> {
    t.data.index_axis(Axis(2), 0).to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::test_support::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn steering_broadside_and_thirty_degrees() {
        let lambda = 0.1;
        let arr = ArrayConfig::half_wavelength(2, lambda, 0.0);
        let v = steering_vector(&arr, 0.0, lambda).unwrap();
        assert_abs_diff_eq!(v[0].re, 1.0);
        assert_abs_diff_eq!(v[1].re, 1.0, epsilon = 1e-15);
        let v = steering_vector(&arr, 30f64.to_radians(), lambda).unwrap();
        // -2 pi (0.5) sin 30 = -pi/2
        assert_abs_diff_eq!(v[1].re, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v[1].im, -1.0, epsilon = 1e-12);
        assert!(steering_vector(&arr, 0.0, 0.0).is_err());
        assert!(steering_vector(&arr, 0.0, -1.0).is_err());
    }

    #[test]
    fn steering_conjugate_symmetry() {
        let arr = ArrayConfig::new(7, 0.013, 0.3);
        for &th in &[0.1, 0.4, 1.2] {
            let p = steering_vector(&arr, th, 0.05).unwrap();
            let m = steering_vector(&arr, -th, 0.05).unwrap();
            for (a, b) in p.iter().zip(&m) {
                assert_abs_diff_eq!(a.re, b.re, epsilon = 1e-12);
                assert_abs_diff_eq!(a.im, -b.im, epsilon = 1e-12);
                assert_abs_diff_eq!(a.norm(), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn beam_gain_peak_and_null() {
        let lambda = 0.05;
        let arr = ArrayConfig::half_wavelength(8, lambda, 0.0);
        assert_abs_diff_eq!(beam_gain(&arr, 0.2, 0.2, lambda), 8.0, epsilon = 1e-9);
        // first null at sin = 2/N for half-wavelength spacing
        let null = (2.0f64 / 8.0).asin();
        assert!(beam_gain(&arr, 0.0, null, lambda) < 1e-20);
        // brute-force array factor
        let a = steering_vector(&arr, 0.3, lambda).unwrap();
        let w = steering_vector(&arr, -0.1, lambda).unwrap();
        let af: Complex64 = a.iter().zip(&w).map(|(x, y)| x * y.conj()).sum();
        assert_abs_diff_eq!(beam_gain(&arr, -0.1, 0.3, lambda), af.norm_sqr() / 8.0, epsilon = 1e-12);
    }

    #[test]
    fn los_only_channel_is_rank_one_per_subcarrier() {
        let scene = minimal_scene_with_ue(Point::new(20.0, 5.0));
        let ofdm = OfdmConfig::new(26e9, 1e6, 16, 2, 1e-7);
        let ch = synthesize_channel(&scene, 0, 0, &ofdm).unwrap();
        // every column [antenna] is a scalar multiple of the first
        let c0: Vec<_> = (0..ch.n_antennas()).map(|n| ch.data[[n, 0, 0]]).collect();
        for k in 1..ch.n_subcarriers() {
            let ratio = ch.data[[0, k, 0]] / c0[0];
            for (n, &c) in c0.iter().enumerate() {
                let d = ch.data[[n, k, 0]] - c * ratio;
                assert!(d.norm() < 1e-15);
            }
        }
    }

    #[test]
    fn nlos_delay_matches_geometry() {
        let mut scene = minimal_scene_with_ue(Point::new(20.0, 0.0));
        scene.sesps.push(crate::scene::ScatterPoint {
            position: Point::new(8.0, 9.0),
            reflectivity: Complex64::new(0.7, 0.2),
        });
        let ofdm = OfdmConfig::new(26e9, 2e6, 32, 1, 1e-7);
        let los = synthesize_channel(&{
            let mut s = scene.clone();
            s.sesps.clear();
            s
        }, 0, 0, &ofdm)
        .unwrap();
        let full = synthesize_channel(&scene, 0, 0, &ofdm).unwrap();
        let nlos = &full.data - &los.data;
        let s = scene.sesps[0].position;
        let tau = (s.distance(scene.bs[0].position) + s.distance(scene.ues[0].position)) / SPEED_OF_LIGHT;
        // consecutive subcarriers on antenna 0 differ by exp(-j 2 pi df tau)
        let expect = Complex64::from_polar(1.0, -2.0 * PI * ofdm.subcarrier_spacing * tau);
        for k in 1..32 {
            let ratio = nlos[[0, k, 0]] / nlos[[0, k - 1, 0]];
            assert!((ratio - expect).norm() < 1e-9, "k={k}");
        }
    }

    #[test]
    fn doubling_reflectivity_doubles_nlos_part() {
        let mut scene = minimal_scene_with_ue(Point::new(15.0, -3.0));
        for (i, p) in [(5.0, 6.0), (9.0, -7.0), (12.0, 4.0)].iter().enumerate() {
            scene.sesps.push(crate::scene::ScatterPoint {
                position: Point::new(p.0, p.1),
                reflectivity: Complex64::new(0.3 + 0.1 * i as f64, -0.2),
            });
        }
        let ofdm = OfdmConfig::new(26e9, 2e6, 16, 1, 1e-7);
        let mut los_scene = scene.clone();
        los_scene.sesps.clear();
        let los = synthesize_channel(&los_scene, 0, 0, &ofdm).unwrap();
        let one = &synthesize_channel(&scene, 0, 0, &ofdm).unwrap().data - &los.data;
        for s in &mut scene.sesps {
            s.reflectivity *= 2.0;
        }
        let two = &synthesize_channel(&scene, 0, 0, &ofdm).unwrap().data - &los.data;
        for (a, b) in one.iter().zip(two.iter()) {
            assert!((a * 2.0 - b).norm() <= 1e-15 * b.norm().max(1e-30) + 1e-18);
        }
    }

    #[test]
    fn empty_echo_is_zero() {
        let scene = minimal_scene();
        let ofdm = OfdmConfig::new(5.5e9, 120e3, 16, 8, 1e-6);
        let e = synthesize_echo(&scene, 0, &ofdm, 0.0, 1).unwrap();
        assert!(e.data.iter().all(|c| *c == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn echo_from_switched_off_bs_is_an_error() {
        let mut scene = minimal_scene();
        scene.bs[0].on = false;
        let ofdm = OfdmConfig::new(5.5e9, 120e3, 16, 8, 1e-6);
        assert!(matches!(
            synthesize_echo(&scene, 0, &ofdm, 0.0, 1),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn doppler_phase_slope_matches_regression() {
        // v_radial = +10 m/s at 5.5 GHz -> |f_D| = 366.9 Hz
        let mut scene = minimal_scene();
        scene.targets.push(target_at(Point::new(40.0, 0.0), Point::new(-10.0, 0.0)));
        let ofdm = OfdmConfig::new(5.5e9, 120e3, 4, 64, 1e-6);
        let e = synthesize_echo(&scene, 0, &ofdm, 0.0, 0).unwrap();
        let f_d = 2.0 * 10.0 * 5.5e9 / SPEED_OF_LIGHT;
        assert!((f_d - 366.9).abs() < 0.05);
        // least-squares slope of unwrapped phase across symbols
        let phases: Vec<f64> = {
            let mut acc = 0.0;
            let mut prev = e.data[[0, 0, 0]].arg();
            let mut out = vec![prev];
            for m in 1..64 {
                let p = e.data[[0, 0, m]].arg();
                let mut d = p - prev;
                while d > PI {
                    d -= 2.0 * PI;
                }
                while d < -PI {
                    d += 2.0 * PI;
                }
                acc += d;
                out.push(out[0] + acc);
                prev = p;
            }
            out
        };
        let n = phases.len() as f64;
        let mx = (n - 1.0) / 2.0;
        let my = phases.iter().sum::<f64>() / n;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (m, p) in phases.iter().enumerate() {
            sxy += (m as f64 - mx) * (p - my);
            sxx += (m as f64 - mx).powi(2);
        }
        let slope = sxy / sxx;
        assert_abs_diff_eq!(slope, 2.0 * PI * f_d * ofdm.symbol_duration, epsilon = 1e-9);
    }

    #[test]
    fn clutter_has_zero_doppler() {
        let mut scene = minimal_scene();
        scene.sesps.push(crate::scene::ScatterPoint {
            position: Point::new(30.0, 7.0),
            reflectivity: Complex64::new(0.4, 0.9),
        });
        let ofdm = OfdmConfig::new(5.5e9, 120e3, 8, 16, 1e-6);
        let e = synthesize_echo(&scene, 0, &ofdm, 0.0, 0).unwrap();
        for n in 0..e.n_antennas() {
            for k in 0..8 {
                for m in 1..16 {
                    assert_eq!(e.data[[n, k, m]], e.data[[n, k, 0]]);
                }
            }
        }
    }

    #[test]
    fn echo_superposition() {
        let ofdm = OfdmConfig::new(5.5e9, 120e3, 16, 16, 1e-6);
        let t1 = target_at(Point::new(40.0, 3.0), Point::new(-2.0, 1.0));
        let t2 = target_at(Point::new(25.0, -6.0), Point::new(4.0, 0.0));
        let mut s1 = minimal_scene();
        s1.targets.push(t1.clone());
        let mut s2 = minimal_scene();
        s2.targets.push(t2.clone());
        let mut both = minimal_scene();
        both.targets.extend([t1, t2]);
        let e1 = synthesize_echo(&s1, 0, &ofdm, 0.1, 0).unwrap();
        let e2 = synthesize_echo(&s2, 0, &ofdm, 0.1, 0).unwrap();
        let eb = synthesize_echo(&both, 0, &ofdm, 0.1, 0).unwrap();
        let scale = eb.data.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let dev = (&e1.data + &e2.data - &eb.data)
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max);
        assert!(dev < 1e-12 * scale);
    }

    #[test]
    fn add_noise_infinite_snr_and_determinism() {
        let t = EchoTensor::zeros(4, 100, 250);
        assert_eq!(add_noise(&t, f64::INFINITY, 3), t);
        let a = add_noise(&t, 10.0, 3);
        let b = add_noise(&t, 10.0, 3);
        assert_eq!(a, b);
        assert_ne!(a, add_noise(&t, 10.0, 4));
        // 1e5 cells of pure noise: sample variance within 5% of 0.1
        let v = a.mean_power();
        assert!((v - 0.1).abs() < 0.005, "{v}");
    }

    #[test]
    fn add_noise_scales_with_signal_power() {
        let mut t = EchoTensor::zeros(2, 200, 250);
        t.data.fill(Complex64::new(3.0, 4.0));
        let noisy = add_noise(&t, 20.0, 9);
        let noise = &noisy.data - &t.data;
        let p = noise.iter().map(|c| c.norm_sqr()).sum::<f64>() / noise.len() as f64;
        assert!((p / 0.25 - 1.0).abs() < 0.05, "{p}");
    }

    #[test]
    fn ofdm_resolutions() {
        let o = OfdmConfig::new(5.5e9, 820e6 / 4096.0, 4096, 64, 0.0);
        assert_abs_diff_eq!(o.range_resolution(), SPEED_OF_LIGHT / (2.0 * 820e6), epsilon = 1e-15);
        let lambda = SPEED_OF_LIGHT / 5.5e9;
        let o = o.with_symbol_duration(lambda / (2.0 * 64.0 * 0.42));
        assert_abs_diff_eq!(o.velocity_resolution(), 0.42, epsilon = 1e-12);
        o.validate().unwrap();
        let bad = OfdmConfig { symbol_duration: 1e-9, ..o };
        assert!(bad.validate().is_err());
    }
}

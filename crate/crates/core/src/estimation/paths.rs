//! Greedy sparse path extraction over an angle x delay dictionary.
//!
//! Each iteration correlates the residual with every dictionary atom
//! `a(theta) (x) exp(-j 2 pi k df tau)`, refines the strongest atom off-grid by
//! 3-point parabolic interpolation in each axis, then re-fits all selected
//! gains jointly by least squares (orthogonal matching pursuit). The residual
//! norm therefore never increases.

use super::music::parabolic_offset;
use crate::error::{Error, Result};
use crate::par;
use crate::phy::{steering_unchecked, ArrayConfig, ChannelTensor, OfdmConfig};
use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathOrder {
    LoS,
    NLoS1,
    /// No reference delay was available to decide.
    Unlabeled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathEstimate {
    /// Angle of departure from the array broadside, radians.
    pub aod: f64,
    /// Propagation delay in `[0, 1/df)`, s.
    pub delay: f64,
    pub gain: Complex64,
    pub order: PathOrder,
}

/// Dictionary parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSearch {
    /// Angle grid step, radians.
    pub angle_step: f64,
    /// Delay grid oversampling relative to `1/bandwidth`.
    pub delay_oversample: usize,
    /// Largest |aod| searched, radians.
    pub max_angle: f64,
}

impl Default for PathSearch {
    fn default() -> Self {
        PathSearch {
            angle_step: 0.5f64.to_radians(),
            delay_oversample: 2,
            max_angle: 89.5f64.to_radians(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathExtraction {
    pub paths: Vec<PathEstimate>,
    /// Residual energy over input energy after each iteration (index 0 is 1).
    pub residual_history: Vec<f64>,
}

struct Atom {
    steer: Vec<Complex64>,
    freq: Vec<Complex64>,
}

impl Atom {
    fn new(array: &ArrayConfig, lambda: f64, df: f64, nk: usize, aod: f64, delay: f64) -> Self {
        let step = -2.0 * PI * df * delay;
        Atom {
            steer: steering_unchecked(array, aod, lambda),
            freq: (0..nk).map(|k| Complex64::from_polar(1.0, step * k as f64)).collect(),
        }
    }

    fn inner(&self, y: &Array2<Complex64>) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (n, s) in self.steer.iter().enumerate() {
            let mut row = Complex64::new(0.0, 0.0);
            for (k, f) in self.freq.iter().enumerate() {
                row += f.conj() * y[[n, k]];
            }
            acc += s.conj() * row;
        }
        acc
    }

    fn cross(&self, other: &Atom) -> Complex64 {
        let s: Complex64 = self.steer.iter().zip(&other.steer).map(|(a, b)| a.conj() * b).sum();
        let f: Complex64 = self.freq.iter().zip(&other.freq).map(|(a, b)| a.conj() * b).sum();
        s * f
    }
}

/// Correlation magnitudes `|<atom(theta_i, tau_j), y>|` over the full grid.
fn correlate(
    y: &Array2<Complex64>,
    array: &ArrayConfig,
    lambda: f64,
    angles: &[f64],
    n_delay: usize,
) -> Vec<Vec<f64>> {
    let (na, nk) = y.dim();
    let fft = FftPlanner::<f64>::new().plan_fft_inverse(n_delay);
    par::map_slice(angles, |&theta| {
        let a = steering_unchecked(array, theta, lambda);
        let mut buf = vec![Complex64::new(0.0, 0.0); n_delay];
        for k in 0..nk {
            let mut b = Complex64::new(0.0, 0.0);
            for n in 0..na {
                b += a[n].conj() * y[[n, k]];
            }
            buf[k] = b;
        }
        // sum_k b_k exp(+j 2 pi k j / n_delay)
        fft.process(&mut buf);
        buf.iter().map(|c| c.norm()).collect()
    })
}

fn add_atom(y: &mut Array2<Complex64>, atom: &Atom, gain: Complex64) {
    for (n, s) in atom.steer.iter().enumerate() {
        let gs = gain * s;
        for (k, f) in atom.freq.iter().enumerate() {
            y[[n, k]] += gs * f;
        }
    }
}

/// Joint least-squares gains for `atoms`, the residual and its energy.
fn fit(y: &Array2<Complex64>, atoms: &[Atom]) -> Option<(Vec<Complex64>, Array2<Complex64>, f64)> {
    let n = atoms.len();
    let gram = DMatrix::from_fn(n, n, |i, j| atoms[i].cross(&atoms[j]));
    let rhs = DVector::from_iterator(n, atoms.iter().map(|a| a.inner(y)));
    let sol = gram.lu().solve(&rhs)?;
    if !sol.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
        return None;
    }
    let gains: Vec<Complex64> = sol.iter().copied().collect();
    let mut residual = y.clone();
    for (atom, g) in atoms.iter().zip(&gains) {
        add_atom(&mut residual, atom, -g);
    }
    let r = residual.iter().map(|c| c.norm_sqr()).sum();
    Some((gains, residual, r))
}

/// Repeats the 3-point parabolic step on a shrinking stencil so grid-induced
/// bias (the angle grid is uniform in theta, the array response in sin theta)
/// does not survive into the estimate.
fn polish(
    y: &Array2<Complex64>,
    array: &ArrayConfig,
    lambda: f64,
    df: f64,
    (mut aod, mut delay): (f64, f64),
    (mut ha, mut hd): (f64, f64),
) -> (f64, f64) {
    let nk = y.ncols();
    let f = |a: f64, d: f64| Atom::new(array, lambda, df, nk, a, d).inner(y).norm();
    for _ in 0..6 {
        let c = f(aod, delay);
        aod += parabolic_offset(f(aod - ha, delay), c, f(aod + ha, delay)) * ha;
        let c = f(aod, delay);
        delay += parabolic_offset(f(aod, delay - hd), c, f(aod, delay + hd)) * hd;
        ha /= 4.0;
        hd /= 4.0;
    }
    (aod, delay)
}

/// Extracts up to `max_paths` paths with the default dictionary.
pub fn extract_paths(
    channel: &ChannelTensor,
    array: &ArrayConfig,
    ofdm: &OfdmConfig,
    max_paths: usize,
    stop_threshold: f64,
) -> Result<Vec<PathEstimate>> {
    extract_paths_with(channel, array, ofdm, max_paths, stop_threshold, &PathSearch::default())
}

pub fn extract_paths_with(
    channel: &ChannelTensor,
    array: &ArrayConfig,
    ofdm: &OfdmConfig,
    max_paths: usize,
    stop_threshold: f64,
    search: &PathSearch,
) -> Result<Vec<PathEstimate>> {
    Ok(extract_paths_traced(channel, array, ofdm, max_paths, stop_threshold, search)?.paths)
}

/// Path extraction that also reports the residual trajectory.
///
/// Stops once residual energy / input energy drops below `stop_threshold` or
/// `max_paths` atoms have been selected. Paths come back sorted by |gain|,
/// strongest first, with [`PathOrder::Unlabeled`]; see [`label_paths`].
pub fn extract_paths_traced(
    channel: &ChannelTensor,
    array: &ArrayConfig,
    ofdm: &OfdmConfig,
    max_paths: usize,
    stop_threshold: f64,
    search: &PathSearch,
) -> Result<PathExtraction> {
    if max_paths == 0 {
        return Err(Error::arg("max_paths must be >= 1"));
    }
    if channel.n_antennas() != array.n_antennas || channel.n_subcarriers() != ofdm.n_subcarriers {
        return Err(Error::DimensionMismatch {
            expected: format!("{} x {}", array.n_antennas, ofdm.n_subcarriers),
            got: format!("{} x {}", channel.n_antennas(), channel.n_subcarriers()),
        });
    }
    if !(search.angle_step > 0.0) || search.delay_oversample == 0 {
        return Err(Error::arg("invalid dictionary parameters"));
    }
    let lambda = ofdm.wavelength();
    let df = ofdm.subcarrier_spacing;
    let nk = ofdm.n_subcarriers;
    // static channel: average over symbols
    let y: Array2<Complex64> = channel
        .data
        .mean_axis(Axis(2))
        .expect("at least one symbol");
    let energy: f64 = y.iter().map(|c| c.norm_sqr()).sum();
    let mut history = vec![1.0];
    if energy == 0.0 {
        return Ok(PathExtraction {
            paths: Vec::new(),
            residual_history: history,
        });
    }

    let n_angles = (2.0 * search.max_angle / search.angle_step).floor() as usize + 1;
    let angles: Vec<f64> = (0..n_angles)
        .map(|i| -search.max_angle + i as f64 * search.angle_step)
        .collect();
    let n_delay = nk * search.delay_oversample;
    let delay_step = 1.0 / (df * n_delay as f64);
    let period = 1.0 / df;

    let mut atoms: Vec<Atom> = Vec::new();
    let mut params: Vec<(f64, f64)> = Vec::new();
    let mut gains: Vec<Complex64> = Vec::new();
    let mut residual = y.clone();
    let mut residual_energy = energy;

    while atoms.len() < max_paths && *history.last().unwrap() >= stop_threshold {
        let corr = correlate(&residual, array, lambda, &angles, n_delay);
        let (mut bi, mut bj, mut bv) = (0, 0, -1.0);
        for (i, row) in corr.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if *v > bv {
                    bv = *v;
                    bi = i;
                    bj = j;
                }
            }
        }
        let angle_off = if bi > 0 && bi + 1 < n_angles {
            parabolic_offset(corr[bi - 1][bj], bv, corr[bi + 1][bj])
        } else {
            0.0
        };
        let delay_off = parabolic_offset(
            corr[bi][(bj + n_delay - 1) % n_delay],
            bv,
            corr[bi][(bj + 1) % n_delay],
        );
        let aod = angles[bi] + angle_off * search.angle_step;
        let delay = (bj as f64 + delay_off) * delay_step;
        let (aod, delay) = polish(
            &residual,
            array,
            lambda,
            df,
            (aod, delay),
            (search.angle_step / 2.0, delay_step / 2.0),
        );
        let aod = aod.clamp(-search.max_angle, search.max_angle);
        let delay = delay.rem_euclid(period);
        atoms.push(Atom::new(array, lambda, df, nk, aod, delay));
        params.push((aod, delay));
        let Some((g, res, r)) = fit(&y, &atoms).filter(|f| f.2 <= residual_energy) else {
            // the new atom did not enlarge the span
            atoms.pop();
            params.pop();
            break;
        };
        (gains, residual, residual_energy) = (g, res, r);

        // cyclic re-polish of every atom against the others, kept only when
        // it lowers the residual
        for _ in 0..2 {
            let mut trial_atoms = Vec::with_capacity(atoms.len());
            let mut trial_params = params.clone();
            for i in 0..atoms.len() {
                let mut own = residual.clone();
                add_atom(&mut own, &atoms[i], gains[i]);
                let p = polish(
                    &own,
                    array,
                    lambda,
                    df,
                    params[i],
                    (search.angle_step / 8.0, delay_step / 8.0),
                );
                let p = (p.0.clamp(-search.max_angle, search.max_angle), p.1.rem_euclid(period));
                trial_params[i] = p;
                trial_atoms.push(Atom::new(array, lambda, df, nk, p.0, p.1));
            }
            match fit(&y, &trial_atoms) {
                Some((g, res, r)) if r < residual_energy => {
                    atoms = trial_atoms;
                    params = trial_params;
                    (gains, residual, residual_energy) = (g, res, r);
                }
                _ => break,
            }
        }
        history.push(residual_energy / energy);
    }

    let mut paths: Vec<PathEstimate> = params
        .iter()
        .zip(&gains)
        .map(|(&(aod, delay), &gain)| PathEstimate {
            aod,
            delay,
            gain,
            order: PathOrder::Unlabeled,
        })
        .collect();
    paths.sort_by(|a, b| b.gain.norm().total_cmp(&a.gain.norm()));
    Ok(PathExtraction {
        paths,
        residual_history: history,
    })
}

/// Labels the strongest path LoS when its delay is within `delay_tolerance`
/// of `los_delay`; every other path becomes first-order NLoS.
pub fn label_paths(paths: &mut [PathEstimate], los_delay: f64, delay_tolerance: f64) {
    for (i, p) in paths.iter_mut().enumerate() {
        p.order = if i == 0 && (p.delay - los_delay).abs() <= delay_tolerance {
            PathOrder::LoS
        } else {
            PathOrder::NLoS1
        };
    }
}

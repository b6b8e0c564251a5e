//! Subspace and conventional angle spectra for uniform linear arrays.

use crate::error::{Error, Result};
use crate::par;
use crate::phy::{steering_unchecked, ArrayConfig};
use nalgebra::DMatrix;
use ndarray::Array2;
use num_complex::Complex64;

/// Forward-backward averaged sample covariance of `[antenna][snapshot]` data.
pub fn covariance(snapshots: &Array2<Complex64>) -> DMatrix<Complex64> {
    let (m, k) = snapshots.dim();
    let mut r = DMatrix::<Complex64>::zeros(m, m);
    for s in 0..k {
        for i in 0..m {
            let xi = snapshots[[i, s]];
            for j in 0..m {
                r[(i, j)] += xi * snapshots[[j, s]].conj();
            }
        }
    }
    if k > 0 {
        r /= Complex64::new(k as f64, 0.0);
    }
    // J conj(R) J: reverse both indices
    let mut fb = r.clone();
    for i in 0..m {
        for j in 0..m {
            fb[(i, j)] = 0.5 * (r[(i, j)] + r[(m - 1 - i, m - 1 - j)].conj());
        }
    }
    fb
}

/// MUSIC pseudo-spectrum `1 / ||E_n^H a(theta)||^2` on `angle_grid`
/// (radians from broadside).
pub fn music_spectrum(
    snapshots: &Array2<Complex64>,
    array: &ArrayConfig,
    wavelength: f64,
    n_sources: usize,
    angle_grid: &[f64],
) -> Result<Vec<f64>> {
    let (m, k) = snapshots.dim();
    if m != array.n_antennas {
        return Err(Error::DimensionMismatch {
            expected: format!("{} antennas", array.n_antennas),
            got: format!("{m}"),
        });
    }
    if n_sources == 0 || n_sources >= m {
        return Err(Error::arg(format!(
            "n_sources must lie in 1..{m}, got {n_sources}"
        )));
    }
    if k < n_sources {
        return Err(Error::arg("fewer snapshots than sources"));
    }
    if !(wavelength > 0.0) {
        return Err(Error::arg("wavelength must be positive"));
    }
    let eig = covariance(snapshots).symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let lmax = eig.eigenvalues[order[m - 1]];
    let tol = lmax * 1e-10 * m as f64;
    let rank = if lmax > 0.0 {
        eig.eigenvalues.iter().filter(|&&l| l > tol).count()
    } else {
        0
    };
    if rank < n_sources {
        return Err(Error::NumericalRank { rank, n_sources });
    }
    let noise: Vec<Vec<Complex64>> = order[..m - n_sources]
        .iter()
        .map(|&c| eig.eigenvectors.column(c).iter().copied().collect())
        .collect();
    Ok(par::map_slice(angle_grid, |&theta| {
        let a = steering_unchecked(array, theta, wavelength);
        let denom: f64 = noise
            .iter()
            .map(|e| {
                let dot: Complex64 = e.iter().zip(&a).map(|(ei, ai)| ei.conj() * ai).sum();
                dot.norm_sqr()
            })
            .sum();
        1.0 / denom.max(f64::MIN_POSITIVE)
    }))
}

/// Conventional (delay-and-sum) beamscan spectrum `a^H R a / N^2`.
pub fn beamscan_spectrum(snapshots: &Array2<Complex64>, array: &ArrayConfig, wavelength: f64, angle_grid: &[f64]) -> Vec<f64> {
    let r = covariance(snapshots);
    let n = array.n_antennas as f64;
    par::map_slice(angle_grid, |&theta| {
        let a = steering_unchecked(array, theta, wavelength);
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..a.len() {
            for j in 0..a.len() {
                acc += a[i].conj() * r[(i, j)] * a[j];
            }
        }
        acc.re / (n * n)
    })
}

/// Vertex offset of the parabola through three equally spaced samples,
/// clamped to half a step.
pub fn parabolic_offset(left: f64, center: f64, right: f64) -> f64 {
    let denom = left - 2.0 * center + right;
    if denom.abs() < f64::MIN_POSITIVE || !denom.is_finite() {
        return 0.0;
    }
    (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
}

/// A spectral peak with sub-grid refinement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub index: usize,
    /// Refined position in the grid's units.
    pub position: f64,
    pub value: f64,
}

/// The `count` strongest strict local maxima of `spectrum` sampled on a
/// uniform `grid`, refined by parabolic interpolation and returned in
/// descending strength.
pub fn find_peaks(spectrum: &[f64], grid: &[f64], count: usize) -> Vec<Peak> {
    let n = spectrum.len();
    if n < 3 || grid.len() != n {
        return Vec::new();
    }
    let step = grid[1] - grid[0];
    let mut peaks: Vec<Peak> = (1..n - 1)
        .filter(|&i| spectrum[i] > spectrum[i - 1] && spectrum[i] >= spectrum[i + 1])
        .map(|i| {
            let off = parabolic_offset(spectrum[i - 1], spectrum[i], spectrum[i + 1]);
            Peak {
                index: i,
                position: grid[i] + off * step,
                value: spectrum[i],
            }
        })
        .collect();
    peaks.sort_by(|a, b| b.value.total_cmp(&a.value).then(a.index.cmp(&b.index)));
    peaks.truncate(count);
    peaks
}

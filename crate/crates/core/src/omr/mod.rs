//! Object material recognition: Born forward operator, group-sparse contrast
//! estimation, conversion to permittivity and conductivity, and K-means
//! material clustering.
//!
//! The model is 2D scalar TM with time convention `e^{+j omega t}`, so the
//! outgoing Green's function is `(-j/4) H0^(2)(k r)` and a lossy material has
//! `Im chi < 0`.

mod hankel;
mod kmeans;
mod spg;

pub use hankel::{bessel_j0_y0, hankel2_0};
pub use kmeans::{cluster_materials, cluster_purity, Clustering};
pub use spg::{estimate_contrast, log_tau_grid, project_group_l1, tau_sweep, SpgOptions, SpgResult, TauPoint};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::scene::{MaterialGrid, ProbeConfig};
use crate::{par, rng, SPEED_OF_LIGHT, VACUUM_PERMITTIVITY};
use ndarray::{Array1, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Probes must stay at least this many cells outside the grid.
pub const MIN_STANDOFF_CELLS: f64 = 2.0;

/// Complex contrast per grid cell, `chi = (eps_r - 1) - j sigma / (omega eps0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastVector {
    pub chi: Vec<Complex64>,
}

impl ContrastVector {
    pub fn zeros(n: usize) -> Self {
        ContrastVector {
            chi: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn len(&self) -> usize {
        self.chi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chi.is_empty()
    }

    /// Sum over cells of `|chi_g|`, the 2-norm of each (Re, Im) pair.
    pub fn mixed_norm(&self) -> f64 {
        mixed_norm(&self.chi)
    }

    /// Cells with `|chi_g|` at least `rel_threshold` times the largest.
    pub fn support(&self, rel_threshold: f64) -> Vec<usize> {
        let max = self.chi.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if max == 0.0 {
            return Vec::new();
        }
        (0..self.chi.len())
            .filter(|&g| self.chi[g].norm() >= rel_threshold * max)
            .collect()
    }
}

pub(crate) fn mixed_norm(x: &[Complex64]) -> f64 {
    x.iter().map(|c| c.norm()).sum()
}

/// Probe and grid geometry of an operator.
#[derive(Debug, Clone, PartialEq)]
pub struct BornGeometry {
    pub origin: Point,
    pub cell_size: f64,
    pub nx: usize,
    pub ny: usize,
    pub tx: Vec<Point>,
    pub rx: Vec<Point>,
    pub freqs: Vec<f64>,
}

impl BornGeometry {
    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn n_measurements(&self) -> usize {
        self.tx.len() * self.rx.len() * self.freqs.len()
    }

    /// Row of measurement `(t, r, f)`; frequency varies fastest.
    pub fn row(&self, t: usize, r: usize, f: usize) -> usize {
        (t * self.rx.len() + r) * self.freqs.len() + f
    }

    fn cell_center(&self, g: usize) -> Point {
        Point::new(
            self.origin.x + ((g % self.nx) as f64 + 0.5) * self.cell_size,
            self.origin.y + ((g / self.nx) as f64 + 0.5) * self.cell_size,
        )
    }
}

/// Linear map from cell contrast to scattered field at every (tx, rx, freq).
#[derive(Debug, Clone, PartialEq)]
pub struct BornOperator {
    pub matrix: Array2<Complex64>,
    pub geometry: BornGeometry,
}

impl BornOperator {
    pub fn n_measurements(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_cells(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn apply(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if x.len() != self.n_cells() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} cells", self.n_cells()),
                got: format!("{}", x.len()),
            });
        }
        Ok(self.matrix.dot(&Array1::from(x.to_vec())).to_vec())
    }

    /// `A^H y`.
    pub fn adjoint(&self, y: &[Complex64]) -> Result<Vec<Complex64>> {
        if y.len() != self.n_measurements() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} measurements", self.n_measurements()),
                got: format!("{}", y.len()),
            });
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.matrix.ncols()];
        for (row, &yi) in self.matrix.rows().into_iter().zip(y) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a.conj() * yi;
            }
        }
        Ok(out)
    }

    /// Largest squared singular value by power iteration.
    pub fn norm_sq_estimate(&self) -> f64 {
        let n = self.n_cells();
        if n == 0 || self.n_measurements() == 0 {
            return 0.0;
        }
        let mut v = vec![Complex64::new(1.0 / (n as f64).sqrt(), 0.0); n];
        let mut lambda = 0.0;
        for _ in 0..50 {
            let w = self.adjoint(&self.apply(&v).expect("dims")).expect("dims");
            let norm = w.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            let next = norm;
            v = w.into_iter().map(|c| c / norm).collect();
            if (next - lambda).abs() <= 1e-10 * next {
                lambda = next;
                break;
            }
            lambda = next;
        }
        lambda
    }
}

/// 2D scalar Green's function `(-j/4) H0^(2)(k r)`.
pub fn greens_function(k: f64, r: f64) -> Complex64 {
    Complex64::new(0.0, -0.25) * hankel2_0(k * r)
}

/// Born operator `A[(t, r, f), g] = k^2 G(rx_r, c_g) E_inc(tx_t, c_g) dA`, with
/// the incident field of a unit line source, `E_inc = G(tx, c)`.
pub fn build_born_operator(grid: &MaterialGrid, tx: &[Point], rx: &[Point], freqs: &[f64]) -> Result<BornOperator> {
    if !(grid.cell_size > 0.0) || grid.nx == 0 || grid.ny == 0 {
        return Err(Error::arg("grid needs a positive cell size and at least one cell"));
    }
    if tx.is_empty() || rx.is_empty() || freqs.is_empty() {
        return Err(Error::arg("need at least one tx, rx and frequency"));
    }
    if let Some(f) = freqs.iter().find(|f| !(**f > 0.0) || !f.is_finite()) {
        return Err(Error::arg(format!("frequency {f} must be positive")));
    }
    let extent = grid.extent();
    let standoff = MIN_STANDOFF_CELLS * grid.cell_size;
    for (kind, list) in [("tx", tx), ("rx", rx)] {
        for (i, p) in list.iter().enumerate() {
            let d = extent.distance_to(*p);
            if !p.is_finite() || d < standoff - 1e-12 {
                return Err(Error::Geometry(format!(
                    "{kind} {i} at ({}, {}) is {d:.4} m from the grid, standoff is {standoff:.4} m",
                    p.x, p.y
                )));
            }
        }
    }
    let geometry = BornGeometry {
        origin: grid.origin,
        cell_size: grid.cell_size,
        nx: grid.nx,
        ny: grid.ny,
        tx: tx.to_vec(),
        rx: rx.to_vec(),
        freqs: freqs.to_vec(),
    };
    let n = geometry.n_cells();
    let m = geometry.n_measurements();
    let area = grid.cell_size * grid.cell_size;
    let centers: Vec<Point> = (0..n).map(|g| geometry.cell_center(g)).collect();
    let rows = par::map_range(m, |row| {
        let f = row % freqs.len();
        let r = (row / freqs.len()) % rx.len();
        let t = row / (freqs.len() * rx.len());
        let k = 2.0 * PI * freqs[f] / SPEED_OF_LIGHT;
        centers
            .iter()
            .map(|c| k * k * area * greens_function(k, rx[r].distance(*c)) * greens_function(k, tx[t].distance(*c)))
            .collect::<Vec<_>>()
    });
    let matrix = Array2::from_shape_vec((m, n), rows.into_iter().flatten().collect())
        .map_err(|e| Error::arg(e.to_string()))?;
    if matrix.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
        return Err(Error::Geometry("non-finite operator entry".into()));
    }
    Ok(BornOperator { matrix, geometry })
}

/// Operator for a grid and its probe configuration.
pub fn operator_for(grid: &MaterialGrid, probes: &ProbeConfig) -> Result<BornOperator> {
    build_born_operator(grid, &probes.tx, &probes.rx, &probes.freqs)
}

/// `n_tx` sources on a circle of `radius` around the grid centre and `n_rx`
/// receivers on the same circle, offset by half the receiver spacing.
pub fn ring_probes(grid: &MaterialGrid, radius: f64, n_tx: usize, n_rx: usize, freqs: &[f64]) -> ProbeConfig {
    let e = grid.extent();
    let c = Point::new((e.min.x + e.max.x) / 2.0, (e.min.y + e.max.y) / 2.0);
    let ring = |n: usize, offset: f64| -> Vec<Point> {
        (0..n)
            .map(|i| c + Point::from_angle(2.0 * PI * (i as f64 + offset) / n as f64) * radius)
            .collect()
    };
    ProbeConfig {
        tx: ring(n_tx, 0.0),
        rx: ring(n_rx, 0.5),
        freqs: freqs.to_vec(),
    }
}

/// Adds circular complex Gaussian noise at `snr_db` relative to the mean
/// measurement power. `+inf` leaves `y` untouched.
pub fn add_measurement_noise(y: &[Complex64], snr_db: f64, seed: u64) -> Vec<Complex64> {
    if snr_db == f64::INFINITY || y.is_empty() {
        return y.to_vec();
    }
    let p = y.iter().map(|c| c.norm_sqr()).sum::<f64>() / y.len() as f64;
    let variance = p / 10f64.powf(snr_db / 10.0);
    let mut r = rng::stage_rng(seed, "omr.noise", 0);
    y.iter().map(|c| c + rng::complex_normal(&mut r, variance)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialEstimate {
    pub eps_r: f64,
    /// S/m.
    pub sigma: f64,
    /// A negative permittivity or conductivity was clipped to 0.
    pub clipped: bool,
    pub cluster_label: Option<usize>,
}

/// `eps_r = Re chi + 1`, `sigma = -Im chi * omega * eps0`, negatives clipped.
pub fn contrast_to_material(chi: Complex64, freq: f64) -> Result<MaterialEstimate> {
    if !(freq > 0.0) {
        return Err(Error::arg("frequency must be positive"));
    }
    let omega = 2.0 * PI * freq;
    let eps_r = chi.re + 1.0;
    let sigma = -chi.im * omega * VACUUM_PERMITTIVITY;
    Ok(MaterialEstimate {
        eps_r: eps_r.max(0.0),
        sigma: sigma.max(0.0),
        clipped: eps_r < 0.0 || sigma < 0.0,
        cluster_label: None,
    })
}

/// Inverse of [`contrast_to_material`].
pub fn material_to_contrast(eps_r: f64, sigma: f64, freq: f64) -> Complex64 {
    let omega = 2.0 * PI * freq;
    Complex64::new(eps_r - 1.0, -sigma / (omega * VACUUM_PERMITTIVITY))
}

/// Settings of the material-recognition pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OmrConfig {
    /// Measurement SNR, dB; `null` or absent in a scenario means noiseless.
    pub snr_db: Option<f64>,
    /// Mixed-norm budget. When absent the smallest budget on a log grid whose
    /// residual reaches the expected noise norm is used.
    pub tau: Option<f64>,
    /// Cells above this fraction of the strongest estimate form the support.
    pub support_threshold: f64,
    /// Number of material clusters.
    pub k_materials: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for OmrConfig {
    fn default() -> Self {
        OmrConfig {
            snr_db: Some(30.0),
            tau: None,
            support_threshold: 0.2,
            k_materials: 3,
            max_iter: 5000,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OmrRun {
    pub measurements: Vec<Complex64>,
    pub tau: f64,
    /// Budget search curve; empty when `tau` was given.
    pub sweep: Vec<TauPoint>,
    pub estimate: SpgResult,
    pub support: Vec<usize>,
    /// Material of every support cell, with its cluster label.
    pub materials: Vec<(usize, MaterialEstimate)>,
    /// Frequency at which contrast is converted to conductivity, Hz.
    pub reference_freq: f64,
}

/// Born data of the grid's true contrast, the contrast estimate, and the
/// clustered materials of the recovered support.
pub fn run_omr(grid: &MaterialGrid, probes: &ProbeConfig, cfg: &OmrConfig, seed: u64) -> Result<OmrRun> {
    grid.validate()?;
    if !(cfg.support_threshold > 0.0 && cfg.support_threshold <= 1.0) {
        return Err(Error::arg("support_threshold must be in (0, 1]"));
    }
    let a = operator_for(grid, probes)?;
    let clean = a.apply(&grid.contrast)?;
    let snr = cfg.snr_db.unwrap_or(f64::INFINITY);
    let y = add_measurement_noise(&clean, snr, seed);
    let opts = SpgOptions {
        max_iter: cfg.max_iter,
        tol: cfg.tol,
        ..SpgOptions::default()
    };
    let (tau, sweep) = match cfg.tau {
        Some(t) => (t, Vec::new()),
        None => choose_tau(&a, &y, &clean, snr, &opts)?,
    };
    let estimate = estimate_contrast(&a, &y, tau, &opts)?;
    let support = estimate.contrast.support(cfg.support_threshold);
    let fmin = probes.freqs.iter().cloned().fold(f64::INFINITY, f64::min);
    let fmax = probes.freqs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let reference_freq = 0.5 * (fmin + fmax);
    let mut materials = support
        .iter()
        .map(|&g| contrast_to_material(estimate.contrast.chi[g], reference_freq).map(|m| (g, m)))
        .collect::<Result<Vec<_>>>()?;
    if !materials.is_empty() && cfg.k_materials > 0 {
        let samples: Vec<(f64, f64)> = materials.iter().map(|(_, m)| (m.eps_r, m.sigma)).collect();
        let c = cluster_materials(&samples, cfg.k_materials.min(samples.len()), rng::child_seed(seed, "omr.cluster", 0))?;
        for ((_, m), l) in materials.iter_mut().zip(c.labels) {
            m.cluster_label = Some(l);
        }
    }
    Ok(OmrRun {
        measurements: y,
        tau,
        sweep,
        estimate,
        support,
        materials,
        reference_freq,
    })
}

/// Discrepancy choice on a 16-point log grid spanning 0.1 to 30 times the
/// best single-cell fit. The sweep solves are capped at 300 iterations; only
/// their residuals are used.
fn choose_tau(a: &BornOperator, y: &[Complex64], clean: &[Complex64], snr_db: f64, opts: &SpgOptions) -> Result<(f64, Vec<TauPoint>)> {
    let y_norm = y.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if y_norm == 0.0 {
        return Ok((0.0, Vec::new()));
    }
    let back = a.adjoint(y)?;
    let scale = (0..a.n_cells())
        .map(|g| {
            let col = a.matrix.column(g).iter().map(|c| c.norm_sqr()).sum::<f64>();
            back[g].norm() / col
        })
        .fold(0.0, f64::max);
    let taus = log_tau_grid(0.1 * scale, 30.0 * scale, 16)?;
    let coarse = SpgOptions {
        max_iter: opts.max_iter.min(300),
        ..*opts
    };
    let sweep = tau_sweep(a, y, &taus, &coarse)?;
    let target = if snr_db.is_finite() {
        let p = clean.iter().map(|c| c.norm_sqr()).sum::<f64>() / clean.len() as f64;
        (p / 10f64.powf(snr_db / 10.0) * clean.len() as f64).sqrt()
    } else {
        1e-6 * y_norm
    };
    let tau = sweep
        .iter()
        .find(|p| p.residual_norm <= target)
        .or(sweep.last())
        .map(|p| p.tau)
        .unwrap_or(0.0);
    Ok((tau, sweep))
}

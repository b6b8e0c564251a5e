use super::rdmap::RangeDopplerMap;
use crate::error::{Error, Result};
use crate::par;
use ndarray::Array2;

/// A map cell that crossed the CFAR threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellDetection {
    pub range_bin: usize,
    pub doppler_bin: usize,
    /// Beam or angle index when the map belongs to a scan; `None` otherwise.
    pub angle_bin: Option<usize>,
    pub power: f64,
    /// Cell power over the local noise estimate, dB.
    pub snr_est: f64,
}

/// CA-CFAR scale factor `N (pfa^(-1/N) - 1)` for exponential noise.
pub fn threshold_factor(n_train_cells: usize, pfa: f64) -> f64 {
    let n = n_train_cells as f64;
    n * (pfa.powf(-1.0 / n) - 1.0)
}

/// Summed-area table with one row/column of zero padding.
fn integral(power: &Array2<f64>) -> Array2<f64> {
    let (nr, nd) = power.dim();
    let mut s = Array2::<f64>::zeros((nr + 1, nd + 1));
    for r in 0..nr {
        let mut row = 0.0;
        for d in 0..nd {
            row += power[[r, d]];
            s[[r + 1, d + 1]] = s[[r, d + 1]] + row;
        }
    }
    s
}

fn box_sum(s: &Array2<f64>, r0: usize, r1: usize, d0: usize, d1: usize) -> f64 {
    // inclusive-exclusive [r0, r1) x [d0, d1)
    s[[r1, d1]] - s[[r0, d1]] - s[[r1, d0]] + s[[r0, d0]]
}

/// Two-dimensional cell-averaging CFAR over a square training ring.
///
/// The ring spans `n_guard + 1 ..= n_guard + n_train` cells from the cell
/// under test in both axes. Near the edges the ring is truncated and the
/// threshold factor is recomputed for the cells actually available.
/// Detections are sorted by power, strongest first.
pub fn ca_cfar(map: &RangeDopplerMap, n_train: usize, n_guard: usize, pfa: f64) -> Result<Vec<CellDetection>> {
    if !(pfa > 0.0 && pfa < 1.0) {
        return Err(Error::arg("pfa must lie in (0, 1)"));
    }
    if n_train == 0 {
        return Err(Error::arg("n_train must be >= 1"));
    }
    let (nr, nd) = map.power.dim();
    let span = 2 * (n_guard + n_train) + 1;
    if span > nr || span > nd {
        return Err(Error::arg(format!(
            "CFAR window {span}x{span} larger than map {nr}x{nd}"
        )));
    }
    let sums = integral(&map.power);
    let outer = n_guard + n_train;
    let rows = par::map_range(nr, |r| {
        let mut found = Vec::new();
        let (ro0, ro1) = (r.saturating_sub(outer), (r + outer + 1).min(nr));
        let (rg0, rg1) = (r.saturating_sub(n_guard), (r + n_guard + 1).min(nr));
        for d in 0..nd {
            let (do0, do1) = (d.saturating_sub(outer), (d + outer + 1).min(nd));
            let (dg0, dg1) = (d.saturating_sub(n_guard), (d + n_guard + 1).min(nd));
            let total = box_sum(&sums, ro0, ro1, do0, do1) - box_sum(&sums, rg0, rg1, dg0, dg1);
            let count = (ro1 - ro0) * (do1 - do0) - (rg1 - rg0) * (dg1 - dg0);
            if count == 0 {
                continue;
            }
            let mean = total.max(0.0) / count as f64;
            let alpha = threshold_factor(count, pfa);
            let p = map.power[[r, d]];
            if p > alpha * mean {
                let snr_est = if mean > 0.0 {
                    10.0 * (p / mean).log10()
                } else {
                    f64::INFINITY
                };
                found.push(CellDetection {
                    range_bin: r,
                    doppler_bin: d,
                    angle_bin: None,
                    power: p,
                    snr_est,
                });
            }
        }
        found
    });
    let mut dets: Vec<CellDetection> = rows.into_iter().flatten().collect();
    dets.sort_by(|a, b| {
        b.power
            .total_cmp(&a.power)
            .then(a.range_bin.cmp(&b.range_bin))
            .then(a.doppler_bin.cmp(&b.doppler_bin))
    });
    Ok(dets)
}

/// Keeps detections that are the maximum of their 3x3 neighbourhood. Both
/// axes wrap: range and Doppler bins are DFT bins and alias cyclically.
pub fn local_maxima(map: &RangeDopplerMap, dets: &[CellDetection]) -> Vec<CellDetection> {
    let (nr, nd) = map.power.dim();
    dets.iter()
        .copied()
        .filter(|c| {
            let p = map.power[[c.range_bin, c.doppler_bin]];
            for dr in -1i64..=1 {
                let r = (c.range_bin as i64 + dr).rem_euclid(nr as i64) as usize;
                for dd in -1i64..=1 {
                    if dr == 0 && dd == 0 {
                        continue;
                    }
                    let d = (c.doppler_bin as i64 + dd).rem_euclid(nd as i64) as usize;
                    if map.power[[r, d]] > p {
                        return false;
                    }
                }
            }
            true
        })
        .collect()
}

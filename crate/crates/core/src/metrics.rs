//! Scoring of pipeline outputs against ground truth.
//!
//! The `*_metrics` functions work on in-memory values. [`report_metrics`]
//! reads the CSV artifacts of a run directory (see [`artifact`]) and scores
//! every pipeline whose outputs it finds.

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::io::{num, Table};
use crate::omr::contrast_to_material;
use num_complex::Complex64;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

/// File names shared by the runner and [`report_metrics`].
pub mod artifact {
    pub const SER_MAP: &str = "ser_map.csv";
    pub const SER_TRUTH: &str = "ser_truth.csv";
    pub const DTS_DETECTIONS: &str = "dts_detections.csv";
    pub const DTS_TRACKS: &str = "dts_tracks.csv";
    pub const DTS_TRUTH: &str = "dts_truth.csv";
    pub const DTS_SUMMARY: &str = "dts_summary.csv";
    pub const OMR_CONTRAST: &str = "omr_contrast.csv";
    pub const OMR_TRUTH: &str = "omr_truth.csv";
    pub const OMR_SUMMARY: &str = "omr_summary.csv";
    pub const METRICS: &str = "metrics.csv";
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SerMetrics {
    pub n_points: usize,
    /// Mean distance from each reconstructed point to its nearest truth, m.
    pub mean_error: f64,
    pub median_error: f64,
}

pub fn ser_metrics(recon: &[Point], truth: &[Point]) -> Result<SerMetrics> {
    if truth.is_empty() {
        return Err(Error::State("SER ground truth is empty".into()));
    }
    let mut d: Vec<f64> = recon
        .iter()
        .map(|p| truth.iter().map(|t| p.distance(*t)).fold(f64::INFINITY, f64::min))
        .collect();
    d.sort_by(f64::total_cmp);
    let n = d.len();
    Ok(SerMetrics {
        n_points: n,
        mean_error: if n == 0 { f64::NAN } else { d.iter().sum::<f64>() / n as f64 },
        median_error: match n {
            0 => f64::NAN,
            _ if n % 2 == 1 => d[n / 2],
            _ => 0.5 * (d[n / 2 - 1] + d[n / 2]),
        },
    })
}

/// Global-frame DTS outputs, each tagged with its frame index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DtsObservations {
    pub truth: Vec<(usize, Point)>,
    pub detections: Vec<(usize, Point)>,
    /// Confirmed tracks: (frame, track id, position).
    pub tracks: Vec<(usize, usize, Point)>,
    pub n_frames: usize,
    /// Range-Doppler cells tested per frame, for the false-alarm rate.
    pub cells_per_frame: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtsMetrics {
    /// Fraction of (frame, target) pairs with a detection inside the gate.
    pub pd: f64,
    /// Detections outside every gate per tested cell.
    pub pfa: f64,
    pub false_detections: usize,
    /// RMSE of confirmed track positions against the nearest truth, m.
    pub track_rmse: f64,
    /// RMSE of gated detections against the nearest truth, m.
    pub detection_rmse: f64,
    /// In the last frame every target has its own confirmed track in the gate.
    pub resolved: bool,
}

fn by_frame<T: Copy>(items: &[(usize, T)]) -> BTreeMap<usize, Vec<T>> {
    let mut m = BTreeMap::<usize, Vec<T>>::new();
    for &(f, x) in items {
        m.entry(f).or_default().push(x);
    }
    m
}

fn nearest(p: Point, set: &[Point]) -> f64 {
    set.iter().map(|t| p.distance(*t)).fold(f64::INFINITY, f64::min)
}

fn rmse(d: &[f64]) -> f64 {
    if d.is_empty() {
        f64::NAN
    } else {
        (d.iter().map(|x| x * x).sum::<f64>() / d.len() as f64).sqrt()
    }
}

/// `gate` is the association radius in meters.
pub fn dts_metrics(obs: &DtsObservations, gate: f64) -> Result<DtsMetrics> {
    if !(gate > 0.0) {
        return Err(Error::arg("gate must be positive"));
    }
    let truth = by_frame(&obs.truth);
    let dets = by_frame(&obs.detections);
    let empty = Vec::new();
    let (mut pairs, mut hits, mut false_detections) = (0usize, 0usize, 0usize);
    let mut det_err = Vec::new();
    for f in 0..obs.n_frames {
        let t = truth.get(&f).unwrap_or(&empty);
        let d = dets.get(&f).unwrap_or(&empty);
        pairs += t.len();
        hits += t.iter().filter(|p| nearest(**p, d) <= gate).count();
        for p in d {
            let e = nearest(*p, t);
            if e <= gate {
                det_err.push(e);
            } else {
                false_detections += 1;
            }
        }
    }
    let track_err: Vec<f64> = obs
        .tracks
        .iter()
        .filter_map(|&(f, _, p)| truth.get(&f).map(|t| nearest(p, t)))
        .collect();

    let resolved = match obs.n_frames.checked_sub(1) {
        None => true,
        Some(last) => {
            let t = truth.get(&last).unwrap_or(&empty);
            let mut free: Vec<Point> = obs.tracks.iter().filter(|x| x.0 == last).map(|x| x.2).collect();
            t.iter().all(|p| {
                let best = (0..free.len()).min_by(|&a, &b| p.distance(free[a]).total_cmp(&p.distance(free[b])));
                match best {
                    Some(i) if p.distance(free[i]) <= gate => {
                        free.remove(i);
                        true
                    }
                    _ => false,
                }
            })
        }
    };
    let cells = obs.n_frames as f64 * obs.cells_per_frame;
    Ok(DtsMetrics {
        pd: if pairs == 0 { f64::NAN } else { hits as f64 / pairs as f64 },
        pfa: if cells > 0.0 { false_detections as f64 / cells } else { f64::NAN },
        false_detections,
        track_rmse: rmse(&track_err),
        detection_rmse: rmse(&det_err),
        resolved,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmrMetrics {
    pub precision: f64,
    pub recall: f64,
    pub support_f1: f64,
    /// Largest relative error of eps_r over correctly found cells.
    pub eps_rel_error: f64,
    /// Largest relative error of sigma over correctly found cells.
    pub sigma_rel_error: f64,
}

/// Support is the set of cells with `|chi| >= rel_threshold * max |chi|` in
/// the estimate and `chi != 0` in the truth. Material parameters are
/// compared at `freq`.
pub fn omr_metrics(estimate: &[Complex64], truth: &[Complex64], rel_threshold: f64, freq: f64) -> Result<OmrMetrics> {
    if truth.is_empty() {
        return Err(Error::State("OMR ground truth is empty".into()));
    }
    if estimate.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} cells", truth.len()),
            got: estimate.len().to_string(),
        });
    }
    let peak = estimate.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let est: BTreeSet<usize> = (0..estimate.len())
        .filter(|&g| peak > 0.0 && estimate[g].norm() >= rel_threshold * peak)
        .collect();
    let tru: BTreeSet<usize> = (0..truth.len()).filter(|&g| truth[g] != Complex64::new(0.0, 0.0)).collect();
    let tp: Vec<usize> = est.intersection(&tru).copied().collect();
    let ratio = |a: usize, b: usize| if b == 0 { 1.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp.len(), est.len());
    let recall = ratio(tp.len(), tru.len());
    let support_f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    let rel = |a: f64, b: f64| if b != 0.0 { (a - b).abs() / b.abs() } else { (a - b).abs() };
    let (mut eps_rel_error, mut sigma_rel_error) = (0.0f64, 0.0f64);
    for &g in &tp {
        let e = contrast_to_material(estimate[g], freq)?;
        let t = contrast_to_material(truth[g], freq)?;
        eps_rel_error = eps_rel_error.max(rel(e.eps_r, t.eps_r));
        sigma_rel_error = sigma_rel_error.max(rel(e.sigma, t.sigma));
    }
    if tp.is_empty() {
        eps_rel_error = f64::NAN;
        sigma_rel_error = f64::NAN;
    }
    Ok(OmrMetrics {
        precision,
        recall,
        support_f1,
        eps_rel_error,
        sigma_rel_error,
    })
}

/// Key/value summary files: one `key,value` row each.
pub fn summary_table(entries: &[(&str, f64)]) -> Table {
    let mut t = Table::new(&["key", "value"]);
    for (k, v) in entries {
        t.push(vec![k.to_string(), num(*v)]);
    }
    t
}

fn summary_value(t: &Table, key: &str) -> Result<f64> {
    let keys = t.strings("key")?;
    let values = t.floats("value")?;
    keys.iter()
        .position(|k| *k == key)
        .map(|i| values[i])
        .ok_or_else(|| Error::Io(format!("summary has no `{key}`")))
}

fn points(t: &Table) -> Result<Vec<Point>> {
    Ok(t.floats("x")?.into_iter().zip(t.floats("y")?).map(|(x, y)| Point::new(x, y)).collect())
}

fn frames(t: &Table) -> Result<Vec<usize>> {
    t.strings("frame")?
        .iter()
        .map(|s| s.parse::<usize>().map_err(|e| Error::Io(format!("frame `{s}`: {e}"))))
        .collect()
}

fn contrast(t: &Table) -> Result<Vec<Complex64>> {
    Ok(t.floats("chi_re")?.into_iter().zip(t.floats("chi_im")?).map(|(r, i)| Complex64::new(r, i)).collect())
}

fn require(dir: &Path, name: &str) -> Result<Table> {
    let p = dir.join(name);
    if !p.exists() {
        return Err(Error::State(format!("missing ground truth `{name}`")));
    }
    Table::read(&p)
}

/// Scores every pipeline whose artifacts are present in `dir`.
///
/// Rows are `(pipeline, metric, value)`. A pipeline output without its truth
/// file is an error, as is a directory with no scorable outputs.
pub fn report_metrics(dir: &Path) -> Result<Table> {
    let mut out = Table::new(&["pipeline", "metric", "value"]);
    let mut row = |p: &str, m: &str, v: f64| out.push(vec![p.into(), m.into(), num(v)]);
    let mut found = false;

    if dir.join(artifact::SER_MAP).exists() {
        found = true;
        let map = Table::read(&dir.join(artifact::SER_MAP))?;
        let truth = require(dir, artifact::SER_TRUTH)?;
        let m = ser_metrics(&points(&map)?, &points(&truth)?)?;
        row("ser", "n_points", m.n_points as f64);
        row("ser", "mean_error_m", m.mean_error);
        row("ser", "median_error_m", m.median_error);
    }

    if dir.join(artifact::DTS_TRACKS).exists() {
        found = true;
        let tracks = Table::read(&dir.join(artifact::DTS_TRACKS))?;
        let truth = require(dir, artifact::DTS_TRUTH)?;
        let summary = require(dir, artifact::DTS_SUMMARY)?;
        let dets = Table::read(&dir.join(artifact::DTS_DETECTIONS))?;
        let status = tracks.strings("status")?;
        let ids = tracks.strings("track_id")?;
        let obs = DtsObservations {
            truth: frames(&truth)?.into_iter().zip(points(&truth)?).collect(),
            detections: frames(&dets)?.into_iter().zip(points(&dets)?).collect(),
            tracks: frames(&tracks)?
                .into_iter()
                .zip(points(&tracks)?)
                .zip(ids.iter().zip(&status))
                .filter(|(_, (_, s))| **s == "confirmed")
                .map(|((f, p), (id, _))| Ok((f, id.parse::<usize>().map_err(|e| Error::Io(e.to_string()))?, p)))
                .collect::<Result<Vec<_>>>()?,
            n_frames: summary_value(&summary, "n_frames")? as usize,
            cells_per_frame: summary_value(&summary, "cells_per_frame")?,
        };
        let m = dts_metrics(&obs, summary_value(&summary, "gate_m")?)?;
        row("dts", "pd", m.pd);
        row("dts", "pfa", m.pfa);
        row("dts", "false_detections", m.false_detections as f64);
        row("dts", "track_rmse_m", m.track_rmse);
        row("dts", "detection_rmse_m", m.detection_rmse);
        row("dts", "resolved", if m.resolved { 1.0 } else { 0.0 });
    }

    if dir.join(artifact::OMR_CONTRAST).exists() {
        found = true;
        let est = Table::read(&dir.join(artifact::OMR_CONTRAST))?;
        let truth = require(dir, artifact::OMR_TRUTH)?;
        let summary = require(dir, artifact::OMR_SUMMARY)?;
        let m = omr_metrics(
            &contrast(&est)?,
            &contrast(&truth)?,
            summary_value(&summary, "support_threshold")?,
            summary_value(&summary, "reference_freq_hz")?,
        )?;
        row("omr", "support_precision", m.precision);
        row("omr", "support_recall", m.recall);
        row("omr", "support_f1", m.support_f1);
        row("omr", "eps_r_rel_error", m.eps_rel_error);
        row("omr", "sigma_rel_error", m.sigma_rel_error);
    }

    if !found {
        return Err(Error::State(format!("no scorable artifacts in {}", dir.display())));
    }
    Ok(out)
}

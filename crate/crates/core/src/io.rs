//! CSV artifacts with fixed column orders.
//!
//! Every float is written with 9 significant digits in scientific notation
//! (`{:.8e}`), negative zero is written as zero, and rows keep the order in
//! which the pipelines produce them, so identical runs give identical bytes.

use crate::dts::{DtsRun, SensorPose};
use crate::error::{Error, Result};
use crate::netmgmt::{AllocationResult, OnOffSchedule, Placement};
use crate::omr::{ContrastVector, OmrRun, TauPoint};
use crate::scene::{propagate, MaterialGrid, Scene};
use crate::ser::PointCloudMap;
use std::path::Path;

/// Formats a float with 9 significant digits.
pub fn num(x: f64) -> String {
    if x == 0.0 {
        return format!("{:.8e}", 0.0);
    }
    format!("{x:.8e}")
}

/// A header plus string cells, one `Vec` per row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header).map_err(io_err)?;
        for r in &self.rows {
            w.write_record(r).map_err(io_err)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.to_string()))
    }

    pub fn from_csv(bytes: &[u8]) -> Result<Self> {
        let mut r = csv::Reader::from_reader(bytes);
        let header = r.headers().map_err(io_err)?.iter().map(String::from).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(String::from).collect()).map_err(io_err))
            .collect::<Result<Vec<Vec<String>>>>()?;
        Ok(Table { header, rows })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Table::from_csv(&bytes)
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Io(format!("missing column `{name}`")))
    }

    /// Column `name` parsed as floats.
    pub fn floats(&self, name: &str) -> Result<Vec<f64>> {
        let c = self.column(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r[c].parse::<f64>()
                    .map_err(|e| Error::Io(format!("row {} column `{name}`: {e}", i + 1)))
            })
            .collect()
    }

    /// Column `name` as strings.
    pub fn strings(&self, name: &str) -> Result<Vec<&str>> {
        let c = self.column(name)?;
        Ok(self.rows.iter().map(|r| r[c].as_str()).collect())
    }
}

fn io_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

pub fn point_cloud_table(map: &PointCloudMap) -> Table {
    let mut t = Table::new(&["x", "y", "confidence", "power_db"]);
    for p in &map.points {
        t.push(vec![num(p.position.x), num(p.position.y), num(p.confidence), num(p.power_db)]);
    }
    t
}

pub fn sesp_truth_table(scene: &Scene) -> Table {
    let mut t = Table::new(&["x", "y", "reflectivity_re", "reflectivity_im"]);
    for s in &scene.sesps {
        t.push(vec![num(s.position.x), num(s.position.y), num(s.reflectivity.re), num(s.reflectivity.im)]);
    }
    t
}

/// Every detection of every frame, with its global fix.
pub fn detections_table(run: &DtsRun, pose: &SensorPose) -> Table {
    let mut t = Table::new(&[
        "frame", "time", "searched", "range", "radial_velocity", "angle", "rcs_est", "snr", "x", "y",
    ]);
    for f in &run.frames {
        for d in &f.detections {
            let g = pose.to_global(d);
            t.push(vec![
                f.index.to_string(),
                num(f.time),
                f.searched.to_string(),
                num(d.range),
                num(d.radial_velocity),
                num(d.angle),
                num(d.rcs_est),
                num(d.snr),
                num(g.x),
                num(g.y),
            ]);
        }
    }
    t
}

/// Live tracks after every frame.
pub fn track_log_table(run: &DtsRun) -> Table {
    let mut t = Table::new(&[
        "frame", "time", "track_id", "status", "x", "y", "vx", "vy", "sigma_x", "sigma_y", "class", "class_score",
    ]);
    for f in &run.frames {
        for tr in f.tracks.iter().filter(|t| t.is_live()) {
            let (class, score) = match tr.class {
                Some((c, s)) => (c.name().to_string(), num(s)),
                None => (String::new(), String::new()),
            };
            t.push(vec![
                f.index.to_string(),
                num(f.time),
                tr.id.to_string(),
                tr.status.name().to_string(),
                num(tr.state[0]),
                num(tr.state[1]),
                num(tr.state[2]),
                num(tr.state[3]),
                num(tr.covariance[(0, 0)].max(0.0).sqrt()),
                num(tr.covariance[(1, 1)].max(0.0).sqrt()),
                class,
                score,
            ]);
        }
    }
    t
}

/// Ground-truth target states at the frame times `0, dt, 2 dt, ...`.
pub fn target_truth_table(scene: &Scene, n_frames: usize, dt: f64) -> Result<Table> {
    let mut t = Table::new(&["frame", "time", "target_id", "x", "y", "vx", "vy", "class"]);
    for f in 0..n_frames {
        let now = propagate(scene, f as f64 * dt)?;
        for tg in &now.targets {
            t.push(vec![
                f.to_string(),
                num(now.time),
                tg.id.to_string(),
                num(tg.position.x),
                num(tg.position.y),
                num(tg.velocity.x),
                num(tg.velocity.y),
                tg.class.name().to_string(),
            ]);
        }
    }
    Ok(t)
}

pub fn contrast_table(grid: &MaterialGrid, chi: &ContrastVector) -> Result<Table> {
    if chi.len() != grid.n_cells() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} cells", grid.n_cells()),
            got: chi.len().to_string(),
        });
    }
    let mut t = Table::new(&["cell", "ix", "iy", "x", "y", "chi_re", "chi_im"]);
    for (g, c) in chi.chi.iter().enumerate() {
        let p = grid.cell_center(g);
        t.push(vec![
            g.to_string(),
            (g % grid.nx).to_string(),
            (g / grid.nx).to_string(),
            num(p.x),
            num(p.y),
            num(c.re),
            num(c.im),
        ]);
    }
    Ok(t)
}

pub fn materials_table(run: &OmrRun) -> Table {
    let mut t = Table::new(&["cell", "eps_r", "sigma", "clipped", "cluster"]);
    for (g, m) in &run.materials {
        t.push(vec![
            g.to_string(),
            num(m.eps_r),
            num(m.sigma),
            m.clipped.to_string(),
            m.cluster_label.map(|l| l.to_string()).unwrap_or_default(),
        ]);
    }
    t
}

pub fn tau_sweep_table(sweep: &[TauPoint]) -> Table {
    let mut t = Table::new(&["tau", "residual_norm", "mixed_norm"]);
    for p in sweep {
        t.push(vec![num(p.tau), num(p.residual_norm), num(p.mixed_norm)]);
    }
    t
}

pub fn trace_table(values: &[f64]) -> Table {
    let mut t = Table::new(&["step", "objective"]);
    for (i, v) in values.iter().enumerate() {
        t.push(vec![i.to_string(), num(*v)]);
    }
    t
}

pub fn placement_table(p: &Placement) -> Table {
    let mut t = Table::new(&["candidate", "x", "y"]);
    for (c, q) in p.selected.iter().zip(&p.positions) {
        t.push(vec![c.to_string(), num(q.x), num(q.y)]);
    }
    t
}

pub fn onoff_table(s: &OnOffSchedule) -> Table {
    let mut t = Table::new(&["bs", "on"]);
    for (i, on) in s.on.iter().enumerate() {
        t.push(vec![i.to_string(), on.to_string()]);
    }
    t
}

/// `bs` indexes the active set the allocation was computed for.
pub fn allocation_table(active: &[usize], r: &AllocationResult) -> Table {
    let mut t = Table::new(&["bs", "power", "band"]);
    for (k, &b) in active.iter().enumerate() {
        t.push(vec![b.to_string(), num(r.allocation.power[k]), r.allocation.band[k].to_string()]);
    }
    t
}

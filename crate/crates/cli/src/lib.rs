//! Scenario runner: loads a scenario file, runs one or all pipelines and
//! writes CSV artifacts plus a manifest with their SHA-256 digests.
//!
//! Every artifact goes through [`ArtifactWriter`], which only accepts bare
//! file names, so nothing is written outside the output directory.

use anyhow::{anyhow, bail, Context, Result};
use isac_core::dts::{run_dts, DtsConfig, SensorPose};
use isac_core::estimation::PathSearch;
use isac_core::geometry::Point;
use isac_core::io::{self, num, Table};
use isac_core::metrics::{artifact, report_metrics, summary_table};
use isac_core::netmgmt::{
    allocate_power_bandwidth, onoff_schedule, place_bs, DemandMap, LinkModel, NetObjective, UtilityWeights,
};
use isac_core::omr::{ring_probes, run_omr, ContrastVector, OmrConfig};
use isac_core::phy::OfdmConfig;
use isac_core::scene::{build_scene, ProbeConfig, ScenarioConfig, Scene};
use isac_core::ser::{fuse_maps_multibs, fuse_ue_maps, reconstruct_scene, EvidenceGrid, FusionParams, SerOptions};
use isac_core::{rng, Error as CoreError};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pipeline {
    Ser,
    Dts,
    Omr,
    Net,
    E2e,
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pipeline::Ser => "ser",
            Pipeline::Dts => "dts",
            Pipeline::Omr => "omr",
            Pipeline::Net => "net",
            Pipeline::E2e => "e2e",
        })
    }
}

impl FromStr for Pipeline {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "ser" => Pipeline::Ser,
            "dts" => Pipeline::Dts,
            "omr" => Pipeline::Omr,
            "net" => Pipeline::Net,
            "e2e" => Pipeline::E2e,
            _ => bail!("unknown pipeline `{s}` (expected ser, dts, omr, net or e2e)"),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario: String,
    pub pipeline: Pipeline,
    pub seed: u64,
    pub out_dir: String,
    /// Sorted by name; `manifest.json` itself is not listed.
    pub artifacts: Vec<ArtifactEntry>,
}

pub const MANIFEST: &str = "manifest.json";

/// Writes files into one directory and records their digests.
pub struct ArtifactWriter {
    dir: PathBuf,
    entries: Vec<ArtifactEntry>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(ArtifactWriter {
            dir: dir.to_path_buf(),
            entries: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let mut parts = Path::new(name).components();
        let plain = matches!((parts.next(), parts.next()), (Some(std::path::Component::Normal(_)), None));
        if !plain {
            bail!("artifact name `{name}` must be a bare file name");
        }
        std::fs::write(self.dir.join(name), bytes).with_context(|| format!("writing {name}"))?;
        self.entries.retain(|e| e.name != name);
        self.entries.push(ArtifactEntry {
            name: name.to_string(),
            bytes: bytes.len(),
            sha256: hex(&Sha256::digest(bytes)),
        });
        Ok(())
    }

    pub fn table(&mut self, name: &str, t: &Table) -> Result<()> {
        self.write(name, &t.to_csv()?)
    }

    fn finish(mut self) -> Vec<ArtifactEntry> {
        self.entries.sort_by(|a, b| a.name.cmp(&b.name));
        self.entries
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SER settings of the scenario's `run.ser` section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SerSettings {
    pub max_paths: usize,
    pub stop_threshold: f64,
    pub angle_step_deg: f64,
    pub delay_oversample: usize,
    pub max_angle_deg: f64,
    /// Std-dev of the UE position error, m.
    pub ue_position_sigma: f64,
    /// Evidence grid cell, m.
    pub evidence_cell: f64,
    pub min_occupied: f64,
    pub sensing_range: f64,
    pub min_confidence: f64,
    pub merge_radius: f64,
}

impl Default for SerSettings {
    fn default() -> Self {
        let s = PathSearch::default();
        SerSettings {
            max_paths: 16,
            stop_threshold: 1e-4,
            angle_step_deg: s.angle_step.to_degrees(),
            delay_oversample: s.delay_oversample,
            max_angle_deg: s.max_angle.to_degrees(),
            ue_position_sigma: 0.0,
            evidence_cell: 0.5,
            min_occupied: 0.5,
            sensing_range: 200.0,
            min_confidence: 0.0,
            merge_radius: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DtsSettings {
    pub bs: usize,
    pub frames: usize,
    /// Association radius used when scoring, m.
    pub gate_m: f64,
    pub config: DtsConfig,
}

impl Default for DtsSettings {
    fn default() -> Self {
        DtsSettings {
            bs: 0,
            frames: 20,
            gate_m: 2.0,
            config: DtsConfig::default(),
        }
    }
}

/// Probes on a circle around the grid, used when the scenario lists none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RingSettings {
    /// Distance from the grid centre, m.
    pub radius: f64,
    pub n_tx: usize,
    pub n_rx: usize,
    pub freqs: Vec<f64>,
}

impl Default for RingSettings {
    fn default() -> Self {
        RingSettings {
            radius: 1.5,
            n_tx: 8,
            n_rx: 8,
            freqs: vec![3e9, 4e9, 5e9, 6e9],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OmrSettings {
    pub config: OmrConfig,
    pub ring: RingSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetSettings {
    /// Sites to select among the BS positions; defaults to half, rounded up.
    pub k: Option<usize>,
    pub objective: NetObjective,
    /// Demand grid spacing, m.
    pub demand_spacing: f64,
    pub n_subbands: usize,
    /// Receiver noise, W.
    pub noise: f64,
    pub sensing_weight: f64,
    pub max_rounds: usize,
}

impl Default for NetSettings {
    fn default() -> Self {
        NetSettings {
            k: None,
            objective: NetObjective::default(),
            demand_spacing: 10.0,
            n_subbands: 2,
            noise: 1e-12,
            sensing_weight: 0.0,
            max_rounds: 20,
        }
    }
}

/// The scenario's `run` section.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub ser: SerSettings,
    pub dts: DtsSettings,
    pub omr: OmrSettings,
    pub net: NetSettings,
}

/// A parsed and validated scenario.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: ScenarioConfig,
    pub run: RunSection,
    pub scene: Scene,
}

fn parse_error(path: &Path, e: CoreError) -> anyhow::Error {
    anyhow!("{}: {e}", path.display())
}

/// Parses and validates a scenario. Diagnostics name the offending field
/// path and, for syntax errors, the line and column.
pub fn load_scenario(path: &Path, seed: u64) -> Result<Loaded> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let config = ScenarioConfig::from_json_str(&text).map_err(|e| parse_error(path, e))?;
    let run: RunSection = if config.run.is_null() {
        RunSection::default()
    } else {
        serde_path_to_error::deserialize(config.run.clone()).map_err(|e| {
            parse_error(
                path,
                CoreError::Parse {
                    path: format!("run.{}", e.path()),
                    message: e.inner().to_string(),
                },
            )
        })?
    };
    let scene = build_scene(&config, seed).map_err(|e| parse_error(path, e))?;
    Ok(Loaded { config, run, scene })
}

fn stage<T>(name: &str, r: isac_core::Result<T>) -> Result<T> {
    r.map_err(|e| anyhow!("stage `{name}` failed: {e}"))
}

fn ofdm_of(l: &Loaded, stage_name: &str) -> Result<OfdmConfig> {
    l.config
        .ofdm
        .ok_or_else(|| anyhow!("stage `{stage_name}` failed: the scenario has no `ofdm` section"))
}

/// Options of a single run.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub pipeline: Pipeline,
    pub scenario: PathBuf,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Overrides `run.dts.frames`.
    pub frames: Option<usize>,
    pub verbose: bool,
}

/// Runs a pipeline and writes its artifacts, a metrics table when ground
/// truth is scorable, and `manifest.json`.
pub fn run(opts: &RunOptions) -> Result<RunManifest> {
    let loaded = load_scenario(&opts.scenario, opts.seed)?;
    let mut w = ArtifactWriter::new(&opts.out_dir)?;
    let log = |m: &str| {
        if opts.verbose {
            eprintln!("[{}] {m}", opts.pipeline);
        }
    };
    let stages: &[Pipeline] = match opts.pipeline {
        Pipeline::E2e => &[Pipeline::Ser, Pipeline::Dts, Pipeline::Omr, Pipeline::Net],
        ref p => std::slice::from_ref(p),
    };
    for &p in stages {
        let seed = rng::child_seed(opts.seed, &format!("cli.{p}"), 0);
        // e2e skips pipelines the scene has nothing for
        if opts.pipeline == Pipeline::E2e {
            let s = &loaded.scene;
            let skip = match p {
                Pipeline::Ser => s.ues.is_empty() || loaded.config.ofdm.is_none(),
                Pipeline::Dts => loaded.config.ofdm.is_none(),
                Pipeline::Omr => s.material_grid.is_none(),
                _ => false,
            };
            if skip {
                log(&format!("skipping {p}"));
                continue;
            }
        }
        log(&format!("running {p}"));
        match p {
            Pipeline::Ser => run_ser(&loaded, seed, &mut w)?,
            Pipeline::Dts => run_dts_stage(&loaded, opts.frames, seed, &mut w)?,
            Pipeline::Omr => run_omr_stage(&loaded, seed, &mut w)?,
            Pipeline::Net => run_net(&loaded, &mut w)?,
            Pipeline::E2e => unreachable!("expanded above"),
        }
    }
    if opts.pipeline != Pipeline::Net {
        let t = stage("metrics", report_metrics(&opts.out_dir))?;
        w.table(artifact::METRICS, &t)?;
    }
    let manifest = RunManifest {
        scenario: opts.scenario.display().to_string(),
        pipeline: opts.pipeline,
        seed: opts.seed,
        out_dir: opts.out_dir.display().to_string(),
        artifacts: w.finish(),
    };
    let json = serde_json::to_vec_pretty(&manifest)?;
    std::fs::write(opts.out_dir.join(MANIFEST), json).context("writing manifest")?;
    Ok(manifest)
}

fn run_ser(l: &Loaded, seed: u64, w: &mut ArtifactWriter) -> Result<()> {
    let ofdm = ofdm_of(l, "ser")?;
    let s = l.run.ser;
    let opts = SerOptions {
        max_paths: s.max_paths,
        stop_threshold: s.stop_threshold,
        search: PathSearch {
            angle_step: s.angle_step_deg.to_radians(),
            delay_oversample: s.delay_oversample,
            max_angle: s.max_angle_deg.to_radians(),
        },
        ue_position_sigma: s.ue_position_sigma,
    };
    let b = l.scene.bounds;
    let nx = (b.width() / s.evidence_cell).ceil().max(1.0) as usize;
    let ny = (b.height() / s.evidence_cell).ceil().max(1.0) as usize;
    let grid = stage("ser.evidence", EvidenceGrid::new(b.min, s.evidence_cell, nx, ny))?;
    let active: Vec<usize> = (0..l.scene.bs.len()).filter(|&i| l.scene.bs[i].on).collect();
    let mut local = Vec::new();
    for &b in &active {
        let per_ue = stage("ser.extract", reconstruct_scene(&l.scene, b, &ofdm, &opts, rng::child_seed(seed, "bs", b as u64)))?;
        let maps: Vec<_> = per_ue.into_iter().map(|(_, r)| r.map).collect();
        let map = stage("ser.evidence", fuse_ue_maps(&maps, &grid, s.min_occupied))?;
        w.table(&format!("ser_map_bs{b}.csv"), &io::point_cloud_table(&map))?;
        local.push(map);
    }
    let params = FusionParams {
        bs_positions: active.iter().map(|&b| l.scene.bs[b].position).collect(),
        sensing_range: s.sensing_range,
        min_confidence: s.min_confidence,
        merge_radius: s.merge_radius,
    };
    let fused = stage("ser.fusion", fuse_maps_multibs(&local, &params))?;
    w.table(artifact::SER_MAP, &io::point_cloud_table(&fused))?;
    w.table(artifact::SER_TRUTH, &io::sesp_truth_table(&l.scene))?;
    Ok(())
}

fn run_dts_stage(l: &Loaded, frames: Option<usize>, seed: u64, w: &mut ArtifactWriter) -> Result<()> {
    let ofdm = ofdm_of(l, "dts")?;
    let s = l.run.dts;
    let n_frames = frames.unwrap_or(s.frames);
    let bs = l
        .scene
        .bs
        .get(s.bs)
        .ok_or_else(|| anyhow!("stage `dts` failed: run.dts.bs = {} is not a BS", s.bs))?;
    let run = stage("dts", run_dts(&l.scene, s.bs, &ofdm, &s.config, n_frames, seed))?;
    w.table(artifact::DTS_DETECTIONS, &io::detections_table(&run, &SensorPose::from(bs)))?;
    w.table(artifact::DTS_TRACKS, &io::track_log_table(&run))?;
    w.table(
        artifact::DTS_TRUTH,
        &stage("dts.truth", io::target_truth_table(&l.scene, n_frames, s.config.frame_dt))?,
    )?;
    let cells = (ofdm.n_subcarriers * ofdm.n_symbols) as f64;
    w.table(
        artifact::DTS_SUMMARY,
        &summary_table(&[("n_frames", n_frames as f64), ("cells_per_frame", cells), ("gate_m", s.gate_m)]),
    )?;
    Ok(())
}

fn probes_of(l: &Loaded) -> Result<ProbeConfig> {
    let grid = l.scene.material_grid.as_ref().ok_or_else(|| anyhow!("stage `omr` failed: the scenario has no `materials` section"))?;
    Ok(match l.config.materials.as_ref().and_then(|m| m.probes.clone()) {
        Some(p) => p,
        None => {
            let r = &l.run.omr.ring;
            ring_probes(grid, r.radius, r.n_tx, r.n_rx, &r.freqs)
        }
    })
}

fn run_omr_stage(l: &Loaded, seed: u64, w: &mut ArtifactWriter) -> Result<()> {
    let probes = probes_of(l)?;
    let grid = l.scene.material_grid.as_ref().expect("checked by probes_of");
    let cfg = l.run.omr.config;
    let r = stage("omr", run_omr(grid, &probes, &cfg, seed))?;
    w.table(artifact::OMR_CONTRAST, &stage("omr.write", io::contrast_table(grid, &r.estimate.contrast))?)?;
    let truth = ContrastVector {
        chi: grid.contrast.clone(),
    };
    w.table(artifact::OMR_TRUTH, &stage("omr.write", io::contrast_table(grid, &truth))?)?;
    w.table("omr_materials.csv", &io::materials_table(&r))?;
    w.table("omr_tau_sweep.csv", &io::tau_sweep_table(&r.sweep))?;
    w.table(
        artifact::OMR_SUMMARY,
        &summary_table(&[
            ("tau", r.tau),
            ("reference_freq_hz", r.reference_freq),
            ("support_threshold", cfg.support_threshold),
            ("iterations", r.estimate.iterations as f64),
            ("residual_norm", r.estimate.residual_norm),
            ("converged", if r.estimate.converged { 1.0 } else { 0.0 }),
        ]),
    )?;
    Ok(())
}

fn run_net(l: &Loaded, w: &mut ArtifactWriter) -> Result<()> {
    let s = l.run.net;
    let scene = &l.scene;
    let n = scene.bs.len();
    let mut obj = s.objective;
    if let Some(o) = l.config.ofdm {
        obj.wavelength = o.wavelength();
    }
    let demand = stage("net.demand", DemandMap::uniform(&scene.bounds, s.demand_spacing))?;
    let candidates: Vec<Point> = scene.bs.iter().map(|b| b.position).collect();
    let k = s.k.unwrap_or(n.div_ceil(2)).min(n);
    let placement = stage("net.placement", place_bs(&candidates, k, &demand, &obj))?;
    let onoff = stage("net.onoff", onoff_schedule(scene, &demand, &obj))?;

    // each active BS serves its nearest UE and senses its nearest target;
    // without them it points 50 m (users) or 100 m (sensing) along boresight
    let active: Vec<usize> = (0..n).filter(|&i| onoff.on[i]).collect();
    let nearest_or = |b: usize, pts: &[Point], fallback: f64| {
        let bs = &scene.bs[b];
        pts.iter()
            .copied()
            .filter(|p| bs.tx_array.local_angle((*p - bs.position).bearing()).abs() < std::f64::consts::FRAC_PI_2)
            .min_by(|a, c| a.distance(bs.position).total_cmp(&c.distance(bs.position)))
            .unwrap_or(bs.position + Point::from_angle(bs.tx_array.orientation) * fallback)
    };
    let ue_pts: Vec<Point> = scene.ues.iter().map(|u| u.position).collect();
    let tg_pts: Vec<Point> = scene.targets.iter().map(|t| t.position).collect();
    let users: Vec<Point> = active.iter().map(|&b| nearest_or(b, &ue_pts, 50.0)).collect();
    let sensing: Vec<Point> = active.iter().map(|&b| nearest_or(b, &tg_pts, 100.0)).collect();
    let model = stage("net.allocation", LinkModel::from_scene(scene, &active, &users, &sensing, obj.wavelength, s.noise))?;
    let budgets: Vec<f64> = active.iter().map(|&b| scene.bs[b].tx_power).collect();
    let weights = UtilityWeights { sensing: s.sensing_weight };
    let alloc = stage(
        "net.allocation",
        allocate_power_bandwidth(&model, &budgets, s.n_subbands, &weights, s.max_rounds),
    )?;

    w.table("net_placement.csv", &io::placement_table(&placement))?;
    w.table("net_placement_trace.csv", &io::trace_table(&placement.trace))?;
    w.table("net_onoff.csv", &io::onoff_table(&onoff))?;
    w.table("net_onoff_trace.csv", &io::trace_table(&onoff.trace))?;
    w.table("net_allocation.csv", &io::allocation_table(&active, &alloc))?;
    w.table("net_allocation_trace.csv", &io::trace_table(&alloc.trace))?;

    let mut report = String::new();
    let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    report.push_str(&format!("selected_sites: {}\n", list(&placement.selected)));
    report.push_str(&format!(
        "on_off: {}\n",
        onoff.on.iter().map(|b| if *b { "1" } else { "0" }).collect::<Vec<_>>().join(" ")
    ));
    report.push_str("allocation:\n  bs power band\n");
    for (i, &b) in active.iter().enumerate() {
        report.push_str(&format!("  {b} {} {}\n", num(alloc.allocation.power[i]), alloc.allocation.band[i]));
    }
    for (name, trace) in [("placement", &placement.trace), ("onoff", &onoff.trace), ("allocation", &alloc.trace)] {
        report.push_str(&format!(
            "{name}_trace: {}\n",
            trace.iter().map(|v| num(*v)).collect::<Vec<_>>().join(" ")
        ));
    }
    w.write("net_report.txt", report.as_bytes())?;
    Ok(())
}

/// Writes `metrics.csv` for an existing run directory and returns the table.
pub fn report(out_dir: &Path) -> Result<Table> {
    let t = stage("report", report_metrics(out_dir))?;
    std::fs::write(out_dir.join(artifact::METRICS), t.to_csv()?).context("writing metrics")?;
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    /// OMR measurement SNR, dB.
    Snr,
    /// DTS CFAR false-alarm probability.
    Pfa,
    /// OMR mixed-norm budget.
    Tau,
}

impl FromStr for SweepParam {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "snr" => SweepParam::Snr,
            "pfa" => SweepParam::Pfa,
            "tau" => SweepParam::Tau,
            _ => bail!("unknown sweep parameter `{s}` (expected snr, pfa or tau)"),
        })
    }
}

/// Reruns one pipeline per value in `out_dir/<param>_<i>` and collects the
/// metrics into `out_dir/sweep.csv`.
pub fn sweep(base: &RunOptions, param: SweepParam, values: &[f64]) -> Result<Table> {
    let text = std::fs::read_to_string(&base.scenario).with_context(|| format!("reading {}", base.scenario.display()))?;
    let mut doc: serde_json::Value = serde_json::from_str(&text).map_err(|e| anyhow!("{}: {e}", base.scenario.display()))?;
    let (pipeline, key, name) = match param {
        SweepParam::Snr => (Pipeline::Omr, ["omr", "config", "snr_db"], "snr"),
        SweepParam::Tau => (Pipeline::Omr, ["omr", "config", "tau"], "tau"),
        SweepParam::Pfa => (Pipeline::Dts, ["dts", "config", "detector"], "pfa"),
    };
    std::fs::create_dir_all(&base.out_dir)?;
    let mut out = Table::new(&["param", "value", "pipeline", "metric", "metric_value"]);
    for (i, &v) in values.iter().enumerate() {
        let mut node = doc
            .as_object_mut()
            .ok_or_else(|| anyhow!("scenario is not a JSON object"))?
            .entry("run")
            .or_insert_with(|| serde_json::json!({}));
        for k in key {
            if node.is_null() {
                *node = serde_json::json!({});
            }
            node = node
                .as_object_mut()
                .ok_or_else(|| anyhow!("run.{} is not an object", key.join(".")))?
                .entry(k)
                .or_insert(serde_json::Value::Null);
        }
        if param == SweepParam::Pfa {
            if node.is_null() {
                *node = serde_json::json!({});
            }
            node.as_object_mut()
                .ok_or_else(|| anyhow!("run.dts.config.detector is not an object"))?
                .insert("pfa".into(), v.into());
        } else {
            *node = v.into();
        }
        let dir = base.out_dir.join(format!("{name}_{i}"));
        std::fs::create_dir_all(&dir)?;
        let scenario = dir.join("scenario.json");
        std::fs::write(&scenario, serde_json::to_vec_pretty(&doc)?)?;
        let opts = RunOptions {
            pipeline,
            scenario,
            out_dir: dir.clone(),
            ..base.clone()
        };
        run(&opts)?;
        let m = Table::read(&dir.join(artifact::METRICS))?;
        for row in &m.rows {
            out.push(vec![name.into(), num(v), row[0].clone(), row[1].clone(), row[2].clone()]);
        }
    }
    std::fs::write(base.out_dir.join("sweep.csv"), out.to_csv()?)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writer_rejects_paths_outside_the_directory() {
        let d = tempfile::tempdir().unwrap();
        let mut w = ArtifactWriter::new(d.path()).unwrap();
        assert!(w.write("../escape.csv", b"x").is_err());
        assert!(w.write("/tmp/abs.csv", b"x").is_err());
        assert!(w.write("sub/inner.csv", b"x").is_err());
        w.write("ok.csv", b"abc").unwrap();
        let e = w.finish();
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn pipeline_names_round_trip() {
        for p in [Pipeline::Ser, Pipeline::Dts, Pipeline::Omr, Pipeline::Net, Pipeline::E2e] {
            assert_eq!(p.to_string().parse::<Pipeline>().unwrap(), p);
        }
        assert!("radar".parse::<Pipeline>().is_err());
    }
}

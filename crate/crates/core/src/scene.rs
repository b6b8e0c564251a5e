//! Ground-truth world model and scenario loading.

use crate::error::{Error, Result};
use crate::geometry::{Bounds, Point};
use crate::phy::{ArrayConfig, OfdmConfig};
use crate::rng;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Complex numbers appear in scenario files as `[re, im]`.
pub mod complex_pair {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(c: &Complex64, s: S) -> Result<S::Ok, S::Error> {
        [c.re, c.im].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Complex64, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(Complex64::new(re, im))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaseStation {
    pub position: Point,
    /// Hybrid unit (transmit) array.
    pub tx_array: ArrayConfig,
    /// Radar unit (receive) array.
    pub rx_array: ArrayConfig,
    /// Transmit power, W.
    pub tx_power: f64,
    pub on: bool,
    /// Echo calibration constant kappa in `kappa sqrt(G rcs) / R^2`.
    pub radar_constant: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserEquipment {
    pub id: usize,
    pub position: Point,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterPoint {
    pub position: Point,
    pub reflectivity: Complex64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetClass {
    Pedestrian,
    Vehicle,
    Uav,
    Bird,
}

impl TargetClass {
    pub const ALL: [TargetClass; 4] = [
        TargetClass::Pedestrian,
        TargetClass::Vehicle,
        TargetClass::Uav,
        TargetClass::Bird,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TargetClass::Pedestrian => "pedestrian",
            TargetClass::Vehicle => "vehicle",
            TargetClass::Uav => "uav",
            TargetClass::Bird => "bird",
        }
    }
}

/// A velocity change taking effect at absolute scene time `at`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Maneuver {
    pub at: f64,
    pub velocity: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicTarget {
    pub id: usize,
    pub position: Point,
    pub velocity: Point,
    /// Radar cross section, m^2.
    pub rcs: f64,
    pub class: TargetClass,
    /// Pending velocity changes, sorted by time.
    pub maneuvers: Vec<Maneuver>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialGrid {
    pub origin: Point,
    pub cell_size: f64,
    pub nx: usize,
    pub ny: usize,
    /// Contrast per cell, row-major with `x` fastest.
    pub contrast: Vec<Complex64>,
}

impl MaterialGrid {
    pub fn empty(origin: Point, cell_size: f64, nx: usize, ny: usize) -> Self {
        MaterialGrid {
            origin,
            cell_size,
            nx,
            ny,
            contrast: vec![Complex64::new(0.0, 0.0); nx * ny],
        }
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn cell_center(&self, g: usize) -> Point {
        let ix = g % self.nx;
        let iy = g / self.nx;
        Point::new(
            self.origin.x + (ix as f64 + 0.5) * self.cell_size,
            self.origin.y + (iy as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn extent(&self) -> Bounds {
        Bounds {
            min: self.origin,
            max: Point::new(
                self.origin.x + self.nx as f64 * self.cell_size,
                self.origin.y + self.ny as f64 * self.cell_size,
            ),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cell_size > 0.0) {
            return Err(Error::validation("materials", "cell_size must be positive"));
        }
        if self.nx * self.ny != self.contrast.len() {
            return Err(Error::validation(
                "materials",
                format!(
                    "nx*ny = {} but {} contrast values",
                    self.nx * self.ny,
                    self.contrast.len()
                ),
            ));
        }
        Ok(())
    }
}

/// The ground-truth world. Immutable once built; [`propagate`] returns a new
/// value.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub bs: Vec<BaseStation>,
    pub ues: Vec<UserEquipment>,
    pub sesps: Vec<ScatterPoint>,
    pub targets: Vec<DynamicTarget>,
    pub material_grid: Option<MaterialGrid>,
    pub bounds: Bounds,
    /// Scene clock, s.
    pub time: f64,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        if self.bs.is_empty() {
            return Err(Error::validation("bs", "scene needs at least one base station"));
        }
        if !(self.bounds.max.x > self.bounds.min.x && self.bounds.max.y > self.bounds.min.y) {
            return Err(Error::validation("bounds", "max must exceed min"));
        }
        let inside = |p: Point, entity: String| {
            if p.is_finite() && self.bounds.contains(p) {
                Ok(())
            } else {
                Err(Error::validation(entity, format!("position ({}, {}) outside bounds", p.x, p.y)))
            }
        };
        for (i, b) in self.bs.iter().enumerate() {
            inside(b.position, format!("bs[{i}]"))?;
            b.tx_array.validate(&format!("bs[{i}].tx_array"))?;
            b.rx_array.validate(&format!("bs[{i}].rx_array"))?;
            if !(b.tx_power >= 0.0) {
                return Err(Error::validation(format!("bs[{i}]"), "tx_power must be >= 0"));
            }
            if !(b.radar_constant > 0.0) {
                return Err(Error::validation(format!("bs[{i}]"), "radar_constant must be positive"));
            }
        }
        for (i, u) in self.ues.iter().enumerate() {
            inside(u.position, format!("ue[{i}]"))?;
        }
        for (i, s) in self.sesps.iter().enumerate() {
            inside(s.position, format!("sesp[{i}]"))?;
            if !(s.reflectivity.re.is_finite() && s.reflectivity.im.is_finite()) {
                return Err(Error::validation(format!("sesp[{i}]"), "reflectivity must be finite"));
            }
        }
        for (i, t) in self.targets.iter().enumerate() {
            inside(t.position, format!("targets[{i}]"))?;
            if !t.velocity.is_finite() || t.maneuvers.iter().any(|m| !m.velocity.is_finite()) {
                return Err(Error::validation(format!("targets[{i}]"), "velocity must be finite"));
            }
            if !(t.rcs > 0.0 && t.rcs.is_finite()) {
                return Err(Error::validation(format!("targets[{i}]"), "rcs must be positive"));
            }
        }
        if let Some(g) = &self.material_grid {
            g.validate()?;
        }
        Ok(())
    }
}

/// Advances every target by `dt` seconds under piecewise-constant velocity.
/// Static entities are untouched.
pub fn propagate(scene: &Scene, dt: f64) -> Result<Scene> {
    if !(dt >= 0.0) {
        return Err(Error::arg(format!("dt must be >= 0, got {dt}")));
    }
    let mut out = scene.clone();
    let t_end = scene.time + dt;
    for t in &mut out.targets {
        let mut now = scene.time;
        while let Some(m) = t.maneuvers.first().copied() {
            if m.at > t_end {
                break;
            }
            if m.at > now {
                t.position = t.position + t.velocity * (m.at - now);
                now = m.at;
            }
            t.velocity = m.velocity;
            t.maneuvers.remove(0);
        }
        if t_end > now {
            t.position = t.position + t.velocity * (t_end - now);
        }
    }
    out.time = t_end;
    Ok(out)
}

// ---------------------------------------------------------------------------
// Scenario file

fn default_true() -> bool {
    true
}

fn default_one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BsConfig {
    pub position: Point,
    pub tx_array: ArrayConfig,
    pub rx_array: ArrayConfig,
    #[serde(default = "default_one")]
    pub tx_power: f64,
    #[serde(default = "default_true")]
    pub on: bool,
    #[serde(default = "default_one")]
    pub radar_constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UeConfig {
    pub position: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SespConfig {
    pub position: Point,
    #[serde(with = "complex_pair", default = "unit_reflectivity")]
    pub reflectivity: Complex64,
}

fn unit_reflectivity() -> Complex64 {
    Complex64::new(1.0, 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub position: Point,
    pub velocity: Point,
    pub rcs: f64,
    pub class: TargetClass,
    #[serde(default)]
    pub maneuvers: Vec<Maneuver>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialCell {
    pub ix: usize,
    pub iy: usize,
    #[serde(with = "complex_pair")]
    pub chi: Complex64,
}

/// Probe geometry used by the material-recognition pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub tx: Vec<Point>,
    pub rx: Vec<Point>,
    pub freqs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialsConfig {
    pub origin: Point,
    pub cell_size: f64,
    pub nx: usize,
    pub ny: usize,
    #[serde(default)]
    pub cells: Vec<MaterialCell>,
    pub probes: Option<ProbeConfig>,
}

/// Randomly placed entities, drawn uniformly inside the bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomPopulation {
    #[serde(default)]
    pub n_ue: usize,
    #[serde(default)]
    pub n_sesp: usize,
    #[serde(default)]
    pub n_targets: usize,
    #[serde(default = "default_max_speed")]
    pub max_speed: f64,
}

fn default_max_speed() -> f64 {
    10.0
}

/// Top-level scenario file. The `run` section is pipeline-specific and is
/// interpreted by the runner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub bounds: Bounds,
    #[serde(default)]
    pub bs: Vec<BsConfig>,
    #[serde(default)]
    pub ue: Vec<UeConfig>,
    #[serde(default)]
    pub sesp: Vec<SespConfig>,
    #[serde(default)]
    pub targets: Vec<TargetConfig>,
    #[serde(default)]
    pub materials: Option<MaterialsConfig>,
    #[serde(default)]
    pub ofdm: Option<OfdmConfig>,
    #[serde(default)]
    pub random: Option<RandomPopulation>,
    #[serde(default)]
    pub run: serde_json::Value,
}

impl ScenarioConfig {
    /// Parses a scenario, reporting the failing field path and position.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(s);
        serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }
}

/// Builds and validates a scene. Deterministic in `(config, seed)`.
pub fn build_scene(config: &ScenarioConfig, seed: u64) -> Result<Scene> {
    let bs = config
        .bs
        .iter()
        .map(|b| BaseStation {
            position: b.position,
            tx_array: b.tx_array,
            rx_array: b.rx_array,
            tx_power: b.tx_power,
            on: b.on,
            radar_constant: b.radar_constant,
        })
        .collect();
    let mut ues: Vec<UserEquipment> = config
        .ue
        .iter()
        .enumerate()
        .map(|(id, u)| UserEquipment { id, position: u.position })
        .collect();
    let mut sesps: Vec<ScatterPoint> = config
        .sesp
        .iter()
        .map(|s| ScatterPoint {
            position: s.position,
            reflectivity: s.reflectivity,
        })
        .collect();
    let mut targets: Vec<DynamicTarget> = config
        .targets
        .iter()
        .enumerate()
        .map(|(id, t)| {
            let mut maneuvers = t.maneuvers.clone();
            maneuvers.sort_by(|a, b| a.at.total_cmp(&b.at));
            DynamicTarget {
                id,
                position: t.position,
                velocity: t.velocity,
                rcs: t.rcs,
                class: t.class,
                maneuvers,
            }
        })
        .collect();

    if let Some(r) = &config.random {
        let mut g = rng::stage_rng(seed, "scene", 0);
        let b = config.bounds;
        let draw = |g: &mut rng::StageRng| {
            Point::new(
                g.gen_range(b.min.x..=b.max.x),
                g.gen_range(b.min.y..=b.max.y),
            )
        };
        for _ in 0..r.n_ue {
            let position = draw(&mut g);
            ues.push(UserEquipment { id: ues.len(), position });
        }
        for _ in 0..r.n_sesp {
            let position = draw(&mut g);
            let reflectivity = Complex64::from_polar(g.gen_range(0.3..1.0), g.gen_range(-std::f64::consts::PI..std::f64::consts::PI));
            sesps.push(ScatterPoint { position, reflectivity });
        }
        for _ in 0..r.n_targets {
            let position = draw(&mut g);
            let speed = g.gen_range(0.0..=r.max_speed);
            let heading: f64 = g.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            let class = TargetClass::ALL[g.gen_range(0..4)];
            targets.push(DynamicTarget {
                id: targets.len(),
                position,
                velocity: Point::from_angle(heading) * speed,
                rcs: g.gen_range(0.1..10.0),
                class,
                maneuvers: Vec::new(),
            });
        }
    }

    let material_grid = match &config.materials {
        Some(m) => {
            let mut grid = MaterialGrid::empty(m.origin, m.cell_size, m.nx, m.ny);
            for (i, c) in m.cells.iter().enumerate() {
                if c.ix >= m.nx || c.iy >= m.ny {
                    return Err(Error::validation(
                        format!("materials.cells[{i}]"),
                        "cell index outside grid",
                    ));
                }
                let g = grid.index(c.ix, c.iy);
                grid.contrast[g] = c.chi;
            }
            Some(grid)
        }
        None => None,
    };

    if let Some(o) = &config.ofdm {
        o.validate()?;
    }

    let scene = Scene {
        bs,
        ues,
        sesps,
        targets,
        material_grid,
        bounds: config.bounds,
        time: 0.0,
    };
    scene.validate()?;
    Ok(scene)
}

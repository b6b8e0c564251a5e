//! Occupancy evidence grid with Dempster combination.

use super::PointCloudMap;
use crate::error::{Error, Result};
use crate::geometry::Point;

/// Belief masses of one cell over {occupied}, {empty} and the whole frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMass {
    pub occupied: f64,
    pub empty: f64,
    pub unknown: f64,
}

impl CellMass {
    pub const VACUOUS: CellMass = CellMass {
        occupied: 0.0,
        empty: 0.0,
        unknown: 1.0,
    };

    /// Dempster combination with a simple support function on {occupied}.
    fn combine_occupied(self, m: f64) -> Result<CellMass> {
        let conflict = self.empty * m;
        let norm = 1.0 - conflict;
        if !(norm > 0.0) {
            return Err(Error::arg("total conflict between evidence sources"));
        }
        Ok(CellMass {
            occupied: (self.occupied + self.unknown * m) / norm,
            empty: self.empty * (1.0 - m) / norm,
            unknown: self.unknown * (1.0 - m) / norm,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceGrid {
    pub origin: Point,
    pub cell_size: f64,
    pub nx: usize,
    pub ny: usize,
    /// Row-major, `iy * nx + ix`.
    pub cells: Vec<CellMass>,
}

impl EvidenceGrid {
    /// All-unknown grid whose cell (0, 0) has its lower-left corner at `origin`.
    pub fn new(origin: Point, cell_size: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(cell_size > 0.0) || nx == 0 || ny == 0 {
            return Err(Error::arg("evidence grid needs positive cell size and dims"));
        }
        Ok(EvidenceGrid {
            origin,
            cell_size,
            nx,
            ny,
            cells: vec![CellMass::VACUOUS; nx * ny],
        })
    }

    pub fn cell_of(&self, p: Point) -> Option<usize> {
        let fx = ((p.x - self.origin.x) / self.cell_size).floor();
        let fy = ((p.y - self.origin.y) / self.cell_size).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.nx as f64 || fy >= self.ny as f64 {
            return None;
        }
        Some(fy as usize * self.nx + fx as usize)
    }

    pub fn cell_center(&self, cell: usize) -> Point {
        let (ix, iy) = (cell % self.nx, cell / self.nx);
        Point::new(
            self.origin.x + (ix as f64 + 0.5) * self.cell_size,
            self.origin.y + (iy as f64 + 0.5) * self.cell_size,
        )
    }

    /// Cell centers whose occupied mass is at least `min_occupied`.
    pub fn occupied_points(&self, min_occupied: f64) -> PointCloudMap {
        PointCloudMap {
            points: self
                .cells
                .iter()
                .enumerate()
                .filter(|(_, m)| m.occupied >= min_occupied)
                .map(|(i, m)| super::MapPoint {
                    position: self.cell_center(i),
                    confidence: m.occupied,
                    power_db: 0.0,
                })
                .collect(),
        }
    }
}

/// Folds occupancy observations `(cell, m_occ)` into `grid`.
///
/// Observations are grouped per cell and applied in ascending mass order, so
/// the result does not depend on the order of `observations`.
pub fn fuse_evidence(grid: &EvidenceGrid, observations: &[(usize, f64)]) -> Result<EvidenceGrid> {
    let mut obs = observations.to_vec();
    for &(cell, m) in &obs {
        if !(0.0..=1.0).contains(&m) {
            return Err(Error::arg(format!("mass {m} outside [0, 1]")));
        }
        if cell >= grid.cells.len() {
            return Err(Error::arg(format!("cell {cell} outside the grid")));
        }
    }
    obs.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut out = grid.clone();
    for (cell, m) in obs {
        out.cells[cell] = out.cells[cell].combine_occupied(m)?;
    }
    Ok(out)
}

/// Observations for the cells holding map points; mass is the point
/// confidence clipped to `[0, 0.95]`.
pub fn evidence_observations(grid: &EvidenceGrid, map: &PointCloudMap) -> Vec<(usize, f64)> {
    map.points
        .iter()
        .filter_map(|p| grid.cell_of(p.position).map(|c| (c, p.confidence.clamp(0.0, 0.95))))
        .collect()
}

/// Multi-UE fusion: every map contributes evidence to the cells holding its
/// points; cells whose fused occupied mass reaches `min_occupied` become one
/// point at the mean of their member points, with the fused mass as
/// confidence and the strongest member power.
pub fn fuse_ue_maps(maps: &[PointCloudMap], grid: &EvidenceGrid, min_occupied: f64) -> Result<PointCloudMap> {
    let obs: Vec<(usize, f64)> = maps.iter().flat_map(|m| evidence_observations(grid, m)).collect();
    let fused = fuse_evidence(grid, &obs)?;
    let mut members = std::collections::BTreeMap::<usize, (Point, usize, f64)>::new();
    for p in maps.iter().flat_map(|m| &m.points) {
        if let Some(c) = grid.cell_of(p.position) {
            let e = members.entry(c).or_insert((Point::ORIGIN, 0, f64::NEG_INFINITY));
            e.0 = e.0 + p.position;
            e.1 += 1;
            e.2 = e.2.max(p.power_db);
        }
    }
    Ok(PointCloudMap {
        points: members
            .into_iter()
            .filter(|(c, _)| fused.cells[*c].occupied >= min_occupied)
            .map(|(c, (sum, n, power_db))| super::MapPoint {
                position: sum * (1.0 / n as f64),
                confidence: fused.cells[c].occupied,
                power_db,
            })
            .collect(),
    })
}

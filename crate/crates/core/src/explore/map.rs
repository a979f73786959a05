use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::splat::{GaussianMap, GaussianPrimitive};

/// Grid index as `(row, col)`; rows grow with world y, columns with world x.
pub type Cell = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum CellState {
    Unknown,
    Free,
    Obstacle,
}

impl CellState {
    pub fn pgm_value(self) -> u8 {
        match self {
            CellState::Unknown => 0,
            CellState::Free => 128,
            CellState::Obstacle => 255,
        }
    }
}

/// Ternary top-down world model.
#[derive(Debug, Clone, PartialEq)]
pub struct ExploreMap {
    width: usize,
    height: usize,
    resolution: f64,
    origin: [f64; 2],
    cells: Vec<CellState>,
}

pub const NEIGHBORS8: [(isize, isize); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];

impl ExploreMap {
    /// `origin` is the world position of the lower corner of cell (0, 0).
    pub fn new(width: usize, height: usize, resolution: f64, origin: [f64; 2]) -> Result<Self> {
        if !(resolution > 0.0) {
            return Err(Error::invalid(format!("resolution {resolution} must be > 0")));
        }
        Ok(Self {
            width,
            height,
            resolution,
            origin,
            cells: vec![CellState::Unknown; width * height],
        })
    }

    /// Builds a map from rows of characters: `#` obstacle, `.` free, `?` unknown.
    /// The first string is row 0.
    pub fn from_ascii(rows: &[&str], resolution: f64) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        let mut m = Self::new(width, height, resolution, [0.0, 0.0])?;
        for (r, line) in rows.iter().enumerate() {
            if line.chars().count() != width {
                return Err(Error::invalid("ragged ascii map"));
            }
            for (c, ch) in line.chars().enumerate() {
                let s = match ch {
                    '#' => CellState::Obstacle,
                    '.' => CellState::Free,
                    '?' => CellState::Unknown,
                    other => return Err(Error::invalid(format!("unexpected map char {other:?}"))),
                };
                m.set((r, c), s);
            }
        }
        Ok(m)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    #[inline]
    pub fn get(&self, (r, c): Cell) -> CellState {
        self.cells[r * self.width + c]
    }

    #[inline]
    pub fn set(&mut self, (r, c): Cell, s: CellState) {
        self.cells[r * self.width + c] = s;
    }

    #[inline]
    pub fn is_free(&self, c: Cell) -> bool {
        self.get(c) == CellState::Free
    }

    #[inline]
    pub fn is_explored(&self, c: Cell) -> bool {
        self.get(c) != CellState::Unknown
    }

    pub fn cells(&self) -> impl Iterator<Item = (Cell, CellState)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .map(move |(i, s)| ((i / self.width, i % self.width), *s))
    }

    pub fn count(&self, state: CellState) -> usize {
        self.cells.iter().filter(|s| **s == state).count()
    }

    /// 8-neighbors inside the grid.
    pub fn neighbors(&self, (r, c): Cell) -> impl Iterator<Item = Cell> + '_ {
        NEIGHBORS8
            .iter()
            .filter_map(move |(dr, dc)| self.offset((r, c), *dr, *dc))
    }

    #[inline]
    pub fn offset(&self, (r, c): Cell, dr: isize, dc: isize) -> Option<Cell> {
        let nr = r as isize + dr;
        let nc = c as isize + dc;
        (nr >= 0 && nc >= 0 && (nr as usize) < self.height && (nc as usize) < self.width)
            .then_some((nr as usize, nc as usize))
    }

    pub fn world_of_cell(&self, (r, c): Cell) -> [f64; 2] {
        [
            self.origin[0] + (c as f64 + 0.5) * self.resolution,
            self.origin[1] + (r as f64 + 0.5) * self.resolution,
        ]
    }

    pub fn cell_of_world(&self, p: [f64; 2]) -> Option<Cell> {
        let c = ((p[0] - self.origin[0]) / self.resolution).floor();
        let r = ((p[1] - self.origin[1]) / self.resolution).floor();
        (c >= 0.0 && r >= 0.0 && (c as usize) < self.width && (r as usize) < self.height)
            .then_some((r as usize, c as usize))
    }

    /// Marks unknown cells within `radius` meters of `center` as free.
    pub fn mark_free_disc(&mut self, center: [f64; 2], radius: f64) {
        let rc = (radius / self.resolution).ceil() as isize + 1;
        let Some(mid) = self.cell_of_world(center) else {
            return;
        };
        for dr in -rc..=rc {
            for dc in -rc..=rc {
                if let Some(cell) = self.offset(mid, dr, dc) {
                    let w = self.world_of_cell(cell);
                    let d = ((w[0] - center[0]).powi(2) + (w[1] - center[1]).powi(2)).sqrt();
                    if d <= radius && self.get(cell) == CellState::Unknown {
                        self.set(cell, CellState::Free);
                    }
                }
            }
        }
    }

    /// Binary PGM, row 0 first.
    pub fn to_pgm(&self) -> Vec<u8> {
        self.to_pgm_with_overlay(&[], 64)
    }

    /// PGM with `overlay` cells painted with `value`.
    pub fn to_pgm_with_overlay(&self, overlay: &[Cell], value: u8) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        let start = out.len();
        out.extend(self.cells.iter().map(|s| s.pgm_value()));
        for &(r, c) in overlay {
            if r < self.height && c < self.width {
                out[start + r * self.width + c] = value;
            }
        }
        out
    }

    pub fn header_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "width {}", self.width);
        let _ = writeln!(s, "height {}", self.height);
        let _ = writeln!(s, "resolution {}", self.resolution);
        let _ = writeln!(s, "origin_x {}", self.origin[0]);
        let _ = writeln!(s, "origin_y {}", self.origin[1]);
        s
    }

    /// Writes `<path>` (PGM) and `<path>.txt` (resolution/origin header).
    pub fn save(&self, path: &Path, overlay: &[Cell]) -> Result<()> {
        std::fs::write(path, self.to_pgm_with_overlay(overlay, 64)).map_err(|e| Error::io(path, e))?;
        let header = sidecar_path(path);
        std::fs::write(&header, self.header_text()).map_err(|e| Error::io(header, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let header_path = sidecar_path(path);
        let header = std::fs::read_to_string(&header_path).map_err(|e| Error::io(&header_path, e))?;
        Self::from_pgm(&bytes, &header)
    }

    pub fn from_pgm(bytes: &[u8], header: &str) -> Result<Self> {
        let ctx = "exploration map";
        let mut fields = std::collections::HashMap::new();
        for line in header.lines() {
            let mut it = line.split_whitespace();
            if let (Some(k), Some(v)) = (it.next(), it.next()) {
                let v: f64 = v.parse().map_err(|_| Error::parse(ctx, format!("bad value for {k}")))?;
                fields.insert(k.to_string(), v);
            }
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| Error::parse(ctx, format!("missing {k}")))
        };
        let (res, ox, oy) = (get("resolution")?, get("origin_x")?, get("origin_y")?);
        // P5 header: magic, width, height, maxval separated by whitespace
        let mut pos = 0;
        let mut tokens = Vec::new();
        while tokens.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::parse(ctx, "truncated PGM header"));
            }
            tokens.push(String::from_utf8_lossy(&bytes[start..pos]).to_string());
        }
        pos += 1;
        if tokens[0] != "P5" {
            return Err(Error::parse(ctx, "not a binary PGM"));
        }
        let w: usize = tokens[1].parse().map_err(|_| Error::parse(ctx, "bad width"))?;
        let h: usize = tokens[2].parse().map_err(|_| Error::parse(ctx, "bad height"))?;
        let data = bytes
            .get(pos..pos + w * h)
            .ok_or_else(|| Error::parse(ctx, "truncated PGM data"))?;
        let mut m = Self::new(w, h, res, [ox, oy])?;
        for (i, v) in data.iter().enumerate() {
            m.cells[i] = match v {
                0 => CellState::Unknown,
                255 => CellState::Obstacle,
                _ => CellState::Free,
            };
        }
        Ok(m)
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".txt");
    s.into()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExploreMapParams {
    pub floor_height: f64,
    /// Agent (camera) height above the floor.
    pub agent_height: f64,
    pub resolution: f64,
    /// Accumulated top-down opacity at or above which a cell is marked.
    pub tau: f64,
    /// Unknown border added around the primitives' footprint, meters.
    pub margin: f64,
}

impl Default for ExploreMapParams {
    fn default() -> Self {
        Self {
            floor_height: 0.0,
            agent_height: 0.88,
            resolution: 0.05,
            tau: 0.3,
            margin: 1.0,
        }
    }
}

const FLOOR_BAND: f64 = 0.1;
const HEAD_ROOM: f64 = 0.5;

/// Height class of a primitive relative to the agent slab.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeightBand {
    Floor,
    Slab,
    Ceiling,
}

impl ExploreMapParams {
    pub fn band(&self, z: f64) -> HeightBand {
        if z <= self.floor_height + FLOOR_BAND {
            HeightBand::Floor
        } else if z < self.floor_height + self.agent_height + HEAD_ROOM {
            HeightBand::Slab
        } else {
            HeightBand::Ceiling
        }
    }
}

/// Evaluates a primitive's top-down footprint at the cell centers it reaches.
/// The xy covariance is widened by a half-cell low-pass so sub-cell
/// primitives still register in their own cell.
pub(crate) fn splat_footprint(map: &ExploreMap, p: &GaussianPrimitive, mut visit: impl FnMut(Cell, f64)) {
    let cov3 = p.covariance();
    let lp = (0.5 * map.resolution).powi(2);
    let cov = Matrix2::new(cov3[(0, 0)] + lp, cov3[(0, 1)], cov3[(1, 0)], cov3[(1, 1)] + lp);
    let Some(inv) = cov.try_inverse() else {
        return;
    };
    let mean = Vector2::new(p.position.x, p.position.y);
    let ext_x = 3.0 * cov[(0, 0)].sqrt();
    let ext_y = 3.0 * cov[(1, 1)].sqrt();
    let res = map.resolution;
    let c0 = ((mean.x - ext_x - map.origin[0]) / res - 0.5).ceil().max(0.0) as isize;
    let c1 = ((mean.x + ext_x - map.origin[0]) / res - 0.5).floor() as isize;
    let r0 = ((mean.y - ext_y - map.origin[1]) / res - 0.5).ceil().max(0.0) as isize;
    let r1 = ((mean.y + ext_y - map.origin[1]) / res - 0.5).floor() as isize;
    let c1 = c1.min(map.width as isize - 1);
    let r1 = r1.min(map.height as isize - 1);
    for r in r0..=r1 {
        for c in c0..=c1 {
            let w = map.world_of_cell((r as usize, c as usize));
            let d = Vector2::new(w[0], w[1]) - mean;
            let m = (d.transpose() * inv * d)[(0, 0)];
            if m <= 9.0 {
                let a = (p.opacity * (-0.5 * m).exp()).min(0.999);
                visit((r as usize, c as usize), a);
            }
        }
    }
}

/// Grid geometry covering the map's primitives plus a margin, with the
/// origin snapped to a multiple of the resolution.
pub fn grid_bounds(map: &GaussianMap, params: &ExploreMapParams) -> ([f64; 2], usize, usize) {
    let res = params.resolution;
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in map.primitives() {
        if params.band(p.position.z) == HeightBand::Ceiling {
            continue;
        }
        for i in 0..2 {
            lo[i] = lo[i].min(p.position[i]);
            hi[i] = hi[i].max(p.position[i]);
        }
    }
    if !lo[0].is_finite() {
        lo = [0.0, 0.0];
        hi = [0.0, 0.0];
    }
    let origin = [
        ((lo[0] - params.margin) / res).floor() * res,
        ((lo[1] - params.margin) / res).floor() * res,
    ];
    let width = (((hi[0] + params.margin) - origin[0]) / res).ceil().max(1.0) as usize;
    let height = (((hi[1] + params.margin) - origin[1]) / res).ceil().max(1.0) as usize;
    (origin, width, height)
}

/// Builds the exploration map: slab primitives (between floor band and
/// ceiling) splatted top-down mark obstacles where their accumulated opacity
/// reaches `tau`; floor-band primitives mark free cells the same way; an
/// obstacle mark always wins.
pub fn build_exploration_map(map: &GaussianMap, params: &ExploreMapParams) -> Result<ExploreMap> {
    let (origin, w, h) = grid_bounds(map, params);
    build_exploration_map_in(map, params, origin, w, h)
}

/// Same as [`build_exploration_map`] on a caller-chosen grid.
pub fn build_exploration_map_in(
    map: &GaussianMap,
    params: &ExploreMapParams,
    origin: [f64; 2],
    width: usize,
    height: usize,
) -> Result<ExploreMap> {
    let mut out = ExploreMap::new(width, height, params.resolution, origin)?;
    let mut t_slab = vec![1.0f64; width * height];
    let mut t_floor = vec![1.0f64; width * height];
    for p in map.primitives() {
        let target = match params.band(p.position.z) {
            HeightBand::Floor => &mut t_floor,
            HeightBand::Slab => &mut t_slab,
            HeightBand::Ceiling => continue,
        };
        splat_footprint(&out, p, |(r, c), a| target[r * width + c] *= 1.0 - a);
    }
    for i in 0..width * height {
        out.cells[i] = if 1.0 - t_slab[i] >= params.tau {
            CellState::Obstacle
        } else if 1.0 - t_floor[i] >= params.tau {
            CellState::Free
        } else {
            CellState::Unknown
        };
    }
    Ok(out)
}

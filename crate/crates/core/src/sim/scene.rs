use std::collections::VecDeque;
use std::path::Path;

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explore::{CellState, ExploreMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Room {
    pub fn center(&self) -> [f64; 2] {
        [0.5 * (self.min[0] + self.max[0]), 0.5 * (self.min[1] + self.max[1])]
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub color: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub category: String,
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub color: [f64; 3],
}

impl SceneObject {
    pub fn center(&self) -> Vector3<f64> {
        (Vector3::from(self.min) + Vector3::from(self.max)) / 2.0
    }

    /// Horizontal distance from `p` to the footprint rectangle.
    pub fn distance_xy(&self, p: [f64; 2]) -> f64 {
        let dx = (self.min[0] - p[0]).max(p[0] - self.max[0]).max(0.0);
        let dy = (self.min[1] - p[1]).max(p[1] - self.max[1]).max(0.0);
        dx.hypot(dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Start {
    pub pos: [f64; 2],
    /// Degrees, counter-clockwise from +x.
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub rooms: Vec<Room>,
    pub walls: Vec<Wall>,
    pub objects: Vec<SceneObject>,
    pub floor_z: f64,
    pub ceiling_z: f64,
    pub start: Start,
    pub target_category: String,
    #[serde(default)]
    pub floor_color: [f64; 3],
}

impl Scene {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::parse("scene", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn targets(&self) -> impl Iterator<Item = (usize, &SceneObject)> {
        self.objects
            .iter()
            .enumerate()
            .filter(move |(_, o)| o.category == self.target_category)
    }

    /// Horizontal bounds of all walls.
    pub fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for w in &self.walls {
            for i in 0..2 {
                lo[i] = lo[i].min(w.min[i]);
                hi[i] = hi[i].max(w.max[i]);
            }
        }
        for r in &self.rooms {
            for i in 0..2 {
                lo[i] = lo[i].min(r.min[i]);
                hi[i] = hi[i].max(r.max[i]);
            }
        }
        (lo, hi)
    }

    /// Ground-truth occupancy: obstacle wherever a wall or object footprint
    /// comes within `inflate` meters of the cell center, free inside rooms,
    /// unknown (outside) elsewhere.
    pub fn occupancy(&self, resolution: f64, inflate: f64) -> ExploreMap {
        let (lo, hi) = self.bounds();
        let origin = [
            (lo[0] / resolution).floor() * resolution - resolution,
            (lo[1] / resolution).floor() * resolution - resolution,
        ];
        let w = ((hi[0] - origin[0]) / resolution).ceil() as usize + 2;
        let h = ((hi[1] - origin[1]) / resolution).ceil() as usize + 2;
        let mut m = ExploreMap::new(w, h, resolution, origin).expect("positive resolution");
        let boxes: Vec<([f64; 3], [f64; 3])> = self
            .walls
            .iter()
            .map(|w| (w.min, w.max))
            .chain(self.objects.iter().map(|o| (o.min, o.max)))
            .collect();
        for r in 0..h {
            for c in 0..w {
                let p = m.world_of_cell((r, c));
                let blocked = boxes.iter().any(|(mn, mx)| {
                    let dx = (mn[0] - p[0]).max(p[0] - mx[0]).max(0.0);
                    let dy = (mn[1] - p[1]).max(p[1] - mx[1]).max(0.0);
                    dx.hypot(dy) <= inflate
                });
                let state = if blocked {
                    CellState::Obstacle
                } else if self.rooms.iter().any(|room| room.contains(p)) {
                    CellState::Free
                } else {
                    CellState::Unknown
                };
                m.set((r, c), state);
            }
        }
        m
    }
}

/// Size of one object category, `[x, y, z]` meters, plus its color.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub category: String,
    pub size: [f64; 3],
    pub color: [f64; 3],
    /// Height of the object's underside above the floor.
    #[serde(default)]
    pub elevation: f64,
}

pub fn default_catalog() -> Vec<CatalogEntry> {
    let e = |c: &str, size: [f64; 3], color: [f64; 3], elevation: f64| CatalogEntry {
        category: c.to_string(),
        size,
        color,
        elevation,
    };
    vec![
        e("chair", [0.5, 0.5, 0.9], [0.8, 0.3, 0.1], 0.0),
        e("bed", [1.9, 1.4, 0.55], [0.2, 0.3, 0.8], 0.0),
        e("sofa", [1.8, 0.8, 0.8], [0.1, 0.6, 0.3], 0.0),
        e("toilet", [0.45, 0.6, 0.8], [0.95, 0.95, 0.9], 0.0),
        e("tv_monitor", [1.0, 0.12, 0.6], [0.05, 0.05, 0.08], 0.7),
        e("plant", [0.4, 0.4, 1.1], [0.2, 0.7, 0.1], 0.0),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSpec {
    pub rooms_min: usize,
    pub rooms_max: usize,
    pub room_size_min: f64,
    pub room_size_max: f64,
    pub objects_per_room_min: usize,
    pub objects_per_room_max: usize,
    pub door_width: f64,
    pub wall_thickness: f64,
    pub ceiling_height: f64,
    /// Target category; drawn from the catalog when `None`.
    pub target_category: Option<String>,
    pub catalog: Vec<CatalogEntry>,
    /// Clearance used for the connectivity check, meters.
    pub agent_radius: f64,
    pub max_attempts: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            rooms_min: 2,
            rooms_max: 4,
            room_size_min: 3.0,
            room_size_max: 4.5,
            objects_per_room_min: 1,
            objects_per_room_max: 3,
            door_width: 1.0,
            wall_thickness: 0.1,
            ceiling_height: 2.5,
            target_category: None,
            catalog: default_catalog(),
            agent_radius: 0.18,
            max_attempts: 50,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rooms_min >= 1
            && self.rooms_min <= self.rooms_max
            && self.rooms_max <= 9
            && self.room_size_min > 0.0
            && self.room_size_min <= self.room_size_max
            && self.objects_per_room_min <= self.objects_per_room_max
            && self.door_width > 0.0
            && self.wall_thickness > 0.0
            && self.ceiling_height > 0.0
            && !self.catalog.is_empty()
            && self.max_attempts > 0;
        if !ok {
            return Err(Error::invalid(format!("invalid scene spec {self:?}")));
        }
        if let Some(t) = &self.target_category {
            if !self.catalog.iter().any(|c| &c.category == t) {
                return Err(Error::invalid(format!("target category {t} is not in the catalog")));
            }
        }
        Ok(())
    }
}

/// Generates a scene of rooms laid out on a grid, joined by doors along a
/// random spanning tree, with objects against the walls. Attempts are
/// repeated until the free space is connected and a target is reachable.
pub fn generate_scene(seed: u64, spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last = String::new();
    for _ in 0..spec.max_attempts {
        match try_generate(&mut rng, spec) {
            Ok(s) => match check_scene(&s, spec.agent_radius) {
                Ok(()) => return Ok(s),
                Err(e) => last = e,
            },
            Err(e) => last = e,
        }
    }
    Err(Error::Generation {
        attempts: spec.max_attempts,
        reason: last,
    })
}

fn shape_for(n: usize) -> (usize, usize) {
    match n {
        1 => (1, 1),
        2 => (1, 2),
        3 | 4 => (2, 2),
        5 | 6 => (2, 3),
        _ => (3, 3),
    }
}

#[derive(Debug, Clone, Copy)]
struct Door {
    /// Fixed coordinate of the wall line.
    at: f64,
    /// Gap interval along the wall.
    lo: f64,
    hi: f64,
    vertical: bool,
}

fn try_generate(rng: &mut ChaCha8Rng, spec: &SceneSpec) -> std::result::Result<Scene, String> {
    let n = rng.gen_range(spec.rooms_min..=spec.rooms_max);
    let (rows, cols) = shape_for(n);
    let widths: Vec<f64> = (0..cols)
        .map(|_| rng.gen_range(spec.room_size_min..=spec.room_size_max))
        .collect();
    let heights: Vec<f64> = (0..rows)
        .map(|_| rng.gen_range(spec.room_size_min..=spec.room_size_max))
        .collect();
    let round = |v: f64| (v * 20.0).round() / 20.0;
    let xs: Vec<f64> = std::iter::once(0.0)
        .chain(widths.iter().scan(0.0, |s, w| {
            *s += round(*w);
            Some(*s)
        }))
        .collect();
    let ys: Vec<f64> = std::iter::once(0.0)
        .chain(heights.iter().scan(0.0, |s, h| {
            *s += round(*h);
            Some(*s)
        }))
        .collect();

    // grow a connected set of n grid cells from a random seed cell
    let mut occupied = vec![false; rows * cols];
    let first = rng.gen_range(0..rows * cols);
    occupied[first] = true;
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let neighbors = |i: usize| {
        let (r, c) = (i / cols, i % cols);
        let mut v = Vec::new();
        if r > 0 {
            v.push(i - cols);
        }
        if r + 1 < rows {
            v.push(i + cols);
        }
        if c > 0 {
            v.push(i - 1);
        }
        if c + 1 < cols {
            v.push(i + 1);
        }
        v
    };
    for _ in 1..n {
        let mut frontier: Vec<(usize, usize)> = Vec::new();
        for i in 0..rows * cols {
            if occupied[i] {
                for j in neighbors(i) {
                    if !occupied[j] {
                        frontier.push((i, j));
                    }
                }
            }
        }
        let &(a, b) = frontier.choose(rng).ok_or("room layout cannot grow")?;
        occupied[b] = true;
        edges.push((a, b));
    }
    let cells: Vec<usize> = (0..rows * cols).filter(|&i| occupied[i]).collect();
    let rooms: Vec<Room> = cells
        .iter()
        .map(|&i| {
            let (r, c) = (i / cols, i % cols);
            Room {
                min: [xs[c], ys[r]],
                max: [xs[c + 1], ys[r + 1]],
            }
        })
        .collect();

    let mut doors: Vec<Door> = Vec::new();
    for &(a, b) in &edges {
        let (lo_i, hi_i) = (a.min(b), a.max(b));
        let (r, c) = (lo_i / cols, lo_i % cols);
        let (vertical, at, span) = if hi_i == lo_i + 1 {
            (true, xs[c + 1], (ys[r], ys[r + 1]))
        } else {
            (false, ys[r + 1], (xs[c], xs[c + 1]))
        };
        let margin = 0.4 + spec.wall_thickness;
        let room = span.1 - span.0 - 2.0 * margin - spec.door_width;
        if room < 0.0 {
            return Err("room too small for a door".into());
        }
        let lo = span.0 + margin + rng.gen_range(0.0..=room);
        doors.push(Door {
            at,
            lo,
            hi: lo + spec.door_width,
            vertical,
        });
    }

    let t = spec.wall_thickness / 2.0;
    let z1 = spec.ceiling_height;
    let palette = [[0.85, 0.8, 0.7], [0.7, 0.8, 0.85], [0.85, 0.75, 0.8], [0.75, 0.85, 0.7]];
    let mut walls = Vec::new();
    let mut push_segment = |vertical: bool, at: f64, a: f64, b: f64, color: [f64; 3]| {
        if b - a <= 1e-9 {
            return;
        }
        walls.push(if vertical {
            Wall {
                min: [at - t, a - t, 0.0],
                max: [at + t, b + t, z1],
                color,
            }
        } else {
            Wall {
                min: [a - t, at - t, 0.0],
                max: [b + t, at + t, z1],
                color,
            }
        });
    };
    // every grid edge bordering an occupied cell gets a wall, with gaps at doors
    for r in 0..rows {
        for c in 0..=cols {
            let left = c > 0 && occupied[r * cols + c - 1];
            let right = c < cols && occupied[r * cols + c];
            if !(left || right) {
                continue;
            }
            let color = palette[(r * cols + c) % palette.len()];
            let gap = doors
                .iter()
                .find(|d| d.vertical && (d.at - xs[c]).abs() < 1e-9 && d.lo >= ys[r] && d.hi <= ys[r + 1]);
            match gap {
                Some(d) => {
                    push_segment(true, xs[c], ys[r], d.lo, color);
                    push_segment(true, xs[c], d.hi, ys[r + 1], color);
                }
                None => push_segment(true, xs[c], ys[r], ys[r + 1], color),
            }
        }
    }
    for r in 0..=rows {
        for c in 0..cols {
            let below = r > 0 && occupied[(r - 1) * cols + c];
            let above = r < rows && occupied[r * cols + c];
            if !(below || above) {
                continue;
            }
            let color = palette[(r * cols + c + 1) % palette.len()];
            let gap = doors
                .iter()
                .find(|d| !d.vertical && (d.at - ys[r]).abs() < 1e-9 && d.lo >= xs[c] && d.hi <= xs[c + 1]);
            match gap {
                Some(d) => {
                    push_segment(false, ys[r], xs[c], d.lo, color);
                    push_segment(false, ys[r], d.hi, xs[c + 1], color);
                }
                None => push_segment(false, ys[r], xs[c], xs[c + 1], color),
            }
        }
    }

    let start_room = rng.gen_range(0..rooms.len());
    let target = match &spec.target_category {
        Some(t) => t.clone(),
        None => spec
            .catalog
            .choose(rng)
            .map(|c| c.category.clone())
            .ok_or("empty catalog")?,
    };
    let target_entry = spec
        .catalog
        .iter()
        .find(|c| c.category == target)
        .ok_or("target not in catalog")?
        .clone();
    // the target goes into a room other than the start room when possible
    let target_room = if rooms.len() > 1 {
        let others: Vec<usize> = (0..rooms.len()).filter(|&i| i != start_room).collect();
        *others.choose(rng).expect("non-empty")
    } else {
        start_room
    };

    let mut objects: Vec<SceneObject> = Vec::new();
    let keep_clear: Vec<([f64; 2], [f64; 2])> = doors
        .iter()
        .map(|d| {
            let pad = 0.9;
            if d.vertical {
                ([d.at - pad, d.lo - 0.3], [d.at + pad, d.hi + 0.3])
            } else {
                ([d.lo - 0.3, d.at - pad], [d.hi + 0.3, d.at + pad])
            }
        })
        .collect();
    let start_clear = {
        let c = rooms[start_room].center();
        ([c[0] - 0.6, c[1] - 0.6], [c[0] + 0.6, c[1] + 0.6])
    };
    for (ri, room) in rooms.iter().enumerate() {
        let mut entries: Vec<CatalogEntry> = Vec::new();
        if ri == target_room {
            entries.push(target_entry.clone());
        }
        let extra = rng.gen_range(spec.objects_per_room_min..=spec.objects_per_room_max);
        for _ in 0..extra {
            let e = spec.catalog.choose(rng).ok_or("empty catalog")?;
            // keep the target unique to its room
            if e.category != target {
                entries.push(e.clone());
            }
        }
        for e in entries {
            let mut placed = false;
            for _ in 0..40 {
                let side = rng.gen_range(0..4);
                // long side along the wall
                let (sx, sy) = if side < 2 {
                    (e.size[0], e.size[1])
                } else {
                    (e.size[1], e.size[0])
                };
                let inset = t + 0.02;
                let (x0, y0) = match side {
                    0 => (
                        rng.gen_range(room.min[0] + inset..=(room.max[0] - inset - sx).max(room.min[0] + inset)),
                        room.min[1] + inset,
                    ),
                    1 => (
                        rng.gen_range(room.min[0] + inset..=(room.max[0] - inset - sx).max(room.min[0] + inset)),
                        room.max[1] - inset - sy,
                    ),
                    2 => (
                        room.min[0] + inset,
                        rng.gen_range(room.min[1] + inset..=(room.max[1] - inset - sy).max(room.min[1] + inset)),
                    ),
                    _ => (
                        room.max[0] - inset - sx,
                        rng.gen_range(room.min[1] + inset..=(room.max[1] - inset - sy).max(room.min[1] + inset)),
                    ),
                };
                let bmin = [x0, y0];
                let bmax = [x0 + sx, y0 + sy];
                if bmax[0] > room.max[0] - inset + 1e-9
                    || bmax[1] > room.max[1] - inset + 1e-9
                    || bmin[0] < room.min[0] + inset - 1e-9
                    || bmin[1] < room.min[1] + inset - 1e-9
                {
                    continue;
                }
                let overlaps = |a: ([f64; 2], [f64; 2]), pad: f64| {
                    bmin[0] < a.1[0] + pad && bmax[0] > a.0[0] - pad && bmin[1] < a.1[1] + pad && bmax[1] > a.0[1] - pad
                };
                if keep_clear.iter().any(|k| overlaps(*k, 0.0)) || (ri == start_room && overlaps(start_clear, 0.0)) {
                    continue;
                }
                if objects
                    .iter()
                    .any(|o| overlaps(([o.min[0], o.min[1]], [o.max[0], o.max[1]]), 0.5))
                {
                    continue;
                }
                objects.push(SceneObject {
                    category: e.category.clone(),
                    min: [bmin[0], bmin[1], e.elevation],
                    max: [bmax[0], bmax[1], e.elevation + e.size[2]],
                    color: e.color,
                });
                placed = true;
                break;
            }
            if !placed && e.category == target {
                return Err("could not place the target".into());
            }
        }
    }
    let c = rooms[start_room].center();
    let yaw = (rng.gen_range(0..12) * 30) as f64 - 180.0;
    Ok(Scene {
        rooms,
        walls,
        objects,
        floor_z: 0.0,
        ceiling_z: spec.ceiling_height,
        start: Start { pos: c, yaw },
        target_category: target,
        floor_color: [0.55, 0.45, 0.35],
    })
}

/// Free cells reachable from the start on the inflated ground-truth grid.
pub fn reachable_from_start(scene: &Scene, m: &ExploreMap) -> Vec<bool> {
    let w = m.width();
    let mut seen = vec![false; w * m.height()];
    let Some(s) = m.cell_of_world(scene.start.pos) else {
        return seen;
    };
    if !m.is_free(s) {
        return seen;
    }
    let mut q = VecDeque::from([s]);
    seen[s.0 * w + s.1] = true;
    while let Some(a) = q.pop_front() {
        for b in m.neighbors(a) {
            let diag = a.0 != b.0 && a.1 != b.1;
            if m.is_free(b) && !seen[b.0 * w + b.1] && (!diag || (m.is_free((a.0, b.1)) && m.is_free((b.0, a.1)))) {
                seen[b.0 * w + b.1] = true;
                q.push_back(b);
            }
        }
    }
    seen
}

/// Checks that every room and some target are reachable from the start.
pub fn check_scene(scene: &Scene, agent_radius: f64) -> std::result::Result<(), String> {
    let m = scene.occupancy(0.05, agent_radius);
    let seen = reachable_from_start(scene, &m);
    let w = m.width();
    if !seen.iter().any(|s| *s) {
        return Err("start is blocked".into());
    }
    for (i, room) in scene.rooms.iter().enumerate() {
        let reached = m
            .cells()
            .any(|(c, _)| seen[c.0 * w + c.1] && room.contains(m.world_of_cell(c)));
        if !reached {
            return Err(format!("room {i} is not reachable"));
        }
    }
    if scene.targets().next().is_none() {
        return Err("no target instance".into());
    }
    let target_ok = scene.targets().any(|(_, o)| {
        m.cells()
            .any(|(c, _)| seen[c.0 * w + c.1] && o.distance_xy(m.world_of_cell(c)) <= 0.8)
    });
    if !target_ok {
        return Err("no target is reachable".into());
    }
    Ok(())
}

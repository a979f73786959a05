//! Obstacle-aware shortest paths from the agent to frontier representatives.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explore::{Cell, DistanceField, ExploreMap, FrontierCluster, NEIGHBORS8};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GuidanceConfig {
    /// Cost of an orthogonal move; diagonal moves cost `step_length * sqrt(2)`.
    pub step_length: f64,
    /// Obstacle distance (cells) below which the proximity penalty applies.
    pub safety_cells: f64,
    pub omega: f64,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            step_length: 4.0,
            safety_cells: 10.0,
            omega: 5.0,
        }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_length > 0.0) || !(self.safety_cells >= 0.0) || !(self.omega >= 0.0) {
            return Err(Error::invalid(format!("invalid guidance config {self:?}")));
        }
        Ok(())
    }
}

/// Proximity penalty for entering a cell `d_cells` away from the nearest
/// obstacle. Zero at and beyond the safety distance.
pub fn penalty(d_cells: f64, cfg: &GuidanceConfig) -> f64 {
    if d_cells >= cfg.safety_cells {
        0.0
    } else {
        cfg.omega * (2.0 * (cfg.safety_cells - d_cells)).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceTrajectory {
    /// Start to frontier representative, consecutive cells 8-adjacent.
    pub nodes: Vec<Cell>,
    /// Accumulated cost at each node; the start costs 0.
    pub costs: Vec<f64>,
    /// Id of the target frontier cluster.
    pub target: usize,
    /// World xy of each node's cell center.
    pub points: Vec<[f64; 2]>,
}

impl GuidanceTrajectory {
    pub fn total_cost(&self) -> f64 {
        self.costs.last().copied().unwrap_or(0.0)
    }

    /// Path length in meters along the node polyline.
    pub fn length(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    cost: f64,
    cell: Cell,
}

impl Eq for Entry {}

impl Ord for Entry {
    // min-heap on (cost, cell)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Move cost from `a` into its neighbor `b`, or `None` when the move is not
/// allowed (blocked target or a diagonal squeezing past a non-free corner).
#[inline]
pub fn edge_cost(m: &ExploreMap, df: &DistanceField, a: Cell, b: Cell, cfg: &GuidanceConfig) -> Option<f64> {
    if !m.is_free(b) {
        return None;
    }
    let diagonal = a.0 != b.0 && a.1 != b.1;
    if diagonal && !(m.is_free((a.0, b.1)) && m.is_free((b.0, a.1))) {
        return None;
    }
    let step = if diagonal {
        cfg.step_length * std::f64::consts::SQRT_2
    } else {
        cfg.step_length
    };
    Some(step + penalty(df.get(b) as f64, cfg))
}

/// Dijkstra from `start` to the cluster representative over free cells.
pub fn plan_guidance(
    m: &ExploreMap,
    df: &DistanceField,
    start: Cell,
    goal: &FrontierCluster,
    cfg: &GuidanceConfig,
) -> Result<GuidanceTrajectory> {
    cfg.validate()?;
    let (nodes, costs) = shortest_path(m, df, start, goal.cell, cfg)?;
    let points = nodes.iter().map(|c| m.world_of_cell(*c)).collect();
    Ok(GuidanceTrajectory {
        nodes,
        costs,
        target: goal.id,
        points,
    })
}

/// Node sequence and accumulated costs of the cheapest path `start -> goal`.
pub fn shortest_path(
    m: &ExploreMap,
    df: &DistanceField,
    start: Cell,
    goal: Cell,
    cfg: &GuidanceConfig,
) -> Result<(Vec<Cell>, Vec<f64>)> {
    let inside = |c: Cell| c.0 < m.height() && c.1 < m.width();
    if !inside(start) || !m.is_free(start) {
        return Err(Error::invalid(format!("start {start:?} is not a free cell")));
    }
    if !inside(goal) || !m.is_free(goal) {
        return Err(Error::invalid(format!("goal {goal:?} is not a free cell")));
    }
    let w = m.width();
    let idx = |c: Cell| c.0 * w + c.1;
    let mut dist = vec![f64::INFINITY; w * m.height()];
    let mut parent: Vec<Option<Cell>> = vec![None; w * m.height()];
    let mut heap = BinaryHeap::new();
    dist[idx(start)] = 0.0;
    heap.push(Entry { cost: 0.0, cell: start });
    while let Some(Entry { cost, cell }) = heap.pop() {
        if cost > dist[idx(cell)] {
            continue;
        }
        if cell == goal {
            break;
        }
        for (dr, dc) in NEIGHBORS8 {
            let Some(n) = m.offset(cell, dr, dc) else {
                continue;
            };
            let Some(wt) = edge_cost(m, df, cell, n, cfg) else {
                continue;
            };
            let nc = cost + wt;
            if nc < dist[idx(n)] {
                dist[idx(n)] = nc;
                parent[idx(n)] = Some(cell);
                heap.push(Entry { cost: nc, cell: n });
            }
        }
    }
    if !dist[idx(goal)].is_finite() {
        return Err(Error::Unreachable(format!("no free path from {start:?} to {goal:?}")));
    }
    let mut nodes = vec![goal];
    let mut cur = goal;
    while let Some(p) = parent[idx(cur)] {
        nodes.push(p);
        cur = p;
    }
    nodes.reverse();
    let costs = nodes.iter().map(|c| dist[idx(*c)]).collect();
    Ok((nodes, costs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cluster_at(m: &ExploreMap, cell: Cell) -> FrontierCluster {
        FrontierCluster {
            id: 7,
            member_cells: vec![cell],
            centroid: m.world_of_cell(cell),
            cell,
            mean: m.world_of_cell(cell),
        }
    }

    #[test]
    fn penalty_values() {
        let cfg = GuidanceConfig::default();
        assert_eq!(penalty(10.0, &cfg), 0.0);
        assert!((penalty(8.0, &cfg) - 5.0 * 4f64.exp()).abs() < 1e-9);
        let off = GuidanceConfig { omega: 0.0, ..cfg };
        assert_eq!(penalty(0.0, &off), 0.0);
    }

    #[test]
    fn straight_corridor() {
        let m = ExploreMap::from_ascii(&["..........", "..........", ".........."], 0.1).unwrap();
        let df = DistanceField::compute(&m);
        let cfg = GuidanceConfig {
            omega: 0.0,
            ..Default::default()
        };
        let t = plan_guidance(&m, &df, (1, 0), &cluster_at(&m, (1, 9)), &cfg).unwrap();
        assert_eq!(t.nodes.len(), 10);
        assert!(t.nodes.iter().all(|c| c.0 == 1));
        assert_eq!(t.total_cost(), 9.0 * 4.0);
        assert_eq!(t.target, 7);
        assert!(t.costs.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn closed_room_unreachable() {
        let m = ExploreMap::from_ascii(&["...#...", "...#...", "...#..."], 0.1).unwrap();
        let df = DistanceField::compute(&m);
        let r = plan_guidance(&m, &df, (0, 0), &cluster_at(&m, (2, 6)), &GuidanceConfig::default());
        assert!(matches!(r, Err(Error::Unreachable(_))));
    }

    #[test]
    fn no_corner_cutting() {
        let m = ExploreMap::from_ascii(&[".#", "#."], 0.1).unwrap();
        let df = DistanceField::compute(&m);
        let r = shortest_path(&m, &df, (0, 0), (1, 1), &GuidanceConfig::default());
        assert!(matches!(r, Err(Error::Unreachable(_))));
    }
}

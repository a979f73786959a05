use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::explore::{Cell, ExploreMap};

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    t: f64,
    cell: Cell,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.t.total_cmp(&self.t).then_with(|| other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// First-order upwind Eikonal arrival times (in cells, unit speed over free
/// cells) from `goal`. Unreached and non-free cells are infinite.
pub fn arrival_times(m: &ExploreMap, goal: Cell) -> Vec<f64> {
    let (w, h) = (m.width(), m.height());
    let mut t = vec![f64::INFINITY; w * h];
    let mut accepted = vec![false; w * h];
    if !m.is_free(goal) {
        return t;
    }
    let idx = |(r, c): Cell| r * w + c;
    t[idx(goal)] = 0.0;
    let mut heap = BinaryHeap::from([Entry { t: 0.0, cell: goal }]);
    while let Some(Entry { t: tc, cell }) = heap.pop() {
        if accepted[idx(cell)] || tc > t[idx(cell)] {
            continue;
        }
        accepted[idx(cell)] = true;
        for (dr, dc) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
            let Some(n) = m.offset(cell, dr, dc) else { continue };
            if accepted[idx(n)] || !m.is_free(n) {
                continue;
            }
            let axis_min = |a: Option<Cell>, b: Option<Cell>| {
                [a, b]
                    .into_iter()
                    .flatten()
                    .filter(|c| accepted[idx(*c)])
                    .map(|c| t[idx(c)])
                    .fold(f64::INFINITY, f64::min)
            };
            let a = axis_min(m.offset(n, -1, 0), m.offset(n, 1, 0));
            let b = axis_min(m.offset(n, 0, -1), m.offset(n, 0, 1));
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let cand = if hi.is_finite() && hi - lo < 1.0 {
                0.5 * (lo + hi + (2.0 - (hi - lo).powi(2)).sqrt())
            } else {
                lo + 1.0
            };
            if cand < t[idx(n)] {
                t[idx(n)] = cand;
                heap.push(Entry { t: cand, cell: n });
            }
        }
    }
    t
}

/// Cell path from `start` to `goal` by steepest descent on the arrival-time
/// field over 8-neighbors, without cutting obstacle corners.
pub fn plan_local_cells(m: &ExploreMap, start: Cell, goal: Cell) -> Result<Vec<Cell>> {
    if !m.is_free(start) {
        return Err(Error::invalid(format!("start cell {start:?} is not free")));
    }
    if !m.is_free(goal) {
        return Err(Error::Unreachable(format!("goal cell {goal:?} is not free")));
    }
    let w = m.width();
    let t = arrival_times(m, goal);
    if !t[start.0 * w + start.1].is_finite() {
        return Err(Error::Unreachable(format!("no free route from {start:?} to {goal:?}")));
    }
    let mut path = vec![start];
    let mut cur = start;
    while cur != goal {
        let here = t[cur.0 * w + cur.1];
        let next = m
            .neighbors(cur)
            .filter(|&n| {
                let diag = n.0 != cur.0 && n.1 != cur.1;
                m.is_free(n) && (!diag || (m.is_free((cur.0, n.1)) && m.is_free((n.0, cur.1))))
            })
            .map(|n| {
                let step = if n.0 != cur.0 && n.1 != cur.1 {
                    std::f64::consts::SQRT_2
                } else {
                    1.0
                };
                // drop in arrival time per unit length moved
                ((t[n.0 * w + n.1] - here) / step, n)
            })
            .filter(|(s, _)| *s < 0.0)
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        match next {
            Some((_, n)) => {
                path.push(n);
                cur = n;
            }
            None => return Err(Error::Unreachable(format!("descent stalled at {cur:?}"))),
        }
    }
    Ok(path)
}

/// World-space waypoints (cell centers) from `start` to `goal`.
pub fn plan_local(m: &ExploreMap, start: Cell, goal: Cell) -> Result<Vec<[f64; 2]>> {
    Ok(plan_local_cells(m, start, goal)?
        .into_iter()
        .map(|c| m.world_of_cell(c))
        .collect())
}

pub fn polyline_length(points: &[[f64; 2]]) -> f64 {
    points
        .windows(2)
        .map(|p| (p[1][0] - p[0][0]).hypot(p[1][1] - p[0][1]))
        .sum()
}

/// Shortest 8-connected route length in meters (no corner cutting) from
/// `start` to the nearest cell satisfying `is_goal`.
pub fn grid_shortest_length(m: &ExploreMap, start: Cell, is_goal: impl Fn(Cell) -> bool) -> Option<f64> {
    let w = m.width();
    let mut dist = vec![f64::INFINITY; w * m.height()];
    if !m.is_free(start) {
        return None;
    }
    dist[start.0 * w + start.1] = 0.0;
    let mut heap = BinaryHeap::from([Entry { t: 0.0, cell: start }]);
    while let Some(Entry { t: d, cell }) = heap.pop() {
        if d > dist[cell.0 * w + cell.1] {
            continue;
        }
        if is_goal(cell) {
            return Some(d * m.resolution());
        }
        for n in m.neighbors(cell) {
            let diag = n.0 != cell.0 && n.1 != cell.1;
            if !m.is_free(n) || (diag && !(m.is_free((cell.0, n.1)) && m.is_free((n.0, cell.1)))) {
                continue;
            }
            let nd = d + if diag { std::f64::consts::SQRT_2 } else { 1.0 };
            if nd < dist[n.0 * w + n.1] {
                dist[n.0 * w + n.1] = nd;
                heap.push(Entry { t: nd, cell: n });
            }
        }
    }
    None
}

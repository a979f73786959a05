use std::collections::VecDeque;

use super::distance::DistanceField;
use super::map::{Cell, CellState, ExploreMap};

/// Radius (Chebyshev, cells) searched when snapping a frontier away from walls.
pub const REFINE_RADIUS: isize = 2;

/// Free cells with at least one unknown 8-neighbor. Cells outside the grid
/// do not count as unknown. Row-major order.
pub fn raw_frontiers(m: &ExploreMap) -> Vec<Cell> {
    m.cells()
        .filter(|(c, s)| *s == CellState::Free && unknown_neighbors(m, *c) > 0)
        .map(|(c, _)| c)
        .collect()
}

fn unknown_neighbors(m: &ExploreMap, c: Cell) -> usize {
    m.neighbors(c).filter(|n| m.get(*n) == CellState::Unknown).count()
}

fn obstacle_adjacent(m: &ExploreMap, c: Cell) -> bool {
    m.neighbors(c).any(|n| m.get(n) == CellState::Obstacle)
}

/// Snaps a frontier to the best free, non-obstacle-adjacent cell within
/// [`REFINE_RADIUS`]: nearest by Chebyshev distance, then most unknown
/// neighbors, then nearest by Euclidean distance, then lowest (row, col).
/// Returns the cell unchanged when no candidate exists.
pub fn refine_frontier(m: &ExploreMap, c: Cell) -> Cell {
    let mut best: Option<((isize, isize, isize, Cell), Cell)> = None;
    for dr in -REFINE_RADIUS..=REFINE_RADIUS {
        for dc in -REFINE_RADIUS..=REFINE_RADIUS {
            let Some(n) = m.offset(c, dr, dc) else {
                continue;
            };
            if !m.is_free(n) || obstacle_adjacent(m, n) {
                continue;
            }
            let key = (
                dr.abs().max(dc.abs()),
                -(unknown_neighbors(m, n) as isize),
                dr * dr + dc * dc,
                n,
            );
            if best.as_ref().is_none_or(|(k, _)| key < *k) {
                best = Some((key, n));
            }
        }
    }
    best.map_or(c, |(_, n)| n)
}

/// Raw frontiers snapped away from walls, deduplicated, in row-major order.
pub fn extract_frontiers(m: &ExploreMap) -> Vec<Cell> {
    let mut out: Vec<Cell> = raw_frontiers(m).into_iter().map(|c| refine_frontier(m, c)).collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// A group of frontier cells sharing a watershed region.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontierCluster {
    pub id: usize,
    pub member_cells: Vec<Cell>,
    /// World position of `cell`; the representative frontier point.
    pub centroid: [f64; 2],
    /// Free cell nearest the members' mean.
    pub cell: Cell,
    /// Unsnapped mean of the members' world coordinates.
    pub mean: [f64; 2],
}

/// Watershed regions over free cells, seeded at local maxima of the distance
/// field (plateaus merged). `labels[r * width + c]` is the region index of a
/// free cell reachable from some seed, `None` otherwise.
pub fn watershed_labels(m: &ExploreMap, df: &DistanceField) -> Vec<Option<usize>> {
    let (w, h) = (m.width(), m.height());
    let n = w * h;
    let mut labels: Vec<Option<usize>> = vec![None; n];
    let idx = |(r, c): Cell| r * w + c;

    // plateau-merged local maxima: connected equal-distance free components
    // with no strictly higher free neighbor
    let mut seen = vec![false; n];
    let mut seeds: Vec<Vec<Cell>> = Vec::new();
    for r in 0..h {
        for c in 0..w {
            let start = (r, c);
            if seen[idx(start)] || !m.is_free(start) {
                continue;
            }
            let d0 = df.get(start);
            let mut comp = vec![start];
            let mut maximal = true;
            seen[idx(start)] = true;
            let mut q = VecDeque::from([start]);
            while let Some(a) = q.pop_front() {
                for b in m.neighbors(a) {
                    if !m.is_free(b) {
                        continue;
                    }
                    let db = df.get(b);
                    if db > d0 {
                        maximal = false;
                    } else if db == d0 && !seen[idx(b)] {
                        seen[idx(b)] = true;
                        comp.push(b);
                        q.push_back(b);
                    }
                }
            }
            if maximal {
                seeds.push(comp);
            }
        }
    }

    // priority flood: higher distance first, FIFO among equals
    let mut heap = std::collections::BinaryHeap::new();
    let mut counter: u64 = 0;
    for (k, comp) in seeds.iter().enumerate() {
        for &c in comp {
            labels[idx(c)] = Some(k);
            heap.push((df.get(c), std::cmp::Reverse(counter), c));
            counter += 1;
        }
    }
    while let Some((_, _, a)) = heap.pop() {
        let la = labels[idx(a)];
        for b in m.neighbors(a) {
            if m.is_free(b) && labels[idx(b)].is_none() {
                labels[idx(b)] = la;
                heap.push((df.get(b), std::cmp::Reverse(counter), b));
                counter += 1;
            }
        }
    }
    labels
}

/// Groups frontiers by watershed region. Clusters are ordered by centroid
/// (world x, then y) and numbered from 0 in that order.
pub fn cluster_frontiers(m: &ExploreMap, frontiers: &[Cell]) -> Vec<FrontierCluster> {
    if frontiers.is_empty() {
        return Vec::new();
    }
    let df = DistanceField::compute(m);
    let labels = watershed_labels(m, &df);
    let w = m.width();
    let mut groups: std::collections::BTreeMap<Option<usize>, Vec<Cell>> = Default::default();
    for &f in frontiers {
        // frontier cells are free, so unlabeled ones only occur off any seed's reach
        groups.entry(labels[f.0 * w + f.1]).or_default().push(f);
    }
    let mut clusters: Vec<FrontierCluster> = groups
        .into_iter()
        .map(|(label, member_cells)| {
            let k = member_cells.len() as f64;
            let mean_rc = [
                member_cells.iter().map(|c| c.0 as f64).sum::<f64>() / k,
                member_cells.iter().map(|c| c.1 as f64).sum::<f64>() / k,
            ];
            let same_basin = |c: Cell| labels[c.0 * w + c.1] == label;
            let cell = nearest_free(m, mean_rc, &member_cells, same_basin);
            let o = m.origin();
            let res = m.resolution();
            FrontierCluster {
                id: 0,
                centroid: m.world_of_cell(cell),
                cell,
                mean: [o[0] + (mean_rc[1] + 0.5) * res, o[1] + (mean_rc[0] + 0.5) * res],
                member_cells,
            }
        })
        .collect();
    clusters.sort_by(|a, b| {
        a.mean
            .partial_cmp(&b.mean)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.member_cells.cmp(&b.member_cells))
    });
    for (i, c) in clusters.iter_mut().enumerate() {
        c.id = i;
    }
    clusters
}

/// Free cell of the same basin closest to `p` (in cell units); prefers
/// member cells on ties.
fn nearest_free(m: &ExploreMap, p: [f64; 2], members: &[Cell], same_basin: impl Fn(Cell) -> bool) -> Cell {
    let d2 = |c: &Cell| (c.0 as f64 - p[0]).powi(2) + (c.1 as f64 - p[1]).powi(2);
    let mut best = members[0];
    let mut bd = d2(&best);
    for c in members {
        let d = d2(c);
        if d < bd || (d == bd && *c < best) {
            best = *c;
            bd = d;
        }
    }
    // search a window bounded by the best member distance
    let rad = bd.sqrt().ceil() as isize + 1;
    let (pr, pc) = (p[0].round() as isize, p[1].round() as isize);
    for r in pr - rad..=pr + rad {
        for c in pc - rad..=pc + rad {
            if r < 0 || c < 0 || r as usize >= m.height() || c as usize >= m.width() {
                continue;
            }
            let cell = (r as usize, c as usize);
            if !m.is_free(cell) || !same_basin(cell) {
                continue;
            }
            let d = d2(&cell);
            if d < bd - 1e-12 {
                best = cell;
                bd = d;
            }
        }
    }
    best
}

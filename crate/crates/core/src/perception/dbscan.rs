//! DBSCAN over (pitch, yaw) angle pairs with a wrap-around yaw metric.
//!
//! Neighbor queries use a bucket grid of side `eps`; yaw buckets are cyclic.
//! Points are visited in input order, so labels are deterministic.

use std::collections::VecDeque;

/// Angular point in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnglePoint {
    pub pitch: f64,
    pub yaw: f64,
}

/// Signed yaw difference wrapped to `[-180, 180)`.
#[inline]
pub fn yaw_delta(a: f64, b: f64) -> f64 {
    (a - b + 180.0).rem_euclid(360.0) - 180.0
}

#[inline]
pub fn angular_distance(a: &AnglePoint, b: &AnglePoint) -> f64 {
    let dy = yaw_delta(a.yaw, b.yaw);
    let dp = a.pitch - b.pitch;
    (dy * dy + dp * dp).sqrt()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    /// Cluster index per point; `None` marks noise.
    pub labels: Vec<Option<usize>>,
    pub cluster_count: usize,
}

impl Clustering {
    pub fn members(&self, cluster: usize) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(move |(_, l)| **l == Some(cluster))
            .map(|(i, _)| i)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.cluster_count];
        for l in self.labels.iter().flatten() {
            sizes[*l] += 1;
        }
        sizes
    }
}

struct Buckets {
    n_yaw: usize,
    pitch_min: f64,
    n_pitch: usize,
    eps: f64,
    cells: Vec<Vec<usize>>,
}

impl Buckets {
    fn new(points: &[AnglePoint], eps: f64) -> Self {
        let n_yaw = ((360.0 / eps).floor() as usize).max(1);
        let pitch_min = points.iter().map(|p| p.pitch).fold(f64::INFINITY, f64::min);
        let pitch_max = points.iter().map(|p| p.pitch).fold(f64::NEG_INFINITY, f64::max);
        let n_pitch = (((pitch_max - pitch_min) / eps).floor() as usize + 1).max(1);
        let mut b = Self {
            n_yaw,
            pitch_min,
            n_pitch,
            eps,
            cells: vec![Vec::new(); n_yaw * n_pitch],
        };
        for (i, p) in points.iter().enumerate() {
            let (r, c) = b.key(p);
            b.cells[r * n_yaw + c].push(i);
        }
        b
    }

    fn key(&self, p: &AnglePoint) -> (usize, usize) {
        let r = (((p.pitch - self.pitch_min) / self.eps).floor() as usize).min(self.n_pitch - 1);
        let c = ((p.yaw.rem_euclid(360.0) / (360.0 / self.n_yaw as f64)).floor() as usize) % self.n_yaw;
        (r, c)
    }

    fn neighbors(&self, points: &[AnglePoint], i: usize, out: &mut Vec<usize>) {
        out.clear();
        let p = &points[i];
        let (r, c) = self.key(p);
        let rows = r.saturating_sub(1)..=(r + 1).min(self.n_pitch - 1);
        let mut cols = [c, (c + 1) % self.n_yaw, (c + self.n_yaw - 1) % self.n_yaw];
        cols.sort_unstable();
        let ncols = if self.n_yaw <= 2 {
            // fewer than three distinct columns
            let mut u = cols.to_vec();
            u.dedup();
            u
        } else {
            cols.to_vec()
        };
        for rr in rows {
            for &cc in &ncols {
                for &j in &self.cells[rr * self.n_yaw + cc] {
                    if angular_distance(p, &points[j]) <= self.eps {
                        out.push(j);
                    }
                }
            }
        }
    }
}

/// Clusters `points`; a point is core when at least `min_pts` points
/// (itself included) lie within `eps` degrees.
pub fn dbscan(points: &[AnglePoint], eps: f64, min_pts: usize) -> Clustering {
    let n = points.len();
    let mut labels: Vec<Option<usize>> = vec![None; n];
    if n == 0 {
        return Clustering {
            labels,
            cluster_count: 0,
        };
    }
    let buckets = Buckets::new(points, eps);
    let mut visited = vec![false; n];
    let mut cluster = 0;
    let mut nb = Vec::new();
    let mut nb2 = Vec::new();
    let mut queue = VecDeque::new();
    for i in 0..n {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        buckets.neighbors(points, i, &mut nb);
        if nb.len() < min_pts {
            continue;
        }
        labels[i] = Some(cluster);
        queue.clear();
        queue.extend(nb.iter().copied());
        while let Some(j) = queue.pop_front() {
            if labels[j].is_none() {
                labels[j] = Some(cluster);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            buckets.neighbors(points, j, &mut nb2);
            if nb2.len() >= min_pts {
                queue.extend(nb2.iter().copied().filter(|&m| !visited[m] || labels[m].is_none()));
            }
        }
        cluster += 1;
    }
    Clustering {
        labels,
        cluster_count: cluster,
    }
}

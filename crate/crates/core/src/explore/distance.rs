use super::map::{Cell, CellState, ExploreMap};

/// Chebyshev distance (in cells) from every cell to the nearest obstacle.
///
/// Cells farther than `width + height` from any obstacle, or all cells of a
/// map without obstacles, hold that cap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceField {
    width: usize,
    height: usize,
    dist: Vec<u32>,
}

impl DistanceField {
    /// Exact two-pass chamfer transform with unit weights on all 8 neighbors.
    pub fn compute(m: &ExploreMap) -> Self {
        let (w, h) = (m.width(), m.height());
        let cap = (w + h) as u32;
        let mut d: Vec<u32> = m
            .cells()
            .map(|(_, s)| if s == CellState::Obstacle { 0 } else { cap })
            .collect();
        for r in 0..h {
            for c in 0..w {
                let i = r * w + c;
                let mut v = d[i];
                if c > 0 {
                    v = v.min(d[i - 1] + 1);
                }
                if r > 0 {
                    v = v.min(d[i - w] + 1);
                    if c > 0 {
                        v = v.min(d[i - w - 1] + 1);
                    }
                    if c + 1 < w {
                        v = v.min(d[i - w + 1] + 1);
                    }
                }
                d[i] = v;
            }
        }
        for r in (0..h).rev() {
            for c in (0..w).rev() {
                let i = r * w + c;
                let mut v = d[i];
                if c + 1 < w {
                    v = v.min(d[i + 1] + 1);
                }
                if r + 1 < h {
                    v = v.min(d[i + w] + 1);
                    if c + 1 < w {
                        v = v.min(d[i + w + 1] + 1);
                    }
                    if c > 0 {
                        v = v.min(d[i + w - 1] + 1);
                    }
                }
                d[i] = v;
            }
        }
        Self {
            width: w,
            height: h,
            dist: d,
        }
    }

    #[inline]
    pub fn get(&self, (r, c): Cell) -> u32 {
        self.dist[r * self.width + c]
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.dist
    }
}

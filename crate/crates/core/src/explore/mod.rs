//! Top-down exploration map built from the Gaussian map, frontier
//! extraction and watershed clustering of frontiers.

mod distance;
mod frontier;
mod map;

pub use distance::DistanceField;
pub use frontier::{
    cluster_frontiers, extract_frontiers, raw_frontiers, refine_frontier, watershed_labels, FrontierCluster,
    REFINE_RADIUS,
};
pub(crate) use map::splat_footprint;
pub use map::{
    build_exploration_map, build_exploration_map_in, grid_bounds, Cell, CellState, ExploreMap, ExploreMapParams,
    HeightBand, NEIGHBORS8,
};

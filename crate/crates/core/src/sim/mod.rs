//! Synthetic multi-room worlds: scene generation, a ray-cast RGB-D sensor,
//! fast-marching local planning and the object-goal episode loop.

mod episode;
mod fmm;
mod scene;
mod sensor;

pub use episode::{
    compute_metrics, episode_dir, exploration_map_covering, fill_unknown_reachable, frontier_views, inflate,
    planning_map, run_episode, shortest_to_target, spl, AgentAction, CameraSpec, EpisodeConfig, EpisodeResult,
    FailureKind, FrontierView, Metrics, Pipeline,
};
pub use fmm::{arrival_times, grid_shortest_length, plan_local, plan_local_cells, polyline_length};
pub use scene::{
    check_scene, default_catalog, generate_scene, reachable_from_start, CatalogEntry, Room, Scene, SceneObject,
    SceneSpec, Start, Wall,
};
pub use sensor::{cast, sense, sense_with_range, visible_in_frame, SensedTruth, SensorFrame, Surface};

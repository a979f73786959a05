//! Prompt images (annotated first-person and top-down views), reasoning
//! templates and frontier decision planners.

mod compose;
pub mod draw;
mod frame;
mod planner;
mod wire;

pub use compose::{compose_prompt, fill_template, CotTemplate, PlannerPrompt, GRID_COLUMNS};
pub use frame::{
    annotate_fpv, bev_pixel, render_bev, AnnotatedFrame, Annotation, FrameKind, BEV_SCALE, GAZE_RADIUS, UNOBSERVED_RGB,
};
pub use planner::{
    cheapest_frontier, decide_frontier, unknown_area_beyond, DecisionContext, MockPlanner, Planner, PlannerDecision,
    Proposal, RemotePlanner,
};
pub use wire::{build_chat_body, encode_png, extract_reply, parse_choice, ChatEndpoint, API_KEY_ENV};

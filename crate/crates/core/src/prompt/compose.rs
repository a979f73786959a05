use image::imageops::{self, FilterType};
use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::draw;
use super::frame::{AnnotatedFrame, FrameKind};
use crate::error::{Error, Result};

/// FPV tiles per grid row.
pub const GRID_COLUMNS: usize = 3;
const LABEL_SCALE: i64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CotTemplate {
    /// Describe, reason, score, then choose.
    #[default]
    Stepwise,
    /// Choose with a one-sentence justification.
    Brief,
}

const STEPWISE: &str = "You are guiding a robot that must find a {target} in an unknown building.
Instruction: {instruction}

The image shows one first-person view per frontier, each labeled with its id in the top-left corner, and a top-down map on the right.
In the views, purple marks unobserved space and the red dot marks the frontier point. In the map, the blue line is the path so far, the purple triangle is the robot, yellow lines are candidate routes and green dots with numbers are frontiers.
Candidate frontier ids: {frontier_ids}.

Work through these steps:
1. Describe what each view shows near its red dot and how much of it is unobserved.
2. Reason about which frontier most likely leads toward a {target}, using room types and layout.
3. Give each frontier a score from 0 to 10.
4. Pick the best frontier.

End your answer with a single final line of the form `CHOICE: <id>` using one of the candidate ids.";

const BRIEF: &str = "Find a {target}. Instruction: {instruction}
Frontier ids shown in the image: {frontier_ids}. Purple is unobserved space, red dots mark frontiers.
Answer in one sentence, then a final line `CHOICE: <id>`.";

impl CotTemplate {
    pub fn text(self) -> &'static str {
        match self {
            CotTemplate::Stepwise => STEPWISE,
            CotTemplate::Brief => BRIEF,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerPrompt {
    pub composite: RgbImage,
    pub instruction: String,
    pub cot_text: String,
    /// Frontier ids in tile order.
    pub frontier_ids: Vec<usize>,
}

impl PlannerPrompt {
    pub fn save_png(&self, path: &std::path::Path) -> Result<()> {
        self.composite.save(path)?;
        Ok(())
    }
}

/// Fills a template's `{target}`, `{instruction}` and `{frontier_ids}`.
pub fn fill_template(template: CotTemplate, target: &str, instruction: &str, ids: &[usize]) -> String {
    let ids = ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(", ");
    template
        .text()
        .replace("{target}", target)
        .replace("{instruction}", instruction)
        .replace("{frontier_ids}", &ids)
}

/// Tiles the FPVs row-major, at most [`GRID_COLUMNS`] per row, with each
/// frontier id drawn into its tile, and appends the BEV on the right scaled
/// to the grid height.
pub fn compose_prompt(
    fpvs: &[AnnotatedFrame],
    bev: &AnnotatedFrame,
    target: &str,
    instruction: &str,
    template: CotTemplate,
) -> Result<PlannerPrompt> {
    if fpvs.is_empty() {
        return Err(Error::invalid("a prompt needs at least one first-person view"));
    }
    let tile_w = fpvs.iter().map(|f| f.image.width()).max().unwrap_or(1);
    let tile_h = fpvs.iter().map(|f| f.image.height()).max().unwrap_or(1);
    let cols = fpvs.len().min(GRID_COLUMNS) as u32;
    let rows = fpvs.len().div_ceil(GRID_COLUMNS) as u32;
    let grid_w = cols * tile_w;
    let grid_h = rows * tile_h;
    let bev_w = ((bev.image.width() as f64) * grid_h as f64 / bev.image.height().max(1) as f64)
        .round()
        .max(1.0) as u32;
    let bev_img = imageops::resize(&bev.image, bev_w, grid_h, FilterType::Nearest);
    let mut composite = RgbImage::from_pixel(grid_w + bev_w, grid_h, draw::BLACK);
    let mut ids = Vec::with_capacity(fpvs.len());
    for (i, f) in fpvs.iter().enumerate() {
        let id = match f.kind {
            FrameKind::Fpv { frontier_id } => frontier_id,
            FrameKind::Bev => return Err(Error::invalid("bird's-eye frame passed as a first-person view")),
        };
        let x = (i as u32 % cols) * tile_w;
        let y = (i as u32 / cols) * tile_h;
        imageops::replace(&mut composite, &f.image, x as i64, y as i64);
        draw::draw_label(
            &mut composite,
            id,
            x as i64 + 2,
            y as i64 + 2,
            LABEL_SCALE,
            draw::BLACK,
            draw::WHITE,
        );
        ids.push(id);
    }
    imageops::replace(&mut composite, &bev_img, grid_w as i64, 0);
    let missing: Vec<usize> = ids
        .iter()
        .copied()
        .filter(|id| !bev.frontier_markers().contains(id))
        .collect();
    if !missing.is_empty() {
        return Err(Error::invalid(format!(
            "frontiers {missing:?} have no marker in the map view"
        )));
    }
    Ok(PlannerPrompt {
        composite,
        instruction: instruction.to_string(),
        cot_text: fill_template(template, target, instruction, &ids),
        frontier_ids: ids,
    })
}

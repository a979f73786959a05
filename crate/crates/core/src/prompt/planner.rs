use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::compose::PlannerPrompt;
use super::wire::{parse_choice, ChatEndpoint};
use crate::error::Result;
use crate::explore::{CellState, ExploreMap, FrontierCluster};
use crate::guidance::GuidanceTrajectory;

/// What a planner sees when choosing a frontier.
#[derive(Debug, Clone, Copy)]
pub struct DecisionContext<'a> {
    pub prompt: &'a PlannerPrompt,
    pub explore: &'a ExploreMap,
    pub frontiers: &'a [FrontierCluster],
    /// Guidance trajectories, matched to frontiers by `target`.
    pub trajectories: &'a [GuidanceTrajectory],
}

impl DecisionContext<'_> {
    pub fn trajectory(&self, frontier_id: usize) -> Option<&GuidanceTrajectory> {
        self.trajectories.iter().find(|t| t.target == frontier_id)
    }

    pub fn frontier(&self, id: usize) -> Option<&FrontierCluster> {
        self.frontiers.iter().find(|f| f.id == id)
    }
}

/// A planner's raw answer; validated by [`decide_frontier`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Proposal {
    pub choice: Option<usize>,
    pub scores: Option<Vec<f64>>,
    pub rationale: String,
}

pub trait Planner {
    fn propose(&self, ctx: &DecisionContext<'_>) -> Result<Proposal>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerDecision {
    pub chosen_frontier: usize,
    pub scores: Option<Vec<f64>>,
    pub rationale: String,
    /// Why the planner's answer was replaced by the cheapest frontier.
    pub fallback: Option<String>,
}

/// Asks `planner` for a frontier among the prompt's ids. Invalid or failed
/// answers fall back to the frontier with the cheapest guidance trajectory.
pub fn decide_frontier(ctx: &DecisionContext<'_>, planner: &dyn Planner) -> PlannerDecision {
    let ids = &ctx.prompt.frontier_ids;
    if ids.len() == 1 {
        return PlannerDecision {
            chosen_frontier: ids[0],
            scores: None,
            rationale: "single frontier".into(),
            fallback: None,
        };
    }
    let (proposal, failure) = match planner.propose(ctx) {
        Ok(p) => match p.choice {
            Some(c) if ids.contains(&c) => {
                return PlannerDecision {
                    chosen_frontier: c,
                    scores: p.scores,
                    rationale: p.rationale,
                    fallback: None,
                }
            }
            Some(c) => (Some(p), format!("choice {c} is not a candidate")),
            None => (Some(p), "no CHOICE line in reply".to_string()),
        },
        Err(e) => (None, e.to_string()),
    };
    PlannerDecision {
        chosen_frontier: cheapest_frontier(ctx),
        scores: proposal.as_ref().and_then(|p| p.scores.clone()),
        rationale: proposal.map(|p| p.rationale).unwrap_or_default(),
        fallback: Some(failure),
    }
}

/// Candidate with the lowest trajectory cost; lower id wins ties, frontiers
/// without a trajectory rank last.
pub fn cheapest_frontier(ctx: &DecisionContext<'_>) -> usize {
    let cost = |id: usize| ctx.trajectory(id).map_or(f64::INFINITY, |t| t.total_cost());
    let mut ids = ctx.prompt.frontier_ids.clone();
    ids.sort_by(|a, b| cost(*a).total_cmp(&cost(*b)).then(a.cmp(b)));
    ids[0]
}

/// Deterministic heuristic: unknown area reachable beyond each frontier
/// against the length of the route there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MockPlanner {
    /// Weight per square meter of unknown area.
    pub w_unknown: f64,
    /// Weight per meter of guidance path.
    pub w_cost: f64,
    /// Unknown space is counted within this distance of the frontier, meters.
    pub radius: f64,
    pub seed: u64,
}

impl Default for MockPlanner {
    fn default() -> Self {
        Self {
            w_unknown: 1.0,
            w_cost: 0.5,
            radius: 2.0,
            seed: 0,
        }
    }
}

/// Square meters of unknown cells connected (through unknown cells) to the
/// frontier's members and within `radius` of its mean.
pub fn unknown_area_beyond(m: &ExploreMap, f: &FrontierCluster, radius: f64) -> f64 {
    let (w, h) = (m.width(), m.height());
    let mut seen = vec![false; w * h];
    let mut q = VecDeque::new();
    let near = |c: (usize, usize)| {
        let p = m.world_of_cell(c);
        (p[0] - f.mean[0]).powi(2) + (p[1] - f.mean[1]).powi(2) <= radius * radius
    };
    for &c in &f.member_cells {
        for n in m.neighbors(c) {
            if m.get(n) == CellState::Unknown && near(n) && !seen[n.0 * w + n.1] {
                seen[n.0 * w + n.1] = true;
                q.push_back(n);
            }
        }
    }
    let mut count = 0usize;
    while let Some(c) = q.pop_front() {
        count += 1;
        for n in m.neighbors(c) {
            if m.get(n) == CellState::Unknown && !seen[n.0 * w + n.1] && near(n) {
                seen[n.0 * w + n.1] = true;
                q.push_back(n);
            }
        }
    }
    count as f64 * m.resolution().powi(2)
}

impl Planner for MockPlanner {
    fn propose(&self, ctx: &DecisionContext<'_>) -> Result<Proposal> {
        let ids = &ctx.prompt.frontier_ids;
        let scores: Vec<f64> = ids
            .iter()
            .map(|&id| {
                let area = ctx
                    .frontier(id)
                    .map_or(0.0, |f| unknown_area_beyond(ctx.explore, f, self.radius));
                let len = ctx.trajectory(id).map_or(f64::INFINITY, |t| t.length());
                self.w_unknown * area - self.w_cost * len
            })
            .collect();
        let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tied: Vec<usize> = ids
            .iter()
            .zip(&scores)
            .filter(|(_, s)| (best - **s).abs() <= 1e-9)
            .map(|(id, _)| *id)
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let choice = tied.choose(&mut rng).copied();
        Ok(Proposal {
            choice,
            rationale: format!("heuristic scores {scores:?}"),
            scores: Some(scores),
        })
    }
}

/// Sends the composite and reasoning prompt to a remote model.
#[derive(Debug, Clone)]
pub struct RemotePlanner {
    pub endpoint: ChatEndpoint,
}

impl Planner for RemotePlanner {
    fn propose(&self, ctx: &DecisionContext<'_>) -> Result<Proposal> {
        let text = format!("{}\n\n{}", ctx.prompt.cot_text, ctx.prompt.instruction);
        let reply = self.endpoint.complete(&text, &ctx.prompt.composite)?;
        Ok(Proposal {
            choice: parse_choice(&reply),
            scores: None,
            rationale: reply,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use image::RgbImage;

    fn prompt(ids: Vec<usize>) -> PlannerPrompt {
        PlannerPrompt {
            composite: RgbImage::new(1, 1),
            instruction: String::new(),
            cot_text: String::new(),
            frontier_ids: ids,
        }
    }

    fn cluster(m: &ExploreMap, id: usize, cells: Vec<(usize, usize)>) -> FrontierCluster {
        let c = cells[0];
        FrontierCluster {
            id,
            centroid: m.world_of_cell(c),
            mean: m.world_of_cell(c),
            cell: c,
            member_cells: cells,
        }
    }

    fn traj(id: usize, len: usize) -> GuidanceTrajectory {
        GuidanceTrajectory {
            nodes: (0..len).map(|i| (0, i)).collect(),
            costs: (0..len).map(|i| i as f64).collect(),
            target: id,
            points: (0..len).map(|i| [i as f64 * 0.05, 0.0]).collect(),
        }
    }

    struct Fixed(Result<Proposal>);
    impl Planner for Fixed {
        fn propose(&self, _: &DecisionContext<'_>) -> Result<Proposal> {
            match &self.0 {
                Ok(p) => Ok(p.clone()),
                Err(e) => Err(Error::Transport(e.to_string())),
            }
        }
    }

    /// Left half free, a large unknown region on the right and a small
    /// unknown pocket top-left.
    fn fixture() -> (ExploreMap, Vec<FrontierCluster>) {
        let mut m = ExploreMap::new(60, 40, 0.05, [0.0, 0.0]).unwrap();
        for r in 0..40 {
            for c in 0..30 {
                m.set((r, c), CellState::Free);
            }
        }
        for r in 0..3 {
            for c in 0..3 {
                m.set((r, c), CellState::Unknown);
            }
        }
        let a = cluster(&m, 0, vec![(20, 29)]);
        let b = cluster(&m, 1, vec![(3, 3)]);
        (m, vec![a, b])
    }

    #[test]
    fn mock_prefers_larger_unknown_area() {
        let (m, fs) = fixture();
        assert!(unknown_area_beyond(&m, &fs[0], 2.0) > unknown_area_beyond(&m, &fs[1], 2.0));
        let trajs = vec![traj(0, 10), traj(1, 10)];
        let p = prompt(vec![0, 1]);
        let ctx = DecisionContext {
            prompt: &p,
            explore: &m,
            frontiers: &fs,
            trajectories: &trajs,
        };
        let d = decide_frontier(&ctx, &MockPlanner::default());
        assert_eq!(d.chosen_frontier, 0);
        assert!(d.fallback.is_none());
        assert_eq!(d, decide_frontier(&ctx, &MockPlanner::default()));
    }

    #[test]
    fn invalid_or_failed_answers_fall_back_to_cheapest() {
        let (m, fs) = fixture();
        let trajs = vec![traj(0, 30), traj(1, 5)];
        let p = prompt(vec![0, 1]);
        let ctx = DecisionContext {
            prompt: &p,
            explore: &m,
            frontiers: &fs,
            trajectories: &trajs,
        };
        for planner in [
            Fixed(Ok(Proposal {
                choice: None,
                ..Default::default()
            })),
            Fixed(Ok(Proposal {
                choice: Some(9),
                ..Default::default()
            })),
            Fixed(Err(Error::Transport("down".into()))),
        ] {
            let d = decide_frontier(&ctx, &planner);
            assert_eq!(d.chosen_frontier, 1);
            assert!(d.fallback.is_some());
        }
    }

    #[test]
    fn single_frontier_short_circuits() {
        let (m, fs) = fixture();
        let p = prompt(vec![1]);
        let ctx = DecisionContext {
            prompt: &p,
            explore: &m,
            frontiers: &fs,
            trajectories: &[],
        };
        let d = decide_frontier(&ctx, &Fixed(Err(Error::Transport("down".into()))));
        assert_eq!(d.chosen_frontier, 1);
    }
}

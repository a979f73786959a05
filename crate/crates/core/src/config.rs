//! Run configuration: a TOML file whose every key can also be set by a
//! command-line flag. Flags win over the file, the file over defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompt::MockPlanner;
use crate::sim::{EpisodeConfig, SceneSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    #[default]
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    pub kind: PlannerKind,
    /// Chat-completion URL for the remote planner and verifier.
    pub endpoint: String,
    pub model: String,
    pub mock: MockPlanner,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            kind: PlannerKind::Mock,
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o".into(),
            mock: MockPlanner::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub episodes: usize,
    /// Scene files are taken from here (sorted by name) instead of being
    /// generated.
    pub scene_dir: Option<PathBuf>,
    pub scenes: SceneSpec,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            episodes: 10,
            scene_dir: None,
            scenes: SceneSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scene: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Seeds the episode, the mock planner and scene generation; overrides
    /// `episode.seed`.
    pub seed: u64,
    pub dump_trajectory: bool,
    pub trace_opt: bool,
    pub planner: PlannerConfig,
    pub episode: EpisodeConfig,
    pub bench: BenchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scene: None,
            out_dir: PathBuf::from("out"),
            seed: 0,
            dump_trajectory: false,
            trace_opt: false,
            planner: PlannerConfig::default(),
            episode: EpisodeConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

/// Values given on the command line; `None` leaves the file or default.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub scene: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub dump_trajectory: Option<bool>,
    pub trace_opt: Option<bool>,
    pub planner: Option<PlannerKind>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub fp: Option<f64>,
    pub fn_rate: Option<f64>,
    pub max_steps: Option<usize>,
    pub success_dist: Option<f64>,
    pub episodes: Option<usize>,
    pub scene_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::parse("run config", e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::parse(format!("run config {}", path.display()), message),
            e => e,
        })
    }

    /// File (or defaults when `path` is `None`) with `over` applied on top.
    pub fn resolve(path: Option<&Path>, over: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        cfg.apply(over);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        fn set<T: Clone>(dst: &mut T, src: &Option<T>) {
            if let Some(v) = src {
                *dst = v.clone();
            }
        }
        if o.scene.is_some() {
            self.scene = o.scene.clone();
        }
        set(&mut self.out_dir, &o.out_dir);
        set(&mut self.seed, &o.seed);
        set(&mut self.dump_trajectory, &o.dump_trajectory);
        set(&mut self.trace_opt, &o.trace_opt);
        set(&mut self.planner.kind, &o.planner);
        set(&mut self.planner.endpoint, &o.endpoint);
        set(&mut self.planner.model, &o.model);
        set(&mut self.episode.detector.fp, &o.fp);
        set(&mut self.episode.detector.fn_rate, &o.fn_rate);
        set(&mut self.episode.max_steps, &o.max_steps);
        set(&mut self.episode.success_dist, &o.success_dist);
        set(&mut self.bench.episodes, &o.episodes);
        if o.scene_dir.is_some() {
            self.bench.scene_dir = o.scene_dir.clone();
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.episode.validate()?;
        self.bench.scenes.validate()?;
        if self.planner.kind == PlannerKind::Remote
            && (self.planner.endpoint.is_empty() || self.planner.model.is_empty())
        {
            return Err(Error::invalid("remote planner needs an endpoint and a model"));
        }
        Ok(())
    }

    /// Episode settings for `seed`.
    pub fn episode_for(&self, seed: u64) -> EpisodeConfig {
        EpisodeConfig {
            seed,
            ..self.episode.clone()
        }
    }

    pub fn mock_planner(&self, seed: u64) -> MockPlanner {
        MockPlanner {
            seed,
            ..self.planner.mock
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_toml() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert_eq!(RunConfig::from_toml("").unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("sed = 3").is_err());
        assert!(RunConfig::from_toml("[episode]\nmax_step = 3").is_err());
        assert!(RunConfig::from_toml("[episode.detector]\nfalse_pos = 0.1").is_err());
    }

    #[test]
    fn flag_beats_file_beats_default() {
        let file = RunConfig::from_toml("seed = 5\n[episode]\nmax_steps = 300\n[episode.detector]\nfp = 0.2").unwrap();
        let mut c = file.clone();
        c.apply(&Overrides {
            seed: Some(9),
            ..Default::default()
        });
        assert_eq!(c.seed, 9);
        assert_eq!(c.episode.max_steps, 300);
        assert_eq!(c.episode.detector.fp, 0.2);
        assert_eq!(c.episode.success_dist, EpisodeConfig::default().success_dist);
    }
}

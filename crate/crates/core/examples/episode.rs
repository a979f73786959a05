//! Runs mock-planner episodes on generated scenes and prints SR/SPL.
//!
//! `cargo run --release --example episode -- [episodes] [out_dir]`

use std::path::PathBuf;
use std::time::Instant;

use gsnav::prompt::MockPlanner;
use gsnav::sim::{compute_metrics, episode_dir, generate_scene, run_episode, EpisodeConfig, Pipeline, SceneSpec};
use gsnav::verify::RuleVerdictProvider;

fn main() -> gsnav::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(3);
    let out = args.next().map(PathBuf::from);
    let cfg = EpisodeConfig::default();
    let mut results = Vec::new();
    for seed in 0..n {
        let scene = generate_scene(seed, &SceneSpec::default())?;
        let planner = MockPlanner {
            seed,
            ..Default::default()
        };
        let mut verdict = RuleVerdictProvider;
        let t = Instant::now();
        let r = run_episode(
            &scene,
            &EpisodeConfig { seed, ..cfg.clone() },
            Pipeline {
                planner: &planner,
                verdict: &mut verdict,
                out_dir: out.as_ref().map(|o| episode_dir(o, seed as usize)),
                trace_opt: false,
                dump_trajectory: true,
            },
        )?;
        println!(
            "seed {seed}: rooms {} target {:<10} success {} steps {} path {:.2} shortest {:.2} spl {:.3} fail {:?} decisions {} ({:.1}s) {}",
            scene.rooms.len(),
            scene.target_category,
            r.success,
            r.steps,
            r.path_length,
            r.shortest_length,
            r.spl,
            r.failure_kind,
            r.decisions,
            t.elapsed().as_secs_f64(),
            r.note.clone().unwrap_or_default()
        );
        results.push(r);
    }
    let m = compute_metrics(&results)?;
    println!("SR {:.3}  SPL {:.3}  over {} episodes", m.sr, m.spl, m.episodes);
    Ok(())
}

//! Photometric/geometric refinement of primitive colors and opacities.
//!
//! Minimizes `λ1 (λ·MSE(I) + (1-λ)(1 - SSIM(I))) + λ2·MSE(D)` against one
//! observed RGB-D frame. Positions and shapes stay fixed; gradients come from
//! an exact backward pass through the compositing.

use super::camera::{CameraIntrinsics, Pose};
use super::primitive::GaussianMap;
use super::render::{ProjectedScene, RenderedView, MAX_RANGE, NEAR_PLANE};
use super::ssim::{ssim, ssim_with_grad};
use crate::error::{Error, Result};
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapOptConfig {
    /// Mix between the L2 and SSIM photometric terms.
    pub lambda_ssim_mix: f64,
    pub lambda_photo: f64,
    pub lambda_depth: f64,
    pub iterations: usize,
    /// Largest per-parameter change of a full step.
    pub step_size: f64,
}

impl Default for MapOptConfig {
    fn default() -> Self {
        Self {
            lambda_ssim_mix: 0.2,
            lambda_photo: 1.0,
            lambda_depth: 0.7,
            iterations: 10,
            step_size: 0.05,
        }
    }
}

impl MapOptConfig {
    pub fn validate(&self) -> Result<()> {
        let w = [
            self.lambda_ssim_mix,
            self.lambda_photo,
            self.lambda_depth,
            self.step_size,
        ];
        if w.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::invalid("map optimization weights must be >= 0"));
        }
        Ok(())
    }
}

/// An observed RGB-D frame used as supervision.
#[derive(Debug, Clone, Copy)]
pub struct ObservedFrame<'a> {
    pub rgb: &'a Grid<[f64; 3]>,
    pub depth: &'a Grid<f64>,
    pub pose: Pose,
    pub intrinsics: CameraIntrinsics,
}

fn depth_valid(d: f64) -> bool {
    d.is_finite() && d > NEAR_PLANE && d < MAX_RANGE
}

/// Evaluates the map loss of a rendered view against an observation.
pub fn map_loss(view: &RenderedView, obs: &ObservedFrame<'_>, cfg: &MapOptConfig) -> f64 {
    let n = view.color.len() as f64;
    let photo_l2: f64 = view
        .color
        .iter()
        .zip(obs.rgb.iter())
        .map(|(a, b)| (0..3).map(|c| (a[c] - b[c]).powi(2)).sum::<f64>())
        .sum::<f64>()
        / (3.0 * n);
    let s = ssim(&view.color, obs.rgb);
    cfg.lambda_photo * (cfg.lambda_ssim_mix * photo_l2 + (1.0 - cfg.lambda_ssim_mix) * (1.0 - s))
        + cfg.lambda_depth * depth_term(view, obs)
}

fn depth_term(view: &RenderedView, obs: &ObservedFrame<'_>) -> f64 {
    let n = view.depth.len() as f64;
    view.depth
        .iter()
        .zip(obs.depth.iter())
        .filter(|(_, d)| depth_valid(**d))
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / n
}

struct Contribution {
    splat: usize,
    alpha: f64,
    falloff: f64,
    clamped: bool,
    transmittance: f64,
}

/// Renders while recording each pixel's ordered contributors.
fn render_recording(scene: &ProjectedScene) -> (RenderedView, Vec<Vec<Contribution>>) {
    let k = scene.intrinsics;
    let mut lists: Vec<Vec<Contribution>> = (0..k.pixel_count()).map(|_| Vec::new()).collect();
    let mut trans = vec![1.0; k.pixel_count()];
    for (si, s) in scene.splats.iter().enumerate() {
        let [x0, x1, y0, y1] = s.bbox;
        for y in y0..=y1 {
            for x in x0..=x1 {
                if let Some((alpha, g)) = s.alpha_at(x as f64, y as f64) {
                    let i = y * k.width + x;
                    lists[i].push(Contribution {
                        splat: si,
                        alpha,
                        falloff: g,
                        clamped: s.opacity * g > super::render::MAX_ALPHA,
                        transmittance: trans[i],
                    });
                    trans[i] *= 1.0 - alpha;
                }
            }
        }
    }
    (scene.render(), lists)
}

struct Gradient {
    color: Vec<[f64; 3]>,
    opacity: Vec<f64>,
}

fn gradient(map: &GaussianMap, obs: &ObservedFrame<'_>, cfg: &MapOptConfig) -> (f64, Gradient) {
    let scene = ProjectedScene::new(map, &obs.pose, &obs.intrinsics);
    let (view, lists) = render_recording(&scene);
    let loss = map_loss(&view, obs, cfg);
    let n = view.color.len() as f64;
    let (_, ssim_grad) = ssim_with_grad(&view.color, obs.rgb, true);
    let ssim_grad = ssim_grad.expect("requested");
    let photo_w = cfg.lambda_photo * cfg.lambda_ssim_mix * 2.0 / (3.0 * n);
    let ssim_w = -cfg.lambda_photo * (1.0 - cfg.lambda_ssim_mix);
    let depth_w = cfg.lambda_depth * 2.0 / n;

    let mut grad = Gradient {
        color: vec![[0.0; 3]; map.len()],
        opacity: vec![0.0; map.len()],
    };
    for (i, list) in lists.iter().enumerate() {
        if list.is_empty() {
            continue;
        }
        let rendered = view.color.as_slice()[i];
        let target = obs.rgb.as_slice()[i];
        let sg = ssim_grad.as_slice()[i];
        let dl_dc: [f64; 3] = std::array::from_fn(|c| photo_w * (rendered[c] - target[c]) + ssim_w * sg[c]);
        let gt_d = obs.depth.as_slice()[i];
        let dl_dd = if depth_valid(gt_d) {
            depth_w * (view.depth.as_slice()[i] - gt_d)
        } else {
            0.0
        };
        let mut suffix_c = [0.0; 3];
        let mut suffix_d = 0.0;
        for contrib in list.iter().rev() {
            let s = &scene.splats[contrib.splat];
            let wgt = contrib.alpha * contrib.transmittance;
            let src = s.source;
            for c in 0..3 {
                grad.color[src][c] += dl_dc[c] * wgt;
            }
            if !contrib.clamped {
                let inv = 1.0 / (1.0 - contrib.alpha);
                let mut dl_dalpha = 0.0;
                for c in 0..3 {
                    dl_dalpha += dl_dc[c] * (s.color[c] * contrib.transmittance - suffix_c[c] * inv);
                }
                dl_dalpha += dl_dd * (s.depth * contrib.transmittance - suffix_d * inv);
                grad.opacity[src] += dl_dalpha * contrib.falloff;
            }
            for c in 0..3 {
                suffix_c[c] += s.color[c] * wgt;
            }
            suffix_d += s.depth * wgt;
        }
    }
    (loss, grad)
}

/// Current loss of `map` against `obs`.
pub fn evaluate_map_loss(map: &GaussianMap, obs: &ObservedFrame<'_>, cfg: &MapOptConfig) -> f64 {
    let view = ProjectedScene::new(map, &obs.pose, &obs.intrinsics).render();
    map_loss(&view, obs, cfg)
}

/// Runs `cfg.iterations` projected-gradient steps on color and opacity,
/// halving the step until the loss does not increase. Returns the final loss.
pub fn refine_map(map: &mut GaussianMap, obs: &ObservedFrame<'_>, cfg: &MapOptConfig) -> Result<f64> {
    cfg.validate()?;
    if map.is_empty() {
        return Err(Error::invalid("cannot refine an empty map"));
    }
    let k = obs.intrinsics;
    for (name, w, h) in [
        ("rgb", obs.rgb.width(), obs.rgb.height()),
        ("depth", obs.depth.width(), obs.depth.height()),
    ] {
        if (w, h) != (k.width, k.height) {
            return Err(Error::invalid(format!("{name} dims {w}x{h} do not match intrinsics")));
        }
    }
    let mut loss = evaluate_map_loss(map, obs, cfg);
    let mut step = cfg.step_size;
    for _ in 0..cfg.iterations {
        let (_, g) = gradient(map, obs, cfg);
        let scale = g
            .color
            .iter()
            .flat_map(|c| c.iter())
            .chain(g.opacity.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 || loss == 0.0 {
            break;
        }
        let mut accepted = false;
        for _ in 0..30 {
            let mut trial = map.clone();
            let s = step / scale;
            trial.update(|i, p| {
                for c in 0..3 {
                    p.color[c] -= s * g.color[i][c];
                }
                p.opacity -= s * g.opacity[i];
            });
            let trial_loss = evaluate_map_loss(&trial, obs, cfg);
            if trial_loss <= loss {
                *map = trial;
                loss = trial_loss;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::splat::primitive::GaussianPrimitive;
    use crate::splat::render::render;
    use nalgebra::Vector3;

    fn setup() -> (GaussianMap, CameraIntrinsics) {
        let k = CameraIntrinsics::from_hfov(24, 20, 60.0).unwrap();
        let prims = vec![
            GaussianPrimitive::isotropic(Vector3::new(0.0, 0.0, 2.0), [0.8, 0.2, 0.1], 0.7, 0.15),
            GaussianPrimitive::isotropic(Vector3::new(0.2, 0.1, 3.0), [0.1, 0.5, 0.9], 0.8, 0.3),
        ];
        (GaussianMap::from_primitives(prims).unwrap(), k)
    }

    #[test]
    fn zero_loss_against_own_render() {
        let (map, k) = setup();
        let view = render(&map, &Pose::identity(), &k);
        // depth in valid range everywhere the map renders
        let obs = ObservedFrame {
            rgb: &view.color,
            depth: &view.depth,
            pose: Pose::identity(),
            intrinsics: k,
        };
        assert!(evaluate_map_loss(&map, &obs, &MapOptConfig::default()).abs() < 1e-12);
    }

    #[test]
    fn zero_iterations_is_a_no_op() {
        let (mut map, k) = setup();
        let target = Grid::new(k.width, k.height, [0.5; 3]);
        let depth = Grid::new(k.width, k.height, 2.0);
        let obs = ObservedFrame {
            rgb: &target,
            depth: &depth,
            pose: Pose::identity(),
            intrinsics: k,
        };
        let cfg = MapOptConfig {
            iterations: 0,
            ..Default::default()
        };
        let before = map.primitives().to_vec();
        let l0 = evaluate_map_loss(&map, &obs, &cfg);
        let l = refine_map(&mut map, &obs, &cfg).unwrap();
        assert_eq!(l, l0);
        assert_eq!(map.primitives(), &before[..]);
    }

    #[test]
    fn empty_map_is_rejected() {
        let k = CameraIntrinsics::from_hfov(8, 8, 60.0).unwrap();
        let rgb = Grid::new(8, 8, [0.0; 3]);
        let depth = Grid::new(8, 8, 0.0);
        let obs = ObservedFrame {
            rgb: &rgb,
            depth: &depth,
            pose: Pose::identity(),
            intrinsics: k,
        };
        assert!(refine_map(&mut GaussianMap::new(), &obs, &MapOptConfig::default()).is_err());
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let (map, k) = setup();
        let rgb = Grid::from_fn(k.width, k.height, |x, y| {
            [0.3 + 0.02 * x as f64, 0.2, 0.5 - 0.01 * y as f64]
        });
        let depth = Grid::new(k.width, k.height, 2.5);
        let obs = ObservedFrame {
            rgb: &rgb,
            depth: &depth,
            pose: Pose::identity(),
            intrinsics: k,
        };
        let cfg = MapOptConfig::default();
        let (_, g) = gradient(&map, &obs, &cfg);
        let h = 1e-6;
        let eval = |f: &dyn Fn(&mut GaussianPrimitive)| {
            let mut m = map.clone();
            m.update(|i, p| {
                if i == 1 {
                    f(p)
                }
            });
            evaluate_map_loss(&m, &obs, &cfg)
        };
        let fd_o = (eval(&|p| p.opacity += h) - eval(&|p| p.opacity -= h)) / (2.0 * h);
        assert!(
            (fd_o - g.opacity[1]).abs() < 1e-5 * (1.0 + fd_o.abs()),
            "{fd_o} vs {}",
            g.opacity[1]
        );
        let fd_c = (eval(&|p| p.color[2] += h) - eval(&|p| p.color[2] -= h)) / (2.0 * h);
        assert!(
            (fd_c - g.color[1][2]).abs() < 1e-5 * (1.0 + fd_c.abs()),
            "{fd_c} vs {}",
            g.color[1][2]
        );
    }
}

use nalgebra::Vector3;

use super::scene::Scene;
use crate::grid::Grid;
use crate::splat::{CameraIntrinsics, Pose, MAX_RANGE};
use crate::verify::{GroundTruth, VisibleObject};

/// What a sensor ray hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Surface {
    Nothing,
    Floor,
    Ceiling,
    Wall(usize),
    Object(usize),
}

#[derive(Debug, Clone)]
pub struct SensorFrame {
    pub rgb: Grid<[f64; 3]>,
    /// Depth along the optical axis, meters; misses read `max_range`.
    pub depth: Grid<f64>,
    pub surface: Grid<Surface>,
}

const AMBIENT: f64 = 0.45;
const CEILING_RGB: [f64; 3] = [0.9, 0.9, 0.9];

fn light() -> Vector3<f64> {
    Vector3::new(0.4, 0.3, 0.85).normalize()
}

/// Slab test; returns the entry distance and the hit face normal.
fn ray_box(o: &Vector3<f64>, d: &Vector3<f64>, min: &[f64; 3], max: &[f64; 3]) -> Option<(f64, Vector3<f64>)> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    let mut axis = 0;
    let mut sign = 1.0;
    for i in 0..3 {
        if d[i].abs() < 1e-12 {
            if o[i] < min[i] || o[i] > max[i] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d[i];
        let (mut a, mut b) = ((min[i] - o[i]) * inv, (max[i] - o[i]) * inv);
        let mut s = -1.0;
        if a > b {
            std::mem::swap(&mut a, &mut b);
            s = 1.0;
        }
        if a > t0 {
            t0 = a;
            axis = i;
            sign = s;
        }
        t1 = t1.min(b);
        if t0 > t1 {
            return None;
        }
    }
    if t0 <= 1e-9 {
        // origin inside the box or box behind
        return None;
    }
    let mut n = Vector3::zeros();
    n[axis] = sign;
    Some((t0, n))
}

/// Casts one world-space ray (unit direction) into the scene.
pub fn cast(scene: &Scene, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<(f64, Surface, Vector3<f64>)> {
    let mut best: Option<(f64, Surface, Vector3<f64>)> = None;
    let mut consider = |t: f64, s: Surface, n: Vector3<f64>| {
        if t > 0.0 && best.is_none_or(|b| t < b.0) {
            best = Some((t, s, n));
        }
    };
    if d.z < -1e-12 {
        consider((scene.floor_z - o.z) / d.z, Surface::Floor, Vector3::z());
    }
    if d.z > 1e-12 {
        consider((scene.ceiling_z - o.z) / d.z, Surface::Ceiling, -Vector3::z());
    }
    for (i, w) in scene.walls.iter().enumerate() {
        if let Some((t, n)) = ray_box(o, d, &w.min, &w.max) {
            consider(t, Surface::Wall(i), n);
        }
    }
    for (i, ob) in scene.objects.iter().enumerate() {
        if let Some((t, n)) = ray_box(o, d, &ob.min, &ob.max) {
            consider(t, Surface::Object(i), n);
        }
    }
    best
}

fn albedo(scene: &Scene, s: Surface) -> [f64; 3] {
    match s {
        Surface::Nothing => [0.0; 3],
        Surface::Floor => scene.floor_color,
        Surface::Ceiling => CEILING_RGB,
        Surface::Wall(i) => scene.walls[i].color,
        Surface::Object(i) => scene.objects[i].color,
    }
}

/// Ray-casts an RGB-D frame with Lambert shading under a fixed light.
pub fn sense(scene: &Scene, pose: &Pose, k: &CameraIntrinsics) -> SensorFrame {
    sense_with_range(scene, pose, k, MAX_RANGE)
}

pub fn sense_with_range(scene: &Scene, pose: &Pose, k: &CameraIntrinsics, max_range: f64) -> SensorFrame {
    let (w, h) = (k.width, k.height);
    let origin = pose.center();
    let r_wc = pose.r_wc();
    let l = light();
    let mut rgb = Grid::new(w, h, [0.0; 3]);
    let mut depth = Grid::new(w, h, max_range);
    let mut surface = Grid::new(w, h, Surface::Nothing);
    for y in 0..h {
        for x in 0..w {
            let dc = Vector3::new((x as f64 - k.cx) / k.fx, (y as f64 - k.cy) / k.fy, 1.0);
            let norm = dc.norm();
            let dw = r_wc * (dc / norm);
            let Some((t, s, n)) = cast(scene, &origin, &dw) else {
                continue;
            };
            let z = t / norm;
            if z >= max_range {
                continue;
            }
            let shade = AMBIENT + (1.0 - AMBIENT) * n.dot(&l).max(0.0);
            rgb.set(x, y, albedo(scene, s).map(|c| (c * shade).clamp(0.0, 1.0)));
            depth.set(x, y, z);
            surface.set(x, y, s);
        }
    }
    SensorFrame { rgb, depth, surface }
}

/// Objects by visible pixel count and extent in a sensed frame.
pub fn visible_in_frame(scene: &Scene, frame: &SensorFrame) -> Vec<VisibleObject> {
    let mut acc: Vec<Option<(usize, [f64; 4])>> = vec![None; scene.objects.len()];
    for (x, y, s) in frame.surface.enumerate() {
        if let Surface::Object(i) = *s {
            let (xf, yf) = (x as f64, y as f64);
            let e = acc[i].get_or_insert((0, [xf, yf, xf + 1.0, yf + 1.0]));
            e.0 += 1;
            e.1 = [
                e.1[0].min(xf),
                e.1[1].min(yf),
                e.1[2].max(xf + 1.0),
                e.1[3].max(yf + 1.0),
            ];
        }
    }
    acc.into_iter()
        .enumerate()
        .filter_map(|(i, a)| {
            let (pixels, pixel_bbox) = a?;
            let o = &scene.objects[i];
            Some(VisibleObject {
                instance: i,
                category: o.category.clone(),
                pixels,
                pixel_bbox,
                aabb_min: Vector3::from(o.min),
                aabb_max: Vector3::from(o.max),
            })
        })
        .collect()
}

impl GroundTruth for Scene {
    fn visible_objects(&self, pose: &Pose, k: &CameraIntrinsics) -> Vec<VisibleObject> {
        visible_in_frame(self, &sense(self, pose, k))
    }
}

/// Ground truth backed by an already sensed frame at a known pose; other
/// poses fall through to ray casting.
pub struct SensedTruth<'a> {
    pub scene: &'a Scene,
    pub frame: &'a SensorFrame,
    pub pose: Pose,
}

impl GroundTruth for SensedTruth<'_> {
    fn visible_objects(&self, pose: &Pose, k: &CameraIntrinsics) -> Vec<VisibleObject> {
        if *pose == self.pose && k.width == self.frame.depth.width() && k.height == self.frame.depth.height() {
            visible_in_frame(self.scene, self.frame)
        } else {
            self.scene.visible_objects(pose, k)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::scene::{Room, Start, Wall};
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_4;

    fn one_wall(min: [f64; 3], max: [f64; 3]) -> Scene {
        Scene {
            rooms: vec![Room {
                min: [-5.0, -5.0],
                max: [5.0, 5.0],
            }],
            walls: vec![Wall {
                min,
                max,
                color: [0.8, 0.8, 0.8],
            }],
            objects: vec![],
            floor_z: 0.0,
            ceiling_z: 2.5,
            start: Start {
                pos: [0.0, 0.0],
                yaw: 0.0,
            },
            target_category: "chair".into(),
            floor_color: [0.5, 0.4, 0.3],
        }
    }

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(80.0, 80.0, 80.0, 60.0, 161, 121).unwrap()
    }

    #[test]
    fn square_on_wall_depth() {
        let s = one_wall([2.0, -3.0, 0.0], [2.1, 3.0, 2.5]);
        let pose = Pose::from_yaw_pitch(Vector3::new(0.0, 0.0, 0.88), 0.0, 0.0);
        let f = sense(&s, &pose, &k());
        assert_relative_eq!(*f.depth.get(80, 60), 2.0, epsilon = 1e-6);
        assert_eq!(*f.surface.get(80, 60), Surface::Wall(0));
        // z-depth is constant across a fronto-parallel wall
        assert_relative_eq!(*f.depth.get(100, 60), 2.0, epsilon = 1e-6);
    }

    #[test]
    fn oblique_wall_depth() {
        let s = one_wall([2.0, -3.0, 0.0], [2.1, 3.0, 2.5]);
        let pose = Pose::from_yaw_pitch(Vector3::new(0.0, 0.0, 0.88), FRAC_PI_4, 0.0);
        let f = sense(&s, &pose, &k());
        assert_relative_eq!(*f.depth.get(80, 60), 2.0 / FRAC_PI_4.cos(), epsilon = 1e-6);
    }

    #[test]
    fn doorway_ray_reads_max_range() {
        // two wall pieces with a gap straight ahead
        let mut s = one_wall([2.0, -3.0, 0.0], [2.1, -0.5, 2.5]);
        s.walls.push(Wall {
            min: [2.0, 0.5, 0.0],
            max: [2.1, 3.0, 2.5],
            color: [0.8; 3],
        });
        let pose = Pose::from_yaw_pitch(Vector3::new(0.0, 0.0, 0.88), 0.0, 0.0);
        let f = sense(&s, &pose, &k());
        assert_eq!(*f.depth.get(80, 60), MAX_RANGE);
        assert_eq!(*f.surface.get(80, 60), Surface::Nothing);
        assert!(*f.depth.get(80, 110) < MAX_RANGE, "floor below the horizon");
    }

    #[test]
    fn objects_are_reported_visible() {
        let mut s = one_wall([4.0, -3.0, 0.0], [4.1, 3.0, 2.5]);
        s.objects.push(crate::sim::scene::SceneObject {
            category: "chair".into(),
            min: [1.5, -0.25, 0.0],
            max: [2.0, 0.25, 0.9],
            color: [0.8, 0.2, 0.1],
        });
        let pose = Pose::from_yaw_pitch(Vector3::new(0.0, 0.0, 0.88), 0.0, 0.0);
        let vis = s.visible_objects(&pose, &k());
        assert_eq!(vis.len(), 1);
        assert!(vis[0].pixels > 100);
        assert_eq!(vis[0].instance, 0);
    }
}

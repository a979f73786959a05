use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

const QUAT_TOL: f64 = 1e-6;

/// One anisotropic Gaussian of the scene memory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPrimitive {
    pub position: Vector3<f64>,
    pub opacity: f64,
    pub color: [f64; 3],
    /// Per-axis standard deviation in meters.
    pub scale: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
}

impl GaussianPrimitive {
    pub fn isotropic(position: Vector3<f64>, color: [f64; 3], opacity: f64, scale: f64) -> Self {
        Self {
            position,
            opacity,
            color,
            scale: Vector3::repeat(scale),
            rotation: UnitQuaternion::identity(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(Error::invalid(format!("opacity {} outside [0,1]", self.opacity)));
        }
        if self.color.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::invalid(format!("color {:?} outside [0,1]", self.color)));
        }
        if self.scale.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::invalid(format!("scale {:?} must be positive", self.scale)));
        }
        if !self.position.iter().all(|p| p.is_finite()) {
            return Err(Error::invalid("non-finite position"));
        }
        let n = self.rotation.into_inner().norm();
        if (n - 1.0).abs() > QUAT_TOL {
            return Err(Error::invalid(format!("quaternion norm {n}")));
        }
        Ok(())
    }

    /// `R S Sᵀ Rᵀ`.
    pub fn covariance(&self) -> Matrix3<f64> {
        let r = self.rotation.to_rotation_matrix().into_inner();
        let s2 = Matrix3::from_diagonal(&self.scale.component_mul(&self.scale));
        r * s2 * r.transpose()
    }
}

/// Ordered collection of primitives with a mutation counter.
#[derive(Debug, Clone, Default)]
pub struct GaussianMap {
    primitives: Vec<GaussianPrimitive>,
    revision: u64,
}

impl GaussianMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_primitives(primitives: Vec<GaussianPrimitive>) -> Result<Self> {
        for p in &primitives {
            p.validate()?;
        }
        Ok(Self {
            primitives,
            revision: 1,
        })
    }

    pub fn primitives(&self) -> &[GaussianPrimitive] {
        &self.primitives
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn push(&mut self, primitive: GaussianPrimitive) -> Result<()> {
        primitive.validate()?;
        self.primitives.push(primitive);
        self.revision += 1;
        Ok(())
    }

    pub fn extend(&mut self, primitives: impl IntoIterator<Item = GaussianPrimitive>) -> Result<usize> {
        let before = self.primitives.len();
        for p in primitives {
            p.validate()?;
            self.primitives.push(p);
        }
        self.revision += 1;
        Ok(self.primitives.len() - before)
    }

    /// Runs `f` over every primitive, clamping the result back into the
    /// valid range afterwards.
    pub fn update(&mut self, mut f: impl FnMut(usize, &mut GaussianPrimitive)) {
        for (i, p) in self.primitives.iter_mut().enumerate() {
            f(i, p);
            p.opacity = p.opacity.clamp(0.0, 1.0);
            for c in &mut p.color {
                *c = c.clamp(0.0, 1.0);
            }
        }
        self.revision += 1;
    }

    pub fn retain(&mut self, f: impl FnMut(&GaussianPrimitive) -> bool) {
        self.primitives.retain(f);
        self.revision += 1;
    }

    /// One primitive per line: `x y z o r g b sx sy sz qw qx qy qz`.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.primitives.len() * 120);
        for p in &self.primitives {
            let q = p.rotation.into_inner();
            let _ = writeln!(
                out,
                "{} {} {} {} {} {} {} {} {} {} {} {} {} {}",
                p.position.x,
                p.position.y,
                p.position.z,
                p.opacity,
                p.color[0],
                p.color[1],
                p.color[2],
                p.scale.x,
                p.scale.y,
                p.scale.z,
                q.w,
                q.i,
                q.j,
                q.k
            );
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut primitives = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|e| Error::parse(format!("map line {}", lineno + 1), format!("{e}")))?;
            if vals.len() != 14 {
                return Err(Error::parse(
                    format!("map line {}", lineno + 1),
                    format!("expected 14 fields, found {}", vals.len()),
                ));
            }
            let q = Quaternion::new(vals[10], vals[11], vals[12], vals[13]);
            if (q.norm() - 1.0).abs() > QUAT_TOL {
                return Err(Error::parse(
                    format!("map line {}", lineno + 1),
                    format!("quaternion norm {}", q.norm()),
                ));
            }
            let p = GaussianPrimitive {
                position: Vector3::new(vals[0], vals[1], vals[2]),
                opacity: vals[3],
                color: [vals[4], vals[5], vals[6]],
                scale: Vector3::new(vals[7], vals[8], vals[9]),
                rotation: UnitQuaternion::new_unchecked(q),
            };
            p.validate()
                .map_err(|e| Error::parse(format!("map line {}", lineno + 1), e.to_string()))?;
            primitives.push(p);
        }
        Ok(Self {
            primitives,
            revision: 1,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

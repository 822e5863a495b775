//! Orbit camera and pinhole ray generation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    /// Azimuth around +y, radians; 0 looks down -z from +z.
    pub yaw: f64,
    /// Elevation, radians, in (-pi/2, pi/2).
    pub pitch: f64,
    /// Distance from `look_at`.
    pub radius: f64,
    /// Vertical field of view, radians, in (0, pi).
    pub fov_y: f64,
    pub look_at: [f64; 3],
}

/// One pixel's ray; `dir` is unit length.
#[derive(Clone, Copy, Debug)]
pub struct Ray {
    pub origin: [f64; 3],
    pub dir: [f64; 3],
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

impl Camera {
    pub fn orbit(yaw: f64, pitch: f64, radius: f64, fov_y: f64) -> Result<Camera> {
        let cam = Camera { yaw, pitch, radius, fov_y, look_at: [0.0; 3] };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pitch.abs() < std::f64::consts::FRAC_PI_2) {
            return Err(Error::usage(format!("camera pitch {} outside (-pi/2, pi/2)", self.pitch)));
        }
        if !(self.fov_y > 0.0 && self.fov_y < std::f64::consts::PI) {
            return Err(Error::usage(format!("camera fov_y {} outside (0, pi)", self.fov_y)));
        }
        if !(self.radius > 0.0) {
            return Err(Error::usage("camera radius must be positive".to_string()));
        }
        Ok(())
    }

    /// Eye position on the orbit sphere.
    pub fn eye(&self) -> [f64; 3] {
        let (sy, cy) = self.yaw.sin_cos();
        let (sp, cp) = self.pitch.sin_cos();
        [
            self.look_at[0] + self.radius * sy * cp,
            self.look_at[1] + self.radius * sp,
            self.look_at[2] + self.radius * cy * cp,
        ]
    }

    /// Pinhole rays for a square `res x res` image through pixel centers,
    /// row-major from the top-left pixel. World up is +y.
    pub fn rays(&self, res: usize) -> Result<Vec<Ray>> {
        self.validate()?;
        if res == 0 {
            return Err(Error::usage("ray grid resolution must be positive"));
        }
        let eye = self.eye();
        let forward = normalize([
            self.look_at[0] - eye[0],
            self.look_at[1] - eye[1],
            self.look_at[2] - eye[2],
        ]);
        let right = normalize(cross(forward, [0.0, 1.0, 0.0]));
        let up = cross(right, forward);
        let tan_half = (self.fov_y / 2.0).tan();
        let mut rays = Vec::with_capacity(res * res);
        for i in 0..res {
            // v runs +1 (top row) to -1 (bottom row) at pixel centers.
            let v = 1.0 - (i as f64 + 0.5) / res as f64 * 2.0;
            for j in 0..res {
                let u = (j as f64 + 0.5) / res as f64 * 2.0 - 1.0;
                let dir = normalize([
                    forward[0] + tan_half * (u * right[0] + v * up[0]),
                    forward[1] + tan_half * (u * right[1] + v * up[1]),
                    forward[2] + tan_half * (u * right[2] + v * up[2]),
                ]);
                rays.push(Ray { origin: eye, dir });
            }
        }
        Ok(rays)
    }
}

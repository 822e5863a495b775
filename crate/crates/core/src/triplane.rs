//! Axis-aligned tri-plane feature fields.
//!
//! A field over `[-bound, bound]^3` is stored as three `[C, P, P]` feature
//! planes (xy, xz, yz). A 3-D point projects orthographically onto each
//! plane; the field value is the SUM of the three bilinear samples.

use crate::error::{Error, Result};
use crate::tensor::{grid_sample_2d, Tensor};

/// Plane order: index 0 spans (x, y), 1 spans (x, z), 2 spans (y, z).
pub const PLANE_AXES: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

#[derive(Clone)]
pub struct TriPlane {
    pub planes: [Tensor; 3],
    pub bound: f64,
}

impl TriPlane {
    pub fn new(planes: [Tensor; 3], bound: f64) -> Result<Self> {
        let s0 = planes[0].shape().to_vec();
        if s0.len() != 3 || s0[1] != s0[2] || s0[1] < 2 {
            return Err(Error::dim(format!("tri-plane wants square [C,P,P] planes, got {:?}", s0)));
        }
        for p in &planes[1..] {
            if p.shape() != s0.as_slice() {
                return Err(Error::dim(format!(
                    "tri-plane planes disagree: {:?} vs {:?}",
                    p.shape(),
                    s0
                )));
            }
        }
        if bound <= 0.0 {
            return Err(Error::usage("tri-plane bound must be positive"));
        }
        Ok(TriPlane { planes, bound })
    }

    pub fn zeros(channels: usize, resolution: usize, bound: f64) -> Result<Self> {
        let z = || Tensor::zeros(vec![channels, resolution, resolution]);
        TriPlane::new([z(), z(), z()], bound)
    }

    pub fn channels(&self) -> usize {
        self.planes[0].shape()[0]
    }

    pub fn resolution(&self) -> usize {
        self.planes[0].shape()[1]
    }

    /// Normalized plane coordinates of one point: ((x,y), (x,z), (y,z)),
    /// each divided by `bound`. Points inside the box land in `[-1,1]^2`.
    pub fn project_point(&self, p: [f64; 3]) -> [[f64; 2]; 3] {
        let inv = 1.0 / self.bound;
        PLANE_AXES.map(|(a, b)| [p[a] * inv, p[b] * inv])
    }

    /// Field features at `points [M,3]`: the sum of the three plane samples.
    /// Differentiable w.r.t. the planes; points are treated as constants.
    pub fn sample(&self, points: &Tensor) -> Result<Tensor> {
        let s = points.shape();
        if s.len() != 2 || s[1] != 3 {
            return Err(Error::dim(format!("sample wants points [M,3], got {:?}", s)));
        }
        let m = s[0];
        let pd = points.data();
        let inv = (1.0 / self.bound) as f32;
        let mut acc: Option<Tensor> = None;
        for (k, (a, b)) in PLANE_AXES.iter().enumerate() {
            let mut coords = Vec::with_capacity(m * 2);
            for i in 0..m {
                coords.push(pd[i * 3 + a] * inv);
                coords.push(pd[i * 3 + b] * inv);
            }
            let coords = Tensor::from_vec(vec![m, 2], coords)?;
            let part = grid_sample_2d(&self.planes[k], &coords)?;
            acc = Some(match acc {
                None => part,
                Some(prev) => prev.add(&part)?,
            });
        }
        Ok(acc.expect("three planes"))
    }

    /// Elementwise `self + delta` (tape-aware); shapes and bounds must match.
    pub fn apply_offsets(&self, delta: &TriPlane) -> Result<TriPlane> {
        if delta.planes[0].shape() != self.planes[0].shape() || delta.bound != self.bound {
            return Err(Error::dim("tri-plane offset geometry mismatch".to_string()));
        }
        let planes = [
            self.planes[0].add(&delta.planes[0])?,
            self.planes[1].add(&delta.planes[1])?,
            self.planes[2].add(&delta.planes[2])?,
        ];
        TriPlane::new(planes, self.bound)
    }

    /// View of a stacked `[3, C, P, P]` tensor as a tri-plane; gradients flow
    /// back to the stacked tensor. Used when the planes must be a single
    /// optimizer variable.
    pub fn from_stacked(stacked: &Tensor, bound: f64) -> Result<TriPlane> {
        let s = stacked.shape();
        if s.len() != 4 || s[0] != 3 {
            return Err(Error::dim(format!("stacked tri-plane wants [3,C,P,P], got {:?}", s)));
        }
        let plane = |i: usize| -> Result<Tensor> {
            stacked.narrow(0, i, 1)?.reshape(vec![s[1], s[2], s[3]])
        };
        TriPlane::new([plane(0)?, plane(1)?, plane(2)?], bound)
    }

    pub fn detach(&self) -> TriPlane {
        TriPlane {
            planes: [self.planes[0].detach(), self.planes[1].detach(), self.planes[2].detach()],
            bound: self.bound,
        }
    }
}

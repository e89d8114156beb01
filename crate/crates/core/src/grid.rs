use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cell-centred radial × azimuthal × axial grid over a cylindrical field.
///
/// Node `(i, j, k)` sits at radius `(i + 1/2) dr`, angle `j dθ` and depth
/// `(k + 1/2) dz` below the surface; `k = 0` is the surface layer. Node ids
/// are layer-major: `id = (k * n_theta + j) * n_r + i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CylGrid {
    pub n_r: usize,
    pub n_theta: usize,
    pub n_z: usize,
    pub radius: f64,
    pub depth: f64,
    pub dr: f64,
    pub dtheta: f64,
    pub dz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeIndex {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

impl CylGrid {
    pub fn new(radius: f64, depth: f64, n_r: usize, n_theta: usize, n_z: usize) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite() && depth > 0.0 && depth.is_finite()) {
            return Err(Error::param(format!(
                "grid needs positive radius and depth, got R={radius}, Z={depth}"
            )));
        }
        if n_r == 0 || n_theta == 0 || n_z == 0 {
            return Err(Error::param(format!(
                "grid counts must be positive, got ({n_r}, {n_theta}, {n_z})"
            )));
        }
        Ok(CylGrid {
            n_r,
            n_theta,
            n_z,
            radius,
            depth,
            dr: radius / n_r as f64,
            dtheta: 2.0 * PI / n_theta as f64,
            dz: depth / n_z as f64,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n_r * self.n_theta * self.n_z
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Nodes per horizontal layer.
    #[inline]
    pub fn layer_len(&self) -> usize {
        self.n_r * self.n_theta
    }

    #[inline]
    pub fn id(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.n_r && j < self.n_theta && k < self.n_z);
        (k * self.n_theta + j) * self.n_r + i
    }

    #[inline]
    pub fn index(&self, id: usize) -> NodeIndex {
        debug_assert!(id < self.len());
        let i = id % self.n_r;
        let rest = id / self.n_r;
        NodeIndex {
            i,
            j: rest % self.n_theta,
            k: rest / self.n_theta,
        }
    }

    #[inline]
    pub fn r(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dr
    }

    #[inline]
    pub fn theta(&self, j: usize) -> f64 {
        j as f64 * self.dtheta
    }

    /// Depth of the node centre below the surface (m).
    #[inline]
    pub fn z(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.dz
    }

    /// Plan area of one node of ring `i` (m²).
    #[inline]
    pub fn plan_area(&self, i: usize) -> f64 {
        self.r(i) * self.dr * self.dtheta
    }

    #[inline]
    pub fn volume(&self, i: usize) -> f64 {
        self.plan_area(i) * self.dz
    }

    /// Node ids of layer `k`.
    pub fn layer(&self, k: usize) -> std::ops::Range<usize> {
        let start = k * self.layer_len();
        start..start + self.layer_len()
    }

    /// Surface node for ring `i`, sector `j`.
    #[inline]
    pub fn surface_id(&self, i: usize, j: usize) -> usize {
        self.id(i, j, 0)
    }

    /// Id of the node obtained by rotating `id` forward by `s` sectors.
    pub fn rotate(&self, id: usize, s: usize) -> usize {
        let NodeIndex { i, j, k } = self.index(id);
        self.id(i, (j + s) % self.n_theta, k)
    }
}

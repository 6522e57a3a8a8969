//! Internal (volume) and boundary (inflow) source families.
//!
//! Each family sits behind a trait so sweeps can evaluate sources exactly
//! at ray points when an analytic form exists; sampled fields fall back to
//! trilinear interpolation with zero extension outside the domain.

use std::sync::Arc;

use crate::grid::{interpolate_spatial, BoundaryField, PhaseField, PhaseGrid};
use crate::vec3::{self, Vec3};
use crate::SPECIES;

/// A volume source `f_j(x, omega, E)`.
pub trait VolumeSource: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &'static str;
    /// Point evaluation; `dir`/`energy` are the grid indices of `omega`/`E`
    /// so sampled fields can address their stored lanes.
    fn eval(&self, grid: &PhaseGrid, j: usize, x: Vec3, dir: usize, energy: usize) -> f64;
    /// Per-species constant value when the family is spatially uniform.
    fn as_constant(&self) -> Option<[f64; SPECIES]> {
        None
    }
    /// Backing grid field if the source is sampled data; lets sweeps share
    /// interpolation stencils and keeps their transposes exact.
    fn as_field(&self) -> Option<&PhaseField> {
        None
    }
}

/// An inflow boundary source `g_j(y, omega, E)` on `Gamma_-`.
pub trait InflowSource: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &'static str;
    /// Evaluate at a boundary point; `dir`/`energy` index the grid rules.
    fn eval(&self, grid: &PhaseGrid, j: usize, y: Vec3, dir: usize, energy: usize) -> f64;
    /// Backing boundary dofs if the source is sampled data.
    fn as_field(&self) -> Option<&BoundaryField> {
        None
    }
}

/// Shared handle to a volume source.
#[derive(Debug, Clone)]
pub struct InternalSource(pub Arc<dyn VolumeSource>);

/// Shared handle to an inflow source.
#[derive(Debug, Clone)]
pub struct BoundarySource(pub Arc<dyn InflowSource>);

impl InternalSource {
    pub fn zero() -> Self {
        InternalSource(Arc::new(ConstantVolume { value: [0.0; SPECIES] }))
    }

    pub fn constant(value: [f64; SPECIES]) -> Self {
        InternalSource(Arc::new(ConstantVolume { value }))
    }

    pub fn from_field(field: PhaseField) -> Self {
        InternalSource(Arc::new(FieldVolume { field }))
    }

    #[inline]
    pub fn eval(&self, grid: &PhaseGrid, j: usize, x: Vec3, dir: usize, energy: usize) -> f64 {
        self.0.eval(grid, j, x, dir, energy)
    }

    pub fn as_constant(&self) -> Option<[f64; SPECIES]> {
        self.0.as_constant()
    }

    /// Sample onto the grid nodes.
    pub fn sample(&self, grid: &PhaseGrid) -> PhaseField {
        let mut f = PhaseField::zeros(grid);
        for j in 0..SPECIES {
            for (i, &x) in grid.spatial.nodes.iter().enumerate() {
                for d in 0..grid.n_dir() {
                    for e in 0..grid.n_energy() {
                        f.set(j, i, d, e, self.eval(grid, j, x, d, e));
                    }
                }
            }
        }
        f
    }
}

impl BoundarySource {
    pub fn zero() -> Self {
        BoundarySource(Arc::new(ConstantInflow { value: [0.0; SPECIES] }))
    }

    pub fn constant(value: [f64; SPECIES]) -> Self {
        BoundarySource(Arc::new(ConstantInflow { value }))
    }

    pub fn from_field(field: BoundaryField) -> Self {
        BoundarySource(Arc::new(FieldInflow { field }))
    }

    #[inline]
    pub fn eval(&self, grid: &PhaseGrid, j: usize, y: Vec3, dir: usize, energy: usize) -> f64 {
        self.0.eval(grid, j, y, dir, energy)
    }

    /// Sample onto the inflow boundary quadrature.
    pub fn sample(&self, grid: &PhaseGrid) -> BoundaryField {
        let mut g = BoundaryField::zeros(grid);
        for j in 0..SPECIES {
            for (i, s) in grid.boundary.iter().enumerate() {
                let y = grid.surface[s.surf as usize].pos;
                g.set(j, i, self.eval(grid, j, y, s.dir as usize, s.energy as usize));
            }
        }
        g
    }
}

/// Spatially uniform volume source.
#[derive(Debug, Clone)]
pub struct ConstantVolume {
    pub value: [f64; SPECIES],
}

impl VolumeSource for ConstantVolume {
    fn name(&self) -> &'static str {
        "constant"
    }
    fn eval(&self, _grid: &PhaseGrid, j: usize, _x: Vec3, _d: usize, _e: usize) -> f64 {
        self.value[j]
    }
    fn as_constant(&self) -> Option<[f64; SPECIES]> {
        Some(self.value)
    }
}

/// Isotropic Gaussian bump `a_j exp(-|x - center|^2 / (2 width^2))`.
#[derive(Debug, Clone)]
pub struct GaussianBump {
    pub center: Vec3,
    pub width: f64,
    pub amplitude: [f64; SPECIES],
}

impl VolumeSource for GaussianBump {
    fn name(&self) -> &'static str {
        "gaussian"
    }
    fn eval(&self, _grid: &PhaseGrid, j: usize, x: Vec3, _d: usize, _e: usize) -> f64 {
        let r = vec3::sub(x, self.center);
        self.amplitude[j] * (-vec3::dot(r, r) / (2.0 * self.width * self.width)).exp()
    }
}

/// Sub-region with constant emission; used by the per-region family.
#[derive(Debug, Clone)]
pub enum RegionShape {
    Ball { center: Vec3, radius: f64 },
    Box { lo: Vec3, hi: Vec3 },
}

impl RegionShape {
    pub fn contains(&self, x: Vec3) -> bool {
        match self {
            RegionShape::Ball { center, radius } => vec3::norm(vec3::sub(x, *center)) < *radius,
            RegionShape::Box { lo, hi } => (0..3).all(|d| lo[d] < x[d] && x[d] < hi[d]),
        }
    }

    pub fn volume(&self) -> f64 {
        match self {
            RegionShape::Ball { radius, .. } => 4.0 / 3.0 * std::f64::consts::PI * radius.powi(3),
            RegionShape::Box { lo, hi } => (0..3).map(|d| hi[d] - lo[d]).product(),
        }
    }
}

/// Piecewise-constant emission over a list of regions (first match wins),
/// zero elsewhere.
#[derive(Debug, Clone)]
pub struct PerRegionVolume {
    pub regions: Vec<(RegionShape, [f64; SPECIES])>,
}

impl VolumeSource for PerRegionVolume {
    fn name(&self) -> &'static str {
        "per-region"
    }
    fn eval(&self, _grid: &PhaseGrid, j: usize, x: Vec3, _d: usize, _e: usize) -> f64 {
        for (shape, v) in &self.regions {
            if shape.contains(x) {
                return v[j];
            }
        }
        0.0
    }
}

/// Phase field treated as a source; trilinear in space, nearest in the
/// angular/energy indices (they address the same rules).
#[derive(Debug, Clone)]
pub struct FieldVolume {
    pub field: PhaseField,
}

impl VolumeSource for FieldVolume {
    fn name(&self) -> &'static str {
        "field"
    }
    fn eval(&self, grid: &PhaseGrid, j: usize, x: Vec3, dir: usize, energy: usize) -> f64 {
        interpolate_spatial(&self.field, grid, x, j, dir, energy)
    }
    fn as_field(&self) -> Option<&PhaseField> {
        Some(&self.field)
    }
}

/// Uniform inflow over the whole boundary.
#[derive(Debug, Clone)]
pub struct ConstantInflow {
    pub value: [f64; SPECIES],
}

impl InflowSource for ConstantInflow {
    fn name(&self) -> &'static str {
        "constant"
    }
    fn eval(&self, _grid: &PhaseGrid, j: usize, _y: Vec3, _d: usize, _e: usize) -> f64 {
        self.value[j]
    }
}

/// Inflow restricted to a surface patch, a direction cone around the
/// inward normal, and an energy window.
///
/// The patch is the set of boundary points within `patch_radius` of
/// `patch_center` (a chordal cap on the ball, a disk on a box face).
#[derive(Debug, Clone)]
pub struct BoundaryPatch {
    pub patch_center: Vec3,
    pub patch_radius: f64,
    /// Minimum `omega . (-nu)`; 0 admits the whole inward hemisphere.
    pub cone_cos: f64,
    pub e_min: f64,
    pub e_max: f64,
    pub amplitude: [f64; SPECIES],
}

impl InflowSource for BoundaryPatch {
    fn name(&self) -> &'static str {
        "boundary-patch"
    }
    fn eval(&self, grid: &PhaseGrid, j: usize, y: Vec3, dir: usize, energy: usize) -> f64 {
        if vec3::norm(vec3::sub(y, self.patch_center)) > self.patch_radius {
            return 0.0;
        }
        let e = grid.energy.nodes[energy];
        if e < self.e_min || e > self.e_max {
            return 0.0;
        }
        let nu = grid.domain().normal_at(y);
        let inward = -vec3::dot(grid.angular.nodes[dir], nu);
        if inward < self.cone_cos.max(0.0) {
            return 0.0;
        }
        self.amplitude[j]
    }
}

/// Sampled boundary control; nearest surface node sharing the direction
/// and energy indices.
#[derive(Debug, Clone)]
pub struct FieldInflow {
    pub field: BoundaryField,
}

impl InflowSource for FieldInflow {
    fn name(&self) -> &'static str {
        "field"
    }
    fn as_field(&self) -> Option<&BoundaryField> {
        Some(&self.field)
    }
    fn eval(&self, grid: &PhaseGrid, j: usize, y: Vec3, dir: usize, energy: usize) -> f64 {
        // Exact sample if y coincides with a surface node, else nearest
        // surface node with the same (dir, energy).
        let mut best = (f64::INFINITY, None);
        for (si, s) in grid.surface.iter().enumerate() {
            let d = vec3::sub(y, s.pos);
            let d2 = vec3::dot(d, d);
            if d2 < best.0 {
                if let Some(idx) = grid.sample_index(si, dir, energy) {
                    best = (d2, Some(idx));
                }
            }
        }
        match best.1 {
            Some(idx) => self.field.get(j, idx),
            None => 0.0,
        }
    }
}

/// Scalar time modulation for time-dependent runs; sources stay separable
/// as `shape(x, omega, E) * profile(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeProfile {
    Constant,
    /// Linear rise to 1 at `t_full`, constant afterwards.
    Ramp { t_full: f64 },
    /// Cosine ramp, C^1 at both ends: `(1 - cos(pi t / t_full)) / 2`.
    SmoothRamp { t_full: f64 },
}

impl TimeProfile {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Constant => 1.0,
            TimeProfile::Ramp { t_full } => (t / t_full).clamp(0.0, 1.0),
            TimeProfile::SmoothRamp { t_full } => {
                if t <= 0.0 {
                    0.0
                } else if t >= t_full {
                    1.0
                } else {
                    0.5 * (1.0 - (std::f64::consts::PI * t / t_full).cos())
                }
            }
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Constant => 0.0,
            TimeProfile::Ramp { t_full } => {
                if t > 0.0 && t < t_full {
                    1.0 / t_full
                } else {
                    0.0
                }
            }
            TimeProfile::SmoothRamp { t_full } => {
                if t > 0.0 && t < t_full {
                    let k = std::f64::consts::PI / t_full;
                    0.5 * k * (k * t).sin()
                } else {
                    0.0
                }
            }
        }
    }
}

/// Names of the registered volume source families.
pub fn volume_registry() -> &'static [&'static str] {
    &["constant", "gaussian", "per-region", "field"]
}

/// Names of the registered boundary source families.
pub fn boundary_registry() -> &'static [&'static str] {
    &["constant", "boundary-patch", "field"]
}

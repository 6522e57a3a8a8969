//! Convex-domain geometry: membership, escape times along rays, boundary
//! hits and normals, inflow/outflow classification.
//!
//! Every domain shape implements [`DomainShape`]; shapes are registered by
//! name (see [`registry`]) and selected from the scenario config at runtime.
//! Both stock shapes (`ball`, `box`) are convex, so escape times are
//! continuous on the interior and back-traced boundary hits are unique.

use std::sync::Arc;

use crate::error::GeometryError;
use crate::quadrature::gauss_legendre;
use crate::vec3::{self, Vec3};

/// Absolute tolerance floor for geometric comparisons.
pub const ABS_FLOOR: f64 = 1e-14;
/// Relative (to the diameter) tolerance for boundary membership.
pub const REL_TOL: f64 = 1e-12;
/// Threshold on |omega . nu| below which a crossing counts as tangent.
pub const TANGENT_TOL: f64 = 1e-12;

/// Shared handle to a convex domain shape.
pub type Domain = Arc<dyn DomainShape>;

/// A surface quadrature node: position, outward normal and area weight.
#[derive(Debug, Clone, Copy)]
pub struct SurfaceNode {
    pub pos: Vec3,
    pub normal: Vec3,
    pub weight: f64,
}

/// Result of tracing a ray backward to the boundary.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryHit {
    /// Hit point `y = x - time * omega` on the boundary.
    pub point: Vec3,
    /// Outward unit normal at the hit point.
    pub normal: Vec3,
    /// Backward escape time (distance since `omega` is unit).
    pub time: f64,
}

/// Side classification of a boundary phase point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundarySide {
    Inflow,
    Outflow,
    Tangent,
}

/// An open bounded convex region of 3-space.
///
/// `escape_time_raw` and `forward_exit_raw` are the shape-specific closed
/// forms; validation against preconditions happens in the free functions
/// [`escape_time`], [`boundary_hit`] and friends.
pub trait DomainShape: Send + Sync + std::fmt::Debug {
    /// Registry name of this shape family.
    fn name(&self) -> &'static str;
    /// Strict interior membership.
    fn contains(&self, x: Vec3) -> bool;
    /// Diameter of the domain.
    fn diameter(&self) -> f64;
    /// Axis-aligned bounding box (lo, hi).
    fn bounding_box(&self) -> (Vec3, Vec3);
    /// Volume of the region.
    fn volume(&self) -> f64;
    /// First `s > 0` with `x - s omega` outside the closure, for interior `x`.
    fn escape_time_raw(&self, x: Vec3, omega: Vec3) -> f64;
    /// First `s > 0` with `y + s omega` outside the closure, for `y` in the closure.
    fn forward_exit_raw(&self, y: Vec3, omega: Vec3) -> f64;
    /// Outward unit normal at a boundary point.
    fn normal_at(&self, y: Vec3) -> Vec3;
    /// Signed distance-like boundary residual: ~0 on the boundary,
    /// negative inside, positive outside. Scaled to length units.
    fn boundary_residual(&self, y: Vec3) -> f64;
    /// Surface quadrature with roughly `n_u x n_v` nodes per panel.
    /// Weights sum to the surface area exactly for the stock shapes.
    fn surface_quadrature(&self, n_u: usize, n_v: usize) -> Vec<SurfaceNode>;
    /// Uniform random interior point (rejection against the bounding box).
    fn sample_interior(&self, rng: &mut dyn FnMut() -> f64) -> Vec3 {
        let (lo, hi) = self.bounding_box();
        loop {
            let x = [
                lo[0] + (hi[0] - lo[0]) * rng(),
                lo[1] + (hi[1] - lo[1]) * rng(),
                lo[2] + (hi[2] - lo[2]) * rng(),
            ];
            if self.contains(x) {
                return x;
            }
        }
    }
}

/// Open ball `{ |x - center| < radius }`.
#[derive(Debug, Clone)]
pub struct Ball {
    pub center: Vec3,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec3, radius: f64) -> Self {
        assert!(radius > 0.0, "ball radius must be positive");
        Ball { center, radius }
    }
}

impl DomainShape for Ball {
    fn name(&self) -> &'static str {
        "ball"
    }

    fn contains(&self, x: Vec3) -> bool {
        vec3::norm(vec3::sub(x, self.center)) < self.radius
    }

    fn diameter(&self) -> f64 {
        2.0 * self.radius
    }

    fn bounding_box(&self) -> (Vec3, Vec3) {
        let r = [self.radius; 3];
        (vec3::sub(self.center, r), vec3::add(self.center, r))
    }

    fn volume(&self) -> f64 {
        4.0 / 3.0 * std::f64::consts::PI * self.radius.powi(3)
    }

    fn escape_time_raw(&self, x: Vec3, omega: Vec3) -> f64 {
        // t = <x, w> + sqrt(<x, w>^2 + r^2 - |x|^2), centered coordinates.
        let xc = vec3::sub(x, self.center);
        let xw = vec3::dot(xc, omega);
        let disc = xw * xw + self.radius * self.radius - vec3::dot(xc, xc);
        xw + disc.max(0.0).sqrt()
    }

    fn forward_exit_raw(&self, y: Vec3, omega: Vec3) -> f64 {
        let yc = vec3::sub(y, self.center);
        let yw = vec3::dot(yc, omega);
        let disc = yw * yw + self.radius * self.radius - vec3::dot(yc, yc);
        (-yw + disc.max(0.0).sqrt()).max(0.0)
    }

    fn normal_at(&self, y: Vec3) -> Vec3 {
        vec3::normalize(vec3::sub(y, self.center))
    }

    fn boundary_residual(&self, y: Vec3) -> f64 {
        vec3::norm(vec3::sub(y, self.center)) - self.radius
    }

    fn surface_quadrature(&self, n_u: usize, n_v: usize) -> Vec<SurfaceNode> {
        // Latitude-longitude rule: Gauss-Legendre in cos(theta), uniform
        // offset azimuth. Exact for the total area.
        let (ct, wt) = gauss_legendre(n_u);
        let r = self.radius;
        let dphi = 2.0 * std::f64::consts::PI / n_v as f64;
        let mut nodes = Vec::with_capacity(n_u * n_v);
        for (i, &c) in ct.iter().enumerate() {
            for k in 0..n_v {
                let phi = dphi * (k as f64 + 0.5);
                let dir = vec3::from_spherical(c, phi);
                nodes.push(SurfaceNode {
                    pos: vec3::axpy(self.center, r, dir),
                    normal: dir,
                    weight: r * r * wt[i] * dphi,
                });
            }
        }
        nodes
    }
}

/// Open axis-aligned box `{ lo < x < hi }` componentwise.
#[derive(Debug, Clone)]
pub struct BoxDomain {
    pub lo: Vec3,
    pub hi: Vec3,
}

impl BoxDomain {
    pub fn new(lo: Vec3, hi: Vec3) -> Self {
        for d in 0..3 {
            assert!(lo[d] < hi[d], "box needs lo < hi componentwise");
        }
        BoxDomain { lo, hi }
    }
}

impl DomainShape for BoxDomain {
    fn name(&self) -> &'static str {
        "box"
    }

    fn contains(&self, x: Vec3) -> bool {
        (0..3).all(|d| self.lo[d] < x[d] && x[d] < self.hi[d])
    }

    fn diameter(&self) -> f64 {
        vec3::norm(vec3::sub(self.hi, self.lo))
    }

    fn bounding_box(&self) -> (Vec3, Vec3) {
        (self.lo, self.hi)
    }

    fn volume(&self) -> f64 {
        (0..3).map(|d| self.hi[d] - self.lo[d]).product()
    }

    fn escape_time_raw(&self, x: Vec3, omega: Vec3) -> f64 {
        // Minimum positive slab crossing along -omega.
        let mut t = f64::INFINITY;
        for d in 0..3 {
            if omega[d].abs() < ABS_FLOOR {
                continue;
            }
            // x_d - t w_d hits lo_d or hi_d at these parameters.
            let t_lo = (x[d] - self.lo[d]) / omega[d];
            let t_hi = (x[d] - self.hi[d]) / omega[d];
            for cand in [t_lo, t_hi] {
                if cand > 0.0 && cand < t {
                    t = cand;
                }
            }
        }
        t
    }

    fn forward_exit_raw(&self, y: Vec3, omega: Vec3) -> f64 {
        let mut t = f64::INFINITY;
        for d in 0..3 {
            if omega[d].abs() < ABS_FLOOR {
                continue;
            }
            let t_lo = (self.lo[d] - y[d]) / omega[d];
            let t_hi = (self.hi[d] - y[d]) / omega[d];
            let tol = REL_TOL * self.diameter();
            for cand in [t_lo, t_hi] {
                if cand > tol && cand < t {
                    t = cand;
                }
            }
        }
        if t.is_finite() {
            t
        } else {
            0.0
        }
    }

    fn normal_at(&self, y: Vec3) -> Vec3 {
        // Face with the smallest residual wins; edges resolve arbitrarily
        // to one adjacent face.
        let mut best = (f64::INFINITY, [1.0, 0.0, 0.0]);
        for d in 0..3 {
            let mut n_lo = [0.0; 3];
            n_lo[d] = -1.0;
            let mut n_hi = [0.0; 3];
            n_hi[d] = 1.0;
            let r_lo = (y[d] - self.lo[d]).abs();
            let r_hi = (y[d] - self.hi[d]).abs();
            if r_lo < best.0 {
                best = (r_lo, n_lo);
            }
            if r_hi < best.0 {
                best = (r_hi, n_hi);
            }
        }
        best.1
    }

    fn boundary_residual(&self, y: Vec3) -> f64 {
        // Negative inside (distance to nearest face), positive outside.
        let mut outside: f64 = 0.0;
        let mut inside = f64::INFINITY;
        for d in 0..3 {
            let lo_gap = self.lo[d] - y[d];
            let hi_gap = y[d] - self.hi[d];
            outside = outside.max(lo_gap).max(hi_gap);
            inside = inside.min((y[d] - self.lo[d]).min(self.hi[d] - y[d]));
        }
        if outside > 0.0 {
            outside
        } else {
            -inside
        }
    }

    fn surface_quadrature(&self, n_u: usize, n_v: usize) -> Vec<SurfaceNode> {
        // Midpoint rule per face, n_u x n_v cells; exact total area.
        let mut nodes = Vec::with_capacity(6 * n_u * n_v);
        for d in 0..3 {
            let (a, b) = ((d + 1) % 3, (d + 2) % 3);
            let (la, ha) = (self.lo[a], self.hi[a]);
            let (lb, hb) = (self.lo[b], self.hi[b]);
            let (du, dv) = ((ha - la) / n_u as f64, (hb - lb) / n_v as f64);
            for (coord, sign) in [(self.lo[d], -1.0), (self.hi[d], 1.0)] {
                let mut normal = [0.0; 3];
                normal[d] = sign;
                for i in 0..n_u {
                    for k in 0..n_v {
                        let mut pos = [0.0; 3];
                        pos[d] = coord;
                        pos[a] = la + du * (i as f64 + 0.5);
                        pos[b] = lb + dv * (k as f64 + 0.5);
                        nodes.push(SurfaceNode { pos, normal, weight: du * dv });
                    }
                }
            }
        }
        nodes
    }
}

fn check_unit(omega: Vec3) -> Result<(), GeometryError> {
    if (vec3::norm(omega) - 1.0).abs() > REL_TOL {
        return Err(GeometryError::BadDirection(omega));
    }
    Ok(())
}

/// Backward escape time `t(x, omega) = inf { s > 0 | x - s omega not in G }`.
pub fn escape_time(dom: &dyn DomainShape, x: Vec3, omega: Vec3) -> Result<f64, GeometryError> {
    check_unit(omega)?;
    if !dom.contains(x) {
        return Err(GeometryError::NotInterior(x));
    }
    Ok(dom.escape_time_raw(x, omega))
}

/// Forward exit time `t_+(y, omega) = inf { s > 0 | y + s omega not in G }`
/// for `y` in the closure of the domain. Bounded by the diameter.
pub fn escape_time_forward(dom: &dyn DomainShape, y: Vec3, omega: Vec3) -> Result<f64, GeometryError> {
    check_unit(omega)?;
    Ok(dom.forward_exit_raw(y, omega))
}

/// Trace backward from an interior point to the boundary.
///
/// The returned hit satisfies `omega . normal <= 0` up to the tangency
/// tolerance; exact tangential grazings (box edges) report
/// [`GeometryError::TangentFace`] so callers may perturb the direction.
pub fn boundary_hit(dom: &dyn DomainShape, x: Vec3, omega: Vec3) -> Result<BoundaryHit, GeometryError> {
    let time = escape_time(dom, x, omega)?;
    let point = vec3::axpy(x, -time, omega);
    let normal = dom.normal_at(point);
    let cosine = vec3::dot(omega, normal);
    if cosine.abs() < TANGENT_TOL {
        return Err(GeometryError::TangentFace { point, cosine });
    }
    Ok(BoundaryHit { point, normal, time })
}

/// Classify a boundary phase point as inflow, outflow or tangent.
pub fn classify_boundary(dom: &dyn DomainShape, y: Vec3, omega: Vec3) -> Result<BoundarySide, GeometryError> {
    check_unit(omega)?;
    if dom.boundary_residual(y).abs() > REL_TOL * dom.diameter() {
        return Err(GeometryError::NotOnBoundary(y));
    }
    let c = vec3::dot(omega, dom.normal_at(y));
    Ok(if c < -TANGENT_TOL {
        BoundarySide::Inflow
    } else if c > TANGENT_TOL {
        BoundarySide::Outflow
    } else {
        BoundarySide::Tangent
    })
}

/// Builders for the registered domain shapes.
///
/// Each entry maps a config name to a constructor taking `(center/lo, hi,
/// radius)` style parameters already parsed by the config layer.
pub fn registry() -> &'static [(&'static str, fn(&DomainParams) -> Domain)] {
    fn build_ball(p: &DomainParams) -> Domain {
        Arc::new(Ball::new(p.center, p.radius))
    }
    fn build_box(p: &DomainParams) -> Domain {
        Arc::new(BoxDomain::new(p.lo, p.hi))
    }
    &[("ball", build_ball), ("box", build_box)]
}

/// Geometry parameters collected from a scenario config.
#[derive(Debug, Clone)]
pub struct DomainParams {
    pub center: Vec3,
    pub radius: f64,
    pub lo: Vec3,
    pub hi: Vec3,
}

impl Default for DomainParams {
    fn default() -> Self {
        DomainParams {
            center: [0.0; 3],
            radius: 1.0,
            lo: [0.0; 3],
            hi: [1.0; 3],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn unit_ball() -> Ball {
        Ball::new([0.0; 3], 1.0)
    }

    fn unit_box() -> BoxDomain {
        BoxDomain::new([0.0; 3], [1.0; 3])
    }

    #[test]
    fn ball_escape_times_match_closed_form() {
        let b = unit_ball();
        assert_abs_diff_eq!(escape_time(&b, [0.0; 3], [0.0, 0.0, 1.0]).unwrap(), 1.0);
        assert_abs_diff_eq!(
            escape_time(&b, [0.5, 0.0, 0.0], [1.0, 0.0, 0.0]).unwrap(),
            1.5,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            escape_time(&b, [0.5, 0.0, 0.0], [0.0, 1.0, 0.0]).unwrap(),
            0.75f64.sqrt(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn box_escape_time_is_slab_crossing() {
        let b = unit_box();
        assert_abs_diff_eq!(
            escape_time(&b, [0.5, 0.5, 0.5], [0.0, 0.0, 1.0]).unwrap(),
            0.5,
            epsilon = 1e-14
        );
    }

    #[test]
    fn forward_exit_examples() {
        let b = unit_ball();
        assert_abs_diff_eq!(
            escape_time_forward(&b, [-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]).unwrap(),
            2.0,
            epsilon = 1e-14
        );
        let bx = unit_box();
        assert_abs_diff_eq!(
            escape_time_forward(&bx, [0.0, 0.5, 0.5], [1.0, 0.0, 0.0]).unwrap(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn forward_exit_is_reflected_escape_time_inside() {
        let b = unit_ball();
        let x = [0.3, -0.2, 0.4];
        let w = vec3::normalize([0.5, 0.7, -0.3]);
        let fwd = escape_time_forward(&b, x, w).unwrap();
        let back = escape_time(&b, x, [-w[0], -w[1], -w[2]]).unwrap();
        assert_abs_diff_eq!(fwd, back, epsilon = 1e-13);
    }

    #[test]
    fn boundary_hit_examples() {
        let b = unit_ball();
        let hit = boundary_hit(&b, [0.0; 3], [0.0, 0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(hit.point[2], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(hit.normal[2], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(vec3::dot(hit.normal, [0.0, 0.0, 1.0]), -1.0, epsilon = 1e-14);

        let bx = unit_box();
        let hit = boundary_hit(&bx, [0.5, 0.5, 0.5], [1.0, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(hit.point[0], 0.0, epsilon = 1e-14);
        assert_eq!(hit.normal, [-1.0, 0.0, 0.0]);
    }

    #[test]
    fn classify_examples() {
        let b = unit_ball();
        let y = [1.0, 0.0, 0.0];
        assert_eq!(classify_boundary(&b, y, [-1.0, 0.0, 0.0]).unwrap(), BoundarySide::Inflow);
        assert_eq!(classify_boundary(&b, y, [1.0, 0.0, 0.0]).unwrap(), BoundarySide::Outflow);
        assert_eq!(classify_boundary(&b, y, [0.0, 1.0, 0.0]).unwrap(), BoundarySide::Tangent);
        assert!(classify_boundary(&b, [0.5, 0.0, 0.0], [1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn surface_quadrature_total_area() {
        let b = unit_ball();
        let area: f64 = b.surface_quadrature(8, 16).iter().map(|n| n.weight).sum();
        assert_abs_diff_eq!(area, 4.0 * std::f64::consts::PI, epsilon = 1e-10);

        let bx = unit_box();
        let area: f64 = bx.surface_quadrature(4, 4).iter().map(|n| n.weight).sum();
        assert_abs_diff_eq!(area, 6.0, epsilon = 1e-12);
    }

    #[test]
    fn random_ball_hits_lie_on_sphere() {
        // boundary_hit lands within 1e-10 of the sphere for random rays.
        let b = unit_ball();
        let mut state = 0x1234_5678_u64;
        let mut rng = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..200 {
            let x = [rng() - 0.5, rng() - 0.5, rng() - 0.5];
            if !b.contains(x) {
                continue;
            }
            let w = vec3::normalize([rng() - 0.5, rng() - 0.5, rng() - 0.5]);
            let hit = boundary_hit(&b, x, w).unwrap();
            assert!((vec3::norm(hit.point) - 1.0).abs() < 1e-10);
            // Backward hit is never an outflow point for the traced ray.
            assert_ne!(
                classify_boundary(&b, hit.point, w).unwrap(),
                BoundarySide::Outflow
            );
        }
    }

    #[test]
    fn directional_derivative_is_one() {
        // Richardson-extrapolated forward differences of t along omega.
        let b = unit_ball();
        let x = [0.2, -0.1, 0.3];
        let w = vec3::normalize([0.3, 0.9, -0.2]);
        let t0 = escape_time(&b, x, w).unwrap();
        let d = |h: f64| (escape_time(&b, vec3::axpy(x, h, w), w).unwrap() - t0) / h;
        let (d1, d2) = (d(1e-3), d(1e-4));
        let extrapolated = (10.0 * d2 - d1) / 9.0;
        assert!((extrapolated - 1.0).abs() < 1e-6, "got {extrapolated}");
    }

    #[test]
    fn continuity_probe_under_vanishing_perturbations() {
        let b = unit_ball();
        let mut state = 0xabcd_u64;
        let mut rng = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let x = [0.9 * (rng() - 0.5), 0.9 * (rng() - 0.5), 0.9 * (rng() - 0.5)];
            if !b.contains(x) {
                continue;
            }
            let w = vec3::normalize([rng() - 0.5, rng() - 0.5, rng() - 0.5]);
            let t0 = escape_time(&b, x, w).unwrap();
            let delta = 1e-10;
            let xp = vec3::axpy(x, delta, [1.0, 0.0, 0.0]);
            let wp = vec3::normalize(vec3::axpy(w, delta, [0.0, 1.0, 0.0]));
            let t1 = escape_time(&b, xp, wp).unwrap();
            // Escape time is Hoelder-1/2 near tangency, so allow sqrt scale.
            assert!((t1 - t0).abs() < 1e-4, "jump {} at {:?}", (t1 - t0).abs(), x);
        }
    }

    proptest! {
        #[test]
        fn escape_time_positive_and_bounded_by_diameter(
            xs in proptest::array::uniform3(-0.99f64..0.99),
            ws in proptest::array::uniform3(-1.0f64..1.0),
        ) {
            let b = unit_ball();
            prop_assume!(b.contains(xs));
            prop_assume!(vec3::norm(ws) > 1e-3);
            let w = vec3::normalize(ws);
            let t = escape_time(&b, xs, w).unwrap();
            prop_assert!(t > 0.0);
            prop_assert!(t <= b.diameter() + 1e-12);
        }

        #[test]
        fn translation_identity_along_ray(
            xs in proptest::array::uniform3(-0.6f64..0.6),
            ws in proptest::array::uniform3(-1.0f64..1.0),
            frac in 0.05f64..0.95,
        ) {
            let b = unit_ball();
            prop_assume!(b.contains(xs));
            prop_assume!(vec3::norm(ws) > 1e-3);
            let w = vec3::normalize(ws);
            let t_fwd = escape_time_forward(&b, xs, w).unwrap();
            let s = frac * t_fwd;
            let t0 = escape_time(&b, xs, w).unwrap();
            let t1 = escape_time(&b, vec3::axpy(xs, s, w), w).unwrap();
            prop_assert!((t1 - (t0 + s)).abs() < 1e-10);
        }

        #[test]
        fn box_escape_bounded(
            xs in proptest::array::uniform3(0.01f64..0.99),
            ws in proptest::array::uniform3(-1.0f64..1.0),
        ) {
            let bx = unit_box();
            prop_assume!(vec3::norm(ws) > 1e-3);
            let w = vec3::normalize(ws);
            let t = escape_time(&bx, xs, w).unwrap();
            prop_assert!(t > 0.0);
            prop_assert!(t <= bx.diameter() + 1e-12);
        }
    }
}

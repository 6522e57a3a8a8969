//! Flux-to-dose mapping, its adjoint, and time-integrated dose.
//!
//! Dose lives on the same spatial lattice as the flux; there is no
//! resampling layer, so the pair `D` / `D*` is exactly transposed under
//! the shared quadrature.

use crate::error::GridError;
use crate::grid::{Flux, PhaseField, PhaseGrid};
use crate::timedep::TimeGrid;
use crate::xs::CrossSections;
use crate::SPECIES;

/// Absorbed dose per spatial node (arbitrary Gy-like units).
#[derive(Debug, Clone, PartialEq)]
pub struct DoseMap {
    pub values: Vec<f64>,
}

impl DoseMap {
    pub fn zeros(grid: &PhaseGrid) -> Self {
        DoseMap { values: vec![0.0; grid.n_space()] }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// L2 norm against the cell volumes.
    pub fn l2_norm(&self, grid: &PhaseGrid) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * grid.spatial.cell_volume).sqrt()
    }

    /// Volume-weighted inner product.
    pub fn dot(&self, other: &DoseMap, grid: &PhaseGrid) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>()
            * grid.spatial.cell_volume
    }
}

/// `D(x) = sum_j int kappa_j(x, E) psi_j(x, omega, E) domega dE`.
pub fn compute_dose(psi: &Flux, xs: &CrossSections, grid: &PhaseGrid) -> Result<DoseMap, GridError> {
    psi.check_shape(grid)?;
    let mut dose = DoseMap::zeros(grid);
    for (node, &x) in grid.spatial.nodes.iter().enumerate() {
        let mut acc = 0.0;
        for j in 0..SPECIES {
            let kappa = xs.kappa_at(j, x);
            if kappa == 0.0 {
                continue;
            }
            let mut integral = 0.0;
            for dir in 0..grid.n_dir() {
                let wd = grid.angular.weights[dir];
                for e in 0..grid.n_energy() {
                    integral += wd * grid.energy.weights[e] * psi.get(j, node, dir, e);
                }
            }
            acc += kappa * integral;
        }
        dose.values[node] = acc;
    }
    Ok(dose)
}

/// Adjoint of the dose operator: `(D* d)_j(x, omega, E) = kappa_j(x) d(x)`,
/// constant in direction and energy.
pub fn dose_adjoint(d: &DoseMap, xs: &CrossSections, grid: &PhaseGrid) -> PhaseField {
    let mut out = PhaseField::zeros(grid);
    for (node, &x) in grid.spatial.nodes.iter().enumerate() {
        let dv = d.values[node];
        for j in 0..SPECIES {
            let v = xs.kappa_at(j, x) * dv;
            for dir in 0..grid.n_dir() {
                for e in 0..grid.n_energy() {
                    out.set(j, node, dir, e, v);
                }
            }
        }
    }
    out
}

/// Trapezoid-in-time accumulation of the dose over a flux trajectory
/// sampled on the uniform time grid.
pub fn accumulate_dose(
    trajectory: &[Flux],
    tg: &TimeGrid,
    xs: &CrossSections,
    grid: &PhaseGrid,
) -> Result<DoseMap, GridError> {
    if trajectory.len() != tg.n_steps + 1 {
        return Err(GridError::ShapeMismatch { expected: tg.n_steps + 1, got: trajectory.len() });
    }
    let dt = tg.dt();
    let mut total = DoseMap::zeros(grid);
    for (k, psi) in trajectory.iter().enumerate() {
        let d = compute_dose(psi, xs, grid)?;
        let w = if k == 0 || k == tg.n_steps { 0.5 * dt } else { dt };
        for (t, v) in total.values.iter_mut().zip(&d.values) {
            *t += w * v;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Ball;
    use crate::grid::phase_dot;
    use crate::xs::{zero_kernel, SpatialProfile};
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    fn grid() -> PhaseGrid {
        PhaseGrid::build(Arc::new(Ball::new([0.0; 3], 1.0)), 5, 2, 4, 2, (0.0, 1.0)).unwrap()
    }

    fn xs_with_kappa(grid: &PhaseGrid, kappa: f64) -> CrossSections {
        let c = |v: f64| {
            [
                SpatialProfile::constant(v),
                SpatialProfile::constant(v),
                SpatialProfile::constant(v),
            ]
        };
        CrossSections::new(c(1.0), c(kappa), zero_kernel(grid))
    }

    #[test]
    fn uniform_flux_gives_uniform_dose() {
        let g = grid();
        let xs = xs_with_kappa(&g, 0.8);
        let psi = PhaseField::constant(&g, [1.0; SPECIES]);
        let d = compute_dose(&psi, &xs, &g).unwrap();
        let expect = SPECIES as f64 * 0.8 * g.angular.total_weight() * g.energy.measure();
        for v in &d.values {
            assert_abs_diff_eq!(*v, expect, epsilon = 1e-12 * expect);
        }
        let z = compute_dose(&PhaseField::zeros(&g), &xs, &g).unwrap();
        assert!(z.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dose_l2_bound_from_kappa() {
        let g = grid();
        let xs = xs_with_kappa(&g, 0.6);
        let mut state = 3u64;
        let mut psi = PhaseField::zeros(&g);
        for v in &mut psi.data {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            *v = (state >> 11) as f64 / (1u64 << 53) as f64;
        }
        let d = compute_dose(&psi, &xs, &g).unwrap();
        // |D psi|_2 <= m(G x S x I)^(1/2) max kappa |psi|_2 with the grid's
        // own measure of the phase space.
        let m = g.spatial.total_volume() * g.angular.total_weight() * g.energy.measure();
        let psi2 = crate::grid::integrate_phase(&psi, &g, 2).unwrap();
        assert!(d.l2_norm(&g) <= 1.02 * m.sqrt() * 0.6 * psi2);
    }

    #[test]
    fn adjoint_examples_and_duality() {
        let g = grid();
        let xs = xs_with_kappa(&g, 0.7);
        let ones = DoseMap { values: vec![1.0; g.n_space()] };
        let field = dose_adjoint(&ones, &xs, &g);
        assert!(field.data.iter().all(|&v| (v - 0.7).abs() < 1e-14));
        let zero = dose_adjoint(&DoseMap::zeros(&g), &xs, &g);
        assert!(zero.data.iter().all(|&v| v == 0.0));

        let mut state = 17u64;
        let mut rng = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for _ in 0..10 {
            let mut psi = PhaseField::zeros(&g);
            for v in &mut psi.data {
                *v = rng();
            }
            let mut d = DoseMap::zeros(&g);
            for v in &mut d.values {
                *v = rng();
            }
            let lhs = compute_dose(&psi, &xs, &g).unwrap().dot(&d, &g);
            let rhs = phase_dot(&psi, &dose_adjoint(&d, &xs, &g), &g);
            assert!(
                (lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1e-3),
                "dose duality gap {}",
                (lhs - rhs).abs()
            );
        }
    }

    #[test]
    fn linearity_and_positivity() {
        let g = grid();
        let xs = xs_with_kappa(&g, 1.0);
        let a = PhaseField::constant(&g, [1.0, 0.5, 0.0]);
        let b = PhaseField::constant(&g, [0.0, 0.25, 2.0]);
        let mut combo = a.clone();
        combo.scale(2.0);
        combo.axpy(-3.0, &b);
        let da = compute_dose(&a, &xs, &g).unwrap();
        let db = compute_dose(&b, &xs, &g).unwrap();
        let dc = compute_dose(&combo, &xs, &g).unwrap();
        for i in 0..g.n_space() {
            assert_abs_diff_eq!(dc.values[i], 2.0 * da.values[i] - 3.0 * db.values[i], epsilon = 1e-10);
        }
        assert!(da.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn time_accumulation_trapezoid_exact_on_linear_ramp() {
        let g = grid();
        let xs = xs_with_kappa(&g, 1.0);
        let tg = TimeGrid::new(2.0, 8);
        let psi1 = PhaseField::constant(&g, [1.0; SPECIES]);
        // Constant trajectory -> T * dose.
        let traj: Vec<_> = (0..=tg.n_steps).map(|_| psi1.clone()).collect();
        let total = accumulate_dose(&traj, &tg, &xs, &g).unwrap();
        let single = compute_dose(&psi1, &xs, &g).unwrap();
        for i in 0..g.n_space() {
            assert_abs_diff_eq!(total.values[i], 2.0 * single.values[i], epsilon = 1e-10);
        }
        // Linear ramp psi(t) = t psi1 -> (T^2 / 2) dose(psi1), trapezoid
        // being exact on linear integrands.
        let traj: Vec<_> = (0..=tg.n_steps)
            .map(|k| {
                let mut p = psi1.clone();
                p.scale(k as f64 * tg.dt());
                p
            })
            .collect();
        let total = accumulate_dose(&traj, &tg, &xs, &g).unwrap();
        for i in 0..g.n_space() {
            assert_abs_diff_eq!(total.values[i], 2.0 * single.values[i], epsilon = 1e-10);
        }
        // Zero trajectory -> zero; length mismatch -> error.
        let zeros: Vec<_> = (0..=tg.n_steps).map(|_| PhaseField::zeros(&g)).collect();
        assert!(accumulate_dose(&zeros, &tg, &xs, &g).unwrap().values.iter().all(|&v| v == 0.0));
        assert!(accumulate_dose(&zeros[..3], &tg, &xs, &g).is_err());
    }
}

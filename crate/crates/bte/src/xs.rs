//! Cross sections for the three coupled species: totals, differential
//! kernels and energy deposition, plus validation of the boundedness and
//! sub-criticality hypotheses and application of the collision operator
//! `K` and its adjoint `K*`.
//!
//! Kernel families are separable in space (region-piecewise strength) and
//! in the angular-energy pair (a redistribution matrix shared by all
//! spatial nodes). Redistribution rows are normalized against the grid's
//! own quadrature, so sub-criticality margins are exact at the discrete
//! level, not just asymptotically.
//!
//! Index convention for a pair `(from = k, to = j)`: the discrete density
//! is `sigma_kj(x, in, out) = strength_kj(x) * r[out, in]` with
//! `sum_out r[out, in] w_out = 1`.

use crate::error::XsError;
use crate::grid::{PhaseField, PhaseGrid};
use crate::source::RegionShape;
use crate::vec3::{self, Vec3};
use crate::SPECIES;

/// Hard cap for tabulated kernels.
pub const TABLE_LIMIT_BYTES: usize = 2 << 30;

/// Region-piecewise scalar field; first matching override wins, the base
/// value applies elsewhere.
#[derive(Debug, Clone)]
pub struct SpatialProfile {
    pub base: f64,
    pub overrides: Vec<(RegionShape, f64)>,
}

impl SpatialProfile {
    pub fn constant(v: f64) -> Self {
        SpatialProfile { base: v, overrides: Vec::new() }
    }

    #[inline]
    pub fn eval(&self, x: Vec3) -> f64 {
        for (shape, v) in &self.overrides {
            if shape.contains(x) {
                return *v;
            }
        }
        self.base
    }

    pub fn as_constant(&self) -> Option<f64> {
        if self.overrides.is_empty() {
            Some(self.base)
        } else {
            None
        }
    }

    pub fn max_value(&self) -> f64 {
        self.overrides.iter().map(|(_, v)| *v).fold(self.base, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.overrides.iter().map(|(_, v)| *v).fold(self.base, f64::min)
    }
}

/// How the Monte Carlo oracle samples outgoing states for a pair.
#[derive(Debug, Clone, Copy)]
pub enum OutgoingSampling {
    /// Isotropic direction, uniform energy on the grid interval.
    Isotropic,
    /// Henyey-Greenstein polar angle around the incoming direction,
    /// uniform azimuth and energy.
    HenyeyGreenstein { g: f64 },
    /// No continuous form available (tabulated kernels).
    Unsupported,
}

/// Angular-energy redistribution of one species pair.
#[derive(Debug, Clone)]
pub enum Redistribution {
    /// Constant density `1 / (4pi |I|)` as seen by the quadrature.
    Uniform,
    /// Dense row-normalized matrix `r[out, in]`, row-major in `out`.
    Dense(Vec<f64>),
}

/// One coupled species pair of the collision kernel.
#[derive(Debug, Clone)]
pub struct KernelPair {
    /// Incoming species `k`.
    pub from: usize,
    /// Outgoing species `j`.
    pub to: usize,
    /// Spatial strength `s_kj(x)`; the outgoing integral of the pair.
    pub strength: SpatialProfile,
    pub redistribution: Redistribution,
    pub sampling: OutgoingSampling,
}

/// Discrete collision kernel: a list of pairs over a fixed phase rule.
#[derive(Debug, Clone)]
pub struct DiscreteKernel {
    pub family: &'static str,
    pub pairs: Vec<KernelPair>,
    n_dir: usize,
    n_energy: usize,
}

impl DiscreteKernel {
    pub fn n_states(&self) -> usize {
        self.n_dir * self.n_energy
    }

    pub fn is_zero(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// The Henyey-Greenstein angular shape (unnormalized).
#[inline]
pub fn henyey_greenstein_shape(cos_theta: f64, g: f64) -> f64 {
    let denom = 1.0 + g * g - 2.0 * g * cos_theta;
    (1.0 - g * g) / (denom * denom.sqrt())
}

fn combined_weights(grid: &PhaseGrid) -> Vec<f64> {
    let mut w = Vec::with_capacity(grid.n_dir() * grid.n_energy());
    for d in 0..grid.n_dir() {
        for e in 0..grid.n_energy() {
            w.push(grid.angular.weights[d] * grid.energy.weights[e]);
        }
    }
    w
}

/// Build the zero kernel.
pub fn zero_kernel(grid: &PhaseGrid) -> DiscreteKernel {
    DiscreteKernel {
        family: "zero",
        pairs: Vec::new(),
        n_dir: grid.n_dir(),
        n_energy: grid.n_energy(),
    }
}

/// Diagonal isotropic scattering with per-species strength.
pub fn isotropic_kernel(grid: &PhaseGrid, sigma_s: [SpatialProfile; SPECIES]) -> DiscreteKernel {
    let pairs = sigma_s
        .into_iter()
        .enumerate()
        .filter(|(_, s)| s.max_value() > 0.0 || !s.overrides.is_empty())
        .map(|(j, strength)| KernelPair {
            from: j,
            to: j,
            strength,
            redistribution: Redistribution::Uniform,
            sampling: OutgoingSampling::Isotropic,
        })
        .collect();
    DiscreteKernel {
        family: "isotropic",
        pairs,
        n_dir: grid.n_dir(),
        n_energy: grid.n_energy(),
    }
}

/// Diagonal forward-peaked scattering: Henyey-Greenstein in the scattering
/// cosine, uniform in outgoing energy, normalized per incoming node
/// against the grid's angular rule.
pub fn screened_forward_kernel(
    grid: &PhaseGrid,
    sigma_s: [SpatialProfile; SPECIES],
    g: f64,
) -> DiscreteKernel {
    assert!((0.0..1.0).contains(&g), "anisotropy must lie in [0, 1)");
    let n_dir = grid.n_dir();
    let n_e = grid.n_energy();
    let n = n_dir * n_e;
    let w = combined_weights(grid);
    // One angular matrix shared by every diagonal pair.
    let mut r = vec![0.0; n * n];
    for din in 0..n_dir {
        // Raw angular row integral for this incoming direction.
        let mut raw = 0.0;
        for dout in 0..n_dir {
            let mu = vec3::dot(grid.angular.nodes[dout], grid.angular.nodes[din]);
            raw += henyey_greenstein_shape(mu, g) * grid.angular.weights[dout];
        }
        let scale = 1.0 / (raw * grid.energy.measure());
        for dout in 0..n_dir {
            let mu = vec3::dot(grid.angular.nodes[dout], grid.angular.nodes[din]);
            let density = henyey_greenstein_shape(mu, g) * scale;
            for ein in 0..n_e {
                for eout in 0..n_e {
                    r[(dout * n_e + eout) * n + (din * n_e + ein)] = density;
                }
            }
        }
    }
    // Rows are exactly normalized; assert the construction once.
    debug_assert!({
        let mut ok = true;
        for i_in in 0..n {
            let s: f64 = (0..n).map(|o| r[o * n + i_in] * w[o]).sum();
            ok &= (s - 1.0).abs() < 1e-12;
        }
        ok
    });
    let pairs = sigma_s
        .into_iter()
        .enumerate()
        .map(|(j, strength)| KernelPair {
            from: j,
            to: j,
            strength,
            redistribution: Redistribution::Dense(r.clone()),
            sampling: OutgoingSampling::HenyeyGreenstein { g },
        })
        .collect();
    DiscreteKernel {
        family: "screened",
        pairs,
        n_dir,
        n_energy: n_e,
    }
}

/// Single inter-species transfer `from -> to` with isotropic outgoing law.
pub fn transfer_kernel(
    grid: &PhaseGrid,
    from: usize,
    to: usize,
    sigma_t: SpatialProfile,
) -> DiscreteKernel {
    DiscreteKernel {
        family: "transfer",
        pairs: vec![KernelPair {
            from,
            to,
            strength: sigma_t,
            redistribution: Redistribution::Uniform,
            sampling: OutgoingSampling::Isotropic,
        }],
        n_dir: grid.n_dir(),
        n_energy: grid.n_energy(),
    }
}

/// General tabulated kernel; refuses tables above [`TABLE_LIMIT_BYTES`].
///
/// `table` holds row-major `r[out, in]` densities per pair; rows are
/// renormalized against the grid quadrature on ingestion.
pub fn tabulated_kernel(
    grid: &PhaseGrid,
    entries: Vec<(usize, usize, SpatialProfile, Vec<f64>)>,
) -> Result<DiscreteKernel, XsError> {
    let n = grid.n_dir() * grid.n_energy();
    let need = entries.len() * n * n * std::mem::size_of::<f64>();
    if need > TABLE_LIMIT_BYTES {
        return Err(XsError::TableTooLarge { need, limit: TABLE_LIMIT_BYTES });
    }
    let w = combined_weights(grid);
    let mut pairs = Vec::with_capacity(entries.len());
    for (from, to, strength, mut table) in entries {
        if table.len() != n * n {
            return Err(XsError::Shape(crate::error::GridError::ShapeMismatch {
                expected: n * n,
                got: table.len(),
            }));
        }
        for (i, v) in table.iter().enumerate() {
            if *v < 0.0 {
                return Err(XsError::NegativeData { what: format!("kernel table entry {i}"), value: *v });
            }
        }
        for i_in in 0..n {
            let row: f64 = (0..n).map(|o| table[o * n + i_in] * w[o]).sum();
            if row > 0.0 {
                for o in 0..n {
                    table[o * n + i_in] /= row;
                }
            }
        }
        pairs.push(KernelPair {
            from,
            to,
            strength,
            redistribution: Redistribution::Dense(table),
            sampling: OutgoingSampling::Unsupported,
        });
    }
    Ok(DiscreteKernel {
        family: "table",
        pairs,
        n_dir: grid.n_dir(),
        n_energy: grid.n_energy(),
    })
}

/// Names of the registered kernel families.
pub fn kernel_registry() -> &'static [&'static str] {
    &["zero", "isotropic", "screened", "transfer", "table"]
}

/// Total, differential and deposition cross sections for all species.
#[derive(Debug, Clone)]
pub struct CrossSections {
    /// Total cross sections `Sigma_j(x)`.
    pub sigma: [SpatialProfile; SPECIES],
    /// Energy-deposition cross sections `kappa_j(x)`.
    pub kappa: [SpatialProfile; SPECIES],
    pub kernel: DiscreteKernel,
}

impl CrossSections {
    pub fn new(
        sigma: [SpatialProfile; SPECIES],
        kappa: [SpatialProfile; SPECIES],
        kernel: DiscreteKernel,
    ) -> Self {
        CrossSections { sigma, kappa, kernel }
    }

    #[inline]
    pub fn sigma_total(&self, j: usize, x: Vec3) -> f64 {
        self.sigma[j].eval(x)
    }

    #[inline]
    pub fn kappa_at(&self, j: usize, x: Vec3) -> f64 {
        self.kappa[j].eval(x)
    }

    /// Outgoing kernel strength summed over pairs leaving species `j`.
    pub fn row_strength(&self, j: usize, x: Vec3) -> f64 {
        self.kernel
            .pairs
            .iter()
            .filter(|p| p.from == j)
            .map(|p| p.strength.eval(x))
            .sum()
    }
}

/// Quadrature-evaluated sub-criticality and boundedness report.
#[derive(Debug, Clone)]
pub struct SubCriticalityReport {
    /// Minimum of `Sigma_j - sum_k int sigma_jk` over sampled phase nodes.
    pub c_row: f64,
    /// Minimum of `Sigma_j - sum_k int sigma_kj` over sampled phase nodes.
    pub c_col: f64,
    /// Maximum outgoing (row) kernel integral.
    pub row_bound: f64,
    /// Maximum incoming (column) kernel integral.
    pub col_bound: f64,
    pub satisfied: bool,
}

/// Evaluate the sub-criticality margins and kernel bounds at every grid
/// node with the grid's own quadrature. An unsatisfied margin is reported,
/// not raised; negative input data is an error.
pub fn validate(xs: &CrossSections, grid: &PhaseGrid) -> Result<SubCriticalityReport, XsError> {
    let n = grid.n_dir() * grid.n_energy();
    let w = combined_weights(grid);

    for (j, p) in xs.sigma.iter().enumerate() {
        if p.min_value() < 0.0 {
            return Err(XsError::NegativeData { what: format!("sigma[{j}]"), value: p.min_value() });
        }
    }
    for (j, p) in xs.kappa.iter().enumerate() {
        if p.min_value() < 0.0 {
            return Err(XsError::NegativeData { what: format!("kappa[{j}]"), value: p.min_value() });
        }
    }
    for pair in &xs.kernel.pairs {
        if pair.strength.min_value() < 0.0 {
            return Err(XsError::NegativeData {
                what: format!("kernel strength {}->{}", pair.from, pair.to),
                value: pair.strength.min_value(),
            });
        }
    }

    // Row sums (exactly 1 for normalized families) and column sums per pair.
    let mut row_sum = Vec::with_capacity(xs.kernel.pairs.len());
    let mut col_sum = Vec::with_capacity(xs.kernel.pairs.len());
    for pair in &xs.kernel.pairs {
        match &pair.redistribution {
            Redistribution::Uniform => {
                // Density 1/total: both the outgoing and the incoming
                // integral are exactly 1.
                row_sum.push(vec![1.0; n]);
                col_sum.push(vec![1.0; n]);
            }
            Redistribution::Dense(r) => {
                let mut rows = vec![0.0; n];
                let mut cols = vec![0.0; n];
                for i_in in 0..n {
                    let mut acc = 0.0;
                    for o in 0..n {
                        acc += r[o * n + i_in] * w[o];
                    }
                    rows[i_in] = acc;
                }
                for o in 0..n {
                    let mut acc = 0.0;
                    for i_in in 0..n {
                        acc += r[o * n + i_in] * w[i_in];
                    }
                    cols[o] = acc;
                }
                row_sum.push(rows);
                col_sum.push(cols);
            }
        }
    }

    let mut c_row = f64::INFINITY;
    let mut c_col = f64::INFINITY;
    let mut row_bound: f64 = 0.0;
    let mut col_bound: f64 = 0.0;
    for &x in &grid.spatial.nodes {
        for j in 0..SPECIES {
            let sigma = xs.sigma_total(j, x);
            for state in 0..n {
                let mut out = 0.0;
                let mut inc = 0.0;
                for (pi, pair) in xs.kernel.pairs.iter().enumerate() {
                    if pair.from == j {
                        out += pair.strength.eval(x) * row_sum[pi][state];
                    }
                    if pair.to == j {
                        inc += pair.strength.eval(x) * col_sum[pi][state];
                    }
                }
                c_row = c_row.min(sigma - out);
                c_col = c_col.min(sigma - inc);
                row_bound = row_bound.max(out);
                col_bound = col_bound.max(inc);
            }
        }
    }
    Ok(SubCriticalityReport {
        c_row,
        c_col,
        row_bound,
        col_bound,
        satisfied: c_row > 0.0 && c_col > 0.0,
    })
}

fn apply_pairwise(
    xs: &CrossSections,
    field: &PhaseField,
    grid: &PhaseGrid,
    adjoint: bool,
) -> Result<PhaseField, XsError> {
    field.check_shape(grid)?;
    let n = grid.n_dir() * grid.n_energy();
    let w = combined_weights(grid);
    let mut out = PhaseField::zeros(grid);

    use rayon::prelude::*;
    let n_space = grid.n_space();
    let chunks: Vec<Vec<f64>> = (0..n_space)
        .into_par_iter()
        .map(|node| {
            let x = grid.spatial.nodes[node];
            let mut local = vec![0.0; SPECIES * n];
            for pair in &xs.kernel.pairs {
                let s = pair.strength.eval(x);
                if s == 0.0 {
                    continue;
                }
                // Forward: read species `from`, write `to`, weight w_in.
                // Adjoint: read `to`, write `from`, weight w_out.
                let (src, dst) = if adjoint { (pair.to, pair.from) } else { (pair.from, pair.to) };
                let src_base = field.idx(src, node, 0, 0);
                let src_slice = &field.data[src_base..src_base + n];
                let dst_slice = &mut local[dst * n..(dst + 1) * n];
                match &pair.redistribution {
                    Redistribution::Uniform => {
                        let total: f64 = w.iter().sum();
                        let avg: f64 =
                            src_slice.iter().zip(&w).map(|(v, wi)| v * wi).sum::<f64>() / total;
                        for v in dst_slice.iter_mut() {
                            *v += s * avg;
                        }
                    }
                    Redistribution::Dense(r) => {
                        if adjoint {
                            // (K* phi)[in] = s * sum_out r[out, in] w_out phi[out]
                            for i_in in 0..n {
                                let mut acc = 0.0;
                                for o in 0..n {
                                    acc += r[o * n + i_in] * w[o] * src_slice[o];
                                }
                                dst_slice[i_in] += s * acc;
                            }
                        } else {
                            // (K psi)[out] = s * sum_in r[out, in] w_in psi[in]
                            for o in 0..n {
                                let mut acc = 0.0;
                                let row = &r[o * n..(o + 1) * n];
                                for i_in in 0..n {
                                    acc += row[i_in] * w[i_in] * src_slice[i_in];
                                }
                                dst_slice[o] += s * acc;
                            }
                        }
                    }
                }
            }
            local
        })
        .collect();
    for (node, local) in chunks.into_iter().enumerate() {
        for j in 0..SPECIES {
            let base = out.idx(j, node, 0, 0);
            out.data[base..base + n].copy_from_slice(&local[j * n..(j + 1) * n]);
        }
    }
    Ok(out)
}

/// Apply the collision operator `K`.
pub fn apply_collision(
    xs: &CrossSections,
    psi: &PhaseField,
    grid: &PhaseGrid,
) -> Result<PhaseField, XsError> {
    apply_pairwise(xs, psi, grid, false)
}

/// Apply the adjoint collision operator `K*`, the discrete transpose of
/// [`apply_collision`] under the phase inner product.
pub fn apply_collision_adjoint(
    xs: &CrossSections,
    phi: &PhaseField,
    grid: &PhaseGrid,
) -> Result<PhaseField, XsError> {
    apply_pairwise(xs, phi, grid, true)
}

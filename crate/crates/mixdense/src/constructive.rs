//! Constructive approximation pipelines.
//!
//! Each pipeline follows the same arc: make the target compactly supported
//! (ball truncation or a continuous cutoff), smooth it by convolving with a
//! dilated kernel, and realize the convolution as a finite mixture whose
//! weights are cell integrals of the target over a diameter-bounded
//! partition of the scaled support. A final remainder component absorbs
//! the weight `1 − Σcᵢ` and is given a scale that caps its sup contribution
//! at `ε/2` of the stage budget.
//!
//! Dilation levels are searched over powers of two and cell diameters over
//! halvings; the chosen parameters are whatever first meets the measured
//! grid error, so every returned construction is self-certifying: the trace
//! records the errors actually achieved.

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{
    convolve_dilated_on_grid, linf_distance_values, linf_distance_values_in, lp_distance_values,
    mass_outside_ball, modulus_of_continuity_values, sample_mixture, sup_outside_ball, GridBox,
    NormReport, QuadratureGrid,
};
use crate::error::{Error, Result};
use crate::mixture::{ClassFlags, ComponentSpec, Density, Mixture};
use crate::numeric::{neumaier_sum, unit_sphere_area};

/// Ball-truncation radius search cap.
pub const MAX_TRUNCATION_RADIUS: u32 = 64;

/// Dilation-level cap for the uniform pipelines.
pub const MAX_DILATION: f64 = 256.0;

/// Dilation-level cap for the `L₁` pipeline, whose kernel-tail predicate
/// legitimately demands very large levels.
pub const MAX_DILATION_L1: f64 = (1u64 << 24) as f64;

/// Partition cell budget.
pub const PARTITION_CELL_LIMIT: u64 = 1_000_000;

/// Disjoint diameter-bounded cells covering a scaled box, with one
/// representative point per cell.
///
/// Cells are the regular grid of boxes with edge `δ/√n` intersected with
/// the scaled box, so `diam ≤ δ` holds by construction. Storage is flat.
#[derive(Debug, Clone)]
pub struct Partition {
    scaled_box: GridBox,
    max_diameter: f64,
    dim: usize,
    cells_lower: Vec<f64>,
    cells_upper: Vec<f64>,
    reps: Vec<f64>,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.reps.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.reps.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scaled_box(&self) -> &GridBox {
        &self.scaled_box
    }

    pub fn max_diameter(&self) -> f64 {
        self.max_diameter
    }

    pub fn cell(&self, i: usize) -> (&[f64], &[f64]) {
        let n = self.dim;
        (
            &self.cells_lower[i * n..(i + 1) * n],
            &self.cells_upper[i * n..(i + 1) * n],
        )
    }

    pub fn rep(&self, i: usize) -> &[f64] {
        &self.reps[i * self.dim..(i + 1) * self.dim]
    }

    pub fn cell_diameter(&self, i: usize) -> f64 {
        let (lo, hi) = self.cell(i);
        lo.iter()
            .zip(hi)
            .map(|(l, u)| (u - l) * (u - l))
            .sum::<f64>()
            .sqrt()
    }
}

/// Number of cells `build_partition` would create.
pub fn partition_cell_count(k_box: &GridBox, k: f64, delta: f64) -> u64 {
    let n = k_box.dim();
    let edge = delta / (n as f64).sqrt();
    let mut total: u64 = 1;
    for j in 0..n {
        let count = (k * k_box.width(j) / edge).ceil().max(1.0);
        if count > PARTITION_CELL_LIMIT as f64 {
            return u64::MAX;
        }
        total = total.saturating_mul(count as u64);
    }
    total
}

/// Covers `k · k_box` by a regular grid of boxes with edge `δ/√n`, clipped
/// to the scaled box; representatives are clipped-cell centers.
pub fn build_partition(k_box: &GridBox, k: f64, delta: f64) -> Result<Partition> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::invalid(format!("cell diameter bound must be positive, got {delta}")));
    }
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::invalid(format!("scaling factor must be positive, got {k}")));
    }
    let total = partition_cell_count(k_box, k, delta);
    if total > PARTITION_CELL_LIMIT {
        return Err(Error::ResourceLimit {
            what: "partition cells",
            limit: PARTITION_CELL_LIMIT,
            requested: total,
        });
    }
    let n = k_box.dim();
    let scaled = k_box.scaled(k);
    let edge = delta / (n as f64).sqrt();
    let counts: Vec<usize> = (0..n)
        .map(|j| (scaled.width(j) / edge).ceil().max(1.0) as usize)
        .collect();

    let m = total as usize;
    let mut cells_lower = Vec::with_capacity(m * n);
    let mut cells_upper = Vec::with_capacity(m * n);
    let mut reps = Vec::with_capacity(m * n);
    let mut idx = vec![0usize; n];
    loop {
        for j in 0..n {
            let lo = scaled.lower[j] + idx[j] as f64 * edge;
            let hi = (lo + edge).min(scaled.upper[j]);
            cells_lower.push(lo);
            cells_upper.push(hi);
            reps.push(0.5 * (lo + hi));
        }
        // odometer, last axis fastest
        let mut j = n;
        let done = loop {
            if j == 0 {
                break true;
            }
            j -= 1;
            idx[j] += 1;
            if idx[j] < counts[j] {
                break false;
            }
            idx[j] = 0;
        };
        if done {
            break;
        }
    }
    Ok(Partition {
        scaled_box: scaled,
        max_diameter: delta,
        dim: n,
        cells_lower,
        cells_upper,
        reps,
    })
}

/// Ball truncation result.
#[derive(Debug, Clone)]
pub struct Truncation {
    /// Smallest integer radius whose quadrature tail mass is within budget.
    pub radius: u32,
    pub truncated: Density,
}

/// Finds the smallest integer `r ≤ 64` with quadrature `L₁` tail mass of
/// `f` outside the closed ball `B̄_r` at most `epsilon`, and returns the
/// hard-truncated density `1_{B̄_r}·f`.
pub fn truncate_to_ball(f: &Density, epsilon: f64, grid: &QuadratureGrid) -> Result<Truncation> {
    if !f.flags().is_pdf {
        return Err(Error::invalid("ball truncation expects a pdf target"));
    }
    if !(epsilon > 0.0) {
        return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    if f.dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: f.dim(),
        });
    }
    let values = grid.sample_density(f)?;
    let mut radius = None;
    for r in 1..=MAX_TRUNCATION_RADIUS {
        if mass_outside_ball(&values, grid, r as f64) <= epsilon {
            radius = Some(r);
            break;
        }
    }
    let radius = radius.ok_or_else(|| {
        Error::non_convergence(format!(
            "tail mass of {} still above {epsilon} at radius {MAX_TRUNCATION_RADIUS}",
            f.name()
        ))
    })?;
    let r = radius as f64;
    let inner = f.clone();
    let name = format!("trunc({},r={radius})", f.name());
    let mut truncated = Density::new(name, f.dim(), move |x: &[f64]| {
        let norm2: f64 = x.iter().map(|v| v * v).sum();
        if norm2 <= r * r {
            inner.eval(x)
        } else {
            0.0
        }
    })
    .with_flags(ClassFlags {
        // identical to f when the support already fits inside the ball
        is_pdf: f.flags().is_pdf && f.support_radius().map_or(false, |s| s <= r),
        in_c0: f.flags().in_c0,
        in_cb: f.flags().in_cb,
        in_cc: true,
    })
    .with_support_radius(f.support_radius().map_or(r, |s| s.min(r)));
    if let Some(c) = f.sup_bound() {
        truncated = truncated.with_sup_bound(c);
    }
    if let Some(vp) = f.v_params() {
        truncated = truncated.with_v_params(vp.beta, vp.theta);
    }
    Ok(Truncation { radius, truncated })
}

/// Compact cutoff result.
#[derive(Debug, Clone)]
pub struct Cutoff {
    /// Ramp start: the multiplier is 1 on `B̄_R` and 0 outside `B̄_{R+1}`.
    pub ramp_start: f64,
    pub density: Density,
}

/// Multiplies `f` by the continuous ramp `ψ = clamp(R+1 − ‖x‖₂, 0, 1)`,
/// with `R` the smallest half-integer whose grid tail sup is below `ε/2`.
/// Guarantees `0 ≤ h ≤ f` everywhere and grid-sup `‖f − h‖ < ε`.
pub fn compact_cutoff(f: &Density, epsilon: f64, grid: &QuadratureGrid) -> Result<Cutoff> {
    if !f.flags().in_c0 {
        return Err(Error::invalid("compact cutoff expects a target vanishing at infinity"));
    }
    if !(epsilon > 0.0) {
        return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    if f.dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: f.dim(),
        });
    }
    let values = grid.sample_density(f)?;
    let r_cap = grid.bounds().inscribed_radius() - 1.0;
    let mut ramp_start = None;
    let mut r = 0.5;
    while r <= r_cap {
        if sup_outside_ball(&values, grid, r) < epsilon / 2.0 {
            ramp_start = Some(r);
            break;
        }
        r += 0.5;
    }
    let ramp_start = ramp_start.ok_or_else(|| {
        Error::non_convergence(format!(
            "tail sup of {} still above {}/2 at the box boundary",
            f.name(),
            epsilon
        ))
    })?;
    let inner = f.clone();
    let name = format!("cutoff({},R={ramp_start})", f.name());
    let is_exact = f.support_radius().map_or(false, |s| s <= ramp_start);
    let mut density = Density::new(name, f.dim(), move |x: &[f64]| {
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ramp = (ramp_start + 1.0 - norm).clamp(0.0, 1.0);
        if ramp == 0.0 {
            0.0
        } else {
            ramp * inner.eval(x)
        }
    })
    .with_flags(ClassFlags {
        is_pdf: f.flags().is_pdf && is_exact,
        in_c0: true,
        in_cb: true,
        in_cc: true,
    })
    .with_support_radius(f.support_radius().map_or(ramp_start + 1.0, |s| s.min(ramp_start + 1.0)));
    if let Some(c) = f.sup_bound() {
        density = density.with_sup_bound(c);
    }
    Ok(Cutoff { ramp_start, density })
}

/// Record of one constructive run: the chosen parameters and the measured
/// errors of the returned mixture against the original target.
#[derive(Debug, Clone, Serialize)]
pub struct ConstructionTrace {
    pub epsilon: f64,
    /// Truncation radius `r` (ramp start for the uniform pipeline).
    pub truncation_radius: f64,
    /// Dilation level `k` shared by all non-remainder components.
    pub dilation: f64,
    /// Partition cell-diameter bound `δ`.
    pub cell_diameter: f64,
    /// Component count `m` of the returned mixture.
    pub component_count: usize,
    /// Weight `1 − Σcᵢ` assigned to the remainder component (0 if dropped).
    pub remainder_weight: f64,
    /// Norms of `f − h_m` over the full grid box.
    pub errors: Option<NormReport>,
    /// The mode's acceptance metric: grid sup (uniform), grid sup over the
    /// compact box (compact), or grid `L₁` (integral mode).
    pub gate_error: f64,
}

impl ConstructionTrace {
    fn partial(epsilon: f64) -> ConstructionTrace {
        ConstructionTrace {
            epsilon,
            truncation_radius: 0.0,
            dilation: 0.0,
            cell_diameter: 0.0,
            component_count: 0,
            remainder_weight: 0.0,
            errors: None,
            gate_error: f64::NAN,
        }
    }
}

/// A constructed mixture with its trace.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub mixture: Mixture,
    pub trace: ConstructionTrace,
}

/// Realizes the convolution `g_k ⋆ h` as a finite mixture: one component
/// per partition cell with weight `cᵢ = ∫_{Aᵢ/k} h dλ`, location `zᵢ/k`,
/// scale `1/k`, plus a remainder component of weight `1 − Σcᵢ` whose scale
/// `(2 c C/ε)^{1/n}` caps its sup contribution at `ε/2`.
///
/// `h` must be nonnegative with total mass at most 1 (a cell integral below
/// `-1e-12` is rejected); the kernel needs a known sup bound for the
/// remainder scale rule.
pub fn riemann_mixture(
    h: &Density,
    g: &Density,
    k: f64,
    part: &Partition,
    epsilon: f64,
    grid: &QuadratureGrid,
) -> Result<PipelineOutput> {
    if !g.flags().is_pdf {
        return Err(Error::invalid("mixture kernel must be a pdf"));
    }
    let sup_bound = g
        .sup_bound()
        .ok_or_else(|| Error::invalid("mixture kernel needs a known sup bound"))?;
    if !(epsilon > 0.0) {
        return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    if h.dim() != part.dim() || g.dim() != part.dim() {
        return Err(Error::DimensionMismatch {
            expected: part.dim(),
            got: h.dim(),
        });
    }
    let n = part.dim();

    // Cell weights: midpoint quadrature of h over the cell mapped back to
    // x-space, at least as fine as the ambient grid, at most 16 sub-nodes
    // per axis.
    let weights: Vec<f64> = (0..part.len())
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |point, i| {
                let (lo, hi) = part.cell(i);
                let mut q = [0usize; 8];
                let mut total_nodes = 1usize;
                let mut volume = 1.0;
                for j in 0..n {
                    let width = (hi[j] - lo[j]) / k;
                    let sub = ((width / grid.spacing()[j]).ceil() as usize).clamp(1, 16);
                    q[j] = sub;
                    total_nodes *= sub;
                    volume *= width / sub as f64;
                }
                let mut acc = 0.0;
                for node in 0..total_nodes {
                    let mut rest = node;
                    for j in (0..n).rev() {
                        let ij = rest % q[j];
                        rest /= q[j];
                        let width = (hi[j] - lo[j]) / k;
                        point[j] = lo[j] / k + (ij as f64 + 0.5) * width / q[j] as f64;
                    }
                    acc += h.eval(point);
                }
                acc * volume
            },
        )
        .collect();

    for (i, &w) in weights.iter().enumerate() {
        if w < -1e-12 {
            return Err(Error::InvariantViolation(format!(
                "cell {} integrates to {w}; the approximand must be nonnegative",
                i + 1
            )));
        }
    }
    let covered = neumaier_sum(weights.iter().copied().map(|w| w.max(0.0)));
    let remainder = 1.0 - covered;

    let mut specs: Vec<ComponentSpec> = Vec::with_capacity(part.len() + 1);
    let sigma = 1.0 / k;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        let mu = part.rep(i).iter().map(|z| z / k).collect();
        specs.push(ComponentSpec::new(w, mu, sigma));
    }
    let remainder_kept = remainder >= crate::mixture::WEIGHT_DROP_TOL;
    if remainder_kept {
        let z_last = part.rep(part.len() - 1);
        let mu = z_last.iter().map(|z| z / k).collect();
        let scale = (2.0 * remainder * sup_bound / epsilon).powf(1.0 / n as f64);
        specs.push(ComponentSpec::new(remainder, mu, scale));
    }
    let mixture = Mixture::new_normalized(g.clone(), specs)?;
    let trace = ConstructionTrace {
        epsilon,
        truncation_radius: 0.0,
        dilation: k,
        cell_diameter: part.max_diameter(),
        component_count: mixture.len(),
        remainder_weight: if remainder_kept { remainder } else { 0.0 },
        errors: None,
        gate_error: f64::NAN,
    };
    Ok(PipelineOutput { mixture, trace })
}

fn non_convergence_with(context: String, trace: ConstructionTrace) -> Error {
    Error::NonConvergence {
        context,
        trace: Some(Box::new(trace)),
    }
}

/// Largest `δ` (by halving from the scaled diameter) whose estimated
/// modulus-of-continuity bound `w(g, δ)·kⁿ` stays below `budget`, clamped
/// so the partition fits the cell limit. The modulus estimate is a grid
/// lower bound, so the final measured-error refinement in the callers is
/// what actually certifies the construction.
fn initial_cell_diameter(
    g_vals: &[f64],
    grid: &QuadratureGrid,
    support: &GridBox,
    k: f64,
    budget: f64,
) -> f64 {
    let n = grid.dim() as i32;
    let kn = k.powi(n);
    let mut delta = support.scaled(k).diameter();
    loop {
        let w = modulus_of_continuity_values(g_vals, delta, grid);
        if w * kn < budget {
            return delta;
        }
        let next = delta / 2.0;
        if partition_cell_count(support, k, next) > PARTITION_CELL_LIMIT {
            return delta;
        }
        delta = next;
    }
}

/// Uniform approximation: cutoff to a compactly supported `h` within
/// `ε/2`, dilation search until the grid sup of `g_k⋆h − h` is below
/// `ε/4`, then a Riemann mixture of the convolution within `ε/4`.
///
/// The trace's `gate_error` is the measured grid sup of `f − h_m` over the
/// whole box; the pipeline refines `δ` until it is at most `ε`.
pub fn uniform_approximate(
    f: &Density,
    g: &Density,
    epsilon: f64,
    grid: &QuadratureGrid,
) -> Result<PipelineOutput> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    if !f.flags().is_pdf || !f.flags().in_c0 {
        return Err(Error::invalid("uniform pipeline expects a pdf target vanishing at infinity"));
    }
    if !g.flags().is_pdf || !g.flags().in_c0 {
        return Err(Error::invalid("uniform pipeline expects a pdf kernel vanishing at infinity"));
    }
    let mut trace = ConstructionTrace::partial(epsilon);

    let cutoff = compact_cutoff(f, epsilon / 2.0, grid)?;
    trace.truncation_radius = cutoff.ramp_start;
    let h = cutoff.density;
    let support_r = h.support_radius().expect("cutoff always sets a support radius");
    let support = GridBox::centered_cube(grid.dim(), support_r)?;

    let f_vals = grid.sample_density(f)?;
    let h_vals = grid.sample_density(&h)?;

    let conv_budget = epsilon / 4.0;
    let mut k = 1.0;
    loop {
        let conv = convolve_dilated_on_grid(g, k, &h, grid)?;
        if linf_distance_values(&conv, &h_vals) < conv_budget {
            break;
        }
        k *= 2.0;
        if k > MAX_DILATION {
            trace.dilation = k;
            return Err(non_convergence_with(
                format!("dilation search exceeded {MAX_DILATION} without meeting {conv_budget}"),
                trace,
            ));
        }
    }
    trace.dilation = k;

    let core_budget = epsilon / 4.0;
    let g_vals = grid.sample_density(g)?;
    let mut delta = initial_cell_diameter(&g_vals, grid, &support, k, core_budget / 2.0);
    loop {
        let part = build_partition(&support, k, delta)?;
        let built = riemann_mixture(&h, g, k, &part, core_budget, grid)?;
        let mix_vals = sample_mixture(&built.mixture, grid)?;
        let gate = linf_distance_values(&f_vals, &mix_vals);
        trace.cell_diameter = delta;
        trace.component_count = built.trace.component_count;
        trace.remainder_weight = built.trace.remainder_weight;
        trace.gate_error = gate;
        if gate <= epsilon {
            trace.errors = Some(NormReport::measure_values(&f_vals, &mix_vals, 2.0, grid, true)?);
            return Ok(PipelineOutput {
                mixture: built.mixture,
                trace,
            });
        }
        if partition_cell_count(&support, k, delta / 2.0) > PARTITION_CELL_LIMIT {
            return Err(non_convergence_with(
                format!("measured sup error {gate} above {epsilon} at the cell budget"),
                trace,
            ));
        }
        delta /= 2.0;
    }
}

/// Uniform approximation on a compact box: dilation search against
/// `‖f − g_k⋆f‖` on the box within `ε/3`, ball truncation with
/// `kⁿC‖f − 1_{B̄_r}f‖₁ ≤ ε/3`, then a Riemann mixture within `ε/3`.
///
/// `gate_error` is the grid sup of `f − h_m` over `k_box` only; the error
/// outside the box is reported in `errors` but not constrained.
pub fn compact_uniform_approximate(
    f: &Density,
    g: &Density,
    k_box: &GridBox,
    epsilon: f64,
    grid: &QuadratureGrid,
) -> Result<PipelineOutput> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    if !f.flags().is_pdf || !f.flags().in_cb {
        return Err(Error::invalid("compact pipeline expects a bounded continuous pdf target"));
    }
    if !g.flags().is_pdf || !g.flags().in_c0 {
        return Err(Error::invalid("compact pipeline expects a pdf kernel vanishing at infinity"));
    }
    if k_box.dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: k_box.dim(),
        });
    }
    for j in 0..grid.dim() {
        if k_box.lower[j] < grid.bounds().lower[j] || k_box.upper[j] > grid.bounds().upper[j] {
            return Err(Error::invalid("compact box must lie inside the grid box"));
        }
    }
    let sup_bound = g
        .sup_bound()
        .ok_or_else(|| Error::invalid("mixture kernel needs a known sup bound"))?;
    let mut trace = ConstructionTrace::partial(epsilon);

    let f_vals = grid.sample_density(f)?;
    let window = grid.window(k_box);

    let stage_budget = epsilon / 3.0;
    let mut k = 1.0;
    loop {
        let conv = convolve_dilated_on_grid(g, k, f, grid)?;
        if linf_distance_values_in(&conv, &f_vals, &window, grid) < stage_budget {
            break;
        }
        k *= 2.0;
        if k > MAX_DILATION {
            trace.dilation = k;
            return Err(non_convergence_with(
                format!("dilation search exceeded {MAX_DILATION} without meeting {stage_budget}"),
                trace,
            ));
        }
    }
    trace.dilation = k;

    let kn = k.powi(grid.dim() as i32);
    let truncation = truncate_to_ball(f, stage_budget / (kn * sup_bound), grid)?;
    trace.truncation_radius = truncation.radius as f64;
    let h = truncation.truncated;
    let support = GridBox::centered_cube(grid.dim(), truncation.radius as f64)?;

    let g_vals = grid.sample_density(g)?;
    let mut delta = initial_cell_diameter(&g_vals, grid, &support, k, stage_budget / 2.0);
    loop {
        let part = build_partition(&support, k, delta)?;
        let built = riemann_mixture(&h, g, k, &part, stage_budget, grid)?;
        let mix_vals = sample_mixture(&built.mixture, grid)?;
        let gate = linf_distance_values_in(&f_vals, &mix_vals, &window, grid);
        trace.cell_diameter = delta;
        trace.component_count = built.trace.component_count;
        trace.remainder_weight = built.trace.remainder_weight;
        trace.gate_error = gate;
        if gate <= epsilon {
            trace.errors = Some(NormReport::measure_values(&f_vals, &mix_vals, 2.0, grid, true)?);
            return Ok(PipelineOutput {
                mixture: built.mixture,
                trace,
            });
        }
        if partition_cell_count(&support, k, delta / 2.0) > PARTITION_CELL_LIMIT {
            return Err(non_convergence_with(
                format!("measured boxed sup error {gate} above {epsilon} at the cell budget"),
                trace,
            ));
        }
        delta /= 2.0;
    }
}

/// Estimated `‖g_k ⋆ h − h‖_{L₁(box)}` via the substituted form
/// `∫ g(u) h(x − u/k) du`, which stays numerically stable at dilation
/// levels far beyond the grid resolution. The kernel integral runs over a
/// fixed auxiliary box sized from the kernel's tail certificate; the
/// certified tail allowance `2‖h‖₁·βA_nU^{-θ}/θ` is added to the estimate.
pub fn dilated_l1_smoothing_error(
    h: &Density,
    g: &Density,
    k: f64,
    grid: &QuadratureGrid,
) -> Result<f64> {
    let vp = g
        .v_params()
        .ok_or_else(|| Error::invalid("smoothing-error estimate needs a kernel tail certificate"))?;
    let n = grid.dim();
    let a_n = unit_sphere_area(n);
    // Auxiliary box radius: tail mass bound βA_nU^{-θ}/θ ≤ 1e-3.
    let u_radius = (vp.beta * a_n / (vp.theta * 1e-3)).powf(1.0 / vp.theta).max(8.0);
    let u_points = if n == 1 { 8192 } else { 128 };
    let u_grid = QuadratureGrid::new(GridBox::centered_cube(n, u_radius)?, u_points)?;
    let tail_allowance = vp.beta * a_n * u_radius.powf(-vp.theta) / vp.theta;

    let g_u = u_grid.sample_density(g)?;
    let u_vol = u_grid.cell_volume();
    let h_vals = grid.sample_density(h)?;
    let h_mass = grid.integrate_values(&h_vals).abs();

    let conv: Vec<f64> = (0..grid.node_count())
        .into_par_iter()
        .map_init(
            || (vec![0.0; n], vec![0.0; n], vec![0.0; n]),
            |(x, u, y), idx| {
                grid.node_into(idx, x);
                let mut acc = 0.0;
                for (ui, gv) in g_u.iter().enumerate() {
                    if *gv == 0.0 {
                        continue;
                    }
                    u_grid.node_into(ui, u);
                    for j in 0..n {
                        y[j] = x[j] - u[j] / k;
                    }
                    acc += gv * h.eval(y);
                }
                acc * u_vol
            },
        )
        .collect();
    let measured = lp_distance_values(&conv, &h_vals, 1.0, grid)?;
    Ok(measured + 2.0 * h_mass * tail_allowance)
}

/// `L₁` approximation with a polynomially-dominated kernel: ball
/// truncation with tail `≤ ε/24`, dilation level large enough that both
/// the kernel tail-leak bound `βA_n k^{θ(γ-1)}/θ` is at most `ε/24` and
/// the smoothing error estimate is at most `ε/4`, then a measured-error
/// `δ` descent until the grid `L₁` distance to `f` is at most `ε`.
///
/// `gamma` must lie in `(0, 1)` so the tail-leak bound decays in `k`.
pub fn l1_approximate(
    f: &Density,
    g: &Density,
    epsilon: f64,
    gamma: f64,
    grid: &QuadratureGrid,
) -> Result<PipelineOutput> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    let flags = f.flags();
    if !flags.is_pdf || !(flags.in_c0 || flags.in_cb || flags.in_cc) {
        return Err(Error::invalid("integral pipeline expects a continuous pdf target"));
    }
    if !g.flags().is_pdf {
        return Err(Error::invalid("integral pipeline expects a pdf kernel"));
    }
    let vp = g
        .v_params()
        .ok_or_else(|| Error::invalid("integral pipeline requires a kernel tail certificate"))?;
    if g.sup_bound().is_none() {
        return Err(Error::invalid("mixture kernel needs a known sup bound"));
    }
    let mut trace = ConstructionTrace::partial(epsilon);

    let truncation = truncate_to_ball(f, epsilon / 24.0, grid)?;
    trace.truncation_radius = truncation.radius as f64;
    let h = truncation.truncated;
    let support = GridBox::centered_cube(grid.dim(), truncation.radius as f64)?;
    let f_vals = grid.sample_density(f)?;

    // Tail-leak predicate: βA_n k^{θ(γ−1)}/θ ≤ ε/24 with γ < 1.
    let a_n = unit_sphere_area(grid.dim());
    let leak = |k: f64| vp.beta * a_n * k.powf(vp.theta * (gamma - 1.0)) / vp.theta;
    let mut k = 1.0;
    while leak(k) > epsilon / 24.0 {
        k *= 2.0;
        if k > MAX_DILATION_L1 {
            trace.dilation = k;
            return Err(non_convergence_with(
                format!("kernel tail-leak bound still above {} at k = {k}", epsilon / 24.0),
                trace,
            ));
        }
    }
    loop {
        let conv_err = dilated_l1_smoothing_error(&h, g, k, grid)?;
        if conv_err <= epsilon / 4.0 {
            break;
        }
        k *= 2.0;
        if k > MAX_DILATION_L1 {
            trace.dilation = k;
            return Err(non_convergence_with(
                format!("smoothing error still above {} at k = {k}", epsilon / 4.0),
                trace,
            ));
        }
    }
    trace.dilation = k;

    let mut delta = support.scaled(k).diameter();
    loop {
        let part = build_partition(&support, k, delta)?;
        let built = riemann_mixture(&h, g, k, &part, epsilon / 4.0, grid)?;
        let mix_vals = sample_mixture(&built.mixture, grid)?;
        let gate = lp_distance_values(&f_vals, &mix_vals, 1.0, grid)?;
        trace.cell_diameter = delta;
        trace.component_count = built.trace.component_count;
        trace.remainder_weight = built.trace.remainder_weight;
        trace.gate_error = gate;
        if gate <= epsilon {
            trace.errors = Some(NormReport::measure_values(&f_vals, &mix_vals, 1.0, grid, true)?);
            return Ok(PipelineOutput {
                mixture: built.mixture,
                trace,
            });
        }
        if partition_cell_count(&support, k, delta / 2.0) > PARTITION_CELL_LIMIT {
            return Err(non_convergence_with(
                format!("measured L1 error {gate} above {epsilon} at the cell budget"),
                trace,
            ));
        }
        delta /= 2.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classes::{cauchy, standard_normal, triangular};

    fn grid_1d(points: usize) -> QuadratureGrid {
        QuadratureGrid::new(GridBox::centered_cube(1, 8.0).unwrap(), points).unwrap()
    }

    #[test]
    fn truncation_radius_for_normal_tail() {
        // Two-sided normal tail: ≈0.3173 beyond 1, ≈0.0455 beyond 2.
        let grid = grid_1d(4096);
        let phi = standard_normal(1);
        let t = truncate_to_ball(&phi, 0.05, &grid).unwrap();
        assert_eq!(t.radius, 2);
        let mass = grid.integrate(|x| t.truncated.eval(x));
        assert!(mass >= 1.0 - 0.05, "mass {mass}");
    }

    #[test]
    fn truncation_radius_one_for_compact_support() {
        let grid = grid_1d(2048);
        let tri = triangular(1);
        let t = truncate_to_ball(&tri, 1e-9, &grid).unwrap();
        assert_eq!(t.radius, 1);
        // zero tail: the truncated density is still a pdf
        assert!(t.truncated.flags().is_pdf);
    }

    #[test]
    fn truncation_requires_pdf() {
        let grid = grid_1d(256);
        let not_pdf = crate::classes::counterexample_density();
        assert!(truncate_to_ball(&not_pdf, 0.1, &grid).is_err());
    }

    #[test]
    fn cutoff_ramp_start_for_normal() {
        // Smallest half-integer with grid tail sup < 0.05: φ(2.0) ≈ 0.054
        // fails, φ(2.5) ≈ 0.0175 passes.
        let grid = grid_1d(4096);
        let phi = standard_normal(1);
        let c = compact_cutoff(&phi, 0.1, &grid).unwrap();
        assert_eq!(c.ramp_start, 2.5);
        assert_eq!(c.density.support_radius(), Some(3.5));
    }

    #[test]
    fn cutoff_is_identity_inside_declared_support() {
        let grid = grid_1d(2048);
        let tri = triangular(1);
        let c = compact_cutoff(&tri, 0.25, &grid).unwrap();
        for idx in 0..grid.node_count() {
            let x = grid.node(idx);
            assert_eq!(c.density.eval(&x), tri.eval(&x));
        }
    }

    #[test]
    fn cutoff_stays_between_zero_and_target() {
        use rand::{Rng, SeedableRng};
        let grid = grid_1d(2048);
        let phi = standard_normal(1);
        let c = compact_cutoff(&phi, 0.1, &grid).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let x = [rng.gen_range(-8.0..8.0)];
            let h = c.density.eval(&x);
            let f = phi.eval(&x);
            assert!(h >= 0.0 && h <= f + 1e-15, "x={:?} h={h} f={f}", x);
        }
        let sup = grid
            .sample(|x| phi.eval(x) - c.density.eval(x))
            .into_iter()
            .fold(0.0_f64, f64::max);
        assert!(sup < 0.1, "cutoff sup gap {sup}");
    }

    #[test]
    fn partition_unit_interval_example() {
        // [0,1] scaled by 2 with δ = 1/2: four cells, centered reps.
        let b = GridBox::new(vec![0.0], vec![1.0]).unwrap();
        let p = build_partition(&b, 2.0, 0.5).unwrap();
        assert_eq!(p.len(), 4);
        let expect = [(0.0, 0.5, 0.25), (0.5, 1.0, 0.75), (1.0, 1.5, 1.25), (1.5, 2.0, 1.75)];
        for (i, (lo, hi, rep)) in expect.iter().enumerate() {
            let (cl, cu) = p.cell(i);
            assert!((cl[0] - lo).abs() < 1e-12);
            assert!((cu[0] - hi).abs() < 1e-12);
            assert!((p.rep(i)[0] - rep).abs() < 1e-12);
        }
    }

    #[test]
    fn partition_square_needs_two_cells_per_axis() {
        // Edge length 1/√2 covers [0,1]² with ⌈√2⌉ = 2 cells per axis.
        let b = GridBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let p = build_partition(&b, 1.0, 1.0).unwrap();
        assert_eq!(p.len(), 4);
        for i in 0..p.len() {
            assert!(p.cell_diameter(i) <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn partition_cells_disjoint_and_reps_inside() {
        let b = GridBox::new(vec![-1.0], vec![2.5]).unwrap();
        let p = build_partition(&b, 3.0, 0.7).unwrap();
        for i in 0..p.len() {
            let (lo, hi) = p.cell(i);
            let rep = p.rep(i);
            assert!(rep[0] >= lo[0] && rep[0] <= hi[0]);
            assert!(p.cell_diameter(i) <= 0.7 + 1e-12);
            if i + 1 < p.len() {
                let (lo2, _) = p.cell(i + 1);
                assert!((hi[0] - lo2[0]).abs() < 1e-9, "cells must tile");
            }
        }
    }

    #[test]
    fn partition_respects_cell_budget() {
        let b = GridBox::new(vec![0.0], vec![1.0]).unwrap();
        assert!(matches!(
            build_partition(&b, 1e6, 0.5),
            Err(Error::ResourceLimit { .. })
        ));
    }

    #[test]
    fn riemann_weights_split_hat_in_halves() {
        // Hat on [0,1] with peak 1/2; two cells [0,.5) and [.5,1): each
        // carries exactly half the mass.
        let hat = Density::new("hat01", 1, |x: &[f64]| {
            let t = x[0];
            if (0.0..=0.5).contains(&t) {
                4.0 * t
            } else if t > 0.5 && t <= 1.0 {
                4.0 * (1.0 - t)
            } else {
                0.0
            }
        })
        .with_support_radius(1.0)
        .with_sup_bound(2.0)
        .with_flags(ClassFlags {
            is_pdf: true,
            in_c0: true,
            in_cc: true,
            in_cb: true,
        });
        let grid = grid_1d(4096);
        let b = GridBox::new(vec![0.0], vec![1.0]).unwrap();
        let p = build_partition(&b, 1.0, 0.5).unwrap();
        assert_eq!(p.len(), 2);
        let out = riemann_mixture(&hat, &standard_normal(1), 1.0, &p, 0.1, &grid).unwrap();
        assert_eq!(out.mixture.len(), 2, "remainder should be dropped");
        let w = out.mixture.weights();
        assert!((w[0] - 0.5).abs() < 1e-12, "w0 {}", w[0]);
        assert!((w[1] - 0.5).abs() < 1e-12, "w1 {}", w[1]);
        assert!(out.trace.remainder_weight.abs() < 1e-9);
        let c = out.mixture.component(0);
        assert!((c.location[0] - 0.25).abs() < 1e-12);
        assert_eq!(c.scale, 1.0);
    }

    #[test]
    fn riemann_remainder_accounts_for_missing_mass() {
        // Sub-pdf of mass 1/2: remainder weight is exactly the deficit.
        let tri = triangular(1);
        let half = Density::new("half-tri", 1, move |x: &[f64]| 0.5 * tri.eval(x))
            .with_support_radius(1.0)
            .with_sup_bound(0.5);
        let grid = grid_1d(4096);
        let b = GridBox::centered_cube(1, 1.0).unwrap();
        let p = build_partition(&b, 1.0, 0.25).unwrap();
        let eps = 0.2;
        let out = riemann_mixture(&half, &standard_normal(1), 1.0, &p, eps, &grid).unwrap();
        assert!((out.trace.remainder_weight - 0.5).abs() < 1e-6);
        // remainder sup contribution is capped at ε/2 by the scale rule
        let c = out.mixture.component(out.mixture.len() - 1);
        let sup = c.weight / c.scale * standard_normal(1).sup_bound().unwrap();
        assert!(sup <= eps / 2.0 + 1e-9, "remainder sup {sup}");
    }

    #[test]
    fn riemann_rejects_signed_approximand() {
        let signed = Density::new("signed", 1, |x: &[f64]| 0.5 - x[0].abs())
            .with_support_radius(1.0)
            .with_sup_bound(0.5);
        let grid = grid_1d(1024);
        let b = GridBox::centered_cube(1, 1.0).unwrap();
        let p = build_partition(&b, 1.0, 0.25).unwrap();
        let err = riemann_mixture(&signed, &standard_normal(1), 1.0, &p, 0.1, &grid).unwrap_err();
        assert!(matches!(err, Error::InvariantViolation(_)));
    }

    #[test]
    fn riemann_requires_kernel_sup_bound() {
        let bare = Density::new("bare", 1, |x: &[f64]| {
            (-0.5 * x[0] * x[0]).exp() / (2.0 * std::f64::consts::PI).sqrt()
        })
        .with_flags(ClassFlags {
            is_pdf: true,
            in_c0: true,
            in_cb: true,
            in_cc: false,
        });
        let grid = grid_1d(256);
        let b = GridBox::centered_cube(1, 1.0).unwrap();
        let p = build_partition(&b, 1.0, 0.5).unwrap();
        assert!(riemann_mixture(&triangular(1), &bare, 1.0, &p, 0.1, &grid).is_err());
    }

    #[test]
    fn partition_refinement_does_not_worsen_riemann_error() {
        let grid = grid_1d(2048);
        let tri = triangular(1);
        let phi = standard_normal(1);
        let k = 2.0;
        let cutoff = compact_cutoff(&tri, 0.05, &grid).unwrap();
        let h = cutoff.density;
        let conv = convolve_dilated_on_grid(&phi, k, &h, &grid).unwrap();
        let support = GridBox::centered_cube(1, h.support_radius().unwrap()).unwrap();
        let mut last = f64::INFINITY;
        for delta in [1.0, 0.5, 0.25, 0.125] {
            let p = build_partition(&support, k, delta).unwrap();
            let out = riemann_mixture(&h, &phi, k, &p, 0.05, &grid).unwrap();
            let vals = sample_mixture(&out.mixture, &grid).unwrap();
            let err = linf_distance_values(&conv, &vals);
            assert!(err <= last + 1e-6, "delta {delta}: {err} vs {last}");
            last = err;
        }
    }

    #[test]
    fn uniform_pipeline_normal_to_normal() {
        let grid = grid_1d(2048);
        let phi = standard_normal(1);
        let out = uniform_approximate(&phi, &phi, 0.3, &grid).unwrap();
        assert!(out.trace.gate_error <= 0.3, "gate {}", out.trace.gate_error);
        assert!(out.mixture.validate().is_empty());
        // the one-component identity mixture achieves error 0, so the
        // target is attainable within any budget
        let exact = Mixture::new(
            standard_normal(1),
            vec![crate::mixture::ComponentSpec::new(1.0, vec![0.0], 1.0)],
        )
        .unwrap();
        let phi_vals = grid.sample_density(&phi).unwrap();
        let exact_vals = sample_mixture(&exact, &grid).unwrap();
        assert_eq!(linf_distance_values(&phi_vals, &exact_vals), 0.0);
    }

    #[test]
    fn uniform_pipeline_errors_shrink_with_epsilon() {
        let grid = grid_1d(1024);
        let tri = triangular(1);
        let phi = standard_normal(1);
        let mut last_m = 0;
        let mut last_err = f64::INFINITY;
        for eps in [0.3, 0.15] {
            let out = uniform_approximate(&tri, &phi, eps, &grid).unwrap();
            assert!(out.trace.gate_error <= eps);
            assert!(out.trace.gate_error <= last_err + 1e-12);
            assert!(out.trace.component_count >= last_m, "m must not shrink");
            last_m = out.trace.component_count;
            last_err = out.trace.gate_error;
        }
    }

    #[test]
    fn compact_pipeline_cauchy_target() {
        let grid = grid_1d(2048);
        let k_box = GridBox::centered_cube(1, 3.0).unwrap();
        let out =
            compact_uniform_approximate(&cauchy(), &standard_normal(1), &k_box, 0.1, &grid).unwrap();
        assert!(out.trace.gate_error <= 0.1, "gate {}", out.trace.gate_error);
        assert!(out.mixture.validate().is_empty());
        // full-box sup may exceed the boxed gate; both are reported
        let full = out.trace.errors.as_ref().unwrap().linf;
        assert!(full >= out.trace.gate_error - 1e-12);
    }

    #[test]
    fn l1_pipeline_triangular_with_cauchy_kernel() {
        let grid = grid_1d(1024);
        let out = l1_approximate(&triangular(1), &cauchy(), 0.3, 0.5, &grid).unwrap();
        assert!(out.trace.gate_error <= 0.3, "gate {}", out.trace.gate_error);
        assert!(out.mixture.validate().is_empty());
        // remainder weight equals the truncation deficit (1 − truncated mass)
        let truncated = truncate_to_ball(&triangular(1), 0.3 / 24.0, &grid).unwrap();
        let mass = grid.integrate(|x| truncated.truncated.eval(x));
        assert!(
            (out.trace.remainder_weight - (1.0 - mass)).abs() < 1e-6,
            "remainder {} vs deficit {}",
            out.trace.remainder_weight,
            1.0 - mass
        );
        assert!(out.trace.remainder_weight >= 0.0 && out.trace.remainder_weight <= 0.3 / 24.0 + 1e-6);
    }

    #[test]
    fn l1_pipeline_requires_tail_certificate() {
        let grid = grid_1d(256);
        let err = l1_approximate(&triangular(1), &standard_normal(1), 0.3, 0.5, &grid).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn l1_pipeline_rejects_gamma_outside_unit_interval() {
        let grid = grid_1d(256);
        assert!(l1_approximate(&triangular(1), &cauchy(), 0.3, 1.5, &grid).is_err());
        assert!(l1_approximate(&triangular(1), &cauchy(), 0.3, 0.0, &grid).is_err());
    }
}

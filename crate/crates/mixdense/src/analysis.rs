//! Numerical measure-and-integration toolbox.
//!
//! Everything integrates with one scheme: the midpoint rule on a tensor
//! grid over a box. Adaptive quadrature is deliberately absent so that all
//! reported numbers are deterministic and reproducible. Sup-norms are grid
//! maxima and therefore certified lower bounds on the true sup over the
//! box; they tighten as the grid refines.
//!
//! Node loops run in parallel; reductions collect per-node values in index
//! order and fold them with a fixed pairwise-summation tree, so results do
//! not depend on thread scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::Density;
use crate::numeric::{pairwise_sum, unit_sphere_area};

/// Hard cap on total node count.
pub const MAX_GRID_NODES: u64 = 1 << 24;

/// Slack used by [`youngs_check`].
pub const YOUNGS_TOL: f64 = 1e-4;

/// Default clamp floor for [`kl_divergence`].
pub const KL_FLOOR: f64 = 1e-300;

/// An axis-aligned box `[lower₁, upper₁] × … × [lowerₙ, upperₙ]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl GridBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<GridBox> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::invalid("box corners must be non-empty and of equal dimension"));
        }
        for (l, u) in lower.iter().zip(&upper) {
            if !(l < u) || !l.is_finite() || !u.is_finite() {
                return Err(Error::invalid(format!(
                    "box requires lower < upper componentwise, got [{l}, {u}]"
                )));
            }
        }
        Ok(GridBox { lower, upper })
    }

    /// The cube `[-r, r]^n`.
    pub fn centered_cube(dim: usize, r: f64) -> Result<GridBox> {
        GridBox::new(vec![-r; dim], vec![r; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    /// Euclidean diameter.
    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l) * (u - l))
            .sum::<f64>()
            .sqrt()
    }

    /// Volume `Π (upperⱼ − lowerⱼ)`.
    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).product()
    }

    /// The scaled box `k·B`.
    pub fn scaled(&self, k: f64) -> GridBox {
        GridBox {
            lower: self.lower.iter().map(|l| k * l).collect(),
            upper: self.upper.iter().map(|u| k * u).collect(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    /// Whether the closed origin ball of radius `r` fits inside this box
    /// (via its enclosing cube, so the test is conservative).
    pub fn contains_centered_ball(&self, r: f64) -> bool {
        self.lower.iter().all(|&l| l <= -r) && self.upper.iter().all(|&u| u >= r)
    }

    /// Radius of the largest origin-centered ball inside the box.
    pub fn inscribed_radius(&self) -> f64 {
        self.lower
            .iter()
            .map(|l| -l)
            .chain(self.upper.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }

    fn descriptor(&self) -> String {
        let axes: Vec<String> = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| format!("[{l}..{u}]"))
            .collect();
        axes.join("x")
    }
}

/// Midpoint tensor grid: `points_per_axis` midpoints per axis over a box.
///
/// Node ordering is row-major with the last axis fastest; all iteration and
/// reduction orders derive from it.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    bounds: GridBox,
    points_per_axis: usize,
    spacing: Vec<f64>,
    cell_volume: f64,
}

impl QuadratureGrid {
    pub fn new(bounds: GridBox, points_per_axis: usize) -> Result<QuadratureGrid> {
        if points_per_axis == 0 {
            return Err(Error::invalid("points_per_axis must be positive"));
        }
        let n = bounds.dim();
        let mut total: u64 = 1;
        for _ in 0..n {
            total = total.saturating_mul(points_per_axis as u64);
            if total > MAX_GRID_NODES {
                return Err(Error::ResourceLimit {
                    what: "grid nodes",
                    limit: MAX_GRID_NODES,
                    requested: total,
                });
            }
        }
        let spacing: Vec<f64> = (0..n)
            .map(|j| bounds.width(j) / points_per_axis as f64)
            .collect();
        let cell_volume = spacing.iter().product();
        Ok(QuadratureGrid {
            bounds,
            points_per_axis,
            spacing,
            cell_volume,
        })
    }

    pub fn bounds(&self) -> &GridBox {
        &self.bounds
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(0.0, f64::max)
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    pub fn node_count(&self) -> usize {
        self.points_per_axis.pow(self.dim() as u32)
    }

    /// Same box, different resolution.
    pub fn with_points(&self, points_per_axis: usize) -> Result<QuadratureGrid> {
        QuadratureGrid::new(self.bounds.clone(), points_per_axis)
    }

    /// Writes the coordinates of node `idx` into `out`.
    #[inline]
    pub fn node_into(&self, mut idx: usize, out: &mut [f64]) {
        let n = self.dim();
        debug_assert_eq!(out.len(), n);
        for j in (0..n).rev() {
            let i = idx % self.points_per_axis;
            idx /= self.points_per_axis;
            out[j] = self.bounds.lower[j] + (i as f64 + 0.5) * self.spacing[j];
        }
    }

    pub fn node(&self, idx: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.node_into(idx, &mut out);
        out
    }

    /// Evaluates `f` at every node, in node order. Parallel.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64 + Sync) -> Vec<f64> {
        let n = self.dim();
        (0..self.node_count())
            .into_par_iter()
            .map_init(
                || vec![0.0; n],
                |buf, idx| {
                    self.node_into(idx, buf);
                    f(buf)
                },
            )
            .collect()
    }

    pub fn sample_density(&self, d: &Density) -> Result<Vec<f64>> {
        if d.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: d.dim(),
            });
        }
        Ok(self.sample(|x| d.eval(x)))
    }

    /// Midpoint-rule integral of tabulated node values.
    pub fn integrate_values(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.node_count());
        pairwise_sum(values) * self.cell_volume
    }

    /// Midpoint-rule integral of `f` over the box.
    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64 + Sync) -> f64 {
        let values = self.sample(f);
        self.integrate_values(&values)
    }

    /// Index window of nodes lying inside `sub` (componentwise).
    pub fn window(&self, sub: &GridBox) -> GridWindow {
        let n = self.dim();
        let mut ranges = Vec::with_capacity(n);
        for j in 0..n {
            let h = self.spacing[j];
            let lo = ((sub.lower[j] - self.bounds.lower[j]) / h - 0.5).ceil().max(0.0) as usize;
            let hi_f = ((sub.upper[j] - self.bounds.lower[j]) / h - 0.5).floor();
            let hi = if hi_f < 0.0 {
                0
            } else {
                ((hi_f as usize) + 1).min(self.points_per_axis)
            };
            ranges.push((lo.min(hi), hi));
        }
        GridWindow { ranges }
    }

    /// One-cell descriptor for reports, e.g. `box=[-8..8];points=4096`.
    pub fn descriptor(&self) -> String {
        format!("box={};points={}", self.bounds.descriptor(), self.points_per_axis)
    }
}

/// Per-axis index ranges `[start, end)` selecting a sub-block of nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct GridWindow {
    ranges: Vec<(usize, usize)>,
}

impl GridWindow {
    pub fn node_count(&self) -> usize {
        self.ranges.iter().map(|(a, b)| b - a).product()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.iter().any(|(a, b)| a >= b)
    }

    /// Linear node indices of the window, in node order.
    pub fn linear_indices(&self, grid: &QuadratureGrid) -> Vec<usize> {
        if self.is_empty() {
            return Vec::new();
        }
        let n = self.ranges.len();
        let ppa = grid.points_per_axis();
        let mut strides = vec![1usize; n];
        for j in (0..n.saturating_sub(1)).rev() {
            strides[j] = strides[j + 1] * ppa;
        }
        let mut out = Vec::with_capacity(self.node_count());
        let mut idx: Vec<usize> = self.ranges.iter().map(|(a, _)| *a).collect();
        loop {
            out.push(idx.iter().zip(&strides).map(|(i, s)| i * s).sum());
            // odometer increment, last axis fastest
            let mut j = n;
            loop {
                if j == 0 {
                    return out;
                }
                j -= 1;
                idx[j] += 1;
                if idx[j] < self.ranges[j].1 {
                    break;
                }
                idx[j] = self.ranges[j].0;
            }
        }
    }
}

/// Evaluates a mixture at every grid node, in node order. Parallel, with a
/// per-thread evaluation buffer; results are independent of scheduling.
pub fn sample_mixture(mix: &crate::mixture::Mixture, grid: &QuadratureGrid) -> Result<Vec<f64>> {
    if mix.dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: mix.dim(),
        });
    }
    let n = grid.dim();
    let eval = mix.evaluator();
    Ok((0..grid.node_count())
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |buf, idx| {
                grid.node_into(idx, buf);
                eval.value(buf)
            },
        )
        .collect())
}

fn check_pair(f: &Density, h: &Density, grid: &QuadratureGrid) -> Result<()> {
    if f.dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: f.dim(),
        });
    }
    if h.dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: h.dim(),
        });
    }
    Ok(())
}

/// Midpoint approximation of `(∫ |f−h|^p dλ)^{1/p}` over the grid box.
pub fn lp_distance(f: &Density, h: &Density, p: f64, grid: &QuadratureGrid) -> Result<f64> {
    check_pair(f, h, grid)?;
    let a = grid.sample(|x| f.eval(x));
    let b = grid.sample(|x| h.eval(x));
    lp_distance_values(&a, &b, p, grid)
}

/// Same as [`lp_distance`] on tabulated node values.
pub fn lp_distance_values(a: &[f64], b: &[f64], p: f64, grid: &QuadratureGrid) -> Result<f64> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::invalid(format!("p must lie in [1, ∞), got {p}")));
    }
    let contributions: Vec<f64> = a
        .par_iter()
        .zip(b.par_iter())
        .map(|(x, y)| (x - y).abs().powf(p))
        .collect();
    Ok((pairwise_sum(&contributions) * grid.cell_volume()).powf(1.0 / p))
}

/// Grid-sup of `|f − h|`: a lower bound on the true sup over the box that
/// tightens as the grid refines.
pub fn linf_distance(f: &Density, h: &Density, grid: &QuadratureGrid) -> Result<f64> {
    check_pair(f, h, grid)?;
    let a = grid.sample(|x| f.eval(x));
    let b = grid.sample(|x| h.eval(x));
    Ok(linf_distance_values(&a, &b))
}

pub fn linf_distance_values(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Sup of `|a − b|` restricted to a node window.
pub fn linf_distance_values_in(a: &[f64], b: &[f64], window: &GridWindow, grid: &QuadratureGrid) -> f64 {
    window
        .linear_indices(grid)
        .into_iter()
        .map(|i| (a[i] - b[i]).abs())
        .fold(0.0, f64::max)
}

/// Midpoint approximation of `∫ f log(f/h) dλ` over the grid box, with `h`
/// clamped below by `floor`. Nodes where `f = 0` contribute zero.
pub fn kl_divergence(f: &Density, h: &Density, grid: &QuadratureGrid, floor: f64) -> Result<f64> {
    check_pair(f, h, grid)?;
    let a = grid.sample(|x| f.eval(x));
    let b = grid.sample(|x| h.eval(x));
    kl_divergence_values(&a, &b, grid, floor)
}

pub fn kl_divergence_values(a: &[f64], b: &[f64], grid: &QuadratureGrid, floor: f64) -> Result<f64> {
    if !(floor > 0.0) {
        return Err(Error::invalid(format!("KL clamp floor must be positive, got {floor}")));
    }
    let contributions: Vec<f64> = a
        .par_iter()
        .zip(b.par_iter())
        .map(|(&fv, &hv)| {
            if fv > 0.0 {
                fv * (fv / hv.max(floor)).ln()
            } else {
                0.0
            }
        })
        .collect();
    Ok(pairwise_sum(&contributions) * grid.cell_volume())
}

/// `L₁` mass of tabulated values outside the closed origin ball of radius `r`.
pub(crate) fn mass_outside_ball(values: &[f64], grid: &QuadratureGrid, r: f64) -> f64 {
    let n = grid.dim();
    let contributions: Vec<f64> = (0..values.len())
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |buf, idx| {
                grid.node_into(idx, buf);
                let norm2: f64 = buf.iter().map(|v| v * v).sum();
                if norm2 > r * r {
                    values[idx].abs()
                } else {
                    0.0
                }
            },
        )
        .collect();
    pairwise_sum(&contributions) * grid.cell_volume()
}

/// Grid-sup of tabulated values outside the closed origin ball of radius `r`.
pub(crate) fn sup_outside_ball(values: &[f64], grid: &QuadratureGrid, r: f64) -> f64 {
    let n = grid.dim();
    let mut buf = vec![0.0; n];
    let mut sup: f64 = 0.0;
    for (idx, v) in values.iter().enumerate() {
        grid.node_into(idx, &mut buf);
        let norm2: f64 = buf.iter().map(|x| x * x).sum();
        if norm2 > r * r {
            sup = sup.max(v.abs());
        }
    }
    sup
}

/// Result of a pointwise dilated convolution, with coverage metadata.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvolvedPoint {
    pub value: f64,
    /// Whether the grid box certifiably covers the effective support of the
    /// integrand. When false, `value` silently truncates kernel tails.
    pub covered: bool,
    /// Analytic bound on the truncated tail mass, when metadata allows one.
    pub tail_bound: Option<f64>,
}

/// Midpoint approximation of `(g_k ⋆ f)(x) = ∫ kⁿ g(k(x−y)) f(y) dλ(y)`
/// over the grid box.
pub fn convolve_dilated(
    g: &Density,
    k: f64,
    f: &Density,
    x: &[f64],
    grid: &QuadratureGrid,
) -> Result<ConvolvedPoint> {
    if !g.flags().is_pdf {
        return Err(Error::invalid("convolution kernel must be a pdf"));
    }
    if !(k > 0.0) {
        return Err(Error::invalid(format!("dilation factor must be positive, got {k}")));
    }
    check_pair(g, f, grid)?;
    if x.len() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: x.len(),
        });
    }
    let n = grid.dim();
    let scale = k.powi(n as i32);
    let contributions: Vec<f64> = (0..grid.node_count())
        .into_par_iter()
        .map_init(
            || (vec![0.0; n], vec![0.0; n]),
            |(y, t), idx| {
                grid.node_into(idx, y);
                for j in 0..n {
                    t[j] = k * (x[j] - y[j]);
                }
                scale * g.eval(t) * f.eval(y)
            },
        )
        .collect();
    let value = pairwise_sum(&contributions) * grid.cell_volume();

    // Coverage: the integrand vanishes outside supp f and outside the set
    // where the dilated kernel lives, so either support certifies the box.
    let mut covered = false;
    let mut tail_bound = None;
    if let Some(rf) = f.support_radius() {
        if grid.bounds().contains_centered_ball(rf) {
            covered = true;
            tail_bound = Some(0.0);
        }
    }
    if !covered {
        if let Some(rg) = g.support_radius() {
            let reach = rg / k;
            let inside = x
                .iter()
                .enumerate()
                .all(|(j, &xj)| xj - reach >= grid.bounds().lower[j] && xj + reach <= grid.bounds().upper[j]);
            if inside {
                covered = true;
                tail_bound = Some(0.0);
            }
        }
    }
    if !covered {
        if let (Some(vp), Some(cg)) = (f.v_params(), g.sup_bound()) {
            // tail ≤ ‖g_k‖_∞ · ∫_{‖y‖>ρ} f ≤ kⁿ C_g · β A_n ρ^{-θ} / θ
            let rho = grid.bounds().inscribed_radius();
            if rho > 0.0 {
                let bound = scale * cg * vp.beta * unit_sphere_area(n) * rho.powf(-vp.theta)
                    / vp.theta;
                tail_bound = Some(bound);
            }
        }
    }
    Ok(ConvolvedPoint {
        value,
        covered,
        tail_bound,
    })
}

/// `(g_k ⋆ f)(x)` at every grid node. The inner integral is restricted to
/// the window where `f` can be nonzero when `f` carries a support radius.
pub fn convolve_dilated_on_grid(
    g: &Density,
    k: f64,
    f: &Density,
    grid: &QuadratureGrid,
) -> Result<Vec<f64>> {
    if !g.flags().is_pdf {
        return Err(Error::invalid("convolution kernel must be a pdf"));
    }
    if !(k > 0.0) {
        return Err(Error::invalid(format!("dilation factor must be positive, got {k}")));
    }
    check_pair(g, f, grid)?;
    let n = grid.dim();
    let scale = k.powi(n as i32);

    let inner: Vec<usize> = match f.support_radius() {
        Some(r) => {
            let support = GridBox::centered_cube(n, r)?;
            grid.window(&support).linear_indices(grid)
        }
        None => (0..grid.node_count()).collect(),
    };
    let mut f_vals = Vec::with_capacity(inner.len());
    let mut y_nodes = Vec::with_capacity(inner.len() * n);
    {
        let mut buf = vec![0.0; n];
        for &idx in &inner {
            grid.node_into(idx, &mut buf);
            f_vals.push(f.eval(&buf));
            y_nodes.extend_from_slice(&buf);
        }
    }
    let vol = grid.cell_volume();
    let values: Vec<f64> = (0..grid.node_count())
        .into_par_iter()
        .map_init(
            || (vec![0.0; n], vec![0.0; n]),
            |(x, t), idx| {
                grid.node_into(idx, x);
                let mut acc = 0.0;
                for (i, fv) in f_vals.iter().enumerate() {
                    if *fv == 0.0 {
                        continue;
                    }
                    let y = &y_nodes[i * n..i * n + n];
                    for j in 0..n {
                        t[j] = k * (x[j] - y[j]);
                    }
                    acc += g.eval(t) * fv;
                }
                acc * scale * vol
            },
        )
        .collect();
    Ok(values)
}

/// Grid estimate of the modulus of continuity
/// `w(f, δ) = sup_{‖x−y‖₂ ≤ δ} |f(x) − f(y)|`.
///
/// Only axis-aligned node pairs at offsets up to `⌈δ/spacing⌉` cells are
/// compared, so the estimate is a lower bound on the true modulus.
pub fn modulus_of_continuity(f: &Density, delta: f64, grid: &QuadratureGrid) -> Result<f64> {
    if delta < 0.0 {
        return Err(Error::invalid(format!("delta must be nonnegative, got {delta}")));
    }
    if f.dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: f.dim(),
        });
    }
    if delta == 0.0 {
        return Ok(0.0);
    }
    let values = grid.sample(|x| f.eval(x));
    Ok(modulus_of_continuity_values(&values, delta, grid))
}

pub(crate) fn modulus_of_continuity_values(values: &[f64], delta: f64, grid: &QuadratureGrid) -> f64 {
    let n = grid.dim();
    let ppa = grid.points_per_axis();
    let mut strides = vec![1usize; n];
    for j in (0..n.saturating_sub(1)).rev() {
        strides[j] = strides[j + 1] * ppa;
    }
    let mut worst: f64 = 0.0;
    for j in 0..n {
        let h = grid.spacing()[j];
        let max_offset = ((delta / h).ceil() as usize).min(ppa.saturating_sub(1));
        for t in 1..=max_offset {
            if t as f64 * h > delta {
                break;
            }
            let stride = strides[j] * t;
            // all index pairs (idx, idx + stride) that stay within axis j
            let axis_len = ppa - t;
            let per_axis: Vec<usize> = (0..n)
                .map(|a| if a == j { axis_len } else { ppa })
                .collect();
            let count: usize = per_axis.iter().product();
            let local = (0..count)
                .into_par_iter()
                .map(|mut w| {
                    // decode the restricted odometer back to a linear index
                    let mut idx = 0usize;
                    for a in (0..n).rev() {
                        let i = w % per_axis[a];
                        w /= per_axis[a];
                        idx += i * strides[a];
                    }
                    (values[idx] - values[idx + stride]).abs()
                })
                .reduce(|| 0.0, f64::max);
            worst = worst.max(local);
        }
    }
    worst
}

/// Outcome of a numerical Young's-inequality check
/// `‖f ⋆ g‖_p ≤ ‖g‖₁ ‖f‖_p = ‖f‖_p` for a pdf kernel `g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YoungsCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Checks Young's inequality on the grid. `p = f64::INFINITY` uses the
/// grid-sup norm (box-only certification, like everything sup-related here).
pub fn youngs_check(g: &Density, f: &Density, p: f64, grid: &QuadratureGrid) -> Result<YoungsCheck> {
    if !g.flags().is_pdf {
        return Err(Error::invalid("Young's check requires a pdf kernel g"));
    }
    check_pair(g, f, grid)?;
    let conv = convolve_dilated_on_grid(g, 1.0, f, grid)?;
    let f_vals = grid.sample(|x| f.eval(x));
    let zeros = vec![0.0; conv.len()];
    let (lhs, rhs) = if p.is_infinite() {
        (
            linf_distance_values(&conv, &zeros),
            linf_distance_values(&f_vals, &zeros),
        )
    } else {
        (
            lp_distance_values(&conv, &zeros, p, grid)?,
            lp_distance_values(&f_vals, &zeros, p, grid)?,
        )
    };
    Ok(YoungsCheck {
        lhs,
        rhs,
        holds: lhs <= rhs + YOUNGS_TOL,
    })
}

/// Norm bundle measured on one grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub grid: String,
    pub p: f64,
    pub l1: f64,
    pub l2: f64,
    pub lp: f64,
    pub linf: f64,
    pub kl: Option<f64>,
}

impl NormReport {
    /// Measures all norms of `a − b` (and optionally `KL(a, b)`) on the grid.
    pub fn measure_values(
        a: &[f64],
        b: &[f64],
        p: f64,
        grid: &QuadratureGrid,
        with_kl: bool,
    ) -> Result<NormReport> {
        let l1 = lp_distance_values(a, b, 1.0, grid)?;
        let l2 = lp_distance_values(a, b, 2.0, grid)?;
        let lp = if (p - 1.0).abs() < f64::EPSILON {
            l1
        } else if (p - 2.0).abs() < f64::EPSILON {
            l2
        } else {
            lp_distance_values(a, b, p, grid)?
        };
        let linf = linf_distance_values(a, b);
        let kl = if with_kl {
            Some(kl_divergence_values(a, b, grid, KL_FLOOR)?)
        } else {
            None
        };
        Ok(NormReport {
            grid: grid.descriptor(),
            p,
            l1,
            l2,
            lp,
            linf,
            kl,
        })
    }

    pub fn csv_header() -> &'static str {
        "grid,p,l1,l2,lp,linf,kl"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.grid,
            self.p,
            self.l1,
            self.l2,
            self.lp,
            self.linf,
            self.kl.map(|v| v.to_string()).unwrap_or_default()
        )
    }
}

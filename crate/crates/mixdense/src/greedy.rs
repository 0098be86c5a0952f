//! Greedy `L_p` approximation by m-point convex combinations of dilates.
//!
//! The dictionary is a finite grid of locations sharing one dilation level:
//! atoms `kⁿ g(kx − kμ)`. Each step scans every candidate, line-searches
//! the convex blend between the current iterate and the candidate, and
//! keeps the best (ties broken by lowest candidate index), so runs are
//! deterministic. Iterate weights stay on the simplex because every step
//! size lies in `[0, 1]`, and errors never increase because step size 0 is
//! always admissible.
//!
//! The yardstick for a fit against a target inside the closed convex hull
//! is `C_p · K / m^{1−1/α}` with `α = min{p, 2}` — see [`rate_constant`]
//! and [`rate_bound_check`].

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{convolve_dilated_on_grid, lp_distance_values, QuadratureGrid};
use crate::error::{Error, Result};
use crate::mixture::{ComponentSpec, Density, Mixture};

/// Greedy stops early when the fit error drops below this.
pub const STOP_EPS: f64 = 1e-8;

/// Golden-section line-search tolerance for `p ≠ 2`.
pub const LINE_SEARCH_TOL: f64 = 1e-10;

/// Cap on `candidates × nodes` for the precomputed atom table.
pub const ATOM_TABLE_LIMIT: u64 = 1 << 24;

/// Dilation budget for [`target_smoothing`].
pub const MAX_SMOOTHING_DILATION: f64 = 256.0;

/// The piecewise constant in the m-term convex approximation rate:
/// `1` for `1 ≤ p ≤ 2` and `√2 [√π Γ((p+1)/2)]^{1/p}` for `p > 2`.
pub fn rate_constant(p: f64) -> Result<f64> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::invalid(format!("p must lie in [1, ∞), got {p}")));
    }
    if p <= 2.0 {
        Ok(1.0)
    } else {
        let gamma = libm::tgamma((p + 1.0) / 2.0);
        Ok(2.0_f64.sqrt() * (std::f64::consts::PI.sqrt() * gamma).powf(1.0 / p))
    }
}

/// A dictionary of location-indexed dilates sharing one dilation level.
#[derive(Debug, Clone)]
pub struct DictionarySpec {
    kernel: Density,
    dilation: f64,
    locations: Vec<Vec<f64>>,
}

impl DictionarySpec {
    pub fn new(kernel: Density, dilation: f64, locations: Vec<Vec<f64>>) -> Result<DictionarySpec> {
        if locations.is_empty() {
            return Err(Error::invalid("candidate location set must be non-empty"));
        }
        if !(dilation > 0.0) || !dilation.is_finite() {
            return Err(Error::invalid(format!("dilation must be positive, got {dilation}")));
        }
        let n = kernel.dim();
        if locations.iter().any(|loc| loc.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: locations.iter().map(|l| l.len()).find(|&l| l != n).unwrap_or(0),
            });
        }
        Ok(DictionarySpec {
            kernel,
            dilation,
            locations,
        })
    }

    /// Locations on an inclusive tensor grid over a box, `per_axis` points
    /// per axis (endpoints included, so odd counts contain the center).
    pub fn grid_locations(
        kernel: Density,
        dilation: f64,
        lower: &[f64],
        upper: &[f64],
        per_axis: usize,
    ) -> Result<DictionarySpec> {
        if per_axis < 2 {
            return Err(Error::invalid("candidate grid needs at least two points per axis"));
        }
        let n = kernel.dim();
        if lower.len() != n || upper.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: lower.len(),
            });
        }
        let total = (per_axis as u64).checked_pow(n as u32).unwrap_or(u64::MAX);
        if total > 1 << 20 {
            return Err(Error::ResourceLimit {
                what: "candidate locations",
                limit: 1 << 20,
                requested: total,
            });
        }
        let mut locations = Vec::with_capacity(total as usize);
        let mut idx = vec![0usize; n];
        loop {
            locations.push(
                (0..n)
                    .map(|j| {
                        lower[j] + (upper[j] - lower[j]) * idx[j] as f64 / (per_axis - 1) as f64
                    })
                    .collect(),
            );
            let mut j = n;
            let done = loop {
                if j == 0 {
                    break true;
                }
                j -= 1;
                idx[j] += 1;
                if idx[j] < per_axis {
                    break false;
                }
                idx[j] = 0;
            };
            if done {
                break;
            }
        }
        DictionarySpec::new(kernel, dilation, locations)
    }

    pub fn kernel(&self) -> &Density {
        &self.kernel
    }

    pub fn dilation(&self) -> f64 {
        self.dilation
    }

    pub fn locations(&self) -> &[Vec<f64>] {
        &self.locations
    }
}

/// One accepted greedy step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GreedyStep {
    pub m: usize,
    pub location: Vec<f64>,
    pub step_size: f64,
    pub error: f64,
}

/// Full greedy run record.
#[derive(Debug, Clone, Serialize)]
pub struct GreedyTrace {
    pub steps: Vec<GreedyStep>,
    /// `K = k^{n/p}‖g‖_p + ‖target‖_p`, both norms on the run's grid.
    pub k_bound: f64,
    /// `C_p` from [`rate_constant`].
    pub rate_constant: f64,
    /// `α = min{p, 2}`.
    pub alpha: f64,
    pub p: f64,
}

impl GreedyTrace {
    pub fn csv_header() -> &'static str {
        "step,mu,step_size,lp_error"
    }

    /// Step rows followed by a `bound` footer carrying `K`, `C_p`, `α`.
    pub fn csv_rows(&self) -> Vec<String> {
        let mut rows: Vec<String> = self
            .steps
            .iter()
            .map(|s| {
                let mu = s
                    .location
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(";");
                format!("{},{},{},{}", s.m, mu, s.step_size, s.error)
            })
            .collect();
        rows.push(format!("bound,{},{},{}", self.k_bound, self.rate_constant, self.alpha));
        rows
    }
}

/// A greedy fit: the mixture and its per-step trace.
#[derive(Debug, Clone)]
pub struct GreedyFit {
    pub mixture: Mixture,
    pub trace: GreedyTrace,
}

fn golden_section_min(mut f: impl FnMut(f64) -> f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut a, mut b) = (0.0_f64, 1.0_f64);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > LINE_SEARCH_TOL {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let t = 0.5 * (a + b);
    let ft = f(t);
    // endpoints are admissible steps; never return anything worse
    let f0 = f(0.0);
    let f1 = f(1.0);
    if f0 <= ft && f0 <= f1 {
        (0.0, f0)
    } else if f1 <= ft {
        (1.0, f1)
    } else {
        (t, ft)
    }
}

/// Greedily fits `f` on the grid by convex combinations of dictionary
/// atoms, one atom per step, exact line search for `p = 2` and
/// golden-section search otherwise.
pub fn greedy_convex_fit(
    f: &Density,
    dict: &DictionarySpec,
    p: f64,
    m_max: usize,
    grid: &QuadratureGrid,
) -> Result<GreedyFit> {
    if m_max == 0 {
        return Err(Error::invalid("m_max must be positive"));
    }
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::invalid(format!("p must lie in [1, ∞), got {p}")));
    }
    if f.dim() != grid.dim() || dict.kernel.dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: f.dim(),
        });
    }
    let node_count = grid.node_count() as u64;
    let table = node_count.saturating_mul(dict.locations.len() as u64);
    if table > ATOM_TABLE_LIMIT {
        return Err(Error::ResourceLimit {
            what: "atom table entries",
            limit: ATOM_TABLE_LIMIT,
            requested: table,
        });
    }

    let n = grid.dim();
    let k = dict.dilation;
    let kn = k.powi(n as i32);
    let target = grid.sample_density(f)?;

    // Atom table: candidate-major, node-minor.
    let nodes = grid.node_count();
    let atoms: Vec<f64> = dict
        .locations
        .par_iter()
        .flat_map_iter(|mu| {
            let mut buf = vec![0.0; n];
            let mut t = vec![0.0; n];
            (0..nodes)
                .map(|idx| {
                    grid.node_into(idx, &mut buf);
                    for j in 0..n {
                        t[j] = k * (buf[j] - mu[j]);
                    }
                    kn * dict.kernel.eval(&t)
                })
                .collect::<Vec<f64>>()
        })
        .collect();
    let atom = |j: usize| &atoms[j * nodes..(j + 1) * nodes];

    let vol = grid.cell_volume();
    let exact_l2 = (p - 2.0).abs() < 1e-12;
    let mut iterate = vec![0.0_f64; nodes];
    let mut weights = vec![0.0_f64; dict.locations.len()];
    let mut steps: Vec<GreedyStep> = Vec::new();

    for m in 1..=m_max {
        let first = m == 1;
        // per-candidate (error, step size), in candidate order
        let scored: Vec<(f64, f64)> = (0..dict.locations.len())
            .into_par_iter()
            .map(|j| {
                let a = atom(j);
                if first {
                    let err = if exact_l2 {
                        let s: f64 = a
                            .iter()
                            .zip(&target)
                            .map(|(av, yv)| (av - yv) * (av - yv))
                            .sum();
                        (s * vol).sqrt()
                    } else {
                        lp_norm_of_diff(a, &target, p, vol)
                    };
                    (err, 1.0)
                } else if exact_l2 {
                    let mut num = 0.0;
                    let mut den = 0.0;
                    let mut base = 0.0;
                    for i in 0..nodes {
                        let d = a[i] - iterate[i];
                        let r = target[i] - iterate[i];
                        num += r * d;
                        den += d * d;
                        base += r * r;
                    }
                    let t = if den > 0.0 { (num / den).clamp(0.0, 1.0) } else { 0.0 };
                    let err2 = (base - 2.0 * t * num + t * t * den).max(0.0) * vol;
                    (err2.sqrt(), t)
                } else {
                    let objective = |t: f64| {
                        let s: f64 = (0..nodes)
                            .map(|i| {
                                let blend = iterate[i] + t * (a[i] - iterate[i]);
                                (blend - target[i]).abs().powf(p)
                            })
                            .sum();
                        (s * vol).powf(1.0 / p)
                    };
                    golden_section_min(objective)
                }
            })
            .collect();

        let (best_j, &(best_err, best_t)) = scored
            .iter()
            .enumerate()
            .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0).then(a.0.cmp(&b.0)))
            .expect("non-empty candidate set");

        let a = atom(best_j);
        if first {
            iterate.copy_from_slice(a);
            weights[best_j] = 1.0;
        } else {
            for i in 0..nodes {
                iterate[i] += best_t * (a[i] - iterate[i]);
            }
            for w in weights.iter_mut() {
                *w *= 1.0 - best_t;
            }
            weights[best_j] += best_t;
        }
        steps.push(GreedyStep {
            m,
            location: dict.locations[best_j].clone(),
            step_size: best_t,
            error: best_err,
        });
        if best_err <= STOP_EPS {
            break;
        }
    }

    let specs: Vec<ComponentSpec> = weights
        .iter()
        .enumerate()
        .filter(|(_, w)| **w > 0.0)
        .map(|(j, &w)| ComponentSpec::new(w, dict.locations[j].clone(), 1.0 / k))
        .collect();
    let mixture = Mixture::new_normalized(dict.kernel.clone(), specs)?;

    let g_vals = grid.sample_density(&dict.kernel)?;
    let zeros = vec![0.0; nodes];
    let g_norm = lp_distance_values(&g_vals, &zeros, p, grid)?;
    let target_norm = lp_distance_values(&target, &zeros, p, grid)?;
    let trace = GreedyTrace {
        steps,
        k_bound: kn.powf(1.0 / p) * g_norm + target_norm,
        rate_constant: rate_constant(p)?,
        alpha: p.min(2.0),
        p,
    };
    Ok(GreedyFit { mixture, trace })
}

fn lp_norm_of_diff(a: &[f64], b: &[f64], p: f64, vol: f64) -> f64 {
    let s: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs().powf(p))
        .sum();
    (s * vol).powf(1.0 / p)
}

/// A smoothed fitting target: the dilated-kernel convolution of the
/// original target, tabulated on the run's grid.
#[derive(Debug, Clone)]
pub struct SmoothedTarget {
    /// Smallest power-of-two dilation meeting the budget.
    pub dilation: f64,
    /// `g_k ⋆ f` at the grid nodes.
    pub values: Vec<f64>,
    /// Measured `L_p` distance between `f` and the smoothed target.
    pub smoothing_error: f64,
    pub p: f64,
}

impl SmoothedTarget {
    /// A density view that reproduces the tabulated values exactly at grid
    /// nodes (nearest-node elsewhere). The greedy fitter only ever
    /// evaluates at nodes.
    pub fn as_density(&self, grid: &QuadratureGrid) -> Density {
        let values = self.values.clone();
        let grid = grid.clone();
        Density::new(format!("smoothed(k={})", self.dilation), grid.dim(), move |x: &[f64]| {
            let ppa = grid.points_per_axis();
            let mut idx = 0usize;
            for j in 0..grid.dim() {
                let rel = (x[j] - grid.bounds().lower[j]) / grid.spacing()[j] - 0.5;
                let i = rel.round().clamp(0.0, (ppa - 1) as f64) as usize;
                idx = idx * ppa + i;
            }
            values[idx]
        })
    }
}

/// Finds the smallest power-of-two dilation with
/// `‖f − g_k ⋆ f‖_p < ε/2` on the grid and returns the smoothed target.
/// The smoothed target lies in the closed convex hull of the dictionary
/// class at that dilation, which is what makes greedy fitting of it
/// converge.
pub fn target_smoothing(
    f: &Density,
    g: &Density,
    epsilon: f64,
    p: f64,
    grid: &QuadratureGrid,
) -> Result<SmoothedTarget> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    if !g.flags().is_pdf {
        return Err(Error::invalid("smoothing kernel must be a pdf"));
    }
    let f_vals = grid.sample_density(f)?;
    let mut k = 1.0;
    loop {
        let conv = convolve_dilated_on_grid(g, k, f, grid)?;
        let err = lp_distance_values(&f_vals, &conv, p, grid)?;
        if err < epsilon / 2.0 {
            return Ok(SmoothedTarget {
                dilation: k,
                values: conv,
                smoothing_error: err,
                p,
            });
        }
        k *= 2.0;
        if k > MAX_SMOOTHING_DILATION {
            return Err(Error::non_convergence(format!(
                "smoothing error still above {} at dilation {MAX_SMOOTHING_DILATION}",
                epsilon / 2.0
            )));
        }
    }
}

/// Outcome of checking a greedy trace against `C_p·K·m^{-(1-1/α)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateBoundCheck {
    pub holds: bool,
    /// `max_m error(m) · m^{1-1/α} / (C_p K)`; at most 1 when `holds`.
    pub worst_ratio: f64,
}

/// Checks every step of the trace against the rate bound.
pub fn rate_bound_check(trace: &GreedyTrace, p: f64) -> RateBoundCheck {
    let alpha = p.min(2.0);
    let exponent = 1.0 - 1.0 / alpha;
    let denom = trace.rate_constant * trace.k_bound;
    let worst_ratio = trace
        .steps
        .iter()
        .map(|s| s.error * (s.m as f64).powf(exponent) / denom)
        .fold(0.0, f64::max);
    RateBoundCheck {
        holds: worst_ratio <= 1.0,
        worst_ratio,
    }
}

/// Least-squares slope of `log error` against `log m` over steps with
/// `m_lo ≤ m ≤ m_hi` and positive error.
pub fn log_log_slope(trace: &GreedyTrace, m_lo: usize, m_hi: usize) -> Option<f64> {
    let pts: Vec<(f64, f64)> = trace
        .steps
        .iter()
        .filter(|s| s.m >= m_lo && s.m <= m_hi && s.error > 0.0)
        .map(|s| ((s.m as f64).ln(), s.error.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

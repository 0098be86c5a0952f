//! Built-in density catalog and function-class diagnostics.
//!
//! The catalog densities are normalized by closed-form constants only;
//! nothing is renormalized by runtime integration. Class membership checks
//! (vanishing tails, polynomial tail domination, Wiener-type unit-cell sup
//! sums) are sample certifications: a "holds" verdict certifies the sampled
//! points, never the whole space.
//!
//! The bump-train counterexample is a continuous density that vanishes at
//! infinity while its unit-cell sup sums diverge like the harmonic series:
//! bump `i` lives on `[i-1, i)`, peaks at `i - 1/2` with height `1/i`, and
//! carries mass exactly `1/(2i² + i)`.

use serde::Serialize;

use crate::analysis::{GridBox, QuadratureGrid};
use crate::error::{Error, Result};
use crate::mixture::{ClassFlags, Density};
use crate::numeric::neumaier_sum;

const INV_SQRT_2PI: f64 = 0.3989422804014327; // (2π)^{-1/2}

/// Standard normal density on `R^n`, named `normal` (`normal2` for n = 2).
pub fn standard_normal(dim: usize) -> Density {
    let name = if dim == 1 {
        "normal".to_string()
    } else {
        format!("normal{dim}")
    };
    let norm = INV_SQRT_2PI.powi(dim as i32);
    Density::new(name, dim, move |x: &[f64]| {
        let sq: f64 = x.iter().map(|v| v * v).sum();
        norm * (-0.5 * sq).exp()
    })
    .with_sup_bound(norm)
    .with_flags(ClassFlags {
        is_pdf: true,
        in_c0: true,
        in_cb: true,
        in_cc: false,
    })
}

/// Laplace density `e^{-|x|}/2` on `R`.
pub fn laplace() -> Density {
    Density::new("laplace", 1, |x: &[f64]| 0.5 * (-x[0].abs()).exp())
        .with_sup_bound(0.5)
        .with_flags(ClassFlags {
            is_pdf: true,
            in_c0: true,
            in_cb: true,
            in_cc: false,
        })
}

/// Cauchy density `1/(π(1+x²))` on `R`, with the tail-domination
/// certificate `β = 2/π`, `θ = 1`: `(1+|x|)² ≤ 2(1+x²)`.
pub fn cauchy() -> Density {
    let pi = std::f64::consts::PI;
    Density::new("cauchy", 1, move |x: &[f64]| 1.0 / (pi * (1.0 + x[0] * x[0])))
        .with_sup_bound(1.0 / pi)
        .with_v_params(2.0 / pi, 1.0)
        .with_flags(ClassFlags {
            is_pdf: true,
            in_c0: true,
            in_cb: true,
            in_cc: false,
        })
}

/// Product triangular density `Π (1 − |xⱼ|)₊`, supported on `[-1, 1]^n`.
pub fn triangular(dim: usize) -> Density {
    let name = if dim == 1 {
        "triangular".to_string()
    } else {
        format!("triangular{dim}")
    };
    Density::new(name, dim, |x: &[f64]| {
        x.iter().map(|v| (1.0 - v.abs()).max(0.0)).product()
    })
    .with_support_radius((dim as f64).sqrt())
    .with_sup_bound(1.0)
    .with_flags(ClassFlags {
        is_pdf: true,
        in_c0: true,
        in_cb: true,
        in_cc: true,
    })
}

/// Uniform density on `[0, 1)`. Discontinuous, so an `L_p`-only target.
/// Half-open so that node-aligned convolution shifts never double-count a
/// boundary node.
pub fn uniform_01() -> Density {
    Density::new("uniform", 1, |x: &[f64]| {
        if (0.0..1.0).contains(&x[0]) {
            1.0
        } else {
            0.0
        }
    })
    .with_support_radius(1.0)
    .with_sup_bound(1.0)
    .with_flags(ClassFlags {
        is_pdf: true,
        in_c0: false,
        in_cb: false,
        in_cc: false,
    })
}

/// The identically-zero density. Convenient second argument when a norm of
/// a single function is wanted.
pub fn zero_density(dim: usize) -> Density {
    Density::new("zero", dim, |_: &[f64]| 0.0)
        .with_support_radius(0.0)
        .with_sup_bound(0.0)
}

/// The bump-train counterexample as a catalog [`Density`] (n = 1,
/// continuous, vanishes at infinity, total mass `2(1 − ln 2) ≈ 0.6137`,
/// so not a pdf).
pub fn counterexample_density() -> Density {
    Density::new("counterexample", 1, |x: &[f64]| counterexample_eval(x[0]))
        .with_sup_bound(1.0)
        .with_flags(ClassFlags {
            is_pdf: false,
            in_c0: true,
            in_cb: true,
            in_cc: false,
        })
}

/// Evaluates the bump train at a scalar point.
///
/// At most one bump is active at any `x ≥ 0` (bump `i = ⌊x⌋ + 1`), so the
/// evaluation is exact and O(1): with `u = x − i + 1 ∈ [0, 1)`, the value is
/// `(2u)^{2i}/i` on the rising half and `(2(u−1))^{2i}/i` on the falling
/// half. Zero for `x < 0`.
pub fn counterexample_eval(x: f64) -> f64 {
    if x < 0.0 || !x.is_finite() {
        return 0.0;
    }
    let i = x.floor() + 1.0;
    let u = x - (i - 1.0);
    let t = if u < 0.5 { 2.0 * u } else { 2.0 * (u - 1.0) };
    let sq = t * t;
    if sq == 0.0 {
        return 0.0;
    }
    let power = if i <= i32::MAX as f64 {
        sq.powi(i as i32)
    } else {
        (i * sq.ln()).exp()
    };
    power / i
}

/// Exact mass of bump `i`: `∫ (2u)^{2i}/i du` over the bump equals
/// `1/(2i² + i)`.
pub fn counterexample_bump_mass(i: u64) -> f64 {
    let i = i as f64;
    1.0 / (2.0 * i * i + i)
}

/// Peak location and height of bump `i`: `(i − 1/2, 1/i)`.
pub fn counterexample_peak(i: u64) -> (f64, f64) {
    (i as f64 - 0.5, 1.0 / i as f64)
}

/// Partial sum of the exact bump masses with a certified tail interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesMass {
    /// Sum of the first `terms` bump masses.
    pub partial_sum: f64,
    /// The true total lies in `[partial_sum, partial_sum + tail_bound]`.
    pub tail_bound: f64,
    pub terms: u64,
}

/// Sums the exact per-bump masses `1/(2i²+i)` until the `Σ_{i>N} 1/i² < 1/N`
/// tail bound drops below `tolerance`.
pub fn counterexample_l1(tolerance: f64) -> Result<SeriesMass> {
    if !(tolerance > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tolerance}")));
    }
    let terms = (1.0 / tolerance).ceil() as u64;
    let partial_sum = neumaier_sum((1..=terms).map(counterexample_bump_mass));
    Ok(SeriesMass {
        partial_sum,
        tail_bound: 1.0 / terms as f64,
        terms,
    })
}

/// Exact Wiener-type partial sum for the bump train: unit cells contribute
/// their peaks, so the sum over `2N` centered cells is `Σ_{i=1}^{N} 1/i`.
pub fn counterexample_wiener_sum(n: u64) -> f64 {
    neumaier_sum((1..=n).map(|i| 1.0 / i as f64))
}

/// Nodes per unit cell for the unit-cell sup scans.
pub const CELL_SUP_NODES: usize = 1025;

fn cell_sup(f: &Density, cell_start: f64) -> f64 {
    let mut sup: f64 = 0.0;
    for j in 0..CELL_SUP_NODES {
        let x = cell_start + j as f64 / (CELL_SUP_NODES - 1) as f64;
        sup = sup.max(f.eval(&[x]).abs());
    }
    sup
}

/// Wiener-type partial sum `Σ_y sup_{x ∈ [0,1]} |f(x + y)|` over the `2N`
/// unit cells `y ∈ {−N, …, N−1}`, with each inner sup taken over
/// [`CELL_SUP_NODES`] equispaced nodes. This truncation makes the increment
/// `S_N − S_{N−1}` equal the new outermost cell sups.
pub fn wiener_partial_sum(f: &Density, n: u64) -> Result<f64> {
    if f.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: f.dim(),
        });
    }
    if n == 0 {
        return Err(Error::invalid("partial sum order must be positive"));
    }
    let sups: Vec<f64> = (-(n as i64)..n as i64)
        .map(|y| cell_sup(f, y as f64))
        .collect();
    Ok(neumaier_sum(sups))
}

/// One row of a polynomial-tail-domination check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailDominationCheck {
    pub beta: f64,
    pub theta: f64,
    /// The inequality held at every sampled point. Sample certification only.
    pub holds_on_samples: bool,
    pub first_violation: Option<TailViolation>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailViolation {
    pub x: Vec<f64>,
    pub value: f64,
    pub bound: f64,
}

/// Sampling step used by [`check_class_v`] along each axis.
pub const V_SAMPLE_STEP: f64 = 0.25;

/// Checks `|f(x)| ≤ β (1 + ‖x‖₂)^{-n-θ}` on axis-aligned samples out to
/// each radius. The step hits half-integers, where the bump train peaks.
pub fn check_class_v(
    f: &Density,
    beta: f64,
    theta: f64,
    radii: &[f64],
) -> Result<TailDominationCheck> {
    if radii.is_empty() {
        return Err(Error::invalid("radii must be non-empty"));
    }
    if !(beta > 0.0 && theta > 0.0) {
        return Err(Error::invalid("beta and theta must be positive"));
    }
    let n = f.dim();
    let exponent = -(n as f64) - theta;
    let mut point = vec![0.0; n];
    let check = |point: &[f64]| -> Option<TailViolation> {
        let norm = point.iter().map(|v| v * v).sum::<f64>().sqrt();
        let bound = beta * (1.0 + norm).powf(exponent);
        let value = f.eval(point).abs();
        (value > bound).then(|| TailViolation {
            x: point.to_vec(),
            value,
            bound,
        })
    };
    if let Some(v) = check(&point) {
        return Ok(TailDominationCheck {
            beta,
            theta,
            holds_on_samples: false,
            first_violation: Some(v),
        });
    }
    let r_max = radii.iter().copied().fold(0.0, f64::max);
    let steps = (r_max / V_SAMPLE_STEP).floor() as u64;
    for s in 1..=steps {
        let t = s as f64 * V_SAMPLE_STEP;
        for axis in 0..n {
            for sign in [1.0, -1.0] {
                point.iter_mut().for_each(|v| *v = 0.0);
                point[axis] = sign * t;
                if let Some(v) = check(&point) {
                    return Ok(TailDominationCheck {
                        beta,
                        theta,
                        holds_on_samples: false,
                        first_violation: Some(v),
                    });
                }
            }
        }
    }
    Ok(TailDominationCheck {
        beta,
        theta,
        holds_on_samples: true,
        first_violation: None,
    })
}

/// Grid sup of `|f|` outside each radius, scanned along axis rays in unit
/// cells of [`CELL_SUP_NODES`] nodes. Returns `(radius, tail sup)` pairs.
pub fn check_c0_tail(f: &Density, radii: &[f64]) -> Vec<(f64, f64)> {
    const SCAN_CELLS: usize = 64;
    let n = f.dim();
    radii
        .iter()
        .map(|&r| {
            let mut sup: f64 = 0.0;
            let mut point = vec![0.0; n];
            for axis in 0..n {
                for sign in [1.0, -1.0] {
                    for cell in 0..SCAN_CELLS {
                        let start = r + cell as f64;
                        for j in 0..CELL_SUP_NODES {
                            let t = start + j as f64 / (CELL_SUP_NODES - 1) as f64;
                            point.iter_mut().for_each(|v| *v = 0.0);
                            point[axis] = sign * t;
                            // strictly outside the closed ball of radius r
                            if t > r {
                                sup = sup.max(f.eval(&point).abs());
                            }
                        }
                    }
                }
            }
            (r, sup)
        })
        .collect()
}

/// Class-membership evidence for one density.
#[derive(Debug, Clone, Serialize)]
pub struct ClassReport {
    pub density: String,
    pub c0_tail: Vec<(f64, f64)>,
    pub v_check: Vec<TailDominationCheck>,
    pub wiener_partial_sums: Vec<f64>,
}

/// The built-in catalog.
pub fn catalog() -> Vec<Density> {
    vec![
        standard_normal(1),
        laplace(),
        cauchy(),
        triangular(1),
        uniform_01(),
        counterexample_density(),
        standard_normal(2),
        triangular(2),
    ]
}

/// Catalog lookup by name.
pub fn lookup(name: &str) -> Option<Density> {
    catalog().into_iter().find(|d| d.name() == name)
}

/// A catalog density together with the grid its unit-mass check runs on.
pub struct CatalogEntry {
    pub density: Density,
    pub mass_grid: QuadratureGrid,
}

/// Catalog entries with per-density mass-check grids. The heavy-tailed
/// Cauchy entry needs a very wide box before its mass reaches 1 within
/// 1e-6, hence the per-entry grids.
pub fn catalog_entries() -> Vec<CatalogEntry> {
    let grid = |lo: f64, hi: f64, dim: usize, points: usize| {
        QuadratureGrid::new(
            GridBox::new(vec![lo; dim], vec![hi; dim]).expect("static box"),
            points,
        )
        .expect("static grid")
    };
    vec![
        CatalogEntry {
            density: standard_normal(1),
            mass_grid: grid(-8.0, 8.0, 1, 4096),
        },
        CatalogEntry {
            density: laplace(),
            mass_grid: grid(-16.0, 16.0, 1, 8192),
        },
        CatalogEntry {
            density: cauchy(),
            mass_grid: grid(-1048576.0, 1048576.0, 1, 1 << 24),
        },
        CatalogEntry {
            density: triangular(1),
            mass_grid: grid(-1.5, 1.5, 1, 8192),
        },
        CatalogEntry {
            density: uniform_01(),
            mass_grid: grid(0.0, 1.0, 1, 4096),
        },
        CatalogEntry {
            density: counterexample_density(),
            mass_grid: grid(-2.0, 66.0, 1, 65536),
        },
        CatalogEntry {
            density: standard_normal(2),
            mass_grid: grid(-8.0, 8.0, 2, 2048),
        },
        CatalogEntry {
            density: triangular(2),
            mass_grid: grid(-1.5, 1.5, 2, 2048),
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counterexample_zero_on_negative_axis() {
        assert_eq!(counterexample_eval(-1.0), 0.0);
        assert_eq!(counterexample_eval(-1e-9), 0.0);
        assert_eq!(counterexample_eval(f64::NEG_INFINITY), 0.0);
    }

    #[test]
    fn counterexample_first_peaks() {
        assert_eq!(counterexample_eval(0.5), 1.0);
        assert_eq!(counterexample_eval(1.5), 0.5);
        assert_eq!(counterexample_eval(2.5), 1.0 / 3.0);
    }

    #[test]
    fn counterexample_peaks_exact_to_one_hundred() {
        for i in 1..=100u64 {
            let (x, peak) = counterexample_peak(i);
            assert_eq!(counterexample_eval(x), peak, "bump {i}");
        }
    }

    #[test]
    fn counterexample_continuous_at_knots() {
        let h = 1e-7;
        let mut knot = 0.0;
        while knot <= 20.0 {
            let left = counterexample_eval(knot - h);
            let right = counterexample_eval(knot + h);
            assert!(
                (left - right).abs() < 1e-9,
                "knot {knot}: {left} vs {right}"
            );
            knot += 0.5;
        }
    }

    #[test]
    fn bump_masses_match_closed_form() {
        assert_eq!(counterexample_bump_mass(1), 1.0 / 3.0);
        assert_eq!(counterexample_bump_mass(2), 1.0 / 10.0);
        for i in 1..=10u64 {
            let i_f = i as f64;
            assert_eq!(counterexample_bump_mass(i), 1.0 / (2.0 * i_f * i_f + i_f));
        }
    }

    /// Adaptive Simpson integrator, test-only oracle independent of the
    /// series arithmetic under test.
    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
            (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
        }
        let whole = simpson(f, a, b);
        let m = 0.5 * (a + b);
        let left = simpson(f, a, m);
        let right = simpson(f, m, b);
        if depth == 0 || (left + right - whole).abs() < 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            adaptive_simpson(f, a, m, tol / 2.0, depth - 1)
                + adaptive_simpson(f, m, b, tol / 2.0, depth - 1)
        }
    }

    #[test]
    fn bump_masses_verified_by_adaptive_quadrature() {
        let f = |x: f64| counterexample_eval(x);
        for i in 1..=12u64 {
            let a = (i - 1) as f64;
            let q = adaptive_simpson(&f, a, a + 1.0, 1e-10, 40);
            assert!(
                (q - counterexample_bump_mass(i)).abs() < 1e-8,
                "bump {i}: quadrature {q}"
            );
        }
    }

    #[test]
    fn series_total_matches_independent_oracle() {
        // Telescoping: Σ 1/(i(2i+1)) = 2(1 − ln 2).
        let oracle = 2.0 * (1.0 - std::f64::consts::LN_2);
        let mass = counterexample_l1(1e-5).unwrap();
        assert!(mass.partial_sum <= oracle && oracle <= mass.partial_sum + mass.tail_bound);
        assert!((mass.partial_sum - oracle).abs() < 1e-4);
        assert!((oracle - 0.613706).abs() < 1e-6);
    }

    #[test]
    fn counterexample_l1_rejects_bad_tolerance() {
        assert!(counterexample_l1(0.0).is_err());
        assert!(counterexample_l1(-1.0).is_err());
    }

    #[test]
    fn wiener_increments_equal_peak_heights() {
        let g = counterexample_density();
        let mut prev = 0.0;
        for n in 1..=12u64 {
            let s = wiener_partial_sum(&g, n).unwrap();
            if n > 1 {
                assert!(
                    (s - prev - 1.0 / n as f64).abs() < 1e-12,
                    "increment at {n}: {}",
                    s - prev
                );
            }
            prev = s;
        }
    }

    #[test]
    fn wiener_grid_scan_matches_exact_harmonic_sum() {
        let g = counterexample_density();
        let s = wiener_partial_sum(&g, 100).unwrap();
        assert!((s - counterexample_wiener_sum(100)).abs() < 1e-12);
    }

    #[test]
    fn wiener_partial_sums_nondecreasing() {
        let g = counterexample_density();
        let sums: Vec<f64> = (1..=20).map(|n| wiener_partial_sum(&g, n).unwrap()).collect();
        assert!(sums.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn wiener_sum_of_normal_converges() {
        let phi = standard_normal(1);
        let s39 = wiener_partial_sum(&phi, 39).unwrap();
        let s40 = wiener_partial_sum(&phi, 40).unwrap();
        assert!(s40 - s39 < 1e-8, "increment {}", s40 - s39);
        assert!(s40 > 0.0);
    }

    #[test]
    fn cauchy_satisfies_its_tail_certificate() {
        // (1+|x|)² ≤ 2(1+x²) pointwise, i.e. (|x|−1)² ≥ 0.
        let c = cauchy();
        let out = check_class_v(&c, 2.0 / std::f64::consts::PI, 1.0, &[64.0]).unwrap();
        assert!(out.holds_on_samples, "violation {:?}", out.first_violation);
        // brute-force the algebraic identity on a fine sweep
        for j in 0..=4000 {
            let x: f64 = -20.0 + 0.01 * j as f64;
            assert!((x.abs() - 1.0).powi(2) >= -1e-15);
            let lhs = c.eval(&[x]);
            let rhs = (2.0 / std::f64::consts::PI) * (1.0 + x.abs()).powi(-2);
            assert!(lhs <= rhs + 1e-15, "x={x}");
        }
    }

    #[test]
    fn normal_dominated_by_quadratic_tail() {
        let phi = standard_normal(1);
        let out = check_class_v(&phi, 1.0, 1.0, &[8.0]).unwrap();
        assert!(out.holds_on_samples, "violation {:?}", out.first_violation);
    }

    #[test]
    fn counterexample_escapes_every_swept_tail_bound() {
        let g = counterexample_density();
        let betas = [0.5, 1.0, 2.0, 4.0, 10.0];
        let thetas = [0.25, 0.5, 1.0, 2.0];
        let mut combos = 0;
        for &beta in &betas {
            for &theta in &thetas {
                let out = check_class_v(&g, beta, theta, &[200_000.0]).unwrap();
                assert!(
                    !out.holds_on_samples,
                    "β={beta}, θ={theta} unexpectedly held"
                );
                let v = out.first_violation.unwrap();
                // violations occur at bump peaks x = i − 1/2
                let frac = v.x[0].fract();
                assert!((frac - 0.5).abs() < 1e-12, "violation at {:?}", v.x);
                combos += 1;
            }
        }
        assert_eq!(combos, 20);
    }

    #[test]
    fn c0_tail_of_counterexample_is_next_peak() {
        let g = counterexample_density();
        let tail = check_c0_tail(&g, &[10.0]);
        assert!((tail[0].1 - 1.0 / 11.0).abs() < 1e-3, "tail {}", tail[0].1);
    }

    #[test]
    fn c0_tail_zero_outside_support() {
        let t = triangular(1);
        let tail = check_c0_tail(&t, &[2.0]);
        assert_eq!(tail[0].1, 0.0);
    }

    #[test]
    fn c0_tail_nonincreasing_across_catalog() {
        let radii = [1.0, 2.0, 4.0, 8.0];
        for d in catalog() {
            let tails = check_c0_tail(&d, &radii);
            for w in tails.windows(2) {
                assert!(
                    w[1].1 <= w[0].1 + 1e-12,
                    "{}: {:?} then {:?}",
                    d.name(),
                    w[0],
                    w[1]
                );
            }
        }
    }

    #[test]
    fn catalog_pdfs_have_unit_mass_on_declared_boxes() {
        for entry in catalog_entries() {
            if !entry.density.flags().is_pdf {
                continue;
            }
            let mass = entry.mass_grid.integrate(|x| entry.density.eval(x));
            assert!(
                (mass - 1.0).abs() < 1e-6,
                "{}: mass {} on {}",
                entry.density.name(),
                mass,
                entry.mass_grid.descriptor()
            );
        }
    }

    #[test]
    fn counterexample_entry_flags_and_mass() {
        let d = lookup("counterexample").unwrap();
        assert!(!d.flags().is_pdf);
        assert!(d.flags().in_c0);
        let mass = counterexample_l1(1e-5).unwrap();
        assert!((mass.partial_sum - 0.6137).abs() < 1e-3);
    }

    #[test]
    fn cauchy_entry_carries_certificate() {
        let d = lookup("cauchy").unwrap();
        let vp = d.v_params().unwrap();
        assert!((vp.beta - 2.0 / std::f64::consts::PI).abs() < 1e-15);
        assert_eq!(vp.theta, 1.0);
    }

    #[test]
    fn catalog_nonnegative_on_samples() {
        for d in catalog() {
            let n = d.dim();
            for j in -50..=50 {
                let x = vec![j as f64 / 7.0; n];
                assert!(d.eval(&x) >= 0.0, "{} at {:?}", d.name(), x);
            }
        }
    }

    #[test]
    fn compactly_supported_entries_vanish_outside_radius() {
        for d in catalog() {
            if !d.flags().in_cc {
                continue;
            }
            let r = d.support_radius().expect("compact support needs a radius");
            let n = d.dim();
            for j in 1..=32 {
                let t = r + j as f64 * 0.37;
                let mut x = vec![0.0; n];
                x[0] = t;
                assert_eq!(d.eval(&x), 0.0, "{} at {:?}", d.name(), x);
            }
        }
    }
}

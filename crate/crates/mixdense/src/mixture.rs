//! Densities and finite location-scale mixtures.
//!
//! A mixture over a kernel density `g` evaluates as
//! `h(x) = Σ cᵢ σᵢ⁻ⁿ g((x − μᵢ)/σᵢ)` with weights on the probability
//! simplex and strictly positive scales. The equivalent `(c, z, k)` form
//! with `k = 1/σ`, `z = μ/σ` is accepted at construction and converted;
//! `(c, μ, σ)` is the single canonical storage form.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::neumaier_sum;

/// Simplex tolerance enforced on every constructed mixture.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Components with weight below this are dropped at construction. A zero
/// weight would make the remainder scale rule `σ = (2cC/ε)^{1/n}` degenerate.
pub const WEIGHT_DROP_TOL: f64 = 1e-14;

/// Function-class membership flags carried by a [`Density`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassFlags {
    /// Nonnegative with unit integral.
    pub is_pdf: bool,
    /// Continuous and vanishing at infinity.
    pub in_c0: bool,
    /// Continuous with compact support.
    pub in_cc: bool,
    /// Continuous and bounded.
    pub in_cb: bool,
}

/// Certificate that a density is dominated by `β (1 + ‖x‖₂)^{-n-θ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VParams {
    pub beta: f64,
    pub theta: f64,
}

type EvalFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// An evaluable density on `R^n` with optional support/bound metadata.
///
/// Immutable after construction; evaluation is pure and thread-safe.
#[derive(Clone)]
pub struct Density {
    name: String,
    dim: usize,
    eval: Arc<EvalFn>,
    support_radius: Option<f64>,
    sup_bound: Option<f64>,
    flags: ClassFlags,
    v_params: Option<VParams>,
}

impl fmt::Debug for Density {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Density")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("support_radius", &self.support_radius)
            .field("sup_bound", &self.sup_bound)
            .field("flags", &self.flags)
            .field("v_params", &self.v_params)
            .finish()
    }
}

impl Density {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        assert!(dim >= 1, "density dimension must be positive");
        Density {
            name: name.into(),
            dim,
            eval: Arc::new(eval),
            support_radius: None,
            sup_bound: None,
            flags: ClassFlags::default(),
            v_params: None,
        }
    }

    /// Radius `R` with `f = 0` outside the closed ball of radius `R`.
    pub fn with_support_radius(mut self, r: f64) -> Self {
        assert!(r >= 0.0);
        self.support_radius = Some(r);
        self
    }

    /// Constant `C` with `f ≤ C` everywhere.
    pub fn with_sup_bound(mut self, c: f64) -> Self {
        assert!(c >= 0.0);
        self.sup_bound = Some(c);
        self
    }

    pub fn with_flags(mut self, flags: ClassFlags) -> Self {
        self.flags = flags;
        self
    }

    pub fn with_v_params(mut self, beta: f64, theta: f64) -> Self {
        assert!(beta > 0.0 && theta > 0.0);
        self.v_params = Some(VParams { beta, theta });
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support_radius(&self) -> Option<f64> {
        self.support_radius
    }

    pub fn sup_bound(&self) -> Option<f64> {
        self.sup_bound
    }

    pub fn flags(&self) -> ClassFlags {
        self.flags
    }

    pub fn v_params(&self) -> Option<VParams> {
        self.v_params
    }

    /// Evaluate at a point. The point dimension must match `dim()`.
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        (self.eval)(x)
    }

    /// Checked evaluation for untrusted input dimensions.
    pub fn try_eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok((self.eval)(x))
    }
}

/// Returns the dilated density `x ↦ kⁿ g(kx − z)`.
///
/// Dilation preserves unit mass: substituting `u = kx − z` shows the
/// integral is unchanged.
pub fn dilate_component(g: &Density, k: f64, z: &[f64]) -> Result<Density> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::invalid(format!("dilation factor must be positive and finite, got {k}")));
    }
    if z.len() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            got: z.len(),
        });
    }
    let n = g.dim();
    let scale = k.powi(n as i32);
    let inner = g.clone();
    let shift = z.to_vec();
    let name = format!("dilate({},k={k})", g.name());
    let mut out = Density::new(name, n, move |x: &[f64]| {
        let mut small = [0.0_f64; 8];
        let mut heap;
        let y: &mut [f64] = if x.len() <= 8 {
            &mut small[..x.len()]
        } else {
            heap = vec![0.0; x.len()];
            &mut heap
        };
        for (yi, (&xi, &zi)) in y.iter_mut().zip(x.iter().zip(shift.iter())) {
            *yi = k * xi - zi;
        }
        scale * inner.eval(y)
    })
    .with_flags(g.flags());

    if let Some(r) = g.support_radius() {
        let z_norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        out = out.with_support_radius((z_norm + r) / k);
    }
    if let Some(c) = g.sup_bound() {
        out = out.with_sup_bound(scale * c);
    }
    // The polynomial domination certificate only survives an origin-centered
    // dilation: kⁿ g(kx) ≤ β kⁿ (1 + ‖x‖)^{-n-θ}.
    if z.iter().all(|&v| v == 0.0) {
        if let Some(vp) = g.v_params() {
            out = out.with_v_params(vp.beta * scale, vp.theta);
        }
    }
    Ok(out)
}

/// One mixture component, borrowed from flat storage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component<'a> {
    pub weight: f64,
    pub location: &'a [f64],
    pub scale: f64,
}

/// Owned component record used when building mixtures.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSpec {
    pub weight: f64,
    pub location: Vec<f64>,
    pub scale: f64,
}

impl ComponentSpec {
    pub fn new(weight: f64, location: Vec<f64>, scale: f64) -> Self {
        ComponentSpec {
            weight,
            location,
            scale,
        }
    }
}

/// A finite location-scale mixture over a shared kernel density.
///
/// Locations are stored flat (`m × n`, row-major) so million-component
/// mixtures stay cache- and allocator-friendly.
#[derive(Debug, Clone)]
pub struct Mixture {
    kernel: Density,
    weights: Vec<f64>,
    locations: Vec<f64>,
    scales: Vec<f64>,
}

impl Mixture {
    /// Builds a mixture, dropping sub-threshold weights and validating the
    /// simplex and scale invariants. Does not renormalize.
    pub fn new(kernel: Density, components: Vec<ComponentSpec>) -> Result<Mixture> {
        let mix = Self::assemble(kernel, components)?;
        let violations = mix.validate();
        if let Some(v) = violations.first() {
            return Err(Error::InvariantViolation(v.to_string()));
        }
        Ok(mix)
    }

    /// Builds a mixture, rescaling the weights to sum to one exactly (the
    /// residual after rescaling is folded into the largest weight).
    ///
    /// Weights more negative than `-1e-12` are rejected; tiny negatives from
    /// quadrature noise are clamped to zero and dropped.
    pub fn new_normalized(kernel: Density, mut components: Vec<ComponentSpec>) -> Result<Mixture> {
        for (i, c) in components.iter().enumerate() {
            if c.weight < -1e-12 {
                return Err(Error::InvariantViolation(format!(
                    "component {}: negative weight {}",
                    i + 1,
                    c.weight
                )));
            }
        }
        components.retain(|c| c.weight > WEIGHT_DROP_TOL);
        if components.is_empty() {
            return Err(Error::invalid("mixture has no components with positive weight"));
        }
        let total = neumaier_sum(components.iter().map(|c| c.weight));
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::invalid(format!("weight total {total} is not a positive finite number")));
        }
        for c in components.iter_mut() {
            c.weight /= total;
        }
        // Fold the rescaling residual into the largest weight.
        let residual = 1.0 - neumaier_sum(components.iter().map(|c| c.weight));
        let argmax = components
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.weight.total_cmp(&b.1.weight))
            .map(|(i, _)| i)
            .expect("non-empty");
        components[argmax].weight += residual;
        Self::new(kernel, components)
    }

    /// Builds from the `(c, z, k)` parameterization `Σ cᵢ kᵢⁿ g(kᵢx − zᵢ)`,
    /// converting via `μ = z/k`, `σ = 1/k`.
    pub fn from_scaled(kernel: Density, components: Vec<(f64, Vec<f64>, f64)>) -> Result<Mixture> {
        let specs = components
            .into_iter()
            .map(|(c, z, k)| {
                if !(k > 0.0) {
                    return Err(Error::invalid(format!("nonpositive dilation factor {k}")));
                }
                let mu = z.iter().map(|zi| zi / k).collect();
                Ok(ComponentSpec::new(c, mu, 1.0 / k))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(kernel, specs)
    }

    fn assemble(kernel: Density, components: Vec<ComponentSpec>) -> Result<Mixture> {
        let n = kernel.dim();
        let kept: Vec<&ComponentSpec> = components
            .iter()
            .filter(|c| c.weight.abs() > WEIGHT_DROP_TOL || c.weight < 0.0)
            .collect();
        if kept.is_empty() {
            return Err(Error::invalid("mixture has no components with positive weight"));
        }
        let m = kept.len();
        let mut weights = Vec::with_capacity(m);
        let mut locations = Vec::with_capacity(m * n);
        let mut scales = Vec::with_capacity(m);
        for c in kept {
            if c.location.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: c.location.len(),
                });
            }
            weights.push(c.weight);
            locations.extend_from_slice(&c.location);
            scales.push(c.scale);
        }
        Ok(Mixture {
            kernel,
            weights,
            locations,
            scales,
        })
    }

    pub fn kernel(&self) -> &Density {
        &self.kernel
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn component(&self, i: usize) -> Component<'_> {
        let n = self.dim();
        Component {
            weight: self.weights[i],
            location: &self.locations[i * n..(i + 1) * n],
            scale: self.scales[i],
        }
    }

    pub fn components(&self) -> impl Iterator<Item = Component<'_>> + '_ {
        (0..self.len()).map(move |i| self.component(i))
    }

    /// Evaluates `Σ cᵢ σᵢ⁻ⁿ g((x − μᵢ)/σᵢ)` at `x`.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(self.evaluator().value(x))
    }

    /// Precomputes per-component inverse scales for repeated evaluation.
    pub fn evaluator(&self) -> MixtureEvaluator<'_> {
        let n = self.dim() as i32;
        let inv_scales: Vec<f64> = self.scales.iter().map(|s| 1.0 / s).collect();
        let norms: Vec<f64> = inv_scales
            .iter()
            .zip(&self.weights)
            .map(|(inv, w)| w * inv.powi(n))
            .collect();
        MixtureEvaluator {
            mixture: self,
            inv_scales,
            norms,
        }
    }

    /// A [`Density`] view of this mixture, for reuse with the norm and
    /// divergence routines. Marked as a pdf view (non-negative, unit mass up
    /// to quadrature).
    pub fn as_density(&self) -> Density {
        let owned = self.clone();
        let n = self.dim();
        let name = format!("mixture({},m={})", self.kernel.name(), self.len());
        let flags = ClassFlags {
            is_pdf: self.kernel.flags().is_pdf,
            ..ClassFlags::default()
        };
        Density::new(name, n, move |x: &[f64]| owned.evaluator_value_slow(x)).with_flags(flags)
    }

    // Closure-friendly evaluation path; rebuilding the evaluator per call is
    // wasteful, so `as_density` is for convenience surfaces, not hot loops.
    fn evaluator_value_slow(&self, x: &[f64]) -> f64 {
        self.evaluator().value(x)
    }

    /// Checks every mixture invariant and reports all violations found.
    /// Reports, never fails.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let total = neumaier_sum(self.weights.iter().copied());
        if (total - 1.0).abs() > SIMPLEX_TOL {
            out.push(Violation::WeightSum { total });
        }
        for (i, &w) in self.weights.iter().enumerate() {
            if !(w >= 0.0) {
                out.push(Violation::NegativeWeight { index: i, weight: w });
            }
            if !w.is_finite() {
                out.push(Violation::NonFiniteWeight { index: i, weight: w });
            }
        }
        for (i, &s) in self.scales.iter().enumerate() {
            if !(s > 0.0) || !s.is_finite() {
                out.push(Violation::NonPositiveScale { index: i, scale: s });
            }
        }
        for (i, w) in self.locations.chunks(self.dim()).enumerate() {
            if w.iter().any(|v| !v.is_finite()) {
                out.push(Violation::NonFiniteLocation { index: i });
            }
        }
        out
    }

    /// Serializes to the JSON wire shape
    /// `{kernel: <name>, components: [{c, mu, sigma}]}`.
    ///
    /// Finite doubles round-trip bit-faithfully.
    pub fn to_json(&self) -> String {
        let wire = MixtureWire {
            kernel: self.kernel.name().to_string(),
            components: self
                .components()
                .map(|c| ComponentWire {
                    c: c.weight,
                    mu: c.location.to_vec(),
                    sigma: c.scale,
                })
                .collect(),
        };
        serde_json::to_string(&wire).expect("mixture serialization cannot fail")
    }

    /// Deserializes the JSON wire shape. The kernel is resolved by the
    /// caller (the wire format stores only the kernel name).
    pub fn from_json(json: &str, kernel: Density) -> Result<Mixture> {
        let wire: MixtureWire =
            serde_json::from_str(json).map_err(|e| Error::invalid(format!("mixture JSON: {e}")))?;
        if wire.kernel != kernel.name() {
            return Err(Error::invalid(format!(
                "kernel name mismatch: wire has {:?}, resolver supplied {:?}",
                wire.kernel,
                kernel.name()
            )));
        }
        let specs = wire
            .components
            .into_iter()
            .map(|c| ComponentSpec::new(c.c, c.mu, c.sigma))
            .collect();
        Self::new(kernel, specs)
    }
}

/// Weighted sum of kernel dilates without any simplex requirement. This is
/// the raw evaluation the mixture invariants are layered on top of; internal
/// builders use it to check positive homogeneity before renormalizing.
pub fn evaluate_components(kernel: &Density, components: &[ComponentSpec], x: &[f64]) -> Result<f64> {
    let n = kernel.dim();
    if x.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x.len(),
        });
    }
    let mut buf = vec![0.0; n];
    let mut acc = 0.0;
    for c in components {
        if c.location.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: c.location.len(),
            });
        }
        if !(c.scale > 0.0) {
            return Err(Error::InvariantViolation(format!("nonpositive scale {}", c.scale)));
        }
        let inv = 1.0 / c.scale;
        for j in 0..n {
            buf[j] = (x[j] - c.location[j]) * inv;
        }
        acc += c.weight * inv.powi(n as i32) * kernel.eval(&buf);
    }
    Ok(acc)
}

/// Reusable evaluator with precomputed inverse scales.
pub struct MixtureEvaluator<'a> {
    mixture: &'a Mixture,
    inv_scales: Vec<f64>,
    norms: Vec<f64>,
}

impl MixtureEvaluator<'_> {
    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        let n = self.mixture.dim();
        let kernel = &self.mixture.kernel;
        let mut small = [0.0_f64; 8];
        let mut heap;
        let buf: &mut [f64] = if n <= 8 {
            &mut small[..n]
        } else {
            heap = vec![0.0; n];
            &mut heap
        };
        let mut acc = 0.0;
        for i in 0..self.norms.len() {
            let inv = self.inv_scales[i];
            let loc = &self.mixture.locations[i * n..i * n + n];
            for j in 0..n {
                buf[j] = (x[j] - loc[j]) * inv;
            }
            acc += self.norms[i] * kernel.eval(buf);
        }
        acc
    }
}

/// A named mixture-invariant failure.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    WeightSum { total: f64 },
    NegativeWeight { index: usize, weight: f64 },
    NonFiniteWeight { index: usize, weight: f64 },
    NonPositiveScale { index: usize, scale: f64 },
    NonFiniteLocation { index: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::WeightSum { total } => write!(f, "weight sum = {total}, expected 1"),
            Violation::NegativeWeight { index, weight } => {
                write!(f, "negative weight {} at index {}", weight, index + 1)
            }
            Violation::NonFiniteWeight { index, weight } => {
                write!(f, "non-finite weight {} at index {}", weight, index + 1)
            }
            Violation::NonPositiveScale { index, scale } => {
                write!(f, "nonpositive scale {} at index {}", scale, index + 1)
            }
            Violation::NonFiniteLocation { index } => {
                write!(f, "non-finite location at index {}", index + 1)
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct MixtureWire {
    kernel: String,
    components: Vec<ComponentWire>,
}

#[derive(Serialize, Deserialize)]
struct ComponentWire {
    c: f64,
    mu: Vec<f64>,
    sigma: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classes::standard_normal;

    fn phi_scalar(t: f64) -> f64 {
        (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }

    fn single_normal() -> Mixture {
        Mixture::new(
            standard_normal(1),
            vec![ComponentSpec::new(1.0, vec![0.0], 1.0)],
        )
        .unwrap()
    }

    #[test]
    fn single_component_standard_normal_at_origin() {
        let mix = single_normal();
        let v = mix.evaluate(&[0.0]).unwrap();
        assert!((v - (2.0 * std::f64::consts::PI).sqrt().recip()).abs() < 1e-15);
        assert!((v - 0.398942).abs() < 1e-6);
    }

    #[test]
    fn duplicate_components_match_single() {
        let two = Mixture::new(
            standard_normal(1),
            vec![
                ComponentSpec::new(0.4, vec![0.3], 1.7),
                ComponentSpec::new(0.6, vec![0.3], 1.7),
            ],
        )
        .unwrap();
        let one = Mixture::new(
            standard_normal(1),
            vec![ComponentSpec::new(1.0, vec![0.3], 1.7)],
        )
        .unwrap();
        for i in -20..=20 {
            let x = [i as f64 / 5.0];
            let a = two.evaluate(&x).unwrap();
            let b = one.evaluate(&x).unwrap();
            assert!((a - b).abs() < 1e-15, "x={:?} {a} vs {b}", x);
        }
    }

    #[test]
    fn hand_evaluated_two_component_value() {
        // Independent scalar oracle: 0.3·φ(1) + 0.35·φ(0.5).
        let mix = Mixture::new(
            standard_normal(1),
            vec![
                ComponentSpec::new(0.3, vec![-1.0], 1.0),
                ComponentSpec::new(0.7, vec![1.0], 2.0),
            ],
        )
        .unwrap();
        let oracle = 0.3 * phi_scalar(1.0) + 0.35 * phi_scalar(0.5);
        let v = mix.evaluate(&[0.0]).unwrap();
        assert!((v - oracle).abs() < 1e-15);
        assert!((v - 0.195815).abs() < 1e-6);
    }

    #[test]
    fn evaluate_checks_dimension() {
        let mix = single_normal();
        match mix.evaluate(&[0.0, 0.0]) {
            Err(Error::DimensionMismatch { expected: 1, got: 2 }) => {}
            other => panic!("expected dimension mismatch, got {other:?}"),
        }
    }

    #[test]
    fn non_simplex_weights_rejected() {
        let err = Mixture::new(
            standard_normal(1),
            vec![
                ComponentSpec::new(0.7, vec![0.0], 1.0),
                ComponentSpec::new(0.4, vec![1.0], 1.0),
            ],
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvariantViolation(_)));
    }

    #[test]
    fn validate_reports_weight_sum_and_scale() {
        let mix = Mixture::assemble(
            standard_normal(1),
            vec![
                ComponentSpec::new(0.7, vec![0.0], 1.0),
                ComponentSpec::new(0.4, vec![1.0], 1.0),
            ],
        )
        .unwrap();
        let v = mix.validate();
        assert_eq!(v.len(), 1);
        assert!(v[0].to_string().contains("weight sum"));

        let mix = Mixture::assemble(
            standard_normal(1),
            vec![
                ComponentSpec::new(0.5, vec![0.0], 1.0),
                ComponentSpec::new(0.5, vec![1.0], 0.0),
            ],
        )
        .unwrap();
        let v = mix.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].to_string(), "nonpositive scale 0 at index 2");

        let ok = Mixture::new(
            standard_normal(1),
            vec![
                ComponentSpec::new(0.5, vec![0.0], 1.0),
                ComponentSpec::new(0.5, vec![1.0], 1.0),
            ],
        )
        .unwrap();
        assert!(ok.validate().is_empty());
    }

    #[test]
    fn zero_weight_components_dropped() {
        let mix = Mixture::new(
            standard_normal(1),
            vec![
                ComponentSpec::new(1.0, vec![0.0], 1.0),
                ComponentSpec::new(0.0, vec![5.0], 1.0),
            ],
        )
        .unwrap();
        assert_eq!(mix.len(), 1);
    }

    #[test]
    fn scaled_parameterization_converts() {
        // c·kⁿ g(kx − z) with k=2, z=1 equals c·σ⁻¹g((x−μ)/σ) with σ=1/2, μ=1/2.
        let mix = Mixture::from_scaled(standard_normal(1), vec![(1.0, vec![1.0], 2.0)]).unwrap();
        let c = mix.component(0);
        assert_eq!(c.scale, 0.5);
        assert_eq!(c.location, &[0.5]);
        let v = mix.evaluate(&[0.25]).unwrap();
        assert!((v - 2.0 * phi_scalar(2.0 * 0.25 - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn weighted_sum_is_positively_homogeneous_before_normalization() {
        let kernel = standard_normal(1);
        let comps = vec![
            ComponentSpec::new(0.2, vec![-1.0], 0.5),
            ComponentSpec::new(0.3, vec![2.0], 2.0),
        ];
        let scaled: Vec<ComponentSpec> = comps
            .iter()
            .map(|c| ComponentSpec::new(3.0 * c.weight, c.location.clone(), c.scale))
            .collect();
        for i in -8..=8 {
            let x = [i as f64 / 2.0];
            let base = evaluate_components(&kernel, &comps, &x).unwrap();
            let tripled = evaluate_components(&kernel, &scaled, &x).unwrap();
            assert!((tripled - 3.0 * base).abs() <= 1e-15 * tripled.abs().max(1.0));
        }
    }

    #[test]
    fn mixture_equals_sum_of_single_component_submixtures() {
        let kernel = standard_normal(1);
        let comps = vec![
            ComponentSpec::new(0.25, vec![-2.0], 0.7),
            ComponentSpec::new(0.35, vec![0.5], 1.3),
            ComponentSpec::new(0.40, vec![3.0], 2.1),
        ];
        let mix = Mixture::new(kernel.clone(), comps.clone()).unwrap();
        for i in -12..=12 {
            let x = [i as f64 / 3.0];
            let whole = mix.evaluate(&x).unwrap();
            let parts: f64 = comps
                .iter()
                .map(|c| {
                    c.weight
                        * Mixture::new(
                            kernel.clone(),
                            vec![ComponentSpec::new(1.0, c.location.clone(), c.scale)],
                        )
                        .unwrap()
                        .evaluate(&x)
                        .unwrap()
                })
                .sum();
            assert!((whole - parts).abs() <= 1e-15 * whole.max(1e-300));
        }
    }

    #[test]
    fn dilate_identity_matches_kernel() {
        let g = standard_normal(1);
        let d = dilate_component(&g, 1.0, &[0.0]).unwrap();
        for i in 0..64 {
            let x = [-8.0 + 0.25 * i as f64];
            assert_eq!(d.eval(&x), g.eval(&x));
        }
    }

    #[test]
    fn dilate_scales_value_at_origin() {
        let g = standard_normal(1);
        let d = dilate_component(&g, 2.0, &[0.0]).unwrap();
        let v = d.eval(&[0.0]);
        assert!((v - 2.0 * phi_scalar(0.0)).abs() < 1e-15);
        assert!((v - 0.797885).abs() < 1e-6);
    }

    #[test]
    fn dilate_rejects_nonpositive_factor() {
        let g = standard_normal(1);
        assert!(dilate_component(&g, 0.0, &[0.0]).is_err());
        assert!(dilate_component(&g, -1.0, &[0.0]).is_err());
    }

    #[test]
    fn normalized_builder_hits_simplex_exactly() {
        let comps: Vec<ComponentSpec> = (0..100_000)
            .map(|i| ComponentSpec::new(1.0 + (i % 7) as f64, vec![i as f64 * 1e-3], 1.0))
            .collect();
        let mix = Mixture::new_normalized(standard_normal(1), comps).unwrap();
        assert!(mix.validate().is_empty());
        let total = neumaier_sum(mix.weights().iter().copied());
        assert!((total - 1.0).abs() <= SIMPLEX_TOL);
    }

    #[test]
    fn json_round_trip_is_bit_faithful() {
        let mix = Mixture::new(
            standard_normal(1),
            vec![
                ComponentSpec::new(0.123456789012345e-3, vec![1.0 / 3.0], 0.1),
                ComponentSpec::new(1.0 - 0.123456789012345e-3, vec![-7.25], 3.0_f64.sqrt()),
            ],
        )
        .unwrap();
        let json = mix.to_json();
        let back = Mixture::from_json(&json, standard_normal(1)).unwrap();
        assert_eq!(mix.weights(), back.weights());
        for (a, b) in mix.components().zip(back.components()) {
            assert_eq!(a.location, b.location);
            assert_eq!(a.scale.to_bits(), b.scale.to_bits());
            assert_eq!(a.weight.to_bits(), b.weight.to_bits());
        }
    }
}

//! Small summation and special-function helpers.

/// Pairwise summation with a fixed split order. Deterministic for a given
/// input order regardless of how the values were produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 32 {
        let mut acc = 0.0;
        for &v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Neumaier compensated summation. Keeps the weight-simplex residual at the
/// last-ulp level even for component counts around 10^6.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Surface area of the unit sphere in `R^n`: `2 π^{n/2} / Γ(n/2)`.
pub fn unit_sphere_area(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI,
        n => {
            let half = n as f64 / 2.0;
            2.0 * std::f64::consts::PI.powf(half) / libm::tgamma(half)
        }
    }
}

//! Small numeric helpers shared across modules.

/// Compensated summation. Keeps validation of long uniform marginals and
/// residual norms well below the 1e-12 contract.
pub fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// log(sum exp(x_i)) with the max-shift trick. Returns -inf on empty input
/// or when every term is -inf.
pub fn logsumexp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for x in xs.clone() {
        if x > max {
            max = x;
        }
    }
    if !max.is_finite() {
        return max;
    }
    let mut sum = 0.0;
    for x in xs {
        sum += (x - max).exp();
    }
    max + sum.ln()
}

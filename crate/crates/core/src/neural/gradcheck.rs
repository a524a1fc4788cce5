//! Finite-difference gradient checking in 64-bit arithmetic.

/// A differentiable fragment whose parameters can be perturbed in place.
pub trait GradCheck {
    fn loss(&self) -> f64;
    /// Analytic gradients, one flat vector per tensor, in `params_mut` order.
    fn gradients(&self) -> Vec<Vec<f64>>;
    fn params_mut(&mut self) -> Vec<&mut [f64]>;
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    /// max |g_a − g_n| / max(1e-8, |g_a| + |g_n|)
    pub max_relative_error: f64,
    /// (tensor index, element index) of the worst entry.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
}

/// Step for [`grad_check`]. With a fourth-order stencil a fairly large step
/// keeps rounding noise below 1e-13 while truncation stays negligible.
pub const DEFAULT_EPSILON: f64 = 1e-2;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares analytic gradients with five-point central differences
/// (truncation error O(ε⁴)) for every parameter.
pub fn grad_check<M: GradCheck>(model: &mut M, epsilon: f64) -> GradCheckReport {
    let analytic = model.gradients();
    let mut report = GradCheckReport::default();
    for (t, grad) in analytic.iter().enumerate() {
        for (k, &g) in grad.iter().enumerate() {
            let original = model.params_mut()[t][k];
            let mut at = |offset: f64| {
                model.params_mut()[t][k] = original + offset;
                model.loss()
            };
            let (p2, p1, m1, m2) = (at(2.0 * epsilon), at(epsilon), at(-epsilon), at(-2.0 * epsilon));
            model.params_mut()[t][k] = original;

            let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * epsilon);
            let err = relative_error(g, numeric);
            report.checked += 1;
            if err > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = err.max(report.max_relative_error);
                report.worst = Some((t, k));
            }
        }
    }
    report
}

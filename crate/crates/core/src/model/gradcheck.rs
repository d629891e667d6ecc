/// Largest componentwise relative error between `analytic` and central
/// differences of `eval` around `params`.
///
/// Each coordinate is perturbed by `h * max(1, |param|)`. The relative error
/// of a component is `|a - n| / max(|a|, |n|, 1e-6)`, so components whose
/// true gradient is essentially zero are compared in absolute terms.
pub fn finite_difference_check(eval: impl Fn(&[f64]) -> f64, params: &[f64], analytic: &[f64], h: f64) -> f64 {
    assert_eq!(params.len(), analytic.len(), "one analytic gradient per parameter");
    let mut work = params.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let step = h * params[i].abs().max(1.0);
        work[i] = params[i] + step;
        let up = eval(&work);
        work[i] = params[i] - step;
        let down = eval(&work);
        work[i] = params[i];
        let numeric = (up - down) / (2.0 * step);
        let a = analytic[i];
        let err = libm::fabs(a - numeric) / libm::fabs(a).max(libm::fabs(numeric)).max(1e-6);
        worst = worst.max(if err.is_nan() { f64::INFINITY } else { err });
    }
    worst
}

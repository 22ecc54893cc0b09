//! Central finite-difference audit of the analytic model gradients.

use super::model::{model_backward, predict, Mode, ModelParams};

/// Gradients smaller than this are compared absolutely rather than relatively.
pub const REL_ERR_FLOOR: f64 = 1e-6;
/// Model-level step. At 1e-6 the loss roundoff (~1e-16 relative) already
/// reaches 1e-4 relative error on gradient entries near 1e-6.
pub const DEFAULT_STEP: f64 = 1e-5;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Parameter path and flat index of the worst entry, e.g. `layer1.W_f[3]`.
    pub worst: String,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
    pub passed: bool,
}

/// Compare `analytic` against central differences of `loss` around `p`.
pub fn compare_gradients(
    p: &ModelParams,
    analytic: &ModelParams,
    loss: impl Fn(&ModelParams) -> f64,
    step: f64,
    tol: f64,
) -> GradCheckReport {
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: String::new(),
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
        passed: true,
    };
    let mut probe = p.clone();
    let names: Vec<String> = p.named_tensors().into_iter().map(|(n, _)| n).collect();
    let grads = analytic.named_tensors();
    for (ti, name) in names.iter().enumerate() {
        let len = grads[ti].1.len();
        for k in 0..len {
            let orig = probe.tensors_mut()[ti].data()[k];
            probe.tensors_mut()[ti].data_mut()[k] = orig + step;
            let up = loss(&probe);
            probe.tensors_mut()[ti].data_mut()[k] = orig - step;
            let down = loss(&probe);
            probe.tensors_mut()[ti].data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * step);
            let a = grads[ti].1.data()[k];
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_rel_err || err.is_nan() {
                report.max_rel_err = err;
                report.worst = format!("{name}[{k}]");
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    report.passed = report.max_rel_err <= tol;
    report
}

/// Eval-mode check of the squared-error gradient for a single window.
pub fn grad_check(p: &ModelParams, window: &[Vec<f64>], target: f64, tol: f64) -> GradCheckReport {
    grad_check_l2(p, window, target, 0.0, tol)
}

pub fn grad_check_l2(p: &ModelParams, window: &[Vec<f64>], target: f64, l2: f64, tol: f64) -> GradCheckReport {
    let (_, g) = model_backward::<rand_chacha::ChaCha8Rng>(window, target, p, Mode::Eval, None, l2)
        .expect("finite loss at the check point");
    let loss = |q: &ModelParams| {
        let e = predict(window, q).map_or(f64::NAN, |y| y - target);
        e * e + l2 * q.sum_sq()
    };
    compare_gradients(p, &g, loss, DEFAULT_STEP, tol)
}

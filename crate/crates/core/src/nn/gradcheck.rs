use super::params::{Grads, ParamId, ParamStore};
use super::tape::{NodeId, Tape};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    /// Analytic and numeric gradient at the worst entry.
    pub worst_values: (f64, f64),
    pub checked: usize,
}

/// Step for [`grad_check`]. Round-off in `f(x+e) - f(x-e)` grows like
/// `|f| * 1e-16 / e`, which swamps gradients near 1e-7 on summed sequence
/// losses of order 10 to 100 at smaller steps; the fourth-order stencil
/// keeps the truncation error at 2e-3 below that.
pub const DEFAULT_EPS: f64 = 2e-3;

/// Compare tape gradients of a scalar loss against the central difference
/// `(8 (f(x+e) - f(x-e)) - (f(x+2e) - f(x-2e))) / 12e`. Relative error is
/// `|a - n| / max(|a|, |n|, 1e-8)`. `build` must be deterministic: it is
/// called on evaluation tapes only.
pub fn grad_check<F>(store: &mut ParamStore, ids: &[ParamId], eps: f64, build: F) -> GradCheck
where
    F: Fn(&mut Tape) -> NodeId,
{
    let mut grads = Grads::new(store);
    {
        let mut tape = Tape::new(store);
        let loss = build(&mut tape);
        tape.backward(&[(loss, 1.0)], &mut grads);
    }
    let eval = |store: &ParamStore| {
        let mut tape = Tape::new(store);
        let loss = build(&mut tape);
        tape.scalar(loss)
    };
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: None,
        worst_values: (0.0, 0.0),
        checked: 0,
    };
    for &id in ids {
        let n = store.get(id).len();
        for k in 0..n {
            let analytic = grads.get(id).map_or(0.0, |g| g[k]);
            let orig = store.get(id).data[k];
            store.get_mut(id).data[k] = orig + eps;
            let up = eval(store);
            store.get_mut(id).data[k] = orig - eps;
            let down = eval(store);
            store.get_mut(id).data[k] = orig;
            store.get_mut(id).data[k] = orig + 2.0 * eps;
            let up2 = eval(store);
            store.get_mut(id).data[k] = orig - 2.0 * eps;
            let down2 = eval(store);
            store.get_mut(id).data[k] = orig;
            let numeric = (8.0 * (up - down) - (up2 - down2)) / (12.0 * eps);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            report.checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((store.name(id).to_string(), k));
                report.worst_values = (analytic, numeric);
            }
        }
    }
    report
}

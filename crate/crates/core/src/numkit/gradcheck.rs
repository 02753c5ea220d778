use super::params::ParamSet;

/// How [`grad_check_with`] samples coordinates.
#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Coordinates with a nonzero analytic gradient checked per tensor.
    pub max_active_per_tensor: usize,
    /// Coordinates with a zero analytic gradient checked per tensor; catches
    /// gradients that were never propagated.
    pub max_inactive_per_tensor: usize,
    /// Relative errors use `max(|analytic|, |numeric|, floor)` as the
    /// denominator.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-4,
            max_active_per_tensor: 48,
            max_inactive_per_tensor: 8,
            floor: 1e-6,
        }
    }
}

/// Compares the analytic gradients stored in `params` against central
/// finite differences of `loss_fn` and returns the largest relative error.
pub fn grad_check<F>(loss_fn: F, params: &ParamSet, eps: f64) -> f64
where
    F: Fn(&ParamSet) -> f64,
{
    grad_check_with(
        loss_fn,
        params,
        GradCheckOptions {
            eps,
            ..GradCheckOptions::default()
        },
    )
}

pub fn grad_check_with<F>(loss_fn: F, params: &ParamSet, opts: GradCheckOptions) -> f64
where
    F: Fn(&ParamSet) -> f64,
{
    let mut probe = params.values_only();
    let mut worst: f64 = 0.0;
    for (name, p) in params.iter() {
        let grad = p.grad.data();
        let (active, inactive): (Vec<usize>, Vec<usize>) =
            (0..grad.len()).partition(|&i| grad[i] != 0.0);
        let chosen = strided(&active, opts.max_active_per_tensor)
            .into_iter()
            .chain(strided(&inactive, opts.max_inactive_per_tensor));
        for i in chosen {
            let orig = p.value.data()[i];
            probe.value_mut(name).data_mut()[i] = orig + opts.eps;
            let up = loss_fn(&probe);
            probe.value_mut(name).data_mut()[i] = orig - opts.eps;
            let down = loss_fn(&probe);
            probe.value_mut(name).data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * opts.eps);
            let analytic = grad[i];
            let denom = analytic.abs().max(numeric.abs()).max(opts.floor);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
    }
    worst
}

fn strided(idx: &[usize], max: usize) -> Vec<usize> {
    if idx.len() <= max {
        return idx.to_vec();
    }
    (0..max).map(|k| idx[k * idx.len() / max]).collect()
}

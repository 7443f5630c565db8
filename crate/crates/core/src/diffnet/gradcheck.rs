use super::ParamSet;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_error: f64,
    pub worst_coordinate: Option<usize>,
    pub checked: usize,
    /// Coordinates where the loss is not smooth at step `h` (a ReLU or
    /// clip kink lies inside the stencil), detected by disagreement between
    /// the `h` and `h/2` stencils.
    pub skipped_nonsmooth: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// Compares `analytic` against central finite differences of `loss`
/// around `params`, coordinate by coordinate, in 64-bit arithmetic.
pub fn central_difference_check(
    params: &ParamSet<f64>,
    analytic: &ParamSet<f64>,
    h: f64,
    floor: f64,
    mut loss: impl FnMut(&ParamSet<f64>) -> f64,
) -> GradCheckReport {
    let base = params.flatten();
    let grad = analytic.flatten();
    assert_eq!(base.len(), grad.len(), "gradient layout must match parameters");
    let mut probe = params.clone();
    let mut flat = base.clone();
    let mut eval = |flat: &mut Vec<f64>, i: usize, delta: f64, probe: &mut ParamSet<f64>| {
        flat[i] = base[i] + delta;
        probe.assign_flat(flat).expect("same layout");
        let v = loss(probe);
        flat[i] = base[i];
        v
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_coordinate: None,
        checked: 0,
        skipped_nonsmooth: 0,
    };
    for i in 0..base.len() {
        let fd = (eval(&mut flat, i, h, &mut probe) - eval(&mut flat, i, -h, &mut probe)) / (2.0 * h);
        let half = h / 2.0;
        let fd_half =
            (eval(&mut flat, i, half, &mut probe) - eval(&mut flat, i, -half, &mut probe)) / h;
        let scale = fd.abs().max(fd_half.abs()).max(floor);
        if (fd - fd_half).abs() > 1e-3 * scale {
            report.skipped_nonsmooth += 1;
            continue;
        }
        let denom = grad[i].abs().max(fd.abs()).max(floor);
        let rel = (grad[i] - fd).abs() / denom;
        report.checked += 1;
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_coordinate = Some(i);
        }
    }
    report
}

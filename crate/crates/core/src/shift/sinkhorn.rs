//! Entropic transport by alternating log-domain scaling.

/// Outcome of a scaling run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SinkhornRun {
    /// `<plan, cost>`, regularizer excluded.
    pub cost: f64,
    /// L1 violation of the row marginal after the last column update.
    pub violation: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Scaled-down regularization for the warm-up stages.
const ANNEAL_FACTOR: f64 = 0.5;
/// Updates spent at each warm-up stage before shrinking epsilon.
const ANNEAL_STEPS: usize = 10;
/// The marginal is measured after every this many updates at the target.
const CHECK_EVERY: usize = 5;

struct Duals<'a> {
    a: &'a [f64],
    cost: &'a [f64],
    log_a: Vec<f64>,
    log_b: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
}

impl Duals<'_> {
    fn update(&mut self, epsilon: f64) {
        let (n, m) = (self.f.len(), self.g.len());
        for i in 0..n {
            let row = &self.cost[i * m..(i + 1) * m];
            let g = &self.g;
            self.f[i] = epsilon * self.log_a[i] - epsilon * log_sum_exp((0..m).map(|j| (g[j] - row[j]) / epsilon));
        }
        for j in 0..m {
            let f = &self.f;
            let cost = self.cost;
            self.g[j] = epsilon * self.log_b[j] - epsilon * log_sum_exp((0..n).map(|i| (f[i] - cost[i * m + j]) / epsilon));
        }
    }

    fn violation(&self, epsilon: f64) -> f64 {
        let m = self.g.len();
        (0..self.f.len())
            .map(|i| {
                let r: f64 = (0..m)
                    .map(|j| ((self.f[i] + self.g[j] - self.cost[i * m + j]) / epsilon).exp())
                    .sum();
                (r - self.a[i]).abs()
            })
            .sum()
    }
}

/// Runs the dual updates `f_i = ε log a_i − ε LSE_j((g_j − C_ij)/ε)` and the
/// symmetric `g` update until the row marginal is within `tol` (L1) or
/// `max_iter` passes are spent. The marginal is checked every few passes
/// and always after the last one. Zero-mass entries must be removed by the
/// caller.
///
/// The duals are warm-started by a short schedule of larger regularizations
/// that halves down to `epsilon`; every pass counts toward `max_iter`. The
/// fixed point, and hence the returned plan, is that of `epsilon` alone.
pub(crate) fn sinkhorn_log(a: &[f64], b: &[f64], cost: &[f64], epsilon: f64, max_iter: usize, tol: f64) -> SinkhornRun {
    let mut d = Duals {
        a,
        cost,
        log_a: a.iter().map(|x| x.ln()).collect(),
        log_b: b.iter().map(|x| x.ln()).collect(),
        f: vec![0.0; a.len()],
        g: vec![0.0; b.len()],
    };
    let mut iterations = 0;

    let max_cost = cost.iter().copied().fold(0.0, f64::max);
    let mut stage = max_cost.max(epsilon);
    while stage > epsilon && iterations < max_iter {
        for _ in 0..ANNEAL_STEPS.min(max_iter - iterations) {
            d.update(stage);
            iterations += 1;
        }
        stage = (stage * ANNEAL_FACTOR).max(epsilon);
    }

    let mut violation = f64::INFINITY;
    while iterations < max_iter {
        iterations += 1;
        d.update(epsilon);
        if iterations % CHECK_EVERY != 0 && iterations < max_iter {
            continue;
        }
        violation = d.violation(epsilon);
        if violation < tol {
            break;
        }
    }

    let m = b.len();
    let mut total = 0.0;
    for i in 0..a.len() {
        for j in 0..m {
            let c = cost[i * m + j];
            total += ((d.f[i] + d.g[j] - c) / epsilon).exp() * c;
        }
    }
    SinkhornRun {
        cost: total,
        violation,
        iterations,
        converged: violation < tol,
    }
}

//! Small dense bound-constrained and inequality-constrained minimization.
//!
//! [`minimize_box`] is a projected limited-memory BFGS method: variables at an
//! active bound are frozen, the quasi-Newton direction is taken in the free
//! subspace and a projected Armijo backtracking search keeps iterates in the
//! box. [`solve`] wraps it in an augmented Lagrangian loop for general
//! inequality constraints `c(x) <= 0`.

use std::collections::VecDeque;

/// Problem with box bounds and inequality constraints `c_j(x) <= 0`.
pub trait Problem {
    fn dim(&self) -> usize;

    fn lower(&self) -> &[f64];

    fn upper(&self) -> &[f64];

    fn num_constraints(&self) -> usize {
        0
    }

    /// Objective value; fills `cons` (length `num_constraints`).
    fn evaluate(&self, x: &[f64], cons: &mut [f64]) -> f64;

    /// Writes `∇f(x) + Σ_j w_j ∇c_j(x)` into `grad`.
    fn gradient(&self, x: &[f64], weights: &[f64], grad: &mut [f64]);

    /// Objective and constraints, then the gradient with weights `w_j = weight(j, c_j)`.
    ///
    /// Problems that share work between the two passes override this.
    fn evaluate_with_gradient(
        &self,
        x: &[f64],
        cons: &mut [f64],
        weight: &dyn Fn(usize, f64) -> f64,
        weights: &mut [f64],
        grad: &mut [f64],
    ) -> f64 {
        let f = self.evaluate(x, cons);
        for (j, w) in weights.iter_mut().enumerate() {
            *w = weight(j, cons[j]);
        }
        self.gradient(x, weights, grad);
        f
    }

    /// Distance below zero within which constraint `j` already contributes
    /// penalty curvature to Newton steps. A positive margin keeps steps from
    /// overshooting into a stiff penalty, at the price of shorter steps near it.
    fn curvature_margin(&self, _j: usize) -> f64 {
        0.0
    }

    /// Writes the dense row-major `n x n` matrix
    /// `∇²f + Σ_j w_j ∇²c_j + Σ_j r_j ∇c_j ∇c_jᵀ` into `hess`.
    ///
    /// Returns `false` when the problem has no second-order information, in
    /// which case the solver falls back to quasi-Newton directions.
    fn hessian(&self, _x: &[f64], _w: &[f64], _r: &[f64], _hess: &mut [f64]) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxOptions {
    pub max_iterations: usize,
    /// Projected-gradient infinity norm at which to stop.
    pub gradient_tol: f64,
    /// Relative objective decrease below which the iteration counts as stalled.
    pub value_tol: f64,
    pub memory: usize,
}

impl Default for BoxOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tol: 1e-8,
            value_tol: 1e-13,
            memory: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoxStatus {
    Converged,
    Stalled,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct BoxResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub status: BoxStatus,
    pub iterations: usize,
    pub projected_gradient: f64,
    /// Objective after each accepted step, starting with the initial point.
    pub history: Vec<f64>,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, &l), &u) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.max(l).min(u);
    }
}

/// Infinity norm of `P(x - g) - x`.
pub fn projected_gradient_norm(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .zip(lower.iter().zip(upper))
        .map(|((&xi, &gi), (&l, &u))| ((xi - gi).max(l).min(u) - xi).abs())
        .fold(0.0, f64::max)
}

/// Solves `a x = rhs` in place for a symmetric positive definite `m x m`
/// row-major matrix. Returns `false` when the factorization breaks down.
pub(crate) fn cholesky_solve(a: &mut [f64], m: usize, rhs: &mut [f64]) -> bool {
    for j in 0..m {
        let diag = a[j * m + j] - dot(&a[j * m..j * m + j], &a[j * m..j * m + j]);
        if !(diag > 0.0) || !diag.is_finite() {
            return false;
        }
        let l = diag.sqrt();
        a[j * m + j] = l;
        for i in j + 1..m {
            let mut v = a[i * m + j];
            for k in 0..j {
                v -= a[i * m + k] * a[j * m + k];
            }
            a[i * m + j] = v / l;
        }
    }
    for i in 0..m {
        rhs[i] = (rhs[i] - dot(&a[i * m..i * m + i], &rhs[..i])) / a[i * m + i];
    }
    for i in (0..m).rev() {
        let mut v = rhs[i];
        for k in i + 1..m {
            v -= a[k * m + i] * rhs[k];
        }
        rhs[i] = v / a[i * m + i];
    }
    true
}

/// Damped Newton step on the free variables: the reduced Hessian is shifted by
/// `damping` times its largest diagonal entry, and further until it factors.
/// Active variables get the steepest-descent component.
fn newton_direction(hess: &[f64], g: &[f64], free: &[bool], damping: f64, d: &mut [f64]) -> bool {
    let n = g.len();
    let idx: Vec<usize> = (0..n).filter(|&i| free[i]).collect();
    let m = idx.len();
    for i in 0..n {
        d[i] = if free[i] { 0.0 } else { -g[i] };
    }
    if m == 0 {
        return true;
    }
    let scale = idx
        .iter()
        .fold(0.0_f64, |a, &i| a.max(hess[i * n + i].abs()))
        .max(1e-12);
    let mut shift = damping * scale;
    for _ in 0..60 {
        let mut a = Vec::with_capacity(m * m);
        for &r in &idx {
            for &c in &idx {
                a.push(hess[r * n + c] + if r == c { shift } else { 0.0 });
            }
        }
        let mut rhs: Vec<f64> = idx.iter().map(|&i| -g[i]).collect();
        if cholesky_solve(&mut a, m, &mut rhs) {
            for (k, &i) in idx.iter().enumerate() {
                d[i] = rhs[k];
            }
            return true;
        }
        shift = if shift < 1e-8 * scale {
            1e-8 * scale
        } else {
            shift * 10.0
        };
    }
    false
}

/// Limited-memory BFGS correction pairs `(s, y, 1 / s·y)`.
struct Model(VecDeque<(Vec<f64>, Vec<f64>, f64)>);

impl Model {
    fn reset(&mut self) {
        self.0.clear();
    }

    fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Two-loop recursion restricted to the free subspace; zero elsewhere.
    fn direction(&self, g: &[f64], free: &[bool], d: &mut [f64]) {
        let n = g.len();
        let mem = &self.0;
        let mut alpha = vec![0.0; mem.len()];
        for i in 0..n {
            d[i] = if free[i] { -g[i] } else { 0.0 };
        }
        for (k, (s, y, rho)) in mem.iter().enumerate().rev() {
            let a = rho
                * (0..n)
                    .filter(|&i| free[i])
                    .map(|i| s[i] * d[i])
                    .sum::<f64>();
            alpha[k] = a;
            for i in 0..n {
                if free[i] {
                    d[i] -= a * y[i];
                }
            }
        }
        if let Some((s, y, _)) = mem.back() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|v| *v *= gamma);
        }
        for (k, (s, y, rho)) in mem.iter().enumerate() {
            let b = rho
                * (0..n)
                    .filter(|&i| free[i])
                    .map(|i| y[i] * d[i])
                    .sum::<f64>();
            for i in 0..n {
                if free[i] {
                    d[i] += s[i] * (alpha[k] - b);
                }
            }
        }
    }

    fn update(&mut self, s: Vec<f64>, y: Vec<f64>, memory: usize) {
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if self.0.len() == memory {
                self.0.pop_front();
            }
            self.0.push_back((s, y, 1.0 / sy));
        }
    }
}

/// Minimizes `fun` over the box `[lower, upper]`.
///
/// `fun(x, Some(g))` returns the value and writes the gradient; `fun(x, None)`
/// only returns the value. Directions come from limited-memory BFGS on the
/// variables not held at a bound.
pub fn minimize_box<F>(
    fun: F,
    lower: &[f64],
    upper: &[f64],
    x0: &[f64],
    opts: &BoxOptions,
) -> BoxResult
where
    F: FnMut(&[f64], Option<&mut [f64]>) -> f64,
{
    minimize_box_impl(fun, None, lower, upper, x0, opts)
}

/// Projected Newton variant of [`minimize_box`].
///
/// `hess(x, h)` writes the dense row-major Hessian at `x` and returns `false`
/// if it is unavailable there, in which case a quasi-Newton step is taken.
/// Variables within a small distance of a bound that the gradient pushes
/// against are held fixed for the step.
pub fn minimize_box_newton<F, H>(
    fun: F,
    mut hess: H,
    lower: &[f64],
    upper: &[f64],
    x0: &[f64],
    opts: &BoxOptions,
) -> BoxResult
where
    F: FnMut(&[f64], Option<&mut [f64]>) -> f64,
    H: FnMut(&[f64], &mut [f64]) -> bool,
{
    minimize_box_impl(fun, Some(&mut hess), lower, upper, x0, opts)
}

/// Relative Newton decrement below which the minimizer stops.
const DECREMENT_TOL: f64 = 1e-11;

type HessianFn<'a> = &'a mut dyn FnMut(&[f64], &mut [f64]) -> bool;

fn minimize_box_impl<F>(
    mut fun: F,
    mut hess: Option<HessianFn<'_>>,
    lower: &[f64],
    upper: &[f64],
    x0: &[f64],
    opts: &BoxOptions,
) -> BoxResult
where
    F: FnMut(&[f64], Option<&mut [f64]>) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let mut g = vec![0.0; n];
    let mut f = fun(&x, Some(&mut g));
    let mut history = vec![f];
    let mut model = Model(VecDeque::new());
    let mut d = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut status = BoxStatus::MaxIterations;
    let mut iterations = 0;
    let mut pg = projected_gradient_norm(&x, &g, lower, upper);
    let mut stall_count = 0;
    let mut h = if hess.is_some() {
        vec![0.0; n * n]
    } else {
        Vec::new()
    };
    let mut damping = 1e-4;

    if !f.is_finite() {
        return BoxResult {
            x,
            value: f,
            status: BoxStatus::Stalled,
            iterations,
            projected_gradient: pg,
            history,
        };
    }

    let steepest = |g: &[f64], free: &[bool], d: &mut [f64]| -> f64 {
        for i in 0..g.len() {
            d[i] = if free[i] { -g[i] } else { 0.0 };
        }
        let dn = d.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if dn > 0.0 {
            (1.0 / dn).min(1.0)
        } else {
            1.0
        }
    };

    while iterations < opts.max_iterations {
        if pg <= opts.gradient_tol {
            status = BoxStatus::Converged;
            break;
        }
        iterations += 1;

        // Free variables: not pinned at a bound by the gradient.
        let eps = if hess.is_some() { pg.min(1e-3) } else { 0.0 };
        let free: Vec<bool> = (0..n)
            .map(|i| {
                let at_lo = x[i] <= lower[i] + eps && g[i] > 0.0;
                let at_hi = x[i] >= upper[i] - eps && g[i] < 0.0;
                !(at_lo || at_hi)
            })
            .collect();

        let newton = match hess.as_mut() {
            Some(hf) => hf(&x, &mut h) && newton_direction(&h, &g, &free, damping, &mut d),
            None => false,
        };
        if newton && damping <= 1e-6 && -dot(&d, &g) <= DECREMENT_TOL * f.abs().max(1.0) {
            // Undamped Newton predicts no meaningful decrease.
            status = BoxStatus::Converged;
            break;
        }
        let mut used_steepest = !newton && model.is_empty();
        let mut step = 1.0;
        if newton {
            if !(dot(&d, &g) < 0.0) || d.iter().any(|v| !v.is_finite()) {
                step = steepest(&g, &free, &mut d);
                used_steepest = true;
            }
        } else if used_steepest {
            step = steepest(&g, &free, &mut d);
        } else {
            model.direction(&g, &free, &mut d);
            if dot(&d, &g) >= 0.0 || d.iter().any(|v| !v.is_finite()) {
                model.reset();
                step = steepest(&g, &free, &mut d);
                used_steepest = true;
            }
        }

        // Projected backtracking line search.
        let mut accepted = None;
        for attempt in 0..60 {
            for i in 0..n {
                x_new[i] = (x[i] + step * d[i]).max(lower[i]).min(upper[i]);
            }
            let decrease: f64 = (0..n).map(|i| g[i] * (x_new[i] - x[i])).sum();
            let f_try = fun(&x_new, Some(&mut g_new));
            if f_try.is_finite() && f_try <= f + 1e-4 * decrease && decrease <= 0.0 {
                accepted = Some(f_try);
                break;
            }
            if attempt == 30 && !used_steepest {
                // Quasi-Newton direction is poor; restart from steepest descent.
                model.reset();
                step = steepest(&g, &free, &mut d);
                used_steepest = true;
                continue;
            }
            step *= 0.5;
        }
        let Some(f_try) = accepted else {
            status = BoxStatus::Stalled;
            break;
        };

        if newton {
            // Levenberg-Marquardt style: trust full steps, damp after backtracking.
            damping = if step >= 1.0 {
                (damping * 0.25).max(1e-10)
            } else {
                (damping * 8.0).min(1e4)
            };
        }
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        model.update(s, y, opts.memory);

        let rel = (f - f_try) / f.abs().max(1.0);
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        f = f_try;
        history.push(f);
        pg = projected_gradient_norm(&x, &g, lower, upper);
        if rel <= opts.value_tol {
            stall_count += 1;
            if stall_count >= 3 {
                status = if pg <= opts.gradient_tol {
                    BoxStatus::Converged
                } else {
                    BoxStatus::Stalled
                };
                break;
            }
        } else {
            stall_count = 0;
        }
    }
    if status == BoxStatus::MaxIterations && pg <= opts.gradient_tol {
        status = BoxStatus::Converged;
    }
    BoxResult {
        x,
        value: f,
        status,
        iterations,
        projected_gradient: pg,
        history,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlOptions {
    pub max_outer_iterations: usize,
    pub feasibility_tol: f64,
    pub stationarity_tol: f64,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    pub max_penalty: f64,
    /// Use `Problem::hessian` for Newton inner steps when the problem provides it.
    pub exact_hessian: bool,
    pub inner: BoxOptions,
}

impl Default for AlOptions {
    fn default() -> Self {
        Self {
            max_outer_iterations: 200,
            feasibility_tol: 1e-6,
            stationarity_tol: 1e-6,
            initial_penalty: 10.0,
            penalty_growth: 10.0,
            max_penalty: 1e9,
            exact_hessian: false,
            inner: BoxOptions {
                max_iterations: 300,
                ..BoxOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlStatus {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct AlResult {
    pub x: Vec<f64>,
    pub objective: f64,
    pub max_violation: f64,
    pub multipliers: Vec<f64>,
    pub status: AlStatus,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    /// Merit value trace of every accepted inner step, one entry per subproblem.
    pub merit_history: Vec<Vec<f64>>,
}

/// Augmented Lagrangian: `L = f + Σ_j (max(0, λ_j + ρ c_j)² - λ_j²) / (2ρ)`.
pub fn solve<P: Problem + ?Sized>(problem: &P, x0: &[f64], opts: &AlOptions) -> AlResult {
    let n = problem.dim();
    let nc = problem.num_constraints();
    let lower = problem.lower();
    let upper = problem.upper();
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let mut lambda = vec![0.0; nc];
    let mut rho = opts.initial_penalty;
    let mut cons = vec![0.0; nc];
    let mut weights = vec![0.0; nc];
    let mut merit_history = Vec::new();
    let mut inner_iterations = 0;
    let mut prev_violation = f64::INFINITY;
    let mut status = AlStatus::MaxIterations;
    let mut outer = 0;
    let mut inner_tol = (opts.stationarity_tol * 1e3).max(1e-4);

    let violation = |c: &[f64]| c.iter().fold(0.0_f64, |a, &v| a.max(v));

    loop {
        if outer >= opts.max_outer_iterations {
            break;
        }
        outer += 1;
        let inner_opts = BoxOptions {
            gradient_tol: inner_tol,
            ..opts.inner
        };
        let res = {
            let lambda = &lambda;
            let mut cbuf = vec![0.0; nc];
            let mut wbuf = vec![0.0; nc];
            let mut hc = vec![0.0; nc];
            let mut hw = vec![0.0; nc];
            let mut hr = vec![0.0; nc];
            minimize_box_newton(
                |xv, grad| {
                    let f = match grad {
                        Some(g) => {
                            let weight = |j: usize, c: f64| (lambda[j] + rho * c).max(0.0);
                            problem.evaluate_with_gradient(xv, &mut cbuf, &weight, &mut wbuf, g)
                        }
                        None => problem.evaluate(xv, &mut cbuf),
                    };
                    let pen: f64 = (0..nc)
                        .map(|j| {
                            let t = (lambda[j] + rho * cbuf[j]).max(0.0);
                            (t * t - lambda[j] * lambda[j]) / (2.0 * rho)
                        })
                        .sum();
                    f + pen
                },
                |xv, h| {
                    if !opts.exact_hessian {
                        return false;
                    }
                    problem.evaluate(xv, &mut hc);
                    for j in 0..nc {
                        hw[j] = (lambda[j] + rho * hc[j]).max(0.0);
                        let near = lambda[j] + rho * (hc[j] + problem.curvature_margin(j)) > 0.0;
                        hr[j] = if hw[j] > 0.0 || near { rho } else { 0.0 };
                    }
                    problem.hessian(xv, &hw, &hr, h)
                },
                lower,
                upper,
                &x,
                &inner_opts,
            )
        };
        inner_iterations += res.iterations;
        merit_history.push(res.history);
        x = res.x;

        problem.evaluate(&x, &mut cons);
        let viol = violation(&cons);
        for j in 0..nc {
            lambda[j] = (lambda[j] + rho * cons[j]).max(0.0);
        }

        // Stationarity of the Lagrangian at the updated multipliers.
        weights.copy_from_slice(&lambda);
        let mut grad = vec![0.0; n];
        problem.gradient(&x, &weights, &mut grad);
        let stationarity = projected_gradient_norm(&x, &grad, lower, upper);

        if viol <= opts.feasibility_tol && stationarity <= opts.stationarity_tol {
            status = AlStatus::Converged;
            break;
        }
        if viol <= opts.feasibility_tol
            && res.status == BoxStatus::Stalled
            && inner_tol <= opts.stationarity_tol
        {
            // No further progress possible at this precision.
            break;
        }
        if viol > 0.25 * prev_violation && viol > opts.feasibility_tol {
            rho = (rho * opts.penalty_growth).min(opts.max_penalty);
        }
        prev_violation = viol;
        inner_tol = (inner_tol * 0.1).max(opts.stationarity_tol);
    }

    let objective = problem.evaluate(&x, &mut cons);
    AlResult {
        max_violation: violation(&cons),
        x,
        objective,
        multipliers: lambda,
        status,
        outer_iterations: outer,
        inner_iterations,
        merit_history,
    }
}

//! Small dense unconstrained solvers for the per-pixel fits: L-BFGS under
//! three line searches, gradient descent, nonlinear conjugate gradient and
//! Gauss-Newton. Problems are 1-3 DOF; everything is allocation-light and
//! strictly deterministic.

use serde::{Deserialize, Serialize};

/// Objective with analytic gradient.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    /// Returns the value and fills `grad`.
    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

/// Sum-of-squares objective exposing residuals and Jacobian, for
/// Gauss-Newton.
pub trait LeastSquares: Objective {
    fn residual_count(&self) -> usize;
    /// Fills `r` (len = residual_count) and row-major `jac`
    /// (residual_count x dim).
    fn residuals_jacobian(&self, x: &[f64], r: &mut [f64], jac: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    LbfgsBacktracking,
    LbfgsZoom,
    LbfgsHagerZhang,
    Gd,
    Ncg,
    GaussNewton,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::LbfgsBacktracking => "lbfgs-backtracking",
            Backend::LbfgsZoom => "lbfgs-zoom",
            Backend::LbfgsHagerZhang => "lbfgs-hager-zhang",
            Backend::Gd => "gd",
            Backend::Ncg => "ncg",
            Backend::GaussNewton => "gauss-newton",
        }
    }

    pub fn parse(s: &str) -> Option<Backend> {
        Some(match s {
            "lbfgs-backtracking" => Backend::LbfgsBacktracking,
            "lbfgs-zoom" => Backend::LbfgsZoom,
            "lbfgs-hager-zhang" => Backend::LbfgsHagerZhang,
            "gd" => Backend::Gd,
            "ncg" => Backend::Ncg,
            "gauss-newton" => Backend::GaussNewton,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSearchParams {
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant (strong Wolfe / approximate Wolfe).
    pub c2: f64,
    pub max_steps: usize,
}

impl Default for LineSearchParams {
    fn default() -> Self {
        LineSearchParams { c1: 1e-4, c2: 0.9, max_steps: 40 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub backend: Backend,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub line_search: LineSearchParams,
}

impl SolverConfig {
    pub fn with_backend(backend: Backend) -> SolverConfig {
        SolverConfig {
            backend,
            max_iterations: 500,
            gradient_tolerance: 1e-10,
            line_search: LineSearchParams::default(),
        }
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig::with_backend(Backend::LbfgsZoom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    /// Line search failed to find an acceptable step; solver terminated
    /// early and kept the best iterate.
    LineSearchFailed,
}

impl SolveStatus {
    pub fn name(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIterations => "max-iterations",
            SolveStatus::LineSearchFailed => "line-search-failed",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub status: SolveStatus,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

struct Eval1D<'a> {
    obj: &'a dyn Objective,
    x0: &'a [f64],
    dir: &'a [f64],
    xt: Vec<f64>,
    gt: Vec<f64>,
}

impl<'a> Eval1D<'a> {
    fn new(obj: &'a dyn Objective, x0: &'a [f64], dir: &'a [f64]) -> Self {
        Eval1D { obj, x0, dir, xt: vec![0.0; x0.len()], gt: vec![0.0; x0.len()] }
    }

    fn point(&mut self, alpha: f64) -> &[f64] {
        for i in 0..self.x0.len() {
            self.xt[i] = self.x0[i] + alpha * self.dir[i];
        }
        &self.xt
    }

    fn phi(&mut self, alpha: f64) -> f64 {
        for i in 0..self.x0.len() {
            self.xt[i] = self.x0[i] + alpha * self.dir[i];
        }
        self.obj.value(&self.xt)
    }

    /// (phi(alpha), phi'(alpha))
    fn phi_dphi(&mut self, alpha: f64) -> (f64, f64) {
        for i in 0..self.x0.len() {
            self.xt[i] = self.x0[i] + alpha * self.dir[i];
        }
        let f = self.obj.value_grad(&self.xt, &mut self.gt);
        (f, dot(&self.gt, self.dir))
    }
}

/// Armijo backtracking from a unit step.
fn backtracking(ev: &mut Eval1D, f0: f64, dg0: f64, ls: &LineSearchParams, alpha0: f64) -> Option<f64> {
    let mut alpha = alpha0;
    for _ in 0..ls.max_steps {
        if ev.phi(alpha) <= f0 + ls.c1 * alpha * dg0 {
            return Some(alpha);
        }
        alpha *= 0.5;
        if alpha < 1e-20 {
            return None;
        }
    }
    None
}

/// Strong-Wolfe bracketing line search (bracket + zoom).
fn zoom_search(ev: &mut Eval1D, f0: f64, dg0: f64, ls: &LineSearchParams, alpha0: f64) -> Option<f64> {
    let c1 = ls.c1;
    let c2 = ls.c2;
    let mut alpha_prev = 0.0;
    let mut f_prev = f0;
    let mut alpha = alpha0;
    let mut bracket: Option<(f64, f64, f64)> = None; // (lo, hi, f_lo)
    for i in 0..ls.max_steps {
        let (f_a, g_a) = ev.phi_dphi(alpha);
        if f_a > f0 + c1 * alpha * dg0 || (i > 0 && f_a >= f_prev) {
            bracket = Some((alpha_prev, alpha, f_prev));
            break;
        }
        if g_a.abs() <= -c2 * dg0 {
            return Some(alpha);
        }
        if g_a >= 0.0 {
            bracket = Some((alpha, alpha_prev, f_a));
            break;
        }
        alpha_prev = alpha;
        f_prev = f_a;
        alpha *= 2.0;
        if alpha > 1e6 {
            return None;
        }
    }
    let (mut lo, mut hi, mut f_lo) = bracket?;
    for _ in 0..ls.max_steps {
        let alpha = 0.5 * (lo + hi);
        if (hi - lo).abs() < 1e-18 {
            // interval collapsed; accept lo if it still decreases
            return if f_lo < f0 { Some(lo) } else { None };
        }
        let (f_a, g_a) = ev.phi_dphi(alpha);
        if f_a > f0 + c1 * alpha * dg0 || f_a >= f_lo {
            hi = alpha;
        } else {
            if g_a.abs() <= -c2 * dg0 {
                return Some(alpha);
            }
            if g_a * (hi - lo) >= 0.0 {
                hi = lo;
            }
            lo = alpha;
            f_lo = f_a;
        }
    }
    if f_lo < f0 {
        Some(lo)
    } else {
        None
    }
}

/// Hager-Zhang line search with the approximate Wolfe acceptance rule,
/// secant steps and bisection safeguard.
fn hager_zhang(ev: &mut Eval1D, f0: f64, dg0: f64, ls: &LineSearchParams, alpha0: f64) -> Option<f64> {
    let delta = 0.1;
    let sigma = ls.c2;
    let epsk = 1e-6 * f0.abs();
    let ok = |alpha: f64, f_a: f64, g_a: f64| -> bool {
        let wolfe = f_a <= f0 + ls.c1 * alpha * dg0 && g_a.abs() <= -ls.c2 * dg0;
        let approx =
            (2.0 * delta - 1.0) * dg0 >= g_a && g_a >= sigma * dg0 && f_a <= f0 + epsk;
        wolfe || approx
    };

    // bracketing: expand until the slope turns or the value leaves the band
    let mut a = 0.0;
    let mut ga = dg0;
    let mut alpha = alpha0;
    let mut b;
    let mut gb;
    let mut evals = 0;
    loop {
        let (f_c, g_c) = ev.phi_dphi(alpha);
        evals += 1;
        if ok(alpha, f_c, g_c) {
            return Some(alpha);
        }
        if g_c >= 0.0 || f_c > f0 + epsk {
            b = alpha;
            gb = g_c;
            break;
        }
        a = alpha;
        ga = g_c;
        alpha *= 5.0;
        if evals >= ls.max_steps || alpha > 1e8 {
            return None;
        }
    }

    // secant refinement on [a, b]
    for _ in evals..ls.max_steps {
        let width = b - a;
        if width.abs() < 1e-18 {
            return None;
        }
        let mut c = if (gb - ga).abs() > 1e-300 {
            (a * gb - b * ga) / (gb - ga)
        } else {
            0.5 * (a + b)
        };
        let margin = 0.1 * width;
        if !(c > a + margin && c < b - margin) {
            c = 0.5 * (a + b);
        }
        let (f_c, g_c) = ev.phi_dphi(c);
        if ok(c, f_c, g_c) {
            return Some(c);
        }
        if g_c >= 0.0 {
            b = c;
            gb = g_c;
        } else if f_c <= f0 + epsk {
            a = c;
            ga = g_c;
        } else {
            b = c;
            gb = g_c;
        }
    }
    None
}

#[derive(Clone, Copy, PartialEq)]
enum LsKind {
    Backtracking,
    Zoom,
    HagerZhang,
}

fn run_line_search(
    kind: LsKind,
    ev: &mut Eval1D,
    f0: f64,
    dg0: f64,
    ls: &LineSearchParams,
    alpha0: f64,
) -> Option<f64> {
    match kind {
        LsKind::Backtracking => backtracking(ev, f0, dg0, ls, alpha0),
        LsKind::Zoom => zoom_search(ev, f0, dg0, ls, alpha0),
        LsKind::HagerZhang => hager_zhang(ev, f0, dg0, ls, alpha0),
    }
}

fn quasi_newton(
    obj: &dyn Objective,
    x0: &[f64],
    config: &SolverConfig,
    ls_kind: LsKind,
    memory: usize,
) -> SolveResult {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut grad = vec![0.0; n];
    let mut value = obj.value_grad(&x, &mut grad);
    let mut history: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new(); // (s, y, 1/s.y)
    let mut status = SolveStatus::MaxIterations;
    let mut iterations = 0;

    for it in 0..config.max_iterations {
        iterations = it;
        let gnorm = norm2(&grad);
        if gnorm <= config.gradient_tolerance {
            status = SolveStatus::Converged;
            break;
        }

        // two-loop recursion
        let mut d: Vec<f64> = grad.iter().map(|g| -g).collect();
        if !history.is_empty() {
            let mut alphas = vec![0.0; history.len()];
            for (i, (s, y, rho)) in history.iter().enumerate().rev() {
                let a = rho * dot(s, &d);
                alphas[i] = a;
                for (dj, yj) in d.iter_mut().zip(y) {
                    *dj -= a * yj;
                }
            }
            let (s_last, y_last, _) = history.last().unwrap();
            let gamma = dot(s_last, y_last) / dot(y_last, y_last).max(1e-300);
            for dj in d.iter_mut() {
                *dj *= gamma;
            }
            for (i, (s, y, rho)) in history.iter().enumerate() {
                let beta = rho * dot(y, &d);
                for (dj, sj) in d.iter_mut().zip(s) {
                    *dj += (alphas[i] - beta) * sj;
                }
            }
        }
        let mut dg0 = dot(&d, &grad);
        if dg0 >= -1e-16 * norm2(&d) * gnorm {
            history.clear();
            d = grad.iter().map(|g| -g).collect();
            dg0 = -gnorm * gnorm;
        }

        let alpha0 = if history.is_empty() { (1.0 / gnorm.max(1.0)).min(1.0) } else { 1.0 };
        let mut ev = Eval1D::new(obj, &x, &d);
        let Some(alpha) = run_line_search(ls_kind, &mut ev, value, dg0, &config.line_search, alpha0)
        else {
            status = SolveStatus::LineSearchFailed;
            break;
        };

        let x_new = ev.point(alpha).to_vec();
        let mut grad_new = vec![0.0; n];
        let value_new = obj.value_grad(&x_new, &mut grad_new);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = grad_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if memory > 0 && sy > 1e-12 * norm2(&s) * norm2(&y) {
            if history.len() == memory {
                history.remove(0);
            }
            let rho = 1.0 / sy;
            history.push((s, y, rho));
        }
        x = x_new;
        grad = grad_new;
        value = value_new;
    }

    SolveResult { value, gradient_norm: norm2(&grad), x, iterations, status }
}

fn gradient_descent(obj: &dyn Objective, x0: &[f64], config: &SolverConfig) -> SolveResult {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut grad = vec![0.0; n];
    let mut value = obj.value_grad(&x, &mut grad);
    let mut status = SolveStatus::MaxIterations;
    let mut iterations = 0;
    for it in 0..config.max_iterations {
        iterations = it;
        let gnorm = norm2(&grad);
        if gnorm <= config.gradient_tolerance {
            status = SolveStatus::Converged;
            break;
        }
        let d: Vec<f64> = grad.iter().map(|g| -g).collect();
        let dg0 = -gnorm * gnorm;
        let mut ev = Eval1D::new(obj, &x, &d);
        let alpha0 = (1.0 / gnorm.max(1.0)).min(1.0);
        let Some(alpha) =
            backtracking(&mut ev, value, dg0, &config.line_search, alpha0.max(1e-4))
        else {
            status = SolveStatus::LineSearchFailed;
            break;
        };
        x = ev.point(alpha).to_vec();
        value = obj.value_grad(&x, &mut grad);
    }
    SolveResult { value, gradient_norm: norm2(&grad), x, iterations, status }
}

/// Polak-Ribiere+ nonlinear conjugate gradient under a strong-Wolfe line
/// search (c2 = 0.1).
fn ncg(obj: &dyn Objective, x0: &[f64], config: &SolverConfig) -> SolveResult {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut grad = vec![0.0; n];
    let mut value = obj.value_grad(&x, &mut grad);
    let mut d: Vec<f64> = grad.iter().map(|g| -g).collect();
    let mut status = SolveStatus::MaxIterations;
    let mut iterations = 0;
    let ls = LineSearchParams { c2: 0.1, ..config.line_search };
    for it in 0..config.max_iterations {
        iterations = it;
        let gnorm = norm2(&grad);
        if gnorm <= config.gradient_tolerance {
            status = SolveStatus::Converged;
            break;
        }
        let mut dg0 = dot(&d, &grad);
        if dg0 >= -1e-16 * norm2(&d) * gnorm {
            d = grad.iter().map(|g| -g).collect();
            dg0 = -gnorm * gnorm;
        }
        let mut ev = Eval1D::new(obj, &x, &d);
        let alpha0 = if it == 0 { (1.0 / gnorm.max(1.0)).min(1.0) } else { 1.0 };
        let Some(alpha) = zoom_search(&mut ev, value, dg0, &ls, alpha0) else {
            status = SolveStatus::LineSearchFailed;
            break;
        };
        let x_new = ev.point(alpha).to_vec();
        let mut grad_new = vec![0.0; n];
        let value_new = obj.value_grad(&x_new, &mut grad_new);
        let beta_num: f64 = grad_new.iter().zip(&grad).map(|(gn, g)| gn * (gn - g)).sum();
        let beta = (beta_num / (gnorm * gnorm)).max(0.0);
        for i in 0..n {
            d[i] = -grad_new[i] + beta * d[i];
        }
        x = x_new;
        grad = grad_new;
        value = value_new;
    }
    SolveResult { value, gradient_norm: norm2(&grad), x, iterations, status }
}

/// Solves the SPD system `m x = b` for dims 1-3 (Gaussian elimination with
/// partial pivoting; fine at this size).
fn solve_small(m: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|a, bb| m[*a][col].abs().partial_cmp(&m[*bb][col].abs()).unwrap())?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    Some(x)
}

fn gauss_newton(obj: &dyn LeastSquares, x0: &[f64], config: &SolverConfig) -> SolveResult {
    let n = x0.len();
    let m = obj.residual_count();
    let mut x = x0.to_vec();
    let mut r = vec![0.0; m];
    let mut jac = vec![0.0; m * n];
    let mut status = SolveStatus::MaxIterations;
    let mut iterations = 0;
    let mut grad = vec![0.0; n];

    for it in 0..config.max_iterations {
        iterations = it;
        obj.residuals_jacobian(&x, &mut r, &mut jac);
        let value: f64 = r.iter().map(|v| v * v).sum();
        for j in 0..n {
            grad[j] = 2.0 * (0..m).map(|i| jac[i * n + j] * r[i]).sum::<f64>();
        }
        if norm2(&grad) <= config.gradient_tolerance {
            status = SolveStatus::Converged;
            break;
        }

        // normal equations J^T J delta = -J^T r
        let mut jtj: Vec<Vec<f64>> = vec![vec![0.0; n]; n];
        let mut rhs = vec![0.0; n];
        for i in 0..m {
            for a in 0..n {
                let ja = jac[i * n + a];
                rhs[a] -= ja * r[i];
                for b in a..n {
                    jtj[a][b] += ja * jac[i * n + b];
                }
            }
        }
        for a in 0..n {
            for b in 0..a {
                jtj[a][b] = jtj[b][a];
            }
        }
        let mut delta = None;
        let mut damping = 0.0;
        for _ in 0..8 {
            let mut mm = jtj.clone();
            for (a, row) in mm.iter_mut().enumerate() {
                row[a] += damping;
            }
            let mut bb = rhs.clone();
            if let Some(sol) = solve_small(&mut mm, &mut bb) {
                delta = Some(sol);
                break;
            }
            let trace: f64 = (0..n).map(|a| jtj[a][a]).sum();
            damping = (damping * 10.0).max(1e-12 * trace.max(1e-300));
        }
        let Some(delta) = delta else {
            status = SolveStatus::LineSearchFailed;
            break;
        };

        // step halving keeps the plain Gauss-Newton step whenever it already
        // decreases the objective
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand: Vec<f64> = x.iter().zip(&delta).map(|(xi, di)| xi + t * di).collect();
            if obj.value(&cand) <= value {
                x = cand;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            status = SolveStatus::LineSearchFailed;
            break;
        }
        let step: f64 = delta.iter().map(|d| (t * d).abs()).fold(0.0, f64::max);
        if step < 1e-16 {
            obj.residuals_jacobian(&x, &mut r, &mut jac);
            for j in 0..n {
                grad[j] = 2.0 * (0..m).map(|i| jac[i * n + j] * r[i]).sum::<f64>();
            }
            status = if norm2(&grad) <= config.gradient_tolerance {
                SolveStatus::Converged
            } else {
                SolveStatus::MaxIterations
            };
            break;
        }
    }

    // refresh diagnostics at the final iterate
    obj.residuals_jacobian(&x, &mut r, &mut jac);
    let value: f64 = r.iter().map(|v| v * v).sum();
    for j in 0..n {
        grad[j] = 2.0 * (0..m).map(|i| jac[i * n + j] * r[i]).sum::<f64>();
    }
    SolveResult { value, gradient_norm: norm2(&grad), x, iterations, status }
}

/// Minimizes a gradient objective with the configured backend. Gauss-Newton
/// is not available through this entry point (it needs residual structure);
/// callers with least-squares problems use [`minimize_least_squares`].
pub fn minimize(obj: &dyn Objective, x0: &[f64], config: &SolverConfig) -> Option<SolveResult> {
    Some(match config.backend {
        Backend::LbfgsBacktracking => quasi_newton(obj, x0, config, LsKind::Backtracking, 8),
        Backend::LbfgsZoom => quasi_newton(obj, x0, config, LsKind::Zoom, 8),
        Backend::LbfgsHagerZhang => quasi_newton(obj, x0, config, LsKind::HagerZhang, 8),
        Backend::Gd => gradient_descent(obj, x0, config),
        Backend::Ncg => ncg(obj, x0, config),
        Backend::GaussNewton => return None,
    })
}

/// Minimizes a least-squares objective; every backend is available here.
pub fn minimize_least_squares(
    obj: &dyn LeastSquares,
    x0: &[f64],
    config: &SolverConfig,
) -> SolveResult {
    match config.backend {
        Backend::GaussNewton => gauss_newton(obj, x0, config),
        _ => minimize(obj, x0, config).expect("non-GN backends always available"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Rosenbrock in 2D; classic smoke test for every backend.
    struct Rosenbrock;

    impl Objective for Rosenbrock {
        fn dim(&self) -> usize {
            2
        }
        fn value(&self, x: &[f64]) -> f64 {
            (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
        }
        fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
            grad[0] = -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]);
            grad[1] = 200.0 * (x[1] - x[0] * x[0]);
            self.value(x)
        }
    }

    impl LeastSquares for Rosenbrock {
        fn residual_count(&self) -> usize {
            2
        }
        fn residuals_jacobian(&self, x: &[f64], r: &mut [f64], jac: &mut [f64]) {
            r[0] = 1.0 - x[0];
            r[1] = 10.0 * (x[1] - x[0] * x[0]);
            jac[0] = -1.0;
            jac[1] = 0.0;
            jac[2] = -20.0 * x[0];
            jac[3] = 10.0;
        }
    }

    #[test]
    fn all_backends_reach_the_rosenbrock_minimum() {
        for backend in [
            Backend::LbfgsBacktracking,
            Backend::LbfgsZoom,
            Backend::LbfgsHagerZhang,
            Backend::Ncg,
            Backend::GaussNewton,
        ] {
            let mut config = SolverConfig::with_backend(backend);
            config.gradient_tolerance = 1e-8;
            config.max_iterations = 2000;
            let res = minimize_least_squares(&Rosenbrock, &[-1.2, 1.0], &config);
            assert!(
                (res.x[0] - 1.0).abs() < 1e-4 && (res.x[1] - 1.0).abs() < 1e-4,
                "{backend:?}: {:?} status {:?}",
                res.x,
                res.status
            );
        }
    }

    #[test]
    fn gd_descends_even_if_slowly() {
        let mut config = SolverConfig::with_backend(Backend::Gd);
        config.max_iterations = 300;
        config.gradient_tolerance = 1e-12;
        let res = minimize(&Rosenbrock, &[-1.2, 1.0], &config).unwrap();
        assert!(res.value < Rosenbrock.value(&[-1.2, 1.0]));
    }

    #[test]
    fn gauss_newton_is_exact_on_linear_problems() {
        struct Linear;
        impl Objective for Linear {
            fn dim(&self) -> usize {
                1
            }
            fn value(&self, x: &[f64]) -> f64 {
                (3.0 * x[0] - 6.0).powi(2)
            }
            fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
                grad[0] = 2.0 * 3.0 * (3.0 * x[0] - 6.0);
                self.value(x)
            }
        }
        impl LeastSquares for Linear {
            fn residual_count(&self) -> usize {
                1
            }
            fn residuals_jacobian(&self, x: &[f64], r: &mut [f64], jac: &mut [f64]) {
                r[0] = 3.0 * x[0] - 6.0;
                jac[0] = 3.0;
            }
        }
        let config = SolverConfig::with_backend(Backend::GaussNewton);
        let res = minimize_least_squares(&Linear, &[0.0], &config);
        assert!((res.x[0] - 2.0).abs() < 1e-12);
        assert_eq!(res.status, SolveStatus::Converged);
    }

    #[test]
    fn gn_bails_out_of_the_gradient_entry_point() {
        let config = SolverConfig::with_backend(Backend::GaussNewton);
        assert!(minimize(&Rosenbrock, &[0.0, 0.0], &config).is_none());
    }

    #[test]
    fn identical_inputs_give_identical_results() {
        let config = SolverConfig::with_backend(Backend::LbfgsZoom);
        let a = minimize(&Rosenbrock, &[-1.2, 1.0], &config).unwrap();
        let b = minimize(&Rosenbrock, &[-1.2, 1.0], &config).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.iterations, b.iterations);
    }
}

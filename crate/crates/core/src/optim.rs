//! Local search engines shared by the norm, radius and index estimators.

/// A differentiable objective to be maximized.
pub trait SmoothObjective {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], grad: &mut [f64]);
    /// Brings `x` back to a reference scale. Only used for objectives that
    /// are invariant under positive scaling; returns whether `x` changed.
    fn rescale(&self, _x: &mut [f64]) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AscentResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// BFGS ascent with Armijo backtracking.
///
/// Stops when the scale-free gradient `‖∇f‖·‖x‖` drops below `gtol`, after
/// four consecutive steps each gaining at most `ftol·|f|`, when the line
/// search cannot make progress from a fresh Hessian, or after `max_iter`
/// iterations.
pub fn bfgs_maximize<O: SmoothObjective + ?Sized>(
    obj: &O,
    x0: Vec<f64>,
    max_iter: usize,
    gtol: f64,
    ftol: f64,
) -> AscentResult {
    let n = x0.len();
    let mut x = x0;
    let mut f = obj.value(&x);
    let mut g = vec![0.0; n];
    obj.gradient(&x, &mut g);
    let mut h = identity(n);
    let mut fresh = true;
    let mut stalls = 0;
    let mut xn = vec![0.0; n];
    let mut gn = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let gnorm = norm2(&g);
        if !gnorm.is_finite() || gnorm * norm2(&x) < gtol {
            break;
        }
        matvec(&h, &g, &mut d);
        let mut slope = dot(&d, &g);
        if slope <= 0.0 || !slope.is_finite() {
            h = identity(n);
            fresh = true;
            d.copy_from_slice(&g);
            slope = gnorm * gnorm;
        }
        let mut alpha = if fresh {
            (0.1 * norm2(&x).max(1e-300) / gnorm).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..60 {
            for i in 0..n {
                xn[i] = x[i] + alpha * d[i];
            }
            let fv = obj.value(&xn);
            if fv.is_finite() && fv >= f + 1e-4 * alpha * slope {
                accepted = Some(fv);
                break;
            }
            alpha *= 0.5;
        }
        let Some(fv) = accepted else {
            if fresh {
                break;
            }
            h = identity(n);
            fresh = true;
            continue;
        };
        obj.gradient(&xn, &mut gn);
        // Secant pair for the minimization of -f.
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g.iter().zip(&gn).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm2(&s) * norm2(&y) && sy.is_finite() {
            bfgs_update(&mut h, &s, &y, sy);
            fresh = false;
        } else {
            h = identity(n);
            fresh = true;
        }
        if fv - f <= ftol * f.abs().max(1e-300) {
            stalls += 1;
            if stalls >= 4 {
                x.copy_from_slice(&xn);
                f = fv;
                break;
            }
        } else {
            stalls = 0;
        }
        x.copy_from_slice(&xn);
        g.copy_from_slice(&gn);
        f = fv;
        if obj.rescale(&mut x) {
            f = obj.value(&x);
            obj.gradient(&x, &mut g);
            h = identity(n);
            fresh = true;
        }
    }
    AscentResult {
        x,
        value: f,
        iterations,
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    h
}

fn matvec(h: &[f64], v: &[f64], out: &mut [f64]) {
    let n = v.len();
    for i in 0..n {
        out[i] = dot(&h[i * n..(i + 1) * n], v);
    }
}

/// Inverse-Hessian update `H ← (I - ρ s yᵀ) H (I - ρ y sᵀ) + ρ s sᵀ`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let mut hy = vec![0.0; n];
    matvec(h, y, &mut hy);
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] +=
                -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

/// Options for [`pattern_maximize`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatternOptions {
    pub initial_step: f64,
    pub min_step: f64,
    pub max_evals: usize,
}

/// Opportunistic pattern search for nonsmooth objectives.
///
/// `moves(x, step, out)` fills `out` with candidate points around `x`. The
/// first strictly improving candidate is accepted; when none improves the
/// step is halved. Ends when the step falls below `min_step` or the
/// evaluation budget is spent.
pub fn pattern_maximize<F, M>(
    mut f: F,
    mut moves: M,
    x0: Vec<f64>,
    opts: PatternOptions,
) -> AscentResult
where
    F: FnMut(&[f64]) -> f64,
    M: FnMut(&[f64], f64, &mut Vec<Vec<f64>>),
{
    let mut x = x0;
    let mut best = f(&x);
    let mut evals = 1;
    let mut step = opts.initial_step;
    let mut candidates = Vec::new();
    while step >= opts.min_step && evals < opts.max_evals {
        candidates.clear();
        moves(&x, step, &mut candidates);
        let mut improved = false;
        for c in candidates.drain(..) {
            let v = f(&c);
            evals += 1;
            if v > best {
                best = v;
                x = c;
                improved = true;
                break;
            }
            if evals >= opts.max_evals {
                break;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    AscentResult {
        x,
        value: best,
        iterations: evals,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic;

    impl SmoothObjective for Quadratic {
        fn value(&self, x: &[f64]) -> f64 {
            -(x[0] - 1.0).powi(2) - 10.0 * (x[1] + 2.0).powi(2)
        }
        fn gradient(&self, x: &[f64], g: &mut [f64]) {
            g[0] = -2.0 * (x[0] - 1.0);
            g[1] = -20.0 * (x[1] + 2.0);
        }
    }

    struct Rosenbrock;

    impl SmoothObjective for Rosenbrock {
        fn value(&self, x: &[f64]) -> f64 {
            -((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2))
        }
        fn gradient(&self, x: &[f64], g: &mut [f64]) {
            g[0] = 2.0 * (1.0 - x[0]) + 400.0 * x[0] * (x[1] - x[0] * x[0]);
            g[1] = -200.0 * (x[1] - x[0] * x[0]);
        }
    }

    #[test]
    fn bfgs_finds_quadratic_peak() {
        let r = bfgs_maximize(&Quadratic, vec![5.0, 5.0], 200, 1e-12, 1e-15);
        assert!((r.x[0] - 1.0).abs() < 1e-8);
        assert!((r.x[1] + 2.0).abs() < 1e-8);
    }

    #[test]
    fn bfgs_handles_curved_valley() {
        let r = bfgs_maximize(&Rosenbrock, vec![-1.2, 1.0], 2000, 1e-12, 1e-15);
        assert!(r.value > -1e-12, "{r:?}");
    }

    #[test]
    fn pattern_search_finds_kink() {
        let f = |x: &[f64]| -(x[0] - 0.3).abs() - 2.0 * (x[1] + 0.7).abs();
        let moves = |x: &[f64], step: f64, out: &mut Vec<Vec<f64>>| {
            for i in 0..x.len() {
                for s in [1.0, -1.0] {
                    let mut c = x.to_vec();
                    c[i] += s * step;
                    out.push(c);
                }
            }
        };
        let opts = PatternOptions {
            initial_step: 0.5,
            min_step: 1e-10,
            max_evals: 100_000,
        };
        let r = pattern_maximize(f, moves, vec![0.0, 0.0], opts);
        assert!(r.value > -1e-9, "{r:?}");
    }
}

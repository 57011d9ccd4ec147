//! Small dense BFGS for smooth unconstrained problems of a few dozen variables.

#[derive(Copy, Clone, Debug, PartialEq)]
pub(crate) struct BfgsOptions {
    pub max_iters: usize,
    /// Stop when `‖∇f‖_∞` falls below this.
    pub grad_tol: f64,
    pub armijo_c: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            max_iters: 5000,
            grad_tol: 1e-12,
            armijo_c: 1e-4,
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct BfgsResult {
    pub x: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimize `f`, which returns the value and writes the gradient into its second argument.
pub(crate) fn bfgs<F>(mut f: F, x0: Vec<f64>, opts: BfgsOptions) -> BfgsResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    // inverse Hessian approximation, row-major
    let mut hinv = identity(n);
    let mut g_new = vec![0.0; n];
    let mut iterations = 0;
    while iterations < opts.max_iters {
        if g.iter().all(|v| v.abs() <= opts.grad_tol) {
            break;
        }
        iterations += 1;
        let mut d: Vec<f64> = (0..n).map(|i| -dot(&hinv[i * n..(i + 1) * n], &g)).collect();
        let mut slope = dot(&d, &g);
        if slope >= 0.0 {
            // lost descent; restart from steepest descent
            hinv = identity(n);
            d = g.iter().map(|v| -v).collect();
            slope = dot(&d, &g);
        }
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-20 {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            let ft = f(&trial, &mut g_new);
            if ft.is_finite() && ft <= fx + opts.armijo_c * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            break;
        };
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            update_inverse(&mut hinv, &s, &y, sy);
        }
        let stalled = f_new == fx;
        x = x_new;
        fx = f_new;
        g.copy_from_slice(&g_new);
        if stalled {
            break;
        }
    }
    BfgsResult { x }
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

/// `H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ` with `ρ = 1/(yᵀs)`.
fn update_inverse(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

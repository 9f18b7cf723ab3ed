//! Derivative-free minimization and an augmented Lagrangian wrapper for the
//! unit-sphere constraint `‖x‖² = 1`.

/// Nelder–Mead settings.
#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub initial_step: f64,
    pub max_evals: usize,
    /// Stop once the simplex spread in function value is below this...
    pub ftol: f64,
    /// ...and its extent in every coordinate is below this.
    pub xtol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { initial_step: 0.05, max_evals: 400, ftol: 1e-9, xtol: 1e-6 }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimizes `f` from `x0` with the Nelder–Mead simplex method.
pub fn nelder_mead(f: &mut dyn FnMut(&[f64]) -> f64, x0: &[f64], opts: &NelderMeadOptions) -> Minimum {
    let d = x0.len();
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    simplex.push((x0.to_vec(), eval(x0, &mut evals)));
    for j in 0..d {
        let mut x = x0.to_vec();
        x[j] += if x[j].abs() > 1e-12 { opts.initial_step * x[j].abs().max(0.5) } else { opts.initial_step };
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }
    let mut converged = false;
    while evals < opts.max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[d].1 - simplex[0].1;
        let extent = (0..d)
            .map(|j| {
                simplex.iter().map(|p| (p.0[j] - simplex[0].0[j]).abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if spread <= opts.ftol && extent <= opts.xtol {
            converged = true;
            break;
        }
        let centroid: Vec<f64> =
            (0..d).map(|j| simplex[..d].iter().map(|p| p.0[j]).sum::<f64>() / d as f64).collect();
        let worst = simplex[d].clone();
        let along = |t: f64| -> Vec<f64> { (0..d).map(|j| centroid[j] + t * (worst.0[j] - centroid[j])).collect() };
        let xr = along(-1.0);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = eval(&xe, &mut evals);
            simplex[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[d - 1].1 {
            simplex[d] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst.1 {
                let xc = along(-0.5);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            };
            if fc < worst.1.min(fr) {
                simplex[d] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for p in simplex.iter_mut().skip(1) {
                    for j in 0..d {
                        p.0[j] = best[j] + 0.5 * (p.0[j] - best[j]);
                    }
                    p.1 = eval(&p.0, &mut evals);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Minimum { x, value, evaluations: evals, converged }
}

/// Augmented Lagrangian settings for the constraint `c(x) = ‖x‖² - 1 = 0`.
#[derive(Debug, Clone, Copy)]
pub struct AugLagOptions {
    pub rho0: f64,
    pub rho_growth: f64,
    pub constraint_tol: f64,
    pub improvement_tol: f64,
    pub max_outer: usize,
    pub inner: NelderMeadOptions,
    /// Declares `f(s·x) = f(x)` for `s > 0`: the objective is then evaluated
    /// at `x / ‖x‖` and each inner solve ends with the exact minimization of
    /// the penalty along the ray through its result.
    pub scale_invariant: bool,
}

impl Default for AugLagOptions {
    fn default() -> Self {
        Self {
            rho0: 10.0,
            rho_growth: 2.0,
            constraint_tol: 1e-8,
            improvement_tol: 1e-7,
            max_outer: 30,
            inner: NelderMeadOptions::default(),
            scale_invariant: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SphereMaximum {
    /// Last augmented-Lagrangian iterate (not projected).
    pub x: Vec<f64>,
    pub constraint: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Maximizes `objective` subject to `‖x‖ = 1`: minimizes
/// `-f(x) + λ c(x) + ρ/2 c(x)²`, then updates `λ ← λ + ρ c` and `ρ ← growth·ρ`.
pub fn maximize_on_sphere(
    objective: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    opts: &AugLagOptions,
) -> SphereMaximum {
    let constraint = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>() - 1.0;
    let mut x = x0.to_vec();
    let mut lambda = 0.0;
    let mut rho = opts.rho0;
    let mut evaluations = 0;
    let mut prev = f64::INFINITY;
    let mut converged = false;
    let radial = |v: &[f64]| -> Vec<f64> {
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 0.0 {
            v.iter().map(|a| a / n).collect()
        } else {
            v.to_vec()
        }
    };
    for _ in 0..opts.max_outer {
        let mut penalized = |v: &[f64]| {
            let c = constraint(v);
            let f = if opts.scale_invariant { objective(&radial(v)) } else { objective(v) };
            -f + lambda * c + 0.5 * rho * c * c
        };
        let res = nelder_mead(&mut penalized, &x, &opts.inner);
        evaluations += res.evaluations;
        x = res.x;
        let mut value = res.value;
        if opts.scale_invariant {
            // Along a ray only the penalty varies; it is minimized at c = -λ/ρ.
            let c_old = constraint(&x);
            let target = (-lambda / rho).max(-0.5);
            let u = radial(&x);
            x = u.iter().map(|a| a * (1.0 + target).sqrt()).collect();
            let c = constraint(&x);
            value += lambda * (c - c_old) + 0.5 * rho * (c * c - c_old * c_old);
        }
        let c = constraint(&x);
        let improvement = (prev - value).abs();
        prev = value;
        if c.abs() <= opts.constraint_tol && improvement < opts.improvement_tol {
            converged = true;
            break;
        }
        lambda += rho * c;
        rho *= opts.rho_growth;
    }
    let c = constraint(&x);
    SphereMaximum { x, constraint: c, evaluations, converged }
}

//! Small local optimizers used by the coupled search.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Debug)]
pub(crate) struct Minimum {
    pub x: DVector<f64>,
    pub value: f64,
    pub evals: usize,
}

/// Nelder-Mead with the standard coefficients (1, 2, 1/2, 1/2).
pub(crate) fn nelder_mead<F>(f: F, x0: &DVector<f64>, step: f64, max_evals: usize, ftol: f64) -> Minimum
where
    F: Fn(&DVector<f64>) -> f64,
{
    let n = x0.len();
    let mut evals = 0;
    let eval = |x: &DVector<f64>, evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() { v } else { f64::INFINITY }
    };
    let mut simplex: Vec<(DVector<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.clone(), eval(x0, &mut evals)));
    for i in 0..n {
        let mut x = x0.clone();
        x[i] += step;
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }
    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[n].1);
        if (worst - best).abs() <= ftol * (best.abs() + ftol) {
            break;
        }
        let mut centroid = DVector::zeros(n);
        for (x, _) in &simplex[..n] {
            centroid += x;
        }
        centroid /= n as f64;
        let toward = |t: f64| &centroid + (&simplex[n].0 - &centroid) * t;
        let xr = toward(-1.0);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = toward(-2.0);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < simplex[n].1 {
            let x = toward(-0.5);
            let v = eval(&x, &mut evals);
            (x, v)
        } else {
            let x = toward(0.5);
            let v = eval(&x, &mut evals);
            (x, v)
        };
        if fc < simplex[n].1.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        let x0 = simplex[0].0.clone();
        for s in simplex.iter_mut().skip(1) {
            s.0 = &x0 + (&s.0 - &x0) * 0.5;
            s.1 = eval(&s.0, &mut evals);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Minimum { x, value, evals }
}

fn sum_sq(r: &DVector<f64>) -> f64 {
    r.norm_squared()
}

/// Levenberg-Marquardt on `|r(x)|^2` with a central-difference Jacobian.
pub(crate) fn levenberg_marquardt<F>(r: F, x0: &DVector<f64>, max_iter: usize, target: f64) -> Minimum
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = x0.len();
    let mut x = x0.clone();
    let mut res = r(&x);
    let mut value = sum_sq(&res);
    let mut evals = 1;
    let mut mu = 1e-3;
    for _ in 0..max_iter {
        if !value.is_finite() || value <= target {
            break;
        }
        let mut jac = DMatrix::zeros(res.len(), n);
        for i in 0..n {
            let h = 1e-7 * x[i].abs().max(1.0);
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let col = (r(&xp) - r(&xm)) / (2.0 * h);
            jac.set_column(i, &col);
        }
        evals += 2 * n;
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &res;
        let mut improved = false;
        for _ in 0..12 {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += mu * (1.0 + jtj[(i, i)]);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&g))) else {
                mu *= 10.0;
                continue;
            };
            let xn = &x + &step;
            let rn = r(&xn);
            evals += 1;
            let vn = sum_sq(&rn);
            if vn < value {
                let small = step.norm() <= 1e-15 * (1.0 + x.norm());
                x = xn;
                res = rn;
                value = vn;
                mu = (mu * 0.3).max(1e-12);
                improved = !small;
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    Minimum { x, value, evals }
}

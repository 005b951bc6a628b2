//! Dormand-Prince 5(4) with mixed absolute/relative error control.

use nalgebra::DVector;

/// Steps shorter than this count as a collapse.
pub const MIN_STEP: f64 = 1e-12;
/// Any state coefficient beyond this counts as a blow-up.
pub const MAX_COEFF: f64 = 1e12;

#[derive(Clone, Debug, PartialEq)]
pub enum OdeStop {
    Reached,
    StepCollapse,
    Overflow,
    /// The acceptance hook refused a state that passed the error test.
    Invalid(String),
    MaxSteps,
}

#[derive(Clone, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h0: f64,
    pub max_steps: usize,
    /// Times the integrator must land on exactly.
    pub checkpoints: Vec<f64>,
}

impl OdeOptions {
    pub fn new(tol: f64) -> Self {
        OdeOptions { rtol: tol, atol: tol, h0: 1e-3, max_steps: 200_000, checkpoints: Vec::new() }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One trial step; `None` when the right-hand side failed somewhere inside.
fn trial<F>(rhs: &mut F, t: f64, y: &DVector<f64>, h: f64) -> Option<(DVector<f64>, DVector<f64>)>
where
    F: FnMut(f64, &DVector<f64>) -> Option<DVector<f64>>,
{
    let mut k: Vec<DVector<f64>> = Vec::with_capacity(7);
    for s in 0..7 {
        let mut ys = y.clone();
        for (j, kj) in k.iter().enumerate() {
            if A[s][j] != 0.0 {
                ys.axpy(h * A[s][j], kj, 1.0);
            }
        }
        let ks = rhs(t + C[s] * h, &ys)?;
        if ks.iter().any(|x| !x.is_finite()) {
            return None;
        }
        k.push(ks);
    }
    let mut y5 = y.clone();
    let mut err = DVector::zeros(y.len());
    for s in 0..7 {
        y5.axpy(h * B5[s], &k[s], 1.0);
        err.axpy(h * (B5[s] - B4[s]), &k[s], 1.0);
    }
    Some((y5, err))
}

/// Integrates `y' = rhs(t, y)` from `t0` to `t_end`. `accept` sees every
/// state that passed the error test and may veto it with a message, which
/// stops the integration. The returned list starts with `(t0, y0)`.
pub fn dopri45<F, G>(
    mut rhs: F,
    mut accept: G,
    t0: f64,
    y0: DVector<f64>,
    t_end: f64,
    opts: &OdeOptions,
) -> (Vec<(f64, DVector<f64>)>, OdeStop)
where
    F: FnMut(f64, &DVector<f64>) -> Option<DVector<f64>>,
    G: FnMut(f64, &DVector<f64>) -> Result<(), String>,
{
    let mut out = vec![(t0, y0.clone())];
    let (mut t, mut y) = (t0, y0);
    let mut h = opts.h0.min(t_end - t0);
    let mut checkpoints: Vec<f64> = opts.checkpoints.iter().copied().filter(|&c| c > t0 && c < t_end).collect();
    checkpoints.sort_by(f64::total_cmp);
    let mut next_cp = 0;
    let mut steps = 0;
    while t < t_end {
        if steps >= opts.max_steps {
            return (out, OdeStop::MaxSteps);
        }
        steps += 1;
        let target = checkpoints.get(next_cp).copied().unwrap_or(t_end);
        let clipped = h >= target - t;
        let step = if clipped { target - t } else { h };
        if step < MIN_STEP {
            return (out, OdeStop::StepCollapse);
        }
        let Some((y_new, err)) = trial(&mut rhs, t, &y, step) else {
            h = step * 0.25;
            continue;
        };
        let norm = (err
            .iter()
            .zip(y.iter().zip(y_new.iter()))
            .map(|(e, (a, b))| {
                let sc = opts.atol + opts.rtol * a.abs().max(b.abs());
                (e / sc).powi(2)
            })
            .sum::<f64>()
            / y.len() as f64)
            .sqrt();
        if norm > 1.0 {
            h = step * (0.9 * norm.powf(-0.2)).max(0.2);
            continue;
        }
        let t_new = if clipped { target } else { t + step };
        if y_new.iter().any(|x| x.abs() > MAX_COEFF) {
            return (out, OdeStop::Overflow);
        }
        if let Err(msg) = accept(t_new, &y_new) {
            return (out, OdeStop::Invalid(msg));
        }
        t = t_new;
        y = y_new;
        out.push((t, y.clone()));
        if clipped && next_cp < checkpoints.len() {
            next_cp += 1;
        }
        let grow = if norm == 0.0 { 5.0 } else { (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0) };
        // keep the pre-clip step size when the step was shortened to hit a target
        h = if clipped { h.max(step * grow) } else { step * grow };
    }
    (out, OdeStop::Reached)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let (path, stop) = dopri45(
            |_, y| Some(-y),
            |_, _| Ok(()),
            0.0,
            DVector::from_vec(vec![1.0]),
            2.0,
            &OdeOptions::new(1e-10),
        );
        assert_eq!(stop, OdeStop::Reached);
        let (t, y) = path.last().unwrap();
        assert_eq!(*t, 2.0);
        assert!((y[0] - (-2f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn checkpoints_are_hit() {
        let mut o = OdeOptions::new(1e-8);
        o.checkpoints = vec![0.25, 0.5];
        let (path, _) = dopri45(|_, y| Some(y.clone()), |_, _| Ok(()), 0.0, DVector::from_vec(vec![1.0]), 1.0, &o);
        assert!(path.iter().any(|(t, _)| *t == 0.25));
        assert!(path.iter().any(|(t, _)| *t == 0.5));
    }

    #[test]
    fn finite_time_blowup_collapses() {
        // y' = y^2, y(0) = 1 blows up at t = 1.
        let (path, stop) =
            dopri45(|_, y| Some(y.map(|v| v * v)), |_, _| Ok(()), 0.0, DVector::from_vec(vec![1.0]), 2.0, &OdeOptions::new(1e-9));
        assert!(matches!(stop, OdeStop::StepCollapse | OdeStop::Overflow));
        let t_last = path.last().unwrap().0;
        assert!(t_last > 0.999 && t_last < 1.0 + 1e-9);
    }

    #[test]
    fn veto_stops() {
        let (_, stop) = dopri45(
            |_, y| Some(y.clone()),
            |t, _| if t > 0.5 { Err("late".into()) } else { Ok(()) },
            0.0,
            DVector::from_vec(vec![1.0]),
            1.0,
            &OdeOptions::new(1e-8),
        );
        assert_eq!(stop, OdeStop::Invalid("late".into()));
    }
}

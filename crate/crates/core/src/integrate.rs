//! Dormand–Prince 5(4) with dense output and a positivity guard.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrateError {
    #[error("trajectory left the positive orthant near t = {0}")]
    LeftPositiveOrthant(f64),
    #[error("step size underflow at t = {0}")]
    StepSizeUnderflow(f64),
    #[error("exceeded {0} steps")]
    TooManySteps(usize),
    #[error("sample times must be monotone in the integration direction")]
    BadSamples,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeLabel {
    Original,
    Transformed,
}

/// States at the requested sample times.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub time_label: TimeLabel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dopri5Options {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Components `0..guard` must stay strictly positive.
    pub guard: usize,
}

impl Dopri5Options {
    pub fn new(tol: f64, guard: usize) -> Self {
        Dopri5Options {
            rtol: tol,
            atol: tol,
            max_steps: 1_000_000,
            guard,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub trajectory: Trajectory,
    pub accepted: usize,
    pub rejected: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn combo(y: &[f64], h: f64, terms: &[(f64, &[f64])], out: &mut [f64]) {
    for i in 0..y.len() {
        let s: f64 = terms.iter().map(|(w, k)| w * k[i]).sum();
        out[i] = y[i] + h * s;
    }
}

fn admissible(y: &[f64], guard: usize) -> bool {
    y.iter().all(|v| v.is_finite()) && y[..guard].iter().all(|&v| v > 0.0)
}

fn error_norm(e: &[f64], y0: &[f64], y1: &[f64], opts: &Dopri5Options) -> f64 {
    let n = e.len().max(1) as f64;
    let sum: f64 = e
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(ei, (a, b))| {
            let sc = opts.atol + opts.rtol * a.abs().max(b.abs());
            (ei / sc).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

/// Integrates `y' = f(t, y)` from `(t0, y0)` and returns the states at
/// `samples` (monotone, starting at or after `t0` in the direction of
/// integration). The last sample is the end time.
pub fn integrate<F>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    samples: &[f64],
    opts: &Dopri5Options,
) -> Result<Solution, IntegrateError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    if !admissible(y0, opts.guard.min(n)) {
        return Err(IntegrateError::LeftPositiveOrthant(t0));
    }
    let guard = opts.guard.min(n);
    let t_end = samples.last().copied().unwrap_or(t0);
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    if samples.windows(2).any(|w| (w[1] - w[0]) * dir < 0.0)
        || samples.first().is_some_and(|&s| (s - t0) * dir < 0.0)
    {
        return Err(IntegrateError::BadSamples);
    }

    let mut out_states = Vec::with_capacity(samples.len());
    let mut next_sample = 0;
    while next_sample < samples.len() && samples[next_sample] == t0 {
        out_states.push(y0.to_vec());
        next_sample += 1;
    }

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    f(t, &y, &mut k1);
    let mut h = initial_step(&mut f, t, &y, &k1, dir, (t_end - t0).abs(), opts);
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) = (
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
    );
    let mut stage = vec![0.0; n];
    let mut y1 = vec![0.0; n];
    let mut err = vec![0.0; n];
    let (mut accepted, mut rejected) = (0usize, 0usize);
    let mut positivity_rejects = 0usize;

    while next_sample < samples.len() {
        if accepted + rejected >= opts.max_steps {
            return Err(IntegrateError::TooManySteps(opts.max_steps));
        }
        let remaining = (t_end - t).abs();
        let mut last = false;
        if h.abs() >= remaining {
            h = dir * remaining;
            last = true;
        }
        if h.abs() <= 1e-14 * t.abs().max(1.0) {
            return Err(if positivity_rejects > 0 {
                IntegrateError::LeftPositiveOrthant(t)
            } else {
                IntegrateError::StepSizeUnderflow(t)
            });
        }

        combo(&y, h, &[(A21, &k1)], &mut stage);
        let mut ok = admissible(&stage, guard);
        if ok {
            f(t + C2 * h, &stage, &mut k2);
            combo(&y, h, &[(A31, &k1), (A32, &k2)], &mut stage);
            ok = admissible(&stage, guard);
        }
        if ok {
            f(t + C3 * h, &stage, &mut k3);
            combo(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)], &mut stage);
            ok = admissible(&stage, guard);
        }
        if ok {
            f(t + C4 * h, &stage, &mut k4);
            combo(
                &y,
                h,
                &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)],
                &mut stage,
            );
            ok = admissible(&stage, guard);
        }
        if ok {
            f(t + C5 * h, &stage, &mut k5);
            combo(
                &y,
                h,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
                &mut stage,
            );
            ok = admissible(&stage, guard);
        }
        if ok {
            f(t + h, &stage, &mut k6);
            combo(
                &y,
                h,
                &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
                &mut y1,
            );
            ok = admissible(&y1, guard);
        }
        if ok {
            f(t + h, &y1, &mut k7);
            ok = k7.iter().all(|v| v.is_finite());
        }
        if !ok {
            positivity_rejects += 1;
            rejected += 1;
            h *= 0.25;
            continue;
        }

        for i in 0..n {
            err[i] =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let e = error_norm(&err, &y, &y1, opts);
        if !e.is_finite() || e > 1.0 {
            rejected += 1;
            let fac = if e.is_finite() {
                (0.9 * e.powf(-0.2)).max(0.2)
            } else {
                0.2
            };
            h *= fac;
            continue;
        }

        accepted += 1;
        positivity_rejects = 0;
        let t_new = if last { t_end } else { t + h };
        while next_sample < samples.len() && (samples[next_sample] - t_new) * dir <= 0.0 {
            let s = samples[next_sample];
            let theta = if h == 0.0 { 1.0 } else { (s - t) / h };
            out_states.push(dense(&y, &y1, &[&k1, &k3, &k4, &k5, &k6, &k7], h, theta));
            next_sample += 1;
        }
        t = t_new;
        std::mem::swap(&mut y, &mut y1);
        std::mem::swap(&mut k1, &mut k7);
        let fac = if e == 0.0 {
            10.0
        } else {
            (0.9 * e.powf(-0.2)).clamp(0.2, 10.0)
        };
        h *= fac;
    }

    Ok(Solution {
        trajectory: Trajectory {
            times: samples.to_vec(),
            states: out_states,
            time_label: TimeLabel::Original,
        },
        accepted,
        rejected,
    })
}

fn dense(y0: &[f64], y1: &[f64], k: &[&[f64]; 6], h: f64, theta: f64) -> Vec<f64> {
    let [k1, k3, k4, k5, k6, k7] = *k;
    let theta1 = 1.0 - theta;
    (0..y0.len())
        .map(|i| {
            let r2 = y1[i] - y0[i];
            let r3 = h * k1[i] - r2;
            let r4 = r2 - h * k7[i] - r3;
            let r5 =
                h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            y0[i] + theta * (r2 + theta1 * (r3 + theta * (r4 + theta1 * r5)))
        })
        .collect()
}

fn initial_step<F>(
    f: &mut F,
    t: f64,
    y: &[f64],
    k1: &[f64],
    dir: f64,
    span: f64,
    opts: &Dopri5Options,
) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if span == 0.0 {
        return 0.0;
    }
    let n = y.len().max(1) as f64;
    let scale = |v: &[f64]| -> f64 {
        (v.iter()
            .zip(y)
            .map(|(a, b)| (a / (opts.atol + opts.rtol * b.abs())).powi(2))
            .sum::<f64>()
            / n)
            .sqrt()
    };
    let d0 = scale(y);
    let d1 = scale(k1);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h0 = h0.min(span);
    let probe: Vec<f64> = y.iter().zip(k1).map(|(a, b)| a + dir * h0 * b).collect();
    let mut k2 = vec![0.0; y.len()];
    if admissible(&probe, opts.guard.min(y.len())) {
        f(t + dir * h0, &probe, &mut k2);
    } else {
        return dir * h0 * 0.01;
    }
    let diff: Vec<f64> = k2.iter().zip(k1).map(|(a, b)| a - b).collect();
    let d2 = scale(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    let h = (100.0 * h0).min(h1).min(span);
    if h.is_finite() && h > 0.0 {
        dir * h
    } else {
        dir * h0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(t_end: f64, k: usize) -> Vec<f64> {
        (0..k).map(|i| t_end * i as f64 / (k - 1) as f64).collect()
    }

    #[test]
    fn exponential_decay() {
        let opts = Dopri5Options::new(1e-10, 1);
        let sol = integrate(|_, y, d| d[0] = -y[0], 0.0, &[1.0], &grid(2.0, 21), &opts).unwrap();
        for (t, s) in sol.trajectory.times.iter().zip(&sol.trajectory.states) {
            assert!((s[0] - (-t).exp()).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn logistic_like_closed_form() {
        let opts = Dopri5Options::new(1e-10, 1);
        let sol = integrate(
            |_, y, d| d[0] = -y[0] * y[0],
            0.0,
            &[1.0],
            &grid(3.0, 31),
            &opts,
        )
        .unwrap();
        for (t, s) in sol.trajectory.times.iter().zip(&sol.trajectory.states) {
            assert!((s[0] - 1.0 / (1.0 + t)).abs() < 1e-9);
        }
    }

    #[test]
    fn backward_direction() {
        let opts = Dopri5Options::new(1e-10, 1);
        let samples: Vec<f64> = (0..11).map(|i| -(i as f64) * 0.1).collect();
        let sol = integrate(|_, y, d| d[0] = y[0], 0.0, &[1.0], &samples, &opts).unwrap();
        assert!((sol.trajectory.states[10][0] - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn zero_component_rejected_at_start() {
        let opts = Dopri5Options::new(1e-10, 2);
        let err =
            integrate(|_, _, d| d.fill(0.0), 0.0, &[1.0, 0.0], &[0.0, 1.0], &opts).unwrap_err();
        assert_eq!(err, IntegrateError::LeftPositiveOrthant(0.0));
    }

    #[test]
    fn leaving_orthant_is_reported() {
        // x' = -1 reaches zero at t = 1; evaluate through a log so the field is
        // undefined beyond.
        let opts = Dopri5Options::new(1e-10, 1);
        let err = integrate(
            |_, y, d| d[0] = -(y[0].ln() * 0.0 + 1.0),
            0.0,
            &[1.0],
            &[0.0, 2.0],
            &opts,
        );
        assert!(
            matches!(err, Err(IntegrateError::LeftPositiveOrthant(t)) if (t - 1.0).abs() < 1e-3)
        );
    }

    #[test]
    fn step_halving_self_check() {
        // Euler rigid body, a = (1, 2, 3); the solution blows up near t = 0.838.
        let f = |_: f64, x: &[f64], d: &mut [f64]| {
            d[0] = x[1] * x[2];
            d[1] = 2.0 * x[0] * x[2];
            d[2] = 3.0 * x[0] * x[1];
        };
        let samples = grid(0.5, 50);
        let x0 = [1.0, 0.5, 1.0 / 3.0];
        let a = integrate(f, 0.0, &x0, &samples, &Dopri5Options::new(1e-10, 3)).unwrap();
        let b = integrate(f, 0.0, &x0, &samples, &Dopri5Options::new(1e-12, 3)).unwrap();
        for (sa, sb) in a.trajectory.states.iter().zip(&b.trajectory.states) {
            for (u, v) in sa.iter().zip(sb) {
                assert!((u - v).abs() / v.abs() < 1e-8);
            }
        }
    }
}

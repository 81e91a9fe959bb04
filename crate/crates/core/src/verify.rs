//! Numerical certification of reductions.
//!
//! The original system is integrated, its trajectory is pushed through the
//! transformation chain (states and times), and the reduced system is
//! integrated independently from the mapped initial condition. The two must
//! agree on the variables that were decoupled from the first one.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::coeff::Coefficient;
use crate::exec::{self, ExecMode};
use crate::integrate::{integrate as dopri5, Dopri5Options, IntegrateError, Solution, Trajectory};
use crate::linalg::{rat_to_f64, Rational};
use crate::reduce::{ReducedSystem, ReductionResult};
use crate::system::{ExpQPSystem, QPSystem, SystemError};
use crate::transform::{Direction, NumericChain, TransformError};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_SAMPLES: usize = 200;
/// Reports pass when every error measure is at most this multiple of `tol`.
pub const PASS_FACTOR: f64 = 1e4;
const REL_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("coefficient `{0}` is not numeric; bind its parameters")]
    Unbound(String),
    #[error("expected {expected} initial values, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// A QP vector field with every coefficient evaluated:
/// `ẋᵢ = xᵢ (λᵢ + Σⱼ Aᵢⱼ exp(Σₖ Bⱼₖ ln xₖ + Γⱼ t))`.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericSystem {
    n: usize,
    m: usize,
    lambda: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    gamma: Vec<f64>,
}

fn numeric(c: &Coefficient) -> Result<f64, VerifyError> {
    c.as_rational()
        .map(|r| rat_to_f64(&r))
        .ok_or_else(|| VerifyError::Unbound(c.to_string()))
}

impl NumericSystem {
    fn build(
        a: &[Vec<Coefficient>],
        b: &crate::linalg::RatMatrix,
        lambda: &[Coefficient],
        gamma: Option<&[Coefficient]>,
    ) -> Result<Self, VerifyError> {
        let n = lambda.len();
        let m = b.rows();
        let mut fa = Vec::with_capacity(n * m);
        for row in a {
            for c in row {
                fa.push(numeric(c)?);
            }
        }
        let fb = (0..m)
            .flat_map(|j| (0..n).map(move |k| (j, k)))
            .map(|(j, k)| rat_to_f64(b.get(j, k)))
            .collect();
        let gamma = match gamma {
            Some(g) => g.iter().map(numeric).collect::<Result<_, _>>()?,
            None => vec![0.0; m],
        };
        Ok(NumericSystem {
            n,
            m,
            lambda: lambda.iter().map(numeric).collect::<Result<_, _>>()?,
            a: fa,
            b: fb,
            gamma,
        })
    }

    pub fn from_qp(sys: &QPSystem) -> Result<Self, VerifyError> {
        Self::build(&sys.a, &sys.b, &sys.lambda, None)
    }

    pub fn from_exp(sys: &ExpQPSystem) -> Result<Self, VerifyError> {
        Self::build(
            &sys.a,
            &sys.b,
            &vec![Coefficient::zero(); sys.n()],
            Some(&sys.gamma),
        )
    }

    pub fn from_reduced(sys: &ReducedSystem) -> Result<Self, VerifyError> {
        match sys {
            ReducedSystem::Autonomous(s) => Self::from_qp(s),
            ReducedSystem::Exponential(s) => Self::from_exp(s),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `d(ln xᵢ)/dt`.
    pub fn log_rates(&self, t: f64, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.lambda);
        let logs: Vec<f64> = x.iter().map(|v| v.ln()).collect();
        for j in 0..self.m {
            let e: f64 = self.b[j * self.n..(j + 1) * self.n]
                .iter()
                .zip(&logs)
                .map(|(b, l)| b * l)
                .sum::<f64>()
                + self.gamma[j] * t;
            let mono = e.exp();
            for (i, o) in out.iter_mut().enumerate().take(self.n) {
                *o += self.a[i * self.m + j] * mono;
            }
        }
    }

    pub fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
        self.log_rates(t, x, out);
        for (o, v) in out.iter_mut().zip(x) {
            *o *= v;
        }
    }
}

pub fn sample_grid(t_end: f64, samples: usize) -> Vec<f64> {
    let k = samples.max(2);
    (0..k)
        .map(|i| {
            if i + 1 == k {
                t_end
            } else {
                t_end * i as f64 / (k - 1) as f64
            }
        })
        .collect()
}

fn check_x0(n: usize, x0: &[f64]) -> Result<(), VerifyError> {
    if x0.len() != n {
        return Err(VerifyError::Dimension {
            expected: n,
            got: x0.len(),
        });
    }
    Ok(())
}

/// Integrates `sys` on `[0, t_end]` and samples it on the uniform grid.
pub fn integrate(
    sys: &NumericSystem,
    x0: &[f64],
    t_end: f64,
    tol: f64,
) -> Result<Solution, VerifyError> {
    check_x0(sys.n, x0)?;
    let samples = sample_grid(t_end, DEFAULT_SAMPLES);
    Ok(dopri5(
        |t, x, d| sys.eval(t, x, d),
        0.0,
        x0,
        &samples,
        &Dopri5Options::new(tol, sys.n),
    )?)
}

/// Original trajectory together with the final time variable `τ(t)`,
/// `τ(0) = 0`.
fn integrate_with_time(
    sys: &NumericSystem,
    chain: &NumericChain,
    x0: &[f64],
    samples: &[f64],
    tol: f64,
) -> Result<(Solution, Vec<f64>), VerifyError> {
    let n = sys.n;
    if !chain.has_monomial_ntt() {
        let sol = dopri5(
            |t, x, d| sys.eval(t, x, d),
            0.0,
            x0,
            samples,
            &Dopri5Options::new(tol, n),
        )?;
        let taus = samples
            .iter()
            .map(|&t| chain.closed_form_time(t).expect("no monomial time change"))
            .collect();
        return Ok((sol, taus));
    }
    let mut start = x0.to_vec();
    start.push(0.0);
    let rhs = |t: f64, x: &[f64], d: &mut [f64]| {
        sys.eval(t, &x[..n], &mut d[..n]);
        d[n] = chain.time_rate(&x[..n], t).unwrap_or(f64::NAN);
    };
    let mut sol = dopri5(rhs, 0.0, &start, samples, &Dopri5Options::new(tol, n))?;
    let taus = sol
        .trajectory
        .states
        .iter_mut()
        .map(|s| s.pop().expect("augmented state"))
        .collect();
    Ok((sol, taus))
}

/// `τ` at the sample times of `base`, which must start at `t = 0`: closed
/// form for exponential time changes, otherwise by integrating the original
/// system augmented with `τ̇ = dτ/dt`.
pub fn transport_time(
    chain: &NumericChain,
    sys: &NumericSystem,
    base: &Trajectory,
    tol: f64,
) -> Result<Vec<f64>, VerifyError> {
    if !chain.has_monomial_ntt() {
        return Ok(base
            .times
            .iter()
            .map(|&t| chain.closed_form_time(t).expect("closed form"))
            .collect());
    }
    let x0 = base.states.first().ok_or(VerifyError::Dimension {
        expected: sys.n,
        got: 0,
    })?;
    Ok(integrate_with_time(sys, chain, x0, &base.times, tol)?.1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub tol: f64,
    pub samples: usize,
    pub mode: ExecMode,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            tol: DEFAULT_TOL,
            samples: DEFAULT_SAMPLES,
            mode: ExecMode::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    /// Max relative deviation over sample points and variables `2..n`.
    pub max_rel_error: f64,
    /// Max relative deviation per variable, including the decoupled one.
    pub per_variable: Vec<f64>,
    /// Deviation of the decoupled variable obtained from its quadrature.
    pub quadrature_error: f64,
    /// Kernel case: max relative change of the constants of motion.
    pub constants_drift: Option<f64>,
    /// Reduced field against the exactly transported derivative of the mapped
    /// trajectory (variables `2..n`, relative with unit floor).
    pub residual: f64,
    /// Same comparison with derivatives from finite differences on the grid.
    pub fd_residual: f64,
    pub steps_taken: usize,
    pub tol: f64,
    pub samples: usize,
    pub t_end: f64,
    pub tau_end: f64,
}

impl VerifyReport {
    pub fn threshold(&self) -> f64 {
        PASS_FACTOR * self.tol
    }

    pub fn passed(&self) -> bool {
        let limit = self.threshold();
        self.max_rel_error <= limit
            && self.quadrature_error <= limit
            && self.residual <= limit
            && self.constants_drift.is_none_or(|d| d <= limit)
    }
}

fn bind_reduced(
    r: &ReducedSystem,
    values: &BTreeMap<String, Rational>,
) -> Result<ReducedSystem, SystemError> {
    Ok(match r {
        ReducedSystem::Autonomous(s) => ReducedSystem::Autonomous(s.bind_params(values)?),
        ReducedSystem::Exponential(s) => ReducedSystem::Exponential(s.bind_params(values)?),
    })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(REL_FLOOR)
}

/// Integrates both systems and compares them through the chain.
pub fn verify_reduction(
    sys: &QPSystem,
    result: &ReductionResult,
    values: &BTreeMap<String, Rational>,
    x0: &[f64],
    t_end: f64,
    opts: &VerifyOptions,
) -> Result<VerifyReport, VerifyError> {
    let original = NumericSystem::from_qp(&sys.bind_params(values)?)?;
    let reduced = NumericSystem::from_reduced(&bind_reduced(&result.reduced, values)?)?;
    let chain = result.chain.bind(values)?;
    let n = original.n;
    check_x0(n, x0)?;
    let tol = opts.tol;
    let samples = sample_grid(t_end, opts.samples);

    let (orig, taus) = integrate_with_time(&original, &chain, x0, &samples, tol)?;
    let states = &orig.trajectory.states;
    let mapped: Vec<Vec<f64>> = exec::map_range(opts.mode, samples.len(), |k| {
        chain.map_state(Direction::Forward, &states[k], samples[k])
    })
    .into_iter()
    .collect::<Result<_, _>>()?;

    let red = dopri5(
        |t, y, d| reduced.eval(t, y, d),
        0.0,
        &mapped[0],
        &taus,
        &Dopri5Options::new(tol, n),
    )?;
    let red_states = &red.trajectory.states;

    let mut per_variable = vec![0.0f64; n];
    for (a, b) in red_states.iter().zip(&mapped) {
        for i in 0..n {
            per_variable[i] = per_variable[i].max(rel(a[i], b[i]));
        }
    }
    let max_rel_error = per_variable.iter().skip(1).copied().fold(0.0, f64::max);
    let quadrature_error = per_variable.first().copied().unwrap_or(0.0);

    let constants_drift = (!result.constants.is_empty()).then(|| {
        let mut drift = 0.0f64;
        for s in &mapped {
            for c in &result.constants {
                drift = drift.max(rel(s[c.variable], mapped[0][c.variable]));
            }
        }
        drift
    });

    // Exact transport: d ln y/dτ = (transported d ln x/dt) / (dτ/dt).
    let residuals: Vec<Result<f64, VerifyError>> = exec::map_range(opts.mode, samples.len(), |k| {
        let t = samples[k];
        let mut lx = vec![0.0; n];
        original.log_rates(t, &states[k], &mut lx);
        let rate = chain.time_rate(&states[k], t)?;
        let transported = chain.transport_log_derivative(&lx);
        let mut ly = vec![0.0; n];
        reduced.log_rates(taus[k], &mapped[k], &mut ly);
        Ok((1..n)
            .map(|i| (transported[i] / rate - ly[i]).abs() / ly[i].abs().max(1.0))
            .fold(0.0, f64::max))
    });
    let mut residual = 0.0f64;
    for r in residuals {
        residual = residual.max(r?);
    }
    let fd_residual = fd_residual(&reduced, &taus, &mapped);

    Ok(VerifyReport {
        max_rel_error,
        per_variable,
        quadrature_error,
        constants_drift,
        residual,
        fd_residual,
        steps_taken: orig.accepted + red.accepted,
        tol,
        samples: samples.len(),
        t_end,
        tau_end: taus.last().copied().unwrap_or(0.0),
    })
}

/// Second-order three-point differences on the (possibly nonuniform) `τ`
/// grid compared with the reduced field, variables `2..n`.
fn fd_residual(reduced: &NumericSystem, taus: &[f64], mapped: &[Vec<f64>]) -> f64 {
    let n = reduced.n;
    let mut worst = 0.0f64;
    let mut field = vec![0.0; n];
    for k in 1..taus.len().saturating_sub(1) {
        let h1 = taus[k] - taus[k - 1];
        let h2 = taus[k + 1] - taus[k];
        if h1 == 0.0 || h2 == 0.0 {
            continue;
        }
        let w0 = -h2 / (h1 * (h1 + h2));
        let w1 = (h2 - h1) / (h1 * h2);
        let w2 = h1 / (h2 * (h1 + h2));
        reduced.eval(taus[k], &mapped[k], &mut field);
        for i in 1..n {
            let d = w0 * mapped[k - 1][i] + w1 * mapped[k][i] + w2 * mapped[k + 1][i];
            worst = worst.max((d - field[i]).abs() / field[i].abs().max(1.0));
        }
    }
    worst
}

/// Runs `verify_reduction` once per tolerance, concurrently in parallel mode.
pub fn verify_sweep(
    sys: &QPSystem,
    result: &ReductionResult,
    values: &BTreeMap<String, Rational>,
    x0: &[f64],
    t_end: f64,
    tols: &[f64],
    mode: ExecMode,
) -> Vec<Result<VerifyReport, VerifyError>> {
    exec::map(mode, tols, |&tol| {
        let opts = VerifyOptions {
            tol,
            samples: DEFAULT_SAMPLES,
            mode: ExecMode::Sequential,
        };
        verify_reduction(sys, result, values, x0, t_end, &opts)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::TimeLabel;
    use crate::parse::{lower, parse};
    use crate::reduce::{reduce, BPrimePolicy, ReduceOptions};
    use crate::transform::{TransformChain, TransformStep};

    fn values(pairs: &[(&str, i64)]) -> BTreeMap<String, Rational> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), Rational::from_integer((*v).into())))
            .collect()
    }

    fn fixture(text: &str) -> QPSystem {
        lower(&parse(text).unwrap()).unwrap()
    }

    #[test]
    fn numeric_field_matches_polynomial_form() {
        let sys = NumericSystem::from_qp(&fixture(include_str!("../fixtures/halphen.qp"))).unwrap();
        let x = [0.7, 1.3, 2.1];
        let mut d = [0.0; 3];
        sys.eval(0.0, &x, &mut d);
        let want = [
            x[1] * x[2] - x[0] * x[1] - x[0] * x[2],
            x[0] * x[2] - x[0] * x[1] - x[1] * x[2],
            x[0] * x[1] - x[0] * x[2] - x[1] * x[2],
        ];
        for (a, b) in d.iter().zip(want) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn unbound_parameters_are_errors() {
        let sys = fixture(include_str!("../fixtures/euler.qp"));
        assert!(matches!(
            NumericSystem::from_qp(&sys),
            Err(VerifyError::Unbound(_))
        ));
    }

    #[test]
    fn transport_time_cases() {
        let exp = |g: i64| {
            TransformChain::new(vec![TransformStep::ExpNtt {
                gamma: Coefficient::from(g),
            }])
        };
        let dummy =
            NumericSystem::from_qp(&crate::parse::parse_raw_system("x' = 0").unwrap()).unwrap();
        let base = Trajectory {
            times: vec![0.0, 0.5, 1.0],
            states: vec![vec![2.0]; 3],
            time_label: TimeLabel::Original,
        };
        let t0 = transport_time(
            &exp(0).bind(&BTreeMap::new()).unwrap(),
            &dummy,
            &base,
            1e-10,
        )
        .unwrap();
        assert_eq!(t0, vec![0.0, 0.5, 1.0]);
        let t1 = transport_time(
            &exp(1).bind(&BTreeMap::new()).unwrap(),
            &dummy,
            &base,
            1e-10,
        )
        .unwrap();
        assert!((t1[2] - (std::f64::consts::E - 1.0)).abs() < 1e-15);
        let ntt = TransformChain::new(vec![TransformStep::MonomialNtt {
            prefactor: Coefficient::one(),
            beta: vec![Rational::from_integer(1.into())],
        }]);
        let taus =
            transport_time(&ntt.bind(&BTreeMap::new()).unwrap(), &dummy, &base, 1e-10).unwrap();
        for (t, tau) in base.times.iter().zip(taus) {
            assert!((tau - 2.0 * t).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_chain_is_integrator_noise() {
        let sys = fixture(include_str!("../fixtures/halphen.qp"));
        let mut result = reduce(&sys, &ReduceOptions::default()).unwrap();
        result.chain = TransformChain::default();
        result.reduced = ReducedSystem::Autonomous(sys.clone());
        let report = verify_reduction(
            &sys,
            &result,
            &BTreeMap::new(),
            &[1.0, 2.0, 3.0],
            0.3,
            &VerifyOptions::default(),
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-8, "{report:?}");
        assert!(report.residual < 1e-12);
    }

    #[test]
    fn euler_round_trip_before_blowup() {
        let sys = fixture(include_str!("../fixtures/euler.qp"));
        let opts = ReduceOptions {
            policy: BPrimePolicy::CvmIdentity,
            ..Default::default()
        };
        let result = reduce(&sys, &opts).unwrap();
        let v = values(&[("a1", 1), ("a2", 2), ("a3", 3)]);
        let report = verify_reduction(
            &sys,
            &result,
            &v,
            &[1.0, 0.5, 1.0 / 3.0],
            0.5,
            &VerifyOptions::default(),
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
        assert!(report.max_rel_error < 1e-6);
        assert!(report.quadrature_error < 100.0 * 1e-10 * 10.0, "{report:?}");
        assert!(report.fd_residual < 1e-3, "{report:?}");
    }

    #[test]
    fn euler_past_blowup_fails() {
        let sys = fixture(include_str!("../fixtures/euler.qp"));
        let result = reduce(&sys, &ReduceOptions::default()).unwrap();
        let v = values(&[("a1", 1), ("a2", 2), ("a3", 3)]);
        let err = verify_reduction(
            &sys,
            &result,
            &v,
            &[1.0, 0.5, 1.0 / 3.0],
            1.0,
            &VerifyOptions::default(),
        );
        assert!(err.is_err());
    }

    #[test]
    fn riccati_constants_drift() {
        let sys = fixture(include_str!("../fixtures/riccati3.qp"));
        let result = reduce(&sys, &ReduceOptions::default()).unwrap();
        let v = values(&[
            ("l1", 1),
            ("l2", 2),
            ("l3", 3),
            ("a1", -1),
            ("a2", -1),
            ("a3", -1),
        ]);
        let report = verify_reduction(
            &sys,
            &result,
            &v,
            &[1.0, 1.0, 1.0],
            0.5,
            &VerifyOptions::default(),
        )
        .unwrap();
        assert!(report.constants_drift.unwrap() < 1e-7, "{report:?}");
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn maxwell_bound_round_trip() {
        let sys = fixture(include_str!("../fixtures/maxwell_bloch.qp"));
        let v = values(&[("x30", 0), ("a1", 1), ("a2", 1), ("a3", 2), ("a4", 2)]);
        let bound = sys.substitute(&v).unwrap().normalize().unwrap();
        let result = reduce(&bound, &ReduceOptions::default()).unwrap();
        let report = verify_reduction(
            &bound,
            &result,
            &BTreeMap::new(),
            &[0.1, 0.1, 1.0],
            1.0,
            &VerifyOptions::default(),
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn sweep_modes_agree() {
        let sys = fixture(include_str!("../fixtures/halphen.qp"));
        let result = reduce(&sys, &ReduceOptions::default()).unwrap();
        let x0 = [1.0, 2.0, 3.0];
        let tols = [1e-8, 1e-10];
        let p = verify_sweep(
            &sys,
            &result,
            &BTreeMap::new(),
            &x0,
            0.3,
            &tols,
            ExecMode::Parallel,
        );
        let s = verify_sweep(
            &sys,
            &result,
            &BTreeMap::new(),
            &x0,
            0.3,
            &tols,
            ExecMode::Sequential,
        );
        assert_eq!(p, s);
        let e: Vec<f64> = p.into_iter().map(|r| r.unwrap().max_rel_error).collect();
        assert!(e[1] < e[0], "{e:?}");
    }
}

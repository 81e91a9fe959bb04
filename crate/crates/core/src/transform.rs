//! Ordered, invertible records of the substitutions applied during a
//! reduction, and their action on concrete states and times.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::coeff::{CoeffError, Coefficient};
use crate::linalg::{rat_to_f64, LinalgError, RatMatrix, Rational};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransformError {
    #[error("state component {index} is {value}; monomial maps need a positive state")]
    NonPositiveState { index: usize, value: f64 },
    #[error("state has {got} components, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Coeff(#[from] CoeffError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransformStep {
    /// `xᵢ = Πₖ yₖ^Cᵢₖ` (old variables `x`, new variables `y`).
    Qmt { c: RatMatrix },
    /// `dτ = prefactor · Πₖ xₖ^βₖ dt`.
    MonomialNtt {
        prefactor: Coefficient,
        beta: Vec<Rational>,
    },
    /// `yᵢ = e^{−λᵢ t} xᵢ`.
    ExpScaling { lambda: Vec<Coefficient> },
    /// `dτ = e^{γ t} dt`.
    ExpNtt { gamma: Coefficient },
}

impl TransformStep {
    pub fn kind(&self) -> &'static str {
        match self {
            TransformStep::Qmt { .. } => "qmt",
            TransformStep::MonomialNtt { .. } => "monomial_ntt",
            TransformStep::ExpScaling { .. } => "exp_scaling",
            TransformStep::ExpNtt { .. } => "exp_ntt",
        }
    }

    fn bind(&self, values: &BTreeMap<String, Rational>) -> Result<NumericStep, TransformError> {
        Ok(match self {
            TransformStep::Qmt { c } => {
                let n = c.rows();
                NumericStep::Qmt {
                    n,
                    c: c.to_f64(),
                    c_inv: c.inverse()?.to_f64(),
                }
            }
            TransformStep::MonomialNtt { prefactor, beta } => NumericStep::MonomialNtt {
                prefactor: prefactor.evaluate_f64(values)?,
                beta: beta.iter().map(rat_to_f64).collect(),
            },
            TransformStep::ExpScaling { lambda } => NumericStep::ExpScaling {
                lambda: lambda
                    .iter()
                    .map(|l| l.evaluate_f64(values))
                    .collect::<Result<_, _>>()?,
            },
            TransformStep::ExpNtt { gamma } => NumericStep::ExpNtt {
                gamma: gamma.evaluate_f64(values)?,
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Original variables to transformed variables.
    Forward,
    /// Transformed variables back to the original ones.
    Inverse,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TransformChain {
    pub steps: Vec<TransformStep>,
}

impl TransformChain {
    pub fn new(steps: Vec<TransformStep>) -> Self {
        TransformChain { steps }
    }

    pub fn push(&mut self, step: TransformStep) {
        self.steps.push(step);
    }

    pub fn extend(&mut self, other: TransformChain) {
        self.steps.extend(other.steps);
    }

    pub fn has_time_change(&self) -> bool {
        self.steps.iter().any(|s| {
            matches!(
                s,
                TransformStep::MonomialNtt { .. } | TransformStep::ExpNtt { .. }
            )
        })
    }

    pub fn bind(
        &self,
        values: &BTreeMap<String, Rational>,
    ) -> Result<NumericChain, TransformError> {
        Ok(NumericChain {
            steps: self
                .steps
                .iter()
                .map(|s| s.bind(values))
                .collect::<Result<_, _>>()?,
        })
    }

    /// Maps a concrete state through the chain at original time `t`.
    pub fn map_state(
        &self,
        values: &BTreeMap<String, Rational>,
        direction: Direction,
        state: &[f64],
        t: f64,
    ) -> Result<Vec<f64>, TransformError> {
        self.bind(values)?.map_state(direction, state, t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NumericStep {
    Qmt {
        n: usize,
        c: Vec<f64>,
        c_inv: Vec<f64>,
    },
    MonomialNtt {
        prefactor: f64,
        beta: Vec<f64>,
    },
    ExpScaling {
        lambda: Vec<f64>,
    },
    ExpNtt {
        gamma: f64,
    },
}

/// A chain with every parameter bound, ready for per-sample evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericChain {
    pub steps: Vec<NumericStep>,
}

impl NumericChain {
    pub fn map_state(
        &self,
        direction: Direction,
        state: &[f64],
        t: f64,
    ) -> Result<Vec<f64>, TransformError> {
        check_positive(state)?;
        let mut s = state.to_vec();
        match direction {
            Direction::Forward => {
                for step in &self.steps {
                    s = forward_step(step, &s, t)?;
                }
            }
            Direction::Inverse => {
                for step in self.steps.iter().rev() {
                    s = inverse_step(step, &s, t)?;
                }
            }
        }
        Ok(s)
    }

    /// `dτ/dt` of the final time variable along a trajectory of the original
    /// system, evaluated at original state `state` and time `t`.
    pub fn time_rate(&self, state: &[f64], t: f64) -> Result<f64, TransformError> {
        let mut rate = 1.0;
        let mut s = state.to_vec();
        for step in &self.steps {
            match step {
                NumericStep::MonomialNtt { prefactor, beta } => {
                    let log_xi: f64 = beta.iter().zip(&s).map(|(b, x)| b * x.ln()).sum();
                    rate *= prefactor * log_xi.exp();
                }
                NumericStep::ExpNtt { gamma } => rate *= (gamma * t).exp(),
                _ => s = forward_step(step, &s, t)?,
            }
        }
        Ok(rate)
    }

    /// Closed-form `τ(t)` when the chain has no state-dependent time change.
    pub fn closed_form_time(&self, t: f64) -> Option<f64> {
        let mut gamma = 0.0;
        for step in &self.steps {
            match step {
                NumericStep::MonomialNtt { .. } => return None,
                NumericStep::ExpNtt { gamma: g } => gamma += g,
                _ => {}
            }
        }
        Some(exp_ntt_time(gamma, t))
    }

    pub fn has_monomial_ntt(&self) -> bool {
        self.steps
            .iter()
            .any(|s| matches!(s, NumericStep::MonomialNtt { .. }))
    }

    /// Logarithmic-derivative transport: given `d(log x)/dt` at the original
    /// state, returns `d(log w)/dt` for the transformed state `w` (before any
    /// division by the time rate). QMTs act linearly on logarithms, and the
    /// exponential scaling subtracts `λ`.
    pub fn transport_log_derivative(&self, log_rate: &[f64]) -> Vec<f64> {
        let mut d = log_rate.to_vec();
        for step in &self.steps {
            match step {
                NumericStep::Qmt { n, c_inv, .. } => d = mat_vec(c_inv, *n, &d),
                NumericStep::ExpScaling { lambda } => {
                    for (v, l) in d.iter_mut().zip(lambda) {
                        *v -= l;
                    }
                }
                _ => {}
            }
        }
        d
    }
}

/// `τ = (e^{γt} − 1)/γ`, and `τ = t` for `γ = 0`.
pub fn exp_ntt_time(gamma: f64, t: f64) -> f64 {
    if gamma == 0.0 {
        t
    } else {
        (gamma * t).exp_m1() / gamma
    }
}

fn check_positive(state: &[f64]) -> Result<(), TransformError> {
    match state.iter().position(|&v| v.is_nan() || v <= 0.0) {
        Some(index) => Err(TransformError::NonPositiveState {
            index,
            value: state[index],
        }),
        None => Ok(()),
    }
}

fn mat_vec(m: &[f64], n: usize, v: &[f64]) -> Vec<f64> {
    (0..n)
        .map(|r| (0..n).map(|k| m[r * n + k] * v[k]).sum())
        .collect()
}

fn log_map(m: &[f64], n: usize, s: &[f64]) -> Result<Vec<f64>, TransformError> {
    if s.len() != n {
        return Err(TransformError::Dimension {
            expected: n,
            got: s.len(),
        });
    }
    let logs: Vec<f64> = s.iter().map(|v| v.ln()).collect();
    Ok(mat_vec(m, n, &logs).into_iter().map(f64::exp).collect())
}

fn forward_step(step: &NumericStep, s: &[f64], t: f64) -> Result<Vec<f64>, TransformError> {
    Ok(match step {
        // x = y^C  ⇒  log y = C⁻¹ log x
        NumericStep::Qmt { n, c_inv, .. } => log_map(c_inv, *n, s)?,
        NumericStep::ExpScaling { lambda } => s
            .iter()
            .zip(lambda)
            .map(|(x, l)| (-l * t).exp() * x)
            .collect(),
        NumericStep::MonomialNtt { .. } | NumericStep::ExpNtt { .. } => s.to_vec(),
    })
}

fn inverse_step(step: &NumericStep, s: &[f64], t: f64) -> Result<Vec<f64>, TransformError> {
    Ok(match step {
        NumericStep::Qmt { n, c, .. } => log_map(c, *n, s)?,
        NumericStep::ExpScaling { lambda } => s
            .iter()
            .zip(lambda)
            .map(|(y, l)| (l * t).exp() * y)
            .collect(),
        NumericStep::MonomialNtt { .. } | NumericStep::ExpNtt { .. } => s.to_vec(),
    })
}

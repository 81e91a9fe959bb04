//! Decoupling one variable of a quasipolynomial system.
//!
//! The three situations handled are distinguished by `λ` and by the number
//! of quasimonomials `m` relative to the number of variables `n`:
//!
//! * Case I (`λ = 0`, `m = n`): a quasimonomial transformation `C` with
//!   `B·C` having a first column of ones always exists (`C = B⁻¹·B'`).
//! * Case II (`λ = 0`, `m > n`): the same `C` exists iff the augmented
//!   matrix `[B | 1]` still has rank `n`, i.e. iff the ones vector lies in
//!   the column space of `B`. Since `rank(B) = n`, that membership is exactly
//!   `rank([B | 1]) = n`, and the solution of `B·c = 1` is then unique.
//! * Case III (`λ ≠ 0`): the exponential scaling `y = e^{−λt} x` leaves time
//!   factors `e^{Γⱼ t}`, `Γ = B·λ`; when all `Γⱼ` coincide they are absorbed
//!   by `dτ = e^{γt} dt` and the problem falls back to Case I or II.
//!
//! After the transformation every equation carries a factor `y₁`, which the
//! new time `dτ = y₁ dt` removes; equations `2..n` then no longer involve
//! `y₁`, and the first one is a quadrature.
//!
//! When the uniform-`Γ` condition fails but the coefficient matrix `A` has a
//! nontrivial rational left kernel, choosing the rows of `C⁻¹` in that kernel
//! makes the corresponding transformed variables constants of motion
//! ([`kernel_decoupling`]).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_traits::{One, Zero};
use thiserror::Error;

use crate::coeff::{Atom, Coefficient};
use crate::linalg::{LinalgError, RatMatrix, Rational};
use crate::system::{left_multiply_vec, ExpQPSystem, QPSystem, SystemError};
use crate::transform::{TransformChain, TransformStep};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CaseLabel {
    CaseI,
    CaseII,
    CaseIII,
}

impl fmt::Display for CaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CaseLabel::CaseI => "CaseI",
            CaseLabel::CaseII => "CaseII",
            CaseLabel::CaseIII => "CaseIII",
        })
    }
}

/// How the free columns `2..n` of the target exponent matrix are chosen.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum BPrimePolicy {
    /// `B'ᵢⱼ = δᵢⱼ` for `j ≥ 2`.
    CvmIdentity,
    /// Solve `B·c₁ = 1` and complete `C` with standard basis columns.
    #[default]
    Completion,
    /// Caller-supplied `C`; `B·C` must have a first column of ones.
    Explicit(RatMatrix),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReduceOptions {
    pub policy: BPrimePolicy,
    /// Constant factor of the decoupling time change `dτ = p · y₁ dt`.
    pub prefactor: Coefficient,
}

impl Default for ReduceOptions {
    fn default() -> Self {
        ReduceOptions {
            policy: BPrimePolicy::Completion,
            prefactor: Coefficient::one(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Satisfiability {
    Yes,
    No,
    NeedsBinding,
}

impl fmt::Display for Satisfiability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Satisfiability::Yes => "satisfiable",
            Satisfiability::No => "unsatisfiable",
            Satisfiability::NeedsBinding => "needs-binding",
        })
    }
}

/// The uniform-`Γ` requirement as linear forms `Γⱼ − Γ₁ = 0`, `j = 2..m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionSet {
    pub equations: Vec<Coefficient>,
    pub satisfiable: Satisfiability,
}

impl ConditionSet {
    /// Solves the conditions for as many parameters as possible (treating
    /// every distinct parameter product as an independent unknown). Returns
    /// `None` when the equations are inconsistent.
    pub fn solved_form(&self) -> Option<BTreeMap<String, Coefficient>> {
        let atoms = atom_list(self.equations.iter());
        let system = LinearForms::new(&self.equations, &atoms);
        let (pivots, reduced) = system.rref()?;
        let k = system.unknowns.len();
        let mut out = BTreeMap::new();
        for (row, &col) in pivots.iter().enumerate() {
            let Some((name, 1)) = single_param(&system.unknowns[col]) else {
                continue;
            };
            let mut expr = Coefficient::from(reduced[row][k].clone());
            for (j, other) in system.unknowns.iter().enumerate() {
                if j != col && !reduced[row][j].is_zero() {
                    expr += &Coefficient::term(other.clone(), -reduced[row][j].clone());
                }
            }
            out.insert(name.to_string(), expr);
        }
        Some(out)
    }
}

/// Evidence attached to a negative reducibility verdict.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NotReducibleWitness {
    pub n: usize,
    /// `rank([B | 1])`; `n + 1` means the ones column is outside `colspace(B)`.
    pub augmented_rank: Option<usize>,
    pub conditions: Option<ConditionSet>,
    /// Rank of `A` over the rationals (all parameter products independent).
    pub coefficient_rank: Option<usize>,
}

impl fmt::Display for NotReducibleWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(r) = self.augmented_rank {
            parts.push(format!("rank([B|1]) = {r} with n = {}", self.n));
        }
        if let Some(c) = &self.conditions {
            parts.push(format!("uniform-Gamma conditions {}", c.satisfiable));
        }
        if let Some(r) = self.coefficient_rank {
            parts.push(format!("rank(A) = {r}"));
        }
        write!(f, "{}", parts.join("; "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReduceError {
    #[error("system is not reducible: {0}")]
    NotReducible(Box<NotReducibleWitness>),
    #[error("identity-column target is infeasible: columns {columns:?} lie outside the column space of B")]
    PolicyInfeasible { columns: Vec<usize> },
    #[error("explicit QMT rejected: {0}")]
    InvalidExplicitQmt(String),
    #[error("reduction expects {expected}, system is {found}")]
    WrongCase {
        expected: &'static str,
        found: CaseLabel,
    },
    #[error("uniform-Gamma conditions are {}", .0.satisfiable)]
    ConditionsUnsatisfied(ConditionSet),
    #[error(
        "coefficient matrix has full rank {rank}; no constants of motion from its left kernel"
    )]
    FullRank { rank: usize },
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReducedSystem {
    Autonomous(QPSystem),
    /// Nonautonomous result of kernel decoupling (time factors remain).
    Exponential(ExpQPSystem),
}

impl ReducedSystem {
    pub fn n(&self) -> usize {
        match self {
            ReducedSystem::Autonomous(s) => s.n(),
            ReducedSystem::Exponential(s) => s.n(),
        }
    }

    pub fn var_names(&self) -> &[String] {
        match self {
            ReducedSystem::Autonomous(s) => &s.var_names,
            ReducedSystem::Exponential(s) => &s.var_names,
        }
    }

    pub fn autonomous(&self) -> Option<&QPSystem> {
        match self {
            ReducedSystem::Autonomous(s) => Some(s),
            ReducedSystem::Exponential(_) => None,
        }
    }

    /// `Aᵢⱼ` and `B` of the reduced system, whichever variant it is.
    fn parts(&self) -> (&[Vec<Coefficient>], &RatMatrix) {
        match self {
            ReducedSystem::Autonomous(s) => (&s.a, &s.b),
            ReducedSystem::Exponential(s) => (&s.a, &s.b),
        }
    }
}

/// `zᵢ = Πₖ xₖ^exponentsₖ · e^{−time_rate·t}` is constant along solutions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstantOfMotion {
    pub variable: usize,
    pub exponents: Vec<Rational>,
    pub time_rate: Coefficient,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReductionResult {
    pub case: CaseLabel,
    pub reduced: ReducedSystem,
    /// Index of the decoupled variable in `reduced` (always 0).
    pub decoupled_index: usize,
    /// Original variable whose slot the decoupled variable took, when the
    /// completion policy picked a pivot.
    pub replaced_index: Option<usize>,
    pub chain: TransformChain,
    /// The quasimonomial transformation used, if any.
    pub qmt: Option<RatMatrix>,
    /// The system right after the quasimonomial transformation (before the
    /// time change), for reporting `B'` and `A'`.
    pub transformed: Option<QPSystem>,
    pub conditions: Option<ConditionSet>,
    pub quadrature_note: String,
    pub constants: Vec<ConstantOfMotion>,
}

pub fn classify(sys: &QPSystem) -> CaseLabel {
    if !sys.lambda_is_zero() {
        CaseLabel::CaseIII
    } else if sys.m() == sys.n() {
        CaseLabel::CaseI
    } else {
        CaseLabel::CaseII
    }
}

/// Transformation matrix `C` whose product `B·C` has a first column of ones.
pub fn build_qmt(sys: &QPSystem, policy: &BPrimePolicy) -> Result<RatMatrix, ReduceError> {
    let n = sys.n();
    let b = &sys.b;
    let rank = b.rank();
    if rank < n {
        return Err(SystemError::NonMaximalRank { rank, n }.into());
    }
    let augmented_rank = b.augment_ones().rank();
    if augmented_rank > n {
        return Err(ReduceError::NotReducible(Box::new(NotReducibleWitness {
            n,
            augmented_rank: Some(augmented_rank),
            ..Default::default()
        })));
    }
    match policy {
        BPrimePolicy::Completion => {
            let ones = RatMatrix::from_column(vec![Rational::one(); b.rows()]);
            let c1 = b.solve_right(&ones)?.column(0);
            let pivot = c1
                .iter()
                .position(|v| !v.is_zero())
                .expect("B·c = 1 forces c ≠ 0");
            let mut c = RatMatrix::zeros(n, n);
            for (r, v) in c1.into_iter().enumerate() {
                c.set(r, 0, v);
            }
            for (col, k) in (0..n).filter(|&k| k != pivot).enumerate() {
                c.set(k, col + 1, Rational::one());
            }
            Ok(c)
        }
        BPrimePolicy::CvmIdentity => {
            let mut target = RatMatrix::zeros(b.rows(), n);
            for r in 0..b.rows() {
                target.set(r, 0, Rational::one());
            }
            for j in 1..n.min(b.rows()) {
                target.set(j, j, Rational::one());
            }
            match b.solve_right(&target) {
                Ok(c) => Ok(c),
                Err(LinalgError::Inconsistent { columns }) => {
                    Err(ReduceError::PolicyInfeasible { columns })
                }
                Err(e) => Err(e.into()),
            }
        }
        BPrimePolicy::Explicit(c) => {
            if c.rows() != n || c.cols() != n {
                return Err(ReduceError::InvalidExplicitQmt(format!(
                    "C must be {n}x{n}"
                )));
            }
            let bc = b.checked_mul(c)?;
            if !bc.column(0).iter().all(One::is_one) {
                return Err(ReduceError::InvalidExplicitQmt(
                    "first column of B·C is not all ones".into(),
                ));
            }
            if c.rank() < n {
                return Err(ReduceError::InvalidExplicitQmt("C is singular".into()));
            }
            Ok(c.clone())
        }
    }
}

/// Cases I and II: quasimonomial transformation followed by `dτ = p·y₁ dt`.
pub fn reduce_lambda_zero(
    sys: &QPSystem,
    opts: &ReduceOptions,
) -> Result<ReductionResult, ReduceError> {
    let case = classify(sys);
    if case == CaseLabel::CaseIII {
        return Err(ReduceError::WrongCase {
            expected: "lambda = 0",
            found: case,
        });
    }
    let n = sys.n();
    let c = build_qmt(sys, &opts.policy)?;
    let names = fresh_names(sys, n);
    let transformed = sys.apply_qmt(&c)?.with_var_names(names);
    let mut beta = vec![Rational::zero(); n];
    if n > 0 {
        beta[0] = Rational::one();
    }
    let reduced = transformed.apply_monomial_ntt(&opts.prefactor, &beta)?;
    let replaced_index = match opts.policy {
        BPrimePolicy::Completion => c.column(0).iter().position(|v| !v.is_zero()),
        _ => None,
    };
    let chain = TransformChain::new(vec![
        TransformStep::Qmt { c: c.clone() },
        TransformStep::MonomialNtt {
            prefactor: opts.prefactor.clone(),
            beta,
        },
    ]);
    let result = ReductionResult {
        case,
        quadrature_note: quadrature_note(&reduced),
        reduced: ReducedSystem::Autonomous(reduced),
        decoupled_index: 0,
        replaced_index,
        chain,
        qmt: Some(c),
        transformed: Some(transformed),
        conditions: None,
        constants: Vec::new(),
    };
    debug_assert!(is_decoupled(&result.reduced));
    Ok(result)
}

/// Uniform-`Γ` conditions for an exponentially scaled system.
pub fn gamma_conditions(esys: &ExpQPSystem) -> ConditionSet {
    let equations: Vec<Coefficient> = esys
        .gamma
        .iter()
        .skip(1)
        .map(|g| g - &esys.gamma[0])
        .collect();
    if equations.iter().all(Coefficient::is_zero) {
        return ConditionSet {
            equations,
            satisfiable: Satisfiability::Yes,
        };
    }
    let atoms = atom_list(equations.iter().chain(&esys.origin_lambda));
    let system = LinearForms::new(&equations, &atoms);
    let satisfiable = if !system.consistent() {
        Satisfiability::No
    } else if esys
        .origin_lambda
        .iter()
        .all(|l| system.vanishes_on_solutions(l))
    {
        // The only parameter values meeting the conditions make λ ≡ 0, so
        // the system is not a λ ≠ 0 system there at all.
        Satisfiability::No
    } else {
        Satisfiability::NeedsBinding
    };
    ConditionSet {
        equations,
        satisfiable,
    }
}

/// Case III: exponential scaling, `dτ = e^{γt} dt`, then Case I or II.
pub fn reduce_case3(sys: &QPSystem, opts: &ReduceOptions) -> Result<ReductionResult, ReduceError> {
    let case = classify(sys);
    if case != CaseLabel::CaseIII {
        return Err(ReduceError::WrongCase {
            expected: "lambda != 0",
            found: case,
        });
    }
    let esys = sys.exp_scale();
    let conditions = gamma_conditions(&esys);
    if conditions.satisfiable != Satisfiability::Yes {
        return Err(ReduceError::ConditionsUnsatisfied(conditions));
    }
    let gamma = esys.gamma.first().cloned().unwrap_or_default();
    let mut chain = TransformChain::new(vec![
        TransformStep::ExpScaling {
            lambda: sys.lambda.clone(),
        },
        TransformStep::ExpNtt { gamma },
    ]);
    let inner = esys.autonomous_part();
    if inner.m() == 0 {
        // Pure linear system: after scaling every variable is constant.
        let reduced = inner.with_var_names(fresh_names(sys, sys.n()));
        return Ok(ReductionResult {
            case,
            quadrature_note: "all scaled variables are constant".into(),
            reduced: ReducedSystem::Autonomous(reduced),
            decoupled_index: 0,
            replaced_index: None,
            chain,
            qmt: None,
            transformed: None,
            conditions: Some(conditions),
            constants: Vec::new(),
        });
    }
    let sub = reduce_lambda_zero(&inner, opts).map_err(|e| match e {
        ReduceError::NotReducible(mut w) => {
            w.conditions = Some(conditions.clone());
            ReduceError::NotReducible(w)
        }
        other => other,
    })?;
    chain.extend(sub.chain);
    Ok(ReductionResult {
        case,
        chain,
        conditions: Some(conditions),
        ..sub
    })
}

/// Rank of `A` over the rationals, treating every parameter product as an
/// independent symbol.
pub fn coefficient_rank(a: &[Vec<Coefficient>]) -> usize {
    expand_coefficients(a).rank()
}

/// Constants of motion from the rational left kernel of `A`. With
/// `r = rank(A)`, the last `n − r` rows of `C⁻¹` span `{w : wᵀA = 0}` and the
/// first `r` rows are unit vectors completing them to a basis (lowest indices
/// first), so the transformed variables `r+1..n` have vanishing coefficient
/// rows. For `r = 1` this decouples everything but the first variable.
pub fn kernel_decoupling(esys: &ExpQPSystem) -> Result<ReductionResult, ReduceError> {
    let n = esys.n();
    let expanded = expand_coefficients(&esys.a);
    let rank = expanded.rank();
    if rank == n {
        return Err(ReduceError::FullRank { rank });
    }
    let kernel = expanded.left_null_space();
    let mut completion: Vec<Vec<Rational>> = Vec::new();
    for k in 0..n {
        if completion.len() == rank {
            break;
        }
        let mut rows = completion.clone();
        rows.push(unit_row(n, k));
        rows.extend(kernel.iter().cloned());
        if RatMatrix::from_rows(rows).rank() == completion.len() + 1 + kernel.len() {
            completion.push(unit_row(n, k));
        }
    }
    let mut rows = completion;
    rows.extend(kernel);
    let c_inv = RatMatrix::from_rows(rows);
    let c = c_inv.inverse()?;
    let names = fresh_names_exp(esys, n);
    let transformed = esys.apply_qmt(&c)?.with_var_names(names);
    debug_assert!(transformed
        .a
        .iter()
        .skip(rank)
        .flatten()
        .all(Coefficient::is_zero));
    let lambda_t = left_multiply_vec(&c_inv, &esys.origin_lambda);
    let constants = (rank..n)
        .map(|i| ConstantOfMotion {
            variable: i,
            exponents: c_inv.row(i).to_vec(),
            time_rate: lambda_t[i].clone(),
        })
        .collect();
    let chain = TransformChain::new(vec![
        TransformStep::ExpScaling {
            lambda: esys.origin_lambda.clone(),
        },
        TransformStep::Qmt { c: c.clone() },
    ]);
    let case = if esys.origin_lambda.iter().all(Coefficient::is_zero) {
        if esys.m() == n {
            CaseLabel::CaseI
        } else {
            CaseLabel::CaseII
        }
    } else {
        CaseLabel::CaseIII
    };
    let note = if rank == 1 {
        format!(
            "{}' depends on t and {} only; it is a nonautonomous quadrature once the constants are fixed",
            transformed.var_names[0],
            transformed.var_names[1..].join(", ")
        )
    } else {
        format!(
            "{} are constants; {} remain coupled and nonautonomous",
            transformed.var_names[rank..].join(", "),
            transformed.var_names[..rank].join(", ")
        )
    };
    Ok(ReductionResult {
        case,
        reduced: ReducedSystem::Exponential(transformed),
        decoupled_index: 0,
        replaced_index: None,
        chain,
        qmt: Some(c),
        transformed: None,
        conditions: None,
        quadrature_note: note,
        constants,
    })
}

/// Dispatch over Cases I–III with the kernel fallback for Case III.
pub fn reduce(sys: &QPSystem, opts: &ReduceOptions) -> Result<ReductionResult, ReduceError> {
    match classify(sys) {
        CaseLabel::CaseI | CaseLabel::CaseII => reduce_lambda_zero(sys, opts),
        CaseLabel::CaseIII => {
            let esys = sys.exp_scale();
            let conditions = gamma_conditions(&esys);
            let attempt = if conditions.satisfiable == Satisfiability::Yes {
                Some(reduce_case3(sys, opts))
            } else {
                None
            };
            let witness_from = match attempt {
                Some(Ok(result)) => return Ok(result),
                Some(Err(ReduceError::NotReducible(w))) => Some(w),
                Some(Err(other)) => return Err(other),
                None => None,
            };
            let rank = coefficient_rank(&esys.a);
            // Only a rank-one kernel reduction isolates a single variable.
            if rank < sys.n() {
                let mut result = kernel_decoupling(&esys)?;
                if is_decoupled(&result.reduced) {
                    result.conditions = Some(conditions);
                    return Ok(result);
                }
            }
            let mut witness = witness_from.map(|w| *w).unwrap_or_default();
            witness.n = sys.n();
            witness.conditions = Some(conditions);
            witness.coefficient_rank = Some(rank);
            Err(ReduceError::NotReducible(Box::new(witness)))
        }
    }
}

/// For every quasimonomial used by equations `2..n`, the exponent of
/// variable 1 is zero.
pub fn is_decoupled(reduced: &ReducedSystem) -> bool {
    let (a, b) = reduced.parts();
    (0..b.rows()).all(|j| {
        let used = a.iter().skip(1).any(|row| !row[j].is_zero());
        !used || b.get(j, 0).is_zero()
    })
}

fn quadrature_note(reduced: &QPSystem) -> String {
    let names = &reduced.var_names;
    if names.len() <= 1 {
        return format!(
            "{}' is a pure quadrature; no equations remain",
            names.first().map_or("", String::as_str)
        );
    }
    format!(
        "{}' = {} * (function of {}); log {} follows by quadrature along the reduced flow",
        names[0],
        names[0],
        names[1..].join(", "),
        names[0]
    )
}

fn unit_row(n: usize, k: usize) -> Vec<Rational> {
    (0..n)
        .map(|i| {
            if i == k {
                Rational::one()
            } else {
                Rational::zero()
            }
        })
        .collect()
}

const NAME_PREFIXES: [&str; 6] = ["y", "z", "w", "u", "v", "q"];

fn pick_prefix(taken: &BTreeSet<&str>, n: usize) -> String {
    NAME_PREFIXES
        .iter()
        .find(|p| (1..=n).all(|i| !taken.contains(format!("{p}{i}").as_str())))
        .map_or_else(|| "y_".to_string(), |p| p.to_string())
}

fn fresh_names(sys: &QPSystem, n: usize) -> Vec<String> {
    let taken: BTreeSet<&str> = sys
        .var_names
        .iter()
        .chain(&sys.params)
        .map(String::as_str)
        .collect();
    let prefix = pick_prefix(&taken, n);
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

fn fresh_names_exp(sys: &ExpQPSystem, n: usize) -> Vec<String> {
    let taken: BTreeSet<&str> = sys
        .var_names
        .iter()
        .chain(&sys.params)
        .map(String::as_str)
        .collect();
    let prefix = pick_prefix(&taken, n);
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

/// `A` as a rational matrix with one column per (quasimonomial, atom) pair.
fn expand_coefficients(a: &[Vec<Coefficient>]) -> RatMatrix {
    let atoms = atom_list(a.iter().flatten());
    let n = a.len();
    let m = a.first().map_or(0, Vec::len);
    let width = m * atoms.len();
    if width == 0 {
        return RatMatrix::zeros(n, 0);
    }
    let mut out = RatMatrix::zeros(n, width);
    for (i, row) in a.iter().enumerate() {
        for (j, c) in row.iter().enumerate() {
            for (atom, w) in c.terms() {
                let k = atoms.iter().position(|x| x == atom).expect("atom listed");
                out.set(i, j * atoms.len() + k, w.clone());
            }
        }
    }
    out
}

fn atom_list<'a>(coeffs: impl Iterator<Item = &'a Coefficient>) -> Vec<Atom> {
    let set: BTreeSet<Atom> = coeffs
        .flat_map(|c| c.terms().map(|(a, _)| a.clone()))
        .collect();
    set.into_iter().collect()
}

fn single_param(atom: &Atom) -> Option<(&str, i32)> {
    let mut it = atom.powers();
    let first = it.next()?;
    it.next().is_none().then_some(first)
}

/// Linear forms over parameter atoms (the constant atom is the affine part),
/// as the augmented rational system `M·α = r`.
struct LinearForms {
    unknowns: Vec<Atom>,
    augmented: RatMatrix,
}

impl LinearForms {
    fn new(forms: &[Coefficient], atoms: &[Atom]) -> Self {
        let unknowns: Vec<Atom> = atoms.iter().filter(|a| !a.is_one()).cloned().collect();
        let rows = forms
            .iter()
            .map(|f| Self::row(f, &unknowns))
            .collect::<Vec<_>>();
        let augmented = if rows.is_empty() {
            RatMatrix::zeros(0, unknowns.len() + 1)
        } else {
            RatMatrix::from_rows(rows)
        };
        LinearForms {
            unknowns,
            augmented,
        }
    }

    /// Coefficients of the unknowns followed by `−constant`.
    fn row(form: &Coefficient, unknowns: &[Atom]) -> Vec<Rational> {
        let mut row = vec![Rational::zero(); unknowns.len() + 1];
        for (atom, w) in form.terms() {
            if atom.is_one() {
                row[unknowns.len()] = -w.clone();
            } else if let Some(k) = unknowns.iter().position(|u| u == atom) {
                row[k] = w.clone();
            }
        }
        row
    }

    fn consistent(&self) -> bool {
        let k = self.unknowns.len();
        let mut coeff = RatMatrix::zeros(self.augmented.rows(), k);
        for r in 0..self.augmented.rows() {
            for c in 0..k {
                coeff.set(r, c, self.augmented.get(r, c).clone());
            }
        }
        coeff.rank() == self.augmented.rank()
    }

    /// Whether the affine form `f` is zero at every solution (assumes the
    /// system is consistent): `f` must be a combination of the equations.
    fn vanishes_on_solutions(&self, f: &Coefficient) -> bool {
        if f.is_zero() {
            return true;
        }
        if f.terms()
            .any(|(a, _)| !a.is_one() && !self.unknowns.contains(a))
        {
            return false;
        }
        let extra = Self::row(f, &self.unknowns);
        let mut rows = self.augmented.to_rows();
        rows.push(extra);
        RatMatrix::from_rows(rows).rank() == self.augmented.rank()
    }

    /// Reduced row echelon form with pivots among the unknowns; `None` when
    /// inconsistent. The last column of each returned row is the right-hand
    /// side (not negated).
    fn rref(&self) -> Option<(Vec<usize>, Vec<Vec<Rational>>)> {
        if !self.consistent() {
            return None;
        }
        let k = self.unknowns.len();
        let mut m = self.augmented.to_rows();
        let mut pivots = Vec::new();
        let mut row = 0;
        for col in 0..k {
            let Some(p) = (row..m.len()).find(|&r| !m[r][col].is_zero()) else {
                continue;
            };
            m.swap(p, row);
            let inv = m[row][col].recip();
            for v in m[row].iter_mut() {
                *v *= &inv;
            }
            for r in 0..m.len() {
                if r != row && !m[r][col].is_zero() {
                    let f = m[r][col].clone();
                    let pivot_row = m[row].clone();
                    for (v, p) in m[r].iter_mut().zip(&pivot_row).take(k + 1) {
                        *v -= &f * p;
                    }
                }
            }
            pivots.push(col);
            row += 1;
        }
        m.truncate(row);
        Some((pivots, m))
    }
}

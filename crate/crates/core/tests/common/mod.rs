//! Generators and property checks shared by the property suite and the
//! acceptance harness.
#![allow(dead_code)]

use num_traits::{One, Zero};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use qpreduce::coeff::Atom;
use qpreduce::{
    is_decoupled, lower, parse, reduce, render, Coefficient, QPSystem, RatMatrix, Rational,
    ReduceOptions, ReducedSystem,
};

pub const PARAMS: [&str; 2] = ["a1", "a2"];

pub fn small_rational() -> impl Strategy<Value = Rational> {
    (-3i64..=3, prop_oneof![Just(1i64), Just(1), Just(2)])
        .prop_map(|(p, q)| Rational::new(p.into(), q.into()))
}

pub fn int_matrix(rows: usize, cols: usize, range: i64) -> impl Strategy<Value = RatMatrix> {
    proptest::collection::vec(proptest::collection::vec(-range..=range, cols), rows).prop_map(
        |rows| {
            RatMatrix::from_rows(
                rows.into_iter()
                    .map(|r| {
                        r.into_iter()
                            .map(|v| Rational::from_integer(v.into()))
                            .collect()
                    })
                    .collect(),
            )
        },
    )
}

pub fn rat_matrix(rows: usize, cols: usize) -> impl Strategy<Value = RatMatrix> {
    proptest::collection::vec(proptest::collection::vec(small_rational(), cols), rows)
        .prop_map(RatMatrix::from_rows)
}

pub fn invertible(n: usize) -> impl Strategy<Value = RatMatrix> {
    rat_matrix(n, n).prop_filter("singular", |m| leibniz_det(m) != Rational::zero())
}

/// Sum of up to two terms over the parameters with integer powers in -1..=2.
pub fn coefficient() -> impl Strategy<Value = Coefficient> {
    let term = (small_rational(), 0usize..=2, -1i32..=2).prop_map(|(w, which, p)| {
        let atom = match which {
            0 => Atom::one(),
            k => Atom::param(PARAMS[k - 1]).pow(if p == 0 { 1 } else { p }),
        };
        Coefficient::term(atom, w)
    });
    proptest::collection::vec(term, 0..=2).prop_map(|terms| {
        let mut c = Coefficient::zero();
        for t in &terms {
            c += t;
        }
        c
    })
}

/// Systems with n ≤ 4 variables and m ≤ 6 quasimonomials (not normalized).
pub fn system() -> impl Strategy<Value = QPSystem> {
    (1usize..=4, 1usize..=6).prop_flat_map(|(n, m)| {
        (
            rat_matrix(m, n),
            proptest::collection::vec(proptest::collection::vec(coefficient(), m), n),
            proptest::collection::vec(
                prop_oneof![3 => Just(Coefficient::zero()), 1 => coefficient()],
                n,
            ),
        )
            .prop_map(move |(b, a, lambda)| {
                QPSystem::new(
                    (1..=n).map(|i| format!("x{i}")).collect(),
                    PARAMS.iter().map(|s| s.to_string()).collect(),
                    a,
                    b,
                    lambda,
                )
                .expect("consistent dimensions")
            })
    })
}

/// Systems whose normalization succeeds, returned normalized.
pub fn normalized_system() -> impl Strategy<Value = QPSystem> {
    system().prop_filter_map("not of maximal rank", |s| s.normalize().ok())
}

/// `λ = 0` systems with `B = B'·C⁻¹`, where `B'` has a first column of ones,
/// so that `[B | 1]` has rank `n` and the reduction must succeed.
pub fn reducible_system() -> impl Strategy<Value = QPSystem> {
    (1usize..=4, 0usize..=2)
        .prop_flat_map(|(n, extra)| {
            let m = n + extra;
            (
                rat_matrix(m, n.saturating_sub(1)),
                invertible(n),
                proptest::collection::vec(proptest::collection::vec(coefficient(), m), n),
            )
        })
        .prop_filter_map("degenerate", |(tail, c, a)| {
            let n = c.rows();
            let m = tail.rows();
            let rows = (0..m)
                .map(|j| {
                    std::iter::once(Rational::one())
                        .chain(tail.row(j).iter().cloned())
                        .collect()
                })
                .collect();
            let b = RatMatrix::from_rows(rows)
                .checked_mul(&c.inverse().ok()?)
                .ok()?;
            let sys = QPSystem::new(
                (1..=n).map(|i| format!("x{i}")).collect(),
                PARAMS.iter().map(|s| s.to_string()).collect(),
                a,
                b,
                vec![Coefficient::zero(); n],
            )
            .ok()?;
            sys.normalize().ok().filter(|s| s.lambda_is_zero())
        })
}

/// Determinant by the Leibniz permutation expansion.
pub fn leibniz_det(m: &RatMatrix) -> Rational {
    let n = m.rows();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut total = Rational::zero();
    permute(&mut perm, 0, m, &mut total);
    total
}

fn permute(perm: &mut Vec<usize>, k: usize, m: &RatMatrix, total: &mut Rational) {
    let n = perm.len();
    if k == n {
        let inversions = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| perm[i] > perm[j])
            .count();
        let mut prod = Rational::one();
        for (i, &p) in perm.iter().enumerate() {
            prod *= m.get(i, p);
        }
        if inversions % 2 == 1 {
            prod = -prod;
        }
        *total += prod;
        return;
    }
    for i in k..n {
        perm.swap(k, i);
        permute(perm, k + 1, m, total);
        perm.swap(k, i);
    }
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if n < k {
        return vec![];
    }
    let mut out = subsets(n - 1, k);
    for mut s in subsets(n - 1, k - 1) {
        s.push(n - 1);
        out.push(s);
    }
    out
}

/// Rank as the size of the largest nonvanishing minor.
pub fn minor_rank(m: &RatMatrix) -> usize {
    for k in (1..=m.rows().min(m.cols())).rev() {
        for rows in subsets(m.rows(), k) {
            for cols in subsets(m.cols(), k) {
                let sub = RatMatrix::from_rows(
                    rows.iter()
                        .map(|&r| cols.iter().map(|&c| m.get(r, c).clone()).collect())
                        .collect(),
                );
                if !leibniz_det(&sub).is_zero() {
                    return k;
                }
            }
        }
    }
    0
}

pub fn check_qmt_round_trip(sys: &QPSystem, c: &RatMatrix) -> Result<(), TestCaseError> {
    let there = sys
        .apply_qmt(c)
        .map_err(|e| TestCaseError::fail(e.to_string()))?;
    let back = there
        .apply_qmt(&c.inverse().expect("invertible"))
        .map_err(|e| TestCaseError::fail(e.to_string()))?;
    let mut want = sys.clone();
    want.sort_monomials();
    prop_assert_eq!(back, want);
    Ok(())
}

pub fn check_qmt_composition(
    sys: &QPSystem,
    c1: &RatMatrix,
    c2: &RatMatrix,
) -> Result<(), TestCaseError> {
    let stepwise = sys
        .apply_qmt(c1)
        .and_then(|s| s.apply_qmt(c2))
        .map_err(|e| TestCaseError::fail(e.to_string()))?;
    let product = c1.checked_mul(c2).expect("square");
    let direct = sys
        .apply_qmt(&product)
        .map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert_eq!(stepwise, direct);
    Ok(())
}

pub fn check_rank_invariance(b: &RatMatrix, c: &RatMatrix) -> Result<(), TestCaseError> {
    prop_assert_eq!(b.checked_mul(c).unwrap().rank(), b.rank());
    Ok(())
}

pub fn check_rank_oracle(m: &RatMatrix) -> Result<(), TestCaseError> {
    prop_assert_eq!(m.rank(), minor_rank(m));
    if m.rows() == m.cols() {
        prop_assert_eq!(m.determinant().unwrap(), leibniz_det(m));
    }
    Ok(())
}

/// `solve_right` succeeds exactly when `M` has full column rank and the
/// right-hand side lies in its column space, and then solves the system.
pub fn check_solve_oracle(m: &RatMatrix, rhs: &RatMatrix) -> Result<(), TestCaseError> {
    let full_col = minor_rank(m) == m.cols();
    let consistent = minor_rank(&m.hstack(rhs).unwrap()) == minor_rank(m);
    match m.solve_right(rhs) {
        Ok(x) => {
            prop_assert!(full_col && consistent);
            prop_assert_eq!(m.checked_mul(&x).unwrap(), rhs.clone());
        }
        Err(_) => prop_assert!(!(full_col && consistent)),
    }
    Ok(())
}

/// After any successful reduction, equations `2..n` never involve the first
/// transformed variable.
pub fn check_decoupling(sys: &QPSystem) -> Result<(), TestCaseError> {
    let Ok(result) = reduce(sys, &ReduceOptions::default()) else {
        return Ok(());
    };
    check_reduced(&result.reduced)
}

/// Like [`check_decoupling`], but the reduction is required to succeed.
pub fn check_reducible(sys: &QPSystem) -> Result<(), TestCaseError> {
    let result =
        reduce(sys, &ReduceOptions::default()).map_err(|e| TestCaseError::fail(e.to_string()))?;
    check_reduced(&result.reduced)
}

fn check_reduced(reduced: &ReducedSystem) -> Result<(), TestCaseError> {
    let result = reduced;
    prop_assert!(is_decoupled(result));
    match result {
        ReducedSystem::Autonomous(r) => {
            for i in 1..r.n() {
                for exps in r.equation_terms(i).keys() {
                    prop_assert!(
                        exps[0].is_zero(),
                        "equation {} uses the first variable",
                        i + 1
                    );
                }
            }
        }
        ReducedSystem::Exponential(e) => {
            for (i, row) in e.a.iter().enumerate().skip(1) {
                for (j, c) in row.iter().enumerate() {
                    prop_assert!(
                        c.is_zero() || e.b.get(j, 0).is_zero(),
                        "equation {} uses the first variable",
                        i + 1
                    );
                }
            }
        }
    }
    Ok(())
}

pub fn check_parser_round_trip(sys: &QPSystem) -> Result<(), TestCaseError> {
    let text = render(sys);
    let ast = parse(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
    let back = lower(&ast).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
    prop_assert_eq!(&back, sys, "{}", text);
    Ok(())
}

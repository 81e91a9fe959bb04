//! Quasipolynomial systems and the transformations that preserve their form.
//!
//! A system `ẋᵢ = xᵢ (λᵢ + Σⱼ Aᵢⱼ Πₖ xₖ^Bⱼₖ)` is stored as the exponent
//! matrix `B` (one row per quasimonomial), the coefficient matrix `A` (one
//! row per variable, one column per quasimonomial) and the vector `λ`.
//! Quasimonomials are always kept in lexicographic order of their `B` rows so
//! that structural equality of two systems is plain field equality.
//!
//! # New-time transformation rule
//!
//! For `dτ = p · Πₖ xₖ^βₖ dt` with a constant single-term prefactor `p`,
//! dividing the vector field by the time factor gives
//!
//! ```text
//! dxᵢ/dτ = xᵢ ( Σⱼ (Aᵢⱼ/p) · x^(Bⱼ − β) + (λᵢ/p) · x^(−β) )
//! ```
//!
//! so every exponent row is shifted by `−β`, `A` is divided by `p`, and a
//! nonzero `λ` becomes the coefficient column of one extra quasimonomial with
//! exponent row `−β` (leaving `λ' = 0`). When `β = 0` the rule degenerates to
//! a constant rescaling and `λ` stays in place as `λ/p`.

use std::collections::BTreeMap;

use num_traits::Zero;
use thiserror::Error;

use crate::coeff::{CoeffError, Coefficient};
use crate::linalg::{LinalgError, RatMatrix, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SystemError {
    #[error("exponent matrix has rank {rank} < {n}; redundant systems are not supported")]
    NonMaximalRank { rank: usize, n: usize },
    #[error("system has no quasimonomials and no linear part")]
    EmptySystem,
    #[error("new-time prefactor is zero")]
    ZeroPrefactor,
    #[error("inconsistent dimensions: {0}")]
    Dimension(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Coeff(#[from] CoeffError),
}

/// Quasipolynomial system `ẋ = x ∘ (λ + A · x^B)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QPSystem {
    pub var_names: Vec<String>,
    pub params: Vec<String>,
    /// n × m, row-major by variable.
    pub a: Vec<Vec<Coefficient>>,
    /// m × n exponent matrix.
    pub b: RatMatrix,
    pub lambda: Vec<Coefficient>,
}

/// A quasipolynomial system whose quasimonomials carry time factors:
/// `ẏᵢ = yᵢ Σⱼ Aᵢⱼ e^{Γⱼ t} Πₖ yₖ^Bⱼₖ`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpQPSystem {
    pub var_names: Vec<String>,
    pub params: Vec<String>,
    pub a: Vec<Vec<Coefficient>>,
    pub b: RatMatrix,
    pub gamma: Vec<Coefficient>,
    /// The `λ` removed by the exponential scaling, kept for the inverse map.
    pub origin_lambda: Vec<Coefficient>,
}

impl QPSystem {
    pub fn new(
        var_names: Vec<String>,
        params: Vec<String>,
        a: Vec<Vec<Coefficient>>,
        b: RatMatrix,
        lambda: Vec<Coefficient>,
    ) -> Result<Self, SystemError> {
        let sys = QPSystem {
            var_names,
            params,
            a,
            b,
            lambda,
        };
        sys.check_dimensions()?;
        Ok(sys)
    }

    pub fn n(&self) -> usize {
        self.var_names.len()
    }

    pub fn m(&self) -> usize {
        self.b.rows()
    }

    pub fn check_dimensions(&self) -> Result<(), SystemError> {
        let n = self.n();
        let m = self.b.rows();
        if self.b.cols() != n {
            return Err(SystemError::Dimension(format!(
                "B has {} columns, expected {n}",
                self.b.cols()
            )));
        }
        if self.a.len() != n || self.a.iter().any(|row| row.len() != m) {
            return Err(SystemError::Dimension(format!("A must be {n}x{m}")));
        }
        if self.lambda.len() != n {
            return Err(SystemError::Dimension(format!(
                "lambda must have {n} entries"
            )));
        }
        Ok(())
    }

    pub fn lambda_is_zero(&self) -> bool {
        self.lambda.iter().all(Coefficient::is_zero)
    }

    pub fn a_column(&self, j: usize) -> Vec<Coefficient> {
        self.a.iter().map(|row| row[j].clone()).collect()
    }

    /// Brings the system into the standard form expected by the reduction
    /// engine: duplicate quasimonomials merged, constant quasimonomials
    /// folded into `λ`, unused quasimonomials dropped, canonical order, and
    /// `rank(B) = n`.
    pub fn normalize(&self) -> Result<QPSystem, SystemError> {
        self.check_dimensions()?;
        let n = self.n();
        let mut merged = self.merge_duplicates();
        let mut lambda = merged.lambda.clone();
        let mut rows = Vec::new();
        let mut columns = Vec::new();
        for j in 0..merged.m() {
            let column = merged.a_column(j);
            if column.iter().all(Coefficient::is_zero) {
                continue;
            }
            if merged.b.row(j).iter().all(Zero::is_zero) {
                for (l, c) in lambda.iter_mut().zip(&column) {
                    *l += c;
                }
                continue;
            }
            rows.push(merged.b.row(j).to_vec());
            columns.push(column);
        }
        merged.lambda = lambda;
        merged.set_monomials(rows, columns);
        merged.sort_monomials();
        if merged.m() == 0 {
            if merged.lambda_is_zero() {
                return Err(SystemError::EmptySystem);
            }
            return Ok(merged);
        }
        let rank = merged.b.rank();
        if rank < n {
            return Err(SystemError::NonMaximalRank { rank, n });
        }
        Ok(merged)
    }

    /// Merges quasimonomials with identical exponent rows and sorts.
    pub fn merge_duplicates(&self) -> QPSystem {
        let mut index: BTreeMap<Vec<Rational>, usize> = BTreeMap::new();
        let mut rows: Vec<Vec<Rational>> = Vec::new();
        let mut columns: Vec<Vec<Coefficient>> = Vec::new();
        for j in 0..self.m() {
            let row = self.b.row(j).to_vec();
            let column = self.a_column(j);
            match index.get(&row) {
                Some(&k) => {
                    for (acc, c) in columns[k].iter_mut().zip(&column) {
                        *acc += c;
                    }
                }
                None => {
                    index.insert(row.clone(), rows.len());
                    rows.push(row);
                    columns.push(column);
                }
            }
        }
        let mut out = self.clone();
        out.set_monomials(rows, columns);
        out.sort_monomials();
        out
    }

    fn set_monomials(&mut self, rows: Vec<Vec<Rational>>, columns: Vec<Vec<Coefficient>>) {
        let n = self.n();
        self.b = if rows.is_empty() {
            RatMatrix::empty(n)
        } else {
            RatMatrix::from_rows(rows)
        };
        self.a = (0..n)
            .map(|i| columns.iter().map(|col| col[i].clone()).collect())
            .collect();
    }

    /// Orders quasimonomials lexicographically by exponent row.
    pub fn sort_monomials(&mut self) {
        let order = lex_order(&self.b);
        self.b = permute_rows(&self.b, &order);
        for row in &mut self.a {
            *row = order.iter().map(|&j| row[j].clone()).collect();
        }
    }

    /// Quasimonomial transformation `xᵢ = Πₖ yₖ^Cᵢₖ`:
    /// `B' = B·C`, `A' = C⁻¹·A`, `λ' = C⁻¹·λ`.
    pub fn apply_qmt(&self, c: &RatMatrix) -> Result<QPSystem, SystemError> {
        let n = self.n();
        if c.rows() != n || c.cols() != n {
            return Err(SystemError::Dimension(format!(
                "QMT matrix must be {n}x{n}"
            )));
        }
        let c_inv = c.inverse()?;
        let mut out = QPSystem {
            var_names: self.var_names.clone(),
            params: self.params.clone(),
            a: left_multiply(&c_inv, &self.a),
            b: self.b.checked_mul(c)?,
            lambda: left_multiply_vec(&c_inv, &self.lambda),
        };
        out.sort_monomials();
        Ok(out)
    }

    /// New-time transformation `dτ = prefactor · Πₖ xₖ^βₖ dt`; see the module
    /// documentation for the rule.
    pub fn apply_monomial_ntt(
        &self,
        prefactor: &Coefficient,
        beta: &[Rational],
    ) -> Result<QPSystem, SystemError> {
        let n = self.n();
        if beta.len() != n {
            return Err(SystemError::Dimension(format!(
                "beta must have {n} entries"
            )));
        }
        if prefactor.is_zero() {
            return Err(SystemError::ZeroPrefactor);
        }
        let shift_rows = beta.iter().any(|b| !b.is_zero());
        let mut rows: Vec<Vec<Rational>> = (0..self.m())
            .map(|j| self.b.row(j).iter().zip(beta).map(|(e, b)| e - b).collect())
            .collect();
        let mut columns: Vec<Vec<Coefficient>> = Vec::with_capacity(self.m() + 1);
        for j in 0..self.m() {
            let col = self
                .a_column(j)
                .iter()
                .map(|c| c.checked_div(prefactor))
                .collect::<Result<Vec<_>, _>>()?;
            columns.push(col);
        }
        let scaled_lambda = self
            .lambda
            .iter()
            .map(|c| c.checked_div(prefactor))
            .collect::<Result<Vec<_>, _>>()?;
        let mut out = self.clone();
        if shift_rows && !self.lambda_is_zero() {
            rows.push(beta.iter().map(|b| -b).collect());
            columns.push(scaled_lambda);
            out.lambda = vec![Coefficient::zero(); n];
        } else {
            out.lambda = scaled_lambda;
        }
        out.set_monomials(rows, columns);
        Ok(out.merge_duplicates())
    }

    /// Exponential scaling `yᵢ = e^{−λᵢ t} xᵢ`, leaving time factors
    /// `e^{Γⱼ t}` with `Γ = B·λ` on the quasimonomials.
    pub fn exp_scale(&self) -> ExpQPSystem {
        let gamma = (0..self.m())
            .map(|j| {
                let mut g = Coefficient::zero();
                for (e, l) in self.b.row(j).iter().zip(&self.lambda) {
                    g += &l.scale(e);
                }
                g
            })
            .collect();
        ExpQPSystem {
            var_names: self.var_names.clone(),
            params: self.params.clone(),
            a: self.a.clone(),
            b: self.b.clone(),
            gamma,
            origin_lambda: self.lambda.clone(),
        }
    }

    /// Substitutes the given parameters; unbound ones stay symbolic.
    pub fn substitute(&self, values: &BTreeMap<String, Rational>) -> Result<QPSystem, SystemError> {
        Ok(QPSystem {
            var_names: self.var_names.clone(),
            params: self
                .params
                .iter()
                .filter(|p| !values.contains_key(*p))
                .cloned()
                .collect(),
            a: substitute_matrix(&self.a, values)?,
            b: self.b.clone(),
            lambda: substitute_vec(&self.lambda, values)?,
        })
    }

    /// Substitutes every parameter; fails on the first one left unbound.
    pub fn bind_params(
        &self,
        values: &BTreeMap<String, Rational>,
    ) -> Result<QPSystem, SystemError> {
        let bound = self.substitute(values)?;
        ensure_numeric(bound.a.iter().flatten().chain(&bound.lambda))?;
        Ok(bound)
    }

    /// Parameters that actually occur in `A` or `λ`.
    pub fn used_params(&self) -> Vec<String> {
        let mut set = std::collections::BTreeSet::new();
        for c in self.a.iter().flatten().chain(&self.lambda) {
            set.extend(c.params());
        }
        set.into_iter().collect()
    }

    pub fn with_var_names(mut self, names: Vec<String>) -> QPSystem {
        assert_eq!(names.len(), self.n());
        self.var_names = names;
        self
    }

    /// Quasimonomials keyed by exponent row, each with its `A` column.
    pub fn monomials(&self) -> BTreeMap<Vec<Rational>, Vec<Coefficient>> {
        (0..self.m())
            .map(|j| (self.b.row(j).to_vec(), self.a_column(j)))
            .collect()
    }

    /// The right-hand side of equation `i` as a map from full exponent vector
    /// (of the whole term `xᵢ·x^Bⱼ`) to coefficient. Independent of whether a
    /// constant is stored in `λ` or as a zero-exponent quasimonomial.
    pub fn equation_terms(&self, i: usize) -> BTreeMap<Vec<Rational>, Coefficient> {
        let n = self.n();
        let unit = |k: usize| -> Rational {
            if k == i {
                Rational::from_integer(1.into())
            } else {
                Rational::zero()
            }
        };
        let mut terms: BTreeMap<Vec<Rational>, Coefficient> = BTreeMap::new();
        let mut add = |key: Vec<Rational>, c: &Coefficient| {
            if c.is_zero() {
                return;
            }
            let slot = terms.entry(key.clone()).or_default();
            *slot += c;
            if slot.is_zero() {
                terms.remove(&key);
            }
        };
        add((0..n).map(unit).collect(), &self.lambda[i]);
        for j in 0..self.m() {
            let key = (0..n).map(|k| self.b.get(j, k) + unit(k)).collect();
            add(key, &self.a[i][j]);
        }
        terms
    }

    /// True when both systems define the same vector field, regardless of
    /// variable names or of how constants are stored.
    pub fn same_vector_field(&self, other: &QPSystem) -> bool {
        self.n() == other.n()
            && (0..self.n()).all(|i| self.equation_terms(i) == other.equation_terms(i))
    }
}

impl ExpQPSystem {
    pub fn n(&self) -> usize {
        self.var_names.len()
    }

    pub fn m(&self) -> usize {
        self.b.rows()
    }

    /// Quasimonomial transformation; time factors follow their quasimonomial.
    pub fn apply_qmt(&self, c: &RatMatrix) -> Result<ExpQPSystem, SystemError> {
        let n = self.n();
        if c.rows() != n || c.cols() != n {
            return Err(SystemError::Dimension(format!(
                "QMT matrix must be {n}x{n}"
            )));
        }
        let c_inv = c.inverse()?;
        let b = self.b.checked_mul(c)?;
        let a = left_multiply(&c_inv, &self.a);
        let order = lex_order(&b);
        Ok(ExpQPSystem {
            var_names: self.var_names.clone(),
            params: self.params.clone(),
            a: a.iter()
                .map(|row| order.iter().map(|&j| row[j].clone()).collect())
                .collect(),
            b: permute_rows(&b, &order),
            gamma: order.iter().map(|&j| self.gamma[j].clone()).collect(),
            origin_lambda: self.origin_lambda.clone(),
        })
    }

    /// Drops the time factors. Only meaningful once `Γ` has been removed by
    /// an exponential new-time transformation.
    pub fn autonomous_part(&self) -> QPSystem {
        QPSystem {
            var_names: self.var_names.clone(),
            params: self.params.clone(),
            a: self.a.clone(),
            b: self.b.clone(),
            lambda: vec![Coefficient::zero(); self.n()],
        }
    }

    pub fn substitute(
        &self,
        values: &BTreeMap<String, Rational>,
    ) -> Result<ExpQPSystem, SystemError> {
        Ok(ExpQPSystem {
            var_names: self.var_names.clone(),
            params: self
                .params
                .iter()
                .filter(|p| !values.contains_key(*p))
                .cloned()
                .collect(),
            a: substitute_matrix(&self.a, values)?,
            b: self.b.clone(),
            gamma: substitute_vec(&self.gamma, values)?,
            origin_lambda: substitute_vec(&self.origin_lambda, values)?,
        })
    }

    pub fn bind_params(
        &self,
        values: &BTreeMap<String, Rational>,
    ) -> Result<ExpQPSystem, SystemError> {
        let bound = self.substitute(values)?;
        ensure_numeric(
            bound
                .a
                .iter()
                .flatten()
                .chain(&bound.gamma)
                .chain(&bound.origin_lambda),
        )?;
        Ok(bound)
    }

    pub fn with_var_names(mut self, names: Vec<String>) -> ExpQPSystem {
        assert_eq!(names.len(), self.n());
        self.var_names = names;
        self
    }
}

fn ensure_numeric<'a>(
    coeffs: impl IntoIterator<Item = &'a Coefficient>,
) -> Result<(), SystemError> {
    for c in coeffs {
        if let Some(name) = c.params().into_iter().next() {
            return Err(CoeffError::UnboundParameter(name).into());
        }
    }
    Ok(())
}

fn substitute_matrix(
    a: &[Vec<Coefficient>],
    values: &BTreeMap<String, Rational>,
) -> Result<Vec<Vec<Coefficient>>, CoeffError> {
    a.iter().map(|row| substitute_vec(row, values)).collect()
}

fn substitute_vec(
    v: &[Coefficient],
    values: &BTreeMap<String, Rational>,
) -> Result<Vec<Coefficient>, CoeffError> {
    v.iter().map(|c| c.substitute(values)).collect()
}

/// `M · A` for a rational `M` and a coefficient matrix `A`.
pub(crate) fn left_multiply(m: &RatMatrix, a: &[Vec<Coefficient>]) -> Vec<Vec<Coefficient>> {
    let cols = a.first().map_or(0, Vec::len);
    (0..m.rows())
        .map(|r| {
            (0..cols)
                .map(|j| {
                    let mut acc = Coefficient::zero();
                    for (k, row) in a.iter().enumerate() {
                        let f = m.get(r, k);
                        if !f.is_zero() {
                            acc += &row[j].scale(f);
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

pub(crate) fn left_multiply_vec(m: &RatMatrix, v: &[Coefficient]) -> Vec<Coefficient> {
    (0..m.rows())
        .map(|r| {
            let mut acc = Coefficient::zero();
            for (k, c) in v.iter().enumerate() {
                acc += &c.scale(m.get(r, k));
            }
            acc
        })
        .collect()
}

fn lex_order(b: &RatMatrix) -> Vec<usize> {
    let mut order: Vec<usize> = (0..b.rows()).collect();
    order.sort_by(|&x, &y| b.row(x).cmp(b.row(y)));
    order
}

fn permute_rows(b: &RatMatrix, order: &[usize]) -> RatMatrix {
    if order.is_empty() {
        return RatMatrix::empty(b.cols());
    }
    RatMatrix::from_rows(order.iter().map(|&j| b.row(j).to_vec()).collect())
}

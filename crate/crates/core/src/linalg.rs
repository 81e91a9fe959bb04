//! Exact rational matrices.
//!
//! Every structural decision made by the reduction engine (ranks, the
//! augmented-rank reducibility test, invertibility of transformation
//! matrices) goes through this module, so nothing here touches floating
//! point. Rank uses fraction-free (Bareiss) elimination on rows scaled to
//! integers; inversion and solving use Gauss-Jordan over the rationals.
//! Pivots are always the first nonzero entry of the current column, which
//! keeps every result reproducible.

use std::fmt;
use std::ops::Mul;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

/// Exact arbitrary-precision fraction, always in lowest terms with a
/// positive denominator.
pub type Rational = BigRational;

/// Builds `num / den` in lowest terms. Panics if `den == 0`.
pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(value: i64) -> Rational {
    Rational::from_integer(BigInt::from(value))
}

/// Canonical `p/q` string (`q` is always printed, including `/1`).
pub fn rat_to_pq(value: &Rational) -> String {
    format!("{}/{}", value.numer(), value.denom())
}

/// Short form: integers print without a denominator.
pub fn rat_to_short(value: &Rational) -> String {
    if value.is_integer() {
        value.numer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}

/// Parses `p`, `p/q` or a finite decimal such as `-0.25` exactly.
pub fn parse_rational(text: &str) -> Option<Rational> {
    let text = text.trim();
    if text.is_empty() {
        return None;
    }
    if let Some((num, den)) = text.split_once('/') {
        let num: BigInt = num.trim().parse().ok()?;
        let den: BigInt = den.trim().parse().ok()?;
        if den.is_zero() {
            return None;
        }
        return Some(Rational::new(num, den));
    }
    if let Some((whole, frac)) = text.split_once('.') {
        let negative = whole.trim_start().starts_with('-');
        let whole_digits = whole.trim_start_matches(['-', '+']);
        if !frac.chars().all(|c| c.is_ascii_digit())
            || !whole_digits.chars().all(|c| c.is_ascii_digit())
            || (whole_digits.is_empty() && frac.is_empty())
        {
            return None;
        }
        let digits = format!("{whole_digits}{frac}");
        let mut num: BigInt = if digits.is_empty() {
            BigInt::zero()
        } else {
            digits.parse().ok()?
        };
        if negative {
            num = -num;
        }
        let den = num_traits::pow(BigInt::from(10u32), frac.len());
        return Some(Rational::new(num, den));
    }
    let num: BigInt = text.parse().ok()?;
    Some(Rational::from_integer(num))
}

pub fn rat_to_f64(value: &Rational) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinalgError {
    #[error("matrix is singular (rank {rank} < {dim})")]
    Singular { rank: usize, dim: usize },
    #[error("right-hand side columns {columns:?} lie outside the column space")]
    Inconsistent { columns: Vec<usize> },
    #[error("coefficient matrix has rank {rank}, expected full column rank {cols}")]
    RankDeficient { rank: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Dense row-major rational matrix.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct RatMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Rational>,
}

impl fmt::Debug for RatMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RatMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            if r > 0 {
                write!(f, "; ")?;
            }
            let row: Vec<String> = self.row(r).iter().map(rat_to_short).collect();
            write!(f, "{}", row.join(", "))?;
        }
        write!(f, "]")
    }
}

impl RatMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RatMatrix {
            rows,
            cols,
            data: vec![Rational::zero(); rows * cols],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m.data[i * dim + i] = Rational::one();
        }
        m
    }

    /// Row-major construction. Panics on ragged input.
    pub fn from_rows(rows: Vec<Vec<Rational>>) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == ncols), "ragged matrix rows");
        RatMatrix {
            rows: nrows,
            cols: ncols,
            data: rows.into_iter().flatten().collect(),
        }
    }

    /// Integer entries, convenient for fixtures.
    pub fn from_i64(rows: &[&[i64]]) -> Self {
        Self::from_rows(
            rows.iter()
                .map(|r| r.iter().map(|&v| int(v)).collect())
                .collect(),
        )
    }

    /// Zero-row matrix that still remembers its column count.
    pub fn empty(cols: usize) -> Self {
        RatMatrix {
            rows: 0,
            cols,
            data: Vec::new(),
        }
    }

    pub fn from_column(values: Vec<Rational>) -> Self {
        RatMatrix {
            rows: values.len(),
            cols: 1,
            data: values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> &Rational {
        &self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: Rational) {
        self.data[r * self.cols + c] = value;
    }

    pub fn row(&self, r: usize) -> &[Rational] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<Rational> {
        (0..self.rows).map(|r| self.get(r, c).clone()).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<Rational>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.get(r, c).clone());
            }
        }
        t
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(rat_to_f64).collect()
    }

    pub fn is_identity(&self) -> bool {
        self.is_square()
            && (0..self.rows).all(|r| {
                (0..self.cols).all(|c| {
                    let v = self.get(r, c);
                    if r == c {
                        v.is_one()
                    } else {
                        v.is_zero()
                    }
                })
            })
    }

    pub fn checked_mul(&self, rhs: &RatMatrix) -> Result<RatMatrix, LinalgError> {
        if self.cols != rhs.rows {
            return Err(LinalgError::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a.is_zero() {
                    continue;
                }
                for c in 0..rhs.cols {
                    let b = rhs.get(k, c);
                    if !b.is_zero() {
                        out.data[r * rhs.cols + c] += a * b;
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[Rational]) -> Vec<Rational> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|r| {
                self.row(r)
                    .iter()
                    .zip(v)
                    .fold(Rational::zero(), |acc, (a, b)| acc + a * b)
            })
            .collect()
    }

    /// Copy of `self` with a trailing all-ones column (the augmented matrix
    /// whose rank decides Case II reducibility).
    pub fn augment_ones(&self) -> RatMatrix {
        let mut out = Self::zeros(self.rows, self.cols + 1);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(r, c, self.get(r, c).clone());
            }
            out.set(r, self.cols, Rational::one());
        }
        out
    }

    pub fn hstack(&self, rhs: &RatMatrix) -> Result<RatMatrix, LinalgError> {
        if self.rows != rhs.rows {
            return Err(LinalgError::Dimension(format!(
                "hstack of {} and {} rows",
                self.rows, rhs.rows
            )));
        }
        let mut out = Self::zeros(self.rows, self.cols + rhs.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(r, c, self.get(r, c).clone());
            }
            for c in 0..rhs.cols {
                out.set(r, self.cols + c, rhs.get(r, c).clone());
            }
        }
        Ok(out)
    }

    /// Exact rank by fraction-free elimination.
    pub fn rank(&self) -> usize {
        let (_, rank) = bareiss(self.integer_rows());
        rank
    }

    /// Exact determinant (Bareiss); `None` for non-square input.
    pub fn determinant(&self) -> Option<Rational> {
        if !self.is_square() {
            return None;
        }
        if self.rows == 0 {
            return Some(Rational::one());
        }
        // Row r was scaled by scales[r] to clear denominators.
        let mut scale = Rational::one();
        let mut rows = Vec::with_capacity(self.rows);
        for r in 0..self.rows {
            let (ints, lcm) = integer_row(self.row(r));
            scale *= Rational::from_integer(lcm);
            rows.push(ints);
        }
        let n = self.rows;
        let mut sign = 1i32;
        let mut prev = BigInt::one();
        let mut m = rows;
        for k in 0..n {
            let Some(pivot) = (k..n).find(|&r| !m[r][k].is_zero()) else {
                return Some(Rational::zero());
            };
            if pivot != k {
                m.swap(pivot, k);
                sign = -sign;
            }
            for i in k + 1..n {
                for j in k + 1..n {
                    let v = &m[i][j] * &m[k][k] - &m[i][k] * &m[k][j];
                    m[i][j] = v / &prev;
                }
                m[i][k] = BigInt::zero();
            }
            prev = m[k][k].clone();
        }
        let det = Rational::from_integer(m[n - 1][n - 1].clone()) / scale;
        Some(if sign < 0 { -det } else { det })
    }

    fn integer_rows(&self) -> Vec<Vec<BigInt>> {
        (0..self.rows).map(|r| integer_row(self.row(r)).0).collect()
    }

    /// Exact inverse.
    pub fn inverse(&self) -> Result<RatMatrix, LinalgError> {
        if !self.is_square() {
            return Err(LinalgError::Dimension(format!(
                "inverse of non-square {}x{} matrix",
                self.rows, self.cols
            )));
        }
        let n = self.rows;
        let aug = self.hstack(&Self::identity(n))?;
        let (reduced, pivots) = rref(&aug);
        let rank = pivots.iter().filter(|&&p| p < n).count();
        if rank < n {
            return Err(LinalgError::Singular { rank, dim: n });
        }
        let mut inv = Self::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                inv.set(r, c, reduced.get(r, n + c).clone());
            }
        }
        Ok(inv)
    }

    /// Solves `self · X = rhs` for `X` when `self` (m×n) has full column
    /// rank. The solution is unique when it exists; columns of `rhs`
    /// outside the column space are reported together.
    pub fn solve_right(&self, rhs: &RatMatrix) -> Result<RatMatrix, LinalgError> {
        if self.rows != rhs.rows {
            return Err(LinalgError::Dimension(format!(
                "solve with {} equations but {} right-hand-side rows",
                self.rows, rhs.rows
            )));
        }
        let n = self.cols;
        let aug = self.hstack(rhs)?;
        let (reduced, pivots) = rref(&aug);
        let rank = pivots.iter().filter(|&&p| p < n).count();
        if rank < n {
            return Err(LinalgError::RankDeficient { rank, cols: n });
        }
        // Rows below the first n are zero in the coefficient part; any
        // nonzero entry there on the right marks an inconsistent column.
        let columns: Vec<usize> = (0..rhs.cols)
            .filter(|&c| (n..self.rows).any(|r| !reduced.get(r, n + c).is_zero()))
            .collect();
        if !columns.is_empty() {
            return Err(LinalgError::Inconsistent { columns });
        }
        let mut x = Self::zeros(n, rhs.cols);
        for r in 0..n {
            for c in 0..rhs.cols {
                x.set(r, c, reduced.get(r, n + c).clone());
            }
        }
        Ok(x)
    }

    /// Basis of the right null space `{v : self·v = 0}`; one vector per free
    /// column of the reduced row echelon form, scaled to a primitive integer
    /// vector whose first nonzero entry is positive.
    pub fn null_space(&self) -> Vec<Vec<Rational>> {
        let (reduced, pivots) = rref(self);
        let free: Vec<usize> = (0..self.cols).filter(|c| !pivots.contains(c)).collect();
        free.iter()
            .map(|&f| {
                let mut v = vec![Rational::zero(); self.cols];
                v[f] = Rational::one();
                for (r, &p) in pivots.iter().enumerate() {
                    v[p] = -reduced.get(r, f).clone();
                }
                primitive_integer_vector(&v)
            })
            .collect()
    }

    /// Basis of the left null space `{w : wᵀ·self = 0}`.
    pub fn left_null_space(&self) -> Vec<Vec<Rational>> {
        self.transpose().null_space()
    }
}

impl Mul for &RatMatrix {
    type Output = RatMatrix;

    fn mul(self, rhs: &RatMatrix) -> RatMatrix {
        self.checked_mul(rhs).expect("matrix dimension mismatch")
    }
}

/// Scales a rational vector to coprime integers with a positive leading
/// entry. The zero vector is returned unchanged.
pub fn primitive_integer_vector(v: &[Rational]) -> Vec<Rational> {
    let (ints, _) = integer_row(v);
    let g = ints.iter().fold(BigInt::zero(), |g, x| g.gcd(x));
    if g.is_zero() {
        return v.to_vec();
    }
    let lead_negative = ints
        .iter()
        .find(|x| !x.is_zero())
        .is_some_and(|x| x.is_negative());
    ints.into_iter()
        .map(|x| {
            let q = x / &g;
            Rational::from_integer(if lead_negative { -q } else { q })
        })
        .collect()
}

/// Clears denominators of one row; returns the integer row and the
/// multiplier used.
fn integer_row(row: &[Rational]) -> (Vec<BigInt>, BigInt) {
    let lcm = row.iter().fold(BigInt::one(), |acc, v| acc.lcm(v.denom()));
    let ints = row.iter().map(|v| v.numer() * (&lcm / v.denom())).collect();
    (ints, lcm)
}

/// Fraction-free Gaussian elimination. Returns the echelon form and rank.
fn bareiss(mut m: Vec<Vec<BigInt>>) -> (Vec<Vec<BigInt>>, usize) {
    let nrows = m.len();
    let ncols = m.first().map_or(0, Vec::len);
    let mut rank = 0;
    let mut prev = BigInt::one();
    for col in 0..ncols {
        if rank == nrows {
            break;
        }
        let Some(pivot) = (rank..nrows).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(pivot, rank);
        for i in rank + 1..nrows {
            for j in col + 1..ncols {
                let v = &m[i][j] * &m[rank][col] - &m[i][col] * &m[rank][j];
                // Exact by Sylvester's identity.
                m[i][j] = v / &prev;
            }
            m[i][col] = BigInt::zero();
        }
        prev = m[rank][col].clone();
        rank += 1;
    }
    (m, rank)
}

/// Reduced row echelon form over the rationals; returns the matrix and the
/// pivot column of each nonzero row.
fn rref(input: &RatMatrix) -> (RatMatrix, Vec<usize>) {
    let mut m = input.clone();
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..m.cols {
        if row == m.rows {
            break;
        }
        let Some(pivot) = (row..m.rows).find(|&r| !m.get(r, col).is_zero()) else {
            continue;
        };
        if pivot != row {
            for c in 0..m.cols {
                m.data.swap(pivot * m.cols + c, row * m.cols + c);
            }
        }
        let inv = m.get(row, col).recip();
        for c in col..m.cols {
            let v = m.get(row, c) * &inv;
            m.set(row, c, v);
        }
        for r in 0..m.rows {
            if r == row || m.get(r, col).is_zero() {
                continue;
            }
            let factor = m.get(r, col).clone();
            for c in col..m.cols {
                let v = m.get(r, c) - &factor * m.get(row, c);
                m.set(r, c, v);
            }
        }
        pivots.push(col);
        row += 1;
    }
    (m, pivots)
}

//! Three-objective test selection as a QUBO.
//!
//! For weight `alpha` and penalty `P` the energy of a selection `x` is
//!
//! ```text
//! H(x) = alpha * sum_i cost_i x_i - (1 - alpha) * sum_i e_i x_i
//!        + sum_k [ -P * sum_{i in T_k} x_i + 2P * sum_{i<j in T_k} x_i x_j ]
//! ```
//!
//! where `T_k` is the set of tests executing statement `k`. The bracket is
//! `P * (1 - sum x)^2` without its constant `+P`, so a selection covering every
//! statement exactly once sits at `-P * #statements` plus the linear part.
//! The constant is deliberately not stored in `offset` (which stays 0).

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::suite::{Selection, TestSuite};

#[derive(Clone, Debug, PartialEq)]
pub struct QuboModel {
    n: usize,
    /// Row-major symmetric matrix; linear terms on the diagonal.
    q: Vec<f64>,
    pub offset: f64,
    pub alpha: f64,
    pub penalty: f64,
}

impl QuboModel {
    /// Builds a model from a full (symmetric) matrix.
    pub fn from_dense(n: usize, q: Vec<f64>, offset: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter(
                "QUBO needs at least one variable".into(),
            ));
        }
        Error::check_len(n * n, q.len())?;
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (q[i * n + j], q[j * n + i]);
                if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                    return Err(Error::InvalidParameter(format!(
                        "QUBO matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(QuboModel {
            n,
            q,
            offset,
            alpha: 0.0,
            penalty: 1.0,
        })
    }

    pub fn zeros(n: usize) -> Self {
        QuboModel {
            n,
            q: vec![0.0; n * n],
            offset: 0.0,
            alpha: 0.0,
            penalty: 1.0,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.q[i * self.n + j]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matrix(&self) -> &[f64] {
        &self.q
    }

    /// Contribution of switching on `x_i` given the lower-indexed bits
    /// already set: `Q_ii + 2 * sum_{j<i, x_j} Q_ij`. The energy table uses the
    /// same expression so both agree to the last bit.
    #[inline]
    pub(crate) fn prefix_term<F: Fn(usize) -> bool>(&self, i: usize, lower: F) -> f64 {
        let row = &self.q[i * self.n..i * self.n + i];
        let mut acc = 0.0;
        for (j, &v) in row.iter().enumerate() {
            if lower(j) {
                acc += v;
            }
        }
        row_term(self.q[i * self.n + i], acc)
    }

    /// `x^T Q x + offset`.
    pub fn energy(&self, x: &[bool]) -> Result<f64> {
        Error::check_len(self.n, x.len())?;
        let mut e = 0.0;
        for i in 0..self.n {
            if x[i] {
                e += self.prefix_term(i, |j| x[j]);
            }
        }
        Ok(e + self.offset)
    }

    /// Sparse triplets `i j value` for `i <= j`; the diagonal holds linear
    /// terms and off-diagonal values are the full pair coefficient `2 Q_ij`.
    pub fn to_triplets(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# n={} offset={} alpha={} penalty={}",
            self.n, self.offset, self.alpha, self.penalty
        );
        for i in 0..self.n {
            for j in i..self.n {
                let v = if i == j {
                    self.get(i, i)
                } else {
                    2.0 * self.get(i, j)
                };
                if v != 0.0 {
                    let _ = writeln!(out, "{i} {j} {v}");
                }
            }
        }
        out
    }

    pub fn write_triplets(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_triplets()).map_err(|e| Error::io(path, e))
    }
}

#[inline]
pub(crate) fn row_term(diag: f64, lower_sum: f64) -> f64 {
    diag + 2.0 * lower_sum
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "alpha {alpha} outside [0, 1]"
        )))
    }
}

/// `P = 1 + alpha * sum(cost)`: strictly above the largest value the linear
/// objective can take (its fault term is never positive).
pub fn penalty_upper_bound(suite: &TestSuite, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(1.0 + alpha * suite.costs().iter().sum::<f64>())
}

pub fn build_qubo(suite: &TestSuite, alpha: f64, penalty: f64) -> Result<QuboModel> {
    check_alpha(alpha)?;
    if !(penalty > 0.0 && penalty.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "penalty {penalty} must be > 0"
        )));
    }
    let n = suite.n_tests();
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        let fault = if suite.faults()[i] { 1.0 } else { 0.0 };
        let stmts = suite.coverage_count(i) as f64;
        q[i * n + i] = alpha * suite.costs()[i] - (1.0 - alpha) * fault - penalty * stmts;
    }
    // Each unordered pair sharing a statement carries 2P, split over Q_ij, Q_ji.
    for k in 0..suite.n_stmts() {
        let tests = suite.covering(k);
        for (a, &i) in tests.iter().enumerate() {
            for &j in &tests[a + 1..] {
                q[i * n + j] += penalty;
                q[j * n + i] += penalty;
            }
        }
    }
    Ok(QuboModel {
        n,
        q,
        offset: 0.0,
        alpha,
        penalty,
    })
}

pub fn qubo_energy(model: &QuboModel, selection: &Selection) -> Result<f64> {
    model.energy(selection.as_bits())
}

/// Statements not covered exactly once by `selection`.
pub fn penalty_violations(suite: &TestSuite, selection: &Selection) -> Result<usize> {
    Error::check_len(suite.n_tests(), selection.len())?;
    Ok((0..suite.n_stmts())
        .filter(|&k| {
            suite
                .covering(k)
                .iter()
                .filter(|&&i| selection.contains(i))
                .count()
                != 1
        })
        .count())
}

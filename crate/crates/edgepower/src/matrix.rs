use std::fmt;

use crate::error::{Error, Result};
use crate::state::PowerState;

/// Absolute tolerance on `sum(row) == 1` accepted by [`TransitionMatrix::validate`].
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// A row-stochastic transition matrix stored in row-major order.
///
/// Construction only checks the shape; call [`TransitionMatrix::validate`]
/// (or build via [`TransitionMatrix::validated`]) to check stochasticity.
/// Keeping the two steps separate lets callers hold intentionally broken
/// matrices while assembling a report about them.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl TransitionMatrix {
    /// Builds a matrix from row vectors. Errors if the matrix is empty or not
    /// square; entry values are not inspected here.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Dimension("matrix has no rows".into()));
        }
        let mut entries = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::Dimension(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            entries.extend(row);
        }
        Ok(TransitionMatrix { n, entries })
    }

    /// Builds and validates in one step.
    pub fn validated(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = Self::from_rows(rows)?;
        m.validate().map_err(Error::InvalidMatrix)?;
        Ok(m)
    }

    /// The default five-state chain for a moderately loaded edge node. Power
    /// states only step between neighbours, except for a direct `Idle ->
    /// Overloaded` edge modeling a demand spike that skips `Active`.
    pub fn default_edge_chain() -> Self {
        TransitionMatrix::from_rows(vec![
            vec![0.80, 0.20, 0.00, 0.00, 0.00],
            vec![0.10, 0.60, 0.30, 0.00, 0.00],
            vec![0.00, 0.15, 0.50, 0.30, 0.05],
            vec![0.00, 0.00, 0.25, 0.60, 0.15],
            vec![0.00, 0.00, 0.00, 0.20, 0.80],
        ])
        .expect("shape is fixed")
    }

    /// Number of states.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Entry `P[i][j]`, i.e. the probability of moving from `i` to `j`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.n && j < self.n, "index out of bounds");
        self.entries[i * self.n + j]
    }

    /// Row `i` as a probability vector over successor states.
    pub fn row(&self, i: usize) -> &[f64] {
        assert!(i < self.n, "row index out of bounds");
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.chunks_exact(self.n)
    }

    /// Checks that every entry lies in `[0, 1]` and every row sums to one
    /// within [`ROW_SUM_TOLERANCE`]. On failure the report lists every
    /// violation, not just the first.
    pub fn validate(&self) -> std::result::Result<(), ValidationReport> {
        let mut violations = Vec::new();
        for (i, row) in self.rows().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                    violations.push(Violation::EntryOutOfRange {
                        row: i,
                        col: j,
                        value: v,
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            if !sum.is_finite() || (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                violations.push(Violation::RowSum { row: i, sum });
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(ValidationReport { violations })
        }
    }

    /// Returns a copy with `P[row][col]` pinned to `new_value` and the rest of
    /// the row rescaled by a common factor so it still sums to one. Zero
    /// entries stay zero, so the reachability graph never gains edges.
    ///
    /// Errors when the indices are out of bounds, `new_value` is outside
    /// `[0, 1]`, or the rest of the row has no mass to absorb the change
    /// (i.e. the row was `new_value != 1` concentrated entirely on `col`).
    pub fn perturb_row(&self, row: usize, col: usize, new_value: f64) -> Result<Self> {
        if row >= self.n || col >= self.n {
            return Err(Error::UnknownState {
                index: row.max(col),
                n: self.n,
            });
        }
        if !new_value.is_finite() || !(0.0..=1.0).contains(&new_value) {
            return Err(Error::invalid(
                "new_value",
                format!("{new_value} is outside [0, 1]"),
            ));
        }
        let old_row = self.row(row);
        let rest: f64 = old_row
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != col)
            .map(|(_, &v)| v)
            .sum();
        let remaining = 1.0 - new_value;
        let mut out = self.clone();
        let target = &mut out.entries[row * self.n..(row + 1) * self.n];
        if rest <= 0.0 {
            // The whole row sat on `col`; only new_value == 1 keeps it stochastic.
            if remaining.abs() > ROW_SUM_TOLERANCE {
                return Err(Error::invalid(
                    "new_value",
                    format!(
                        "row {row} has no off-target mass to rescale; \
                         only a value of 1 is possible, got {new_value}"
                    ),
                ));
            }
            target[col] = 1.0;
            return Ok(out);
        }
        let scale = remaining / rest;
        for (j, v) in target.iter_mut().enumerate() {
            if j == col {
                *v = new_value;
            } else {
                *v *= scale;
            }
        }
        Ok(out)
    }
}

impl std::ops::Index<PowerState> for TransitionMatrix {
    type Output = [f64];

    fn index(&self, s: PowerState) -> &[f64] {
        self.row(s.index())
    }
}

/// One stochasticity violation found by [`TransitionMatrix::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    RowSum { row: usize, sum: f64 },
    EntryOutOfRange { row: usize, col: usize, value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RowSum { row, sum } => {
                write!(f, "row {row} sums to {sum} (expected 1 within 1e-9)")
            }
            Violation::EntryOutOfRange { row, col, value } => {
                write!(f, "entry ({row}, {col}) = {value} is outside [0, 1]")
            }
        }
    }
}

/// Everything wrong with a candidate transition matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violation(s):", self.violations.len())?;
        for v in &self.violations {
            write!(f, " [{v}]")?;
        }
        Ok(())
    }
}

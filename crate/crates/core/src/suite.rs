//! Test suites, selections and the three objectives.
//!
//! A suite is a boolean coverage matrix (tests x statements), a per-test cost
//! and a per-test historical fault flag. Everything downstream (QUBO, Pareto
//! fronts, baselines) evaluates selections through [`TestSuite::objectives`].

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const COVERAGE_FILE: &str = "coverage.mtx";
pub const COSTS_FILE: &str = "costs.txt";
pub const FAULTS_FILE: &str = "faults.txt";

/// A subset of tests, one flag per test.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Selection(Vec<bool>);

impl Selection {
    pub fn empty(n: usize) -> Self {
        Selection(vec![false; n])
    }

    pub fn full(n: usize) -> Self {
        Selection(vec![true; n])
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Selection(bits)
    }

    pub fn from_indices(n: usize, indices: &[usize]) -> Self {
        let mut bits = vec![false; n];
        for &i in indices {
            bits[i] = true;
        }
        Selection(bits)
    }

    /// Bit `i` of `index` selects test `i`.
    pub fn from_index(n: usize, index: u64) -> Self {
        Selection((0..n).map(|i| (index >> i) & 1 == 1).collect())
    }

    pub fn to_index(&self) -> Option<u64> {
        if self.0.len() > 64 {
            return None;
        }
        Some(
            self.0
                .iter()
                .enumerate()
                .filter(|(_, &b)| b)
                .fold(0u64, |acc, (i, _)| acc | (1 << i)),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn set(&mut self, i: usize, value: bool) {
        self.0[i] = value;
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i)
    }

    pub fn as_bits(&self) -> &[bool] {
        &self.0
    }

    /// Hex encoding of the integer `sum x_i 2^i`, most significant nibble
    /// first, zero-padded to `ceil(n / 4)` digits.
    pub fn to_hex(&self) -> String {
        let digits = self.0.len().div_ceil(4).max(1);
        (0..digits)
            .rev()
            .map(|d| {
                let nibble = (0..4)
                    .filter(|b| self.0.get(4 * d + b).copied().unwrap_or(false))
                    .fold(0u32, |acc, b| acc | (1 << b));
                char::from_digit(nibble, 16).unwrap()
            })
            .collect()
    }

    pub fn from_hex(n: usize, hex: &str) -> Result<Self> {
        let mut bits = vec![false; n];
        for (d, c) in hex.trim().chars().rev().enumerate() {
            let nibble = c
                .to_digit(16)
                .ok_or_else(|| Error::InvalidParameter(format!("bad hex digit {c:?}")))?;
            for b in 0..4 {
                if (nibble >> b) & 1 == 1 {
                    let i = 4 * d + b;
                    if i >= n {
                        return Err(Error::InvalidParameter(format!(
                            "hex selection {hex} has bit {i} set beyond {n} tests"
                        )));
                    }
                    bits[i] = true;
                }
            }
        }
        Ok(Selection(bits))
    }
}

impl fmt::Display for Selection {
    /// Test `n-1` first, test `0` last, so string order equals index order.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in self.0.iter().rev() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector {
    pub total_cost: f64,
    pub fault_hits: usize,
    pub stmts_covered: usize,
}

impl ObjectiveVector {
    pub fn new(total_cost: f64, fault_hits: usize, stmts_covered: usize) -> Self {
        ObjectiveVector {
            total_cost,
            fault_hits,
            stmts_covered,
        }
    }
}

/// Per-test normalized (cost, fault, coverage count), each in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Vec<[f64; 3]>,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TestSuite {
    name: String,
    coverage: Vec<Vec<bool>>,
    costs: Vec<f64>,
    faults: Vec<bool>,
    n_stmts: usize,
    /// `covering[k]` lists the tests executing statement `k`, ascending.
    covering: Vec<Vec<usize>>,
}

impl TestSuite {
    /// Builds a suite and checks every invariant.
    pub fn new(
        name: impl Into<String>,
        coverage: Vec<Vec<bool>>,
        costs: Vec<f64>,
        faults: Vec<bool>,
    ) -> Result<Self> {
        let suite = Self::assemble(name.into(), coverage, costs, faults)?;
        if !suite.costs.iter().any(|&c| c > 0.0) {
            return Err(Error::InvalidSuite("at least one cost must be > 0".into()));
        }
        if let Some(k) = suite.covering.iter().position(|t| t.is_empty()) {
            return Err(Error::InvalidSuite(format!(
                "statement {k} is not covered by any test"
            )));
        }
        Ok(suite)
    }

    /// Shape and sign checks only; sub-suites may legitimately have all-zero
    /// costs when the parent did.
    fn assemble(
        name: String,
        coverage: Vec<Vec<bool>>,
        costs: Vec<f64>,
        faults: Vec<bool>,
    ) -> Result<Self> {
        if coverage.is_empty() {
            return Err(Error::InvalidSuite("suite has no tests".into()));
        }
        if costs.len() != coverage.len() || faults.len() != coverage.len() {
            return Err(Error::InvalidSuite(format!(
                "{} coverage rows, {} costs, {} fault flags",
                coverage.len(),
                costs.len(),
                faults.len()
            )));
        }
        let n_stmts = coverage[0].len();
        if let Some(i) = coverage.iter().position(|r| r.len() != n_stmts) {
            return Err(Error::InvalidSuite(format!(
                "coverage row {i} has {} columns, expected {n_stmts}",
                coverage[i].len()
            )));
        }
        if let Some(i) = costs.iter().position(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::InvalidSuite(format!(
                "cost of test {i} is {}",
                costs[i]
            )));
        }
        let mut covering = vec![Vec::new(); n_stmts];
        for (i, row) in coverage.iter().enumerate() {
            for (k, &hit) in row.iter().enumerate() {
                if hit {
                    covering[k].push(i);
                }
            }
        }
        Ok(TestSuite {
            name,
            coverage,
            costs,
            faults,
            n_stmts,
            covering,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_tests(&self) -> usize {
        self.coverage.len()
    }

    pub fn n_stmts(&self) -> usize {
        self.n_stmts
    }

    pub fn coverage_row(&self, test: usize) -> &[bool] {
        &self.coverage[test]
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn faults(&self) -> &[bool] {
        &self.faults
    }

    /// Tests executing statement `k`.
    pub fn covering(&self, k: usize) -> &[usize] {
        &self.covering[k]
    }

    pub fn coverage_count(&self, test: usize) -> usize {
        self.coverage[test].iter().filter(|&&b| b).count()
    }

    pub fn objectives(&self, selection: &Selection) -> Result<ObjectiveVector> {
        Error::check_len(self.n_tests(), selection.len())?;
        let mut covered = vec![false; self.n_stmts];
        let mut total_cost = 0.0;
        let mut fault_hits = 0;
        for i in selection.indices() {
            total_cost += self.costs[i];
            fault_hits += usize::from(self.faults[i]);
            for (c, &hit) in covered.iter_mut().zip(&self.coverage[i]) {
                *c |= hit;
            }
        }
        let stmts_covered = covered.iter().filter(|&&c| c).count();
        Ok(ObjectiveVector::new(total_cost, fault_hits, stmts_covered))
    }

    pub fn normalize_features(&self) -> FeatureMatrix {
        let raw: Vec<[f64; 3]> = (0..self.n_tests())
            .map(|i| {
                [
                    self.costs[i],
                    if self.faults[i] { 1.0 } else { 0.0 },
                    self.coverage_count(i) as f64,
                ]
            })
            .collect();
        FeatureMatrix {
            rows: normalize_columns(&raw),
        }
    }

    /// Restricts the suite to `members` (ascending parent indices) and to the
    /// statement columns at least one member covers.
    pub fn restrict(&self, name: impl Into<String>, members: &[usize]) -> Result<TestSuite> {
        let columns: Vec<usize> = (0..self.n_stmts)
            .filter(|&k| members.iter().any(|&i| self.coverage[i][k]))
            .collect();
        let coverage = members
            .iter()
            .map(|&i| columns.iter().map(|&k| self.coverage[i][k]).collect())
            .collect();
        let costs = members.iter().map(|&i| self.costs[i]).collect();
        let faults = members.iter().map(|&i| self.faults[i]).collect();
        Self::assemble(name.into(), coverage, costs, faults)
    }

    /// Reads a bundle directory (`coverage.mtx`, `costs.txt`, `faults.txt`).
    pub fn load(dir: impl AsRef<Path>) -> Result<TestSuite> {
        let dir = dir.as_ref();
        let cov_path = dir.join(COVERAGE_FILE);
        let cost_path = dir.join(COSTS_FILE);
        let fault_path = dir.join(FAULTS_FILE);

        let coverage = parse_coverage(&cov_path)?;
        let rows = coverage.len();
        if rows == 0 {
            return Err(Error::Parse {
                file: cov_path,
                line: 1,
                message: "no coverage rows".into(),
            });
        }

        let cost_lines = data_lines(&cost_path)?;
        check_row_count(&cost_path, &cost_lines, rows)?;
        let mut costs = Vec::with_capacity(rows);
        for (line, text) in &cost_lines {
            let value: f64 = text.parse().map_err(|_| Error::Parse {
                file: cost_path.clone(),
                line: *line,
                message: format!("not a number: {text:?}"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    file: cost_path.clone(),
                    line: *line,
                    message: format!("non-finite cost {text:?}"),
                });
            }
            if value < 0.0 {
                return Err(Error::NegativeCost {
                    file: cost_path.clone(),
                    line: *line,
                    value,
                });
            }
            costs.push(value);
        }
        if !costs.iter().any(|&c| c > 0.0) {
            return Err(Error::Parse {
                file: cost_path,
                line: cost_lines.last().map_or(1, |l| l.0),
                message: "all costs are zero".into(),
            });
        }

        // A row with several tokens is a fault-matrix row; it collapses to
        // "detected at least one fault".
        let fault_lines = data_lines(&fault_path)?;
        check_row_count(&fault_path, &fault_lines, rows)?;
        let mut faults = Vec::with_capacity(rows);
        for (line, text) in &fault_lines {
            let mut any = false;
            for tok in text.split_whitespace() {
                any |= parse_bit(tok).ok_or_else(|| Error::Parse {
                    file: fault_path.clone(),
                    line: *line,
                    message: format!("expected 0 or 1, found {tok:?}"),
                })?;
            }
            faults.push(any);
        }

        let n_stmts = coverage[0].1.len();
        if let Some(column) = (0..n_stmts).find(|&k| coverage.iter().all(|(_, row)| !row[k])) {
            return Err(Error::UncoverableStatement {
                file: cov_path,
                column,
            });
        }

        let name = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "suite".into());
        let coverage = coverage.into_iter().map(|(_, r)| r).collect();
        TestSuite::new(name, coverage, costs, faults)
    }

    /// Writes the suite as a bundle directory readable by [`TestSuite::load`].
    pub fn write_bundle(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut cov = String::new();
        cov.push_str(&format!(
            "# {} tests x {} statements\n",
            self.n_tests(),
            self.n_stmts
        ));
        for row in &self.coverage {
            let line: Vec<&str> = row.iter().map(|&b| if b { "1" } else { "0" }).collect();
            cov.push_str(&line.join(" "));
            cov.push('\n');
        }
        let costs: String = self.costs.iter().map(|c| format!("{c}\n")).collect();
        let faults: String = self
            .faults
            .iter()
            .map(|&f| if f { "1\n" } else { "0\n" })
            .collect();
        for (file, body) in [
            (COVERAGE_FILE, cov),
            (COSTS_FILE, costs),
            (FAULTS_FILE, faults),
        ] {
            let path = dir.join(file);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// Min-max normalization per column; a constant column maps to all zeros.
pub fn normalize_columns(raw: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for row in raw {
        for c in 0..3 {
            lo[c] = lo[c].min(row[c]);
            hi[c] = hi[c].max(row[c]);
        }
    }
    raw.iter()
        .map(|row| {
            let mut out = [0.0; 3];
            for c in 0..3 {
                let span = hi[c] - lo[c];
                out[c] = if span > 0.0 {
                    (row[c] - lo[c]) / span
                } else {
                    0.0
                };
            }
            out
        })
        .collect()
}

/// Seeded synthetic suite. Columns left uncovered by the Bernoulli draw are
/// redrawn; costs are positive integers in `[1, 100]`.
pub fn synth_suite(
    n_tests: usize,
    n_stmts: usize,
    density: f64,
    fault_rate: f64,
    seed: u64,
) -> Result<TestSuite> {
    if n_tests == 0 || n_stmts == 0 {
        return Err(Error::InvalidParameter(
            "synthetic suite needs at least one test and one statement".into(),
        ));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "density {density} outside (0, 1]"
        )));
    }
    if !(0.0..=1.0).contains(&fault_rate) {
        return Err(Error::InvalidParameter(format!(
            "fault rate {fault_rate} outside [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coverage: Vec<Vec<bool>> = (0..n_tests)
        .map(|_| {
            (0..n_stmts)
                .map(|_| rng.random::<f64>() < density)
                .collect()
        })
        .collect();
    for k in 0..n_stmts {
        let mut attempts = 0;
        while coverage.iter().all(|row| !row[k]) {
            if attempts == 100 {
                let i = rng.random_range(0..n_tests);
                coverage[i][k] = true;
                break;
            }
            for row in coverage.iter_mut() {
                row[k] = rng.random::<f64>() < density;
            }
            attempts += 1;
        }
    }
    let costs = (0..n_tests)
        .map(|_| rng.random_range(1..=100u32) as f64)
        .collect();
    let faults = (0..n_tests)
        .map(|_| rng.random::<f64>() < fault_rate)
        .collect();
    TestSuite::new(
        format!("synth-{n_tests}x{n_stmts}-s{seed}"),
        coverage,
        costs,
        faults,
    )
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Non-blank, non-comment lines with their 1-based line numbers.
fn data_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    Ok(read_text(path)?
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r').trim().to_string()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .collect())
}

fn check_row_count(path: &Path, lines: &[(usize, String)], rows: usize) -> Result<()> {
    if lines.len() == rows {
        return Ok(());
    }
    let line = if lines.len() > rows {
        lines[rows].0
    } else {
        lines.last().map_or(1, |l| l.0 + 1)
    };
    Err(Error::DimensionMismatch {
        file: PathBuf::from(path),
        line,
        message: format!("{} entries but coverage has {rows} rows", lines.len()),
    })
}

fn parse_bit(tok: &str) -> Option<bool> {
    match tok {
        "0" => Some(false),
        "1" => Some(true),
        _ => None,
    }
}

fn parse_coverage(path: &Path) -> Result<Vec<(usize, Vec<bool>)>> {
    let mut rows: Vec<(usize, Vec<bool>)> = Vec::new();
    for (line, text) in data_lines(path)? {
        let row = text
            .split_whitespace()
            .map(|tok| {
                parse_bit(tok).ok_or_else(|| Error::Parse {
                    file: path.to_path_buf(),
                    line,
                    message: format!("expected 0 or 1, found {tok:?}"),
                })
            })
            .collect::<Result<Vec<bool>>>()?;
        if let Some((_, first)) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::DimensionMismatch {
                    file: path.to_path_buf(),
                    line,
                    message: format!("{} columns, expected {}", row.len(), first.len()),
                });
            }
        }
        rows.push((line, row));
    }
    Ok(rows)
}

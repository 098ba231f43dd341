//! Three-objective dominance, fronts, and contribution counting.
//!
//! Cost is minimized; fault hits and covered statements are maximized.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::selectors::greedy_full_order;
use crate::suite::{ObjectiveVector, Selection, TestSuite};

pub const FRONT_CSV_HEADER: &str = "algorithm,run,selection_hex,cost,faults,stmts";

/// `a` is no worse than `b` everywhere and strictly better somewhere.
pub fn dominates(a: &ObjectiveVector, b: &ObjectiveVector) -> bool {
    let no_worse = a.total_cost <= b.total_cost
        && a.fault_hits >= b.fault_hits
        && a.stmts_covered >= b.stmts_covered;
    no_worse
        && (a.total_cost < b.total_cost
            || a.fault_hits > b.fault_hits
            || a.stmts_covered > b.stmts_covered)
}

/// Which algorithm and repetition produced a point.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Origin {
    pub algorithm: String,
    pub run: usize,
}

impl Origin {
    pub fn new(algorithm: impl Into<String>, run: usize) -> Self {
        Origin {
            algorithm: algorithm.into(),
            run,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParetoPoint {
    pub selection: Selection,
    pub objectives: ObjectiveVector,
    pub origin: Origin,
}

impl ParetoPoint {
    pub fn evaluate(suite: &TestSuite, selection: Selection, origin: Origin) -> Result<Self> {
        let objectives = suite.objectives(&selection)?;
        Ok(ParetoPoint {
            selection,
            objectives,
            origin,
        })
    }
}

/// A set of mutually non-dominated points.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Front {
    points: Vec<ParetoPoint>,
}

impl Front {
    pub fn points(&self) -> &[ParetoPoint] {
        &self.points
    }

    pub fn into_points(self) -> Vec<ParetoPoint> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn check_same_suite<'a>(points: impl IntoIterator<Item = &'a ParetoPoint>) -> Result<()> {
    let mut n = None;
    for p in points {
        match n {
            None => n = Some(p.selection.len()),
            Some(n) if n != p.selection.len() => return Err(Error::MixedSuites),
            _ => {}
        }
    }
    Ok(())
}

/// Drops every point dominated by another, keeping input order. Points with
/// identical objectives never dominate each other, so duplicates survive.
pub fn nondominated_filter(points: Vec<ParetoPoint>) -> Result<Front> {
    check_same_suite(&points)?;
    // After sorting by (cost asc, faults desc, stmts desc) any dominator
    // precedes the point it dominates, and by transitivity some surviving
    // point dominates every dropped one.
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (&points[i].objectives, &points[j].objectives);
        a.total_cost
            .total_cmp(&b.total_cost)
            .then(b.fault_hits.cmp(&a.fault_hits))
            .then(b.stmts_covered.cmp(&a.stmts_covered))
    });
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if !kept
            .iter()
            .any(|&k| dominates(&points[k].objectives, &points[i].objectives))
        {
            kept.push(i);
        }
    }
    let mut keep = vec![false; points.len()];
    kept.into_iter().for_each(|i| keep[i] = true);
    Ok(Front {
        points: points
            .into_iter()
            .zip(keep)
            .filter_map(|(p, k)| k.then_some(p))
            .collect(),
    })
}

/// Orders the selected tests by the Additional Greedy ratio, evaluates every
/// prefix and keeps the non-dominated prefixes.
pub fn incremental_front(
    suite: &TestSuite,
    selection: &Selection,
    origin: &Origin,
) -> Result<Front> {
    Error::check_len(suite.n_tests(), selection.len())?;
    let chosen: Vec<usize> = selection.indices().collect();
    let order = greedy_full_order(suite, &chosen);
    let mut prefix = Selection::empty(suite.n_tests());
    let mut points = Vec::with_capacity(order.len());
    for t in order {
        prefix.set(t, true);
        points.push(ParetoPoint::evaluate(
            suite,
            prefix.clone(),
            origin.clone(),
        )?);
    }
    nondominated_filter(points)
}

/// Non-dominated subset of the union of `fronts`, relative to the whole union.
pub fn reference_front(fronts: &[Front]) -> Result<Front> {
    nondominated_filter(
        fronts
            .iter()
            .flat_map(|f| f.points.iter().cloned())
            .collect(),
    )
}

/// Reference points per algorithm. Every name in `algorithms` appears, with
/// zero if it contributed nothing.
pub fn count_contributions(reference: &Front, algorithms: &[&str]) -> BTreeMap<String, usize> {
    let mut counts: BTreeMap<String, usize> =
        algorithms.iter().map(|a| (a.to_string(), 0)).collect();
    for p in &reference.points {
        *counts.entry(p.origin.algorithm.clone()).or_default() += 1;
    }
    counts
}

/// Reference points per (algorithm, run).
pub fn count_contributions_by_run(reference: &Front) -> BTreeMap<Origin, usize> {
    let mut counts = BTreeMap::new();
    for p in &reference.points {
        *counts.entry(p.origin.clone()).or_default() += 1;
    }
    counts
}

#[derive(Debug, Serialize, Deserialize)]
struct FrontRow {
    algorithm: String,
    run: usize,
    selection_hex: String,
    cost: f64,
    faults: usize,
    stmts: usize,
}

pub fn points_to_csv<'a>(points: impl IntoIterator<Item = &'a ParetoPoint>) -> Result<String> {
    // Header written by hand so an empty front still gets one.
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(FRONT_CSV_HEADER.split(','))
        .map_err(csv_error)?;
    for p in points {
        let o = &p.objectives;
        w.serialize(FrontRow {
            algorithm: p.origin.algorithm.clone(),
            run: p.origin.run,
            selection_hex: p.selection.to_hex(),
            cost: o.total_cost,
            faults: o.fault_hits,
            stmts: o.stmts_covered,
        })
        .map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Csv(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    Error::Csv(e.to_string())
}

pub fn write_points_csv<'a>(
    path: impl AsRef<Path>,
    points: impl IntoIterator<Item = &'a ParetoPoint>,
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, points_to_csv(points)?).map_err(|e| Error::io(path, e))
}

/// Parses front CSV rows. Objectives are recomputed from `suite` and must
/// agree with the stored columns.
pub fn points_from_csv(text: &str, suite: &TestSuite) -> Result<Vec<ParetoPoint>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(csv_error)?;
    if header.iter().collect::<Vec<_>>().join(",") != FRONT_CSV_HEADER {
        return Err(Error::Csv(format!("expected header `{FRONT_CSV_HEADER}`")));
    }
    let mut points = Vec::new();
    for row in r.deserialize::<FrontRow>() {
        let row = row.map_err(csv_error)?;
        let selection = Selection::from_hex(suite.n_tests(), &row.selection_hex)?;
        let point = ParetoPoint::evaluate(suite, selection, Origin::new(row.algorithm, row.run))?;
        let o = &point.objectives;
        let cost_ok = (o.total_cost - row.cost).abs() <= 1e-9 * (1.0 + row.cost.abs());
        if !cost_ok || o.fault_hits != row.faults || o.stmts_covered != row.stmts {
            return Err(Error::Csv(format!(
                "{} run {}: stored objectives ({}, {}, {}) do not match the suite ({}, {}, {})",
                point.origin.algorithm,
                point.origin.run,
                row.cost,
                row.faults,
                row.stmts,
                o.total_cost,
                o.fault_hits,
                o.stmts_covered
            )));
        }
        points.push(point);
    }
    Ok(points)
}

pub fn read_points_csv(path: impl AsRef<Path>, suite: &TestSuite) -> Result<Vec<ParetoPoint>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    points_from_csv(&text, suite)
}

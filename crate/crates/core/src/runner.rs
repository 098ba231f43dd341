//! Experiment orchestration: repeated runs of every algorithm, fronts, the
//! reference front, contribution counts and the statistics battery.
//!
//! Deterministic outputs (`runs.csv`, `fronts.csv`, `reference.csv`,
//! `qaoa_clusters.csv`) are kept apart from wall-clock timings
//! (`timings.csv`), so identical configs give byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::decompose::{cluster_suite, default_k, split_by, DEFAULT_MAX_CLUSTER};
use crate::error::{Error, Result};
use crate::par::{self, Backend};
use crate::pareto::{
    count_contributions_by_run, csv_error, incremental_front, nondominated_filter, read_points_csv,
    reference_front, write_points_csv, Front, Origin, ParetoPoint,
};
use crate::qaoa::{qaoa_select_with, write_trace, QaoaConfig, QaoaOutcome, MAX_QUBITS};
use crate::qubo::{build_qubo, penalty_upper_bound, QuboModel};
use crate::seeds::derive_seed;
use crate::selectors::{greedy_full_order, simulated_annealing};
use crate::stats::{StatReport, REPORT_CSV_HEADER};
use crate::suite::{synth_suite, Selection, TestSuite};

pub const QAOA_TCS: &str = "QAOA-TCS";
pub const SA: &str = "SA";
pub const GREEDY: &str = "AdditionalGreedy";
pub const ALGORITHMS: [&str; 3] = [QAOA_TCS, SA, GREEDY];

pub const CONFIG_FILE: &str = "config.json";
pub const RUNS_FILE: &str = "runs.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const FRONTS_FILE: &str = "fronts.csv";
pub const REFERENCE_FILE: &str = "reference.csv";
pub const CLUSTERS_FILE: &str = "qaoa_clusters.csv";
pub const SUMMARY_FILE: &str = "summary.md";
pub const STATS_FILE: &str = "stats.md";
pub const STATS_CSV_FILE: &str = "stats.csv";

const STREAM_CLUSTERING: u64 = 1;
const STREAM_SA: u64 = 2;
const STREAM_QAOA: u64 = 0x100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteSource {
    Bundle(PathBuf),
    Synth {
        n_tests: usize,
        n_stmts: usize,
        density: f64,
        fault_rate: f64,
        seed: u64,
    },
}

impl SuiteSource {
    pub fn load(&self) -> Result<TestSuite> {
        match self {
            SuiteSource::Bundle(dir) => TestSuite::load(dir),
            &SuiteSource::Synth {
                n_tests,
                n_stmts,
                density,
                fault_rate,
                seed,
            } => synth_suite(n_tests, n_stmts, density, fault_rate, seed),
        }
    }
}

/// QAOA parameters shared by every cluster; seeds are derived per cluster.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QaoaSettings {
    pub p: usize,
    pub restarts: usize,
    pub shots: usize,
    pub max_evals: Option<usize>,
    pub normalize: bool,
}

impl Default for QaoaSettings {
    fn default() -> Self {
        let c = QaoaConfig::default();
        QaoaSettings {
            p: c.p,
            restarts: c.restarts,
            shots: c.shots,
            max_evals: c.max_evals,
            normalize: c.normalize,
        }
    }
}

impl QaoaSettings {
    pub fn with_seed(&self, seed: u64) -> QaoaConfig {
        QaoaConfig {
            p: self.p,
            restarts: self.restarts,
            shots: self.shots,
            seed,
            max_evals: self.max_evals,
            normalize: self.normalize,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub source: SuiteSource,
    pub alpha: f64,
    /// Cluster count; `None` picks `ceil(n / max_cluster) + 1`.
    pub k: Option<usize>,
    pub max_cluster: usize,
    pub qaoa: QaoaSettings,
    pub sa_sweeps: usize,
    pub reps: usize,
    pub seed: u64,
    pub out: PathBuf,
    /// Write optimizer traces as JSON lines under `out/trace/`.
    pub trace: bool,
    /// Write per-run clusterings and cluster QUBOs under `out/dump/`.
    pub dump: bool,
    /// External fronts (front CSV format) joined into the reference front.
    pub import: Vec<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(source: SuiteSource, out: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            source,
            alpha: 0.5,
            k: None,
            max_cluster: DEFAULT_MAX_CLUSTER,
            qaoa: QaoaSettings::default(),
            sa_sweeps: 1000,
            reps: 10,
            seed: 0,
            out: out.into(),
            trace: false,
            dump: false,
            import: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha {} outside [0, 1]", self.alpha));
        }
        if self.max_cluster == 0 || self.max_cluster > MAX_QUBITS {
            return bad(format!(
                "max cluster size {} outside [1, {MAX_QUBITS}]",
                self.max_cluster
            ));
        }
        if self.k == Some(0) {
            return bad("k must be >= 1".into());
        }
        let q = &self.qaoa;
        if q.p == 0 || q.restarts == 0 || q.shots == 0 {
            return bad("p, restarts and shots must be >= 1".into());
        }
        if q.max_evals == Some(0) {
            return bad("max evals must be >= 1".into());
        }
        if self.sa_sweeps == 0 {
            return bad("SA sweeps must be >= 1".into());
        }
        if self.reps == 0 {
            return bad("repetitions must be >= 1".into());
        }
        Ok(())
    }

    /// Cluster count for `suite`, checked against the size cap.
    pub fn resolve_k(&self, suite: &TestSuite) -> Result<usize> {
        let n = suite.n_tests();
        let k = self.k.unwrap_or_else(|| default_k(n, self.max_cluster));
        if k > n {
            return Err(Error::InvalidParameter(format!(
                "k = {k} exceeds the {n} tests"
            )));
        }
        if k * self.max_cluster < n {
            return Err(Error::InfeasibleCapacity {
                tests: n,
                clusters: k,
                max_size: self.max_cluster,
            });
        }
        Ok(k)
    }

    pub fn run_seed(&self, rep: usize) -> u64 {
        self.seed.wrapping_add(rep as u64)
    }
}

/// QAOA seed for cluster `c` of a run.
pub fn cluster_seed(run_seed: u64, c: usize) -> u64 {
    derive_seed(run_seed, STREAM_QAOA + c as u64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlgorithmRun {
    pub algorithm: String,
    pub rep: usize,
    pub seed: u64,
    pub selection: Selection,
    pub front: Front,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterRun {
    /// Parent indices of the cluster's tests.
    pub members: Vec<usize>,
    pub model: QuboModel,
    pub outcome: QaoaOutcome,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QaoaRun {
    pub run: AlgorithmRun,
    pub assignment: Vec<usize>,
    pub clusters: Vec<ClusterRun>,
}

/// Decompose, solve each cluster QUBO with QAOA, merge the selections and
/// build the incremental front on the union.
pub fn run_qaoa_tcs(
    backend: Backend,
    suite: &TestSuite,
    config: &ExperimentConfig,
    rep: usize,
) -> Result<QaoaRun> {
    let seed = config.run_seed(rep);
    let started = Instant::now();
    let k = config.resolve_k(suite)?;
    let clustering = cluster_suite(
        suite,
        k,
        config.max_cluster,
        derive_seed(seed, STREAM_CLUSTERING),
    )?;
    let mut selection = Selection::empty(suite.n_tests());
    let mut clusters = Vec::with_capacity(clustering.k);
    for (c, sub) in split_by(suite, &clustering)?.into_iter().enumerate() {
        let penalty = penalty_upper_bound(&sub.suite, config.alpha)?;
        let model = build_qubo(&sub.suite, config.alpha, penalty)?;
        let qaoa = config.qaoa.with_seed(cluster_seed(seed, c));
        let outcome = qaoa_select_with(backend, &model, &qaoa, config.trace)?;
        let local = Selection::from_index(sub.members.len(), outcome.index);
        for i in local.indices() {
            selection.set(sub.members[i], true);
        }
        clusters.push(ClusterRun {
            members: sub.members,
            model,
            outcome,
        });
    }
    let seconds = started.elapsed().as_secs_f64();
    let front = incremental_front(suite, &selection, &Origin::new(QAOA_TCS, rep))?;
    Ok(QaoaRun {
        run: AlgorithmRun {
            algorithm: QAOA_TCS.into(),
            rep,
            seed,
            selection,
            front,
            seconds,
        },
        assignment: clustering.assignment,
        clusters,
    })
}

/// Simulated annealing on the full-suite QUBO.
pub fn run_sa(suite: &TestSuite, config: &ExperimentConfig, rep: usize) -> Result<AlgorithmRun> {
    let seed = config.run_seed(rep);
    let started = Instant::now();
    let penalty = penalty_upper_bound(suite, config.alpha)?;
    let model = build_qubo(suite, config.alpha, penalty)?;
    let (selection, _) =
        simulated_annealing(&model, config.sa_sweeps, derive_seed(seed, STREAM_SA))?;
    let seconds = started.elapsed().as_secs_f64();
    let front = incremental_front(suite, &selection, &Origin::new(SA, rep))?;
    Ok(AlgorithmRun {
        algorithm: SA.into(),
        rep,
        seed,
        selection,
        front,
        seconds,
    })
}

/// Additional Greedy over the whole suite; its front holds every
/// non-dominated prefix of the full greedy ordering.
pub fn run_greedy(
    suite: &TestSuite,
    config: &ExperimentConfig,
    rep: usize,
) -> Result<AlgorithmRun> {
    let started = Instant::now();
    let all: Vec<usize> = (0..suite.n_tests()).collect();
    let order = greedy_full_order(suite, &all);
    let seconds = started.elapsed().as_secs_f64();
    let selection = Selection::from_indices(suite.n_tests(), &order);
    let front = incremental_front(suite, &selection, &Origin::new(GREEDY, rep))?;
    Ok(AlgorithmRun {
        algorithm: GREEDY.into(),
        rep,
        seed: config.run_seed(rep),
        selection,
        front,
        seconds,
    })
}

/// A validated config with its suite and imported points loaded.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub config: ExperimentConfig,
    pub suite: TestSuite,
    pub imported: Vec<ParetoPoint>,
}

/// Everything that can fail because of the configuration or inputs.
pub fn prepare(config: ExperimentConfig) -> Result<Prepared> {
    config.validate()?;
    let suite = config.source.load()?;
    config.resolve_k(&suite)?;
    let mut imported = Vec::new();
    for path in &config.import {
        let points = read_points_csv(path, &suite)?;
        if let Some(p) = points
            .iter()
            .find(|p| ALGORITHMS.contains(&p.origin.algorithm.as_str()))
        {
            return Err(Error::InvalidParameter(format!(
                "{}: imported algorithm name {} clashes with a built-in one",
                path.display(),
                p.origin.algorithm
            )));
        }
        imported.extend(points);
    }
    Ok(Prepared {
        config,
        suite,
        imported,
    })
}

/// One row of `runs.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub program: String,
    pub algorithm: String,
    pub run: usize,
    /// Empty for imported fronts.
    pub seed: Option<u64>,
    pub selected: Option<usize>,
    pub selection_hex: Option<String>,
    pub cost: Option<f64>,
    pub faults: Option<usize>,
    pub stmts: Option<usize>,
    pub front_size: usize,
    pub contributions: usize,
}

/// One row of `timings.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub program: String,
    pub algorithm: String,
    pub run: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
struct ClusterRow {
    run: usize,
    cluster: usize,
    size: usize,
    selected: usize,
    energy: f64,
    optimizer_value: f64,
    evaluations: usize,
    entropy_bits: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> MeanStd {
        let n = values.len() as f64;
        if values.is_empty() {
            return MeanStd {
                mean: 0.0,
                std: 0.0,
            };
        }
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        MeanStd { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlgorithmSummary {
    pub algorithm: String,
    pub runs: usize,
    pub front_size: MeanStd,
    pub contributions: MeanStd,
    /// Absent for imported fronts.
    pub runtime: Option<MeanStd>,
}

#[derive(Clone, Debug)]
pub struct Experiment {
    pub program: String,
    pub runs: Vec<AlgorithmRun>,
    pub reference: Front,
    pub rows: Vec<RunRow>,
    pub timings: Vec<TimingRow>,
    pub summaries: Vec<AlgorithmSummary>,
    pub headline: Headline,
}

/// Whether QAOA-TCS has the highest mean reference contribution.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Headline {
    pub qaoa_mean: f64,
    pub best_other: Option<(String, f64)>,
    pub holds: bool,
}

struct RepResult {
    qaoa: QaoaRun,
    sa: AlgorithmRun,
    greedy: AlgorithmRun,
}

fn write_file(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(header).map_err(csv_error)?;
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Csv(e.to_string()))?;
    write_file(path, bytes)
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Csv(format!("{}: {other:?}", path.display())),
    })?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Csv(format!("{}: {e}", path.display()))))
        .collect()
}

const RUNS_HEADER: [&str; 11] = [
    "program",
    "algorithm",
    "run",
    "seed",
    "selected",
    "selection_hex",
    "cost",
    "faults",
    "stmts",
    "front_size",
    "contributions",
];
const TIMINGS_HEADER: [&str; 4] = ["program", "algorithm", "run", "seconds"];
const CLUSTERS_HEADER: [&str; 8] = [
    "run",
    "cluster",
    "size",
    "selected",
    "energy",
    "optimizer_value",
    "evaluations",
    "entropy_bits",
];

/// Runs every repetition of every algorithm and writes the report files
/// into `config.out`. Completed repetitions are written even when a later
/// one fails; the first error is then returned.
pub fn run_experiment(backend: Backend, prepared: &Prepared) -> Result<Experiment> {
    let Prepared {
        config,
        suite,
        imported,
    } = prepared;
    let out = &config.out;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let echo = serde_json::to_string_pretty(config).expect("config serializes");
    write_file(&out.join(CONFIG_FILE), echo + "\n")?;

    let results = par::map_tasks(backend, config.reps, |rep| -> Result<RepResult> {
        let qaoa = run_qaoa_tcs(backend, suite, config, rep)?;
        let sa = run_sa(suite, config, rep)?;
        let greedy = run_greedy(suite, config, rep)?;
        Ok(RepResult { qaoa, sa, greedy })
    });
    let mut failure = None;
    let mut reps = Vec::new();
    for r in results {
        match r {
            Ok(r) => reps.push(r),
            Err(e) => {
                failure.get_or_insert(e);
            }
        }
    }

    let mut runs: Vec<AlgorithmRun> = Vec::with_capacity(3 * reps.len());
    runs.extend(reps.iter().map(|r| r.qaoa.run.clone()));
    runs.extend(reps.iter().map(|r| r.sa.clone()));
    runs.extend(reps.iter().map(|r| r.greedy.clone()));

    let mut fronts: Vec<Front> = runs.iter().map(|r| r.front.clone()).collect();
    fronts.push(nondominated_filter(imported.clone())?);
    let reference = reference_front(&fronts)?;
    let by_run = count_contributions_by_run(&reference);
    let contribution = |o: &Origin| by_run.get(o).copied().unwrap_or(0);

    let program = suite.name().to_string();
    let mut rows: Vec<RunRow> = runs
        .iter()
        .map(|r| {
            let o = suite.objectives(&r.selection)?;
            Ok(RunRow {
                program: program.clone(),
                algorithm: r.algorithm.clone(),
                run: r.rep,
                seed: Some(r.seed),
                selected: Some(r.selection.count()),
                selection_hex: Some(r.selection.to_hex()),
                cost: Some(o.total_cost),
                faults: Some(o.fault_hits),
                stmts: Some(o.stmts_covered),
                front_size: r.front.len(),
                contributions: contribution(&Origin::new(r.algorithm.clone(), r.rep)),
            })
        })
        .collect::<Result<_>>()?;
    let mut imported_sizes: BTreeMap<Origin, usize> = BTreeMap::new();
    for p in imported {
        *imported_sizes.entry(p.origin.clone()).or_default() += 1;
    }
    rows.extend(imported_sizes.iter().map(|(o, &size)| RunRow {
        program: program.clone(),
        algorithm: o.algorithm.clone(),
        run: o.run,
        seed: None,
        selected: None,
        selection_hex: None,
        cost: None,
        faults: None,
        stmts: None,
        front_size: size,
        contributions: contribution(o),
    }));
    let timings: Vec<TimingRow> = runs
        .iter()
        .map(|r| TimingRow {
            program: program.clone(),
            algorithm: r.algorithm.clone(),
            run: r.rep,
            seconds: r.seconds,
        })
        .collect();

    write_csv(&out.join(RUNS_FILE), &RUNS_HEADER, &rows)?;
    write_csv(&out.join(TIMINGS_FILE), &TIMINGS_HEADER, &timings)?;
    write_points_csv(
        out.join(FRONTS_FILE),
        runs.iter().flat_map(|r| r.front.points()),
    )?;
    write_points_csv(out.join(REFERENCE_FILE), reference.points())?;
    let cluster_rows: Vec<ClusterRow> = reps
        .iter()
        .flat_map(|r| {
            r.qaoa
                .clusters
                .iter()
                .enumerate()
                .map(|(c, cl)| ClusterRow {
                    run: r.qaoa.run.rep,
                    cluster: c,
                    size: cl.members.len(),
                    selected: cl.outcome.index.count_ones() as usize,
                    energy: cl.outcome.energy,
                    optimizer_value: cl.outcome.diagnostics.optimizer_value,
                    evaluations: cl.outcome.diagnostics.evaluations,
                    entropy_bits: cl.outcome.diagnostics.entropy_bits,
                })
        })
        .collect();
    write_csv(&out.join(CLUSTERS_FILE), &CLUSTERS_HEADER, &cluster_rows)?;
    if config.dump || config.trace {
        write_artifacts(config, &reps)?;
    }
    let (summaries, headline) = write_reports(out, &program, &rows, &timings)?;

    if let Some(e) = failure {
        return Err(e);
    }
    Ok(Experiment {
        program,
        runs,
        reference,
        rows,
        timings,
        summaries,
        headline,
    })
}

fn write_artifacts(config: &ExperimentConfig, reps: &[RepResult]) -> Result<()> {
    for r in reps {
        let rep = r.qaoa.run.rep;
        if config.dump {
            let dir = config.out.join("dump").join(format!("run{rep:03}"));
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let mut assignment = String::from("test_index,cluster\n");
            for (i, c) in r.qaoa.assignment.iter().enumerate() {
                assignment.push_str(&format!("{i},{c}\n"));
            }
            write_file(&dir.join("clusters.csv"), assignment)?;
            for (c, cl) in r.qaoa.clusters.iter().enumerate() {
                cl.model
                    .write_triplets(dir.join(format!("cluster{c}.qubo")))?;
                let members: String = cl.members.iter().map(|m| format!("{m}\n")).collect();
                write_file(&dir.join(format!("cluster{c}.members")), members)?;
            }
        }
        if config.trace {
            let dir = config.out.join("trace");
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            for (c, cl) in r.qaoa.clusters.iter().enumerate() {
                let path = dir.join(format!("run{rep:03}_cluster{c}.jsonl"));
                write_trace(path, &cl.outcome.diagnostics.trace)?;
            }
        }
    }
    Ok(())
}

/// Per-algorithm means and deviations, in order of first appearance.
pub fn summarize(rows: &[RunRow], timings: &[TimingRow]) -> Vec<AlgorithmSummary> {
    let mut order: Vec<&str> = Vec::new();
    for r in rows {
        if !order.contains(&r.algorithm.as_str()) {
            order.push(&r.algorithm);
        }
    }
    order
        .into_iter()
        .map(|alg| {
            let mine: Vec<&RunRow> = rows.iter().filter(|r| r.algorithm == alg).collect();
            let secs: Vec<f64> = timings
                .iter()
                .filter(|t| t.algorithm == alg)
                .map(|t| t.seconds)
                .collect();
            AlgorithmSummary {
                algorithm: alg.to_string(),
                runs: mine.len(),
                front_size: MeanStd::of(
                    &mine.iter().map(|r| r.front_size as f64).collect::<Vec<_>>(),
                ),
                contributions: MeanStd::of(
                    &mine
                        .iter()
                        .map(|r| r.contributions as f64)
                        .collect::<Vec<_>>(),
                ),
                runtime: (!secs.is_empty()).then(|| MeanStd::of(&secs)),
            }
        })
        .collect()
}

pub fn headline(summaries: &[AlgorithmSummary]) -> Headline {
    let qaoa_mean = summaries
        .iter()
        .find(|s| s.algorithm == QAOA_TCS)
        .map_or(0.0, |s| s.contributions.mean);
    let best_other = summaries
        .iter()
        .filter(|s| s.algorithm != QAOA_TCS)
        .max_by(|a, b| a.contributions.mean.total_cmp(&b.contributions.mean))
        .map(|s| (s.algorithm.clone(), s.contributions.mean));
    let holds = best_other.as_ref().is_none_or(|(_, m)| qaoa_mean >= *m);
    Headline {
        qaoa_mean,
        best_other,
        holds,
    }
}

fn fmt_ms(m: &MeanStd, digits: usize) -> String {
    format!("{:.*} \u{b1} {:.*}", digits, m.mean, digits, m.std)
}

fn summary_markdown(program: &str, summaries: &[AlgorithmSummary], headline: &Headline) -> String {
    let reference: f64 = summaries
        .iter()
        .map(|s| s.contributions.mean * s.runs as f64)
        .sum();
    let mut md = format!("# Experiment summary: {program}\n\n");
    md.push_str(
        "| Algorithm | Runs | Front size | Reference contributions | Runtime (s) |\n\
         |---|---|---|---|---|\n",
    );
    for s in summaries {
        md.push_str(&format!(
            "| {} | {} | {} | {} | {} |\n",
            s.algorithm,
            s.runs,
            fmt_ms(&s.front_size, 2),
            fmt_ms(&s.contributions, 2),
            s.runtime
                .as_ref()
                .map_or_else(|| "n/a".to_string(), |m| fmt_ms(m, 4)),
        ));
    }
    md.push_str(&format!(
        "\nReference front: {} points. Values are mean \u{b1} sample standard deviation over runs.\n\n",
        reference.round()
    ));
    let others = match &headline.best_other {
        Some((alg, m)) => format!("best other is {alg} with {m:.2}"),
        None => "no other algorithm".to_string(),
    };
    if headline.holds {
        md.push_str(&format!(
            "Headline direction holds: {QAOA_TCS} has the highest mean reference contribution ({:.2}; {others}).\n",
            headline.qaoa_mean
        ));
    } else {
        md.push_str(&format!(
            "DEVIATION: {QAOA_TCS} does not have the highest mean reference contribution ({:.2}; {others}).\n",
            headline.qaoa_mean
        ));
    }
    md
}

/// Writes `summary.md`, `stats.md` and `stats.csv` from per-run rows.
pub fn write_reports(
    out: &Path,
    program: &str,
    rows: &[RunRow],
    timings: &[TimingRow],
) -> Result<(Vec<AlgorithmSummary>, Headline)> {
    let summaries = summarize(rows, timings);
    let headline = headline(&summaries);
    write_file(
        &out.join(SUMMARY_FILE),
        summary_markdown(program, &summaries, &headline),
    )?;

    let mut md = format!("# Statistics: {program}\n\n");
    let mut csv = format!("{REPORT_CSV_HEADER}\n");
    let short: Vec<&str> = ALGORITHMS
        .iter()
        .copied()
        .filter(|a| summaries.iter().any(|s| s.algorithm == *a && s.runs < 2))
        .collect();
    if !short.is_empty() {
        md.push_str(&format!(
            "Insufficient replicates: {} need at least two runs per algorithm.\n",
            short.join(", ")
        ));
    } else {
        let groups = |metric: &dyn Fn(&str) -> Option<Vec<f64>>| -> Vec<(String, Vec<f64>)> {
            summaries
                .iter()
                .filter_map(|s| metric(&s.algorithm).map(|v| (s.algorithm.clone(), v)))
                .filter(|(_, v)| v.len() >= 2)
                .collect()
        };
        let contributions = groups(&|alg| {
            Some(
                rows.iter()
                    .filter(|r| r.algorithm == alg)
                    .map(|r| r.contributions as f64)
                    .collect(),
            )
        });
        let runtime = groups(&|alg| {
            let v: Vec<f64> = timings
                .iter()
                .filter(|t| t.algorithm == alg)
                .map(|t| t.seconds)
                .collect();
            (!v.is_empty()).then_some(v)
        });
        for (metric, groups) in [("contributions", contributions), ("runtime", runtime)] {
            let report = StatReport::compute(program, metric, &groups)?;
            md.push_str(&report.to_markdown());
            md.push('\n');
            csv.push_str(&report.csv_rows());
        }
        md.push_str(&format!(
            "Dunn p-values are two-sided and Benjamini-Hochberg adjusted within each metric. \
             A12 is the probability that the first algorithm scores higher. Significance level {}.\n",
            crate::stats::SIGNIFICANCE
        ));
    }
    write_file(&out.join(STATS_FILE), md)?;
    write_file(&out.join(STATS_CSV_FILE), csv)?;
    Ok((summaries, headline))
}

/// Rebuilds `summary.md`, `stats.md` and `stats.csv` from the stored
/// `runs.csv` and `timings.csv` of a finished run.
pub fn recompute_stats(dir: &Path) -> Result<(Vec<AlgorithmSummary>, Headline)> {
    let rows: Vec<RunRow> = read_csv(&dir.join(RUNS_FILE))?;
    let timings: Vec<TimingRow> = read_csv(&dir.join(TIMINGS_FILE))?;
    let program = rows
        .first()
        .map(|r| r.program.clone())
        .ok_or_else(|| Error::Csv(format!("{}: no runs", dir.join(RUNS_FILE).display())))?;
    if rows.iter().any(|r| r.program != program) {
        return Err(Error::MixedSuites);
    }
    write_reports(dir, &program, &rows, &timings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qaoa::qaoa_select;

    fn synth(n: usize, m: usize, seed: u64) -> SuiteSource {
        SuiteSource::Synth {
            n_tests: n,
            n_stmts: m,
            density: 0.3,
            fault_rate: 0.3,
            seed,
        }
    }

    fn small_config(out: &Path, reps: usize) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(synth(12, 16, 3), out);
        c.max_cluster = 6;
        c.qaoa = QaoaSettings {
            p: 1,
            restarts: 1,
            shots: 256,
            max_evals: Some(40),
            normalize: true,
        };
        c.sa_sweeps = 50;
        c.reps = reps;
        c
    }

    #[test]
    fn single_cluster_matches_direct_qaoa() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = small_config(dir.path(), 1);
        c.source = synth(4, 6, 1);
        c.k = Some(1);
        let suite = c.source.load().unwrap();
        let got = run_qaoa_tcs(Backend::Sequential, &suite, &c, 0).unwrap();

        let model = build_qubo(
            &suite,
            c.alpha,
            penalty_upper_bound(&suite, c.alpha).unwrap(),
        )
        .unwrap();
        let direct =
            qaoa_select(&model, &c.qaoa.with_seed(cluster_seed(c.run_seed(0), 0))).unwrap();
        let selection = Selection::from_index(4, direct.index);
        assert_eq!(got.run.selection, selection);
        let front = incremental_front(&suite, &selection, &Origin::new(QAOA_TCS, 0)).unwrap();
        assert_eq!(got.run.front, front);
    }

    #[test]
    fn decomposed_run_respects_cap_and_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = small_config(dir.path(), 1);
        c.source = SuiteSource::Synth {
            n_tests: 45,
            n_stmts: 60,
            density: 0.2,
            fault_rate: 0.2,
            seed: 11,
        };
        c.k = Some(3);
        c.max_cluster = 20;
        c.qaoa.max_evals = Some(10);
        c.qaoa.restarts = 1;
        let suite = c.source.load().unwrap();
        let a = run_qaoa_tcs(Backend::default(), &suite, &c, 2).unwrap();
        assert!(a.clusters.iter().all(|cl| cl.members.len() <= 20));
        assert_eq!(
            a.clusters.iter().map(|cl| cl.members.len()).sum::<usize>(),
            45
        );
        assert!(!a.run.front.is_empty());
        let b = run_qaoa_tcs(Backend::Sequential, &suite, &c, 2).unwrap();
        assert_eq!(a.run.selection, b.run.selection);
        assert_eq!(a.run.front, b.run.front);
    }

    #[test]
    fn config_validation() {
        let c = ExperimentConfig::new(synth(10, 10, 0), "out");
        assert!(c.validate().is_ok());
        let suite = c.source.load().unwrap();
        assert_eq!(c.resolve_k(&suite).unwrap(), 2);

        for broken in [
            ExperimentConfig {
                alpha: 1.5,
                ..c.clone()
            },
            ExperimentConfig {
                reps: 0,
                ..c.clone()
            },
            ExperimentConfig {
                k: Some(0),
                ..c.clone()
            },
            ExperimentConfig {
                max_cluster: 30,
                ..c.clone()
            },
            ExperimentConfig {
                sa_sweeps: 0,
                ..c.clone()
            },
        ] {
            assert!(broken.validate().is_err());
        }
        let tight = ExperimentConfig {
            k: Some(2),
            max_cluster: 4,
            ..c.clone()
        };
        assert!(matches!(
            tight.resolve_k(&suite),
            Err(Error::InfeasibleCapacity { .. })
        ));
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&json).unwrap(), c);
    }

    #[test]
    fn single_rep_report_marks_insufficient_replicates() {
        let dir = tempfile::tempdir().unwrap();
        let c = small_config(dir.path(), 1);
        let exp = run_experiment(Backend::default(), &prepare(c).unwrap()).unwrap();
        assert_eq!(exp.summaries.len(), 3);
        let stats = fs::read_to_string(dir.path().join(STATS_FILE)).unwrap();
        assert!(stats.contains("Insufficient replicates"));
        let summary = fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap();
        for alg in ALGORITHMS {
            assert_eq!(summary.matches(&format!("| {alg} |")).count(), 1);
        }
    }

    #[test]
    fn full_report_shape_and_recomputation() {
        let dir = tempfile::tempdir().unwrap();
        let c = small_config(dir.path(), 3);
        let exp = run_experiment(Backend::default(), &prepare(c).unwrap()).unwrap();

        let total: usize = exp.rows.iter().map(|r| r.contributions).sum();
        assert_eq!(total, exp.reference.len());
        let greedy = exp
            .summaries
            .iter()
            .find(|s| s.algorithm == GREEDY)
            .unwrap();
        assert_eq!(greedy.contributions.std, 0.0);
        assert_eq!(greedy.front_size.std, 0.0);

        // Every stored front is already non-dominated.
        for r in &exp.runs {
            let again = nondominated_filter(r.front.points().to_vec()).unwrap();
            assert_eq!(again, r.front);
        }

        let stats_csv = fs::read_to_string(dir.path().join(STATS_CSV_FILE)).unwrap();
        assert_eq!(stats_csv.lines().count(), 1 + 3 + 3);
        let before = fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap();
        let (summaries, _) = recompute_stats(dir.path()).unwrap();
        assert_eq!(summaries, exp.summaries);
        assert_eq!(
            fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap(),
            before
        );
    }

    #[test]
    fn imported_fronts_join_the_reference() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = small_config(dir.path(), 2);
        let suite = c.source.load().unwrap();
        // The empty selection's neighbour with the cheapest test: hard to dominate on cost.
        let cheapest = (0..suite.n_tests())
            .min_by(|&a, &b| suite.costs()[a].total_cmp(&suite.costs()[b]))
            .unwrap();
        let p = ParetoPoint::evaluate(
            &suite,
            Selection::from_indices(suite.n_tests(), &[cheapest]),
            Origin::new("External", 0),
        )
        .unwrap();
        let path = dir.path().join("ext.csv");
        write_points_csv(&path, [&p]).unwrap();
        c.import = vec![path.clone()];
        let exp = run_experiment(Backend::default(), &prepare(c.clone()).unwrap()).unwrap();
        let ext = exp.rows.iter().find(|r| r.algorithm == "External").unwrap();
        assert_eq!(ext.front_size, 1);
        assert!(ext.seed.is_none());

        let clash = ParetoPoint {
            origin: Origin::new(SA, 0),
            ..p
        };
        write_points_csv(&path, [&clash]).unwrap();
        assert!(prepare(c).is_err());
    }

    #[test]
    fn mean_std() {
        let m = MeanStd::of(&[1.0, 2.0, 3.0]);
        assert_eq!((m.mean, m.std), (2.0, 1.0));
        assert_eq!(MeanStd::of(&[4.0]).std, 0.0);
    }
}

//! Noiseless statevector QAOA over a [`QuboModel`].
//!
//! Basis index `b` encodes a selection with bit `i` of `b` equal to `x_i`.
//! The cost Hamiltonian is diagonal, so the phase separator is applied from a
//! precomputed [`EnergyTable`] instead of gate by gate. The mixer applies
//! `exp(-i beta X_j)` to every qubit.

pub mod optim;

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::par::{self, Backend};
use crate::qubo::{row_term, QuboModel};
use crate::seeds::derive_seed;
use optim::{nelder_mead, NelderMeadOptions};

/// Largest register the engine will allocate (2^24 amplitudes, 256 MiB).
pub const MAX_QUBITS: usize = 24;

/// Amplitudes per cache block in the mixer; qubits below this are applied
/// block-locally.
const MIXER_BLOCK_BITS: usize = 12;

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyTable {
    n: usize,
    energies: Vec<f64>,
}

impl EnergyTable {
    pub fn from_energies(n: usize, energies: Vec<f64>) -> Result<Self> {
        check_qubits(n)?;
        Error::check_len(1 << n, energies.len())?;
        if energies.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidParameter(
                "energy table has non-finite entries".into(),
            ));
        }
        Ok(EnergyTable { n, energies })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn mean(&self) -> f64 {
        self.energies.iter().sum::<f64>() / self.energies.len() as f64
    }

    /// `(index, energy)` of the lowest entry; ties go to the lowest index.
    pub fn argmin(&self) -> (u64, f64) {
        let mut best = (0u64, self.energies[0]);
        for (b, &e) in self.energies.iter().enumerate() {
            if e < best.1 {
                best = (b as u64, e);
            }
        }
        best
    }

    /// The same table divided by its largest magnitude (identity for a zero table).
    pub fn normalized(&self) -> (EnergyTable, f64) {
        let scale = self.energies.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        if scale == 0.0 {
            return (self.clone(), 1.0);
        }
        let energies = self.energies.iter().map(|e| e / scale).collect();
        (
            EnergyTable {
                n: self.n,
                energies,
            },
            scale,
        )
    }
}

fn check_qubits(n: usize) -> Result<()> {
    if n > MAX_QUBITS {
        Err(Error::TooManyQubits { n, cap: MAX_QUBITS })
    } else {
        Ok(())
    }
}

pub fn energy_table(model: &QuboModel) -> Result<EnergyTable> {
    energy_table_with(Backend::default(), model)
}

/// Fills the table by highest set bit: `E[b] = E[b - 2^h] + term_h(b)`, which
/// is exactly the accumulation order of [`QuboModel::energy`]. Each stage `h`
/// reads only `[0, 2^h)` and writes `[2^h, 2^(h+1))`, so stages parallelize.
pub fn energy_table_with(backend: Backend, model: &QuboModel) -> Result<EnergyTable> {
    let n = model.n();
    check_qubits(n)?;
    let mut partial = vec![0.0f64; 1 << n];
    for h in 0..n {
        let half = 1usize << h;
        let (done, stage) = partial[..2 * half].split_at_mut(half);
        let done: &[f64] = done;
        let row: Vec<f64> = (0..h).map(|j| model.get(h, j)).collect();
        let diag = model.get(h, h);
        par::for_each_indexed(backend, stage, |low, out| {
            let mut acc = 0.0;
            for (j, &v) in row.iter().enumerate() {
                if (low >> j) & 1 == 1 {
                    acc += v;
                }
            }
            *out = done[low] + row_term(diag, acc);
        });
    }
    let offset = model.offset;
    par::for_each_indexed(backend, &mut partial, |_, e| *e += offset);
    Ok(EnergyTable {
        n,
        energies: partial,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    pub fn uniform(n: usize) -> Result<Self> {
        check_qubits(n)?;
        let a = (-(n as f64) / 2.0).exp2();
        Ok(StateVector {
            n,
            amps: vec![Complex64::new(a, 0.0); 1 << n],
        })
    }

    pub fn basis(n: usize, index: u64) -> Result<Self> {
        check_qubits(n)?;
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
        let slot = amps
            .get_mut(index as usize)
            .ok_or_else(|| Error::InvalidParameter(format!("basis index {index} out of range")))?;
        *slot = Complex64::new(1.0, 0.0);
        Ok(StateVector { n, amps })
    }

    pub fn from_amplitudes(n: usize, amps: Vec<Complex64>) -> Result<Self> {
        check_qubits(n)?;
        Error::check_len(1 << n, amps.len())?;
        Ok(StateVector { n, amps })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        par::sum_indexed(Backend::Sequential, self.amps.len(), |i| {
            self.amps[i].norm_sqr()
        })
    }

    fn reset_uniform(&mut self) {
        let a = (-(self.n as f64) / 2.0).exp2();
        self.amps
            .iter_mut()
            .for_each(|x| *x = Complex64::new(a, 0.0));
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QaoaParams {
    pub gammas: Vec<f64>,
    pub betas: Vec<f64>,
}

impl QaoaParams {
    pub fn new(gammas: Vec<f64>, betas: Vec<f64>) -> Result<Self> {
        if gammas.is_empty() || gammas.len() != betas.len() {
            return Err(Error::InvalidParameter(format!(
                "need p >= 1 matching angles, got {} gammas and {} betas",
                gammas.len(),
                betas.len()
            )));
        }
        Ok(QaoaParams { gammas, betas })
    }

    pub fn zeros(p: usize) -> Self {
        QaoaParams {
            gammas: vec![0.0; p],
            betas: vec![0.0; p],
        }
    }

    pub fn p(&self) -> usize {
        self.gammas.len()
    }

    /// `[gamma_1..gamma_p, beta_1..beta_p]`.
    pub fn to_flat(&self) -> Vec<f64> {
        self.gammas.iter().chain(&self.betas).copied().collect()
    }

    pub fn from_flat(x: &[f64]) -> Self {
        let p = x.len() / 2;
        QaoaParams {
            gammas: x[..p].to_vec(),
            betas: x[p..].to_vec(),
        }
    }
}

pub fn apply_phase(state: &mut StateVector, table: &EnergyTable, gamma: f64) -> Result<()> {
    apply_phase_with(Backend::default(), state, table, gamma)
}

/// `amp[b] *= exp(-i gamma E[b])`.
pub fn apply_phase_with(
    backend: Backend,
    state: &mut StateVector,
    table: &EnergyTable,
    gamma: f64,
) -> Result<()> {
    Error::check_len(table.n, state.n)?;
    if gamma == 0.0 {
        return Ok(());
    }
    let energies = &table.energies;
    par::for_each_indexed(backend, &mut state.amps, |b, a| {
        let (s, c) = (-gamma * energies[b]).sin_cos();
        *a *= Complex64::new(c, s);
    });
    Ok(())
}

pub fn apply_mixer(state: &mut StateVector, beta: f64) {
    apply_mixer_with(Backend::default(), state, beta)
}

/// `prod_j exp(-i beta X_j)`: each pair `(a, a')` differing in bit `j`
/// becomes `(cos b * a - i sin b * a', cos b * a' - i sin b * a)`.
pub fn apply_mixer_with(backend: Backend, state: &mut StateVector, beta: f64) {
    if beta == 0.0 {
        return;
    }
    let (s, c) = beta.sin_cos();
    let n = state.n;
    let local = n.min(MIXER_BLOCK_BITS);
    par::for_each_chunk(backend, &mut state.amps, 1 << local, |_, block| {
        for j in 0..local {
            rotate_pairs(block, 1 << j, c, s);
        }
    });
    for j in local..n {
        let stride = 1usize << j;
        par::for_each_chunk(backend, &mut state.amps, 2 * stride, |_, chunk| {
            let (lo, hi) = chunk.split_at_mut(stride);
            rotate_slices(lo, hi, c, s);
        });
    }
}

#[inline]
fn rotate_slices(lo: &mut [Complex64], hi: &mut [Complex64], c: f64, s: f64) {
    for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
        let (x, y) = (*a, *b);
        // -i s y = (s y.im, -s y.re)
        *a = Complex64::new(c * x.re + s * y.im, c * x.im - s * y.re);
        *b = Complex64::new(c * y.re + s * x.im, c * y.im - s * x.re);
    }
}

#[inline]
fn rotate_pairs(block: &mut [Complex64], stride: usize, c: f64, s: f64) {
    for chunk in block.chunks_mut(2 * stride) {
        let (lo, hi) = chunk.split_at_mut(stride);
        rotate_slices(lo, hi, c, s);
    }
}

pub fn run_circuit(table: &EnergyTable, params: &QaoaParams) -> Result<StateVector> {
    run_circuit_with(Backend::default(), table, params)
}

pub fn run_circuit_with(
    backend: Backend,
    table: &EnergyTable,
    params: &QaoaParams,
) -> Result<StateVector> {
    let mut state = StateVector::uniform(table.n)?;
    evolve(backend, &mut state, table, params)?;
    Ok(state)
}

fn evolve(
    backend: Backend,
    state: &mut StateVector,
    table: &EnergyTable,
    params: &QaoaParams,
) -> Result<()> {
    for (&gamma, &beta) in params.gammas.iter().zip(&params.betas) {
        apply_phase_with(backend, state, table, gamma)?;
        apply_mixer_with(backend, state, beta);
    }
    Ok(())
}

pub fn expectation(state: &StateVector, table: &EnergyTable) -> Result<f64> {
    expectation_with(Backend::default(), state, table)
}

pub fn expectation_with(backend: Backend, state: &StateVector, table: &EnergyTable) -> Result<f64> {
    Error::check_len(table.n, state.n)?;
    let (amps, energies) = (&state.amps, &table.energies);
    Ok(par::sum_indexed(backend, amps.len(), |b| {
        amps[b].norm_sqr() * energies[b]
    }))
}

/// One optimizer iteration of one start, for the optional JSON-lines trace.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRecord {
    pub start: usize,
    pub iteration: usize,
    pub gammas: Vec<f64>,
    pub betas: Vec<f64>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizeOutcome {
    pub params: QaoaParams,
    pub value: f64,
    /// Total circuit evaluations across all starts.
    pub evaluations: usize,
    pub iterations: usize,
    pub trace: Vec<TraceRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizeSettings {
    pub p: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Evaluation budget per start; `None` means `200 * 2p`.
    pub max_evals: Option<usize>,
    pub trace: bool,
}

pub fn optimize_params(
    table: &EnergyTable,
    p: usize,
    restarts: usize,
    seed: u64,
) -> Result<(QaoaParams, f64)> {
    let out = optimize_params_with(
        Backend::default(),
        table,
        &OptimizeSettings {
            p,
            restarts,
            seed,
            max_evals: None,
            trace: false,
        },
    )?;
    Ok((out.params, out.value))
}

/// Nelder-Mead over the `2p` angles of `<H>` from the all-zero start plus
/// `restarts` random starts (`gamma ~ U(0, pi)`, `beta ~ U(0, pi/2)`). Starts
/// run as independent tasks; the best value wins, ties to the earlier start.
pub fn optimize_params_with(
    backend: Backend,
    table: &EnergyTable,
    settings: &OptimizeSettings,
) -> Result<OptimizeOutcome> {
    let p = settings.p;
    if p == 0 {
        return Err(Error::InvalidParameter("QAOA needs p >= 1".into()));
    }
    if settings.restarts == 0 {
        return Err(Error::InvalidParameter("restarts must be >= 1".into()));
    }
    let mut opts = NelderMeadOptions::for_dimension(2 * p);
    if let Some(budget) = settings.max_evals {
        opts.max_evals = budget.max(2 * p + 1);
    }
    let starts = settings.restarts + 1;
    // Starts are the parallel unit; kernels inside a start run sequentially
    // unless there is only one start worth parallelizing.
    let inner = if starts > 1 {
        Backend::Sequential
    } else {
        backend
    };

    let runs = par::map_tasks(backend, starts, |start| -> Result<_> {
        let x0 = if start == 0 {
            vec![0.0; 2 * p]
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(settings.seed, start as u64));
            let mut x = Vec::with_capacity(2 * p);
            x.extend((0..p).map(|_| rng.random_range(0.0..std::f64::consts::PI)));
            x.extend((0..p).map(|_| rng.random_range(0.0..std::f64::consts::FRAC_PI_2)));
            x
        };
        let mut state = StateVector::uniform(table.n)?;
        let mut trace = Vec::new();
        let result = nelder_mead(
            |x| {
                state.reset_uniform();
                let params = QaoaParams::from_flat(x);
                evolve(inner, &mut state, table, &params).expect("dimensions checked");
                expectation_with(inner, &state, table).expect("dimensions checked")
            },
            &x0,
            &opts,
            |iteration, x, value| {
                if settings.trace {
                    let params = QaoaParams::from_flat(x);
                    trace.push(TraceRecord {
                        start,
                        iteration,
                        gammas: params.gammas,
                        betas: params.betas,
                        value,
                    });
                }
            },
        );
        Ok((result, trace))
    });

    let mut best: Option<(usize, f64)> = None;
    let mut evaluations = 0;
    let mut iterations = 0;
    let mut trace = Vec::new();
    let mut results = Vec::with_capacity(starts);
    for (start, run) in runs.into_iter().enumerate() {
        let (result, mut t) = run?;
        evaluations += result.evaluations;
        iterations += result.iterations;
        trace.append(&mut t);
        if best.is_none_or(|(_, v)| result.value < v) {
            best = Some((start, result.value));
        }
        results.push(result);
    }
    let (winner, value) = best.expect("at least one start");
    Ok(OptimizeOutcome {
        params: QaoaParams::from_flat(&results[winner].x),
        value,
        evaluations,
        iterations,
        trace,
    })
}

/// Draws `shots` basis states from `|amp|^2`.
pub fn sample(state: &StateVector, shots: usize, seed: u64) -> Result<BTreeMap<u64, usize>> {
    if shots == 0 {
        return Err(Error::InvalidParameter("shots must be >= 1".into()));
    }
    let mut cumulative = Vec::with_capacity(state.amps.len());
    let mut total = 0.0;
    for a in &state.amps {
        total += a.norm_sqr();
        cumulative.push(total);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let last = cumulative.len() - 1;
    let mut counts = BTreeMap::new();
    for _ in 0..shots {
        let u = rng.random::<f64>() * total;
        let b = cumulative.partition_point(|&c| c <= u).min(last);
        *counts.entry(b as u64).or_insert(0) += 1;
    }
    Ok(counts)
}

/// Shannon entropy (bits) of an empirical distribution.
pub fn entropy_bits(counts: &BTreeMap<u64, usize>) -> f64 {
    let total: usize = counts.values().sum();
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.log2()
        })
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct QaoaConfig {
    pub p: usize,
    pub restarts: usize,
    pub shots: usize,
    pub seed: u64,
    /// Per-start evaluation budget; `None` means `200 * 2p`.
    pub max_evals: Option<usize>,
    /// Optimize against the table scaled to unit max magnitude.
    pub normalize: bool,
}

impl Default for QaoaConfig {
    fn default() -> Self {
        QaoaConfig {
            p: 3,
            restarts: 5,
            shots: 2048,
            seed: 0,
            max_evals: None,
            normalize: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QaoaDiagnostics {
    /// Optimized `<H>` in units of the original table.
    pub optimizer_value: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub entropy_bits: f64,
    pub params: QaoaParams,
    pub scale: f64,
    pub counts: BTreeMap<u64, usize>,
    pub trace: Vec<TraceRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QaoaOutcome {
    /// Bit `i` selects test `i`.
    pub index: u64,
    pub energy: f64,
    pub diagnostics: QaoaDiagnostics,
}

pub fn qaoa_select(model: &QuboModel, config: &QaoaConfig) -> Result<QaoaOutcome> {
    qaoa_select_with(Backend::default(), model, config, false)
}

/// Energy table, angle optimization, final circuit, sampling; returns the
/// lowest-energy sampled bitstring (ties: lowest index).
pub fn qaoa_select_with(
    backend: Backend,
    model: &QuboModel,
    config: &QaoaConfig,
    trace: bool,
) -> Result<QaoaOutcome> {
    let table = energy_table_with(backend, model)?;
    let (work, scale) = if config.normalize {
        table.normalized()
    } else {
        (table.clone(), 1.0)
    };
    let opt = optimize_params_with(
        backend,
        &work,
        &OptimizeSettings {
            p: config.p,
            restarts: config.restarts,
            seed: derive_seed(config.seed, 0x0a0a),
            max_evals: config.max_evals,
            trace,
        },
    )?;
    let state = run_circuit_with(backend, &work, &opt.params)?;
    let counts = sample(&state, config.shots, derive_seed(config.seed, 0x5a5a))?;
    let (index, energy) = counts
        .keys()
        .map(|&b| (b, table.energies[b as usize]))
        .fold(None, |best: Option<(u64, f64)>, cur| match best {
            Some(b) if b.1 <= cur.1 => Some(b),
            _ => Some(cur),
        })
        .expect("at least one shot");
    Ok(QaoaOutcome {
        index,
        energy,
        diagnostics: QaoaDiagnostics {
            optimizer_value: opt.value * scale,
            evaluations: opt.evaluations,
            iterations: opt.iterations,
            entropy_bits: entropy_bits(&counts),
            params: opt.params,
            scale,
            counts,
            trace: opt.trace,
        },
    })
}

pub fn write_trace(path: impl AsRef<Path>, records: &[TraceRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for r in records {
        let line = serde_json::to_string(r).expect("trace records serialize");
        writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

//! Nonparametric comparison battery: Kruskal-Wallis, Dunn, Benjamini-Hochberg
//! and the Vargha-Delaney effect size.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};

pub const SIGNIFICANCE: f64 = 0.05;

const GAMMA_EPS: f64 = 1e-15;
const GAMMA_MAX_ITER: usize = 10_000;

/// Natural log of the gamma function (Lanczos, g = 7), for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + 7.5;
    let series = COEF[1..]
        .iter()
        .enumerate()
        .fold(COEF[0], |acc, (i, c)| acc + c / (x + i as f64 + 1.0));
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + series.ln()
}

/// Lower series, valid for `x < a + 1`.
fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut ap = a;
    for _ in 0..GAMMA_MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * GAMMA_EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

/// Upper continued fraction (modified Lentz), valid for `x >= a + 1`.
fn gamma_q_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..GAMMA_MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < GAMMA_EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Regularized upper incomplete gamma `Q(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_fraction(a, x)
    }
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x < a + 1.0 {
        gamma_p_series(a, x)
    } else {
        1.0 - gamma_q_fraction(a, x)
    }
}

/// `P(X > x)` for a chi-squared variable with `df` degrees of freedom.
pub fn chi2_sf(x: f64, df: f64) -> f64 {
    gamma_q(0.5 * df, 0.5 * x)
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    // Phi(-|z|) = erfc(|z|/sqrt 2)/2 = Q(1/2, z^2/2)/2.
    let tail = 0.5 * gamma_q(0.5, 0.5 * z * z);
    if z < 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

/// Pooled midranks plus the tie-group sizes.
struct Ranking {
    rank_sums: Vec<f64>,
    sizes: Vec<usize>,
    /// `sum(t^3 - t)` over tie groups.
    tie_term: f64,
}

impl Ranking {
    fn total(&self) -> usize {
        self.sizes.iter().sum()
    }

    fn mean_rank(&self, g: usize) -> f64 {
        self.rank_sums[g] / self.sizes[g] as f64
    }
}

fn validate_groups(samples: &[Vec<f64>]) -> Result<()> {
    if samples.len() < 2 {
        return Err(Error::InvalidParameter("need at least two groups".into()));
    }
    if samples.iter().any(|g| g.is_empty()) {
        return Err(Error::InvalidParameter(
            "every group must be nonempty".into(),
        ));
    }
    if samples.iter().map(Vec::len).sum::<usize>() < 3 {
        return Err(Error::InvalidParameter(
            "need at least three observations".into(),
        ));
    }
    if samples.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "observations must be finite".into(),
        ));
    }
    Ok(())
}

fn rank(samples: &[Vec<f64>]) -> Ranking {
    let pooled: Vec<(f64, usize)> = samples
        .iter()
        .enumerate()
        .flat_map(|(g, vs)| vs.iter().map(move |&v| (v, g)))
        .collect();
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[a].0.total_cmp(&pooled[b].0));
    let mut rank_sums = vec![0.0; samples.len()];
    let mut tie_term = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && pooled[order[end]].0 == pooled[order[start]].0 {
            end += 1;
        }
        // Ranks start + 1 ..= end share their average.
        let midrank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            rank_sums[pooled[i].1] += midrank;
        }
        let t = (end - start) as f64;
        tie_term += t * t * t - t;
        start = end;
    }
    Ranking {
        rank_sums,
        sizes: samples.iter().map(Vec::len).collect(),
        tie_term,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KruskalWallis {
    pub h: f64,
    pub df: usize,
    pub p: f64,
}

fn h_statistic(r: &Ranking) -> Option<f64> {
    let n = r.total() as f64;
    let correction = 1.0 - r.tie_term / (n * n * n - n);
    if correction <= 0.0 {
        return None;
    }
    let s: f64 = (0..r.sizes.len())
        .map(|g| r.rank_sums[g] * r.rank_sums[g] / r.sizes[g] as f64)
        .sum();
    let h = (12.0 / (n * (n + 1.0)) * s - 3.0 * (n + 1.0)) / correction;
    Some(h.max(0.0))
}

/// Kruskal-Wallis H with tie correction; p from the chi-squared tail.
/// All-identical data gives `H = 0, p = 1`.
pub fn kruskal_wallis(samples: &[Vec<f64>]) -> Result<KruskalWallis> {
    validate_groups(samples)?;
    let df = samples.len() - 1;
    Ok(match h_statistic(&rank(samples)) {
        Some(h) => KruskalWallis {
            h,
            df,
            p: chi2_sf(h, df as f64).clamp(0.0, 1.0),
        },
        None => KruskalWallis { h: 0.0, df, p: 1.0 },
    })
}

fn check_pairs(samples: &[Vec<f64>], pairs: &[(usize, usize)]) -> Result<()> {
    match pairs
        .iter()
        .find(|&&(i, j)| i >= samples.len() || j >= samples.len())
    {
        Some(&(i, j)) => Err(Error::InvalidParameter(format!(
            "pair ({i}, {j}) out of range for {} groups",
            samples.len()
        ))),
        None => Ok(()),
    }
}

/// Dunn z statistics for `pairs`; `None` when the variance term vanishes.
fn dunn_z(r: &Ranking, pairs: &[(usize, usize)]) -> Option<Vec<f64>> {
    let n = r.total() as f64;
    let variance = n * (n + 1.0) / 12.0 - r.tie_term / (12.0 * (n - 1.0));
    if variance <= 0.0 {
        return None;
    }
    Some(
        pairs
            .iter()
            .map(|&(i, j)| {
                let se = (variance * (1.0 / r.sizes[i] as f64 + 1.0 / r.sizes[j] as f64)).sqrt();
                (r.mean_rank(i) - r.mean_rank(j)) / se
            })
            .collect(),
    )
}

/// Two-sided Dunn p-values for each pair of group indices.
pub fn dunn_test(samples: &[Vec<f64>], pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
    validate_groups(samples)?;
    check_pairs(samples, pairs)?;
    Ok(match dunn_z(&rank(samples), pairs) {
        Some(zs) => zs
            .into_iter()
            .map(|z| (2.0 * normal_cdf(-z.abs())).min(1.0))
            .collect(),
        None => vec![1.0; pairs.len()],
    })
}

/// All `(i, j)` with `i < j`.
pub fn all_pairs(groups: usize) -> Vec<(usize, usize)> {
    (0..groups)
        .flat_map(|i| (i + 1..groups).map(move |j| (i, j)))
        .collect()
}

/// Benjamini-Hochberg step-up adjustment, returned in input order.
pub fn bh_adjust(pvals: &[f64]) -> Result<Vec<f64>> {
    if let Some(p) = pvals.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidParameter(format!(
            "p-value {p} outside [0, 1]"
        )));
    }
    let m = pvals.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvals[a].total_cmp(&pvals[b]));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        running = running.min(pvals[i] * (m as f64 / (rank + 1) as f64));
        adjusted[i] = running;
    }
    Ok(adjusted)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Magnitude {
    Negligible,
    Small,
    Medium,
    Large,
}

impl Magnitude {
    pub fn from_a12(value: f64) -> Self {
        let d = (value - 0.5).abs();
        if d < 0.06 {
            Magnitude::Negligible
        } else if d < 0.14 {
            Magnitude::Small
        } else if d < 0.21 {
            Magnitude::Medium
        } else {
            Magnitude::Large
        }
    }

    pub fn letter(self) -> char {
        match self {
            Magnitude::Negligible => 'N',
            Magnitude::Small => 'S',
            Magnitude::Medium => 'M',
            Magnitude::Large => 'L',
        }
    }
}

impl fmt::Display for Magnitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Magnitude::Negligible => "negligible",
            Magnitude::Small => "small",
            Magnitude::Medium => "medium",
            Magnitude::Large => "large",
        })
    }
}

/// Vargha-Delaney A12: probability that a draw from `x` exceeds one from
/// `y`, counting ties as half.
pub fn a12(x: &[f64], y: &[f64]) -> Result<(f64, Magnitude)> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::InvalidParameter(
            "a12 needs two nonempty samples".into(),
        ));
    }
    // Doubled counts stay integral, so a12(x, y) + a12(y, x) == 1 exactly.
    let mut twice = 0u64;
    for a in x {
        for b in y {
            twice += match a.partial_cmp(b) {
                Some(std::cmp::Ordering::Greater) => 2,
                Some(std::cmp::Ordering::Equal) => 1,
                _ => 0,
            };
        }
    }
    let value = twice as f64 / (2 * x.len() * y.len()) as f64;
    Ok((value, Magnitude::from_a12(value)))
}

/// Exact permutation p-values over every relabelling of the pooled data that
/// keeps the group sizes. Practical for small samples only.
pub mod exact {
    use super::*;

    /// Relabellings are enumerated up to this many.
    pub const MAX_ARRANGEMENTS: u64 = 5_000_000;

    fn arrangements(sizes: &[usize]) -> u64 {
        // Multinomial coefficient, built as a product of binomials.
        let mut total = 0u64;
        let mut count = 1u64;
        for &s in sizes {
            for k in 1..=s as u64 {
                total += 1;
                count = count.saturating_mul(total) / k;
            }
        }
        count
    }

    fn enumerate(values: &[f64], sizes: &[usize], visit: &mut dyn FnMut(&[Vec<f64>])) {
        fn go(
            values: &[f64],
            pos: usize,
            left: &mut Vec<usize>,
            groups: &mut Vec<Vec<f64>>,
            visit: &mut dyn FnMut(&[Vec<f64>]),
        ) {
            if pos == values.len() {
                visit(groups);
                return;
            }
            for g in 0..left.len() {
                if left[g] > 0 {
                    left[g] -= 1;
                    groups[g].push(values[pos]);
                    go(values, pos + 1, left, groups, visit);
                    groups[g].pop();
                    left[g] += 1;
                }
            }
        }
        let mut left = sizes.to_vec();
        let mut groups = vec![Vec::new(); sizes.len()];
        go(values, 0, &mut left, &mut groups, visit);
    }

    fn prepare(samples: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<usize>)> {
        validate_groups(samples)?;
        let sizes: Vec<usize> = samples.iter().map(Vec::len).collect();
        let n = arrangements(&sizes);
        if n > MAX_ARRANGEMENTS {
            return Err(Error::InvalidParameter(format!(
                "{n} arrangements exceeds the exact-test limit of {MAX_ARRANGEMENTS}"
            )));
        }
        Ok((samples.iter().flatten().copied().collect(), sizes))
    }

    fn tolerance(x: f64) -> f64 {
        1e-9 * (1.0 + x.abs())
    }

    /// Share of relabellings with `H` at least the observed value.
    pub fn kruskal_wallis_p(samples: &[Vec<f64>]) -> Result<f64> {
        let (values, sizes) = prepare(samples)?;
        let observed = match h_statistic(&rank(samples)) {
            Some(h) => h,
            None => return Ok(1.0),
        };
        let (mut hits, mut total) = (0u64, 0u64);
        enumerate(&values, &sizes, &mut |groups| {
            total += 1;
            let h = h_statistic(&rank(groups)).unwrap_or(0.0);
            hits += u64::from(h >= observed - tolerance(observed));
        });
        Ok(hits as f64 / total as f64)
    }

    /// Per pair, share of relabellings with `|z|` at least the observed value.
    pub fn dunn_p(samples: &[Vec<f64>], pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
        let (values, sizes) = prepare(samples)?;
        check_pairs(samples, pairs)?;
        let observed = match dunn_z(&rank(samples), pairs) {
            Some(z) => z,
            None => return Ok(vec![1.0; pairs.len()]),
        };
        let mut hits = vec![0u64; pairs.len()];
        let mut total = 0u64;
        enumerate(&values, &sizes, &mut |groups| {
            total += 1;
            let zs = dunn_z(&rank(groups), pairs).expect("relabelling keeps the variance");
            for ((hit, z), z0) in hits.iter_mut().zip(&zs).zip(&observed) {
                *hit += u64::from(z.abs() >= z0.abs() - tolerance(*z0));
            }
        });
        Ok(hits.into_iter().map(|h| h as f64 / total as f64).collect())
    }
}

/// One pairwise comparison between named groups.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairComparison {
    pub a: String,
    pub b: String,
    pub raw_p: f64,
    pub adjusted_p: f64,
    /// A12 of `a` over `b`.
    pub a12: f64,
    pub magnitude: Magnitude,
}

/// The full battery for one metric on one program.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatReport {
    pub program: String,
    pub metric: String,
    pub kruskal: KruskalWallis,
    pub pairs: Vec<PairComparison>,
}

pub const REPORT_CSV_HEADER: &str = "program,metric,h,df,p,a,b,raw_p,adjusted_p,a12,magnitude";

impl StatReport {
    /// Kruskal-Wallis over all groups, then Dunn, BH and A12 for every pair.
    pub fn compute(
        program: impl Into<String>,
        metric: impl Into<String>,
        groups: &[(String, Vec<f64>)],
    ) -> Result<StatReport> {
        let samples: Vec<Vec<f64>> = groups.iter().map(|(_, v)| v.clone()).collect();
        let kruskal = kruskal_wallis(&samples)?;
        let pairs = all_pairs(groups.len());
        let raw = dunn_test(&samples, &pairs)?;
        let adjusted = bh_adjust(&raw)?;
        let pairs = pairs
            .iter()
            .zip(raw.iter().zip(&adjusted))
            .map(|(&(i, j), (&raw_p, &adjusted_p))| {
                let (a12, magnitude) = a12(&samples[i], &samples[j])?;
                Ok(PairComparison {
                    a: groups[i].0.clone(),
                    b: groups[j].0.clone(),
                    raw_p,
                    adjusted_p,
                    a12,
                    magnitude,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(StatReport {
            program: program.into(),
            metric: metric.into(),
            kruskal,
            pairs,
        })
    }

    /// One row per pair; the Kruskal-Wallis columns repeat on every row.
    pub fn csv_rows(&self) -> String {
        let k = &self.kruskal;
        self.pairs
            .iter()
            .map(|c| {
                format!(
                    "{},{},{:.6},{},{:.6},{},{},{:.6},{:.6},{:.4},{}\n",
                    self.program,
                    self.metric,
                    k.h,
                    k.df,
                    k.p,
                    c.a,
                    c.b,
                    c.raw_p,
                    c.adjusted_p,
                    c.a12,
                    c.magnitude
                )
            })
            .collect()
    }

    pub fn to_markdown(&self) -> String {
        let k = &self.kruskal;
        let mut out = format!(
            "### {} / {}\n\nKruskal-Wallis: X\u{b2}({}) = {:.4}, p = {}\n\n",
            self.program,
            self.metric,
            k.df,
            k.h,
            format_p(k.p)
        );
        out.push_str("| Comparison | p-value | Adjusted p | A12 |\n|---|---|---|---|\n");
        for c in &self.pairs {
            out.push_str(&format!(
                "| {} vs {} | {} | {} | {:.2} ({}) |\n",
                c.a,
                c.b,
                format_p(c.raw_p),
                format_p(c.adjusted_p),
                c.a12,
                c.magnitude.letter()
            ));
        }
        out
    }
}

/// `<0.01` below 0.01, otherwise four decimals.
pub fn format_p(p: f64) -> String {
    if p < 0.01 {
        "<0.01".to_string()
    } else {
        format!("{p:.4}")
    }
}

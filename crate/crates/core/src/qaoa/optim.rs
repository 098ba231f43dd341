//! Nelder-Mead simplex minimizer.

#[derive(Clone, Copy, Debug)]
pub struct NelderMeadOptions {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    pub max_evals: usize,
    /// Converged when every vertex is within `xtol` (max-norm) of the best
    /// vertex and every value within `ftol` of the best value.
    pub xtol: f64,
    pub ftol: f64,
    pub initial_step: f64,
}

impl NelderMeadOptions {
    pub fn for_dimension(dim: usize) -> Self {
        NelderMeadOptions {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            max_evals: 200 * dim,
            xtol: 1e-6,
            ftol: 1e-6,
            initial_step: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `f` from `x0`. `on_iteration(iteration, best_x, best_value)` runs
/// after each simplex update.
pub fn nelder_mead<F, C>(
    mut f: F,
    x0: &[f64],
    opts: &NelderMeadOptions,
    mut on_iteration: C,
) -> NelderMeadResult
where
    F: FnMut(&[f64]) -> f64,
    C: FnMut(usize, &[f64], f64),
{
    let dim = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    simplex.push(x0.to_vec());
    for i in 0..dim {
        let mut v = x0.to_vec();
        v[i] += opts.initial_step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v, &mut evals)).collect();

    let mut iterations = 0;
    let mut converged = false;
    let mut centroid = vec![0.0; dim];
    while evals < opts.max_evals {
        // Stable sort: among equal values the earlier vertex stays best.
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let x_spread = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        let f_spread = values[1..]
            .iter()
            .map(|v| (v - values[0]).abs())
            .fold(0.0, f64::max);
        if x_spread <= opts.xtol && f_spread <= opts.ftol {
            converged = true;
            break;
        }

        iterations += 1;
        centroid.iter_mut().for_each(|c| *c = 0.0);
        for v in &simplex[..dim] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / dim as f64;
            }
        }
        let worst = simplex[dim].clone();
        let toward = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let reflected = toward(opts.reflection);
        let f_r = eval(&reflected, &mut evals);
        if f_r < values[0] {
            let expanded = toward(opts.reflection * opts.expansion);
            let f_e = eval(&expanded, &mut evals);
            if f_e < f_r {
                simplex[dim] = expanded;
                values[dim] = f_e;
            } else {
                simplex[dim] = reflected;
                values[dim] = f_r;
            }
        } else if f_r < values[dim - 1] {
            simplex[dim] = reflected;
            values[dim] = f_r;
        } else {
            let (candidate, f_c) = if f_r < values[dim] {
                let outside = toward(opts.reflection * opts.contraction);
                let f_o = eval(&outside, &mut evals);
                (outside, f_o)
            } else {
                let inside = toward(-opts.contraction);
                let f_i = eval(&inside, &mut evals);
                (inside, f_i)
            };
            if f_c < values[dim].min(f_r) {
                simplex[dim] = candidate;
                values[dim] = f_c;
            } else {
                let best = simplex[0].clone();
                for i in 1..=dim {
                    for (x, b) in simplex[i].iter_mut().zip(&best) {
                        *x = b + opts.shrink * (*x - b);
                    }
                    values[i] = eval(&simplex[i], &mut evals);
                }
            }
        }
        let best = (0..=dim)
            .min_by(|&a, &b| values[a].total_cmp(&values[b]))
            .unwrap();
        on_iteration(iterations, &simplex[best], values[best]);
    }

    let best = (0..=dim)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap();
    NelderMeadResult {
        x: simplex[best].clone(),
        value: values[best],
        evaluations: evals,
        iterations,
        converged,
    }
}

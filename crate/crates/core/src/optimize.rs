//! Nelder-Mead simplex minimization. Box constraints are handled by a
//! caller-supplied fold (for example mirror reflection at the bounds) applied
//! to each point before evaluation; the simplex itself lives in the unfolded
//! space, so it cannot collapse against a bound.

use std::cell::Cell;

/// Standard coefficients: reflection, expansion, contraction, shrink.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// Converged once the largest vertex distance falls below this.
    pub diameter_tol: f64,
    pub max_evaluations: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            diameter_tol: 1e-9,
            max_evaluations: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

fn diameter(simplex: &[Vec<f64>]) -> f64 {
    let mut d: f64 = 0.0;
    for (i, a) in simplex.iter().enumerate() {
        for b in &simplex[i + 1..] {
            let dist = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            d = d.max(dist);
        }
    }
    d
}

/// Minimizes `f(project(x))` from `x0`, starting with the simplex
/// `x0 + steps[i] e_i`. The returned point is projected.
pub fn nelder_mead<F, P>(
    mut f: F,
    project: P,
    x0: &[f64],
    steps: &[f64],
    opts: &NelderMeadOptions,
) -> NelderMeadOutcome
where
    F: FnMut(&[f64]) -> f64,
    P: Fn(&mut [f64]),
{
    assert_eq!(x0.len(), steps.len(), "one initial step per coordinate");
    let dim = x0.len();
    let evaluations = Cell::new(0usize);
    let mut eval = |x: &[f64]| -> f64 {
        let mut folded = x.to_vec();
        project(&mut folded);
        evaluations.set(evaluations.get() + 1);
        let v = f(&folded);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    let mut values: Vec<f64> = Vec::with_capacity(dim + 1);
    let start = x0.to_vec();
    values.push(eval(&start));
    simplex.push(start);
    for (i, &step) in steps.iter().enumerate() {
        let mut v = simplex[0].clone();
        v[i] += step;
        values.push(eval(&v));
        simplex.push(v);
    }

    loop {
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let converged = diameter(&simplex) < opts.diameter_tol;
        if converged || evaluations.get() >= opts.max_evaluations {
            let mut x = simplex[0].clone();
            project(&mut x);
            return NelderMeadOutcome {
                x,
                value: values[0],
                evaluations: evaluations.get(),
                converged,
            };
        }

        let worst = dim;
        let centroid: Vec<f64> = (0..dim)
            .map(|j| simplex[..worst].iter().map(|v| v[j]).sum::<f64>() / dim as f64)
            .collect();
        let toward = |from: &[f64], to: &[f64], t: f64| -> Vec<f64> {
            from.iter().zip(to).map(|(a, b)| a + t * (b - a)).collect()
        };

        let xr = toward(&centroid, &simplex[worst], -opts.reflection);
        let fr = eval(&xr);
        if fr < values[0] {
            let xe = toward(&centroid, &xr, opts.expansion);
            let fe = eval(&xe);
            if fe < fr {
                simplex[worst] = xe;
                values[worst] = fe;
            } else {
                simplex[worst] = xr;
                values[worst] = fr;
            }
            continue;
        }
        if fr < values[worst - 1] {
            simplex[worst] = xr;
            values[worst] = fr;
            continue;
        }
        let outside = fr < values[worst];
        let xc = if outside {
            toward(&centroid, &xr, opts.contraction)
        } else {
            toward(&centroid, &simplex[worst], opts.contraction)
        };
        let fc = eval(&xc);
        let accept = if outside { fc <= fr } else { fc < values[worst] };
        if accept {
            simplex[worst] = xc;
            values[worst] = fc;
            continue;
        }
        for i in 1..=dim {
            let v = toward(&simplex[0], &simplex[i], opts.shrink);
            values[i] = eval(&v);
            simplex[i] = v;
        }
    }
}

/// Folds `x` into `[lo, hi]` by mirror reflection at the bounds.
pub fn reflect_into(x: f64, lo: f64, hi: f64) -> f64 {
    let width = hi - lo;
    if !x.is_finite() || width <= 0.0 {
        return lo;
    }
    let t = (x - lo).rem_euclid(2.0 * width);
    if t <= width {
        lo + t
    } else {
        hi - (t - width)
    }
}

//! Nelder–Mead simplex search for noisy objectives.
//!
//! On every shrink step the incumbent vertex is evaluated again, so a single
//! lucky low estimate cannot hold the simplex in place forever.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadConfig {
    pub max_iters: usize,
    /// Offset of each initial vertex from the starting point along one axis.
    pub initial_spread: f64,
    /// Converged once every vertex lies within this distance of the best one.
    pub tolerance: f64,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self { max_iters: 200, initial_spread: 0.5, tolerance: 1e-8 }
    }
}

/// One objective evaluation: value and what it cost (e.g. measurements).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub cost: u64,
}

/// State after one iteration; iteration 0 is the starting point alone.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub iteration: usize,
    pub point: Vec<f64>,
    pub value: f64,
    /// Total cost of all evaluations so far.
    pub cost: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub point: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub history: Vec<Step>,
}

struct Tracked<F> {
    f: F,
    evaluations: usize,
    cost: u64,
}

impl<F: FnMut(&[f64]) -> Result<Evaluation>> Tracked<F> {
    fn eval(&mut self, x: &[f64]) -> Result<f64> {
        let e = (self.f)(x)?;
        self.evaluations += 1;
        self.cost += e.cost;
        Ok(e.value)
    }
}

fn diameter(simplex: &[(Vec<f64>, f64)]) -> f64 {
    let best = &simplex[0].0;
    simplex[1..]
        .iter()
        .map(|(x, _)| x.iter().zip(best).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

fn lerp(from: &[f64], to: &[f64], t: f64) -> Vec<f64> {
    from.iter().zip(to).map(|(a, b)| a + t * (b - a)).collect()
}

pub fn nelder_mead<F>(f: F, x0: &[f64], config: &NelderMeadConfig) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Result<Evaluation>,
{
    if x0.is_empty() {
        return Err(Error::invalid("cannot optimise over zero parameters"));
    }
    if !(config.initial_spread > 0.0) || !(config.tolerance >= 0.0) {
        return Err(Error::invalid("spread must be positive and tolerance non-negative"));
    }
    let mut obj = Tracked { f, evaluations: 0, cost: 0 };
    let f0 = obj.eval(x0)?;
    let mut history = vec![Step { iteration: 0, point: x0.to_vec(), value: f0, cost: obj.cost }];
    if config.max_iters == 0 {
        return Ok(Minimum {
            point: x0.to_vec(),
            value: f0,
            iterations: 0,
            evaluations: obj.evaluations,
            converged: false,
            history,
        });
    }

    let n = x0.len();
    let mut simplex = vec![(x0.to_vec(), f0)];
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += config.initial_spread;
        let fx = obj.eval(&x)?;
        simplex.push((x, fx));
    }

    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iters {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if diameter(&simplex) < config.tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
            .collect();
        let (worst, f_worst) = simplex[n].clone();
        let f_best = simplex[0].1;
        let f_second = simplex[n - 1].1;

        let reflected = lerp(&centroid, &worst, -1.0);
        let f_r = obj.eval(&reflected)?;
        if f_r < f_best {
            let expanded = lerp(&centroid, &worst, -2.0);
            let f_e = obj.eval(&expanded)?;
            simplex[n] = if f_e < f_r { (expanded, f_e) } else { (reflected, f_r) };
        } else if f_r < f_second {
            simplex[n] = (reflected, f_r);
        } else {
            let (contracted, f_c) = if f_r < f_worst {
                let c = lerp(&centroid, &reflected, 0.5);
                let fc = obj.eval(&c)?;
                (c, fc)
            } else {
                let c = lerp(&centroid, &worst, 0.5);
                let fc = obj.eval(&c)?;
                (c, fc)
            };
            if f_c < f_r.min(f_worst) {
                simplex[n] = (contracted, f_c);
            } else {
                let best = simplex[0].0.clone();
                simplex[0].1 = obj.eval(&best)?;
                for vertex in simplex.iter_mut().skip(1) {
                    let x = lerp(&best, &vertex.0, 0.5);
                    let fx = obj.eval(&x)?;
                    *vertex = (x, fx);
                }
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        history.push(Step {
            iteration: iterations,
            point: simplex[0].0.clone(),
            value: simplex[0].1,
            cost: obj.cost,
        });
    }
    if !converged {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        converged = diameter(&simplex) < config.tolerance;
    }
    Ok(Minimum {
        point: simplex[0].0.clone(),
        value: simplex[0].1,
        iterations,
        evaluations: obj.evaluations,
        converged,
        history,
    })
}

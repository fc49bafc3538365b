//! Nelder–Mead downhill simplex minimiser.
//!
//! Reflection 1, expansion 2, contraction 0.5, shrink 0.5. The initial
//! simplex is `x0` plus an absolute step along each coordinate. A run stops
//! once both the spread of simplex values and the simplex diameter fall
//! below their tolerances, or the iteration budget runs out. Restarts rebuild
//! the simplex around the incumbent and continue within the same budget.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

const REFLECTION: f64 = 1.0;
const EXPANSION: f64 = 2.0;
const CONTRACTION: f64 = 0.5;
const SHRINK: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimOptions {
    pub max_iterations: usize,
    /// Absolute spread of function values across the simplex.
    pub f_tolerance: f64,
    /// Largest coordinate distance from the best vertex to any other.
    pub x_tolerance: f64,
    pub initial_step: f64,
    pub restart_count: usize,
    /// Keep the best value after every iteration in the report.
    pub record_trace: bool,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            max_iterations: 20_000,
            f_tolerance: 1e-12,
            x_tolerance: 1e-10,
            initial_step: 0.05,
            restart_count: 1,
            record_trace: false,
        }
    }
}

impl OptimOptions {
    fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return domain("max_iterations must be at least 1");
        }
        if !(self.f_tolerance > 0.0 && self.x_tolerance > 0.0) {
            return domain("tolerances must be positive");
        }
        if !(self.initial_step.is_finite() && self.initial_step != 0.0) {
            return domain("initial_step must be finite and non-zero");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimReport {
    pub best_point: Vec<f64>,
    pub best_value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub trace: Option<Vec<f64>>,
}

impl OptimReport {
    /// Trace as `iteration,best_value` CSV.
    pub fn trace_csv(&self) -> Option<String> {
        self.trace.as_ref().map(|t| {
            let mut out = String::from("iteration,best_value\n");
            for (i, v) in t.iter().enumerate() {
                out.push_str(&format!("{},{v:e}\n", i + 1));
            }
            out
        })
    }
}

struct Vertex {
    point: Vec<f64>,
    value: f64,
    /// insertion order, used to break ties between equal values
    id: u64,
}

struct Simplex<F> {
    objective: F,
    vertices: Vec<Vertex>,
    next_id: u64,
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> f64> Simplex<F> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        self.evaluations += 1;
        let v = (self.objective)(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    }

    fn vertex(&mut self, point: Vec<f64>, value: f64) -> Vertex {
        let id = self.next_id;
        self.next_id += 1;
        Vertex { point, value, id }
    }

    fn build(&mut self, center: &[f64], value: f64, step: f64) -> Result<()> {
        self.vertices.clear();
        let first = self.vertex(center.to_vec(), value);
        self.vertices.push(first);
        for i in 0..center.len() {
            let mut p = center.to_vec();
            p[i] += step;
            let v = self.eval(&p);
            if !v.is_finite() {
                return domain(format!(
                    "objective is not finite at initial vertex {}",
                    i + 1
                ));
            }
            let vx = self.vertex(p, v);
            self.vertices.push(vx);
        }
        Ok(())
    }

    fn sort(&mut self) {
        self.vertices
            .sort_by(|a, b| a.value.total_cmp(&b.value).then(a.id.cmp(&b.id)));
    }

    fn spread(&self) -> f64 {
        self.vertices.last().unwrap().value - self.vertices[0].value
    }

    fn diameter(&self) -> f64 {
        let best = &self.vertices[0].point;
        self.vertices[1..]
            .iter()
            .flat_map(|v| v.point.iter().zip(best).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    }

    /// One Nelder–Mead step on a sorted simplex.
    fn step(&mut self) {
        let n = self.vertices.len() - 1;
        let dim = self.vertices[0].point.len();
        let mut centroid = vec![0.0; dim];
        for v in &self.vertices[..n] {
            for (c, x) in centroid.iter_mut().zip(&v.point) {
                *c += x;
            }
        }
        centroid.iter_mut().for_each(|c| *c /= n as f64);

        let along = |from: &[f64], scale: f64, c: &[f64]| -> Vec<f64> {
            c.iter()
                .zip(from)
                .map(|(c, x)| c + scale * (x - c))
                .collect()
        };

        let worst = self.vertices[n].point.clone();
        let f_best = self.vertices[0].value;
        let f_second = self.vertices[n - 1].value;
        let f_worst = self.vertices[n].value;

        let reflected = along(&worst, -REFLECTION, &centroid);
        let f_reflected = self.eval(&reflected);

        if f_reflected < f_best {
            let expanded = along(&reflected, EXPANSION, &centroid);
            let f_expanded = self.eval(&expanded);
            let v = if f_expanded < f_reflected {
                self.vertex(expanded, f_expanded)
            } else {
                self.vertex(reflected, f_reflected)
            };
            self.vertices[n] = v;
            return;
        }
        if f_reflected < f_second {
            let v = self.vertex(reflected, f_reflected);
            self.vertices[n] = v;
            return;
        }

        let (contracted, f_contracted, accept) = if f_reflected < f_worst {
            let c = along(&reflected, CONTRACTION, &centroid);
            let f = self.eval(&c);
            (c, f, f <= f_reflected)
        } else {
            let c = along(&worst, CONTRACTION, &centroid);
            let f = self.eval(&c);
            (c, f, f < f_worst)
        };
        if accept {
            let v = self.vertex(contracted, f_contracted);
            self.vertices[n] = v;
            return;
        }

        let best = self.vertices[0].point.clone();
        for i in 1..=n {
            let p = along(&self.vertices[i].point, SHRINK, &best);
            let f = self.eval(&p);
            self.vertices[i] = self.vertex(p, f);
        }
    }
}

/// Minimises `objective` starting from `x0`.
///
/// Non-finite values met during the search count as `+∞`, so such vertices
/// are never kept as the incumbent. A non-finite value at `x0` or at one of
/// the initial vertices is an error.
pub fn nelder_mead<F>(objective: F, x0: &[f64], options: &OptimOptions) -> Result<OptimReport>
where
    F: FnMut(&[f64]) -> f64,
{
    options.validate()?;
    if x0.is_empty() {
        return domain("cannot optimise over zero dimensions");
    }
    let mut simplex = Simplex {
        objective,
        vertices: Vec::with_capacity(x0.len() + 1),
        next_id: 0,
        evaluations: 0,
    };
    let f0 = simplex.eval(x0);
    if !f0.is_finite() {
        return domain("objective is not finite at the starting point");
    }
    simplex.build(x0, f0, options.initial_step)?;

    let mut trace = options.record_trace.then(Vec::new);
    let mut iterations = 0;
    let mut restarts_left = options.restart_count;
    let converged = loop {
        simplex.sort();
        if simplex.spread() <= options.f_tolerance && simplex.diameter() <= options.x_tolerance {
            if restarts_left == 0 || iterations >= options.max_iterations {
                break true;
            }
            restarts_left -= 1;
            let best = simplex.vertices[0].point.clone();
            let value = simplex.vertices[0].value;
            simplex.build(&best, value, options.initial_step)?;
            continue;
        }
        if iterations >= options.max_iterations {
            break false;
        }
        simplex.step();
        iterations += 1;
        if let Some(t) = trace.as_mut() {
            let best = simplex
                .vertices
                .iter()
                .map(|v| v.value)
                .fold(f64::INFINITY, f64::min);
            t.push(best);
        }
    };

    let best = &simplex.vertices[0];
    Ok(OptimReport {
        best_point: best.point.clone(),
        best_value: best.value,
        iterations,
        evaluations: simplex.evaluations,
        converged,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn one_dimensional_parabola() {
        let r = nelder_mead(|x| (x[0] - 1.0).powi(2), &[0.0], &OptimOptions::default()).unwrap();
        assert!((r.best_point[0] - 1.0).abs() < 1e-6);
        assert!(r.converged);
    }

    #[test]
    fn five_dimensional_bowl() {
        let f = |x: &[f64]| {
            x.iter()
                .enumerate()
                .map(|(i, v)| (v - (i + 1) as f64).powi(2))
                .sum()
        };
        let r = nelder_mead(f, &[0.0; 5], &OptimOptions::default()).unwrap();
        for (i, v) in r.best_point.iter().enumerate() {
            assert!((v - (i + 1) as f64).abs() < 1e-5, "coordinate {i}: {v}");
        }
    }

    #[test]
    fn rosenbrock_valley() {
        let options = OptimOptions {
            max_iterations: 10_000,
            ..OptimOptions::default()
        };
        let r = nelder_mead(rosenbrock, &[-1.2, 1.0], &options).unwrap();
        assert!((r.best_point[0] - 1.0).abs() < 1e-4);
        assert!((r.best_point[1] - 1.0).abs() < 1e-4);
        assert!(rosenbrock(&r.best_point) < 1e-8);
        assert!(r.iterations <= 10_000);
    }

    #[test]
    fn rejects_non_finite_start() {
        let r = nelder_mead(|_| f64::NAN, &[0.0], &OptimOptions::default());
        assert!(r.is_err());
        let r = nelder_mead(
            |x| if x[0] > 0.01 { f64::INFINITY } else { 0.0 },
            &[0.0],
            &OptimOptions::default(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn walls_of_infinity_are_avoided() {
        // log barrier at x = 0 returns NaN beyond it
        let f = |x: &[f64]| {
            if x[0] <= 0.0 {
                f64::NAN
            } else {
                x[0] - x[0].ln()
            }
        };
        let r = nelder_mead(f, &[3.0], &OptimOptions::default()).unwrap();
        assert!((r.best_point[0] - 1.0).abs() < 1e-5);
        assert!(r.best_value.is_finite());
    }

    #[test]
    fn budget_is_respected() {
        let options = OptimOptions {
            max_iterations: 7,
            record_trace: true,
            ..OptimOptions::default()
        };
        let r = nelder_mead(rosenbrock, &[-1.2, 1.0], &options).unwrap();
        assert_eq!(r.iterations, 7);
        assert!(!r.converged);
        assert_eq!(r.trace.as_ref().unwrap().len(), 7);
        assert!(r
            .trace_csv()
            .unwrap()
            .starts_with("iteration,best_value\n1,"));
    }

    #[test]
    fn rejects_bad_options() {
        let bad = OptimOptions {
            f_tolerance: 0.0,
            ..OptimOptions::default()
        };
        assert!(nelder_mead(|x| x[0], &[0.0], &bad).is_err());
        assert!(nelder_mead(|x| x[0], &[], &OptimOptions::default()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn incumbent_never_worsens(x0 in -3.0f64..3.0, y0 in -3.0f64..3.0) {
            let options = OptimOptions { max_iterations: 500, record_trace: true, ..OptimOptions::default() };
            let r = nelder_mead(rosenbrock, &[x0, y0], &options).unwrap();
            let trace = r.trace.unwrap();
            prop_assert!(trace.windows(2).all(|w| w[1] <= w[0]));
            prop_assert!(r.iterations <= 500);
            prop_assert_eq!(r.best_value, rosenbrock(&r.best_point));
        }

        #[test]
        fn repeated_runs_are_identical(x0 in -3.0f64..3.0, y0 in -3.0f64..3.0) {
            let options = OptimOptions { max_iterations: 300, ..OptimOptions::default() };
            let a = nelder_mead(rosenbrock, &[x0, y0], &options).unwrap();
            let b = nelder_mead(rosenbrock, &[x0, y0], &options).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn shrinking_keeps_vertices_finite(c in prop::collection::vec(-5.0f64..5.0, 1..6)) {
            let f = |x: &[f64]| x.iter().zip(&c).map(|(a, b)| (a - b).abs()).sum::<f64>();
            let r = nelder_mead(f, &vec![0.0; c.len()], &OptimOptions { max_iterations: 2000, ..OptimOptions::default() }).unwrap();
            prop_assert!(r.best_point.iter().all(|v| v.is_finite()));
        }
    }
}

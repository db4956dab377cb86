//! Derivative-free local minimization (Nelder–Mead).

/// Simplex settings; the defaults are the textbook coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct NelderMead {
    pub max_iter: usize,
    /// Initial simplex edge, relative to `max(1, |x0|_∞)`.
    pub initial_step: f64,
    /// Stop once the spread of simplex values falls below this.
    pub ftol: f64,
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self { max_iter: 500, initial_step: 0.1, ftol: 1e-12, reflection: 1.0, expansion: 2.0, contraction: 0.5, shrink: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub evaluations: usize,
    /// Best value after each iteration; never increases.
    pub trace: Vec<f64>,
}

impl NelderMead {
    /// Minimizes `f` from `x0`. Non-finite values are treated as `+∞`.
    pub fn minimize<F: FnMut(&[f64]) -> f64>(&self, mut f: F, x0: &[f64]) -> Minimum {
        let dim = x0.len();
        let mut evaluations = 0;
        let mut eval = |x: &[f64]| {
            evaluations += 1;
            let v = f(x);
            if v.is_nan() { f64::INFINITY } else { v }
        };
        let scale = x0.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let step = self.initial_step * scale;
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
        simplex.push((x0.to_vec(), eval(x0)));
        for i in 0..dim {
            let mut x = x0.to_vec();
            x[i] += step;
            let v = eval(&x);
            simplex.push((x, v));
        }
        let mut trace = Vec::new();
        let mut iterations = 0;
        while iterations < self.max_iter {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let (best, worst) = (simplex[0].1, simplex[dim].1);
            if dim == 0 || (worst - best).abs() <= self.ftol * (1.0 + best.abs()) {
                break;
            }
            iterations += 1;
            let mut centroid = vec![0.0; dim];
            for (x, _) in &simplex[..dim] {
                for (c, v) in centroid.iter_mut().zip(x) {
                    *c += v / dim as f64;
                }
            }
            let along = |t: f64| -> Vec<f64> {
                centroid.iter().zip(&simplex[dim].0).map(|(c, w)| c + t * (c - w)).collect()
            };
            let xr = along(self.reflection);
            let fr = eval(&xr);
            if fr < simplex[0].1 {
                let xe = along(self.reflection * self.expansion);
                let fe = eval(&xe);
                simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[dim - 1].1 {
                simplex[dim] = (xr, fr);
            } else {
                let outside = fr < simplex[dim].1;
                let t = if outside { self.reflection * self.contraction } else { -self.contraction };
                let xc = along(t);
                let fc = eval(&xc);
                if fc < fr.min(simplex[dim].1) {
                    simplex[dim] = (xc, fc);
                } else {
                    let anchor = simplex[0].0.clone();
                    for vertex in simplex.iter_mut().skip(1) {
                        let x: Vec<f64> = anchor.iter().zip(&vertex.0).map(|(a, v)| a + self.shrink * (v - a)).collect();
                        let v = eval(&x);
                        *vertex = (x, v);
                    }
                }
            }
            trace.push(simplex.iter().map(|s| s.1).fold(f64::INFINITY, f64::min));
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (x, fx) = simplex.swap_remove(0);
        Minimum { x, fx, iterations, evaluations, trace }
    }
}

//! Bounded derivative-free maximisation: coordinate-wise golden-section passes
//! followed by a Nelder-Mead polish, all clamped to a box.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy)]
pub struct BoxMaximizer {
    pub passes: usize,
    pub golden_iterations: usize,
    pub simplex_iterations: usize,
    /// Initial simplex edge as a fraction of each box side.
    pub simplex_step: f64,
    /// A candidate replaces the incumbent only if it gains more than
    /// `min_gain · max(1, |incumbent|)`.
    pub min_gain: f64,
}

impl Default for BoxMaximizer {
    fn default() -> Self {
        Self {
            passes: 2,
            golden_iterations: 32,
            simplex_iterations: 60,
            simplex_step: 0.05,
            min_gain: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Maximum {
    pub point: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

struct Incumbent<F> {
    f: F,
    point: Vec<f64>,
    value: f64,
    evaluations: usize,
    min_gain: f64,
}

impl<F: FnMut(&[f64]) -> f64> Incumbent<F> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        self.evaluations += 1;
        let v = (self.f)(x);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    /// Evaluates `x` and adopts it if it clearly beats the incumbent.
    fn offer(&mut self, x: &[f64]) -> f64 {
        let v = self.eval(x);
        if v > self.value + self.min_gain * self.value.abs().max(1.0) {
            self.value = v;
            self.point.copy_from_slice(x);
        }
        v
    }
}

impl BoxMaximizer {
    /// Maximises `f` over `[lower, upper]` from `start`. The returned point is
    /// `start` unless something strictly better was found.
    pub fn maximize<F>(&self, f: F, start: &[f64], lower: &[f64], upper: &[f64]) -> Maximum
    where
        F: FnMut(&[f64]) -> f64,
    {
        assert!(start.len() == lower.len() && start.len() == upper.len());
        let start: Vec<f64> = start
            .iter()
            .zip(lower.iter().zip(upper))
            .map(|(&x, (&lo, &hi))| x.clamp(lo, hi))
            .collect();
        let mut inc = Incumbent {
            f,
            point: start.clone(),
            value: f64::NEG_INFINITY,
            evaluations: 0,
            min_gain: self.min_gain,
        };
        inc.value = inc.eval(&start);
        for _ in 0..self.passes {
            let before = inc.value;
            for j in 0..start.len() {
                self.golden(&mut inc, j, lower[j], upper[j]);
            }
            if inc.value <= before {
                break;
            }
        }
        self.nelder_mead(&mut inc, lower, upper);
        Maximum {
            point: inc.point,
            value: inc.value,
            evaluations: inc.evaluations,
        }
    }

    fn golden<F: FnMut(&[f64]) -> f64>(&self, inc: &mut Incumbent<F>, j: usize, lo: f64, hi: f64) {
        if !(hi > lo) {
            return;
        }
        let mut x = inc.point.clone();
        let mut at = |inc: &mut Incumbent<F>, t: f64| {
            x[j] = t;
            inc.offer(&x)
        };
        let (mut a, mut b) = (lo, hi);
        let mut c = b - INV_PHI * (b - a);
        let mut d = a + INV_PHI * (b - a);
        let mut fc = at(inc, c);
        let mut fd = at(inc, d);
        for _ in 0..self.golden_iterations {
            if fc >= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - INV_PHI * (b - a);
                fc = at(inc, c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + INV_PHI * (b - a);
                fd = at(inc, d);
            }
        }
        // Box edges are frequent optima and golden section never reaches them.
        at(inc, lo);
        at(inc, hi);
    }

    fn nelder_mead<F: FnMut(&[f64]) -> f64>(&self, inc: &mut Incumbent<F>, lower: &[f64], upper: &[f64]) {
        let dim = inc.point.len();
        if self.simplex_iterations == 0 || dim == 0 {
            return;
        }
        let clamp = |x: &mut Vec<f64>| {
            for (v, (&lo, &hi)) in x.iter_mut().zip(lower.iter().zip(upper)) {
                *v = v.clamp(lo, hi);
            }
        };
        let mut simplex: Vec<(Vec<f64>, f64)> = vec![(inc.point.clone(), inc.value)];
        for j in 0..dim {
            let mut x = inc.point.clone();
            let step = self.simplex_step * (upper[j] - lower[j]);
            x[j] = if x[j] + step <= upper[j] { x[j] + step } else { x[j] - step };
            clamp(&mut x);
            let v = inc.offer(&x);
            simplex.push((x, v));
        }
        for _ in 0..self.simplex_iterations {
            simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
            let worst = simplex[dim].clone();
            let centroid: Vec<f64> = (0..dim)
                .map(|j| simplex[..dim].iter().map(|s| s.0[j]).sum::<f64>() / dim as f64)
                .collect();
            let toward = |t: f64| -> Vec<f64> {
                let mut x: Vec<f64> = centroid
                    .iter()
                    .zip(&worst.0)
                    .map(|(c, w)| c + t * (w - c))
                    .collect();
                clamp(&mut x);
                x
            };
            let xr = toward(-1.0);
            let fr = inc.offer(&xr);
            if fr > simplex[0].1 {
                let xe = toward(-2.0);
                let fe = inc.offer(&xe);
                simplex[dim] = if fe > fr { (xe, fe) } else { (xr, fr) };
            } else if fr > simplex[dim - 1].1 {
                simplex[dim] = (xr, fr);
            } else {
                let xc = toward(0.5);
                let fc = inc.offer(&xc);
                if fc > worst.1 {
                    simplex[dim] = (xc, fc);
                } else {
                    let best = simplex[0].0.clone();
                    for s in simplex.iter_mut().skip(1) {
                        let x: Vec<f64> = best.iter().zip(&s.0).map(|(b, v)| b + 0.5 * (v - b)).collect();
                        let v = inc.offer(&x);
                        *s = (x, v);
                    }
                }
            }
            let mut spread: f64 = 0.0;
            for s in &simplex[1..] {
                for j in 0..dim {
                    let width = (upper[j] - lower[j]).max(f64::MIN_POSITIVE);
                    spread = spread.max((s.0[j] - simplex[0].0[j]).abs() / width);
                }
            }
            if spread < 1e-9 {
                break;
            }
        }
    }
}

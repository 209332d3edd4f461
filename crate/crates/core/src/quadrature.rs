//! Adaptive Simpson quadrature for piecewise-smooth integrands.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    /// Sum of the per-interval Richardson error estimates `|S₂ − S₁| / 15`.
    pub error: f64,
    pub evaluations: usize,
}

/// Interval bisection driven by local error estimates. The tolerance is
/// absolute and is split evenly between the halves of every bisected interval.
#[derive(Debug, Clone, Copy)]
pub struct AdaptiveSimpson {
    pub tolerance: f64,
    pub max_depth: u32,
    /// Bisections forced before the error test is trusted.
    pub min_depth: u32,
}

impl Default for AdaptiveSimpson {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_depth: 20,
            min_depth: 2,
        }
    }
}

struct State<F> {
    f: F,
    evaluations: usize,
    error: f64,
    /// Error left over by intervals that hit the depth limit unconverged.
    unresolved: f64,
}

impl AdaptiveSimpson {
    pub fn new(tolerance: f64, max_depth: u32) -> Self {
        Self {
            tolerance,
            max_depth,
            ..Self::default()
        }
    }

    /// `∫_a^b f`. Fails with a precision error when intervals stopped at the
    /// depth limit leave an error estimate above the tolerance.
    pub fn integrate<F>(&self, f: F, a: f64, b: f64) -> Result<Integral>
    where
        F: FnMut(f64) -> Result<f64>,
    {
        self.integrate_pieces(f, &[a, b])
    }

    /// Integral over consecutive `breaks`, each piece refined on its own with
    /// a share of the tolerance proportional to its length.
    pub fn integrate_pieces<F>(&self, f: F, breaks: &[f64]) -> Result<Integral>
    where
        F: FnMut(f64) -> Result<f64>,
    {
        let mut state = State {
            f,
            evaluations: 0,
            error: 0.0,
            unresolved: 0.0,
        };
        let (first, last) = match (breaks.first(), breaks.last()) {
            (Some(&a), Some(&b)) if breaks.len() >= 2 => (a, b),
            _ => {
                return Ok(Integral {
                    value: 0.0,
                    error: 0.0,
                    evaluations: 0,
                })
            }
        };
        let span = last - first;
        let mut value = 0.0;
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            if !(b > a) {
                continue;
            }
            let tol = if span > 0.0 {
                self.tolerance * (b - a) / span
            } else {
                self.tolerance
            };
            let fa = state.eval(a)?;
            let fb = state.eval(b)?;
            let m = 0.5 * (a + b);
            let fm = state.eval(m)?;
            let whole = simpson(a, b, fa, fm, fb);
            value += self.refine(&mut state, a, b, fa, fm, fb, whole, tol, 0)?;
        }
        let total_error = state.error + state.unresolved;
        if state.unresolved > 0.0 && total_error > self.tolerance {
            return Err(Error::Precision {
                estimate: total_error,
                tolerance: self.tolerance,
            });
        }
        Ok(Integral {
            value,
            error: total_error,
            evaluations: state.evaluations,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn refine<F>(
        &self,
        state: &mut State<F>,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64>
    where
        F: FnMut(f64) -> Result<f64>,
    {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = state.eval(lm)?;
        let frm = state.eval(rm)?;
        let left = simpson(a, m, fa, flm, fm);
        let right = simpson(m, b, fm, frm, fb);
        let delta = left + right - whole;
        let estimate = delta.abs() / 15.0;
        if depth >= self.min_depth && estimate <= tol {
            state.error += estimate;
            return Ok(left + right + delta / 15.0);
        }
        if depth >= self.max_depth {
            state.unresolved += estimate;
            return Ok(left + right + delta / 15.0);
        }
        let l = self.refine(state, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1)?;
        let r = self.refine(state, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1)?;
        Ok(l + r)
    }
}

impl<F> State<F>
where
    F: FnMut(f64) -> Result<f64>,
{
    fn eval(&mut self, x: f64) -> Result<f64> {
        self.evaluations += 1;
        (self.f)(x)
    }
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

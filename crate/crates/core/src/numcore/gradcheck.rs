//! Central finite-difference checks of tape gradients.

use crate::error::{Error, Result};

use super::tape::{Tape, Var};
use super::tensor::Tensor;

/// Finite-difference settings.
///
/// The relative error of one coordinate is `|a - n| / max(|a|, |n|, abs_floor)`
/// where `a` is the tape gradient and `n` the central difference. The floor
/// keeps coordinates whose true gradient is zero from dividing rounding noise
/// by rounding noise.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub step: f64,
    pub tolerance: f64,
    pub abs_floor: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            abs_floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub analytic: Vec<Tensor>,
    pub numeric: Vec<Tensor>,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// `(input, coordinate)` of the largest relative error.
    pub worst: Option<(usize, usize)>,
    pub passed: bool,
}

/// Checks `f` at `point` with step `h` and relative tolerance `tol`.
pub fn grad_check<F>(f: F, point: &[Tensor], h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    GradCheck {
        step: h,
        tolerance: tol,
        ..GradCheck::default()
    }
    .run(f, point)
}

impl GradCheck {
    pub fn run<F>(&self, f: F, point: &[Tensor]) -> Result<GradCheckReport>
    where
        F: Fn(&mut Tape, &[Var]) -> Result<Var>,
    {
        let eval = |inputs: &[Tensor]| -> Result<f64> {
            let mut tape = Tape::new();
            let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
            let out = f(&mut tape, &vars)?;
            let v = tape.value(out);
            if v.len() != 1 {
                return Err(Error::Invalid(format!(
                    "grad_check needs a scalar function, got shape {:?}",
                    v.shape()
                )));
            }
            Ok(v.data()[0])
        };

        let mut tape = Tape::new();
        let vars: Vec<Var> = point.iter().map(|t| tape.param(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let grads = tape.backward(out)?;
        let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.wrt(v)).collect();

        let mut work: Vec<Tensor> = point.to_vec();
        let mut numeric = Vec::with_capacity(point.len());
        let (mut max_rel, mut max_abs, mut worst) = (0.0f64, 0.0f64, None);
        for input in 0..point.len() {
            let mut num = Tensor::zeros(point[input].shape());
            for coord in 0..point[input].len() {
                let orig = point[input].data()[coord];
                work[input].data_mut()[coord] = orig + self.step;
                let up = eval(&work)?;
                work[input].data_mut()[coord] = orig - self.step;
                let down = eval(&work)?;
                work[input].data_mut()[coord] = orig;
                let n = (up - down) / (2.0 * self.step);
                num.data_mut()[coord] = n;

                let a = analytic[input].data()[coord];
                let abs = (a - n).abs();
                let rel = abs / a.abs().max(n.abs()).max(self.abs_floor);
                max_abs = max_abs.max(abs);
                if rel > max_rel || worst.is_none() {
                    max_rel = max_rel.max(rel);
                    worst = Some((input, coord));
                }
            }
            numeric.push(num);
        }
        Ok(GradCheckReport {
            analytic,
            numeric,
            max_rel_error: max_rel,
            max_abs_error: max_abs,
            worst,
            passed: max_rel <= self.tolerance,
        })
    }
}

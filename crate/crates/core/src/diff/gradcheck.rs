use super::{Tape, Tensor, Var};
use crate::Result;

/// Central-difference step.
pub const GRAD_CHECK_STEP: f64 = 1e-5;
/// Default largest accepted relative error.
pub const GRAD_CHECK_TOLERANCE: f64 = 1e-4;
/// Magnitude below which errors are measured absolutely.
const MAGNITUDE_FLOOR: f64 = 1e-3;

/// Worst coordinate found by [`grad_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub input: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.relative_error <= self.tolerance
    }
}

/// Checks the gradient of the scalar built by `f` with respect to every
/// element of every tensor in `inputs`.
///
/// `f` receives a fresh inference tape and the input variables and must
/// return a `1 x 1` value. Relative error is
/// `|a - n| / max(|a|, |n|, 1e-3)`.
pub fn grad_check<F>(inputs: &[Tensor<f64>], tolerance: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor<f64>]| -> Result<(Tape<f64>, Vec<Var>, Var)> {
        let mut tape = Tape::inference(0);
        let vars: Vec<Var> = values.iter().map(|t| tape.param(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok((tape, vars, out))
    };
    let (tape, vars, out) = eval(inputs)?;
    let grads = tape.backward(out)?;

    let mut worst = GradCheckReport {
        input: 0,
        index: 0,
        analytic: 0.0,
        numeric: 0.0,
        relative_error: 0.0,
        tolerance,
    };
    let mut probe = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[k]);
        for i in 0..input.len() {
            let orig = input.data()[i];
            probe[k].data_mut()[i] = orig + GRAD_CHECK_STEP;
            let (t, _, o) = eval(&probe)?;
            let up = t.value(o).item();
            probe[k].data_mut()[i] = orig - GRAD_CHECK_STEP;
            let (t, _, o) = eval(&probe)?;
            let down = t.value(o).item();
            probe[k].data_mut()[i] = orig;

            let numeric = (up - down) / (2.0 * GRAD_CHECK_STEP);
            let a = analytic.map_or(0.0, |g| g[i]);
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(MAGNITUDE_FLOOR);
            if err > worst.relative_error || (k == 0 && i == 0) {
                worst = GradCheckReport {
                    input: k,
                    index: i,
                    analytic: a,
                    numeric,
                    relative_error: err,
                    tolerance,
                };
            }
        }
    }
    Ok(worst)
}

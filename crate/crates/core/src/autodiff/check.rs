use super::{Tape, Tensor, Var};
use crate::{Error, Result};

/// Outcome of comparing analytic gradients to central differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Largest relative error per input tensor.
    pub max_rel_error: Vec<f64>,
    /// Coordinates compared (both-tiny coordinates are skipped).
    pub checked: usize,
    pub tolerance: f64,
    /// Set when the function consumed randomness; such checks never pass.
    pub rejected: Option<String>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.rejected.is_none() && self.max_rel_error.iter().all(|&e| e < self.tolerance)
    }

    pub fn worst(&self) -> f64 {
        self.max_rel_error.iter().copied().fold(0.0, f64::max)
    }
}

fn evaluate<F>(f: &F, point: &[Tensor]) -> Result<(f64, bool)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = point.iter().map(|t| tape.variable(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let v = tape.value(out);
    if !v.is_scalar() {
        return Err(Error::Contract(format!(
            "grad_check needs a scalar function, got shape {:?}",
            v.shape()
        )));
    }
    Ok((v.item(), tape.is_stochastic()))
}

/// Compares the tape gradient of `f` at `point` with central differences of
/// width `2 * step`. `f` builds its graph on the tape it is given; it should
/// not enable dropout.
///
/// Relative error per coordinate is `|a - n| / max(|a|, |n|)`; coordinates
/// where both magnitudes fall below `1e-8` are skipped.
pub fn grad_check<F>(f: F, point: &[Tensor], step: f64, tolerance: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = point.iter().map(|t| tape.variable(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let mut report = GradCheckReport {
        max_rel_error: vec![0.0; point.len()],
        checked: 0,
        tolerance,
        rejected: None,
    };
    if tape.is_stochastic() || tape.is_training() {
        report.rejected = Some("function is non-deterministic".into());
        return Ok(report);
    }
    let grads = tape.backward(out)?;
    let mut probe = point.to_vec();
    for (t, &var) in vars.iter().enumerate() {
        let zeros = Tensor::zeros(point[t].shape().to_vec());
        let analytic = grads.get(var).unwrap_or(&zeros);
        for k in 0..point[t].numel() {
            let orig = point[t].data()[k];
            probe[t].data_mut()[k] = orig + step;
            let (plus, s1) = evaluate(&f, &probe)?;
            probe[t].data_mut()[k] = orig - step;
            let (minus, s2) = evaluate(&f, &probe)?;
            probe[t].data_mut()[k] = orig;
            if s1 || s2 {
                report.rejected = Some("function is non-deterministic".into());
                return Ok(report);
            }
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic.data()[k];
            let scale = a.abs().max(numeric.abs());
            if scale < 1e-8 {
                continue;
            }
            report.checked += 1;
            let err = (a - numeric).abs() / scale;
            if err > report.max_rel_error[t] || err.is_nan() {
                report.max_rel_error[t] = err;
            }
        }
    }
    Ok(report)
}

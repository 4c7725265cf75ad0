use crate::diff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Outcome of [`grad_check`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckReport {
    /// max |analytic - numeric| / max(1, |numeric|) over all entries.
    pub max_rel_error: f64,
    pub worst_param: usize,
    pub worst_entry: usize,
    pub entries_checked: usize,
}

/// Compares tape gradients of `f` with central finite differences at
/// `params`. `f` must build a 1x1 output from the supplied parameter handles
/// and must be deterministic.
pub fn grad_check<F>(f: F, params: &[Tensor], eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(1e-7..=1e-4).contains(&eps) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step {eps} outside [1e-7, 1e-4]"
        )));
    }
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    check_finite(tape.value(out).item())?;
    let grads = tape.backward(out)?;

    let eval = |probe: &[Tensor]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = probe.iter().map(|p| t.param(p.clone())).collect();
        let o = f(&mut t, &vs)?;
        let v = t.value(o).item();
        check_finite(v)?;
        Ok(v)
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: 0,
        worst_entry: 0,
        entries_checked: 0,
    };
    let mut probe = params.to_vec();
    for (p, var) in vars.iter().enumerate() {
        let analytic = grads.get_or_zeros(&tape, *var);
        for i in 0..params[p].len() {
            let orig = params[p].as_slice()[i];
            probe[p].as_mut_slice()[i] = orig + eps;
            let up = eval(&probe)?;
            probe[p].as_mut_slice()[i] = orig - eps;
            let down = eval(&probe)?;
            probe[p].as_mut_slice()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let err = (analytic.as_slice()[i] - numeric).abs() / numeric.abs().max(1.0);
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_param = p;
                report.worst_entry = i;
            }
            report.entries_checked += 1;
        }
    }
    Ok(report)
}

fn check_finite(v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite("grad_check probe".into()))
    }
}

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{Tape, Tensor, Var};

/// Compares tape gradients against central finite differences.
///
/// `f` rebuilds the scalar function on a fresh tape from the given parameter
/// handles; any randomness must be fixed outside it. Returns
/// `max |analytic − numeric| / max(1, |numeric|)` over every parameter entry.
pub fn grad_check<S, F>(f: F, params: &[Tensor<S>], eps: S) -> Result<S>
where
    S: Scalar,
    F: Fn(&mut Tape<S>, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor<S>], track: bool| -> Result<(Tape<S>, Vec<Var>, Var)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values
            .iter()
            .map(|p| {
                if track {
                    tape.param(p.clone())
                } else {
                    tape.constant(p.clone())
                }
            })
            .collect();
        let out = f(&mut tape, &vars)?;
        let v = tape.value(out);
        if v.shape() != [1, 1] {
            return Err(Error::NonScalarLoss(v.shape()));
        }
        if !v.is_finite() {
            return Err(Error::NonFinite { op: "grad_check" });
        }
        Ok((tape, vars, out))
    };

    let (mut tape, vars, out) = eval(params, true)?;
    tape.backward(out)?;

    let mut worst = S::zero();
    let mut probe = params.to_vec();
    let two_eps = eps + eps;
    for (p, var) in vars.iter().enumerate() {
        let analytic = tape
            .grad(*var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(params[p].rows(), params[p].cols()));
        for k in 0..params[p].len() {
            let base = params[p].data()[k];
            probe[p].data_mut()[k] = base + eps;
            let (t_plus, _, o_plus) = eval(&probe, false)?;
            probe[p].data_mut()[k] = base - eps;
            let (t_minus, _, o_minus) = eval(&probe, false)?;
            probe[p].data_mut()[k] = base;
            let numeric = (t_plus.value(o_plus).item() - t_minus.value(o_minus).item()) / two_eps;
            let err = (analytic.data()[k] - numeric).abs() / numeric.abs().max(S::one());
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

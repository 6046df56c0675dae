//! Central finite-difference verification of tape gradients.
//!
//! Only meaningful where the function is smooth at the probe point; a ReLU
//! or clamp input sitting within `eps` of its kink gives a spurious error.

use crate::params::{Bound, ParameterStore};
use crate::tape::{Tape, Var};
use crate::{NnError, Tensor};

pub const DEFAULT_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// Largest `|a - n| / max(1e-12, |a| + |n|)` over all coordinates.
    pub max_rel_err: f64,
    /// `(input, coordinate)` of the largest error.
    pub worst: (usize, usize),
    pub analytic: Vec<Tensor>,
    pub numeric: Vec<Tensor>,
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / (a.abs() + n.abs()).max(1e-12)
}

fn scalar_of(tape: &Tape, v: Var) -> Result<f64, NnError> {
    let t = tape.value(v);
    if t.len() != 1 {
        return Err(NnError::shape("gradient_check", format!("function returned shape {:?}", t.shape())));
    }
    Ok(t.item())
}

/// Compare backprop gradients of the scalar `f(inputs)` against central
/// differences with step `eps`. All inputs are trainable leaves.
pub fn gradient_check<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<GradCheck, NnError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, NnError>,
{
    let eval = |xs: &[Tensor]| -> Result<(Tape, Vec<Var>, Var), NnError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok((tape, vars, out))
    };
    let (tape, vars, out) = eval(inputs)?;
    scalar_of(&tape, out)?;
    let grads = tape.backward(out)?;
    let analytic: Vec<Tensor> =
        vars.iter().zip(inputs).map(|(v, x)| grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(x.shape()))).collect();

    let mut probe: Vec<Tensor> = inputs.to_vec();
    let mut numeric = Vec::with_capacity(inputs.len());
    let (mut max_rel_err, mut worst) = (0.0, (0, 0));
    for i in 0..inputs.len() {
        let mut num = Tensor::zeros(inputs[i].shape());
        for c in 0..inputs[i].len() {
            let x0 = inputs[i].data()[c];
            probe[i].data_mut()[c] = x0 + eps;
            let (t, _, o) = eval(&probe)?;
            let fp = scalar_of(&t, o)?;
            probe[i].data_mut()[c] = x0 - eps;
            let (t, _, o) = eval(&probe)?;
            let fm = scalar_of(&t, o)?;
            probe[i].data_mut()[c] = x0;
            let n = (fp - fm) / (2.0 * eps);
            num.data_mut()[c] = n;
            let e = rel_err(analytic[i].data()[c], n);
            if e > max_rel_err {
                max_rel_err = e;
                worst = (i, c);
            }
        }
        numeric.push(num);
    }
    Ok(GradCheck { max_rel_err, worst, analytic, numeric })
}

/// [`gradient_check`] over every parameter of a store, in name order.
pub fn gradient_check_store<F>(store: &ParameterStore, f: F, eps: f64) -> Result<GradCheck, NnError>
where
    F: Fn(&mut Tape, &Bound) -> Result<Var, NnError>,
{
    let names: Vec<String> = store.names().map(str::to_string).collect();
    let inputs: Vec<Tensor> = names.iter().map(|n| store.value(n).cloned()).collect::<Result<_, _>>()?;
    gradient_check(
        |tape, vars| {
            let mut b = Bound::default();
            for (n, v) in names.iter().zip(vars) {
                b.insert(n.clone(), *v);
            }
            f(tape, &b)
        },
        &inputs,
        eps,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let x = Tensor::new(vec![1, 1], vec![3.0]).unwrap();
        let r = gradient_check(|t, v| t.matmul(v[0], v[0]), &[x], DEFAULT_EPS).unwrap();
        assert!((r.analytic[0].item() - 6.0).abs() < 1e-12);
        assert!((r.numeric[0].item() - 6.0).abs() < 1e-9);
        assert!(r.max_rel_err <= 1e-10, "{}", r.max_rel_err);
    }

    #[test]
    fn detects_wrong_gradient() {
        // project() treats its weights as constants, so for f(p) = p * p
        // built this way the tape reports 3 while the true derivative is 6
        let r = gradient_check(
            |t, v| {
                let c = t.value(v[0]).clone();
                t.project(v[0], &c)
            },
            &[Tensor::scalar(3.0)],
            DEFAULT_EPS,
        )
        .unwrap();
        assert!((r.max_rel_err - 1.0 / 3.0).abs() < 1e-8, "{}", r.max_rel_err);
    }
}

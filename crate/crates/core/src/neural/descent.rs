//! Full-batch gradient descent with a halving safeguard on a flat
//! parameter vector.

use crate::error::{Error, Result};

/// Halvings tried per iteration before the step is abandoned.
pub const MAX_HALVINGS: usize = 30;

pub(crate) trait FlatObjective: Sync {
    type Cache;

    fn n_params(&self) -> usize;

    /// Loss at `theta` plus whatever the gradient pass needs.
    fn evaluate(&self, theta: &[f64]) -> (f64, Self::Cache);

    fn gradient(&self, theta: &[f64], cache: &Self::Cache, grad: &mut [f64]);
}

/// Run exactly `n_iterations` iterations. A step that would raise the
/// loss (or make it non-finite) is retried with half the learning rate;
/// the reduced rate carries over. When every halving fails the iterate is
/// stationary and the remaining iterations leave it unchanged.
///
/// `on_iteration(k, theta)` sees the parameters after each iteration `k`.
/// Returns the loss after every iteration, starting with the initial loss.
pub(crate) fn descend<O: FlatObjective>(
    objective: &O,
    theta: &mut [f64],
    learning_rate: f64,
    n_iterations: usize,
    mut on_iteration: impl FnMut(usize, &[f64]),
) -> Result<Vec<f64>> {
    let (mut loss, mut cache) = objective.evaluate(theta);
    if !loss.is_finite() {
        return Err(Error::Divergence { iteration: 0, loss });
    }
    let mut trace = Vec::with_capacity(n_iterations + 1);
    trace.push(loss);
    let mut lr = learning_rate;
    let mut grad = vec![0.0; objective.n_params()];
    let mut candidate = vec![0.0; objective.n_params()];
    let mut stalled = false;
    for k in 1..=n_iterations {
        if !stalled {
            objective.gradient(theta, &cache, &mut grad);
            let mut accepted = false;
            let mut last = loss;
            for _ in 0..=MAX_HALVINGS {
                for ((c, t), g) in candidate.iter_mut().zip(theta.iter()).zip(&grad) {
                    *c = t - lr * g;
                }
                let (l, c) = objective.evaluate(&candidate);
                last = l;
                if l.is_finite() && l <= loss {
                    theta.copy_from_slice(&candidate);
                    loss = l;
                    cache = c;
                    accepted = true;
                    break;
                }
                lr *= 0.5;
            }
            if !accepted {
                if !last.is_finite() {
                    return Err(Error::Divergence { iteration: k, loss: last });
                }
                stalled = true;
            }
        }
        trace.push(loss);
        on_iteration(k, theta);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// f(x) = sum (x_i - i)^2
    struct Bowl(usize);

    impl FlatObjective for Bowl {
        type Cache = ();

        fn n_params(&self) -> usize {
            self.0
        }

        fn evaluate(&self, theta: &[f64]) -> (f64, ()) {
            (theta.iter().enumerate().map(|(i, t)| (t - i as f64).powi(2)).sum(), ())
        }

        fn gradient(&self, theta: &[f64], _: &(), grad: &mut [f64]) {
            for (i, (g, t)) in grad.iter_mut().zip(theta).enumerate() {
                *g = 2.0 * (t - i as f64);
            }
        }
    }

    #[test]
    fn oversized_rate_is_halved_and_loss_falls() {
        let mut theta = vec![5.0; 4];
        let trace = descend(&Bowl(4), &mut theta, 10.0, 50, |_, _| {}).unwrap();
        assert_eq!(trace.len(), 51);
        assert!(trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(trace[50] < 1e-10);
    }

    #[test]
    fn zero_rate_changes_nothing() {
        let mut theta = vec![1.5, -2.0];
        descend(&Bowl(2), &mut theta, 0.0, 5, |_, _| {}).unwrap();
        assert_eq!(theta, vec![1.5, -2.0]);
    }
}

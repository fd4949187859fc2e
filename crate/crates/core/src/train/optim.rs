use crate::error::{Error, Result};
use crate::tensor::{Gradients, ParamStore};

/// Dense copy of tape gradients in parameter order; unreached tensors get zeros.
pub fn dense_gradients(params: &ParamStore, grads: &Gradients) -> Vec<Vec<f64>> {
    params
        .iter()
        .map(|(id, _, t)| {
            grads
                .get(id)
                .map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec)
        })
        .collect()
}

pub fn global_norm(grads: &[Vec<f64>]) -> f64 {
    grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt()
}

/// Rescales all gradients so their global L2 norm is at most `clip_norm`.
/// Returns the norm before clipping.
pub fn clip_gradients(grads: &mut [Vec<f64>], clip_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > clip_norm {
        let c = clip_norm / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= c);
    }
    norm
}

/// Running averages of squared gradients and squared updates.
#[derive(Clone, Debug, PartialEq)]
pub struct AdadeltaState {
    pub rho: f64,
    pub epsilon: f64,
    pub mean_sq_grad: Vec<Vec<f64>>,
    pub mean_sq_update: Vec<Vec<f64>>,
}

impl AdadeltaState {
    pub fn new(params: &ParamStore, rho: f64, epsilon: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, _, t)| vec![0.0; t.len()]).collect();
        AdadeltaState {
            rho,
            epsilon,
            mean_sq_grad: zeros.clone(),
            mean_sq_update: zeros,
        }
    }
}

/// One Adadelta step, scaled by `rate`.
pub fn adadelta_update(
    params: &mut ParamStore,
    grads: &[Vec<f64>],
    state: &mut AdadeltaState,
    rate: f64,
) -> Result<()> {
    if grads.len() != params.len() || state.mean_sq_grad.len() != params.len() {
        return Err(Error::Contract(
            "gradient and parameter counts differ".into(),
        ));
    }
    let (rho, eps) = (state.rho, state.epsilon);
    for (k, (_, t)) in params.iter_mut().enumerate() {
        let (g, eg, ex) = (
            &grads[k],
            &mut state.mean_sq_grad[k],
            &mut state.mean_sq_update[k],
        );
        if g.len() != t.len() {
            return Err(Error::shape("adadelta_update", t.shape(), &[g.len()]));
        }
        for (i, x) in t.data_mut().iter_mut().enumerate() {
            eg[i] = rho * eg[i] + (1.0 - rho) * g[i] * g[i];
            let dx = -((ex[i] + eps).sqrt() / (eg[i] + eps).sqrt()) * g[i];
            ex[i] = rho * ex[i] + (1.0 - rho) * dx * dx;
            *x += rate * dx;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn store(values: Vec<f64>) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("x", Tensor::vector(values)).unwrap();
        s
    }

    #[test]
    fn clipping() {
        let mut g = vec![vec![3.0, 4.0]];
        assert_eq!(clip_gradients(&mut g, 1.0), 5.0);
        assert!((g[0][0] - 0.6).abs() < 1e-15 && (g[0][1] - 0.8).abs() < 1e-15);
        let mut small = vec![vec![0.3, 0.4]];
        clip_gradients(&mut small, 1.0);
        assert_eq!(small, vec![vec![0.3, 0.4]]);
    }

    #[test]
    fn first_step_magnitude() {
        let mut p = store(vec![0.0]);
        let mut st = AdadeltaState::new(&p, 0.95, 1e-6);
        adadelta_update(&mut p, &[vec![1.0]], &mut st, 1.0).unwrap();
        let expected = -(1e-6f64).sqrt() / (0.05f64 + 1e-6).sqrt();
        assert!((p.get(p.id("x").unwrap()).data()[0] - expected).abs() < 1e-15);
        assert!((expected + 0.0044721).abs() < 1e-7);
    }

    #[test]
    fn zero_gradient_zero_update() {
        let mut p = store(vec![1.5, -2.0]);
        let mut st = AdadeltaState::new(&p, 0.95, 1e-6);
        adadelta_update(&mut p, &[vec![0.0, 0.0]], &mut st, 1.0).unwrap();
        assert_eq!(p.get(p.id("x").unwrap()).data(), &[1.5, -2.0]);
    }
}

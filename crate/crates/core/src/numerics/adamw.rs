//! AdamW with decoupled weight decay.

use super::param::ParamSet;
use super::tensor::{Float, Tensor};
use super::NumericsError;

/// Optimizer state: one first/second moment tensor per parameter, in
/// parameter order.
#[derive(Debug, Clone)]
pub struct AdamWState {
    pub step: u64,
    pub lr: Float,
    pub weight_decay: Float,
    pub beta1: Float,
    pub beta2: Float,
    pub eps: Float,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamWState {
    pub fn new(params: &ParamSet, lr: Float, weight_decay: Float) -> Self {
        AdamWState {
            step: 0,
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: params.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
        }
    }
}

/// One update with effective learning rate `lr_t`:
/// `param <- param - lr_t * (m_hat / (sqrt(v_hat) + eps) + weight_decay * param)`
/// with bias-corrected moments. Errors on a non-finite gradient.
pub fn adamw_step(
    state: &mut AdamWState,
    params: &mut ParamSet,
    lr_t: Float,
) -> Result<(), NumericsError> {
    state.step += 1;
    let bc1 = 1.0 - state.beta1.powi(state.step as i32);
    let bc2 = 1.0 - state.beta2.powi(state.step as i32);
    for (idx, p) in params.iter_mut().enumerate() {
        if !p.grad.all_finite() {
            return Err(NumericsError::NonFinite {
                context: format!("gradient of parameter {:?}", p.name),
            });
        }
        let m = state.m[idx].data_mut();
        let v = state.v[idx].data_mut();
        let value = p.value.data_mut();
        let grad = p.grad.data();
        for i in 0..value.len() {
            let g = grad[i];
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            value[i] -=
                lr_t * (m_hat / (v_hat.sqrt() + state.eps) + state.weight_decay * value[i]);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grad_zero_decay_is_identity() {
        let mut params = ParamSet::new();
        let w = params
            .add("w", Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap())
            .unwrap();
        let mut state = AdamWState::new(&params, 1e-3, 0.0);
        let before = params.get(w).value.clone();
        adamw_step(&mut state, &mut params, 1e-3).unwrap();
        assert_eq!(params.get(w).value, before);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn single_scalar_step_matches_hand_computation() {
        // One scalar parameter p=2.0, grad 0.5, betas (0.9, 0.999), eps 1e-8,
        // lr_t 0.1, no decay. After one step:
        //   m = 0.05, v = 0.00025, m_hat = 0.5, v_hat = 0.25,
        //   p <- 2.0 - 0.1 * 0.5 / (0.5 + 1e-8) = 1.9000000019999999...
        let mut params = ParamSet::new();
        let w = params.add("w", Tensor::scalar(2.0)).unwrap();
        params.get_mut(w).grad = Tensor::scalar(0.5);
        let mut state = AdamWState::new(&params, 0.1, 0.0);
        adamw_step(&mut state, &mut params, 0.1).unwrap();
        let m_hat = (0.1 * 0.5) / (1.0 - 0.9);
        let v_hat = (0.001 * 0.5 * 0.5) / (1.0 - 0.999);
        let expected = 2.0 - 0.1 * m_hat / (f64::sqrt(v_hat) + 1e-8);
        assert!(
            (params.get(w).value.item() as f64 - expected).abs() < 1e-6,
            "got {}",
            params.get(w).value.item()
        );
    }

    #[test]
    fn decay_only_shrinks_parameter() {
        let mut params = ParamSet::new();
        let w = params.add("w", Tensor::scalar(1.0)).unwrap();
        let mut state = AdamWState::new(&params, 1e-5, 0.1);
        adamw_step(&mut state, &mut params, 1e-5).unwrap();
        let got = params.get(w).value.item() as f64;
        let expected = 1.0 - 1e-6;
        assert!(got < 1.0);
        assert!((got - expected).abs() < 1e-7, "got {got}");
    }

    #[test]
    fn non_finite_grad_names_parameter() {
        let mut params = ParamSet::new();
        let w = params.add("weights.bad", Tensor::scalar(1.0)).unwrap();
        params.get_mut(w).grad = Tensor::scalar(Float::NAN);
        let mut state = AdamWState::new(&params, 1e-3, 0.0);
        let err = adamw_step(&mut state, &mut params, 1e-3).unwrap_err();
        assert!(err.to_string().contains("weights.bad"));
    }

    #[test]
    fn step_is_bit_deterministic() {
        let run = || {
            let mut params = ParamSet::new();
            let w = params
                .add("w", Tensor::from_vec(&[4], vec![0.1, 0.2, 0.3, 0.4]).unwrap())
                .unwrap();
            params.get_mut(w).grad =
                Tensor::from_vec(&[4], vec![0.01, -0.02, 0.03, -0.04]).unwrap();
            let mut state = AdamWState::new(&params, 1e-3, 1e-2);
            adamw_step(&mut state, &mut params, 1e-3).unwrap();
            params.get(w).value.data().to_vec()
        };
        assert_eq!(run(), run());
    }
}

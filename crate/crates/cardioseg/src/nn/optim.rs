//! Optimizers with fully serializable state.
//!
//! candle's builtin optimizers keep no externally visible state, which
//! breaks exact training resumption; these hold their moments as plain
//! tensors that a checkpoint can capture and restore.

use candle_core::backprop::GradStore;
use candle_core::{Tensor, Var};

use crate::error::{CoreError, Result};

fn zeros_like(v: &Var) -> Result<Tensor> {
    Ok(Tensor::zeros(v.shape(), v.dtype(), v.device())?)
}

/// Fetches the gradient for `var`, failing loudly: a missing gradient means
/// part of the graph was detached by mistake.
fn grad_of<'a>(grads: &'a GradStore, var: &Var, label: &str) -> Result<&'a Tensor> {
    grads.get(var).ok_or_else(|| {
        CoreError::Training(format!(
            "no gradient reached a parameter of `{label}` (shape {:?})",
            var.dims()
        ))
    })
}

/// Adam (beta1 = 0.9, beta2 = 0.999, eps = 1e-8) over a fixed parameter
/// list; first/second moments and the step counter are exposed as state.
pub struct Adam {
    vars: Vec<Var>,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    label: String,
}

impl Adam {
    pub fn new(vars: Vec<Var>, lr: f64, label: &str) -> Result<Self> {
        let m = vars.iter().map(zeros_like).collect::<Result<Vec<_>>>()?;
        let v = vars.iter().map(zeros_like).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            vars,
            m,
            v,
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            label: label.to_string(),
        })
    }

    pub fn step(&mut self, grads: &GradStore) -> Result<()> {
        self.t += 1;
        let b1c = 1.0 - self.beta1.powi(self.t as i32);
        let b2c = 1.0 - self.beta2.powi(self.t as i32);
        for (i, var) in self.vars.iter().enumerate() {
            let g = grad_of(grads, var, &self.label)?.detach();
            self.m[i] = ((&self.m[i] * self.beta1)? + (&g * (1.0 - self.beta1))?)?;
            self.v[i] = ((&self.v[i] * self.beta2)? + (g.sqr()? * (1.0 - self.beta2))?)?;
            let m_hat = (&self.m[i] / b1c)?;
            let v_hat = (&self.v[i] / b2c)?;
            let update = (m_hat * self.lr)?.div(&(v_hat.sqrt()? + self.eps)?)?;
            var.set(&var.as_tensor().sub(&update)?)?;
        }
        Ok(())
    }

    /// State tensors named under `prefix`, plus the step counter.
    pub fn state(&self, prefix: &str) -> Vec<(String, Tensor)> {
        let mut out = Vec::with_capacity(self.m.len() * 2 + 1);
        for (i, (m, v)) in self.m.iter().zip(&self.v).enumerate() {
            out.push((format!("{prefix}/m{i:04}"), m.clone()));
            out.push((format!("{prefix}/v{i:04}"), v.clone()));
        }
        let t = Tensor::new(&[self.t as f64], m_device(&self.m, &self.vars)).unwrap();
        out.push((format!("{prefix}/t"), t));
        out
    }

    pub fn load_state(
        &mut self,
        prefix: &str,
        values: &std::collections::HashMap<String, Tensor>,
    ) -> Result<()> {
        for i in 0..self.m.len() {
            self.m[i] = fetch(values, &format!("{prefix}/m{i:04}"), self.m[i].dims())?;
            self.v[i] = fetch(values, &format!("{prefix}/v{i:04}"), self.v[i].dims())?;
        }
        let t = fetch(values, &format!("{prefix}/t"), &[1])?;
        self.t = t.to_dtype(candle_core::DType::F64)?.to_vec1::<f64>()?[0] as u64;
        Ok(())
    }
}

/// SGD with classical momentum: vel = mu * vel + g; p -= lr * vel.
pub struct SgdMomentum {
    vars: Vec<Var>,
    vel: Vec<Tensor>,
    pub lr: f64,
    momentum: f64,
    label: String,
}

impl SgdMomentum {
    pub fn new(vars: Vec<Var>, lr: f64, momentum: f64, label: &str) -> Result<Self> {
        let vel = vars.iter().map(zeros_like).collect::<Result<Vec<_>>>()?;
        Ok(Self { vars, vel, lr, momentum, label: label.to_string() })
    }

    pub fn step(&mut self, grads: &GradStore) -> Result<()> {
        for (i, var) in self.vars.iter().enumerate() {
            let g = grad_of(grads, var, &self.label)?.detach();
            self.vel[i] = ((&self.vel[i] * self.momentum)? + g)?;
            var.set(&var.as_tensor().sub(&(&self.vel[i] * self.lr)?)?)?;
        }
        Ok(())
    }

    pub fn state(&self, prefix: &str) -> Vec<(String, Tensor)> {
        self.vel
            .iter()
            .enumerate()
            .map(|(i, v)| (format!("{prefix}/vel{i:04}"), v.clone()))
            .collect()
    }

    pub fn load_state(
        &mut self,
        prefix: &str,
        values: &std::collections::HashMap<String, Tensor>,
    ) -> Result<()> {
        for i in 0..self.vel.len() {
            self.vel[i] = fetch(values, &format!("{prefix}/vel{i:04}"), self.vel[i].dims())?;
        }
        Ok(())
    }
}

fn fetch(
    values: &std::collections::HashMap<String, Tensor>,
    name: &str,
    dims: &[usize],
) -> Result<Tensor> {
    let t = values
        .get(name)
        .ok_or_else(|| CoreError::Checkpoint(format!("missing optimizer tensor `{name}`")))?;
    if t.dims() != dims {
        return Err(CoreError::Checkpoint(format!(
            "optimizer tensor `{name}`: shape {:?} != {:?}",
            t.dims(),
            dims
        )));
    }
    Ok(t.clone())
}

fn m_device<'a>(m: &'a [Tensor], vars: &'a [Var]) -> &'a candle_core::Device {
    m.first()
        .map(|t| t.device())
        .or_else(|| vars.first().map(|v| v.device()))
        .unwrap_or(&candle_core::Device::Cpu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};

    /// One Adam step from zero state has magnitude lr per coordinate
    /// (bias-corrected moments cancel), independent of gradient scale.
    #[test]
    fn adam_first_step_is_lr_sized() {
        let x = Var::from_tensor(
            &Tensor::from_vec(vec![1.0f64, -2.0, 3.0], 3, &Device::Cpu).unwrap(),
        )
        .unwrap();
        let loss = (x.as_tensor() * 5.0).unwrap().sum_all().unwrap();
        let grads = loss.backward().unwrap();
        let mut opt = Adam::new(vec![x.clone()], 0.01, "t").unwrap();
        opt.step(&grads).unwrap();
        let got: Vec<f64> = x.as_tensor().to_vec1().unwrap();
        for (v, &x0) in got.iter().zip(&[1.0, -2.0, 3.0]) {
            assert!((v - (x0 - 0.01)).abs() < 1e-6, "{v} vs {x0}");
        }
    }

    #[test]
    fn adam_converges_on_quadratic() {
        let x = Var::from_tensor(
            &Tensor::from_vec(vec![4.0f64, -3.0], 2, &Device::Cpu).unwrap(),
        )
        .unwrap();
        let mut opt = Adam::new(vec![x.clone()], 0.1, "t").unwrap();
        for _ in 0..300 {
            let loss = x.as_tensor().sqr().unwrap().sum_all().unwrap();
            let grads = loss.backward().unwrap();
            opt.step(&grads).unwrap();
        }
        let got: Vec<f64> = x.as_tensor().to_vec1().unwrap();
        assert!(got.iter().all(|v| v.abs() < 1e-2), "{got:?}");
    }

    #[test]
    fn sgd_momentum_matches_hand_rollout() {
        let x = Var::from_tensor(&Tensor::from_vec(vec![1.0f64], 1, &Device::Cpu).unwrap())
            .unwrap();
        let mut opt = SgdMomentum::new(vec![x.clone()], 0.1, 0.9, "t").unwrap();
        // Constant gradient 2: vel = 2, 3.8; x = 1 - 0.2 = 0.8, 0.8 - 0.38.
        for _ in 0..2 {
            let loss = (x.as_tensor() * 2.0).unwrap().sum_all().unwrap();
            let grads = loss.backward().unwrap();
            opt.step(&grads).unwrap();
        }
        let got: f64 = x.as_tensor().to_vec1::<f64>().unwrap()[0];
        assert!((got - 0.42).abs() < 1e-12);
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let x = Var::from_tensor(&Tensor::zeros(2, DType::F64, &Device::Cpu).unwrap()).unwrap();
        let y = Var::from_tensor(&Tensor::zeros(2, DType::F64, &Device::Cpu).unwrap()).unwrap();
        let loss = x.as_tensor().sum_all().unwrap();
        let grads = loss.backward().unwrap();
        let mut opt = Adam::new(vec![y], 0.1, "detached").unwrap();
        assert!(matches!(opt.step(&grads), Err(CoreError::Training(_))));
    }

    #[test]
    fn optimizer_state_round_trips() {
        let mk = || {
            Var::from_tensor(&Tensor::from_vec(vec![1.0f64, 2.0], 2, &Device::Cpu).unwrap())
                .unwrap()
        };
        let x = mk();
        let mut opt = Adam::new(vec![x.clone()], 0.05, "t").unwrap();
        for _ in 0..3 {
            let loss = x.as_tensor().sqr().unwrap().sum_all().unwrap();
            opt.step(&loss.backward().unwrap()).unwrap();
        }
        let state: std::collections::HashMap<String, Tensor> =
            opt.state("o").into_iter().collect();

        let y = mk();
        y.set(x.as_tensor()).unwrap();
        let mut opt2 = Adam::new(vec![y.clone()], 0.05, "t").unwrap();
        opt2.load_state("o", &state).unwrap();

        // Same next step from the restored state.
        let l1 = x.as_tensor().sqr().unwrap().sum_all().unwrap();
        opt.step(&l1.backward().unwrap()).unwrap();
        let l2 = y.as_tensor().sqr().unwrap().sum_all().unwrap();
        opt2.step(&l2.backward().unwrap()).unwrap();
        assert_eq!(
            x.as_tensor().to_vec1::<f64>().unwrap(),
            y.as_tensor().to_vec1::<f64>().unwrap()
        );
    }
}

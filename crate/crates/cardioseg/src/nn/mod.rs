//! Thin training substrate over candle: a named parameter store with
//! deterministic initialization, the layer set the networks need, and
//! optimizers whose state round-trips through checkpoints.

pub mod optim;

use std::collections::HashMap;

use candle_core::{DType, Device, Tensor, Var};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::error::{CoreError, Result};

/// Weight initialization schemes.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    Const(f64),
    Normal { mean: f64, std: f64 },
    /// std = sqrt(2 / fan_in); fan_in inferred from the shape.
    KaimingNormal,
    /// Uniform in +/- sqrt(6 / (fan_in + fan_out)).
    XavierUniform,
}

fn fans(shape: &[usize]) -> (usize, usize) {
    match shape {
        // Linear stored as [in, out].
        [i, o] => (*i, *o),
        // Conv stored as [out, in, kh, kw].
        [o, i, kh, kw] => (i * kh * kw, o * kh * kw),
        _ => {
            let n: usize = shape.iter().product();
            (n, n)
        }
    }
}

/// Ordered, named collection of trainable parameters and non-trainable
/// buffers. Creation order defines optimizer and serialization order, so a
/// rebuilt store matches a loaded checkpoint exactly.
pub struct ParamStore {
    device: Device,
    dtype: DType,
    params: Vec<(String, Var)>,
    buffers: Vec<(String, Var)>,
    index: HashMap<String, (bool, usize)>,
}

impl ParamStore {
    pub fn new(dtype: DType) -> Self {
        Self {
            device: Device::Cpu,
            dtype,
            params: Vec::new(),
            buffers: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    /// Creates (or retrieves) a trainable parameter. The returned tensor
    /// shares identity with the stored `Var`, so gradients accumulate to it.
    pub fn param(
        &mut self,
        name: &str,
        shape: &[usize],
        init: Init,
        rng: &mut impl Rng,
    ) -> Result<Tensor> {
        if let Some(&(is_param, i)) = self.index.get(name) {
            let var = if is_param { &self.params[i].1 } else { &self.buffers[i].1 };
            if var.dims() != shape {
                return Err(CoreError::Shape(format!(
                    "parameter `{name}` exists with shape {:?}, requested {:?}",
                    var.dims(),
                    shape
                )));
            }
            return Ok(var.as_tensor().clone());
        }
        let n: usize = shape.iter().product();
        let (fan_in, fan_out) = fans(shape);
        let data: Vec<f64> = match init {
            Init::Const(c) => vec![c; n],
            Init::Normal { mean, std } => {
                let d = Normal::new(mean, std)
                    .map_err(|e| CoreError::InvalidArg(format!("normal init: {e}")))?;
                (0..n).map(|_| d.sample(rng)).collect()
            }
            Init::KaimingNormal => {
                let std = (2.0 / fan_in as f64).sqrt();
                let d = Normal::new(0.0, std)
                    .map_err(|e| CoreError::InvalidArg(format!("kaiming init: {e}")))?;
                (0..n).map(|_| d.sample(rng)).collect()
            }
            Init::XavierUniform => {
                let lim = (6.0 / (fan_in + fan_out) as f64).sqrt();
                (0..n).map(|_| rng.random_range(-lim..lim)).collect()
            }
        };
        let t = Tensor::from_vec(data, shape, &self.device)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        let out = var.as_tensor().clone();
        self.index.insert(name.to_string(), (true, self.params.len()));
        self.params.push((name.to_string(), var));
        Ok(out)
    }

    /// Creates (or retrieves) a trainable parameter with explicit contents.
    pub fn param_with(&mut self, name: &str, data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        if let Some(&(is_param, i)) = self.index.get(name) {
            if !is_param {
                return Err(CoreError::InvalidArg(format!("`{name}` exists as a buffer")));
            }
            return Ok(self.params[i].1.as_tensor().clone());
        }
        if data.len() != shape.iter().product::<usize>() {
            return Err(CoreError::Shape(format!(
                "`{name}`: {} values for shape {shape:?}",
                data.len()
            )));
        }
        let t = Tensor::from_vec(data, shape, &self.device)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        let out = var.as_tensor().clone();
        self.index.insert(name.to_string(), (true, self.params.len()));
        self.params.push((name.to_string(), var));
        Ok(out)
    }

    /// Creates (or retrieves) a non-trainable buffer initialized to `value`.
    pub fn buffer(&mut self, name: &str, shape: &[usize], value: f64) -> Result<Var> {
        if let Some(&(is_param, i)) = self.index.get(name) {
            if is_param {
                return Err(CoreError::InvalidArg(format!(
                    "`{name}` already exists as a parameter"
                )));
            }
            return Ok(self.buffers[i].1.clone());
        }
        let n: usize = shape.iter().product();
        let t = Tensor::from_vec(vec![value; n], shape, &self.device)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        self.index.insert(name.to_string(), (false, self.buffers.len()));
        self.buffers.push((name.to_string(), var.clone()));
        Ok(var)
    }

    /// Trainable variables in creation order.
    pub fn trainable(&self) -> Vec<Var> {
        self.params.iter().map(|(_, v)| v.clone()).collect()
    }

    /// Trainable variables whose name starts with `prefix`, creation order.
    pub fn trainable_with_prefix(&self, prefix: &str) -> Vec<Var> {
        self.params
            .iter()
            .filter(|(n, _)| n.starts_with(prefix))
            .map(|(_, v)| v.clone())
            .collect()
    }

    /// Trainable variables passing a name filter, creation order.
    pub fn trainable_filtered(&self, keep: impl Fn(&str) -> bool) -> Vec<Var> {
        self.params
            .iter()
            .filter(|(n, _)| keep(n))
            .map(|(_, v)| v.clone())
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|(_, v)| v.elem_count()).sum()
    }

    /// All named tensors (parameters then buffers), creation order.
    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        self.params
            .iter()
            .chain(&self.buffers)
            .map(|(n, v)| (n.clone(), v.as_tensor().clone()))
            .collect()
    }

    /// Overwrites parameters and buffers from `values` by name; every
    /// element of this store must be present with a matching shape.
    pub fn load_named(&mut self, values: &HashMap<String, Tensor>) -> Result<()> {
        for (name, var) in self.params.iter().chain(&self.buffers) {
            let t = values.get(name).ok_or_else(|| {
                CoreError::Checkpoint(format!("missing tensor `{name}`"))
            })?;
            if t.dims() != var.dims() {
                return Err(CoreError::Checkpoint(format!(
                    "tensor `{name}`: shape {:?} != expected {:?}",
                    t.dims(),
                    var.dims()
                )));
            }
            var.set(&t.to_dtype(self.dtype)?)?;
        }
        Ok(())
    }

    /// SHA-256 over all parameter bytes in creation order; bitwise-equal
    /// stores produce equal digests.
    pub fn digest(&self) -> Result<String> {
        let mut h = Sha256::new();
        for (name, var) in &self.params {
            h.update(name.as_bytes());
            let flat: Vec<f64> = var
                .as_tensor()
                .flatten_all()?
                .to_dtype(DType::F64)?
                .to_vec1()?;
            for v in flat {
                h.update(v.to_le_bytes());
            }
        }
        let digest = h.finalize();
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct ConvCfg {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

impl Default for ConvCfg {
    fn default() -> Self {
        Self { stride: 1, padding: 0, dilation: 1 }
    }
}

pub struct Conv2d {
    w: Tensor,
    b: Tensor,
    cfg: ConvCfg,
}

impl Conv2d {
    pub fn new(
        ps: &mut ParamStore,
        name: &str,
        in_c: usize,
        out_c: usize,
        k: usize,
        cfg: ConvCfg,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let w = ps.param(
            &format!("{name}/weight"),
            &[out_c, in_c, k, k],
            Init::KaimingNormal,
            rng,
        )?;
        let b = ps.param(&format!("{name}/bias"), &[out_c], Init::Const(0.0), rng)?;
        Ok(Self { w, b, cfg })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv2d(&self.w, self.cfg.padding, self.cfg.stride, self.cfg.dilation, 1)?;
        let c = self.b.elem_count();
        Ok(y.broadcast_add(&self.b.reshape((1, c, 1, 1))?)?)
    }
}

pub struct Linear {
    /// Stored as [in, out].
    w: Tensor,
    b: Tensor,
}

impl Linear {
    pub fn new(
        ps: &mut ParamStore,
        name: &str,
        in_f: usize,
        out_f: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let w = ps.param(&format!("{name}/weight"), &[in_f, out_f], Init::XavierUniform, rng)?;
        let b = ps.param(&format!("{name}/bias"), &[out_f], Init::Const(0.0), rng)?;
        Ok(Self { w, b })
    }

    /// Wraps already-registered tensors (for custom initialization).
    pub fn from_parts(w: Tensor, b: Tensor) -> Self {
        Self { w, b }
    }

    /// Input [.., in] -> output [.., out].
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.broadcast_matmul(&self.w)?.broadcast_add(&self.b)?)
    }
}

/// Tensor layout a batch-norm layer normalizes over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnLayout {
    /// [B, C, H, W]; statistics over (B, H, W).
    Conv,
    /// [B, N, C]; statistics over (B, N).
    Points,
}

/// Batch normalization with explicitly managed running statistics, so
/// checkpoints capture them and training is resumable bit-for-bit.
pub struct BatchNorm {
    gamma: Tensor,
    beta: Tensor,
    r_mean: Var,
    r_var: Var,
    layout: BnLayout,
    momentum: f64,
    eps: f64,
}

impl BatchNorm {
    pub fn new(
        ps: &mut ParamStore,
        name: &str,
        c: usize,
        layout: BnLayout,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let gamma = ps.param(&format!("{name}/gamma"), &[c], Init::Const(1.0), rng)?;
        let beta = ps.param(&format!("{name}/beta"), &[c], Init::Const(0.0), rng)?;
        let r_mean = ps.buffer(&format!("{name}/running_mean"), &[c], 0.0)?;
        let r_var = ps.buffer(&format!("{name}/running_var"), &[c], 1.0)?;
        Ok(Self { gamma, beta, r_mean, r_var, layout, momentum: 0.1, eps: 1e-5 })
    }

    pub fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let c = self.gamma.elem_count();
        let (reduce, shape): (Vec<usize>, Vec<usize>) = match self.layout {
            BnLayout::Conv => (vec![0, 2, 3], vec![1, c, 1, 1]),
            BnLayout::Points => (vec![0, 1], vec![1, 1, c]),
        };
        let (mean, var) = if train {
            let mean = x.mean_keepdim(reduce.as_slice())?;
            let centered = x.broadcast_sub(&mean)?;
            let var = centered.sqr()?.mean_keepdim(reduce.as_slice())?;
            // Update running stats outside the autodiff graph; running
            // variance uses the unbiased estimate, normalization the biased
            // one.
            let n: usize = reduce.iter().map(|&d| x.dims()[d]).product();
            let unbias = if n > 1 { n as f64 / (n as f64 - 1.0) } else { 1.0 };
            let m = self.momentum;
            let flat_mean = mean.detach().reshape(c)?;
            let flat_var = (var.detach().reshape(c)? * unbias)?;
            self.r_mean
                .set(&((self.r_mean.as_tensor() * (1.0 - m))? + (flat_mean * m)?)?)?;
            self.r_var
                .set(&((self.r_var.as_tensor() * (1.0 - m))? + (flat_var * m)?)?)?;
            (mean, var)
        } else {
            (
                self.r_mean.as_tensor().detach().reshape(shape.as_slice())?,
                self.r_var.as_tensor().detach().reshape(shape.as_slice())?,
            )
        };
        let norm = x
            .broadcast_sub(&mean)?
            .broadcast_div(&(var + self.eps)?.sqrt()?)?;
        let g = self.gamma.reshape(shape.as_slice())?;
        let b = self.beta.reshape(shape.as_slice())?;
        Ok(norm.broadcast_mul(&g)?.broadcast_add(&b)?)
    }
}

/// Exact 2x2 max pooling with stride 2. Built from reshape/permute plus a
/// max reduction, whose gradients are exact; requires even spatial dims.
pub fn max_pool2x2(x: &Tensor) -> Result<Tensor> {
    let (b, c, h, w) = x.dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(CoreError::Shape(format!(
            "max_pool2x2 needs even spatial dims, got {h}x{w}"
        )));
    }
    let y = candle_nn::ops::pixel_unshuffle(x, 2)?;
    Ok(y.reshape((b, c, 4, h / 2, w / 2))?.max(2)?)
}

pub fn relu(x: &Tensor) -> Result<Tensor> {
    Ok(x.relu()?)
}

pub fn leaky_relu(x: &Tensor, slope: f64) -> Result<Tensor> {
    Ok(candle_nn::ops::leaky_relu(x, slope)?)
}

pub fn sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok(candle_nn::ops::sigmoid(x)?)
}

pub fn softmax(x: &Tensor, dim: usize) -> Result<Tensor> {
    Ok(candle_nn::ops::softmax(x, dim)?)
}

/// Nearest-neighbour 2x upsampling.
pub fn upsample2(x: &Tensor) -> Result<Tensor> {
    let (_, _, h, w) = x.dims4()?;
    Ok(x.upsample_nearest2d(h * 2, w * 2)?)
}

//! Minimal layer toolkit over candle tensors with seeded initialization and
//! named parameters.

pub mod layers;
pub mod ops;
pub mod resnet;

use std::collections::HashMap;

use candle_core::{DType, Device, Tensor, Var};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

pub use layers::{Conv2d, GroupNorm, LayerNorm, Linear, MultiHeadAttention, TwoLayerMlp};
pub use resnet::{Backbone, BackbonePreset};

#[derive(Debug, Clone)]
pub enum Init {
    Zeros,
    Ones,
    Uniform(f64),
    Normal(f64),
    Values(Vec<f32>),
}

/// Owns every trainable variable of a model, in creation order.
pub struct ParamStore {
    params: Vec<(String, Var)>,
    index: HashMap<String, usize>,
    rng: StreamRng,
    device: Device,
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        Self {
            params: Vec::new(),
            index: HashMap::new(),
            rng: rng::stream(seed, "init", &[]),
            device: Device::Cpu,
        }
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    /// Draws initial values without registering a parameter.
    pub fn sample(&mut self, len: usize, init: &Init) -> Vec<f32> {
        match init {
            Init::Zeros => vec![0.0; len],
            Init::Ones => vec![1.0; len],
            Init::Uniform(b) => (0..len)
                .map(|_| self.rng.random_range(-*b..*b) as f32)
                .collect(),
            Init::Normal(std) => (0..len)
                .map(|_| (std * self.rng.sample::<f64, _>(StandardNormal)) as f32)
                .collect(),
            Init::Values(v) => v.clone(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], init: Init) -> Result<Tensor> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter {name}")));
        }
        let len: usize = shape.iter().product();
        let values = self.sample(len, &init);
        if values.len() != len {
            return Err(Error::Shape(format!(
                "{name}: {} initial values for shape {shape:?}",
                values.len()
            )));
        }
        let var = Var::from_vec(values, shape, &self.device)?;
        let t = var.as_tensor().clone();
        self.index.insert(name.clone(), self.params.len());
        self.params.push((name, var));
        Ok(t)
    }

    /// Swaps a parameter for a new variable, possibly of a different shape.
    pub fn replace(&mut self, name: &str, shape: &[usize], values: Vec<f32>) -> Result<Tensor> {
        let &i = self
            .index
            .get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("no parameter {name}")))?;
        let var = Var::from_vec(values, shape, &self.device)?;
        let t = var.as_tensor().clone();
        self.params[i].1 = var;
        Ok(t)
    }

    pub fn vars(&self) -> &[(String, Var)] {
        &self.params
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.index.get(name).map(|&i| &self.params[i].1)
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(|(_, v)| v.elem_count()).sum()
    }

    /// Parameter count of every variable whose name starts with `prefix`.
    pub fn num_params_under(&self, prefix: &str) -> usize {
        self.params
            .iter()
            .filter(|(n, _)| n.starts_with(prefix))
            .map(|(_, v)| v.elem_count())
            .sum()
    }

    /// Flat f32 copy of a parameter.
    pub fn values(&self, name: &str) -> Result<Vec<f32>> {
        let var = self
            .get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("no parameter {name}")))?;
        Ok(var.as_tensor().flatten_all()?.to_dtype(DType::F32)?.to_vec1()?)
    }

    /// Overwrites a parameter in place, keeping every handle to it valid.
    pub fn set_values(&self, name: &str, values: &[f32]) -> Result<()> {
        let var = self
            .get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("no parameter {name}")))?;
        if values.len() != var.elem_count() {
            return Err(Error::Shape(format!(
                "{name}: got {} values for shape {:?}",
                values.len(),
                var.shape()
            )));
        }
        var.set(&Tensor::from_slice(values, var.shape(), &self.device)?)?;
        Ok(())
    }
}

use std::collections::BTreeMap;

use crate::tensor::{Shape, Tensor, TensorError};

/// A named, shaped f32 array.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightTensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl WeightTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self, TensorError> {
        let numel: usize = dims.iter().product();
        if numel != data.len() {
            return Err(TensorError::InvalidParam(format!(
                "dims {dims:?} need {numel} values, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let numel = dims.iter().product();
        Self {
            dims,
            data: vec![0.0; numel],
        }
    }

    pub fn from_tensor(t: &Tensor) -> Self {
        Self {
            dims: t.shape().dims().to_vec(),
            data: t.data().to_vec(),
        }
    }

    /// Interprets a 4-D entry as an OIHW kernel.
    pub fn to_tensor(&self) -> Result<Tensor, TensorError> {
        match self.dims[..] {
            [o, i, h, w] => Tensor::new(Shape::new(o, i, h, w), self.data.clone()),
            _ => Err(TensorError::InvalidParam(format!(
                "expected a 4-D tensor, got dims {:?}",
                self.dims
            ))),
        }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

/// Name -> tensor map, kept sorted so serialization is canonical.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightStore {
    tensors: BTreeMap<String, WeightTensor>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: WeightTensor) -> Option<WeightTensor> {
        self.tensors.insert(name.into(), t)
    }

    pub fn get(&self, name: &str) -> Option<&WeightTensor> {
        self.tensors.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<WeightTensor> {
        self.tensors.remove(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &WeightTensor)> {
        self.tensors.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.tensors.values().map(WeightTensor::numel).sum()
    }
}

impl FromIterator<(String, WeightTensor)> for WeightStore {
    fn from_iter<I: IntoIterator<Item = (String, WeightTensor)>>(iter: I) -> Self {
        Self {
            tensors: iter.into_iter().collect(),
        }
    }
}

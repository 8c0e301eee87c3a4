use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{NumericError, Tensor};
use crate::rng::Rng;

/// Named trainable parameters in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor) -> Result<usize, NumericError> {
        if self.index.contains_key(name) {
            return Err(NumericError::DuplicateParam(name.to_string()));
        }
        let id = self.names.len();
        self.names.push(name.to_string());
        self.tensors.push(tensor.with_grad(true));
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, NumericError> {
        self.id(name)
            .map(|i| &self.tensors[i])
            .ok_or_else(|| NumericError::UnknownParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor, NumericError> {
        match self.id(name) {
            Some(i) => Ok(&mut self.tensors[i]),
            None => Err(NumericError::UnknownParam(name.to_string())),
        }
    }

    pub fn by_id(&self, id: usize) -> &Tensor {
        &self.tensors[id]
    }

    pub fn by_id_mut(&mut self, id: usize) -> &mut Tensor {
        &mut self.tensors[id]
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter())
    }

    pub fn num_elements(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn round_f32(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::round_f32);
    }
}

/// Seeded initializer used while declaring a model's parameters.
pub struct Init<'a> {
    pub store: &'a mut ParamStore,
    pub rng: Rng,
}

impl<'a> Init<'a> {
    pub fn new(store: &'a mut ParamStore, seed: u64) -> Self {
        Self {
            store,
            rng: Rng::seed(seed),
        }
    }

    /// Uniform in `±1/sqrt(fan_in)`.
    pub fn fan_in(&mut self, name: &str, shape: &[usize], fan_in: usize) -> Result<(), NumericError> {
        let bound = 1.0 / libm::sqrt(fan_in.max(1) as f64);
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.rng.range(-bound, bound)).collect();
        self.store.insert(name, Tensor::new(shape, data)?)?;
        Ok(())
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], v: f64) -> Result<(), NumericError> {
        self.store.insert(name, Tensor::filled(shape, v))?;
        Ok(())
    }

    /// Dense layer `{prefix}.w` of shape `(fan_in, fan_out)` and bias `{prefix}.b`.
    pub fn linear(&mut self, prefix: &str, fan_in: usize, fan_out: usize) -> Result<(), NumericError> {
        self.fan_in(&join(prefix, "w"), &[fan_in, fan_out], fan_in)?;
        self.fan_in(&join(prefix, "b"), &[fan_out], fan_in)
    }

    pub fn layer_norm(&mut self, prefix: &str, width: usize) -> Result<(), NumericError> {
        self.constant(&join(prefix, "g"), &[width], 1.0)?;
        self.constant(&join(prefix, "b"), &[width], 0.0)
    }

    /// Layers `{prefix}.0 .. {prefix}.{n-2}` for consecutive `dims`.
    pub fn mlp(&mut self, prefix: &str, dims: &[usize]) -> Result<(), NumericError> {
        for (i, w) in dims.windows(2).enumerate() {
            self.linear(&join_idx(prefix, i), w[0], w[1])?;
        }
        Ok(())
    }
}

pub fn join(prefix: &str, leaf: &str) -> String {
    let mut s = String::with_capacity(prefix.len() + leaf.len() + 1);
    s.push_str(prefix);
    s.push('.');
    s.push_str(leaf);
    s
}

pub fn join_idx(prefix: &str, i: usize) -> String {
    use core::fmt::Write;
    let mut s = String::with_capacity(prefix.len() + 4);
    let _ = write!(s, "{prefix}.{i}");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_rejected() {
        let mut p = ParamStore::new();
        p.insert("a", Tensor::zeros(&[1])).unwrap();
        assert!(matches!(
            p.insert("a", Tensor::zeros(&[1])),
            Err(NumericError::DuplicateParam(_))
        ));
    }

    #[test]
    fn iteration_in_insertion_order() {
        let mut p = ParamStore::new();
        for n in ["z", "a", "m"] {
            p.insert(n, Tensor::zeros(&[1])).unwrap();
        }
        let names: Vec<&str> = p.iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["z", "a", "m"]);
    }

    #[test]
    fn init_is_seeded() {
        let mut a = ParamStore::new();
        let mut b = ParamStore::new();
        Init::new(&mut a, 9).linear("l", 4, 3).unwrap();
        Init::new(&mut b, 9).linear("l", 4, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.get("l.w").unwrap().data().iter().all(|x| x.abs() <= 0.5));
    }
}

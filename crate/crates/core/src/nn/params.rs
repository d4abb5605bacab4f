use std::collections::HashMap;

use rand::Rng;

use crate::{Error, Result};

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape("tensor data", &[n], &[data.len()]));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    /// Columns of a matrix; 1 for vectors.
    pub fn cols(&self) -> usize {
        if self.shape.len() >= 2 {
            self.shape[1..].iter().product()
        } else {
            1
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, ParamId>,
}

pub const INIT_RANGE: f64 = 0.08;

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, tensor: Tensor) -> ParamId {
        assert!(!self.index.contains_key(name), "duplicate parameter {name}");
        let id = ParamId(self.tensors.len());
        self.names.push(name.to_string());
        self.tensors.push(tensor);
        self.index.insert(name.to_string(), id);
        id
    }

    /// Matrix initialized uniformly in `(-0.08, 0.08)`.
    pub fn add_matrix<R: Rng>(&mut self, name: &str, rows: usize, cols: usize, rng: &mut R) -> ParamId {
        let data = (0..rows * cols)
            .map(|_| rng.gen_range(-INIT_RANGE..INIT_RANGE))
            .collect();
        self.add(
            name,
            Tensor {
                shape: vec![rows, cols],
                data,
            },
        )
    }

    pub fn add_bias(&mut self, name: &str, n: usize) -> ParamId {
        self.add(name, Tensor::zeros(&[n]))
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Overwrite every value in place, e.g. to build analytic test cases.
    pub fn fill(&mut self, id: ParamId, value: f64) {
        self.tensors[id.0].data.iter_mut().for_each(|x| *x = value);
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::all_finite)
    }

    /// Redraw every value of every parameter uniformly in `(-scale, scale)`,
    /// biases included.
    pub fn randomize<R: Rng>(&mut self, scale: f64, rng: &mut R) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|x| *x = rng.gen_range(-scale..scale));
        }
    }
}

/// Gradient accumulators, one optional dense buffer per parameter.
#[derive(Debug, Clone)]
pub struct Grads {
    bufs: Vec<Option<Vec<f64>>>,
}

impl Grads {
    pub fn new(store: &ParamStore) -> Self {
        Grads {
            bufs: vec![None; store.len()],
        }
    }

    pub(crate) fn buf(&mut self, id: ParamId, len: usize) -> &mut [f64] {
        self.bufs[id.0].get_or_insert_with(|| vec![0.0; len])
    }

    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.bufs.get(id.0).and_then(|b| b.as_deref())
    }

    pub fn scale(&mut self, factor: f64) {
        for b in self.bufs.iter_mut().flatten() {
            b.iter_mut().for_each(|g| *g *= factor);
        }
    }

    /// Global L2 norm over the given parameters.
    pub fn norm(&self, ids: &[ParamId]) -> f64 {
        ids.iter()
            .filter_map(|&id| self.get(id))
            .flat_map(|g| g.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescale so the global norm over `ids` is at most `max_norm`.
    pub fn clip(&mut self, ids: &[ParamId], max_norm: f64) -> f64 {
        let norm = self.norm(ids);
        if norm > max_norm {
            let f = max_norm / norm;
            for &id in ids {
                if let Some(b) = self.bufs[id.0].as_mut() {
                    b.iter_mut().for_each(|g| *g *= f);
                }
            }
        }
        norm
    }
}

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diff::{Gradients, Tape, Tensor, Var};
use crate::error::Error;
use crate::{Real, Result};

/// How a parameter tensor is initialised.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform in `±1/sqrt(rows)`.
    FanIn,
    /// Uniform in `±scale`.
    Uniform(f64),
    Zeros,
    /// LSTM bias: zeros except ones on the forget gate block.
    ForgetBias,
}

/// Named parameter tensors in a stable (sorted) order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T> {
    tensors: BTreeMap<String, Tensor<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            tensors: BTreeMap::new(),
        }
    }

    /// Builds every tensor listed in `specs` from one seeded generator.
    pub fn initialize(specs: &[(String, (usize, usize), Init)], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = Self::new();
        for (name, (r, c), init) in specs {
            let (r, c) = (*r, *c);
            let data = match *init {
                Init::FanIn => {
                    let a = 1.0 / (r as f64).sqrt();
                    (0..r * c).map(|_| T::lit(rng.gen_range(-a..a))).collect()
                }
                Init::Uniform(a) => (0..r * c).map(|_| T::lit(rng.gen_range(-a..a))).collect(),
                Init::Zeros => vec![T::zero(); r * c],
                Init::ForgetBias => {
                    let h = c / 4;
                    (0..c)
                        .map(|j| if (h..2 * h).contains(&j) { T::one() } else { T::zero() })
                        .collect()
                }
            };
            store.insert(name.clone(), Tensor::from_parts(r, c, data));
        }
        store
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<T>) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalars.
    pub fn num_values(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Checks that names and shapes match `specs` exactly.
    pub fn check_against(&self, specs: &[(String, (usize, usize), Init)]) -> Result<()> {
        for (name, shape, _) in specs {
            let t = self.get(name)?;
            if t.shape() != *shape {
                return Err(Error::shape(
                    "load weights",
                    format!("`{name}` is {:?}, expected {shape:?}", t.shape()),
                ));
            }
        }
        if self.len() != specs.len() {
            let extra = self
                .tensors
                .keys()
                .find(|k| !specs.iter().any(|(n, _, _)| n == *k))
                .cloned()
                .unwrap_or_default();
            return Err(Error::Format {
                kind: "S2LW",
                detail: format!("unexpected parameter tensor `{extra}`"),
            });
        }
        Ok(())
    }

    /// Records every tensor on `tape` as a trainable leaf.
    pub fn bind(&self, tape: &mut Tape<T>) -> BoundParams {
        let vars = self
            .tensors
            .iter()
            .map(|(k, v)| (k.clone(), tape.param(v.clone())))
            .collect();
        BoundParams { vars }
    }
}

/// Tape handles of a bound [`ParamStore`].
#[derive(Debug, Clone)]
pub struct BoundParams {
    vars: BTreeMap<String, Var>,
}

impl BoundParams {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Gradients in the store's order; missing ones are zero-filled.
    pub fn collect_grads<T: Real>(
        &self,
        store: &ParamStore<T>,
        grads: &Gradients<T>,
    ) -> Vec<(String, Vec<T>)> {
        store
            .iter()
            .map(|(name, t)| {
                let g = self
                    .vars
                    .get(name)
                    .and_then(|v| grads.get(*v))
                    .map(<[T]>::to_vec)
                    .unwrap_or_else(|| vec![T::zero(); t.len()]);
                (name.to_string(), g)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn specs() -> Vec<(String, (usize, usize), Init)> {
        vec![
            ("a".into(), (4, 3), Init::FanIn),
            ("b".into(), (1, 8), Init::ForgetBias),
            ("c".into(), (2, 2), Init::Zeros),
        ]
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = ParamStore::<f64>::initialize(&specs(), 1);
        assert_eq!(a, ParamStore::initialize(&specs(), 1));
        assert_ne!(a, ParamStore::initialize(&specs(), 2));
        assert!(a.get("a").unwrap().data().iter().all(|v| v.abs() < 0.5));
        assert_eq!(a.get("b").unwrap().data(), &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(a.num_values(), 12 + 8 + 4);
        a.check_against(&specs()).unwrap();
    }

    #[test]
    fn check_against_reports_mismatch() {
        let mut a = ParamStore::<f64>::initialize(&specs(), 1);
        a.insert("a", Tensor::zeros(3, 3));
        assert!(a.check_against(&specs()).is_err());
        let mut b = ParamStore::<f64>::initialize(&specs(), 1);
        b.insert("z", Tensor::zeros(1, 1));
        assert!(b.check_against(&specs()).is_err());
        assert!(matches!(
            ParamStore::<f64>::new().get("q"),
            Err(Error::MissingParam(_))
        ));
    }
}

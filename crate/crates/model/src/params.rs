//! Named, seeded parameter storage.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{DType, Device, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ModelError, Result};

#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    Ones,
    /// Uniform in ±sqrt(6 / (fan_in + fan_out)) for a `[out, in]` matrix.
    Xavier,
    Uniform(f32),
}

/// Parameters keyed by dotted path. Initial values come from a per-name
/// ChaCha stream so a model's weights depend only on the seed and the name,
/// never on construction order.
#[derive(Clone)]
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    seed: u64,
    device: Device,
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        ParamStore { vars: BTreeMap::new(), seed, device: Device::Cpu }
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    /// Returns the existing parameter or creates it.
    pub fn get(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        if let Some(v) = self.vars.get(name) {
            if v.dims() != shape {
                return Err(ModelError::Config(format!("parameter {name} has shape {:?}, expected {shape:?}", v.dims())));
            }
            return Ok(v.as_tensor().clone());
        }
        let n: usize = shape.iter().product();
        let data: Vec<f32> = match init {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::Xavier | Init::Uniform(_) => {
                let bound = match init {
                    Init::Uniform(b) => b,
                    _ => {
                        let (fan_out, fan_in) = match shape {
                            [o, i] => (*o, *i),
                            [o] => (*o, 1),
                            _ => (n, n),
                        };
                        (6.0 / (fan_in + fan_out) as f32).sqrt()
                    }
                };
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ socq_core::ports::fnv1a(name.as_bytes()));
                (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
            }
        };
        let var = Var::from_tensor(&Tensor::from_vec(data, shape, &self.device)?)?;
        let t = var.as_tensor().clone();
        self.vars.insert(name.to_string(), var);
        Ok(t)
    }

    pub fn var(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.keys().map(String::as_str)
    }

    pub fn all_vars(&self) -> Vec<Var> {
        self.vars.values().cloned().collect()
    }

    /// Overwrites a parameter in place; every model holding it sees the change.
    pub fn set(&self, name: &str, value: &Tensor) -> Result<()> {
        let v = self
            .vars
            .get(name)
            .ok_or_else(|| ModelError::Config(format!("no parameter {name}")))?;
        v.set(&value.to_dtype(DType::F32)?.contiguous()?)?;
        Ok(())
    }

    /// Deep copy of the current values.
    pub fn snapshot(&self) -> Result<BTreeMap<String, Tensor>> {
        self.vars.iter().map(|(k, v)| Ok((k.clone(), v.as_tensor().copy()?))).collect()
    }

    pub fn restore(&self, snap: &BTreeMap<String, Tensor>) -> Result<()> {
        for (k, t) in snap {
            self.set(k, t)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let map: HashMap<String, Tensor> = self.vars.iter().map(|(k, v)| (k.clone(), v.as_tensor().clone())).collect();
        candle_core::safetensors::save(&map, path)?;
        Ok(())
    }

    /// Store pre-populated with saved tensors; `get` then returns them.
    pub fn load(path: &Path, seed: u64) -> Result<Self> {
        let mut store = ParamStore::new(seed);
        for (k, t) in candle_core::safetensors::load(path, &store.device)? {
            store.vars.insert(k, Var::from_tensor(&t.to_dtype(DType::F32)?)?);
        }
        Ok(store)
    }

    pub fn num_parameters(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_depends_on_name_and_seed_only() {
        let mut a = ParamStore::new(5);
        let mut b = ParamStore::new(5);
        let x1 = a.get("x", &[3, 4], Init::Xavier).unwrap();
        b.get("y", &[2], Init::Xavier).unwrap();
        let x2 = b.get("x", &[3, 4], Init::Xavier).unwrap();
        assert_eq!(x1.to_vec2::<f32>().unwrap(), x2.to_vec2::<f32>().unwrap());
        let mut c = ParamStore::new(6);
        assert_ne!(c.get("x", &[3, 4], Init::Xavier).unwrap().to_vec2::<f32>().unwrap(), x1.to_vec2::<f32>().unwrap());
        assert!(a.get("x", &[4, 3], Init::Xavier).is_err());
    }

    #[test]
    fn set_is_visible_through_clones() {
        let mut s = ParamStore::new(1);
        let t = s.get("w", &[2], Init::Zeros).unwrap();
        s.set("w", &Tensor::new(&[1f32, 2.0], s.device()).unwrap()).unwrap();
        assert_eq!(t.to_vec1::<f32>().unwrap(), [1.0, 2.0]);
        let snap = s.snapshot().unwrap();
        s.set("w", &Tensor::new(&[5f32, 5.0], s.device()).unwrap()).unwrap();
        s.restore(&snap).unwrap();
        assert_eq!(t.to_vec1::<f32>().unwrap(), [1.0, 2.0]);
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = ParamStore::new(1);
        let w = s.get("a.w", &[2, 3], Init::Xavier).unwrap();
        s.save(&dir.path().join("w.safetensors")).unwrap();
        let mut back = ParamStore::load(&dir.path().join("w.safetensors"), 99).unwrap();
        let w2 = back.get("a.w", &[2, 3], Init::Zeros).unwrap();
        assert_eq!(w.to_vec2::<f32>().unwrap(), w2.to_vec2::<f32>().unwrap());
    }
}

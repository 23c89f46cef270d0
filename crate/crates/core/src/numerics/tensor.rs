//! Dense tensors, named parameter sets with shared storage, and the
//! checkpoint container.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Header line of every parameter checkpoint.
pub const CHECKPOINT_MAGIC: &str = "LEMMAFORGE-CKPT-1";

/// Dense row-major real array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidInput(format!(
                "tensor dimensions must be positive, got {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(Error::InvalidInput(format!(
                "shape {shape:?} needs {expected} values, got {}",
                values.len()
            )));
        }
        Ok(Tensor {
            shape,
            values,
            requires_grad: true,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor::new(shape, vec![0.0; n]).expect("positive shape")
    }

    /// Uniform in `[-sqrt(1/fan_in), sqrt(1/fan_in)]`, where fan-in is the
    /// last dimension.
    pub fn fan_in_uniform<R: Rng + ?Sized>(shape: Vec<usize>, rng: &mut R) -> Self {
        let fan_in = *shape.last().expect("non-empty shape") as f64;
        let bound = (1.0 / fan_in).sqrt();
        let n: usize = shape.iter().product();
        let values = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
        Tensor::new(shape, values).expect("positive shape")
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of rows when viewed as a matrix (first dimension).
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Number of columns when viewed as a matrix (product of the trailing
    /// dimensions; 1 for vectors).
    pub fn cols(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.values[i * c..(i + 1) * c]
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, flag: bool) {
        self.requires_grad = flag;
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    pub fn accumulate_grad(&mut self, grad: &[f64]) {
        assert_eq!(grad.len(), self.values.len(), "gradient shape mismatch");
        match &mut self.grad {
            Some(g) => g.iter_mut().zip(grad).for_each(|(a, b)| *a += b),
            None => self.grad = Some(grad.to_vec()),
        }
    }
}

/// Handle to a storage slot of a [`ParameterSet`]. Aliased names share a
/// handle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named collection of tensors. Several names may refer to the same
/// storage; such shared entries receive summed gradients.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterSet {
    storage: Vec<Tensor>,
    names: BTreeMap<String, ParamId>,
    primary_names: Vec<String>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor) -> Result<ParamId> {
        check_name(name)?;
        if self.names.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter `{name}`")));
        }
        let id = ParamId(self.storage.len());
        self.storage.push(tensor);
        self.names.insert(name.to_owned(), id);
        self.primary_names.push(name.to_owned());
        Ok(id)
    }

    /// Register `name` as another name for the storage of `existing`.
    pub fn alias(&mut self, name: &str, existing: &str) -> Result<ParamId> {
        check_name(name)?;
        let id = self
            .id(existing)
            .ok_or_else(|| Error::Config(format!("unknown parameter `{existing}`")))?;
        if self.names.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter `{name}`")));
        }
        self.names.insert(name.to_owned(), id);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|id| &self.storage[id.0])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        let id = self.id(name)?;
        Some(&mut self.storage[id.0])
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor {
        &self.storage[id.0]
    }

    pub fn tensor_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.storage[id.0]
    }

    /// Name under which the storage slot was first inserted.
    pub fn primary_name(&self, id: ParamId) -> &str {
        &self.primary_names[id.0]
    }

    /// All names, including aliases, in lexicographic order.
    pub fn names(&self) -> impl Iterator<Item = (&str, ParamId)> {
        self.names.iter().map(|(n, id)| (n.as_str(), *id))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.storage.len()).map(ParamId)
    }

    /// Number of distinct storage slots.
    pub fn storage_len(&self) -> usize {
        self.storage.len()
    }

    /// Total number of scalar parameters over distinct storage.
    pub fn scalar_count(&self) -> usize {
        self.storage.iter().map(Tensor::len).sum()
    }

    pub fn zero_grads(&mut self) {
        self.storage.iter_mut().for_each(Tensor::zero_grad);
    }

    pub fn accumulate(&mut self, grads: &Gradients) {
        for (t, g) in self.storage.iter_mut().zip(&grads.grads) {
            if t.requires_grad && g.iter().any(|&v| v != 0.0) {
                t.accumulate_grad(g);
            }
        }
    }

    /// Order-sensitive checksum over all parameter values.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in &self.storage {
            for v in &t.values {
                h ^= v.to_bits();
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }

    /// Serialize to the checkpoint container.
    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> Result<()> {
        let mut offsets = Vec::with_capacity(self.storage.len());
        let mut offset = 0usize;
        for t in &self.storage {
            offsets.push(offset);
            offset += t.len() * 8;
        }

        writeln!(out, "{CHECKPOINT_MAGIC}")?;
        writeln!(out, "{}", self.names.len())?;
        for (name, id) in &self.names {
            let t = &self.storage[id.0];
            let shape: Vec<String> = t.shape.iter().map(ToString::to_string).collect();
            writeln!(out, "{name}\tf64\t{}\t{}", shape.join(","), offsets[id.0])?;
        }
        for t in &self.storage {
            for v in &t.values {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Read a checkpoint container. Names sharing a byte offset become
    /// aliases of one storage slot.
    pub fn read_checkpoint<R: BufRead>(mut input: R) -> Result<Self> {
        let mut line = String::new();
        input.read_line(&mut line)?;
        if line.trim_end() != CHECKPOINT_MAGIC {
            return Err(Error::Format(format!(
                "expected header {CHECKPOINT_MAGIC}, found {:?}",
                line.trim_end()
            )));
        }
        line.clear();
        input.read_line(&mut line)?;
        let count: usize = line
            .trim()
            .parse()
            .map_err(|_| Error::Format("bad manifest entry count".into()))?;

        struct Entry {
            name: String,
            shape: Vec<usize>,
            offset: usize,
        }
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            line.clear();
            input.read_line(&mut line)?;
            let cols: Vec<&str> = line.trim_end_matches('\n').split('\t').collect();
            if cols.len() != 4 {
                return Err(Error::Format(format!("bad manifest line {line:?}")));
            }
            if cols[1] != "f64" {
                return Err(Error::Format(format!("unsupported dtype {}", cols[1])));
            }
            let shape = cols[2]
                .split(',')
                .map(str::parse)
                .collect::<std::result::Result<Vec<usize>, _>>()
                .map_err(|_| Error::Format(format!("bad shape {:?}", cols[2])))?;
            let offset = cols[3]
                .parse()
                .map_err(|_| Error::Format(format!("bad offset {:?}", cols[3])))?;
            entries.push(Entry {
                name: cols[0].to_owned(),
                shape,
                offset,
            });
        }

        let mut payload = Vec::new();
        input.read_to_end(&mut payload)?;

        // Storage order follows byte offsets; the first name at an offset
        // owns the storage, later names alias it.
        entries.sort_by(|a, b| a.offset.cmp(&b.offset).then(a.name.cmp(&b.name)));
        let mut params = ParameterSet::new();
        let mut owner_at: BTreeMap<usize, String> = BTreeMap::new();
        for e in entries {
            if let Some(owner) = owner_at.get(&e.offset) {
                if params.get(owner).map(Tensor::shape) != Some(e.shape.as_slice()) {
                    return Err(Error::Format(format!(
                        "alias `{}` disagrees in shape with `{owner}`",
                        e.name
                    )));
                }
                params.alias(&e.name, owner)?;
                continue;
            }
            let n: usize = e.shape.iter().product();
            let end = e.offset + n * 8;
            if end > payload.len() {
                return Err(Error::Format(format!("payload truncated at `{}`", e.name)));
            }
            let values = payload[e.offset..end]
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect();
            params.insert(&e.name, Tensor::new(e.shape, values)?)?;
            owner_at.insert(e.offset, e.name);
        }
        Ok(params)
    }
}

fn check_name(name: &str) -> Result<()> {
    if name.is_empty() || name.contains(['\t', '\n']) {
        return Err(Error::Config(format!("invalid parameter name {name:?}")));
    }
    Ok(())
}

/// Dense gradient buffers, one per storage slot of a parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub(crate) grads: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(params: &ParameterSet) -> Self {
        Gradients {
            grads: params.storage.iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.grads[id.0]
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.grads
            .iter_mut()
            .flatten()
            .for_each(|v| *v *= factor);
    }

    pub fn global_norm(&self) -> f64 {
        self.grads
            .iter()
            .flatten()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescale so that the global norm is at most `max_norm`. Returns the
    /// norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm.is_finite() {
            self.scale(max_norm / norm);
        }
        norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match_values() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![0, 3], vec![]).is_err());
    }

    #[test]
    fn alias_shares_storage() {
        let mut ps = ParameterSet::new();
        ps.insert("lm.fwd", Tensor::zeros(vec![2, 2])).unwrap();
        ps.alias("lm.bwd", "lm.fwd").unwrap();
        ps.get_mut("lm.fwd").unwrap().values_mut()[3] = 7.0;
        assert_eq!(ps.get("lm.bwd").unwrap().values()[3], 7.0);
        assert_eq!(ps.storage_len(), 1);
    }

    #[test]
    fn checkpoint_roundtrip_keeps_aliases() {
        let mut ps = ParameterSet::new();
        ps.insert("a", Tensor::new(vec![2], vec![1.5, -2.0]).unwrap())
            .unwrap();
        ps.insert("b", Tensor::new(vec![1, 3], vec![0.1, 0.2, 0.3]).unwrap())
            .unwrap();
        ps.alias("c", "b").unwrap();

        let mut buf = Vec::new();
        ps.write_checkpoint(&mut buf).unwrap();
        assert!(buf.starts_with(b"LEMMAFORGE-CKPT-1\n"));

        let back = ParameterSet::read_checkpoint(&buf[..]).unwrap();
        assert_eq!(back.storage_len(), 2);
        assert_eq!(back.id("b"), back.id("c"));
        assert_eq!(back.get("a").unwrap().values(), &[1.5, -2.0]);
        assert_eq!(back.get("c").unwrap().shape(), &[1, 3]);
        assert_eq!(back.checksum(), ps.checksum());
    }

    #[test]
    fn bad_header_is_rejected() {
        let err = ParameterSet::read_checkpoint(&b"NOPE\n0\n"[..]).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn clipping_caps_norm() {
        let mut ps = ParameterSet::new();
        ps.insert("w", Tensor::zeros(vec![2])).unwrap();
        let mut g = Gradients::zeros_like(&ps);
        g.get_mut(ParamId(0)).copy_from_slice(&[3.0, 4.0]);
        let before = g.clip_global_norm(1.0);
        assert_eq!(before, 5.0);
        assert!((g.global_norm() - 1.0).abs() < 1e-12);
    }
}

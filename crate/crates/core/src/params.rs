//! Named parameter storage, binding onto a tape, and checkpoint files.
//!
//! Checkpoint layout (UTF-8 text, one record per line):
//!
//! ```text
//! eirehn-params 1
//! <name> <rank> <dim_1> ... <dim_rank> <v_1> ... <v_n>
//! ```
//!
//! Values are written in Rust's shortest round-trip notation, so reading a
//! file back reproduces every `f64` bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tape::{Gradients, Tape, Var};
use crate::tensor::Tensor;

const MAGIC: &str = "eirehn-params 1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

/// Parameters of a store recorded as leaves on one tape.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor under a unique name.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(
            !self.names.contains(&name),
            "duplicate parameter name {name}"
        );
        self.names.push(name);
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    /// Registers a tensor with entries drawn from `U(-scale, scale)`.
    pub fn add_uniform(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        scale: f64,
        rng: &mut Rng,
    ) -> ParamId {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.uniform_in(-scale, scale)).collect();
        self.add(name, Tensor::new(shape.to_vec(), data).expect("shape"))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn set(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        let current = &self.tensors[id.0];
        if current.shape() != value.shape() {
            return Err(Error::shape("set", current.shape(), value.shape()));
        }
        self.tensors[id.0] = value;
        Ok(())
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    /// Total number of scalar entries.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn count_of(&self, ids: &[ParamId]) -> usize {
        ids.iter().map(|&id| self.get(id).len()).sum()
    }

    pub fn bind(&self, tape: &mut Tape) -> Bound {
        Bound {
            vars: self.tensors.iter().map(|t| tape.leaf(t.clone())).collect(),
        }
    }

    /// Gradients of every parameter, zeros where the loss does not depend on it.
    pub fn gradients(&self, bound: &Bound, grads: &Gradients) -> Vec<Tensor> {
        bound.vars.iter().map(|&v| grads.wrt(v)).collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from(MAGIC);
        out.push('\n');
        for (name, t) in self.names.iter().zip(&self.tensors) {
            write!(out, "{name} {}", t.rank()).unwrap();
            for d in t.shape() {
                write!(out, " {d}").unwrap();
            }
            for v in t.data() {
                write!(out, " {v:?}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(MAGIC) {
            return Err(Error::parse("checkpoint", format!("missing header `{MAGIC}`")));
        }
        let mut store = ParamStore::new();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let ctx = || format!("checkpoint line {}", lineno + 2);
            let mut fields = line.split_ascii_whitespace();
            let name = fields.next().ok_or_else(|| Error::parse(ctx(), "empty record"))?;
            let rank: usize = next_parsed(&mut fields, ctx)?;
            let shape = (0..rank)
                .map(|_| next_parsed::<usize>(&mut fields, ctx))
                .collect::<Result<Vec<_>>>()?;
            let data = fields
                .map(|f| f.parse::<f64>().map_err(|e| Error::parse(ctx(), e)))
                .collect::<Result<Vec<_>>>()?;
            let tensor = Tensor::new(shape, data).map_err(|e| Error::parse(ctx(), e))?;
            if store.find(name).is_some() {
                return Err(Error::parse(ctx(), format!("duplicate name {name}")));
            }
            store.add(name, tensor);
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Copies values from `other` for every name both stores share with equal shapes.
    pub fn load_values_from(&mut self, other: &ParamStore) -> Result<()> {
        for id in self.ids().collect::<Vec<_>>() {
            let name = self.names[id.0].clone();
            let src = other
                .find(&name)
                .ok_or_else(|| Error::Integrity(format!("checkpoint lacks parameter {name}")))?;
            self.set(id, other.get(src).clone())?;
        }
        Ok(())
    }
}

fn next_parsed<'a, T: std::str::FromStr>(
    fields: &mut impl Iterator<Item = &'a str>,
    ctx: impl Fn() -> String,
) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let raw = fields
        .next()
        .ok_or_else(|| Error::parse(ctx(), "truncated record"))?;
    raw.parse::<T>().map_err(|e| Error::parse(ctx(), e))
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Handle to a buffer inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BufferKind {
    /// Learnable weights; counted by [`ParamStore::param_count`].
    Param,
    /// Non-learnable state such as batch-norm running statistics.
    State,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BufferMeta {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: BufferKind,
    pub trainable: bool,
}

impl BufferMeta {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Named parameter buffers, each paired with a gradient buffer of the same
/// shape.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    meta: Vec<BufferMeta>,
    values: Vec<Vec<f64>>,
    grads: Vec<Vec<f64>>,
}

/// Read access to buffer values during a backward pass.
pub struct Values<'a>(&'a [Vec<f64>]);

impl Values<'_> {
    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.0[id.0]
    }
}

/// Write access to gradient buffers during a backward pass.
pub struct Grads<'a>(&'a mut [Vec<f64>]);

impl Grads<'_> {
    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.0[id.0]
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, name: &str, shape: &[usize], values: Vec<f64>, kind: BufferKind) -> ParamId {
        assert_eq!(
            shape.iter().product::<usize>(),
            values.len(),
            "buffer `{name}` shape/value mismatch"
        );
        assert!(self.find(name).is_none(), "duplicate buffer `{name}`");
        let id = ParamId(self.meta.len());
        self.grads.push(vec![0.0; values.len()]);
        self.values.push(values);
        self.meta.push(BufferMeta {
            name: name.to_string(),
            shape: shape.to_vec(),
            kind,
            trainable: kind == BufferKind::Param,
        });
        id
    }

    pub fn add_param(&mut self, name: &str, shape: &[usize], values: Vec<f64>) -> ParamId {
        self.push(name, shape, values, BufferKind::Param)
    }

    pub fn add_state(&mut self, name: &str, shape: &[usize], values: Vec<f64>) -> ParamId {
        self.push(name, shape, values, BufferKind::State)
    }

    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.meta.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.meta.iter().position(|m| m.name == name).map(ParamId)
    }

    pub fn meta(&self, id: ParamId) -> &BufferMeta {
        &self.meta[id.0]
    }

    pub fn metas(&self) -> &[BufferMeta] {
        &self.meta
    }

    pub fn value(&self, id: ParamId) -> &[f64] {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        &self.grads[id.0]
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.grads[id.0]
    }

    pub fn split(&mut self) -> (Values<'_>, Grads<'_>) {
        (Values(&self.values), Grads(&mut self.grads))
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    /// Sets the trainable flag of every learnable buffer whose name starts
    /// with `prefix`. Returns how many buffers changed.
    pub fn set_trainable(&mut self, prefix: &str, trainable: bool) -> usize {
        let mut n = 0;
        for m in &mut self.meta {
            if m.kind == BufferKind::Param && m.name.starts_with(prefix) {
                m.trainable = trainable;
                n += 1;
            }
        }
        n
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.meta[id.0].trainable
    }

    /// Number of learnable scalars (running statistics excluded).
    pub fn param_count(&self) -> usize {
        self.meta
            .iter()
            .filter(|m| m.kind == BufferKind::Param)
            .map(BufferMeta::len)
            .sum()
    }

    pub fn trainable_count(&self) -> usize {
        self.meta
            .iter()
            .filter(|m| m.kind == BufferKind::Param && m.trainable)
            .map(BufferMeta::len)
            .sum()
    }

    /// Copy of every buffer value, e.g. for best-epoch restoration.
    pub fn snapshot(&self) -> Vec<Vec<f64>> {
        self.values.clone()
    }

    pub fn restore(&mut self, snapshot: &[Vec<f64>]) -> Result<()> {
        if snapshot.len() != self.values.len() || snapshot.iter().zip(&self.values).any(|(a, b)| a.len() != b.len()) {
            return Err(Error::Checkpoint("snapshot layout does not match store".into()));
        }
        for (dst, src) in self.values.iter_mut().zip(snapshot) {
            dst.copy_from_slice(src);
        }
        Ok(())
    }

    /// Copies buffer values from `other` for every buffer whose name (after
    /// adding `prefix`) exists here. Shapes must agree.
    pub fn copy_matching(&mut self, other: &ParamStore, prefix: &str) -> Result<usize> {
        let mut n = 0;
        for (m, v) in other.meta.iter().zip(&other.values) {
            let name = format!("{prefix}{}", m.name);
            if let Some(id) = self.find(&name) {
                if self.meta[id.0].shape != m.shape {
                    return Err(Error::Checkpoint(format!(
                        "buffer `{name}` shape {:?} != {:?}",
                        self.meta[id.0].shape, m.shape
                    )));
                }
                self.values[id.0].copy_from_slice(v);
                n += 1;
            }
        }
        Ok(n)
    }

    pub(crate) fn values_raw(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub(crate) fn from_parts(meta: Vec<BufferMeta>, values: Vec<Vec<f64>>) -> Self {
        let grads = values.iter().map(|v| vec![0.0; v.len()]).collect();
        Self { meta, values, grads }
    }
}

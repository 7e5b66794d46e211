use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

/// Handle to one slot of a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SlotId(usize);

impl SlotId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A named parameter tensor plus its gradient accumulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub name: String,
    pub value: Matrix,
    #[serde(skip, default = "empty_matrix")]
    pub grad: Matrix,
}

fn empty_matrix() -> Matrix {
    Matrix::zeros(0, 0)
}

/// All trainable weights of a model, addressed by [`SlotId`] or unique name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    slots: Vec<Slot>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> Result<SlotId> {
        let name = name.into();
        if self.find(&name).is_some() {
            return Err(Error::InvalidInput(format!(
                "duplicate parameter slot `{name}`"
            )));
        }
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("initial value of slot `{name}`")));
        }
        let (r, c) = value.shape();
        self.slots.push(Slot {
            name,
            value,
            grad: Matrix::zeros(r, c),
        });
        Ok(SlotId(self.slots.len() - 1))
    }

    pub fn find(&self, name: &str) -> Option<SlotId> {
        self.slots.iter().position(|s| s.name == name).map(SlotId)
    }

    pub fn slot(&self, id: SlotId) -> &Slot {
        &self.slots[id.0]
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn value(&self, id: SlotId) -> &Matrix {
        &self.slots[id.0].value
    }

    pub fn value_mut(&mut self, id: SlotId) -> &mut Matrix {
        &mut self.slots[id.0].value
    }

    pub fn grad(&self, id: SlotId) -> &Matrix {
        &self.slots[id.0].grad
    }

    pub fn grad_mut(&mut self, id: SlotId) -> &mut Matrix {
        &mut self.slots[id.0].grad
    }

    /// Total number of scalar parameters.
    pub fn num_params(&self) -> usize {
        self.slots.iter().map(|s| s.value.as_slice().len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for s in &mut self.slots {
            s.grad.fill(0.0);
        }
    }

    /// Rebuilds gradient buffers after deserialization.
    pub fn reset_grads(&mut self) {
        for s in &mut self.slots {
            let (r, c) = s.value.shape();
            s.grad = Matrix::zeros(r, c);
        }
    }

    /// Overwrites slot values from `other`, matching by name and shape.
    pub fn load_values(&mut self, other: &ParamStore) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::Schema(format!(
                "parameter slot count {} does not match model ({})",
                other.len(),
                self.len()
            )));
        }
        for src in &other.slots {
            let id = self
                .find(&src.name)
                .ok_or_else(|| Error::Schema(format!("unknown parameter slot `{}`", src.name)))?;
            let dst = &mut self.slots[id.0];
            if dst.value.shape() != src.value.shape() {
                return Err(Error::Schema(format!(
                    "slot `{}` has shape {:?}, model expects {:?}",
                    src.name,
                    src.value.shape(),
                    dst.value.shape()
                )));
            }
            if !src.value.is_finite() {
                return Err(Error::NonFinite(format!("slot `{}`", src.name)));
            }
            dst.value = src.value.clone();
        }
        Ok(())
    }

    pub(crate) fn slots_mut(&mut self) -> &mut [Slot] {
        &mut self.slots
    }

    /// Flat (slot, index) addressing, used by the gradient checker.
    pub(crate) fn scalar_mut(&mut self, slot: usize, idx: usize) -> &mut f64 {
        &mut self.slots[slot].value.as_mut_slice()[idx]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let mut s = ParamStore::new();
        s.add("w", Matrix::zeros(2, 2)).unwrap();
        assert!(s.add("w", Matrix::zeros(1, 1)).is_err());
        assert_eq!(s.num_params(), 4);
        assert_eq!(s.grad(s.find("w").unwrap()).shape(), (2, 2));
    }

    #[test]
    fn load_values_checks_shapes() {
        let mut a = ParamStore::new();
        a.add("w", Matrix::zeros(2, 2)).unwrap();
        let mut b = ParamStore::new();
        b.add("w", Matrix::zeros(2, 1)).unwrap();
        assert!(a.load_values(&b).is_err());
        let mut c = ParamStore::new();
        c.add("w", Matrix::identity(2)).unwrap();
        a.load_values(&c).unwrap();
        assert_eq!(a.value(SlotId(0)), &Matrix::identity(2));
    }
}

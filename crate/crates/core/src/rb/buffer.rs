use nalgebra::DMatrix;
use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Ring buffer of the most recent `(μ, reduced primal coefficients)` pairs.
#[derive(Debug, Clone)]
pub struct TrainingBuffer {
    capacity: usize,
    entries: VecDeque<(Vec<f64>, DMatrix<f64>)>,
    dirty: bool,
}

impl TrainingBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "training buffer needs positive capacity");
        TrainingBuffer { capacity, entries: VecDeque::with_capacity(capacity), dirty: false }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_dirty(&self) -> bool {
        self.dirty
    }

    pub fn mark_clean(&mut self) {
        self.dirty = false;
    }

    /// Appends a pair, evicting the oldest one at capacity. All entries must
    /// share the coefficient dimension.
    pub fn push(&mut self, mu: Vec<f64>, coeffs: DMatrix<f64>) -> Result<()> {
        if let Some((_, first)) = self.entries.front() {
            if first.shape() != coeffs.shape() {
                return Err(Error::DimensionMismatch(format!(
                    "training entry {:?} vs buffer {:?}",
                    coeffs.shape(),
                    first.shape()
                )));
            }
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((mu, coeffs));
        self.dirty = true;
        Ok(())
    }

    pub fn clear(&mut self) {
        if !self.entries.is_empty() {
            self.dirty = true;
        }
        self.entries.clear();
    }

    /// Entries in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = &(Vec<f64>, DMatrix<f64>)> {
        self.entries.iter()
    }
}

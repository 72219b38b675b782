//! Vector-valued discrete fields over a block region.
//!
//! A `KineticField` stores one coefficient per (ordinate, block, fine node).
//! The flat layout is ordinate-major, then block-major (ascending block id
//! within the region), then node row-major — the same order everywhere in
//! the crate, so nodal vectors can be exchanged with assembled operators
//! without re-indexing.

use crate::error::{Error, Result};
use crate::mesh::NestedMesh;
use crate::ordinates::OrdinateSet;

#[derive(Debug, Clone, PartialEq)]
pub struct KineticField {
    m: usize,
    blocks: Vec<usize>,
    nodes_per_block: usize,
    data: Vec<f64>,
}

impl KineticField {
    /// Zero field over the given blocks (sorted ascending internally).
    pub fn zeros(mesh: &NestedMesh, m: usize, blocks: &[usize]) -> Self {
        let mut blocks = blocks.to_vec();
        blocks.sort_unstable();
        blocks.dedup();
        let nodes_per_block = mesh.nodes_per_block();
        let data = vec![0.0; m * blocks.len() * nodes_per_block];
        KineticField { m, blocks, nodes_per_block, data }
    }

    /// Zero field over the whole domain.
    pub fn zeros_domain(mesh: &NestedMesh, m: usize) -> Self {
        let blocks: Vec<usize> = (0..mesh.n_blocks()).collect();
        Self::zeros(mesh, m, &blocks)
    }

    /// Field sampled from a function of (ordinate, block id, x, y).
    pub fn from_fn(
        mesh: &NestedMesh,
        m: usize,
        blocks: &[usize],
        mut f: impl FnMut(usize, usize, f64, f64) -> f64,
    ) -> Self {
        let mut field = Self::zeros(mesh, m, blocks);
        for ord in 0..m {
            for bpos in 0..field.blocks.len() {
                let block = field.blocks[bpos];
                for node in 0..field.nodes_per_block {
                    let (x, y) = mesh.node_position(block, node);
                    let idx = field.index(ord, bpos, node);
                    field.data[idx] = f(ord, block, x, y);
                }
            }
        }
        field
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Region blocks, ascending.
    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }

    pub fn nodes_per_block(&self) -> usize {
        self.nodes_per_block
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Flat index of (ordinate, block position, node).
    #[inline]
    pub fn index(&self, ord: usize, bpos: usize, node: usize) -> usize {
        (ord * self.blocks.len() + bpos) * self.nodes_per_block + node
    }

    #[inline]
    pub fn get(&self, ord: usize, bpos: usize, node: usize) -> f64 {
        self.data[self.index(ord, bpos, node)]
    }

    #[inline]
    pub fn set(&mut self, ord: usize, bpos: usize, node: usize, value: f64) {
        let idx = self.index(ord, bpos, node);
        self.data[idx] = value;
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Position of a block id within the region.
    pub fn block_position(&self, block: usize) -> Option<usize> {
        self.blocks.binary_search(&block).ok()
    }

    /// All components of one block as an ordinate-major nodal vector.
    pub fn block_values(&self, bpos: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.m * self.nodes_per_block);
        for ord in 0..self.m {
            let start = self.index(ord, bpos, 0);
            out.extend_from_slice(&self.data[start..start + self.nodes_per_block]);
        }
        out
    }

    /// Overwrite one block from an ordinate-major nodal vector.
    pub fn set_block_values(&mut self, bpos: usize, values: &[f64]) {
        assert_eq!(values.len(), self.m * self.nodes_per_block);
        for ord in 0..self.m {
            let start = self.index(ord, bpos, 0);
            self.data[start..start + self.nodes_per_block]
                .copy_from_slice(&values[ord * self.nodes_per_block..(ord + 1) * self.nodes_per_block]);
        }
    }

    /// Restriction to a sub-region (blocks must be part of this field).
    pub fn restrict(&self, mesh: &NestedMesh, blocks: &[usize]) -> Result<KineticField> {
        let mut out = KineticField::zeros(mesh, self.m, blocks);
        for bpos_out in 0..out.blocks.len() {
            let block = out.blocks[bpos_out];
            let bpos_in = self
                .block_position(block)
                .ok_or_else(|| Error::invalid(format!("block {block} not in field region")))?;
            for ord in 0..self.m {
                for node in 0..self.nodes_per_block {
                    let v = self.get(ord, bpos_in, node);
                    out.set(ord, bpos_out, node, v);
                }
            }
        }
        Ok(out)
    }

    /// Discrete angular average per (block position, node).
    pub fn angular_average(&self, ords: &OrdinateSet) -> Vec<f64> {
        assert_eq!(ords.len(), self.m);
        let mut avg = vec![0.0; self.blocks.len() * self.nodes_per_block];
        for ord in 0..self.m {
            let w = ords.weight(ord);
            for bpos in 0..self.blocks.len() {
                for node in 0..self.nodes_per_block {
                    avg[bpos * self.nodes_per_block + node] += w * self.get(ord, bpos, node);
                }
            }
        }
        avg
    }

    /// Same-layout check.
    pub fn layout_matches(&self, other: &KineticField) -> bool {
        self.m == other.m
            && self.blocks == other.blocks
            && self.nodes_per_block == other.nodes_per_block
    }

    pub fn scaled(&self, c: f64) -> KineticField {
        let mut out = self.clone();
        for v in out.data.iter_mut() {
            *v *= c;
        }
        out
    }

    pub fn sub(&self, other: &KineticField) -> Result<KineticField> {
        if !self.layout_matches(other) {
            return Err(Error::invalid("field layouts differ"));
        }
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(other.data.iter()) {
            *a -= b;
        }
        Ok(out)
    }

    pub fn add_scaled(&mut self, other: &KineticField, c: f64) -> Result<()> {
        if !self.layout_matches(other) {
            return Err(Error::invalid("field layouts differ"));
        }
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += c * b;
        }
        Ok(())
    }
}

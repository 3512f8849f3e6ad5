//! Partitions of a finite ground set `0..n`, ordered by refinement.

use std::collections::HashMap;
use std::hash::Hash;

use crate::error::{Error, Result};

/// A partition stored as canonical block labels: blocks are numbered in order of their
/// smallest element, so equal partitions compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    labels: Vec<usize>,
}

struct DisjointSets {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets { parent: (0..n).collect(), rank: vec![0; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

impl Partition {
    /// Elements with equal keys share a block.
    pub fn from_keys<K: Eq + Hash>(keys: impl IntoIterator<Item = K>) -> Self {
        let mut seen = HashMap::new();
        let labels = keys
            .into_iter()
            .map(|k| {
                let next = seen.len();
                *seen.entry(k).or_insert(next)
            })
            .collect();
        Partition { labels }
    }

    pub fn from_labels(labels: &[usize]) -> Self {
        Self::from_keys(labels.iter().copied())
    }

    pub fn from_blocks(n: usize, blocks: &[Vec<usize>]) -> Result<Self> {
        let mut labels = vec![usize::MAX; n];
        for (b, block) in blocks.iter().enumerate() {
            for &x in block {
                if x >= n || labels[x] != usize::MAX {
                    return Err(Error::IndexOutOfRange(format!("element {x} repeated or outside 0..{n}")));
                }
                labels[x] = b;
            }
        }
        if labels.contains(&usize::MAX) {
            return Err(Error::IndexOutOfRange("blocks do not cover the ground set".into()));
        }
        Ok(Self::from_labels(&labels))
    }

    /// Every element alone: the identity relation.
    pub fn discrete(n: usize) -> Self {
        Partition { labels: (0..n).collect() }
    }

    /// One block: the total relation.
    pub fn single_block(n: usize) -> Self {
        Partition { labels: vec![0; n] }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_blocks(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn same_block(&self, a: usize, b: usize) -> bool {
        self.labels[a] == self.labels[b]
    }

    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_blocks()];
        for (x, &b) in self.labels.iter().enumerate() {
            out[b].push(x);
        }
        out
    }

    fn same_ground(&self, other: &Partition) -> Result<()> {
        if self.len() == other.len() {
            Ok(())
        } else {
            Err(Error::GroundSetMismatch(self.len(), other.len()))
        }
    }

    /// True if every block of `self` lies inside a block of `other` (`self ⊆ other` as
    /// relations).
    pub fn refines(&self, other: &Partition) -> Result<bool> {
        self.same_ground(other)?;
        let mut image: Vec<Option<usize>> = vec![None; self.num_blocks()];
        for (a, b) in self.labels.iter().zip(&other.labels) {
            match image[*a] {
                None => image[*a] = Some(*b),
                Some(prev) if prev != *b => return Ok(false),
                Some(_) => {}
            }
        }
        Ok(true)
    }

    /// Common refinement: blocks are the nonempty pairwise intersections.
    pub fn meet(&self, other: &Partition) -> Result<Partition> {
        self.same_ground(other)?;
        Ok(Partition::from_keys(self.labels.iter().zip(&other.labels)))
    }

    /// Finest common coarsening: connected components of the union of both relations.
    pub fn join(&self, other: &Partition) -> Result<Partition> {
        self.same_ground(other)?;
        let mut sets = DisjointSets::new(self.len());
        for labels in [&self.labels, &other.labels] {
            let mut first: HashMap<usize, usize> = HashMap::new();
            for (x, &b) in labels.iter().enumerate() {
                let root = *first.entry(b).or_insert(x);
                sets.union(root, x);
            }
        }
        let keys: Vec<usize> = (0..self.len()).map(|x| sets.find(x)).collect();
        Ok(Partition::from_keys(keys))
    }
}

pub fn partition_meet(a: &Partition, b: &Partition) -> Result<Partition> {
    a.meet(b)
}

pub fn partition_join(a: &Partition, b: &Partition) -> Result<Partition> {
    a.join(b)
}

//! Feature sets, labeled feature partitions and their enumeration.
//!
//! A labeled partition splits the feature universe into disjoint non-empty
//! blocks, each tagged good or bad. Partitions are kept in canonical form
//! (blocks ordered by their smallest feature inside each label list) so that
//! equal contents compare and hash equal.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ObfsError, PartitionViolation, Result};

/// Largest universe `enumerate_partitions` accepts unless told otherwise.
pub const DEFAULT_PARTITION_CAP: usize = 12;

/// Largest universe a [`PartitionCode`] can hold (4 bits per feature plus
/// one label bit per block).
pub const MAX_CODED_FEATURES: usize = 12;

const LABEL_SHIFT: u32 = 4 * MAX_CODED_FEATURES as u32;

/// An ascending, duplicate-free set of 0-based feature indices.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureSet(Vec<usize>);

impl FeatureSet {
    pub fn new<I: IntoIterator<Item = usize>>(features: I) -> Self {
        let mut v: Vec<usize> = features.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        FeatureSet(v)
    }

    /// `{0, 1, ..., n - 1}`.
    pub fn range(n: usize) -> Self {
        FeatureSet((0..n).collect())
    }

    pub fn from_mask(mask: u64) -> Self {
        FeatureSet((0..64).filter(|&i| mask >> i & 1 == 1).collect())
    }

    /// Bitmask of the set, if every index is below 64.
    pub fn to_mask(&self) -> Option<u64> {
        self.0
            .iter()
            .try_fold(0u64, |m, &f| (f < 64).then(|| m | 1 << f))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, feature: usize) -> bool {
        self.0.binary_search(&feature).is_ok()
    }

    pub fn min(&self) -> Option<usize> {
        self.0.first().copied()
    }

    pub fn max(&self) -> Option<usize> {
        self.0.last().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn is_subset(&self, other: &FeatureSet) -> bool {
        self.0.iter().all(|&f| other.contains(f))
    }

    pub fn union(&self, other: &FeatureSet) -> FeatureSet {
        FeatureSet::new(self.iter().chain(other.iter()))
    }

    pub fn difference(&self, other: &FeatureSet) -> FeatureSet {
        FeatureSet(self.iter().filter(|&f| !other.contains(f)).collect())
    }
}

impl FromIterator<usize> for FeatureSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        FeatureSet::new(iter)
    }
}

impl<const N: usize> From<[usize; N]> for FeatureSet {
    fn from(v: [usize; N]) -> Self {
        FeatureSet::new(v)
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{x}")?;
        }
        f.write_str("}")
    }
}

/// Label attached to a block of a partition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Good,
    Bad,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Good => "good",
            Role::Bad => "bad",
        })
    }
}

/// An ordered pair (good blocks, bad blocks) in canonical form.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FeaturePartition {
    good: Vec<FeatureSet>,
    bad: Vec<FeatureSet>,
}

fn sort_blocks(blocks: &mut [FeatureSet]) {
    // Empty blocks have no minimum; keep them at the end so validation can
    // still point at them.
    blocks.sort_by_key(|b| (b.min().is_none(), b.min(), b.len()));
}

impl FeaturePartition {
    /// Builds a partition, canonicalizing block order. Validity against a
    /// universe is checked separately by [`validate`].
    pub fn new(good: Vec<FeatureSet>, bad: Vec<FeatureSet>) -> Self {
        let mut p = FeaturePartition { good, bad };
        sort_blocks(&mut p.good);
        sort_blocks(&mut p.bad);
        p
    }

    pub fn canonical(&self) -> Self {
        FeaturePartition::new(self.good.clone(), self.bad.clone())
    }

    pub fn good_blocks(&self) -> &[FeatureSet] {
        &self.good
    }

    pub fn bad_blocks(&self) -> &[FeatureSet] {
        &self.bad
    }

    /// All blocks, good ones first.
    pub fn blocks(&self) -> impl Iterator<Item = (Role, &FeatureSet)> {
        self.good
            .iter()
            .map(|b| (Role::Good, b))
            .chain(self.bad.iter().map(|b| (Role::Bad, b)))
    }

    pub fn block_count(&self) -> usize {
        self.good.len() + self.bad.len()
    }

    /// Union of the good blocks.
    pub fn good_union(&self) -> FeatureSet {
        FeatureSet::new(self.good.iter().flat_map(|b| b.iter()))
    }

    /// Union of all blocks.
    pub fn universe(&self) -> FeatureSet {
        FeatureSet::new(self.blocks().flat_map(|(_, b)| b.iter()))
    }

    /// Role and block of `feature`, if it is covered.
    pub fn locate(&self, feature: usize) -> Option<(Role, &FeatureSet)> {
        self.blocks().find(|(_, b)| b.contains(feature))
    }

    pub fn is_singleton(&self) -> bool {
        self.blocks().all(|(_, b)| b.len() == 1)
    }

    /// Relabels features through `map` (old index -> new index).
    pub fn relabel(&self, map: &[usize]) -> FeaturePartition {
        let remap = |blocks: &[FeatureSet]| -> Vec<FeatureSet> {
            blocks
                .iter()
                .map(|b| b.iter().map(|f| map[f]).collect())
                .collect()
        };
        FeaturePartition::new(remap(&self.good), remap(&self.bad))
    }
}

impl fmt::Display for FeaturePartition {
    /// `G:{0,1}|G:{3};B:{2}|B:{4,5}`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, b) in self.good.iter().enumerate() {
            if i > 0 {
                f.write_str("|")?;
            }
            write!(f, "G:{b}")?;
        }
        f.write_str(";")?;
        for (i, b) in self.bad.iter().enumerate() {
            if i > 0 {
                f.write_str("|")?;
            }
            write!(f, "B:{b}")?;
        }
        Ok(())
    }
}

impl FromStr for FeaturePartition {
    type Err = ObfsError;

    fn from_str(s: &str) -> Result<Self> {
        let err = |message: &str| ObfsError::PartitionSyntax {
            literal: s.to_string(),
            message: message.to_string(),
        };
        let (good_src, bad_src) = s
            .split_once(';')
            .ok_or_else(|| err("missing `;` between good and bad blocks"))?;
        if bad_src.contains(';') {
            return Err(err("more than one `;`"));
        }
        let parse_side = |src: &str, tag: char| -> Result<Vec<FeatureSet>> {
            let src = src.trim();
            if src.is_empty() {
                return Ok(Vec::new());
            }
            src.split('|')
                .map(|tok| {
                    let tok = tok.trim();
                    let body = tok
                        .strip_prefix(tag)
                        .and_then(|t| t.strip_prefix(':'))
                        .ok_or_else(|| err(&format!("block `{tok}` must start with `{tag}:`")))?;
                    let inner = body
                        .strip_prefix('{')
                        .and_then(|t| t.strip_suffix('}'))
                        .ok_or_else(|| err(&format!("block `{tok}` must be braced")))?;
                    let mut feats = Vec::new();
                    if !inner.trim().is_empty() {
                        for x in inner.split(',') {
                            let f = x
                                .trim()
                                .parse::<usize>()
                                .map_err(|_| err(&format!("bad feature index `{}`", x.trim())))?;
                            if feats.contains(&f) {
                                return Err(err(&format!("feature {f} repeated within a block")));
                            }
                            feats.push(f);
                        }
                    }
                    Ok(FeatureSet::new(feats))
                })
                .collect()
        };
        Ok(FeaturePartition::new(
            parse_side(good_src, 'G')?,
            parse_side(bad_src, 'B')?,
        ))
    }
}

/// Checks that `p` covers `universe` with non-empty, pairwise disjoint
/// blocks; returns the first violation found.
pub fn validate(p: &FeaturePartition, universe: &FeatureSet) -> Result<(), PartitionViolation> {
    for (role, blocks) in [(Role::Good, &p.good), (Role::Bad, &p.bad)] {
        if let Some(index) = blocks.iter().position(|b| b.is_empty()) {
            return Err(PartitionViolation::EmptyBlock { role, index });
        }
    }
    let mut seen = FeatureSet::default();
    for (_, block) in p.blocks() {
        for f in block.iter() {
            if !universe.contains(f) {
                return Err(PartitionViolation::Foreign { feature: f });
            }
            if seen.contains(f) {
                return Err(PartitionViolation::Duplicate { feature: f });
            }
            seen = seen.union(&FeatureSet::from([f]));
        }
    }
    match universe.iter().find(|&f| !seen.contains(f)) {
        Some(feature) => Err(PartitionViolation::Missing { feature }),
        None => Ok(()),
    }
}

fn same_universe(p1: &FeaturePartition, p2: &FeaturePartition) -> Result<()> {
    if p1.universe() == p2.universe() {
        Ok(())
    } else {
        Err(ObfsError::UniverseMismatch)
    }
}

/// Every block of `p1` lies inside some block of `p2`, labels ignored.
pub fn is_mesh(p1: &FeaturePartition, p2: &FeaturePartition) -> Result<bool> {
    same_universe(p1, p2)?;
    Ok(p1
        .blocks()
        .all(|(_, b1)| p2.blocks().any(|(_, b2)| b1.is_subset(b2))))
}

/// Good blocks of `p1` nest in good blocks of `p2` and bad in bad.
pub fn is_refinement(p1: &FeaturePartition, p2: &FeaturePartition) -> Result<bool> {
    same_universe(p1, p2)?;
    let nested = |inner: &[FeatureSet], outer: &[FeatureSet]| {
        inner
            .iter()
            .all(|b1| outer.iter().any(|b2| b1.is_subset(b2)))
    };
    Ok(nested(&p1.good, &p2.good) && nested(&p1.bad, &p2.bad))
}

pub fn is_strict_refinement(p1: &FeaturePartition, p2: &FeaturePartition) -> Result<bool> {
    Ok(is_refinement(p1, p2)? && p1 != p2)
}

/// Stirling number of the second kind, S(n, k).
pub fn stirling2(n: usize, k: usize) -> u128 {
    let mut row = vec![0u128; k + 1];
    row[0] = 1;
    for i in 1..=n {
        for j in (1..=k.min(i)).rev() {
            row[j] = j as u128 * row[j] + row[j - 1];
        }
        row[0] = 0;
    }
    row[k]
}

/// Number of labeled partitions of an `n`-feature universe: sum of S(n,k) 2^k.
pub fn labeled_partition_count(n: usize) -> u128 {
    (1..=n).map(|k| stirling2(n, k) << k).sum()
}

/// Walks set partitions of `{0..n}` in restricted-growth-string order.
///
/// Blocks are reported as bitmasks, numbered by first appearance, which is
/// ascending order of their smallest feature.
pub(crate) struct SetPartitions {
    n: usize,
    rgs: Vec<u8>,
    done: bool,
}

impl SetPartitions {
    pub(crate) fn new(n: usize) -> Self {
        SetPartitions {
            n,
            rgs: vec![0; n],
            done: n == 0,
        }
    }

    /// Fills `masks` with the current partition and advances.
    pub(crate) fn next_into(&mut self, masks: &mut Vec<u32>) -> bool {
        if self.done {
            return false;
        }
        masks.clear();
        for (i, &b) in self.rgs.iter().enumerate() {
            let b = b as usize;
            if b == masks.len() {
                masks.push(0);
            }
            masks[b] |= 1 << i;
        }
        self.advance();
        true
    }

    fn advance(&mut self) {
        // Rightmost position that can grow without breaking the restricted
        // growth property (rgs[i] <= 1 + max(rgs[..i])).
        let mut prefix_max = vec![0u8; self.n];
        for i in 1..self.n {
            prefix_max[i] = prefix_max[i - 1].max(self.rgs[i - 1]);
        }
        for i in (1..self.n).rev() {
            if self.rgs[i] <= prefix_max[i] {
                self.rgs[i] += 1;
                for x in &mut self.rgs[i + 1..] {
                    *x = 0;
                }
                return;
            }
        }
        self.done = true;
    }
}

/// Calls `visit(masks, good_bits)` for every labeled partition of `{0..n}`:
/// set partitions in restricted-growth order, then label assignments
/// `good_bits = 0 .. 2^k` where bit `i` marks block `i` good.
pub(crate) fn for_each_labeled(n: usize, mut visit: impl FnMut(&[u32], u32)) {
    let mut parts = SetPartitions::new(n);
    let mut masks = Vec::with_capacity(n);
    while parts.next_into(&mut masks) {
        for good_bits in 0..(1u32 << masks.len()) {
            visit(&masks, good_bits);
        }
    }
}

/// Compact code of a labeled partition of `{0..n}`: each feature's block
/// index in 4-bit nibbles, then one good-flag bit per block above them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PartitionCode(u64);

impl PartitionCode {
    pub(crate) fn from_masks(masks: &[u32], good_bits: u32) -> Self {
        let mut code = 0u64;
        for (b, &m) in masks.iter().enumerate() {
            let mut rest = m;
            while rest != 0 {
                let f = rest.trailing_zeros() as u64;
                code |= (b as u64) << (4 * f);
                rest &= rest - 1;
            }
        }
        PartitionCode(code | (good_bits as u64) << LABEL_SHIFT)
    }

    pub fn from_partition(p: &FeaturePartition, n: usize) -> Option<Self> {
        if n > MAX_CODED_FEATURES || validate(p, &FeatureSet::range(n)).is_err() {
            return None;
        }
        let mut blocks: Vec<(u32, bool)> = p
            .blocks()
            .map(|(r, b)| {
                let m = b.iter().fold(0u32, |m, f| m | 1 << f);
                (m, r == Role::Good)
            })
            .collect();
        blocks.sort_by_key(|&(m, _)| m.trailing_zeros());
        let masks: Vec<u32> = blocks.iter().map(|&(m, _)| m).collect();
        let good_bits = blocks
            .iter()
            .enumerate()
            .fold(0u32, |g, (i, &(_, good))| if good { g | 1 << i } else { g });
        Some(PartitionCode::from_masks(&masks, good_bits))
    }

    pub fn raw(self) -> u64 {
        self.0
    }

    /// Block masks (ascending minimum) and the good flag bits.
    pub fn masks(self, n: usize) -> (Vec<u32>, u32) {
        let mut masks: Vec<u32> = Vec::new();
        for f in 0..n {
            let b = (self.0 >> (4 * f) & 0xf) as usize;
            if b == masks.len() {
                masks.push(0);
            }
            masks[b] |= 1 << f;
        }
        let good_bits = (self.0 >> LABEL_SHIFT) as u32;
        (masks, good_bits)
    }

    pub fn decode(self, n: usize) -> FeaturePartition {
        let (masks, good_bits) = self.masks(n);
        let mut good = Vec::new();
        let mut bad = Vec::new();
        for (i, &m) in masks.iter().enumerate() {
            let set = FeatureSet::from_mask(m as u64);
            if good_bits >> i & 1 == 1 {
                good.push(set);
            } else {
                bad.push(set);
            }
        }
        FeaturePartition::new(good, bad)
    }
}

/// Every labeled partition of a universe, each exactly once, in
/// deterministic order.
pub struct Partitions {
    universe: Vec<usize>,
    parts: SetPartitions,
    masks: Vec<u32>,
    label: u32,
    labels_left: bool,
}

impl Iterator for Partitions {
    type Item = FeaturePartition;

    fn next(&mut self) -> Option<FeaturePartition> {
        if !self.labels_left {
            if !self.parts.next_into(&mut self.masks) {
                return None;
            }
            self.label = 0;
            self.labels_left = true;
        }
        let (mut good, mut bad) = (Vec::new(), Vec::new());
        for (i, &m) in self.masks.iter().enumerate() {
            let block: FeatureSet = (0..self.universe.len())
                .filter(|&p| m >> p & 1 == 1)
                .map(|p| self.universe[p])
                .collect();
            if self.label >> i & 1 == 1 {
                good.push(block);
            } else {
                bad.push(block);
            }
        }
        self.label += 1;
        if self.label == 1 << self.masks.len() {
            self.labels_left = false;
        }
        Some(FeaturePartition::new(good, bad))
    }
}

pub fn enumerate_partitions(universe: &FeatureSet) -> Result<Partitions> {
    enumerate_partitions_capped(universe, DEFAULT_PARTITION_CAP)
}

pub fn enumerate_partitions_capped(universe: &FeatureSet, cap: usize) -> Result<Partitions> {
    if universe.is_empty() {
        return Err(ObfsError::EmptySubset);
    }
    if universe.len() > cap || universe.len() > 32 {
        return Err(ObfsError::CapExceeded {
            size: universe.len(),
            cap,
        });
    }
    Ok(Partitions {
        universe: universe.as_slice().to_vec(),
        parts: SetPartitions::new(universe.len()),
        masks: Vec::new(),
        label: 0,
        labels_left: false,
    })
}

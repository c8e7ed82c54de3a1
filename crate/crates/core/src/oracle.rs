//! Brute-force reference implementations over a fully materialized tree.
//!
//! Everything here recomputes the quantities of [`crate::domain`] and
//! [`crate::heavy`] from first principles — explicit per-level weight
//! arrays, linear scans — and shares no code with the implementations it
//! checks. Domains are capped at 8 bits so the tree stays materializable.

use crate::domain::{Database, NodeId, Path};
use crate::error::{Error, Result};

/// Largest bit width the oracle will materialize.
pub const MAX_ORACLE_BITS: u32 = 8;

/// A complete binary tree with explicit weights at every node.
#[derive(Debug, Clone)]
pub struct ExplicitTree {
    bit_width: u32,
    /// `levels[l][p]` is the weight of the node at level `l`, prefix `p`.
    levels: Vec<Vec<u64>>,
}

impl ExplicitTree {
    /// Materializes the weighted tree of `db` bottom-up.
    pub fn build(db: &Database) -> Result<Self> {
        let b = db.domain().bit_width();
        if b > MAX_ORACLE_BITS {
            return Err(Error::OracleTooLarge(b));
        }
        let mut levels: Vec<Vec<u64>> = Vec::with_capacity(b as usize + 1);
        let mut leaves = vec![0u64; 1usize << b];
        for &x in db.elements() {
            leaves[x as usize] += 1;
        }
        levels.push(leaves);
        for _ in 0..b {
            let below = levels.last().unwrap();
            let mut level = vec![0u64; below.len() / 2];
            for (p, w) in level.iter_mut().enumerate() {
                *w = below[2 * p] + below[2 * p + 1];
            }
            levels.push(level);
        }
        levels.reverse(); // levels[l] now holds level l, the root first
        Ok(Self { bit_width: b, levels })
    }

    pub fn weight(&self, node: &NodeId) -> Result<u64> {
        if node.level > self.bit_width {
            return Err(Error::Domain(format!(
                "node level {} below the {}-level leaves",
                node.level, self.bit_width
            )));
        }
        Ok(self.levels[node.level as usize][node.prefix as usize])
    }

    /// Reference fall-off embedding: walks the path, counting the mass in
    /// the sibling of each next node straight off the weight arrays.
    pub fn reference_falloff(&self, path: &Path, n: u64, t: u64) -> Result<Vec<u128>> {
        if n <= 3 * t {
            return Err(Error::InsufficientData(format!(
                "reference fall-off needs n > 3t, got n = {n}, t = {t}"
            )));
        }
        let target = (n - 3 * t) as usize;
        let mut out = Vec::with_capacity(target);
        let nodes = path.nodes();
        for (i, node) in nodes.iter().enumerate() {
            if out.len() >= target {
                break;
            }
            if i + 1 == nodes.len() {
                while out.len() < target {
                    out.push(node.level as u128);
                }
                break;
            }
            let next = nodes[i + 1];
            let other = if next.prefix == node.prefix << 1 {
                node.right_child()
            } else {
                node.left_child()
            };
            let mut m = self.weight(&other)? as usize;
            m = m.min(target - out.len());
            for _ in 0..m {
                out.push(node.level as u128);
            }
        }
        Ok(out)
    }

    /// Reference deterministic path: heavier child, ties to the left, ending
    /// at a leaf or at weight `<= t`.
    pub fn reference_deterministic_path(&self, t: u64) -> Result<Path> {
        let mut node = NodeId::root();
        let mut nodes = vec![node];
        loop {
            let w = self.weight(&node)?;
            if node.level == self.bit_width || w <= t {
                return Path::new(nodes);
            }
            let w0 = self.weight(&node.left_child())?;
            let w1 = self.weight(&node.right_child())?;
            node = if w1 > w0 { node.right_child() } else { node.left_child() };
            nodes.push(node);
        }
    }

    pub fn bit_width(&self) -> u32 {
        self.bit_width
    }
}

/// Linear-scan interval count, independent of the binary searches in
/// [`Database::count_in`].
pub fn scan_weight(db: &Database, node: &NodeId) -> Result<u64> {
    let (low, high) = node.interval(&db.domain())?;
    Ok(db.elements().iter().filter(|&&x| low <= x && x <= high).count() as u64)
}

/// Convenience wrapper building the tree per call, used where the spec of
/// the check is "compare one node".
pub fn oracle_weight(db: &Database, node: &NodeId) -> Result<u64> {
    ExplicitTree::build(db)?.weight(node)
}

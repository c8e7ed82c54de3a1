//! Ordered domains, databases, and the implicit complete binary tree.
//!
//! The domain is the integer range `0 ..= 2^b - 1` for a bit width
//! `b <= 128`, so a 2^64- or 2^128-element domain is a single `u32`. The
//! complete binary tree with one leaf per domain element is never
//! materialized: a node is a `(level, prefix)` pair, its leaf interval is
//! arithmetic on the prefix, and its weight with respect to a database is an
//! interval count answered by two binary searches on the sorted element
//! vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard cap on domain bit widths.
pub const MAX_BIT_WIDTH: u32 = 128;

/// A totally ordered domain `{0, ..., 2^b - 1}`, represented by its bit
/// width `b`. The size is always a power of two and is never stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderedDomain {
    bit_width: u32,
}

impl OrderedDomain {
    pub fn from_bit_width(bit_width: u32) -> Result<Self> {
        if bit_width > MAX_BIT_WIDTH {
            return Err(Error::Domain(format!(
                "bit width {bit_width} exceeds the supported maximum {MAX_BIT_WIDTH}"
            )));
        }
        Ok(Self { bit_width })
    }

    pub fn bit_width(&self) -> u32 {
        self.bit_width
    }

    /// Largest element, i.e. `2^b - 1`.
    pub fn max_element(&self) -> u128 {
        if self.bit_width == MAX_BIT_WIDTH {
            u128::MAX
        } else {
            (1u128 << self.bit_width) - 1
        }
    }

    pub fn contains(&self, x: u128) -> bool {
        x <= self.max_element()
    }

    /// Domain size when it fits in a `u64` (it does whenever `b <= 63`).
    pub fn small_size(&self) -> Option<u64> {
        if self.bit_width <= 63 {
            Some(1u64 << self.bit_width)
        } else {
            None
        }
    }

    /// `log*` of the domain size, under the base-2 convention of [`log_star`].
    /// Exact: `log*(2^b) = 1 + log*(b)` for `b >= 1`.
    pub fn log_star_size(&self) -> u32 {
        if self.bit_width == 0 {
            0
        } else {
            1 + log_star(self.bit_width as f64).expect("bit width >= 1")
        }
    }
}

/// Smallest power-of-two domain with at least `raw_size` elements.
pub fn extend_to_power_of_two(raw_size: u128) -> Result<OrderedDomain> {
    if raw_size == 0 {
        return Err(Error::Param("domain size must be positive".into()));
    }
    let bit_width = 128 - (raw_size - 1).leading_zeros();
    OrderedDomain::from_bit_width(bit_width)
}

/// Iterated base-2 logarithm: the smallest `j` such that applying `log2` to
/// `x` a total of `j` times yields a value `<= 1`.
pub fn log_star(x: f64) -> Result<u32> {
    if !(x >= 1.0) {
        return Err(Error::Domain(format!("log* requires x >= 1, got {x}")));
    }
    let mut x = x;
    let mut j = 0;
    while x > 1.0 {
        x = x.log2();
        j += 1;
    }
    Ok(j)
}

/// An `(epsilon, delta)` privacy target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    epsilon: f64,
    delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::Param(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Param(format!("delta must lie in (0, 1), got {delta}")));
        }
        Ok(Self { epsilon, delta })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// A node of the implicit complete binary tree: `level` steps below the
/// root, reached by reading `prefix` as the top `level` bits of a leaf.
///
/// The node's leaf interval is `[prefix * 2^(b-level), (prefix+1) * 2^(b-level) - 1]`;
/// a node at level `b` is a leaf and its interval is a single element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId {
    pub level: u32,
    pub prefix: u128,
}

impl NodeId {
    pub fn root() -> Self {
        Self { level: 0, prefix: 0 }
    }

    pub fn new(level: u32, prefix: u128) -> Result<Self> {
        if level > MAX_BIT_WIDTH {
            return Err(Error::Domain(format!("node level {level} exceeds {MAX_BIT_WIDTH}")));
        }
        if level < 128 && prefix >> level != 0 {
            return Err(Error::Domain(format!(
                "prefix {prefix} does not fit in {level} bits"
            )));
        }
        Ok(Self { level, prefix })
    }

    pub fn is_leaf(&self, domain: &OrderedDomain) -> bool {
        self.level == domain.bit_width()
    }

    pub fn left_child(&self) -> Self {
        Self { level: self.level + 1, prefix: self.prefix << 1 }
    }

    pub fn right_child(&self) -> Self {
        Self { level: self.level + 1, prefix: (self.prefix << 1) | 1 }
    }

    /// Inclusive leaf interval `[low, high]` covered by this node.
    pub fn interval(&self, domain: &OrderedDomain) -> Result<(u128, u128)> {
        let b = domain.bit_width();
        if self.level > b {
            return Err(Error::Domain(format!(
                "node level {} below the {b}-level leaves",
                self.level
            )));
        }
        let shift = b - self.level;
        if shift == 128 {
            // Only the root of the full 128-bit domain.
            return Ok((0, u128::MAX));
        }
        let low = self.prefix << shift;
        let high = low + ((1u128 << shift) - 1);
        Ok((low, high))
    }

    pub fn leftmost_leaf(&self, domain: &OrderedDomain) -> Result<u128> {
        Ok(self.interval(domain)?.0)
    }

    pub fn rightmost_leaf(&self, domain: &OrderedDomain) -> Result<u128> {
        Ok(self.interval(domain)?.1)
    }

    /// The level-`level` ancestor-or-self of the leaf holding `x`.
    pub fn containing(domain: &OrderedDomain, level: u32, x: u128) -> Result<Self> {
        let b = domain.bit_width();
        if level > b {
            return Err(Error::Domain(format!("level {level} below the {b}-level leaves")));
        }
        if !domain.contains(x) {
            return Err(Error::Domain(format!("element {x} outside the {b}-bit domain")));
        }
        let shift = b - level;
        let prefix = if shift == 128 { 0 } else { x >> shift };
        Ok(Self { level, prefix })
    }
}

/// A root-anchored descending path of tree nodes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Path {
    nodes: Vec<NodeId>,
}

impl Path {
    pub fn from_root() -> Self {
        Self { nodes: vec![NodeId::root()] }
    }

    /// Validates the chain: starts at the root, each node a child of its
    /// predecessor.
    pub fn new(nodes: Vec<NodeId>) -> Result<Self> {
        if nodes.first() != Some(&NodeId::root()) {
            return Err(Error::Domain("path must start at the root".into()));
        }
        for pair in nodes.windows(2) {
            let (parent, child) = (pair[0], pair[1]);
            if child != parent.left_child() && child != parent.right_child() {
                return Err(Error::Domain(format!(
                    "node {child:?} is not a child of {parent:?}"
                )));
            }
        }
        Ok(Self { nodes })
    }

    pub fn push_child(&mut self, child: NodeId) {
        let parent = *self.last();
        debug_assert!(child == parent.left_child() || child == parent.right_child());
        self.nodes.push(child);
    }

    pub fn last(&self) -> &NodeId {
        self.nodes.last().expect("paths are never empty")
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Node at tree level `level`, if the path is that deep. The node at
    /// index `i` is at level `i`, so this is a direct lookup.
    pub fn node_at_level(&self, level: u32) -> Option<&NodeId> {
        self.nodes.get(level as usize)
    }
}

/// A sorted multiset of domain elements; the private input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Database {
    elements: Vec<u128>,
    domain: OrderedDomain,
}

impl Database {
    /// Builds a database, sorting the elements.
    pub fn new(mut elements: Vec<u128>, domain: OrderedDomain) -> Result<Self> {
        elements.sort_unstable();
        Self::from_sorted(elements, domain)
    }

    /// Builds a database from an already-sorted vector.
    pub fn from_sorted(elements: Vec<u128>, domain: OrderedDomain) -> Result<Self> {
        debug_assert!(elements.windows(2).all(|w| w[0] <= w[1]));
        if let Some(&last) = elements.last() {
            if !domain.contains(last) {
                return Err(Error::Domain(format!(
                    "element {last} outside the {}-bit domain",
                    domain.bit_width()
                )));
            }
        }
        Ok(Self { elements, domain })
    }

    pub fn len(&self) -> u64 {
        self.elements.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[u128] {
        &self.elements
    }

    pub fn domain(&self) -> OrderedDomain {
        self.domain
    }

    pub fn min(&self) -> Option<u128> {
        self.elements.first().copied()
    }

    pub fn max(&self) -> Option<u128> {
        self.elements.last().copied()
    }

    /// Number of elements `<= y`.
    pub fn count_le(&self, y: u128) -> u64 {
        self.elements.partition_point(|&x| x <= y) as u64
    }

    /// Number of elements `>= y`.
    pub fn count_ge(&self, y: u128) -> u64 {
        (self.elements.len() - self.elements.partition_point(|&x| x < y)) as u64
    }

    /// Number of elements in the inclusive interval `[low, high]`.
    pub fn count_in(&self, low: u128, high: u128) -> u64 {
        let lo = self.elements.partition_point(|&x| x < low);
        let hi = self.elements.partition_point(|&x| x <= high);
        (hi - lo) as u64
    }

    /// Weight of a tree node: the count of elements in its leaf interval.
    /// `weight(root)` is the database size.
    pub fn weight(&self, node: &NodeId) -> Result<u64> {
        let (low, high) = node.interval(&self.domain)?;
        Ok(self.count_in(low, high))
    }

    /// Removes the `t` smallest and `t` largest entries (by position, so
    /// duplicates count separately).
    pub fn trim(&self, t: u64) -> Result<Database> {
        let n = self.len();
        if n <= 2 * t {
            return Err(Error::InsufficientData(format!(
                "cannot trim {t} from each end of {n} elements"
            )));
        }
        let t = t as usize;
        let kept = self.elements[t..self.elements.len() - t].to_vec();
        Ok(Database { elements: kept, domain: self.domain })
    }

    /// Interior-point score of `y`: `min(#{x <= y}, #{x >= y})`. A value is
    /// an interior point exactly when its score is at least 1.
    pub fn interior_score(&self, y: u128) -> Result<u64> {
        if !self.domain.contains(y) {
            return Err(Error::Domain(format!(
                "element {y} outside the {}-bit domain",
                self.domain.bit_width()
            )));
        }
        Ok(self.count_le(y).min(self.count_ge(y)))
    }

    /// Largest multiplicity of any single element.
    pub fn max_multiplicity(&self) -> u64 {
        let mut best = 0u64;
        let mut run = 0u64;
        let mut prev = None;
        for &x in &self.elements {
            if Some(x) == prev {
                run += 1;
            } else {
                run = 1;
                prev = Some(x);
            }
            best = best.max(run);
        }
        best
    }

    /// Parses the line-oriented text format: one unsigned decimal integer per
    /// line, blank lines ignored.
    pub fn parse_text(text: &str, domain: OrderedDomain) -> Result<Self> {
        let mut elements = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let value: u128 = line
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: not an unsigned integer: {line:?}", idx + 1)))?;
            if !domain.contains(value) {
                return Err(Error::Domain(format!(
                    "line {}: value {value} outside the {}-bit domain",
                    idx + 1,
                    domain.bit_width()
                )));
            }
            elements.push(value);
        }
        Self::new(elements, domain)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn db(values: &[u128], bits: u32) -> Database {
        Database::new(values.to_vec(), OrderedDomain::from_bit_width(bits).unwrap()).unwrap()
    }

    #[test]
    fn log_star_small_values() {
        assert_eq!(log_star(1.0).unwrap(), 0);
        assert_eq!(log_star(2.0).unwrap(), 1);
        assert_eq!(log_star(16.0).unwrap(), 3); // 16 -> 4 -> 2 -> 1
    }

    #[test]
    fn log_star_of_2_pow_64() {
        // Independently iterate the base-2 logarithm.
        let mut x = (2f64).powi(64);
        let mut j = 0;
        while x > 1.0 {
            x = x.log2();
            j += 1;
        }
        assert_eq!(j, 5);
        assert_eq!(log_star((2f64).powi(64)).unwrap(), 5);
        assert_eq!(OrderedDomain::from_bit_width(64).unwrap().log_star_size(), 5);
    }

    #[test]
    fn log_star_rejects_below_one() {
        assert!(matches!(log_star(0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn extend_to_power_of_two_examples() {
        assert_eq!(extend_to_power_of_two(8).unwrap().bit_width(), 3);
        assert_eq!(extend_to_power_of_two(9).unwrap().bit_width(), 4);
        assert_eq!(extend_to_power_of_two(1).unwrap().bit_width(), 0);
    }

    #[test]
    fn weight_of_root_is_database_size() {
        let d = db(&[1, 3, 3, 7], 3);
        assert_eq!(d.weight(&NodeId::root()).unwrap(), 4);
    }

    #[test]
    fn weight_of_empty_database_is_zero() {
        let d = db(&[], 3);
        for level in 0..=3 {
            for prefix in 0..(1u128 << level) {
                let node = NodeId::new(level, prefix).unwrap();
                assert_eq!(d.weight(&node).unwrap(), 0);
            }
        }
    }

    #[test]
    fn weight_matches_linear_scan_on_half_domain() {
        let d = db(&[1, 3, 3, 7], 3);
        let node = NodeId::new(1, 0).unwrap(); // leaves 0..=3
        let by_scan = d.elements().iter().filter(|&&x| x <= 3).count() as u64;
        assert_eq!(by_scan, 3);
        assert_eq!(d.weight(&node).unwrap(), 3);
    }

    #[test]
    fn weight_rejects_nodes_below_leaves() {
        let d = db(&[0], 2);
        let node = NodeId::new(3, 0).unwrap();
        assert!(matches!(d.weight(&node), Err(Error::Domain(_))));
    }

    #[test]
    fn trim_drops_positional_extremes() {
        let d = db(&[1, 2, 3, 4, 5], 3);
        assert_eq!(d.trim(1).unwrap().elements(), &[2, 3, 4]);

        let dup = db(&[5, 5, 5, 5], 3);
        assert_eq!(dup.trim(1).unwrap().elements(), &[5, 5]);

        let boundary = db(&[1, 2, 3, 4], 3);
        assert!(matches!(boundary.trim(2), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn interior_score_examples() {
        let d = db(&[1, 5, 9], 4);
        assert_eq!(d.interior_score(5).unwrap(), 2);
        assert_eq!(d.interior_score(0).unwrap(), 0);
        let single = db(&[3], 2);
        assert_eq!(single.interior_score(3).unwrap(), 1);
    }

    #[test]
    fn full_width_domain_root_interval() {
        let domain = OrderedDomain::from_bit_width(128).unwrap();
        assert_eq!(NodeId::root().interval(&domain).unwrap(), (0, u128::MAX));
        let d = Database::new(vec![u128::MAX, 0], domain).unwrap();
        assert_eq!(d.weight(&NodeId::root()).unwrap(), 2);
        assert_eq!(d.weight(&NodeId::new(1, 1).unwrap()).unwrap(), 1);
    }

    #[test]
    fn parse_text_format() {
        let domain = OrderedDomain::from_bit_width(4).unwrap();
        let d = Database::parse_text("3\n\n1\n15\n", domain).unwrap();
        assert_eq!(d.elements(), &[1, 3, 15]);
        assert!(matches!(
            Database::parse_text("1\nx\n", domain),
            Err(Error::Parse(_))
        ));
        assert!(matches!(
            Database::parse_text("16\n", domain),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn path_validation() {
        let chain = vec![
            NodeId::root(),
            NodeId::new(1, 1).unwrap(),
            NodeId::new(2, 2).unwrap(),
        ];
        assert!(Path::new(chain).is_ok());
        let broken = vec![NodeId::root(), NodeId::new(2, 0).unwrap()];
        assert!(Path::new(broken).is_err());
        assert!(Path::new(vec![NodeId::new(1, 0).unwrap()]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn weight_agrees_with_linear_scan(
            mut values in proptest::collection::vec(0u128..65536, 0..200),
            level in 0u32..=16,
            prefix_seed in 0u128..65536,
        ) {
            let domain = OrderedDomain::from_bit_width(16).unwrap();
            values.sort_unstable();
            let d = Database::from_sorted(values, domain).unwrap();
            let prefix = prefix_seed & ((1u128 << level) - 1).max(0);
            let node = NodeId::new(level, prefix).unwrap();
            let (low, high) = node.interval(&domain).unwrap();
            let scan = d.elements().iter().filter(|&&x| x >= low && x <= high).count() as u64;
            prop_assert_eq!(d.weight(&node).unwrap(), scan);
        }

        #[test]
        fn child_weights_sum_to_parent(
            values in proptest::collection::vec(0u128..65536, 0..200),
            level in 0u32..16,
            prefix_seed in 0u128..65536,
        ) {
            let domain = OrderedDomain::from_bit_width(16).unwrap();
            let d = Database::new(values, domain).unwrap();
            let prefix = prefix_seed & ((1u128 << level) - 1).max(0);
            let node = NodeId::new(level, prefix).unwrap();
            let sum = d.weight(&node.left_child()).unwrap() + d.weight(&node.right_child()).unwrap();
            prop_assert_eq!(d.weight(&node).unwrap(), sum);
        }

        #[test]
        fn trim_is_a_bounded_submultiset(
            values in proptest::collection::vec(0u128..256, 3..120),
            t in 1u64..20,
        ) {
            let domain = OrderedDomain::from_bit_width(8).unwrap();
            let d = Database::new(values, domain).unwrap();
            prop_assume!(d.len() > 2 * t);
            let trimmed = d.trim(t).unwrap();
            prop_assert_eq!(trimmed.len(), d.len() - 2 * t);
            prop_assert!(trimmed.min().unwrap() >= d.min().unwrap());
            prop_assert!(trimmed.max().unwrap() <= d.max().unwrap());
            // Sub-multiset: every run in the output is no longer than in the input.
            for &x in trimmed.elements() {
                prop_assert!(trimmed.count_in(x, x) <= d.count_in(x, x));
            }
        }

        #[test]
        fn log_star_tower_recurrence(x in 1f64..1e9) {
            let lhs = log_star((2f64).powf(x)).unwrap();
            let rhs = 1 + log_star(x).unwrap();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn interior_iff_between_extremes(
            values in proptest::collection::vec(0u128..256, 1..80),
            y in 0u128..256,
        ) {
            let domain = OrderedDomain::from_bit_width(8).unwrap();
            let d = Database::new(values, domain).unwrap();
            let interior = d.interior_score(y).unwrap() >= 1;
            let between = d.min().unwrap() <= y && y <= d.max().unwrap();
            prop_assert_eq!(interior, between);
        }
    }
}

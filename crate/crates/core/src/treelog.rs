//! The recursive domain-shrinking interior-point solver.
//!
//! One level of the recursion: trim the `t` extreme elements, sample a
//! root-to-heavy-region path through the implicit tree, embed the input
//! into the levels at which mass falls off that path (a domain of size
//! `log |X| + 1`), recurse on the embedded database to get a level `l*`,
//! privately pick a heavy node `v*` at that level, and return the best of
//! four descendant leaves of `v*` by interior-point score against the
//! untrimmed input. The recursion bottoms out with a plain exponential
//! mechanism once the domain is constant-sized, after `log* |X|` levels.

use crate::domain::{
    extend_to_power_of_two, Database, NodeId, OrderedDomain, Path, PrivacyBudget,
};
use crate::error::{Error, Result};
use crate::mech::{
    choosing_mechanism, exponential_mechanism, two_way_exp_choice, NodeWeightQuery, RandomSource,
    ScoredCandidates,
};

/// Domain size at which the recursion switches to the exponential mechanism.
pub const DEFAULT_BASE_CASE_DOMAIN: u64 = 16;

/// Per-level parameters of the recursion. The public entry point derives
/// these from a total `(epsilon, delta)` target; experiments may also set
/// them directly.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AlgoParams {
    /// Trimming parameter t.
    pub trim: u64,
    /// Largest domain size solved by the base case.
    pub base_case_domain: u64,
    /// Budget of each individual mechanism invocation.
    pub per_step_epsilon: f64,
    pub per_step_delta: f64,
}

impl AlgoParams {
    pub fn validate(&self) -> Result<()> {
        if self.trim == 0 {
            return Err(Error::Param("trim parameter t must be at least 1".into()));
        }
        // The level-domain map fixes 2-bit domains in place, so any cutoff
        // below 4 would recurse forever on them.
        if self.base_case_domain < 4 {
            return Err(Error::Param(format!(
                "base case domain must be at least 4, got {}",
                self.base_case_domain
            )));
        }
        if !(self.per_step_epsilon > 0.0 && self.per_step_epsilon.is_finite()) {
            return Err(Error::Param("per-step epsilon must be positive".into()));
        }
        if !(self.per_step_delta > 0.0 && self.per_step_delta < 1.0) {
            return Err(Error::Param("per-step delta must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Per-step budgets hitting a total `(eps, delta)` target across the
    /// whole recursion: eps_step = eps / (5 log*|X| log2 n) and
    /// delta_step = delta / (3 n log*|X| e^eps), matching the composed
    /// privacy of the recursion; the trimming parameter is
    /// t = ceil((4/eps_step) log2(1/delta_step)).
    pub fn from_budget(domain: &OrderedDomain, n: u64, budget: &PrivacyBudget) -> Result<Self> {
        let ls = domain.log_star_size().max(1) as f64;
        let log2n = (n.max(2) as f64).log2();
        let per_step_epsilon = budget.epsilon() / (5.0 * ls * log2n);
        let per_step_delta =
            budget.delta() / (3.0 * n.max(1) as f64 * ls * budget.epsilon().exp());
        let trim = ((4.0 / per_step_epsilon) * (1.0 / per_step_delta).log2()).ceil() as u64;
        let params = Self {
            trim: trim.max(1),
            base_case_domain: DEFAULT_BASE_CASE_DOMAIN,
            per_step_epsilon,
            per_step_delta,
        };
        params.validate()?;
        Ok(params)
    }

    fn step_budget(&self) -> PrivacyBudget {
        PrivacyBudget::new(self.per_step_epsilon, self.per_step_delta)
            .expect("validated params")
    }
}

/// Bit width of the next recursion level's domain: the levels `{0..=b}`
/// extended to a power of two.
pub fn next_level_domain(domain: &OrderedDomain) -> OrderedDomain {
    extend_to_power_of_two(domain.bit_width() as u128 + 1).expect("at most 8 bits")
}

fn fits_base_case(domain: &OrderedDomain, cutoff: u64) -> bool {
    domain.small_size().is_some_and(|s| s <= cutoff)
}

/// Number of trimming levels the recursion performs before the base case.
/// Depends only on the domain, not on the data.
pub fn trim_level_count(domain: &OrderedDomain, base_case_domain: u64) -> u32 {
    let mut current = *domain;
    let mut count = 0;
    while !fits_base_case(&current, base_case_domain) {
        count += 1;
        current = next_level_domain(&current);
        debug_assert!(count <= 140);
    }
    count
}

/// Smallest database size accepted by [`treelog`] for this domain and
/// budget: enough to lose `3t` elements per level and still hand the base
/// case a healthy `4t` elements. Solved by fixed-point iteration because the
/// per-step budgets themselves depend (logarithmically) on `n`.
pub fn min_database_size(domain: &OrderedDomain, budget: &PrivacyBudget) -> Result<u64> {
    let levels = trim_level_count(domain, DEFAULT_BASE_CASE_DOMAIN) as u64;
    let mut n = 64u64;
    for _ in 0..64 {
        let params = AlgoParams::from_budget(domain, n, budget)?;
        let required = params.trim * (3 * levels + 4) + 1;
        if required <= n {
            return Ok(n);
        }
        n = required;
    }
    Ok(n)
}

/// Base case: the exponential mechanism over every domain element, scored by
/// interior-point quality.
pub fn base_case_solve(db: &Database, epsilon: f64, rng: &mut RandomSource) -> Result<u128> {
    let size = db.domain().small_size().ok_or_else(|| {
        Error::Domain("base case requires an enumerable domain".into())
    })?;
    let mut entries = Vec::with_capacity(size as usize);
    for y in 0..size as u128 {
        entries.push((y, db.interior_score(y)? as i64));
    }
    exponential_mechanism(ScoredCandidates::new(entries), epsilon, rng)
}

/// Samples a root-anchored path through the tree of `db_hat`: at each node,
/// a zero-weight child is never taken, and otherwise child `b` is taken with
/// probability proportional to `exp(epsilon * w(v_b))`. The path ends at a
/// leaf or at the first node of weight at most `t`.
pub fn sample_path(
    db_hat: &Database,
    epsilon: f64,
    t: u64,
    rng: &mut RandomSource,
) -> Result<Path> {
    if db_hat.is_empty() {
        return Err(Error::InsufficientData("cannot sample a path of an empty database".into()));
    }
    let domain = db_hat.domain();
    let mut path = Path::from_root();
    let mut node = NodeId::root();
    let mut weight = db_hat.len();
    while !node.is_leaf(&domain) && weight > t {
        let (left, right) = (node.left_child(), node.right_child());
        let w0 = db_hat.weight(&left)?;
        let w1 = db_hat.weight(&right)?;
        debug_assert_eq!(w0 + w1, weight);
        // Both children weightless would mean the current node is too; the
        // loop condition already excluded that.
        assert!(w0 > 0 || w1 > 0, "zero-weight tie on a sampled path");
        let go_right = if w0 == 0 {
            true
        } else if w1 == 0 {
            false
        } else {
            two_way_exp_choice(w0, w1, epsilon, rng)
        };
        node = if go_right { right } else { left };
        weight = if go_right { w1 } else { w0 };
        path.push_child(node);
    }
    Ok(path)
}

/// Embeds the trimmed database into fall-off levels along `path`: walking
/// from the root, each node contributes `min(w(sibling-of-next), remaining)`
/// copies of its level, and the terminal node pads the output to exactly
/// `n - 3t` elements with copies of its own level. The output lives in the
/// level domain `{0..=b}` extended to a power of two.
pub fn falloff_database(db_hat: &Database, path: &Path, n: u64, t: u64) -> Result<Database> {
    if n <= 3 * t {
        return Err(Error::InsufficientData(format!(
            "fall-off embedding needs n > 3t, got n = {n}, t = {t}"
        )));
    }
    let target = (n - 3 * t) as usize;
    let out_domain = next_level_domain(&db_hat.domain());
    let mut out: Vec<u128> = Vec::with_capacity(target);
    let nodes = path.nodes();
    for (i, node) in nodes.iter().enumerate() {
        if out.len() >= target {
            break;
        }
        let level = node.level as u128;
        if i + 1 == nodes.len() {
            out.resize(target, level);
            break;
        }
        let next = nodes[i + 1];
        let other = if next == node.left_child() {
            node.right_child()
        } else {
            node.left_child()
        };
        let m = (db_hat.weight(&other)? as usize).min(target - out.len());
        out.resize(out.len() + m, level);
    }
    debug_assert_eq!(out.len(), target);
    Database::from_sorted(out, out_domain)
}

/// The four candidate leaves under a chosen node: the outermost leaves of
/// its subtree and the two leaves straddling the split between its children.
/// A leaf node yields itself four times over.
pub fn candidate_leaves(v_star: &NodeId, domain: &OrderedDomain) -> Result<Vec<u128>> {
    let (low, high) = v_star.interval(domain)?;
    if v_star.level == domain.bit_width() {
        return Ok(vec![low]);
    }
    let inner_left = v_star.left_child().rightmost_leaf(domain)?;
    let inner_right = v_star.right_child().leftmost_leaf(domain)?;
    Ok(vec![low, high, inner_left, inner_right])
}

/// Runs the full recursion under a total privacy budget. Refuses databases
/// below [`min_database_size`] rather than running with degraded guarantees.
pub fn treelog(db: &Database, budget: &PrivacyBudget, rng: &mut RandomSource) -> Result<u128> {
    let domain = db.domain();
    let n_min = min_database_size(&domain, budget)?;
    if db.len() < n_min {
        return Err(Error::InsufficientData(format!(
            "need at least {n_min} elements for this domain and budget, got {}",
            db.len()
        )));
    }
    let params = AlgoParams::from_budget(&domain, db.len(), budget)?;
    treelog_with_params(db, &params, rng)
}

/// Runs the recursion with explicit per-level parameters. Only hard
/// feasibility (enough elements to trim and embed at every level) is
/// checked here.
pub fn treelog_with_params(
    db: &Database,
    params: &AlgoParams,
    rng: &mut RandomSource,
) -> Result<u128> {
    params.validate()?;
    let n = db.len().max(1);
    if params.per_step_delta > params.per_step_epsilon / (4.0 * n as f64) {
        log::warn!(
            "delta = {} exceeds epsilon/(4n) = {}; the per-level privacy bound degrades in this regime",
            params.per_step_delta,
            params.per_step_epsilon / (4.0 * n as f64)
        );
    }
    let depth_limit = db.domain().log_star_size() + 2;
    solve_level(db, params, 0, depth_limit, rng)
}

fn solve_level(
    db: &Database,
    params: &AlgoParams,
    depth: u32,
    depth_limit: u32,
    rng: &mut RandomSource,
) -> Result<u128> {
    assert!(depth <= depth_limit, "recursion exceeded its log* depth bound");
    let domain = db.domain();
    if fits_base_case(&domain, params.base_case_domain) {
        return base_case_solve(db, params.per_step_epsilon, rng);
    }

    let n = db.len();
    let t = params.trim;
    if n <= 3 * t {
        return Err(Error::InsufficientData(format!(
            "level at depth {depth} has {n} elements, needs more than 3t = {}",
            3 * t
        )));
    }
    let hat = db.trim(t)?;
    let path = sample_path(&hat, params.per_step_epsilon, t, rng)?;
    let falloff = falloff_database(&hat, &path, n, t)?;
    let level_point = solve_level(&falloff, params, depth + 1, depth_limit, rng)?;

    // The recursive answer is an element of the extended level domain; only
    // values that name an actual tree level are usable.
    let l_star = u32::try_from(level_point)
        .ok()
        .filter(|l| *l <= domain.bit_width())
        .ok_or_else(|| {
            Error::Domain(format!(
                "recursive level {level_point} outside the {}-level tree",
                domain.bit_width()
            ))
        })?;

    let v_star = choosing_mechanism(
        &NodeWeightQuery { level: l_star },
        &hat,
        &params.step_budget(),
        params.per_step_delta,
        rng,
    )?
    .ok_or(Error::SelectionFailed)?;

    let entries = candidate_leaves(&v_star, &domain)?
        .into_iter()
        .map(|y| Ok((y, db.interior_score(y)? as i64)))
        .collect::<Result<Vec<_>>>()?;
    exponential_mechanism(ScoredCandidates::new(entries), params.per_step_epsilon, rng)
}

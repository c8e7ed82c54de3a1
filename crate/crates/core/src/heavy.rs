//! The decomposed interior-point solver.
//!
//! The recursion of [`crate::treelog`] is split into stateless pieces that
//! each recompute, from scratch and deterministically, everything they need:
//!
//! - [`construct_paths`] walks the recursion with *deterministic*
//!   heavier-child paths, emitting one [`LevelRecord`] per level;
//! - [`stopping_point`] runs an AboveThreshold session over the maximum
//!   multiplicities `f_d` of the per-level databases to find the first level
//!   where a single element got heavy;
//! - [`one_random_path`] performs a single randomized-path iteration at that
//!   level, with a private heavy-level pick in place of the recursive call;
//! - [`level_up`] translates an interior point of level `d+1` into one of
//!   level `d`;
//! - [`heavy_paths`] wires the four together.
//!
//! Determinism of the reconstruction is what makes the pieces composable:
//! on neighboring inputs the per-level databases stay neighboring all the
//! way down to the stopping level, so no non-private state is shared.

use std::borrow::Cow;

use crate::domain::{Database, OrderedDomain, Path, PrivacyBudget};
use crate::error::{Error, Result};
use crate::mech::{
    choosing_mechanism, exponential_mechanism, MultiplicityQuery, NodeWeightQuery, RandomSource,
    ScoredCandidates,
};
use crate::treelog::{
    candidate_leaves, falloff_database, next_level_domain, sample_path, trim_level_count,
    DEFAULT_BASE_CASE_DOMAIN,
};

/// Default global multiplier in the heaviness threshold k.
pub const DEFAULT_LAMBDA: f64 = 4.0;

/// Calibration constant of the budget split in [`heavy_paths`].
pub const HEAVY_SPLIT_CALIBRATION: f64 = 2.0;

/// Derived parameters of the decomposed solver.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HeavyParams {
    /// Global constant lambda in the definition of k.
    pub lambda: f64,
    /// Heaviness bar: k = ceil((lambda/eps) * log2((1/delta) * log*|X|)).
    pub k: u64,
    /// Trimming parameter, exactly 2k.
    pub t: u64,
    /// AboveThreshold threshold, exactly k/2.
    pub c: f64,
}

impl HeavyParams {
    pub fn derive(
        domain: &OrderedDomain,
        step_epsilon: f64,
        step_delta: f64,
        lambda: f64,
    ) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::Param(format!("lambda must be positive, got {lambda}")));
        }
        if !(step_epsilon > 0.0) || !(step_delta > 0.0 && step_delta < 1.0) {
            return Err(Error::Param("per-step budget out of range".into()));
        }
        let ls = domain.log_star_size().max(1) as f64;
        let k = ((lambda / step_epsilon) * ((1.0 / step_delta) * ls).log2())
            .ceil()
            .max(1.0) as u64;
        Ok(Self { lambda, k, t: 2 * k, c: k as f64 / 2.0 })
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.t != 2 * self.k || self.c != self.k as f64 / 2.0 {
            return Err(Error::Param(
                "heavy parameters must satisfy t = 2k and c = k/2 with k >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Explicit parameters for small-scale experiments.
    pub fn explicit(lambda: f64, k: u64) -> Result<Self> {
        let params = Self { lambda, k, t: 2 * k, c: k as f64 / 2.0 };
        params.validate()?;
        Ok(params)
    }
}

/// One level of the deterministic construction: the domain, database, and
/// heavier-child path of recursion depth `depth` (1-based; level 1 holds the
/// input itself).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelRecord {
    pub depth: u32,
    pub domain: OrderedDomain,
    pub database: Database,
    pub path: Path,
}

/// Output of [`construct_paths`]: the records of every level that ran, plus
/// the terminal database (the fall-off of the last record, or the input
/// itself if no level ran) at depth `records.len() + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathDecomposition {
    pub records: Vec<LevelRecord>,
    pub terminal_database: Database,
}

impl PathDecomposition {
    /// Number of depths `d` for which `S_d` exists.
    pub fn available_depths(&self) -> u32 {
        self.records.len() as u32 + 1
    }

    /// The database at 1-based depth `d`.
    pub fn database_at(&self, depth: u32) -> Result<&Database> {
        if depth >= 1 {
            if let Some(record) = self.records.get(depth as usize - 1) {
                return Ok(&record.database);
            }
            if depth == self.available_depths() {
                return Ok(&self.terminal_database);
            }
        }
        Err(Error::Depth { requested: depth, available: self.available_depths() })
    }
}

fn fits_base_case(domain: &OrderedDomain) -> bool {
    domain.small_size().is_some_and(|s| s <= DEFAULT_BASE_CASE_DOMAIN)
}

fn halts(db: &Database, t: u64) -> bool {
    db.len() <= 10 * t || fits_base_case(&db.domain())
}

/// The deterministic analogue of [`sample_path`]: always proceed to the
/// heavier child, breaking ties toward the left (smaller-prefix) child.
fn deterministic_path(db_hat: &Database, t: u64) -> Path {
    let domain = db_hat.domain();
    let mut path = Path::from_root();
    let mut node = crate::domain::NodeId::root();
    let mut weight = db_hat.len();
    while !node.is_leaf(&domain) && weight > t {
        let (left, right) = (node.left_child(), node.right_child());
        let w0 = db_hat.weight(&left).expect("child of an in-domain node");
        let w1 = db_hat.weight(&right).expect("child of an in-domain node");
        let go_right = w1 > w0;
        node = if go_right { right } else { left };
        weight = if go_right { w1 } else { w0 };
        path.push_child(node);
    }
    path
}

/// One deterministic level step; `None` when the stop rule fires at entry.
fn advance_level(current: &Database, t: u64) -> Option<Database> {
    if halts(current, t) {
        return None;
    }
    let hat = current.trim(t).expect("entry check leaves more than 2t elements");
    let path = deterministic_path(&hat, t);
    Some(
        falloff_database(&hat, &path, current.len(), t)
            .expect("entry check leaves more than 3t elements"),
    )
}

/// Deterministically generates every level of the construction: records for
/// each depth until the database shrinks to `10t` elements or the domain
/// reaches the base-case cutoff. Identical inputs give identical outputs.
pub fn construct_paths(db: &Database, t: u64) -> PathDecomposition {
    debug_assert!(t >= 1);
    let mut records = Vec::new();
    let mut current = db.clone();
    let mut depth = 1u32;
    loop {
        if halts(&current, t) {
            return PathDecomposition { records, terminal_database: current };
        }
        let hat = current.trim(t).expect("entry check leaves more than 2t elements");
        let path = deterministic_path(&hat, t);
        let next = falloff_database(&hat, &path, current.len(), t)
            .expect("entry check leaves more than 3t elements");
        records.push(LevelRecord { depth, domain: current.domain(), database: current, path });
        current = next;
        depth += 1;
        debug_assert!(depth <= 200, "level-domain shrink failed to terminate");
    }
}

/// How many depths the construction produces for a database of `n` elements
/// over `domain`. The per-level sizes are `n - 3t(d-1)` regardless of the
/// data, so this is a public quantity.
pub fn available_depths_for(n: u64, domain: &OrderedDomain, t: u64) -> u32 {
    let mut n = n;
    let mut dom = *domain;
    let mut depth = 1u32;
    while !(n <= 10 * t || fits_base_case(&dom)) {
        n -= 3 * t;
        dom = next_level_domain(&dom);
        depth += 1;
    }
    depth
}

/// The depth-`d` database, recomputed from scratch (borrowed for `d = 1`).
fn level_database<'a>(db: &'a Database, t: u64, depth: u32) -> Result<Cow<'a, Database>> {
    let available = available_depths_for(db.len(), &db.domain(), t);
    if depth == 0 || depth > available {
        return Err(Error::Depth { requested: depth, available });
    }
    if depth == 1 {
        return Ok(Cow::Borrowed(db));
    }
    let mut current = advance_level(db, t).expect("depth bounded by availability");
    for _ in 2..depth {
        current = advance_level(&current, t).expect("depth bounded by availability");
    }
    Ok(Cow::Owned(current))
}

/// The stream queried by the stopping rule: the maximum multiplicity of any
/// single element of the depth-`d` database.
pub fn f_query(db: &Database, depth: u32, t: u64) -> Result<u64> {
    Ok(level_database(db, t, depth)?.max_multiplicity())
}

/// Smallest depth whose query value reaches `k`, if any. Deterministic;
/// used by tests and diagnostics, never by the private path.
pub fn d_star(db: &Database, t: u64, k: u64) -> Option<u32> {
    let available = available_depths_for(db.len(), &db.domain(), t);
    (1..=available).find(|&d| f_query(db, d, t).expect("depth available") >= k)
}

/// Privately finds the first depth whose maximum multiplicity crosses
/// `c = k/2`, via one AboveThreshold session over at most `log*|X|` queries.
/// Depths beyond what the construction produces query as zero.
pub fn stopping_point(
    db: &Database,
    step_budget: &PrivacyBudget,
    params: &HeavyParams,
    rng: &mut RandomSource,
) -> Result<u32> {
    params.validate()?;
    let domain = db.domain();
    let m = domain.log_star_size().max(1);
    let available = available_depths_for(db.len(), &domain, params.t);
    let mut session = crate::mech::SvtSession::open(db.len(), step_budget, params.c, m, rng)?;
    for d in 1..=m {
        let value = if d <= available { f_query(db, d, params.t)? } else { 0 };
        if session.query(value as i64, rng)? {
            return Ok(d);
        }
    }
    Err(Error::NoStoppingPoint(m))
}

/// One randomized-path iteration at depth `d`: sample a path of the
/// reconstructed `S_d`, embed the fall-off, privately pick a heavy level `i`
/// of the embedding, then a heavy node at level `i`, and return the best of
/// its four candidate leaves by interior-point score against `S_d`.
pub fn one_random_path(
    db: &Database,
    step_budget: &PrivacyBudget,
    params: &HeavyParams,
    depth: u32,
    rng: &mut RandomSource,
) -> Result<u128> {
    params.validate()?;
    let t = params.t;
    let s_d = level_database(db, t, depth)?;
    let n_d = s_d.len();
    if n_d <= 3 * t {
        return Err(Error::InsufficientData(format!(
            "depth-{depth} database has {n_d} elements, needs more than 3t = {}",
            3 * t
        )));
    }
    let domain = s_d.domain();
    let hat = s_d.trim(t)?;
    let path = sample_path(&hat, step_budget.epsilon(), t, rng)?;
    let falloff = falloff_database(&hat, &path, n_d, t)?;

    let heavy_level = choosing_mechanism(
        &MultiplicityQuery,
        &falloff,
        step_budget,
        step_budget.delta(),
        rng,
    )?
    .ok_or(Error::SelectionFailed)?;
    let level = u32::try_from(heavy_level)
        .ok()
        .filter(|l| *l <= domain.bit_width())
        .ok_or_else(|| {
            Error::Domain(format!(
                "heavy level {heavy_level} outside the {}-level tree",
                domain.bit_width()
            ))
        })?;

    let v_star = choosing_mechanism(
        &NodeWeightQuery { level },
        &hat,
        step_budget,
        step_budget.delta(),
        rng,
    )?
    .ok_or(Error::SelectionFailed)?;

    let entries = candidate_leaves(&v_star, &domain)?
        .into_iter()
        .map(|y| Ok((y, s_d.interior_score(y)? as i64)))
        .collect::<Result<Vec<_>>>()?;
    exponential_mechanism(ScoredCandidates::new(entries), step_budget.epsilon(), rng)
}

/// Translates a level `i` of the depth-`d` tree — an interior point of
/// `S_{d+1}` — into an interior point of `S_d`: privately pick a heavy node
/// at level `i` and return the best of its four candidate leaves.
pub fn level_up(
    db: &Database,
    step_budget: &PrivacyBudget,
    params: &HeavyParams,
    depth: u32,
    level: u32,
    rng: &mut RandomSource,
) -> Result<u128> {
    params.validate()?;
    let t = params.t;
    let s_d = level_database(db, t, depth)?;
    let domain = s_d.domain();
    if level > domain.bit_width() {
        return Err(Error::Domain(format!(
            "level {level} outside the {}-level tree at depth {depth}",
            domain.bit_width()
        )));
    }
    if s_d.len() <= 2 * t {
        return Err(Error::InsufficientData(format!(
            "depth-{depth} database has {} elements, cannot trim {t} from each end",
            s_d.len()
        )));
    }
    let hat = s_d.trim(t)?;
    let v_star = choosing_mechanism(
        &NodeWeightQuery { level },
        &hat,
        step_budget,
        step_budget.delta(),
        rng,
    )?
    .ok_or(Error::SelectionFailed)?;
    let entries = candidate_leaves(&v_star, &domain)?
        .into_iter()
        .map(|y| Ok((y, s_d.interior_score(y)? as i64)))
        .collect::<Result<Vec<_>>>()?;
    exponential_mechanism(ScoredCandidates::new(entries), step_budget.epsilon(), rng)
}

/// Per-invocation budgets hitting a total `(eps, delta)` target across the
/// stopping rule, the randomized-path call, and up to `log*|X|` level-up
/// calls, following the square-root composition profile.
pub fn heavy_step_budget(
    domain: &OrderedDomain,
    n: u64,
    budget: &PrivacyBudget,
) -> Result<PrivacyBudget> {
    let ls = domain.log_star_size().max(1) as f64;
    let log2n = (n.max(2) as f64).log2();
    let profile = (ls * (1.0 / (budget.delta() * ls)).log2().max(1.0)).sqrt() + log2n;
    let epsilon = budget.epsilon() / (HEAVY_SPLIT_CALIBRATION * profile);
    let delta = budget.delta() / (HEAVY_SPLIT_CALIBRATION * (n as f64 + ls));
    PrivacyBudget::new(epsilon, delta)
}

/// Smallest database size accepted by [`heavy_paths`] for this domain and
/// budget: enough that the construction reaches the constant-size domain
/// with more than `10t` elements left, which pigeonholes a multiplicity of
/// at least `k` there and makes the stopping rule well defined.
pub fn heavy_min_database_size(domain: &OrderedDomain, budget: &PrivacyBudget) -> Result<u64> {
    let levels = trim_level_count(domain, DEFAULT_BASE_CASE_DOMAIN) as u64;
    let mut n = 64u64;
    for _ in 0..64 {
        let step = heavy_step_budget(domain, n, budget)?;
        let params =
            HeavyParams::derive(domain, step.epsilon(), step.delta(), DEFAULT_LAMBDA)?;
        let required = params.t * (3 * levels + 10) + 1;
        if required <= n {
            return Ok(n);
        }
        n = required;
    }
    Ok(n)
}

/// The decomposed solver under a total privacy budget: stopping point, one
/// randomized path at the level below it, then level-up translations back to
/// the input. Refuses databases below [`heavy_min_database_size`].
pub fn heavy_paths(db: &Database, budget: &PrivacyBudget, rng: &mut RandomSource) -> Result<u128> {
    heavy_paths_with_lambda(db, budget, DEFAULT_LAMBDA, rng)
}

/// [`heavy_paths`] with an overridden heaviness constant lambda.
pub fn heavy_paths_with_lambda(
    db: &Database,
    budget: &PrivacyBudget,
    lambda: f64,
    rng: &mut RandomSource,
) -> Result<u128> {
    let domain = db.domain();
    let n_min = heavy_min_database_size(&domain, budget)?;
    if db.len() < n_min {
        return Err(Error::InsufficientData(format!(
            "need at least {n_min} elements for this domain and budget, got {}",
            db.len()
        )));
    }
    let step = heavy_step_budget(&domain, db.len(), budget)?;
    let params = HeavyParams::derive(&domain, step.epsilon(), step.delta(), lambda)?;
    heavy_paths_with_params(db, &step, &params, rng)
}

/// The decomposed solver with explicit per-step budget and parameters.
pub fn heavy_paths_with_params(
    db: &Database,
    step_budget: &PrivacyBudget,
    params: &HeavyParams,
    rng: &mut RandomSource,
) -> Result<u128> {
    let d_hat = stopping_point(db, step_budget, params, rng)?;
    if d_hat == 1 {
        // The stopping rule fired on the input itself: some element already
        // has multiplicity around k, and any heavy element is an interior
        // point. Pick one privately.
        return choosing_mechanism(
            &MultiplicityQuery,
            db,
            step_budget,
            step_budget.delta(),
            rng,
        )?
        .ok_or(Error::SelectionFailed);
    }
    let mut y = one_random_path(db, step_budget, params, d_hat - 1, rng)?;
    for depth in (1..=d_hat - 2).rev() {
        let level = u32::try_from(y).map_err(|_| {
            Error::Domain(format!("interior point {y} is not a tree level"))
        })?;
        y = level_up(db, step_budget, params, depth, level, rng)?;
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::NodeId;

    fn domain(bits: u32) -> OrderedDomain {
        OrderedDomain::from_bit_width(bits).unwrap()
    }

    fn db(values: Vec<u128>, bits: u32) -> Database {
        Database::new(values, domain(bits)).unwrap()
    }

    #[test]
    fn construction_is_deterministic() {
        let mut values: Vec<u128> = (0..500u128).map(|i| (i * 7919) % 65536).collect();
        values.extend(vec![12345u128; 300]);
        let d = db(values, 16);
        let a = construct_paths(&d, 5);
        let b = construct_paths(&d, 5);
        assert_eq!(a, b);
        assert!(!a.records.is_empty());
    }

    #[test]
    fn constant_database_first_record() {
        let n = 200u64;
        let t = 10u64;
        let d = db(vec![9; n as usize], 4);
        let decomp = construct_paths(&d, t);
        assert_eq!(decomp.records.len(), 1);
        let record = &decomp.records[0];
        assert_eq!(record.depth, 1);
        assert_eq!(record.path.len(), 5);
        assert_eq!(*record.path.last(), NodeId::new(4, 9).unwrap());
        // Everything pads at the leaf: S_2 is n - 3t copies of the leaf level.
        assert_eq!(
            decomp.terminal_database.elements(),
            vec![4u128; (n - 3 * t) as usize].as_slice()
        );
        assert_eq!(decomp.terminal_database.domain().bit_width(), 3);
    }

    #[test]
    fn two_cluster_falloff_and_f_query() {
        // Fifty 0s and fifty 7s over b = 3 with t = 1: the tie at the root
        // breaks left, 49 elements fall off at the root, and the rest pads
        // at leaf 0. So S_2 = 49 copies of 0 plus 48 copies of 3.
        let mut values = vec![0u128; 50];
        values.extend(vec![7u128; 50]);
        let d = db(values, 3);
        let decomp = construct_paths(&d, 1);
        assert_eq!(decomp.records.len(), 1);
        let s2 = decomp.database_at(2).unwrap();
        let mut expected = vec![0u128; 49];
        expected.extend(vec![3u128; 48]);
        assert_eq!(s2.elements(), expected.as_slice());

        assert_eq!(f_query(&d, 1, 1).unwrap(), 50);
        assert_eq!(f_query(&d, 2, 1).unwrap(), 49);
        assert!(matches!(f_query(&d, 3, 1), Err(Error::Depth { requested: 3, available: 2 })));
    }

    #[test]
    fn f_query_depth_one_cases() {
        let constant = db(vec![6; 120], 4);
        assert_eq!(f_query(&constant, 1, 3).unwrap(), 120);
        let distinct = db((0..100u128).collect(), 8);
        assert_eq!(f_query(&distinct, 1, 3).unwrap(), 1);
    }

    #[test]
    fn available_depths_match_reality() {
        let mut values: Vec<u128> = (0..3000u128).map(|i| (i * 2654435761) % (1 << 16)).collect();
        values.extend(vec![4242u128; 500]);
        let d = db(values, 16);
        for t in [5u64, 20, 60] {
            let predicted = available_depths_for(d.len(), &d.domain(), t);
            let actual = construct_paths(&d, t).available_depths();
            assert_eq!(predicted, actual, "t = {t}");
        }
    }

    #[test]
    fn sizes_shrink_by_exactly_three_t() {
        let values: Vec<u128> = (0..4000u128).map(|i| (i * 48271) % (1 << 20)).collect();
        let d = db(values, 20);
        let t = 30u64;
        let decomp = construct_paths(&d, t);
        for record in &decomp.records {
            let expected = d.len() - 3 * t * (record.depth as u64 - 1);
            assert_eq!(record.database.len(), expected, "depth {}", record.depth);
        }
        let terminal_depth = decomp.available_depths() as u64;
        assert_eq!(decomp.terminal_database.len(), d.len() - 3 * t * (terminal_depth - 1));
    }

    #[test]
    fn stopping_point_noiseless_is_the_first_crossing() {
        let params = HeavyParams::explicit(4.0, 8).unwrap();
        let budget = PrivacyBudget::new(1.0, 1e-3).unwrap();
        // Constant database: f_1 = n >= c immediately.
        let constant = db(vec![3; 400], 8);
        let mut rng = RandomSource::noiseless(1);
        assert_eq!(stopping_point(&constant, &budget, &params, &mut rng).unwrap(), 1);
        // All-distinct database: f_1 = 1 < c = 4, but the embedding piles up.
        let spread = db((0..400u128).collect(), 8);
        let expected = d_star(&spread, params.t, (params.c.ceil()) as u64).unwrap();
        let mut rng = RandomSource::noiseless(2);
        let got = stopping_point(&spread, &budget, &params, &mut rng).unwrap();
        // Noiseless AboveThreshold fires exactly at the first f_d >= c.
        let available = available_depths_for(spread.len(), &spread.domain(), params.t);
        let first = (1..=available)
            .find(|&d| f_query(&spread, d, params.t).unwrap() as f64 >= params.c)
            .unwrap();
        assert_eq!(got, first);
        assert!(got <= expected);
    }

    #[test]
    fn stopping_point_without_heavy_levels_errors() {
        // Too small for any multiplicity to reach c in the available depths.
        let params = HeavyParams::explicit(4.0, 50).unwrap();
        let budget = PrivacyBudget::new(1.0, 1e-3).unwrap();
        let spread = db((0..64u128).collect(), 16);
        let mut rng = RandomSource::noiseless(3);
        assert!(matches!(
            stopping_point(&spread, &budget, &params, &mut rng),
            Err(Error::NoStoppingPoint(_))
        ));
    }

    #[test]
    fn one_random_path_depth_one_operates_on_the_input() {
        // Constant database at depth 1: both choosing calls have a unique
        // dominant candidate, so the modal output is the constant itself.
        let params = HeavyParams::explicit(4.0, 4).unwrap();
        let budget = PrivacyBudget::new(1.0, 1e-3).unwrap();
        let d = db(vec![200; 900], 16);
        let mut modal = 0;
        let runs = 60;
        for seed in 0..runs {
            let mut rng = RandomSource::seeded(seed);
            if one_random_path(&d, &budget, &params, 1, &mut rng).unwrap() == 200 {
                modal += 1;
            }
        }
        assert!(modal * 10 >= runs * 9, "modal rate {modal}/{runs}");
    }

    #[test]
    fn level_up_output_is_always_a_candidate_leaf() {
        let params = HeavyParams::explicit(4.0, 2).unwrap();
        let budget = PrivacyBudget::new(1.0, 1e-3).unwrap();
        let mut values = vec![100u128; 300];
        values.extend(vec![4000u128; 300]);
        let d = db(values, 16);
        for (seed, level) in [(1u64, 0u32), (2, 3), (3, 9), (4, 16)] {
            let mut rng = RandomSource::seeded(seed);
            match level_up(&d, &budget, &params, 1, level, &mut rng) {
                Ok(y) => {
                    // y must be one of the four candidate leaves of some
                    // level-`level` node.
                    let node = NodeId::containing(&d.domain(), level, y).unwrap();
                    let cands = candidate_leaves(&node, &d.domain()).unwrap();
                    assert!(cands.contains(&y), "y = {y} at level {level}");
                }
                Err(Error::SelectionFailed) => {}
                Err(other) => panic!("unexpected error: {other}"),
            }
        }
        let mut rng = RandomSource::seeded(9);
        assert!(matches!(
            level_up(&d, &budget, &params, 1, 17, &mut rng),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn level_up_spanning_node_prefers_inner_candidates() {
        // All data inside one level-1 subtree, straddling its child split at
        // 3|4: the outer candidates score 0, the inner ones score half the
        // database.
        let params = HeavyParams::explicit(4.0, 1).unwrap();
        let budget = PrivacyBudget::new(2.0, 1e-3).unwrap();
        let mut values = vec![3u128; 300];
        values.extend(vec![4u128; 300]);
        let d = db(values, 3);
        let mut inner = 0;
        let runs = 200;
        for seed in 0..runs {
            let mut rng = RandomSource::seeded(400 + seed);
            let y = level_up(&d, &budget, &params, 1, 1, &mut rng).unwrap();
            assert!([0u128, 3, 4, 7].contains(&y));
            if y == 3 || y == 4 {
                inner += 1;
            }
        }
        assert!(inner * 100 >= runs * 95, "inner rate {inner}/{runs}");
    }

    #[test]
    fn heavy_paths_constant_database_returns_the_constant() {
        let params = HeavyParams::explicit(4.0, 4).unwrap();
        let budget = PrivacyBudget::new(1.0, 1e-3).unwrap();
        let d = db(vec![777; 600], 16);
        for seed in 0..30 {
            let mut rng = RandomSource::seeded(seed);
            let y = heavy_paths_with_params(&d, &budget, &params, &mut rng).unwrap();
            assert_eq!(y, 777, "seed {seed}");
        }
    }

    #[test]
    fn heavy_paths_budget_entry_refuses_small_databases() {
        let d = db(vec![1, 2, 3], 32);
        let budget = PrivacyBudget::new(1.0, 1e-6).unwrap();
        let mut rng = RandomSource::seeded(5);
        assert!(matches!(heavy_paths(&d, &budget, &mut rng), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn heavy_min_size_is_self_consistent() {
        let dom = domain(64);
        let budget = PrivacyBudget::new(1.0, 1e-6).unwrap();
        let n_min = heavy_min_database_size(&dom, &budget).unwrap();
        let step = heavy_step_budget(&dom, n_min, &budget).unwrap();
        let params = HeavyParams::derive(&dom, step.epsilon(), step.delta(), DEFAULT_LAMBDA).unwrap();
        let levels = trim_level_count(&dom, DEFAULT_BASE_CASE_DOMAIN) as u64;
        assert!(n_min > params.t * (3 * levels + 10));
        // At that size the terminal database still has more than 10t
        // elements over a constant-size domain, so d* exists.
        let depth = available_depths_for(n_min, &dom, params.t) as u64;
        assert!(n_min - 3 * params.t * (depth - 1) > 10 * params.t);
    }
}

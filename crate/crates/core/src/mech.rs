//! Differentially private building blocks.
//!
//! Three selection primitives and their noise source:
//!
//! - the exponential mechanism, sampling a candidate `f` with probability
//!   proportional to `exp(eps * q(f) / (2 * sensitivity))`;
//! - the choosing mechanism, an `(eps, delta)`-private selection for
//!   1-bounded-growth (and generally k-bounded-growth) quality functions
//!   whose guarantee does not depend on the size of the solution set;
//! - an AboveThreshold sparse-vector session answering a stream of
//!   sensitivity-1 queries with one above-threshold detection.
//!
//! All sampling is done in log space with max subtraction: node weights
//! reach the tens of thousands and `exp(eps * w)` overflows long before
//! that.

use rand::distributions::Open01;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{Database, NodeId, PrivacyBudget};
use crate::error::{Error, Result};

/// Seedable deterministic randomness for every mechanism in the crate.
/// Identical seeds yield identical draw sequences.
///
/// The noiseless mode zeroes every Laplace draw so that threshold logic can
/// be unit-tested deterministically. It is only constructible in builds with
/// debug assertions; release artifacts cannot run without noise.
pub struct RandomSource {
    rng: ChaCha8Rng,
    noiseless: bool,
}

impl RandomSource {
    pub fn seeded(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), noiseless: false }
    }

    /// Draws a fresh seed from system entropy and returns it alongside the
    /// source, so callers can report it for reproduction.
    pub fn from_entropy() -> (u64, Self) {
        let seed = rand::thread_rng().next_u64();
        (seed, Self::seeded(seed))
    }

    /// Worker stream for one trial: mixes `(master_seed, trial)` so that
    /// trials are independent and insensitive to scheduling order.
    pub fn for_trial(master_seed: u64, trial: u64) -> Self {
        // SplitMix64 finalizer over the pair.
        let mut z = master_seed ^ trial.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        Self::seeded(z ^ (z >> 31))
    }

    #[cfg(debug_assertions)]
    pub fn noiseless(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), noiseless: true }
    }

    pub fn is_noiseless(&self) -> bool {
        self.noiseless
    }

    /// Uniform draw from the open interval (0, 1).
    pub fn open01(&mut self) -> f64 {
        self.rng.sample(Open01)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform element of `[0, bound)`.
    pub fn below_u128(&mut self, bound: u128) -> u128 {
        self.rng.gen_range(0..bound)
    }
}

/// One draw from the zero-mean Laplace distribution with the given scale.
/// Returns 0 in noiseless mode.
pub fn laplace(scale: f64, rng: &mut RandomSource) -> f64 {
    debug_assert!(scale > 0.0);
    if rng.is_noiseless() {
        return 0.0;
    }
    let u = rng.open01();
    if u < 0.5 {
        scale * (2.0 * u).ln()
    } else {
        -scale * (2.0 * (1.0 - u)).ln()
    }
}

/// Picks side 1 with probability `exp(eps*w1) / (exp(eps*w0) + exp(eps*w1))`,
/// evaluated through the logistic of `eps * (w1 - w0)` so that weights of any
/// magnitude neither overflow nor lose the tail.
pub fn two_way_exp_choice(w0: u64, w1: u64, epsilon: f64, rng: &mut RandomSource) -> bool {
    let diff = epsilon * (w1 as f64 - w0 as f64);
    let p1 = if diff >= 0.0 {
        1.0 / (1.0 + (-diff).exp())
    } else {
        let e = diff.exp();
        e / (1.0 + e)
    };
    rng.open01() < p1
}

/// A finite scored candidate set for the exponential mechanism.
#[derive(Debug, Clone)]
pub struct ScoredCandidates<C> {
    entries: Vec<(C, i64)>,
    sensitivity: u32,
}

impl<C> ScoredCandidates<C> {
    /// Sensitivity defaults to 1.
    pub fn new(entries: Vec<(C, i64)>) -> Self {
        Self { entries, sensitivity: 1 }
    }

    pub fn with_sensitivity(entries: Vec<(C, i64)>, sensitivity: u32) -> Result<Self> {
        if sensitivity == 0 {
            return Err(Error::Param("sensitivity must be positive".into()));
        }
        Ok(Self { entries, sensitivity })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// The exponential mechanism: returns candidate `i` with probability
/// `exp(eps*q_i/(2*sens)) / sum_j exp(eps*q_j/(2*sens))`.
pub fn exponential_mechanism<C>(
    cands: ScoredCandidates<C>,
    epsilon: f64,
    rng: &mut RandomSource,
) -> Result<C> {
    if cands.is_empty() {
        return Err(Error::EmptyChoice);
    }
    if !(epsilon > 0.0) {
        return Err(Error::Param(format!("epsilon must be positive, got {epsilon}")));
    }
    let scale = epsilon / (2.0 * cands.sensitivity as f64);
    let logits: Vec<f64> = cands.entries.iter().map(|(_, q)| scale * *q as f64).collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut target = rng.open01() * total;
    let mut winner = cands.entries.len() - 1;
    for (i, w) in weights.iter().enumerate() {
        if target < *w {
            winner = i;
            break;
        }
        target -= w;
    }
    Ok(cands.entries.into_iter().nth(winner).expect("index in range").0)
}

/// A quality function with k-bounded growth: adding one element to the
/// database raises the score of at most `k` candidates, each by exactly 1,
/// and `q(empty, f) = 0` for every `f`.
///
/// Implementations enumerate only the candidates with strictly positive
/// score — at most `k * n` of them — which is what lets the choosing
/// mechanism beat the `log |F|` dependence of the exponential mechanism.
pub trait BoundedGrowthQuery {
    type Candidate: Clone;

    fn growth_bound(&self) -> u64;

    /// All candidates with strictly positive score, with their scores.
    fn positive_candidates(&self, db: &Database) -> Vec<(Self::Candidate, u64)>;
}

/// Quality = multiplicity of the candidate element in the database
/// (1-bounded growth).
#[derive(Debug, Clone, Copy)]
pub struct MultiplicityQuery;

impl BoundedGrowthQuery for MultiplicityQuery {
    type Candidate = u128;

    fn growth_bound(&self) -> u64 {
        1
    }

    fn positive_candidates(&self, db: &Database) -> Vec<(u128, u64)> {
        let mut out = Vec::new();
        let mut run_start = 0usize;
        let elements = db.elements();
        for i in 1..=elements.len() {
            if i == elements.len() || elements[i] != elements[run_start] {
                out.push((elements[run_start], (i - run_start) as u64));
                run_start = i;
            }
        }
        out
    }
}

/// Quality of a node at a fixed tree level = its subtree weight
/// (1-bounded growth: one new element raises exactly one node per level).
#[derive(Debug, Clone, Copy)]
pub struct NodeWeightQuery {
    pub level: u32,
}

impl BoundedGrowthQuery for NodeWeightQuery {
    type Candidate = NodeId;

    fn growth_bound(&self) -> u64 {
        1
    }

    fn positive_candidates(&self, db: &Database) -> Vec<(NodeId, u64)> {
        let domain = db.domain();
        let b = domain.bit_width();
        debug_assert!(self.level <= b);
        let shift = b - self.level;
        let mut out = Vec::new();
        let elements = db.elements();
        let prefix_of = |x: u128| if shift == 128 { 0 } else { x >> shift };
        let mut run_start = 0usize;
        for i in 1..=elements.len() {
            if i == elements.len() || prefix_of(elements[i]) != prefix_of(elements[run_start]) {
                let node = NodeId { level: self.level, prefix: prefix_of(elements[run_start]) };
                out.push((node, (i - run_start) as u64));
                run_start = i;
            }
        }
        out
    }
}

/// The choosing mechanism for k-bounded-growth queries.
///
/// Two phases: first a noisy comparison of the best score against
/// `(8/eps) * ln(4kn / (beta*eps*delta))` which yields bottom when the
/// instance has no meaningfully heavy candidate, then the exponential
/// mechanism with budget `eps/2` over the candidates with strictly positive
/// score. Returns `None` for bottom.
pub fn choosing_mechanism<Q: BoundedGrowthQuery>(
    query: &Q,
    db: &Database,
    budget: &PrivacyBudget,
    beta: f64,
    rng: &mut RandomSource,
) -> Result<Option<Q::Candidate>> {
    let epsilon = budget.epsilon();
    let delta = budget.delta();
    if !(epsilon > 0.0 && epsilon <= 2.0) {
        return Err(Error::Param(format!(
            "choosing mechanism requires 0 < epsilon <= 2, got {epsilon}"
        )));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Param(format!("beta must lie in (0, 1), got {beta}")));
    }

    let candidates = query.positive_candidates(db);
    let opt = candidates.iter().map(|(_, q)| *q).max().unwrap_or(0);
    let k = query.growth_bound() as f64;
    let n = db.len() as f64;
    let threshold = (8.0 / epsilon) * (4.0 * k * n / (beta * epsilon * delta)).ln();

    if (opt as f64) + laplace(4.0 / epsilon, rng) < threshold {
        return Ok(None);
    }
    if candidates.is_empty() {
        return Ok(None);
    }
    let scored = ScoredCandidates::new(
        candidates.into_iter().map(|(c, q)| (c, q as i64)).collect(),
    );
    exponential_mechanism(scored, epsilon / 2.0, rng).map(Some)
}

/// One AboveThreshold run: answers up to `max_queries` sensitivity-1 queries,
/// emitting bottom until the first (noisy) above-threshold query, then top,
/// after which the session refuses further queries.
#[derive(Debug)]
pub struct SvtSession {
    epsilon: f64,
    threshold: f64,
    noised_threshold: f64,
    max_queries: u32,
    queries_issued: u32,
    halted: bool,
    db_size: u64,
}

impl SvtSession {
    /// Opens a session; the threshold noise `Laplace(2/eps)` is drawn once
    /// here, per-query noise is `Laplace(4/eps)`.
    pub fn open(
        db_size: u64,
        budget: &PrivacyBudget,
        threshold: f64,
        max_queries: u32,
        rng: &mut RandomSource,
    ) -> Result<Self> {
        if max_queries == 0 {
            return Err(Error::Param("max_queries must be positive".into()));
        }
        let epsilon = budget.epsilon();
        let noised_threshold = threshold + laplace(2.0 / epsilon, rng);
        Ok(Self {
            epsilon,
            threshold,
            noised_threshold,
            max_queries,
            queries_issued: 0,
            halted: false,
            db_size,
        })
    }

    /// Feeds the already-evaluated value of the next sensitivity-1 query.
    /// Returns `true` for top (and halts the session), `false` for bottom.
    pub fn query(&mut self, value: i64, rng: &mut RandomSource) -> Result<bool> {
        if self.halted {
            return Err(Error::SessionClosed);
        }
        if self.queries_issued == self.max_queries {
            return Err(Error::Param(format!(
                "sparse-vector session exhausted its {} queries",
                self.max_queries
            )));
        }
        self.queries_issued += 1;
        let noisy = value as f64 + laplace(4.0 / self.epsilon, rng);
        if noisy >= self.noised_threshold {
            self.halted = true;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn halted(&self) -> bool {
        self.halted
    }

    pub fn db_size(&self) -> u64 {
        self.db_size
    }
}

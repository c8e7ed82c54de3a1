//! Empirical verification engine: privacy auditing on tiny domains,
//! utility benchmarking, and the oracle-equivalence selftest.
//!
//! The audit estimates a lower bound on the epsilon of the differential
//! privacy inequality `P[A(S) in T] <= e^eps * P[A(S') in T] + delta` from
//! outcome histograms of many seeded runs on a fixed neighboring pair. It is
//! one-sided by construction: a report can only ever show that a mechanism
//! leaks *at least* some epsilon, so acceptance checks "no violation of the
//! theoretical bound", never tightness.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::domain::{Database, OrderedDomain, PrivacyBudget};
use crate::error::{Error, Result};
use crate::heavy::{
    heavy_min_database_size, heavy_paths_with_lambda, heavy_paths_with_params, HeavyParams,
    DEFAULT_LAMBDA,
};
use crate::learner::SolverKind;
use crate::mech::{laplace, RandomSource};
use crate::oracle::{scan_weight, ExplicitTree};
use crate::treelog::{
    falloff_database, min_database_size, sample_path, treelog, treelog_with_params, AlgoParams,
};

/// Confidence level of the per-event Clopper-Pearson adjustment.
const CP_ALPHA: f64 = 0.05;

/// Fewest trials per side for which an epsilon estimate is reported.
pub const MIN_AUDIT_TRIALS: u64 = 10_000;

/// Widest domain whose outcome space the audit will histogram.
pub const MAX_AUDIT_BITS: u32 = 6;

// ---------------------------------------------------------------------------
// Trial reports
// ---------------------------------------------------------------------------

/// Result payload of a single trial: a domain element or an error label.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TrialOutcome {
    Point(u128),
    Failure(String),
}

impl fmt::Display for TrialOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Point(v) => write!(f, "{v}"),
            Self::Failure(e) => write!(f, "!{e}"),
        }
    }
}

/// One solver invocation, as persisted to the line-delimited JSON log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialReport {
    pub algo: String,
    pub params: serde_json::Value,
    pub seed: u64,
    pub outcome: TrialOutcome,
    pub success: bool,
    pub score: u64,
    pub ms: f64,
}

// ---------------------------------------------------------------------------
// Privacy auditing
// ---------------------------------------------------------------------------

/// The mechanism under audit, with explicit per-step parameters so that the
/// audited epsilon is the per-step epsilon the theoretical bounds speak of.
#[derive(Debug, Clone)]
pub enum AuditTarget {
    TreeLog { params: AlgoParams },
    HeavyPaths { step_budget: PrivacyBudget, params: HeavyParams },
    /// Sanity target with a known tight epsilon: a Laplace-noised count,
    /// rounded and clamped to keep the outcome space finite.
    LaplaceCount { epsilon: f64 },
}

impl AuditTarget {
    pub fn name(&self) -> &'static str {
        match self {
            Self::TreeLog { .. } => "treelog",
            Self::HeavyPaths { .. } => "heavy-paths",
            Self::LaplaceCount { .. } => "laplace-count",
        }
    }

    pub fn params_json(&self) -> serde_json::Value {
        match self {
            Self::TreeLog { params } => serde_json::to_value(params).expect("serializable"),
            Self::HeavyPaths { step_budget, params } => serde_json::json!({
                "step_epsilon": step_budget.epsilon(),
                "step_delta": step_budget.delta(),
                "params": params,
            }),
            Self::LaplaceCount { epsilon } => serde_json::json!({ "epsilon": epsilon }),
        }
    }

    /// The theoretical epsilon the audited lower bound is compared against.
    pub fn theoretical_bound(&self, db: &Database) -> f64 {
        let n = db.len().max(2) as f64;
        let ls = db.domain().log_star_size().max(1) as f64;
        match self {
            // Composed privacy of the full recursion in terms of the
            // per-step epsilon: 5 eps log*|X| log2 n.
            Self::TreeLog { params } => 5.0 * params.per_step_epsilon * ls * n.log2(),
            // The square-root composition profile of the decomposition:
            // eps*sqrt(log* log2(1/(delta log*))) + eps^2 log* + eps log2 n.
            Self::HeavyPaths { step_budget, .. } => {
                let eps = step_budget.epsilon();
                let delta = step_budget.delta();
                eps * (ls * (1.0 / (delta * ls)).log2().max(1.0)).sqrt()
                    + eps * eps * ls
                    + eps * n.log2()
            }
            Self::LaplaceCount { epsilon } => *epsilon,
        }
    }

    /// One seeded run; algorithm errors are ordinary outcomes.
    pub fn run(&self, db: &Database, rng: &mut RandomSource) -> TrialOutcome {
        let result = match self {
            Self::TreeLog { params } => treelog_with_params(db, params, rng),
            Self::HeavyPaths { step_budget, params } => {
                heavy_paths_with_params(db, step_budget, params, rng)
            }
            Self::LaplaceCount { epsilon } => {
                let noisy = db.len() as f64 + laplace(1.0 / epsilon, rng);
                let clamped = noisy.round().clamp(0.0, 2.0 * db.len() as f64 + 16.0);
                Ok(clamped as u128)
            }
        };
        match result {
            Ok(point) => TrialOutcome::Point(point),
            Err(e) => TrialOutcome::Failure(e.kind().to_string()),
        }
    }
}

/// Outcome histograms of both sides plus the estimated epsilon lower bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditReport {
    pub algo: String,
    pub params: serde_json::Value,
    pub trials_per_side: u64,
    pub delta_target: f64,
    pub outcomes_s: BTreeMap<String, u64>,
    pub outcomes_s_prime: BTreeMap<String, u64>,
    /// Point estimate of the best distinguishing event's epsilon.
    pub eps_hat: f64,
    /// Lower confidence bound of the same; what the violation flag compares.
    pub eps_hat_lower: f64,
    pub theoretical_bound: f64,
    pub violation: bool,
}

/// Multiset symmetric-difference size between two sorted element lists.
fn multiset_sym_diff(a: &[u128], b: &[u128]) -> u64 {
    let (mut i, mut j) = (0usize, 0usize);
    let mut diff = 0u64;
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
            std::cmp::Ordering::Less => {
                i += 1;
                diff += 1;
            }
            std::cmp::Ordering::Greater => {
                j += 1;
                diff += 1;
            }
        }
    }
    diff + (a.len() - i) as u64 + (b.len() - j) as u64
}

/// Checks the neighboring-database relation: equal multisets, one insertion
/// or removal, or one replacement.
pub fn are_neighboring(s: &Database, s_prime: &Database) -> bool {
    let diff = multiset_sym_diff(s.elements(), s_prime.elements());
    match s.len().abs_diff(s_prime.len()) {
        0 => diff <= 2,
        1 => diff == 1,
        _ => false,
    }
}

fn clopper_pearson(successes: u64, n: u64, alpha: f64) -> (f64, f64) {
    let lower = if successes == 0 {
        0.0
    } else {
        Beta::new(successes as f64, (n - successes) as f64 + 1.0)
            .expect("valid shape")
            .inverse_cdf(alpha / 2.0)
    };
    let upper = if successes == n {
        1.0
    } else {
        Beta::new(successes as f64 + 1.0, (n - successes) as f64)
            .expect("valid shape")
            .inverse_cdf(1.0 - alpha / 2.0)
    };
    (lower, upper)
}

/// Epsilon estimates from a pair of outcome histograms: the maximum over all
/// singleton events and all unions in the sorted-likelihood-ratio order, in
/// both directions, of `ln((P[T] - delta) / Q[T])`. Returns the raw point
/// estimate and the Clopper-Pearson-adjusted lower confidence bound, both
/// clamped at zero.
pub fn epsilon_hat_from_histograms(
    hist_s: &BTreeMap<String, u64>,
    hist_s_prime: &BTreeMap<String, u64>,
    trials_per_side: u64,
    delta_target: f64,
) -> (f64, f64) {
    let keys: Vec<&String> = hist_s.keys().chain(hist_s_prime.keys()).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let n = trials_per_side as f64;

    let direction = |p: &BTreeMap<String, u64>, q: &BTreeMap<String, u64>| -> (f64, f64) {
        let mut counts: Vec<(u64, u64)> = keys
            .iter()
            .map(|k| (p.get(*k).copied().unwrap_or(0), q.get(*k).copied().unwrap_or(0)))
            .collect();
        // Likelihood-ratio order, most distinguishing outcomes first.
        counts.sort_by(|a, b| {
            let ra = (a.0 as f64 + 0.5) / (a.1 as f64 + 0.5);
            let rb = (b.0 as f64 + 0.5) / (b.1 as f64 + 0.5);
            rb.partial_cmp(&ra).expect("finite ratios")
        });

        let mut best_point = 0.0f64;
        let mut best_lower = 0.0f64;
        let mut eval = |pc: u64, qc: u64| {
            let p_hat = pc as f64 / n;
            let q_hat = qc as f64 / n;
            if q_hat > 0.0 && p_hat - delta_target > 0.0 {
                best_point = best_point.max(((p_hat - delta_target) / q_hat).ln());
            }
            let (p_lo, _) = clopper_pearson(pc, trials_per_side, CP_ALPHA);
            let (_, q_hi) = clopper_pearson(qc, trials_per_side, CP_ALPHA);
            if p_lo - delta_target > 0.0 && q_hi > 0.0 {
                best_lower = best_lower.max(((p_lo - delta_target) / q_hi).ln());
            }
        };
        // Singleton events.
        for &(pc, qc) in &counts {
            eval(pc, qc);
        }
        // Union events along the sorted prefix family.
        let (mut pc, mut qc) = (0u64, 0u64);
        for &(dp, dq) in &counts {
            pc += dp;
            qc += dq;
            eval(pc, qc);
        }
        (best_point.max(0.0), best_lower.max(0.0))
    };

    let (p1, l1) = direction(hist_s, hist_s_prime);
    let (p2, l2) = direction(hist_s_prime, hist_s);
    (p1.max(p2), l1.max(l2))
}

fn outcome_histogram(
    target: &AuditTarget,
    db: &Database,
    trials: u64,
    master_seed: u64,
) -> BTreeMap<String, u64> {
    let outcomes: Vec<TrialOutcome> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = RandomSource::for_trial(master_seed, i);
            target.run(db, &mut rng)
        })
        .collect();
    let mut hist = BTreeMap::new();
    for outcome in outcomes {
        *hist.entry(outcome.to_string()).or_insert(0) += 1;
    }
    hist
}

/// Runs the mechanism `trials` times on each of two neighboring databases
/// and reports the empirical epsilon lower bound against the target's
/// theoretical bound at the given delta.
pub fn audit_privacy(
    target: &AuditTarget,
    s: &Database,
    s_prime: &Database,
    trials_per_side: u64,
    delta_target: f64,
    master_seed: u64,
) -> Result<AuditReport> {
    if !are_neighboring(s, s_prime) {
        return Err(Error::AuditSetup(
            "databases are not neighboring (one entry added, removed, or replaced)".into(),
        ));
    }
    let bits = s.domain().bit_width().max(s_prime.domain().bit_width());
    if bits > MAX_AUDIT_BITS {
        return Err(Error::AuditSetup(format!(
            "audit domains are capped at {MAX_AUDIT_BITS} bits for estimable histograms, got {bits}"
        )));
    }
    if trials_per_side < MIN_AUDIT_TRIALS {
        return Err(Error::AuditSetup(format!(
            "need at least {MIN_AUDIT_TRIALS} trials per side to report an epsilon, got {trials_per_side}"
        )));
    }
    if !(delta_target >= 0.0 && delta_target < 1.0) {
        return Err(Error::AuditSetup(format!("delta target out of range: {delta_target}")));
    }

    let outcomes_s = outcome_histogram(target, s, trials_per_side, master_seed);
    let outcomes_s_prime =
        outcome_histogram(target, s_prime, trials_per_side, master_seed.wrapping_add(0x5EED));
    let (eps_hat, eps_hat_lower) =
        epsilon_hat_from_histograms(&outcomes_s, &outcomes_s_prime, trials_per_side, delta_target);
    let theoretical_bound = target.theoretical_bound(s);
    Ok(AuditReport {
        algo: target.name().to_string(),
        params: target.params_json(),
        trials_per_side,
        delta_target,
        outcomes_s,
        outcomes_s_prime,
        eps_hat,
        eps_hat_lower,
        theoretical_bound,
        violation: eps_hat_lower > theoretical_bound,
    })
}

// ---------------------------------------------------------------------------
// Utility benchmarking
// ---------------------------------------------------------------------------

/// Shapes of synthetic databases for the benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataKind {
    /// Uniform draws over the whole domain.
    Uniform,
    /// Two spread-out clusters around the 1/5 and 4/5 points of the domain.
    Bimodal,
    /// Every element equal to one random value.
    Constant,
    /// Rotates through the other three per trial.
    Mixed,
}

/// One experiment: repeated seeded solver runs on fresh synthetic data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchConfig {
    pub algorithm: SolverKind,
    pub bits: u32,
    /// Database size; 0 means the solver's implemented minimum for the
    /// domain and budget.
    pub n: u64,
    pub epsilon: f64,
    pub delta: f64,
    pub trials: u64,
    pub seed: u64,
    pub data: DataKind,
    /// Override of the heaviness constant lambda for the decomposed solver.
    pub lambda: Option<f64>,
}

/// Aggregate of one benchmark run. Wall-clock fields live only in the file
/// outputs, never on stdout, so CLI output stays byte-reproducible.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub algo: String,
    pub bits: u32,
    pub n: u64,
    pub epsilon: f64,
    pub delta: f64,
    pub trials: u64,
    pub successes: u64,
    pub success_rate: f64,
    /// Mean interior-point score over successful trials.
    pub mean_score: f64,
    pub p50_ms: f64,
    pub p90_ms: f64,
    pub p99_ms: f64,
}

/// The summary schema shared by `bench` and `audit`: fields that do not
/// apply are null.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub success_rate: Option<f64>,
    pub mean_score: Option<f64>,
    pub eps_hat: Option<f64>,
    pub bound: Option<f64>,
    pub violation: Option<bool>,
}

impl Summary {
    pub fn from_bench(report: &BenchReport) -> Self {
        Self {
            success_rate: Some(report.success_rate),
            mean_score: Some(report.mean_score),
            eps_hat: None,
            bound: None,
            violation: None,
        }
    }

    pub fn from_audit(report: &AuditReport) -> Self {
        Self {
            success_rate: None,
            mean_score: None,
            eps_hat: Some(report.eps_hat_lower),
            bound: Some(report.theoretical_bound),
            violation: Some(report.violation),
        }
    }
}

/// Uniform element of the domain.
pub fn random_element(domain: &OrderedDomain, rng: &mut RandomSource) -> u128 {
    let raw = ((rng.next_u64() as u128) << 64) | rng.next_u64() as u128;
    raw & domain.max_element()
}

/// Synthesizes one database of the given shape.
pub fn gen_database(
    kind: DataKind,
    n: u64,
    domain: OrderedDomain,
    rng: &mut RandomSource,
) -> Database {
    let kind = match kind {
        DataKind::Mixed => match rng.next_u64() % 3 {
            0 => DataKind::Uniform,
            1 => DataKind::Bimodal,
            _ => DataKind::Constant,
        },
        k => k,
    };
    let max = domain.max_element();
    let elements: Vec<u128> = match kind {
        DataKind::Uniform => (0..n).map(|_| random_element(&domain, rng)).collect(),
        DataKind::Bimodal => {
            let spread = max / 64 + 1;
            let low = max / 5;
            let high = max - max / 5;
            (0..n)
                .map(|i| {
                    let center = if i % 2 == 0 { low } else { high };
                    let offset = rng.below_u128(2 * spread + 1);
                    (center + offset).saturating_sub(spread).min(max)
                })
                .collect()
        }
        DataKind::Constant => {
            let v = random_element(&domain, rng);
            vec![v; n as usize]
        }
        DataKind::Mixed => unreachable!("resolved above"),
    };
    Database::new(elements, domain).expect("generated in domain")
}

/// Runs one seeded solver trial and writes it up.
pub fn run_trial(config: &BenchConfig, n: u64, trial: u64) -> TrialReport {
    let domain = OrderedDomain::from_bit_width(config.bits).expect("validated bits");
    let budget = PrivacyBudget::new(config.epsilon, config.delta).expect("validated budget");
    let mut rng = RandomSource::for_trial(config.seed, trial);
    let db = gen_database(config.data, n, domain, &mut rng);
    let start = Instant::now();
    let result = match config.algorithm {
        SolverKind::TreeLog => treelog(&db, &budget, &mut rng),
        SolverKind::HeavyPaths => {
            heavy_paths_with_lambda(&db, &budget, config.lambda.unwrap_or(DEFAULT_LAMBDA), &mut rng)
        }
    };
    let ms = start.elapsed().as_secs_f64() * 1e3;
    let (outcome, success, score) = match result {
        Ok(point) => {
            let success =
                db.min().is_some_and(|lo| lo <= point) && db.max().is_some_and(|hi| point <= hi);
            let score = db.interior_score(point).unwrap_or(0);
            (TrialOutcome::Point(point), success, score)
        }
        Err(e) => (TrialOutcome::Failure(e.kind().to_string()), false, 0),
    };
    TrialReport {
        algo: match config.algorithm {
            SolverKind::TreeLog => "treelog".into(),
            SolverKind::HeavyPaths => "heavy-paths".into(),
        },
        params: serde_json::json!({
            "bits": config.bits,
            "n": n,
            "epsilon": config.epsilon,
            "delta": config.delta,
            "data": config.data,
        }),
        seed: trial,
        outcome,
        success,
        score,
        ms,
    }
}

/// Resolves `n = 0` to the solver's implemented bound.
pub fn resolve_trial_size(config: &BenchConfig) -> Result<u64> {
    if config.n != 0 {
        return Ok(config.n);
    }
    let domain = OrderedDomain::from_bit_width(config.bits)?;
    let budget = PrivacyBudget::new(config.epsilon, config.delta)?;
    match config.algorithm {
        SolverKind::TreeLog => min_database_size(&domain, &budget),
        SolverKind::HeavyPaths => heavy_min_database_size(&domain, &budget),
    }
}

/// Runs the configured number of independent seeded trials on a worker pool
/// and aggregates them.
pub fn bench_utility(config: &BenchConfig) -> Result<(BenchReport, Vec<TrialReport>)> {
    if config.trials == 0 {
        return Err(Error::Param("trials must be positive".into()));
    }
    OrderedDomain::from_bit_width(config.bits)?;
    PrivacyBudget::new(config.epsilon, config.delta)?;
    let n = resolve_trial_size(config)?;

    let trials: Vec<TrialReport> = (0..config.trials)
        .into_par_iter()
        .map(|i| run_trial(config, n, i))
        .collect();

    let successes = trials.iter().filter(|t| t.success).count() as u64;
    let success_rate = successes as f64 / config.trials as f64;
    let mean_score = if successes > 0 {
        trials.iter().filter(|t| t.success).map(|t| t.score as f64).sum::<f64>()
            / successes as f64
    } else {
        0.0
    };
    let mut times: Vec<f64> = trials.iter().map(|t| t.ms).collect();
    times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    let pct = |q: f64| times[(((times.len() - 1) as f64) * q).round() as usize];
    let report = BenchReport {
        algo: match config.algorithm {
            SolverKind::TreeLog => "treelog".into(),
            SolverKind::HeavyPaths => "heavy-paths".into(),
        },
        bits: config.bits,
        n,
        epsilon: config.epsilon,
        delta: config.delta,
        trials: config.trials,
        successes,
        success_rate,
        mean_score,
        p50_ms: pct(0.50),
        p90_ms: pct(0.90),
        p99_ms: pct(0.99),
    };
    Ok((report, trials))
}

/// Writes one trial per line as JSON.
pub fn write_trials_jsonl<W: Write>(mut w: W, trials: &[TrialReport]) -> std::io::Result<()> {
    for trial in trials {
        serde_json::to_writer(&mut w, trial)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Writes the flat per-trial CSV used for plotting.
pub fn write_trials_csv<W: Write>(w: W, trials: &[TrialReport]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    writer
        .write_record(["algo", "seed", "outcome", "success", "score", "ms"])
        .map_err(|e| Error::Parse(e.to_string()))?;
    for t in trials {
        writer
            .write_record([
                t.algo.clone(),
                t.seed.to_string(),
                t.outcome.to_string(),
                t.success.to_string(),
                t.score.to_string(),
                format!("{:.3}", t.ms),
            ])
            .map_err(|e| Error::Parse(e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Oracle-equivalence selftest
// ---------------------------------------------------------------------------

/// One named check of the selftest suite.
#[derive(Debug, Clone, Serialize)]
pub struct SelftestOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn random_small_db(rng: &mut RandomSource, max_bits: u32, max_n: u64) -> Database {
    let bits = 1 + (rng.next_u64() % max_bits as u64) as u32;
    let domain = OrderedDomain::from_bit_width(bits).unwrap();
    let n = rng.next_u64() % (max_n + 1);
    let elements = (0..n).map(|_| random_element(&domain, rng)).collect();
    Database::new(elements, domain).unwrap()
}

/// Runs the brute-force equivalence suites: `weight` against the explicit
/// tree and a linear scan, the fall-off embedding against the reference
/// walk, and the deterministic construction against the reference path,
/// followed by a handful of structural invariants.
pub fn run_selftest(
    seed: u64,
    weight_checks: u64,
    falloff_instances: u64,
    path_instances: u64,
) -> Vec<SelftestOutcome> {
    let mut results = Vec::new();

    // weight == explicit tree == linear scan on random (db, node) pairs.
    let mut mismatches = 0u64;
    for i in 0..weight_checks {
        let mut rng = RandomSource::for_trial(seed, i);
        let db = random_small_db(&mut rng, 8, 64);
        let bits = db.domain().bit_width();
        let level = (rng.next_u64() % (bits as u64 + 1)) as u32;
        let prefix = if level == 0 { 0 } else { rng.next_u64() as u128 & ((1u128 << level) - 1) };
        let node = crate::domain::NodeId::new(level, prefix).unwrap();
        let fast = db.weight(&node).unwrap();
        let tree = ExplicitTree::build(&db).unwrap().weight(&node).unwrap();
        let scan = scan_weight(&db, &node).unwrap();
        if fast != tree || fast != scan {
            mismatches += 1;
        }
    }
    results.push(SelftestOutcome {
        name: "weight-oracle-equivalence".into(),
        passed: mismatches == 0,
        detail: format!("{mismatches} mismatches over {weight_checks} random (db, node) pairs"),
    });

    // Fall-off embedding against the reference walk over explicit weights.
    let mut mismatches = 0u64;
    for i in 0..falloff_instances {
        let mut rng = RandomSource::for_trial(seed.wrapping_add(1), i);
        let t = 1 + rng.next_u64() % 4;
        let mut db = random_small_db(&mut rng, 8, 64);
        while db.len() <= 3 * t || db.len() <= 2 * t {
            db = random_small_db(&mut rng, 8, 64);
        }
        let n = db.len();
        let hat = db.trim(t).unwrap();
        let path = sample_path(&hat, 0.5, t, &mut rng).unwrap();
        let fast = falloff_database(&hat, &path, n, t).unwrap();
        let reference = ExplicitTree::build(&hat).unwrap().reference_falloff(&path, n, t).unwrap();
        if fast.elements() != reference.as_slice() {
            mismatches += 1;
        }
    }
    results.push(SelftestOutcome {
        name: "falloff-oracle-equivalence".into(),
        passed: mismatches == 0,
        detail: format!("{mismatches} mismatches over {falloff_instances} random instances"),
    });

    // Deterministic construction against the reference path, level by level.
    let mut mismatches = 0u64;
    for i in 0..path_instances {
        let mut rng = RandomSource::for_trial(seed.wrapping_add(2), i);
        let t = 1 + rng.next_u64() % 3;
        let db = random_small_db(&mut rng, 8, 64);
        let decomp = crate::heavy::construct_paths(&db, t);
        for record in &decomp.records {
            let hat = record.database.trim(t).unwrap();
            let tree = ExplicitTree::build(&hat).unwrap();
            let reference = tree.reference_deterministic_path(t).unwrap();
            if record.path != reference {
                mismatches += 1;
                continue;
            }
            let reference_fall =
                tree.reference_falloff(&reference, record.database.len(), t).unwrap();
            let next = decomp.database_at(record.depth + 1).unwrap();
            if next.elements() != reference_fall.as_slice() {
                mismatches += 1;
            }
        }
    }
    results.push(SelftestOutcome {
        name: "construct-paths-oracle-equivalence".into(),
        passed: mismatches == 0,
        detail: format!("{mismatches} mismatches over {path_instances} random instances"),
    });

    // Structural invariants.
    let mut failures = 0u64;
    for i in 0..200 {
        let mut rng = RandomSource::for_trial(seed.wrapping_add(3), i);
        let db = random_small_db(&mut rng, 8, 64);
        if db.is_empty() {
            continue;
        }
        let y = random_element(&db.domain(), &mut rng);
        let interior = db.interior_score(y).unwrap() >= 1;
        let between = db.min().unwrap() <= y && y <= db.max().unwrap();
        if interior != between {
            failures += 1;
        }
        let t = 1 + rng.next_u64() % 3;
        if db.len() > 2 * t {
            let trimmed = db.trim(t).unwrap();
            if trimmed.len() != db.len() - 2 * t
                || trimmed.min().unwrap() < db.min().unwrap()
                || trimmed.max().unwrap() > db.max().unwrap()
            {
                failures += 1;
            }
        }
    }
    results.push(SelftestOutcome {
        name: "structural-invariants".into(),
        passed: failures == 0,
        detail: format!("{failures} failures over 200 random databases"),
    });

    results
}

#[cfg(test)]
mod tests {
    use super::*;

    fn domain(bits: u32) -> OrderedDomain {
        OrderedDomain::from_bit_width(bits).unwrap()
    }

    fn db(values: Vec<u128>, bits: u32) -> Database {
        Database::new(values, domain(bits)).unwrap()
    }

    #[test]
    fn neighboring_relation() {
        let s = db(vec![1, 2, 3], 4);
        let add = db(vec![1, 2, 3, 9], 4);
        let replace = db(vec![1, 2, 9], 4);
        let far = db(vec![7, 8, 9], 4);
        assert!(are_neighboring(&s, &s));
        assert!(are_neighboring(&s, &add));
        assert!(are_neighboring(&add, &s));
        assert!(are_neighboring(&s, &replace));
        assert!(!are_neighboring(&s, &far));
        assert!(!are_neighboring(&s, &db(vec![1, 2, 3, 4, 5], 4)));
    }

    #[test]
    fn identical_databases_audit_near_zero() {
        let s = db(vec![3; 20], 4);
        let target = AuditTarget::LaplaceCount { epsilon: 0.5 };
        let report = audit_privacy(&target, &s, &s, 20_000, 1e-6, 7).unwrap();
        // Same distribution on both sides: the lower confidence bound must
        // sit at (or very near) zero.
        assert!(report.eps_hat_lower < 0.05, "lcb = {}", report.eps_hat_lower);
        assert!(!report.violation);
    }

    #[test]
    fn laplace_sanity_target_stays_below_its_epsilon() {
        let s = db(vec![5; 24], 4);
        let s_prime = db(vec![5; 25], 4);
        let target = AuditTarget::LaplaceCount { epsilon: 0.5 };
        let report = audit_privacy(&target, &s, &s_prime, 50_000, 1e-9, 11).unwrap();
        assert!(
            report.eps_hat_lower <= 0.5,
            "lower bound {} exceeds the true epsilon",
            report.eps_hat_lower
        );
        assert!(!report.violation);
        // The point estimate should still see most of the 0.5.
        assert!(report.eps_hat > 0.2, "point estimate {}", report.eps_hat);
    }

    #[test]
    fn audit_rejects_bad_setups() {
        let s = db(vec![1; 10], 4);
        let far = db(vec![2; 12], 4);
        let target = AuditTarget::LaplaceCount { epsilon: 0.5 };
        assert!(matches!(
            audit_privacy(&target, &s, &far, 20_000, 1e-6, 1),
            Err(Error::AuditSetup(_))
        ));
        let wide = db(vec![1; 10], 7);
        assert!(matches!(
            audit_privacy(&target, &wide, &wide, 20_000, 1e-6, 1),
            Err(Error::AuditSetup(_))
        ));
        assert!(matches!(
            audit_privacy(&target, &s, &s, 100, 1e-6, 1),
            Err(Error::AuditSetup(_))
        ));
    }

    #[test]
    fn epsilon_hat_is_monotone_in_delta() {
        let mut h1 = BTreeMap::new();
        let mut h2 = BTreeMap::new();
        h1.insert("a".to_string(), 7_000u64);
        h1.insert("b".to_string(), 3_000);
        h2.insert("a".to_string(), 4_000);
        h2.insert("b".to_string(), 6_000);
        let deltas = [0.0, 1e-4, 1e-3, 1e-2, 0.1];
        let mut last = f64::INFINITY;
        for d in deltas {
            let (point, lower) = epsilon_hat_from_histograms(&h1, &h2, 10_000, d);
            assert!(point <= last + 1e-12, "not monotone at delta {d}");
            assert!(lower <= point + 1e-12);
            last = point;
        }
    }

    #[test]
    fn bench_reports_constant_databases_cleanly() {
        let config = BenchConfig {
            algorithm: SolverKind::HeavyPaths,
            bits: 16,
            n: 800,
            epsilon: 2.0,
            delta: 1e-3,
            trials: 10,
            seed: 5,
            data: DataKind::Constant,
            lambda: None,
        };
        // n = 800 is far below the heavy bound at this budget: every trial
        // must fail closed with insufficient-data, never crash.
        let (report, trials) = bench_utility(&config).unwrap();
        assert_eq!(report.success_rate, 0.0);
        for t in &trials {
            assert!(matches!(&t.outcome, TrialOutcome::Failure(e) if e == "insufficient-data"));
        }
    }

    #[test]
    fn trial_reports_round_trip_through_json() {
        let report = TrialReport {
            algo: "treelog".into(),
            params: serde_json::json!({"bits": 8}),
            seed: 3,
            outcome: TrialOutcome::Point(17),
            success: true,
            score: 9,
            ms: 1.25,
        };
        let line = serde_json::to_string(&report).unwrap();
        let back: TrialReport = serde_json::from_str(&line).unwrap();
        assert_eq!(back.seed, 3);
        assert!(matches!(back.outcome, TrialOutcome::Point(17)));
        let fail = TrialReport { outcome: TrialOutcome::Failure("selection-failed".into()), ..report };
        let line = serde_json::to_string(&fail).unwrap();
        let back: TrialReport = serde_json::from_str(&line).unwrap();
        assert!(matches!(back.outcome, TrialOutcome::Failure(ref e) if e == "selection-failed"));
    }

    #[test]
    fn selftest_runs_clean_on_small_counts() {
        let results = run_selftest(42, 200, 50, 50);
        for r in &results {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }

    #[test]
    fn fixed_seed_reproduces_the_audit_bitwise() {
        let s = db(vec![2; 16], 3);
        let s_prime = db(vec![2; 17], 3);
        let target = AuditTarget::LaplaceCount { epsilon: 1.0 };
        let a = audit_privacy(&target, &s, &s_prime, 10_000, 1e-6, 9).unwrap();
        let b = audit_privacy(&target, &s, &s_prime, 10_000, 1e-6, 9).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}

//! Proper private PAC learning of threshold functions, by reduction to the
//! interior-point problem.
//!
//! Given labeled examples, either one label is (noisily) rare — in which
//! case the matching constant hypothesis is good — or the largest tenth of
//! the 1-labeled elements and the smallest tenth of the 0-labeled elements
//! form an unlabeled database whose interior point separates the classes.
//! The returned hypothesis is always itself a threshold function.

use serde::{Deserialize, Serialize};

use crate::domain::{Database, OrderedDomain, PrivacyBudget};
use crate::error::{Error, Result};
use crate::heavy::heavy_paths;
use crate::mech::{laplace, RandomSource};
use crate::treelog::treelog;

/// Fraction of each label class moved into the interior-point instance, and
/// the bar of the rare-label test.
const SELECTION_FRACTION: f64 = 0.1;

/// Share of the epsilon budget spent on the rare-label test; the rest, and
/// all of delta, goes to the solver.
const DEGENERATE_TEST_BUDGET_SHARE: f64 = 0.1;

/// Labeled training data over an ordered domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDatabase {
    pairs: Vec<(u128, bool)>,
    domain: OrderedDomain,
}

impl LabeledDatabase {
    pub fn new(pairs: Vec<(u128, bool)>, domain: OrderedDomain) -> Result<Self> {
        for &(x, _) in &pairs {
            if !domain.contains(x) {
                return Err(Error::Domain(format!(
                    "example {x} outside the {}-bit domain",
                    domain.bit_width()
                )));
            }
        }
        Ok(Self { pairs, domain })
    }

    pub fn pairs(&self) -> &[(u128, bool)] {
        &self.pairs
    }

    pub fn domain(&self) -> OrderedDomain {
        self.domain
    }

    pub fn len(&self) -> u64 {
        self.pairs.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Parses the `value,label` line format with labels in `{0, 1}`.
    pub fn parse_text(text: &str, domain: OrderedDomain) -> Result<Self> {
        let mut pairs = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (value, label) = line.split_once(',').ok_or_else(|| {
                Error::Parse(format!("line {}: expected value,label", idx + 1))
            })?;
            let value: u128 = value.trim().parse().map_err(|_| {
                Error::Parse(format!("line {}: not an unsigned integer: {value:?}", idx + 1))
            })?;
            let label = match label.trim() {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::Parse(format!(
                        "line {}: label must be 0 or 1, got {other:?}",
                        idx + 1
                    )))
                }
            };
            pairs.push((value, label));
        }
        Self::new(pairs, domain)
    }
}

/// A threshold hypothesis: predicts 1 on `x <= u` and 0 above, with the two
/// constant functions as explicit degenerate cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "threshold")]
pub enum ThresholdHypothesis {
    AllZeros,
    AllOnes,
    At(u128),
}

impl ThresholdHypothesis {
    pub fn predict(&self, x: u128) -> bool {
        match self {
            Self::AllZeros => false,
            Self::AllOnes => true,
            Self::At(u) => x <= *u,
        }
    }
}

/// Which interior-point backend the learner calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    TreeLog,
    HeavyPaths,
}

/// Learns a threshold hypothesis from labeled data under the given total
/// budget. A tenth of the epsilon pays for a Laplace-noised rare-label test;
/// the remainder drives the selected interior-point solver on the database
/// of the `|D|/10` largest 1-labeled and `|D|/10` smallest 0-labeled
/// elements.
pub fn learn_threshold(
    data: &LabeledDatabase,
    budget: &PrivacyBudget,
    solver: SolverKind,
    rng: &mut RandomSource,
) -> Result<ThresholdHypothesis> {
    if data.is_empty() {
        return Err(Error::InsufficientData("no labeled examples".into()));
    }
    let n = data.len();
    let m = ((n as f64) * SELECTION_FRACTION).floor() as usize;
    if m == 0 {
        return Err(Error::InsufficientData(format!(
            "{n} examples are too few to select a tenth per class"
        )));
    }

    let eps_test = budget.epsilon() * DEGENERATE_TEST_BUDGET_SHARE;
    let mut ones: Vec<u128> = Vec::new();
    let mut zeros: Vec<u128> = Vec::new();
    for &(x, label) in data.pairs() {
        if label {
            ones.push(x);
        } else {
            zeros.push(x);
        }
    }

    // Each count has sensitivity 1; half the test budget per count.
    let noisy_ones = ones.len() as f64 + laplace(2.0 / eps_test, rng);
    let noisy_zeros = zeros.len() as f64 + laplace(2.0 / eps_test, rng);
    if noisy_ones < m as f64 {
        return Ok(ThresholdHypothesis::AllZeros);
    }
    if noisy_zeros < m as f64 {
        return Ok(ThresholdHypothesis::AllOnes);
    }

    // The m largest 1-labeled and m smallest 0-labeled elements. The noisy
    // branch above can let a class with fewer than m members through; take
    // what exists.
    let take_ones = m.min(ones.len());
    let take_zeros = m.min(zeros.len());
    ones.sort_unstable();
    zeros.sort_unstable();
    let mut selected: Vec<u128> = ones[ones.len() - take_ones..].to_vec();
    selected.extend_from_slice(&zeros[..take_zeros]);

    let instance = Database::new(selected, data.domain())?;
    let solver_budget = PrivacyBudget::new(
        budget.epsilon() * (1.0 - DEGENERATE_TEST_BUDGET_SHARE),
        budget.delta(),
    )?;
    let point = match solver {
        SolverKind::TreeLog => treelog(&instance, &solver_budget, rng)?,
        SolverKind::HeavyPaths => heavy_paths(&instance, &solver_budget, rng)?,
    };
    Ok(ThresholdHypothesis::At(point))
}

/// Fraction of examples the hypothesis mislabels; 0 on empty data.
pub fn empirical_error(h: &ThresholdHypothesis, data: &LabeledDatabase) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let wrong = data
        .pairs()
        .iter()
        .filter(|&&(x, label)| h.predict(x) != label)
        .count();
    wrong as f64 / data.len() as f64
}

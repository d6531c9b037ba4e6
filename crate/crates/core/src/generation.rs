//! Turning latent samples into routes and checking whether they are climbable.
//!
//! A candidate is produced by drawing a latent vector, decoding it into hold
//! probabilities, picking a route length `k` and keeping the `k` most likely
//! holds. Each candidate is then run through four rules that mirror the
//! typical failures of generated routes: too few holds, no finishing hold on
//! the top row, no starting hold low on the board, and a finish that cannot
//! be reached from the start.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::board::{vector_to_problem, HoldVector, Problem, NUM_HOLDS, START_ROW_LIMIT, TOP_ROW};
use crate::data::Corpus;
use crate::vae::{LatentVector, VaeError, VaeModel};

pub const DEFAULT_MIN_HOLDS: usize = 6;
pub const DEFAULT_REACH_LIMIT: f64 = 5.0;
pub const DEFAULT_NEAR_DUPLICATE_DISTANCE: usize = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenError {
    #[error("k must be between 1 and {NUM_HOLDS}, got {0}")]
    InvalidK(usize),
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] VaeError),
}

/// How many holds to keep from a decoded probability vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KMode {
    /// The decoder's expected hold count, `round(sum(p))`, clamped to
    /// `[min_holds, 198]`.
    ExpectedCount,
    Fixed(usize),
}

/// Thresholds used by [`validate_route`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    pub min_holds: usize,
    /// Largest grid distance between two holds a climber can move across.
    pub reach_limit: f64,
    pub near_duplicate_distance: usize,
}

impl Default for RuleSet {
    fn default() -> Self {
        Self {
            min_holds: DEFAULT_MIN_HOLDS,
            reach_limit: DEFAULT_REACH_LIMIT,
            near_duplicate_distance: DEFAULT_NEAR_DUPLICATE_DISTANCE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub count: usize,
    pub seed: u64,
    pub k_mode: KMode,
    pub rules: RuleSet,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self { count: 50, seed: 0, k_mode: KMode::ExpectedCount, rules: RuleSet::default() }
    }
}

impl GenConfig {
    pub fn check(&self) -> Result<(), GenError> {
        if self.count == 0 {
            return Err(GenError::InvalidConfig("count must be at least 1".into()));
        }
        if self.rules.min_holds < 2 {
            return Err(GenError::InvalidConfig("min_holds must be at least 2".into()));
        }
        if self.rules.reach_limit.is_nan() || self.rules.reach_limit <= 0.0 {
            return Err(GenError::InvalidConfig("reach_limit must be positive".into()));
        }
        if let KMode::Fixed(k) = self.k_mode {
            if !(1..=NUM_HOLDS).contains(&k) {
                return Err(GenError::InvalidK(k));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NearDuplicate {
    pub name: String,
    pub distance: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub min_holds_ok: bool,
    pub finish_ok: bool,
    pub start_ok: bool,
    pub reachable_ok: bool,
    pub duplicate_of: Option<String>,
    /// Closest corpus route within the near-duplicate distance. Informational.
    pub near_duplicate: Option<NearDuplicate>,
    pub valid: bool,
    pub details: Vec<String>,
}

impl ValidationReport {
    /// Rules that failed, by name.
    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.min_holds_ok {
            out.push("min_holds");
        }
        if !self.finish_ok {
            out.push("finish");
        }
        if !self.start_ok {
            out.push("start");
        }
        if !self.reachable_ok {
            out.push("reachable");
        }
        if self.duplicate_of.is_some() {
            out.push("duplicate");
        }
        out
    }

    fn with_duplicates(mut self, p: &Problem, corpus: Option<&Corpus>, rules: &RuleSet) -> Self {
        if let Some(corpus) = corpus {
            self.duplicate_of = is_duplicate(p, corpus);
            if let Some(name) = &self.duplicate_of {
                self.details.push(format!("duplicate: same holds as corpus problem {name:?}"));
            } else {
                self.near_duplicate = nearest_duplicate(p, corpus, rules.near_duplicate_distance);
                if let Some(nd) = &self.near_duplicate {
                    self.details.push(format!(
                        "near duplicate: {} hold(s) away from corpus problem {:?}",
                        nd.distance, nd.name
                    ));
                }
            }
        }
        self.valid = self.min_holds_ok
            && self.finish_ok
            && self.start_ok
            && self.reachable_ok
            && self.duplicate_of.is_none();
        self
    }
}

/// Position-addressed standard-normal latent draws: the vector at a given
/// index depends only on the seed and the index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatentStream {
    seed: u64,
    dim: usize,
}

impl LatentStream {
    pub fn new(seed: u64, dim: usize) -> Self {
        Self { seed, dim }
    }

    pub fn at(&self, index: u64) -> LatentVector {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        let values = (0..self.dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        LatentVector::new(values).expect("normal draws are finite")
    }
}

pub fn sample_latent(stream: &LatentStream, index: u64) -> LatentVector {
    stream.at(index)
}

/// Sets the `k` largest probabilities; equal probabilities prefer the lower
/// index.
pub fn select_holds(probs: &[f64], k: usize) -> Result<HoldVector, GenError> {
    if probs.len() != NUM_HOLDS {
        return Err(VaeError::from(crate::nn::NnError::ShapeMismatch {
            expected: NUM_HOLDS,
            actual: probs.len(),
        })
        .into());
    }
    if !(1..=NUM_HOLDS).contains(&k) {
        return Err(GenError::InvalidK(k));
    }
    let mut order: Vec<usize> = (0..NUM_HOLDS).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    Ok(HoldVector::from_indices(order.into_iter().take(k)))
}

pub fn choose_k(probs: &[f64], mode: KMode, min_holds: usize) -> usize {
    match mode {
        KMode::Fixed(k) => k,
        KMode::ExpectedCount => {
            let expected = probs.iter().sum::<f64>().round();
            (expected.max(0.0) as usize).clamp(min_holds.min(NUM_HOLDS), NUM_HOLDS)
        }
    }
}

/// Whether some hold below row 7 connects to a top-row hold through moves of
/// at most `reach_limit` grid units.
pub fn start_reaches_finish(p: &Problem, reach_limit: f64) -> bool {
    let coords: Vec<_> = p.holds().iter().map(|h| h.pos).collect();
    let mut seen = vec![false; coords.len()];
    let mut queue: VecDeque<usize> = VecDeque::new();
    for (i, c) in coords.iter().enumerate() {
        if c.row() < START_ROW_LIMIT {
            seen[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        if coords[i].row() == TOP_ROW {
            return true;
        }
        for j in 0..coords.len() {
            if !seen[j] && coords[i].distance(coords[j]) <= reach_limit {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    false
}

/// Applies the four route rules. Duplicate checks need a corpus; see
/// [`validate_against`].
pub fn validate_route(p: &Problem, rules: &RuleSet) -> ValidationReport {
    let n = p.len();
    let finishes = p.holds().iter().filter(|h| h.pos.row() == TOP_ROW).count();
    let starts = p.holds().iter().filter(|h| h.pos.row() < START_ROW_LIMIT).count();
    let min_holds_ok = n >= rules.min_holds;
    let finish_ok = (1..=2).contains(&finishes);
    let start_ok = starts >= 1;
    let reachable_ok = start_reaches_finish(p, rules.reach_limit);

    let mut details = Vec::new();
    let verdict = |ok: bool| if ok { "ok" } else { "FAIL" };
    details.push(format!("min_holds: {} ({n} holds, need {})", verdict(min_holds_ok), rules.min_holds));
    details.push(format!("finish: {} ({finishes} hold(s) on row 18, need 1 or 2)", verdict(finish_ok)));
    details.push(format!("start: {} ({starts} hold(s) below row 7, need at least 1)", verdict(start_ok)));
    details.push(format!(
        "reachable: {} (reach limit {} grid units)",
        verdict(reachable_ok),
        rules.reach_limit
    ));
    details.push("roles: rules read rows only; decoded start/finish roles are a row heuristic".into());

    ValidationReport {
        min_holds_ok,
        finish_ok,
        start_ok,
        reachable_ok,
        duplicate_of: None,
        near_duplicate: None,
        valid: false,
        details,
    }
    .with_duplicates(p, None, rules)
}

/// [`validate_route`] plus exact and near duplicate detection against a corpus.
pub fn validate_against(p: &Problem, rules: &RuleSet, corpus: Option<&Corpus>) -> ValidationReport {
    validate_route(p, rules).with_duplicates(p, corpus, rules)
}

/// Name of the first corpus problem with exactly the same holds, roles ignored.
pub fn is_duplicate(p: &Problem, corpus: &Corpus) -> Option<String> {
    let v = p.to_vector();
    corpus.iter().find(|q| q.to_vector() == v).map(|q| q.name().to_owned())
}

fn nearest_duplicate(p: &Problem, corpus: &Corpus, max_distance: usize) -> Option<NearDuplicate> {
    let v = p.to_vector();
    corpus
        .iter()
        .map(|q| (q, q.to_vector().hamming(&v)))
        .filter(|&(_, d)| d > 0 && d <= max_distance)
        .min_by_key(|&(_, d)| d)
        .map(|(q, distance)| NearDuplicate { name: q.name().to_owned(), distance })
}

/// A decoded route with everything needed to replay or inspect it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    #[serde(flatten)]
    pub problem: Problem,
    pub latent: LatentVector,
    /// Decoder expected hold count, `sum(p)`.
    pub expected_count: f64,
    pub probs: Vec<f64>,
    pub report: ValidationReport,
}

/// Decodes one latent vector into a validated candidate.
pub fn decode_candidate(
    model: &VaeModel,
    latent: LatentVector,
    name: impl Into<String>,
    k_mode: KMode,
    rules: &RuleSet,
    corpus: Option<&Corpus>,
) -> Result<Candidate, GenError> {
    let probs = model.decode(&latent)?;
    let k = choose_k(&probs, k_mode, rules.min_holds);
    let holds = select_holds(&probs, k)?;
    let problem = vector_to_problem(&holds, name).expect("k >= 1 holds selected");
    let report = validate_against(&problem, rules, corpus);
    Ok(Candidate { expected_count: probs.iter().sum(), problem, latent, probs, report })
}

/// Samples `cfg.count` candidates. Candidate `i` uses latent stream position
/// `i`, so the output does not depend on evaluation order.
pub fn generate_batch(
    model: &VaeModel,
    corpus: Option<&Corpus>,
    cfg: &GenConfig,
) -> Result<Vec<Candidate>, GenError> {
    cfg.check()?;
    let stream = LatentStream::new(cfg.seed, model.architecture().latent_dim);
    (0..cfg.count)
        .map(|i| {
            let latent = stream.at(i as u64);
            let name = format!("gen-{}-{i:03}", cfg.seed);
            decode_candidate(model, latent, name, cfg.k_mode, &cfg.rules, corpus)
        })
        .collect()
}

#[derive(Serialize)]
struct GeneratedRecord<'a> {
    #[serde(flatten)]
    problem: &'a Problem,
    latent: &'a LatentVector,
    report: &'a ValidationReport,
}

/// Writes candidates as corpus lines carrying extra `latent` and `report`
/// fields. The output loads back with [`crate::data::load_corpus`].
pub fn write_candidates(candidates: &[Candidate], mut out: impl std::io::Write) -> std::io::Result<()> {
    for c in candidates {
        let record = GeneratedRecord { problem: &c.problem, latent: &c.latent, report: &c.report };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Pass/fail tallies over a batch of candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct BatchSummary {
    pub total: usize,
    pub min_holds_pass: usize,
    pub finish_fail: usize,
    pub start_fail: usize,
    pub reachable_fail: usize,
    pub duplicates: usize,
    pub valid: usize,
}

pub fn summarize(reports: &[&ValidationReport]) -> BatchSummary {
    let mut s = BatchSummary { total: reports.len(), ..Default::default() };
    for r in reports {
        s.min_holds_pass += usize::from(r.min_holds_ok);
        s.finish_fail += usize::from(!r.finish_ok);
        s.start_fail += usize::from(!r.start_ok);
        s.reachable_fail += usize::from(!r.reachable_ok);
        s.duplicates += usize::from(r.duplicate_of.is_some());
        s.valid += usize::from(r.valid);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::board::{parse_position, Hold, HoldRole};
    use crate::data::synth_corpus;
    use proptest::prelude::*;

    fn route(name: &str, labels: &[&str]) -> Problem {
        let holds = labels
            .iter()
            .map(|l| Hold::new(parse_position(l).unwrap(), HoldRole::Mid))
            .collect();
        Problem::new(name, None, holds).unwrap()
    }

    #[test]
    fn latent_stream_is_position_addressed() {
        let s = LatentStream::new(42, 16);
        assert_eq!(s.at(3), s.at(3));
        assert_ne!(s.at(3), s.at(4));
        assert_eq!(sample_latent(&s, 7).len(), 16);
    }

    #[test]
    fn latent_stream_moments() {
        let s = LatentStream::new(1, 16);
        let n = 10_000;
        let mut sum = [0.0; 16];
        let mut sq = [0.0; 16];
        for i in 0..n {
            for (j, v) in s.at(i).as_slice().iter().enumerate() {
                sum[j] += v;
                sq[j] += v * v;
            }
        }
        for j in 0..16 {
            let mean = sum[j] / n as f64;
            let var = sq[j] / n as f64 - mean * mean;
            assert!(mean.abs() < 0.05, "dim {j} mean {mean}");
            assert!((0.9..=1.1).contains(&var), "dim {j} var {var}");
        }
    }

    #[test]
    fn select_holds_examples() {
        let mut probs = vec![0.0; NUM_HOLDS];
        probs[..4].copy_from_slice(&[0.9, 0.1, 0.8, 0.4]);
        assert_eq!(select_holds(&probs, 2).unwrap().ones().collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(select_holds(&probs, 198).unwrap().count(), 198);

        let mut tie = vec![0.0; NUM_HOLDS];
        tie[..3].copy_from_slice(&[0.5, 0.5, 0.2]);
        assert_eq!(select_holds(&tie, 1).unwrap().ones().collect::<Vec<_>>(), vec![0]);

        assert_eq!(select_holds(&probs, 0), Err(GenError::InvalidK(0)));
        assert_eq!(select_holds(&probs, 199), Err(GenError::InvalidK(199)));
    }

    #[test]
    fn choose_k_examples() {
        let mut probs = vec![0.0; NUM_HOLDS];
        probs[0] = 7.4;
        assert_eq!(choose_k(&probs, KMode::ExpectedCount, 6), 7);
        probs[0] = 3.2;
        assert_eq!(choose_k(&probs, KMode::ExpectedCount, 6), 6);
        assert_eq!(choose_k(&probs, KMode::Fixed(9), 6), 9);
    }

    #[test]
    fn chain_route_passes_every_rule() {
        let p = route("chain", &["A1", "A5", "B9", "C13", "D17", "E18"]);
        let r = validate_route(&p, &RuleSet::default());
        assert!(r.min_holds_ok && r.finish_ok && r.start_ok && r.reachable_ok, "{r:?}");
        assert!(r.valid);
        assert!(r.failures().is_empty());
    }

    #[test]
    fn missing_finish_fails() {
        let p = route("nofinish", &["A1", "A5", "B9", "C13", "D17", "E17"]);
        let r = validate_route(&p, &RuleSet::default());
        assert!(!r.finish_ok && !r.valid);
        assert!(!r.reachable_ok);
    }

    #[test]
    fn three_finishes_fail() {
        let p = route("wide", &["A1", "A5", "B9", "C13", "D17", "C18", "D18", "E18"]);
        assert!(!validate_route(&p, &RuleSet::default()).finish_ok);
    }

    #[test]
    fn high_start_fails() {
        let p = route("nostart", &["A8", "B10", "B12", "C14", "D16", "E18"]);
        let r = validate_route(&p, &RuleSet::default());
        assert!(!r.start_ok && !r.valid);
    }

    #[test]
    fn isolated_finish_is_unreachable() {
        // Finish at K18 sits 10 columns from the rest of the chain.
        let p = route("far", &["A1", "A5", "A9", "A13", "A17", "K18"]);
        let r = validate_route(&p, &RuleSet::default());
        assert!(r.finish_ok && r.start_ok && r.min_holds_ok);
        assert!(!r.reachable_ok && !r.valid);
    }

    #[test]
    fn too_few_holds_fail() {
        let p = route("short", &["A1", "A5", "A9", "A13", "A18"]);
        assert!(!validate_route(&p, &RuleSet::default()).min_holds_ok);
    }

    #[test]
    fn duplicates_ignore_roles() {
        let corpus = Corpus::new(vec![route("Classic1", &["A1", "A5", "B9", "C13", "D17", "E18"])], "t").unwrap();
        let same = route("gen", &["A1", "A5", "B9", "C13", "D17", "E18"]);
        assert_eq!(is_duplicate(&same, &corpus), Some("Classic1".into()));

        let roles = Problem::new(
            "gen2",
            None,
            same.holds().iter().map(|h| Hold::new(h.pos, HoldRole::Start)).collect(),
        )
        .unwrap();
        assert_eq!(is_duplicate(&roles, &corpus), Some("Classic1".into()));

        let sup = route("sup", &["A1", "A5", "B9", "C13", "D17", "E18", "F18"]);
        assert_eq!(is_duplicate(&sup, &corpus), None);

        let r = validate_against(&sup, &RuleSet::default(), Some(&corpus));
        assert!(r.valid, "near duplicates never block: {r:?}");
        assert_eq!(r.near_duplicate, Some(NearDuplicate { name: "Classic1".into(), distance: 1 }));
        let r = validate_against(&same, &RuleSet::default(), Some(&corpus));
        assert!(!r.valid);
        assert_eq!(r.failures(), vec!["duplicate"]);
    }

    #[test]
    fn synthetic_routes_validate() {
        for seed in 0..20 {
            for p in synth_corpus(seed, 25).iter() {
                let r = validate_route(p, &RuleSet::default());
                assert!(r.valid, "{} failed: {:?}", p.name(), r.details);
            }
        }
    }

    #[test]
    fn config_checks() {
        let ok = GenConfig::default();
        assert!(ok.check().is_ok());
        assert!(GenConfig { count: 0, ..ok }.check().is_err());
        assert!(GenConfig { k_mode: KMode::Fixed(0), ..ok }.check().is_err());
        let mut bad = ok;
        bad.rules.reach_limit = 0.0;
        assert!(bad.check().is_err());
    }

    proptest! {
        #[test]
        fn select_holds_popcount_is_k(
            probs in proptest::collection::vec(0.0f64..1.0, NUM_HOLDS),
            k in 1usize..=NUM_HOLDS,
        ) {
            let v = select_holds(&probs, k).unwrap();
            prop_assert_eq!(v.count(), k);
            let min_in = v.ones().map(|i| probs[i]).fold(f64::INFINITY, f64::min);
            let max_out = (0..NUM_HOLDS).filter(|&i| !v.get(i)).map(|i| probs[i]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(min_in >= max_out);
        }

        #[test]
        fn reach_is_monotone(
            indices in proptest::collection::btree_set(0..NUM_HOLDS, 1..20),
            lo in 0.5f64..8.0,
            extra in 0.0f64..8.0,
        ) {
            let v = HoldVector::from_indices(indices);
            let p = vector_to_problem(&v, "r").unwrap();
            let rules = RuleSet::default();
            let a = validate_route(&p, &RuleSet { reach_limit: lo, ..rules });
            let b = validate_route(&p, &RuleSet { reach_limit: lo + extra, ..rules });
            prop_assert!(!a.reachable_ok || b.reachable_ok);
            prop_assert_eq!(validate_route(&p, &rules), validate_route(&p, &rules));
        }
    }
}

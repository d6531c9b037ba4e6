//! Route corpora: JSON-lines ingestion, deterministic train/test splits and a
//! synthetic corpus generator for tests and demos.
//!
//! One record per line:
//!
//! ```text
//! {"name": "Warm up", "grade": "6B+", "holds": [{"pos": "A5", "role": "start"}, ...]}
//! ```
//!
//! Unknown fields are ignored, so files written by the generator (which add
//! `latent` and `report`) load back as plain corpora.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::board::{GridCoord, Hold, HoldRole, Problem, COLS, START_ROW_LIMIT, TOP_ROW};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("duplicate problem name {name:?} on line {line}")]
    DuplicateName { line: usize, name: String },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("test fraction {0} must lie strictly between 0 and 1")]
    InvalidFraction(f64),
    #[error("split of {total} problems at fraction {fraction} leaves no training problems")]
    DegenerateSplit { total: usize, fraction: f64 },
}

impl DataError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io { path: path.display().to_string(), source }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub problems: Vec<Problem>,
    /// Where the problems came from, e.g. a file path or `synth(seed=3)`.
    pub source: String,
}

impl Corpus {
    /// Builds a corpus, rejecting repeated names.
    pub fn new(problems: Vec<Problem>, source: impl Into<String>) -> Result<Self, DataError> {
        let mut names = HashSet::new();
        for (i, p) in problems.iter().enumerate() {
            if !names.insert(p.name()) {
                return Err(DataError::DuplicateName { line: i + 1, name: p.name().to_owned() });
            }
        }
        Ok(Self { problems, source: source.into() })
    }

    pub fn len(&self) -> usize {
        self.problems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.problems.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Problem> {
        self.problems.iter()
    }

    pub fn mean_hold_count(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.problems.iter().map(Problem::len).sum::<usize>() as f64 / self.len() as f64
    }
}

pub fn parse_corpus(reader: impl BufRead, source: impl Into<String>) -> Result<Corpus, DataError> {
    let mut problems = Vec::new();
    let mut names = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| DataError::Parse { line: line_no, reason: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let problem: Problem = serde_json::from_str(&line)
            .map_err(|e| DataError::Parse { line: line_no, reason: e.to_string() })?;
        if !names.insert(problem.name().to_owned()) {
            return Err(DataError::DuplicateName { line: line_no, name: problem.name().to_owned() });
        }
        problems.push(problem);
    }
    Ok(Corpus { problems, source: source.into() })
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    parse_corpus(BufReader::new(file), path.display().to_string())
}

pub fn write_corpus(corpus: &Corpus, mut out: impl Write) -> std::io::Result<()> {
    for p in &corpus.problems {
        serde_json::to_writer(&mut out, p)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| DataError::io(path, e))?;
    write_corpus(corpus, BufWriter::new(file)).map_err(|e| DataError::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(test_fraction: f64, seed: u64) -> Result<Self, DataError> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(DataError::InvalidFraction(test_fraction));
        }
        Ok(Self { test_fraction, seed })
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { test_fraction: 0.1, seed: 0 }
    }
}

/// Shuffles with a seeded generator and takes `round(fraction * n)` problems
/// for the test side. Both halves keep the corpus order of their members.
pub fn split_corpus(corpus: &Corpus, spec: SplitSpec) -> Result<(Corpus, Corpus), DataError> {
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(DataError::InvalidFraction(spec.test_fraction));
    }
    let total = corpus.len();
    if total == 0 {
        return Err(DataError::EmptyCorpus);
    }
    let n_test = (spec.test_fraction * total as f64).round() as usize;
    if n_test >= total {
        return Err(DataError::DegenerateSplit { total, fraction: spec.test_fraction });
    }
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let mut is_test = vec![false; total];
    for &i in &order[..n_test] {
        is_test[i] = true;
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (p, t) in corpus.problems.iter().zip(is_test) {
        if t { &mut test } else { &mut train }.push(p.clone());
    }
    Ok((
        Corpus { problems: train, source: format!("{} [train]", corpus.source) },
        Corpus { problems: test, source: format!("{} [test]", corpus.source) },
    ))
}

/// Deterministic synthetic routes shaped like real ones: 6 to 12 holds, one
/// or two starts below row 7, a single top-row finish, and a chain of holds
/// in between where every step spans at most 4 rows and 2 columns (so at
/// most about 4.5 grid units).
pub fn synth_corpus(seed: u64, n: usize) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let problems = (0..n)
        .map(|i| synth_problem(&mut rng, format!("synth-{seed}-{i:04}")))
        .collect();
    Corpus { problems, source: format!("synth(seed={seed}, n={n})") }
}

fn synth_problem(rng: &mut ChaCha8Rng, name: String) -> Problem {
    const MAX_ROW_STEP: usize = 4;
    let total: usize = rng.random_range(6..=12);
    let two_starts = rng.random_bool(0.4);
    let n_starts = if two_starts { 2 } else { 1 };
    // Rows climbed between consecutive chain holds: split the climb from the
    // start row to the top into `moves` steps of 1..=4 rows each.
    let moves = total - n_starts;
    let lowest_start = usize::from(TOP_ROW).saturating_sub(MAX_ROW_STEP * moves);
    let start_row: usize = rng.random_range(lowest_start..usize::from(START_ROW_LIMIT));
    let start_col: usize = rng.random_range(0..COLS);

    let climb = usize::from(TOP_ROW) - start_row;
    let mut steps = vec![1usize; moves];
    let mut remaining = climb - moves;
    while remaining > 0 {
        let open: Vec<usize> = (0..moves).filter(|&i| steps[i] < MAX_ROW_STEP).collect();
        let pick = open[rng.random_range(0..open.len())];
        steps[pick] += 1;
        remaining -= 1;
    }

    let coord = |c: usize, r: usize| GridCoord::new(c, r).expect("synthetic coordinate on board");
    let mut holds = vec![Hold::new(coord(start_col, start_row), HoldRole::Start)];
    if two_starts {
        let offsets: Vec<isize> = [-2isize, -1, 1, 2]
            .into_iter()
            .filter(|d| (0..COLS as isize).contains(&(start_col as isize + d)))
            .collect();
        let d = offsets[rng.random_range(0..offsets.len())];
        holds.push(Hold::new(coord((start_col as isize + d) as usize, start_row), HoldRole::Start));
    }

    let (mut col, mut row) = (start_col as isize, start_row);
    for (i, step) in steps.iter().enumerate() {
        row += step;
        col = (col + rng.random_range(-2i32..=2) as isize).clamp(0, COLS as isize - 1);
        let role = if i + 1 == moves { HoldRole::Finish } else { HoldRole::Mid };
        holds.push(Hold::new(coord(col as usize, row), role));
    }
    debug_assert_eq!(row, usize::from(TOP_ROW));
    Problem::new(name, None, holds).expect("synthetic rows are strictly increasing")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::board::parse_position;
    use std::io::Cursor;

    const TWO: &str = r#"{"name": "one", "grade": "6B+", "holds": [{"pos": "A5", "role": "start"}, {"pos": "C18", "role": "finish"}]}
{"name": "two", "holds": [{"pos": "B2", "role": "start"}, {"pos": "K18", "role": "finish"}]}
"#;

    #[test]
    fn parses_two_records() {
        let c = parse_corpus(Cursor::new(TWO), "mem").unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.problems[0].grade(), Some("6B+"));
        assert_eq!(c.problems[1].grade(), None);
        assert_eq!(c.problems[1].holds()[1].pos, parse_position("K18").unwrap());
    }

    #[test]
    fn reports_line_of_malformed_hold() {
        let text = format!("{TWO}{}", r#"{"name": "bad", "holds": [{"pos": "Z9", "role": "mid"}]}"#);
        match parse_corpus(Cursor::new(text), "mem") {
            Err(DataError::Parse { line, reason }) => {
                assert_eq!(line, 3);
                assert!(reason.contains("malformed position"), "{reason}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_duplicate_names() {
        let line = TWO.lines().next().unwrap();
        let text = format!("{line}\n{line}\n");
        assert!(matches!(
            parse_corpus(Cursor::new(text), "mem"),
            Err(DataError::DuplicateName { line: 2, .. })
        ));
    }

    #[test]
    fn empty_input_is_empty_corpus() {
        let c = parse_corpus(Cursor::new(""), "mem").unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn ignores_generator_fields() {
        let text = r#"{"name": "g", "holds": [{"pos": "A1", "role": "start"}], "latent": [0.1, 0.2], "report": {"valid": false}}"#;
        assert_eq!(parse_corpus(Cursor::new(text), "mem").unwrap().len(), 1);
    }

    #[test]
    fn split_is_deterministic_partition() {
        let c = synth_corpus(11, 100);
        let spec = SplitSpec::new(0.1, 7).unwrap();
        let (train, test) = split_corpus(&c, spec).unwrap();
        assert_eq!((train.len(), test.len()), (90, 10));
        let (train2, test2) = split_corpus(&c, spec).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
        let names: HashSet<&str> = train.iter().chain(test.iter()).map(Problem::name).collect();
        assert_eq!(names.len(), 100);
    }

    #[test]
    fn split_sizes_at_reference_scale() {
        let c = synth_corpus(0, 18865);
        let (train, test) = split_corpus(&c, SplitSpec::new(1886.0 / 18865.0, 1).unwrap()).unwrap();
        assert_eq!((train.len(), test.len()), (16979, 1886));
    }

    #[test]
    fn split_guards() {
        let c = synth_corpus(1, 2);
        assert!(matches!(
            split_corpus(&c, SplitSpec { test_fraction: 0.999, seed: 0 }),
            Err(DataError::DegenerateSplit { total: 2, .. })
        ));
        assert!(matches!(
            split_corpus(&Corpus::default(), SplitSpec::default()),
            Err(DataError::EmptyCorpus)
        ));
        assert!(SplitSpec::new(0.0, 0).is_err());
        assert!(SplitSpec::new(1.0, 0).is_err());
    }

    #[test]
    fn synth_is_deterministic_and_seed_sensitive() {
        assert_eq!(synth_corpus(1, 5), synth_corpus(1, 5));
        assert_ne!(synth_corpus(1, 5).problems, synth_corpus(2, 5).problems);
    }

    #[test]
    fn synth_shape() {
        for p in synth_corpus(3, 200).iter() {
            assert!((6..=12).contains(&p.len()), "{} has {} holds", p.name(), p.len());
            let finishes = p.holds().iter().filter(|h| h.pos.row() == TOP_ROW).count();
            assert_eq!(finishes, 1);
            assert!(p.holds().iter().any(|h| h.role == HoldRole::Start && h.pos.row() < START_ROW_LIMIT));
        }
    }

    #[test]
    fn save_then_load_is_identity() {
        let c = synth_corpus(4, 12);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        save_corpus(&c, &path).unwrap();
        let back = load_corpus(&path).unwrap();
        assert_eq!(back.problems, c.problems);
    }
}

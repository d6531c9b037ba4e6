//! MoonBoard 2017 geometry: an 11 x 18 grid of holds, columns `A`..`K` and
//! rows `1`..`18` counted from the bottom.
//!
//! Internally a hold position is a zero-based [`GridCoord`] and a route is
//! flattened into a [`HoldVector`] in row-major order starting at the
//! bottom-left corner, so the top row occupies indices `187..=197`.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const COLS: usize = 11;
pub const ROWS: usize = 18;
/// Total number of holds on the board.
pub const NUM_HOLDS: usize = COLS * ROWS;
/// Zero-based index of the top row, where finishing holds live.
pub const TOP_ROW: u8 = (ROWS - 1) as u8;
/// Start holds must sit strictly below this zero-based row (row 7 on the board).
pub const START_ROW_LIMIT: u8 = 6;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BoardError {
    #[error("malformed position {0:?}: expected a column A-K followed by a row 1-18")]
    MalformedPosition(String),
    #[error("coordinate out of range: col {col}, row {row}")]
    OutOfRange { col: usize, row: usize },
    #[error("route has no holds")]
    EmptyRoute,
    #[error("hold {0} appears more than once")]
    DuplicateHold(GridCoord),
    #[error("hold vector has length {0}, expected {NUM_HOLDS}")]
    BadVectorLength(usize),
}

/// A cell on the board. `col` 0 is column `A`, `row` 0 is board row `1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridCoord {
    col: u8,
    row: u8,
}

impl GridCoord {
    pub fn new(col: usize, row: usize) -> Result<Self, BoardError> {
        if col >= COLS || row >= ROWS {
            return Err(BoardError::OutOfRange { col, row });
        }
        Ok(Self { col: col as u8, row: row as u8 })
    }

    pub fn col(self) -> u8 {
        self.col
    }

    pub fn row(self) -> u8 {
        self.row
    }

    pub fn index(self) -> usize {
        coord_to_index(self)
    }

    /// Euclidean distance in grid cells.
    pub fn distance(self, other: GridCoord) -> f64 {
        let dc = f64::from(self.col) - f64::from(other.col);
        let dr = f64::from(self.row) - f64::from(other.row);
        dc.hypot(dr)
    }

    /// Every cell of the board in index order.
    pub fn all() -> impl Iterator<Item = GridCoord> {
        (0..NUM_HOLDS).map(index_to_coord)
    }
}

impl fmt::Display for GridCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", char::from(b'A' + self.col), self.row + 1)
    }
}

impl FromStr for GridCoord {
    type Err = BoardError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_position(s)
    }
}

impl Serialize for GridCoord {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GridCoord {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let label = String::deserialize(deserializer)?;
        parse_position(&label).map_err(serde::de::Error::custom)
    }
}

/// Parses a position label such as `"B7"`. Only upper-case columns `A`..`K`
/// and rows `1`..`18` without leading zeros are accepted.
pub fn parse_position(text: &str) -> Result<GridCoord, BoardError> {
    let malformed = || BoardError::MalformedPosition(text.to_owned());
    let bytes = text.as_bytes();
    let (&letter, digits) = bytes.split_first().ok_or_else(malformed)?;
    if !(b'A'..=b'K').contains(&letter) {
        return Err(malformed());
    }
    if digits.is_empty()
        || digits.len() > 2
        || digits[0] == b'0'
        || !digits.iter().all(u8::is_ascii_digit)
    {
        return Err(malformed());
    }
    let row: usize = digits.iter().fold(0, |acc, d| acc * 10 + usize::from(d - b'0'));
    if !(1..=ROWS).contains(&row) {
        return Err(malformed());
    }
    Ok(GridCoord { col: letter - b'A', row: (row - 1) as u8 })
}

pub fn coord_to_index(c: GridCoord) -> usize {
    usize::from(c.row) * COLS + usize::from(c.col)
}

/// Inverse of [`coord_to_index`].
///
/// # Panics
///
/// Panics if `index >= NUM_HOLDS`.
pub fn index_to_coord(index: usize) -> GridCoord {
    assert!(index < NUM_HOLDS, "hold index {index} out of range");
    GridCoord { col: (index % COLS) as u8, row: (index / COLS) as u8 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HoldRole {
    Start,
    Mid,
    Finish,
}

impl HoldRole {
    pub fn glyph(self) -> char {
        match self {
            HoldRole::Start => 'S',
            HoldRole::Mid => 'M',
            HoldRole::Finish => 'F',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hold {
    pub pos: GridCoord,
    pub role: HoldRole,
}

impl Hold {
    pub fn new(pos: GridCoord, role: HoldRole) -> Self {
        Self { pos, role }
    }
}

/// A named route. Construction guarantees at least one hold and no repeated
/// positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Problem {
    name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    grade: Option<String>,
    holds: Vec<Hold>,
}

impl Problem {
    pub fn new(
        name: impl Into<String>,
        grade: Option<String>,
        holds: Vec<Hold>,
    ) -> Result<Self, BoardError> {
        if holds.is_empty() {
            return Err(BoardError::EmptyRoute);
        }
        let mut seen = HashSet::with_capacity(holds.len());
        for hold in &holds {
            if !seen.insert(hold.pos) {
                return Err(BoardError::DuplicateHold(hold.pos));
            }
        }
        Ok(Self { name: name.into(), grade, holds })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn grade(&self) -> Option<&str> {
        self.grade.as_deref()
    }

    pub fn holds(&self) -> &[Hold] {
        &self.holds
    }

    pub fn len(&self) -> usize {
        self.holds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.holds.is_empty()
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn to_vector(&self) -> HoldVector {
        problem_to_vector(self)
    }
}

impl<'de> Deserialize<'de> for Problem {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            name: String,
            #[serde(default)]
            grade: Option<String>,
            holds: Vec<Hold>,
        }
        let raw = Raw::deserialize(deserializer)?;
        Problem::new(raw.name, raw.grade, raw.holds).map_err(serde::de::Error::custom)
    }
}

/// Binary occupancy of all 198 holds.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct HoldVector {
    bits: [bool; NUM_HOLDS],
}

impl HoldVector {
    pub fn empty() -> Self {
        Self { bits: [false; NUM_HOLDS] }
    }

    pub fn from_bits(bits: &[bool]) -> Result<Self, BoardError> {
        let bits: [bool; NUM_HOLDS] =
            bits.try_into().map_err(|_| BoardError::BadVectorLength(bits.len()))?;
        Ok(Self { bits })
    }

    pub fn from_indices(indices: impl IntoIterator<Item = usize>) -> Self {
        let mut v = Self::empty();
        for i in indices {
            v.set(i, true);
        }
        v
    }

    pub fn get(&self, index: usize) -> bool {
        self.bits[index]
    }

    pub fn set(&mut self, index: usize, value: bool) {
        self.bits[index] = value;
    }

    pub fn bits(&self) -> &[bool; NUM_HOLDS] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Indices of set bits, ascending.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    pub fn hamming(&self, other: &HoldVector) -> usize {
        self.bits.iter().zip(other.bits.iter()).filter(|(a, b)| a != b).count()
    }
}

impl fmt::Debug for HoldVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.ones().map(index_to_coord)).finish()
    }
}

pub fn problem_to_vector(p: &Problem) -> HoldVector {
    HoldVector::from_indices(p.holds.iter().map(|h| h.pos.index()))
}

/// Decodes a bit vector into a problem, inferring roles from rows: holds on
/// the top row finish, the lowest holds start when they sit below row 7, and
/// everything else is a mid hold. The inference is a heuristic; the model
/// itself has no notion of roles.
pub fn vector_to_problem(v: &HoldVector, name: impl Into<String>) -> Result<Problem, BoardError> {
    let coords: Vec<GridCoord> = v.ones().map(index_to_coord).collect();
    let lowest = coords.iter().map(|c| c.row).min().ok_or(BoardError::EmptyRoute)?;
    let holds = coords
        .into_iter()
        .map(|pos| {
            let role = if pos.row == TOP_ROW {
                HoldRole::Finish
            } else if pos.row == lowest && lowest < START_ROW_LIMIT {
                HoldRole::Start
            } else {
                HoldRole::Mid
            };
            Hold::new(pos, role)
        })
        .collect();
    Problem::new(name, None, holds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(col: usize, row: usize) -> GridCoord {
        GridCoord::new(col, row).unwrap()
    }

    #[test]
    fn parses_corner_labels() {
        assert_eq!(parse_position("A1").unwrap(), c(0, 0));
        assert_eq!(parse_position("K18").unwrap(), c(10, 17));
        assert_eq!(parse_position("B7").unwrap(), c(1, 6));
    }

    #[test]
    fn rejects_bad_labels() {
        for bad in ["L3", "A19", "a5", "A0", "A01", "", "A", "5A", "AA1", "B 7", "K-1", "A1 "] {
            assert!(
                matches!(parse_position(bad), Err(BoardError::MalformedPosition(_))),
                "{bad:?} should be rejected"
            );
        }
    }

    #[test]
    fn index_examples() {
        assert_eq!(coord_to_index(c(0, 0)), 0);
        assert_eq!(coord_to_index(c(10, 17)), 197);
        assert_eq!(coord_to_index(c(3, 5)), 58);
    }

    #[test]
    fn index_bijection_is_exhaustive() {
        for i in 0..NUM_HOLDS {
            assert_eq!(coord_to_index(index_to_coord(i)), i);
        }
        let labels: HashSet<String> = GridCoord::all().map(|c| c.to_string()).collect();
        assert_eq!(labels.len(), NUM_HOLDS);
        for label in labels {
            assert_eq!(parse_position(&label).unwrap().to_string(), label);
        }
    }

    #[test]
    fn problem_rejects_empty_and_duplicates() {
        assert_eq!(Problem::new("x", None, vec![]), Err(BoardError::EmptyRoute));
        let h = Hold::new(c(1, 1), HoldRole::Mid);
        assert_eq!(Problem::new("x", None, vec![h, h]), Err(BoardError::DuplicateHold(c(1, 1))));
    }

    #[test]
    fn corners_encode_to_first_and_last_bit() {
        let p = Problem::new(
            "corners",
            None,
            vec![Hold::new(c(0, 0), HoldRole::Start), Hold::new(c(10, 17), HoldRole::Finish)],
        )
        .unwrap();
        let v = problem_to_vector(&p);
        assert_eq!(v.ones().collect::<Vec<_>>(), vec![0, 197]);
        assert_eq!(v.count(), 2);
    }

    #[test]
    fn decoding_infers_roles() {
        let p = vector_to_problem(&HoldVector::from_indices([0, 197]), "g").unwrap();
        assert_eq!(
            p.holds(),
            &[Hold::new(c(0, 0), HoldRole::Start), Hold::new(c(10, 17), HoldRole::Finish)]
        );

        // Lowest hold at row 8 is too high to be a start.
        let v = HoldVector::from_indices([8 * COLS + 2, 12 * COLS + 4, 17 * COLS + 5]);
        let p = vector_to_problem(&v, "g").unwrap();
        let roles: Vec<_> = p.holds().iter().map(|h| h.role).collect();
        assert_eq!(roles, vec![HoldRole::Mid, HoldRole::Mid, HoldRole::Finish]);

        // Two holds sharing the lowest row both start.
        let v = HoldVector::from_indices([2, 4, 5 * COLS, 17 * COLS]);
        let p = vector_to_problem(&v, "g").unwrap();
        let roles: Vec<_> = p.holds().iter().map(|h| h.role).collect();
        assert_eq!(roles, vec![HoldRole::Start, HoldRole::Start, HoldRole::Mid, HoldRole::Finish]);
    }

    #[test]
    fn empty_vector_is_rejected() {
        assert_eq!(vector_to_problem(&HoldVector::empty(), "g"), Err(BoardError::EmptyRoute));
    }

    #[test]
    fn json_shape() {
        let p = Problem::new(
            "p",
            Some("6B+".into()),
            vec![Hold::new(c(0, 4), HoldRole::Start), Hold::new(c(4, 17), HoldRole::Finish)],
        )
        .unwrap();
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(
            json,
            r#"{"name":"p","grade":"6B+","holds":[{"pos":"A5","role":"start"},{"pos":"E18","role":"finish"}]}"#
        );
        let back: Problem = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<Problem>(r#"{"name":"p","holds":[]}"#).is_err());
    }

    proptest! {
        #[test]
        fn parse_accepts_exactly_board_labels(s in "[A-Za-z0-9 ]{0,4}") {
            let expected = s.len() >= 2
                && (b'A'..=b'K').contains(&s.as_bytes()[0])
                && s[1..].parse::<usize>().is_ok_and(|r| (1..=18).contains(&r) && !s[1..].starts_with('0'))
                && s[1..].bytes().all(|b| b.is_ascii_digit());
            prop_assert_eq!(parse_position(&s).is_ok(), expected);
        }

        #[test]
        fn vector_round_trip_keeps_hold_set(indices in proptest::collection::btree_set(0..NUM_HOLDS, 1..40)) {
            let v = HoldVector::from_indices(indices.iter().copied());
            let p = vector_to_problem(&v, "rt").unwrap();
            prop_assert_eq!(p.len(), indices.len());
            prop_assert_eq!(problem_to_vector(&p), v);
        }
    }
}

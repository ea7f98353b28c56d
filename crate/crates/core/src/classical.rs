//! Classical analogue: two independent one-direction "singlets" whose
//! constituents always carry opposite bits, and the views that relabel
//! one and the same data set.
//!
//! A row holds Alice's A1, Eve's E2 and E3, and Bob's B4. Each view decides
//! per row whether E2–E3 is read as a coincidence (`c`) or as two singles
//! (`p`); the resulting label depends only on `(a1, b4)` and that choice.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

const TABLE1_CSV: &str = include_str!("../data/table1.csv");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassicalError {
    #[error("row {row_id}: bits ({a1},{e2},{e3},{b4}) violate the singlet constraints")]
    SingletViolated { row_id: u64, a1: u8, e2: u8, e3: u8, b4: u8 },
    #[error("{rows} rows but {interpretations} interpretations")]
    LengthMismatch { rows: usize, interpretations: usize },
    #[error("unknown interpretation `{0}`")]
    UnknownInterpretation(String),
    #[error("unknown partition label `{0}`")]
    UnknownLabel(String),
    #[error("malformed fixture line {line}: {reason}")]
    Fixture { line: usize, reason: String },
    #[error("view {view}, row {row_id}: printed {printed} but computed {computed}")]
    GoldenMismatch {
        view: usize,
        row_id: u64,
        printed: PartitionLabel,
        computed: PartitionLabel,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ClassicalRow {
    row_id: u64,
    a1: u8,
    e2: u8,
    e3: u8,
    b4: u8,
}

impl ClassicalRow {
    /// Requires `e2 = 1 − a1` and `b4 = 1 − e3`.
    pub fn new(row_id: u64, a1: u8, e2: u8, e3: u8, b4: u8) -> Result<Self, ClassicalError> {
        let bits_ok = [a1, e2, e3, b4].iter().all(|&b| b <= 1);
        if !bits_ok || a1 == e2 || e3 == b4 {
            return Err(ClassicalError::SingletViolated { row_id, a1, e2, e3, b4 });
        }
        Ok(Self { row_id, a1, e2, e3, b4 })
    }

    /// Builds a row from the two source draws.
    pub fn from_sources(row_id: u64, a1: u8, e3: u8) -> Self {
        Self {
            row_id,
            a1,
            e2: 1 - a1,
            e3,
            b4: 1 - e3,
        }
    }

    pub fn row_id(&self) -> u64 {
        self.row_id
    }

    pub fn a1(&self) -> u8 {
        self.a1
    }

    pub fn e2(&self) -> u8 {
        self.e2
    }

    pub fn e3(&self) -> u8 {
        self.e3
    }

    pub fn b4(&self) -> u8 {
        self.b4
    }

    pub fn bits(&self) -> [u8; 4] {
        [self.a1, self.e2, self.e3, self.b4]
    }

    pub fn is_valid(&self) -> bool {
        Self::new(self.row_id, self.a1, self.e2, self.e3, self.b4).is_ok()
    }
}

/// How a view reads Eve's E2–E3 pair on one row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Interpretation {
    /// `c`: joint coincidence measurement.
    Coincidence,
    /// `p`: two single events.
    Singles,
}

impl Interpretation {
    pub fn symbol(self) -> char {
        match self {
            Interpretation::Coincidence => 'c',
            Interpretation::Singles => 'p',
        }
    }
}

impl fmt::Display for Interpretation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

impl FromStr for Interpretation {
    type Err = ClassicalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "c" => Ok(Interpretation::Coincidence),
            "p" => Ok(Interpretation::Singles),
            other => Err(ClassicalError::UnknownInterpretation(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PartitionLabel {
    E1,
    E2,
    O1,
    O2,
    P1,
    P2,
    P3,
    P4,
}

impl PartitionLabel {
    pub const ALL: [PartitionLabel; 8] = [
        PartitionLabel::E1,
        PartitionLabel::E2,
        PartitionLabel::O1,
        PartitionLabel::O2,
        PartitionLabel::P1,
        PartitionLabel::P2,
        PartitionLabel::P3,
        PartitionLabel::P4,
    ];

    pub fn interpretation(self) -> Interpretation {
        match self {
            PartitionLabel::E1 | PartitionLabel::E2 | PartitionLabel::O1 | PartitionLabel::O2 => {
                Interpretation::Coincidence
            }
            _ => Interpretation::Singles,
        }
    }

    /// The `(a1, b4)` pair every member row carries.
    pub fn outer_bits(self) -> (u8, u8) {
        match self {
            PartitionLabel::E1 | PartitionLabel::P1 => (1, 1),
            PartitionLabel::E2 | PartitionLabel::P4 => (0, 0),
            PartitionLabel::O1 | PartitionLabel::P2 => (1, 0),
            PartitionLabel::O2 | PartitionLabel::P3 => (0, 1),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PartitionLabel::E1 => "e1",
            PartitionLabel::E2 => "e2",
            PartitionLabel::O1 => "o1",
            PartitionLabel::O2 => "o2",
            PartitionLabel::P1 => "p1",
            PartitionLabel::P2 => "p2",
            PartitionLabel::P3 => "p3",
            PartitionLabel::P4 => "p4",
        }
    }
}

impl fmt::Display for PartitionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PartitionLabel {
    type Err = ClassicalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PartitionLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s.trim())
            .ok_or_else(|| ClassicalError::UnknownLabel(s.to_string()))
    }
}

/// Draws `n` rows from two independent fair sources.
pub fn generate_rows<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<ClassicalRow> {
    (0..n)
        .map(|i| {
            let a1 = u8::from(rng.gen::<bool>());
            let e3 = u8::from(rng.gen::<bool>());
            ClassicalRow::from_sources(i as u64 + 1, a1, e3)
        })
        .collect()
}

/// Each row independently `c` with probability `q_coincidence`, else `p`.
pub fn random_interpretations<R: Rng + ?Sized>(
    n: usize,
    q_coincidence: f64,
    rng: &mut R,
) -> Vec<Interpretation> {
    (0..n)
        .map(|_| {
            if rng.gen::<f64>() < q_coincidence {
                Interpretation::Coincidence
            } else {
                Interpretation::Singles
            }
        })
        .collect()
}

pub fn label_row(row: &ClassicalRow, choice: Interpretation) -> Result<PartitionLabel, ClassicalError> {
    if !row.is_valid() {
        return Err(ClassicalError::SingletViolated {
            row_id: row.row_id,
            a1: row.a1,
            e2: row.e2,
            e3: row.e3,
            b4: row.b4,
        });
    }
    use PartitionLabel::*;
    let label = match (choice, row.a1, row.b4) {
        (Interpretation::Coincidence, 1, 1) => E1,
        (Interpretation::Coincidence, 0, 0) => E2,
        (Interpretation::Coincidence, 1, 0) => O1,
        (Interpretation::Coincidence, _, _) => O2,
        (Interpretation::Singles, 1, 1) => P1,
        (Interpretation::Singles, 1, 0) => P2,
        (Interpretation::Singles, 0, 1) => P3,
        (Interpretation::Singles, _, _) => P4,
    };
    Ok(label)
}

/// Row ids grouped by label. Labels with no rows are absent.
pub fn partition(
    rows: &[ClassicalRow],
    interpretations: &[Interpretation],
) -> Result<BTreeMap<PartitionLabel, Vec<u64>>, ClassicalError> {
    Ok(label_rows(rows, interpretations)?
        .into_iter()
        .fold(BTreeMap::new(), |mut acc, lr| {
            acc.entry(lr.label).or_insert_with(Vec::new).push(lr.row.row_id);
            acc
        }))
}

/// A row seen through one view.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabeledRow {
    pub row: ClassicalRow,
    pub interpretation: Interpretation,
    pub label: PartitionLabel,
}

pub fn label_rows(
    rows: &[ClassicalRow],
    interpretations: &[Interpretation],
) -> Result<Vec<LabeledRow>, ClassicalError> {
    if rows.len() != interpretations.len() {
        return Err(ClassicalError::LengthMismatch {
            rows: rows.len(),
            interpretations: interpretations.len(),
        });
    }
    rows.iter()
        .zip(interpretations)
        .map(|(row, &interpretation)| {
            Ok(LabeledRow {
                row: *row,
                interpretation,
                label: label_row(row, interpretation)?,
            })
        })
        .collect()
}

/// One printed view: per-row choice and the label printed next to it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PrintedView {
    pub interpretations: Vec<Interpretation>,
    pub labels: Vec<PartitionLabel>,
}

/// The 30 tabulated runs and their three printed views.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table1 {
    pub rows: Vec<ClassicalRow>,
    pub views: [PrintedView; 3],
}

fn fixture_err(line: usize, reason: impl Into<String>) -> ClassicalError {
    ClassicalError::Fixture {
        line,
        reason: reason.into(),
    }
}

/// Parses the fixture format: a header line, then
/// `row,a1,e2,e3,b4,view1_cp,view1_label,view2_cp,view2_label,view3_cp,view3_label`.
pub fn parse_table1(text: &str) -> Result<Table1, ClassicalError> {
    let mut rows = Vec::new();
    let mut views: [PrintedView; 3] = Default::default();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != 11 {
            return Err(fixture_err(lineno + 1, format!("expected 11 cells, found {}", cells.len())));
        }
        let num = |s: &str| s.parse::<u64>().map_err(|e| fixture_err(lineno + 1, e.to_string()));
        let bit = |s: &str| s.parse::<u8>().map_err(|e| fixture_err(lineno + 1, e.to_string()));
        rows.push(ClassicalRow::new(
            num(cells[0])?,
            bit(cells[1])?,
            bit(cells[2])?,
            bit(cells[3])?,
            bit(cells[4])?,
        )?);
        for (v, view) in views.iter_mut().enumerate() {
            view.interpretations.push(cells[5 + 2 * v].parse()?);
            view.labels.push(cells[6 + 2 * v].parse()?);
        }
    }
    Ok(Table1 { rows, views })
}

/// The embedded 30-row fixture.
pub fn table1_fixture() -> Table1 {
    parse_table1(TABLE1_CSV).expect("embedded fixture is well formed")
}

/// Raw text of the embedded fixture.
pub fn table1_fixture_csv() -> &'static str {
    TABLE1_CSV
}

/// Recomputed labels for the three views of the fixture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table1Replay {
    pub table: Table1,
    pub recomputed: [Vec<PartitionLabel>; 3],
}

/// Relabels the fixture under each printed view and checks every cell
/// against the printed label.
pub fn replay_table1() -> Result<Table1Replay, ClassicalError> {
    let table = table1_fixture();
    let mut recomputed: [Vec<PartitionLabel>; 3] = Default::default();
    for (v, view) in table.views.iter().enumerate() {
        for ((row, &choice), &printed) in table.rows.iter().zip(&view.interpretations).zip(&view.labels) {
            let computed = label_row(row, choice)?;
            if computed != printed {
                return Err(ClassicalError::GoldenMismatch {
                    view: v + 1,
                    row_id: row.row_id,
                    printed,
                    computed,
                });
            }
            recomputed[v].push(computed);
        }
    }
    Ok(Table1Replay { table, recomputed })
}

//! Trial-log and classical-row files in CSV or JSON.
//!
//! Quantum log columns, in order:
//! `trial_id,ordering,alice_theta,alice_outcome,bob_theta,bob_outcome,eve_context,eve_outcome_label,t_alice,t_bob,t_eve`.
//! Angles are radians written with 17 significant digits.
//!
//! Classical files use `row,a1,e2,e3,b4` followed by a `viewK_cp,viewK_label`
//! column pair per view, the same layout as the embedded 30-row fixture.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use swapsim_core::classical::{ClassicalRow, Interpretation, PartitionLabel};
use swapsim_core::contexts::{AngleSetting, ContextName, OutcomeLabel, Sign};
use swapsim_core::protocol::{Ordering, Timestamps, TrialRecord};

use crate::config::Format;
use crate::CliError;

pub const TRIAL_HEADER: [&str; 11] = [
    "trial_id",
    "ordering",
    "alice_theta",
    "alice_outcome",
    "bob_theta",
    "bob_outcome",
    "eve_context",
    "eve_outcome_label",
    "t_alice",
    "t_bob",
    "t_eve",
];

/// Flat, serializable form of a [`TrialRecord`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial_id: u64,
    pub ordering: Ordering,
    pub alice_theta: f64,
    pub alice_outcome: i8,
    pub bob_theta: f64,
    pub bob_outcome: i8,
    pub eve_context: ContextName,
    pub eve_outcome_label: OutcomeLabel,
    pub t_alice: u32,
    pub t_bob: u32,
    pub t_eve: u32,
}

impl From<&TrialRecord> for TrialRow {
    fn from(r: &TrialRecord) -> Self {
        Self {
            trial_id: r.trial_id,
            ordering: r.ordering,
            alice_theta: r.alice_setting.theta(),
            alice_outcome: r.alice_outcome.value(),
            bob_theta: r.bob_setting.theta(),
            bob_outcome: r.bob_outcome.value(),
            eve_context: r.eve_context,
            eve_outcome_label: r.eve_outcome,
            t_alice: r.timestamps.alice,
            t_bob: r.timestamps.bob,
            t_eve: r.timestamps.eve,
        }
    }
}

fn sign(value: i8, trial_id: u64) -> Result<Sign, CliError> {
    match value {
        1 => Ok(Sign::Plus),
        -1 => Ok(Sign::Minus),
        v => Err(CliError::data(format!("trial {trial_id}: outcome {v} is not ±1"))),
    }
}

impl TrialRow {
    pub fn into_record(self) -> Result<TrialRecord, CliError> {
        if self.eve_outcome_label.context() != self.eve_context {
            return Err(CliError::data(format!(
                "trial {}: label {} does not belong to {}",
                self.trial_id, self.eve_outcome_label, self.eve_context
            )));
        }
        let record = TrialRecord {
            trial_id: self.trial_id,
            alice_setting: AngleSetting::alice(self.alice_theta),
            bob_setting: AngleSetting::bob(self.bob_theta),
            alice_outcome: sign(self.alice_outcome, self.trial_id)?,
            bob_outcome: sign(self.bob_outcome, self.trial_id)?,
            eve_context: self.eve_context,
            eve_outcome: self.eve_outcome_label,
            ordering: self.ordering,
            timestamps: Timestamps {
                alice: self.t_alice,
                bob: self.t_bob,
                eve: self.t_eve,
            },
        };
        if !record.is_consistent() {
            return Err(CliError::data(format!(
                "trial {}: timestamps contradict ordering {}",
                record.trial_id, record.ordering
            )));
        }
        Ok(record)
    }
}

/// Radians with 17 significant digits.
pub fn format_angle(theta: f64) -> String {
    format!("{theta:.16e}")
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

pub fn write_trials<W: Write>(records: &[TrialRecord], format: Format, mut out: W) -> Result<(), CliError> {
    match format {
        Format::Csv => {
            let mut w = csv_writer(out);
            w.write_record(TRIAL_HEADER)?;
            for r in records {
                let row = TrialRow::from(r);
                w.write_record([
                    row.trial_id.to_string(),
                    row.ordering.to_string(),
                    format_angle(row.alice_theta),
                    row.alice_outcome.to_string(),
                    format_angle(row.bob_theta),
                    row.bob_outcome.to_string(),
                    row.eve_context.to_string(),
                    row.eve_outcome_label.to_string(),
                    row.t_alice.to_string(),
                    row.t_bob.to_string(),
                    row.t_eve.to_string(),
                ])?;
            }
            w.flush()?;
        }
        Format::Json => {
            let rows: Vec<TrialRow> = records.iter().map(TrialRow::from).collect();
            serde_json::to_writer_pretty(&mut out, &rows)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

pub fn read_trials<R: Read>(input: R, format: Format) -> Result<Vec<TrialRecord>, CliError> {
    let rows: Vec<TrialRow> = match format {
        Format::Csv => {
            let mut reader = csv::Reader::from_reader(input);
            let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
            if header != TRIAL_HEADER {
                return Err(CliError::data(format!("unexpected trial-log header {header:?}")));
            }
            reader.deserialize().collect::<Result<_, _>>()?
        }
        Format::Json => serde_json::from_reader(input)?,
    };
    rows.into_iter().map(TrialRow::into_record).collect()
}

/// A classical row together with its label under each view.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassicalRecord {
    pub row: ClassicalRow,
    pub views: Vec<(Interpretation, PartitionLabel)>,
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonView {
    cp: String,
    label: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonClassical {
    row: u64,
    a1: u8,
    e2: u8,
    e3: u8,
    b4: u8,
    views: Vec<JsonView>,
}

pub fn classical_header(views: usize) -> Vec<String> {
    let mut h: Vec<String> = ["row", "a1", "e2", "e3", "b4"].map(String::from).to_vec();
    for v in 1..=views {
        h.push(format!("view{v}_cp"));
        h.push(format!("view{v}_label"));
    }
    h
}

pub fn write_classical<W: Write>(
    records: &[ClassicalRecord],
    views: usize,
    format: Format,
    mut out: W,
) -> Result<(), CliError> {
    if let Some(r) = records.iter().find(|r| r.views.len() != views) {
        return Err(CliError::data(format!(
            "row {} has {} views, expected {views}",
            r.row.row_id(),
            r.views.len()
        )));
    }
    match format {
        Format::Csv => {
            let mut w = csv_writer(out);
            w.write_record(classical_header(views))?;
            for r in records {
                let mut cells: Vec<String> = std::iter::once(r.row.row_id().to_string())
                    .chain(r.row.bits().iter().map(u8::to_string))
                    .collect();
                for (cp, label) in &r.views {
                    cells.push(cp.to_string());
                    cells.push(label.to_string());
                }
                w.write_record(cells)?;
            }
            w.flush()?;
        }
        Format::Json => {
            let rows: Vec<JsonClassical> = records
                .iter()
                .map(|r| JsonClassical {
                    row: r.row.row_id(),
                    a1: r.row.a1(),
                    e2: r.row.e2(),
                    e3: r.row.e3(),
                    b4: r.row.b4(),
                    views: r
                        .views
                        .iter()
                        .map(|(cp, label)| JsonView {
                            cp: cp.to_string(),
                            label: label.to_string(),
                        })
                        .collect(),
                })
                .collect();
            serde_json::to_writer_pretty(&mut out, &rows)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

fn classical_from_parts(
    row_id: u64,
    bits: [u8; 4],
    views: impl IntoIterator<Item = (String, String)>,
) -> Result<ClassicalRecord, CliError> {
    let row = ClassicalRow::new(row_id, bits[0], bits[1], bits[2], bits[3])
        .map_err(|e| CliError::data(e.to_string()))?;
    let views = views
        .into_iter()
        .map(|(cp, label)| {
            let cp: Interpretation = cp.parse().map_err(|e: swapsim_core::classical::ClassicalError| CliError::data(e.to_string()))?;
            let label: PartitionLabel = label.parse().map_err(|e: swapsim_core::classical::ClassicalError| CliError::data(e.to_string()))?;
            Ok((cp, label))
        })
        .collect::<Result<_, CliError>>()?;
    Ok(ClassicalRecord { row, views })
}

/// Returns the records and the number of views per row.
pub fn read_classical<R: Read>(input: R, format: Format) -> Result<(Vec<ClassicalRecord>, usize), CliError> {
    match format {
        Format::Csv => {
            let mut reader = csv::Reader::from_reader(input);
            let header = reader.headers()?.clone();
            if header.len() < 5 || (header.len() - 5) % 2 != 0 {
                return Err(CliError::data(format!("unexpected classical header {header:?}")));
            }
            let views = (header.len() - 5) / 2;
            if header.iter().map(str::to_string).collect::<Vec<_>>() != classical_header(views) {
                return Err(CliError::data(format!("unexpected classical header {header:?}")));
            }
            let mut out = Vec::new();
            for rec in reader.records() {
                let rec = rec?;
                let num = |i: usize| -> Result<u64, CliError> {
                    rec[i].trim().parse().map_err(|_| CliError::data(format!("bad number `{}`", &rec[i])))
                };
                let bits = [num(1)?, num(2)?, num(3)?, num(4)?].map(|b| b.min(255) as u8);
                let pairs = (0..views).map(|v| (rec[5 + 2 * v].to_string(), rec[6 + 2 * v].to_string()));
                out.push(classical_from_parts(num(0)?, bits, pairs)?);
            }
            Ok((out, views))
        }
        Format::Json => {
            let rows: Vec<JsonClassical> = serde_json::from_reader(input)?;
            let views = rows.first().map_or(0, |r| r.views.len());
            let out = rows
                .into_iter()
                .map(|r| {
                    if r.views.len() != views {
                        return Err(CliError::data(format!("row {} has a different view count", r.row)));
                    }
                    classical_from_parts(
                        r.row,
                        [r.a1, r.e2, r.e3, r.b4],
                        r.views.into_iter().map(|v| (v.cp, v.label)),
                    )
                })
                .collect::<Result<_, _>>()?;
            Ok((out, views))
        }
    }
}

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use crate::error::Result;
use crate::speccore::TokenId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MessageKind {
    Activation,
    DraftToken,
    FinalToken,
    CheckToken,
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MessageKind::Activation => "ACTIVATION",
            MessageKind::DraftToken => "DRAFT_TOKEN",
            MessageKind::FinalToken => "FINAL_TOKEN",
            MessageKind::CheckToken => "CHECK_TOKEN",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    None,
    Accept,
    Reject,
    /// Full-model token committed without a draft to compare against.
    Commit,
    /// Stale speculative work dropped by a rollback; no forward was run.
    Flushed,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::None => "",
            Verdict::Accept => "accept",
            Verdict::Reject => "reject",
            Verdict::Commit => "commit",
            Verdict::Flushed => "flushed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRecord {
    pub tick: u64,
    /// 1-based stage index.
    pub stage: usize,
    pub kind: MessageKind,
    /// Generated-token index the message refers to.
    pub position: u64,
    pub token: Option<TokenId>,
    pub verdict: Verdict,
}

impl TraceRecord {
    /// Whether the record stands for a stage forward actually executed.
    pub fn is_work(&self) -> bool {
        self.verdict != Verdict::Flushed
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventTrace {
    records: Vec<TraceRecord>,
}

pub const TRACE_HEADER: [&str; 6] = ["tick", "stage", "kind", "position", "token", "verdict"];

impl EventTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: TraceRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Activations forwarded per `(tick, stage)`. A stage forward hands at
    /// most one activation downstream, so every count must be 1.
    pub fn activations_per_stage_tick(&self) -> BTreeMap<(u64, usize), usize> {
        let mut counts = BTreeMap::new();
        for r in self
            .records
            .iter()
            .filter(|r| r.is_work() && r.kind == MessageKind::Activation)
        {
            *counts.entry((r.tick, r.stage)).or_insert(0) += 1;
        }
        counts
    }

    /// `(tick, stage)` cells where the stage ran a forward.
    pub fn busy_cells(&self) -> BTreeMap<(u64, usize), u64> {
        let mut cells = BTreeMap::new();
        for r in self.records.iter().filter(|r| r.is_work()) {
            cells.entry((r.tick, r.stage)).or_insert(r.position);
        }
        cells
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(TRACE_HEADER)?;
        for r in &self.records {
            writer.write_record([
                r.tick.to_string(),
                r.stage.to_string(),
                r.kind.to_string(),
                r.position.to_string(),
                r.token.map(|t| t.to_string()).unwrap_or_default(),
                r.verdict.to_string(),
            ])?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

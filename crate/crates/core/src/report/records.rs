//! Deterministic records persistence.
//!
//! One CSV row per generation per run, numbers at 17 significant digits
//! so every double round-trips losslessly and re-runs are byte-identical.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{OnsetReport, RunResult, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::monitor::TrajectorySnapshot;
use crate::regulator::ScheduleMode;

pub const RECORDS_HEADER: &str = "run_id,seed,mode,gen,H,S,ppl,tau,alpha_planned,alpha_eff,realized_synth_frac,rare_token_mass,tail_coverage,ece,hidden_flag,visible_flag";

/// 17 significant digits, locale-independent.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{x:.16e}")
    }
}

pub fn parse_f64(s: &str) -> Result<f64> {
    match s {
        "nan" => Ok(f64::NAN),
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => s
            .parse::<f64>()
            .map_err(|e| Error::MalformedInput(format!("bad float '{s}': {e}"))),
    }
}

/// One parsed row of a records file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordRow {
    pub run_id: String,
    pub seed: u64,
    pub mode: ScheduleMode,
    pub gen: usize,
    pub entropy: f64,
    pub drift: Option<f64>,
    pub ppl: f64,
    pub tau: f64,
    pub alpha_planned: f64,
    pub alpha_eff: f64,
    pub realized_synth_frac: f64,
    pub rare_token_mass: f64,
    pub tail_coverage: f64,
    pub ece: f64,
    pub hidden_flag: bool,
    pub visible_flag: bool,
}

impl RecordRow {
    pub fn from_record(run: &RunResult, r: &TrajectoryRecord) -> Self {
        RecordRow {
            run_id: run.spec.run_id.clone(),
            seed: run.spec.seed,
            mode: run.spec.schedule.mode,
            gen: r.snapshot.generation,
            entropy: r.snapshot.entropy,
            drift: r.snapshot.drift,
            ppl: r.snapshot.perplexity,
            tau: r.tau,
            alpha_planned: r.alpha_planned,
            alpha_eff: r.alpha_eff,
            realized_synth_frac: r.realized_synth_frac,
            rare_token_mass: r.snapshot.rare_token_mass,
            tail_coverage: r.snapshot.tail_coverage,
            ece: r.snapshot.ece,
            hidden_flag: r.hidden_flag,
            visible_flag: r.visible_flag,
        }
    }

    fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.run_id,
            self.seed,
            self.mode.as_str(),
            self.gen,
            fmt_f64(self.entropy),
            self.drift.map(fmt_f64).unwrap_or_default(),
            fmt_f64(self.ppl),
            fmt_f64(self.tau),
            fmt_f64(self.alpha_planned),
            fmt_f64(self.alpha_eff),
            fmt_f64(self.realized_synth_frac),
            fmt_f64(self.rare_token_mass),
            fmt_f64(self.tail_coverage),
            fmt_f64(self.ece),
            self.hidden_flag as u8,
            self.visible_flag as u8,
        )
    }

    fn parse_line(line: &str, lineno: usize) -> Result<Self> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 16 {
            return Err(Error::MalformedInput(format!(
                "line {lineno}: expected 16 fields, found {}",
                fields.len()
            )));
        }
        let flag = |s: &str| -> Result<bool> {
            match s {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(Error::MalformedInput(format!("line {lineno}: bad flag '{other}'"))),
            }
        };
        Ok(RecordRow {
            run_id: fields[0].to_string(),
            seed: fields[1]
                .parse()
                .map_err(|e| Error::MalformedInput(format!("line {lineno}: bad seed: {e}")))?,
            mode: ScheduleMode::parse(fields[2])?,
            gen: fields[3]
                .parse()
                .map_err(|e| Error::MalformedInput(format!("line {lineno}: bad gen: {e}")))?,
            entropy: parse_f64(fields[4])?,
            drift: if fields[5].is_empty() { None } else { Some(parse_f64(fields[5])?) },
            ppl: parse_f64(fields[6])?,
            tau: parse_f64(fields[7])?,
            alpha_planned: parse_f64(fields[8])?,
            alpha_eff: parse_f64(fields[9])?,
            realized_synth_frac: parse_f64(fields[10])?,
            rare_token_mass: parse_f64(fields[11])?,
            tail_coverage: parse_f64(fields[12])?,
            ece: parse_f64(fields[13])?,
            hidden_flag: flag(fields[14])?,
            visible_flag: flag(fields[15])?,
        })
    }

    /// Rebuild the minimal trajectory record the onset detectors need.
    pub fn to_trajectory_record(&self) -> TrajectoryRecord {
        TrajectoryRecord {
            snapshot: TrajectorySnapshot {
                generation: self.gen,
                entropy: self.entropy,
                drift: self.drift,
                perplexity: self.ppl,
                rare_token_mass: self.rare_token_mass,
                tail_coverage: self.tail_coverage,
                ece: self.ece,
                representation: Vec::new(),
            },
            tau: self.tau,
            alpha_planned: self.alpha_planned,
            alpha_eff: self.alpha_eff,
            realized_synth_frac: self.realized_synth_frac,
            hidden_flag: self.hidden_flag,
            visible_flag: self.visible_flag,
        }
    }
}

pub fn rows_from_results(results: &[RunResult]) -> Vec<RecordRow> {
    results
        .iter()
        .flat_map(|run| run.records.iter().map(move |r| RecordRow::from_record(run, r)))
        .collect()
}

pub fn records_to_string(rows: &[RecordRow]) -> String {
    let mut out = String::from(RECORDS_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_line());
        out.push('\n');
    }
    out
}

pub fn write_records(results: &[RunResult], path: &Path) -> Result<()> {
    let rows = rows_from_results(results);
    fs::write(path, records_to_string(&rows)).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn parse_records_str(text: &str) -> Result<Vec<RecordRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == RECORDS_HEADER => {}
        Some(h) => {
            return Err(Error::MalformedInput(format!(
                "unexpected records header: '{h}'"
            )))
        }
        None => return Err(Error::EmptyData("records file is empty".into())),
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| RecordRow::parse_line(l, i + 2))
        .collect()
}

pub fn read_records(path: &Path) -> Result<Vec<RecordRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_records_str(&text)
}

/// Group rows by run id, preserving first-seen order.
pub fn group_by_run(rows: &[RecordRow]) -> Vec<(String, Vec<RecordRow>)> {
    let mut order: Vec<String> = Vec::new();
    for r in rows {
        if !order.contains(&r.run_id) {
            order.push(r.run_id.clone());
        }
    }
    order
        .into_iter()
        .map(|id| {
            let mut group: Vec<RecordRow> = rows.iter().filter(|r| r.run_id == id).cloned().collect();
            group.sort_by_key(|r| r.gen);
            (id, group)
        })
        .collect()
}

/// Re-run onset detection on parsed rows.
pub fn detect_from_rows(rows: &[RecordRow]) -> Vec<(String, OnsetReport)> {
    group_by_run(rows)
        .into_iter()
        .map(|(id, group)| {
            let records: Vec<TrajectoryRecord> =
                group.iter().map(|r| r.to_trajectory_record()).collect();
            let hidden = crate::engine::detect_hidden_onset(&records, 0.5, 0.5);
            let visible = crate::engine::detect_visible_onset(&records, 5.0);
            (id, OnsetReport::new(hidden, visible))
        })
        .collect()
}

/// Persist one run: records, onset report and per-generation checkpoints
/// under `<out>/<run_id>/`.
pub fn write_run_dir(run: &RunResult, out_dir: &Path) -> Result<std::path::PathBuf> {
    let dir = out_dir.join(&run.spec.run_id);
    let ckpt_dir = dir.join("checkpoints");
    fs::create_dir_all(&ckpt_dir).map_err(|e| Error::io(ckpt_dir.display().to_string(), e))?;
    write_records(std::slice::from_ref(run), &dir.join("records.csv"))?;
    let onsets = serde_json::to_string_pretty(&run.onsets).expect("onset serialization");
    fs::write(dir.join("onsets.json"), onsets)
        .map_err(|e| Error::io(dir.join("onsets.json").display().to_string(), e))?;
    for ckpt in &run.checkpoints {
        let path = ckpt_dir.join(format!("gen_{}.json", ckpt.generation));
        fs::write(&path, ckpt.encode()).map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(dir)
}

//! Summary tables shaped like the paper's: control baselines, the
//! same-pressure comparison, the recovery grid and onset statistics.

use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use crate::engine::{iqr, mean, median, quartiles, sample_std, RecoveryResult};
use crate::error::{Error, Result};
use crate::regulator::ScheduleMode;

use super::records::{fmt_f64, group_by_run, parse_f64, RecordRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    Controls,
    SamePressure,
    Recovery,
    Onsets,
}

impl TableKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "controls" => Ok(TableKind::Controls),
            "same_pressure" => Ok(TableKind::SamePressure),
            "recovery" => Ok(TableKind::Recovery),
            "onsets" => Ok(TableKind::Onsets),
            other => Err(Error::Config(format!(
                "unknown table kind '{other}' (expected controls, same_pressure, recovery or onsets)"
            ))),
        }
    }
}

/// A rendered table: aligned text plus a machine-readable JSON value.
#[derive(Debug, Clone)]
pub struct TableOutput {
    pub text: String,
    pub json: Value,
}

pub const GAP_MARKER: &str = "—";

fn fmt_val(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0.000".into();
    }
    let a = x.abs();
    if !(1e-3..1e4).contains(&a) {
        format!("{x:.3e}")
    } else {
        format!("{x:.3}")
    }
}

fn render(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let line = |cells: &[String], widths: &[usize]| -> String {
        cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:<width$}", width = w))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    out.push_str(&line(&headers.iter().map(|s| s.to_string()).collect::<Vec<_>>(), &widths));
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    out.push('\n');
    for row in rows {
        out.push_str(&line(row, &widths));
        out.push('\n');
    }
    out
}

/// Per-run digest recomputed from a records table.
#[derive(Debug, Clone)]
pub struct RunDigest {
    pub run_id: String,
    pub seed: u64,
    pub mode: ScheduleMode,
    pub final_ppl: f64,
    pub final_entropy: f64,
    pub mean_alpha_eff: f64,
    pub hidden_onset: Option<usize>,
    pub visible_onset: Option<usize>,
}

pub fn digest_runs(rows: &[RecordRow]) -> Vec<RunDigest> {
    group_by_run(rows)
        .into_iter()
        .map(|(run_id, group)| {
            let last = group.last().expect("non-empty group");
            let alphas: Vec<f64> = group.iter().filter(|r| r.gen >= 1).map(|r| r.alpha_eff).collect();
            RunDigest {
                run_id,
                seed: last.seed,
                mode: last.mode,
                final_ppl: last.ppl,
                final_entropy: last.entropy,
                mean_alpha_eff: if alphas.is_empty() { 0.0 } else { mean(&alphas) },
                hidden_onset: group.iter().find(|r| r.hidden_flag).map(|r| r.gen),
                visible_onset: group.iter().find(|r| r.visible_flag).map(|r| r.gen),
            }
        })
        .collect()
}

fn mode_row(digests: &[RunDigest], mode: ScheduleMode) -> (Vec<String>, Value) {
    let members: Vec<&RunDigest> = digests.iter().filter(|d| d.mode == mode).collect();
    if members.is_empty() {
        return (
            vec![mode.as_str().into(), GAP_MARKER.into(), GAP_MARKER.into(), GAP_MARKER.into(), GAP_MARKER.into()],
            json!({"mode": mode.as_str(), "missing": true}),
        );
    }
    let ppl: Vec<f64> = members.iter().map(|d| d.final_ppl).collect();
    let h: Vec<f64> = members.iter().map(|d| d.final_entropy).collect();
    let a: Vec<f64> = members.iter().map(|d| d.mean_alpha_eff).collect();
    let collapse = members.iter().filter(|d| d.visible_onset.is_some()).count() as f64 / members.len() as f64;
    (
        vec![
            mode.as_str().into(),
            format!("{} ± {}", fmt_val(mean(&ppl)), fmt_val(sample_std(&ppl))),
            format!("{} ± {}", fmt_val(mean(&h)), fmt_val(sample_std(&h))),
            format!("{} ± {}", fmt_val(mean(&a)), fmt_val(sample_std(&a))),
            format!("{collapse:.2}"),
        ],
        json!({
            "mode": mode.as_str(),
            "n_runs": members.len(),
            "final_ppl_mean": mean(&ppl),
            "final_ppl_std": sample_std(&ppl),
            "final_entropy_mean": mean(&h),
            "final_entropy_std": sample_std(&h),
            "mean_alpha_mean": mean(&a),
            "mean_alpha_std": sample_std(&a),
            "collapse_fraction": collapse,
        }),
    )
}

pub fn controls_table(rows: &[RecordRow]) -> TableOutput {
    let digests = digest_runs(rows);
    // Paper order of the baseline grid.
    let modes = [
        ScheduleMode::OpenLoop,
        ScheduleMode::Mtr,
        ScheduleMode::FixedAlpha,
        ScheduleMode::RandomTau,
    ];
    let mut table_rows = Vec::new();
    let mut json_rows = Vec::new();
    for mode in modes {
        let (row, j) = mode_row(&digests, mode);
        table_rows.push(row);
        json_rows.push(j);
    }
    TableOutput {
        text: render(
            &["Baseline", "Final PPL", "Final H", "Mean α", "Collapse frac."],
            &table_rows,
        ),
        json: json!({"table": "controls", "rows": json_rows}),
    }
}

pub fn same_pressure_table(rows: &[RecordRow]) -> TableOutput {
    let digests = digest_runs(rows);
    let mut table_rows = Vec::new();
    let mut json_rows = Vec::new();
    for mode in [ScheduleMode::Mtr, ScheduleMode::FixedAlpha] {
        let members: Vec<&RunDigest> = digests.iter().filter(|d| d.mode == mode).collect();
        if members.is_empty() {
            table_rows.push(vec![mode.as_str().into(), GAP_MARKER.into(), GAP_MARKER.into(), GAP_MARKER.into()]);
            json_rows.push(json!({"mode": mode.as_str(), "missing": true}));
            continue;
        }
        let ppl: Vec<f64> = members.iter().map(|d| d.final_ppl).collect();
        let h: Vec<f64> = members.iter().map(|d| d.final_entropy).collect();
        let collapsed = members.iter().filter(|d| d.visible_onset.is_some()).count();
        table_rows.push(vec![
            mode.as_str().into(),
            format!("{} ± {}", fmt_val(mean(&ppl)), fmt_val(sample_std(&ppl))),
            format!("{} ± {}", fmt_val(mean(&h)), fmt_val(sample_std(&h))),
            format!("{collapsed}/{}", members.len()),
        ]);
        json_rows.push(json!({
            "mode": mode.as_str(),
            "final_ppl_mean": mean(&ppl),
            "final_ppl_std": sample_std(&ppl),
            "final_entropy_mean": mean(&h),
            "final_entropy_std": sample_std(&h),
            "collapsed": collapsed,
            "n_runs": members.len(),
        }));
    }
    TableOutput {
        text: render(&["Method", "Final PPL", "Final H", "Collapse fraction"], &table_rows),
        json: json!({"table": "same_pressure", "rows": json_rows}),
    }
}

pub fn onsets_table(rows: &[RecordRow]) -> TableOutput {
    let digests = digest_runs(rows);
    let mut table_rows = Vec::new();
    let mut json_rows = Vec::new();
    let opt = |o: Option<usize>| o.map(|g| g.to_string()).unwrap_or_else(|| GAP_MARKER.into());
    for d in &digests {
        let lead = match (d.hidden_onset, d.visible_onset) {
            (Some(h), Some(v)) => (v as i64 - h as i64).to_string(),
            _ => GAP_MARKER.into(),
        };
        table_rows.push(vec![
            d.run_id.clone(),
            d.seed.to_string(),
            opt(d.hidden_onset),
            opt(d.visible_onset),
            lead,
        ]);
        json_rows.push(json!({
            "run_id": d.run_id,
            "seed": d.seed,
            "hidden_onset": d.hidden_onset,
            "visible_onset": d.visible_onset,
        }));
    }
    let hidden: Vec<f64> = digests.iter().filter_map(|d| d.hidden_onset).map(|g| g as f64).collect();
    let visible: Vec<f64> = digests.iter().filter_map(|d| d.visible_onset).map(|g| g as f64).collect();
    let leads: Vec<f64> = digests
        .iter()
        .filter_map(|d| match (d.hidden_onset, d.visible_onset) {
            (Some(h), Some(v)) => Some(v as f64 - h as f64),
            _ => None,
        })
        .collect();
    let mut text = render(&["Run", "Seed", "Hidden onset", "Visible onset", "Lead time"], &table_rows);
    let stat_line = |name: &str, vals: &[f64]| -> String {
        if vals.is_empty() {
            format!("{name}: {GAP_MARKER}\n")
        } else {
            let (q1, q3) = quartiles(vals);
            format!("{name}: median {} (IQR {}–{})\n", fmt_val(median(vals)), fmt_val(q1), fmt_val(q3))
        }
    };
    text.push('\n');
    text.push_str(&stat_line("hidden onset", &hidden));
    text.push_str(&stat_line("visible onset", &visible));
    text.push_str(&stat_line("lead time", &leads));
    let stats = json!({
        "hidden_median": (!hidden.is_empty()).then(|| median(&hidden)),
        "visible_median": (!visible.is_empty()).then(|| median(&visible)),
        "lead_median": (!leads.is_empty()).then(|| median(&leads)),
        "lead_iqr": (!leads.is_empty()).then(|| iqr(&leads)),
    });
    TableOutput {
        text,
        json: json!({"table": "onsets", "rows": json_rows, "stats": stats}),
    }
}

pub const RECOVERY_HEADER: &str = "run_id,checkpoint_gen,real_fraction,steps,ppl,H";

pub fn recovery_to_string(run_id: &str, results: &[RecoveryResult]) -> String {
    let mut out = String::from(RECOVERY_HEADER);
    out.push('\n');
    for r in results {
        out.push_str(&format!(
            "{run_id},{},{},{},{},{}\n",
            r.spec.checkpoint_generation,
            fmt_f64(r.spec.budget.real_fraction),
            r.spec.budget.steps,
            fmt_f64(r.perplexity),
            fmt_f64(r.entropy),
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryRow {
    pub run_id: String,
    pub checkpoint_gen: usize,
    pub real_fraction: f64,
    pub steps: usize,
    pub ppl: f64,
    pub entropy: f64,
}

pub fn parse_recovery_str(text: &str) -> Result<Vec<RecoveryRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == RECOVERY_HEADER => {}
        Some(h) => return Err(Error::MalformedInput(format!("unexpected recovery header: '{h}'"))),
        None => return Err(Error::EmptyData("recovery file is empty".into())),
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 6 {
                return Err(Error::MalformedInput(format!("recovery line {}: expected 6 fields", i + 2)));
            }
            Ok(RecoveryRow {
                run_id: f[0].to_string(),
                checkpoint_gen: f[1].parse().map_err(|e| Error::MalformedInput(format!("bad gen: {e}")))?,
                real_fraction: parse_f64(f[2])?,
                steps: f[3].parse().map_err(|e| Error::MalformedInput(format!("bad steps: {e}")))?,
                ppl: parse_f64(f[4])?,
                entropy: parse_f64(f[5])?,
            })
        })
        .collect()
}

pub fn read_recovery(path: &Path) -> Result<Vec<RecoveryRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_recovery_str(&text)
}

/// Checkpoints × budgets grid of recovery perplexities.
pub fn recovery_table(rows: &[RecoveryRow]) -> TableOutput {
    let mut gens: Vec<usize> = rows.iter().map(|r| r.checkpoint_gen).collect();
    gens.sort_unstable();
    gens.dedup();
    let mut budgets: Vec<(usize, f64)> = rows.iter().map(|r| (r.steps, r.real_fraction)).collect();
    budgets.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.partial_cmp(&b.1).unwrap()));
    budgets.dedup();

    let headers: Vec<String> = std::iter::once("Checkpoint".to_string())
        .chain(budgets.iter().map(|(s, f)| format!("{}% real, {s} steps", f * 100.0)))
        .collect();
    let header_refs: Vec<&str> = headers.iter().map(|s| s.as_str()).collect();

    let mut table_rows = Vec::new();
    let mut json_cells = Vec::new();
    for &g in &gens {
        let mut row = vec![format!("g{g}")];
        for &(steps, frac) in &budgets {
            let cell = rows
                .iter()
                .find(|r| r.checkpoint_gen == g && r.steps == steps && r.real_fraction == frac);
            match cell {
                Some(c) => {
                    row.push(fmt_val(c.ppl));
                    json_cells.push(json!({
                        "checkpoint_gen": g,
                        "steps": steps,
                        "real_fraction": frac,
                        "ppl": c.ppl,
                        "entropy": c.entropy,
                    }));
                }
                None => {
                    row.push(GAP_MARKER.into());
                    json_cells.push(json!({
                        "checkpoint_gen": g,
                        "steps": steps,
                        "real_fraction": frac,
                        "missing": true,
                    }));
                }
            }
        }
        table_rows.push(row);
    }
    TableOutput {
        text: render(&header_refs, &table_rows),
        json: json!({"table": "recovery", "cells": json_cells}),
    }
}

/// Dispatch on the requested table kind over a parsed records file.
pub fn summarize(rows: &[RecordRow], kind: TableKind) -> Result<TableOutput> {
    if rows.is_empty() {
        return Err(Error::EmptyData("no record rows to summarize".into()));
    }
    Ok(match kind {
        TableKind::Controls => controls_table(rows),
        TableKind::SamePressure => same_pressure_table(rows),
        TableKind::Onsets => onsets_table(rows),
        TableKind::Recovery => {
            return Err(Error::Config(
                "the recovery table reads a recovery.csv file, not a records file".into(),
            ))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{RecoveryBudget, RecoverySpec};

    fn row(run_id: &str, seed: u64, mode: ScheduleMode, gen: usize, ppl: f64, h: f64, visible: bool) -> RecordRow {
        RecordRow {
            run_id: run_id.into(),
            seed,
            mode,
            gen,
            entropy: h,
            drift: None,
            ppl,
            tau: 1.0,
            alpha_planned: 0.5,
            alpha_eff: 0.5,
            realized_synth_frac: 0.5,
            rare_token_mass: 0.0,
            tail_coverage: 0.0,
            ece: 0.0,
            hidden_flag: false,
            visible_flag: visible,
        }
    }

    #[test]
    fn controls_lists_four_modes_in_order() {
        let rows = vec![
            row("open_loop_s0", 0, ScheduleMode::OpenLoop, 0, 10.0, 4.0, false),
            row("open_loop_s0", 0, ScheduleMode::OpenLoop, 1, 80.0, 1.0, true),
            row("mtr_s0", 0, ScheduleMode::Mtr, 0, 10.0, 4.0, false),
            row("mtr_s0", 0, ScheduleMode::Mtr, 1, 11.0, 3.9, false),
        ];
        let out = controls_table(&rows);
        let lines: Vec<&str> = out.text.lines().collect();
        assert!(lines[2].starts_with("open_loop"));
        assert!(lines[3].starts_with("mtr"));
        assert!(lines[4].starts_with("fixed_alpha"));
        assert!(lines[5].starts_with("random_tau"));
        // Missing modes get an explicit gap marker, not silence.
        assert!(lines[4].contains(GAP_MARKER));
    }

    #[test]
    fn recovery_grid_shape_and_round_trip() {
        let results: Vec<RecoveryResult> = [(2usize, 400usize, 63.9), (2, 1600, 41.4), (8, 400, 123.9), (8, 1600, 38.8)]
            .iter()
            .map(|&(g, steps, ppl)| RecoveryResult {
                spec: RecoverySpec {
                    checkpoint_generation: g,
                    budget: RecoveryBudget {
                        real_fraction: if steps == 400 { 0.005 } else { 0.10 },
                        steps,
                    },
                },
                perplexity: ppl,
                entropy: 2.0,
            })
            .collect();
        let text = recovery_to_string("open_loop_s0", &results);
        let rows = parse_recovery_str(&text).unwrap();
        assert_eq!(rows.len(), 4);
        let table = recovery_table(&rows);
        let lines: Vec<&str> = table.text.lines().collect();
        assert!(lines[0].contains("0.5% real, 400 steps"));
        assert!(lines[0].contains("10% real, 1600 steps"));
        assert!(lines[2].starts_with("g2"));
        assert!(lines[3].starts_with("g8"));
    }

    #[test]
    fn onsets_table_reports_median_and_iqr() {
        let mut rows = Vec::new();
        for (seed, hidden_at, visible_at) in [(0u64, 2usize, 4usize), (1, 3, 5), (2, 4, 6)] {
            for g in 0..=6 {
                let mut r = row(&format!("open_loop_s{seed}"), seed, ScheduleMode::OpenLoop, g, 10.0, 4.0, g >= visible_at);
                r.hidden_flag = g >= hidden_at;
                rows.push(r);
            }
        }
        let out = onsets_table(&rows);
        assert!(out.text.contains("median"));
        assert!(out.text.contains("IQR"));
        assert_eq!(out.json["stats"]["lead_median"], json!(2.0));
    }
}

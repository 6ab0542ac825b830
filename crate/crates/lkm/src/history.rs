//! Training-history CSVs. Floats are written with 17 significant digits so
//! every value reads back to the same `f64`.

use std::fmt::Write as _;

use lkm_core::{EpochRecord, StepRecord, TrainHistory};

use crate::error::{LkmError, Result};

pub const STEP_HEADER: &str = "step,lr,l_task,l_kd,l_total";
pub const EPOCH_HEADER: &str = "epoch,val_mae,dispersion";

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn steps_csv(history: &TrainHistory) -> String {
    let mut out = String::from(STEP_HEADER);
    out.push('\n');
    for s in &history.steps {
        writeln!(
            out,
            "{},{},{},{},{}",
            s.step,
            fmt_f64(s.lr),
            fmt_f64(s.l_task),
            fmt_f64(s.l_kd),
            fmt_f64(s.l_total)
        )
        .unwrap();
    }
    out
}

pub fn epochs_csv(history: &TrainHistory) -> String {
    let mut out = String::from(EPOCH_HEADER);
    out.push('\n');
    for e in &history.epochs {
        writeln!(
            out,
            "{},{},{}",
            e.epoch,
            fmt_f64(e.val_mae),
            fmt_f64(e.dispersion)
        )
        .unwrap();
    }
    out
}

fn rows<'a>(text: &'a str, header: &str) -> Result<Vec<(usize, Vec<&'a str>)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == header => {}
        _ => {
            return Err(LkmError::Table {
                line: 1,
                message: format!("expected header '{header}'"),
            })
        }
    }
    let width = header.split(',').count();
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(k, l)| {
            let cols: Vec<&str> = l.split(',').collect();
            if cols.len() != width {
                return Err(LkmError::Table {
                    line: k + 1,
                    message: format!("expected {width} columns, found {}", cols.len()),
                });
            }
            Ok((k + 1, cols))
        })
        .collect()
}

fn num<T: std::str::FromStr>(line: usize, s: &str) -> Result<T> {
    s.parse().map_err(|_| LkmError::Table {
        line,
        message: format!("malformed number '{s}'"),
    })
}

/// Reads back what [`steps_csv`] and [`epochs_csv`] wrote.
pub fn parse_history(steps: &str, epochs: &str) -> Result<TrainHistory> {
    let steps = rows(steps, STEP_HEADER)?
        .into_iter()
        .map(|(k, c)| {
            Ok(StepRecord {
                step: num(k, c[0])?,
                lr: num(k, c[1])?,
                l_task: num(k, c[2])?,
                l_kd: num(k, c[3])?,
                l_total: num(k, c[4])?,
            })
        })
        .collect::<Result<_>>()?;
    let epochs = rows(epochs, EPOCH_HEADER)?
        .into_iter()
        .map(|(k, c)| {
            Ok(EpochRecord {
                epoch: num(k, c[0])?,
                val_mae: num(k, c[1])?,
                dispersion: num(k, c[2])?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(TrainHistory { steps, epochs })
}

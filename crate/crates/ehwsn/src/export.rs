//! CSV output.
//!
//! Link rows are ordered by slot, then by the slot's link order. Numbers are
//! printed with six significant digits; an unsolved slot leaves its numeric
//! link fields empty.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::sim::{RoundResult, SlotOutcome};

pub const LINK_HEADER: [&str; 11] = [
    "slot",
    "link",
    "flow",
    "power",
    "sinr",
    "capacity_approx",
    "capacity_exact",
    "delay",
    "transferred_in",
    "lambda_node",
    "feasible",
];

pub const SUMMARY_HEADER: [&str; 9] = [
    "slot",
    "delay",
    "cumulative_delay",
    "feasible",
    "status",
    "min_sinr",
    "low_sinr_links",
    "max_stationarity",
    "max_complementarity",
];

#[derive(Debug, Error)]
#[error("cannot write {}: {source}", path.display())]
pub struct ExportError {
    pub path: PathBuf,
    #[source]
    pub source: io::Error,
}

/// `x` with six significant digits, `%g` style: plain notation for
/// exponents in `[-4, 6)`, scientific otherwise, trailing zeros dropped.
pub fn sig6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_owned()
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Name of topology data link `index`: `l` followed by its child node number.
pub fn link_label_of(topology: &ehwsn_core::Topology, index: usize) -> String {
    format!("l{}", topology.data_links()[index].child.0)
}

fn link_label(outcome: &SlotOutcome, topology: &ehwsn_core::Topology, l: usize) -> String {
    link_label_of(topology, outcome.problem.links()[l].label)
}

pub fn write_links<W: Write>(out: W, topology: &ehwsn_core::Topology, slots: &[SlotOutcome]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LINK_HEADER)?;
    for o in slots {
        let p = &o.problem;
        let received = o.solution.as_ref().map(|s| s.transferred_in(p));
        for (l, link) in p.links().iter().enumerate() {
            let mut row = vec![o.slot.to_string(), link_label(o, topology, l), sig6(link.flow)];
            match &o.solution {
                Some(s) => row.extend([
                    sig6(s.power[l]),
                    sig6(s.sinr[l]),
                    sig6(s.capacity_approx[l]),
                    sig6(s.capacity_exact[l]),
                    sig6(s.delay[l]),
                    sig6(received.as_ref().expect("solution present")[link.owner]),
                    sig6(s.lambda[link.owner]),
                    "true".into(),
                ]),
                None => {
                    row.extend(std::iter::repeat_n(String::new(), 7));
                    row.push("false".into());
                }
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary<W: Write>(out: W, result: &RoundResult) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for (o, cumulative) in result.slots.iter().zip(&result.cumulative_delay) {
        let d = &o.diagnostics;
        let status = serde_json::to_value(d.status).expect("plain enum");
        w.write_record([
            o.slot.to_string(),
            sig6(o.delay),
            sig6(*cumulative),
            o.feasible().to_string(),
            status.as_str().unwrap_or_default().to_owned(),
            d.min_sinr.map(sig6).unwrap_or_default(),
            d.low_sinr_links.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(" "),
            d.kkt.map(|k| sig6(k.max_stationarity)).unwrap_or_default(),
            d.kkt.map(|k| sig6(k.max_complementarity)).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `<dir>/<stem>.summary.csv` next to the link file.
pub fn summary_path(links: &Path) -> PathBuf {
    let stem = links.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    links.with_file_name(format!("{stem}.summary.csv"))
}

fn create(path: &Path) -> Result<File, ExportError> {
    File::create(path).map_err(|source| ExportError { path: path.to_owned(), source })
}

fn csv_error(path: &Path, e: csv::Error) -> ExportError {
    let source = match e.into_kind() {
        csv::ErrorKind::Io(e) => e,
        other => io::Error::other(format!("{other:?}")),
    };
    ExportError { path: path.to_owned(), source }
}

/// Writes the link CSV to `path` and the per-slot summary beside it.
pub fn export_results(result: &RoundResult, topology: &ehwsn_core::Topology, path: &Path) -> Result<PathBuf, ExportError> {
    write_links(create(path)?, topology, &result.slots).map_err(|e| csv_error(path, e))?;
    let summary = summary_path(path);
    write_summary(create(&summary)?, result).map_err(|e| csv_error(&summary, e))?;
    Ok(summary)
}

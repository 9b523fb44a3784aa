//! CSV and JSON writers. Output is byte-for-byte deterministic.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use deceptive_nes_core::Trajectory;
use serde::Serialize;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const STABILITY_FILE: &str = "stability.csv";
pub const ERROR_FILE: &str = "error.json";

#[derive(Debug, thiserror::Error)]
#[error("cannot write {}: {source}", path.display())]
pub struct WriteError {
    pub path: PathBuf,
    pub source: std::io::Error,
}

/// Formats `v` with 12 significant digits, like C's `%.12g`.
pub fn fmt_sig(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, WriteError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| WriteError {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, WriteError> {
    let text = serde_json::to_string_pretty(value).expect("output types serialize");
    write_file(dir, name, &(text + "\n"))
}

/// Header `t,u_1..u_N,delta_<z>..,x_1..x_N,J_1..J_N,P_1..P_N`, with
/// deceivers named by their 1-based player index.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let n = traj.samples.first().map_or(0, |s| s.u.len());
    let mut out = String::from("t");
    for i in 1..=n {
        write!(out, ",u_{i}").unwrap();
    }
    for z in &traj.deceivers {
        write!(out, ",delta_{}", z + 1).unwrap();
    }
    for prefix in ["x", "J", "P"] {
        for i in 1..=n {
            write!(out, ",{prefix}_{i}").unwrap();
        }
    }
    out.push('\n');
    for s in &traj.samples {
        out.push_str(&fmt_sig(s.t));
        for v in s.u.iter().chain(&s.delta).chain(&s.x).chain(&s.costs).chain(&s.profits) {
            out.push(',');
            out.push_str(&fmt_sig(*v));
        }
        out.push('\n');
    }
    out
}

/// Plain CSV from a header and numeric rows.
pub fn csv(header: &[String], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

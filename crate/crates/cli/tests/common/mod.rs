#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hessianscope"))
}

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// Runs `hessianscope <cmd> -c <config> --no-timestamp <extra...>`.
pub fn run(cmd: &str, config: &Path, extra: &[&str]) -> Output {
    bin()
        .arg(cmd)
        .arg("-c")
        .arg(config)
        .arg("--no-timestamp")
        .args(extra)
        .env_remove("HESSIANSCOPE_SEED")
        .output()
        .expect("binary runs")
}

pub fn run_ok(cmd: &str, config: &Path, extra: &[&str]) {
    let out = run(cmd, config, extra);
    assert!(out.status.success(), "`{cmd}` failed: {}", String::from_utf8_lossy(&out.stderr));
}

/// Writes `text` as `run.toml` inside `dir` and returns its path.
pub fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

/// The bundled quickstart config, redirected into `out`.
pub fn quickstart_config(dir: &Path) -> PathBuf {
    let text = fs::read_to_string(repo_root().join("configs/quickstart.toml")).unwrap();
    let text = text.replace("output_dir = \"../runs/quickstart\"", "output_dir = \"out\"");
    assert!(text.contains("output_dir = \"out\""));
    write_config(dir, &text)
}

/// Parsed CSV: header plus rows keyed by column name.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<BTreeMap<String, String>>,
}

impl Table {
    pub fn read(path: &Path) -> Table {
        let mut r = csv::Reader::from_path(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let header: Vec<String> = r.headers().unwrap().iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| {
                let rec = rec.unwrap();
                header.iter().cloned().zip(rec.iter().map(str::to_string)).collect()
            })
            .collect();
        Table { header, rows }
    }

    pub fn f64(&self, row: usize, col: &str) -> Option<f64> {
        let s = &self.rows[row][col];
        (!s.is_empty()).then(|| s.parse().unwrap_or_else(|_| panic!("{col} = `{s}` is not a number")))
    }
}

#[derive(Clone, Copy)]
pub enum Kind {
    /// Finite float.
    Num,
    /// Finite float or empty.
    OptNum,
    /// Non-negative integer.
    Int,
    /// 0 or 1.
    Flag,
    /// LA or SA.
    Side,
    Text,
}

/// Checks that every required column exists and every cell parses as its
/// declared kind. Returns the table for further checks.
pub fn validate(path: &Path, schema: &[(&str, Kind)]) -> Table {
    let t = Table::read(path);
    assert!(!t.rows.is_empty(), "{} has no rows", path.display());
    for (col, kind) in schema {
        assert!(t.header.iter().any(|h| h == col), "{} lacks column {col}: {:?}", path.display(), t.header);
        for (i, row) in t.rows.iter().enumerate() {
            let s = row[*col].as_str();
            let ok = match kind {
                Kind::Num => s.parse::<f64>().is_ok_and(f64::is_finite),
                Kind::OptNum => s.is_empty() || s.parse::<f64>().is_ok_and(f64::is_finite),
                Kind::Int => s.parse::<u64>().is_ok(),
                Kind::Flag => s == "0" || s == "1",
                Kind::Side => s == "LA" || s == "SA",
                Kind::Text => !s.is_empty(),
            };
            assert!(ok, "{} row {i}: {col} = `{s}`", path.display());
        }
    }
    t
}

pub fn validate_all(out: &Path) {
    use Kind::*;
    validate(&out.join("train/loss.csv"), &[("step", Int), ("loss", Num), ("lr", Num)]);
    validate(
        &out.join("eigen/spectrum.csv"),
        &[("t", Int), ("side", Side), ("rank", Int), ("lambda", Num), ("residual", Num), ("vecfile", Text)],
    );
    validate(&out.join("track/curvature_series.csv"), &[("t0", Int), ("t", Int), ("curvature", Num)]);
    validate(
        &out.join("probe/profiles.csv"),
        &[("i", Int), ("lambda", Num), ("alpha", Num), ("true_loss", OptNum), ("quad_model", Num)],
    );
    validate(
        &out.join("fit/fits.csv"),
        &[("i", Int), ("lambda", Num), ("range", Num), ("y", OptNum), ("residual", OptNum)],
    );
    let ls = [
        ("i", Int),
        ("lambda", Num),
        ("alpha_star", Num),
        ("inv_alpha_star", OptNum),
        ("delta_L", Num),
        ("boundary", Flag),
    ];
    validate(&out.join("linesearch/linesearch.csv"), &ls);
    validate(&out.join("improve/improve.csv"), &ls);
    validate(
        &out.join("negcurve/negcurve_log.csv"),
        &[("t", Int), ("loss", Num), ("lambda", Num), ("g_dot_v", OptNum), ("fired", Flag)],
    );
    validate(&out.join("negcurve/comparison.csv"), &[("run", Text), ("final_loss", Num)]);
}

/// Every CSV below `dir`, relative path to contents.
pub fn csv_files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "csv") {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

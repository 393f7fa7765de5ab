//! CSV and key-value renderings of experiment results. Every CSV starts with
//! a `# schema_version=1` comment and a header row.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::experiments::{BoundsRow, MseTable, PushSumRow, SweepRow};

pub const SCHEMA_VERSION: u32 = 1;

fn num(x: f64) -> String {
    format!("{x:.9e}")
}

fn header(columns: &str, notes: &[&str]) -> String {
    let mut s = format!("# schema_version={SCHEMA_VERSION}\n");
    for n in notes {
        let _ = writeln!(s, "# {n}");
    }
    s.push_str(columns);
    s.push('\n');
    s
}

pub fn mse_csv(table: &MseTable) -> String {
    let mut s = header(
        "p_beta,gamma,mse_mean,mse_stderr,diverged_fraction,ckf_mse,trials",
        &["mse_mean and mse_stderr exclude divergent trials; NaN when every trial diverged"],
    );
    for r in &table.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            num(r.p_beta),
            r.gamma,
            num(r.mse_mean),
            num(r.mse_stderr),
            num(r.diverged_fraction),
            num(r.ckf_mse),
            r.trials
        );
    }
    s
}

const BOUNDS_COLUMNS: &str = "p_beta,delta,rho_l,lambda,c_b,theta_pbeta,theta_pd,p_d,p_d_half_width,p_d_exact,gamma_min_mean,gamma_min_ms,gamma_closed_form,error";

pub fn bounds_csv(rows: &[BoundsRow]) -> String {
    let mut s = header(BOUNDS_COLUMNS, &[]);
    for row in rows {
        match &row.report {
            Ok(r) => {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},",
                    num(r.p_beta),
                    num(r.delta),
                    num(r.rho_l),
                    num(r.lambda),
                    num(r.c_b),
                    num(r.theta_pbeta),
                    num(r.theta_pd),
                    num(r.p_d),
                    num(r.p_d_half_width),
                    r.p_d_exact,
                    r.gamma_min_mean,
                    r.gamma_min_ms,
                    r.gamma_closed_form
                );
            }
            Err(e) => {
                let _ = writeln!(s, "{},,,,,,,,,,,,,\"{}\"", num(row.p_beta), e.replace('"', "'"));
            }
        }
    }
    s
}

/// One `key = value` block per row, separated by blank lines.
pub fn bounds_text(rows: &[BoundsRow]) -> String {
    let mut s = String::new();
    for (k, row) in rows.iter().enumerate() {
        if k > 0 {
            s.push('\n');
        }
        let _ = writeln!(s, "p_beta = {}", row.p_beta);
        match &row.report {
            Ok(r) => {
                let _ = writeln!(s, "delta = {}", r.delta);
                let _ = writeln!(s, "rho_l = {}", r.rho_l);
                let _ = writeln!(s, "lambda = {}", r.lambda);
                let _ = writeln!(s, "c_b = {}", r.c_b);
                let _ = writeln!(s, "theta_pbeta = {}", r.theta_pbeta);
                let _ = writeln!(s, "theta_pd = {}", r.theta_pd);
                let source = if r.p_d_exact { "exact enumeration" } else { "monte-carlo" };
                let _ = writeln!(s, "p_d = {} (+/- {}, {source})", r.p_d, r.p_d_half_width);
                let _ = writeln!(s, "gamma_min_mean = {}", r.gamma_min_mean);
                let _ = writeln!(s, "gamma_min_ms = {}", r.gamma_min_ms);
                let _ = writeln!(s, "gamma_closed_form = {}", r.gamma_closed_form);
            }
            Err(e) => {
                let _ = writeln!(s, "error = {e}");
            }
        }
    }
    s
}

pub fn sweep_csv(rows: &[SweepRow], tol: f64) -> String {
    let tol_note = format!("tolerance={tol}; min_p_beta is empty when p_beta=1 already fails");
    let mut s = header("gamma,min_p_beta,excess", &[&tol_note]);
    for r in rows {
        let p = r.min_p_beta.map(num).unwrap_or_default();
        let _ = writeln!(s, "{},{},{}", r.gamma, p, num(r.excess));
    }
    s
}

pub fn pushsum_csv(rows: &[PushSumRow]) -> String {
    let mut s = header(
        "p_beta,trials,completed,rounds_mean,rounds_max,g_err_median,g_err_p95,g_err_max,n_err_max",
        &[],
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            num(r.p_beta),
            r.trials,
            r.completed,
            num(r.rounds_mean),
            r.rounds_max,
            num(r.g_err_median),
            num(r.g_err_p95),
            num(r.g_err_max),
            num(r.n_err_max)
        );
    }
    s
}

/// Writes `contents` to `dir/name`, creating `dir` if needed.
pub fn write_output(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

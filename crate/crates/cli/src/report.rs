//! CSV rows and JSON summaries. Every row carries the full parameter tuple
//! and the root seed; every JSON document carries `schema_version`.

use std::fs;
use std::path::Path;

use prnu_core::experiment::{CellResult, Method, MultiCellResult};
use prnu_core::SCHEMA_VERSION;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `{schema_version, command, config, results}` as pretty JSON.
pub fn write_summary<T: Serialize>(
    path: &Path,
    command: &str,
    config: &ExperimentConfig,
    results: &T,
) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Summary<'a, T> {
        schema_version: u32,
        command: &'a str,
        config: &'a ExperimentConfig,
        results: &'a T,
    }
    write_json(
        path,
        &Summary {
            schema_version: SCHEMA_VERSION,
            command,
            config,
            results,
        },
    )
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Attack parameter columns shared by experiment rows.
#[derive(Clone, Copy, Debug)]
pub struct Params {
    pub method: &'static str,
    pub l: usize,
    pub r: usize,
    pub n: usize,
    pub a: f64,
    pub seed: u64,
}

/// Declares a CSV row type that starts with the [`Params`] columns.
macro_rules! row_ {
    ($(#[$m:meta])* $name:ident { $($(#[$fm:meta])* $f:ident : $t:ty),* $(,)? }) => {
        $(#[$m])*
        #[derive(Clone, Debug, Serialize)]
        pub struct $name {
            pub method: &'static str,
            pub l: usize,
            pub r: usize,
            #[serde(rename = "N")]
            pub n: usize,
            #[serde(rename = "A")]
            pub a: f64,
            pub seed: u64,
            $($(#[$fm])* pub $f: $t),*
        }
    };
}

pub(crate) use row_ as row;

/// Builds a row declared with `row!` from a [`Params`] and the rest.
macro_rules! with_params_ {
    ($p:expr, $name:ident { $($body:tt)* }) => {{
        let p: Params = $p;
        $name { method: p.method, l: p.l, r: p.r, n: p.n, a: p.a, seed: p.seed, $($body)* }
    }};
}
pub(crate) use with_params_ as with_params;

impl Params {
    pub fn new(method: Method, side: usize, n: usize, a: f64, seed: u64) -> Self {
        let (l, r) = method.columns(side, n);
        let method = match method {
            Method::Conventional => "conventional",
            Method::Block { .. } => "block",
        };
        Self { method, l, r, n, a, seed }
    }
}

row_! {
    /// One `(method, A, r, N)` cell: identification and individual-test rates.
    CellRow {
        forgeries: usize,
        p_fa: f64,
        p_d: f64,
        mean_rho: f64,
        mean_psnr: f64,
        max_statistic: f64,
        flagged_blocks: usize,
        triangle_pfa: f64,
        fit_count: usize,
    }
}

impl CellRow {
    pub fn new(cell: &CellResult, side: usize, seed: u64) -> Self {
        with_params_!(Params::new(cell.spec.method, side, cell.spec.n, cell.spec.a, seed), CellRow {
            forgeries: cell.outcomes.len(),
            p_fa: cell.p_fa(),
            p_d: cell.p_d(),
            mean_rho: cell.mean_rho(),
            mean_psnr: cell.mean_psnr(),
            max_statistic: cell.max_statistic(),
            flagged_blocks: cell.outcomes.iter().map(|o| o.flagged_blocks).sum(),
            triangle_pfa: cell.options.triangle_pfa,
            fit_count: cell.options.fit_count,
        })
    }
}

row_! {
    /// One candidate scored against one forgery.
    CandidateRow {
        forgery: usize,
        target: usize,
        attack_seed: u64,
        candidate: usize,
        kind: &'static str,
        c_true: f64,
        c_est: f64,
        statistic: f64,
        t2: f64,
        flagged: bool,
    }
}

pub fn candidate_rows(cell: &CellResult, side: usize, seed: u64) -> Vec<CandidateRow> {
    let params = Params::new(cell.spec.method, side, cell.spec.n, cell.spec.a, seed);
    let mut rows = Vec::new();
    for o in &cell.outcomes {
        let kinds = [("stolen", &o.stolen_records), ("unused", &o.null_records)];
        for (kind, records) in kinds {
            rows.extend(records.iter().map(|r| with_params_!(params, CandidateRow {
                forgery: o.forgery,
                target: o.target,
                attack_seed: o.attack_seed,
                candidate: r.candidate_id,
                kind,
                c_true: r.c_true,
                c_est: r.c_est,
                statistic: r.statistic,
                t2: o.t2,
                flagged: r.statistic > o.t2,
            })));
        }
    }
    rows
}

row_! {
    /// Pooled-test detection rate at one `N / N_c` ratio.
    PooledRow {
        ratio: f64,
        n_c: usize,
        k: usize,
        repetitions: usize,
        triangle_pfa: f64,
        forgery: Option<usize>,
        p_d: f64,
    }
}

/// Pooled rows: one per forgery and ratio, then the per-ratio means
/// (with an empty `forgery` column).
pub fn pooled_rows(cell: &CellResult, side: usize, seed: u64, per_forgery: bool) -> Vec<PooledRow> {
    let Some(pooled) = &cell.options.pooled else {
        return Vec::new();
    };
    let params = Params::new(cell.spec.method, side, cell.spec.n, cell.spec.a, seed);
    let row = |ri: usize, forgery: Option<usize>, p_d: f64| with_params_!(params, PooledRow {
        ratio: pooled.ratios[ri],
        n_c: prnu_core::experiment::candidates_for_ratio(cell.spec.n, pooled.ratios[ri]),
        k: pooled.k,
        repetitions: pooled.repetitions,
        triangle_pfa: cell.options.triangle_pfa,
        forgery,
        p_d,
    });
    let mut rows = Vec::new();
    if per_forgery {
        for o in &cell.outcomes {
            rows.extend((0..pooled.ratios.len()).map(|ri| row(ri, Some(o.forgery), o.pooled_p_d[ri])));
        }
    }
    rows.extend(cell.pooled_p_d().into_iter().enumerate().map(|(ri, p)| row(ri, None, p)));
    rows
}

row_! {
    /// Multiple-forgeries detection rate of one forgery.
    MultiRow {
        forgeries: usize,
        fit_count: usize,
        triangle_pfa: f64,
        forgery: Option<usize>,
        p_d: f64,
    }
}

pub fn multi_rows(res: &MultiCellResult, side: usize, seed: u64) -> Vec<MultiRow> {
    let params = Params::new(res.spec.method, side, res.spec.n, res.spec.a, seed);
    let row = |forgery, p_d| with_params_!(params, MultiRow {
        forgeries: res.forgeries,
        fit_count: res.fit_count,
        triangle_pfa: res.pfa,
        forgery,
        p_d,
    });
    let mut rows: Vec<MultiRow> = res
        .detection_rate
        .iter()
        .enumerate()
        .map(|(i, &p)| row(Some(i), p))
        .collect();
    rows.push(row(None, res.mean_p_d));
    rows
}

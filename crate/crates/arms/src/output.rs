//! Trace CSV and summary JSON files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use arms_core::driver::TraceRecord;
use serde::Serialize;

use crate::config::ExperimentSpec;
use crate::runner::{ExperimentOutput, RunOutcome};

/// One CSV row; the column order is part of the file format.
#[derive(Debug, Serialize)]
struct TraceRow {
    run_id: usize,
    k: usize,
    l_k: f64,
    ln_z: f64,
    c_try: f64,
    d_try: f64,
    snapshot_score: f64,
    hit_count: usize,
    #[serde(rename = "H")]
    h: usize,
    p_hat_is: f64,
    p_hat_ams: f64,
    reduced_evals: u64,
    true_evals: u64,
}

impl TraceRow {
    fn new(run_id: usize, r: &TraceRecord) -> Self {
        Self {
            run_id,
            k: r.k,
            l_k: r.l_k,
            ln_z: r.ln_z,
            c_try: r.c_try,
            d_try: r.d_try,
            snapshot_score: r.snapshot_score,
            hit_count: r.hit_count,
            h: r.h,
            p_hat_is: r.p_hat_is,
            p_hat_ams: r.p_hat_ams,
            reduced_evals: r.reduced_evals,
            true_evals: r.true_evals,
        }
    }
}

pub fn write_trace<W: Write>(w: W, run_id: usize, trace: &[TraceRecord]) -> anyhow::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in trace {
        wr.serialize(TraceRow::new(run_id, r))?;
    }
    if trace.is_empty() {
        // Keep the header so empty traces still parse.
        wr.write_record([
            "run_id",
            "k",
            "l_k",
            "ln_z",
            "c_try",
            "d_try",
            "snapshot_score",
            "hit_count",
            "H",
            "p_hat_is",
            "p_hat_ams",
            "reduced_evals",
            "true_evals",
        ])?;
    }
    wr.flush()?;
    Ok(())
}

fn trace_of(o: &RunOutcome) -> &[TraceRecord] {
    match &o.result {
        Ok(r) => &r.trace,
        Err(f) => &f.trace,
    }
}

pub fn trace_path(dir: &Path, run_id: usize) -> PathBuf {
    dir.join(format!("run_{run_id:04}.csv"))
}

/// Writes `<out>/<combination>/run_XXXX.csv` and `summary.json` for every
/// combination, in a fixed order.
pub fn write_experiment(spec: &ExperimentSpec, out: &ExperimentOutput) -> anyhow::Result<()> {
    let root = spec.output_dir();
    for (summary, outcomes) in &out.combinations {
        let dir = root.join(summary.combination.label());
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        for o in outcomes {
            let path = trace_path(&dir, o.run_id);
            let f =
                fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            write_trace(std::io::BufWriter::new(f), o.run_id, trace_of(o))?;
            if spec.write_snapshots {
                let snaps: Vec<_> = trace_of(o)
                    .iter()
                    .map(|r| (r.snapshot.coords().to_vec(), r.snapshot_score))
                    .collect();
                let path = dir.join(format!("run_{:04}_snapshots.json", o.run_id));
                fs::write(&path, serde_json::to_string_pretty(&snaps)?)?;
            }
        }
        let path = dir.join("summary.json");
        fs::write(&path, serde_json::to_string_pretty(summary)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

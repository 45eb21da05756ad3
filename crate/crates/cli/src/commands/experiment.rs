use std::path::Path;

use mvdet_core::header::{run_lambda_ablation, run_mask_ablation, BranchMetrics, ExperimentConfig, ExperimentReport, HeaderError};
use serde::Serialize;

use super::{csv_done, csv_row, csv_writer};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::layout::write_file;
use crate::ExperimentKind;

#[derive(Debug, Serialize)]
struct SettingSummary {
    setting: String,
    value: f64,
    runs: usize,
    mean: BranchMetrics,
}

/// `summary.json`. Deltas are treatment minus baseline: ratio `ratios[1]`
/// minus `ratios[0]`, or masks on minus masks off.
#[derive(Debug, Serialize)]
struct Summary {
    kind: &'static str,
    settings: Vec<SettingSummary>,
    image_accuracy_delta: f64,
    fusion_accuracy_delta: f64,
}

#[derive(Debug, Serialize)]
struct LossRow<'a> {
    setting: &'a str,
    value_setting: f64,
    seed: u64,
    step: usize,
    loss: f64,
}

fn header_error(e: HeaderError) -> CliError {
    match e {
        HeaderError::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
        other => CliError::Usage(other.to_string()),
    }
}

pub fn run(kind: ExperimentKind, ratios: &[f64], out: &Path, cfg: &RunConfig) -> Result<()> {
    let ecfg = ExperimentConfig { data_seed: cfg.seed, ..cfg.experiment.clone() };
    let (baseline, treatment, name) = match kind {
        ExperimentKind::Lambda => {
            let (a, b) = run_lambda_ablation(&ecfg, [ratios[0], ratios[1]]).map_err(header_error)?;
            (a, b, "lambda")
        }
        ExperimentKind::Mask => {
            let (on, off) = run_mask_ablation(&ecfg).map_err(header_error)?;
            (off, on, "mask")
        }
    };
    let reports: [&ExperimentReport; 2] = [&baseline, &treatment];

    let path = out.join("report.csv");
    let mut w = csv_writer(&path)?;
    for row in reports.iter().flat_map(|r| r.rows()) {
        csv_row(&path, &mut w, row)?;
    }
    csv_done(&path, w)?;

    let path = out.join("loss_curves.csv");
    let mut w = csv_writer(&path)?;
    for r in reports {
        for run in &r.runs {
            for (step, &loss) in run.trace.iter().enumerate() {
                csv_row(&path, &mut w, LossRow { setting: &r.setting, value_setting: r.value, seed: run.seed, step, loss })?;
            }
        }
    }
    csv_done(&path, w)?;

    let (b, t) = (baseline.mean(), treatment.mean());
    let summary = Summary {
        kind: name,
        settings: reports
            .iter()
            .map(|r| SettingSummary { setting: r.setting.clone(), value: r.value, runs: r.runs.len(), mean: r.mean() })
            .collect(),
        image_accuracy_delta: t.image_accuracy - b.image_accuracy,
        fusion_accuracy_delta: t.fusion_accuracy - b.fusion_accuracy,
    };
    log::info!("{name}: image delta {:+.4}, fusion delta {:+.4}", summary.image_accuracy_delta, summary.fusion_accuracy_delta);
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_file(&out.join("summary.json"), json.as_bytes())
}

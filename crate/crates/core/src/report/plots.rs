//! Plot-ready CSV emission.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::eval::LambdaSweep;
use crate::report::FeatureDump;
use crate::train::TrainingLog;

pub enum PlotData<'a> {
    /// Embedding coordinates aligned with the dump's rows.
    Tsne {
        dump: &'a FeatureDump,
        coords: &'a [[f64; 2]],
    },
    LambdaBox(&'a LambdaSweep),
    TrainingCurves(&'a [TrainingLog]),
}

impl PlotData<'_> {
    pub fn file_name(&self) -> &'static str {
        match self {
            PlotData::Tsne { .. } => "tsne.csv",
            PlotData::LambdaBox(_) => "lambda_box.csv",
            PlotData::TrainingCurves(_) => "training_curves.csv",
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        match self {
            PlotData::Tsne { dump, coords } => tsne_csv(dump, coords),
            PlotData::LambdaBox(sweep) => sweep.box_csv(),
            PlotData::TrainingCurves(logs) => Ok(curves_csv(logs)),
        }
    }
}

pub fn tsne_csv(dump: &FeatureDump, coords: &[[f64; 2]]) -> Result<String> {
    if dump.rows.len() != coords.len() {
        return Err(Error::Shape(format!(
            "{} rows vs {} points",
            dump.rows.len(),
            coords.len()
        )));
    }
    let mut out = String::from("id,x,y,domain,disease\n");
    for (r, c) in dump.rows.iter().zip(coords) {
        let _ = writeln!(
            out,
            "{},{:.16e},{:.16e},{},{}",
            r.id, c[0], c[1], r.domain, r.disease
        );
    }
    Ok(out)
}

pub fn curves_csv(logs: &[TrainingLog]) -> String {
    let mut out = String::from("strategy,epoch,label_loss,domain_loss,source_uar,target_uar\n");
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.16e}"));
    for log in logs {
        for e in &log.records {
            let _ = writeln!(
                out,
                "{},{},{:.16e},{},{},{}",
                log.strategy.name(),
                e.epoch,
                e.label_loss,
                opt(e.domain_loss),
                opt(e.source_uar),
                opt(e.target_uar)
            );
        }
    }
    out
}

/// Writes the CSV for `data` into `dir` and returns its path.
pub fn emit_plot_data(data: &PlotData<'_>, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let path = dir.join(data.file_name());
    fs::write(&path, data.to_csv()?)?;
    Ok(path)
}

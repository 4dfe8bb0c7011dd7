use std::time::Instant;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::data::{GraspSample, MultiModalImage};
use crate::error::{contract_err, Result};
use crate::geometry::{is_success, GraspRect};
use crate::pipeline::GraspModel;

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Anything that maps an image to one grasp rectangle.
pub trait GraspPredictor {
    fn method(&self) -> String;
    fn predict(&self, image: &MultiModalImage) -> Result<GraspRect>;
}

/// The multi-stage detector.
pub struct Detector<'a>(pub &'a GraspModel);

impl GraspPredictor for Detector<'_> {
    fn method(&self) -> String {
        "Multi-stage STN".into()
    }

    fn predict(&self, image: &MultiModalImage) -> Result<GraspRect> {
        Ok(self.0.detect(image)?.0)
    }
}

/// The direct-regression baseline head.
pub struct Baseline<'a>(pub &'a GraspModel);

impl GraspPredictor for Baseline<'_> {
    fn method(&self) -> String {
        "Direct regression".into()
    }

    fn predict(&self, image: &MultiModalImage) -> Result<GraspRect> {
        self.0.regress_baseline(image)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub id: String,
    pub prediction: GraspRect,
    pub success: bool,
    pub best_jaccard: f64,
    pub ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub method: String,
    pub samples: usize,
    pub accuracy_pct: f64,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub outcomes: Vec<SampleOutcome>,
}

/// Success rate and per-image timing of `predictor` on `samples`.
///
/// Samples without positives are skipped with a warning. One untimed
/// warm-up prediction on the first sample precedes the timed pass.
pub fn evaluate(predictor: &dyn GraspPredictor, samples: &[GraspSample]) -> Result<EvalReport> {
    let usable: Vec<&GraspSample> = samples
        .iter()
        .filter(|s| {
            if s.positives.is_empty() {
                warn!("{}: no positive rectangles; skipped in evaluation", s.id);
            }
            !s.positives.is_empty()
        })
        .collect();
    let Some(first) = usable.first() else {
        return Err(contract_err!("evaluation needs at least one sample with positives"));
    };
    predictor.predict(&first.image)?;
    let mut outcomes = Vec::with_capacity(usable.len());
    for s in usable {
        let start = Instant::now();
        let prediction = predictor.predict(&s.image)?;
        let ms = start.elapsed().as_secs_f64() * 1e3;
        let m = is_success(&prediction, &s.positives)?;
        outcomes.push(SampleOutcome {
            id: s.id.clone(),
            prediction,
            success: m.success,
            best_jaccard: m.best_jaccard,
            ms,
        });
    }
    let n = outcomes.len();
    let hits = outcomes.iter().filter(|o| o.success).count();
    let mut times: Vec<f64> = outcomes.iter().map(|o| o.ms).collect();
    times.sort_by(f64::total_cmp);
    let median_ms = if n % 2 == 1 {
        times[n / 2]
    } else {
        0.5 * (times[n / 2 - 1] + times[n / 2])
    };
    Ok(EvalReport {
        format_version: REPORT_FORMAT_VERSION,
        method: predictor.method(),
        samples: n,
        accuracy_pct: 100.0 * hits as f64 / n as f64,
        mean_ms: times.iter().sum::<f64>() / n as f64,
        median_ms,
        outcomes,
    })
}

/// Plain-text table with columns Method, Accuracy (%), Time / Image.
pub fn format_table(reports: &[EvalReport]) -> String {
    let width = reports
        .iter()
        .map(|r| r.method.len())
        .chain(["Method".len()])
        .max()
        .unwrap_or(6);
    let mut out = format!("{:<width$} | {:>12} | {:>14}\n", "Method", "Accuracy (%)", "Time / Image");
    out.push_str(&format!("{}-+-{}-+-{}\n", "-".repeat(width), "-".repeat(12), "-".repeat(14)));
    for r in reports {
        out.push_str(&format!(
            "{:<width$} | {:>12.2} | {:>9.1} msec\n",
            r.method, r.accuracy_pct, r.mean_ms
        ));
    }
    out
}

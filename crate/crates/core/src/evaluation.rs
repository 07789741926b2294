//! Selective prediction: risk–coverage curves and AURC.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plot::{LinePlot, Series};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub coverage: f64,
    pub risk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskCoverageCurve {
    pub points: Vec<CurvePoint>,
    pub aurc: f64,
}

/// Indices sorted by decreasing confidence; ties keep their original order.
pub fn confidence_order(confidences: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..confidences.len()).collect();
    // stable sort, so equal confidences stay in index order
    order.sort_by(|&a, &b| confidences[b].total_cmp(&confidences[a]));
    order
}

fn check_inputs(n_losses: usize, confidences: &[f64]) -> Result<()> {
    if n_losses != confidences.len() {
        return Err(Error::DimensionMismatch {
            expected: n_losses,
            actual: confidences.len(),
        });
    }
    if n_losses == 0 {
        return Err(Error::invalid("no samples"));
    }
    if let Some(row) = confidences.iter().position(|c| c.is_nan()) {
        return Err(Error::NonFinite { row, column: 0 });
    }
    Ok(())
}

/// Prefix-average risk at every coverage level `k/n`, and their mean.
pub fn risk_coverage_aurc(losses: &[f64], confidences: &[f64]) -> Result<RiskCoverageCurve> {
    check_inputs(losses.len(), confidences)?;
    if let Some(i) = losses.iter().position(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(Error::invalid(format!("loss {} at index {i} is not a finite non-negative number", losses[i])));
    }
    let n = losses.len();
    let mut cumulative = 0.0;
    let mut area = 0.0;
    let mut points = Vec::with_capacity(n);
    for (k, &i) in confidence_order(confidences).iter().enumerate() {
        cumulative += losses[i];
        let risk = cumulative / (k + 1) as f64;
        area += risk;
        points.push(CurvePoint {
            coverage: (k + 1) as f64 / n as f64,
            risk,
        });
    }
    Ok(RiskCoverageCurve {
        points,
        aurc: area / n as f64,
    })
}

/// Accuracy over the `⌈coverage · n⌉` most confident samples.
pub fn selective_accuracy(correct: &[bool], confidences: &[f64], coverage: f64) -> Result<f64> {
    check_inputs(correct.len(), confidences)?;
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(Error::invalid(format!("coverage must be in (0, 1], got {coverage}")));
    }
    let n = correct.len();
    let keep = ((coverage * n as f64).ceil() as usize).clamp(1, n);
    let hits = confidence_order(confidences)[..keep]
        .iter()
        .filter(|&&i| correct[i])
        .count();
    Ok(hits as f64 / keep as f64)
}

impl RiskCoverageCurve {
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "coverage,risk")?;
        for p in &self.points {
            writeln!(w, "{},{}", p.coverage, p.risk)?;
        }
        Ok(())
    }

    pub fn write_svg(&self, w: impl Write) -> Result<()> {
        let series = Series {
            label: format!("AURC = {:.4}", self.aurc),
            points: self.points.iter().map(|p| (p.coverage, p.risk)).collect(),
        };
        LinePlot {
            title: "Risk-coverage".into(),
            x_label: "coverage".into(),
            y_label: "risk".into(),
            series: vec![series],
        }
        .write(w)
    }
}

//! CSV writers. Reals carry 17 significant digits so values round-trip.

use std::path::Path;

use crate::classifier::{Dataset, LearningCurve};
use crate::error::Result;

use super::CompareSummary;

pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

/// One simulated session (`replicate = Some(r)`) or the aggregate over the
/// replicates of a grid point (`replicate = None`, `std` = sample standard
/// deviation).
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scheme: String,
    /// `user` for user/server runs, `alice` or `bob` in the BB84 schemes.
    pub subject: String,
    pub distance_km: f64,
    pub wait_us: f64,
    pub lambda: usize,
    pub replicate: Option<usize>,
    pub r01: f64,
    pub std: f64,
    pub seed: u64,
    pub verdict: String,
    pub qber: Option<f64>,
}

pub const RESULT_HEADER: [&str; 11] = [
    "scheme",
    "subject",
    "distance_km",
    "wait_us",
    "lambda",
    "replicate",
    "r01",
    "std",
    "seed",
    "verdict",
    "qber",
];

pub fn write_rows(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RESULT_HEADER)?;
    for r in rows {
        w.write_record([
            r.scheme.clone(),
            r.subject.clone(),
            format_real(r.distance_km),
            format_real(r.wait_us),
            r.lambda.to_string(),
            r.replicate.map_or_else(|| "mean".to_string(), |x| x.to_string()),
            format_real(r.r01),
            format_real(r.std),
            r.seed.to_string(),
            r.verdict.clone(),
            r.qber.map(format_real).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotPoint {
    pub series: String,
    pub x: f64,
    pub y: f64,
    pub yerr: f64,
}

pub fn write_plot(path: &Path, points: &[PlotPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["series", "x", "y", "yerr"])?;
    for p in points {
        w.write_record([p.series.clone(), format_real(p.x), format_real(p.y), format_real(p.yerr)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_learning_curve(path: &Path, curve: &LearningCurve) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "epoch",
        "train_accuracy",
        "train_cross_entropy",
        "validation_accuracy",
        "validation_cross_entropy",
    ])?;
    for (e, tr) in curve.train.iter().enumerate() {
        let (va_acc, va_ce) = curve
            .validation
            .get(e)
            .map_or((String::new(), String::new()), |v| (format_real(v.accuracy), format_real(v.cross_entropy)));
        w.write_record([
            (e + 1).to_string(),
            format_real(tr.accuracy),
            format_real(tr.cross_entropy),
            va_acc,
            va_ce,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_roc(path: &Path, points: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["false_positive_rate", "true_positive_rate"])?;
    for (x, y) in points {
        w.write_record([format_real(*x), format_real(*y)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let width = data.samples.first().map_or(0, |s| s.features.len());
    let mut header: Vec<String> = (0..width).map(|i| format!("f{i}")).collect();
    header.push("label".into());
    header.push("provenance".into());
    w.write_record(&header)?;
    for s in &data.samples {
        let mut rec: Vec<String> = s.features.iter().map(|x| format_real(*x)).collect();
        rec.push(u8::from(s.label).to_string());
        rec.push(format!("{:016x}", data.provenance));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn write_compare(path: &Path, summary: &CompareSummary) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "mu", "frequency", "vacuous", "held_out"])?;
    let n = summary.held_out.to_string();
    for p in &summary.static_points {
        w.write_record(["static".into(), format_real(p.mu), format_real(p.frequency), p.vacuous.to_string(), n.clone()])?;
    }
    let b = &summary.best_static;
    w.write_record(["static_best".into(), format_real(b.mu), format_real(b.frequency), b.vacuous.to_string(), n.clone()])?;
    let hidden: Vec<String> = summary.dnn_hidden.iter().map(|h| h.to_string()).collect();
    w.write_record([
        format!("dnn[{}]", hidden.join("-")),
        String::new(),
        format_real(summary.dnn_frequency),
        String::new(),
        n,
    ])?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reals_round_trip() {
        for x in [0.1, 1.0 / 3.0, 6.0e-3, 2.5e-7, 0.643_052_209_415_894] {
            let s = format_real(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let mantissa = s.split('e').next().unwrap().replace(['.', '-'], "");
            assert_eq!(mantissa.len(), 17);
        }
    }

    #[test]
    fn writes_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let row = ResultRow {
            scheme: "user_server".into(),
            subject: "user".into(),
            distance_km: 1.0,
            wait_us: 1.0,
            lambda: 10,
            replicate: Some(0),
            r01: 0.7,
            std: 0.0,
            seed: 5,
            verdict: "accept".into(),
            qber: None,
        };
        write_rows(&path, &[row]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), RESULT_HEADER.join(","));
        assert!(lines.next().unwrap().starts_with("user_server,user,1.0000000000000000e0,"));
    }
}

//! Builders that flatten core result types into report tables.

use latentaug::metrics::{DistanceReport, ResidualStats};
use latentaug::model::TrainingReport;
use latentaug::report::{Cell, Column, Report};
use latentaug::tstr::{TstrComparison, TstrOutcome};
use latentaug::Result;

/// Per-series W1 distances plus @median/@iqr/@mean summaries.
pub fn distance_table(distances: &DistanceReport) -> Result<Report> {
    let mut report = Report::new(
        "distance",
        vec![Column::text("series"), Column::number("w1")],
    )?;
    for (name, w1) in &distances.per_series {
        report.push_row(vec![Cell::text(name.clone()), Cell::number(*w1)])?;
    }
    report.push_summary("median", vec![Cell::number(distances.median)])?;
    report.push_summary("iqr", vec![Cell::number(distances.iqr)])?;
    report.push_summary("mean", vec![Cell::number(distances.mean)])?;
    Ok(report)
}

/// Reconstruction-error ratios (percent of the original panel's MSE),
/// one row per augmentation route.
pub fn ratio_table(rows: &[(&str, f64)]) -> Result<Report> {
    let mut report = Report::new(
        "recon-ratio",
        vec![Column::text("route"), Column::number("ratio_percent")],
    )?;
    for (route, ratio) in rows {
        report.push_row(vec![Cell::text(*route), Cell::number(*ratio)])?;
    }
    Ok(report)
}

/// Residual moments and quantiles as metric/value pairs.
pub fn residual_table(stats: &ResidualStats) -> Result<Report> {
    let mut report = Report::new(
        "residual-stats",
        vec![Column::text("metric"), Column::number("value")],
    )?;
    let rows = [
        ("n", stats.n as f64),
        ("mean", stats.mean),
        ("std", stats.std),
        ("skewness", stats.skewness),
        ("median", stats.median),
        ("iqr", stats.iqr),
        ("kde_bandwidth", stats.kde.bandwidth),
    ];
    for (metric, value) in rows {
        report.push_row(vec![Cell::text(metric), Cell::number(value)])?;
    }
    Ok(report)
}

/// The residual density curve on its evaluation grid.
pub fn kde_table(stats: &ResidualStats) -> Result<Report> {
    let mut report = Report::new(
        "kde",
        vec![Column::number("grid"), Column::number("density")],
    )?;
    for (x, d) in stats.kde.grid.iter().zip(&stats.kde.density) {
        report.push_row(vec![Cell::number(*x), Cell::number(*d)])?;
    }
    Ok(report)
}

fn tstr_row(report: &mut Report, regime: &str, outcome: &TstrOutcome) -> Result<()> {
    report.push_row(vec![
        Cell::text(regime),
        Cell::number(outcome.train_windows as f64),
        Cell::number(outcome.test_windows as f64),
        Cell::number(outcome.final_train_loss),
        Cell::number(outcome.mae),
        Cell::number(outcome.rmse),
    ])
}

/// Forecast accuracy per training regime, tested on the real panel.
pub fn tstr_table(comparison: &TstrComparison) -> Result<Report> {
    let mut report = Report::new(
        "tstr",
        vec![
            Column::text("regime"),
            Column::number("train_windows"),
            Column::number("test_windows"),
            Column::number("final_train_loss"),
            Column::number("mae"),
            Column::number("rmse"),
        ],
    )?;
    tstr_row(&mut report, "original", &comparison.original)?;
    tstr_row(&mut report, "direct", &comparison.direct)?;
    tstr_row(&mut report, "latent", &comparison.latent)?;
    Ok(report)
}

/// Per-epoch loss decomposition.  Wall-clock timings stay out so the
/// file is identical across reruns.
pub fn train_log_table(training: &TrainingReport) -> Result<Report> {
    let mut report = Report::new(
        "train-log",
        vec![
            Column::number("epoch"),
            Column::number("total"),
            Column::number("reconstruction"),
            Column::number("kl_latent"),
            Column::number("kl_attention"),
        ],
    )?;
    for epoch in &training.epochs {
        report.push_row(vec![
            Cell::number(epoch.epoch as f64),
            Cell::number(epoch.total),
            Cell::number(epoch.reconstruction),
            Cell::number(epoch.kl_latent),
            Cell::number(epoch.kl_attention),
        ])?;
    }
    Ok(report)
}

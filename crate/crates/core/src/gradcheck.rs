//! Central-finite-difference verification of analytic gradients.
//!
//! `grad_check` perturbs every entry of every named parameter tensor by
//! ±h, evaluates the scalar objective twice, and compares the centered
//! difference against the analytic gradient.  The relative error guard
//! is |g_a − g_fd| / max(1, |g_a| + |g_fd|), which behaves sensibly for
//! both large and near-zero gradients.

use crate::error::Result;
use crate::tensor::Tensor;
use std::collections::BTreeMap;

/// Named parameter collection, ordered so iteration is deterministic.
pub type ParamMap = BTreeMap<String, Tensor>;

#[derive(Debug, Clone)]
pub struct GradCheckEntry {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub step: f64,
    pub tolerance: f64,
    pub entries_checked: usize,
    pub max_rel_error: f64,
    /// The single worst entry, if anything was checked.
    pub worst: Option<GradCheckEntry>,
    /// Entries whose relative error exceeded the tolerance.
    pub failures: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Compare `grad_fn`'s output against central finite differences of
/// `value_fn` at `point`, entry by entry.
///
/// Both closures must be deterministic functions of the parameters
/// (freeze any noise before calling).
pub fn grad_check(
    value_fn: &mut dyn FnMut(&ParamMap) -> Result<f64>,
    grad_fn: &mut dyn FnMut(&ParamMap) -> Result<ParamMap>,
    point: &ParamMap,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let analytic = grad_fn(point)?;
    let mut report = GradCheckReport {
        step,
        tolerance,
        entries_checked: 0,
        max_rel_error: 0.0,
        worst: None,
        failures: Vec::new(),
    };

    let mut work = point.clone();
    for (name, tensor) in point {
        let ga = analytic.get(name).cloned().unwrap_or_else(|| {
            // A parameter the objective never touches has zero gradient.
            Tensor::zeros(tensor.shape())
        });
        for idx in 0..tensor.len() {
            let original = tensor.data()[idx];

            work.get_mut(name).unwrap().data_mut()[idx] = original + step;
            let up = value_fn(&work)?;
            work.get_mut(name).unwrap().data_mut()[idx] = original - step;
            let down = value_fn(&work)?;
            work.get_mut(name).unwrap().data_mut()[idx] = original;

            let numeric = (up - down) / (2.0 * step);
            let a = ga.data()[idx];
            let rel = (a - numeric).abs() / f64::max(1.0, a.abs() + numeric.abs());

            report.entries_checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                if report
                    .worst
                    .as_ref()
                    .map(|w| rel > w.rel_error)
                    .unwrap_or(true)
                {
                    report.worst = Some(GradCheckEntry {
                        param: name.clone(),
                        index: idx,
                        analytic: a,
                        numeric,
                        rel_error: rel,
                    });
                }
            }
            if rel > tolerance {
                report.failures.push(GradCheckEntry {
                    param: name.clone(),
                    index: idx,
                    analytic: a,
                    numeric,
                    rel_error: rel,
                });
            }
        }
    }
    Ok(report)
}

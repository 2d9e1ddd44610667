//! Panels of univariate time series: loading, saving, preprocessing,
//! and a synthetic corpus generator.
//!
//! The on-disk layout is a wide CSV: a header row of series names (an
//! optional leading `date`/`timestamp` column holds daily dates), then
//! one row per timestep.  Group labels, when a panel has them, live in
//! a sidecar file `<path>.groups` with one `name<TAB>label` line per
//! series, so the CSV itself stays plain numbers.

use crate::error::{Error, Result};
use crate::seed;
use chrono::{Days, NaiveDate};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::fmt::Write as _;
use std::path::Path;

/// Per-series min-max scale recorded by [`TimeSeriesDataset::normalize`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesScale {
    pub min: f64,
    pub max: f64,
    /// True when the series was constant; its normalized form is all
    /// zeros and denormalization restores the constant.
    pub constant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    names: Vec<String>,
    /// One label per series; all empty when the panel is unlabeled.
    groups: Vec<String>,
    timestamps: Option<Vec<NaiveDate>>,
    /// values[s][t]: series s at timestep t.  All series share a length.
    values: Vec<Vec<f64>>,
    scales: Option<Vec<SeriesScale>>,
}

impl TimeSeriesDataset {
    pub fn new(names: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::data("dataset has no series"));
        }
        if names.len() != values.len() {
            return Err(Error::data(format!(
                "{} series names but {} value columns",
                names.len(),
                values.len()
            )));
        }
        let t = values[0].len();
        if t == 0 {
            return Err(Error::data("series are empty"));
        }
        for (i, v) in values.iter().enumerate() {
            if v.len() != t {
                return Err(Error::data(format!(
                    "series '{}' has {} values but '{}' has {}",
                    names[i],
                    v.len(),
                    names[0],
                    t
                )));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for n in &names {
            if n.trim().is_empty() {
                return Err(Error::data("empty series name in header"));
            }
            if !seen.insert(n.clone()) {
                return Err(Error::data(format!("duplicate series name '{n}'")));
            }
        }
        let groups = vec![String::new(); names.len()];
        Ok(TimeSeriesDataset {
            names,
            groups,
            timestamps: None,
            values,
            scales: None,
        })
    }

    /// Attach group labels (one per series, all non-empty).
    pub fn with_groups(mut self, groups: Vec<String>) -> Result<Self> {
        if groups.len() != self.names.len() {
            return Err(Error::data(format!(
                "{} group labels for {} series",
                groups.len(),
                self.names.len()
            )));
        }
        if groups.iter().any(|g| g.trim().is_empty()) {
            return Err(Error::data("group labels must be non-empty"));
        }
        self.groups = groups;
        Ok(self)
    }

    /// Attach per-timestep dates (panel-wide, one per row).
    pub fn with_timestamps(mut self, timestamps: Vec<NaiveDate>) -> Result<Self> {
        if timestamps.len() != self.series_len() {
            return Err(Error::data(format!(
                "{} timestamps for {} timesteps",
                timestamps.len(),
                self.series_len()
            )));
        }
        self.timestamps = Some(timestamps);
        Ok(self)
    }

    /// Replace the values, keeping names/groups/timestamps.  The result
    /// carries no normalization state.
    pub fn with_values(&self, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != self.names.len() {
            return Err(Error::data(format!(
                "{} value columns for {} series",
                values.len(),
                self.names.len()
            )));
        }
        let mut out = self.clone();
        let t = values[0].len();
        for v in &values {
            if v.len() != t {
                return Err(Error::data("replacement series have unequal lengths"));
            }
        }
        if Some(t) != out.timestamps.as_ref().map(|ts| ts.len()) {
            out.timestamps = None;
        }
        out.values = values;
        out.scales = None;
        Ok(out)
    }

    pub fn num_series(&self) -> usize {
        self.names.len()
    }

    pub fn series_len(&self) -> usize {
        self.values[0].len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn groups(&self) -> &[String] {
        &self.groups
    }

    pub fn has_groups(&self) -> bool {
        self.groups.iter().any(|g| !g.is_empty())
    }

    pub fn timestamps(&self) -> Option<&[NaiveDate]> {
        self.timestamps.as_deref()
    }

    pub fn series(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.scales.is_some()
    }

    pub fn scales(&self) -> Option<&[SeriesScale]> {
        self.scales.as_deref()
    }

    // ── CSV ─────────────────────────────────────────────────────────

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(file);

        let mut rows: Vec<csv::StringRecord> = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| {
                Error::data(format!("csv parse failure at row {}: {e}", i + 1))
            })?;
            rows.push(rec);
        }
        if rows.len() < 2 {
            return Err(Error::data(format!(
                "{}: need a header row and at least one data row",
                path.display()
            )));
        }

        let header = &rows[0];
        let has_dates = header
            .get(0)
            .map(|h| {
                let h = h.trim().to_ascii_lowercase();
                h == "date" || h == "timestamp"
            })
            .unwrap_or(false);
        let first_series_col = usize::from(has_dates);
        let names: Vec<String> = header
            .iter()
            .skip(first_series_col)
            .map(|s| s.trim().to_string())
            .collect();
        if names.is_empty() {
            return Err(Error::data(format!(
                "{}: header has no series columns",
                path.display()
            )));
        }

        let width = header.len();
        let mut values: Vec<Vec<f64>> = vec![Vec::with_capacity(rows.len() - 1); names.len()];
        let mut timestamps: Vec<NaiveDate> = Vec::new();
        for (r, rec) in rows.iter().enumerate().skip(1) {
            let row_no = r + 1; // 1-based, counting the header as row 1
            if rec.len() != width {
                return Err(Error::data(format!(
                    "row {row_no} has {} cells, expected {width}",
                    rec.len()
                )));
            }
            if has_dates {
                let cell = rec.get(0).unwrap_or("").trim();
                let d = NaiveDate::parse_from_str(cell, "%Y-%m-%d").map_err(|_| {
                    Error::data(format!(
                        "row {row_no}, column 1: bad date '{cell}' (expected YYYY-MM-DD)"
                    ))
                })?;
                timestamps.push(d);
            }
            for (s, name) in names.iter().enumerate() {
                let col_no = first_series_col + s + 1; // 1-based
                let cell = rec.get(first_series_col + s).unwrap_or("").trim();
                if cell.is_empty() {
                    return Err(Error::data(format!(
                        "missing value at row {row_no}, column {col_no} (series '{name}')"
                    )));
                }
                let v: f64 = cell.parse().map_err(|_| {
                    Error::data(format!(
                        "non-numeric value '{cell}' at row {row_no}, column {col_no} (series '{name}')"
                    ))
                })?;
                if !v.is_finite() {
                    return Err(Error::data(format!(
                        "non-finite value at row {row_no}, column {col_no} (series '{name}')"
                    )));
                }
                values[s].push(v);
            }
        }

        let mut ds = TimeSeriesDataset::new(names, values)?;
        if has_dates {
            ds = ds.with_timestamps(timestamps)?;
        }

        let groups_path = sidecar_groups_path(path);
        if groups_path.exists() {
            let text = std::fs::read_to_string(&groups_path)
                .map_err(|e| Error::io(groups_path.display().to_string(), e))?;
            let mut map = std::collections::BTreeMap::new();
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let (name, label) = line.split_once('\t').ok_or_else(|| {
                    Error::data(format!(
                        "{}: line {} is not 'name<TAB>label'",
                        groups_path.display(),
                        i + 1
                    ))
                })?;
                map.insert(name.to_string(), label.to_string());
            }
            let groups = ds
                .names
                .iter()
                .map(|n| {
                    map.get(n).cloned().ok_or_else(|| {
                        Error::data(format!(
                            "{}: no group label for series '{n}'",
                            groups_path.display()
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            ds = ds.with_groups(groups)?;
        }
        Ok(ds)
    }

    /// Write the panel back out in the same wide layout, values at 12
    /// significant digits.  Group labels go to the `<path>.groups`
    /// sidecar when present.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        if self.timestamps.is_some() {
            out.push_str("date");
            for n in &self.names {
                out.push(',');
                out.push_str(n);
            }
        } else {
            out.push_str(&self.names.join(","));
        }
        out.push('\n');
        for t in 0..self.series_len() {
            if let Some(ts) = &self.timestamps {
                let _ = write!(out, "{},", ts[t].format("%Y-%m-%d"));
            }
            for (s, v) in self.values.iter().enumerate() {
                if s > 0 {
                    out.push(',');
                }
                out.push_str(&format_significant(v[t], 12));
            }
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))?;

        if self.has_groups() {
            let mut g = String::new();
            for (n, label) in self.names.iter().zip(&self.groups) {
                let _ = writeln!(g, "{n}\t{label}");
            }
            let gp = sidecar_groups_path(path);
            std::fs::write(&gp, g).map_err(|e| Error::io(gp.display().to_string(), e))?;
        }
        Ok(())
    }

    // ── Preprocessing ───────────────────────────────────────────────

    /// Sum consecutive 7-day blocks into weekly totals, anchored at the
    /// first timestamp; a trailing partial week is dropped.  Requires
    /// consecutive daily timestamps.
    pub fn resample_weekly(&self) -> Result<Self> {
        if self.is_normalized() {
            return Err(Error::data("resample before normalizing, not after"));
        }
        let ts = self
            .timestamps
            .as_ref()
            .ok_or_else(|| Error::data("weekly resampling requires timestamps"))?;
        for (i, w) in ts.windows(2).enumerate() {
            if w[0].checked_add_days(Days::new(1)) != Some(w[1]) {
                return Err(Error::data(format!(
                    "timestamps are not consecutive daily at position {} ({} then {})",
                    i + 1,
                    w[0],
                    w[1]
                )));
            }
        }
        let weeks = self.series_len() / 7;
        if weeks == 0 {
            return Err(Error::data(format!(
                "{} daily observations is less than one full week",
                self.series_len()
            )));
        }
        let values: Vec<Vec<f64>> = self
            .values
            .iter()
            .map(|v| (0..weeks).map(|w| v[w * 7..(w + 1) * 7].iter().sum()).collect())
            .collect();
        let week_starts: Vec<NaiveDate> = (0..weeks)
            .map(|w| ts[0].checked_add_days(Days::new(7 * w as u64)).unwrap())
            .collect();
        let mut out = self.clone();
        out.values = values;
        out.timestamps = Some(week_starts);
        out.scales = None;
        Ok(out)
    }

    /// Keep the `k` series with the largest mean value; ties break by
    /// name, ascending, so the selection is independent of input order.
    pub fn select_top_k(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.num_series() {
            return Err(Error::data(format!(
                "cannot select top {k} of {} series",
                self.num_series()
            )));
        }
        let mut order: Vec<usize> = (0..self.num_series()).collect();
        let means: Vec<f64> = self
            .values
            .iter()
            .map(|v| v.iter().sum::<f64>() / v.len() as f64)
            .collect();
        order.sort_by(|&a, &b| {
            means[b]
                .partial_cmp(&means[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| self.names[a].cmp(&self.names[b]))
        });
        order.truncate(k);
        // keep the original relative order of the selected series
        order.sort_unstable();
        Ok(self.subset(&order))
    }

    fn subset(&self, idx: &[usize]) -> Self {
        TimeSeriesDataset {
            names: idx.iter().map(|&i| self.names[i].clone()).collect(),
            groups: idx.iter().map(|&i| self.groups[i].clone()).collect(),
            timestamps: self.timestamps.clone(),
            values: idx.iter().map(|&i| self.values[i].clone()).collect(),
            scales: self
                .scales
                .as_ref()
                .map(|s| idx.iter().map(|&i| s[i]).collect()),
        }
    }

    /// Min-max normalize each series to [0, 1], recording the scales.
    /// Constant series map to all zeros with a flag.
    pub fn normalize(&self) -> Result<Self> {
        if self.is_normalized() {
            return Err(Error::data("dataset is already normalized"));
        }
        let mut scales = Vec::with_capacity(self.num_series());
        let values: Vec<Vec<f64>> = self
            .values
            .iter()
            .map(|v| {
                let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
                let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if max > min {
                    scales.push(SeriesScale {
                        min,
                        max,
                        constant: false,
                    });
                    v.iter().map(|x| (x - min) / (max - min)).collect()
                } else {
                    scales.push(SeriesScale {
                        min,
                        max,
                        constant: true,
                    });
                    vec![0.0; v.len()]
                }
            })
            .collect();
        let mut out = self.clone();
        out.values = values;
        out.scales = Some(scales);
        Ok(out)
    }

    /// Invert [`normalize`](Self::normalize).
    pub fn denormalize(&self) -> Result<Self> {
        let scales = self
            .scales
            .as_ref()
            .ok_or_else(|| Error::data("dataset is not normalized"))?;
        let values = denormalize_with(scales, &self.values)?;
        let mut out = self.clone();
        out.values = values;
        out.scales = None;
        Ok(out)
    }

    /// Map an external panel (reconstructions, augmentations) back to
    /// the raw scale using this dataset's recorded normalization.
    pub fn denormalize_values(&self, values: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let scales = self
            .scales
            .as_ref()
            .ok_or_else(|| Error::data("dataset is not normalized"))?;
        denormalize_with(scales, values)
    }

    /// One-hot condition vectors from group labels: dimension equals
    /// the number of distinct labels, zero when the panel is unlabeled.
    pub fn condition_vectors(&self) -> (usize, Vec<Vec<f64>>) {
        if !self.has_groups() {
            return (0, vec![Vec::new(); self.num_series()]);
        }
        let mut labels: Vec<&String> = self.groups.iter().collect();
        labels.sort();
        labels.dedup();
        let dim = labels.len();
        let vecs = self
            .groups
            .iter()
            .map(|g| {
                let pos = labels.binary_search(&g).unwrap();
                let mut v = vec![0.0; dim];
                v[pos] = 1.0;
                v
            })
            .collect();
        (dim, vecs)
    }

    /// Variance of all values pooled across the panel.
    pub fn pooled_variance(&self) -> f64 {
        let n = (self.num_series() * self.series_len()) as f64;
        let mean: f64 = self.values.iter().flatten().sum::<f64>() / n;
        self.values
            .iter()
            .flatten()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / n
    }
}

fn denormalize_with(scales: &[SeriesScale], values: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if scales.len() != values.len() {
        return Err(Error::data(format!(
            "{} series but {} recorded scales",
            values.len(),
            scales.len()
        )));
    }
    Ok(values
        .iter()
        .zip(scales)
        .map(|(v, s)| {
            if s.constant {
                vec![s.min; v.len()]
            } else {
                v.iter().map(|x| x * (s.max - s.min) + s.min).collect()
            }
        })
        .collect())
}

fn sidecar_groups_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_os_string();
    os.push(".groups");
    std::path::PathBuf::from(os)
}

/// Format with at most `sig` significant digits, preferring plain
/// decimal notation and trimming trailing zeros.
pub fn format_significant(v: f64, sig: usize) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let exp = v.abs().log10().floor() as i32;
    if exp >= -4 && exp < sig as i32 {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        let s = format!("{:.*}", decimals, v);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let s = format!("{:.*e}", sig - 1, v);
        match s.split_once('e') {
            Some((mantissa, e)) => {
                let m = if mantissa.contains('.') {
                    mantissa.trim_end_matches('0').trim_end_matches('.')
                } else {
                    mantissa
                };
                format!("{m}e{e}")
            }
            None => s,
        }
    }
}

// ── Synthetic corpus ────────────────────────────────────────────────

/// Period classes used by the generator; the class name doubles as the
/// series' group label.
const SYNTH_PERIODS: [usize; 3] = [12, 24, 48];

/// Generate `n_series` series of `length` steps: linear trend plus one
/// sinusoid plus Gaussian noise of standard deviation `noise_sigma`.
/// Periods cycle through {12, 24, 48}; the period class is the group
/// label.  Daily timestamps start 2020-01-06.
pub fn synth_corpus(
    n_series: usize,
    length: usize,
    noise_sigma: f64,
    seed_value: u64,
) -> Result<TimeSeriesDataset> {
    if n_series == 0 || length == 0 {
        return Err(Error::data("synthetic corpus needs at least one series and one step"));
    }
    if noise_sigma < 0.0 {
        return Err(Error::config("noise sigma must be nonnegative"));
    }
    let width = n_series.to_string().len().max(3);
    let mut names = Vec::with_capacity(n_series);
    let mut groups = Vec::with_capacity(n_series);
    let mut values = Vec::with_capacity(n_series);
    for i in 0..n_series {
        let period = SYNTH_PERIODS[i % SYNTH_PERIODS.len()];
        let mut rng = seed::rng_from(seed::derive_indexed(seed_value, "synth-series", i as u64));
        let level: f64 = rng.random_range(1.0..3.0);
        let slope: f64 = rng.random_range(-1.0..1.0) / length as f64;
        let amplitude: f64 = rng.random_range(0.5..1.5);
        let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let omega = std::f64::consts::TAU / period as f64;
        let series: Vec<f64> = (0..length)
            .map(|t| {
                let noise: f64 = if noise_sigma > 0.0 {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    noise_sigma * z
                } else {
                    0.0
                };
                level + slope * t as f64 + amplitude * (omega * t as f64 + phase).sin() + noise
            })
            .collect();
        names.push(format!("s{i:0width$}"));
        groups.push(format!("p{period}"));
        values.push(series);
    }
    let start = NaiveDate::from_ymd_opt(2020, 1, 6).unwrap();
    let timestamps: Vec<NaiveDate> = (0..length)
        .map(|t| start.checked_add_days(Days::new(t as u64)).unwrap())
        .collect();
    TimeSeriesDataset::new(names, values)?
        .with_groups(groups)?
        .with_timestamps(timestamps)
}

// ────────────────────────────────────────────────────────────────────

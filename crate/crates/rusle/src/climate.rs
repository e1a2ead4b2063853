//! Climatic indicators computed from daily precipitation stacks.
//!
//! Indicators are per-cell climatological statistics over the complete
//! calendar years in the stack, such as mean annual precipitation, the
//! modified Fournier index, or the count of days with at least 10 mm of
//! rain. They drive the empirical erosivity equations and the climate
//! similarity weighting of the ensemble.
//!
//! Evaluation uses complete years only, and a cell becomes nodata as soon
//! as one day of the evaluation window is nodata there: a partially
//! observed statistic would be biased, not merely imprecise.

use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::{GridSpec, Raster};

/// A multi-year sequence of daily precipitation rasters on one grid.
#[derive(Debug, Clone)]
pub struct DailyPrecipStack {
    spec: GridSpec,
    dates: Vec<NaiveDate>,
    days: Vec<Raster>,
}

impl DailyPrecipStack {
    /// Build a stack from parallel date and raster lists. Dates must be
    /// strictly increasing; all rasters must share one grid; valid depths
    /// must be non-negative.
    pub fn new(dates: Vec<NaiveDate>, days: Vec<Raster>) -> Result<Self> {
        if dates.len() != days.len() || days.is_empty() {
            return Err(Error::InputValidation(format!(
                "need equal non-zero date and raster counts, got {} dates and {} rasters",
                dates.len(),
                days.len()
            )));
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InputValidation(
                "stack dates must be strictly increasing".into(),
            ));
        }
        let spec = *days[0].spec();
        for (i, day) in days.iter().enumerate() {
            if !day.spec().same_grid(&spec) {
                return Err(Error::AlignmentRequired(format!(
                    "day raster {i} is on a different grid"
                )));
            }
            if day.values().iter().any(|v| !v.is_nan() && *v < 0.0) {
                return Err(Error::InputValidation(format!(
                    "negative precipitation on {}",
                    dates[i]
                )));
            }
        }
        Ok(DailyPrecipStack { spec, dates, days })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn days(&self) -> &[Raster] {
        &self.days
    }

    /// Calendar years for which every day is present in the stack.
    pub fn complete_years(&self) -> Vec<i32> {
        let mut counts = std::collections::BTreeMap::new();
        for d in &self.dates {
            *counts.entry(d.year()).or_insert(0u32) += 1;
        }
        counts
            .into_iter()
            .filter(|&(year, n)| n == days_in_year(year))
            .map(|(year, _)| year)
            .collect()
    }
}

fn days_in_year(year: i32) -> u32 {
    NaiveDate::from_ymd_opt(year, 12, 31).unwrap().ordinal()
}

/// How an indicator is computed from the daily series of one cell.
///
/// All kinds are climatological averages over the complete years of the
/// stack; month-based kinds use calendar months of the same year (winter
/// spans take December from the year they label).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum IndicatorKind {
    /// Mean annual precipitation total.
    AnnualTotal,
    /// Mean annual total over the listed calendar months (1 = January).
    MonthsTotal { months: Vec<u32> },
    /// Modified Fournier index over the monthly climatology:
    /// MFI = sum of p_m^2 / P with p_m the mean month-m total and
    /// P = sum of p_m.
    ModifiedFournier,
    /// Precipitation concentration index, 100 * sum of p_m^2 / P^2.
    ConcentrationIndex,
    /// Mean annual count of days with depth >= threshold.
    DaysOver { threshold_mm: f64 },
    /// Mean annual total over days with depth >= threshold.
    TotalOver { threshold_mm: f64 },
    /// Mean over years of the annual maximum daily depth.
    AnnualMaxDaily,
    /// Mean depth on days with depth >= threshold, pooled over all complete
    /// years; 0 where no day reaches the threshold.
    IntensityOver { threshold_mm: f64 },
}

impl IndicatorKind {
    fn validate(&self) -> Result<()> {
        match self {
            IndicatorKind::MonthsTotal { months } => {
                if months.is_empty() || months.iter().any(|m| !(1..=12).contains(m)) {
                    return Err(Error::Configuration(format!(
                        "months must be a non-empty subset of 1..=12, got {months:?}"
                    )));
                }
            }
            IndicatorKind::DaysOver { threshold_mm }
            | IndicatorKind::TotalOver { threshold_mm }
            | IndicatorKind::IntensityOver { threshold_mm }
                if !threshold_mm.is_finite() || *threshold_mm < 0.0 =>
            {
                return Err(Error::Configuration(format!(
                    "threshold must be finite and >= 0, got {threshold_mm}"
                )));
            }
            _ => {}
        }
        Ok(())
    }
}

/// One named indicator.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndicatorDef {
    pub id: String,
    pub description: String,
    #[serde(flatten)]
    pub kind: IndicatorKind,
}

/// Ordered set of indicator definitions with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorRegistry {
    defs: Vec<IndicatorDef>,
}

impl IndicatorRegistry {
    pub fn new(defs: Vec<IndicatorDef>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for def in &defs {
            if !seen.insert(def.id.as_str()) {
                return Err(Error::Configuration(format!(
                    "duplicate indicator id {:?}",
                    def.id
                )));
            }
            def.kind.validate()?;
        }
        Ok(IndicatorRegistry { defs })
    }

    pub fn defs(&self) -> &[IndicatorDef] {
        &self.defs
    }

    pub fn len(&self) -> usize {
        self.defs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defs.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&IndicatorDef> {
        self.defs.iter().find(|d| d.id == id)
    }

    /// Position of an id in registry order.
    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.defs.iter().position(|d| d.id == id)
    }

    /// Compute one indicator over the stack's complete years.
    pub fn compute_indicator(&self, stack: &DailyPrecipStack, id: &str) -> Result<Raster> {
        let def = self
            .get(id)
            .ok_or_else(|| Error::UnknownIndicator(id.to_string()))?;
        let layout = Layout::of(stack)?;
        Ok(compute_kind(&def.kind, stack, &layout))
    }

    /// Compute every indicator, in registry order.
    pub fn compute_all(&self, stack: &DailyPrecipStack) -> Result<Vec<Raster>> {
        if self.defs.is_empty() {
            return Err(Error::EmptyRegistry);
        }
        let layout = Layout::of(stack)?;
        Ok(self
            .defs
            .iter()
            .map(|def| compute_kind(&def.kind, stack, &layout))
            .collect())
    }
}

/// Day bookkeeping for the evaluation window: which stack days belong to
/// complete years, and their year ordinal and calendar month.
struct Layout {
    /// (stack day index, complete-year ordinal, month 1..=12)
    entries: Vec<(usize, u16, u8)>,
    n_years: usize,
}

impl Layout {
    fn of(stack: &DailyPrecipStack) -> Result<Layout> {
        let years = stack.complete_years();
        if years.is_empty() {
            return Err(Error::InsufficientData(
                "stack does not cover a complete calendar year".into(),
            ));
        }
        let ordinal: std::collections::BTreeMap<i32, u16> = years
            .iter()
            .enumerate()
            .map(|(i, &y)| (y, i as u16))
            .collect();
        let entries = stack
            .dates
            .iter()
            .enumerate()
            .filter_map(|(i, d)| {
                ordinal
                    .get(&d.year())
                    .map(|&y| (i, y, d.month() as u8))
            })
            .collect();
        Ok(Layout {
            entries,
            n_years: years.len(),
        })
    }
}

fn compute_kind(kind: &IndicatorKind, stack: &DailyPrecipStack, layout: &Layout) -> Raster {
    let spec = stack.spec;
    let ncols = spec.ncols;
    let mut out = vec![f64::NAN; spec.len()];
    out.par_chunks_mut(ncols)
        .enumerate()
        .for_each(|(row, dst)| {
            let mut series = vec![0.0f64; layout.entries.len()];
            'cell: for (col, d) in dst.iter_mut().enumerate() {
                let idx = row * ncols + col;
                for (t, &(day, _, _)) in layout.entries.iter().enumerate() {
                    let v = stack.days[day].values()[idx];
                    if v.is_nan() {
                        continue 'cell;
                    }
                    series[t] = v;
                }
                *d = eval_cell(kind, &series, layout);
            }
        });
    Raster::from_values(spec, out).expect("cell statistics are finite")
}

fn eval_cell(kind: &IndicatorKind, series: &[f64], layout: &Layout) -> f64 {
    let n_years = layout.n_years as f64;
    match kind {
        IndicatorKind::AnnualTotal => {
            let mut sums = vec![0.0; layout.n_years];
            for (&v, &(_, y, _)) in series.iter().zip(&layout.entries) {
                sums[y as usize] += v;
            }
            sums.iter().sum::<f64>() / n_years
        }
        IndicatorKind::MonthsTotal { months } => {
            let mut wanted = [false; 13];
            for &m in months {
                wanted[m as usize] = true;
            }
            let mut sums = vec![0.0; layout.n_years];
            for (&v, &(_, y, m)) in series.iter().zip(&layout.entries) {
                if wanted[m as usize] {
                    sums[y as usize] += v;
                }
            }
            sums.iter().sum::<f64>() / n_years
        }
        IndicatorKind::ModifiedFournier | IndicatorKind::ConcentrationIndex => {
            let mut month_sums = [0.0f64; 12];
            for (&v, &(_, _, m)) in series.iter().zip(&layout.entries) {
                month_sums[m as usize - 1] += v;
            }
            let mut sq = 0.0;
            let mut total = 0.0;
            for s in month_sums {
                let mean = s / n_years;
                sq += mean * mean;
                total += mean;
            }
            if total == 0.0 {
                0.0
            } else if matches!(kind, IndicatorKind::ModifiedFournier) {
                sq / total
            } else {
                100.0 * sq / (total * total)
            }
        }
        IndicatorKind::DaysOver { threshold_mm } => {
            let count = series.iter().filter(|&&v| v >= *threshold_mm).count();
            count as f64 / n_years
        }
        IndicatorKind::TotalOver { threshold_mm } => {
            let total: f64 = series.iter().filter(|&&v| v >= *threshold_mm).sum();
            total / n_years
        }
        IndicatorKind::AnnualMaxDaily => {
            let mut maxes = vec![0.0f64; layout.n_years];
            for (&v, &(_, y, _)) in series.iter().zip(&layout.entries) {
                let m = &mut maxes[y as usize];
                *m = m.max(v);
            }
            maxes.iter().sum::<f64>() / n_years
        }
        IndicatorKind::IntensityOver { threshold_mm } => {
            let mut total = 0.0;
            let mut count = 0usize;
            for &v in series {
                if v >= *threshold_mm {
                    total += v;
                    count += 1;
                }
            }
            if count == 0 {
                0.0
            } else {
                total / count as f64
            }
        }
    }
}

/// Statistic used to summarize indicators over a region mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FingerprintStatistic {
    #[default]
    Mean,
    Median,
}

/// Summarize each indicator over the cells where `mask` is valid and
/// non-zero: the region's climatic fingerprint, one scalar per indicator.
/// Indicator nodata inside the region is skipped; an indicator with no
/// valid cell in the region is an error.
pub fn fingerprint(
    indicators: &[Raster],
    mask: &Raster,
    statistic: FingerprintStatistic,
) -> Result<Vec<f64>> {
    let cells: Vec<usize> = mask
        .values()
        .iter()
        .enumerate()
        .filter(|(_, v)| !v.is_nan() && **v != 0.0)
        .map(|(i, _)| i)
        .collect();
    if cells.is_empty() {
        return Err(Error::EmptyRegion);
    }
    indicators
        .iter()
        .map(|ind| {
            if !ind.spec().same_grid(mask.spec()) {
                return Err(Error::AlignmentRequired(
                    "indicator and mask grids differ".into(),
                ));
            }
            let mut values: Vec<f64> = cells
                .iter()
                .map(|&i| ind.values()[i])
                .filter(|v| !v.is_nan())
                .collect();
            if values.is_empty() {
                return Err(Error::EmptyRegion);
            }
            Ok(match statistic {
                FingerprintStatistic::Mean => {
                    values.iter().sum::<f64>() / values.len() as f64
                }
                FingerprintStatistic::Median => {
                    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    let mid = values.len() / 2;
                    if values.len() % 2 == 1 {
                        values[mid]
                    } else {
                        0.5 * (values[mid - 1] + values[mid])
                    }
                }
            })
        })
        .collect()
}

/// The built-in 26-indicator registry.
///
/// The published ensemble study names only a few of its 26 indicators
/// (annual precipitation, the modified Fournier index, rainfall on days
/// with at least 10 mm); the remainder here are standard erosivity-adjacent
/// precipitation statistics. The set is configuration, so a different
/// registry can be supplied without code changes.
pub fn default_registry() -> IndicatorRegistry {
    const MONTHS: [&str; 12] = [
        "January",
        "February",
        "March",
        "April",
        "May",
        "June",
        "July",
        "August",
        "September",
        "October",
        "November",
        "December",
    ];
    let mut defs = vec![IndicatorDef {
        id: "annual_precip".into(),
        description: "Mean annual precipitation total (mm)".into(),
        kind: IndicatorKind::AnnualTotal,
    }];
    for m in 1..=12u32 {
        defs.push(IndicatorDef {
            id: format!("precip_m{m:02}"),
            description: format!("Mean {} precipitation total (mm)", MONTHS[m as usize - 1]),
            kind: IndicatorKind::MonthsTotal { months: vec![m] },
        });
    }
    let mut push = |id: &str, description: &str, kind: IndicatorKind| {
        defs.push(IndicatorDef {
            id: id.into(),
            description: description.into(),
            kind,
        });
    };
    push(
        "mfi",
        "Modified Fournier index from the monthly climatology (mm)",
        IndicatorKind::ModifiedFournier,
    );
    push(
        "pci",
        "Precipitation concentration index (percent)",
        IndicatorKind::ConcentrationIndex,
    );
    push(
        "rain_days_ge10",
        "Mean annual count of days with at least 10 mm",
        IndicatorKind::DaysOver { threshold_mm: 10.0 },
    );
    push(
        "precip_ge10",
        "Mean annual precipitation total on days with at least 10 mm (mm)",
        IndicatorKind::TotalOver { threshold_mm: 10.0 },
    );
    push(
        "max_daily_precip",
        "Mean annual maximum daily precipitation (mm)",
        IndicatorKind::AnnualMaxDaily,
    );
    push(
        "wet_days",
        "Mean annual count of days with at least 1 mm",
        IndicatorKind::DaysOver { threshold_mm: 1.0 },
    );
    push(
        "precip_djf",
        "Mean December to February precipitation total (mm)",
        IndicatorKind::MonthsTotal {
            months: vec![12, 1, 2],
        },
    );
    push(
        "precip_mam",
        "Mean March to May precipitation total (mm)",
        IndicatorKind::MonthsTotal {
            months: vec![3, 4, 5],
        },
    );
    push(
        "precip_jja",
        "Mean June to August precipitation total (mm)",
        IndicatorKind::MonthsTotal {
            months: vec![6, 7, 8],
        },
    );
    push(
        "precip_son",
        "Mean September to November precipitation total (mm)",
        IndicatorKind::MonthsTotal {
            months: vec![9, 10, 11],
        },
    );
    push(
        "precip_may_oct",
        "Mean May to October precipitation total (mm)",
        IndicatorKind::MonthsTotal {
            months: vec![5, 6, 7, 8, 9, 10],
        },
    );
    push(
        "precip_nov_apr",
        "Mean November to April precipitation total (mm)",
        IndicatorKind::MonthsTotal {
            months: vec![11, 12, 1, 2, 3, 4],
        },
    );
    push(
        "wet_day_intensity",
        "Mean precipitation on days with at least 1 mm (mm/day)",
        IndicatorKind::IntensityOver { threshold_mm: 1.0 },
    );
    IndicatorRegistry::new(defs).expect("built-in registry is valid")
}

//! Climate-similarity weighting and the weighted-median ensemble.
//!
//! For every equation, each cell's climate is compared with the equation's
//! home region through a relative-distance similarity per indicator. The
//! per-indicator similarities aggregate to one weight per equation and
//! cell; guarded-out equations drop to weight zero; the ensemble R is the
//! weighted median of the surviving members, and a trustability map records
//! how similar the chosen members' home climates are to each cell.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::{reduce_stack, Raster, Reducer};

/// Relative-distance similarity formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RdsVariant {
    /// s = 1 - |x - r| / (|x| + |r|), with s = 1 when x = r.
    #[default]
    SumScaled,
    /// s = 1 - |x - r| / max(|x|, |r|), clamped into [0, 1].
    MaxScaled,
}

/// Similarity between a raster and a scalar reference, cellwise in [0, 1].
///
/// Equal values score 1 (including 0 against 0); the score decays toward 0
/// as the relative distance grows. Output is clamped into [0, 1] so
/// floating-point rounding never leaks outside the similarity range.
pub fn rds(x: &Raster, ref_value: f64, variant: RdsVariant) -> Result<Raster> {
    if !ref_value.is_finite() {
        return Err(Error::Domain(format!(
            "similarity reference must be finite, got {ref_value}"
        )));
    }
    Ok(x.map(|v| {
        if v == ref_value {
            return 1.0;
        }
        let d = (v - ref_value).abs();
        let scale = match variant {
            RdsVariant::SumScaled => v.abs() + ref_value.abs(),
            RdsVariant::MaxScaled => v.abs().max(ref_value.abs()),
        };
        (1.0 - d / scale).clamp(0.0, 1.0)
    }))
}

/// Cellwise aggregation of per-indicator similarities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    Mean,
    Median,
    Min,
    /// Default: one strongly dissimilar indicator pulls the aggregate down
    /// harder than under the mean, without the min's discontinuity.
    #[default]
    GeometricMean,
}

impl AggregationMode {
    pub const ALL: [AggregationMode; 4] = [
        AggregationMode::Mean,
        AggregationMode::Median,
        AggregationMode::Min,
        AggregationMode::GeometricMean,
    ];

    fn reducer(self) -> Reducer {
        match self {
            AggregationMode::Mean => Reducer::Mean,
            AggregationMode::Median => Reducer::Median,
            AggregationMode::Min => Reducer::Min,
            AggregationMode::GeometricMean => Reducer::GeometricMean,
        }
    }
}

/// Aggregate a stack of similarity rasters into one. Inputs must lie in
/// [0, 1]; the output stays in [0, 1] under every mode.
pub fn aggregate(sims: &[Raster], mode: AggregationMode) -> Result<Raster> {
    for s in sims {
        if s.values().iter().any(|v| !v.is_nan() && !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain(
                "similarity values must lie in [0, 1]".into(),
            ));
        }
    }
    reduce_stack(sims, mode.reducer())
}

/// Per-equation normalized weight rasters.
///
/// At each cell the weights are non-negative and sum to 1 where at least
/// one equation survived its guard; cells with no surviving equation are
/// nodata in every weight raster.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleWeights {
    weights: Vec<Raster>,
}

impl EnsembleWeights {
    /// One weight raster per equation, in equation order.
    pub fn weights(&self) -> &[Raster] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Turn aggregated similarities and guard masks into normalized weights:
/// w_i = s_i * m_i / sum over j of s_j * m_j. A nodata similarity or a
/// failed (or nodata) mask zeroes that equation's contribution; cells whose
/// contributions sum to zero become nodata.
pub fn normalize_weights(
    agg_sims: &[Raster],
    valid_masks: &[Raster],
) -> Result<EnsembleWeights> {
    if agg_sims.is_empty() || agg_sims.len() != valid_masks.len() {
        return Err(Error::InputValidation(format!(
            "need equal non-zero similarity and mask counts, got {} and {}",
            agg_sims.len(),
            valid_masks.len()
        )));
    }
    let spec = *agg_sims[0].spec();
    for r in agg_sims.iter().chain(valid_masks) {
        if !r.spec().same_grid(&spec) {
            return Err(Error::AlignmentRequired(
                "similarities and masks must share one grid".into(),
            ));
        }
    }
    let n = agg_sims.len();
    let ncols = spec.ncols;
    let mut weights: Vec<Vec<f64>> = (0..n).map(|_| vec![f64::NAN; spec.len()]).collect();

    // Row-partitioned over all weight buffers at once: split each buffer
    // into per-row chunks, then regroup by row.
    let mut rows: Vec<Vec<&mut [f64]>> = Vec::with_capacity(spec.nrows);
    for _ in 0..spec.nrows {
        rows.push(Vec::with_capacity(n));
    }
    for buffer in &mut weights {
        for (row, chunk) in buffer.chunks_mut(ncols).enumerate() {
            rows[row].push(chunk);
        }
    }
    rows.par_iter_mut().enumerate().for_each(|(row, dst)| {
        let mut contrib = vec![0.0; n];
        for col in 0..ncols {
            let idx = row * ncols + col;
            let mut total = 0.0;
            for (c, (sim, mask)) in contrib.iter_mut().zip(agg_sims.iter().zip(valid_masks)) {
                let s = sim.values()[idx];
                let m = mask.values()[idx];
                *c = if s.is_nan() || m.is_nan() || m == 0.0 {
                    0.0
                } else {
                    s
                };
                total += *c;
            }
            if total > 0.0 {
                for (buffer, c) in dst.iter_mut().zip(&contrib) {
                    buffer[col] = c / total;
                }
            }
        }
    });
    drop(rows);

    let weights = weights
        .into_iter()
        .map(|values| Raster::from_values(spec, values))
        .collect::<Result<_>>()?;
    Ok(EnsembleWeights { weights })
}

/// Weighted median of `values` under non-negative `weights`.
///
/// Zero-weight entries are ignored. With the surviving entries sorted by
/// value and W the weight total, the result is the first value whose
/// cumulative weight exceeds W/2, or the midpoint of the straddling pair
/// when the cumulative weight hits W/2 exactly. The result minimizes
/// sum of w_i * |v_i - m| over m.
pub fn weighted_median(values: &[f64], weights: &[f64]) -> Result<f64> {
    if values.is_empty() || values.len() != weights.len() {
        return Err(Error::InputValidation(format!(
            "need equal non-zero value and weight counts, got {} and {}",
            values.len(),
            weights.len()
        )));
    }
    for (&v, &w) in values.iter().zip(weights) {
        if !v.is_finite() || !w.is_finite() || w < 0.0 {
            return Err(Error::InputValidation(format!(
                "values must be finite and weights finite non-negative, got value {v} weight {w}"
            )));
        }
    }
    let mut pairs: Vec<(f64, f64)> = values
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&v, &w)| (v, w))
        .collect();
    if pairs.is_empty() {
        return Err(Error::DegenerateWeights);
    }
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let total: f64 = pairs.iter().map(|(_, w)| w).sum();
    let half = total * 0.5;
    let mut cumulative = 0.0;
    for (k, &(v, w)) in pairs.iter().enumerate() {
        let before = cumulative;
        cumulative += w;
        if cumulative > half {
            return Ok(if k > 0 && before == half {
                0.5 * (pairs[k - 1].0 + v)
            } else {
                v
            });
        }
    }
    // Rounding in the cumulative sum can leave the loop without crossing
    // half; the last positive-weight value is then the median.
    Ok(pairs[pairs.len() - 1].0)
}

/// Weighted-median ensemble of the per-equation R rasters. At each cell
/// only equations with a strictly positive weight participate; cells where
/// the weights are nodata (no surviving equation) are nodata.
pub fn ensemble_r(per_eq_r: &[Raster], weights: &EnsembleWeights) -> Result<Raster> {
    combine(per_eq_r, weights, |values, w| {
        weighted_median(values, w).expect("positive weights by construction")
    })
}

/// Trustability t = sum of w_i * s_i: the weight-weighted mean aggregated
/// similarity, in [0, 1]. Nodata exactly where the ensemble is nodata.
pub fn trustability(agg_sims: &[Raster], weights: &EnsembleWeights) -> Result<Raster> {
    combine(agg_sims, weights, |sims, w| {
        let t: f64 = sims.iter().zip(w).map(|(s, w)| s * w).sum();
        t.clamp(0.0, 1.0)
    })
}

/// Shared per-cell reduction over (member values, positive weights).
fn combine(
    members: &[Raster],
    weights: &EnsembleWeights,
    f: impl Fn(&[f64], &[f64]) -> f64 + Sync,
) -> Result<Raster> {
    if members.len() != weights.len() || members.is_empty() {
        return Err(Error::InputValidation(format!(
            "need equal non-zero member and weight counts, got {} and {}",
            members.len(),
            weights.len()
        )));
    }
    let spec = *members[0].spec();
    for r in members.iter().chain(weights.weights()) {
        if !r.spec().same_grid(&spec) {
            return Err(Error::AlignmentRequired(
                "members and weights must share one grid".into(),
            ));
        }
    }
    let n = members.len();
    let ncols = spec.ncols;
    let mut out = vec![f64::NAN; spec.len()];
    out.par_chunks_mut(ncols)
        .enumerate()
        .for_each(|(row, dst)| {
            let mut vals = Vec::with_capacity(n);
            let mut ws = Vec::with_capacity(n);
            for (col, d) in dst.iter_mut().enumerate() {
                let idx = row * ncols + col;
                vals.clear();
                ws.clear();
                for (member, weight) in members.iter().zip(weights.weights()) {
                    let w = weight.values()[idx];
                    let v = member.values()[idx];
                    if !w.is_nan() && w > 0.0 && !v.is_nan() {
                        vals.push(v);
                        ws.push(w);
                    }
                }
                if !vals.is_empty() {
                    *d = f(&vals, &ws);
                }
            }
        });
    Raster::from_values(spec, out)
}

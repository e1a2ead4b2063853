//! Regional empirical erosivity equations.
//!
//! Each equation maps one or more climatic indicators to an R estimate and
//! carries its home region's climatic fingerprint, per-indicator validity
//! ranges, and output plausibility bounds. Equations are configuration:
//! coefficients are transcribed from regional erosivity studies (Bollinne
//! et al. for Belgium, Rogler and Schwertmann for Bavaria, Ferro et al. for
//! Sicily, de Santos Loureiro and de Azevedo Coutinho for the Algarve) and
//! can be replaced wholesale through the JSON configuration.
//!
//! Two algebraic forms cover the cited families:
//!
//! * affine: `R = intercept + sum of coef * x^exp` (annual-precipitation
//!   fits, rainfall-over-threshold regressions)
//! * power: `R = a * x^b` (Fournier-index fits)

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::climate::IndicatorRegistry;
use crate::error::{Error, Result};
use crate::raster::Raster;

/// Default relative extension of validity ranges before the guard trips.
pub const DEFAULT_GUARD_MARGIN: f64 = 0.25;
/// Default output plausibility bounds, MJ mm / (ha h yr).
pub const DEFAULT_OUTPUT_BOUNDS: [f64; 2] = [0.0, 10000.0];

/// One additive term of an affine equation.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub indicator: String,
    pub coefficient: f64,
    pub exponent: f64,
}

/// The algebra of an equation.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum EquationForm {
    Affine { intercept: f64, terms: Vec<Term> },
    Power {
        indicator: String,
        scale: f64,
        exponent: f64,
    },
}

impl EquationForm {
    /// Indicator ids the form reads, in first-use order without duplicates.
    pub fn referenced(&self) -> Vec<&str> {
        match self {
            EquationForm::Affine { terms, .. } => {
                let mut ids = Vec::new();
                for t in terms {
                    if !ids.contains(&t.indicator.as_str()) {
                        ids.push(t.indicator.as_str());
                    }
                }
                ids
            }
            EquationForm::Power { indicator, .. } => vec![indicator.as_str()],
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| {
            Error::Configuration(format!("equation {what} must be finite, got {v}"))
        };
        match self {
            EquationForm::Affine { intercept, terms } => {
                if !intercept.is_finite() {
                    return Err(bad("intercept", *intercept));
                }
                for t in terms {
                    if !t.coefficient.is_finite() {
                        return Err(bad("coefficient", t.coefficient));
                    }
                    if !t.exponent.is_finite() {
                        return Err(bad("exponent", t.exponent));
                    }
                    if t.indicator.is_empty() {
                        return Err(Error::Configuration("empty indicator id in term".into()));
                    }
                }
            }
            EquationForm::Power {
                indicator,
                scale,
                exponent,
            } => {
                if !scale.is_finite() {
                    return Err(bad("scale", *scale));
                }
                if !exponent.is_finite() {
                    return Err(bad("exponent", *exponent));
                }
                if indicator.is_empty() {
                    return Err(Error::Configuration("empty indicator id in power form".into()));
                }
            }
        }
        Ok(())
    }

    /// Evaluate at one point, indicator values supplied in [`referenced`]
    /// order.
    ///
    /// [`referenced`]: EquationForm::referenced
    fn eval(&self, values: &[f64]) -> f64 {
        match self {
            EquationForm::Affine { intercept, terms } => {
                let ids = self.referenced();
                let mut r = *intercept;
                for t in terms {
                    let pos = ids.iter().position(|id| *id == t.indicator).unwrap();
                    r += t.coefficient * powi1(values[pos], t.exponent);
                }
                r
            }
            EquationForm::Power {
                scale, exponent, ..
            } => scale * powi1(values[0], *exponent),
        }
    }
}

/// x^e with the exponent-1 case kept bit-exact.
fn powi1(x: f64, e: f64) -> f64 {
    if e == 1.0 {
        x
    } else {
        x.powf(e)
    }
}

/// A regional erosivity equation with its validity metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalEquation {
    id: String,
    region: String,
    form: EquationForm,
    fingerprint: BTreeMap<String, f64>,
    input_ranges: BTreeMap<String, [f64; 2]>,
    output_bounds: [f64; 2],
}

impl EmpiricalEquation {
    /// Build and validate an equation. `input_ranges` must cover exactly
    /// the indicators the form references; the fingerprint is the home
    /// region's full indicator vector.
    pub fn new(
        id: impl Into<String>,
        region: impl Into<String>,
        form: EquationForm,
        fingerprint: BTreeMap<String, f64>,
        input_ranges: BTreeMap<String, [f64; 2]>,
        output_bounds: [f64; 2],
    ) -> Result<Self> {
        let id = id.into();
        form.validate()?;
        let referenced: std::collections::BTreeSet<&str> =
            form.referenced().into_iter().collect();
        let ranged: std::collections::BTreeSet<&str> =
            input_ranges.keys().map(String::as_str).collect();
        if referenced != ranged {
            return Err(Error::Configuration(format!(
                "equation {id:?}: input_ranges keys {ranged:?} must match referenced indicators {referenced:?}"
            )));
        }
        for (ind, [lo, hi]) in &input_ranges {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::Configuration(format!(
                    "equation {id:?}: invalid validity range [{lo}, {hi}] for {ind:?}"
                )));
            }
        }
        let [lo, hi] = output_bounds;
        if !lo.is_finite() || !hi.is_finite() || !(0.0 <= lo && lo < hi) {
            return Err(Error::Configuration(format!(
                "equation {id:?}: output bounds must satisfy 0 <= min < max, got [{lo}, {hi}]"
            )));
        }
        if let Some((ind, v)) = fingerprint.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Configuration(format!(
                "equation {id:?}: fingerprint value for {ind:?} is {v}"
            )));
        }
        Ok(EmpiricalEquation {
            id,
            region: region.into(),
            form,
            fingerprint,
            input_ranges,
            output_bounds,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn region(&self) -> &str {
        &self.region
    }

    pub fn form(&self) -> &EquationForm {
        &self.form
    }

    /// Home-region indicator values, keyed by indicator id.
    pub fn fingerprint(&self) -> &BTreeMap<String, f64> {
        &self.fingerprint
    }

    pub fn input_ranges(&self) -> &BTreeMap<String, [f64; 2]> {
        &self.input_ranges
    }

    pub fn output_bounds(&self) -> [f64; 2] {
        self.output_bounds
    }

    /// Check referential integrity against an indicator registry: every
    /// referenced indicator must exist and the fingerprint must cover the
    /// whole registry (similarity is computed over all indicators).
    pub fn validate_against(&self, registry: &IndicatorRegistry) -> Result<()> {
        for ind in self.form.referenced() {
            if registry.get(ind).is_none() {
                return Err(Error::Configuration(format!(
                    "equation {:?} references unknown indicator {ind:?}",
                    self.id
                )));
            }
        }
        for def in registry.defs() {
            if !self.fingerprint.contains_key(&def.id) {
                return Err(Error::Configuration(format!(
                    "equation {:?} fingerprint is missing indicator {:?}",
                    self.id, def.id
                )));
            }
        }
        if let Some(extra) = self
            .fingerprint
            .keys()
            .find(|k| registry.get(k).is_none())
        {
            return Err(Error::Configuration(format!(
                "equation {:?} fingerprint has unknown indicator {extra:?}",
                self.id
            )));
        }
        Ok(())
    }
}

/// Ordered set of equations with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct EquationSet {
    equations: Vec<EmpiricalEquation>,
}

impl EquationSet {
    pub fn new(equations: Vec<EmpiricalEquation>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for eq in &equations {
            if !seen.insert(eq.id.as_str()) {
                return Err(Error::Configuration(format!(
                    "duplicate equation id {:?}",
                    eq.id
                )));
            }
        }
        Ok(EquationSet { equations })
    }

    pub fn equations(&self) -> &[EmpiricalEquation] {
        &self.equations
    }

    pub fn len(&self) -> usize {
        self.equations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.equations.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&EmpiricalEquation> {
        self.equations.iter().find(|e| e.id == id)
    }
}

/// Evaluate an equation cellwise. Cells where any referenced indicator is
/// nodata are nodata; non-finite results (for example a fractional power of
/// a negative value) are masked rather than propagated.
pub fn evaluate(
    eq: &EmpiricalEquation,
    indicators: &BTreeMap<String, Raster>,
) -> Result<Raster> {
    let inputs = gather_inputs(eq, indicators)?;
    let spec = match inputs.first() {
        Some(r) => *r.spec(),
        // An intercept-only equation has no inputs to take a grid from.
        None => {
            return match &eq.form {
                EquationForm::Affine { intercept, terms } if terms.is_empty() => Err(
                    Error::Configuration(format!(
                        "equation {:?} has no indicator inputs; evaluate it onto a grid by adding a term (intercept {intercept} alone does not define a grid)",
                        eq.id
                    )),
                ),
                _ => unreachable!("non-empty forms always reference an indicator"),
            };
        }
    };
    let ncols = spec.ncols;
    let columns: Vec<&[f64]> = inputs.iter().map(|r| r.values()).collect();
    let mut out = vec![f64::NAN; spec.len()];
    out.par_chunks_mut(ncols)
        .enumerate()
        .for_each(|(row, dst)| {
            let mut point = vec![0.0; columns.len()];
            'cell: for (col, d) in dst.iter_mut().enumerate() {
                let idx = row * ncols + col;
                for (k, column) in columns.iter().enumerate() {
                    let v = column[idx];
                    if v.is_nan() {
                        continue 'cell;
                    }
                    point[k] = v;
                }
                let r = eq.form.eval(&point);
                *d = if r.is_finite() { r } else { f64::NAN };
            }
        });
    Raster::from_values(spec, out)
}

/// Evaluate an intercept-only or general equation at a single point given
/// by indicator values (used for config sanity checks and tests).
pub fn evaluate_at(eq: &EmpiricalEquation, point: &BTreeMap<String, f64>) -> Result<f64> {
    let values: Vec<f64> = eq
        .form
        .referenced()
        .iter()
        .map(|id| {
            point
                .get(*id)
                .copied()
                .ok_or_else(|| Error::Configuration(format!("missing indicator {id:?}")))
        })
        .collect::<Result<_>>()?;
    Ok(eq.form.eval(&values))
}

fn gather_inputs<'a>(
    eq: &EmpiricalEquation,
    indicators: &'a BTreeMap<String, Raster>,
) -> Result<Vec<&'a Raster>> {
    let mut inputs = Vec::new();
    for id in eq.form.referenced() {
        let raster = indicators.get(id).ok_or_else(|| {
            Error::Configuration(format!(
                "equation {:?} needs indicator {id:?}, which was not provided",
                eq.id
            ))
        })?;
        if let Some(first) = inputs.first() {
            let first: &&Raster = first;
            if !raster.spec().same_grid(first.spec()) {
                return Err(Error::AlignmentRequired(format!(
                    "indicator {id:?} is on a different grid"
                )));
            }
        }
        inputs.push(raster);
    }
    Ok(inputs)
}

/// Apply the validity guard: a cell fails when any referenced indicator
/// falls outside its validity range extended by `margin` (relative to each
/// bound's magnitude), or when R falls outside the output bounds.
///
/// Returns the guarded R (failing cells nodata, passing cells bit-identical
/// to the input) and a dense binary mask (1 pass, 0 fail; input-nodata
/// cells are 0).
pub fn guard(
    eq: &EmpiricalEquation,
    r: &Raster,
    indicators: &BTreeMap<String, Raster>,
    margin: f64,
) -> Result<(Raster, Raster)> {
    if margin < 0.0 || !margin.is_finite() {
        return Err(Error::Configuration(format!(
            "guard margin must be finite and >= 0, got {margin}"
        )));
    }
    let inputs = gather_inputs(eq, indicators)?;
    for input in &inputs {
        if !input.spec().same_grid(r.spec()) {
            return Err(Error::AlignmentRequired(
                "indicators and R are on different grids".into(),
            ));
        }
    }
    let ranges: Vec<[f64; 2]> = eq
        .form
        .referenced()
        .iter()
        .map(|id| {
            let [lo, hi] = eq.input_ranges[*id];
            [lo - margin * lo.abs(), hi + margin * hi.abs()]
        })
        .collect();
    let columns: Vec<&[f64]> = inputs.iter().map(|x| x.values()).collect();
    let [r_lo, r_hi] = eq.output_bounds;

    let spec = *r.spec();
    let ncols = spec.ncols;
    let mut guarded = vec![f64::NAN; spec.len()];
    let mut mask = vec![0.0; spec.len()];
    guarded
        .par_chunks_mut(ncols)
        .zip(mask.par_chunks_mut(ncols))
        .enumerate()
        .for_each(|(row, (gdst, mdst))| {
            for col in 0..ncols {
                let idx = row * ncols + col;
                let value = r.values()[idx];
                if value.is_nan() {
                    continue;
                }
                let inputs_ok = columns.iter().zip(&ranges).all(|(column, [lo, hi])| {
                    let v = column[idx];
                    !v.is_nan() && *lo <= v && v <= *hi
                });
                if inputs_ok && r_lo <= value && value <= r_hi {
                    gdst[col] = value;
                    mdst[col] = 1.0;
                }
            }
        });
    Ok((
        Raster::from_values(spec, guarded)?,
        Raster::from_values(spec, mask)?,
    ))
}

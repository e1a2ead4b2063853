//! Run configuration: one JSON document pinning every modeling choice.
//!
//! The schema is strict: unknown keys or wrong types anywhere in the
//! document fail validation before any computation starts. Equations
//! reference named regions; each region block carries the full indicator
//! vector of its reference climatology, so an equation's fingerprint is
//! resolved by region name.

use std::collections::BTreeMap;
use std::path::Path;

use crate::climate::{default_registry, IndicatorDef, IndicatorRegistry};
use crate::ei30::EnergyFormula;
use crate::ensemble::{AggregationMode, RdsVariant};
use crate::equations::{
    EmpiricalEquation, EquationForm, EquationSet, DEFAULT_GUARD_MARGIN, DEFAULT_OUTPUT_BOUNDS,
};
use crate::erosion::{validate_breaks, DEFAULT_CLASS_BREAKS};
use crate::error::{Error, Result};
use crate::factors::CoverTable;
use crate::io::render::RenderOptions;

/// Environment variable naming a default configuration file for the CLI.
pub const CONFIG_ENV_VAR: &str = "RUSLE_CONFIG";

/// The configuration shipped with the crate: 7 equations over 4 regions.
/// Coefficients, validity ranges, and region climatologies are transcribed
/// from the cited regional studies and reference climatologies; they are
/// data, not code, and a run may replace the whole document.
pub const DEFAULT_CONFIG_JSON: &str = include_str!("../../resources/default_config.json");

#[derive(Debug, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    /// Indicator registry override; the built-in 26 when absent.
    #[serde(default)]
    indicators: Option<Vec<IndicatorDef>>,
    regions: BTreeMap<String, BTreeMap<String, f64>>,
    equations: Vec<RawEquation>,
    cover_table: BTreeMap<i64, f64>,
    #[serde(default)]
    rds: RawRds,
    #[serde(default)]
    energy_formula: EnergyFormula,
    #[serde(default)]
    class_breaks: Option<Vec<f64>>,
    #[serde(default)]
    slope_length_m: Option<f64>,
    #[serde(default)]
    render: RenderOptions,
}

#[derive(Debug, Default, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawRds {
    variant: RdsVariant,
    aggregation: AggregationMode,
    guard_margin: Option<f64>,
}

#[derive(Debug, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEquation {
    id: String,
    region: String,
    form: EquationForm,
    input_ranges: BTreeMap<String, [f64; 2]>,
    #[serde(default)]
    output_bounds: Option<[f64; 2]>,
}

/// A fully validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    registry: IndicatorRegistry,
    equations: EquationSet,
    energy_formula: EnergyFormula,
    rds_variant: RdsVariant,
    aggregation: AggregationMode,
    guard_margin: f64,
    cover_table: CoverTable,
    class_breaks: Vec<f64>,
    slope_length_m: Option<f64>,
    render: RenderOptions,
}

impl RunConfig {
    /// Parse and validate a configuration document.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawConfig = serde_json::from_str(text)
            .map_err(|e| Error::Configuration(format!("config schema: {e}")))?;

        let registry = match raw.indicators {
            Some(defs) => IndicatorRegistry::new(defs)?,
            None => default_registry(),
        };

        let ids: Vec<&str> = registry.defs().iter().map(|d| d.id.as_str()).collect();
        for (name, fp) in &raw.regions {
            for id in &ids {
                if !fp.contains_key(*id) {
                    return Err(Error::Configuration(format!(
                        "region {name:?} is missing indicator {id:?}"
                    )));
                }
            }
            for (key, value) in fp {
                if !ids.contains(&key.as_str()) {
                    return Err(Error::Configuration(format!(
                        "region {name:?} has unknown indicator {key:?}"
                    )));
                }
                if !value.is_finite() {
                    return Err(Error::Configuration(format!(
                        "region {name:?} indicator {key:?} is not finite"
                    )));
                }
            }
        }

        let mut equations = Vec::with_capacity(raw.equations.len());
        for eq in raw.equations {
            let fingerprint = raw.regions.get(&eq.region).ok_or_else(|| {
                Error::Configuration(format!(
                    "equation {:?} references unknown region {:?}",
                    eq.id, eq.region
                ))
            })?;
            let built = EmpiricalEquation::new(
                eq.id,
                eq.region,
                eq.form,
                fingerprint.clone(),
                eq.input_ranges,
                eq.output_bounds.unwrap_or(DEFAULT_OUTPUT_BOUNDS),
            )?;
            built.validate_against(&registry)?;
            equations.push(built);
        }
        let equations = EquationSet::new(equations)?;

        let guard_margin = raw.rds.guard_margin.unwrap_or(DEFAULT_GUARD_MARGIN);
        if !guard_margin.is_finite() || guard_margin < 0.0 {
            return Err(Error::Configuration(format!(
                "guard margin must be non-negative, got {guard_margin}"
            )));
        }
        let class_breaks = raw
            .class_breaks
            .unwrap_or_else(|| DEFAULT_CLASS_BREAKS.to_vec());
        validate_breaks(&class_breaks)?;
        if let Some(lambda) = raw.slope_length_m {
            if !lambda.is_finite() || lambda <= 0.0 {
                return Err(Error::Configuration(format!(
                    "slope length must be positive, got {lambda}"
                )));
            }
        }

        Ok(Self {
            registry,
            equations,
            energy_formula: raw.energy_formula,
            rds_variant: raw.rds.variant,
            aggregation: raw.rds.aggregation,
            guard_margin,
            cover_table: CoverTable::new(raw.cover_table)?,
            class_breaks,
            slope_length_m: raw.slope_length_m,
            render: raw.render,
        })
    }

    /// Read and validate a configuration file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Configuration(msg) => {
                Error::Configuration(format!("{}: {msg}", path.display()))
            }
            other => other,
        })
    }

    /// The shipped default configuration.
    pub fn builtin() -> Self {
        Self::from_json(DEFAULT_CONFIG_JSON).expect("shipped config is valid")
    }

    pub fn registry(&self) -> &IndicatorRegistry {
        &self.registry
    }

    pub fn equations(&self) -> &EquationSet {
        &self.equations
    }

    pub fn energy_formula(&self) -> EnergyFormula {
        self.energy_formula
    }

    pub fn rds_variant(&self) -> RdsVariant {
        self.rds_variant
    }

    pub fn aggregation(&self) -> AggregationMode {
        self.aggregation
    }

    pub fn guard_margin(&self) -> f64 {
        self.guard_margin
    }

    pub fn cover_table(&self) -> &CoverTable {
        &self.cover_table
    }

    pub fn class_breaks(&self) -> &[f64] {
        &self.class_breaks
    }

    /// Uniform slope length override; the grid cell size when absent.
    pub fn slope_length_m(&self) -> Option<f64> {
        self.slope_length_m
    }

    pub fn render(&self) -> &RenderOptions {
        &self.render
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equations::evaluate_at;

    #[test]
    fn builtin_config_parses_with_expected_shape() {
        let config = RunConfig::builtin();
        assert_eq!(config.equations().len(), 7);
        assert_eq!(config.registry().len(), 26);
        assert_eq!(config.class_breaks(), &DEFAULT_CLASS_BREAKS);
        assert_eq!(config.guard_margin(), DEFAULT_GUARD_MARGIN);
        assert_eq!(config.energy_formula(), EnergyFormula::BrownFoster);
        assert_eq!(config.aggregation(), AggregationMode::GeometricMean);
        assert!(config.cover_table().len() >= 5);
    }

    /// Every shipped equation, evaluated on its home climatology, must
    /// land inside its own plausibility bounds and validity ranges.
    #[test]
    fn builtin_equations_are_sane_at_their_fingerprints() {
        let config = RunConfig::builtin();
        for eq in config.equations().equations() {
            let r = evaluate_at(eq, eq.fingerprint()).unwrap();
            let [lo, hi] = eq.output_bounds();
            assert!(
                lo <= r && r <= hi,
                "{}: R = {r} outside [{lo}, {hi}]",
                eq.id()
            );
            for (ind, [rlo, rhi]) in eq.input_ranges() {
                let x = eq.fingerprint()[ind];
                assert!(
                    *rlo <= x && x <= *rhi,
                    "{}: fingerprint {ind} = {x} outside validity [{rlo}, {rhi}]",
                    eq.id()
                );
            }
        }
    }

    #[test]
    fn unknown_keys_are_rejected_everywhere() {
        let mut doc: serde_json::Value = serde_json::from_str(DEFAULT_CONFIG_JSON).unwrap();
        doc["surprise"] = serde_json::json!(1);
        assert!(RunConfig::from_json(&doc.to_string()).is_err());

        let mut doc: serde_json::Value = serde_json::from_str(DEFAULT_CONFIG_JSON).unwrap();
        doc["rds"]["surprise"] = serde_json::json!(1);
        assert!(RunConfig::from_json(&doc.to_string()).is_err());

        let mut doc: serde_json::Value = serde_json::from_str(DEFAULT_CONFIG_JSON).unwrap();
        doc["equations"][0]["surprise"] = serde_json::json!(1);
        assert!(RunConfig::from_json(&doc.to_string()).is_err());
    }

    #[test]
    fn missing_section_and_wrong_types_are_rejected() {
        let mut doc: serde_json::Value = serde_json::from_str(DEFAULT_CONFIG_JSON).unwrap();
        doc.as_object_mut().unwrap().remove("equations");
        assert!(RunConfig::from_json(&doc.to_string()).is_err());

        let mut doc: serde_json::Value = serde_json::from_str(DEFAULT_CONFIG_JSON).unwrap();
        doc["class_breaks"] = serde_json::json!("not a list");
        assert!(RunConfig::from_json(&doc.to_string()).is_err());
    }

    #[test]
    fn unknown_region_is_rejected() {
        let mut doc: serde_json::Value = serde_json::from_str(DEFAULT_CONFIG_JSON).unwrap();
        doc["equations"][0]["region"] = serde_json::json!("atlantis");
        let err = RunConfig::from_json(&doc.to_string()).unwrap_err();
        assert!(err.to_string().contains("atlantis"));
    }

    #[test]
    fn incomplete_region_fingerprint_is_rejected() {
        let mut doc: serde_json::Value = serde_json::from_str(DEFAULT_CONFIG_JSON).unwrap();
        doc["regions"]["belgium"]
            .as_object_mut()
            .unwrap()
            .remove("mfi");
        let err = RunConfig::from_json(&doc.to_string()).unwrap_err();
        assert!(err.to_string().contains("mfi"));
    }

    #[test]
    fn bad_class_breaks_and_margin_are_rejected() {
        let mut doc: serde_json::Value = serde_json::from_str(DEFAULT_CONFIG_JSON).unwrap();
        doc["class_breaks"] = serde_json::json!([5.0, 1.0]);
        assert!(RunConfig::from_json(&doc.to_string()).is_err());

        let mut doc: serde_json::Value = serde_json::from_str(DEFAULT_CONFIG_JSON).unwrap();
        doc["rds"]["guard_margin"] = serde_json::json!(-0.1);
        assert!(RunConfig::from_json(&doc.to_string()).is_err());
    }

    #[test]
    fn cover_table_uses_integer_class_keys() {
        let config = RunConfig::builtin();
        assert_eq!(config.cover_table().get(211), Some(0.35));
        assert_eq!(config.cover_table().get(999), None);
    }

    #[test]
    fn load_reports_the_file_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, "{\"bogus\": true}").unwrap();
        let err = RunConfig::load(&path).unwrap_err();
        assert!(err.to_string().contains("cfg.json"));
        assert!(RunConfig::load(&dir.path().join("absent.json")).is_err());
    }
}

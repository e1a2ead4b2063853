//! Stage implementations behind the subcommands. Each stage reads its
//! inputs from disk, writes its outputs atomically, and drops a
//! `<stage>.meta.json` sidecar recording the configuration hash and the
//! decisions in effect, so any output can be traced to its run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use rusle::climate::DailyPrecipStack;
use rusle::ei30::{gauge_erosivity, EnergyFormula};
use rusle::ensemble::{
    aggregate, ensemble_r, normalize_weights, rds, trustability, AggregationMode, RdsVariant,
};
use rusle::equations::{evaluate, guard};
use rusle::erosion::{ErosionMap, RunMetadata};
use rusle::factors::{
    c_factor, k_factor, l_factor, p_factor, s_factor, slope, st_factor, FactorSet, SlopeLength,
    SoilTexture,
};
use rusle::io::config::{RunConfig, CONFIG_ENV_VAR, DEFAULT_CONFIG_JSON};
use rusle::io::render::{render_png, ColorRamp};
use rusle::io::{ascii_grid, atomic_write};
use rusle::raster::Raster;
use rusle::{Error, Result};

/// A validated configuration plus the identity of its source text.
pub struct LoadedConfig {
    pub config: RunConfig,
    pub sha256: String,
    pub source: String,
}

/// Resolution order: --config flag, then RUSLE_CONFIG, then the built-in.
pub fn load_config(flag: Option<&Path>) -> Result<LoadedConfig> {
    let from_path = |p: &Path| -> Result<(String, String)> {
        let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        Ok((text, p.display().to_string()))
    };
    let (text, source) = match flag {
        Some(p) => from_path(p)?,
        None => match std::env::var_os(CONFIG_ENV_VAR) {
            Some(p) => from_path(Path::new(&p))?,
            None => (DEFAULT_CONFIG_JSON.to_string(), "builtin".to_string()),
        },
    };
    let config = RunConfig::from_json(&text).map_err(|e| match e {
        Error::Configuration(msg) if source != "builtin" => {
            Error::Configuration(format!("{source}: {msg}"))
        }
        other => other,
    })?;
    let digest = Sha256::digest(text.as_bytes());
    let mut sha256 = String::with_capacity(64);
    for byte in digest {
        let _ = write!(sha256, "{byte:02x}");
    }
    Ok(LoadedConfig {
        config,
        sha256,
        source,
    })
}

pub fn aggregation_name(mode: AggregationMode) -> &'static str {
    match mode {
        AggregationMode::Mean => "mean",
        AggregationMode::Median => "median",
        AggregationMode::Min => "min",
        AggregationMode::GeometricMean => "geometric_mean",
    }
}

fn rds_name(variant: RdsVariant) -> &'static str {
    match variant {
        RdsVariant::SumScaled => "sum_scaled",
        RdsVariant::MaxScaled => "max_scaled",
    }
}

fn energy_name(formula: EnergyFormula) -> &'static str {
    match formula {
        EnergyFormula::BrownFoster => "brown_foster",
        EnergyFormula::WischmeierSmith => "wischmeier_smith",
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_raster(path: &Path, r: &Raster) -> Result<()> {
    atomic_write(path, ascii_grid::to_string(r).as_bytes())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Configuration(format!("serializing {}: {e}", path.display())))?;
    atomic_write(path, format!("{text}\n").as_bytes())
}

/// The `<stage>.meta.json` sidecar: no timestamps, keys sorted, so a
/// repeated run reproduces it byte for byte.
fn write_meta(
    out_dir: &Path,
    stage: &str,
    cfg: &LoadedConfig,
    inputs: BTreeMap<String, String>,
    parameters: BTreeMap<String, String>,
) -> Result<()> {
    let meta = serde_json::json!({
        "command": stage,
        "version": env!("CARGO_PKG_VERSION"),
        "config_sha256": cfg.sha256,
        "config_source": cfg.source,
        "inputs": inputs,
        "parameters": parameters,
    });
    write_json(&out_dir.join(format!("{stage}.meta.json")), &meta)
}

fn common_parameters(cfg: &LoadedConfig) -> BTreeMap<String, String> {
    BTreeMap::from([
        (
            "aggregation".to_string(),
            aggregation_name(cfg.config.aggregation()).to_string(),
        ),
        (
            "rds_variant".to_string(),
            rds_name(cfg.config.rds_variant()).to_string(),
        ),
        (
            "guard_margin".to_string(),
            cfg.config.guard_margin().to_string(),
        ),
        (
            "energy_formula".to_string(),
            energy_name(cfg.config.energy_formula()).to_string(),
        ),
    ])
}

/// Read a directory of daily fields named `precip_YYYY-MM-DD.asc` (the
/// prefix is optional) into a date-ordered stack.
pub fn read_precip_stack(dir: &Path) -> Result<DailyPrecipStack> {
    let mut entries: Vec<(NaiveDate, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("asc") {
            continue;
        }
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default();
        let date_part = stem.strip_prefix("precip_").unwrap_or(stem);
        let date = NaiveDate::parse_from_str(date_part, "%Y-%m-%d").map_err(|_| {
            Error::InputValidation(format!(
                "cannot read a date from file name {:?}; expected precip_YYYY-MM-DD.asc",
                path.file_name().unwrap_or_default()
            ))
        })?;
        entries.push((date, path));
    }
    if entries.is_empty() {
        return Err(Error::InputValidation(format!(
            "no .asc files in {}",
            dir.display()
        )));
    }
    entries.sort();
    let days: Vec<Raster> = entries
        .par_iter()
        .map(|(_, path)| ascii_grid::read(path))
        .collect::<Result<_>>()?;
    let dates = entries.into_iter().map(|(d, _)| d).collect();
    DailyPrecipStack::new(dates, days)
}

/// `indicators`: one raster per registry entry.
pub fn indicators(precip_dir: &Path, out_dir: &Path, config: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    ensure_dir(out_dir)?;
    let stack = read_precip_stack(precip_dir)?;
    let rasters = cfg.config.registry().compute_all(&stack)?;
    for (def, r) in cfg.config.registry().defs().iter().zip(&rasters) {
        write_raster(&out_dir.join(format!("{}.asc", def.id)), r)?;
    }
    write_meta(
        out_dir,
        "indicators",
        &cfg,
        BTreeMap::from([("precip_dir".to_string(), precip_dir.display().to_string())]),
        BTreeMap::from([(
            "indicator_count".to_string(),
            cfg.config.registry().len().to_string(),
        )]),
    )
}

/// `erosivity-exact`: R from high-frequency gauge records, written as one
/// JSON report covering every gauge.
pub fn erosivity_exact(gauges: &[PathBuf], out: &Path, config: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    let mut reports = Vec::with_capacity(gauges.len());
    for path in gauges {
        let records = rusle::io::gauge::read(path)?;
        let result = gauge_erosivity(&records, cfg.config.energy_formula())?;
        reports.push(serde_json::json!({
            "gauge": path.display().to_string(),
            "records": records.len(),
            "step_minutes": records.first().map(|r| r.step_minutes),
            "result": result,
        }));
    }
    write_json(
        out,
        &serde_json::json!({
            "energy_formula": energy_name(cfg.config.energy_formula()),
            "config_sha256": cfg.sha256,
            "gauges": reports,
        }),
    )
}

/// `erosivity-ensemble`: indicators, per-equation estimates with guards,
/// similarity maps under all four aggregation modes, and the
/// weighted-median ensemble R with its trustability map.
pub fn erosivity_ensemble(precip_dir: &Path, out_dir: &Path, config: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    ensure_dir(out_dir)?;
    let stack = read_precip_stack(precip_dir)?;
    let registry = cfg.config.registry();
    let rasters = registry.compute_all(&stack)?;
    let indicator_map: BTreeMap<String, Raster> = registry
        .defs()
        .iter()
        .map(|d| d.id.clone())
        .zip(rasters)
        .collect();

    let mut guarded_rs = Vec::new();
    let mut masks = Vec::new();
    let mut aggregated = Vec::new();
    for eq in cfg.config.equations().equations() {
        let estimate = evaluate(eq, &indicator_map)?;
        let (guarded, mask) = guard(eq, &estimate, &indicator_map, cfg.config.guard_margin())?;
        write_raster(&out_dir.join(format!("r_{}.asc", eq.id())), &guarded)?;

        let sims: Vec<Raster> = registry
            .defs()
            .iter()
            .map(|def| {
                rds(
                    &indicator_map[&def.id],
                    eq.fingerprint()[&def.id],
                    cfg.config.rds_variant(),
                )
            })
            .collect::<Result<_>>()?;
        let mut configured = None;
        for mode in AggregationMode::ALL {
            let agg = aggregate(&sims, mode)?;
            write_raster(
                &out_dir.join(format!(
                    "similarity_{}_{}.asc",
                    eq.id(),
                    aggregation_name(mode)
                )),
                &agg,
            )?;
            if mode == cfg.config.aggregation() {
                configured = Some(agg);
            }
        }
        aggregated.push(configured.expect("configured mode is one of ALL"));
        guarded_rs.push(guarded);
        masks.push(mask);
    }

    let weights = normalize_weights(&aggregated, &masks)?;
    let r_ens = ensemble_r(&guarded_rs, &weights)?;
    let trust = trustability(&aggregated, &weights)?;
    write_raster(&out_dir.join("r_ensemble.asc"), &r_ens)?;
    write_raster(&out_dir.join("trustability.asc"), &trust)?;

    let mut parameters = common_parameters(&cfg);
    parameters.insert(
        "equations".to_string(),
        cfg.config
            .equations()
            .equations()
            .iter()
            .map(|e| e.id())
            .collect::<Vec<_>>()
            .join(","),
    );
    write_meta(
        out_dir,
        "erosivity-ensemble",
        &cfg,
        BTreeMap::from([("precip_dir".to_string(), precip_dir.display().to_string())]),
        parameters,
    )
}

pub struct FactorInputs {
    pub dem: PathBuf,
    pub clay: PathBuf,
    pub silt: PathBuf,
    pub sand: PathBuf,
    pub landcover: PathBuf,
    pub stoniness: PathBuf,
}

/// `rusle-factors`: slope plus the six non-R factor rasters.
pub fn rusle_factors(
    inputs: &FactorInputs,
    out_dir: &Path,
    slope_length: Option<f64>,
    config: Option<&Path>,
) -> Result<()> {
    let cfg = load_config(config)?;
    ensure_dir(out_dir)?;
    let dem = ascii_grid::read(&inputs.dem)?;
    let named = [
        ("clay", &inputs.clay),
        ("silt", &inputs.silt),
        ("sand", &inputs.sand),
        ("landcover", &inputs.landcover),
        ("stoniness", &inputs.stoniness),
    ];
    let mut read = BTreeMap::new();
    for (name, path) in named {
        let r = ascii_grid::read(path)?;
        if !r.spec().same_grid(dem.spec()) {
            return Err(Error::AlignmentRequired(format!(
                "{name} raster {} is not on the DEM grid",
                path.display()
            )));
        }
        read.insert(name, r);
    }

    let theta = slope(&dem);
    let s = s_factor(&theta);
    let lambda = slope_length
        .or(cfg.config.slope_length_m())
        .unwrap_or(dem.spec().cellsize);
    let l = l_factor(&theta, &SlopeLength::Uniform(lambda))?;
    let tex = SoilTexture::new(
        read.remove("clay").unwrap(),
        read.remove("silt").unwrap(),
        read.remove("sand").unwrap(),
    )?;
    let k = k_factor(&tex);
    let c = c_factor(&read["landcover"], cfg.config.cover_table())?;
    let st = st_factor(&read["stoniness"])?;
    let p = p_factor(*dem.spec());

    for (name, r) in [
        ("slope", &theta),
        ("k", &k),
        ("l", &l),
        ("s", &s),
        ("c", &c),
        ("st", &st),
        ("p", &p),
    ] {
        write_raster(&out_dir.join(format!("{name}.asc")), r)?;
    }

    let lambda_source = if slope_length.is_some() {
        "flag"
    } else if cfg.config.slope_length_m().is_some() {
        "config"
    } else {
        "cell size (default)"
    };
    let mut parameters = common_parameters(&cfg);
    parameters.insert("slope_length_m".to_string(), lambda.to_string());
    parameters.insert("slope_length_source".to_string(), lambda_source.to_string());
    let input_map = BTreeMap::from([
        ("dem".to_string(), inputs.dem.display().to_string()),
        ("clay".to_string(), inputs.clay.display().to_string()),
        ("silt".to_string(), inputs.silt.display().to_string()),
        ("sand".to_string(), inputs.sand.display().to_string()),
        (
            "landcover".to_string(),
            inputs.landcover.display().to_string(),
        ),
        (
            "stoniness".to_string(),
            inputs.stoniness.display().to_string(),
        ),
    ]);
    write_meta(out_dir, "rusle-factors", &cfg, input_map, parameters)
}

/// `compose`: multiply the factor rasters with R and classify.
pub fn compose(
    factors_dir: &Path,
    r_path: &Path,
    out_dir: &Path,
    config: Option<&Path>,
) -> Result<()> {
    let cfg = load_config(config)?;
    ensure_dir(out_dir)?;
    let read_factor = |name: &str| ascii_grid::read(factors_dir.join(format!("{name}.asc")));
    let factors = FactorSet::new(
        read_factor("k")?,
        read_factor("l")?,
        read_factor("s")?,
        read_factor("c")?,
        read_factor("st")?,
        read_factor("p")?,
    )?;
    let r = ascii_grid::read(r_path)?;

    let mut metadata = RunMetadata {
        config_sha256: Some(cfg.sha256.clone()),
        ..RunMetadata::default()
    };
    metadata
        .inputs
        .insert("factors_dir".to_string(), factors_dir.display().to_string());
    metadata
        .inputs
        .insert("r".to_string(), r_path.display().to_string());
    metadata.parameters.insert(
        "class_breaks".to_string(),
        format!("{:?}", cfg.config.class_breaks()),
    );
    metadata.parameters.insert(
        "factor_order".to_string(),
        "R,K,L,S,C,St,P".to_string(),
    );

    let map = ErosionMap::new(&factors, &r, cfg.config.class_breaks(), metadata)?;
    write_raster(&out_dir.join("er.asc"), &map.er)?;
    write_raster(&out_dir.join("classes.asc"), &map.classes)?;
    let meta_value = serde_json::to_value(&map.metadata)
        .map_err(|e| Error::Configuration(format!("serializing metadata: {e}")))?;
    write_json(&out_dir.join("compose.meta.json"), &meta_value)
}

#[derive(Clone, Default)]
pub struct RenderArgs {
    pub ramp: Option<String>,
    pub log_scale: bool,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

fn parse_ramp(name: &str) -> Result<ColorRamp> {
    match name {
        "blue_red" => Ok(ColorRamp::BlueRed),
        "grayscale" => Ok(ColorRamp::Grayscale),
        "heat" => Ok(ColorRamp::Heat),
        other => Err(Error::Configuration(format!(
            "unknown ramp {other:?}; expected blue_red, grayscale, or heat"
        ))),
    }
}

/// `render`: any raster to PNG, flags layered over the config defaults.
pub fn render(
    input: &Path,
    out: &Path,
    args: &RenderArgs,
    config: Option<&Path>,
) -> Result<()> {
    let cfg = load_config(config)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    let r = ascii_grid::read(input)?;
    let mut opts = *cfg.config.render();
    if let Some(name) = &args.ramp {
        opts.ramp = parse_ramp(name)?;
    }
    if args.log_scale {
        opts.log_scale = true;
    }
    if args.min.is_some() {
        opts.min = args.min;
    }
    if args.max.is_some() {
        opts.max = args.max;
    }
    render_png(&r, &opts, out)
}

/// `run-all`: the full pipeline over a dataset directory laid out like the
/// demo (dem/soil/cover/stoniness rasters, `precip/`, optional `gauges/`).
pub fn run_all(input_dir: &Path, out_dir: &Path, config: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    ensure_dir(out_dir)?;
    let precip_dir = input_dir.join("precip");

    indicators(&precip_dir, &out_dir.join("indicators"), config)?;
    erosivity_ensemble(&precip_dir, &out_dir.join("ensemble"), config)?;

    let gauge_dir = input_dir.join("gauges");
    if gauge_dir.is_dir() {
        let mut gauges: Vec<PathBuf> = std::fs::read_dir(&gauge_dir)
            .map_err(|e| Error::io(&gauge_dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("csv"))
            .collect();
        gauges.sort();
        if !gauges.is_empty() {
            erosivity_exact(&gauges, &out_dir.join("gauge_r.json"), config)?;
        }
    }

    let factor_inputs = FactorInputs {
        dem: input_dir.join("dem.asc"),
        clay: input_dir.join("clay.asc"),
        silt: input_dir.join("silt.asc"),
        sand: input_dir.join("sand.asc"),
        landcover: input_dir.join("landcover.asc"),
        stoniness: input_dir.join("stoniness.asc"),
    };
    rusle_factors(&factor_inputs, &out_dir.join("factors"), None, config)?;
    compose(
        &out_dir.join("factors"),
        &out_dir.join("ensemble").join("r_ensemble.asc"),
        &out_dir.join("erosion"),
        config,
    )?;

    let png_dir = out_dir.join("png");
    ensure_dir(&png_dir)?;
    let er_opts = RenderArgs {
        ramp: Some("heat".to_string()),
        log_scale: true,
        min: None,
        max: None,
    };
    render(
        &out_dir.join("erosion").join("er.asc"),
        &png_dir.join("er.png"),
        &er_opts,
        config,
    )?;
    render(
        &out_dir.join("erosion").join("classes.asc"),
        &png_dir.join("classes.png"),
        &RenderArgs {
            ramp: Some("grayscale".to_string()),
            ..RenderArgs::default()
        },
        config,
    )?;
    render(
        &out_dir.join("ensemble").join("r_ensemble.asc"),
        &png_dir.join("r_ensemble.png"),
        &RenderArgs::default(),
        config,
    )?;
    let unit = RenderArgs {
        min: Some(0.0),
        max: Some(1.0),
        ..RenderArgs::default()
    };
    render(
        &out_dir.join("ensemble").join("trustability.asc"),
        &png_dir.join("trustability.png"),
        &unit,
        config,
    )?;
    for eq in cfg.config.equations().equations() {
        let name = format!(
            "similarity_{}_{}",
            eq.id(),
            aggregation_name(cfg.config.aggregation())
        );
        render(
            &out_dir.join("ensemble").join(format!("{name}.asc")),
            &png_dir.join(format!("similarity_{}.png", eq.id())),
            &unit,
            config,
        )?;
    }

    write_meta(
        out_dir,
        "run-all",
        &cfg,
        BTreeMap::from([("input_dir".to_string(), input_dir.display().to_string())]),
        common_parameters(&cfg),
    )
}

//! Seeded synthetic demo dataset: a 50x50 landscape with soil, cover, and
//! stoniness layers, three years of daily precipitation fields, and two
//! high-frequency rain gauges. Everything derives from one ChaCha stream,
//! so a fixed seed reproduces the dataset byte for byte.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use chrono::{Datelike, NaiveDate, NaiveTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rusle::io::{ascii_grid, atomic_write};
use rusle::raster::{GridSpec, Raster};
use rusle::Result;

pub const GRID: usize = 50;
const CELLSIZE_M: f64 = 100.0;
const PRECIP_START: (i32, u32, u32) = (2019, 1, 1);
const PRECIP_END: (i32, u32, u32) = (2021, 12, 31);

pub fn generate(out_dir: &Path, seed: u64) -> Result<()> {
    let precip_dir = out_dir.join("precip");
    let gauge_dir = out_dir.join("gauges");
    for dir in [out_dir, &precip_dir, &gauge_dir] {
        std::fs::create_dir_all(dir).map_err(|e| rusle::Error::io(dir, e))?;
    }
    let spec = GridSpec::new(GRID, GRID, CELLSIZE_M, 0.0, 0.0, -9999.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    write_grid(&out_dir.join("dem.asc"), dem(spec, &mut rng))?;
    let (clay, silt, sand) = texture(spec, &mut rng);
    write_grid(&out_dir.join("clay.asc"), clay)?;
    write_grid(&out_dir.join("silt.asc"), silt)?;
    write_grid(&out_dir.join("sand.asc"), sand)?;
    write_grid(&out_dir.join("landcover.asc"), landcover(spec, &mut rng))?;
    write_grid(&out_dir.join("stoniness.asc"), stoniness(spec, &mut rng))?;

    let start = NaiveDate::from_ymd_opt(PRECIP_START.0, PRECIP_START.1, PRECIP_START.2).unwrap();
    let end = NaiveDate::from_ymd_opt(PRECIP_END.0, PRECIP_END.1, PRECIP_END.2).unwrap();
    let mut date = start;
    while date <= end {
        let field = daily_field(spec, date, &mut rng);
        write_grid(&precip_dir.join(format!("precip_{date}.asc")), field)?;
        date = date.succ_opt().unwrap();
    }

    let gauge_start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
    let gauge_end = NaiveDate::from_ymd_opt(2022, 1, 1).unwrap();
    let a = gauge_series(gauge_start, gauge_end, 15, &mut rng);
    atomic_write(&gauge_dir.join("gauge_a.csv"), a.as_bytes())?;
    let b = gauge_series(gauge_start, gauge_end, 10, &mut rng);
    atomic_write(&gauge_dir.join("gauge_b.csv"), b.as_bytes())?;
    Ok(())
}

fn write_grid(path: &Path, r: Raster) -> Result<()> {
    atomic_write(path, ascii_grid::to_string(&r).as_bytes())
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Rolling hills over a gentle west-east rise; slopes up to ~8 degrees.
fn dem(spec: GridSpec, rng: &mut ChaCha8Rng) -> Raster {
    let values = grid_values(|row, col| {
        let x = col as f64;
        let y = row as f64;
        let hills = 90.0 * (PI * x / 25.0).sin() * (PI * y / 25.0).sin();
        let ridge = 30.0 * (PI * x / 10.0).cos();
        round1(200.0 + 1.2 * x + hills + ridge + rng.random_range(0.0..2.0))
    });
    Raster::from_values(spec, values).expect("finite by construction")
}

/// Clay and silt vary smoothly; sand takes the exact remainder to 100.
fn texture(spec: GridSpec, rng: &mut ChaCha8Rng) -> (Raster, Raster, Raster) {
    let mut clay = Vec::with_capacity(spec.len());
    let mut silt = Vec::with_capacity(spec.len());
    let mut sand = Vec::with_capacity(spec.len());
    for row in 0..GRID {
        for col in 0..GRID {
            let c = round1(
                (18.0 + 8.0 * (row as f64 / 7.0).sin() + rng.random_range(-2.0..2.0))
                    .clamp(5.0, 40.0),
            );
            let s = round1(
                (38.0 + 6.0 * (col as f64 / 9.0).cos() + rng.random_range(-2.0..2.0))
                    .clamp(10.0, 60.0),
            );
            clay.push(c);
            silt.push(s);
            sand.push(round1(100.0 - c - s));
        }
    }
    (
        Raster::from_values(spec, clay).unwrap(),
        Raster::from_values(spec, silt).unwrap(),
        Raster::from_values(spec, sand).unwrap(),
    )
}

/// Cover classes keyed to the terrain: arable and pasture low, forest and
/// shrub on the hills. Codes all exist in the default cover table.
fn landcover(spec: GridSpec, rng: &mut ChaCha8Rng) -> Raster {
    let values = grid_values(|row, col| {
        let x = col as f64;
        let y = row as f64;
        let relief = (PI * x / 25.0).sin() * (PI * y / 25.0).sin() + rng.random_range(-0.2..0.2);
        let code = if relief > 0.55 {
            if rng.random_bool(0.6) {
                311
            } else {
                324
            }
        } else if relief > 0.1 {
            if rng.random_bool(0.5) {
                243
            } else {
                321
            }
        } else if rng.random_bool(0.65) {
            211
        } else {
            231
        };
        code as f64
    });
    Raster::from_values(spec, values).expect("finite by construction")
}

/// Rock-fragment cover percent, with a nodata quarry patch that shows up
/// as a hole in every downstream product.
fn stoniness(spec: GridSpec, rng: &mut ChaCha8Rng) -> Raster {
    let values = grid_values(|row, col| {
        let base = 4.0
            + 22.0 * ((col as f64 / 5.0).sin() * (row as f64 / 11.0).cos()).abs()
            + rng.random_range(0.0..6.0);
        if (5..9).contains(&row) && (40..45).contains(&col) {
            f64::NAN
        } else {
            round1(base.clamp(0.0, 60.0))
        }
    });
    Raster::from_values(spec, values).expect("NaN is nodata")
}

/// One day's precipitation field. Wet days happen grid-wide with a winter
/// peak; depth varies with a north-south moisture gradient and per-cell
/// jitter. Values rounded to 0.1 mm keep the files compact.
fn daily_field(spec: GridSpec, date: NaiveDate, rng: &mut ChaCha8Rng) -> Raster {
    let winterness = seasonal(date);
    let p_wet = 0.12 + 0.36 * winterness;
    if !rng.random_bool(p_wet) {
        return Raster::filled(spec, 0.0);
    }
    let mean_depth = 3.5 + 5.0 * winterness;
    let u: f64 = rng.random_range(1e-9..1.0);
    let amount = (-mean_depth * u.ln()).min(70.0);
    let values = grid_values(|row, col| {
        // Row 0 is north; the north edge is the wet one.
        let gradient = 1.15 - 0.30 * row as f64 / (GRID - 1) as f64;
        let ripple = 1.0 + 0.05 * (col as f64 / 4.0).sin();
        let jitter = rng.random_range(0.85..1.15);
        let depth = round1(amount * gradient * ripple * jitter);
        if depth < 0.1 {
            0.0
        } else {
            depth
        }
    });
    Raster::from_values(spec, values).expect("finite by construction")
}

/// 0 in high summer, 1 at the turn of the year.
fn seasonal(date: NaiveDate) -> f64 {
    let doy = date.ordinal() as f64;
    0.5 + 0.5 * (2.0 * PI * (doy - 20.0) / 365.25).cos()
}

fn grid_values(mut f: impl FnMut(usize, usize) -> f64) -> Vec<f64> {
    let mut values = Vec::with_capacity(GRID * GRID);
    for row in 0..GRID {
        for col in 0..GRID {
            values.push(f(row, col));
        }
    }
    values
}

/// A contiguous fixed-step gauge record: zero depths between storms, storm
/// bursts with random duration and a random split of the storm total.
fn gauge_series(start: NaiveDate, end: NaiveDate, step_minutes: u32, rng: &mut ChaCha8Rng) -> String {
    let slots_per_day = (24 * 60 / step_minutes) as i64;
    let n_slots = (end - start).num_days() * slots_per_day;
    let mut depths = vec![0.0f64; n_slots as usize];
    let mut slot = 0usize;
    while slot < depths.len() {
        let date = start + chrono::Days::new(slot as u64 / slots_per_day as u64);
        let winterness = seasonal(date);
        // Mean dry spell ~110 h in summer, ~60 h in winter; annual depth
        // then sits near the daily fields' 700-900 mm.
        let p_start = step_minutes as f64 / 60.0 / (110.0 - 50.0 * winterness);
        if rng.random_bool(p_start.min(1.0)) {
            let duration = rng.random_range(3..=(360 / step_minutes).max(4));
            let u: f64 = rng.random_range(1e-9..1.0);
            let total = (1.0 + -9.0 * u.ln()).min(60.0);
            let weights: Vec<f64> = (0..duration).map(|_| rng.random_range(0.05..1.0)).collect();
            let wsum: f64 = weights.iter().sum();
            for (k, w) in weights.iter().enumerate() {
                if slot + k < depths.len() {
                    depths[slot + k] = round1(total * w / wsum);
                }
            }
            slot += duration as usize;
            // Intra-storm lull shorter than the separation gap.
            slot += rng.random_range(0..(120 / step_minutes)) as usize;
        } else {
            slot += 1;
        }
    }

    let mut out = String::with_capacity(depths.len() * 28);
    out.push_str("timestamp,depth_mm\n");
    let t0 = start.and_time(NaiveTime::MIN);
    for (k, depth) in depths.iter().enumerate() {
        let t = t0 + chrono::Duration::minutes(k as i64 * step_minutes as i64);
        let _ = writeln!(out, "{},{}", t.format("%Y-%m-%dT%H:%M:%S"), depth);
    }
    out
}

//! The non-R RUSLE factor layers: K from topsoil texture, S and L from
//! elevation, C from land-cover class, St from stoniness, P constant.
//!
//! K uses the geometric-mean-particle-diameter relationship (Renard et al.
//! 1997, SI form), which needs only the three texture fractions. S is
//! Nearing's (1997) single continuous slope function. L is the RUSLE
//! slope-length form with the McCool exponent. St follows the exponential
//! rock-fragment correction of Poesen et al. (1994), clamped so stone
//! cover never amplifies predicted loss.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::raster::{zip_map, GridSpec, Raster};

/// Particle-class diameter midpoints (mm) for the geometric mean.
const DIAMETER_CLAY_MM: f64 = 0.001;
const DIAMETER_SILT_MM: f64 = 0.026;
const DIAMETER_SAND_MM: f64 = 1.025;

/// RUSLE unit-plot length (m); L = 1 at this slope length.
pub const UNIT_PLOT_LENGTH_M: f64 = 22.13;

/// Topsoil texture as three percentage rasters on one grid.
#[derive(Debug, Clone)]
pub struct SoilTexture {
    clay_pct: Raster,
    silt_pct: Raster,
    sand_pct: Raster,
}

impl SoilTexture {
    /// Validates that the three rasters share a grid and that on cells
    /// where all three are valid, each percentage lies in [0, 100] and
    /// they sum to 100 within a unit of rounding slack ([99, 101]).
    pub fn new(clay_pct: Raster, silt_pct: Raster, sand_pct: Raster) -> Result<Self> {
        if !clay_pct.spec().same_grid(silt_pct.spec())
            || !clay_pct.spec().same_grid(sand_pct.spec())
        {
            return Err(Error::AlignmentRequired(
                "texture rasters must share one grid".into(),
            ));
        }
        for ((&c, &si), &sa) in clay_pct
            .values()
            .iter()
            .zip(silt_pct.values())
            .zip(sand_pct.values())
        {
            if c.is_nan() || si.is_nan() || sa.is_nan() {
                continue;
            }
            for p in [c, si, sa] {
                if !(0.0..=100.0).contains(&p) {
                    return Err(Error::InputValidation(format!(
                        "texture percentage {p} outside [0, 100]"
                    )));
                }
            }
            let sum = c + si + sa;
            if !(99.0..=101.0).contains(&sum) {
                return Err(Error::InputValidation(format!(
                    "texture percentages sum to {sum}, expected 100 within rounding"
                )));
            }
        }
        Ok(Self {
            clay_pct,
            silt_pct,
            sand_pct,
        })
    }

    pub fn clay_pct(&self) -> &Raster {
        &self.clay_pct
    }

    pub fn silt_pct(&self) -> &Raster {
        &self.silt_pct
    }

    pub fn sand_pct(&self) -> &Raster {
        &self.sand_pct
    }
}

/// Soil erodibility K (t·ha·h·ha⁻¹·MJ⁻¹·mm⁻¹) from texture.
///
/// Dg = exp(Σ f_i ln m_i) over the three particle classes, then
/// K = 0.0034 + 0.0405·exp(−0.5·((log₁₀Dg + 1.659)/0.7101)²).
/// Nodata wherever any texture band is nodata.
pub fn k_factor(tex: &SoilTexture) -> Raster {
    let spec = *tex.clay_pct.spec();
    let values = tex
        .clay_pct
        .values()
        .iter()
        .zip(tex.silt_pct.values())
        .zip(tex.sand_pct.values())
        .map(|((&c, &si), &sa)| {
            if c.is_nan() || si.is_nan() || sa.is_nan() {
                return f64::NAN;
            }
            let total = c + si + sa;
            let log_dg = (c * DIAMETER_CLAY_MM.ln()
                + si * DIAMETER_SILT_MM.ln()
                + sa * DIAMETER_SAND_MM.ln())
                / total;
            let log10_dg = log_dg / std::f64::consts::LN_10;
            let z = (log10_dg + 1.659) / 0.7101;
            0.0034 + 0.0405 * (-0.5 * z * z).exp()
        })
        .collect();
    Raster::from_values(spec, values).expect("finite by construction")
}

/// Slope angle θ (radians) from a DEM via Horn's 3×3 kernel.
///
/// Boundary cells fall back to one-sided differences over the actual cell
/// span, so an affine surface gets its exact gradient everywhere. A cell
/// is nodata when any referenced neighbor is nodata.
pub fn slope(dem: &Raster) -> Raster {
    let spec = *dem.spec();
    let (nrows, ncols, h) = (spec.nrows, spec.ncols, spec.cellsize);
    let z = dem.values();
    let at = |r: usize, c: usize| z[r * ncols + c];
    let mut out = vec![f64::NAN; spec.len()];
    for row in 0..nrows {
        let rn = row.saturating_sub(1);
        let rs = (row + 1).min(nrows - 1);
        for col in 0..ncols {
            let cw = col.saturating_sub(1);
            let ce = (col + 1).min(ncols - 1);
            // Horn's kernel reads the 8 neighbors; the center still gates
            // the output, since a cell without elevation has no slope.
            let cells = [
                at(rn, cw),
                at(rn, col),
                at(rn, ce),
                at(row, cw),
                at(row, col),
                at(row, ce),
                at(rs, cw),
                at(rs, col),
                at(rs, ce),
            ];
            if cells.iter().any(|v| v.is_nan()) {
                continue;
            }
            let span_x = (ce - cw) as f64 * h;
            let dzdx = if span_x > 0.0 {
                ((at(rn, ce) + 2.0 * at(row, ce) + at(rs, ce))
                    - (at(rn, cw) + 2.0 * at(row, cw) + at(rs, cw)))
                    / (4.0 * span_x)
            } else {
                0.0
            };
            let span_y = (rs - rn) as f64 * h;
            let dzdy = if span_y > 0.0 {
                ((at(rs, cw) + 2.0 * at(rs, col) + at(rs, ce))
                    - (at(rn, cw) + 2.0 * at(rn, col) + at(rn, ce)))
                    / (4.0 * span_y)
            } else {
                0.0
            };
            out[row * ncols + col] = (dzdx * dzdx + dzdy * dzdy).sqrt().atan();
        }
    }
    Raster::from_values(spec, out).expect("finite by construction")
}

/// Slope steepness S = −1.5 + 17/(1 + exp(2.3 − 6.1·sin θ)) (Nearing 1997).
pub fn s_factor(slope_rad: &Raster) -> Raster {
    slope_rad.map(|theta| -1.5 + 17.0 / (1.0 + (2.3 - 6.1 * theta.sin()).exp()))
}

/// Slope length λ: one value for the whole grid or a per-cell raster.
#[derive(Debug, Clone)]
pub enum SlopeLength {
    Uniform(f64),
    PerCell(Raster),
}

/// Slope length L = (λ/22.13)^m with m = β/(1+β) and
/// β = (sinθ/0.0896)/(3·sin^0.8θ + 0.56) (McCool exponent).
///
/// λ must be strictly positive (every valid cell, for the raster form).
pub fn l_factor(slope_rad: &Raster, slope_length_m: &SlopeLength) -> Result<Raster> {
    let l_of = |theta: f64, lambda: f64| -> f64 {
        let sin_t = theta.sin();
        let beta = (sin_t / 0.0896) / (3.0 * sin_t.powf(0.8) + 0.56);
        (lambda / UNIT_PLOT_LENGTH_M).powf(beta / (1.0 + beta))
    };
    match slope_length_m {
        SlopeLength::Uniform(lambda) => {
            if !lambda.is_finite() || *lambda <= 0.0 {
                return Err(Error::Domain(format!(
                    "slope length must be positive, got {lambda}"
                )));
            }
            let lambda = *lambda;
            Ok(slope_rad.map(move |theta| l_of(theta, lambda)))
        }
        SlopeLength::PerCell(lambda) => {
            if let Some(&bad) = lambda
                .values()
                .iter()
                .find(|v| !v.is_nan() && **v <= 0.0)
            {
                return Err(Error::Domain(format!(
                    "slope length must be positive, got {bad}"
                )));
            }
            zip_map(slope_rad, lambda, l_of)
        }
    }
}

/// Land-cover class code → C value table.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "BTreeMap<i64, f64>", into = "BTreeMap<i64, f64>")]
pub struct CoverTable {
    entries: BTreeMap<i64, f64>,
}

impl CoverTable {
    /// All C values must lie in [0, 1].
    pub fn new(entries: BTreeMap<i64, f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Configuration("cover table is empty".into()));
        }
        for (code, c) in &entries {
            if !(0.0..=1.0).contains(c) {
                return Err(Error::Configuration(format!(
                    "cover value {c} for class {code} outside [0, 1]"
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn get(&self, code: i64) -> Option<f64> {
        self.entries.get(&code).copied()
    }

    pub fn codes(&self) -> impl Iterator<Item = i64> + '_ {
        self.entries.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl TryFrom<BTreeMap<i64, f64>> for CoverTable {
    type Error = Error;

    fn try_from(entries: BTreeMap<i64, f64>) -> Result<Self> {
        Self::new(entries)
    }
}

impl From<CoverTable> for BTreeMap<i64, f64> {
    fn from(t: CoverTable) -> Self {
        t.entries
    }
}

/// Cover management C by table lookup. Class codes are the raster values
/// rounded to the nearest integer; any valid cell whose code is absent
/// from the table fails with the full sorted list of offending codes.
pub fn c_factor(landcover: &Raster, table: &CoverTable) -> Result<Raster> {
    let mut unmapped = BTreeSet::new();
    let values: Vec<f64> = landcover
        .values()
        .iter()
        .map(|&v| {
            if v.is_nan() {
                return f64::NAN;
            }
            let code = v.round() as i64;
            match table.get(code) {
                Some(c) => c,
                None => {
                    unmapped.insert(code);
                    f64::NAN
                }
            }
        })
        .collect();
    if !unmapped.is_empty() {
        return Err(Error::UnmappedClass {
            codes: unmapped.into_iter().collect(),
        });
    }
    Raster::from_values(*landcover.spec(), values)
}

/// Stoniness correction St = exp(−0.04·(Rc − 10)), clamped to ≤ 1 so rock
/// cover below 10% never amplifies erosion. Rc is percent cover in
/// [0, 100]; out-of-range cells are an input error.
pub fn st_factor(stoniness_pct: &Raster) -> Result<Raster> {
    if let Some(&bad) = stoniness_pct
        .values()
        .iter()
        .find(|v| !v.is_nan() && !(0.0..=100.0).contains(*v))
    {
        return Err(Error::InputValidation(format!(
            "stoniness percentage {bad} outside [0, 100]"
        )));
    }
    Ok(stoniness_pct.map(|rc| (-0.04 * (rc - 10.0)).exp().min(1.0)))
}

/// Support practice P, constant 1 everywhere (no practice data).
pub fn p_factor(spec: GridSpec) -> Raster {
    Raster::filled(spec, 1.0)
}

/// The six non-R factor rasters, aligned on one grid.
#[derive(Debug, Clone)]
pub struct FactorSet {
    pub k: Raster,
    pub l: Raster,
    pub s: Raster,
    pub c: Raster,
    pub st: Raster,
    pub p: Raster,
}

impl FactorSet {
    /// Checks the six rasters share one grid.
    pub fn new(k: Raster, l: Raster, s: Raster, c: Raster, st: Raster, p: Raster) -> Result<Self> {
        let spec = *k.spec();
        for (name, r) in [("L", &l), ("S", &s), ("C", &c), ("St", &st), ("P", &p)] {
            if !r.spec().same_grid(&spec) {
                return Err(Error::AlignmentRequired(format!(
                    "factor {name} is not on the K grid"
                )));
            }
        }
        Ok(Self { k, l, s, c, st, p })
    }

    pub fn spec(&self) -> &GridSpec {
        self.k.spec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::GridSpec;

    fn spec() -> GridSpec {
        GridSpec::new(2, 2, 1.0, 0.0, 0.0, -9999.0).unwrap()
    }

    fn uniform(v: f64) -> Raster {
        Raster::filled(spec(), v)
    }

    fn texture(clay: f64, silt: f64, sand: f64) -> SoilTexture {
        SoilTexture::new(uniform(clay), uniform(silt), uniform(sand)).unwrap()
    }

    #[test]
    fn texture_validation() {
        assert!(SoilTexture::new(uniform(20.0), uniform(40.0), uniform(40.0)).is_ok());
        // Rounding slack: 99 and 101 pass, beyond fails.
        assert!(SoilTexture::new(uniform(19.0), uniform(40.0), uniform(40.0)).is_ok());
        assert!(SoilTexture::new(uniform(21.0), uniform(40.0), uniform(40.0)).is_ok());
        assert!(SoilTexture::new(uniform(10.0), uniform(40.0), uniform(40.0)).is_err());
        assert!(SoilTexture::new(uniform(-1.0), uniform(60.0), uniform(41.0)).is_err());
        // Nodata cells are exempt from the sum check.
        let holey = Raster::from_values(spec(), vec![20.0, f64::NAN, 20.0, 20.0]).unwrap();
        assert!(SoilTexture::new(holey, uniform(40.0), uniform(40.0)).is_ok());
    }

    #[test]
    fn k_pure_sand_matches_direct_evaluation() {
        let k = k_factor(&texture(0.0, 0.0, 100.0));
        // Dg = 1.025 mm put through the closed form.
        assert!((k.get(0, 0).unwrap() - 0.00595174760629217).abs() < 1e-15);
    }

    #[test]
    fn k_peaks_for_silty_textures() {
        let k_sand = k_factor(&texture(0.0, 0.0, 100.0)).get(0, 0).unwrap();
        let k_silt = k_factor(&texture(0.0, 100.0, 0.0)).get(0, 0).unwrap();
        let k_clay = k_factor(&texture(100.0, 0.0, 0.0)).get(0, 0).unwrap();
        assert!((k_silt - 0.043680841237613496).abs() < 1e-15);
        assert!((k_clay - 0.01020834644059762).abs() < 1e-15);
        assert!(k_silt > k_sand);
        assert!(k_silt > k_clay);
    }

    #[test]
    fn k_is_a_pure_per_cell_function() {
        let k = k_factor(&texture(20.0, 40.0, 40.0));
        let v = k.get(0, 0).unwrap();
        assert!((v - 0.03713621529988257).abs() < 1e-15);
        assert!(k.values().iter().all(|&x| x == v));
    }

    #[test]
    fn k_propagates_nodata() {
        let clay = Raster::from_values(spec(), vec![20.0, f64::NAN, 20.0, 20.0]).unwrap();
        let tex = SoilTexture::new(clay, uniform(40.0), uniform(40.0)).unwrap();
        let k = k_factor(&tex);
        assert_eq!(k.get(0, 1), None);
        assert!(k.get(0, 0).is_some());
    }

    fn ramp(nrows: usize, ncols: usize, dzdx: f64, dzdy: f64) -> Raster {
        // Row 0 is north: y decreases with row index.
        let spec = GridSpec::new(ncols, nrows, 1.0, 0.0, 0.0, -9999.0).unwrap();
        let values = (0..nrows * ncols)
            .map(|i| {
                let (row, col) = (i / ncols, i % ncols);
                let y = (nrows - 1 - row) as f64;
                dzdx * col as f64 + dzdy * y
            })
            .collect();
        Raster::from_values(spec, values).unwrap()
    }

    #[test]
    fn slope_of_constant_dem_is_zero() {
        let theta = slope(&Raster::filled(spec(), 42.0));
        assert!(theta.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn slope_of_planar_ramp_is_exact() {
        let expected = 0.1_f64.atan();
        let theta = slope(&ramp(6, 7, 0.1, 0.0));
        for &v in theta.values() {
            assert!((v - expected).abs() < 1e-12, "{v} vs {expected}");
        }
    }

    #[test]
    fn slope_is_isotropic_for_axis_aligned_ramps() {
        let tx = slope(&ramp(5, 5, 0.1, 0.0));
        let ty = slope(&ramp(5, 5, 0.0, 0.1));
        for (a, b) in tx.values().iter().zip(ty.values()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn slope_nodata_neighborhood_poisons_cell() {
        let mut values = vec![0.0; 25];
        values[12] = f64::NAN;
        let dem =
            Raster::from_values(GridSpec::new(5, 5, 1.0, 0.0, 0.0, -9999.0).unwrap(), values)
                .unwrap();
        let theta = slope(&dem);
        // Center and its 8 neighbors all reference the NaN cell.
        for row in 1..4 {
            for col in 1..4 {
                assert_eq!(theta.get(row, col), None);
            }
        }
        assert!(theta.get(0, 0).is_some());
    }

    #[test]
    fn s_factor_examples() {
        let s0 = s_factor(&uniform(0.0)).get(0, 0).unwrap();
        assert!((s0 - 0.04909033725255463).abs() < 1e-15);
        let s_steep = s_factor(&uniform(std::f64::consts::FRAC_PI_2))
            .get(0, 0)
            .unwrap();
        assert!((s_steep - 15.128018394085782).abs() < 1e-12);
        assert!(s_steep < 15.14);
    }

    #[test]
    fn s_factor_strictly_increasing() {
        let n = 10_000;
        let mut prev = f64::NEG_INFINITY;
        for i in 0..n {
            let theta = (i as f64 / n as f64) * (std::f64::consts::FRAC_PI_2 - 1e-9);
            let s = s_factor(&uniform(theta)).get(0, 0).unwrap();
            assert!(s > prev, "not increasing at θ = {theta}");
            prev = s;
        }
    }

    #[test]
    fn l_factor_unit_plot_and_flat() {
        let theta = uniform(0.3);
        let l = l_factor(&theta, &SlopeLength::Uniform(UNIT_PLOT_LENGTH_M)).unwrap();
        assert_eq!(l.get(0, 0), Some(1.0));
        let l = l_factor(&uniform(0.0), &SlopeLength::Uniform(500.0)).unwrap();
        assert_eq!(l.get(0, 0), Some(1.0));
    }

    #[test]
    fn l_factor_doubled_plot_example() {
        let theta = uniform(0.0896_f64.asin());
        let l = l_factor(&theta, &SlopeLength::Uniform(2.0 * UNIT_PLOT_LENGTH_M)).unwrap();
        assert!((l.get(0, 0).unwrap() - 1.4153243353310547).abs() < 1e-12);
    }

    #[test]
    fn l_factor_increasing_in_length_for_positive_slope() {
        let theta = uniform(0.2);
        let mut prev = 0.0;
        for lambda in [10.0, 22.13, 50.0, 100.0, 400.0] {
            let l = l_factor(&theta, &SlopeLength::Uniform(lambda))
                .unwrap()
                .get(0, 0)
                .unwrap();
            assert!(l > prev);
            prev = l;
        }
    }

    #[test]
    fn l_factor_rejects_non_positive_length() {
        let theta = uniform(0.1);
        assert!(l_factor(&theta, &SlopeLength::Uniform(0.0)).is_err());
        assert!(l_factor(&theta, &SlopeLength::Uniform(-3.0)).is_err());
        let bad = Raster::from_values(spec(), vec![50.0, 0.0, 50.0, 50.0]).unwrap();
        assert!(l_factor(&theta, &SlopeLength::PerCell(bad)).is_err());
    }

    #[test]
    fn l_factor_per_cell_lengths() {
        let theta = uniform(0.0896_f64.asin());
        let lambdas =
            Raster::from_values(spec(), vec![UNIT_PLOT_LENGTH_M, 44.26, f64::NAN, 22.13])
                .unwrap();
        let l = l_factor(&theta, &SlopeLength::PerCell(lambdas)).unwrap();
        assert_eq!(l.get(0, 0), Some(1.0));
        assert!((l.get(0, 1).unwrap() - 1.4153243353310547).abs() < 1e-12);
        assert_eq!(l.get(1, 0), None);
    }

    #[test]
    fn c_factor_lookup_and_unmapped() {
        let table = CoverTable::new(BTreeMap::from([(42, 0.0), (23, 0.35)])).unwrap();
        let lc = Raster::from_values(spec(), vec![42.0, 23.0, 42.0, f64::NAN]).unwrap();
        let c = c_factor(&lc, &table).unwrap();
        assert_eq!(c.get(0, 0), Some(0.0));
        assert_eq!(c.get(0, 1), Some(0.35));
        assert_eq!(c.get(1, 1), None);

        let lc = Raster::from_values(spec(), vec![42.0, 7.0, 9.0, 7.0]).unwrap();
        match c_factor(&lc, &table) {
            Err(Error::UnmappedClass { codes }) => assert_eq!(codes, vec![7, 9]),
            other => panic!("expected unmapped-class error, got {other:?}"),
        }
    }

    #[test]
    fn cover_table_validates_range() {
        assert!(CoverTable::new(BTreeMap::from([(1, 1.5)])).is_err());
        assert!(CoverTable::new(BTreeMap::from([(1, -0.1)])).is_err());
        assert!(CoverTable::new(BTreeMap::new()).is_err());
    }

    #[test]
    fn st_factor_examples() {
        assert_eq!(st_factor(&uniform(10.0)).unwrap().get(0, 0), Some(1.0));
        // Below the pivot the clamp holds St at 1.
        assert_eq!(st_factor(&uniform(0.0)).unwrap().get(0, 0), Some(1.0));
        let st35 = st_factor(&uniform(35.0)).unwrap().get(0, 0).unwrap();
        assert!((st35 - (-1.0_f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn st_factor_strictly_decreasing_above_pivot() {
        let n = 10_000;
        let mut prev = f64::INFINITY;
        for i in 0..=n {
            let rc = 10.0 + 90.0 * i as f64 / n as f64;
            let st = st_factor(&uniform(rc)).unwrap().get(0, 0).unwrap();
            if i > 0 {
                assert!(st < prev, "not decreasing at Rc = {rc}");
            }
            prev = st;
        }
    }

    #[test]
    fn st_factor_rejects_out_of_range() {
        assert!(st_factor(&uniform(-0.5)).is_err());
        assert!(st_factor(&uniform(101.0)).is_err());
    }

    #[test]
    fn p_factor_is_all_ones() {
        let p = p_factor(spec());
        assert!(p.values().iter().all(|&v| v == 1.0));
    }

    /// Masking commutes with the pure per-cell factors.
    #[test]
    fn factors_commute_with_masking() {
        let mask = Raster::from_values(spec(), vec![1.0, f64::NAN, 1.0, f64::NAN]).unwrap();
        let rc = Raster::from_values(spec(), vec![5.0, 20.0, 35.0, 80.0]).unwrap();
        let a = st_factor(&rc).unwrap().masked_by(&mask).unwrap();
        let b = st_factor(&rc.masked_by(&mask).unwrap()).unwrap();
        let bits = |r: &Raster| r.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));

        let theta = Raster::from_values(spec(), vec![0.0, 0.1, 0.2, 0.4]).unwrap();
        let a = s_factor(&theta).masked_by(&mask).unwrap();
        let b = s_factor(&theta.masked_by(&mask).unwrap());
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn factor_set_requires_one_grid() {
        let other = GridSpec::new(3, 3, 1.0, 0.0, 0.0, -9999.0).unwrap();
        let err = FactorSet::new(
            uniform(0.03),
            uniform(1.0),
            uniform(1.0),
            Raster::filled(other, 0.2),
            uniform(1.0),
            uniform(1.0),
        );
        assert!(matches!(err, Err(Error::AlignmentRequired(_))));
    }
}

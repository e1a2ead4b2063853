//! Factor composition into the soil-loss map and sensitivity classes.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::factors::FactorSet;
use crate::raster::{zip_map, Raster};

/// Default sensitivity class breaks (t·ha⁻¹·yr⁻¹), eight classes.
pub const DEFAULT_CLASS_BREAKS: [f64; 7] = [0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0];

/// Descriptor stored beside every composed map: where each input came
/// from and which parameters shaped the run.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunMetadata {
    /// Input name → provenance (path, period, or a short description).
    pub inputs: BTreeMap<String, String>,
    /// Parameter name → value as text (slope length, energy formula, ...).
    pub parameters: BTreeMap<String, String>,
    /// Hash of the run configuration, when one was used.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub config_sha256: Option<String>,
}

/// Soil loss, its classification, and the run descriptor.
#[derive(Debug, Clone)]
pub struct ErosionMap {
    pub er: Raster,
    pub classes: Raster,
    pub metadata: RunMetadata,
}

impl ErosionMap {
    pub fn new(
        factors: &FactorSet,
        r: &Raster,
        breaks: &[f64],
        metadata: RunMetadata,
    ) -> Result<Self> {
        let er = compose(factors, r)?;
        let classes = classify(&er, breaks)?;
        Ok(Self {
            er,
            classes,
            metadata,
        })
    }
}

/// Er = R·K·L·S·C·St·P, multiplied in that fixed left-to-right order so
/// the result is bitwise reproducible. Nodata wherever any input is.
pub fn compose(factors: &FactorSet, r: &Raster) -> Result<Raster> {
    if !r.spec().same_grid(factors.spec()) {
        return Err(Error::AlignmentRequired(
            "R is not on the factor grid".into(),
        ));
    }
    let mut er = zip_map(r, &factors.k, |a, b| a * b)?;
    for factor in [&factors.l, &factors.s, &factors.c, &factors.st, &factors.p] {
        er = zip_map(&er, factor, |a, b| a * b)?;
    }
    Ok(er)
}

/// Class breaks must be finite, strictly ascending, and non-empty.
pub fn validate_breaks(breaks: &[f64]) -> Result<()> {
    if breaks.is_empty() {
        return Err(Error::Configuration("need at least one class break".into()));
    }
    if breaks.iter().any(|b| !b.is_finite()) {
        return Err(Error::Configuration("class breaks must be finite".into()));
    }
    if breaks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Configuration(format!(
            "class breaks must be strictly ascending, got {breaks:?}"
        )));
    }
    Ok(())
}

/// Sensitivity class per cell: class k for er in [break_{k-1}, break_k),
/// so len(breaks)+1 classes with class 0 below the first break.
pub fn classify(er: &Raster, breaks: &[f64]) -> Result<Raster> {
    validate_breaks(breaks)?;
    let breaks = breaks.to_vec();
    Ok(er.map(move |v| breaks.iter().take_while(|&&b| v >= b).count() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factors::FactorSet;
    use crate::raster::GridSpec;

    fn spec() -> GridSpec {
        GridSpec::new(2, 2, 1.0, 0.0, 0.0, -9999.0).unwrap()
    }

    fn uniform(v: f64) -> Raster {
        Raster::filled(spec(), v)
    }

    fn unit_factors() -> FactorSet {
        FactorSet::new(
            uniform(1.0),
            uniform(1.0),
            uniform(1.0),
            uniform(1.0),
            uniform(1.0),
            uniform(1.0),
        )
        .unwrap()
    }

    #[test]
    fn compose_product_example() {
        let mut f = unit_factors();
        f.k = uniform(0.03);
        let er = compose(&f, &uniform(100.0)).unwrap();
        assert!((er.get(0, 0).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn compose_zero_cover_annihilates() {
        let mut f = unit_factors();
        f.k = uniform(0.05);
        f.c = uniform(0.0);
        f.st = uniform(0.4);
        let er = compose(&f, &uniform(800.0)).unwrap();
        assert_eq!(er.get(0, 0), Some(0.0));
    }

    #[test]
    fn compose_is_linear_in_r() {
        let mut f = unit_factors();
        f.k = uniform(0.031);
        f.s = uniform(2.7);
        f.st = uniform(0.8);
        let base = compose(&f, &uniform(417.3)).unwrap();
        let doubled = compose(&f, &uniform(2.0 * 417.3)).unwrap();
        for (a, b) in base.values().iter().zip(doubled.values()) {
            // Scaling by 2 is exact, so linearity holds bitwise.
            assert_eq!((2.0 * a).to_bits(), b.to_bits());
        }
    }

    #[test]
    fn compose_matches_manual_canonical_product() {
        let f = FactorSet::new(
            uniform(0.042),
            uniform(1.3),
            uniform(2.11),
            uniform(0.29),
            uniform(0.77),
            uniform(1.0),
        )
        .unwrap();
        let r = uniform(613.0);
        let er = compose(&f, &r).unwrap();
        let manual = ((((613.0_f64 * 0.042) * 1.3) * 2.11) * 0.29) * 0.77 * 1.0;
        assert_eq!(er.get(0, 0).unwrap().to_bits(), manual.to_bits());
    }

    #[test]
    fn compose_p_of_ones_is_identity() {
        let mut f = unit_factors();
        f.k = uniform(0.02);
        f.l = uniform(1.4);
        let with_p = compose(&f, &uniform(500.0)).unwrap();
        let manual = Raster::filled(spec(), ((((500.0_f64 * 0.02) * 1.4) * 1.0) * 1.0) * 1.0);
        for (a, b) in with_p.values().iter().zip(manual.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn compose_mask_is_intersection() {
        let mut f = unit_factors();
        f.c = Raster::from_values(spec(), vec![0.2, f64::NAN, 0.2, 0.2]).unwrap();
        f.st = Raster::from_values(spec(), vec![1.0, 1.0, f64::NAN, 1.0]).unwrap();
        let r = Raster::from_values(spec(), vec![100.0, 100.0, 100.0, f64::NAN]).unwrap();
        let er = compose(&f, &r).unwrap();
        assert!(er.get(0, 0).is_some());
        assert_eq!(er.get(0, 1), None);
        assert_eq!(er.get(1, 0), None);
        assert_eq!(er.get(1, 1), None);
    }

    #[test]
    fn compose_rejects_misaligned_r() {
        let other = GridSpec::new(3, 2, 1.0, 0.0, 0.0, -9999.0).unwrap();
        let err = compose(&unit_factors(), &Raster::filled(other, 1.0));
        assert!(matches!(err, Err(Error::AlignmentRequired(_))));
    }

    #[test]
    fn classify_interval_examples() {
        let breaks = [1.0, 5.0, 10.0];
        let er = Raster::from_values(spec(), vec![0.5, 7.0, 10.0, f64::NAN]).unwrap();
        let classes = classify(&er, &breaks).unwrap();
        assert_eq!(classes.get(0, 0), Some(0.0));
        assert_eq!(classes.get(0, 1), Some(2.0));
        // Boundary value lands in the upper class: [break, next).
        assert_eq!(classes.get(1, 0), Some(3.0));
        assert_eq!(classes.get(1, 1), None);
    }

    #[test]
    fn classify_single_break_is_binary() {
        let er = Raster::from_values(spec(), vec![0.0, 1.9, 2.0, 55.5]).unwrap();
        let classes = classify(&er, &[2.0]).unwrap();
        assert_eq!(
            classes.values(),
            &[0.0, 0.0, 1.0, 1.0]
        );
    }

    #[test]
    fn classify_is_monotone() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let breaks = DEFAULT_CLASS_BREAKS;
        for _ in 0..500 {
            let a: f64 = rng.random_range(0.0..100.0);
            let b: f64 = rng.random_range(0.0..100.0);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let er = Raster::from_values(spec(), vec![lo, hi, 0.0, 0.0]).unwrap();
            let classes = classify(&er, &breaks).unwrap();
            assert!(classes.get(0, 0) <= classes.get(0, 1));
        }
    }

    #[test]
    fn classify_rejects_bad_breaks() {
        let er = uniform(1.0);
        assert!(classify(&er, &[]).is_err());
        assert!(classify(&er, &[1.0, 1.0]).is_err());
        assert!(classify(&er, &[5.0, 2.0]).is_err());
        assert!(classify(&er, &[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn erosion_map_bundles_classes_and_metadata() {
        let mut f = unit_factors();
        f.k = uniform(0.03);
        let mut metadata = RunMetadata::default();
        metadata
            .inputs
            .insert("r".into(), "ensemble 1981-2010".into());
        let map = ErosionMap::new(&f, &uniform(100.0), &DEFAULT_CLASS_BREAKS, metadata.clone())
            .unwrap();
        // er = 3 falls in [2, 5) → class 3 of the default breaks.
        assert_eq!(map.classes.get(0, 0), Some(3.0));
        assert_eq!(map.metadata, metadata);
        // Classes valid exactly where er is valid.
        assert_eq!(map.er.valid_count(), map.classes.valid_count());
    }

    #[test]
    fn run_metadata_round_trips_through_json() {
        let mut m = RunMetadata::default();
        m.inputs.insert("dem".into(), "dem.asc".into());
        m.parameters.insert("slope_length_m".into(), "50".into());
        m.config_sha256 = Some("ab12".into());
        let text = serde_json::to_string(&m).unwrap();
        let back: RunMetadata = serde_json::from_str(&text).unwrap();
        assert_eq!(m, back);
    }
}

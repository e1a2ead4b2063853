//! PNG rendering of result rasters with named color ramps.
//!
//! Similarity maps follow the red = similar, blue = dissimilar convention:
//! under the blue-red ramp the ramp position 1 is pure red and 0 pure
//! blue. Nodata cells are fully transparent, and every image gets a text
//! legend sidecar recording the value-to-color mapping.

use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::atomic_write;
use crate::raster::Raster;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorRamp {
    /// 0 → blue, 1 → red, linear blend between.
    #[default]
    BlueRed,
    /// 0 → black, 1 → white.
    Grayscale,
    /// Black → red → yellow → white.
    Heat,
}

impl ColorRamp {
    /// Color at ramp position t ∈ [0, 1].
    pub fn color(self, t: f64) -> [u8; 3] {
        let t = t.clamp(0.0, 1.0);
        let channel = |x: f64| (x.clamp(0.0, 1.0) * 255.0).round() as u8;
        match self {
            ColorRamp::BlueRed => [channel(t), 0, channel(1.0 - t)],
            ColorRamp::Grayscale => {
                let g = channel(t);
                [g, g, g]
            }
            ColorRamp::Heat => {
                [channel(3.0 * t), channel(3.0 * t - 1.0), channel(3.0 * t - 2.0)]
            }
        }
    }

    fn name(self) -> &'static str {
        match self {
            ColorRamp::BlueRed => "blue_red",
            ColorRamp::Grayscale => "grayscale",
            ColorRamp::Heat => "heat",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderOptions {
    pub ramp: ColorRamp,
    /// Compress the upper tail: ramp position from log1p of the offset
    /// above the minimum. Keeps zero-valued cells renderable.
    pub log_scale: bool,
    /// Mapping bounds; data range when absent.
    pub min: Option<f64>,
    pub max: Option<f64>,
}

/// Render to an 8-bit RGBA PNG at `out_path`, nodata transparent, plus a
/// legend sidecar at the same path with extension `legend.txt`. The value
/// range maps linearly (or log1p-scaled) onto the ramp; a degenerate
/// range renders at mid-ramp.
pub fn render_png(r: &Raster, opts: &RenderOptions, out_path: &Path) -> Result<()> {
    let (lo, hi) = match (opts.min, opts.max) {
        (Some(lo), Some(hi)) => (lo, hi),
        _ => {
            let (dlo, dhi) = r
                .value_range()
                .ok_or_else(|| Error::Render("no valid cells to render".into()))?;
            (opts.min.unwrap_or(dlo), opts.max.unwrap_or(dhi))
        }
    };
    if !lo.is_finite() || !hi.is_finite() || lo > hi {
        return Err(Error::Render(format!(
            "render bounds [{lo}, {hi}] must be finite and ordered"
        )));
    }
    if r.valid_count() == 0 {
        return Err(Error::Render("no valid cells to render".into()));
    }

    let position = |v: f64| -> f64 {
        if hi == lo {
            return 0.5;
        }
        if opts.log_scale {
            let span = (hi - lo).ln_1p();
            ((v - lo).max(0.0).ln_1p() / span).clamp(0.0, 1.0)
        } else {
            ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
        }
    };

    let spec = r.spec();
    let mut pixels = Vec::with_capacity(spec.len() * 4);
    for &v in r.values() {
        if v.is_nan() {
            pixels.extend_from_slice(&[0, 0, 0, 0]);
        } else {
            let [red, green, blue] = opts.ramp.color(position(v));
            pixels.extend_from_slice(&[red, green, blue, 255]);
        }
    }

    let mut encoded = Vec::new();
    {
        let mut encoder = png::Encoder::new(
            Cursor::new(&mut encoded),
            spec.ncols as u32,
            spec.nrows as u32,
        );
        encoder.set_color(png::ColorType::Rgba);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder
            .write_header()
            .map_err(|e| Error::Render(e.to_string()))?;
        writer
            .write_image_data(&pixels)
            .map_err(|e| Error::Render(e.to_string()))?;
        writer.finish().map_err(|e| Error::Render(e.to_string()))?;
    }
    atomic_write(out_path, &encoded)?;

    let mut legend = String::new();
    legend.push_str(&format!("ramp: {}\n", opts.ramp.name()));
    legend.push_str(&format!("scale: {}\n", if opts.log_scale { "log1p" } else { "linear" }));
    legend.push_str(&format!("min: {lo}\nmax: {hi}\nnodata: transparent\n"));
    for step in 0..=4 {
        let t = step as f64 / 4.0;
        let v = if hi == lo { lo } else { invert_position(t, lo, hi, opts.log_scale) };
        let [red, green, blue] = opts.ramp.color(t);
        legend.push_str(&format!("{v} -> #{red:02x}{green:02x}{blue:02x}\n"));
    }
    atomic_write(&out_path.with_extension("legend.txt"), legend.as_bytes())
}

/// Value whose ramp position is t, for legend labeling.
fn invert_position(t: f64, lo: f64, hi: f64, log_scale: bool) -> f64 {
    if log_scale {
        lo + (t * (hi - lo).ln_1p()).exp_m1()
    } else {
        lo + t * (hi - lo)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::GridSpec;

    fn spec() -> GridSpec {
        GridSpec::new(2, 2, 1.0, 0.0, 0.0, -9999.0).unwrap()
    }

    fn decode(path: &Path) -> (u32, u32, Vec<u8>) {
        let decoder =
            png::Decoder::new(std::io::BufReader::new(std::fs::File::open(path).unwrap()));
        let mut reader = decoder.read_info().unwrap();
        let mut buf = vec![0; reader.output_buffer_size().unwrap()];
        let info = reader.next_frame(&mut buf).unwrap();
        buf.truncate(info.buffer_size());
        (info.width, info.height, buf)
    }

    #[test]
    fn blue_red_endpoints() {
        assert_eq!(ColorRamp::BlueRed.color(1.0), [255, 0, 0]);
        assert_eq!(ColorRamp::BlueRed.color(0.0), [0, 0, 255]);
        assert_eq!(ColorRamp::Grayscale.color(0.0), [0, 0, 0]);
        assert_eq!(ColorRamp::Grayscale.color(1.0), [255, 255, 255]);
        assert_eq!(ColorRamp::Heat.color(0.0), [0, 0, 0]);
        assert_eq!(ColorRamp::Heat.color(1.0), [255, 255, 255]);
    }

    #[test]
    fn renders_similarity_convention() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sim.png");
        let r = Raster::from_values(spec(), vec![1.0, 0.0, 0.5, f64::NAN]).unwrap();
        let opts = RenderOptions {
            min: Some(0.0),
            max: Some(1.0),
            ..RenderOptions::default()
        };
        render_png(&r, &opts, &path).unwrap();
        let (w, h, px) = decode(&path);
        assert_eq!((w, h), (2, 2));
        assert_eq!(&px[0..4], &[255, 0, 0, 255], "value 1 is pure red");
        assert_eq!(&px[4..8], &[0, 0, 255, 255], "value 0 is pure blue");
        assert_eq!(px[15], 0, "nodata is transparent");
        let legend = std::fs::read_to_string(dir.path().join("sim.legend.txt")).unwrap();
        assert!(legend.contains("ramp: blue_red"));
        assert!(legend.contains("min: 0"));
        assert!(legend.contains("max: 1"));
    }

    #[test]
    fn constant_raster_renders_single_color() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.png");
        let r = Raster::filled(spec(), 7.0);
        render_png(&r, &RenderOptions::default(), &path).unwrap();
        let (_, _, px) = decode(&path);
        let first: [u8; 4] = px[0..4].try_into().unwrap();
        assert!(px.chunks(4).all(|p| p == first));
        // Degenerate range sits mid-ramp.
        assert_eq!(first, [128, 0, 128, 255]);
    }

    #[test]
    fn all_nodata_is_a_render_error() {
        let dir = tempfile::tempdir().unwrap();
        let r = Raster::from_values(spec(), vec![f64::NAN; 4]).unwrap();
        let err = render_png(&r, &RenderOptions::default(), &dir.path().join("x.png"));
        assert!(matches!(err, Err(Error::Render(_))));
    }

    #[test]
    fn log_scale_is_monotone_and_keeps_endpoints() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.png");
        let r = Raster::from_values(spec(), vec![0.0, 1.0, 10.0, 100.0]).unwrap();
        let opts = RenderOptions {
            ramp: ColorRamp::Grayscale,
            log_scale: true,
            min: Some(0.0),
            max: Some(100.0),
        };
        render_png(&r, &opts, &path).unwrap();
        let (_, _, px) = decode(&path);
        let grays: Vec<u8> = px.chunks(4).map(|p| p[0]).collect();
        assert_eq!(grays[0], 0);
        assert_eq!(grays[3], 255);
        assert!(grays[0] < grays[1] && grays[1] < grays[2] && grays[2] < grays[3]);
    }

    #[test]
    fn rendering_twice_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.png");
        let b = dir.path().join("b.png");
        let r = Raster::from_values(spec(), vec![0.3, 2.0, f64::NAN, 9.1]).unwrap();
        render_png(&r, &RenderOptions::default(), &a).unwrap();
        render_png(&r, &RenderOptions::default(), &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn rejects_bad_bounds() {
        let dir = tempfile::tempdir().unwrap();
        let r = Raster::filled(spec(), 1.0);
        let opts = RenderOptions {
            min: Some(5.0),
            max: Some(1.0),
            ..RenderOptions::default()
        };
        assert!(render_png(&r, &opts, &dir.path().join("x.png")).is_err());
    }
}

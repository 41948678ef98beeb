//! Accuracy assessment: plane-fit flatness, height profiles and the
//! RMSE/GSD summary rows used to compare reconstructions.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{sample_bilinear, DepthMap};
use crate::real::Real;

/// Axis-aligned pixel rectangle `[x, x + width) x [y, y + height)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roi {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Roi {
    pub fn full(dims: (usize, usize)) -> Self {
        Roi {
            x: 0,
            y: 0,
            width: dims.0,
            height: dims.1,
        }
    }

    /// Clips the rectangle to a raster; errors when nothing is left.
    fn clip(&self, dims: (usize, usize)) -> Result<Roi> {
        let x1 = (self.x + self.width).min(dims.0);
        let y1 = (self.y + self.height).min(dims.1);
        if self.x >= x1 || self.y >= y1 {
            return Err(Error::DegenerateRoi);
        }
        Ok(Roi {
            x: self.x,
            y: self.y,
            width: x1 - self.x,
            height: y1 - self.y,
        })
    }
}

/// Residual histogram with equal-width bins starting at `start`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub start: f64,
    pub bin_width: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Bins of width `bin_width` aligned to multiples of it. A zero width
    /// puts everything in one bin.
    pub fn build(values: &[f64], bin_width: f64) -> Self {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if values.is_empty() || !(bin_width > 0.0) || !(hi > lo) {
            return Histogram {
                start: if values.is_empty() { 0.0 } else { lo },
                bin_width: bin_width.max(0.0),
                counts: vec![values.len()],
            };
        }
        let start = (lo / bin_width).floor() * bin_width;
        let bins = (((hi - start) / bin_width).floor() as usize) + 1;
        let mut counts = vec![0; bins];
        for &v in values {
            let k = (((v - start) / bin_width).floor() as usize).min(bins - 1);
            counts[k] += 1;
        }
        Histogram {
            start,
            bin_width,
            counts,
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// `(bin start, bin end, count)` rows.
    pub fn rows(&self) -> impl Iterator<Item = (f64, f64, usize)> + '_ {
        self.counts.iter().enumerate().map(|(k, &c)| {
            let a = self.start + k as f64 * self.bin_width;
            (a, a + self.bin_width, c)
        })
    }
}

/// Least-squares plane `z = a x + b y + c` (pixel coordinates) over a
/// region and the spread of the heights around it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneFitReport {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Root-mean-square residual in height units.
    pub rmse: f64,
    /// Ground sample distance supplied by the caller.
    pub gsd: f64,
    pub rmse_over_gsd: f64,
    /// Valid pixels used.
    pub n: usize,
    /// Residuals binned at `rmse / 5`.
    pub histogram: Histogram,
}

/// Fits a plane to the valid pixels of `roi` and reports the residual RMSE
/// against the given ground sample distance.
pub fn plane_fit_rmse<T: Real>(depth: &DepthMap<T>, roi: &Roi, gsd: f64) -> Result<PlaneFitReport> {
    if !(gsd > 0.0) || !gsd.is_finite() {
        return Err(Error::InvalidParameter(format!("ground sample distance must be positive, got {gsd}")));
    }
    let roi = roi.clip(depth.dims())?;
    let mut pts: Vec<(f64, f64, f64)> = Vec::with_capacity(roi.width * roi.height);
    for y in roi.y..roi.y + roi.height {
        for x in roi.x..roi.x + roi.width {
            if depth.valid.at(x, y) {
                pts.push((x as f64, y as f64, depth.z.at(x, y).to_f64_lossy()));
            }
        }
    }
    if pts.len() < 3 {
        return Err(Error::DegenerateRoi);
    }
    let n = pts.len() as f64;
    let (sx, sy, sz) = pts
        .iter()
        .fold((0.0, 0.0, 0.0), |s, p| (s.0 + p.0, s.1 + p.1, s.2 + p.2));
    let (mx, my, mz) = (sx / n, sy / n, sz / n);
    let (mut sxx, mut sxy, mut syy, mut sxz, mut syz) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y, z) in &pts {
        let (dx, dy, dz) = (x - mx, y - my, z - mz);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
        sxz += dx * dz;
        syz += dy * dz;
    }
    let det = sxx * syy - sxy * sxy;
    if !(det > 1e-12 * sxx.max(syy).powi(2)) {
        return Err(Error::DegenerateRoi);
    }
    let a = (sxz * syy - syz * sxy) / det;
    let b = (syz * sxx - sxz * sxy) / det;
    let c = mz - a * mx - b * my;
    let residuals: Vec<f64> = pts
        .iter()
        .map(|&(x, y, z)| (z - mz) - a * (x - mx) - b * (y - my))
        .collect();
    let rmse = (residuals.iter().map(|r| r * r).sum::<f64>() / n).sqrt();
    Ok(PlaneFitReport {
        a,
        b,
        c,
        rmse,
        gsd,
        rmse_over_gsd: rmse / gsd,
        n: pts.len(),
        histogram: Histogram::build(&residuals, rmse / 5.0),
    })
}

/// One row of a flatness comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatnessRow {
    #[serde(rename = "object")]
    pub label: String,
    #[serde(rename = "RMSE (mm)")]
    pub rmse_mm: f64,
    #[serde(rename = "GSD (mm)")]
    pub gsd_mm: f64,
    #[serde(rename = "RMSE/GSD")]
    pub rmse_over_gsd: f64,
}

impl PlaneFitReport {
    pub fn flatness_row(&self, label: &str) -> FlatnessRow {
        FlatnessRow {
            label: label.to_string(),
            rmse_mm: self.rmse,
            gsd_mm: self.gsd,
            rmse_over_gsd: self.rmse_over_gsd,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileSample<T> {
    /// Distance from the first vertex in object units.
    pub arc_length: T,
    pub x: T,
    pub y: T,
    /// `None` where the sample touches an invalid pixel.
    pub height: Option<T>,
}

/// Heights sampled along a polyline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Profile<T> {
    pub polyline: Vec<[T; 2]>,
    /// Step along the polyline in pixels.
    pub spacing: T,
    pub samples: Vec<ProfileSample<T>>,
}

impl<T: Real> Profile<T> {
    pub fn valid_count(&self) -> usize {
        self.samples.iter().filter(|s| s.height.is_some()).count()
    }
}

/// Samples `depth` every `spacing` pixels of arc length along `polyline`,
/// with bilinear interpolation. Arc lengths are converted with the pixel
/// pitch (1 when unset).
pub fn extract_profile<T: Real>(depth: &DepthMap<T>, polyline: &[[T; 2]], spacing: T) -> Result<Profile<T>> {
    if !(spacing > T::zero()) || !spacing.is_finite() {
        return Err(Error::InvalidParameter("profile spacing must be positive".into()));
    }
    let mut vertices: Vec<[T; 2]> = Vec::with_capacity(polyline.len());
    for &v in polyline {
        if vertices.last() != Some(&v) {
            vertices.push(v);
        }
    }
    if vertices.len() < 2 {
        return Err(Error::DegeneratePolyline);
    }
    let (w, h) = depth.dims();
    let (max_x, max_y) = (T::from_usize_lossy(w.max(1) - 1), T::from_usize_lossy(h.max(1) - 1));
    for v in &vertices {
        if !(v[0] >= T::zero() && v[1] >= T::zero() && v[0] <= max_x && v[1] <= max_y) {
            return Err(Error::InvalidParameter(format!(
                "profile vertex ({}, {}) lies outside the {w}x{h} raster",
                v[0].to_f64_lossy(),
                v[1].to_f64_lossy()
            )));
        }
    }
    let seg_len: Vec<T> = vertices
        .windows(2)
        .map(|s| ((s[1][0] - s[0][0]).powi(2) + (s[1][1] - s[0][1]).powi(2)).sqrt())
        .collect();
    let total = seg_len.iter().fold(T::zero(), |a, &b| a + b);
    let pitch = depth.pitch_or_unit();
    let count = (total / spacing).floor().to_usize().unwrap_or(0) + 1;
    let mut samples = Vec::with_capacity(count);
    let (mut seg, mut seg_start) = (0usize, T::zero());
    for k in 0..count {
        let s = T::from_usize_lossy(k) * spacing;
        while seg + 1 < seg_len.len() && s > seg_start + seg_len[seg] {
            seg_start = seg_start + seg_len[seg];
            seg += 1;
        }
        let t = ((s - seg_start) / seg_len[seg]).min(T::one());
        let (a, b) = (vertices[seg], vertices[seg + 1]);
        let x = a[0] + (b[0] - a[0]) * t;
        let y = a[1] + (b[1] - a[1]) * t;
        samples.push(ProfileSample {
            arc_length: s * pitch,
            x,
            y,
            height: sample_bilinear(&depth.z, &depth.valid, x, y),
        });
    }
    Ok(Profile {
        polyline: vertices,
        spacing,
        samples,
    })
}

fn check_sampling<T: Real>(a: &Profile<T>, b: &Profile<T>) -> Result<()> {
    if a.samples.len() != b.samples.len() {
        return Err(Error::SamplingMismatch(format!(
            "{} versus {} samples",
            a.samples.len(),
            b.samples.len()
        )));
    }
    for (k, (sa, sb)) in a.samples.iter().zip(&b.samples).enumerate() {
        let scale = sa.arc_length.abs().max(sb.arc_length.abs()).max(T::one());
        if (sa.arc_length - sb.arc_length).abs() > T::lit(1e-9) * scale {
            return Err(Error::SamplingMismatch(format!("arc length differs at sample {k}")));
        }
    }
    Ok(())
}

/// Root-mean-square height difference over samples valid in both profiles.
pub fn profile_rmse<T: Real>(a: &Profile<T>, b: &Profile<T>) -> Result<T> {
    check_sampling(a, b)?;
    let (sum, n) = a
        .samples
        .iter()
        .zip(&b.samples)
        .filter_map(|(sa, sb)| Some(sa.height? - sb.height?))
        .fold((T::zero(), 0usize), |(s, n), d| (s + d * d, n + 1));
    if n == 0 {
        return Err(Error::NoValidPixels("profiles share no valid sample"));
    }
    Ok((sum / T::from_usize_lossy(n)).sqrt())
}

/// Error of one method alone when the measured difference also contains
/// the error of a smooth reference: `sqrt(total^2 - smooth^2)`.
pub fn propagated_rmse<T: Real>(total: T, smooth: T) -> Result<T> {
    if !(smooth >= T::zero()) || !(total >= smooth) {
        return Err(Error::InvalidParameter(
            "propagated RMSE needs 0 <= smooth <= total".into(),
        ));
    }
    Ok((total * total - smooth * smooth).sqrt())
}

/// Ratio `b / a`, printed as `1:ratio`.
pub fn relative_error<T: Real>(a: T, b: T) -> Result<T> {
    if !(a > T::zero()) || !(b >= T::zero()) {
        return Err(Error::InvalidParameter("relative error needs a positive reference".into()));
    }
    Ok(b / a)
}

/// One row of a profile comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileComparison {
    pub label: String,
    #[serde(rename = "RMSE (mm)")]
    pub rmse_mm: f64,
    pub samples: usize,
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Config(format!("{}: {other:?}", path.display())),
    }
}

fn write_rows<R: Serialize>(path: &Path, rows: impl IntoIterator<Item = R>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Profile as `arc_length_mm,height_mm`; invalid samples are left empty.
pub fn write_profile_csv<T: Real>(path: &Path, profile: &Profile<T>) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        arc_length_mm: f64,
        height_mm: Option<f64>,
    }
    write_rows(
        path,
        profile.samples.iter().map(|s| Row {
            arc_length_mm: s.arc_length.to_f64_lossy(),
            height_mm: s.height.map(|v| v.to_f64_lossy()),
        }),
    )
}

pub fn write_histogram_csv(path: &Path, histogram: &Histogram) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        bin_start: f64,
        bin_end: f64,
        count: usize,
    }
    write_rows(
        path,
        histogram.rows().map(|(bin_start, bin_end, count)| Row {
            bin_start,
            bin_end,
            count,
        }),
    )
}

pub fn write_flatness_csv(path: &Path, rows: &[FlatnessRow]) -> Result<()> {
    write_rows(path, rows)
}

/// Whitespace-separated columns with a `#` header, readable by gnuplot.
pub fn plot_columns(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = format!("# {}\n", header.join(" "));
    for row in rows {
        let cells: Vec<String> = row
            .iter()
            .map(|v| if v.is_finite() { format!("{v}") } else { "NaN".into() })
            .collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}

pub fn profile_plot_data<T: Real>(profile: &Profile<T>) -> String {
    plot_columns(
        &["arc_length_mm", "height_mm"],
        profile.samples.iter().map(|s| {
            vec![
                s.arc_length.to_f64_lossy(),
                s.height.map_or(f64::NAN, |v| v.to_f64_lossy()),
            ]
        }),
    )
}

pub fn histogram_plot_data(histogram: &Histogram) -> String {
    plot_columns(
        &["bin_center", "count"],
        histogram
            .rows()
            .map(|(a, b, c)| vec![0.5 * (a + b), c as f64]),
    )
}

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::real::Real;

/// Object-space points in mm, optionally colored.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud<T> {
    pub points: Vec<[T; 3]>,
    pub colors: Option<Vec<[u8; 3]>>,
}

impl<T: Real> PointCloud<T> {
    pub fn new(points: Vec<[T; 3]>) -> Result<Self> {
        let cloud = PointCloud { points, colors: None };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("point cloud holds non-finite coordinates".into()));
        }
        if let Some(c) = &self.colors {
            if c.len() != self.points.len() {
                return Err(Error::InvalidParameter("color count differs from point count".into()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Reads `X Y Z [R G B]` rows from CSV (comma or whitespace separated,
    /// optional header, `#` comments) or from an ASCII PLY file.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bad = |reason: String| Error::Decode {
            path: path.to_path_buf(),
            reason,
        };
        let is_ply = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("ply"));
        let body: Vec<&str> = if is_ply {
            let mut lines = text.lines();
            if lines.next().map(str::trim) != Some("ply") {
                return Err(bad("missing ply magic".into()));
            }
            let mut count = None;
            for line in lines.by_ref() {
                let line = line.trim();
                if line.starts_with("format") && !line.contains("ascii") {
                    return Err(bad("only ascii PLY is supported".into()));
                }
                if let Some(rest) = line.strip_prefix("element vertex") {
                    count = rest.trim().parse::<usize>().ok();
                }
                if line == "end_header" {
                    break;
                }
            }
            let count = count.ok_or_else(|| bad("PLY header lacks a vertex count".into()))?;
            let rows: Vec<&str> = lines.take(count).collect();
            if rows.len() != count {
                return Err(bad(format!("PLY declares {count} vertices, found {}", rows.len())));
            }
            rows
        } else {
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .enumerate()
                .filter(|(i, l)| {
                    // a leading header row starts with a letter
                    !(*i == 0 && l.starts_with(|c: char| c.is_ascii_alphabetic()))
                })
                .map(|(_, l)| l)
                .collect()
        };

        let mut points = Vec::with_capacity(body.len());
        let mut colors = Vec::with_capacity(body.len());
        for (n, line) in body.iter().enumerate() {
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            if fields.len() < 3 {
                return Err(bad(format!("row {} has {} fields, need X Y Z", n + 1, fields.len())));
            }
            let mut xyz = [T::zero(); 3];
            for (k, f) in fields[..3].iter().enumerate() {
                let v: f64 = f
                    .parse()
                    .map_err(|_| bad(format!("row {}: '{f}' is not a number", n + 1)))?;
                xyz[k] = T::lit(v);
            }
            points.push(xyz);
            if fields.len() >= 6 {
                let mut rgb = [0u8; 3];
                for (k, f) in fields[3..6].iter().enumerate() {
                    let v: f64 = f
                        .parse()
                        .map_err(|_| bad(format!("row {}: bad color '{f}'", n + 1)))?;
                    rgb[k] = v.clamp(0.0, 255.0).round() as u8;
                }
                colors.push(rgb);
            }
        }
        let colors = (!colors.is_empty() && colors.len() == points.len()).then_some(colors);
        let cloud = PointCloud { points, colors };
        cloud.validate()?;
        Ok(cloud)
    }

    /// Writes `X,Y,Z[,R,G,B]` with a header row.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        match &self.colors {
            Some(colors) => {
                out.push_str("X,Y,Z,R,G,B\n");
                for (p, c) in self.points.iter().zip(colors) {
                    let _ = writeln!(out, "{:?},{:?},{:?},{},{},{}", p[0].to_f64_lossy(), p[1].to_f64_lossy(), p[2].to_f64_lossy(), c[0], c[1], c[2]);
                }
            }
            None => {
                out.push_str("X,Y,Z\n");
                for p in &self.points {
                    let _ = writeln!(out, "{:?},{:?},{:?}", p[0].to_f64_lossy(), p[1].to_f64_lossy(), p[2].to_f64_lossy());
                }
            }
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn write_ply(&self, path: &Path) -> Result<()> {
        let mut out = format!(
            "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n",
            self.len()
        );
        if self.colors.is_some() {
            out.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
        }
        out.push_str("end_header\n");
        for (i, p) in self.points.iter().enumerate() {
            let _ = write!(out, "{:?} {:?} {:?}", p[0].to_f64_lossy(), p[1].to_f64_lossy(), p[2].to_f64_lossy());
            if let Some(c) = &self.colors {
                let _ = write!(out, " {} {} {}", c[i][0], c[i][1], c[i][2]);
            }
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_ply_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut cloud = PointCloud::new(vec![[1.0, 2.5, -3.0], [0.1, 1e-7, 42.0]]).unwrap();
        let csv = dir.path().join("c.csv");
        cloud.write_csv(&csv).unwrap();
        assert_eq!(PointCloud::<f64>::read(&csv).unwrap(), cloud);
        cloud.colors = Some(vec![[1, 2, 3], [250, 0, 9]]);
        let ply = dir.path().join("c.ply");
        cloud.write_ply(&ply).unwrap();
        assert_eq!(PointCloud::<f64>::read(&ply).unwrap(), cloud);
    }

    #[test]
    fn whitespace_rows_with_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.xyz");
        std::fs::write(&path, "# scan\n1 2 3\n4\t5\t6 10 20 30\n").unwrap();
        let cloud = PointCloud::<f64>::read(&path).unwrap();
        assert_eq!(cloud.points, vec![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        assert!(cloud.colors.is_none());
    }

    #[test]
    fn malformed_rows_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        std::fs::write(&path, "1,2\n").unwrap();
        assert!(matches!(PointCloud::<f64>::read(&path), Err(Error::Decode { .. })));
        assert!(PointCloud::new(vec![[f64::NAN, 0.0, 0.0]]).is_err());
    }
}

//! Output files: CSV (comma, '.', header row, LF), JSON reports and SVG plots.
//!
//! Commands stage every file in a [`Bundle`] and write it only after all computations have
//! succeeded.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use liberation_core::domain::{BoundaryKind, DomainSnapshot};
use liberation_core::inversion::{DensityProfile, ProfileKind};
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Default, Debug)]
pub struct Bundle {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Bundle {
    pub fn new() -> Self {
        Bundle::default()
    }

    pub fn csv<R, I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<()>
    where
        R: IntoIterator,
        R::Item: AsRef<[u8]>,
        I: IntoIterator<Item = R>,
    {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        self.files.push((PathBuf::from(name), bytes));
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.files.push((PathBuf::from(name), bytes));
        Ok(())
    }

    pub fn text(&mut self, name: &str, text: String) {
        self.files.push((PathBuf::from(name), text.into_bytes()));
    }

    pub fn names(&self) -> Vec<&Path> {
        self.files.iter().map(|f| f.0.as_path()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|f| f.0 == Path::new(name)).map(|f| f.1.as_slice())
    }

    pub fn commit(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (name, bytes) in &self.files {
            fs::write(dir.join(name), bytes)?;
        }
        Ok(())
    }
}

/// Shortest representation that round-trips, in exponent form for very small or large values.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

/// Tag for file names, e.g. `t0.5`.
pub fn time_tag(t: f64) -> String {
    format!("t{t}")
}

pub fn profile_rows(p: &DensityProfile) -> Vec<[String; 2]> {
    p.grid.iter().zip(&p.values).map(|(x, v)| [num(*x), num(*v)]).collect()
}

pub fn profile_header(p: &DensityProfile) -> [&'static str; 2] {
    match p.kind {
        ProfileKind::Nu => ["theta", "density"],
        ProfileKind::Mu => ["x", "density"],
    }
}

pub fn boundary_rows(s: &DomainSnapshot) -> Vec<[String; 5]> {
    s.boundary
        .iter()
        .map(|b| {
            let z = b.z();
            let kind = match b.kind {
                BoundaryKind::Interior => "interior",
                BoundaryKind::Circle => "circle",
            };
            [num(b.theta), num(b.r), num(z.re), num(z.im), kind.to_string()]
        })
        .collect()
}

/// One angle or eigenvalue per row with its trial index.
pub fn read_samples(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let col = headers
        .iter()
        .position(|h| h == "value")
        .ok_or_else(|| Error::Config(format!("{}: no 'value' column", path.display())))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let v: f64 = rec
            .get(col)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Config(format!("{}: bad value in row {}", path.display(), out.len() + 1)))?;
        out.push(v);
    }
    Ok(out)
}

const SIZE: f64 = 800.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn disc_xy(re: f64, im: f64) -> (f64, f64) {
    let s = SIZE / 2.0 / 1.1;
    (SIZE / 2.0 + s * re, SIZE / 2.0 - s * im)
}

/// Boundary curves of several snapshots in the unit-disc viewport.
pub fn boundary_svg(snapshots: &[DomainSnapshot]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="800" height="800" viewBox="0 0 800 800">"#);
    let _ = writeln!(s, r#"<rect width="800" height="800" fill="white"/>"#);
    let (cx, cy) = disc_xy(0.0, 0.0);
    let _ = writeln!(
        s,
        r##"<circle cx="{cx}" cy="{cy}" r="{:.3}" fill="none" stroke="#888" stroke-width="1"/>"##,
        SIZE / 2.0 / 1.1
    );
    for (i, snap) in snapshots.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut d = String::new();
        for (j, z) in snap.points().iter().enumerate() {
            let (x, y) = disc_xy(z.re, z.im);
            let _ = write!(d, "{}{x:.3},{y:.3} ", if j == 0 { "M" } else { "L" });
        }
        d.push('Z');
        let _ = writeln!(s, r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>"#);
        for x in [snap.x_minus, snap.x_plus] {
            let (px, py) = disc_xy(x, 0.0);
            let _ = writeln!(s, r#"<circle cx="{px:.3}" cy="{py:.3}" r="3" fill="{color}"/>"#);
        }
        let _ = writeln!(
            s,
            r#"<text x="10" y="{}" font-family="sans-serif" font-size="14" fill="{color}">t = {}</text>"#,
            20 + 18 * i,
            snap.t
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Density curve with atoms drawn as vertical bars (height = mass, right axis).
pub fn profile_svg(p: &DensityProfile) -> String {
    let (lo, hi) = match p.kind {
        ProfileKind::Nu => (-PI, PI),
        ProfileKind::Mu => (0.0, 1.0),
    };
    let top = p.values.iter().copied().fold(0.0f64, f64::max).max(1e-12) * 1.1;
    let margin = 40.0;
    let w = SIZE - 2.0 * margin;
    let xy = |x: f64, y: f64| (margin + w * (x - lo) / (hi - lo), SIZE - margin - w * y);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="800" height="800" viewBox="0 0 800 800">"#);
    let _ = writeln!(s, r#"<rect width="800" height="800" fill="white"/>"#);
    let (x0, y0) = xy(lo, 0.0);
    let (x1, y1) = xy(hi, 1.0);
    let _ = writeln!(s, r##"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="#888"/>"##, x1 - x0, y0 - y1);
    let mut d = String::new();
    for (j, (x, v)) in p.grid.iter().zip(&p.values).enumerate() {
        let (px, py) = xy(*x, v / top);
        let _ = write!(d, "{}{px:.3},{py:.3} ", if j == 0 { "M" } else { "L" });
    }
    let _ = writeln!(s, r##"<path d="{d}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>"##);
    for (x, m) in &p.atoms {
        let (px, py0) = xy(*x, 0.0);
        let (_, py1) = xy(*x, *m);
        let _ = writeln!(s, r##"<line x1="{px:.3}" y1="{py0:.3}" x2="{px:.3}" y2="{py1:.3}" stroke="#d62728" stroke-width="3"/>"##);
    }
    let _ = writeln!(
        s,
        r#"<text x="{margin}" y="25" font-family="sans-serif" font-size="14">t = {}, density max {:.4e}</text>"#,
        p.t,
        top / 1.1
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use liberation_core::domain::trace_boundary;
    use liberation_core::measures::InitialData;

    #[test]
    fn csv_uses_lf_and_header() {
        let mut b = Bundle::new();
        b.csv("a.csv", &["x", "y"], vec![[num(0.1), num(-2.0)], [num(1e-20), num(3.0)]]).unwrap();
        let text = String::from_utf8(b.get("a.csv").unwrap().to_vec()).unwrap();
        assert_eq!(text, "x,y\n0.1,-2.0\n1e-20,3.0\n");
        assert!(!text.contains('\r'));
    }

    #[test]
    fn commit_writes_everything() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = Bundle::new();
        b.json("r.json", &serde_json::json!({"ok": true})).unwrap();
        b.text("p.svg", "<svg/>".into());
        b.commit(&dir.path().join("sub")).unwrap();
        assert!(dir.path().join("sub/r.json").exists());
        assert_eq!(fs::read_to_string(dir.path().join("sub/p.svg")).unwrap(), "<svg/>");
    }

    #[test]
    fn samples_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = Bundle::new();
        b.csv("s.csv", &["trial", "value"], vec![["0".to_string(), num(0.25)], ["1".into(), num(-PI)]]).unwrap();
        b.commit(dir.path()).unwrap();
        assert_eq!(read_samples(&dir.path().join("s.csv")).unwrap(), vec![0.25, -PI]);
    }

    #[test]
    fn boundary_svg_has_one_path_per_snapshot() {
        let init = InitialData::equal(0.0).unwrap();
        let snaps: Vec<_> = [0.2, 0.5].iter().map(|&t| trace_boundary(t, 8, 1e-4, &init).unwrap()).collect();
        let svg = boundary_svg(&snaps);
        assert_eq!(svg.matches("<path").count(), 2);
        assert!(svg.starts_with("<svg") && svg.contains(r#"width="800""#));
    }
}

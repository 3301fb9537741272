//! Point clouds with per-point feature rows.
//!
//! A [`FeaturedCloud`] stores one fixed-width feature row per point. The
//! first three columns are always `x, y, z` in metres; the remaining columns
//! depend on where the cloud came from:
//!
//! | provenance  | columns                               |
//! |-------------|---------------------------------------|
//! | `Nca`       | `x,y,z,v,snr_rd,snr_aoa`              |
//! | `Saa`       | `x,y,z,intensity`                     |
//! | `Reference` | `x,y,z`                               |
//!
//! Clouds are read and written as CSV (header row = column names, plus an
//! optional trailing `label` column) and as binary little-endian PLY.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    /// Detected points accumulated over frames.
    Nca,
    /// Discretized back-projection voxels.
    Saa,
    /// Geometry-only reference (e.g. lidar) cloud.
    Reference,
}

impl Provenance {
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            Provenance::Nca => &["x", "y", "z", "v", "snr_rd", "snr_aoa"],
            Provenance::Saa => &["x", "y", "z", "intensity"],
            Provenance::Reference => &["x", "y", "z"],
        }
    }

    pub fn feature_count(self) -> usize {
        self.columns().len()
    }

    fn from_columns(cols: &[&str]) -> Option<Self> {
        [Provenance::Nca, Provenance::Saa, Provenance::Reference]
            .into_iter()
            .find(|p| p.columns() == cols)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeaturedCloud {
    provenance: Provenance,
    data: Vec<f64>,
    labels: Option<Vec<u8>>,
    source_frames: Option<Vec<usize>>,
}

impl FeaturedCloud {
    pub fn new(provenance: Provenance) -> Self {
        Self {
            provenance,
            data: Vec::new(),
            labels: None,
            source_frames: None,
        }
    }

    /// Build from row-major feature data. Fails if the length is not a
    /// multiple of the provenance width.
    pub fn from_rows(provenance: Provenance, data: Vec<f64>) -> Result<Self> {
        if data.len() % provenance.feature_count() != 0 {
            return Err(Error::InvalidInput(format!(
                "{} values do not form rows of {} features",
                data.len(),
                provenance.feature_count()
            )));
        }
        Ok(Self {
            provenance,
            data,
            labels: None,
            source_frames: None,
        })
    }

    /// Geometry-only cloud.
    pub fn from_positions(positions: &[[f64; 3]]) -> Self {
        Self {
            provenance: Provenance::Reference,
            data: positions.iter().flatten().copied().collect(),
            labels: None,
            source_frames: None,
        }
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn dim(&self) -> usize {
        self.provenance.feature_count()
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.dim(), "feature row width");
        self.data.extend_from_slice(row);
        if let Some(l) = &mut self.labels {
            l.push(0);
        }
        if let Some(f) = &mut self.source_frames {
            f.push(0);
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let d = self.dim();
        &mut self.data[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim())
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn position(&self, i: usize) -> [f64; 3] {
        let r = self.row(i);
        [r[0], r[1], r[2]]
    }

    pub fn positions(&self) -> Vec<[f64; 3]> {
        self.rows().map(|r| [r[0], r[1], r[2]]).collect()
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn set_labels(&mut self, labels: Vec<u8>) -> Result<()> {
        if labels.len() != self.len() {
            return Err(Error::InvalidInput(format!(
                "{} labels for {} points",
                labels.len(),
                self.len()
            )));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::InvalidInput("labels must be 0 or 1".into()));
        }
        self.labels = Some(labels);
        Ok(())
    }

    pub fn clear_labels(&mut self) {
        self.labels = None;
    }

    /// Index of the frame each point was detected in, when known.
    pub fn source_frames(&self) -> Option<&[usize]> {
        self.source_frames.as_deref()
    }

    pub fn set_source_frames(&mut self, frames: Vec<usize>) -> Result<()> {
        if frames.len() != self.len() {
            return Err(Error::InvalidInput("source frame count mismatch".into()));
        }
        self.source_frames = Some(frames);
        Ok(())
    }

    /// Append `other`, which must share the provenance. Labels and source
    /// frames are kept only if both clouds carry them.
    pub fn extend_from(&mut self, other: &FeaturedCloud) -> Result<()> {
        if other.provenance != self.provenance {
            return Err(Error::InvalidInput(format!(
                "cannot merge {:?} cloud into {:?} cloud",
                other.provenance, self.provenance
            )));
        }
        let was_empty = self.is_empty();
        self.data.extend_from_slice(&other.data);
        self.labels = match (self.labels.take(), &other.labels) {
            (Some(mut a), Some(b)) => {
                a.extend_from_slice(b);
                Some(a)
            }
            (None, Some(b)) if was_empty => Some(b.clone()),
            _ => None,
        };
        self.source_frames = match (self.source_frames.take(), &other.source_frames) {
            (Some(mut a), Some(b)) => {
                a.extend_from_slice(b);
                Some(a)
            }
            (None, Some(b)) if was_empty => Some(b.clone()),
            _ => None,
        };
        Ok(())
    }

    /// Points at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> FeaturedCloud {
        let mut data = Vec::with_capacity(indices.len() * self.dim());
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        FeaturedCloud {
            provenance: self.provenance,
            data,
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
            source_frames: self
                .source_frames
                .as_ref()
                .map(|f| indices.iter().map(|&i| f[i]).collect()),
        }
    }

    /// Geometry-only copy.
    pub fn to_reference(&self) -> FeaturedCloud {
        FeaturedCloud::from_positions(&self.positions())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(file).map_err(|e| Error::io(path, e))
    }

    pub fn write_csv_to<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<&str> = self.provenance.columns().to_vec();
        if self.labels.is_some() {
            header.push("label");
        }
        wr.write_record(&header)?;
        let mut buf = Vec::with_capacity(header.len());
        for i in 0..self.len() {
            buf.clear();
            buf.extend(self.row(i).iter().map(|v| v.to_string()));
            if let Some(l) = &self.labels {
                buf.push(l[i].to_string());
            }
            wr.write_record(&buf)?;
        }
        wr.flush()
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv_from(file).map_err(|m| Error::parse(path, m))
    }

    pub fn read_csv_from<R: Read>(r: R) -> std::result::Result<Self, String> {
        let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let headers = rd.headers().map_err(|e| format!("line 1: {e}"))?.clone();
        let mut cols: Vec<&str> = headers.iter().map(str::trim).collect();
        let has_label = cols.last() == Some(&"label");
        if has_label {
            cols.pop();
        }
        let provenance = Provenance::from_columns(&cols)
            .ok_or_else(|| format!("line 1: unrecognised header `{}`", headers.iter().collect::<Vec<_>>().join(",")))?;
        let mut cloud = FeaturedCloud::new(provenance);
        let mut labels = Vec::new();
        let width = cols.len() + usize::from(has_label);
        for rec in rd.records() {
            let rec = rec.map_err(|e| match e.position() {
                Some(p) => format!("line {}: {e}", p.line()),
                None => e.to_string(),
            })?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            if rec.len() != width {
                return Err(format!("line {line}: expected {width} fields, found {}", rec.len()));
            }
            let mut row = Vec::with_capacity(cols.len());
            for (k, field) in rec.iter().take(cols.len()).enumerate() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| format!("line {line}: column `{}`: invalid number `{field}`", cols[k]))?;
                row.push(v);
            }
            cloud.data.extend_from_slice(&row);
            if has_label {
                let l: u8 = rec[cols.len()]
                    .trim()
                    .parse()
                    .ok()
                    .filter(|&l| l <= 1)
                    .ok_or_else(|| format!("line {line}: label must be 0 or 1"))?;
                labels.push(l);
            }
        }
        if has_label {
            cloud.labels = Some(labels);
        }
        Ok(cloud)
    }

    pub fn write_ply(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::new();
        self.write_ply_to(&mut bytes).expect("write to Vec");
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    /// Binary little-endian PLY with one `double` property per column.
    pub fn write_ply_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "ply")?;
        writeln!(w, "format binary_little_endian 1.0")?;
        writeln!(w, "element vertex {}", self.len())?;
        for c in self.provenance.columns() {
            writeln!(w, "property double {c}")?;
        }
        if self.labels.is_some() {
            writeln!(w, "property uchar label")?;
        }
        writeln!(w, "end_header")?;
        for i in 0..self.len() {
            for v in self.row(i) {
                w.write_all(&v.to_le_bytes())?;
            }
            if let Some(l) = &self.labels {
                w.write_all(&[l[i]])?;
            }
        }
        Ok(())
    }

    pub fn read_ply(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_ply_from(file).map_err(|m| Error::parse(path, m))
    }

    pub fn read_ply_from<R: Read>(r: R) -> std::result::Result<Self, String> {
        let mut rd = BufReader::new(r);
        let mut line = String::new();
        let mut n = None;
        let mut cols: Vec<String> = Vec::new();
        let mut has_label = false;
        let mut lineno = 0;
        loop {
            line.clear();
            lineno += 1;
            if rd.read_line(&mut line).map_err(|e| e.to_string())? == 0 {
                return Err(format!("line {lineno}: missing end_header"));
            }
            let t = line.trim_end();
            let parts: Vec<&str> = t.split_whitespace().collect();
            match parts.as_slice() {
                ["ply"] if lineno == 1 => {}
                _ if lineno == 1 => return Err("line 1: not a PLY file".into()),
                ["format", "binary_little_endian", "1.0"] => {}
                ["format", ..] => return Err(format!("line {lineno}: unsupported format")),
                ["element", "vertex", count] => {
                    n = Some(count.parse::<usize>().map_err(|_| format!("line {lineno}: bad vertex count"))?)
                }
                ["property", "double", name] => cols.push(name.to_string()),
                ["property", "uchar", "label"] => has_label = true,
                ["comment", ..] => {}
                ["end_header"] => break,
                _ => return Err(format!("line {lineno}: unexpected header line `{t}`")),
            }
        }
        let n = n.ok_or("missing vertex element")?;
        let names: Vec<&str> = cols.iter().map(String::as_str).collect();
        let provenance = Provenance::from_columns(&names).ok_or("unrecognised vertex properties")?;
        let mut cloud = FeaturedCloud::new(provenance);
        let mut labels = Vec::with_capacity(if has_label { n } else { 0 });
        let mut buf = [0u8; 8];
        for _ in 0..n {
            for _ in 0..cols.len() {
                rd.read_exact(&mut buf).map_err(|e| format!("vertex data: {e}"))?;
                cloud.data.push(f64::from_le_bytes(buf));
            }
            if has_label {
                let mut b = [0u8; 1];
                rd.read_exact(&mut b).map_err(|e| format!("vertex data: {e}"))?;
                labels.push(b[0]);
            }
        }
        if has_label {
            cloud.labels = Some(labels);
        }
        Ok(cloud)
    }
}

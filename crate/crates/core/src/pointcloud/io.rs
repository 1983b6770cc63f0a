//! Cloud files and dataset manifests.
//!
//! Text: a header line `pc <m> <label>` (label `-` when absent) followed by
//! `m` lines of `x y z`. Binary: the magic `PCB1`, `m` as little-endian u32,
//! the label as little-endian i32 (−1 when absent), then `m` little-endian
//! f32 triples.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CloudError, Dataset, PointCloud, ShapeDatasetSpec};

pub const BINARY_MAGIC: &[u8; 4] = b"PCB1";
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CloudFormat {
    Text,
    Binary,
}

impl CloudFormat {
    /// `.bin` is binary, anything else is text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => CloudFormat::Binary,
            _ => CloudFormat::Text,
        }
    }

    pub fn extension(&self) -> &'static str {
        match self {
            CloudFormat::Text => "txt",
            CloudFormat::Binary => "bin",
        }
    }
}

pub fn save_cloud(p: &PointCloud, path: &Path) -> Result<(), CloudError> {
    match CloudFormat::from_path(path) {
        CloudFormat::Text => save_cloud_text(p, path),
        CloudFormat::Binary => save_cloud_binary(p, path),
    }
}

pub fn load_cloud(path: &Path) -> Result<PointCloud, CloudError> {
    match CloudFormat::from_path(path) {
        CloudFormat::Text => load_cloud_text(path),
        CloudFormat::Binary => load_cloud_binary(path),
    }
}

pub fn save_cloud_text(p: &PointCloud, path: &Path) -> Result<(), CloudError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    match p.label {
        Some(l) => writeln!(w, "pc {} {}", p.len(), l)?,
        None => writeln!(w, "pc {} -", p.len())?,
    }
    for q in p.points() {
        // shortest round-trip representation, so text is exact as well
        writeln!(w, "{} {} {}", q[0], q[1], q[2])?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_cloud_text(path: &Path) -> Result<PointCloud, CloudError> {
    let reader = BufReader::new(fs::File::open(path)?);
    let name = path.display();
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| CloudError::parse(format!("{name}:1"), "empty file, expected header 'pc <m> <label>'"))?;
    let header = header?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 3 || fields[0] != "pc" {
        return Err(CloudError::parse(format!("{name}:1"), format!("bad header '{header}'")));
    }
    let m: usize = fields[1]
        .parse()
        .map_err(|_| CloudError::parse(format!("{name}:1"), format!("bad point count '{}'", fields[1])))?;
    let label = match fields[2] {
        "-" => None,
        s => Some(
            s.parse::<usize>()
                .map_err(|_| CloudError::parse(format!("{name}:1"), format!("bad label '{s}'")))?,
        ),
    };
    let mut points = Vec::with_capacity(m);
    for (idx, line) in lines {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<&str> = line.split_whitespace().collect();
        if vals.len() != 3 {
            return Err(CloudError::parse(
                format!("{name}:{lineno}"),
                format!("expected 3 coordinates, found {}", vals.len()),
            ));
        }
        let mut q = [0.0; 3];
        for (k, v) in vals.iter().enumerate() {
            q[k] = v
                .parse()
                .map_err(|_| CloudError::parse(format!("{name}:{lineno}"), format!("bad number '{v}'")))?;
        }
        points.push(q);
    }
    if points.len() != m {
        return Err(CloudError::parse(
            format!("{name}"),
            format!("header declares {m} points, found {}", points.len()),
        ));
    }
    if m == 0 {
        return Err(CloudError::parse(format!("{name}:1"), "cloud must contain at least one point"));
    }
    PointCloud::new(points, label)
}

/// Coordinates are stored as f32; clouds whose coordinates are exactly
/// representable in f32 round-trip bit for bit.
pub fn save_cloud_binary(p: &PointCloud, path: &Path) -> Result<(), CloudError> {
    let mut buf = Vec::with_capacity(12 + p.len() * 12);
    buf.extend_from_slice(BINARY_MAGIC);
    buf.extend_from_slice(&(p.len() as u32).to_le_bytes());
    let label = p.label.map_or(-1, |l| l as i32);
    buf.extend_from_slice(&label.to_le_bytes());
    for q in p.points() {
        for x in q {
            buf.extend_from_slice(&(*x as f32).to_le_bytes());
        }
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_cloud_binary(path: &Path) -> Result<PointCloud, CloudError> {
    let bytes = fs::read(path)?;
    let name = path.display();
    if bytes.len() < 12 {
        return Err(CloudError::parse(format!("{name}@0"), "truncated header"));
    }
    if &bytes[0..4] != BINARY_MAGIC {
        return Err(CloudError::parse(format!("{name}@0"), "bad magic, expected PCB1"));
    }
    let m = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let label = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if m == 0 {
        return Err(CloudError::parse(format!("{name}@4"), "cloud must contain at least one point"));
    }
    let expected = 12 + m * 12;
    if bytes.len() != expected {
        return Err(CloudError::parse(
            format!("{name}@{}", bytes.len().min(expected)),
            format!("expected {expected} bytes for {m} points, found {}", bytes.len()),
        ));
    }
    let points = bytes[12..]
        .chunks_exact(12)
        .map(|c| {
            let f = |o: usize| f32::from_le_bytes(c[o..o + 4].try_into().unwrap()) as f64;
            [f(0), f(4), f(8)]
        })
        .collect();
    let label = if label < 0 { None } else { Some(label as usize) };
    PointCloud::new(points, label)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the manifest's directory.
    pub path: PathBuf,
    pub label: usize,
}

/// Dataset index shared by the generator and external converters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub classes: Vec<String>,
    pub points_per_cloud: usize,
    pub seed: u64,
    #[serde(default)]
    pub generator: Option<ShapeDatasetSpec>,
    pub train: Vec<ManifestEntry>,
    pub test: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Write both splits under `dir` and return the manifest describing them.
    pub fn write_dataset(
        dir: &Path,
        spec: &ShapeDatasetSpec,
        train: &Dataset,
        test: &Dataset,
        format: CloudFormat,
    ) -> Result<Self, CloudError> {
        let entries = |split: &str, data: &Dataset| -> Result<Vec<ManifestEntry>, CloudError> {
            fs::create_dir_all(dir.join(split))?;
            data.clouds
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let rel = PathBuf::from(split).join(format!("{i:05}.{}", format.extension()));
                    save_cloud(c, &dir.join(&rel))?;
                    Ok(ManifestEntry {
                        path: rel,
                        label: c.label.unwrap_or(0),
                    })
                })
                .collect()
        };
        let manifest = Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            classes: spec.class_names(),
            points_per_cloud: spec.points_per_cloud,
            seed: spec.seed,
            generator: Some(spec.clone()),
            train: entries("train", train)?,
            test: entries("test", test)?,
        };
        manifest.save(&dir.join("manifest.json"))?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<(), CloudError> {
        let json = serde_json::to_string_pretty(self).map_err(|e| CloudError::parse(path.display().to_string(), e.to_string()))?;
        fs::write(path, json + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CloudError> {
        let text = fs::read_to_string(path)?;
        let manifest: Self = serde_json::from_str(&text).map_err(|e| {
            CloudError::parse(format!("{}:{}:{}", path.display(), e.line(), e.column()), e.to_string())
        })?;
        if manifest.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(CloudError::parse(
                path.display().to_string(),
                format!("unsupported manifest schema_version {}", manifest.schema_version),
            ));
        }
        Ok(manifest)
    }

    /// Load both splits; labels come from the manifest entries.
    pub fn load_splits(&self, manifest_path: &Path) -> Result<(Dataset, Dataset), CloudError> {
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let read = |entries: &[ManifestEntry]| -> Result<Dataset, CloudError> {
            let clouds = entries
                .iter()
                .map(|e| {
                    let mut c = load_cloud(&base.join(&e.path))?;
                    c.label = Some(e.label);
                    Ok(c)
                })
                .collect::<Result<_, CloudError>>()?;
            Ok(Dataset { clouds })
        };
        Ok((read(&self.train)?, read(&self.test)?))
    }
}

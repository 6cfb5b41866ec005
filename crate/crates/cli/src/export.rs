//! Output files: hashed artifacts, the run manifest and plain PGM rasters.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use kernel_ert::{Error, Mesh, RegionIndicator, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

/// Writes files under one directory and remembers their hashes.
#[derive(Debug)]
pub struct ArtifactWriter {
    root: PathBuf,
    hashes: BTreeMap<String, String>,
}

impl ArtifactWriter {
    pub fn new(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)
            .map_err(|e| Error::Config(format!("output directory {} is not writable: {e}", root.display())))?;
        Ok(Self {
            root: root.to_path_buf(),
            hashes: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// `name` may contain `/` for subdirectories.
    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        std::fs::write(&path, contents).map_err(|e| io_err(&path, e))?;
        self.hashes.insert(name.to_string(), sha256_hex(contents.as_bytes()));
        Ok(())
    }

    pub fn artifacts(&self) -> &BTreeMap<String, String> {
        &self.hashes
    }

    /// Writes `manifest.json`, which is not listed among its own artifacts.
    pub fn finish(self, mode: &str, cfg: &ExperimentConfig, inputs: BTreeMap<String, String>) -> Result<Vec<String>> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            tool: &'static str,
            version: &'static str,
            mode: &'a str,
            seed: u64,
            config: &'a ExperimentConfig,
            inputs: BTreeMap<String, String>,
            artifacts: &'a BTreeMap<String, String>,
        }
        let manifest = Manifest {
            tool: "kernel-ert",
            version: env!("CARGO_PKG_VERSION"),
            mode,
            seed: cfg.noise.seed,
            config: cfg,
            inputs,
            artifacts: &self.hashes,
        };
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(e.to_string()))?;
        text.push('\n');
        let path = self.root.join("manifest.json");
        std::fs::write(&path, text).map_err(|e| io_err(&path, e))?;
        let mut files: Vec<String> = self.hashes.into_keys().collect();
        files.push("manifest.json".into());
        Ok(files)
    }
}

/// Hash of an input file, keyed by its path.
pub fn hash_input(path: &Path) -> Result<(String, String)> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    Ok((path.display().to_string(), sha256_hex(&bytes)))
}

/// Shortest round-trip decimal form, so identical values print identically.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}

/// Element index covering each pixel centre of an `n x n` grid over the
/// bounding square of the disk, row 0 at the top.
pub fn pixel_elements(mesh: &Mesh, n: usize) -> Vec<Option<usize>> {
    let r = mesh.radius();
    let step = 2.0 * r / n as f64;
    let to_col = |x: f64| (x + r) / step - 0.5;
    let to_row = |y: f64| (r - y) / step - 0.5;
    let mut out = vec![None; n * n];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let p = tri.map(|i| mesh.nodes()[i]);
        let xs = p.map(|q| to_col(q[0]));
        let ys = p.map(|q| to_row(q[1]));
        let clamp = |v: f64| v.max(0.0).min((n - 1) as f64);
        let c0 = clamp(xs.iter().copied().fold(f64::INFINITY, f64::min).ceil()) as usize;
        let c1 = clamp(xs.iter().copied().fold(f64::NEG_INFINITY, f64::max).floor()) as usize;
        let r0 = clamp(ys.iter().copied().fold(f64::INFINITY, f64::min).ceil()) as usize;
        let r1 = clamp(ys.iter().copied().fold(f64::NEG_INFINITY, f64::max).floor()) as usize;
        let area2 = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        for row in r0..=r1 {
            for col in c0..=c1 {
                let x = -r + (col as f64 + 0.5) * step;
                let y = r - (row as f64 + 0.5) * step;
                let edge = |a: [f64; 2], b: [f64; 2]| (b[0] - a[0]) * (y - a[1]) - (x - a[0]) * (b[1] - a[1]);
                let w = [edge(p[1], p[2]), edge(p[2], p[0]), edge(p[0], p[1])];
                let inside = w.iter().all(|&v| v * area2.signum() >= -1e-15 * area2.abs());
                if inside && out[row * n + col].is_none() {
                    out[row * n + col] = Some(t);
                }
            }
        }
    }
    out
}

fn pgm(n: usize, values: impl Iterator<Item = u8>) -> String {
    let mut s = format!("P2\n{n} {n}\n255\n");
    for (i, v) in values.enumerate() {
        let _ = write!(s, "{v}");
        s.push(if (i + 1) % n == 0 { '\n' } else { ' ' });
    }
    s
}

/// Region in black, rest of the disk in white, outside the disk mid-grey.
pub fn indicator_pgm(pixels: &[Option<usize>], n: usize, region: &RegionIndicator) -> String {
    pgm(
        n,
        pixels.iter().map(|p| match p {
            None => 128,
            Some(t) if region.per_element[*t] => 0,
            Some(_) => 255,
        }),
    )
}

/// White on pixels where the true indicator changes to a 4-neighbour.
pub fn boundary_pgm(pixels: &[Option<usize>], n: usize, truth: &RegionIndicator) -> String {
    let flag = |i: usize| pixels[i].is_some_and(|t| truth.per_element[t]);
    pgm(
        n,
        (0..n * n).map(|i| {
            let (row, col) = (i / n, i % n);
            let here = flag(i);
            let mut neighbours = Vec::with_capacity(4);
            if row > 0 {
                neighbours.push(i - n);
            }
            if row + 1 < n {
                neighbours.push(i + n);
            }
            if col > 0 {
                neighbours.push(i - 1);
            }
            if col + 1 < n {
                neighbours.push(i + 1);
            }
            if here && neighbours.iter().any(|&j| !flag(j)) {
                255
            } else {
                0
            }
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use kernel_ert::generate_disk_mesh;

    #[test]
    fn raster_covers_disk_only() {
        let mesh = generate_disk_mesh(1.0, 32, 8).unwrap();
        let n = 40;
        let px = pixel_elements(&mesh, n);
        assert!(px[0].is_none());
        assert!(px[(n / 2) * n + n / 2].is_some());
        let covered = px.iter().filter(|p| p.is_some()).count() as f64;
        let frac = covered / (n * n) as f64;
        assert!((frac - std::f64::consts::PI / 4.0).abs() < 0.03, "{frac}");
    }

    #[test]
    fn pgm_layout() {
        let mesh = generate_disk_mesh(1.0, 16, 4).unwrap();
        let px = pixel_elements(&mesh, 16);
        let full = RegionIndicator::full(mesh.n_triangles());
        let text = indicator_pgm(&px, 16, &full);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(&lines[..3], &["P2", "16 16", "255"]);
        assert_eq!(lines.len(), 3 + 16);
        let edge = boundary_pgm(&px, 16, &full);
        assert!(edge.contains("255 "));
    }

    #[test]
    fn hashes_are_stable() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}

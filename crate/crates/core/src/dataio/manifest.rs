//! Plain-text dataset manifest.
//!
//! One entry per line: `name path sha256 n dim`. `path` is relative to the
//! manifest's directory; a sha256 of `-` disables the checksum for that entry.
//! Blank lines and `#` comments are ignored.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::dataio::{read_libsvm_file, DataError, Dataset};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub name: String,
    pub path: PathBuf,
    pub sha256: Option<String>,
    pub n: usize,
    pub dim: usize,
}

#[derive(Clone, Debug, Default)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn parse(text: &str, base: &Path) -> Result<Self, DataError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [name, path, sha, n, dim] = fields.as_slice() else {
                return Err(DataError::Manifest(format!(
                    "line {}: expected `name path sha256 n dim`",
                    i + 1
                )));
            };
            let num = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| DataError::Manifest(format!("line {}: bad count {s:?}", i + 1)))
            };
            entries.push(ManifestEntry {
                name: name.to_string(),
                path: base.join(path),
                sha256: (*sha != "-").then(|| sha.to_ascii_lowercase()),
                n: num(n)?,
                dim: num(dim)?,
            });
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = fs::read_to_string(path)
            .map_err(|e| DataError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn get(&self, name: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

pub(crate) fn sha256_file(path: &Path) -> Result<String, DataError> {
    let mut file =
        fs::File::open(path).map_err(|e| DataError::Io(format!("{}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let k = file.read(&mut buf)?;
        if k == 0 {
            break;
        }
        hasher.update(&buf[..k]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

impl ManifestEntry {
    pub fn exists(&self) -> bool {
        self.path.is_file()
    }

    /// Verifies the checksum, parses, pads to the expected dimension, and
    /// fails if the shape differs from the manifest.
    pub fn load<S: Scalar>(&self) -> Result<Dataset<S>, DataError> {
        if let Some(expected) = &self.sha256 {
            let actual = sha256_file(&self.path)?;
            if &actual != expected {
                return Err(DataError::Checksum {
                    name: self.name.clone(),
                    expected: expected.clone(),
                    actual,
                });
            }
        }
        let ds: Dataset<S> = read_libsvm_file(&self.path)?;
        let shape_err = |n, dim| DataError::Shape {
            name: self.name.clone(),
            expected_n: self.n,
            expected_dim: self.dim,
            n,
            dim,
        };
        if ds.len() != self.n || ds.dim() > self.dim {
            return Err(shape_err(ds.len(), ds.dim()));
        }
        let ds = ds.with_dim(self.dim)?;
        let name = self.name.clone();
        Dataset::new(ds.samples().to_vec(), ds.dim(), &name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_validate() {
        let dir = std::env::temp_dir().join(format!("localsgd-manifest-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        fs::write(dir.join("toy.svm"), "+1 1:1\n-1 2:1\n").unwrap();
        let sha = sha256_file(&dir.join("toy.svm")).unwrap();
        let text = format!(
            "# name path sha n dim\ntoy toy.svm {sha} 2 4\nloose toy.svm - 2 2\nbad toy.svm {} 2 2\nwrong toy.svm - 3 2\n",
            "0".repeat(64)
        );
        fs::write(dir.join("MANIFEST"), text).unwrap();
        let m = Manifest::load(&dir.join("MANIFEST")).unwrap();
        assert_eq!(m.entries.len(), 4);

        let toy: Dataset<f64> = m.get("toy").unwrap().load().unwrap();
        assert_eq!((toy.len(), toy.dim(), toy.name()), (2, 4, "toy"));
        assert!(m.get("loose").unwrap().load::<f64>().is_ok());
        assert!(matches!(m.get("bad").unwrap().load::<f64>(), Err(DataError::Checksum { .. })));
        assert!(matches!(m.get("wrong").unwrap().load::<f64>(), Err(DataError::Shape { .. })));
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn rejects_short_lines() {
        assert!(Manifest::parse("a9a a9a.txt", Path::new(".")).is_err());
    }
}

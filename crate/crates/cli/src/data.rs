//! Dataset resolution and problem construction.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use localsgd::dataio::{generate_synthetic, partition, read_libsvm_file, Dataset, Manifest, Regime};
use localsgd::objective::{solve_reference, Problem, ReferenceSolution, SolverOptions};

use crate::config::DatasetSpec;
use crate::{CliError, CliResult};

pub const DATA_DIR_ENV: &str = "LOCALSGD_DATA_DIR";
pub const MANIFEST_FILE: &str = "MANIFEST";

pub fn manifest_path(data_dir: &Path) -> PathBuf {
    data_dir.join(MANIFEST_FILE)
}

/// Loads (or generates) the dataset a spec names. Manifest entries are
/// checksum-verified; a missing file is a data error.
pub fn load_dataset(spec: &DatasetSpec, data_dir: &Path) -> CliResult<Arc<Dataset<f64>>> {
    let ds = match spec {
        DatasetSpec::Synthetic(s) => generate_synthetic(s)?,
        DatasetSpec::File(p) => read_libsvm_file(p)?,
        DatasetSpec::Named(name) => {
            let path = manifest_path(data_dir);
            let manifest = Manifest::load(&path)?;
            let entry = manifest
                .get(name)
                .ok_or_else(|| CliError::Data(format!("{name} is not listed in {}", path.display())))?;
            if !entry.exists() {
                return Err(CliError::Data(format!("{name} is missing at {}", entry.path.display())));
            }
            entry.load()?
        }
    };
    Ok(Arc::new(ds))
}

/// Like [`load_dataset`] for a manifest entry, but `None` when the file is
/// simply absent.
pub fn load_optional(name: &str, data_dir: &Path) -> CliResult<Option<Arc<Dataset<f64>>>> {
    let path = manifest_path(data_dir);
    if !path.is_file() {
        return Ok(None);
    }
    let manifest = Manifest::load(&path)?;
    match manifest.get(name) {
        Some(e) if e.exists() => Ok(Some(Arc::new(e.load()?))),
        _ => Ok(None),
    }
}

pub fn build_problem(
    ds: &Arc<Dataset<f64>>,
    nodes: usize,
    regime: Regime,
    lambda: Option<f64>,
) -> CliResult<Problem<f64>> {
    let lambda = lambda.unwrap_or_else(|| Problem::<f64>::default_lambda(ds.len()));
    let part = partition(ds.len(), nodes, regime)?;
    Ok(Problem::new(ds.clone(), part, lambda)?)
}

pub fn reference_for(problem: &Problem<f64>) -> CliResult<ReferenceSolution<f64>> {
    Ok(solve_reference(problem, &SolverOptions::default())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_datasets_need_a_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let e = load_dataset(&DatasetSpec::Named("a9a".into()), dir.path()).unwrap_err();
        assert_eq!(e.exit_code(), 3);
        assert!(load_optional("a9a", dir.path()).unwrap().is_none());

        std::fs::write(dir.path().join("tiny.svm"), "+1 1:0.5 2:1\n-1 2:-1\n").unwrap();
        std::fs::write(manifest_path(dir.path()), "tiny tiny.svm - 2 2\nghost ghost.svm - 1 1\n").unwrap();
        let ds = load_dataset(&DatasetSpec::Named("tiny".into()), dir.path()).unwrap();
        assert_eq!((ds.len(), ds.dim()), (2, 2));
        assert!(load_optional("tiny", dir.path()).unwrap().is_some());
        assert!(load_optional("ghost", dir.path()).unwrap().is_none());
        assert_eq!(load_dataset(&DatasetSpec::Named("ghost".into()), dir.path()).unwrap_err().exit_code(), 3);
    }

    #[test]
    fn default_lambda_is_one_over_n() {
        let ds = load_dataset(&"synthetic:n=50,dim=4".parse().unwrap(), Path::new(".")).unwrap();
        let p = build_problem(&ds, 2, Regime::Heterogeneous, None).unwrap();
        assert_eq!(p.lambda(), 1.0 / 50.0);
    }
}

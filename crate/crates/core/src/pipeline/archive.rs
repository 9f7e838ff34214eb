//! Model archives: a zip container holding `manifest.json` and one
//! `stage_NNN/params.bin` per fitted stage.
//!
//! Entries are written in a fixed order with a fixed timestamp, so saving the same
//! model twice produces identical bytes.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, Cursor, Read, Seek, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use zip::write::SimpleFileOptions;
use zip::{CompressionMethod, DateTime, ZipArchive, ZipWriter};

use super::model::PipelineModel;
use super::params::{ParamReader, ParamWriter};
use super::stage::{Transformer, TransformerLoader};
use crate::error::{Error, ErrorKind, Result};
use crate::schema::Schema;

pub const ARCHIVE_FORMAT: &str = "dvml-model";
pub const ARCHIVE_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    format_version: u32,
    stage_count: usize,
    input_schema: Schema,
    stages: Vec<ManifestStage>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestStage {
    dir: String,
    op: String,
    output_schema: Schema,
}

fn stage_dir(k: usize) -> String {
    format!("stage_{k:03}")
}

/// Loader for a fitted stage's op id.
pub fn loader_for(op: &str) -> Option<TransformerLoader> {
    crate::transforms::LOADERS
        .iter()
        .chain(crate::learners::LOADERS)
        .find(|(id, _)| *id == op)
        .map(|(_, f)| *f)
}

/// Every op id an archive may contain, sorted.
pub fn loadable_ops() -> Vec<&'static str> {
    let mut ops: Vec<_> = crate::transforms::LOADERS
        .iter()
        .chain(crate::learners::LOADERS)
        .map(|(id, _)| *id)
        .collect();
    ops.sort_unstable();
    ops
}

impl PipelineModel {
    pub fn write_archive<W: Write + Seek>(&self, out: W) -> Result<W> {
        let manifest = Manifest {
            format: ARCHIVE_FORMAT.to_string(),
            format_version: ARCHIVE_VERSION,
            stage_count: self.stages().len(),
            input_schema: (**self.input_schema()).clone(),
            stages: self
                .stages()
                .iter()
                .zip(self.stage_schemas())
                .enumerate()
                .map(|(k, (t, s))| ManifestStage {
                    dir: stage_dir(k),
                    op: t.op_id().to_string(),
                    output_schema: s.clone(),
                })
                .collect(),
        };
        let opts = SimpleFileOptions::default()
            .compression_method(CompressionMethod::Deflated)
            .last_modified_time(DateTime::default())
            .unix_permissions(0o644);
        let mut zip = ZipWriter::new(out);
        zip.start_file(MANIFEST, opts)?;
        serde_json::to_writer_pretty(&mut zip, &manifest)?;
        for (k, t) in self.stages().iter().enumerate() {
            let mut w = ParamWriter::new();
            t.save_params(&mut w);
            zip.start_file(format!("{}/params.bin", stage_dir(k)), opts)?;
            zip.write_all(&w.finish())?;
        }
        Ok(zip.finish()?)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        Ok(self.write_archive(Cursor::new(Vec::new()))?.into_inner())
    }

    /// Writes the archive to `path` through a sibling temporary file, so a failed save
    /// leaves no partial archive behind.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(format!(".tmp{}", std::process::id()));
        let tmp = std::path::PathBuf::from(tmp);
        std::fs::write(&tmp, &bytes)?;
        std::fs::rename(&tmp, path).inspect_err(|_| {
            let _ = std::fs::remove_file(&tmp);
        })?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<PipelineModel> {
        Self::read_archive(BufReader::new(File::open(path)?))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<PipelineModel> {
        Self::read_archive(Cursor::new(bytes))
    }

    /// Reads an archive. Stage directories must run contiguously from `stage_000` and
    /// match the manifest's stage count; every stage's schema is recomputed and
    /// checked against the manifest.
    pub fn read_archive<R: Read + Seek>(input: R) -> Result<PipelineModel> {
        let mut zip = ZipArchive::new(input).map_err(|e| Error::corruption(format!("not a model archive: {e}")))?;
        let manifest: Manifest = {
            let file = zip
                .by_name(MANIFEST)
                .map_err(|_| Error::corruption("archive has no manifest.json"))?;
            serde_json::from_reader(file).map_err(|e| Error::corruption(format!("bad manifest: {e}")))?
        };
        if manifest.format != ARCHIVE_FORMAT {
            return Err(Error::corruption(format!("unexpected archive format '{}'", manifest.format)));
        }
        if manifest.format_version != ARCHIVE_VERSION {
            return Err(ErrorKind::Version {
                found: manifest.format_version,
                supported: ARCHIVE_VERSION,
            }
            .into());
        }
        if manifest.stages.len() != manifest.stage_count {
            return Err(Error::corruption(format!(
                "manifest declares {} stages but lists {}",
                manifest.stage_count,
                manifest.stages.len()
            )));
        }
        let mut dirs = BTreeSet::new();
        for name in zip.file_names() {
            let name = name?;
            if let Some((dir, _)) = name.split_once('/') {
                dirs.insert(dir.to_string());
            }
        }
        let expected: BTreeSet<String> = (0..manifest.stage_count).map(stage_dir).collect();
        if let Some(missing) = expected.difference(&dirs).next() {
            return Err(Error::corruption(format!("stage directory {missing} is missing")));
        }
        if let Some(extra) = dirs.difference(&expected).next() {
            return Err(Error::corruption(format!("unexpected directory {extra} in archive")));
        }

        let mut stages: Vec<Arc<dyn Transformer>> = Vec::with_capacity(manifest.stage_count);
        for (k, entry) in manifest.stages.iter().enumerate() {
            if entry.dir != stage_dir(k) {
                return Err(Error::corruption(format!("stage {k} lists directory '{}'", entry.dir)));
            }
            let loader = loader_for(&entry.op).ok_or_else(|| ErrorKind::UnknownOperator(entry.op.clone()))?;
            let mut bytes = Vec::new();
            zip.by_name(&format!("{}/params.bin", entry.dir))
                .map_err(|_| Error::corruption(format!("{}/params.bin is missing", entry.dir)))?
                .read_to_end(&mut bytes)?;
            let reader = ParamReader::parse(&bytes)?;
            stages.push(loader(&reader)?);
        }
        let model = PipelineModel::from_parts(Arc::new(manifest.input_schema), stages)
            .map_err(|e| Error::corruption(format!("stages do not fit the recorded input schema: {e}")))?;
        for (k, (got, entry)) in model.stage_schemas().iter().zip(&manifest.stages).enumerate() {
            if *got != entry.output_schema {
                return Err(Error::corruption(format!(
                    "stage {k} ({}) produces a schema that differs from the manifest",
                    entry.op
                )));
            }
        }
        Ok(model)
    }
}

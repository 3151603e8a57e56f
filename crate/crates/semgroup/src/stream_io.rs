//! Stream files: a JSON-lines file whose first line is a header and whose
//! remaining lines hold one task each, plus a ground-truth label sidecar.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use semgroup_core::learner::TaskDataset;
use semgroup_core::scenarios::{ScenarioConfig, ScenarioStream, ScenarioTask};
use serde::{Deserialize, Serialize};

pub const FORMAT: &str = "semgroup-stream/1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    tasks: usize,
    /// Regenerates the backbone and documents the stream.
    config: ScenarioConfig,
    /// Informational only; infinities are written as null.
    certificate: serde_json::Value,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskLine {
    task: usize,
    semantic: usize,
    train: TaskDataset,
    test: TaskDataset,
}

/// What `load_stream` gives back: enough to run experiments.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedStream {
    pub config: ScenarioConfig,
    pub tasks: Vec<ScenarioTask>,
    pub true_semantic: Vec<usize>,
}

impl From<ScenarioStream> for LoadedStream {
    fn from(s: ScenarioStream) -> Self {
        Self { config: s.config, tasks: s.tasks, true_semantic: s.true_semantic }
    }
}

/// `stream.jsonl` -> `stream.truth`.
pub fn truth_path(stream: &Path) -> PathBuf {
    stream.with_extension("truth")
}

/// Writes `contents` to a temporary file beside `path`, then renames it
/// over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> anyhow::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn encode_stream(stream: &ScenarioStream) -> anyhow::Result<Vec<u8>> {
    let mut out = Vec::new();
    let header = Header {
        format: FORMAT.into(),
        tasks: stream.tasks.len(),
        config: stream.config.clone(),
        certificate: serde_json::to_value(&stream.certificate)?,
    };
    serde_json::to_writer(&mut out, &header)?;
    out.push(b'\n');
    for (i, t) in stream.tasks.iter().enumerate() {
        let line = TaskLine { task: i, semantic: stream.true_semantic[i], train: t.train.clone(), test: t.test.clone() };
        serde_json::to_writer(&mut out, &line)?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn encode_labels(labels: &[usize]) -> Vec<u8> {
    labels.iter().map(|l| format!("{l}\n")).collect::<String>().into_bytes()
}

/// Writes the stream file and its truth sidecar.
pub fn save_stream(path: &Path, stream: &ScenarioStream) -> anyhow::Result<PathBuf> {
    write_atomic(path, &encode_stream(stream)?)?;
    let truth = truth_path(path);
    write_atomic(&truth, &encode_labels(&stream.true_semantic))?;
    Ok(truth)
}

pub fn load_stream(path: &Path) -> anyhow::Result<LoadedStream> {
    let file = File::open(path).with_context(|| format!("opening stream {}", path.display()))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines.next().context("stream file is empty")??;
    let header: Header = serde_json::from_str(&first).context("stream header")?;
    ensure!(header.format == FORMAT, "unsupported stream format {:?}", header.format);
    header.config.validate()?;
    let mut tasks = Vec::with_capacity(header.tasks);
    let mut truth = Vec::with_capacity(header.tasks);
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: TaskLine = serde_json::from_str(&line).with_context(|| format!("stream line {}", n + 2))?;
        ensure!(t.task == tasks.len(), "stream line {}: expected task {}, found {}", n + 2, tasks.len(), t.task);
        // Deserializing skips the dataset checks; redo them.
        let train = TaskDataset::new(t.train.instances().to_vec())?;
        let test = TaskDataset::new(t.test.instances().to_vec())?;
        tasks.push(ScenarioTask { train, test });
        truth.push(t.semantic);
    }
    if tasks.len() != header.tasks {
        bail!("header announces {} tasks, file has {}", header.tasks, tasks.len());
    }
    Ok(LoadedStream { config: header.config, tasks, true_semantic: truth })
}

/// Reads a label file: one integer per line (blank lines ignored) or a
/// JSON array of integers.
pub fn load_labels(path: &Path) -> anyhow::Result<Vec<usize>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading labels {}", path.display()))?;
    if text.trim_start().starts_with('[') {
        return serde_json::from_str(&text).with_context(|| format!("labels in {}", path.display()));
    }
    text.split_whitespace()
        .enumerate()
        .map(|(i, tok)| tok.parse().with_context(|| format!("{}: label {} is {tok:?}", path.display(), i + 1)))
        .collect()
}

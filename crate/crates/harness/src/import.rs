//! Converts a per-participant pose dataset into canonical trace files.
//!
//! Accepted layout: a directory of `.csv` or `.txt` files, one per
//! participant, whose file stem ends in the participant number
//! (`P07.csv`, `participant_7.txt`, `user7_pose.csv` all give 7). Each
//! non-blank, non-`#` line holds the pose of one frame as comma-,
//! semicolon- or whitespace-separated numbers: either
//! `tx ty tz yaw pitch roll` or a leading frame/timestamp column followed
//! by those six. Positions are meters, angles degrees. One header line is
//! allowed before the data. Only the first `frames` rows are kept.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use marqoe_core::trace::{save_trace, trace_file_name};
use marqoe_core::{Pose, PoseTrace};

#[derive(Debug, thiserror::Error)]
pub enum ImportError {
    #[error("unsupported dataset layout: {0}")]
    UnsupportedLayout(String),
    #[error("{}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Trace(#[from] marqoe_core::TraceError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImportOptions {
    /// Participants expected, numbered `1..=participants`.
    pub participants: u32,
    pub frames: usize,
    pub frame_rate: f64,
}

impl Default for ImportOptions {
    fn default() -> Self {
        Self {
            participants: 40,
            frames: 300,
            frame_rate: 30.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImportSummary {
    pub written: Vec<PathBuf>,
    /// Expected participants with no file.
    pub missing: Vec<u32>,
    /// Participants whose file was present but unusable, with the reason.
    pub skipped: Vec<(u32, String)>,
}

impl ImportSummary {
    pub fn is_partial(&self) -> bool {
        !self.missing.is_empty() || !self.skipped.is_empty()
    }
}

fn participant_id(path: &Path) -> Option<u32> {
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    if ext != "csv" && ext != "txt" {
        return None;
    }
    let stem = path.file_stem()?.to_str()?;
    let digits: String = stem
        .chars()
        .rev()
        .skip_while(|c| !c.is_ascii_digit())
        .take_while(|c| c.is_ascii_digit())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().ok()
}

fn parse_row(line: &str) -> Option<Vec<f64>> {
    line.split(|c: char| c == ',' || c == ';' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().ok())
        .collect()
}

/// Poses of one participant file, at most `frames` of them.
pub fn read_participant(path: &Path, frames: usize) -> Result<Vec<Pose>, ImportError> {
    let text = fs::read_to_string(path).map_err(|source| ImportError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut poses = Vec::new();
    let mut width: Option<usize> = None;
    let mut header_seen = false;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fail = |msg: String| ImportError::UnsupportedLayout(format!("{}:{}: {msg}", path.display(), i + 1));
        let Some(row) = parse_row(line) else {
            if header_seen || width.is_some() {
                return Err(fail("non-numeric row".into()));
            }
            header_seen = true;
            continue;
        };
        let offset = match row.len() {
            6 => 0,
            7 => 1,
            n => return Err(fail(format!("expected 6 or 7 columns, found {n}"))),
        };
        if width.is_some_and(|w| w != row.len()) {
            return Err(fail("column count changed".into()));
        }
        width = Some(row.len());
        poses.push(Pose::from_array(std::array::from_fn(|c| row[offset + c])));
        if poses.len() == frames {
            break;
        }
    }
    Ok(poses)
}

/// Writes `user_<n>.csv` for every usable participant file in `dataset`.
pub fn import_dataset(dataset: &Path, out: &Path, opts: &ImportOptions) -> Result<ImportSummary, ImportError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ImportError::Io { path, source }
    };
    let mut by_id: BTreeMap<u32, PathBuf> = BTreeMap::new();
    for entry in fs::read_dir(dataset).map_err(io(dataset))? {
        let path = entry.map_err(io(dataset))?.path();
        if !path.is_file() {
            continue;
        }
        if let Some(id) = participant_id(&path) {
            if let Some(other) = by_id.insert(id, path.clone()) {
                return Err(ImportError::UnsupportedLayout(format!(
                    "participant {id} appears in both {} and {}",
                    other.display(),
                    path.display()
                )));
            }
        }
    }
    if by_id.is_empty() {
        return Err(ImportError::UnsupportedLayout(format!(
            "no numbered .csv/.txt participant files in {}",
            dataset.display()
        )));
    }
    fs::create_dir_all(out).map_err(io(out))?;

    let mut summary = ImportSummary::default();
    for id in 1..=opts.participants {
        let Some(path) = by_id.get(&id) else {
            warn!("participant {id}: no file, skipped");
            summary.missing.push(id);
            continue;
        };
        let poses = read_participant(path, opts.frames)?;
        if poses.len() < opts.frames {
            let reason = format!("{} rows, need {}", poses.len(), opts.frames);
            warn!("participant {id}: {reason}, skipped");
            summary.skipped.push((id, reason));
            continue;
        }
        let user = id.to_string();
        let trace = match PoseTrace::new(user.as_str(), opts.frame_rate, poses) {
            Ok(t) => t,
            Err(e) => {
                warn!("participant {id}: {e}, skipped");
                summary.skipped.push((id, e.to_string()));
                continue;
            }
        };
        let target = out.join(trace_file_name(&user));
        save_trace(&trace, &target)?;
        summary.written.push(target);
    }
    for id in by_id.keys().filter(|&&id| id == 0 || id > opts.participants) {
        warn!("participant {id} outside 1..={}, ignored", opts.participants);
    }
    Ok(summary)
}

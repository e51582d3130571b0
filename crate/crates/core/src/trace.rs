//! 6DoF pose traces: the canonical CSV format, validation, and uniform
//! frame selection at an upload frequency.
//!
//! A trace file holds one row per camera frame:
//!
//! ```text
//! frame,tx,ty,tz,theta_x,theta_y,theta_z
//! 0,0.0,1.6,-2.0,0.0,0.0,0.0
//! ```
//!
//! Positions are meters, rotations are Euler angles in degrees
//! (`theta_x` yaw, `theta_y` pitch, `theta_z` roll) normalised into
//! `[-180, 180)`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CSV_HEADER: [&str; 7] = ["frame", "tx", "ty", "tz", "theta_x", "theta_y", "theta_z"];

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("I/O error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("non-finite value at line {line} in column {column}")]
    NonFinite { line: usize, column: &'static str },
    #[error("upload frequency {lambda} Hz outside (0, {frame_rate}] Hz")]
    Frequency { lambda: f64, frame_rate: f64 },
}

/// Wraps an angle in degrees into `[-180, 180)`.
pub fn normalize_degrees(angle: f64) -> f64 {
    if (-180.0..180.0).contains(&angle) {
        return angle;
    }
    let wrapped = (angle + 180.0).rem_euclid(360.0) - 180.0;
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if wrapped >= 180.0 {
        wrapped - 360.0
    } else {
        wrapped
    }
}

/// Device pose: translation in meters, yaw/pitch/roll in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Pose {
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
    pub theta_x: f64,
    pub theta_y: f64,
    pub theta_z: f64,
}

impl Pose {
    pub const DIM: usize = 6;
    /// Components `3..6` are angles.
    pub const ANGLE_START: usize = 3;

    pub fn new(position: [f64; 3], rotation_deg: [f64; 3]) -> Self {
        Self::from_array([
            position[0],
            position[1],
            position[2],
            rotation_deg[0],
            rotation_deg[1],
            rotation_deg[2],
        ])
    }

    /// Builds a pose from `[tx, ty, tz, yaw, pitch, roll]`, normalising angles.
    pub fn from_array(v: [f64; 6]) -> Self {
        Self {
            tx: v[0],
            ty: v[1],
            tz: v[2],
            theta_x: normalize_degrees(v[3]),
            theta_y: normalize_degrees(v[4]),
            theta_z: normalize_degrees(v[5]),
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.tx, self.ty, self.tz, self.theta_x, self.theta_y, self.theta_z]
    }

    pub fn position(&self) -> [f64; 3] {
        [self.tx, self.ty, self.tz]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn is_angle_component(index: usize) -> bool {
        index >= Self::ANGLE_START
    }
}

/// Time-ordered poses of one user at a fixed frame rate. Frame `i` is `poses[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseTrace {
    user_id: String,
    frame_rate: f64,
    poses: Vec<Pose>,
}

impl PoseTrace {
    pub fn new(user_id: impl Into<String>, frame_rate: f64, poses: Vec<Pose>) -> Result<Self, TraceError> {
        if !(frame_rate.is_finite() && frame_rate > 0.0) {
            return Err(TraceError::Integrity(format!(
                "frame rate must be positive, got {frame_rate}"
            )));
        }
        if poses.is_empty() {
            return Err(TraceError::Integrity("trace has no poses".into()));
        }
        if let Some(i) = poses.iter().position(|p| !p.is_finite()) {
            return Err(TraceError::Integrity(format!("pose at frame {i} is not finite")));
        }
        let poses = poses.into_iter().map(|p| Pose::from_array(p.to_array())).collect();
        Ok(Self {
            user_id: user_id.into(),
            frame_rate,
            poses,
        })
    }

    pub fn user_id(&self) -> &str {
        &self.user_id
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn pose(&self, frame: usize) -> Option<&Pose> {
        self.poses.get(frame)
    }

    /// Same poses under another user id.
    pub fn with_user_id(mut self, user_id: impl Into<String>) -> Self {
        self.user_id = user_id.into();
        self
    }
}

/// Stride used to select frames for upload: `round(frame_rate / lambda)`,
/// rounding halves up, never below 1.
pub fn stride_for(frame_rate: f64, lambda: f64) -> usize {
    ((frame_rate / lambda + 0.5).floor() as usize).max(1)
}

/// The uniformly selected upload frames of a trace.
#[derive(Debug, Clone)]
pub struct SampledTrace {
    source: Arc<PoseTrace>,
    upload_frequency: f64,
    stride: usize,
    selected: Vec<usize>,
}

impl SampledTrace {
    pub fn source(&self) -> &PoseTrace {
        &self.source
    }

    pub fn upload_frequency(&self) -> f64 {
        self.upload_frequency
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn selected_indices(&self) -> &[usize] {
        &self.selected
    }

    pub fn is_selected(&self, frame: usize) -> bool {
        frame.is_multiple_of(self.stride) && frame < self.source.len()
    }
}

/// Selects frames `0, s, 2s, ...` with `s = round(frame_rate / lambda)`.
pub fn downsample(trace: impl Into<Arc<PoseTrace>>, lambda: f64) -> Result<SampledTrace, TraceError> {
    let source = trace.into();
    let frame_rate = source.frame_rate();
    if !(lambda.is_finite() && lambda > 0.0 && lambda <= frame_rate) {
        return Err(TraceError::Frequency { lambda, frame_rate });
    }
    let stride = stride_for(frame_rate, lambda);
    let selected = (0..source.len()).step_by(stride).collect();
    Ok(SampledTrace {
        source,
        upload_frequency: lambda,
        stride,
        selected,
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TraceError + '_ {
    move |source| TraceError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Loads a canonical trace CSV. Rows may appear in any order but frame
/// numbers must form `0..n` without gaps or duplicates.
pub fn load_trace(path: impl AsRef<Path>, user_id: &str, frame_rate: f64) -> Result<PoseTrace, TraceError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    read_trace(file, user_id, frame_rate)
}

pub fn read_trace<R: Read>(reader: R, user_id: &str, frame_rate: f64) -> Result<PoseTrace, TraceError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| TraceError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if header.is_empty() {
        return Err(TraceError::Integrity("empty trace file".into()));
    }
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(TraceError::Parse {
            line: 1,
            message: format!("expected header `{}`", CSV_HEADER.join(",")),
        });
    }

    let mut rows: Vec<(usize, Pose)> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| TraceError::Parse {
            line,
            message: e.to_string(),
        })?;
        if record.len() != CSV_HEADER.len() {
            return Err(TraceError::Parse {
                line,
                message: format!("expected {} fields, found {}", CSV_HEADER.len(), record.len()),
            });
        }
        let frame: usize = record[0].parse().map_err(|_| TraceError::Parse {
            line,
            message: format!("frame `{}` is not a non-negative integer", &record[0]),
        })?;
        let mut values = [0.0f64; 6];
        for (k, value) in values.iter_mut().enumerate() {
            let raw = &record[k + 1];
            *value = raw.parse().map_err(|_| TraceError::Parse {
                line,
                message: format!("{} `{raw}` is not a number", CSV_HEADER[k + 1]),
            })?;
            if !value.is_finite() {
                return Err(TraceError::NonFinite {
                    line,
                    column: CSV_HEADER[k + 1],
                });
            }
        }
        rows.push((frame, Pose::from_array(values)));
    }

    if rows.is_empty() {
        return Err(TraceError::Integrity("trace file has no rows".into()));
    }
    rows.sort_by_key(|(frame, _)| *frame);
    for (expected, (frame, _)) in rows.iter().enumerate() {
        if *frame != expected {
            return Err(TraceError::Integrity(format!(
                "frame indices not contiguous: expected {expected}, found {frame}"
            )));
        }
    }
    PoseTrace::new(user_id, frame_rate, rows.into_iter().map(|(_, p)| p).collect())
}

pub fn save_trace(trace: &PoseTrace, path: impl AsRef<Path>) -> Result<(), TraceError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    write_trace(trace, file).map_err(io_err(path))
}

/// Writes the canonical CSV. Floats use Rust's shortest round-trip form so
/// a reload reproduces the trace exactly.
pub fn write_trace<W: Write>(trace: &PoseTrace, writer: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for (frame, pose) in trace.poses().iter().enumerate() {
        let mut row = vec![frame.to_string()];
        row.extend(pose.to_array().iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()
}

/// Canonical file name for a user's trace.
pub fn trace_file_name(user_id: &str) -> String {
    format!("user_{user_id}.csv")
}

/// Recovers the user id from a `user_<id>.csv` file name.
pub fn user_id_from_file_name(name: &str) -> Option<&str> {
    name.strip_prefix("user_")?
        .strip_suffix(".csv")
        .filter(|id| !id.is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn flat_trace(n: usize) -> PoseTrace {
        let poses = (0..n)
            .map(|i| Pose::new([i as f64 * 0.01, 1.6, -2.0], [0.0; 3]))
            .collect();
        PoseTrace::new("t", 30.0, poses).unwrap()
    }

    fn csv_for(frames: impl Iterator<Item = usize>) -> String {
        let mut s = CSV_HEADER.join(",") + "\n";
        for f in frames {
            s += &format!("{f},0.1,1.5,-2,10,5,0\n");
        }
        s
    }

    #[test]
    fn loads_ten_seconds_at_thirty_fps() {
        let trace = read_trace(csv_for(0..300).as_bytes(), "1", 30.0).unwrap();
        assert_eq!(trace.len(), 300);
        assert_eq!(trace.user_id(), "1");
    }

    #[test]
    fn empty_file_is_integrity_error() {
        assert!(matches!(
            read_trace("".as_bytes(), "1", 30.0),
            Err(TraceError::Integrity(_))
        ));
        let header_only = CSV_HEADER.join(",") + "\n";
        assert!(matches!(
            read_trace(header_only.as_bytes(), "1", 30.0),
            Err(TraceError::Integrity(_))
        ));
    }

    #[test]
    fn angle_270_is_stored_as_minus_90() {
        let text = CSV_HEADER.join(",") + "\n0,0,0,0,270,0,0\n";
        let trace = read_trace(text.as_bytes(), "1", 30.0).unwrap();
        assert_eq!(trace.poses()[0].theta_x, -90.0);
    }

    #[test]
    fn normalization_range() {
        assert_eq!(normalize_degrees(180.0), -180.0);
        assert_eq!(normalize_degrees(-180.0), -180.0);
        assert_eq!(normalize_degrees(540.0), -180.0);
        assert_eq!(normalize_degrees(-190.0), 170.0);
        assert_eq!(normalize_degrees(-1e-18), -1e-18);
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = CSV_HEADER.join(",") + "\n0,0,0,0,0,0,0\n1,0,abc,0,0,0,0\n";
        match read_trace(text.as_bytes(), "1", 30.0) {
            Err(TraceError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gap_in_frames_is_integrity_error() {
        let text = csv_for([0, 1, 3].into_iter());
        assert!(matches!(
            read_trace(text.as_bytes(), "1", 30.0),
            Err(TraceError::Integrity(_))
        ));
    }

    #[test]
    fn nan_value_is_data_error() {
        let text = CSV_HEADER.join(",") + "\n0,0,NaN,0,0,0,0\n";
        assert!(matches!(
            read_trace(text.as_bytes(), "1", 30.0),
            Err(TraceError::NonFinite { line: 2, column: "ty" })
        ));
    }

    #[test]
    fn wrong_header_rejected() {
        let text = "frame,x,y,z,a,b,c\n0,0,0,0,0,0,0\n";
        assert!(matches!(
            read_trace(text.as_bytes(), "1", 30.0),
            Err(TraceError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn downsample_identity_stride() {
        let s = downsample(flat_trace(300), 30.0).unwrap();
        assert_eq!(s.stride(), 1);
        assert_eq!(s.selected_indices(), (0..300).collect::<Vec<_>>().as_slice());
    }

    #[test]
    fn downsample_stride_ten() {
        let s = downsample(flat_trace(300), 3.0).unwrap();
        assert_eq!(
            s.selected_indices(),
            (0..300).step_by(10).collect::<Vec<_>>().as_slice()
        );
        assert_eq!(s.selected_indices().len(), 30);
    }

    #[test]
    fn downsample_seven_hz_enumerated() {
        let s = downsample(flat_trace(300), 7.0).unwrap();
        // 30 / 7 = 4.29 -> stride 4; enumerate multiples of 4 below 300
        let mut expected = Vec::new();
        let mut k = 0;
        while k < 300 {
            expected.push(k);
            k += 4;
        }
        assert_eq!(s.stride(), 4);
        assert_eq!(expected.len(), 75);
        assert_eq!(s.selected_indices(), expected.as_slice());
    }

    #[test]
    fn stride_rounds_half_up() {
        assert_eq!(stride_for(30.0, 12.0), 3); // 2.5
        assert_eq!(stride_for(30.0, 20.0), 2); // 1.5
        assert_eq!(stride_for(30.0, 29.0), 1);
    }

    #[test]
    fn downsample_rejects_bad_frequency() {
        assert!(downsample(flat_trace(10), 0.0).is_err());
        assert!(downsample(flat_trace(10), -1.0).is_err());
        assert!(downsample(flat_trace(10), 31.0).is_err());
    }

    #[test]
    fn file_names() {
        assert_eq!(trace_file_name("7"), "user_7.csv");
        assert_eq!(user_id_from_file_name("user_7.csv"), Some("7"));
        assert_eq!(user_id_from_file_name("user_.csv"), None);
        assert_eq!(user_id_from_file_name("other.csv"), None);
    }

    fn arb_pose() -> impl Strategy<Value = Pose> {
        (
            prop::array::uniform3(-100.0f64..100.0),
            prop::array::uniform3(-720.0f64..720.0),
        )
            .prop_map(|(p, r)| Pose::new(p, r))
    }

    proptest! {
        #[test]
        fn save_load_round_trip(poses in prop::collection::vec(arb_pose(), 1..40)) {
            let trace = PoseTrace::new("rt", 30.0, poses).unwrap();
            let mut buf = Vec::new();
            write_trace(&trace, &mut buf).unwrap();
            let back = read_trace(buf.as_slice(), "rt", 30.0).unwrap();
            prop_assert_eq!(back, trace);
        }

        #[test]
        fn selected_count_is_ceil(n in 1usize..500, lambda in 0.1f64..30.0) {
            let s = downsample(flat_trace(n), lambda).unwrap();
            prop_assert_eq!(s.selected_indices().len(), n.div_ceil(s.stride()));
            prop_assert_eq!(s.selected_indices()[0], 0);
        }

        #[test]
        fn downsample_is_idempotent(n in 1usize..400, lambda in 0.1f64..30.0) {
            let trace = Arc::new(flat_trace(n));
            let first = downsample(trace.clone(), lambda).unwrap();
            let again = downsample(trace, first.upload_frequency()).unwrap();
            prop_assert_eq!(first.selected_indices(), again.selected_indices());
            // reselecting from the selected frames keeps all of them
            let kept: Vec<usize> = first.selected_indices().iter().copied().filter(|&k| first.is_selected(k)).collect();
            prop_assert_eq!(kept.as_slice(), first.selected_indices());
        }

        #[test]
        fn normalized_angles_in_range(a in -1e6f64..1e6) {
            let n = normalize_degrees(a);
            prop_assert!((-180.0..180.0).contains(&n));
            let turns = (a - n) / 360.0;
            prop_assert!((turns - turns.round()).abs() < 1e-6);
        }
    }
}

//! Cell segmentation of the virtual content, per-pose visibility and the
//! virtual content hit rate.
//!
//! World frame is y-up. A pose with zero yaw and pitch looks along `+z`;
//! positive yaw turns towards `+x`, positive pitch looks up, roll spins the
//! image plane about the viewing axis.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::Pose;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("degenerate frustum: {0}")]
    Frustum(String),
}

/// Axis-aligned box split into `nx * ny * nz` equal cells.
///
/// Cell `(ix, iy, iz)` has index `ix + nx * (iy + ny * iz)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellGrid {
    origin: [f64; 3],
    extent: [f64; 3],
    divisions: [usize; 3],
}

impl Default for CellGrid {
    /// A 1 m x 2 m x 0.5 m volume standing on the floor at the world origin,
    /// split 4 x 4 x 2.
    fn default() -> Self {
        Self {
            origin: [-0.5, 0.0, -0.25],
            extent: [1.0, 2.0, 0.5],
            divisions: [4, 4, 2],
        }
    }
}

impl CellGrid {
    pub fn new(origin: [f64; 3], extent: [f64; 3], divisions: [usize; 3]) -> Result<Self, GeometryError> {
        if origin.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::Grid("origin must be finite".into()));
        }
        if extent.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(GeometryError::Grid(format!("extents must be positive, got {extent:?}")));
        }
        if divisions.contains(&0) {
            return Err(GeometryError::Grid(format!(
                "divisions must be positive, got {divisions:?}"
            )));
        }
        Ok(Self {
            origin,
            extent,
            divisions,
        })
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn extent(&self) -> [f64; 3] {
        self.extent
    }

    pub fn divisions(&self) -> [usize; 3] {
        self.divisions
    }

    pub fn cell_count(&self) -> usize {
        self.divisions.iter().product()
    }

    pub fn center(&self) -> [f64; 3] {
        std::array::from_fn(|a| self.origin[a] + 0.5 * self.extent[a])
    }

    pub fn cell_coords(&self, index: usize) -> [usize; 3] {
        let [nx, ny, _] = self.divisions;
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    pub fn cell_index(&self, coords: [usize; 3]) -> usize {
        let [nx, ny, _] = self.divisions;
        coords[0] + nx * (coords[1] + ny * coords[2])
    }

    /// Lower and upper corner of a cell.
    pub fn cell_bounds(&self, index: usize) -> ([f64; 3], [f64; 3]) {
        let c = self.cell_coords(index);
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for a in 0..3 {
            let step = self.extent[a] / self.divisions[a] as f64;
            lo[a] = self.origin[a] + step * c[a] as f64;
            // last cell ends exactly on the box face
            hi[a] = if c[a] + 1 == self.divisions[a] {
                self.origin[a] + self.extent[a]
            } else {
                self.origin[a] + step * (c[a] + 1) as f64
            };
        }
        (lo, hi)
    }

    pub fn cell_center(&self, index: usize) -> [f64; 3] {
        let (lo, hi) = self.cell_bounds(index);
        std::array::from_fn(|a| 0.5 * (lo[a] + hi[a]))
    }

    /// The eight corners followed by the center.
    pub fn cell_sample_points(&self, index: usize) -> [[f64; 3]; 9] {
        let (lo, hi) = self.cell_bounds(index);
        let mut pts = [[0.0; 3]; 9];
        for (corner, pt) in pts.iter_mut().take(8).enumerate() {
            *pt = [
                if corner & 1 == 0 { lo[0] } else { hi[0] },
                if corner & 2 == 0 { lo[1] } else { hi[1] },
                if corner & 4 == 0 { lo[2] } else { hi[2] },
            ];
        }
        pts[8] = self.cell_center(index);
        pts
    }

    /// Index of the cell containing `p`, if inside the box. Upper faces
    /// belong to the last cell along each axis.
    pub fn locate(&self, p: [f64; 3]) -> Option<usize> {
        let mut coords = [0usize; 3];
        for a in 0..3 {
            let rel = (p[a] - self.origin[a]) / self.extent[a];
            if !(0.0..=1.0).contains(&rel) {
                return None;
            }
            coords[a] = ((rel * self.divisions[a] as f64) as usize).min(self.divisions[a] - 1);
        }
        Some(self.cell_index(coords))
    }
}

/// Viewing frustum shape plus the angular bucket size used for occlusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrustumParams {
    pub h_fov_deg: f64,
    pub v_fov_deg: f64,
    pub near: f64,
    pub far: f64,
    pub occlusion_bucket_deg: f64,
}

impl Default for FrustumParams {
    fn default() -> Self {
        Self {
            h_fov_deg: 90.0,
            v_fov_deg: 70.0,
            near: 0.1,
            far: 50.0,
            occlusion_bucket_deg: 2.0,
        }
    }
}

impl FrustumParams {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.near > 0.0 && self.near < self.far && self.far.is_finite()) {
            return Err(GeometryError::Frustum(format!(
                "need 0 < near < far, got near={} far={}",
                self.near, self.far
            )));
        }
        for fov in [self.h_fov_deg, self.v_fov_deg] {
            if !(fov > 0.0 && fov < 180.0) {
                return Err(GeometryError::Frustum(format!("field of view {fov} outside (0, 180)")));
            }
        }
        if !(self.occlusion_bucket_deg > 0.0 && self.occlusion_bucket_deg.is_finite()) {
            return Err(GeometryError::Frustum("occlusion bucket must be positive".into()));
        }
        Ok(())
    }
}

/// Camera frame of a pose.
#[derive(Debug, Clone)]
pub struct Frustum {
    apex: Vector3<f64>,
    forward: Vector3<f64>,
    right: Vector3<f64>,
    up: Vector3<f64>,
    tan_half_h: f64,
    tan_half_v: f64,
    near: f64,
    far: f64,
}

impl Frustum {
    pub fn new(pose: &Pose, params: &FrustumParams) -> Result<Self, GeometryError> {
        params.validate()?;
        let (yaw, pitch, roll) = (
            pose.theta_x.to_radians(),
            pose.theta_y.to_radians(),
            pose.theta_z.to_radians(),
        );
        let forward = Vector3::new(yaw.sin() * pitch.cos(), pitch.sin(), yaw.cos() * pitch.cos());
        let right0 = Vector3::new(yaw.cos(), 0.0, -yaw.sin());
        let up0 = forward.cross(&right0);
        let right = right0 * roll.cos() + up0 * roll.sin();
        let up = up0 * roll.cos() - right0 * roll.sin();
        Ok(Self {
            apex: Vector3::from(pose.position()),
            forward,
            right,
            up,
            tan_half_h: (params.h_fov_deg.to_radians() / 2.0).tan(),
            tan_half_v: (params.v_fov_deg.to_radians() / 2.0).tan(),
            near: params.near,
            far: params.far,
        })
    }

    /// Point in camera coordinates `(x right, y up, z forward)`.
    fn to_camera(&self, p: [f64; 3]) -> Vector3<f64> {
        let d = Vector3::from(p) - self.apex;
        Vector3::new(d.dot(&self.right), d.dot(&self.up), d.dot(&self.forward))
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        let c = self.to_camera(p);
        c.z >= self.near && c.z <= self.far && c.x.abs() <= c.z * self.tan_half_h && c.y.abs() <= c.z * self.tan_half_v
    }

    /// Azimuth/elevation bucket of a point and its distance from the apex.
    fn bucket(&self, p: [f64; 3], bucket_deg: f64) -> ((i64, i64), f64) {
        let c = self.to_camera(p);
        let azimuth = c.x.atan2(c.z).to_degrees();
        let elevation = c.y.atan2(c.x.hypot(c.z)).to_degrees();
        (
            (
                (azimuth / bucket_deg).floor() as i64,
                (elevation / bucket_deg).floor() as i64,
            ),
            c.norm(),
        )
    }
}

/// Set of cell indices, stored as a bitset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct VisibleSet {
    words: Vec<u64>,
}

impl VisibleSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, index: usize) {
        let w = index / 64;
        if self.words.len() <= w {
            self.words.resize(w + 1, 0);
        }
        self.words[w] |= 1 << (index % 64);
    }

    pub fn remove(&mut self, index: usize) {
        if let Some(word) = self.words.get_mut(index / 64) {
            *word &= !(1 << (index % 64));
        }
    }

    pub fn contains(&self, index: usize) -> bool {
        self.words.get(index / 64).is_some_and(|w| w & (1 << (index % 64)) != 0)
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words
            .iter()
            .enumerate()
            .flat_map(|(w, &bits)| (0..64).filter(move |b| bits & (1 << b) != 0).map(move |b| w * 64 + b))
    }

    pub fn is_subset(&self, other: &VisibleSet) -> bool {
        self.words
            .iter()
            .enumerate()
            .all(|(i, &w)| w & !other.words.get(i).copied().unwrap_or(0) == 0)
    }

    fn pair_counts(&self, other: &VisibleSet) -> (usize, usize) {
        let n = self.words.len().max(other.words.len());
        let mut inter = 0;
        let mut union = 0;
        for i in 0..n {
            let a = self.words.get(i).copied().unwrap_or(0);
            let b = other.words.get(i).copied().unwrap_or(0);
            inter += (a & b).count_ones() as usize;
            union += (a | b).count_ones() as usize;
        }
        (inter, union)
    }
}

impl FromIterator<usize> for VisibleSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut set = VisibleSet::new();
        for i in iter {
            set.insert(i);
        }
        set
    }
}

impl Serialize for VisibleSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for VisibleSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(Vec::<usize>::deserialize(d)?.into_iter().collect())
    }
}

/// Cells with any corner or their center inside the frustum of `pose`.
/// With `occlusion`, a candidate is dropped when another candidate whose
/// center falls in the same azimuth/elevation bucket is strictly nearer.
pub fn visible_cells(
    grid: &CellGrid,
    pose: &Pose,
    params: &FrustumParams,
    occlusion: bool,
) -> Result<VisibleSet, GeometryError> {
    let frustum = Frustum::new(pose, params)?;
    let candidates: Vec<usize> = (0..grid.cell_count())
        .filter(|&c| grid.cell_sample_points(c).iter().any(|p| frustum.contains(*p)))
        .collect();
    if !occlusion {
        return Ok(candidates.into_iter().collect());
    }

    let keyed: Vec<(usize, (i64, i64), f64)> = candidates
        .iter()
        .map(|&c| {
            let (bucket, dist) = frustum.bucket(grid.cell_center(c), params.occlusion_bucket_deg);
            (c, bucket, dist)
        })
        .collect();
    let mut nearest: std::collections::HashMap<(i64, i64), f64> = std::collections::HashMap::new();
    for &(_, bucket, dist) in &keyed {
        nearest.entry(bucket).and_modify(|d| *d = d.min(dist)).or_insert(dist);
    }
    Ok(keyed
        .into_iter()
        .filter(|(_, bucket, dist)| *dist <= nearest[bucket])
        .map(|(c, _, _)| c)
        .collect())
}

/// Visibility rule bundled with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub grid: CellGrid,
    pub frustum: FrustumParams,
    pub occlusion: bool,
}

impl Default for Scene {
    fn default() -> Self {
        Self {
            grid: CellGrid::default(),
            frustum: FrustumParams::default(),
            occlusion: true,
        }
    }
}

impl Scene {
    pub fn visible(&self, pose: &Pose) -> Result<VisibleSet, GeometryError> {
        visible_cells(&self.grid, pose, &self.frustum, self.occlusion)
    }
}

/// Jaccard index `|A ∩ B| / |A ∪ B|`; `None` when both sets are empty.
pub fn vchr(actual: &VisibleSet, predicted: &VisibleSet) -> Option<f64> {
    let (inter, union) = actual.pair_counts(predicted);
    (union > 0).then(|| inter as f64 / union as f64)
}

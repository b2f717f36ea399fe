//! Far-field image-source localization.
//!
//! TDOAs over all sensor pairs `m < n` are related to the slowness vector `s`
//! of a plane wave by `tau = V s`, where row `(m, n)` of `V` is `r_n - r_m`.
//! The source is placed opposite to `s`, at the range `c * t_c` given by the
//! mean TOA over the array.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Singular values below this fraction of the largest are treated as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LocateError {
    #[error("array needs at least one sensor")]
    Empty,
    #[error("sensor {index} has {got} coordinates, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("sensor coordinates must be finite")]
    NonFinite,
    #[error("pair difference matrix has rank {rank}, need {needed}")]
    RankDeficient { rank: usize, needed: usize },
    #[error("expected {expected} TDOAs, got {got}")]
    TdoaCount { expected: usize, got: usize },
    #[error("slowness vector is zero")]
    ZeroSlowness,
}

/// Sensor positions in meters, one row per sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    positions: DMatrix<f64>,
}

impl ArrayGeometry {
    pub fn new(positions: &[Vec<f64>]) -> Result<Self, LocateError> {
        let dim = positions.first().ok_or(LocateError::Empty)?.len();
        if dim == 0 {
            return Err(LocateError::DimensionMismatch {
                index: 0,
                expected: 1,
                got: 0,
            });
        }
        for (index, p) in positions.iter().enumerate() {
            if p.len() != dim {
                return Err(LocateError::DimensionMismatch {
                    index,
                    expected: dim,
                    got: p.len(),
                });
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(LocateError::NonFinite);
            }
        }
        Ok(Self {
            positions: DMatrix::from_fn(positions.len(), dim, |i, j| positions[i][j]),
        })
    }

    /// `count` sensors evenly spaced on a circle in the plane, first one on +x.
    pub fn circular(radius: f64, count: usize) -> Result<Self, LocateError> {
        let pts: Vec<Vec<f64>> = (0..count)
            .map(|n| {
                let a = 2.0 * std::f64::consts::PI * n as f64 / count as f64;
                vec![radius * a.cos(), radius * a.sin()]
            })
            .collect();
        Self::new(&pts)
    }

    pub fn len(&self) -> usize {
        self.positions.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.positions.ncols()
    }

    pub fn position(&self, i: usize) -> DVector<f64> {
        self.positions.row(i).transpose()
    }

    /// Array centre `r_c`, the mean sensor position.
    pub fn center(&self) -> DVector<f64> {
        self.positions.row_mean().transpose()
    }

    pub fn max_distance(&self) -> f64 {
        let n = self.len();
        let mut d = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                d = d.max((self.positions.row(i) - self.positions.row(j)).norm());
            }
        }
        d
    }

    /// Applies `x -> R x + t` to every sensor.
    pub fn transformed(&self, rotation: &DMatrix<f64>, translation: &DVector<f64>) -> Self {
        let moved = DMatrix::from_fn(self.len(), self.dim(), |i, j| {
            (rotation * self.position(i) + translation)[j]
        });
        Self { positions: moved }
    }

    /// All positions in meters, one row per sensor.
    pub fn positions(&self) -> &DMatrix<f64> {
        &self.positions
    }
}

/// All sensor pairs `(m, n)`, `m < n`, in lexicographic order.
pub fn sensor_pairs(count: usize) -> Vec<(usize, usize)> {
    (0..count)
        .flat_map(|m| (m + 1..count).map(move |n| (m, n)))
        .collect()
}

fn difference_matrix(g: &ArrayGeometry) -> DMatrix<f64> {
    let pairs = sensor_pairs(g.len());
    DMatrix::from_fn(pairs.len(), g.dim(), |row, j| {
        let (m, n) = pairs[row];
        g.positions[(n, j)] - g.positions[(m, j)]
    })
}

fn numerical_rank(v: &DMatrix<f64>) -> usize {
    if v.is_empty() {
        return 0;
    }
    let sv = v.clone().svd(false, false).singular_values;
    let max = sv.max();
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > RANK_TOLERANCE * max).count()
}

fn required_rank(g: &ArrayGeometry) -> usize {
    g.dim().min(g.len().saturating_sub(1))
}

/// `V` with rows `r_n - r_m` over [`sensor_pairs`].
///
/// Fails when the sensors do not span the space they could span: rank below
/// `min(dim, N - 1)`.
pub fn pair_difference_matrix(g: &ArrayGeometry) -> Result<DMatrix<f64>, LocateError> {
    let v = difference_matrix(g);
    let rank = numerical_rank(&v);
    let needed = required_rank(g).max(1);
    if rank < needed {
        return Err(LocateError::RankDeficient { rank, needed });
    }
    Ok(v)
}

/// Precomputed `V^+` for repeated slowness estimates on one array.
#[derive(Debug, Clone)]
pub struct SlownessEstimator {
    pinv: DMatrix<f64>,
    pairs: usize,
}

impl SlownessEstimator {
    /// Requires a rank-sufficient array (see [`pair_difference_matrix`]).
    pub fn new(g: &ArrayGeometry) -> Result<Self, LocateError> {
        Ok(Self::from_matrix(pair_difference_matrix(g)?))
    }

    /// Minimum-norm solution for arrays that span fewer dimensions than their
    /// coordinates, such as planar arrays described in 3-D.
    pub fn min_norm(g: &ArrayGeometry) -> Result<Self, LocateError> {
        let v = difference_matrix(g);
        if numerical_rank(&v) == 0 {
            return Err(LocateError::RankDeficient { rank: 0, needed: 1 });
        }
        Ok(Self::from_matrix(v))
    }

    fn from_matrix(v: DMatrix<f64>) -> Self {
        let pairs = v.nrows();
        let svd = v.svd(true, true);
        let eps = RANK_TOLERANCE * svd.singular_values.max();
        let pinv = svd.pseudo_inverse(eps).expect("u and v_t were computed");
        Self { pinv, pairs }
    }

    /// `s = V^+ tau`.
    pub fn estimate(&self, tdoas: &[f64]) -> Result<DVector<f64>, LocateError> {
        if tdoas.len() != self.pairs {
            return Err(LocateError::TdoaCount {
                expected: self.pairs,
                got: tdoas.len(),
            });
        }
        Ok(&self.pinv * DVector::from_column_slice(tdoas))
    }
}

/// One-shot `V^+ tau`.
pub fn estimate_slowness(v: &DMatrix<f64>, tdoas: &[f64]) -> Result<DVector<f64>, LocateError> {
    let rank = numerical_rank(v);
    let needed = v.ncols().min(v.nrows());
    if rank < needed.max(1) {
        return Err(LocateError::RankDeficient { rank, needed });
    }
    SlownessEstimator::from_matrix(v.clone()).estimate(tdoas)
}

/// Mean TOA over the sensors.
pub fn center_toa(toas: &[f64]) -> Result<f64, LocateError> {
    if toas.is_empty() {
        return Err(LocateError::Empty);
    }
    Ok(toas.iter().sum::<f64>() / toas.len() as f64)
}

/// `x = r_c - s * c * t_c / |s|`.
pub fn estimate_position(
    slowness: &DVector<f64>,
    center_toa: f64,
    g: &ArrayGeometry,
    speed_of_sound: f64,
) -> Result<DVector<f64>, LocateError> {
    let norm = slowness.norm();
    if norm == 0.0 {
        return Err(LocateError::ZeroSlowness);
    }
    Ok(g.center() - slowness * (speed_of_sound * center_toa / norm))
}

/// `|x - x_hat| / |r_c - x|`.
pub fn localization_error(estimate: &DVector<f64>, truth: &DVector<f64>, center: &DVector<f64>) -> f64 {
    (truth - estimate).norm() / (center - truth).norm()
}

/// Smallest window in samples longer than the wavefront's travel time across
/// the array.
pub fn min_window_length(g: &ArrayGeometry, rate_hz: f64, speed_of_sound: f64) -> usize {
    (g.max_distance() * rate_hz / speed_of_sound).floor() as usize + 1
}

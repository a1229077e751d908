//! From raw lanes to labelled alarms.
//!
//! A joint pursuit over samples a fixed offset ahead of and behind each
//! position yields a confidence map. The most confident positions are
//! clustered by 1-D mean shift; every cluster centroid becomes an alarm
//! that gathers the mean-subtracted samples within a radius. Alarms near a
//! buried target are labelled as targets.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsrf::{
    build_dsrf_dictionary, stack_complex, ComplexSpectrum, FeatureVector, FrequencyGrid,
};
use crate::error::{Error, Result};
use crate::sim::{GroundTruthObject, Lane, ObjectType};
use crate::solvers::{jomp, Dictionary, SolverConfig};

pub const DEFAULT_OFFSET: usize = 5;
pub const DEFAULT_RADIUS_M: f64 = 0.25;
pub const DEFAULT_HALO_M: f64 = 0.25;
pub const DEFAULT_BANDWIDTH_M: f64 = 0.25;
pub const DEFAULT_TOP_FRACTION: f64 = 0.05;
/// Relaxation frequencies in the prescreening dictionary.
pub const PRESCREEN_ATOMS: usize = 30;

/// Prescreener confidence per lane position.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMap {
    pub lane_id: u32,
    pub positions: Vec<f64>,
    pub confidences: Vec<f64>,
}

impl ConfidenceMap {
    pub fn new(lane_id: u32, positions: Vec<f64>, confidences: Vec<f64>) -> Result<Self> {
        crate::error::check_dim(positions.len(), confidences.len())?;
        if positions.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("confidence map positions must increase"));
        }
        if confidences.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::invalid(
                "confidences must be finite and non-negative",
            ));
        }
        Ok(Self {
            lane_id,
            positions,
            confidences,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Largest confidence at positions within `radius` of `center`.
    pub fn max_within(&self, center: f64, radius: f64) -> Option<f64> {
        self.positions
            .iter()
            .zip(&self.confidences)
            .filter(|(p, _)| (*p - center).abs() <= radius)
            .map(|(_, c)| *c)
            .reduce(f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlarmLabel {
    Target,
    FalseAlarm,
    Unlabeled,
}

impl AlarmLabel {
    pub fn code(self) -> &'static str {
        match self {
            AlarmLabel::Target => "target",
            AlarmLabel::FalseAlarm => "false_alarm",
            AlarmLabel::Unlabeled => "unlabeled",
        }
    }
}

impl std::str::FromStr for AlarmLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "target" => Ok(AlarmLabel::Target),
            "false_alarm" => Ok(AlarmLabel::FalseAlarm),
            "unlabeled" => Ok(AlarmLabel::Unlabeled),
            other => Err(Error::invalid(format!("unknown alarm label `{other}`"))),
        }
    }
}

/// A candidate detection with the data gathered around it.
#[derive(Debug, Clone, PartialEq)]
pub struct Alarm {
    pub lane_id: u32,
    pub position_m: f64,
    pub points: Vec<FeatureVector>,
    /// Lane rows the points were taken from.
    pub rows: Vec<usize>,
    pub prescreener_confidence: f64,
    pub label: AlarmLabel,
    /// Type of the nearest target object within the halo, if any.
    pub matched_type: Option<ObjectType>,
}

/// How the confidence threshold is chosen for a lane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    /// Keep this fraction of the most confident positions.
    TopFraction(f64),
    Absolute(f64),
}

impl Default for Threshold {
    fn default() -> Self {
        Threshold::TopFraction(DEFAULT_TOP_FRACTION)
    }
}

impl Threshold {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Threshold::TopFraction(f) if f > 0.0 && f <= 1.0 => Ok(()),
            Threshold::Absolute(t) if t.is_finite() => Ok(()),
            other => Err(Error::invalid(format!("bad threshold {other:?}"))),
        }
    }

    /// Absolute cut-off for `map`.
    pub fn tau(&self, map: &ConfidenceMap) -> f64 {
        match *self {
            Threshold::Absolute(t) => t,
            Threshold::TopFraction(f) => {
                if map.is_empty() {
                    return f64::INFINITY;
                }
                let mut sorted = map.confidences.clone();
                sorted.sort_by(|a, b| b.total_cmp(a));
                let keep = ((f * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
                sorted[keep - 1]
            }
        }
    }
}

/// Every knob of alarm generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlarmConfig {
    pub offset: usize,
    pub threshold: Threshold,
    pub bandwidth_m: f64,
    pub radius_m: f64,
    pub halo_m: f64,
    pub prescreen_atoms: usize,
    pub solver: SolverConfig,
}

impl Default for AlarmConfig {
    fn default() -> Self {
        Self {
            offset: DEFAULT_OFFSET,
            threshold: Threshold::default(),
            bandwidth_m: DEFAULT_BANDWIDTH_M,
            radius_m: DEFAULT_RADIUS_M,
            halo_m: DEFAULT_HALO_M,
            prescreen_atoms: PRESCREEN_ATOMS,
            solver: SolverConfig::default(),
        }
    }
}

impl AlarmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.offset == 0 {
            return Err(Error::invalid("offset must be at least 1"));
        }
        for (name, v) in [
            ("bandwidth", self.bandwidth_m),
            ("radius", self.radius_m),
            ("halo", self.halo_m),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if self.prescreen_atoms == 0 {
            return Err(Error::invalid("prescreen dictionary needs atoms"));
        }
        self.threshold.validate()?;
        self.solver.validate()
    }
}

/// Normalized relaxation-frequency dictionary spanning the grid's band.
pub fn prescreen_dictionary(grid: &FrequencyGrid, atoms: usize) -> Result<Dictionary> {
    build_dsrf_dictionary(grid, &grid.band_zetas(atoms), true)
}

/// Joint pursuit confidence at every lane position.
///
/// Each sample is scaled to unit norm first, so the residual measures how
/// well the relaxation atoms explain the shape of the response rather than
/// how small the response is. All-zero samples stay zero and therefore get
/// the confidence cap. Positions without both neighbours get zero.
pub fn prescreen(
    lane: &Lane,
    d: &Dictionary,
    offset: usize,
    cfg: &SolverConfig,
) -> Result<ConfidenceMap> {
    if offset == 0 {
        return Err(Error::invalid("offset must be at least 1"));
    }
    let n = lane.len();
    if n <= 2 * offset {
        return Err(Error::invalid(format!(
            "lane {} has {n} samples, needs more than {}",
            lane.lane_id,
            2 * offset
        )));
    }
    crate::error::check_dim(d.dim(), lane.grid.feature_len())?;
    let features: Vec<FeatureVector> = (0..n).map(|i| lane.feature(i).normalized()).collect();
    let confidences = (0..n)
        .into_par_iter()
        .map(|i| {
            if i < offset || i + offset >= n {
                return Ok(0.0);
            }
            let code = jomp(
                features[i - offset].as_slice(),
                features[i + offset].as_slice(),
                d,
                cfg,
            )?;
            Ok(code.confidence)
        })
        .collect::<Result<Vec<f64>>>()?;
    ConfidenceMap::new(lane.lane_id, lane.positions.clone(), confidences)
}

/// Positions with confidence at least `tau`, in map order.
pub fn threshold_confidences(map: &ConfidenceMap, tau: f64) -> Vec<f64> {
    map.positions
        .iter()
        .zip(&map.confidences)
        .filter(|(_, c)| **c >= tau)
        .map(|(p, _)| *p)
        .collect()
}

const SHIFT_TOL_M: f64 = 1e-6;
const SHIFT_MAX_ITERS: usize = 1000;

/// Flat-kernel mean shift on 1-D positions. Modes closer than half the
/// bandwidth merge into the lowest one. Returns sorted centroids.
pub fn mean_shift(positions: &[f64], bandwidth_m: f64) -> Result<Vec<f64>> {
    if !(bandwidth_m > 0.0 && bandwidth_m.is_finite()) {
        return Err(Error::invalid("bandwidth must be positive"));
    }
    if positions.iter().any(|p| !p.is_finite()) {
        return Err(Error::invalid("positions must be finite"));
    }
    let mut sorted = positions.to_vec();
    sorted.sort_by(f64::total_cmp);
    // prefix sums make each window mean O(log n)
    let mut prefix = Vec::with_capacity(sorted.len() + 1);
    prefix.push(0.0);
    for p in &sorted {
        prefix.push(prefix.last().unwrap() + p);
    }
    let window_mean = |c: f64| {
        let lo = sorted.partition_point(|&x| x < c - bandwidth_m);
        let hi = sorted.partition_point(|&x| x <= c + bandwidth_m);
        (prefix[hi] - prefix[lo]) / (hi - lo) as f64
    };
    let mut modes: Vec<f64> = sorted
        .iter()
        .map(|&start| {
            let mut c = start;
            for _ in 0..SHIFT_MAX_ITERS {
                let next = window_mean(c);
                let done = (next - c).abs() < SHIFT_TOL_M;
                c = next;
                if done {
                    break;
                }
            }
            c
        })
        .collect();
    modes.sort_by(f64::total_cmp);
    let mut centroids: Vec<f64> = Vec::new();
    for m in modes {
        match centroids.last() {
            Some(&rep) if m - rep <= bandwidth_m / 2.0 => {}
            _ => centroids.push(m),
        }
    }
    Ok(centroids)
}

/// Subtract the per-frequency complex mean of the lane from every sample.
pub fn lane_mean_subtract(lane: &Lane) -> Result<Lane> {
    if lane.is_empty() {
        return Err(Error::Empty(format!(
            "lane {} has no samples",
            lane.lane_id
        )));
    }
    let n = lane.grid.len();
    let count = lane.len() as f64;
    let mut mean = vec![num_complex::Complex64::new(0.0, 0.0); n];
    for s in &lane.spectra {
        for (m, v) in mean.iter_mut().zip(&s.values) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let spectra = lane
        .spectra
        .iter()
        .map(|s| ComplexSpectrum {
            values: s.values.iter().zip(&mean).map(|(v, m)| v - m).collect(),
        })
        .collect();
    Lane::new(
        lane.lane_id,
        lane.grid.clone(),
        lane.positions.clone(),
        spectra,
    )
}

/// One unlabelled alarm per centroid, holding every sample within
/// `radius_m`. Centroids with no sample in range are skipped.
pub fn extract_alarms(
    lane: &Lane,
    centroids: &[f64],
    radius_m: f64,
    map: &ConfidenceMap,
) -> Result<Vec<Alarm>> {
    if !(radius_m > 0.0) {
        return Err(Error::invalid("radius must be positive"));
    }
    let mut alarms = Vec::with_capacity(centroids.len());
    for &c in centroids {
        let rows: Vec<usize> = (0..lane.len())
            .filter(|&i| (lane.positions[i] - c).abs() <= radius_m)
            .collect();
        if rows.is_empty() {
            log::warn!(
                "lane {}: no samples within {radius_m} m of {c:.3} m, alarm skipped",
                lane.lane_id
            );
            continue;
        }
        alarms.push(Alarm {
            lane_id: lane.lane_id,
            position_m: c,
            points: rows
                .iter()
                .map(|&i| stack_complex(&lane.spectra[i]))
                .collect(),
            rows,
            prescreener_confidence: map.max_within(c, radius_m).unwrap_or(0.0),
            label: AlarmLabel::Unlabeled,
            matched_type: None,
        });
    }
    Ok(alarms)
}

/// Nearest non-clutter object on the alarm's lane within `halo_m`; ties go
/// to the object listed first.
pub fn nearest_target(
    lane_id: u32,
    position_m: f64,
    gt: &[GroundTruthObject],
    halo_m: f64,
) -> Option<&GroundTruthObject> {
    gt.iter()
        .filter(|o| o.lane_id == lane_id && o.object_type.is_target())
        .map(|o| (o, (o.position_m - position_m).abs()))
        .filter(|(_, dist)| *dist <= halo_m)
        .fold(
            None,
            |best: Option<(&GroundTruthObject, f64)>, (o, dist)| match best {
                Some((_, bd)) if bd <= dist => best,
                _ => Some((o, dist)),
            },
        )
        .map(|(o, _)| o)
}

/// Label each alarm target when a non-clutter object on its lane lies
/// within `halo_m`, false alarm otherwise.
pub fn label_alarms(alarms: &[Alarm], gt: &[GroundTruthObject], halo_m: f64) -> Vec<Alarm> {
    alarms
        .iter()
        .map(|a| {
            let hit = nearest_target(a.lane_id, a.position_m, gt, halo_m);
            Alarm {
                label: if hit.is_some() {
                    AlarmLabel::Target
                } else {
                    AlarmLabel::FalseAlarm
                },
                matched_type: hit.map(|o| o.object_type),
                ..a.clone()
            }
        })
        .collect()
}

/// Confidence map and unlabelled alarms for one lane.
pub fn generate_alarms(lane: &Lane, cfg: &AlarmConfig) -> Result<(ConfidenceMap, Vec<Alarm>)> {
    cfg.validate()?;
    let d = prescreen_dictionary(&lane.grid, cfg.prescreen_atoms)?;
    let map = prescreen(lane, &d, cfg.offset, &cfg.solver)?;
    let alarms = alarms_from_map(lane, &map, cfg)?;
    Ok((map, alarms))
}

/// Threshold, cluster and cut unlabelled alarms from an existing map.
pub fn alarms_from_map(lane: &Lane, map: &ConfidenceMap, cfg: &AlarmConfig) -> Result<Vec<Alarm>> {
    cfg.validate()?;
    if map.lane_id != lane.lane_id || map.positions.len() != lane.len() {
        return Err(Error::invalid(format!(
            "confidence map for lane {} does not match lane {}",
            map.lane_id, lane.lane_id
        )));
    }
    let hits = threshold_confidences(map, cfg.threshold.tau(map));
    let centroids = mean_shift(&hits, cfg.bandwidth_m)?;
    extract_alarms(&lane_mean_subtract(lane)?, &centroids, cfg.radius_m, map)
}

//! Cross-validated end-to-end run: simulate, prescreen, cut alarms, train
//! one model per held-out lane, score its alarms, compare with the
//! prescreener.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alarms::{generate_alarms, label_alarms, Alarm, AlarmConfig, AlarmLabel, ConfidenceMap};
use crate::dsrf::FrequencyGrid;
use crate::error::{Error, Result};
use crate::evaluation::{clutter_mask, compare_report, make_folds, CompareReport};
use crate::sim::{simulate_scene, GroundTruthObject, Lane, SceneConfig};
use crate::td_efumi::{classify_alarm, train, Bag, BagLabel, Model, Pooling, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub alarms: AlarmConfig,
    pub train: TrainConfig,
    pub pooling: Pooling,
    pub ignore_clutter: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            alarms: AlarmConfig::default(),
            train: TrainConfig::default(),
            pooling: Pooling::Max,
            ignore_clutter: true,
        }
    }
}

/// SplitMix64 finalizer over `seed ^ stream`; stages use distinct streams.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Labelled alarms and confidence maps for every lane, in lane order.
pub fn scene_alarms(
    lanes: &[Lane],
    gt: &[GroundTruthObject],
    cfg: &AlarmConfig,
) -> Result<(Vec<ConfidenceMap>, Vec<Alarm>)> {
    let per_lane = lanes
        .par_iter()
        .map(|lane| generate_alarms(lane, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut maps = Vec::with_capacity(lanes.len());
    let mut alarms = Vec::new();
    for (map, lane_alarms) in per_lane {
        maps.push(map);
        alarms.extend(label_alarms(&lane_alarms, gt, cfg.halo_m));
    }
    Ok((maps, alarms))
}

/// Target alarms become positive bags, false alarms negative ones.
pub fn bags_from_alarms<'a>(alarms: impl IntoIterator<Item = &'a Alarm>) -> Result<Vec<Bag>> {
    alarms
        .into_iter()
        .enumerate()
        .map(|(i, a)| {
            let label = match a.label {
                AlarmLabel::Target => BagLabel::Positive,
                AlarmLabel::FalseAlarm => BagLabel::Negative,
                AlarmLabel::Unlabeled => {
                    return Err(Error::invalid("cannot train on unlabelled alarms"))
                }
            };
            Ok(Bag {
                bag_id: i,
                label,
                points: a.points.clone(),
                lane_id: a.lane_id,
                position_m: a.position_m,
            })
        })
        .collect()
}

/// Training config for the fold that holds out `test_lane_id`.
pub fn fold_config(base: &TrainConfig, test_lane_id: u32) -> TrainConfig {
    TrainConfig {
        seed: derive_seed(base.seed, u64::from(test_lane_id)),
        ..base.clone()
    }
}

#[derive(Debug, Clone)]
pub struct CrossValidation {
    /// Classifier score per alarm, aligned with the input.
    pub scores: Vec<f64>,
    /// Model per held-out lane.
    pub models: Vec<(u32, Model)>,
}

/// Leave-one-lane-out training and scoring.
pub fn cross_validate(
    alarms: &[Alarm],
    grid: &FrequencyGrid,
    lane_ids: &[u32],
    cfg: &PipelineConfig,
) -> Result<CrossValidation> {
    let folds = make_folds(lane_ids)?;
    let results = folds
        .par_iter()
        .map(|fold| {
            let train_alarms = alarms
                .iter()
                .filter(|a| fold.train_lane_ids.contains(&a.lane_id));
            let bags = bags_from_alarms(train_alarms)?;
            let model = train(&bags, grid, &fold_config(&cfg.train, fold.test_lane_id))?;
            let scores = alarms
                .iter()
                .enumerate()
                .filter(|(_, a)| a.lane_id == fold.test_lane_id)
                .map(|(i, a)| Ok((i, classify_alarm(&a.points, &model, cfg.pooling)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok((fold.test_lane_id, model, scores))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut scores = vec![f64::NAN; alarms.len()];
    let mut models = Vec::with_capacity(results.len());
    for (lane, model, lane_scores) in results {
        for (i, s) in lane_scores {
            scores[i] = s;
        }
        models.push((lane, model));
    }
    if let Some(a) = scores
        .iter()
        .zip(alarms)
        .find(|(s, _)| s.is_nan())
        .map(|(_, a)| a)
    {
        return Err(Error::invalid(format!(
            "alarm on lane {} belongs to no fold",
            a.lane_id
        )));
    }
    Ok(CrossValidation { scores, models })
}

/// Everything produced by one end-to-end run.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub lanes: Vec<Lane>,
    pub ground_truth: Vec<GroundTruthObject>,
    pub maps: Vec<ConfidenceMap>,
    /// All labelled alarms.
    pub alarms: Vec<Alarm>,
    /// Cross-validated classifier score per alarm.
    pub scores: Vec<f64>,
    pub models: Vec<(u32, Model)>,
    /// Alarms kept for scoring.
    pub scored: Vec<bool>,
    pub report: CompareReport,
}

impl PipelineRun {
    pub fn scored_alarms(&self) -> Vec<Alarm> {
        self.alarms
            .iter()
            .zip(&self.scored)
            .filter(|(_, k)| **k)
            .map(|(a, _)| a.clone())
            .collect()
    }
}

pub fn run_lanes(
    lanes: Vec<Lane>,
    gt: Vec<GroundTruthObject>,
    cfg: &PipelineConfig,
) -> Result<PipelineRun> {
    let grid = lanes
        .first()
        .map(|l| l.grid.clone())
        .ok_or_else(|| Error::Empty("no lanes".into()))?;
    let (maps, alarms) = scene_alarms(&lanes, &gt, &cfg.alarms)?;
    let lane_ids: Vec<u32> = lanes.iter().map(|l| l.lane_id).collect();
    let cv = cross_validate(&alarms, &grid, &lane_ids, cfg)?;
    let scored = if cfg.ignore_clutter {
        clutter_mask(&alarms, &gt, cfg.alarms.halo_m)
    } else {
        vec![true; alarms.len()]
    };
    let pick = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .zip(&scored)
            .filter(|(_, k)| **k)
            .map(|(s, _)| *s)
            .collect()
    };
    let kept: Vec<Alarm> = alarms
        .iter()
        .zip(&scored)
        .filter(|(_, k)| **k)
        .map(|(a, _)| a.clone())
        .collect();
    let prescreener: Vec<f64> = alarms.iter().map(|a| a.prescreener_confidence).collect();
    let report = compare_report(
        &kept,
        &pick(&prescreener),
        &pick(&cv.scores),
        &gt,
        cfg.alarms.halo_m,
    )?;
    Ok(PipelineRun {
        lanes,
        ground_truth: gt,
        maps,
        alarms,
        scores: cv.scores,
        models: cv.models,
        scored,
        report,
    })
}

pub fn run_scene(scene: &SceneConfig, cfg: &PipelineConfig) -> Result<PipelineRun> {
    let (lanes, gt) = simulate_scene(scene)?;
    run_lanes(lanes, gt, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ() {
        let s: Vec<u64> = (0..6).map(|l| derive_seed(7, l)).collect();
        let mut d = s.clone();
        d.sort();
        d.dedup();
        assert_eq!(d.len(), 6);
        assert_eq!(derive_seed(7, 3), s[3]);
    }
}

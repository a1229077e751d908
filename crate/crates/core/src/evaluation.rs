//! Lane-based folds, clutter removal, ROC curves and comparison reports.

use std::fmt::Write as _;

use crate::alarms::{nearest_target, Alarm, AlarmLabel};
use crate::error::{check_dim, Error, Result};
use crate::sim::{GroundTruthObject, ObjectType};

/// Train on every lane but one, test on that one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub test_lane_id: u32,
    pub train_lane_ids: Vec<u32>,
}

pub fn make_folds(lane_ids: &[u32]) -> Result<Vec<Fold>> {
    let mut ids = lane_ids.to_vec();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("lane ids must be distinct"));
    }
    if ids.len() < 2 {
        return Err(Error::invalid("cross-validation needs at least two lanes"));
    }
    Ok(lane_ids
        .iter()
        .map(|&test| Fold {
            test_lane_id: test,
            train_lane_ids: lane_ids.iter().copied().filter(|&l| l != test).collect(),
        })
        .collect())
}

/// Mask of alarms that survive clutter removal: alarms within `halo_m` of a
/// clutter object on their lane are dropped unless labelled target.
pub fn clutter_mask(alarms: &[Alarm], gt: &[GroundTruthObject], halo_m: f64) -> Vec<bool> {
    alarms
        .iter()
        .map(|a| {
            a.label == AlarmLabel::Target
                || !gt.iter().any(|o| {
                    o.object_type == ObjectType::Clutter
                        && o.lane_id == a.lane_id
                        && (o.position_m - a.position_m).abs() <= halo_m
                })
        })
        .collect()
}

pub fn ignore_clutter(alarms: &[Alarm], gt: &[GroundTruthObject], halo_m: f64) -> Vec<Alarm> {
    alarms
        .iter()
        .zip(clutter_mask(alarms, gt, halo_m))
        .filter(|(_, keep)| *keep)
        .map(|(a, _)| a.clone())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub pd: f64,
    pub far: f64,
}

/// Alarm-level ROC: `far` is the fraction of all false alarms retained.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
    pub targets: usize,
    pub false_alarms: usize,
}

impl RocCurve {
    /// PD at `far` by linear interpolation; on vertical runs the highest PD.
    pub fn pd_at(&self, far: f64) -> f64 {
        let pts = &self.points;
        let i = pts.partition_point(|p| p.far <= far);
        if i == 0 {
            return pts[0].pd;
        }
        if i == pts.len() {
            return pts[i - 1].pd;
        }
        let (a, b) = (pts[i - 1], pts[i]);
        a.pd + (b.pd - a.pd) * (far - a.far) / (b.far - a.far)
    }

    /// Largest |PD difference| over an evenly spaced FAR grid.
    pub fn max_vertical_gap(&self, other: &RocCurve, grid_points: usize) -> f64 {
        far_grid(grid_points)
            .into_iter()
            .map(|f| (self.pd_at(f) - other.pd_at(f)).abs())
            .fold(0.0, f64::max)
    }
}

pub fn far_grid(n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

/// Sweep thresholds over the distinct scores, highest first; equal scores
/// cross together. The curve runs from `+inf` at (0, 0) to `-inf` at (1, 1).
pub fn roc(scores: &[f64], labels: &[AlarmLabel]) -> Result<RocCurve> {
    check_dim(scores.len(), labels.len())?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("scores contain NaN"));
    }
    if labels.contains(&AlarmLabel::Unlabeled) {
        return Err(Error::invalid("ROC needs labelled alarms"));
    }
    let targets = labels.iter().filter(|l| **l == AlarmLabel::Target).count();
    let false_alarms = labels.len() - targets;
    if targets == 0 || false_alarms == 0 {
        return Err(Error::invalid(
            "ROC needs at least one target and one false alarm",
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        pd: 0.0,
        far: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            match labels[order[i]] {
                AlarmLabel::Target => tp += 1,
                _ => fp += 1,
            }
            i += 1;
        }
        let prev = *points.last().unwrap();
        let p = RocPoint {
            threshold: s,
            pd: tp as f64 / targets as f64,
            far: fp as f64 / false_alarms as f64,
        };
        auc += (p.far - prev.far) * (p.pd + prev.pd) / 2.0;
        points.push(p);
    }
    points.push(RocPoint {
        threshold: f64::NEG_INFINITY,
        pd: 1.0,
        far: 1.0,
    });
    Ok(RocCurve {
        points,
        auc,
        targets,
        false_alarms,
    })
}

/// Index of the target object each alarm is credited with.
pub fn match_objects(
    alarms: &[Alarm],
    gt: &[GroundTruthObject],
    halo_m: f64,
) -> Vec<Option<usize>> {
    alarms
        .iter()
        .map(|a| {
            nearest_target(a.lane_id, a.position_m, gt, halo_m)
                .map(|hit| gt.iter().position(|o| std::ptr::eq(o, hit)).unwrap())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionPoint {
    pub threshold: f64,
    /// Distinct target objects with at least one alarm at or above threshold.
    pub detected: usize,
    pub false_alarms: usize,
}

/// Object-level detections against false-alarm counts.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionCurve {
    pub points: Vec<DetectionPoint>,
    /// Objects hit by some alarm: the best any rescoring can do.
    pub ceiling: usize,
    pub total_false_alarms: usize,
    /// Target objects no alarm reached.
    pub undetectable: Vec<GroundTruthObject>,
}

impl DetectionCurve {
    /// Most objects detected while keeping at most `max_false` false alarms.
    pub fn detected_within(&self, max_false: usize) -> usize {
        self.points
            .iter()
            .filter(|p| p.false_alarms <= max_false)
            .map(|p| p.detected)
            .max()
            .unwrap_or(0)
    }
}

pub fn object_detection_curve(
    scores: &[f64],
    alarms: &[Alarm],
    gt: &[GroundTruthObject],
    halo_m: f64,
) -> Result<DetectionCurve> {
    check_dim(alarms.len(), scores.len())?;
    let matches = match_objects(alarms, gt, halo_m);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut seen = vec![false; gt.len()];
    let (mut detected, mut false_alarms) = (0, 0);
    let mut points = vec![DetectionPoint {
        threshold: f64::INFINITY,
        detected: 0,
        false_alarms: 0,
    }];
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            match matches[order[i]] {
                Some(obj) if !seen[obj] => {
                    seen[obj] = true;
                    detected += 1;
                }
                Some(_) => {}
                None => false_alarms += 1,
            }
            i += 1;
        }
        points.push(DetectionPoint {
            threshold: s,
            detected,
            false_alarms,
        });
    }
    let alarm_lanes: Vec<u32> = alarms.iter().map(|a| a.lane_id).collect();
    let undetectable = gt
        .iter()
        .enumerate()
        .filter(|(j, o)| o.object_type.is_target() && !seen[*j] && alarm_lanes.contains(&o.lane_id))
        .map(|(_, o)| o.clone())
        .collect();
    Ok(DetectionCurve {
        points,
        ceiling: detected,
        total_false_alarms: false_alarms,
        undetectable,
    })
}

/// ROC over false alarms plus only the targets matched to `object_type`;
/// `None` when there are no such targets.
pub fn subset_roc(
    scores: &[f64],
    alarms: &[Alarm],
    object_type: ObjectType,
) -> Result<Option<RocCurve>> {
    check_dim(alarms.len(), scores.len())?;
    let keep: Vec<usize> = (0..alarms.len())
        .filter(|&i| match alarms[i].label {
            AlarmLabel::Target => alarms[i].matched_type == Some(object_type),
            _ => true,
        })
        .collect();
    if !keep.iter().any(|&i| alarms[i].label == AlarmLabel::Target) {
        return Ok(None);
    }
    let s: Vec<f64> = keep.iter().map(|&i| scores[i]).collect();
    let l: Vec<AlarmLabel> = keep.iter().map(|&i| alarms[i].label).collect();
    roc(&s, &l).map(Some)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetCurves {
    pub object_type: ObjectType,
    pub prescreener: RocCurve,
    pub classifier: RocCurve,
}

/// Prescreener against classifier on one alarm population.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub prescreener: RocCurve,
    pub classifier: RocCurve,
    pub subsets: Vec<SubsetCurves>,
    pub notices: Vec<String>,
    pub far_grid: Vec<f64>,
    pub prescreener_detection: DetectionCurve,
    pub classifier_detection: DetectionCurve,
}

pub const SUBSET_TYPES: [ObjectType; 2] = [ObjectType::HighMetal, ObjectType::LowMetal];

pub fn compare_report(
    alarms: &[Alarm],
    prescreener_scores: &[f64],
    classifier_scores: &[f64],
    gt: &[GroundTruthObject],
    halo_m: f64,
) -> Result<CompareReport> {
    let labels: Vec<AlarmLabel> = alarms.iter().map(|a| a.label).collect();
    let prescreener = roc(prescreener_scores, &labels)?;
    let classifier = roc(classifier_scores, &labels)?;
    let mut subsets = Vec::new();
    let mut notices = Vec::new();
    for t in SUBSET_TYPES {
        match (
            subset_roc(prescreener_scores, alarms, t)?,
            subset_roc(classifier_scores, alarms, t)?,
        ) {
            (Some(p), Some(c)) => subsets.push(SubsetCurves {
                object_type: t,
                prescreener: p,
                classifier: c,
            }),
            _ => notices.push(format!(
                "no {t} targets among the alarms; {t} curves omitted"
            )),
        }
    }
    Ok(CompareReport {
        prescreener,
        classifier,
        subsets,
        notices,
        far_grid: far_grid(21),
        prescreener_detection: object_detection_curve(prescreener_scores, alarms, gt, halo_m)?,
        classifier_detection: object_detection_curve(classifier_scores, alarms, gt, halo_m)?,
    })
}

impl CompareReport {
    fn curves(&self) -> Vec<(String, &RocCurve)> {
        let mut out = vec![
            ("prescreener".to_string(), &self.prescreener),
            ("classifier".to_string(), &self.classifier),
        ];
        for s in &self.subsets {
            let code = s.object_type.code().to_lowercase();
            out.push((format!("prescreener_{code}"), &s.prescreener));
            out.push((format!("classifier_{code}"), &s.classifier));
        }
        out
    }

    pub fn auc_difference(&self) -> f64 {
        self.classifier.auc - self.prescreener.auc
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let curves = self.curves();
        let _ = writeln!(
            s,
            "alarms: {} target, {} false",
            self.prescreener.targets, self.prescreener.false_alarms
        );
        for (name, c) in &curves {
            let _ = writeln!(s, "auc {name:<18} {:.4}", c.auc);
        }
        let _ = writeln!(s, "auc difference      {:+.4}", self.auc_difference());
        let det = &self.prescreener_detection;
        let half = det.total_false_alarms / 2;
        let _ = writeln!(
            s,
            "objects: ceiling {}, classifier finds {} at {half} false alarms (prescreener {})",
            det.ceiling,
            self.classifier_detection.detected_within(half),
            det.detected_within(half)
        );
        let _ = writeln!(s, "undetectable targets: {}", det.undetectable.len());
        for o in &det.undetectable {
            let _ = writeln!(
                s,
                "  lane {} at {:.3} m ({})",
                o.lane_id, o.position_m, o.object_type
            );
        }
        for n in &self.notices {
            let _ = writeln!(s, "note: {n}");
        }
        let _ = write!(s, "\n{:>6}", "far");
        for (name, _) in &curves {
            let _ = write!(s, " {name:>18}");
        }
        s.push('\n');
        for &f in &self.far_grid {
            let _ = write!(s, "{f:>6.2}");
            for (_, c) in &curves {
                let _ = write!(s, " {:>18.4}", c.pd_at(f));
            }
            s.push('\n');
        }
        s
    }

    /// Long format: `curve,auc,far,pd` on the FAR grid.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("curve,auc,far,pd\n");
        for (name, c) in self.curves() {
            for &f in &self.far_grid {
                let _ = writeln!(s, "{name},{:.16e},{:.16e},{:.16e}", c.auc, f, c.pd_at(f));
            }
        }
        s
    }
}

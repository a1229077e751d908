use std::collections::HashMap;
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;
use tdefumi::alarms::{
    alarms_from_map, label_alarms, lane_mean_subtract, prescreen_dictionary, Alarm, AlarmConfig,
    Threshold,
};
use tdefumi::evaluation::{clutter_mask, compare_report};
use tdefumi::io::{self, ScoreRow};
use tdefumi::pipeline::{bags_from_alarms, derive_seed, fold_config};
use tdefumi::sim::{simulate_scene, Lane, SceneConfig, ScenePlan};
use tdefumi::solvers::SolverConfig;
use tdefumi::td_efumi::{classify_alarm, train as fit, Pooling, TrainConfig};
use tdefumi::{Error, Result};

use crate::{
    AlarmsArgs, ClassifyArgs, PlotArgs, PrescreenArgs, ScoreArgs, SimulateArgs, TrainArgs,
};

/// Stream that turns the top-level seed into the training seed.
const TRAIN_STREAM: u64 = 0x74_7261_696e;

pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";
pub const SCENE_FILE: &str = "scene.toml";
pub const ALARMS_FILE: &str = "alarms.csv";
pub const ALARM_POINTS_FILE: &str = "alarm_points.csv";

pub fn confidence_file_name(lane_id: u32) -> String {
    format!("confidence_{lane_id}.csv")
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn toml_string<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string(value).map_err(|e| Error::InvalidParameter(e.to_string()))
}

fn write_bytes(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    io::write_file(path, |buf| {
        buf.extend_from_slice(bytes);
        Ok(())
    })
}

fn echo<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    write_bytes(path, toml_string(value)?.as_bytes())
}

/// `dir/name.csv` becomes `dir/name.config.toml`.
fn echo_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("output");
    out.with_file_name(format!("{stem}.config.toml"))
}

fn load_scene_config(a: &SimulateArgs) -> Result<SceneConfig> {
    if let Some(path) = &a.config {
        return io::load_scene(path);
    }
    let plan = match &a.plan {
        Some(path) => toml::from_str::<ScenePlan>(&std::fs::read_to_string(path)?)
            .map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?,
        None if a.lmt_dominant => ScenePlan::lmt_dominant(),
        None => ScenePlan::default(),
    };
    Ok(plan.build(a.seed))
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let scene = load_scene_config(a)?;
    let (lanes, gt) = simulate_scene(&scene)?;
    for lane in &lanes {
        io::write_file(a.out.join(io::lane_file_name(lane.lane_id)), |b| {
            io::write_lane(lane, b)
        })?;
    }
    io::write_file(a.out.join(GROUND_TRUTH_FILE), |b| {
        io::write_ground_truth(&gt, b)
    })?;
    write_bytes(a.out.join(SCENE_FILE), scene.to_toml()?.as_bytes())?;
    info!(
        "wrote {} lanes and {} objects to {}",
        lanes.len(),
        gt.len(),
        a.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct PrescreenEcho {
    lanes: String,
    offset: usize,
    atoms: usize,
    solver: SolverConfig,
}

pub fn prescreen(a: &PrescreenArgs) -> Result<()> {
    let cfg = AlarmConfig {
        offset: a.offset,
        prescreen_atoms: a.atoms,
        ..AlarmConfig::default()
    };
    cfg.validate()?;
    let lanes = load_lanes(&a.lanes)?;
    for lane in &lanes {
        let d = prescreen_dictionary(&lane.grid, cfg.prescreen_atoms)?;
        let map = tdefumi::alarms::prescreen(lane, &d, cfg.offset, &cfg.solver)?;
        io::write_file(a.out.join(confidence_file_name(lane.lane_id)), |b| {
            io::write_confidence_map(&map, b)
        })?;
    }
    echo(
        a.out.join("prescreen.toml"),
        &PrescreenEcho {
            lanes: display(&a.lanes),
            offset: cfg.offset,
            atoms: cfg.prescreen_atoms,
            solver: cfg.solver,
        },
    )
}

fn load_lanes(dir: &Path) -> Result<Vec<Lane>> {
    let lanes = io::load_lanes(dir)?;
    if lanes.is_empty() {
        return Err(Error::Empty(format!(
            "no lane_<id>.csv files in {}",
            dir.display()
        )));
    }
    Ok(lanes)
}

#[derive(Serialize)]
struct AlarmsEcho {
    lanes: String,
    confidence: String,
    ground_truth: Option<String>,
    threshold: Threshold,
    bandwidth_m: f64,
    radius_m: f64,
    halo_m: f64,
}

pub fn alarms(a: &AlarmsArgs) -> Result<()> {
    let cfg = AlarmConfig {
        threshold: match a.threshold {
            Some(t) => Threshold::Absolute(t),
            None => Threshold::TopFraction(a.top_fraction),
        },
        bandwidth_m: a.bandwidth,
        radius_m: a.radius,
        halo_m: a.halo,
        ..AlarmConfig::default()
    };
    cfg.validate()?;
    let lanes = load_lanes(&a.lanes)?;
    let gt = match &a.ground_truth {
        Some(p) => Some(io::read_ground_truth(io::open(p)?)?),
        None => None,
    };
    let mut all = Vec::new();
    for lane in &lanes {
        let map = io::read_confidence_map(
            io::open(a.confidence.join(confidence_file_name(lane.lane_id)))?,
            lane.lane_id,
        )?;
        let cut = alarms_from_map(lane, &map, &cfg)?;
        match &gt {
            Some(gt) => all.extend(label_alarms(&cut, gt, cfg.halo_m)),
            None => all.extend(cut),
        }
    }
    let (mut table, mut sidecar) = (Vec::new(), Vec::new());
    io::write_alarms(&all, &mut table, &mut sidecar)?;
    write_bytes(a.out.join(ALARMS_FILE), &table)?;
    write_bytes(a.out.join(ALARM_POINTS_FILE), &sidecar)?;
    info!("{} alarms on {} lanes", all.len(), lanes.len());
    echo(
        a.out.join("alarms.toml"),
        &AlarmsEcho {
            lanes: display(&a.lanes),
            confidence: display(&a.confidence),
            ground_truth: a.ground_truth.as_deref().map(display),
            threshold: cfg.threshold,
            bandwidth_m: cfg.bandwidth_m,
            radius_m: cfg.radius_m,
            halo_m: cfg.halo_m,
        },
    )
}

/// Alarms with their points cut from the mean-subtracted lanes.
fn load_alarms(lanes_dir: &Path, alarms_dir: &Path) -> Result<(Vec<Lane>, Vec<Alarm>)> {
    let lanes = load_lanes(lanes_dir)?
        .iter()
        .map(lane_mean_subtract)
        .collect::<Result<Vec<_>>>()?;
    let alarms = io::read_alarms(
        io::open(alarms_dir.join(ALARMS_FILE))?,
        io::open(alarms_dir.join(ALARM_POINTS_FILE))?,
        &lanes,
    )?;
    Ok((lanes, alarms))
}

#[derive(Serialize)]
struct TrainEcho {
    lanes: String,
    alarms: String,
    top_level_seed: u64,
    test_lane: Option<u32>,
    train_lanes: Vec<u32>,
    bags: usize,
    train: TrainConfig,
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let mut base = match &a.config {
        Some(p) => toml::from_str::<TrainConfig>(&std::fs::read_to_string(p)?)
            .map_err(|e| Error::InvalidParameter(format!("{}: {e}", p.display())))?,
        None => TrainConfig::default(),
    };
    if let Some(e) = a.epochs {
        base.epochs = e;
    }
    base.seed = derive_seed(a.seed, TRAIN_STREAM);
    let cfg = match a.test_lane {
        Some(l) => fold_config(&base, l),
        None => base,
    };
    let (lanes, alarms) = load_alarms(&a.lanes, &a.alarms)?;
    let train_lanes: Vec<u32> = lanes
        .iter()
        .map(|l| l.lane_id)
        .filter(|&id| Some(id) != a.test_lane)
        .collect();
    if train_lanes.is_empty() {
        return Err(Error::InvalidParameter("no training lanes left".into()));
    }
    let bags = bags_from_alarms(alarms.iter().filter(|al| train_lanes.contains(&al.lane_id)))?;
    let model = fit(&bags, &lanes[0].grid, &cfg)?;
    io::save_model(&model, &a.out)?;
    info!("trained on {} bags, {} epochs", bags.len(), model.log.len());
    echo(
        echo_path(&a.out),
        &TrainEcho {
            lanes: display(&a.lanes),
            alarms: display(&a.alarms),
            top_level_seed: a.seed,
            test_lane: a.test_lane,
            train_lanes,
            bags: bags.len(),
            train: cfg,
        },
    )
}

#[derive(Serialize)]
struct ClassifyEcho {
    model: String,
    lanes: String,
    alarms: String,
    lane: Option<u32>,
    pooling: Pooling,
    scored: usize,
}

pub fn classify(a: &ClassifyArgs) -> Result<()> {
    let model = io::load_model(&a.model)?;
    let (_, alarms) = load_alarms(&a.lanes, &a.alarms)?;
    let pooling = Pooling::from(a.pooling);
    let rows = alarms
        .iter()
        .filter(|al| a.lane.is_none_or(|l| l == al.lane_id))
        .map(|al| {
            Ok(ScoreRow {
                lane_id: al.lane_id,
                position_m: al.position_m,
                score: classify_alarm(&al.points, &model, pooling)?,
                label: al.label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if rows.is_empty() {
        return Err(Error::Empty("no alarms to classify".into()));
    }
    io::write_file(&a.out, |b| io::write_scores(&rows, b))?;
    echo(
        echo_path(&a.out),
        &ClassifyEcho {
            model: display(&a.model),
            lanes: display(&a.lanes),
            alarms: display(&a.alarms),
            lane: a.lane,
            pooling,
            scored: rows.len(),
        },
    )
}

#[derive(Serialize)]
struct ScoreEcho {
    scores: Vec<String>,
    lanes: String,
    alarms: String,
    ground_truth: String,
    ignore_clutter: bool,
    halo_m: f64,
    scored_alarms: usize,
}

pub fn score(a: &ScoreArgs) -> Result<()> {
    if !(a.halo > 0.0 && a.halo.is_finite()) {
        return Err(Error::InvalidParameter("halo must be positive".into()));
    }
    let gt = io::read_ground_truth(io::open(&a.ground_truth)?)?;
    let (_, alarms) = load_alarms(&a.lanes, &a.alarms)?;
    let alarms = label_alarms(&alarms, &gt, a.halo);
    let index: HashMap<(u32, u64), usize> = alarms
        .iter()
        .enumerate()
        .map(|(i, al)| ((al.lane_id, al.position_m.to_bits()), i))
        .collect();

    let mut picked = Vec::new();
    let mut classifier = Vec::new();
    for path in &a.scores {
        for row in io::read_scores(io::open(path)?)? {
            let i = *index
                .get(&(row.lane_id, row.position_m.to_bits()))
                .ok_or_else(|| {
                    Error::InvalidParameter(format!(
                        "{}: no alarm at lane {} position {}",
                        path.display(),
                        row.lane_id,
                        row.position_m
                    ))
                })?;
            picked.push(alarms[i].clone());
            classifier.push(row.score);
        }
    }
    let keep = if a.ignore_clutter {
        clutter_mask(&picked, &gt, a.halo)
    } else {
        vec![true; picked.len()]
    };
    let kept: Vec<Alarm> = picked
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(al, _)| al.clone())
        .collect();
    let clf: Vec<f64> = classifier
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(s, _)| *s)
        .collect();
    let pre: Vec<f64> = kept.iter().map(|al| al.prescreener_confidence).collect();
    let report = compare_report(&kept, &pre, &clf, &gt, a.halo)?;

    io::write_file(a.out.join("prescreener_roc.csv"), |b| {
        io::write_roc(&report.prescreener, b)
    })?;
    io::write_file(a.out.join("classifier_roc.csv"), |b| {
        io::write_roc(&report.classifier, b)
    })?;
    for s in &report.subsets {
        let code = s.object_type.code().to_lowercase();
        io::write_file(a.out.join(format!("prescreener_{code}_roc.csv")), |b| {
            io::write_roc(&s.prescreener, b)
        })?;
        io::write_file(a.out.join(format!("classifier_{code}_roc.csv")), |b| {
            io::write_roc(&s.classifier, b)
        })?;
    }
    let text = report.to_text();
    write_bytes(a.out.join("report.txt"), text.as_bytes())?;
    write_bytes(a.out.join("report.csv"), report.to_csv().as_bytes())?;
    print!("{text}");
    echo(
        a.out.join("score.toml"),
        &ScoreEcho {
            scores: a.scores.iter().map(|p| display(p)).collect(),
            lanes: display(&a.lanes),
            alarms: display(&a.alarms),
            ground_truth: display(&a.ground_truth),
            ignore_clutter: a.ignore_clutter,
            halo_m: a.halo,
            scored_alarms: kept.len(),
        },
    )
}

#[derive(Serialize)]
struct PlotEcho {
    roc: Vec<String>,
}

pub fn plot(a: &PlotArgs) -> Result<()> {
    let curves = a
        .roc
        .iter()
        .map(|p| {
            let name = p
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("curve")
                .to_string();
            Ok((name, io::read_roc(io::open(p)?)?))
        })
        .collect::<Result<Vec<_>>>()?;
    write_bytes(&a.out, crate::plot::roc_svg(&curves).as_bytes())?;
    echo(
        echo_path(&a.out),
        &PlotEcho {
            roc: a.roc.iter().map(|p| display(p)).collect(),
        },
    )
}

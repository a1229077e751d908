//! Per-lane alarm counts and a cross-validated comparison for a few seeds.
//!
//! `cargo run --release -p tdefumi --example scene_summary -- [seeds] [--alarms-only]`

use std::time::Instant;

use tdefumi::alarms::AlarmLabel;
use tdefumi::pipeline::{run_scene, scene_alarms, PipelineConfig};
use tdefumi::sim::{default_scene, simulate_scene};

fn main() -> tdefumi::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let alarms_only = args.iter().any(|a| a == "--alarms-only");
    let seeds: Vec<u64> = args.iter().filter_map(|a| a.parse().ok()).collect();
    let seeds = if seeds.is_empty() {
        vec![1, 2, 3, 4, 5]
    } else {
        seeds
    };
    let cfg = PipelineConfig::default();
    for seed in seeds {
        let t = Instant::now();
        let scene = default_scene(seed);
        let (lanes, gt) = simulate_scene(&scene)?;
        let (_, alarms) = scene_alarms(&lanes, &gt, &cfg.alarms)?;
        let mut line = format!("seed {seed}:");
        for lane in &lanes {
            let la: Vec<_> = alarms
                .iter()
                .filter(|a| a.lane_id == lane.lane_id)
                .collect();
            let t = la.iter().filter(|a| a.label == AlarmLabel::Target).count();
            line += &format!(" {}/{}", t, la.len() - t);
        }
        println!("{line}  total {}", alarms.len());
        if alarms_only {
            continue;
        }
        let run = run_scene(&scene, &cfg)?;
        let r = &run.report;
        let half = r.prescreener_detection.total_false_alarms / 2;
        println!(
            "  auc prescreener {:.3} classifier {:.3}; objects ceiling {} classifier@{} {} prescreener@{} {}; {:.1}s",
            r.prescreener.auc,
            r.classifier.auc,
            r.prescreener_detection.ceiling,
            half,
            r.classifier_detection.detected_within(half),
            half,
            r.prescreener_detection.detected_within(half),
            t.elapsed().as_secs_f64()
        );
        for (lane, m) in &run.models {
            println!(
                "    lane {lane}: epochs {} final objective {:.4}",
                m.log.len(),
                m.log.last().unwrap_or(&f64::NAN)
            );
        }
    }
    Ok(())
}

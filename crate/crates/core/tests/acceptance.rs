//! Acceptance suite. Each test prints one PASS/FAIL line (written straight
//! to stdout so it shows without `--nocapture`) and then asserts.

mod common;

use std::io::Write;
use std::time::{Duration, Instant};

use common::*;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use tdefumi::alarms::AlarmLabel;
use tdefumi::evaluation::roc;
use tdefumi::io::{read_model, write_alarms, write_model};
use tdefumi::pipeline::{run_scene, PipelineConfig, PipelineRun};
use tdefumi::sim::{default_scene, ObjectType, ScenePlan};
use tdefumi::solvers::{jomp, lasso, lasso_objective, omp, Dictionary, SolverConfig};
use tdefumi::td_efumi::{
    bag_accuracy, classify_alarm, gradients, latent_posterior, separable_instance, train, BagLabel,
    TrainConfig,
};

fn report(criterion: u32, pass: bool, detail: &str) {
    let line = format!(
        "criterion {criterion}: {} {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

fn finish(criterion: u32, pass: bool, detail: String) {
    report(criterion, pass, &detail);
    assert!(pass, "criterion {criterion}: {detail}");
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

#[test]
fn criterion_1_gradients_match_finite_differences() {
    let start = Instant::now();
    let worst = (0..20)
        .map(gradient_oracle::check)
        .fold([0.0f64; 3], |m, e| {
            [m[0].max(e[0]), m[1].max(e[1]), m[2].max(e[2])]
        });
    let elapsed = start.elapsed();
    let pass = worst.iter().all(|e| *e <= 1e-5) && elapsed < Duration::from_secs(10);
    finish(
        1,
        pass,
        format!(
            "20 instances, worst relative error dictionary {:.1e} weights {:.1e} bias {:.1e} (limit 1e-5), {}",
            worst[0],
            worst[1],
            worst[2],
            secs(elapsed)
        ),
    );
}

#[test]
fn criterion_2_sparse_solver_oracles() {
    let start = Instant::now();
    let mut r = rng(2);
    let mut lasso_gap: f64 = 0.0;
    for _ in 0..50 {
        let d = random_dictionary(&mut r, 6, 4, 1);
        let x = gaussian(&mut r, 6);
        let l1 = r.random_range(0.01..0.8);
        let cfg = SolverConfig {
            lambda1: l1,
            tolerance: 1e-14,
            max_iters: 1_000_000,
            ..SolverConfig::default()
        };
        let code = lasso(&x, &d, &cfg).unwrap();
        let (_, best) = enumerate_elastic_net(&x, &d, l1, 0.0);
        lasso_gap = lasso_gap.max((lasso_objective(&x, &d, &code.weights, l1, 0.0) - best).abs());
    }
    let mut omp_dot: f64 = 0.0;
    for _ in 0..50 {
        let d = random_dictionary(&mut r, 10, 15, 2);
        let x = gaussian(&mut r, 10);
        let cfg = SolverConfig {
            max_atoms: r.random_range(1..=6),
            ..SolverConfig::default()
        };
        let code = omp(&x, &d, &cfg).unwrap();
        let res = d.residual(&x, &code.weights);
        for k in code.active_set() {
            let c: f64 = d.atom(k).iter().zip(&res).map(|(a, b)| a * b).sum();
            omp_dot = omp_dot.max(c.abs());
        }
    }
    let mut jomp_agree = 0;
    for _ in 0..100 {
        let d = random_dictionary(&mut r, 8, 12, 2);
        let (xa, xb) = (gaussian(&mut r, 8), gaussian(&mut r, 8));
        let j = jomp(&xa, &xb, &d, &SolverConfig::default()).unwrap();
        let (k, best) = best_joint_atom(&xa, &xb, &d);
        let same = j.a.active_set() == vec![k]
            && (j.residual_a.powi(2) + j.residual_b.powi(2) - best).abs() <= 1e-10;
        jomp_agree += same as usize;
    }
    let elapsed = start.elapsed();
    let pass = lasso_gap <= 1e-8
        && omp_dot <= 1e-8
        && jomp_agree == 100
        && elapsed < Duration::from_secs(10);
    finish(
        2,
        pass,
        format!(
            "lasso vs enumeration max gap {lasso_gap:.1e} (limit 1e-8), OMP max |<d_k, r>| {omp_dot:.1e} (limit 1e-8), \
             JOMP equals brute force {jomp_agree}/100, {}",
            secs(elapsed)
        ),
    );
}

/// Component of `v` orthogonal to the span of the dictionary's non-target atoms.
fn orthogonal_to_background(v: &[f64], d: &Dictionary) -> Vec<f64> {
    let cols: Vec<usize> = d.nontarget_range().collect();
    let m = DMatrix::from_fn(d.dim(), cols.len(), |r, c| d.atom(cols[c])[r]);
    let vv = DVector::from_column_slice(v);
    let coef = m.clone().svd(true, true).solve(&vv, 1e-14).unwrap();
    (vv - m * coef).as_slice().to_vec()
}

#[test]
fn criterion_3_latent_posterior_cases() {
    let mut r = rng(3);
    let d = random_dictionary(&mut r, 10, 6, 2);
    let cfg = TrainConfig {
        lambda: 0.0,
        solver_tolerance: 1e-15,
        solver_max_iters: 1_000_000,
        ..TrainConfig::default()
    };

    let x: Vec<f64> = d.atom(4).iter().map(|v| 0.7 * v).collect();
    let zero = latent_posterior(&x, &d, &cfg, BagLabel::Positive).unwrap();
    let neg = latent_posterior(&gaussian(&mut r, 10), &d, &cfg, BagLabel::Negative).unwrap();

    let x = orthogonal_to_background(&gaussian(&mut r, 10), &d);
    let r2: f64 = x.iter().map(|v| v * v).sum();
    let half_cfg = TrainConfig {
        lambda: 0.1,
        beta: std::f64::consts::LN_2 / r2,
        ..cfg.clone()
    };
    let half = latent_posterior(&x, &d, &half_cfg, BagLabel::Positive).unwrap();

    let close = |p: tdefumi::td_efumi::LatentPosterior, p0: f64, p1: f64| {
        (p.p0 - p0).abs() <= 1e-12 && (p.p1 - p1).abs() <= 1e-12
    };
    let pass = close(zero, 1.0, 0.0) && close(neg, 1.0, 0.0) && close(half, 0.5, 0.5);
    finish(
        3,
        pass,
        format!(
            "zero residual ({:.3e}, {:.3e}), negative bag ({}, {}), beta = ln2/r^2 ({:.15}, {:.15})",
            zero.p0, zero.p1, neg.p0, neg.p1, half.p0, half.p1
        ),
    );
}

#[test]
fn criterion_4_training_stability() {
    let start = Instant::now();
    let mut increases = 0;
    let mut worst_rise: f64 = 0.0;
    for seed in 0..10 {
        let inst = gradient_oracle::instance(100 + seed, 10, 6, 30);
        let mut d = inst.d.clone();
        let mut clf = inst.clf.clone();
        let mut f = inst.value(&d, &clf);
        for _ in 0..10 {
            let codes = inst.codes(&d);
            let g = gradients(
                &inst.points,
                &d,
                &clf,
                &inst.posteriors,
                &codes,
                &inst.cfg,
                &inst.stats,
            )
            .unwrap();
            let rho = 1e-4;
            let raw: Vec<f64> = d
                .raw()
                .iter()
                .zip(&g.dictionary)
                .map(|(p, gv)| p - rho * gv)
                .collect();
            d = Dictionary::from_raw_projected(d.dim(), d.target_count(), raw).unwrap();
            clf.w
                .iter_mut()
                .zip(&g.w)
                .for_each(|(p, gv)| *p -= rho * gv);
            clf.psi -= rho * g.psi;
            let next = inst.value(&d, &clf);
            if next > f {
                increases += 1;
                worst_rise = worst_rise.max(next - f);
            }
            f = next;
        }
    }

    let grid = tdefumi::dsrf::FrequencyGrid::default_wideband();
    let bags = separable_instance(&grid, 4).unwrap();
    let model = train(&bags, &grid, &TrainConfig::default()).unwrap();
    let accuracy = bag_accuracy(&model, &bags, 0.5).unwrap();
    let elapsed = start.elapsed();
    let pass = increases == 0
        && accuracy == 1.0
        && model.log.len() <= 100
        && elapsed < Duration::from_secs(60);
    finish(
        4,
        pass,
        format!(
            "objective increases in 100 small steps: {increases} (worst {worst_rise:.1e}); separable instance bag \
             accuracy {:.1}% after {} epochs, {}",
            100.0 * accuracy,
            model.log.len(),
            secs(elapsed)
        ),
    );
}

fn half_false_alarm_detections(run: &PipelineRun) -> (usize, usize, usize) {
    let det = &run.report.prescreener_detection;
    let half = det.total_false_alarms / 2;
    (
        run.report.classifier_detection.detected_within(half),
        det.ceiling,
        half,
    )
}

#[test]
fn criterion_5_end_to_end_synthetic_reproduction() {
    let start = Instant::now();
    let cfg = PipelineConfig::default();
    let mut passed = 0;
    let mut lines = Vec::new();
    for seed in 1..=5 {
        let run = run_scene(&default_scene(seed), &cfg).unwrap();
        let (pre, clf) = (run.report.prescreener.auc, run.report.classifier.auc);
        let (found, ceiling, half) = half_false_alarm_detections(&run);
        let ok = clf >= pre + 0.05 && found + 2 >= ceiling;
        passed += ok as usize;
        lines.push(format!(
            "seed {seed} {}: {} alarms, AUC {pre:.3} -> {clf:.3}, {found}/{ceiling} objects at {half} false alarms",
            if ok { "ok" } else { "miss" },
            run.report.prescreener.targets + run.report.prescreener.false_alarms
        ));
    }
    let elapsed = start.elapsed();
    let pass = passed >= 4 && elapsed < Duration::from_secs(600);
    finish(
        5,
        pass,
        format!(
            "{passed}/5 seeds (need 4), {}; {}",
            secs(elapsed),
            lines.join("; ")
        ),
    );
}

#[test]
fn criterion_6_low_metal_subset_tracks_full_curve() {
    let run = run_scene(
        &ScenePlan::lmt_dominant().build(1),
        &PipelineConfig::default(),
    )
    .unwrap();
    let rep = &run.report;
    let subset = |t: ObjectType| {
        rep.subsets
            .iter()
            .find(|s| s.object_type == t)
            .expect("subset present")
    };
    let (lmt, hmt) = (subset(ObjectType::LowMetal), subset(ObjectType::HighMetal));
    let gap = |c: &tdefumi::evaluation::RocCurve, full: &tdefumi::evaluation::RocCurve| {
        c.max_vertical_gap(full, 201)
    };
    let (lmt_gap, hmt_gap) = (
        gap(&lmt.classifier, &rep.classifier),
        gap(&hmt.classifier, &rep.classifier),
    );
    let (lmt_pre, hmt_pre) = (
        gap(&lmt.prescreener, &rep.prescreener),
        gap(&hmt.prescreener, &rep.prescreener),
    );
    let pass = lmt_gap < hmt_gap;
    finish(
        6,
        pass,
        format!(
            "classifier max vertical gap to full curve: LMT {lmt_gap:.3} vs HMT {hmt_gap:.3} \
             (prescreener: LMT {lmt_pre:.3} vs HMT {hmt_pre:.3}); {} LMT / {} HMT target alarms",
            lmt.classifier.targets, hmt.classifier.targets
        ),
    );
}

fn fingerprint(run: &PipelineRun) -> Vec<u8> {
    let mut out = Vec::new();
    let mut side = Vec::new();
    write_alarms(&run.alarms, &mut out, &mut side).unwrap();
    out.extend(side);
    for s in &run.scores {
        out.extend(s.to_bits().to_le_bytes());
    }
    for (lane, m) in &run.models {
        out.extend(lane.to_le_bytes());
        write_model(m, &mut out).unwrap();
    }
    out.extend(run.report.to_csv().into_bytes());
    out
}

#[test]
fn criterion_7_determinism_and_persistence() {
    let scene = default_scene(3);
    let cfg = PipelineConfig::default();
    let a = run_scene(&scene, &cfg).unwrap();
    let b = run_scene(&scene, &cfg).unwrap();
    let identical = fingerprint(&a) == fingerprint(&b);

    let mut mismatched = 0;
    let mut checked = 0;
    for (lane, model) in &a.models {
        let mut buf = Vec::new();
        write_model(model, &mut buf).unwrap();
        let loaded = read_model(buf.as_slice()).unwrap();
        for (alarm, score) in a
            .alarms
            .iter()
            .zip(&a.scores)
            .filter(|(al, _)| al.lane_id == *lane)
        {
            let again = classify_alarm(&alarm.points, &loaded, cfg.pooling).unwrap();
            checked += 1;
            mismatched += (again.to_bits() != score.to_bits()) as usize;
        }
    }
    let pass = identical && mismatched == 0 && checked == a.alarms.len();
    finish(
        7,
        pass,
        format!(
            "repeated runs byte-identical: {identical}; reloaded models reproduce {}/{checked} scores bit-exactly",
            checked - mismatched
        ),
    );
}

#[test]
fn criterion_8_auc_matches_pairwise_oracle() {
    let mut r = rng(8);
    let mut worst: f64 = 0.0;
    for trial in 0..20 {
        let quantize = (trial % 2 == 1).then_some(0.2);
        let (s, l) = random_alarm_scores(&mut r, 200, quantize);
        worst = worst.max((roc(&s, &l).unwrap().auc - mann_whitney(&s, &l)).abs());
        assert!(l.iter().all(|x| *x != AlarmLabel::Unlabeled));
    }
    finish(
        8,
        worst <= 1e-10,
        format!("20 sets of 200 alarms, max |AUC - Mann-Whitney| {worst:.1e} (limit 1e-10)"),
    );
}

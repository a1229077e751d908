//! File formats. All floats are written with 17 significant digits so a
//! write/read cycle is exact.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::alarms::{Alarm, AlarmLabel, ConfidenceMap};
use crate::dsrf::{stack_complex, ComplexSpectrum, FrequencyGrid};
use crate::error::{Error, Result};
use crate::evaluation::{RocCurve, RocPoint};
use crate::sim::{GroundTruthObject, Lane, ObjectType, SceneConfig};

pub use crate::td_efumi::{load_model, read_model, save_model, write_model};

const FREQ_PREFIX: &str = "# freqs_rad_s:";
pub const GROUND_TRUTH_HEADER: &str = "lane_id,position_m,object_type";
pub const CONFIDENCE_HEADER: &str = "position_m,confidence";
pub const ALARM_HEADER: &str = "lane_id,position_m,prescreener_conf,label";
pub const ALARM_POINTS_HEADER: &str = "alarm_index,lane_id,row_index";
pub const SCORE_HEADER: &str = "lane_id,position_m,score,label";
pub const ROC_HEADER: &str = "threshold,pd,far";

fn f(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(s: &str, line: usize, what: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::format(line, format!("{what}: `{}` is not a number", s.trim())))
}

fn parse_u32(s: &str, line: usize, what: &str) -> Result<u32> {
    s.trim()
        .parse()
        .map_err(|_| Error::format(line, format!("{what}: `{}` is not an id", s.trim())))
}

fn parse_usize(s: &str, line: usize, what: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| Error::format(line, format!("{what}: `{}` is not an index", s.trim())))
}

/// Numbered non-empty lines.
fn lines<R: Read>(input: R) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

/// Data rows after a required header, each split into exactly `width` fields.
fn table<R: Read>(input: R, header: &str) -> Result<Vec<(usize, Vec<String>)>> {
    let rows = lines(input)?;
    let Some((line, first)) = rows.first() else {
        return Err(Error::format(1, format!("missing header `{header}`")));
    };
    if first.trim() != header {
        return Err(Error::format(*line, format!("expected header `{header}`")));
    }
    let width = header.split(',').count();
    rows[1..]
        .iter()
        .map(|(n, l)| {
            let fields: Vec<String> = l.split(',').map(|s| s.trim().to_string()).collect();
            if fields.len() != width {
                return Err(Error::format(
                    *n,
                    format!("expected {width} fields, found {}", fields.len()),
                ));
            }
            Ok((*n, fields))
        })
        .collect()
}

pub fn write_lane<W: Write>(lane: &Lane, mut out: W) -> Result<()> {
    let mut s = String::from(FREQ_PREFIX);
    s.push(' ');
    s.push_str(
        &lane
            .grid
            .omegas()
            .iter()
            .map(|&w| f(w))
            .collect::<Vec<_>>()
            .join(","),
    );
    s.push('\n');
    for (p, spec) in lane.positions.iter().zip(&lane.spectra) {
        s.push_str(&f(*p));
        for v in stack_complex(spec).0 {
            s.push(',');
            s.push_str(&f(v));
        }
        s.push('\n');
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

pub fn read_lane<R: Read>(input: R, lane_id: u32) -> Result<Lane> {
    let rows = lines(input)?;
    let Some((_, first)) = rows.first() else {
        return Err(Error::format(1, "empty lane file"));
    };
    let freqs = first
        .strip_prefix(FREQ_PREFIX)
        .ok_or_else(|| Error::format(1, format!("first line must start with `{FREQ_PREFIX}`")))?;
    let omegas = freqs
        .split(',')
        .map(|s| parse_f64(s, 1, "frequency"))
        .collect::<Result<Vec<_>>>()?;
    let grid = FrequencyGrid::new(omegas).map_err(|e| Error::format(1, e.to_string()))?;
    let n = grid.len();
    let mut positions = Vec::new();
    let mut spectra = Vec::new();
    for (line, row) in &rows[1..] {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 1 + 2 * n {
            return Err(Error::format(
                *line,
                format!("expected {} fields, found {}", 1 + 2 * n, fields.len()),
            ));
        }
        positions.push(parse_f64(fields[0], *line, "position")?);
        let vals = fields[1..]
            .iter()
            .map(|s| parse_f64(s, *line, "spectrum"))
            .collect::<Result<Vec<_>>>()?;
        spectra.push(ComplexSpectrum {
            values: (0..n)
                .map(|i| Complex64::new(vals[i], vals[n + i]))
                .collect(),
        });
    }
    Lane::new(lane_id, grid, positions, spectra)
}

pub fn write_ground_truth<W: Write>(gt: &[GroundTruthObject], mut out: W) -> Result<()> {
    let mut s = format!("{GROUND_TRUTH_HEADER}\n");
    for o in gt {
        let _ = writeln!(s, "{},{},{}", o.lane_id, f(o.position_m), o.object_type);
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

pub fn read_ground_truth<R: Read>(input: R) -> Result<Vec<GroundTruthObject>> {
    table(input, GROUND_TRUTH_HEADER)?
        .into_iter()
        .map(|(line, r)| {
            Ok(GroundTruthObject {
                lane_id: parse_u32(&r[0], line, "lane_id")?,
                position_m: parse_f64(&r[1], line, "position_m")?,
                object_type: r[2]
                    .parse::<ObjectType>()
                    .map_err(|e| Error::format(line, e.to_string()))?,
            })
        })
        .collect()
}

pub fn write_confidence_map<W: Write>(map: &ConfidenceMap, mut out: W) -> Result<()> {
    let mut s = format!("{CONFIDENCE_HEADER}\n");
    for (p, c) in map.positions.iter().zip(&map.confidences) {
        let _ = writeln!(s, "{},{}", f(*p), f(*c));
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

pub fn read_confidence_map<R: Read>(input: R, lane_id: u32) -> Result<ConfidenceMap> {
    let mut positions = Vec::new();
    let mut confidences = Vec::new();
    for (line, r) in table(input, CONFIDENCE_HEADER)? {
        positions.push(parse_f64(&r[0], line, "position_m")?);
        confidences.push(parse_f64(&r[1], line, "confidence")?);
    }
    ConfidenceMap::new(lane_id, positions, confidences)
}

/// Alarm table plus the sidecar listing the lane rows behind each alarm.
pub fn write_alarms<W: Write, S: Write>(
    alarms: &[Alarm],
    mut out: W,
    mut sidecar: S,
) -> Result<()> {
    let mut s = format!("{ALARM_HEADER}\n");
    let mut side = format!("{ALARM_POINTS_HEADER}\n");
    for (i, a) in alarms.iter().enumerate() {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            a.lane_id,
            f(a.position_m),
            f(a.prescreener_confidence),
            a.label.code()
        );
        for r in &a.rows {
            let _ = writeln!(side, "{i},{},{r}", a.lane_id);
        }
    }
    out.write_all(s.as_bytes())?;
    sidecar.write_all(side.as_bytes())?;
    Ok(())
}

/// Rebuild alarms from their files; points are re-read from `lanes`, which
/// must be the mean-subtracted lanes the alarms were cut from.
pub fn read_alarms<R: Read, S: Read>(input: R, sidecar: S, lanes: &[Lane]) -> Result<Vec<Alarm>> {
    let mut alarms = table(input, ALARM_HEADER)?
        .into_iter()
        .map(|(line, r)| {
            Ok(Alarm {
                lane_id: parse_u32(&r[0], line, "lane_id")?,
                position_m: parse_f64(&r[1], line, "position_m")?,
                points: Vec::new(),
                rows: Vec::new(),
                prescreener_confidence: parse_f64(&r[2], line, "prescreener_conf")?,
                label: r[3]
                    .parse()
                    .map_err(|e: Error| Error::format(line, e.to_string()))?,
                matched_type: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    for (line, r) in table(sidecar, ALARM_POINTS_HEADER)? {
        let idx = parse_usize(&r[0], line, "alarm_index")?;
        let lane_id = parse_u32(&r[1], line, "lane_id")?;
        let row = parse_usize(&r[2], line, "row_index")?;
        let alarm = alarms
            .get_mut(idx)
            .ok_or_else(|| Error::format(line, format!("no alarm {idx}")))?;
        if alarm.lane_id != lane_id {
            return Err(Error::format(
                line,
                format!("alarm {idx} is on lane {}", alarm.lane_id),
            ));
        }
        let lane = lanes
            .iter()
            .find(|l| l.lane_id == lane_id)
            .ok_or_else(|| Error::format(line, format!("lane {lane_id} not loaded")))?;
        if row >= lane.len() {
            return Err(Error::format(
                line,
                format!("row {row} outside lane {lane_id}"),
            ));
        }
        alarm.rows.push(row);
        alarm.points.push(lane.feature(row));
    }
    if let Some(i) = alarms.iter().position(|a| a.points.is_empty()) {
        return Err(Error::format(
            0,
            format!("alarm {i} has no points in the sidecar"),
        ));
    }
    Ok(alarms)
}

/// One classifier score per alarm.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub lane_id: u32,
    pub position_m: f64,
    pub score: f64,
    pub label: AlarmLabel,
}

pub fn write_scores<W: Write>(rows: &[ScoreRow], mut out: W) -> Result<()> {
    let mut s = format!("{SCORE_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            r.lane_id,
            f(r.position_m),
            f(r.score),
            r.label.code()
        );
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

pub fn read_scores<R: Read>(input: R) -> Result<Vec<ScoreRow>> {
    table(input, SCORE_HEADER)?
        .into_iter()
        .map(|(line, r)| {
            Ok(ScoreRow {
                lane_id: parse_u32(&r[0], line, "lane_id")?,
                position_m: parse_f64(&r[1], line, "position_m")?,
                score: parse_f64(&r[2], line, "score")?,
                label: r[3]
                    .parse()
                    .map_err(|e: Error| Error::format(line, e.to_string()))?,
            })
        })
        .collect()
}

pub fn write_roc<W: Write>(curve: &RocCurve, mut out: W) -> Result<()> {
    let mut s = format!("{ROC_HEADER}\n");
    for p in &curve.points {
        let _ = writeln!(s, "{},{},{}", f(p.threshold), f(p.pd), f(p.far));
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

/// ROC points only; the area is recomputed by the trapezoid rule.
pub fn read_roc<R: Read>(input: R) -> Result<RocCurve> {
    let points = table(input, ROC_HEADER)?
        .into_iter()
        .map(|(line, r)| {
            let p = RocPoint {
                threshold: parse_f64(&r[0], line, "threshold")?,
                pd: parse_f64(&r[1], line, "pd")?,
                far: parse_f64(&r[2], line, "far")?,
            };
            if !(0.0..=1.0).contains(&p.pd) || !(0.0..=1.0).contains(&p.far) {
                return Err(Error::format(line, "pd and far must lie in [0, 1]"));
            }
            Ok(p)
        })
        .collect::<Result<Vec<_>>>()?;
    if points.is_empty() {
        return Err(Error::format(1, "ROC file has no points"));
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].far - w[0].far) * (w[1].pd + w[0].pd) / 2.0)
        .sum();
    Ok(RocCurve {
        points,
        auc,
        targets: 0,
        false_alarms: 0,
    })
}

fn with_path(e: std::io::Error, path: &Path) -> Error {
    Error::Io(std::io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    ))
}

fn create(path: &Path) -> Result<std::fs::File> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| with_path(e, dir))?;
        }
    }
    std::fs::File::create(path).map_err(|e| with_path(e, path))
}

/// Write through a closure into a freshly created file.
pub fn write_file(
    path: impl AsRef<Path>,
    f: impl FnOnce(&mut Vec<u8>) -> Result<()>,
) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    create(path.as_ref())?.write_all(&buf)?;
    Ok(())
}

pub fn open(path: impl AsRef<Path>) -> Result<std::fs::File> {
    let path = path.as_ref();
    std::fs::File::open(path).map_err(|e| with_path(e, path))
}

pub fn lane_file_name(lane_id: u32) -> String {
    format!("lane_{lane_id}.csv")
}

/// Lane files `lane_<id>.csv` in `dir`, sorted by id.
pub fn find_lane_files(dir: impl AsRef<Path>) -> Result<Vec<(u32, PathBuf)>> {
    let dir = dir.as_ref();
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| with_path(e, dir))? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(id) = name
            .strip_prefix("lane_")
            .and_then(|s| s.strip_suffix(".csv"))
            .and_then(|s| s.parse::<u32>().ok())
        {
            out.push((id, path));
        }
    }
    out.sort();
    Ok(out)
}

pub fn load_lanes(dir: impl AsRef<Path>) -> Result<Vec<Lane>> {
    find_lane_files(dir)?
        .into_iter()
        .map(|(id, path)| read_lane(open(&path)?, id))
        .collect()
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<SceneConfig> {
    let path = path.as_ref();
    SceneConfig::from_toml(&std::fs::read_to_string(path).map_err(|e| with_path(e, path))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lane_round_trip() {
        let grid = FrequencyGrid::new(vec![1.0, 2.5]).unwrap();
        let spectra = vec![
            ComplexSpectrum {
                values: vec![Complex64::new(0.1, -0.2), Complex64::new(1.0 / 3.0, 0.0)],
            },
            ComplexSpectrum {
                values: vec![Complex64::new(-1e-300, 5.0), Complex64::new(0.0, -0.7)],
            },
        ];
        let lane = Lane::new(4, grid, vec![0.0, 0.03], spectra).unwrap();
        let mut buf = Vec::new();
        write_lane(&lane, &mut buf).unwrap();
        assert!(buf.starts_with(b"# freqs_rad_s: "));
        assert_eq!(read_lane(buf.as_slice(), 4).unwrap(), lane);
    }

    #[test]
    fn malformed_rows_report_line() {
        let text = "lane_id,position_m,object_type\n1,0.5,HMT\n2,abc,LMT\n";
        match read_ground_truth(text.as_bytes()) {
            Err(Error::Format { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let text = "lane_id,position_m,object_type\n1,0.5\n";
        assert!(read_ground_truth(text.as_bytes()).is_err());
    }

    #[test]
    fn roc_round_trip_keeps_infinities() {
        let c = crate::evaluation::roc(
            &[0.3, 0.7, 0.1],
            &[
                AlarmLabel::Target,
                AlarmLabel::FalseAlarm,
                AlarmLabel::Target,
            ],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_roc(&c, &mut buf).unwrap();
        let back = read_roc(buf.as_slice()).unwrap();
        assert_eq!(back.points, c.points);
        assert_eq!(back.auc, c.auc);
    }
}

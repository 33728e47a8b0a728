//! CSV schemas. Every float is written with 17 significant digits so that
//! reading a file back reproduces the values exactly.
//!
//! | file | header |
//! |------|--------|
//! | trajectory | `t,x,xdot,alpha,alphadot,u` |
//! | training log | `episode,steps,reward,moving_avg,loss` |
//! | sensitivity | `# param_index=K param=NAME params=m_c,...` then `t,s_x,s_xdot,s_alpha,s_alphadot` |
//! | region of attraction | `x0,xdot0,alpha0,alphadot0,success,reason,pairing` |
//!
//! In a trajectory file `u` is the voltage commanded at that row's state and
//! held until the next row; the final row carries the controller's output at
//! the final state.

use std::io::{Read, Write};

use cartpole_core::dynamics::State;
use cartpole_core::integrator::Trajectory;
use cartpole_core::params::ParamId;
use cartpole_core::roa::{FailureReason, Pairing, RoaSample};
use cartpole_core::sensitivity::{Method, SensitivityRecord};
use cartpole_core::trainer::EpisodeLog;

use crate::error::CliError;
use crate::weights::fmt_f64;

pub const TRAJECTORY_HEADER: [&str; 6] = ["t", "x", "xdot", "alpha", "alphadot", "u"];
pub const TRAINING_HEADER: [&str; 5] = ["episode", "steps", "reward", "moving_avg", "loss"];
pub const SENSITIVITY_HEADER: [&str; 5] = ["t", "s_x", "s_xdot", "s_alpha", "s_alphadot"];
pub const ROA_HEADER: [&str; 7] = [
    "x0",
    "xdot0",
    "alpha0",
    "alphadot0",
    "success",
    "reason",
    "pairing",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub z: State<f64>,
    pub u: f64,
}

/// Sensitivity series as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityTable {
    pub param: ParamId,
    pub times: Vec<f64>,
    pub s: [Vec<f64>; 4],
}

impl From<&SensitivityRecord> for SensitivityTable {
    fn from(r: &SensitivityRecord) -> Self {
        SensitivityTable {
            param: r.spec.param,
            times: r.times.clone(),
            s: r.s.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoaRow {
    pub sample: RoaSample,
    pub pairing: Pairing,
}

fn csv_err(origin: &str, e: csv::Error) -> CliError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    CliError::parse(origin, line, e.to_string())
}

fn io_err(origin: &str, e: std::io::Error) -> CliError {
    CliError::io(origin, e)
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn records<R: Read>(
    r: R,
    origin: &str,
    header: &[&str],
) -> Result<Vec<(usize, csv::StringRecord)>, CliError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let got = rdr.headers().map_err(|e| csv_err(origin, e))?.clone();
    if got.iter().ne(header.iter().copied()) {
        return Err(CliError::parse(
            origin,
            1,
            format!(
                "expected header `{}`, got `{}`",
                header.join(","),
                got.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    rdr.records()
        .map(|r| {
            let r = r.map_err(|e| csv_err(origin, e))?;
            let line = r.position().map_or(0, |p| p.line() as usize);
            Ok((line, r))
        })
        .collect()
}

fn field<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    i: usize,
    origin: &str,
    line: usize,
) -> Result<T, CliError> {
    let s = rec.get(i).unwrap_or("");
    s.parse().map_err(|_| {
        CliError::parse(
            origin,
            line,
            format!("cannot parse field {} (`{s}`)", i + 1),
        )
    })
}

fn f64s<const N: usize>(
    rec: &csv::StringRecord,
    origin: &str,
    line: usize,
) -> Result<[f64; N], CliError> {
    let mut out = [0.0; N];
    for (i, v) in out.iter_mut().enumerate() {
        *v = field(rec, i, origin, line)?;
    }
    Ok(out)
}

/// Writes one row per stored state. `final_u` fills the `u` column of the
/// last row.
pub fn write_trajectory<W: Write>(
    w: W,
    traj: &Trajectory<f64>,
    final_u: f64,
) -> Result<(), CliError> {
    let mut wr = writer(w);
    let o = "trajectory";
    wr.write_record(TRAJECTORY_HEADER)
        .map_err(|e| csv_err(o, e))?;
    for (k, (t, z)) in traj.times.iter().zip(&traj.states).enumerate() {
        let u = traj.voltages.get(k).copied().unwrap_or(final_u);
        let row = [*t, z[0], z[1], z[2], z[3], u].map(fmt_f64);
        wr.write_record(&row).map_err(|e| csv_err(o, e))?;
    }
    wr.flush().map_err(|e| io_err(o, e))
}

pub fn read_trajectory<R: Read>(r: R, origin: &str) -> Result<Vec<TrajectoryRow>, CliError> {
    records(r, origin, &TRAJECTORY_HEADER)?
        .into_iter()
        .map(|(line, rec)| {
            let v: [f64; 6] = f64s(&rec, origin, line)?;
            Ok(TrajectoryRow {
                t: v[0],
                z: State::new(v[1], v[2], v[3], v[4]),
                u: v[5],
            })
        })
        .collect()
}

pub fn write_training_log<W: Write>(w: W, log: &[EpisodeLog]) -> Result<(), CliError> {
    let mut wr = writer(w);
    let o = "training log";
    wr.write_record(TRAINING_HEADER)
        .map_err(|e| csv_err(o, e))?;
    for e in log {
        let row = [
            e.episode.to_string(),
            e.steps.to_string(),
            fmt_f64(e.reward),
            fmt_f64(e.moving_avg),
            fmt_f64(e.loss),
        ];
        wr.write_record(&row).map_err(|e| csv_err(o, e))?;
    }
    wr.flush().map_err(|e| io_err(o, e))
}

pub fn read_training_log<R: Read>(r: R, origin: &str) -> Result<Vec<EpisodeLog>, CliError> {
    records(r, origin, &TRAINING_HEADER)?
        .into_iter()
        .map(|(line, rec)| {
            Ok(EpisodeLog {
                episode: field(&rec, 0, origin, line)?,
                steps: field(&rec, 1, origin, line)?,
                reward: field(&rec, 2, origin, line)?,
                moving_avg: field(&rec, 3, origin, line)?,
                loss: field(&rec, 4, origin, line)?,
            })
        })
        .collect()
}

/// `sens_<system>_<param>_<method>_<h>.csv`; the step reads `none` for the
/// forward sensitivity equations.
pub fn sensitivity_file_name(system: &str, param: ParamId, method: Method, h: f64) -> String {
    let step = match method {
        Method::ForwardOde => "none".to_string(),
        _ => format!("{h:e}"),
    };
    format!(
        "sens_{system}_{}_{}_{step}.csv",
        param.symbol(),
        method.tag()
    )
}

pub fn write_sensitivity<W: Write>(mut w: W, table: &SensitivityTable) -> Result<(), CliError> {
    let o = "sensitivity";
    writeln!(
        w,
        "# param_index={} param={} params={}",
        table.param.index(),
        table.param.symbol(),
        ParamId::ordering_line()
    )
    .map_err(|e| io_err(o, e))?;
    let mut wr = writer(w);
    wr.write_record(SENSITIVITY_HEADER)
        .map_err(|e| csv_err(o, e))?;
    for (k, t) in table.times.iter().enumerate() {
        let row = [
            *t,
            table.s[0][k],
            table.s[1][k],
            table.s[2][k],
            table.s[3][k],
        ]
        .map(fmt_f64);
        wr.write_record(&row).map_err(|e| csv_err(o, e))?;
    }
    wr.flush().map_err(|e| io_err(o, e))
}

pub fn read_sensitivity<R: Read>(mut r: R, origin: &str) -> Result<SensitivityTable, CliError> {
    let mut text = String::new();
    r.read_to_string(&mut text).map_err(|e| io_err(origin, e))?;
    let first = text.lines().next().unwrap_or("");
    let param = first
        .strip_prefix('#')
        .and_then(|c| {
            c.split_whitespace()
                .find_map(|kv| kv.strip_prefix("param="))
        })
        .ok_or_else(|| CliError::parse(origin, 1, "missing `# ... param=NAME` comment line"))?
        .parse::<ParamId>()
        .map_err(|e| CliError::parse(origin, 1, e.to_string()))?;
    let mut times = Vec::new();
    let mut s: [Vec<f64>; 4] = Default::default();
    for (line, rec) in records(text.as_bytes(), origin, &SENSITIVITY_HEADER)? {
        let v: [f64; 5] = f64s(&rec, origin, line)?;
        times.push(v[0]);
        for j in 0..4 {
            s[j].push(v[j + 1]);
        }
    }
    Ok(SensitivityTable { param, times, s })
}

pub fn write_roa<W: Write>(w: W, rows: &[RoaRow]) -> Result<(), CliError> {
    let mut wr = writer(w);
    let o = "roa";
    wr.write_record(ROA_HEADER).map_err(|e| csv_err(o, e))?;
    for r in rows {
        let z = r.sample.ic;
        let row = [
            fmt_f64(z[0]),
            fmt_f64(z[1]),
            fmt_f64(z[2]),
            fmt_f64(z[3]),
            u8::from(r.sample.success).to_string(),
            r.sample.reason.name().to_string(),
            r.pairing.letter().to_string(),
        ];
        wr.write_record(&row).map_err(|e| csv_err(o, e))?;
    }
    wr.flush().map_err(|e| io_err(o, e))
}

fn parse_reason(s: &str) -> Option<FailureReason> {
    [
        FailureReason::None,
        FailureReason::CartBound,
        FailureReason::AngleFinal,
        FailureReason::Diverged,
    ]
    .into_iter()
    .find(|r| r.name() == s)
}

pub fn read_roa<R: Read>(r: R, origin: &str) -> Result<Vec<RoaRow>, CliError> {
    records(r, origin, &ROA_HEADER)?
        .into_iter()
        .map(|(line, rec)| {
            let v: [f64; 4] = f64s(&rec, origin, line)?;
            let success = match rec.get(4) {
                Some("1") => true,
                Some("0") => false,
                other => {
                    return Err(CliError::parse(
                        origin,
                        line,
                        format!("bad success flag {other:?}"),
                    ))
                }
            };
            let reason = rec
                .get(5)
                .and_then(parse_reason)
                .ok_or_else(|| CliError::parse(origin, line, "bad failure reason"))?;
            let pairing = rec
                .get(6)
                .unwrap_or("")
                .parse::<Pairing>()
                .map_err(|e| CliError::parse(origin, line, e.to_string()))?;
            Ok(RoaRow {
                sample: RoaSample {
                    ic: State(v),
                    success,
                    reason,
                },
                pairing,
            })
        })
        .collect()
}

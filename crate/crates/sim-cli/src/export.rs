//! Artifact writers: trajectory/event/momentum tables in CSV and two-column
//! plot data, all with 17-significant-digit decimal rendering so files
//! re-parse to the recorded doubles bit-exactly.

use hybrid_mech::reduced::ReducedFlowRecord;
use hybrid_mech::{FlowSide, HybridFlowRecord};
use nalgebra::DVector;
use std::io::{self, Write};
use std::path::Path;

/// 17 significant digits: enough for a lossless f64 round trip.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn create(path: &Path) -> io::Result<std::io::BufWriter<std::fs::File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(std::io::BufWriter::new(std::fs::File::create(path)?))
}

/// A time-ordered sample row; `rank` orders coincident times
/// (event-pre < grid < event-post).
#[derive(Debug, Clone)]
pub struct SampleRow {
    pub t: f64,
    pub rank: u8,
    pub y: DVector<f64>,
}

/// Uniform grid over the record's span plus exact pre/post event samples.
pub fn sample_rows(record: &HybridFlowRecord, grid: usize) -> Vec<SampleRow> {
    let (t0, t1) = (record.t_start(), record.t_end());
    let mut rows = Vec::with_capacity(grid + 2 * record.events.len() + 1);
    for k in 0..=grid {
        let t = t0 + (t1 - t0) * k as f64 / grid as f64;
        if let Some(y) = record.eval(t) {
            rows.push(SampleRow { t, rank: 1, y });
        }
    }
    let n = record.dim;
    for e in &record.events {
        let pack = |w: &DVector<f64>| {
            DVector::from_fn(2 * n, |i, _| if i < n { e.q[i] } else { w[i - n] })
        };
        rows.push(SampleRow {
            t: e.time,
            rank: 0,
            y: pack(&e.w_pre),
        });
        rows.push(SampleRow {
            t: e.time,
            rank: 2,
            y: pack(&e.w_post),
        });
    }
    rows.sort_by(|a, b| {
        a.t.partial_cmp(&b.t)
            .unwrap()
            .then(a.rank.cmp(&b.rank))
    });
    rows
}

/// Uniform grid plus event samples for a reduced record
/// (columns x, xdot, theta).
pub fn sample_rows_reduced(record: &ReducedFlowRecord, grid: usize) -> Vec<SampleRow> {
    let t0 = record.arcs.first().map(|a| a.t_start()).unwrap_or(0.0);
    let t1 = record.t_end();
    let mut rows = Vec::new();
    for k in 0..=grid {
        let t = t0 + (t1 - t0) * k as f64 / grid as f64;
        let arc = record
            .arcs
            .iter()
            .find(|a| t <= a.t_end())
            .or_else(|| record.arcs.last());
        if let Some(arc) = arc {
            if let Some(y) = arc.eval(t) {
                rows.push(SampleRow { t, rank: 1, y });
            }
        }
    }
    let (ns, nc) = (record.shape_dim, record.cyclic_dim);
    for e in &record.events {
        let pack = |xdot: &DVector<f64>| {
            DVector::from_fn(2 * ns + nc, |i, _| {
                if i < ns {
                    e.x[i]
                } else if i < 2 * ns {
                    xdot[i - ns]
                } else {
                    e.theta[i - 2 * ns]
                }
            })
        };
        rows.push(SampleRow {
            t: e.time,
            rank: 0,
            y: pack(&e.xdot_pre),
        });
        rows.push(SampleRow {
            t: e.time,
            rank: 2,
            y: pack(&e.xdot_post),
        });
    }
    rows.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap().then(a.rank.cmp(&b.rank)));
    rows
}

/// Trajectory CSV: header `t,<labels>,<w_prefix>_<labels>`, one row per
/// sample.
pub fn write_trajectory_csv(
    path: &Path,
    labels: &[String],
    w_prefix: &str,
    rows: &[SampleRow],
) -> io::Result<()> {
    let mut f = create(path)?;
    let mut header = vec!["t".to_string()];
    header.extend(labels.iter().cloned());
    header.extend(labels.iter().map(|l| format!("{w_prefix}_{l}")));
    writeln!(f, "{}", header.join(","))?;
    for row in rows {
        let mut cells = Vec::with_capacity(1 + row.y.len());
        cells.push(format_float(row.t));
        cells.extend(row.y.iter().map(|x| format_float(*x)));
        writeln!(f, "{}", cells.join(","))?;
    }
    f.flush()
}

/// Reduced trajectory CSV: `t,<shape>,v_<shape>,<cyclic>` columns.
pub fn write_reduced_csv(
    path: &Path,
    shape_labels: &[String],
    cyclic_labels: &[String],
    rows: &[SampleRow],
) -> io::Result<()> {
    let mut f = create(path)?;
    let mut header = vec!["t".to_string()];
    header.extend(shape_labels.iter().cloned());
    header.extend(shape_labels.iter().map(|l| format!("v_{l}")));
    header.extend(cyclic_labels.iter().cloned());
    writeln!(f, "{}", header.join(","))?;
    for row in rows {
        let mut cells = Vec::with_capacity(1 + row.y.len());
        cells.push(format_float(row.t));
        cells.extend(row.y.iter().map(|x| format_float(*x)));
        writeln!(f, "{}", cells.join(","))?;
    }
    f.flush()
}

/// Event table: tau, guard, pre..., post..., mu_pre..., mu_post...
pub fn write_events_csv(
    path: &Path,
    labels: &[String],
    record: &HybridFlowRecord,
) -> io::Result<()> {
    let mut f = create(path)?;
    let w_prefix = match record.side {
        FlowSide::Hamiltonian => "p",
        _ => "v",
    };
    let mu_dim = record.events.first().map(|e| e.mu_pre.len()).unwrap_or(0);
    let mut header = vec!["tau".to_string(), "guard".to_string()];
    header.extend(labels.iter().map(|l| format!("pre_{l}")));
    header.extend(labels.iter().map(|l| format!("pre_{w_prefix}_{l}")));
    header.extend(labels.iter().map(|l| format!("post_{l}")));
    header.extend(labels.iter().map(|l| format!("post_{w_prefix}_{l}")));
    header.extend((0..mu_dim).map(|i| format!("mu_pre_{i}")));
    header.extend((0..mu_dim).map(|i| format!("mu_post_{i}")));
    writeln!(f, "{}", header.join(","))?;
    for e in &record.events {
        let mut cells = vec![format_float(e.time), e.guard_label.clone()];
        cells.extend(e.q.iter().map(|x| format_float(*x)));
        cells.extend(e.w_pre.iter().map(|x| format_float(*x)));
        cells.extend(e.q.iter().map(|x| format_float(*x)));
        cells.extend(e.w_post.iter().map(|x| format_float(*x)));
        cells.extend(e.mu_pre.iter().map(|x| format_float(*x)));
        cells.extend(e.mu_post.iter().map(|x| format_float(*x)));
        writeln!(f, "{}", cells.join(","))?;
    }
    f.flush()
}

/// Per-arc momentum table: arc, t_start, t_end, mu components.
pub fn write_momenta_csv(
    path: &Path,
    spans: &[(f64, f64)],
    momenta: &[DVector<f64>],
) -> io::Result<()> {
    let mut f = create(path)?;
    let mu_dim = momenta.first().map(|m| m.len()).unwrap_or(0);
    let mut header = vec!["arc".to_string(), "t_start".to_string(), "t_end".to_string()];
    header.extend((0..mu_dim).map(|i| format!("mu_{i}")));
    writeln!(f, "{}", header.join(","))?;
    for (i, (span, mu)) in spans.iter().zip(momenta.iter()).enumerate() {
        let mut cells = vec![
            i.to_string(),
            format_float(span.0),
            format_float(span.1),
        ];
        cells.extend(mu.iter().map(|x| format_float(*x)));
        writeln!(f, "{}", cells.join(","))?;
    }
    f.flush()
}

/// Two-column plain text: one `a b` pair per line.
pub fn write_pairs(path: &Path, pairs: &[(f64, f64)]) -> io::Result<()> {
    let mut f = create(path)?;
    for (a, b) in pairs {
        writeln!(f, "{} {}", format_float(*a), format_float(*b))?;
    }
    f.flush()
}

/// Impact-time sidecar: one time per line.
pub fn write_impact_times(path: &Path, times: &[f64]) -> io::Result<()> {
    let mut f = create(path)?;
    for t in times {
        writeln!(f, "{}", format_float(*t))?;
    }
    f.flush()
}

/// Plain text report.
pub fn write_report(path: &Path, lines: &[String]) -> io::Result<()> {
    let mut f = create(path)?;
    for line in lines {
        writeln!(f, "{line}")?;
    }
    f.flush()
}

/// Re-parses a trajectory CSV into (header, rows); the inverse of
/// [`write_trajectory_csv`] up to the rank column, bit-exact on values.
pub fn parse_trajectory_csv(path: &Path) -> io::Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .unwrap_or("")
        .split(',')
        .map(|s| s.to_string())
        .collect();
    let mut rows = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split(',').map(|c| c.parse::<f64>()).collect();
        rows.push(row.map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?);
    }
    Ok((header, rows))
}

//! Reader and writer for single-mode PSPLib `.sm` files.
//!
//! Job `1` becomes the source task (id 0) and the last job becomes the sink.
//! Only renewable resources are supported.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::instance::{Diagnostic, Instance, InstanceError, Resource, Severity, Task, TaskId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    MalformedSectionHeader(String),
    MalformedRow(String),
    MissingSection(&'static str),
    MissingField(&'static str),
    JobCountMismatch {
        section: &'static str,
        declared: usize,
        found: usize,
    },
    NegativeRequest {
        job: usize,
        resource: usize,
        value: i64,
    },
    OverCapacity {
        job: usize,
        resource: usize,
        request: u32,
        capacity: u32,
    },
    UnknownJob(i64),
    MultiMode {
        job: usize,
    },
    NonRenewable,
    Cycle {
        jobs: Vec<usize>,
    },
    Invalid(String),
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ParseErrorKind::*;
        match self {
            MalformedSectionHeader(s) => write!(f, "malformed section header `{s}`"),
            MalformedRow(s) => write!(f, "malformed row `{s}`"),
            MissingSection(s) => write!(f, "missing section {s}"),
            MissingField(s) => write!(f, "missing field `{s}`"),
            JobCountMismatch {
                section,
                declared,
                found,
            } => write!(
                f,
                "{section} lists {found} job(s) but the header declares {declared}"
            ),
            NegativeRequest {
                job,
                resource,
                value,
            } => write!(f, "job {job} has negative request {value} on R {resource}"),
            OverCapacity {
                job,
                resource,
                request,
                capacity,
            } => write!(
                f,
                "job {job} requests {request} units of R {resource}, availability is {capacity}"
            ),
            UnknownJob(j) => write!(f, "reference to unknown job {j}"),
            MultiMode { job } => write!(
                f,
                "job {job} has several modes (multi-mode files are not supported)"
            ),
            NonRenewable => write!(f, "non-renewable resources are not supported"),
            Cycle { jobs } => write!(f, "cyclic precedence through jobs {jobs:?}"),
            Invalid(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Section {
    Preamble,
    ProjectInfo,
    Precedence,
    Requests,
    Availabilities,
}

struct Row {
    line: usize,
    values: Vec<i64>,
}

fn numbers(s: &str) -> Option<Vec<i64>> {
    s.split_whitespace().map(|t| t.parse().ok()).collect()
}

fn header_value(line: &str) -> Option<i64> {
    line.split_once(':')?
        .1
        .split_whitespace()
        .next()?
        .parse()
        .ok()
}

/// Parses a single-mode PSPLib document and validates the result.
pub fn parse_psplib(text: &str) -> Result<Instance, ParseError> {
    let mut section = Section::Preamble;
    let mut jobs: Option<(usize, usize)> = None;
    let mut renewable: Option<usize> = None;
    let mut precedence: Vec<Row> = Vec::new();
    let mut requests: Vec<Row> = Vec::new();
    let mut availability: Option<Row> = None;
    let mut seen = [false; 3];
    let mut last_line = 0;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        last_line = line_no;
        let line = raw.trim();
        if line.is_empty()
            || line.starts_with('*')
            || line.starts_with('-') && line.chars().all(|c| c == '-')
        {
            continue;
        }
        let err = |kind| ParseError {
            line: line_no,
            kind,
        };

        if line.ends_with(':') && !line.starts_with('-') {
            section = match line {
                "PROJECT INFORMATION:" => Section::ProjectInfo,
                "PRECEDENCE RELATIONS:" => {
                    seen[0] = true;
                    Section::Precedence
                }
                "REQUESTS/DURATIONS:" => {
                    seen[1] = true;
                    Section::Requests
                }
                "RESOURCEAVAILABILITIES:" => {
                    seen[2] = true;
                    Section::Availabilities
                }
                other => {
                    return Err(err(ParseErrorKind::MalformedSectionHeader(
                        other.to_owned(),
                    )))
                }
            };
            continue;
        }

        match section {
            Section::Preamble => {
                if line.starts_with("jobs") {
                    let n = header_value(line)
                        .filter(|&n| n >= 2)
                        .ok_or_else(|| err(ParseErrorKind::MalformedRow(line.to_owned())))?;
                    jobs = Some((n as usize, line_no));
                } else if let Some(rest) = line.strip_prefix("- ") {
                    let v = header_value(rest)
                        .ok_or_else(|| err(ParseErrorKind::MalformedRow(line.to_owned())))?;
                    let key = rest.trim_start();
                    if key.starts_with("renewable") {
                        renewable = Some(v as usize);
                    } else if (key.starts_with("nonrenewable") || key.starts_with("doubly"))
                        && v != 0
                    {
                        return Err(err(ParseErrorKind::NonRenewable));
                    }
                } else if line == "RESOURCES" || line.contains(':') {
                    // file name, seeds, horizon, project count...
                } else {
                    return Err(err(ParseErrorKind::MalformedSectionHeader(line.to_owned())));
                }
            }
            Section::ProjectInfo => {}
            Section::Precedence | Section::Requests => {
                if line.starts_with("jobnr") {
                    continue;
                }
                let values = numbers(line)
                    .ok_or_else(|| err(ParseErrorKind::MalformedRow(line.to_owned())))?;
                let target = if section == Section::Precedence {
                    &mut precedence
                } else {
                    &mut requests
                };
                target.push(Row {
                    line: line_no,
                    values,
                });
            }
            Section::Availabilities => {
                if line.starts_with('R') || line.starts_with('N') || line.starts_with('D') {
                    continue;
                }
                let values = numbers(line)
                    .ok_or_else(|| err(ParseErrorKind::MalformedRow(line.to_owned())))?;
                if availability.is_some() {
                    return Err(err(ParseErrorKind::MalformedRow(line.to_owned())));
                }
                availability = Some(Row {
                    line: line_no,
                    values,
                });
            }
        }
    }

    let eof = |kind| ParseError {
        line: last_line,
        kind,
    };
    let (n, jobs_line) = jobs.ok_or_else(|| {
        eof(ParseErrorKind::MissingField(
            "jobs (incl. supersource/sink )",
        ))
    })?;
    for (ok, name) in seen.iter().zip([
        "PRECEDENCE RELATIONS",
        "REQUESTS/DURATIONS",
        "RESOURCEAVAILABILITIES",
    ]) {
        if !ok {
            return Err(eof(ParseErrorKind::MissingSection(name)));
        }
    }
    let availability =
        availability.ok_or_else(|| eof(ParseErrorKind::MissingField("resource availabilities")))?;
    let m = renewable.unwrap_or(availability.values.len());
    if availability.values.len() != m {
        return Err(ParseError {
            line: availability.line,
            kind: ParseErrorKind::MalformedRow(format!(
                "expected {m} availabilities, found {}",
                availability.values.len()
            )),
        });
    }
    let mut capacities = Vec::with_capacity(m);
    for (r, &v) in availability.values.iter().enumerate() {
        if v < 0 {
            return Err(ParseError {
                line: availability.line,
                kind: ParseErrorKind::Invalid(format!("negative availability for R {}", r + 1)),
            });
        }
        capacities.push(v as u32);
    }

    for (rows, section) in [
        (&precedence, "PRECEDENCE RELATIONS"),
        (&requests, "REQUESTS/DURATIONS"),
    ] {
        if rows.len() != n {
            return Err(ParseError {
                line: rows.last().map_or(jobs_line, |r| r.line),
                kind: ParseErrorKind::JobCountMismatch {
                    section,
                    declared: n,
                    found: rows.len(),
                },
            });
        }
    }

    let job_index = |row: &Row, v: i64| -> Result<TaskId, ParseError> {
        if v >= 1 && v as usize <= n {
            Ok(v as usize - 1)
        } else {
            Err(ParseError {
                line: row.line,
                kind: ParseErrorKind::UnknownJob(v),
            })
        }
    };

    // Precedence rows: jobnr, #modes, #successors, successors...
    let mut arcs = Vec::new();
    let mut precedence_line = vec![0; n];
    let mut seen_prec = vec![false; n];
    for row in &precedence {
        let malformed = || ParseError {
            line: row.line,
            kind: ParseErrorKind::MalformedRow(format!("{:?}", row.values)),
        };
        if row.values.len() < 3 {
            return Err(malformed());
        }
        let job = job_index(row, row.values[0])?;
        if row.values[1] != 1 {
            return Err(ParseError {
                line: row.line,
                kind: ParseErrorKind::MultiMode { job: job + 1 },
            });
        }
        let count = row.values[2];
        if count < 0 || row.values.len() != 3 + count as usize || seen_prec[job] {
            return Err(malformed());
        }
        seen_prec[job] = true;
        precedence_line[job] = row.line;
        for &s in &row.values[3..] {
            arcs.push((job, job_index(row, s)?));
        }
    }

    // Request rows: jobnr, mode, duration, requests...
    let mut tasks: BTreeMap<TaskId, Task> = BTreeMap::new();
    let mut request_line = vec![0; n];
    for row in &requests {
        if row.values.len() != 3 + m {
            return Err(ParseError {
                line: row.line,
                kind: ParseErrorKind::MalformedRow(format!("{:?}", row.values)),
            });
        }
        let job = job_index(row, row.values[0])?;
        if row.values[1] != 1 {
            return Err(ParseError {
                line: row.line,
                kind: ParseErrorKind::MultiMode { job: job + 1 },
            });
        }
        if row.values[2] < 0 {
            return Err(ParseError {
                line: row.line,
                kind: ParseErrorKind::Invalid(format!("job {} has negative duration", job + 1)),
            });
        }
        let mut consumption = Vec::with_capacity(m);
        for (r, &v) in row.values[3..].iter().enumerate() {
            if v < 0 {
                return Err(ParseError {
                    line: row.line,
                    kind: ParseErrorKind::NegativeRequest {
                        job: job + 1,
                        resource: r + 1,
                        value: v,
                    },
                });
            }
            consumption.push(v as u32);
        }
        request_line[job] = row.line;
        if tasks
            .insert(job, Task::new(row.values[2] as u64, consumption))
            .is_some()
        {
            return Err(ParseError {
                line: row.line,
                kind: ParseErrorKind::MalformedRow(format!("duplicate job {}", job + 1)),
            });
        }
    }

    let instance = Instance::new(
        tasks.into_values().collect(),
        capacities
            .into_iter()
            .map(|capacity| Resource { capacity })
            .collect(),
        arcs,
    )
    .map_err(|e: InstanceError| ParseError {
        line: jobs_line,
        kind: ParseErrorKind::Invalid(e.to_string()),
    })?;

    for d in instance.validate() {
        if d.severity() == Severity::Warning {
            log::warn!("{d}");
            continue;
        }
        return Err(match d {
            Diagnostic::OverCapacity {
                task,
                resource,
                consumption,
                capacity,
            } => ParseError {
                line: request_line[task],
                kind: ParseErrorKind::OverCapacity {
                    job: task + 1,
                    resource: resource + 1,
                    request: consumption,
                    capacity,
                },
            },
            Diagnostic::Cycle { tasks } => ParseError {
                line: precedence_line[tasks[0]],
                kind: ParseErrorKind::Cycle {
                    jobs: tasks.iter().map(|t| t + 1).collect(),
                },
            },
            other => ParseError {
                line: jobs_line,
                kind: ParseErrorKind::Invalid(other.to_string()),
            },
        });
    }
    Ok(instance)
}

/// Renders an instance as a single-mode PSPLib document.
pub fn write_psplib(instance: &Instance) -> String {
    let n = instance.num_tasks();
    let m = instance.num_resources();
    let stars = "*".repeat(72);
    let horizon: u64 = instance.durations().iter().sum();
    let mut out = String::new();
    out.push_str(&format!("{stars}\n"));
    out.push_str("file with basedata            : flowsched\n");
    out.push_str(&format!("{stars}\n"));
    out.push_str("projects                      :  1\n");
    out.push_str(&format!("jobs (incl. supersource/sink ):  {n}\n"));
    out.push_str(&format!("horizon                       :  {horizon}\n"));
    out.push_str("RESOURCES\n");
    out.push_str(&format!("  - renewable                 :  {m}   R\n"));
    out.push_str("  - nonrenewable              :  0   N\n");
    out.push_str("  - doubly constrained        :  0   D\n");
    out.push_str(&format!("{stars}\n"));
    out.push_str("PRECEDENCE RELATIONS:\n");
    out.push_str("jobnr.    #modes  #successors   successors\n");
    for t in 0..n {
        let succ = instance.succs(t);
        let mut line = format!("{:>4}        1{:>11}        ", t + 1, succ.len());
        for s in succ {
            line.push_str(&format!("{:>4}", s + 1));
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out.push_str(&format!("{stars}\n"));
    out.push_str("REQUESTS/DURATIONS:\n");
    let mut head = String::from("jobnr. mode duration");
    for r in 0..m {
        head.push_str(&format!("  R{:>2}", r + 1));
    }
    out.push_str(&head);
    out.push('\n');
    out.push_str(&format!("{}\n", "-".repeat(72)));
    for (t, task) in instance.tasks().iter().enumerate() {
        let mut line = format!("{:>3}      1{:>6}   ", t + 1, task.duration);
        for c in &task.consumption {
            line.push_str(&format!("{c:>5}"));
        }
        out.push_str(&line);
        out.push('\n');
    }
    out.push_str(&format!("{stars}\n"));
    out.push_str("RESOURCEAVAILABILITIES:\n");
    let mut head = String::new();
    let mut vals = String::new();
    for r in 0..m {
        head.push_str(&format!("  R{:>2}", r + 1));
        vals.push_str(&format!("{:>5}", instance.capacity(r)));
    }
    out.push_str(&format!("{head}\n{vals}\n{stars}\n"));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samples::{empty_project, toy_project};

    #[test]
    fn writer_output_parses_back() {
        let toy = toy_project();
        assert_eq!(parse_psplib(&write_psplib(&toy)).unwrap(), toy);
        let e = empty_project();
        assert_eq!(parse_psplib(&write_psplib(&e)).unwrap(), e);
    }

    fn toy_text() -> String {
        write_psplib(&toy_project())
    }

    #[test]
    fn job_count_mismatch() {
        let text = toy_text().replace("supersource/sink ):  8", "supersource/sink ):  9");
        let e = parse_psplib(&text).unwrap_err();
        assert!(matches!(
            e.kind,
            ParseErrorKind::JobCountMismatch {
                declared: 9,
                found: 8,
                ..
            }
        ));
    }

    #[test]
    fn malformed_section_header() {
        let text = toy_text().replace("PRECEDENCE RELATIONS:", "PRECEDENCE RELATION:");
        let e = parse_psplib(&text).unwrap_err();
        assert_eq!(
            e.kind,
            ParseErrorKind::MalformedSectionHeader("PRECEDENCE RELATION:".into())
        );
        assert_eq!(e.line, 12);
    }

    #[test]
    fn negative_request_reports_its_line() {
        let text = toy_text();
        let line_no = text
            .lines()
            .position(|l| l.starts_with("  4      1"))
            .unwrap()
            + 1;
        let text = text.replace("  4      1     5       3", "  4      1     5      -3");
        let e = parse_psplib(&text).unwrap_err();
        assert_eq!(e.line, line_no);
        assert!(matches!(
            e.kind,
            ParseErrorKind::NegativeRequest {
                job: 4,
                resource: 1,
                value: -3
            }
        ));
    }

    #[test]
    fn over_capacity_reports_its_line() {
        let text = toy_text();
        let line_no = text
            .lines()
            .position(|l| l.starts_with("  4      1"))
            .unwrap()
            + 1;
        let text = text.replace("  4      1     5       3", "  4      1     5       5");
        let e = parse_psplib(&text).unwrap_err();
        assert_eq!(e.line, line_no);
        assert!(matches!(
            e.kind,
            ParseErrorKind::OverCapacity {
                job: 4,
                request: 5,
                capacity: 4,
                ..
            }
        ));
    }

    #[test]
    fn cycle_is_rejected() {
        // job 7 (F) gets job 3 (B) as an extra successor: B -> C -> F -> B
        let text = toy_text().replace(
            "   7        1          1           8",
            "   7        1          2           8   3",
        );
        let e = parse_psplib(&text).unwrap_err();
        match e.kind {
            ParseErrorKind::Cycle { jobs } => {
                assert!(jobs.contains(&3) && jobs.contains(&7));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn multi_mode_rejected() {
        let text = toy_text().replace("   2        1          1", "   2        2          1");
        let e = parse_psplib(&text).unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::MultiMode { job: 2 }));
    }
}

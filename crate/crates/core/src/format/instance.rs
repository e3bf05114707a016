//! Versioned, line-oriented instance file.
//!
//! ```text
//! chance-opd-instance 1
//! n 2
//! m 1
//! k 2
//! mode optional-reject
//! capacities 3
//! confidence 0.9
//! request 1
//! revenue 1 2
//! mean 0.5 1
//! var 0.1 0.2
//! request 2
//! ...
//! ```
//!
//! Each request carries one `mean` and one `var` line per resource. A request
//! may instead give `m` lines `cov <k*k values>` (row-major covariance of one
//! resource across schemes); only the diagonal is kept. Blank lines and lines
//! starting with `#` are ignored.

use std::fmt::Write as _;
use std::path::Path;

use log::info;

use crate::error::{Error, Result};
use crate::model::{AssignmentMode, Instance, Matrix, Request};
use crate::scalar::Scalar;

pub const INSTANCE_VERSION: u32 = 1;
const MAGIC: &str = "chance-opd-instance";

fn push_row<T: Scalar>(out: &mut String, key: &str, values: impl IntoIterator<Item = T>) {
    out.push_str(key);
    for v in values {
        // 17 significant digits round-trip any f64 exactly
        let _ = write!(out, " {:.16e}", v.as_f64());
    }
    out.push('\n');
}

/// Serializes an instance. Output is deterministic for a given instance.
pub fn emit_instance<T: Scalar>(instance: &Instance<T>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} {INSTANCE_VERSION}");
    let _ = writeln!(out, "n {}", instance.n());
    let _ = writeln!(out, "m {}", instance.m);
    let _ = writeln!(out, "k {}", instance.k);
    let _ = writeln!(out, "mode {}", instance.assignment_mode);
    push_row(&mut out, "capacities", instance.capacities.iter().copied());
    push_row(&mut out, "confidence", instance.confidence.iter().copied());
    for (t, r) in instance.requests.iter().enumerate() {
        let _ = writeln!(out, "request {}", t + 1);
        push_row(&mut out, "revenue", r.revenue.iter().copied());
        for j in 0..instance.m {
            push_row(&mut out, "mean", r.mean_consumption.row(j).iter().copied());
        }
        for j in 0..instance.m {
            push_row(&mut out, "var", r.var_diag.row(j).iter().copied());
        }
    }
    out
}

pub fn write_instance<T: Scalar>(instance: &Instance<T>, path: &Path) -> Result<()> {
    std::fs::write(path, emit_instance(instance))?;
    Ok(())
}

pub fn read_instance<T: Scalar>(path: &Path) -> Result<Instance<T>> {
    parse_instance(&std::fs::read_to_string(path)?)
}

struct Lines<'a> {
    inner: std::iter::Peekable<Box<dyn Iterator<Item = (usize, &'a str)> + 'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        let it: Box<dyn Iterator<Item = (usize, &'a str)> + 'a> = Box::new(
            text.lines()
                .enumerate()
                .map(|(i, l)| (i + 1, l.trim()))
                .filter(|(_, l)| !l.is_empty() && !l.starts_with('#')),
        );
        Self {
            inner: it.peekable(),
            last: 0,
        }
    }

    /// Next line, which must start with `key`; returns the remaining tokens.
    fn expect(&mut self, key: &str) -> Result<(usize, Vec<&'a str>)> {
        let (line, text) = self.inner.next().ok_or_else(|| Error::Parse {
            line: self.last + 1,
            msg: format!("unexpected end of file, expected `{key}`"),
        })?;
        self.last = line;
        let mut tokens = text.split_whitespace();
        let head = tokens.next().unwrap_or_default();
        if head != key {
            return Err(Error::Parse {
                line,
                msg: format!("expected `{key}`, found `{head}`"),
            });
        }
        Ok((line, tokens.collect()))
    }

    fn peek_key(&mut self) -> Option<&'a str> {
        self.inner
            .peek()
            .and_then(|(_, l)| l.split_whitespace().next())
    }

    fn trailing(&mut self) -> Option<usize> {
        self.inner.next().map(|(l, _)| l)
    }
}

fn single<'a>(line: usize, key: &str, tokens: &[&'a str]) -> Result<&'a str> {
    match tokens {
        [v] => Ok(v),
        _ => Err(Error::Parse {
            line,
            msg: format!("`{key}` takes exactly one value, found {}", tokens.len()),
        }),
    }
}

fn count(line: usize, key: &str, tokens: &[&str]) -> Result<usize> {
    let v = single(line, key, tokens)?;
    v.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("`{key}` must be a nonnegative integer, found `{v}`"),
    })
}

fn numbers<T: Scalar>(line: usize, key: &str, tokens: &[&str], len: usize) -> Result<Vec<T>> {
    if tokens.len() != len {
        return Err(Error::Parse {
            line,
            msg: format!("`{key}` needs {len} values, found {}", tokens.len()),
        });
    }
    tokens
        .iter()
        .map(|s| {
            s.parse::<f64>().map(T::of).map_err(|_| Error::Parse {
                line,
                msg: format!("`{s}` is not a number"),
            })
        })
        .collect()
}

/// Parses an instance file. Checks shape only; call [`crate::model::validate`]
/// for value constraints.
pub fn parse_instance<T: Scalar>(text: &str) -> Result<Instance<T>> {
    let mut lines = Lines::new(text);
    let (line, tokens) = lines.expect(MAGIC).map_err(|e| match e {
        Error::Parse { line, .. } => Error::Parse {
            line,
            msg: format!("missing `{MAGIC} <version>` header"),
        },
        e => e,
    })?;
    let version = single(line, MAGIC, &tokens)?;
    if version != INSTANCE_VERSION.to_string() {
        return Err(Error::Parse {
            line,
            msg: format!("unsupported format version `{version}` (supported: {INSTANCE_VERSION})"),
        });
    }
    let (line, t) = lines.expect("n")?;
    let n = count(line, "n", &t)?;
    let (line, t) = lines.expect("m")?;
    let m = count(line, "m", &t)?;
    let (line, t) = lines.expect("k")?;
    let k = count(line, "k", &t)?;
    let (line, t) = lines.expect("mode")?;
    let mode_str = single(line, "mode", &t)?;
    let assignment_mode = AssignmentMode::parse(mode_str).ok_or_else(|| Error::Parse {
        line,
        msg: format!("unknown mode `{mode_str}` (expected optional-reject or must-assign)"),
    })?;
    let (line, t) = lines.expect("capacities")?;
    let capacities = numbers(line, "capacities", &t, m)?;
    let (line, t) = lines.expect("confidence")?;
    let confidence = numbers(line, "confidence", &t, m)?;

    let mut requests = Vec::with_capacity(n);
    let mut reduced_cov = false;
    for idx in 1..=n {
        let (line, t) = lines.expect("request")?;
        let label = count(line, "request", &t)?;
        if label != idx {
            return Err(Error::Parse {
                line,
                msg: format!("expected request {idx}, found {label}"),
            });
        }
        let (line, t) = lines.expect("revenue")?;
        let revenue = numbers(line, "revenue", &t, k)?;
        let mut mean = Vec::with_capacity(m);
        for _ in 0..m {
            let (line, t) = lines.expect("mean")?;
            mean.push(numbers(line, "mean", &t, k)?);
        }
        let mut var = Vec::with_capacity(m);
        let use_cov = m > 0 && lines.peek_key() == Some("cov");
        for _ in 0..m {
            if use_cov {
                let (line, t) = lines.expect("cov")?;
                let full: Vec<T> = numbers(line, "cov", &t, k * k)?;
                var.push((0..k).map(|l| full[l * k + l]).collect());
                reduced_cov = true;
            } else {
                let (line, t) = lines.expect("var")?;
                var.push(numbers(line, "var", &t, k)?);
            }
        }
        requests.push(Request::new(
            revenue,
            rows_or_empty(mean, m, k)?,
            rows_or_empty(var, m, k)?,
        ));
    }
    if let Some(line) = lines.trailing() {
        return Err(Error::Parse {
            line,
            msg: "unexpected content after the last request".into(),
        });
    }
    if reduced_cov {
        info!("covariance blocks reduced to their diagonals");
    }
    Ok(Instance {
        m,
        k,
        capacities,
        confidence,
        requests,
        assignment_mode,
    })
}

fn rows_or_empty<T: Scalar>(rows: Vec<Vec<T>>, m: usize, k: usize) -> Result<Matrix<T>> {
    if m == 0 {
        Ok(Matrix::zeros(0, k))
    } else {
        Matrix::from_rows(rows)
    }
}

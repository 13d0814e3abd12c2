//! Plain-text task archives: a `p L` header, then for each task a line
//! with its sample size followed by that many rows of `x_1 .. x_p y`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::harness::emit::fmt_f64;
use crate::model::{MetaDataset, Task};

pub fn write_tasks(tasks: &[Task], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, format_tasks(tasks)?)?;
    Ok(())
}

pub fn format_tasks(tasks: &[Task]) -> Result<String> {
    let p = tasks.first().map_or(0, Task::p);
    let mut out = format!("{p} {}\n", tasks.len());
    for t in tasks {
        crate::error::check_dim("task columns", p, t.p())?;
        out.push_str(&format!("{}\n", t.n()));
        for i in 0..t.n() {
            let row: Vec<String> = t.x.row(i).iter().chain(std::iter::once(&t.y[i])).map(|&v| fmt_f64(v)).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn parse_tasks(text: &str) -> Result<Vec<Task>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let mut next = |what: &str| {
        lines
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| Error::Config(format!("task archive ended while reading {what}")))
    };
    let (line, header) = next("header")?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("line {line}: header must be 'p L'")))?;
    let [p, count] = dims[..] else {
        return Err(Error::Config(format!("line {line}: header must be 'p L'")));
    };
    if p == 0 {
        return Err(Error::Config("archive dimension p must be positive".into()));
    }
    let mut tasks = Vec::with_capacity(count);
    for _ in 0..count {
        let (line, size) = next("task size")?;
        let n: usize = size
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("line {line}: expected a task size")))?;
        let mut x = DMatrix::zeros(n, p);
        let mut y = DVector::zeros(n);
        for i in 0..n {
            let (line, row) = next("task rows")?;
            let vals: Vec<f64> = row
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Config(format!("line {line}: bad number")))?;
            if vals.len() != p + 1 {
                return Err(Error::Config(format!("line {line}: expected {} values, found {}", p + 1, vals.len())));
            }
            for (k, v) in vals[..p].iter().enumerate() {
                x[(i, k)] = *v;
            }
            y[i] = vals[p];
        }
        tasks.push(Task::new(x, y, None).map_err(|e| Error::Config(e.to_string()))?);
    }
    if let Ok((line, _)) = next("trailing") {
        return Err(Error::Config(format!("line {line}: trailing data after {count} tasks")));
    }
    Ok(tasks)
}

pub fn read_tasks(path: impl AsRef<Path>) -> Result<Vec<Task>> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| Error::Config(format!("{}: {e}", path.as_ref().display())))?;
    parse_tasks(&text)
}

/// Reads an archive as a dataset with noise variance `sigma2`.
pub fn read_dataset(path: impl AsRef<Path>, sigma2: f64) -> Result<MetaDataset> {
    MetaDataset::new(read_tasks(path)?, None, sigma2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_lossless() {
        let x = DMatrix::from_fn(3, 2, |i, j| (i as f64 + 1.0) / (j as f64 + 3.0));
        let y = DVector::from_fn(3, |i, _| (i as f64).sqrt() * std::f64::consts::PI);
        let tasks = vec![Task::new(x, y, None).unwrap()];
        let back = parse_tasks(&format_tasks(&tasks).unwrap()).unwrap();
        assert_eq!(back[0].x, tasks[0].x);
        assert_eq!(back[0].y, tasks[0].y);
    }

    #[test]
    fn malformed_archives_are_config_errors() {
        for text in ["", "2", "2 1\n1\n1.0 2.0\n", "2 1\n1\n1 2 3\n9\n", "2 1\nx\n"] {
            assert!(parse_tasks(text).unwrap_err().is_config(), "{text:?}");
        }
    }
}

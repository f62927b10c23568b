//! CSV design tables.
//!
//! ```text
//! # design v1=3 d=8 v2=3 order=treatment-major kind=approximate
//! i,k,value
//! 1,1,2.9508497187473712e-2
//! ```
//!
//! Indices are 1-based. Approximate weights are written with 17 significant
//! digits so files round-trip exactly; cells missing on read are zero.

use std::fmt::Write as _;
use std::path::Path;

use optdesign::model::{ApproxDesign, ExactDesign};

use crate::error::{io_err, CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Approximate,
    Exact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignFile {
    pub v1: usize,
    pub d: usize,
    pub v2: usize,
    pub kind: Kind,
    /// Row-major `(i, k)` values.
    pub values: Vec<f64>,
}

impl DesignFile {
    pub fn from_approx(xi: &ApproxDesign, v2: usize) -> Self {
        DesignFile {
            v1: xi.v1(),
            d: xi.d(),
            v2,
            kind: Kind::Approximate,
            values: xi.weights().to_vec(),
        }
    }

    pub fn from_exact(e: &ExactDesign, v2: usize) -> Self {
        DesignFile {
            v1: e.v1(),
            d: e.d(),
            v2,
            kind: Kind::Exact,
            values: e.counts().iter().map(|&c| c as f64).collect(),
        }
    }

    /// Approximate design; exact counts are normalized, unnormalized
    /// approximate tables (rounded printouts) are rescaled to sum to one.
    pub fn to_approx(&self) -> std::result::Result<ApproxDesign, optdesign::DesignError> {
        ApproxDesign::from_unnormalized(self.v1, self.d, self.values.clone())
    }

    pub fn to_exact(&self) -> std::result::Result<ExactDesign, optdesign::DesignError> {
        let counts = self
            .values
            .iter()
            .map(|&v| {
                if v >= 0.0 && v.fract() == 0.0 {
                    Ok(v as u64)
                } else {
                    Err(optdesign::DesignError::InvalidDesign(format!("count {v} is not a nonnegative integer")))
                }
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        ExactDesign::new(self.v1, self.d, counts)
    }

    pub fn render(&self) -> String {
        let kind = match self.kind {
            Kind::Approximate => "approximate",
            Kind::Exact => "exact",
        };
        let mut out = format!(
            "# design v1={} d={} v2={} order=treatment-major kind={kind}\ni,k,value\n",
            self.v1, self.d, self.v2
        );
        for i in 0..self.v1 {
            for k in 0..self.d {
                let v = self.values[i * self.d + k];
                match self.kind {
                    Kind::Approximate => writeln!(out, "{},{},{v:.16e}", i + 1, k + 1),
                    Kind::Exact => writeln!(out, "{},{},{}", i + 1, k + 1, v as u64),
                }
                .expect("writing to a String");
            }
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        std::fs::write(path, self.render()).map_err(io_err(path))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let err = |line: usize, msg: String| CliError::Parse {
            path: source.to_string(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
        let rest = header
            .trim()
            .strip_prefix("# design")
            .ok_or_else(|| err(1, "expected a '# design ...' header".into()))?;
        let (mut v1, mut d, mut v2, mut kind) = (None, None, None, Kind::Approximate);
        for field in rest.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| err(1, format!("malformed header field {field:?}")))?;
            let num = || value.parse::<usize>().map_err(|_| err(1, format!("bad {key}={value}")));
            match key {
                "v1" => v1 = Some(num()?),
                "d" => d = Some(num()?),
                "v2" => v2 = Some(num()?),
                "order" if value == "treatment-major" => {}
                "order" => return Err(err(1, format!("unsupported order {value:?}"))),
                "kind" => {
                    kind = match value {
                        "approximate" => Kind::Approximate,
                        "exact" => Kind::Exact,
                        _ => return Err(err(1, format!("unknown kind {value:?}"))),
                    }
                }
                _ => return Err(err(1, format!("unknown header field {key:?}"))),
            }
        }
        let (v1, d) = match (v1, d) {
            (Some(v1), Some(d)) if v1 > 0 && d > 0 => (v1, d),
            _ => return Err(err(1, "header needs positive v1 and d".into())),
        };
        match lines.next() {
            Some((_, cols)) if cols.trim() == "i,k,value" => {}
            Some((n, _)) => return Err(err(n + 1, "expected column header 'i,k,value'".into())),
            None => return Err(err(2, "missing column header".into())),
        }
        let mut values = vec![0.0; v1 * d];
        let mut seen = vec![false; v1 * d];
        for (n, line) in lines {
            let line_no = n + 1;
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(err(line_no, "expected three fields".into()));
            }
            let i: usize = parts[0].parse().map_err(|_| err(line_no, format!("bad i {:?}", parts[0])))?;
            let k: usize = parts[1].parse().map_err(|_| err(line_no, format!("bad k {:?}", parts[1])))?;
            let v: f64 = parts[2].parse().map_err(|_| err(line_no, format!("bad value {:?}", parts[2])))?;
            if i == 0 || i > v1 || k == 0 || k > d {
                return Err(err(line_no, format!("cell ({i},{k}) outside {v1}x{d}")));
            }
            if !v.is_finite() || v < 0.0 {
                return Err(err(line_no, format!("value {v} must be finite and nonnegative")));
            }
            let j = (i - 1) * d + (k - 1);
            if std::mem::replace(&mut seen[j], true) {
                return Err(err(line_no, format!("cell ({i},{k}) listed twice")));
            }
            values[j] = v;
        }
        Ok(DesignFile {
            v1,
            d,
            v2: v2.unwrap_or(0),
            kind,
            values,
        })
    }
}

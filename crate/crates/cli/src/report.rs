//! Plain-text reports with reals at 6 significant digits.

use std::fmt::Write as _;

/// `x` with 6 significant digits, trailing zeros trimmed; scientific
/// notation outside `[1e-4, 1e6)`.
pub fn sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        if s == "-0" {
            "0".into()
        } else {
            s
        }
    } else {
        let s = format!("{x:.5e}");
        let (mantissa, e) = s.split_once('e').expect("exponent present");
        let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
        format!("{mantissa}e{e}")
    }
}

pub fn sig_list(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|&x| sig(x)).collect();
    format!("({})", parts.join(", "))
}

/// Ordered `key: value` lines.
#[derive(Debug, Default, Clone)]
pub struct Report {
    title: String,
    lines: Vec<(String, String)>,
}

impl Report {
    pub fn new(title: impl Into<String>) -> Self {
        Report {
            title: title.into(),
            lines: Vec::new(),
        }
    }

    pub fn line(&mut self, key: impl Into<String>, value: impl Into<String>) -> &mut Self {
        self.lines.push((key.into(), value.into()));
        self
    }

    pub fn real(&mut self, key: impl Into<String>, x: f64) -> &mut Self {
        self.line(key, sig(x))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.lines.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let width = self.lines.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = format!("{}\n", self.title);
        for (k, v) in &self.lines {
            writeln!(out, "  {k:<width$}  {v}").expect("writing to a String");
        }
        out
    }
}

//! Parsing of command-line values: inline JSON or `@path`, rational
//! exponents, and comma-separated lists.

use std::fs;

use serde::de::DeserializeOwned;
use zetasize::germ::{Germ, GermFamily};
use zetasize::{ComplexPoly, C64};

/// Reads `@path` from disk and returns anything else verbatim.
pub fn inline_or_file(s: &str) -> Result<String, String> {
    match s.strip_prefix('@') {
        Some(path) => fs::read_to_string(path).map_err(|e| format!("cannot read {path}: {e}")),
        None => Ok(s.to_string()),
    }
}

pub fn json<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    let text = inline_or_file(s)?;
    serde_json::from_str(&text).map_err(|e| format!("invalid JSON: {e}"))
}

pub fn poly(s: &str) -> Result<ComplexPoly, String> {
    json(s)
}

pub fn germ(s: &str) -> Result<Germ, String> {
    json(s)
}

pub fn family(s: &str) -> Result<GermFamily, String> {
    json(s)
}

/// Validates a `p/q` or integer string and keeps it as written.
pub fn rational(s: &str) -> Result<String, String> {
    zetasize::estimator::parse_rational(s)
        .map(|_| s.to_string())
        .map_err(|e| e.to_string())
}

/// Complex points, read from a JSON list of `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Points(pub Vec<C64>);

impl serde::Serialize for Points {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.0.iter().map(|z| [z.re, z.im]))
    }
}

pub fn complex_list(s: &str) -> Result<Points, String> {
    let pairs: Vec<[f64; 2]> = json(s)?;
    Ok(Points(pairs.into_iter().map(|[re, im]| C64::new(re, im)).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_inline_values() {
        assert_eq!(poly("[[1,0],[0,2]]").unwrap().degree(), Some(1));
        assert!(poly("[1,2]").is_err());
        assert_eq!(rational("3/2").unwrap(), "3/2");
        assert!(rational("1.5").is_err());
        assert_eq!(complex_list("[[0.1,0],[0,1]]").unwrap().0[1], C64::new(0.0, 1.0));
        assert!(inline_or_file("@/nonexistent/file").is_err());
    }
}

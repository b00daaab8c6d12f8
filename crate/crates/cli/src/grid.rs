//! Angle lists written with `pi`, e.g. `pi/16`, `7pi/30`, `0.5`.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

/// Parsed δ values together with the text they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct DeltaGrid {
    pub text: String,
    pub values: Vec<f64>,
}

impl TryFrom<String> for DeltaGrid {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        parse_delta_list(&s)
    }
}

impl From<DeltaGrid> for String {
    fn from(g: DeltaGrid) -> String {
        g.text
    }
}

/// One angle: a real number, or `[a][*]pi[/b]`.
pub fn parse_angle(s: &str) -> Result<f64, String> {
    let t = s.trim().to_ascii_lowercase();
    let bad = || format!("cannot read angle `{s}`");
    let v = match t.find("pi") {
        None => t.parse::<f64>().map_err(|_| bad())?,
        Some(at) => {
            let coef = t[..at].trim().trim_end_matches('*').trim();
            let coef = if coef.is_empty() {
                1.0
            } else {
                coef.parse::<f64>().map_err(|_| bad())?
            };
            let rest = t[at + 2..].trim();
            let div = match rest.strip_prefix('/') {
                Some(d) => d.trim().parse::<f64>().map_err(|_| bad())?,
                None if rest.is_empty() => 1.0,
                None => return Err(bad()),
            };
            coef * PI / div
        }
    };
    if !(v > 0.0 && v <= FRAC_PI_2 + 1e-12) {
        return Err(format!("angle `{s}` is outside (0, pi/2]"));
    }
    Ok(v.min(FRAC_PI_2))
}

pub fn parse_delta_list(s: &str) -> Result<DeltaGrid, String> {
    let values = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(parse_angle)
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err("empty delta grid".into());
    }
    Ok(DeltaGrid {
        text: s.trim().to_string(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_pi_fractions() {
        assert_eq!(parse_angle("pi/16").unwrap(), PI / 16.0);
        assert_eq!(parse_angle("7pi/30").unwrap(), 7.0 * PI / 30.0);
        assert_eq!(parse_angle("7*pi/30").unwrap(), 7.0 * PI / 30.0);
        assert_eq!(parse_angle(" PI/2 ").unwrap(), FRAC_PI_2);
        assert_eq!(parse_angle("0.25").unwrap(), 0.25);
    }

    #[test]
    fn rejects_out_of_range_and_junk() {
        for s in ["0", "pi", "2", "-0.1", "pi/x", "3pi/4", "pie/2", ""] {
            assert!(parse_angle(s).is_err(), "{s}");
        }
    }

    #[test]
    fn list_round_trips_through_text() {
        let g = parse_delta_list("pi/16,pi/8, pi/4,pi/2").unwrap();
        assert_eq!(g.values.len(), 4);
        let json = serde_json::to_string(&g).unwrap();
        assert_eq!(json, "\"pi/16,pi/8, pi/4,pi/2\"");
        assert_eq!(serde_json::from_str::<DeltaGrid>(&json).unwrap(), g);
    }
}

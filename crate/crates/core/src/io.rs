//! Plain-text limits files: a `#`-prefixed header followed by CSV rows keyed
//! by sample point.
//!
//! ```text
//! # design: diff
//! # n1: 8
//! # n2: 10
//! # alpha: 0.05
//! # method: lrt
//! # rounded: false
//! x,y,lower,upper
//! 0,0,-0.2597,0.3155
//! ```
//!
//! Numbers are written in the shortest form that parses back to the same
//! `f64`, so a write/read cycle is exact.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::diff::{DiffDesign, DiffModel};
use crate::error::{Error, Result};
use crate::hcore::FiniteModel;
use crate::limits::LimitsTable;
use crate::mpair::MPairModel;
use crate::prop::BinomialModel;

/// Sample space a limits table is defined on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "design", rename_all = "lowercase")]
pub enum SampleSpace {
    /// Binomial `x = 0..=n`.
    Prop { n: u32 },
    /// Two binomials, `(x, y)` with `x` outer.
    Diff { n1: u32, n2: u32 },
    /// Matched pairs, `(n10, t)` with `n10` outer.
    Mpair { n: u32 },
}

impl SampleSpace {
    pub fn num_points(&self) -> usize {
        match *self {
            Self::Prop { n } => n as usize + 1,
            Self::Diff { n1, n2 } => (n1 as usize + 1) * (n2 as usize + 1),
            Self::Mpair { n } => (n as usize + 1) * (n as usize + 2) / 2,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Self::Prop { .. } => "prop",
            Self::Diff { .. } => "diff",
            Self::Mpair { .. } => "mpair",
        }
    }

    /// Column names of the point key.
    pub fn key_columns(&self) -> &'static [&'static str] {
        match self {
            Self::Prop { .. } => &["x"],
            Self::Diff { .. } => &["x", "y"],
            Self::Mpair { .. } => &["n10", "t"],
        }
    }

    /// Point keys in table order.
    pub fn keys(&self) -> Vec<Vec<u32>> {
        match *self {
            Self::Prop { n } => (0..=n).map(|x| vec![x]).collect(),
            Self::Diff { n1, n2 } => (0..=n1).flat_map(|x| (0..=n2).map(move |y| vec![x, y])).collect(),
            Self::Mpair { n } => (0..=n).flat_map(|a| (0..=(n - a)).map(move |t| vec![a, t])).collect(),
        }
    }

    /// Table index of a point key, if it belongs to the space.
    pub fn index(&self, key: &[u32]) -> Option<usize> {
        match (*self, key) {
            (Self::Prop { n }, [x]) if *x <= n => Some(*x as usize),
            (Self::Diff { n1, n2 }, [x, y]) if *x <= n1 && *y <= n2 => {
                Some(*x as usize * (n2 as usize + 1) + *y as usize)
            }
            (Self::Mpair { n }, [a, t]) if a + t <= n => {
                let (n, a) = (n as usize, *a as usize);
                Some(a * (n + 1) - a * a.saturating_sub(1) / 2 + *t as usize)
            }
            _ => None,
        }
    }

    /// The finite model on this space.
    pub fn model(&self) -> Result<Box<dyn FiniteModel>> {
        Ok(match *self {
            Self::Prop { n } => Box::new(BinomialModel::new(n)),
            Self::Diff { n1, n2 } => Box::new(DiffModel::new(DiffDesign::new(n1, n2, 0.05)?)),
            Self::Mpair { n } => Box::new(MPairModel::new(n)),
        })
    }

    /// Parameter range `[A, B]`.
    pub fn theta_range(&self) -> (f64, f64) {
        match self {
            Self::Prop { .. } => (0.0, 1.0),
            _ => (-1.0, 1.0),
        }
    }
}

impl fmt::Display for SampleSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Prop { n } => write!(f, "prop:{n}"),
            Self::Diff { n1, n2 } => write!(f, "diff:{n1},{n2}"),
            Self::Mpair { n } => write!(f, "mpair:{n}"),
        }
    }
}

impl FromStr for SampleSpace {
    type Err = Error;

    /// Parses `prop:N`, `diff:N1,N2` or `mpair:N`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("model `{s}` is not prop:N, diff:N1,N2 or mpair:N"));
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        let nums: Vec<u32> = rest
            .split(',')
            .map(|v| v.trim().parse::<u32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad())?;
        let space = match (kind.trim(), nums.as_slice()) {
            ("prop", [n]) => Self::Prop { n: *n },
            ("diff", [n1, n2]) => Self::Diff { n1: *n1, n2: *n2 },
            ("mpair", [n]) => Self::Mpair { n: *n },
            _ => return Err(bad()),
        };
        let sizes_ok = match space {
            Self::Prop { n } | Self::Mpair { n } => n >= 1,
            Self::Diff { n1, n2 } => n1 >= 1 && n2 >= 1,
        };
        if !sizes_ok {
            return Err(Error::InvalidInput(format!("model `{s}` needs sample sizes of at least 1")));
        }
        Ok(space)
    }
}

/// A limits table together with the header describing it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitsFile {
    pub space: SampleSpace,
    pub alpha: Option<f64>,
    pub method: Option<String>,
    pub rounded: bool,
    pub limits: LimitsTable,
}

impl LimitsFile {
    pub fn new(space: SampleSpace, limits: LimitsTable) -> Result<Self> {
        limits.check_len(space.num_points())?;
        Ok(Self {
            space,
            alpha: None,
            method: None,
            rounded: false,
            limits,
        })
    }

    /// Serializes to the text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# design: {}", self.space.tag());
        match self.space {
            SampleSpace::Prop { n } | SampleSpace::Mpair { n } => {
                let _ = writeln!(out, "# n: {n}");
            }
            SampleSpace::Diff { n1, n2 } => {
                let _ = writeln!(out, "# n1: {n1}\n# n2: {n2}");
            }
        }
        if let Some(a) = self.alpha {
            let _ = writeln!(out, "# alpha: {a}");
        }
        if let Some(m) = &self.method {
            let _ = writeln!(out, "# method: {m}");
        }
        let _ = writeln!(out, "# rounded: {}", self.rounded);
        let _ = writeln!(out, "{},lower,upper", self.space.key_columns().join(","));
        for (s, key) in self.space.keys().iter().enumerate() {
            let key: Vec<String> = key.iter().map(u32::to_string).collect();
            let (l, u) = self.limits.interval(s);
            let _ = writeln!(out, "{},{l:?},{u:?}", key.join(","));
        }
        out
    }

    /// Parses the text format. The design comes from the header unless
    /// `expected` is given, in which case a header design must agree with it.
    pub fn parse(text: &str, expected: Option<SampleSpace>) -> Result<Self> {
        let parse_err = |line: usize, msg: String| Error::Parse { line, msg };
        let mut header: Vec<(usize, String, String)> = Vec::new();
        let mut body_start = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.split_once(':') {
                    header.push((i + 1, k.trim().to_ascii_lowercase(), v.trim().to_string()));
                }
                continue;
            }
            body_start = Some(i);
            break;
        }
        let get = |key: &str| header.iter().find(|(_, k, _)| k == key);
        let num = |key: &str| -> Result<Option<u32>> {
            match get(key) {
                None => Ok(None),
                Some((line, _, v)) => v
                    .parse::<u32>()
                    .map(Some)
                    .map_err(|_| parse_err(*line, format!("`{key}` must be a nonnegative integer, got `{v}`"))),
            }
        };
        let from_header = match get("design") {
            None => None,
            Some((line, _, tag)) => Some(match tag.as_str() {
                "prop" | "mpair" => {
                    let n = num("n")?.ok_or_else(|| parse_err(*line, "header lacks `n`".into()))?;
                    if tag == "prop" {
                        SampleSpace::Prop { n }
                    } else {
                        SampleSpace::Mpair { n }
                    }
                }
                "diff" => {
                    let n1 = num("n1")?.ok_or_else(|| parse_err(*line, "header lacks `n1`".into()))?;
                    let n2 = num("n2")?.ok_or_else(|| parse_err(*line, "header lacks `n2`".into()))?;
                    SampleSpace::Diff { n1, n2 }
                }
                other => return Err(parse_err(*line, format!("unknown design `{other}`"))),
            }),
        };
        let space = match (from_header, expected) {
            (Some(h), Some(e)) if h != e => {
                return Err(Error::TableMismatch(format!("file is for {h} but the model is {e}")));
            }
            (Some(h), _) => h,
            (None, Some(e)) => e,
            (None, None) => {
                return Err(Error::InvalidInput(
                    "limits file has no `# design:` header and no model was given".into(),
                ));
            }
        };
        let alpha = match get("alpha") {
            None => None,
            Some((line, _, v)) => Some(
                v.parse::<f64>()
                    .map_err(|_| parse_err(*line, format!("`alpha` must be a number, got `{v}`")))?,
            ),
        };
        let method = get("method").map(|(_, _, v)| v.clone());
        let rounded = match get("rounded") {
            None => false,
            Some((line, _, v)) => v
                .parse::<bool>()
                .map_err(|_| parse_err(*line, format!("`rounded` must be true or false, got `{v}`")))?,
        };

        let cols = space.key_columns();
        let width = cols.len() + 2;
        let points = space.num_points();
        let mut lower = vec![f64::NAN; points];
        let mut upper = vec![f64::NAN; points];
        let mut seen = vec![false; points];
        let lines: Vec<&str> = text.lines().collect();
        let start = body_start.unwrap_or(lines.len());
        let mut rows = lines.iter().enumerate().skip(start).filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        });
        if let Some((i, first)) = rows.next() {
            let want = format!("{},lower,upper", cols.join(","));
            let got: String = first.split(',').map(str::trim).collect::<Vec<_>>().join(",");
            if got != want {
                return Err(parse_err(i + 1, format!("expected column header `{want}`, got `{got}`")));
            }
        }
        for (i, line) in rows {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != width {
                return Err(parse_err(i + 1, format!("expected {width} fields, got {}", fields.len())));
            }
            let key: Vec<u32> = fields[..cols.len()]
                .iter()
                .map(|f| f.parse::<u32>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| parse_err(i + 1, format!("bad point key `{}`", fields[..cols.len()].join(","))))?;
            let s = space
                .index(&key)
                .ok_or_else(|| parse_err(i + 1, format!("point ({}) is outside {space}", fields[..cols.len()].join(","))))?;
            if seen[s] {
                return Err(parse_err(i + 1, format!("point ({}) appears twice", fields[..cols.len()].join(","))));
            }
            let value = |f: &str| -> Result<f64> {
                let v = f
                    .parse::<f64>()
                    .map_err(|_| parse_err(i + 1, format!("bad number `{f}`")))?;
                if v.is_nan() {
                    return Err(parse_err(i + 1, "NaN limit".into()));
                }
                Ok(v)
            };
            lower[s] = value(fields[cols.len()])?;
            upper[s] = value(fields[cols.len() + 1])?;
            seen[s] = true;
        }
        if let Some(s) = seen.iter().position(|&b| !b) {
            let key: Vec<String> = space.keys()[s].iter().map(u32::to_string).collect();
            return Err(Error::TableMismatch(format!(
                "point ({}) = ({}) of {space} is missing",
                cols.join(","),
                key.join(",")
            )));
        }
        let limits = LimitsTable::new(lower, upper)?;
        Ok(Self {
            space,
            alpha,
            method,
            rounded,
            limits,
        })
    }

    pub fn read(path: &Path, expected: Option<SampleSpace>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, expected)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spaces_match_models() {
        for space in [
            SampleSpace::Prop { n: 7 },
            SampleSpace::Diff { n1: 3, n2: 4 },
            SampleSpace::Mpair { n: 6 },
        ] {
            let model = space.model().unwrap();
            assert_eq!(model.num_points(), space.num_points());
            for (s, key) in space.keys().iter().enumerate() {
                assert_eq!(space.index(key), Some(s));
                assert_eq!(model.point_label(s), *key);
            }
            assert_eq!(space.to_string().parse::<SampleSpace>().unwrap(), space);
        }
        assert!("diff:3".parse::<SampleSpace>().is_err());
        assert!("prop:0".parse::<SampleSpace>().is_err());
    }

    #[test]
    fn round_trip_and_errors() {
        let space = SampleSpace::Diff { n1: 1, n2: 2 };
        let t = LimitsTable::new(
            vec![-1.0, -0.1 / 3.0, 0.0, 0.1, 0.2, f64::NEG_INFINITY],
            vec![1.0, 0.5, 0.25, 0.3, 0.7, f64::INFINITY],
        )
        .unwrap();
        let mut f = LimitsFile::new(space, t).unwrap();
        f.alpha = Some(0.05);
        f.method = Some("lrt".into());
        let text = f.to_text();
        assert_eq!(LimitsFile::parse(&text, None).unwrap(), f);
        assert_eq!(LimitsFile::parse(&text, Some(space)).unwrap(), f);
        assert!(LimitsFile::parse(&text, Some(SampleSpace::Diff { n1: 2, n2: 1 })).is_err());

        let missing: String = text.lines().filter(|l| !l.starts_with("1,1,")).map(|l| format!("{l}\n")).collect();
        let err = LimitsFile::parse(&missing, None).unwrap_err().to_string();
        assert!(err.contains("(1,1)"), "{err}");
        let dup = format!("{text}0,0,0,0\n");
        assert!(LimitsFile::parse(&dup, None).is_err());
        let headerless = text.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n");
        assert!(LimitsFile::parse(&headerless, None).is_err());
        assert!(LimitsFile::parse(&headerless, Some(space)).is_ok());
    }
}

//! Output formatting, parameter ranges and the profile cache.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::waves::{self, ModelParams, SolveOptions, WaveProfile};

/// Significant digits of floats in JSON output.
pub const JSON_DIGITS: usize = 17;
/// Significant digits of floats in CSV output.
pub const CSV_DIGITS: usize = 10;

/// Parse `x`, `a,b,c`, `start:stop:count` (linear, inclusive) or
/// `start:stop:countg` (geometric).
pub fn parse_range(s: &str) -> Result<Vec<f64>> {
    let bad = |why: &str| Error::Config(format!("bad range '{s}': {why}"));
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad("not a number"));
    let s = s.trim();
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected start:stop:count"));
        }
        let (a, b) = (num(parts[0])?, num(parts[1])?);
        let (count, geometric) = match parts[2].trim().strip_suffix('g') {
            Some(c) => (c, true),
            None => (parts[2].trim(), false),
        };
        let n: usize = count.parse().map_err(|_| bad("count is not an integer"))?;
        if n == 0 {
            return Err(bad("empty range"));
        }
        if geometric && !(a > 0.0 && b > 0.0) {
            return Err(bad("geometric ranges need positive ends"));
        }
        if n == 1 {
            return Ok(vec![a]);
        }
        let out = (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                if geometric {
                    a * (b / a).powf(t)
                } else {
                    a + (b - a) * t
                }
            })
            .collect::<Vec<_>>();
        Ok(out)
    } else {
        let v: Vec<f64> = s.split(',').map(num).collect::<Result<_>>()?;
        if v.is_empty() {
            return Err(bad("empty range"));
        }
        Ok(v)
    }
}

/// `x` with `digits` significant digits, plain notation for moderate
/// exponents. Non-finite values become `nan`, `inf`, `-inf`.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mant, exp) = sci.split_once('e').expect("scientific format");
    let e: i32 = exp.parse().expect("exponent");
    if (-5..16).contains(&e) {
        let decimals = (digits as i32 - 1 - e).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim_zeros(mant.to_string()), e)
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Serialize a JSON value with floats at [`JSON_DIGITS`] significant digits;
/// non-finite floats become `null`.
pub fn json_string(v: &Value) -> String {
    let mut out = String::new();
    write_json(&mut out, v, None, 0);
    out
}

/// As [`json_string`], indented by two spaces.
pub fn json_pretty(v: &Value) -> String {
    let mut out = String::new();
    write_json(&mut out, v, Some(2), 0);
    out
}

fn write_json(out: &mut String, v: &Value, indent: Option<usize>, depth: usize) {
    let newline = |out: &mut String, d: usize| {
        if let Some(w) = indent {
            out.push('\n');
            out.push_str(&" ".repeat(w * d));
        }
    };
    match v {
        Value::Number(n) => {
            if n.is_f64() {
                let x = n.as_f64().unwrap_or(f64::NAN);
                if x.is_finite() {
                    let s = fmt_sig(x, JSON_DIGITS);
                    // keep floats recognisable as floats
                    if s.contains(['.', 'e']) {
                        out.push_str(&s);
                    } else {
                        let _ = write!(out, "{s}.0");
                    }
                } else {
                    out.push_str("null");
                }
            } else {
                let _ = write!(out, "{n}");
            }
        }
        Value::Array(a) => {
            out.push('[');
            for (i, x) in a.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                newline(out, depth + 1);
                write_json(out, x, indent, depth + 1);
            }
            if !a.is_empty() {
                newline(out, depth);
            }
            out.push(']');
        }
        Value::Object(m) => {
            out.push('{');
            for (i, (k, x)) in m.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                newline(out, depth + 1);
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                if indent.is_some() {
                    out.push(' ');
                }
                write_json(out, x, indent, depth + 1);
            }
            if !m.is_empty() {
                newline(out, depth);
            }
            out.push('}');
        }
        other => out.push_str(&other.to_string()),
    }
}

/// serde_json turns non-finite floats into `null` on the way in; this keeps
/// them as NaN until formatting.
pub fn to_value<T: Serialize>(x: &T) -> Result<Value> {
    Ok(serde_json::to_value(x)?)
}

/// One table cell.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map(Cell::Num).unwrap_or(Cell::Empty)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<u32> for Cell {
    fn from(x: u32) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(x) => fmt_sig(*x, CSV_DIGITS),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(x) => serde_json::Number::from_f64(*x).map(Value::Number).unwrap_or(Value::Null),
            Cell::Int(i) => Value::from(*i),
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Empty => Value::Null,
        }
    }
}

/// Column-named rows written as CSV or JSON lines.
#[derive(Clone, Debug, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.columns)?;
        for r in &self.rows {
            out.write_record(r.iter().map(Cell::csv))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        for r in &self.rows {
            let obj: serde_json::Map<String, Value> =
                self.columns.iter().cloned().zip(r.iter().map(Cell::json)).collect();
            writeln!(w, "{}", json_string(&Value::Object(obj)))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// Write `contents` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Content-addressed store of solved profiles.
#[derive(Clone, Debug)]
pub struct ProfileCache {
    dir: Option<PathBuf>,
}

#[derive(Serialize)]
struct CacheKey<'a> {
    kind: &'static str,
    version: &'static str,
    params: &'a ModelParams,
    half_length: String,
    n: usize,
    tol: String,
    max_iter: usize,
}

#[derive(Serialize, Deserialize)]
struct CacheMeta {
    iterations: usize,
    stabilizer: f64,
}

impl ProfileCache {
    pub fn disabled() -> Self {
        ProfileCache { dir: None }
    }

    pub fn at(dir: impl Into<PathBuf>) -> Self {
        ProfileCache { dir: Some(dir.into()) }
    }

    /// `FRACWAVE_CACHE` if set, else `fallback`; `None` when caching is off.
    pub fn resolve(fallback: Option<PathBuf>, enabled: bool) -> Self {
        if !enabled {
            return Self::disabled();
        }
        match std::env::var_os("FRACWAVE_CACHE") {
            Some(d) if !d.is_empty() => Self::at(PathBuf::from(d)),
            _ => fallback.map(Self::at).unwrap_or_else(Self::disabled),
        }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn key(params: &ModelParams, grid: &Grid, opts: &SolveOptions) -> String {
        let key = CacheKey {
            kind: "ground_state",
            version: env!("CARGO_PKG_VERSION"),
            params,
            // exact bit patterns, not rounded decimals
            half_length: format!("{:016x}", grid.half_length().to_bits()),
            n: grid.len(),
            tol: format!("{:016x}", opts.tol.to_bits()),
            max_iter: opts.max_iter,
        };
        let bytes = serde_json::to_vec(&key).expect("cache key serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    /// Load a cached profile or solve and store it. The flag is true on a hit.
    pub fn ground_state(
        &self,
        params: &ModelParams,
        grid: &Arc<Grid>,
        opts: &SolveOptions,
    ) -> Result<(WaveProfile, bool)> {
        let Some(dir) = &self.dir else {
            return Ok((waves::solve_ground_state(params, grid, opts)?, false));
        };
        let key = Self::key(params, grid, opts);
        let fld = dir.join(format!("{key}.fld"));
        let meta = dir.join(format!("{key}.json"));
        if fld.exists() {
            if let Ok(w) = Self::load(&fld, &meta, params, grid) {
                return Ok((w, true));
            }
        }
        let w = waves::solve_ground_state(params, grid, opts)?;
        fs::create_dir_all(dir)?;
        let m = serde_json::to_vec(&CacheMeta { iterations: w.iterations, stabilizer: w.stabilizer })?;
        write_atomic(&meta, &m)?;
        let mut buf = Vec::new();
        w.field.write_fld_to(&mut buf)?;
        // the field file appears last, so its presence marks a complete entry
        write_atomic(&fld, &buf)?;
        Ok((w, false))
    }

    fn load(fld: &Path, meta: &Path, params: &ModelParams, grid: &Arc<Grid>) -> Result<WaveProfile> {
        let f = Field::read_fld(fld)?;
        if *f.grid != **grid {
            return Err(Error::GridMismatch);
        }
        let m: CacheMeta = serde_json::from_slice(&fs::read(meta)?)?;
        let mut w = WaveProfile::from_field(Field::new(grid.clone(), f.values)?, params.clone());
        w.iterations = m.iterations;
        w.stabilizer = m.stabilizer;
        Ok(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waves::Normalization;

    #[test]
    fn ranges() {
        assert_eq!(parse_range("0.35:0.75:9").unwrap().len(), 9);
        let v = parse_range("0.35:0.75:9").unwrap();
        assert!((v[8] - 0.75).abs() < 1e-15 && (v[4] - 0.55).abs() < 1e-15);
        let g = parse_range("1:100:3g").unwrap();
        assert!((g[1] - 10.0).abs() < 1e-12);
        assert_eq!(parse_range("0.4, 0.6").unwrap(), vec![0.4, 0.6]);
        assert_eq!(parse_range("2").unwrap(), vec![2.0]);
        assert!(parse_range("1:2").is_err());
        assert!(parse_range("0:1:3g").is_err());
        assert!(parse_range("1:2:0").is_err());
    }

    #[test]
    fn significant_digits() {
        assert_eq!(fmt_sig(0.1, 17), "0.10000000000000001");
        assert_eq!(fmt_sig(1.0 / 3.0, 10), "0.3333333333");
        assert_eq!(fmt_sig(-2.5e-9, 10), "-2.5e-9");
        assert_eq!(fmt_sig(12.0, 10), "12");
        assert_eq!(fmt_sig(f64::NAN, 10), "nan");
        for x in [0.1, 1.0 / 3.0, -7.25e-12, 6.02e23, 29.791167249607295] {
            assert_eq!(fmt_sig(x, 17).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn json_floats_round_trip() {
        let v = serde_json::json!({"a": 0.1, "b": [1, 2.0, -3.5e-20], "c": "x"});
        let s = json_string(&v);
        assert_eq!(s, r#"{"a":0.10000000000000001,"b":[1,2.0,-3.5e-20],"c":"x"}"#);
        let back: Value = serde_json::from_str(&json_pretty(&v)).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn table_formats() {
        let mut t = Table::new(&["x", "name", "n", "missing"]);
        t.push(vec![Cell::Num(1.0 / 7.0), "a".into(), 3usize.into(), Cell::Empty]);
        assert_eq!(t.to_csv_string().unwrap(), "x,name,n,missing\n0.1428571429,a,3,\n");
        let mut buf = Vec::new();
        t.write_jsonl(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "{\"x\":0.14285714285714285,\"name\":\"a\",\"n\":3,\"missing\":null}\n");
    }

    #[test]
    fn cache_hit_reproduces_the_solve() {
        let dir = std::env::temp_dir().join(format!("fracwave-cache-test-{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        let cache = ProfileCache::at(&dir);
        let params = ModelParams::fkdv(2.0, 1, 1.0, Normalization::GroundState).unwrap();
        let g = Grid::shared(40.0, 256).unwrap();
        let opts = SolveOptions::default();
        let (cold, hit) = cache.ground_state(&params, &g, &opts).unwrap();
        assert!(!hit);
        let (warm, hit) = cache.ground_state(&params, &g, &opts).unwrap();
        assert!(hit);
        assert_eq!(cold.values(), warm.values());
        assert_eq!(cold.iterations, warm.iterations);
        assert_eq!(cold.residual.to_bits(), warm.residual.to_bits());
        let other = ModelParams::fkdv(2.0, 1, 2.0, Normalization::GroundState).unwrap();
        assert_ne!(ProfileCache::key(&params, &g, &opts), ProfileCache::key(&other, &g, &opts));
        fs::remove_dir_all(&dir).unwrap();
    }
}

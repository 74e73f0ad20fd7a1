//! Instance and report files.
//!
//! Files are JSON written in one canonical form: object keys sorted,
//! two-space indentation, arrays of scalars on one line, integers as
//! integers and every other number as a 17-significant-digit exponent
//! literal such as `2.5000000000000000e-1`. Parsing that text gives back the
//! same `f64` bits, so emit → parse → emit is the identity and the SHA-256 of
//! the emitted text identifies an instance.

use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numeric::approx_eq;
use crate::solver::{nsw_of_values, Allocation, SolveOptions, SolveTrace};
use crate::valuations::{AdditiveFunction, Bundle, Instance, XosValuation};

pub const INSTANCE_VERSION: &str = "xos-nsw-instance/1";
pub const REPORT_VERSION: &str = "xos-nsw-report/1";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metadata {
    pub name: Option<String>,
    pub generator: Option<String>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceFile {
    pub instance: Instance,
    pub metadata: Option<Metadata>,
}

impl From<Instance> for InstanceFile {
    fn from(instance: Instance) -> Self {
        InstanceFile {
            instance,
            metadata: None,
        }
    }
}

/// Canonical text of a JSON value.
pub fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, value, 0);
    out.push('\n');
    out
}

fn is_scalar(v: &Value) -> bool {
    !matches!(v, Value::Array(_) | Value::Object(_))
}

fn write_value(out: &mut String, value: &Value, indent: usize) {
    match value {
        Value::Number(num) => {
            if let Some(u) = num.as_u64() {
                write!(out, "{u}").unwrap();
            } else if let Some(i) = num.as_i64() {
                write!(out, "{i}").unwrap();
            } else {
                let f = num.as_f64().expect("JSON numbers are finite");
                write!(out, "{f:.16e}").unwrap();
            }
        }
        Value::Array(items) if items.is_empty() => out.push_str("[]"),
        Value::Array(items) if items.iter().all(is_scalar) => {
            out.push('[');
            for (k, item) in items.iter().enumerate() {
                if k > 0 {
                    out.push_str(", ");
                }
                write_value(out, item, indent);
            }
            out.push(']');
        }
        Value::Array(items) => {
            out.push_str("[\n");
            for (k, item) in items.iter().enumerate() {
                pad(out, indent + 1);
                write_value(out, item, indent + 1);
                out.push_str(if k + 1 < items.len() { ",\n" } else { "\n" });
            }
            pad(out, indent);
            out.push(']');
        }
        Value::Object(map) if map.is_empty() => out.push_str("{}"),
        Value::Object(map) => {
            out.push_str("{\n");
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            for (k, key) in keys.iter().enumerate() {
                pad(out, indent + 1);
                out.push_str(&serde_json::to_string(key).unwrap());
                out.push_str(": ");
                write_value(out, &map[key.as_str()], indent + 1);
                out.push_str(if k + 1 < keys.len() { ",\n" } else { "\n" });
            }
            pad(out, indent);
            out.push('}');
        }
        scalar => out.push_str(&serde_json::to_string(scalar).unwrap()),
    }
}

fn pad(out: &mut String, indent: usize) {
    for _ in 0..indent {
        out.push_str("  ");
    }
}

fn float(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

fn instance_value(file: &InstanceFile) -> Value {
    let inst = &file.instance;
    let agents: Vec<Value> = inst
        .valuations()
        .iter()
        .map(|v| {
            Value::Array(
                v.family()
                    .iter()
                    .map(|f| Value::Array(f.weights().iter().map(|&w| float(w)).collect()))
                    .collect(),
            )
        })
        .collect();
    let mut map = Map::new();
    map.insert("version".into(), INSTANCE_VERSION.into());
    map.insert("n".into(), inst.n().into());
    map.insert("m".into(), inst.m().into());
    map.insert("agents".into(), Value::Array(agents));
    if let Some(meta) = &file.metadata {
        map.insert("metadata".into(), serde_json::to_value(meta).expect("metadata serializes"));
    }
    Value::Object(map)
}

pub fn emit_instance(file: &InstanceFile) -> String {
    canonical_json(&instance_value(file))
}

/// Hex SHA-256 of the canonical emission.
pub fn digest(file: &InstanceFile) -> String {
    hex_sha256(emit_instance(file).as_bytes())
}

fn hex_sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            write!(s, "{b:02x}").unwrap();
            s
        })
}

fn syntax_error(e: serde_json::Error) -> Error {
    Error::parse(format!("line {} column {}", e.line(), e.column()), e.to_string())
}

fn field<'a>(map: &'a Map<String, Value>, key: &str) -> Result<&'a Value> {
    map.get(key)
        .ok_or_else(|| Error::parse("$", format!("missing field `{key}`")))
}

fn count(map: &Map<String, Value>, key: &str) -> Result<usize> {
    field(map, key)?
        .as_u64()
        .map(|u| u as usize)
        .ok_or_else(|| Error::parse(format!("$.{key}"), "expected a nonnegative integer"))
}

fn parse_metadata(value: &Value) -> Result<Metadata> {
    let map = value
        .as_object()
        .ok_or_else(|| Error::parse("$.metadata", "expected an object"))?;
    if let Some(key) = map.keys().find(|k| !["name", "generator", "seed"].contains(&k.as_str())) {
        return Err(Error::parse(format!("$.metadata.{key}"), "unknown field"));
    }
    let text = |key: &str| -> Result<Option<String>> {
        match map.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(Error::parse(format!("$.metadata.{key}"), "expected a string")),
        }
    };
    let seed = match map.get("seed") {
        None | Some(Value::Null) => None,
        Some(v) => Some(
            v.as_u64()
                .ok_or_else(|| Error::parse("$.metadata.seed", "expected a nonnegative integer"))?,
        ),
    };
    Ok(Metadata {
        name: text("name")?,
        generator: text("generator")?,
        seed,
    })
}

/// Parses an instance file, checking the schema strictly.
pub fn parse_instance(text: &str) -> Result<InstanceFile> {
    let root: Value = serde_json::from_str(text).map_err(syntax_error)?;
    let map = root
        .as_object()
        .ok_or_else(|| Error::parse("$", "expected an object"))?;
    if let Some(key) = map
        .keys()
        .find(|k| !["version", "n", "m", "agents", "metadata"].contains(&k.as_str()))
    {
        return Err(Error::parse(format!("$.{key}"), "unknown field"));
    }
    match field(map, "version")? {
        Value::String(v) if v == INSTANCE_VERSION => {}
        other => {
            return Err(Error::parse(
                "$.version",
                format!("expected \"{INSTANCE_VERSION}\", found {other}"),
            ))
        }
    }
    let n = count(map, "n")?;
    let m = count(map, "m")?;
    let agents = field(map, "agents")?
        .as_array()
        .ok_or_else(|| Error::parse("$.agents", "expected an array"))?;
    if agents.len() != n {
        return Err(Error::parse(
            "$.agents",
            format!("{} agents listed but n = {n}", agents.len()),
        ));
    }
    let mut valuations = Vec::with_capacity(n);
    for (i, agent) in agents.iter().enumerate() {
        let at = format!("$.agents[{i}]");
        let family = agent
            .as_array()
            .ok_or_else(|| Error::parse(&at, "expected an array of additive functions"))?;
        if family.is_empty() {
            return Err(Error::parse(&at, "an agent needs at least one additive function"));
        }
        let mut functions = Vec::with_capacity(family.len());
        for (k, row) in family.iter().enumerate() {
            let at = format!("{at}[{k}]");
            let row = row
                .as_array()
                .ok_or_else(|| Error::parse(&at, "expected an array of weights"))?;
            if row.len() != m {
                return Err(Error::parse(&at, format!("{} weights but m = {m}", row.len())));
            }
            let mut weights = Vec::with_capacity(m);
            for (g, w) in row.iter().enumerate() {
                let w = w
                    .as_f64()
                    .ok_or_else(|| Error::parse(format!("{at}[{g}]"), "expected a number"))?;
                if !(w.is_finite() && w >= 0.0) {
                    return Err(Error::parse(
                        format!("{at}[{g}]"),
                        format!("weight {w} must be finite and nonnegative"),
                    ));
                }
                weights.push(w);
            }
            functions.push(AdditiveFunction::new(weights)?);
        }
        valuations.push(XosValuation::new(functions)?);
    }
    let metadata = match map.get("metadata") {
        None | Some(Value::Null) => None,
        Some(v) => Some(parse_metadata(v)?),
    };
    let instance = Instance::new(m, valuations).map_err(|e| Error::parse("$", e.to_string()))?;
    Ok(InstanceFile { instance, metadata })
}

/// Everything a `solve` run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub version: String,
    pub instance_digest: String,
    pub seed: u64,
    pub options: SolveOptions,
    pub allocation: Vec<Vec<usize>>,
    pub values: Vec<f64>,
    pub nsw: f64,
    pub trace: SolveTrace,
}

impl SolveReport {
    pub fn new(file: &InstanceFile, q: &Allocation, trace: SolveTrace, options: SolveOptions) -> Self {
        let values = q.values(&file.instance);
        SolveReport {
            version: REPORT_VERSION.into(),
            instance_digest: digest(file),
            seed: trace.seed,
            options,
            allocation: q.bundles.iter().map(|b| b.iter().copied().collect()).collect(),
            nsw: nsw_of_values(&values),
            values,
            trace,
        }
    }

    pub fn emit(&self) -> String {
        canonical_json(&serde_json::to_value(self).expect("reports serialize"))
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(syntax_error)
    }

    /// Recomputes values and NSW from the instance and the recorded
    /// allocation; returns the first disagreement.
    pub fn check(&self, file: &InstanceFile) -> std::result::Result<(), String> {
        let inst = &file.instance;
        if self.instance_digest != digest(file) {
            return Err("instance digest does not match".into());
        }
        if self.allocation.len() != inst.n() || self.values.len() != inst.n() {
            return Err("allocation size does not match the instance".into());
        }
        let bundles: Vec<Bundle> = self
            .allocation
            .iter()
            .map(|b| b.iter().copied().collect())
            .collect();
        let q = Allocation::new(bundles, inst.m()).map_err(|e| e.to_string())?;
        let values = q.values(inst);
        for (i, (&a, &b)) in values.iter().zip(&self.values).enumerate() {
            if !approx_eq(a, b) {
                return Err(format!("agent {i}: recorded value {b}, recomputed {a}"));
            }
        }
        let nsw = nsw_of_values(&values);
        if !approx_eq(nsw, self.nsw) {
            return Err(format!("recorded NSW {}, recomputed {nsw}", self.nsw));
        }
        Ok(())
    }
}

/// One `bench` line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub instance: String,
    pub seed: u64,
    pub nsw: f64,
    pub opt: Option<f64>,
    pub ratio: Option<f64>,
}

pub fn write_csv<W: io::Write, T: Serialize>(writer: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row).map_err(|e| Error::invalid(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::invalid(e.to_string()))
}

pub fn read_csv<R: io::Read, T: for<'de> Deserialize<'de>>(reader: R) -> Result<Vec<T>> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .enumerate()
        .map(|(k, row)| row.map_err(|e| Error::parse(format!("row {}", k + 1), e.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_four() -> InstanceFile {
        InstanceFile {
            instance: Instance::additive(vec![vec![0.1, 0.2, 1.0 / 3.0, 4.0], vec![0.0, 1e-300, 7.5, 2.0]]).unwrap(),
            metadata: Some(Metadata {
                name: Some("tiny".into()),
                generator: None,
                seed: Some(7),
            }),
        }
    }

    #[test]
    fn round_trip() {
        let file = two_by_four();
        let text = emit_instance(&file);
        let back = parse_instance(&text).unwrap();
        assert_eq!(back, file);
        assert_eq!(emit_instance(&back), text);
    }

    #[test]
    fn numbers_use_seventeen_digits() {
        let text = emit_instance(&two_by_four());
        assert!(text.contains("1.0000000000000001e-1"));
        assert!(text.contains("\"m\": 4"));
    }

    #[test]
    fn negative_weight_is_located() {
        let text = emit_instance(&two_by_four()).replace("7.5000000000000000e0", "-7.5");
        match parse_instance(&text) {
            Err(Error::Parse { location, .. }) => assert_eq!(location, "$.agents[1][0][2]"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ragged_row_rejected() {
        let text = r#"{"version": "xos-nsw-instance/1", "n": 1, "m": 2, "agents": [[[1.0]]]}"#;
        match parse_instance(text) {
            Err(Error::Parse { location, .. }) => assert_eq!(location, "$.agents[0][0]"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_field_rejected() {
        let text = r#"{"version": "xos-nsw-instance/1", "n": 1, "m": 0, "agents": [[[]]], "extra": 1}"#;
        assert!(parse_instance(text).is_err());
    }

    #[test]
    fn syntax_error_has_position() {
        match parse_instance("{\n  \"n\": ") {
            Err(Error::Parse { location, .. }) => assert!(location.starts_with("line 2")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bench_csv_round_trip() {
        let rows = vec![
            BenchRow { instance: "a.json".into(), seed: 1, nsw: 0.1 + 0.2, opt: Some(1.0 / 3.0), ratio: Some(0.9) },
            BenchRow { instance: "b.json".into(), seed: 2, nsw: 0.0, opt: None, ratio: None },
        ];
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows).unwrap();
        let back: Vec<BenchRow> = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
    }
}

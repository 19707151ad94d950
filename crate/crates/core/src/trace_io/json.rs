//! JSON files mapping decimal message ids to cut lists (segmentations and
//! ground truth) or to field records (ground truth only).

use std::collections::{BTreeMap, BTreeSet};

use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::{FieldType, GroundTruth, Message, Segmentation};

fn schema(path: impl Into<String>, msg: impl Into<String>) -> Error {
    Error::Schema {
        path: path.into(),
        msg: msg.into(),
    }
}

fn lengths(messages: &[Message]) -> BTreeMap<u64, usize> {
    messages.iter().map(|m| (m.id, m.len())).collect()
}

fn parse_id(key: &str, path: &str) -> Result<u64> {
    if key.is_empty() || !key.bytes().all(|b| b.is_ascii_digit()) {
        return Err(schema(path, "message id keys must be decimal integers"));
    }
    key.parse().map_err(|_| schema(path, "message id out of range"))
}

fn parse_offset(v: &Value, path: &str) -> Result<usize> {
    v.as_u64()
        .and_then(|x| usize::try_from(x).ok())
        .ok_or_else(|| schema(path, "expected a non-negative integer"))
}

fn parse_cuts(id: u64, arr: &[Value], path: &str, len: usize) -> Result<Vec<usize>> {
    let cuts = arr
        .iter()
        .enumerate()
        .map(|(i, v)| parse_offset(v, &format!("{path}[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    Ok(Segmentation::new(id, cuts, len)?.into_cuts())
}

fn top_object(text: &str) -> Result<serde_json::Map<String, Value>> {
    let v: Value = serde_json::from_str(text).map_err(|e| schema("$", e.to_string()))?;
    match v {
        Value::Object(m) => Ok(m),
        _ => Err(schema("$", "top level must be an object")),
    }
}

/// Parses a key and rejects a second spelling of an id already seen,
/// such as `"3"` and `"003"`.
fn fresh_id(key: &str, path: &str, seen: &mut BTreeSet<u64>) -> Result<u64> {
    let id = parse_id(key, path)?;
    if !seen.insert(id) {
        return Err(schema(path, "duplicate message id"));
    }
    Ok(id)
}

fn lookup(lens: &BTreeMap<u64, usize>, id: u64) -> Result<usize> {
    lens.get(&id).copied().ok_or_else(|| Error::OutOfRange {
        id,
        msg: "message id not present in the trace".into(),
    })
}

/// Parses a segmentation file and validates it against `messages`.
pub fn parse_segmentations(text: &str, messages: &[Message]) -> Result<Vec<Segmentation>> {
    let lens = lengths(messages);
    let obj = top_object(text)?;
    let mut out = Vec::with_capacity(obj.len());
    let mut seen = BTreeSet::new();
    for (key, v) in &obj {
        let path = format!("$[\"{key}\"]");
        let id = fresh_id(key, &path, &mut seen)?;
        let len = lookup(&lens, id)?;
        let arr = v.as_array().ok_or_else(|| schema(&path, "expected an array of cuts"))?;
        out.push(Segmentation::new(id, parse_cuts(id, arr, &path, len)?, len)?);
    }
    out.sort_by_key(|s| s.message_id);
    Ok(out)
}

/// Parses ground truth. Each entry is either an array of cuts or an array
/// of `{"start", "end", "type"}` field records.
pub fn parse_ground_truth(text: &str, messages: &[Message]) -> Result<GroundTruth> {
    let lens = lengths(messages);
    let obj = top_object(text)?;
    let mut gt = GroundTruth::default();
    let mut seen = BTreeSet::new();
    for (key, v) in &obj {
        let path = format!("$[\"{key}\"]");
        let id = fresh_id(key, &path, &mut seen)?;
        let len = lookup(&lens, id)?;
        let arr = v.as_array().ok_or_else(|| schema(&path, "expected an array"))?;
        if arr.iter().any(Value::is_object) {
            let mut fields = Vec::with_capacity(arr.len());
            for (i, rec) in arr.iter().enumerate() {
                let p = format!("{path}[{i}]");
                let o = rec.as_object().ok_or_else(|| schema(&p, "expected a field record"))?;
                let start = parse_offset(o.get("start").unwrap_or(&Value::Null), &format!("{p}.start"))?;
                let end = parse_offset(o.get("end").unwrap_or(&Value::Null), &format!("{p}.end"))?;
                let ty = match o.get("type") {
                    None | Some(Value::Null) => FieldType::Unknown,
                    Some(t) => serde_json::from_value(t.clone())
                        .map_err(|_| schema(format!("{p}.type"), "unknown field type"))?,
                };
                if start >= end || end > len {
                    return Err(Error::OutOfRange {
                        id,
                        msg: format!("field [{start}, {end}) outside message of length {len}"),
                    });
                }
                fields.push((start, end, ty));
            }
            let cuts = Segmentation::from_offsets(id, fields.iter().map(|f| f.1), len);
            gt.insert(id, cuts.into_cuts(), Some(fields));
        } else {
            gt.insert(id, parse_cuts(id, arr, &path, len)?, None);
        }
    }
    Ok(gt)
}

/// Canonical rendering: ids in ascending numeric order, one per line.
pub fn render_cut_map<'a, I>(entries: I) -> String
where
    I: IntoIterator<Item = (u64, &'a [usize])>,
{
    let mut sorted: Vec<(u64, &[usize])> = entries.into_iter().collect();
    sorted.sort_by_key(|e| e.0);
    let mut s = String::from("{");
    for (i, (id, cuts)) in sorted.iter().enumerate() {
        s.push_str(if i == 0 { "\n" } else { ",\n" });
        let list: Vec<String> = cuts.iter().map(|c| c.to_string()).collect();
        s.push_str(&format!("  \"{id}\": [{}]", list.join(", ")));
    }
    if !sorted.is_empty() {
        s.push('\n');
    }
    s.push_str("}\n");
    s
}

pub fn render_segmentations(segs: &[Segmentation]) -> String {
    render_cut_map(segs.iter().map(|s| (s.message_id, s.cuts())))
}

pub fn render_ground_truth(gt: &GroundTruth) -> String {
    render_cut_map(gt.iter().map(|(id, c)| (id, c)))
}

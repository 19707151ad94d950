//! One message per line as hex. Whitespace inside a line is ignored and
//! `#` starts a comment.

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HexlineError {
    pub line: usize,
    pub msg: String,
}

impl std::fmt::Display for HexlineError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.msg)
    }
}

/// Returns `(line number, payload)` for every non-empty line.
pub fn parse(text: &str) -> Result<Vec<(usize, Vec<u8>)>, HexlineError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("");
        let digits: String = body.chars().filter(|c| !c.is_whitespace()).collect();
        if digits.is_empty() {
            continue;
        }
        if digits.len() % 2 != 0 {
            return Err(HexlineError {
                line,
                msg: "odd number of hex digits".into(),
            });
        }
        let bytes = hex::decode(&digits).map_err(|e| HexlineError { line, msg: e.to_string() })?;
        out.push((line, bytes));
    }
    Ok(out)
}

pub fn render<'a, I: IntoIterator<Item = &'a [u8]>>(payloads: I) -> String {
    let mut s = String::new();
    for p in payloads {
        s.push_str(&hex::encode(p));
        s.push('\n');
    }
    s
}

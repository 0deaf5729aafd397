//! Lenient reading and writing of JSON / Python-style literals.
//!
//! LLM answers mimic the prompt's answer format, which itself contains
//! trailing commas and single-quoted strings, so strict JSON parsing is not
//! enough. The writer side renders Python `repr`-style dicts, which is what
//! the statistics payloads inside the prompts look like.

use serde_json::{Map, Number, Value};

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

type PResult<T> = Result<T, String>;

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, b: u8) -> PResult<()> {
        self.skip_ws();
        if self.peek() == Some(b) {
            self.pos += 1;
            Ok(())
        } else {
            Err(format!("expected '{}' at byte {}", b as char, self.pos))
        }
    }

    fn value(&mut self) -> PResult<Value> {
        self.skip_ws();
        match self.peek() {
            Some(b'{') => self.object(),
            Some(b'[') => self.sequence(b'[', b']'),
            Some(b'(') => self.sequence(b'(', b')'),
            Some(b'"') | Some(b'\'') => self.string().map(Value::String),
            Some(c) if c == b'-' || c.is_ascii_digit() => self.number(),
            Some(_) => self.word(),
            None => Err("unexpected end of input".into()),
        }
    }

    fn object(&mut self) -> PResult<Value> {
        self.expect(b'{')?;
        let mut map = Map::new();
        loop {
            self.skip_ws();
            if self.peek() == Some(b'}') {
                self.pos += 1;
                return Ok(Value::Object(map));
            }
            let key = match self.value()? {
                Value::String(s) => s,
                Value::Number(n) => n.to_string(),
                Value::Bool(b) => b.to_string(),
                other => return Err(format!("unsupported dict key {other}")),
            };
            self.expect(b':')?;
            let v = self.value()?;
            map.insert(key, v);
            self.skip_ws();
            match self.peek() {
                Some(b',') => self.pos += 1,
                // A missing comma before the next key is tolerated; one of
                // the answer formats shows exactly that.
                Some(b'}') | Some(b'"') | Some(b'\'') => {}
                _ => return Err(format!("expected ',' or '}}' at byte {}", self.pos)),
            }
        }
    }

    fn sequence(&mut self, open: u8, close: u8) -> PResult<Value> {
        self.expect(open)?;
        let mut items = Vec::new();
        loop {
            self.skip_ws();
            if self.peek() == Some(close) {
                self.pos += 1;
                return Ok(Value::Array(items));
            }
            items.push(self.value()?);
            self.skip_ws();
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(c) if c == close => {}
                _ => {
                    return Err(format!(
                        "expected ',' or '{}' at byte {}",
                        close as char, self.pos
                    ))
                }
            }
        }
    }

    fn string(&mut self) -> PResult<String> {
        let quote = self.src[self.pos];
        self.pos += 1;
        let mut out: Vec<u8> = Vec::new();
        while let Some(c) = self.peek() {
            self.pos += 1;
            if c == quote {
                return String::from_utf8(out).map_err(|e| e.to_string());
            }
            if c != b'\\' {
                out.push(c);
                continue;
            }
            let esc = self.peek().ok_or("dangling escape")?;
            self.pos += 1;
            match esc {
                b'n' => out.push(b'\n'),
                b't' => out.push(b'\t'),
                b'r' => out.push(b'\r'),
                b'u' => {
                    let hex = self
                        .src
                        .get(self.pos..self.pos + 4)
                        .ok_or("short \\u escape")?;
                    let code = u32::from_str_radix(std::str::from_utf8(hex).unwrap_or(""), 16)
                        .map_err(|e| e.to_string())?;
                    self.pos += 4;
                    let ch = char::from_u32(code).unwrap_or('\u{fffd}');
                    let mut buf = [0u8; 4];
                    out.extend_from_slice(ch.encode_utf8(&mut buf).as_bytes());
                }
                other => out.push(other),
            }
        }
        Err("unterminated string".into())
    }

    fn number(&mut self) -> PResult<Value> {
        let start = self.pos;
        if self.peek() == Some(b'-') {
            self.pos += 1;
        }
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() || matches!(c, b'.' | b'e' | b'E' | b'+' | b'-') {
                self.pos += 1;
            } else {
                break;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        if let Ok(i) = text.parse::<i64>() {
            return Ok(Value::Number(i.into()));
        }
        let f: f64 = text.parse().map_err(|_| format!("bad number {text:?}"))?;
        Number::from_f64(f)
            .map(Value::Number)
            .ok_or_else(|| format!("non-finite number {text:?}"))
    }

    fn word(&mut self) -> PResult<Value> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphabetic() {
                self.pos += 1;
            } else {
                break;
            }
        }
        match &self.src[start..self.pos] {
            b"true" | b"True" => Ok(Value::Bool(true)),
            b"false" | b"False" => Ok(Value::Bool(false)),
            b"null" | b"None" => Ok(Value::Null),
            _ => Err(format!("unexpected token at byte {start}")),
        }
    }
}

/// Parses one literal starting at the beginning of `text` (leading
/// whitespace allowed). Returns the value and the number of bytes consumed.
pub fn parse_literal(text: &str) -> Result<(Value, usize), String> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
    };
    let v = p.value()?;
    Ok((v, p.pos))
}

fn find_first(text: &str, open: char, accept: impl Fn(&Value) -> bool) -> Option<Value> {
    text.match_indices(open).find_map(|(idx, _)| {
        parse_literal(&text[idx..])
            .ok()
            .map(|(v, _)| v)
            .filter(|v| accept(v))
    })
}

/// First parseable `{...}` object in free text (code fences, prose and all).
pub fn find_first_object(text: &str) -> Option<Value> {
    find_first(text, '{', Value::is_object)
}

/// First parseable `[...]` list in free text.
pub fn find_first_list(text: &str) -> Option<Value> {
    find_first(text, '[', Value::is_array)
}

/// Python `repr` of a float: shortest round-trip digits, always with a
/// decimal point or exponent.
pub fn py_float(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let abs = x.abs();
    if abs != 0.0 && !(1e-4..1e16).contains(&abs) {
        let s = format!("{x:e}");
        let (mantissa, exp) = s.split_once('e').expect("exponent form");
        let exp: i32 = exp.parse().expect("integer exponent");
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mantissa}e{sign}{:02}", exp.abs());
    }
    let s = format!("{x}");
    if s.contains('.') {
        s
    } else {
        format!("{s}.0")
    }
}

/// Python `repr` of a string.
pub fn py_str(s: &str) -> String {
    let quote = if s.contains('\'') && !s.contains('"') {
        '"'
    } else {
        '\''
    };
    let mut out = String::with_capacity(s.len() + 2);
    out.push(quote);
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if c == quote => {
                out.push('\\');
                out.push(c);
            }
            c => out.push(c),
        }
    }
    out.push(quote);
    out
}

/// Rounds half away from zero to `digits` decimals.
pub fn round_to(x: f64, digits: i32) -> f64 {
    let scale = 10f64.powi(digits);
    (x * scale).round() / scale
}

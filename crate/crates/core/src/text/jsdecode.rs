use std::collections::HashSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::ioc::{extract_iocs_from_text, IocKind};
use super::TextError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JsDecoded {
    pub text: String,
    pub decoded_calls: usize,
    /// Calls left untouched because a code point was out of range.
    pub undecoded_calls: usize,
    /// URLs present in the output but not in the input.
    pub new_urls: Vec<String>,
}

static CALL_RE: OnceLock<Regex> = OnceLock::new();

fn call_re() -> &'static Regex {
    CALL_RE.get_or_init(|| {
        Regex::new(r"String\.fromCharCode\(\s*((?:0[xX][0-9A-Fa-f]+|[0-9]+)(?:\s*,\s*(?:0[xX][0-9A-Fa-f]+|[0-9]+))*)\s*\)")
            .expect("valid pattern")
    })
}

fn parse_int(s: &str) -> Option<u64> {
    match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(h) => u64::from_str_radix(h, 16).ok(),
        None => s.parse().ok(),
    }
}

fn decode_args(args: &str) -> Option<String> {
    args.split(',')
        .map(|a| {
            let v = parse_int(a.trim())?;
            if v == 0 {
                return None;
            }
            char::from_u32(u32::try_from(v).ok()?)
        })
        .collect()
}

fn urls(text: &str) -> Vec<String> {
    extract_iocs_from_text(text)
        .into_iter()
        .filter(|m| m.kind == IocKind::Url)
        .map(|m| m.value)
        .collect()
}

/// Replaces each `String.fromCharCode(n, ...)` call with integer literal
/// arguments by the string it builds.
pub fn js_charcode_decode(text: &str) -> Result<JsDecoded, TextError> {
    let re = call_re();
    if !re.is_match(text) {
        return Err(TextError::NotApplicable("no String.fromCharCode call with literal arguments".into()));
    }
    let mut decoded_calls = 0;
    let mut undecoded_calls = 0;
    let out = re.replace_all(text, |caps: &regex::Captures<'_>| match decode_args(&caps[1]) {
        Some(s) => {
            decoded_calls += 1;
            s
        }
        None => {
            undecoded_calls += 1;
            caps[0].to_string()
        }
    });
    let out = out.into_owned();
    let before: HashSet<String> = urls(text).into_iter().collect();
    let new_urls = urls(&out).into_iter().filter(|u| !before.contains(u)).collect();
    Ok(JsDecoded {
        text: out,
        decoded_calls,
        undecoded_calls,
        new_urls,
    })
}

/// Whether `text` contains at least one decodable call.
pub fn uses_charcode_obfuscation(text: &str) -> bool {
    call_re().is_match(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_and_hex_forms() {
        assert_eq!(js_charcode_decode("x=String.fromCharCode(104,116,116,112)").unwrap().text, "x=http");
        assert_eq!(js_charcode_decode("String.fromCharCode(0x68,0x69)").unwrap().text, "hi");
    }

    #[test]
    fn no_call_is_not_applicable() {
        assert!(matches!(js_charcode_decode("plain text"), Err(TextError::NotApplicable(_))));
        assert!(js_charcode_decode("String.fromCharCode(a, b)").is_err());
    }

    #[test]
    fn out_of_range_call_is_left_alone() {
        let d = js_charcode_decode("a=String.fromCharCode(1114112);b=String.fromCharCode(65)").unwrap();
        assert_eq!(d.text, "a=String.fromCharCode(1114112);b=A");
        assert_eq!((d.decoded_calls, d.undecoded_calls), (1, 1));
    }

    #[test]
    fn reports_new_urls() {
        let js: String = "http://evil.test/p.png"
            .chars()
            .map(|c| (c as u32).to_string())
            .collect::<Vec<_>>()
            .join(",");
        let src = format!("var seen='http://cdn.test/x.js'; var u=String.fromCharCode({js});");
        let d = js_charcode_decode(&src).unwrap();
        assert_eq!(d.new_urls, vec!["http://evil.test/p.png".to_string()]);
    }
}

//! Numeric interpretation of raw cell strings.
//!
//! The accepted grammar is the one found in financial report tables:
//! an optional currency symbol (`$`, `€`, `£`), an optional sign, digits with
//! optional comma thousand separators and an optional fractional part, then an
//! optional trailing `%` or scale word (`thousand`, `million`, `billion`,
//! `percent`). Surrounding parentheses mark an accounting negative.
//!
//! The scale is recorded next to the magnitude and never multiplied into it,
//! so `"2 million"` parses to magnitude `2` with scale [`Scale::Million`].

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

static NUMBER_BODY: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?:\d{1,3}(?:,\d{3})+|\d+)?(?:\.\d+)?$").expect("valid number regex")
});

const CURRENCY_SYMBOLS: [char; 3] = ['$', '€', '£'];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Thousand,
    Million,
    Billion,
    Percent,
}

impl Scale {
    pub fn name(self) -> &'static str {
        match self {
            Scale::Thousand => "thousand",
            Scale::Million => "million",
            Scale::Billion => "billion",
            Scale::Percent => "percent",
        }
    }

    /// Parses a scale word as it appears in dataset annotations. Empty and
    /// unknown strings yield `None`.
    pub fn from_word(word: &str) -> Option<Scale> {
        match word.trim().to_ascii_lowercase().as_str() {
            "thousand" | "thousands" => Some(Scale::Thousand),
            "million" | "millions" => Some(Scale::Million),
            "billion" | "billions" => Some(Scale::Billion),
            "percent" | "%" => Some(Scale::Percent),
            _ => None,
        }
    }

    /// Multiplier that turns a value expressed in this scale into base units.
    pub fn factor(self) -> f64 {
        match self {
            Scale::Thousand => 1e3,
            Scale::Million => 1e6,
            Scale::Billion => 1e9,
            Scale::Percent => 1e-2,
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericValue {
    /// Signed magnitude as written, without the parenthesized negation applied.
    pub magnitude: f64,
    pub scale: Option<Scale>,
    pub is_negative_parenthesized: bool,
}

impl NumericValue {
    /// The interpreted value: the magnitude, negated when written as `(x)`.
    pub fn value(&self) -> f64 {
        if self.is_negative_parenthesized {
            -self.magnitude
        } else {
            self.magnitude
        }
    }

    /// Canonical rendering; `parse_numeric(&v.render())` returns `v`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        if self.is_negative_parenthesized {
            out.push('(');
        }
        out.push_str(&self.magnitude.to_string());
        match self.scale {
            Some(Scale::Percent) => out.push('%'),
            Some(scale) => {
                out.push(' ');
                out.push_str(scale.name());
            }
            None => {}
        }
        if self.is_negative_parenthesized {
            out.push(')');
        }
        out
    }
}

/// Interprets `raw` as a number. Returns `None` for anything outside the
/// grammar (dates, times, "DNF", free text, empty strings).
pub fn parse_numeric(raw: &str) -> Option<NumericValue> {
    let mut rest = raw.trim();
    let mut scale = None;
    let mut parenthesized = false;

    if let Some((stripped, s)) = strip_scale_suffix(rest) {
        rest = stripped;
        scale = Some(s);
    }
    let (after_currency, mut has_currency) = strip_currency(rest);
    rest = after_currency;
    if let Some(inner) = rest.strip_prefix('(').and_then(|r| r.strip_suffix(')')) {
        parenthesized = true;
        rest = inner.trim();
        if scale.is_none() {
            if let Some((stripped, s)) = strip_scale_suffix(rest) {
                rest = stripped;
                scale = Some(s);
            }
        }
    }

    let mut negative = false;
    let mut signed = false;
    loop {
        if !has_currency {
            let (after, found) = strip_currency(rest);
            if found {
                rest = after;
                has_currency = true;
                continue;
            }
        }
        if !signed && !parenthesized {
            if let Some(c) = rest.chars().next() {
                if matches!(c, '-' | '+' | '\u{2212}') {
                    negative = c != '+';
                    signed = true;
                    rest = rest[c.len_utf8()..].trim_start();
                    continue;
                }
            }
        }
        break;
    }

    if rest.is_empty() || !rest.bytes().any(|b| b.is_ascii_digit()) {
        return None;
    }
    if !NUMBER_BODY.is_match(rest) {
        return None;
    }
    let digits: String = rest.chars().filter(|&c| c != ',').collect();
    let mut magnitude: f64 = digits.parse().ok()?;
    if !magnitude.is_finite() {
        return None;
    }
    if negative {
        magnitude = -magnitude;
    }
    Some(NumericValue {
        magnitude,
        scale,
        is_negative_parenthesized: parenthesized,
    })
}

fn strip_currency(s: &str) -> (&str, bool) {
    match s.chars().next() {
        Some(c) if CURRENCY_SYMBOLS.contains(&c) => (s[c.len_utf8()..].trim_start(), true),
        _ => (s, false),
    }
}

fn strip_scale_suffix(s: &str) -> Option<(&str, Scale)> {
    if let Some(rest) = s.strip_suffix('%') {
        return Some((rest.trim_end(), Scale::Percent));
    }
    let (head, word) = s.rsplit_once(char::is_whitespace)?;
    let scale = match word.to_ascii_lowercase().as_str() {
        "thousand" => Scale::Thousand,
        "million" => Scale::Million,
        "billion" => Scale::Billion,
        "percent" => Scale::Percent,
        _ => return None,
    };
    Some((head.trim_end(), scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn num(raw: &str) -> NumericValue {
        parse_numeric(raw).unwrap_or_else(|| panic!("{raw:?} should parse"))
    }

    #[test]
    fn thousand_separators() {
        let v = num("1,234.5");
        assert_eq!(v.magnitude, 1234.5);
        assert_eq!(v.scale, None);
        assert!(!v.is_negative_parenthesized);
    }

    #[test]
    fn accounting_negative() {
        let v = num("(5)");
        assert_eq!(v.magnitude, 5.0);
        assert!(v.is_negative_parenthesized);
        assert_eq!(v.value(), -5.0);
        assert_eq!(num("$(1,234)").value(), -1234.0);
        assert_eq!(num("($ 12.5)").value(), -12.5);
    }

    #[test]
    fn non_numbers_are_absent() {
        for raw in ["DNF", "", "  ", "-", "\u{2014}", "4:19.41", "4 years", "1st", "2022/05/20", "12,34", "$", "%", "n/a", "1.2.3"] {
            assert_eq!(parse_numeric(raw), None, "{raw:?}");
        }
    }

    #[test]
    fn scale_is_kept_separate() {
        let v = num("2 million");
        assert_eq!(v.magnitude, 2.0);
        assert_eq!(v.scale, Some(Scale::Million));
        assert_eq!(num("3.5 Billion").scale, Some(Scale::Billion));
        assert_eq!(num("7 thousand").magnitude, 7.0);
    }

    #[test]
    fn percent_forms() {
        assert_eq!(num("12.5%").scale, Some(Scale::Percent));
        assert_eq!(num("12.5 %").magnitude, 12.5);
        assert_eq!(num("40 percent").scale, Some(Scale::Percent));
        let v = num("(3.1%)");
        assert_eq!(v.value(), -3.1);
        assert_eq!(v.scale, Some(Scale::Percent));
    }

    #[test]
    fn signs_and_currency() {
        assert_eq!(num("-$5").value(), -5.0);
        assert_eq!(num("$-5").value(), -5.0);
        assert_eq!(num("+7").value(), 7.0);
        assert_eq!(num("€ 1,000").value(), 1000.0);
        assert_eq!(num("£.5").value(), 0.5);
        assert_eq!(num("\u{2212}3").value(), -3.0);
    }

    #[test]
    fn render_round_trips_examples() {
        for raw in ["1,234.5", "(5)", "2 million", "12.5%", "(3.1%)", "-0", "$ 42", "0.000001"] {
            let v = num(raw);
            assert_eq!(parse_numeric(&v.render()), Some(v), "{raw:?} -> {}", v.render());
        }
    }

    fn numeric_like() -> impl Strategy<Value = String> {
        (
            prop::option::of(prop::sample::select(vec!["$", "€", "£"])),
            prop::option::of(prop::sample::select(vec!["-", "+"])),
            0u64..10_000_000,
            prop::option::of(0u32..10_000),
            prop::option::of(prop::sample::select(vec!["%", " million", " thousand", " percent", " billion"])),
            any::<bool>(),
            any::<bool>(),
        )
            .prop_map(|(cur, sign, int, frac, suffix, commas, paren)| {
                let mut body = if commas {
                    let digits = int.to_string();
                    let mut grouped = String::new();
                    for (i, c) in digits.chars().enumerate() {
                        if i > 0 && (digits.len() - i) % 3 == 0 {
                            grouped.push(',');
                        }
                        grouped.push(c);
                    }
                    grouped
                } else {
                    int.to_string()
                };
                if let Some(f) = frac {
                    body.push('.');
                    body.push_str(&f.to_string());
                }
                let mut s = String::new();
                if paren {
                    s.push('(');
                } else if let Some(sign) = sign {
                    s.push_str(sign);
                }
                if let Some(c) = cur {
                    s.push_str(c);
                }
                s.push_str(&body);
                if paren {
                    s.push(')');
                }
                if let Some(suf) = suffix {
                    s.push_str(suf);
                }
                s
            })
    }

    proptest! {
        #[test]
        fn parse_is_idempotent_on_rendering(raw in prop_oneof![numeric_like(), ".{0,12}"]) {
            let first = parse_numeric(&raw);
            if let Some(v) = first {
                prop_assert!(v.magnitude.is_finite());
                prop_assert_eq!(parse_numeric(&v.render()), Some(v));
                if v.scale == Some(Scale::Percent) {
                    prop_assert!(raw.contains('%') || raw.to_lowercase().contains("percent"));
                }
            }
        }

        #[test]
        fn generated_numbers_always_parse(raw in numeric_like()) {
            prop_assert!(parse_numeric(&raw).is_some(), "{}", raw);
        }
    }
}

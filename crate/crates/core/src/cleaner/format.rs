//! Format cleaning: markup removal, emoji/garble stripping, invisible
//! character normalisation and whitespace collapsing.
//!
//! [`clean_text`] is idempotent. The character pass runs first so that
//! deleting an emoji can never splice together a new tag, and markup is
//! stripped to a fixpoint.

use std::sync::OnceLock;

use regex::Regex;

use super::quality::is_cjk_ideograph;
use crate::document::Document;

struct MarkupPatterns {
    script: Regex,
    style: Regex,
    comment: Regex,
    tag: Regex,
    nbsp: Regex,
}

fn markup() -> &'static MarkupPatterns {
    static PATTERNS: OnceLock<MarkupPatterns> = OnceLock::new();
    PATTERNS.get_or_init(|| MarkupPatterns {
        script: Regex::new(r"(?is)<script\b[^>]*>.*?</script\s*>").unwrap(),
        style: Regex::new(r"(?is)<style\b[^>]*>.*?</style\s*>").unwrap(),
        comment: Regex::new(r"(?s)<!--.*?-->").unwrap(),
        tag: Regex::new(r"<[A-Za-z/!?][^<>]*>").unwrap(),
        nbsp: Regex::new(r"(?i)&nbsp;").unwrap(),
    })
}

pub(crate) fn is_emoji(c: char) -> bool {
    matches!(c as u32,
        0x1F000..=0x1FAFF
        | 0x2600..=0x27BF
        | 0x231A..=0x231B
        | 0x23E9..=0x23F3
        | 0x23F8..=0x23FA
        | 0x2B50
        | 0x2B55
        | 0x20E3
        | 0xFE00..=0xFE0F
        | 0xE0020..=0xE007F)
}

/// Characters rendered as nothing (or as blank space) that should become
/// an ordinary space.
pub(crate) fn is_invisible(c: char) -> bool {
    if c == '\n' || c == '\t' || c == ' ' {
        return false;
    }
    matches!(c as u32,
        0x00A0
        | 0x1680
        | 0x180E
        | 0x2000..=0x200F
        | 0x2028..=0x202F
        | 0x205F..=0x206F
        | 0x3000
        | 0xFEFF)
        || (c.is_control() && c != '\r')
}

const REPLACEMENT: char = '\u{FFFD}';
const ZWJ: char = '\u{200D}';

fn strip_chars(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    for (i, &c) in chars.iter().enumerate() {
        if is_emoji(c) || c == REPLACEMENT {
            continue;
        }
        if c == ZWJ {
            // joiner inside an emoji sequence goes with the emoji
            let prev = i.checked_sub(1).map(|j| chars[j]);
            let next = chars.get(i + 1).copied();
            if prev.is_some_and(is_emoji) || next.is_some_and(is_emoji) {
                continue;
            }
        }
        if is_invisible(c) {
            out.push(' ');
        } else {
            out.push(c);
        }
    }
    out
}

fn strip_markup(text: &str) -> String {
    let p = markup();
    let mut current = text.to_string();
    loop {
        let mut next = p.script.replace_all(&current, " ").into_owned();
        next = p.style.replace_all(&next, " ").into_owned();
        next = p.comment.replace_all(&next, " ").into_owned();
        next = p.tag.replace_all(&next, " ").into_owned();
        next = p.nbsp.replace_all(&next, " ").into_owned();
        if next == current {
            return current;
        }
        current = next;
    }
}

fn is_cjk_context(c: char) -> bool {
    is_cjk_ideograph(c) || matches!(c as u32, 0x3001..=0x303F | 0xFF01..=0xFF60)
}

fn collapse_whitespace(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars().peekable();
    let mut pending: Option<bool> = None; // Some(has_newline) while inside a run
    while let Some(c) = chars.next() {
        if c.is_whitespace() {
            let has_newline = pending.unwrap_or(false) || c == '\n';
            pending = Some(has_newline);
            continue;
        }
        if let Some(has_newline) = pending.take() {
            let prev = out.chars().next_back();
            let between_cjk = prev.is_some_and(is_cjk_context) && is_cjk_context(c);
            if prev.is_some() && (has_newline || !between_cjk) {
                out.push(if has_newline { '\n' } else { ' ' });
            }
        }
        out.push(c);
    }
    out
}

/// Cleans raw page text. Total: pathological input yields an empty string.
pub fn clean_text(text: &str) -> String {
    let text = strip_chars(text);
    let text = strip_markup(&text);
    collapse_whitespace(&text)
}

pub fn clean_format(mut doc: Document) -> Document {
    doc.text = clean_text(&doc.text);
    doc
}

/// Frequent byte-garbage strings seen when GBK/UTF-8 conversions go wrong.
const GARBLED_VOCAB: [&str; 3] = ["锟斤拷", "烫烫烫", "屯屯屯"];

const CP1252_HIGH: &str = "€‚ƒ„…†‡ˆ‰Š‹ŒŽ‘’“”•–—˜™š›œžŸ";

fn is_mojibake_pair(a: char, b: char) -> bool {
    // UTF-8 lead byte decoded as Latin-1 followed by a continuation byte.
    matches!(a as u32, 0xC2..=0xEF)
        && (matches!(b as u32, 0x80..=0xBF) || CP1252_HIGH.contains(b))
}

/// Fraction of characters that look like decoding damage: replacement
/// characters, mojibake bigrams and known garbled strings.
pub fn garble_ratio(text: &str) -> f64 {
    let chars: Vec<char> = text.chars().collect();
    if chars.is_empty() {
        return 0.0;
    }
    let mut flagged = vec![false; chars.len()];
    for (i, &c) in chars.iter().enumerate() {
        if c == REPLACEMENT {
            flagged[i] = true;
        }
        if let Some(&next) = chars.get(i + 1) {
            if is_mojibake_pair(c, next) {
                flagged[i] = true;
                flagged[i + 1] = true;
            }
        }
    }
    for word in GARBLED_VOCAB {
        let pattern: Vec<char> = word.chars().collect();
        for start in 0..chars.len().saturating_sub(pattern.len() - 1) {
            if chars[start..start + pattern.len()] == pattern[..] {
                flagged[start..start + pattern.len()].iter_mut().for_each(|f| *f = true);
            }
        }
    }
    flagged.iter().filter(|f| **f).count() as f64 / chars.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn strips_tags() {
        assert_eq!(clean_text("<p>Hello</p>"), "Hello");
        assert_eq!(clean_text("a<br/>b"), "a b");
        assert_eq!(clean_text("<div class=\"x\">one <b>two</b></div>"), "one two");
    }

    #[test]
    fn strips_script_style_and_comments() {
        let html = "<html><head><style>p { color: red; }</style><script>var x = '<b>';</script></head>\
                    <body><!-- nav --><p>Body text</p></body></html>";
        assert_eq!(clean_text(html), "Body text");
    }

    #[test]
    fn invisible_characters_become_spaces() {
        assert_eq!(clean_text("a\u{200B}b"), "a b");
        assert_eq!(clean_text("a\u{00A0}b\u{FEFF}c"), "a b c");
        assert_eq!(clean_text("a&nbsp;b"), "a b");
    }

    #[test]
    fn empty_is_identity() {
        assert_eq!(clean_text(""), "");
        assert_eq!(clean_text("  \u{200B} <br> "), "");
    }

    #[test]
    fn drops_emoji_and_replacement_chars() {
        assert_eq!(clean_text("great 😀 day"), "great day");
        assert_eq!(clean_text("fam 👨\u{200D}👩\u{200D}👧 ok"), "fam ok");
        assert_eq!(clean_text("bad\u{FFFD}byte"), "badbyte");
        assert_eq!(clean_text("sun ☀\u{FE0F}"), "sun");
    }

    #[test]
    fn collapses_whitespace_and_keeps_newlines() {
        assert_eq!(clean_text("a  \t b"), "a b");
        assert_eq!(clean_text("a \n\n  b"), "a\nb");
        assert_eq!(clean_text("  lead and trail  "), "lead and trail");
    }

    #[test]
    fn removes_spaces_between_chinese_characters() {
        assert_eq!(clean_text("中 文 字"), "中文字");
        assert_eq!(clean_text("中文 English 中文"), "中文 English 中文");
        assert_eq!(clean_text("你好， 世界"), "你好，世界");
    }

    #[test]
    fn preserves_traditional_characters() {
        let poem = "床前明月光，疑是地上霜。舉頭望明月，低頭思故鄉。";
        assert_eq!(clean_text(poem), poem);
    }

    #[test]
    fn garble_ratio_flags_damage() {
        assert_eq!(garble_ratio("plain ascii text"), 0.0);
        assert_eq!(garble_ratio(""), 0.0);
        assert!(garble_ratio("caf\u{FFFD}") > 0.2);
        // "é" encoded as UTF-8 then read as Latin-1
        assert!(garble_ratio("cafÃ©") > 0.3);
        assert_eq!(garble_ratio("锟斤拷"), 1.0);
        assert_eq!(garble_ratio("中文正常"), 0.0);
    }

    fn messy_text() -> impl Strategy<Value = String> {
        let pieces = prop::sample::select(vec![
            "<", ">", "<b>", "</p>", "<script>", "</script>", "<!--", "-->", "&nbsp;", "&", " ", "  ", "\n",
            "\t", "\r", "a", "Z", "b", "中", "文", "，", "😀", "\u{200B}", "\u{200D}", "\u{FE0F}", "\u{FFFD}",
            "\u{3000}", "\u{00A0}", "x=1", "/", "!",
        ]);
        prop::collection::vec(pieces, 0..40).prop_map(|v| v.concat())
    }

    proptest! {
        #[test]
        fn clean_is_idempotent(text in messy_text()) {
            let once = clean_text(&text);
            prop_assert_eq!(clean_text(&once), once.clone());
        }

        #[test]
        fn clean_is_idempotent_on_arbitrary_unicode(text in "\\PC{0,60}") {
            let once = clean_text(&text);
            prop_assert_eq!(clean_text(&once), once.clone());
        }

        #[test]
        fn output_has_no_invisible_or_emoji(text in messy_text()) {
            let out = clean_text(&text);
            prop_assert!(!out.chars().any(|c| is_invisible(c) || is_emoji(c) || c == REPLACEMENT));
            prop_assert!(!out.starts_with(char::is_whitespace));
            prop_assert!(!out.ends_with(char::is_whitespace));
        }
    }
}

//! Reduce raw post wikitext to lowercase word tokens.
//!
//! Cleaning runs in a fixed order: [`strip_markup`], [`canonicalize_links`],
//! [`remove_templates`], [`remove_signatures`], [`normalize`]. Every stage is
//! best effort and never fails on malformed input.
//!
//! Links into the `Wikipedia:`/`WP:` namespace survive as a single
//! mixed-case token such as `WPNPA`. User-namespace links are left in place by
//! [`canonicalize_links`] because they anchor signatures; whatever is left of
//! them after signature removal is reduced to its visible text.

use std::sync::LazyLock;

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::authorship::RawPost;

pub const DEFAULT_BOILERPLATE: &str = include_str!("../data/afd_boilerplate.txt");
pub const DEFAULT_SIGNATURES: &str = include_str!("../data/signature_patterns.txt");

#[derive(Debug, thiserror::Error)]
pub enum CleanError {
    #[error("pattern file line {line}: {source}")]
    Pattern {
        line: usize,
        #[source]
        source: regex::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanPost {
    #[serde(rename = "page")]
    pub page_title: String,
    pub author: String,
    #[serde(rename = "rev")]
    pub revision_id: u64,
    #[serde(rename = "ts")]
    pub timestamp: DateTime<Utc>,
    pub tokens: Vec<String>,
}

impl CleanPost {
    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }
}

/// Ordered list of regular expressions loaded from a pattern file.
///
/// One pattern per line, `#` starts a comment line, blank lines are ignored.
/// A literal space in a pattern matches any run of whitespace.
#[derive(Debug, Clone, Default)]
pub struct PatternList {
    patterns: Vec<Regex>,
}

impl PatternList {
    pub fn parse(source: &str) -> Result<Self, CleanError> {
        let mut patterns = Vec::new();
        for (i, line) in source.lines().enumerate() {
            let line = line.trim_end();
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let expanded = line.trim_start().replace(' ', r"\s+");
            let re = Regex::new(&expanded).map_err(|source| CleanError::Pattern { line: i + 1, source })?;
            patterns.push(re);
        }
        Ok(PatternList { patterns })
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    fn apply(&self, text: &str) -> String {
        let mut out = text.to_owned();
        for re in &self.patterns {
            if re.is_match(&out) {
                out = re.replace_all(&out, " ").into_owned();
            }
        }
        out
    }
}

static COMMENT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)<!--.*?-->").unwrap());
static TAG: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"</?([A-Za-z][A-Za-z0-9]*)(?:\s[^<>]*)?/?>").unwrap());
static ENTITY: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"&(?:#[0-9]+|#x[0-9A-Fa-f]+|[A-Za-z]+);").unwrap());
static HEADING: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*=+\s*(.*?)\s*=+\s*$").unwrap());
static BULLETS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*[*#:;]+\s*").unwrap());
static RULE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*-{4,}\s*$").unwrap());
static TABLE_ATTRS: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"^(?:\s*[A-Za-z-]+\s*=\s*(?:"[^"]*"|'[^']*'|[^\s|]+))+\s*\|(?:[^|]|$)"#).unwrap());
static APOSTROPHES: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"''+").unwrap());
static MAGIC_WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"__[A-Z]+__").unwrap());
static EXTERNAL_LINK: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\[(?:(?:https?|ftp|irc|news|mailto):)?(?://)?(?:[A-Za-z0-9.-]+\.[A-Za-z]{2,}|//)[^\s\]|]*(?:[\s|]+([^\]]*))?\]")
        .unwrap()
});
static BARE_URL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?:https?|ftp)://[^\s\]\[|<>]+").unwrap());
static SIGNATURE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)(?:-{1,2}|—|–)?\s*\[\[\s*user(?:[ _]talk)?\s*:[^\[\]]*\]\](?:[^\p{L}\n\[\]]{0,8}\[\[\s*(?:user(?:[ _]talk)?\s*:|special:\s*contributions/)[^\[\]]*\]\])*[^\n\[\]]{0,32}?\d{1,2}:\d{2},?\s+\d{1,2}\s+\p{L}+\s+\d{4}\s*\(UTC\)",
    )
    .unwrap()
});
static CANONICAL_TOKEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(?:WP|Wikipedia)[A-Za-z0-9]+$").unwrap());

/// Inline elements vanish without a gap; other elements separate words.
fn is_inline_tag(name: &str) -> bool {
    matches!(
        name.to_ascii_lowercase().as_str(),
        "i" | "b" | "u" | "s" | "em" | "strong" | "span" | "small" | "big" | "sup" | "sub" | "strike" | "del"
            | "ins" | "font" | "code" | "tt" | "abbr" | "nowiki" | "var" | "kbd" | "samp" | "mark"
    )
}

fn decode_entity(entity: &str) -> String {
    let body = &entity[1..entity.len() - 1];
    let decoded = if let Some(num) = body.strip_prefix("#x").or_else(|| body.strip_prefix("#X")) {
        u32::from_str_radix(num, 16).ok().and_then(char::from_u32)
    } else if let Some(num) = body.strip_prefix('#') {
        num.parse().ok().and_then(char::from_u32)
    } else {
        match body {
            "amp" => Some('&'),
            "quot" => Some('"'),
            "apos" => Some('\''),
            "lt" => Some('<'),
            "gt" => Some('>'),
            "mdash" => Some('—'),
            "ndash" => Some('–'),
            _ => Some(' '),
        }
    };
    decoded.map_or_else(|| " ".to_owned(), |c| if c.is_whitespace() { " ".into() } else { c.to_string() })
}

/// Collapse horizontal whitespace and trim every line; drop blank lines.
fn tidy(text: &str) -> String {
    text.lines()
        .map(|l| l.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}

fn strip_table_line(line: &str) -> Option<String> {
    let t = line.trim_start();
    if t.starts_with("{|") {
        return None;
    }
    if let Some(rest) = t.strip_prefix("|}") {
        if rest.trim().is_empty() {
            return None;
        }
    }
    if t.starts_with("|-") {
        return None;
    }
    let body = if let Some(rest) = t.strip_prefix("|+") {
        rest
    } else if let Some(rest) = t.strip_prefix('!') {
        rest
    } else if let Some(rest) = t.strip_prefix('|') {
        rest
    } else {
        return Some(line.to_owned());
    };
    let cells = body.replace("||", "\n").replace("!!", "\n");
    let cleaned: Vec<String> = cells
        .lines()
        .map(|cell| match TABLE_ATTRS.find(cell) {
            Some(m) => cell[m.end().saturating_sub(1)..].trim_start_matches('|').to_owned(),
            None => cell.to_owned(),
        })
        .collect();
    Some(cleaned.join(" "))
}

/// Remove HTML tags, comments and wikitext formatting, keeping element text.
pub fn strip_markup(raw: &str) -> String {
    let text = COMMENT.replace_all(raw, " ");
    let mut lines = Vec::new();
    for line in text.lines() {
        let Some(line) = strip_table_line(line) else { continue };
        if RULE.is_match(&line) {
            continue;
        }
        let line = match HEADING.captures(&line) {
            Some(c) => c[1].to_owned(),
            None => line,
        };
        lines.push(BULLETS.replace(&line, "").into_owned());
    }
    let text = lines.join("\n");
    let text = APOSTROPHES.replace_all(&text, "");
    let text = MAGIC_WORD.replace_all(&text, " ");
    let text = TAG.replace_all(&text, |c: &regex::Captures| {
        if is_inline_tag(&c[1]) {
            String::new()
        } else {
            " ".into()
        }
    });
    let text = ENTITY.replace_all(&text, |c: &regex::Captures| decode_entity(&c[0]));
    tidy(&text)
}

fn is_user_namespace(target: &str) -> bool {
    let t = target.trim_start_matches(':').trim().to_ascii_lowercase();
    t.starts_with("user:")
        || t.starts_with("user talk:")
        || t.starts_with("user_talk:")
        || t.starts_with("special:contributions/")
        || t.starts_with("special:contribs/")
}

fn strip_prefix_ci<'a>(s: &'a str, prefix: &str) -> Option<&'a str> {
    (s.len() >= prefix.len() && s.is_char_boundary(prefix.len()) && s[..prefix.len()].eq_ignore_ascii_case(prefix))
        .then(|| &s[prefix.len()..])
}

/// Reduce the inside of a `[[...]]` link to the text it contributes.
fn render_internal_link(inner: &str, keep_user_links: bool) -> Option<String> {
    let (target, label) = match inner.split_once('|') {
        Some((t, l)) => (t.trim(), Some(l.trim())),
        None => (inner.trim(), None),
    };
    let target = target.trim_start_matches(':');
    if is_user_namespace(target) {
        if keep_user_links {
            return None;
        }
        return Some(match label.filter(|l| !l.is_empty()) {
            Some(l) => resolve_links(l, false),
            None => target.split_once(':').map_or(target, |(_, name)| name).to_owned(),
        });
    }
    if strip_prefix_ci(target, "wikipedia:").is_some() || strip_prefix_ci(target, "wp:").is_some() {
        let canonical: String = target.chars().filter(|c| c.is_alphanumeric()).collect();
        let label = label.filter(|l| {
            let compact: String = l.chars().filter(|c| c.is_alphanumeric()).collect();
            !l.is_empty() && !l.eq_ignore_ascii_case(target) && !compact.eq_ignore_ascii_case(&canonical)
        });
        return Some(match label {
            Some(l) => format!("{canonical} {}", resolve_links(l, keep_user_links)),
            None => canonical,
        });
    }
    if strip_prefix_ci(target, "category:").is_some() {
        return Some(String::new());
    }
    if strip_prefix_ci(target, "file:").is_some() || strip_prefix_ci(target, "image:").is_some() {
        let caption = inner.rsplit('|').next().filter(|_| inner.contains('|')).unwrap_or("");
        return Some(resolve_links(caption, keep_user_links));
    }
    Some(match label.filter(|l| !l.is_empty()) {
        Some(l) => resolve_links(l, keep_user_links),
        None => target.to_owned(),
    })
}

fn find_link_end(text: &str, from: usize) -> Option<usize> {
    let bytes = text.as_bytes();
    let mut depth = 1;
    let mut i = from;
    while i + 1 < bytes.len() {
        if bytes[i] == b'[' && bytes[i + 1] == b'[' {
            depth += 1;
            i += 2;
        } else if bytes[i] == b']' && bytes[i + 1] == b']' {
            depth -= 1;
            if depth == 0 {
                return Some(i);
            }
            i += 2;
        } else {
            i += 1;
        }
    }
    None
}

fn resolve_links(text: &str, keep_user_links: bool) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("[[") {
        out.push_str(&rest[..start]);
        let Some(end) = find_link_end(rest, start + 2) else {
            out.push_str(&rest[start..]);
            return out;
        };
        let inner = &rest[start + 2..end];
        let after = &rest[end + 2..];
        match render_internal_link(inner, keep_user_links) {
            None => out.push_str(&rest[start..end + 2]),
            Some(rendered) => {
                if out.chars().last().is_some_and(char::is_alphanumeric) && !rendered.is_empty() {
                    out.push(' ');
                }
                out.push_str(&rendered);
                if after.chars().next().is_some_and(char::is_alphanumeric) && !rendered.is_empty() {
                    out.push(' ');
                }
            }
        }
        rest = after;
    }
    out.push_str(rest);
    out
}

/// Replace external links by their label and internal links by their
/// visible text; project-namespace links become one canonical token.
pub fn canonicalize_links(text: &str) -> String {
    let text = EXTERNAL_LINK.replace_all(text, |c: &regex::Captures| {
        c.get(1).map_or(String::new(), |m| format!(" {} ", m.as_str().trim()))
    });
    let text = BARE_URL.replace_all(&text, " ");
    let resolved = resolve_links(&text, true);
    if resolved.contains('\n') {
        tidy(&resolved)
    } else {
        resolved.split_whitespace().collect::<Vec<_>>().join(" ")
    }
}

/// Result of template removal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateRemoval {
    pub text: String,
    /// `{{` openings without a matching close; each was cut to end of line.
    pub unbalanced: usize,
}

/// Remove `{{...}}` transclusions (nesting aware), then substituted
/// boilerplate matched by `boilerplate`.
pub fn remove_templates(text: &str, boilerplate: &PatternList) -> TemplateRemoval {
    let bytes = text.as_bytes();
    let mut out = String::with_capacity(text.len());
    let mut unbalanced = 0;
    let mut i = 0;
    let mut copied = 0;
    while i + 1 < bytes.len() {
        if !(bytes[i] == b'{' && bytes[i + 1] == b'{') {
            i += 1;
            continue;
        }
        out.push_str(&text[copied..i]);
        let mut depth = 1;
        let mut j = i + 2;
        while j + 1 < bytes.len() && depth > 0 {
            if bytes[j] == b'{' && bytes[j + 1] == b'{' {
                depth += 1;
                j += 2;
            } else if bytes[j] == b'}' && bytes[j + 1] == b'}' {
                depth -= 1;
                j += 2;
            } else {
                j += 1;
            }
        }
        if depth == 0 {
            out.push(' ');
            i = j;
        } else {
            unbalanced += 1;
            i = text[i..].find('\n').map_or(text.len(), |n| i + n);
        }
        copied = i;
    }
    out.push_str(&text[copied.min(text.len())..]);
    let out = boilerplate.apply(&out);
    TemplateRemoval { text: tidy(&out), unbalanced }
}

/// Remove standard signatures (user link cluster through the `(UTC)`
/// timestamp) and any `custom` signature patterns, then reduce leftover
/// user-namespace links to their visible text.
pub fn remove_signatures(text: &str, custom: &PatternList) -> String {
    let text = SIGNATURE.replace_all(text, " ");
    let text = custom.apply(&text);
    tidy(&resolve_links(&text, false))
}

/// Split on whitespace, keep canonical link tokens verbatim, lowercase the
/// rest and drop everything that is not an ASCII letter.
pub fn normalize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|tok| {
            let core = tok.trim_matches(|c: char| !c.is_alphanumeric());
            if CANONICAL_TOKEN.is_match(core) {
                return Some(core.to_owned());
            }
            let word: String = tok
                .chars()
                .flat_map(char::to_lowercase)
                .filter(char::is_ascii_lowercase)
                .collect();
            (!word.is_empty()).then_some(word)
        })
        .collect()
}

/// Whether `token` is a canonical project-namespace link token.
pub fn is_canonical_link_token(token: &str) -> bool {
    CANONICAL_TOKEN.is_match(token)
}

/// Bot accounts carry the case-sensitive suffix `Bot`.
pub fn is_bot(username: &str) -> bool {
    username.ends_with("Bot")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CleanStats {
    pub posts: usize,
    pub unbalanced_templates: usize,
    pub empty_after_cleaning: usize,
}

/// The full cleaning pipeline with its configurable pattern lists.
#[derive(Debug, Clone)]
pub struct Cleaner {
    boilerplate: PatternList,
    signatures: PatternList,
}

impl Default for Cleaner {
    fn default() -> Self {
        Cleaner {
            boilerplate: PatternList::parse(DEFAULT_BOILERPLATE).expect("bundled boilerplate patterns"),
            signatures: PatternList::parse(DEFAULT_SIGNATURES).expect("bundled signature patterns"),
        }
    }
}

impl Cleaner {
    pub fn new(boilerplate: PatternList, signatures: PatternList) -> Self {
        Cleaner { boilerplate, signatures }
    }

    pub fn clean_text(&self, raw: &str, stats: &mut CleanStats) -> Vec<String> {
        let text = strip_markup(raw);
        let text = canonicalize_links(&text);
        let removal = remove_templates(&text, &self.boilerplate);
        stats.unbalanced_templates += removal.unbalanced;
        let text = remove_signatures(&removal.text, &self.signatures);
        normalize(&text)
    }

    pub fn clean_post(&self, post: &RawPost, stats: &mut CleanStats) -> CleanPost {
        let tokens = self.clean_text(&post.raw_tokens.join(" "), stats);
        stats.posts += 1;
        if tokens.is_empty() {
            stats.empty_after_cleaning += 1;
        }
        CleanPost {
            page_title: post.page_title.clone(),
            author: post.author.clone(),
            revision_id: post.revision_id,
            timestamp: post.timestamp,
            tokens,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clean(raw: &str) -> Vec<String> {
        Cleaner::default().clean_text(raw, &mut CleanStats::default())
    }

    #[test]
    fn strips_html_and_formatting() {
        assert_eq!(strip_markup("<i>this</i> is great"), "this is great");
        assert_eq!(strip_markup("'''Keep''' per nom"), "Keep per nom");
        assert_eq!(strip_markup("<div style=\"color:red\">text</div>"), "text");
        assert_eq!(strip_markup("<b>unclosed bold"), "unclosed bold");
        assert_eq!(strip_markup("== Discussion ==\n* '''Delete''' spam\n----"), "Discussion\nDelete spam");
        assert_eq!(strip_markup("a <!-- hidden --> b"), "a b");
        assert_eq!(strip_markup("x&nbsp;y &amp; z"), "x y & z");
    }

    #[test]
    fn strips_table_syntax() {
        let table = "{| class=\"wikitable\"\n|-\n! Name !! Votes\n|-\n| style=\"color:red\" | keep || 3\n|}";
        assert_eq!(strip_markup(table), "Name Votes\nkeep 3");
    }

    #[test]
    fn link_canonicalization() {
        assert_eq!(canonicalize_links("[[WP:NPA]]"), "WPNPA");
        assert_eq!(canonicalize_links("[http://ddg.gg|only show this text]"), "only show this text");
        assert_eq!(canonicalize_links("[http://ddg.gg]"), "");
        assert_eq!(canonicalize_links("[http://example.com/a?b=c some label]"), "some label");
        assert_eq!(canonicalize_links("see [[Wikipedia:No personal attacks]]."), "see WikipediaNopersonalattacks.");
        assert_eq!(canonicalize_links("[[WP:NPA|WP:NPA]]"), "WPNPA");
        assert_eq!(canonicalize_links("[[WP:NPA|be civil]]"), "WPNPA be civil");
        assert_eq!(canonicalize_links("[[Foo (band)|the band]] and [[Bar]]"), "the band and Bar");
        assert_eq!(canonicalize_links("[[Category:Spam]]tail"), "tail");
        assert_eq!(canonicalize_links("[[User:X|X]]"), "[[User:X|X]]");
        assert_eq!(canonicalize_links("unclosed [[link"), "unclosed [[link");
    }

    #[test]
    fn template_removal() {
        let none = PatternList::default();
        assert_eq!(remove_templates("{{Like}} good point", &none).text, "good point");
        assert_eq!(remove_templates("no braces here", &none).text, "no braces here");
        assert_eq!(remove_templates("a {{outer|{{inner}}}} b", &none).text, "a b");
        let cut = remove_templates("a {{broken\nnext line", &none);
        assert_eq!((cut.text.as_str(), cut.unbalanced), ("a\nnext line", 1));
        let defaults = PatternList::parse(DEFAULT_BOILERPLATE).unwrap();
        let closed = remove_templates("{{subst:afd top}} The result was keep.", &defaults);
        assert_eq!(closed.text, "");
    }

    #[test]
    fn signature_removal() {
        let none = PatternList::default();
        let sig = "keep per nom [[User:X|X]] ([[User talk:X|talk]]) 12:01, 3 May 2007 (UTC)";
        assert_eq!(remove_signatures(sig, &none), "keep per nom");
        assert_eq!(remove_signatures("no marker [[User:X|X]] here", &none), "no marker X here");
        let two = "delete [[User:A|A]] 10:00, 1 May 2007 (UTC) agree [[User:B|Bee]] ([[User talk:B|t]]) 11:30, 1 May 2007 (UTC)";
        assert_eq!(remove_signatures(two, &none), "delete agree");
        let mention = "I agree with [[User:Bob|Bob]] that this is notable. Keep. --[[User:X|X]] 12:01, 3 May 2007 (UTC)";
        assert_eq!(remove_signatures(mention, &none), "I agree with Bob that this is notable. Keep.");
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize("b4"), vec!["b"]);
        assert_eq!(normalize("Dick"), vec!["dick"]);
        assert!(normalize(":) !!!").is_empty());
        assert_eq!(normalize("see WPNPA now"), vec!["see", "WPNPA", "now"]);
    }

    #[test]
    fn bots() {
        assert!(is_bot("SineBot"));
        assert!(!is_bot("Alice"));
        assert!(!is_bot("robot"));
    }

    #[test]
    fn full_pipeline() {
        let raw = "* '''Delete''' per [[WP:NPA]], see [http://spam.example.com/x?y=1 this]. {{subst:spa}} ~~~~ <small>[[User:Q|Q]] ([[User talk:Q|talk]]) 09:15, 2 June 2008 (UTC)</small>";
        assert_eq!(clean(raw), vec!["delete", "per", "WPNPA", "see", "this"]);
    }

    #[test]
    fn cleaning_is_idempotent_on_output() {
        let raw = "'''Keep''' — you are [[WP:CIVIL|uncivil]] {{unsigned|Z}} b4 :) [[User:Y|Y]] 12:00, 1 May 2007 (UTC)";
        let once = clean(raw);
        assert_eq!(clean(&once.join(" ")), once);
    }
}

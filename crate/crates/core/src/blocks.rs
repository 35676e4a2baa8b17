//! Block-log filtering by comment terms.

use std::fmt;
use std::str::FromStr;

use regex::Regex;

use crate::authorship::{is_anonymous, RawPost};
use crate::clean::CleanPost;
use crate::dump::BlockEvent;

pub const DEFAULT_TERMS: &str = include_str!("../data/block_terms.txt");

#[derive(Debug, thiserror::Error)]
pub enum FilterError {
    #[error("unknown block filter mode {0:?} (expected blacklist or whitelist)")]
    UnknownMode(String),
    #[error("term file line {line}: {message}")]
    Terms { line: usize, message: String },
}

/// Anything attributed to a single user name.
pub trait UserRecord {
    fn user(&self) -> &str;
}

impl UserRecord for BlockEvent {
    fn user(&self) -> &str {
        &self.blocked_user
    }
}

impl UserRecord for RawPost {
    fn user(&self) -> &str {
        &self.author
    }
}

impl UserRecord for CleanPost {
    fn user(&self) -> &str {
        &self.author
    }
}

/// Drop records whose user name is an IPv4 or IPv6 address.
pub fn drop_anonymous<T: UserRecord>(records: Vec<T>) -> Vec<T> {
    records.into_iter().filter(|r| !is_anonymous(r.user())).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FilterMode {
    /// Remove blocks whose comment names an off-topic reason.
    #[default]
    Blacklist,
    /// Keep only blocks whose comment names disruptive behaviour.
    Whitelist,
}

impl FromStr for FilterMode {
    type Err = FilterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "blacklist" => Ok(FilterMode::Blacklist),
            "whitelist" => Ok(FilterMode::Whitelist),
            _ => Err(FilterError::UnknownMode(s.to_owned())),
        }
    }
}

impl fmt::Display for FilterMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FilterMode::Blacklist => "blacklist",
            FilterMode::Whitelist => "whitelist",
        })
    }
}

#[derive(Debug, Clone)]
struct Term {
    source: String,
    re: Regex,
}

fn compile_term(term: &str) -> Result<Regex, regex::Error> {
    let (body, open) = match term.strip_suffix('*') {
        Some(b) => (b, true),
        None => (term, false),
    };
    let escaped = regex::escape(body.trim()).replace(' ', r"[\s_-]+");
    let tail = if open { r"[\p{L}\p{N}]*" } else { "" };
    Regex::new(&format!(r"(?i)(?:^|[^\p{{L}}\p{{N}}]){escaped}{tail}(?:$|[^\p{{L}}\p{{N}}])"))
}

/// Blacklist and whitelist terms.
#[derive(Debug, Clone)]
pub struct TermLists {
    blacklist: Vec<Term>,
    whitelist: Vec<Term>,
}

impl Default for TermLists {
    fn default() -> Self {
        TermLists::parse(DEFAULT_TERMS).expect("bundled term list is valid")
    }
}

impl TermLists {
    /// Parse a term file with `[blacklist]` and `[whitelist]` sections.
    pub fn parse(source: &str) -> Result<Self, FilterError> {
        let mut lists = TermLists { blacklist: Vec::new(), whitelist: Vec::new() };
        let mut section: Option<FilterMode> = None;
        for (i, line) in source.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = Some(name.parse().map_err(|_| FilterError::Terms {
                    line: i + 1,
                    message: format!("unknown section [{name}]"),
                })?);
                continue;
            }
            let Some(mode) = section else {
                return Err(FilterError::Terms { line: i + 1, message: "term outside of a section".into() });
            };
            let re = compile_term(line).map_err(|e| FilterError::Terms { line: i + 1, message: e.to_string() })?;
            let term = Term { source: line.to_owned(), re };
            match mode {
                FilterMode::Blacklist => lists.blacklist.push(term),
                FilterMode::Whitelist => lists.whitelist.push(term),
            }
        }
        Ok(lists)
    }

    fn terms(&self, mode: FilterMode) -> &[Term] {
        match mode {
            FilterMode::Blacklist => &self.blacklist,
            FilterMode::Whitelist => &self.whitelist,
        }
    }

    /// First term of the given list that occurs in `comment`.
    pub fn matching_term(&self, mode: FilterMode, comment: &str) -> Option<&str> {
        self.terms(mode).iter().find(|t| t.re.is_match(comment)).map(|t| t.source.as_str())
    }

    pub fn keeps(&self, mode: FilterMode, comment: &str) -> bool {
        let hit = self.matching_term(mode, comment).is_some();
        match mode {
            FilterMode::Blacklist => !hit,
            FilterMode::Whitelist => hit,
        }
    }
}

/// Order-preserving comment filter.
pub fn filter_blocks(events: Vec<BlockEvent>, mode: FilterMode, terms: &TermLists) -> Vec<BlockEvent> {
    events.into_iter().filter(|e| terms.keeps(mode, &e.comment)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dump::parse_timestamp;

    fn ev(user: &str, comment: &str) -> BlockEvent {
        BlockEvent {
            timestamp: parse_timestamp("2007-05-03T12:00:00Z").unwrap(),
            blocked_user: user.into(),
            admin_user: "Admin".into(),
            admin_id: 1,
            comment: comment.into(),
        }
    }

    #[test]
    fn anonymous_users_dropped() {
        let kept = drop_anonymous(vec![ev("192.168.1.1", ""), ev("2001:db8::1", ""), ev("Alice", "")]);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].blocked_user, "Alice");
    }

    #[test]
    fn modes() {
        let terms = TermLists::default();
        let events = vec![ev("A", "personal attacks"), ev("B", "malfunctioning bot"), ev("C", "Willy")];
        let black: Vec<_> =
            filter_blocks(events.clone(), FilterMode::Blacklist, &terms).into_iter().map(|e| e.blocked_user).collect();
        let white: Vec<_> =
            filter_blocks(events, FilterMode::Whitelist, &terms).into_iter().map(|e| e.blocked_user).collect();
        assert_eq!(black, ["A", "C"]);
        assert_eq!(white, ["A"]);
    }

    #[test]
    fn stems_and_boundaries() {
        let t = TermLists::default();
        assert!(t.keeps(FilterMode::Whitelist, "Vandalism-only account"));
        assert!(t.keeps(FilterMode::Whitelist, "repeated harassment of others"));
        assert!(t.keeps(FilterMode::Whitelist, "see [[WP:NPA]]"));
        assert!(t.keeps(FilterMode::Whitelist, "Legal threats"));
        assert!(t.keeps(FilterMode::Blacklist, "sabotage of discussions"));
        assert!(t.keeps(FilterMode::Blacklist, "robotic tone"));
        assert!(!t.keeps(FilterMode::Blacklist, "unapproved Bot"));
        assert!(!t.keeps(FilterMode::Blacklist, "self-requested block"));
        assert!(!t.keeps(FilterMode::Blacklist, "[[WP:COPYVIO|copyright violations]]"));
        assert!(!t.keeps(FilterMode::Blacklist, "adding unsourced content"));
        assert!(t.keeps(FilterMode::Blacklist, ""));
        assert!(!t.keeps(FilterMode::Whitelist, ""));
    }

    #[test]
    fn unknown_mode_is_error() {
        assert!("greylist".parse::<FilterMode>().is_err());
        assert_eq!("Whitelist".parse::<FilterMode>().unwrap(), FilterMode::Whitelist);
    }

    #[test]
    fn term_file_errors() {
        assert!(TermLists::parse("bot\n").is_err());
        assert!(TermLists::parse("[greylist]\nbot\n").is_err());
        let t = TermLists::parse("[whitelist]\nfoo\n").unwrap();
        assert!(t.keeps(FilterMode::Blacklist, "foo"));
        assert!(t.keeps(FilterMode::Whitelist, "a foo b"));
    }

    #[test]
    fn filtering_idempotent_and_ordered() {
        let terms = TermLists::default();
        let events: Vec<_> = ["x", "bot", "vandal", "copyvio", "y", "hating"].iter().map(|c| ev("U", c)).collect();
        for mode in [FilterMode::Blacklist, FilterMode::Whitelist] {
            let once = filter_blocks(events.clone(), mode, &terms);
            let twice = filter_blocks(once.clone(), mode, &terms);
            assert_eq!(once, twice);
        }
    }
}

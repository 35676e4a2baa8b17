//! Token-level authorship attribution over a page history.
//!
//! Each revision is split on whitespace and aligned against its predecessor
//! with a longest-common-subsequence diff. Aligned tokens keep their origin.
//! Unaligned insertions are then checked against text that disappeared in the
//! same edit (moves) and against text deleted in earlier revisions
//! (restorations); runs of at least [`MIN_REUSED_RUN`] tokens found there keep
//! their original origin as well. A revision whose token sequence equals any
//! earlier revision is an exact revert and inherits that revision's
//! attribution wholesale.

use std::collections::HashMap;
use std::net::IpAddr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use similar::{capture_diff_slices, Algorithm, DiffOp};

use crate::clean::is_bot;
use crate::dump::PageHistory;

/// Shortest run of tokens recognised as moved or restored text.
pub const MIN_REUSED_RUN: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributedToken {
    pub token: String,
    pub origin_revision: u64,
    pub origin_author: Option<String>,
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributedRevision {
    pub revision_id: u64,
    pub timestamp: DateTime<Utc>,
    pub author: Option<String>,
    pub tokens: Vec<AttributedToken>,
}

impl AttributedRevision {
    /// Tokens first introduced by this revision, in document order.
    pub fn introduced(&self) -> impl Iterator<Item = &AttributedToken> {
        self.tokens
            .iter()
            .filter(move |t| t.origin_revision == self.revision_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPost {
    #[serde(rename = "page")]
    pub page_title: String,
    pub author: String,
    #[serde(rename = "rev")]
    pub revision_id: u64,
    #[serde(rename = "ts")]
    pub timestamp: DateTime<Utc>,
    #[serde(rename = "tokens")]
    pub raw_tokens: Vec<String>,
}

/// A run of tokens that left the page, with the origins they had.
struct DeletedRun<'a> {
    tokens: Vec<&'a str>,
    origins: Vec<usize>,
    consumed: Vec<bool>,
}

fn digest(tokens: &[&str]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for t in tokens {
        hasher.update(t.as_bytes());
        hasher.update([0u8]);
    }
    hasher.finalize().into()
}

/// Greedily recover origins for unaligned new tokens from deleted runs.
/// `pools` is searched in order; earlier pools win ties.
fn recover_reused<'a>(
    new: &[&'a str],
    origins: &mut [Option<usize>],
    pools: &mut [&mut Vec<DeletedRun<'a>>],
) {
    type Shingle<'s> = [&'s str; MIN_REUSED_RUN];
    let shingle = |s: &[&'a str]| -> Shingle<'a> { s.try_into().expect("shingle length") };
    let mut index: HashMap<Shingle<'a>, Vec<(usize, usize, usize)>> = HashMap::new();
    for (p, pool) in pools.iter().enumerate() {
        for (r, run) in pool.iter().enumerate() {
            for off in 0..run.tokens.len().saturating_sub(MIN_REUSED_RUN - 1) {
                index
                    .entry(shingle(&run.tokens[off..off + MIN_REUSED_RUN]))
                    .or_default()
                    .push((p, r, off));
            }
        }
    }
    let mut i = 0;
    while i + MIN_REUSED_RUN <= new.len() {
        if origins[i..i + MIN_REUSED_RUN].iter().any(Option::is_some) {
            i += 1;
            continue;
        }
        let mut best: Option<(usize, usize, usize, usize)> = None;
        for &(p, r, off) in index.get(&shingle(&new[i..i + MIN_REUSED_RUN])).into_iter().flatten() {
            let run = &pools[p][r];
            let mut len = 0;
            while i + len < new.len()
                && off + len < run.tokens.len()
                && origins[i + len].is_none()
                && !run.consumed[off + len]
                && run.tokens[off + len] == new[i + len]
            {
                len += 1;
            }
            if len >= MIN_REUSED_RUN && best.is_none_or(|b| len > b.3) {
                best = Some((p, r, off, len));
            }
        }
        match best {
            Some((p, r, off, len)) => {
                let run = &mut pools[p][r];
                for k in 0..len {
                    origins[i + k] = Some(run.origins[off + k]);
                    run.consumed[off + k] = true;
                }
                i += len;
            }
            None => i += 1,
        }
    }
}

/// Short unassigned gaps next to a recovered run (a bullet or a dangling
/// word carried along by a move) take the origin of the same occurrence in
/// the previous revision, provided the page did not gain copies of the token.
fn attach_glue(old: &[&str], old_origins: &[usize], new: &[&str], assigned: &mut [Option<usize>], recovered: &[bool]) {
    let mut i = 0;
    while i < new.len() {
        if assigned[i].is_some() {
            i += 1;
            continue;
        }
        let start = i;
        while i < new.len() && assigned[i].is_none() {
            i += 1;
        }
        let touches = (start > 0 && recovered[start - 1]) || (i < new.len() && recovered[i]);
        if i - start >= MIN_REUSED_RUN || !touches {
            continue;
        }
        for k in start..i {
            let tok = new[k];
            let old_count = old.iter().filter(|t| **t == tok).count();
            if old_count < new.iter().filter(|t| **t == tok).count() {
                continue;
            }
            let rank = new[..k].iter().filter(|t| **t == tok).count();
            let src = old.iter().enumerate().filter(|(_, t)| **t == tok).map(|(j, _)| j).nth(rank.min(old_count - 1));
            assigned[k] = src.map(|j| old_origins[j]);
        }
    }
}

fn unconsumed_runs<'a>(runs: Vec<DeletedRun<'a>>, out: &mut Vec<DeletedRun<'a>>) {
    for run in runs {
        let mut start = None;
        for k in 0..=run.tokens.len() {
            let free = k < run.tokens.len() && !run.consumed[k];
            match (free, start) {
                (true, None) => start = Some(k),
                (false, Some(s)) => {
                    let len = k - s;
                    out.push(DeletedRun {
                        tokens: run.tokens[s..k].to_vec(),
                        origins: run.origins[s..k].to_vec(),
                        consumed: vec![false; len],
                    });
                    start = None;
                }
                _ => {}
            }
        }
    }
}

/// Attribute every token of every revision to the revision that introduced it.
pub fn attribute_tokens(history: &PageHistory) -> Vec<AttributedRevision> {
    let revs = &history.revisions;
    let tokenized: Vec<Vec<&str>> = revs.iter().map(|r| r.text.split_whitespace().collect()).collect();
    // origin of each token, as an index into `revs`
    let mut origins: Vec<Vec<usize>> = Vec::with_capacity(revs.len());
    let mut seen: HashMap<[u8; 32], usize> = HashMap::new();
    let mut graveyard: Vec<DeletedRun<'_>> = Vec::new();

    for (r, new) in tokenized.iter().enumerate() {
        let key = digest(new);
        if let Some(&earlier) = seen.get(&key) {
            origins.push(origins[earlier].clone());
            seen.insert(key, r);
            continue;
        }
        seen.insert(key, r);
        let mut assigned: Vec<Option<usize>> = vec![None; new.len()];
        if r == 0 {
            origins.push(vec![0; new.len()]);
            continue;
        }
        let old = &tokenized[r - 1];
        let old_origins = &origins[r - 1];
        let mut kept = vec![false; old.len()];
        for op in capture_diff_slices(Algorithm::Myers, old, new) {
            if let DiffOp::Equal { old_index, new_index, len } = op {
                for k in 0..len {
                    assigned[new_index + k] = Some(old_origins[old_index + k]);
                    kept[old_index + k] = true;
                }
            }
        }
        let mut removed: Vec<DeletedRun<'_>> = Vec::new();
        let mut k = 0;
        while k < old.len() {
            if kept[k] {
                k += 1;
                continue;
            }
            let start = k;
            while k < old.len() && !kept[k] {
                k += 1;
            }
            removed.push(DeletedRun {
                tokens: old[start..k].to_vec(),
                origins: old_origins[start..k].to_vec(),
                consumed: vec![false; k - start],
            });
        }
        let before: Vec<bool> = assigned.iter().map(Option::is_some).collect();
        recover_reused(new, &mut assigned, &mut [&mut removed, &mut graveyard]);
        let recovered: Vec<bool> = before.iter().zip(&assigned).map(|(b, a)| !b && a.is_some()).collect();
        attach_glue(old, old_origins, new, &mut assigned, &recovered);
        let mut rest = Vec::new();
        unconsumed_runs(std::mem::take(&mut graveyard), &mut rest);
        unconsumed_runs(removed, &mut rest);
        graveyard = rest;
        origins.push(assigned.into_iter().map(|o| o.unwrap_or(r)).collect());
    }

    revs.iter()
        .zip(tokenized.iter().zip(origins))
        .map(|(rev, (tokens, origin))| AttributedRevision {
            revision_id: rev.id,
            timestamp: rev.timestamp,
            author: rev.author.clone(),
            tokens: tokens
                .iter()
                .zip(origin)
                .enumerate()
                .map(|(position, (tok, o))| AttributedToken {
                    token: (*tok).to_owned(),
                    origin_revision: revs[o].id,
                    origin_author: revs[o].author.clone(),
                    position,
                })
                .collect(),
        })
        .collect()
}

/// Whether a contributor name denotes an unregistered (IP) editor.
pub fn is_anonymous(user: &str) -> bool {
    let user = user.trim();
    let addr = user.split_once('/').map_or(user, |(a, _)| a);
    addr.parse::<IpAddr>().is_ok()
}

/// One post per revision of a registered, non-bot author that introduced at
/// least one token.
pub fn extract_posts(page_title: &str, attributed: &[AttributedRevision]) -> Vec<RawPost> {
    attributed
        .iter()
        .filter_map(|rev| {
            let author = rev.author.as_deref()?;
            if is_anonymous(author) || is_bot(author) {
                return None;
            }
            let tokens: Vec<String> = rev.introduced().map(|t| t.token.clone()).collect();
            (!tokens.is_empty()).then(|| RawPost {
                page_title: page_title.to_owned(),
                author: author.to_owned(),
                revision_id: rev.revision_id,
                timestamp: rev.timestamp,
                raw_tokens: tokens,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dump::Revision;
    use chrono::TimeZone;

    pub(crate) fn history(revs: &[(&str, &str)]) -> PageHistory {
        PageHistory {
            title: "Wikipedia:Articles for deletion/T".into(),
            revisions: revs
                .iter()
                .enumerate()
                .map(|(i, (author, text))| Revision {
                    id: 100 + i as u64,
                    timestamp: Utc.with_ymd_and_hms(2007, 5, 1, i as u32, 0, 0).unwrap(),
                    author: Some(author.to_string()),
                    text: text.to_string(),
                })
                .collect(),
        }
    }

    fn origins_of(rev: &AttributedRevision) -> Vec<u64> {
        rev.tokens.iter().map(|t| t.origin_revision).collect()
    }

    #[test]
    fn single_revision_credits_its_author() {
        let h = history(&[("X", "delete as per nom")]);
        let att = attribute_tokens(&h);
        assert!(att[0].tokens.iter().all(|t| t.origin_author.as_deref() == Some("X")));
        assert_eq!(att[0].tokens[3].position, 3);
    }

    #[test]
    fn appended_reply_is_credited_to_replier() {
        let h = history(&[("X", "Foo is not notable."), ("Y", "Foo is not notable. keep it is notable")]);
        let att = attribute_tokens(&h);
        let new: Vec<_> = att[1].introduced().map(|t| t.token.as_str()).collect();
        assert_eq!(new, vec!["keep", "it", "is", "notable"]);
    }

    #[test]
    fn exact_revert_credits_nothing() {
        let h = history(&[
            ("X", "delete as per nom"),
            ("Vandal", "lol lol lol"),
            ("Z", "delete as per nom"),
        ]);
        let att = attribute_tokens(&h);
        assert_eq!(att[2].introduced().count(), 0);
        assert_eq!(origins_of(&att[2]), vec![100; 4]);
        assert!(extract_posts(&h.title, &att).iter().all(|p| p.author != "Z"));
    }

    #[test]
    fn moved_sentence_keeps_original_author() {
        let h = history(&[
            ("X", "first part here. the moved sentence stays with x. tail words end"),
            ("Y", "the moved sentence stays with x. first part here. tail words end"),
        ]);
        let att = attribute_tokens(&h);
        assert!(att[1].tokens.iter().all(|t| t.origin_revision == 100), "{:?}", origins_of(&att[1]));
    }

    #[test]
    fn partial_restore_recovers_deleted_text() {
        let h = history(&[
            ("X", "keep this is a fine article"),
            ("V", "keep"),
            ("Z", "keep this is a fine article indeed"),
        ]);
        let att = attribute_tokens(&h);
        let new: Vec<_> = att[2].introduced().map(|t| t.token.as_str()).collect();
        assert_eq!(new, vec!["indeed"]);
    }

    #[test]
    fn posts_skip_bots_anonymous_and_empty() {
        let mut h = history(&[("X", "nominated"), ("SineBot", "nominated signed"), ("Y", "nominated signed delete as per nom")]);
        h.revisions.push(Revision {
            id: 200,
            timestamp: Utc.with_ymd_and_hms(2007, 5, 2, 0, 0, 0).unwrap(),
            author: Some("10.1.2.3".into()),
            text: "nominated signed delete as per nom anon".into(),
        });
        let posts = extract_posts(&h.title, &attribute_tokens(&h));
        let authors: Vec<_> = posts.iter().map(|p| p.author.as_str()).collect();
        assert_eq!(authors, vec!["X", "Y"]);
        assert_eq!(posts[1].raw_tokens, vec!["delete", "as", "per", "nom"]);
    }

    #[test]
    fn anonymous_detection() {
        assert!(is_anonymous("192.168.1.1"));
        assert!(is_anonymous("2001:db8::1"));
        assert!(is_anonymous("10.0.0.0/24"));
        assert!(!is_anonymous("Alice"));
    }
}

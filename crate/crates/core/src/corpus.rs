//! Timeframe labeling, sliding-window merging, class balancing and
//! post-to-block delta histograms.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, TimeDelta, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clean::CleanPost;
use crate::dump::BlockEvent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Constructive,
    Disruptive,
}

impl Label {
    /// Class index: 0 constructive, 1 disruptive.
    pub fn index(self) -> usize {
        match self {
            Label::Constructive => 0,
            Label::Disruptive => 1,
        }
    }

    pub fn from_index(i: usize) -> Label {
        if i == 0 {
            Label::Constructive
        } else {
            Label::Disruptive
        }
    }

    pub fn is_disruptive(self) -> bool {
        self == Label::Disruptive
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Constructive => "constructive",
            Label::Disruptive => "disruptive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPost {
    #[serde(flatten)]
    pub post: CleanPost,
    pub label: Label,
    /// Seconds until the author's next block, if any.
    pub delta_seconds: Option<i64>,
}

impl LabeledPost {
    pub fn delta(&self) -> Option<TimeDelta> {
        self.delta_seconds.map(TimeDelta::seconds)
    }

    /// Timestamp of the block that follows this post.
    pub fn next_block(&self) -> Option<DateTime<Utc>> {
        self.delta().map(|d| self.post.timestamp + d)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergedPost {
    pub author: String,
    pub member_post_ids: Vec<u64>,
    pub tokens: Vec<String>,
    pub label: Label,
    pub window_start: DateTime<Utc>,
    pub window_end: DateTime<Utc>,
    /// Seconds from the last member to its next block, if any.
    pub delta_seconds: Option<i64>,
}

/// Common view of labeled and merged posts for sampling and evaluation.
pub trait Labeled {
    fn label(&self) -> Label;
    fn timestamp(&self) -> DateTime<Utc>;
    fn tokens(&self) -> &[String];
}

impl Labeled for LabeledPost {
    fn label(&self) -> Label {
        self.label
    }
    fn timestamp(&self) -> DateTime<Utc> {
        self.post.timestamp
    }
    fn tokens(&self) -> &[String] {
        &self.post.tokens
    }
}

impl Labeled for MergedPost {
    fn label(&self) -> Label {
        self.label
    }
    fn timestamp(&self) -> DateTime<Utc> {
        self.window_start
    }
    fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Sorted block timestamps per blocked user.
#[derive(Debug, Clone, Default)]
pub struct BlockIndex {
    by_user: HashMap<String, Vec<DateTime<Utc>>>,
}

impl BlockIndex {
    pub fn new(blocks: &[BlockEvent]) -> Self {
        let mut by_user: HashMap<String, Vec<DateTime<Utc>>> = HashMap::new();
        for b in blocks {
            by_user.entry(b.blocked_user.clone()).or_default().push(b.timestamp);
        }
        for v in by_user.values_mut() {
            v.sort();
        }
        BlockIndex { by_user }
    }

    /// Earliest block of `user` strictly after `t`.
    pub fn next_after(&self, user: &str, t: DateTime<Utc>) -> Option<DateTime<Utc>> {
        let blocks = self.by_user.get(user)?;
        let i = blocks.partition_point(|b| *b <= t);
        blocks.get(i).copied()
    }
}

/// Label every post by the distance to its author's next block.
/// A delta equal to the timeframe counts as disruptive.
pub fn label_posts(posts: Vec<CleanPost>, blocks: &[BlockEvent], timeframe: TimeDelta) -> Vec<LabeledPost> {
    let index = BlockIndex::new(blocks);
    relabel(posts, &index, timeframe)
}

pub fn relabel(posts: Vec<CleanPost>, index: &BlockIndex, timeframe: TimeDelta) -> Vec<LabeledPost> {
    posts
        .into_iter()
        .map(|post| {
            let delta = index.next_after(&post.author, post.timestamp).map(|b| b - post.timestamp);
            let label = match delta {
                Some(d) if d <= timeframe => Label::Disruptive,
                _ => Label::Constructive,
            };
            LabeledPost { post, label, delta_seconds: delta.map(|d| d.num_seconds()) }
        })
        .collect()
}

fn same_block(a: &LabeledPost, b: &LabeledPost) -> bool {
    a.label.is_disruptive() && b.label.is_disruptive() && a.next_block().is_some() && a.next_block() == b.next_block()
}

/// Merge one author's chronologically sorted posts, one window per start post.
///
/// A window never grows past a disruptive member unless the following post
/// is disruptive because of the same block.
pub fn sliding_window_merge(posts: &[LabeledPost], window: TimeDelta) -> Vec<MergedPost> {
    (0..posts.len())
        .map(|start| {
            let first = &posts[start];
            let mut end = start;
            while end + 1 < posts.len() {
                let (cur, next) = (&posts[end], &posts[end + 1]);
                if next.post.timestamp - first.post.timestamp > window {
                    break;
                }
                if cur.label.is_disruptive() && !same_block(cur, next) {
                    break;
                }
                end += 1;
            }
            let members = &posts[start..=end];
            let last = &posts[end];
            MergedPost {
                author: first.post.author.clone(),
                member_post_ids: members.iter().map(|p| p.post.revision_id).collect(),
                tokens: members.iter().flat_map(|p| p.post.tokens.iter().cloned()).collect(),
                label: if members.iter().any(|p| p.label.is_disruptive()) {
                    Label::Disruptive
                } else {
                    Label::Constructive
                },
                window_start: first.post.timestamp,
                window_end: last.post.timestamp,
                delta_seconds: last.delta_seconds,
            }
        })
        .collect()
}

/// Group by author, merge each author's posts and order the result by
/// (author, window start).
pub fn merge_corpus(posts: &[LabeledPost], window: TimeDelta) -> Vec<MergedPost> {
    let mut by_author: BTreeMap<&str, Vec<&LabeledPost>> = BTreeMap::new();
    for p in posts {
        by_author.entry(&p.post.author).or_default().push(p);
    }
    let groups: Vec<Vec<LabeledPost>> = by_author
        .into_values()
        .map(|mut v| {
            v.sort_by_key(|p| (p.post.timestamp, p.post.revision_id));
            v.into_iter().cloned().collect()
        })
        .collect();
    let merged: Vec<Vec<MergedPost>> = groups.par_iter().map(|g| sliding_window_merge(g, window)).collect();
    merged.into_iter().flatten().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleStrategy {
    Random { seed: u64 },
    Chronological,
}

impl fmt::Display for SampleStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SampleStrategy::Random { seed } => write!(f, "random({seed})"),
            SampleStrategy::Chronological => f.write_str("chronological"),
        }
    }
}

/// Parses `random` or `chronological`; the seed comes from elsewhere.
impl FromStr for SampleStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "random" => Ok(SampleStrategy::Random { seed: 0 }),
            "chronological" => Ok(SampleStrategy::Chronological),
            other => Err(format!("unknown sampling strategy {other:?} (expected random or chronological)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SampleError {
    #[error("cannot draw {wanted} {label} posts from {available}")]
    TooFew { label: Label, wanted: usize, available: usize },
}

fn pick<T: Labeled>(items: &[T], candidates: Vec<usize>, n: usize, strategy: SampleStrategy, salt: u64) -> Vec<usize> {
    let mut chosen = candidates;
    match strategy {
        SampleStrategy::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt);
            chosen.shuffle(&mut rng);
        }
        SampleStrategy::Chronological => chosen.sort_by_key(|&i| (items[i].timestamp(), i)),
    }
    chosen.truncate(n);
    chosen
}

/// Keep every disruptive item and an equal number of constructive ones.
/// Output preserves input order.
pub fn balance_sample<T: Labeled + Clone>(items: &[T], strategy: SampleStrategy) -> Result<Vec<T>, SampleError> {
    let disruptive = items.iter().filter(|p| p.label().is_disruptive()).count();
    let constructive = items.len() - disruptive;
    if constructive < disruptive {
        return Err(SampleError::TooFew { label: Label::Constructive, wanted: disruptive, available: constructive });
    }
    let mut keep: Vec<usize> = (0..items.len()).filter(|&i| items[i].label().is_disruptive()).collect();
    let pool = (0..items.len()).filter(|&i| !items[i].label().is_disruptive()).collect();
    keep.extend(pick(items, pool, disruptive, strategy, 0));
    keep.sort_unstable();
    Ok(keep.into_iter().map(|i| items[i].clone()).collect())
}

/// Draw exactly `n` items of each class. Output preserves input order.
pub fn sample_per_class<T: Labeled + Clone>(
    items: &[T],
    n: usize,
    strategy: SampleStrategy,
) -> Result<Vec<T>, SampleError> {
    let mut keep = Vec::with_capacity(2 * n);
    for label in [Label::Disruptive, Label::Constructive] {
        let pool: Vec<usize> = (0..items.len()).filter(|&i| items[i].label() == label).collect();
        if pool.len() < n {
            return Err(SampleError::TooFew { label, wanted: n, available: pool.len() });
        }
        keep.extend(pick(items, pool, n, strategy, label.index() as u64 + 1));
    }
    keep.sort_unstable();
    Ok(keep.into_iter().map(|i| items[i].clone()).collect())
}

/// For every (author, block) pair, bucket the delta from the author's last
/// post strictly before the block. Deltas at or beyond `horizon` are
/// ignored. Returns `(bucket_start_seconds, count)` for every bucket below
/// the horizon.
pub fn delta_distribution(
    posts: &[CleanPost],
    blocks: &[BlockEvent],
    horizon: TimeDelta,
    bucket: TimeDelta,
) -> Vec<(i64, u64)> {
    let width = bucket.num_seconds().max(1);
    let horizon_s = horizon.num_seconds().max(0);
    let buckets = (horizon_s + width - 1) / width;
    let mut counts = vec![0u64; buckets as usize];

    let mut by_author: HashMap<&str, Vec<DateTime<Utc>>> = HashMap::new();
    for p in posts {
        by_author.entry(&p.author).or_default().push(p.timestamp);
    }
    for v in by_author.values_mut() {
        v.sort();
    }
    for b in blocks {
        let Some(times) = by_author.get(b.blocked_user.as_str()) else { continue };
        let i = times.partition_point(|t| *t < b.timestamp);
        if i == 0 {
            continue;
        }
        let delta = (b.timestamp - times[i - 1]).num_seconds();
        if delta < horizon_s {
            counts[(delta / width) as usize] += 1;
        }
    }
    counts.into_iter().enumerate().map(|(k, c)| (k as i64 * width, c)).collect()
}

pub fn write_histogram_csv<W: std::io::Write>(mut out: W, histogram: &[(i64, u64)]) -> std::io::Result<()> {
    writeln!(out, "bucket_start_seconds,count")?;
    for (start, count) in histogram {
        writeln!(out, "{start},{count}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dump::parse_timestamp;

    fn t0() -> DateTime<Utc> {
        parse_timestamp("2010-01-01T00:00:00Z").unwrap()
    }

    fn post(author: &str, rev: u64, at: TimeDelta) -> CleanPost {
        CleanPost {
            page_title: "P".into(),
            author: author.into(),
            revision_id: rev,
            timestamp: t0() + at,
            tokens: vec![format!("w{rev}")],
        }
    }

    fn block(user: &str, at: TimeDelta) -> BlockEvent {
        BlockEvent { timestamp: t0() + at, blocked_user: user.into(), admin_user: "Adm".into(), admin_id: 1, comment: String::new() }
    }

    fn hours(h: f64) -> TimeDelta {
        TimeDelta::seconds((h * 3600.0) as i64)
    }

    #[test]
    fn labeling_examples() {
        let l = label_posts(vec![post("A", 1, hours(0.0))], &[block("A", hours(20.0))], TimeDelta::days(1));
        assert_eq!(l[0].label, Label::Disruptive);
        assert_eq!(l[0].delta_seconds, Some(20 * 3600));

        let l = label_posts(vec![post("A", 1, hours(0.0))], &[], TimeDelta::days(1));
        assert_eq!(l[0].label, Label::Constructive);
        assert_eq!(l[0].delta_seconds, None);

        let l = label_posts(vec![post("A", 1, hours(0.0))], &[block("A", hours(48.0)), block("A", hours(26.0))], TimeDelta::days(1));
        assert_eq!(l[0].label, Label::Constructive);
        assert_eq!(l[0].delta_seconds, Some(26 * 3600));
    }

    #[test]
    fn boundary_is_disruptive_and_earlier_blocks_ignored() {
        let blocks = [block("A", hours(-1.0)), block("A", hours(0.0)), block("A", hours(24.0))];
        let l = label_posts(vec![post("A", 1, hours(0.0))], &blocks, TimeDelta::days(1));
        assert_eq!(l[0].label, Label::Disruptive);
        assert_eq!(l[0].delta_seconds, Some(86400));
    }

    fn figure() -> Vec<LabeledPost> {
        let days = [0.0, 0.5, 0.9, 1.8, 2.4, 3.5];
        let posts: Vec<_> = days.iter().enumerate().map(|(i, d)| post("U", i as u64 + 1, hours(d * 24.0))).collect();
        label_posts(posts, &[block("U", hours(2.8 * 24.0))], TimeDelta::days(1))
    }

    #[test]
    fn sliding_window_figure() {
        let merged = sliding_window_merge(&figure(), TimeDelta::days(1));
        let names: Vec<String> =
            merged.iter().map(|m| m.member_post_ids.iter().map(|&i| (b'A' + i as u8 - 1) as char).collect()).collect();
        assert_eq!(names, ["ABC", "BC", "CD", "DE", "E", "F"]);
        let labels: Vec<bool> = merged.iter().map(|m| m.label.is_disruptive()).collect();
        assert_eq!(labels, [false, false, true, true, true, false]);
        assert_eq!(merged.iter().filter(|m| m.member_post_ids.contains(&3)).count(), 3);
    }

    #[test]
    fn sliding_window_trivial_cases() {
        assert!(sliding_window_merge(&[], TimeDelta::days(1)).is_empty());
        let one = label_posts(vec![post("U", 1, hours(0.0))], &[], TimeDelta::days(1));
        let m = sliding_window_merge(&one, TimeDelta::days(1));
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].tokens, one[0].post.tokens);
        let two = label_posts(vec![post("U", 1, hours(0.0)), post("U", 2, hours(48.0))], &[], TimeDelta::days(1));
        let m = sliding_window_merge(&two, TimeDelta::days(1));
        assert_eq!(m.iter().map(|m| m.member_post_ids.len()).collect::<Vec<_>>(), [1, 1]);
    }

    #[test]
    fn disruptive_posts_from_different_blocks_not_joined() {
        let posts = vec![post("U", 1, hours(0.0)), post("U", 2, hours(2.0))];
        let l = label_posts(posts, &[block("U", hours(1.0)), block("U", hours(3.0))], TimeDelta::days(1));
        let m = sliding_window_merge(&l, TimeDelta::days(1));
        assert_eq!(m[0].member_post_ids, [1]);
    }

    #[test]
    fn merge_corpus_orders_by_author() {
        let posts = vec![post("B", 1, hours(0.0)), post("A", 3, hours(5.0)), post("A", 2, hours(1.0))];
        let l = label_posts(posts, &[], TimeDelta::days(1));
        let m = merge_corpus(&l, TimeDelta::days(1));
        let ids: Vec<_> = m.iter().map(|m| m.member_post_ids.clone()).collect();
        assert_eq!(ids, vec![vec![2, 3], vec![3], vec![1]]);
    }

    fn mixed(nd: usize, nc: usize) -> Vec<LabeledPost> {
        let mut posts = Vec::new();
        let mut blocks = Vec::new();
        for i in 0..nd + nc {
            let user = format!("u{i}");
            posts.push(post(&user, i as u64, hours(i as f64)));
            if i % (nd + nc) < nd {
                blocks.push(block(&user, hours(i as f64 + 1.0)));
            }
        }
        label_posts(posts, &blocks, TimeDelta::days(1))
    }

    #[test]
    fn balance_examples() {
        let items = mixed(3, 10);
        let a = balance_sample(&items, SampleStrategy::Random { seed: 5 }).unwrap();
        let b = balance_sample(&items, SampleStrategy::Random { seed: 5 }).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().filter(|p| p.label.is_disruptive()).count(), 3);
        assert_eq!(a.len(), 6);

        let c = balance_sample(&items, SampleStrategy::Chronological).unwrap();
        let ids: Vec<_> = c.iter().filter(|p| !p.label.is_disruptive()).map(|p| p.post.revision_id).collect();
        assert_eq!(ids, [3, 4, 5]);

        let others: Vec<_> = (0..20u64)
            .map(|s| balance_sample(&items, SampleStrategy::Random { seed: s }).unwrap())
            .collect();
        let dis = |v: &Vec<LabeledPost>| v.iter().filter(|p| p.label.is_disruptive()).cloned().collect::<Vec<_>>();
        assert!(others.iter().all(|o| dis(o) == dis(&a)));
        assert!(others.iter().any(|o| o != &a));
    }

    #[test]
    fn balance_requires_enough_constructive() {
        assert!(balance_sample(&mixed(4, 2), SampleStrategy::Chronological).is_err());
        let s = sample_per_class(&mixed(4, 6), 3, SampleStrategy::Random { seed: 1 }).unwrap();
        assert_eq!(s.len(), 6);
        assert!(sample_per_class(&mixed(2, 6), 3, SampleStrategy::Random { seed: 1 }).is_err());
    }

    #[test]
    fn delta_histogram() {
        let h = delta_distribution(&[post("A", 1, hours(0.0))], &[block("A", hours(5.0))], TimeDelta::days(1), TimeDelta::hours(1));
        assert_eq!(h.len(), 24);
        assert_eq!(h[5], (5 * 3600, 1));
        assert_eq!(h.iter().map(|x| x.1).sum::<u64>(), 1);

        let h = delta_distribution(&[post("A", 1, hours(0.0))], &[], TimeDelta::days(1), TimeDelta::hours(1));
        assert!(h.iter().all(|x| x.1 == 0));
    }

    #[test]
    fn delta_histogram_uses_last_post_before_each_block() {
        let posts = [post("A", 1, hours(0.0)), post("A", 2, hours(3.0)), post("A", 3, hours(10.0)), post("B", 4, hours(1.0))];
        let blocks = [block("A", hours(4.5)), block("A", hours(12.0)), block("B", hours(1.0)), block("C", hours(2.0))];
        let h = delta_distribution(&posts, &blocks, TimeDelta::hours(6), TimeDelta::hours(1));
        let nonzero: Vec<_> = h.into_iter().filter(|x| x.1 > 0).collect();
        assert_eq!(nonzero, [(3600, 1), (7200, 1)]);
    }
}

#![allow(dead_code)]

use std::path::PathBuf;

use afdforge::clean::CleanPost;
use afdforge::dump::BlockEvent;
use chrono::{DateTime, TimeDelta, TimeZone, Utc};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn at(minutes: i64) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2010, 1, 1, 0, 0, 0).unwrap() + TimeDelta::minutes(minutes)
}

pub fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_owned).collect()
}

pub fn post(author: &str, id: u64, minutes: i64, text: &str) -> CleanPost {
    CleanPost {
        page_title: "Wikipedia:Articles for deletion/Fixture".into(),
        author: author.into(),
        revision_id: id,
        timestamp: at(minutes),
        tokens: toks(text),
    }
}

pub fn block(user: &str, minutes: i64) -> BlockEvent {
    BlockEvent {
        timestamp: at(minutes),
        blocked_user: user.into(),
        admin_user: "Admin".into(),
        admin_id: 1,
        comment: "personal attacks".into(),
    }
}

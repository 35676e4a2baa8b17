//! Streaming readers for MediaWiki page-history exports and block logs.
//!
//! [`AfdPageStream`] walks a `pages-meta-history` XML export and yields one
//! [`PageHistory`] at a time, so memory stays bounded by the largest single
//! page. Pages outside the requested title prefix are skipped without
//! buffering their revision texts.
//!
//! Block logs are accepted either as the MediaWiki logging XML or as a tab
//! separated text form (see [`write_block_tsv`]).

use std::io::{BufRead, Write};

use chrono::{DateTime, SecondsFormat, Utc};
use quick_xml::events::Event;
use quick_xml::Reader;
use serde::{Deserialize, Serialize};

/// Title prefix shared by all deletion discussions on the English Wikipedia.
pub const AFD_PREFIX: &str = "Wikipedia:Articles for deletion/";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Revision {
    pub id: u64,
    pub timestamp: DateTime<Utc>,
    /// `None` for anonymous (IP) or suppressed contributors.
    pub author: Option<String>,
    /// Full page text at this revision.
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageHistory {
    pub title: String,
    /// Sorted by timestamp, ascending.
    pub revisions: Vec<Revision>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockEvent {
    pub timestamp: DateTime<Utc>,
    pub blocked_user: String,
    pub admin_user: String,
    pub admin_id: u64,
    pub comment: String,
}

#[derive(Debug, thiserror::Error)]
pub enum DumpError {
    #[error("malformed XML at byte {offset}: {message}")]
    Xml { offset: u64, message: String },
    #[error("input truncated at byte {offset} after {complete_pages} complete page(s)")]
    Truncated { offset: u64, complete_pages: usize },
    #[error("page {title:?}: {message}")]
    Page { title: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn parse_timestamp(raw: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(raw.trim())
        .ok()
        .map(|t| t.with_timezone(&Utc))
}

pub(crate) fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Secs, true)
}

fn is_truncation(err: &quick_xml::Error) -> bool {
    use quick_xml::errors::SyntaxError::*;
    matches!(
        err,
        quick_xml::Error::Syntax(
            UnclosedPIOrXmlDecl | UnclosedComment | UnclosedDoctype | UnclosedCData | UnclosedTag
        )
    )
}

#[derive(Default)]
struct RevisionDraft {
    id: Option<u64>,
    timestamp: Option<String>,
    username: Option<String>,
    text: String,
}

#[derive(Default)]
struct PageDraft {
    title: String,
    wanted: Option<bool>,
    revisions: Vec<Revision>,
    revision: Option<RevisionDraft>,
}

/// Iterator over the deletion-discussion pages of a history dump.
///
/// Yields `Err` at most once; the stream is finished afterwards.
pub struct AfdPageStream<R: BufRead> {
    reader: Reader<R>,
    buf: Vec<u8>,
    prefix: String,
    path: Vec<Vec<u8>>,
    page: Option<PageDraft>,
    complete_pages: usize,
    finished: bool,
}

impl<R: BufRead> AfdPageStream<R> {
    pub fn new(source: R, title_prefix: &str) -> Self {
        let mut reader = Reader::from_reader(source);
        reader.config_mut().expand_empty_elements = false;
        AfdPageStream {
            reader,
            buf: Vec::with_capacity(8 * 1024),
            prefix: title_prefix.to_owned(),
            path: Vec::new(),
            page: None,
            complete_pages: 0,
            finished: false,
        }
    }

    /// Pages fully read so far, whether yielded or filtered out.
    pub fn complete_pages(&self) -> usize {
        self.complete_pages
    }

    fn wants(&self, title: &str) -> bool {
        title.starts_with(&self.prefix)
            && !title[self.prefix.len()..].starts_with("Log/")
            && !title.is_empty()
    }

    fn on_text(&mut self, text: &str) {
        #[derive(Clone, Copy)]
        enum Field {
            Title,
            RevisionId,
            Timestamp,
            Username,
            Text,
        }
        let n = self.path.len();
        if n < 2 {
            return;
        }
        let field = match (self.path[n - 1].as_slice(), self.path[n - 2].as_slice()) {
            (b"title", b"page") => Field::Title,
            (b"id", b"revision") => Field::RevisionId,
            (b"timestamp", b"revision") => Field::Timestamp,
            (b"username", b"contributor") => Field::Username,
            (b"text", b"revision") => Field::Text,
            _ => return,
        };
        let Some(page) = self.page.as_mut() else { return };
        if let Field::Title = field {
            page.title.push_str(text);
            return;
        }
        if page.wanted == Some(false) {
            return;
        }
        let Some(rev) = page.revision.as_mut() else { return };
        match field {
            Field::Title => {}
            Field::RevisionId => rev.id = text.trim().parse().ok(),
            Field::Timestamp => rev.timestamp.get_or_insert_with(String::new).push_str(text),
            Field::Username => rev.username.get_or_insert_with(String::new).push_str(text),
            Field::Text => rev.text.push_str(text),
        }
    }

    fn close_revision(&mut self) -> Result<(), DumpError> {
        let page = self.page.as_mut().expect("revision outside page");
        let Some(draft) = page.revision.take() else { return Ok(()) };
        if page.wanted == Some(false) {
            return Ok(());
        }
        let err = |message: String| DumpError::Page { title: page.title.clone(), message };
        let id = draft.id.ok_or_else(|| err("revision without id".into()))?;
        let raw_ts = draft.timestamp.unwrap_or_default();
        let timestamp = parse_timestamp(&raw_ts)
            .ok_or_else(|| err(format!("revision {id}: bad timestamp {raw_ts:?}")))?;
        if page.revisions.iter().any(|r| r.id == id) {
            return Err(err(format!("duplicate revision id {id}")));
        }
        page.revisions.push(Revision {
            id,
            timestamp,
            author: draft.username.filter(|u| !u.trim().is_empty()),
            text: draft.text,
        });
        Ok(())
    }

    fn read_next(&mut self) -> Result<Option<PageHistory>, DumpError> {
        let mut buf = std::mem::take(&mut self.buf);
        let result = self.read_next_into(&mut buf);
        self.buf = buf;
        result
    }

    fn read_next_into(&mut self, buf: &mut Vec<u8>) -> Result<Option<PageHistory>, DumpError> {
        loop {
            buf.clear();
            let offset = self.reader.buffer_position();
            let event = match self.reader.read_event_into(buf) {
                Ok(ev) => ev,
                Err(e) if is_truncation(&e) => {
                    return Err(DumpError::Truncated { offset, complete_pages: self.complete_pages })
                }
                Err(e) => {
                    return Err(DumpError::Xml {
                        offset: self.reader.buffer_position(),
                        message: e.to_string(),
                    })
                }
            };
            match event {
                Event::Start(start) => {
                    let name = start.name().as_ref().to_vec();
                    match name.as_slice() {
                        b"page" => self.page = Some(PageDraft::default()),
                        b"revision" => {
                            let wanted = self
                                .page
                                .as_ref()
                                .map(|p| p.wanted.unwrap_or_else(|| self.wants(&p.title)));
                            if let (Some(page), Some(wanted)) = (self.page.as_mut(), wanted) {
                                page.wanted = Some(wanted);
                                page.revision = Some(RevisionDraft::default());
                            }
                        }
                        _ => {}
                    }
                    self.path.push(name);
                }
                Event::Empty(_) => {}
                Event::Text(text) => {
                    let text = text.unescape().map_err(|e| DumpError::Xml {
                        offset: self.reader.buffer_position(),
                        message: e.to_string(),
                    })?;
                    self.on_text(&text);
                }
                Event::CData(data) => {
                    let raw = String::from_utf8_lossy(&data).into_owned();
                    self.on_text(&raw);
                }
                Event::End(end) => {
                    let name = end.name().as_ref().to_vec();
                    match self.path.pop() {
                        Some(open) if open == name => {}
                        _ => {
                            return Err(DumpError::Xml {
                                offset: self.reader.buffer_position(),
                                message: format!(
                                    "unexpected closing tag </{}>",
                                    String::from_utf8_lossy(&name)
                                ),
                            })
                        }
                    }
                    match name.as_slice() {
                        b"revision" if self.page.is_some() => self.close_revision()?,
                        b"page" => {
                            let Some(mut page) = self.page.take() else { continue };
                            self.complete_pages += 1;
                            let wanted = page.wanted.unwrap_or_else(|| self.wants(&page.title));
                            if wanted {
                                page.revisions.sort_by(|a, b| {
                                    a.timestamp.cmp(&b.timestamp).then(a.id.cmp(&b.id))
                                });
                                return Ok(Some(PageHistory {
                                    title: page.title,
                                    revisions: page.revisions,
                                }));
                            }
                        }
                        _ => {}
                    }
                }
                Event::Eof => {
                    if !self.path.is_empty() || self.page.is_some() {
                        return Err(DumpError::Truncated {
                            offset: self.reader.buffer_position(),
                            complete_pages: self.complete_pages,
                        });
                    }
                    return Ok(None);
                }
                _ => {}
            }
        }
    }
}

impl<R: BufRead> Iterator for AfdPageStream<R> {
    type Item = Result<PageHistory, DumpError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished {
            return None;
        }
        match self.read_next() {
            Ok(Some(page)) => Some(Ok(page)),
            Ok(None) => {
                self.finished = true;
                None
            }
            Err(e) => {
                self.finished = true;
                Some(Err(e))
            }
        }
    }
}

/// Stream the deletion-discussion pages of `dump` whose title starts with
/// `title_prefix`, skipping daily log pages (`<prefix>Log/...`).
pub fn stream_afd_pages<R: BufRead>(dump: R, title_prefix: &str) -> AfdPageStream<R> {
    AfdPageStream::new(dump, title_prefix)
}

/// Outcome of reading a block log.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BlockLog {
    pub events: Vec<BlockEvent>,
    /// Unblock and reblock entries.
    pub skipped_non_block: usize,
    /// Entries with an action or log type other than block/unblock/reblock.
    pub skipped_unknown: usize,
    /// Entries rejected for missing or unparseable mandatory fields.
    pub rejected: usize,
}

impl BlockLog {
    pub fn records_seen(&self) -> usize {
        self.events.len() + self.skipped_non_block + self.skipped_unknown + self.rejected
    }
}

#[derive(Default)]
struct RawLogRecord {
    timestamp: Option<String>,
    blocked: Option<String>,
    admin: Option<String>,
    admin_id: Option<String>,
    comment: String,
    log_type: Option<String>,
    action: Option<String>,
}

impl BlockLog {
    fn push(&mut self, raw: RawLogRecord) {
        if raw.log_type.as_deref().is_some_and(|t| t.trim() != "block") {
            self.skipped_unknown += 1;
            return;
        }
        match raw.action.as_deref().map(str::trim).unwrap_or("block") {
            "block" => {}
            "unblock" | "reblock" => {
                self.skipped_non_block += 1;
                return;
            }
            _ => {
                self.skipped_unknown += 1;
                return;
            }
        }
        let timestamp = raw.timestamp.as_deref().and_then(parse_timestamp);
        let blocked = raw
            .blocked
            .map(|u| u.trim().to_owned())
            .filter(|u| !u.is_empty());
        let admin_id = match raw.admin_id.as_deref().map(str::trim) {
            None | Some("") => Some(0),
            Some(id) => id.parse().ok(),
        };
        match (timestamp, blocked, admin_id) {
            (Some(timestamp), Some(blocked_user), Some(admin_id)) => self.events.push(BlockEvent {
                timestamp,
                blocked_user,
                admin_user: raw.admin.unwrap_or_default().trim().to_owned(),
                admin_id,
                comment: raw.comment,
            }),
            _ => self.rejected += 1,
        }
    }
}

/// Read a block log in either supported form. The form is sniffed from the
/// first non-blank byte: `<` selects XML, anything else the TSV form.
pub fn parse_block_log<R: BufRead>(mut source: R) -> Result<BlockLog, DumpError> {
    let is_xml = loop {
        let head = source.fill_buf()?;
        if head.is_empty() {
            return Ok(BlockLog::default());
        }
        match head.iter().position(|b| !b.is_ascii_whitespace()) {
            Some(i) => break head[i] == b'<',
            None => {
                let n = head.len();
                source.consume(n);
            }
        }
    };
    if is_xml {
        parse_block_xml(source)
    } else {
        parse_block_tsv(source)
    }
}

fn strip_user_namespace(title: &str) -> String {
    let title = title.trim();
    title
        .strip_prefix("User:")
        .unwrap_or(title)
        .to_owned()
}

fn parse_block_xml<R: BufRead>(source: R) -> Result<BlockLog, DumpError> {
    let mut reader = Reader::from_reader(source);
    let mut buf = Vec::new();
    let mut path: Vec<Vec<u8>> = Vec::new();
    let mut log = BlockLog::default();
    let mut record: Option<RawLogRecord> = None;
    loop {
        buf.clear();
        let offset = reader.buffer_position();
        let event = match reader.read_event_into(&mut buf) {
            Ok(ev) => ev.into_owned(),
            Err(e) if is_truncation(&e) => {
                return Err(DumpError::Truncated { offset, complete_pages: 0 })
            }
            Err(e) => {
                return Err(DumpError::Xml {
                    offset: reader.buffer_position(),
                    message: e.to_string(),
                })
            }
        };
        match event {
            Event::Start(start) => {
                let name = start.name().as_ref().to_vec();
                if name == b"logitem" {
                    record = Some(RawLogRecord::default());
                }
                path.push(name);
            }
            Event::Text(text) => {
                let text = text.unescape().map_err(|e| DumpError::Xml {
                    offset: reader.buffer_position(),
                    message: e.to_string(),
                })?;
                let (Some(rec), Some(current)) = (record.as_mut(), path.last()) else {
                    continue;
                };
                let parent = path.len().checked_sub(2).map(|i| path[i].as_slice());
                let slot = match (current.as_slice(), parent) {
                    (b"timestamp", Some(b"logitem")) => rec.timestamp.get_or_insert_with(String::new),
                    (b"username", Some(b"contributor")) => rec.admin.get_or_insert_with(String::new),
                    (b"id", Some(b"contributor")) => rec.admin_id.get_or_insert_with(String::new),
                    (b"comment", Some(b"logitem")) => &mut rec.comment,
                    (b"type", Some(b"logitem")) => rec.log_type.get_or_insert_with(String::new),
                    (b"action", Some(b"logitem")) => rec.action.get_or_insert_with(String::new),
                    (b"logtitle", Some(b"logitem")) => rec.blocked.get_or_insert_with(String::new),
                    _ => continue,
                };
                slot.push_str(&text);
            }
            Event::End(end) => {
                let name = end.name().as_ref().to_vec();
                if path.pop().as_deref() != Some(name.as_slice()) {
                    return Err(DumpError::Xml {
                        offset: reader.buffer_position(),
                        message: format!("unexpected closing tag </{}>", String::from_utf8_lossy(&name)),
                    });
                }
                if name == b"logitem" {
                    if let Some(mut rec) = record.take() {
                        rec.blocked = rec.blocked.map(|t| strip_user_namespace(&t));
                        log.push(rec);
                    }
                }
            }
            Event::Eof => {
                if !path.is_empty() {
                    return Err(DumpError::Truncated {
                        offset: reader.buffer_position(),
                        complete_pages: 0,
                    });
                }
                return Ok(log);
            }
            _ => {}
        }
    }
}

fn unescape_field(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut chars = raw.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

fn escape_field(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for c in raw.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

/// TSV form: `timestamp \t blocked_user \t admin_user \t admin_id \t comment`,
/// optionally followed by a sixth `action` column (default `block`).
fn parse_block_tsv<R: BufRead>(source: R) -> Result<BlockLog, DumpError> {
    let mut log = BlockLog::default();
    for line in source.lines() {
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if !(5..=6).contains(&fields.len()) {
            log.rejected += 1;
            continue;
        }
        log.push(RawLogRecord {
            timestamp: Some(fields[0].to_owned()).filter(|t| !t.trim().is_empty()),
            blocked: Some(unescape_field(fields[1])),
            admin: Some(unescape_field(fields[2])),
            admin_id: Some(fields[3].to_owned()),
            comment: unescape_field(fields[4]),
            log_type: None,
            action: fields.get(5).map(|a| a.to_string()),
        });
    }
    Ok(log)
}

/// Write events in the five-column TSV form.
pub fn write_block_tsv<W: Write>(mut out: W, events: &[BlockEvent]) -> std::io::Result<()> {
    for ev in events {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            format_timestamp(&ev.timestamp),
            escape_field(&ev.blocked_user),
            escape_field(&ev.admin_user),
            ev.admin_id,
            escape_field(&ev.comment)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn page(title: &str, revs: &[(u64, &str, Option<&str>, &str)]) -> String {
        let mut s = format!("<page><title>{title}</title><ns>4</ns><id>1</id>");
        for (id, ts, user, text) in revs {
            s.push_str(&format!("<revision><id>{id}</id><timestamp>{ts}</timestamp><contributor>"));
            match user {
                Some(u) => s.push_str(&format!("<username>{u}</username><id>9</id>")),
                None => s.push_str("<ip>10.0.0.1</ip>"),
            }
            s.push_str(&format!("</contributor><text bytes=\"1\">{text}</text></revision>"));
        }
        s.push_str("</page>");
        s
    }

    fn dump(pages: &[String]) -> String {
        format!("<mediawiki xml:lang=\"en\"><siteinfo><sitename>W</sitename></siteinfo>{}</mediawiki>", pages.concat())
    }

    fn titles(xml: &str) -> Vec<String> {
        stream_afd_pages(xml.as_bytes(), AFD_PREFIX)
            .map(|p| p.unwrap().title)
            .collect()
    }

    #[test]
    fn keeps_discussions_and_skips_log_pages() {
        let xml = dump(&[
            page("Wikipedia:Articles for deletion/Foo", &[(1, "2007-05-01T10:00:00Z", Some("A"), "x")]),
            page("Wikipedia:Articles for deletion/Log/2005 May 1", &[(2, "2007-05-01T10:00:00Z", Some("A"), "x")]),
            page("Talk:Foo", &[(3, "2007-05-01T10:00:00Z", Some("A"), "x")]),
        ]);
        assert_eq!(titles(&xml), vec!["Wikipedia:Articles for deletion/Foo"]);
    }

    #[test]
    fn empty_dump_yields_nothing() {
        assert!(titles("<mediawiki></mediawiki>").is_empty());
    }

    #[test]
    fn revisions_sorted_and_fields_copied() {
        let xml = dump(&[page(
            "Wikipedia:Articles for deletion/Bar",
            &[
                (7, "2007-05-02T10:00:00Z", None, "later"),
                (5, "2007-05-01T10:00:00Z", Some("Alice"), "first &amp; foremost"),
            ],
        )]);
        let pages: Vec<_> = stream_afd_pages(xml.as_bytes(), AFD_PREFIX).collect::<Result<_, _>>().unwrap();
        let revs = &pages[0].revisions;
        assert_eq!(revs[0].id, 5);
        assert_eq!(revs[0].author.as_deref(), Some("Alice"));
        assert_eq!(revs[0].text, "first & foremost");
        assert_eq!(revs[1].author, None);
    }

    #[test]
    fn truncated_stream_reports_after_complete_pages() {
        let full = dump(&[
            page("Wikipedia:Articles for deletion/A", &[(1, "2007-05-01T10:00:00Z", Some("A"), "x")]),
            page("Wikipedia:Articles for deletion/B", &[(2, "2007-05-01T10:00:00Z", Some("A"), "yyyy")]),
        ]);
        let cut = &full[..full.find("yyyy").unwrap()];
        let items: Vec<_> = stream_afd_pages(cut.as_bytes(), AFD_PREFIX).collect();
        assert_eq!(items.len(), 2);
        assert_eq!(items[0].as_ref().unwrap().title, "Wikipedia:Articles for deletion/A");
        assert!(matches!(items[1], Err(DumpError::Truncated { complete_pages: 1, .. })));
    }

    #[test]
    fn mismatched_tags_are_a_parse_error_with_offset() {
        let xml = "<mediawiki><page><title>Wikipedia:Articles for deletion/A</title></revision></page></mediawiki>";
        let items: Vec<_> = stream_afd_pages(xml.as_bytes(), AFD_PREFIX).collect();
        match &items[0] {
            Err(DumpError::Xml { offset, .. }) => assert!(*offset > 0),
            other => panic!("expected xml error, got {other:?}"),
        }
    }

    #[test]
    fn block_xml_keeps_only_block_actions() {
        let xml = r#"<mediawiki>
<logitem><id>1</id><timestamp>2007-05-03T12:00:00Z</timestamp><contributor><username>Bob</username><id>42</id></contributor><comment>personal attacks</comment><type>block</type><action>block</action><logtitle>User:Alice</logtitle></logitem>
<logitem><id>2</id><timestamp>2007-05-04T12:00:00Z</timestamp><contributor><username>Bob</username><id>42</id></contributor><comment>appeal accepted</comment><type>block</type><action>unblock</action><logtitle>User:Alice</logtitle></logitem>
<logitem><id>3</id><timestamp>2007-05-05T12:00:00Z</timestamp><contributor><username>Eve</username><id>7</id></contributor><type>block</type><action>block</action><logtitle>User:Carol</logtitle></logitem>
</mediawiki>"#;
        let log = parse_block_log(xml.as_bytes()).unwrap();
        assert_eq!(log.events.len(), 2);
        assert_eq!(log.skipped_non_block, 1);
        let first = &log.events[0];
        assert_eq!((first.blocked_user.as_str(), first.admin_user.as_str(), first.admin_id), ("Alice", "Bob", 42));
        assert_eq!(first.comment, "personal attacks");
        assert_eq!(log.events[1].comment, "");
        assert_eq!(log.records_seen(), 3);
    }

    #[test]
    fn tsv_round_trip_with_escapes_and_rejections() {
        let events = vec![BlockEvent {
            timestamp: parse_timestamp("2010-01-01T00:00:00Z").unwrap(),
            blocked_user: "Alice".into(),
            admin_user: "Bob".into(),
            admin_id: 3,
            comment: "line one\nline\ttwo \\ end".into(),
        }];
        let mut out = Vec::new();
        write_block_tsv(&mut out, &events).unwrap();
        let mut text = String::from_utf8(out).unwrap();
        text.push_str("\tNoTime\tBob\t3\tmissing timestamp\n");
        text.push_str("2010-01-02T00:00:00Z\tAlice\tBob\t3\tlifted\tunblock\n");
        text.push_str("2010-01-02T00:00:00Z\tAlice\tBob\t3\thuh\tsuppress\n");
        let log = parse_block_log(text.as_bytes()).unwrap();
        assert_eq!(log.events, events);
        assert_eq!((log.rejected, log.skipped_non_block, log.skipped_unknown), (1, 1, 1));
        assert_eq!(log.records_seen(), 4);
    }
}

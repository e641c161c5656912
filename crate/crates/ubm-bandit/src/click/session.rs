//! Session records, the canonical TSV log format, and log adapters.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::model::{ArmId, Context};

/// One displayed list and its click outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    user: String,
    displayed: Vec<ArmId>,
    clicks: Vec<bool>,
    /// Per-item contexts, when the log carries features.
    contexts: Option<Vec<Context>>,
}

impl SessionRecord {
    /// Builds a record, enforcing distinct displayed arms and aligned clicks.
    pub fn new(user: impl Into<String>, displayed: Vec<ArmId>, clicks: Vec<bool>) -> Result<Self> {
        if displayed.is_empty() {
            return Err(Error::invalid("session must display at least one item"));
        }
        if clicks.len() != displayed.len() {
            return Err(Error::DimensionMismatch {
                expected: displayed.len(),
                got: clicks.len(),
            });
        }
        let mut seen = HashSet::new();
        for id in &displayed {
            if !seen.insert(*id) {
                return Err(Error::invalid(format!("duplicate displayed arm {id}")));
            }
        }
        Ok(SessionRecord { user: user.into(), displayed, clicks, contexts: None })
    }

    /// Attaches per-item contexts (one per displayed position, equal dims).
    pub fn with_contexts(mut self, contexts: Vec<Context>) -> Result<Self> {
        if contexts.len() != self.displayed.len() {
            return Err(Error::DimensionMismatch {
                expected: self.displayed.len(),
                got: contexts.len(),
            });
        }
        if let Some(first) = contexts.first() {
            let d = first.dim();
            if contexts.iter().any(|c| c.dim() != d) {
                return Err(Error::invalid("session contexts must share one dimension"));
            }
        }
        self.contexts = Some(contexts);
        Ok(self)
    }

    pub fn user(&self) -> &str {
        &self.user
    }

    /// Displayed arms, top position first.
    pub fn displayed(&self) -> &[ArmId] {
        &self.displayed
    }

    /// Click indicator per position.
    pub fn clicks(&self) -> &[bool] {
        &self.clicks
    }

    pub fn contexts(&self) -> Option<&[Context]> {
        self.contexts.as_deref()
    }

    /// Number of positions in this session.
    pub fn len(&self) -> usize {
        self.displayed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.displayed.is_empty()
    }
}

/// Map from arm to attractiveness `γ ∈ [0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttractivenessTable {
    values: BTreeMap<ArmId, f64>,
}

impl AttractivenessTable {
    /// Builds a table, validating every value lies in `[0, 1]`.
    pub fn new(values: BTreeMap<ArmId, f64>) -> Result<Self> {
        for (arm, &v) in &values {
            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                return Err(Error::invalid(format!(
                    "attractiveness {v} for arm {arm} is outside [0, 1]"
                )));
            }
        }
        Ok(AttractivenessTable { values })
    }

    pub fn get(&self, arm: ArmId) -> Option<f64> {
        self.values.get(&arm).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Arms and values in ascending arm order.
    pub fn iter(&self) -> impl Iterator<Item = (ArmId, f64)> + '_ {
        self.values.iter().map(|(a, v)| (*a, *v))
    }
}

/// Writes sessions in the canonical TSV format:
/// `user_id <TAB> item_1,…,item_K <TAB> c_1,…,c_K` with clicks in `{0,1}`.
pub fn write_sessions_tsv<W: Write>(mut w: W, sessions: &[SessionRecord]) -> Result<()> {
    for s in sessions {
        let items: Vec<String> = s.displayed.iter().map(|a| a.to_string()).collect();
        let clicks: Vec<&str> = s.clicks.iter().map(|&c| if c { "1" } else { "0" }).collect();
        writeln!(w, "{}\t{}\t{}", s.user, items.join(","), clicks.join(","))?;
    }
    Ok(())
}

/// Reads sessions from the canonical TSV format, reporting the first
/// offending line on malformed input. Blank lines are ignored.
pub fn read_sessions_tsv<R: BufRead>(r: R) -> Result<Vec<SessionRecord>> {
    let mut out = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let mut fields = line.split('\t');
        let (user, items, clicks) = match (fields.next(), fields.next(), fields.next()) {
            (Some(u), Some(i), Some(c)) if fields.next().is_none() => (u, i, c),
            _ => {
                return Err(Error::Parse(format!(
                    "line {lineno}: expected 3 tab-separated fields"
                )))
            }
        };
        let displayed: Vec<ArmId> = items
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<u64>()
                    .map(ArmId)
                    .map_err(|_| Error::Parse(format!("line {lineno}: bad item id {t:?}")))
            })
            .collect::<Result<_>>()?;
        let clicks: Vec<bool> = clicks
            .split(',')
            .map(|t| match t.trim() {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(Error::Parse(format!(
                    "line {lineno}: click must be 0 or 1, got {other:?}"
                ))),
            })
            .collect::<Result<_>>()?;
        out.push(
            SessionRecord::new(user, displayed, clicks)
                .map_err(|e| Error::Parse(format!("line {lineno}: {e}")))?,
        );
    }
    Ok(out)
}

/// Result of converting a web-search challenge log.
#[derive(Debug, Clone, PartialEq)]
pub struct YandexImport {
    pub records: Vec<SessionRecord>,
    /// Result pages dropped because they were empty or repeated a document.
    pub skipped_serps: usize,
}

/// Converts a Yandex personalized-web-search challenge log into canonical
/// session records.
///
/// The source format is line-oriented TSV with three record kinds:
///
/// ```text
/// SessionID  M  Day  UserID                          (session metadata)
/// SessionID  Time  Q  SERPID  QueryID  Terms  Url,Domain  …(10 pairs)
/// SessionID  Time  C  SERPID  UrlID                  (click)
/// ```
///
/// Every query record becomes one session record: the user id comes from the
/// session's metadata line (falling back to the session id), the displayed
/// list is the first `k` documents, and clicks are matched by document id
/// within the same result page. Result pages that are empty or repeat a
/// document id are counted in `skipped_serps` and dropped; clicks on
/// positions beyond `k` are ignored with the truncated list.
pub fn yandex_to_sessions<R: BufRead>(r: R, k: usize) -> Result<YandexImport> {
    if k == 0 {
        return Err(Error::invalid("list length must be at least 1"));
    }
    struct Serp {
        user: Option<String>,
        session: String,
        urls: Vec<u64>,
        clicks: Vec<bool>,
    }
    let mut users: HashMap<String, String> = HashMap::new();
    let mut serps: Vec<Serp> = Vec::new();
    let mut index: HashMap<(String, String), usize> = HashMap::new();
    let mut skipped = 0usize;

    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let f: Vec<&str> = line.split('\t').collect();
        match (f.get(1).copied(), f.get(2).copied()) {
            (Some("M"), _) => {
                if f.len() < 4 {
                    return Err(Error::Parse(format!(
                        "line {lineno}: metadata record needs 4 fields"
                    )));
                }
                users.insert(f[0].to_string(), f[3].to_string());
            }
            (_, Some("Q")) => {
                if f.len() < 7 {
                    skipped += 1;
                    continue;
                }
                let mut urls = Vec::new();
                let mut distinct = HashSet::new();
                let mut ok = true;
                for pair in &f[6..] {
                    let url = pair.split(',').next().unwrap_or("");
                    match url.trim().parse::<u64>() {
                        Ok(u) if distinct.insert(u) => urls.push(u),
                        _ => {
                            ok = false;
                            break;
                        }
                    }
                }
                if !ok || urls.is_empty() {
                    skipped += 1;
                    continue;
                }
                urls.truncate(k);
                let key = (f[0].to_string(), f[3].to_string());
                let clicks = vec![false; urls.len()];
                index.insert(key, serps.len());
                serps.push(Serp {
                    user: users.get(f[0]).cloned(),
                    session: f[0].to_string(),
                    urls,
                    clicks,
                });
            }
            (_, Some("C")) => {
                if f.len() < 5 {
                    return Err(Error::Parse(format!(
                        "line {lineno}: click record needs 5 fields"
                    )));
                }
                let url: u64 = f[4].trim().parse().map_err(|_| {
                    Error::Parse(format!("line {lineno}: bad document id {:?}", f[4]))
                })?;
                let key = (f[0].to_string(), f[3].to_string());
                if let Some(&i) = index.get(&key) {
                    if let Some(pos) = serps[i].urls.iter().position(|&u| u == url) {
                        serps[i].clicks[pos] = true;
                    }
                }
            }
            _ => {
                return Err(Error::Parse(format!(
                    "line {lineno}: unrecognized record type"
                )));
            }
        }
    }

    let mut records = Vec::with_capacity(serps.len());
    for serp in serps {
        let user = serp.user.unwrap_or_else(|| serp.session.clone());
        let displayed = serp.urls.into_iter().map(ArmId).collect();
        records.push(SessionRecord::new(user, displayed, serp.clicks)?);
    }
    Ok(YandexImport { records, skipped_serps: skipped })
}

//! Forgetful search: rank lexically first, then hide matches whose MB is
//! below a threshold while remembering their original rank.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::buoyancy::{global_mb, local_mb, BuoyancyParams, MbStore};
use crate::error::{Error, Result};
use crate::graph::{AttrValue, Direction, Graph, PredicateKind, ThingId, UserId};
use crate::time::Timestamp;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnippetScope {
    #[default]
    Global,
    /// Local MB of the viewing context, when one is given.
    Local,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchParams {
    pub threshold: f64,
    pub snippet_k: usize,
    pub snippet_scope: SnippetScope,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            threshold: 0.1,
            snippet_k: 3,
            snippet_scope: SnippetScope::Global,
        }
    }
}

impl SearchParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::InvalidConfig(format!(
                "search.threshold must be in [0, 1], got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShownResult {
    pub id: ThingId,
    pub score: f64,
    /// 1-based position in the unfiltered ranking.
    pub rank: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HiddenResult {
    pub id: ThingId,
    pub score: f64,
    pub original_rank: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SearchResult {
    pub shown: Vec<ShownResult>,
    pub hidden_count: usize,
    pub hidden_available: Vec<HiddenResult>,
    #[serde(rename = "threshold")]
    pub threshold_used: f64,
}

impl SearchResult {
    pub fn total(&self) -> usize {
        self.shown.len() + self.hidden_count
    }

    /// Plain-text table for terminals.
    pub fn render_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:>5}  {:>6}  id", "rank", "score");
        for r in &self.shown {
            let _ = writeln!(s, "{:>5}  {:>6.3}  {}", r.rank, r.score, r.id);
        }
        let _ = writeln!(
            s,
            "{} shown, {} hidden below MB {}",
            self.shown.len(),
            self.hidden_count,
            self.threshold_used
        );
        s
    }
}

/// Lowercase alphanumeric tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Token overlap: 1 per query token found exactly, 0.5 per query token that
/// only prefixes a document token; divided by the number of query tokens.
pub fn lexical_score(query_tokens: &[String], doc_tokens: &BTreeSet<String>) -> f64 {
    if query_tokens.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for q in query_tokens {
        if doc_tokens.contains(q) {
            total += 1.0;
        } else if doc_tokens.range(q.clone()..).next().is_some_and(|d| d.starts_with(q.as_str())) {
            total += 0.5;
        }
    }
    total / query_tokens.len() as f64
}

struct Entry {
    id: ThingId,
    tokens: BTreeSet<String>,
    label: String,
}

/// Tokenized labels and text attributes of every thing, rebuilt when the
/// graph version changes.
pub struct SearchIndex {
    entries: Vec<Entry>,
    version: u64,
}

impl SearchIndex {
    pub fn build(graph: &Graph) -> Self {
        let entries = graph
            .things()
            .map(|t| {
                let mut tokens: BTreeSet<String> = tokenize(&t.label).into_iter().collect();
                for v in t.attributes.values() {
                    if let AttrValue::Text(s) = v {
                        tokens.extend(tokenize(s));
                    }
                }
                Entry {
                    id: t.id.clone(),
                    tokens,
                    label: t.label.to_lowercase(),
                }
            })
            .collect();
        SearchIndex {
            entries,
            version: graph.version(),
        }
    }

    pub fn is_current(&self, graph: &Graph) -> bool {
        self.version == graph.version()
    }

    /// Unfiltered ranking of things accessible to `user`: score descending,
    /// then id. Also reports whether each match's label equals the query.
    fn rank(&self, graph: &Graph, user: &UserId, query: &str) -> Result<Vec<(ThingId, f64, bool)>> {
        let q = tokenize(query);
        if q.is_empty() {
            return Err(Error::EmptyQuery);
        }
        let exact = query.trim().to_lowercase();
        let mut hits: Vec<(ThingId, f64, bool)> = self
            .entries
            .iter()
            .filter_map(|e| {
                let score = lexical_score(&q, &e.tokens);
                (score > 0.0).then_some((e, score))
            })
            .filter(|(e, _)| graph.thing(&e.id).is_some_and(|t| t.accessible_to(user)))
            .map(|(e, score)| (e.id.clone(), score, e.label == exact))
            .collect();
        hits.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(hits)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn query(
        &self,
        graph: &Graph,
        store: &MbStore,
        params: BuoyancyParams<'_>,
        user: &UserId,
        keywords: &str,
        threshold: f64,
        context: Option<&ThingId>,
        now: Timestamp,
    ) -> Result<SearchResult> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::InvalidArgument(format!("threshold must be in [0, 1], got {threshold}")));
        }
        let ranking = self.rank(graph, user, keywords)?;
        let ctx_key = context.cloned();
        let mut result = SearchResult {
            shown: Vec::new(),
            hidden_count: 0,
            hidden_available: Vec::new(),
            threshold_used: threshold,
        };
        for (i, (id, score, exact_label)) in ranking.into_iter().enumerate() {
            let rank = i + 1;
            let mb = match &ctx_key {
                Some(_) => local_mb(store, graph, params, user, &id, &ctx_key, now),
                None => global_mb(store, graph, params, user, &id, now),
            };
            if exact_label || mb >= threshold {
                result.shown.push(ShownResult { id, score, rank });
            } else {
                result.hidden_count += 1;
                result.hidden_available.push(HiddenResult {
                    id,
                    score,
                    original_rank: rank,
                });
            }
        }
        Ok(result)
    }
}

/// One-shot query that builds a fresh index.
#[allow(clippy::too_many_arguments)]
pub fn query(
    graph: &Graph,
    store: &MbStore,
    params: BuoyancyParams<'_>,
    user: &UserId,
    keywords: &str,
    threshold: f64,
    context: Option<&ThingId>,
    now: Timestamp,
) -> Result<SearchResult> {
    SearchIndex::build(graph).query(graph, store, params, user, keywords, threshold, context, now)
}

/// The `k` outgoing `annotated_with` / `has_topic` neighbours with the
/// highest MB (global, or local to `context` when given), ties by id.
/// Inaccessible neighbours are skipped.
#[allow(clippy::too_many_arguments)]
pub fn snippet_for(
    graph: &Graph,
    store: &MbStore,
    params: BuoyancyParams<'_>,
    user: &UserId,
    thing: &ThingId,
    k: usize,
    context: Option<&ThingId>,
    now: Timestamp,
) -> Result<Vec<ThingId>> {
    let ctx_key = context.cloned();
    let mut annotations: Vec<(f64, ThingId)> = graph
        .neighbors(thing, Direction::Outgoing, None)?
        .into_iter()
        .filter(|(p, _)| matches!(p, PredicateKind::AnnotatedWith | PredicateKind::HasTopic))
        .map(|(_, id)| id)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .filter(|id| graph.thing(id).is_some_and(|t| t.accessible_to(user)))
        .map(|id| {
            let mb = match &ctx_key {
                Some(_) => local_mb(store, graph, params, user, &id, &ctx_key, now),
                None => global_mb(store, graph, params, user, &id, now),
            };
            (mb, id)
        })
        .collect();
    annotations.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    Ok(annotations.into_iter().take(k).map(|(_, id)| id).collect())
}

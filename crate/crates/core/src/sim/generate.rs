//! Synthetic personal graphs at desk scale.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AttrValue, Graph, PredicateKind, Thing, ThingId, ThingKind, UserId, ATTR_BYTE_SIZE, ATTR_EVENT_DATE, ATTR_TASK_STATUS};
use crate::time::{Timestamp, DAY_MS};

/// 2011-07-01T00:00:00Z
pub const DEFAULT_START_TS: Timestamp = 1_309_478_400_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorSpec {
    pub seed: u64,
    pub n_things: usize,
    /// Things visible to their owner only.
    pub n_private: usize,
    pub n_tasks: usize,
    pub years: u32,
    pub n_users: usize,
    pub n_contexts: usize,
    pub start_ts: Timestamp,
    /// Relative weights of the kinds filling the remaining things.
    pub kind_mix: Vec<(ThingKind, f64)>,
    /// Probability that a thing belongs to a context.
    pub p_in_context: f64,
    pub p_has_topic: f64,
    pub p_annotated_person: f64,
    pub p_attachment: f64,
    pub p_subcontext: f64,
    /// Extra `relates_to` edges per thing.
    pub relates_per_thing: f64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            seed: 42,
            n_things: 18_000,
            n_private: 2_000,
            n_tasks: 1_000,
            years: 7,
            n_users: 4,
            n_contexts: 40,
            start_ts: DEFAULT_START_TS,
            kind_mix: vec![
                (ThingKind::Email, 0.25),
                (ThingKind::Document, 0.22),
                (ThingKind::Note, 0.10),
                (ThingKind::Webpage, 0.10),
                (ThingKind::Person, 0.08),
                (ThingKind::Event, 0.08),
                (ThingKind::Topic, 0.05),
                (ThingKind::Presentation, 0.04),
                (ThingKind::File, 0.04),
                (ThingKind::Image, 0.03),
                (ThingKind::Organization, 0.01),
            ],
            p_in_context: 0.6,
            p_has_topic: 0.7,
            p_annotated_person: 0.4,
            p_attachment: 0.15,
            p_subcontext: 0.3,
            relates_per_thing: 0.5,
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.n_private > self.n_things {
            return bad(format!("n_private {} exceeds n_things {}", self.n_private, self.n_things));
        }
        if self.n_tasks + self.n_contexts > self.n_things {
            return bad(format!(
                "n_tasks + n_contexts = {} exceeds n_things {}",
                self.n_tasks + self.n_contexts,
                self.n_things
            ));
        }
        if self.n_users == 0 {
            return bad("n_users must be at least 1".into());
        }
        if self.start_ts < 0 {
            return bad("start_ts must be non-negative".into());
        }
        let probs = [
            self.p_in_context,
            self.p_has_topic,
            self.p_annotated_person,
            self.p_attachment,
            self.p_subcontext,
        ];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || !(self.relates_per_thing >= 0.0) {
            return bad("probabilities must be in [0, 1]".into());
        }
        let fill = self.n_things - self.n_tasks - self.n_contexts;
        let usable = self
            .kind_mix
            .iter()
            .any(|(k, w)| *w > 0.0 && !matches!(k, ThingKind::Task | ThingKind::Context));
        if fill > 0 && !usable {
            return bad("kind_mix needs a positive weight for a kind other than task or context".into());
        }
        if self.kind_mix.iter().any(|(_, w)| !(*w >= 0.0)) {
            return bad("kind_mix weights must be non-negative".into());
        }
        Ok(())
    }

    pub fn span_ms(&self) -> i64 {
        (i64::from(self.years) * 365 * DAY_MS).max(DAY_MS)
    }

    pub fn users(&self) -> Vec<UserId> {
        (1..=self.n_users).map(|i| UserId::new(format!("u{i}"))).collect()
    }
}

const FIRST: &[&str] = &[
    "Anna", "Ben", "Clara", "David", "Eva", "Felix", "Greta", "Hannah", "Ivan", "Julia", "Karl", "Lena", "Max",
    "Nora", "Oskar", "Paula", "Quentin", "Rosa", "Stefan", "Tara", "Uwe", "Vera", "Wim", "Xenia", "Yusuf", "Zoe",
];
const LAST: &[&str] = &[
    "Schneider", "Fischer", "Weber", "Meyer", "Wagner", "Becker", "Schulz", "Hoffmann", "Koch", "Richter", "Klein",
    "Wolf", "Neumann", "Braun", "Zimmermann", "Hartmann", "Lange", "Krause", "Werner", "Lehmann",
];
const ADJ: &[&str] = &[
    "annual", "draft", "final", "internal", "quarterly", "revised", "shared", "weekly", "urgent", "legacy",
    "open", "new", "strategic", "technical", "joint", "regional",
];
const NOUN: &[&str] = &[
    "budget", "report", "proposal", "review", "meeting", "workshop", "contract", "roadmap", "survey", "invoice",
    "schedule", "prototype", "evaluation", "deliverable", "summary", "plan", "agenda", "minutes", "release",
    "analysis",
];
const TOPIC: &[&str] = &[
    "semantics", "archiving", "forgetting", "memory", "retrieval", "privacy", "ontology", "workflow", "preservation",
    "search", "visualization", "desktop", "cloud", "photos", "metadata", "learning", "reasoning", "annotation",
];
const ORG: &[&str] = &["Institute", "University", "Consortium", "Agency", "Lab", "Foundation", "GmbH", "Council"];

fn label_for(kind: ThingKind, i: usize, rng: &mut ChaCha8Rng) -> String {
    let pick = |rng: &mut ChaCha8Rng, words: &[&str]| words[rng.gen_range(0..words.len())].to_string();
    match kind {
        ThingKind::Person => format!("{} {}", pick(rng, FIRST), pick(rng, LAST)),
        ThingKind::Topic => format!("{} {}", capitalize(&pick(rng, TOPIC)), i),
        ThingKind::Organization => format!("{} {} {}", capitalize(&pick(rng, TOPIC)), pick(rng, ORG), i),
        ThingKind::Context => format!("Project {} {}", capitalize(&pick(rng, TOPIC)), i),
        ThingKind::Task => format!("Prepare {} {} {}", pick(rng, ADJ), pick(rng, NOUN), i),
        ThingKind::Event => format!("{} {} {}", capitalize(&pick(rng, ADJ)), pick(rng, NOUN), i),
        ThingKind::Email => format!("Re: {} {} {}", pick(rng, ADJ), pick(rng, NOUN), i),
        _ => format!("{} {} {}", capitalize(&pick(rng, ADJ)), pick(rng, NOUN), i),
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn weighted_kind(mix: &[(ThingKind, f64)], total: f64, rng: &mut ChaCha8Rng) -> ThingKind {
    let mut x = rng.gen::<f64>() * total;
    for (k, w) in mix {
        if x < *w {
            return *k;
        }
        x -= w;
    }
    mix.last().map(|(k, _)| *k).unwrap_or(ThingKind::Note)
}

/// Builds a graph with exactly the requested counts. Same spec, same graph.
pub fn generate_pimo(spec: &GeneratorSpec) -> Result<Graph> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let users = spec.users();
    let span = spec.span_ms();

    let mix: Vec<(ThingKind, f64)> = spec
        .kind_mix
        .iter()
        .copied()
        .filter(|(k, w)| *w > 0.0 && !matches!(k, ThingKind::Task | ThingKind::Context))
        .collect();
    let total: f64 = mix.iter().map(|(_, w)| w).sum();
    let mut kinds = Vec::with_capacity(spec.n_things);
    kinds.extend(std::iter::repeat_n(ThingKind::Context, spec.n_contexts));
    kinds.extend(std::iter::repeat_n(ThingKind::Task, spec.n_tasks));
    while kinds.len() < spec.n_things {
        kinds.push(weighted_kind(&mix, total, &mut rng));
    }
    kinds.shuffle(&mut rng);

    // private things: non-contexts first, contexts only if unavoidable
    let mut candidates: Vec<usize> = (0..kinds.len()).filter(|&i| kinds[i] != ThingKind::Context).collect();
    candidates.shuffle(&mut rng);
    let mut ctx_idx: Vec<usize> = (0..kinds.len()).filter(|&i| kinds[i] == ThingKind::Context).collect();
    ctx_idx.shuffle(&mut rng);
    candidates.extend(ctx_idx);
    let mut private = vec![false; kinds.len()];
    for &i in candidates.iter().take(spec.n_private) {
        private[i] = true;
    }

    let mut ids = Vec::with_capacity(kinds.len());
    let mut graph = Graph::new();
    for (i, &kind) in kinds.iter().enumerate() {
        let id = ThingId::new(format!("pimo:{kind}/{i:05}"))?;
        let created_at = spec.start_ts + rng.gen_range(0..span);
        let owner = if users.len() == 1 || rng.gen::<f64>() < 0.7 {
            users[0].clone()
        } else {
            users[rng.gen_range(1..users.len())].clone()
        };
        let mut thing = Thing::new(id.clone(), kind, label_for(kind, i, &mut rng), owner.clone()).created_at(created_at);
        if !private[i] {
            thing = thing.shared_with(users.iter().filter(|u| **u != owner).cloned());
        }
        match kind {
            ThingKind::Event => {
                let date = created_at + rng.gen_range(0..=60 * DAY_MS);
                thing = thing.attr(ATTR_EVENT_DATE, AttrValue::Int(date));
            }
            ThingKind::Task => {
                // older tasks are more likely to be finished
                let age = 1.0 - (created_at - spec.start_ts) as f64 / span as f64;
                let status = if rng.gen::<f64>() < 0.1 + 0.85 * age { "finished" } else { "open" };
                thing = thing.attr(ATTR_TASK_STATUS, AttrValue::Text(status.into()));
            }
            _ => {}
        }
        if matches!(
            kind,
            ThingKind::Document | ThingKind::Presentation | ThingKind::File | ThingKind::Image
        ) {
            thing = thing.attr(ATTR_BYTE_SIZE, AttrValue::Int(rng.gen_range(1_000..50_000_000)));
        }
        graph.add_thing(thing)?;
        ids.push(id);
    }

    let pool = |k: ThingKind| -> Vec<usize> { (0..kinds.len()).filter(|&i| kinds[i] == k).collect() };
    let contexts = pool(ThingKind::Context);
    let topics = pool(ThingKind::Topic);
    let persons = pool(ThingKind::Person);
    let tasks = pool(ThingKind::Task);
    let orgs = pool(ThingKind::Organization);
    let pick = |rng: &mut ChaCha8Rng, v: &[usize]| v[rng.gen_range(0..v.len())];
    let link = |g: &mut Graph, s: usize, p: PredicateKind, o: usize| -> Result<()> {
        if s != o {
            g.add_edge(&ids[s], p, &ids[o])?;
        }
        Ok(())
    };

    // sub-contexts point at an earlier context, which keeps parent links a forest
    for (n, &c) in contexts.iter().enumerate().skip(1) {
        if rng.gen::<f64>() < spec.p_subcontext {
            let parent = contexts[rng.gen_range(0..n)];
            link(&mut graph, c, PredicateKind::PartOf, parent)?;
        }
    }
    for (i, &kind) in kinds.iter().enumerate() {
        if kind == ThingKind::Context {
            continue;
        }
        if !contexts.is_empty() && rng.gen::<f64>() < spec.p_in_context {
            link(&mut graph, i, PredicateKind::InContext, pick(&mut rng, &contexts))?;
            if rng.gen::<f64>() < 0.1 {
                link(&mut graph, i, PredicateKind::InContext, pick(&mut rng, &contexts))?;
            }
        }
        let content = matches!(
            kind,
            ThingKind::Document
                | ThingKind::Email
                | ThingKind::Note
                | ThingKind::Webpage
                | ThingKind::Presentation
                | ThingKind::File
                | ThingKind::Image
        );
        if (content || kind == ThingKind::Task || kind == ThingKind::Event)
            && !topics.is_empty() && rng.gen::<f64>() < spec.p_has_topic {
                link(&mut graph, i, PredicateKind::HasTopic, pick(&mut rng, &topics))?;
            }
        if content && !persons.is_empty() && rng.gen::<f64>() < spec.p_annotated_person {
            link(&mut graph, i, PredicateKind::AnnotatedWith, pick(&mut rng, &persons))?;
        }
        if content && kind != ThingKind::Note && !tasks.is_empty() && rng.gen::<f64>() < spec.p_attachment {
            link(&mut graph, i, PredicateKind::AttachmentOf, pick(&mut rng, &tasks))?;
        }
        if kind == ThingKind::Event && !persons.is_empty() {
            for _ in 0..rng.gen_range(1..=3) {
                link(&mut graph, i, PredicateKind::AttendedBy, pick(&mut rng, &persons))?;
            }
        }
        if kind == ThingKind::Person && !orgs.is_empty() && rng.gen::<f64>() < 0.5 {
            link(&mut graph, i, PredicateKind::PartOf, pick(&mut rng, &orgs))?;
        }
    }
    let non_context: Vec<usize> = (0..kinds.len()).filter(|&i| kinds[i] != ThingKind::Context).collect();
    if non_context.len() >= 2 {
        let extra = (spec.n_things as f64 * spec.relates_per_thing).round() as usize;
        for _ in 0..extra {
            let (a, b) = (pick(&mut rng, &non_context), pick(&mut rng, &non_context));
            link(&mut graph, a, PredicateKind::RelatesTo, b)?;
        }
    }
    Ok(graph)
}

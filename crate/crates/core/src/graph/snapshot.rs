//! JSON Lines snapshot format.
//!
//! ```text
//! {"kind":"header","format":"forgetd-snapshot/1","version":12}
//! {"kind":"thing","id":...,"type":...,"label":...,"created_at":...,"owner":...,"shared_with":[...],"attributes":{...}}
//! {"kind":"edge","s":...,"p":...,"o":...}
//! ```
//!
//! Things come before edges; things are sorted by id and edges by
//! `(s, p, o)`, so saving the same graph twice yields identical bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AttrValue, Graph, PredicateKind, Thing, ThingId, ThingKind, UserId};
use crate::error::{Error, Result};

pub const SNAPSHOT_FORMAT: &str = "forgetd-snapshot/1";

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum Line {
    Header {
        format: String,
        version: u64,
    },
    Thing {
        id: ThingId,
        #[serde(rename = "type")]
        kind: ThingKind,
        label: String,
        created_at: i64,
        owner: UserId,
        shared_with: BTreeSet<UserId>,
        attributes: BTreeMap<String, AttrValue>,
    },
    Edge {
        s: ThingId,
        p: PredicateKind,
        o: ThingId,
    },
}

pub fn write_snapshot<W: Write>(graph: &Graph, mut out: W) -> std::io::Result<()> {
    let mut emit = |line: &Line| -> std::io::Result<()> {
        serde_json::to_writer(&mut out, line)?;
        out.write_all(b"\n")
    };
    emit(&Line::Header {
        format: SNAPSHOT_FORMAT.to_owned(),
        version: graph.version(),
    })?;
    for t in graph.things() {
        emit(&Line::Thing {
            id: t.id.clone(),
            kind: t.kind,
            label: t.label.clone(),
            created_at: t.created_at,
            owner: t.owner.clone(),
            shared_with: t.shared_with.clone(),
            attributes: t.attributes.clone(),
        })?;
    }
    for e in graph.edges() {
        emit(&Line::Edge {
            s: e.subject,
            p: e.predicate,
            o: e.object,
        })?;
    }
    Ok(())
}

pub fn save_snapshot(graph: &Graph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_snapshot(graph, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_snapshot<R: Read>(input: R) -> Result<Graph> {
    read_lines(BufReader::new(input), Path::new("<reader>"))
}

pub fn load_snapshot(path: impl AsRef<Path>) -> Result<Graph> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_lines(BufReader::new(file), path)
}

fn read_lines<R: BufRead>(reader: R, path: &Path) -> Result<Graph> {
    let mut graph = Graph::new();
    let mut version = None;
    let mut seen_edge = false;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| Error::MalformedSnapshotLine { line: lineno, reason };
        let parsed: Line = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        match parsed {
            Line::Header { format, version: v } => {
                if version.is_some() || lineno != 1 {
                    return Err(malformed("header must be the first and only header line".into()));
                }
                if format != SNAPSHOT_FORMAT {
                    return Err(malformed(format!("unsupported format `{format}`")));
                }
                version = Some(v);
            }
            _ if version.is_none() => return Err(malformed("missing header line".into())),
            Line::Thing {
                id,
                kind,
                label,
                created_at,
                owner,
                shared_with,
                attributes,
            } => {
                if seen_edge {
                    return Err(malformed("thing line after edge lines".into()));
                }
                if id.as_str().is_empty() {
                    return Err(malformed("empty thing id".into()));
                }
                let thing = Thing {
                    id,
                    kind,
                    label,
                    created_at,
                    owner,
                    shared_with,
                    attributes,
                };
                graph.add_thing(thing).map_err(|e| malformed(e.to_string()))?;
            }
            Line::Edge { s, p, o } => {
                seen_edge = true;
                let added = graph.add_edge(&s, p, &o).map_err(|e| malformed(e.to_string()))?;
                if !added {
                    return Err(malformed(format!("duplicate edge ({s}, {p}, {o})")));
                }
            }
        }
    }
    let version = version.ok_or(Error::MalformedSnapshotLine {
        line: 1,
        reason: "empty snapshot (missing header)".into(),
    })?;
    graph.set_version(version);
    Ok(graph)
}

//! Labels, highlights and summary notes anchored to transcript content.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::crdt::{Anchor, Doc, DocError, Stamp};
use crate::protocol::ErrorCode;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LabelDef {
    pub label_id: String,
    pub name: String,
    pub color: String,
    pub created_by: String,
    pub stamp: Stamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AnnotationKind {
    Label,
    Highlight,
    Note,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AnnotationBody {
    #[serde(rename_all = "camelCase")]
    Label { label_id: String },
    Highlight { category: String },
    #[serde(rename_all = "camelCase")]
    Note { note_text: String },
}

impl AnnotationBody {
    pub fn kind(&self) -> AnnotationKind {
        match self {
            AnnotationBody::Label { .. } => AnnotationKind::Label,
            AnnotationBody::Highlight { .. } => AnnotationKind::Highlight,
            AnnotationBody::Note { .. } => AnnotationKind::Note,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Annotation {
    pub anno_id: String,
    #[serde(flatten)]
    pub body: AnnotationBody,
    pub start: Anchor,
    pub end: Anchor,
    pub author: String,
    pub stamp: Stamp,
}

impl Annotation {
    pub fn kind(&self) -> AnnotationKind {
        self.body.kind()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnnotationError {
    #[error("label name is empty")]
    EmptyName,
    #[error("label {0:?} already exists")]
    DuplicateLabel(String),
    #[error("unknown label {0}")]
    UnknownLabel(String),
    #[error("category {0:?} is not in the palette")]
    UnknownCategory(String),
    #[error("note text is empty")]
    EmptyNote,
    #[error("unknown annotation {0}")]
    UnknownAnnotation(String),
    #[error(transparent)]
    Doc(#[from] DocError),
}

impl AnnotationError {
    pub fn code(&self) -> ErrorCode {
        match self {
            AnnotationError::EmptyName => ErrorCode::EmptyName,
            AnnotationError::DuplicateLabel(_) => ErrorCode::DuplicateLabel,
            AnnotationError::UnknownLabel(_) => ErrorCode::UnknownLabel,
            AnnotationError::UnknownCategory(_) => ErrorCode::UnknownCategory,
            AnnotationError::EmptyNote => ErrorCode::EmptyNote,
            AnnotationError::UnknownAnnotation(_) => ErrorCode::UnknownAnnotation,
            AnnotationError::Doc(e) => e.code(),
        }
    }
}

/// What happened when a label definition reached a replica.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelMerge {
    Inserted,
    AlreadyKnown,
    /// The incoming definition displaced an existing one with the same name.
    Replaced { loser: String },
    /// An existing definition with the same name outranks the incoming one.
    Rejected { winner: String },
}

/// Label definitions of one trial. Names are unique ignoring case; when two
/// definitions race for a name the one with the greater stamp survives and
/// the other's id becomes an alias of it.
#[derive(Debug, Clone, Default)]
pub struct LabelRegistry {
    defs: Vec<LabelDef>,
    aliases: BTreeMap<String, String>,
}

fn name_key(name: &str) -> String {
    name.trim().to_lowercase()
}

impl LabelRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    fn by_name(&self, name: &str) -> Option<usize> {
        let key = name_key(name);
        self.defs.iter().position(|d| name_key(&d.name) == key)
    }

    /// Sequential definition, as performed by the server: first come wins.
    pub fn define(
        &mut self,
        label_id: String,
        name: &str,
        color: &str,
        created_by: &str,
        stamp: Stamp,
    ) -> Result<LabelDef, AnnotationError> {
        let name = name.trim();
        if name.is_empty() {
            return Err(AnnotationError::EmptyName);
        }
        if self.by_name(name).is_some() {
            return Err(AnnotationError::DuplicateLabel(name.to_owned()));
        }
        let def = LabelDef {
            label_id,
            name: name.to_owned(),
            color: color.to_owned(),
            created_by: created_by.to_owned(),
            stamp,
        };
        self.defs.push(def.clone());
        Ok(def)
    }

    /// Merges a definition made elsewhere; commutative over delivery order.
    pub fn merge(&mut self, def: LabelDef) -> LabelMerge {
        if self.resolve_id(&def.label_id).is_some() {
            return LabelMerge::AlreadyKnown;
        }
        match self.by_name(&def.name) {
            None => {
                self.defs.push(def);
                LabelMerge::Inserted
            }
            Some(i) if self.defs[i].stamp > def.stamp => {
                let winner = self.defs[i].label_id.clone();
                self.aliases.insert(def.label_id, winner.clone());
                LabelMerge::Rejected { winner }
            }
            Some(i) => {
                let loser = std::mem::replace(&mut self.defs[i], def);
                let winner = self.defs[i].label_id.clone();
                for target in self.aliases.values_mut() {
                    if *target == loser.label_id {
                        *target = winner.clone();
                    }
                }
                self.aliases.insert(loser.label_id.clone(), winner);
                LabelMerge::Replaced {
                    loser: loser.label_id,
                }
            }
        }
    }

    /// Canonical id for `label_id`, following aliases.
    pub fn resolve_id(&self, label_id: &str) -> Option<&str> {
        let id = self.aliases.get(label_id).map_or(label_id, String::as_str);
        self.defs
            .iter()
            .find(|d| d.label_id == id)
            .map(|d| d.label_id.as_str())
    }

    pub fn get(&self, label_id: &str) -> Option<&LabelDef> {
        let id = self.resolve_id(label_id)?;
        self.defs.iter().find(|d| d.label_id == id)
    }

    pub fn contains(&self, label_id: &str) -> bool {
        self.resolve_id(label_id).is_some()
    }

    pub fn defs(&self) -> &[LabelDef] {
        &self.defs
    }

    /// Definitions in a replica-independent order.
    pub fn sorted(&self) -> Vec<LabelDef> {
        let mut out = self.defs.clone();
        out.sort_by(|a, b| a.stamp.cmp(&b.stamp).then_with(|| a.label_id.cmp(&b.label_id)));
        out
    }

    pub fn len(&self) -> usize {
        self.defs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defs.is_empty()
    }
}

/// Annotation records keyed by id. Deleted ids are remembered so a late
/// duplicate of the add cannot resurrect them.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnnotationStore {
    live: BTreeMap<String, Annotation>,
    deleted: BTreeSet<String>,
}

impl AnnotationStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false when the id is already known (live or deleted).
    pub fn insert(&mut self, annotation: Annotation) -> bool {
        if self.deleted.contains(&annotation.anno_id) || self.live.contains_key(&annotation.anno_id) {
            return false;
        }
        self.live.insert(annotation.anno_id.clone(), annotation);
        true
    }

    pub fn remove(&mut self, anno_id: &str) -> Option<Annotation> {
        self.deleted.insert(anno_id.to_owned());
        self.live.remove(anno_id)
    }

    pub fn get(&self, anno_id: &str) -> Option<&Annotation> {
        self.live.get(anno_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Annotation> {
        self.live.values()
    }

    pub fn deleted(&self) -> impl Iterator<Item = &String> {
        self.deleted.iter()
    }

    pub fn len(&self) -> usize {
        self.live.len()
    }

    pub fn is_empty(&self) -> bool {
        self.live.is_empty()
    }
}

/// Checks an add request against the current document and trial config.
pub fn validate_add(
    doc: &Doc,
    labels: &LabelRegistry,
    palette: &[String],
    body: &AnnotationBody,
    start: Anchor,
    end: Anchor,
) -> Result<(), AnnotationError> {
    match body {
        AnnotationBody::Label { label_id } if !labels.contains(label_id) => {
            return Err(AnnotationError::UnknownLabel(label_id.clone()))
        }
        AnnotationBody::Highlight { category } if !palette.iter().any(|c| c == category) => {
            return Err(AnnotationError::UnknownCategory(category.clone()))
        }
        AnnotationBody::Note { note_text } if note_text.trim().is_empty() => {
            return Err(AnnotationError::EmptyNote)
        }
        _ => {}
    }
    let s = doc.resolve_index(start)?;
    let e = doc.resolve_index(end)?;
    if s > e {
        return Err(DocError::RangeInverted { start: s, end: e }.into());
    }
    Ok(())
}

/// Only notes can be removed once placed.
pub fn validate_delete(store: &AnnotationStore, anno_id: &str) -> Result<(), AnnotationError> {
    match store.get(anno_id) {
        Some(a) if a.kind() == AnnotationKind::Note => Ok(()),
        _ => Err(AnnotationError::UnknownAnnotation(anno_id.to_owned())),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ResolvedAnnotation {
    pub anno_id: String,
    pub kind: AnnotationKind,
    pub start_index: usize,
    pub end_index: usize,
    pub payload: AnnotationBody,
}

/// Projects annotations onto current indices, sorted by (start, id).
/// Annotations whose anchors this doc has not seen yet are left out.
pub fn resolve_annotations<'a>(
    doc: &Doc,
    annotations: impl IntoIterator<Item = &'a Annotation>,
) -> Vec<ResolvedAnnotation> {
    let mut out: Vec<ResolvedAnnotation> = annotations
        .into_iter()
        .filter_map(|a| {
            let start_index = doc.resolve_index(a.start).ok()?;
            let end_index = doc.resolve_index(a.end).ok()?;
            Some(ResolvedAnnotation {
                anno_id: a.anno_id.clone(),
                kind: a.kind(),
                start_index,
                end_index: end_index.max(start_index),
                payload: a.body.clone(),
            })
        })
        .collect();
    out.sort_by(|a, b| (a.start_index, &a.anno_id).cmp(&(b.start_index, &b.anno_id)));
    out
}

/// Notes in side-pane order.
pub fn notes_in_order(doc: &Doc, store: &AnnotationStore) -> Vec<ResolvedAnnotation> {
    resolve_annotations(doc, store.iter())
        .into_iter()
        .filter(|r| r.kind == AnnotationKind::Note)
        .collect()
}

/// Zero-based line on which a label chip for a range starting at
/// `start_index` is drawn: the first line the range touches.
pub fn chip_line(text: &str, start_index: usize) -> usize {
    text.chars().take(start_index).filter(|c| *c == '\n').count()
}

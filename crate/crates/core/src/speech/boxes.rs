use std::collections::BTreeMap;

use super::{BoxKind, OwnerScope, SpeechBox, SpeechError};

/// Speech boxes of one trial, shared by all wizards.
#[derive(Debug, Clone, Default)]
pub struct BoxStore {
    boxes: BTreeMap<String, SpeechBox>,
    next_id: u64,
}

impl BoxStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Creates a box when `box_id` is `None`, otherwise replaces the
    /// existing box's kind and text.
    pub fn upsert(
        &mut self,
        box_id: Option<&str>,
        kind: BoxKind,
        text: &str,
    ) -> Result<SpeechBox, SpeechError> {
        let id = match box_id {
            Some(id) if self.boxes.contains_key(id) => id.to_owned(),
            Some(id) => return Err(SpeechError::UnknownBox(id.to_owned())),
            None => {
                self.next_id += 1;
                format!("B{}", self.next_id)
            }
        };
        let b = SpeechBox {
            box_id: id.clone(),
            kind,
            text: text.to_owned(),
            owner_scope: OwnerScope::Shared,
        };
        self.boxes.insert(id, b.clone());
        Ok(b)
    }

    /// Takes the text to speak. Editable boxes are emptied; the box as it
    /// is after the play is returned alongside the text.
    pub fn play(&mut self, box_id: &str) -> Result<(String, SpeechBox), SpeechError> {
        let b = self
            .boxes
            .get_mut(box_id)
            .ok_or_else(|| SpeechError::UnknownBox(box_id.to_owned()))?;
        if b.text.trim().is_empty() {
            return Err(SpeechError::EmptyBox);
        }
        let text = match b.kind {
            BoxKind::Editable => std::mem::take(&mut b.text),
            BoxKind::Preset => b.text.clone(),
        };
        Ok((text, b.clone()))
    }

    pub fn get(&self, box_id: &str) -> Option<&SpeechBox> {
        self.boxes.get(box_id)
    }

    pub fn all(&self) -> Vec<SpeechBox> {
        self.boxes.values().cloned().collect()
    }
}

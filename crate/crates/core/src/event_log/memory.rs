use std::collections::BTreeMap;

use parking_lot::Mutex;

use super::{Head, LogError, LogEvent, LogStore, NewEvent};

/// In-process store. An optional event budget makes it report
/// `StorageFull`, which is how tests exercise that path.
#[derive(Debug, Default)]
pub struct MemoryLog {
    trials: Mutex<BTreeMap<String, (Head, Vec<LogEvent>)>>,
    budget: Option<usize>,
}

impl MemoryLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_budget(max_events: usize) -> Self {
        Self {
            trials: Mutex::default(),
            budget: Some(max_events),
        }
    }
}

impl LogStore for MemoryLog {
    fn create(&self, trial_id: &str) -> Result<(), LogError> {
        self.trials.lock().entry(trial_id.to_owned()).or_default();
        Ok(())
    }

    fn append(&self, event: NewEvent) -> Result<LogEvent, LogError> {
        let mut trials = self.trials.lock();
        if let Some(budget) = self.budget {
            if trials.values().map(|(_, v)| v.len()).sum::<usize>() >= budget {
                return Err(LogError::StorageFull);
            }
        }
        let (head, events) = trials.entry(event.trial_id.clone()).or_default();
        let e = head.next(event);
        head.advance(&e);
        events.push(e.clone());
        Ok(e)
    }

    fn events(&self, trial_id: &str) -> Result<Vec<LogEvent>, LogError> {
        self.trials
            .lock()
            .get(trial_id)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| LogError::UnknownTrial(trial_id.to_owned()))
    }

    fn trial_ids(&self) -> Result<Vec<String>, LogError> {
        Ok(self.trials.lock().keys().cloned().collect())
    }
}

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use parking_lot::Mutex;

use super::{Head, LogError, LogEvent, LogStore, NewEvent};

const LOG_EXT: &str = "jsonl";
const INDEX_EXT: &str = "idx";

/// One line-delimited JSON file per trial plus an index of byte offsets
/// (little-endian u64 per seq). Every append is fsynced before it returns.
/// On open, a torn final line left by a crash is cut off and the index is
/// rebuilt if it disagrees with the log.
#[derive(Debug)]
pub struct FileLog {
    dir: PathBuf,
    open: Mutex<HashMap<String, TrialFile>>,
}

#[derive(Debug)]
struct TrialFile {
    log: File,
    index: File,
    len: u64,
    head: Head,
}

fn valid_trial_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl FileLog {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, LogError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        // Writability check up front rather than on the first event.
        let probe = dir.join(".probe");
        File::create(&probe)?;
        fs::remove_file(&probe)?;
        Ok(Self {
            dir,
            open: Mutex::new(HashMap::new()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, trial_id: &str, ext: &str) -> PathBuf {
        self.dir.join(format!("{trial_id}.{ext}"))
    }

    fn check_id(trial_id: &str) -> Result<(), LogError> {
        if valid_trial_id(trial_id) {
            Ok(())
        } else {
            Err(LogError::InvalidTrialId(trial_id.to_owned()))
        }
    }

    fn load(&self, trial_id: &str) -> Result<TrialFile, LogError> {
        let log_path = self.path(trial_id, LOG_EXT);
        let mut log = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&log_path)?;
        let mut bytes = Vec::new();
        log.read_to_end(&mut bytes)?;
        let mut offsets = Vec::new();
        let mut head = Head::default();
        let mut good = 0u64;
        let mut pos = 0usize;
        while let Some(nl) = bytes[pos..].iter().position(|b| *b == b'\n') {
            let line = &bytes[pos..pos + nl];
            let e: LogEvent = serde_json::from_slice(line).map_err(|err| LogError::Corrupt {
                trial: trial_id.to_owned(),
                reason: format!("line at byte {pos}: {err}"),
            })?;
            if e.seq != head.seq + 1 {
                return Err(LogError::Corrupt {
                    trial: trial_id.to_owned(),
                    reason: format!("seq {} follows {}", e.seq, head.seq),
                });
            }
            offsets.push(pos as u64);
            head.advance(&e);
            pos += nl + 1;
            good = pos as u64;
        }
        if good != bytes.len() as u64 {
            log::warn!(
                "trial {trial_id}: dropping {} bytes of torn log tail",
                bytes.len() as u64 - good
            );
            log.set_len(good)?;
            log.sync_all()?;
        }
        let index_path = self.path(trial_id, INDEX_EXT);
        let expected: Vec<u8> = offsets.iter().flat_map(|o| o.to_le_bytes()).collect();
        let current = fs::read(&index_path).unwrap_or_default();
        if current != expected {
            fs::write(&index_path, &expected)?;
        }
        let index = OpenOptions::new()
            .append(true)
            .create(true)
            .open(&index_path)?;
        Ok(TrialFile {
            log,
            index,
            len: good,
            head,
        })
    }

    fn with_trial<T>(
        &self,
        trial_id: &str,
        f: impl FnOnce(&mut TrialFile) -> Result<T, LogError>,
    ) -> Result<T, LogError> {
        Self::check_id(trial_id)?;
        let mut open = self.open.lock();
        if !open.contains_key(trial_id) {
            let tf = self.load(trial_id)?;
            open.insert(trial_id.to_owned(), tf);
        }
        f(open.get_mut(trial_id).expect("inserted above"))
    }

    /// Events with `seq > after`, located through the index.
    pub fn events_after(&self, trial_id: &str, after: u64) -> Result<Vec<LogEvent>, LogError> {
        Self::check_id(trial_id)?;
        let log_path = self.path(trial_id, LOG_EXT);
        if !log_path.exists() {
            return Err(LogError::UnknownTrial(trial_id.to_owned()));
        }
        // Loading repairs a torn tail or stale index before we trust them.
        self.with_trial(trial_id, |_| Ok(()))?;
        let start = if after == 0 {
            0
        } else {
            let mut idx = File::open(self.path(trial_id, INDEX_EXT))?;
            let mut buf = [0u8; 8];
            idx.seek(SeekFrom::Start(after * 8))
                .and_then(|_| idx.read_exact(&mut buf))
                .map(|_| u64::from_le_bytes(buf))
                .unwrap_or(u64::MAX)
        };
        let mut file = File::open(&log_path)?;
        let size = file.metadata()?.len();
        if start >= size {
            return Ok(Vec::new());
        }
        file.seek(SeekFrom::Start(start))?;
        let mut out = Vec::new();
        for line in BufReader::new(file).split(b'\n') {
            let line = line?;
            // A line still being written has no newline yet and fails to
            // parse; everything before it is a stable prefix.
            match serde_json::from_slice::<LogEvent>(&line) {
                Ok(e) => out.push(e),
                Err(_) => break,
            }
        }
        Ok(out)
    }
}

impl LogStore for FileLog {
    fn create(&self, trial_id: &str) -> Result<(), LogError> {
        self.with_trial(trial_id, |_| Ok(()))
    }

    fn append(&self, event: NewEvent) -> Result<LogEvent, LogError> {
        let trial_id = event.trial_id.clone();
        self.with_trial(&trial_id, |tf| {
            let e = tf.head.next(event);
            let mut line = serde_json::to_vec(&e).expect("log events serialize");
            line.push(b'\n');
            if let Err(err) = tf.log.write_all(&line).and_then(|_| tf.log.sync_data()) {
                // Leave no partial line behind for the next append.
                let _ = tf.log.set_len(tf.len);
                return Err(err.into());
            }
            if let Err(err) = tf
                .index
                .write_all(&tf.len.to_le_bytes())
                .and_then(|_| tf.index.sync_data())
            {
                let _ = tf.log.set_len(tf.len);
                return Err(err.into());
            }
            tf.len += line.len() as u64;
            tf.head.advance(&e);
            Ok(e)
        })
    }

    fn events(&self, trial_id: &str) -> Result<Vec<LogEvent>, LogError> {
        self.events_after(trial_id, 0)
    }

    fn trial_ids(&self) -> Result<Vec<String>, LogError> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) == Some(LOG_EXT) {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    ids.push(stem.to_owned());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }
}

//! Append-only JSON-lines store. One line per committed batch; a line
//! counts only once its terminating newline is on disk.

use std::fs::{self, File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{lock, Batch, Index, Op, RecordKind, Store, StoreError, StoreKey, StoreRecord};
use crate::domain::RoomId;

pub const LOG_FILE: &str = "store.log";
const LOG_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct LogLine {
    v: u32,
    ops: Vec<Op>,
}

/// Simulated crash: commit number `commit` (0-based, counted from open)
/// writes only its first `keep_bytes` bytes, and the store refuses all
/// further writes as if the process had died.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CrashPoint {
    pub commit: usize,
    pub keep_bytes: usize,
}

#[derive(Debug)]
struct Inner {
    index: Index,
    file: File,
    commits: usize,
    crash: Option<CrashPoint>,
    dead: bool,
}

#[derive(Debug)]
pub struct FileStore {
    dir: PathBuf,
    inner: Mutex<Inner>,
}

impl FileStore {
    /// Open or create the store in `dir`, replaying the log. A torn final
    /// line is cut off.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let path = dir.join(LOG_FILE);
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;

        let mut index = Index::default();
        let mut good = 0usize;
        for (n, line) in bytes.split_inclusive(|b| *b == b'\n').enumerate() {
            if line.last() != Some(&b'\n') {
                break;
            }
            let parsed: LogLine = serde_json::from_slice(&line[..line.len() - 1]).map_err(|e| {
                StoreError::Corrupt {
                    line: n + 1,
                    reason: e.to_string(),
                }
            })?;
            if parsed.v != LOG_VERSION {
                return Err(StoreError::Corrupt {
                    line: n + 1,
                    reason: format!("unsupported version {}", parsed.v),
                });
            }
            index.apply(&Batch { ops: parsed.ops });
            good += line.len();
        }
        if good < bytes.len() {
            tracing::warn!(path = %path.display(), dropped = bytes.len() - good, "truncating torn log tail");
            file.set_len(good as u64)?;
            file.sync_all()?;
        }
        Ok(Self {
            dir,
            inner: Mutex::new(Inner {
                index,
                file,
                commits: 0,
                crash: None,
                dead: false,
            }),
        })
    }

    pub fn with_crash(self, crash: CrashPoint) -> Self {
        lock(&self.inner).crash = Some(crash);
        self
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn log_path(&self) -> PathBuf {
        self.dir.join(LOG_FILE)
    }

    /// Serialized length of a batch's log line, newline included.
    pub fn encoded_len(batch: &Batch) -> usize {
        encode(&batch.ops).map(|l| l.len()).unwrap_or(0)
    }
}

fn encode(ops: &[Op]) -> Result<Vec<u8>, StoreError> {
    #[derive(Serialize)]
    struct Borrowed<'a> {
        v: u32,
        ops: &'a [Op],
    }
    let mut line = serde_json::to_vec(&Borrowed {
        v: LOG_VERSION,
        ops,
    })?;
    line.push(b'\n');
    Ok(line)
}

impl Store for FileStore {
    fn commit(&self, batch: Batch) -> Result<(), StoreError> {
        let mut inner = lock(&self.inner);
        if inner.dead {
            return Err(StoreError::Failure(
                "store halted after simulated crash".into(),
            ));
        }
        let line = encode(&batch.ops)?;
        let n = inner.commits;
        inner.commits += 1;
        if let Some(crash) = inner.crash.filter(|c| c.commit == n) {
            let keep = crash.keep_bytes.min(line.len());
            inner.file.write_all(&line[..keep])?;
            inner.file.sync_data()?;
            inner.dead = true;
            return Err(StoreError::Failure("simulated crash".into()));
        }
        inner.file.write_all(&line)?;
        inner.file.sync_data()?;
        inner.index.apply(&batch);
        Ok(())
    }

    fn get(&self, key: &StoreKey) -> Result<Option<StoreRecord>, StoreError> {
        Ok(lock(&self.inner).index.get(key))
    }

    fn scan(&self, room: &str, kind: RecordKind) -> Result<Vec<StoreRecord>, StoreError> {
        Ok(lock(&self.inner).index.scan(room, Some(kind)))
    }

    fn scan_room(&self, room: &str) -> Result<Vec<StoreRecord>, StoreError> {
        Ok(lock(&self.inner).index.scan(room, None))
    }

    fn rooms(&self) -> Result<Vec<RoomId>, StoreError> {
        Ok(lock(&self.inner).index.rooms())
    }

    /// Rewrite the log as a single snapshot line and swap it in.
    fn compact(&self) -> Result<(), StoreError> {
        let mut inner = lock(&self.inner);
        if inner.dead {
            return Err(StoreError::Failure(
                "store halted after simulated crash".into(),
            ));
        }
        let ops: Vec<Op> = inner.index.records().cloned().map(Op::Put).collect();
        let tmp = self.dir.join(format!("{LOG_FILE}.tmp"));
        {
            let mut out = File::create(&tmp)?;
            if !ops.is_empty() {
                out.write_all(&encode(&ops)?)?;
            }
            out.sync_all()?;
        }
        let path = self.log_path();
        fs::rename(&tmp, &path)?;
        if let Ok(d) = File::open(&self.dir) {
            let _ = d.sync_all();
        }
        inner.file = OpenOptions::new().read(true).append(true).open(&path)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{InterventionMode, RoomSession};

    fn session(name: &str) -> RoomSession {
        RoomSession::new(
            RoomId::parse(name).unwrap(),
            InterventionMode::Baseline,
            "en",
        )
    }

    #[test]
    fn reopen_replays() {
        let dir = tempfile::tempdir().unwrap();
        {
            let s = FileStore::open(dir.path()).unwrap();
            s.commit(Batch::new().put(StoreRecord::room(&session("a"))))
                .unwrap();
            s.commit(Batch::new().put(StoreRecord::room(&session("b"))))
                .unwrap();
        }
        let s = FileStore::open(dir.path()).unwrap();
        assert_eq!(s.rooms().unwrap().len(), 2);
    }

    #[test]
    fn torn_tail_is_dropped_at_every_cut() {
        let second = Batch::new().put(StoreRecord::room(&session("b")));
        let len = FileStore::encoded_len(&second);
        for keep in 0..=len {
            let dir = tempfile::tempdir().unwrap();
            {
                let s = FileStore::open(dir.path()).unwrap().with_crash(CrashPoint {
                    commit: 1,
                    keep_bytes: keep,
                });
                s.commit(Batch::new().put(StoreRecord::room(&session("a"))))
                    .unwrap();
                assert!(s.commit(second.clone()).is_err());
                assert!(s.commit(Batch::new()).is_err());
            }
            let s = FileStore::open(dir.path()).unwrap();
            let want = if keep == len { 2 } else { 1 };
            assert_eq!(s.rooms().unwrap().len(), want, "keep={keep}");
            // recovery is idempotent and leaves the log appendable
            s.commit(Batch::new().put(StoreRecord::room(&session("c"))))
                .unwrap();
            drop(s);
            assert_eq!(
                FileStore::open(dir.path()).unwrap().rooms().unwrap().len(),
                want + 1
            );
        }
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join(LOG_FILE),
            b"{\"v\":1,\"ops\":[]}\nnot json\n{\"v\":1,\"ops\":[]}\n",
        )
        .unwrap();
        assert!(matches!(
            FileStore::open(dir.path()),
            Err(StoreError::Corrupt { line: 2, .. })
        ));
    }

    #[test]
    fn compaction_removes_deleted_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let s = FileStore::open(dir.path()).unwrap();
        let secret = session("secret-room");
        s.commit(Batch::new().put(StoreRecord::room(&secret)))
            .unwrap();
        s.commit(Batch::new().put(StoreRecord::room(&session("keep"))))
            .unwrap();
        let mut b = Batch::new();
        b.delete(super::super::room_key(&secret.room_id));
        s.commit(b).unwrap();
        s.compact().unwrap();
        let raw = fs::read_to_string(s.log_path()).unwrap();
        assert!(!raw.contains("secret-room"));
        s.commit(Batch::new().put(StoreRecord::room(&session("after"))))
            .unwrap();
        drop(s);
        let names: Vec<_> = FileStore::open(dir.path())
            .unwrap()
            .rooms()
            .unwrap()
            .iter()
            .map(|r| r.to_string())
            .collect();
        assert_eq!(names, vec!["after", "keep"]);
    }
}

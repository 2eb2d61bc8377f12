use std::path::PathBuf;
use std::sync::mpsc::sync_channel;
use std::thread;

use crate::error::{invalid, Result};
use crate::prep::{read_prepared, PreparedRecord};

/// Depth of the prefetch queue between the loader thread and training.
const PREFETCH: usize = 2;

/// Where prepared records come from during training.
pub enum RecordSource<'a> {
    Memory(&'a [PreparedRecord]),
    /// Prepared record directories, read by a background thread one step
    /// ahead of the consumer.
    Disk(&'a [PathBuf]),
}

impl RecordSource<'_> {
    pub fn len(&self) -> usize {
        match self {
            RecordSource::Memory(r) => r.len(),
            RecordSource::Disk(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Calls `f` on the records at `indices`, in order.
    pub fn for_each(&self, indices: &[usize], mut f: impl FnMut(&PreparedRecord) -> Result<()>) -> Result<()> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(invalid(format!("record index {bad} outside 0..{}", self.len())));
        }
        match self {
            RecordSource::Memory(records) => indices.iter().try_for_each(|&i| f(&records[i])),
            RecordSource::Disk(paths) => thread::scope(|s| {
                let (tx, rx) = sync_channel(PREFETCH);
                s.spawn(move || {
                    for &i in indices {
                        if tx.send(read_prepared(&paths[i])).is_err() {
                            break;
                        }
                    }
                });
                for rec in rx {
                    f(&rec?)?;
                }
                Ok(())
            }),
        }
    }
}

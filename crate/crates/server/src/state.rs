use std::path::PathBuf;
use std::sync::atomic::AtomicBool;
use std::sync::{Arc, Mutex, RwLock};

use litknow_core::pipeline::{run_schedule, BusyFlag, Pipeline, PipelineError, TickRecord};
use litknow_core::store::Snapshot;

/// The snapshot every request reads. Replacing it is a single pointer swap
/// under a write lock held for no longer than that swap.
#[derive(Debug)]
pub struct SnapshotCell {
    inner: RwLock<Arc<Snapshot>>,
}

impl SnapshotCell {
    pub fn new(snapshot: Snapshot) -> Self {
        SnapshotCell {
            inner: RwLock::new(Arc::new(snapshot)),
        }
    }

    pub fn load(&self) -> Arc<Snapshot> {
        self.inner.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn swap(&self, next: Arc<Snapshot>) -> Arc<Snapshot> {
        let mut guard = self.inner.write().unwrap_or_else(|e| e.into_inner());
        std::mem::replace(&mut *guard, next)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("an update is already running")]
pub struct Busy;

/// Runs ingest and rebuild off the request path and swaps the result into
/// the shared cell.
pub struct Updater {
    pipeline: Mutex<Pipeline>,
    busy: BusyFlag,
    cell: Arc<SnapshotCell>,
    update_dir: PathBuf,
}

impl Updater {
    pub fn new(pipeline: Pipeline, cell: Arc<SnapshotCell>, update_dir: PathBuf) -> Self {
        Updater {
            pipeline: Mutex::new(pipeline),
            busy: BusyFlag::new(),
            cell,
            update_dir,
        }
    }

    pub fn busy(&self) -> &BusyFlag {
        &self.busy
    }

    /// One ingest and rebuild. Callers hold the busy flag.
    fn run_once(&self) -> Result<Option<u64>, PipelineError> {
        let mut pipeline = self.pipeline.lock().unwrap_or_else(|e| e.into_inner());
        let (report, snapshot) = pipeline.update(&self.update_dir)?;
        for f in &report.failed {
            tracing::error!(file = %f.file, error = %f.error, "update file failed");
        }
        Ok(snapshot.map(|s| {
            let id = s.id;
            self.cell.swap(Arc::new(s));
            id
        }))
    }

    /// Starts an update on a background thread and returns the id the next
    /// snapshot will carry.
    pub fn trigger(self: &Arc<Self>) -> Result<u64, Busy> {
        let token = self.busy.try_acquire().ok_or(Busy)?;
        let building = self.cell.load().id + 1;
        let this = Arc::clone(self);
        std::thread::spawn(move || {
            let _token = token;
            match this.run_once() {
                Ok(Some(id)) => tracing::info!(snapshot_id = id, "admin update swapped in"),
                Ok(None) => tracing::info!("admin update found nothing new"),
                Err(e) => tracing::error!(error = %e, "admin update failed"),
            }
        });
        Ok(building)
    }

    /// Scheduled update loop; returns when `stop` is set.
    pub fn run_scheduled(&self, stop: &AtomicBool, max_ticks: Option<usize>) -> Vec<TickRecord> {
        let (schedule, clock) = {
            let p = self.pipeline.lock().unwrap_or_else(|e| e.into_inner());
            (p.schedule().clone(), p.clock().clone())
        };
        run_schedule(&schedule, clock.as_ref(), &self.busy, stop, max_ticks, || {
            self.run_once().map(|_| ()).map_err(|e| e.to_string())
        })
    }
}

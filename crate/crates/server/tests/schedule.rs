mod common;

use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use common::*;
use litknow_core::pipeline::TickOutcome;
use litknow_server::{SnapshotCell, Updater};

#[test]
fn fake_clock_ticks_drive_updates() {
    let tmp = tempfile::tempdir().unwrap();
    let updates = tmp.path().join("updates");
    copy_updates(&UPDATE_FILES[..1], &updates);
    let p = open_pipeline(&tmp.path().join("data"), small_config());
    let cell = Arc::new(SnapshotCell::new(litknow_core::store::Snapshot::empty(p.catalog().clone())));
    let updater = Updater::new(p, cell.clone(), updates.clone());

    let records = updater.run_scheduled(&AtomicBool::new(false), Some(3));
    assert_eq!(records.len(), 3);
    assert!(records.iter().all(|r| r.outcome == TickOutcome::Completed));
    // Only the first tick had anything new to publish.
    assert_eq!(cell.load().id, 1);
    let gaps: Vec<i64> = records.windows(2).map(|w| (w[1].scheduled_for - w[0].scheduled_for).num_hours()).collect();
    assert_eq!(gaps, [24, 24]);
}

#[test]
fn failing_update_keeps_loop_alive() {
    let tmp = tempfile::tempdir().unwrap();
    let p = open_pipeline(&tmp.path().join("data"), small_config());
    let cell = Arc::new(SnapshotCell::new(litknow_core::store::Snapshot::empty(p.catalog().clone())));
    // The update directory does not exist, so every ingest fails.
    let updater = Updater::new(p, cell, tmp.path().join("missing"));
    let records = updater.run_scheduled(&AtomicBool::new(false), Some(3));
    assert_eq!(records.len(), 3);
    assert!(records.iter().all(|r| matches!(r.outcome, TickOutcome::Failed { .. })));
}

#[test]
fn tick_during_admin_update_is_skipped() {
    let tmp = tempfile::tempdir().unwrap();
    let p = open_pipeline(&tmp.path().join("data"), small_config());
    let cell = Arc::new(SnapshotCell::new(litknow_core::store::Snapshot::empty(p.catalog().clone())));
    let updater = Updater::new(p, cell, fixtures().join("updates"));
    let _running = updater.busy().try_acquire().unwrap();
    let records = updater.run_scheduled(&AtomicBool::new(false), Some(2));
    assert!(records.iter().all(|r| r.outcome == TickOutcome::Skipped));
}

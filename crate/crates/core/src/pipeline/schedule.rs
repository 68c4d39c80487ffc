//! Cron-style update schedule, an injectable clock, and the update loop.

use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::{DateTime, FixedOffset, NaiveDate, Utc};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
#[error("invalid schedule {expr:?}: {message}")]
pub struct ScheduleError {
    pub expr: String,
    pub message: String,
}

/// A five-field cron expression (minute hour day-of-month month
/// day-of-week) evaluated in a fixed UTC offset.
#[derive(Debug, Clone)]
pub struct UpdateSchedule {
    expr: String,
    offset: FixedOffset,
    inner: cron::Schedule,
}

impl UpdateSchedule {
    pub fn parse(expr: &str, utc_offset_minutes: i32) -> Result<Self, ScheduleError> {
        let err = |message: String| ScheduleError {
            expr: expr.to_string(),
            message,
        };
        let fields = expr.split_whitespace().count();
        if fields != 5 {
            return Err(err(format!("expected 5 fields, found {fields}")));
        }
        let offset = FixedOffset::east_opt(utc_offset_minutes * 60).ok_or_else(|| err("UTC offset out of range".into()))?;
        let inner = cron::Schedule::from_str(&format!("0 {expr}")).map_err(|e| err(e.to_string()))?;
        Ok(UpdateSchedule {
            expr: expr.to_string(),
            offset,
            inner,
        })
    }

    pub fn expr(&self) -> &str {
        &self.expr
    }

    pub fn offset(&self) -> FixedOffset {
        self.offset
    }

    /// First firing strictly after `t`.
    pub fn next_after(&self, t: DateTime<Utc>) -> Option<DateTime<Utc>> {
        self.inner
            .after(&t.with_timezone(&self.offset))
            .next()
            .map(|d| d.with_timezone(&Utc))
    }

    /// Calendar date at `t` in the schedule's offset.
    pub fn local_date(&self, t: DateTime<Utc>) -> NaiveDate {
        t.with_timezone(&self.offset).date_naive()
    }
}

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
    /// Blocks until `t` or shortly before; callers re-check `now`.
    fn sleep_until(&self, t: DateTime<Utc>);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }

    fn sleep_until(&self, t: DateTime<Utc>) {
        let wait = (t - Utc::now()).to_std().unwrap_or(Duration::ZERO);
        std::thread::sleep(wait.min(Duration::from_secs(1)));
    }
}

/// Clock that only moves when told to. Sleeping jumps straight to the
/// target time.
#[derive(Debug)]
pub struct FakeClock {
    now: Mutex<DateTime<Utc>>,
}

impl FakeClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        FakeClock { now: Mutex::new(start) }
    }

    pub fn advance(&self, by: chrono::Duration) {
        *self.now.lock().unwrap() += by;
    }

    pub fn set(&self, t: DateTime<Utc>) {
        *self.now.lock().unwrap() = t;
    }
}

impl Clock for FakeClock {
    fn now(&self) -> DateTime<Utc> {
        *self.now.lock().unwrap()
    }

    fn sleep_until(&self, t: DateTime<Utc>) {
        let mut now = self.now.lock().unwrap();
        if t > *now {
            *now = t;
        }
    }
}

/// Shared flag marking an update in progress. The scheduled loop and the
/// admin trigger both acquire it, so at most one build runs at a time.
#[derive(Debug, Default, Clone)]
pub struct BusyFlag(Arc<AtomicBool>);

impl BusyFlag {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn try_acquire(&self) -> Option<BusyToken> {
        self.0
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .ok()
            .map(|_| BusyToken(self.0.clone()))
    }

    pub fn is_busy(&self) -> bool {
        self.0.load(Ordering::Acquire)
    }
}

/// Releases the flag on drop.
#[derive(Debug)]
pub struct BusyToken(Arc<AtomicBool>);

impl Drop for BusyToken {
    fn drop(&mut self) {
        self.0.store(false, Ordering::Release);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum TickOutcome {
    Completed,
    Failed { error: String },
    /// Another update held the busy flag, or the tick passed while the
    /// previous update was still running.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TickRecord {
    pub scheduled_for: DateTime<Utc>,
    #[serde(flatten)]
    pub outcome: TickOutcome,
}

/// Runs `job` at every firing of `schedule` until `stop` is set or
/// `max_ticks` records have been produced. Failures are logged and the loop
/// carries on.
pub fn run_schedule<F>(
    schedule: &UpdateSchedule,
    clock: &dyn Clock,
    busy: &BusyFlag,
    stop: &AtomicBool,
    max_ticks: Option<usize>,
    mut job: F,
) -> Vec<TickRecord>
where
    F: FnMut() -> Result<(), String>,
{
    let mut records = Vec::new();
    let done = |records: &Vec<TickRecord>| max_ticks.is_some_and(|m| records.len() >= m);
    let Some(mut next) = schedule.next_after(clock.now()) else {
        return records;
    };
    while !done(&records) {
        while clock.now() < next {
            if stop.load(Ordering::Acquire) {
                return records;
            }
            clock.sleep_until(next);
        }
        if stop.load(Ordering::Acquire) {
            return records;
        }
        let outcome = match busy.try_acquire() {
            None => {
                tracing::warn!(scheduled_for = %next, "update already running; tick skipped");
                TickOutcome::Skipped
            }
            Some(_token) => match job() {
                Ok(()) => {
                    tracing::info!(scheduled_for = %next, "scheduled update completed");
                    TickOutcome::Completed
                }
                Err(error) => {
                    tracing::error!(scheduled_for = %next, %error, "scheduled update failed");
                    TickOutcome::Failed { error }
                }
            },
        };
        records.push(TickRecord {
            scheduled_for: next,
            outcome,
        });

        // Firings that passed while the job ran are skipped, not queued.
        let now = clock.now();
        let mut upcoming = schedule.next_after(next);
        while let Some(t) = upcoming {
            if t > now || done(&records) {
                break;
            }
            tracing::warn!(scheduled_for = %t, "tick passed during a running update; skipped");
            records.push(TickRecord {
                scheduled_for: t,
                outcome: TickOutcome::Skipped,
            });
            upcoming = schedule.next_after(t);
        }
        match upcoming {
            Some(t) => next = t,
            None => break,
        }
    }
    records
}

//! Point-in-time data access with a log of every read that reaches past
//! the decision month.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;

use crate::panel::{FactorPanel, MonthIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccessKind {
    /// Factor value of a month after the decision month.
    Feature,
    /// Return not yet realized at the decision month.
    Return,
    /// Evaluation history entry of the decision month or later.
    History,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub kind: AccessKind,
    pub decision: MonthIndex,
    pub read: MonthIndex,
}

#[derive(Debug, Default)]
pub struct AccessLog {
    violations: Mutex<Vec<Violation>>,
    reads: AtomicUsize,
}

impl AccessLog {
    pub fn new() -> Self {
        Self::default()
    }

    fn record(&self, kind: AccessKind, decision: MonthIndex, read: MonthIndex) {
        self.violations
            .lock()
            .expect("access log poisoned")
            .push(Violation { kind, decision, read });
    }

    /// Violations sorted for stable reporting.
    pub fn violations(&self) -> Vec<Violation> {
        let mut v = self.violations.lock().expect("access log poisoned").clone();
        v.sort_by_key(|x| (x.decision, x.read, x.kind as u8));
        v
    }

    pub fn is_clean(&self) -> bool {
        self.violations.lock().expect("access log poisoned").is_empty()
    }

    pub fn reads(&self) -> usize {
        self.reads.load(Ordering::Relaxed)
    }

    fn count(&self) {
        self.reads.fetch_add(1, Ordering::Relaxed);
    }
}

/// View of the data as known when deciding at month position `t`.
/// Factor values of month `m` are known at `m`; the return of month `m`
/// (over `m → m+1`) becomes known at `m + 1`.
#[derive(Clone, Copy)]
pub struct AsOf<'a> {
    pub(crate) panel: &'a FactorPanel,
    pub(crate) features: &'a FactorPanel,
    pub(crate) t: usize,
    pub(crate) log: &'a AccessLog,
}

impl<'a> AsOf<'a> {
    pub fn new(panel: &'a FactorPanel, features: &'a FactorPanel, t: usize, log: &'a AccessLog) -> Self {
        Self {
            panel,
            features,
            t,
            log,
        }
    }

    pub fn decision_month(&self) -> usize {
        self.t
    }

    fn month(&self, m: usize) -> MonthIndex {
        self.panel.months()[m]
    }

    pub fn feature(&self, m: usize, s: usize, f: usize) -> Option<f64> {
        self.log.count();
        if m > self.t {
            self.log.record(AccessKind::Feature, self.month(self.t), self.month(m));
        }
        self.features.value(m, s, f)
    }

    pub fn next_return(&self, m: usize, s: usize) -> f64 {
        self.log.count();
        if m >= self.t {
            self.log.record(AccessKind::Return, self.month(self.t), self.month(m));
        }
        self.panel.next_return(m, s)
    }

    /// Marks use of the evaluation history entry of month `m`.
    pub fn history(&self, m: usize) {
        self.log.count();
        if m >= self.t {
            self.log.record(AccessKind::History, self.month(self.t), self.month(m));
        }
    }
}

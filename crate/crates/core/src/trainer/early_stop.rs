#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Continue,
    Stop,
}

/// Tracks the best validation metric seen so far.
#[derive(Debug, Clone)]
pub struct EarlyStopState<S> {
    pub patience: usize,
    pub best: f64,
    pub best_epoch: usize,
    pub since_improvement: usize,
    pub evaluations: usize,
    pub snapshot: Option<S>,
}

impl<S> EarlyStopState<S> {
    pub fn new(patience: usize) -> Self {
        EarlyStopState {
            patience,
            best: f64::NEG_INFINITY,
            best_epoch: 0,
            since_improvement: 0,
            evaluations: 0,
            snapshot: None,
        }
    }
}

/// Records `metric` for `epoch`. A strict improvement resets the counter and
/// stores `snapshot()`; anything else counts against the patience, and the
/// run stops once `patience` evaluations in a row failed to improve.
pub fn early_stop_update<S>(
    state: &mut EarlyStopState<S>,
    metric: f64,
    epoch: usize,
    snapshot: impl FnOnce() -> S,
) -> Decision {
    debug_assert!(metric.is_finite());
    state.evaluations += 1;
    if metric > state.best {
        state.best = metric;
        state.best_epoch = epoch;
        state.since_improvement = 0;
        state.snapshot = Some(snapshot());
    } else {
        state.since_improvement += 1;
    }
    if state.since_improvement >= state.patience {
        Decision::Stop
    } else {
        Decision::Continue
    }
}

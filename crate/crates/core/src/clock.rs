//! Time sources shared by the load generator and the mock node.
//!
//! [`Clock::Real`] is a thin wrapper over tokio timers. [`Clock::Virtual`] is a
//! discrete-event clock: tasks that take part in a simulation hold a
//! [`Participant`] and time only moves when every participant is asleep, at
//! which point it jumps straight to the earliest pending deadline. Periodic
//! tick hooks (block sealing) run inside that jump, before sleepers waking at
//! the same instant.

use std::collections::{BTreeSet, HashMap};
use std::future::Future;
use std::pin::Pin;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::task::{Context, Poll, Waker};
use std::time::Instant;

#[derive(Clone)]
pub enum Clock {
    Real(RealClock),
    Virtual(Arc<VirtualClock>),
}

impl std::fmt::Debug for Clock {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Clock::Real(_) => f.write_str("Clock::Real"),
            Clock::Virtual(v) => write!(f, "Clock::Virtual(now={}ns)", v.now_ns()),
        }
    }
}

impl Clock {
    pub fn real() -> Self {
        Clock::Real(RealClock::new())
    }

    pub fn new_virtual() -> Self {
        Clock::Virtual(Arc::new(VirtualClock::new()))
    }

    pub fn is_virtual(&self) -> bool {
        matches!(self, Clock::Virtual(_))
    }

    pub fn as_virtual(&self) -> Option<&Arc<VirtualClock>> {
        match self {
            Clock::Virtual(v) => Some(v),
            Clock::Real(_) => None,
        }
    }

    /// Monotonic nanoseconds since the clock's origin.
    pub fn now_ns(&self) -> u64 {
        match self {
            Clock::Real(r) => r.now_ns(),
            Clock::Virtual(v) => v.now_ns(),
        }
    }

    /// Registers a task taking part in virtual time. No-op bookkeeping on a real clock.
    pub fn participant(&self) -> Participant {
        if let Clock::Virtual(v) = self {
            v.lock().running += 1;
        }
        Participant {
            clock: self.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RealClock {
    origin: Instant,
}

impl RealClock {
    pub fn new() -> Self {
        Self {
            origin: Instant::now(),
        }
    }

    pub fn now_ns(&self) -> u64 {
        self.origin.elapsed().as_nanos() as u64
    }
}

impl Default for RealClock {
    fn default() -> Self {
        Self::new()
    }
}

/// A task that blocks virtual time while it runs.
///
/// Dropping the participant releases its hold. Sleep through
/// [`Participant::sleep`] so the clock knows the task is idle.
pub struct Participant {
    clock: Clock,
}

impl Participant {
    pub fn clock(&self) -> &Clock {
        &self.clock
    }

    /// A new participant on the same clock, counted as running immediately.
    /// Create it before spawning the task that will own it.
    pub fn fork(&self) -> Participant {
        self.clock.participant()
    }

    pub async fn sleep(&self, duration: std::time::Duration) {
        match &self.clock {
            Clock::Real(_) => tokio::time::sleep(duration).await,
            Clock::Virtual(v) => {
                let nanos = duration.as_nanos() as u64;
                if nanos == 0 {
                    return;
                }
                VirtualSleep {
                    clock: v.clone(),
                    nanos,
                    id: None,
                    done: false,
                }
                .await
            }
        }
    }
}

impl Drop for Participant {
    fn drop(&mut self) {
        if let Clock::Virtual(v) = &self.clock {
            let mut state = v.lock();
            state.running -= 1;
            v.advance_if_idle(&mut state);
        }
    }
}

type TickHook = Box<dyn FnMut(u64) + Send>;

struct Ticker {
    id: u64,
    next_at: u64,
    period: u64,
    hook: TickHook,
}

struct SleepEntry {
    deadline: u64,
    woken: bool,
    waker: Option<Waker>,
}

#[derive(Default)]
struct State {
    running: usize,
    next_id: u64,
    queue: BTreeSet<(u64, u64)>,
    sleepers: HashMap<u64, SleepEntry>,
    tickers: Vec<Ticker>,
}

impl State {
    fn fresh_id(&mut self) -> u64 {
        self.next_id += 1;
        self.next_id
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TickerId(u64);

pub struct VirtualClock {
    now: AtomicU64,
    state: Mutex<State>,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self {
            now: AtomicU64::new(0),
            state: Mutex::new(State::default()),
        }
    }

    pub fn now_ns(&self) -> u64 {
        self.now.load(Ordering::Acquire)
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Number of participants currently counted as running.
    pub fn running(&self) -> usize {
        self.lock().running
    }

    pub fn pending_sleepers(&self) -> usize {
        self.lock().queue.len()
    }

    /// Runs `hook(t)` at `t = now + period, now + 2·period, …`.
    ///
    /// The hook runs while the clock's internal lock is held; it must not call
    /// back into this clock.
    pub fn add_ticker(&self, period_ns: u64, hook: impl FnMut(u64) + Send + 'static) -> TickerId {
        assert!(period_ns > 0, "ticker period must be positive");
        let mut state = self.lock();
        let id = state.fresh_id();
        let next_at = self.now_ns() + period_ns;
        state.tickers.push(Ticker {
            id,
            next_at,
            period: period_ns,
            hook: Box::new(hook),
        });
        TickerId(id)
    }

    pub fn remove_ticker(&self, id: TickerId) {
        self.lock().tickers.retain(|t| t.id != id.0);
    }

    /// Moves time forward by `nanos`, firing ticks and waking sleepers on the
    /// way, regardless of how many participants are running. Meant for tests
    /// and drivers outside the participant model.
    pub fn advance(&self, nanos: u64) {
        let mut state = self.lock();
        let target = self.now_ns() + nanos;
        loop {
            let next_sleep = state.queue.first().map(|(t, _)| *t).filter(|t| *t <= target);
            match next_sleep {
                Some(t) => {
                    self.fire_ticks_through(&mut state, t);
                    self.wake_due(&mut state, t);
                }
                None => {
                    self.fire_ticks_through(&mut state, target);
                    self.now.store(target, Ordering::Release);
                    break;
                }
            }
        }
    }

    fn fire_ticks_through(&self, state: &mut State, until: u64) {
        loop {
            let due = state
                .tickers
                .iter_mut()
                .filter(|t| t.next_at <= until)
                .min_by_key(|t| (t.next_at, t.id));
            let Some(ticker) = due else { break };
            let at = ticker.next_at;
            self.now.store(at, Ordering::Release);
            (ticker.hook)(at);
            ticker.next_at += ticker.period;
        }
    }

    fn wake_due(&self, state: &mut State, t: u64) {
        self.now.store(t.max(self.now_ns()), Ordering::Release);
        while let Some(&(deadline, id)) = state.queue.first() {
            if deadline > t {
                break;
            }
            state.queue.pop_first();
            if let Some(entry) = state.sleepers.get_mut(&id) {
                entry.woken = true;
                state.running += 1;
                if let Some(w) = entry.waker.take() {
                    w.wake();
                }
            }
        }
    }

    fn advance_if_idle(&self, state: &mut State) {
        while state.running == 0 {
            let Some(&(deadline, _)) = state.queue.first() else {
                return;
            };
            self.fire_ticks_through(state, deadline);
            self.wake_due(state, deadline);
        }
    }
}

impl Default for VirtualClock {
    fn default() -> Self {
        Self::new()
    }
}

struct VirtualSleep {
    clock: Arc<VirtualClock>,
    nanos: u64,
    id: Option<u64>,
    done: bool,
}

impl Future for VirtualSleep {
    type Output = ();

    fn poll(mut self: Pin<&mut Self>, cx: &mut Context<'_>) -> Poll<()> {
        let clock = self.clock.clone();
        let mut state = clock.lock();
        match self.id {
            None => {
                let id = state.fresh_id();
                let deadline = clock.now_ns() + self.nanos;
                state.queue.insert((deadline, id));
                state.sleepers.insert(
                    id,
                    SleepEntry {
                        deadline,
                        woken: false,
                        waker: Some(cx.waker().clone()),
                    },
                );
                state.running -= 1;
                self.id = Some(id);
                clock.advance_if_idle(&mut state);
                if state.sleepers.get(&id).is_some_and(|e| e.woken) {
                    state.sleepers.remove(&id);
                    self.done = true;
                    return Poll::Ready(());
                }
                Poll::Pending
            }
            Some(id) => {
                let entry = state.sleepers.get_mut(&id).expect("sleep entry vanished");
                if entry.woken {
                    state.sleepers.remove(&id);
                    self.done = true;
                    Poll::Ready(())
                } else {
                    entry.waker = Some(cx.waker().clone());
                    Poll::Pending
                }
            }
        }
    }
}

impl Drop for VirtualSleep {
    fn drop(&mut self) {
        let Some(id) = self.id else { return };
        if self.done {
            return;
        }
        let mut state = self.clock.lock();
        if let Some(entry) = state.sleepers.remove(&id) {
            if !entry.woken {
                // Cancelled while asleep: the owner is running again.
                state.queue.remove(&(entry.deadline, id));
                state.running += 1;
            }
        }
    }
}

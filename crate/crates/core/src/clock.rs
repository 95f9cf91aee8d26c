//! Time sources for captures and scenarios.

use std::sync::Mutex;

use crate::model::Timestamp14;

pub trait Clock: Send + Sync {
    /// Current time. Stepping clocks advance after each call.
    fn now(&self) -> Timestamp14;

    /// Current time without advancing.
    fn peek(&self) -> Timestamp14 {
        self.now()
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp14 {
        Timestamp14::now()
    }
}

/// A manually driven clock. With a non-zero step every [`Clock::now`] call
/// moves time forward by that many seconds after reading it.
#[derive(Debug)]
pub struct VirtualClock {
    current: Mutex<Timestamp14>,
    step_secs: i64,
}

impl VirtualClock {
    pub fn new(start: Timestamp14) -> Self {
        Self::stepping(start, 0)
    }

    pub fn stepping(start: Timestamp14, step_secs: i64) -> Self {
        Self {
            current: Mutex::new(start),
            step_secs,
        }
    }

    pub fn set(&self, to: Timestamp14) {
        *self.current.lock().unwrap() = to;
    }

    pub fn advance(&self, secs: i64) {
        let mut cur = self.current.lock().unwrap();
        *cur = cur.plus_seconds(secs);
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> Timestamp14 {
        let mut cur = self.current.lock().unwrap();
        let out = cur.clone();
        if self.step_secs != 0 {
            *cur = cur.plus_seconds(self.step_secs);
        }
        out
    }

    fn peek(&self) -> Timestamp14 {
        self.current.lock().unwrap().clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stepping_clock() {
        let clock = VirtualClock::stepping(Timestamp14::parse("20210101000000").unwrap(), 2);
        assert_eq!(clock.now().as_str(), "20210101000000");
        assert_eq!(clock.peek().as_str(), "20210101000002");
        assert_eq!(clock.now().as_str(), "20210101000002");
        clock.advance(60);
        assert_eq!(clock.peek().as_str(), "20210101000104");
    }
}

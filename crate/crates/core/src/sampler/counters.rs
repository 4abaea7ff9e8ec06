/// Hardware event counters read around each measurement.
pub trait CounterProvider {
    /// Whether counts are real; the no-op provider reports `false`.
    fn available(&self) -> bool;
    /// Selects the events of subsequent measurements.
    fn configure(&mut self, names: &[String]) -> Result<(), String>;
    fn start(&mut self);
    /// One count per configured event since the last `start`.
    fn stop(&mut self) -> Vec<u64>;
}

/// Portable provider: accepts any event list and counts zeros.
#[derive(Debug, Default, Clone)]
pub struct NullCounters {
    events: usize,
}

impl CounterProvider for NullCounters {
    fn available(&self) -> bool {
        false
    }

    fn configure(&mut self, names: &[String]) -> Result<(), String> {
        self.events = names.len();
        Ok(())
    }

    fn start(&mut self) {}

    fn stop(&mut self) -> Vec<u64> {
        vec![0; self.events]
    }
}

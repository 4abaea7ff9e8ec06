use std::fmt;
use std::time::Instant;

/// Source of cycle counts.
#[derive(Debug, Clone)]
pub enum Timer {
    /// The x86 time-stamp counter, used only when the CPU reports it as
    /// invariant.
    Tsc,
    /// A monotonic clock scaled by a nominal frequency.
    Clock { frequency_hz: f64, epoch: Instant },
}

impl Timer {
    /// The time-stamp counter when it is invariant, else the scaled clock.
    pub fn detect(fallback_frequency_hz: f64) -> Timer {
        if invariant_tsc() {
            Timer::Tsc
        } else {
            Timer::clock(fallback_frequency_hz)
        }
    }

    pub fn clock(frequency_hz: f64) -> Timer {
        Timer::Clock {
            frequency_hz,
            epoch: Instant::now(),
        }
    }

    /// Current cycle count; nondecreasing.
    #[inline]
    pub fn now(&self) -> u64 {
        match self {
            Timer::Tsc => rdtsc(),
            Timer::Clock {
                frequency_hz,
                epoch,
            } => (epoch.elapsed().as_nanos() as f64 * frequency_hz / 1e9) as u64,
        }
    }
}

/// Metadata form: `tsc` or `clock <frequency_hz>`.
impl fmt::Display for Timer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Timer::Tsc => f.write_str("tsc"),
            Timer::Clock { frequency_hz, .. } => write!(f, "clock {frequency_hz}"),
        }
    }
}

/// Cycle count from a process-wide timer chosen by [`Timer::detect`] with a
/// 1 GHz fallback.
pub fn read_cycles() -> u64 {
    static TIMER: std::sync::OnceLock<Timer> = std::sync::OnceLock::new();
    TIMER.get_or_init(|| Timer::detect(1e9)).now()
}

#[cfg(target_arch = "x86_64")]
fn invariant_tsc() -> bool {
    use std::arch::x86_64::__cpuid;
    // Leaf 0x80000007, EDX bit 8: invariant TSC.
    let max_ext = __cpuid(0x8000_0000).eax;
    max_ext >= 0x8000_0007 && __cpuid(0x8000_0007).edx & (1 << 8) != 0
}

#[cfg(not(target_arch = "x86_64"))]
fn invariant_tsc() -> bool {
    false
}

#[cfg(target_arch = "x86_64")]
#[inline]
fn rdtsc() -> u64 {
    use std::arch::x86_64::{_mm_lfence, _rdtsc};
    unsafe {
        _mm_lfence();
        let t = _rdtsc();
        _mm_lfence();
        t
    }
}

#[cfg(not(target_arch = "x86_64"))]
fn rdtsc() -> u64 {
    unreachable!("the time-stamp counter is only selected on x86_64")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Duration;

    #[test]
    fn monotonic() {
        let t1 = read_cycles();
        let t2 = read_cycles();
        assert!(t2 >= t1);
        let c = Timer::clock(1e9);
        let a = c.now();
        assert!(c.now() >= a);
    }

    #[test]
    fn clock_sleep_matches_frequency() {
        let timer = Timer::clock(2.6e9);
        let t1 = timer.now();
        std::thread::sleep(Duration::from_millis(10));
        let dt = (timer.now() - t1) as f64;
        assert!((dt - 26e6).abs() <= 0.2 * 26e6, "{dt}");
    }

    #[test]
    fn metadata_names() {
        assert_eq!(Timer::Tsc.to_string(), "tsc");
        assert_eq!(Timer::clock(2.6e9).to_string(), "clock 2600000000");
    }
}

//! Constant-bit-rate emission schedule.

use crate::time::SimTime;

/// Time of the `k`-th packet: `start + k / rate`, rounded to the
/// microsecond without accumulating error.
pub fn cbr_emission_time(start: SimTime, rate_pps: f64, k: u64) -> SimTime {
    start + SimTime((k as f64 * 1e6 / rate_pps).round() as u64)
}

/// All emission times in `[start, end)`.
pub fn cbr_schedule(start: SimTime, rate_pps: f64, end: SimTime) -> impl Iterator<Item = SimTime> {
    (0u64..)
        .map(move |k| cbr_emission_time(start, rate_pps, k))
        .take_while(move |&t| t < end)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hundred_per_second() {
        let times: Vec<_> = cbr_schedule(SimTime::ZERO, 100.0, SimTime::from_secs(1)).collect();
        assert_eq!(times.len(), 100);
        assert!(times.iter().enumerate().all(|(k, t)| *t == SimTime::from_millis(10 * k as u64)));
    }

    #[test]
    fn odd_rates_do_not_drift() {
        let start = SimTime::from_micros(123);
        assert_eq!(cbr_emission_time(start, 3.0, 3_000), start + SimTime::from_secs(1_000));
        assert_eq!(cbr_emission_time(start, 3.0, 1), start + SimTime(333_333));
    }
}

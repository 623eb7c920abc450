//! Baseline profile construction: per-station 288-slot daily templates
//! averaged over the observation days, and tiling back to series length.

use crate::data::{MonthlyProfile, SpeedSeries, SLOTS_PER_DAY};
use crate::error::{Error, Result};

/// Default number of complete days used as the baseline window.
pub const DEFAULT_PROFILE_DAYS: usize = 28;

/// Average a whole-days series into a 288-slot template, skipping masked
/// slots. Fails if the series is not day-aligned or any slot is missing on
/// every day.
pub fn build_monthly_profile(series: &SpeedSeries) -> Result<MonthlyProfile> {
    let n = series.len();
    if n == 0 || n % SLOTS_PER_DAY != 0 {
        return Err(Error::PartialDay {
            len: n,
            slots_per_day: SLOTS_PER_DAY,
        });
    }
    let days = n / SLOTS_PER_DAY;
    let values = series.values();
    let mask = series.missing_mask();
    let mut slots = Vec::with_capacity(SLOTS_PER_DAY);
    for k in 0..SLOTS_PER_DAY {
        let mut sum = 0.0;
        let mut count = 0usize;
        for d in 0..days {
            let i = d * SLOTS_PER_DAY + k;
            if !mask[i] {
                sum += values[i];
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::EmptyProfileSlot { slot: k });
        }
        slots.push(sum / count as f64);
    }
    MonthlyProfile::new(series.station_id.clone(), slots, days)
}

/// Build the profile from the most recent `profile_days` complete days of a
/// longer series (the baseline window preceding the observation days).
pub fn build_profile_from_tail(series: &SpeedSeries, profile_days: usize) -> Result<MonthlyProfile> {
    let n = series.len();
    if n % SLOTS_PER_DAY != 0 {
        return Err(Error::PartialDay {
            len: n,
            slots_per_day: SLOTS_PER_DAY,
        });
    }
    let days = n / SLOTS_PER_DAY;
    if profile_days == 0 || profile_days > days {
        return Err(Error::InvalidParam(format!(
            "profile_days {profile_days} out of range for {days}-day series"
        )));
    }
    let start = (days - profile_days) * SLOTS_PER_DAY;
    let sub = SpeedSeries::new(
        series.station_id.clone(),
        series.slot_time(start),
        series.values()[start..].to_vec(),
        series.missing_mask()[start..].to_vec(),
    )?;
    build_monthly_profile(&sub)
}

/// Tile the 288-slot template across `n_days`: `out[k] == slots[k % 288]`.
pub fn tile_profile(profile: &MonthlyProfile, n_days: usize) -> Result<Vec<f64>> {
    if n_days == 0 {
        return Err(Error::InvalidParam("n_days must be positive".into()));
    }
    let slots = profile.slots();
    let mut out = Vec::with_capacity(n_days * SLOTS_PER_DAY);
    for _ in 0..n_days {
        out.extend_from_slice(slots);
    }
    Ok(out)
}

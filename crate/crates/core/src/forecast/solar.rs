//! Low-precision solar position (NOAA general solar position equations).

use chrono::{Datelike, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

/// Site location. Longitude is positive east; `utc_offset_hours` is the
/// fixed offset of the dataset's clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub latitude: f64,
    pub longitude: f64,
    pub utc_offset_hours: f64,
}

impl Default for Site {
    fn default() -> Self {
        Site { latitude: 37.4, longitude: -122.1, utc_offset_hours: -8.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolarPosition {
    pub zenith_deg: f64,
    /// True solar time in hours, in `[0, 24)`.
    pub solar_time_hours: f64,
}

fn fractional_year(t: NaiveDateTime) -> f64 {
    let days_in_year = if t.date().leap_year() { 366.0 } else { 365.0 };
    let hour = t.hour() as f64 + t.minute() as f64 / 60.0;
    2.0 * std::f64::consts::PI / days_in_year * (t.ordinal0() as f64 + (hour - 12.0) / 24.0)
}

/// Equation of time in minutes.
fn equation_of_time(g: f64) -> f64 {
    229.18
        * (0.000075 + 0.001868 * g.cos() - 0.032077 * g.sin() - 0.014615 * (2.0 * g).cos()
            - 0.040849 * (2.0 * g).sin())
}

/// Solar declination in radians.
pub fn declination(g: f64) -> f64 {
    0.006918 - 0.399912 * g.cos() + 0.070257 * g.sin() - 0.006758 * (2.0 * g).cos()
        + 0.000907 * (2.0 * g).sin()
        - 0.002697 * (3.0 * g).cos()
        + 0.00148 * (3.0 * g).sin()
}

pub fn solar_position(site: &Site, local: NaiveDateTime) -> SolarPosition {
    let g = fractional_year(local);
    let offset_min = equation_of_time(g) + 4.0 * site.longitude - 60.0 * site.utc_offset_hours;
    let clock_min = local.hour() as f64 * 60.0 + local.minute() as f64 + local.second() as f64 / 60.0;
    let tst = (clock_min + offset_min).rem_euclid(1440.0);
    let hour_angle = (tst / 4.0 - 180.0).to_radians();
    let lat = site.latitude.to_radians();
    let decl = declination(g);
    let cos_z = lat.sin() * decl.sin() + lat.cos() * decl.cos() * hour_angle.cos();
    SolarPosition { zenith_deg: cos_z.clamp(-1.0, 1.0).acos().to_degrees(), solar_time_hours: tst / 60.0 }
}

pub fn solar_zenith(site: &Site, local: NaiveDateTime) -> f64 {
    solar_position(site, local).zenith_deg
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn min_zenith_on(site: &Site, date: NaiveDate) -> f64 {
        (0..1440)
            .map(|m| solar_zenith(site, date.and_hms_opt(m / 60, m % 60, 0).unwrap()))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn equator_equinox_noon_is_overhead() {
        let site = Site { latitude: 0.0, longitude: 0.0, utc_offset_hours: 0.0 };
        let z = min_zenith_on(&site, NaiveDate::from_ymd_opt(2021, 3, 20).unwrap());
        assert!(z < 0.5, "{z}");
    }

    #[test]
    fn solstice_noon_matches_declination_oracle() {
        // At solar noon the zenith is |lat - decl|; the June solstice
        // declination is the obliquity, 23.44 degrees.
        let site = Site { latitude: 37.0, longitude: 0.0, utc_offset_hours: 0.0 };
        let z = min_zenith_on(&site, NaiveDate::from_ymd_opt(2021, 6, 21).unwrap());
        assert!((z - (37.0 - 23.44)).abs() < 0.5, "{z}");
    }

    #[test]
    fn solar_midnight_is_below_horizon() {
        let site = Site { latitude: 37.0, longitude: 0.0, utc_offset_hours: 0.0 };
        let t = NaiveDate::from_ymd_opt(2021, 6, 21).unwrap().and_hms_opt(0, 0, 0).unwrap();
        assert!(solar_zenith(&site, t) > 90.0);
    }

    #[test]
    fn solar_time_tracks_longitude() {
        let t = NaiveDate::from_ymd_opt(2021, 4, 15).unwrap().and_hms_opt(12, 0, 0).unwrap();
        let a = solar_position(&Site { latitude: 10.0, longitude: 0.0, utc_offset_hours: 0.0 }, t);
        let b = solar_position(&Site { latitude: 10.0, longitude: 15.0, utc_offset_hours: 0.0 }, t);
        assert!(((b.solar_time_hours - a.solar_time_hours) - 1.0).abs() < 1e-9);
    }
}

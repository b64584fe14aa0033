//! Seeded synthetic sensor frames with ground-truth occupancy and window
//! events.
//!
//! People arrive and leave on an alternating renewal schedule; windows open
//! during some occupancies and occasionally on their own. Gas and climate
//! channels follow first-order linear dynamics driven by those events, and
//! the remaining channels are ambient levels plus noise so that feature
//! selection has something to discard.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{Channel, LabelSeries, SensorFrame};
use crate::error::{Error, Result};
use crate::par;
use crate::rng::{derive_seed, SeededRng};
use crate::{SAMPLE_PERIOD_SECS, SENSOR_CHANNELS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EventSchedule {
    /// Mean occupancy length in samples.
    pub occupancy_mean: f64,
    /// Mean vacancy length in samples.
    pub vacancy_mean: f64,
    /// People present during an occupancy, drawn uniformly from `1..=max`.
    pub max_persons: u32,
    /// Chance that a window is opened at some point of an occupancy.
    pub window_open_probability: f64,
    /// Per-sample chance of a window opening while the room is empty.
    pub window_event_rate: f64,
    /// Mean open duration in samples.
    pub window_mean: f64,
}

impl Default for EventSchedule {
    fn default() -> Self {
        Self {
            occupancy_mean: 80.0,
            vacancy_mean: 400.0,
            max_persons: 3,
            window_open_probability: 0.5,
            window_event_rate: 0.001,
            window_mean: 60.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Dynamics {
    pub co2_ambient: f64,
    /// ppm added per person per sample.
    pub co2_emission: f64,
    /// Fraction of the excess over ambient removed per sample.
    pub decay_closed: f64,
    pub decay_open: f64,
    pub o2_ambient: f64,
    /// Oxygen drop (vol-%) per ppm of CO2 excess.
    pub o2_coupling: f64,
    pub humidity_abs_ambient: f64,
    /// g/m³ added per person per sample.
    pub humidity_emission: f64,
    pub indoor_temperature: f64,
    pub outdoor_temperature: f64,
    /// Relaxation rate toward the outdoor temperature while a window is open.
    pub temperature_open_rate: f64,
    /// Relaxation rate back toward the indoor set point.
    pub temperature_closed_rate: f64,
    pub tvoc_ambient: f64,
    pub tvoc_emission: f64,
    pub sound_ambient: f64,
    pub sound_per_person: f64,
    pub sound_window: f64,
}

impl Default for Dynamics {
    fn default() -> Self {
        Self {
            co2_ambient: 420.0,
            co2_emission: 12.0,
            decay_closed: 0.01,
            decay_open: 0.12,
            o2_ambient: 20.9,
            o2_coupling: 4e-4,
            humidity_abs_ambient: 7.5,
            humidity_emission: 0.04,
            indoor_temperature: 21.0,
            outdoor_temperature: 6.0,
            temperature_open_rate: 0.1,
            temperature_closed_rate: 0.03,
            tvoc_ambient: 120.0,
            tvoc_emission: 6.0,
            sound_ambient: 34.0,
            sound_per_person: 12.0,
            sound_window: 6.0,
        }
    }
}

/// Runs of missing cells and gaps in the timeline, to exercise cleaning.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Corruption {
    /// Number of missing-value runs, each in one random channel.
    pub missing_runs: usize,
    pub missing_max_len: usize,
    /// Number of dropped row blocks.
    pub gaps: usize,
    pub gap_max_len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Number of samples (one every 120 s).
    pub samples: usize,
    pub start_timestamp: i64,
    pub device_id: String,
    /// Devices in a fleet corpus.
    pub devices: usize,
    pub schedule: EventSchedule,
    pub dynamics: Dynamics,
    /// Noise standard deviation per channel. CO2 noise enters its
    /// recurrence; every other channel gets it as observation noise.
    pub noise: BTreeMap<String, f64>,
    /// Standard deviation of per-device ambient jitter in fleets.
    pub jitter: f64,
    pub corruption: Corruption,
}

fn default_noise() -> BTreeMap<String, f64> {
    [
        ("pressure", 0.4),
        ("temperature", 0.05),
        ("sound", 1.0),
        ("tvoc", 4.0),
        ("oxygen", 0.005),
        ("humidity", 0.3),
        ("humidity_abs", 0.03),
        ("co2", 2.0),
        ("co", 0.05),
        ("so2", 0.2),
        ("no2", 0.5),
        ("o3", 1.0),
        ("pm2_5", 1.0),
        ("pm10", 1.5),
        ("pm1", 0.6),
        ("sound_max", 2.0),
        ("dewpt", 0.2),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            samples: 2_000,
            start_timestamp: 1_600_000_000 - 1_600_000_000 % SAMPLE_PERIOD_SECS,
            device_id: "synthetic-000".into(),
            devices: 1,
            schedule: EventSchedule::default(),
            dynamics: Dynamics::default(),
            noise: default_noise(),
            jitter: 1.0,
            corruption: Corruption::default(),
        }
    }
}

/// Ambient levels of the channels that carry no event signal.
const CHAFF_AMBIENT: [(&str, f64); 9] = [
    ("pressure", 1013.0),
    ("co", 0.4),
    ("so2", 2.0),
    ("no2", 12.0),
    ("o3", 30.0),
    ("pm2_5", 8.0),
    ("pm10", 14.0),
    ("pm1", 5.0),
    ("sound_max", 48.0),
];

const DEWPOINT_AMBIENT: f64 = 6.0;

impl ScenarioConfig {
    /// The reference scenario: seed 7, 20,000 samples, 20 fleet devices.
    pub fn bundled() -> Self {
        Self {
            seed: 7,
            samples: 20_000,
            devices: 20,
            device_id: "synthetic-bundled".into(),
            ..Self::default()
        }
    }

    /// Same scenario with every noise level set to zero.
    pub fn noiseless(mut self) -> Self {
        self.noise.values_mut().for_each(|v| *v = 0.0);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.schedule;
        let d = &self.dynamics;
        if self.samples == 0 {
            return Err(Error::config("samples must be >= 1"));
        }
        if s.occupancy_mean < 1.0 || s.vacancy_mean < 1.0 || s.window_mean < 1.0 {
            return Err(Error::config("mean durations must be >= 1 sample"));
        }
        if s.max_persons == 0 {
            return Err(Error::config("max_persons must be >= 1"));
        }
        for (name, p) in [
            ("window_open_probability", s.window_open_probability),
            ("window_event_rate", s.window_event_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        for (name, r) in [
            ("decay_closed", d.decay_closed),
            ("decay_open", d.decay_open),
            ("temperature_open_rate", d.temperature_open_rate),
            ("temperature_closed_rate", d.temperature_closed_rate),
        ] {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::config(format!("{name} must lie in (0, 1), got {r}")));
            }
        }
        if let Some((k, _)) = self
            .noise
            .iter()
            .find(|(k, v)| !SENSOR_CHANNELS.contains(&k.as_str()) || !(**v >= 0.0))
        {
            return Err(Error::config(format!("noise entry `{k}` is unknown or negative")));
        }
        if self.devices == 0 {
            return Err(Error::config("devices must be >= 1"));
        }
        Ok(())
    }

    fn noise_of(&self, channel: &str) -> f64 {
        self.noise.get(channel).copied().unwrap_or(0.0)
    }
}

/// Person count and window state per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Events {
    pub persons: Vec<u32>,
    pub window: Vec<bool>,
}

pub fn generate_events(cfg: &ScenarioConfig, rng: &mut SeededRng) -> Events {
    let s = &cfg.schedule;
    let n = cfg.samples;
    let mut persons = vec![0u32; n];
    let mut window = vec![false; n];
    let mut t = rng.duration(s.vacancy_mean).min(n);
    while t < n {
        let occ = rng.duration(s.occupancy_mean);
        let count = 1 + rng.index(s.max_persons as usize) as u32;
        let end = (t + occ).min(n);
        persons[t..end].fill(count);
        if rng.bernoulli(s.window_open_probability) {
            let open_at = t + rng.index(occ);
            let open_end = (open_at + rng.duration(s.window_mean)).min(n);
            if open_at < n {
                window[open_at..open_end].fill(true);
            }
        }
        t = end + rng.duration(s.vacancy_mean);
    }
    let mut t = 0;
    while t < n {
        if persons[t] == 0 && !window[t] && rng.bernoulli(s.window_event_rate) {
            let end = (t + rng.duration(s.window_mean)).min(n);
            window[t..end].fill(true);
            t = end;
        } else {
            t += 1;
        }
    }
    Events { persons, window }
}

/// Saturation absolute humidity (g/m³) at `t` °C.
fn saturation_humidity(t: f64) -> f64 {
    let es = 6.112 * (17.67 * t / (t + 243.5)).exp();
    216.74 * es / (273.15 + t)
}

/// Simulates all 17 channels for a given event schedule.
pub fn simulate(cfg: &ScenarioConfig, events: &Events, rng: &mut SeededRng) -> BTreeMap<String, Vec<f64>> {
    let d = &cfg.dynamics;
    let n = events.persons.len();
    let mut gauss = |sd: f64| if sd > 0.0 { sd * rng.normal() } else { 0.0 };
    let mut co2 = vec![0.0; n];
    let mut temp = vec![0.0; n];
    let mut hum_abs = vec![0.0; n];
    let mut tvoc = vec![0.0; n];
    let (mut c, mut tt, mut h, mut v) = (
        d.co2_ambient,
        d.indoor_temperature,
        d.humidity_abs_ambient,
        d.tvoc_ambient,
    );
    let co2_sd = cfg.noise_of("co2");
    for i in 0..n {
        co2[i] = c;
        temp[i] = tt;
        hum_abs[i] = h;
        tvoc[i] = v;
        let p = f64::from(events.persons[i]);
        let open = events.window[i];
        let decay = if open { d.decay_open } else { d.decay_closed };
        c = (c + d.co2_emission * p - decay * (c - d.co2_ambient) + gauss(co2_sd)).clamp(250.0, 10_000.0);
        h = (h + d.humidity_emission * p - decay * (h - d.humidity_abs_ambient)).max(0.0);
        v = (v + d.tvoc_emission * p - decay * (v - d.tvoc_ambient)).max(0.0);
        tt += if open {
            d.temperature_open_rate * (d.outdoor_temperature - tt)
        } else {
            d.temperature_closed_rate * (d.indoor_temperature - tt)
        };
    }
    let mut out = BTreeMap::new();
    let mut noisy = |name: &str, clean: Vec<f64>, gauss: &mut dyn FnMut(f64) -> f64| {
        let sd = cfg.noise_of(name);
        let series: Vec<f64> = clean.into_iter().map(|x| x + gauss(sd)).collect();
        out.insert(name.to_string(), series);
    };
    let rel_hum: Vec<f64> = hum_abs
        .iter()
        .zip(&temp)
        .map(|(h, t)| (100.0 * h / saturation_humidity(*t)).clamp(0.0, 100.0))
        .collect();
    let oxygen: Vec<f64> = co2
        .iter()
        .map(|c| d.o2_ambient - d.o2_coupling * (c - d.co2_ambient))
        .collect();
    let sound: Vec<f64> = (0..n)
        .map(|i| {
            d.sound_ambient
                + d.sound_per_person * f64::from(events.persons[i].min(1))
                + if events.window[i] { d.sound_window } else { 0.0 }
        })
        .collect();
    noisy("temperature", temp, &mut gauss);
    noisy("humidity_abs", hum_abs, &mut gauss);
    noisy("humidity", rel_hum, &mut gauss);
    noisy("tvoc", tvoc, &mut gauss);
    noisy("oxygen", oxygen, &mut gauss);
    noisy("sound", sound, &mut gauss);
    noisy("dewpt", vec![DEWPOINT_AMBIENT; n], &mut gauss);
    for (name, level) in CHAFF_AMBIENT {
        noisy(name, vec![level; n], &mut gauss);
    }
    // CO2 noise already entered the recurrence.
    out.insert("co2".into(), co2);
    out
}

/// One labeled frame: 17 channels plus `person` (count) and `window_open`.
pub fn generate_frame(cfg: &ScenarioConfig) -> Result<SensorFrame> {
    cfg.validate()?;
    let events = generate_events(cfg, &mut SeededRng::child(cfg.seed, 0));
    let mut series = simulate(cfg, &events, &mut SeededRng::child(cfg.seed, 1));
    let channels = SENSOR_CHANNELS
        .iter()
        .map(|name| Channel {
            name: name.to_string(),
            values: series.remove(*name).expect("every channel simulated"),
        })
        .collect();
    let timestamps = (0..cfg.samples as i64)
        .map(|i| cfg.start_timestamp + i * SAMPLE_PERIOD_SECS)
        .collect();
    let labels = vec![
        LabelSeries {
            name: "person".into(),
            values: events.persons.clone(),
        },
        LabelSeries {
            name: "window_open".into(),
            values: events.window.iter().map(|&w| u32::from(w)).collect(),
        },
    ];
    let frame = SensorFrame::new(&cfg.device_id, timestamps, channels, labels)?;
    Ok(corrupt(frame, &cfg.corruption, &mut SeededRng::child(cfg.seed, 2)))
}

fn corrupt(mut frame: SensorFrame, c: &Corruption, rng: &mut SeededRng) -> SensorFrame {
    let n = frame.len();
    if n == 0 {
        return frame;
    }
    for _ in 0..c.missing_runs {
        let ch = rng.index(frame.channels.len());
        let len = 1 + rng.index(c.missing_max_len.max(1));
        let start = rng.index(n);
        let end = (start + len).min(n);
        frame.channels[ch].values[start..end].fill(f64::NAN);
    }
    if c.gaps > 0 {
        let mut keep = vec![true; n];
        for _ in 0..c.gaps {
            let len = 1 + rng.index(c.gap_max_len.max(1));
            let start = rng.index(n);
            keep[start..(start + len).min(n)].fill(false);
        }
        frame = frame.filter_rows(&keep);
    }
    frame
}

/// Unlabeled frames for `devices` devices with per-device seeds and
/// jittered ambient levels.
pub fn generate_fleet(cfg: &ScenarioConfig, devices: usize) -> Result<Vec<SensorFrame>> {
    cfg.validate()?;
    if devices == 0 {
        return Err(Error::config("a fleet needs at least one device"));
    }
    par::map_indices(devices, |i| {
        let mut dev = cfg.clone();
        dev.seed = derive_seed(cfg.seed, i as u64);
        dev.device_id = format!("device-{i:03}");
        let mut rng = SeededRng::child(dev.seed, 3);
        let j = cfg.jitter;
        let d = &mut dev.dynamics;
        d.co2_ambient += 20.0 * j * rng.normal();
        d.indoor_temperature += j * rng.normal();
        d.outdoor_temperature += 2.0 * j * rng.normal();
        d.humidity_abs_ambient = (d.humidity_abs_ambient + 0.5 * j * rng.normal()).max(1.0);
        d.tvoc_ambient = (d.tvoc_ambient + 10.0 * j * rng.normal()).max(1.0);
        d.sound_ambient += 2.0 * j * rng.normal();
        generate_frame(&dev).map(|f| f.without_labels())
    })
    .into_iter()
    .collect()
}

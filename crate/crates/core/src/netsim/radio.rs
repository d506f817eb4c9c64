//! 2.4 GHz channel plan and the link reception model.
//!
//! Sensor motes use IEEE 802.15.4 (16 channels, 5 MHz apart, 2 MHz wide);
//! access points use the three non-overlapping IEEE 802.11b/g channels,
//! 22 MHz wide. A sensor channel whose center lies within 12 MHz of a Wi-Fi
//! center (11 MHz half-width plus 1 MHz) shares spectrum with it; each
//! such interferer scales a link's reception ratio by
//! `1 - penalty * activity`.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::NodeId;
use crate::error::{Error, Result};
use crate::scenario::RadioConfig;

pub const WIFI_CHANNELS: [u8; 3] = [1, 6, 11];
const WIFI_HALF_WIDTH_MHZ: f64 = 11.0;
const SENSOR_HALF_WIDTH_MHZ: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Standard {
    /// IEEE 802.11b/g, North American non-overlapping channel set.
    Wifi,
    /// IEEE 802.15.4, 2400 MHz PHY.
    Sensor,
}

pub fn channel_center_mhz(standard: Standard, channel: i32) -> Result<f64> {
    match standard {
        Standard::Sensor if (11..=26).contains(&channel) => {
            Ok(2405.0 + 5.0 * (channel - 11) as f64)
        }
        Standard::Wifi if matches!(channel, 1 | 6 | 11) => {
            Ok(2412.0 + 5.0 * (channel - 1) as f64)
        }
        Standard::Sensor => Err(Error::InvalidChannel {
            standard: "802.15.4",
            channel,
        }),
        Standard::Wifi => Err(Error::InvalidChannel {
            standard: "802.11",
            channel,
        }),
    }
}

pub fn overlaps(sensor_channel: i32, wifi_channel: i32) -> Result<bool> {
    let s = channel_center_mhz(Standard::Sensor, sensor_channel)?;
    let w = channel_center_mhz(Standard::Wifi, wifi_channel)?;
    Ok((s - w).abs() < WIFI_HALF_WIDTH_MHZ + SENSOR_HALF_WIDTH_MHZ)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interferer {
    pub channel: u8,
    pub activity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub sensor_channel: u8,
    pub interferers: Vec<Interferer>,
    pub penalty: f64,
}

impl ChannelConfig {
    pub fn clear(sensor_channel: u8) -> Self {
        Self {
            sensor_channel,
            interferers: Vec::new(),
            penalty: 0.5,
        }
    }

    /// Product of the per-interferer reception factors for this channel.
    pub fn interference_factor(&self) -> f64 {
        self.interferers
            .iter()
            .filter(|w| {
                w.activity > 0.0
                    && overlaps(self.sensor_channel as i32, w.channel as i32).unwrap_or(false)
            })
            .map(|w| 1.0 - self.penalty * w.activity)
            .product()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    pub from: NodeId,
    pub to: NodeId,
    pub base_prr: f64,
}

pub fn effective_prr(link: &LinkModel, cfg: &ChannelConfig) -> f64 {
    (link.base_prr * cfg.interference_factor()).clamp(0.0, 1.0)
}

/// One Bernoulli reception trial.
pub fn transmit<R: Rng + ?Sized>(prr: f64, rng: &mut R) -> bool {
    rng.random::<f64>() < prr
}

/// Directed links plus the channel context they operate in.
#[derive(Clone, Debug)]
pub struct Radio {
    links: BTreeMap<(NodeId, NodeId), f64>,
    neighbors: BTreeMap<NodeId, Vec<NodeId>>,
    channel: ChannelConfig,
    factor: f64,
}

impl Radio {
    pub fn new(cfg: &RadioConfig) -> Self {
        let channel = ChannelConfig {
            sensor_channel: cfg.sensor_channel,
            interferers: cfg
                .interferers
                .iter()
                .map(|w| Interferer {
                    channel: w.channel,
                    activity: w.activity,
                })
                .collect(),
            penalty: cfg.interference_penalty,
        };
        let mut radio = Self {
            links: BTreeMap::new(),
            neighbors: BTreeMap::new(),
            factor: channel.interference_factor(),
            channel,
        };
        for l in &cfg.links {
            radio.set_link(l.from, l.to, l.prr);
        }
        radio
    }

    pub fn set_link(&mut self, from: NodeId, to: NodeId, prr: f64) {
        if self.links.insert((from, to), prr).is_none() {
            let n = self.neighbors.entry(from).or_default();
            n.push(to);
            n.sort();
        }
    }

    pub fn set_sensor_channel(&mut self, channel: u8) {
        self.channel.sensor_channel = channel;
        self.factor = self.channel.interference_factor();
    }

    pub fn channel(&self) -> &ChannelConfig {
        &self.channel
    }

    pub fn link(&self, from: NodeId, to: NodeId) -> Option<LinkModel> {
        self.links.get(&(from, to)).map(|&base_prr| LinkModel {
            from,
            to,
            base_prr,
        })
    }

    /// Reception ratio from `from` to `to`; zero when no link exists.
    pub fn prr(&self, from: NodeId, to: NodeId) -> f64 {
        match self.links.get(&(from, to)) {
            Some(&base) => (base * self.factor).clamp(0.0, 1.0),
            None => 0.0,
        }
    }

    /// Nodes reachable from `from`, ascending by id.
    pub fn neighbors(&self, from: NodeId) -> &[NodeId] {
        self.neighbors.get(&from).map(Vec::as_slice).unwrap_or(&[])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // Channel table of IEEE 802.15.4-2003 (2450 MHz PHY) and the 802.11b
    // North American channel centers, written out rather than computed.
    const SENSOR_TABLE: [(i32, f64); 16] = [
        (11, 2405.0),
        (12, 2410.0),
        (13, 2415.0),
        (14, 2420.0),
        (15, 2425.0),
        (16, 2430.0),
        (17, 2435.0),
        (18, 2440.0),
        (19, 2445.0),
        (20, 2450.0),
        (21, 2455.0),
        (22, 2460.0),
        (23, 2465.0),
        (24, 2470.0),
        (25, 2475.0),
        (26, 2480.0),
    ];
    const WIFI_TABLE: [(i32, f64); 3] = [(1, 2412.0), (6, 2437.0), (11, 2462.0)];

    #[test]
    fn centers_match_channel_tables() {
        for (ch, f) in SENSOR_TABLE {
            assert_eq!(channel_center_mhz(Standard::Sensor, ch).unwrap(), f);
        }
        for (ch, f) in WIFI_TABLE {
            assert_eq!(channel_center_mhz(Standard::Wifi, ch).unwrap(), f);
        }
    }

    #[test]
    fn invalid_channels_rejected() {
        assert!(channel_center_mhz(Standard::Sensor, 10).is_err());
        assert!(channel_center_mhz(Standard::Sensor, 27).is_err());
        assert!(channel_center_mhz(Standard::Wifi, 3).is_err());
        assert!(overlaps(13, 2).is_err());
    }

    #[test]
    fn overlap_examples() {
        assert!(!overlaps(26, 11).unwrap());
        assert!(overlaps(13, 1).unwrap());
        assert!(!overlaps(15, 1).unwrap());
        assert!(!overlaps(15, 6).unwrap());
    }

    #[test]
    fn clear_channels_are_15_20_25_26() {
        let clear: Vec<i32> = (11..=26)
            .filter(|&s| WIFI_CHANNELS.iter().all(|&w| !overlaps(s, w as i32).unwrap()))
            .collect();
        assert_eq!(clear, [15, 20, 25, 26]);
    }

    fn link(p: f64) -> LinkModel {
        LinkModel {
            from: NodeId(1),
            to: NodeId(0),
            base_prr: p,
        }
    }

    fn all_wifi(sensor: u8, activity: f64) -> ChannelConfig {
        ChannelConfig {
            sensor_channel: sensor,
            interferers: WIFI_CHANNELS
                .iter()
                .map(|&channel| Interferer { channel, activity })
                .collect(),
            penalty: 0.5,
        }
    }

    #[test]
    fn effective_prr_examples() {
        assert_eq!(effective_prr(&link(0.9), &ChannelConfig::clear(13)), 0.9);
        let one = ChannelConfig {
            sensor_channel: 13,
            interferers: vec![Interferer {
                channel: 1,
                activity: 1.0,
            }],
            penalty: 0.5,
        };
        assert!((effective_prr(&link(0.9), &one) - 0.45).abs() < 1e-12);
        assert_eq!(effective_prr(&link(0.9), &all_wifi(26, 1.0)), 0.9);
    }

    #[test]
    fn transmit_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!((0..1000).all(|_| transmit(1.0, &mut rng)));
        assert!((0..1000).all(|_| !transmit(0.0, &mut rng)));
    }

    #[test]
    fn transmit_half_is_fair() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let hits = (0..10_000).filter(|_| transmit(0.5, &mut rng)).count();
        let frac = hits as f64 / 10_000.0;
        assert!((frac - 0.5).abs() <= 0.02, "{frac}");
    }

    mod prop {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn interference_never_helps(
                base in 0.0f64..=1.0,
                sensor in 11u8..=26,
                acts in proptest::collection::vec(0.0f64..=1.0, 3),
                penalty in 0.0f64..=1.0,
            ) {
                let cfg = ChannelConfig {
                    sensor_channel: sensor,
                    interferers: WIFI_CHANNELS.iter().zip(&acts)
                        .map(|(&channel, &activity)| Interferer { channel, activity })
                        .collect(),
                    penalty,
                };
                let eff = effective_prr(&link(base), &cfg);
                prop_assert!(eff <= base);
                let active_overlap = cfg.interferers.iter().any(|w| {
                    w.activity > 0.0 && overlaps(sensor as i32, w.channel as i32).unwrap()
                });
                if !active_overlap {
                    prop_assert_eq!(eff, base);
                }
            }

            #[test]
            fn last_channel_is_always_clear(w in proptest::sample::select(WIFI_CHANNELS.to_vec())) {
                prop_assert!(!overlaps(26, w as i32).unwrap());
            }
        }
    }
}

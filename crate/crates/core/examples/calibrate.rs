//! Pattern search over the plant constants of a scenario.
//!
//! Minimises the largest absolute error between steady-state zone
//! temperatures and the reference day/night means of sensors N9..N12,
//! with penalties when a 25 °C operating point is out of reach of the
//! units' setpoint range or would cost as much cooling as running every
//! unit at 20 °C.
//!
//! ```text
//! cargo run --release -p senvm-core --example calibrate -- [SCENARIO] [--write OUT]
//! ```
//!
//! Without arguments the bundled default scenario is refined and the
//! result printed. Which zone each unit reads and supplies stays as the
//! scenario defines it; only the numeric constants move.

use std::path::PathBuf;

use senvm_core::plant::Plant;
use senvm_core::scenario::PlantConfig;
use senvm_core::{NodeId, ScenarioConfig, SimTime, Temperature};

/// (node, day mean, night mean), °C.
const REFERENCE: [(u16, f64, f64); 4] = [
    (9, 19.72, 21.87),
    (10, 28.79, 27.37),
    (11, 24.03, 25.84),
    (12, 28.81, 27.46),
];
const TARGET: f64 = 25.0;
/// Coarse step for the search; steady states do not depend on it.
const SEARCH_DT_MS: u64 = 30_000;
const SETTLE: SimTime = SimTime::from_hours(48);

/// The searched constants. Front zones (even index) and rear zones share
/// their night/day load ratio and their leak.
#[derive(Clone, Debug)]
struct Params(Vec<f64>);

const NAMES: [&str; 16] = [
    "load_day[0]", "load_day[1]", "load_day[2]", "load_day[3]",
    "night_ratio_front", "night_ratio_rear",
    "g[0]", "g[1]", "g[2]", "g[3]",
    "leak_front", "leak_rear",
    "ambient", "gain", "setpoint[0]", "setpoint[1]",
];

impl Params {
    fn read(p: &PlantConfig) -> Self {
        let z = &p.zones;
        let mut v: Vec<f64> = z.iter().map(|z| z.load_day_w).collect();
        v.push(z[0].load_night_w / z[0].load_day_w);
        v.push(z[1].load_night_w / z[1].load_day_w);
        v.extend(p.couplings.iter().map(|c| c.conductance));
        v.push(z[0].leak_w_per_c);
        v.push(z[1].leak_w_per_c);
        v.push(p.ambient_c);
        v.push(p.acs[0].gain_w_per_c);
        v.extend(p.acs.iter().map(|a| a.setpoint_c));
        Params(v)
    }

    fn write(&self, p: &mut PlantConfig) {
        let v = &self.0;
        for (i, z) in p.zones.iter_mut().enumerate() {
            z.load_day_w = v[i];
            z.load_night_w = v[i] * v[4 + i % 2];
            z.leak_w_per_c = v[10 + i % 2];
        }
        for (c, g) in p.couplings.iter_mut().zip(&v[6..10]) {
            c.conductance = *g;
        }
        p.ambient_c = v[12];
        for (j, a) in p.acs.iter_mut().enumerate() {
            a.gain_w_per_c = v[13];
            a.setpoint_c = v[14 + j];
        }
    }
}

/// Settles `plant` under constant `day` or night loads. With `regulate`,
/// each unit's setpoint is trimmed once a minute so the warmest zone it
/// is steered by sits at the target.
fn settle(cfg: &PlantConfig, day: bool, regulate: bool, fixed: Option<f64>) -> Option<(Vec<f64>, f64, bool)> {
    let mut cfg = cfg.clone();
    cfg.dt_ms = SEARCH_DT_MS;
    cfg.noise_sigma_c = 0.0;
    if let Some(s) = fixed {
        cfg.acs.iter_mut().for_each(|a| a.setpoint_c = s);
    }
    let mut plant = Plant::new(&cfg).ok()?;
    for (i, z) in cfg.zones.iter().enumerate() {
        let l = if day { z.load_day_w } else { z.load_night_w };
        plant.set_load(i, l, l);
    }
    let steer: Vec<(String, Vec<usize>)> = cfg
        .acs
        .iter()
        .map(|a| {
            let zones = a.sensors.iter().filter_map(|n| plant.sensor_zone(*n)).collect();
            (a.id.clone(), zones)
        })
        .collect();
    let mut setpoints: Vec<f64> = cfg.acs.iter().map(|a| a.setpoint_c).collect();
    let (lo, hi) = Temperature::COMMAND_RANGE;
    let mut saturated = false;
    let minutes = SETTLE.millis() / SimTime::MS_PER_MINUTE;
    let mut cooling = 0.0;
    for m in 1..=minutes {
        plant.advance_to(SimTime::from_mins(m));
        if regulate {
            for (j, (id, zones)) in steer.iter().enumerate() {
                let warmest = zones.iter().map(|&z| plant.temperatures()[z]).fold(f64::MIN, f64::max);
                let s = (setpoints[j] - 0.1 * (warmest - TARGET)).clamp(lo, hi);
                saturated = s <= lo || s >= hi;
                setpoints[j] = s;
                plant.apply_setpoint(id, Temperature(s)).ok()?;
            }
        }
        if m + 60 > minutes {
            cooling += (0..cfg.acs.len()).map(|i| plant.cooling_w(i)).sum::<f64>();
        }
    }
    if !plant.temperatures().iter().all(|t| t.is_finite()) {
        return None;
    }
    Some((plant.temperatures().to_vec(), cooling / 60.0, saturated))
}

/// Largest reference error plus weighted penalties; lower is better.
fn objective(base: &PlantConfig, p: &Params) -> f64 {
    if p.0.iter().any(|x| *x < 0.0) {
        return f64::INFINITY;
    }
    let mut cfg = base.clone();
    p.write(&mut cfg);
    let zone_of = |node: u16| {
        cfg.sensors
            .iter()
            .find(|s| s.node == NodeId(node))
            .and_then(|s| cfg.zones.iter().position(|z| z.id == s.zone))
    };
    let mut err: f64 = 0.0;
    let mut penalty = 0.0;
    for day in [true, false] {
        let Some((open, _, _)) = settle(&cfg, day, false, None) else {
            return f64::INFINITY;
        };
        for (node, d, n) in REFERENCE {
            let Some(z) = zone_of(node) else {
                return f64::INFINITY;
            };
            err = err.max((open[z] - if day { d } else { n }).abs());
        }
        let (Some((held, q_held, saturated)), Some((_, q_cold, _))) =
            (settle(&cfg, day, true, None), settle(&cfg, day, false, Some(20.0)))
        else {
            return f64::INFINITY;
        };
        let worst = held.iter().map(|t| (t - TARGET).abs()).fold(0.0, f64::max);
        penalty += (worst - 0.5).max(0.0);
        if saturated {
            penalty += 1.0;
        }
        if q_held >= 0.95 * q_cold {
            penalty += 1.0;
        }
    }
    err + 3.0 * penalty
}

fn search(base: &PlantConfig, start: Params) -> (Params, f64) {
    let mut best = start;
    let mut score = objective(base, &best);
    let mut step = 0.1;
    while step > 1e-3 {
        let mut improved = false;
        for i in 0..best.0.len() {
            for dir in [1.0, -1.0] {
                let mut cand = best.clone();
                // Setpoints and ambient move additively, the rest relatively.
                if i >= 12 && i != 13 {
                    cand.0[i] += dir * step * 5.0;
                } else {
                    cand.0[i] *= 1.0 + dir * step;
                }
                let s = objective(base, &cand);
                if s < score {
                    best = cand;
                    score = s;
                    improved = true;
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
        eprintln!("step {step:.4}  objective {score:.4}");
    }
    (best, score)
}

fn main() {
    let mut args = std::env::args().skip(1);
    let mut scenario = ScenarioConfig::fig9();
    let mut write: Option<PathBuf> = None;
    while let Some(a) = args.next() {
        match a.as_str() {
            "--write" => write = args.next().map(PathBuf::from),
            path => scenario = ScenarioConfig::load(path).expect("readable scenario"),
        }
    }
    let start = Params::read(&scenario.plant);
    let (best, score) = search(&scenario.plant, start);
    for (name, v) in NAMES.iter().zip(&best.0) {
        println!("{name:<18} {v:>10.3}");
    }
    println!("objective {score:.4}");

    best.write(&mut scenario.plant);
    for day in [true, false] {
        let (open, _, _) = settle(&scenario.plant, day, false, None).expect("stable plant");
        let label = if day { "day" } else { "night" };
        let temps: Vec<String> = open.iter().map(|t| format!("{t:.2}")).collect();
        println!("{label:<6} {}", temps.join(" "));
    }
    if let Some(out) = write {
        std::fs::write(&out, scenario.to_json_pretty() + "\n").expect("writable output");
        println!("wrote {}", out.display());
    }
}

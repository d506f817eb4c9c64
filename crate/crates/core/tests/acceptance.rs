//! End-to-end acceptance checks. Runs as its own binary so every check
//! prints one PASS/FAIL line whether or not it succeeds.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use senvm_core::basestation::{BaseEvent, ReadingRecord, ReadingStore, CSV_HEADER};
use senvm_core::scenario::{InterfererConfig, ScriptAction, ScriptStep, TraceLevel};
use senvm_core::sim::{run_to_dir, RunOutputs, Summary};
use senvm_core::{NodeId, NodeRole, PowerSource, ScenarioConfig, SimTime, World};

type Outcome = Result<String, String>;
type Criterion = fn(&mut Ctx) -> Outcome;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sha(p: &Path) -> String {
    hex::encode(Sha256::digest(std::fs::read(p).expect("output exists")))
}

/// Hashes of a run's trace and readings export.
fn digests(out: &RunOutputs) -> (String, String) {
    (sha(&out.trace), sha(&out.readings))
}

/// Outputs of the first run of each scenario that determinism re-checks.
struct Ctx {
    dir: tempfile::TempDir,
    firsts: BTreeMap<&'static str, (ScenarioConfig, (String, String))>,
}

impl Ctx {
    fn run(&mut self, key: &'static str, s: ScenarioConfig) -> (RunOutputs, Summary) {
        let dir = self.dir.path().join(key);
        let (out, summary) = run_to_dir(s.clone(), &dir).expect("scenario runs");
        self.firsts.insert(key, (s, digests(&out)));
        (out, summary)
    }

    fn rerun_dir(&self, key: &str) -> PathBuf {
        self.dir.path().join(format!("{key}-again"))
    }
}

fn reliability(ctx: &mut Ctx) -> Outcome {
    let mut s = ScenarioConfig::fig9();
    s.set_all_links(0.7);
    s.ctp.max_attempts = 30;
    s.run.duration_ms = SimTime::from_hours(1).millis();
    let sensors: Vec<NodeId> = s.nodes.iter().filter(|n| n.role == NodeRole::Sensor).map(|n| n.id).collect();
    for n in &s.nodes {
        if n.role == NodeRole::Sensor {
            assert_eq!(n.sample_period_ms(), Some(500), "sensors sample 120 times a minute");
        }
    }
    let started = Instant::now();
    let (_, summary) = ctx.run("reliability", s);
    let wall = started.elapsed().as_secs_f64();
    let mut worst = (NodeId(0), f64::INFINITY);
    for n in summary.nodes.iter().filter(|n| n.originated > 0) {
        let r = n.delivered as f64 / n.originated as f64;
        if r < worst.1 {
            worst = (n.id, r);
        }
    }
    let all_sensors = sensors
        .iter()
        .all(|id| summary.nodes.iter().any(|n| n.id == *id && n.originated > 0));
    check(
        worst.1 > 0.90 && wall < 30.0 && all_sensors,
        format!("lowest origin ratio {:.4} ({}), wall {wall:.1} s", worst.1, worst.0),
    )
}

fn parent_switch(_: &mut Ctx) -> Outcome {
    let mut s = ScenarioConfig::fig9();
    s.run.trace = TraceLevel::Off;
    let at = SimTime::from_mins(10);
    s.script.push(ScriptStep {
        at_ms: at.millis(),
        action: ScriptAction::SetLinkPrr {
            from: NodeId(11),
            to: NodeId(0),
            prr: 0.1,
        },
    });
    let mut w = World::new(s).expect("valid scenario");
    w.run_until(SimTime::from_mins(10)).expect("runs");
    let before = w.ctp(NodeId(11)).and_then(|c| c.parent());
    w.run_until(SimTime::from_mins(21)).expect("runs");
    let switch = w
        .parent_switches()
        .iter()
        .find(|p| p.node == NodeId(11) && p.t >= at.millis())
        .cloned();
    let ratio = w.delivery_ratio(NodeId(11), at, SimTime::from_mins(20)).unwrap_or(0.0);
    let Some(sw) = switch else {
        return Err(format!("N11 never switched (parent before {before:?})"));
    };
    let delay = sw.t - at.millis();
    check(
        before == Some(NodeId(0)) && sw.to == Some(NodeId(1)) && delay <= 60_000 && ratio > 0.90,
        format!(
            "N11 {:?} -> {:?} after {:.1} s, delivery {ratio:.4} over next 10 min",
            sw.from,
            sw.to,
            delay as f64 / 1000.0
        ),
    )
}

fn worked_example(_: &mut Ctx) -> Outcome {
    let mut s = ScenarioConfig::fig9();
    s.run.trace = TraceLevel::Off;
    s.controller.enabled = true;
    s.controller.target_c = 25.0;
    let mut w = World::new(s).expect("valid scenario");
    w.base_mut().stub_measurement(Some(26.0));
    w.run_until(SimTime::from_mins(20)).expect("runs");
    let cmds: Vec<(u64, f64)> = w
        .base()
        .events()
        .iter()
        .filter_map(|e| match e {
            BaseEvent::Command { t, ac, value, .. } if ac == "ac-1" => Some((*t, *value)),
            _ => None,
        })
        .collect();
    let values: Vec<f64> = cmds.iter().map(|c| c.1).collect();
    let expect: Vec<f64> = (0..13).map(|k| 24.0 - 0.5 * k as f64).collect();
    let spaced = cmds.windows(2).all(|p| p[1].0 - p[0].0 == 60_000);
    check(
        values == expect && spaced && cmds.first().map(|c| c.0) == Some(60_000),
        format!("{} commands {:?}..{:?}, 60 s spacing {spaced}", values.len(), values.first(), values.last()),
    )
}

/// Shared writer so the trace can be read back after the run.
#[derive(Clone, Default)]
struct Buf(std::sync::Arc<std::sync::Mutex<Vec<u8>>>);

impl std::io::Write for Buf {
    fn write(&mut self, b: &[u8]) -> std::io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(b);
        Ok(b.len())
    }
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

/// Last time the sink heard anything from `node`, reconstructed from a
/// full trace: frames it originated that were delivered, and successful
/// hops from it straight into the sink that produced a delivery.
fn last_heard(trace: &str, node: u16, before: u64) -> Option<u64> {
    let mut pending: BTreeMap<(u64, u64, u64), bool> = BTreeMap::new();
    let mut last = None;
    for line in trace.lines() {
        let v: serde_json::Value = serde_json::from_str(line).expect("trace is JSON");
        let t = v["t"].as_u64().unwrap();
        if t > before {
            break;
        }
        let d = &v["detail"];
        match v["kind"].as_str().unwrap() {
            "tx" if v["node"] == node && d["to"] == 0 && d["ok"] == true => {
                pending.insert((t, d["origin"].as_u64().unwrap(), d["seqno"].as_u64().unwrap()), true);
            }
            "deliver" => {
                let key = (t, d["origin"].as_u64().unwrap(), d["seqno"].as_u64().unwrap());
                if d["origin"] == node || pending.remove(&key).is_some() {
                    last = Some(t);
                }
            }
            _ => {}
        }
    }
    last
}

fn dead_node(_: &mut Ctx) -> Outcome {
    let silence = |resume_after: Option<u64>| {
        let mut s = ScenarioConfig::fig9();
        s.run.trace = TraceLevel::Full;
        let at = SimTime::from_mins(10).millis();
        s.script.push(ScriptStep {
            at_ms: at,
            action: ScriptAction::Silence { node: NodeId(11) },
        });
        if let Some(d) = resume_after {
            s.script.push(ScriptStep {
                at_ms: at + d,
                action: ScriptAction::Resume { node: NodeId(11) },
            });
        }
        let buf = Buf::default();
        let period = s.controller.liveness_check_ms;
        let mut w = World::new(s).expect("valid scenario").with_trace(Box::new(buf.clone()));
        w.run_until(SimTime::from_mins(22)).expect("runs");
        let dead: Vec<u64> = w
            .base()
            .events()
            .iter()
            .filter_map(|e| match e {
                BaseEvent::DeadNode { t, node, .. } if *node == NodeId(11) => Some(*t),
                _ => None,
            })
            .collect();
        let trace = String::from_utf8(buf.0.lock().unwrap().clone()).unwrap();
        (dead, trace, at, period)
    };

    let (dead, trace, at, period) = silence(None);
    let Some(seen) = last_heard(&trace, 11, at + 1_000) else {
        return Err("N11 never heard before silencing".into());
    };
    // First detection pass strictly more than five minutes after last contact.
    let expect = ((seen + 300_000) / period + 1) * period;
    let (dead_resumed, _, _, _) = silence(Some(299_000));
    check(
        dead == [expect] && dead_resumed.is_empty(),
        format!(
            "last heard {seen}, dead_node at {dead:?} (expected [{expect}]); 299 s gap gives {} events",
            dead_resumed.len()
        ),
    )
}

fn quantization(ctx: &mut Ctx) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = ReadingStore::new();
    for _ in 0..1_000_000 {
        let ts = rng.random_range(0..=u64::from(u32::MAX) * 1_000);
        let id = rng.random_range(1..=64u16);
        store.insert(ReadingRecord::new(NodeId(id), ts, 25.0, 50.0, 100.0));
    }
    let mut csv = Vec::new();
    store.write_csv(&mut csv).expect("in-memory write");
    let text = String::from_utf8(csv).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    let mut bad = 0usize;
    let mut rows = 0usize;
    for line in lines {
        let f: Vec<u64> = line.split(',').take(5).map(|x| x.parse().unwrap()).collect();
        let (ts, minute, hour, day) = (f[1], f[2], f[3], f[4]);
        let within = |q: u64, unit: u64| q * unit <= ts && ts < (q + 1) * unit;
        if !(within(minute, 60_000) && within(hour, 3_600_000) && within(day, 86_400_000)) {
            bad += 1;
        }
        rows += 1;
    }
    let exported = std::fs::read_to_string(ctx.dir.path().join("reliability").join("readings.csv")).ok();
    let run_header = exported.as_deref().and_then(|t| t.lines().next()).unwrap_or("");
    let exact = "id,timestamp,minute,hour,day,temperature,humidity,intensity";
    check(
        bad == 0 && rows > 990_000 && header == exact && CSV_HEADER == exact && run_header == exact,
        format!("{rows} rows, {bad} bound violations, header exact {}", header == exact && run_header == exact),
    )
}

fn table_one(ctx: &mut Ctx) -> Outcome {
    let mut s = ScenarioConfig::fig9();
    s.run.duration_ms = SimTime::from_days(3).millis();
    s.run.seed = 1;
    let (_, summary) = ctx.run("table1", s);
    let reference = [(9, 19.72, 21.87), (10, 28.79, 27.37), (11, 24.03, 25.84), (12, 28.81, 27.46)];
    let mut worst: f64 = 0.0;
    let mut cells = Vec::new();
    for (node, day, night) in reference {
        let Some(r) = summary.day_night.iter().find(|r| r.node == node) else {
            return Err(format!("no readings from N{node}"));
        };
        let (d, n) = (r.day_mean.unwrap_or(f64::NAN), r.night_mean.unwrap_or(f64::NAN));
        worst = worst.max((d - day).abs()).max((n - night).abs());
        cells.push(format!("N{node} {d:.2}/{n:.2}"));
    }
    check(worst <= 1.0, format!("{}; max error {worst:.2} °C", cells.join(", ")))
}

fn interference(ctx: &mut Ctx) -> Outcome {
    let mut base = ScenarioConfig::interference();
    base.radio.interferers = [1, 6, 11]
        .into_iter()
        .map(|channel| InterfererConfig { channel, activity: 1.0 })
        .collect();
    let mut ch13 = base.clone();
    ch13.radio.sensor_channel = 13;
    let mut ch26 = base.clone();
    ch26.radio.sensor_channel = 26;
    let mut quiet = ch26.clone();
    quiet.radio.interferers.clear();
    let (_, s13) = ctx.run("interference-13", ch13);
    let (_, s26) = ctx.run("interference-26", ch26);
    let (_, sq) = ctx.run("interference-quiet", quiet);
    let (r13, r26, rq) = (
        s13.delivery_ratio.unwrap_or(f64::NAN),
        s26.delivery_ratio.unwrap_or(f64::NAN),
        sq.delivery_ratio.unwrap_or(f64::NAN),
    );
    check(
        r13 < r26 && r26 == rq,
        format!("ch13 {r13:.4}, ch26 {r26:.4}, ch26 without Wi-Fi {rq:.4}"),
    )
}

fn battery(_: &mut Ctx) -> Outcome {
    let mut s = ScenarioConfig::battery();
    s.run.trace = TraceLevel::Off;
    let power: BTreeMap<NodeId, PowerSource> = s.nodes.iter().map(|n| (n.id, n.power)).collect();
    let mut w = World::new(s).expect("valid scenario");
    w.run().expect("runs");
    let summary = w.summary();
    let day = SimTime::MS_PER_DAY as f64;
    let mut cells = Vec::new();
    let mut ok = summary.nodes.iter().any(|n| power[&n.id] == PowerSource::Battery);
    for n in &summary.nodes {
        match (power[&n.id], n.depleted_at_ms) {
            (PowerSource::Battery, Some(t)) => {
                let d = t as f64 / day;
                ok &= (3.0..=4.0).contains(&d);
                cells.push(format!("{} {d:.2} d", n.id));
            }
            (PowerSource::Battery, None) => {
                ok = false;
                cells.push(format!("{} never", n.id));
            }
            (_, Some(_)) => {
                ok = false;
                cells.push(format!("{} line-powered but depleted", n.id));
            }
            (_, None) => {}
        }
    }
    check(ok, cells.join(", "))
}

fn closed_loop(_: &mut Ctx) -> Outcome {
    let mut s = ScenarioConfig::fig9();
    s.run.trace = TraceLevel::Off;
    s.controller.enabled = true;
    s.controller.target_c = 25.0;
    let six = SimTime::from_hours(6);
    let mut w = World::new(s.clone()).expect("valid scenario");
    w.run_until(six).expect("runs");
    let mut worst_mean: f64 = 0.0;
    let mut lowest = f64::INFINITY;
    let mut cells = Vec::new();
    for (i, minutes) in w.zone_minute_means().iter().enumerate() {
        let tail = &minutes[minutes.len().saturating_sub(60)..];
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        worst_mean = worst_mean.max((mean - 25.0).abs());
        lowest = minutes.iter().copied().fold(lowest, f64::min);
        cells.push(format!("{} {mean:.2}", s.plant.zones[i].id));
    }
    let controlled = w.plant().total_cooling_energy_j();

    let mut cold = s.clone();
    cold.controller.enabled = false;
    for a in &mut cold.plant.acs {
        a.setpoint_c = 20.0;
    }
    let mut w = World::new(cold).expect("valid scenario");
    w.run_until(six).expect("runs");
    let overcooled = w.plant().total_cooling_energy_j();
    check(
        worst_mean <= 1.0 && lowest >= 20.0 && controlled < overcooled,
        format!(
            "last hour {}; coldest minute {lowest:.2}; cooling {:.1} MJ vs {:.1} MJ at 20 °C",
            cells.join(", "),
            controlled / 1e6,
            overcooled / 1e6
        ),
    )
}

fn determinism(ctx: &mut Ctx) -> Outcome {
    let mut cells = Vec::new();
    let mut ok = true;
    let keys = ["reliability", "table1", "interference-13", "interference-26", "interference-quiet"];
    for key in keys {
        let Some((s, first)) = ctx.firsts.get(key).cloned() else {
            ok = false;
            cells.push(format!("{key}: no first run"));
            continue;
        };
        let (out, _) = run_to_dir(s, &ctx.rerun_dir(key)).expect("scenario runs");
        let again = digests(&out);
        let same = again == first;
        let traced = std::fs::metadata(&out.trace).map(|m| m.len() > 0).unwrap_or(false);
        ok &= same && traced;
        cells.push(format!("{key} {}", if same { "identical" } else { "DIFFERS" }));
    }
    check(ok, cells.join(", "))
}

fn main() {
    let mut ctx = Ctx {
        dir: tempfile::tempdir().expect("temp dir"),
        firsts: BTreeMap::new(),
    };
    let criteria: [(&str, Criterion); 10] = [
        ("collection reliability", reliability),
        ("parent switching", parent_switch),
        ("controller worked example", worked_example),
        ("dead-node boundary", dead_node),
        ("timestamp quantization", quantization),
        ("day/night table replication", table_one),
        ("interference remedy", interference),
        ("battery lifetime", battery),
        ("closed-loop regulation", closed_loop),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| f(&mut ctx)))
            .unwrap_or_else(|p| {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                Err(format!("panicked: {msg}"))
            });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS {:>2} {name}: {d} [{secs:.1} s]", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {d} [{secs:.1} s]", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

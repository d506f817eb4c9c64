use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use serde_json::Value;
use sha2::{Digest, Sha256};

const BIN: &str = env!("CARGO_BIN_EXE_senvm");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/scenarios")
        .join(name)
}

fn senvm(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn load(name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap()
}

fn save(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn run(scenario: &Path, seed: &str, duration: &str, out: &Path) -> Output {
    senvm(&["run", "--scenario", path(scenario), "--seed", seed, "--duration", duration, "--out", path(out)])
}

fn sha(p: &Path) -> String {
    hex::encode(Sha256::digest(std::fs::read(p).unwrap()))
}

fn report_ratio(stdout: &[u8]) -> f64 {
    let text = String::from_utf8_lossy(stdout);
    let line = text.lines().find(|l| l.starts_with("delivery ratio:")).unwrap();
    line.rsplit(' ').next().unwrap().parse().unwrap()
}

#[test]
fn zero_duration_gives_empty_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&fixture("fig9.scenario"), "1", "0", dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let read = |f: &str| std::fs::read_to_string(dir.path().join(f)).unwrap();
    assert_eq!(read("trace.jsonl"), "");
    assert_eq!(read("events.jsonl"), "");
    assert_eq!(read("readings.csv"), "id,timestamp,minute,hour,day,temperature,humidity,intensity\n");
    let summary: Value = serde_json::from_str(&read("summary.json")).unwrap();
    assert_eq!(summary["readings"], 0);
}

#[test]
fn missing_sink_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = load("fig9.scenario");
    s["nodes"].as_array_mut().unwrap().retain(|n| n["role"] != "sink");
    let p = save(dir.path(), "nosink.scenario", &s);
    let out = run(&p, "1", "1min", &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no sink"));
}

#[test]
fn two_sinks_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = load("fig9.scenario");
    s["nodes"][1]["role"] = "sink".into();
    let p = save(dir.path(), "twosinks.scenario", &s);
    let out = senvm(&["validate", "--scenario", path(&p)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("multiple sinks"));
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = load("fig9.scenario");
    s["radio"]["bogus"] = 1.into();
    let p = save(dir.path(), "bogus.scenario", &s);
    assert_eq!(senvm(&["validate", "--scenario", path(&p)]).status.code(), Some(2));
}

#[test]
fn bundled_fixtures_validate() {
    for f in ["fig9.scenario", "interference.scenario", "battery.scenario"] {
        let out = senvm(&["validate", "--scenario", path(&fixture(f))]);
        assert!(out.status.success(), "{f}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn report_without_outputs_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(senvm(&["report", path(dir.path())]).status.code(), Some(2));
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = load("fig9.scenario");
    s["run"]["trace"] = "full".into();
    let p = save(dir.path(), "full.scenario", &s);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run(&p, "7", "20min", &a).status.success());
    assert!(run(&p, "7", "20min", &b).status.success());
    for f in ["trace.jsonl", "readings.csv", "events.jsonl"] {
        assert_eq!(sha(&a.join(f)), sha(&b.join(f)), "{f}");
    }
    assert!(std::fs::metadata(a.join("trace.jsonl")).unwrap().len() > 0);
}

/// Day/night means straight from the CSV text, keyed by node.
fn recompute(csv: &str, day: (u64, u64)) -> BTreeMap<u64, (f64, f64)> {
    let mut acc: BTreeMap<u64, [f64; 4]> = BTreeMap::new();
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let id: u64 = f[0].parse().unwrap();
        let ts: u64 = f[1].parse().unwrap();
        let t: f64 = f[5].parse().unwrap();
        let hour = ts / 3_600_000 % 24;
        let a = acc.entry(id).or_default();
        if hour >= day.0 && hour < day.1 {
            a[0] += t;
            a[1] += 1.0;
        } else {
            a[2] += t;
            a[3] += 1.0;
        }
    }
    acc.into_iter()
        .map(|(id, a)| (id, (a[0] / a[1], a[2] / a[3])))
        .collect()
}

fn report_rows(stdout: &[u8]) -> BTreeMap<u64, (f64, f64)> {
    String::from_utf8_lossy(stdout)
        .lines()
        .filter_map(|l| {
            let mut it = l.split_whitespace();
            let id = it.next()?.strip_prefix('N')?.parse().ok()?;
            Some((id, (it.next()?.parse().ok()?, it.next()?.parse().ok()?)))
        })
        .collect()
}

#[test]
fn report_matches_recomputation_and_reference_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert!(run(&fixture("fig9.scenario"), "1", "3d", &out).status.success());
    let rep = senvm(&["report", path(&out)]);
    assert!(rep.status.success());
    let rows = report_rows(&rep.stdout);
    assert_eq!(rows.keys().copied().collect::<Vec<_>>(), vec![9, 10, 11, 12]);

    let csv = std::fs::read_to_string(out.join("readings.csv")).unwrap();
    let oracle = recompute(&csv, (8, 20));
    for (id, (d, n)) in &rows {
        let (od, on) = oracle[id];
        assert!((d - od).abs() <= 0.005 && (n - on).abs() <= 0.005, "N{id}: {d} {n} vs {od} {on}");
    }

    // Day/night averages from the deployment's three-day statistics table.
    let table = [(9, 19.72, 21.87), (10, 28.79, 27.37), (11, 24.03, 25.84), (12, 28.81, 27.46)];
    for (id, day, night) in table {
        let (d, n) = rows[&id];
        assert!((d - day).abs() <= 1.0 && (n - night).abs() <= 1.0, "N{id}: {d} {n}");
    }
}

#[test]
fn perfect_links_deliver_everything() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = load("fig9.scenario");
    for l in s["radio"]["links"].as_array_mut().unwrap() {
        l["prr"] = 1.0.into();
    }
    let p = save(dir.path(), "perfect.scenario", &s);
    let out = dir.path().join("out");
    assert!(run(&p, "1", "30min", &out).status.success());
    let rep = senvm(&["report", path(&out)]);
    assert!(String::from_utf8_lossy(&rep.stdout).contains("delivery ratio: 1.000"));
}

#[test]
fn overlapping_channel_lowers_delivery() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = load("interference.scenario");
    s["radio"]["interferers"] = serde_json::json!([{ "channel": 1, "activity": 1.0 }]);
    let ratio = |channel: i64, name: &str| {
        let mut s = s.clone();
        s["radio"]["sensor_channel"] = channel.into();
        let p = save(dir.path(), name, &s);
        let out = dir.path().join(name).with_extension("out");
        assert!(run(&p, "3", "30min", &out).status.success());
        report_ratio(&senvm(&["report", path(&out)]).stdout)
    };
    let (ch13, ch26) = (ratio(13, "ch13.scenario"), ratio(26, "ch26.scenario"));
    assert!(ch13 < ch26, "{ch13} vs {ch26}");
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn http(port: u16, req: &str) -> Option<String> {
    let mut s = TcpStream::connect(("127.0.0.1", port)).ok()?;
    s.set_read_timeout(Some(Duration::from_secs(5))).ok()?;
    s.write_all(req.as_bytes()).ok()?;
    let mut out = String::new();
    s.read_to_string(&mut out).ok()?;
    Some(out)
}

#[test]
fn serve_with_busy_port_exits_3() {
    let held = TcpListener::bind("0.0.0.0:0").unwrap();
    let port = held.local_addr().unwrap().port().to_string();
    let dir = tempfile::tempdir().unwrap();
    let out = senvm(&[
        "serve",
        "--scenario",
        path(&fixture("fig9.scenario")),
        "--port",
        &port,
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[cfg(unix)]
#[test]
fn serve_answers_and_flushes_on_terminate() {
    let dir = tempfile::tempdir().unwrap();
    let port = free_port();
    let mut child = Command::new(BIN)
        .args(["serve", "--scenario", path(&fixture("fig9.scenario")), "--speed", "600"])
        .args(["--port", &port.to_string(), "--out", path(dir.path())])
        .env("RUST_LOG", "warn")
        .spawn()
        .unwrap();

    let started = Instant::now();
    let status = loop {
        let get = "GET /api/status HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n";
        if let Some(r) = http(port, get) {
            if r.starts_with("HTTP/1.1 200") {
                break r;
            }
        }
        assert!(started.elapsed() < Duration::from_secs(20), "server never came up");
        std::thread::sleep(Duration::from_millis(50));
    };
    assert!(status.contains("\"sim_time_ms\""));

    let body = r#"{"ac":"ac-1","value":26}"#;
    let post = format!(
        "POST /api/setpoint HTTP/1.1\r\nHost: x\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    assert!(http(port, &post).unwrap().starts_with("HTTP/1.1 200"));

    let killed = Command::new("kill").args(["-TERM", &child.id().to_string()]).status().unwrap();
    assert!(killed.success());
    let code = child.wait().unwrap();
    assert_eq!(code.code(), Some(0));
    for f in ["trace.jsonl", "readings.csv", "events.jsonl", "summary.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let csv = std::fs::read_to_string(dir.path().join("readings.csv")).unwrap();
    assert!(csv.lines().count() > 1);
}

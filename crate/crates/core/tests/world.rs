use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex};

use proptest::prelude::*;
use serde_json::Value;

use senvm_core::basestation::BaseEvent;
use senvm_core::scenario::TraceLevel;
use senvm_core::{NodeId, PowerSource, ScenarioConfig, SimTime, World};

#[derive(Clone, Default)]
struct Buf(Arc<Mutex<Vec<u8>>>);

impl std::io::Write for Buf {
    fn write(&mut self, b: &[u8]) -> std::io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(b);
        Ok(b.len())
    }
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

fn traced(s: ScenarioConfig, until: SimTime) -> (World, Vec<Value>) {
    let buf = Buf::default();
    let mut w = World::new(s).unwrap().with_trace(Box::new(buf.clone()));
    w.run_until(until).unwrap();
    let text = String::from_utf8(buf.0.lock().unwrap().clone()).unwrap();
    let records = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    (w, records)
}

fn key(d: &Value) -> (u64, u64) {
    (d["origin"].as_u64().unwrap(), d["seqno"].as_u64().unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn trace_invariants(seed in 0u64..1_000, prr in 0.5f64..1.0) {
        let mut s = ScenarioConfig::fig9();
        s.run.seed = seed;
        s.run.trace = TraceLevel::Full;
        s.controller.enabled = true;
        s.set_all_links(prr);
        let declared: BTreeSet<u64> = s.nodes.iter().map(|n| u64::from(n.id.0)).collect();
        let (w, trace) = traced(s, SimTime::from_mins(5));

        let mut last = (0u64, 0u64);
        let mut hops: BTreeMap<(u64, u64), u64> = BTreeMap::new();
        let mut delivered = BTreeSet::new();
        for r in &trace {
            let at = (r["t"].as_u64().unwrap(), r["seq"].as_u64().unwrap());
            prop_assert!(at > last, "trace out of order at {at:?}");
            last = at;
            if let Some(n) = r["node"].as_u64() {
                prop_assert!(declared.contains(&n), "undeclared node {n}");
            }
            let d = &r["detail"];
            match r["kind"].as_str().unwrap() {
                "tx" if d["frame"] == "data" && d["ok"] == true => {
                    *hops.entry(key(d)).or_default() += 1;
                }
                "deliver" => {
                    prop_assert!(delivered.insert(key(d)), "duplicate delivery {:?}", key(d));
                    // Each successful forwarding is one radio hop.
                    prop_assert_eq!(d["thl"].as_u64(), hops.get(&key(d)).copied());
                }
                _ => {}
            }
        }
        prop_assert!(!delivered.is_empty());
        for e in w.base().events() {
            if let BaseEvent::Command { value, .. } = e {
                prop_assert!((18.0..=30.0).contains(value));
            }
        }
    }
}

#[test]
fn lossless_links_form_a_tree() {
    let mut s = ScenarioConfig::fig9();
    s.run.trace = TraceLevel::Off;
    s.set_all_links(1.0);
    let ids: Vec<NodeId> = s.nodes.iter().map(|n| n.id).collect();
    let mut w = World::new(s).unwrap();
    w.run_until(SimTime::from_mins(2)).unwrap();
    for &id in ids.iter().filter(|id| !id.is_sink()) {
        let mut at = id;
        let mut steps = 0;
        while !at.is_sink() {
            let ctp = w.ctp(at).unwrap();
            assert!(ctp.path_etx().is_finite(), "{at} has no finite path");
            at = ctp.parent().unwrap_or_else(|| panic!("{at} has no parent"));
            steps += 1;
            assert!(steps <= ids.len(), "cycle through {id}");
        }
    }
}

#[test]
fn depleted_nodes_fall_silent() {
    let mut s = ScenarioConfig::fig9();
    s.run.trace = TraceLevel::Full;
    s.energy.battery_budget_mj = 20_000.0;
    for n in s.nodes.iter_mut().filter(|n| n.id == NodeId(9) || n.id == NodeId(10)) {
        n.power = PowerSource::Battery;
    }
    let (w, trace) = traced(s, SimTime::from_mins(10));
    let mut dead_at: BTreeMap<u64, u64> = BTreeMap::new();
    for r in &trace {
        let t = r["t"].as_u64().unwrap();
        let node = r["node"].as_u64();
        if r["kind"] == "depleted" {
            dead_at.insert(node.unwrap(), t);
            continue;
        }
        if r["kind"] == "tx" {
            let from = node.unwrap();
            let to = r["detail"]["to"].as_u64().unwrap();
            assert!(!dead_at.contains_key(&from), "N{from} sent after depletion at {t}");
            if r["detail"]["ok"] == true {
                assert!(!dead_at.contains_key(&to), "N{to} received after depletion at {t}");
            }
        }
    }
    assert_eq!(dead_at.keys().copied().collect::<Vec<_>>(), vec![9, 10]);
    assert!(w.energy(NodeId(9)).unwrap().is_depleted());
}

#[test]
fn same_seed_same_trace_different_seed_differs() {
    let run = |seed| {
        let mut s = ScenarioConfig::fig9();
        s.run.seed = seed;
        s.run.trace = TraceLevel::Full;
        s.set_all_links(0.8);
        traced(s, SimTime::from_mins(3)).1
    };
    assert_eq!(run(4), run(4));
    assert_ne!(run(4), run(5));
}

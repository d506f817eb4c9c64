//! Paced engine loop for serve mode.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use senvm_core::{Result, SimTime, World};

use crate::state::Publisher;

/// Simulated milliseconds advanced between two looks at the request queue.
const MIN_CHUNK_MS: u64 = 1_000;
/// Lower bound on wall time between snapshot publications.
const PUBLISH_EVERY: Duration = Duration::from_millis(100);
/// Poll interval once the scenario has run to its end.
const IDLE_POLL: Duration = Duration::from_millis(20);

/// Runs `world` to its configured end at `speed` simulated seconds per
/// wall second, then keeps answering operator requests until `stop` is
/// set. Returns the world for export.
pub fn run_paced(mut world: World, mut publisher: Publisher, speed: f64, stop: Arc<AtomicBool>) -> Result<World> {
    assert!(speed > 0.0, "speed factor must be positive");
    let end = SimTime::from_millis(world.scenario().run.duration_ms);
    // Large speed factors advance in bigger chunks so pacing overhead stays
    // small; chunks never exceed ~20 ms of wall time.
    let chunk_ms = MIN_CHUNK_MS.max((speed * 20.0) as u64);
    let start_wall = Instant::now();
    let start_sim = world.now();
    let mut last_publish = Instant::now();
    publisher.publish(&world);

    while !stop.load(Ordering::Relaxed) && world.now() < end {
        let target = SimTime::from_millis((world.now().millis() + chunk_ms).min(end.millis()));
        world.run_until(target)?;
        publisher.apply_requests(&mut world);
        if last_publish.elapsed() >= PUBLISH_EVERY || world.now() >= end {
            publisher.publish(&world);
            last_publish = Instant::now();
        }
        let sim_elapsed = (world.now().millis() - start_sim.millis()) as f64 / 1000.0;
        let due = Duration::from_secs_f64(sim_elapsed / speed);
        while let Some(ahead) = due.checked_sub(start_wall.elapsed()) {
            if stop.load(Ordering::Relaxed) {
                break;
            }
            publisher.apply_requests(&mut world);
            std::thread::sleep(ahead.min(IDLE_POLL));
        }
    }
    publisher.publish(&world);
    while !stop.load(Ordering::Relaxed) {
        publisher.apply_requests(&mut world);
        std::thread::sleep(IDLE_POLL);
    }
    Ok(world)
}

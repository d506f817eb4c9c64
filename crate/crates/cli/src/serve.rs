use std::fs::File;
use std::io::BufWriter;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use log::{error, info};
use tokio::sync::oneshot;

use senvm_core::sim::RunOutputs;
use senvm_core::World;
use senvm_webapi::{run_paced, Shared};

use crate::{load_scenario, Failure};

/// Resolves on ctrl-c or SIGTERM.
async fn terminate() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}

pub fn serve(scenario: &Path, seed: Option<u64>, speed: f64, port: u16, out: &Path) -> Result<(), Failure> {
    let s = load_scenario(scenario, seed, None)?;
    let acs = s.plant.acs.iter().map(|a| a.id.clone()).collect();
    let world = World::new(s).map_err(|e| Failure::Invalid(e.to_string()))?;

    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    let addr = SocketAddr::from(([0, 0, 0, 0], port));
    let listener = rt
        .block_on(tokio::net::TcpListener::bind(addr))
        .map_err(|e| Failure::Runtime(format!("cannot listen on {addr}: {e}")))?;

    std::fs::create_dir_all(out).map_err(|e| Failure::Runtime(format!("{}: {e}", out.display())))?;
    let outputs = RunOutputs::in_dir(out);
    let trace = File::create(&outputs.trace).map_err(|e| Failure::Runtime(e.to_string()))?;
    let world = world.with_trace(Box::new(BufWriter::new(trace)));

    let (shared, publisher) = Shared::new(acs);
    let stop = Arc::new(AtomicBool::new(false));
    let (failed_tx, failed_rx) = oneshot::channel::<()>();
    let engine = {
        let stop = Arc::clone(&stop);
        std::thread::Builder::new()
            .name("engine".into())
            .spawn(move || {
                let r = run_paced(world, publisher, speed, stop);
                if r.is_err() {
                    let _ = failed_tx.send(());
                }
                r
            })
            .map_err(|e| Failure::Runtime(e.to_string()))?
    };

    info!("serving on http://{addr} at {speed}x");
    let closing = Arc::clone(&shared);
    let shutdown = async move {
        tokio::select! {
            _ = terminate() => info!("shutting down"),
            Ok(()) = failed_rx => error!("engine stopped"),
        }
        closing.close();
    };
    let served = rt.block_on(senvm_webapi::serve(listener, shared, shutdown));

    stop.store(true, Ordering::Relaxed);
    let world = engine
        .join()
        .map_err(|_| Failure::Runtime("engine thread panicked".into()))?
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    served.map_err(|e| Failure::Runtime(e.to_string()))?;
    world
        .write_outputs(&outputs)
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    info!("exports written to {}", out.display());
    Ok(())
}

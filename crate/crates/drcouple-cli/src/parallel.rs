//! Threaded replication driver. Workers pull replication indices from a
//! shared counter; results are aggregated in index order, so the report is
//! identical to the sequential runner for any thread count.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use drcouple_core::simulate::{
    assemble_report, collect_replication, run_single_replication, Method, MethodAccumulator,
    RepRecord, ScenarioSpec, SimulationReport,
};
use drcouple_core::{Error as CoreError, Result as CoreResult};

type RepOutcome = Vec<(Method, CoreResult<RepRecord>)>;

/// Runs the scenario across `threads` workers (1 = sequential).
pub fn run_replications_parallel(
    spec: &ScenarioSpec,
    threads: usize,
) -> CoreResult<SimulationReport> {
    spec.check()?;
    let threads = threads.max(1).min(spec.replications);
    let next = AtomicUsize::new(1);
    let slots: Mutex<Vec<Option<CoreResult<RepOutcome>>>> =
        Mutex::new(vec![None; spec.replications]);

    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let j = next.fetch_add(1, Ordering::Relaxed);
                if j > spec.replications {
                    break;
                }
                let outcome = run_single_replication(spec, j);
                slots.lock().expect("worker lock").get_mut(j - 1).map(|s| *s = Some(outcome));
            });
        }
    });

    let slots = slots.into_inner().expect("driver lock");
    let mut per_method: Vec<MethodAccumulator> = spec
        .methods
        .iter()
        .map(|m| (*m, Vec::new(), Vec::new(), 0usize))
        .collect();
    let mut per_replication = Vec::new();
    for slot in slots {
        let outcome = slot.ok_or_else(|| CoreError::Domain("worker dropped a replication".into()))??;
        collect_replication(outcome, &mut per_method, &mut per_replication);
    }
    assemble_report(spec, per_method, per_replication)
}

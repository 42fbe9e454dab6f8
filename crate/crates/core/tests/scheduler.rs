use neural_cache::scheduler::{
    measure_sync_overhead, run_parallel, run_sequential, simulate_schedule, Durations, Role, SchedulerConfig, SleepWorker,
    TimingReport, TraceKind,
};
use proptest::prelude::*;

fn check_invariants(report: &TimingReport, n_frames: usize) {
    let cfg = &report.config;
    let (n, nw) = (cfg.n_workers, cfg.num_warps);
    assert_eq!(report.order_violations, 0);
    let frames: Vec<usize> = report.warp_jobs().map(|j| j.frame).collect();
    assert_eq!(frames, (0..n_frames).collect::<Vec<_>>());
    let emits: Vec<f64> = report.warp_jobs().map(|j| j.emit_ms).collect();
    assert!(emits.windows(2).all(|w| w[0] <= w[1]), "emission out of order");
    let caches: Vec<_> = report.cache_jobs().collect();
    assert_eq!(caches.len(), n_frames.div_ceil(nw));
    for (k, c) in caches.iter().enumerate() {
        assert_eq!(c.frame, k * nw);
        assert_eq!(c.worker, k % n, "cache role of block {k}");
    }
    for j in report.warp_jobs() {
        assert!(j.latency_ms > 0.0);
        let cf = j.cache_frame.expect("warp records its cache");
        if j.frame >= cfg.warmup_frames() {
            assert!(cf < j.frame, "frame {} warped from cache {cf}", j.frame);
            assert!(j.frame - cf <= 2 * nw, "frame {} gap {}", j.frame, j.frame - cf);
        }
        // The cache is the latest one produced by the same worker before this warp started.
        let own = report
            .cache_jobs()
            .filter(|c| c.worker == j.worker && c.end_ms <= j.start_ms + 1e-9)
            .map(|c| c.frame)
            .max()
            .unwrap_or(0);
        assert_eq!(cf, own, "frame {} on worker {}", j.frame, j.worker);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn simulated_schedules_hold_invariants(
        n in 1usize..5,
        nw in 1usize..5,
        tg in 1.0f64..80.0,
        tw in 0.5f64..30.0,
        tsync in 0.0f64..2.0,
        fps in prop::option::of(5.0f64..120.0),
        frames in 1usize..160,
    ) {
        let cfg = SchedulerConfig::parallel(n, nw).with_input_fps(fps);
        let d = Durations { tg_ms: tg, tw_ms: tw, tsync_ms: tsync };
        let sim = simulate_schedule(&cfg, &d, frames).unwrap();
        check_invariants(&sim.report, frames);
        let mut per_worker = vec![Vec::new(); n];
        for e in &sim.trace {
            if let (TraceKind::Start | TraceKind::Finish, Some(w)) = (e.kind, e.worker) {
                per_worker[w].push((e.time_ms, e.kind));
            }
        }
        // Work on a worker never overlaps.
        for events in per_worker {
            let mut busy = 0i32;
            let mut sorted = events.clone();
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1 == TraceKind::Start).cmp(&(b.1 == TraceKind::Start))));
            for (_, k) in sorted {
                busy += if k == TraceKind::Start { 1 } else { -1 };
                prop_assert!(busy <= 1);
            }
        }
    }

    #[test]
    fn sequential_simulation_matches_formula(nw in 1usize..6, tg in 5.0f64..100.0, tw in 1.0f64..40.0) {
        let d = Durations { tg_ms: tg, tw_ms: tw, tsync_ms: 0.3 };
        let sim = simulate_schedule(&SchedulerConfig::sequential(nw), &d, 50 * nw + 1).unwrap();
        let expect = nw as f64 * 1000.0 / (tg + nw as f64 * tw);
        prop_assert!((sim.report.fps - expect).abs() / expect < 1e-9);
        check_invariants(&sim.report, 50 * nw + 1);
    }
}

#[test]
fn doubling_warps_doubles_throughput_when_caching_dominates() {
    let d = Durations { tg_ms: 60.0, tw_ms: 1.0, tsync_ms: 0.1 };
    let a = simulate_schedule(&SchedulerConfig::parallel(2, 2), &d, 400).unwrap().report.fps;
    let b = simulate_schedule(&SchedulerConfig::parallel(2, 4), &d, 800).unwrap().report.fps;
    assert!((b / a - 2.0).abs() / 2.0 < 0.05, "{a} -> {b}");
}

#[test]
fn real_sleep_execution_matches_simulation() {
    let configs = [(30.0, 8.0), (22.0, 6.0), (40.0, 12.0), (18.0, 9.0), (35.0, 5.0)];
    let stream: Vec<usize> = (0..48).collect();
    for (tg, tw) in configs {
        let d = Durations { tg_ms: tg, tw_ms: tw, tsync_ms: 0.0 };
        let cfg = SchedulerConfig::parallel(2, 2);
        let workers = vec![SleepWorker::new(tg, tw); 2];
        let real = run_parallel(&stream, workers, &cfg).unwrap();
        let sim = simulate_schedule(&cfg, &d, stream.len()).unwrap();
        let rel = (real.report.fps - sim.report.fps).abs() / sim.report.fps;
        assert!(rel < 0.10, "tg={tg} tw={tw}: real {} sim {}", real.report.fps, sim.report.fps);
        check_invariants(&real.report, stream.len());
    }
}

#[test]
fn real_sequential_matches_formula() {
    let stream: Vec<usize> = (0..25).collect();
    let (tg, tw) = (20.0, 6.0);
    let run = run_sequential(&stream, &mut SleepWorker::new(tg, tw), &SchedulerConfig::sequential(2)).unwrap();
    let expect = 2000.0 / (tg + 2.0 * tw);
    assert!((run.report.fps - expect).abs() / expect < 0.10, "{} vs {expect}", run.report.fps);
    assert!(run.report.cache_jobs().all(|c| c.role == Role::Cache && c.frame % 2 == 0));
}

#[test]
fn real_sync_overhead_is_small() {
    let stream: Vec<usize> = (0..30).collect();
    let o = measure_sync_overhead(&stream, || SleepWorker::new(4.0, 2.0), 2, None).unwrap();
    assert!(o.plain_latency_ms >= 2.0 && o.queued_latency_ms >= 2.0);
    assert!(o.overhead_ms.abs() < 1.0, "{o:?}");
}

#[test]
fn reports_serialize() {
    let sim = simulate_schedule(&SchedulerConfig::default(), &Durations::REFERENCE, 20).unwrap();
    let csv = sim.report.to_csv();
    assert_eq!(csv.lines().next().unwrap(), "frame,role,worker,enqueue_ms,emit_ms,latency_ms,cache_frame");
    assert_eq!(csv.lines().count(), 1 + 20 + 10);
    let v: serde_json::Value = serde_json::from_str(&sim.report.to_json()).unwrap();
    for key in ["fps", "latency_mean_ms", "latency_median_ms", "latency_p95_ms", "sync_overhead_ms"] {
        assert!(v.get(key).is_some(), "{key}");
    }
}

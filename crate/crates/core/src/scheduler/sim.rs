use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::Serialize;

use super::exec::SyncOverhead;
use super::report::{mean, JobRecord, TimingReport};
use super::{Durations, Mode, Role, Rotation, SchedulerConfig};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceKind {
    /// The producer took a cache-completion token.
    Token,
    Enqueue,
    Start,
    Finish,
    Emit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceEvent {
    pub time_ms: f64,
    pub kind: TraceKind,
    pub role: Role,
    pub frame: usize,
    pub worker: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    /// Events ordered by virtual time, ties in causal order.
    pub trace: Vec<TraceEvent>,
    pub report: TimingReport,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Ms(f64);

impl Eq for Ms {}

impl PartialOrd for Ms {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ms {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

struct Sim {
    trace: Vec<TraceEvent>,
    jobs: Vec<JobRecord>,
}

impl Sim {
    fn event(&mut self, time_ms: f64, kind: TraceKind, role: Role, frame: usize, worker: Option<usize>) {
        self.trace.push(TraceEvent { time_ms, kind, role, frame, worker });
    }

    fn finish(mut self, cfg: &SchedulerConfig, n_frames: usize) -> Simulation {
        self.trace.sort_by(|a, b| a.time_ms.total_cmp(&b.time_ms));
        let emitted: Vec<usize> = (0..n_frames).collect();
        Simulation { trace: self.trace, report: TimingReport::build(cfg, self.jobs, &emitted, n_frames) }
    }
}

/// Discrete-event simulation of the configured schedule on a virtual clock.
/// Workers start with the first frame cached, as after the real warm-up.
pub fn simulate_schedule(cfg: &SchedulerConfig, durations: &Durations, n_frames: usize) -> Result<Simulation> {
    cfg.validate()?;
    durations.validate()?;
    let sim = Sim { trace: Vec::new(), jobs: Vec::new() };
    Ok(match cfg.mode {
        Mode::Sequential => sequential(sim, cfg, durations, n_frames),
        Mode::Parallel => parallel(sim, cfg, durations, n_frames),
    })
}

fn sequential(mut sim: Sim, cfg: &SchedulerConfig, d: &Durations, n_frames: usize) -> Simulation {
    let mut now = 0.0;
    let mut cache_frame = 0;
    for t in 0..n_frames {
        let arrival = cfg.period_ms().map_or(now, |p| t as f64 * p);
        let start = f64::max(now, arrival);
        let end = start + d.tw_ms;
        sim.event(start, TraceKind::Start, Role::Warp, t, Some(0));
        sim.event(end, TraceKind::Finish, Role::Warp, t, Some(0));
        sim.event(end, TraceKind::Emit, Role::Warp, t, None);
        sim.jobs.push(JobRecord {
            frame: t,
            role: Role::Warp,
            worker: 0,
            enqueue_ms: arrival,
            start_ms: start,
            end_ms: end,
            emit_ms: end,
            latency_ms: end - arrival,
            cache_frame: Some(cache_frame),
        });
        now = end;
        if t % cfg.num_warps == 0 {
            let end = now + d.tg_ms;
            sim.event(now, TraceKind::Start, Role::Cache, t, Some(0));
            sim.event(end, TraceKind::Finish, Role::Cache, t, Some(0));
            sim.jobs.push(JobRecord {
                frame: t,
                role: Role::Cache,
                worker: 0,
                enqueue_ms: arrival,
                start_ms: now,
                end_ms: end,
                emit_ms: end,
                latency_ms: end - arrival,
                cache_frame: None,
            });
            now = end;
            cache_frame = t;
        }
    }
    sim.finish(cfg, n_frames)
}

fn parallel(mut sim: Sim, cfg: &SchedulerConfig, d: &Durations, n_frames: usize) -> Simulation {
    let n = cfg.n_workers;
    let cap = cfg.capacity();
    let mut free = vec![0.0f64; n];
    let mut starts: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut resident = vec![0usize; n];
    let mut tokens: BinaryHeap<Reverse<Ms>> = BinaryHeap::new();
    let mut credits = n;
    let mut rotation = Rotation::new(n, cfg.num_warps);
    let mut now = 0.0f64;
    let mut last_emit = f64::NEG_INFINITY;
    for t in 0..n_frames {
        let arrival = cfg.period_ms().map(|p| t as f64 * p);
        let mut s = arrival.map_or(now, |a| now.max(a));
        if rotation.starts_block(t) {
            if credits > 0 {
                credits -= 1;
            } else {
                let Reverse(Ms(ready)) = tokens.pop().expect("a cache job is outstanding");
                s = s.max(ready);
            }
            sim.event(s, TraceKind::Token, Role::Cache, t, None);
        }
        let plan = rotation.next(t);
        let enqueue_ms = arrival.unwrap_or(s);
        let mut posts = Vec::with_capacity(2);
        if let Some(c) = plan.cache {
            posts.push((Role::Cache, c));
        }
        if plan.warp_first {
            posts.insert(0, (Role::Warp, plan.warp));
        } else {
            posts.push((Role::Warp, plan.warp));
        }
        for (role, w) in posts {
            let q = &starts[w];
            let pending = q.len() - q.partition_point(|&x| x <= s);
            if pending >= cap {
                s = q[q.len() - cap];
            }
            sim.event(s, TraceKind::Enqueue, role, t, Some(w));
            let start = (s + d.tsync_ms).max(free[w]);
            let end = start + if role == Role::Cache { d.tg_ms } else { d.tw_ms };
            free[w] = end;
            starts[w].push(start);
            sim.event(start, TraceKind::Start, role, t, Some(w));
            sim.event(end, TraceKind::Finish, role, t, Some(w));
            match role {
                Role::Cache => {
                    tokens.push(Reverse(Ms(end)));
                    resident[w] = t;
                    sim.jobs.push(JobRecord {
                        frame: t,
                        role,
                        worker: w,
                        enqueue_ms,
                        start_ms: start,
                        end_ms: end,
                        emit_ms: end,
                        latency_ms: end - enqueue_ms,
                        cache_frame: None,
                    });
                }
                Role::Warp => {
                    let emit = end.max(last_emit);
                    last_emit = emit;
                    sim.event(emit, TraceKind::Emit, role, t, None);
                    sim.jobs.push(JobRecord {
                        frame: t,
                        role,
                        worker: w,
                        enqueue_ms,
                        start_ms: start,
                        end_ms: end,
                        emit_ms: emit,
                        latency_ms: emit - enqueue_ms,
                        cache_frame: Some(resident[w]),
                    });
                }
            }
        }
        now = s;
    }
    sim.finish(cfg, n_frames)
}

/// Virtual-clock counterpart of `measure_sync_overhead`.
pub fn simulate_sync_overhead(durations: &Durations, num_warps: usize, n_frames: usize) -> Result<SyncOverhead> {
    durations.validate()?;
    let input_fps = 1000.0 / (1.25 * (durations.tg_ms + durations.tw_ms) + 1.0);
    let plain_cfg = SchedulerConfig::sequential(num_warps).with_input_fps(Some(input_fps));
    let queued_cfg = SchedulerConfig::parallel(1, num_warps).with_input_fps(Some(input_fps));
    let plain = simulate_schedule(&plain_cfg, durations, n_frames)?;
    let queued = simulate_schedule(&queued_cfg, durations, n_frames)?;
    let plain_latency_ms = mean(&plain.report.steady_latencies());
    let queued_latency_ms = mean(&queued.report.steady_latencies());
    Ok(SyncOverhead { plain_latency_ms, queued_latency_ms, overhead_ms: queued_latency_ms - plain_latency_ms, input_fps })
}

#[cfg(test)]
mod tests {
    use super::*;

    const REF: Durations = Durations::REFERENCE;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn sequential_formula() {
        for nw in 1..=4 {
            let sim = simulate_schedule(&SchedulerConfig::sequential(nw), &REF, 400).unwrap();
            let expect = nw as f64 * 1000.0 / (REF.tg_ms + nw as f64 * REF.tw_ms);
            assert!((sim.report.fps - expect).abs() < 1e-9, "nw={nw}: {} vs {expect}", sim.report.fps);
            assert!(sim.report.latencies().iter().all(|&l| close(l, REF.tw_ms)));
        }
    }

    #[test]
    fn single_worker_harness_matches_sequential_throughput() {
        let d = Durations { tsync_ms: 0.0, ..REF };
        for nw in 1..=3 {
            let seq = simulate_schedule(&SchedulerConfig::sequential(nw), &d, 200).unwrap();
            let q = simulate_schedule(&SchedulerConfig::parallel(1, nw), &d, 200).unwrap();
            assert!((seq.report.fps - q.report.fps).abs() < 1e-9);
            let dist: Vec<_> = q.report.warp_distances();
            assert_eq!(dist, seq.report.warp_distances());
        }
    }

    #[test]
    fn hand_simulated_two_workers() {
        let sim = simulate_schedule(&SchedulerConfig::parallel(2, 2), &REF, 8).unwrap();
        let (g, w, s) = (REF.tg_ms, REF.tw_ms, REF.tsync_ms);
        let job = |role: Role, frame: usize| {
            sim.report.jobs.iter().find(|j| j.role == role && j.frame == frame).unwrap().clone()
        };
        // Block 0: w0 caches frame 0, w1 warps 0 and 1 from its warm-up cache.
        let c0 = job(Role::Cache, 0);
        assert_eq!(c0.worker, 0);
        assert!(close(c0.start_ms, s) && close(c0.end_ms, s + g));
        let w0 = job(Role::Warp, 0);
        assert_eq!((w0.worker, w0.cache_frame), (1, Some(0)));
        assert!(close(w0.end_ms, s + w));
        let w1 = job(Role::Warp, 1);
        assert!(close(w1.start_ms, s + w) && close(w1.end_ms, s + 2.0 * w));
        // Block 1 uses the second warm-up credit: w1 caches 2 after its warps, w0 warps 2,3 from cache 0.
        let c2 = job(Role::Cache, 2);
        assert_eq!(c2.worker, 1);
        assert!(close(c2.start_ms, s + 2.0 * w) && close(c2.end_ms, s + 2.0 * w + g));
        let w2 = job(Role::Warp, 2);
        assert_eq!((w2.worker, w2.cache_frame), (0, Some(0)));
        assert!(close(w2.start_ms, s + g) && close(w2.end_ms, s + g + w));
        let w3 = job(Role::Warp, 3);
        assert!(close(w3.end_ms, s + g + 2.0 * w));
        // Block 2 waits for the token of cache 0 at s+g.
        let tok: Vec<_> = sim.trace.iter().filter(|e| e.kind == TraceKind::Token).collect();
        assert!(close(tok[0].time_ms, 0.0) && close(tok[1].time_ms, 0.0));
        assert!(close(tok[2].time_ms, s + g));
        let c4 = job(Role::Cache, 4);
        assert_eq!(c4.worker, 0);
        assert!(close(c4.start_ms, s + g + 2.0 * w) && close(c4.end_ms, s + 2.0 * g + 2.0 * w));
        let w4 = job(Role::Warp, 4);
        assert_eq!((w4.worker, w4.cache_frame), (1, Some(2)));
        assert!(close(w4.start_ms, s + 2.0 * w + g) && close(w4.end_ms, s + 3.0 * w + g));
        let w5 = job(Role::Warp, 5);
        assert!(close(w5.end_ms, s + 4.0 * w + g));
        // Block 3 waits for cache 2, then w1 caches 6 once its warps are done.
        assert!(close(tok[3].time_ms, s + 2.0 * w + g));
        let c6 = job(Role::Cache, 6);
        assert_eq!(c6.worker, 1);
        assert!(close(c6.start_ms, s + 4.0 * w + g) && close(c6.end_ms, s + 4.0 * w + 2.0 * g));
        let w6 = job(Role::Warp, 6);
        assert_eq!((w6.worker, w6.cache_frame), (0, Some(4)));
        assert!(close(w6.start_ms, s + 2.0 * w + 2.0 * g) && close(w6.end_ms, s + 3.0 * w + 2.0 * g));
        assert!(close(job(Role::Warp, 7).end_ms, s + 4.0 * w + 2.0 * g));
        let emits: Vec<_> = sim.trace.iter().filter(|e| e.kind == TraceKind::Emit).map(|e| e.frame).collect();
        assert_eq!(emits, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn two_worker_throughput_is_twice_sequential() {
        let seq = simulate_schedule(&SchedulerConfig::sequential(2), &REF, 400).unwrap();
        let par = simulate_schedule(&SchedulerConfig::parallel(2, 2), &REF, 400).unwrap();
        let expect = 4.0 * 1000.0 / (REF.tg_ms + 2.0 * REF.tw_ms);
        assert!((par.report.fps - expect).abs() / expect < 0.01, "{}", par.report.fps);
        assert!(par.report.fps / seq.report.fps > 1.9);
    }

    #[test]
    fn paced_input_latency_is_warp_plus_sync() {
        let cfg = SchedulerConfig::parallel(2, 2).with_input_fps(Some(30.0));
        let sim = simulate_schedule(&cfg, &REF, 200).unwrap();
        for l in sim.report.steady_latencies() {
            assert!(close(l, REF.tw_ms + REF.tsync_ms), "latency {l}");
        }
    }

    #[test]
    fn sync_overhead_recovers_delay() {
        let o = simulate_sync_overhead(&REF, 2, 200).unwrap();
        assert!((o.overhead_ms - 0.25).abs() < 1e-9);
        let o = simulate_sync_overhead(&Durations { tsync_ms: 0.0, ..REF }, 2, 200).unwrap();
        assert!(o.overhead_ms.abs() < 1e-9);
        let o = simulate_sync_overhead(&Durations { tg_ms: 90.0, ..REF }, 2, 200).unwrap();
        assert!((o.overhead_ms - 0.25).abs() < 1e-9);
    }

    #[test]
    fn backpressure_bounds_queues() {
        // Fast producer and slow warps: no worker ever holds more than the cap.
        let d = Durations { tg_ms: 5.0, tw_ms: 20.0, tsync_ms: 0.1 };
        let cfg = SchedulerConfig::parallel(2, 3);
        let sim = simulate_schedule(&cfg, &d, 120).unwrap();
        for w in 0..2 {
            let ev: Vec<_> = sim.trace.iter().filter(|e| e.worker == Some(w)).collect();
            let mut queued: i64 = 0;
            for e in ev {
                match e.kind {
                    TraceKind::Enqueue => queued += 1,
                    TraceKind::Start => queued -= 1,
                    _ => {}
                }
                assert!(queued <= cfg.capacity() as i64 + 1);
            }
        }
    }
}

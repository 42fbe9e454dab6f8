use std::collections::{BTreeMap, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::mpsc::{sync_channel, Receiver, SyncSender};
use std::time::{Duration, Instant};

use super::report::{mean, JobRecord, TimingReport};
use super::{Job, Mode, Role, Rotation, SchedulerConfig, Worker};
use crate::error::{Error, Result};

/// Images in frame order and their timing.
#[derive(Debug)]
pub struct Run<O> {
    pub images: Vec<O>,
    pub report: TimingReport,
}

fn ms_since(origin: Instant, t: Instant) -> f64 {
    match t.checked_duration_since(origin) {
        Some(d) => d.as_secs_f64() * 1000.0,
        None => -(origin.duration_since(t).as_secs_f64() * 1000.0),
    }
}

fn sleep_until(origin: Instant, target_ms: f64) {
    let now = ms_since(origin, Instant::now());
    if target_ms > now {
        std::thread::sleep(Duration::from_secs_f64((target_ms - now) / 1000.0));
    }
}

/// Single-context execution: each frame is warped from the latest cache as
/// soon as it arrives, and every `num_warps`-th frame is then cached.
pub fn run_sequential<I, W: Worker<I>>(stream: &[I], worker: &mut W, cfg: &SchedulerConfig) -> Result<Run<W::Output>> {
    cfg.validate()?;
    if cfg.mode != Mode::Sequential {
        return Err(Error::config("run_sequential needs a sequential scheduler config"));
    }
    if stream.is_empty() {
        return Ok(Run { images: Vec::new(), report: TimingReport::empty(cfg) });
    }
    worker.cache(&stream[0])?;
    let origin = Instant::now();
    let now = || ms_since(origin, Instant::now());
    let mut cache_frame = 0;
    let mut images = Vec::with_capacity(stream.len());
    let mut jobs = Vec::new();
    for (t, input) in stream.iter().enumerate() {
        let arrival = match cfg.period_ms() {
            Some(p) => {
                let a = t as f64 * p;
                sleep_until(origin, a);
                a
            }
            None => now(),
        };
        let start = now();
        images.push(worker.warp(input)?);
        let end = now();
        jobs.push(JobRecord {
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
        if t % cfg.num_warps == 0 {
            let start = now();
            worker.cache(input)?;
            let end = now();
            jobs.push(JobRecord {
                frame: t,
                role: Role::Cache,
                worker: 0,
                enqueue_ms: arrival,
                start_ms: start,
                end_ms: end,
                emit_ms: end,
                latency_ms: end - arrival,
                cache_frame: None,
            });
            cache_frame = t;
        }
    }
    let emitted: Vec<usize> = (0..stream.len()).collect();
    Ok(Run { images, report: TimingReport::build(cfg, jobs, &emitted, stream.len()) })
}

enum Msg<O> {
    Warp { index: usize, worker: usize, start: Instant, end: Instant, cache_frame: usize, output: O },
    Cache { index: usize, worker: usize, start: Instant, end: Instant },
}

enum Token {
    Done,
    Failed(usize),
}

fn worker_loop<I, W: Worker<I>>(
    id: usize,
    worker: &mut W,
    jobs: Receiver<Job<&I>>,
    out: SyncSender<Msg<W::Output>>,
    tokens: SyncSender<Token>,
) -> Result<()> {
    let mut cache_frame = None;
    while let Ok(job) = jobs.recv() {
        let start = Instant::now();
        match job.role {
            Role::Cache => {
                worker.cache(job.payload)?;
                let end = Instant::now();
                cache_frame = Some(job.index);
                if !job.warmup && out.send(Msg::Cache { index: job.index, worker: id, start, end }).is_err() {
                    return Ok(());
                }
                // The producer stops listening once every job is posted.
                let _ = tokens.send(Token::Done);
            }
            Role::Warp => {
                let cf = cache_frame
                    .ok_or_else(|| Error::Scheduler(format!("worker {id} received warp job {} before any cache", job.index)))?;
                let output = worker.warp(job.payload)?;
                let end = Instant::now();
                let msg = Msg::Warp { index: job.index, worker: id, start, end, cache_frame: cf, output };
                if out.send(msg).is_err() {
                    return Ok(());
                }
            }
        }
    }
    Ok(())
}

fn panic_message(p: &(dyn std::any::Any + Send)) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into())
}

struct Posted {
    origin: Instant,
    enqueue: HashMap<(Role, usize), f64>,
}

fn produce<'s, I>(
    stream: &'s [I],
    cfg: &SchedulerConfig,
    txs: Vec<SyncSender<Job<&'s I>>>,
    tokens: Receiver<Token>,
) -> Result<Posted> {
    let n = txs.len();
    let stopped = |w: usize| Error::Scheduler(format!("worker {w} stopped accepting jobs"));
    let wait_token = || match tokens.recv() {
        Ok(Token::Done) => Ok(()),
        Ok(Token::Failed(w)) => Err(Error::Scheduler(format!("worker {w} failed"))),
        Err(_) => Err(Error::Scheduler("all workers exited".into())),
    };
    for (w, tx) in txs.iter().enumerate() {
        let job = Job { index: 0, payload: &stream[0], role: Role::Cache, enqueue_ms: 0.0, warmup: true };
        tx.send(job).map_err(|_| stopped(w))?;
    }
    for _ in 0..n {
        wait_token()?;
    }
    let origin = Instant::now();
    let mut credits = n;
    let mut rotation = Rotation::new(n, cfg.num_warps);
    let mut enqueue = HashMap::with_capacity(stream.len() * 2);
    for (t, input) in stream.iter().enumerate() {
        let arrival = cfg.period_ms().map(|p| {
            let a = t as f64 * p;
            sleep_until(origin, a);
            a
        });
        if rotation.starts_block(t) {
            if credits > 0 {
                credits -= 1;
            } else {
                wait_token()?;
            }
        }
        let d = rotation.next(t);
        let enqueue_ms = arrival.unwrap_or_else(|| ms_since(origin, Instant::now()));
        let mut posts = Vec::with_capacity(2);
        if let Some(c) = d.cache {
            posts.push((Role::Cache, c));
        }
        if d.warp_first {
            posts.insert(0, (Role::Warp, d.warp));
        } else {
            posts.push((Role::Warp, d.warp));
        }
        for (role, w) in posts {
            let job = Job { index: t, payload: input, role, enqueue_ms, warmup: false };
            txs[w].send(job).map_err(|_| stopped(w))?;
            enqueue.insert((role, t), enqueue_ms);
        }
    }
    Ok(Posted { origin, enqueue })
}

struct Consumed<O> {
    images: Vec<O>,
    emitted: Vec<usize>,
    warps: Vec<(usize, usize, Instant, Instant, Instant, usize)>,
    caches: Vec<(usize, usize, Instant, Instant)>,
}

fn consume<O>(rx: Receiver<Msg<O>>, n_frames: usize) -> Consumed<O> {
    let mut pending = BTreeMap::new();
    let mut c = Consumed { images: Vec::new(), emitted: Vec::new(), warps: Vec::new(), caches: Vec::new() };
    while let Ok(msg) = rx.recv() {
        match msg {
            Msg::Warp { index, worker, start, end, cache_frame, output } => {
                pending.insert(index, (worker, start, end, cache_frame, output));
                while let Some((worker, start, end, cf, output)) = pending.remove(&c.emitted.len()) {
                    let emit = Instant::now();
                    let index = c.emitted.len();
                    c.warps.push((index, worker, start, end, emit, cf));
                    c.images.push(output);
                    c.emitted.push(index);
                }
            }
            Msg::Cache { index, worker, start, end } => c.caches.push((index, worker, start, end)),
        }
    }
    debug_assert!(c.emitted.len() <= n_frames);
    c
}

/// Producer, worker threads and an in-order consumer joined by bounded
/// queues. Each worker runs its own cache and warps.
pub fn run_parallel<I: Sync, W: Worker<I>>(stream: &[I], workers: Vec<W>, cfg: &SchedulerConfig) -> Result<Run<W::Output>> {
    cfg.validate()?;
    if cfg.mode != Mode::Parallel {
        return Err(Error::config("run_parallel needs a parallel scheduler config"));
    }
    if workers.len() != cfg.n_workers {
        return Err(Error::config(format!("expected {} workers, got {}", cfg.n_workers, workers.len())));
    }
    if stream.is_empty() {
        return Ok(Run { images: Vec::new(), report: TimingReport::empty(cfg) });
    }
    let n = cfg.n_workers;
    let (produced, consumed, worker_results) = std::thread::scope(|s| {
        let (out_tx, out_rx) = sync_channel::<Msg<W::Output>>(2 * cfg.num_warps * n);
        let (tok_tx, tok_rx) = sync_channel::<Token>(2 * n);
        let mut txs = Vec::with_capacity(n);
        let mut handles = Vec::with_capacity(n);
        for (id, mut worker) in workers.into_iter().enumerate() {
            let (tx, rx) = sync_channel::<Job<&I>>(cfg.capacity());
            txs.push(tx);
            let out = out_tx.clone();
            let tok = tok_tx.clone();
            handles.push(s.spawn(move || {
                let fail = tok.clone();
                let res = catch_unwind(AssertUnwindSafe(|| worker_loop(id, &mut worker, rx, out, tok)));
                let res = match res {
                    Ok(r) => r,
                    Err(p) => Err(Error::Scheduler(format!("worker {id} panicked: {}", panic_message(p.as_ref())))),
                };
                if res.is_err() {
                    let _ = fail.try_send(Token::Failed(id));
                }
                res
            }));
        }
        drop(out_tx);
        drop(tok_tx);
        let n_frames = stream.len();
        let consumer = s.spawn(move || consume(out_rx, n_frames));
        let produced = produce(stream, cfg, txs, tok_rx);
        let consumed = consumer.join().expect("consumer does not panic");
        let results: Vec<Result<()>> = handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Scheduler("worker thread lost".into()))))
            .collect();
        (produced, consumed, results)
    });
    for (id, r) in worker_results.into_iter().enumerate() {
        if let Err(e) = r {
            return Err(Error::Scheduler(format!("pipeline shut down, worker {id}: {e}")));
        }
    }
    let posted = produced?;
    if consumed.emitted.len() != stream.len() {
        return Err(Error::Scheduler(format!(
            "pipeline emitted {} of {} frames",
            consumed.emitted.len(),
            stream.len()
        )));
    }
    let at = |t: Instant| ms_since(posted.origin, t);
    let mut jobs = Vec::with_capacity(consumed.warps.len() + consumed.caches.len());
    for &(index, worker, start, end, emit, cf) in &consumed.warps {
        let enqueue_ms = posted.enqueue[&(Role::Warp, index)];
        jobs.push(JobRecord {
            frame: index,
            role: Role::Warp,
            worker,
            enqueue_ms,
            start_ms: at(start),
            end_ms: at(end),
            emit_ms: at(emit),
            latency_ms: at(emit) - enqueue_ms,
            cache_frame: Some(cf),
        });
    }
    for &(index, worker, start, end) in &consumed.caches {
        let enqueue_ms = posted.enqueue[&(Role::Cache, index)];
        jobs.push(JobRecord {
            frame: index,
            role: Role::Cache,
            worker,
            enqueue_ms,
            start_ms: at(start),
            end_ms: at(end),
            emit_ms: at(end),
            latency_ms: at(end) - enqueue_ms,
            cache_frame: None,
        });
    }
    let report = TimingReport::build(cfg, jobs, &consumed.emitted, stream.len());
    Ok(Run { images: consumed.images, report })
}

/// Latency of plain sequential execution against the same schedule routed
/// through the queue harness with one worker.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SyncOverhead {
    pub plain_latency_ms: f64,
    pub queued_latency_ms: f64,
    pub overhead_ms: f64,
    pub input_fps: f64,
}

/// Measures the per-frame cost of queue synchronization. Input is paced so
/// that no frame waits behind another; when `input_fps` is `None` the pace
/// is calibrated from a short plain run.
pub fn measure_sync_overhead<I: Sync, W: Worker<I>>(
    stream: &[I],
    mut make_worker: impl FnMut() -> W,
    num_warps: usize,
    input_fps: Option<f64>,
) -> Result<SyncOverhead> {
    if stream.is_empty() {
        return Err(Error::usage("sync overhead needs a non-empty stream"));
    }
    let input_fps = match input_fps {
        Some(f) => f,
        None => {
            let probe = &stream[..stream.len().min(2 * num_warps + 2)];
            let run = run_sequential(probe, &mut make_worker(), &SchedulerConfig::sequential(num_warps))?;
            let longest = |role: Role| {
                run.report
                    .jobs
                    .iter()
                    .filter(|j| j.role == role)
                    .map(|j| j.end_ms - j.start_ms)
                    .fold(0.0, f64::max)
            };
            1000.0 / (1.25 * (longest(Role::Cache) + longest(Role::Warp)) + 1.0)
        }
    };
    let plain_cfg = SchedulerConfig::sequential(num_warps).with_input_fps(Some(input_fps));
    let plain = run_sequential(stream, &mut make_worker(), &plain_cfg)?;
    let queued_cfg = SchedulerConfig::parallel(1, num_warps).with_input_fps(Some(input_fps));
    let queued = run_parallel(stream, vec![make_worker()], &queued_cfg)?;
    let plain_latency_ms = mean(&plain.report.steady_latencies());
    let queued_latency_ms = mean(&queued.report.steady_latencies());
    Ok(SyncOverhead { plain_latency_ms, queued_latency_ms, overhead_ms: queued_latency_ms - plain_latency_ms, input_fps })
}

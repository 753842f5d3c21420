//! Frame-synchronous segmentation loop with semantic fusion and feedback.
//!
//! For every frame `t`: the segmenter produces `B_t`; the semantic side
//! loads `S_t` when `t % N == 0` and otherwise reuses the last map; the
//! two meet at a per-frame rendezvous where `D_t` is fused; `D_t` then
//! drives the update of both models before frame `t + 1` is classified.
//!
//! [`run_rtss`] runs the segmenter and the semantic model on their own
//! threads. [`run_reference`] executes the same steps on the calling
//! thread and is the oracle the threaded version must match bit for bit.

use std::sync::mpsc::{sync_channel, Receiver, SyncSender};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::bgs::{build_segmenter, SegmenterKind, SegmenterParams, Segmenter};
use crate::error::{Error, Result};
use crate::frame_io::{FgMask, Frame, SemanticMap, SignedMap};
use crate::fusion::{fuse, FusionParams};
use crate::semantic::{SemanticModel, SemanticSource, DEFAULT_PHI};

/// Algorithm parameters for one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineParams {
    pub segmenter: SegmenterKind,
    #[serde(flatten)]
    pub segmenter_params: SegmenterParams,
    pub fusion: FusionParams,
    /// Semantic period `N`: maps are consumed at positions `t % N == 0`.
    pub semantic_period: usize,
    /// Time subsampling factor `phi` of the semantic background model.
    pub phi: u32,
    /// Set from the run configuration's seed at run time.
    #[serde(skip)]
    pub seed: u64,
    /// Keep updating `M` on frames that reuse an earlier map.
    pub update_semantic_on_skipped: bool,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            segmenter: SegmenterKind::Subsense,
            segmenter_params: SegmenterParams::default(),
            fusion: FusionParams::default(),
            semantic_period: 1,
            phi: DEFAULT_PHI,
            seed: 0,
            update_semantic_on_skipped: true,
        }
    }
}

impl PipelineParams {
    pub fn validate(&self) -> Result<()> {
        if self.semantic_period == 0 {
            return Err(Error::Config("semantic period must be ≥ 1".into()));
        }
        if self.phi == 0 {
            return Err(Error::Config("phi must be ≥ 1".into()));
        }
        let sp = &self.segmenter_params;
        match self.segmenter {
            SegmenterKind::Subsense => sp.subsense.validate(),
            SegmenterKind::Vibe => sp.vibe.validate(),
            SegmenterKind::Gmm => sp.gmm.validate(),
        }
        .map_err(|e| Error::Config(e.to_string()))
    }
}

/// Seed of the semantic model's random stream, derived from the run seed.
pub fn semantic_seed(seed: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17) ^ 0x5EED
}

/// Frame indices whose semantic maps are consumed, given the ordered
/// indices of a run.
pub fn required_semantic_indices(indices: &[usize], period: usize) -> Vec<usize> {
    indices.iter().step_by(period.max(1)).copied().collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub bgs: Duration,
    pub sem: Duration,
    pub fuse: Duration,
}

impl StageTiming {
    pub fn bgs_ms(&self) -> f64 {
        self.bgs.as_secs_f64() * 1e3
    }

    pub fn sem_ms(&self) -> f64 {
        self.sem.as_secs_f64() * 1e3
    }

    pub fn fuse_ms(&self) -> f64 {
        self.fuse.as_secs_f64() * 1e3
    }
}

#[derive(Clone, Debug)]
pub struct FrameResult {
    /// Position `t` within the run, starting at 0.
    pub position: usize,
    /// File index of the frame.
    pub index: usize,
    /// Segmenter output `B_t`.
    pub raw: FgMask,
    /// Final mask `D_t`.
    pub fused: FgMask,
    /// File index of the semantic map consumed for this frame.
    pub semantic_index: Option<usize>,
    /// The map itself (shared with the other frames that reused it).
    pub semantic: Option<Arc<SemanticMap>>,
    pub timing: StageTiming,
}

/// Semantic side of the loop, owned by one thread at a time.
struct SemanticWorker<'a> {
    source: &'a mut dyn SemanticSource,
    period: usize,
    phi: u32,
    seed: u64,
    update_on_skipped: bool,
    model: Option<SemanticModel>,
    current: Option<(usize, Arc<SemanticMap>)>,
}

struct SemanticPacket {
    index: usize,
    map: Arc<SemanticMap>,
    s_bg: SemanticMap,
    s_fg: SignedMap,
    fresh: bool,
    elapsed: Duration,
}

impl<'a> SemanticWorker<'a> {
    fn new(source: &'a mut dyn SemanticSource, p: &PipelineParams) -> Self {
        SemanticWorker {
            source,
            period: p.semantic_period,
            phi: p.phi,
            seed: semantic_seed(p.seed),
            update_on_skipped: p.update_semantic_on_skipped,
            model: None,
            current: None,
        }
    }

    /// Loads the map for position `t` when it is due, without installing it.
    fn fetch(&mut self, position: usize, index: usize) -> Option<Result<SemanticMap>> {
        (position.is_multiple_of(self.period) || self.current.is_none()).then(|| self.source.load(index))
    }

    /// Installs a fetched map; returns whether the frame got a fresh map.
    fn install(&mut self, index: usize, fetched: Option<Result<SemanticMap>>) -> Result<bool> {
        match fetched {
            None => Ok(false),
            Some(map) => {
                let map = map?;
                if self.model.is_none() {
                    self.model = Some(SemanticModel::init(&map, self.phi, self.seed)?);
                }
                self.current = Some((index, Arc::new(map)));
                Ok(true)
            }
        }
    }

    fn acquire(&mut self, position: usize, index: usize) -> Result<bool> {
        let fetched = self.fetch(position, index);
        self.install(index, fetched)
    }

    fn split(&self, fresh: bool, started: Instant) -> Result<SemanticPacket> {
        let (index, map) = self.current.clone().expect("map acquired");
        let model = self.model.as_ref().expect("model initialized");
        let (s_bg, s_fg) = model.split(&map)?;
        Ok(SemanticPacket {
            index,
            map,
            s_bg,
            s_fg,
            fresh,
            elapsed: started.elapsed(),
        })
    }

    fn feedback(&mut self, fresh: bool, fused: &FgMask) -> Result<()> {
        if !fresh && !self.update_on_skipped {
            return Ok(());
        }
        let (_, map) = self.current.as_ref().expect("map acquired");
        self.model
            .as_mut()
            .expect("model initialized")
            .update(map, fused)
    }
}

/// Segmenter side of the loop.
struct BgsWorker<'p> {
    params: &'p PipelineParams,
    segmenter: Option<Box<dyn Segmenter>>,
}

impl<'p> BgsWorker<'p> {
    fn new(params: &'p PipelineParams) -> Self {
        BgsWorker {
            params,
            segmenter: None,
        }
    }

    fn segmenter(&mut self, frame: &Frame) -> Result<&mut Box<dyn Segmenter>> {
        if self.segmenter.is_none() {
            self.segmenter = Some(build_segmenter(
                self.params.segmenter,
                &self.params.segmenter_params,
                frame,
                self.params.seed,
            )?);
        }
        Ok(self.segmenter.as_mut().expect("just built"))
    }
}

/// Runs the loop on the calling thread, strictly in order.
pub fn run_reference<I, F>(
    params: &PipelineParams,
    frames: I,
    mut semantic: Option<&mut dyn SemanticSource>,
    mut sink: F,
) -> Result<()>
where
    I: IntoIterator<Item = Result<(usize, Frame)>>,
    F: FnMut(FrameResult) -> Result<()>,
{
    params.validate()?;
    let mut bgs = BgsWorker::new(params);
    let mut sem = semantic.take().map(|s| SemanticWorker::new(s, params));
    for (position, item) in frames.into_iter().enumerate() {
        let (index, frame) = item.map_err(|e| e.at_frame(position))?;
        let result = (|| {
            let started = Instant::now();
            let seg_model = bgs.segmenter(&frame)?;
            let seg = seg_model.classify(&frame)?;
            let classify_time = started.elapsed();

            let (fused, packet, fuse_time) = match sem.as_mut() {
                None => (seg.mask.clone(), None, Duration::ZERO),
                Some(w) => {
                    let st = Instant::now();
                    let fresh = w.acquire(position, index)?;
                    let packet = w.split(fresh, st)?;
                    let ft = Instant::now();
                    let fused = fuse(&seg.mask, &packet.s_bg, &packet.s_fg, &params.fusion)?;
                    (fused, Some(packet), ft.elapsed())
                }
            };

            let ut = Instant::now();
            seg_model.update(&frame, &seg, &fused)?;
            let update_time = ut.elapsed();

            let mut sem_time = Duration::ZERO;
            if let (Some(w), Some(p)) = (sem.as_mut(), packet.as_ref()) {
                let st = Instant::now();
                w.feedback(p.fresh, &fused)?;
                sem_time = p.elapsed + st.elapsed();
            }
            Ok(FrameResult {
                position,
                index,
                raw: seg.mask,
                fused,
                semantic_index: packet.as_ref().map(|p| p.index),
                semantic: packet.map(|p| p.map),
                timing: StageTiming {
                    bgs: classify_time + update_time,
                    sem: sem_time,
                    fuse: fuse_time,
                },
            })
        })()
        .map_err(|e: Error| e.at_frame(position))?;
        sink(result)?;
    }
    Ok(())
}

struct Tick {
    position: usize,
    index: usize,
}

struct BgsJob {
    tick: Tick,
    frame: Arc<Frame>,
}

fn semantic_thread(
    mut worker: SemanticWorker<'_>,
    ticks: Receiver<Tick>,
    packets: SyncSender<Result<SemanticPacket>>,
    feedback: Receiver<Arc<FgMask>>,
) {
    let mut pending_fresh: Option<bool> = None;
    while let Ok(tick) = ticks.recv() {
        let started = Instant::now();
        // Loading S_t does not depend on D_{t-1}, so it overlaps the
        // segmenter's update of the previous frame.
        let step = (|| {
            // The previous frame's model update still needs S_{t-1}, so the
            // new map is installed only after it.
            let fetched = worker.fetch(tick.position, tick.index);
            let load_time = started.elapsed();
            if let Some(prev_fresh) = pending_fresh.take() {
                let fused = feedback
                    .recv()
                    .map_err(|_| Error::Worker("segmenter stopped".into()))?;
                worker.feedback(prev_fresh, &fused)?;
            }
            let st = Instant::now();
            let fresh = worker.install(tick.index, fetched)?;
            let mut packet = worker.split(fresh, st)?;
            packet.elapsed += load_time;
            Ok(packet)
        })()
        .map_err(|e: Error| e.at_frame(tick.position));
        let failed = step.is_err();
        if let Ok(p) = &step {
            pending_fresh = Some(p.fresh);
        }
        if packets.send(step).is_err() || failed {
            return;
        }
    }
    if let Some(prev_fresh) = pending_fresh {
        if let Ok(fused) = feedback.recv() {
            let _ = worker.feedback(prev_fresh, &fused);
        }
    }
}

fn bgs_thread(
    mut worker: BgsWorker<'_>,
    params: &PipelineParams,
    jobs: Receiver<BgsJob>,
    packets: Option<Receiver<Result<SemanticPacket>>>,
    feedback: Option<SyncSender<Arc<FgMask>>>,
    results: SyncSender<Result<FrameResult>>,
) {
    while let Ok(job) = jobs.recv() {
        let position = job.tick.position;
        let frame = &job.frame;
        let result = (|| {
            let started = Instant::now();
            let seg_model = worker.segmenter(frame)?;
            let seg = seg_model.classify(frame)?;
            let classify_time = started.elapsed();

            let (fused, packet, fuse_time) = match &packets {
                None => (seg.mask.clone(), None, Duration::ZERO),
                Some(rx) => {
                    let packet = rx
                        .recv()
                        .map_err(|_| Error::Worker("semantic worker stopped".into()))??;
                    let ft = Instant::now();
                    let fused = fuse(&seg.mask, &packet.s_bg, &packet.s_fg, &params.fusion)?;
                    (fused, Some(packet), ft.elapsed())
                }
            };
            let fused = Arc::new(fused);
            if let Some(tx) = &feedback {
                tx.send(fused.clone())
                    .map_err(|_| Error::Worker("semantic worker stopped".into()))?;
            }
            let ut = Instant::now();
            seg_model.update(frame, &seg, &fused)?;
            let update_time = ut.elapsed();
            Ok(FrameResult {
                position,
                index: job.tick.index,
                raw: seg.mask,
                fused: Arc::unwrap_or_clone(fused),
                semantic_index: packet.as_ref().map(|p| p.index),
                timing: StageTiming {
                    bgs: classify_time + update_time,
                    sem: packet.as_ref().map(|p| p.elapsed).unwrap_or_default(),
                    fuse: fuse_time,
                },
                semantic: packet.map(|p| p.map),
            })
        })()
        .map_err(|e: Error| e.at_frame(position));
        let failed = result.is_err();
        if results.send(result).is_err() || failed {
            return;
        }
    }
}

/// Runs the loop with the segmenter and the semantic model on two worker
/// threads. Results reach `sink` in frame order and equal those of
/// [`run_reference`].
pub fn run_rtss<I, F>(
    params: &PipelineParams,
    frames: I,
    semantic: Option<&mut dyn SemanticSource>,
    mut sink: F,
) -> Result<()>
where
    I: IntoIterator<Item = Result<(usize, Frame)>>,
    F: FnMut(FrameResult) -> Result<()>,
{
    params.validate()?;
    thread::scope(|scope| {
        let (job_tx, job_rx) = sync_channel::<BgsJob>(1);
        let (result_tx, result_rx) = sync_channel::<Result<FrameResult>>(1);
        let mut tick_tx = None;
        let (packet_rx, feedback_tx) = match semantic {
            Some(source) => {
                let (t_tx, t_rx) = sync_channel::<Tick>(1);
                let (p_tx, p_rx) = sync_channel::<Result<SemanticPacket>>(1);
                let (f_tx, f_rx) = sync_channel::<Arc<FgMask>>(1);
                let worker = SemanticWorker::new(source, params);
                scope.spawn(move || semantic_thread(worker, t_rx, p_tx, f_rx));
                tick_tx = Some(t_tx);
                (Some(p_rx), Some(f_tx))
            }
            None => (None, None),
        };
        let worker = BgsWorker::new(params);
        scope.spawn(move || bgs_thread(worker, params, job_rx, packet_rx, feedback_tx, result_tx));

        let mut in_flight = 0usize;
        let mut receive = |in_flight: &mut usize| -> Result<()> {
            let r = result_rx
                .recv()
                .map_err(|_| Error::Worker("segmenter stopped".into()))??;
            *in_flight -= 1;
            sink(r)
        };
        for (position, item) in frames.into_iter().enumerate() {
            let (index, frame) = item.map_err(|e| e.at_frame(position))?;
            if let Some(tx) = &tick_tx {
                if tx.send(Tick { position, index }).is_err() {
                    // the worker failed; its error arrives through the results
                    loop {
                        receive(&mut in_flight)?;
                    }
                }
            }
            let job = BgsJob {
                tick: Tick { position, index },
                frame: Arc::new(frame),
            };
            if job_tx.send(job).is_err() {
                loop {
                    receive(&mut in_flight)?;
                }
            }
            in_flight += 1;
            if in_flight > 1 {
                receive(&mut in_flight)?;
            }
        }
        drop(tick_tx);
        drop(job_tx);
        while in_flight > 0 {
            receive(&mut in_flight)?;
        }
        Ok(())
    })
}

/// Collects every result of a threaded run.
pub fn collect_rtss<I>(
    params: &PipelineParams,
    frames: I,
    semantic: Option<&mut dyn SemanticSource>,
) -> Result<Vec<FrameResult>>
where
    I: IntoIterator<Item = Result<(usize, Frame)>>,
{
    let mut out = Vec::new();
    run_rtss(params, frames, semantic, |r| {
        out.push(r);
        Ok(())
    })?;
    Ok(out)
}

/// Collects every result of a sequential run.
pub fn collect_reference<I>(
    params: &PipelineParams,
    frames: I,
    semantic: Option<&mut dyn SemanticSource>,
) -> Result<Vec<FrameResult>>
where
    I: IntoIterator<Item = Result<(usize, Frame)>>,
{
    let mut out = Vec::new();
    run_reference(params, frames, semantic, |r| {
        out.push(r);
        Ok(())
    })?;
    Ok(out)
}

//! File-to-file stages and the orchestrated run.
//!
//! Every stage reads its inputs from disk and writes its outputs to disk, so
//! any stage can be re-run on its own. Frames are streamed in blocks of
//! `chunk` frames; receivers run concurrently under [`Exec`].

use std::collections::BTreeSet;
use std::path::Path;
use std::time::Instant;

use crate::detect::{frame_detections, BackgroundAccumulator, DetectContext, Detection};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport, PeakRow, ReceiverInputs, StageTiming};
use crate::exec::Exec;
use crate::frame::CirFrame;
use crate::geometry::Bistatic;
use crate::io::{self, spectrogram, FrameHeader, FrameReader, FrameWriter};
use crate::manifest::{MdopplerParams, ReceiverArtifacts, RunManifest};
use crate::microdoppler::{
    peak_doppler_track_with, stft_spectrogram, SlowTimeExtractor, Spectrogram, TrackTimeline,
};
use crate::scene::{FrameTruth, GroundTruthLog, SceneConfig, Synthesizer, TruthRow};
use crate::sync::{MissingLos, SyncEntry, SyncParams, SyncStatus, Synchronizer};
use crate::tracker::{TrackSample, Tracker, TrackerParams};

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
        }
        _ => Ok(()),
    }
}

/// Simulate one receiver's raw stream into `out`.
pub fn simulate_receiver(
    synth: &Synthesizer,
    rx_id: usize,
    out: &Path,
    chunk: usize,
    exec: Exec,
) -> Result<Vec<FrameTruth>> {
    let scene = synth.scene();
    ensure_parent(out)?;
    let header = FrameHeader::new(
        scene.num_beams,
        scene.num_taps,
        scene.frame_interval,
        rx_id,
        false,
    );
    let mut w = FrameWriter::create(out, header)?;
    let mut truth = Vec::with_capacity(synth.num_frames());
    let mut start = 0;
    while start < synth.num_frames() {
        let end = (start + chunk.max(1)).min(synth.num_frames());
        let (frames, t) = synth.synthesize_block(rx_id, start..end, exec)?;
        w.write_all(&frames)?;
        truth.extend(t);
        start = end;
    }
    w.finish()?;
    let dropped: usize = truth.iter().map(|t| t.dropped).sum();
    if dropped > 0 {
        log::warn!("receiver {rx_id}: {dropped} paths fell beyond the last tap and were dropped");
    }
    Ok(truth)
}

/// TO/FO-correct a raw stream. Frames dropped under [`MissingLos::Drop`]
/// are written as zeros so frame positions keep matching `k`.
pub fn sync_stream(
    input: &Path,
    output: &Path,
    log_path: &Path,
    params: SyncParams,
    chunk: usize,
    exec: Exec,
) -> Result<Vec<SyncEntry>> {
    let mut reader = FrameReader::open(input)?;
    let h = *reader.header();
    ensure_parent(output)?;
    ensure_parent(log_path)?;
    let mut w = FrameWriter::create(
        output,
        FrameHeader::new(
            h.num_beams as usize,
            h.num_taps as usize,
            h.frame_interval,
            h.rx_id as usize,
            true,
        ),
    )?;
    let mut sync = Synchronizer::new(params);
    let mut entries = Vec::with_capacity(reader.remaining());
    loop {
        let block = reader.read_chunk(chunk.max(1))?;
        if block.is_empty() {
            break;
        }
        let (frames, block_entries) = sync.process_block(block, exec)?;
        let mut kept = frames.into_iter();
        for e in &block_entries {
            if e.status == SyncStatus::LosMissing {
                w.write(&CirFrame::zeros(
                    e.k,
                    e.rx_id,
                    h.num_beams as usize,
                    h.num_taps as usize,
                ))?;
            } else {
                let f = kept
                    .next()
                    .ok_or(Error::Empty("synchronizer returned too few frames"))?;
                w.write(&f)?;
            }
        }
        entries.extend(block_entries);
    }
    w.finish()?;
    io::write_csv(log_path, &entries)?;
    let missing = entries
        .iter()
        .filter(|e| e.status != SyncStatus::Ok)
        .count();
    if missing > 0 {
        let how = match params.on_missing {
            MissingLos::ReusePrevious => "reused the previous correction",
            MissingLos::Drop => "dropped",
        };
        log::warn!("receiver {}: no LOS in {missing} frames ({how})", h.rx_id);
    }
    Ok(entries)
}

fn skipped_frames(sync: Option<&[SyncEntry]>) -> BTreeSet<usize> {
    sync.into_iter()
        .flatten()
        .filter(|e| e.status == SyncStatus::LosMissing)
        .map(|e| e.k)
        .collect()
}

fn detect_block(
    frames: &[CirFrame],
    skip: &BTreeSet<usize>,
    ctx: &DetectContext,
    exec: Exec,
    acc: &BackgroundAccumulator,
) -> Result<(Vec<Detection>, usize)> {
    let bg = acc.finish()?;
    let per_frame = exec.map_slice(frames, |f| {
        if skip.contains(&f.k) {
            Ok((Vec::new(), 0))
        } else {
            frame_detections(f, &bg, ctx)
        }
    });
    let mut out = Vec::new();
    let mut failed = 0;
    for r in per_frame {
        let (d, n) = r?;
        out.extend(d);
        failed += n;
    }
    Ok((out, failed))
}

/// Background-subtract, detect and localize. Uses a batch-mean background
/// over the whole stream, or over consecutive windows when
/// `ctx.params.background_window` is set.
pub fn detect_stream(
    synced: &Path,
    sync: Option<&[SyncEntry]>,
    output: &Path,
    ctx: &DetectContext,
    chunk: usize,
    exec: Exec,
) -> Result<Vec<Detection>> {
    let skip = skipped_frames(sync);
    let chunk = chunk.max(1);
    let mut reader = FrameReader::open(synced)?;
    let h = *reader.header();
    let (nb, nt) = (h.num_beams as usize, h.num_taps as usize);
    let mut detections = Vec::new();
    let mut failed = 0;

    match ctx.params.background_window {
        Some(window) => {
            let window = window.max(1);
            loop {
                let block = reader.read_chunk(window)?;
                if block.is_empty() {
                    break;
                }
                let mut acc = BackgroundAccumulator::new(nb, nt);
                let used: Vec<CirFrame> = block
                    .iter()
                    .filter(|f| !skip.contains(&f.k))
                    .cloned()
                    .collect();
                if used.is_empty() {
                    continue;
                }
                acc.add_block(&used, exec)?;
                let (d, n) = detect_block(&block, &skip, ctx, exec, &acc)?;
                detections.extend(d);
                failed += n;
            }
        }
        None => {
            let mut acc = BackgroundAccumulator::new(nb, nt);
            loop {
                let block = reader.read_chunk(chunk)?;
                if block.is_empty() {
                    break;
                }
                let used: Vec<CirFrame> =
                    block.into_iter().filter(|f| !skip.contains(&f.k)).collect();
                acc.add_block(&used, exec)?;
            }
            let mut reader = FrameReader::open(synced)?;
            loop {
                let block = reader.read_chunk(chunk)?;
                if block.is_empty() {
                    break;
                }
                if acc.frames() == 0 {
                    continue;
                }
                let (d, n) = detect_block(&block, &skip, ctx, exec, &acc)?;
                detections.extend(d);
                failed += n;
            }
            if acc.frames() == 0 {
                log::warn!(
                    "receiver {}: no synchronized frames, nothing to detect",
                    h.rx_id
                );
            }
        }
    }
    if failed > 0 {
        log::warn!(
            "receiver {}: {failed} peaks could not be localized",
            h.rx_id
        );
    }
    ensure_parent(output)?;
    io::write_csv(output, &detections)?;
    Ok(detections)
}

/// Group detections by frame and run the tracker.
pub fn track_detections(
    detections: &[Detection],
    num_frames: usize,
    pair: Bistatic,
    params: TrackerParams,
    frame_interval: f64,
    rx_id: usize,
) -> Vec<TrackSample> {
    let mut tracker = Tracker::new(pair, params, frame_interval, rx_id);
    let mut sorted: Vec<&Detection> = detections.iter().collect();
    sorted.sort_by_key(|d| d.k);
    let mut it = sorted.into_iter().peekable();
    let mut frame = Vec::new();
    for k in 0..num_frames {
        frame.clear();
        while let Some(d) = it.next_if(|d| d.k == k) {
            frame.push(d.clone());
        }
        tracker.push_frame(k, &frame);
    }
    tracker.history.samples
}

pub fn track_file(
    detections: &[Detection],
    output: &Path,
    num_frames: usize,
    pair: Bistatic,
    params: TrackerParams,
    frame_interval: f64,
    rx_id: usize,
) -> Result<Vec<TrackSample>> {
    let samples = track_detections(detections, num_frames, pair, params, frame_interval, rx_id);
    ensure_parent(output)?;
    io::write_csv(output, &samples)?;
    Ok(samples)
}

/// Track with the most emitted states, lowest id on ties.
pub fn longest_track(tracks: &[TrackSample]) -> Option<usize> {
    let mut counts = std::collections::BTreeMap::new();
    for s in tracks {
        *counts.entry(s.track_id).or_insert(0usize) += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(id, _)| id)
}

/// Slow-time extraction along the longest track, STFT and peak track.
/// Returns `None` when no track is long enough for one STFT window.
#[allow(clippy::too_many_arguments)]
pub fn mdoppler_stream(
    synced: &Path,
    tracks: &[TrackSample],
    pair: Bistatic,
    tap_length: f64,
    decimation: usize,
    params: &MdopplerParams,
    chunk: usize,
    exec: Exec,
) -> Result<Option<(Spectrogram, Vec<PeakRow>)>> {
    let Some(track_id) = longest_track(tracks) else {
        return Ok(None);
    };
    let mut reader = FrameReader::open(synced)?;
    let h = *reader.header();
    let samples: Vec<TrackSample> = tracks
        .iter()
        .filter(|s| s.track_id == track_id)
        .copied()
        .collect();
    let timeline = TrackTimeline::new(samples, h.frame_interval, decimation.max(1));
    let mut ex = SlowTimeExtractor::new(
        timeline,
        pair,
        tap_length,
        params.half_width,
        h.rx_id as usize,
        h.frame_interval,
    );
    let span = ex.span();
    loop {
        let block = reader.read_chunk(chunk.max(1))?;
        let Some(last) = block.last().map(|f| f.k) else {
            break;
        };
        for f in &block {
            ex.push(f);
        }
        if span.as_ref().is_some_and(|s| last > *s.end()) {
            break;
        }
    }
    let mut st = ex.finish();
    if params.remove_mean {
        st.remove_mean();
    }
    if st.len() < params.window_len {
        log::warn!(
            "receiver {}: track {track_id} spans {} frames, fewer than one STFT window",
            h.rx_id,
            st.len()
        );
        return Ok(None);
    }
    let t0 = st.first_k as f64 * h.frame_interval;
    let spec = stft_spectrogram(
        &st.filled(),
        h.frame_interval,
        &params.stft(),
        t0,
        h.rx_id as usize,
        exec,
    )?;
    let peaks = peak_doppler_track_with(&spec, params.floor_db)
        .into_iter()
        .zip(&spec.times)
        .map(|(f, &t)| PeakRow {
            rx_id: h.rx_id as usize,
            track_id,
            t,
            doppler_hz: f,
        })
        .collect();
    Ok(Some((spec, peaks)))
}

pub fn write_mdoppler(
    artifacts: &ReceiverArtifacts,
    spec: &Spectrogram,
    peaks: &[PeakRow],
) -> Result<()> {
    ensure_parent(&artifacts.spectrogram)?;
    io::write_spectrogram(&artifacts.spectrogram, spec)?;
    io::write_sidecar(artifacts.spectrogram_sidecar(), spec)?;
    io::write_csv(artifacts.spectrogram_csv(), spectrogram::cells(spec))?;
    ensure_parent(&artifacts.peaks)?;
    io::write_csv(&artifacts.peaks, peaks)
}

pub fn detect_context(
    scene: &SceneConfig,
    rx_id: usize,
    params: crate::detect::DetectParams,
) -> DetectContext {
    DetectContext {
        pair: Bistatic::new(scene.tx_position, scene.rx_positions[rx_id]),
        beam_centers: scene.beam_centers.clone(),
        tap_length: scene.tap_length(),
        params,
    }
}

pub fn tracker_params(scene: &SceneConfig, manifest: &RunManifest) -> TrackerParams {
    let mut base = TrackerParams::for_radio(scene.tap_length(), scene.beam_spacing());
    base.v_max = scene.v_max;
    manifest.params.tracker.apply(base)
}

pub fn write_truth(path: &Path, truth: &GroundTruthLog) -> Result<()> {
    ensure_parent(path)?;
    io::write_csv(path, truth.rows())
}

pub fn read_truth(path: &Path) -> Result<GroundTruthLog> {
    Ok(GroundTruthLog::from_rows(io::read_csv::<TruthRow>(path)?))
}

/// Per-receiver results kept for evaluation.
#[derive(Debug, Default)]
struct ReceiverRun {
    num_frames: usize,
    truth: Option<Vec<FrameTruth>>,
    sync: Option<Vec<SyncEntry>>,
    detections: Option<Vec<Detection>>,
    tracks: Option<Vec<TrackSample>>,
    peaks: Option<Vec<PeakRow>>,
    bin_spacing: Option<f64>,
    timings: Vec<StageTiming>,
}

fn timed<T>(
    timings: &mut Vec<StageTiming>,
    stage: &'static str,
    rx_id: usize,
    f: impl FnOnce() -> Result<T>,
) -> Result<T> {
    let start = Instant::now();
    let out = f().map_err(|e| e.in_stage(stage))?;
    timings.push(StageTiming {
        stage: stage.into(),
        rx_id: Some(rx_id),
        seconds: start.elapsed().as_secs_f64(),
    });
    Ok(out)
}

fn frame_count(path: &Path) -> Result<usize> {
    Ok(FrameReader::open(path)?.header().num_frames as usize)
}

fn run_receiver(
    manifest: &RunManifest,
    scene: &SceneConfig,
    synth: Option<&Synthesizer>,
    a: &ReceiverArtifacts,
) -> Result<ReceiverRun> {
    let s = manifest.stages;
    let exec = manifest.exec;
    let chunk = manifest.chunk_frames;
    let rx = a.rx_id;
    let pair = Bistatic::new(scene.tx_position, scene.rx_positions[rx]);
    let tparams = tracker_params(scene, manifest);
    let mut run = ReceiverRun::default();
    let mut t = Vec::new();

    if let Some(synth) = synth.filter(|_| s.simulate) {
        run.truth = Some(timed(&mut t, "simulate", rx, || {
            simulate_receiver(synth, rx, &a.raw, chunk, exec)
        })?);
    }
    if s.sync {
        run.sync = Some(timed(&mut t, "sync", rx, || {
            sync_stream(
                &a.raw,
                &a.synced,
                &a.sync_log,
                manifest.params.sync,
                chunk,
                exec,
            )
        })?);
    } else if s.detect && a.sync_log.exists() {
        run.sync = Some(io::read_csv(&a.sync_log).map_err(|e| e.in_stage("detect"))?);
    }
    if s.detect {
        let ctx = detect_context(scene, rx, manifest.params.detect);
        let sync = run.sync.as_deref();
        run.detections = Some(timed(&mut t, "detect", rx, || {
            detect_stream(&a.synced, sync, &a.detections, &ctx, chunk, exec)
        })?);
    }
    if s.track {
        let num_frames = if a.synced.exists() {
            frame_count(&a.synced).map_err(|e| e.in_stage("track"))?
        } else {
            scene.num_frames()
        };
        let dets = match run.detections.take() {
            Some(d) => d,
            None => io::read_csv(&a.detections).map_err(|e| e.in_stage("track"))?,
        };
        run.tracks = Some(timed(&mut t, "track", rx, || {
            track_file(
                &dets,
                &a.tracks,
                num_frames,
                pair,
                tparams,
                scene.frame_interval,
                rx,
            )
        })?);
        run.detections = Some(dets);
    }
    if s.mdoppler {
        let tracks = match run.tracks.take() {
            Some(tr) => tr,
            None => io::read_csv(&a.tracks).map_err(|e| e.in_stage("mdoppler"))?,
        };
        let out = timed(&mut t, "mdoppler", rx, || {
            let r = mdoppler_stream(
                &a.synced,
                &tracks,
                pair,
                scene.tap_length(),
                tparams.decimation,
                &manifest.params.mdoppler,
                chunk,
                exec,
            )?;
            if let Some((spec, peaks)) = &r {
                write_mdoppler(a, spec, peaks)?;
            }
            Ok(r)
        })?;
        if let Some((spec, peaks)) = out {
            run.bin_spacing = Some(spec.bin_spacing());
            run.peaks = Some(peaks);
        }
        run.tracks = Some(tracks);
    }

    if s.evaluate {
        // pick up artifacts from earlier runs for anything not produced here
        let load = |e: Error| e.in_stage("evaluate");
        if run.sync.is_none() && a.sync_log.exists() {
            run.sync = Some(io::read_csv(&a.sync_log).map_err(load)?);
        }
        if run.detections.is_none() && a.detections.exists() {
            run.detections = Some(io::read_csv(&a.detections).map_err(load)?);
        }
        if run.tracks.is_none() && a.tracks.exists() {
            run.tracks = Some(io::read_csv(&a.tracks).map_err(load)?);
        }
        if run.peaks.is_none() && !s.mdoppler && a.peaks.exists() {
            run.peaks = Some(io::read_csv(&a.peaks).map_err(load)?);
            if a.spectrogram.exists() {
                run.bin_spacing = Some(
                    io::read_spectrogram(&a.spectrogram)
                        .map_err(load)?
                        .bin_spacing(),
                );
            }
        }
    }
    run.num_frames = [&a.synced, &a.raw]
        .into_iter()
        .find(|p| p.exists())
        .map(|p| frame_count(p))
        .transpose()?
        .unwrap_or_else(|| scene.num_frames());
    run.timings = t;
    Ok(run)
}

/// Load and validate the scene a manifest points at, applying the seed
/// override.
pub fn load_scene(manifest: &RunManifest) -> Result<SceneConfig> {
    if !manifest.scene.exists() {
        return Err(Error::Config(format!(
            "scene {} does not exist",
            manifest.scene.display()
        )));
    }
    let text = io::read_text(&manifest.scene)?;
    let mut scene = SceneConfig::from_toml(&text)?;
    if let Some(seed) = manifest.rng_seed {
        scene.rng_seed = seed;
    }
    Ok(scene)
}

/// Run every enabled stage for every receiver, then evaluate.
pub fn run_pipeline(manifest: &RunManifest) -> Result<EvalReport> {
    if !manifest.stages.any() {
        return Ok(EvalReport::default());
    }
    let scene = load_scene(manifest)?;
    let artifacts = manifest.artifacts(scene.num_receivers())?;
    manifest.check_inputs(&artifacts)?;
    std::fs::create_dir_all(&manifest.output_dir)
        .map_err(|e| Error::io(&manifest.output_dir, e))?;

    let synth = if manifest.stages.simulate {
        Some(Synthesizer::new(scene.clone()).map_err(|e| e.in_stage("simulate"))?)
    } else {
        None
    };
    let runs: Vec<ReceiverRun> = manifest
        .exec
        .map_slice(&artifacts, |a| {
            run_receiver(manifest, &scene, synth.as_ref(), a)
        })
        .into_iter()
        .collect::<Result<_>>()?;

    let mut timings: Vec<StageTiming> = runs.iter().flat_map(|r| r.timings.clone()).collect();
    let mut truth: Option<GroundTruthLog> = None;
    if manifest.stages.simulate {
        let log = GroundTruthLog {
            receivers: runs
                .iter()
                .map(|r| r.truth.clone().unwrap_or_default())
                .collect(),
        };
        let start = Instant::now();
        write_truth(&manifest.truth_path(), &log).map_err(|e| e.in_stage("simulate"))?;
        timings.push(StageTiming {
            stage: "truth".into(),
            rx_id: None,
            seconds: start.elapsed().as_secs_f64(),
        });
        truth = Some(log);
    }
    if !manifest.stages.evaluate {
        return Ok(EvalReport {
            timings,
            ..Default::default()
        });
    }

    let start = Instant::now();
    if truth.is_none() && manifest.truth_path().exists() {
        truth = Some(read_truth(&manifest.truth_path()).map_err(|e| e.in_stage("evaluate"))?);
    }
    let tparams = tracker_params(&scene, manifest);
    let inputs: Vec<ReceiverInputs> = runs
        .iter()
        .zip(&artifacts)
        .map(|(r, a)| ReceiverInputs {
            rx_id: a.rx_id,
            pair: Bistatic::new(scene.tx_position, scene.rx_positions[a.rx_id]),
            num_frames: r.num_frames,
            frame_interval: scene.frame_interval,
            decimation: tparams.decimation,
            sync: r.sync.as_deref(),
            detections: r.detections.as_deref(),
            tracks: r.tracks.as_deref(),
            peaks: r.peaks.as_deref(),
            bin_spacing: r.bin_spacing,
            truth: truth
                .as_ref()
                .and_then(|t| t.receivers.get(a.rx_id))
                .map(Vec::as_slice)
                .filter(|t| !t.is_empty()),
        })
        .collect();
    let mut report = evaluate(&inputs, &manifest.params.eval);
    timings.push(StageTiming {
        stage: "evaluate".into(),
        rx_id: None,
        seconds: start.elapsed().as_secs_f64(),
    });
    io::write_json(manifest.report_path(), &report.without_timings())
        .map_err(|e| e.in_stage("evaluate"))?;
    io::write_json(manifest.timings_path(), &timings).map_err(|e| e.in_stage("evaluate"))?;
    report.timings = timings;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::Stages;
    use crate::scenarios::single_walker;

    fn setup(duration: f64) -> (tempfile::TempDir, RunManifest) {
        let dir = tempfile::tempdir().unwrap();
        let scene = dir.path().join("scene.toml");
        std::fs::write(&scene, single_walker(duration, 5).to_toml()).unwrap();
        let mut m = RunManifest::new(&scene, dir.path().join("out"));
        m.chunk_frames = 97;
        (dir, m)
    }

    #[test]
    fn all_stages_off_is_a_no_op() {
        let (_dir, mut m) = setup(0.5);
        m.stages = Stages::all(false);
        let r = run_pipeline(&m).unwrap();
        assert_eq!(r, EvalReport::default());
        assert!(!m.output_dir.exists());
    }

    #[test]
    fn stages_can_be_rerun_from_files() {
        let (_dir, mut m) = setup(0.6);
        let full = run_pipeline(&m).unwrap();
        let r = full.receiver(0).unwrap();
        assert_eq!(r.frames, 1200);
        assert!(r.los_detection_rate.unwrap() > 0.99);
        assert!(r.track_rmse.is_some());
        let report_bytes = std::fs::read(m.report_path()).unwrap();

        m.stages = Stages {
            evaluate: true,
            ..Stages::all(false)
        };
        let again = run_pipeline(&m).unwrap();
        assert_eq!(again.without_timings(), full.without_timings());
        assert_eq!(std::fs::read(m.report_path()).unwrap(), report_bytes);
    }

    #[test]
    fn missing_scene_is_a_config_error() {
        let (dir, mut m) = setup(0.1);
        m.scene = dir.path().join("nope.toml");
        assert!(run_pipeline(&m).unwrap_err().is_config());
    }

    #[test]
    fn corrupt_input_is_a_stage_tagged_io_error() {
        let (_dir, mut m) = setup(0.1);
        m.stages = Stages {
            simulate: true,
            ..Stages::all(false)
        };
        run_pipeline(&m).unwrap();
        let raw = m.artifacts(1).unwrap()[0].raw.clone();
        let mut bytes = std::fs::read(&raw).unwrap();
        bytes.truncate(bytes.len() - 3);
        std::fs::write(&raw, bytes).unwrap();
        m.stages = Stages {
            sync: true,
            ..Stages::all(false)
        };
        let err = run_pipeline(&m).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "sync", .. }), "{err}");
        assert!(err.is_io());
    }

    #[test]
    fn dropped_frames_keep_their_slot() {
        let (_dir, mut m) = setup(0.1);
        m.stages = Stages {
            simulate: true,
            ..Stages::all(false)
        };
        run_pipeline(&m).unwrap();
        let a = &m.artifacts(1).unwrap()[0];
        // an impossible threshold loses every LOS
        let params = SyncParams {
            kappa: 1e9,
            on_missing: MissingLos::Drop,
        };
        let entries =
            sync_stream(&a.raw, &a.synced, &a.sync_log, params, 64, Exec::Sequential).unwrap();
        assert!(entries.iter().all(|e| e.status == SyncStatus::LosMissing));
        let (h, frames) = io::read_frames(&a.synced).unwrap();
        assert_eq!(h.num_frames as usize, entries.len());
        assert!(frames
            .iter()
            .all(|f| f.gains().iter().all(|g| g.norm() == 0.0)));
        m.params.sync = SyncParams {
            kappa: 1e9,
            on_missing: MissingLos::ReusePrevious,
        };
        m.stages = Stages {
            sync: true,
            ..Stages::all(false)
        };
        assert!(matches!(
            run_pipeline(&m).unwrap_err().root(),
            Error::LosMissing { k: 0 }
        ));
    }
}

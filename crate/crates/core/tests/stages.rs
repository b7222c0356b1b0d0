//! Stage-level checks against the simulator's ground truth.

use misac_core::detect::{estimate_background, frame_detections, DetectContext, DetectParams};
use misac_core::geometry::wrap_angle;
use misac_core::microdoppler::{
    peak_doppler_track, stft_spectrogram, target_slow_time, StftParams,
};
use misac_core::scenarios::{single_walker, sit_stand};
use misac_core::scene::synthesize_run;
use misac_core::stats::median;
use misac_core::sync::{sync_pipeline, SyncParams, SyncStatus};
use misac_core::tracker::{track_stream, TrackerParams};
use misac_core::{Bistatic, Exec};

#[test]
fn sync_recovers_the_clock_offsets() {
    let scene = single_walker(1.0, 31);
    let run = synthesize_run(&scene, Exec::Parallel).unwrap();
    let (synced, report) =
        sync_pipeline(run.frames[0].clone(), SyncParams::default(), Exec::Parallel).unwrap();
    let truth = &run.truth.receivers[0];
    assert_eq!(report.count(SyncStatus::Ok), truth.len());
    for (e, t) in report.entries.iter().zip(truth) {
        assert_eq!(e.shift, t.to_shift, "frame {}", t.k);
        assert!(
            wrap_angle(e.phase - t.fo_phase).abs() < 0.2,
            "frame {}",
            t.k
        );
    }
    // the LOS ends up at tap 0 with (almost) zero phase on every frame
    for f in &synced {
        let m = f.beam_max_magnitude();
        let top = (0..m.len()).max_by(|&a, &b| m[a].total_cmp(&m[b])).unwrap();
        assert_eq!(top, 0);
    }
}

#[test]
fn detections_land_on_the_walker() {
    let scene = single_walker(2.0, 32);
    let run = synthesize_run(&scene, Exec::Parallel).unwrap();
    let (synced, _) =
        sync_pipeline(run.frames[0].clone(), SyncParams::default(), Exec::Parallel).unwrap();
    let bg = estimate_background(&synced).unwrap();
    let ctx = DetectContext {
        pair: Bistatic::new(scene.tx_position, scene.rx_positions[0]),
        beam_centers: scene.beam_centers.clone(),
        tap_length: scene.tap_length(),
        params: DetectParams::default(),
    };
    let truth = &run.truth.receivers[0];
    let mut errors = Vec::new();
    for f in &synced {
        let (dets, _) = frame_detections(f, &bg, &ctx).unwrap();
        let torso = truth[f.k].torso(0).unwrap().position;
        if let Some(best) = dets
            .iter()
            .map(|d| d.position().distance(torso))
            .min_by(f64::total_cmp)
        {
            errors.push(best);
        }
    }
    assert!(
        errors.len() > synced.len() / 2,
        "{} of {}",
        errors.len(),
        synced.len()
    );
    assert!(median(&errors) < 0.3, "median {}", median(&errors));
}

#[test]
fn sit_stand_micro_doppler_follows_the_truth() {
    let scene = sit_stand(4.0, 33);
    let run = synthesize_run(&scene, Exec::Parallel).unwrap();
    let pair = Bistatic::new(scene.tx_position, scene.rx_positions[0]);
    let (synced, _) =
        sync_pipeline(run.frames[0].clone(), SyncParams::default(), Exec::Parallel).unwrap();
    let bg = estimate_background(&synced).unwrap();
    let ctx = DetectContext {
        pair,
        beam_centers: scene.beam_centers.clone(),
        tap_length: scene.tap_length(),
        params: DetectParams::default(),
    };
    let dets: Vec<_> = synced
        .iter()
        .map(|f| frame_detections(f, &bg, &ctx).unwrap().0)
        .collect();
    let params = TrackerParams::for_radio(scene.tap_length(), scene.beam_spacing());
    let history = track_stream(&dets, params, pair, scene.frame_interval, 0);
    let id = history.longest().expect("a track");
    let track = history.track(id);

    let mut st = target_slow_time(
        &synced,
        &track,
        pair,
        scene.tap_length(),
        scene.frame_interval,
        2,
        params.decimation,
    );
    st.remove_mean();
    let t0 = st.first_k as f64 * scene.frame_interval;
    let spec = stft_spectrogram(
        &st.filled(),
        scene.frame_interval,
        &StftParams::default(),
        t0,
        0,
        Exec::Parallel,
    )
    .unwrap();
    let truth = &run.truth.receivers[0];
    let errors: Vec<f64> = peak_doppler_track(&spec)
        .iter()
        .zip(&spec.times)
        .filter_map(|(f, &t)| {
            let k = ((t / scene.frame_interval).round() as usize).min(truth.len() - 1);
            f.map(|f| (f - truth[k].torso(0).unwrap().doppler_hz).abs())
        })
        .collect();
    assert!(errors.len() > spec.num_times() / 2);
    let mae = errors.iter().sum::<f64>() / errors.len() as f64;
    assert!(mae < spec.bin_spacing(), "MAE {mae} Hz");
}

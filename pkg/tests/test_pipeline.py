import math
from pathlib import Path

import numpy as np

from hydrocsi.cli import main
from hydrocsi.core import CsiWindow, make_sampling_schedule
from hydrocsi.fileio import pack_frame, read_csi_file
from hydrocsi.pipeline import (
    PipelineOptions,
    iter_windows,
    read_heights_csv,
    read_truth_csv,
    run_pipeline,
    write_detections_csv,
    write_features_csv,
    write_heights_csv,
)
from hydrocsi.simulator import (
    Impairments,
    PathModel,
    Scene,
    StaticPath,
    WaterPath,
    WaterTrajectory,
    generate_csi,
    load_scene,
)
from hydrocsi.track import HeightSeries, align_and_score

from conftest import SCENES_DIR


class TestIterWindows:
    def test_sliding_counts(self, uniform_config):
        sched = make_sampling_schedule(uniform_config, duration_s=120.0)
        rec = generate_csi(uniform_config, [StaticPath(1.0, 1e-9, 0.0)], schedule=sched)
        wins = list(iter_windows(rec, duration_s=60.0, step_s=20.0))
        assert [w[0] for w in wins] == [0.0, 20.0, 40.0, 60.0]
        for start, win in wins:
            assert win.timestamps_s[0] >= 0.0
            assert win.timestamps_s[-1] < 60.0

    def test_rebased_timestamps(self, uniform_config):
        sched = make_sampling_schedule(uniform_config, duration_s=120.0)
        rec = generate_csi(uniform_config, [StaticPath(1.0, 1e-9, 0.0)], schedule=sched)
        wins = dict(iter_windows(rec, 60.0, 30.0))
        np.testing.assert_allclose(
            wins[30.0].timestamps_s, wins[0.0].timestamps_s, atol=1e-9
        )


def _variation_scene(uniform_config, seed=0):
    lam = uniform_config.wavelength_m
    theta = uniform_config.geometry.reflection_angle_rad()
    rate = 0.1 * lam / (2 * math.sin(theta))
    return Scene(
        config=uniform_config,
        static_paths=(StaticPath(1.0, 10e-9, 0.0),),
        water_path=WaterPath(0.8, 40e-9, 0.2, PathModel.LINEAR),
        trajectory=WaterTrajectory(((0.0, 0.0), (1000.0, rate * 1000.0))),
        impairments=Impairments(awgn_snr_db=5.0, awgn_seed=seed),
        duration_s=120.0,
        seed=seed,
    )


class TestRunPipeline:
    def test_variation_scene_tracks(self, uniform_config):
        # 0.1 Hz line, 0.75 s step: 0.47 rad of phase per window, inside the
        # default filter's capture range
        scene = _variation_scene(uniform_config)
        scene = Scene(
            config=scene.config, static_paths=scene.static_paths,
            water_path=scene.water_path, trajectory=scene.trajectory,
            impairments=scene.impairments, duration_s=70.0, seed=scene.seed,
        )
        opts = PipelineOptions(
            doppler_half_span_hz=0.25, doppler_bins=31, window_step_s=0.75
        )
        result = run_pipeline(uniform_config, scene, opts)
        assert len(result.windows) == 14
        assert result.detected_count == len(result.windows)
        assert "0" in result.height_series  # single antenna stream
        series = result.height_series["0"]
        level = HeightSeries(series.times_s, -series.heights_m)
        truth_t = np.arange(0.0, 71.0, 2.0)
        truth = HeightSeries(truth_t, scene.truth_level(truth_t))
        score = align_and_score(level, truth)
        assert score.mean_abs_error_m < 5e-4

    def test_static_scene_mostly_undetected(self):
        scene = load_scene(SCENES_DIR / "static_pool.scene")
        result = run_pipeline(scene.config, scene)
        assert len(result.windows) >= 5
        frac_false = sum(
            not w.detection.detected for w in result.windows
        ) / len(result.windows)
        assert frac_false >= 0.98

    def test_empty_source_zero_rows(self, uniform_config, tmp_path):
        result = run_pipeline(uniform_config, [])
        assert result.windows == []
        write_detections_csv(result, tmp_path / "d.csv")
        write_features_csv(result, tmp_path / "f.csv")
        write_heights_csv(result, tmp_path / "h.csv")
        for name in ("d.csv", "f.csv", "h.csv"):
            lines = (tmp_path / name).read_text().splitlines()
            assert len(lines) == 1  # header only

    def test_pre_windowed_source(self, uniform_config):
        scene = _variation_scene(uniform_config)
        rec = scene.simulate()
        opts = PipelineOptions(doppler_half_span_hz=0.25, doppler_bins=31)
        windows = [w for _, w in iter_windows(rec, 60.0, 30.0)]
        result = run_pipeline(uniform_config, windows, opts)
        assert len(result.windows) == len(windows)

    def test_determinism_byte_identical_outputs(self, uniform_config, tmp_path):
        opts = PipelineOptions(doppler_half_span_hz=0.25, doppler_bins=31,
                               window_step_s=15.0)
        blobs = []
        for run in range(2):
            scene = _variation_scene(uniform_config, seed=9)
            result = run_pipeline(uniform_config, scene, opts)
            d = tmp_path / f"d{run}.csv"
            f = tmp_path / f"f{run}.csv"
            h = tmp_path / f"h{run}.csv"
            write_detections_csv(result, d)
            write_features_csv(result, f)
            write_heights_csv(result, h)
            blobs.append((d.read_bytes(), f.read_bytes(), h.read_bytes()))
        assert blobs[0] == blobs[1]

    def test_failing_window_skipped_not_fatal(self, uniform_config):
        scene = _variation_scene(uniform_config)
        rec = scene.simulate()
        good = [w for _, w in iter_windows(rec, 60.0, 30.0)]
        # a window sampled too slowly for the grid: Nyquist rejection inside
        sparse = CsiWindow(
            good[0].samples[:, :, ::100],
            good[0].timestamps_s[::100],
            uniform_config,
        )
        opts = PipelineOptions(doppler_half_span_hz=0.25, doppler_bins=31)
        result = run_pipeline(uniform_config, [good[0], sparse, good[1]], opts)
        assert len(result.failed_windows) == 1
        assert result.failed_windows[0][0] == 1
        assert "Nyquist" in result.failed_windows[0][1]
        assert len(result.windows) == 2

    def test_angle_hook_overrides_per_window(self, uniform_config):
        scene = _variation_scene(uniform_config)
        scene = Scene(
            config=scene.config, static_paths=scene.static_paths,
            water_path=scene.water_path, trajectory=scene.trajectory,
            impairments=scene.impairments, duration_s=70.0, seed=scene.seed,
        )
        base_opts = PipelineOptions(
            doppler_half_span_hz=0.25, doppler_bins=31, window_step_s=0.75
        )
        fixed = run_pipeline(uniform_config, scene, base_opts)
        # hook returning the geometric angle reproduces the default exactly
        theta = uniform_config.geometry.reflection_angle_rad()
        same = run_pipeline(
            uniform_config, scene,
            PipelineOptions(doppler_half_span_hz=0.25, doppler_bins=31,
                            window_step_s=0.75, angle_hook=lambda s: theta),
        )
        np.testing.assert_allclose(
            same.height_series["0"].heights_m, fixed.height_series["0"].heights_m
        )
        # a steeper angle shrinks every height increment
        steeper = run_pipeline(
            uniform_config, scene,
            PipelineOptions(doppler_half_span_hz=0.25, doppler_bins=31,
                            window_step_s=0.75, angle_hook=lambda s: math.pi / 2.2),
        )
        np.testing.assert_allclose(
            steeper.height_series["0"].heights_m,
            fixed.height_series["0"].heights_m * math.sin(theta) / math.sin(math.pi / 2.2),
            rtol=1e-9,
        )

    def test_multi_antenna_median_stream(self, lte_config):
        # spatial refinement off: one tracker per antenna plus a median stream
        from hydrocsi.core import SystemConfig

        cfg = SystemConfig(
            lte_config.carrier_freq_hz, lte_config.subcarrier_spacing_hz,
            lte_config.num_subcarriers, lte_config.num_antennas,
            lte_config.geometry, window_duration_s=60.0,
            session_duration_s=60.0, gap_duration_s=0.0,
            intra_session_rate_hz=20.0,
        )
        lam = cfg.wavelength_m
        rate = 0.1 * lam / (2 * math.sin(cfg.geometry.reflection_angle_rad()))
        scene = Scene(
            config=cfg,
            static_paths=(StaticPath(1.0, 10e-9, 0.0),),
            water_path=WaterPath(0.8, 150e-9, 0.3, PathModel.LINEAR),
            trajectory=WaterTrajectory(((0.0, 0.0), (1000.0, rate * 1000.0))),
            duration_s=100.0,
        )
        opts = PipelineOptions(
            doppler_half_span_hz=0.25, doppler_bins=31, window_step_s=20.0,
            spatial=False,
        )
        result = run_pipeline(cfg, scene, opts)
        assert set(result.height_series) == {"0", "1", "2", "median"}

    def test_spatial_stream_for_multi_antenna(self, lte_config):
        from hydrocsi.core import SystemConfig

        cfg = SystemConfig(
            lte_config.carrier_freq_hz, lte_config.subcarrier_spacing_hz,
            lte_config.num_subcarriers, lte_config.num_antennas,
            lte_config.geometry, window_duration_s=60.0,
            session_duration_s=60.0, gap_duration_s=0.0,
            intra_session_rate_hz=20.0,
        )
        lam = cfg.wavelength_m
        rate = 0.1 * lam / (2 * math.sin(cfg.geometry.reflection_angle_rad()))
        scene = Scene(
            config=cfg,
            static_paths=(StaticPath(1.0, 10e-9, 0.0),),
            water_path=WaterPath(0.8, 150e-9, 0.3, PathModel.LINEAR),
            trajectory=WaterTrajectory(((0.0, 0.0), (1000.0, rate * 1000.0))),
            duration_s=100.0,
        )
        opts = PipelineOptions(doppler_half_span_hz=0.25, doppler_bins=31,
                               window_step_s=20.0)
        result = run_pipeline(cfg, scene, opts)
        assert set(result.height_series) == {"combined"}
        for w in result.windows:
            if w.detection.detected:
                assert w.combined is not None
                assert len(w.features) == 3


class TestCli:
    def test_simulate_process_report_round_trip(self, tmp_path, capsys):
        out = tmp_path / "rec.csi"
        truth = tmp_path / "truth.csv"
        rc = main([
            "simulate", "--scene", str(SCENES_DIR / "mmwave_lab.scene"),
            "--out", str(out), "--truth-out", str(truth), "--seed", "5",
        ])
        assert rc == 0
        assert out.exists() and truth.exists()
        rec = read_csi_file(out)
        assert rec.samples.shape[0] == 1

        outdir = tmp_path / "proc"
        rc = main([
            "process", str(out), "--out-dir", str(outdir),
            "--config", str(SCENES_DIR / "mmwave_lab.scene"),
            "--threshold-factor", "0.25", "--kalman-q", "1.0",
        ])
        assert rc == 0
        for name in ("detections.csv", "features.csv", "heights.csv"):
            assert (outdir / name).exists()

        rc = main([
            "report", "--heights", str(outdir / "heights.csv"),
            "--truth", str(truth),
            "--detections", str(outdir / "detections.csv"),
            "--expect", "variation",
            "--out", str(tmp_path / "summary.csv"),
        ])
        assert rc == 0
        captured = capsys.readouterr().out
        assert "MAE" in captured
        assert (tmp_path / "summary.csv").exists()

    def test_e2e_subcommand(self, tmp_path, capsys):
        outdir = tmp_path / "e2e"
        rc = main([
            "e2e", "--scene", str(SCENES_DIR / "mmwave_lab.scene"),
            "--out-dir", str(outdir), "--seed", "1",
            "--threshold-factor", "0.25", "--kalman-q", "1.0",
        ])
        assert rc == 0
        assert "MAE" in capsys.readouterr().out
        heights = read_heights_csv(outdir / "heights.csv")
        truth = read_truth_csv(outdir / "truth.csv")
        score = align_and_score(heights["0"], truth)
        assert score.mean_abs_error_m <= 5e-4

    def test_detect_subcommand_writes_only_detections(self, tmp_path):
        out = tmp_path / "rec.csi"
        main([
            "simulate", "--scene", str(SCENES_DIR / "static_pool.scene"),
            "--out", str(out),
        ])
        outdir = tmp_path / "det"
        rc = main([
            "detect", str(out), "--out-dir", str(outdir),
            "--config", str(SCENES_DIR / "static_pool.scene"),
        ])
        assert rc == 0
        assert (outdir / "detections.csv").exists()
        assert not (outdir / "heights.csv").exists()

    def test_track_subcommand(self, tmp_path):
        outdir = tmp_path / "proc"
        main([
            "e2e", "--scene", str(SCENES_DIR / "mmwave_lab.scene"),
            "--out-dir", str(outdir), "--threshold-factor", "0.25",
            "--kalman-q", "1.0",
        ])
        heights_out = tmp_path / "tracked.csv"
        rc = main([
            "track", "--features", str(outdir / "features.csv"),
            "--out", str(heights_out),
            "--config", str(SCENES_DIR / "mmwave_lab.scene"),
            "--step-s", "22", "--kalman-q", "1.0",
        ])
        assert rc == 0
        tracked = read_heights_csv(heights_out)
        assert "0" in tracked

    def test_config_override_flags(self, tmp_path):
        out = tmp_path / "rec.csi"
        rc = main([
            "simulate", "--scene", str(SCENES_DIR / "mmwave_lab.scene"),
            "--out", str(out), "--num-antennas", "2", "--duration-s", "300",
        ])
        assert rc == 0
        assert read_csi_file(out).samples.shape[0] == 2

    def test_frames_input(self, mmwave_config, tmp_path):
        sched = make_sampling_schedule(mmwave_config)
        rec = generate_csi(mmwave_config, [StaticPath(1.0, 10e-9, 0.0)],
                           WaterPath(0.5, 40e-9, 0.2), schedule=sched)
        period = mmwave_config.session_duration_s + mmwave_config.gap_duration_s
        frames = []
        for k in range(14):
            mask = (rec.timestamps_s >= k * period) & (
                rec.timestamps_s < k * period + mmwave_config.session_duration_s
            )
            frames.append(pack_frame(0, k, CsiWindow(
                rec.samples[:, :, mask], rec.timestamps_s[mask], rec.config
            )))
        blob = tmp_path / "stream.frames"
        blob.write_bytes(b"".join(frames))
        outdir = tmp_path / "fromframes"
        rc = main([
            "process", str(blob), "--out-dir", str(outdir),
        ])
        assert rc == 0
        lines = (outdir / "detections.csv").read_text().splitlines()
        assert len(lines) == 2  # header + the one reassembled window

import numpy as np
import pytest

from arbsim import audio
from arbsim.acoustics import (AbsorptionParams, calibrate_absorption,
                              simulate_rir)
from arbsim.audio import (AudioError, DeviceWaveform, active_rms, apply_level,
                          ingest_gscv2, noise_rir_key, read_wav,
                          render_device_audio, speech_rir_key,
                          write_wav_float32, write_wav_int16)
from arbsim.scenario import Point3, RoomSpec, Scenario, SourceSpec

SR = 16000
ANECHOIC = AbsorptionParams(0.0, 0.0)


# --- WAV I/O ---------------------------------------------------------------

def test_wav_roundtrip_int16(tmp_path):
    rng = np.random.default_rng(0)
    x = np.clip(rng.standard_normal(4000) * 0.2, -1, 1)
    path = tmp_path / "a.wav"
    write_wav_int16(path, x)
    y, rate = read_wav(path)
    assert rate == SR
    assert np.max(np.abs(x - y)) < 2.0 / 32768


def test_wav_roundtrip_float32(tmp_path):
    x = np.sin(2 * np.pi * 440 * np.arange(1600) / SR)
    path = tmp_path / "b.wav"
    write_wav_float32(path, x)
    y, _ = read_wav(path)
    assert np.max(np.abs(x - y)) < 1e-6


# --- Level calibration -----------------------------------------------------

def test_active_rms_ignores_silent_padding():
    tone = np.sin(2 * np.pi * 500 * np.arange(SR) / SR)
    padded = np.concatenate([np.zeros(5000), tone, np.zeros(8000)])
    assert active_rms(padded) == pytest.approx(active_rms(tone), rel=1e-3)
    assert active_rms(np.zeros(100)) == 0.0


def test_apply_level_reference_point():
    tone = np.sin(2 * np.pi * 500 * np.arange(SR) / SR)
    assert active_rms(apply_level(tone, 94.0)) == pytest.approx(1.0, rel=1e-6)
    assert active_rms(apply_level(tone, 74.0)) == pytest.approx(0.1, rel=1e-6)
    # each 6 dB halves the amplitude
    assert active_rms(apply_level(tone, 88.0)) == pytest.approx(
        10.0 ** (-6.0 / 20.0), rel=1e-6)


def test_apply_level_rejects_silence():
    with pytest.raises(AudioError):
        apply_level(np.zeros(1000), 70.0)


# --- ingestion -------------------------------------------------------------

def test_ingest_catalog_shape(catalog):
    assert len(catalog.speech_segments) == 200
    total = sum(len(catalog.speech_for_split(s))
                for s in ("train", "val", "test"))
    assert total == 200
    # speaker-disjoint speech splits
    by_split = {s: {seg.utterance_id.split("_nohash_")[0]
                    for seg in catalog.speech_for_split(s)}
                for s in ("train", "val", "test")}
    assert not (by_split["train"] & by_split["val"])
    assert not (by_split["train"] & by_split["test"])
    assert not (by_split["val"] & by_split["test"])
    assert len(catalog.speech_for_split("train")) > 100


def test_ingest_background_subsegments(catalog):
    segs = catalog.background_segments
    assert all(seg.num_samples == 10 * SR for seg in segs)
    assert all(seg.split in ("train", "val", "test") for seg in segs)
    for split in ("train", "val", "test"):
        assert catalog.background_for_split(split)
    # non-overlapping within each recording
    starts = {}
    for seg in segs:
        starts.setdefault(seg.path, []).append(seg.start_sample)
    for path_starts in starts.values():
        path_starts.sort()
        assert all(b - a >= 10 * SR
                   for a, b in zip(path_starts, path_starts[1:]))


def test_ingest_deterministic(corpus_root):
    assert ingest_gscv2(corpus_root) == ingest_gscv2(corpus_root)


def test_ingest_missing_folders(tmp_path):
    with pytest.raises(AudioError):
        ingest_gscv2(tmp_path)


def test_segment_load_lengths(catalog):
    seg = catalog.speech_for_split("train")[0]
    x = seg.load()
    assert 0 < len(x) <= int(audio.MAX_SPEECH_SECONDS * SR)
    bg = catalog.background_for_split("train")[0]
    assert len(bg.load()) == 10 * SR


# --- rendering -------------------------------------------------------------

def _simple_scenario(n_devices=2, n_noises=0, speech_level=70.0,
                     rt60=0.0, spacing=1.0):
    room = RoomSpec(12.0, 8.0, 3.0, rt60)
    speaker = SourceSpec(Point3(2.0, 4.0, 1.6), speech_level, "speech")
    devices = tuple(Point3(2.0 + spacing * (i + 1), 4.0, 1.6)
                    for i in range(n_devices))
    noises = tuple(SourceSpec(Point3(9.0, 2.0 + i, 1.0), 60.0, "noise")
                   for i in range(n_noises))
    return Scenario(room=room, devices=devices, speaker=speaker,
                    noises=noises, seed=0)


def _rirs_for(scenario, absorption=None):
    ab = absorption or (ANECHOIC if scenario.room.rt60 == 0.0
                        else calibrate_absorption(scenario.room))
    max_time = 0.15 if ab.beta == 0.0 else None
    rirs = {}
    sources = [scenario.speaker.location] + [n.location for n in scenario.noises]
    for si, src in enumerate(sources):
        for di, dev in enumerate(scenario.devices):
            rirs[(si, di)] = simulate_rir(scenario.room, src, dev, ab,
                                          max_time=max_time)
    return rirs


def _tone(seconds=0.8, freq=500.0):
    return 0.3 * np.sin(2 * np.pi * freq * np.arange(int(seconds * SR)) / SR)


def test_render_window_and_determinism():
    scenario = _simple_scenario()
    rirs = _rirs_for(scenario)
    speech = _tone()
    a = render_device_audio(scenario, rirs, speech, [], rng_seed=3)
    b = render_device_audio(scenario, rirs, speech, [], rng_seed=3)
    assert len(a) == 2
    for wa, wb in zip(a, b):
        assert len(wa.samples) == 32000
        assert np.array_equal(wa.samples, wb.samples)
        assert wa.applied_jitter == wb.applied_jitter
    c = render_device_audio(scenario, rirs, speech, [], rng_seed=4)
    assert not np.array_equal(a[0].samples, c[0].samples)


def test_render_free_field_levels():
    # anechoic, devices at 1 m and 2 m: received RMS follows 1/r from the
    # calibrated 1 m reference level
    scenario = _simple_scenario(n_devices=2, speech_level=70.0, spacing=1.0)
    rirs = _rirs_for(scenario)
    waves = render_device_audio(scenario, rirs, _tone(), [], rng_seed=0)
    target = 10.0 ** ((70.0 - 94.0) / 20.0)
    assert active_rms(waves[0].samples) == pytest.approx(target, rel=0.02)
    assert active_rms(waves[1].samples) == pytest.approx(target / 2, rel=0.02)


def test_render_linearity_with_silencing():
    scenario = _simple_scenario(n_devices=2, n_noises=2, rt60=0.4)
    rirs = _rirs_for(scenario)
    rng = np.random.default_rng(9)
    speech = _tone()
    noises = [0.2 * rng.standard_normal(SR), 0.2 * rng.standard_normal(2 * SR)]
    full = render_device_audio(scenario, rirs, speech, noises, rng_seed=5)
    speech_only = render_device_audio(scenario, rirs, speech,
                                      [np.zeros_like(n) for n in noises],
                                      rng_seed=5)
    noise_only = render_device_audio(scenario, rirs, np.zeros_like(speech),
                                     noises, rng_seed=5)
    for f, s, n in zip(full, speech_only, noise_only):
        assert np.allclose(f.samples, s.samples + n.samples, atol=1e-10)


def test_render_jitter_statistics():
    scenario = _simple_scenario(n_devices=5)
    rirs = _rirs_for(scenario)
    speech = _tone()
    jitters = []
    for seed in range(120):
        for w in render_device_audio(scenario, rirs, speech, [], rng_seed=seed):
            jitters.append(w.applied_jitter)
    jitters = np.array(jitters)
    assert np.max(np.abs(jitters)) <= 0.3
    assert abs(np.std(jitters) - 0.1) < 0.02
    assert abs(np.mean(jitters)) < 0.02


def test_render_noise_fills_window():
    scenario = _simple_scenario(n_devices=1, n_noises=1)
    rirs = _rirs_for(scenario)
    rng = np.random.default_rng(2)
    # a short noise must loop to cover the whole window
    noise = 0.1 * rng.standard_normal(SR // 2) + 0.05
    waves = render_device_audio(scenario, rirs, np.zeros(8000), [noise],
                                rng_seed=0)
    x = waves[0].samples
    # energy present in every quarter of the window
    for q in range(4):
        assert np.sum(x[q * 8000:(q + 1) * 8000] ** 2) > 0


def test_render_error_cases():
    scenario = _simple_scenario(n_devices=2, n_noises=1)
    rirs = _rirs_for(scenario)
    speech = _tone()
    with pytest.raises(AudioError):
        render_device_audio(scenario, rirs, speech, [], rng_seed=0)
    with pytest.raises(AudioError):
        render_device_audio(scenario, rirs, _tone(seconds=1.7),
                            [np.zeros(SR)], rng_seed=0)
    missing = dict(rirs)
    del missing[noise_rir_key(0, 1)]
    with pytest.raises(AudioError):
        render_device_audio(scenario, missing, speech, [np.zeros(SR)],
                            rng_seed=0)


def test_device_waveform_length_validation():
    with pytest.raises(AudioError):
        DeviceWaveform(samples=np.zeros(100), device_index=0,
                       applied_jitter=0.0)


def test_rir_key_layout():
    assert speech_rir_key(3) == (0, 3)
    assert noise_rir_key(0, 2) == (1, 2)
    assert noise_rir_key(4, 1) == (5, 1)

"""Source audio ingestion, SPL calibration, and per-device rendering.

Levels follow the microphone-calibration convention 94 dB SPL <-> digital
RMS 1.0, measured on the active region of the source waveform and referenced
at 1 m free field; the RIR's 1/r scaling then sets received levels.
"""

from __future__ import annotations

import hashlib
import logging
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import oaconvolve

from .acoustics import Rir
from .scenario import Scenario

log = logging.getLogger(__name__)

SAMPLE_RATE = 16000
WINDOW_SECONDS = 2.0
WINDOW_SAMPLES = 32000
JITTER_SIGMA = 0.1  # s
JITTER_MAX = 0.3  # s, +-3 sigma truncation keeps the keyword in-window
MAX_SPEECH_SECONDS = WINDOW_SECONDS - 2 * JITTER_MAX
BACKGROUND_SUBSEGMENT_SECONDS = 10.0
EXPECTED_KEYWORD_COUNT = 2377
SPL_REFERENCE_DB = 94.0  # dB SPL at digital RMS 1.0
ACTIVE_REGION_FLOOR_DB = 60.0  # trim threshold below peak

SPLITS = ("train", "val", "test")


class AudioError(ValueError):
    pass


# --- WAV I/O ---------------------------------------------------------------

def read_wav(path) -> tuple[np.ndarray, int]:
    """Read a mono WAV (16-bit PCM or float32) as float64 in [-1, 1]."""
    from scipy.io import wavfile

    rate, data = wavfile.read(path)
    if data.ndim > 1:
        data = data[:, 0]
    if data.dtype == np.int16:
        data = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        data = data.astype(np.float64) / 2147483648.0
    else:
        data = data.astype(np.float64)
    return data, int(rate)


def write_wav_float32(path, samples: np.ndarray,
                      sample_rate: int = SAMPLE_RATE) -> None:
    from scipy.io import wavfile

    wavfile.write(path, sample_rate, np.asarray(samples, dtype=np.float32))


def write_wav_int16(path, samples: np.ndarray,
                    sample_rate: int = SAMPLE_RATE) -> None:
    clipped = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    from scipy.io import wavfile

    wavfile.write(path, sample_rate, (clipped * 32767.0).astype(np.int16))


# --- Source catalog --------------------------------------------------------

@dataclass(frozen=True)
class SpeechSegment:
    utterance_id: str
    split: str
    path: str

    def load(self) -> np.ndarray:
        data, rate = read_wav(self.path)
        if rate != SAMPLE_RATE:
            raise AudioError(f"{self.path}: sample rate {rate} != {SAMPLE_RATE}")
        return data


@dataclass(frozen=True)
class BackgroundSegment:
    segment_id: str
    split: str
    path: str
    start_sample: int
    num_samples: int

    def load(self) -> np.ndarray:
        data, rate = read_wav(self.path)
        if rate != SAMPLE_RATE:
            raise AudioError(f"{self.path}: sample rate {rate} != {SAMPLE_RATE}")
        return data[self.start_sample:self.start_sample + self.num_samples]


@dataclass(frozen=True)
class SourceCatalog:
    speech_segments: tuple[SpeechSegment, ...]
    background_segments: tuple[BackgroundSegment, ...]

    def speech_for_split(self, split: str) -> list[SpeechSegment]:
        return [s for s in self.speech_segments if s.split == split]

    def background_for_split(self, split: str) -> list[BackgroundSegment]:
        return [s for s in self.background_segments if s.split == split]


def _speaker_split(speaker_id: str) -> str:
    """Stable speaker-level split: hash of the speaker id into 80/10/10."""
    digest = hashlib.sha1(speaker_id.encode("utf-8")).hexdigest()
    bucket = int(digest, 16) % 100
    if bucket < 80:
        return "train"
    if bucket < 90:
        return "val"
    return "test"


def _index_split(index: int) -> str:
    # 80/10/10 by position, interleaved so every recording feeds all splits
    r = index % 10
    if r == 8:
        return "val"
    if r == 9:
        return "test"
    return "train"


def ingest_gscv2(dataset_root, keyword: str = "seven") -> SourceCatalog:
    """Catalog a Google SpeechCommands v2 style directory.

    Expects ``<root>/<keyword>/*.wav`` utterances named
    ``<speaker>_nohash_<n>.wav`` and ``<root>/_background_noise_/*.wav``
    recordings, all 16 kHz mono. Speech is split by a stable hash of the
    speaker id; background recordings are cut into non-overlapping 10 s
    subsegments which are then partitioned 80/10/10 by index.
    """
    root = Path(dataset_root)
    kw_dir = root / keyword
    bg_dir = root / "_background_noise_"
    if not kw_dir.is_dir():
        raise AudioError(f"missing keyword folder: {kw_dir}")
    if not bg_dir.is_dir():
        raise AudioError(f"missing background folder: {bg_dir}")

    speech = []
    for path in sorted(kw_dir.glob("*.wav")):
        with wave.open(str(path)) as w:
            if w.getframerate() != SAMPLE_RATE:
                raise AudioError(
                    f"{path}: sample rate {w.getframerate()} != {SAMPLE_RATE}")
        speaker = path.stem.split("_nohash_")[0]
        speech.append(SpeechSegment(utterance_id=path.stem,
                                    split=_speaker_split(speaker),
                                    path=str(path)))
    if len(speech) != EXPECTED_KEYWORD_COUNT:
        log.warning("expected %d '%s' utterances, found %d",
                    EXPECTED_KEYWORD_COUNT, keyword, len(speech))

    sub_len = int(BACKGROUND_SUBSEGMENT_SECONDS * SAMPLE_RATE)
    background = []
    index = 0
    for path in sorted(bg_dir.glob("*.wav")):
        with wave.open(str(path)) as w:
            if w.getframerate() != SAMPLE_RATE:
                raise AudioError(
                    f"{path}: sample rate {w.getframerate()} != {SAMPLE_RATE}")
            n_frames = w.getnframes()
        for k in range(n_frames // sub_len):
            background.append(BackgroundSegment(
                segment_id=f"{path.stem}:{k}",
                split=_index_split(index),
                path=str(path),
                start_sample=k * sub_len,
                num_samples=sub_len))
            index += 1
    if not background:
        raise AudioError(f"no usable background subsegments under {bg_dir}")

    return SourceCatalog(speech_segments=tuple(speech),
                         background_segments=tuple(background))


# --- Level calibration -----------------------------------------------------

def active_rms(waveform: np.ndarray) -> float:
    """RMS over the active region (edges below peak - 60 dB trimmed)."""
    x = np.asarray(waveform, dtype=np.float64)
    peak = np.max(np.abs(x)) if x.size else 0.0
    if peak == 0.0:
        return 0.0
    thresh = peak * 10.0 ** (-ACTIVE_REGION_FLOOR_DB / 20.0)
    loud = np.nonzero(np.abs(x) >= thresh)[0]
    region = x[loud[0]:loud[-1] + 1]
    return float(np.sqrt(np.mean(region ** 2)))


def apply_level(waveform: np.ndarray, target_level_db_spl: float) -> np.ndarray:
    """Scale so active-region RMS is 10**((level - 94) / 20)."""
    rms = active_rms(waveform)
    if rms == 0.0:
        raise AudioError("cannot calibrate an all-zero waveform")
    target_rms = 10.0 ** ((target_level_db_spl - SPL_REFERENCE_DB) / 20.0)
    return np.asarray(waveform, dtype=np.float64) * (target_rms / rms)


# --- Rendering -------------------------------------------------------------

@dataclass(frozen=True)
class DeviceWaveform:
    samples: np.ndarray  # exactly WINDOW_SAMPLES
    device_index: int
    applied_jitter: float  # s

    def __post_init__(self):
        if len(self.samples) != WINDOW_SAMPLES:
            raise AudioError(
                f"device waveform must have {WINDOW_SAMPLES} samples, "
                f"got {len(self.samples)}")


def speech_rir_key(device_index: int) -> tuple[int, int]:
    return (0, device_index)


def noise_rir_key(noise_index: int, device_index: int) -> tuple[int, int]:
    return (1 + noise_index, device_index)


def _tile_to_length(x: np.ndarray, n: int, offset: int) -> np.ndarray:
    """Loop/crop ``x`` (circularly, starting at ``offset``) to ``n`` samples."""
    if x.size == 0:
        raise AudioError("empty noise segment")
    idx = (offset + np.arange(n)) % x.size
    return x[idx]


def render_device_audio(scenario: Scenario,
                        rirs: dict[tuple[int, int], Rir],
                        speech: np.ndarray,
                        noises: list[np.ndarray],
                        rng_seed: int) -> list[DeviceWaveform]:
    """Convolve calibrated sources with their RIRs, mix, jitter, and trim.

    ``rirs`` maps (source slot, device index) to the corresponding impulse
    response, with slot 0 the speaker and slot 1+k the k-th noise source.
    The speech utterance is centered in the nominal window; each device then
    gets an independent Gaussian start-time jitter (sigma 0.1 s, truncated
    at +-0.3 s). Deterministic in (scenario, rng_seed).
    """
    if len(noises) != len(scenario.noises):
        raise AudioError("noise waveform count does not match scenario")
    if len(speech) > int(MAX_SPEECH_SECONDS * SAMPLE_RATE):
        raise AudioError(
            f"speech of {len(speech)} samples exceeds the "
            f"{MAX_SPEECH_SECONDS:.1f} s jitter-safe limit")

    n_devices = len(scenario.devices)
    n_sources = 1 + len(noises)
    for si in range(n_sources):
        for di in range(n_devices):
            if (si, di) not in rirs:
                raise AudioError(f"missing RIR for source {si}, device {di}")

    max_rir = max(len(rirs[(si, di)])
                  for si in range(n_sources) for di in range(n_devices))
    jitter_margin = int(JITTER_MAX * SAMPLE_RATE)
    # room for reverb tails of audio preceding the window and for negative jitter
    pre = max(max_rir, jitter_margin)
    ext_len = pre + WINDOW_SAMPLES + jitter_margin

    jitter_rng = np.random.default_rng([rng_seed, 1])
    noise_rng = np.random.default_rng([rng_seed, 2])

    # dry, level-calibrated source signals on the extended timeline
    dry = np.zeros((n_sources, ext_len))
    if np.any(speech):
        calibrated = apply_level(speech, scenario.speaker.level_db_spl)
        start = pre + WINDOW_SAMPLES // 2 - len(calibrated) // 2
        dry[0, start:start + len(calibrated)] = calibrated
    for k, noise in enumerate(noises):
        offset = int(noise_rng.integers(0, max(len(noise), 1)))
        if np.any(noise):
            looped = _tile_to_length(np.asarray(noise, dtype=np.float64),
                                     ext_len, offset)
            dry[1 + k] = apply_level(looped, scenario.noises[k].level_db_spl)

    out = []
    for di in range(n_devices):
        mixed = np.zeros(ext_len)
        for si in range(n_sources):
            if np.any(dry[si]):
                wet = oaconvolve(dry[si], rirs[(si, di)].samples)
                mixed += wet[:ext_len]
        jitter = float(jitter_rng.normal(0.0, JITTER_SIGMA))
        while abs(jitter) > JITTER_MAX:
            jitter = float(jitter_rng.normal(0.0, JITTER_SIGMA))
        shift = int(round(jitter * SAMPLE_RATE))
        window = mixed[pre + shift:pre + shift + WINDOW_SAMPLES]
        out.append(DeviceWaveform(samples=window, device_index=di,
                                  applied_jitter=jitter))
    return out

"""Log-filterbank-energy (LFBE) features for 2 s device windows.

25 ms frames every 10 ms, Hann window, 64 triangular mel bands over
20 Hz - 8 kHz, natural log with a 1e-10 floor. 200 samples of reflective
padding at each end yield floor(32000 / 160) + 1 = 201 frames.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

SAMPLE_RATE = 16000
FRAME_SIZE = 400  # 25 ms
FRAME_SKIP = 160  # 10 ms
N_MEL = 64
MEL_FMIN = 20.0
MEL_FMAX = 8000.0
LOG_FLOOR = 1e-10
N_FRAMES = 201
N_FFT = 512
INPUT_SAMPLES = 32000


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class LfbeImage:
    values: np.ndarray  # (N_FRAMES, N_MEL)
    frame_rate: float = SAMPLE_RATE / FRAME_SKIP

    def __post_init__(self):
        if self.values.shape != (N_FRAMES, N_MEL):
            raise FeatureError(f"LFBE shape {self.values.shape} != "
                               f"({N_FRAMES}, {N_MEL})")


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_band_centers_hz(n_mel: int = N_MEL, fmin: float = MEL_FMIN,
                        fmax: float = MEL_FMAX) -> np.ndarray:
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mel + 2))
    return edges[1:-1]


@lru_cache(maxsize=4)
def _mel_filterbank(n_mel: int, n_fft: int, sample_rate: int,
                    fmin: float, fmax: float) -> np.ndarray:
    """Triangular filters on the HTK mel scale, normalized to unit area."""
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mel + 2))
    fft_freqs = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)
    fb = np.zeros((n_mel, len(fft_freqs)))
    for b in range(n_mel):
        lo, center, hi = edges[b], edges[b + 1], edges[b + 2]
        rising = (fft_freqs - lo) / (center - lo)
        falling = (hi - fft_freqs) / (hi - center)
        fb[b] = np.maximum(0.0, np.minimum(rising, falling))
        fb[b] *= 2.0 / (hi - lo)  # unit-area (Slaney-style) normalization
    return fb


def compute_lfbe(waveform: np.ndarray) -> LfbeImage:
    """201 x 64 LFBE image of a 32000-sample, 16 kHz waveform."""
    x = np.asarray(waveform, dtype=np.float64)
    if x.ndim != 1 or len(x) != INPUT_SAMPLES:
        raise FeatureError(f"expected {INPUT_SAMPLES} samples, got {x.shape}")

    pad = FRAME_SIZE // 2
    padded = np.pad(x, pad, mode="reflect")
    starts = np.arange(N_FRAMES) * FRAME_SKIP
    frames = padded[starts[:, None] + np.arange(FRAME_SIZE)]
    window = np.hanning(FRAME_SIZE)
    spectrum = np.fft.rfft(frames * window, n=N_FFT, axis=1)
    power = np.abs(spectrum) ** 2
    fb = _mel_filterbank(N_MEL, N_FFT, SAMPLE_RATE, MEL_FMIN, MEL_FMAX)
    mel_energy = power @ fb.T
    return LfbeImage(values=np.log(mel_energy + LOG_FLOOR))


# --- Feature file format ---------------------------------------------------

def save_lfbe(path, image: LfbeImage, config_hash: str = "") -> None:
    """Row-major little-endian float32 blob plus a JSON sidecar."""
    import json

    values = image.values.astype("<f4")
    with open(path, "wb") as f:
        f.write(values.tobytes())
    sidecar = {
        "shape": list(values.shape),
        "dtype": "<f4",
        "order": "C",
        "config_hash": config_hash,
    }
    with open(str(path) + ".json", "w") as f:
        json.dump(sidecar, f)


def load_lfbe(path) -> LfbeImage:
    import json

    with open(str(path) + ".json") as f:
        sidecar = json.load(f)
    values = np.fromfile(path, dtype=sidecar["dtype"])
    values = values.reshape(sidecar["shape"]).astype(np.float64)
    return LfbeImage(values=values)

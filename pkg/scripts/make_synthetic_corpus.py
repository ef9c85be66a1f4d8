#!/usr/bin/env python3
"""Generate a synthetic source-audio corpus in the GSCv2 directory layout.

Real Google SpeechCommands v2 audio is not bundled; this script fabricates a
format-identical stand-in: ``seven/<speaker>_nohash_<n>.wav`` keyword
utterances (speaker-dependent harmonic bursts with consonant-like noise, so
they carry broadband 0.3-7 kHz energy) and ``_background_noise_/*.wav``
recordings modeled on typical household ambience (air conditioner, mains
hum, running water, distant TV music, a rhythmic exercise machine, and a
steady low-frequency noise floor). Point the pipeline's ``gscv2_root`` at
the output directory. If you have the real dataset, use it instead;
everything downstream is identical.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from arbsim.audio import write_wav_int16  # noqa: E402

SR = 16000


def synth_keyword(rng: np.random.Generator, pitch_hz: float) -> np.ndarray:
    """A two-syllable keyword-like token, roughly 0.7 s."""
    def syllable(dur, f0, formants):
        n = int(dur * SR)
        t = np.arange(n) / SR
        voiced = np.zeros(n)
        for k in range(1, 12):
            voiced += np.sin(2 * np.pi * k * f0 * t + rng.uniform(0, 2 * np.pi)) / k
        shaped = np.zeros(n)
        for fc, gain in formants:
            shaped += gain * voiced * np.sin(2 * np.pi * fc * t)
        env = np.hanning(n)
        return shaped * env

    def fricative(dur):
        n = int(dur * SR)
        noise = rng.standard_normal(n)
        # crude high-pass for an "s"-like hiss
        hp = np.diff(noise, prepend=0.0)
        return hp * np.hanning(n) * 0.5

    f0 = pitch_hz * rng.uniform(0.95, 1.05)
    parts = [
        fricative(rng.uniform(0.08, 0.14)),
        syllable(rng.uniform(0.15, 0.22), f0,
                 [(700, 1.0), (1800, 0.6), (2600, 0.4)]),
        syllable(rng.uniform(0.12, 0.2), f0 * 0.9,
                 [(500, 1.0), (1500, 0.5), (3500, 0.5), (5200, 0.3)]),
    ]
    gap = np.zeros(int(rng.uniform(0.01, 0.03) * SR))
    out = np.concatenate([parts[0], gap, parts[1], parts[2]])
    return 0.5 * out / np.max(np.abs(out))


def _shaped_noise(rng: np.random.Generator, n: int, power_shape) -> np.ndarray:
    """Gaussian noise with the given one-sided power spectral density shape."""
    white = rng.standard_normal(n)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, 1 / SR)
    spectrum *= np.sqrt(power_shape(np.maximum(freqs, 1.0)))
    return np.fft.irfft(spectrum, n)


def _smooth(env: np.ndarray, n_smooth: int = 160) -> np.ndarray:
    """Soften envelope attacks (>=10 ms) so transients stay low-frequency."""
    kernel = np.hanning(n_smooth)
    kernel /= kernel.sum()
    return np.convolve(env, kernel, mode="same")


def synth_background(rng: np.random.Generator, kind: str,
                     seconds: float) -> np.ndarray:
    n = int(seconds * SR)
    t = np.arange(n) / SR
    if kind == "ac":
        # air conditioner: low rumble plus a steady fan tone
        out = _shaped_noise(rng, n, lambda f: 1.0 / (1.0 + (f / 200.0) ** 4))
        out += 0.6 * np.sin(2 * np.pi * 118.0 * t) \
            + 0.3 * np.sin(2 * np.pi * 236.0 * t + 1.0)
    elif kind == "hum":
        out = sum(np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi)) / (i + 1)
                  for i, f in enumerate((60, 120, 180, 240)))
        out += 0.1 * _shaped_noise(rng, n,
                                   lambda f: 1.0 / (1.0 + (f / 400.0) ** 4))
    elif kind == "tap":
        # running water: low turbulent rumble with slow modulation
        out = _shaped_noise(rng, n, lambda f: 1.0 / (1.0 + (f / 400.0) ** 8))
        out *= 1.0 + 0.4 * np.sin(2 * np.pi * rng.uniform(0.5, 2.0) * t
                                  + rng.uniform(0, 2 * np.pi))
    elif kind == "brown":
        out = _shaped_noise(rng, n, lambda f: 1.0 / f ** 2)
    elif kind == "tv":
        # distant TV music: bass-heavy chords on a steady beat
        out = np.zeros(n)
        beat = rng.uniform(0.4, 0.6)
        roots = rng.choice([110.0, 123.5, 146.8, 164.8], size=64)
        i = 0
        tpos = 0.0
        while tpos < seconds - 1.0:
            dur = int(beat * SR)
            seg = np.arange(dur) / SR
            root = roots[i % len(roots)]
            chord = sum(np.sin(2 * np.pi * root * m * seg
                               + rng.uniform(0, 2 * np.pi)) / m
                        for m in (1, 2, 3, 4, 5))
            env = _smooth(np.exp(-seg / (beat * 0.8)) *
                          np.minimum(seg / 0.02, 1.0))
            s = int(tpos * SR)
            out[s:s + dur] += chord * env
            tpos += beat
            i += 1
        out += 0.15 * _shaped_noise(rng, n,
                                    lambda f: 1.0 / (1.0 + (f / 400.0) ** 6))
    else:  # bike: rhythmic exercise machine, low whir plus soft thumps
        period = rng.uniform(0.4, 0.9)
        whir = np.sin(2 * np.pi * rng.uniform(150, 350) * t)
        thump_env = _smooth(np.exp(-np.mod(t, period) / 0.05))
        rumble = _shaped_noise(rng, n, lambda f: 1.0 / (1.0 + (f / 150.0) ** 4))
        out = 0.4 * whir * thump_env + 2.0 * thump_env * rumble + 0.3 * rumble
    return 0.3 * out / np.max(np.abs(out))


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out", help="output corpus root")
    parser.add_argument("--utterances", type=int, default=2377)
    parser.add_argument("--speakers", type=int, default=120)
    parser.add_argument("--background-minutes", type=float, default=11.0)
    parser.add_argument("--seed", type=int, default=1234)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    root = Path(args.out)
    kw_dir = root / "seven"
    bg_dir = root / "_background_noise_"
    kw_dir.mkdir(parents=True, exist_ok=True)
    bg_dir.mkdir(parents=True, exist_ok=True)

    speakers = [f"{rng.integers(0, 16**8):08x}" for _ in range(args.speakers)]
    pitches = rng.uniform(90, 280, size=args.speakers)
    counts = {s: 0 for s in speakers}
    for _ in range(args.utterances):
        idx = int(rng.integers(args.speakers))
        speaker = speakers[idx]
        wav = synth_keyword(rng, pitches[idx])
        write_wav_int16(kw_dir / f"{speaker}_nohash_{counts[speaker]}.wav", wav)
        counts[speaker] += 1

    kinds = ["ac", "hum", "tap", "brown", "tv", "bike"]
    per_file = args.background_minutes * 60 / len(kinds)
    for kind in kinds:
        write_wav_int16(bg_dir / f"{kind}_noise.wav",
                        synth_background(rng, kind, per_file))

    print(f"wrote {args.utterances} utterances ({args.speakers} speakers) and "
          f"{len(kinds)} background files under {root}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

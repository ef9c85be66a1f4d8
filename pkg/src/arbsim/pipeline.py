"""Scenario-to-dataset glue: RIR computation, rendering, feature extraction.

All randomness derives from one global seed through fixed per-stage stream
ids, so every artifact is reproducible from (config, seed) alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import acoustics, audio, features
from .acoustics import Rir
from .audio import DeviceWaveform, SourceCatalog
from .scenario import GroundTruth, Scenario, ground_truth

# fixed stream ids for per-stage seed derivation
STREAM_SCENARIO = 0
STREAM_RENDER = 1

SPLIT_IDS = {"train": 0, "val": 1, "test": 2}


def derive_seed(global_seed: int, stream: int, split: str, index: int,
                copy: int = 0) -> int:
    """Stable substream seed for (stage, split, scenario index).

    ``copy`` distinguishes augmentation re-renders of the same scenario;
    copy 0 reproduces the historical derivation exactly.
    """
    entropy = [global_seed, stream, SPLIT_IDS[split], index]
    if copy:
        entropy.append(copy)
    ss = np.random.SeedSequence(entropy)
    return int(ss.generate_state(1)[0])


def compute_scenario_rirs(scenario: Scenario,
                          directivity=acoustics.OMNI,
                          ) -> dict[tuple[int, int], Rir]:
    """RIRs for every (source slot, device) pair; slot 0 is the speaker."""
    absorption = acoustics.calibrate_absorption(scenario.room)
    rirs = {}
    sources = [scenario.speaker] + list(scenario.noises)
    for si, src in enumerate(sources):
        for di, mic in enumerate(scenario.devices):
            rirs[(si, di)] = acoustics.simulate_rir(
                scenario.room, src.location, mic, absorption,
                directivity=directivity)
    return rirs


@dataclass(frozen=True)
class RenderedScenario:
    scenario: Scenario
    truth: GroundTruth
    device_waveforms: list[DeviceWaveform]
    speech_id: str
    noise_ids: tuple[str, ...]

    def lfbe_stack(self) -> np.ndarray:
        """(n_devices, frames, bands) float32 feature stack."""
        return np.stack([
            features.compute_lfbe(w.samples).values.astype(np.float32)
            for w in self.device_waveforms])


def render_scenario(scenario: Scenario, catalog: SourceCatalog, split: str,
                    render_seed: int,
                    rirs: dict[tuple[int, int], Rir] | None = None,
                    ) -> RenderedScenario:
    """Render one scenario using split-correct source segments."""
    rng = np.random.default_rng([render_seed, 0])
    speech_pool = catalog.speech_for_split(split)
    if not speech_pool:
        raise audio.AudioError(f"no speech segments in split {split!r}")
    speech_seg = speech_pool[int(rng.integers(len(speech_pool)))]
    noise_segs = []
    bg_pool = catalog.background_for_split(split)
    for _ in scenario.noises:
        if not bg_pool:
            raise audio.AudioError(f"no background segments in split {split!r}")
        noise_segs.append(bg_pool[int(rng.integers(len(bg_pool)))])

    if rirs is None:
        rirs = compute_scenario_rirs(scenario)
    waveforms = audio.render_device_audio(
        scenario, rirs,
        speech=speech_seg.load(),
        noises=[seg.load() for seg in noise_segs],
        rng_seed=render_seed)
    return RenderedScenario(
        scenario=scenario,
        truth=ground_truth(scenario),
        device_waveforms=waveforms,
        speech_id=speech_seg.utterance_id,
        noise_ids=tuple(seg.segment_id for seg in noise_segs))

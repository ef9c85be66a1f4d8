"""Arbitration scenario sampling: rooms, devices, speakers, noise sources.

Scenarios are drawn from a fixed generative process (uniform room extents,
Beta-distributed reverberation time and placements, categorical device count,
Poisson noise count) with spatial constraints enforced by rejection sampling.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

SCHEMA_VERSION = 1

SPEECH = "speech"
NOISE = "noise"


class SamplingError(RuntimeError):
    """Rejection budget exhausted: the configuration admits no valid layout."""


@dataclass(frozen=True)
class Point3:
    x: float
    y: float
    z: float

    def distance_to(self, other: "Point3") -> float:
        return math.sqrt(
            (self.x - other.x) ** 2
            + (self.y - other.y) ** 2
            + (self.z - other.z) ** 2
        )

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)


@dataclass(frozen=True)
class RoomSpec:
    """Rectangular room extents in meters plus desired reverberation time.

    ``rt60 == 0.0`` denotes the anechoic override (walls fully absorbing).
    """

    length: float
    width: float
    height: float
    rt60: float

    @property
    def volume(self) -> float:
        return self.length * self.width * self.height

    @property
    def surface_area(self) -> float:
        l, w, h = self.length, self.width, self.height
        return 2.0 * (l * w + l * h + w * h)


@dataclass(frozen=True)
class SourceSpec:
    location: Point3
    level_db_spl: float
    kind: str  # SPEECH or NOISE


@dataclass(frozen=True)
class Scenario:
    room: RoomSpec
    devices: tuple[Point3, ...]
    speaker: SourceSpec
    noises: tuple[SourceSpec, ...]
    seed: int


@dataclass(frozen=True)
class GroundTruth:
    distances: tuple[float, ...]
    closest_index: int
    d1: float
    d2: float


@dataclass(frozen=True)
class GenConfig:
    """Knobs of the generative process. Defaults follow the standard recipe."""

    room_lw_range: tuple[float, float] = (3.0, 10.0)
    room_h_range: tuple[float, float] = (2.5, 6.0)
    rt60_beta: tuple[float, float] = (2.5, 1.8)
    min_rt60: float = 0.05
    device_count_probs: tuple[float, ...] = (0.7, 0.25, 0.03, 0.02)  # N = 2..5
    device_xy_beta: tuple[float, float] = (0.2, 0.2)
    speaker_xy_beta: tuple[float, float] = (3.0, 3.0)
    noise_count_poisson_mean: float = 2.0
    noise_level_range: tuple[float, float] = (25.0, 80.0)
    speech_level_range: tuple[float, float] = (45.0, 70.0)
    device_height: float = 0.75
    speaker_height: float = 1.60
    noise_height_margin: float = 0.3
    wall_clearance: float = 0.10
    min_speaker_device_distance: float = 1.0
    rejection_budget: int = 10_000
    noise_free: bool = False
    anechoic: bool = False
    enforce_constraints: bool = True


def _sample_xy(rng: np.random.Generator, beta: tuple[float, float] | None,
               room: RoomSpec) -> tuple[float, float]:
    """Draw an (x, y) position relative to the room footprint."""
    if beta is None:
        u, v = rng.uniform(0.0, 1.0, size=2)
    else:
        u = rng.beta(*beta)
        v = rng.beta(*beta)
    return u * room.length, v * room.width


def _clear_of_walls(x: float, y: float, room: RoomSpec, clearance: float) -> bool:
    return (clearance <= x <= room.length - clearance
            and clearance <= y <= room.width - clearance)


def sample_scenario(rng_seed: int, config: GenConfig = GenConfig()) -> Scenario:
    """Sample one scenario; deterministic in (rng_seed, config).

    Constraint violations are resolved by resampling device and speaker
    locations within the same room (never by clamping), so the room and
    level marginals stay exact.

    Raises :class:`SamplingError` once the rejection budget is exhausted.
    """
    rng = np.random.default_rng(rng_seed)

    length = rng.uniform(*config.room_lw_range)
    width = rng.uniform(*config.room_lw_range)
    height = rng.uniform(*config.room_h_range)
    if config.anechoic:
        rt60 = 0.0
    else:
        rt60 = rng.beta(*config.rt60_beta)
        while rt60 < config.min_rt60:
            rt60 = rng.beta(*config.rt60_beta)
    room = RoomSpec(length=length, width=width, height=height, rt60=rt60)

    n_devices = 2 + int(rng.choice(len(config.device_count_probs),
                                   p=np.asarray(config.device_count_probs)))

    for _ in range(config.rejection_budget):
        devices = []
        for _ in range(n_devices):
            x, y = _sample_xy(rng, config.device_xy_beta, room)
            devices.append(Point3(x, y, config.device_height))
        sx, sy = _sample_xy(rng, config.speaker_xy_beta, room)
        speaker_loc = Point3(sx, sy, config.speaker_height)

        if not config.enforce_constraints:
            break
        ok = all(_clear_of_walls(p.x, p.y, room, config.wall_clearance)
                 for p in devices + [speaker_loc])
        if ok:
            dmin = min(speaker_loc.distance_to(p) for p in devices)
            ok = dmin >= config.min_speaker_device_distance
        if ok:
            break
    else:
        raise SamplingError(
            f"no valid device/speaker layout after {config.rejection_budget} "
            f"attempts (seed={rng_seed})")

    speech_level = rng.uniform(*config.speech_level_range)
    speaker = SourceSpec(location=speaker_loc, level_db_spl=speech_level,
                         kind=SPEECH)

    if config.noise_free:
        n_noise = 0
    else:
        n_noise = int(rng.poisson(config.noise_count_poisson_mean))
    noises = []
    for _ in range(n_noise):
        x, y = _sample_xy(rng, None, room)
        z = rng.uniform(config.noise_height_margin,
                        room.height - config.noise_height_margin)
        level = rng.uniform(*config.noise_level_range)
        noises.append(SourceSpec(location=Point3(x, y, z), level_db_spl=level,
                                 kind=NOISE))

    return Scenario(room=room, devices=tuple(devices), speaker=speaker,
                    noises=tuple(noises), seed=rng_seed)


def ground_truth(s: Scenario) -> GroundTruth:
    """Per-device speaker distances; ties broken toward the lowest index."""
    distances = tuple(s.speaker.location.distance_to(d) for d in s.devices)
    closest = int(np.argmin(distances))  # argmin returns the first minimum
    ordered = sorted(distances)
    d1 = ordered[0]
    d2 = ordered[1] if len(ordered) > 1 else ordered[0]
    return GroundTruth(distances=distances, closest_index=closest, d1=d1, d2=d2)


# --- JSONL persistence -----------------------------------------------------

def _point_to_obj(p: Point3) -> list[float]:
    return [p.x, p.y, p.z]


def scenario_to_obj(s: Scenario) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "seed": s.seed,
        "room": dataclasses.asdict(s.room),
        "devices": [_point_to_obj(p) for p in s.devices],
        "speaker": {
            "location": _point_to_obj(s.speaker.location),
            "level_db_spl": s.speaker.level_db_spl,
        },
        "noises": [
            {"location": _point_to_obj(n.location),
             "level_db_spl": n.level_db_spl}
            for n in s.noises
        ],
    }


def scenario_from_obj(obj: dict) -> Scenario:
    version = obj.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported scenario schema version: {version!r}")
    room = RoomSpec(**obj["room"])
    devices = tuple(Point3(*p) for p in obj["devices"])
    speaker = SourceSpec(location=Point3(*obj["speaker"]["location"]),
                         level_db_spl=obj["speaker"]["level_db_spl"],
                         kind=SPEECH)
    noises = tuple(
        SourceSpec(location=Point3(*n["location"]),
                   level_db_spl=n["level_db_spl"], kind=NOISE)
        for n in obj["noises"])
    return Scenario(room=room, devices=devices, speaker=speaker,
                    noises=noises, seed=obj["seed"])


def write_scenarios_jsonl(scenarios: Iterable[Scenario], path) -> None:
    with open(path, "w") as f:
        for s in scenarios:
            f.write(json.dumps(scenario_to_obj(s)) + "\n")


def read_scenarios_jsonl(path) -> Iterator[Scenario]:
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                yield scenario_from_obj(json.loads(line))

"""Seeded synthetic class-of-service traffic.

Profiles are hand-made fixtures, not fitted to any capture. They only aim at
the qualitative contrasts between service types: bulk downlink transfers,
burst/pause streaming, small periodic voice packets, sparse chat and
symmetric mixed-size peer-to-peer traffic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .ingest import write_csv  # noqa: F401  (part of this module's surface)
from .model import CosLabel, TrafficStream, check_label_set

MIN_LEN = 40
MAX_LEN = 1514

LEN_PARAMS = {
    "uniform": ("low", "high"),
    "normal": ("mean", "std"),
    "bimodal": ("mean1", "std1", "mean2", "std2", "weight1"),
}
IAT_PARAMS = {
    "exponential": ("scale",),
    "lognormal": ("median", "sigma"),
    "burst-pause": ("burst_len", "intra_gap", "pause_gap"),
}
# parameters rescaled by perturb(); shape parameters and probabilities are left alone
_SCALE_KEYS = {"low", "high", "mean", "std", "mean1", "std1", "mean2", "std2",
               "scale", "median", "intra_gap", "pause_gap"}


class ProfileError(ValueError):
    pass


@dataclass(frozen=True)
class Dist:
    kind: str
    params: dict[str, float] = field(default_factory=dict)

    def get(self, key: str, default: float | None = None) -> float:
        value = self.params.get(key, default)
        if value is None:
            raise ProfileError(f"{self.kind}: missing parameter {key!r}")
        return value


@dataclass(frozen=True)
class DirectionModel:
    """Two-state Markov chain over (up, down)."""

    transition: tuple[tuple[float, float], tuple[float, float]] = ((0.5, 0.5), (0.5, 0.5))
    initial: tuple[float, float] = (0.5, 0.5)


@dataclass(frozen=True)
class SynthProfile:
    name: str
    label: CosLabel
    len_dist: Dist
    iat_dist: Dist
    dir_model: DirectionModel = DirectionModel()
    sync: bool = True

    def __post_init__(self) -> None:
        validate_profile(self)


def _check_row(row: Sequence[float], what: str) -> None:
    if len(row) != 2 or min(row) < 0 or abs(sum(row) - 1.0) > 1e-9:
        raise ProfileError(f"{what} must be two non-negative probabilities summing to 1, got {row}")


def validate_profile(p: SynthProfile) -> None:
    if not p.name:
        raise ProfileError("profile needs a name")
    ld, idist = p.len_dist, p.iat_dist
    if ld.kind not in LEN_PARAMS:
        raise ProfileError(f"{p.name}: unknown length distribution {ld.kind!r}")
    if idist.kind not in IAT_PARAMS:
        raise ProfileError(f"{p.name}: unknown iat distribution {idist.kind!r}")
    for dist, table in ((ld, LEN_PARAMS), (idist, IAT_PARAMS)):
        unknown = set(dist.params) - set(table[dist.kind]) - {"jitter"}
        if unknown:
            raise ProfileError(f"{p.name}: unknown {dist.kind} parameters {sorted(unknown)}")
        for key in table[dist.kind]:
            value = dist.get(key)
            if not np.isfinite(value):
                raise ProfileError(f"{p.name}: {key} must be finite")
    if ld.kind == "uniform":
        if not 0 < ld.get("low") <= ld.get("high"):
            raise ProfileError(f"{p.name}: uniform needs 0 < low <= high")
    elif ld.kind == "normal":
        if ld.get("mean") <= 0 or ld.get("std") <= 0:
            raise ProfileError(f"{p.name}: normal needs positive mean and std")
    else:
        if min(ld.get(k) for k in ("mean1", "std1", "mean2", "std2")) <= 0:
            raise ProfileError(f"{p.name}: bimodal needs positive means and stds")
        if not 0 <= ld.get("weight1") <= 1:
            raise ProfileError(f"{p.name}: bimodal weight1 must be in [0, 1]")
    if idist.kind == "exponential":
        if idist.get("scale") <= 0:
            raise ProfileError(f"{p.name}: exponential scale must be positive")
    elif idist.kind == "lognormal":
        if idist.get("median") <= 0 or idist.get("sigma") <= 0:
            raise ProfileError(f"{p.name}: lognormal needs positive median and sigma")
    else:
        burst = idist.get("burst_len")
        if burst < 1 or int(burst) != burst:
            raise ProfileError(f"{p.name}: burst_len must be a positive integer")
        if idist.get("intra_gap") <= 0 or idist.get("pause_gap") <= 0:
            raise ProfileError(f"{p.name}: burst-pause gaps must be positive")
        if idist.get("jitter", 0.1) < 0:
            raise ProfileError(f"{p.name}: jitter must be non-negative")
    for row in p.dir_model.transition:
        _check_row(row, f"{p.name}: transition row")
    _check_row(p.dir_model.initial, f"{p.name}: initial distribution")


def _sample_lengths(dist: Dist, n: int, rng: np.random.Generator) -> np.ndarray:
    if dist.kind == "uniform":
        raw = rng.uniform(dist.get("low"), dist.get("high"), n)
    elif dist.kind == "normal":
        raw = rng.normal(dist.get("mean"), dist.get("std"), n)
    else:
        first = rng.random(n) < dist.get("weight1")
        a = rng.normal(dist.get("mean1"), dist.get("std1"), n)
        b = rng.normal(dist.get("mean2"), dist.get("std2"), n)
        raw = np.where(first, a, b)
    return np.clip(np.rint(raw), MIN_LEN, MAX_LEN).astype(np.int64)


def _sample_gaps(dist: Dist, n: int, rng: np.random.Generator) -> np.ndarray:
    if dist.kind == "exponential":
        return rng.exponential(dist.get("scale"), n)
    if dist.kind == "lognormal":
        return dist.get("median") * np.exp(rng.normal(0.0, dist.get("sigma"), n))
    burst = int(dist.get("burst_len"))
    phase = int(rng.integers(burst))
    pause = (np.arange(n) + phase + 1) % burst == 0
    base = np.where(pause, dist.get("pause_gap"), dist.get("intra_gap"))
    return base * np.exp(rng.normal(0.0, dist.get("jitter", 0.1), n))


def _sample_directions(model: DirectionModel, n: int, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(n)
    out = np.empty(n, dtype=np.int8)
    stay_up, stay_down = model.transition[0][0], model.transition[1][1]
    state = 0 if u[0] < model.initial[0] else 1
    out[0] = state
    for i in range(1, n):
        if state == 0:
            state = 0 if u[i] < stay_up else 1
        else:
            state = 1 if u[i] < stay_down else 0
        out[i] = state
    return out


def generate(profile: SynthProfile, n_packets: int, seed: int) -> TrafficStream:
    """Deterministic stream of ``n_packets`` packets; timestamps are cumulative gaps from 0."""
    if n_packets < 1:
        raise ValueError(f"n_packets must be >= 1, got {n_packets}")
    validate_profile(profile)
    rng = np.random.default_rng(seed)
    lengths = _sample_lengths(profile.len_dist, n_packets, rng)
    gaps = _sample_gaps(profile.iat_dist, n_packets - 1, rng)
    dirs = _sample_directions(profile.dir_model, n_packets, rng)
    timestamps = np.concatenate(([0.0], np.cumsum(gaps)))
    return TrafficStream.from_timestamps(
        profile.label, timestamps, lengths, dirs, source=f"synth:{profile.name}:seed={seed}"
    )


def perturb(profile: SynthProfile, jitter: float, seed: int) -> SynthProfile:
    """Rescale every location/scale parameter by an independent factor in [1-jitter, 1+jitter]."""
    if not 0 <= jitter < 1:
        raise ValueError(f"jitter must be in [0, 1), got {jitter}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, profile.label.id]))

    def scaled(dist: Dist) -> Dist:
        params = dict(dist.params)
        for key in sorted(params):
            if key in _SCALE_KEYS:
                params[key] = params[key] * float(rng.uniform(1 - jitter, 1 + jitter))
        if dist.kind == "uniform" and params["low"] > params["high"]:
            params["low"], params["high"] = params["high"], params["low"]
        return Dist(dist.kind, params)

    return replace(profile, len_dist=scaled(profile.len_dist), iat_dist=scaled(profile.iat_dist))


_BUILTIN = [
    {
        "name": "file_transfer",
        "sync": True,
        "len": {"kind": "bimodal", "mean1": 1460, "std1": 30, "mean2": 66, "std2": 10, "weight1": 0.67},
        "iat": {"kind": "exponential", "scale": 0.0002},
        "direction": {"transition": [[0.2, 0.8], [0.1, 0.9]], "initial": [0.5, 0.5]},
    },
    {
        "name": "video",
        "sync": True,
        "len": {"kind": "normal", "mean": 900, "std": 150},
        "iat": {"kind": "burst-pause", "burst_len": 20, "intra_gap": 0.002, "pause_gap": 0.2},
        "direction": {"transition": [[0.1, 0.9], [0.25, 0.75]], "initial": [0.5, 0.5]},
    },
    {
        "name": "voip",
        "sync": True,
        "len": {"kind": "normal", "mean": 120, "std": 15},
        "iat": {"kind": "lognormal", "median": 0.01, "sigma": 0.3},
        "direction": {"transition": [[0.3, 0.7], [0.7, 0.3]], "initial": [0.5, 0.5]},
    },
    {
        "name": "chat",
        "sync": False,
        "len": {"kind": "normal", "mean": 260, "std": 110},
        "iat": {"kind": "lognormal", "median": 1.5, "sigma": 1.2},
        "direction": {"transition": [[0.6, 0.4], [0.4, 0.6]], "initial": [0.5, 0.5]},
    },
    {
        "name": "p2p",
        "sync": False,
        "len": {"kind": "bimodal", "mean1": 80, "std1": 20, "mean2": 1000, "std2": 60, "weight1": 0.5},
        "iat": {"kind": "exponential", "scale": 0.02},
        "direction": {"transition": [[0.5, 0.5], [0.5, 0.5]], "initial": [0.5, 0.5]},
    },
]


def profile_from_dict(data: dict[str, Any], label_id: int | None = None) -> SynthProfile:
    try:
        name = str(data["name"])
        if "label" in data and isinstance(data["label"], dict):
            label = CosLabel(int(data["label"]["id"]), str(data["label"]["name"]))
        else:
            lid = data.get("label_id", label_id)
            if lid is None:
                raise ProfileError(f"{name}: profile needs a label id")
            label = CosLabel(int(lid), str(data.get("label", name)))

        def dist(spec: dict) -> Dist:
            spec = dict(spec)
            kind = spec.pop("kind")
            return Dist(kind, {k: float(v) for k, v in spec.items()})

        direction = data.get("direction", {})
        dir_model = DirectionModel(
            tuple(tuple(float(x) for x in row) for row in direction.get("transition", [[0.5, 0.5], [0.5, 0.5]])),
            tuple(float(x) for x in direction.get("initial", [0.5, 0.5])),
        )
        return SynthProfile(name, label, dist(data["len"]), dist(data["iat"]), dir_model, bool(data.get("sync", True)))
    except (KeyError, TypeError, AttributeError) as exc:
        raise ProfileError(f"malformed profile definition: {exc!r}") from None


def profile_to_dict(p: SynthProfile) -> dict[str, Any]:
    return {
        "name": p.name,
        "label": {"id": p.label.id, "name": p.label.name},
        "sync": p.sync,
        "len": {"kind": p.len_dist.kind, **p.len_dist.params},
        "iat": {"kind": p.iat_dist.kind, **p.iat_dist.params},
        "direction": {
            "transition": [list(r) for r in p.dir_model.transition],
            "initial": list(p.dir_model.initial),
        },
    }


def builtin_profiles() -> tuple[SynthProfile, ...]:
    return tuple(profile_from_dict(d, i) for i, d in enumerate(_BUILTIN))


def load_profiles(path: str | Path) -> tuple[SynthProfile, ...]:
    """Read profiles from a JSON or TOML file holding a ``profiles`` list."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        doc = tomllib.loads(text)
    else:
        doc = json.loads(text)
    entries = doc.get("profiles") if isinstance(doc, dict) else doc
    if not entries:
        raise ProfileError(f"{path}: no profiles defined")
    profiles = tuple(profile_from_dict(d, i) for i, d in enumerate(entries))
    check_label_set(p.label for p in profiles)
    return profiles


def get_profile(name: str, profiles: Sequence[SynthProfile] | None = None) -> SynthProfile:
    for p in profiles or builtin_profiles():
        if p.name == name:
            return p
    known = ", ".join(p.name for p in profiles or builtin_profiles())
    raise ProfileError(f"unknown profile {name!r}; known profiles: {known}")


def generate_corpus(
    profiles: Sequence[SynthProfile] | None = None,
    n_packets: int = 3000,
    seed: int = 0,
    jitter: float = 0.0,
) -> list[TrafficStream]:
    """One stream per profile; each profile draws from its own seed stream."""
    profiles = builtin_profiles() if profiles is None else tuple(profiles)
    streams = []
    for p in profiles:
        if jitter:
            p = perturb(p, jitter, seed)
        child = int(np.random.SeedSequence([seed, p.label.id]).generate_state(1)[0])
        streams.append(generate(p, n_packets, child))
    return streams

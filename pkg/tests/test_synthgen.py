import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cosseg import synthgen
from cosseg.evr import segment_features
from cosseg.model import CosLabel
from cosseg.synthgen import (
    Dist,
    DirectionModel,
    ProfileError,
    SynthProfile,
    builtin_profiles,
    generate,
    generate_corpus,
    get_profile,
    load_profiles,
    perturb,
    profile_from_dict,
    profile_to_dict,
)

NAMES = [p.name for p in builtin_profiles()]


def _profile(len_dist=Dist("uniform", {"low": 100, "high": 200}), iat_dist=Dist("exponential", {"scale": 0.01}), **kw):
    return SynthProfile("t", CosLabel(0, "t"), len_dist, iat_dist, **kw)


def test_builtins_are_dense_and_distinct():
    profiles = builtin_profiles()
    assert len(profiles) == 5
    assert [p.label.id for p in profiles] == list(range(5))
    assert len(set(NAMES)) == 5
    assert [p.sync for p in profiles] == [True, True, True, False, False]


def test_voip_packets_smaller_than_file_transfer():
    voip = generate(get_profile("voip"), 2000, 1)
    bulk = generate(get_profile("file_transfer"), 2000, 1)
    assert voip.lengths.mean() < bulk.lengths.mean()


@pytest.mark.parametrize("name", NAMES)
def test_determinism_and_seed_sensitivity(name):
    p = get_profile(name)
    a = generate(p, 1000, 42)
    assert a == generate(p, 1000, 42)
    b = generate(p, 1000, 43)
    assert not np.array_equal(a.timestamps, b.timestamps)


@given(st.integers(0, 2**32 - 1), st.integers(1, 500))
def test_uniform_lengths_stay_in_support(seed, n):
    s = generate(_profile(), n, seed)
    assert len(s) == n
    assert s.lengths.min() >= 100 and s.lengths.max() <= 200
    assert s.timestamps[0] == 0.0


def test_lengths_are_clamped():
    s = generate(_profile(len_dist=Dist("normal", {"mean": 60, "std": 2000})), 3000, 0)
    assert s.lengths.min() == synthgen.MIN_LEN
    assert s.lengths.max() == synthgen.MAX_LEN


def test_burst_pause_histogram_is_bimodal():
    p = _profile(iat_dist=Dist("burst-pause", {"burst_len": 20, "intra_gap": 0.001, "pause_gap": 0.2}))
    gaps = generate(p, 4000, 3).iats[1:]
    hist, edges = np.histogram(np.log10(gaps), bins=40)
    centers = 10 ** ((edges[:-1] + edges[1:]) / 2)
    low = centers[np.argmax(np.where(centers < 0.01, hist, -1))]
    high = centers[np.argmax(np.where(centers > 0.01, hist, -1))]
    assert low == pytest.approx(0.001, rel=0.3)
    assert high == pytest.approx(0.2, rel=0.3)
    # nothing lives between the modes
    assert np.all((gaps < 0.003) | (gaps > 0.1))
    assert np.mean(gaps > 0.1) == pytest.approx(1 / 20, abs=0.01)


def test_direction_chain_stationary_share():
    # up->up 0.9, down->down 0.6 gives a stationary up share of 0.4 / 0.5 = 0.8
    p = _profile(dir_model=DirectionModel(((0.9, 0.1), (0.4, 0.6)), (1.0, 0.0)))
    s = generate(p, 20000, 5)
    assert s.directions[0] == 0
    assert np.mean(s.directions == 0) == pytest.approx(0.8, abs=0.02)


def test_builtin_centroids_are_pairwise_distinct(corpus):
    cents = []
    for s in corpus:
        f = segment_features(s, 20)[:100]
        cents.append(f.mean(axis=0))
    for i in range(len(cents)):
        for j in range(i + 1, len(cents)):
            assert np.linalg.norm(cents[i] - cents[j]) > 0


@pytest.mark.parametrize(
    "kwargs,match",
    [
        (dict(len_dist=Dist("zipf", {})), "unknown length"),
        (dict(iat_dist=Dist("pareto", {})), "unknown iat"),
        (dict(len_dist=Dist("uniform", {"low": 300, "high": 200})), "low <= high"),
        (dict(len_dist=Dist("normal", {"mean": 100})), "missing parameter"),
        (dict(iat_dist=Dist("exponential", {"scale": -1})), "positive"),
        (dict(iat_dist=Dist("exponential", {"scale": 1, "shape": 2})), "unknown exponential"),
        (dict(iat_dist=Dist("burst-pause", {"burst_len": 2.5, "intra_gap": 1, "pause_gap": 1})), "burst_len"),
        (dict(dir_model=DirectionModel(((0.5, 0.6), (0.5, 0.5)))), "summing to 1"),
        (dict(len_dist=Dist("bimodal", {"mean1": 1, "std1": 1, "mean2": 1, "std2": 1, "weight1": 2})), "weight1"),
    ],
)
def test_invalid_profiles(kwargs, match):
    with pytest.raises(ProfileError, match=match):
        _profile(**kwargs)


def test_generate_rejects_zero_packets():
    with pytest.raises(ValueError):
        generate(_profile(), 0, 1)


def test_perturb_scales_within_jitter():
    base = get_profile("video")
    moved = perturb(base, 0.15, seed=9)
    assert moved == perturb(base, 0.15, seed=9)
    for key, value in base.iat_dist.params.items():
        ratio = moved.iat_dist.params[key] / value
        if key == "burst_len":
            assert ratio == 1.0
        else:
            assert 0.85 <= ratio <= 1.15
    assert perturb(base, 0.0, 1) == base
    with pytest.raises(ValueError):
        perturb(base, 1.0, 1)


def test_profile_dict_roundtrip():
    for p in builtin_profiles():
        assert profile_from_dict(json.loads(json.dumps(profile_to_dict(p)))) == p


def test_load_profiles_toml_and_json(tmp_path):
    toml = tmp_path / "p.toml"
    toml.write_text(
        """
[[profiles]]
name = "bulk"
sync = true
len = { kind = "uniform", low = 1000, high = 1500 }
iat = { kind = "exponential", scale = 0.001 }

[[profiles]]
name = "sparse"
sync = false
len = { kind = "normal", mean = 100, std = 10 }
iat = { kind = "lognormal", median = 2.0, sigma = 1.0 }
direction = { transition = [[0.5, 0.5], [0.5, 0.5]], initial = [1.0, 0.0] }
"""
    )
    profiles = load_profiles(toml)
    assert [(p.label.id, p.name) for p in profiles] == [(0, "bulk"), (1, "sparse")]
    js = tmp_path / "p.json"
    js.write_text(json.dumps({"profiles": [profile_to_dict(p) for p in profiles]}))
    assert load_profiles(js) == profiles
    empty = tmp_path / "e.json"
    empty.write_text("{}")
    with pytest.raises(ProfileError, match="no profiles"):
        load_profiles(empty)


def test_get_profile_unknown():
    with pytest.raises(ProfileError, match="known profiles"):
        get_profile("email")


def test_corpus_seeds_are_per_profile():
    full = generate_corpus(n_packets=500, seed=4)
    subset = generate_corpus([get_profile("voip")], n_packets=500, seed=4)
    assert subset[0] == full[2]
    jittered = generate_corpus(n_packets=500, seed=4, jitter=0.15)
    assert not math.isclose(jittered[2].lengths.mean(), full[2].lengths.mean(), rel_tol=1e-12)


def test_generated_streams_satisfy_model_invariants(corpus):
    for s in corpus:
        assert len(s) == 3000
        assert s.iats[0] == 0.0
        assert np.all(np.diff(s.timestamps) >= 0)
        assert np.all(np.abs(np.diff(s.timestamps) - s.iats[1:]) <= 1e-9)

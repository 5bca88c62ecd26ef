import numpy as np

from cosseg.model import CosLabel, TrafficStream

# filled by test_acceptance, printed by the terminal-summary hook in conftest
ACCEPTANCE_LINES: list[str] = []


def make_stream(times, lengths, dirs, label=CosLabel(0, "a"), source="test"):
    return TrafficStream.from_timestamps(label, times, lengths, dirs, source)


def random_stream(rng: np.random.Generator, n_packets: int, label=CosLabel(0, "a")):
    gaps = rng.exponential(rng.uniform(1e-4, 1.0), n_packets - 1)
    times = np.concatenate(([0.0], np.cumsum(gaps)))
    lengths = rng.integers(40, 1515, n_packets)
    dirs = rng.integers(0, 2, n_packets)
    return make_stream(times, lengths, dirs, label)

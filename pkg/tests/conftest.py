import numpy as np
import pytest

from silver_sieve.dataset import LabelSpace, Mention, Sample, SilverDataset, SynthConfig, generate_synthetic
from silver_sieve.trainer import ConfidenceRecord


def make_dataset(silver, gold=None, dim=2, names=None, text=False, features=None):
    k = 1 + max(list(silver) + list(gold or []))
    space = LabelSpace(tuple(names) if names else tuple(f"r{i}" for i in range(k)))
    samples = []
    for i, s in enumerate(silver):
        feats = features[i] if features is not None else tuple(float(i + j) for j in range(dim))
        g = gold[i] if gold is not None else None
        mentions = (Mention(f"S{i}", "T"), Mention(f"O{i}", "T"), f"S{i} meets O{i}.") if text else (None, None, None)
        samples.append(Sample(i, feats, s, g, *mentions))
    return SilverDataset(space, dim, tuple(samples))


def records(confidences, predicted=None):
    predicted = predicted or [0] * len(confidences)
    return [ConfidenceRecord(i, float(c), int(p)) for i, (c, p) in enumerate(zip(confidences, predicted))]


@pytest.fixture
def small_synth():
    cfg = SynthConfig(num_classes=3, feature_dim=4, class_sizes=(30, 20, 10), noise_ratio=0.2, seed=3, with_text=True)
    return generate_synthetic(cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion():
    def report(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})"
        ACCEPTANCE[number] = line
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])

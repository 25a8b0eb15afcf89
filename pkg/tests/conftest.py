import time

import numpy as np
import pytest

from inv2inv.dataset import ToyDatasetSpec, generate_samples
from inv2inv.energy import EnergySuite
from inv2inv.rng import CounterStream, Purpose, stream_id
from inv2inv.score import GaussianMixture, ScoreNet, TrainConfig, train_dsm
from inv2inv.sde import SdeSchedule

# 2-D benchmark mixture shared by the score and acceptance tests
GMM_WEIGHTS = [0.5, 0.3, 0.2]
GMM_MEANS = [[-2.0, 0.0], [2.0, 0.0], [0.0, 2.5]]
GMM_VARIANCE = 0.25


@pytest.fixture(scope="session")
def sched():
    return SdeSchedule()


@pytest.fixture(scope="session")
def gmm2d():
    return GaussianMixture(GMM_WEIGHTS, GMM_MEANS, [GMM_VARIANCE] * 3)


@pytest.fixture(scope="session")
def score_grid():
    g = np.linspace(-3.0, 3.0, 21)
    points = np.array([[a, b] for a in g for b in g])
    return points, np.linspace(0.1, 0.9, 9)


@pytest.fixture(scope="session")
def trained_gmm_net(sched, gmm2d):
    """Default-config net on the 2-D benchmark, with quarter-way checkpoints."""
    data = gmm2d.sample(20_000, CounterStream(1, stream_id(Purpose.SAMPLES)))
    cfg = TrainConfig(log_interval=500)
    t0 = time.process_time()
    res = train_dsm(ScoreNet((2,), sched, seed=0), sched, data, cfg,
                    checkpoint_every=cfg.iterations // 4)
    res.cpu_seconds = time.process_time() - t0
    return res


@pytest.fixture(scope="session")
def image_net(sched):
    """Score net for 32x32 toy photos; trained once per session."""
    photos = np.stack([s.photo for s in generate_samples(ToyDatasetSpec(count=1000, seed=1))])
    cfg = TrainConfig(weighting="sigma2", batch_size=64, iterations=2000, log_interval=200)
    return train_dsm(ScoreNet(photos.shape[1:], sched, seed=0), sched, photos, cfg).net


@pytest.fixture(scope="session")
def eval_pairs():
    """50 held-out sketch/exemplar pairs (different seed from the training photos)."""
    samples = generate_samples(ToyDatasetSpec(count=50, seed=11))
    return (np.stack([s.sketch for s in samples]), np.stack([s.exemplar for s in samples]))


@pytest.fixture(scope="session")
def energies():
    return EnergySuite.for_image(3, 32)


@pytest.fixture
def stream():
    return CounterStream(1234, stream_id(Purpose.SAMPLES, 9))


# --- acceptance report ----------------------------------------------------

_VERDICTS: list[tuple[str, str, str]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (rep.when == "call" or (rep.when == "setup" and rep.failed)):
        return
    detail = dict(item.user_properties).get("detail", "")
    _VERDICTS.append(("PASS" if rep.passed else "FAIL", marker.args[0], detail))


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for verdict, name, detail in _VERDICTS:
            terminalreporter.write_line(f"{verdict} {name}: {detail}")

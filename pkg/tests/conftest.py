import hashlib
import os

import numpy as np
import pytest

from nivc import graphs, imageio, training

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")
CACHE = os.path.join(os.path.dirname(__file__), "_cache")


def fixture_path(name):
    return os.path.join(FIXTURES, name)


def load_fixture(name):
    return imageio.read_pgm(fixture_path(name))


@pytest.fixture(scope="session")
def train_images():
    return [load_fixture(f"train_{i:02d}.pgm") for i in range(8)]


@pytest.fixture(scope="session")
def holdout_image():
    return load_fixture("holdout.pgm")


@pytest.fixture(scope="session")
def natural_images():
    return [load_fixture(f"natural_{i:02d}.pgm") for i in range(3)]


def _fixture_digest(names):
    h = hashlib.sha256()
    for name in names:
        with open(fixture_path(name), "rb") as fh:
            h.update(fh.read())
    return h.hexdigest()[:12]


def zero_store(graph):
    store = graphs.WeightStore(tag=graph.name)
    for node in graph.weighted_nodes():
        store[node.id] = (np.zeros(node.weight_shape(), np.float32),
                          np.zeros(node.out_ch, np.float32))
    return store


@pytest.fixture(scope="session")
def random_bank():
    """Untrained (random-init) 2-block bank: cheap, nonzero weights."""
    graph = graphs.build_inception_filter(2)
    stores = {}
    for i, qp in enumerate(graphs.BAND_QPS):
        stores[qp] = training.init_weights(graph, np.random.default_rng(100 + i))
    return graphs.make_model_bank(stores)


@pytest.fixture(scope="session")
def zero_bank():
    graph = graphs.build_inception_filter(2)
    store = zero_store(graph)
    return graphs.make_model_bank({qp: store for qp in graphs.BAND_QPS})


def _cached_weights(key, graph, train_fn):
    """Train once per configuration; training is seed-deterministic, so the
    cached file equals a fresh run bit for bit."""
    os.makedirs(CACHE, exist_ok=True)
    path = os.path.join(CACHE, key + ".nnwt")
    if os.path.exists(path):
        try:
            return graphs.load_weights(path, graph)
        except Exception:
            os.remove(path)
    store = train_fn()
    graphs.save_weights(store, graph, path)
    return store


# acceptance-scale training configuration: reduced filter (2 blocks),
# 500 steps per band, defaults elsewhere
BANK_STEPS = 500
BANK_BLOCKS = 2


def band_train_config(band_index):
    return training.TrainConfig(steps=BANK_STEPS, seed=band_index, num_blocks=BANK_BLOCKS)


def build_trained_bank():
    """Train (or load from cache) the acceptance-scale 4-band filter bank."""
    images = [load_fixture(f"train_{i:02d}.pgm") for i in range(8)]
    digest = _fixture_digest([f"train_{i:02d}.pgm" for i in range(8)])
    graph = graphs.build_inception_filter(BANK_BLOCKS)
    stores = {}
    for i, qp in enumerate(graphs.BAND_QPS):
        cfg = band_train_config(i)
        key = f"filter_b{BANK_BLOCKS}_s{BANK_STEPS}_qp{qp}_seed{i}_{digest}"

        def train(qp=qp, cfg=cfg):
            dataset = training.make_filter_dataset(images, qp)
            store, _ = training.train_filter(dataset, graph, cfg)
            return store

        stores[qp] = _cached_weights(key, graph, train)
    return graphs.make_model_bank(stores)


PREDICTOR_CONFIG = training.TrainConfig(learning_rate=1e-3, steps=1500, seed=11)


def build_trained_predictor():
    """FC predictor fitted to the smooth-gradient fixture family."""
    digest = _fixture_digest(["gradient.pgm"])
    graph = graphs.build_fc_predictor(32, 4, (512, 512))
    key = f"fcpred32k4_s{PREDICTOR_CONFIG.steps}_{digest}"

    def train():
        return training.train_fc_predictor([load_fixture("gradient.pgm")], 32, 4,
                                           PREDICTOR_CONFIG, samples_per_image=64)

    return _cached_weights(key, graph, train)


@pytest.fixture(scope="session")
def trained_bank():
    return build_trained_bank()


@pytest.fixture(scope="session")
def trained_predictor():
    return build_trained_predictor()


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance(name): criterion of the acceptance suite")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker and report.when == "call":
        status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        name = marker.kwargs.get("name", item.name)
        item.config.get_terminal_writer().line(f"\n[acceptance] {status}: {name}")

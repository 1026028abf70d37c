import random
import time

import pytest

from rstboost.boosting import BoostConfig, train
from rstboost.cli import main as cli_main
from rstboost.encoder import EncoderConfig
from rstboost.treebank import (
    EDU,
    Document,
    Internal,
    Leaf,
    NUCLEARITIES,
    load_treebank,
)
from rstboost.weak_learner import LearnerConfig

DEFAULT_ENC = EncoderConfig()  # library defaults: L=8, D=1024, nucleus, seed 0


def default_boost_config(tb, seed):
    """The cmd_train defaults, resolved against a treebank."""
    learner = LearnerConfig(
        input_dim=DEFAULT_ENC.width,
        n_relations=len(tb.relation_inventory),
        hidden_dim=16,
        learning_rate=0.1,
        l2_penalty=0.0,
    )
    return BoostConfig(learner=learner, n_steps=5, epochs_max=30, patience=3,
                       dev_fraction=0.1, seed=seed)


@pytest.fixture(scope="session")
def setups(tmp_path_factory):
    """Default-config synthetic data per master seed, via the real CLI."""
    base = tmp_path_factory.mktemp("shared_data")
    cache = {}

    def get(seed):
        if seed not in cache:
            out = base / f"seed{seed}"
            assert cli_main(["--seed", str(seed), "--quiet", "synth",
                             "--out", str(out)]) == 0
            cache[seed] = {
                "dir": out,
                "train": load_treebank(out / "train_news.tb"),
                "test_in": load_treebank(out / "test_news.tb"),
                "test_out": load_treebank(out / "test_chat.tb"),
            }
        return cache[seed]

    return get


@pytest.fixture(scope="session")
def ensembles(setups):
    """Default-config 5-step ensembles per master seed, trained once."""
    cache = {}

    def get(seed):
        if seed not in cache:
            tb = setups(seed)["train"]
            t0 = time.perf_counter()
            ens, rep = train(tb, default_boost_config(tb, seed), DEFAULT_ENC)
            cache[seed] = (ens, rep, time.perf_counter() - t0)
        return cache[seed]

    return get


def make_doc(n_edus, doc_id="doc", tokens_per_edu=2):
    edus = tuple(
        EDU(i, tuple(f"tok{i}_{j}" for j in range(tokens_per_edu)))
        for i in range(1, n_edus + 1)
    )
    return Document(doc_id, edus)


def enumerate_shapes(lo, hi):
    """All binary tree shapes over leaves lo..hi, as nested span tuples."""
    if lo == hi:
        return [("leaf", lo)]
    shapes = []
    for split in range(lo, hi):
        for left in enumerate_shapes(lo, split):
            for right in enumerate_shapes(split + 1, hi):
                shapes.append(("node", left, right))
    return shapes


def label_shape(shape, rng, relations):
    """Attach random nuclearity + relation labels to a shape."""
    if shape[0] == "leaf":
        return Leaf(shape[1])
    left = label_shape(shape[1], rng, relations)
    right = label_shape(shape[2], rng, relations)
    return Internal(rng.choice(NUCLEARITIES), rng.choice(relations), left, right)


def random_tree(rng, n_edus, relations=("elaboration", "contrast")):
    """Uniformly random split structure with random labels."""

    def build(lo, hi):
        if lo == hi:
            return Leaf(lo)
        split = rng.randint(lo, hi - 1)
        return Internal(
            rng.choice(NUCLEARITIES),
            rng.choice(relations),
            build(lo, split),
            build(split + 1, hi),
        )

    return build(1, n_edus)


@pytest.fixture
def rng():
    return random.Random(12345)

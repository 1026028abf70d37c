"""Staged gradient boosting of weak shift-reduce classifiers.

Step k trains a fresh weak learner against the frozen, summed logits of
steps 1..k-1; prediction with prefix m sums the logits of the first m
steps and decodes greedily under legality masking.  Earlier steps are
never modified once appended.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import weak_learner as wl
from .encoder import EncoderConfig, encode_state
from .errors import (
    DimensionMismatch,
    EmptyTreebank,
    InvalidConfig,
    InvalidPrefix,
    RelationInventoryMismatch,
    TerminalState,
)
from .transition import (
    Action,
    ParserState,
    Reduce,
    SHIFT,
    apply,
    initial_state,
    legal_actions,
    oracle,
)
from .treebank import NUCLEARITIES, DiscourseNode, Document, Treebank
from .weak_learner import LearnerConfig, LogitPair, WeakLearner


def action_to_class(action: Action) -> int:
    """Structure class index: 0 = shift, 1..3 = reduce-NN/NS/SN."""
    if isinstance(action, Reduce):
        return 1 + NUCLEARITIES.index(action.nuclearity)
    return 0


def structure_mask(state: ParserState) -> np.ndarray:
    legal = legal_actions(state)
    return np.array(
        [legal.shift_legal, legal.reduce_legal, legal.reduce_legal, legal.reduce_legal]
    )


@dataclass(frozen=True)
class BoostConfig:
    learner: LearnerConfig
    n_steps: int = 5
    epochs_max: int = 30
    patience: int = 3
    dev_fraction: float = 0.1
    seed: int = 0
    shuffle_each_epoch: bool = True

    def __post_init__(self) -> None:
        if self.n_steps < 1:
            raise InvalidConfig("n_steps must be >= 1")
        if self.patience < 1:
            raise InvalidConfig("patience must be >= 1")
        if not 0.0 < self.dev_fraction < 1.0:
            raise InvalidConfig("dev_fraction must lie in (0, 1)")
        if self.epochs_max < 1:
            raise InvalidConfig("epochs_max must be >= 1")


@dataclass(frozen=True)
class BoostedEnsemble:
    encoder_config: EncoderConfig
    relation_inventory: tuple[str, ...]
    steps: tuple[WeakLearner, ...]
    boost_config: BoostConfig
    train_domain_tag: str = ""

    @property
    def n_steps(self) -> int:
        return len(self.steps)


@dataclass
class StepReport:
    step: int
    final_train_loss: float
    dev_losses: list[float]
    epochs_run: int
    seconds: float
    param_count: int
    selection: str  # dev | train | zero


@dataclass
class TrainReport:
    steps: list[StepReport] = field(default_factory=list)
    cumulative_params: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "steps": [asdict(s) for s in self.steps],
            "cumulative_params": list(self.cumulative_params),
        }


def aggregate_logits(ensemble: BoostedEnsemble, m: int, x: np.ndarray) -> LogitPair:
    """Elementwise sum of the first m steps' logits for both heads."""
    if not 1 <= m <= len(ensemble.steps):
        raise InvalidPrefix(f"prefix {m} outside 1..{len(ensemble.steps)}")
    s = np.zeros(wl.N_STRUCTURE)
    r = np.zeros(len(ensemble.relation_inventory))
    for step in ensemble.steps[:m]:
        out = wl.forward(step, x)
        s += out.structure
        r += out.relation
    return LogitPair(s, r)


# ---------------------------------------------------------------------------
# Oracle instance set
# ---------------------------------------------------------------------------

@dataclass
class _Instances:
    x: np.ndarray          # (N, dim) float64
    nonzero: list[np.ndarray]
    gold_structure: np.ndarray  # (N,) int64
    gold_relation: np.ndarray   # (N,) int64; -1 for shift
    mask: np.ndarray            # (N, 4) bool

    def __len__(self) -> int:
        return self.x.shape[0]


def _build_instances(
    entries, enc_cfg: EncoderConfig, inventory: tuple[str, ...]
) -> _Instances:
    rel_index = {rel: i for i, rel in enumerate(inventory)}
    xs, gs, gr, masks = [], [], [], []
    for doc, tree in entries:
        state = initial_state(doc.n_edus)
        for action in oracle(tree):
            xs.append(encode_state(state, doc, enc_cfg))
            gs.append(action_to_class(action))
            if isinstance(action, Reduce):
                if action.relation not in rel_index:
                    raise RelationInventoryMismatch(
                        f"relation {action.relation!r} not in the model inventory"
                    )
                gr.append(rel_index[action.relation])
            else:
                gr.append(-1)
            masks.append(structure_mask(state))
            state = apply(state, action)
    x = np.asarray(xs)
    return _Instances(
        x=x,
        nonzero=[np.nonzero(row)[0] for row in x],
        gold_structure=np.asarray(gs, dtype=np.int64),
        gold_relation=np.asarray(gr, dtype=np.int64),
        mask=np.asarray(masks, dtype=bool),
    )


def _batch_logits(learner: WeakLearner, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if learner.w_hidden is not None:
        h = np.tanh(x @ learner.w_hidden.T + learner.b_hidden)
    else:
        h = x
    return (
        h @ learner.w_structure.T + learner.b_structure,
        h @ learner.w_relation.T + learner.b_relation,
    )


def _mean_combined_ce(
    z_structure: np.ndarray,
    z_relation: np.ndarray,
    inst: _Instances,
) -> float:
    """Mean per-instance cross-entropy: masked structure CE + gated relation CE."""
    n = len(inst)
    z = np.where(inst.mask, z_structure, -np.inf)
    mx = z.max(axis=1)
    lse = mx + np.log(np.exp(z - mx[:, None]).sum(axis=1))
    ce = lse - z_structure[np.arange(n), inst.gold_structure]

    is_reduce = inst.gold_relation >= 0
    if is_reduce.any():
        zr = z_relation[is_reduce]
        mx = zr.max(axis=1)
        lse = mx + np.log(np.exp(zr - mx[:, None]).sum(axis=1))
        ce_r = lse - zr[np.arange(zr.shape[0]), inst.gold_relation[is_reduce]]
        ce[is_reduce] += ce_r
    return float(ce.mean())


def mean_oracle_ce(ensemble: BoostedEnsemble, m: int, entries) -> float:
    """Mean combined cross-entropy of prefix m over the gold oracle states."""
    if not 1 <= m <= len(ensemble.steps):
        raise InvalidPrefix(f"prefix {m} outside 1..{len(ensemble.steps)}")
    inst = _build_instances(entries, ensemble.encoder_config, ensemble.relation_inventory)
    zs = np.zeros((len(inst), wl.N_STRUCTURE))
    zr = np.zeros((len(inst), len(ensemble.relation_inventory)))
    for step in ensemble.steps[:m]:
        s, r = _batch_logits(step, inst.x)
        zs += s
        zr += r
    return _mean_combined_ce(zs, zr, inst)


def oracle_action_accuracy(ensemble: BoostedEnsemble, m: int, entries) -> float:
    """Fraction of oracle states where prefix m predicts the full gold action."""
    if not 1 <= m <= len(ensemble.steps):
        raise InvalidPrefix(f"prefix {m} outside 1..{len(ensemble.steps)}")
    inst = _build_instances(entries, ensemble.encoder_config, ensemble.relation_inventory)
    zs = np.zeros((len(inst), wl.N_STRUCTURE))
    zr = np.zeros((len(inst), len(ensemble.relation_inventory)))
    for step in ensemble.steps[:m]:
        s, r = _batch_logits(step, inst.x)
        zs += s
        zr += r
    zs = np.where(inst.mask, zs, -np.inf)
    pred_s = zs.argmax(axis=1)
    ok = pred_s == inst.gold_structure
    is_reduce = inst.gold_relation >= 0
    ok &= ~is_reduce | (zr.argmax(axis=1) == inst.gold_relation)
    return float(ok.mean())


# ---------------------------------------------------------------------------
# SGD inner loop
# ---------------------------------------------------------------------------

class _Trainer:
    """Owns the working parameter arrays for one boosting step."""

    def __init__(self, learner: WeakLearner):
        self.cfg = learner.cfg
        self.params = {name: arr.copy() for name, arr in learner.param_items()}

    def snapshot(self) -> WeakLearner:
        p = {name: arr.copy() for name, arr in self.params.items()}
        return WeakLearner(
            cfg=self.cfg,
            w_hidden=p.get("w_hidden"),
            b_hidden=p.get("b_hidden"),
            w_structure=p["w_structure"],
            b_structure=p["b_structure"],
            w_relation=p["w_relation"],
            b_relation=p["b_relation"],
        )

    def run_epoch(self, inst: _Instances, frozen_s, frozen_r, order) -> None:
        lr = self.cfg.learning_rate
        if self.cfg.l2_penalty > 0:
            self._run_epoch_dense(inst, frozen_s, frozen_r, order, lr)
        else:
            self._run_epoch_sparse(inst, frozen_s, frozen_r, order, lr)

    def _run_epoch_sparse(self, inst, frozen_s, frozen_r, order, lr) -> None:
        p = self.params
        hidden = "w_hidden" in p
        w1 = p.get("w_hidden")
        b1 = p.get("b_hidden")
        ws, bs = p["w_structure"], p["b_structure"]
        wr, br = p["w_relation"], p["b_relation"]
        for i in order:
            idx = inst.nonzero[i]
            xv = inst.x[i, idx]
            if hidden:
                h = np.tanh(w1[:, idx] @ xv + b1)
                zs = frozen_s[i] + ws @ h + bs
            else:
                h = None
                zs = frozen_s[i] + ws[:, idx] @ xv + bs
            zs = np.where(inst.mask[i], zs, -np.inf)
            e = np.exp(zs - zs.max())
            dz_s = e / e.sum()
            dz_s[inst.gold_structure[i]] -= 1.0

            g_rel = inst.gold_relation[i]
            if g_rel >= 0:
                if hidden:
                    zr = frozen_r[i] + wr @ h + br
                else:
                    zr = frozen_r[i] + wr[:, idx] @ xv + br
                e = np.exp(zr - zr.max())
                dz_r = e / e.sum()
                dz_r[g_rel] -= 1.0
            else:
                dz_r = None

            if hidden:
                dh = ws.T @ dz_s
                if dz_r is not None:
                    dh += wr.T @ dz_r
                dpre = dh * (1.0 - h * h)
                ws -= lr * np.outer(dz_s, h)
                bs -= lr * dz_s
                if dz_r is not None:
                    wr -= lr * np.outer(dz_r, h)
                    br -= lr * dz_r
                w1[:, idx] -= lr * np.outer(dpre, xv)
                b1 -= lr * dpre
            else:
                ws[:, idx] -= lr * np.outer(dz_s, xv)
                bs -= lr * dz_s
                if dz_r is not None:
                    wr[:, idx] -= lr * np.outer(dz_r, xv)
                    br -= lr * dz_r

    def _run_epoch_dense(self, inst, frozen_s, frozen_r, order, lr) -> None:
        # Reference path: exact l2 gradients on every parameter, every update.
        learner = self.snapshot()
        for i in order:
            g_rel = inst.gold_relation[i]
            _, grads = wl.boosted_loss_and_grad(
                learner,
                inst.x[i],
                LogitPair(frozen_s[i], frozen_r[i]),
                int(inst.gold_structure[i]),
                int(g_rel) if g_rel >= 0 else None,
                inst.mask[i],
            )
            learner = wl.sgd_step(learner, grads, lr)
        self.params = {name: arr.copy() for name, arr in learner.param_items()}

    def combined_ce(self, inst: _Instances, frozen_s, frozen_r) -> float:
        s, r = _batch_logits(self.snapshot(), inst.x)
        return _mean_combined_ce(frozen_s + s, frozen_r + r, inst)


def _child_seed(seed: int, *path: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed & 0xFFFFFFFF] + list(path))


def split_dev(
    treebank: Treebank, dev_fraction: float, seed: int
) -> tuple[tuple, tuple]:
    """Seeded document-level split into (train_entries, dev_entries).

    Single-document treebanks train without a dev split; otherwise at
    least one document goes to each side.
    """
    n = len(treebank.entries)
    if n < 2:
        return treebank.entries, ()
    n_dev = min(n - 1, max(1, int(round(dev_fraction * n))))
    perm = np.random.default_rng(_child_seed(seed, 9)).permutation(n)
    dev_idx = set(perm[:n_dev].tolist())
    train = tuple(e for i, e in enumerate(treebank.entries) if i not in dev_idx)
    dev = tuple(e for i, e in enumerate(treebank.entries) if i in dev_idx)
    return train, dev


def _frozen_logits(
    ensemble: BoostedEnsemble, inst: _Instances
) -> tuple[np.ndarray, np.ndarray]:
    zs = np.zeros((len(inst), wl.N_STRUCTURE))
    zr = np.zeros((len(inst), len(ensemble.relation_inventory)))
    for step in ensemble.steps:
        s, r = _batch_logits(step, inst.x)
        zs += s
        zr += r
    return zs, zr


def _train_one_step(
    cfg: BoostConfig,
    learner_cfg: LearnerConfig,
    step_no: int,
    seed: int,
    train_inst: _Instances,
    dev_inst: _Instances | None,
    frozen_train: tuple[np.ndarray, np.ndarray],
    frozen_dev: tuple[np.ndarray, np.ndarray] | None,
) -> tuple[WeakLearner, StepReport]:
    t0 = time.perf_counter()
    trainer = _Trainer(wl.init(learner_cfg, np.random.default_rng(
        _child_seed(seed, step_no, 0)).integers(0, 2**31)))
    shuffle_rng = np.random.default_rng(_child_seed(seed, step_no, 1))

    def dev_ce() -> float:
        if dev_inst is None or len(dev_inst) == 0:
            return trainer.combined_ce(train_inst, *frozen_train)
        return trainer.combined_ce(dev_inst, *frozen_dev)

    baseline_train = _mean_combined_ce(frozen_train[0], frozen_train[1], train_inst)

    best_dev = float("inf")
    best_dev_params = None
    best_train = float("inf")
    best_train_params = None
    dev_curve: list[float] = []
    bad = 0
    epochs_run = 0
    n = len(train_inst)
    for _ in range(cfg.epochs_max):
        order = shuffle_rng.permutation(n) if cfg.shuffle_each_epoch else np.arange(n)
        trainer.run_epoch(train_inst, frozen_train[0], frozen_train[1], order)
        epochs_run += 1
        d = dev_ce()
        dev_curve.append(d)
        t = trainer.combined_ce(train_inst, *frozen_train)
        if t < best_train:
            best_train, best_train_params = t, trainer.snapshot()
        if d < best_dev:
            best_dev, best_dev_params = d, trainer.snapshot()
            bad = 0
        else:
            bad += 1
            if bad >= cfg.patience:
                break

    # Never append a step that degrades the combined training loss: fall
    # back to the best-train epoch, then to an inert all-zero learner.
    def train_ce_of(learner: WeakLearner) -> float:
        s, r = _batch_logits(learner, train_inst.x)
        return _mean_combined_ce(frozen_train[0] + s, frozen_train[1] + r, train_inst)

    selection = "dev"
    chosen = best_dev_params
    final_ce = train_ce_of(chosen)
    if final_ce > baseline_train:
        if best_train_params is not None and best_train <= baseline_train:
            selection, chosen, final_ce = "train", best_train_params, best_train
        else:
            selection, chosen = "zero", wl.zeros(learner_cfg)
            final_ce = baseline_train

    report = StepReport(
        step=step_no,
        final_train_loss=final_ce,
        dev_losses=dev_curve,
        epochs_run=epochs_run,
        seconds=time.perf_counter() - t0,
        param_count=wl.param_count(chosen),
        selection=selection,
    )
    return chosen, report


def _check_dims(cfg: BoostConfig, enc_cfg: EncoderConfig,
                inventory: tuple[str, ...]) -> LearnerConfig:
    lc = cfg.learner
    if lc.input_dim != enc_cfg.width:
        raise DimensionMismatch(
            f"learner input_dim {lc.input_dim} != encoder width {enc_cfg.width}"
        )
    if lc.n_relations != len(inventory):
        raise DimensionMismatch(
            f"learner n_relations {lc.n_relations} != |inventory| {len(inventory)}"
        )
    return lc


def train_step(
    ensemble: BoostedEnsemble,
    treebank: Treebank,
    seed: int,
    dev_entries: tuple | None = None,
) -> tuple[BoostedEnsemble, StepReport]:
    """Train and append one frozen step against the current ensemble sum.

    ``dev_entries`` pins the early-stopping split; when omitted, a
    dev_fraction split of ``treebank`` is drawn here with ``seed``.
    """
    if len(treebank.entries) == 0:
        raise EmptyTreebank("cannot train on an empty treebank")
    cfg = ensemble.boost_config
    lc = _check_dims(cfg, ensemble.encoder_config, ensemble.relation_inventory)
    if dev_entries is None:
        train_entries, dev_entries = split_dev(treebank, cfg.dev_fraction, seed)
    else:
        train_entries = treebank.entries
    train_inst = _build_instances(train_entries, ensemble.encoder_config,
                                  ensemble.relation_inventory)
    dev_inst = (
        _build_instances(dev_entries, ensemble.encoder_config,
                         ensemble.relation_inventory)
        if dev_entries else None
    )
    frozen_train = _frozen_logits(ensemble, train_inst)
    frozen_dev = _frozen_logits(ensemble, dev_inst) if dev_inst is not None else None
    learner, report = _train_one_step(
        cfg, lc, len(ensemble.steps) + 1, seed,
        train_inst, dev_inst, frozen_train, frozen_dev,
    )
    return replace(ensemble, steps=ensemble.steps + (learner,)), report


def train(
    treebank: Treebank,
    cfg: BoostConfig,
    enc_cfg: EncoderConfig,
) -> tuple[BoostedEnsemble, TrainReport]:
    """Run the full staged procedure: n_steps weak learners, dev split fixed once."""
    if len(treebank.entries) == 0:
        raise EmptyTreebank("cannot train on an empty treebank")
    inventory = treebank.relation_inventory
    lc = _check_dims(cfg, enc_cfg, inventory)
    ensemble = BoostedEnsemble(
        encoder_config=enc_cfg,
        relation_inventory=inventory,
        steps=(),
        boost_config=cfg,
        train_domain_tag=treebank.domain_tag,
    )
    train_entries, dev_entries = split_dev(treebank, cfg.dev_fraction, cfg.seed)
    train_inst = _build_instances(train_entries, enc_cfg, inventory)
    dev_inst = _build_instances(dev_entries, enc_cfg, inventory) if dev_entries else None

    zs = np.zeros((len(train_inst), wl.N_STRUCTURE))
    zr = np.zeros((len(train_inst), len(inventory)))
    zs_dev = np.zeros((len(dev_inst), wl.N_STRUCTURE)) if dev_inst is not None else None
    zr_dev = np.zeros((len(dev_inst), len(inventory))) if dev_inst is not None else None

    report = TrainReport()
    total_params = 0
    for k in range(1, cfg.n_steps + 1):
        learner, step_report = _train_one_step(
            cfg, lc, k, cfg.seed, train_inst, dev_inst,
            (zs, zr),
            (zs_dev, zr_dev) if dev_inst is not None else None,
        )
        ensemble = replace(ensemble, steps=ensemble.steps + (learner,))
        s, r = _batch_logits(learner, train_inst.x)
        zs += s
        zr += r
        if dev_inst is not None:
            s, r = _batch_logits(learner, dev_inst.x)
            zs_dev += s
            zr_dev += r
        total_params += step_report.param_count
        report.steps.append(step_report)
        report.cumulative_params.append(total_params)
    return ensemble, report


# ---------------------------------------------------------------------------
# Decoding
# ---------------------------------------------------------------------------

def predict_action(
    ensemble: BoostedEnsemble, m: int, state: ParserState, doc: Document
) -> Action:
    """Greedy masked argmax over the prefix-m logit sum (ties to lowest index)."""
    if state.is_terminal:
        raise TerminalState("no action to predict in a terminal state")
    x = encode_state(state, doc, ensemble.encoder_config)
    logits = aggregate_logits(ensemble, m, x)
    z = np.where(structure_mask(state), logits.structure, -np.inf)
    cls = int(np.argmax(z))
    if cls == wl.SHIFT_CLASS:
        return SHIFT
    relation = ensemble.relation_inventory[int(np.argmax(logits.relation))]
    return Reduce(NUCLEARITIES[cls - 1], relation)


def decode(
    ensemble: BoostedEnsemble, m: int, doc: Document
) -> tuple[DiscourseNode, list[Action]]:
    """Greedy parse; always terminates with a full tree in 2n-1 actions."""
    state = initial_state(doc.n_edus)
    actions: list[Action] = []
    while not state.is_terminal:
        action = predict_action(ensemble, m, state, doc)
        actions.append(action)
        state = apply(state, action)
    return state.stack[0], actions


def parse(ensemble: BoostedEnsemble, m: int, doc: Document) -> DiscourseNode:
    tree, _ = decode(ensemble, m, doc)
    return tree


# ---------------------------------------------------------------------------
# Model serialization
# ---------------------------------------------------------------------------

FORMAT_VERSION = 1


def _learner_to_dict(learner: WeakLearner) -> dict:
    out: dict = {"hidden_dim": learner.cfg.hidden_dim}
    for name, arr in learner.param_items():
        out[name] = {"shape": list(arr.shape), "data": arr.ravel().tolist()}
    return out


def _learner_from_dict(cfg: LearnerConfig, blob: dict) -> WeakLearner:
    def arr(name: str) -> np.ndarray | None:
        if name not in blob:
            return None
        spec = blob[name]
        return np.asarray(spec["data"], dtype=np.float64).reshape(spec["shape"])

    return WeakLearner(
        cfg=cfg,
        w_hidden=arr("w_hidden"),
        b_hidden=arr("b_hidden"),
        w_structure=arr("w_structure"),
        b_structure=arr("b_structure"),
        w_relation=arr("w_relation"),
        b_relation=arr("b_relation"),
    )


def model_to_json(ensemble: BoostedEnsemble) -> str:
    doc = {
        "format_version": FORMAT_VERSION,
        "encoder_config": asdict(ensemble.encoder_config),
        "relation_inventory": list(ensemble.relation_inventory),
        "train_domain_tag": ensemble.train_domain_tag,
        "boost_config": asdict(ensemble.boost_config),
        "steps": [_learner_to_dict(s) for s in ensemble.steps],
    }
    return json.dumps(doc, indent=1)


def model_from_json(text: str) -> BoostedEnsemble:
    doc = json.loads(text)
    if doc.get("format_version") != FORMAT_VERSION:
        raise InvalidConfig(f"unsupported model format_version {doc.get('format_version')!r}")
    enc_cfg = EncoderConfig(**doc["encoder_config"])
    bc = dict(doc["boost_config"])
    lc = LearnerConfig(**bc.pop("learner"))
    boost_cfg = BoostConfig(learner=lc, **bc)
    steps = tuple(_learner_from_dict(lc, blob) for blob in doc["steps"])
    return BoostedEnsemble(
        encoder_config=enc_cfg,
        relation_inventory=tuple(doc["relation_inventory"]),
        steps=steps,
        boost_config=boost_cfg,
        train_domain_tag=doc.get("train_domain_tag", ""),
    )


def save_model(ensemble: BoostedEnsemble, path: str | Path) -> None:
    Path(path).write_text(model_to_json(ensemble), encoding="utf-8")


def load_model(path: str | Path) -> BoostedEnsemble:
    return model_from_json(Path(path).read_text(encoding="utf-8"))

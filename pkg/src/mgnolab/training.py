"""Training and evaluation: relative-L2 loss, Adam, the per-sample training
loop, and the ablation grid runner that aggregates seed statistics.

Every model sees one graph per dataset sample; one gradient step is taken
per sample (configurable batch accumulation) on the per-sample relative L2
error. The reported train error is the epoch mean of those losses; the test
error is a full no-gradient pass; both come from the last epoch.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import dataio
from .dataio import DatasetContainer
from .graphs import MultiScaleGraph, ScaleSpec, build_multiscale_graph
from .models import (ModelConfig, ParameterStore, count_parameters,
                     init_parameters, model_forward)
from .rng import SeededRng
from .tensor import Tape, Tensor, add, backward, scale, sqrt, square, sub, sum_all

DARCY_NODE_COUNTS = (256, 64, 16, 4)
DARCY_RADII = (0.10, 0.20, 0.40, 0.80)
BURGERS_RADIUS_FRACTIONS = (0.05, 0.10, 0.20, 0.40)


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, value: float):
        super().__init__(f"non-finite loss in epoch {epoch} (value {value!r})")
        self.epoch = epoch


class AdamError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 200
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    init: str = "orthogonal"      # or "kaiming"
    gain: float = math.sqrt(2.0)
    seed: int = 0
    batch: int = 1                # samples per gradient step

    def validate(self) -> None:
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if self.init not in ("orthogonal", "kaiming"):
            raise ValueError(f"unknown init kind {self.init!r}")


@dataclass
class MetricsRow:
    method: str
    scales: int
    intra_sharing: bool
    iter_sharing: bool
    skip: bool
    train_error_mean: float
    train_error_std: float | None
    test_error_mean: float
    test_error_std: float | None
    seconds_per_epoch: float
    n_params: int
    n_seeds: int
    run_key: str
    status: str = "ok"

    def to_csv_dict(self) -> dict:
        def num(x):
            return "" if x is None else repr(float(x))

        return {
            "method": self.method, "scales": self.scales,
            "intra_sharing": int(self.intra_sharing),
            "iter_sharing": int(self.iter_sharing), "skip": int(self.skip),
            "train_error_mean": num(self.train_error_mean),
            "train_error_std": num(self.train_error_std),
            "test_error_mean": num(self.test_error_mean),
            "test_error_std": num(self.test_error_std),
            "seconds_per_epoch": num(self.seconds_per_epoch),
            "n_params": self.n_params, "n_seeds": self.n_seeds,
            "run_key": self.run_key, "status": self.status,
        }


def method_name(config: ModelConfig) -> str:
    return f"{config.cycle}-mgno" if config.model == "mgno" else config.model


# ---------------------------------------------------------------------------
# loss


def relative_l2(pred: np.ndarray, truth: np.ndarray) -> float:
    pred, truth = np.ravel(pred), np.ravel(truth)
    if pred.shape != truth.shape:
        raise ValueError("relative_l2: length mismatch")
    denom = np.linalg.norm(truth)
    if denom == 0.0:
        raise ValueError("relative_l2: truth has zero norm")
    return float(np.linalg.norm(pred - truth) / denom)


def relative_l2_loss(pred: Tensor, truth: np.ndarray) -> Tensor:
    """Differentiable ||pred - truth|| / ||truth|| (truth is constant)."""
    truth = truth.reshape(pred.data.shape)
    denom = float(np.linalg.norm(truth))
    if denom == 0.0:
        raise ValueError("relative_l2: truth has zero norm")
    return scale(sqrt(sum_all(square(sub(pred, Tensor(truth))))), 1.0 / denom)


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @staticmethod
    def for_store(store: ParameterStore) -> "AdamState":
        return AdamState(m={k: np.zeros_like(t.data) for k, t in store.items()},
                         v={k: np.zeros_like(t.data) for k, t in store.items()})


def adam_step(store: ParameterStore, state: AdamState, config: TrainConfig) -> None:
    """Bias-corrected Adam update in place.

    Parameters whose grad is absent and whose moments are still zero (never
    touched, e.g. the skip weights with skip connections off) are left alone;
    otherwise a missing grad counts as zero and momentum still applies.
    """
    state.step += 1
    b1, b2 = config.beta1, config.beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    ms, vs = state.m, state.v
    for name, t in store.items():
        g = t.grad
        m = ms[name]
        v = vs[name]
        if g is None:
            if not m.any() and not v.any():
                continue
            m *= b1
            v *= b2
        else:
            if not np.isfinite(g).all():
                raise AdamError(f"non-finite gradient for parameter {name!r}")
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * np.square(g)
        t.data -= config.lr * (m / bc1) / (np.sqrt(v / bc2) + config.eps)


# ---------------------------------------------------------------------------
# graphs from containers


def default_scale_specs(pde: str, scales: int) -> list[ScaleSpec]:
    if scales > len(DARCY_NODE_COUNTS):
        raise ValueError(f"at most {len(DARCY_NODE_COUNTS)} scales are configured")
    if pde == "darcy":
        radii = DARCY_RADII
    elif pde == "burgers":
        radii = tuple(2.0 * np.pi * f for f in BURGERS_RADIUS_FRACTIONS)
    else:
        raise ValueError(f"unknown pde {pde!r}")
    specs = []
    for l in range(scales):
        cross = radii[l + 1] if l + 1 < len(radii) else radii[l]
        specs.append(ScaleSpec(n_nodes=DARCY_NODE_COUNTS[l], radius_intra=radii[l],
                               radius_cross=cross))
    return specs


def pde_feature_dim(pde: str) -> int:
    return {"darcy": 5, "burgers": 2}[pde]


def _grid_data(container: DatasetContainer):
    """(positions, per-sample field rows, per-sample targets, periodic extent)."""
    meta = container.meta["dataset"]
    n = meta["grid"]
    if meta["pde"] == "darcy":
        x = np.linspace(0.0, 1.0, n)
        gx, gy = np.meshgrid(x, x, indexing="ij")
        positions = np.stack([gx.ravel(), gy.ravel()], axis=1)
        a = container.fields["a"].reshape(-1, n * n)
        grads = container.fields["grad_a"].reshape(-1, 2, n * n)
        fields = np.stack([a, grads[:, 0], grads[:, 1]], axis=2)
        targets = container.fields["u"].reshape(-1, n * n)
        return positions, fields, targets, None
    x = 2.0 * np.pi * np.arange(n) / n
    positions = x[:, None]
    fields = container.fields["u0"][:, :, None]
    targets = container.fields["u1"]
    return positions, fields, targets, 2.0 * np.pi


_GRAPH_CACHE: dict = {}


def build_sample_graphs(container: DatasetContainer, scales: int, seed: int):
    """One graph and target vector per sample (train split first).

    Graphs for the same (container, seed) at different scale counts share
    their per-level node draws, so they are built once at the deepest level
    and truncated.
    """
    max_scales = max(scales, len(DARCY_NODE_COUNTS))
    key = (str(container.path), container.meta["dataset"]["seed"], seed,
           container.pde, max_scales)
    cached = _GRAPH_CACHE.get(key)
    if cached is None:
        positions, fields, target_grids, extent = _grid_data(container)
        specs = default_scale_specs(container.pde, max_scales)
        graphs = []
        for i in range(fields.shape[0]):
            rng = SeededRng(seed, (2, i))
            graphs.append(build_multiscale_graph(positions, fields[i], specs,
                                                 rng, extent))
        _GRAPH_CACHE.clear()  # hold one dataset's graphs at a time
        _GRAPH_CACHE[key] = (graphs, target_grids)
        cached = _GRAPH_CACHE[key]
    graphs_full, target_grids = cached
    graphs = [truncate_graph(g, scales) for g in graphs_full]
    targets = [target_grids[i][g.grid_indices[0]][:, None]
               for i, g in enumerate(graphs)]
    return graphs, targets


def truncate_graph(graph: MultiScaleGraph, scales: int) -> MultiScaleGraph:
    if scales == graph.n_scales:
        return graph
    if scales > graph.n_scales:
        raise ValueError("cannot truncate to more scales than built")
    return MultiScaleGraph(
        dim=graph.dim, periodic_extent=graph.periodic_extent,
        grid_indices=graph.grid_indices[:scales],
        positions=graph.positions[:scales],
        node_features=graph.node_features[:scales],
        intra=graph.intra[:scales], down=graph.down[:scales - 1],
        up=graph.up[:scales - 1])


# ---------------------------------------------------------------------------
# training loop


@dataclass
class TrainResult:
    row: MetricsRow
    checkpoint: dict
    train_history: list[float]
    test_history: list[float]


def evaluate(config: ModelConfig, store: ParameterStore, graphs, targets) -> float:
    """Mean relative L2 over samples; runs outside any tape."""
    errors = [relative_l2(model_forward(config, store, g).data, t)
              for g, t in zip(graphs, targets)]
    return float(np.mean(errors))


def run_key_for(model_config: ModelConfig, train_config: TrainConfig,
                container: DatasetContainer, seeds) -> str:
    return dataio.config_hash({
        "model": asdict(model_config), "train": asdict(train_config),
        "dataset": container.meta["dataset"], "seeds": list(seeds),
    })


def train_model(model_config: ModelConfig, train_config: TrainConfig,
                container: DatasetContainer) -> TrainResult:
    """Train one model on one dataset split and report last-epoch errors."""
    model_config.validate()
    train_config.validate()
    pde_f_in = pde_feature_dim(container.pde)
    if model_config.f_in != pde_f_in:
        raise ValueError(f"model f_in={model_config.f_in} does not match "
                         f"{container.pde} features ({pde_f_in})")

    graphs, targets = build_sample_graphs(container, model_config.scales,
                                          train_config.seed)
    n_train = container.n_train
    train_graphs, train_targets = graphs[:n_train], targets[:n_train]
    test_graphs, test_targets = graphs[n_train:], targets[n_train:]

    rng = SeededRng(train_config.seed)
    store = init_parameters(model_config, rng.split(0), gain=train_config.gain,
                            kind=train_config.init)
    adam = AdamState.for_store(store)

    train_history: list[float] = []
    test_history: list[float] = []
    epoch_seconds: list[float] = []
    for epoch in range(train_config.epochs):
        order = rng.split(3, epoch).permutation(n_train)
        losses = []
        t0 = time.perf_counter()
        for start in range(0, n_train, train_config.batch):
            chunk = order[start:start + train_config.batch]
            store.zero_grad()
            with Tape():
                loss_t = None
                for i in chunk:
                    li = relative_l2_loss(
                        model_forward(model_config, store, train_graphs[i]),
                        train_targets[i])
                    losses.append(float(li.data))
                    loss_t = li if loss_t is None else add(loss_t, li)
                if len(chunk) > 1:
                    loss_t = scale(loss_t, 1.0 / len(chunk))
                if not np.isfinite(loss_t.data):
                    raise TrainingDiverged(epoch, float(loss_t.data))
                backward(loss_t)
            adam_step(store, adam, train_config)
        epoch_seconds.append(time.perf_counter() - t0)
        train_history.append(float(np.mean(losses)))
        test_history.append(evaluate(model_config, store, test_graphs, test_targets))

    run_key = run_key_for(model_config, train_config, container,
                          [train_config.seed])
    row = MetricsRow(
        method=method_name(model_config), scales=model_config.scales,
        intra_sharing=model_config.intra_sharing,
        iter_sharing=model_config.iter_sharing, skip=model_config.skip,
        train_error_mean=train_history[-1], train_error_std=None,
        test_error_mean=test_history[-1], test_error_std=None,
        seconds_per_epoch=float(np.mean(epoch_seconds)),
        n_params=count_parameters(model_config), n_seeds=1, run_key=run_key)
    checkpoint = {
        "params": store.state_dict(),
        "model_config": asdict(model_config),
        "train_config": asdict(train_config),
        "config_hash": run_key,
        "source_hash": dataio.source_hash(),
    }
    return TrainResult(row=row, checkpoint=checkpoint,
                       train_history=train_history, test_history=test_history)


# ---------------------------------------------------------------------------
# ablation grid

_METHOD_ORDER = {"mlp": 0, "gcn": 1, "gno": 2, "v-mgno": 3, "f-mgno": 4, "w-mgno": 5}


def row_sort_key(row: MetricsRow):
    return (0 if row.scales == 1 else row.scales,
            _METHOD_ORDER.get(row.method, 99),
            row.iter_sharing, row.intra_sharing, not row.skip)


def aggregate_rows(rows: list[MetricsRow], run_key: str) -> MetricsRow:
    """Combine per-seed rows of one cell into a mean ± std row."""
    ok = [r for r in rows if r.status == "ok"]
    base = rows[0]
    if not ok:
        return replace(base, run_key=run_key, n_seeds=len(rows),
                       status=";".join(r.status for r in rows))
    train = np.array([r.train_error_mean for r in ok])
    test = np.array([r.test_error_mean for r in ok])
    std = (lambda a: float(np.std(a, ddof=1)) if len(a) >= 2 else None)
    status = "ok" if len(ok) == len(rows) else \
        f"ok on {len(ok)}/{len(rows)} seeds; " + \
        ";".join(r.status for r in rows if r.status != "ok")
    return replace(base,
                   train_error_mean=float(train.mean()), train_error_std=std(train),
                   test_error_mean=float(test.mean()), test_error_std=std(test),
                   seconds_per_epoch=float(np.mean([r.seconds_per_epoch for r in ok])),
                   n_seeds=len(ok), run_key=run_key, status=status)


def train_cell(model_config: ModelConfig, train_config: TrainConfig,
               container: DatasetContainer, seeds) -> MetricsRow:
    """Train one grid cell across seeds; per-seed failures annotate the row."""
    per_seed = []
    for seed in seeds:
        cfg = replace(train_config, seed=seed)
        try:
            per_seed.append(train_model(model_config, cfg, container).row)
        except (TrainingDiverged, AdamError) as exc:
            per_seed.append(MetricsRow(
                method=method_name(model_config), scales=model_config.scales,
                intra_sharing=model_config.intra_sharing,
                iter_sharing=model_config.iter_sharing, skip=model_config.skip,
                train_error_mean=float("nan"), train_error_std=None,
                test_error_mean=float("nan"), test_error_std=None,
                seconds_per_epoch=float("nan"),
                n_params=count_parameters(model_config), n_seeds=1,
                run_key="", status=f"failed[seed {seed}]: {exc}"))
    run_key = run_key_for(model_config, train_config, container, seeds)
    return aggregate_rows(per_seed, run_key)


def run_ablation_grid(cells: list[ModelConfig], train_config: TrainConfig,
                      container: DatasetContainer, seeds) -> list[MetricsRow]:
    rows = [train_cell(cell, train_config, container, seeds) for cell in cells]
    rows.sort(key=row_sort_key)
    return rows

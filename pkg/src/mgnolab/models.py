"""Learnable operators: the kernel-integral message-passing layer, the
multi-scale cycle models, and the single-scale baselines (MLP, GCN, GNO).

Every state tensor has one row per node and `width` channels. The kernel
network maps an edge-attribute row to a flattened (width, width) matrix; a
message along an edge is that matrix applied to the source state, and a
node aggregates incoming messages by their mean. A skip connection keeps
the target's previous state through the local affine term:

    out = relu( (skip ? prev @ W + b : b) + mean_e K(attr_e) @ src[e] )

Parameters are bound per (role, level, visit-slot, iteration-slot); the two
sharing flags collapse the visit and iteration slots respectively. The lift
P and projection Q are pointwise, shared across scales, and never collapsed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import backend
from .graphs import EdgeSet, MultiScaleGraph
from .rng import SeededRng
from .schedule import Action, generate_schedule
from .tensor import (Tensor, active_tape, add, add_bias, edge_matvec,
                     gather_rows, linear, matmul, relu, segment_mean)

MODELS = ("mlp", "gcn", "gno", "mgno")


@dataclass(frozen=True)
class ModelConfig:
    model: str = "mgno"
    cycle: str = "v"            # v | f | w, multi-scale models only
    scales: int = 4
    depth: int = 4              # cycle iterations T
    width: int = 12             # state channels
    kernel_width: int = 16      # kernel MLP hidden width
    f_in: int = 5               # node feature width (positions + raw fields)
    intra_sharing: bool = False
    iter_sharing: bool = False
    skip: bool = True
    mlp_width: int = 64
    mlp_depth: int = 4
    gcn_depth: int = 3

    @property
    def edge_dim(self) -> int:
        # [x_src, x_tgt, v0(x_src), v0(x_tgt)] = two node-feature rows
        return 2 * self.f_in

    def validate(self) -> None:
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.model == "mgno":
            if self.scales < 2:
                raise ValueError("mgno needs at least 2 scales")
            if self.cycle not in ("v", "f", "w"):
                raise ValueError(f"unknown cycle {self.cycle!r}")
        elif self.scales != 1:
            raise ValueError(f"{self.model} is single-scale; set scales=1")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if min(self.width, self.kernel_width, self.f_in) < 1:
            raise ValueError("widths must be positive")


class ParameterStore:
    """Named parameter tensors in a deterministic insertion order."""

    def __init__(self):
        self.params: dict[str, Tensor] = {}

    def add(self, name: str, shape: tuple[int, ...]) -> None:
        self.params[name] = Tensor(np.zeros(shape), requires_grad=True)

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def items(self):
        return self.params.items()

    def n_parameters(self) -> int:
        return sum(t.data.size for t in self.params.values())

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        if set(state) != set(self.params):
            raise ValueError("state dict does not match the parameter store")
        for k, t in self.params.items():
            if state[k].shape != t.data.shape:
                raise ValueError(f"shape mismatch for {k}")
            t.data = np.asarray(state[k], dtype=np.float64).copy()


# ---------------------------------------------------------------------------
# parameter layout


def model_schedule(config: ModelConfig) -> list[Action]:
    """Actions of one cycle iteration (GNO: one in-scale pass at the finest)."""
    if config.model == "mgno":
        return generate_schedule(config.cycle, config.scales)
    if config.model == "gno":
        return [Action("in", 1, 0)]
    return []


def slot_name(config: ModelConfig, iteration: int, action: Action) -> str:
    it = 0 if config.iter_sharing else iteration
    visit = 0 if config.intra_sharing else action.visit
    return f"cycle.it{it}.{action.role}{action.level}.v{visit}"


def _weight_shapes(config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """(name, shape) for every parameter, in binding order."""
    c = config
    shapes: list[tuple[str, tuple[int, ...]]] = []
    if c.model == "mlp":
        dims = [c.f_in] + [c.mlp_width] * (c.mlp_depth - 1) + [1]
        for i in range(c.mlp_depth):
            shapes += [(f"mlp.w{i}", (dims[i], dims[i + 1])),
                       (f"mlp.b{i}", (dims[i + 1],))]
        return shapes

    shapes += [("lift.w", (c.f_in, c.width)), ("lift.b", (c.width,))]
    if c.model == "gcn":
        for i in range(c.gcn_depth):
            shapes.append((f"gcn.w{i}", (c.width, c.width)))
    else:
        e, k, w = c.edge_dim, c.kernel_width, c.width
        seen = set()
        for it in range(c.depth):
            for action in model_schedule(c):
                slot = slot_name(c, it, action)
                if slot in seen:
                    continue
                seen.add(slot)
                shapes += [
                    (f"{slot}.kernel.w1", (e, k)), (f"{slot}.kernel.b1", (k,)),
                    (f"{slot}.kernel.w2", (k, k)), (f"{slot}.kernel.b2", (k,)),
                    (f"{slot}.kernel.w3", (k, w * w)), (f"{slot}.kernel.b3", (w * w,)),
                    (f"{slot}.local.w", (w, w)), (f"{slot}.local.b", (w,)),
                ]
    shapes += [("proj.w", (c.width, 1)), ("proj.b", (1,))]
    return shapes


def build_parameter_store(config: ModelConfig) -> ParameterStore:
    config.validate()
    store = ParameterStore()
    for name, shape in _weight_shapes(config):
        store.add(name, shape)
    return store


def count_parameters(config: ModelConfig) -> int:
    return build_parameter_store(config).n_parameters()


def cycle_parameter_names(config: ModelConfig) -> set[str]:
    return {k for k in build_parameter_store(config).params if k.startswith("cycle.")}


# ---------------------------------------------------------------------------
# initialization


def orthogonal_matrix(rng: SeededRng, m: int, n: int, gain: float) -> np.ndarray:
    """Semi-orthogonal (m, n) matrix scaled by gain.

    QR of a standard Gaussian (tall orientation), with the sign of R's
    diagonal folded into Q so the distribution is Haar-uniform. Tall results
    satisfy WᵀW = gain²·I, wide ones W·Wᵀ = gain²·I.
    """
    a = rng.standard_normal((max(m, n), min(m, n)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if m < n:
        q = q.T
    return np.ascontiguousarray(gain * q)


def kaiming_matrix(rng: SeededRng, m: int, n: int) -> np.ndarray:
    """He-normal fan-in init for a right-multiplied (in, out) weight."""
    return rng.standard_normal((m, n)) * math.sqrt(2.0 / m)


def init_parameters(config: ModelConfig, rng: SeededRng, gain: float = math.sqrt(2.0),
                    kind: str = "orthogonal") -> ParameterStore:
    """Fill a fresh store: weights orthogonal (or Kaiming), biases zero."""
    if kind not in ("orthogonal", "kaiming"):
        raise ValueError(f"init kind must be 'orthogonal' or 'kaiming', got {kind!r}")
    if gain <= 0:
        raise ValueError("init gain must be positive")
    store = build_parameter_store(config)
    draw = rng.split(7)
    for name, t in store.items():
        if t.data.ndim == 2:
            m, n = t.data.shape
            if kind == "orthogonal":
                t.data = orthogonal_matrix(draw, m, n, gain)
            else:
                t.data = kaiming_matrix(draw, m, n)
        # biases stay zero
    return store


# ---------------------------------------------------------------------------
# forward passes


def _graph_cache(graph: MultiScaleGraph) -> dict:
    cache = getattr(graph, "_op_cache", None)
    if cache is None:
        cache = {}
        graph._op_cache = cache  # type: ignore[attr-defined]
    return cache


def _edge_attr_tensor(graph: MultiScaleGraph, edges: EdgeSet) -> Tensor:
    cache = _graph_cache(graph)
    t = cache.get(("attrs", id(edges)))
    if t is None:
        t = Tensor(edges.attrs)
        cache[("attrs", id(edges))] = t
    return t


def _edge_counts(graph: MultiScaleGraph, edges: EdgeSet, n_tgt: int) -> np.ndarray:
    cache = _graph_cache(graph)
    counts = cache.get(("counts", id(edges)))
    if counts is None:
        counts = np.bincount(edges.tgt, minlength=n_tgt)
        cache[("counts", id(edges))] = counts
    return counts


def kernel_matrices(attrs: Tensor, store: ParameterStore, slot: str) -> Tensor:
    """Kernel MLP: edge attributes -> flattened (width, width) matrices."""
    h = relu(linear(attrs, store[f"{slot}.kernel.w1"], store[f"{slot}.kernel.b1"]))
    h = relu(linear(h, store[f"{slot}.kernel.w2"], store[f"{slot}.kernel.b2"]))
    return linear(h, store[f"{slot}.kernel.w3"], store[f"{slot}.kernel.b3"])


def message_pass(prev: Tensor, src_state: Tensor, edges: EdgeSet, kflat: Tensor,
                 local_w: Tensor, local_b: Tensor, skip: bool,
                 counts: np.ndarray | None = None) -> Tensor:
    """relu( (skip ? prev @ W + b : b) + mean_e K_e @ src[e] ), fused.

    One tape op per call; forward and backward run the compiled edge pass.
    Semantics (and bits) match message_pass_composed.
    """
    n_tgt, width = prev.data.shape
    if src_state.data.shape[1] != width:
        raise ValueError("message_pass: source and target widths differ")
    if counts is None:
        counts = np.bincount(edges.tgt, minlength=n_tgt)
    msg = backend.msg_mean_forward(kflat.data, src_state.data, edges.src,
                                   edges.tgt, counts, n_tgt)
    if skip:
        pre = prev.data @ local_w.data + local_b.data
        pre += msg
    else:
        pre = msg + local_b.data
    out_data = np.maximum(pre, 0.0)

    if skip:
        inputs = (prev, src_state, kflat, local_w, local_b)
    else:
        inputs = (src_state, kflat, local_b)
    requires = any(t.requires_grad for t in inputs)
    out = Tensor._wrap(out_data, requires)
    tape = active_tape()
    if tape is None or not requires:
        return out

    needs = tuple(t.requires_grad for t in inputs)
    n_src = src_state.data.shape[0]

    def bwd(g, out_data=out_data, counts=counts, needs=needs, skip=skip,
            prev_d=prev.data, src_d=src_state.data, k_d=kflat.data,
            w_d=local_w.data):
        geff = g * (out_data > 0.0)
        gmean = geff / np.maximum(counts, 1)[:, None]
        if skip:
            n_prev, n_srcg, n_k, n_w, n_b = needs
            dk, dsrc = backend.msg_mean_backward(k_d, src_d, edges.src, edges.tgt,
                                                 gmean, n_src, n_k, n_srcg)
            return (geff @ w_d.T if n_prev else None, dsrc, dk,
                    prev_d.T @ geff if n_w else None,
                    geff.sum(axis=0) if n_b else None)
        n_srcg, n_k, n_b = needs
        dk, dsrc = backend.msg_mean_backward(k_d, src_d, edges.src, edges.tgt,
                                             gmean, n_src, n_k, n_srcg)
        return (dsrc, dk, geff.sum(axis=0) if n_b else None)

    tape.record(out, inputs, bwd)
    return out


def message_pass_composed(prev: Tensor, src_state: Tensor, edges: EdgeSet,
                          kflat: Tensor, local_w: Tensor, local_b: Tensor,
                          skip: bool) -> Tensor:
    """Reference path built from the primitive ops; oracle for message_pass."""
    n_tgt = prev.data.shape[0]
    if src_state.data.shape[1] != prev.data.shape[1]:
        raise ValueError("message_pass: source and target widths differ")
    msg = segment_mean(edge_matvec(kflat, gather_rows(src_state, edges.src)),
                       edges.tgt, n_tgt)
    if skip:
        base = add_bias(matmul(prev, local_w), local_b)
    else:
        base = add_bias(Tensor(np.zeros((n_tgt, prev.data.shape[1]))), local_b)
    return relu(add(base, msg))


def _run_schedule(config: ModelConfig, store: ParameterStore,
                  graph: MultiScaleGraph, states: list[Tensor]) -> list[Tensor]:
    schedule = model_schedule(config)
    kflat_cache: dict[tuple[str, int], Tensor] = {}
    for it in range(config.depth):
        for action in schedule:
            slot = slot_name(config, it, action)
            l = action.level - 1
            if action.role == "down":
                edges, src, tgt = graph.down[l], l, l + 1
            elif action.role == "up":
                edges, src, tgt = graph.up[l], l + 1, l
            else:
                edges, src, tgt = graph.intra[l], l, l
            key = (slot, id(edges))
            kflat = kflat_cache.get(key)
            if kflat is None:
                kflat = kernel_matrices(_edge_attr_tensor(graph, edges), store, slot)
                kflat_cache[key] = kflat
            counts = _edge_counts(graph, edges, states[tgt].data.shape[0])
            states[tgt] = message_pass(states[tgt], states[src], edges, kflat,
                                       store[f"{slot}.local.w"],
                                       store[f"{slot}.local.b"], config.skip,
                                       counts=counts)
    return states


def _lift(store: ParameterStore, features: np.ndarray) -> Tensor:
    return linear(Tensor(features), store["lift.w"], store["lift.b"])


def _project(store: ParameterStore, state: Tensor) -> Tensor:
    return linear(state, store["proj.w"], store["proj.b"])


def mgno_forward(config: ModelConfig, store: ParameterStore,
                 graph: MultiScaleGraph) -> Tensor:
    if graph.n_scales != config.scales:
        raise ValueError(
            f"graph has {graph.n_scales} scales but the model expects {config.scales}")
    _check_features(config, graph)
    states = [_lift(store, f) for f in graph.node_features]
    states = _run_schedule(config, store, graph, states)
    return _project(store, states[0])


def gno_forward(config: ModelConfig, store: ParameterStore,
                graph: MultiScaleGraph) -> Tensor:
    _require_single_scale(config, graph)
    states = [_lift(store, graph.node_features[0])]
    # depth applications of the in-scale pass on the finest graph, skip on
    states = _run_schedule(replace(config, skip=True), store, graph, states)
    return _project(store, states[0])


def mlp_forward(config: ModelConfig, store: ParameterStore,
                graph: MultiScaleGraph) -> Tensor:
    _require_single_scale(config, graph)
    h = Tensor(graph.node_features[0])
    for i in range(config.mlp_depth):
        h = linear(h, store[f"mlp.w{i}"], store[f"mlp.b{i}"])
        if i < config.mlp_depth - 1:
            h = relu(h)
    return h


def gcn_normalized_adjacency(graph: MultiScaleGraph) -> np.ndarray:
    """D^{-1/2} (A + I) D^{-1/2} from the finest intra-scale edge list."""
    cached = getattr(graph, "_gcn_ahat", None)
    if cached is not None:
        return cached
    n = graph.positions[0].shape[0]
    a = np.zeros((n, n))
    e = graph.intra[0]
    a[e.src, e.tgt] = 1.0
    a += np.eye(n)
    dinv = 1.0 / np.sqrt(a.sum(axis=1))
    ahat = a * dinv[:, None] * dinv[None, :]
    graph._gcn_ahat = ahat  # type: ignore[attr-defined]
    return ahat


def gcn_forward(config: ModelConfig, store: ParameterStore,
                graph: MultiScaleGraph) -> Tensor:
    _require_single_scale(config, graph)
    ahat = Tensor(gcn_normalized_adjacency(graph))
    h = _lift(store, graph.node_features[0])
    for i in range(config.gcn_depth):
        h = relu(matmul(ahat, matmul(h, store[f"gcn.w{i}"])))
    return _project(store, h)


_FORWARDS = {"mlp": mlp_forward, "gcn": gcn_forward,
             "gno": gno_forward, "mgno": mgno_forward}


def model_forward(config: ModelConfig, store: ParameterStore,
                  graph: MultiScaleGraph) -> Tensor:
    """Predict one output per finest-scale node; shape (n_1, 1)."""
    return _FORWARDS[config.model](config, store, graph)


def _require_single_scale(config: ModelConfig, graph: MultiScaleGraph) -> None:
    if graph.n_scales != 1:
        raise ValueError(f"{config.model} expects a single-scale graph, "
                         f"got {graph.n_scales} scales")
    _check_features(config, graph)


def _check_features(config: ModelConfig, graph: MultiScaleGraph) -> None:
    if graph.feature_dim != config.f_in:
        raise ValueError(f"graph features have width {graph.feature_dim} "
                         f"but the model expects f_in={config.f_in}")

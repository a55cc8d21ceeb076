"""Gated graph convolution edge classifier with hand-written gradients.

Forward pass:
    x0 = BN(xn W1 + b1)                    e0 = BN(en W2 + b2)
    per layer l:
        e_hat = x A [tail] + x B [head] + e C
        eta   = sigmoid(e_hat) / sum of sigmoid(e_hat) over edges incident to the centre node
        x_hat = x U + sum over incident edges of eta * (x V)[neighbour]
        x' = x + relu(BN(x_hat))           e' = e + relu(BN(e_hat))
    e_pool = elementwise max over e0..eL
    p = sigmoid(MLP(e_pool)) on connection edges
"""
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Tuple
import logging

import numpy as np

from gnn.features import (
    EDGE_FEATURE_DIM, GraphInputs, NormStats, node_feature_dim, prepare_inputs,
)
from gnn.layers import (
    BatchNormCache, bn_backward, bn_forward, relu, segment_sum, sigmoid,
)

ETA_FLOOR = 1e-8
P_CLAMP = 1e-7

logger = logging.getLogger(__name__)


class ModelError(Exception):
    """Base class for prediction model failures."""


class ShapeMismatch(ModelError):
    pass


class NonFiniteActivation(ModelError):
    """Raised when a forward pass produces NaN or infinity."""


@dataclass(frozen=True)
class Hyper:
    node_dim: int
    edge_dim: int = EDGE_FEATURE_DIM
    h_conv: int = 64
    h_mlp: int = 64
    l_conv: int = 4
    l_mlp: int = 4

    def to_dict(self) -> Dict[str, int]:
        return asdict(self)

    @classmethod
    def for_stations(cls, n_stations: int, **kwargs) -> "Hyper":
        return cls(node_dim=node_feature_dim(n_stations), **kwargs)


def _bn_names(prefix: str) -> List[str]:
    return [f"{prefix}.gamma", f"{prefix}.beta"]


def param_shapes(hyper: Hyper) -> List[Tuple[str, Tuple[int, ...]]]:
    """Trainable tensors in declaration order."""
    h = hyper.h_conv
    shapes: List[Tuple[str, Tuple[int, ...]]] = [
        ("W1", (hyper.node_dim, h)), ("b1", (h,)),
        ("W2", (hyper.edge_dim, h)), ("b2", (h,)),
    ]
    for prefix in ("bn_x0", "bn_e0"):
        shapes += [(name, (h,)) for name in _bn_names(prefix)]
    for l in range(hyper.l_conv):
        shapes += [(f"conv{l}.{m}", (h, h)) for m in "ABCUV"]
        for prefix in (f"conv{l}.bn_x", f"conv{l}.bn_e"):
            shapes += [(name, (h,)) for name in _bn_names(prefix)]
    dims = mlp_dims(hyper)
    for k in range(hyper.l_mlp):
        shapes += [(f"mlp{k}.W", (dims[k], dims[k + 1])), (f"mlp{k}.b", (dims[k + 1],))]
    return shapes


def buffer_shapes(hyper: Hyper) -> List[Tuple[str, Tuple[int, ...]]]:
    prefixes = ["bn_x0", "bn_e0"]
    for l in range(hyper.l_conv):
        prefixes += [f"conv{l}.bn_x", f"conv{l}.bn_e"]
    shapes = []
    for prefix in prefixes:
        shapes += [(f"{prefix}.mean", (hyper.h_conv,)), (f"{prefix}.var", (hyper.h_conv,))]
    return shapes


def mlp_dims(hyper: Hyper) -> List[int]:
    return [hyper.h_conv] + [hyper.h_mlp] * (hyper.l_mlp - 1) + [1]


@dataclass
class ModelParams:
    hyper: Hyper
    tensors: Dict[str, np.ndarray]
    buffers: Dict[str, np.ndarray]

    def copy(self) -> "ModelParams":
        return ModelParams(self.hyper,
                           {k: v.copy() for k, v in self.tensors.items()},
                           {k: v.copy() for k, v in self.buffers.items()})

    def validate(self) -> bool:
        for spec, store in ((param_shapes(self.hyper), self.tensors),
                            (buffer_shapes(self.hyper), self.buffers)):
            for name, shape in spec:
                if name not in store:
                    raise ShapeMismatch(f"missing tensor {name}")
                if store[name].shape != shape:
                    raise ShapeMismatch(f"{name}: expected {shape}, got {store[name].shape}")
        return True

    def all_finite(self) -> bool:
        return all(np.isfinite(v).all() for v in self.tensors.values())


def init_params(hyper: Hyper, seed: int = 0, zero: bool = False) -> ModelParams:
    """He-initialized weights, zero biases, unit BN scale.

    With `zero` every weight matrix is zero, so every score is sigmoid(0).
    """
    rng = np.random.default_rng(seed)
    tensors: Dict[str, np.ndarray] = {}
    for name, shape in param_shapes(hyper):
        if name.endswith(".gamma"):
            tensors[name] = np.ones(shape)
        elif len(shape) == 1 or zero:
            tensors[name] = np.zeros(shape)
        else:
            tensors[name] = rng.normal(0.0, np.sqrt(2.0 / shape[0]), size=shape)
    buffers = {name: (np.ones(shape) if name.endswith(".var") else np.zeros(shape))
               for name, shape in buffer_shapes(hyper)}
    return ModelParams(hyper, tensors, buffers)


@dataclass
class ConvCache:
    x: np.ndarray
    e: np.ndarray
    s: np.ndarray
    denom: np.ndarray
    eta: np.ndarray
    xV: np.ndarray
    bn_x_out: np.ndarray
    bn_x: BatchNormCache
    bn_e_out: np.ndarray
    bn_e: BatchNormCache


@dataclass
class ForwardCache:
    inputs: GraphInputs
    bn_x0: BatchNormCache
    bn_e0: BatchNormCache
    convs: List[ConvCache]
    pool_arg: np.ndarray
    mlp_inputs: List[np.ndarray]
    mlp_pre: List[np.ndarray]
    p: np.ndarray


def _bn(params: ModelParams, prefix: str, z: np.ndarray, train: bool):
    t, b = params.tensors, params.buffers
    return bn_forward(z, t[f"{prefix}.gamma"], t[f"{prefix}.beta"],
                      b[f"{prefix}.mean"], b[f"{prefix}.var"], train)


def _check_inputs(params: ModelParams, inputs: GraphInputs) -> None:
    if inputs.xn.shape[1] != params.hyper.node_dim:
        raise ShapeMismatch(f"node features have width {inputs.xn.shape[1]}, "
                            f"model expects {params.hyper.node_dim}")
    if inputs.en.shape[1] != params.hyper.edge_dim:
        raise ShapeMismatch(f"edge features have width {inputs.en.shape[1]}, "
                            f"model expects {params.hyper.edge_dim}")


def _conv_forward(params: ModelParams, l: int, x: np.ndarray, e: np.ndarray,
                  inputs: GraphInputs, train: bool) -> Tuple[np.ndarray, np.ndarray, ConvCache]:
    t = params.tensors
    p = f"conv{l}"
    n = x.shape[0]
    e_hat = (x @ t[f"{p}.A"])[inputs.tails] + (x @ t[f"{p}.B"])[inputs.heads] + e @ t[f"{p}.C"]
    s = sigmoid(e_hat)
    denom = segment_sum(s[inputs.half_edges], inputs.centers, n)
    eta = s[inputs.half_edges] / np.maximum(denom, ETA_FLOOR)[inputs.centers]
    xV = x @ t[f"{p}.V"]
    x_hat = x @ t[f"{p}.U"] + segment_sum(eta * xV[inputs.neighbors], inputs.centers, n)
    bn_x_out, bn_x = _bn(params, f"{p}.bn_x", x_hat, train)
    bn_e_out, bn_e = _bn(params, f"{p}.bn_e", e_hat, train)
    cache = ConvCache(x, e, s, denom, eta, xV, bn_x_out, bn_x, bn_e_out, bn_e)
    return x + relu(bn_x_out), e + relu(bn_e_out), cache


def forward(params: ModelParams, inputs: GraphInputs,
            train: bool = False) -> Tuple[np.ndarray, Optional[ForwardCache]]:
    """Scores for the connection edges of one graph, plus the cache in train mode.

    Raises:
        ShapeMismatch: feature widths disagree with the model
        NonFiniteActivation: NaN or infinity in the embeddings or scores
    """
    _check_inputs(params, inputs)
    t = params.tensors
    x, bn_x0 = _bn(params, "bn_x0", inputs.xn @ t["W1"] + t["b1"], train)
    e, bn_e0 = _bn(params, "bn_e0", inputs.en @ t["W2"] + t["b2"], train)

    edge_layers = [e]
    convs: List[ConvCache] = []
    for l in range(params.hyper.l_conv):
        x, e, conv = _conv_forward(params, l, x, e, inputs, train)
        convs.append(conv)
        edge_layers.append(e)

    stacked = np.stack(edge_layers)
    pool_arg = stacked.argmax(axis=0)  # first maximum, i.e. the lowest layer
    pooled = stacked.max(axis=0)
    if not np.isfinite(pooled).all():
        raise NonFiniteActivation("edge embeddings are not finite")

    z = pooled[inputs.connections]
    mlp_inputs, mlp_pre = [], []
    l_mlp = params.hyper.l_mlp
    for k in range(l_mlp):
        mlp_inputs.append(z)
        a = z @ t[f"mlp{k}.W"] + t[f"mlp{k}.b"]
        mlp_pre.append(a)
        z = relu(a) if k < l_mlp - 1 else a
    p = sigmoid(z[:, 0])
    if not np.isfinite(p).all():
        raise NonFiniteActivation("edge scores are not finite")

    if not train:
        return p, None
    return p, ForwardCache(inputs, bn_x0, bn_e0, convs, pool_arg, mlp_inputs, mlp_pre, p)


def loss(p: np.ndarray, labels: np.ndarray, w_neg: float) -> float:
    """Weighted binary cross-entropy, averaged over edges; negatives weigh w_neg."""
    if p.size == 0:
        return 0.0
    y = np.asarray(labels, dtype=float)
    q = np.clip(p, P_CLAMP, 1.0 - P_CLAMP)
    return float(np.mean(-(y * np.log(q) + w_neg * (1.0 - y) * np.log(1.0 - q))))


def loss_grad(p: np.ndarray, labels: np.ndarray, w_neg: float) -> np.ndarray:
    """d loss / d logit; zero where the clamp is active."""
    if p.size == 0:
        return np.zeros(0)
    y = np.asarray(labels, dtype=float)
    grad = (-y * (1.0 - p) + w_neg * (1.0 - y) * p) / p.size
    grad[(p < P_CLAMP) | (p > 1.0 - P_CLAMP)] = 0.0
    return grad


def _conv_backward(params: ModelParams, l: int, c: ConvCache, inputs: GraphInputs,
                   dx_out: np.ndarray, de_out: np.ndarray,
                   grads: Dict[str, np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    t = params.tensors
    p = f"conv{l}"
    n = c.x.shape[0]
    n_edges = c.e.shape[0]

    dx_hat, grads[f"{p}.bn_x.gamma"], grads[f"{p}.bn_x.beta"] = \
        bn_backward(dx_out * (c.bn_x_out > 0), c.bn_x)
    de_hat, grads[f"{p}.bn_e.gamma"], grads[f"{p}.bn_e.beta"] = \
        bn_backward(de_out * (c.bn_e_out > 0), c.bn_e)
    dx = dx_out.copy()
    de = de_out.copy()

    # x_hat = x U + agg
    grads[f"{p}.U"] = c.x.T @ dx_hat
    dx += dx_hat @ t[f"{p}.U"].T
    dmsg = dx_hat[inputs.centers]
    d_eta = dmsg * c.xV[inputs.neighbors]
    dxV = segment_sum(dmsg * c.eta, inputs.neighbors, n)
    grads[f"{p}.V"] = c.x.T @ dxV
    dx += dxV @ t[f"{p}.V"].T

    # eta = s[k] / max(denom, floor)[centre]
    floored = np.maximum(c.denom, ETA_FLOOR)
    ds = segment_sum(d_eta / floored[inputs.centers], inputs.half_edges, n_edges)
    d_denom = -segment_sum(d_eta * c.eta / floored[inputs.centers], inputs.centers, n)
    d_denom *= c.denom > ETA_FLOOR
    ds += segment_sum(d_denom[inputs.centers], inputs.half_edges, n_edges)
    de_hat += ds * c.s * (1.0 - c.s)

    # e_hat = x A [tail] + x B [head] + e C
    dxA = segment_sum(de_hat, inputs.tails, n)
    dxB = segment_sum(de_hat, inputs.heads, n)
    grads[f"{p}.A"] = c.x.T @ dxA
    grads[f"{p}.B"] = c.x.T @ dxB
    grads[f"{p}.C"] = c.e.T @ de_hat
    dx += dxA @ t[f"{p}.A"].T + dxB @ t[f"{p}.B"].T
    de += de_hat @ t[f"{p}.C"].T
    return dx, de


def backward(params: ModelParams, cache: ForwardCache, labels: np.ndarray,
             w_neg: float) -> Dict[str, np.ndarray]:
    """Gradient of `loss` with respect to every trainable tensor."""
    t = params.tensors
    inputs = cache.inputs
    grads: Dict[str, np.ndarray] = {}

    dz = loss_grad(cache.p, labels, w_neg)[:, None]
    for k in reversed(range(params.hyper.l_mlp)):
        da = dz if k == params.hyper.l_mlp - 1 else dz * (cache.mlp_pre[k] > 0)
        grads[f"mlp{k}.W"] = cache.mlp_inputs[k].T @ da
        grads[f"mlp{k}.b"] = da.sum(axis=0)
        dz = da @ t[f"mlp{k}.W"].T

    d_pool = np.zeros((inputs.n_edges, params.hyper.h_conv))
    d_pool[inputs.connections] = dz

    de = d_pool * (cache.pool_arg == params.hyper.l_conv)
    dx = np.zeros((inputs.n_nodes, params.hyper.h_conv))
    for l in reversed(range(params.hyper.l_conv)):
        dx, de = _conv_backward(params, l, cache.convs[l], inputs, dx, de, grads)
        de = de + d_pool * (cache.pool_arg == l)

    dh, grads["bn_x0.gamma"], grads["bn_x0.beta"] = bn_backward(dx, cache.bn_x0)
    grads["W1"] = inputs.xn.T @ dh
    grads["b1"] = dh.sum(axis=0)
    dh, grads["bn_e0.gamma"], grads["bn_e0.beta"] = bn_backward(de, cache.bn_e0)
    grads["W2"] = inputs.en.T @ dh
    grads["b2"] = dh.sum(axis=0)
    return {name: grads[name] for name, _ in param_shapes(params.hyper)}


@dataclass
class EdgeScores:
    """Predicted probability per connection edge, aligned with `edge_ids`."""
    edge_ids: np.ndarray
    p: np.ndarray

    def as_dict(self) -> Dict[int, float]:
        return {int(k): float(v) for k, v in zip(self.edge_ids, self.p)}


@dataclass
class PredictionModel:
    params: ModelParams
    norm_stats: NormStats
    metadata: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def zero(cls, n_stations: int, **hyper_kwargs) -> "PredictionModel":
        """Untrained model that scores every edge 0.5."""
        hyper = Hyper.for_stations(n_stations, **hyper_kwargs)
        stats = NormStats(np.zeros(hyper.node_dim), np.ones(hyper.node_dim),
                          np.zeros(hyper.edge_dim), np.ones(hyper.edge_dim))
        return cls(init_params(hyper, zero=True), stats)

    def score(self, g) -> EdgeScores:
        """Connection edge probabilities for `g`.

        Raises:
            ShapeMismatch: `g` has a station count the model was not trained on
        """
        width = node_feature_dim(g.n_stations)
        expected = self.params.hyper.node_dim
        if width != expected or width != self.norm_stats.x_min.size:
            raise ShapeMismatch(f"a graph with {g.n_stations} stations has node features of width {width}, "
                                f"model expects {expected}")
        p, _ = forward(self.params, prepare_inputs(g, self.norm_stats), train=False)
        return EdgeScores(np.array(g.connection_edge_ids, dtype=np.int64), p)

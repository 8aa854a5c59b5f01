"""Model architectures, loss assembly, and the mini-batch trainer.

Four methods share one trainer:

* ``cisi``      - representation net, task-embedding net, one shared outcome
                  head on concat(phi(x), embed(t)); balancing penalty on.
* ``tarnet``    - representation net plus one outcome head per treatment
                  pattern; no penalty.
* ``cfr_wass``  - tarnet topology with the balancing penalty.
* ``ncore``     - representation net, one ReLU net per treatment and one per
                  interaction subset; a subset's net fires only when all its
                  treatments are active.

All prediction for effect estimation runs through :func:`predict_mu` on
plain numpy; training builds the same forward on a fresh tape per batch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np
from threadpoolctl import threadpool_limits

from . import tape as T
from .errors import ConfigError, ContractError, NumericError, ShapeError
from .neural import (AdamState, BoundMLP, MLPParams, adam_step, apply_mlp,
                     bind_mlp, init_mlp, mlp_forward, mlp_from_dict,
                     mlp_to_dict, weight_decay_penalty)
from .ot_balance import RepGroup, balancing_penalty
from .patterns import (Pattern, all_patterns, interaction_subsets,
                       pattern_to_index, rows_by_pattern, subset_key)

METHODS = ("cisi", "tarnet", "cfr_wass", "ncore")
MAX_TREATMENTS = 10  # 2^K outcome heads get materialized for tarnet/cfr_wass


@dataclass
class TrainConfig:
    """Hyperparameters; defaults follow the shared experimental settings."""

    alpha: float = 0.1
    beta: float = 1e-5
    lr: float = 1e-5
    batch_size: int = 128
    epochs: int = 30
    sinkhorn_eps: float = 0.1
    sinkhorn_iters: int = 50
    min_group_size: int = 2
    seed: int = 0
    p: int = 200
    q: int = 5
    width: int = 200
    depth: int = 3
    use_task_embedding: bool = True

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError(f"alpha/beta must be >= 0, got {self.alpha}/{self.beta}")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**doc)


@dataclass
class LossBreakdown:
    """The three loss components and their exact-identity total."""

    total: float
    outcome: float
    balance: float
    reg: float
    alpha: float

    def identity_gap(self) -> float:
        return self.total - ((self.outcome + self.alpha * self.balance) + self.reg)


@dataclass
class ModelBundle:
    """Trained parameters of one method plus architecture metadata."""

    method: str
    d: int
    k: int
    p: int
    q: int
    use_task_embedding: bool
    phi: MLPParams
    task_embed: MLPParams | None = None
    head: MLPParams | None = None
    pattern_heads: list[MLPParams] | None = None
    unit_heads: list[MLPParams] | None = None
    inter_heads: dict[tuple[int, ...], MLPParams] | None = None
    config: TrainConfig | None = None
    train_steps: int = 0
    train_log: list[LossBreakdown] = field(default_factory=list, repr=False)

    def mlps(self) -> list[tuple[str, MLPParams]]:
        """All networks in a fixed order (the binding/update order)."""
        out = [("phi", self.phi)]
        if self.method == "cisi":
            if self.use_task_embedding:
                out.append(("task_embed", self.task_embed))
            out.append(("head", self.head))
        elif self.method in ("tarnet", "cfr_wass"):
            for i, h in enumerate(self.pattern_heads):
                out.append((f"head{i}", h))
        elif self.method == "ncore":
            for i, h in enumerate(self.unit_heads):
                out.append((f"unit{i+1}", h))
            for s in interaction_subsets(self.k):
                out.append((f"inter{subset_key(s)}", self.inter_heads[s]))
        return out

    def parameter_arrays(self) -> list[np.ndarray]:
        arrays = []
        for _, mlp in self.mlps():
            for w, b in zip(mlp.weights, mlp.biases):
                arrays.extend((w, b))
        return arrays

    def n_params(self) -> int:
        return sum(a.size for a in self.parameter_arrays())

    def predict_mu(self, x: np.ndarray, pattern: Pattern) -> np.ndarray:
        return predict_mu(self, x, pattern)

    def to_dict(self) -> dict:
        doc = {
            "method": self.method,
            "d": self.d,
            "k": self.k,
            "p": self.p,
            "q": self.q,
            "use_task_embedding": self.use_task_embedding,
            "phi": mlp_to_dict(self.phi),
            "config": self.config.to_dict() if self.config else None,
            "train_steps": self.train_steps,
        }
        if self.method == "cisi":
            doc["task_embed"] = mlp_to_dict(self.task_embed) if self.task_embed else None
            doc["head"] = mlp_to_dict(self.head)
        elif self.method in ("tarnet", "cfr_wass"):
            doc["pattern_heads"] = [mlp_to_dict(h) for h in self.pattern_heads]
        elif self.method == "ncore":
            doc["unit_heads"] = [mlp_to_dict(h) for h in self.unit_heads]
            doc["inter_heads"] = {subset_key(s): mlp_to_dict(h)
                                  for s, h in self.inter_heads.items()}
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelBundle":
        method = doc["method"]
        if method not in METHODS:
            raise ConfigError(f"unknown method '{method}'")
        kwargs = dict(
            method=method, d=doc["d"], k=doc["k"], p=doc["p"], q=doc["q"],
            use_task_embedding=doc["use_task_embedding"],
            phi=mlp_from_dict(doc["phi"]),
            config=TrainConfig.from_dict(doc["config"]) if doc.get("config") else None,
            train_steps=doc.get("train_steps", 0),
        )
        if method == "cisi":
            te = doc.get("task_embed")
            kwargs["task_embed"] = mlp_from_dict(te) if te else None
            kwargs["head"] = mlp_from_dict(doc["head"])
        elif method in ("tarnet", "cfr_wass"):
            kwargs["pattern_heads"] = [mlp_from_dict(h) for h in doc["pattern_heads"]]
        elif method == "ncore":
            kwargs["unit_heads"] = [mlp_from_dict(h) for h in doc["unit_heads"]]
            kwargs["inter_heads"] = {
                tuple(int(x) for x in key.split(",")): mlp_from_dict(h)
                for key, h in doc["inter_heads"].items()}
        return cls(**kwargs)

    @classmethod
    def from_json(cls, text: str) -> "ModelBundle":
        return cls.from_dict(json.loads(text))


def init_model(method: str, d: int, k: int, config: TrainConfig) -> ModelBundle:
    """Freshly initialized networks for one method; deterministic in the seed."""
    if method not in METHODS:
        raise ConfigError(f"unknown method '{method}', expected one of {METHODS}")
    if k > MAX_TREATMENTS:
        raise ConfigError(f"K={k} exceeds the supported maximum {MAX_TREATMENTS}")
    widths = [config.width] * config.depth
    seed = config.seed

    def rng(idx: int) -> np.random.Generator:
        return np.random.default_rng([seed, 7_919, idx])

    activation = "relu" if method == "ncore" else "leaky_relu"
    phi = init_mlp([d, *widths, config.p], activation, rng(0))
    bundle = ModelBundle(method=method, d=d, k=k, p=config.p, q=config.q,
                         use_task_embedding=config.use_task_embedding,
                         phi=phi, config=config)
    if method == "cisi":
        if config.use_task_embedding:
            bundle.task_embed = init_mlp([k, *widths, config.q], "leaky_relu", rng(1))
            head_in = config.p + config.q
        else:
            head_in = config.p + k
        bundle.head = init_mlp([head_in, *widths, 1], "leaky_relu", rng(2))
    elif method in ("tarnet", "cfr_wass"):
        bundle.pattern_heads = [
            init_mlp([config.p, *widths, 1], "leaky_relu", rng(10 + i))
            for i in range(2 ** k)]
    elif method == "ncore":
        bundle.unit_heads = [
            init_mlp([config.p, config.width, config.width, 1], "relu", rng(10 + i))
            for i in range(k)]
        bundle.inter_heads = {
            s: init_mlp([config.p, config.width, config.width, 1], "relu", rng(100 + i))
            for i, s in enumerate(interaction_subsets(k))}
    return bundle


def predict_mu(bundle: ModelBundle, x: np.ndarray, pattern: Pattern) -> np.ndarray:
    """Numpy forward pass for one (possibly counterfactual) treatment vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != bundle.d:
        raise ShapeError(f"covariates shape {x.shape} does not match d={bundle.d}")
    pattern = tuple(int(b) for b in pattern)
    if len(pattern) != bundle.k or any(b not in (0, 1) for b in pattern):
        raise ContractError(f"pattern {pattern} is not a length-{bundle.k} bit vector")
    n = x.shape[0]
    phi_x = mlp_forward(bundle.phi, x)
    if bundle.method == "cisi":
        t_rep = np.tile(np.asarray(pattern, dtype=np.float64), (n, 1))
        emb = mlp_forward(bundle.task_embed, t_rep) if bundle.use_task_embedding else t_rep
        return mlp_forward(bundle.head, np.concatenate([phi_x, emb], axis=1))[:, 0]
    if bundle.method in ("tarnet", "cfr_wass"):
        head = bundle.pattern_heads[pattern_to_index(pattern)]
        return mlp_forward(head, phi_x)[:, 0]
    # ncore: per-treatment nets for active treatments, interaction nets when
    # every treatment of the subset is active.
    out = np.zeros(n)
    for k_idx, bit in enumerate(pattern):
        if bit:
            out += mlp_forward(bundle.unit_heads[k_idx], phi_x)[:, 0]
    for s, net in bundle.inter_heads.items():
        if all(pattern[j - 1] for j in s):
            out += mlp_forward(net, phi_x)[:, 0]
    return out


def task_embedding(bundle: ModelBundle, pattern: Pattern) -> np.ndarray:
    """Embedding vector for one pattern (cisi with task embedding only)."""
    if bundle.method != "cisi" or not bundle.use_task_embedding:
        raise ContractError("task embeddings exist only for cisi with the embedding on")
    t_rep = np.asarray([pattern], dtype=np.float64)
    return mlp_forward(bundle.task_embed, t_rep)[0]


def pattern_weights(t_mat: np.ndarray) -> dict[Pattern, float]:
    """Half the inverse empirical frequency of each observed pattern."""
    t_mat = np.asarray(t_mat)
    if t_mat.ndim != 2 or t_mat.shape[0] < 1:
        raise ContractError("treatment matrix must be N x K with N >= 1")
    n = t_mat.shape[0]
    return {pat: 0.5 * n / len(idx) for pat, idx in rows_by_pattern(t_mat).items()}


def rows_weights(t_mat: np.ndarray, weights: dict[Pattern, float]) -> np.ndarray:
    """Per-row weight lookup; unseen patterns are a contract violation."""
    groups = rows_by_pattern(t_mat)
    out = np.empty(t_mat.shape[0])
    for pat, idx in groups.items():
        if pat not in weights:
            raise ContractError(f"pattern {pat} absent from the training weight map")
        out[idx] = weights[pat]
    return out


def weighted_outcome_loss(y, yhat, w):
    """(1/N) sum of w_i * (y_i - yhat_i)^2 over rows.

    Node inputs give a scalar node; array inputs give a float.
    """
    if isinstance(yhat, T.Node):
        for other in (y, w):
            if isinstance(other, T.Node) and other.shape != yhat.shape:
                raise ShapeError(f"length mismatch: {other.shape} vs {yhat.shape}")
        tp = yhat.tape
        y_n = y if isinstance(y, T.Node) else tp.constant(np.reshape(y, (-1, 1)))
        w_n = w if isinstance(w, T.Node) else tp.constant(np.reshape(w, (-1, 1)))
        if y_n.shape != yhat.shape or w_n.shape != yhat.shape:
            raise ShapeError(
                f"length mismatch: y {y_n.shape}, w {w_n.shape}, yhat {yhat.shape}")
        return T.mean(T.multiply(w_n, T.square(T.subtract(yhat, y_n))))
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    yhat = np.asarray(yhat, dtype=np.float64).reshape(-1)
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    if not (len(y) == len(yhat) == len(w)):
        raise ShapeError(f"length mismatch: y {len(y)}, yhat {len(yhat)}, w {len(w)}")
    return float(np.mean(w * (y - yhat) ** 2))


def _bind_bundle(tp: T.Tape, bundle: ModelBundle) -> dict[str, BoundMLP]:
    return {name: bind_mlp(tp, mlp, name) for name, mlp in bundle.mlps()}


def _forward_tape(tp: T.Tape, bound: dict[str, BoundMLP], bundle: ModelBundle,
                  x_node: T.Node, t_batch: np.ndarray) -> tuple[T.Node, T.Node]:
    """Batch forward on the tape; returns (yhat Nx1, phi Nxp)."""
    n = x_node.shape[0]
    phi = apply_mlp(bound["phi"], x_node)
    if bundle.method == "cisi":
        t_node = tp.constant(t_batch.astype(np.float64), name="t_batch")
        emb = apply_mlp(bound["task_embed"], t_node) if bundle.use_task_embedding else t_node
        yhat = apply_mlp(bound["head"], T.concat_cols(phi, emb))
        return yhat, phi
    if bundle.method in ("tarnet", "cfr_wass"):
        yhat = None
        for pat, idx in rows_by_pattern(t_batch).items():
            rows = T.gather_rows(phi, idx)
            pred = apply_mlp(bound[f"head{pattern_to_index(pat)}"], rows)
            part = T.scatter_rows(pred, idx, n)
            yhat = part if yhat is None else T.add(yhat, part)
        return yhat, phi
    # ncore: gather by active treatment / fully-active subset.
    t_batch = np.asarray(t_batch)
    yhat = None
    for k_idx in range(bundle.k):
        idx = np.nonzero(t_batch[:, k_idx] == 1)[0]
        if len(idx) == 0:
            continue
        pred = apply_mlp(bound[f"unit{k_idx+1}"], T.gather_rows(phi, idx))
        part = T.scatter_rows(pred, idx, n)
        yhat = part if yhat is None else T.add(yhat, part)
    for s in interaction_subsets(bundle.k):
        mask = np.ones(n, dtype=bool)
        for j in s:
            mask &= t_batch[:, j - 1] == 1
        idx = np.nonzero(mask)[0]
        if len(idx) == 0:
            continue
        pred = apply_mlp(bound[f"inter{subset_key(s)}"], T.gather_rows(phi, idx))
        part = T.scatter_rows(pred, idx, n)
        yhat = part if yhat is None else T.add(yhat, part)
    if yhat is None:
        yhat = tp.constant(np.zeros((n, 1)), name="ncore_zero")
    return yhat, phi


def _build_loss(bundle: ModelBundle, config: TrainConfig, x_b: np.ndarray,
                t_b: np.ndarray, y_b: np.ndarray, w_rows: np.ndarray):
    """One batch's full loss graph; returns (tape, loss, breakdown, param nodes)."""
    tp = T.Tape()
    bound = _bind_bundle(tp, bundle)
    x_node = tp.constant(x_b, name="x_batch")
    yhat, phi = _forward_tape(tp, bound, bundle, x_node, t_b)
    loss_y = weighted_outcome_loss(y_b, yhat, w_rows)

    weight_nodes = []
    for name, _ in bundle.mlps():
        weight_nodes.extend(bound[name].weight_nodes())
    reg = weight_decay_penalty(weight_nodes, config.beta, tp)

    alpha = config.alpha if bundle.method in ("cisi", "cfr_wass") else 0.0
    if alpha > 0.0:
        groups = [RepGroup(pattern=pat, points=T.gather_rows(phi, idx))
                  for pat, idx in rows_by_pattern(t_b).items()]
        balance = balancing_penalty(groups, eps=config.sinkhorn_eps,
                                    iters=config.sinkhorn_iters,
                                    min_group_size=config.min_group_size)
        total = T.add(T.add(loss_y, T.scale(balance, alpha)), reg)
        balance_val = float(balance.value[0, 0])
    else:
        total = T.add(loss_y, reg)
        balance_val = 0.0
    breakdown = LossBreakdown(total=float(total.value[0, 0]),
                              outcome=float(loss_y.value[0, 0]),
                              balance=balance_val,
                              reg=float(reg.value[0, 0]),
                              alpha=alpha)
    param_nodes = []
    for name, _ in bundle.mlps():
        param_nodes.extend(bound[name].all_nodes())
    return tp, total, breakdown, param_nodes


def total_loss(batch: tuple[np.ndarray, np.ndarray, np.ndarray],
               bundle: ModelBundle, config: TrainConfig,
               weights: dict[Pattern, float] | None = None) -> LossBreakdown:
    """Loss components on one batch (weights default to the batch's own)."""
    x_b, t_b, y_b = batch
    if weights is None:
        weights = pattern_weights(t_b)
    w_rows = rows_weights(t_b, weights)
    _, _, breakdown, _ = _build_loss(bundle, config, np.asarray(x_b, dtype=np.float64),
                                     np.asarray(t_b), np.asarray(y_b, dtype=np.float64),
                                     w_rows)
    return breakdown


def train(dataset, config: TrainConfig, method: str,
          record_log: bool = False) -> ModelBundle:
    """Mini-batch Adam over shuffled epochs; returns the final-epoch model.

    Deterministic for a given (dataset, config, method).  Pattern weights are
    computed once on the full training data and reused for every batch.
    """
    x = np.asarray(dataset.x, dtype=np.float64)
    t_mat = np.asarray(dataset.t)
    y = np.asarray(dataset.y, dtype=np.float64).reshape(-1)
    n, d = x.shape
    if n < 1:
        raise ContractError("training data is empty")
    k = t_mat.shape[1]
    bundle = init_model(method, d, k, config)
    weights = pattern_weights(t_mat)
    w_all = rows_weights(t_mat, weights)

    params = bundle.parameter_arrays()
    state = AdamState.for_params(params, lr=config.lr)
    shuffle_rng = np.random.default_rng([config.seed, 104_729])
    step = 0
    with threadpool_limits(limits=1):
        for _ in range(config.epochs):
            perm = shuffle_rng.permutation(n)
            for start in range(0, n, config.batch_size):
                idx = perm[start:start + config.batch_size]
                tp, loss, breakdown, param_nodes = _build_loss(
                    bundle, config, x[idx], t_mat[idx], y[idx], w_all[idx])
                if not np.isfinite(breakdown.total):
                    raise NumericError(f"non-finite loss at step {step}")
                grads_map = tp.backward(loss)
                grads = [grads_map[node] for node in param_nodes]
                adam_step(params, grads, state)
                step += 1
                if record_log:
                    bundle.train_log.append(breakdown)
    bundle.train_steps = step
    return bundle

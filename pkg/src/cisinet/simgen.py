"""Synthetic data generators for the three benchmark scenarios.

All scenarios share one treatment-assignment mechanism and one outcome
function over the *true* covariates; they differ in how observed covariates
relate to true ones and in the bias/interaction settings:

* scenario 1 - true covariates fully observed (15 shifted normals, 15
  uniforms, 15 Bernoulli columns); interactions on, delta=1, lambda=1.
* scenario 2 - 10 latent standard normals; only 30 noisy proxy columns are
  observed; interactions on, delta=0.2, lambda=0.1.
* scenario 3 - like scenario 1 but with interaction terms switched off.

Treatment probabilities come from a sigmoid, so every pattern has strictly
positive probability for every unit.  A generation is fully determined by
(scenario, N, seed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError

N_TREATMENTS = 3
_BLOCK_S1 = 15  # columns per covariate block in scenarios 1/3
_BLOCK_S2 = 10  # latent dimension and per-proxy-block columns in scenario 2

_SPEC_STREAM = 11
_COV_STREAM = 23
_TREAT_STREAM = 29
_NOISE_STREAM = 31


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


@dataclass
class ScenarioSpec:
    """Scenario id, bias parameters, and every drawn generative weight."""

    scenario: int
    n: int
    k: int
    l: int
    delta: float
    lam: float
    seed: int
    w_treat: np.ndarray          # (K, d_true) treatment-assignment weights
    w_x: np.ndarray              # (d_true,) outcome baseline weights
    c_n: np.ndarray | None = None    # (15,) normal-block means, scenarios 1/3
    w_n: np.ndarray | None = None    # (10, 10) proxy weights, scenario 2
    w_u: np.ndarray | None = None
    w_b: np.ndarray | None = None

    @property
    def d_true(self) -> int:
        return 3 * _BLOCK_S1 if self.scenario in (1, 3) else _BLOCK_S2

    @property
    def d_observed(self) -> int:
        return 3 * _BLOCK_S1 if self.scenario in (1, 3) else 3 * _BLOCK_S2

    def to_dict(self) -> dict:
        doc = {
            "scenario": self.scenario, "n": self.n, "k": self.k, "l": self.l,
            "delta": self.delta, "lambda": self.lam, "seed": self.seed,
            "w_treat": self.w_treat.tolist(), "w_x": self.w_x.tolist(),
        }
        for name in ("c_n", "w_n", "w_u", "w_b"):
            arr = getattr(self, name)
            doc[name] = arr.tolist() if arr is not None else None
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ScenarioSpec":
        def arr(v):
            return np.asarray(v, dtype=np.float64) if v is not None else None

        return cls(scenario=int(doc["scenario"]), n=int(doc["n"]), k=int(doc["k"]),
                   l=int(doc["l"]), delta=float(doc["delta"]), lam=float(doc["lambda"]),
                   seed=int(doc["seed"]), w_treat=arr(doc["w_treat"]),
                   w_x=arr(doc["w_x"]), c_n=arr(doc["c_n"]), w_n=arr(doc["w_n"]),
                   w_u=arr(doc["w_u"]), w_b=arr(doc["w_b"]))


@dataclass
class SimDataset:
    """Observed and true covariates, treatments, outcomes, and their spec."""

    x_o: np.ndarray
    x_t: np.ndarray
    t: np.ndarray
    y: np.ndarray
    spec: ScenarioSpec


_SCENARIO_PARAMS = {
    1: dict(l=1, delta=1.0, lam=1.0),
    2: dict(l=1, delta=0.2, lam=0.1),
    3: dict(l=0, delta=1.0, lam=1.0),
}


def draw_spec(scenario: int, n: int, seed: int) -> ScenarioSpec:
    """Draw all generative weights for one replicate, deterministically."""
    if scenario not in _SCENARIO_PARAMS:
        raise ConfigError(f"scenario must be 1, 2 or 3, got {scenario}")
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    params = _SCENARIO_PARAMS[scenario]
    rng = np.random.default_rng([seed, _SPEC_STREAM])
    # Draw order is fixed: block parameters first, then treatment weights,
    # then outcome weights (replay depends on it).
    c_n = w_n = w_u = w_b = None
    if scenario in (1, 3):
        c_n = rng.uniform(-1.0, 1.0, _BLOCK_S1)
        d_true = 3 * _BLOCK_S1
    else:
        w_n = rng.uniform(-1.0, 1.0, (_BLOCK_S2, _BLOCK_S2))
        w_u = rng.uniform(-1.0, 1.0, (_BLOCK_S2, _BLOCK_S2))
        w_b = rng.uniform(-1.0, 1.0, (_BLOCK_S2, _BLOCK_S2))
        d_true = _BLOCK_S2
    w_treat = rng.uniform(-1.0, 1.0, (N_TREATMENTS, d_true))
    w_x = rng.uniform(-1.0, 1.0, d_true)
    return ScenarioSpec(scenario=scenario, n=n, k=N_TREATMENTS, seed=seed,
                        w_treat=w_treat, w_x=w_x, c_n=c_n, w_n=w_n, w_u=w_u,
                        w_b=w_b, **params)


def outcome_function_f(x_t, t, spec: ScenarioSpec):
    """Noise-free outcome for true covariates and a treatment assignment.

    Accepts a single row and pattern (returns a scalar) or N-row matrices
    (returns a length-N vector).  ``t`` may also be one pattern applied to
    every row.
    """
    x = np.asarray(x_t, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] < 7:
        raise ShapeError(
            f"outcome function references columns 1..7, got {x.shape[1]} columns")
    tv = np.asarray(t, dtype=np.float64)
    if tv.ndim == 1:
        tv = np.broadcast_to(tv, (x.shape[0], tv.shape[0]))
    t1, t2, t3 = tv[:, 0], tv[:, 1], tv[:, 2]
    base = x @ spec.w_x
    singles = ((x[:, 0] + 1.0) * t1
               + 1.2 * (x[:, 1] + 1.0) * t2
               + 0.8 * (x[:, 2] + 1.0) * t3)
    inter = ((x[:, 3] + 0.5) * t1 * t2
             - 0.5 * (x[:, 4] + 1.0) * t1 * t3
             + 0.1 * (x[:, 5] + 1.0) * t2 * t3
             + 0.7 * x[:, 6] * t1 * t2 * t3)
    out = base + singles + spec.l * inter + 2.0
    return float(out[0]) if single else out


def treatment_probabilities(x_t: np.ndarray, spec: ScenarioSpec) -> np.ndarray:
    """Per-unit Bernoulli probabilities for each treatment (N x K)."""
    x = np.asarray(x_t, dtype=np.float64)
    if x.shape[1] < 2:
        raise ShapeError(f"need >= 2 true covariates for the indicator, got {x.shape[1]}")
    h = (x[:, 0] + x[:, 1] > 1.0).astype(np.float64)
    logits = x @ spec.w_treat.T - spec.lam * h[:, None] - spec.delta
    return sigmoid(logits)


def assign_treatments(x_t: np.ndarray, spec: ScenarioSpec,
                      rng: np.random.Generator) -> np.ndarray:
    """Draw the K independent treatments; probabilities are strictly in (0,1)."""
    probs = treatment_probabilities(x_t, spec)
    t_mat = np.empty(probs.shape, dtype=np.int8)
    for k in range(probs.shape[1]):
        t_mat[:, k] = rng.random(probs.shape[0]) < probs[:, k]
    return t_mat


def generate(spec: ScenarioSpec, rng: np.random.Generator | None = None) -> SimDataset:
    """Sample one dataset from a drawn spec.

    With ``rng=None`` (the normal path) covariates, treatments, and noise use
    independent streams derived from the spec's seed; passing a generator
    runs all three phases sequentially from it instead.
    """
    n = spec.n
    if rng is None:
        rng_cov = np.random.default_rng([spec.seed, _COV_STREAM])
        rng_treat = np.random.default_rng([spec.seed, _TREAT_STREAM])
        rng_noise = np.random.default_rng([spec.seed, _NOISE_STREAM])
    else:
        rng_cov = rng_treat = rng_noise = rng

    if spec.scenario in (1, 3):
        x_n = rng_cov.normal(loc=spec.c_n, scale=1.0, size=(n, _BLOCK_S1))
        x_u = rng_cov.uniform(-1.0, 1.0, (n, _BLOCK_S1))
        x_b = (rng_cov.random((n, _BLOCK_S1)) < 0.5).astype(np.float64)
        x_true = np.concatenate([x_n, x_u, x_b], axis=1)
        x_obs = x_true
    else:
        z = rng_cov.normal(0.0, 1.0, (n, _BLOCK_S2))
        x_n = rng_cov.normal(loc=z @ spec.w_n.T, scale=1.0)
        x_u = rng_cov.normal(loc=z @ spec.w_u.T, scale=5.0)
        x_b = (rng_cov.random((n, _BLOCK_S2)) < sigmoid(z @ spec.w_b.T)).astype(np.float64)
        x_true = z
        x_obs = np.concatenate([x_n, x_u, x_b], axis=1)

    t_mat = assign_treatments(x_true, spec, rng_treat)
    y = outcome_function_f(x_true, t_mat, spec) + rng_noise.normal(0.0, 1.0, n)
    return SimDataset(x_o=x_obs, x_t=x_true, t=t_mat, y=y, spec=spec)


class OracleModel:
    """Noise-free outcome function exposed through the model interface.

    ``predict_mu`` expects *true* covariates; it exists so ground-truth
    effects can be pushed through the same plug-in estimators as any fitted
    model.
    """

    def __init__(self, spec: ScenarioSpec):
        self.spec = spec
        self.k = spec.k
        self.d = spec.d_true
        self.method = "oracle"

    def predict_mu(self, x: np.ndarray, pattern) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.d:
            raise ShapeError(f"oracle expects true covariates N x {self.d}, got {x.shape}")
        return outcome_function_f(x, tuple(pattern), self.spec)

"""Plug-in causal effect estimation and evaluation against ground truth.

The single effect of treatment k contrasts the fitted outcome under the
one-hot pattern for k against no treatment; the interaction effect of a
subset S is the alternating inclusion-exclusion sum over all sub-patterns
of S.  Both average over the supplied (test) covariate rows.  Ground-truth
effects plug the noise-free generative outcome function into the same
definitions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import ContractError, ShapeError
from .patterns import (interaction_subsets, one_hot, subset_key,
                       subset_pattern)
from .simgen import OracleModel, ScenarioSpec


@dataclass
class EffectReport:
    """Estimated single effects per treatment and interaction effects per subset."""

    ase: dict[int, float]
    aie: dict[str, float]
    n_test: int
    method: str = ""
    seed: int | None = None

    @property
    def k(self) -> int:
        return len(self.ase)

    def validate(self) -> None:
        k = self.k
        expected = 2 ** k - k - 1
        if len(self.aie) != expected:
            raise ContractError(
                f"expected {expected} interaction entries for K={k}, got {len(self.aie)}")
        values = list(self.ase.values()) + list(self.aie.values())
        if not np.isfinite(values).all():
            raise ContractError("effect report contains non-finite values")

    def to_dict(self) -> dict:
        return {"ase": {str(k): v for k, v in self.ase.items()},
                "aie": dict(self.aie), "n_test": self.n_test,
                "method": self.method, "seed": self.seed}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "EffectReport":
        return cls(ase={int(k): float(v) for k, v in doc["ase"].items()},
                   aie={k: float(v) for k, v in doc["aie"].items()},
                   n_test=int(doc["n_test"]), method=doc.get("method", ""),
                   seed=doc.get("seed"))


@dataclass
class ErrorReport:
    """Absolute estimation errors, keyed like the effect reports."""

    eps_ase: dict[int, float]
    eps_aie: dict[str, float]

    def to_dict(self) -> dict:
        return {"eps_ase": {str(k): v for k, v in self.eps_ase.items()},
                "eps_aie": dict(self.eps_aie)}


def estimate_mu_hat(model, x_test: np.ndarray, pattern) -> np.ndarray:
    """Fitted conditional outcomes for every test row under one pattern."""
    x_test = np.asarray(x_test, dtype=np.float64)
    if x_test.ndim != 2:
        raise ShapeError(f"covariates must be 2-D, got shape {x_test.shape}")
    mu = np.asarray(model.predict_mu(x_test, tuple(int(b) for b in pattern)))
    return mu.reshape(-1)


def inclusion_exclusion_coeffs(subset) -> dict[tuple[int, ...], int]:
    """Sign (+1/-1) of every sub-pattern in the interaction contrast.

    Keys are sorted tuples of 1-based treatment indices (the empty tuple is
    the no-treatment pattern); the sign alternates with the number of
    left-out treatments.
    """
    s = tuple(sorted(int(j) for j in subset))
    if len(s) < 2:
        raise ContractError(f"interaction subsets need >= 2 treatments, got {s}")
    if len(set(s)) != len(s):
        raise ContractError(f"subset has repeated treatments: {s}")
    coeffs: dict[tuple[int, ...], int] = {}
    for size in range(len(s) + 1):
        for q in combinations(s, size):
            coeffs[q] = (-1) ** (len(s) - size)
    return coeffs


def ase(model, x_test: np.ndarray, k_treat: int, k: int | None = None) -> float:
    """Mean fitted effect of applying only treatment ``k_treat`` versus none."""
    k = k if k is not None else model.k
    mu_k = estimate_mu_hat(model, x_test, one_hot(k_treat, k))
    mu_0 = estimate_mu_hat(model, x_test, (0,) * k)
    return float(np.mean(mu_k - mu_0))


def aie(model, x_test: np.ndarray, subset, k: int | None = None) -> float:
    """Mean inclusion-exclusion contrast for a treatment subset (|S| >= 2).

    Sub-patterns are accumulated rowwise in (size, lexicographic) order and
    averaged once at the end.
    """
    k = k if k is not None else model.k
    coeffs = inclusion_exclusion_coeffs(subset)
    n = np.asarray(x_test).shape[0]
    acc = np.zeros(n)
    for q in sorted(coeffs, key=lambda q: (len(q), q)):
        acc += coeffs[q] * estimate_mu_hat(model, x_test, subset_pattern(q, k))
    return float(np.mean(acc))


def estimate_effects(model, x_test: np.ndarray, k: int | None = None,
                     method: str = "", seed: int | None = None) -> EffectReport:
    """All K single effects and all 2^K - K - 1 interaction effects."""
    k = k if k is not None else model.k
    report = EffectReport(
        ase={j: ase(model, x_test, j, k) for j in range(1, k + 1)},
        aie={subset_key(s): aie(model, x_test, s, k) for s in interaction_subsets(k)},
        n_test=int(np.asarray(x_test).shape[0]),
        method=method or getattr(model, "method", ""), seed=seed)
    report.validate()
    return report


def true_effects(spec: ScenarioSpec, x_true_test: np.ndarray) -> EffectReport:
    """Ground-truth effects over the test rows via the noise-free outcome.

    Independent of the estimator path: evaluates the generative function per
    pattern and combines the contrasts directly.
    """
    if spec is None:
        raise ContractError("true effects require a simulation spec")
    x = np.asarray(x_true_test, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.d_true:
        raise ShapeError(
            f"true covariates must be N x {spec.d_true}, got shape {x.shape}")
    oracle = OracleModel(spec)
    k = spec.k
    mu = {}

    def mu_for(subset: tuple[int, ...]) -> np.ndarray:
        if subset not in mu:
            mu[subset] = oracle.predict_mu(x, subset_pattern(subset, k))
        return mu[subset]

    ase_vals = {}
    for j in range(1, k + 1):
        ase_vals[j] = float(np.mean(mu_for((j,)) - mu_for(())))
    aie_vals = {}
    for s in interaction_subsets(k):
        acc = np.zeros(x.shape[0])
        for size in range(len(s) + 1):
            for q in combinations(s, size):
                acc += (-1) ** (len(s) - size) * mu_for(q)
        aie_vals[subset_key(s)] = float(np.mean(acc))
    report = EffectReport(ase=ase_vals, aie=aie_vals, n_test=x.shape[0],
                          method="truth", seed=spec.seed)
    report.validate()
    return report


def effect_errors(truth: EffectReport, est: EffectReport) -> ErrorReport:
    """Elementwise absolute differences between two effect reports."""
    if set(truth.ase) != set(est.ase) or set(truth.aie) != set(est.aie):
        raise ContractError("effect reports have mismatched keys")
    return ErrorReport(
        eps_ase={k: abs(truth.ase[k] - est.ase[k]) for k in sorted(truth.ase)},
        eps_aie={key: abs(truth.aie[key] - est.aie[key]) for key in truth.aie})

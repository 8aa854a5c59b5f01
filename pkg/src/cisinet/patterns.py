"""Treatment-pattern helpers: bit packing, subset enumeration, report keys.

A pattern is a length-K tuple of 0/1.  The canonical integer index reads
bit k-1 as treatment k, so (1,0,0) -> 1, (0,1,0) -> 2, (1,1,0) -> 3.
Subsets of treatments use sorted 1-based indices; report keys join them
with commas ("1,2,3").
"""

from __future__ import annotations

from itertools import combinations

import numpy as np

from .errors import ContractError

Pattern = tuple[int, ...]


def pattern_to_index(pattern: Pattern) -> int:
    return sum(int(b) << k for k, b in enumerate(pattern))


def index_to_pattern(index: int, k: int) -> Pattern:
    return tuple((index >> i) & 1 for i in range(k))


def all_patterns(k: int) -> list[Pattern]:
    return [index_to_pattern(i, k) for i in range(2 ** k)]


def one_hot(k_treat: int, k: int) -> Pattern:
    """Pattern applying only treatment ``k_treat`` (1-based)."""
    if not 1 <= k_treat <= k:
        raise ContractError(f"treatment index {k_treat} out of range 1..{k}")
    return tuple(1 if i == k_treat - 1 else 0 for i in range(k))


def subset_pattern(subset, k: int) -> Pattern:
    """Pattern activating exactly the treatments in ``subset`` (1-based)."""
    s = set(int(j) for j in subset)
    if not all(1 <= j <= k for j in s):
        raise ContractError(f"subset {sorted(s)} out of range 1..{k}")
    return tuple(1 if i + 1 in s else 0 for i in range(k))


def interaction_subsets(k: int) -> list[tuple[int, ...]]:
    """All treatment subsets of size >= 2, sorted by (size, lexicographic)."""
    out = []
    for size in range(2, k + 1):
        out.extend(combinations(range(1, k + 1), size))
    return out


def subset_key(subset) -> str:
    return ",".join(str(j) for j in sorted(int(x) for x in subset))


def key_to_subset(key: str) -> tuple[int, ...]:
    return tuple(int(p) for p in key.split(","))


def rows_by_pattern(t_mat: np.ndarray) -> dict[Pattern, np.ndarray]:
    """Group row indices of a binary treatment matrix by their pattern."""
    t_mat = np.asarray(t_mat)
    k = t_mat.shape[1]
    codes = (t_mat.astype(np.int64) << np.arange(k, dtype=np.int64)).sum(axis=1)
    groups: dict[Pattern, np.ndarray] = {}
    for code in np.unique(codes):
        groups[index_to_pattern(int(code), k)] = np.nonzero(codes == code)[0]
    return groups


def jaccard(a: Pattern, b: Pattern) -> float:
    """Intersection over union of the active-treatment sets."""
    inter = sum(1 for x, y in zip(a, b) if x and y)
    union = sum(1 for x, y in zip(a, b) if x or y)
    if union == 0:
        raise ContractError("jaccard undefined for two all-zero patterns")
    return inter / union

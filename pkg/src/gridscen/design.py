"""Strength-2 orthogonal arrays for parameter-space coverage designs.

For a prime level count the array comes from the finite-field
construction: rows are the vectors of GF(s)^k, columns are dot products
with one representative vector per projective direction.  Non-prime
level counts fall back to a full factorial when it stays small.
"""

from __future__ import annotations

import warnings

import numpy as np

from .errors import UnsupportedDesign

FULL_FACTORIAL_CAP = 4096


def _is_prime(s: int) -> bool:
    if s < 2:
        return False
    for p in range(2, int(s ** 0.5) + 1):
        if s % p == 0:
            return False
    return True


def _direction_vectors(s: int, k: int) -> list[np.ndarray]:
    """One representative per projective direction: first nonzero = 1."""
    vectors = []
    for idx in range(s ** k):
        digits = []
        v = idx
        for _ in range(k):
            digits.append(v % s)
            v //= s
        vec = np.array(digits[::-1])
        nz = np.flatnonzero(vec)
        if nz.size and vec[nz[0]] == 1:
            vectors.append(vec)
    return vectors


def full_factorial(levels: int, factors: int) -> np.ndarray:
    grids = np.meshgrid(*[np.arange(levels)] * factors, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def orthogonal_array(levels: int, factors: int) -> np.ndarray:
    """runs x factors level matrix with balanced ordered column pairs."""
    s, f = int(levels), int(factors)
    if s < 2 or f < 1:
        raise UnsupportedDesign("need at least 2 levels and 1 factor")
    if f == 1:
        return np.arange(s)[:, None]
    if _is_prime(s):
        k = 2
        while (s ** k - 1) // (s - 1) < f:
            k += 1
        columns = _direction_vectors(s, k)[:f]
        rows = full_factorial(s, k)
        return (rows @ np.stack(columns, axis=1)) % s
    if s ** f <= FULL_FACTORIAL_CAP:
        warnings.warn(
            f"no orthogonal-array construction for {s} levels; "
            f"using a {s ** f}-run full factorial", stacklevel=2)
        return full_factorial(s, f)
    raise UnsupportedDesign(
        f"levels={s} is not prime and the full factorial would need "
        f"{s ** f} runs (cap {FULL_FACTORIAL_CAP})")


def levels_to_quantiles(array: np.ndarray, levels: int) -> np.ndarray:
    """Map level i to the bound-interior quantile (i + 0.5) / s."""
    return (np.asarray(array, dtype=float) + 0.5) / levels

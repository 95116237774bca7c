"""Haar system of step one on the unit interval.

The family consists of the characteristic function of ``[0, 1)`` at level 0
and, at level ``k >= 1``, the ``2**k`` unit-norm dipoles

    h(k, l) = +2**(k/2)  on [ l * 2**-k, (l + 1/2) * 2**-k ),
              -2**(k/2)  on [ (l + 1/2) * 2**-k, (l + 1) * 2**-k ),
              0          elsewhere.

All intervals are half open, so any function of level <= K is constant on
dyadic cells of width 2**-(K+1).  That makes quadrature on the dyadic grid
exact, which the tests rely on.
"""

from __future__ import annotations

from typing import Iterator, NamedTuple

import numpy as np


class HaarIndex(NamedTuple):
    level: int
    position: int


def validate_index(level: int, position: int) -> None:
    """Reject (level, position) pairs outside the family."""
    if level < 0:
        raise ValueError(f"level must be >= 0, got {level}")
    if level == 0:
        if position != 0:
            raise ValueError(f"level 0 has a single function at position 0, got {position}")
    elif not 0 <= position < 2 ** level:
        raise ValueError(f"position must lie in [0, {2 ** level}) at level {level}, got {position}")


def n_functions(max_level: int) -> int:
    """Number of family members with level <= max_level."""
    return 2 ** (max_level + 1) - 1


def flat_position(level: int, position: int) -> int:
    """Index of h(level, position) in flat (level-major) ordering."""
    validate_index(level, position)
    return 2 ** level - 1 + position


def indices(max_level: int) -> Iterator[HaarIndex]:
    """All indices with level <= max_level in flat order."""
    yield HaarIndex(0, 0)
    for level in range(1, max_level + 1):
        for position in range(2 ** level):
            yield HaarIndex(level, position)


def level_array(max_level: int) -> np.ndarray:
    """Level of each flat index, as an int array of length n_functions."""
    counts = [1] + [2 ** k for k in range(1, max_level + 1)]
    return np.repeat(np.arange(max_level + 1), counts)


def haar_eval(level: int, position: int, t):
    """Evaluate h(level, position) at scalar or array times."""
    validate_index(level, position)
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    if level == 0:
        out[(t >= 0.0) & (t < 1.0)] = 1.0
    else:
        s = t * 2 ** level - position
        amp = 2.0 ** (level / 2.0)
        out[(s >= 0.0) & (s < 0.5)] = amp
        out[(s >= 0.5) & (s < 1.0)] = -amp
    if out.ndim == 0:
        return float(out)
    return out


def cell_values(max_level: int) -> np.ndarray:
    """Constant value of every member on each dyadic cell of width 2**-(max_level+1).

    Returns an array of shape (n_functions, 2**(max_level+1)); row order is
    the flat ordering of :func:`indices`.
    """
    n_cells = 2 ** (max_level + 1)
    rows = np.zeros((n_functions(max_level), n_cells))
    rows[0, :] = 1.0
    for level in range(1, max_level + 1):
        amp = 2.0 ** (level / 2.0)
        half = 2 ** (max_level - level)  # cells per half support
        for position in range(2 ** level):
            row = flat_position(level, position)
            start = position * 2 * half
            rows[row, start:start + half] = amp
            rows[row, start + half:start + 2 * half] = -amp
    return rows


def gram_matrix(max_level: int) -> np.ndarray:
    """Pairwise L2(0,1) inner products, computed by exact dyadic quadrature."""
    vals = cell_values(max_level)
    width = 2.0 ** -(max_level + 1)
    return (vals @ vals.T) * width


def values_on_grid(max_level: int, n_steps: int) -> np.ndarray:
    """Member values at the left endpoints of a uniform grid of n_steps cells.

    n_steps must be a multiple of 2**(max_level+1) so that every member is
    constant on each grid cell.  Shape is (n_steps, n_functions).
    """
    n_cells = 2 ** (max_level + 1)
    if n_steps % n_cells != 0:
        raise ValueError(f"n_steps={n_steps} must be a multiple of {n_cells}")
    return np.repeat(cell_values(max_level), n_steps // n_cells, axis=1).T

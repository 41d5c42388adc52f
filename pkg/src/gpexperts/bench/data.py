"""Dataset ingestion, train/test splitting and the synthetic 1-D benchmark."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from ..errors import InvalidArgumentError, ParseError
from ..gp import Dataset

__all__ = [
    "read_matrix",
    "read_table",
    "load_csv",
    "split_indices",
    "synth_curve",
    "synth_1d_arrays",
    "synth_1d_test_arrays",
    "synth_1d",
    "GAP",
]

# inputs are never sampled inside this open interval
GAP = (0.2, 0.5)


def read_matrix(path):
    """Parse a numeric CSV with a header row into ``(header, table)``."""
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as err:
        raise ParseError(f"cannot read {path}: {err}") from err
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise ParseError(f"{path}:{lineno}: expected {len(header)} cells, found {len(rec)}")
            vals = []
            for col, cell in zip(header, rec):
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(f"{path}:{lineno}: column {col!r} is not numeric: {cell!r}") from None
                if not np.isfinite(v):
                    raise ParseError(f"{path}:{lineno}: column {col!r} is not finite: {cell!r}")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    return header, np.asarray(rows, dtype=float)


def read_table(path, target_column: str | int | None = None):
    """Parse a numeric CSV with a header row.

    Returns ``(X, y, feature_names, target_name)``. The target is the named
    column, or the last one when ``target_column`` is None.
    """
    header, table = read_matrix(path)
    if target_column is None:
        t = len(header) - 1
    elif isinstance(target_column, int):
        t = target_column if target_column >= 0 else len(header) + target_column
    elif target_column in header:
        t = header.index(target_column)
    else:
        raise ParseError(f"{path}: no column named {target_column!r}")
    if not 0 <= t < len(header) or len(header) < 2:
        raise ParseError(f"{path}: target column out of range or no feature columns")
    keep = [i for i in range(len(header)) if i != t]
    return table[:, keep], table[:, t], [header[i] for i in keep], header[t]


def load_csv(path, target_column: str | int | None = None, fit_rows=None) -> Dataset:
    """Read a CSV and z-score it with statistics from ``fit_rows`` (default: all rows)."""
    X, y, _, _ = read_table(path, target_column)
    return Dataset.from_raw(X, y, fit_rows)


def split_indices(n: int, test_fraction: float, seed: int = 0):
    """Seeded random train/test split; returns sorted ``(train, test)`` index arrays."""
    if not 0.0 < test_fraction < 1.0:
        raise InvalidArgumentError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n_test = min(n - 1, max(1, int(round(test_fraction * n))))
    if n_test < 1:
        raise InvalidArgumentError("need at least two rows to split")
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def synth_curve(x):
    """Fast-varying target function of the synthetic benchmark."""
    x = np.asarray(x, dtype=float)
    return np.sin(12.0 * x) + 0.66 * np.cos(25.0 * x)


def synth_1d_arrays(n: int, seed: int = 0, noise_std: float = 0.1):
    """Raw ``(x, y)``: x uniform on [-1, 1] minus the gap, y = curve + noise."""
    if n < 10:
        raise InvalidArgumentError(f"synthetic dataset needs n >= 10, got {n}")
    rng = np.random.default_rng(seed)
    left = GAP[0] + 1.0
    u = rng.uniform(0.0, left + (1.0 - GAP[1]), size=n)
    x = np.where(u < left, u - 1.0, u - left + GAP[1])
    y = synth_curve(x)
    if noise_std > 0:
        y = y + noise_std * rng.standard_normal(n)
    return x, y


def synth_1d_test_arrays(n: int, seed: int = 0, noise_std: float = 0.1):
    """Evaluation points spread over all of [-1, 1], gap included.

    Drawn from a stream distinct from ``synth_1d_arrays(n, seed)`` so the two
    never share draws.
    """
    if n < 1:
        raise InvalidArgumentError(f"need at least one test point, got {n}")
    rng = np.random.default_rng([seed, 1])
    x = rng.uniform(-1.0, 1.0, size=n)
    y = synth_curve(x)
    if noise_std > 0:
        y = y + noise_std * rng.standard_normal(n)
    return x, y


def synth_1d(n: int, seed: int = 0, noise_std: float = 0.1) -> Dataset:
    """Standardized synthetic dataset; ``raw_X``/``raw_y`` recover the generated values."""
    x, y = synth_1d_arrays(n, seed, noise_std)
    return Dataset.from_raw(x[:, None], y)

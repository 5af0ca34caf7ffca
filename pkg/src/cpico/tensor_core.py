"""Dense tensor primitives.

Tensors are plain ``numpy.ndarray`` objects. Every flattening in this package
uses first-index-fastest (Fortran) order, so ``vec`` of a rank-one tensor
``a_1 o a_2 o ... o a_N`` equals the Kronecker product ``a_N (x) ... (x) a_1``.

Modes are numbered from 0.
"""
from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np


def as_tensor(data, shape: Sequence[int] | None = None) -> np.ndarray:
    """Validate and return a float64 tensor.

    If ``shape`` is given, ``data`` is treated as the flat vector in
    first-index-fastest order and folded into that shape.
    """
    arr = np.asarray(data, dtype=float)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if any(s <= 0 for s in shape):
            raise ValueError(f"mode sizes must be positive, got {shape}")
        if arr.size != int(np.prod(shape)):
            raise ValueError(
                f"data length {arr.size} does not match shape {shape}")
        arr = arr.reshape(shape, order="F")
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor entries must be finite")
    return arr


def vec(t: np.ndarray) -> np.ndarray:
    return np.asarray(t).reshape(-1, order="F")


def _check_mode(mode: int, order: int) -> int:
    if not 0 <= mode < order:
        raise ValueError(f"mode {mode} out of range for order-{order} tensor")
    return mode


def _cyclic_order(mode: int, order: int) -> list[int]:
    return [mode] + [(mode + i) % order for i in range(1, order)]


def unfold(t: np.ndarray, mode: int) -> np.ndarray:
    """Mode-``mode`` unfolding with forward-cyclic column ordering.

    Columns run over modes ``mode+1, ..., N-1, 0, ..., mode-1`` with the
    first of these varying fastest. For a third-order tensor this gives
    ``unfold(t, 1)[j, k + d3*i] == t[i, j, k]``.
    """
    t = np.asarray(t)
    _check_mode(mode, t.ndim)
    perm = _cyclic_order(mode, t.ndim)
    return np.transpose(t, perm).reshape(t.shape[mode], -1, order="F")


def fold(m: np.ndarray, mode: int, shape: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`unfold`."""
    shape = tuple(int(s) for s in shape)
    _check_mode(mode, len(shape))
    m = np.asarray(m, dtype=float)
    rows = shape[mode]
    cols = int(np.prod(shape)) // rows
    if m.shape != (rows, cols):
        raise ValueError(
            f"matrix of shape {m.shape} cannot be folded along mode {mode} "
            f"into {shape}; expected {(rows, cols)}")
    perm = _cyclic_order(mode, len(shape))
    permuted = m.reshape([shape[p] for p in perm], order="F")
    return np.transpose(permuted, np.argsort(perm))


def _check_subset(subset: Iterable[int], order: int) -> tuple[int, ...]:
    s = tuple(sorted(set(int(k) for k in subset)))
    if not s or len(s) == order:
        raise ValueError(
            f"mode subset must be a nonempty proper subset, got {s}")
    for k in s:
        _check_mode(k, order)
    return s


def unfold_group(t: np.ndarray, subset: Iterable[int]) -> np.ndarray:
    """Group unfolding ``mat_S``.

    Rows run over the modes in ``subset`` (increasing, lowest fastest) and
    columns over the complementary modes (increasing, lowest fastest), so a
    rank-one tensor maps to ``vec(o_{k in S} a_k) vec(o_{k not in S} a_k)^T``.
    """
    t = np.asarray(t)
    s = _check_subset(subset, t.ndim)
    rest = [k for k in range(t.ndim) if k not in s]
    rows = int(np.prod([t.shape[k] for k in s]))
    return np.transpose(t, list(s) + rest).reshape(rows, -1, order="F")


def fold_group(m: np.ndarray, subset: Iterable[int],
               shape: Sequence[int]) -> np.ndarray:
    shape = tuple(int(x) for x in shape)
    s = _check_subset(subset, len(shape))
    rest = [k for k in range(len(shape)) if k not in s]
    perm = list(s) + rest
    permuted = np.asarray(m, dtype=float).reshape(
        [shape[p] for p in perm], order="F")
    return np.transpose(permuted, np.argsort(perm))


def mode_product(t: np.ndarray, mode: int, u: np.ndarray) -> np.ndarray:
    """``t x_mode u`` for ``u`` of shape ``(d_mode, r)``.

    A 1-d ``u`` is treated as a single column, so the mode is kept with
    size one.
    """
    t = np.asarray(t, dtype=float)
    _check_mode(mode, t.ndim)
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    if u.shape[0] != t.shape[mode]:
        raise ValueError(
            f"matrix has {u.shape[0]} rows but mode {mode} has size "
            f"{t.shape[mode]}")
    out = np.tensordot(t, u, axes=([mode], [0]))
    return np.moveaxis(out, -1, mode)


def contract_modes(t: np.ndarray, assignments) -> np.ndarray:
    """Contract ``t`` with one vector per listed mode.

    ``assignments`` is a mapping or an iterable of ``(mode, vector)`` pairs.
    The contracted modes disappear; the rest keep their relative order.
    A full contraction returns a 0-d array.
    """
    t = np.asarray(t, dtype=float)
    items = list(assignments.items() if hasattr(assignments, "items")
                 else assignments)
    modes = [int(m) for m, _ in items]
    if len(set(modes)) != len(modes):
        raise ValueError(f"duplicate modes in contraction: {modes}")
    for (m, v) in items:
        _check_mode(m, t.ndim)
        if np.shape(v) != (t.shape[m],):
            raise ValueError(
                f"vector for mode {m} has shape {np.shape(v)}, "
                f"expected ({t.shape[m]},)")
    # highest mode first so lower axis indices stay valid
    out = t
    for m, v in sorted(items, key=lambda mv: -int(mv[0])):
        out = np.tensordot(out, np.asarray(v, dtype=float), axes=([int(m)], [0]))
    return out


def outer(vectors: Sequence[np.ndarray]) -> np.ndarray:
    out = np.asarray(vectors[0], dtype=float)
    for v in vectors[1:]:
        out = np.multiply.outer(out, np.asarray(v, dtype=float))
    return out


def hs_norm(t: np.ndarray) -> float:
    return float(np.linalg.norm(vec(t)))


def khatri_rao(matrices: Sequence[np.ndarray]) -> np.ndarray:
    """Column-wise Kronecker product with the first matrix's index fastest.

    Column ``j`` equals ``vec(o_i matrices[i][:, j])``.
    """
    out = np.asarray(matrices[0], dtype=float)
    for m in matrices[1:]:
        m = np.asarray(m, dtype=float)
        out = np.einsum("ir,jr->ijr", out, m).reshape(-1, out.shape[1], order="F")
    return out


# -- text file format -------------------------------------------------------

def write_tensor(path, t: np.ndarray) -> None:
    """Write ``shape: d1 ... dN`` then one value per line in vec order."""
    t = np.asarray(t, dtype=float)
    with open(path, "w", encoding="ascii") as fh:
        fh.write("shape: " + " ".join(str(s) for s in t.shape) + "\n")
        for x in vec(t):
            fh.write(f"{x:.17g}\n")


def read_tensor(path) -> np.ndarray:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if not header.startswith("shape:"):
            raise ValueError(f"{path}: missing 'shape:' header")
        try:
            shape = [int(s) for s in header[len("shape:"):].split()]
        except ValueError as exc:
            raise ValueError(f"{path}: malformed shape header {header!r}") from exc
        if not shape:
            raise ValueError(f"{path}: empty shape")
        data = np.array(fh.read().split(), dtype=float)
    return as_tensor(data, shape)

"""2:4 semi-structured sparsity: sparsifiers, packed storage, kernels.

A 2:4-sparse matrix keeps at most two of every four consecutive
elements in a row.  Packed storage holds exactly two values per group
(zeros are stored as kept values when fewer than two entries survive)
plus a 2-bit in-group column index per kept value, four indices to a
metadata byte.

Two sparsifiers:

* greedy_magnitude keeps the two largest-magnitude entries of each
  group unchanged and zeroes the rest.  The induced map is piecewise
  linear in the input and jumps wherever the kept set changes.
* soft_threshold subtracts the group's second-smallest magnitude t from
  every entry's magnitude, clamping at zero: entries in (-t, t] map to
  0, larger ones shrink toward zero by t.  The map is continuous
  (changing the input by eps in the sup norm moves the output by at
  most 2*eps) which is what makes mask churn during training cheap.

Both sparsifiers leave their input untouched and pick kept slots by
input magnitude with a deterministic tie-break: larger magnitude first,
then lower column index.

S24F file layout (little-endian): magic ``S24F``, u64 rows, u64 cols,
values block (rows x cols/2 real64, row-major), then the metadata block
(2-bit indices, row-major, each row padded to a whole byte).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .counters import tally
from .errors import CorruptionError, FormatError, InputError, ShapeError
from .matcore import as_matrix

SOFT_THRESHOLD = "soft_threshold"
GREEDY_MAGNITUDE = "greedy_magnitude"
MODES = (SOFT_THRESHOLD, GREEDY_MAGNITUDE)

S24_MAGIC = b"S24F"


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise InputError(f"unknown sparsify mode {mode!r} (expected one of {MODES})")


@dataclass(frozen=True, eq=False)
class Sparse24Matrix:
    """Packed 2:4 matrix: two kept values per 4-group plus 2-bit indices."""

    rows: int
    cols: int
    values: np.ndarray  # (rows, cols // 2) float64
    meta: np.ndarray  # (rows, ceil(cols/8)) uint8, packed 2-bit in-group indices

    def __post_init__(self):
        if self.cols % 4 or self.cols <= 0 or self.rows <= 0:
            raise ShapeError(f"2:4 matrix needs positive cols divisible by 4, got {self.rows}x{self.cols}")
        slots = self.cols // 2
        if self.values.shape != (self.rows, slots):
            raise ShapeError(f"values block must be {self.rows}x{slots}, got {self.values.shape}")
        if self.meta.shape != (self.rows, _meta_bytes_per_row(self.cols)):
            raise ShapeError(f"meta block has wrong shape {self.meta.shape}")

    @property
    def slots_per_row(self) -> int:
        return self.cols // 2

    def meta_indices(self) -> np.ndarray:
        """Unpacked in-group column indices, shape (rows, cols // 2)."""
        return _unpack_indices(self.meta, self.slots_per_row)

    def abs_columns(self) -> np.ndarray:
        """Absolute column index of every kept slot, shape (rows, cols // 2)."""
        idx = self.meta_indices().astype(np.int64)
        groups = np.arange(self.slots_per_row) // 2
        return groups * 4 + idx

    def validate(self) -> None:
        """Raise CorruptionError unless each group holds two strictly
        increasing in-group indices (collisions would double-book a slot)."""
        idx = self.meta_indices().reshape(self.rows, -1, 2)
        if not (idx[:, :, 0] < idx[:, :, 1]).all():
            bad = np.argwhere(~(idx[:, :, 0] < idx[:, :, 1]))[0]
            raise CorruptionError(
                f"meta indices not strictly increasing in row {bad[0]}, group {bad[1]}"
            )
        if not np.isfinite(self.values).all():
            raise CorruptionError("non-finite value in packed 2:4 payload")


def _meta_bytes_per_row(cols: int) -> int:
    return (cols // 2 + 3) // 4


def _pack_indices(idx: np.ndarray) -> np.ndarray:
    rows, slots = idx.shape
    pad = (-slots) % 4
    if pad:
        idx = np.pad(idx, ((0, 0), (0, pad)))
    quads = idx.reshape(rows, -1, 4).astype(np.uint8)
    packed = quads[:, :, 0] | (quads[:, :, 1] << 2) | (quads[:, :, 2] << 4) | (quads[:, :, 3] << 6)
    return packed.astype(np.uint8)


def _unpack_indices(packed: np.ndarray, slots: int) -> np.ndarray:
    parts = [(packed >> shift) & 0b11 for shift in (0, 2, 4, 6)]
    return np.stack(parts, axis=-1).reshape(packed.shape[0], -1)[:, :slots]


def _top2_slots(groups: np.ndarray) -> np.ndarray:
    """Ascending indices of the two largest-magnitude slots per group.

    Stable sort on descending magnitude, so ties go to the lower column
    index and masks are reproducible.
    """
    order = np.argsort(-np.abs(groups), axis=-1, kind="stable")
    return np.sort(order[..., :2], axis=-1)


def soft_threshold(a) -> np.ndarray:
    """Soft-threshold every 4-group of every row.

    t is the group's second-smallest magnitude; entries with |x| <= t
    become 0, the rest move toward zero by t.
    """
    a = as_matrix(a)
    if a.shape[1] % 4:
        raise ShapeError(f"soft_threshold needs cols divisible by 4, got {a.shape[1]}")
    g = a.reshape(a.shape[0], -1, 4)
    mags = np.abs(g)
    t = np.sort(mags, axis=-1)[..., 1:2]
    out = np.where(mags > t, g - np.sign(g) * t, 0.0)
    return out.reshape(a.shape)


def soft_threshold_group(group) -> np.ndarray:
    """Soft-threshold a single group of four values."""
    g = np.asarray(group, dtype=np.float64).reshape(1, 4)
    return soft_threshold(g).ravel()


def soft_threshold_backward(a, grad) -> np.ndarray:
    """Exact almost-everywhere Jacobian-transpose of soft_threshold at a.

    Survivors (|a| > t) pass their gradient through unchanged.  The
    threshold element additionally collects
    -sign(a_t) * sum(sign(a_i) * g_i) over the survivors, because t
    tracks that element's magnitude.  Entries strictly below t get
    zero.  Valid wherever the magnitude order within a group is strict.
    """
    a = as_matrix(a)
    grad = as_matrix(grad)
    if a.shape != grad.shape:
        raise ShapeError(f"gradient shape {grad.shape} does not match input {a.shape}")
    if a.shape[1] % 4:
        raise ShapeError(f"soft_threshold_backward needs cols divisible by 4, got {a.shape[1]}")
    g = a.reshape(a.shape[0], -1, 4)
    gr = grad.reshape(g.shape)
    mags = np.abs(g)
    order = np.argsort(mags, axis=-1, kind="stable")
    tpos = order[..., 1:2]
    t = np.take_along_axis(mags, tpos, axis=-1)
    surv = mags > t
    passed = np.where(surv, gr, 0.0)
    out = passed.copy()
    coupling = -(np.sign(g) * passed).sum(axis=-1, keepdims=True)
    tsign = np.take_along_axis(np.sign(g), tpos, axis=-1)
    np.put_along_axis(out, tpos, tsign * coupling, axis=-1)
    return out.reshape(a.shape)


def top2_mask(a) -> np.ndarray:
    """Boolean mask of the two largest-magnitude slots per 4-group."""
    a = as_matrix(a)
    if a.shape[1] % 4:
        raise ShapeError(f"top2_mask needs cols divisible by 4, got {a.shape[1]}")
    g = a.reshape(a.shape[0], -1, 4)
    mask = np.zeros(g.shape, dtype=bool)
    np.put_along_axis(mask, _top2_slots(g), True, axis=-1)
    return mask.reshape(a.shape)


def sparsify24(a, mode: str = GREEDY_MAGNITUDE) -> Sparse24Matrix:
    """Sparsify each 4-group of each row down to two kept slots.

    Kept slots are always the two largest-|input| positions; stored
    values are the raw inputs (greedy) or the soft-thresholded ones.
    The input matrix is never modified.
    """
    a = as_matrix(a)
    _check_mode(mode)
    if a.shape[1] % 4 or a.shape[1] == 0:
        raise ShapeError(f"sparsify24 needs cols divisible by 4, got {a.shape}")
    groups = a.reshape(a.shape[0], -1, 4)
    slots = _top2_slots(groups)
    source = soft_threshold(a).reshape(groups.shape) if mode == SOFT_THRESHOLD else groups
    values = np.take_along_axis(source, slots, axis=-1).reshape(a.shape[0], -1)
    meta = _pack_indices(slots.reshape(a.shape[0], -1))
    return Sparse24Matrix(a.shape[0], a.shape[1], values, meta)


def sparsify24_transposed(a, mode: str = GREEDY_MAGNITUDE) -> Sparse24Matrix:
    """Sparsify the transpose of a (groups run along a's rows).

    The mask is recomputed from scratch on the transposed layout; it is
    generally not the transpose of sparsify24(a)'s mask.
    """
    a = as_matrix(a)
    if a.shape[0] % 4:
        raise ShapeError(f"sparsify24_transposed needs rows divisible by 4, got {a.shape}")
    return sparsify24(np.ascontiguousarray(a.T), mode)


def decode24(s: Sparse24Matrix) -> np.ndarray:
    """Expand packed storage back to a dense rows x cols matrix."""
    s.validate()
    out = np.zeros((s.rows, s.cols), dtype=np.float64)
    out[np.arange(s.rows)[:, None], s.abs_columns()] = s.values
    return out


def kept_mask(s: Sparse24Matrix) -> np.ndarray:
    """Dense boolean mask of the kept slots (True even for stored zeros)."""
    out = np.zeros((s.rows, s.cols), dtype=bool)
    out[np.arange(s.rows)[:, None], s.abs_columns()] = True
    return out


def reencode24(dense, like: Sparse24Matrix) -> Sparse24Matrix:
    """Pack ``dense`` using the slot structure of ``like`` (values are
    gathered at like's kept positions, everything else is dropped)."""
    dense = as_matrix(dense)
    if dense.shape != (like.rows, like.cols):
        raise ShapeError(f"expected {like.rows}x{like.cols}, got {dense.shape}")
    values = dense[np.arange(like.rows)[:, None], like.abs_columns()]
    return Sparse24Matrix(like.rows, like.cols, values, like.meta)


def mass_kept_fraction(dense, decoded) -> float:
    """L1 mass of the sparsified matrix over the original's (1.0 when
    nothing was dropped or shrunk)."""
    dense = as_matrix(dense)
    total = float(np.abs(dense).sum())
    if total == 0.0:
        return 1.0
    return float(np.abs(as_matrix(decoded)).sum()) / total


# ---------------------------------------------------------------------------
# kernels: each touches only the kept values of the packed operand and
# tallies its multiplies as it goes.

def spmm24(s: Sparse24Matrix, b, label: str = "spmm24") -> np.ndarray:
    """decode24(s) @ b without decoding: sparse operand on the left."""
    b = as_matrix(b)
    if s.cols != b.shape[0]:
        raise ShapeError(f"spmm24: inner dimensions differ: {s.rows}x{s.cols} times {b.shape}")
    cols = s.abs_columns()
    n = b.shape[1]
    out = np.zeros((s.rows, n), dtype=np.float64)
    for j in range(cols.shape[1]):
        out += s.values[:, j : j + 1] * b[cols[:, j]]
        tally(s.rows * n, label)
    return out


def spmm24_rhs(a, s: Sparse24Matrix, label: str = "spmm24_rhs") -> np.ndarray:
    """a @ decode24(s) without decoding: sparse operand on the right.

    Accumulates k strictly ascending, so on an already-compliant s the
    result is bit-identical to gemm(a, decode24(s)).
    """
    a = as_matrix(a)
    if a.shape[1] != s.rows:
        raise ShapeError(f"spmm24_rhs: inner dimensions differ: {a.shape} times {s.rows}x{s.cols}")
    cols = s.abs_columns()
    out = np.zeros((a.shape[0], s.cols), dtype=np.float64)
    half = s.slots_per_row
    for k in range(s.rows):
        out[:, cols[k]] += a[:, k : k + 1] * s.values[k]
        tally(a.shape[0] * half, label)
    return out


def spmm24_tn(s: Sparse24Matrix, b, label: str = "spmm24_tn") -> np.ndarray:
    """decode24(s).T @ b without decoding (s carries the sparsity)."""
    b = as_matrix(b)
    if s.rows != b.shape[0]:
        raise ShapeError(f"spmm24_tn: row counts differ: {s.rows}x{s.cols} vs {b.shape}")
    cols = s.abs_columns()
    n = b.shape[1]
    out = np.zeros((s.cols, n), dtype=np.float64)
    for j in range(cols.shape[1]):
        np.add.at(out, cols[:, j], s.values[:, j : j + 1] * b)
        tally(s.rows * n, label)
    return out


# ---------------------------------------------------------------------------
# file I/O

def s24_to_bytes(s: Sparse24Matrix) -> bytes:
    s.validate()
    return b"".join(
        (
            S24_MAGIC,
            struct.pack("<QQ", s.rows, s.cols),
            np.ascontiguousarray(s.values, dtype="<f8").tobytes(),
            np.ascontiguousarray(s.meta).tobytes(),
        )
    )


def save_s24(s: Sparse24Matrix, path) -> None:
    with open(path, "wb") as fh:
        fh.write(s24_to_bytes(s))


def s24_from_bytes(blob: bytes, origin: str = "<bytes>") -> Sparse24Matrix:
    """Parse one S24F record from a byte string (leading bytes of blob)."""
    if len(blob) < 20:
        raise FormatError(f"{origin}: truncated header ({len(blob)} bytes)")
    if blob[:4] != S24_MAGIC:
        raise FormatError(f"{origin}: bad magic {blob[:4]!r} (expected {S24_MAGIC!r})")
    rows, cols = struct.unpack_from("<QQ", blob, 4)
    rows, cols = int(rows), int(cols)
    if cols % 4 or cols <= 0 or rows <= 0:
        raise FormatError(f"{origin}: bad 2:4 shape {rows}x{cols}")
    nval = rows * (cols // 2)
    nmeta = rows * _meta_bytes_per_row(cols)
    body = blob[20:]
    if len(body) < nval * 8 + nmeta:
        raise FormatError(f"{origin}: truncated payload ({len(body)} of {nval * 8 + nmeta} bytes)")
    values = np.frombuffer(body[: nval * 8], dtype="<f8").astype(np.float64).reshape(rows, cols // 2)
    meta = np.frombuffer(body[nval * 8 : nval * 8 + nmeta], dtype=np.uint8).copy()
    s = Sparse24Matrix(rows, cols, values, meta.reshape(rows, -1))
    s.validate()
    return s


def load_s24(path) -> Sparse24Matrix:
    with open(path, "rb") as fh:
        blob = fh.read()
    return s24_from_bytes(blob, str(path))

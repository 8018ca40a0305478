"""GF(2) matrix algebra for polarization kernels.

Rows are stored as integer bitmasks: bit ``k`` of a row is the entry in
column ``k + 1`` (columns and rows are 1-based in the docs, 0-based in code).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MAX_KERNEL_SIZE = 32


class KernelError(ValueError):
    """Base class for kernel validation problems."""


class NotSquare(KernelError):
    pass


class Singular(KernelError):
    pass


class BlockSingular(KernelError):
    pass


class LengthMismatch(ValueError):
    pass


def parity(x: int) -> int:
    return bin(x).count("1") & 1


def bits_to_int(bits: Iterable[int]) -> int:
    out = 0
    for k, b in enumerate(bits):
        if int(b) & 1:
            out |= 1 << k
    return out


def int_to_bits(x: int, width: int) -> list[int]:
    return [(x >> k) & 1 for k in range(width)]


def rank(rows: Sequence[int]) -> int:
    """Rank over GF(2) of a list of bitmask rows."""
    basis: list[int] = []
    for r in rows:
        for b in basis:
            r = min(r, r ^ b)
        if r:
            basis.append(r)
            basis.sort(reverse=True)
    return len(basis)


def inverse(rows: Sequence[int], m: int) -> list[int]:
    """Inverse of an ``m x m`` GF(2) matrix given as bitmask rows.

    Raises ``Singular`` when the matrix is not invertible.
    """
    a = list(rows)
    inv = [1 << k for k in range(m)]
    for col in range(m):
        pivot = next((r for r in range(col, m) if (a[r] >> col) & 1), None)
        if pivot is None:
            raise Singular(f"matrix is singular (no pivot in column {col + 1})")
        a[col], a[pivot] = a[pivot], a[col]
        inv[col], inv[pivot] = inv[pivot], inv[col]
        for r in range(m):
            if r != col and (a[r] >> col) & 1:
                a[r] ^= a[col]
                inv[r] ^= inv[col]
    return inv


def matmul(left: Sequence[int], right: Sequence[int]) -> list[int]:
    """Product ``left @ right`` with both matrices as bitmask rows."""
    out = []
    for row in left:
        acc = 0
        k = 0
        while row:
            if row & 1:
                acc ^= right[k]
            row >>= 1
            k += 1
        out.append(acc)
    return out


@dataclass(frozen=True)
class KernelMatrix:
    """An ``m x m`` invertible binary matrix, rows as bitmasks."""

    m: int
    rows: tuple[int, ...]

    def __post_init__(self):
        if len(self.rows) != self.m:
            raise NotSquare(f"expected {self.m} rows, got {len(self.rows)}")

    def entry(self, i: int, k: int) -> int:
        """Entry ``g_ik`` with 0-based row ``i`` and column ``k``."""
        return (self.rows[i] >> k) & 1

    def column(self, k: int, upto: int | None = None) -> int:
        """Column ``k`` restricted to the first ``upto`` rows, as a bitmask over rows."""
        upto = self.m if upto is None else upto
        return bits_to_int(self.entry(i, k) for i in range(upto))

    def to_array(self) -> np.ndarray:
        return np.array([int_to_bits(r, self.m) for r in self.rows], dtype=np.uint8)

    def rows_hex(self) -> list[str]:
        return [format(r, "x") for r in self.rows]

    def is_lower_triangular(self) -> bool:
        return all(r >> (i + 1) == 0 and (r >> i) & 1 for i, r in enumerate(self.rows))

    def digest(self) -> str:
        """Stable content hash used to tie plans and code specs to a kernel."""
        text = f"{self.m}:" + ",".join(self.rows_hex())
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def __str__(self) -> str:
        return "\n".join(" ".join(str(b) for b in int_to_bits(r, self.m)) for r in self.rows)


@dataclass(frozen=True)
class KernelSplit:
    """Rows ``1..i-1`` (``G_A``, the known prefix) and ``i..m`` (``G_B``)."""

    i: int
    G_A: tuple[int, ...]
    G_B: tuple[int, ...]

    def known_offsets(self, knowns: Sequence[int]) -> list[int]:
        """``a_j = (u_1^{i-1} G_A)_j`` for every column, as a list of bits."""
        acc = 0
        for bit, row in zip(knowns, self.G_A):
            if bit & 1:
                acc ^= row
        m = len(self.G_A) + len(self.G_B)
        return int_to_bits(acc, m)


def validate_kernel(rows) -> KernelMatrix:
    """Build a ``KernelMatrix`` from 0/1 rows (nested sequences or a 2-D array)."""
    rows = [list(map(int, r)) for r in rows]
    if not rows:
        raise NotSquare("kernel must have at least one row")
    m = len(rows)
    if m > MAX_KERNEL_SIZE:
        raise KernelError(f"kernel size {m} exceeds the supported maximum {MAX_KERNEL_SIZE}")
    if any(len(r) != m for r in rows):
        raise NotSquare(f"kernel rows must all have length {m}")
    if any(b not in (0, 1) for r in rows for b in r):
        raise KernelError("kernel entries must be 0 or 1")
    masks = tuple(bits_to_int(r) for r in rows)
    if rank(masks) < m:
        raise Singular(f"kernel has GF(2) rank {rank(masks)} < {m}")
    return KernelMatrix(m, masks)


def split(G: KernelMatrix, i: int) -> KernelSplit:
    """Split at 1-based bit index ``i``."""
    if not 1 <= i <= G.m:
        raise IndexError(f"bit index {i} outside 1..{G.m}")
    return KernelSplit(i, G.rows[: i - 1], G.rows[i - 1 :])


def _tail_block(G: KernelMatrix, i: int) -> list[int]:
    mask = ((1 << G.m) - 1) ^ ((1 << i) - 1)
    return [(r & mask) >> i for r in G.rows[i:]]


def standard_form(G: KernelMatrix, i: int) -> KernelMatrix:
    """Rewrite rows ``i+1..m`` so the bottom-right block becomes the identity.

    ``i`` is 1-based.  Rows ``1..i`` are untouched and the row space of the
    tail is preserved, so the bit-channel of index ``i`` is unchanged.
    Raises ``BlockSingular`` if the bottom-right ``(m-i) x (m-i)`` block is
    not invertible.
    """
    if not 1 <= i <= G.m:
        raise IndexError(f"bit index {i} outside 1..{G.m}")
    k = G.m - i
    if k == 0:
        return G
    try:
        binv = inverse(_tail_block(G, i), k)
    except Singular as exc:
        raise BlockSingular(f"bottom-right block at index {i} is singular") from exc
    tail = matmul(binv, G.rows[i:])
    return KernelMatrix(G.m, G.rows[:i] + tuple(tail))


def tail_echelon(G: KernelMatrix, i: int) -> tuple[KernelMatrix, list[int]]:
    """Reduce rows ``i+1..m`` to reduced echelon form over GF(2).

    Works for any invertible kernel.  Each tail row gets a private pivot
    column (returned, 0-based, one per tail row in order) in which no other
    tail row has a one.  This is the column-rearranged analogue of
    :func:`standard_form`; when the bottom-right block is invertible the
    pivots are columns ``i+1..m`` and the result equals ``standard_form``.
    """
    try:
        return standard_form(G, i), list(range(i, G.m))
    except BlockSingular:
        pass
    tail = list(G.rows[i:])
    pivots: list[int] = []
    row = 0
    for col in range(G.m - 1, -1, -1):
        if row == len(tail):
            break
        p = next((r for r in range(row, len(tail)) if (tail[r] >> col) & 1), None)
        if p is None:
            continue
        tail[row], tail[p] = tail[p], tail[row]
        for r in range(len(tail)):
            if r != row and (tail[r] >> col) & 1:
                tail[r] ^= tail[row]
        pivots.append(col)
        row += 1
    return KernelMatrix(G.m, G.rows[:i] + tuple(tail)), pivots


def encode(u, G: KernelMatrix, n: int) -> np.ndarray:
    """Compute ``u G^{(x)n}`` over GF(2) without forming the ``N x N`` matrix.

    Layout: ``u`` is split into ``m`` consecutive blocks of length ``N/m``;
    block ``a`` is encoded recursively to ``v_a`` and output block ``b`` is
    ``XOR_a g_ab v_a``.  This equals multiplication by
    ``np.kron(G, np.kron(G, ...))``.  Extra leading axes are treated as a
    batch of independent words.
    """
    u = np.asarray(u, dtype=np.uint8)
    N = G.m**n
    if u.shape[-1] != N:
        raise LengthMismatch(f"expected length {N} = {G.m}^{n}, got {u.shape[-1]}")
    garr = G.to_array()
    x = u.reshape(u.shape[:-1] + (G.m,) * n) if n else u.copy()
    # apply the kernel along each of the n digit axes
    for axis in range(n):
        ax = x.ndim - n + axis
        x = np.moveaxis(x, ax, -1)
        x = (x.astype(np.int64) @ garr) & 1
        x = np.moveaxis(x, -1, ax).astype(np.uint8)
    return x.reshape(u.shape)


def kron_power(G: KernelMatrix, n: int) -> np.ndarray:
    out = np.ones((1, 1), dtype=np.uint8)
    for _ in range(n):
        out = np.kron(out, G.to_array()) & 1
    return out


# Small reference kernels: the 2x2 Arikan kernel and two lower-triangular ones.
BUILTIN_KERNELS: dict[str, list[list[int]]] = {
    "G2": [[1, 0], [1, 1]],
    "G5": [
        [1, 0, 0, 0, 0],
        [1, 1, 0, 0, 0],
        [1, 0, 1, 0, 0],
        [1, 0, 0, 1, 0],
        [1, 1, 1, 0, 1],
    ],
    "G6": [
        [1, 0, 0, 0, 0, 0],
        [1, 1, 0, 0, 0, 0],
        [1, 0, 1, 0, 0, 0],
        [1, 0, 0, 1, 0, 0],
        [1, 1, 1, 0, 1, 0],
        [1, 1, 0, 1, 0, 1],
    ],
}


def builtin_kernel(name: str) -> KernelMatrix:
    try:
        return validate_kernel(BUILTIN_KERNELS[name.upper()])
    except KeyError:
        raise KeyError(f"unknown built-in kernel {name!r}; choose from {sorted(BUILTIN_KERNELS)}") from None


def parse_kernel_text(text: str) -> KernelMatrix:
    """Parse the kernel file format: first line ``m``, then ``m`` rows of 0/1."""
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise KernelError("empty kernel file")
    m = int(lines[0])
    rows = [ln.split() for ln in lines[1:]]
    if len(rows) != m:
        raise NotSquare(f"header says m={m} but found {len(rows)} rows")
    return validate_kernel(rows)


def format_kernel_text(G: KernelMatrix) -> str:
    return f"{G.m}\n{G}\n"


def load_kernel(spec: str) -> KernelMatrix:
    """Load a kernel by built-in name (``G2``, ``G5``, ``G6``) or file path."""
    if spec.upper() in BUILTIN_KERNELS:
        return builtin_kernel(spec)
    return parse_kernel_text(Path(spec).read_text())


def random_lower_triangular(m: int, rng: np.random.Generator) -> KernelMatrix:
    """Random lower-triangular kernel with unit diagonal."""
    rows = []
    for i in range(m):
        below = int(rng.integers(0, 1 << i)) if i else 0
        rows.append(below | (1 << i))
    return KernelMatrix(m, tuple(rows))


def random_invertible(m: int, rng: np.random.Generator) -> KernelMatrix:
    while True:
        rows = tuple(int(rng.integers(1, 1 << m)) for _ in range(m))
        if rank(rows) == m:
            return KernelMatrix(m, rows)

"""Periodic grids, sampled fields and their serialisation."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError

MAGIC = b"WKAM1"


@dataclass(frozen=True)
class PeriodicGrid:
    shape: tuple

    def __post_init__(self):
        shape = tuple(int(s) for s in np.atleast_1d(self.shape))
        if not 1 <= len(shape) <= 2:
            raise DomainError("grids are 1-D or 2-D")
        if min(shape) < 16:
            raise DomainError("each axis needs at least 16 nodes")
        object.__setattr__(self, "shape", shape)

    @staticmethod
    def uniform(N, n=1):
        return PeriodicGrid((N,) * n)

    @property
    def n(self):
        return len(self.shape)

    @property
    def size(self):
        return int(np.prod(self.shape))

    @property
    def dx(self):
        return tuple(1.0 / s for s in self.shape)

    @property
    def hmax(self):
        return max(self.dx)

    def axes(self):
        return [np.arange(s) / s for s in self.shape]

    def points(self):
        """Node coordinates as an (size, n) array in row-major order."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def indices(self):
        mesh = np.meshgrid(*[np.arange(s) for s in self.shape], indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


def interpolate(grid: PeriodicGrid, values, X):
    """Periodic (multi)linear interpolation of node values at points X (m, n)."""
    X = np.asarray(X, dtype=float).reshape(-1, grid.n)
    V = np.asarray(values, dtype=float).reshape(grid.shape)
    idx, wts = [], []
    for k, N in enumerate(grid.shape):
        z = np.mod(X[:, k], 1.0) * N
        i0 = np.floor(z).astype(np.int64)
        t = z - i0
        i0 %= N
        idx.append((i0, (i0 + 1) % N))
        wts.append((1.0 - t, t))
    if grid.n == 1:
        (a, b), (wa, wb) = idx[0], wts[0]
        return wa * V[a] + wb * V[b]
    (a0, a1), (w0, w1) = idx[0], wts[0]
    (b0, b1), (u0, u1) = idx[1], wts[1]
    return (w0 * (u0 * V[a0, b0] + u1 * V[a0, b1]) +
            w1 * (u0 * V[a1, b0] + u1 * V[a1, b1]))


@dataclass(frozen=True)
class ScalarField:
    grid: PeriodicGrid
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if v.size != self.grid.size:
            raise DomainError("value count does not match the grid")
        if not np.all(np.isfinite(v)):
            raise DomainError("field has non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __call__(self, X):
        return interpolate(self.grid, self.values, X)

    def as_array(self):
        return self.values.reshape(self.grid.shape)

    def with_values(self, values, **meta):
        m = dict(self.meta)
        m.update(meta)
        return ScalarField(self.grid, values, m)


@dataclass(frozen=True)
class MomentumField:
    grid: PeriodicGrid
    momentum: np.ndarray     # (size, n)
    controls: np.ndarray     # (size, n)
    shock: np.ndarray        # (size,) bool
    meta: dict = field(default_factory=dict)

    def __call__(self, X):
        return np.stack([interpolate(self.grid, self.momentum[:, k], X)
                         for k in range(self.grid.n)], axis=1)

    def nearest_regular_node(self, x):
        """Nearest node (by periodic distance) whose shock flag is clear."""
        if self.grid.n != 1:
            raise DomainError("shock shifting is implemented for 1-D grids")
        N = self.grid.shape[0]
        j = int(np.rint(np.mod(x, 1.0) * N)) % N
        for r in range(N):
            for jj in ((j + r) % N, (j - r) % N):
                if not self.shock[jj]:
                    return jj
        raise DomainError("every node is flagged as a shock")


# ----------------------------------------------------------------------------
# serialisation
# ----------------------------------------------------------------------------

def write_field_csv(path, sfield: ScalarField, mfield: Optional[MomentumField] = None):
    g = sfield.grid
    n = g.n
    head = [f"i{k}" for k in range(n)] + [f"x{k}" for k in range(n)] + ["value"]
    if mfield is not None:
        head += [f"p{k}" for k in range(n)] + ["shock"]
    idx, pts = g.indices(), g.points()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(head)
        for r in range(g.size):
            row = [int(i) for i in idx[r]] + [f"{v:.12g}" for v in pts[r]]
            row.append(f"{sfield.values[r]:.15g}")
            if mfield is not None:
                row += [f"{v:.15g}" for v in mfield.momentum[r]]
                row.append(int(bool(mfield.shock[r])))
            w.writerow(row)


def write_field_binary(path, sfield: ScalarField):
    g = sfield.grid
    m = sfield.meta
    c = np.atleast_1d(np.asarray(m.get("c", np.zeros(g.n)), dtype=float))
    buf = bytearray(MAGIC)
    buf += struct.pack("<I", g.n)
    buf += struct.pack(f"<{g.n}I", *g.shape)
    buf += struct.pack("<d", float(m.get("eps", 0.0)))
    buf += struct.pack(f"<{g.n}d", *c)
    buf += struct.pack("<d", float(m.get("h", 0.0)))
    buf += np.asarray(sfield.values, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(buf))


def read_field_binary(path) -> ScalarField:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:5] != MAGIC:
        raise DomainError(f"{path}: bad magic")
    off = 5
    (n,) = struct.unpack_from("<I", data, off)
    off += 4
    shape = struct.unpack_from(f"<{n}I", data, off)
    off += 4 * n
    (eps,) = struct.unpack_from("<d", data, off)
    off += 8
    c = struct.unpack_from(f"<{n}d", data, off)
    off += 8 * n
    (h,) = struct.unpack_from("<d", data, off)
    off += 8
    vals = np.frombuffer(data, dtype="<f8", offset=off)
    return ScalarField(PeriodicGrid(shape), vals.copy(), {"eps": eps, "c": np.array(c), "h": h})

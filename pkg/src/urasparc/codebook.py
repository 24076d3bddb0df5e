"""Seeded implicit Gaussian dictionary, inner encoding and the AWGN channel.

The dictionary A has n rows and L*2^J columns, grouped into L sections.
Columns are never stored globally: column (l, i) is regenerated on demand
from a PRNG stream keyed by (seed, l, block) where block = i // block_cols,
so any column is randomly accessible without generating its predecessors'
blocks. A dense cache is materialized when it fits `dense_cap_bytes`,
which is what makes desk-scale AMP runs fast; both paths regenerate the
same matrix entries, so their products agree to floating-point rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class GaussianCodebook:
    """Matrix-free A with seeded regeneration.

    Parameters
    ----------
    seed : int
        Master seed; all columns are pure functions of (seed, l, i).
    n, L, J : int
        Rows, sections, bits per section (2^J columns per section).
    normalization : {'iid', 'unit'}
        'iid' draws entries N(0, 1/n); 'unit' rescales each column to
        exact unit 2-norm.
    dtype : np.float64 or np.float32
        Entry precision. float32 halves memory and bandwidth; keep the
        default for accuracy-sensitive checks.
    block_cols : int
        Columns generated per PRNG stream; part of the regeneration
        scheme, so changing it changes the realized matrix.
    dense_cap_bytes : int
        Materialize the whole matrix once if it fits this budget.
    """

    def __init__(self, seed, n, L, J, normalization="iid", dtype=np.float64,
                 block_cols=512, dense_cap_bytes=2 << 30):
        if normalization not in ("iid", "unit"):
            raise ValueError("normalization must be 'iid' or 'unit'")
        self.seed = int(seed)
        self.n = int(n)
        self.L = int(L)
        self.J = int(J)
        self.cols_per_section = 1 << self.J
        self.total_cols = self.L * self.cols_per_section
        self.normalization = normalization
        self.dtype = np.dtype(dtype)
        self.block_cols = int(block_cols)
        self.dense_cap_bytes = int(dense_cap_bytes)
        self._dense = None

    # ---- block regeneration -------------------------------------------------

    def _rng(self, l, block):
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(l, block))
        return np.random.Generator(np.random.PCG64(ss))

    def _raw_block(self, l, block, rows=None):
        """Rows [0:rows) of the (columns x n) block array for (l, block)."""
        ncols = min(self.block_cols,
                    self.cols_per_section - block * self.block_cols)
        if rows is None:
            rows = ncols
        # sequential fill: the first rows*n draws of the stream
        out = self._rng(l, block).standard_normal((rows, self.n),
                                                  dtype=self.dtype)
        return out, ncols

    def _block(self, l, block):
        arr, _ = self._raw_block(l, block)
        self._normalize(arr)
        return arr

    def _normalize(self, arr):
        if self.normalization == "iid":
            arr *= self.dtype.type(1.0 / np.sqrt(self.n))
        else:
            arr /= np.linalg.norm(arr, axis=1, keepdims=True)

    def column(self, l, i):
        """Column (l, i) as a length-n vector."""
        if not (0 <= l < self.L and 0 <= i < self.cols_per_section):
            raise IndexError("column index out of range")
        block, j = divmod(i, self.block_cols)
        arr, _ = self._raw_block(l, block, rows=j + 1)
        col = arr[j:j + 1].copy()
        self._normalize(col)
        return col[0]

    # ---- dense cache --------------------------------------------------------

    def _dense_ok(self):
        return self.total_cols * self.n * self.dtype.itemsize <= self.dense_cap_bytes

    def dense(self):
        """The full (total_cols x n) array (columns of A as rows), cached."""
        if self._dense is None:
            if not self._dense_ok():
                raise MemoryError("dense codebook exceeds dense_cap_bytes")
            m = np.empty((self.total_cols, self.n), dtype=self.dtype)
            for l in range(self.L):
                base = l * self.cols_per_section
                nblocks = -(-self.cols_per_section // self.block_cols)
                for b in range(nblocks):
                    lo = b * self.block_cols
                    blk = self._block(l, b)
                    m[base + lo: base + lo + blk.shape[0]] = blk
            self._dense = m
        return self._dense

    # ---- products -----------------------------------------------------------

    def matvec(self, v):
        """A @ v for v of length L*2^J."""
        v = np.asarray(v)
        if v.shape != (self.total_cols,):
            raise ValueError("matvec input has wrong length")
        if self._dense is not None or self._dense_ok():
            return self.dense().T @ v.astype(self.dtype, copy=False)
        y = np.zeros(self.n, dtype=self.dtype)
        for l, b, lo, hi in self._chunks():
            chunk = v[l * self.cols_per_section + lo:
                      l * self.cols_per_section + hi]
            if np.any(chunk):
                y += self._block(l, b).T @ chunk.astype(self.dtype, copy=False)
        return y

    def rmatvec(self, u):
        """A.T @ u for u of length n."""
        u = np.asarray(u)
        if u.shape != (self.n,):
            raise ValueError("rmatvec input has wrong length")
        if self._dense is not None or self._dense_ok():
            return self.dense() @ u.astype(self.dtype, copy=False)
        out = np.empty(self.total_cols, dtype=self.dtype)
        for l, b, lo, hi in self._chunks():
            out[l * self.cols_per_section + lo:
                l * self.cols_per_section + hi] = \
                self._block(l, b) @ u.astype(self.dtype, copy=False)
        return out

    def _chunks(self):
        nblocks = -(-self.cols_per_section // self.block_cols)
        for l in range(self.L):
            for b in range(nblocks):
                lo = b * self.block_cols
                hi = min(lo + self.block_cols, self.cols_per_section)
                yield l, b, lo, hi


@dataclass(frozen=True)
class SignalVector:
    """Integer occupancy counts s and the transmitted coefficients theta."""

    s: np.ndarray      # length L*2^J, non-negative ints
    theta: np.ndarray  # sqrt(Phat_l) * s sectionwise


def superpose(messages, phat, L, J):
    """Occupancy counts and coefficient vector for a list of message index
    tuples (each length L, entries in [0, 2^J))."""
    m = 1 << J
    s = np.zeros(L * m, dtype=np.int64)
    for idx in messages:
        if len(idx) != L:
            raise ValueError("message has wrong section count")
        for l, i in enumerate(idx):
            if not 0 <= i < m:
                raise ValueError("index out of range")
            s[l * m + i] += 1
    amps = np.repeat(np.sqrt(np.asarray(phat, dtype=float)), m)
    return SignalVector(s=s, theta=amps * s)


def encode_user(cb: GaussianCodebook, indices, phat):
    """Codeword of a single user: sum over sections of sqrt(Phat_l) a^(l)_i."""
    phat = np.asarray(phat, dtype=float)
    if phat.shape != (cb.L,):
        raise ValueError("phat must have length L")
    x = np.zeros(cb.n)
    for l, i in enumerate(indices):
        x += np.sqrt(phat[l]) * cb.column(l, int(i))
    return x


def transmit(cb: GaussianCodebook, sig, noise_seed=None, noiseless=False):
    """y = A theta + z with z standard normal from its own seeded stream."""
    theta = sig.theta if isinstance(sig, SignalVector) else np.asarray(sig)
    y = np.asarray(cb.matvec(theta), dtype=np.float64)
    if noiseless:
        return y
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(entropy=noise_seed)))
    return y + rng.standard_normal(cb.n)


def save_received(y, path):
    """Raw little-endian float64 dump for cross-implementation comparison."""
    np.asarray(y, dtype="<f8").tofile(path)


def load_received(path):
    return np.fromfile(path, dtype="<f8")

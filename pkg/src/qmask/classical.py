"""Classical routines run on measured values: Euclid, roots mod p, GF(p) solves."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from qmask.errors import (
    DivisionByZeroError,
    DomainTooLargeError,
    ExponentNotInvertibleError,
    NonResidueError,
    NotAUnitError,
    NotPrimeError,
    SingularMatrixError,
)

ENUMERATION_BOUND = 2**20


def xgcd(a: int, b: int) -> tuple[int, int, int]:
    """Return ``(g, x, y)`` with ``a*x + b*y == g == gcd(a, b)``."""
    x0, x1, y0, y1 = 1, 0, 0, 1
    while b:
        q, a, b = a // b, b, a % b
        x0, x1 = x1, x0 - q * x1
        y0, y1 = y1, y0 - q * y1
    return a, x0, y0


def mod_inverse(a: int, n: int) -> int:
    a %= n
    g, x, _ = xgcd(a, n)
    if g != 1:
        raise NotAUnitError(a, n, g)
    return x % n


def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin, exact for n < 3.3e24."""
    if n < 2:
        return False
    small = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41)
    for q in small:
        if n % q == 0:
            return n == q
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in small:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def require_odd_prime(p: int) -> None:
    if p < 3 or not is_prime(p):
        raise NotPrimeError(f"{p} is not an odd prime")


def euler_is_residue(a: int, p: int) -> bool:
    return pow(a, (p - 1) // 2, p) == 1


def sqrt_mod_p(a: int, p: int) -> tuple[int, int]:
    """Both square roots of ``a`` mod an odd prime, smaller one first.

    Tonelli-Shanks; the auxiliary non-residue is the least one >= 2.
    """
    a %= p
    if a == 0:
        return 0, 0
    if not euler_is_residue(a, p):
        raise NonResidueError(f"{a} is not a quadratic residue mod {p}")
    q, s = p - 1, 0
    while q % 2 == 0:
        q //= 2
        s += 1
    z = 2
    while euler_is_residue(z, p):
        z += 1
    m, c, t, x = s, pow(z, q, p), pow(a, q, p), pow(a, (q + 1) // 2, p)
    while t != 1:
        i, t2 = 0, t
        while t2 != 1:
            t2 = t2 * t2 % p
            i += 1
        b = pow(c, 1 << (m - i - 1), p)
        m, c = i, b * b % p
        t, x = t * c % p, x * b % p
    return min(x, p - x), max(x, p - x)


def canonical_sqrt(a: int, p: int) -> int:
    """The square root of ``a`` that is at most (p-1)/2."""
    return sqrt_mod_p(a, p)[0]


def kth_root_mod_p(a: int, k: int, p: int) -> int:
    """Unique k-th root of ``a`` when gcd(k, p-1) == 1."""
    if math.gcd(k, p - 1) != 1:
        raise ExponentNotInvertibleError(f"gcd({k}, {p - 1}) = {math.gcd(k, p - 1)}")
    return pow(a, mod_inverse(k, p - 1), p)


def divmod_classical(c: int, b: int) -> tuple[int, int]:
    if b == 0:
        raise DivisionByZeroError("division by zero")
    return c // b, c % b


def units_of(n: int, bound: int = ENUMERATION_BOUND) -> list[int]:
    if n > bound:
        raise DomainTooLargeError(f"modulus {n} exceeds enumeration bound {bound}")
    r = np.arange(1, n, dtype=np.int64)
    return r[np.gcd(r, n) == 1].tolist()


# -- vectors over GF(p), encoded little-endian base p --------------------------


def encode_vector(v: Sequence[int], p: int) -> int:
    code = 0
    for x in reversed(v):
        code = code * p + int(x) % p
    return code


def decode_vector(code: int, p: int, n: int) -> tuple[int, ...]:
    out = []
    for _ in range(n):
        code, d = divmod(code, p)
        out.append(d)
    return tuple(out)


def decode_array(codes: np.ndarray, p: int, n: int) -> np.ndarray:
    """(rows,) codes -> (rows, n) digit array."""
    codes = np.asarray(codes, dtype=np.int64)
    # column-major so per-digit slices are contiguous
    out = np.empty((len(codes), n), dtype=np.int64, order="F")
    rest = codes.copy()
    for j in range(n):
        rest, out[:, j] = np.divmod(rest, p)
    return out


def encode_array(digits: np.ndarray, p: int) -> np.ndarray:
    code = np.zeros(digits.shape[0], dtype=np.int64)
    for j in reversed(range(digits.shape[1])):
        code = code * p + digits[:, j] % p
    return code


@dataclass(frozen=True)
class SparseMatrixGF:
    """Sparse matrix over GF(p) stored as ``(row, col, value)`` triples."""

    rows: int
    cols: int
    p: int
    entries: tuple[tuple[int, int, int], ...]

    def __post_init__(self):
        seen = set()
        for i, j, v in self.entries:
            if not (0 <= i < self.rows and 0 <= j < self.cols):
                raise ValueError(f"entry ({i}, {j}) outside {self.rows}x{self.cols}")
            if not 1 <= v < self.p:
                raise ValueError(f"entry value {v} not in 1..{self.p - 1}")
            if (i, j) in seen:
                raise ValueError(f"duplicate entry ({i}, {j})")
            seen.add((i, j))

    @classmethod
    def from_dense(cls, dense, p: int) -> "SparseMatrixGF":
        dense = np.asarray(dense, dtype=np.int64) % p
        entries = tuple(
            (int(i), int(j), int(dense[i, j])) for i, j in zip(*np.nonzero(dense))
        )
        return cls(dense.shape[0], dense.shape[1], p, entries)

    @property
    def row_weight(self) -> int:
        counts = [0] * self.rows
        for i, _, _ in self.entries:
            counts[i] += 1
        return max(counts, default=0)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.rows, self.cols), dtype=np.int64)
        for i, j, v in self.entries:
            out[i, j] = v
        return out

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """A @ x mod p for a (cols,) vector or a (batch, cols) stack."""
        x = np.asarray(x, dtype=np.int64)
        if x.ndim == 1:
            return self.matvec(x[None, :])[0]
        cols = [np.ascontiguousarray(x[:, j]) for j in range(self.cols)]
        out = np.zeros((x.shape[0], self.rows), dtype=np.int64, order="F")
        for i, j, v in self.entries:
            out[:, i] += v * cols[j]
        return out % self.p


def rank_gf(matrix, p: int) -> int:
    return _eliminate(np.array(matrix, dtype=np.int64) % p, p)[1]


def _eliminate(aug: np.ndarray, p: int, ncols: int | None = None) -> tuple[np.ndarray, int]:
    """Reduced row echelon form mod p over the first ``ncols`` columns."""
    aug = aug.copy()
    ncols = aug.shape[1] if ncols is None else ncols
    rank = 0
    for col in range(ncols):
        pivots = np.nonzero(aug[rank:, col])[0]
        if len(pivots) == 0:
            continue
        piv = rank + pivots[0]
        aug[[rank, piv]] = aug[[piv, rank]]
        aug[rank] = aug[rank] * pow(int(aug[rank, col]), -1, p) % p
        others = np.nonzero(aug[:, col])[0]
        others = others[others != rank]
        aug[others] = (aug[others] - np.outer(aug[others, col], aug[rank])) % p
        rank += 1
        if rank == aug.shape[0]:
            break
    return aug, rank


def solve_sparse_gf(A: SparseMatrixGF, t: Sequence[int]) -> tuple[int, ...]:
    """Solve ``A x = t`` mod p by dense Gauss-Jordan elimination."""
    if A.rows != A.cols:
        raise ValueError(f"matrix must be square, got {A.rows}x{A.cols}")
    n = A.rows
    aug = np.hstack([A.to_dense(), np.asarray(t, dtype=np.int64).reshape(n, 1) % A.p])
    reduced, rank = _eliminate(aug, A.p, ncols=n)
    if rank < n:
        raise SingularMatrixError(rank, n)
    return tuple(int(v) for v in reduced[:, n])


def random_sparse_invertible(
    n: int, p: int, rng: np.random.Generator, weight: int = 2
) -> SparseMatrixGF:
    """Random invertible n x n matrix with at most ``weight`` nonzeros per row."""
    weight = max(1, min(weight, n))
    while True:
        dense = np.zeros((n, n), dtype=np.int64)
        for i in range(n):
            k = int(rng.integers(1, weight + 1))
            cols = rng.choice(n, size=k, replace=False)
            dense[i, cols] = rng.integers(1, p, size=k)
        if rank_gf(dense, p) == n:
            return SparseMatrixGF.from_dense(dense, p)


def primes_below(n: int) -> list[int]:
    sieve = np.ones(max(n, 2), dtype=bool)
    sieve[:2] = False
    for i in range(2, math.isqrt(max(n - 1, 1)) + 1):
        if sieve[i]:
            sieve[i * i :: i] = False
    return np.nonzero(sieve)[0].tolist()


def brute_force_roots(a: int, k: int, p: int) -> list[int]:
    """All x in [0, p) with x**k == a mod p, by exhaustive search."""
    return [x for x in range(p) if pow(x, k, p) == a % p]

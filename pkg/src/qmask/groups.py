"""Finite groups and bijective homomorphisms, encoded as integers in a carrier.

Group elements live in ``range(carrier)`` so a simulator register of modulus
``carrier`` can hold them.  ``op`` and ``inverse`` are numpy-vectorised so the
masking protocols and the law checks run over whole arrays at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from qmask.classical import (
    SparseMatrixGF,
    decode_array,
    encode_array,
    encode_vector,
    decode_vector,
    is_prime,
    kth_root_mod_p,
    solve_sparse_gf,
    units_of,
)
from qmask.errors import (
    BadFactorizationError,
    DomainTooLargeError,
    ExponentNotInvertibleError,
    GroupLawError,
    HomomorphismError,
    NotPrimeError,
)
from qmask.state import invert_mod_array

GROUP_BOUND = 2**20
# Law checks enumerate every pair/triple while the count stays below this;
# above it they sample SAMPLE_SIZE random ones with a fixed seed.
EXHAUSTIVE_TUPLES = 2**22
SAMPLE_SIZE = 2**16
HOM_EXHAUSTIVE_ORDER = 2**12


@dataclass(frozen=True, eq=False)
class FiniteGroup:
    name: str
    carrier: int
    elements: np.ndarray = field(repr=False)
    identity: int
    op: Callable[[np.ndarray, np.ndarray], np.ndarray] = field(repr=False)
    inverse: Callable[[np.ndarray], np.ndarray] = field(repr=False)

    @property
    def order(self) -> int:
        return len(self.elements)

    @property
    def support(self) -> list[int]:
        """Values the uniform mask ranges over."""
        return self.elements.tolist()

    def contains(self, values) -> np.ndarray:
        return np.isin(np.asarray(values, dtype=np.int64), self.elements)

    def mul(self, g: int, h: int) -> int:
        return int(self.op(np.array([g]), np.array([h]))[0])

    def inv(self, g: int) -> int:
        return int(self.inverse(np.array([g]))[0])


@dataclass(frozen=True, eq=False)
class Homomorphism:
    """Bijective homomorphism ``f`` on ``group`` with a classical inverter."""

    group: FiniteGroup
    forward: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    classical_inverse: Callable[[int], int] = field(repr=False)
    name: str = "f"

    def __call__(self, g: int) -> int:
        return int(self.forward(np.array([g]))[0])


def _pairs(order: int, arity: int, rng: np.random.Generator) -> list[np.ndarray]:
    if order**arity <= EXHAUSTIVE_TUPLES:
        grid = np.indices((order,) * arity).reshape(arity, -1)
        return [grid[i] for i in range(arity)]
    return [rng.integers(0, order, size=SAMPLE_SIZE) for _ in range(arity)]


def validate_group(G: FiniteGroup) -> None:
    """Check identity, inverse, closure and associativity laws.

    Identity and inverse laws are always checked on every element.  Closure
    and associativity are exhaustive while the number of pairs/triples stays
    below ``EXHAUSTIVE_TUPLES`` and sampled above that.
    """
    E, e = G.elements, G.identity
    if not G.contains([e])[0]:
        raise GroupLawError(f"{G.name}: identity {e} is not an element")
    ones = np.full_like(E, e)
    if not (np.array_equal(G.op(ones, E), E) and np.array_equal(G.op(E, ones), E)):
        raise GroupLawError(f"{G.name}: identity law fails")
    inv = G.inverse(E)
    if not (G.contains(inv).all() and (G.op(E, inv) == e).all() and (G.op(inv, E) == e).all()):
        raise GroupLawError(f"{G.name}: inverse law fails")
    rng = np.random.default_rng(0)
    i, j = _pairs(G.order, 2, rng)
    if not G.contains(G.op(E[i], E[j])).all():
        raise GroupLawError(f"{G.name}: not closed")
    i, j, k = _pairs(G.order, 3, rng)
    x, y, z = E[i], E[j], E[k]
    if not np.array_equal(G.op(G.op(x, y), z), G.op(x, G.op(y, z))):
        raise GroupLawError(f"{G.name}: not associative")


def validate_homomorphism(hom: Homomorphism) -> None:
    G = hom.group
    E = G.elements
    rng = np.random.default_rng(1)
    if G.order <= HOM_EXHAUSTIVE_ORDER:
        # chunk the |G|^2 pairs to bound memory
        for start in range(0, G.order, max(1, 2**20 // G.order)):
            block = E[start : start + max(1, 2**20 // G.order)]
            x = np.repeat(block, G.order)
            y = np.tile(E, len(block))
            if not np.array_equal(hom.forward(G.op(x, y)), G.op(hom.forward(x), hom.forward(y))):
                raise HomomorphismError(f"{hom.name}: f(gh) != f(g)f(h)")
        sample = E
    else:
        x = E[rng.integers(0, G.order, SAMPLE_SIZE)]
        y = E[rng.integers(0, G.order, SAMPLE_SIZE)]
        if not np.array_equal(hom.forward(G.op(x, y)), G.op(hom.forward(x), hom.forward(y))):
            raise HomomorphismError(f"{hom.name}: f(gh) != f(g)f(h)")
        sample = E[rng.integers(0, G.order, 1024)]
    images = hom.forward(sample)
    if not G.contains(images).all():
        raise HomomorphismError(f"{hom.name}: image leaves the group")
    for g, fg in zip(sample.tolist(), images.tolist()):
        if hom.classical_inverse(fg) != g:
            raise HomomorphismError(f"{hom.name}: classical inverse fails at {g}")


def powmod_array(x: np.ndarray, e: int, m: int) -> np.ndarray:
    """Elementwise x**e mod m by square-and-multiply (needs m < 2**31)."""
    x = np.asarray(x, dtype=np.int64) % m
    result = np.ones_like(x)
    while e:
        if e & 1:
            result = result * x % m
        x = x * x % m
        e >>= 1
    return result


@lru_cache(maxsize=64)
def group_zp_star(p: int) -> FiniteGroup:
    if p > GROUP_BOUND:
        raise DomainTooLargeError(f"p = {p} exceeds {GROUP_BOUND}")
    if p < 3 or not is_prime(p):
        raise NotPrimeError(f"{p} is not an odd prime")
    G = FiniteGroup(
        name=f"Z_{p}^*",
        carrier=p,
        elements=np.arange(1, p, dtype=np.int64),
        identity=1,
        op=lambda x, y: np.asarray(x, dtype=np.int64) * y % p,
        inverse=lambda x: invert_mod_array(np.asarray(x, dtype=np.int64), p),
    )
    validate_group(G)
    return G


def group_units_mod(n: int, factorization: Sequence[int]) -> FiniteGroup:
    if math.prod(factorization) != n or not all(is_prime(q) for q in factorization):
        raise BadFactorizationError(f"{list(factorization)} is not a prime factorization of {n}")
    if n > GROUP_BOUND:
        raise DomainTooLargeError(f"n = {n} exceeds {GROUP_BOUND}")
    G = FiniteGroup(
        name=f"(Z/{n})^*",
        carrier=n,
        elements=np.array(units_of(n), dtype=np.int64),
        identity=1,
        op=lambda x, y: np.asarray(x, dtype=np.int64) * y % n,
        inverse=lambda x: invert_mod_array(np.asarray(x, dtype=np.int64), n),
    )
    validate_group(G)
    return G


@lru_cache(maxsize=64)
def group_vector_gf(p: int, n: int) -> FiniteGroup:
    if not is_prime(p):
        raise NotPrimeError(f"{p} is not prime")
    if p**n > GROUP_BOUND:
        raise DomainTooLargeError(f"{p}^{n} exceeds {GROUP_BOUND}")

    def op(x, y):
        return encode_array(decode_array(x, p, n) + decode_array(y, p, n), p)

    def inverse(x):
        return encode_array(-decode_array(x, p, n), p)

    G = FiniteGroup(
        name=f"GF({p})^{n}",
        carrier=p**n,
        elements=np.arange(p**n, dtype=np.int64),
        identity=0,
        op=op,
        inverse=inverse,
    )
    validate_group(G)
    return G


def hom_identity(G: FiniteGroup) -> Homomorphism:
    return Homomorphism(G, lambda x: np.asarray(x, dtype=np.int64), lambda h: h, "identity")


def hom_power(G: FiniteGroup, k: int) -> Homomorphism:
    """x -> x**k on Z_p^*; the classical inverse is the k-th root."""
    p = G.carrier
    if math.gcd(k, G.order) != 1:
        raise ExponentNotInvertibleError(f"gcd({k}, {G.order}) = {math.gcd(k, G.order)}")
    hom = Homomorphism(
        G,
        lambda x: powmod_array(x, k, p),
        lambda h: kth_root_mod_p(h, k, p),
        f"x^{k}",
    )
    validate_homomorphism(hom)
    return hom


def hom_matrix(G: FiniteGroup, A: SparseMatrixGF) -> Homomorphism:
    """v -> A v on GF(p)^n; the classical inverse is a GF(p) solve."""
    p, n = A.p, A.rows
    if A.rows != A.cols or G.carrier != p**n:
        raise HomomorphismError(f"matrix shape {A.rows}x{A.cols} does not act on {G.name}")

    def inverse(h):
        return encode_vector(solve_sparse_gf(A, decode_vector(h, p, n)), p)

    hom = Homomorphism(
        G,
        lambda x: encode_array(A.matvec(decode_array(x, p, n)), p),
        inverse,
        "A*v",
    )
    validate_homomorphism(hom)
    return hom

"""Superposition-masking protocols.

Every protocol follows the same four moves: prepare a uniform mask register,
combine it with the input so the combined register's distribution no longer
depends on the input, measure that register, then use the classical result
to write the answer and clean the mask back to |0>.

Each run returns a :class:`ProtocolResult` holding the final simulated state
next to an ideal state built directly from classical arithmetic (never from
the simulated path), so correctness is a fidelity check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from qmask.classical import (
    SparseMatrixGF,
    canonical_sqrt,
    decode_array,
    decode_vector,
    divmod_classical,
    encode_array,
    encode_vector,
    euler_is_residue,
    is_prime,
    kth_root_mod_p,
    mod_inverse,
    rank_gf,
    require_odd_prime,
    solve_sparse_gf,
    units_of,
)
from qmask.errors import (
    BadFactorizationError,
    ExponentNotInvertibleError,
    HomomorphismError,
    InvalidDivisorError,
    NotPrimeError,
    SingularMatrixError,
    UnsupportedInputError,
)
from qmask.groups import Homomorphism, powmod_array
from qmask.state import (
    NORM_TOLERANCE,
    Bijection,
    Combine,
    MeasurementRecord,
    OutOfPlace,
    SparseState,
    fidelity,
)


@dataclass
class InputSpec:
    """Normalized superposition over basis values ``0 <= v < modulus``."""

    modulus: int
    amplitudes: dict[int, complex]

    def __post_init__(self):
        self.amplitudes = {int(k): complex(v) for k, v in self.amplitudes.items() if v != 0}
        if not self.amplitudes:
            raise UnsupportedInputError("input has empty support")
        bad = [v for v in self.amplitudes if not 0 <= v < self.modulus]
        if bad:
            raise UnsupportedInputError(f"input values {bad} outside [0, {self.modulus})")
        norm = sum(abs(a) ** 2 for a in self.amplitudes.values())
        if abs(norm - 1) > NORM_TOLERANCE:
            raise UnsupportedInputError(f"input amplitudes have norm {norm}")

    @classmethod
    def basis(cls, value: int, modulus: int) -> "InputSpec":
        return cls(modulus, {value: 1.0})

    @classmethod
    def uniform(cls, values, modulus: int) -> "InputSpec":
        values = sorted(set(values))
        return cls(modulus, {v: 1 / math.sqrt(len(values)) for v in values})

    @classmethod
    def from_vectors(cls, vectors: Mapping[tuple, complex] | Sequence[tuple], p: int, n: int) -> "InputSpec":
        if not isinstance(vectors, Mapping):
            vectors = {tuple(v): 1 / math.sqrt(len(vectors)) for v in vectors}
        return cls(p**n, {encode_vector(v, p): a for v, a in vectors.items()})

    @classmethod
    def random(cls, values, modulus: int, rng: np.random.Generator, size: int | None = None) -> "InputSpec":
        """Random superposition with positive real amplitudes on a random subset."""
        values = np.asarray(sorted(set(values)), dtype=np.int64)
        size = size or int(rng.integers(1, min(len(values), 6) + 1))
        chosen = rng.choice(values, size=min(size, len(values)), replace=False)
        w = rng.random(len(chosen)) + 0.1
        w = np.sqrt(w / w.sum())
        return cls(modulus, dict(zip(chosen.tolist(), w.tolist())))

    @property
    def support(self) -> list[int]:
        return sorted(self.amplitudes)


@dataclass
class ProtocolResult:
    protocol: str
    params: dict
    seed: int
    final_state: SparseState
    ideal_state: SparseState
    transcript: list[MeasurementRecord]
    byproducts: dict
    success: bool
    steps: list[str] = field(default_factory=list)
    tag: str | None = None
    damage_probability: float | None = None
    discard_residuals: list[tuple[str, float]] = field(default_factory=list)

    @property
    def fidelity(self) -> float:
        return fidelity(self.final_state, self.ideal_state)

    @property
    def measurement(self) -> MeasurementRecord:
        return self.transcript[0]


class _Run:
    """Bookkeeping shared by every protocol: state, rng, step log, transcript."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.rng = np.random.default_rng(self.seed)
        self.state = SparseState()
        self.steps: list[str] = []
        self.transcript: list[MeasurementRecord] = []
        self.residuals: list[tuple[str, float]] = []

    def step(self, name: str) -> None:
        self.steps.append(name)

    def load(self, spec: InputSpec, modulus: int, label: str):
        reg = self.state.alloc_register(modulus, label)
        self.step(f"load input into {label}")
        self.state.prepare(reg, spec.amplitudes)
        return reg

    def measure(self, reg) -> int:
        self.step(f"measure {reg.label}")
        rec = self.state.measure(reg, self.rng, seed=self.seed)
        self.transcript.append(rec)
        return rec.outcome

    def discard(self, *regs) -> None:
        for reg in regs:
            self.step(f"discard {reg.label}")
            self.residuals.append((reg.label, self.state.factorization_residual(reg)))
            self.state.discard(reg)

    def result(self, name, params, ideal, byproducts, success=True, **extra) -> ProtocolResult:
        return ProtocolResult(
            protocol=name,
            params=params,
            seed=self.seed,
            final_state=self.state,
            ideal_state=ideal,
            transcript=self.transcript,
            byproducts=byproducts,
            success=success,
            steps=self.steps,
            discard_residuals=self.residuals,
            **extra,
        )


def _require_prime(p: int) -> None:
    if not is_prime(p):
        raise NotPrimeError(f"{p} is not prime")


def _require_support(spec: InputSpec, modulus: int, ok, what: str) -> None:
    if spec.modulus != modulus:
        raise UnsupportedInputError(f"input modulus {spec.modulus} != {modulus}")
    bad = [a for a in spec.support if not ok(a)]
    if bad:
        raise UnsupportedInputError(f"input values {bad} are not {what}")


def _unmask_multiplicative(run: _Run, r, t_val: int, modulus: int, label: str, control=None):
    """|r = x t> -> |out = x>, r cleared, using two classical-quantum multiplies."""
    s = run.state
    t_inv = mod_inverse(t_val, modulus)
    out = s.alloc_register(modulus, label) if isinstance(label, str) else label
    run.step(f"{out.label} += mask * t^-1")
    s.apply(OutOfPlace((r,), out, lambda y: y * t_inv % modulus, vectorized=True), control)
    run.step(f"mask -= {out.label} * t")
    s.apply(OutOfPlace((out,), r, lambda z: z * t_val % modulus, Combine.SUB, vectorized=True), control)
    return out


# -- modular inversion ----------------------------------------------------------


def masked_mod_inverse(spec: InputSpec, p: int, seed: int = 0) -> ProtocolResult:
    """|a> -> |a>|a^-1 mod p> for inputs supported on 1..p-1."""
    _require_prime(p)
    _require_support(spec, p, lambda a: 1 <= a < p, "units mod p (use the zero-safe variant for 0)")
    run = _Run(seed)
    s = run.state
    a = run.load(spec, p, "a")
    r = s.alloc_register(p, "mask")
    run.step("prepare mask uniform over 1..p-1")
    s.prepare_uniform(r, range(1, p))
    t = s.alloc_register(p, "masked")
    run.step("masked += a * mask")
    s.apply_out_of_place([a, r], t, lambda x, y: x * y % p, vectorized=True)
    t_val = run.measure(t)
    run.step("classical: invert t")
    out = _unmask_multiplicative(run, r, t_val, p, "a_inv")
    run.discard(r, t)
    ideal = SparseState.from_amplitudes(
        [(p, "a"), (p, "a_inv")], {(x, pow(x, -1, p)): amp for x, amp in spec.amplitudes.items()}
    )
    return run.result(
        "masked-mod-inverse", {"p": p}, ideal, {"t": t_val, "t_inv": mod_inverse(t_val, p)}
    )


def masked_mod_inverse_zero_safe(
    spec: InputSpec, p: int, zero_image: int = 0, seed: int = 0
) -> ProtocolResult:
    """Like :func:`masked_mod_inverse` but also accepts |0>, mapped to |0>|zero_image>.

    A flag qubit marks a == 0; on that branch the mask itself is copied into
    the measured register so its distribution stays uniform, and the flag
    controls the matching cleanup.
    """
    _require_prime(p)
    if not 0 <= zero_image < p:
        raise UnsupportedInputError(f"zero image {zero_image} outside [0, {p})")
    _require_support(spec, p, lambda a: 0 <= a < p, "in [0, p)")
    run = _Run(seed)
    s = run.state
    a = run.load(spec, p, "a")
    flag = s.alloc_register(2, "zero_flag")
    run.step("zero_flag ^= [a == 0]")
    s.apply_out_of_place([a], flag, lambda x: (x == 0).astype(np.int64), vectorized=True)
    r = s.alloc_register(p, "mask")
    run.step("prepare mask uniform over 1..p-1")
    s.prepare_uniform(r, range(1, p))
    t = s.alloc_register(p, "masked")
    run.step("masked += a * mask  (zero_flag = 0)")
    s.apply_controlled(flag, 0, OutOfPlace((a, r), t, lambda x, y: x * y % p, vectorized=True))
    run.step("masked += mask  (zero_flag = 1)")
    s.apply_controlled(flag, 1, OutOfPlace((r,), t, lambda y: y, vectorized=True))
    t_val = run.measure(t)
    run.step("classical: invert t")
    out = s.alloc_register(p, "a_inv")
    _unmask_multiplicative(run, r, t_val, p, out, control=(flag, 0))
    run.step("mask -= t  (zero_flag = 1)")
    s.apply_controlled(flag, 1, Bijection((r,), lambda y: (y - t_val) % p, vectorized=True))
    run.step("a_inv += zero_image  (zero_flag = 1)")
    s.apply_controlled(flag, 1, Bijection((out,), lambda z: (z + zero_image) % p, vectorized=True))
    run.step("zero_flag ^= [a == 0]")
    s.apply_out_of_place([a], flag, lambda x: (x == 0).astype(np.int64), vectorized=True)
    run.discard(flag, r, t)
    ideal = SparseState.from_amplitudes(
        [(p, "a"), (p, "a_inv")],
        {(x, pow(x, -1, p) if x else zero_image): amp for x, amp in spec.amplitudes.items()},
    )
    return run.result(
        "masked-mod-inverse-zero-safe", {"p": p, "zero_image": zero_image}, ideal, {"t": t_val}
    )


def masked_mod_inverse_composite(
    spec: InputSpec, n: int, factorization: Sequence[int], seed: int = 0
) -> ProtocolResult:
    """Masked inversion mod a composite ``n`` with a mask over the units.

    Measuring ``a * r`` projects the input: a unit outcome keeps only unit
    branches (which then get inverted, tag ``"unit"``); a non-unit outcome
    keeps only non-unit branches, which stay entangled with the mask and are
    returned as ``(a, mask)`` with tag ``"non-unit"``.
    """
    if math.prod(factorization) != n or not all(is_prime(q) for q in factorization):
        raise BadFactorizationError(f"{list(factorization)} is not a prime factorization of {n}")
    _require_support(spec, n, lambda a: 0 <= a < n, "in [0, n)")
    units = units_of(n)
    run = _Run(seed)
    s = run.state
    a = run.load(spec, n, "a")
    r = s.alloc_register(n, "mask")
    run.step("prepare mask uniform over units mod n")
    s.prepare_uniform(r, units)
    t = s.alloc_register(n, "masked")
    run.step("masked += a * mask")
    s.apply_out_of_place([a, r], t, lambda x, y: x * y % n, vectorized=True)
    t_val = run.measure(t)
    survivors = {x: amp for x, amp in spec.amplitudes.items() if math.gcd(x, n) == math.gcd(t_val, n)}
    if math.gcd(t_val, n) == 1:
        assert survivors, "unit outcome without any unit input branch"
        run.step("classical: invert t")
        out = _unmask_multiplicative(run, r, t_val, n, "a_inv")
        run.discard(r, t)
        norm = math.sqrt(sum(abs(v) ** 2 for v in survivors.values()))
        ideal = SparseState.from_amplitudes(
            [(n, "a"), (n, "a_inv")],
            {(x, pow(x, -1, n)): amp / norm for x, amp in survivors.items()},
        )
        tag = "unit"
    else:
        run.step("non-unit outcome: unit branches destroyed, mask left entangled")
        run.discard(t)
        ideal_amps = {}
        for x, amp in spec.amplitudes.items():
            for y in units:
                if x * y % n == t_val:
                    ideal_amps[(x, y)] = amp
        norm = math.sqrt(sum(abs(v) ** 2 for v in ideal_amps.values()))
        ideal = SparseState.from_amplitudes(
            [(n, "a"), (n, "mask")], {k: v / norm for k, v in ideal_amps.items()}
        )
        tag = "non-unit"
    return run.result(
        "masked-mod-inverse-composite",
        {"n": n, "factorization": list(factorization)},
        ideal,
        {"t": t_val, "gcd": math.gcd(t_val, n)},
        tag=tag,
    )


# -- roots ----------------------------------------------------------------------


def _brute_canonical_roots(values: Sequence[int], k: int, p: int) -> dict[int, int]:
    """value -> smallest x in 1..p-1 with x**k == value, by exhaustive search."""
    xs = np.arange(1, p, dtype=np.int64)
    powers = powmod_array(xs, k, p)
    out = {}
    for v in values:
        hits = xs[powers == v]
        out[v] = int(hits.min())
    return out


def _canonicalize_sign(run: _Run, reg, p: int) -> None:
    """(|x> + |-x>)/sqrt2 -> |min(x, -x)>, discarding the |+> ancilla."""
    s = run.state
    half = (p - 1) // 2
    flag = s.alloc_register(2, "sign")
    run.step("sign ^= [root > (p-1)/2]")
    s.apply_out_of_place([reg], flag, lambda x: (x > half).astype(np.int64), vectorized=True)
    run.step("negate root  (sign = 1)")
    s.apply_controlled(flag, 1, Bijection((reg,), lambda x: (-x) % p, vectorized=True))
    run.discard(flag)


def masked_sqrt(spec: InputSpec, p: int, mode: str = "keep", seed: int = 0) -> ProtocolResult:
    """Square roots of quadratic residues.

    ``mode="keep"`` ends in |a>|a^(-1/2)>; ``mode="replace"`` ends in |a^(1/2)>
    alone.  Either way the root is the one at most (p-1)/2.
    """
    require_odd_prime(p)
    if mode not in ("keep", "replace"):
        raise ValueError(f"mode must be 'keep' or 'replace', got {mode!r}")
    _require_support(
        spec, p, lambda a: 1 <= a < p and euler_is_residue(a, p), "nonzero quadratic residues"
    )
    run = _Run(seed)
    s = run.state
    a = run.load(spec, p, "a")
    r = s.alloc_register(p, "mask")
    run.step("prepare mask uniform over 1..p-1")
    s.prepare_uniform(r, range(1, p))
    sq = s.alloc_register(p, "mask_sq")
    run.step("mask_sq += mask^2")
    s.apply_out_of_place([r], sq, lambda y: y * y % p, vectorized=True)
    t = s.alloc_register(p, "masked")
    run.step("masked += a * mask_sq")
    s.apply_out_of_place([a, sq], t, lambda x, z: x * z % p, vectorized=True)
    t_val = run.measure(t)
    run.step("classical: canonical square root of t")
    root = canonical_sqrt(t_val, p)
    run.step("mask_sq -= mask^2")
    s.apply_out_of_place([r], sq, lambda y: y * y % p, Combine.SUB, vectorized=True)
    run.discard(sq, t)
    root_inv = mod_inverse(root, p)
    run.step("mask *= root^-1")
    s.apply_bijection([r], lambda y: y * root_inv % p, vectorized=True)
    if mode == "keep":
        _canonicalize_sign(run, r, p)
        inv_roots = _brute_canonical_roots([pow(x, -1, p) for x in spec.amplitudes], 2, p)
        ideal = SparseState.from_amplitudes(
            [(p, "a"), (p, "mask")],
            {(x, inv_roots[pow(x, -1, p)]): amp for x, amp in spec.amplitudes.items()},
        )
    else:
        run.step("mask <- mask^-1 in place")
        s.apply_bijection([r], lambda y: pow(y, -1, p), validate=False)
        run.step("a -= mask^2")
        s.apply_out_of_place([r], a, lambda y: y * y % p, Combine.SUB, vectorized=True)
        run.discard(a)
        _canonicalize_sign(run, r, p)
        roots = _brute_canonical_roots(list(spec.amplitudes), 2, p)
        ideal = SparseState.from_amplitudes(
            [(p, "mask")], {(roots[x],): amp for x, amp in spec.amplitudes.items()}
        )
    return run.result(
        "masked-sqrt", {"p": p, "mode": mode}, ideal, {"t": t_val, "root_of_t": root}
    )


def masked_kth_root(
    spec: InputSpec, p: int, k: int, mode: str = "keep", seed: int = 0
) -> ProtocolResult:
    """k-th roots for gcd(k, p-1) == 1: |a>|a^(-1/k)>, or |a^(1/k)> with ``mode="replace"``."""
    require_odd_prime(p)
    if math.gcd(k, p - 1) != 1:
        raise ExponentNotInvertibleError(f"gcd({k}, {p - 1}) = {math.gcd(k, p - 1)}")
    if mode not in ("keep", "replace"):
        raise ValueError(f"mode must be 'keep' or 'replace', got {mode!r}")
    _require_support(spec, p, lambda a: 1 <= a < p, "in 1..p-1")
    run = _Run(seed)
    s = run.state
    a = run.load(spec, p, "a")
    r = s.alloc_register(p, "mask")
    run.step("prepare mask uniform over 1..p-1")
    s.prepare_uniform(r, range(1, p))
    rk = s.alloc_register(p, "mask_pow")
    run.step("mask_pow += mask^k")
    s.apply_out_of_place([r], rk, lambda y: powmod_array(y, k, p), vectorized=True)
    t = s.alloc_register(p, "masked")
    run.step("masked += a * mask_pow")
    s.apply_out_of_place([a, rk], t, lambda x, z: x * z % p, vectorized=True)
    run.step("mask_pow -= mask^k")
    s.apply_out_of_place([r], rk, lambda y: powmod_array(y, k, p), Combine.SUB, vectorized=True)
    run.discard(rk)
    t_val = run.measure(t)
    run.step("classical: k-th root of t")
    root = kth_root_mod_p(t_val, k, p)
    run.discard(t)
    root_inv = mod_inverse(root, p)
    run.step("mask *= root^-1")
    s.apply_bijection([r], lambda y: y * root_inv % p, vectorized=True)
    if mode == "keep":
        inv_roots = _brute_canonical_roots([pow(x, -1, p) for x in spec.amplitudes], k, p)
        ideal = SparseState.from_amplitudes(
            [(p, "a"), (p, "mask")],
            {(x, inv_roots[pow(x, -1, p)]): amp for x, amp in spec.amplitudes.items()},
        )
    else:
        run.step("mask <- mask^-1 in place")
        s.apply_bijection([r], lambda y: pow(y, -1, p), validate=False)
        run.step("a -= mask^k")
        s.apply_out_of_place([r], a, lambda y: powmod_array(y, k, p), Combine.SUB, vectorized=True)
        run.discard(a)
        roots = _brute_canonical_roots(list(spec.amplitudes), k, p)
        ideal = SparseState.from_amplitudes(
            [(p, "mask")], {(roots[x],): amp for x, amp in spec.amplitudes.items()}
        )
    return run.result(
        "masked-kth-root", {"p": p, "k": k, "mode": mode}, ideal, {"t": t_val, "root_of_t": root}
    )


# -- linear algebra -------------------------------------------------------------


def _permutation_inverse_table(forward: np.ndarray) -> np.ndarray:
    table = np.empty_like(forward)
    table[forward] = np.arange(len(forward), dtype=forward.dtype)
    return table


def masked_sparse_solve(spec: InputSpec, A: SparseMatrixGF, seed: int = 0) -> ProtocolResult:
    """|a> -> |A^-1 a> over GF(p)^n, vectors encoded little-endian base p."""
    p, n = A.p, A.rows
    if A.rows != A.cols:
        raise ValueError(f"matrix must be square, got {A.rows}x{A.cols}")
    rank = rank_gf(A.to_dense(), p)
    if rank < n:
        raise SingularMatrixError(rank, n)
    size = p**n
    _require_support(spec, size, lambda a: 0 <= a < size, f"vectors in GF({p})^{n}")

    def apply_A(codes):
        return A.matvec(decode_array(codes, p, n))

    run = _Run(seed)
    s = run.state
    a = run.load(spec, size, "a")
    r = s.alloc_register(size, "mask")
    run.step("prepare mask uniform over GF(p)^n")
    s.prepare_uniform(r, range(size))
    t = s.alloc_register(size, "masked")
    run.step("masked += A*mask + a")
    s.apply_out_of_place(
        [a, r], t, lambda x, y: encode_array(apply_A(y) + decode_array(x, p, n), p), vectorized=True
    )
    t_val = run.measure(t)
    run.step("classical: w = A^-1 t")
    w = np.array(solve_sparse_gf(A, decode_vector(t_val, p, n)), dtype=np.int64)
    run.step("mask <- w - mask")
    s.apply_bijection([r], lambda y: encode_array(w - decode_array(y, p, n), p), vectorized=True)
    run.step("a -= A*mask")
    s.apply_bijection(
        [a, r],
        lambda x, y: (encode_array(decode_array(x, p, n) - apply_A(y), p), y),
        vectorized=True,
    )
    run.discard(a, t)
    table = _permutation_inverse_table(encode_array(apply_A(np.arange(size, dtype=np.int64)), p))
    ideal = SparseState.from_amplitudes(
        [(size, "solution")], {(int(table[x]),): amp for x, amp in spec.amplitudes.items()}
    )
    return run.result(
        "masked-sparse-solve",
        {"p": p, "n": n, "entries": [list(e) for e in A.entries]},
        ideal,
        {"t": decode_vector(t_val, p, n), "w": tuple(int(v) for v in w)},
    )


# -- generic homomorphism inversion ------------------------------------------


def masked_hom_inverse(spec: InputSpec, hom: Homomorphism, seed: int = 0) -> ProtocolResult:
    """|a> -> |a>|x^-1> where x = f^-1(a), for a bijective homomorphism f."""
    G = hom.group
    M = G.carrier
    _require_support(spec, M, lambda v: bool(G.contains([v])[0]), f"elements of {G.name}")
    run = _Run(seed)
    s = run.state
    a = run.load(spec, M, "a")
    r = s.alloc_register(M, "mask")
    run.step("prepare mask uniform over G")
    s.prepare_uniform(r, G.support)
    fr = s.alloc_register(M, "f_mask")
    run.step("f_mask += f(mask)")
    s.apply_out_of_place([r], fr, hom.forward, vectorized=True)
    t = s.alloc_register(M, "masked")
    run.step("masked += a . f_mask")
    s.apply_out_of_place([a, fr], t, G.op, vectorized=True)
    run.step("f_mask -= f(mask)")
    s.apply_out_of_place([r], fr, hom.forward, Combine.SUB, vectorized=True)
    run.discard(fr)
    t_val = run.measure(t)
    run.step("classical: xr = f^-1(t)")
    try:
        xr = int(hom.classical_inverse(t_val))
    except Exception as exc:
        raise HomomorphismError(f"classical inverse of {hom.name} failed at {t_val}: {exc}") from exc
    xr_inv = G.inv(xr)
    out = s.alloc_register(M, "x_inv")
    run.step("x_inv += mask . (xr)^-1")
    s.apply_out_of_place([r], out, lambda y: G.op(y, np.full_like(y, xr_inv)), vectorized=True)
    run.step("mask -= x_inv . xr")
    s.apply_out_of_place(
        [out], r, lambda z: G.op(z, np.full_like(z, xr)), Combine.SUB, vectorized=True
    )
    run.discard(r, t)
    E = G.elements
    preimage = dict(zip(hom.forward(E).tolist(), E.tolist()))
    ideal = SparseState.from_amplitudes(
        [(M, "a"), (M, "x_inv")],
        {(x, G.inv(preimage[x])): amp for x, amp in spec.amplitudes.items()},
    )
    return run.result(
        "masked-hom-inverse", {"group": G.name, "f": hom.name}, ideal, {"t": t_val, "xr": xr}
    )


# -- in-place division ----------------------------------------------------------


def divmod_widths(n: int, b: int, m: int) -> dict[str, int]:
    """Register sizes used by :func:`masked_divmod`."""
    mask_range = 2**m * b
    work_bits = ((2**n - 1) + (mask_range - 1)).bit_length()
    return {
        "mask_range": mask_range,
        "mask_bits": m + (b.bit_length() - 1),
        "work_bits": work_bits,
    }


def divmod_damage_bound(n: int, b: int, m: int) -> float:
    return 2.0 ** (n - m - (b.bit_length() - 1))


def masked_divmod(spec: InputSpec, b: int, m: int, seed: int = 0) -> ProtocolResult:
    """|a> -> |a // b>|a mod b> for n-bit inputs, with a mask r = r1*b + r2.

    The sum register is wide enough that a + r never wraps, so a measured
    value c is consistent with input a exactly when 0 <= c - a < 2^m * b.
    If some supported a has no such r the state loses those branches; that
    run reports ``success=False`` together with the exact probability of the
    damaging outcomes.
    """
    if b < 2:
        raise InvalidDivisorError(f"divisor must be >= 2, got {b}")
    n = max(spec.modulus - 1, 1).bit_length()
    if spec.modulus != 2**n:
        raise UnsupportedInputError(f"input modulus {spec.modulus} is not a power of two")
    if 2**m <= (spec.modulus - 1) // b:
        raise UnsupportedInputError(f"mask width m={m} cannot hold quotients of {n}-bit inputs")
    widths = divmod_widths(n, b, m)
    R, W = widths["mask_range"], 2 ** widths["work_bits"]
    Q = 2**m
    run = _Run(seed)
    s = run.state
    x = run.load(spec, W, "a")
    r1 = s.alloc_register(Q, "mask_hi")
    r2 = s.alloc_register(b, "mask_lo")
    run.step("prepare mask_hi uniform over [0, 2^m), mask_lo uniform over [0, b)")
    s.prepare_uniform(r1, range(Q))
    s.prepare_uniform(r2, range(b))
    run.step("a += mask_hi * b + mask_lo")
    s.apply_out_of_place([r1, r2], x, lambda h, lo: h * b + lo, vectorized=True)
    c = run.measure(x)
    run.step("classical: c1, c2 = divmod(c, b)")
    c1, c2 = divmod_classical(c, b)
    borrow = s.alloc_register(2, "borrow")
    run.step("borrow ^= [c2 - mask_lo < 0]")
    s.apply_out_of_place([r2], borrow, lambda lo: (lo > c2).astype(np.int64), vectorized=True)
    run.step("mask_lo <- c2 - mask_lo (+ b on borrow)")
    s.apply_bijection([r2], lambda lo: (c2 - lo) % b, vectorized=True)
    run.step("mask_hi <- c1 - mask_hi - borrow")
    s.apply_bijection([r1, borrow], lambda h, f: ((c1 - h - f) % Q, f), vectorized=True)
    run.step("borrow ^= [c2 - remainder < 0]")
    s.apply_out_of_place([r2], borrow, lambda lo: (lo > c2).astype(np.int64), vectorized=True)
    run.discard(borrow, x)
    lo_ok, hi_ok = max(spec.support), min(spec.support) + R - 1
    record = run.transcript[0]
    bad = (record.outcomes < lo_ok) | (record.outcomes > hi_ok)
    damage = float(record.probabilities[bad].sum())
    success = lo_ok <= c <= hi_ok
    ideal = SparseState.from_amplitudes(
        [(Q, "quotient"), (b, "remainder")],
        {(v // b, v % b): amp for v, amp in spec.amplitudes.items()},
    )
    return run.result(
        "masked-divmod",
        {"n": n, "b": b, "m": m, **widths},
        ideal,
        {"c": c, "c1": c1, "c2": c2},
        success=success,
        damage_probability=damage,
    )


PROTOCOLS = {
    "masked-mod-inverse": masked_mod_inverse,
    "masked-mod-inverse-zero-safe": masked_mod_inverse_zero_safe,
    "masked-mod-inverse-composite": masked_mod_inverse_composite,
    "masked-sqrt": masked_sqrt,
    "masked-kth-root": masked_kth_root,
    "masked-sparse-solve": masked_sparse_solve,
    "masked-hom-inverse": masked_hom_inverse,
    "masked-divmod": masked_divmod,
}

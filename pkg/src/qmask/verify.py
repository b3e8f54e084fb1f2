"""Property suites run by ``qmask verify``.

Each property returns a :class:`PropertyResult`.  The runner checks a wall
clock budget before starting each property; anything not started in time is
reported as skipped and the report is marked incomplete.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from qmask import classical as cl
from qmask import cost
from qmask.groups import (
    group_units_mod,
    group_vector_gf,
    group_zp_star,
    hom_identity,
    hom_matrix,
    hom_power,
    validate_group,
    validate_homomorphism,
)
from qmask.protocols import (
    InputSpec,
    divmod_damage_bound,
    masked_divmod,
    masked_hom_inverse,
    masked_kth_root,
    masked_mod_inverse,
    masked_mod_inverse_composite,
    masked_mod_inverse_zero_safe,
    masked_sparse_solve,
    masked_sqrt,
)
from qmask.state import SparseState

MODULES = ("qsim-core", "classical-ops", "groups", "protocols", "cost-model")


@dataclass
class PropertyResult:
    module: str
    name: str
    grid: str
    passed: bool | None
    detail: str = ""
    seconds: float = 0.0

    @property
    def status(self) -> str:
        return {True: "pass", False: "FAIL", None: "skipped"}[self.passed]


@dataclass
class Report:
    results: list[PropertyResult] = field(default_factory=list)
    complete: bool = True

    @property
    def ok(self) -> bool:
        return self.complete and all(r.passed for r in self.results)

    def to_dict(self) -> dict:
        return {
            "complete": self.complete,
            "ok": self.ok,
            "properties": [
                {
                    "module": r.module,
                    "name": r.name,
                    "grid": r.grid,
                    "status": r.status,
                    "detail": r.detail,
                    "seconds": round(r.seconds, 3),
                }
                for r in self.results
            ],
        }

    def to_text(self) -> str:
        lines = []
        for r in self.results:
            lines.append(f"[{r.status:>7}] {r.module:<13} {r.name}  ({r.grid}) {r.detail}".rstrip())
        verdict = "PASS" if self.ok else "FAIL"
        if not self.complete:
            verdict += " (incomplete: budget exhausted)"
        lines.append(verdict)
        return "\n".join(lines) + "\n"


_REGISTRY: list[tuple[str, str, str, Callable[[], tuple[bool, str]]]] = []


def prop(module: str, name: str, grid: str):
    def deco(fn):
        _REGISTRY.append((module, name, grid, fn))
        return fn

    return deco


def run_verification(scope: str = "all", budget: float | None = None) -> Report:
    if scope != "all" and scope not in MODULES:
        raise ValueError(f"unknown scope {scope!r}; choose 'all' or one of {MODULES}")
    report = Report()
    start = time.monotonic()
    for module, name, grid, fn in _REGISTRY:
        if scope != "all" and module != scope:
            continue
        if budget is not None and time.monotonic() - start >= budget:
            report.complete = False
            report.results.append(PropertyResult(module, name, grid, None, "not run"))
            continue
        t0 = time.monotonic()
        try:
            passed, detail = fn()
        except Exception as exc:  # a crash is a failed property, not a crashed report
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        report.results.append(PropertyResult(module, name, grid, passed, detail, time.monotonic() - t0))
    return report


# -- qsim-core ------------------------------------------------------------------


def _random_state(rng: np.random.Generator, moduli: list[int], size: int) -> SparseState:
    total = math.prod(moduli)
    codes = rng.choice(total, size=min(size, total), replace=False)
    amps = rng.normal(size=len(codes)) + 1j * rng.normal(size=len(codes))
    amps /= np.linalg.norm(amps)
    tuples = [tuple(int(v) for v in np.unravel_index(c, moduli)) for c in codes]
    return SparseState.from_amplitudes(moduli, dict(zip(tuples, amps)))


@prop("qsim-core", "bijection then inverse restores the amplitude map", "50 random states/permutations")
def _reversibility():
    rng = np.random.default_rng(11)
    for _ in range(50):
        moduli = [int(m) for m in rng.integers(2, 9, size=3)]
        state = _random_state(rng, moduli, 20)
        before = state.amplitudes
        regs = state.registers[:2]
        perm = rng.permutation(moduli[0] * moduli[1])
        inv = np.argsort(perm)
        m1 = moduli[1]
        state.apply_bijection(regs, lambda x, y: divmod(int(perm[x * m1 + y]), m1))
        state.apply_bijection(regs, lambda x, y: divmod(int(inv[x * m1 + y]), m1))
        after = state.amplitudes
        if before.keys() != after.keys() or any(abs(before[k] - after[k]) > 1e-15 for k in before):
            return False, "round trip changed the state"
        if abs(state.norm() - 1) > 1e-12:
            return False, "norm drift"
    return True, ""


@prop("qsim-core", "stored marginal equals independent sum; sampling within 5 sigma", "10^5 seeded trials")
def _measurement_soundness():
    rng = np.random.default_rng(12)
    state = _random_state(rng, [5, 3], 12)
    reg = state.registers[0]
    expected: dict[int, float] = {}
    for (v, _), a in state.amplitudes.items():
        expected[v] = expected.get(v, 0.0) + abs(a) ** 2
    record = state.copy().measure(reg, 0)
    if any(abs(record.marginal[v] - p) > 1e-12 for v, p in expected.items()):
        return False, "marginal mismatch"
    trials = 10**5
    counts: dict[int, int] = {}
    for seed in range(trials):
        out = state.copy().measure(reg, seed).outcome
        counts[out] = counts.get(out, 0) + 1
    for v, p in expected.items():
        sigma = math.sqrt(trials * p * (1 - p))
        if abs(counts.get(v, 0) - trials * p) > 5 * sigma:
            return False, f"outcome {v}: {counts.get(v, 0)} vs {trials * p:.1f}"
    return True, ""


@prop("qsim-core", "discard succeeds iff factorization residual < 1e-9", "100 product + 100 entangled states")
def _discard_safety():
    rng = np.random.default_rng(13)
    for _ in range(100):
        u = rng.normal(size=3) + 1j * rng.normal(size=3)
        v = rng.normal(size=4) + 1j * rng.normal(size=4)
        u /= np.linalg.norm(u)
        v /= np.linalg.norm(v)
        prod = {(i, j): u[i] * v[j] for i in range(3) for j in range(4)}
        s = SparseState.from_amplitudes([3, 4], prod)
        s.discard(s.registers[0])
        got = np.array([s.amplitudes.get((j,), 0) for j in range(4)])
        if abs(abs(np.vdot(got, v)) - 1) > 1e-9:
            return False, "product factor not recovered"
        ent = _random_state(rng, [3, 4], 12)
        residual = ent.factorization_residual(ent.registers[0])
        try:
            ent.discard(ent.registers[0])
            if residual >= 1e-9:
                return False, "entangled register discarded"
        except Exception:
            if residual < 1e-9:
                return False, "product register refused"
    return True, ""


# -- classical-ops --------------------------------------------------------------

_SMALL_PRIMES = [p for p in cl.primes_below(2**10) if p > 2]


@prop("classical-ops", "mod_inverse matches brute force", "all odd primes < 2^10, all units")
def _inverse_oracle():
    for p in _SMALL_PRIMES:
        a = np.arange(1, p)
        table = (a[:, None] * a[None, :]) % p
        brute = np.argmax(table == 1, axis=1) + 1
        for x in range(1, p):
            if cl.mod_inverse(x, p) != brute[x - 1]:
                return False, f"p={p} a={x}"
    return True, ""


@prop("classical-ops", "sqrt_mod_p matches brute force", "all odd primes < 2^10, all residues")
def _sqrt_oracle():
    for p in _SMALL_PRIMES:
        squares: dict[int, list[int]] = {}
        for x in range(1, p):
            squares.setdefault(x * x % p, []).append(x)
        for a in range(1, p):
            if a in squares:
                if cl.sqrt_mod_p(a, p) != (min(squares[a]), max(squares[a])):
                    return False, f"p={p} a={a}"
            elif cl.euler_is_residue(a, p):
                return False, f"Euler criterion wrong at p={p} a={a}"
    return True, ""


@prop("classical-ops", "kth_root_mod_p matches brute force", "all odd primes < 2^10, k in {3,5,7}")
def _kth_oracle():
    for p in _SMALL_PRIMES:
        for k in (3, 5, 7):
            if math.gcd(k, p - 1) != 1:
                continue
            inv = {pow(x, k, p): x for x in range(1, p)}
            for a in range(1, p):
                if cl.kth_root_mod_p(a, k, p) != inv[a]:
                    return False, f"p={p} k={k} a={a}"
    return True, ""


@prop("classical-ops", "A . solve(A, t) == t", "10^3 random sparse matrices per (n<=8, p in {5,11,101})")
def _solve_property():
    rng = np.random.default_rng(14)
    for p in (5, 11, 101):
        for n in range(1, 9):
            for _ in range(1000):
                A = cl.random_sparse_invertible(n, p, rng, weight=3)
                t = rng.integers(0, p, size=n)
                x = cl.solve_sparse_gf(A, t)
                if not np.array_equal(A.matvec(np.array(x)), t):
                    return False, f"p={p} n={n}"
    return True, ""


@prop("classical-ops", "divmod_classical reconstructs c", "10^5 random inputs")
def _divmod_property():
    rng = np.random.default_rng(15)
    for _ in range(10**5):
        c = int(rng.integers(0, 2**40))
        b = int(rng.integers(1, 2**20))
        q, r = cl.divmod_classical(c, b)
        if q * b + r != c or not 0 <= r < b:
            return False, f"c={c} b={b}"
    return True, ""


# -- groups ---------------------------------------------------------------------


@prop("groups", "group laws hold for shipped constructors", "Z_p^* p<=257, (Z/n)^*, GF(p)^n")
def _group_laws():
    groups = [group_zp_star(p) for p in (3, 7, 11, 101, 257)]
    groups += [group_units_mod(15, [3, 5]), group_units_mod(21, [3, 7]), group_units_mod(1001, [7, 11, 13])]
    groups += [group_vector_gf(5, 2), group_vector_gf(3, 4), group_vector_gf(2, 8)]
    for G in groups:
        validate_group(G)
    return True, f"{len(groups)} groups"


@prop("groups", "homomorphism law and classical inverse", "x^k on Z_p^*, A.v on GF(p)^n, identity")
def _hom_laws():
    rng = np.random.default_rng(16)
    homs = [hom_power(group_zp_star(p), k) for p, k in ((11, 3), (13, 5), (101, 3), (1019, 3))]
    homs.append(hom_identity(group_zp_star(31)))
    for p, n in ((5, 2), (3, 3), (11, 2)):
        homs.append(hom_matrix(group_vector_gf(p, n), cl.random_sparse_invertible(n, p, rng)))
    for h in homs:
        validate_homomorphism(h)
    return True, f"{len(homs)} homomorphisms"


# -- protocols ------------------------------------------------------------------


def _protocol_cases():
    A = cl.SparseMatrixGF.from_dense([[1, 1], [0, 1]], 5)
    A3 = cl.SparseMatrixGF.from_dense([[2, 0, 1], [0, 1, 0], [1, 0, 0]], 3)
    residues41 = [a for a in range(1, 41) if cl.euler_is_residue(a, 41)]
    return [
        ("masked-mod-inverse p=31", lambda s, sd: masked_mod_inverse(s, 31, sd), range(1, 31), 31),
        ("masked-mod-inverse p=101", lambda s, sd: masked_mod_inverse(s, 101, sd), range(1, 101), 101),
        ("zero-safe p=31", lambda s, sd: masked_mod_inverse_zero_safe(s, 31, seed=sd), range(31), 31),
        ("composite n=15 (unit inputs)", lambda s, sd: masked_mod_inverse_composite(s, 15, [3, 5], sd), cl.units_of(15), 15),
        ("sqrt p=41 keep", lambda s, sd: masked_sqrt(s, 41, "keep", sd), residues41, 41),
        ("sqrt p=41 replace", lambda s, sd: masked_sqrt(s, 41, "replace", sd), residues41, 41),
        ("kth-root p=11 k=3", lambda s, sd: masked_kth_root(s, 11, 3, seed=sd), range(1, 11), 11),
        ("kth-root p=101 k=3", lambda s, sd: masked_kth_root(s, 101, 3, seed=sd), range(1, 101), 101),
        ("sparse-solve GF(5)^2", lambda s, sd: masked_sparse_solve(s, A, sd), range(25), 25),
        ("sparse-solve GF(3)^3", lambda s, sd: masked_sparse_solve(s, A3, sd), range(27), 27),
        ("hom-inverse x^3 on Z_11^*", lambda s, sd: masked_hom_inverse(s, hom_power(group_zp_star(11), 3), sd), range(1, 11), 11),
        ("hom-inverse A.v on GF(5)^2", lambda s, sd: masked_hom_inverse(s, hom_matrix(group_vector_gf(5, 2), A), sd), range(25), 25),
    ]


@prop("protocols", "measured-register marginal is input-independent", "10 random input pairs per case")
def _input_independence():
    rng = np.random.default_rng(17)
    worst = 0.0
    for name, runner, domain, modulus in _protocol_cases():
        for _ in range(10):
            s1 = InputSpec.random(domain, modulus, rng)
            s2 = InputSpec.random(domain, modulus, rng)
            m1 = runner(s1, int(rng.integers(2**31))).measurement
            m2 = runner(s2, int(rng.integers(2**31))).measurement
            if not np.array_equal(m1.outcomes, m2.outcomes):
                return False, f"{name}: different outcome sets"
            worst = max(worst, float(np.max(np.abs(m1.probabilities - m2.probabilities))))
    return worst < 1e-12, f"max residual {worst:.2e}"


@prop("protocols", "success implies fidelity >= 1 - 1e-9; one measurement, marginal sums to 1", "50 seeds per case")
def _fidelity_sweep():
    rng = np.random.default_rng(18)
    for name, runner, domain, modulus in _protocol_cases():
        spec = InputSpec.random(domain, modulus, rng)
        for seed in range(50):
            res = runner(spec, seed)
            if len(res.transcript) != 1 or abs(res.measurement.probabilities.sum() - 1) > 1e-12:
                return False, f"{name}: transcript"
            if res.success and res.fidelity < 1 - 1e-9:
                return False, f"{name} seed {seed}: fidelity {res.fidelity}"
    return True, ""


@prop("protocols", "division: conditional success exact, damage within bound", "n=4, b in {3,5,7}, m in {6,8}")
def _divmod_property():
    for b in (3, 5, 7):
        for m in (6, 8):
            bound = 2 * divmod_damage_bound(4, b, m)
            for a1 in range(16):
                for a2 in range(a1, 16):
                    spec = InputSpec.uniform({a1, a2}, 16)
                    res = masked_divmod(spec, b, m, seed=a1 * 16 + a2)
                    if res.damage_probability > bound:
                        return False, f"b={b} m={m} input {a1},{a2}: damage {res.damage_probability}"
                    if res.success and res.fidelity < 1 - 1e-9:
                        return False, f"b={b} m={m} input {a1},{a2}: fidelity {res.fidelity}"
    return True, ""


@prop("protocols", "generic homomorphism path specializes exactly", "identity on Z_31^*, A.v on GF(5)^2")
def _specialization():
    G = group_zp_star(31)
    for a in range(1, 31):
        spec = InputSpec.basis(a, 31)
        h = masked_hom_inverse(spec, hom_identity(G), seed=a).final_state
        d = masked_mod_inverse(spec, 31, seed=a).final_state
        if h.amplitudes.keys() != d.amplitudes.keys():
            return False, f"identity mismatch at a={a}"
    A = cl.SparseMatrixGF.from_dense([[1, 1], [0, 1]], 5)
    V = group_vector_gf(5, 2)
    hom = hom_matrix(V, A)
    for a in range(25):
        spec = InputSpec.basis(a, 25)
        (_, neg), = masked_hom_inverse(spec, hom, seed=a).final_state.amplitudes
        (sol,), = masked_sparse_solve(spec, A, seed=a).final_state.amplitudes
        if V.op(np.array([neg]), np.array([sol]))[0] != V.identity:
            return False, f"matrix mismatch at a={a}"
    return True, ""


# -- cost-model -----------------------------------------------------------------


@prop("cost-model", "n=256 inverse ratio inside the cited interval", "shipped defaults")
def _calibration():
    lo, hi = cost.DEFAULTS.meta["inverse_ratio_interval"]
    ratio = cost.cost_masked_inverse(256).ratio
    return lo <= ratio <= hi and bool(cost.DEFAULTS.meta.get("citation")), f"ratio {ratio:.3f}"


@prop("cost-model", "costs nondecreasing in every size parameter", "n in 2^3..2^16")
def _monotone():
    ns = [2**e for e in range(3, 17)]
    series = [
        [cost.cost_masked_inverse(n).total for n in ns],
        [cost.cost_masked_sqrt(n).total for n in ns],
        [cost.cost_masked_kth_root(n, 5).total for n in ns],
        [cost.cost_masked_divmod(n, 2 * n, 5).total for n in ns],
        [cost.cost_masked_divmod(16, m, 5).total for m in range(16, 200)],
        [cost.cost_masked_sparse(N, 100, 3).total for N in range(1, 200)],
        [cost.cost_masked_sparse(100, 100, k).total for k in range(0, 101)],
    ]
    ok = all(all(b >= a for a, b in zip(s, s[1:])) for s in series)
    return ok, ""


@prop("cost-model", "inverse log-log slope tends to 2; divmod ratio grows", "n in 2^8..2^16")
def _asymptotics():
    ns = [2**e for e in range(8, 17)]
    costs = [cost.cost_masked_inverse(n).total for n in ns]
    slopes = [math.log2(b / a) for a, b in zip(costs, costs[1:])]
    rising = all(b >= a for a, b in zip(slopes, slopes[1:])) and 1.9 < slopes[-1] <= 2
    ratios = [cost.cost_masked_divmod(n, 2 * n, 5).ratio for n in [2**e for e in range(4, 13)]]
    growing = all(b > a for a, b in zip(ratios, ratios[1:]))
    return rising and growing, f"final slope {slopes[-1]:.4f}"


@prop("cost-model", "sparse savings equal N(M-k) under unit constants", "N, M <= 40")
def _sparse_savings():
    for N in range(1, 41, 3):
        for M in range(1, 41, 3):
            for k in range(0, M + 1):
                c = cost.cost_masked_sparse(N, M, k)
                if c.extras["savings"] != N * (M - k):
                    return False, f"N={N} M={M} k={k}"
    return True, ""

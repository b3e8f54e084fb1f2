"""Exact sparse simulation of register-valued quantum states.

A state is a list of registers, each holding integers ``0 <= v < modulus``,
together with a sparse map from value tuples to complex amplitudes.  Every
operation the masking protocols need is either a reversible classical map on
the tuples, a uniform preparation of a fresh register, a projective
measurement of one register, or removal of a register that is provably in a
product state with the rest.

Storage is columnar (an ``int64`` array of tuples and a ``complex128`` array of
amplitudes) so that vectorised maps run over millions of tuples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

from qmask.errors import (
    DiscardEntangledError,
    InvalidModulusError,
    InvalidSupportError,
    LayoutMismatchError,
    NonReversibleMapError,
    NormalizationError,
    OverlappingRegisterError,
    RegisterNotFreshError,
    UnknownRegisterError,
)

PRUNE_THRESHOLD = 1e-15
NORM_TOLERANCE = 1e-12
FACTOR_TOLERANCE = 1e-9
VALIDATE_LIMIT = 2**20

# Above this many distinct values per side, discard uses an iterative SVD
# instead of a dense Gram matrix.
_DENSE_GRAM_LIMIT = 2048
_DENSE_RESIDUAL_LIMIT = 2**22


@dataclass(frozen=True)
class RegisterDescriptor:
    id: int
    modulus: int
    label: str = ""


class Combine(Enum):
    """How an out-of-place result is folded into its destination register."""

    ADD = "add"
    SUB = "sub"
    MUL = "mul"
    DIV = "div"

    @property
    def inverse(self) -> "Combine":
        return {
            Combine.ADD: Combine.SUB,
            Combine.SUB: Combine.ADD,
            Combine.MUL: Combine.DIV,
            Combine.DIV: Combine.MUL,
        }[self]

    def __call__(self, dst: np.ndarray, value: np.ndarray, modulus: int) -> np.ndarray:
        if self is Combine.ADD:
            return (dst + value) % modulus
        if self is Combine.SUB:
            return (dst - value) % modulus
        bad = np.gcd(value, modulus) != 1
        if bad.any():
            v = int(value[bad][0])
            raise NonReversibleMapError(
                f"multiplicative accumulation by {v}, which is not a unit mod {modulus}"
            )
        if self is Combine.DIV:
            value = invert_mod_array(value, modulus)
        return (dst * value) % modulus


@dataclass(frozen=True)
class Bijection:
    """In-place reversible map on the value tuples of ``regs``.

    ``f`` receives one argument per register and returns one value per
    register (a bare value when there is a single register).  With
    ``vectorized=True`` the arguments are numpy arrays; otherwise ``f`` is
    called with Python ints once per distinct input combination.
    """

    regs: tuple[RegisterDescriptor, ...]
    f: Callable
    vectorized: bool = False
    validate: bool | None = None


@dataclass(frozen=True)
class OutOfPlace:
    """``dst <- combine(dst, f(*src))``; reversible by construction."""

    src: tuple[RegisterDescriptor, ...]
    dst: RegisterDescriptor
    f: Callable
    combine: Combine = Combine.ADD
    vectorized: bool = False

    @property
    def regs(self) -> tuple[RegisterDescriptor, ...]:
        return (*self.src, self.dst)

    def inverse(self) -> "OutOfPlace":
        return OutOfPlace(self.src, self.dst, self.f, self.combine.inverse, self.vectorized)


def invert_mod_array(values: np.ndarray, modulus: int) -> np.ndarray:
    """Elementwise modular inverse of an array of units."""
    uniq, inv = np.unique(values, return_inverse=True)
    table = np.array([pow(int(v), -1, modulus) for v in uniq], dtype=np.int64)
    return table[inv.ravel()].reshape(np.shape(values))


def _row_keys(values: np.ndarray, moduli: Sequence[int]) -> np.ndarray:
    """One hashable/sortable key per row; mixed radix when it fits in int64."""
    values = np.ascontiguousarray(values, dtype=np.int64)
    if values.shape[1] == 0:
        return np.zeros(values.shape[0], dtype=np.int64)
    if math.prod(moduli) < 2**62:
        keys = np.zeros(values.shape[0], dtype=np.int64)
        for j, m in enumerate(moduli):
            keys = keys * m + values[:, j]
        return keys
    return values.view(np.dtype((np.void, values.dtype.itemsize * values.shape[1]))).ravel()


def _evaluate(f: Callable, cols: list[np.ndarray], vectorized: bool, n_out: int) -> np.ndarray:
    """Apply ``f`` to column arrays; returns an (rows, n_out) int64 array."""
    rows = len(cols[0]) if cols else 0
    if vectorized:
        out = f(*cols)
        parts = out if isinstance(out, tuple) else (out,)
    else:
        stacked = np.stack(cols, axis=1) if cols else np.zeros((rows, 0), np.int64)
        uniq, inv = np.unique(stacked, axis=0, return_inverse=True)
        images = []
        for row in uniq:
            img = f(*(int(v) for v in row))
            images.append(img if isinstance(img, tuple) else (img,))
        table = np.array(images, dtype=np.int64).reshape(len(uniq), -1)
        parts = tuple(table[inv.ravel(), j] for j in range(table.shape[1]))
    if len(parts) != n_out:
        raise NonReversibleMapError(f"map returned {len(parts)} values, expected {n_out}")
    return np.stack(
        [np.broadcast_to(np.asarray(p, dtype=np.int64), (rows,)) for p in parts], axis=1
    )


@dataclass
class MeasurementRecord:
    register_id: int
    label: str
    outcome: int
    outcomes: np.ndarray
    probabilities: np.ndarray
    seed: int | None = None

    @property
    def marginal(self) -> dict[int, float]:
        return dict(zip(self.outcomes.tolist(), self.probabilities.tolist()))

    def probability(self, value: int) -> float:
        i = np.searchsorted(self.outcomes, value)
        if i < len(self.outcomes) and self.outcomes[i] == value:
            return float(self.probabilities[i])
        return 0.0

    def to_dict(self) -> dict:
        return {
            "register": self.register_id,
            "label": self.label,
            "outcome": self.outcome,
            "seed": self.seed,
            "marginal": [[int(v), float(p)] for v, p in zip(self.outcomes, self.probabilities)],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "MeasurementRecord":
        pairs = d["marginal"]
        return cls(
            register_id=d["register"],
            label=d["label"],
            outcome=d["outcome"],
            outcomes=np.array([v for v, _ in pairs], dtype=np.int64),
            probabilities=np.array([p for _, p in pairs], dtype=float),
            seed=d["seed"],
        )


class SparseState:
    """Normalized pure state over a list of integer registers."""

    def __init__(self, *, prune: float = PRUNE_THRESHOLD, validate_limit: int = VALIDATE_LIMIT):
        self.registers: list[RegisterDescriptor] = []
        self.prune = prune
        self.validate_limit = validate_limit
        self._values = np.zeros((1, 0), dtype=np.int64)
        self._amps = np.ones(1, dtype=np.complex128)
        self._next_id = 0

    # -- construction -------------------------------------------------------

    @classmethod
    def from_amplitudes(
        cls,
        layout: Sequence[tuple[int, str] | int],
        amplitudes: Mapping[tuple[int, ...], complex],
        **kwargs,
    ) -> "SparseState":
        """Build a state directly from a ``{tuple: amplitude}`` map.

        Used for independently constructed target states; the map is
        renormalized only if it is already normalized to within 1e-12.
        """
        state = cls(**kwargs)
        for item in layout:
            modulus, label = (item, "") if isinstance(item, int) else item
            state.alloc_register(modulus, label)
        keys = [tuple(k) for k, a in amplitudes.items() if abs(a) >= state.prune]
        if not keys:
            raise InvalidSupportError("empty amplitude map")
        values = np.array(keys, dtype=np.int64).reshape(len(keys), len(state.registers))
        for j, reg in enumerate(state.registers):
            if ((values[:, j] < 0) | (values[:, j] >= reg.modulus)).any():
                raise InvalidSupportError(f"value out of range for register {reg.label!r}")
        state._values = values
        state._amps = np.array([amplitudes[k] for k in keys], dtype=np.complex128)
        if len(np.unique(_row_keys(values, state.moduli))) != len(keys):
            raise InvalidSupportError("duplicate tuples in amplitude map")
        state._check_norm()
        return state

    def copy(self) -> "SparseState":
        other = SparseState(prune=self.prune, validate_limit=self.validate_limit)
        other.registers = list(self.registers)
        other._values = self._values.copy()
        other._amps = self._amps.copy()
        other._next_id = self._next_id
        return other

    # -- inspection ---------------------------------------------------------

    def __len__(self) -> int:
        return len(self._amps)

    def __repr__(self) -> str:
        regs = ", ".join(f"{r.label or r.id}:{r.modulus}" for r in self.registers)
        return f"SparseState([{regs}], {len(self)} tuples)"

    @property
    def moduli(self) -> list[int]:
        return [r.modulus for r in self.registers]

    @property
    def values(self) -> np.ndarray:
        return self._values.copy()

    @property
    def amps(self) -> np.ndarray:
        return self._amps.copy()

    @property
    def amplitudes(self) -> dict[tuple[int, ...], complex]:
        return {
            tuple(int(v) for v in row): complex(a) for row, a in zip(self._values, self._amps)
        }

    def norm(self) -> float:
        return float(np.sum(np.abs(self._amps) ** 2))

    def position(self, reg: RegisterDescriptor) -> int:
        for i, r in enumerate(self.registers):
            if r.id == reg.id:
                return i
        raise UnknownRegisterError(f"register {reg.label or reg.id!r} is not part of this state")

    def column(self, reg: RegisterDescriptor) -> np.ndarray:
        return self._values[:, self.position(reg)].copy()

    def register(self, label: str) -> RegisterDescriptor:
        for r in self.registers:
            if r.label == label:
                return r
        raise UnknownRegisterError(label)

    # -- register lifecycle -------------------------------------------------

    def alloc_register(self, modulus: int, label: str = "") -> RegisterDescriptor:
        if modulus < 2:
            raise InvalidModulusError(f"register modulus must be >= 2, got {modulus}")
        reg = RegisterDescriptor(self._next_id, int(modulus), label)
        self._next_id += 1
        self.registers.append(reg)
        zeros = np.zeros((len(self._amps), 1), dtype=np.int64)
        self._values = np.hstack([self._values, zeros])
        return reg

    def prepare(self, reg: RegisterDescriptor, amplitudes: Mapping[int, complex]) -> None:
        """Load a normalized single-register state into a fresh register."""
        pos = self.position(reg)
        if self._values[:, pos].any():
            raise RegisterNotFreshError(f"register {reg.label!r} does not hold |0>")
        if not amplitudes:
            raise InvalidSupportError("empty support")
        vals = np.fromiter(amplitudes.keys(), dtype=np.int64, count=len(amplitudes))
        amps = np.fromiter(amplitudes.values(), dtype=np.complex128, count=len(amplitudes))
        if (vals < 0).any() or (vals >= reg.modulus).any():
            raise InvalidSupportError(f"support outside [0, {reg.modulus}) for {reg.label!r}")
        if len(np.unique(vals)) != len(vals):
            raise InvalidSupportError("duplicate support values")
        self._tensor(pos, vals, amps)

    def prepare_uniform(self, reg: RegisterDescriptor, support: Iterable[int]) -> None:
        pos = self.position(reg)
        if self._values[:, pos].any():
            raise RegisterNotFreshError(f"register {reg.label!r} does not hold |0>")
        vals = np.unique(np.fromiter(support, dtype=np.int64))
        if len(vals) == 0:
            raise InvalidSupportError("empty support")
        if vals[0] < 0 or vals[-1] >= reg.modulus:
            raise InvalidSupportError(f"support outside [0, {reg.modulus}) for {reg.label!r}")
        amps = np.full(len(vals), 1 / math.sqrt(len(vals)), dtype=np.complex128)
        self._tensor(pos, vals, amps)

    def _tensor(self, pos: int, vals: np.ndarray, amps: np.ndarray) -> None:
        k = len(vals)
        values = np.repeat(self._values, k, axis=0)
        values[:, pos] = np.tile(vals, len(self._amps))
        self._values = values
        self._amps = np.outer(self._amps, amps).ravel()
        self._prune()
        self._check_norm()

    def discard(self, reg: RegisterDescriptor, tol: float = FACTOR_TOLERANCE) -> None:
        """Remove ``reg`` if the state is a product across it."""
        pos = self.position(reg)
        residual, rest_values, rest_amps = self._factorize(pos)
        if residual >= tol:
            raise DiscardEntangledError(reg.label or reg.id, residual)
        self.registers.pop(pos)
        self._values = rest_values
        self._amps = rest_amps
        self._prune()
        self._amps = self._amps / math.sqrt(self.norm())
        self._check_norm()

    def factorization_residual(self, reg: RegisterDescriptor) -> float:
        """Frobenius distance from the nearest state that is a product across ``reg``."""
        return self._factorize(self.position(reg), want_rest=False)[0]

    def _factorize(self, pos: int, want_rest: bool = True):
        col = self._values[:, pos]
        rest = np.delete(self._values, pos, axis=1)
        rest_moduli = [m for i, m in enumerate(self.moduli) if i != pos]
        row_vals, row_idx = np.unique(col, return_inverse=True)
        rest_keys = _row_keys(rest, rest_moduli)
        _, first, col_idx = np.unique(rest_keys, return_index=True, return_inverse=True)
        row_idx, col_idx = row_idx.ravel(), col_idx.ravel()
        if len(row_vals) == 1:
            return 0.0, rest, self._amps.copy()
        mat = sparse.csr_matrix(
            (self._amps, (row_idx, col_idx)), shape=(len(row_vals), len(first))
        )
        total = self.norm()
        if min(mat.shape) <= _DENSE_GRAM_LIMIT:
            if mat.shape[0] <= mat.shape[1]:
                gram = (mat @ mat.conj().T).toarray()
                evals, evecs = np.linalg.eigh(gram)
                sigma2, u = evals[-1], evecs[:, -1]
            else:
                gram = (mat.conj().T @ mat).toarray()
                evals, evecs = np.linalg.eigh(gram)
                sigma2 = evals[-1]
                v = evecs[:, -1]
                u = mat @ v
                u = u / np.linalg.norm(u)
        else:
            u, s, _ = splinalg.svds(mat, k=1)
            sigma2, u = s[0] ** 2, u[:, 0]
        # fix the global phase so the dominant component of u is real positive
        j = int(np.argmax(np.abs(u)))
        u = u * (abs(u[j]) / u[j])
        rest_amps = np.asarray(mat.conj().T @ u).conj().ravel()
        # sqrt(total - sigma^2) loses half the digits to cancellation, so take
        # the Frobenius distance to the rank-1 fit directly when it fits in memory
        if mat.shape[0] * mat.shape[1] <= _DENSE_RESIDUAL_LIMIT:
            diff = mat.toarray() - np.outer(u, rest_amps)
            residual = float(np.linalg.norm(diff))
        else:
            residual = math.sqrt(max(0.0, total - float(sigma2)))
        if not want_rest:
            return residual, None, None
        return residual, rest[first], rest_amps

    # -- reversible maps ----------------------------------------------------

    def apply(self, op: Bijection | OutOfPlace, control: tuple[RegisterDescriptor, int] | None = None) -> None:
        positions = [self.position(r) for r in op.regs]
        if len(set(positions)) != len(positions):
            raise OverlappingRegisterError("a register appears twice in one map")
        rows = slice(None)
        if control is not None:
            creg, cval = control
            cpos = self.position(creg)
            if cpos in positions:
                raise OverlappingRegisterError(
                    f"control register {creg.label!r} is also a target"
                )
            rows = np.nonzero(self._values[:, cpos] == cval)[0]
            if len(rows) == 0:
                return
        if isinstance(op, OutOfPlace):
            self._apply_out_of_place(op, positions, rows)
        else:
            self._apply_bijection(op, positions, rows)
        self._check_norm()

    def apply_bijection(
        self,
        regs: Sequence[RegisterDescriptor],
        f: Callable,
        *,
        vectorized: bool = False,
        validate: bool | None = None,
    ) -> None:
        self.apply(Bijection(tuple(regs), f, vectorized, validate))

    def apply_out_of_place(
        self,
        src: Sequence[RegisterDescriptor],
        dst: RegisterDescriptor,
        f: Callable,
        combine: Combine = Combine.ADD,
        *,
        vectorized: bool = False,
    ) -> None:
        self.apply(OutOfPlace(tuple(src), dst, f, combine, vectorized))

    def apply_controlled(
        self, control: RegisterDescriptor, control_value: int, op: Bijection | OutOfPlace
    ) -> None:
        self.apply(op, control=(control, control_value))

    def _apply_bijection(self, op: Bijection, positions: list[int], rows) -> None:
        moduli = [self.registers[p].modulus for p in positions]
        validate = op.validate
        if validate is None:
            validate = math.prod(moduli) <= self.validate_limit
        if validate:
            check_bijection(op.f, moduli, vectorized=op.vectorized)
        before = self._values[rows][:, positions]
        after = _evaluate(op.f, [before[:, j] for j in range(len(positions))], op.vectorized, len(positions))
        for j, m in enumerate(moduli):
            if ((after[:, j] < 0) | (after[:, j] >= m)).any():
                raise NonReversibleMapError(f"map leaves the domain [0, {m})")
        if not validate:
            n_before = len(np.unique(_row_keys(before, moduli)))
            n_after = len(np.unique(_row_keys(after, moduli)))
            if n_before != n_after:
                raise NonReversibleMapError("map is not injective on the touched values")
        block = self._values[rows]
        block[:, positions] = after
        self._values[rows] = block

    def _apply_out_of_place(self, op: OutOfPlace, positions: list[int], rows) -> None:
        src_pos, dst_pos = positions[:-1], positions[-1]
        m = op.dst.modulus
        block = self._values[rows]
        value = _evaluate(op.f, [block[:, p] for p in src_pos], op.vectorized, 1)[:, 0]
        if ((value < 0) | (value >= m)).any():
            raise NonReversibleMapError(f"out-of-place value outside [0, {m})")
        block[:, dst_pos] = op.combine(block[:, dst_pos], value, m)
        self._values[rows] = block

    # -- measurement --------------------------------------------------------

    def marginal_arrays(self, reg: RegisterDescriptor) -> tuple[np.ndarray, np.ndarray]:
        """Sorted outcomes with nonzero probability and their probabilities."""
        col = self._values[:, self.position(reg)]
        weights = np.abs(self._amps) ** 2
        if reg.modulus <= 2**22:
            probs = np.bincount(col, weights=weights, minlength=reg.modulus)
            outcomes = np.nonzero(probs > 0)[0]
            return outcomes.astype(np.int64), probs[outcomes]
        outcomes, inv = np.unique(col, return_inverse=True)
        return outcomes, np.bincount(inv.ravel(), weights=weights)

    def marginal(self, reg: RegisterDescriptor) -> dict[int, float]:
        outcomes, probs = self.marginal_arrays(reg)
        return dict(zip(outcomes.tolist(), probs.tolist()))

    def measure(
        self, reg: RegisterDescriptor, rng: np.random.Generator | int | None, *, seed: int | None = None
    ) -> MeasurementRecord:
        """Sample ``reg`` from its exact marginal and project onto the outcome."""
        if rng is None or isinstance(rng, (int, np.integer)):
            seed = rng if seed is None else seed
            rng = np.random.default_rng(rng)
        outcomes, probs = self.marginal_arrays(reg)
        cdf = np.cumsum(probs)
        idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        idx = min(idx, len(outcomes) - 1)
        outcome = int(outcomes[idx])
        keep = self._values[:, self.position(reg)] == outcome
        self._values = self._values[keep]
        amps = self._amps[keep]
        self._amps = amps / math.sqrt(float(np.sum(np.abs(amps) ** 2)))
        self._prune()
        self._check_norm()
        return MeasurementRecord(reg.id, reg.label, outcome, outcomes, probs, seed)

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        order = np.lexsort(self._values.T[::-1]) if self._values.shape[1] else np.arange(len(self))
        return {
            "registers": [
                {"id": r.id, "modulus": r.modulus, "label": r.label} for r in self.registers
            ],
            "amplitudes": [
                [self._values[i].tolist(), float(self._amps[i].real), float(self._amps[i].imag)]
                for i in order
            ],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SparseState":
        state = cls()
        state.registers = [
            RegisterDescriptor(r["id"], r["modulus"], r["label"]) for r in d["registers"]
        ]
        state._next_id = max((r.id for r in state.registers), default=-1) + 1
        entries = d["amplitudes"]
        state._values = np.array([e[0] for e in entries], dtype=np.int64).reshape(
            len(entries), len(state.registers)
        )
        state._amps = np.array([complex(e[1], e[2]) for e in entries], dtype=np.complex128)
        return state

    # -- internals ----------------------------------------------------------

    def _prune(self) -> None:
        keep = np.abs(self._amps) >= self.prune
        if not keep.all():
            self._values = self._values[keep]
            self._amps = self._amps[keep]

    def _check_norm(self) -> None:
        n = self.norm()
        if abs(n - 1.0) > NORM_TOLERANCE:
            raise NormalizationError(f"state norm drifted to {n!r}")


def new_state(**kwargs) -> SparseState:
    return SparseState(**kwargs)


def check_bijection(f: Callable, moduli: Sequence[int], *, vectorized: bool = False) -> None:
    """Exhaustively confirm ``f`` permutes the product domain of ``moduli``."""
    grid = np.indices(tuple(moduli), dtype=np.int64).reshape(len(moduli), -1)
    cols = [grid[j] for j in range(len(moduli))]
    if vectorized:
        images = _evaluate(f, cols, True, len(moduli))
    else:
        rows = []
        for combo in zip(*(c.tolist() for c in cols)):
            img = f(*combo)
            rows.append(img if isinstance(img, tuple) else (img,))
        images = np.array(rows, dtype=np.int64).reshape(-1, len(moduli))
    for j, m in enumerate(moduli):
        if ((images[:, j] < 0) | (images[:, j] >= m)).any():
            raise NonReversibleMapError(f"map leaves the domain [0, {m})")
    if len(np.unique(_row_keys(images, moduli))) != images.shape[0]:
        raise NonReversibleMapError("map is not a bijection on its domain")


def inner_product(a: SparseState, b: SparseState) -> complex:
    if a.moduli != b.moduli:
        raise LayoutMismatchError(f"layouts differ: {a.moduli} vs {b.moduli}")
    ka = _row_keys(a._values, a.moduli)
    kb = _row_keys(b._values, b.moduli)
    _, ia, ib = np.intersect1d(ka, kb, assume_unique=True, return_indices=True)
    return complex(np.sum(np.conj(a._amps[ia]) * b._amps[ib]))


def fidelity(a: SparseState, b: SparseState) -> float:
    """|<a|b>|^2 for two states with the same register moduli."""
    return min(1.0, abs(inner_product(a, b)) ** 2)


def max_amplitude_difference(a: SparseState, b: SparseState) -> float:
    """Largest entrywise amplitude difference, treating missing tuples as zero."""
    da, db = a.amplitudes, b.amplitudes
    if a.moduli != b.moduli:
        raise LayoutMismatchError(f"layouts differ: {a.moduli} vs {b.moduli}")
    return max((abs(da.get(k, 0) - db.get(k, 0)) for k in da.keys() | db.keys()), default=0.0)

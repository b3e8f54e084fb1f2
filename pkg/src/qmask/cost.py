"""Gate-count model for the masked protocols and their conventional baselines.

Costs are in Toffoli-equivalent units.  Only the asymptotic shapes are fixed
here; every coefficient comes from a JSON preset (``cost_defaults.json`` by
default) that records where each number came from.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping

DEFAULTS_FILE = "cost_defaults.json"


@dataclass(frozen=True)
class CostConstants:
    values: Mapping[str, float]
    provenance: Mapping[str, str] = field(default_factory=dict)
    meta: Mapping = field(default_factory=dict)

    def __getitem__(self, name: str) -> float:
        return self.values[name]

    def replace(self, **overrides: float) -> "CostConstants":
        unknown = set(overrides) - set(self.values)
        if unknown:
            raise KeyError(f"unknown cost constants: {sorted(unknown)}")
        return CostConstants({**self.values, **overrides}, self.provenance, self.meta)


def load_constants(path: str | Path | None = None) -> CostConstants:
    if path is None:
        text = resources.files("qmask").joinpath(DEFAULTS_FILE).read_text()
    else:
        text = Path(path).read_text()
    doc = json.loads(text)
    consts = doc["constants"]
    meta = {k: v for k, v in doc.items() if k != "constants"}
    return CostConstants(
        {k: float(v["value"]) for k, v in consts.items()},
        {k: v["provenance"] for k, v in consts.items()},
        meta,
    )


DEFAULTS = load_constants()


def lg(x: float) -> float:
    return math.log2(x)


@dataclass(frozen=True)
class CostExpression:
    """A named cost formula with the constants it depends on."""

    name: str
    formula: str
    coefficient: str
    shape: Callable[..., float]

    def __call__(self, consts: CostConstants = DEFAULTS, **params) -> float:
        return consts[self.coefficient] * self.shape(**params)


QQ_MULT = CostExpression("qq_mult", "c_qq * n^2", "qq_mult", lambda n: n * n)
WINDOWED_MULT = CostExpression("windowed_mult", "c_cw * n^2 / lg n", "windowed_mult", lambda n: n * n / lg(n))
MASK_PREP = CostExpression("mask_prep", "c_prep * n^2 / lg n", "mask_prep", lambda n: n * n / lg(n))
EUCLID = CostExpression("euclid_inverse", "c_euclid * n^2", "euclid_inverse", lambda n: n * n)
SQUARE = CostExpression("square", "c_sq * n^2", "square", lambda n: n * n)
COMPARISON = CostExpression("comparison", "c_cmp * n", "comparison", lambda n: n)
TONELLI = CostExpression("tonelli_shanks", "c_ts * n^3", "tonelli_shanks", lambda n: n**3)
WINDOWED_ADDS = CostExpression(
    "windowed_adds", "c_wadd * m * N / lg N", "windowed_add", lambda m, N: m * N / lg(N)
)
SPARSE_MULTS = CostExpression("sparse_mults", "c_sparse * N * k", "sparse_mult", lambda N, k: N * k)
DENSE_MULTS = CostExpression("dense_mults", "c_dense * N * M", "dense_mult", lambda N, M: N * M)

EXPRESSIONS = {
    e.name: e
    for e in (
        QQ_MULT, WINDOWED_MULT, MASK_PREP, EUCLID, SQUARE, COMPARISON,
        TONELLI, WINDOWED_ADDS, SPARSE_MULTS, DENSE_MULTS,
    )
}


@dataclass
class CostBreakdown:
    name: str
    params: dict
    terms: dict[str, float]
    baseline_terms: dict[str, float] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)
    extras: dict[str, float] = field(default_factory=dict)

    @property
    def total(self) -> float:
        return sum(self.terms.values())

    @property
    def baseline(self) -> float | None:
        return sum(self.baseline_terms.values()) if self.baseline_terms else None

    @property
    def ratio(self) -> float | None:
        """Baseline cost over masked cost (> 1 means masking is cheaper)."""
        if self.baseline is None or self.total == 0:
            return None
        return self.baseline / self.total

    def row(self) -> dict:
        out = dict(self.params)
        out.update(self.terms)
        out["total"] = self.total
        if self.baseline_terms:
            out["baseline"] = self.baseline
            out["ratio"] = self.ratio
        out.update(self.extras)
        return out


def cost_masked_inverse(n: int, consts: CostConstants = DEFAULTS) -> CostBreakdown:
    if n < 8:
        raise ValueError(f"bit width must be >= 8, got {n}")
    return CostBreakdown(
        "inverse",
        {"n": n},
        {
            "mask_preparation": MASK_PREP(consts, n=n),
            "masked_multiply": QQ_MULT(consts, n=n),
            "unmask_multiplies": 2 * WINDOWED_MULT(consts, n=n),
        },
        {"euclid_inverse": EUCLID(consts, n=n)},
        {"qq_multiply": 1, "windowed_multiply": 2},
    )


def cost_euclid_inverse(n: int, consts: CostConstants = DEFAULTS) -> float:
    return EUCLID(consts, n=n)


def cost_masked_sqrt(n: int, clear_input: bool = True, consts: CostConstants = DEFAULTS) -> CostBreakdown:
    """Square roots: masked itemization against naive quantum Tonelli-Shanks.

    Without input clearing one square is dropped and the Euclid inversion is
    replaced by a masked inversion.
    """
    if n < 8:
        raise ValueError(f"bit width must be >= 8, got {n}")
    squares = 2 if clear_input else 1
    terms = {
        "mask_preparation": MASK_PREP(consts, n=n),
        "modular_squares": squares * SQUARE(consts, n=n),
        "classical_quantum_multiplies": 2 * WINDOWED_MULT(consts, n=n),
    }
    counts = {"modular_square": squares, "classical_quantum_multiply": 2, "comparison": 1}
    if clear_input:
        terms["modular_inversion"] = EUCLID(consts, n=n)
        counts["modular_inversion"] = 1
    else:
        terms["masked_inversion"] = cost_masked_inverse(n, consts).total
        counts["masked_inversion"] = 1
    terms["comparison"] = COMPARISON(consts, n=n)
    return CostBreakdown(
        "sqrt", {"n": n, "clear_input": clear_input}, terms,
        {"tonelli_shanks": TONELLI(consts, n=n)}, counts,
    )


def power_chain_length(k: int) -> int:
    """Multiplications in left-to-right square-and-multiply for x**k."""
    if k < 1:
        raise ValueError(f"exponent must be >= 1, got {k}")
    return (k.bit_length() - 1) + bin(k).count("1") - 1


def cost_masked_kth_root(n: int, k: int, consts: CostConstants = DEFAULTS) -> CostBreakdown:
    """k-th roots: the r^k chain is computed and uncomputed, scaled by the pebbling knob."""
    if n < 8:
        raise ValueError(f"bit width must be >= 8, got {n}")
    chain = power_chain_length(k)
    return CostBreakdown(
        "kth-root",
        {"n": n, "k": k},
        {
            "mask_preparation": MASK_PREP(consts, n=n),
            "power_chain": 2 * chain * consts["pebbling_depth"] * QQ_MULT(consts, n=n),
            "masked_multiply": QQ_MULT(consts, n=n),
            "unmask_multiplies": 2 * WINDOWED_MULT(consts, n=n),
        },
        counts={"power_chain_multiply": 2 * chain, "qq_multiply": 1, "windowed_multiply": 2},
    )


def rines_chuang_additions(n: int, b: int) -> list[int]:
    """Widths of the 2(n - floor(lg b)) additions in the baseline divider."""
    ell = b.bit_length() - 1
    steps = max(0, n - ell)
    return [n - i for i in range(steps) for _ in range(2)]


def cost_masked_divmod(n: int, m: int, b: int, consts: CostConstants = DEFAULTS) -> CostBreakdown:
    if m < n:
        raise ValueError(f"mask width m={m} must be at least n={n}")
    if b < 2:
        raise ValueError(f"divisor must be >= 2, got {b}")
    N = m + b.bit_length() - 1
    adds = rines_chuang_additions(n, b)
    return CostBreakdown(
        "divmod",
        {"n": n, "m": m, "b": b, "N": N},
        {"windowed_additions": WINDOWED_ADDS(consts, m=m, N=N)},
        {"baseline_additions": consts["plain_add"] * sum(adds)} if adds else {"baseline_additions": 0.0},
        {"baseline_addition_count": len(adds), "masked_addition_count": m},
    )


def divmod_crossover(m_per_n: float, b: int, consts: CostConstants = DEFAULTS, n_max: int = 2**16) -> int | None:
    """Smallest n with m = ceil(m_per_n * n) at which masking beats the baseline."""
    for n in range(max(2, b.bit_length()), n_max + 1):
        c = cost_masked_divmod(n, max(n, math.ceil(m_per_n * n)), b, consts)
        if c.baseline and c.total < c.baseline:
            return n
    return None


def cost_masked_sparse(N: int, M: int, k: int, consts: CostConstants = DEFAULTS) -> CostBreakdown:
    if not 0 <= k <= M:
        raise ValueError(f"sparsity k={k} must lie in [0, M={M}]")
    masked = SPARSE_MULTS(consts, N=N, k=k)
    dense = DENSE_MULTS(consts, N=N, M=M)
    return CostBreakdown(
        "sparse",
        {"N": N, "M": M, "k": k},
        {"sparse_multiplies": masked},
        {"dense_multiplies": dense},
        extras={"savings": dense - masked},
    )


COST_FUNCTIONS = {
    "inverse": cost_masked_inverse,
    "sqrt": cost_masked_sqrt,
    "kth-root": cost_masked_kth_root,
    "divmod": cost_masked_divmod,
    "sparse": cost_masked_sparse,
}


# -- tables -----------------------------------------------------------------


@dataclass
class Table:
    title: str
    columns: list[str]
    rows: list[list]

    @classmethod
    def from_breakdowns(cls, title: str, items: list[CostBreakdown]) -> "Table":
        dicts = [c.row() for c in items]
        columns: list[str] = []
        for d in dicts:
            columns.extend(k for k in d if k not in columns)
        return cls(title, columns, [[d.get(c) for c in columns] for d in dicts])

    def column(self, name: str) -> list:
        j = self.columns.index(name)
        return [r[j] for r in self.rows]

    def to_dict(self) -> dict:
        return {"title": self.title, "columns": self.columns, "rows": self.rows}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Table":
        return cls(d["title"], list(d["columns"]), [list(r) for r in d["rows"]])

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Table":
        return cls.from_dict(json.loads(text))

    def to_csv(self) -> str:
        lines = [",".join(self.columns)]
        for r in self.rows:
            lines.append(",".join("" if v is None else repr(v) if isinstance(v, float) else str(v) for v in r))
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        def fmt(v):
            if isinstance(v, float):
                return f"{v:.6g}"
            return "" if v is None else str(v)

        cells = [self.columns] + [[fmt(v) for v in r] for r in self.rows]
        widths = [max(len(row[j]) for row in cells) for j in range(len(self.columns))]
        out = [self.title]
        for i, row in enumerate(cells):
            out.append("  ".join(c.rjust(w) for c, w in zip(row, widths)))
            if i == 0:
                out.append("  ".join("-" * w for w in widths))
        return "\n".join(out) + "\n"

"""Command-line entry point: ``qmask run | verify | cost``.

Exit codes: 0 success, 1 protocol or verification failure, 2 usage error.

Trials fan out with seeds ``seed, seed+1, ...`` and run in worker processes;
``QMASK_WORKERS`` caps the pool size.  Each trial writes its own trace file,
the summary is assembled after all trials finish.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from qmask import classical as cl
from qmask import cost
from qmask.errors import MaskingError
from qmask.groups import group_vector_gf, group_zp_star, hom_identity, hom_matrix, hom_power
from qmask.protocols import PROTOCOLS, InputSpec

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
WORKERS_ENV = "QMASK_WORKERS"
HUMAN_STATE_LINES = 16


class UsageError(Exception):
    """Bad configuration; reported with the offending field and exit code 2."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


# -- parsing helpers ------------------------------------------------------------


def _split_top(text: str) -> list[str]:
    """Split on commas that are not inside [...]."""
    parts, depth, cur = [], 0, ""
    for ch in text:
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append(cur)
            cur = ""
        else:
            cur += ch
    parts.append(cur)
    return [p.strip() for p in parts if p.strip()]


def parse_input(text: str, modulus: int, domain: list[int], vector: tuple[int, int] | None = None) -> InputSpec:
    """Input grammar.

    ``all-basis`` is the equal superposition over the whole valid domain.
    Otherwise a comma list of values, each optionally ``value:amplitude``.
    Without amplitudes the listed values get equal weight.  With ``vector``
    set to ``(p, n)`` values are written ``[d0 d1 ...]``.
    """
    text = text.strip()
    if text == "all-basis":
        return InputSpec.uniform(domain, modulus)
    amps: dict[int, complex] = {}
    weighted = None
    for token in _split_top(text):
        value_text, sep, amp_text = token.rpartition(":") if token.rfind(":") > token.rfind("]") else (token, "", "")
        if weighted is None:
            weighted = bool(sep)
        elif weighted != bool(sep):
            raise UsageError("--input", "either every value has an amplitude or none does")
        if vector is not None:
            m = re.fullmatch(r"\[([-\d\s]*)\]", value_text.strip())
            if not m:
                raise UsageError("--input", f"expected a vector like [1 2], got {value_text!r}")
            digits = [int(d) for d in m.group(1).split()]
            if len(digits) != vector[1]:
                raise UsageError("--input", f"vector {value_text} has {len(digits)} entries, need {vector[1]}")
            value = cl.encode_vector(digits, vector[0])
        else:
            try:
                value = int(value_text)
            except ValueError:
                raise UsageError("--input", f"not an integer: {value_text!r}") from None
        try:
            amps[value] = complex(amp_text.replace("i", "j")) if sep else 1.0
        except ValueError:
            raise UsageError("--input", f"bad amplitude {amp_text!r}") from None
    if not amps:
        raise UsageError("--input", "empty input")
    if not weighted:
        amps = {v: 1 / math.sqrt(len(amps)) for v in amps}
    try:
        return InputSpec(modulus, amps)
    except MaskingError as exc:
        raise UsageError("--input", str(exc)) from None


def read_matrix_file(path: str | Path) -> cl.SparseMatrixGF:
    """Coordinate list: a header line ``N M p`` then ``row col value`` lines; ``#`` comments."""
    lines = [ln.split("#", 1)[0].split() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines or len(lines[0]) != 3:
        raise UsageError("--matrix", f"{path}: missing 'N M p' header")
    N, M, p = (int(x) for x in lines[0])
    if N < 1 or M < 1 or not cl.is_prime(p):
        raise UsageError("--matrix", f"{path}: bad header {N} {M} {p} (need N, M >= 1 and p prime)")
    entries = []
    for ln in lines[1:]:
        if len(ln) != 3:
            raise UsageError("--matrix", f"{path}: expected 'row col value', got {' '.join(ln)!r}")
        i, j, v = (int(x) for x in ln)
        if v % p:
            entries.append((i, j, v % p))
    try:
        return cl.SparseMatrixGF(N, M, p, tuple(entries))
    except ValueError as exc:
        raise UsageError("--matrix", str(exc)) from None


def write_matrix_file(A: cl.SparseMatrixGF, path: str | Path) -> None:
    body = "".join(f"{i} {j} {v}\n" for i, j, v in A.entries)
    Path(path).write_text(f"{A.rows} {A.cols} {A.p}\n{body}")


def parse_sweep(text: str, name: str) -> list[int]:
    """``a..b`` doubles from a up to b; otherwise a comma list."""
    try:
        if ".." in text:
            lo, hi = (int(x) for x in text.split(".."))
            if lo < 1 or hi < lo:
                raise UsageError(f"--{name}", f"invalid range {text!r}")
            out = []
            while lo <= hi:
                out.append(lo)
                lo *= 2
            return out
        return [int(x) for x in text.split(",")]
    except ValueError:
        raise UsageError(f"--{name}", f"cannot parse {text!r}") from None


# -- run ------------------------------------------------------------------------


def _need(args, name: str, protocol: str):
    value = getattr(args, name)
    if value is None:
        raise UsageError(f"--{name}", f"required for {protocol}")
    return value


@dataclass
class RunPlan:
    """A protocol call with everything resolved except the seed."""

    protocol: str
    spec: InputSpec
    kwargs: dict

    def __call__(self, seed: int):
        fn = PROTOCOLS[self.protocol]
        if self.protocol in ("masked-sparse-solve", "masked-hom-inverse"):
            return fn(self.spec, self.kwargs["obj"], seed=seed)
        return fn(self.spec, seed=seed, **self.kwargs)


def _matrix_from_args(args, p: int, n: int) -> cl.SparseMatrixGF:
    source = args.matrix or "random"
    if source == "random":
        return cl.random_sparse_invertible(n, p, np.random.default_rng(args.seed), weight=args.weight)
    A = read_matrix_file(source)
    if A.p != p or A.rows != n or A.cols != n:
        raise UsageError("--matrix", f"expected a {n}x{n} matrix mod {p}, got {A.rows}x{A.cols} mod {A.p}")
    return A


def build_plan(args) -> RunPlan:
    """Resolve and type-check every parameter before any state is built."""
    proto = args.protocol
    try:
        if proto in ("masked-mod-inverse", "masked-mod-inverse-zero-safe", "masked-sqrt", "masked-kth-root"):
            p = _need(args, "p", proto)
            odd = proto in ("masked-sqrt", "masked-kth-root")
            if not cl.is_prime(p) or (odd and p == 2):
                raise UsageError("--p", f"{p} is not {'an odd' if odd else 'a'} prime")
        if proto == "masked-mod-inverse":
            spec = parse_input(args.input, p, list(range(1, p)))
            return RunPlan(proto, spec, {"p": p})
        if proto == "masked-mod-inverse-zero-safe":
            spec = parse_input(args.input, p, list(range(p)))
            return RunPlan(proto, spec, {"p": p, "zero_image": args.zero_image})
        if proto == "masked-mod-inverse-composite":
            n = _need(args, "n", proto)
            fac = [int(x) for x in _need(args, "factorization", proto).split(",")]
            spec = parse_input(args.input, n, list(range(1, n)))
            return RunPlan(proto, spec, {"n": n, "factorization": fac})
        if proto == "masked-sqrt":
            residues = [a for a in range(1, p) if cl.euler_is_residue(a, p)]
            spec = parse_input(args.input, p, residues)
            return RunPlan(proto, spec, {"p": p, "mode": args.mode})
        if proto == "masked-kth-root":
            k = _need(args, "k", proto)
            spec = parse_input(args.input, p, list(range(1, p)))
            return RunPlan(proto, spec, {"p": p, "k": k, "mode": args.mode})
        if proto == "masked-sparse-solve":
            p, n = _need(args, "p", proto), _need(args, "n", proto)
            A = _matrix_from_args(args, p, n)
            spec = parse_input(args.input, p**n, list(range(p**n)), vector=(p, n))
            return RunPlan(proto, spec, {"obj": A, "p": p, "n": n})
        if proto == "masked-hom-inverse":
            group = _need(args, "group", proto)
            kind, *nums = group.split(":")
            nums = [int(x) for x in nums]
            if kind == "zp-star" and len(nums) == 1:
                G = group_zp_star(nums[0])
                hom = hom_power(G, args.k) if args.k else hom_identity(G)
                spec = parse_input(args.input, G.carrier, G.support)
            elif kind == "vector-gf" and len(nums) == 2:
                p, n = nums
                G = group_vector_gf(p, n)
                hom = hom_matrix(G, _matrix_from_args(args, p, n))
                spec = parse_input(args.input, G.carrier, G.support, vector=(p, n))
            else:
                raise UsageError("--group", f"expected zp-star:p or vector-gf:p:n, got {group!r}")
            return RunPlan(proto, spec, {"obj": hom, "group": group, "f": hom.name})
        if proto == "masked-divmod":
            n, b, m = (_need(args, x, proto) for x in ("n", "b", "m"))
            if b < 1:
                raise UsageError("--b", "divisor must be >= 1")
            if m < n:
                raise UsageError("--m", f"must be at least n={n}")
            spec = parse_input(args.input, 2**n, list(range(2**n)))
            return RunPlan(proto, spec, {"b": b, "m": m})
    except UsageError:
        raise
    except (MaskingError, ValueError) as exc:
        raise UsageError(proto, str(exc)) from None
    raise UsageError("protocol", f"unknown protocol {proto!r}")


def format_state(state, digits: int = 6) -> str:
    """One ``amplitude |v1>|v2>...`` line per basis entry, sorted."""
    lines = []
    for key, amp in sorted(state.amplitudes.items()):
        a = f"{amp.real:.{digits}f}" if abs(amp.imag) < 10**-digits else f"({amp.real:.{digits}f}{amp.imag:+.{digits}f}j)"
        lines.append(f"{a} " + "".join(f"|{v}⟩" for v in key))
    return "\n".join(lines)


def _uniformity_residual(record) -> float:
    probs = record.probabilities[record.probabilities > 0]
    return float(np.max(np.abs(probs - 1 / len(probs))))


def _run_trial(plan: RunPlan, seed: int, out: str | None, first: bool) -> dict:
    from qmask import trace

    result = plan(seed)
    if out:
        Path(out, f"trace-{seed}.json").write_text(trace.emit(trace.build_trace(result)))
        if first:
            from qmask.plotting import plot_marginal

            plot_marginal(result.measurement, Path(out, f"marginal-{seed}.png"), f"{plan.protocol}, seed {seed}")
    return {
        "seed": seed,
        "success": bool(result.success),
        "fidelity": float(result.fidelity),
        "residual": _uniformity_residual(result.measurement),
        "damage_probability": result.damage_probability,
        "final_state": format_state(result.final_state) if first else None,
    }



_WORKER_PLAN: RunPlan | None = None


def _init_worker(args) -> None:
    # plans may hold closures, so each worker rebuilds its own from the args
    global _WORKER_PLAN
    _WORKER_PLAN = build_plan(args)


def _worker_trial(seed: int, out: str | None, first: bool) -> dict:
    return _run_trial(_WORKER_PLAN, seed, out, first)


def _workers(trials: int) -> int:
    cap = os.environ.get(WORKERS_ENV)
    n = os.cpu_count() or 1
    if cap:
        try:
            n = max(1, int(cap))
        except ValueError:
            raise UsageError(WORKERS_ENV, f"not an integer: {cap!r}") from None
    return min(n, trials)


def cmd_run(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials", "must be >= 1")
    plan = build_plan(args)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
    seeds = [args.seed + i for i in range(args.trials)]
    workers = _workers(len(seeds))
    firsts = [i == 0 for i in range(len(seeds))]
    outs = [args.out] * len(seeds)
    try:
        if workers == 1:
            rows = [_run_trial(plan, s, o, f) for s, o, f in zip(seeds, outs, firsts)]
        else:
            with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(args,)) as pool:
                rows = list(pool.map(_worker_trial, seeds, outs, firsts))
    except MaskingError as exc:
        print(f"protocol error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    rows.sort(key=lambda r: r["seed"])
    successes = sum(r["success"] for r in rows)
    fids = [r["fidelity"] for r in rows if r["success"]]
    summary = {
        "protocol": plan.protocol,
        "params": {k: v for k, v in plan.kwargs.items() if k != "obj"},
        "seeds": [seeds[0], seeds[-1]],
        "trials": len(rows),
        "successes": successes,
        "success_rate": successes / len(rows),
        "mean_fidelity": float(np.mean(fids)) if fids else None,
        "marginal_uniformity_residual": max(r["residual"] for r in rows),
        "final_state": rows[0]["final_state"],
    }
    damages = [r["damage_probability"] for r in rows if r["damage_probability"] is not None]
    if damages:
        summary["exact_damage_probability"] = damages[0]
    if args.out:
        Path(args.out, "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    if args.format == "structured":
        print(json.dumps(summary, indent=1, sort_keys=True))
    else:
        fid = "n/a" if summary["mean_fidelity"] is None else f"{summary['mean_fidelity']:.12g}"
        print(f"protocol      {plan.protocol}")
        print(f"success       {successes}/{len(rows)} ({summary['success_rate']:.4f})")
        print(f"fidelity      {fid}")
        print(f"uniformity    {summary['marginal_uniformity_residual']:.3e}")
        if damages:
            print(f"exact damage  {damages[0]:.6g}")
        print(f"final state (seed {seeds[0]}):")
        listing = summary["final_state"].splitlines()
        print("\n".join(listing[:HUMAN_STATE_LINES]))
        if len(listing) > HUMAN_STATE_LINES:
            print(f"... ({len(listing) - HUMAN_STATE_LINES} more entries; see the trace)")
    ok = successes == len(rows) or plan.protocol in ("masked-divmod", "masked-mod-inverse-composite")
    return EXIT_OK if ok else EXIT_FAIL


# -- verify ---------------------------------------------------------------------


def cmd_verify(args) -> int:
    from qmask.verify import run_verification

    try:
        report = run_verification(args.scope, args.budget)
    except ValueError as exc:
        raise UsageError("scope", str(exc)) from None
    text = json.dumps(report.to_dict(), indent=1) + "\n" if args.format == "structured" else report.to_text()
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK if report.ok else EXIT_FAIL


# -- cost -----------------------------------------------------------------------


def _load_cost_config(path: str | None) -> cost.CostConstants:
    if path is None:
        return cost.DEFAULTS
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise UsageError("--config", str(exc)) from None
    values = doc.get("constants", doc)
    values = {k: float(v["value"] if isinstance(v, dict) else v) for k, v in values.items()}
    try:
        return cost.DEFAULTS.replace(**values)
    except KeyError as exc:
        raise UsageError("--config", str(exc)) from None


def cost_table(args) -> tuple[cost.Table, str]:
    consts = _load_cost_config(args.config)
    kind = args.table
    sweeps: dict[str, list[int]] = {}
    for name in ("n", "m", "b", "k", "N", "M"):
        text = getattr(args, name)
        if text is not None:
            sweeps[name] = parse_sweep(text, name)
    swept = [k for k, v in sweeps.items() if len(v) > 1]
    if len(swept) > 1:
        raise UsageError("--" + swept[1], "only one parameter may be swept")
    x = swept[0] if swept else None

    def single(name, default=None):
        if name in sweeps:
            return sweeps[name]
        if default is None:
            raise UsageError(f"--{name}", f"required for cost {kind}")
        return [default]

    points: list[cost.CostBreakdown] = []
    try:
        if kind in ("inverse", "sqrt"):
            for n in single("n"):
                points.append(
                    cost.cost_masked_inverse(n, consts)
                    if kind == "inverse"
                    else cost.cost_masked_sqrt(n, not args.keep_input, consts)
                )
            x = x or "n"
        elif kind == "kth-root":
            for n in single("n"):
                for k in single("k"):
                    points.append(cost.cost_masked_kth_root(n, k, consts))
            x = x or "n"
        elif kind == "divmod":
            for n in single("n"):
                for b in single("b", 5):
                    for m in sweeps.get("m", [2 * n]):
                        points.append(cost.cost_masked_divmod(n, m, b, consts))
            x = x or "n"
        elif kind == "sparse":
            for N in single("N"):
                for M in single("M"):
                    for k in single("k"):
                        points.append(cost.cost_masked_sparse(N, M, k, consts))
            x = x or "N"
    except ValueError as exc:
        raise UsageError(kind, str(exc)) from None
    return cost.Table.from_breakdowns(f"cost {kind}", points), x


def cmd_cost(args) -> int:
    table, x = cost_table(args)
    fmt = args.format
    render = {"human": table.to_text, "structured": lambda: table.to_json() + "\n", "csv": table.to_csv}
    text = render[fmt]()
    if args.out:
        out = Path(args.out)
        suffix = out.suffix.lower()
        file_text = {".json": lambda: table.to_json() + "\n", ".csv": table.to_csv}.get(suffix, lambda: text)()
        out.write_text(file_text)
        from qmask.plotting import plot_cost_table

        plot_cost_table(table, x, out.with_suffix(".png"))
    sys.stdout.write(text)
    return EXIT_OK


# -- argument parser ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qmask", description="Superposition-masking protocols on a sparse simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--trials", type=int, default=1)
    common.add_argument("--out", default=None)

    run = sub.add_parser("run", parents=[common], help="run a masked protocol")
    run.add_argument("protocol", choices=sorted(PROTOCOLS))
    run.add_argument("--input", required=True, help='"3", "3,5", "3:0.6,5:0.8", "[1 2]" or all-basis')
    run.add_argument("--p", type=int)
    run.add_argument("--n", type=int, help="bit width (divmod), modulus (composite) or dimension (sparse)")
    run.add_argument("--k", type=int)
    run.add_argument("--b", type=int)
    run.add_argument("--m", type=int)
    run.add_argument("--mode", choices=("keep", "replace"), default="keep")
    run.add_argument("--factorization", help="comma-separated primes, e.g. 3,5")
    run.add_argument("--zero-image", type=int, default=0)
    run.add_argument("--matrix", help="coordinate-list file or 'random'")
    run.add_argument("--weight", type=int, default=2, help="row weight of random matrices")
    run.add_argument("--group", help="zp-star:p or vector-gf:p:n")
    run.add_argument("--format", choices=("human", "structured"), default="human")
    run.set_defaults(func=cmd_run)

    ver = sub.add_parser("verify", help="run the property suites")
    ver.add_argument("scope", nargs="?", default="all")
    ver.add_argument("--budget", type=float, default=None, help="seconds")
    ver.add_argument("--out", default=None)
    ver.add_argument("--format", choices=("human", "structured"), default="human")
    ver.set_defaults(func=cmd_verify)

    cst = sub.add_parser("cost", help="emit a cost comparison table")
    cst.add_argument("table", choices=sorted(cost.COST_FUNCTIONS))
    for name in ("n", "m", "b", "k", "N", "M"):
        cst.add_argument(f"--{name}", default=None, help="value, comma list, or a..b (doubling)")
    cst.add_argument("--keep-input", action="store_true", help="sqrt without clearing the input")
    cst.add_argument("--config", default=None, help="JSON with constant overrides")
    cst.add_argument("--out", default=None, help="table file (.json/.csv/.txt); a .png is written next to it")
    cst.add_argument("--format", choices=("human", "structured", "csv"), default="human")
    cst.set_defaults(func=cmd_cost)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"qmask {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Structured protocol traces (JSON), one document per run.

Field reference (all keys always present):

``format``            ``"qmask-trace/1"``
``protocol``          protocol name, e.g. ``"masked-mod-inverse"``
``params``            protocol parameters (p, k, b, m, ...)
``seed``              integer seed the run's generator was built from
``steps``             ordered list of step names as executed
``measurements``      list of ``{register, label, outcome, seed, marginal}``;
                      ``marginal`` is the exact pre-measurement distribution
                      as sorted ``[value, probability]`` pairs
``byproducts``        classical values computed from the measurement
``success``           bool
``tag``               projection tag (composite inversion) or null
``damage_probability`` exact damaging-outcome probability (division) or null
``discard_residuals`` ``[label, residual]`` for every register discarded, in
                      order; each is below 1e-9 or the run would have failed
``fidelity``          ``|<final|ideal>|^2``
``final_state``       ``{registers: [{id, modulus, label}],
                      amplitudes: [[tuple, re, im], ...]}`` sorted by tuple

Serialization uses sorted keys and a fixed indent so traces diff cleanly and
identical runs produce identical bytes.
"""

from __future__ import annotations

import json
from typing import Any

import numpy as np

from qmask.protocols import ProtocolResult

FORMAT = "qmask-trace/1"


def _jsonable(x: Any) -> Any:
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def build_trace(result: ProtocolResult) -> dict:
    return _jsonable(
        {
            "format": FORMAT,
            "protocol": result.protocol,
            "params": result.params,
            "seed": result.seed,
            "steps": result.steps,
            "measurements": [m.to_dict() for m in result.transcript],
            "byproducts": result.byproducts,
            "success": result.success,
            "tag": result.tag,
            "damage_probability": result.damage_probability,
            "discard_residuals": [[label, float(r)] for label, r in result.discard_residuals],
            "fidelity": result.fidelity,
            "final_state": result.final_state.to_dict(),
        }
    )


def emit(trace: dict) -> str:
    return json.dumps(trace, indent=1, sort_keys=True) + "\n"


def parse(text: str) -> dict:
    doc = json.loads(text)
    if doc.get("format") != FORMAT:
        raise ValueError(f"not a {FORMAT} document")
    return doc

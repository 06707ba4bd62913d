"""Result documents: JSON serialization and the shipped schema.

Complex numbers are always written as ``[re, im]`` pairs.
"""

from __future__ import annotations

import json
import math
from importlib import resources

from .hybrid_state import HybridState, StateError, schmidt_coefficients
from .protocols import ProtocolResult

SCHEMA_ID = "xpmqudit.result/1"


def cpair(z: complex) -> list[float]:
    z = complex(z)
    return [z.real, z.imag]


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def state_to_json(state: HybridState | None):
    if state is None:
        return None
    return [
        {
            "coeff": cpair(t.coeff),
            "ket_a": [t.ket_a.dim, t.ket_a.index],
            "ket_b": [t.ket_b.dim, t.ket_b.index],
            "bus": [cpair(b) for b in t.bus],
        }
        for t in state.terms
    ]


def _schmidt(state: HybridState | None):
    if state is None:
        return None
    try:
        return schmidt_coefficients(state, trace_bus=True)
    except StateError:
        return None


def result_to_json(result: ProtocolResult, min_probability: float = 0.0) -> dict:
    branches, omitted = [], 0.0
    for br in result.branches:
        if br.probability < min_probability:
            omitted += br.probability
            continue
        branches.append(
            {
                "label": br.label,
                "outcome": list(br.outcome),
                "probability": br.probability,
                "corrections": br.corrections,
                "fidelity": _num(br.fidelity),
                "schmidt_coefficients": _schmidt(br.state),
                "state": state_to_json(br.state),
            }
        )
    doc = {
        "protocol": result.protocol,
        "success_probability": result.success_probability,
        "ideal_success_probability": _num(result.ideal_success_probability),
        "error_probability": {
            "computed": _num(result.error_probability),
            "quoted_reference": _num(result.error_probability_quoted),
        },
        "total_probability": result.total_probability,
        "tail_mass": result.tail_mass,
        "family_probabilities": result.family_probabilities(),
        "branch_entropy": result.branch_entropy(),
        "omitted_probability": omitted,
        "branches": branches,
        "trajectory": None,
    }
    if result.trajectory_counts is not None:
        probs = {br.outcome: br.probability for br in result.branches}
        trials = sum(result.trajectory_counts.values())
        doc["trajectory"] = {
            "trials": trials,
            "counts": [
                {"outcome": list(o), "count": c, "expected": probs[o] * trials}
                for o, c in result.trajectory_counts.items()
            ],
        }
    return doc


def dumps(doc: dict) -> str:
    # repr-based float output is the shortest exact round trip, hence stable.
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def load_schema() -> dict:
    return json.loads(resources.files("xpmqudit").joinpath("result.schema.json").read_text())


def validate(doc: dict):
    import jsonschema

    jsonschema.validate(doc, load_schema())

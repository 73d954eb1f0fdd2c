"""JSON problem files: conic data for every admissible commutation plus the domain."""

from __future__ import annotations

import json

import jsonschema
import numpy as np

from .conic import Cone
from .geometry import PolytopeV
from .problem import CommutationSpace, FixedCommutationProgram, ProblemTemplate

_MATRIX = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}
_VECTOR = {"type": "array", "items": {"type": "number"}}

PROGRAM_SCHEMA = {
    "type": "object",
    "required": ["cost", "equality", "conic"],
    "properties": {
        "n": {"type": "integer", "minimum": 0},
        "cost": {"type": "object", "required": ["c_x", "c_theta", "c_0"],
                 "properties": {"c_x": _VECTOR, "c_theta": _VECTOR, "c_0": {"type": "number"}}},
        "equality": {"type": "object", "required": ["A_x", "A_theta", "b"],
                     "properties": {"A_x": _MATRIX, "A_theta": _MATRIX, "b": _VECTOR}},
        "conic": {"type": "object", "required": ["H_x", "H_theta", "h", "cones"],
                  "properties": {
                      "H_x": _MATRIX, "H_theta": _MATRIX, "h": _VECTOR,
                      "cones": {"type": "array", "items": {
                          "type": "object", "required": ["type", "dim"],
                          "properties": {"type": {"enum": ["zero", "nonneg", "soc"]},
                                         "dim": {"type": "integer", "minimum": 1}}}}}},
    },
}

PROBLEM_SCHEMA = {
    "type": "object",
    "required": ["p", "n", "m", "domain", "commutations"],
    "properties": {
        "label": {"type": "string"},
        "p": {"type": "integer", "minimum": 1},
        "n": {"type": "integer", "minimum": 0},
        "m": {"type": "integer", "minimum": 0},
        "domain": _MATRIX,
        "output_index": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "commutations": {"type": "array", "minItems": 1, "items": {
            "type": "object", "required": ["delta", "program"],
            "properties": {"delta": {"type": "array", "items": {"enum": [0, 1]}},
                           "program": PROGRAM_SCHEMA}}},
    },
}


def _mat(rows, ncols) -> np.ndarray:
    a = np.asarray(rows, dtype=float)
    return a.reshape(-1, ncols) if a.size == 0 else a


def program_from_dict(d: dict, p: int) -> FixedCommutationProgram:
    jsonschema.validate(d, PROGRAM_SCHEMA)
    c_x = np.asarray(d["cost"]["c_x"], dtype=float)
    n = c_x.shape[0]
    eq, con = d["equality"], d["conic"]
    return FixedCommutationProgram(
        c_x, np.asarray(d["cost"]["c_theta"], dtype=float), float(d["cost"]["c_0"]),
        _mat(eq["A_x"], n), _mat(eq["A_theta"], p), np.asarray(eq["b"], dtype=float),
        _mat(con["H_x"], n), _mat(con["H_theta"], p), np.asarray(con["h"], dtype=float),
        tuple(Cone(c["type"], c["dim"]) for c in con["cones"]))


def template_to_dict(template: ProblemTemplate) -> dict:
    out = {
        "label": template.label,
        "p": template.p,
        "n": template.n,
        "m": template.m,
        "domain": template.parameter_domain.vertices.tolist(),
        "commutations": [{"delta": list(d), "program": template.program(d).to_dict()}
                         for d in template.commutations],
    }
    if template.output_index is not None:
        out["output_index"] = list(template.output_index)
    return out


def template_from_dict(d: dict) -> ProblemTemplate:
    jsonschema.validate(d, PROBLEM_SCHEMA)
    p = d["p"]
    programs = {tuple(c["delta"]): program_from_dict(c["program"], p) for c in d["commutations"]}
    space = CommutationSpace(d["m"], tuple(programs))
    oi = d.get("output_index")
    return ProblemTemplate(p=p, n=d["n"], commutations=space, instantiator=programs.__getitem__,
                           parameter_domain=PolytopeV(np.asarray(d["domain"], dtype=float)),
                           label=d.get("label", ""), output_index=None if oi is None else tuple(oi))


def dump_problem(template: ProblemTemplate, path):
    with open(path, "w") as fh:
        json.dump(template_to_dict(template), fh)


def load_problem(path) -> ProblemTemplate:
    with open(path) as fh:
        return template_from_dict(json.load(fh))

"""Versioned JSON files holding a trained cut pool.

Layout (version 1)::

    {"format": "microgrid-ems-policy", "version": 1,
     "discount": 0.7, "cyclic": true, "state_labels": ["battery[0]", ...],
     "nodes": [{"hours": 6, "cuts": [{"alpha": 1.0, "beta": [...], "iteration": 0}, ...]}, ...],
     "lower_bound": [...]}

Cuts are stored already discounted, exactly as they enter the epigraph rows.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple, Union

import numpy as np

from .sddp import Cut, CutPool, SDDPPolicy
from .system import ValidationError

FORMAT = "microgrid-ems-policy"
VERSION = 1


def policy_document(policy: SDDPPolicy) -> Dict[str, Any]:
    return {
        "format": FORMAT,
        "version": VERSION,
        "discount": policy.graph.discount,
        "cyclic": policy.graph.cyclic,
        "state_labels": list(policy.state_labels),
        "nodes": [
            {
                "hours": node.hours,
                "cuts": [
                    {"alpha": float(c.alpha), "beta": [float(b) for b in c.beta], "iteration": int(c.iteration)}
                    for c in cuts
                ],
            }
            for node, cuts in zip(policy.graph.nodes, policy.pool.cuts)
        ],
        "lower_bound": [float(v) for v in policy.log.lower_bound],
    }


def save_policy(policy: SDDPPolicy, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(policy_document(policy), indent=1) + "\n")


def load_policy(path: Union[str, Path]) -> Tuple[CutPool, Dict[str, Any]]:
    """Read a policy file; returns the cut pool and the document's metadata."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError([f"{path}: not a JSON document ({exc})"]) from None
    if doc.get("format") != FORMAT:
        raise ValidationError([f"{path}: not a policy file"])
    if doc.get("version") != VERSION:
        raise ValidationError([f"{path}: unsupported policy version {doc.get('version')!r}"])
    n_state = len(doc["state_labels"])
    cuts: List[List[Cut]] = []
    for i, node in enumerate(doc["nodes"]):
        row = []
        for c in node["cuts"]:
            beta = np.asarray(c["beta"], dtype=float)
            if beta.shape != (n_state,) or not np.isfinite(c["alpha"]) or not np.all(np.isfinite(beta)):
                raise ValidationError([f"{path}: node {i} has a malformed cut"])
            row.append(Cut(float(c["alpha"]), beta, int(c.get("iteration", 0)), i))
        cuts.append(row)
    meta = {k: v for k, v in doc.items() if k != "nodes"}
    meta["hours"] = [node["hours"] for node in doc["nodes"]]
    return CutPool(cuts), meta

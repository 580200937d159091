"""Report records shared by the bound checks and the experiment harness."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np


def _plain(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


@dataclass
class BoundCheckReport:
    """Empirical constant of a quantitative inequality over a finite sample.

    ``constant`` is the largest recorded ratio lhs/rhs and ``witness`` holds
    the arguments that attain it.
    """

    inequality_id: str
    constant: float
    witness: dict
    sample_count: int
    refinement: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _plain(asdict(self))


def argmax_report(inequality_id: str, lhs, rhs, witnesses, **details) -> BoundCheckReport:
    """Ratio report from parallel arrays; witnesses[i] describes sample i."""
    lhs, rhs = np.asarray(lhs, dtype=float), np.asarray(rhs, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(lhs == 0, 0.0, lhs / rhs)
    if ratio.size == 0:
        return BoundCheckReport(inequality_id, 0.0, {}, 0, details=details)
    i = int(np.nanargmax(ratio))
    w = dict(witnesses[i])
    w.update(lhs=float(lhs[i]), rhs=float(rhs[i]), ratio=float(ratio[i]))
    return BoundCheckReport(inequality_id, float(ratio[i]), w, int(ratio.size), details=details)

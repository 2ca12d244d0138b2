"""JSON and CSV output for trajectories, certificate reports and probe tables."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .certificates import CertificateReport, MonotonicityVerdict, check_certificate, product_series
from .integrator import Trajectory
from .model import CooperativityReport
from .oracles import ProbeRow

__all__ = [
    "dumps_report",
    "write_report",
    "certificate_to_dict",
    "verdict_to_dict",
    "cooperativity_to_dict",
    "trajectory_csv",
    "probe_csv",
]


def _clean(obj):
    """Plain-Python copy of ``obj`` with non-finite floats mapped to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def dumps_report(doc: dict) -> str:
    """Canonical text form: sorted keys, two-space indent, trailing newline.

    Loading the text and dumping it again reproduces it byte for byte.
    """
    return json.dumps(_clean(doc), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_report(path: Path, doc: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_report(doc), encoding="utf-8")
    return path


def certificate_to_dict(rep: CertificateReport, series: bool = True) -> dict:
    out = {
        "verdict": rep.verdict.value,
        "first_violation_time": rep.first_violation_time,
        "violation_bracket": list(rep.violation_bracket) if rep.violation_bracket else None,
        "min_margin": rep.min_margin,
        "max_abs_margin": rep.max_abs_margin,
        "samples": len(rep.times),
        "integral_failures": list(rep.integral_failures),
        "derivative_failures": list(rep.derivative_failures),
        "log_domain_samples": list(rep.log_domain_samples),
        "system_id": rep.system_id,
    }
    if series:
        out["series"] = {
            "t": rep.times,
            "xi": rep.xi,
            "bound": rep.bound,
            "margin": rep.margin,
        }
    return out


def verdict_to_dict(v: MonotonicityVerdict) -> dict:
    return {
        "property": v.property,
        "holds": v.holds,
        "worst_time": v.worst_time,
        "worst_coordinate": v.worst_coordinate,
        "worst_value": v.worst_value,
        "system_id": v.system_id,
    }


def cooperativity_to_dict(rep: CooperativityReport) -> dict:
    return {
        "cooperative": rep.cooperative,
        "violations": [
            {"t": v.t, "i": v.i, "j": v.j, "value": v.value} for v in rep.violations
        ],
    }


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def trajectory_csv(traj: Trajectory, cert: CertificateReport | None = None) -> str:
    """Columns ``t, x_1..x_n, xi, bound, margin``; floats at 17 significant digits."""
    if cert is None:
        cert = check_certificate(traj)
    _, xi = product_series(traj)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", *(f"x_{i + 1}" for i in range(traj.n)), "xi", "bound", "margin"])
    for k, t in enumerate(traj.times):
        w.writerow(
            [_fmt(t), *(_fmt(v) for v in traj.states[k]), _fmt(xi[k]), _fmt(cert.bound[k]), _fmt(cert.margin[k])]
        )
    return buf.getvalue()


def probe_csv(rows: list[ProbeRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["eps", "deviation"])
    for r in rows:
        w.writerow([_fmt(r.eps), _fmt(r.deviation)])
    return buf.getvalue()

"""Scenario and fuzz drivers behind the command line.

Exit codes: 0 when every requested check passes, 1 when a verification
fails, 2 on input/schema errors or when a run cannot be completed.
"""

from __future__ import annotations

import dataclasses
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable

import numpy as np

from .certificates import Verdict, check_certificate, check_M1, check_M2
from .errors import CoopOdeError, DimensionMismatch, ParseError, PreconditionViolated
from .generator import GeneratorConfig, gen_initial, gen_system, stream
from .integrator import EmbeddedRK45, StepperConfig, Trajectory, fundamental_matrix, solve_ivp
from .model import Constant, OrthantTag, ToleranceProfile, classify_orthant, is_cooperative
from .oracles import continuous_dependence_probe, deviations_nonincreasing, expm
from .reports import (
    certificate_to_dict,
    cooperativity_to_dict,
    probe_csv,
    trajectory_csv,
    verdict_to_dict,
    write_report,
)
from .scenario import SEED_ENV, ScenarioSpec, load_scenario

__all__ = ["EXIT_OK", "EXIT_FAIL", "EXIT_ERROR", "run_scenario", "run_fuzz", "fuzz_instance"]

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2

COMMAND_CHECKS = {
    "check-metzler": ("metzler",),
    "oracle-compare": ("oracle-compare",),
    "probe-epsilon": ("epsilon-probe",),
}


def with_tolerances(cfg: StepperConfig, rel_tol: float | None, abs_tol: float | None) -> StepperConfig:
    """Apply command-line tolerance overrides to an adaptive stepper."""
    if rel_tol is None and abs_tol is None:
        return cfg
    m = cfg.method
    if not isinstance(m, EmbeddedRK45):
        m = EmbeddedRK45()
    changes = {}
    if rel_tol is not None:
        changes["rel_tol"] = rel_tol
    if abs_tol is not None:
        changes["abs_tol"] = abs_tol
    return StepperConfig(dataclasses.replace(m, **changes), cfg.max_steps)


def _inf_norm(M: np.ndarray) -> float:
    return float(np.abs(M).sum(axis=1).max())


class _ScenarioRun:
    def __init__(self, spec: ScenarioSpec, stepper: StepperConfig):
        self.spec = spec
        self.stepper = stepper
        self._traj: Trajectory | None = None
        self.probe_rows = None

    @property
    def traj(self) -> Trajectory:
        if self._traj is None:
            s = self.spec
            self._traj = solve_ivp(s.system, s.t0, s.x0, s.t_end, self.stepper)
        return self._traj

    def metzler(self) -> dict:
        rep = is_cooperative(self.spec.system, tol=self.spec.tolerances)
        return {"passed": rep.cooperative, **cooperativity_to_dict(rep)}

    def m1(self) -> dict:
        v = check_M1(self.traj, self.spec.tolerances)
        return {"passed": v.holds, **verdict_to_dict(v)}

    def m2(self) -> dict:
        v = check_M2(self.traj, self.spec.tolerances)
        return {"passed": v.holds, **verdict_to_dict(v)}

    def certificate(self) -> dict:
        rep = check_certificate(self.traj, self.spec.tolerances)
        if rep.verdict is Verdict.NOT_APPLICABLE:
            raise PreconditionViolated("certificate check needs x0 in the open orthant")
        return {"passed": rep.verdict is Verdict.CERTIFIED, **certificate_to_dict(rep)}

    def oracle_compare(self) -> dict:
        s = self.spec
        if not isinstance(s.system.body, Constant):
            raise PreconditionViolated("oracle-compare needs a constant system")
        E = expm((s.t_end - s.t0) * s.system.body.matrix)
        Phi = fundamental_matrix(s.system, s.t0, s.t_end, self.stepper)
        matrix_err = _inf_norm(Phi - E) / max(_inf_norm(E), np.finfo(float).tiny)
        x_ref = E @ s.x0
        x_end = self.traj.states[-1]
        state_err = float(np.max(np.abs(x_end - x_ref))) / max(
            float(np.max(np.abs(x_ref))), np.finfo(float).tiny
        )
        return {
            "passed": matrix_err <= s.oracle_tol and state_err <= s.oracle_tol,
            "oracle_tol": s.oracle_tol,
            "matrix_rel_error": matrix_err,
            "state_rel_error": state_err,
            "fundamental_matrix": Phi,
            "expm": E,
        }

    def epsilon_probe(self) -> dict:
        s = self.spec
        rows = continuous_dependence_probe(s.system, s.x0, s.t0, s.t_end, s.schedule, self.stepper)
        self.probe_rows = rows
        return {
            "passed": deviations_nonincreasing(rows),
            "rows": [{"eps": r.eps, "deviation": r.deviation} for r in rows],
        }


_CHECK_METHODS: dict[str, Callable[[_ScenarioRun], dict]] = {
    "metzler": _ScenarioRun.metzler,
    "m1": _ScenarioRun.m1,
    "m2": _ScenarioRun.m2,
    "certificate": _ScenarioRun.certificate,
    "oracle-compare": _ScenarioRun.oracle_compare,
    "epsilon-probe": _ScenarioRun.epsilon_probe,
}


def run_scenario(
    path: str | os.PathLike,
    command: str = "verify",
    out_dir: str | os.PathLike = ".",
    write_csv: bool = False,
    rel_tol: float | None = None,
    abs_tol: float | None = None,
) -> int:
    """Run one scenario file and write ``<stem>.<command>.json`` into ``out_dir``.

    Parse failures exit with 2 before any report is written; every other
    outcome writes the report first.
    """
    path = Path(path)
    try:
        spec = load_scenario(path)
    except (ParseError, DimensionMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR

    out = Path(out_dir)
    stem = path.stem
    run = _ScenarioRun(spec, with_tolerances(spec.stepper, rel_tol, abs_tol))
    doc: dict = {
        "command": command,
        "scenario": spec.name,
        "system_id": spec.system.fingerprint,
        "system_type": spec.system.kind,
        "n": spec.system.n,
        "t0": spec.t0,
        "t_end": spec.t_end,
        "x0": spec.x0,
        "checks": [],
    }
    code = EXIT_OK
    try:
        if command == "solve":
            traj = run.traj
            doc["solve"] = {
                "steps": len(traj) - 1,
                "final_state": traj.states[-1],
                "final_trace_integral": float(traj.trace_integrals[-1]),
                "breakpoints": list(traj.breakpoints),
            }
        else:
            names = COMMAND_CHECKS.get(command, spec.checks)
            for name in names:
                result = {"check": name, **_CHECK_METHODS[name](run)}
                doc["checks"].append(result)
                print(f"{name}: {'PASS' if result['passed'] else 'FAIL'}")
                if not result["passed"]:
                    code = EXIT_FAIL
        doc["status"] = "pass" if code == EXIT_OK else "fail"
    except CoopOdeError as exc:
        doc["status"] = "error"
        doc["error"] = f"{type(exc).__name__}: {exc}"
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_ERROR

    if write_csv:
        out.mkdir(parents=True, exist_ok=True)
        if run._traj is not None:
            (out / f"{stem}.trajectory.csv").write_text(trajectory_csv(run.traj), encoding="utf-8")
        if run.probe_rows is not None:
            (out / f"{stem}.epsilon.csv").write_text(probe_csv(run.probe_rows), encoding="utf-8")
    doc["exit_code"] = code
    write_report(out / f"{stem}.{command}.json", doc)
    return code


# --- fuzzing -----------------------------------------------------------------------------


def fuzz_instance(
    index: int,
    gen_cfg: GeneratorConfig,
    stepper: StepperConfig,
    tol: ToleranceProfile,
) -> dict:
    """Generate instance ``index`` (stream ``index`` of the seed) and check it.

    M1 runs for every instance; M2 and the certificate only for interior x0.
    """
    rng = stream(gen_cfg.seed, index)
    A = gen_system(gen_cfg, rng)
    x0 = gen_initial(gen_cfg, A.n, rng)
    interior = classify_orthant(x0, tol).tag is OrthantTag.INTERIOR
    rec: dict = {
        "index": index,
        "n": A.n,
        "kind": A.kind,
        "system_id": A.fingerprint,
        "x0_class": "interior" if interior else "boundary",
        "m1": None,
        "m2": None,
        "certificate": None,
        "error": None,
    }
    try:
        traj = solve_ivp(A, gen_cfg.t0, x0, gen_cfg.t_end, stepper)
        m1 = check_M1(traj, tol)
        rec["m1"] = {"holds": m1.holds, "worst_value": m1.worst_value}
        if interior:
            m2 = check_M2(traj, tol)
            rec["m2"] = {"holds": m2.holds, "worst_value": m2.worst_value}
            cert = check_certificate(traj, tol)
            rec["certificate"] = {
                "verdict": cert.verdict.value,
                "min_margin": cert.min_margin,
                "first_violation_time": cert.first_violation_time,
            }
    except CoopOdeError as exc:
        rec["error"] = f"{type(exc).__name__}: {exc}"
    return rec


def _failed(rec: dict) -> bool:
    if rec["error"]:
        return True
    if not rec["m1"]["holds"]:
        return True
    if rec["m2"] is not None and not rec["m2"]["holds"]:
        return True
    cert = rec["certificate"]
    return cert is not None and cert["verdict"] != Verdict.CERTIFIED.value


def _fuzz_job(args):
    return fuzz_instance(*args)


def run_fuzz(
    count: int,
    gen_cfg: GeneratorConfig | None = None,
    stepper: StepperConfig | None = None,
    tol: ToleranceProfile | None = None,
    workers: int = 1,
) -> tuple[dict, int]:
    """Check ``count`` generated (system, x0) pairs; returns ``(summary, exit_code)``.

    The exit code is 0 iff every check on a cooperative batch passes. For a
    non-cooperative batch violations are expected and give 0. Integration
    errors (step limit, step underflow) give 2 in either case.
    Records are ordered by instance index whatever ``workers`` is.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    gen_cfg = gen_cfg or GeneratorConfig()
    stepper = stepper or StepperConfig()
    tol = tol or ToleranceProfile()
    jobs = [(i, gen_cfg, stepper, tol) for i in range(count)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_fuzz_job, jobs, chunksize=max(1, count // (4 * workers))))
    else:
        records = [_fuzz_job(j) for j in jobs]
    records.sort(key=lambda r: r["index"])

    def count_where(key, pred):
        return sum(1 for r in records if r[key] is not None and pred(r[key]))

    certs = [r["certificate"] for r in records if r["certificate"] is not None]
    m1_values = [r["m1"]["worst_value"] for r in records if r["m1"] is not None]
    failed = [r["index"] for r in records if _failed(r)]
    errors = [r["index"] for r in records if r["error"]]
    summary = {
        "count": count,
        "seed": gen_cfg.seed,
        "cooperative": gen_cfg.cooperative,
        "boundary_fraction": gen_cfg.boundary_fraction,
        "interior": sum(r["x0_class"] == "interior" for r in records),
        "boundary": sum(r["x0_class"] == "boundary" for r in records),
        "m1": {"checked": count_where("m1", lambda v: True), "holds": count_where("m1", lambda v: v["holds"])},
        "m2": {"checked": count_where("m2", lambda v: True), "holds": count_where("m2", lambda v: v["holds"])},
        "certificate": {
            "checked": len(certs),
            "certified": sum(c["verdict"] == Verdict.CERTIFIED.value for c in certs),
            "violations": sum(c["verdict"] == Verdict.VIOLATION.value for c in certs),
        },
        "worst_margin": min((c["min_margin"] for c in certs), default=None),
        "worst_m1_value": min(m1_values, default=None),
        "failed_instances": failed,
        "error_instances": errors,
        "instances": records,
    }
    if errors:
        code = EXIT_ERROR
    elif gen_cfg.cooperative and failed:
        code = EXIT_FAIL
    else:
        code = EXIT_OK
    summary["exit_code"] = code
    return summary, code


def format_fuzz_summary(summary: dict) -> str:
    c = summary["certificate"]
    lines = [
        f"fuzz: count={summary['count']} seed={summary['seed']} cooperative={summary['cooperative']}",
        f"  x0: interior={summary['interior']} boundary={summary['boundary']}",
        f"  M1: {summary['m1']['holds']}/{summary['m1']['checked']} hold",
        f"  M2: {summary['m2']['holds']}/{summary['m2']['checked']} hold",
        f"  certificate: {c['certified']}/{c['checked']} certified, {c['violations']} violations",
        f"  worst margin: {summary['worst_margin']!r}",
        f"  worst M1 value: {summary['worst_m1_value']!r}",
        f"  failed instances: {len(summary['failed_instances'])}, errors: {len(summary['error_instances'])}",
    ]
    return "\n".join(lines)


def default_seed() -> int:
    env = os.environ.get(SEED_ENV)
    return int(env) if env else GeneratorConfig.seed

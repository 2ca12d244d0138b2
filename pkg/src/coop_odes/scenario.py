"""Scenario documents: one JSON file describing a single verification run.

The schema lives in ``schema/scenario.schema.json``. Matrices are row-major
arrays of arrays, piecewise bodies are ``{breakpoints, pieces}`` and
polynomial entries list their coefficients lowest degree first.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .errors import CoopOdeError, DimensionMismatch, ParseError
from .generator import GeneratorConfig, gen_initial, stream
from .integrator import EmbeddedRK45, FixedRK4, StepperConfig
from .model import CoefficientMatrix, TimeWindow, ToleranceProfile
from .oracles import EpsilonSchedule

__all__ = ["SEED_ENV", "CHECKS", "ScenarioSpec", "parse_scenario", "load_scenario", "scenario_to_dict"]

SEED_ENV = "COOP_ODES_SEED"
CHECKS = ("metzler", "m1", "m2", "certificate", "oracle-compare", "epsilon-probe")
DEFAULT_CHECKS = ("metzler", "m1", "m2", "certificate")


@lru_cache(maxsize=None)
def _schema() -> dict:
    text = resources.files("coop_odes").joinpath("schema/scenario.schema.json").read_text()
    return json.loads(text)


@dataclass(frozen=True, eq=False)
class ScenarioSpec:
    system: CoefficientMatrix
    x0: np.ndarray
    t_end: float
    stepper: StepperConfig = field(default_factory=StepperConfig)
    tolerances: ToleranceProfile = field(default_factory=ToleranceProfile)
    checks: tuple[str, ...] = DEFAULT_CHECKS
    schedule: EpsilonSchedule = field(default_factory=EpsilonSchedule)
    oracle_tol: float = 1e-8
    name: str = "scenario"

    @property
    def window(self) -> TimeWindow:
        return self.system.window

    @property
    def t0(self) -> float:
        return self.window.t0

    def __post_init__(self):
        x0 = np.array(self.x0, dtype=float)
        if x0.shape != (self.system.n,):
            raise DimensionMismatch(
                f"x0 has {x0.size} entries but the system dimension is {self.system.n}"
            )
        x0.setflags(write=False)
        object.__setattr__(self, "x0", x0)
        if not self.t0 < self.t_end < self.window.b:
            raise ParseError(f"need t0 < t_end < b, got t_end={self.t_end}")


def _stepper(doc: dict | None) -> StepperConfig:
    if not doc:
        return StepperConfig()
    doc = dict(doc)
    method = doc.pop("method")
    max_steps = doc.pop("max_steps", 1_000_000)
    if method == "rk4":
        return StepperConfig(FixedRK4(float(doc["h"])), max_steps)
    return StepperConfig(EmbeddedRK45(**{k: float(v) for k, v in doc.items()}), max_steps)


def _initial(directive: dict, n: int) -> np.ndarray:
    gen = directive.get("generate", {})
    seed = gen.get("seed", GeneratorConfig.seed)
    if os.environ.get(SEED_ENV):
        seed = int(os.environ[SEED_ENV])
    cfg = GeneratorConfig(
        seed=seed,
        boundary_fraction=gen.get("boundary_fraction", GeneratorConfig.boundary_fraction),
        entry_scale=gen.get("entry_scale", GeneratorConfig.entry_scale),
    )
    return gen_initial(cfg, n, stream(seed, gen.get("stream", 0)))


def parse_scenario(doc: dict, name: str = "scenario") -> ScenarioSpec:
    """Validate ``doc`` against the schema and build a :class:`ScenarioSpec`.

    Raises :class:`ParseError` on schema or value errors and
    :class:`DimensionMismatch` when ``x0`` does not fit the system.
    """
    try:
        jsonschema.validate(doc, _schema())
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ParseError(f"{path}: {exc.message}") from None
    try:
        w = doc["window"]
        window = TimeWindow(float(w["a"]), float(w["b"]), float(w["t0"]))
        system = CoefficientMatrix.from_dict(doc["system"], window)
        x0 = doc["x0"]
        if isinstance(x0, dict):
            x0 = _initial(x0, system.n)
        return ScenarioSpec(
            system=system,
            x0=x0,
            t_end=float(doc["t_end"]),
            stepper=_stepper(doc.get("stepper")),
            tolerances=ToleranceProfile(**doc.get("tolerances", {})),
            checks=tuple(doc.get("checks", DEFAULT_CHECKS)),
            schedule=EpsilonSchedule(tuple(doc["epsilon_schedule"]))
            if "epsilon_schedule" in doc
            else EpsilonSchedule(),
            oracle_tol=float(doc.get("oracle_tol", 1e-8)),
            name=doc.get("name", name),
        )
    except DimensionMismatch:
        raise
    except (CoopOdeError, ValueError, TypeError, KeyError) as exc:
        raise ParseError(str(exc)) from None


def load_scenario(path: str | os.PathLike) -> ScenarioSpec:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ParseError(f"scenario file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from None
    return parse_scenario(doc, name=path.stem)


def scenario_to_dict(spec: ScenarioSpec) -> dict:
    """Serialize a scenario (e.g. a generated system) back to the file format."""
    w = spec.window
    system = spec.system.to_dict()
    system.pop("window")
    m = spec.stepper.method
    if isinstance(m, FixedRK4):
        stepper = {"method": "rk4", "h": m.h}
    else:
        stepper = {
            "method": "rk45",
            "rel_tol": m.rel_tol,
            "abs_tol": m.abs_tol,
            "initial_step": m.initial_step,
            "min_step": m.min_step,
            "max_step": m.max_step,
        }
    stepper["max_steps"] = spec.stepper.max_steps
    tol = spec.tolerances
    return {
        "name": spec.name,
        "window": {"a": w.a, "b": w.b, "t0": w.t0},
        "system": system,
        "x0": spec.x0.tolist(),
        "t_end": spec.t_end,
        "stepper": stepper,
        "tolerances": {
            "abs_tol": tol.abs_tol,
            "strict_tol": tol.strict_tol,
            "rel_cert_tol": tol.rel_cert_tol,
            "metzler_tol": tol.metzler_tol,
        },
        "checks": list(spec.checks),
        "epsilon_schedule": list(spec.schedule.values),
        "oracle_tol": spec.oracle_tol,
    }

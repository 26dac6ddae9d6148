"""Scenario files: ODE configurations and loading by path or built-in name."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib.resources import files
from pathlib import Path

import numpy as np

from .funcrep import InvalidParameterError, LipschitzField, VelocityFn, sgn_sin_velocity

__all__ = ["OdeScenario", "builtin_names", "builtin_path", "load_scenario", "velocity_from_dict", "field_from_dict"]


def velocity_from_dict(data: dict) -> VelocityFn:
    """``{"kind": "sgn_sin", "cutoff", "inner_value"}`` or a piecewise-constant
    velocity ``{"breakpoints", "values", "lower_bound"}``."""
    if data.get("kind") == "sgn_sin":
        return sgn_sin_velocity(float(data.get("cutoff", 1e-3)), float(data.get("inner_value", 2.0)))
    return VelocityFn.from_dict(data)


def field_from_dict(data: dict) -> LipschitzField:
    """Catalogue field ``a + b x + c cos(omega t)``; ``window`` bounds ``|lambda|`` when ``b != 0``."""
    unknown = set(data) - {"name", "a", "b", "c", "omega", "window", "sup_bound"}
    if unknown:
        raise InvalidParameterError(f"unknown field keys {sorted(unknown)}")
    window = data.get("window")
    return LipschitzField.affine_cos(
        a=float(data.get("a", 0.0)),
        b=float(data.get("b", 0.0)),
        c=float(data.get("c", 0.0)),
        omega=float(data.get("omega", 0.0)),
        window=None if window is None else tuple(window),
        sup_bound=data.get("sup_bound"),
    )


@dataclass(frozen=True, eq=False)
class OdeScenario:
    """Velocity, named fields and initial values of a batch of ODE runs."""

    v: VelocityFn
    fields: tuple
    names: tuple
    x0: np.ndarray
    T: float = 1.0
    tol: float = 1e-9
    n_out: int = 200
    name: str = ""

    def __post_init__(self):
        if not self.T > 0.0:
            raise InvalidParameterError("T must be positive")
        if len(self.fields) != len(self.names) or not self.fields:
            raise InvalidParameterError("one name per field and at least one field expected")
        if len(set(self.names)) != len(self.names):
            raise InvalidParameterError("field names must be unique")
        x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        if x0.size == 0:
            raise InvalidParameterError("at least one initial value expected")
        object.__setattr__(self, "x0", x0)

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, int(self.n_out) + 1)

    def items(self):
        return zip(self.names, self.fields)

    @classmethod
    def from_dict(cls, data: dict) -> "OdeScenario":
        specs = data["fields"]
        return cls(
            v=velocity_from_dict(data["v"]),
            fields=tuple(field_from_dict(f) for f in specs),
            names=tuple(str(f.get("name", f"field{k}")) for k, f in enumerate(specs)),
            x0=np.asarray(data["x0"], dtype=float),
            T=float(data.get("T", 1.0)),
            tol=float(data.get("tol", 1e-9)),
            n_out=int(data.get("n_out", 200)),
            name=data.get("name", ""),
        )


def builtin_names() -> list[str]:
    return sorted(p.name[:-5] for p in files("discflow").joinpath("scenarios").iterdir() if p.name.endswith(".json"))


def builtin_path(name: str):
    path = files("discflow").joinpath("scenarios", f"{name}.json")
    if not path.is_file():
        raise InvalidParameterError(f"no built-in scenario {name!r}; available: {', '.join(builtin_names())}")
    return path


def load_scenario(ref):
    """Load an ODE or nonlocal scenario from a path or a built-in name.

    Files with ``"kind": "ode"`` give an :class:`OdeScenario`; everything else
    is read as a nonlocal ``Scenario``.
    """
    from .nonlocal_ import Scenario

    path = Path(ref)
    if path.is_file():
        text = path.read_text()
    else:
        text = builtin_path(str(ref)).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidParameterError(f"scenario {ref} is not valid JSON: {exc}") from None
    try:
        if data.get("kind") == "ode":
            return OdeScenario.from_dict(data)
        return Scenario.from_dict(data)
    except KeyError as exc:
        raise InvalidParameterError(f"scenario {ref} lacks key {exc}") from None

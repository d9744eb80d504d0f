"""Bundled parametric finite-element testbeds."""

from .base import Problem
from .bar import SaintVenantBar, load_scaling
from .convdiff import (
    MATERIALS,
    RotatingPulseConvectionDiffusion,
    effective_diffusivity,
    source_term_pulse,
)

from ..errors import ConfigError

_PROBLEM_KINDS = {
    "bar": SaintVenantBar,
    "convdiff": RotatingPulseConvectionDiffusion,
}


def make_problem(spec: dict, parameter_space=None) -> Problem:
    """Build a testbed from a configuration mapping with a ``name`` key."""
    if "name" not in spec:
        raise ConfigError("problem section requires a 'name' field")
    name = spec["name"]
    if name not in _PROBLEM_KINDS:
        raise ConfigError(
            f"unknown problem {name!r}; valid names: {sorted(_PROBLEM_KINDS)}"
        )
    kwargs = {k: v for k, v in spec.items() if k != "name"}
    if parameter_space is not None:
        kwargs["parameter_space"] = [tuple(p) for p in parameter_space]
    try:
        return _PROBLEM_KINDS[name](**kwargs)
    except TypeError as exc:
        raise ConfigError(f"invalid problem options for {name!r}: {exc}") from exc


__all__ = [
    "Problem",
    "SaintVenantBar",
    "RotatingPulseConvectionDiffusion",
    "source_term_pulse",
    "load_scaling",
    "effective_diffusivity",
    "MATERIALS",
    "make_problem",
]

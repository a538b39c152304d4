"""Experiment configuration: flat ``section.key = value`` text files.

Blank lines and lines starting with ``#`` are ignored.  Lists are comma
separated.  Unknown keys are rejected so that typos fail loudly.  Example::

    study.kind = rate-c1
    model.preset = F1
    model.c = 0
    study.eps_list = 0.04, 0.02, 0.01, 0.005
    grid.N = 4096
    solver.dt = 0.005
    solver.scheme = taylor2
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from typing import Tuple

from .errors import DomainError
from .hj_solver import SolverConfig
from .model import PRESETS

STUDIES = ("solve", "flow", "alpha", "measure", "rate-c1", "rate-c2", "selection", "barrier")


def _floats(text):
    return tuple(float(t) for t in text.split(",") if t.strip())


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text):
    return None if text.strip().lower() in ("", "auto", "none") else float(text)


def _opt_int(text):
    return None if text.strip().lower() in ("", "none") else int(text)


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "solve"
    preset: str = "F1"
    c: Tuple[float, ...] = (0.0,)
    eps_list: Tuple[float, ...] = (0.02,)
    N: int = 1024
    dt: float = None
    xi_max: float = 4.0
    tol: float = 1e-8
    scheme: str = "taylor2"
    max_iter: int = 200_000
    policy_iteration: bool = True
    out: str = "results"
    seed: int = 0
    seeds: int = 50
    T: float = 10.0
    ds: float = 1e-3
    resync: int = 100
    delta_exponent: float = 0.9
    eta: float = 1.0
    z_max: int = 200
    threads: int = None

    def __post_init__(self):
        if self.kind not in STUDIES:
            raise DomainError(f"unknown study {self.kind!r}; choose from {', '.join(STUDIES)}")
        if self.preset not in PRESETS:
            raise DomainError(f"unknown preset {self.preset!r}")
        eps = self.eps_list
        if not eps or any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
            raise DomainError("eps list must be positive and strictly decreasing")
        if self.N < 16 or self.N & (self.N - 1):
            raise DomainError("grid resolution must be a power of two")
        if not 0 <= self.seed < 2 ** 64:
            raise DomainError("seed must fit in 64 bits")
        if not self.c:
            raise DomainError("at least one c is required")
        if self.preset == "zero" and self.kind in ("rate-c1", "selection", "barrier", "alpha"):
            raise DomainError("F = 0 has no hyperbolic zeros; this study needs a mechanical well")

    @property
    def dim(self):
        return 2 if self.preset in ("kam2d", "kam2d-flat") else 1

    def solver(self) -> SolverConfig:
        return SolverConfig(dt=self.dt, xi_max=self.xi_max, tol=self.tol, scheme=self.scheme,
                            max_iter=self.max_iter, policy_iteration=self.policy_iteration)

    def digest(self, length=12):
        # the thread count and output location do not change results
        canon = replace(self, threads=None, out="")
        return hashlib.sha256(dumps(canon).encode()).hexdigest()[:length]


# key in the file -> (field name, parser, formatter)
def _fmt_floats(v):
    return ", ".join(repr(float(x)) for x in v)


_KEYS = {
    "study.kind": ("kind", str.strip, str),
    "model.preset": ("preset", str.strip, str),
    "model.c": ("c", _floats, _fmt_floats),
    "study.eps_list": ("eps_list", _floats, _fmt_floats),
    "grid.N": ("N", int, str),
    "solver.dt": ("dt", _opt_float, lambda v: "auto" if v is None else repr(float(v))),
    "solver.xi_max": ("xi_max", float, repr),
    "solver.tol": ("tol", float, repr),
    "solver.scheme": ("scheme", str.strip, str),
    "solver.max_iter": ("max_iter", int, str),
    "solver.policy_iteration": ("policy_iteration", _bool, lambda v: "true" if v else "false"),
    "output.dir": ("out", str.strip, str),
    "study.seed": ("seed", int, str),
    "study.seeds": ("seeds", int, str),
    "study.T": ("T", float, repr),
    "study.ds": ("ds", float, repr),
    "study.resync": ("resync", int, str),
    "study.delta_exponent": ("delta_exponent", float, repr),
    "study.eta": ("eta", float, repr),
    "study.z_max": ("z_max", int, str),
    "run.threads": ("threads", _opt_int, lambda v: "none" if v is None else str(v)),
}


def loads(text) -> ExperimentConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DomainError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise DomainError(f"line {lineno}: unknown key {key!r}")
        name, parse, _ = _KEYS[key]
        try:
            values[name] = parse(val)
        except ValueError as exc:
            raise DomainError(f"line {lineno}: bad value for {key}: {exc}") from None
    return ExperimentConfig(**values)


def dumps(cfg: ExperimentConfig) -> str:
    lines = []
    for key in sorted(_KEYS):
        name, _, fmt = _KEYS[key]
        lines.append(f"{key} = {fmt(getattr(cfg, name))}")
    return "\n".join(lines) + "\n"


def load(path) -> ExperimentConfig:
    with open(path) as fh:
        return loads(fh.read())


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **kw)


__all__ = ["ExperimentConfig", "STUDIES", "loads", "dumps", "load", "with_overrides"]

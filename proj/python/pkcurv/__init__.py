"""Python interface to the pkcurv solver.

Problems are dicts (or paths to JSON files) in the same format the command
line tool reads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from os import PathLike
from pathlib import Path
from typing import Any, Union

import numpy as np

from . import _pkcurv
from ._pkcurv import (
    ConeViolation,
    ConfigError,
    DomainError,
    F_and_gradient,
    ellipsoid_curvature_error,
    lambda_of,
    quotient_root,
    sigma,
)

__all__ = [
    "ConeViolation",
    "ConfigError",
    "DomainError",
    "F_and_gradient",
    "Solution",
    "ellipsoid_curvature_error",
    "homogeneous",
    "lambda_of",
    "quotient_root",
    "sigma",
    "solve",
    "verify",
]

Problem = Union[dict, str, PathLike]


@dataclass
class Solution:
    report: dict
    audits: list
    u: np.ndarray

    @property
    def rho(self) -> np.ndarray:
        return np.exp(-self.u)

    @property
    def converged(self) -> bool:
        return bool(self.report["converged"])

    @property
    def gamma(self) -> float | None:
        return self.report.get("gamma")


def _problem_json(problem: Problem) -> str:
    if isinstance(problem, dict):
        return json.dumps(problem)
    return Path(problem).read_text()


def solve(problem: Problem, res: int = 32, **options: Any) -> Solution:
    """Continuity-path solve for -b-q-k+l > 0."""
    report, audits, u = _pkcurv.solve(_problem_json(problem), res, options)
    return Solution(json.loads(report), json.loads(audits), np.asarray(u))


def homogeneous(problem: Problem, res: int = 32, **options: Any) -> Solution:
    """Eigenvalue solve for -b-q-k+l = 0; rho is normalized to min 1."""
    report, audits, u = _pkcurv.homogeneous(_problem_json(problem), res, options)
    return Solution(json.loads(report), json.loads(audits), np.asarray(u))


def verify(trials: int = 1000, seed: int = 7, suite: str = "all") -> list[dict]:
    return json.loads(_pkcurv.verify(trials, seed, suite))

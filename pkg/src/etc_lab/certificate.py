"""Lyapunov certificate constants and their admissibility checks.

The ISS / dissipation certificate of a closed loop is summarised by a handful
of scalars: decay and gain coefficients ``c1, c2, c3`` of ``V_s``, upper-bound
coefficients ``cbar1, cbar2, cbar3``, the continuous-time Lp gain ``mu``, the
event-based target ``mu_d``, the exponent ``p``, the decay fraction ``sigma``
used by the triggering function and the weight ``lam`` of ``V_c``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import (
    DomainError,
    InfeasibleTargetError,
    UnsupportedExponentError,
)

__all__ = [
    "CertificateConstants",
    "LyapunovPair",
    "AssumptionReport",
    "lambda_range",
    "scale_Vs",
    "verify_assumptions_sampled",
]


@dataclass(frozen=True)
class CertificateConstants:
    """Scalar constants of a Lyapunov certificate.

    Construction validates positivity, ``sigma < 1``, ``mu_d > mu`` and that
    ``lam`` lies in :func:`lambda_range`. Use :meth:`unchecked` to skip the
    checks; such instances carry ``checked=False`` into every report.
    """

    c1: float
    c2: float
    c3: float
    cbar1: float
    cbar2: float
    cbar3: float
    mu: float
    mu_d: float
    p: float
    sigma: float
    lam: float
    checked: bool = field(default=True, compare=False)

    def __post_init__(self):
        if self.checked:
            _validate(self)

    @classmethod
    def unchecked(cls, **kwargs) -> "CertificateConstants":
        return cls(**kwargs, checked=False)

    @property
    def q(self) -> float:
        """Hoelder conjugate of ``p``."""
        if self.p <= 1.0:
            raise UnsupportedExponentError("q is unbounded for p = 1")
        return self.p / (self.p - 1.0)

    @property
    def nu(self) -> float:
        return self.c1 * (1.0 - self.sigma) / (self.cbar1 + self.cbar2)

    @property
    def mu_p(self) -> float:
        return self.mu**self.p

    @property
    def mu_d_p(self) -> float:
        return self.mu_d**self.p

    def replace(self, **changes) -> "CertificateConstants":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["nu"] = self.nu
        return d


def _validate(k: CertificateConstants) -> None:
    names = ("c1", "c2", "c3", "cbar1", "cbar2", "cbar3", "mu", "mu_d", "sigma", "lam")
    for name in names:
        v = getattr(k, name)
        if not (math.isfinite(v) and v > 0):
            raise DomainError(f"{name} must be positive and finite, got {v!r}")
    if not k.sigma < 1.0:
        raise DomainError(f"sigma must lie in (0, 1), got {k.sigma}")
    if not k.p >= 1.0:
        raise DomainError(f"p must be >= 1, got {k.p}")
    if not k.mu_d > k.mu:
        raise InfeasibleTargetError(f"mu_d={k.mu_d} must exceed mu={k.mu}")
    if k.p == 1.0:
        # the upper endpoint needs q; only the lower one is checkable
        lo = k.c3 / (k.mu_d_p - k.mu_p)
        if not k.lam > lo:
            raise DomainError(f"lam={k.lam} must exceed {lo}")
        return
    lo, hi = lambda_range(k)
    if not lo < k.lam < hi:
        raise DomainError(f"lam={k.lam} outside the admissible interval ({lo}, {hi})")


def lambda_range(consts: CertificateConstants) -> tuple[float, float]:
    """Open interval of weights ``lam`` giving ``B1 > 0`` and ``B3 > 0``.

    Returns ``(c3 / (mu_d^p - mu^p), (c1 sigma q)^(1/q) / cbar3)``. The tuple is
    returned even when empty; test with ``lo < hi``.
    """
    k = consts
    if not k.mu_d > k.mu:
        raise InfeasibleTargetError(f"mu_d={k.mu_d} must exceed mu={k.mu}")
    if k.p <= 1.0:
        raise UnsupportedExponentError("lambda_range requires p > 1")
    q = k.q
    lo = k.c3 / (k.mu_d_p - k.mu_p)
    hi = (k.c1 * k.sigma * q) ** (1.0 / q) / k.cbar3
    return lo, hi


def scale_Vs(consts: CertificateConstants, upsilon: float, checked: bool | None = None):
    """Scale ``V_s`` by ``upsilon``.

    ``c1, c2, c3, cbar1`` are multiplied by ``upsilon``; the ``V_c`` related
    constants and ``mu`` are untouched. ``checked`` defaults to the input's flag.
    """
    if not upsilon > 0:
        raise DomainError(f"upsilon must be positive, got {upsilon}")
    flag = consts.checked if checked is None else checked
    return dataclasses.replace(
        consts,
        c1=consts.c1 * upsilon,
        c2=consts.c2 * upsilon,
        c3=consts.c3 * upsilon,
        cbar1=consts.cbar1 * upsilon,
        checked=flag,
    )


@dataclass(frozen=True)
class LyapunovPair:
    V_s: Callable[[np.ndarray], float]
    V_c: Callable[[np.ndarray], float]
    grad_V_c: Callable[[np.ndarray], np.ndarray]
    # closed-form parameters for the compiled kernel, when available
    kernel: Optional[dict] = field(default=None, compare=False)

    def V(self, xi, lam: float) -> float:
        """``V_s + lam * V_c``."""
        return self.V_s(xi) + lam * self.V_c(xi)


@dataclass
class AssumptionReport:
    """Worst residual per inequality; ``<= 0`` means satisfied on all probes."""

    iss: float
    dissipation: float
    upper_bounds: float
    worst_probe: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return max(self.iss, self.dissipation, self.upper_bounds) <= 0.0


def _fd_gradient(fun, x: np.ndarray) -> np.ndarray:
    step = 1e-6 * (1.0 + np.linalg.norm(x))
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (fun(x + e) - fun(x - e)) / (2.0 * step)
    return g


def verify_assumptions_sampled(
    plant,
    consts: CertificateConstants,
    lyap: LyapunovPair,
    probes: Iterable[Sequence[np.ndarray]],
) -> AssumptionReport:
    """Spot-check the three certificate inequalities on probe points.

    Each probe is ``(xi, eps, d)``. Residuals are lhs - rhs of

    * ``grad V_s . f_s(xi, eps, d) <= -c1|xi|^p + c2|eps|^p + c3|d|^p``
      (gradient of ``V_s`` by central differences),
    * ``grad V_c . f_c(xi, d) <= mu^p |d|^p - |z|^p``,
    * the three upper bounds on ``V_s``, ``V_c`` and ``|grad V_c|``.
    """
    k = consts
    p = k.p
    worst = {"iss": -math.inf, "dissipation": -math.inf, "upper_bounds": -math.inf}
    where = {}
    for xi, eps, d in probes:
        xi = np.asarray(xi, dtype=float)
        eps = np.asarray(eps, dtype=float)
        d = np.atleast_1d(np.asarray(d, dtype=float))
        if xi.shape != (plant.n,) or eps.shape != (plant.n,) or d.shape != (plant.q,):
            raise DomainError(
                f"probe shapes {xi.shape}, {eps.shape}, {d.shape} do not match plant "
                f"dimensions n={plant.n}, q={plant.q}"
            )
        nx = np.linalg.norm(xi)
        ne = np.linalg.norm(eps)
        nd = np.linalg.norm(d)

        r1 = _fd_gradient(lyap.V_s, xi) @ plant.f_s(xi, eps, d) - (
            -k.c1 * nx**p + k.c2 * ne**p + k.c3 * nd**p
        )
        z = np.atleast_1d(plant.h(xi, d))
        r2 = lyap.grad_V_c(xi) @ plant.f_c(xi, d) - (k.mu_p * nd**p - np.linalg.norm(z) ** p)
        r3 = max(
            lyap.V_s(xi) - k.cbar1 * nx**p,
            lyap.V_c(xi) - k.cbar2 * nx**p,
            np.linalg.norm(lyap.grad_V_c(xi)) - k.cbar3 * nx ** (p - 1.0),
        )
        for name, r in (("iss", r1), ("dissipation", r2), ("upper_bounds", r3)):
            if r > worst[name]:
                worst[name] = float(r)
                where[name] = (xi.copy(), eps.copy(), d.copy())
    return AssumptionReport(
        iss=worst["iss"],
        dissipation=worst["dissipation"],
        upper_bounds=worst["upper_bounds"],
        worst_probe=where,
    )

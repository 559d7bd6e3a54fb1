"""Analytic guarantees of the dynamic triggering condition.

All time-like quantities that may be infinite are returned as
:data:`Marker.UNBOUNDED`; a minimum inter-event time that cannot be certified
is :data:`Marker.NO_GUARANTEE`. Neither is ever encoded as a float.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .certificate import CertificateConstants
from .errors import (
    DomainError,
    InconsistentBoundsError,
    InfeasibleCertificateError,
    UnachievableFloorError,
    UnsupportedExponentError,
)

__all__ = [
    "Marker",
    "LipschitzCoefficients",
    "BoundsReport",
    "EnlargementDesign",
    "psi",
    "b1",
    "b3",
    "c_coeff",
    "tau_i",
    "tau_hat",
    "tau_star",
    "tau_star_max",
    "miet",
    "rho_bar",
    "lemma5_ab",
    "enlargement_design",
    "lipschitz_estimate",
    "tmin",
]

RTOL = 1e-12
MAX_ITER = 200
BRANCH_RTOL = 1e-9


class Marker(enum.Enum):
    UNBOUNDED = "unbounded"
    NO_GUARANTEE = "no-guarantee"

    def __str__(self):
        return self.value


Time = Union[float, Marker]


def tmin(a: Time, b: Time) -> Time:
    """Minimum of two times where ``UNBOUNDED`` acts as +inf."""
    if a is Marker.NO_GUARANTEE or b is Marker.NO_GUARANTEE:
        return Marker.NO_GUARANTEE
    if a is Marker.UNBOUNDED:
        return b
    if b is Marker.UNBOUNDED:
        return a
    return min(a, b)


def is_time(x) -> bool:
    return not isinstance(x, Marker)


@dataclass(frozen=True)
class LipschitzCoefficients:
    """Coefficients of ``|xi_dot| <= lambda1 |xi| + lambda2 |eps| + lambda3 |d|``."""

    lambda1: float
    lambda2: float
    lambda3: float
    estimated: bool = False

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise DomainError(f"{name} must be finite and nonnegative, got {v}")

    def __iter__(self):
        return iter((self.lambda1, self.lambda2, self.lambda3))


@dataclass(frozen=True)
class BoundsReport:
    B1: float
    B3: float
    c: float
    tau1: Time
    tau3: Time
    tau_hat: Time
    m1: float
    m2: float
    kappa: float
    tau_star_1: Time
    tau_m: Time
    a: float
    b: float
    eps: float
    lambda2: float
    rho_bar: Optional[float] = None
    checked: bool = True

    @property
    def guaranteed(self) -> bool:
        return self.tau_m is not Marker.NO_GUARANTEE

    def as_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[f.name] = str(v) if isinstance(v, Marker) else v
        return out


@dataclass(frozen=True)
class EnlargementDesign:
    chi_circ: float
    tau_circ: float
    T_circ: float
    chi_star: float
    delta_star: float
    tau_star_max: float

    def schedule(self, after: str = "delta_bar"):
        from .trigger import DeltaSchedule

        return DeltaSchedule.enlargement(self.delta_star, self.T_circ, after=after)


def psi(t: float, lambda2: float, p: float) -> float:
    """Error-growth envelope ``psi(t, lambda2)`` for exponent ``p > 1``."""
    if not p > 1.0:
        raise UnsupportedExponentError(f"psi requires p > 1, got {p}")
    if t < 0:
        raise DomainError(f"t must be nonnegative, got {t}")
    if not lambda2 > 0:
        raise DomainError(f"lambda2 must be positive, got {lambda2}")
    coef = 2.0 ** (2 * p) * (p - 1.0) ** (p - 1.0) / (lambda2**p * p**p)
    e1 = math.expm1(lambda2 * p * t / (2.0 * (p - 1.0)))
    e2 = math.expm1(lambda2 * p * t / 2.0)
    return coef * e1 ** (p - 1.0) * e2


def b1(consts: CertificateConstants) -> float:
    k = consts
    return k.c1 * k.sigma - (k.cbar3 * k.lam) ** k.q / k.q


def b3(consts: CertificateConstants) -> float:
    k = consts
    return k.lam * (k.mu_d_p - k.mu_p) - k.c3


def c_coeff(consts: CertificateConstants, lip: LipschitzCoefficients) -> float:
    return consts.c2 + lip.lambda2**consts.p / consts.p


def tau_i(i: int, consts: CertificateConstants, lip: LipschitzCoefficients) -> Time:
    """Largest ``t`` with ``lambda_i^p psi(t) < B_i / c`` (``i`` in {1, 3}).

    Returns the lower end of the final bisection bracket, so the strict
    inequality holds at the returned value.
    """
    if i not in (1, 3):
        raise DomainError(f"i must be 1 or 3, got {i}")
    p = consts.p
    if not p > 1.0:
        raise UnsupportedExponentError("analytic bounds require p > 1")
    B = b1(consts) if i == 1 else b3(consts)
    if not B > 0:
        raise InfeasibleCertificateError(f"B{i} = {B} is not positive; lam outside admissible range")
    lam_i = lip.lambda1 if i == 1 else lip.lambda3
    if lam_i == 0.0:
        return Marker.UNBOUNDED
    if not lip.lambda2 > 0:
        raise DomainError("lambda2 must be positive")
    target = B / c_coeff(consts, lip)
    scale = lam_i**p

    def g(t):
        return scale * psi(t, lip.lambda2, p) - target

    lo, hi = 0.0, 1e-6
    while g(hi) < 0:
        lo, hi = hi, hi * 2.0
        if hi > 1e12:
            raise DomainError("could not bracket tau_i")
    for _ in range(MAX_ITER):
        if hi - lo <= RTOL * hi:
            break
        mid = 0.5 * (lo + hi)
        if g(mid) < 0:
            lo = mid
        else:
            hi = mid
    return lo


def tau_hat(consts: CertificateConstants, lip: LipschitzCoefficients) -> Time:
    return tmin(tau_i(1, consts, lip), tau_i(3, consts, lip))


def tau_star(chi: float, kappa: float, lambda2: float, m1: float) -> float:
    """Time for the normalised error ratio to grow from 0 to ``chi``."""
    if chi < 0:
        raise DomainError(f"chi must be nonnegative, got {chi}")
    if not (kappa > 0 and lambda2 > 0 and m1 > 0):
        raise DomainError("kappa, lambda2 and m1 must be positive")
    if chi == 0:
        return 0.0
    if abs(kappa * m1 - 2.0 * lambda2) <= BRANCH_RTOL * 2.0 * lambda2:
        return m1 * chi / (lambda2 * (2.0 + m1 * chi))
    dd = lambda2 - m1 * kappa / 2.0
    # log1p form of ln((kappa + lambda2 chi) / (kappa (1 + m1 chi / 2))) / dd
    return math.log1p(dd * chi / (kappa * (1.0 + m1 * chi / 2.0))) / dd


def tau_star_max(kappa: float, lambda2: float, m1: float) -> float:
    """Supremum of :func:`tau_star` over ``chi >= 0`` (its ``chi -> inf`` limit)."""
    if not (kappa > 0 and lambda2 > 0 and m1 > 0):
        raise DomainError("kappa, lambda2 and m1 must be positive")
    if abs(kappa * m1 - 2.0 * lambda2) <= BRANCH_RTOL * 2.0 * lambda2:
        return 1.0 / lambda2
    dd = lambda2 - m1 * kappa / 2.0
    return math.log1p(2.0 * dd / (kappa * m1)) / dd


def lemma5_ab(consts: CertificateConstants, lip: LipschitzCoefficients, tau_h: Time):
    """Coefficients ``(a, b)`` bounding the sampling-error integral.

    Raises :class:`InconsistentBoundsError` unless ``a c < B1`` and ``b c <= B3``.
    """
    p = consts.p
    if tau_h is Marker.UNBOUNDED:
        if lip.lambda1 or lip.lambda3:
            raise InconsistentBoundsError("unbounded tau_hat with nonzero lambda1/lambda3")
        return 0.0, 0.0
    if not tau_h > 0:
        raise DomainError(f"tau_hat must be positive, got {tau_h}")
    ps = psi(tau_h, lip.lambda2, p)
    a = lip.lambda1**p * ps
    b = lip.lambda3**p * ps
    c = c_coeff(consts, lip)
    if not (a * c < b1(consts) and b * c <= b3(consts)):
        raise InconsistentBoundsError(
            f"a*c={a * c} vs B1={b1(consts)}, b*c={b * c} vs B3={b3(consts)}"
        )
    return a, b


def miet(
    consts: CertificateConstants,
    lip: LipschitzCoefficients,
    k2: float,
    delta_bar: float,
    eps: float = 0.0,
    rho_bar: Optional[float] = None,
) -> BoundsReport:
    """Minimum inter-event time guarantee and all intermediate constants.

    ``eps`` bounds the disturbance sup-norm. With ``k2 * delta_bar == 0`` and
    ``eps > 0`` the separation argument collapses and ``tau_m`` is
    :data:`Marker.NO_GUARANTEE`.
    """
    if eps < 0:
        raise DomainError("eps must be nonnegative")
    p = consts.p
    B1, B3 = b1(consts), b3(consts)
    t1 = tau_i(1, consts, lip)
    t3 = tau_i(3, consts, lip)
    th = tmin(t1, t3)
    c = c_coeff(consts, lip)
    m1 = (B1 / c) ** (1.0 / p)
    m2 = (max(k2, 0.0) * max(delta_bar, 0.0) / c) ** (1.0 / p)
    a, b = lemma5_ab(consts, lip, th)

    if m2 == 0.0 and eps > 0:
        kappa = math.inf
        ts1: Time = Marker.NO_GUARANTEE
        tm: Time = Marker.NO_GUARANTEE
    else:
        terms = [2.0 * lip.lambda1 / m1]
        if eps > 0:
            terms.append(2.0 * lip.lambda3 * eps / m2)
        kappa = max(terms)
        if kappa == 0.0:
            ts1 = Marker.UNBOUNDED
        else:
            ts1 = tau_star(1.0, kappa, lip.lambda2, m1)
        tm = tmin(ts1, th)
        if is_time(tm) and not tm > 0:
            raise InconsistentBoundsError(f"non-positive tau_m {tm}")

    return BoundsReport(
        B1=B1,
        B3=B3,
        c=c,
        tau1=t1,
        tau3=t3,
        tau_hat=th,
        m1=m1,
        m2=m2,
        kappa=kappa,
        tau_star_1=ts1,
        tau_m=tm,
        a=a,
        b=b,
        eps=eps,
        lambda2=lip.lambda2,
        rho_bar=rho_bar,
        checked=consts.checked,
    )


def _check_monotone(fn, hi: float) -> None:
    grid = np.concatenate([[0.0], np.geomspace(1e-9 * max(hi, 1.0), hi, 400)])
    vals = np.array([fn(r) for r in grid])
    if not np.all(np.diff(vals) > 0):
        raise DomainError("lower_bound_fn is not strictly increasing on the probe grid")


def rho_bar(
    consts: CertificateConstants,
    lyap,
    xi0,
    d_inf_bound: float,
    phi2_sup: float,
    theta2: float,
    theta3: float,
    lower_bound_fn: Callable[[float], float],
    k2: float = 1.0,
    v0: Optional[float] = None,
) -> float:
    """Radius of a ball containing every trajectory from ``xi0``.

    The sublevel value ``L`` of ``V_s + lam V_c`` reachable from ``xi0`` is
    over-approximated and mapped to a radius through the inverse of
    ``lower_bound_fn`` (a class-K lower bound of ``V_s + lam V_c`` in ``|xi|``).
    ``v0`` overrides ``V(xi0)``, e.g. with a bound valid on a whole set.
    """
    k = consts
    if v0 is None:
        v0 = lyap.V(np.asarray(xi0, dtype=float), k.lam)
    level = (
        v0
        + (k.lam * k.mu_d_p * d_inf_bound**k.p + k2 * phi2_sup) / k.nu
        + theta2
        + theta3
    )
    if level <= 0.0:
        return 0.0
    hi = 1.0
    while lower_bound_fn(hi) < level:
        hi *= 2.0
        if hi > 1e300:
            raise DomainError("lower_bound_fn does not reach the required level")
    _check_monotone(lower_bound_fn, hi)
    lo = 0.0
    for _ in range(MAX_ITER):
        if hi - lo <= RTOL * hi:
            break
        mid = 0.5 * (lo + hi)
        if lower_bound_fn(mid) < level:
            lo = mid
        else:
            hi = mid
    return hi


def enlargement_design(
    bounds: BoundsReport, tau_circ: float, T_circ: float, delta_bar: float, p: float = 2.0
) -> EnlargementDesign:
    """Constant ``phi2`` level that stretches every inter-event time to ``tau_circ``.

    Solves ``tau_star(chi_circ) = tau_circ`` for ``chi_circ >= 1``, then sets
    ``chi_star = chi_circ + (m1/m2) rho_bar (chi_circ - 1)`` and
    ``delta_star = chi_star**p * delta_bar``.
    """
    if not bounds.guaranteed or not is_time(bounds.tau_star_1):
        raise DomainError("enlargement needs a finite tau_star(1)")
    if bounds.rho_bar is None:
        raise DomainError("bounds report has no rho_bar")
    if not bounds.m2 > 0:
        raise DomainError("enlargement needs k2 * delta_bar > 0")
    if tau_circ < 0 or not T_circ > 0:
        raise DomainError("tau_circ must be >= 0 and T_circ > 0")
    kappa, lam2, m1 = bounds.kappa, bounds.lambda2, bounds.m1
    tmax = tau_star_max(kappa, lam2, m1)
    if tau_circ >= tmax:
        raise UnachievableFloorError(f"tau_circ={tau_circ} is not below tau*_max={tmax}")

    ts1 = bounds.tau_star_1
    if tau_circ <= ts1:
        chi_c = 1.0
    else:
        lo, hi = 1.0, 2.0
        while tau_star(hi, kappa, lam2, m1) < tau_circ:
            lo, hi = hi, hi * 2.0
        for _ in range(MAX_ITER):
            if hi - lo <= RTOL * hi:
                break
            mid = 0.5 * (lo + hi)
            if tau_star(mid, kappa, lam2, m1) < tau_circ:
                lo = mid
            else:
                hi = mid
        chi_c = hi
    chi_s = chi_c + (m1 / bounds.m2) * bounds.rho_bar * (chi_c - 1.0)
    return EnlargementDesign(
        chi_circ=chi_c,
        tau_circ=tau_circ,
        T_circ=T_circ,
        chi_star=chi_s,
        delta_star=chi_s**p * delta_bar,
        tau_star_max=tmax,
    )


def _ball(rng, n, radius):
    v = rng.standard_normal(n)
    nv = np.linalg.norm(v)
    if nv == 0:
        return v
    return v / nv * radius * rng.uniform() ** (1.0 / n)


def lipschitz_estimate(plant, rho_bar: float, d_inf: float, samples: int = 2000, rng=None):
    """Monte-Carlo lower estimate of the Lipschitz coefficients of ``f_s``.

    Each coefficient is the largest observed difference quotient when only one
    of ``xi``, ``eps``, ``d`` is perturbed. The result is marked ``estimated``;
    declared coefficients should be preferred when available.
    """
    rng = np.random.default_rng(rng)
    n, q = plant.n, plant.q
    best = [0.0, 0.0, 0.0]
    for _ in range(samples):
        xi = _ball(rng, n, rho_bar)
        eps = _ball(rng, n, rho_bar)
        d = _ball(rng, q, d_inf)
        base = plant.f_s(xi, eps, d)
        scale = rng.choice([1e-3, 1e-1, 1.0])
        dxi = _ball(rng, n, scale * max(rho_bar, 1e-12))
        deps = _ball(rng, n, scale * max(rho_bar, 1e-12))
        dd = _ball(rng, q, scale * max(d_inf, 1e-12))
        for idx, (args, delta) in enumerate(
            (
                ((xi + dxi, eps, d), dxi),
                ((xi, eps + deps, d), deps),
                ((xi, eps, d + dd), dd),
            )
        ):
            nd = np.linalg.norm(delta)
            if nd == 0:
                continue
            r = np.linalg.norm(plant.f_s(*args) - base) / nd
            if r > best[idx]:
                best[idx] = float(r)
    return LipschitzCoefficients(*best, estimated=True)

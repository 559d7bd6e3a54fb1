"""Plants, certificates and disturbance realisations.

A plant is ``xi' = f(xi, d) + g(xi) u`` with output ``z = h(xi, d)`` and a
state-feedback law ``u = gamma(xi)``. :func:`lure_plant` and
:func:`lure_certificate` provide the Lur'e benchmark with a piecewise-linear
sector nonlinearity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .bounds import LipschitzCoefficients
from .certificate import CertificateConstants, LyapunovPair
from .errors import DomainError

__all__ = [
    "ControlAffinePlant",
    "linear_plant",
    "lure_H",
    "lure_H_integral",
    "lure_plant",
    "lure_certificate",
    "lure_level_lower_bound",
    "DisturbanceSpec",
    "Disturbance",
    "realize_disturbance",
]


@dataclass(frozen=True)
class ControlAffinePlant:
    n: int
    m: int
    q: int
    s: int
    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]
    h: Callable[[np.ndarray, np.ndarray], np.ndarray]
    gamma: Callable[[np.ndarray], np.ndarray]
    lipschitz: Optional[LipschitzCoefficients] = None
    name: str = "custom"
    # parameters for the compiled kernel, when one exists for this plant family
    kernel: Optional[dict] = field(default=None, compare=False)

    def __post_init__(self):
        x0 = np.zeros(self.n)
        d0 = np.zeros(self.q)
        f0 = np.asarray(self.f(x0, d0), dtype=float)
        h0 = np.atleast_1d(np.asarray(self.h(x0, d0), dtype=float))
        if f0.shape != (self.n,) or h0.shape != (self.s,):
            raise DomainError(f"f/h return shapes {f0.shape}/{h0.shape} do not match n={self.n}, s={self.s}")
        gx = np.asarray(self.g(x0), dtype=float).reshape(self.n, -1)
        if gx.shape != (self.n, self.m):
            raise DomainError(f"g returns shape {gx.shape}, expected {(self.n, self.m)}")
        if np.asarray(self.gamma(x0)).reshape(-1).shape != (self.m,):
            raise DomainError("gamma must return a vector of length m")
        if np.any(f0 != 0) or np.any(h0 != 0):
            raise DomainError("plant requires f(0,0) = 0 and h(0,0) = 0")

    def f_s(self, xi, eps, d):
        """Closed-loop vector field with the input computed from ``xi + eps``."""
        u = np.asarray(self.gamma(xi + eps), dtype=float).reshape(self.m)
        return np.asarray(self.f(xi, d), dtype=float) + np.asarray(self.g(xi), dtype=float).reshape(self.n, self.m) @ u

    def f_c(self, xi, d):
        return self.f_s(xi, np.zeros_like(xi), d)

    def f_u(self, xi, d, u):
        """Vector field with a held input ``u``."""
        return np.asarray(self.f(xi, d), dtype=float) + np.asarray(self.g(xi), dtype=float).reshape(self.n, self.m) @ u


def linear_plant(A, B, K, E=None, C=None) -> ControlAffinePlant:
    """``xi' = A xi + B u + E d``, ``z = C xi``, ``u = K xi``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    K = np.asarray(K, dtype=float).reshape(B.shape[1], A.shape[0])
    n, m = B.shape
    E = np.zeros((n, 1)) if E is None else np.asarray(E, dtype=float).reshape(n, -1)
    C = np.eye(n) if C is None else np.atleast_2d(np.asarray(C, dtype=float))
    return ControlAffinePlant(
        n=n,
        m=m,
        q=E.shape[1],
        s=C.shape[0],
        f=lambda x, d: A @ x + E @ np.atleast_1d(d),
        g=lambda x: B,
        h=lambda x, d: C @ x,
        gamma=lambda x: K @ x,
        name="linear",
    )


def lure_H(r: float, h_star: float) -> float:
    """Sector nonlinearity: ``2r`` inside ``[-h*, h*]``, ``r +- h*`` outside."""
    if abs(r) <= h_star:
        return 2.0 * r
    return r + h_star if r > 0 else r - h_star


def lure_H_integral(x: float, h_star: float) -> float:
    """``int_0^x H(r) dr``."""
    ax = abs(x)
    if ax <= h_star:
        return x * x
    return h_star * h_star + h_star * (ax - h_star) + 0.5 * (ax * ax - h_star * h_star)


def lure_plant(h_star: float = 0.3) -> ControlAffinePlant:
    if h_star < 0:
        raise DomainError("h_star must be nonnegative")
    g_col = np.array([[0.0], [1.0]])

    def f(x, d):
        return np.array([x[1], -lure_H(x[0], h_star) + np.atleast_1d(d)[0]])

    return ControlAffinePlant(
        n=2,
        m=1,
        q=1,
        s=1,
        f=f,
        g=lambda x: g_col,
        h=lambda x, d: np.array([x[0]]),
        gamma=lambda x: np.array([-x[1]]),
        lipschitz=LipschitzCoefficients(3.0, 1.0, 1.0),
        name="lure",
        kernel={"kind": "lure", "h_star": float(h_star)},
    )


_P = np.array([[1.0, 1.0], [1.0, 2.0]])


def lure_certificate(
    upsilon1: float = 3.6e-3,
    n1: float = 1.0,
    n2: float = 0.47,
    sigma: float = 0.99,
    mu_d: float = 5.0,
    lam: float = 4.7e-3,
    h_star: float = 0.3,
    p: float = 2.0,
    checked: bool = True,
):
    """Certificate constants and Lyapunov functions of the Lur'e benchmark.

    ``V_s = (upsilon1/2) xi'P xi + 2 upsilon1 int_0^{xi1} H`` with
    ``P = [[1, 1], [1, 2]]`` and ``V_c = V_s / (upsilon1 (1 - n2))``.
    ``mu`` is stored as ``sqrt(mu^2)`` with
    ``mu^2 = (1/(1-n2)) (1/(4 n1) + 1/n2)``.
    """
    if not upsilon1 > 0 or not n1 > 0:
        raise DomainError("upsilon1 and n1 must be positive")
    if not 0 < n2 < 1:
        raise DomainError(f"n2 must lie in (0, 1), got {n2}")
    if p != 2.0:
        raise DomainError("the Lur'e certificate is quadratic (p = 2)")
    mu_sq = (1.0 / (1.0 - n2)) * (1.0 / (4.0 * n1) + 1.0 / n2)
    lmax = float(np.linalg.eigvalsh(np.array([[5.0, 1.0], [1.0, 2.0]])).max())
    p_norm = float(np.linalg.norm(_P, 2))
    cbar1 = upsilon1 / 2.0 * lmax
    kwargs = dict(
        c1=upsilon1 / 2.0,
        c2=5.0 * upsilon1,
        c3=5.0 * upsilon1,
        cbar1=cbar1,
        cbar2=cbar1 / (upsilon1 * (1.0 - n2)),
        cbar3=(p_norm + 4.0) / (1.0 - n2),
        mu=math.sqrt(mu_sq),
        mu_d=mu_d,
        p=p,
        sigma=sigma,
        lam=lam,
    )
    consts = CertificateConstants(**kwargs) if checked else CertificateConstants.unchecked(**kwargs)
    wc = 1.0 / (1.0 - n2)

    def V_s(x):
        x = np.asarray(x, dtype=float)
        return upsilon1 * (0.5 * x @ _P @ x + 2.0 * lure_H_integral(x[0], h_star))

    def V_c(x):
        return V_s(x) / (upsilon1 * (1.0 - n2))

    def grad_V_c(x):
        x = np.asarray(x, dtype=float)
        g = _P @ x
        g[0] += 2.0 * lure_H(x[0], h_star)
        return wc * g

    kernel = {"kind": "lure", "h_star": float(h_star), "grad_scale": wc}
    return consts, LyapunovPair(V_s=V_s, V_c=V_c, grad_V_c=grad_V_c, kernel=kernel)


def lure_level_lower_bound(consts: CertificateConstants, upsilon1: float, n2: float):
    """Class-K lower bound of ``V_s + lam V_c`` as a function of ``|xi|``.

    Uses ``int_0^x H >= x^2 / 2`` so ``V_s >= (upsilon1/2) xi' [[3,1],[1,2]] xi``.
    """
    lmin = float(np.linalg.eigvalsh(np.array([[3.0, 1.0], [1.0, 2.0]])).min())
    coef = (1.0 + consts.lam / (upsilon1 * (1.0 - n2))) * upsilon1 / 2.0 * lmin

    def lower(r):
        return coef * r * r

    return lower


@dataclass(frozen=True)
class DisturbanceSpec:
    """How to realise ``d(t)``.

    ``kind`` is one of ``zero``, ``gaussian``, ``constant`` or ``table``.
    Gaussian draws are held over ``hold`` seconds (default: the integrator
    step) on ``[0, window)`` and vanish afterwards. A table is a pair of
    breakpoints and row values, each row held until the next breakpoint.
    """

    kind: str = "zero"
    variance: float = 1.0
    window: Optional[float] = None
    hold: Optional[float] = None
    value: tuple = (0.0,)
    times: tuple = ()
    values: tuple = ()
    seed: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("zero", "gaussian", "constant", "table"):
            raise DomainError(f"unknown disturbance kind {self.kind!r}")
        if self.variance < 0:
            raise DomainError("variance must be nonnegative")


@dataclass(frozen=True)
class Disturbance:
    """Piecewise-constant realisation on the integrator grid.

    Row ``j`` of ``values`` holds on ``[j*hold_steps*h, (j+1)*hold_steps*h)``;
    beyond the last row the signal is zero.
    """

    values: np.ndarray
    hold_steps: int
    h: float

    @property
    def q(self) -> int:
        return self.values.shape[1]

    @property
    def d_inf(self) -> float:
        if self.values.size == 0:
            return 0.0
        return float(np.max(np.linalg.norm(self.values, axis=1)))

    def slot_value(self, cell: int) -> np.ndarray:
        """Value on grid cell ``[cell*h, (cell+1)*h)``."""
        j = cell // self.hold_steps
        if j < self.values.shape[0]:
            return self.values[j]
        return np.zeros(self.q)

    def __call__(self, t: float) -> np.ndarray:
        cell = int(math.floor(t / self.h + 1e-9))
        return self.slot_value(max(cell, 0))


def _steps(span: float, h: float, what: str) -> int:
    k = round(span / h)
    if k < 1 or abs(k * h - span) > 1e-9 * max(span, h):
        raise DomainError(f"{what}={span} must be a positive multiple of the step {h}")
    return int(k)


def realize_disturbance(spec: DisturbanceSpec, duration: float, h: float, q: int = 1, rng=None) -> Disturbance:
    """Realise ``spec`` on the grid of step ``h``.

    ``rng`` (a ``numpy.random.Generator`` or seed) takes precedence over
    ``spec.seed``.
    """
    window = duration if spec.window is None else spec.window
    if spec.kind == "zero" or window <= 0:
        return Disturbance(np.zeros((0, q)), 1, h)
    if spec.kind == "gaussian":
        hold = h if spec.hold is None else spec.hold
        hs = _steps(hold, h, "hold")
        nslots = int(math.ceil(round(window / h) / hs))
        gen = np.random.default_rng(spec.seed if rng is None else rng)
        vals = math.sqrt(spec.variance) * gen.standard_normal((nslots, q))
        return Disturbance(vals, hs, h)
    if spec.kind == "constant":
        val = np.asarray(spec.value, dtype=float).reshape(1, -1)
        if val.shape[1] != q:
            raise DomainError("constant disturbance has the wrong dimension")
        ws = _steps(window, h, "window")
        return Disturbance(val, ws, h)
    # table: expand onto the grid
    times = np.asarray(spec.times, dtype=float)
    rows = np.asarray(spec.values, dtype=float).reshape(len(times), -1)
    if rows.shape[1] != q or np.any(np.diff(times) <= 0) or (times.size and times[0] != 0.0):
        raise DomainError("table disturbance needs increasing times starting at 0 and q columns")
    ncell = int(round(window / h))
    centres = (np.arange(ncell) + 0.5) * h
    idx = np.searchsorted(times, centres, side="right") - 1
    return Disturbance(rows[idx], 1, h)

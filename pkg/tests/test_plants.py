import numpy as np
import pytest
from scipy.integrate import quad

from etc_lab.errors import DomainError
from etc_lab.plants import (
    ControlAffinePlant,
    DisturbanceSpec,
    linear_plant,
    lure_H,
    lure_H_integral,
    lure_level_lower_bound,
    lure_plant,
    realize_disturbance,
)


def test_sector_nonlinearity():
    assert lure_H(0.1, 0.3) == pytest.approx(0.2)
    assert lure_H(1.0, 0.3) == pytest.approx(1.3)
    assert lure_H(-1.0, 0.3) == pytest.approx(-1.3)
    for r in np.linspace(-3, 3, 61):
        assert r * lure_H(r, 0.3) >= r * r - 1e-15  # sector [1, 2]
        assert abs(lure_H(r, 0.3)) <= 2 * abs(r) + 1e-15


@pytest.mark.parametrize("x", [-2.0, -0.3, -0.1, 0.0, 0.2, 0.3, 1.7])
def test_sector_integral_by_quadrature(x):
    ref, _ = quad(lambda r: lure_H(r, 0.3), 0.0, x, points=[0.3, -0.3] if abs(x) > 0.3 else None)
    assert lure_H_integral(x, 0.3) == pytest.approx(ref, abs=1e-12)


def test_lure_closed_loop_field():
    p = lure_plant()
    xi, eps, d = np.array([0.5, -0.2]), np.array([0.1, 0.05]), np.array([0.3])
    # u = -(xi2 + eps2)
    assert np.allclose(p.f_s(xi, eps, d), [-0.2, -lure_H(0.5, 0.3) - (-0.15) + 0.3])
    assert np.allclose(p.f_c(xi, d), [-0.2, -0.8 + 0.2 + 0.3])
    assert np.allclose(p.f_u(xi, d, np.array([0.7])), [-0.2, -0.8 + 0.7 + 0.3])
    assert np.allclose(p.h(xi, d), [0.5])


def test_lure_lipschitz_bound_holds():
    p = lure_plant()
    lip = p.lipschitz
    rng = np.random.default_rng(0)
    for _ in range(300):
        xi, eps, d = rng.normal(size=2) * 2, rng.normal(size=2), rng.normal(size=1)
        lhs = np.linalg.norm(p.f_s(xi, eps, d))
        assert lhs <= lip.lambda1 * np.linalg.norm(xi) + lip.lambda2 * np.linalg.norm(eps) + lip.lambda3 * abs(d[0]) + 1e-12


def test_level_lower_bound(lure):
    lower = lure_level_lower_bound(lure["consts"], 3.6e-3, 0.47)
    rng = np.random.default_rng(1)
    for _ in range(200):
        x = rng.normal(size=2) * rng.uniform(0.01, 5)
        assert lower(np.linalg.norm(x)) <= lure["lyap"].V(x, lure["consts"].lam) * (1 + 1e-12)


def test_plant_validation():
    with pytest.raises(DomainError):
        ControlAffinePlant(n=2, m=1, q=1, s=1, f=lambda x, d: np.ones(2), g=lambda x: np.ones((2, 1)),
                           h=lambda x, d: x[:1], gamma=lambda x: x[:1])
    with pytest.raises(DomainError):
        ControlAffinePlant(n=2, m=1, q=1, s=1, f=lambda x, d: np.zeros(3), g=lambda x: np.ones((2, 1)),
                           h=lambda x, d: x[:1], gamma=lambda x: x[:1])
    with pytest.raises(DomainError):
        lure_plant(-1.0)


def test_linear_plant():
    p = linear_plant([[0, 1], [-1, 0]], [[0], [1]], [[-1, -1]], E=[[0], [1]])
    xi = np.array([1.0, 2.0])
    assert np.allclose(p.f_c(xi, np.array([0.5])), [2.0, -1.0 - 3.0 + 0.5])


def test_gaussian_disturbance_is_seeded_and_held():
    spec = DisturbanceSpec("gaussian", variance=4.0, window=1.0, hold=0.01)
    a = realize_disturbance(spec, 2.0, 1e-3, rng=5)
    b = realize_disturbance(spec, 2.0, 1e-3, rng=np.random.default_rng(5))
    assert np.array_equal(a.values, b.values)
    assert a.hold_steps == 10 and a.values.shape == (100, 1)
    assert np.array_equal(a(0.0), a(0.0099)) and np.array_equal(a(0.995), a.values[-1])
    assert np.all(a(1.5) == 0.0)  # silent after the window
    assert a.d_inf == pytest.approx(np.abs(a.values).max())
    big = realize_disturbance(DisturbanceSpec("gaussian", variance=4.0), 50.0, 1e-3, rng=1)
    assert np.std(big.values) == pytest.approx(2.0, rel=0.02)


def test_other_disturbances():
    z = realize_disturbance(DisturbanceSpec(), 1.0, 1e-3)
    assert z.d_inf == 0.0 and np.all(z(0.5) == 0)
    c = realize_disturbance(DisturbanceSpec("constant", value=(0.7,), window=0.5), 1.0, 1e-3)
    assert c(0.2)[0] == 0.7 and c(0.6)[0] == 0.0
    t = realize_disturbance(DisturbanceSpec("table", times=(0.0, 0.25), values=(1.0, -2.0), window=0.5), 1.0, 1e-3)
    assert t(0.1)[0] == 1.0 and t(0.3)[0] == -2.0 and t(0.7)[0] == 0.0
    with pytest.raises(DomainError):
        realize_disturbance(DisturbanceSpec("gaussian", hold=0.0015), 1.0, 1e-3)
    with pytest.raises(DomainError):
        DisturbanceSpec("pink")

import numba
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from csgemos.optimize import nelder_mead


def rosenbrock(x):
    return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (1 - x[:-1]) ** 2))


@numba.njit
def shifted_quadratic(x, args):
    centre, scale = args
    return np.sum(scale * (x - centre) ** 2)


def test_rosenbrock():
    res = nelder_mead(rosenbrock, [-1.2, 1.0], step=0.5, ftol=1e-14, max_iter=5000)
    np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-5)
    assert res.converged


def test_compiled_objective():
    centre = np.array([1.0, -2.0, 3.0, 0.5])
    res = nelder_mead(shifted_quadratic, np.zeros(4), step=0.5, ftol=1e-14, args=(centre, np.array([1.0, 2.0, 3.0, 4.0])))
    np.testing.assert_allclose(res.x, centre, atol=1e-5)
    assert res.fun < 1e-9


def test_iteration_cap_reports_not_converged():
    res = nelder_mead(rosenbrock, [-1.2, 1.0], step=0.1, max_iter=5, restart=False)
    assert not res.converged
    assert res.iterations == 5


def test_interpreted_and_compiled_loops_agree():
    centre, scale = np.array([0.3, 0.7]), np.array([1.0, 5.0])
    a = nelder_mead(lambda x: shifted_quadratic(x, (centre, scale)), [2.0, 2.0], step=0.3)
    b = nelder_mead(shifted_quadratic, [2.0, 2.0], step=0.3, args=(centre, scale))
    np.testing.assert_array_equal(a.x, b.x)
    assert a.evaluations == b.evaluations


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=5), st.integers(0, 2**31))
def test_never_worse_than_start(x0, seed):
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.1, 3, size=len(x0))

    def bumpy(x):
        return float(np.sum(w * np.sin(3 * x) + 0.1 * x * x))

    f0 = bumpy(np.array(x0))
    res = nelder_mead(bumpy, x0, step=0.7, max_iter=200)
    assert res.fun <= f0
    assert res.fun == pytest.approx(bumpy(res.x))

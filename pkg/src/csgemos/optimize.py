"""Nelder-Mead simplex minimization with a single restart.

The iteration loop is written once and used two ways: interpreted for
ordinary Python objectives, and compiled with numba for objectives that are
themselves numba functions. Objectives are called as ``fun(x, args)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np


@dataclass
class SimplexResult:
    x: np.ndarray
    fun: float
    iterations: int
    evaluations: int
    converged: bool


def _initial_simplex(x0: np.ndarray, step) -> np.ndarray:
    n = x0.size
    steps = np.broadcast_to(np.asarray(step, dtype=float), (n,))
    simplex = np.repeat(x0[None, :], n + 1, axis=0)
    for i in range(n):
        simplex[i + 1, i] += steps[i]
    return simplex


def _run_impl(fun, args, simplex, fvals, ftol, max_iter):
    n = simplex.shape[1]
    evals = 0
    # simplex-mean objective per iteration; a full cycle is n + 1 iterations
    history = np.empty(max_iter + 1)
    history[0] = fvals.mean()
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        order = np.argsort(fvals, kind="mergesort")
        simplex, fvals = simplex[order], fvals[order]
        centroid = simplex[:-1].sum(axis=0) / n
        worst = simplex[-1].copy()

        xr = centroid + (centroid - worst)
        fr = fun(xr, args)
        evals += 1
        if fr < fvals[0]:
            xe = centroid + 2.0 * (centroid - worst)
            fe = fun(xe, args)
            evals += 1
            if fe < fr:
                simplex[-1], fvals[-1] = xe, fe
            else:
                simplex[-1], fvals[-1] = xr, fr
        elif fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
        else:
            if fr < fvals[-1]:
                xc = centroid + 0.5 * (xr - centroid)
            else:
                xc = centroid + 0.5 * (worst - centroid)
            fc = fun(xc, args)
            evals += 1
            if fc < min(fr, fvals[-1]):
                simplex[-1], fvals[-1] = xc, fc
            else:
                # shrink towards the best vertex
                for i in range(1, n + 1):
                    simplex[i] = simplex[0] + 0.5 * (simplex[i] - simplex[0])
                    fvals[i] = fun(simplex[i], args)
                evals += n

        history[it] = fvals.mean()
        if it > n and history[it - n - 1] - history[it] < ftol:
            converged = True
            break
    order = np.argsort(fvals, kind="mergesort")
    return simplex[order], fvals[order], it, evals, converged


_run_py = _run_impl
_run_jit = numba.njit(cache=True)(_run_impl)


def nelder_mead(fun, x0, step=0.1, ftol=1e-9, max_iter=2000, restart=True, restart_scale=0.5,
                args=None) -> SimplexResult:
    """Minimize ``fun`` from ``x0``.

    ``fun`` is either a Python callable ``fun(x)`` or, with ``args`` given, a
    numba function ``fun(x, args)`` whose loop then runs compiled. The
    returned point is never worse than ``x0``. With ``restart`` the search is
    repeated once from a fresh simplex around the best vertex, which recovers
    from premature collapse of the first simplex.
    """
    if args is None:
        run, call_args = _run_py, ()

        def call(x, _args, _f=fun):
            return float(_f(x))
    else:
        run, call_args, call = _run_jit, args, fun
    x0 = np.asarray(x0, dtype=float)
    f0 = float(call(x0, call_args))
    simplex = _initial_simplex(x0, step)
    fvals = np.array([f0] + [float(call(v, call_args)) for v in simplex[1:]])
    total_evals = x0.size + 1
    simplex, fvals, iters, evals, converged = run(call, call_args, simplex, fvals, ftol, max_iter)
    total_evals += evals
    if restart:
        best = simplex[0]
        simplex = _initial_simplex(best, restart_scale * np.asarray(step, dtype=float))
        fv = np.array([fvals[0]] + [float(call(v, call_args)) for v in simplex[1:]])
        total_evals += x0.size
        simplex, fvals, iters2, evals2, converged = run(call, call_args, simplex, fv, ftol, max_iter)
        total_evals += evals2
        iters += iters2
    x, fx = simplex[0], float(fvals[0])
    if not fx <= f0:
        x, fx = x0, f0
    return SimplexResult(x.copy(), fx, int(iters), int(total_evals), bool(converged))

"""Constrained optimisation by linear approximations (Powell's COBYLA).

Minimise ``f(x)`` subject to ``c(x) >= 0`` without derivatives.  The method
keeps a simplex of ``n + 1`` evaluated points, fits linear models of the
objective and of every constraint through them, and takes trust-region
steps on those models.  Feasibility and optimality are traded through the
merit function ``f + mu * max(0, -min c)``; the radius ``rho`` shrinks
from ``rhobeg`` to ``rhoend``.

The vertices are stored explicitly and the inverse of the displacement
matrix is recomputed each iteration.  That is cheaper to get right than
Powell's rank-one updates and costs nothing at the dimensions used here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import nnls

# simplex acceptability and step parameters from Powell's construction
ALPHA = 0.25   # vertices closer than ALPHA*rho to the opposite face are poor
BETA = 2.1     # edges longer than BETA*rho are poor
GAMMA = 0.5    # geometry steps have length GAMMA*rho
DELTA = 1.1    # vertices farther than DELTA*rho are candidates for dropping

_TOL = 1e-12


@dataclass(eq=False)
class CobylaResult:
    x: np.ndarray
    fun: float
    maxcv: float
    nfev: int
    rho: float
    success: bool
    message: str
    # (f, maxcv) for every evaluation in order
    history: list[tuple[float, float]] = field(default_factory=list)


def _violation(c: np.ndarray) -> float:
    return float(max(0.0, -np.min(c))) if c.size else 0.0


def _hull_min_norm(vectors: np.ndarray) -> np.ndarray:
    """Minimum-norm point of the convex hull of the rows of ``vectors``."""
    k = vectors.shape[0]
    if k == 1:
        return vectors[0].copy()
    big = 1e3 * (1.0 + np.abs(vectors).max())
    mat = np.vstack([vectors.T, big * np.ones((1, k))])
    rhs = np.concatenate([np.zeros(vectors.shape[1]), [big]])
    lam, _ = nnls(mat, rhs)
    lam /= lam.sum()
    return lam @ vectors


def _to_boundary(d: np.ndarray, s: np.ndarray, rho: float) -> float:
    """Largest t with ||d + t s|| <= rho."""
    a = s @ s
    b = d @ s
    c = d @ d - rho * rho
    return float((-b + np.sqrt(max(b * b - a * c, 0.0))) / a)


def trust_region_step(g: np.ndarray, grads: np.ndarray, cvals: np.ndarray, rho: float,
                      max_steps: int | None = None) -> tuple[np.ndarray, bool]:
    """Approximately minimise ``g.d`` s.t. ``cvals + grads @ d >= 0`` and ``|d| <= rho``.

    Stage one lowers the largest linearised violation; stage two lowers the
    objective model while keeping the violation at the stage-one level.
    Both stages follow projected steepest-descent paths through an active
    set, and the calculation ends once a path meets the ball boundary.
    Returns ``(d, reached_boundary)``.
    """
    n = g.size
    d = np.zeros(n)
    m = cvals.size
    max_steps = max_steps or 4 * (n + m) + 10
    scale = 1.0 + np.abs(cvals).max(initial=0.0)

    # stage one: r_i(d) = -(c_i + a_i.d) is the violation of constraint i
    def viol(d):
        return -(cvals + grads @ d) if m else np.zeros(0)

    r = viol(d)
    z = max(0.0, r.max(initial=0.0))
    for _ in range(max_steps):
        if z <= _TOL * scale:
            break
        active = np.flatnonzero(r >= z - 1e-12 * scale)
        w = _hull_min_norm(-grads[active])
        rate = w @ w
        if rate <= 1e-24:
            break
        s = -w
        t = _to_boundary(d, s, rho)
        t_zero = z / rate
        hit_boundary = t <= t_zero
        t = min(t, t_zero)
        others = np.setdiff1d(np.arange(m), active)
        if others.size:
            closing = rate - (-grads[others] @ s)
            gap = z - r[others]
            ok = closing > 1e-18
            if ok.any():
                t_new = gap[ok] / closing[ok]
                if t_new.min() < t:
                    t, hit_boundary = float(max(t_new.min(), 0.0)), False
        d = d + t * s
        r = viol(d)
        z = max(0.0, r.max(initial=0.0))
        if hit_boundary:
            return d, True

    # stage two: keep r_i(d) <= z and descend on g.d
    limit = z
    for _ in range(max_steps):
        active = np.flatnonzero(r >= limit - 1e-10 * scale) if m else np.zeros(0, int)
        if active.size:
            lam, _ = nnls(grads[active].T, g)
            s = grads[active].T @ lam - g
        else:
            s = -g.copy()
        if s @ s <= 1e-24 * (1.0 + g @ g):
            return d, False
        t = _to_boundary(d, s, rho)
        hit_boundary = True
        others = np.setdiff1d(np.arange(m), active)
        if others.size:
            rate = -grads[others] @ s          # growth of r_j along s
            room = limit - r[others]
            ok = rate > 1e-18
            if ok.any():
                t_new = np.maximum(room[ok], 0.0) / rate[ok]
                if t_new.min() < t:
                    t, hit_boundary = float(t_new.min()), False
        d = d + t * s
        r = viol(d)
        if hit_boundary:
            return d, True
    return d, bool(np.linalg.norm(d) >= rho * (1 - 1e-12))


def minimize(fun: Callable[[np.ndarray], float], x0, constraints: Callable[[np.ndarray], np.ndarray] | None = None,
             rhobeg: float = 1.0, rhoend: float = 1e-4, maxfun: int = 300,
             callback: Callable[[np.ndarray, float, float], None] | None = None) -> CobylaResult:
    """Minimise ``fun`` subject to ``constraints(x) >= 0`` element-wise.

    ``maxfun`` caps the number of function evaluations.  The returned point
    is the best feasible point evaluated (or the least infeasible one if no
    evaluated point was feasible).
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    n = x0.size
    if n == 0:
        raise ValueError("x0 must be non-empty")
    if not (rhobeg > 0 and 0 < rhoend <= rhobeg):
        raise ValueError("require 0 < rhoend <= rhobeg")
    if maxfun < n + 1:
        raise ValueError(f"maxfun must be at least n + 1 = {n + 1}")
    cons = constraints or (lambda x: np.zeros(0))

    history: list[tuple[float, float]] = []
    best_seen: dict = {}

    def evaluate(x):
        f = float(fun(x))
        c = np.asarray(cons(x), dtype=float).ravel()
        if not np.isfinite(f):
            f = np.inf
        v = _violation(c)
        history.append((f, v))
        key = (v > 0, v if v > 0 else f)
        if not best_seen or key < best_seen["key"]:
            best_seen.update(key=key, x=x.copy(), f=f, v=v)
        if callback:
            callback(x, f, v)
        return f, c, v

    rho = float(rhobeg)
    mu = 0.0
    verts = np.empty((n + 1, n))
    fv = np.empty(n + 1)
    cv: list[np.ndarray] = []
    vv = np.empty(n + 1)
    verts[0] = x0
    fv[0], c, vv[0] = evaluate(x0)
    cv.append(c)
    # each coordinate step starts from the best vertex found so far
    centre, f_centre = x0.copy(), fv[0]
    for j in range(n):
        x = centre.copy()
        x[j] += rho
        verts[j + 1] = x
        fv[j + 1], c, vv[j + 1] = evaluate(x)
        cv.append(c)
        if fv[j + 1] < f_centre:
            centre, f_centre = x, fv[j + 1]
    cmat = np.array(cv)
    message = "trust region radius reached its final value"
    skip_geometry = True

    def pick_best():
        phi = fv + mu * vv
        best = int(np.argmin(phi))
        if mu == 0:
            ties = np.flatnonzero(phi == phi[best])
            best = int(ties[np.argmin(vv[ties])])
        return best

    while True:
        if len(history) >= maxfun:
            message = "maximum number of function evaluations reached"
            break
        b = pick_best()
        others = [j for j in range(n + 1) if j != b]
        sim = verts[others] - verts[b]
        try:
            simi = np.linalg.inv(sim).T
        except np.linalg.LinAlgError:
            message = "simplex became degenerate"
            break
        vsig = 1.0 / np.sqrt((simi ** 2).sum(axis=1))
        veta = np.sqrt((sim ** 2).sum(axis=1))
        parsig, pareta = ALPHA * rho, BETA * rho
        acceptable = bool(np.all(vsig >= parsig) and np.all(veta <= pareta))

        # linear models through the simplex: grad . sim_j = value_j - value_b
        with np.errstate(invalid="ignore", over="ignore"):
            g = simi.T @ (fv[others] - fv[b])
            grads = (simi.T @ (cmat[others] - cmat[b])).T if cmat.shape[1] else np.zeros((0, n))
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(grads))):
            message = "objective or constraints are not finite on the simplex"
            break

        if not skip_geometry and not acceptable:
            # replace the worst-shaped vertex by a point GAMMA*rho from the best one
            if veta.max() > pareta:
                jdrop = int(np.argmax(veta))
            else:
                jdrop = int(np.argmin(vsig))
            dx = GAMMA * rho * vsig[jdrop] * simi[jdrop]
            lin_p = cmat[b] + grads @ dx
            lin_m = cmat[b] - grads @ dx
            viol_p = _violation(lin_p)
            viol_m = _violation(lin_m)
            if mu * (viol_p - viol_m) > -2.0 * (g @ dx):
                dx = -dx
            x = verts[b] + dx
            f, c, v = evaluate(x)
            slot = others[jdrop]
            verts[slot], fv[slot], cmat[slot], vv[slot] = x, f, c, v
            continue

        d, full = trust_region_step(g, grads, cmat[b], rho)
        dnorm = float(np.linalg.norm(d))
        improved = False
        if full or dnorm >= 0.5 * rho:
            resnew = _violation(cmat[b] + grads @ d)
            prerec = vv[b] - resnew
            model_change = float(g @ d)
            barmu = model_change / prerec if prerec > 0 else 0.0
            if mu < 1.5 * barmu:
                mu = 2.0 * barmu
                if pick_best() != b:
                    continue
            prerem = mu * prerec - model_change
            x = verts[b] + d
            f, c, v = evaluate(x)
            # geometry steps resume only after a trust-region step fails
            skip_geometry = True
            trured = (fv[b] + mu * vv[b]) - (f + mu * v)
            if mu == 0 and f == fv[b]:
                prerem = prerec
                trured = vv[b] - v

            # choose the vertex the new point replaces
            ratio = 1.0 if trured <= 0 else 0.0
            jdrop = None
            sigbar = np.empty(n)
            for j in range(n):
                temp = abs(simi[j] @ d)
                if temp > ratio:
                    jdrop, ratio = j, temp
                sigbar[j] = temp * vsig[j]
            edgmax = DELTA * rho
            far = None
            for j in range(n):
                if sigbar[j] >= parsig or sigbar[j] >= vsig[j]:
                    temp = veta[j] if trured <= 0 else float(np.linalg.norm(d - sim[j]))
                    if temp > edgmax:
                        far, edgmax = j, temp
            if far is not None:
                jdrop = far
            if jdrop is not None:
                slot = others[jdrop]
                verts[slot], fv[slot], cmat[slot], vv[slot] = x, f, c, v
                improved = trured > 0 and trured >= 0.1 * prerem
        if improved:
            continue

        if not acceptable:
            skip_geometry = False
            continue
        if rho <= rhoend:
            break
        rho *= 0.5
        if rho <= 1.5 * rhoend:
            rho = rhoend
        if mu > 0:
            denom = 0.0
            for k in range(cmat.shape[1]):
                cmin, cmax = cmat[:, k].min(), cmat[:, k].max()
                if cmin < 0.5 * cmax:
                    temp = max(cmax, 0.0) - cmin
                    denom = temp if denom <= 0 else min(denom, temp)
            spread = fv.max() - fv.min()
            if denom == 0:
                mu = 0.0
            elif spread < mu * denom:
                mu = spread / denom

    x = best_seen["x"]
    return CobylaResult(x=x, fun=best_seen["f"], maxcv=best_seen["v"], nfev=len(history), rho=rho,
                        success=message.startswith("trust region") and best_seen["v"] <= 1e-9,
                        message=message, history=history)

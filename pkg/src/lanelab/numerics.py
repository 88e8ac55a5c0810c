"""Shared numerical kernels.

Adaptive ODE integration with dense output, 1-D quadrature grids, damped
Newton with finite-difference Jacobians, bisection, the W_{-1} branch of the
Lambert W function, and Richardson extrapolation.  Everything here is pure:
no shared mutable state, safe to call from parallel workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import solve_ivp
from scipy.special import roots_jacobi

from .exceptions import (
    DomainError,
    InsufficientData,
    NoConvergence,
    SingularJacobian,
    StepFailure,
)

DEFAULT_ODE_TOL = 1e-10
DEFAULT_NEWTON_TOL = 1e-10
DEFAULT_QUAD_TOL = 1e-10


# ---------------------------------------------------------------------------
# quadrature grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Grid1D:
    """Quadrature rule: strictly increasing nodes with positive weights.

    Integrating the constant 1 reproduces the interval length, and composite
    Gauss rules integrate polynomials up to their design order exactly.
    """

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("need at least two nodes")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")
        if nodes[0] < 0:
            raise ValueError("first node must be >= 0")
        if np.any(weights <= 0):
            raise ValueError("weights must be positive")
        length = nodes[-1] - nodes[0]
        if abs(weights.sum() - length) > 1e-12 * max(1.0, length):
            raise ValueError("weights do not reproduce the interval length")

    def integrate(self, values) -> float:
        """Integrate samples (array or callable on the nodes)."""
        if callable(values):
            values = values(self.nodes)
        return float(np.dot(self.weights, np.asarray(values, dtype=float)))

    @staticmethod
    def trapezoid(nodes) -> "Grid1D":
        nodes = np.asarray(nodes, dtype=float)
        h = np.diff(nodes)
        w = np.zeros_like(nodes)
        w[:-1] += 0.5 * h
        w[1:] += 0.5 * h
        return Grid1D(nodes, w)

    @staticmethod
    def gauss_legendre(a: float, b: float, order: int = 16, panels: int = 1) -> "Grid1D":
        """Composite Gauss-Legendre rule with `panels` equal panels."""
        x, w = leggauss(order)
        edges = np.linspace(a, b, panels + 1)
        nodes, weights = [], []
        for lo, hi in zip(edges[:-1], edges[1:]):
            mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
            nodes.append(mid + half * x)
            weights.append(half * w)
        return Grid1D(np.concatenate(nodes), np.concatenate(weights))


def gauss_panels(a: float, b: float, order: int = 16, panels: int = 1):
    """Composite Gauss-Legendre nodes/weights on [a, b] (any sign of a)."""
    x, w = leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        nodes.append(mid + half * x)
        weights.append(half * w)
    return np.concatenate(nodes), np.concatenate(weights)


def gauss_log_panels(a: float, b: float, order: int = 16, panels: int = 8):
    """Gauss-Legendre panels uniform in log-space on [a, b], 0 < a < b.

    Returns nodes r and weights already including the dr = r dlog(r) factor.
    """
    t, wt = gauss_panels(np.log(a), np.log(b), order, panels)
    r = np.exp(t)
    return r, wt * r


def gauss_jacobi_01(order: int, alpha: float):
    """Nodes/weights for integrals of u**alpha * f(u) over u in (0, 1).

    Requires alpha > -1.  Weights absorb the u**alpha factor: the rule is
    sum(w * f(u)).
    """
    if alpha <= -1:
        raise DomainError(f"endpoint exponent {alpha} is not integrable")
    # weight (1-x)^a (1+x)^b on [-1,1]; map u = (1+x)/2 so u^alpha needs b=alpha
    x, w = roots_jacobi(order, 0.0, alpha)
    u = 0.5 * (1.0 + x)
    # dx = 2 du and (1+x)^alpha = (2u)^alpha
    return u, w * 0.5 ** (alpha + 1.0)


# ---------------------------------------------------------------------------
# ODE integration
# ---------------------------------------------------------------------------

@dataclass
class OdeTrajectory:
    """Adaptive-step trajectory with dense output.

    `r` holds the accepted step endpoints, `states` the state at each of them
    (shape (len(r), n)).  Calling the trajectory evaluates the dense output at
    arbitrary points in [r[0], r[-1]].
    """

    r: np.ndarray
    states: np.ndarray
    _dense: object = field(repr=False, default=None)
    events_r: list = field(default_factory=list)
    events_state: list = field(default_factory=list)
    event_index: int | None = None

    def __call__(self, r):
        out = self._dense(np.asarray(r, dtype=float))
        return out.T if np.ndim(r) else out


def integrate_ode(rhs, r0: float, r1: float, state0, tol: float = DEFAULT_ODE_TOL,
                  events=None, max_step: float = np.inf) -> OdeTrajectory:
    """Integrate state' = rhs(r, state) from r0 to r1 with local error `tol`.

    Uses an embedded Runge-Kutta 5(4) pair with PI step control and dense
    output.  `events` are scalar functions of (r, state); the first event with
    `terminal = True` set on it stops the run.  Raises StepFailure when the
    controller underflows the step (singular or blowing-up trajectory).
    """
    if not r1 > r0:
        raise DomainError("require r1 > r0")
    if r0 < 0:
        raise DomainError("require r0 >= 0")
    if not tol > 0:
        raise DomainError("require tol > 0")
    state0 = np.asarray(state0, dtype=float)
    scale = max(1.0, float(np.max(np.abs(state0))))
    sol = solve_ivp(rhs, (r0, r1), state0, method="RK45", rtol=tol,
                    atol=tol * 1e-3 * scale, dense_output=True, events=events,
                    max_step=max_step)
    if sol.status == -1:
        raise StepFailure(sol.message)
    traj = OdeTrajectory(r=sol.t, states=sol.y.T, _dense=sol.sol)
    if events is not None:
        traj.events_r = [np.asarray(t) for t in sol.t_events]
        traj.events_state = [np.asarray(y) for y in sol.y_events]
        if sol.status == 1:
            hits = [i for i, t in enumerate(sol.t_events) if t.size > 0]
            if hits:
                traj.event_index = max(
                    hits, key=lambda i: sol.t_events[i][-1] if sol.t_events[i].size else -np.inf
                )
    return traj


# ---------------------------------------------------------------------------
# scalar and vector root solving
# ---------------------------------------------------------------------------

@dataclass
class RootResult:
    value: object
    residual: float
    iterations: int
    converged: bool


def bisect(f, a: float, b: float, tol: float = 1e-13, max_iter: int = 200) -> RootResult:
    """Bisection on a sign change of f over [a, b]."""
    fa, fb = f(a), f(b)
    if fa == 0.0:
        return RootResult(a, 0.0, 0, True)
    if fb == 0.0:
        return RootResult(b, 0.0, 0, True)
    if np.sign(fa) == np.sign(fb):
        raise DomainError("no sign change on the bracket")
    it = 0
    while it < max_iter and (b - a) > tol * max(1.0, abs(a), abs(b)):
        mid = 0.5 * (a + b)
        fm = f(mid)
        it += 1
        if fm == 0.0:
            return RootResult(mid, 0.0, it, True)
        if np.sign(fm) == np.sign(fa):
            a, fa = mid, fm
        else:
            b, fb = mid, fm
    mid = 0.5 * (a + b)
    return RootResult(mid, abs(f(mid)), it, (b - a) <= tol * max(1.0, abs(a), abs(b)))


def fd_jacobian(F, x, f0=None):
    """Forward-difference Jacobian with step sqrt(eps) * (1 + |x|)."""
    x = np.asarray(x, dtype=float)
    if f0 is None:
        f0 = np.asarray(F(x), dtype=float)
    n, m = x.size, np.asarray(f0).size
    J = np.empty((m, n))
    h0 = np.sqrt(np.finfo(float).eps)
    for j in range(n):
        h = h0 * (1.0 + abs(x[j]))
        xp = x.copy()
        xp[j] += h
        J[:, j] = (np.asarray(F(xp), dtype=float) - f0) / h
    return J


def newton_solve(F, x0, tol: float = DEFAULT_NEWTON_TOL, max_iter: int = 50,
                 jacobian=None, callback=None) -> RootResult:
    """Damped Newton for F(x) = 0 with backtracking on the residual norm.

    The Jacobian defaults to forward differences.  Convergence means
    ||F(x)||_inf <= tol.  Raises NoConvergence after max_iter productive
    iterations and SingularJacobian when the linear solve fails even after
    Tikhonov regularization.
    """
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    f = np.atleast_1d(np.asarray(F(x), dtype=float))
    norm = np.max(np.abs(f))
    for it in range(1, max_iter + 1):
        if norm <= tol:
            return RootResult(x.copy(), norm, it - 1, True)
        J = jacobian(x) if jacobian is not None else fd_jacobian(F, x, f)
        step = _solve_linear(J, -f)
        lam, accepted = 1.0, False
        for _ in range(30):
            x_try = x + lam * step
            if callback is not None:
                x_try = callback(x_try)
            f_try = np.atleast_1d(np.asarray(F(x_try), dtype=float))
            norm_try = np.max(np.abs(f_try))
            if np.isfinite(norm_try) and norm_try < norm * (1.0 - 0.25 * lam) + tol:
                x, f, norm, accepted = x_try, f_try, norm_try, True
                break
            lam *= 0.5
        if not accepted:
            # stagnated line search: take the tiny step anyway and re-assess
            x = x + lam * step
            if callback is not None:
                x = callback(x)
            f = np.atleast_1d(np.asarray(F(x), dtype=float))
            norm = np.max(np.abs(f))
    if norm <= tol:
        return RootResult(x.copy(), norm, max_iter, True)
    raise NoConvergence(f"newton_solve: ||F||={norm:.3e} > tol={tol:.1e} "
                        f"after {max_iter} iterations")


def _solve_linear(J, rhs):
    try:
        step = np.linalg.solve(J, rhs)
        if np.all(np.isfinite(step)):
            return step
    except np.linalg.LinAlgError:
        pass
    # Tikhonov fallback with increasing damping
    JtJ = J.T @ J
    Jtr = J.T @ rhs
    scale = np.trace(JtJ) / max(1, J.shape[1])
    for damp in (1e-12, 1e-9, 1e-6, 1e-3):
        try:
            step = np.linalg.solve(JtJ + damp * scale * np.eye(J.shape[1]), Jtr)
            if np.all(np.isfinite(step)):
                return step
        except np.linalg.LinAlgError:
            continue
    raise SingularJacobian("linear solve failed after regularization attempts")


# ---------------------------------------------------------------------------
# Lambert W, branch -1
# ---------------------------------------------------------------------------

def lambert_wm1(x: float) -> float:
    """W_{-1}(x): the solution y <= -1 of y * exp(y) = x for x in [-1/e, 0).

    Halley iteration from an asymptotic seed; the defining residual is driven
    below 1e-13 relative.
    """
    x = float(x)
    if not (-np.exp(-1.0) <= x < 0.0):
        raise DomainError(f"lambert_wm1 needs x in [-1/e, 0), got {x}")
    if x == -np.exp(-1.0):
        return -1.0
    p = -np.sqrt(2.0 * (1.0 + np.e * x))
    if p > -1e-4:
        # branch-point series is already at full precision here
        return -1.0 + p - p * p / 3.0 + 11.0 * p**3 / 72.0
    if x > -0.25:
        l1 = np.log(-x)
        l2 = np.log(-l1)
        w = l1 - l2 + l2 / l1
    else:
        w = -1.0 + p - p * p / 3.0
    for _ in range(50):
        ew = np.exp(w)
        f = w * ew - x
        if f == 0.0:
            break
        fp = ew * (1.0 + w)
        step = f / (fp - f * (2.0 + w) / (2.0 * (1.0 + w)))
        w -= step
        if abs(step) <= 1e-16 * abs(w):
            break
    w = min(w, -1.0)
    if abs(w * np.exp(w) - x) > 1e-13 * abs(x):
        raise NoConvergence("lambert_wm1 residual above 1e-13 relative")
    return float(w)


# ---------------------------------------------------------------------------
# Richardson extrapolation
# ---------------------------------------------------------------------------

def richardson_extrapolate(samples, order: float) -> float:
    """Extrapolate value(h) = L + c * h**order to h = 0.

    With exactly two samples this is the two-point elimination formula; with
    more, a least-squares fit of (L, c).
    """
    L, _, _ = richardson_fit(samples, order)
    return L


def richardson_fit(samples, order: float):
    """Least-squares fit of value(h) = L + c * h**order.

    Returns (L, c, residual) where residual is the RMS misfit. Two samples
    reproduce the exact elimination formula (residual 0).
    """
    samples = [(float(h), float(v)) for h, v in samples]
    if len(samples) < 2:
        raise InsufficientData("need at least two (h, value) samples")
    h = np.array([s[0] for s in samples])
    v = np.array([s[1] for s in samples])
    if np.any(h <= 0) or len(np.unique(h)) < len(h):
        raise DomainError("step sizes must be positive and distinct")
    A = np.column_stack([np.ones_like(h), h**order])
    coef, *_ = np.linalg.lstsq(A, v, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - v) ** 2)))
    return float(coef[0]), float(coef[1]), resid


def fit_power_order(samples) -> float:
    """Estimate the convergence order from three (h, value) samples.

    Assumes value(h) = L + c * h**s with h in geometric progression and
    solves for s from successive differences.
    """
    samples = sorted(((float(h), float(v)) for h, v in samples), reverse=True)
    if len(samples) < 3:
        raise InsufficientData("need three samples to fit the order")
    (h1, v1), (h2, v2), (h3, v3) = samples[-3:]
    ratio = (v1 - v2) / (v2 - v3)
    rho = h1 / h2
    rho2 = h2 / h3
    if not np.isclose(rho, rho2, rtol=1e-8):
        raise DomainError("order fit expects a geometric h-sequence")
    if ratio <= 0:
        raise DomainError("non-monotone samples; cannot fit an order")
    return float(np.log(ratio) / np.log(rho))

"""Green machinery of the Dirichlet Laplacian on the unit ball.

Closed forms for the Green's function, its smooth part and the Robin
function; deterministic quadrature for the nonlinear potentials driven by
powers of the Green's function, their regular parts, and the harmonic
extensions of the associated boundary data; a seeded Monte Carlo fallback for
configurations that break the ball's rotational symmetry.

The regular parts are always assembled from representations whose integrands
carry only integrable singularities (absorbed into Jacobi weights), never as
differences of separately divergent quantities, so diagonal values keep full
relative accuracy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_jacobi

from . import numerics
from .bubble import ExponentPair, make_exponents, sphere_area
from .exceptions import (
    DomainError,
    OnDiagonal,
    QuadratureNotConverged,
    WrongRegime,
)


# ---------------------------------------------------------------------------
# domain and bundle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BallDomain:
    N: int
    radius: float = 1.0
    center: tuple = None

    def __post_init__(self):
        if self.radius <= 0:
            raise DomainError("radius must be positive")
        if self.center is None:
            object.__setattr__(self, "center", (0.0,) * self.N)

    def to_unit(self, x):
        return (np.asarray(x, dtype=float) - np.asarray(self.center)) / self.radius

    def contains(self, x, margin: float = 0.0) -> bool:
        return float(np.linalg.norm(self.to_unit(x))) < 1.0 - margin


@dataclass(frozen=True)
class GreensBundle:
    """Ball domain + exponent pair with the kernel normalization constants."""

    domain: BallDomain
    exp: ExponentPair

    @property
    def N(self) -> int:
        return self.domain.N

    @property
    def p(self) -> float:
        return self.exp.p

    @property
    def gamma_N(self) -> float:
        N = self.N
        return 1.0 / ((N - 2.0) * sphere_area(N))

    @property
    def below_threshold(self) -> bool:
        return self.p < self.N / (self.N - 2.0)

    @property
    def has_second_branch(self) -> bool:
        N, p = self.N, self.p
        return (N - 1.0) / (N - 2.0) <= p < N / (N - 2.0)

    @property
    def gamma_tilde_1(self) -> float:
        N, p = self.N, self.p
        if not self.below_threshold:
            raise WrongRegime("first singular constant needs p below the threshold")
        return self.gamma_N ** p / (((N - 2.0) * p - 2.0) * (N - (N - 2.0) * p))

    @property
    def gamma_tilde_2(self) -> float:
        N, p = self.N, self.p
        if not self.has_second_branch:
            raise WrongRegime("second singular constant lives on the upper branch")
        return p * self.gamma_N ** (p - 1.0) / (
            ((N - 2.0) * p - 2.0 * (N - 1.0)) * (N - (N - 2.0) * p))


def make_bundle(N: int, p: float, eps: float = 0.0, radius: float = 1.0,
                center=None) -> GreensBundle:
    dom = BallDomain(N=N, radius=radius, center=center)
    return GreensBundle(domain=dom, exp=make_exponents(N, p, eps))


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------

def _image_factor(x, xi):
    """|xi| |x - xi*| with xi* the reflected point; smooth limit at xi = 0."""
    val = (float(np.dot(xi, xi)) * float(np.dot(x, x))
           - 2.0 * float(np.dot(x, xi)) + 1.0)
    return math.sqrt(max(val, 0.0))


def green(bundle: GreensBundle, x, xi) -> float:
    """Dirichlet Green's function of the ball; positive, symmetric."""
    dom = bundle.domain
    u, v = dom.to_unit(x), dom.to_unit(xi)
    if not (np.linalg.norm(u) < 1.0 and np.linalg.norm(v) < 1.0):
        raise DomainError("points must be interior")
    d = float(np.linalg.norm(u - v))
    if d == 0.0:
        raise OnDiagonal("Green's function at coincident points")
    N = bundle.N
    return bundle.gamma_N * (d ** (2.0 - N) - _image_factor(u, v) ** (2.0 - N)) \
        * dom.radius ** (2.0 - N)


def green_grad_x(bundle: GreensBundle, x, xi):
    """Gradient of G(., xi) at x."""
    dom = bundle.domain
    N = bundle.N
    u, v = dom.to_unit(x), dom.to_unit(xi)
    diff = u - v
    d = float(np.linalg.norm(diff))
    if d == 0.0:
        raise OnDiagonal("gradient at coincident points")
    rho = _image_factor(u, v)
    e2 = float(np.dot(v, v))
    grad = (2.0 - N) * (diff * d ** (-N) - (e2 * u - v) * rho ** (-N))
    return bundle.gamma_N * grad * dom.radius ** (1.0 - N)


def regular_part_H(bundle: GreensBundle, x, xi) -> float:
    """Smooth part H(x, xi) of the Green's function."""
    dom = bundle.domain
    u, v = dom.to_unit(x), dom.to_unit(xi)
    return bundle.gamma_N * _image_factor(u, v) ** (2.0 - bundle.N) \
        * dom.radius ** (2.0 - bundle.N)


def robin(bundle: GreensBundle, xi) -> float:
    """Robin function: diagonal of the smooth part, blowing up at the boundary."""
    dom = bundle.domain
    e2 = float(np.dot(dom.to_unit(xi), dom.to_unit(xi)))
    if e2 >= 1.0:
        raise DomainError("point must be interior")
    return bundle.gamma_N * (1.0 - e2) ** (2.0 - bundle.N) * dom.radius ** (2.0 - bundle.N)


def robin_grad(bundle: GreensBundle, xi):
    dom = bundle.domain
    N = bundle.N
    v = dom.to_unit(xi)
    e2 = float(np.dot(v, v))
    return 2.0 * (N - 2.0) * bundle.gamma_N * (1.0 - e2) ** (1.0 - N) * v \
        * dom.radius ** (1.0 - N)


# ---------------------------------------------------------------------------
# quadrature helpers (axis geometry: all special points on one line)
# ---------------------------------------------------------------------------

def _axis_H(N, gamma, par, perp, a):
    """H(y, a e1) for y = (par, perp) in cylindrical axis coordinates."""
    img = np.sqrt(a * a * (par * par + perp * perp) - 2.0 * a * par + 1.0)
    return gamma * img ** (2.0 - N)


def _one_minus_pow(w, q):
    """1 - (1 - w)^q, cancellation-free for w near 0; w clipped to [0, 1]."""
    w = np.clip(w, 0.0, 1.0)
    out = -np.expm1(q * np.log1p(-np.where(w < 1.0, w, 0.0)))
    return np.where(w < 1.0, out, 1.0)


def _angular_rule(N: int, order: int):
    """Nodes c and weights for int_{-1}^{1} (1-c^2)^((N-3)/2) f(c) dc."""
    a = (N - 3.0) / 2.0
    c, w = roots_jacobi(order, a, a)
    return c, w


def _exit_radius(a: float, cosb):
    """Distance to the unit sphere from axis point a e1 along direction cosb."""
    disc = np.maximum(a * a * cosb * cosb - a * a + 1.0, 0.0)
    return -a * cosb + np.sqrt(disc)


def _geom_edges(a: float, b: float, toward_a: bool, n_geo: int = 12,
                n_flat: int = 4, floor: float = 1e-5):
    """Panel edges on [a, b], geometrically refined toward one endpoint."""
    span = b - a
    marks = span * np.geomspace(max(floor, 2.0 ** -n_geo), 0.5, n_geo)
    if toward_a:
        edges = np.concatenate([[a], a + marks, np.linspace(a + 0.5 * span, b, n_flat)])
    else:
        edges = np.concatenate([np.linspace(a, b - 0.5 * span, n_flat), b - marks[::-1], [b]])
    return np.unique(edges)


def _panel_rule(edges, order: int):
    x, w = numerics.gauss_panels(0.0, 1.0, order, 1)
    edges = np.asarray(edges, dtype=float)
    los, his = edges[:-1], edges[1:]
    nodes = (los[:, None] + (his - los)[:, None] * x[None, :]).ravel()
    weights = ((his - los)[:, None] * w[None, :]).ravel()
    return nodes, weights


# ---------------------------------------------------------------------------
# potentials with a single center source (radial double quadrature)
# ---------------------------------------------------------------------------

def wtg_center(bundle: GreensBundle, r: float, order: int = 32) -> float:
    """Radial potential w with -(Laplacian) w = G(., 0)^p, w = 0 on the sphere.

    Double quadrature w(r) = int_r^1 s^(1-N) int_0^s t^(N-1) G(t,0)^p dt ds;
    the inner integrable singularity t^(-(N-2)p) sits in a Jacobi weight.
    """
    N, p, gamma = bundle.N, bundle.p, bundle.gamma_N
    if not bundle.below_threshold:
        raise WrongRegime("potential defined for p below the threshold exponent")
    if not 0.0 <= r < 1.0:
        raise DomainError("radius must lie in [0, 1)")
    rr = max(r, 1e-14)
    alpha = N - 1.0 - (N - 2.0) * p
    u, wu = numerics.gauss_jacobi_01(order, alpha)

    def inner(s):
        su = np.outer(s, u)
        vals = (1.0 - su ** (N - 2.0)) ** p
        return gamma ** p * s ** (N - (N - 2.0) * p) * (vals @ wu)

    s_nodes, s_w = numerics.gauss_panels(math.log(rr), 0.0, 24, 24)
    s = np.exp(s_nodes)
    return float(np.dot(s_w, s ** (2.0 - N) * inner(s)))


# ---------------------------------------------------------------------------
# diagonal of the regularized potential (single source, any interior point)
# ---------------------------------------------------------------------------

def _exterior_power_integral(N: int, e: float, power: float, order: int = 24) -> float:
    """Integral of |z - xi|^-power over the exterior of the unit ball, |xi| = e."""
    if power <= N:
        raise DomainError("exterior integral diverges")
    c, wc = _angular_rule(N, order)
    u, wu = numerics.gauss_jacobi_01(order, power - N - 1.0)
    q = (1.0 + np.outer(u, c * 0.0) + np.outer(u * u, np.ones_like(c)) * e * e
         - 2.0 * e * np.outer(u, c)) ** (-power / 2.0)
    return sphere_area(N - 1) * float(wu @ q @ wc)


def theta_diagonal(bundle: GreensBundle, xi, order: int = 32) -> float:
    """Diagonal value of the locally regularized potential at xi.

    Uses the exact identity: integral over the ball of
    gamma^(p+1) |z-xi|^-(N-2)(p+1) - G(z, xi)^(p+1), plus the explicit
    exterior integral of the same power.  Rays from xi keep the integrand
    axisymmetric; the t = 0 singularity is a Jacobi weight.
    """
    N, p, gamma = bundle.N, bundle.p, bundle.gamma_N
    if not bundle.below_threshold:
        raise WrongRegime("diagonal regularization needs p below the threshold")
    xi_u = bundle.domain.to_unit(xi)
    e = float(np.linalg.norm(xi_u))
    if e >= 1.0:
        raise DomainError("point must be interior")

    c, wc = _angular_rule(N, order)
    T = _exit_radius(e, c)
    alpha = N - 1.0 - (N - 2.0) * p
    u, wu = numerics.gauss_jacobi_01(order, alpha)
    t = np.outer(u, T)
    par = e + t * c[None, :]
    perp = t * np.sqrt(np.maximum(1.0 - c * c, 0.0))[None, :]
    w = _axis_H(N, gamma, par, perp, e) * t ** (N - 2.0) / gamma
    g = gamma ** (p + 1.0) * t ** (2.0 - N) * _one_minus_pow(w, p + 1.0)
    interior = sphere_area(N - 1) * float((wu @ g * T ** (1.0 + alpha)) @ wc)
    exterior = gamma ** (p + 1.0) * _exterior_power_integral(
        N, e, (N - 2.0) * (p + 1.0), order)
    value = interior + exterior
    scale = bundle.domain.radius ** (N - ((N - 2.0) * p - 2.0) - N) \
        if bundle.domain.radius != 1.0 else 1.0
    return value * scale


# ---------------------------------------------------------------------------
# potential difference integral (single source, off the diagonal, collinear)
# ---------------------------------------------------------------------------

def _difference_source(bundle, a_i):
    """D(y) = gamma^p |y-xi|^-(N-2)p - G(y,xi)^p in axis coordinates."""
    N, p, gamma = bundle.N, bundle.p, bundle.gamma_N

    def D(par, perp):
        s = np.sqrt((par - a_i) ** 2 + perp ** 2)
        w = _axis_H(N, gamma, par, perp, a_i) * s ** (N - 2.0) / gamma
        return gamma ** p * s ** (-(N - 2.0) * p) * _one_minus_pow(w, p)

    return D


def _volume_difference_integral(bundle: GreensBundle, a_x: float, a_i: float,
                                order: int = 24) -> float:
    """Ball integral of G(x, z) D(z) with x = a_x e1, xi = a_i e1 (signed).

    D carries the milder singularity at xi: exponent (N-2)(p-1) < 2.  Rays
    from x absorb the kernel singularity in a Jacobi weight; near-axis rays
    that pass by xi get panels refined around the passage.
    """
    N, p, gamma = bundle.N, bundle.p, bundle.gamma_N
    D = _difference_source(bundle, a_i)
    d = abs(a_i - a_x)
    sgn = 1.0 if a_i >= a_x else -1.0
    mild = (N - 2.0) * (p - 1.0)  # singular exponent of D at xi, < 2

    def h_values(t, cosb, sinb):
        par = a_x + t * cosb
        perp = t * sinb
        wx = _axis_H(N, gamma, par, perp, a_x) * t ** (N - 2.0) / gamma
        return gamma * (1.0 - np.clip(wx, 0.0, 1.0)) * D(par, perp)

    def ray(b):
        cosb = sgn * math.cos(b)
        sinb = math.sin(b)
        T = _exit_radius(a_x, cosb)
        if d == 0.0:
            # integrand t^(1-mild) * [t^mild h]; put both powers in the weight
            u, wu = numerics.gauss_jacobi_01(order, 1.0 - mild)
            t = u * T
            val = float(np.dot(wu * T ** (2.0 - mild),
                               h_values(t, cosb, sinb) * t ** mild))
            return val * sinb ** (N - 2.0)
        # generic ray: integral of t * h(t) with a passage by xi at
        # t* = d cos(b) (distance rho); resolve the spike with graded panels
        t_star = d * math.cos(b)
        rho = max(d * sinb, 0.02 * d)
        total = 0.0
        if t_star <= 0.0 or t_star >= T:
            # no interior passage: kernel singularity at 0 plus gentle rest
            b1 = min(3.0 * d, 0.5 * T)
            u, wu = numerics.gauss_jacobi_01(order, 1.0)
            total += float(np.dot(wu * b1 * b1, h_values(u * b1, cosb, sinb)))
            t, wt = _panel_rule(np.geomspace(b1, T, 7), order // 2)
            total += float(np.dot(wt * t, h_values(t, cosb, sinb)))
            return total * sinb ** (N - 2.0)
        b1 = max(t_star - 6.0 * rho, 0.25 * t_star)
        b2 = min(t_star + 6.0 * rho, 0.5 * (t_star + T))
        u, wu = numerics.gauss_jacobi_01(order, 1.0)
        total += float(np.dot(wu * b1 * b1, h_values(u * b1, cosb, sinb)))
        floor = max(rho / max(t_star - b1, b2 - t_star), 1e-7)
        edges = [_geom_edges(b1, t_star, False, n_geo=12, n_flat=3, floor=floor)]
        edges.append(_geom_edges(t_star, b2, True, n_geo=12, n_flat=3, floor=floor))
        if T > b2:
            edges.append(np.geomspace(b2, T, 7))
        t, wt = _panel_rule(np.unique(np.concatenate(edges)), order // 2)
        total += float(np.dot(wt * t, h_values(t, cosb, sinb)))
        return total * sinb ** (N - 2.0)

    if d > 0.0:
        beta_edges = _geom_edges(0.0, math.pi, True, n_geo=16, n_flat=8, floor=1e-7)
    else:
        beta_edges = np.linspace(0.0, math.pi, 9)
    b_nodes, b_w = _panel_rule(beta_edges, 12)
    total = 0.0
    for b, wb in zip(b_nodes, b_w):
        total += wb * ray(b)
    return sphere_area(N - 1) * total


# ---------------------------------------------------------------------------
# harmonic extensions of the singular boundary data (Poisson integrals)
# ---------------------------------------------------------------------------

def _double_graded(a: float, b: float, n_geo: int = 8, floor: float = 1e-4):
    m = 0.5 * (a + b)
    return np.unique(np.concatenate([
        _geom_edges(a, m, True, n_geo=n_geo, n_flat=2, floor=floor),
        _geom_edges(m, b, False, n_geo=n_geo, n_flat=2, floor=floor)]))


def _poisson_extension(bundle: GreensBundle, x, xi, data, order: int = 16,
                       tol: float = 1e-7) -> float:
    """Harmonic extension u(x) of boundary values data(|z - xi|) on the ball.

    Tensor quadrature over the sphere reduced to two angles; panels refine
    toward the kernel peak (direction of x) and the data peak (direction of
    xi).  Error is estimated by doubling the panel order; exceeding `tol`
    relative raises QuadratureNotConverged.
    """
    N = bundle.N
    x = np.asarray(bundle.domain.to_unit(x), dtype=float)
    xi = np.asarray(bundle.domain.to_unit(xi), dtype=float)
    rx, e = float(np.linalg.norm(x)), float(np.linalg.norm(xi))
    if rx >= 1.0 or e >= 1.0:
        raise DomainError("points must be interior")

    if e == 0.0:
        return float(data(np.array([1.0]))[0])  # constant boundary data

    # frame: e1 = xi direction; omega_x = angle(x, e1)
    cos_wx = 1.0 if rx == 0.0 else float(np.dot(x, xi)) / (rx * e)
    cos_wx = min(1.0, max(-1.0, cos_wx))
    wx_ang = math.acos(cos_wx)

    # subtract the kernel-peak constant for stability near the boundary
    if rx > 0.3:
        s_peak = math.sqrt(max(1.0 + e * e - 2.0 * e * math.cos(wx_ang), 0.0))
        base = float(data(np.array([s_peak]))[0])
    else:
        base = 0.0

    def run(n_geo, ord_):
        # dS = sin^(N-2)(th) dth sin^(N-3)(phi) dphi dS^(N-3); the phi and
        # residual-sphere factors are absorbed into rule weights / prefactor
        cphi, wphi = roots_jacobi(ord_, (N - 4.0) / 2.0, (N - 4.0) / 2.0)
        floor_th = max(min(1.0 - e, 1.0 - rx) * 1e-2, 1e-7)
        brk = sorted({0.0, wx_ang, math.pi})
        edges = [_double_graded(lo, hi, n_geo=n_geo, floor=floor_th)
                 for lo, hi in zip(brk[:-1], brk[1:]) if hi - lo > 1e-12]
        th, wth = _panel_rule(np.unique(np.concatenate(edges)), ord_)
        ct, st = np.cos(th), np.sin(th)
        s_data = np.sqrt(np.maximum(1.0 + e * e - 2.0 * e * ct, 0.0))
        gvals = data(s_data) - base
        zdotx = rx * (math.cos(wx_ang) * ct[:, None]
                      + math.sin(wx_ang) * st[:, None] * cphi[None, :])
        dist2 = np.maximum(1.0 + rx * rx - 2.0 * zdotx, 1e-300)
        kern = (1.0 - rx * rx) / dist2 ** (N / 2.0)
        return float(np.dot(wth * st ** (N - 2.0) * gvals, kern @ wphi))

    prefactor = sphere_area(N - 2) / sphere_area(N)
    u1 = base + prefactor * run(8, order)
    u2 = base + prefactor * run(10, order + 8)
    scale = max(abs(u2), 1e-12)
    if abs(u2 - u1) > tol * scale:
        raise QuadratureNotConverged(
            f"harmonic extension error {abs(u2 - u1) / scale:.2e} > {tol:.1e}")
    return u2


def hat_h(bundle: GreensBundle, x, xi, tol: float = 1e-7) -> float:
    """Harmonic extension of the leading boundary data of the potential.

    Below the threshold exponent the data is gamma |z-xi|^(2-(N-2)p); at the
    threshold it carries the logarithm instead.
    """
    N, p, gamma = bundle.N, bundle.p, bundle.gamma_N
    serrin = abs(p - N / (N - 2.0)) <= 1e-9
    if not (bundle.below_threshold or serrin):
        raise WrongRegime("harmonic extension defined up to the threshold exponent")
    if serrin:
        def data(s):
            return gamma * np.log(s) * s ** (2.0 - N)
    else:
        def data(s):
            return gamma * s ** (2.0 - (N - 2.0) * p)
    return _poisson_extension(bundle, x, xi, data, tol=tol)


def bar_h(bundle: GreensBundle, x, xi, tol: float = 1e-7) -> float:
    """Harmonic extension of |z - xi|^(N-(N-2)p) (upper sub-threshold branch)."""
    N, p = bundle.N, bundle.p
    if not bundle.has_second_branch:
        raise WrongRegime("this extension lives on the upper sub-threshold branch")

    def data(s):
        return s ** (N - (N - 2.0) * p)

    return _poisson_extension(bundle, x, xi, data, tol=tol)


def whg(bundle: GreensBundle, x, xi) -> float:
    """Singular kernel power minus its harmonic extension (vanishes on the boundary)."""
    N, p, gamma = bundle.N, bundle.p, bundle.gamma_N
    d = float(np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(xi, dtype=float)))
    if d == 0.0:
        raise OnDiagonal("kernel power at coincident points")
    return gamma * d ** (2.0 - (N - 2.0) * p) - hat_h(bundle, x, xi)


# ---------------------------------------------------------------------------
# regularized potential for a single source (any collinear evaluation point)
# ---------------------------------------------------------------------------

def _collinear_coords(x, xi):
    """Signed axis coordinates of x and xi, or None if not collinear with 0."""
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    rx, e = float(np.linalg.norm(x)), float(np.linalg.norm(xi))
    if e == 0.0 and rx == 0.0:
        return 0.0, 0.0
    axis = xi / e if e > 0 else x / rx
    if rx > 0 and e > 0:
        cross = rx * e - abs(float(np.dot(x, xi)))
        if cross > 1e-12 * max(1.0, rx * e):
            return None
    return float(np.dot(x, axis)), e


def regular_part(bundle: GreensBundle, x, xi, order: int = 24) -> float:
    """Local C^1-regularization of the potential driven by G(., xi)^p.

    Exact representation: volume integral of G(x,z) times the cancellation-
    free source difference, plus the harmonic extension of the leading
    boundary data, minus (on the upper branch) the explicit second singular
    term with the Robin-value coefficient.  Never formed as a difference of
    separately singular quantities, so it is accurate uniformly down to the
    diagonal.
    """
    if not bundle.below_threshold:
        raise WrongRegime("regularization defined below the threshold exponent")
    xu = bundle.domain.to_unit(x)
    xiu = bundle.domain.to_unit(xi)
    coords = _collinear_coords(xu, xiu)
    if coords is None:
        raise DomainError("deterministic path needs x, xi, center collinear")
    a_x, a_i = coords
    vol = _volume_difference_integral(bundle, a_x, a_i, order=order)
    surf = bundle.gamma_tilde_1 / bundle.gamma_N * hat_h(bundle, xu, xiu)
    val = vol + surf
    if bundle.has_second_branch:
        d = abs(a_x - a_i)
        val -= bundle.gamma_tilde_2 * robin(bundle, xiu) \
            * d ** (bundle.N - (bundle.N - 2.0) * bundle.p)
    return val


def wtg(bundle: GreensBundle, x, xi, order: int = 24) -> float:
    """Potential w with -(Laplacian) w = G(., xi)^p, w = 0 on the sphere.

    Assembled as (leading singular power) - (volume difference integral) -
    (harmonic extension), each computed separately.
    """
    if not bundle.below_threshold:
        raise WrongRegime("potential defined below the threshold exponent")
    N, p = bundle.N, bundle.p
    xu = bundle.domain.to_unit(x)
    xiu = bundle.domain.to_unit(xi)
    coords = _collinear_coords(xu, xiu)
    if coords is None:
        raise DomainError("deterministic path needs x, xi, center collinear")
    a_x, a_i = coords
    d = abs(a_x - a_i)
    if d == 0.0:
        raise OnDiagonal("potential evaluation at the source point")
    vol = _volume_difference_integral(bundle, a_x, a_i, order=order)
    surf = bundle.gamma_tilde_1 / bundle.gamma_N * hat_h(bundle, xu, xiu)
    return bundle.gamma_tilde_1 * d ** (2.0 - (N - 2.0) * p) - vol - surf


def wth_theta(bundle: GreensBundle, xi, offsets=(1e-2, 5e-3, 2.5e-3)) -> float:
    """Diagonal of the regularization by extrapolating along a radial approach.

    Samples the regularized potential at the given offsets from xi and
    Richardson-extrapolates with a fitted convergence order.  Cross-validates
    theta_diagonal, which evaluates the same limit by an exact identity.
    """
    xiu = np.asarray(bundle.domain.to_unit(xi), dtype=float)
    e = float(np.linalg.norm(xiu))
    direction = xiu / e if e > 0 else np.eye(bundle.N)[0]
    if e > 0.5:
        direction = -direction
    samples = []
    for t in offsets:
        xt = xiu + t * direction
        samples.append((t, regular_part(bundle, xt, xiu)))
    try:
        order_fit = numerics.fit_power_order(samples)
        order_fit = min(max(order_fit, 0.4), 3.0)
    except Exception:
        order_fit = 1.0
    two = sorted(samples)[:2]
    return numerics.richardson_extrapolate(two, order_fit)


def wth_theta_center_route(bundle: GreensBundle,
                           offsets=(1e-2, 5e-3, 2.5e-3)) -> float:
    """Same limit at the center, with the radial double quadrature supplying
    the potential (independent of the volume-difference machinery)."""
    N, p = bundle.N, bundle.p
    gt1 = bundle.gamma_tilde_1
    samples = []
    for t in offsets:
        val = gt1 * t ** (2.0 - (N - 2.0) * p) - wtg_center(bundle, t)
        if bundle.has_second_branch:
            val -= bundle.gamma_tilde_2 * bundle.gamma_N * t ** (N - (N - 2.0) * p)
        samples.append((t, val))
    try:
        order_fit = numerics.fit_power_order(samples)
        order_fit = min(max(order_fit, 0.4), 3.0)
    except Exception:
        order_fit = 1.0
    return numerics.richardson_extrapolate(sorted(samples)[:2], order_fit)


# ---------------------------------------------------------------------------
# multi-point configurations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Configuration:
    """Concentration parameters (delta_1..delta_k) and points (xi_1..xi_k)."""

    deltas: tuple
    points: tuple

    def __post_init__(self):
        deltas = tuple(float(d) for d in np.atleast_1d(self.deltas))
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "deltas", deltas)
        object.__setattr__(self, "points", tuple(map(tuple, pts)))
        if len(deltas) != len(self.points):
            raise DomainError("need one weight per point")
        if any(d <= 0 for d in deltas):
            raise DomainError("weights must be positive")
        for i in range(len(self.points)):
            for j in range(i + 1, len(self.points)):
                if np.allclose(self.points[i], self.points[j]):
                    raise DomainError("points must be pairwise distinct")

    @property
    def k(self) -> int:
        return len(self.deltas)

    def array_points(self):
        return np.asarray(self.points, dtype=float)


def interaction_coefficient(bundle: GreensBundle, config: Configuration,
                            i: int) -> float:
    """Robin-value weight of point i minus its Green interactions."""
    c = bundle.exp.N / (bundle.exp.q0 + 1.0)
    pts = config.array_points()
    val = config.deltas[i] ** c * robin(bundle, pts[i])
    for j in range(config.k):
        if j != i:
            val -= config.deltas[j] ** c * green(bundle, pts[i], pts[j])
    return val


def _mc_volume_difference(bundle: GreensBundle, source, x, n_samples: int,
                          seed: int):
    """Seeded Monte Carlo for ball integrals with known singular points.

    `source` maps sample points (m, N) to values of the full integrand
    (kernel included); importance mixture: uniform on the ball plus radial
    clouds around x and each singular point.
    """
    N = bundle.N
    rng = np.random.default_rng(seed)
    centers, exponents = source.singular_points()
    radii = []
    for c in centers:
        dmin = 1.0 - np.linalg.norm(c)
        for c2 in centers:
            if c2 is not c and not np.allclose(c, c2):
                dmin = min(dmin, 0.5 * np.linalg.norm(np.asarray(c) - np.asarray(c2)))
        radii.append(0.9 * dmin)
    weights = [0.4] + [0.6 / len(centers)] * len(centers)
    vol_ball = math.pi ** (N / 2.0) / math.gamma(N / 2.0 + 1.0)

    comp = rng.choice(len(weights), size=n_samples, p=weights)
    pts = np.empty((n_samples, N))
    for m in range(n_samples):
        if comp[m] == 0:
            while True:
                z = rng.standard_normal(N)
                z /= np.linalg.norm(z)
                z *= rng.random() ** (1.0 / N)
                if np.linalg.norm(z) < 1.0:
                    break
            pts[m] = z
        else:
            idx = comp[m] - 1
            gcent, gexp = centers[idx], exponents[idx]
            a_pow = N - gexp  # radial cdf ~ t^(N-gexp)
            t = radii[idx] * rng.random() ** (1.0 / a_pow)
            z = rng.standard_normal(N)
            z /= np.linalg.norm(z)
            pts[m] = np.asarray(gcent) + t * z

    dens = np.full(n_samples, weights[0] / vol_ball)
    for idx, (gcent, gexp) in enumerate(zip(centers, exponents)):
        t = np.linalg.norm(pts - np.asarray(gcent), axis=1)
        a_pow = N - gexp
        local = np.where(
            t < radii[idx],
            a_pow * t ** (a_pow - 1.0) / radii[idx] ** a_pow
            / (sphere_area(N) * np.maximum(t, 1e-300) ** (N - 1.0)),
            0.0)
        dens += weights[1 + idx] * local
    vals = source.values(pts) / dens
    mean = float(np.mean(vals))
    stderr = float(np.std(vals, ddof=1) / math.sqrt(n_samples))
    return mean, stderr


class _MultiSourceDifference:
    """Integrand G(x, .) [ (sum_i c_i G(., xi_i))^p - sum_i (c_i gamma/|.-xi_i|^(N-2))^p ]."""

    def __init__(self, bundle, coeffs, points, x):
        self.bundle = bundle
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.points = np.asarray(points, dtype=float)
        self.x = np.asarray(x, dtype=float)

    def singular_points(self):
        N, p = self.bundle.N, self.bundle.p
        centers = [self.x] + list(self.points)
        exponents = [N - 2.0] + [(N - 2.0) * (p - 1.0)] * len(self.points)
        return centers, exponents

    def values(self, z):
        b = self.bundle
        N, p, gamma = b.N, b.p, b.gamma_N
        total_G = np.zeros(len(z))
        lead = np.zeros(len(z))
        for c, xi in zip(self.coeffs, self.points):
            diff = z - xi[None, :]
            s = np.linalg.norm(diff, axis=1)
            img = np.array([_image_factor(zz, xi) for zz in z])
            total_G += c * gamma * (s ** (2.0 - N) - img ** (2.0 - N))
            lead += (c * gamma) ** p * s ** (-(N - 2.0) * p)
        dx = np.linalg.norm(z - self.x[None, :], axis=1)
        img_x = np.array([_image_factor(zz, self.x) for zz in z])
        Gx = gamma * (dx ** (2.0 - N) - img_x ** (2.0 - N))
        return Gx * (np.maximum(total_G, 0.0) ** p - lead)


def config_potentials(bundle: GreensBundle, config: Configuration, x, i: int,
                      n_mc: int = 200_000, seed: int = 12345,
                      order: int = 24):
    """Potential of the weighted Green-power source, its i-th regularization,
    and the i-th interaction coefficient, at the point x.

    k = 1 evaluations with x collinear to the source are deterministic;
    other geometries use the seeded Monte Carlo fallback and raise
    QuadratureNotConverged when the standard error exceeds 2%.
    """
    if not bundle.below_threshold:
        raise WrongRegime("configuration potentials need p below the threshold")
    N, p = bundle.N, bundle.p
    q0 = bundle.exp.q0
    cexp = N / (q0 + 1.0)
    coeffs = np.array([d ** cexp for d in config.deltas])
    pts = config.array_points()
    x = np.asarray(x, dtype=float)
    A_i = interaction_coefficient(bundle, config, i)

    if config.k == 1:
        xi = pts[0]
        scale = coeffs[0] ** p
        if _collinear_coords(x, xi) is not None:
            if np.allclose(x, xi):
                wtg_val = float("nan")  # potential itself is singular there
            else:
                wtg_val = scale * wtg(bundle, x, xi, order=order)
            wth_val = scale * regular_part(bundle, x, xi, order=order)
            return wtg_val, wth_val, A_i
    # Monte Carlo fallback for symmetry-breaking geometries
    gt1, gamma = bundle.gamma_tilde_1, bundle.gamma_N
    closed = 0.0
    for c, xi in zip(coeffs, pts):
        d = float(np.linalg.norm(x - xi))
        if d == 0.0:
            raise OnDiagonal("potential evaluation at a source point")
        closed += c ** p * (gt1 * d ** (2.0 - (N - 2.0) * p)
                            - gt1 / gamma * hat_h(bundle, x, xi))
    src = _MultiSourceDifference(bundle, coeffs, pts, x)
    mc, se = _mc_volume_difference(bundle, src, x, n_mc, seed)
    wtg_val = closed + mc
    if se > 0.02 * max(abs(wtg_val), 1e-12):
        raise QuadratureNotConverged(f"MC stderr {se:.2e} too large")
    # i-th regularization: subtract the i-th singular terms only
    d_i = float(np.linalg.norm(x - pts[i]))
    wth_val = gt1 * coeffs[i] ** p * d_i ** (2.0 - (N - 2.0) * p) - wtg_val
    if bundle.has_second_branch:
        wth_val -= bundle.gamma_tilde_2 * A_i * coeffs[i] ** (p - 1.0) \
            * d_i ** (N - (N - 2.0) * p)
    return wtg_val, wth_val, A_i


class _DiagonalSumSource:
    """Integrand of the exact diagonal-sum identity for several sources."""

    def __init__(self, bundle, coeffs, points):
        self.bundle = bundle
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.points = np.asarray(points, dtype=float)

    def singular_points(self):
        N, p = self.bundle.N, self.bundle.p
        return list(self.points), [(N - 2.0) * p] * len(self.points)

    def values(self, z):
        b = self.bundle
        N, p, gamma = b.N, b.p, b.gamma_N
        k = len(self.coeffs)
        m = len(z)
        s = np.empty((k, m))
        h = np.empty((k, m))
        for j, xi in enumerate(self.points):
            s[j] = np.linalg.norm(z - xi[None, :], axis=1)
            img = np.array([_image_factor(zz, xi) for zz in z])
            h[j] = gamma * img ** (2.0 - N) * s[j] ** (N - 2.0) / gamma
        out = np.zeros(m)
        for j in range(k):
            cj = self.coeffs[j]
            rest = np.zeros(m)
            for l in range(k):
                if l != j:
                    cl = self.coeffs[l]
                    rest += cl * gamma * s[l] ** (2.0 - N) * (1.0 - h[l])
            delta = h[j] - rest * s[j] ** (N - 2.0) / (cj * gamma)
            with np.errstate(divide="ignore", invalid="ignore"):
                bracket = -np.expm1(np.log1p(-np.clip(h[j], 0.0, 1.0 - 1e-300))
                                    + p * np.log1p(-np.minimum(delta, 1.0 - 1e-300)))
            bracket = np.where(h[j] >= 1.0, 1.0, bracket)
            out += (gamma * cj) ** (p + 1.0) * s[j] ** (-(N - 2.0) * (p + 1.0)) * bracket
        return out


def multi_bubble_diagonal_sum(bundle: GreensBundle, deltas, points,
                              n_mc: int = 400_000, seed: int = 12345):
    """Sum over i of delta_i^(N/(q0+1)) times the i-th regularized potential
    evaluated at its own point.  Returns (value, standard_error).

    k = 1 is deterministic (reduces to the single-source diagonal); larger
    configurations use the exact volume+exterior identity with a seeded
    Monte Carlo volume term.
    """
    N, p = bundle.N, bundle.p
    q0 = bundle.exp.q0
    cexp = N / (q0 + 1.0)
    deltas = np.atleast_1d(np.asarray(deltas, dtype=float))
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if len(deltas) == 1:
        val = deltas[0] ** (cexp * (p + 1.0)) * theta_diagonal(bundle, pts[0])
        return val, 0.0
    coeffs = deltas ** cexp
    src = _DiagonalSumSource(bundle, coeffs, pts)
    mc, se = _mc_volume_difference(bundle, src, pts[0], n_mc, seed)
    ext = 0.0
    for c, xi in zip(coeffs, pts):
        e = float(np.linalg.norm(xi))
        ext += (bundle.gamma_N * c) ** (p + 1.0) * _exterior_power_integral(
            N, e, (N - 2.0) * (p + 1.0))
    return mc + ext, se

"""Quadrature on the keyhole inversion contour.

The contour is an arc of radius ``delta`` joined to two rays at angles
``+-theta`` with ``theta in (pi/2, pi)``, traversed counterclockwise: down
the lower ray from the truncation radius R to delta, around the arc from
``-theta`` to ``theta``, then out the upper ray.  Weights absorb both the
parametrization derivative dp and the prefactor ``1/(2*pi*i)``, so an
inverse transform at time t is the plain weighted sum

    sum_k  w_k * exp(t * p_k) * f(p_k).

Rays are discretized by composite Gauss-Legendre panels whose lengths double
away from delta (the region near the origin is where kernel symbols vary
fastest); the arc uses Gauss-Lobatto so its endpoints ``delta*exp(+-i*theta)``
coincide with the ray start points and appear exactly once each.  The node
and weight sets are conjugate-symmetric by construction: the lower half is
the elementwise conjugate of the reversed upper half.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

_THETA_DEFAULT = 3.0 * math.pi / 4.0
# Node-count calibration constants.  Calibrated so that the Heaviside and
# ramp transforms are reproduced to the requested tolerance across the whole
# time window [t_min, t_max]; see tests/test_contour.py for the guard.
_C_RAY = 1.5
_C_ARC = 0.7
_ARC_BASE = 10


@lru_cache(maxsize=32)
def _lobatto_half(n):
    """Positive-x halves of the n-point Gauss-Lobatto rule on [-1, 1], n even."""
    from numpy.polynomial import legendre

    if n < 2 or n % 2:
        raise ValueError("even node count >= 2 required")
    if n == 2:
        x_pos = np.array([1.0])
    else:
        roots = legendre.Legendre.basis(n - 1).deriv().roots().real
        x_pos = np.sort(roots[roots > 0.0])
        x_pos = np.concatenate([x_pos, [1.0]])
    pn1 = legendre.Legendre.basis(n - 1)(x_pos)
    w_pos = 2.0 / (n * (n - 1) * pn1 ** 2)
    return x_pos, w_pos


def _graded_panels(delta, R, n_total):
    """Gauss-Legendre abscissae/weights on [delta, R], panel lengths doubling."""
    if R <= delta:
        x, w = np.polynomial.legendre.leggauss(n_total)
        return 0.5 * (R - delta) * x + 0.5 * (R + delta), 0.5 * (R - delta) * w
    n_panels = int(math.ceil(math.log2((R - delta) / delta + 1.0)))
    n_panels = max(1, min(n_panels, n_total // 2 if n_total >= 2 else 1))
    k = np.arange(n_panels + 1, dtype=float)
    ends = delta + (R - delta) * (2.0 ** k - 1.0) / (2.0 ** n_panels - 1.0)
    base, rem = divmod(n_total, n_panels)
    counts = [base + 1] * rem + [base] * (n_panels - rem)
    xs, ws = [], []
    for j in range(n_panels):
        if counts[j] == 0:
            continue
        x, w = np.polynomial.legendre.leggauss(counts[j])
        a, b = ends[j], ends[j + 1]
        xs.append(0.5 * (b - a) * x + 0.5 * (a + b))
        ws.append(0.5 * (b - a) * w)
    return np.concatenate(xs), np.concatenate(ws)


@dataclass(frozen=True)
class ContourQuadrature:
    """Discretized keyhole contour: complex nodes and weights, ccw order."""

    theta: float
    delta: float
    R: float
    nodes: np.ndarray
    weights: np.ndarray
    t_min: float
    tol: float

    def __post_init__(self):
        for name in ("nodes", "weights"):
            arr = np.asarray(getattr(self, name), dtype=complex).copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n_nodes(self):
        return self.nodes.size

    @property
    def upper(self):
        """Index slice of the upper-half-plane nodes (second half, ccw)."""
        return slice(self.n_nodes // 2, self.n_nodes)

    def conjugate_index(self, k):
        return self.n_nodes - 1 - k


def build_contour(theta: float, delta: float, nodes_per_ray: int,
                  nodes_arc: int, t_min: float, tol: float) -> ContourQuadrature:
    """Discretize the keyhole contour for times t >= t_min.

    The ray truncation radius R is chosen so that ``exp(t_min * R * cos
    theta) <= tol``; beyond it the integrand of any transform evaluated at
    t >= t_min is below the tolerance.  ``nodes_arc`` is rounded up to an
    even count so nodes come in exact conjugate pairs.
    """
    if not (math.pi / 2.0 < theta < math.pi):
        raise ValueError(f"theta must lie in (pi/2, pi), got {theta}")
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    if nodes_per_ray < 2 or nodes_arc < 2:
        raise ValueError("node counts must be at least 2")
    if t_min <= 0.0:
        raise ValueError("t_min must be positive")
    if not 0.0 < tol < 1.0:
        raise ValueError("tol must lie in (0, 1)")

    nodes_arc += nodes_arc % 2
    R = max(delta, math.log(1.0 / tol) / (t_min * abs(math.cos(theta))))

    s, sw = _graded_panels(delta, R, nodes_per_ray)
    e_itheta = complex(math.cos(theta), math.sin(theta))
    inv_2pii = 1.0 / (2.0j * math.pi)

    x_pos, w_pos = _lobatto_half(nodes_arc)
    beta = theta * x_pos
    arc_upper = delta * np.exp(1j * beta)
    arc_upper_w = theta * w_pos * delta * np.exp(1j * beta) / (2.0 * math.pi)

    upper_nodes = np.concatenate([arc_upper, s * e_itheta])
    upper_weights = np.concatenate([arc_upper_w, sw * e_itheta * inv_2pii])
    # lower half: exact conjugates in reversed order keeps ccw orientation
    nodes = np.concatenate([np.conj(upper_nodes[::-1]), upper_nodes])
    weights = np.concatenate([np.conj(upper_weights[::-1]), upper_weights])
    return ContourQuadrature(theta=theta, delta=delta, R=R, nodes=nodes,
                             weights=weights, t_min=t_min, tol=tol)


def auto_params(t_min: float, t_max: float, tol: float):
    """Default contour parameters for the time window [t_min, t_max].

    Returns ``(theta, delta, nodes_per_ray, nodes_arc)`` deterministically:
    theta = 3*pi/4, delta = min(1, 1/t_max), and node counts growing with
    log(1/tol) and the window width.
    """
    if t_min <= 0.0:
        raise ValueError("t_min must be positive")
    if t_max < t_min:
        raise ValueError("t_max must be >= t_min")
    if not 0.0 < tol < 1.0:
        raise ValueError("tol must lie in (0, 1)")
    L = math.log(1.0 / tol)
    G = math.log(t_max / t_min + math.e)
    nodes_per_ray = int(math.ceil(_C_RAY * L * G))
    nodes_arc = 2 * int(math.ceil((_C_ARC * L + _ARC_BASE) / 2.0))
    delta = min(1.0, 1.0 / t_max)
    return _THETA_DEFAULT, delta, max(4, nodes_per_ray), nodes_arc


def build_auto_contour(t_min: float, t_max: float, tol: float) -> ContourQuadrature:
    theta, delta, npr, narc = auto_params(t_min, t_max, tol)
    return build_contour(theta, delta, npr, narc, t_min, tol)


def inverse_laplace_scalar(f, t: float, q: ContourQuadrature) -> complex:
    """Evaluate sum_k w_k exp(t p_k) f(p_k) for a scalar transform f.

    For f analytic to the right of the contour and polynomially bounded
    there, this approximates the inverse Laplace transform at t; accuracy is
    calibrated for t >= the t_min the contour was built with.  The result is
    returned as a complex number; for transforms with conjugate symmetry the
    imaginary part is a quadrature diagnostic.
    """
    try:
        fv = np.asarray(f(q.nodes), dtype=complex)
        if fv.shape != q.nodes.shape:
            raise ValueError
    except Exception:
        fv = np.array([complex(f(p)) for p in q.nodes])
    return complex(np.sum(q.weights * np.exp(t * q.nodes) * fv))

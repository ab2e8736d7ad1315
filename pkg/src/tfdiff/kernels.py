"""Memory kernel families, their Laplace symbols and the convolution operator.

Three completely monotone kernel families are supported, all power-law in
time:

* variable order      ``K(t, x) = t^{-alpha(x)} / Gamma(1 - alpha(x))``
* distributed order   ``K(t, x) = int_0^1 mu(a) t^{-a} / Gamma(1 - a) da``
* multi-term          ``K(t, x) = sum_j rho_j(x) t^{-alpha_j} / Gamma(1 - alpha_j)``

Their Laplace symbols are ``p^{alpha(x)-1}``, ``int_0^1 mu(a) p^{a-1} da``
and ``sum_j rho_j(x) p^{alpha_j-1}`` respectively, with the principal branch
of ``p^z`` (the inversion contour never touches the cut ``(-inf, 0]``).

Spatial order/weight fields are stored as nodal values on the solver grid,
so the admissibility conditions become per-node checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Union

import numpy as np
from scipy.special import gamma as _gamma

from .errors import AdmissibilityError, GridError


def _frozen_array(values, dtype=float):
    arr = np.asarray(values, dtype=dtype)
    arr = np.atleast_1d(arr).copy()
    arr.flags.writeable = False
    return arr


@lru_cache(maxsize=16)
def _alpha_quadrature(n_nodes):
    """Gauss-Legendre rule on the order interval [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    return 0.5 * (x + 1.0), 0.5 * w


@dataclass(frozen=True)
class VariableOrderKernel:
    """Space-dependent order field alpha(x), one value per grid node."""

    alpha: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "alpha", _frozen_array(self.alpha))

    @property
    def n_nodes(self):
        return self.alpha.size

    @property
    def variant(self):
        return "variable_order"


@dataclass(frozen=True)
class DistributedOrderKernel:
    """Order-averaged kernel with weight mu sampled on a uniform grid over [0, 1].

    ``mu`` is interpreted with linear interpolation between samples.  The
    concentration window ``(alpha0 - epsilon, alpha0)`` on which mu must stay
    above ``mu(alpha0) / 2`` is declared, not inferred; inferring it from
    samples is ill-posed.
    """

    mu: np.ndarray
    alpha0: float
    epsilon: float
    n_nodes: int = 1
    quad_nodes: int = 64

    def __post_init__(self):
        object.__setattr__(self, "mu", _frozen_array(self.mu))
        if self.mu.size < 2:
            raise AdmissibilityError("mu needs at least two samples on [0, 1]")

    @property
    def alpha_grid(self):
        return np.linspace(0.0, 1.0, self.mu.size)

    def mu_at(self, alpha):
        return np.interp(alpha, self.alpha_grid, self.mu)

    @property
    def variant(self):
        return "distributed"


@dataclass(frozen=True)
class MultiTermKernel:
    """Finite sum of power-law kernels with nodal weight fields rho_j(x)."""

    alphas: tuple
    rhos: np.ndarray  # shape (N, n_nodes)

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        rhos = np.asarray(self.rhos, dtype=float)
        if rhos.ndim == 1:
            rhos = rhos[np.newaxis, :]
        rhos = rhos.copy()
        rhos.flags.writeable = False
        object.__setattr__(self, "rhos", rhos)
        if len(self.alphas) != self.rhos.shape[0]:
            raise AdmissibilityError("one rho field required per order alpha_j")

    @property
    def n_nodes(self):
        return self.rhos.shape[1]

    @property
    def variant(self):
        return "multi_term"


KernelSpec = Union[VariableOrderKernel, DistributedOrderKernel, MultiTermKernel]


@dataclass(frozen=True)
class KernelDiagnostics:
    """Outcome of an admissibility check: pass/fail plus violated constraints."""

    ok: bool
    violations: tuple = ()
    extracted: dict = field(default_factory=dict)


def validate_kernel(spec: KernelSpec) -> KernelDiagnostics:
    """Check the admissibility conditions of a kernel family.

    Variable order requires ``0 < alpha_0 <= alpha(x) <= alpha_M < 1`` with
    ``alpha_M < 2 alpha_0``; distributed order requires ``mu >= 0`` with
    ``mu >= mu(alpha0)/2 > 0`` on the declared window; multi-term requires
    strictly increasing orders in (0, 1) and ``0 < c_0 <= rho_j <= C_0``.
    """
    violations = []
    extracted = {}
    if isinstance(spec, VariableOrderKernel):
        a0 = float(np.min(spec.alpha))
        aM = float(np.max(spec.alpha))
        extracted = {"alpha_min": a0, "alpha_max": aM}
        if not a0 > 0.0:
            violations.append("alpha must satisfy alpha(x) > 0 at every node")
        if not aM < 1.0:
            violations.append("alpha must satisfy alpha(x) < 1 at every node")
        if not aM < 2.0 * a0:
            violations.append(
                f"variable-order admissibility alpha_max < 2*alpha_min violated "
                f"({aM:.6g} >= {2.0 * a0:.6g})"
            )
    elif isinstance(spec, DistributedOrderKernel):
        mu_a0 = float(spec.mu_at(spec.alpha0))
        extracted = {"alpha0": spec.alpha0, "epsilon": spec.epsilon, "mu_alpha0": mu_a0}
        if not (0.0 < spec.alpha0 < 1.0):
            violations.append("alpha0 must lie in (0, 1)")
        if not (0.0 < spec.epsilon < spec.alpha0):
            violations.append("epsilon must lie in (0, alpha0)")
        if np.any(spec.mu < 0.0):
            violations.append("mu must be non-negative on [0, 1]")
        if not mu_a0 > 0.0:
            violations.append("mu(alpha0) must be positive")
        elif 0.0 < spec.epsilon < spec.alpha0:
            probes = np.linspace(spec.alpha0 - spec.epsilon, spec.alpha0, 257)[1:]
            if np.any(spec.mu_at(probes) < 0.5 * mu_a0 - 1e-15):
                violations.append(
                    "mu drops below mu(alpha0)/2 inside the declared window"
                )
    elif isinstance(spec, MultiTermKernel):
        c0 = float(np.min(spec.rhos))
        C0 = float(np.max(spec.rhos))
        extracted = {"c0": c0, "C0": C0, "orders": spec.alphas}
        a = np.asarray(spec.alphas)
        if not (np.all(a > 0.0) and np.all(a < 1.0)):
            violations.append("orders alpha_j must lie in (0, 1)")
        if not np.all(np.diff(a) > 0.0):
            violations.append("orders alpha_j must be strictly increasing")
        if not c0 > 0.0:
            violations.append("rho fields must satisfy 0 < c_0 <= rho_j(x)")
        if not np.isfinite(C0):
            violations.append("rho fields must be bounded")
    else:
        raise TypeError(f"not a kernel spec: {type(spec)!r}")
    return KernelDiagnostics(ok=not violations, violations=tuple(violations),
                             extracted=extracted)


def require_admissible(spec: KernelSpec):
    diag = validate_kernel(spec)
    if not diag.ok:
        raise AdmissibilityError("; ".join(diag.violations))
    return diag


# ---------------------------------------------------------------------------
# time-domain values
# ---------------------------------------------------------------------------

def kernel_value_field(spec: KernelSpec, t: float) -> np.ndarray:
    """K(t, x) at every grid node, t > 0."""
    if not t > 0.0:
        raise ValueError(f"kernel value requires t > 0, got {t}")
    if isinstance(spec, VariableOrderKernel):
        a = spec.alpha
        return t ** (-a) / _gamma(1.0 - a)
    if isinstance(spec, MultiTermKernel):
        out = np.zeros(spec.n_nodes)
        for a, rho in zip(spec.alphas, spec.rhos):
            out += rho * t ** (-a) / _gamma(1.0 - a)
        return out
    if isinstance(spec, DistributedOrderKernel):
        aq, wq = _alpha_quadrature(spec.quad_nodes)
        val = float(np.sum(wq * spec.mu_at(aq) * t ** (-aq) / _gamma(1.0 - aq)))
        return np.full(spec.n_nodes, val)
    raise TypeError(f"not a kernel spec: {type(spec)!r}")


def kernel_value(spec: KernelSpec, t: float, node: int) -> float:
    """K(t, x_node) for t > 0.  Raises IndexError for an invalid node."""
    field_vals = kernel_value_field(spec, t)
    n = spec.n_nodes
    if not -n <= node < n:
        raise IndexError(f"node {node} outside grid of {n} nodes")
    return float(field_vals[node])


# ---------------------------------------------------------------------------
# Laplace symbols
# ---------------------------------------------------------------------------

def _check_off_cut(p: complex):
    p = complex(p)
    if p == 0.0 or (p.imag == 0.0 and p.real < 0.0):
        raise ValueError(f"Laplace symbol undefined on the branch cut: p = {p}")
    return p


def kernel_laplace_field(spec: KernelSpec, p: complex) -> np.ndarray:
    """The symbol K-hat(p, x) at every node, principal branch of p^z."""
    p = _check_off_cut(p)
    if isinstance(spec, VariableOrderKernel):
        return p ** (spec.alpha - 1.0)
    if isinstance(spec, MultiTermKernel):
        out = np.zeros(spec.n_nodes, dtype=complex)
        for a, rho in zip(spec.alphas, spec.rhos):
            out += rho * p ** (a - 1.0)
        return out
    if isinstance(spec, DistributedOrderKernel):
        aq, wq = _alpha_quadrature(spec.quad_nodes)
        val = complex(np.sum(wq * spec.mu_at(aq) * p ** (aq - 1.0)))
        return np.full(spec.n_nodes, val, dtype=complex)
    raise TypeError(f"not a kernel spec: {type(spec)!r}")


def kernel_laplace(spec: KernelSpec, p: complex, node: int) -> complex:
    field_vals = kernel_laplace_field(spec, p)
    n = spec.n_nodes
    if not -n <= node < n:
        raise IndexError(f"node {node} outside grid of {n} nodes")
    return complex(field_vals[node])


def singular_exponent_field(spec: KernelSpec) -> np.ndarray:
    """Nodal exponent r(x) with S_1(tau) ~ tau^{r(x)-1} as tau -> 0+.

    Governed by the largest order present: the multi-term exponent is
    alpha_N, the variable-order exponent is alpha(x) itself, and for a
    distributed kernel the upper edge of the support of mu is used (a
    conservative surrogate; the true short-time behavior carries extra
    logarithmic factors).
    """
    if isinstance(spec, VariableOrderKernel):
        return spec.alpha.copy()
    if isinstance(spec, MultiTermKernel):
        return np.full(spec.n_nodes, spec.alphas[-1])
    if isinstance(spec, DistributedOrderKernel):
        support = spec.alpha_grid[spec.mu > 0.0]
        top = float(support[-1]) if support.size else 1.0
        return np.full(spec.n_nodes, min(top, 1.0 - 1e-9))
    raise TypeError(f"not a kernel spec: {type(spec)!r}")


# ---------------------------------------------------------------------------
# convolution operator I_K
# ---------------------------------------------------------------------------

def _moment_tables(spec: KernelSpec, dt: float, n_steps: int):
    """Exact power-law moments over uniform subintervals.

    Returns (I0, I1) indexed by the lag d = 1..n_steps, where for a cell at
    distance d (tau in [tau1, tau2] = [(d-1)*dt, d*dt] from the evaluation
    time)

        I0[d] = int_{tau1}^{tau2} K(tau) dtau
        I1[d] = int_{tau1}^{tau2} tau K(tau) dtau

    Shapes are (n_steps+1,) for spatially constant kernels and
    (n_steps+1, n_nodes) for the variable-order family.  Index 0 is unused.
    """
    d = np.arange(n_steps + 1, dtype=float)
    tau = d * dt

    def power_tables(beta):
        # beta scalar or (n,) -> tables (n_steps+1[, n])
        beta = np.asarray(beta)
        if beta.ndim == 0:
            p1 = tau ** (1.0 - beta)
            p2 = tau ** (2.0 - beta)
        else:
            p1 = tau[:, None] ** (1.0 - beta[None, :])
            p2 = tau[:, None] ** (2.0 - beta[None, :])
        i0 = np.zeros_like(p1)
        i1 = np.zeros_like(p2)
        i0[1:] = (p1[1:] - p1[:-1]) / _gamma(2.0 - beta)
        i1[1:] = (p2[1:] - p2[:-1]) / ((2.0 - beta) * _gamma(1.0 - beta))
        return i0, i1

    if isinstance(spec, VariableOrderKernel):
        return power_tables(spec.alpha)
    if isinstance(spec, MultiTermKernel):
        i0 = np.zeros((n_steps + 1, spec.n_nodes))
        i1 = np.zeros((n_steps + 1, spec.n_nodes))
        for a, rho in zip(spec.alphas, spec.rhos):
            t0, t1 = power_tables(a)
            i0 += t0[:, None] * rho[None, :]
            i1 += t1[:, None] * rho[None, :]
        return i0, i1
    if isinstance(spec, DistributedOrderKernel):
        aq, wq = _alpha_quadrature(spec.quad_nodes)
        muw = wq * spec.mu_at(aq)
        p1 = tau[:, None] ** (1.0 - aq[None, :])
        p2 = tau[:, None] ** (2.0 - aq[None, :])
        i0 = np.zeros(n_steps + 1)
        i1 = np.zeros(n_steps + 1)
        i0[1:] = (p1[1:] - p1[:-1]) @ (muw / _gamma(2.0 - aq))
        i1[1:] = (p2[1:] - p2[:-1]) @ (muw / ((2.0 - aq) * _gamma(1.0 - aq)))
        return i0, i1
    raise TypeError(f"not a kernel spec: {type(spec)!r}")


def apply_IK(spec: KernelSpec, times: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Convolution (I_K g)(t_i, x) = int_0^{t_i} K(t_i - s, x) g(s, x) ds.

    ``values`` holds g sampled on the uniform grid ``times`` (first entry 0),
    one row per time, one column per node.  On each subinterval g is linearly
    interpolated and the kernel moments are integrated exactly, so the
    t^{-alpha} endpoint singularity never meets a smooth quadrature rule.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.ndim != 1 or times.size < 2:
        raise GridError("need at least two time samples")
    dt = times[1] - times[0]
    if dt <= 0.0 or not np.allclose(np.diff(times), dt, rtol=1e-10, atol=1e-14):
        raise GridError("apply_IK requires a uniform time grid")
    if abs(times[0]) > 1e-14 * max(dt, 1.0):
        raise GridError("time grid must start at 0")
    squeeze = values.ndim == 1
    if squeeze:
        values = values[:, None]
    if values.shape[0] != times.size:
        raise GridError("one value row per time sample required")
    if values.shape[1] != spec.n_nodes:
        raise GridError(
            f"value columns ({values.shape[1]}) must match kernel grid "
            f"({spec.n_nodes} nodes)"
        )
    if not np.all(np.isfinite(values[0])):
        raise ValueError("g(0) must be finite")

    n_t = times.size
    i0, i1 = _moment_tables(spec, dt, n_t - 1)
    spatial_tables = i0.ndim == 2

    out = np.zeros_like(values)
    for i in range(1, n_t):
        # cells m = 0..i-1, lag d = i - m runs i..1
        lag = slice(i, 0, -1)
        a0 = i0[lag]
        a1 = i1[lag]
        g_left = values[:i]
        slope = (values[1:i + 1] - values[:i]) / dt
        tau2 = (np.arange(i, 0, -1, dtype=float) * dt)
        if spatial_tables:
            contrib = g_left * a0 + slope * (tau2[:, None] * a0 - a1)
        else:
            contrib = g_left * a0[:, None] + slope * (tau2 * a0 - a1)[:, None]
        out[i] = contrib.sum(axis=0)
    return out[:, 0] if squeeze else out

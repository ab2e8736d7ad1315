"""Solution operators realized as contour quadrature over resolvent solves.

For a kernel symbol K-hat and stiffness operator A, the homogeneous (j=0)
and source (j=1) propagators are

    S_j(t) psi = sum_k w_k exp(t p_k) (A + p_k Khat(p_k,.))^{-1}
                 Khat(p_k,.)^{1-j} psi            (t > 0; zero for t <= 0)

with the sum over contour nodes.  Time derivatives of order m are taken
inside the integral as the exact factor p^m; running time antiderivatives
use (exp(t p) - 1)/p and (exp(t p) - 1 - t p)/p^2.

A cache holds one resolvent factorization per stored contour node.  Only
upper-half-plane nodes are stored: for real data the lower-half terms are
the conjugates of their partners, which halves the factorization and solve
work.  Weighted sums always reduce in fixed node order, so results are
bitwise reproducible for any worker count.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .contour import ContourQuadrature
from .errors import ContourAdmissibilityError, ResolventError
from .kernels import KernelSpec, kernel_laplace_field, require_admissible
from .spatial import StiffnessOperator, factorize_resolvent

DEFAULT_K_MAX = 4


def ordered_map(fn, items, workers=1):
    """Map preserving input order; worker count never changes the output."""
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _exp_minus_one(z):
    """exp(z) - 1 elementwise for complex z, stable near zero."""
    z = np.asarray(z, dtype=complex)
    out = np.exp(z) - 1.0
    small = np.abs(z) < 0.25
    if np.any(small):
        zs = z[small]
        acc = np.zeros_like(zs)
        term = np.ones_like(zs)
        for k in range(1, 18):
            term = term * zs / k
            acc += term
        out[small] = acc
    return out


def _exp_minus_one_minus_z(z):
    """exp(z) - 1 - z elementwise, stable near zero."""
    z = np.asarray(z, dtype=complex)
    out = np.exp(z) - 1.0 - z
    small = np.abs(z) < 0.5
    if np.any(small):
        zs = z[small]
        acc = np.zeros_like(zs)
        term = zs.copy()
        for k in range(2, 24):
            term = term * zs / k
            acc += term
        out[small] = acc
    return out


class PropagatorCache:
    """Per-contour-node symbol fields and resolvent factorizations.

    Immutable after construction apart from the imaginary-remainder
    diagnostic accumulator, which is updated under a lock.
    """

    def __init__(self, contour: ContourQuadrature, spec: KernelSpec,
                 Aop: StiffnessOperator, k_max: int = DEFAULT_K_MAX,
                 workers: int = 1):
        require_admissible(spec)
        if Aop.shape[0] != spec.n_nodes:
            raise ValueError(
                f"kernel grid ({spec.n_nodes}) does not match operator "
                f"({Aop.shape[0]} interior nodes)"
            )
        self.contour = contour
        self.spec = spec
        self.Aop = Aop
        self.k_max = int(k_max)
        self.workers = max(1, int(workers))
        self._lock = threading.Lock()
        self._max_imag_remainder = 0.0

        upper = contour.upper
        self.upper_nodes = contour.nodes[upper]
        self.upper_weights = contour.weights[upper]

        khat_rows = [kernel_laplace_field(spec, p) for p in self.upper_nodes]
        self.khat = np.array(khat_rows)  # (n_stored, n_nodes)

        def _factor(idx):
            p = self.upper_nodes[idx]
            try:
                return factorize_resolvent(Aop, p * self.khat[idx])
            except ResolventError as exc:
                return exc

        results = ordered_map(_factor, range(self.upper_nodes.size), self.workers)
        failed = [self.upper_nodes[i] for i, r in enumerate(results)
                  if isinstance(r, ResolventError)]
        if failed:
            raise ContourAdmissibilityError(failed)
        self.factorizations = results

    @property
    def n_stored(self):
        return self.upper_nodes.size

    @property
    def n_interior(self):
        return self.Aop.shape[0]

    @property
    def diagnostics(self):
        with self._lock:
            remainder = self._max_imag_remainder
        return {
            "contour_nodes": int(self.contour.n_nodes),
            "stored_factorizations": int(self.n_stored),
            "failed_nodes": [],
            "max_imag_remainder": remainder,
        }

    def _record_imag(self, value):
        with self._lock:
            if value > self._max_imag_remainder:
                self._max_imag_remainder = value

    # -- core evaluation ----------------------------------------------------

    def mode_solutions(self, j: int, psi: np.ndarray) -> np.ndarray:
        """(A + p_k Khat)^{-1} Khat^{1-j} psi for every stored node."""
        if j not in (0, 1):
            raise ValueError("j must be 0 or 1")
        psi = np.asarray(psi, dtype=float)
        if psi.shape != (self.n_interior,):
            raise ValueError("psi must be a nodal vector on the mesh interior")

        def _solve(idx):
            rhs = self.khat[idx] * psi if j == 0 else psi.astype(complex)
            return self.factorizations[idx].solve(rhs)

        rows = ordered_map(_solve, range(self.n_stored), self.workers)
        return np.array(rows)

    def _time_coefficients(self, t, k_order, antiderivative):
        p = self.upper_nodes
        if antiderivative == 0:
            coeff = np.exp(t * p)
            if k_order:
                coeff = coeff * p ** k_order
        elif antiderivative == 1:
            coeff = _exp_minus_one(t * p) / p
        elif antiderivative == 2:
            coeff = _exp_minus_one_minus_z(t * p) / p ** 2
        else:
            raise ValueError("antiderivative order must be 0, 1 or 2")
        return self.upper_weights * coeff

    def reduce_real(self, mode_values: np.ndarray, t: float, k_order: int = 0,
                    antiderivative: int = 0) -> np.ndarray:
        """Ordered counterclockwise sum with implied conjugate lower half."""
        coeff = self._time_coefficients(t, k_order, antiderivative)
        upper_terms = coeff[:, None] * mode_values
        full = np.concatenate([np.conj(upper_terms[::-1]), upper_terms], axis=0)
        total = full.sum(axis=0)
        result = np.real(total)
        scale = 1.0 + float(np.max(np.abs(result))) if result.size else 1.0
        self._record_imag(float(np.max(np.abs(np.imag(total)))) / scale)
        return result

    def apply(self, j: int, t: float, psi: np.ndarray, k: int = 0,
              antiderivative: int = 0) -> np.ndarray:
        if k < 0 or k > self.k_max:
            raise ValueError(
                f"derivative order {k} outside calibrated range 0..{self.k_max}"
            )
        psi = np.asarray(psi, dtype=float)
        if t <= 0.0 or not np.any(psi):
            return np.zeros(self.n_interior)
        modes = self.mode_solutions(j, psi)
        return self.reduce_real(modes, t, k, antiderivative)

    def apply_batch(self, j: int, times, psi: np.ndarray, k: int = 0,
                    antiderivative: int = 0) -> np.ndarray:
        """Apply at many times reusing one set of resolvent solves."""
        if k < 0 or k > self.k_max:
            raise ValueError(
                f"derivative order {k} outside calibrated range 0..{self.k_max}"
            )
        times = np.asarray(times, dtype=float)
        psi = np.asarray(psi, dtype=float)
        out = np.zeros((times.size, self.n_interior))
        positive = times > 0.0
        if not np.any(psi) or not np.any(positive):
            return out
        modes = self.mode_solutions(j, psi)
        rows = ordered_map(
            lambda i: self.reduce_real(modes, times[i], k, antiderivative),
            np.flatnonzero(positive), self.workers)
        for row_idx, value in zip(np.flatnonzero(positive), rows):
            out[row_idx] = value
        return out


def build_cache(q: ContourQuadrature, spec: KernelSpec, Aop: StiffnessOperator,
                k_max: int = DEFAULT_K_MAX, workers: int = 1) -> PropagatorCache:
    """Factor (A + p Khat(p,.)) at every stored contour node.

    Fails with a contour-admissibility error listing the offending nodes if
    any factorization is rejected.
    """
    return PropagatorCache(q, spec, Aop, k_max=k_max, workers=workers)


def apply_S(cache: PropagatorCache, j: int, t: float, psi: np.ndarray,
            k: int = 0) -> np.ndarray:
    """S_j(t) psi, with the time derivative of order k taken as p^k inside
    the contour integral.  Exactly zero for t <= 0."""
    return cache.apply(j, t, psi, k)


def apply_S_antiderivative(cache: PropagatorCache, t: float, psi: np.ndarray,
                           order: int = 1, j: int = 1) -> np.ndarray:
    """Running time antiderivative of S_j(.) psi of the given order at t."""
    psi = np.asarray(psi, dtype=float)
    if t <= 0.0 or not np.any(psi):
        return np.zeros(cache.n_interior)
    modes = cache.mode_solutions(j, psi)
    return cache.reduce_real(modes, t, 0, antiderivative=order)


def apply_S0_trajectory(cache: PropagatorCache, times, u0: np.ndarray):
    """Homogeneous trajectory S_0(t_i) u0 over an increasing time list."""
    from .sources import Trajectory

    times = np.asarray(times, dtype=float)
    if times.size > 1 and np.any(np.diff(times) <= 0.0):
        raise ValueError("times must be strictly increasing")
    values = cache.apply_batch(0, times, u0, 0)
    return Trajectory(times=times, values=values,
                      metadata={"kind": "homogeneous"})

"""Wong-Zakai check: smoothed classical noise versus the Stratonovich limit.

A Brownian path is convolved with the two-sided exponential kernel
``G(tau) = exp(-|tau| / lam) / (2 lam)``, giving a smooth noise ``w_lam``.  The
random ODE ``dU/dt = -i (V w_lam(t) + H) U`` is then compared pathwise with
the Stratonovich solution of ``dU = -i (V o dB + H dt) U`` driven by the
same increments.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import math
import os

import numpy as np
import scipy.signal

from ._linalg import dagger, expm_hermitian, opnorm, ordered_product
from .coeffs import CoefficientBlock, strat_to_ito
from .errors import GridTooCoarse, NotConverging, StepTooLarge

__all__ = [
    "Kernel", "NoisePath", "box_muller", "brownian_path", "smooth_path",
    "integrate_colored", "stratonovich_reference", "reference_coefficients",
    "WZTable", "wz_convergence", "path_grid_size",
]


@dataclass(frozen=True)
class Kernel:
    """Two-sided exponential correlation kernel of width ``lam``."""

    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("kernel width must be positive")

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        return np.exp(-np.abs(tau) / self.lam) / (2 * self.lam)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        # both branches computed on clipped arguments to avoid overflow warnings
        neg = 0.5 * np.exp(np.minimum(x, 0.0) / self.lam)
        pos = 1.0 - 0.5 * np.exp(-np.maximum(x, 0.0) / self.lam)
        return np.where(x < 0, neg, pos)

    @property
    def kappa(self):
        """``int_0^inf G = 1/2`` for this symmetric real kernel."""
        return 0.5

    def cell_weights(self, dt, n):
        """``int G`` over cells ``[(m - 1/2) dt, (m + 1/2) dt]`` for ``m = -(n-1) .. n-1``."""
        m = np.arange(-(n - 1), n)
        return self.cdf((m + 0.5) * dt) - self.cdf((m - 0.5) * dt)


@dataclass
class NoisePath:
    """Brownian increments on a uniform grid, optionally with their smoothed derivative.

    ``smoothed[k]`` is the average of ``w_lam`` over cell ``k``.
    """

    seed: int
    dt: float
    increments: np.ndarray
    lam: float = None
    smoothed: np.ndarray = None

    @property
    def n(self):
        return self.increments.size

    @property
    def T(self):
        return self.n * self.dt


def box_muller(uniform_pairs):
    """Standard normals from an ``(m, 2)`` array of uniforms in ``[0, 1)``."""
    u1 = 1.0 - uniform_pairs[:, 0]
    u2 = uniform_pairs[:, 1]
    r = np.sqrt(-2.0 * np.log(u1))
    return np.stack([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)], axis=1).ravel()


def brownian_path(seed, T, n):
    """Increments with variance ``T/n`` from a Philox stream keyed by ``seed``."""
    gen = np.random.Generator(np.random.Philox(key=int(seed)))
    u = gen.random(((n + 1) // 2, 2))
    z = box_muller(u)[:n]
    dt = T / n
    return NoisePath(seed=int(seed), dt=dt, increments=math.sqrt(dt) * z)


def path_grid_size(T, lam_min):
    """Smallest power-of-two grid with ``dt <= lam_min^2 / 10``."""
    n = 1
    while T / n > lam_min ** 2 / 10:
        n *= 2
    return n


def smooth_path(path, kernel):
    """Convolve the increments with ``kernel``.

    Each increment is treated as a point mass at the centre of its cell;
    cell-integrated kernel weights make ``sum(smoothed * dt)`` equal the
    kernel-weighted sum of increments exactly.
    """
    lam = kernel.lam if isinstance(kernel, Kernel) else float(kernel)
    kernel = Kernel(lam)
    if lam < 5 * path.dt:
        raise GridTooCoarse(f"lambda = {lam} is not resolved by dt = {path.dt} (need lambda >= 5 dt)")
    n = path.n
    w = kernel.cell_weights(path.dt, n)
    full = scipy.signal.fftconvolve(path.increments, w, mode="full")
    cell_integrals = full[n - 1:2 * n - 1]
    return NoisePath(seed=path.seed, dt=path.dt, increments=path.increments, lam=lam,
                     smoothed=cell_integrals / path.dt)


def _hermitian(m, name):
    m = np.atleast_2d(np.asarray(m, dtype=complex))
    if opnorm(m - dagger(m)) > 1e-12:
        raise ValueError(f"{name} must be self-adjoint")
    return m


def _coarsen(values, factor):
    if factor == 1:
        return values
    if values.size % factor:
        raise StepTooLarge("ODE step must be a whole number of path cells")
    return values.reshape(-1, factor).sum(axis=1)


def integrate_colored(V, H, path, dt_ode=None):
    """``U_lam(T)`` for ``dU/dt = -i (V w_lam + H) U`` by exponential steps.

    ``w_lam`` is integrated exactly over each step, so the scheme is exact when
    ``V`` and ``H`` commute.
    """
    if path.smoothed is None:
        raise ValueError("path has not been smoothed")
    V = _hermitian(V, "V")
    H = _hermitian(H, "H")
    dt_ode = path.dt if dt_ode is None else dt_ode
    if dt_ode > path.lam / 10 * (1 + 1e-12):
        raise StepTooLarge(f"dt_ode = {dt_ode} exceeds lambda/10 = {path.lam / 10}")
    factor = int(round(dt_ode / path.dt))
    if factor < 1 or abs(factor * path.dt - dt_ode) > 1e-12 * dt_ode:
        raise StepTooLarge("dt_ode must be a positive multiple of the path step")
    b = _coarsen(path.smoothed * path.dt, factor)
    gens = b[:, None, None] * V + (factor * path.dt) * H
    return ordered_product(expm_hermitian(gens))


def reference_coefficients(V, H, kappa=0.5):
    """Ito coefficients of the white-noise limit via the generic conversion.

    Classical noise ``dB = dA + dA^dag`` gives ``E00 = H``, ``E10 = E01 = V``,
    ``E11 = 0``.
    """
    V = _hermitian(V, "V")
    H = _hermitian(H, "H")
    E = CoefficientBlock.from_blocks(V.shape[0], 1, kind="strat", b00=H, b10=V, b01=V)
    return E, strat_to_ito(E, kappa)


def stratonovich_reference(V, H, path, scheme="exponential"):
    """Solution of ``dU = (-i V dB - (V^2/2 + i H) dt) U`` on the raw path.

    ``scheme`` is ``"exponential"`` (``exp(-i(V dB + H dt))`` per step, exactly
    unitary), ``"milstein"`` or ``"euler"``.  The drift of the last two is taken
    from :func:`reference_coefficients`.
    """
    E, G = reference_coefficients(V, H)
    V = E[1, 0]
    db = path.increments[:, None, None]
    dt = path.dt
    eye = np.eye(V.shape[0], dtype=complex)
    if scheme == "exponential":
        steps = expm_hermitian(db * V + dt * E[0, 0])
    elif scheme in ("milstein", "euler"):
        drift = -1j * G[0, 0]
        steps = eye - 1j * db * G[1, 0] + dt * drift
        if scheme == "milstein":
            steps = steps - 0.5 * (db ** 2 - dt) * (G[1, 0] @ G[0, 1])
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return ordered_product(steps)


@dataclass
class WZTable:
    lambdas: list
    errors: np.ndarray  # shape (n_lambda, n_seeds)
    seeds: list
    ratio: float = 0.85
    halvings: int = 3

    @property
    def mean_err(self):
        return self.errors.mean(axis=1)

    @property
    def max_err(self):
        return self.errors.max(axis=1)

    def rows(self):
        return [{"lambda": lam, "mean_err": float(m), "max_err": float(x),
                 "n_seeds": len(self.seeds)}
                for lam, m, x in zip(self.lambdas, self.mean_err, self.max_err)]

    def converging(self, floor=1e-8):
        e = self.mean_err
        if e.max() <= floor:
            return True
        tail = e[-(self.halvings + 1):]
        if tail.size < self.halvings + 1:
            return False
        return bool(all(tail[k + 1] < self.ratio * tail[k] for k in range(self.halvings)))


def _threads():
    try:
        return max(1, int(os.environ.get("QSTOCH_THREADS", "1")))
    except ValueError:
        return 1


def _seed_errors(V, H, seed, lambdas, T, n_path, scheme):
    path = brownian_path(seed, T, n_path)
    ref = stratonovich_reference(V, H, path, scheme=scheme)
    return [opnorm(integrate_colored(V, H, smooth_path(path, Kernel(lam))) - ref)
            for lam in lambdas]


def wz_convergence(V, H, lambdas, seeds, T=1.0, n_path=None, scheme="exponential",
                   ratio=0.85, halvings=3, check=True):
    """Mean and max pathwise error ``||U_lam(T) - U_strat(T)||`` for each ``lam``."""
    lambdas = [float(x) for x in lambdas]
    if any(b >= a for a, b in zip(lambdas, lambdas[1:])):
        raise ValueError("lambda list must be strictly decreasing")
    seeds = [int(s) for s in seeds]
    if n_path is None:
        n_path = path_grid_size(T, min(lambdas))
    if T / n_path > min(lambdas) ** 2 / 10 * (1 + 1e-12):
        raise GridTooCoarse("path grid must satisfy dt <= min(lambda)^2 / 10")
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        per_seed = list(pool.map(
            lambda s: _seed_errors(V, H, s, lambdas, T, n_path, scheme), seeds))
    table = WZTable(lambdas, np.array(per_seed).T, seeds, ratio=ratio, halvings=halvings)
    if check and not table.converging():
        raise NotConverging("mean Wong-Zakai error does not shrink by the required ratio",
                            table=table)
    return table

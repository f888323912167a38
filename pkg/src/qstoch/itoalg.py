"""Ito-table algebra for operator- and superoperator-valued generators.

Both kinds of generator are :class:`~qstoch.coeffs.CoefficientBlock` arrays;
the only difference is what a block means.  For an operator generator a block
is a ``d x d`` matrix, for a :class:`SuperGenerator` it is a ``d^2 x d^2``
matrix acting on column-stacked operators.  In both cases composition is a
matrix product, and the Ito table ``dA^{a j} dA^{j b} = dA^{a b}`` (j a
channel index, every pairing through the time index vanishing) turns the
product of two generators into a channel contraction.
"""
import math

import numpy as np
import scipy.linalg

from ._linalg import (apply_super, dagger, matrix_units, opnorm,
                      spost, spre, sprepost)
from .coeffs import CoefficientBlock
from .errors import DimensionMismatch, SeriesDivergence

__all__ = [
    "OperatorGenerator", "SuperGenerator", "qv_product", "qv_bracket",
    "strat_correction", "exp_generator", "phi2", "dissipation_eval",
    "superop_exponential", "homomorphism_residual", "reality_residual",
    "commutator_super", "lindblad_super",
]


class OperatorGenerator(CoefficientBlock):
    """Coefficients of ``dX = X_ab (x) dA^ab`` with ``d x d`` blocks."""


class SuperGenerator(CoefficientBlock):
    """Generator whose blocks are superoperators stored as ``d^2 x d^2`` matrices."""

    def __init__(self, blocks, kind="super"):
        super().__init__(blocks, kind=kind)
        m = self.d
        ds = int(round(math.sqrt(m)))
        if ds * ds != m:
            raise DimensionMismatch(f"superoperator blocks must be d^2 x d^2, got {m} x {m}")
        self.dim_system = ds

    @classmethod
    def from_maps(cls, maps, dim_system, channels=1):
        """Build from a dict ``{(alpha, beta): d^2 x d^2 matrix}``; missing blocks are zero."""
        m = dim_system * dim_system
        arr = np.zeros((channels + 1, channels + 1, m, m), dtype=complex)
        for (a, b), s in maps.items():
            arr[a, b] = s
        return cls(arr)

    def apply(self, alpha, beta, x):
        return apply_super(self[alpha, beta], x)

    def apply_all(self, x):
        """All blocks applied to ``x``: array ``(N+1, N+1, d, d)``."""
        v = np.asarray(x, dtype=complex).reshape(-1, order="F")
        out = self.blocks @ v
        d = self.dim_system
        return out.reshape(out.shape[:2] + (d, d), order="F")


def _contract(x, y):
    if x.shape != y.shape:
        raise DimensionMismatch(f"generator shapes differ: {x.shape} vs {y.shape}")
    return np.einsum("ajik,jbkl->abil", x.blocks[:, 1:], y.blocks[1:, :])


def qv_product(dX, dY):
    """Ito product of two operator generators: ``(XY)_ab = sum_j X_aj Y_jb``."""
    return type(dX)(_contract(dX, dY), kind=dX.kind)


def qv_bracket(dL, dM):
    """Mutual quadratic variation ``[[L, M]]_ab = sum_j L_aj o M_jb``."""
    return type(dL)(_contract(dL, dM), kind=dL.kind)


def strat_correction(dL):
    """Stratonovich differential ``dL + 1/2 (dL)^2``."""
    return type(dL)(dL.blocks + 0.5 * _contract(dL, dL), kind=dL.kind)


def phi2(x, term_tol=1e-14, n_max=200):
    """``(e^x - 1 - x) / x^2`` for a square matrix, by its power series.

    Returns ``(value, n_terms)``.  The tail after a term of norm ``t`` at index
    ``k`` is bounded by ``t * r / (1 - r)`` with ``r = ||x|| / (k + 3)``, so we
    stop once that bound drops below ``term_tol``.
    """
    x = np.asarray(x, dtype=complex)
    eye = np.eye(x.shape[0], dtype=complex)
    xn = opnorm(x)
    term = eye / 2.0
    total = term.copy()
    for k in range(1, n_max + 1):
        term = term @ x / (k + 2)
        total += term
        t = opnorm(term)
        r = xn / (k + 3)
        if r < 1 and t * r / (1 - r) < term_tol:
            return total, k + 1
    raise SeriesDivergence(f"phi2 series did not converge after {n_max} terms (||x|| = {xn:.3g})")


def exp_generator(dL, term_tol=1e-14, n_max=200, check_tol=1e-9):
    """``e^{dL} - id = sum_{n>=1} (dL)^n / n!`` evaluated with the Ito table.

    Every power ``(dL)^n`` with ``n >= 2`` contracts through the channel block,
    so the sum collapses to ``L_ab + L_a. phi2(L11) L_.b``.  The channel block
    ``e^{L11} - I`` is cross-checked against a direct matrix exponential.
    """
    n, m = dL.channels, dL.d
    l11 = dL.channel_matrix()
    p, _ = phi2(l11, term_tol=term_tol, n_max=n_max)
    rows = np.stack([dL.row(a) for a in range(n + 1)])
    cols = np.stack([dL.col(b) for b in range(n + 1)])
    out = dL.blocks + rows[:, None] @ p @ cols[None, :]
    h = type(dL)(out, kind=dL.kind)
    direct = scipy.linalg.expm(l11) - np.eye(n * m)
    scale = max(1.0, opnorm(direct))
    if opnorm(h.channel_matrix() - direct) > check_tol * scale:
        raise SeriesDivergence("channel block of exp_generator disagrees with expm(L11) - I")
    return h


def dissipation_eval(L, x, y):
    """``L(XY) - L(X) Y - X L(Y)``; ``L`` is a superoperator matrix or a callable."""
    f = L if callable(L) else (lambda z: apply_super(L, z))
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    return f(x @ y) - f(x) @ y - x @ f(y)


def superop_exponential(v, t):
    """``e^{t v}`` as a ``d^2 x d^2`` matrix."""
    return scipy.linalg.expm(t * np.asarray(v, dtype=complex))


def homomorphism_residual(phi, d=None):
    """Max of ``||phi(XY) - phi(X) phi(Y)||`` over all pairs of matrix units."""
    phi = np.asarray(phi)
    d = d or int(round(math.sqrt(phi.shape[0])))
    units = matrix_units(d)
    images = [apply_super(phi, u) for u in units]
    worst = 0.0
    for i, x in enumerate(units):
        for j, y in enumerate(units):
            worst = max(worst, opnorm(apply_super(phi, x @ y) - images[i] @ images[j]))
    return worst


def reality_residual(L, d=None):
    """Max of ``||L(X^dag) - L(X)^dag||`` over matrix units."""
    L = np.asarray(L)
    d = d or int(round(math.sqrt(L.shape[0])))
    return max(opnorm(apply_super(L, dagger(u)) - dagger(apply_super(L, u)))
               for u in matrix_units(d))


def commutator_super(h):
    """Superoperator ``X -> i[H, X]``."""
    return 1j * (spre(h) - spost(h))


def lindblad_super(h, ks):
    """Heisenberg-picture generator ``i[H,X] + sum K^dag X K - 1/2 {K^dag K, X}``."""
    out = commutator_super(h)
    for k in ks:
        k = np.asarray(k, dtype=complex)
        kk = dagger(k) @ k
        out = out + sprepost(dagger(k), k) - 0.5 * (spre(kk) + spost(kk))
    return out


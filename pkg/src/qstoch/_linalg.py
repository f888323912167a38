"""Small dense linear-algebra helpers used across the package.

Superoperators act on column-stacked operators: ``vec(X) = X.reshape(-1,
order="F")``.  Under this convention ``vec(A X B) = (B^T kron A) vec(X)``, so
left multiplication by ``A`` is ``kron(I, A)`` and right multiplication by
``B`` is ``kron(B^T, I)``.
"""
import numpy as np
import scipy.linalg

from .errors import SingularResolvent

TOL_ALGEBRA = 1e-10
TOL_SERIES = 1e-12
COND_MAX = 1e12


def dagger(a):
    return np.conj(np.swapaxes(a, -1, -2))


def opnorm(a):
    """Spectral norm of a matrix (0 for empty input)."""
    a = np.asarray(a)
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(a, 2))


def vec(x):
    return np.asarray(x).reshape(-1, order="F")


def unvec(v, d=None):
    v = np.asarray(v)
    if d is None:
        d = int(round(np.sqrt(v.size)))
    return v.reshape((d, d), order="F")


def spre(a):
    """Superoperator ``X -> A X``."""
    a = np.asarray(a)
    return np.kron(np.eye(a.shape[0]), a)


def spost(b):
    """Superoperator ``X -> X B``."""
    b = np.asarray(b)
    return np.kron(b.T, np.eye(b.shape[0]))


def sprepost(a, b):
    """Superoperator ``X -> A X B``."""
    return np.kron(np.asarray(b).T, np.asarray(a))


def apply_super(s, x):
    """Apply a d^2 x d^2 superoperator matrix to a d x d operator."""
    x = np.asarray(x)
    return unvec(s @ vec(x), x.shape[0])


def matrix_units(d):
    """All d^2 matrix units E_ij, in column-stacked order."""
    units = np.zeros((d * d, d, d), dtype=complex)
    for k in range(d * d):
        units[k] = unvec(np.eye(d * d)[k], d)
    return units


def checked_inverse(a, cond_max=COND_MAX, what="matrix", exc=SingularResolvent):
    """Invert ``a`` by pivoted LU, refusing when the condition number exceeds ``cond_max``."""
    a = np.asarray(a, dtype=complex)
    cond = np.linalg.cond(a) if a.size else 1.0
    if not np.isfinite(cond) or cond > cond_max:
        raise exc(f"{what} is numerically singular (condition number {cond:.3e} > {cond_max:.1e})")
    lu = scipy.linalg.lu_factor(a, check_finite=True)
    return scipy.linalg.lu_solve(lu, np.eye(a.shape[0], dtype=complex))


def ordered_product(mats):
    """Time-ordered product ``M[n-1] @ ... @ M[1] @ M[0]`` by pairwise reduction.

    Axis 0 is time; any further leading axes are treated as a batch.
    """
    m = np.asarray(mats)
    if m.shape[0] == 0:
        raise ValueError("empty product")
    while m.shape[0] > 1:
        tail = None
        if m.shape[0] % 2:
            tail = m[-1:]
            m = m[:-1]
        m = m[1::2] @ m[0::2]
        if tail is not None:
            m = np.concatenate([m, tail], axis=0)
    return m[0]


def expm_hermitian(a, scale=-1j):
    """Batched ``exp(scale * A)`` for Hermitian ``A`` via eigendecomposition.

    With the default ``scale=-1j`` the result is exactly unitary up to the
    accuracy of ``eigh``.
    """
    w, q = np.linalg.eigh(a)
    return (q * np.exp(scale * w)[..., None, :]) @ dagger(q)

"""Evans-Hudson flow generators built from unitary Ito coefficients.

For ``dU = -i dG U`` the sandwiched process ``U^dag X U`` obeys
``d(U^dag X U) = U^dag L_ab(X) U dA^ab`` with::

    L_ab(X) = i G_ba^dag X - i X G_ab + sum_j G_ja^dag X G_jb

The last term carries no factor 1/2: it comes from the single Ito pairing
``dU^dag X dU``.  :func:`differential_oracle` re-derives the same blocks from
the Ito product so the convention is checked rather than assumed.
"""
import numpy as np

from ._linalg import TOL_ALGEBRA, dagger, matrix_units, opnorm, spost, spre, sprepost
from .coeffs import block_name, check_ito_unitarity
from .errors import UnitarityViolated
from .itoalg import OperatorGenerator, SuperGenerator, lindblad_super, qv_product

__all__ = [
    "FlowGenerator", "eh_generator", "structure_residual", "structure_residual_max",
    "unital_residual", "flow_reality_residual", "vacuum_forward_derivative",
    "predual_apply", "differential_oracle", "lindblad_residual", "flow_report",
]


class FlowGenerator(SuperGenerator):
    """Structure maps ``L_ab`` of a homomorphic flow, with the ``G`` they came from."""

    def __init__(self, blocks, kind="flow", source=None):
        super().__init__(blocks, kind=kind)
        self.source = source

    def _like(self, blocks, kind=None):
        return FlowGenerator(blocks, source=self.source)


def eh_generator(G, tol=TOL_ALGEBRA):
    """Evans-Hudson maps for unitary Ito coefficients ``G``."""
    report = check_ito_unitarity(G, tol)
    if not report.passed:
        raise UnitarityViolated(
            f"G fails the unitarity conditions (max residual {report.max_residual:.3e})")
    n, d = G.channels, G.d
    blocks = np.zeros((n + 1, n + 1, d * d, d * d), dtype=complex)
    for a in range(n + 1):
        for b in range(n + 1):
            s = 1j * spre(dagger(G[b, a])) - 1j * spost(G[a, b])
            for j in range(1, n + 1):
                s = s + sprepost(dagger(G[j, a]), G[j, b])
            blocks[a, b] = s
    return FlowGenerator(blocks, source=G)


def structure_residual(F, x, y):
    """``L_ab(XY) - L_ab(X) Y - X L_ab(Y) - sum_j L_aj(X) L_jb(Y)`` for every (a, b)."""
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    lxy = F.apply_all(x @ y)
    lx = F.apply_all(x)
    ly = F.apply_all(y)
    fluct = np.einsum("ajik,jbkl->abil", lx[:, 1:], ly[1:, :])
    return lxy - lx @ y - x @ ly - fluct


def structure_residual_max(F, samples=None, rng=None):
    """Worst structure residual over all matrix-unit pairs, or ``samples`` random pairs."""
    d = F.dim_system
    worst = 0.0
    if samples is None:
        units = matrix_units(d)
        pairs = ((x, y) for x in units for y in units)
    else:
        rng = np.random.default_rng(rng)
        pairs = ((rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)),
                  rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))
                 for _ in range(samples))
    for x, y in pairs:
        r = structure_residual(F, x, y)
        worst = max(worst, max(opnorm(b) for b in r.reshape((-1,) + r.shape[2:])))
    return worst


def unital_residual(F):
    """``max_ab ||L_ab(I)||``."""
    r = F.apply_all(np.eye(F.dim_system))
    return max(opnorm(b) for b in r.reshape((-1,) + r.shape[2:]))


def flow_reality_residual(F):
    """``max ||L_ab(X^dag) - L_ba(X)^dag||`` over matrix units."""
    worst = 0.0
    for u in matrix_units(F.dim_system):
        lu = F.apply_all(u)
        ladj = F.apply_all(dagger(u))
        worst = max(worst, float(np.max(np.abs(ladj - dagger(np.swapaxes(lu, 0, 1))))))
    return worst


def vacuum_forward_derivative(F, x):
    """Forward derivative in the vacuum: only the time block survives."""
    return F.apply(0, 0, x)


def predual_apply(F, rho, alpha=0, beta=0):
    """Schrodinger-picture map ``L*`` defined by ``tr(L(X) rho) = tr(X L*(rho))``."""
    rho = np.asarray(rho, dtype=complex)
    d = F.dim_system
    v = F[alpha, beta].T @ rho.T.reshape(-1, order="F")
    return v.reshape((d, d), order="F").T


def differential_oracle(G, x):
    """Coefficients of ``d(U^dag X U)`` at ``U = I`` from the Ito product.

    Expands ``(dU^dag) X + X dU + (dU^dag) X (dU)`` with ``dU = -i dG``.
    Returns an ``(N+1, N+1, d, d)`` array.
    """
    x = np.asarray(x, dtype=complex)
    du = OperatorGenerator(-1j * G.blocks)
    du_dag = du.adjoint()
    left = OperatorGenerator(du_dag.blocks @ x)
    right = x @ du.blocks
    return left.blocks + right + qv_product(left, du).blocks


def lindblad_residual(F, hp):
    """``||L_00 - (i[H,.] + sum K_j^dag . K_j - 1/2 {K_j^dag K_j, .})||`` as matrices."""
    d = hp.d
    ks = hp.K.reshape(hp.channels, d, d)
    return opnorm(F[0, 0] - lindblad_super(hp.H, ks))


def flow_report(G, tol=TOL_ALGEBRA, rng=0):
    """Residual table for a unitary generator and its flow."""
    F = eh_generator(G, tol)
    d = G.d
    rng = np.random.default_rng(rng)
    x = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    oracle = differential_oracle(G, x)
    direct = F.apply_all(x)
    residuals = {
        "unital": unital_residual(F),
        "reality": flow_reality_residual(F),
        "structure": structure_residual_max(F, samples=None if d <= 4 else 64, rng=rng),
        "oracle": float(np.max([opnorm(b) for b in (oracle - direct).reshape((-1, d, d))])),
    }
    per_block = {block_name("L", a, b, G.channels): opnorm(F[a, b]) for a, b in G.indices()}
    return {"residuals": residuals, "tol": tol,
            "passed": all(v <= tol for v in residuals.values()),
            "block_norms": per_block}

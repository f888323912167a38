"""Coefficient algebra for quantum stochastic generators.

A generator ``dX = X_ab (x) dA^ab`` is stored as an ``(N+1, N+1, d, d)``
array of blocks.  Index 0 is the time slot and indices ``1..N`` are noise
channels, so for a single channel ``[1, 0]`` multiplies the creation
increment, ``[0, 1]`` the annihilation increment and ``[1, 1]`` the gauge
(conservation) increment.

Stratonovich coefficients ``E`` and Ito coefficients ``G`` of the same
unitary process are related through the complex gauge ``kappa``
(``Re kappa = 1/2``)::

    E_ab = G_ab + i kappa G_a. (I - i kappa G11)^-1 G_.b
    G_ab = E_ab - i kappa E_a. (I + i kappa E11)^-1 E_.b

where a dot means a contracted channel index.
"""
from dataclasses import dataclass, field
import itertools

import numpy as np

from ._linalg import (COND_MAX, TOL_ALGEBRA, TOL_SERIES, checked_inverse,
                      dagger, opnorm)
from .errors import (DimensionMismatch, NonCommuting, NormTooLarge,
                     NotSelfAdjoint, NotUnitary, SingularFactor,
                     UnitarityViolated)

__all__ = [
    "GaugeParameter", "CoefficientBlock", "HPTriple", "ConversionReport",
    "NeumannResult", "block_name", "strat_to_ito", "ito_to_strat",
    "check_strat_selfadjoint", "check_ito_unitarity", "unitarity_residuals",
    "ito_from_hp", "hp_from_ito", "closed_form_hp_from_strat",
    "neumann_resolvent", "add_generators", "additive_h_comparison",
    "composite_w", "composite_w_via_addition", "cayley_from_e11",
]


@dataclass(frozen=True)
class GaugeParameter:
    """Stratonovich gauge: a complex number with real part exactly 1/2."""

    kappa: complex = 0.5

    def __post_init__(self):
        k = complex(self.kappa)
        if k.real != 0.5:
            raise ValueError(f"gauge parameter must satisfy Re(kappa) = 1/2, got {k}")
        if not np.isfinite(k.imag):
            raise ValueError("gauge parameter must be finite")
        object.__setattr__(self, "kappa", k)

    @classmethod
    def from_imag(cls, imag):
        return cls(complex(0.5, imag))

    @property
    def imag(self):
        return self.kappa.imag

    def __complex__(self):
        return self.kappa


def _kappa(kappa):
    if isinstance(kappa, GaugeParameter):
        return kappa.kappa
    return GaugeParameter(kappa).kappa


def block_name(prefix, alpha, beta, channels):
    """File/report key for a block, e.g. ``G10`` or ``G1_2`` when N > 1."""
    if channels == 1:
        return f"{prefix}{alpha}{beta}"
    return f"{prefix}{alpha}_{beta}"


class CoefficientBlock:
    """An ``(N+1) x (N+1)`` array of square complex blocks.

    ``kind`` is a free label ("ito", "strat", "super", ...) used only for
    naming blocks in reports and files.
    """

    def __init__(self, blocks, kind="ito"):
        b = np.array(blocks, dtype=complex)
        if b.ndim != 4 or b.shape[0] != b.shape[1] or b.shape[2] != b.shape[3]:
            raise DimensionMismatch(
                f"blocks must have shape (N+1, N+1, d, d), got {b.shape}")
        if b.shape[0] < 2:
            raise DimensionMismatch("at least one noise channel is required")
        if b.shape[2] < 1:
            raise DimensionMismatch("block dimension must be positive")
        if not np.all(np.isfinite(b)):
            raise ValueError("coefficient blocks contain NaN or Inf")
        b.setflags(write=False)
        self._blocks = b
        self.kind = kind

    @classmethod
    def zeros(cls, d, channels=1, kind="ito"):
        return cls(np.zeros((channels + 1, channels + 1, d, d)), kind=kind)

    @classmethod
    def from_blocks(cls, d, channels=1, kind="ito", **named):
        """Build from keyword blocks such as ``b00=H, b10=K, b01=K.conj().T``.

        Keys are ``b<alpha><beta>`` (single channel) or ``b<alpha>_<beta>``.
        """
        arr = np.zeros((channels + 1, channels + 1, d, d), dtype=complex)
        for key, value in named.items():
            idx = key[1:]
            a, b = idx.split("_") if "_" in idx else (idx[0], idx[1:])
            arr[int(a), int(b)] = np.broadcast_to(np.asarray(value, dtype=complex), (d, d))
        return cls(arr, kind=kind)

    @property
    def blocks(self):
        return self._blocks

    @property
    def d(self):
        return self._blocks.shape[2]

    @property
    def channels(self):
        return self._blocks.shape[0] - 1

    @property
    def shape(self):
        return self._blocks.shape

    def __getitem__(self, idx):
        return self._blocks[idx]

    def __repr__(self):
        return f"CoefficientBlock(kind={self.kind!r}, d={self.d}, channels={self.channels})"

    def _like(self, blocks, kind=None):
        return type(self)(blocks, kind=self.kind if kind is None else kind)

    def __add__(self, other):
        _check_same_shape(self, other)
        return self._like(self._blocks + other.blocks)

    def __sub__(self, other):
        _check_same_shape(self, other)
        return self._like(self._blocks - other.blocks)

    def __neg__(self):
        return self._like(-self._blocks)

    def scale(self, c):
        return self._like(c * self._blocks)

    def norm(self):
        """Largest spectral norm over all blocks."""
        return max(opnorm(self._blocks[a, b]) for a, b in self.indices())

    def indices(self):
        n = self.channels + 1
        return itertools.product(range(n), range(n))

    def adjoint(self):
        """Coefficients of the adjoint differential: ``(X^dag)_ab = (X_ba)^dag``."""
        return self._like(dagger(np.swapaxes(self._blocks, 0, 1)))

    def channel_matrix(self):
        """The ``Nd x Nd`` channel-channel block matrix (``E11`` in the tensor form)."""
        n, d = self.channels, self.d
        return self._blocks[1:, 1:].transpose(0, 2, 1, 3).reshape(n * d, n * d)

    def row(self, alpha):
        """Blocks ``X_{alpha j}``, j = 1..N, side by side (``d x Nd``)."""
        return np.concatenate(list(self._blocks[alpha, 1:]), axis=1)

    def col(self, beta):
        """Blocks ``X_{j beta}``, j = 1..N, stacked (``Nd x d``)."""
        return np.concatenate(list(self._blocks[1:, beta]), axis=0)

    def to_dict(self, prefix=None):
        prefix = prefix or {"ito": "G", "strat": "E"}.get(self.kind, "X")
        return {block_name(prefix, a, b, self.channels): self._blocks[a, b]
                for a, b in self.indices()}


def _check_same_shape(x, y):
    if x.shape != y.shape:
        raise DimensionMismatch(f"shape mismatch: {x.shape} vs {y.shape}")


def _split_channel_matrix(m, channels, d):
    return m.reshape(channels, d, channels, d).transpose(0, 2, 1, 3)


@dataclass
class ConversionReport:
    residual_norms: dict
    tol: float = TOL_ALGEBRA
    notes: list = field(default_factory=list)

    @property
    def passed(self):
        return all(r <= self.tol for r in self.residual_norms.values())

    @property
    def max_residual(self):
        return max(self.residual_norms.values(), default=0.0)

    def to_json(self):
        return {"residual_norms": dict(self.residual_norms), "tol": self.tol,
                "passed": self.passed, "notes": list(self.notes)}


def _resolvent_contraction(x, sign, kappa, cond_max):
    """Return ``X + sign*i*kappa X_a. (I - sign*i*kappa X11)^-1 X_.b`` and the resolvent."""
    n, d = x.channels, x.d
    c = sign * 1j * kappa
    res = np.eye(n * d) - c * x.channel_matrix()
    what = "(I - i kappa G11)" if sign > 0 else "(I + i kappa E11)"
    r = checked_inverse(res, cond_max=cond_max, what=what)
    rows = np.stack([x.row(a) for a in range(n + 1)])
    cols = np.stack([x.col(b) for b in range(n + 1)])
    corr = rows[:, None] @ r @ cols[None, :]
    return x.blocks + c * corr, r


def strat_to_ito(E, kappa=0.5, cond_max=COND_MAX):
    """Ito coefficients ``G`` from Stratonovich coefficients ``E``."""
    k = _kappa(kappa)
    blocks, _ = _resolvent_contraction(E, -1, k, cond_max)
    return CoefficientBlock(blocks, kind="ito")


def ito_to_strat(G, kappa=0.5, cond_max=COND_MAX):
    """Stratonovich coefficients ``E`` from Ito coefficients ``G``; inverse of :func:`strat_to_ito`."""
    k = _kappa(kappa)
    blocks, _ = _resolvent_contraction(G, +1, k, cond_max)
    return CoefficientBlock(blocks, kind="strat")


def check_strat_selfadjoint(E, tol=TOL_ALGEBRA):
    """Residuals ``||E_ab^dag - E_ba||`` for every pair."""
    res = {block_name("E", a, b, E.channels): opnorm(dagger(E[a, b]) - E[b, a])
           for a, b in E.indices()}
    return ConversionReport(res, tol)


def unitarity_residuals(G):
    """Blocks ``i G_ba^dag - i G_ab + sum_j G_ja^dag G_jb``; all vanish iff U is unitary."""
    g = G.blocks
    adj = dagger(np.swapaxes(g, 0, 1))
    quad = np.einsum("jaki,jbkl->abil", g[1:].conj(), g[1:])
    return 1j * adj - 1j * g + quad


def check_ito_unitarity(G, tol=TOL_ALGEBRA):
    """Hudson-Parthasarathy conditions for the Ito coefficients ``G``."""
    r = unitarity_residuals(G)
    res = {block_name("G", a, b, G.channels): opnorm(r[a, b]) for a, b in G.indices()}
    return ConversionReport(res, tol)


@dataclass
class HPTriple:
    """``(W, K, H)``: channel unitary ``W`` (Nd x Nd), coupling ``K`` (Nd x d), Hamiltonian ``H``."""

    W: np.ndarray
    K: np.ndarray
    H: np.ndarray
    residuals: dict = field(default_factory=dict)

    def __post_init__(self):
        self.W = np.atleast_2d(np.asarray(self.W, dtype=complex))
        self.K = np.atleast_2d(np.asarray(self.K, dtype=complex))
        self.H = np.atleast_2d(np.asarray(self.H, dtype=complex))
        d = self.H.shape[0]
        if self.H.shape != (d, d):
            raise DimensionMismatch(f"H must be square, got {self.H.shape}")
        if self.K.shape[1] != d or self.K.shape[0] % d:
            raise DimensionMismatch(f"K must be (N*{d}) x {d}, got {self.K.shape}")
        nd = self.K.shape[0]
        if self.W.shape != (nd, nd):
            raise DimensionMismatch(f"W must be {nd} x {nd}, got {self.W.shape}")

    @property
    def d(self):
        return self.H.shape[0]

    @property
    def channels(self):
        return self.K.shape[0] // self.d

    def validate(self, tol=TOL_ALGEBRA):
        w_res = opnorm(dagger(self.W) @ self.W - np.eye(self.W.shape[0]))
        if w_res > tol:
            raise NotUnitary(f"W is not unitary: ||W^dag W - I|| = {w_res:.3e} > {tol:.1e}")
        h_res = opnorm(self.H - dagger(self.H))
        if h_res > tol:
            raise NotSelfAdjoint(f"H is not self-adjoint: ||H - H^dag|| = {h_res:.3e} > {tol:.1e}")
        return self


def ito_from_hp(hp, tol=TOL_ALGEBRA):
    """The general unitary Ito generator built from an HP triple."""
    hp.validate(tol)
    n, d = hp.channels, hp.d
    g = np.zeros((n + 1, n + 1, d, d), dtype=complex)
    kd = dagger(hp.K)
    g[0, 0] = hp.H - 0.5j * kd @ hp.K
    g[1:, 0] = hp.K.reshape(n, d, d)
    row = kd @ hp.W
    g[0, 1:] = row.reshape(d, n, d).transpose(1, 0, 2)
    g[1:, 1:] = _split_channel_matrix(1j * (hp.W - np.eye(n * d)), n, d)
    return CoefficientBlock(g, kind="ito")


def hp_from_ito(G, tol=TOL_ALGEBRA):
    """Recover ``(W, K, H)`` from unitary Ito coefficients.

    ``H`` is taken as the self-adjoint part of ``G00``; the leftover
    ``G01 - K^dag W`` is stored in ``residuals``.
    """
    report = check_ito_unitarity(G, tol)
    if not report.passed:
        worst = max(report.residual_norms, key=report.residual_norms.get)
        raise UnitarityViolated(
            f"Ito coefficients fail the unitarity conditions: residual {worst} = "
            f"{report.residual_norms[worst]:.3e} > {tol:.1e}")
    n, d = G.channels, G.d
    W = np.eye(n * d) - 1j * G.channel_matrix()
    K = G.col(0)
    H = 0.5 * (G[0, 0] + dagger(G[0, 0]))
    residuals = {
        "G01 - K^dag W": opnorm(G.row(0) - dagger(K) @ W),
        "G00 - (H - i/2 K^dag K)": opnorm(G[0, 0] - (H - 0.5j * dagger(K) @ K)),
        "W^dag W - I": opnorm(dagger(W) @ W - np.eye(n * d)),
    }
    return HPTriple(W, K, H, residuals=residuals)


def closed_form_hp_from_strat(E, kappa=0.5, cond_max=COND_MAX):
    """The closed-form ``(W, K, H)`` in terms of Stratonovich coefficients.

    ``W = (I - i kappa* E11)(I + i kappa E11)^-1``, ``K = (I + i kappa E11)^-1 E.0`` and
    ``H = E00 + Im(kappa) E0. (I + i kappa E11)^-1 E.0``.  The ``H`` expression
    is only self-adjoint when ``E11 = 0``; compare with :func:`hp_from_ito`.
    Returned without validation.
    """
    k = _kappa(kappa)
    n, d = E.channels, E.d
    e11 = E.channel_matrix()
    r = checked_inverse(np.eye(n * d) + 1j * k * e11, cond_max=cond_max,
                        what="(I + i kappa E11)")
    W = (np.eye(n * d) - 1j * np.conj(k) * e11) @ r
    K = r @ E.col(0)
    H = E[0, 0] + k.imag * E.row(0) @ r @ E.col(0)
    return HPTriple(W, K, H)


def cayley_from_e11(e11, kappa=0.5):
    """``W = (I - i kappa* E11)(I + i kappa E11)^-1``."""
    k = _kappa(kappa)
    e11 = np.atleast_2d(np.asarray(e11, dtype=complex))
    eye = np.eye(e11.shape[0])
    return (eye - 1j * np.conj(k) * e11) @ checked_inverse(eye + 1j * k * e11,
                                                          what="(I + i kappa E11)")


@dataclass
class NeumannResult:
    direct: np.ndarray
    series: np.ndarray
    n_terms: int
    agreement: float
    norm: float


def neumann_resolvent(e11, kappa=0.5, tol=TOL_SERIES, term_tol=1e-14, max_terms=10_000,
                      cond_max=COND_MAX):
    """``(I + i kappa E11)^-1`` by direct solve and by the geometric series.

    Raises :class:`NormTooLarge` (carrying the direct solve) when
    ``||kappa E11|| >= 1``, and ``ArithmeticError`` if the two routes differ by
    more than ``tol``.
    """
    k = _kappa(kappa)
    e11 = np.atleast_2d(np.asarray(e11, dtype=complex))
    eye = np.eye(e11.shape[0], dtype=complex)
    direct = checked_inverse(eye + 1j * k * e11, cond_max=cond_max, what="(I + i kappa E11)")
    norm = opnorm(k * e11)
    if norm >= 1:
        raise NormTooLarge(f"||kappa E11|| = {norm:.4f} >= 1: geometric series refused",
                           direct=direct, norm=norm)
    step = -1j * k * e11
    term = eye.copy()
    total = eye.copy()
    n = 1
    while n < max_terms:
        term = term @ step
        total += term
        n += 1
        if opnorm(term) < term_tol:
            break
    agreement = opnorm(total - direct)
    if agreement > tol:
        raise ArithmeticError(f"series and direct resolvent disagree by {agreement:.3e}")
    return NeumannResult(direct, total, n, agreement, norm)


def add_generators(summands, kappa=0.5, cond_max=COND_MAX):
    """Add Stratonovich generators and convert the total to Ito form.

    Returns ``(E_total, G_total)``.
    """
    summands = list(summands)
    if not summands:
        raise ValueError("at least one summand is required")
    shape = summands[0].shape
    for s in summands[1:]:
        if s.shape != shape:
            raise DimensionMismatch(f"summand shape {s.shape} differs from {shape}")
    total = CoefficientBlock(sum(s.blocks for s in summands), kind="strat")
    return total, strat_to_ito(total, kappa, cond_max=cond_max)


def additive_h_comparison(summands, kappa=0.5):
    """Compare the Hamiltonian of a sum of gauge-free generators against the additive guess.

    For summands with ``E11 = 0`` returns a dict holding ``K_total``, the
    Hamiltonian from the general conversion rule, the per-summand formula
    ``sum H_n - Re(kappa) sum K_n^dag K_n`` and their difference norm.
    Nothing is asserted.
    """
    k = _kappa(kappa)
    summands = list(summands)
    for s in summands:
        if opnorm(s.channel_matrix()) > 0:
            raise ValueError("additive comparison needs E11 = 0 in every summand")
    _, g_total = add_generators(summands, k)
    hp_total = hp_from_ito(g_total)
    parts = [hp_from_ito(strat_to_ito(s, k)) for s in summands]
    k_sum = sum(p.K for p in parts)
    h_additive = sum(p.H for p in parts) - k.real * sum(dagger(p.K) @ p.K for p in parts)
    cross = dagger(hp_total.K) @ hp_total.K - sum(dagger(p.K) @ p.K for p in parts)
    return {
        "K_total": hp_total.K,
        "K_sum": k_sum,
        "K_difference": opnorm(hp_total.K - k_sum),
        "H_general_rule": hp_total.H,
        "H_additive_formula": h_additive,
        "H_difference": opnorm(hp_total.H - h_additive),
        "cross_terms": opnorm(cross),
    }


def composite_w(Wa, Wb, tol=TOL_ALGEBRA, cond_max=COND_MAX):
    """Scattering matrix of the sum of two commuting gauge generators (``kappa = 1/2``).

    ``W = Wa (3 + Wa + Wb - Wa Wb)^dag (3 + Wa + Wb - Wa Wb)^-1 Wb``.
    """
    Wa = np.atleast_2d(np.asarray(Wa, dtype=complex))
    Wb = np.atleast_2d(np.asarray(Wb, dtype=complex))
    if Wa.shape != Wb.shape:
        raise DimensionMismatch(f"Wa {Wa.shape} vs Wb {Wb.shape}")
    comm = opnorm(Wa @ Wb - Wb @ Wa)
    if comm > tol:
        raise NonCommuting(f"||[Wa, Wb]|| = {comm:.3e} > {tol:.1e}")
    eye = np.eye(Wa.shape[0])
    for name, m in (("Wa + I", Wa + eye), ("Wb + I", Wb + eye)):
        checked_inverse(m, cond_max=cond_max, what=name, exc=SingularFactor)
    f = 3 * eye + Wa + Wb - Wa @ Wb
    f_inv = checked_inverse(f, cond_max=cond_max, what="3 + Wa + Wb - Wa Wb", exc=SingularFactor)
    return Wa @ dagger(f) @ f_inv @ Wb


def composite_w_via_addition(Wa, Wb, cond_max=COND_MAX):
    """Same quantity by the long route: Cayley-invert each ``W``, add the generators, read off ``W``."""
    Wa = np.atleast_2d(np.asarray(Wa, dtype=complex))
    Wb = np.atleast_2d(np.asarray(Wb, dtype=complex))
    d = Wa.shape[0]
    eye = np.eye(d)
    summands = []
    for w in (Wa, Wb):
        inv = checked_inverse(w + eye, cond_max=cond_max, what="W + I", exc=SingularFactor)
        e11 = 2j * (w - eye) @ inv
        summands.append(CoefficientBlock.from_blocks(d, 1, kind="strat", b11=e11))
    _, g = add_generators(summands, 0.5, cond_max=cond_max)
    return hp_from_ito(g).W

"""Toy-Fock (repeated interaction) discretisation of the unitary QSDE.

Time ``[0, T]`` is cut into ``n`` slots of width ``dt``; each slot carries a
qubit ``C^2`` with basis ``|0>`` (empty) and ``|1>`` (one quantum).  On a slot
the fundamental increments are::

    dA^dag = sqrt(dt) s+,   dA = sqrt(dt) s-,   dLambda = s+ s-,   dt * I

Matrix elements between exponential vectors factor over slots once the bra
and ket are products of unnormalised slot vectors ``|0> + sqrt(dt) g_j |1>``,
so ``<u (x) e(f)| U |v (x) e(g)>`` is a product of ``d x d`` transfer
matrices.  No ``2^n`` state is ever formed.

Systems are ordered ``system (x) slot`` throughout.
"""
from dataclasses import dataclass
import enum

import numpy as np
import scipy.linalg

from ._linalg import dagger, opnorm, ordered_product
from .coeffs import CoefficientBlock, ito_to_strat, strat_to_ito
from .errors import DimensionMismatch, NotConverging, OdeNotConverged
from .itoalg import OperatorGenerator, exp_generator

__all__ = [
    "Scheme", "TestFunctionPair", "SlotModel", "TransferProduct", "SIGMA_PLUS",
    "SIGMA_MINUS", "slot_increments", "slot_generator", "slot_unitary",
    "transfer_matrix", "transfer_matrix_element", "oracle_matrix", "oracle_matrix_element",
    "picard_iterates", "ed_target", "sd_target", "SweepTable", "convergence_sweep",
    "richardson", "discrete_wiener_moments", "discrete_poisson_mean", "simulate_from_ito",
]

# basis (|0>, |1>): s- |1> = |0>
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_PLUS = SIGMA_MINUS.T.copy()


class Scheme(str, enum.Enum):
    ITO_EULER = "ito_euler"
    SLOT_EXP = "slot_exp"


@dataclass
class TestFunctionPair:
    """Step functions ``f`` (bra side) and ``g`` (ket side) on ``[0, T]``.

    ``f`` and ``g`` hold the values on equal pieces of ``[0, T]``; both must
    have the same number of pieces.
    """

    __test__ = False  # not a pytest class

    f: np.ndarray
    g: np.ndarray
    T: float = 1.0

    def __post_init__(self):
        self.f = np.atleast_1d(np.asarray(self.f, dtype=complex))
        self.g = np.atleast_1d(np.asarray(self.g, dtype=complex))
        if self.f.shape != self.g.shape or self.f.ndim != 1:
            raise DimensionMismatch("f and g need the same number of pieces")
        if not (np.all(np.isfinite(self.f)) and np.all(np.isfinite(self.g))):
            raise ValueError("test functions must be finite")
        if self.T <= 0:
            raise ValueError("T must be positive")

    @classmethod
    def constant(cls, f, g, T=1.0):
        return cls([f], [g], T)

    @property
    def pieces(self):
        return self.f.size

    def sample(self, n_slots):
        """Per-slot values ``(f_j, g_j)``; ``n_slots`` must be a multiple of the piece count."""
        if n_slots % self.pieces:
            raise DimensionMismatch(
                f"{n_slots} slots do not resolve {self.pieces} pieces of the test functions")
        rep = n_slots // self.pieces
        return np.repeat(self.f, rep), np.repeat(self.g, rep)

    def inner(self):
        """``<f, g> = int conj(f) g dt``."""
        return complex(np.sum(np.conj(self.f) * self.g) * self.T / self.pieces)


@dataclass
class SlotModel:
    """A discretised unitary: coefficients, scheme and slot grid.

    ``ITO_EULER`` takes Ito coefficients ``G`` and uses the first-order slot
    map ``I - i G_ab (x) dA^ab``.  ``SLOT_EXP`` takes Stratonovich
    coefficients ``E`` and uses ``exp(-i E_ab (x) dA^ab)`` on each slot.
    Only a single noise channel is supported.
    """

    coefficients: CoefficientBlock
    scheme: Scheme
    T: float
    n_slots: int

    def __post_init__(self):
        self.scheme = Scheme(self.scheme)
        if self.coefficients.channels != 1:
            raise DimensionMismatch("the slot simulator supports a single noise channel")
        if self.n_slots < 1 or self.T <= 0:
            raise ValueError("need T > 0 and at least one slot")

    @classmethod
    def from_dt(cls, coefficients, scheme, T, dt):
        n = int(round(T / dt))
        if n < 1 or abs(n * dt - T) > 1e-9 * T:
            raise ValueError(f"dt = {dt} does not divide T = {T}")
        return cls(coefficients, scheme, T, n)

    @property
    def dt(self):
        return self.T / self.n_slots

    @property
    def d(self):
        return self.coefficients.d


@dataclass
class TransferProduct:
    """Contracted ``d x d`` partial matrix element after ``slot`` slots."""

    M: np.ndarray
    slot: int


def slot_increments(dt):
    """``(dA^dag, dLambda, dA, dt*I)`` as 2 x 2 slot matrices."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    r = np.sqrt(dt)
    return (r * SIGMA_PLUS, SIGMA_PLUS @ SIGMA_MINUS, r * SIGMA_MINUS, dt * np.eye(2, dtype=complex))


def slot_generator(coefficients, dt):
    """``sum_ab X_ab (x) dA^ab`` on ``system (x) slot``."""
    create, gauge, annihilate, time = slot_increments(dt)
    x = coefficients.blocks
    return (np.kron(x[0, 0], time) + np.kron(x[1, 0], create)
            + np.kron(x[0, 1], annihilate) + np.kron(x[1, 1], gauge))


def slot_unitary(model, slot_index=0):
    """The ``2d x 2d`` map applied on slot ``slot_index`` (coefficients are time independent)."""
    if not 0 <= slot_index < model.n_slots:
        raise IndexError(slot_index)
    gen = slot_generator(model.coefficients, model.dt)
    if model.scheme is Scheme.ITO_EULER:
        return np.eye(gen.shape[0]) - 1j * gen
    return scipy.linalg.expm(-1j * gen)


def _slot_transfers(model, tf):
    if abs(tf.T - model.T) > 1e-12 * model.T:
        raise DimensionMismatch(f"test functions live on [0, {tf.T}], model on [0, {model.T}]")
    d, n, dt = model.d, model.n_slots, model.dt
    f, g = tf.sample(n)
    v = slot_unitary(model).reshape(d, 2, d, 2)
    r = np.sqrt(dt)
    # <chi_j| V |phi_j> with chi_j = (1, r f_j), phi_j = (1, r g_j)
    bra = np.stack([np.ones(n, dtype=complex), r * np.conj(f)], axis=1)
    ket = np.stack([np.ones(n, dtype=complex), r * g], axis=1)
    return np.einsum("js,iskt,jt->jik", bra, v, ket)


def transfer_matrix(model, tf):
    """Ordered product of all slot transfer matrices."""
    return TransferProduct(ordered_product(_slot_transfers(model, tf)), model.n_slots)


def transfer_matrix_element(model, tf, u, v):
    """``<u (x) e(f)| U |v (x) e(g)>`` for the discretised unitary."""
    m = transfer_matrix(model, tf).M
    return complex(np.vdot(np.asarray(u, dtype=complex), m @ np.asarray(v, dtype=complex)))


def _piece_generators(G, tf):
    g = G.blocks
    out = []
    for fk, gk in zip(tf.f, tf.g):
        fb = np.conj(fk)
        out.append(-1j * (g[0, 0] + fb * g[1, 0] + gk * g[0, 1] + fb * gk * g[1, 1]))
    return out


def _rk4_propagator(a, h, steps):
    ha = h * a
    eye = np.eye(a.shape[0], dtype=complex)
    # one classical RK4 step for the linear ODE y' = A y
    step = eye + ha @ (eye + ha @ (eye / 2 + ha @ (eye / 6 + ha / 24)))
    return np.linalg.matrix_power(step, steps)


def oracle_matrix(G, tf, ode_steps=256, tol=1e-10, max_doublings=12):
    """Solve ``dM/dt = -i(G00 + conj(f) G10 + g G01 + conj(f) g G11) M`` by RK4.

    The step count per piece is doubled until the step-doubling estimate of the
    RK4 error falls below ``tol``.  Returns ``(M(T), error_estimate, steps)``.
    """
    if G.channels != 1:
        raise DimensionMismatch("the oracle supports a single noise channel")
    h_piece = tf.T / tf.pieces
    gens = _piece_generators(G, tf)
    steps = ode_steps

    def solve(k):
        m = np.eye(G.d, dtype=complex)
        for a in gens:
            m = _rk4_propagator(a, h_piece / k, k) @ m
        return m

    coarse = solve(steps)
    for _ in range(max_doublings):
        fine = solve(2 * steps)
        err = opnorm(fine - coarse) / 15.0
        steps *= 2
        if err < tol:
            return fine, err, steps
        coarse = fine
    raise OdeNotConverged(f"RK4 error estimate {err:.3e} still above {tol:.1e} after {steps} steps")


def oracle_matrix_element(G, tf, u, v, ode_steps=256, tol=1e-10):
    """``<u (x) e(f)| U_T |v (x) e(g)>`` for the exact Ito-Dyson unitary."""
    m, _, _ = oracle_matrix(G, tf, ode_steps=ode_steps, tol=tol)
    val = np.vdot(np.asarray(u, dtype=complex), m @ np.asarray(v, dtype=complex))
    return complex(val * np.exp(tf.inner()))


def picard_iterates(G, tf, order, points=2001):
    """Partial sums of the Picard series for ``M(T)`` by iterated trapezoid quadrature.

    Returns a list ``[M_0, M_1, ..., M_order]``.
    """
    t = np.linspace(0.0, tf.T, points)
    idx = np.minimum((t / tf.T * tf.pieces).astype(int), tf.pieces - 1)
    gens = np.stack(_piece_generators(G, tf))[idx]
    eye = np.eye(G.d, dtype=complex)
    current = np.broadcast_to(eye, (points, G.d, G.d)).copy()
    partial = [eye.copy()]
    term = current
    total = eye.copy()
    dt = t[1] - t[0]
    for _ in range(order):
        integrand = gens @ term
        cum = np.zeros_like(integrand)
        cum[1:] = np.cumsum(0.5 * dt * (integrand[1:] + integrand[:-1]), axis=0)
        term = cum
        total = total + term[-1]
        partial.append(total.copy())
    return partial


def ed_target(E):
    """Ito coefficients of the slot-exponential limit: ``dU = (e^{-i dE} - 1) U``."""
    h = exp_generator(OperatorGenerator(-1j * E.blocks))
    return CoefficientBlock(1j * h.blocks, kind="ito")


def sd_target(E, kappa=0.5):
    return strat_to_ito(E, kappa)


def richardson(values, dts, order=1):
    """Extrapolate the last two sweep values assuming error ~ dt^order."""
    v1, v2 = values[-2], values[-1]
    r = (dts[-2] / dts[-1]) ** order
    return (r * v2 - v1) / (r - 1)


@dataclass
class SweepTable:
    """Errors of the discrete schemes against their continuum targets."""

    dts: list
    ito_values: list
    slot_values: list
    oracle_ito: complex
    oracle_ed: complex
    oracle_sd: complex
    ratio: float = 0.75
    halvings: int = 3

    @property
    def abs_error_ito(self):
        return [abs(v - self.oracle_ito) for v in self.ito_values]

    @property
    def abs_error_ed(self):
        return [abs(v - self.oracle_ed) for v in self.slot_values]

    @property
    def abs_error_sd(self):
        return [abs(v - self.oracle_sd) for v in self.slot_values]

    def rows(self):
        return [{"dt": dt, "abs_error_ito": ei, "abs_error_ed_target": ee,
                 "abs_error_sd_target": es}
                for dt, ei, ee, es in zip(self.dts, self.abs_error_ito,
                                          self.abs_error_ed, self.abs_error_sd)]

    def extrapolated(self):
        """Richardson limits of both schemes."""
        return {"ito": richardson(self.ito_values, self.dts),
                "slot": richardson(self.slot_values, self.dts)}

    def ratios(self, errors):
        return [errors[k + 1] / errors[k] for k in range(len(errors) - 1) if errors[k] > 0]

    def converging(self, errors, floor=1e-12):
        """``error(dt/2) < ratio * error(dt)`` over the final ``halvings`` halvings."""
        if max(errors) <= floor:
            return True
        if len(errors) < self.halvings + 1:
            return False
        tail = errors[-(self.halvings + 1):]
        return all(tail[k + 1] < self.ratio * tail[k] for k in range(self.halvings))

    def summary(self):
        ext = self.extrapolated()
        return {
            "extrapolated_ito": ext["ito"],
            "extrapolated_slot": ext["slot"],
            "extrapolated_error_ito": abs(ext["ito"] - self.oracle_ito),
            "extrapolated_error_ed": abs(ext["slot"] - self.oracle_ed),
            "extrapolated_gap_sd": abs(ext["slot"] - self.oracle_sd),
            "target_gap_ed_sd": abs(self.oracle_ed - self.oracle_sd),
            "ito_converging": self.converging(self.abs_error_ito),
            "slot_converging_to_ed": self.converging(self.abs_error_ed),
        }


def _check_dt_list(dt_list, T):
    dts = [float(x) for x in dt_list]
    if any(b >= a for a, b in zip(dts, dts[1:])):
        raise ValueError("dt_list must be strictly decreasing")
    return dts


def convergence_sweep(E, tf, u, v, dt_list, kappa=0.5, G=None, ratio=0.75, halvings=3,
                      check=True):
    """Run both schemes over ``dt_list`` and compare with the continuum targets.

    ``ITO_EULER`` runs on ``G`` (default ``strat_to_ito(E, kappa)``) and is
    measured against the Ito-Dyson oracle for ``G``; ``SLOT_EXP`` runs on ``E``
    and is measured against the oracles for the exponentiated-Dyson target
    :func:`ed_target` and the Stratonovich target :func:`sd_target`.
    Raises :class:`NotConverging` (with the table attached) when ``check`` and
    either scheme fails the ratio test.
    """
    dts = _check_dt_list(dt_list, tf.T)
    if G is None:
        G = strat_to_ito(E, kappa)
    g_ed = ed_target(E)
    g_sd = sd_target(E, kappa)
    ito_vals, slot_vals = [], []
    for dt in dts:
        ito_vals.append(transfer_matrix_element(
            SlotModel.from_dt(G, Scheme.ITO_EULER, tf.T, dt), tf, u, v))
        slot_vals.append(transfer_matrix_element(
            SlotModel.from_dt(E, Scheme.SLOT_EXP, tf.T, dt), tf, u, v))
    table = SweepTable(dts, ito_vals, slot_vals,
                       oracle_matrix_element(G, tf, u, v),
                       oracle_matrix_element(g_ed, tf, u, v),
                       oracle_matrix_element(g_sd, tf, u, v),
                       ratio=ratio, halvings=halvings)
    if check:
        s = table.summary()
        if not (s["ito_converging"] and s["slot_converging_to_ed"]):
            raise NotConverging("scheme errors do not shrink by the required ratio", table=table)
    return table


def simulate_from_ito(G, tf, u, v, dt_list, kappa=0.5):
    """Ito-Euler sweep and oracle for fixed Ito coefficients.

    The gauge only enters the reported Stratonovich representation; the
    numerical outputs depend on ``G`` alone.
    """
    dts = _check_dt_list(dt_list, tf.T)
    values = [transfer_matrix_element(SlotModel.from_dt(G, Scheme.ITO_EULER, tf.T, dt), tf, u, v)
              for dt in dts]
    oracle = oracle_matrix_element(G, tf, u, v)
    return {"dts": dts, "values": values, "oracle": oracle,
            "abs_errors": [abs(x - oracle) for x in values],
            "strat_representation": ito_to_strat(G, kappa)}


def discrete_wiener_moments(dt, n_slots):
    """Vacuum mean and second moment of ``Q = sum_j (dA_j + dA_j^dag)``.

    Slots are independent in the vacuum, so the second moment is the sum of
    single-slot second moments plus products of single-slot means.
    """
    create, _, annihilate, _ = slot_increments(dt)
    dq = create + annihilate
    vac = np.array([1, 0], dtype=complex)
    m1 = np.vdot(vac, dq @ vac)
    m2 = np.vdot(vac, dq @ dq @ vac)
    mean = n_slots * m1
    second = n_slots * m2 + n_slots * (n_slots - 1) * m1 * m1
    return complex(mean), complex(second)


def discrete_poisson_mean(dt, n_slots):
    """Vacuum mean of ``N = sum_j (dLambda_j + dA_j + dA_j^dag + dt)``."""
    create, gauge, annihilate, time = slot_increments(dt)
    dn = gauge + annihilate + create + time
    vac = np.array([1, 0], dtype=complex)
    return complex(n_slots * np.vdot(vac, dn @ vac))

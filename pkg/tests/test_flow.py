import numpy as np
import pytest

from qstoch._linalg import matrix_units, opnorm
from qstoch.coeffs import CoefficientBlock, HPTriple, ito_from_hp, unitarity_residuals
from qstoch.errors import UnitarityViolated
from qstoch.flow import (FlowGenerator, differential_oracle, eh_generator, flow_reality_residual,
                         flow_report, lindblad_residual, predual_apply, structure_residual,
                         structure_residual_max, unital_residual, vacuum_forward_derivative)
from qstoch.itoalg import lindblad_super

from conftest import (SIGMA_MINUS, SIGMA_PLUS, SIGMA_Z, crandn, random_hermitian, random_hp,
                      random_unitary_ito)


def damped_qubit():
    return ito_from_hp(HPTriple(np.eye(2), SIGMA_MINUS, np.zeros((2, 2))))


def schrodinger_lindblad(h, k, rho):
    """Independent Schrodinger-picture form, written without superoperators."""
    kd = k.conj().T
    return -1j * (h @ rho - rho @ h) + k @ rho @ kd - 0.5 * (kd @ k @ rho + rho @ kd @ k)


class TestEhGenerator:
    def test_zero(self):
        F = eh_generator(CoefficientBlock.zeros(3, 2, kind="ito"))
        assert np.count_nonzero(F.blocks) == 0

    def test_damped_qubit(self, rng):
        F = eh_generator(damped_qubit())
        n = SIGMA_PLUS @ SIGMA_MINUS
        for _ in range(5):
            x = crandn(rng, 2, 2)
            expected = SIGMA_PLUS @ x @ SIGMA_MINUS - 0.5 * (n @ x + x @ n)
            assert np.allclose(F.apply(0, 0, x), expected, atol=1e-14)

    def test_identity_gives_unitarity_equations(self, rng):
        # built without the unitarity gate so the residuals are visible
        for G in (damped_qubit(), CoefficientBlock(crandn(rng, 3, 3, 2, 2), kind="ito")):
            d, n = G.d, G.channels
            lid = np.zeros((n + 1, n + 1, d, d), dtype=complex)
            for a, b in G.indices():
                lid[a, b] = 1j * G[b, a].conj().T - 1j * G[a, b]
                lid[a, b] += sum(G[j, a].conj().T @ G[j, b] for j in range(1, n + 1))
            assert np.allclose(lid, unitarity_residuals(G), atol=1e-13)
        assert unital_residual(eh_generator(damped_qubit())) < 1e-14

    def test_rejects_nonunitary(self, rng):
        with pytest.raises(UnitarityViolated):
            eh_generator(CoefficientBlock(crandn(rng, 2, 2, 2, 2), kind="ito"))

    def test_keeps_source(self):
        G = damped_qubit()
        F = eh_generator(G)
        assert isinstance(F, FlowGenerator) and F.source is G


class TestStructure:
    def test_identity_pair(self):
        F = eh_generator(damped_qubit())
        assert np.allclose(structure_residual(F, np.eye(2), np.eye(2)), 0)

    @pytest.mark.parametrize("seed", range(100))
    def test_random_unitary(self, seed):
        rng = np.random.default_rng(seed)
        d, n = int(rng.integers(1, 5)), int(rng.integers(1, 3))
        F = eh_generator(random_unitary_ito(rng, d, n))
        x, y = crandn(rng, d, d), crandn(rng, d, d)
        scale = max(1.0, opnorm(x) * opnorm(y) * max(opnorm(b) for b in F.blocks.reshape(-1, d * d, d * d)) ** 2)
        assert np.max(np.abs(structure_residual(F, x, y))) <= 1e-10 * scale

    def test_matrix_unit_basis(self, rng):
        F = eh_generator(random_unitary_ito(rng, 3, 2))
        assert structure_residual_max(F) < 1e-10
        assert structure_residual_max(F, samples=10, rng=1) < 1e-9

    def test_dissipation_without_fluctuation(self, rng):
        # Lindblad time block, every noise block dropped
        blocks = np.zeros((2, 2, 4, 4), dtype=complex)
        blocks[0, 0] = lindblad_super(np.zeros((2, 2)), [SIGMA_MINUS])
        F = FlowGenerator(blocks)
        k, kd = SIGMA_MINUS, SIGMA_PLUS
        for x, y in ((SIGMA_MINUS, SIGMA_PLUS), (crandn(rng, 2, 2), crandn(rng, 2, 2))):
            # the dissipation of a Lindblad map factorizes as [K^dag, X][Y, K]
            expected = (kd @ x - x @ kd) @ (y @ k - k @ y)
            assert np.allclose(structure_residual(F, x, y)[0, 0], expected)
        assert np.allclose(structure_residual(F, SIGMA_MINUS, SIGMA_PLUS)[0, 0], np.eye(2))
        assert structure_residual_max(F) > 0.5


class TestForwardDerivative:
    def test_identity(self):
        assert np.allclose(vacuum_forward_derivative(eh_generator(damped_qubit()), np.eye(2)), 0)

    def test_excited_population_decays(self):
        n = SIGMA_PLUS @ SIGMA_MINUS
        assert np.allclose(vacuum_forward_derivative(eh_generator(damped_qubit()), n), -n)

    def test_hamiltonian_only(self, rng):
        h = random_hermitian(rng, 3)
        F = eh_generator(ito_from_hp(HPTriple(np.eye(3), np.zeros((3, 3)), h)))
        x = crandn(rng, 3, 3)
        assert np.allclose(vacuum_forward_derivative(F, x), 1j * (h @ x - x @ h))

    def test_reality(self, rng):
        F = eh_generator(random_unitary_ito(rng, 3, 1))
        x = crandn(rng, 3, 3)
        u = vacuum_forward_derivative
        assert np.allclose(u(F, x.conj().T), u(F, x).conj().T)


class TestOracle:
    def test_zero(self, rng):
        out = differential_oracle(CoefficientBlock.zeros(2, 1, kind="ito"), crandn(rng, 2, 2))
        assert np.count_nonzero(out) == 0

    @pytest.mark.parametrize("seed", range(100))
    def test_matches_eh(self, seed):
        rng = np.random.default_rng(1000 + seed)
        d, n = int(rng.integers(1, 5)), int(rng.integers(1, 3))
        G = random_unitary_ito(rng, d, n)
        x = crandn(rng, d, d)
        direct = eh_generator(G).apply_all(x)
        oracle = differential_oracle(G, x)
        assert np.max(np.abs(direct - oracle)) <= 1e-12 * max(1.0, np.max(np.abs(direct)))

    def test_identity_gives_residuals(self, rng):
        G = CoefficientBlock(crandn(rng, 3, 3, 2, 2), kind="ito")
        assert np.allclose(differential_oracle(G, np.eye(2)), unitarity_residuals(G), atol=1e-12)


class TestInvariants:
    def test_lindblad_form(self, rng):
        for d, n in ((2, 1), (3, 2), (4, 2)):
            hp = random_hp(rng, d, n)
            F = eh_generator(ito_from_hp(hp))
            assert lindblad_residual(F, hp) < 1e-10

    def test_trace_duality(self, rng):
        hp = random_hp(rng, 3, 1)
        F = eh_generator(ito_from_hp(hp))
        rho = crandn(rng, 3, 3)
        rho = rho @ rho.conj().T
        rho /= np.trace(rho)
        lstar = predual_apply(F, rho)
        assert np.allclose(lstar, schrodinger_lindblad(hp.H, hp.K, rho), atol=1e-12)
        for x in matrix_units(3):
            assert np.trace(F.apply(0, 0, x) @ rho) == pytest.approx(np.trace(x @ lstar), abs=1e-12)
        assert abs(np.trace(lstar)) < 1e-12

    def test_reality_and_unitality(self, rng):
        F = eh_generator(random_unitary_ito(rng, 2, 2))
        assert flow_reality_residual(F) < 1e-12
        assert unital_residual(F) < 1e-12

    def test_report(self, rng):
        rep = flow_report(random_unitary_ito(rng, 2, 1))
        assert rep["passed"]
        assert set(rep["residuals"]) == {"unital", "reality", "structure", "oracle"}
        assert set(rep["block_norms"]) == {"L00", "L01", "L10", "L11"}

    def test_sigma_z_hamiltonian(self):
        F = eh_generator(ito_from_hp(HPTriple(np.eye(2), np.zeros((2, 2)), SIGMA_Z)))
        assert np.allclose(F.apply(0, 0, SIGMA_PLUS), -2j * SIGMA_PLUS)

"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line."""
import csv
import time

import numpy as np
import pytest

from qstoch._linalg import opnorm
from qstoch.cli import main
from qstoch.coeffs import (CoefficientBlock, HPTriple, cayley_from_e11, check_ito_unitarity,
                           composite_w, composite_w_via_addition, hp_from_ito, ito_from_hp,
                           ito_to_strat, neumann_resolvent, strat_to_ito)
from qstoch.flow import (differential_oracle, eh_generator, lindblad_residual,
                         structure_residual_max, unital_residual)
from qstoch.formats import save_coefficients
from qstoch.toyfock import (SIGMA_MINUS, SIGMA_PLUS, TestFunctionPair, convergence_sweep,
                            discrete_poisson_mean, discrete_wiener_moments, ed_target,
                            oracle_matrix_element, sd_target, simulate_from_ito)
from qstoch.wongzakai import wz_convergence

from conftest import SIGMA_X, SIGMA_Z, crandn, random_hermitian, random_unitary

IM_KAPPA = (-1.0, 0.0, 0.3, 1.0)


def random_strat(rng, d, n, kappa, selfadjoint=False):
    """Unit-scale random E with ``||kappa E11||`` drawn uniformly below 0.9."""
    r = crandn(rng, n + 1, n + 1, d, d) / np.sqrt(2 * d)
    if selfadjoint:
        r = 0.5 * (r + np.conj(np.swapaxes(r, 0, 1)).swapaxes(-1, -2))
    e = CoefficientBlock(r, kind="strat")
    target = rng.uniform(0.0, 0.9)
    norm = abs(kappa) * np.linalg.norm(e.channel_matrix(), 2)
    r[1:, 1:] *= target / norm
    return CoefficientBlock(r, kind="strat")


def random_hp(rng, d, n):
    return HPTriple(random_unitary(rng, n * d), crandn(rng, n * d, d) / np.sqrt(2 * d),
                    random_hermitian(rng, d) / np.sqrt(d))


def test_conversion_roundtrip(rng, verdict):
    start = time.perf_counter()
    worst = 0.0
    for k in range(100):
        d, n = int(rng.integers(1, 9)), int(rng.integers(1, 4))
        kappa = 0.5 + 1j * IM_KAPPA[k % 4]
        E = random_strat(rng, d, n, kappa)
        worst = max(worst, (ito_to_strat(strat_to_ito(E, kappa), kappa) - E).norm())
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-10 and elapsed < 5
    verdict(1, "conversion roundtrip", ok, f"max residual {worst:.2e} (tol 1e-10), {elapsed:.2f} s (< 5 s)")
    assert ok


def test_unitarity_chain(rng, verdict):
    res_g = res_w = res_cayley = 0.0
    for k in range(100):
        d, n = int(rng.integers(1, 9)), int(rng.integers(1, 4))
        kappa = 0.5 + 1j * IM_KAPPA[k % 4]
        E = random_strat(rng, d, n, kappa, selfadjoint=True)
        G = strat_to_ito(E, kappa)
        res_g = max(res_g, check_ito_unitarity(G).max_residual)
        hp = hp_from_ito(G)
        res_w = max(res_w, opnorm(hp.W.conj().T @ hp.W - np.eye(n * d)))
        res_cayley = max(res_cayley, opnorm(hp.W - cayley_from_e11(E.channel_matrix(), kappa)))
    ok = max(res_g, res_w, res_cayley) <= 1e-10
    verdict(2, "unitarity chain", ok, f"HP residual {res_g:.2e}, W unitarity {res_w:.2e}, "
            f"Cayley match {res_cayley:.2e} (tol 1e-10)")
    assert ok


def test_resolvent_duality_and_series(rng, verdict):
    dual = series = 0.0
    for k in range(100):
        d, n = int(rng.integers(1, 9)), int(rng.integers(1, 4))
        kappa = 0.5 + 1j * IM_KAPPA[k % 4]
        E = random_strat(rng, d, n, kappa)
        G = strat_to_ito(E, kappa)
        eye = np.eye(n * d)
        prod = (eye - 1j * kappa * G.channel_matrix()) @ (eye + 1j * kappa * E.channel_matrix())
        dual = max(dual, opnorm(prod - eye))
        series = max(series, neumann_resolvent(E.channel_matrix(), kappa).agreement)
    ok = dual <= 1e-12 and series <= 1e-12
    verdict(3, "resolvent duality and Neumann series", ok,
            f"duality {dual:.2e}, series vs solve {series:.2e} (tol 1e-12)")
    assert ok


def test_flow_structure(rng, verdict):
    structure = oracle = 0.0
    for d in (1, 2, 3, 4):
        for n in (1, 2):
            structure = max(structure, structure_residual_max(eh_generator(ito_from_hp(random_hp(rng, d, n)))))
    for _ in range(100):
        d, n = int(rng.integers(1, 5)), int(rng.integers(1, 3))
        G = ito_from_hp(random_hp(rng, d, n))
        x = crandn(rng, d, d)
        oracle = max(oracle, float(np.max(np.abs(eh_generator(G).apply_all(x) - differential_oracle(G, x)))))
    ok = structure <= 1e-10 and oracle <= 1e-12
    verdict(4, "flow structure equations", ok,
            f"matrix-unit residual {structure:.2e} (tol 1e-10), oracle gap {oracle:.2e} (tol 1e-12)")
    assert ok


def test_lindblad_reduction(rng, verdict):
    lind = unital = 0.0
    for _ in range(50):
        d, n = int(rng.integers(1, 5)), int(rng.integers(1, 3))
        hp = random_hp(rng, d, n)
        F = eh_generator(ito_from_hp(hp))
        lind = max(lind, lindblad_residual(F, hp))
        unital = max(unital, unital_residual(F))
    ok = lind <= 1e-10 and unital <= 1e-10
    verdict(5, "Lindblad reduction", ok, f"L00 vs Lindblad {lind:.2e}, max ||L_ab(I)|| {unital:.2e} (tol 1e-10)")
    assert ok


def test_diffusion_coincidence(verdict):
    start = time.perf_counter()
    E = CoefficientBlock.from_blocks(2, 1, kind="strat", b00=SIGMA_Z, b10=SIGMA_MINUS, b01=SIGMA_PLUS)
    tf = TestFunctionPair([0.5, -0.3], [0.3 + 0.2j, 0.6], T=1.0)
    u, v = np.array([0, 1.0]), np.array([1.0, 1.0]) / np.sqrt(2)
    table = convergence_sweep(E, tf, u, v, [1e-2, 5e-3, 2.5e-3, 1.25e-3], check=False)
    s = table.summary()
    elapsed = time.perf_counter() - start
    finest = min(table.abs_error_ito[-1], table.abs_error_ed[-1])
    limit_gap = abs(s["extrapolated_ito"] - s["extrapolated_slot"])
    same_oracle = abs(table.oracle_ito - table.oracle_ed)
    ok = (s["ito_converging"] and s["slot_converging_to_ed"] and same_oracle <= 1e-10
          and limit_gap <= 3 * finest and elapsed < 30)
    verdict(6, "diffusion coincidence", ok,
            f"limit gap {limit_gap:.2e} vs 3x finest error {3 * finest:.2e}, oracle gap {same_oracle:.1e}, "
            f"ratios ok ({s['ito_converging']}, {s['slot_converging_to_ed']}), {elapsed:.1f} s (< 30 s)")
    assert ok


def test_ed_differs_from_sd(verdict):
    E = CoefficientBlock.from_blocks(1, 1, kind="strat", b11=np.pi / 2)
    w_ed = 1 - 1j * ed_target(E)[1, 1][0, 0]
    w_sd = 1 - 1j * sd_target(E)[1, 1][0, 0]
    tf = TestFunctionPair.constant(1.0, 1.0)
    table = convergence_sweep(E, tf, [1.0], [1.0], [1e-2, 5e-3, 2.5e-3, 1.25e-3], check=False)
    s = table.summary()
    ok = (abs(w_ed + 1j) < 1e-12 and abs(w_sd - (1 - 1j * np.pi / 4) / (1 + 1j * np.pi / 4)) < 1e-12
          and s["slot_converging_to_ed"] and s["extrapolated_gap_sd"] > 10 * s["extrapolated_error_ed"])
    verdict(7, "ED differs from SD under gauge noise", ok,
            f"extrapolated error vs ED {s['extrapolated_error_ed']:.2e}, gap to SD "
            f"{s['extrapolated_gap_sd']:.3f} (> 10x)")
    assert ok


def test_exact_discrete_moments(verdict):
    worst = 0.0
    for T in (0.5, 1.0, 3.0):
        for n in (1, 7, 100, 4096, 100_000):
            dt = T / n
            mean, second = discrete_wiener_moments(dt, n)
            worst = max(worst, abs(mean), abs(second - T), abs(discrete_poisson_mean(dt, n) - T))
    ok = worst <= 1e-12
    verdict(8, "exact discrete Wiener and Poisson moments", ok, f"max deviation {worst:.1e} (tol 1e-12)")
    assert ok


def test_composite_w(rng, verdict):
    scalar = composite_w(1j, 1j)[0, 0]
    scalar_err = abs(scalar - (-3 + 4j) / 5)
    worst = 0.0
    for _ in range(100):
        wa = np.diag(np.exp(1j * rng.uniform(-np.pi, np.pi, 4)))
        wb = np.diag(np.exp(1j * rng.uniform(-np.pi, np.pi, 4)))
        worst = max(worst, opnorm(composite_w(wa, wb) - composite_w_via_addition(wa, wb)))
    ok = scalar_err <= 1e-12 and worst <= 1e-10
    verdict(9, "composite W identity", ok, f"scalar error {scalar_err:.1e}, random pairs {worst:.2e} (tol 1e-10)")
    assert ok


@pytest.mark.slow
def test_wong_zakai(verdict):
    start = time.perf_counter()
    table = wz_convergence(SIGMA_X, SIGMA_Z, [0.1, 0.05, 0.025, 0.0125], range(32), T=1.0, check=False)
    elapsed = time.perf_counter() - start
    e = table.mean_err
    ratios = e[1:] / e[:-1]
    ok = table.converging() and bool(np.all(ratios < 0.85)) and elapsed < 120
    verdict(10, "Wong-Zakai convergence", ok,
            f"mean errors {', '.join(f'{x:.3f}' for x in e)}, ratios "
            f"{', '.join(f'{r:.2f}' for r in ratios)} (< 0.85), {elapsed:.1f} s (< 120 s)")
    assert ok


def test_gauge_independence(tmp_path, verdict):
    G = ito_from_hp(HPTriple(np.exp(0.7j) * np.eye(2), SIGMA_MINUS, 0.5 * SIGMA_Z))
    tf = TestFunctionPair([0.4, -0.2j], [0.1, 0.8])
    u, v = np.array([0, 1.0]), np.array([1.0, 1j]) / np.sqrt(2)
    runs = [simulate_from_ito(G, tf, u, v, [0.02, 0.01, 0.005], kappa=0.5 + 1j * b) for b in IM_KAPPA]
    direct = [oracle_matrix_element(G, tf, u, v) for _ in IM_KAPPA]
    same_api = all(r["values"] == runs[0]["values"] and r["oracle"] == runs[0]["oracle"] for r in runs)
    save_coefficients(tmp_path / "g.json", G)
    outputs = []
    for b in IM_KAPPA:
        out = tmp_path / f"k{b}"
        main(["simulate", str(tmp_path / "g.json"), "--kappa", f"0.5,{b}", "--out", str(out)])
        with open(out / "sweep.csv") as fh:
            outputs.append(list(csv.reader(fh)))
    same_cli = all(o == outputs[0] for o in outputs)
    representations_differ = not np.array_equal(runs[0]["strat_representation"].blocks,
                                                runs[1]["strat_representation"].blocks)
    ok = same_api and same_cli and len(set(direct)) == 1 and representations_differ
    verdict(11, "gauge independence", ok,
            f"bitwise equal outputs over Im kappa in {IM_KAPPA}: api {same_api}, cli {same_cli}")
    assert ok

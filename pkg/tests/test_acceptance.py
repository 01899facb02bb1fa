"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest -v tests/test_acceptance.py``; the result lines are
printed even when output capture is on.
"""

import json
import time
from pathlib import Path

import numpy as np
import pytest

from edgespin.cli import run
from edgespin.exact_diag import HamiltonianSpec, build_hamiltonian, correlation_from_vector, ground_space, ground_rep_decomposition, total_spin
from edgespin.excess_spin import convergence_scan, edge_matrix_element
from edgespin.fcs import build_aklt_triple, string_order, transfer_map, two_point
from edgespin.loop_mc import (
    LoopChain,
    LoopSamples,
    chi2_histogram,
    crossing_parity_report,
    estimate_correlation,
    excess_spin_stats,
    odd_crossing_loops,
    run_chains,
    two_site_weights,
)
from edgespin.spectral_flow import (
    FilterFunction,
    HamiltonianPath,
    characters,
    cocycle_defect,
    covariance_check,
    edge_rep_equivalence,
    flow_integrate,
    spectral_kernel,
)

from oracles import capped_aklt_ground_state, double_integral_kernel, heisenberg_half_thermal_sz_sz

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
AKLT = build_aklt_triple()
G_GRID = np.linspace(-np.pi / 2, np.pi / 2, 21)


@pytest.fixture
def report(capsys):
    def emit(label, ok, detail):
        with capsys.disabled():
            print(f"\n[acceptance] criterion {label}: {'PASS' if ok else 'FAIL'} | {detail}")
        return ok

    return emit


def test_criterion_1_transfer_spectrum(report):
    E1 = transfer_map(AKLT, np.eye(3)).matrix
    # independent 4x4 eigensolve of the assembled transfer matrix
    ev = np.sort(np.linalg.eigvals(E1).real)
    err = float(np.max(np.abs(ev - [-1 / 3, -1 / 3, -1 / 3, 1])))
    lam_err = abs(AKLT.lambda_e - 1 / 3)
    ok = err <= 1e-10 and lam_err <= 1e-10
    assert report("1", ok, f"max eigenvalue error {err:.2e}, lambda_e = {AKLT.lambda_e:.12f}")


def test_criterion_2_edge_representation(report, tmp_path):
    out = tmp_path / "edge"
    code = run("edge-rep", str(CONFIGS / "edge_rep_aklt.json"), str(out))
    doc = json.loads((out / "edge_rep.json").read_text())
    ok = (
        code == 0
        and doc["content_str"] == "{(1/2,1)}"
        and len(doc["g_grid"]) == 21
        and doc["group_law_defect"] <= 1e-8
        and doc["theta_consistency_defect"] <= 1e-10
    )
    detail = (
        f"content {doc['content_str']}, group-law defect {doc['group_law_defect']:.2e}, "
        f"consistency defect {doc['theta_consistency_defect']:.2e} over 50 observables"
    )
    assert report("2", ok, detail)


def test_criterion_3_convergence_rate(report):
    t0 = time.perf_counter()
    scans = [convergence_scan(AKLT, g, [4, 8, 16, 32]) for g in (0.5, 1.0, 1.5)]
    dt = time.perf_counter() - t0
    ok = dt <= 60 and all(-1.2 <= s.slope <= -0.8 and s.residual <= 0.05 for s in scans)
    detail = ", ".join(f"g={s.g}: slope {s.slope:.3f} res {s.residual:.1e}" for s in scans) + f"; {dt:.1f}s"
    assert report("3", ok, detail)


def test_criterion_4_identity_limit(report):
    eye = np.eye(9)
    worst = 0.0
    ok = True
    for g in G_GRID:
        C1 = convergence_scan(AKLT, g, [4, 8, 16, 32], check_slope=False).C1
        for L in (4, 8, 16, 32):
            val = edge_matrix_element(AKLT, eye, eye, g, L).finite
            err = abs(val - np.cos(g / 2))
            bound = 2 * C1 / L
            worst = max(worst, err / bound if bound > 0 else (0.0 if err < 1e-14 else np.inf))
            ok &= err <= bound + 1e-14
    assert report("4", ok, f"max |error| / (2 C1 / L) = {worst:.3f} over 21 g values, L in 4..32")


def test_criterion_5_string_order(report):
    lim = string_order(AKLT, 0, 40)
    spec, psi = capped_aklt_ground_state(12)
    sz = AKLT.phys_gen.sz
    flip = AKLT.phys_gen.unitary(np.pi, "z")
    worst = 0.0
    for x, y in [(3, 7), (2, 9), (4, 8), (3, 10)]:
        ops = {x: sz, y: sz}
        ops.update({j: flip for j in range(x + 1, y)})
        ed = (-1) ** (y - x) * correlation_from_vector(spec, psi, ops).real
        worst = max(worst, abs(string_order(AKLT, x, y) - ed))
    ok = abs(lim + 4 / 9) <= 1e-8 and worst <= 1e-6
    assert report("5", ok, f"value at separation 40 = {lim:.12f} (|+4/9| {abs(lim + 4 / 9):.1e}); max ED deviation {worst:.1e}")


def test_criterion_6_oracle_agreement(report):
    spec, psi = capped_aklt_ground_state(10)
    rng = np.random.default_rng(606)
    worst = 0.0
    for _ in range(20):
        A = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        B = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        x = int(rng.integers(2, 5))
        y = int(rng.integers(x + 1, 8))
        ed = correlation_from_vector(spec, psi, {x: A, y: B})
        worst = max(worst, abs(two_point(AKLT, A, B, y - x) - ed))
    assert report("6", worst <= 1e-6, f"max deviation over 20 random pairs {worst:.2e}")


def test_criterion_7a_two_site_enumeration(report):
    t0 = time.perf_counter()
    s = LoopChain(2, "1/2", 0.5, seed=7001, n_max=3).run(1_000_000, burn_in=1000, every=20)
    counts = np.bincount(s.n_bridges, minlength=4)
    stat, p = chi2_histogram(counts, two_site_weights(0.5, 2.0, 3))
    assert report("7a", p > 0.01, f"chi2 {stat:.2f}, p = {p:.3f}; {time.perf_counter() - t0:.1f}s")


def test_criterion_7b_thermal_correlations(report):
    t0 = time.perf_counter()
    ok = True
    parts = []
    for beta in (1.0, 2.0):
        s = LoopSamples.concat(run_chains(6, "1/2", beta, 5_000_000, [7100, 7101], 5000, 10, threads=2))
        ref = heisenberg_half_thermal_sz_sz(6, beta)
        z = []
        for y in range(1, 6):
            e = estimate_correlation(s, 0, y)
            z.append(abs(e.mean - ref[0, y]) / e.error)
        ok &= max(z) <= 3
        parts.append(f"beta={beta}: max |z| {max(z):.2f}")
    assert report("7b", ok, "; ".join(parts) + f"; {time.perf_counter() - t0:.1f}s")


def test_criterion_7c_even_crossings(report):
    # faithful to the stated invariant; winding loops cross t = 0 an odd number of times
    t0 = time.perf_counter()
    chunks, n_loops = [], 0
    seed = 7200
    while n_loops < 1_000_000:
        s = LoopChain(6, "1/2", 1.0, seed).run(200_000, burn_in=5000, every=10)
        chunks.append(s)
        n_loops += int(s.n_loops.sum())
        seed += 1
    samples = LoopSamples.concat(chunks)
    odd = int(odd_crossing_loops(samples).sum())
    rep = crossing_parity_report(samples)
    detail = (
        f"{odd} of {n_loops} loops cross t=0 an odd number of times; "
        f"crossing parity vs winding parity mismatches {rep['parity_mismatch']}; {time.perf_counter() - t0:.1f}s"
    )
    assert report("7c", odd == 0, detail)


def test_criterion_8_excess_moment_decreases(report):
    # spin-1 single-line chain (pure -3 P_0 coupling), the gapped member of the family
    t0 = time.perf_counter()
    s = LoopSamples.concat(run_chains(12, 1, 4.0, 2_000_000, [8001, 8002], 20_000, 20, threads=2))
    st = excess_spin_stats(s, [0.4, 0.2, 0.1])
    ok = st.decreasing(sigma=1.0, paired=False)
    vals = ", ".join(f"{e}: {m.mean:.4f}±{m.error:.4f}" for e, m in zip(st.epsilons, st.moments))
    assert report("8", ok, f"{vals}; {time.perf_counter() - t0:.1f}s")


def test_criterion_9_spectral_flow(report):
    t0 = time.perf_counter()
    a = HamiltonianSpec(S=1, length=6, model="AKLT")
    b = HamiltonianSpec(S=1, length=6, model="poly", poly=(1 / 3, 0.6, 1 / 6))
    path = HamiltonianPath.linear(a, b)
    filt = FilterFunction(0.3)
    res = flow_integrate(path, 100, filt)
    cov = covariance_check(res, [0.7, np.pi / 2, 2.0])
    cyc = cocycle_defect(path, 100, filt, forward=res)
    verdict = edge_rep_equivalence(a, b, path, filt, result=res)
    degs = [ground_space(build_hamiltonian(x), band=0.05).degeneracy for x in (a, b)]
    dt = time.perf_counter() - t0
    ok = (
        res.final_fidelity >= 1 - 1e-3
        and cov.max_defect <= 1e-8
        and degs == [4, 4]
        and verdict.character_defect <= 1e-6
        and cyc <= 1e-6
        and dt <= 120
    )
    detail = (
        f"fidelity {res.final_fidelity:.12f}, covariance {cov.max_defect:.1e}, degeneracy {degs}, "
        f"characters {verdict.character_defect:.1e}, cocycle {cyc:.1e}; {dt:.1f}s"
    )
    assert report("9", ok, detail)


def test_criterion_10_filter(report):
    gamma = 0.3
    filt = FilterFunction(gamma)
    rng = np.random.default_rng(1010)
    E_in = rng.uniform(-2 * gamma, 2 * gamma, 20)
    quad = max(abs(spectral_kernel(filt, E) - double_integral_kernel(gamma, E)) for E in E_in)
    E_out = np.concatenate([rng.uniform(gamma, 100, 500), [gamma, 2 * gamma]])
    E_out = np.concatenate([E_out, -E_out])
    exact = float(np.max(np.abs(filt.W(E_out) - 1 / (1j * E_out))))
    ok = quad <= 1e-8 and exact <= 1e-12
    assert report("10", ok, f"max quadrature deviation {quad:.1e} at 20 E; max |W - 1/(iE)| for |E| >= gamma {exact:.1e}")

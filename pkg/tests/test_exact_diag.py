import csv
import io
from fractions import Fraction

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from edgespin.exact_diag import (
    DimensionError,
    HamiltonianSpec,
    build_hamiltonian,
    build_sector_hamiltonian,
    frustration_free_check,
    ground_rep_decomposition,
    ground_space,
    q_polynomial,
    rotation,
    spectrum_csv_rows,
    spin_dot,
    thermal_expectation,
    total_spin,
    total_spin_projector,
    z_level,
)
from edgespin.group_rep import IrrepContent, spin_matrices

HALF = Fraction(1, 2)


def heisenberg_half(length, boundary="open"):
    return HamiltonianSpec(S=HALF, length=length, J=(0, 1), boundary=boundary)


def singlet_projector():
    return 0.25 * np.eye(4) - spin_dot(HALF)


def test_z_levels_spin_one():
    assert z_level(1, 1) == -1
    assert z_level(1, 2) == 1


def test_q1_spin_one():
    assert np.allclose(q_polynomial(1, 1).coef, [0.5, -0.5])


def test_q1_spin_half_is_twice_singlet_projector():
    q = q_polynomial(HALF, 1)
    dot = spin_dot(HALF)
    assert np.allclose(q.coef[0] * np.eye(4) + q.coef[1] * dot, 2 * singlet_projector())


@pytest.mark.parametrize("S", [HALF, 1, Fraction(3, 2), 2])
def test_top_polynomial_projects_onto_singlet(S):
    # Q_2S(S.S) = (2S+1) P_0
    d = int(2 * S + 1)
    q = q_polynomial(S, int(2 * S))
    dot = spin_dot(S)
    val = sum(c * np.linalg.matrix_power(dot, n) for n, c in enumerate(q.coef))
    assert np.allclose(val, d * total_spin_projector(S, S, 0), atol=1e-10)
    assert abs(np.trace(val) - d) < 1e-10 and val.shape == (d * d, d * d)


def test_q_polynomial_range():
    with pytest.raises(ValueError):
        q_polynomial(1, 3)


def test_two_site_spin_half_spectrum():
    H = build_hamiltonian(heisenberg_half(2)).toarray()
    assert np.allclose(np.linalg.eigvalsh(H), [-2, 0, 0, 0])
    assert np.allclose(H, -2 * singlet_projector())


def test_aklt_four_sites():
    spec = HamiltonianSpec(S=1, length=4, model="AKLT")
    data = ground_space(build_hamiltonian(spec))
    assert data.degeneracy == 4
    assert abs(data.ground_energy) < 1e-12
    assert data.gap is not None and data.gap > 0.3


@pytest.mark.parametrize(
    "spec",
    [
        HamiltonianSpec(S=1, length=5, model="AKLT"),
        HamiltonianSpec(S=1, length=5, J=(0.3, 1.0, 0.5)),
        HamiltonianSpec(S=HALF, length=6, J=(0, 1), boundary="periodic"),
        HamiltonianSpec(S=1, length=4, model="AKLT", edge_spin=HALF),
    ],
)
def test_hermitian_and_symmetric(spec):
    H = build_hamiltonian(spec)
    assert abs(H - H.conj().T).max() < 1e-12
    for s in total_spin(spec):
        assert abs(H @ s - s @ H).max() < 1e-10


def test_dimension_cap():
    with pytest.raises(DimensionError):
        build_hamiltonian(HamiltonianSpec(S=1, length=13, model="AKLT"))


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(S=1, length=4, J=(0, -1, 0)),
        dict(S=1, length=4, J=(0, 1)),
        dict(S=HALF, length=4, model="AKLT"),
        dict(S=1, length=1, model="AKLT"),
        dict(S=1, length=4, model="AKLT", boundary="periodic", edge_spin=HALF),
        dict(S=1, length=4, model="custom"),
    ],
)
def test_spec_validation(kwargs):
    with pytest.raises(ValueError):
        HamiltonianSpec(**kwargs)


def test_spec_json_round_trip():
    specs = [
        HamiltonianSpec(S=1, length=6, model="AKLT", edge_spin=HALF),
        HamiltonianSpec(S=Fraction(3, 2), length=3, J=(0, 0, 0, 1), boundary="periodic"),
        HamiltonianSpec(S=1, length=6, model="poly", poly=(1 / 3, 0, -1 / 3), bond_pattern=(1, 0)),
    ]
    for s in specs:
        assert HamiltonianSpec.from_json(s.to_json()) == s


def test_aklt_series_splitting_and_gap():
    splits, gaps = [], []
    for L in range(4, 11, 2):
        data = ground_space(build_hamiltonian(HamiltonianSpec(S=1, length=L, model="AKLT")))
        assert data.degeneracy == 4
        splits.append(data.split)
        gaps.append(data.gap)
    assert max(splits) < 1e-10
    assert min(gaps) > 0.3


def test_heisenberg_dimer_gap():
    data = ground_space(build_hamiltonian(heisenberg_half(2)))
    assert data.degeneracy == 1
    assert abs(data.gap - 2) < 1e-12


def test_zero_hamiltonian_has_no_gap():
    data = ground_space(build_hamiltonian(HamiltonianSpec(S=1, length=3, J=(0, 0, 0))))
    assert data.degeneracy == 27
    assert data.gap is None and not data.inconclusive


def test_inconclusive_cluster():
    data = ground_space(np.diag([0.0, 5e-8, 1.0]), tol=1e-8)
    assert data.inconclusive and data.gap is None
    clear = ground_space(np.diag([0.0, 1e-9, 1.0]), tol=1e-8)
    assert clear.degeneracy == 2 and abs(clear.gap - 1) < 1e-12


def test_frustration_free_aklt():
    ok, witness = frustration_free_check(HamiltonianSpec(S=1, length=4, model="AKLT"), range(4, 9))
    assert ok and witness is None


def test_frustration_free_fails_for_heisenberg():
    ok, witness = frustration_free_check(HamiltonianSpec(S=1, length=4, J=(0, 1, 0)), [4])
    assert not ok
    assert witness["length"] == 4
    assert witness["ground_energy"] > witness["sum_of_bond_minima"] + 1e-6
    assert np.isclose(np.linalg.norm(witness["vector"]), 1)


def test_frustration_free_zero_hamiltonian():
    ok, _ = frustration_free_check(HamiltonianSpec(S=1, length=3, J=(0, 0, 0)), [3, 4])
    assert ok


def test_frustration_free_energy_is_sum_of_bond_minima():
    spec = HamiltonianSpec(S=1, length=6, model="AKLT", edge_spin=HALF)
    bond_min = sum(np.linalg.eigvalsh(h).min() for _, _, h in spec.bonds())
    H, _ = build_sector_hamiltonian(spec, 0)
    assert abs(ground_space(H).ground_energy - bond_min) < 1e-10


def test_aklt_open_content():
    spec = HamiltonianSpec(S=1, length=6, model="AKLT")
    c = ground_rep_decomposition(build_hamiltonian(spec), total_spin(spec))
    assert c == IrrepContent.from_pairs([(0, 1), (1, 1)])


def test_aklt_periodic_content():
    spec = HamiltonianSpec(S=1, length=6, model="AKLT", boundary="periodic")
    H = build_hamiltonian(spec)
    assert ground_space(H).degeneracy == 1
    assert str(ground_rep_decomposition(H, total_spin(spec))) == "{(0,1)}"


def test_heisenberg_dimer_content():
    spec = heisenberg_half(2)
    assert str(ground_rep_decomposition(build_hamiltonian(spec), total_spin(spec))) == "{(0,1)}"


def test_non_commuting_generators_rejected():
    s = spin_matrices(1)
    field = np.kron(s.sz, np.eye(3)) + np.kron(np.eye(3), s.sz)
    spec = HamiltonianSpec(S=1, length=2, model="custom", bond_term=field)
    with pytest.raises(ValueError):
        ground_rep_decomposition(build_hamiltonian(spec), total_spin(spec))


@settings(max_examples=10, deadline=None)
@given(st.floats(-np.pi, np.pi), st.sampled_from(["x", "y", "z"]))
def test_spectrum_invariant_under_rotation(g, axis):
    spec = HamiltonianSpec(S=1, length=4, J=(0.2, 1.0, 0.4))
    H = build_hamiltonian(spec).toarray()
    U = rotation(spec, g, axis)
    assert np.allclose(np.linalg.eigvalsh(U @ H @ U.conj().T), np.linalg.eigvalsh(H), atol=1e-10)


def test_sector_spectrum_is_part_of_full_spectrum():
    spec = HamiltonianSpec(S=1, length=6, model="AKLT")
    full = np.linalg.eigvalsh(build_hamiltonian(spec).toarray())
    H0, basis = build_sector_hamiltonian(spec, 0)
    sec = np.linalg.eigvalsh(H0.toarray())
    assert len(basis) == H0.shape[0] == 141
    for e in sec[:20]:
        assert np.min(np.abs(full - e)) < 1e-10


def test_thermal_expectation_matches_expm():
    spec = heisenberg_half(4)
    H = build_hamiltonian(spec).toarray()
    s = spin_matrices(HALF)
    op = np.kron(np.kron(s.sz, s.sz), np.eye(4))
    rho = sla.expm(-1.5 * H)
    ref = np.trace(rho @ op).real / np.trace(rho).real
    assert abs(thermal_expectation(H, 1.5, op) - ref) < 1e-12


def test_spectrum_csv():
    data = ground_space(build_hamiltonian(HamiltonianSpec(S=1, length=4, model="AKLT")))
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["index", "energy", "in_ground_cluster"])
    w.writeheader()
    rows = list(spectrum_csv_rows(data))
    w.writerows(rows)
    assert sum(r["in_ground_cluster"] for r in rows) == 4

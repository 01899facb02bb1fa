"""Finitely correlated (matrix product) state engine.

Conventions
-----------
The isometry ``V`` maps C^k into C^d ⊗ C^k with row index ``i*k + alpha``
(physical index major). Its blocks ``Vb[i] = V[i*k:(i+1)*k, :]`` are the
usual MPS matrices, and

    E_A(b) = V*(A ⊗ b)V = sum_ij A_ij Vb[i]^† b Vb[j].

Maps on k×k matrices are stored as k²×k² matrices acting on column-stacked
vectors, vec(b) = b.reshape(-1, order="F"), so that vec(M b N) = (N^T ⊗ M) vec(b).
A state functional b -> Tr(rho b) is the row vector vec(rho^T)^T.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .group_rep import SpinGenerators, cg_isometry, spin_matrices, two_j_of

ISOMETRY_TOL = 1e-10
INTERTWINE_TOL = 1e-8
PERIPHERAL_TOL = 1e-8
POSITIVITY_TOL = 1e-10


class TripleError(ValueError):
    """Input does not define a valid symmetric finitely correlated state."""


def vec(b: np.ndarray) -> np.ndarray:
    return np.asarray(b).reshape(-1, order="F")


def unvec(v: np.ndarray, k: int) -> np.ndarray:
    return np.asarray(v).reshape(k, k, order="F")


def as_generators(gen) -> SpinGenerators:
    """Accept a SpinGenerators or any (sx, sy, sz) triple.

    For a reducible triple ``two_j`` is set to twice the largest S^z
    eigenvalue, i.e. the highest weight present.
    """
    if isinstance(gen, SpinGenerators):
        return gen
    sx, sy, sz = (np.asarray(a, dtype=complex) for a in gen)
    top = np.max(np.linalg.eigvalsh((sz + sz.conj().T) / 2)) if sz.size else 0.0
    return SpinGenerators(int(round(2 * top)), sx, sy, sz)


@dataclass(frozen=True, eq=False)
class TransferOperator:
    """A linear map on k×k matrices in column-stacked form."""

    matrix: np.ndarray

    @property
    def k(self) -> int:
        return int(round(np.sqrt(self.matrix.shape[0])))

    def __call__(self, b: np.ndarray) -> np.ndarray:
        return unvec(self.matrix @ vec(b), self.k)

    def __matmul__(self, other: "TransferOperator") -> "TransferOperator":
        return TransferOperator(self.matrix @ other.matrix)

    def __sub__(self, other: "TransferOperator") -> "TransferOperator":
        return TransferOperator(self.matrix - other.matrix)

    def power(self, n: int) -> "TransferOperator":
        return TransferOperator(np.linalg.matrix_power(self.matrix, n))

    def norm(self) -> float:
        """Spectral norm of the k²×k² matrix."""
        return float(np.linalg.norm(self.matrix, 2))

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.matrix)


@dataclass(frozen=True, eq=False)
class FCSTriple:
    d: int
    k: int
    V: np.ndarray
    phys_gen: SpinGenerators
    aux_gen: SpinGenerators
    rho: np.ndarray
    lambda_e: float

    @property
    def blocks(self) -> np.ndarray:
        return self.V.reshape(self.d, self.k, self.k)

    def U(self, g, axis="z") -> np.ndarray:
        return self.phys_gen.unitary(g, axis)

    def u(self, g, axis="z") -> np.ndarray:
        return self.aux_gen.unitary(g, axis)

    def state_row(self) -> np.ndarray:
        """Row vector r with r @ vec(b) = Tr(rho b)."""
        return vec(self.rho.T)

    def to_json(self) -> dict:
        cpx = lambda m: [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(m, dtype=complex)]
        return {
            "d": self.d,
            "k": self.k,
            "V": cpx(self.V),
            "phys_gen": {"two_j": self.phys_gen.two_j, "sx": cpx(self.phys_gen.sx), "sy": cpx(self.phys_gen.sy), "sz": cpx(self.phys_gen.sz)},
            "aux_gen": {"two_j": self.aux_gen.two_j, "sx": cpx(self.aux_gen.sx), "sy": cpx(self.aux_gen.sy), "sz": cpx(self.aux_gen.sz)},
            "rho": cpx(self.rho),
            "lambda_e": float(self.lambda_e),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "FCSTriple":
        arr = lambda m: np.array([[complex(re, im) for re, im in row] for row in m], dtype=complex)
        gen = lambda g: SpinGenerators(int(g["two_j"]), arr(g["sx"]), arr(g["sy"]), arr(g["sz"]))
        return cls(
            d=int(doc["d"]),
            k=int(doc["k"]),
            V=arr(doc["V"]),
            phys_gen=gen(doc["phys_gen"]),
            aux_gen=gen(doc["aux_gen"]),
            rho=arr(doc["rho"]),
            lambda_e=float(doc["lambda_e"]),
        )


# ---------------------------------------------------------------------------
# transfer operators


def multisite_isometry(V: np.ndarray, d: int, k: int, n: int) -> np.ndarray:
    """V_n : C^k -> (C^d)^{⊗n} ⊗ C^k with V_n = (1_d ⊗ V_{n-1}) V."""
    Vn = V
    for m in range(1, n):
        Vn = np.kron(np.eye(d), Vn) @ V
    return Vn


def _transfer_matrix(V, d, k, A) -> np.ndarray:
    A = np.asarray(A)
    dn = A.shape[0]
    n = int(round(np.log(dn) / np.log(d))) if d > 1 else 1
    if A.ndim != 2 or A.shape[1] != dn or d**n != dn:
        raise ValueError(f"observable of shape {A.shape} is not an operator on (C^{d})^n")
    Vn = V if n == 1 else multisite_isometry(V, d, k, n)
    Vb = Vn.reshape(dn, k, k)
    T = np.einsum("ij,jba,idc->acbd", A, Vb, Vb.conj())
    return T.reshape(k * k, k * k)


def transfer_map(triple: FCSTriple, A: np.ndarray) -> TransferOperator:
    """E_A as a :class:`TransferOperator`.

    ``A`` may act on one site (d×d) or on n consecutive sites (d^n×d^n).
    """
    return TransferOperator(_transfer_matrix(triple.V, triple.d, triple.k, A))


def transfer_product(triple: FCSTriple, ops) -> TransferOperator:
    """E_{A_1} ∘ ... ∘ E_{A_n} for single-site ``ops``."""
    M = np.eye(triple.k**2, dtype=complex)
    for A in ops:
        M = M @ _transfer_matrix(triple.V, triple.d, triple.k, A)
    return TransferOperator(M)


def fixed_point_state(E1: TransferOperator, tol=PERIPHERAL_TOL):
    """Unique density matrix rho with Tr(rho E_1(b)) = Tr(rho b).

    Returns ``(rho, lambda_e)`` where ``lambda_e`` is the largest modulus
    among the remaining eigenvalues of E_1.
    """
    M = E1.matrix
    k = E1.k
    w, v = np.linalg.eig(M.T)
    near = np.abs(w - 1) < tol
    if near.sum() != 1:
        raise TripleError(f"eigenvalue 1 of E_1 has multiplicity {int(near.sum())}, expected 1")
    rest = np.abs(w[~near])
    lambda_e = float(rest.max()) if rest.size else 0.0
    if lambda_e > 1 - tol:
        raise TripleError("peripheral spectrum of E_1 is degenerate")
    rho = unvec(v[:, np.argmax(near)], k).T
    rho = rho / np.trace(rho)
    rho = (rho + rho.conj().T) / 2
    ev = np.linalg.eigvalsh(rho)
    if ev.min() < -POSITIVITY_TOL:
        raise TripleError(f"fixed point has negative eigenvalue {ev.min():.3e}")
    return rho, lambda_e


def twisted_fixed_point_residual(triple: FCSTriple, g, axis="z") -> float:
    """|| E_{U_g}^t(rho u_g*) - rho u_g* ||, the transposed-map eigen-relation."""
    sigma = triple.rho @ triple.u(g, axis).conj().T
    M = transfer_map(triple, triple.U(g, axis)).matrix
    r = vec(sigma.T)
    return float(np.linalg.norm(M.T @ r - r))


def _intertwining_defect(V, phys, aux, g, axis) -> float:
    U, u = phys.unitary(g, axis), aux.unitary(g, axis)
    return float(np.max(np.abs(np.kron(U, u) @ V - V @ u)))


def build_custom_triple(V, phys_gen, aux_gen, n_checks=20, seed=0) -> FCSTriple:
    """Validate an intertwining isometry and compute rho, lambda_e.

    The intertwining relation (U_g ⊗ u_g)V = V u_g is tested at ``n_checks``
    random (g, axis) pairs drawn from a seeded generator.
    """
    phys, aux = as_generators(phys_gen), as_generators(aux_gen)
    d, k = phys.dim, aux.dim
    V = np.asarray(V, dtype=complex)
    if V.shape != (d * k, k):
        raise TripleError(f"V has shape {V.shape}, expected {(d * k, k)}")
    iso = np.max(np.abs(V.conj().T @ V - np.eye(k)))
    if iso > ISOMETRY_TOL:
        raise TripleError(f"V is not an isometry (defect {iso:.3e})")
    rng = np.random.default_rng(seed)
    for _ in range(n_checks):
        g = rng.uniform(-np.pi, np.pi)
        n = rng.standard_normal(3)
        n /= np.linalg.norm(n)
        defect = _intertwining_defect(V, phys, aux, g, n)
        if defect > INTERTWINE_TOL:
            raise TripleError(f"intertwining relation fails at g={g:.4f} (defect {defect:.3e})")
    E1 = TransferOperator(_transfer_matrix(V, d, k, np.eye(d)))
    rho, lam = fixed_point_state(E1)
    triple = FCSTriple(d, k, V, phys, aux, rho, lam)
    for s in aux.triple():
        if abs(np.trace(rho @ s)) > 1e-10:
            raise TripleError("fixed point carries non-zero auxiliary spin")
    for g in (0.3, -1.1):
        if twisted_fixed_point_residual(triple, g) > 1e-9:
            raise TripleError("rho u_g* is not a fixed point of the transposed twisted map")
    return triple


def build_spin_triple(S, j_aux) -> FCSTriple:
    """Triple from the spin-j_aux component of S ⊗ j_aux (valence-bond type)."""
    V = cg_isometry(S, j_aux, j_aux)
    return build_custom_triple(V, spin_matrices(S), spin_matrices(j_aux))


def build_aklt_triple() -> FCSTriple:
    """AKLT chain: spin-1 physical, spin-1/2 auxiliary."""
    return build_spin_triple(1, "1/2")


def product_triple(phys_gen, vector) -> FCSTriple:
    """k = 1 triple for the product state of a single symmetric site vector."""
    phys = as_generators(phys_gen)
    v = np.asarray(vector, dtype=complex).reshape(-1, 1)
    v = v / np.linalg.norm(v)
    z = np.zeros((1, 1), dtype=complex)
    return build_custom_triple(v, phys, SpinGenerators(0, z, z, z))


# ---------------------------------------------------------------------------
# observables


def expectation(triple: FCSTriple, site_observables) -> complex:
    """Tr(rho E_{A_1} ∘ ... ∘ E_{A_n}(1)) for consecutive sites."""
    r = triple.state_row()
    for A in site_observables:
        A = np.asarray(A)
        if A.shape[0] % triple.d:
            raise ValueError(f"observable of shape {A.shape} does not match d={triple.d}")
        r = r @ _transfer_matrix(triple.V, triple.d, triple.k, A)
    return complex(r @ vec(np.eye(triple.k)))


def two_point(triple: FCSTriple, A, B, r: int) -> complex:
    """omega(A_0 B_r) for single-site A, B and separation r ≥ 1."""
    eye = np.eye(triple.d)
    return expectation(triple, [A] + [eye] * (r - 1) + [B])


def string_order(triple: FCSTriple, x: int, y: int) -> float:
    """(-1)^{y-x} omega(S^z_x exp(i pi sum_{x<j<y} S^z_j) S^z_y).

    The prefactor makes the value alternate with the parity of y - x when
    the bare string correlator has a non-zero limit.
    """
    if x >= y:
        raise ValueError("string order needs x < y")
    sz = triple.phys_gen.sz
    Ez = transfer_map(triple, sz).matrix
    Epi = transfer_map(triple, triple.phys_gen.unitary(np.pi, "z")).matrix
    r = triple.state_row() @ Ez
    r = r @ np.linalg.matrix_power(Epi, y - x - 1)
    val = r @ Ez @ vec(np.eye(triple.k))
    return float(((-1) ** (y - x) * val).real)


def theta(triple: FCSTriple, A: np.ndarray, g, axis="z") -> np.ndarray:
    """Gauge action U A U* on an n-site observable (U = U_g^{⊗n})."""
    A = np.asarray(A)
    n = int(round(np.log(A.shape[0]) / np.log(triple.d))) if triple.d > 1 else 1
    U1 = triple.U(g, axis)
    U = U1
    for _ in range(n - 1):
        U = np.kron(U, U1)
    return U @ A @ U.conj().T


def is_minimal(triple: FCSTriple, max_sites=4, tol=1e-8) -> bool:
    """Rank test: do functionals b -> Tr(rho E_{A_1..A_n}(b)) span all k×k matrices?"""
    k2 = triple.k**2
    units = []
    for i in range(triple.d):
        for j in range(triple.d):
            e = np.zeros((triple.d, triple.d))
            e[i, j] = 1
            units.append(_transfer_matrix(triple.V, triple.d, triple.k, e))
    rows = [triple.state_row()]
    frontier = rows
    for _ in range(max_sites):
        new = [r @ M for r in frontier for M in units]
        rows = rows + new
        basis = np.array(rows)
        rank = np.linalg.matrix_rank(basis, tol=tol * max(1.0, np.abs(basis).max()))
        if rank == k2:
            return True
        # keep a row basis to bound growth
        _, _, vh = np.linalg.svd(basis, full_matrices=False)
        frontier = list(vh[:rank].conj())
        rows = list(frontier)
    return False

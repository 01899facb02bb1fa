"""Exact diagonalisation of SU(2)-invariant spin chains.

Covers the antiferromagnetic family

    H = - sum_<x,y> sum_k J_k Q_k(S^x . S^y)

the AKLT chain, and arbitrary polynomial or explicit two-site terms on open
or periodic chains. Open chains may be capped by an extra spin at each end
(coupled by the projector onto maximal total spin), which for AKLT removes
the edge degeneracy and leaves the bulk state on the interior sites.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numpy.polynomial import Polynomial

from .group_rep import IrrepContent, decompose_into_irreps, spin_matrices, two_j_of

DEFAULT_MAX_DIM = 3**12
DENSE_LIMIT = 4096
CLUSTER_TOL = 1e-8


class DimensionError(ValueError):
    """Hilbert space dimension exceeds the configured cap."""


class InconclusiveGapError(RuntimeError):
    """Low-lying spectrum has no clean separation above the ground cluster."""


# ---------------------------------------------------------------------------
# polynomials


def z_level(S, l) -> Fraction:
    """z_l = l(l+1)/2 - S(S+1), the value of S^x.S^y at total spin l."""
    s = Fraction(two_j_of(S), 2)
    return Fraction(l * (l + 1), 2) - s * (s + 1)


def q_polynomial(S, k) -> Polynomial:
    """Q_k(z) = 2^k [(2S-k)!/(2S)!]^2 prod_{l=2S-k+1}^{2S} (z_l - z).

    Coefficients are exact rationals converted to float at the end;
    the result is a numpy Polynomial in increasing-degree order.
    """
    two_s = two_j_of(S)
    if not 0 <= k <= two_s:
        raise ValueError(f"k must lie in [0, {two_s}], got {k}")
    pref = Fraction(2**k) * Fraction(math.factorial(two_s - k), math.factorial(two_s)) ** 2
    coeffs = [pref]  # polynomial in z, exact
    for l in range(two_s - k + 1, two_s + 1):
        zl = z_level(S, l)
        # multiply by (zl - z)
        new = [Fraction(0)] * (len(coeffs) + 1)
        for i, c in enumerate(coeffs):
            new[i] += c * zl
            new[i + 1] -= c
        coeffs = new
    return Polynomial([float(c) for c in coeffs])


def matrix_poly(p, x: np.ndarray) -> np.ndarray:
    """Evaluate a polynomial (coefficient sequence or Polynomial) on a matrix."""
    coef = p.coef if isinstance(p, Polynomial) else np.asarray(p, dtype=float)
    out = np.zeros_like(x)
    power = np.eye(x.shape[0], dtype=x.dtype)
    for c in coef:
        out = out + c * power
        power = power @ x
    return out


def spin_dot(S) -> np.ndarray:
    """S^1.S^2 on two spin-S sites, as a (2S+1)^2 square matrix."""
    s = spin_matrices(S)
    return sum(np.kron(a, a) for a in s.triple())


def total_spin_projector(j1, j2, J) -> np.ndarray:
    """Projector onto total spin J in j1 ⊗ j2."""
    a, b = spin_matrices(j1), spin_matrices(j2)
    dot = sum(np.kron(x, y) for x, y in zip(a.triple(), b.triple()))
    ja, jb, jt = (Fraction(two_j_of(v), 2) for v in (j1, j2, J))
    val = lambda jj: float((jj * (jj + 1) - ja * (ja + 1) - jb * (jb + 1)) / 2)
    proj = np.eye(dot.shape[0], dtype=complex)
    lo = abs(ja - jb)
    jj = lo
    while jj <= ja + jb:
        if jj != jt:
            proj = proj @ (dot - val(jj) * np.eye(dot.shape[0])) / (val(jt) - val(jj))
        jj += 1
    return proj


AKLT_POLY = (1 / 3, 1 / 2, 1 / 6)  # P_2 = 1/3 + (S.S)/2 + (S.S)^2/6 on spin 1


# ---------------------------------------------------------------------------
# specs


@dataclass(frozen=True)
class HamiltonianSpec:
    """Couplings and geometry of a nearest-neighbour SU(2) chain.

    ``model`` selects the two-site term:

    * ``"AF_H"``: -sum_k J_k Q_k(S.S), with ``J = (J_0, ..., J_2S)``, J_k >= 0
    * ``"AKLT"``: the spin-2 projector on neighbouring spin-1 pairs
    * ``"poly"``: sum_n poly[n] (S.S)^n
    * ``"custom"``: the explicit ``bond_term`` matrix

    ``bond_pattern`` multiplies bond b by ``bond_pattern[b % len]``.
    ``edge_spin`` (open chains only) attaches one extra spin of that size at
    each end, coupled to its neighbour by the projector onto total spin
    S + edge_spin.
    """

    S: object
    length: int
    J: tuple = ()
    boundary: str = "open"
    model: str = "AF_H"
    poly: tuple = ()
    bond_term: np.ndarray | None = field(default=None, compare=False)
    bond_pattern: tuple = (1.0,)
    edge_spin: object = None

    def __post_init__(self):
        two_s = two_j_of(self.S)
        if self.length < 2:
            raise ValueError("chain needs at least two sites")
        if self.boundary not in ("open", "periodic"):
            raise ValueError(f"unknown boundary {self.boundary!r}")
        if self.model not in ("AF_H", "AKLT", "poly", "custom"):
            raise ValueError(f"unknown model {self.model!r}")
        if self.model == "AF_H":
            if len(self.J) != two_s + 1:
                raise ValueError(f"AF_H needs {two_s + 1} couplings J_0..J_2S, got {len(self.J)}")
            if any(j < 0 for j in self.J):
                raise ValueError("couplings J_k must be non-negative")
        if self.model == "AKLT" and two_s != 2:
            raise ValueError("AKLT model is defined for S = 1")
        if self.model == "custom":
            d = two_s + 1
            if self.bond_term is None or np.shape(self.bond_term) != (d * d, d * d):
                raise ValueError("custom model needs a (d^2, d^2) bond_term")
        if self.edge_spin is not None and self.boundary != "open":
            raise ValueError("edge spins only make sense on open chains")
        if self.boundary == "periodic" and self.length < 3:
            raise ValueError("periodic chains need at least three sites")

    @property
    def d(self) -> int:
        return two_j_of(self.S) + 1

    def site_dims(self) -> list:
        dims = [self.d] * self.length
        if self.edge_spin is not None:
            de = two_j_of(self.edge_spin) + 1
            dims = [de] + dims + [de]
        return dims

    @property
    def dim(self) -> int:
        return int(np.prod(self.site_dims(), dtype=object))

    def bulk_sites(self) -> list:
        """Indices (in the full site list) of the spin-S chain sites."""
        off = 0 if self.edge_spin is None else 1
        return list(range(off, off + self.length))

    def bond_matrix(self) -> np.ndarray:
        S = self.S
        if self.model == "AF_H":
            dot = spin_dot(S)
            h = np.zeros_like(dot)
            for k, jk in enumerate(self.J):
                if jk:
                    h = h - jk * matrix_poly(q_polynomial(S, k), dot)
            return h
        if self.model == "AKLT":
            return matrix_poly(AKLT_POLY, spin_dot(1))
        if self.model == "poly":
            return matrix_poly(self.poly, spin_dot(S))
        return np.asarray(self.bond_term, dtype=complex)

    def bonds(self) -> list:
        """List of (site_a, site_b, two-site matrix) in full-site indexing."""
        h = self.bond_matrix()
        sites = self.bulk_sites()
        n_b = self.length if self.boundary == "periodic" else self.length - 1
        pat = self.bond_pattern
        out = []
        for b in range(n_b):
            w = pat[b % len(pat)]
            if w:
                out.append((sites[b], sites[(b + 1) % self.length], w * h))
        if self.edge_spin is not None:
            cap = total_spin_projector(self.edge_spin, self.S, Fraction(two_j_of(self.edge_spin) + two_j_of(self.S), 2))
            swap = _swap(two_j_of(self.edge_spin) + 1, self.d)
            n = len(self.site_dims())
            out.append((0, 1, cap))
            out.append((n - 2, n - 1, swap @ cap @ swap.T))
        return out

    def to_json(self) -> dict:
        doc = {
            "S": str(Fraction(two_j_of(self.S), 2)),
            "length": self.length,
            "boundary": self.boundary,
            "model": self.model,
        }
        if self.model == "AF_H":
            doc["J"] = list(self.J)
        if self.model == "poly":
            doc["poly"] = list(self.poly)
        if tuple(self.bond_pattern) != (1.0,):
            doc["bond_pattern"] = list(self.bond_pattern)
        if self.edge_spin is not None:
            doc["edge_spin"] = str(Fraction(two_j_of(self.edge_spin), 2))
        if self.model == "custom":
            doc["bond_term"] = [[[z.real, z.imag] for z in row] for row in np.asarray(self.bond_term, dtype=complex)]
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "HamiltonianSpec":
        kw = dict(S=Fraction(doc["S"]), length=int(doc["length"]))
        kw["boundary"] = doc.get("boundary", "open")
        kw["model"] = doc.get("model", "AF_H")
        if "J" in doc:
            kw["J"] = tuple(float(x) for x in doc["J"])
        if "poly" in doc:
            kw["poly"] = tuple(float(x) for x in doc["poly"])
        if "bond_pattern" in doc:
            kw["bond_pattern"] = tuple(float(x) for x in doc["bond_pattern"])
        if doc.get("edge_spin") is not None:
            kw["edge_spin"] = Fraction(doc["edge_spin"])
        if "bond_term" in doc:
            kw["bond_term"] = np.array([[complex(*z) for z in row] for row in doc["bond_term"]])
        return cls(**kw)


def _swap(da, db) -> np.ndarray:
    """Permutation matrix taking C^da ⊗ C^db to C^db ⊗ C^da."""
    p = np.zeros((da * db, da * db))
    for i in range(da):
        for j in range(db):
            p[j * da + i, i * db + j] = 1
    return p


def _real_if_close(m):
    if np.iscomplexobj(m) and np.max(np.abs(np.imag(m)), initial=0.0) < 1e-14:
        return np.real(m)
    return m


def _embed_two_site(dims, a, b, h) -> sp.csr_matrix:
    """Sparse embedding of a two-site operator acting on sites a, b."""
    h = _real_if_close(np.asarray(h))
    if b == a + 1:
        left = int(np.prod(dims[:a], dtype=object))
        right = int(np.prod(dims[b + 1 :], dtype=object))
        op = sp.kron(sp.identity(left, format="csr"), sp.csr_matrix(h), format="csr")
        return sp.kron(op, sp.identity(right, format="csr"), format="csr")
    # wrap-around bond (a = n-1, b = 0): expand h in a product basis
    da, db = dims[a], dims[b]
    h4 = h.reshape(da, db, da, db)
    total = None
    for i in range(da):
        for k in range(da):
            left_op = np.zeros((da, da))
            left_op[i, k] = 1
            right_block = h4[i, :, k, :]
            if not np.any(right_block):
                continue
            term = site_embed(dims, {a: left_op, b: right_block})
            total = term if total is None else total + term
    return total if total is not None else sp.csr_matrix((int(np.prod(dims)),) * 2)


def site_embed(dims, ops: dict) -> sp.csr_matrix:
    """Sparse tensor product with ``ops[site]`` on given sites, identity elsewhere."""
    out = sp.identity(1, format="csr")
    for x, d in enumerate(dims):
        f = sp.csr_matrix(_real_if_close(np.asarray(ops[x]))) if x in ops else sp.identity(d, format="csr")
        out = sp.kron(out, f, format="csr")
    return out


def build_hamiltonian(spec: HamiltonianSpec, max_dim=DEFAULT_MAX_DIM) -> sp.csr_matrix:
    """Sparse Hamiltonian; raises :class:`DimensionError` above ``max_dim``."""
    dims = spec.site_dims()
    dim = spec.dim
    if dim > max_dim:
        raise DimensionError(f"Hilbert dimension {dim} exceeds cap {max_dim}")
    H = sp.csr_matrix((dim, dim), dtype=float)
    for a, b, h in spec.bonds():
        H = H + _embed_two_site(dims, a, b, h)
    H = H.tocsr()
    H.sum_duplicates()
    return H


def hamiltonian_operator(spec: HamiltonianSpec, max_dim=4 * 3**13) -> spla.LinearOperator:
    """Matrix-free Hamiltonian for open chains too large for a sparse build."""
    dims = spec.site_dims()
    dim = spec.dim
    if dim > max_dim:
        raise DimensionError(f"Hilbert dimension {dim} exceeds cap {max_dim}")
    terms = []
    for a, b, h in spec.bonds():
        if b != a + 1:
            raise ValueError("matrix-free operator supports nearest-neighbour open bonds only")
        left = int(np.prod(dims[:a], dtype=object))
        right = int(np.prod(dims[b + 1 :], dtype=object))
        terms.append((left, dims[a] * dims[b], right, _real_if_close(np.asarray(h))))
    dtype = complex if any(np.iscomplexobj(t[3]) for t in terms) else float

    def matvec(v):
        v = np.asarray(v).reshape(-1)
        out = np.zeros(dim, dtype=np.result_type(v.dtype, dtype))
        for left, mid, right, h in terms:
            blk = v.reshape(left, mid, right)
            out += np.matmul(h, blk).reshape(-1)
        return out

    return spla.LinearOperator((dim, dim), matvec=matvec, dtype=dtype)


def sector_basis(spec: HamiltonianSpec, two_m: int) -> np.ndarray:
    """Sorted full-space indices of product states with total 2*S^z = ``two_m``."""
    dims = spec.site_dims()
    codes = np.zeros(1, dtype=np.int64)
    tot = np.zeros(1, dtype=np.int64)
    for d in dims:
        local = (d - 1) - 2 * np.arange(d)  # 2m for basis index a
        codes = (codes[:, None] * d + np.arange(d)[None, :]).reshape(-1)
        tot = (tot[:, None] + local[None, :]).reshape(-1)
    return codes[tot == two_m]


def build_sector_hamiltonian(spec: HamiltonianSpec, two_m: int = 0, max_dim=DEFAULT_MAX_DIM * 8):
    """Sparse Hamiltonian restricted to a fixed total S^z sector.

    Returns ``(H_sector, basis)`` where ``basis`` holds the full-space
    indices of the sector states. Bond terms of SU(2)-invariant models
    conserve S^z, so the restriction is exact.
    """
    if spec.dim > max_dim:
        raise DimensionError(f"Hilbert dimension {spec.dim} exceeds cap {max_dim}")
    dims = np.array(spec.site_dims(), dtype=np.int64)
    basis = sector_basis(spec, two_m)
    n = len(basis)
    strides = np.ones(len(dims), dtype=np.int64)
    for x in range(len(dims) - 2, -1, -1):
        strides[x] = strides[x + 1] * dims[x + 1]
    rows, cols, vals = [], [], []
    for a, b, h in spec.bonds():
        h = _real_if_close(np.asarray(h))
        da, db = dims[a], dims[b]
        ia = (basis // strides[a]) % da
        ib = (basis // strides[b]) % db
        col_pair = ia * db + ib
        base = basis - ia * strides[a] - ib * strides[b]
        for p_in in range(da * db):
            sel = np.nonzero(col_pair == p_in)[0]
            if sel.size == 0:
                continue
            for p_out in np.nonzero(np.abs(h[:, p_in]) > 1e-15)[0]:
                oa, ob = divmod(int(p_out), int(db))
                target = base[sel] + oa * strides[a] + ob * strides[b]
                pos = np.searchsorted(basis, target)
                ok = (pos < n) & (basis[np.minimum(pos, n - 1)] == target)
                if not np.all(ok):
                    raise ValueError("bond term does not conserve total S^z")
                rows.append(pos)
                cols.append(sel)
                vals.append(np.full(sel.size, h[p_out, p_in]))
    H = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    H.sum_duplicates()
    return H, basis


def embed_sector_vector(spec: HamiltonianSpec, vec: np.ndarray, basis: np.ndarray) -> np.ndarray:
    out = np.zeros(spec.dim, dtype=vec.dtype)
    out[basis] = vec
    return out


def total_spin(spec: HamiltonianSpec) -> tuple:
    """Sparse total-spin generators (including edge spins)."""
    dims = spec.site_dims()
    mats = [spin_matrices(Fraction(d - 1, 2)) for d in dims]
    out = []
    for comp in range(3):
        tot = None
        for x in range(len(dims)):
            term = site_embed(dims, {x: mats[x].triple()[comp]})
            tot = term if tot is None else tot + term
        out.append(tot.tocsr())
    return tuple(out)


def rotation(spec: HamiltonianSpec, g: float, axis="z") -> np.ndarray:
    """Dense global rotation U_g = ⊗_x exp(i g S^x_axis)."""
    dims = spec.site_dims()
    out = np.ones((1, 1), dtype=complex)
    for d in dims:
        out = np.kron(out, spin_matrices(Fraction(d - 1, 2)).unitary(g, axis))
    return out


# ---------------------------------------------------------------------------
# spectra


@dataclass
class SpectralData:
    """Clustered low spectrum.

    ``degeneracy`` counts the ground cluster (patch [E0, E0 + split]);
    ``gap`` is the distance from E0 to the next eigenvalue and is ``None``
    when the separation above the cluster is not at least ten times the
    clustering tolerance (or when the whole computed spectrum is one cluster).
    """

    energies: np.ndarray
    degeneracy: int
    split: float
    gap: float | None
    vectors: np.ndarray
    tol: float
    inconclusive: bool = False

    @property
    def ground_energy(self) -> float:
        return float(self.energies[0])

    def projector(self) -> np.ndarray:
        v = self.vectors
        return v @ v.conj().T


def _lowest(H, k):
    dim = H.shape[0]
    if dim <= DENSE_LIMIT:
        Hd = H.toarray() if sp.issparse(H) else (np.asarray(H) if not isinstance(H, spla.LinearOperator) else H @ np.eye(dim))
        Hd = (Hd + Hd.conj().T) / 2
        w, v = np.linalg.eigh(Hd)
        return w, v
    k = min(k, dim - 2)
    v0 = np.random.default_rng(0).standard_normal(dim)
    w, v = spla.eigsh(H, k=k, which="SA", v0=v0, tol=1e-12)
    order = np.argsort(w)
    return w[order], v[:, order]


def ground_space(H, tol=CLUSTER_TOL, n_eigs=12, band=None) -> SpectralData:
    """Cluster the low spectrum of Hermitian ``H``.

    With ``band=None`` the ground cluster is the maximal run of eigenvalues
    starting at E0 whose successive spacings are below ``tol``. Passing
    ``band`` (an energy width, the ε-patch of a finite-size splitting)
    instead collects every eigenvalue in [E0, E0 + band].
    """
    k = n_eigs
    while True:
        w, v = _lowest(H, k)
        e0 = w[0]
        if band is None:
            deg = 1
            while deg < len(w) and w[deg] - w[deg - 1] <= tol:
                deg += 1
        else:
            deg = int(np.sum(w <= e0 + band + tol))
        full = len(w) == H.shape[0]
        if deg < len(w) or full or k >= H.shape[0] - 2:
            break
        k *= 2
    split = float(w[deg - 1] - e0)
    gap = None
    inconclusive = False
    if deg < len(w):
        if w[deg] - w[deg - 1] > 10 * tol:
            gap = float(w[deg] - e0)
        else:
            inconclusive = True
    return SpectralData(w, deg, split, gap, v[:, :deg], tol, inconclusive)


def ground_rep_decomposition(H, generators, data: SpectralData | None = None, tol=1e-10) -> IrrepContent:
    """Irrep content of the symmetry restricted to the ground cluster of ``H``."""
    scale = max(1.0, spla.norm(H) if sp.issparse(H) else np.linalg.norm(H))
    for s in generators:
        c = H @ s - s @ H
        cn = spla.norm(c) if sp.issparse(c) else np.linalg.norm(c)
        if cn > tol * scale:
            raise ValueError(f"generator does not commute with H (defect {cn:.3e})")
    data = data if data is not None else ground_space(H)
    q = data.vectors
    restricted = [q.conj().T @ (s @ q) for s in generators]
    return decompose_into_irreps(restricted)


def frustration_free_check(spec: HamiltonianSpec, lengths, tol=1e-8):
    """Compare ground spaces on [1, L] with intersections of bond ground spaces.

    Returns ``(ok, witness)``. ``witness`` is ``None`` on success, otherwise
    a dict with the offending length and a ground vector of H whose bond
    energies exceed the bond minima (or the dimension mismatch).
    """
    for L in lengths:
        sub = _with_length(spec, L)
        dims = sub.site_dims()
        H = build_hamiltonian(sub)
        K = sp.csr_matrix(H.shape, dtype=float)
        e_min_total = 0.0
        for a, b, h in sub.bonds():
            hh = (h + h.conj().T) / 2
            w, v = np.linalg.eigh(hh)
            emin = w[0]
            e_min_total += emin
            low = v[:, np.abs(w - emin) <= tol]
            p_loc = low @ low.conj().T
            K = K + _embed_two_site(dims, a, b, np.eye(hh.shape[0]) - p_loc)
        gs = ground_space(H, tol=1e-7)
        inter = ground_space(K, tol=1e-7)
        inter_dim = inter.degeneracy if abs(inter.ground_energy) < 1e-7 else 0
        if abs(gs.ground_energy - e_min_total) > 1e-7 or inter_dim != gs.degeneracy:
            return False, {
                "length": L,
                "ground_energy": gs.ground_energy,
                "sum_of_bond_minima": e_min_total,
                "ground_degeneracy": gs.degeneracy,
                "intersection_dim": inter_dim,
                "vector": gs.vectors[:, 0],
            }
        P1 = gs.vectors @ gs.vectors.conj().T if gs.vectors.shape[0] <= DENSE_LIMIT else None
        if P1 is not None:
            P2 = inter.vectors @ inter.vectors.conj().T
            if np.linalg.norm(P1 - P2, 2) > 1e-6:
                return False, {"length": L, "projector_mismatch": float(np.linalg.norm(P1 - P2, 2)), "vector": gs.vectors[:, 0]}
        else:
            overlap = np.linalg.svd(gs.vectors.conj().T @ inter.vectors, compute_uv=False)
            if np.min(overlap) < 1 - 1e-6:
                return False, {"length": L, "principal_cosine": float(np.min(overlap)), "vector": gs.vectors[:, 0]}
    return True, None


def _with_length(spec: HamiltonianSpec, L: int) -> HamiltonianSpec:
    import dataclasses

    return dataclasses.replace(spec, length=L)


# ---------------------------------------------------------------------------
# observables


def expectation_in(psi: np.ndarray, op) -> complex:
    return complex(np.vdot(psi, op @ psi))


def correlation_from_vector(spec: HamiltonianSpec, psi: np.ndarray, ops: dict) -> complex:
    """<psi| ⊗_x ops[x] |psi> for single-site operators, indices in bulk sites.

    Applied by tensor reshaping, so it works at dimensions where a sparse
    embedding would be wasteful.
    """
    dims = spec.site_dims()
    full = {spec.bulk_sites()[x]: np.asarray(o) for x, o in ops.items()}
    phi = psi.reshape(dims)
    for x, o in full.items():
        phi = np.moveaxis(np.tensordot(o, phi, axes=([1], [x])), 0, x)
    return complex(np.vdot(psi, phi.reshape(-1)))


def thermal_expectation(H, beta: float, op) -> float:
    """Tr(exp(-beta H) op) / Tr(exp(-beta H)) by dense diagonalisation."""
    Hd = H.toarray() if sp.issparse(H) else np.asarray(H)
    w, v = np.linalg.eigh(Hd)
    p = np.exp(-beta * (w - w[0]))
    p /= p.sum()
    od = op.toarray() if sp.issparse(op) else np.asarray(op)
    diag = np.einsum("ij,ik,kj->j", v.conj(), od, v)
    return complex(np.dot(p, diag))


def spectrum_csv_rows(data: SpectralData):
    for i, e in enumerate(data.energies):
        yield {"index": i, "energy": float(e), "in_ground_cluster": int(i < data.degeneracy)}


def lowest_eigenvector(op, dim: int, seed=0) -> tuple:
    """Lowest eigenpair of a (matrix-free) Hermitian operator."""
    v0 = np.random.default_rng(seed).standard_normal(dim)
    w, v = spla.eigsh(op, k=1, which="SA", v0=v0, tol=1e-13)
    return float(w[0]), v[:, 0]


def sla_expm_herm(h: np.ndarray, t: complex) -> np.ndarray:
    """exp(t h) for Hermitian h."""
    w, v = sla.eigh(h)
    return (v * np.exp(t * w)) @ v.conj().T

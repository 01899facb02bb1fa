"""Quasi-adiabatic transport of a gapped ground band along a Hamiltonian path.

For a filter density w whose Fourier transform ŵ is supported in
[-gamma, gamma], the generator

    D(s) = ∫dξ w(ξ) ∫_0^ξ dζ e^{-iζH} H'(s) e^{iζH}

has eigenbasis matrix elements D_mn = W(E_m - E_n) H'_mn with
W(E) = (1 - ŵ(E)) / (iE). Whenever the band is separated from the rest of
the spectrum by at least gamma, U' = -i D U transports the band projector
exactly: U(s) P(0) U(s)* = P(s).

All path Hamiltonians here commute with the total S^z, so the flow runs
block-diagonally in S^z sectors.
"""

from __future__ import annotations

import csv
import functools
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .exact_diag import HamiltonianSpec, build_hamiltonian, ground_space, ground_rep_decomposition, total_spin
from .group_rep import IrrepContent, spin_matrices


class GapClosedError(RuntimeError):
    """The tracked band touches the rest of the spectrum along the path."""

    def __init__(self, s, gap, needed):
        super().__init__(f"band gap {gap:.4g} below {needed:.4g} at s={s:.6g}")
        self.s, self.gap, self.needed = s, gap, needed


class SymmetryError(RuntimeError):
    """A path term or step propagator breaks the rotation symmetry."""


# ---------------------------------------------------------------------------
# filter


@functools.lru_cache(maxsize=8)
def _gauss_legendre(n):
    return np.polynomial.legendre.leggauss(n)


def _bump(x):
    out = np.zeros_like(x, dtype=float)
    inside = np.abs(x) < 1
    out[inside] = np.exp(-1.0 / (1.0 - x[inside] ** 2))
    return out


def _bump_prime(x):
    out = np.zeros_like(x, dtype=float)
    inside = np.abs(x) < 1
    xi = x[inside]
    out[inside] = np.exp(-1.0 / (1.0 - xi**2)) * (-2 * xi / (1 - xi**2) ** 2)
    return out


@dataclass(frozen=True)
class FilterFunction:
    """ŵ = normalised autoconvolution of a smooth bump on [-gamma/2, gamma/2].

    ŵ is even, infinitely differentiable, supported in [-gamma, gamma] and
    ŵ(0) = 1. Being an autoconvolution of a real even function, it is the
    Fourier transform of a non-negative density w.
    """

    gamma: float
    n_nodes: int = 256

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")

    def _nodes(self):
        return _gauss_legendre(self.n_nodes)

    def _phi(self, y):
        return _bump(2 * y / self.gamma)

    def _autoconv(self, E):
        E = np.atleast_1d(np.asarray(E, dtype=float))
        x, wts = self._nodes()
        h = self.gamma / 2
        lo = np.maximum(-h, E - h)
        hi = np.minimum(h, E + h)
        span = np.maximum(hi - lo, 0.0)
        y = lo[:, None] + (x[None, :] + 1) / 2 * span[:, None]
        vals = self._phi(y) * self._phi(E[:, None] - y)
        return (vals @ wts) * span / 2

    @property
    def norm(self) -> float:
        return float(self._autoconv(0.0)[0])

    def w_hat(self, E):
        """Fourier transform ŵ(E) = ∫ w(ξ) e^{-iξE} dξ (real and even)."""
        E = np.asarray(E, dtype=float)
        out = self._autoconv(np.abs(E).ravel()) / self.norm
        out[np.abs(E).ravel() >= self.gamma] = 0.0
        return out.reshape(E.shape) if E.ndim else float(out[0])

    def curvature(self) -> float:
        """ŵ''(0) = -∫ φ'(y)^2 dy / ∫ φ(y)^2 dy."""
        x, wts = self._nodes()
        h = self.gamma / 2
        y = x * h
        dphi = _bump_prime(2 * y / self.gamma) * (2 / self.gamma)
        return float(-(dphi**2 @ wts) * h / self.norm)

    def W(self, E):
        """Spectral kernel (1 - ŵ(E)) / (iE), with W(0) = 0.

        Exactly 1/(iE) for |E| ≥ gamma. Below |E| = 1e-6 the second-order
        expansion W ≈ i ŵ''(0) E / 2 replaces the cancelling difference.
        """
        E = np.asarray(E, dtype=float)
        flat = E.ravel()
        out = np.zeros(flat.shape, dtype=complex)
        big = np.abs(flat) >= self.gamma
        out[big] = 1.0 / (1j * flat[big])
        tiny = np.abs(flat) < 1e-6
        mid = ~big & ~tiny
        if np.any(mid):
            out[mid] = (1 - self.w_hat(flat[mid])) / (1j * flat[mid])
        if np.any(tiny):
            out[tiny] = 1j * self.curvature() * flat[tiny] / 2
        return out.reshape(E.shape) if E.ndim else complex(out[0])

    def density(self, xi):
        """w(ξ) = (1/π) ∫_0^gamma ŵ(E) cos(Eξ) dE."""
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        x, wts = _gauss_legendre(2 * self.n_nodes)
        E = (x + 1) / 2 * self.gamma
        vals = self.w_hat(E)[None, :] * np.cos(np.outer(xi, E))
        return (vals @ wts) * self.gamma / 2 / np.pi

    def to_json(self) -> dict:
        return {"kind": "bump-autoconvolution", "gamma": self.gamma, "n_nodes": self.n_nodes}


def spectral_kernel(filt: FilterFunction, E):
    return filt.W(E)


# ---------------------------------------------------------------------------
# sector bookkeeping


@dataclass(frozen=True, eq=False)
class Sectors:
    """Permutation grouping basis states by a conserved diagonal charge."""

    perm: np.ndarray
    bounds: tuple

    @classmethod
    def from_charge(cls, charge: np.ndarray) -> "Sectors":
        key = np.rint(2 * np.asarray(charge).real).astype(np.int64)
        perm = np.argsort(key, kind="stable")
        ks = key[perm]
        cuts = [0] + list(np.nonzero(np.diff(ks))[0] + 1) + [len(ks)]
        return cls(perm, tuple(zip(cuts[:-1], cuts[1:])))

    @classmethod
    def trivial(cls, dim) -> "Sectors":
        return cls(np.arange(dim), ((0, dim),))

    @property
    def dim(self) -> int:
        return len(self.perm)

    def blocks(self, M) -> list:
        if sp.issparse(M):
            Mp = M.tocsr()[self.perm][:, self.perm]
            return [Mp[a:b, a:b].toarray() for a, b in self.bounds]
        Mp = np.asarray(M)[np.ix_(self.perm, self.perm)]
        return [Mp[a:b, a:b] for a, b in self.bounds]

    def full(self, blocks) -> np.ndarray:
        dtype = np.result_type(*[b.dtype for b in blocks])
        out = np.zeros((self.dim, self.dim), dtype=dtype)
        inv = self.perm
        for (a, b), blk in zip(self.bounds, blocks):
            idx = inv[a:b]
            out[np.ix_(idx, idx)] = blk
        return out


# ---------------------------------------------------------------------------
# generator


def quasi_adiabatic_generator(H, Hp, filt: FilterFunction, eig=None, herm_tol=1e-10) -> np.ndarray:
    """D = sum_mn W(E_m - E_n) H'_mn |m><n| for dense Hermitian H, H'."""
    H = np.asarray(H)
    if eig is None:
        E, Q = np.linalg.eigh(H)
    else:
        E, Q = eig
    Hp_e = Q.conj().T @ np.asarray(Hp) @ Q
    D_e = filt.W(E[:, None] - E[None, :]) * Hp_e
    D = Q @ D_e @ Q.conj().T
    defect = np.max(np.abs(D - D.conj().T), initial=0.0)
    if defect > herm_tol * max(1.0, np.max(np.abs(D), initial=0.0)):
        raise ArithmeticError(f"generator fails Hermiticity by {defect:.3e}")
    return (D + D.conj().T) / 2


def _expm_herm(D, t):
    """exp(-i t D) for Hermitian D."""
    w, v = np.linalg.eigh(D)
    return (v * np.exp(-1j * t * w)) @ v.conj().T


# ---------------------------------------------------------------------------
# paths


@dataclass(eq=False)
class HamiltonianPath:
    """Piecewise-linear path through knots (s_i, spec_i); s increasing."""

    knots: list

    def __post_init__(self):
        ss = [s for s, _ in self.knots]
        if len(ss) < 2 or np.any(np.diff(ss) <= 0):
            raise ValueError("path needs at least two knots with increasing s")
        dims = {spec.dim for _, spec in self.knots}
        if len(dims) != 1:
            raise ValueError("all knots must share one Hilbert space")
        self._mats = [build_hamiltonian(spec) for _, spec in self.knots]

    @classmethod
    def linear(cls, spec_0, spec_1) -> "HamiltonianPath":
        return cls([(0.0, spec_0), (1.0, spec_1)])

    @property
    def s0(self):
        return self.knots[0][0]

    @property
    def s1(self):
        return self.knots[-1][0]

    @property
    def spec0(self) -> HamiltonianSpec:
        return self.knots[0][1]

    def _segment(self, s):
        ss = [k[0] for k in self.knots]
        i = int(np.clip(np.searchsorted(ss, s, side="right") - 1, 0, len(ss) - 2))
        return i, ss[i], ss[i + 1]

    def H(self, s):
        i, a, b = self._segment(s)
        t = (s - a) / (b - a)
        return (1 - t) * self._mats[i] + t * self._mats[i + 1]

    def dH(self, s):
        i, a, b = self._segment(s)
        return (self._mats[i + 1] - self._mats[i]) / (b - a)

    def matrices(self):
        return list(self._mats)

    def reversed(self) -> "HamiltonianPath":
        top = self.s1 + self.s0
        return HamiltonianPath([(top - s, spec) for s, spec in reversed(self.knots)])

    def to_json(self) -> dict:
        return {"interpolation": "linear", "knots": [{"s": s, "spec": spec.to_json()} for s, spec in self.knots]}


def _commutator_norm(A, B):
    C = A @ B - B @ A
    return float(abs(C).max()) if sp.issparse(C) else float(np.max(np.abs(C), initial=0.0))


def check_path_symmetry(path: HamiltonianPath, generators, tol=1e-10):
    """Raise :class:`SymmetryError` naming the first knot whose H breaks the symmetry."""
    for i, ((s, _), H) in enumerate(zip(path.knots, path.matrices())):
        for a, S in zip("xyz", generators):
            c = _commutator_norm(H, S)
            if c > tol:
                raise SymmetryError(f"knot {i} (s={s}) breaks the symmetry: ||[H, S^{a}]|| = {c:.3e}")


# ---------------------------------------------------------------------------
# integration


@dataclass(eq=False)
class FlowResult:
    """Transport data along a path.

    ``steps`` holds the per-step propagators in sector-block form
    (see :class:`Sectors`); ``U`` is their ordered product.
    """

    s_grid: np.ndarray
    band_size: int
    sectors: Sectors
    steps: list
    U: np.ndarray
    P0: np.ndarray
    transported: np.ndarray
    instantaneous: np.ndarray
    fidelity: np.ndarray
    gaps: np.ndarray
    widths: np.ndarray
    unitarity_defect: float
    filter: FilterFunction
    site_dims: list
    characters: dict = field(default_factory=dict)
    halving_defect: float | None = None

    @property
    def final_fidelity(self) -> float:
        return float(self.fidelity[-1])

    def step_matrix(self, k) -> np.ndarray:
        return self.sectors.full(self.steps[k])

    def to_json(self) -> dict:
        return {
            "s": [float(x) for x in self.s_grid],
            "band_size": self.band_size,
            "fidelity": [float(x) for x in self.fidelity],
            "gap": [float(x) for x in self.gaps],
            "band_width": [float(x) for x in self.widths],
            "unitarity_defect": self.unitarity_defect,
            "final_fidelity": self.final_fidelity,
            "halving_defect": self.halving_defect,
            "filter": self.filter.to_json(),
        }

    def csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["s", "fidelity", "gap", "band_width"])
        for row in zip(self.s_grid, self.fidelity, self.gaps, self.widths):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


def _sz_sectors(spec: HamiltonianSpec, mats) -> Sectors:
    Sz = total_spin(spec)[2]
    if all(_commutator_norm(H, Sz) < 1e-12 for H in mats):
        return Sectors.from_charge(Sz.diagonal())
    return Sectors.trivial(spec.dim)


def _band_eig(blocks):
    """Merged spectrum over blocks: energies, and per-block eigenpairs."""
    eigs = [np.linalg.eigh(b) for b in blocks]
    allE = np.sort(np.concatenate([e for e, _ in eigs]))
    return allE, eigs


def _band_projector_blocks(eigs, r, allE):
    """Projector onto the r lowest states, as blocks. Ties at the edge are split by order."""
    thresh = allE[r - 1]
    blocks = []
    taken = 0
    for E, Q in eigs:
        sel = E <= thresh + 1e-12
        blocks.append(Q[:, sel] @ Q[:, sel].conj().T)
        taken += int(sel.sum())
    if taken != r:
        raise GapClosedError(float("nan"), 0.0, 0.0)
    return blocks


def flow_integrate(path: HamiltonianPath, n_steps: int, filt: FilterFunction, band=0.05, min_gap=None, halving_check=False) -> FlowResult:
    """Midpoint quasi-adiabatic transport of the ground band along ``path``.

    The band is the ground cluster of width ``band`` at the path start; its
    size r is then held fixed. At every grid point and midpoint the gap
    E_r - E_{r-1} must be at least ``min_gap`` (default: the filter's gamma,
    which makes the transport exact); otherwise :class:`GapClosedError`
    reports the offending s.
    """
    min_gap = filt.gamma if min_gap is None else min_gap
    spec = path.spec0
    mats = path.matrices()
    sec = _sz_sectors(spec, mats)
    H0 = path.H(path.s0)
    r = ground_space(H0, band=band).degeneracy
    s_grid = np.linspace(path.s0, path.s1, n_steps + 1)
    ds = s_grid[1] - s_grid[0]

    def eig_at(s):
        allE, eigs = _band_eig(sec.blocks(path.H(s)))
        if r >= len(allE):
            raise GapClosedError(s, 0.0, min_gap)
        gap = allE[r] - allE[r - 1]
        if gap < min_gap:
            raise GapClosedError(s, gap, min_gap)
        return allE, eigs

    allE, eigs = eig_at(s_grid[0])
    P0_blocks = _band_projector_blocks(eigs, r, allE)
    U_blocks = [np.eye(b.shape[0], dtype=complex) for b in P0_blocks]
    fid, gaps, widths = [1.0], [allE[r] - allE[0]], [allE[r - 1] - allE[0]]
    steps = []
    unit_def = 0.0
    P_inst = P0_blocks
    for k in range(n_steps):
        sm = s_grid[k] + ds / 2
        allE_m, eigs_m = eig_at(sm)
        dH_blocks = sec.blocks(path.dH(sm))
        step = []
        for (E, Q), dHb in zip(eigs_m, dH_blocks):
            D = quasi_adiabatic_generator(None, dHb, filt, eig=(E, Q)) if E.size else np.zeros((0, 0))
            step.append(_expm_herm(D, ds) if E.size else D)
        for st in step:
            if st.size:
                unit_def = max(unit_def, float(np.max(np.abs(st.conj().T @ st - np.eye(st.shape[0])))))
        steps.append(step)
        U_blocks = [st @ u for st, u in zip(step, U_blocks)]
        allE, eigs = eig_at(s_grid[k + 1])
        P_inst = _band_projector_blocks(eigs, r, allE)
        Pt = [u @ p @ u.conj().T for u, p in zip(U_blocks, P0_blocks)]
        fid.append(float(sum(np.trace(a @ b).real for a, b in zip(Pt, P_inst)) / r))
        gaps.append(allE[r] - allE[0])
        widths.append(allE[r - 1] - allE[0])
    U = sec.full(U_blocks)
    P0 = sec.full(P0_blocks)
    Pt = U @ P0 @ U.conj().T
    result = FlowResult(
        s_grid, r, sec, steps, U, P0, Pt, sec.full(P_inst), np.clip(np.array(fid), 0.0, 1.0),
        np.array(gaps), np.array(widths), unit_def, filt, spec.site_dims(),
    )
    if halving_check:
        fine = flow_integrate(path, 2 * n_steps, filt, band, min_gap, halving_check=False)
        result.halving_defect = float(np.linalg.norm(fine.transported - Pt, 2))
    return result


def cocycle_defect(path: HamiltonianPath, n_steps: int, filt: FilterFunction, band=0.05, forward: FlowResult | None = None) -> float:
    """|| U_backward U_forward - 1 || for the path and its reverse."""
    fwd = flow_integrate(path, n_steps, filt, band) if forward is None else forward
    bwd = flow_integrate(path.reversed(), n_steps, filt, band)
    return float(np.linalg.norm(bwd.U @ fwd.U - np.eye(fwd.U.shape[0]), 2))


# ---------------------------------------------------------------------------
# symmetry checks


def _product_unitary(site_dims, g, axis):
    out = np.ones((1, 1), dtype=complex)
    for d in site_dims:
        out = np.kron(out, spin_matrices((d - 1) / 2).unitary(g, axis))
    return out


def rotate(M: np.ndarray, site_dims, g, axis="z") -> np.ndarray:
    """U_g M U_g* with U_g = ⊗_x exp(i g S^x_axis).

    The chain is split into two halves so that U_g = U_1 ⊗ U_2 acts through
    batched matrix products without forming the full rotation.
    """
    half = len(site_dims) // 2
    U1 = _product_unitary(site_dims[:half], g, axis)
    U2 = _product_unitary(site_dims[half:], g, axis)
    return _conjugate(M, U1, U2)


def _conjugate(M, U1, U2):
    D1, D2 = U1.shape[0], U2.shape[0]
    D = D1 * D2
    A = (U1 @ np.asarray(M, dtype=complex).reshape(D1, D2 * D)).reshape(D1, D2, D)
    A = np.matmul(U2, A).reshape(D, D1, D2)
    A = A @ U2.conj().T
    A = np.einsum("rkc,jk->rjc", A, U1.conj(), optimize=True)
    return A.reshape(D, D)


@dataclass
class CovarianceReport:
    g_grid: list
    axes: tuple
    defects: np.ndarray
    tol: float

    @property
    def max_defect(self) -> float:
        return float(np.max(self.defects, initial=0.0))

    def to_json(self) -> dict:
        return {"g_grid": list(map(float, self.g_grid)), "axes": list(self.axes), "max_defect": self.max_defect, "per_step": [float(x) for x in np.max(self.defects, axis=(1, 2))]}


def covariance_check(result: FlowResult, g_grid, axes=("x", "y", "z"), tol=1e-8) -> CovarianceReport:
    """max over steps of ||U_g alpha - alpha U_g|| = ||U_g alpha U_g* - alpha||.

    The Frobenius norm is used; it bounds the operator norm from above.

    Raises :class:`SymmetryError` naming the first step whose defect
    exceeds ``tol``.
    """
    dims = result.site_dims
    half = len(dims) // 2
    mz = total_sz_diagonal(dims)
    rots = []
    for ax in axes:
        row = []
        for g in g_grid:
            if g == 0:
                row.append(None)
            elif isinstance(ax, str) and ax == "z":
                ph = np.exp(1j * g * mz)
                row.append(np.outer(ph, ph.conj()))
            else:
                row.append((_product_unitary(dims[:half], g, ax), _product_unitary(dims[half:], g, ax)))
        rots.append(row)
    defects = np.zeros((len(result.steps), len(axes), len(g_grid)))
    for k in range(len(result.steps)):
        a = result.step_matrix(k)
        for i in range(len(axes)):
            for j, R in enumerate(rots[i]):
                if R is None:
                    continue
                b = a * R if isinstance(R, np.ndarray) else _conjugate(a, *R)
                defects[k, i, j] = np.linalg.norm(b - a)
        if defects[k].max() > tol:
            raise SymmetryError(f"step {k} (s={result.s_grid[k]:.6g}) breaks covariance: defect {defects[k].max():.3e}")
    return CovarianceReport(list(g_grid), tuple(axes), defects, tol)


def total_sz_diagonal(site_dims) -> np.ndarray:
    mz = np.zeros(1)
    for d in site_dims:
        mz = (mz[:, None] + ((d - 1) / 2 - np.arange(d))[None, :]).ravel()
    return mz


def characters(P: np.ndarray, site_dims, g_grid) -> np.ndarray:
    """chi(g) = Tr(U_g P) for rotations about z on a grid."""
    mz = total_sz_diagonal(site_dims)
    dP = np.diag(P)
    return np.array([np.sum(np.exp(1j * g * mz) * dP) for g in g_grid])


@dataclass
class EquivalenceVerdict:
    connected: bool
    reason: str
    degeneracy: tuple = ()
    content: tuple = ()
    character_defect: float | None = None
    final_fidelity: float | None = None
    gap_closed_at: float | None = None

    def to_json(self) -> dict:
        return {
            "connected": self.connected,
            "reason": self.reason,
            "degeneracy": list(self.degeneracy),
            "content": [str(c) for c in self.content],
            "character_defect": self.character_defect,
            "final_fidelity": self.final_fidelity,
            "gap_closed_at": self.gap_closed_at,
        }


def edge_rep_equivalence(spec_0, spec_1, path=None, filt=None, n_steps=100, band=0.05, g_grid=None, char_tol=1e-6, result: FlowResult | None = None) -> EquivalenceVerdict:
    """Compare ground bands of two gapped models linked by a symmetric path.

    Checks (i) equal band sizes, (ii) equal irrep content, and (iii) that the
    transported band carries the same rotation characters as the band at
    the end of the path. A previously computed ``result`` for the same path
    is reused instead of integrating again.
    """
    path = HamiltonianPath.linear(spec_0, spec_1) if path is None else path
    filt = FilterFunction(0.2) if filt is None else filt
    g_grid = np.linspace(-np.pi, np.pi, 13) if g_grid is None else np.asarray(g_grid)
    gens0, gens1 = total_spin(spec_0), total_spin(spec_1)
    check_path_symmetry(path, gens0)
    H0, H1 = build_hamiltonian(spec_0), build_hamiltonian(spec_1)
    d0, d1 = ground_space(H0, band=band), ground_space(H1, band=band)
    c0 = ground_rep_decomposition(H0, gens0, d0)
    c1 = ground_rep_decomposition(H1, gens1, d1)
    degs, contents = (d0.degeneracy, d1.degeneracy), (c0, c1)
    try:
        res = flow_integrate(path, n_steps, filt, band) if result is None else result
    except GapClosedError as err:
        return EquivalenceVerdict(False, f"not connected by this path: {err}", degs, contents, gap_closed_at=err.s)
    dims = spec_0.site_dims()
    chi_t = characters(res.transported, dims, g_grid)
    chi_1 = characters(d1.projector(), dims, g_grid)
    cdef = float(np.max(np.abs(chi_t - chi_1)))
    ok = degs[0] == degs[1] and c0 == c1 and cdef <= char_tol
    reason = "equivalent" if ok else "band data differ"
    return EquivalenceVerdict(ok, reason, degs, contents, cdef, res.final_fidelity)

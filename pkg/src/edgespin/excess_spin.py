"""Ramped rotations of a half chain and the edge representation they induce.

For the ramp f_L (f_L(mL+n) = 1 - m/L on [0, L²), zero beyond) the operator
U_g^+(L) rotates site x ≥ 1 by the angle g f_L(x-1). Its transfer operator
is the ordered product of L² single-site maps, which converges at rate 1/L
to the rank-one map Q_g(b) = Tr(rho b) u_g. Edge matrix elements therefore
converge to Tr(rho E_X(u_g)), from which u_g, and its irrep content, is
recovered.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.linalg as sla

from .fcs import (
    FCSTriple,
    TransferOperator,
    TripleError,
    _transfer_matrix,
    theta,
    transfer_map,
    unvec,
    vec,
)
from .group_rep import IrrepContent, decompose_into_irreps

SLOPE_WINDOW = (-1.2, -0.8)
RESIDUAL_MAX = 0.05
DEFAULT_G_MAX = np.pi / 2


def ramp(L: int, x: int) -> float:
    """f_L(x) = 1 - floor(x/L)/L for x < L², and 0 for x ≥ L²."""
    if L < 1 or x < 0:
        raise ValueError("ramp needs L ≥ 1 and x ≥ 0")
    if x >= L * L:
        return 0.0
    return float(1 - Fraction(x // L, L))


@dataclass(frozen=True)
class RampProfile:
    L: int
    values: np.ndarray

    @classmethod
    def of(cls, L: int) -> "RampProfile":
        return cls(L, np.array([ramp(L, x) for x in range(L * L + 1)]))


def peripheral_check(triple: FCSTriple, g, axis="z", tol=1e-8):
    """Require 1 to be a simple eigenvalue of E_{U_g} with the rest inside the unit disk.

    Returns the modulus of the second eigenvalue.
    """
    w = transfer_map(triple, triple.U(g, axis)).eigenvalues()
    order = np.argsort(-np.abs(w))
    if abs(w[order[0]] - 1) > tol:
        raise TripleError(f"E_U(g) at g={g:.4f} has no eigenvalue 1")
    second = float(np.abs(w[order[1]])) if len(w) > 1 else 0.0
    if second > 1 - tol:
        raise TripleError(f"peripheral eigenvalue of E_U(g) is degenerate at g={g:.4f}")
    return second


def composite_transfer(triple: FCSTriple, g, L: int, axis="z") -> TransferOperator:
    """prod_{x=0}^{L²-1} E_{U_{g f_L(x)}}, ordered left to right.

    The ramp is constant on blocks of L sites, so the product is evaluated
    as L matrix powers.
    """
    if L < 1:
        raise ValueError("L must be positive")
    M = np.eye(triple.k**2, dtype=complex)
    for m in range(L):
        Em = _transfer_matrix(triple.V, triple.d, triple.k, triple.U(g * (1 - m / L), axis))
        M = M @ np.linalg.matrix_power(Em, L)
    return TransferOperator(M)


def q_map(triple: FCSTriple, g, axis="z", check=True) -> TransferOperator:
    """Q_g(b) = Tr(rho b) u_g."""
    if check:
        peripheral_check(triple, g, axis)
    return TransferOperator(np.outer(vec(triple.u(g, axis)), triple.state_row()))


def p_map(triple: FCSTriple, g, axis="z", check=True) -> TransferOperator:
    """P_g(b) = Tr(rho u_g* b) u_g, the peripheral spectral projection of E_{U_g}.

    Its norm as a map on the C*-algebra of k×k matrices is the trace norm of
    rho u_g*, which equals 1.
    """
    if check:
        peripheral_check(triple, g, axis)
    u = triple.u(g, axis)
    sigma = triple.rho @ u.conj().T
    norm = np.sum(np.linalg.svd(sigma, compute_uv=False))
    if abs(norm - 1) > 1e-10:
        raise TripleError(f"P_g has norm {norm} instead of 1")
    return TransferOperator(np.outer(vec(u), vec(sigma.T)))


@dataclass
class ScanResult:
    """Distances ||composite(g, L) - Q_g|| and the log-log fit."""

    g: float
    Ls: np.ndarray
    distances: np.ndarray
    slope: float | None
    intercept: float | None
    residual: float | None
    C1: float
    flags: list = field(default_factory=list)
    edge_values: np.ndarray | None = None

    @property
    def ok(self) -> bool:
        return not self.flags

    def to_json(self) -> dict:
        return {
            "g": self.g,
            "L": [int(x) for x in self.Ls],
            "distance": [float(x) for x in self.distances],
            "slope": self.slope,
            "intercept": self.intercept,
            "residual": self.residual,
            "C1": self.C1,
            "flags": list(self.flags),
        }


def convergence_scan(triple: FCSTriple, g, L_list, axis="z", threads=1, check_slope=True) -> ScanResult:
    """Fit log(distance) = intercept + slope*log(L) over ``L_list``.

    ``residual`` is the RMS of the fit residuals in natural-log units and
    ``C1`` the measured constant max_L L*distance. Flags are raised when the
    slope leaves [-1.2, -0.8] or the residual exceeds 0.05; the slope test
    is skipped at g = 0, where convergence is faster than any power, and
    when all distances vanish (k = 1).
    """
    Ls = np.asarray(list(L_list), dtype=int)
    if len(Ls) < 4 or np.any(np.diff(Ls) <= 0):
        raise ValueError("L_list must be strictly increasing with at least 4 entries")
    Q = q_map(triple, g, axis)

    r, one = triple.state_row(), vec(np.eye(triple.k))

    def dist(L):
        C = composite_transfer(triple, g, int(L), axis)
        return (C - Q).norm(), complex(r @ C.matrix @ one)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            out = list(ex.map(dist, Ls))
    else:
        out = [dist(L) for L in Ls]
    d = np.array([o[0] for o in out])
    ev = np.array([o[1] for o in out])
    C1 = float(np.max(d * Ls))
    flags = []
    if np.all(d < 1e-13):
        return ScanResult(float(g), Ls, d, None, None, None, C1, flags, ev)
    x, y = np.log(Ls), np.log(np.maximum(d, 1e-300))
    slope, intercept = np.polyfit(x, y, 1)
    res = float(np.sqrt(np.mean((y - (intercept + slope * x)) ** 2)))
    if check_slope and g != 0:
        if not SLOPE_WINDOW[0] <= slope <= SLOPE_WINDOW[1]:
            flags.append(f"slope {slope:.3f} outside {SLOPE_WINDOW}")
        if res > RESIDUAL_MAX:
            flags.append(f"fit residual {res:.3f} above {RESIDUAL_MAX}")
    return ScanResult(float(g), Ls, d, float(slope), float(intercept), res, C1, flags, ev)


# ---------------------------------------------------------------------------
# edge matrix elements


@dataclass(frozen=True)
class EdgeElement:
    finite: complex
    limit: complex
    L: int
    l: int

    @property
    def error(self) -> float:
        return abs(self.finite - self.limit)


def local_block(triple: FCSTriple, ops: dict, l: int) -> np.ndarray:
    """Dense operator on sites -l²+1..l² from single-site ``ops`` keyed by site."""
    sites = range(-l * l + 1, l * l + 1)
    out = np.ones((1, 1), dtype=complex)
    for x in sites:
        out = np.kron(out, ops.get(x, np.eye(triple.d)))
    for x in ops:
        if x not in sites:
            raise ValueError(f"site {x} outside the window [{-l * l + 1}, {l * l}]")
    return out


def _window_rotation(triple, angles, l, axis):
    """Identity on sites -l²+1..0 tensored with U_{angle} on sites 1..l²."""
    out = np.eye(triple.d ** (l * l), dtype=complex)
    for a in angles:
        out = np.kron(out, triple.U(a, axis))
    return out


def edge_matrix_element(triple: FCSTriple, A, B, g, L: int, l: int = 1, axis="z") -> EdgeElement:
    """omega(A* U_g^+(L) B) and its L -> infinity value.

    ``A`` and ``B`` act on the 2l² sites -l²+1..l². The finite value uses
    the ramp angles g f_L(x-1) on sites 1..L². For L ≥ l² the window sites
    1..l² all carry the full angle g, so the limit is
    Tr(rho E_{A* (1 ⊗ U_g^{⊗l²}) B}(u_g)).
    """
    if l < 1 or l > L:
        raise ValueError(f"support parameter l={l} must satisfy 1 ≤ l ≤ L={L}")
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    n = 2 * l * l
    if A.shape != (triple.d**n,) * 2 or B.shape != A.shape:
        raise ValueError(f"A and B must act on {n} sites")
    r = triple.state_row()
    angles = [g * ramp(L, x - 1) for x in range(1, l * l + 1)]
    X = A.conj().T @ _window_rotation(triple, angles, l, axis) @ B
    M = r @ _transfer_matrix(triple.V, triple.d, triple.k, X)
    tail = np.eye(triple.k**2, dtype=complex)
    for x in range(l * l, L * L):
        tail = tail @ _transfer_matrix(triple.V, triple.d, triple.k, triple.U(g * ramp(L, x), axis))
    finite = complex(M @ tail @ vec(np.eye(triple.k)))
    X_lim = A.conj().T @ _window_rotation(triple, [g] * (l * l), l, axis) @ B
    lim = complex(r @ _transfer_matrix(triple.V, triple.d, triple.k, X_lim) @ vec(triple.u(g, axis)))
    return EdgeElement(finite, lim, L, l)


# ---------------------------------------------------------------------------
# reconstruction of u_g


def spanning_functionals(triple: FCSTriple, tol=1e-8) -> np.ndarray:
    """Rows r E_X for X in the matrix units on sites -1 and 0.

    Each row is the functional b -> Tr(rho E_X(b)), so r E_X vec(Y) is the
    edge matrix element with U^+ acting to the right of site 0. Raises
    when the rows do not span all k² directions.
    """
    d, k = triple.d, triple.k
    r = triple.state_row()
    rows = []
    for a in range(d * d):
        for b in range(d * d):
            X = np.zeros((d * d, d * d))
            X[a, b] = 1
            rows.append(r @ _transfer_matrix(triple.V, d, k, X))
    F = np.array(rows)
    rank = np.linalg.matrix_rank(F, tol=tol * max(1.0, np.abs(F).max()))
    if rank < k * k:
        raise TripleError(f"edge functionals have rank {rank} < {k * k}: triple is not minimal")
    return F


def _neville_zero(h: np.ndarray, vals: np.ndarray) -> np.ndarray:
    """Polynomial extrapolation of vals(h) to h = 0 (vectorised Neville)."""
    P = [v.copy() for v in vals]
    n = len(h)
    for m in range(1, n):
        for i in range(n - m):
            P[i] = (h[i] * P[i + 1] - h[i + m] * P[i]) / (h[i] - h[i + m])
    return P[0]


def reconstruct_u(triple: FCSTriple, g, axis="z", L_base=64, n_levels=5, F=None) -> tuple:
    """Recover u_g from extrapolated edge matrix elements.

    Edge matrix elements F vec(Y_L), with Y_L the image of the identity under
    the L-ramp composite transfer, are extrapolated to L = infinity in
    h = 1/L over L = L_base * 2^i; the resulting values are then inverted
    for vec(u_g) by least squares. Returns ``(u_g, estimated_error)``.
    """
    F = spanning_functionals(triple) if F is None else F
    k = triple.k
    Ls = L_base * 2 ** np.arange(n_levels)
    one = vec(np.eye(k))
    vals = np.array([F @ (composite_transfer(triple, g, int(L), axis).matrix @ one) for L in Ls])
    h = 1.0 / Ls
    best = _neville_zero(h, vals)
    lower = _neville_zero(h[1:], vals[1:])
    sol, *_ = np.linalg.lstsq(F, best, rcond=None)
    sol_lo, *_ = np.linalg.lstsq(F, lower, rcond=None)
    return unvec(sol, k), float(np.max(np.abs(sol - sol_lo)))


@dataclass
class EdgeRepReport:
    g_grid: np.ndarray
    u: list
    content: IrrepContent
    generators: tuple
    group_law_defect: float
    reconstruction_error: float
    aux_content: IrrepContent
    fit: ScanResult | None = None

    @property
    def consistent(self) -> bool:
        return self.content == self.aux_content

    def to_json(self) -> dict:
        doc = {
            "content": self.content.to_json(),
            "content_str": str(self.content),
            "aux_content": self.aux_content.to_json(),
            "consistent": self.consistent,
            "group_law_defect": self.group_law_defect,
            "reconstruction_error": self.reconstruction_error,
            "g_grid": [float(g) for g in self.g_grid],
        }
        if self.fit is not None:
            doc["fit"] = self.fit.to_json()
        return doc

    def csv_rows(self):
        for g, u in zip(self.g_grid, self.u):
            ch = np.trace(u)
            yield {"L": "inf", "distance": "", "g": float(g), "re": float(ch.real), "im": float(ch.imag)}


def group_law_defect(g_grid, us) -> float:
    """max ||u_g u_g' - u_{g+g'}|| over grid pairs whose sum is on the grid."""
    g_grid = np.asarray(g_grid)
    worst = 0.0
    for i, g in enumerate(g_grid):
        for j, h in enumerate(g_grid):
            hit = np.nonzero(np.abs(g_grid - (g + h)) < 1e-12)[0]
            if hit.size:
                worst = max(worst, float(np.max(np.abs(us[i] @ us[j] - us[hit[0]]))))
    return worst


def edge_representation(triple: FCSTriple, g_grid, g_gen=0.5, fit_g=1.0, fit_L=(4, 8, 16, 32), g_max=DEFAULT_G_MAX) -> EdgeRepReport:
    """Reconstruct g -> u_g on ``g_grid`` and the edge irrep content.

    Generators are read off as -i log(u_{g_gen})/g_gen along x, y and z and
    decomposed with :func:`decompose_into_irreps`.
    """
    g_grid = np.asarray(g_grid, dtype=float)
    if np.any(np.abs(g_grid) > g_max + 1e-12):
        raise ValueError(f"g_grid leaves the neighbourhood |g| ≤ {g_max}")
    if not (g_grid.min() < 0 < g_grid.max() or np.any(g_grid == 0)):
        raise ValueError("g_grid must span a neighbourhood of 0")
    F = spanning_functionals(triple)
    us, errs = [], []
    for g in g_grid:
        peripheral_check(triple, g)
        u, e = reconstruct_u(triple, g, F=F)
        us.append(u)
        errs.append(e)
    gens = []
    for ax in ("x", "y", "z"):
        peripheral_check(triple, g_gen, ax)
        u, e = reconstruct_u(triple, g_gen, ax, F=F)
        errs.append(e)
        s = -1j * sla.logm(u) / g_gen
        gens.append((s + s.conj().T) / 2)
    content = decompose_into_irreps(gens)
    aux = decompose_into_irreps(triple.aux_gen)
    fit = convergence_scan(triple, fit_g, fit_L) if triple.k > 1 and fit_g is not None else None
    return EdgeRepReport(g_grid, us, content, tuple(gens), group_law_defect(g_grid, us), float(max(errs)), aux, fit)


def theta_action(triple: FCSTriple, sigma, g, axis="z") -> np.ndarray:
    """u_g* sigma u_g for a density matrix sigma on the auxiliary space."""
    sigma = np.asarray(sigma, dtype=complex)
    if sigma.shape != (triple.k, triple.k):
        raise ValueError("sigma has the wrong shape")
    if np.max(np.abs(sigma - sigma.conj().T)) > 1e-10:
        raise ValueError("sigma is not Hermitian")
    if abs(np.trace(sigma) - 1) > 1e-10 or np.linalg.eigvalsh((sigma + sigma.conj().T) / 2).min() < -1e-10:
        raise ValueError("sigma is not a density matrix")
    u = triple.u(g, axis)
    return u.conj().T @ sigma @ u


def theta_consistency_defect(triple: FCSTriple, n: int, seed, g_max=np.pi / 2) -> float:
    """max |Tr(sigma E_{theta_g(A)}(1)) - Tr(theta_action(sigma, g) E_A(1))|.

    Sampled over ``n`` random auxiliary density matrices sigma, random one-
    or two-site observables A and random angles |g| ≤ g_max.
    """
    rng = np.random.default_rng(seed)
    k, d = triple.k, triple.d
    worst = 0.0
    one = vec(np.eye(k))
    for _ in range(n):
        g = rng.uniform(-g_max, g_max)
        X = rng.standard_normal((k, k)) + 1j * rng.standard_normal((k, k))
        sigma = X @ X.conj().T
        sigma /= np.trace(sigma)
        dn = d ** rng.integers(1, 3)
        A = rng.standard_normal((dn, dn)) + 1j * rng.standard_normal((dn, dn))
        lhs = vec(sigma.T) @ transfer_map(triple, theta(triple, A, g)).matrix @ one
        rhs = vec(theta_action(triple, sigma, g).T) @ transfer_map(triple, A).matrix @ one
        worst = max(worst, abs(lhs - rhs))
    return float(worst)


def scan_csv(results) -> str:
    """CSV text with columns L, distance, g, re, im for a list of ScanResults.

    ``re``/``im`` hold the finite-L edge value omega(U_g^+(L)).
    """
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["L", "distance", "g", "re", "im"], lineterminator="\n")
    w.writeheader()
    for res in results:
        for L, dist, z in zip(res.Ls, res.distances, res.edge_values):
            w.writerow({"L": int(L), "distance": repr(float(dist)), "g": repr(res.g), "re": repr(z.real), "im": repr(z.imag)})
    return buf.getvalue()


def edge_rep_csv(report: EdgeRepReport) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["L", "distance", "g", "re", "im"], lineterminator="\n")
    w.writeheader()
    for row in report.csv_rows():
        w.writerow(row)
    return buf.getvalue()

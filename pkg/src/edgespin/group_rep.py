"""SU(2) representation toolkit: spin matrices, one-parameter unitaries and
Casimir-based decomposition into irreducible blocks.

Spin labels are carried internally as ``two_j = 2*j`` so that half-integers
never appear as floating point keys.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

CASIMIR_TOL = 1e-6
COMMUTATION_TOL = 1e-8
HERMITIAN_TOL = 1e-10


class RepresentationError(ValueError):
    """Raised when a matrix triple is not a valid su(2) representation."""


def two_j_of(j) -> int:
    """Convert a spin label (int, float, Fraction or str like '1/2') to 2j."""
    if isinstance(j, str):
        j = Fraction(j)
    tj = Fraction(j) * 2 if not isinstance(j, float) else j * 2
    if isinstance(tj, float):
        if abs(tj - round(tj)) > 1e-12:
            raise ValueError(f"spin {j!r} is not a half-integer")
        tj = int(round(tj))
    elif tj.denominator != 1:
        raise ValueError(f"spin {j!r} is not a half-integer")
    tj = int(tj)
    if tj < 0:
        raise ValueError(f"spin must be non-negative, got {j!r}")
    return tj


@dataclass(frozen=True)
class SpinGenerators:
    """Hermitian spin matrices of the (2j+1)-dimensional irrep, or any triple
    obeying the su(2) commutation relations when built by hand."""

    two_j: int
    sx: np.ndarray
    sy: np.ndarray
    sz: np.ndarray

    @property
    def j(self) -> Fraction:
        return Fraction(self.two_j, 2)

    @property
    def dim(self) -> int:
        return self.sz.shape[0]

    def axis(self, a: str) -> np.ndarray:
        return {"x": self.sx, "y": self.sy, "z": self.sz}[a]

    def along(self, n) -> np.ndarray:
        """Generator n·S for a real 3-vector n."""
        return n[0] * self.sx + n[1] * self.sy + n[2] * self.sz

    def casimir(self) -> np.ndarray:
        return self.sx @ self.sx + self.sy @ self.sy + self.sz @ self.sz

    def unitary(self, g: float, axis="z") -> np.ndarray:
        """exp(i g S_axis); ``axis`` is 'x', 'y', 'z' or a real 3-vector."""
        s = self.axis(axis) if isinstance(axis, str) else self.along(axis)
        return exp_generator(s, g)

    def triple(self):
        return self.sx, self.sy, self.sz


def spin_matrices(j) -> SpinGenerators:
    """Standard spin-j matrices with sz = diag(j, j-1, ..., -j).

    The ladder operator S+ has the real positive entries
    sqrt(j(j+1) - m(m+1)) just above the diagonal (Condon-Shortley).
    """
    tj = two_j_of(j)
    jj = tj / 2
    m = jj - np.arange(tj + 1)
    sp = np.zeros((tj + 1, tj + 1), dtype=complex)
    for a in range(1, tj + 1):
        # <m+1| S+ |m> with m = m[a]
        sp[a - 1, a] = np.sqrt(jj * (jj + 1) - m[a] * (m[a] + 1))
    sm = sp.conj().T
    sx = (sp + sm) / 2
    sy = (sp - sm) / 2j
    sz = np.diag(m).astype(complex)
    return SpinGenerators(tj, sx, sy, sz)


def check_hermitian(s: np.ndarray, tol=HERMITIAN_TOL):
    s = np.asarray(s)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError("generator must be a square matrix")
    if np.max(np.abs(s - s.conj().T), initial=0.0) > tol:
        raise ValueError("generator is not Hermitian")


def exp_generator(s: np.ndarray, g: float) -> np.ndarray:
    """exp(i g s) for Hermitian ``s``, via eigendecomposition."""
    s = np.asarray(s, dtype=complex)
    check_hermitian(s)
    w, v = np.linalg.eigh((s + s.conj().T) / 2)
    return (v * np.exp(1j * g * w)) @ v.conj().T


def commutation_defect(sx, sy, sz) -> float:
    """max over cyclic pairs of ||[sa, sb] - i sc||_max."""
    d = 0.0
    for a, b, c in ((sx, sy, sz), (sy, sz, sx), (sz, sx, sy)):
        d = max(d, np.max(np.abs(a @ b - b @ a - 1j * c), initial=0.0))
    return float(d)


@dataclass(frozen=True)
class IrrepContent:
    """Multiset of irreps, stored as sorted ``(two_j, multiplicity)`` pairs."""

    blocks: tuple

    @classmethod
    def from_pairs(cls, pairs) -> "IrrepContent":
        """Build from ``(j, multiplicity)`` pairs; ``j`` may be a half-integer."""
        acc = {}
        for j, mult in pairs:
            tj = two_j_of(j)
            acc[tj] = acc.get(tj, 0) + int(mult)
        return cls(tuple(sorted((tj, m) for tj, m in acc.items() if m > 0)))

    @property
    def dim(self) -> int:
        return sum((tj + 1) * m for tj, m in self.blocks)

    def pairs(self):
        """List of ``(j, multiplicity)`` with ``j`` as a Fraction."""
        return [(Fraction(tj, 2), m) for tj, m in self.blocks]

    def character(self, g: float) -> complex:
        """Trace of exp(i g S_z) over the content."""
        total = 0.0
        for tj, m in self.blocks:
            ms = tj / 2 - np.arange(tj + 1)
            total += m * np.sum(np.exp(1j * g * ms))
        return complex(total)

    def to_json(self):
        return [[str(Fraction(tj, 2)), m] for tj, m in self.blocks]

    def __str__(self):
        return "{" + ", ".join(f"({Fraction(tj, 2)},{m})" for tj, m in self.blocks) + "}"


def decompose_into_irreps(generators, tol=CASIMIR_TOL, comm_tol=COMMUTATION_TOL) -> IrrepContent:
    """Irrep content of a representation given by a generator triple.

    ``generators`` is a :class:`SpinGenerators` or any ``(sx, sy, sz)``
    sequence of equal-shaped Hermitian matrices. The Casimir is diagonalised
    and its eigenvalues clustered onto the ladder j(j+1).
    """
    if isinstance(generators, SpinGenerators):
        sx, sy, sz = generators.triple()
    else:
        sx, sy, sz = (np.asarray(a, dtype=complex) for a in generators)
    n = sz.shape[0]
    if n == 0:
        return IrrepContent(())
    if commutation_defect(sx, sy, sz) > comm_tol * max(1.0, np.abs(sz).max()):
        raise RepresentationError("triple violates su(2) commutation relations")
    cas = sx @ sx + sy @ sy + sz @ sz
    ev = np.linalg.eigvalsh((cas + cas.conj().T) / 2)
    counts = {}
    for lam in ev:
        # j(j+1) = lam  ->  2j = sqrt(4 lam + 1) - 1
        tj = int(round(np.sqrt(max(4 * lam + 1, 0.0)) - 1))
        if abs(tj / 2 * (tj / 2 + 1) - lam) > tol:
            raise RepresentationError(f"Casimir eigenvalue {lam!r} is not of the form j(j+1)")
        counts[tj] = counts.get(tj, 0) + 1
    blocks = []
    for tj, c in sorted(counts.items()):
        if c % (tj + 1):
            raise RepresentationError(
                f"spin {Fraction(tj, 2)} Casimir eigenspace has dimension {c}, "
                f"not a multiple of {tj + 1}"
            )
        blocks.append((tj, c // (tj + 1)))
    return IrrepContent(tuple(blocks))


def tensor_generators(a: SpinGenerators, b: SpinGenerators) -> tuple:
    """Generators of the tensor product representation a ⊗ b."""
    ia, ib = np.eye(a.dim), np.eye(b.dim)
    return tuple(np.kron(x, ib) + np.kron(ia, y) for x, y in zip(a.triple(), b.triple()))


def adjoint_generators(a: SpinGenerators) -> tuple:
    """Generators of X -> [S, X] on dim×dim matrices (column-stacked)."""
    eye = np.eye(a.dim)
    # vec(S X - X S) = (1 ⊗ S - S^T ⊗ 1) vec(X)
    return tuple(np.kron(eye, s) - np.kron(s.T, eye) for s in a.triple())


def direct_sum_generators(*reps) -> tuple:
    """Block-diagonal generators for a direct sum of representations."""
    from scipy.linalg import block_diag

    trips = [r.triple() if isinstance(r, SpinGenerators) else r for r in reps]
    return tuple(block_diag(*[t[c] for t in trips]) for c in range(3))


def cg_isometry(j1, j2, J) -> np.ndarray:
    """Isometry C^{2J+1} -> C^{2j1+1} ⊗ C^{2j2+1} onto the spin-J subspace.

    Column M is |J, M> in the standard basis (M = J, J-1, ..., -J), built by
    lowering the highest-weight vector, with the Condon-Shortley phase
    convention <j1 j1; j2 J-j1 | J J> > 0.
    """
    a, b = spin_matrices(j1), spin_matrices(j2)
    tJ = two_j_of(J)
    if not (abs(a.two_j - b.two_j) <= tJ <= a.two_j + b.two_j) or (a.two_j + b.two_j - tJ) % 2:
        raise ValueError(f"spin {J} does not occur in {j1} ⊗ {j2}")
    tx, ty, tz = tensor_generators(a, b)
    jj = tJ / 2
    eye = np.eye(tz.shape[0])
    cas = tx @ tx + ty @ ty + tz @ tz
    # highest weight: common null vector of (Casimir - J(J+1)) and (Jz - J)
    stacked = np.vstack([cas - jj * (jj + 1) * eye, tz - jj * eye])
    _, sv, vh = np.linalg.svd(stacked)
    top = vh[-1].conj()
    # fix phase: coefficient on |j1, m1=j1> ⊗ |j2, J-j1> real positive
    m2 = jj - a.two_j / 2
    k2 = int(round(b.two_j / 2 - m2))
    if 0 <= k2 <= b.two_j:
        ref = top[0 * b.dim + k2]
    else:
        ref = top[np.argmax(np.abs(top))]
    top = top * (abs(ref) / ref)
    lower = tx - 1j * ty
    cols = [top]
    for k in range(tJ):
        M = jj - k
        nxt = lower @ cols[-1] / np.sqrt((jj + M) * (jj - M + 1))
        cols.append(nxt)
    return np.column_stack(cols)

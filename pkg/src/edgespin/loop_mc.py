"""Loop-model Monte Carlo for single-line spin-S antiferromagnets.

The model is H = -sum_b (2S+1) P_0^b, i.e. -J_{2S} Q_{2S} per bond with
J_{2S} = 1. Its thermal trace expands over Poisson bridge configurations
(rate 1 per bond on the time circle [0, beta)) weighted by (2S+1)^l, with
l the number of loops. At a bridge between x and x+1 the two segments
arriving from below are joined, as are the two leaving above. Every loop
carries one value m in {-S, ..., S}, uniformly, and S^z_x = (-1)^x m on it.

Each site has exactly one segment that contains t = 0, so the t = 0 data of
a configuration is the loop label of every site.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import stats

from .group_rep import two_j_of

CHECKPOINT_MAGIC = b"LMCK"
CHECKPOINT_VERSION = 1
UNIFORMS_PER_STEP = 5


# ---------------------------------------------------------------------------
# data types


@dataclass(frozen=True, eq=False)
class BridgeConfig:
    """Time-sorted bridges; ``edges[i]`` joins sites e and (e+1) mod n_sites."""

    n_sites: int
    two_S: int
    beta: float
    times: np.ndarray
    edges: np.ndarray
    periodic: bool = False
    n_lines_per_site: int = 1

    @property
    def n_edges(self) -> int:
        return self.n_sites if self.periodic else self.n_sites - 1

    def __post_init__(self):
        if self.times.shape != self.edges.shape:
            raise ValueError("times and edges differ in length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("bridge times must be strictly increasing")
        if self.times.size and (self.times[0] < 0 or self.times[-1] >= self.beta):
            raise ValueError("bridge times must lie in [0, beta)")
        if np.any((self.edges < 0) | (self.edges >= self.n_edges)):
            raise ValueError("edge index out of range")

    @classmethod
    def from_unsorted(cls, n_sites, two_S, beta, times, edges, periodic=False) -> "BridgeConfig":
        times = np.asarray(times, dtype=float)
        order = np.argsort(times, kind="stable")
        return cls(n_sites, two_S, float(beta), times[order], np.asarray(edges, dtype=np.int64)[order], periodic)


@dataclass(eq=False)
class LoopDecomposition:
    """Loop partition of a configuration.

    ``segment_loop`` maps each vertical segment to its loop; ``site_loop``
    gives the loop through (x, t=0). Per-loop crossing data refer to the
    t = 0 line: ``crossings[g]`` lists the sites, ``n_cross`` their count,
    ``span`` the largest distance between them, ``winding`` the net time
    winding |sum (-1)^x| and ``encloses`` whether the loop encircles the
    point between sites ``origin`` and ``origin + 1`` (odd number of
    crossings to the right of it).
    """

    n_loops: int
    segment_loop: np.ndarray
    site_loop: np.ndarray
    crossings: list
    n_cross: np.ndarray
    span: np.ndarray
    winding: np.ndarray
    encloses: np.ndarray
    origin: int


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    stderr: float
    error: float
    n: int
    seed: int | None = None
    tau: float = 0.5

    def __post_init__(self):
        if self.stderr < 0 or self.error < 0:
            raise ValueError("errors must be non-negative")

    def to_json(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "error": self.error, "n": self.n, "seed": self.seed, "tau": self.tau}


# ---------------------------------------------------------------------------
# numba kernels


@numba.njit(cache=True)
def _find(parent, i):
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        nxt = parent[i]
        parent[i] = root
        i = nxt
    return root


@numba.njit(cache=True)
def _trace(times, edges, count, n_sites, site_loop, seg_out):
    """Union-find over segments; fills site_loop with compact labels.

    Returns the number of loops. Segment j of site x starts at the j-th
    bridge touching x and ends at the next one; the last segment wraps
    through t = 0. Sites without bridges have a single closed segment.
    If ``seg_out`` is non-empty it receives the loop label of each segment.
    """
    order = np.argsort(times[:count])
    m = np.zeros(n_sites, np.int64)
    for i in range(count):
        e = edges[i]
        m[e] += 1
        m[(e + 1) % n_sites] += 1
    off = np.zeros(n_sites + 1, np.int64)
    for x in range(n_sites):
        off[x + 1] = off[x] + max(m[x], 1)
    nseg = off[n_sites]
    parent = np.arange(nseg)
    fill = np.zeros(n_sites, np.int64)
    for k in range(count):
        b = order[k]
        a = edges[b]
        c = (a + 1) % n_sites
        ja = fill[a]
        jc = fill[c]
        fill[a] += 1
        fill[c] += 1
        below_a = off[a] + (ja - 1) % m[a]
        below_c = off[c] + (jc - 1) % m[c]
        above_a = off[a] + ja
        above_c = off[c] + jc
        r1 = _find(parent, below_a)
        r2 = _find(parent, below_c)
        if r1 != r2:
            parent[r1] = r2
        r1 = _find(parent, above_a)
        r2 = _find(parent, above_c)
        if r1 != r2:
            parent[r1] = r2
    label = -np.ones(nseg, np.int64)
    n_loops = 0
    for s in range(nseg):
        r = _find(parent, s)
        if label[r] < 0:
            label[r] = n_loops
            n_loops += 1
        label[s] = label[r]
    for x in range(n_sites):
        site_loop[x] = label[off[x] + max(m[x], 1) - 1]
    if seg_out.shape[0] >= nseg:
        for s in range(nseg):
            seg_out[s] = label[s]
    return n_loops


@numba.njit(cache=True)
def _compact(site_loop, out):
    """Relabel t = 0 loop labels by order of first appearance (values < n_sites)."""
    n = site_loop.shape[0]
    seen_from = np.empty(n, np.int64)
    seen_to = np.empty(n, np.int64)
    k = 0
    for x in range(n):
        lab = site_loop[x]
        hit = -1
        for j in range(k):
            if seen_from[j] == lab:
                hit = seen_to[j]
                break
        if hit < 0:
            seen_from[k] = lab
            seen_to[k] = k
            hit = k
            k += 1
        out[x] = hit


@numba.njit(cache=True)
def accept_probability(insert, n, n_edges, beta, dl, q):
    """Metropolis acceptance for inserting into / deleting from n bridges.

    Insert: min(1, n_edges beta / (n+1) q^dl). Delete: min(1, n / (n_edges beta) q^dl).
    """
    if insert:
        r = n_edges * beta / (n + 1) * q**dl
    else:
        r = n / (n_edges * beta) * q**dl
    return min(1.0, r)


@numba.njit(cache=True)
def _run_chain(times, edges, count, n_loops, n_sites, n_edges, beta, q, n_max, uni, step0, burn_in, every, out_labels, out_nb, out_nl, n_meas):
    """Advance the chain over the rows of ``uni`` (5 uniforms per step).

    Returns (steps_done, count, n_loops, n_meas). Stops early if the bridge
    arrays are full so the caller can grow them.
    """
    cap = times.shape[0]
    site_loop = np.empty(n_sites, np.int64)
    empty = np.empty(0, np.int64)
    n_steps = uni.shape[0]
    for s in range(n_steps):
        if count >= cap:
            return s, count, n_loops, n_meas
        u = uni[s]
        if u[0] < 0.5:
            if n_max < 0 or count < n_max:
                e = min(int(u[1] * n_edges), n_edges - 1)
                times[count] = u[2] * beta
                edges[count] = e
                nl = _trace(times, edges, count + 1, n_sites, site_loop, empty)
                if u[4] < accept_probability(True, count, n_edges, beta, nl - n_loops, q):
                    count += 1
                    n_loops = nl
        elif count > 0:
            i = min(int(u[3] * count), count - 1)
            ti, ei = times[i], edges[i]
            times[i], edges[i] = times[count - 1], edges[count - 1]
            nl = _trace(times, edges, count - 1, n_sites, site_loop, empty)
            if u[4] < accept_probability(False, count, n_edges, beta, nl - n_loops, q):
                count -= 1
                n_loops = nl
            else:
                times[count - 1], edges[count - 1] = times[i], edges[i]
                times[i], edges[i] = ti, ei
        step = step0 + s + 1
        if step > burn_in and (step - burn_in) % every == 0 and n_meas < out_nb.shape[0]:
            nl = _trace(times, edges, count, n_sites, site_loop, empty)
            _compact(site_loop, out_labels[n_meas])
            out_nb[n_meas] = count
            out_nl[n_meas] = nl
            n_meas += 1
    return n_steps, count, n_loops, n_meas


# ---------------------------------------------------------------------------
# sampling


def n_edges_of(n_sites, periodic):
    return n_sites if periodic else n_sites - 1


def _check_geometry(n_sites, periodic):
    if n_sites < 2:
        raise ValueError("need at least two sites")
    if periodic and (n_sites < 4 or n_sites % 2):
        raise ValueError("periodic chains need an even number of sites ≥ 4")


def sample_bridges(n_sites, S, beta, rng_seed, periodic=False) -> BridgeConfig:
    """Independent Poisson(beta) bridges on each edge with uniform times."""
    _check_geometry(n_sites, periodic)
    if beta <= 0:
        raise ValueError("beta must be positive")
    rng = np.random.default_rng(rng_seed)
    ne = n_edges_of(n_sites, periodic)
    counts = rng.poisson(beta, size=ne)
    edges = np.repeat(np.arange(ne), counts)
    times = rng.uniform(0.0, beta, size=edges.size)
    return BridgeConfig.from_unsorted(n_sites, two_j_of(S), beta, times, edges, periodic)


def trace_loops(config: BridgeConfig, origin: int | None = None) -> LoopDecomposition:
    """Loop partition and t = 0 crossing data of ``config``."""
    n = config.n_sites
    origin = n // 2 - 1 if origin is None else origin
    count = config.times.size
    m = np.bincount(config.edges, minlength=n) + np.bincount((config.edges + 1) % n, minlength=n)
    nseg = int(np.sum(np.maximum(m[:n], 1)))
    site_loop = np.empty(n, np.int64)
    seg = np.empty(nseg, np.int64)
    n_loops = _trace(config.times.copy(), config.edges.astype(np.int64), count, n, site_loop, seg)
    return _crossing_data(n_loops, seg, site_loop, origin)


def _crossing_data(n_loops, seg, site_loop, origin) -> LoopDecomposition:
    crossings = [[] for _ in range(n_loops)]
    for x, g in enumerate(site_loop):
        crossings[g].append(x)
    n_cross = np.array([len(c) for c in crossings])
    span = np.array([max(c) - min(c) if c else 0 for c in crossings])
    winding = np.array([abs(sum((-1) ** x for x in c)) for c in crossings])
    encloses = np.array([sum(1 for x in c if x > origin) % 2 == 1 for c in crossings])
    return LoopDecomposition(n_loops, seg, site_loop.copy(), crossings, n_cross, span, winding, encloses, origin)


@dataclass(eq=False)
class LoopSamples:
    """Per-measurement t = 0 loop labels plus bridge and loop counts."""

    n_sites: int
    two_S: int
    beta: float
    periodic: bool
    labels: np.ndarray
    n_bridges: np.ndarray
    n_loops: np.ndarray
    seed: int | None = None
    steps: int = 0

    @property
    def S(self) -> float:
        return self.two_S / 2

    def __len__(self):
        return self.labels.shape[0]

    @classmethod
    def concat(cls, parts) -> "LoopSamples":
        p0 = parts[0]
        return cls(
            p0.n_sites, p0.two_S, p0.beta, p0.periodic,
            np.concatenate([p.labels for p in parts]),
            np.concatenate([p.n_bridges for p in parts]),
            np.concatenate([p.n_loops for p in parts]),
            p0.seed, sum(p.steps for p in parts),
        )


class LoopChain:
    """Metropolis chain over bridge configurations weighted by q^l.

    ``q`` defaults to 2S+1; ``q = 1`` gives the bare Poisson measure.
    ``n_max`` truncates the state space to at most that many bridges.
    The chain consumes exactly five uniforms per step from a PCG64
    generator seeded with ``seed``, so the trajectory does not depend on
    how steps are batched.
    """

    def __init__(self, n_sites, S, beta, seed, q=None, periodic=False, n_max=None, capacity=None):
        _check_geometry(n_sites, periodic)
        if beta <= 0:
            raise ValueError("beta must be positive")
        self.n_sites = int(n_sites)
        self.two_S = two_j_of(S)
        self.beta = float(beta)
        self.q = float(self.two_S + 1 if q is None else q)
        self.periodic = bool(periodic)
        self.n_max = -1 if n_max is None else int(n_max)
        self.seed = seed
        self.rng = np.random.Generator(np.random.PCG64(seed))
        cap = capacity or max(64, int(4 * self.n_edges * self.beta * self.q) + 64)
        self.times = np.zeros(cap)
        self.edges = np.zeros(cap, np.int64)
        self.count = 0
        self.n_loops = self.n_sites
        self.steps = 0

    @property
    def n_edges(self):
        return n_edges_of(self.n_sites, self.periodic)

    def config(self) -> BridgeConfig:
        return BridgeConfig.from_unsorted(
            self.n_sites, self.two_S, self.beta, self.times[: self.count].copy(), self.edges[: self.count].copy(), self.periodic
        )

    def _grow(self):
        cap = 2 * self.times.shape[0]
        t, e = np.zeros(cap), np.zeros(cap, np.int64)
        t[: self.count] = self.times[: self.count]
        e[: self.count] = self.edges[: self.count]
        self.times, self.edges = t, e

    def run(self, n_steps, burn_in=0, every=1, chunk=200_000) -> LoopSamples:
        """Advance ``n_steps``; record every ``every`` steps after ``burn_in``."""
        n_rec = max(0, (n_steps - burn_in) // every)
        labels = np.zeros((n_rec, self.n_sites), np.int64)
        nb = np.zeros(n_rec, np.int64)
        nl = np.zeros(n_rec, np.int64)
        n_meas = 0
        done = 0
        while done < n_steps:
            c = min(chunk, n_steps - done)
            uni = self.rng.random(c * UNIFORMS_PER_STEP).reshape(c, UNIFORMS_PER_STEP)
            pos = 0
            while pos < c:
                k, self.count, self.n_loops, n_meas = _run_chain(
                    self.times, self.edges, self.count, self.n_loops, self.n_sites, self.n_edges,
                    self.beta, self.q, self.n_max, uni[pos:], done + pos, burn_in, every, labels, nb, nl, n_meas,
                )
                pos += k
                if pos < c:
                    self._grow()
            done += c
        self.steps += n_steps
        return LoopSamples(self.n_sites, self.two_S, self.beta, self.periodic, labels[:n_meas], nb[:n_meas], nl[:n_meas], self.seed, n_steps)

    # checkpointing ----------------------------------------------------------

    def save(self, path):
        """Write the chain state.

        Little-endian layout::

            4s   magic b"LMCK"
            u32  version (1)
            u32  n_sites
            u32  two_S
            u8   periodic
            i64  n_max (-1 for none)
            f64  beta
            f64  q
            u64  steps done
            u64  n_loops
            u64  PCG64 state (high 64 bits), u64 (low 64 bits)
            u64  PCG64 increment (high), u64 (low)
            u32  has_uint32, u32 uinteger
            u64  bridge count n
            f64[n] times, i64[n] edges
        """
        st = self.rng.bit_generator.state
        s, inc = st["state"]["state"], st["state"]["inc"]
        mask = (1 << 64) - 1
        head = struct.pack(
            "<4sIIIBqddQQQQQQIIQ",
            CHECKPOINT_MAGIC, CHECKPOINT_VERSION, self.n_sites, self.two_S, int(self.periodic), self.n_max,
            self.beta, self.q, self.steps, self.n_loops,
            s >> 64, s & mask, inc >> 64, inc & mask, st["has_uint32"], st["uinteger"], self.count,
        )
        body = self.times[: self.count].astype("<f8").tobytes() + self.edges[: self.count].astype("<i8").tobytes()
        with open(path, "wb") as fh:
            fh.write(head + body)

    @classmethod
    def load(cls, path, seed=None) -> "LoopChain":
        with open(path, "rb") as fh:
            raw = fh.read()
        fmt = "<4sIIIBqddQQQQQQIIQ"
        size = struct.calcsize(fmt)
        (magic, version, n_sites, two_S, periodic, n_max, beta, q, steps, n_loops,
         s_hi, s_lo, i_hi, i_lo, has32, uint32, count) = struct.unpack(fmt, raw[:size])
        if magic != CHECKPOINT_MAGIC or version != CHECKPOINT_VERSION:
            raise ValueError("not a loop-chain checkpoint")
        chain = cls(n_sites, two_S / 2, beta, seed, q=q, periodic=bool(periodic), n_max=None if n_max < 0 else n_max, capacity=max(64, 2 * count))
        chain.rng.bit_generator.state = {
            "bit_generator": "PCG64",
            "state": {"state": (s_hi << 64) | s_lo, "inc": (i_hi << 64) | i_lo},
            "has_uint32": has32,
            "uinteger": uint32,
        }
        t = np.frombuffer(raw, "<f8", count, size)
        e = np.frombuffer(raw, "<i8", count, size + 8 * count)
        chain.times[:count] = t
        chain.edges[:count] = e
        chain.count = count
        chain.n_loops = n_loops
        chain.steps = steps
        return chain


def mcmc_sample(n_sites, S, beta, n_steps, rng_seed, burn_in=1000, every=1, q=None, periodic=False, n_max=None):
    """Yield BridgeConfig snapshots of the Metropolis chain.

    Convenient for small runs; :meth:`LoopChain.run` records the t = 0
    loop data without building Python objects and is the fast path.
    """
    if n_steps < burn_in:
        raise ValueError("n_steps must be at least the burn-in")
    chain = LoopChain(n_sites, S, beta, rng_seed, q=q, periodic=periodic, n_max=n_max)
    chain.run(burn_in)
    for _ in range((n_steps - burn_in) // every):
        chain.run(every)
        yield chain.config()


def run_chains(n_sites, S, beta, n_steps, seeds, burn_in, every, q=None, periodic=False, threads=1) -> list:
    """Independent chains, one per seed; results ordered as ``seeds``."""

    def one(seed):
        return LoopChain(n_sites, S, beta, seed, q=q, periodic=periodic).run(n_steps, burn_in, every)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(one, seeds))
    return [one(s) for s in seeds]


# ---------------------------------------------------------------------------
# estimators


def integrated_autocorrelation(x: np.ndarray, c=5.0) -> float:
    """tau_int = 1/2 + sum_t rho(t), with the automatic window W ≥ c tau(W)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4 or np.var(x) == 0:
        return 0.5
    y = x - x.mean()
    f = np.fft.rfft(y, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n]
    acf /= acf[0]
    tau = 0.5
    for w in range(1, n):
        tau += acf[w]
        if w >= c * tau:
            break
    return float(max(tau, 0.5))


def mc_estimate(series, seed=None) -> MCEstimate:
    series = np.asarray(series, dtype=float)
    n = series.size
    if n == 0:
        raise ValueError("no samples")
    mean = float(series.mean())
    var = float(series.var(ddof=1)) if n > 1 else 0.0
    se = float(np.sqrt(var / n))
    tau = integrated_autocorrelation(series)
    return MCEstimate(mean, se, float(np.sqrt(2 * tau) * se), n, seed, tau)


def _as_samples(samples) -> LoopSamples:
    if isinstance(samples, LoopSamples):
        return samples
    configs = list(samples)
    labels = np.array([trace_loops(c).site_loop for c in configs])
    nb = np.array([c.times.size for c in configs])
    nl = np.array([trace_loops(c).n_loops for c in configs])
    compact = np.empty_like(labels)
    for i in range(len(labels)):
        _compact(labels[i], compact[i])
    labels = compact
    c0 = configs[0]
    return LoopSamples(c0.n_sites, c0.two_S, c0.beta, c0.periodic, labels, nb, nl)


def estimate_correlation(samples, x, y) -> MCEstimate:
    """omega_beta(S^z_x S^z_y) = (-1)^|x-y| S(S+1)/3 P(x ~ y)."""
    s = _as_samples(samples)
    if not (0 <= x < s.n_sites and 0 <= y < s.n_sites):
        raise ValueError("site out of range")
    c = s.S * (s.S + 1) / 3
    ind = (s.labels[:, x] == s.labels[:, y]).astype(float)
    return mc_estimate((-1) ** abs(x - y) * c * ind, s.seed)


def connection_probability(samples, x, y) -> MCEstimate:
    s = _as_samples(samples)
    return mc_estimate((s.labels[:, x] == s.labels[:, y]).astype(float), s.seed)


def odd_crossing_loops(samples) -> np.ndarray:
    """Per-measurement number of loops crossing t = 0 an odd number of times."""
    s = _as_samples(samples)
    out = np.zeros(len(s), np.int64)
    for i, lab in enumerate(s.labels):
        out[i] = np.sum(np.bincount(lab) % 2)
    return out


def crossing_parity_report(samples) -> dict:
    """Counts for the t = 0 crossing bookkeeping.

    ``odd_loops`` is the number of sampled loops with an odd crossing count.
    Those are exactly the loops that wind around the time circle, so
    ``parity_mismatch`` (crossing parity differing from winding parity) and
    ``winding_above_one`` must both be zero.
    """
    s = _as_samples(samples)
    sign = (-1) ** np.arange(s.n_sites)
    odd = mismatch = big = 0
    for lab in s.labels:
        cnt = np.bincount(lab)
        wind = np.abs(np.bincount(lab, weights=sign))
        odd += int(np.sum(cnt % 2))
        mismatch += int(np.sum((cnt % 2) != (np.rint(wind).astype(int) % 2)))
        big += int(np.sum(wind > 1.5))
    return {
        "loops": int(np.sum(s.n_loops)),
        "configurations": len(s),
        "odd_loops": odd,
        "parity_mismatch": mismatch,
        "winding_above_one": big,
    }


def _loop_sums(labels: np.ndarray, coef: np.ndarray) -> np.ndarray:
    """Per-row, per-loop sums of ``coef``; labels are < n_sites in every row."""
    labels = np.atleast_2d(labels)
    rows, n = labels.shape
    flat = (labels + n * np.arange(rows)[:, None]).ravel()
    return np.bincount(flat, weights=np.broadcast_to(coef, labels.shape).ravel(), minlength=rows * n).reshape(rows, n)


def _enclosing(labels: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Per-row flag for each loop label: odd number of crossings right of the cut."""
    cnt = _loop_sums(labels, right.astype(float))
    return (np.rint(cnt).astype(np.int64) % 2) == 1


def lemma_moment(labels: np.ndarray, two_S: int, eps: float, origin: int) -> np.ndarray:
    """E_nu[(S^+(eps) - S_nu)^2] per configuration, loop spins integrated out.

    With positions x = site - origin, each loop contributes
    S(S+1)/3 * a^2, a = sum over its crossings with x ≥ 1 of
    (exp(-eps x) - N) (-1)^x, where N flags loops enclosing the cut.
    ``labels`` may be one row or a stack of rows.
    """
    labels = np.atleast_2d(labels)
    S = two_S / 2
    xs = np.arange(labels.shape[1]) - origin
    right = xs >= 1
    enc = _enclosing(labels, right)
    n_enc = np.take_along_axis(enc, labels, axis=1)
    coef = np.where(right, np.exp(-eps * xs) - n_enc, 0.0) * (-1.0) ** xs
    a = _loop_sums(labels, coef)
    return S * (S + 1) / 3 * np.sum(a * a, axis=1)


def enclosed_spin_variance(labels: np.ndarray, two_S: int, origin: int) -> np.ndarray:
    """E_nu[S_nu^2] per configuration."""
    labels = np.atleast_2d(labels)
    S = two_S / 2
    xs = np.arange(labels.shape[1]) - origin
    right = xs >= 1
    n_enc = np.take_along_axis(_enclosing(labels, right), labels, axis=1)
    coef = np.where(right & n_enc, (-1.0) ** xs, 0.0)
    a = _loop_sums(labels, coef)
    return S * (S + 1) / 3 * np.sum(a * a, axis=1)


@dataclass
class ExcessStats:
    epsilons: list
    moments: list
    differences: list
    enclosing_histogram: dict
    enclosed_variance: MCEstimate
    origin: int

    def decreasing(self, sigma=1.0, paired=True) -> bool:
        """Strict decrease between successive epsilons beyond ``sigma`` error bars.

        ``paired`` uses the error of the per-configuration difference;
        otherwise the two errors are combined in quadrature.
        """
        for i in range(len(self.moments) - 1):
            a, b = self.moments[i], self.moments[i + 1]
            if paired:
                d = self.differences[i]
                if not d.mean > sigma * d.error:
                    return False
            elif not a.mean - b.mean > sigma * np.hypot(a.error, b.error):
                return False
        return True

    def to_json(self) -> dict:
        return {
            "epsilon": list(self.epsilons),
            "moment": [m.to_json() for m in self.moments],
            "difference": [d.to_json() for d in self.differences],
            "enclosing_histogram": {str(k): v for k, v in self.enclosing_histogram.items()},
            "enclosed_variance": self.enclosed_variance.to_json(),
            "origin": self.origin,
        }


def excess_spin_stats(samples, epsilon_list, origin=None) -> ExcessStats:
    """Monte Carlo table of E[(S^+(eps) - S_nu)^2] over ``epsilon_list``.

    ``differences[i]`` estimates moment(eps_i) - moment(eps_{i+1}) from the
    same configurations.
    """
    eps = [float(e) for e in epsilon_list]
    if any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("epsilon_list must be positive and strictly decreasing")
    s = _as_samples(samples)
    origin = s.n_sites // 2 - 1 if origin is None else origin
    table = np.column_stack([lemma_moment(s.labels, s.two_S, e, origin) for e in eps])
    moments = [mc_estimate(table[:, i], s.seed) for i in range(len(eps))]
    diffs = [mc_estimate(table[:, i] - table[:, i + 1], s.seed) for i in range(len(eps) - 1)]
    xs = np.arange(s.n_sites) - origin
    n_enc = np.sum(_enclosing(s.labels, xs >= 1), axis=1)
    ks, counts = np.unique(n_enc, return_counts=True)
    hist = {int(k): int(c) for k, c in zip(ks, counts)}
    var = mc_estimate(enclosed_spin_variance(s.labels, s.two_S, origin), s.seed)
    return ExcessStats(eps, moments, diffs, dict(sorted(hist.items())), var, origin)


def third_moment_partial_sums(correlations) -> np.ndarray:
    """Partial sums of |x^3 omega(S^0 S^x)| for x = 0, 1, 2, ..."""
    c = np.abs(np.asarray(correlations, dtype=float))
    x = np.arange(c.size)
    return np.cumsum(x**3 * c)


# ---------------------------------------------------------------------------
# exact references for tests and diagnostics


def two_site_weights(beta, q=2.0, n_max=3) -> np.ndarray:
    """Stationary law of the bridge count on two sites, truncated at n_max.

    pi(n) ∝ beta^n / n! q^{l(n)} with l(0) = 2 and l(n) = n otherwise.
    """
    from math import factorial

    w = np.array([beta**n / factorial(n) * q ** (2 if n == 0 else n) for n in range(n_max + 1)])
    return w / w.sum()


def two_site_transition_matrix(beta, q=2.0, n_max=3) -> np.ndarray:
    """Bridge-count transition matrix of :class:`LoopChain` on two sites."""
    l = lambda n: 2 if n == 0 else n
    T = np.zeros((n_max + 1, n_max + 1))
    for n in range(n_max + 1):
        if n < n_max:
            T[n, n + 1] = 0.5 * accept_probability(True, n, 1, beta, l(n + 1) - l(n), q)
        if n > 0:
            T[n, n - 1] = 0.5 * accept_probability(False, n, 1, beta, l(n - 1) - l(n), q)
        T[n, n] = 1 - T[n].sum()
    return T


def chi2_histogram(counts, probs):
    """Pearson chi-square of observed ``counts`` against ``probs``; returns (stat, p)."""
    counts = np.asarray(counts, dtype=float)
    exp = np.asarray(probs) * counts.sum()
    return stats.chisquare(counts, exp)

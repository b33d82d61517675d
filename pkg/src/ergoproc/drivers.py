"""Stationary ergodic sources of two-sided map sequences.

A :class:`Driver` holds a finite table of maps and a rule for choosing the
table index at every integer time ``k``. All randomness is drawn from a
counter-based generator keyed by ``(seed, stream)`` and addressed by ``k``, so
any window ``[lo, hi]`` can be produced without generating what lies outside
it (for Markov chains the window is grown outward from the anchor ``k = 0``).

Kinds
-----
iid
    ``probs[j]`` is the probability of map ``j``; independent in both
    directions.
markov
    Row-stochastic ``transition``; ``x_0`` is drawn from the stationary law,
    forward steps use ``P`` and backward steps use the time reversal
    ``P~(x, y) = pi(y) P(y, x) / pi(x)``.
rotation
    ``x_k = arc containing frac(w + k beta)``, ``w`` uniform from the seed.
deterministic
    Always map 0.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Optional

import numpy as np

from .errors import ConfigError, DriverError, ResourceError, UsageError
from .families import map_from_json
from .maps import adjoint

KINDS = ("iid", "markov", "rotation", "deterministic")
PROB_TOL = 1e-12
MAX_WINDOW = 50_000_000
_OFFSET = 2**62
_MASK = (1 << 64) - 1
STREAM_MAPS = 0
STREAM_START = 1


# --- counter-based uniforms ---------------------------------------------------


def _philox(seed, stream, start_counter):
    key = np.array([seed & _MASK, stream & _MASK], dtype=np.uint64)
    return np.random.Philox(key=key, counter=np.array([start_counter, 0, 0, 0], dtype=np.uint64))


def uniforms(seed, stream, lo, hi):
    """Uniforms ``U_k`` in ``[0, 1)`` for ``lo <= k <= hi`` keyed by ``(seed, stream, k)``.

    The same ``k`` always yields the same double, whatever window it is
    requested in.
    """
    n = hi - lo + 1
    if n <= 0:
        return np.empty(0)
    if n > MAX_WINDOW:
        raise ResourceError(f"window of {n} indices exceeds the budget of {MAX_WINDOW}")
    pos = lo + _OFFSET
    start, skip = divmod(pos, 4)
    raw = _philox(seed, stream, start).random_raw(n + skip)[skip:]
    return (raw >> np.uint64(11)).astype(np.float64) * (1.0 / 2**53)


def replica_seeds(seed, n, block=0):
    """``n`` independent 64-bit seeds derived from ``seed`` (``block`` picks a disjoint family)."""
    ss = np.random.SeedSequence([seed & _MASK, block]) if block else np.random.SeedSequence(seed & _MASK)
    return [int(s) for s in ss.generate_state(n, np.uint64)]


# --- Markov chain helpers -----------------------------------------------------


def _check_stochastic(P, pointer="/transition"):
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] < 1:
        raise DriverError(f"transition matrix must be square, got shape {P.shape}")
    if np.any(P < 0):
        raise DriverError("transition matrix has negative entries")
    if np.max(np.abs(P.sum(axis=1) - 1.0)) > PROB_TOL:
        raise DriverError("transition matrix rows must sum to 1")
    return P


def is_primitive(P):
    """True if some power of ``P`` is entrywise positive (irreducible and aperiodic).

    Checks ``(P > 0)^m`` with ``m >= (n - 1)^2 + 1`` (Wielandt's bound).
    """
    A = (np.asarray(P) > 0).astype(np.int64)
    n = A.shape[0]
    bound = (n - 1) ** 2 + 1
    power = 1
    while power < bound:
        A = (A @ A > 0).astype(np.int64)
        power *= 2
    return bool(np.all(A > 0))


def stationary_dist(P, tol=1e-13, max_iter=10_000, return_residual=False):
    """Stationary law ``pi P = pi`` of a primitive chain by power iteration.

    ``P`` is squared until its rows agree, then polished by plain iteration
    until ``||pi P - pi||_1 <= tol``.
    """
    P = _check_stochastic(P)
    if not is_primitive(P):
        raise DriverError("chain is reducible or periodic; no unique stationary law")
    Q = P.copy()
    for _ in range(64):
        if np.max(np.ptp(Q, axis=0)) <= tol:
            break
        Q = Q @ Q
        Q /= Q.sum(axis=1, keepdims=True)
    pi = Q.mean(axis=0)
    pi /= pi.sum()
    residual = np.inf
    for _ in range(max_iter):
        nxt = pi @ P
        nxt /= nxt.sum()
        residual = float(np.abs(nxt - pi).sum())
        pi = nxt
        if residual <= tol:
            break
    if return_residual:
        return pi, residual
    return pi


def reversed_chain(P, pi):
    """Time reversal ``P~(x, y) = pi(y) P(y, x) / pi(x)``."""
    R = (P * pi[:, None]).T / pi[:, None]
    return R / R.sum(axis=1, keepdims=True)


def _step(cum, x, u):
    # inverse CDF per row; cum has shape (n_states, n_states)
    k = (cum[x] <= u[..., None]).sum(axis=-1)
    return np.minimum(k, cum.shape[1] - 1)


def _rational_gap(beta, max_den=1000):
    f = Fraction(beta).limit_denominator(max_den)
    return abs(beta - float(f)), f


# --- driver -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Driver:
    """Finite-table ergodic driver; see module docstring for the kinds."""

    kind: str
    maps: tuple
    probs: Optional[np.ndarray] = None
    transition: Optional[np.ndarray] = None
    beta: Optional[float] = None
    arcs: Optional[np.ndarray] = None
    seed: int = 0
    stationary: Optional[np.ndarray] = field(default=None, repr=False)
    stationary_residual: float = field(default=0.0, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DriverError(f"unknown driver kind {self.kind!r}; expected one of {KINDS}")
        maps = tuple(self.maps)
        if not maps:
            raise DriverError("driver needs at least one map")
        dims = {m.dim for m in maps}
        if len(dims) != 1:
            raise DriverError(f"maps have mixed dimensions {sorted(dims)}")
        object.__setattr__(self, "maps", maps)
        n = len(maps)
        if self.kind == "iid":
            p = np.asarray(self.probs if self.probs is not None else np.full(n, 1.0 / n), dtype=float)
            if p.shape != (n,) or np.any(p < 0) or abs(p.sum() - 1.0) > PROB_TOL:
                raise DriverError("iid probabilities must be a nonnegative vector summing to 1")
            object.__setattr__(self, "probs", p)
        elif self.kind == "markov":
            P = _check_stochastic(self.transition)
            if P.shape[0] != n:
                raise DriverError(f"transition is {P.shape[0]}x{P.shape[0]} but {n} maps given")
            pi, res = stationary_dist(P, return_residual=True)
            object.__setattr__(self, "transition", P)
            object.__setattr__(self, "stationary", pi)
            object.__setattr__(self, "stationary_residual", res)
        elif self.kind == "rotation":
            if self.beta is None:
                raise DriverError("rotation driver needs beta")
            beta = float(self.beta) % 1.0
            gap, frac = _rational_gap(beta)
            if gap <= 1e-9:
                raise DriverError(f"rotation angle {self.beta!r} is within {gap:.1e} of {frac}")
            a = np.linspace(0.0, 1.0, n + 1) if self.arcs is None else np.asarray(self.arcs, dtype=float)
            if a.shape != (n + 1,) or a[0] != 0.0 or a[-1] != 1.0 or np.any(np.diff(a) <= 0):
                raise DriverError("arcs must be increasing breakpoints from 0 to 1, one arc per map")
            object.__setattr__(self, "beta", beta)
            object.__setattr__(self, "arcs", a)
        elif n != 1:
            raise DriverError("deterministic driver takes exactly one map")

    @property
    def dim(self):
        return self.maps[0].dim

    @property
    def invertible(self):
        return True

    @property
    def n_maps(self):
        return len(self.maps)

    @cached_property
    def superops(self):
        """``(n_maps, D^2, D^2)`` stack of superoperator matrices."""
        return np.stack([m.matrix for m in self.maps])

    @cached_property
    def adjoint_maps(self):
        return tuple(adjoint(m) for m in self.maps)

    @cached_property
    def adjoint_superops(self):
        return np.conj(np.swapaxes(self.superops, -1, -2))

    @cached_property
    def trace_preserving(self):
        return np.array([m.trace_preserving for m in self.maps])

    @cached_property
    def reverse_transition(self):
        return reversed_chain(self.transition, self.stationary) if self.kind == "markov" else None

    def with_seed(self, seed):
        return Driver(self.kind, self.maps, self.probs, self.transition, self.beta, self.arcs, seed)


def iid_driver(maps, probs=None, seed=0):
    return Driver("iid", tuple(maps), probs=probs, seed=seed)


def markov_driver(maps, transition, seed=0):
    return Driver("markov", tuple(maps), transition=transition, seed=seed)


def rotation_driver(maps, beta, arcs=None, seed=0):
    return Driver("rotation", tuple(maps), beta=beta, arcs=arcs, seed=seed)


def deterministic_driver(phi, seed=0):
    return Driver("deterministic", (phi,), seed=seed)


# --- paths --------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PathWindow:
    """Table indices of ``phi_k`` for ``lo <= k <= hi``.

    ``trace`` is the kind-specific generator state (uniforms, chain states or
    rotation points), kept for reproducibility audits.
    """

    lo: int
    hi: int
    indices: np.ndarray
    driver: Driver
    trace: np.ndarray

    def __len__(self):
        return self.hi - self.lo + 1

    def index(self, k):
        if not self.lo <= k <= self.hi:
            raise UsageError(f"index {k} outside window [{self.lo}, {self.hi}]")
        return int(self.indices[k - self.lo])

    def __getitem__(self, k):
        return self.driver.maps[self.index(k)]

    def maps(self, a, b):
        """The maps ``phi_a, ..., phi_b`` in index order."""
        return [self[k] for k in range(a, b + 1)]

    def span(self, a, b):
        """Table indices for ``a <= k <= b``."""
        if not (self.lo <= a and b <= self.hi):
            raise UsageError(f"range [{a}, {b}] outside window [{self.lo}, {self.hi}]")
        return self.indices[a - self.lo : b - self.lo + 1]


def _indices_rows(driver, seeds, lo, hi):
    """Index block ``(R, hi - lo + 1)`` and driver trace for several seeds."""
    seeds = [int(s) for s in seeds]
    R, L = len(seeds), hi - lo + 1
    if R * L > MAX_WINDOW:
        raise ResourceError(f"{R} x {L} path block exceeds the budget of {MAX_WINDOW} indices")
    kind = driver.kind
    if kind == "deterministic":
        return np.zeros((R, L), dtype=np.int64), np.zeros((R, L))
    if kind == "iid":
        U = np.stack([uniforms(s, STREAM_MAPS, lo, hi) for s in seeds])
        cum = np.cumsum(driver.probs)
        idx = np.minimum(np.searchsorted(cum, U, side="right"), driver.n_maps - 1)
        # never pick a zero-probability entry through rounding at the top
        return idx.astype(np.int64), U
    if kind == "rotation":
        w0 = np.array([uniforms(s, STREAM_START, 0, 0)[0] for s in seeds])
        k = np.arange(lo, hi + 1)
        # k * beta mod 1 with the integer part removed before adding w0
        kb = np.mod(k * driver.beta, 1.0)
        W = np.mod(w0[:, None] + kb[None, :], 1.0)
        idx = np.searchsorted(driver.arcs, W, side="right") - 1
        return np.clip(idx, 0, driver.n_maps - 1).astype(np.int64), W
    # markov: grow outward from the anchor k = 0
    a, b = min(lo, 0), max(hi, 0)
    U = np.stack([uniforms(s, STREAM_MAPS, a, b) for s in seeds])
    X = np.empty((R, b - a + 1), dtype=np.int64)
    z = -a
    cum0 = np.cumsum(driver.stationary)[None, :]
    X[:, z] = _step(cum0, np.zeros(R, dtype=np.int64), U[:, z])
    cum_f = np.cumsum(driver.transition, axis=1)
    for j in range(z + 1, X.shape[1]):
        X[:, j] = _step(cum_f, X[:, j - 1], U[:, j])
    cum_b = np.cumsum(driver.reverse_transition, axis=1)
    for j in range(z - 1, -1, -1):
        X[:, j] = _step(cum_b, X[:, j + 1], U[:, j])
    sl = slice(lo - a, hi - a + 1)
    return X[:, sl], X[:, sl].astype(float)


def sample_path(driver, seed=None, lo=0, hi=0, shift=0):
    """Two-sided window ``phi_k, lo <= k <= hi`` of the path ``theta^shift omega``.

    ``seed`` defaults to ``driver.seed``. Shifting is exact for all kinds:
    ``sample_path(d, s, lo, hi, shift=1).index(k) == sample_path(d, s, lo, hi + 1).index(k + 1)``.
    """
    if lo > hi:
        raise UsageError(f"empty window [{lo}, {hi}]")
    seed = driver.seed if seed is None else seed
    idx, tr = _indices_rows(driver, [seed], lo + shift, hi + shift)
    return PathWindow(lo, hi, idx[0], driver, tr[0])


def sample_index_block(driver, seeds, lo, hi):
    """Table indices ``(len(seeds), hi - lo + 1)``; row ``r`` equals ``sample_path(driver, seeds[r], lo, hi).indices``."""
    return _indices_rows(driver, seeds, lo, hi)[0]


def iter_path(driver, seed, start, stop, chunk=1 << 16):
    """Stream ``(k0, indices)`` chunks covering ``start <= k < stop`` with ``start >= 0``.

    Markov chains carry their state between chunks, so memory stays bounded
    by ``chunk``.
    """
    if start < 0:
        raise UsageError("streaming covers nonnegative indices only")
    if driver.kind != "markov":
        for k0 in range(start, stop, chunk):
            k1 = min(stop, k0 + chunk) - 1
            yield k0, sample_index_block(driver, [seed], k0, k1)[0]
        return
    cum_f = np.cumsum(driver.transition, axis=1)
    cum0 = np.cumsum(driver.stationary)[None, :]
    x = np.array([0], dtype=np.int64)
    for k0 in range(0, stop, chunk):
        k1 = min(stop, k0 + chunk) - 1
        U = uniforms(seed, STREAM_MAPS, k0, k1)
        out = np.empty(len(U), dtype=np.int64)
        for j in range(len(U)):
            x = _step(cum0 if k0 + j == 0 else cum_f, x, U[j : j + 1])
            out[j] = x[0]
        if max(start, k0) <= k1:
            yield max(start, k0), out[max(start, k0) - k0 :]


def sample_past(driver, anchors, seeds, length, stream):
    """Resample ``length`` maps strictly before an anchor, given the anchor's table index.

    Returns ``(R, length)`` indices ordered from the anchor outward
    (position ``-1, -2, ...`` relative to the anchor). i.i.d. and deterministic
    drivers ignore the anchor; Markov drivers run the reversed chain.
    """
    kind = driver.kind
    R = len(seeds)
    if kind == "deterministic":
        return np.zeros((R, length), dtype=np.int64)
    U = np.stack([uniforms(int(s), stream, 1, length) for s in seeds])
    if kind == "iid":
        cum = np.cumsum(driver.probs)
        return np.minimum(np.searchsorted(cum, U, side="right"), driver.n_maps - 1).astype(np.int64)
    if kind == "markov":
        cum_b = np.cumsum(driver.reverse_transition, axis=1)
        out = np.empty((R, length), dtype=np.int64)
        x = np.asarray(anchors, dtype=np.int64)
        for j in range(length):
            x = _step(cum_b, x, U[:, j])
            out[:, j] = x
        return out
    raise UsageError(f"conditional resampling is not available for {kind} drivers")


# --- mixing metadata ----------------------------------------------------------


def tv_to_stationary(P, pi, n):
    """``max_x ||P^n(x, .) - pi||_TV``."""
    Pn = np.linalg.matrix_power(np.asarray(P, dtype=float), n)
    return float(0.5 * np.max(np.abs(Pn - pi[None, :]).sum(axis=1)))


def markov_alpha_bounds(P, pi, n_terms, floor=1e-12):
    """``alpha_n`` bounds for ``n = 1..n_terms`` of a stationary chain.

    Uses ``min(1/4, TV_n)`` while ``TV_n > floor``. Past that point rounding
    would dominate, so the bound switches to ``dbar(n0)^floor(n/n0)`` where
    ``dbar`` (max pairwise row distance, submultiplicative) is frozen at the
    last trusted step ``n0``.
    """
    P = np.asarray(P, dtype=float)
    out = np.empty(n_terms)
    Pn = np.eye(len(pi))
    n0, dbar = None, 1.0
    for n in range(1, n_terms + 1):
        if n0 is None:
            Pn = Pn @ P
            tv = 0.5 * float(np.max(np.abs(Pn - pi[None, :]).sum(axis=1)))
            out[n - 1] = min(0.25, tv)
            if tv <= floor:
                n0 = n
                dbar = 0.5 * float(np.max(np.abs(Pn[:, None, :] - Pn[None, :, :]).sum(-1)))
        else:
            out[n - 1] = min(0.25, dbar ** (n // n0))
    return np.minimum.accumulate(out)  # alpha_n itself is non-increasing


def alpha_bound(driver, n):
    """Upper bound on the strong mixing coefficient ``alpha_n``.

    iid and deterministic drivers give 0, rotations 1 (not mixing). For a
    stationary Markov chain ``alpha_n <= min(1/4, max_x TV(P^n(x, .), pi))``,
    see :func:`markov_alpha_bounds`.
    """
    if n < 1:
        raise UsageError("alpha_bound needs n >= 1")
    if driver.kind in ("iid", "deterministic"):
        return 0.0
    if driver.kind == "rotation":
        return 1.0
    return float(markov_alpha_bounds(driver.transition, driver.stationary, n)[-1])


def second_eigenvalue(P):
    """Modulus of the second largest eigenvalue of ``P``."""
    w = np.sort(np.abs(np.linalg.eigvals(np.asarray(P, dtype=float))))[::-1]
    return float(w[1]) if len(w) > 1 else 0.0


# --- config -------------------------------------------------------------------

_DRIVER_KEYS = {
    "iid": {"kind", "maps", "probs", "seed", "dim"},
    "markov": {"kind", "maps", "transition", "seed", "dim"},
    "rotation": {"kind", "maps", "beta", "arcs", "seed", "dim"},
    "deterministic": {"kind", "maps", "map", "seed", "dim"},
}


def driver_from_config(obj, pointer="/driver"):
    """Build a driver from its JSON object; errors carry a JSON pointer."""
    if not isinstance(obj, dict):
        raise ConfigError("driver must be an object", pointer)
    kind = obj.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"unknown driver kind {kind!r}; expected one of {list(KINDS)}", pointer + "/kind")
    unknown = sorted(set(obj) - _DRIVER_KEYS[kind])
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r}", f"{pointer}/{unknown[0]}")
    dim = obj.get("dim", 2)
    if not isinstance(dim, int) or dim < 2:
        raise ConfigError("dim must be an integer >= 2", pointer + "/dim")
    seed = obj.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a nonnegative integer", pointer + "/seed")
    raw_maps = obj.get("maps")
    if kind == "deterministic" and raw_maps is None and "map" in obj:
        raw_maps = [obj["map"]]
    if not isinstance(raw_maps, list) or not raw_maps:
        raise ConfigError("maps must be a nonempty list", pointer + "/maps")
    maps = []
    for i, m in enumerate(raw_maps):
        try:
            maps.append(map_from_json(m, dim))
        except UsageError as exc:
            raise ConfigError(str(exc), f"{pointer}/maps/{i}") from exc
    try:
        if kind == "iid":
            return iid_driver(maps, obj.get("probs"), seed)
        if kind == "markov":
            if "transition" not in obj:
                raise ConfigError("markov driver needs transition", pointer + "/transition")
            return markov_driver(maps, obj["transition"], seed)
        if kind == "rotation":
            if "beta" not in obj:
                raise ConfigError("rotation driver needs beta", pointer + "/beta")
            return rotation_driver(maps, obj["beta"], obj.get("arcs"), seed)
        return deterministic_driver(maps[0], seed)
    except (DriverError, ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        field_name = {"iid": "probs", "markov": "transition", "rotation": "beta"}.get(kind, "maps")
        raise ConfigError(str(exc), f"{pointer}/{field_name}") from exc

"""Limit statistics of map products: Lyapunov exponent, LLN curves, CLT samples.

Conventions: replicas of a driver use the seeds from
:func:`ergoproc.drivers.replica_seeds`; the Lyapunov plug-in used to centre
CLT samples comes from a disjoint seed block so that the same draws are
never used twice.
"""

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats as sps
from scipy.optimize import minimize_scalar

from .cocycle import batch_backward, batch_forward, table_contraction, truncation_bounds, window_superop
from .drivers import alpha_bound, markov_alpha_bounds, replica_seeds, sample_index_block, sample_past, sample_path
from .errors import DestructiveImageError, ExperimentError, UsageError
from .maps import PositiveMap
from .matrices import projector, random_unit_vectors
from .metric import contraction_coeff

MAX_DROP_FRACTION = 0.2
EPS = np.finfo(float).eps


# --- helpers ------------------------------------------------------------------


def _se(x):
    x = np.asarray(x, dtype=float)
    if len(x) < 2:
        return float("nan")
    return float(np.std(x, ddof=1) / math.sqrt(len(x)))


def _robust_rows(fn, idx, *args, **kwargs):
    """Run a batched kernel; on a destructive step retry row by row and drop failures."""
    try:
        return fn(idx, *args, **kwargs), np.ones(len(idx), dtype=bool)
    except DestructiveImageError:
        pass
    keep = np.zeros(len(idx), dtype=bool)
    outs = []
    for r in range(len(idx)):
        try:
            outs.append(fn(idx[r : r + 1], *args, **kwargs))
            keep[r] = True
        except DestructiveImageError:
            continue
    if not outs:
        raise ExperimentError("every replica hit a destructive step")
    first = outs[0]
    if isinstance(first, tuple):
        merged = tuple(np.concatenate([o[i] for o in outs]) if isinstance(first[i], np.ndarray) else first[i] for i in range(len(first)))
    else:
        merged = np.concatenate(outs)
    return merged, keep


def _check_drops(keep, what):
    dropped = int((~keep).sum())
    if dropped > MAX_DROP_FRACTION * len(keep):
        raise ExperimentError(f"{what}: {dropped} of {len(keep)} replicas dropped (> 20%)")
    return dropped


def choose_depth(driver, tol=1e-10, max_depth=1000, floor=16):
    """Backward truncation depth from the per-map contraction coefficients.

    Uses the largest table coefficient below 1; if every map has ``c = 1``
    the cap is returned.
    """
    c = table_contraction(driver, adjoint_form=True)
    c_max = float(np.max(c))
    if c_max <= 0:
        return floor
    if c_max >= 1:
        return max_depth
    return int(min(max_depth, max(floor, math.ceil(math.log(tol) / math.log(c_max)))))


# --- Lyapunov exponent --------------------------------------------------------


@dataclass
class LyapunovEstimate:
    """``l_hat`` is the stationary path average of ``ln ||phi*_k(Z_{k+1})||``.

    ``time_average`` is ``log_norm_n / n`` of the forward cocycle from
    ``I/D``; it differs from the growth of ``||Phi^(n)||`` by at most
    ``ln(D) / n``, which is added to the agreement tolerance.
    """

    l_hat: float
    stderr: float
    time_average: float
    time_average_stderr: float
    agree: bool
    tolerance: float
    n: int
    n_replicas: int
    depth: int
    dropped: int = 0
    per_replica: Optional[np.ndarray] = field(default=None, repr=False)


def lyapunov_rows(driver, seeds, n, depth=None):
    """Per-replica time averages ``a``, path averages ``b`` and the kept-row mask."""
    D = driver.dim
    depth = n if depth is None else depth
    idx = sample_index_block(driver, seeds, 1, n + depth)
    I = np.eye(D, dtype=complex) / D
    (logn, _), keep_a = _robust_rows(lambda x: batch_forward(driver, x, I), idx[:, :n])
    (inc, _), keep_b = _robust_rows(lambda x: batch_backward(driver, x), idx)
    a = np.full(len(seeds), np.nan)
    b = np.full(len(seeds), np.nan)
    a[keep_a] = logn[:, -1] / n
    b[keep_b] = inc[:, :n].mean(axis=1)
    return a, b, keep_a & keep_b


def summarize_lyapunov(a, b, keep, n, dim, depth):
    dropped = _check_drops(keep, "lyapunov")
    a, b = a[keep], b[keep]
    se_a, se_b = _se(a), _se(b)
    a_mean, b_mean = float(np.mean(a)), float(np.mean(b))
    # |a - b| <= ln(D) / n holds up to rounding even for deterministic drivers
    tol = 3.0 * math.hypot(se_a, se_b) + math.log(dim) / n + 1e-12
    return LyapunovEstimate(
        l_hat=b_mean,
        stderr=se_b,
        time_average=a_mean,
        time_average_stderr=se_a,
        agree=abs(a_mean - b_mean) <= tol,
        tolerance=tol,
        n=n,
        n_replicas=len(keep),
        depth=depth,
        dropped=dropped,
        per_replica=b,
    )


def lyapunov(driver, seed, n, n_replicas, depth=None, block=0, seeds=None):
    """Two estimators of the Lyapunov exponent, cross-checked.

    ``depth`` (default ``n``) is how far beyond ``n`` the backward sweep for
    the ``Z_k`` starts.
    """
    if n < 1 or n_replicas < 2:
        raise UsageError("lyapunov needs n >= 1 and at least 2 replicas")
    seeds = replica_seeds(seed, n_replicas, block) if seeds is None else list(seeds)
    depth = n if depth is None else depth
    a, b, keep = lyapunov_rows(driver, seeds, n, depth)
    return summarize_lyapunov(a, b, keep, n, driver.dim, depth)


# --- LLN curves ---------------------------------------------------------------


def probe_states(dim, n_random, seed):
    """Basis projectors, ``I/D`` and ``n_random`` random pure states."""
    rng = np.random.default_rng([seed & ((1 << 64) - 1), 7])
    basis = projector(np.eye(dim, dtype=complex))
    mixed = (np.eye(dim, dtype=complex) / dim)[None]
    rand = projector(random_unit_vectors(rng, dim, n_random)) if n_random else np.empty((0, dim, dim), complex)
    return np.concatenate([basis, mixed, rand])


@dataclass
class LlnCurves:
    n: np.ndarray
    D_n: np.ndarray
    E_n: np.ndarray
    sup_dev: np.ndarray
    l_hat: float
    excluded: int
    kendall_tau: float
    kendall_p: float


def lln_curves(driver, seed, n_grid, n_probe_pairs=8, l_hat=None, depth=None, l_replicas=50):
    """``D_n``, ``E_n`` and ``sup |(1/n) ln <Y, Phi^(n) X> - l_hat|`` along one path.

    Suprema over states are taken over the probe set of
    :func:`probe_states` (all pairs). Pairings that vanish are excluded and
    counted. The Kendall trend is of ``E_n / n`` on the upper half of
    ``n_grid``.
    """
    n_grid = np.array(sorted(set(int(x) for x in n_grid)))
    if n_grid[0] < 1:
        raise UsageError("n_grid entries must be >= 1")
    n_max = int(n_grid[-1])
    D = driver.dim
    if l_hat is None:
        l_hat = lyapunov(driver, seed, n_max, l_replicas, block=1).l_hat
    depth = choose_depth(driver) if depth is None else depth
    X = probe_states(D, n_probe_pairs, seed)
    Y = probe_states(D, n_probe_pairs, seed + 1)
    row = sample_index_block(driver, [seed], 1, n_max + depth)[0]
    idx = np.broadcast_to(row[:n_max], (len(X), n_max))
    logn, pairs = batch_forward(driver, idx, X, record=list(n_grid), probes=Y)
    mixed = D  # index of I/D within the probe stack
    inc, _ = batch_backward(driver, row[None, :])
    csum = np.concatenate([[0.0], np.cumsum(inc[0])])
    D_n, E_n, sup_dev = [], [], []
    excluded = 0
    for i, n in enumerate(n_grid):
        P = pairs[i]
        with np.errstate(divide="ignore", invalid="ignore"):
            log_pair = logn[:, n - 1][:, None] + np.log(P)
        bad = ~np.isfinite(log_pair)
        excluded += int(bad.sum())
        log_adj = log_pair[mixed] + math.log(D)  # ln ||Phi^(n)*(Y)|| = ln <Phi^(n)(I), Y>
        dev_d = np.abs(log_pair - log_adj[None, :])
        D_n.append(float(np.max(np.where(bad, -np.inf, dev_d))))
        E_n.append(float(np.max(np.abs(log_adj - csum[n]))))
        sup_dev.append(float(np.max(np.where(bad, -np.inf, np.abs(log_pair / n - l_hat)))))
    E_n = np.array(E_n)
    tail = slice(len(n_grid) // 2, None)
    if len(n_grid[tail]) >= 2:
        kt = sps.kendalltau(n_grid[tail], E_n[tail] / n_grid[tail])
        k_tau, k_p = float(kt.statistic), float(kt.pvalue)
    else:
        k_tau, k_p = float("nan"), float("nan")
    return LlnCurves(n_grid, np.array(D_n), E_n, np.array(sup_dev), float(l_hat), excluded, k_tau, k_p)


# --- contraction rate ---------------------------------------------------------


@dataclass
class KappaEstimate:
    kappa_hat: float
    slope: float
    n: np.ndarray
    c: np.ndarray
    alpha: Optional[float]
    window_slope: Optional[float]
    window_per_n: Optional[np.ndarray]
    exhaustive: bool
    excluded: int


def _fit_slope(n, c):
    n = np.asarray(n, dtype=float)
    c = np.asarray(c, dtype=float)
    ok = c > 0
    if ok.sum() < 2:
        return -math.inf, int((~ok).sum())
    return float(np.polyfit(n[ok], np.log(c[ok]), 1)[0]), int((~ok).sum())


def kappa(driver, seed, n_grid, alpha=None):
    """Exponential decay rate of ``c(Phi^(n))`` along one path.

    ``kappa_hat = exp(slope)`` of a least-squares fit of ``ln c`` against
    ``n``. With ``alpha`` the windows ``phi_n o ... o phi_{n_a + 1}`` with
    ``n_a = floor((1 - alpha) n)`` are fitted as well; their slope estimates
    ``alpha ln kappa``.
    """
    n_grid = np.array(sorted(set(int(x) for x in n_grid)))
    n_max = int(n_grid[-1])
    path = sample_path(driver, seed, 0, n_max)
    D = driver.dim
    c_vals = []
    exhaustive = True
    M = np.eye(D * D, dtype=complex)
    targets = set(n_grid.tolist())
    for k in range(1, n_max + 1):
        M = driver.superops[path.index(k)] @ M
        M /= np.max(np.abs(M))
        if k in targets:
            est = _safe_c(PositiveMap(D, superop=M.copy()))
            exhaustive &= est[1]
            c_vals.append(est[0])
    slope, excl = _fit_slope(n_grid, c_vals)
    w_slope = w_per = None
    if alpha is not None:
        if not 0 < alpha < 1:
            raise UsageError("alpha must lie in (0, 1)")
        w_c = []
        for n in n_grid:
            n_a = int(math.floor((1 - alpha) * n))
            Mw, _ = window_superop(path, n_a + 1, int(n))
            w_c.append(_safe_c(PositiveMap(D, superop=Mw))[0])
        w_slope, excl_w = _fit_slope(n_grid, w_c)
        excl += excl_w
        with np.errstate(divide="ignore"):
            w_per = np.log(np.array(w_c)) / n_grid
    k_hat = math.exp(slope) if np.isfinite(slope) else 0.0
    return KappaEstimate(k_hat, slope, n_grid, np.array(c_vals), alpha, w_slope, w_per, exhaustive, excl)


def _safe_c(phi):
    try:
        est = contraction_coeff(phi)
    except DestructiveImageError:
        return 1.0, False
    return est.lower, est.exhaustive


def contraction_decay(driver, seed, n_grid, n_seeds=200):
    """Mean of ``c(Phi^(n))`` over seeds and its log-log slope in ``n``."""
    n_grid = np.array(sorted(set(int(x) for x in n_grid)))
    seeds = replica_seeds(seed, n_seeds, block=3)
    means = np.zeros(len(n_grid))
    for s in seeds:
        means += kappa(driver, s, n_grid).c
    means /= n_seeds
    ok = means > 0
    slope = float(np.polyfit(np.log(n_grid[ok]), np.log(means[ok]), 1)[0]) if ok.sum() >= 2 else -math.inf
    return means, slope


# --- CLT ----------------------------------------------------------------------


@dataclass
class CltGate:
    p: float
    alpha_partial_sums: np.ndarray
    cauchy_gap: float
    verdict: str
    reason: str

    @property
    def applicable(self):
        return self.verdict == "applicable"


def clt_gate(driver, p=3.0, n_terms=1000, cauchy_tol=1e-9):
    """Whether the mixing condition ``sum_n alpha_n^((p-2)/p) < inf`` holds.

    ``cauchy_gap`` is ``S_N - S_{N/2}`` for the partial sums ``S``.
    """
    if p < 2:
        raise UsageError("p must be at least 2")
    if driver.kind == "rotation":
        return CltGate(p, np.ones(n_terms).cumsum(), math.inf, "not_applicable", "driver not mixing")
    if p == 2:
        return CltGate(p, np.zeros(0), math.nan, "unknown", "p = 2 needs rho-mixing coefficients, which are not available")
    expo = (p - 2) / p
    if driver.kind == "markov":
        terms = markov_alpha_bounds(driver.transition, driver.stationary, n_terms) ** expo
    else:
        terms = np.array([alpha_bound(driver, n) ** expo for n in range(1, n_terms + 1)])
    sums = np.cumsum(terms)
    gap = float(sums[-1] - sums[n_terms // 2 - 1])
    if gap <= cauchy_tol:
        reason = "alpha_n = 0" if sums[-1] == 0 else f"partial sums settle (gap {gap:.1e} <= {cauchy_tol:.0e})"
        return CltGate(p, sums, gap, "applicable", reason)
    return CltGate(p, sums, gap, "unknown", f"partial sums not settled by N = {n_terms} (gap {gap:.1e})")


@dataclass
class CltSamples:
    Q: np.ndarray
    n: int
    l_hat: float
    l_stderr: float
    plugin_bound: float
    seeds: list
    dropped: int
    gate: Optional[CltGate] = None


def clt_samples(driver, seed, n, n_replicas, probes="basis", l_hat=None, l_stderr=None,
                l_replicas=200, override=False, seeds=None):
    """``Q = (ln <Y, Phi^(n) X> - n l_hat) / sqrt(n)`` over independent replicas.

    ``probes`` is ``"basis"`` (``X = Y = e_1 e_1*``), ``"random"`` (fresh
    random pure states per replica) or a pair of matrices. The plug-in bound
    ``sqrt(n) * l_stderr`` is how far the centring can move ``Q``.
    """
    gate = clt_gate(driver)
    if not gate.applicable:
        if not override:
            raise UsageError(f"CLT gate is {gate.verdict}: {gate.reason}")
        warnings.warn(f"running CLT samples although the gate is {gate.verdict}", stacklevel=2)
    if l_hat is None:
        est = lyapunov(driver, seed, n, l_replicas, block=1)
        l_hat, l_stderr = est.l_hat, est.stderr
    l_stderr = 0.0 if l_stderr is None else l_stderr
    seeds = replica_seeds(seed, n_replicas) if seeds is None else list(seeds)
    Q, keep = clt_rows(driver, seeds, n, l_hat, probes)
    dropped = _check_drops(keep, "clt_samples")
    return CltSamples(Q[keep], n, float(l_hat), float(l_stderr), math.sqrt(n) * l_stderr,
                      [s for s, k in zip(seeds, keep) if k], dropped, gate)


def clt_rows(driver, seeds, n, l_hat, probes="basis"):
    """Per-replica ``Q`` values (``nan`` for dropped rows) and the kept-row mask."""
    D = driver.dim
    R = len(seeds)
    if isinstance(probes, str):
        if probes == "basis":
            X = Y = projector(np.eye(D, dtype=complex)[0])
            Xs = np.broadcast_to(X, (R, D, D))
            Ys = np.broadcast_to(Y, (R, D, D))
        elif probes == "random":
            Xs = np.stack([projector(random_unit_vectors(np.random.default_rng([s, 11]), D)) for s in seeds])
            Ys = np.stack([projector(random_unit_vectors(np.random.default_rng([s, 12]), D)) for s in seeds])
        else:
            raise UsageError(f"unknown probe kind {probes!r}")
    else:
        X, Y = (np.asarray(m, dtype=complex) for m in probes)
        Xs, Ys = np.broadcast_to(X, (R, D, D)), np.broadcast_to(Y, (R, D, D))
    idx = sample_index_block(driver, seeds, 1, n)
    rows = np.arange(R)
    (logn, states), keep = _robust_rows(lambda r: batch_forward(driver, idx[r], Xs[r]), rows)
    pair = np.real((np.conj(Ys[keep]) * states).sum(axis=(-2, -1)))
    with np.errstate(divide="ignore"):
        log_pair = logn[:, -1] + np.log(pair)
    Q = np.full(R, np.nan)
    Q[keep] = (log_pair - n * l_hat) / math.sqrt(n)
    return Q, keep


@dataclass
class SigmaEstimate:
    method: str
    value: float
    stderr: float
    k_max: Optional[int] = None
    mc_inner: Optional[int] = None
    terms: Optional[np.ndarray] = None
    tail_flag: bool = False
    z_trunc_bound: Optional[float] = None


def sigma_direct(samples):
    """Sample variance of ``Q`` with a fourth-moment standard error."""
    Q = np.asarray(samples.Q if hasattr(samples, "Q") else samples, dtype=float)
    v = float(np.var(Q, ddof=1))
    dev2 = (Q - Q.mean()) ** 2
    se = float(np.std(dev2, ddof=1) / math.sqrt(len(Q)))
    return SigmaEstimate("direct", v, max(se, EPS))


def sigma_batch_means(driver, seed, n_total, n_batches=None, warmup=200):
    """Batch-means variance of the forward log-norm along one long trajectory.

    The trajectory ``phi_1 .. phi_N`` is cut into ``n_batches`` (default
    ``sqrt(N)``) consecutive batches. Batches run in parallel, each started
    from ``I/D`` at ``warmup`` steps before its first index; contraction makes
    the start forgotten, and the warm-up increments are discarded.
    """
    B = int(n_batches or round(math.sqrt(n_total)))
    b = n_total // B
    if B < 2 or b < 1:
        raise UsageError("need at least two nonempty batches")
    path = sample_index_block(driver, [seed], 1 - warmup, B * b)[0]
    starts = warmup + np.arange(B) * b
    idx = np.stack([path[s - warmup : s + b] for s in starts])
    D = driver.dim
    (logn, _), keep = _robust_rows(lambda x: batch_forward(driver, x, np.eye(D, dtype=complex) / D), idx)
    _check_drops(keep, "batch_means")
    sums = logn[:, -1] - (logn[:, warmup - 1] if warmup else 0.0)
    v = float(np.var(sums, ddof=1) / b)
    return SigmaEstimate("batch_means", v, max(v * math.sqrt(2.0 / (len(sums) - 1)), EPS))


def sigma_martingale(driver, seed, k_max=50, mc_inner=32, n_outer=400, z_tol=1e-6, max_depth=1000):
    """Martingale-series variance ``E[(sum_k E[xi_-k | F^0] - E[xi_-k | F^1])^2]``.

    For each outer draw the maps with index ``>= 1`` are frozen (they fix
    ``Z_1``), and ``phi_0`` is frozen for the ``F^0`` branch. Older maps are
    resampled ``mc_inner`` times, with common random numbers for the two
    branches. Splitting the inner draws in halves ``a``, ``b`` and averaging
    ``zeta_a * zeta_b`` gives an unbiased estimate of the squared conditional
    mean. The plug-in ``l`` cancels between the branches.
    """
    if driver.kind == "rotation":
        raise UsageError("martingale_series needs an iid, markov or deterministic driver")
    if mc_inner < 2 or mc_inner % 2:
        raise UsageError("mc_inner must be an even number >= 2")
    depth = choose_depth(driver, tol=z_tol, max_depth=max_depth)
    outer = replica_seeds(seed, n_outer, block=2)
    fut = sample_index_block(driver, outer, 0, depth)  # columns: positions 0 .. depth
    _, kept = batch_backward(driver, fut[:, 1:], keep=[0])
    Z1 = kept[0]
    bounds = truncation_bounds(driver, fut[:, 1:])[:, 0]
    if np.max(bounds) > z_tol and np.max(bounds) >= 1.0:
        bounds = np.array([_window_bound(driver, row) for row in fut[:, 1:]])
    J = mc_inner
    R = n_outer * J
    inner_seeds = [s for s in outer for _ in range(J)]
    streams = np.tile(np.arange(J), n_outer)
    x1 = np.repeat(fut[:, 1], J)
    x0 = np.repeat(fut[:, 0], J)
    past0 = _past(driver, x0, inner_seeds, streams, k_max, 20)
    new0 = _past(driver, x1, inner_seeds, streams, 1, 21)[:, 0]
    past1 = _past(driver, new0, inner_seeds, streams, k_max, 20)
    Zr = np.repeat(Z1, J, axis=0)
    # ascending positions -k_max .. 0
    idx0 = np.concatenate([past0[:, ::-1], x0[:, None]], axis=1)
    idx1 = np.concatenate([past1[:, ::-1], new0[:, None]], axis=1)
    inc0, _ = batch_backward(driver, idx0, Zr)
    inc1, _ = batch_backward(driver, idx1, Zr)
    diff = (inc0 - inc1)[:, ::-1]  # column k is lag k
    cum = np.cumsum(diff, axis=1).reshape(n_outer, J, k_max + 1)
    za = cum[:, : J // 2].mean(axis=1)
    zb = cum[:, J // 2 :].mean(axis=1)
    prod = za * zb  # (n_outer, k_max + 1)
    curve = prod.mean(axis=0)
    value = float(curve[-1])
    se = float(np.std(prod[:, -1], ddof=1) / math.sqrt(n_outer))
    terms = np.diff(np.concatenate([[0.0], curve]))
    tail = abs(curve[-1] - curve[max(0, k_max - 10)]) > 0.01 * abs(curve[-1]) if k_max >= 10 else False
    return SigmaEstimate("martingale_series", max(value, 0.0), max(se, EPS), k_max, mc_inner, terms,
                         bool(tail and value > se), float(np.max(bounds)))


def _past(driver, anchors, seeds, streams, length, base):
    out = np.empty((len(seeds), length), dtype=np.int64)
    for j in np.unique(streams):
        sel = np.flatnonzero(streams == j)
        out[sel] = sample_past(driver, anchors[sel], [seeds[i] for i in sel], length, base * 1000 + int(j))
    return out


def _window_bound(driver, row):
    M = np.eye(driver.dim**2, dtype=complex)
    for j in row[::-1]:
        M = M @ driver.adjoint_superops[j]
        M /= np.max(np.abs(M))
    return _safe_c(PositiveMap(driver.dim, superop=M))[0]


def sigma_estimate(method, **kw):
    """Dispatch to the ``direct``, ``batch_means`` or ``martingale_series`` estimator."""
    if method == "direct":
        return sigma_direct(kw["samples"])
    if method == "batch_means":
        return sigma_batch_means(kw["driver"], kw["seed"], kw["n_total"], kw.get("n_batches"), kw.get("warmup", 200))
    if method == "martingale_series":
        return sigma_martingale(kw["driver"], kw["seed"], kw.get("k_max", 50), kw.get("mc_inner", 32),
                                kw.get("n_outer", 400), kw.get("z_tol", 1e-6))
    raise UsageError(f"unknown sigma method {method!r}")


@dataclass
class XiSample:
    k: int
    xi: float
    z_trunc_bound: float
    l_used: float
    z_next: np.ndarray = field(repr=False)


def xi_samples(driver, seed, ks, l_hat, depth=None):
    """``xi_k = ln ||phi*_k(Z_{k+1})|| - l_hat`` at the indices ``ks`` of one path."""
    ks = sorted(set(int(k) for k in ks))
    depth = choose_depth(driver) if depth is None else depth
    lo, hi = ks[0], ks[-1] + depth
    row = sample_index_block(driver, [seed], lo, hi)
    inc, kept = batch_backward(driver, row, keep=[k + 1 - lo for k in ks])
    bounds = truncation_bounds(driver, row)[0]
    out = []
    for k in ks:
        j = k - lo
        out.append(XiSample(k, float(inc[0, j] - l_hat), float(bounds[j + 1]), float(l_hat), kept[j + 1][0]))
    return out


def recompute_xi(driver, path, sample):
    """Recompute ``xi`` from the stored ``Z_{k+1}`` and the path's ``phi_k``."""
    phi_star = driver.adjoint_maps[path.index(sample.k)]
    return math.log(float(np.real(np.trace(phi_star(sample.z_next))))) - sample.l_used


# --- normality test -----------------------------------------------------------


def kolmogorov_sf(lam, max_terms=100, term_tol=1e-10):
    """``Q_KS(lam) = 2 sum_{j>=1} (-1)^(j-1) exp(-2 j^2 lam^2)``.

    Summation stops at the first term below ``term_tol``; if that does not
    happen within ``max_terms`` terms (small ``lam``) the value is 1.
    """
    a2 = -2.0 * lam * lam
    total, sign = 0.0, 2.0
    for j in range(1, max_terms + 1):
        term = sign * math.exp(a2 * j * j)
        total += term
        if abs(term) < term_tol:
            return min(max(total, 0.0), 1.0)
        sign = -sign
    return 1.0


def ks_statistic(x, sigma):
    """One-sample KS distance of ``x`` to ``N(0, sigma^2)``."""
    x = np.sort(np.asarray(x, dtype=float))
    n = len(x)
    F = sps.norm.cdf(x / sigma)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


@dataclass
class KsResult:
    statistic: float
    p_value: float
    n: int
    sigma: float
    shift: float = 0.0
    degenerate: bool = False
    fraction: Optional[float] = None


def ks_normality(samples, sigma_hat, shift_tol=0.0, eps=1e-6):
    """KS test of ``samples`` against ``N(0, sigma_hat^2)``.

    ``shift_tol`` allows a location shift of the samples within
    ``[-shift_tol, shift_tol]`` (the plug-in uncertainty of the centring); the
    smallest distance over that range is reported. ``sigma_hat = 0`` switches
    to the degenerate branch, reporting the fraction of ``|Q| > eps``.
    """
    x = np.asarray(samples, dtype=float)
    n = len(x)
    if n < 100:
        raise UsageError("ks_normality needs at least 100 samples")
    if sigma_hat == 0:
        return KsResult(math.nan, math.nan, n, 0.0, 0.0, True, float(np.mean(np.abs(x) > eps)))
    if not sigma_hat > 0:
        raise UsageError("sigma_hat must be nonnegative")
    shift = 0.0
    d = ks_statistic(x, sigma_hat)
    if shift_tol > 0:
        grid = np.linspace(-shift_tol, shift_tol, 81)
        vals = [ks_statistic(x - s, sigma_hat) for s in grid]
        j = int(np.argmin(vals))
        lo, hi = grid[max(j - 1, 0)], grid[min(j + 1, len(grid) - 1)]
        res = minimize_scalar(lambda s: ks_statistic(x - s, sigma_hat), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12})
        cand = [(vals[j], float(grid[j])), (float(res.fun), float(res.x)), (d, 0.0)]
        d, shift = min(cand)
    sq = math.sqrt(n)
    p = kolmogorov_sf((sq + 0.12 + 0.11 / sq) * d)
    return KsResult(d, p, n, float(sigma_hat), shift)


# --- oracles ------------------------------------------------------------------


def markov_clt_variance(P, f):
    """Asymptotic variance of ``sum f(X_k)`` for a stationary primitive chain.

    ``sigma^2 = 2 <g, Z g>_pi - <g, g>_pi`` with ``g = f - pi(f)`` and the
    fundamental matrix ``Z = (I - P + 1 pi)^(-1)``.
    """
    from .drivers import stationary_dist

    P = np.asarray(P, dtype=float)
    f = np.asarray(f, dtype=float)
    pi = stationary_dist(P)
    g = f - pi @ f
    Z = np.linalg.inv(np.eye(len(pi)) - P + np.outer(np.ones(len(pi)), pi))
    return float(2 * pi @ (g * (Z @ g)) - pi @ (g * g))

"""Overflow-free products of maps along driver paths.

Forward products ``Phi^(n) = phi_n o ... o phi_1`` are carried as a
projectively normalised state plus an accumulated log-norm, so
``Phi^(n)(X) = exp(log_norm) * state`` never over- or underflows. Backward
adjoint products ``phi*_k o ... o phi*_N`` give the ``Z_k`` matrices, and the
batched kernels here run many replicas in lock step.
"""

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import DestructiveImageError, UsageError
from .maps import PositiveMap, is_strictly_positive, op_norm, perron_left, perron_right
from .matrices import hermitize, unvec, vec
from .metric import contraction_coeff, dist

FORWARD = "forward"
BACKWARD = "adjoint-backward"
TRACE_TOL = 1e-14


@dataclass(frozen=True)
class ScaledProduct:
    """``exp(log_norm) * state`` represents the (unnormalised) product image."""

    state: np.ndarray
    log_norm: float
    steps: int
    direction: str = FORWARD

    def value(self):
        return math.exp(self.log_norm) * self.state

    def log_inner(self, Y):
        """``ln <Y, product image>``; ``-inf`` when the pairing vanishes."""
        v = float(np.real(np.vdot(Y, self.state)))
        return self.log_norm + math.log(v) if v > 0 else -math.inf


def _trace_index(D):
    return np.arange(D) * (D + 1)


def _step_scaled(phi, X, k, tp):
    Y = hermitize(phi(X))
    t = float(np.real(np.trace(Y)))
    if not t > TRACE_TOL * max(op_norm(phi), 1e-300):
        raise DestructiveImageError(f"map at index {k} annihilates the current state (trace {t:.3e})", index=k, witness=X)
    return Y / t, (0.0 if tp else math.log(t))


def forward_cocycle(path, X0, n, start=1):
    """``[ScaledProduct after steps 1..n]`` for ``phi_{start}, ..., phi_{start+n-1}`` applied to ``X0``.

    Trace-preserving maps contribute exactly zero to ``log_norm``.
    """
    X = hermitize(np.asarray(X0, dtype=complex))
    tr0 = float(np.real(np.trace(X)))
    if not tr0 > 0:
        raise UsageError("initial state must have positive trace")
    X = X / tr0
    log_norm = math.log(tr0)
    out = []
    for j in range(n):
        k = start + j
        phi = path[k]
        X, inc = _step_scaled(phi, X, k, phi.trace_preserving)
        log_norm += inc
        out.append(ScaledProduct(X, log_norm, j + 1, FORWARD))
    return out


def window_superop(path, a, b):
    """Normalised superoperator of ``phi_b o ... o phi_a`` and its log scale.

    The true product is ``exp(log_scale) * M`` with ``max |M| = 1``.
    """
    if a > b:
        raise UsageError(f"empty window [{a}, {b}]")
    D2 = path.driver.dim ** 2
    M = np.eye(D2, dtype=complex)
    log_scale = 0.0
    for k in range(a, b + 1):
        M = path.driver.superops[path.index(k)] @ M
        s = float(np.max(np.abs(M)))
        if not s > 0:
            raise DestructiveImageError(f"product vanishes at index {k}", index=k)
        M /= s
        log_scale += math.log(s)
    return M, log_scale


def window_map(path, a, b, adjoint_form=False):
    """``phi_b o ... o phi_a`` (or its adjoint ``phi*_a o ... o phi*_b``) as a normalised map."""
    M, _ = window_superop(path, a, b)
    if adjoint_form:
        M = M.conj().T
    tag = "*" if adjoint_form else ""
    return PositiveMap(path.driver.dim, superop=M, label=f"window[{a},{b}]{tag}")


class BackwardResult(NamedTuple):
    state: np.ndarray
    contraction_bound: float
    exhaustive: bool
    log_norm: float


def adjoint_backward(path, Y, k, n, with_bound=True):
    """``(phi*_k o ... o phi*_n) . Y`` applied right to left, plus ``c`` of that window.

    The contraction value is the metric module's estimate for the composed
    adjoint window (exhaustive for qubits, a lower estimate otherwise).
    """
    if k > n:
        raise UsageError("adjoint_backward needs k <= n")
    X = hermitize(np.asarray(Y, dtype=complex))
    X = X / float(np.real(np.trace(X)))
    log_norm = 0.0
    adj = path.driver.adjoint_maps
    for j in range(n, k - 1, -1):
        X, inc = _step_scaled(adj[path.index(j)], X, j, False)
        log_norm += inc
    if not with_bound:
        return BackwardResult(X, float("nan"), False, log_norm)
    try:
        est = contraction_coeff(window_map(path, k, n, adjoint_form=True))
    except DestructiveImageError:
        # numerically rank-collapsed window: only the trivial bound is available
        return BackwardResult(X, 1.0, False, log_norm)
    return BackwardResult(X, est.lower, est.exhaustive, log_norm)


@dataclass(frozen=True)
class ZEstimate:
    Z: np.ndarray
    bound: float
    depth_used: int
    residual: Optional[float]
    truncated: bool
    exhaustive: bool


def estimate_Z(path, k, depth=None, tol=1e-8, max_depth=1000, residual=True):
    """Truncated ``Z_k = lim (phi*_k o ... o phi*_N) . I/D``.

    The depth doubles from 8 (or starts at ``depth``) until the contraction
    coefficient of the adjoint window is at most ``tol``, or the path or
    ``max_depth`` runs out; then ``truncated`` is set. The residual is
    ``d(phi*_k . Z_{k+1}, Z_k)`` with ``Z_{k+1}`` truncated independently.
    """
    D = path.driver.dim
    avail = path.hi - k
    cap = min(max_depth, avail)
    if cap < 0:
        raise UsageError(f"path ends at {path.hi}, before k = {k}")
    d = min(depth if depth is not None else 8, cap)
    I = np.eye(D, dtype=complex) / D
    while True:
        res = adjoint_backward(path, I, k, k + d)
        if res.contraction_bound <= tol or d >= cap or depth is not None:
            break
        d = min(2 * d, cap)
    r = None
    if residual and k + 1 + d <= path.hi:
        Z1 = adjoint_backward(path, I, k + 1, k + 1 + d, with_bound=False).state
        phi_star = path.driver.adjoint_maps[path.index(k)]
        img = hermitize(phi_star(Z1))
        r = dist(img / np.real(np.trace(img)), res.state).d
    return ZEstimate(res.state, res.contraction_bound, d, r, res.contraction_bound > tol, res.exhaustive)


# --- stopping times -----------------------------------------------------------


@dataclass
class StoppingRecord:
    tau: Optional[int]
    tau_prime: Optional[int]
    tau_r: Optional[int]
    r: Optional[float]
    horizon: int
    mode: str = "direct"
    certificates: list = field(default_factory=list)
    notes: list = field(default_factory=list)


def _strictly_positive(phi, seed):
    return is_strictly_positive(phi, n_samples=400, n_refine=30, seed=seed)


def table_contraction(driver, adjoint_form=False):
    """Per-table contraction coefficients (exhaustive for qubits)."""
    maps = driver.adjoint_maps if adjoint_form else driver.maps
    return np.array([contraction_coeff(m).lower for m in maps])


def stopping_times(path, horizon, r=None, two_sided=True, bound="direct", paranoid=False, seed=0):
    """First strict-positivity times ``tau``, ``tau'`` and the contraction time ``tau_r``.

    ``tau`` is the first ``n`` with ``Phi^(n)`` certified strictly positive,
    ``tau'`` additionally needs ``Psi^(n) = phi*_{-n} o ... o phi*_{-1}``
    strictly positive. For invertible drivers the first such time already
    stays positive, so no forward scan is needed (``paranoid`` re-checks the
    next ten products anyway).

    ``tau_r`` is the first ``n`` with ``c(Phi^(n)) <= r`` and
    ``c(Psi^(n)) <= r``. With ``bound="direct"`` the coefficients of the
    composed windows are estimated; with ``bound="submultiplicative"`` the
    products of per-map coefficients are used instead, an upper bound that
    can only make ``tau_r`` later.
    """
    if bound not in ("direct", "submultiplicative"):
        raise UsageError(f"unknown bound mode {bound!r}")
    need_back = two_sided or r is not None
    if need_back and path.lo > -horizon:
        raise UsageError(f"two-sided stopping times need the window to reach -{horizon}")
    if path.hi < horizon:
        raise UsageError(f"path ends at {path.hi}, before the horizon {horizon}")
    rec = StoppingRecord(None, None, None, r, horizon, bound)
    if not path.driver.invertible:
        rec.notes.append("driver not invertible: tau' is unavailable")
    D = path.driver.dim
    fwd_pos = back_pos = False
    for n in range(1, horizon + 1):
        if rec.tau is None or (two_sided and rec.tau_prime is None):
            if not fwd_pos:
                cert = _strictly_positive(window_map(path, 1, n), seed)
                rec.certificates.append(("Phi", n, cert))
                fwd_pos = cert.yes
                if fwd_pos and rec.tau is None:
                    rec.tau = n
            if two_sided and not back_pos:
                cert = _strictly_positive(window_map(path, -n, -1, adjoint_form=True), seed)
                rec.certificates.append(("Psi", n, cert))
                back_pos = cert.yes
            if two_sided and fwd_pos and back_pos and rec.tau_prime is None:
                rec.tau_prime = n
        done = rec.tau is not None and (not two_sided or rec.tau_prime is not None)
        if done and r is None:
            break
        if r is not None and rec.tau_r is None:
            c_f, c_b = _tau_r_pair(path, n, bound)
            rec.certificates.append(("c", n, (c_f, c_b)))
            if c_f <= r and c_b <= r:
                rec.tau_r = n
        if done and (r is None or rec.tau_r is not None):
            break
    if paranoid and rec.tau is not None:
        hi = min(rec.tau + 10, path.hi)
        for n in range(rec.tau + 1, hi + 1):
            if not _strictly_positive(window_map(path, 1, n), seed).yes:
                rec.notes.append(f"Phi^({n}) not certified after tau = {rec.tau}")
    if D > 2 and r is not None:
        rec.notes.append("tau_r from sampled (lower-biased) contraction estimates")
    for name, val in (("tau", rec.tau), ("tau_prime", rec.tau_prime), ("tau_r", rec.tau_r)):
        if val is None and (name != "tau_prime" or two_sided) and (name != "tau_r" or r is not None):
            rec.notes.append(f"{name} not reached within horizon {horizon}")
    return rec


def _tau_r_pair(path, n, bound):
    if bound == "direct":
        c_f = contraction_coeff(window_map(path, 1, n)).lower
        c_b = contraction_coeff(window_map(path, -n, -1, adjoint_form=True)).lower
        return c_f, c_b
    cache = getattr(path.driver, "_c_table", None)
    if cache is None:
        cache = (table_contraction(path.driver), table_contraction(path.driver, adjoint_form=True))
        object.__setattr__(path.driver, "_c_table", cache)
    c_f = float(np.prod(cache[0][path.span(1, n)]))
    c_b = float(np.prod(cache[1][path.span(-n, -1)]))
    return c_f, c_b


# --- Perron sequences ---------------------------------------------------------


class PerronEntry(NamedTuple):
    n: int
    log_lambda: float
    L: np.ndarray
    R: np.ndarray
    identity_gap: float


def perron_sequence(path, n_list, tol=1e-12):
    """``(n, ln Lambda_n, L_n, R_n)`` for ``Phi^(n) = phi_n o ... o phi_1``.

    The product is kept as a normalised superoperator with a log scale.
    ``identity_gap`` is ``|ln Lambda_n - ln <L_n, Phi^(n)(I)>|`` with the
    pairing evaluated through the forward cocycle started at ``I``.
    """
    D = path.driver.dim
    n_max = max(n_list)
    fwd = forward_cocycle(path, np.eye(D, dtype=complex), n_max)
    out = []
    for n in sorted(n_list):
        M, log_scale = window_superop(path, 1, n)
        phi = PositiveMap(D, superop=M)
        right = perron_right(phi, tol=tol)
        left = perron_left(phi, tol=tol)
        log_lam = log_scale + math.log(right.eigenvalue)
        gap = abs(log_lam - fwd[n - 1].log_inner(left.state))
        out.append(PerronEntry(n, log_lam, left.state, right.state, gap))
    return out


# --- batched kernels ----------------------------------------------------------


def _check_traces(t, idx_col, k, tol=TRACE_TOL):
    bad = ~(t > tol)
    if np.any(bad):
        r = int(np.flatnonzero(bad)[0])
        raise DestructiveImageError(
            f"map at index {k} (table entry {int(idx_col[r])}) annihilates the state of replica {r}",
            index=k,
        )


def batch_forward(driver, idx, X0, start=1, record=None, probes=None):
    """Run ``R`` forward cocycles in lock step.

    ``idx`` is ``(R, n)`` table indices for steps ``start .. start+n-1``;
    ``X0`` a state or ``(R, D, D)`` stack. Returns the cumulative log-norm
    ``(R, n)`` and, for each step listed in ``record``, the pairings
    ``<Y, X_hat_step>`` with the ``probes`` stack ``(P, D, D)`` as an array
    ``(len(record), R, P)``.
    """
    idx = np.asarray(idx)
    R, n = idx.shape
    D = driver.dim
    X0 = np.asarray(X0, dtype=complex)
    X = np.broadcast_to(X0, (R, D, D)) if X0.ndim == 2 else X0
    tr0 = np.real(np.trace(X, axis1=-2, axis2=-1))
    v = vec(X) / tr0[:, None]
    S = driver.superops
    tp = driver.trace_preserving
    ti = _trace_index(D)
    logn = np.empty((R, n))
    acc = np.log(tr0)
    rec_steps = sorted(set(record or []))
    rec_pos = {s: i for i, s in enumerate(rec_steps)}
    pv = None if probes is None else np.conj(vec(np.asarray(probes, dtype=complex)))
    pairs = None if probes is None else np.empty((len(rec_steps), R, len(pv)))
    states = np.empty((len(rec_steps), R, D * D), dtype=complex) if probes is None and rec_steps else None
    for j in range(n):
        col = idx[:, j]
        v = np.matmul(S[col], v[:, :, None])[:, :, 0]
        V = v.reshape(R, D, D)
        v = (0.5 * (V + np.conj(np.swapaxes(V, -1, -2)))).reshape(R, D * D)
        t = np.real(v[:, ti].sum(axis=1))
        _check_traces(t, col, start + j)
        v = v / t[:, None]
        acc = acc + np.where(tp[col], 0.0, np.log(t))
        logn[:, j] = acc
        step = j + 1
        if step in rec_pos:
            if pairs is not None:
                # elementwise pairing keeps every row independent of the batch size
                pairs[rec_pos[step]] = np.real((v[:, None, :] * pv[None, :, :]).sum(axis=-1))
            else:
                states[rec_pos[step]] = v
    if probes is not None:
        return logn, pairs
    if states is not None:
        return logn, unvec(states, D)
    return logn, unvec(v, D)


def batch_backward(driver, idx, Y=None, keep=None):
    """Adjoint sweep ``Z_k = phi*_k . Z_{k+1}`` from the right end of ``idx``.

    ``idx`` is ``(R, N)`` table indices for positions ``a .. a+N-1``; the
    sweep starts from ``Y`` (default ``I/D``) placed after the last position.
    Returns ``inc`` with ``inc[:, j] = ln tr phi*_{a+j}(Z_{a+j+1})`` and the
    states ``Z_{a+j}`` for the positions ``j`` listed in ``keep``.
    """
    idx = np.asarray(idx)
    R, N = idx.shape
    D = driver.dim
    Y = np.eye(D, dtype=complex) / D if Y is None else np.asarray(Y, dtype=complex)
    Yb = np.broadcast_to(Y, (R, D, D)) if Y.ndim == 2 else Y
    v = vec(Yb) / np.real(np.trace(Yb, axis1=-2, axis2=-1))[:, None]
    S = driver.adjoint_superops
    ti = _trace_index(D)
    inc = np.empty((R, N))
    keep = sorted(set(keep or []))
    kept = {}
    for j in range(N - 1, -1, -1):
        col = idx[:, j]
        v = np.matmul(S[col], v[:, :, None])[:, :, 0]
        V = v.reshape(R, D, D)
        v = (0.5 * (V + np.conj(np.swapaxes(V, -1, -2)))).reshape(R, D * D)
        t = np.real(v[:, ti].sum(axis=1))
        _check_traces(t, col, j)
        v = v / t[:, None]
        inc[:, j] = np.log(t)
        if j in keep:
            kept[j] = unvec(v, D)
    return inc, kept


def truncation_bounds(driver, idx, c_table=None):
    """Upper bounds ``prod_{j >= k} c(phi*_j)`` on ``d(Z_hat_k, Z_k)`` for every column ``k``.

    ``idx`` is ``(R, N)`` as in :func:`batch_backward`. The per-map
    coefficients come from :func:`table_contraction`.
    """
    c = table_contraction(driver, adjoint_form=True) if c_table is None else np.asarray(c_table)
    with np.errstate(divide="ignore"):
        lc = np.log(c)[np.asarray(idx)]
    tail = np.cumsum(lc[:, ::-1], axis=1)[:, ::-1]
    return np.exp(tail)

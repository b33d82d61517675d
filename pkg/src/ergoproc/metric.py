"""Projective metric on density matrices and contraction coefficients.

``m(A, B) = sup{lam : lam B <= A}`` and
``d(A, B) = (1 - m(A,B) m(B,A)) / (1 + m(A,B) m(B,A))``, which equals
``tanh(h/2)`` for the Hilbert projective metric ``h = -ln(m(A,B) m(B,A))``.

Contraction coefficients ``c(phi) = sup d(phi.A, phi.B)`` are estimated from
below by sampling pure-state pairs. For qubits a Bloch-sphere grid plus
quasi-Newton refinement gives an effectively exhaustive value.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from .errors import DestructiveImageError
from .maps import apply, is_strictly_positive, op_norm
from .matrices import hermitize, projector, random_unit_vectors

PD_TOL = 1e-12
DEFAULT_GRID = (24, 13)
SINGULAR_TOL = 64 * np.finfo(float).eps


@dataclass(frozen=True)
class MetricValue:
    d: float
    m_ab: float
    m_ba: float
    boundary_flag: bool

    def __float__(self):
        return self.d


def _smallest_eig(A):
    return float(np.linalg.eigvalsh(A)[0])


def m_coeff(A, B, tol=PD_TOL):
    """``sup{lam : lam B <= A}`` for PSD trace-one ``A``, ``B``.

    Positive definite ``B`` uses ``lambda_min(B^{-1/2} A B^{-1/2})``. Otherwise
    the value is 0 unless ``supp B`` lies inside ``supp A``, in which case the
    problem is solved on ``supp A``.
    """
    A = hermitize(np.asarray(A, dtype=complex))
    B = hermitize(np.asarray(B, dtype=complex))
    if _smallest_eig(B) > tol:
        L = np.linalg.cholesky(B)
        M = np.linalg.solve(L, np.linalg.solve(L, A).conj().T).conj().T
        return max(_smallest_eig(hermitize(M)), 0.0)
    wA, VA = np.linalg.eigh(A)
    keep = wA > tol
    if not keep.any():
        return 0.0
    outside = VA[:, ~keep]
    if outside.size and np.real(np.trace(outside.conj().T @ B @ outside)) > tol:
        return 0.0
    Vr = VA[:, keep]
    s = 1.0 / np.sqrt(wA[keep])
    Br = (Vr.conj().T @ B @ Vr) * s[:, None] * s[None, :]
    top = float(np.linalg.eigvalsh(hermitize(Br))[-1])
    return 1.0 / top if top > 0 else 0.0


def dist(A, B, tol=PD_TOL):
    """Projective distance between two states, with the two m coefficients."""
    A = hermitize(np.asarray(A, dtype=complex))
    B = hermitize(np.asarray(B, dtype=complex))
    pa = _smallest_eig(A) > tol
    pb = _smallest_eig(B) > tol
    m_ab = m_coeff(A, B, tol)
    m_ba = m_coeff(B, A, tol)
    if pa != pb:
        return MetricValue(1.0, m_ab, m_ba, True)
    p = m_ab * m_ba
    d = min(max((1.0 - p) / (1.0 + p), 0.0), 1.0)
    return MetricValue(d, m_ab, m_ba, False)


def hilbert_metric(A, B, tol=PD_TOL):
    """``-ln(m(A,B) m(B,A))``; ``inf`` when either coefficient vanishes."""
    m_ab = m_coeff(A, B, tol)
    m_ba = m_coeff(B, A, tol)
    if m_ab <= 0 or m_ba <= 0:
        return float("inf")
    return max(-np.log(m_ab * m_ba), 0.0)


# --- qubit closed forms -------------------------------------------------------

PAULI = np.array(
    [[[1, 0], [0, 1]], [[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]], dtype=complex
)


def pauli_coords(A):
    """Real coordinates ``a`` with ``A = sum_mu a_mu sigma_mu`` (stacks allowed)."""
    return 0.5 * np.real(np.einsum("mba,...ab->...m", PAULI, np.asarray(A)))


def pauli_transfer(phi):
    """4x4 real matrix ``T`` with ``coords(phi(X)) = T @ coords(X)``."""
    return pauli_coords(apply(phi, PAULI)).T


def qubit_distance(a, b):
    """Projective distance between qubit PSD matrices given by Pauli coordinates.

    Uses ``d^2 = (|a0 b - b0 a|^2 - |a x b|^2) / (a0 b0 - a.b)^2``, which is
    scale invariant and keeps precision when the two states nearly coincide.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a0, av = a[..., :1], a[..., 1:]
    b0, bv = b[..., :1], b[..., 1:]
    w = a0 * bv - b0 * av
    c1 = av[..., 1] * bv[..., 2] - av[..., 2] * bv[..., 1]
    c2 = av[..., 2] * bv[..., 0] - av[..., 0] * bv[..., 2]
    c3 = av[..., 0] * bv[..., 1] - av[..., 1] * bv[..., 0]
    num = np.sum(w * w, axis=-1) - (c1 * c1 + c2 * c2 + c3 * c3)
    den = (a[..., 0] * b[..., 0] - np.sum(av * bv, axis=-1)) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        d2 = np.where(den > 0, np.maximum(num, 0.0) / np.where(den > 0, den, 1.0), 0.0)
    return np.clip(np.sqrt(d2), 0.0, 1.0)


def bloch_vector_state(theta, phi):
    """Unit vector in C^2 with Bloch angles ``(theta, phi)``."""
    return np.array([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)])


def _bloch_coords(theta, phi):
    st = np.sin(theta)
    return np.stack(
        [np.full_like(theta, 0.5), 0.5 * st * np.cos(phi), 0.5 * st * np.sin(phi), 0.5 * np.cos(theta)],
        axis=-1,
    )


@dataclass(frozen=True)
class ContractionEstimate:
    """Lower estimate of ``c(phi)``; ``attained_at`` holds the pure-state pair."""

    lower: float
    pairs_sampled: int
    refine_steps: int
    attained_at: Optional[tuple]
    exhaustive: bool


def _check_non_destructive(phi, tol):
    w, V = np.linalg.eigh(phi.trace_weight)
    if w[0] <= tol * max(w[-1], 1e-300):
        raise DestructiveImageError(
            f"map {phi.label!r} annihilates a pure state (tr phi(P) = {w[0]:.3e})",
            witness=projector(V[:, 0]),
        )


def contraction_coeff(phi, n_pairs=400, n_refine=50, grid=None, seed=0, tol=1e-13):
    """Lower estimate of the contraction coefficient of ``phi``.

    For ``D = 2`` (unless ``grid=False``) all pairs of a Bloch-sphere grid
    (``grid`` = ``(n_azimuth, n_polar)``, default 24 x 13, poles included) are scored in closed
    form and the best candidate basins are refined by BFGS over the four Bloch
    angles; the result is flagged ``exhaustive``. Otherwise ``n_pairs`` random
    pure pairs are scored and the best one is improved by ``n_refine``
    stochastic ascent rounds.
    """
    _check_non_destructive(phi, tol)
    if phi.dim == 2 and grid is not False:
        return _qubit_contraction(phi, DEFAULT_GRID if grid in (None, True) else tuple(grid), max(n_refine, 30))
    return _sampled_contraction(phi, n_pairs, n_refine, seed)


def _qubit_contraction(phi, grid, n_refine, n_starts=3):
    T = pauli_transfer(phi)
    T = T / np.max(np.abs(T))
    special = _degenerate_contraction(phi)
    if special is not None:
        return special
    n_az, n_pol = grid
    theta = np.linspace(0.0, np.pi, n_pol)
    az = np.arange(n_az) * 2 * np.pi / n_az
    TH, AZ = np.meshgrid(theta, az, indexing="ij")
    TH, AZ = TH.ravel(), AZ.ravel()
    imgs = _bloch_coords(TH, AZ) @ T.T
    N = len(imgs)
    best_vals = np.empty(N)
    best_cols = np.empty(N, dtype=int)
    chunk = max(1, 1_000_000 // N)
    for i in range(0, N, chunk):
        D = qubit_distance(imgs[i : i + chunk, None, :], imgs[None, :, :])
        best_cols[i : i + chunk] = np.argmax(D, axis=1)
        best_vals[i : i + chunk] = D[np.arange(D.shape[0]), best_cols[i : i + chunk]]
    order = np.argsort(-best_vals)
    starts = []
    for i in order:
        j = best_cols[i]
        cand = np.array([TH[i], AZ[i], TH[j], AZ[j]])
        if all(np.linalg.norm(cand - s) > 0.3 for s in starts):
            starts.append(cand)
        if len(starts) >= n_starts:
            break
    Tl = T.tolist()

    def score(x):
        return _qubit_pair_score(Tl, x[0], x[1], x[2], x[3])

    best_x, best_d = starts[0], score(starts[0])
    steps = 0
    for x0 in starts:
        d0 = score(x0)
        # log d is better scaled than d near both ends of [0, 1]
        res = minimize(
            lambda x: -np.log(max(score(x), 1e-300)),
            x0,
            method="BFGS",
            options={"maxiter": n_refine, "gtol": 1e-13},
        )
        steps += int(res.nit)
        d1 = score(res.x)
        cand_x, cand_d = (res.x, d1) if d1 > d0 else (x0, d0)
        if cand_d > best_d:
            best_x, best_d = cand_x, cand_d
    u = bloch_vector_state(best_x[0], best_x[1])
    v = bloch_vector_state(best_x[2], best_x[3])
    return ContractionEstimate(best_d, N * N, steps, (u, v), True)


def _qubit_pair_score(T, t1, p1, t2, p2):
    s1, s2 = math.sin(t1), math.sin(t2)
    x = (1.0, s1 * math.cos(p1), s1 * math.sin(p1), math.cos(t1))
    y = (1.0, s2 * math.cos(p2), s2 * math.sin(p2), math.cos(t2))
    a = [r[0] * x[0] + r[1] * x[1] + r[2] * x[2] + r[3] * x[3] for r in T]
    b = [r[0] * y[0] + r[1] * y[1] + r[2] * y[2] + r[3] * y[3] for r in T]
    w1 = a[0] * b[1] - b[0] * a[1]
    w2 = a[0] * b[2] - b[0] * a[2]
    w3 = a[0] * b[3] - b[0] * a[3]
    c1 = a[2] * b[3] - a[3] * b[2]
    c2 = a[3] * b[1] - a[1] * b[3]
    c3 = a[1] * b[2] - a[2] * b[1]
    num = w1 * w1 + w2 * w2 + w3 * w3 - (c1 * c1 + c2 * c2 + c3 * c3)
    den = a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3]
    den *= den
    if den <= 0.0:
        return 0.0
    return min(math.sqrt(max(num, 0.0) / den), 1.0)


def _degenerate_contraction(phi):
    """Exact value when ``phi`` is not strictly positive, else ``None``.

    If ``phi(I)`` is singular every image shares its range and ``c = 0`` (for
    qubits); otherwise a state with singular image and one with definite image
    exist, so ``c = 1``.
    """
    D = phi.dim
    img_I = hermitize(apply(phi, np.eye(D, dtype=complex)))
    w, V = np.linalg.eigh(img_I)
    # singular only at rounding level; merely ill-conditioned images keep c = 1
    if w[0] <= SINGULAR_TOL * w[-1]:
        if D == 2:
            e = np.eye(D, dtype=complex)
            return ContractionEstimate(0.0, 0, 0, (e[0], e[1]), True)
        return None
    cert = is_strictly_positive(phi, n_samples=64, n_refine=50, tol=PD_TOL)
    if not cert.no:
        return None
    u = cert.witness[0]
    # a pure state with definite image: the best basis or Fourier vector
    cands = np.concatenate([np.eye(D, dtype=complex), np.fft.fft(np.eye(D)) / np.sqrt(D)])
    mins = np.linalg.eigvalsh(hermitize(apply(phi, projector(cands))))[:, 0]
    k = int(np.argmax(mins))
    if mins[k] <= PD_TOL * w[-1]:
        return None
    return ContractionEstimate(1.0, 0, 0, (u, cands[k]), D == 2)


def pairwise_distance_pd(A, B):
    """Projective distances between stacks of positive definite matrices."""
    L = np.linalg.cholesky(B)
    M = np.linalg.solve(L, A)
    M = np.linalg.solve(L, np.conj(np.swapaxes(M, -1, -2)))
    w = np.linalg.eigvalsh(hermitize(M))
    lo, hi = w[..., 0], w[..., -1]
    return np.clip((hi - lo) / (hi + lo), 0.0, 1.0)


def _images(phi, U):
    Y = hermitize(apply(phi, projector(U)))
    tr = np.real(np.trace(Y, axis1=-2, axis2=-1))
    return Y / tr[..., None, None]


def _pair_distances(phi, U, V):
    A, B = _images(phi, U), _images(phi, V)
    lam_a = np.linalg.eigvalsh(A)[:, 0]
    lam_b = np.linalg.eigvalsh(B)[:, 0]
    pd_a, pd_b = lam_a > PD_TOL, lam_b > PD_TOL
    out = np.ones(len(U))
    both = pd_a & pd_b
    if both.any():
        out[both] = pairwise_distance_pd(A[both], B[both])
    for i in np.flatnonzero(~pd_a & ~pd_b):
        out[i] = dist(A[i], B[i]).d
    return out


def _sampled_contraction(phi, n_pairs, n_refine, seed, n_proposals=16):
    special = _degenerate_contraction(phi)
    if special is not None:
        return special
    rng = np.random.default_rng(seed)
    D = phi.dim
    U = random_unit_vectors(rng, D, n_pairs)
    V = random_unit_vectors(rng, D, n_pairs)
    d = _pair_distances(phi, U, V)
    k = int(np.argmax(d))
    u, v, best = U[k], V[k], float(d[k])
    step = 0.3
    for _ in range(n_refine):
        if best >= 1.0 or step < 1e-8:
            break
        du = random_unit_vectors(rng, D, n_proposals) * step
        dv = random_unit_vectors(rng, D, n_proposals) * step
        Up, Vp = u + du, v + dv
        Up /= np.linalg.norm(Up, axis=1, keepdims=True)
        Vp /= np.linalg.norm(Vp, axis=1, keepdims=True)
        dp = _pair_distances(phi, Up, Vp)
        j = int(np.argmax(dp))
        if dp[j] > best:
            u, v, best = Up[j], Vp[j], float(dp[j])
        else:
            step *= 0.5
    return ContractionEstimate(best, n_pairs, n_refine, (u, v), False)


def witness_distance(phi, u, v):
    """``d(phi.P_u, phi.P_v)`` via the general metric, for auditing estimates."""
    A = _images(phi, np.asarray(u)[None])[0]
    B = _images(phi, np.asarray(v)[None])[0]
    return dist(A, B).d


def projective_action(phi, X, tol=1e-14):
    """``phi(X) / tr phi(X)``; raises on annihilated states."""
    Y = hermitize(apply(phi, X))
    t = float(np.real(np.trace(Y)))
    if not t > tol * max(op_norm(phi), 1e-300):
        raise DestructiveImageError(f"tr phi(X) = {t:.3e}", witness=X)
    return Y / t

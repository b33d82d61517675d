"""Positive linear maps on D x D matrices.

A :class:`PositiveMap` holds either a Kraus family ``{K_i}`` acting as
``X -> sum_i K_i X K_i*`` or a D^2 x D^2 superoperator acting on column-major
vectorised matrices. Kraus families are completely positive by construction;
superoperators are taken on trust (the caller asserts positivity).
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Optional

import numpy as np

from .errors import ConvergenceError, UsageError
from .matrices import (
    as_matrix,
    hermitize,
    projector,
    random_unit_vectors,
    unvec,
    vec,
)

CERTIFIED_YES = "certified_yes"
CERTIFIED_NO = "certified_no"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True, eq=False)
class PositiveMap:
    """A positive map in Kraus or superoperator form.

    Exactly one of ``kraus`` (array ``(r, D, D)``) and ``superop`` (array
    ``(D^2, D^2)``) is set. ``label`` is free text used in reports.
    """

    dim: int
    kraus: Optional[np.ndarray] = None
    superop: Optional[np.ndarray] = None
    label: str = ""
    tp_tol: float = field(default=1e-12, repr=False)

    def __post_init__(self):
        if (self.kraus is None) == (self.superop is None):
            raise UsageError("give exactly one of kraus= or superop=")
        if self.dim < 2:
            raise UsageError("dimension must be at least 2")
        D = self.dim
        if self.kraus is not None:
            K = np.asarray(self.kraus, dtype=complex)
            if K.ndim == 2:
                K = K[None]
            if K.ndim != 3 or K.shape[1:] != (D, D):
                raise UsageError(f"Kraus operators must have shape (r, {D}, {D}), got {K.shape}")
            if not 1 <= K.shape[0] <= D * D:
                raise UsageError(f"need 1 <= #Kraus <= {D * D}, got {K.shape[0]}")
            object.__setattr__(self, "kraus", K)
        else:
            S = np.asarray(self.superop, dtype=complex)
            if S.shape != (D * D, D * D):
                raise UsageError(f"superoperator must be {D * D}x{D * D}, got {S.shape}")
            object.__setattr__(self, "superop", S)

    @property
    def is_kraus(self):
        return self.kraus is not None

    @cached_property
    def matrix(self):
        """The superoperator matrix acting on column-major ``vec(X)``."""
        if self.superop is not None:
            return self.superop
        # vec(K X K*) = (conj(K) kron K) vec(X) for column-major vec
        return np.einsum("kij,kab->iajb", self.kraus.conj(), self.kraus).reshape(
            self.dim**2, self.dim**2
        )

    @cached_property
    def trace_weight(self):
        """phi*(I): the matrix W with tr phi(X) = <W, X>."""
        return hermitize(apply(adjoint(self), np.eye(self.dim, dtype=complex)))

    @cached_property
    def trace_preserving(self):
        return bool(np.max(np.abs(self.trace_weight - np.eye(self.dim))) <= self.tp_tol)

    def __call__(self, X):
        return apply(self, X)

    def __repr__(self):
        form = f"kraus[{self.kraus.shape[0]}]" if self.is_kraus else "superop"
        return f"PositiveMap(dim={self.dim}, {form}, label={self.label!r})"


def apply(phi, X):
    """Apply ``phi`` to a matrix or a stack of matrices ``(..., D, D)``."""
    X = np.asarray(X, dtype=complex)
    if X.shape[-2:] != (phi.dim, phi.dim):
        raise UsageError(f"dimension mismatch: map on {phi.dim}, matrix {X.shape[-2:]}")
    if phi.kraus is not None:
        K = phi.kraus
        return np.einsum("kab,...bc,kdc->...ad", K, X, K.conj())
    return unvec(vec(X) @ phi.superop.T, phi.dim)


def adjoint(phi):
    """The Hilbert-Schmidt adjoint: Kraus ``K_i -> K_i*``, superoperator ``S -> S^H``."""
    label = phi.label[:-1] if phi.label.endswith("*") else (phi.label + "*" if phi.label else "")
    if phi.kraus is not None:
        return PositiveMap(phi.dim, kraus=np.conj(np.swapaxes(phi.kraus, -1, -2)), label=label)
    return PositiveMap(phi.dim, superop=phi.superop.conj().T, label=label)


def compose(phi, psi):
    """``phi o psi``; Kraus products while at most D^2 operators, else superoperator."""
    if phi.dim != psi.dim:
        raise UsageError(f"dimension mismatch: {phi.dim} vs {psi.dim}")
    label = f"{phi.label}o{psi.label}" if phi.label or psi.label else ""
    D = phi.dim
    if phi.is_kraus and psi.is_kraus and phi.kraus.shape[0] * psi.kraus.shape[0] <= D * D:
        K = np.einsum("iab,jbc->ijac", phi.kraus, psi.kraus).reshape(-1, D, D)
        return PositiveMap(D, kraus=K, label=label)
    return PositiveMap(D, superop=phi.matrix @ psi.matrix, label=label)


def scaled(phi, c, label=None):
    """The map ``c * phi`` for ``c > 0`` (Kraus operators scale by sqrt(c))."""
    if not c > 0:
        raise UsageError("scale must be positive")
    label = label if label is not None else f"{c:g}*{phi.label}"
    if phi.is_kraus:
        return PositiveMap(phi.dim, kraus=np.sqrt(c) * phi.kraus, label=label)
    return PositiveMap(phi.dim, superop=c * phi.superop, label=label)


def identity_map(dim=2):
    return PositiveMap(dim, kraus=np.eye(dim, dtype=complex)[None], label="identity")


def choi_matrix(phi):
    """Choi matrix sum_ij E_ij (x) phi(E_ij), indexed ``(i*D + a, j*D + b)``."""
    D = phi.dim
    E = np.zeros((D, D, D, D), dtype=complex)
    for i in range(D):
        for j in range(D):
            E[i, j, i, j] = 1.0
    images = apply(phi, E)  # (i, j, a, b)
    return images.transpose(0, 2, 1, 3).reshape(D * D, D * D)


def v_of(phi):
    """inf of ||phi(X)||_1 over states, i.e. lambda_min(phi*(I)) for positive phi."""
    return float(np.linalg.eigvalsh(phi.trace_weight)[0])


def op_norm(phi):
    """Trace-norm operator norm of a positive map, lambda_max(phi*(I))."""
    return float(np.linalg.eigvalsh(phi.trace_weight)[-1])


@dataclass(frozen=True)
class PositivityCertificate:
    """Outcome of a sampled strict-positivity test.

    ``min_value`` is the smallest ``<v, phi(uu*) v>`` found, divided by
    ``op_norm(phi)`` so the threshold is scale free. ``witness`` is the
    minimising pair ``(u, v)``. ``choi_min`` is the normalised smallest Choi
    eigenvalue; a positive value proves strict positivity outright.
    """

    verdict: str
    min_value: float
    witness: Optional[tuple]
    samples_used: int
    seed: int
    choi_min: float
    tol: float

    @property
    def yes(self):
        return self.verdict == CERTIFIED_YES

    @property
    def no(self):
        return self.verdict == CERTIFIED_NO


def bilinear_value(phi, u, v):
    """<v, phi(uu*) v> / op_norm(phi), the quantity a certificate minimises."""
    Y = apply(phi, projector(u))
    v = np.asarray(v, dtype=complex)
    v = v / np.linalg.norm(v)
    return float(np.real(np.vdot(v, Y @ v))) / op_norm(phi)


def is_strictly_positive(phi, n_samples=2000, n_refine=50, tol=1e-9, seed=0):
    """Randomised certificate for ``phi(S_D)`` lying in the positive definite cone.

    Samples Haar unit vectors ``u`` (plus the computational basis), takes the
    exact minimum over ``v`` as the bottom eigenvalue of ``phi(uu*)``, then
    alternates ``u``/``v`` bottom-eigenvector updates on the best candidate.
    """
    if n_samples < 1:
        raise UsageError("n_samples must be >= 1")
    D = phi.dim
    scale = op_norm(phi)
    if not scale > 0:
        return PositivityCertificate(CERTIFIED_NO, 0.0, (np.eye(D)[0], np.eye(D)[0]), 0, seed, 0.0, tol)
    rng = np.random.default_rng(seed)
    U = np.concatenate([np.eye(D, dtype=complex), random_unit_vectors(rng, D, n_samples)])
    images = hermitize(apply(phi, projector(U)))
    w, V = np.linalg.eigh(images)
    best = int(np.argmin(w[:, 0]))
    u, v, val = U[best], V[best, :, 0], w[best, 0]
    phi_star = adjoint(phi)
    for _ in range(n_refine):
        wu, Vu = np.linalg.eigh(hermitize(apply(phi_star, projector(v))))
        u_new = Vu[:, 0]
        wv, Vv = np.linalg.eigh(hermitize(apply(phi, projector(u_new))))
        if wv[0] < val - 1e-15 * scale:
            u, v, val = u_new, Vv[:, 0], wv[0]
        else:
            break
    min_value = float(val) / scale
    choi_min = float(np.linalg.eigvalsh(hermitize(choi_matrix(phi)))[0]) / scale
    if min_value <= tol:
        verdict = CERTIFIED_NO
    elif choi_min > tol or min_value > 10 * tol:
        verdict = CERTIFIED_YES
    else:
        verdict = INCONCLUSIVE
    return PositivityCertificate(verdict, min_value, (u, v), len(U), seed, choi_min, tol)


def is_irreducible(phi, tol=1e-9, n_samples=2000, n_refine=50, seed=0):
    """Strict-positivity certificate for ``(id + phi)^(D-1)``."""
    D = phi.dim
    step = np.eye(D * D, dtype=complex) + phi.matrix / max(op_norm(phi), 1e-300)
    power = np.linalg.matrix_power(step, D - 1)
    return is_strictly_positive(
        PositiveMap(D, superop=power, label=f"(id+{phi.label})^{D - 1}"),
        n_samples=n_samples,
        n_refine=n_refine,
        tol=tol,
        seed=seed,
    )


class PerronResult(NamedTuple):
    eigenvalue: float
    state: np.ndarray
    iterations: int
    residual: float


def perron_right(phi, tol=1e-12, max_iter=100_000):
    """Perron-Frobenius eigenvalue and trace-one eigenmatrix by power iteration.

    Iterates the projective action from ``I/D``. Stops once the relative
    eigen-residual ``||phi(R) - Lambda R||_1 / Lambda`` is at most ``tol``.
    """
    from .metric import dist  # metric imports maps

    D = phi.dim
    S = phi.matrix
    diag_idx = np.arange(D) * (D + 1)
    x = vec(np.eye(D, dtype=complex) / D)
    residual = np.inf
    for it in range(1, max_iter + 1):
        y = S @ x
        lam = float(np.real(y[diag_idx].sum()))
        if not lam > 0:
            raise ConvergenceError("power iteration hit a zero-trace image", iterations=it)
        X = hermitize(unvec(x, D))
        residual = _tn(unvec(y, D) - lam * X) / lam
        x_new = vec(hermitize(unvec(y / lam, D)))
        if residual <= tol or (it % 16 == 0 and dist(X, unvec(x_new, D)).d <= tol):
            R = hermitize(unvec(x_new, D))
            img = unvec(S @ vec(R), D)
            lam = float(np.real(np.trace(img)))
            residual = _tn(img - lam * R) / lam
            if residual <= 10 * tol:
                return PerronResult(lam, R, it, residual)
        x = x_new
    raise ConvergenceError(
        f"power iteration did not converge in {max_iter} steps", residual=residual, iterations=max_iter
    )


def _tn(A):
    return float(np.sum(np.abs(np.linalg.eigvalsh(hermitize(A)))))


def perron_left(phi, tol=1e-12, max_iter=100_000):
    return perron_right(adjoint(phi), tol=tol, max_iter=max_iter)


def random_kraus_map(rng, dim, rank=None, trace_preserving=False, label="random"):
    """Ginibre Kraus family; optionally rescaled to a channel."""
    rank = dim * dim if rank is None else rank
    G = (rng.standard_normal((rank * dim, dim)) + 1j * rng.standard_normal((rank * dim, dim))) / np.sqrt(2 * rank * dim)
    if trace_preserving:
        # orthonormalise columns: stacked Kraus operators form an isometry
        G, _ = np.linalg.qr(G)
    return PositiveMap(dim, kraus=G.reshape(rank, dim, dim), label=label)


def as_superop_stack(maps):
    """Stack the superoperator matrices of equal-dimension maps into ``(T, D^2, D^2)``."""
    dims = {m.dim for m in maps}
    if len(dims) != 1:
        raise UsageError(f"maps have mixed dimensions {sorted(dims)}")
    return np.stack([m.matrix for m in maps])


def check_hermiticity_preserving(phi, rng, trials=5, tol=1e-10):
    """Sampled check that ``phi`` maps Hermitian to Hermitian."""
    from .matrices import random_hermitian

    for _ in range(trials):
        Y = apply(phi, random_hermitian(rng, phi.dim))
        if np.sum(np.abs(np.linalg.svd(Y - Y.conj().T, compute_uv=False))) > tol * max(1.0, np.abs(Y).max()):
            return False
    return True


__all__ = [
    "PositiveMap",
    "PositivityCertificate",
    "PerronResult",
    "apply",
    "adjoint",
    "compose",
    "scaled",
    "identity_map",
    "choi_matrix",
    "v_of",
    "op_norm",
    "bilinear_value",
    "is_strictly_positive",
    "is_irreducible",
    "perron_right",
    "perron_left",
    "random_kraus_map",
    "as_superop_stack",
    "as_matrix",
]

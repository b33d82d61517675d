"""Small dense Hermitian linear algebra on D x D complex matrices.

Matrices are plain ``numpy`` complex128 arrays. The helpers here validate
shapes, keep outputs Hermitian, and provide the few random ensembles the rest
of the package samples from.
"""

import numpy as np

from .errors import ConvergenceError, DestructiveImageError, UsageError

HERMITIAN_TOL = 1e-12
PSD_TOL = 1e-10


def as_matrix(A, dim=None):
    """Return ``A`` as a square complex128 array, checking ``dim`` if given."""
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise UsageError(f"expected a square matrix, got shape {A.shape}")
    if dim is not None and A.shape[0] != dim:
        raise UsageError(f"dimension mismatch: expected {dim}, got {A.shape[0]}")
    return A


def as_hermitian(A, tol=HERMITIAN_TOL):
    """Validate ``A`` as a Hermitian matrix of dimension at least 2."""
    A = as_matrix(A)
    if A.shape[0] < 2:
        raise UsageError("dimension must be at least 2")
    if np.max(np.abs(A - A.conj().T)) > tol * max(1.0, np.max(np.abs(A))):
        raise UsageError("matrix is not Hermitian")
    return hermitize(A)


def hermitize(A):
    """Hermitian part of ``A`` (works on stacks of matrices)."""
    return 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))


def _check_same_dim(A, B):
    if A.shape != B.shape:
        raise UsageError(f"dimension mismatch: {A.shape} vs {B.shape}")


def hs_inner(A, B):
    """Hilbert-Schmidt inner product tr(A* B).

    Returned as a float when the imaginary part is below 1e-12 and both
    arguments are Hermitian, otherwise as a complex number.
    """
    A = as_matrix(A)
    B = as_matrix(B)
    _check_same_dim(A, B)
    val = complex(np.vdot(A, B))
    herm = np.allclose(A, A.conj().T, atol=HERMITIAN_TOL) and np.allclose(
        B, B.conj().T, atol=HERMITIAN_TOL
    )
    if herm and abs(val.imag) <= HERMITIAN_TOL * max(1.0, abs(val)):
        return val.real
    return val


def eigh(A, max_sweeps=None):
    """Ascending eigenvalues and orthonormal eigenvectors of a Hermitian matrix.

    Backed by LAPACK (``numpy.linalg.eigh``). The reconstruction residual is
    checked against 1e-11 (scaled by the matrix size); failures raise
    :class:`ConvergenceError` carrying the residual.
    """
    A = as_hermitian(A)
    try:
        w, V = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(
            f"eigensolver failed after {max_sweeps or 100 * A.shape[0]} sweeps: {exc}"
        ) from exc
    residual = trace_norm_general((V * w) @ V.conj().T - A)
    scale = max(1.0, np.max(np.abs(w)))
    if residual > 1e-11 * scale * A.shape[0]:
        raise ConvergenceError("eigendecomposition residual too large", residual=residual)
    return w, V


def eigvalsh(A):
    return np.linalg.eigvalsh(hermitize(np.asarray(A, dtype=complex)))


def trace_norm_general(A):
    """Trace norm of an arbitrary square matrix (sum of singular values)."""
    return float(np.sum(np.linalg.svd(np.asarray(A), compute_uv=False)))


def trace_norm(A):
    """Trace norm; for Hermitian input the sum of absolute eigenvalues."""
    A = as_matrix(A)
    if np.allclose(A, A.conj().T, atol=HERMITIAN_TOL):
        return float(np.sum(np.abs(eigvalsh(A))))
    return trace_norm_general(A)


def normalize_state(A, tol=1e-14):
    """Rescale a PSD matrix to unit trace.

    Raises :class:`DestructiveImageError` when the trace is at most ``tol``,
    which is how a map annihilating a state shows up downstream.
    """
    A = hermitize(as_matrix(A))
    t = float(np.real(np.trace(A)))
    if not t > tol:
        raise DestructiveImageError(f"trace {t:.3e} <= {tol:.1e}; state annihilated")
    return A / t


def is_density(A, psd_tol=PSD_TOL, trace_tol=1e-12):
    A = as_matrix(A)
    if not np.allclose(A, A.conj().T, atol=HERMITIAN_TOL):
        return False
    return abs(np.trace(A).real - 1.0) <= trace_tol and eigvalsh(A)[0] >= -psd_tol


def is_positive_definite(A, tol=1e-12):
    """True if the smallest eigenvalue exceeds ``tol`` times the trace."""
    A = as_matrix(A)
    return bool(eigvalsh(A)[0] > tol * max(abs(np.trace(A).real), 1e-300))


def vec(X):
    """Column-major vectorisation; accepts stacks ``(..., D, D)``."""
    X = np.asarray(X)
    return np.swapaxes(X, -1, -2).reshape(X.shape[:-2] + (-1,))


def unvec(v, dim):
    v = np.asarray(v)
    return np.swapaxes(v.reshape(v.shape[:-1] + (dim, dim)), -1, -2)


def projector(u):
    """Rank-one projector onto the (normalised) vector ``u``; stacks allowed."""
    u = np.asarray(u, dtype=complex)
    u = u / np.linalg.norm(u, axis=-1, keepdims=True)
    return u[..., :, None] * u[..., None, :].conj()


def random_unit_vectors(rng, dim, size=None):
    """Haar-distributed unit vectors in C^dim."""
    shape = (dim,) if size is None else (size, dim)
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return z / np.linalg.norm(z, axis=-1, keepdims=True)


def random_pure_state(rng, dim, size=None):
    return projector(random_unit_vectors(rng, dim, size))


def random_hermitian(rng, dim):
    G = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return hermitize(G)


def random_density(rng, dim, rank=None, size=None):
    """Random density matrix from the induced (Ginibre) measure."""
    rank = dim if rank is None else rank
    shape = (dim, rank) if size is None else (size, dim, rank)
    G = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    rho = G @ np.conj(np.swapaxes(G, -1, -2))
    tr = np.real(np.trace(rho, axis1=-2, axis2=-1))
    return hermitize(rho / tr[..., None, None])


def matrix_from_json(rows):
    """Parse a row-major nested list of ``[re, im]`` pairs (or plain reals)."""
    out = []
    for row in rows:
        out_row = []
        for entry in row:
            if isinstance(entry, (list, tuple)):
                if len(entry) != 2:
                    raise UsageError(f"complex entries must be [re, im] pairs, got {entry!r}")
                out_row.append(complex(float(entry[0]), float(entry[1])))
            else:
                out_row.append(complex(float(entry)))
        out.append(out_row)
    return as_matrix(np.array(out, dtype=complex))


def matrix_to_json(A):
    A = as_matrix(A)
    return [[[float(z.real), float(z.imag)] for z in row] for row in A]

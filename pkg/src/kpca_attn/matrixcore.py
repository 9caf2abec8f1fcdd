"""Dense float64 matrix primitives shared by every other module.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64. Every
public function validates its inputs through :func:`as_mat` (finite entries,
two dimensions) and returns freshly allocated arrays, so callers may share
inputs freely between threads.
"""

from __future__ import annotations

from pathlib import Path
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .errors import (
    AsymmetryError,
    ConvergenceError,
    MatrixFormatError,
    NonFiniteError,
    ShapeError,
)

#: Relative cutoff below which singular values are treated as zero in :func:`pinv`.
DEFAULT_RANK_TOL = 1e-10

#: Largest tolerated ``max |a_ij - a_ji|`` accepted by :func:`sym_eig`.
SYMMETRY_TOL = 1e-10


def as_mat(a, name="matrix"):
    """Return `a` as a finite 2-D float64 array (a copy).

    Parameters
    ----------
    a : array_like
        Anything ``numpy.asarray`` understands. 1-D input is rejected; use
        ``a[None, :]`` for a row.
    name : str
        Used in error messages.

    Raises
    ------
    ShapeError
        If `a` is not two-dimensional or has an empty axis.
    NonFiniteError
        If any entry is NaN or infinite.
    """
    arr = np.array(a, dtype=np.float64, copy=True)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ShapeError(f"{name} must have positive rows and cols, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} has non-finite entries")
    return arr


def as_vec(x, name="vector"):
    """Return `x` as a finite 1-D float64 array (a copy)."""
    arr = np.array(x, dtype=np.float64, copy=True)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} has non-finite entries")
    return arr


def matmul(a, b):
    """Matrix product ``a @ b`` with a shape check that names both operands."""
    a = as_mat(a, "a")
    b = as_mat(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}")
    return a @ b


def row_softmax(a):
    """Softmax over each row, stabilized by subtracting the row maximum.

    >>> row_softmax([[0.0, 0.0, 0.0]])
    array([[0.33333333, 0.33333333, 0.33333333]])
    """
    a = as_mat(a)
    z = a - a.max(axis=1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=1, keepdims=True)
    return z


def row_log_softmax(a):
    """Log of :func:`row_softmax`, computed without forming the softmax."""
    a = as_mat(a)
    m = a.max(axis=1, keepdims=True)
    return a - m - np.log(np.exp(a - m).sum(axis=1, keepdims=True))


def svd(a):
    """Thin singular value decomposition ``a = U @ diag(sigma) @ Vt``.

    Returns
    -------
    U : ndarray, shape (m, k)
    sigma : ndarray, shape (k,)
        Nonnegative, sorted in descending order.
    Vt : ndarray, shape (k, n)
        With ``k = min(m, n)``.

    Raises
    ------
    ConvergenceError
        If both the divide-and-conquer and the QR-iteration LAPACK drivers
        fail to converge.
    """
    a = as_mat(a)
    for driver in ("gesdd", "gesvd"):
        try:
            U, sigma, Vt = scipy.linalg.svd(a, full_matrices=False, lapack_driver=driver)
        except np.linalg.LinAlgError:
            continue
        return U, sigma, Vt
    raise ConvergenceError(
        f"SVD of a {a.shape[0]}x{a.shape[1]} matrix did not converge (gesdd and gesvd both failed)"
    )


def sym_eig(a):
    """Eigen-decomposition of a symmetric matrix, eigenvalues descending.

    The input is symmetrized as ``(a + a.T) / 2`` before solving, after
    checking that it was symmetric to within ``SYMMETRY_TOL``.

    Returns
    -------
    eigenvalues : ndarray, shape (n,)
    eigenvectors : ndarray, shape (n, n)
        Orthonormal columns; column ``d`` pairs with ``eigenvalues[d]``.
    """
    a = as_mat(a)
    if a.shape[0] != a.shape[1]:
        raise ShapeError(f"sym_eig needs a square matrix, got {a.shape[0]}x{a.shape[1]}")
    dev = np.max(np.abs(a - a.T))
    if dev > SYMMETRY_TOL:
        raise AsymmetryError(dev)
    w, v = np.linalg.eigh(0.5 * (a + a.T))
    return w[::-1].copy(), v[:, ::-1].copy()


def pinv(a, rank_tol=DEFAULT_RANK_TOL):
    """Moore-Penrose pseudoinverse via SVD.

    Singular values ``<= rank_tol * sigma_max`` are discarded.
    """
    if not rank_tol > 0:
        raise ValueError(f"rank_tol must be positive, got {rank_tol}")
    a = as_mat(a)
    U, sigma, Vt = svd(a)
    if sigma.size == 0 or sigma[0] == 0.0:
        return np.zeros((a.shape[1], a.shape[0]))
    keep = sigma > rank_tol * sigma[0]
    return (Vt[keep].T / sigma[keep]) @ U[:, keep].T


class Norms(NamedTuple):
    frobenius: float
    entrywise_l1: float
    nuclear: float


def norms(a):
    """Frobenius, entrywise l1 and nuclear norm of `a`."""
    a = as_mat(a)
    _, sigma, _ = svd(a)
    return Norms(
        frobenius=float(np.linalg.norm(a)),
        entrywise_l1=float(np.abs(a).sum()),
        nuclear=float(sigma.sum()),
    )


# -- CSV matrix format -------------------------------------------------------
#
# First non-comment line ``rows,cols``; then one line per row. Lines starting
# with ``#`` are provenance comments and are skipped on read.


def format_matrix_csv(a, comment=None):
    """Serialize `a` to the matrix CSV text format (17 significant digits)."""
    a = as_mat(a)
    lines = []
    if comment:
        lines.extend(f"# {c}" for c in comment.splitlines())
    lines.append(f"{a.shape[0]},{a.shape[1]}")
    lines.extend(",".join(format(float(x), ".17g") for x in row) for row in a)
    return "\n".join(lines) + "\n"


def write_matrix_csv(path, a, comment=None):
    Path(path).write_text(format_matrix_csv(a, comment), encoding="utf-8")


def parse_matrix_csv(text, path="<string>"):
    """Parse the matrix CSV text format; errors name `path` and the 1-based line."""
    lines = [
        (no, ln.strip())
        for no, ln in enumerate(text.splitlines(), start=1)
        if ln.strip() and not ln.lstrip().startswith("#")
    ]
    if not lines:
        raise MatrixFormatError(path, 1, "empty file")
    no, header = lines[0]
    parts = header.split(",")
    try:
        if len(parts) != 2:
            raise ValueError
        rows, cols = int(parts[0]), int(parts[1])
    except ValueError:
        raise MatrixFormatError(path, no, f"expected header 'rows,cols', got {header!r}") from None
    if rows <= 0 or cols <= 0:
        raise MatrixFormatError(path, no, f"non-positive shape {rows}x{cols}")
    body = lines[1:]
    if len(body) != rows:
        where = body[-1][0] + 1 if body else no + 1
        raise MatrixFormatError(path, where, f"expected {rows} rows, found {len(body)}")
    out = np.empty((rows, cols))
    for i, (no, ln) in enumerate(body):
        cells = ln.split(",")
        if len(cells) != cols:
            raise MatrixFormatError(path, no, f"expected {cols} entries, found {len(cells)}")
        try:
            out[i] = [float(c) for c in cells]
        except ValueError as exc:
            raise MatrixFormatError(path, no, str(exc)) from None
    if not np.all(np.isfinite(out)):
        raise MatrixFormatError(path, no, "non-finite entry")
    return out


def read_matrix_csv(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise MatrixFormatError(path, 0, f"cannot read file: {exc.strerror}") from None
    return parse_matrix_csv(text, path)

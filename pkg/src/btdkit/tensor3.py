"""Dense third-order tensor primitives: unfoldings, Kronecker / Khatri-Rao
products, Frobenius norms, and the on-disk tensor / matrix formats.

Conventions
-----------
A third-order tensor of shape ``(I, J, K)`` is a C-contiguous float64
:class:`numpy.ndarray`, so element ``(i, j, k)`` sits at linear offset
``(i*J + j)*K + k``.  The three mode unfoldings use the column orderings

* mode 1: ``I x (J*K)``, column index ``j*K + k``
* mode 2: ``J x (K*I)``, column index ``k*I + i``
* mode 3: ``K x (I*J)``, column index ``i*J + j``

which are exactly the orderings under which a rank-(L,L,1) block-term
model with factors ``A_r (I x L_r)``, ``B_r (J x L_r)``, ``C (K x R)``
satisfies::

    unfold(X, 1).T == khatri_rao_partitioned(B_blocks, c_columns) @ A.T
    unfold(X, 2).T == khatri_rao_partitioned(c_columns, A_blocks) @ B.T
    unfold(X, 3).T == [ (A_r (x)_c B_r) @ 1 ]_r @ C.T

Unfoldings are materialized copies, never views.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "as_tensor3",
    "as_matrix",
    "unfold",
    "fold",
    "kronecker",
    "khatri_rao_partitioned",
    "khatri_rao_columnwise",
    "frobenius_norm",
    "read_tensor",
    "write_tensor",
    "read_matrix",
    "write_matrix",
    "ParseError",
]


class ParseError(ValueError):
    """Malformed tensor/matrix file; ``offset`` is the failing byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def as_tensor3(values, dims=None) -> np.ndarray:
    """Validate and return a C-contiguous float64 tensor of shape (I, J, K).

    Raises ``ValueError`` on wrong dimensionality, non-positive dims,
    size mismatch against ``dims``, or non-finite entries.
    """
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if dims is not None:
        i, j, k = (int(d) for d in dims)
        if min(i, j, k) < 1:
            raise ValueError(f"tensor dims must be positive, got {(i, j, k)}")
        if arr.size != i * j * k:
            raise ValueError(f"expected {i * j * k} values for dims {(i, j, k)}, got {arr.size}")
        arr = arr.reshape(i, j, k)
    if arr.ndim != 3:
        raise ValueError(f"expected a third-order tensor, got ndim={arr.ndim}")
    if not np.isfinite(arr).all():
        raise ValueError("tensor contains non-finite entries")
    return arr


def as_matrix(values) -> np.ndarray:
    """Validate and return a C-contiguous float64 matrix."""
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a matrix, got ndim={arr.ndim}")
    if not np.isfinite(arr).all():
        raise ValueError("matrix contains non-finite entries")
    return arr


def unfold(tensor: np.ndarray, mode: int) -> np.ndarray:
    """Mode-``mode`` unfolding (a copy) under the module's column orderings."""
    i, j, k = tensor.shape
    if mode == 1:
        return tensor.reshape(i, j * k).copy()
    if mode == 2:
        return np.ascontiguousarray(tensor.transpose(1, 2, 0).reshape(j, k * i))
    if mode == 3:
        return np.ascontiguousarray(tensor.transpose(2, 0, 1).reshape(k, i * j))
    raise ValueError(f"mode must be 1, 2 or 3, got {mode}")


def fold(matrix: np.ndarray, mode: int, dims) -> np.ndarray:
    """Inverse of :func:`unfold`: ``fold(unfold(T, m), m, T.shape) == T``."""
    i, j, k = (int(d) for d in dims)
    expected = {1: (i, j * k), 2: (j, k * i), 3: (k, i * j)}.get(mode)
    if expected is None:
        raise ValueError(f"mode must be 1, 2 or 3, got {mode}")
    if matrix.shape != expected:
        raise ValueError(f"mode-{mode} unfolding of dims {(i, j, k)} has shape {expected}, got {matrix.shape}")
    if mode == 1:
        return matrix.reshape(i, j, k).copy()
    if mode == 2:
        return np.ascontiguousarray(matrix.reshape(j, k, i).transpose(2, 0, 1))
    return np.ascontiguousarray(matrix.reshape(k, i, j).transpose(1, 2, 0))


def kronecker(m: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Kronecker product: entry ((p*rowsN + q), (s*colsN + t)) = M[p,s]*N[q,t]."""
    return np.kron(m, n)


def khatri_rao_partitioned(m_blocks, n_blocks) -> np.ndarray:
    """Partition-wise Khatri-Rao product: blockwise Kronecker products
    concatenated horizontally.

    Block ``r`` of the result is ``kronecker(m_blocks[r], n_blocks[r])``;
    total columns are the sum of per-block column products.
    """
    if len(m_blocks) != len(n_blocks):
        raise ValueError(f"block count mismatch: {len(m_blocks)} vs {len(n_blocks)}")
    if len(m_blocks) == 0:
        raise ValueError("need at least one block")
    return np.hstack([np.kron(m, n) for m, n in zip(m_blocks, n_blocks)])


def khatri_rao_columnwise(m: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Column-wise Khatri-Rao product: column l = kron(M[:, l], N[:, l])."""
    if m.shape[1] != n.shape[1]:
        raise ValueError(f"column count mismatch: {m.shape[1]} vs {n.shape[1]}")
    p, cols = m.shape
    q = n.shape[0]
    return (m[:, None, :] * n[None, :, :]).reshape(p * q, cols)


def frobenius_norm(x: np.ndarray) -> float:
    """Frobenius norm of a matrix or tensor (sqrt of the sum of squares)."""
    return float(np.linalg.norm(np.asarray(x, dtype=np.float64).ravel()))


# ---------------------------------------------------------------------------
# File formats.
#
# "T3" tensor file: ASCII header line `T3 <I> <J> <K>\n` followed by I*J*K
# little-endian IEEE-754 doubles in the (i*J + j)*K + k element order.
# Small hand-made fixtures may instead use the ASCII triplet format: a
# `# dims I J K` header followed by `i j k value` lines (0-based indices,
# unlisted entries are zero).
# "M2" matrix file: ASCII header `M2 <rows> <cols>\n` followed by rows*cols
# little-endian doubles, row-major.
# ---------------------------------------------------------------------------

def write_tensor(path, tensor: np.ndarray) -> None:
    """Write a tensor in the binary T3 format."""
    tensor = as_tensor3(tensor)
    i, j, k = tensor.shape
    with open(path, "wb") as fh:
        fh.write(f"T3 {i} {j} {k}\n".encode("ascii"))
        fh.write(tensor.astype("<f8").tobytes())


def read_tensor(path) -> np.ndarray:
    """Read a tensor from a T3 or ASCII-triplet file."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] == b"T3":
        return _parse_t3(data)
    if data[:1] == b"#":
        return _parse_triplets(data)
    raise ParseError("unrecognized tensor file (expected 'T3' or '#' header)", 0)


def _parse_t3(data: bytes) -> np.ndarray:
    nl = data.find(b"\n")
    if nl < 0:
        raise ParseError("missing end of T3 header line", len(data))
    fields = data[:nl].split()
    if len(fields) != 4 or fields[0] != b"T3":
        raise ParseError("T3 header must be 'T3 <I> <J> <K>'", 0)
    try:
        i, j, k = (int(f) for f in fields[1:])
    except ValueError:
        raise ParseError("non-integer dimension in T3 header", 3) from None
    if min(i, j, k) < 1:
        raise ParseError(f"non-positive dims {(i, j, k)} in T3 header", 3)
    payload = data[nl + 1:]
    need = i * j * k * 8
    if len(payload) != need:
        raise ParseError(
            f"T3 payload has {len(payload)} bytes, expected {need}",
            nl + 1 + min(len(payload), need),
        )
    values = np.frombuffer(payload, dtype="<f8")
    return as_tensor3(values, (i, j, k))


def _parse_triplets(data: bytes) -> np.ndarray:
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError as exc:
        raise ParseError("triplet file is not ASCII", exc.start) from None
    dims = None
    tensor = None
    offset = 0
    for line in text.splitlines(keepends=True):
        stripped = line.strip()
        if stripped.startswith("#"):
            fields = stripped[1:].split()
            if fields[:1] == ["dims"]:
                if len(fields) != 4:
                    raise ParseError("dims header must be '# dims I J K'", offset)
                dims = tuple(int(f) for f in fields[1:])
                tensor = np.zeros(dims)
        elif stripped:
            if tensor is None:
                raise ParseError("triplet entry before '# dims I J K' header", offset)
            fields = stripped.split()
            if len(fields) != 4:
                raise ParseError("triplet line must be 'i j k value'", offset)
            try:
                i, j, k = int(fields[0]), int(fields[1]), int(fields[2])
                value = float(fields[3])
            except ValueError:
                raise ParseError("malformed triplet line", offset) from None
            if not (0 <= i < dims[0] and 0 <= j < dims[1] and 0 <= k < dims[2]):
                raise ParseError(f"index {(i, j, k)} out of bounds for dims {dims}", offset)
            tensor[i, j, k] = value
        offset += len(line)
    if tensor is None:
        raise ParseError("no '# dims I J K' header found", 0)
    return as_tensor3(tensor)


def write_matrix(path, matrix: np.ndarray) -> None:
    """Write a matrix in the binary M2 format."""
    matrix = as_matrix(matrix)
    r, c = matrix.shape
    with open(path, "wb") as fh:
        fh.write(f"M2 {r} {c}\n".encode("ascii"))
        fh.write(matrix.astype("<f8").tobytes())


def read_matrix(path) -> np.ndarray:
    """Read a matrix from an M2 file."""
    with open(path, "rb") as fh:
        data = fh.read()
    nl = data.find(b"\n")
    if nl < 0 or data[:2] != b"M2":
        raise ParseError("M2 header must be 'M2 <rows> <cols>'", 0)
    fields = data[:nl].split()
    if len(fields) != 3:
        raise ParseError("M2 header must be 'M2 <rows> <cols>'", 0)
    try:
        r, c = int(fields[1]), int(fields[2])
    except ValueError:
        raise ParseError("non-integer dimension in M2 header", 2) from None
    if r < 1 or c < 1:
        raise ParseError(f"non-positive matrix shape {(r, c)}", 2)
    payload = data[nl + 1:]
    need = r * c * 8
    if len(payload) != need:
        raise ParseError(
            f"M2 payload has {len(payload)} bytes, expected {need}",
            nl + 1 + min(len(payload), need),
        )
    return as_matrix(np.frombuffer(payload, dtype="<f8").reshape(r, c))

"""Extended-integer score matrices and the basic (min,+) machinery.

Matrices are 2-D numpy arrays of dtype int64.  The largest int64 value is
reserved as the infinity sentinel ``INF``: it is absorbing under addition
and the identity of ``min``.  Finite entries are validated to magnitude at
most 2**61 so that any two-term sum fits in int64; multi-term internal
combinations used by the block-product family impose the tighter
``MAX_BLOCK_MAGNITUDE`` bound.

Provides the cubic reference product ``naive_minplus`` (the oracle every
faster path is tested against), the value-decomposition product for
matrices with small entries, bounded-difference validation, padding, and
the plain-text matrix file format.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

INF: int = np.iinfo(np.int64).max
MAX_MAGNITUDE: int = 1 << 61
# block products form up to 8-term signed combinations of entries
MAX_BLOCK_MAGNITUDE: int = 1 << 59

# below this size the vectorised triple loop beats any decomposition
NAIVE_CUTOFF: int = 64
# value-pair budget above which the boolean decomposition loses to the
# vectorised scan (tuned with `bdmp bench`)
PAIR_BUDGET: int = 64

_CHUNK_ELEMS = 1 << 22


class FormatError(ValueError):
    """Malformed text input (matrix, sequence or grammar files)."""


class PreconditionError(ValueError):
    """An operation's documented precondition does not hold."""


class FiniteOverflowError(PreconditionError):
    """A finite entry exceeds the validated magnitude bound."""


class OracleMismatchError(RuntimeError):
    """A cross-check against an independent oracle failed (library bug)."""


class BDViolationError(PreconditionError):
    """An input fails a required bounded-difference or variation bound."""

    def __init__(self, message: str, witness=None):
        super().__init__(message if witness is None else f"{message}: {witness}")
        self.witness = witness


@dataclass(frozen=True)
class BDWitness:
    """Result of a bounded-difference check.

    ``width`` is the smallest cap for which the matrix is bounded-difference
    (None when an infinite entry makes every cap fail).  ``violation`` is the
    first offending adjacent pair in row-major scan order, as
    ``("row", i, j)`` for cells (i,j)-(i,j+1), ``("col", i, j)`` for
    (i,j)-(i+1,j), or ``("inf", i, j)`` for an infinite entry.
    """

    is_bd: bool
    width: int | None
    violation: tuple | None = None


def as_matrix(a, *, magnitude: int = MAX_MAGNITUDE) -> np.ndarray:
    """Coerce to a validated int64 score matrix."""
    m = (
        a
        if isinstance(a, np.ndarray) and a.dtype == np.int64
        else np.asarray(a, dtype=np.int64)
    )
    if m.ndim != 2:
        raise PreconditionError(f"expected a 2-D matrix, got ndim={m.ndim}")
    if m.size:
        mn = int(m.min())
        mx = int(m.max())
        bad = mn < -magnitude or (magnitude < mx < INF)
        if not bad and mx == INF:
            bad = bool(((m > magnitude) & (m != INF)).any())
        if bad:
            finite = m != INF
            flat = int(np.abs(np.where(finite, m, 0)).argmax())
            i, j = divmod(flat, m.shape[1])
            raise FiniteOverflowError(
                f"finite entry at ({i}, {j}) exceeds magnitude bound {magnitude}"
            )
    return m


def checked_add(x: int, y: int) -> int:
    """Add two score values; INF is absorbing, finite overflow is an error."""
    if x == INF or y == INF:
        return INF
    s = int(x) + int(y)
    if abs(s) > 2 * MAX_MAGNITUDE:
        raise FiniteOverflowError(f"sum {s} outside the representable range")
    return s


def minplus_identity(n: int) -> np.ndarray:
    """Identity of the (min,+) product: 0 diagonal, INF elsewhere."""
    m = np.full((n, n), INF, dtype=np.int64)
    np.fill_diagonal(m, 0)
    return m


def naive_minplus(a, b) -> np.ndarray:
    """Reference product C[i,j] = min_k a[i,k] + b[k,j].

    Exact for any mix of finite and infinite entries; an output entry is
    INF iff every summand over k is INF.  This is the oracle that every
    accelerated path in the package is compared against.
    """
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise PreconditionError(
            f"inner dimensions differ: {a.shape} vs {b.shape}"
        )
    return _minplus_scan(a, b)


def _minplus_scan(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """The vectorised reference scan on pre-validated inputs."""
    n, m = a.shape
    p = b.shape[1]
    out = np.full((n, p), INF, dtype=np.int64)
    if m == 0 or n == 0 or p == 0:
        return out
    # bound the (n, chunk, p) broadcast buffer
    chunk = max(1, min(m, _CHUNK_ELEMS // max(1, n * p)))
    for k0 in range(0, m, chunk):
        asub = a[:, k0 : k0 + chunk]
        bsub = b[k0 : k0 + chunk, :]
        amask = asub == INF
        bmask = bsub == INF
        sums = (
            np.where(amask, 0, asub)[:, :, None]
            + np.where(bmask, 0, bsub)[None, :, :]
        )
        np.copyto(
            sums, INF, where=amask[:, :, None] | bmask[None, :, :]
        )
        np.minimum(out, sums.min(axis=1), out=out)
    return out


def _pack_bool(mask: np.ndarray) -> np.ndarray:
    """Pack a boolean matrix row-wise into uint64 words."""
    r, c = mask.shape
    words = max(1, (c + 63) // 64)
    padded = np.zeros((r, words * 64), dtype=bool)
    padded[:, :c] = mask
    return np.packbits(padded, axis=1, bitorder="little").view(np.uint64)


def _unpack_bool(packed: np.ndarray, cols: int) -> np.ndarray:
    as_bytes = packed.view(np.uint8)
    bits = np.unpackbits(as_bytes, axis=1, bitorder="little")
    return bits[:, :cols].astype(bool)


def _packed_or_product(amask: np.ndarray, bpacked: np.ndarray) -> np.ndarray:
    """Boolean matrix product with the right factor packed into bitsets."""
    n, m = amask.shape
    words = bpacked.shape[1]
    out = np.zeros((n, words), dtype=np.uint64)
    if m == 0:
        return out
    chunk = max(1, min(m, _CHUNK_ELEMS // max(1, n * words)))
    for k0 in range(0, m, chunk):
        sel = np.where(
            amask[:, k0 : k0 + chunk, None], bpacked[None, k0 : k0 + chunk, :], 0
        )
        out |= np.bitwise_or.reduce(sel, axis=1)
    return out


def bool_matmul(amask: np.ndarray, bmask: np.ndarray) -> np.ndarray:
    """Exact boolean matrix product via the packed-bitset kernel."""
    return _unpack_bool(_packed_or_product(amask, _pack_bool(bmask)), bmask.shape[1])


def _minplus_by_values(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance product by per-value boolean decomposition.

    Enumerates the distinct finite values u of ``a`` and v of ``b`` in
    ascending u+v order; one packed boolean product per pair decides which
    output cells first become achievable at that sum.  Exact, and fast
    exactly when the matrices carry few distinct values.
    """
    n, m = a.shape
    p = b.shape[1]
    out = np.full((n, p), INF, dtype=np.int64)
    if m == 0 or n == 0 or p == 0:
        return out
    vals_a = np.unique(a[a != INF])
    vals_b = np.unique(b[b != INF])
    if len(vals_a) == 0 or len(vals_b) == 0:
        return out
    packed_b = {int(v): _pack_bool(b == v) for v in vals_b}
    masks_a = {int(u): a == u for u in vals_a}
    # cells with no finite path stay INF and must not keep the scan alive
    finite_b_packed = _pack_bool(b != INF)
    remaining = _unpack_bool(
        _packed_or_product(a != INF, finite_b_packed), p
    )
    pairs = sorted(
        ((int(u), int(v)) for u in vals_a for v in vals_b),
        key=lambda uv: uv[0] + uv[1],
    )
    for u, v in pairs:
        if not remaining.any():
            break
        prod = _unpack_bool(_packed_or_product(masks_a[u], packed_b[v]), p)
        hit = prod & remaining
        if hit.any():
            out[hit] = u + v
            remaining &= ~prod
    return out


def small_entry_minplus(a, b, bound: int, strategy: str = "auto") -> np.ndarray:
    """Distance product for matrices whose finite entries lie in [-bound, bound].

    Same output contract as ``naive_minplus``.  ``strategy`` picks the
    implementation: "naive" (vectorised scan), "decompose" (per-value
    boolean decomposition) or "auto", which uses the scan below the size
    cutoff and otherwise the decomposition whenever the value-pair count
    fits the benchmark-tuned budget.
    """
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise PreconditionError(
            f"inner dimensions differ: {a.shape} vs {b.shape}"
        )
    if bound < 0:
        raise PreconditionError("bound must be non-negative")
    for name, m in (("a", a), ("b", b)):
        finite = m != INF
        if finite.any() and int(np.abs(m[finite]).max()) > bound:
            flat = int(np.abs(np.where(finite, m, 0)).argmax())
            i, j = divmod(flat, m.shape[1])
            raise PreconditionError(
                f"entry of {name} at ({i}, {j}) outside [-{bound}, {bound}]"
            )
    if strategy == "auto":
        if max(a.shape[0], a.shape[1], b.shape[1]) <= NAIVE_CUTOFF:
            strategy = "naive"
        else:
            n_vals = len(np.unique(a[a != INF])) * len(np.unique(b[b != INF]))
            strategy = "decompose" if n_vals <= PAIR_BUDGET else "naive"
    if strategy == "naive":
        return naive_minplus(a, b)
    if strategy == "decompose":
        return _minplus_by_values(a, b)
    raise ValueError(f"unknown strategy {strategy!r}")


def check_bd(a, cap: int) -> BDWitness:
    """Check the bounded-difference property with width cap ``cap``.

    A matrix qualifies iff every entry is finite and all row- and
    column-adjacent pairs differ by at most ``cap``.  The scan visits cells
    in row-major order, checking each cell's right neighbour before its
    down neighbour, and reports the first violation.
    """
    a = as_matrix(a)
    rows, cols = a.shape
    infs = a == INF
    if infs.any():
        flat = int(infs.argmax())
        i, j = divmod(flat, cols)
        return BDWitness(False, None, ("inf", i, j))
    if rows == 0 or cols == 0:
        return BDWitness(True, 0, None)
    rowdiff = np.abs(np.diff(a, axis=1))
    coldiff = np.abs(np.diff(a, axis=0))
    width = 0
    if rowdiff.size:
        width = max(width, int(rowdiff.max()))
    if coldiff.size:
        width = max(width, int(coldiff.max()))
    if width <= cap:
        return BDWitness(True, width, None)
    # rank each candidate pair by the scan position of its first cell;
    # at equal cells the right pair precedes the down pair
    best = None
    if rowdiff.size:
        viol = rowdiff > cap
        if viol.any():
            flat = int(np.flatnonzero(viol.ravel())[0])
            i, j = divmod(flat, cols - 1)
            best = (i * cols * 2 + j * 2, ("row", i, j))
    if coldiff.size:
        viol = coldiff > cap
        if viol.any():
            flat = int(np.flatnonzero(viol.ravel())[0])
            i, j = divmod(flat, cols)
            cand = (i * cols * 2 + j * 2 + 1, ("col", i, j))
            if best is None or cand[0] < best[0]:
                best = cand
    assert best is not None
    return BDWitness(False, width, best[1])


@dataclass(frozen=True)
class PadRecord:
    """Original dimensions before replicate padding."""

    orig_rows: int
    orig_cols: int
    rows_added: int
    cols_added: int

    @property
    def padded(self) -> bool:
        return self.rows_added > 0 or self.cols_added > 0


def pad_to_multiple(a, delta: int) -> tuple[np.ndarray, PadRecord]:
    """Replicate the last row/column until both dimensions divide by delta.

    Replication preserves any bounded-difference width, and duplicated
    inner indices cannot change a (min,+) product, so cropping the product
    of padded inputs recovers the product of the originals.
    """
    a = as_matrix(a)
    if delta < 1:
        raise PreconditionError("delta must be at least 1")
    rows, cols = a.shape
    pr = (-rows) % delta
    pc = (-cols) % delta
    rec = PadRecord(rows, cols, pr, pc)
    if pr == 0 and pc == 0:
        return a, rec
    if rows == 0 or cols == 0:
        raise PreconditionError("cannot replicate-pad an empty matrix")
    return np.pad(a, ((0, pr), (0, pc)), mode="edge"), rec


def crop(a: np.ndarray, rows: PadRecord, cols: PadRecord | None = None) -> np.ndarray:
    """Crop a product of padded matrices back to the unpadded shape."""
    cols = cols if cols is not None else rows
    return a[: rows.orig_rows, : cols.orig_cols]


def format_matrix(a) -> str:
    """Serialise to the text format: a header line then row lines."""
    a = as_matrix(a)
    lines = [f"{a.shape[0]} {a.shape[1]}"]
    for row in a:
        lines.append(" ".join("inf" if v == INF else str(int(v)) for v in row))
    return "\n".join(lines) + "\n"


def parse_matrix(text: str) -> np.ndarray:
    """Parse the text format; only decimal integers and 'inf' are accepted."""
    lines = text.splitlines()
    if not lines:
        raise FormatError("empty matrix file")
    header = lines[0].split()
    if len(header) != 2:
        raise FormatError("header must be '<rows> <cols>'")
    try:
        rows, cols = int(header[0]), int(header[1])
    except ValueError as exc:
        raise FormatError(f"bad header: {exc}") from None
    if rows < 0 or cols < 0:
        raise FormatError("dimensions must be non-negative")
    data_lines = [ln for ln in lines[1:] if ln.strip()]
    if len(data_lines) != rows:
        raise FormatError(f"expected {rows} data lines, found {len(data_lines)}")
    out = np.full((rows, cols), INF, dtype=np.int64)
    for i, ln in enumerate(data_lines):
        toks = ln.split()
        if len(toks) != cols:
            raise FormatError(f"line {i + 2}: expected {cols} tokens, found {len(toks)}")
        for j, tok in enumerate(toks):
            if tok == "inf":
                continue
            try:
                v = int(tok)
            except ValueError:
                raise FormatError(f"line {i + 2}: bad token {tok!r}") from None
            if abs(v) > MAX_MAGNITUDE:
                raise FormatError(f"line {i + 2}: entry {v} exceeds magnitude bound")
            out[i, j] = v
    return out


def write_matrix(path, a) -> None:
    with io.open(path, "w", encoding="utf-8") as f:
        f.write(format_matrix(a))


def read_matrix(path) -> np.ndarray:
    with io.open(path, "r", encoding="utf-8") as f:
        return parse_matrix(f.read())

"""Scored transitive-closure parser over function matrices.

The closure matrix holds, for every span of the input string and every
non-terminal, the cheapest derivation score of that span.  It is computed
by the divide-and-conquer closure recursion whose only matrix products are
taken between already-closed sub-squares; those products decompose, one
binary production at a time, into integer (min,+) products that are
bounded-difference whenever the grammar is, and are then routed through
the fast block product with an automatic fallback to the reference scan.

A plain cubic interval dynamic program over the same table layout serves
as the oracle for everything here.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .bd_minplus import BDProductConfig, bd_product
from .matrix_core import INF, PreconditionError, check_bd, naive_minplus
from .scored_grammar import ScoredGrammar, classify

_CHUNK_ELEMS = 1 << 21


@dataclass
class DotStats:
    """Instrumentation for the product operator's engine selection."""

    dot_calls: int = 0
    products: int = 0
    bd_products: int = 0
    fallback_upper: int = 0  # BD check failed on an all-real strictly-upper block
    fallback_other: int = 0  # BD check failed where padding or the diagonal is involved


@dataclass(frozen=True)
class IndexView:
    """Strictly increasing original indices backing a recursion sub-matrix."""

    map: np.ndarray

    def __len__(self) -> int:
        return len(self.map)

    def contiguity(self) -> tuple:
        """("contiguous", None, ()) or ("discontinuous", a, missing-indices)."""
        breaks = np.flatnonzero(np.diff(self.map) > 1)
        if len(breaks) == 0:
            return ("contiguous", None, ())
        if len(breaks) == 1:
            a = int(breaks[0]) + 1
            missing = tuple(range(int(self.map[a - 1]) + 1, int(self.map[a])))
            return ("discontinuous", a, missing)
        return ("invalid", None, ())

    def take(self, lo: int, hi: int) -> "IndexView":
        return IndexView(self.map[lo:hi])

    def drop_middle(self, lo: int, hi: int) -> "IndexView":
        return IndexView(np.concatenate([self.map[:lo], self.map[hi:]]))


class FunctionMatrix:
    """Per-non-terminal integer planes of a square score-function matrix.

    ``planes[x, i, j]`` is the score the x-th non-terminal assigns to cell
    (i, j); a cell whose vector is all-INF is the bottom element.  The
    diagonal and everything below it stay at INF through the closure.
    """

    def __init__(self, nonterminals: tuple, planes: np.ndarray, real_size: int | None = None):
        self.nonterminals = tuple(nonterminals)
        self.planes = planes
        self.size = planes.shape[1]
        self.real_size = self.size if real_size is None else real_size
        self.nt_index = {nt: i for i, nt in enumerate(self.nonterminals)}

    def plane(self, nt: str) -> np.ndarray:
        return self.planes[self.nt_index[nt]]

    def copy(self) -> "FunctionMatrix":
        return FunctionMatrix(self.nonterminals, self.planes.copy(), self.real_size)


def _pow2_at_least(x: int) -> int:
    return 1 << max(0, (int(x) - 1).bit_length())


@lru_cache(maxsize=128)
def _grammar_tables(g: ScoredGrammar):
    """Derived lookup tables: plane order, terminal scores, binary index."""
    nts = tuple(sorted(g.nonterminals))
    nt_index = {nt: i for i, nt in enumerate(nts)}
    terms = tuple(sorted(g.terminals))
    t_index = {t: i for i, t in enumerate(terms)}
    term_score = np.full((len(nts), max(1, len(terms))), INF, dtype=np.int64)
    for p in g.terminal_productions:
        xi, ti = nt_index[p.lhs], t_index[p.rhs[0]]
        term_score[xi, ti] = min(term_score[xi, ti], p.score)
    by_rhs: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for p in g.binary_productions:
        key = (nt_index[p.rhs[0]], nt_index[p.rhs[1]])
        by_rhs.setdefault(key, []).append((nt_index[p.lhs], p.score))
    return nts, nt_index, terms, t_index, term_score, by_rhs


def _encode(g: ScoredGrammar, sigma) -> list[int]:
    _, _, _, t_index, _, _ = _grammar_tables(g)
    codes = []
    for sym in sigma:
        if sym not in t_index:
            raise PreconditionError(f"symbol {sym!r} is not a terminal of the grammar")
        codes.append(t_index[sym])
    return codes


def seed_matrix(g: ScoredGrammar, sigma) -> FunctionMatrix:
    """Adjacency seed for the closure, padded to a power of two with INF.

    Cell (i, i+1) carries the terminal-production scores of the i-th input
    symbol; padded indices carry no productions and cannot influence any
    real cell.
    """
    nts, _, _, _, term_score, _ = _grammar_tables(g)
    codes = _encode(g, sigma)
    n = len(codes)
    real = n + 1
    size = _pow2_at_least(real)
    planes = np.full((len(nts), size, size), INF, dtype=np.int64)
    if n:
        idx = np.arange(n)
        planes[:, idx, idx + 1] = term_score[:, codes]
    return FunctionMatrix(nts, planes, real)


def union_fold(target: np.ndarray, source: np.ndarray) -> None:
    """Entrywise, per-non-terminal minimum of ``source`` into ``target``."""
    if target.shape != source.shape:
        raise PreconditionError(
            f"shape mismatch in fold: {target.shape} vs {source.shape}"
        )
    np.minimum(target, source, out=target)


def dot(
    a_block: np.ndarray,
    b_block: np.ndarray,
    g: ScoredGrammar,
    w: int,
    *,
    stats: DotStats | None = None,
    block_ctx: tuple | None = None,
    _force: str | None = None,
) -> np.ndarray:
    """Function-matrix product of two plane blocks.

    For every binary production Z -> X Y, the X planes of the rows block
    and the Y planes of the columns block are multiplied over (min,+) and
    folded, offset by the production score, into the Z plane of the
    output.  Each integer product runs through the bounded-difference
    block product when both factors pass the width check (all finite,
    adjacent steps at most ``w``) and through the reference scan otherwise,
    so the operator is total for any block contents.
    """
    nts, _, _, _, _, by_rhs = _grammar_tables(g)
    if a_block.shape[0] != len(nts) or b_block.shape[0] != len(nts):
        raise PreconditionError("blocks do not match the grammar's non-terminals")
    if a_block.shape[2] != b_block.shape[1]:
        raise PreconditionError("inner block dimensions differ")
    out = np.full(
        (len(nts), a_block.shape[1], b_block.shape[2]), INF, dtype=np.int64
    )
    if stats is not None:
        stats.dot_calls += 1
    if not by_rhs:
        return out
    square = a_block.shape[1] == a_block.shape[2] == b_block.shape[2]
    cfg = BDProductConfig(w=w, mode="deterministic")
    upper_real = False
    if block_ctx is not None:
        rows, mids, cols, real = block_ctx
        upper_real = (
            len(rows) > 0
            and len(mids) > 0
            and len(cols) > 0
            and int(cols.max()) < real
            and int(rows.max()) < int(mids.min())
            and int(mids.max()) < int(cols.min())
        )
    bd_ok: dict[tuple[int, int], bool] = {}

    def side_ok(side: int, idx: int, mat: np.ndarray) -> bool:
        key = (side, idx)
        if key not in bd_ok:
            bd_ok[key] = check_bd(mat, w).is_bd
        return bd_ok[key]

    for (xi, yi), targets in by_rhs.items():
        a = a_block[xi]
        b = b_block[yi]
        if not (a != INF).any() or not (b != INF).any():
            continue  # the product is all-INF and cannot change the fold
        use_bd = square and side_ok(0, xi, a) and side_ok(1, yi, b)
        if _force == "bd":
            use_bd = True
        elif _force == "naive":
            use_bd = False
        if stats is not None:
            stats.products += 1
            if use_bd:
                stats.bd_products += 1
            elif upper_real:
                stats.fallback_upper += 1
            else:
                stats.fallback_other += 1
        prod = bd_product(a, b, cfg) if use_bd else naive_minplus(a, b)
        finite = prod != INF
        for zi, score in targets:
            shifted = np.where(finite, np.where(finite, prod, 0) + score, INF)
            np.minimum(out[zi], shifted, out=out[zi])
    return out


def valiant_closure(
    seed: FunctionMatrix,
    g: ScoredGrammar,
    w: int = 1,
    *,
    stats: DotStats | None = None,
    debug_reference: np.ndarray | None = None,
) -> FunctionMatrix:
    """Transitive closure of the seed under the non-associative product.

    Runs the four mutually recursive closure procedures through index
    views into one shared store; deleting and reinserting middle ranges is
    a view operation, never a copy.  The result is cropped back to the
    real (unpadded) indices; cell (i, j) then holds every non-terminal's
    cheapest score for the span i..j-1 of the input.
    """
    size = seed.size
    if size & (size - 1):
        raise PreconditionError("closure requires a power-of-two matrix size")
    planes = seed.planes.copy()

    def check_ref(view: IndexView, msg: str) -> None:
        if debug_reference is None:
            return
        rows = view.map
        sub = planes[:, rows[:, None], rows[None, :]]
        ref = debug_reference[:, rows[:, None], rows[None, :]]
        upper = np.triu(np.ones((len(rows), len(rows)), dtype=bool), 1)
        assert np.array_equal(sub[:, upper], ref[:, upper]), msg

    def check_entry(view: IndexView, k: int, msg: str) -> None:
        # closure entry property: the two overlapping prefix/suffix squares
        # are already closed
        if debug_reference is None:
            return
        n = len(view)
        check_ref(view.take(0, n - n // k), msg + " (prefix square)")
        check_ref(view.take(n // k, n), msg + " (suffix square)")

    def do_dot(view: IndexView, i: slice, k: slice, j: slice) -> None:
        rows = view.map[i]
        mids = view.map[k]
        cols = view.map[j]
        a_planes = planes[:, rows[:, None], mids[None, :]]
        b_planes = planes[:, mids[:, None], cols[None, :]]
        prod = dot(
            a_planes,
            b_planes,
            g,
            w,
            stats=stats,
            block_ctx=(rows, mids, cols, seed.real_size),
        )
        target = planes[:, rows[:, None], cols[None, :]]
        union_fold(target, prod)
        planes[:, rows[:, None], cols[None, :]] = target

    def parse(view: IndexView) -> None:
        n = len(view)
        assert view.contiguity()[0] == "contiguous"
        if n <= 1:
            return
        h = n // 2
        parse(view.take(0, h))
        parse(view.take(h, n))
        parse2(view)
        check_ref(view, "closure output of the top-level recursion")

    def parse2(view: IndexView) -> None:
        n = len(view)
        kind, at, _ = view.contiguity()
        assert kind == "contiguous" or (kind == "discontinuous" and at == n // 2)
        check_entry(view, 2, "half-overlap entry property")
        if n <= 2:
            return
        q = n // 4
        parse2(view.take(q, 3 * q))
        parse3(view.take(0, 3 * q))
        parse3(view.take(q, n))
        parse4(view)
        check_ref(view, "half-overlap output property")

    def parse3(view: IndexView) -> None:
        n = len(view)
        t = n // 3
        kind, at, _ = view.contiguity()
        assert kind == "contiguous" or (kind == "discontinuous" and at in (t, 2 * t))
        check_entry(view, 3, "third-overlap entry property")
        do_dot(view, slice(0, t), slice(t, 2 * t), slice(2 * t, n))
        parse2(view.drop_middle(t, 2 * t))
        check_ref(view, "third-overlap output property")

    def parse4(view: IndexView) -> None:
        n = len(view)
        q = n // 4
        kind, at, _ = view.contiguity()
        assert kind == "contiguous" or (kind == "discontinuous" and at == n // 2)
        check_entry(view, 4, "quarter-overlap entry property")
        do_dot(view, slice(0, q), slice(q, 2 * q), slice(3 * q, n))
        do_dot(view, slice(0, q), slice(2 * q, 3 * q), slice(3 * q, n))
        parse2(view.drop_middle(q, 3 * q))
        check_ref(view, "quarter-overlap output property")

    parse(IndexView(np.arange(size)))
    real = seed.real_size
    return FunctionMatrix(seed.nonterminals, planes[:, :real, :real].copy(), real)


# ---------------------------------------------------------------------------
# cubic reference parser


def _cyk_batch(g: ScoredGrammar, codes: np.ndarray) -> np.ndarray:
    """Interval DP tables for a batch of equal-length strings.

    Returns (batch, |N|, n+1, n+1) planes; cell (i, j) with i < j holds the
    span score, diagonal cells hold the direct empty-production scores.
    """
    nts, nt_index, _, _, term_score, by_rhs = _grammar_tables(g)
    bsz, n = codes.shape
    planes = np.full((bsz, len(nts), n + 1, n + 1), INF, dtype=np.int64)
    diag = np.arange(n + 1)
    for p in g.epsilon_productions:
        xi = nt_index[p.lhs]
        np.minimum(
            planes[:, xi, diag, diag], p.score, out=planes[:, xi, diag, diag]
        )
    if n == 0:
        return planes
    idx = np.arange(n)
    for xi in range(len(nts)):
        planes[:, xi, idx, idx + 1] = term_score[xi][codes]
    for length in range(2, n + 1):
        starts = np.arange(n - length + 1)
        for (xi, yi), targets in by_rhs.items():
            best = np.full((bsz, len(starts)), INF, dtype=np.int64)
            for d in range(1, length):
                left = np.diagonal(planes[:, xi], offset=d, axis1=1, axis2=2)[
                    :, : len(starts)
                ]
                right = np.diagonal(planes[:, yi], offset=length - d, axis1=1, axis2=2)[
                    :, d : d + len(starts)
                ]
                bad = (left == INF) | (right == INF)
                cand = np.where(bad, 0, left) + np.where(bad, 0, right)
                np.copyto(cand, INF, where=bad)
                np.minimum(best, cand, out=best)
            ok = best != INF
            for zi, score in targets:
                cand = np.where(ok, best + score, INF)
                cur = planes[:, zi, starts, starts + length]
                planes[:, zi, starts, starts + length] = np.minimum(cur, cand)
    return planes


def cyk_oracle(g: ScoredGrammar, sigma) -> np.ndarray:
    """Full score table of one string: planes (|N|, n+1, n+1).

    Strictly upper cells hold span scores; diagonal cells hold the direct
    empty-production scores (in CNF only the start symbol can have one).
    """
    if classify(g).kind != "cnf":
        raise PreconditionError("the cubic reference parser expects a CNF grammar")
    codes = np.asarray([_encode(g, sigma)], dtype=np.int64).reshape(1, len(sigma))
    return _cyk_batch(g, codes)[0]


def cyk_all_scores(g: ScoredGrammar, strings) -> np.ndarray:
    """Whole-string scores for every non-terminal, batched: (len(strings), |N|)."""
    if classify(g).kind != "cnf":
        raise PreconditionError("the cubic reference parser expects a CNF grammar")
    nts, nt_index, _, _, _, _ = _grammar_tables(g)
    out = np.full((len(strings), len(nts)), INF, dtype=np.int64)
    by_len: dict[int, list[int]] = {}
    encoded = [np.asarray(_encode(g, s), dtype=np.int64) for s in strings]
    for i, s in enumerate(encoded):
        by_len.setdefault(len(s), []).append(i)
    for n, members in by_len.items():
        if n == 0:
            for p in g.epsilon_productions:
                out[members, nt_index[p.lhs]] = np.minimum(
                    out[members, nt_index[p.lhs]], p.score
                )
            continue
        chunk = max(1, _CHUNK_ELEMS // max(1, len(nts) * (n + 1) * (n + 1)))
        for c0 in range(0, len(members), chunk):
            part = members[c0 : c0 + chunk]
            codes = np.stack([encoded[i] for i in part])
            tables = _cyk_batch(g, codes)
            out[part, :] = tables[:, :, 0, n]
    return out


def cyk_scores(g: ScoredGrammar, strings) -> np.ndarray:
    """Start-symbol scores of many strings (the batched oracle's top cells)."""
    nts, nt_index, _, _, _, _ = _grammar_tables(g)
    return cyk_all_scores(g, strings)[:, nt_index[g.start]]


def parse_score(
    g: ScoredGrammar,
    sigma,
    engine: str = "valiant",
    w: int = 1,
    *,
    stats: DotStats | None = None,
) -> int:
    """Cheapest derivation score of the whole string from the start symbol.

    Both engines agree on every input; ``w`` is a performance hint for the
    closure engine (the expected score width of the grammar), never a
    correctness requirement.
    """
    if classify(g).kind != "cnf":
        raise PreconditionError("parsing expects a CNF grammar")
    sigma = list(sigma)
    if len(sigma) == 0:
        _encode(g, sigma)
        return int(g.epsilon_score())
    if engine == "cyk":
        return int(cyk_scores(g, [sigma])[0])
    if engine != "valiant":
        raise PreconditionError(f"unknown engine {engine!r}")
    seed = seed_matrix(g, sigma)
    closure = valiant_closure(seed, g, w, stats=stats)
    _, nt_index, _, _, _, _ = _grammar_tables(g)
    return int(closure.planes[nt_index[g.start], 0, len(sigma)])

"""Exact (min,+) products of bounded-difference matrices.

The core product runs in three phases: a blockwise additive approximation,
randomized (or derandomized) shift-and-clamp rounds that reduce most of
the work to small-entry products, and a repair sweep that recomputes every
block whose representative triple still looks plausibly optimal yet was
never captured by a round.  The repair sweep makes the output exact for
every choice of block width, round budget, seed and mode; the parameters
only move work between phases.

Also provides the one-sided generalizations (row-group and column-group
structured left factor against an arbitrary right factor) and the
reduction of sequence (min,+)-convolution to those products.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from .matrix_core import (
    INF,
    MAX_BLOCK_MAGNITUDE,
    BDViolationError,
    PreconditionError,
    _minplus_scan,
    as_matrix,
    check_bd,
    naive_minplus,
    pad_to_multiple,
    small_entry_minplus,
)

# thresholds in units of (block width x BD width)
CLAMP_FACTOR = 48
RELEVANT_FACTOR = 8
UNCOVERED_FACTOR = 44
SURROGATE_RELEVANT_FACTOR = 20
WEAK_UNCOVERED_FACTOR = 40

_AUTO_SMALL = 64
_CHUNK_ELEMS = 1 << 22


def _pow2_at_least(x: int) -> int:
    return 1 << max(0, (int(x) - 1).bit_length())


@dataclass(frozen=True)
class BDProductConfig:
    """Parameters of the block product.

    ``delta`` (block width) and ``rho`` (round budget) may be None, in
    which case they are resolved from the matrix size: small inputs get a
    single block and no rounds (the repair sweep then degenerates to one
    exact product, which benchmarks faster than any splitting at that
    scale), larger inputs get the power-of-two rules below.  Exactness
    never depends on the choice.
    """

    w: int
    delta: int | None = None
    rho: int | None = None
    mode: str = "randomized"
    seed: int = 0
    recursion_cutoff: int = 64
    improved_phase2: bool = True

    def resolved(self, n: int) -> "BDProductConfig":
        if self.w < 0:
            raise PreconditionError("BD width w must be non-negative")
        if self.mode not in ("randomized", "deterministic"):
            raise PreconditionError(f"unknown mode {self.mode!r}")
        delta = self.delta
        rho = self.rho
        if delta is None:
            delta = n if n <= _AUTO_SMALL else _pow2_at_least(math.ceil(n ** 0.3))
            delta = max(1, delta)
        if rho is None:
            rho = 0 if n <= _AUTO_SMALL else math.ceil(n ** 0.45)
        if delta < 1:
            raise PreconditionError("delta must be at least 1")
        if rho < 0:
            raise PreconditionError("rho must be non-negative")
        return replace(self, delta=delta, rho=rho)


@dataclass(frozen=True)
class BlockScheme:
    """Partition of a padded index range into blocks of width delta.

    Block b covers indices [b*delta, (b+1)*delta); its representative is
    the last index of the block (the 1-based "indices divisible by delta"
    convention shifted to 0-based).
    """

    n: int
    delta: int
    representatives: np.ndarray

    @staticmethod
    def for_size(n: int, delta: int) -> "BlockScheme":
        if delta < 1:
            raise PreconditionError("delta must be at least 1")
        if n % delta != 0:
            raise PreconditionError(f"size {n} is not a multiple of delta {delta}")
        reps = np.arange(delta - 1, n, delta, dtype=np.int64)
        return BlockScheme(n, delta, reps)

    @property
    def nblocks(self) -> int:
        return self.n // self.delta


@dataclass
class RoundRecord:
    """What one shift-and-clamp round leaves behind for the later phases.

    ``rep_a``/``rep_b`` are the clamped shifted factors restricted to block
    representatives (both nblocks x nblocks).  Entries removed by the
    surviving-k filter are INF there too, so the repair phase never
    believes a filtered-away contribution was folded.
    """

    pick: tuple[int, int]
    rep_a: np.ndarray
    rep_b: np.ndarray
    survivors: np.ndarray | None = None


def random_bd_matrix(n: int, w: int, seed, base: int = 0) -> np.ndarray:
    """Random n x n matrix with adjacent differences bounded by w.

    Sampled cell by cell along anti-diagonals; each cell is uniform on the
    interval its upper and left neighbours allow, which reaches the whole
    lattice of w-bounded-difference matrices.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    m = np.zeros((n, n), dtype=np.int64)
    if n == 0:
        return m
    m[0, 0] = base
    for d in range(1, 2 * n - 1):
        i = np.arange(max(0, d - n + 1), min(d, n - 1) + 1)
        j = d - i
        lo = np.full(len(i), -(1 << 62), dtype=np.int64)
        hi = np.full(len(i), 1 << 62, dtype=np.int64)
        up = i > 0
        lo[up] = m[i[up] - 1, j[up]] - w
        hi[up] = m[i[up] - 1, j[up]] + w
        left = j > 0
        lo[left] = np.maximum(lo[left], m[i[left], j[left] - 1] - w)
        hi[left] = np.minimum(hi[left], m[i[left], j[left] - 1] + w)
        m[i, j] = rng.integers(lo, hi + 1)
    return m


# ---------------------------------------------------------------------------
# shifted factors (INF-aware; inputs are magnitude-capped so the multi-term
# combinations below cannot wrap in int64)


def _shift_a(a: np.ndarray, b: np.ndarray, approx: np.ndarray, jr: int) -> np.ndarray:
    """Unclamped shifted left factor a[i,k] + b[k,jr] - approx[i,jr]."""
    bcol = b[:, jr]
    acol = approx[:, jr]
    bad = (a == INF) | (bcol == INF)[None, :] | (acol == INF)[:, None]
    out = (
        np.where(a == INF, 0, a)
        + np.where(bcol == INF, 0, bcol)[None, :]
        - np.where(acol == INF, 0, acol)[:, None]
    )
    np.copyto(out, INF, where=bad)
    return out


def _shift_b(b: np.ndarray, approx: np.ndarray, ir: int, jr: int) -> np.ndarray:
    """Unclamped shifted right factor b[k,j] - b[k,jr] + approx[ir,jr] - approx[ir,j]."""
    bcol = b[:, jr]
    arow = approx[ir, :]
    c0 = int(approx[ir, jr])
    c0_inf = c0 == INF
    bad = (b == INF) | (bcol == INF)[:, None] | (arow == INF)[None, :] | c0_inf
    t = (0 if c0_inf else c0) - np.where(arow == INF, 0, arow)
    out = (
        np.where(b == INF, 0, b)
        - np.where(bcol == INF, 0, bcol)[:, None]
        + t[None, :]
    )
    np.copyto(out, INF, where=bad)
    return out


def _clamp(m: np.ndarray, bound: int) -> np.ndarray:
    finite = m != INF
    out = m.copy()
    np.copyto(out, INF, where=finite & (np.abs(np.where(finite, m, 0)) > bound))
    return out


def perturbed_pair(
    a: np.ndarray,
    b: np.ndarray,
    approx: np.ndarray,
    pick: tuple[int, int],
    clamp: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Clamped shifted pair for one round (before any survivor filtering)."""
    ir, jr = pick
    return (
        _clamp(_shift_a(a, b, approx, jr), clamp),
        _clamp(_shift_b(b, approx, ir, jr), clamp),
    )


def _fold_round(
    chat: np.ndarray, cr: np.ndarray, approx: np.ndarray, ir: int, jr: int
) -> None:
    """chat <- min(chat, cr + approx[:,jr] - approx[ir,jr] + approx[ir,:])."""
    col = approx[:, jr]
    row = approx[ir, :]
    c0 = int(approx[ir, jr])
    c0_inf = c0 == INF
    bad = (cr == INF) | (col == INF)[:, None] | (row == INF)[None, :] | c0_inf
    shifted = (
        np.where(cr == INF, 0, cr)
        + (np.where(col == INF, 0, col) - (0 if c0_inf else c0))[:, None]
        + np.where(row == INF, 0, row)[None, :]
    )
    np.copyto(shifted, INF, where=bad)
    np.minimum(chat, shifted, out=chat)


# ---------------------------------------------------------------------------
# phases of the core product


def phase1_block_approx(a, b, scheme: BlockScheme) -> np.ndarray:
    """Blockwise additive approximation of the product.

    Minimises over block representatives only and replicates across each
    block; for w-BD inputs every entry is within 4*delta*w of the true
    product.
    """
    a = as_matrix(a)
    b = as_matrix(b)
    n = scheme.n
    if a.shape != (n, n) or b.shape != (n, n):
        raise PreconditionError("phase 1 expects square matrices matching the scheme")
    if scheme.nblocks == 1:
        top = int(a[n - 1, n - 1])
        bot = int(b[n - 1, n - 1])
        val = INF if top == INF or bot == INF else top + bot
        return np.full((n, n), val, dtype=np.int64)
    reps = scheme.representatives
    crep = _minplus_scan(a[np.ix_(reps, reps)], b[np.ix_(reps, reps)])
    return np.repeat(np.repeat(crep, scheme.delta, axis=0), scheme.delta, axis=1)


def _survivors(
    a: np.ndarray,
    b: np.ndarray,
    approx: np.ndarray,
    prior_picks: list[tuple[int, int]],
    pick: tuple[int, int],
    dw: int,
) -> np.ndarray:
    """Column filter for the improved rounds: keep k iff (ir, k, jr) may matter.

    Relevance is tested against the approximation (a superset of the true
    test, so filtering never drops a needed column); the uncovered side
    recomputes the prior rounds' shifted entries for this triple from the
    stored picks.
    """
    ir, jr = pick
    dev = a[ir, :] + b[:, jr] - int(approx[ir, jr])
    keep = np.abs(dev) <= SURROGATE_RELEVANT_FACTOR * dw
    if prior_picks and keep.any():
        pirs = np.fromiter((p[0] for p in prior_picks), dtype=np.int64)
        pjrs = np.fromiter((p[1] for p in prior_picks), dtype=np.int64)
        a_pr = a[ir, :][None, :] + b[:, pjrs].T - approx[ir, pjrs][:, None]
        b_pr = (
            b[:, jr][None, :]
            - b[:, pjrs].T
            + (approx[pirs, pjrs] - approx[pirs, jr])[:, None]
        )
        thresh = WEAK_UNCOVERED_FACTOR * dw
        uncovered = np.all(
            (np.abs(a_pr) > thresh) | (np.abs(b_pr) > thresh), axis=0
        )
        keep &= uncovered
    return keep


def phase2_rounds(
    a, b, approx: np.ndarray, cfg: BDProductConfig, scheme: BlockScheme
) -> tuple[np.ndarray, list[RoundRecord]]:
    """Shift-and-clamp rounds; returns a fold that never undershoots the product."""
    a = as_matrix(a)
    b = as_matrix(b)
    cfg = cfg.resolved(scheme.n)
    n = scheme.n
    dw = scheme.delta * cfg.w
    clamp = CLAMP_FACTOR * dw
    chat = np.full((n, n), INF, dtype=np.int64)
    records: list[RoundRecord] = []
    rng = np.random.default_rng(cfg.seed)
    reps = scheme.representatives
    rel_t = uncov_t = None
    if cfg.mode == "deterministic" and cfg.rho > 0:
        # the relevance tensor is round-invariant; coverage accumulates
        rel_t = _relevant_blocks(a, b, approx, scheme, dw).transpose(1, 0, 2)
        uncov_t = np.ones_like(rel_t)
    for _ in range(cfg.rho):
        if cfg.mode == "deterministic":
            ir, jr = _pick_from_edges(rel_t & uncov_t, reps)
        else:
            ir = int(rng.integers(n))
            jr = int(rng.integers(n))
        ar, br = perturbed_pair(a, b, approx, (ir, jr), clamp)
        survivors = None
        if cfg.improved_phase2:
            survivors = _survivors(
                a, b, approx, [rec.pick for rec in records], (ir, jr), dw
            )
            ar[:, ~survivors] = INF
            br[~survivors, :] = INF
        cr = small_entry_minplus(ar, br, clamp)
        _fold_round(chat, cr, approx, ir, jr)
        rep_a = ar[np.ix_(reps, reps)].copy()
        rep_b = br[np.ix_(reps, reps)].copy()
        records.append(RoundRecord((ir, jr), rep_a, rep_b, survivors))
        if uncov_t is not None:
            thresh = UNCOVERED_FACTOR * dw
            cov_a = np.abs(rep_a) <= thresh  # (X, K)
            cov_b = np.abs(rep_b) <= thresh  # (K, Y)
            uncov_t &= ~(cov_a.T[:, :, None] & cov_b[:, None, :])
    return chat, records


def _relevant_blocks(
    a: np.ndarray, b: np.ndarray, approx: np.ndarray, scheme: BlockScheme, dw: int
) -> np.ndarray:
    """(X, K, Y) booleans: |a[x',k'] + b[k',y'] - approx[x',y']| <= 8*dw at representatives."""
    reps = scheme.representatives
    arep = a[np.ix_(reps, reps)]
    brep = b[np.ix_(reps, reps)]
    crep = approx[np.ix_(reps, reps)]
    nb = scheme.nblocks
    out = np.empty((nb, nb, nb), dtype=bool)
    chunk = max(1, _CHUNK_ELEMS // max(1, nb * nb))
    thresh = RELEVANT_FACTOR * dw
    for x0 in range(0, nb, chunk):
        x1 = min(nb, x0 + chunk)
        dev = (
            arep[x0:x1, :, None] + brep[None, :, :] - crep[x0:x1, None, :]
        )
        out[x0:x1] = np.abs(dev) <= thresh
    return out


def _uncovered_blocks(
    records: list[RoundRecord], nblocks: int, dw: int
) -> np.ndarray:
    """(X, K, Y) booleans: block never had both representative entries small.

    Computed as the boolean product, per k'-slab, of the per-round covered
    indicator stacks; a block is uncovered in all rounds iff that product
    is zero.
    """
    if not records:
        return np.ones((nblocks, nblocks, nblocks), dtype=bool)
    thresh = UNCOVERED_FACTOR * dw
    ua = np.stack([np.abs(r.rep_a) <= thresh for r in records])  # (R, X, K)
    vb = np.stack([np.abs(r.rep_b) <= thresh for r in records])  # (R, K, Y)
    u = ua.transpose(2, 1, 0).astype(np.float64)  # (K, X, R)
    v = vb.transpose(1, 0, 2).astype(np.float64)  # (K, R, Y)
    covered = (u @ v) > 0  # (K, X, Y)
    return ~covered.transpose(1, 0, 2)


def _pick_from_edges(edges_kxy: np.ndarray, reps: np.ndarray) -> tuple[int, int]:
    """Representative pair on the most 3-walks over per-slab edge graphs.

    Walk counts stay below 2**24 for any slab size up to 4096, so the
    batched float32 products are exact; the slab sum accumulates in
    float64 (exact for these integer magnitudes, hence thread-invariant).
    """
    if not edges_kxy.any():
        return int(reps[0]), int(reps[0])
    dtype = np.float32 if edges_kxy.shape[1] <= 2048 else np.float64
    m = np.ascontiguousarray(edges_kxy, dtype=dtype)
    walks = m @ m.transpose(0, 2, 1) @ m
    np.copyto(walks, 0, where=~edges_kxy)
    scores = walks.sum(axis=0, dtype=np.float64)  # (X, Y)
    flat = int(np.argmax(scores))  # row-major argmax = lexicographic tie-break
    x, y = divmod(flat, scores.shape[1])
    return int(reps[x]), int(reps[y])


def derandomized_pick(
    records: list[RoundRecord],
    approx: np.ndarray,
    a: np.ndarray,
    b: np.ndarray,
    scheme: BlockScheme,
    w: int,
) -> tuple[int, int]:
    """Deterministic pick: the representative pair on the most 3-walks.

    For each representative k' a bipartite graph on representative pairs
    is formed from the still-relevant, still-uncovered blocks; a candidate
    edge (x', y') scores the walk count (M Mt M)[x', y'] in that graph
    (degenerate walks included), masked to actual edges and summed over
    k'.  Ties break to the smallest x', then smallest y'; with no scoring
    edge at all the first representative pair is returned.
    """
    dw = scheme.delta * w
    rel = _relevant_blocks(a, b, approx, scheme, dw)
    unc = _uncovered_blocks(records, scheme.nblocks, dw)
    edges = (rel & unc).transpose(1, 0, 2)  # (K, X, Y)
    return _pick_from_edges(edges, scheme.representatives)


def _derived_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence([seed & (2**63 - 1), *key]).generate_state(1)[0])


def _child_config(cfg: BDProductConfig, d: int, *key: int) -> BDProductConfig | None:
    """Config for recursively repairing a d x d block, or None for the scan.

    The child block width is forced strictly below d so the recursion
    always makes progress, whatever the caller's cutoff; blocks too small
    to split strictly are scanned directly.
    """
    if d <= cfg.recursion_cutoff:
        return None
    child_delta = max(1, _pow2_at_least(math.ceil(d ** 0.3)))
    if child_delta >= d:
        return None
    return replace(
        cfg, delta=child_delta, rho=None, seed=_derived_seed(cfg.seed, *key)
    )


def phase3_repair(
    a,
    b,
    approx: np.ndarray,
    chat: np.ndarray,
    records: list[RoundRecord],
    cfg: BDProductConfig,
    scheme: BlockScheme,
) -> np.ndarray:
    """Recompute every relevant block no round captured; the result is exact."""
    a = as_matrix(a)
    b = as_matrix(b)
    cfg = cfg.resolved(scheme.n)
    dw = scheme.delta * cfg.w
    d = scheme.delta
    nb = scheme.nblocks
    if nb == 1:
        # a single always-relevant block: repair unless some round covered it
        thresh = UNCOVERED_FACTOR * dw
        covered = any(
            abs(int(r.rep_a[0, 0])) <= thresh and abs(int(r.rep_b[0, 0])) <= thresh
            for r in records
        )
        if covered:
            return chat.copy()
        child = _child_config(cfg, d, 0, 0, 0)
        prod = _minplus_scan(a, b) if child is None else bd_product(a, b, child)
        return np.minimum(chat, prod)
    mask = _relevant_blocks(a, b, approx, scheme, dw)
    mask &= _uncovered_blocks(records, scheme.nblocks, dw)
    out = chat.copy()
    if d <= cfg.recursion_cutoff:
        a4 = a.reshape(nb, d, nb, d)
        b4 = b.reshape(nb, d, nb, d)
        c4 = out.reshape(nb, d, nb, d)
        fchunk = max(1, _CHUNK_ELEMS // max(1, d * d * d))
        for kb in range(nb):
            pairs = np.argwhere(mask[:, kb, :])
            if pairs.size == 0:
                continue
            for f0 in range(0, len(pairs), fchunk):
                xs = pairs[f0 : f0 + fchunk, 0]
                ys = pairs[f0 : f0 + fchunk, 1]
                ablk = a4[xs, :, kb, :]
                bblk = b4[kb][:, ys, :].transpose(1, 0, 2)
                prod = (ablk[:, :, :, None] + bblk[:, None, :, :]).min(axis=2)
                c4[xs, :, ys, :] = np.minimum(c4[xs, :, ys, :], prod)
    else:
        for xb, kb, yb in np.argwhere(mask):
            rows = slice(xb * d, (xb + 1) * d)
            mids = slice(kb * d, (kb + 1) * d)
            cols = slice(yb * d, (yb + 1) * d)
            child = _child_config(cfg, d, int(xb), int(kb), int(yb))
            if child is None:
                prod = _minplus_scan(a[rows, mids], b[mids, cols])
            else:
                prod = bd_product(a[rows, mids], b[mids, cols], child)
            np.minimum(out[rows, cols], prod, out=out[rows, cols])
    return out


def bd_product(a, b, cfg: BDProductConfig) -> np.ndarray:
    """Exact (min,+) product of two square w-BD matrices via the three phases."""
    c, _ = bd_product_report(a, b, cfg)
    return c


def bd_product_report(a, b, cfg: BDProductConfig) -> tuple[np.ndarray, dict]:
    """Like ``bd_product`` but also returns per-phase wall times and the resolved config."""
    a = as_matrix(a, magnitude=MAX_BLOCK_MAGNITUDE)
    b = as_matrix(b, magnitude=MAX_BLOCK_MAGNITUDE)
    if a.shape != b.shape or a.shape[0] != a.shape[1]:
        raise PreconditionError(
            f"expected two square matrices of equal size, got {a.shape} and {b.shape}"
        )
    for name, m in (("a", a), ("b", b)):
        wit = check_bd(m, cfg.w)
        if not wit.is_bd:
            raise BDViolationError(
                f"matrix {name} is not {cfg.w}-bounded-difference", wit.violation
            )
    n = a.shape[0]
    rcfg = cfg.resolved(n)
    stats = {
        "n": n,
        "w": rcfg.w,
        "delta": rcfg.delta,
        "rho": rcfg.rho,
        "mode": rcfg.mode,
        "seed": rcfg.seed,
        "improved_phase2": rcfg.improved_phase2,
    }
    if n == 0:
        stats.update(phase1_s=0.0, phase2_s=0.0, phase3_s=0.0)
        return np.full((0, 0), INF, dtype=np.int64), stats
    ap, pad = pad_to_multiple(a, rcfg.delta)
    bp, _ = pad_to_multiple(b, rcfg.delta)
    scheme = BlockScheme.for_size(ap.shape[0], rcfg.delta)
    t0 = time.perf_counter()
    approx = phase1_block_approx(ap, bp, scheme)
    t1 = time.perf_counter()
    chat, records = phase2_rounds(ap, bp, approx, rcfg, scheme)
    t2 = time.perf_counter()
    chat = phase3_repair(ap, bp, approx, chat, records, rcfg, scheme)
    t3 = time.perf_counter()
    stats.update(
        padded_n=scheme.n,
        phase1_s=t1 - t0,
        phase2_s=t2 - t1,
        phase3_s=t3 - t2,
        rounds=len(records),
    )
    return chat[: pad.orig_rows, : pad.orig_cols], stats


# ---------------------------------------------------------------------------
# one-sided generalizations


def contiguous_groups(n: int, size: int) -> list[np.ndarray]:
    """Partition range(n) into contiguous chunks of the given size."""
    if size < 1:
        raise PreconditionError("group size must be at least 1")
    return [np.arange(s, min(s + size, n), dtype=np.int64) for s in range(0, n, size)]


def _validate_partition(groups, n: int) -> list[np.ndarray]:
    gs = [np.asarray(g, dtype=np.int64) for g in groups]
    if any(len(g) == 0 for g in gs):
        raise PreconditionError("empty group in partition")
    flat = np.concatenate(gs) if gs else np.empty(0, dtype=np.int64)
    if len(flat) != n or not np.array_equal(np.sort(flat), np.arange(n)):
        raise PreconditionError(f"groups do not partition range({n})")
    return gs


def _require_finite(m: np.ndarray, name: str) -> None:
    infs = m == INF
    if infs.any():
        i, j = divmod(int(infs.argmax()), m.shape[1])
        raise BDViolationError(
            f"matrix {name} must be finite for the structured side", ("inf", i, j)
        )


def bd_rows_product(a, b, row_groups, bound: int, *, rho: int | None = None, seed: int = 0) -> np.ndarray:
    """Exact product when each row group of ``a`` varies by at most ``bound`` per column.

    ``b`` is arbitrary (infinite entries allowed).  The adapted phases use
    one exact output row per group, unchanged shift-and-clamp rounds, and a
    per-cell repair sweep over (group, k, j) triples.
    """
    a = as_matrix(a, magnitude=MAX_BLOCK_MAGNITUDE)
    b = as_matrix(b, magnitude=MAX_BLOCK_MAGNITUDE)
    if a.shape[1] != b.shape[0]:
        raise PreconditionError(f"inner dimensions differ: {a.shape} vs {b.shape}")
    if bound < 0:
        raise PreconditionError("bound must be non-negative")
    n, m = a.shape
    p = b.shape[1]
    groups = _validate_partition(row_groups, n)
    _require_finite(a, "a")
    for gi, g in enumerate(groups):
        sub = a[g, :]
        spread = sub.max(axis=0) - sub.min(axis=0)
        if spread.size and int(spread.max()) > bound:
            k = int(spread.argmax())
            raise BDViolationError(
                f"row group {gi} varies by {int(spread.max())} > {bound} in column {k}",
                ("group", gi, k),
            )
    if rho is None:
        rho = max(1, math.ceil(max(n, m, p) ** 0.45))
    clamp = CLAMP_FACTOR * bound
    reps = np.fromiter((int(g[0]) for g in groups), dtype=np.int64)
    group_of = np.empty(n, dtype=np.int64)
    for gi, g in enumerate(groups):
        group_of[g] = gi
    crep = naive_minplus(a[reps, :], b)  # one exact row per group
    approx = crep[group_of, :]
    chat = np.full((n, p), INF, dtype=np.int64)
    rng = np.random.default_rng(seed)
    recs: list[tuple[np.ndarray, np.ndarray]] = []
    for _ in range(rho):
        ir = int(rng.integers(n))
        jr = int(rng.integers(p))
        ar, br = perturbed_pair(a, b, approx, (ir, jr), clamp)
        cr = small_entry_minplus(ar, br, clamp)
        _fold_round(chat, cr, approx, ir, jr)
        recs.append((ar[reps, :].copy(), br))
    # repair sweep over (group, k, j) cells
    bad_b = b == INF
    b0 = np.where(bad_b, 0, b)
    rel_thresh = RELEVANT_FACTOR * bound
    unc_thresh = UNCOVERED_FACTOR * bound
    for gi, g in enumerate(groups):
        dev = a[reps[gi], :][:, None] + b0 - np.where(crep[gi] == INF, 0, crep[gi])[None, :]
        rel = ~(bad_b | (crep[gi] == INF)[None, :]) & (np.abs(dev) <= rel_thresh)
        for ra, rb in recs:
            rel &= (np.abs(ra[gi, :]) > unc_thresh)[:, None] | (np.abs(rb) > unc_thresh)
            if not rel.any():
                break
        if not rel.any():
            continue
        sums = a[g][:, :, None] + b0[None, :, :]
        np.copyto(sums, INF, where=(bad_b | ~rel)[None, :, :])
        chat[g, :] = np.minimum(chat[g, :], sums.min(axis=1))
    return chat


def bd_cols_product(a, b, col_groups, bound: int, *, rho: int | None = None, seed: int = 0) -> np.ndarray:
    """Exact product when each column group of ``a`` varies by at most ``bound`` per row.

    ``b`` is arbitrary.  Its entries are first capped at (per-group column
    minimum + 2*bound), which cannot disturb the product because the capped
    value still exceeds a sum available through the group minimum; the
    capped matrix then varies by at most 2*bound within groups and the
    per-cell phases run with that unit.
    """
    a = as_matrix(a, magnitude=MAX_BLOCK_MAGNITUDE)
    b = as_matrix(b, magnitude=MAX_BLOCK_MAGNITUDE)
    if a.shape[1] != b.shape[0]:
        raise PreconditionError(f"inner dimensions differ: {a.shape} vs {b.shape}")
    if bound < 0:
        raise PreconditionError("bound must be non-negative")
    n, m = a.shape
    p = b.shape[1]
    groups = _validate_partition(col_groups, m)
    _require_finite(a, "a")
    for gi, g in enumerate(groups):
        sub = a[:, g]
        spread = sub.max(axis=1) - sub.min(axis=1)
        if spread.size and int(spread.max()) > bound:
            i = int(spread.argmax())
            raise BDViolationError(
                f"column group {gi} varies by {int(spread.max())} > {bound} in row {i}",
                ("group", gi, i),
            )
    if rho is None:
        rho = max(1, math.ceil(max(n, m, p) ** 0.45))
    unit = 2 * bound
    clamp = CLAMP_FACTOR * unit
    bprime = b.copy()
    for g in groups:
        sub = b[g, :]
        vmin = sub.min(axis=0)  # INF sentinel is the int64 max, so min works
        cap = np.where(vmin == INF, INF, vmin + 2 * bound)
        bprime[g, :] = np.minimum(sub, cap[None, :])
    reps = np.fromiter((int(g[0]) for g in groups), dtype=np.int64)
    approx = naive_minplus(a[:, reps], bprime[reps, :])
    chat = np.full((n, p), INF, dtype=np.int64)
    rng = np.random.default_rng(seed)
    recs: list[tuple[np.ndarray, np.ndarray]] = []
    for _ in range(rho):
        ir = int(rng.integers(n))
        jr = int(rng.integers(p))
        ar, br = perturbed_pair(a, bprime, approx, (ir, jr), clamp)
        cr = small_entry_minplus(ar, br, clamp)
        _fold_round(chat, cr, approx, ir, jr)
        recs.append((ar[:, reps].copy(), br[reps, :].copy()))
    rel_thresh = RELEVANT_FACTOR * unit
    unc_thresh = UNCOVERED_FACTOR * unit
    bad_c = approx == INF
    for gi, g in enumerate(groups):
        brow = bprime[reps[gi], :]
        bad = bad_c | (brow == INF)[None, :]
        dev = (
            a[:, reps[gi]][:, None]
            + np.where(brow == INF, 0, brow)[None, :]
            - np.where(bad_c, 0, approx)
        )
        rel = ~bad & (np.abs(dev) <= rel_thresh)
        for ra, rb in recs:
            rel &= (np.abs(ra[:, gi]) > unc_thresh)[:, None] | (
                np.abs(rb[gi, :]) > unc_thresh
            )[None, :]
            if not rel.any():
                break
        pairs = np.argwhere(rel)
        if pairs.size == 0:
            continue
        fchunk = max(1, _CHUNK_ELEMS // max(1, len(g)))
        for f0 in range(0, len(pairs), fchunk):
            iis = pairs[f0 : f0 + fchunk, 0]
            jjs = pairs[f0 : f0 + fchunk, 1]
            av = a[iis[:, None], g[None, :]]
            bv = bprime[g[:, None], jjs[None, :]].T
            bad_v = bv == INF
            vals = np.where(bad_v, INF, av + np.where(bad_v, 0, bv)).min(axis=1)
            chat[iis, jjs] = np.minimum(chat[iis, jjs], vals)
    return chat


# ---------------------------------------------------------------------------
# (min,+)-convolution reduction


def _as_sequence(a, name: str) -> np.ndarray:
    s = np.asarray(a, dtype=np.int64)
    if s.ndim != 1:
        raise PreconditionError(f"sequence {name} must be 1-D")
    finite = s != INF
    if finite.any() and int(np.abs(s[finite]).max()) > MAX_BLOCK_MAGNITUDE:
        raise PreconditionError(f"sequence {name} exceeds the magnitude bound")
    return s


def naive_convolution(a, b) -> np.ndarray:
    """Quadratic oracle: c[t] = min_i a[i] + b[t-i], length 2n-1."""
    a = _as_sequence(a, "a")
    b = _as_sequence(b, "b")
    if len(a) != len(b):
        raise PreconditionError("sequences must have equal length")
    n = len(a)
    c = np.full(max(0, 2 * n - 1), INF, dtype=np.int64)
    if n == 0:
        return c
    bad = (a == INF)[:, None] | (b == INF)[None, :]
    sums = np.where(a == INF, 0, a)[:, None] + np.where(b == INF, 0, b)[None, :]
    np.copyto(sums, INF, where=bad)
    t = (np.arange(n)[:, None] + np.arange(n)[None, :]).ravel()
    np.minimum.at(c, t, sums.ravel())
    return c


def bd_convolution(
    a,
    b,
    which_is_bd: str,
    w: int,
    *,
    group_size: int | None = None,
    rho: int | None = None,
    seed: int = 0,
) -> np.ndarray:
    """Sequence (min,+)-convolution via structured matrix products.

    The flagged sequence must have adjacent differences at most ``w``.  Both
    sequences are padded with infinities up to the next perfect square
    length m*m and sliced into m x m windows A_r[i,k] = a[r*m+i+k] against
    B[k,j] = b[j*m-k]; window products whose structured factor is fully
    finite run through the group-structured exact products, boundary
    windows (which contain out-of-range entries) are multiplied directly.
    """
    a = _as_sequence(a, "a")
    b = _as_sequence(b, "b")
    if len(a) != len(b):
        raise PreconditionError("sequences must have equal length")
    if which_is_bd not in ("a", "b"):
        raise PreconditionError("which_is_bd must be 'a' or 'b'")
    if w < 0:
        raise PreconditionError("w must be non-negative")
    n = len(a)
    if n == 0:
        return np.full(0, INF, dtype=np.int64)
    flagged = a if which_is_bd == "a" else b
    if (flagged == INF).any():
        idx = int((flagged == INF).argmax())
        raise BDViolationError("flagged sequence has an infinite entry", ("inf", idx))
    diffs = np.abs(np.diff(flagged))
    if diffs.size and int(diffs.max()) > w:
        idx = int(diffs.argmax())
        raise BDViolationError(
            f"flagged sequence differs by {int(diffs[idx])} > {w} at index {idx}",
            ("step", idx),
        )
    m = math.isqrt(n)
    if m * m < n:
        m += 1
    big = m * m
    aa = np.concatenate([a, np.full(big - n, INF, dtype=np.int64)])
    bb = np.concatenate([b, np.full(big - n, INF, dtype=np.int64)])
    gsz = group_size or max(1, int(round(math.sqrt(m))))
    groups = contiguous_groups(m, gsz)
    bound = (max(len(g) for g in groups) - 1) * w
    kk = np.arange(m)
    jj = np.arange(m + 1)
    idx_b = jj[None, :] * m - kk[:, None]
    valid_b = (idx_b >= 0) & (idx_b < big)
    bmat = np.where(valid_b, bb[np.clip(idx_b, 0, big - 1)], INF)
    c = np.full(2 * n - 1, INF, dtype=np.int64)
    ii = np.arange(m)
    tmat = None
    for r in range(-1, m):
        idx_a = r * m + ii[:, None] + kk[None, :]
        valid_a = (idx_a >= 0) & (idx_a < big)
        amat = np.where(valid_a, aa[np.clip(idx_a, 0, big - 1)], INF)
        if not (amat != INF).any():
            continue
        rseed = _derived_seed(seed, r + 1)
        if which_is_bd == "a":
            if (amat != INF).all():
                prod = bd_rows_product(amat, bmat, groups, bound, rho=rho, seed=rseed)
            else:
                prod = naive_minplus(amat, bmat)
        else:
            prod = np.full((m, m + 1), INF, dtype=np.int64)
            interior = [
                j
                for j in range(m + 1)
                if j * m - (m - 1) >= 0 and j * m <= n - 1
            ]
            rest = [j for j in range(m + 1) if j not in interior]
            if interior:
                bt = bmat[:, interior].T  # fully finite by choice of columns
                pt = bd_cols_product(bt, amat.T, groups, bound, rho=rho, seed=rseed)
                prod[:, interior] = pt.T
            if rest:
                prod[:, rest] = naive_minplus(amat, bmat[:, rest])
        t = (r + jj[None, :]) * m + ii[:, None]
        ok = (t >= 0) & (t <= 2 * n - 2) & (prod != INF)
        np.minimum.at(c, t[ok], prod[ok])
    return c

"""Shared test utilities: independent oracles and the bundled grammar corpus.

Oracles here deliberately avoid the library's internal code paths: the
triple-loop product is plain Python, the relaxed-normal-form scorer closes
unit-like steps at parse time (instead of rewriting the grammar) with
Floyd-Warshall distances (instead of Dijkstra), the edit oracle searches
edit sequences outright, and the pairing oracle is an independent batched
interval DP.
"""

from __future__ import annotations

import itertools

import numpy as np

from bdmp import (
    INF,
    EditModel,
    Production,
    RnaAlphabet,
    ScoredGrammar,
    build_led_grammar,
    build_osg_grammar,
    build_rna_grammar,
    cyk_scores,
    to_cnf,
)


def triple_loop_minplus(a, b):
    """Independent reference product in plain Python."""
    a = np.asarray(a)
    b = np.asarray(b)
    n, m = a.shape
    p = b.shape[1]
    out = [[INF] * p for _ in range(n)]
    for i in range(n):
        for j in range(p):
            best = INF
            for k in range(m):
                x, y = int(a[i, k]), int(b[k, j])
                if x != INF and y != INF and x + y < best:
                    best = x + y
            out[i][j] = best
    return np.asarray(out, dtype=np.int64)


def triple_loop_convolution(a, b):
    n = len(a)
    out = [INF] * (2 * n - 1)
    for i in range(n):
        for j in range(n):
            x, y = int(a[i]), int(b[j])
            if x != INF and y != INF and x + y < out[i + j]:
                out[i + j] = x + y
    return np.asarray(out, dtype=np.int64)


# ---------------------------------------------------------------------------
# relaxed-normal-form scorer (handles empty and unit productions at parse time)


def _float_scores(g: ScoredGrammar):
    nts = sorted(g.nonterminals)
    idx = {nt: i for i, nt in enumerate(nts)}
    n = len(nts)
    eps = np.full(n, np.inf)
    for p in g.productions:
        if len(p.rhs) == 0:
            eps[idx[p.lhs]] = min(eps[idx[p.lhs]], p.score)
    while True:  # value iteration to the fixpoint
        changed = False
        for p in g.productions:
            if len(p.rhs) == 2 and all(s in idx for s in p.rhs):
                cand = p.score + eps[idx[p.rhs[0]]] + eps[idx[p.rhs[1]]]
            elif len(p.rhs) == 1 and p.rhs[0] in idx:
                cand = p.score + eps[idx[p.rhs[0]]]
            else:
                continue
            if cand < eps[idx[p.lhs]]:
                eps[idx[p.lhs]] = cand
                changed = True
        if not changed:
            break
    # unit-like steps: direct units plus binary productions with one child
    # collapsing to the empty string
    dist = np.full((n, n), np.inf)
    dist[np.arange(n), np.arange(n)] = 0.0
    for p in g.productions:
        if len(p.rhs) == 1 and p.rhs[0] in idx:
            x, y = idx[p.lhs], idx[p.rhs[0]]
            dist[x, y] = min(dist[x, y], p.score)
        elif len(p.rhs) == 2 and all(s in idx for s in p.rhs):
            x = idx[p.lhs]
            y, z = idx[p.rhs[0]], idx[p.rhs[1]]
            dist[x, z] = min(dist[x, z], p.score + eps[y])
            dist[x, y] = min(dist[x, y], p.score + eps[z])
    for k in range(n):  # Floyd-Warshall
        dist = np.minimum(dist, dist[:, k : k + 1] + dist[k : k + 1, :])
    return nts, idx, eps, dist


def relaxed_scores(g: ScoredGrammar, strings) -> np.ndarray:
    """Whole-string scores (len(strings) x |N|) for relaxed-normal-form grammars.

    Interval DP with a per-span closure over generalized unit steps,
    batched over strings of equal length; float infinities keep the
    arithmetic trivial and the integer scores exact.
    """
    nts, idx, eps, dist = _float_scores(g)
    n_nt = len(nts)
    terms = sorted(g.terminals)
    t_idx = {t: i for i, t in enumerate(terms)}
    term_core = np.full((n_nt, max(1, len(terms))), np.inf)
    for p in g.productions:
        if len(p.rhs) == 1 and p.rhs[0] in t_idx:
            term_core[idx[p.lhs], t_idx[p.rhs[0]]] = min(
                term_core[idx[p.lhs], t_idx[p.rhs[0]]], p.score
            )
    binaries = [
        (idx[p.lhs], idx[p.rhs[0]], idx[p.rhs[1]], p.score)
        for p in g.productions
        if len(p.rhs) == 2 and all(s in idx for s in p.rhs)
    ]
    out = np.full((len(strings), n_nt), np.inf)
    by_len: dict[int, list[int]] = {}
    for i, s in enumerate(strings):
        by_len.setdefault(len(s), []).append(i)
    for n, members in by_len.items():
        if n == 0:
            out[members] = eps
            continue
        chunk = max(1, 4_000_000 // max(1, n_nt * (n + 1) * (n + 1)))
        for c0 in range(0, len(members), chunk):
            part = members[c0 : c0 + chunk]
            codes = np.asarray(
                [[t_idx[sym] for sym in strings[i]] for i in part], dtype=np.int64
            )
            bsz = len(part)
            cell = np.full((bsz, n_nt, n + 1, n + 1), np.inf)
            for length in range(1, n + 1):
                starts = np.arange(n - length + 1)
                core = np.full((bsz, n_nt, len(starts)), np.inf)
                if length == 1:
                    for x in range(n_nt):
                        core[:, x, :] = term_core[x][codes]
                for z, x, y, s in binaries:
                    for d in range(1, length):
                        left = np.diagonal(cell[:, x], offset=d, axis1=1, axis2=2)[
                            :, : len(starts)
                        ]
                        right = np.diagonal(
                            cell[:, y], offset=length - d, axis1=1, axis2=2
                        )[:, d : d + len(starts)]
                        np.minimum(core[:, z], left + right + s, out=core[:, z])
                closed = (dist[None, :, :, None] + core[:, None, :, :]).min(axis=2)
                cell[:, :, starts, starts + length] = closed
            out[part] = cell[:, :, 0, n]
    res = np.full(out.shape, INF, dtype=np.int64)
    finite = ~np.isinf(out)
    res[finite] = out[finite].astype(np.int64)
    return res


def relaxed_start_scores(g: ScoredGrammar, strings) -> np.ndarray:
    nts = sorted(g.nonterminals)
    return relaxed_scores(g, strings)[:, nts.index(g.start)]


# ---------------------------------------------------------------------------
# application oracles


def edit_search_distance(g: ScoredGrammar, sigma, model: EditModel, cap: int = 4):
    """Breadth-first search over edit sequences; None when the cap is exceeded."""
    zeroed = ScoredGrammar(
        g.nonterminals,
        g.terminals,
        g.start,
        tuple(Production(p.lhs, p.rhs, 0) for p in g.productions),
    )
    terms = sorted(g.terminals)
    frontier = {tuple(sigma)}
    seen = set(frontier)
    for d in range(cap + 1):
        if frontier:
            scores = cyk_scores(zeroed, [list(s) for s in frontier])
            if (scores == 0).any():
                return d
        nxt = set()
        for s in frontier:
            for i in range(len(s) + 1):
                for t in terms:
                    cand = s[:i] + (t,) + s[i:]
                    if cand not in seen:
                        seen.add(cand)
                        nxt.add(cand)
            for i in range(len(s)):
                cand = s[:i] + s[i + 1 :]
                if cand not in seen:
                    seen.add(cand)
                    nxt.add(cand)
                if model.allow_substitution:
                    for t in terms:
                        cand = s[:i] + (t,) + s[i + 1 :]
                        if cand not in seen:
                            seen.add(cand)
                            nxt.add(cand)
        frontier = nxt
    return None


def nussinov_many(strings, alphabet: RnaAlphabet) -> np.ndarray:
    """Batched independent pairing DP over equal-length symbol-code strings."""
    syms = list(alphabet.symbols)
    code = {s: i for i, s in enumerate(syms)}
    match = np.zeros((len(syms), len(syms)), dtype=bool)
    for s in syms:
        match[code[s], code[alphabet.partner(s)]] = True
    if not strings:
        return np.zeros(0, dtype=np.int64)
    n = len(strings[0])
    assert all(len(s) == n for s in strings)
    if n == 0:
        return np.zeros(len(strings), dtype=np.int64)
    codes = np.asarray([[code[s] for s in string] for string in strings])
    bsz = len(strings)
    best = np.zeros((bsz, n + 1, n + 1), dtype=np.int64)  # spans [i, j)
    for length in range(2, n + 1):
        starts = np.arange(n - length + 1)
        acc = np.diagonal(best, offset=length - 1, axis1=1, axis2=2)[:, 1 : len(starts) + 1]
        acc = acc.copy()  # skip-first-symbol option
        for k_off in range(1, length):
            ks = starts + k_off
            pair_ok = match[codes[:, starts], codes[:, ks]]
            inner = best[:, starts + 1, ks]
            after = best[:, ks + 1, starts + length]
            cand = np.where(pair_ok, inner + after + 1, -1)
            np.maximum(acc, cand, out=acc)
        best[:, starts, starts + length] = acc
    return best[:, 0, n]


# ---------------------------------------------------------------------------
# bundled grammar corpus


def dyck_cnf() -> ScoredGrammar:
    """Strict-CNF grammar of non-empty balanced parentheses, all scores zero."""
    P = Production
    prods = [
        P("S0", ("L", "R"), 0),
        P("S0", ("L", "T"), 0),
        P("S0", ("S", "S"), 0),
        P("S", ("L", "R"), 0),
        P("S", ("L", "T"), 0),
        P("S", ("S", "S"), 0),
        P("T", ("S", "R"), 0),
        P("L", ("(",), 0),
        P("R", (")",), 0),
    ]
    return ScoredGrammar(
        frozenset({"S0", "S", "L", "R", "T"}),
        frozenset({"(", ")"}),
        "S0",
        tuple(prods),
    )


def weighted_toy_cnf() -> ScoredGrammar:
    """Small ambiguous CNF grammar with non-trivial scores."""
    P = Production
    prods = [
        P("S0", ("A", "B"), 2),
        P("S0", ("B", "A"), 3),
        P("S0", ("A", "A"), 5),
        P("A", ("A", "A"), 1),
        P("A", ("a",), 1),
        P("A", ("b",), 4),
        P("B", ("b",), 0),
        P("B", ("B", "A"), 2),
    ]
    return ScoredGrammar(
        frozenset({"S0", "A", "B"}), frozenset({"a", "b"}), "S0", tuple(prods)
    )


def chain_toy_almost_cnf() -> ScoredGrammar:
    """Relaxed-form toy with empty productions, unit chains and start on the right."""
    P = Production
    prods = [
        P("S", ("A", "B"), 0),
        P("S", ("B", "S"), 1),
        P("A", (), 1),
        P("A", ("C",), 2),
        P("C", ("c",), 0),
        P("C", (), 3),
        P("B", ("b",), 0),
        P("B", ("A", "C"), 1),
    ]
    return ScoredGrammar(
        frozenset({"S", "A", "B", "C"}), frozenset({"b", "c"}), "S", tuple(prods)
    )


RNA_AB = RnaAlphabet(("a", "b"))
OSG_AB = ("A", "B")


def bundled_cnf_grammars() -> dict:
    """Name -> (CNF grammar, two-symbol alphabet slice for exhaustive sweeps)."""
    return {
        "dyck": (dyck_cnf(), ["(", ")"]),
        "weighted-toy": (weighted_toy_cnf(), ["a", "b"]),
        "led-dyck": (
            to_cnf(build_led_grammar(dyck_cnf(), EditModel(allow_substitution=False))),
            ["(", ")"],
        ),
        "rna-ab": (to_cnf(build_rna_grammar(RNA_AB)), ["a", "a'"]),
        "osg-ab": (to_cnf(build_osg_grammar(OSG_AB)), ["A", "B"]),
    }


def bundled_almost_cnf_grammars() -> dict:
    return {
        "chain-toy": chain_toy_almost_cnf(),
        "led-dyck": build_led_grammar(dyck_cnf(), EditModel(allow_substitution=False)),
        "rna-ab": build_rna_grammar(RNA_AB),
        "osg-ab": build_osg_grammar(OSG_AB),
    }


def all_strings(alphabet, max_len: int, min_len: int = 1):
    for length in range(min_len, max_len + 1):
        yield from (list(s) for s in itertools.product(alphabet, repeat=length))

"""Scored context-free grammars and the score-preserving normal-form pipeline.

A scored grammar attaches a non-negative integer cost to every production;
the cost of a string is the cheapest derivation.  The pipeline here turns
any grammar in the relaxed normal form (binary/terminal productions plus
empty productions, unit productions, and the start symbol on right-hand
sides) into strict Chomsky normal form without changing the cost of any
non-empty string, recording the empty string's cost on the fresh start
symbol.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from functools import cached_property

from .matrix_core import INF, FormatError, PreconditionError

FRESH_PREFIX = "@"


@dataclass(frozen=True)
class Production:
    lhs: str
    rhs: tuple[str, ...]
    score: int

    def __str__(self) -> str:
        rhs = " ".join(self.rhs) if self.rhs else "eps"
        return f"{self.score} {self.lhs} -> {rhs}"


@dataclass(frozen=True)
class ScoredGrammar:
    """Immutable scored CFG; duplicate (lhs, rhs) pairs keep the minimum score."""

    nonterminals: frozenset
    terminals: frozenset
    start: str
    productions: tuple

    def __post_init__(self):
        if self.nonterminals & self.terminals:
            clash = sorted(self.nonterminals & self.terminals)[0]
            raise PreconditionError(f"symbol {clash!r} is both terminal and non-terminal")
        if self.start not in self.nonterminals:
            raise PreconditionError(f"start symbol {self.start!r} is not a non-terminal")
        merged: dict[tuple[str, tuple[str, ...]], int] = {}
        for p in self.productions:
            if p.lhs not in self.nonterminals:
                raise PreconditionError(f"unknown left-hand side {p.lhs!r}")
            for sym in p.rhs:
                if sym not in self.nonterminals and sym not in self.terminals:
                    raise PreconditionError(f"unknown symbol {sym!r} in {p}")
            if not isinstance(p.score, int) or p.score < 0:
                raise PreconditionError(f"score of {p} must be a non-negative integer")
            key = (p.lhs, p.rhs)
            if key not in merged or p.score < merged[key]:
                merged[key] = p.score
        normalized = tuple(
            Production(lhs, rhs, score)
            for (lhs, rhs), score in sorted(merged.items())
        )
        object.__setattr__(self, "productions", normalized)

    @cached_property
    def binary_productions(self) -> tuple:
        return tuple(p for p in self.productions if len(p.rhs) == 2)

    @cached_property
    def terminal_productions(self) -> tuple:
        return tuple(
            p for p in self.productions if len(p.rhs) == 1 and p.rhs[0] in self.terminals
        )

    @cached_property
    def unit_productions(self) -> tuple:
        return tuple(
            p
            for p in self.productions
            if len(p.rhs) == 1 and p.rhs[0] in self.nonterminals
        )

    @cached_property
    def epsilon_productions(self) -> tuple:
        return tuple(p for p in self.productions if len(p.rhs) == 0)

    @cached_property
    def nt_index(self) -> dict:
        return {nt: i for i, nt in enumerate(sorted(self.nonterminals))}

    @cached_property
    def terminal_index(self) -> dict:
        return {t: i for i, t in enumerate(sorted(self.terminals))}

    def epsilon_score(self, nt: str | None = None) -> int:
        """Direct empty-production score of a non-terminal (INF if absent)."""
        nt = self.start if nt is None else nt
        for p in self.epsilon_productions:
            if p.lhs == nt:
                return p.score
        return INF

    def with_productions(self, productions, start: str | None = None) -> "ScoredGrammar":
        extra_nts = {p.lhs for p in productions}
        for p in productions:
            extra_nts.update(s for s in p.rhs if s not in self.terminals)
        return ScoredGrammar(
            self.nonterminals | frozenset(extra_nts),
            self.terminals,
            start or self.start,
            tuple(productions),
        )


@dataclass(frozen=True)
class GrammarClass:
    """Tightest class of a grammar; witness shows why the next-tighter class fails."""

    kind: str  # "cnf" | "almost-cnf" | "general"
    witness: Production | None = None


def fresh_name(base: str, taken) -> str:
    name = FRESH_PREFIX + base
    k = 2
    while name in taken:
        name = f"{FRESH_PREFIX}{base}{k}"
        k += 1
    return name


def classify(g: ScoredGrammar) -> GrammarClass:
    """Tightest of strict CNF, the relaxed (almost) normal form, or general."""

    def cnf_ok(p: Production) -> bool:
        if len(p.rhs) == 2:
            return all(s in g.nonterminals and s != g.start for s in p.rhs)
        if len(p.rhs) == 1:
            return p.rhs[0] in g.terminals
        # only the start may derive the empty string
        return len(p.rhs) == 0 and p.lhs == g.start

    def almost_ok(p: Production) -> bool:
        if len(p.rhs) == 2:
            return all(s in g.nonterminals for s in p.rhs)
        if len(p.rhs) == 1:
            return p.rhs[0] in g.terminals or p.rhs[0] in g.nonterminals
        return len(p.rhs) == 0

    cnf_witness = next((p for p in g.productions if not cnf_ok(p)), None)
    if cnf_witness is None:
        return GrammarClass("cnf", None)
    almost_witness = next((p for p in g.productions if not almost_ok(p)), None)
    if almost_witness is None:
        return GrammarClass("almost-cnf", cnf_witness)
    return GrammarClass("general", almost_witness)


def epsilon_scores(g: ScoredGrammar) -> dict:
    """Cheapest empty-string derivation cost per non-terminal.

    Relaxation over the productions for |N| rounds suffices because a
    minimum-score empty derivation never repeats its root symbol, so its
    parse tree has depth at most |N|; one extra round asserts the fixpoint.
    """
    s = {nt: INF for nt in g.nonterminals}
    for p in g.epsilon_productions:
        s[p.lhs] = min(s[p.lhs], p.score)

    def relax() -> bool:
        changed = False
        for p in g.productions:
            if len(p.rhs) == 2:
                y, z = p.rhs
                if y in s and z in s and s[y] < INF and s[z] < INF:
                    cand = p.score + s[y] + s[z]
                    if cand < s[p.lhs]:
                        s[p.lhs] = cand
                        changed = True
            elif len(p.rhs) == 1 and p.rhs[0] in g.nonterminals:
                y = p.rhs[0]
                if s[y] < INF:
                    cand = p.score + s[y]
                    if cand < s[p.lhs]:
                        s[p.lhs] = cand
                        changed = True
        return changed

    for _ in range(len(g.nonterminals)):
        if not relax():
            break
    else:
        if relax():
            raise AssertionError(
                "empty-derivation relaxation not a fixpoint after |N| rounds"
            )
    return {nt: v for nt, v in s.items() if v < INF}


def eliminate_epsilon(g: ScoredGrammar) -> ScoredGrammar:
    """Remove empty productions, preserving scores of all non-empty strings.

    For every binary production with a nullable child, a unit production
    absorbing that child's cheapest empty derivation is added (skipping the
    self-loop case), then all empty productions are dropped.
    """
    cls = classify(g)
    if cls.kind == "general":
        raise PreconditionError(f"not in the relaxed normal form: {cls.witness}")
    s = epsilon_scores(g)
    new = list(g.productions)
    for p in g.binary_productions:
        y, z = p.rhs
        if y in s and p.lhs != z:
            new.append(Production(p.lhs, (z,), p.score + s[y]))
        if z in s and p.lhs != y:
            new.append(Production(p.lhs, (y,), p.score + s[z]))
    new = [p for p in new if len(p.rhs) > 0]
    return g.with_productions(new)


def eliminate_start_rhs(
    g: ScoredGrammar, start_eps_score: int | None = None
) -> ScoredGrammar:
    """Wrap the start symbol so it never appears on a right-hand side.

    ``start_eps_score`` is the cheapest empty derivation of the original
    grammar (recorded before empty productions were eliminated); when
    given and finite it is re-attached to the fresh start symbol.
    """
    taken = g.nonterminals | g.terminals
    new_start = fresh_name("S", taken)
    prods = list(g.productions)
    prods.append(Production(new_start, (g.start,), 0))
    if start_eps_score is not None and start_eps_score < INF:
        prods.append(Production(new_start, (), start_eps_score))
    return g.with_productions(prods, start=new_start)


def eliminate_units(g: ScoredGrammar) -> ScoredGrammar:
    """Expand unit productions through cheapest unit paths.

    Unit productions form a non-negatively weighted graph over the
    non-terminals; every non-unit production is copied to each symbol that
    reaches its left-hand side, offset by the path cost, and the unit
    productions are dropped.
    """
    units = g.unit_productions
    non_units = [p for p in g.productions if p not in units]
    adj: dict[str, list[tuple[str, int]]] = {}
    for p in units:
        adj.setdefault(p.lhs, []).append((p.rhs[0], p.score))

    def dijkstra(src: str) -> dict:
        dist = {src: 0}
        heap = [(0, src)]
        while heap:
            d, u = heapq.heappop(heap)
            if d > dist.get(u, INF):
                continue
            for v, wgt in adj.get(u, ()):
                nd = d + wgt
                if nd < dist.get(v, INF):
                    dist[v] = nd
                    heapq.heappush(heap, (nd, v))
        return dist

    by_lhs: dict[str, list[Production]] = {}
    for p in non_units:
        by_lhs.setdefault(p.lhs, []).append(p)

    new = list(non_units)
    for src in g.nonterminals:
        dist = dijkstra(src)
        for dst, d in dist.items():
            if dst == src:
                continue
            for p in by_lhs.get(dst, ()):
                new.append(Production(src, p.rhs, d + p.score))
    return g.with_productions(new)


def to_cnf(g: ScoredGrammar) -> ScoredGrammar:
    """Full pipeline to strict CNF; scores of non-empty strings are unchanged.

    Membership and score of the empty string carry over to the fresh start
    symbol, and the bounded-difference width of the scored language is
    preserved by every stage.
    """
    cls = classify(g)
    if cls.kind == "general":
        raise PreconditionError(f"not in the relaxed normal form: {cls.witness}")
    eps = epsilon_scores(g)
    g1 = eliminate_epsilon(g)
    g2 = eliminate_start_rhs(g1, start_eps_score=eps.get(g.start))
    g3 = eliminate_units(g2)
    out_cls = classify(g3)
    if out_cls.kind != "cnf":
        raise AssertionError(f"conversion did not reach CNF: {out_cls.witness}")
    return g3


def bd_width_probe(
    g: ScoredGrammar, max_len: int, samples: int | None = None, seed: int = 0
) -> int:
    """Largest observed one-sided score step of a CNF grammar.

    Samples (or, with ``samples=None``, exhaustively enumerates) strings up
    to ``max_len`` and compares every non-terminal's score against all
    single-character extensions on either side, skipping pairs with an
    infinite score.
    """
    import itertools

    import numpy as np

    from .scored_parser import cyk_all_scores

    if classify(g).kind != "cnf":
        raise PreconditionError("width probe expects a CNF grammar")
    terms = sorted(g.terminals)
    if not terms or max_len < 1:
        return 0
    if samples is None:
        base = [
            list(s)
            for length in range(1, max_len + 1)
            for s in itertools.product(terms, repeat=length)
        ]
    else:
        rng = np.random.default_rng(seed)
        base = []
        for _ in range(samples):
            length = int(rng.integers(1, max_len + 1))
            base.append([terms[int(i)] for i in rng.integers(0, len(terms), length)])
    needed: dict[tuple, None] = {}
    for s in base:
        needed.setdefault(tuple(s), None)
        for x in terms:
            needed.setdefault(tuple(s) + (x,), None)
            needed.setdefault((x,) + tuple(s), None)
    ordered = list(needed)
    scores = cyk_all_scores(g, [list(s) for s in ordered])
    lookup = {s: scores[i] for i, s in enumerate(ordered)}
    width = 0
    for s in base:
        t = tuple(s)
        sc = lookup[t]
        for x in terms:
            for ext in (t + (x,), (x,) + t):
                se = lookup[ext]
                both = (sc != INF) & (se != INF)
                if both.any():
                    width = max(width, int(np.abs(sc[both] - se[both]).max()))
    return width


# ---------------------------------------------------------------------------
# text format


def format_grammar(g: ScoredGrammar) -> str:
    """Serialise: a start line, then '<score> <LHS> -> <rhs tokens>' lines.

    Terminals are single-quoted; ``eps`` denotes an empty right-hand side.
    """
    lines = [f"start {g.start}"]
    for p in g.productions:
        if p.rhs:
            rhs = " ".join(f"'{s}'" if s in g.terminals else s for s in p.rhs)
        else:
            rhs = "eps"
        lines.append(f"{p.score} {p.lhs} -> {rhs}")
    return "\n".join(lines) + "\n"


def parse_grammar(text: str) -> ScoredGrammar:
    start = None
    prods: list[tuple[int, str, list[tuple[str, bool]]]] = []
    terminals: set[str] = set()
    nonterminals: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        if toks[0] == "start":
            if len(toks) != 2:
                raise FormatError(f"line {lineno}: start line needs one symbol")
            if start is not None:
                raise FormatError(f"line {lineno}: duplicate start line")
            start = toks[1]
            nonterminals.add(start)
            continue
        if len(toks) < 4 or toks[2] != "->":
            raise FormatError(
                f"line {lineno}: expected '<score> <LHS> -> <rhs>', got {raw!r}"
            )
        try:
            score = int(toks[0])
        except ValueError:
            raise FormatError(f"line {lineno}: bad score {toks[0]!r}") from None
        if score < 0:
            raise FormatError(f"line {lineno}: negative score")
        lhs = toks[1]
        nonterminals.add(lhs)
        rhs: list[tuple[str, bool]] = []
        rest = toks[3:]
        if rest == ["eps"]:
            rest = []
        for tok in rest:
            if tok.startswith("'"):
                if len(tok) < 3 or not tok.endswith("'"):
                    raise FormatError(f"line {lineno}: bad terminal token {tok!r}")
                sym = tok[1:-1]
                terminals.add(sym)
                rhs.append((sym, True))
            else:
                nonterminals.add(tok)
                rhs.append((tok, False))
        prods.append((score, lhs, rhs))
    if start is None:
        raise FormatError("missing 'start <symbol>' line")
    clash = terminals & nonterminals
    if clash:
        raise FormatError(f"symbol {sorted(clash)[0]!r} used as terminal and non-terminal")
    try:
        return ScoredGrammar(
            frozenset(nonterminals),
            frozenset(terminals),
            start,
            tuple(
                Production(lhs, tuple(sym for sym, _ in rhs), score)
                for score, lhs, rhs in prods
            ),
        )
    except PreconditionError as exc:
        raise FormatError(str(exc)) from None


def write_grammar(path, g: ScoredGrammar) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(format_grammar(g))


def read_grammar(path) -> ScoredGrammar:
    with open(path, "r", encoding="utf-8") as f:
        return parse_grammar(f.read())

"""Grammar builders and end-to-end solvers for the three scored-parsing applications.

Language edit distance augments a CNF grammar with unit-cost edit
productions; folding of paired-symbol sequences is the insert/delete-only
edit distance to the two-sided pairing language; the stack-program
problem scores each push/emit/pop as one operation.  Every solver is
paired with an independent oracle (the cubic pairing DP, uniform-cost
search over stack states) used by tests and the command line's
cross-check mode.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from functools import lru_cache

from .matrix_core import INF, PreconditionError
from .scored_grammar import (
    Production,
    ScoredGrammar,
    classify,
    fresh_name,
    to_cnf,
)
from .scored_parser import DotStats, parse_score

LED_WIDTH_HINT = 1  # edit-augmented grammars step scores by at most one symbol edit
OSG_WIDTH_HINT = 5  # stack grammars step scores by at most one push/emit/pop detour


@dataclass(frozen=True)
class EditModel:
    """Unit-cost edit operations; costs are configurable but default to 1."""

    allow_substitution: bool = True
    insertion_cost: int = 1
    deletion_cost: int = 1
    substitution_cost: int = 1


@dataclass(frozen=True)
class RnaAlphabet:
    """Base symbols and their primed partners, pairing c with c'."""

    bases: tuple

    def __post_init__(self):
        if not self.bases:
            raise PreconditionError("alphabet must not be empty")
        if len(set(self.bases)) != len(self.bases):
            raise PreconditionError("duplicate base symbol")
        if set(self.bases) & set(self.primed):
            raise PreconditionError("base and primed symbol sets must be disjoint")

    @property
    def primed(self) -> tuple:
        return tuple(b + "'" for b in self.bases)

    @property
    def symbols(self) -> tuple:
        return self.bases + self.primed

    def partner(self, sym: str) -> str:
        if sym in self.bases:
            return sym + "'"
        if sym in self.primed:
            return sym[:-1]
        raise PreconditionError(f"symbol {sym!r} outside the alphabet")

    def matches(self, x: str, y: str) -> bool:
        return self.partner(x) == y


def _augment_insert_delete(g: ScoredGrammar, model: EditModel) -> ScoredGrammar:
    """Insertion and deletion productions around an existing grammar.

    One fresh wrapper per terminal feeds a filler non-terminal that
    generates any string at the insertion cost per symbol and attaches to
    every non-terminal on either side; every non-terminal that can emit a
    terminal may instead delete it.
    """
    terms = sorted(g.terminals)
    prods = list(g.productions)
    taken = set(g.nonterminals) | set(g.terminals)
    wrappers = {}
    for t in terms:
        name = fresh_name(f"X_{t}", taken)
        taken.add(name)
        wrappers[t] = name
        prods.append(Production(name, (t,), 0))
    filler = fresh_name("I", taken)
    for t in terms:
        prods.append(Production(filler, (wrappers[t], filler), model.insertion_cost))
        prods.append(Production(filler, (filler, wrappers[t]), model.insertion_cost))
    prods.append(Production(filler, (), 0))
    for nt in sorted(g.nonterminals) + [wrappers[t] for t in terms]:
        prods.append(Production(nt, (nt, filler), 0))
        prods.append(Production(nt, (filler, nt), 0))
    emitters = {p.lhs for p in prods if len(p.rhs) == 1 and p.rhs[0] in g.terminals}
    for nt in sorted(emitters):
        prods.append(Production(nt, (), model.deletion_cost))
    return ScoredGrammar(
        g.nonterminals | frozenset(wrappers.values()) | {filler},
        g.terminals,
        g.start,
        tuple(prods),
    )


def build_led_grammar(g: ScoredGrammar, model: EditModel = EditModel()) -> ScoredGrammar:
    """Edit-augmented grammar whose parse score of s is the edit distance of s to L(g).

    All original productions are reset to score zero, substitutions (when
    enabled) retarget each terminal production, then the insert/delete
    augmentation is applied.
    """
    if classify(g).kind != "cnf":
        raise PreconditionError("edit augmentation expects a CNF grammar")
    prods = [Production(p.lhs, p.rhs, 0) for p in g.productions]
    if model.allow_substitution:
        for p in g.terminal_productions:
            for other in sorted(g.terminals):
                prods.append(Production(p.lhs, (other,), model.substitution_cost))
    zeroed = ScoredGrammar(g.nonterminals, g.terminals, g.start, tuple(prods))
    return _augment_insert_delete(zeroed, model)


@lru_cache(maxsize=64)
def _converted_led(g: ScoredGrammar, model: EditModel) -> ScoredGrammar:
    return to_cnf(build_led_grammar(g, model))


def led_distance(
    g: ScoredGrammar,
    sigma,
    model: EditModel = EditModel(),
    engine: str = "valiant",
    *,
    stats: DotStats | None = None,
) -> int:
    """Minimum number of edits turning ``sigma`` into a member of L(g)."""
    return int(
        parse_score(_converted_led(g, model), list(sigma), engine, LED_WIDTH_HINT, stats=stats)
    )


def build_rna_grammar(alphabet: RnaAlphabet) -> ScoredGrammar:
    """Insert/delete-augmented pairing grammar over the alphabet.

    The pairing core derives the empty string, concatenations, and c S c'
    or c' S c around any derivation (two-sided matching), all at score
    zero; the augmentation then prices unmatched symbols at one edit each.
    """
    start = "S"
    nts = {start}
    terms = set(alphabet.symbols)
    prods = [
        Production(start, (start, start), 0),
        Production(start, (), 0),
    ]
    taken = set(terms) | nts
    for base in alphabet.bases:
        primed = alphabet.partner(base)
        tb = fresh_name(f"T_{base}", taken)
        taken.add(tb)
        tp = fresh_name(f"T_{primed}", taken)
        taken.add(tp)
        fwd = fresh_name(f"P_{base}", taken)
        taken.add(fwd)
        rev = fresh_name(f"Q_{base}", taken)
        taken.add(rev)
        nts.update({tb, tp, fwd, rev})
        prods.append(Production(tb, (base,), 0))
        prods.append(Production(tp, (primed,), 0))
        prods.append(Production(start, (tb, fwd), 0))
        prods.append(Production(fwd, (start, tp), 0))
        prods.append(Production(start, (tp, rev), 0))
        prods.append(Production(rev, (start, tb), 0))
    base_grammar = ScoredGrammar(frozenset(nts), frozenset(terms), start, tuple(prods))
    return _augment_insert_delete(base_grammar, EditModel(allow_substitution=False))


@lru_cache(maxsize=16)
def _converted_rna(alphabet: RnaAlphabet) -> ScoredGrammar:
    return to_cnf(build_rna_grammar(alphabet))


def rna_fold(
    sigma,
    alphabet: RnaAlphabet,
    engine: str = "valiant",
    *,
    stats: DotStats | None = None,
) -> tuple[int, int]:
    """(edit distance to the pairing language, maximum non-crossing pairs)."""
    sigma = list(sigma)
    for sym in sigma:
        if sym not in alphabet.symbols:
            raise PreconditionError(f"symbol {sym!r} outside the alphabet")
    d = int(
        parse_score(_converted_rna(alphabet), sigma, engine, LED_WIDTH_HINT, stats=stats)
    )
    if (len(sigma) - d) % 2 != 0:
        raise AssertionError("edit distance parity violates the pairing identity")
    return d, (len(sigma) - d) // 2


def nussinov_oracle(sigma, alphabet: RnaAlphabet) -> int:
    """Cubic interval DP for the maximum number of non-crossing matched pairs."""
    sigma = list(sigma)
    n = len(sigma)
    for sym in sigma:
        if sym not in alphabet.symbols:
            raise PreconditionError(f"symbol {sym!r} outside the alphabet")
    if n == 0:
        return 0
    best = [[0] * (n + 1) for _ in range(n + 1)]  # best[i][j] over span [i, j)
    for length in range(2, n + 1):
        for i in range(n - length + 1):
            j = i + length
            v = best[i + 1][j]
            for k in range(i + 1, j):
                if alphabet.matches(sigma[i], sigma[k]):
                    v = max(v, best[i + 1][k] + best[k + 1][j] + 1)
            best[i][j] = v
    return best[0][n]


def build_osg_grammar(alphabet) -> ScoredGrammar:
    """Stack-operation grammar: parse score equals push+emit+pop count.

    The start symbol stands for an empty stack, one non-terminal per
    symbol stands for having it on top, and a pre-emit symbol prices each
    printed character; the extra pre-emit-to-top productions only smooth
    the scored language's steps and never change it.
    """
    syms = tuple(alphabet)
    if not syms:
        raise PreconditionError("alphabet must not be empty")
    if len(set(syms)) != len(syms):
        raise PreconditionError("duplicate alphabet symbol")
    start = "S"
    tops = {c: f"X_{c}" for c in syms}
    emits = {c: f"N_{c}" for c in syms}
    nts = {start, *tops.values(), *emits.values()}
    if nts & set(syms):
        raise PreconditionError("alphabet symbols collide with grammar symbols")
    prods = [Production(start, (), 0)]
    for c in syms:
        prods.append(Production(start, (tops[c], start), 1))
        prods.append(Production(tops[c], (emits[c], tops[c]), 0))
        prods.append(Production(tops[c], (), 1))
        prods.append(Production(emits[c], (c,), 1))
        for c2 in syms:
            prods.append(Production(tops[c], (tops[c2], tops[c]), 1))
            prods.append(Production(emits[c], (tops[c2],), 1))
    return ScoredGrammar(frozenset(nts), frozenset(syms), start, tuple(prods))


@lru_cache(maxsize=16)
def _converted_osg(alphabet: tuple) -> ScoredGrammar:
    return to_cnf(build_osg_grammar(alphabet))


def osg_min_ops(
    sigma,
    alphabet,
    engine: str = "valiant",
    *,
    stats: DotStats | None = None,
) -> int:
    """Minimum push/emit/pop operations printing ``sigma`` and emptying the stack."""
    sigma = list(sigma)
    alphabet = tuple(alphabet)
    for sym in sigma:
        if sym not in alphabet:
            raise PreconditionError(f"symbol {sym!r} outside the alphabet")
    if not sigma:
        return 0
    return int(
        parse_score(_converted_osg(alphabet), sigma, engine, OSG_WIDTH_HINT, stats=stats)
    )


def osg_search_oracle(sigma, alphabet, depth_cap: int | None = None) -> int:
    """Uniform-cost search over (printed prefix, stack) states.

    Push/emit/pop all cost one; emitting is only expanded when it prints
    the next required character.  The default stack cap of len(sigma)+1
    always admits an optimal run; a zero cap on a non-empty string is
    reported as unsolvable with a retry hint.
    """
    sigma = list(sigma)
    alphabet = tuple(alphabet)
    for sym in sigma:
        if sym not in alphabet:
            raise PreconditionError(f"symbol {sym!r} outside the alphabet")
    cap = len(sigma) + 1 if depth_cap is None else depth_cap
    n = len(sigma)
    start = (0, ())
    dist = {start: 0}
    heap = [(0, start)]
    while heap:
        d, (pos, stack) = heapq.heappop(heap)
        if d > dist.get((pos, stack), INF):
            continue
        if pos == n and not stack:
            return d

        def push_state(state, nd):
            if nd < dist.get(state, INF):
                dist[state] = nd
                heapq.heappush(heap, (nd, state))

        if len(stack) < cap:
            for c in alphabet:
                push_state((pos, stack + (c,)), d + 1)
        if stack:
            push_state((pos, stack[:-1]), d + 1)
            if pos < n and stack[-1] == sigma[pos]:
                push_state((pos + 1, stack), d + 1)
    raise PreconditionError(
        f"no stack program within depth cap {cap}; retry with a larger cap"
    )

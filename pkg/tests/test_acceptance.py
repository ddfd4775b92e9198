"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s``.  Tolerances are exact
(integer equality) everywhere; the few inequality criteria use the fixed
bounds stated inline.
"""

import itertools
import json
import os
import subprocess
import sys
from contextlib import contextmanager

import numpy as np

from bdmp import (
    BDProductConfig,
    DotStats,
    EditModel,
    bd_cols_product,
    bd_convolution,
    bd_product,
    bd_rows_product,
    bd_width_probe,
    contiguous_groups,
    cyk_scores,
    led_distance,
    naive_convolution,
    naive_minplus,
    nussinov_oracle,
    osg_min_ops,
    osg_search_oracle,
    parse_score,
    random_bd_matrix,
    rna_fold,
    to_cnf,
)
from bdmp.applications import _converted_led, _converted_osg, _converted_rna
from bdmp.bd_minplus import BlockScheme, phase1_block_approx
from helpers import (
    OSG_AB,
    RNA_AB,
    all_strings,
    bundled_almost_cnf_grammars,
    bundled_cnf_grammars,
    dyck_cnf,
    nussinov_many,
    relaxed_scores,
    weighted_toy_cnf,
)

NO_SUBS = EditModel(allow_substitution=False)
WITH_SUBS = EditModel(allow_substitution=True)


@contextmanager
def criterion(label, capsys=None):
    def announce(verdict):
        line = f"\n[ACCEPTANCE] {label}: {verdict}"
        if capsys is not None:
            with capsys.disabled():
                print(line, flush=True)
        else:
            print(line, flush=True)

    try:
        yield
    except BaseException:
        announce("FAIL")
        raise
    announce("PASS")


def test_c01_bd_product_oracle_equality(capsys):
    with criterion("C01 oracle equality, BD product (full parameter sweep)", capsys):
        for w in (0, 1, 3):
            for n in (8, 16, 32, 64, 128):
                for seed in range(20):
                    tag = 10_000 * w + 37 * n + seed
                    a = random_bd_matrix(n, w, 2 * tag + 1, base=seed - 10)
                    b = random_bd_matrix(n, w, 2 * tag + 2, base=3 * seed)
                    want = naive_minplus(a, b)
                    deltas = sorted({1, 2, 4, 8, n})
                    for delta in deltas:
                        for rho in (0, 1, 4, 16):
                            for mode in ("randomized", "deterministic"):
                                cfg = BDProductConfig(
                                    w=w, delta=delta, rho=rho, mode=mode, seed=seed
                                )
                                got = bd_product(a, b, cfg)
                                assert np.array_equal(got, want), (
                                    w, n, seed, delta, rho, mode,
                                )


def test_c02_phase1_additive_bound(capsys):
    with criterion("C02 blockwise approximation within 4*delta*w", capsys):
        for seed in range(100):
            a = random_bd_matrix(32, 1, 5000 + 2 * seed)
            b = random_bd_matrix(32, 1, 5001 + 2 * seed)
            c = naive_minplus(a, b)
            for delta in (2, 4, 8):
                scheme = BlockScheme.for_size(32, delta)
                approx = phase1_block_approx(a, b, scheme)
                assert int(np.abs(approx - c).max()) <= 4 * delta * 1, (seed, delta)


def test_c03_structured_generalizations(capsys):
    with criterion("C03 row-group and column-group products match the oracle", capsys):
        n = 32
        groups = contiguous_groups(n, 4)
        for seed in range(50):
            rng = np.random.default_rng(9000 + seed)
            a = random_bd_matrix(n, 1, 300 + seed)
            b = rng.integers(-(10**6), 10**6, (n, n)).astype(np.int64)
            want = naive_minplus(a, b)
            got_rows = bd_rows_product(a, b, groups, 4, rho=4, seed=seed)
            assert np.array_equal(got_rows, want), ("rows", seed)
            got_cols = bd_cols_product(a, b, groups, 4, rho=4, seed=seed)
            assert np.array_equal(got_cols, want), ("cols", seed)


def test_c04_convolution_matches_quadratic_oracle(capsys):
    with criterion("C04 sequence convolution matches the quadratic oracle", capsys):
        for n in (16, 64, 256):
            for seed in range(50):
                rng = np.random.default_rng(777 + 13 * n + seed)
                bd_seq = np.cumsum(rng.integers(-1, 2, n)).astype(np.int64)
                other = rng.integers(-1000, 1000, n).astype(np.int64)
                which = "a" if seed % 5 else "b"
                x, y = (bd_seq, other) if which == "a" else (other, bd_seq)
                got = bd_convolution(x, y, which, 1, seed=seed)
                assert np.array_equal(got, naive_convolution(x, y)), (n, seed, which)


def test_c05_parser_engine_equivalence(capsys):
    with criterion("C05 closure engine equals the cubic engine", capsys):
        grammars = bundled_cnf_grammars()
        # exhaustive over two-symbol alphabets up to length 6
        for name, (g, alpha) in grammars.items():
            strs = list(all_strings(alpha, 6))
            want = cyk_scores(g, strs)
            for sigma, expect in zip(strs, want):
                got = parse_score(g, sigma, "valiant")
                assert got == expect, (name, sigma, got, int(expect))
        # 500 sampled strings up to length 12, spread over the grammars
        rng = np.random.default_rng(42)
        for name, (g, alpha) in grammars.items():
            strs = [
                [alpha[i] for i in rng.integers(0, len(alpha), int(rng.integers(7, 13)))]
                for _ in range(100)
            ]
            want = cyk_scores(g, strs)
            for sigma, expect in zip(strs, want):
                got = parse_score(g, sigma, "valiant")
                assert got == expect, (name, sigma, got, int(expect))


def test_c06_conversion_preserves_scores(capsys):
    with criterion("C06 normal-form conversion preserves scores (length <= 8)", capsys):
        for name, g in bundled_almost_cnf_grammars().items():
            converted = to_cnf(g)
            terms = sorted(g.terminals)
            strs = [[]] + list(all_strings(terms, 8))
            want = relaxed_scores(g, strs)
            nts = sorted(g.nonterminals)
            want_start = want[:, nts.index(g.start)]
            got = cyk_scores(converted, strs)
            assert np.array_equal(got, want_start), name


def test_c07_bounded_difference_width_claims(capsys):
    with criterion("C07 probed score widths (edit grammars <= 1, stack grammar <= 5)", capsys):
        led_grammars = {
            "dyck-insdel": _converted_led(dyck_cnf(), NO_SUBS),
            "dyck-subst": _converted_led(dyck_cnf(), WITH_SUBS),
            "toy-insdel": _converted_led(weighted_toy_cnf(), NO_SUBS),
            "rna": _converted_rna(RNA_AB),
        }
        for name, g in led_grammars.items():
            width = bd_width_probe(g, 6)
            assert width <= 1, (name, width)
        osg_width = bd_width_probe(_converted_osg(OSG_AB), 6)
        assert osg_width <= 5, osg_width


def test_c08_rna_matches_pairing_oracle(capsys):
    with criterion("C08 fold pair counts match the pairing DP", capsys):
        converted = _converted_rna(RNA_AB)
        # exhaustive up to length 8 through the batched engine the solver uses
        for length in range(1, 9):
            strs = [list(s) for s in itertools.product(RNA_AB.symbols, repeat=length)]
            dist = cyk_scores(converted, strs)
            want = nussinov_many(strs, RNA_AB)
            assert ((length - dist) % 2 == 0).all(), length
            assert np.array_equal((length - dist) // 2, want), length
        # the per-string solver on all short strings plus a sample
        for sigma in all_strings(RNA_AB.symbols, 3, min_len=0):
            d, p = rna_fold(sigma, RNA_AB, "cyk")
            assert p == nussinov_oracle(sigma, RNA_AB)
            assert d == len(sigma) - 2 * p
        # 200 sampled strings of lengths 9..12
        rng = np.random.default_rng(7)
        syms = list(RNA_AB.symbols)
        for k in range(200):
            sigma = [syms[i] for i in rng.integers(0, 4, int(rng.integers(9, 13)))]
            engine = "valiant" if k < 10 else "cyk"
            d, p = rna_fold(sigma, RNA_AB, engine)
            assert p == nussinov_oracle(sigma, RNA_AB), sigma
            assert d == len(sigma) - 2 * p


def test_c09_osg_matches_search_oracle(capsys):
    with criterion("C09 stack-program counts match the search oracle", capsys):
        for k in (1, 2, 3):
            alpha = ("A", "B", "C")[:k]
            for sigma in all_strings(alpha, 5):
                got = osg_min_ops(sigma, alpha, "cyk")
                want = osg_search_oracle(sigma, alpha)
                assert got == want, (alpha, sigma, got, want)
        bccab = osg_min_ops(list("BCCAB"), ("A", "B", "C"), "cyk")
        assert bccab <= 11
        assert bccab == osg_search_oracle(list("BCCAB"), ("A", "B", "C"))


def test_c10_determinism(tmp_path, capsys):
    with criterion("C10 deterministic runs are bit-identical across repeats and threads", capsys):
        a = random_bd_matrix(64, 1, 31)
        b = random_bd_matrix(64, 1, 32)
        cfg = BDProductConfig(w=1, delta=8, rho=6, mode="deterministic")
        outputs = [bd_product(a, b, cfg).tobytes() for _ in range(3)]
        assert outputs[0] == outputs[1] == outputs[2]
        checksums = []
        for threads in ("1", "4", "1"):
            out = tmp_path / f"bench_{threads}_{len(checksums)}.jsonl"
            proc = subprocess.run(
                [
                    sys.executable, "-m", "bdmp.cli", "bench",
                    "--sizes", "48", "--deltas", "8", "--rhos", "4",
                    "--modes", "deterministic", "--w", "1", "--seed", "5",
                    "--threads", threads, "--out", str(out),
                ],
                capture_output=True,
                text=True,
                env=dict(os.environ),
            )
            assert proc.returncode == 0, proc.stderr
            checksums.append(
                [json.loads(ln)["checksum"] for ln in out.read_text().splitlines()]
            )
        assert checksums[0] == checksums[1] == checksums[2]


def test_c11_fallback_hygiene(capsys):
    with criterion("C11 no width-check fallbacks on real upper blocks (edit/stack parses)", capsys):
        rng = np.random.default_rng(3)
        dyck = dyck_cnf()
        led_strings = [list(s) for s in all_strings(["(", ")"], 4)]
        led_strings += [
            [("(", ")")[i] for i in rng.integers(0, 2, int(rng.integers(5, 11)))]
            for _ in range(20)
        ]
        total_bd = 0
        for sigma in led_strings:
            stats = DotStats()
            led_distance(dyck, sigma, NO_SUBS, "valiant", stats=stats)
            assert stats.fallback_upper == 0, sigma
            total_bd += stats.bd_products
        assert total_bd > 0
        osg_strings = [list(s) for s in all_strings(OSG_AB, 4)]
        osg_strings += [
            [OSG_AB[i] for i in rng.integers(0, 2, int(rng.integers(5, 11)))]
            for _ in range(20)
        ]
        for sigma in osg_strings:
            stats = DotStats()
            osg_min_ops(sigma, OSG_AB, "valiant", stats=stats)
            assert stats.fallback_upper == 0, sigma

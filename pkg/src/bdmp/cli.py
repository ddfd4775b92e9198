"""Command-line front end.

One executable with subcommands for matrix products, scored parsing, the
three applications, sequence convolution, and a benchmark sweep.  All
randomness flows from a single seed (drawn from the OS and echoed when not
given), scores print as plain text, and benchmark reports are JSON lines.

Exit codes: 0 success, 2 malformed input, 3 violated precondition
(including bounded-difference failures), 4 oracle cross-check mismatch
(always a library bug, never user error).

Every flag can also be supplied through an environment variable with the
``BDMP_`` prefix (for example ``BDMP_SEED``, ``BDMP_THREADS``,
``BDMP_ENGINE``); explicit flags win.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, field

EXIT_OK = 0
EXIT_FORMAT = 2
EXIT_PRECONDITION = 3
EXIT_ORACLE = 4


def _env(name: str, default=None):
    return os.environ.get("BDMP_" + name.upper(), default)


def _apply_threads(threads: int) -> None:
    for var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        os.environ[var] = str(threads)


@dataclass
class RunReport:
    """Machine-readable summary of one command invocation."""

    command: str
    config: dict
    phase_seconds: dict = field(default_factory=dict)
    fallback_counts: dict = field(default_factory=dict)
    checksum: str = ""

    def to_json(self) -> str:
        return json.dumps(
            {
                "command": self.command,
                "config": self.config,
                "phase_seconds": self.phase_seconds,
                "fallback_counts": self.fallback_counts,
                "checksum": self.checksum,
            },
            sort_keys=True,
        )


def matrix_checksum(m) -> str:
    h = hashlib.sha256()
    h.update(str(m.shape).encode())
    h.update(m.tobytes())
    return h.hexdigest()


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    seed = int.from_bytes(os.urandom(8), "little") >> 1
    print(f"seed: {seed}", file=sys.stderr)
    return seed


def _tokenize(line: str, symbols) -> list[str]:
    toks = line.split()
    if len(toks) == 1 and toks[0] not in symbols:
        chars = list(toks[0])
        if all(c in symbols for c in chars):
            return chars
    return toks


def _read_strings(path, symbols):
    from .matrix_core import FormatError

    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    out = []
    for lineno, line in enumerate(lines, start=1):
        if line.strip().startswith("#"):
            continue
        toks = _tokenize(line, symbols)
        for t in toks:
            if t not in symbols:
                raise FormatError(f"line {lineno}: unknown symbol {t!r}")
        out.append(toks)
    return out


def _read_sequence(path):
    import numpy as np

    from .matrix_core import INF, FormatError

    with open(path, "r", encoding="utf-8") as f:
        toks = f.read().split()
    vals = []
    for t in toks:
        if t == "inf":
            vals.append(INF)
        else:
            try:
                vals.append(int(t))
            except ValueError:
                raise FormatError(f"bad sequence token {t!r}") from None
    return np.asarray(vals, dtype=np.int64)


def _write_sequence(path, seq) -> None:
    from .matrix_core import INF

    text = " ".join("inf" if v == INF else str(int(v)) for v in seq) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)


def _score_str(v: int) -> str:
    from .matrix_core import INF

    return "inf" if v == INF else str(int(v))


# ---------------------------------------------------------------------------
# subcommands


def _cmd_multiply(args) -> int:
    import numpy as np

    from . import bd_minplus as bdm
    from .matrix_core import (
        INF,
        OracleMismatchError,
        check_bd,
        naive_minplus,
        read_matrix,
        small_entry_minplus,
        write_matrix,
    )

    a = read_matrix(args.a)
    b = read_matrix(args.b)
    seed = _resolve_seed(args)
    mode = args.mode
    phase_seconds: dict = {}
    config: dict = {"mode": mode, "seed": seed, "threads": args.threads}
    t0 = time.perf_counter()
    if mode == "naive":
        c = naive_minplus(a, b)
    elif mode == "small":
        finite_a = a[a != INF]
        finite_b = b[b != INF]
        bound = 0
        for fin in (finite_a, finite_b):
            if fin.size:
                bound = max(bound, int(np.abs(fin).max()))
        config["bound"] = bound
        c = small_entry_minplus(a, b, bound)
    elif mode == "bd":
        w = args.w
        if w is None:
            wa = check_bd(a, 1 << 60)
            wb = check_bd(b, 1 << 60)
            if wa.width is None or wb.width is None:
                w = 0  # infinite entry; the product call reports the witness
            else:
                w = max(wa.width, wb.width)
            print(f"w: {w}", file=sys.stderr)
        cfg = bdm.BDProductConfig(
            w=w,
            delta=args.delta,
            rho=args.rho,
            mode="deterministic" if args.deterministic else "randomized",
            seed=seed,
            improved_phase2=not args.no_improved_phase2,
        )
        c, stats = bdm.bd_product_report(a, b, cfg)
        config.update(
            w=stats["w"],
            delta=stats["delta"],
            rho=stats["rho"],
            mode=stats["mode"],
            improved_phase2=stats["improved_phase2"],
        )
        phase_seconds = {
            "phase1": stats["phase1_s"],
            "phase2": stats["phase2_s"],
            "phase3": stats["phase3_s"],
        }
    elif mode in ("bd-rows", "bd-cols"):
        w = args.w if args.w is not None else 1
        delta = args.delta if args.delta is not None else 4
        bound = delta * w
        config.update(w=w, delta=delta, bound=bound)
        n = a.shape[0] if mode == "bd-rows" else a.shape[1]
        groups = bdm.contiguous_groups(n, delta)
        fn = bdm.bd_rows_product if mode == "bd-rows" else bdm.bd_cols_product
        c = fn(a, b, groups, bound, rho=args.rho, seed=seed)
    else:
        raise AssertionError(mode)
    phase_seconds["total"] = time.perf_counter() - t0
    if args.verify:
        want = naive_minplus(a, b)
        if not np.array_equal(c, want):
            raise OracleMismatchError("product differs from the reference scan")
    write_matrix(args.out, c)
    report = RunReport("multiply", config, phase_seconds, {}, matrix_checksum(c))
    print(report.to_json())
    return EXIT_OK


def _cmd_parse(args) -> int:
    from .matrix_core import INF, OracleMismatchError
    from .scored_grammar import read_grammar
    from .scored_parser import parse_score

    g = read_grammar(args.grammar)
    strings = _read_strings(args.input, g.terminals)
    for sigma in strings:
        score = parse_score(g, sigma, args.engine, args.w)
        if args.oracle:
            other = "cyk" if args.engine == "valiant" else "valiant"
            check = parse_score(g, sigma, other, args.w)
            if check != score:
                raise OracleMismatchError(
                    f"engines disagree on {' '.join(sigma)!r}: {score} vs {check}"
                )
        print(_score_str(score))
    return EXIT_OK


def _cmd_led(args) -> int:
    from .applications import EditModel, led_distance
    from .matrix_core import OracleMismatchError
    from .scored_grammar import read_grammar

    g = read_grammar(args.grammar)
    model = EditModel(allow_substitution=not args.no_substitutions)
    strings = _read_strings(args.input, g.terminals)
    for sigma in strings:
        d = led_distance(g, sigma, model, args.engine)
        if args.oracle:
            other = "cyk" if args.engine == "valiant" else "valiant"
            check = led_distance(g, sigma, model, other)
            if check != d:
                raise OracleMismatchError(
                    f"engines disagree on {' '.join(sigma)!r}: {d} vs {check}"
                )
        print(d)
    return EXIT_OK


def _cmd_rna(args) -> int:
    from .applications import RnaAlphabet, nussinov_oracle, rna_fold
    from .matrix_core import OracleMismatchError

    alphabet = RnaAlphabet(tuple(args.alphabet.split()))
    strings = _read_strings(args.input, set(alphabet.symbols))
    for sigma in strings:
        d, pairs = rna_fold(sigma, alphabet, args.engine)
        if args.oracle:
            want = nussinov_oracle(sigma, alphabet)
            if pairs != want:
                raise OracleMismatchError(
                    f"pair count {pairs} differs from the pairing DP {want}"
                )
        print(f"{d} {pairs}")
    return EXIT_OK


def _cmd_osg(args) -> int:
    from .applications import osg_min_ops, osg_search_oracle
    from .matrix_core import OracleMismatchError, PreconditionError

    alphabet = tuple(args.alphabet.split())
    strings = _read_strings(args.input, set(alphabet))
    for sigma in strings:
        ops = osg_min_ops(sigma, alphabet, args.engine)
        if args.oracle:
            if len(sigma) > 8:
                raise PreconditionError(
                    "the search oracle is limited to strings of length 8"
                )
            want = osg_search_oracle(sigma, alphabet)
            if ops != want:
                raise OracleMismatchError(
                    f"parse count {ops} differs from the search oracle {want}"
                )
        print(ops)
    return EXIT_OK


def _cmd_convolve(args) -> int:
    import numpy as np

    from .bd_minplus import bd_convolution, naive_convolution
    from .matrix_core import OracleMismatchError

    a = _read_sequence(args.a)
    b = _read_sequence(args.b)
    seed = _resolve_seed(args)
    c = bd_convolution(a, b, args.which, args.w, seed=seed)
    if args.oracle:
        want = naive_convolution(a, b)
        if not np.array_equal(c, want):
            raise OracleMismatchError("convolution differs from the quadratic oracle")
    _write_sequence(args.out, c)
    return EXIT_OK


def _cmd_bench(args) -> int:
    import numpy as np

    from . import bd_minplus as bdm
    from .matrix_core import OracleMismatchError, naive_minplus

    seed = _resolve_seed(args)
    sizes = [int(s) for s in args.sizes.split(",")]
    deltas = [None if d == "auto" else int(d) for d in args.deltas.split(",")]
    rhos = [None if r == "auto" else int(r) for r in args.rhos.split(",")]
    modes = args.modes.split(",")
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for n in sizes:
            a = bdm.random_bd_matrix(n, args.w, seed * 31 + 2 * n)
            b = bdm.random_bd_matrix(n, args.w, seed * 31 + 2 * n + 1)
            want = None
            if n <= args.verify_max:
                t0 = time.perf_counter()
                want = naive_minplus(a, b)
                naive_s = time.perf_counter() - t0
            else:
                naive_s = None
            for delta in deltas:
                for rho in rhos:
                    for mode in modes:
                        cfg = bdm.BDProductConfig(
                            w=args.w, delta=delta, rho=rho, mode=mode, seed=seed
                        )
                        c, stats = bdm.bd_product_report(a, b, cfg)
                        verified = None
                        if want is not None:
                            verified = bool(np.array_equal(c, want))
                            if not verified:
                                raise OracleMismatchError(
                                    f"bench mismatch at n={n} delta={stats['delta']} "
                                    f"rho={stats['rho']} mode={mode}"
                                )
                        row = {
                            "n": n,
                            "w": args.w,
                            "delta": stats["delta"],
                            "rho": stats["rho"],
                            "mode": mode,
                            "seed": seed,
                            "phase1_s": stats["phase1_s"],
                            "phase2_s": stats["phase2_s"],
                            "phase3_s": stats["phase3_s"],
                            "naive_s": naive_s,
                            "verified": verified,
                            "checksum": matrix_checksum(c),
                        }
                        out.write(json.dumps(row, sort_keys=True) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _int_env(name: str):
    v = _env(name)
    return int(v) if v is not None else None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bdmp",
        description="Bounded-difference (min,+) products, scored parsing, and applications",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--seed", type=int, default=_int_env("seed"))
        p.add_argument(
            "--threads", type=int, default=_int_env("threads") or 1
        )

    def add_engine(p):
        p.add_argument(
            "--engine",
            choices=["valiant", "cyk"],
            default=_env("engine", "valiant"),
        )
        p.add_argument("--oracle", action="store_true")

    p = sub.add_parser("multiply", help="matrix (min,+) product")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--out", required=True)
    p.add_argument(
        "--mode",
        choices=["naive", "small", "bd", "bd-rows", "bd-cols"],
        default=_env("mode", "bd"),
    )
    p.add_argument("--w", type=int, default=_int_env("w"))
    p.add_argument("--delta", type=int, default=_int_env("delta"))
    p.add_argument("--rho", type=int, default=_int_env("rho"))
    p.add_argument(
        "--deterministic",
        action="store_true",
        default=_env("deterministic") == "1",
    )
    p.add_argument("--no-improved-phase2", action="store_true")
    p.add_argument("--verify", action="store_true")
    add_common(p)
    p.set_defaults(fn=_cmd_multiply)

    p = sub.add_parser("parse", help="scored parsing of input strings")
    p.add_argument("--grammar", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--w", type=int, default=_int_env("w") or 1)
    add_engine(p)
    add_common(p)
    p.set_defaults(fn=_cmd_parse)

    p = sub.add_parser("led", help="language edit distance")
    p.add_argument("--grammar", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--no-substitutions", action="store_true")
    add_engine(p)
    add_common(p)
    p.set_defaults(fn=_cmd_led)

    p = sub.add_parser("rna", help="maximum non-crossing pairing")
    p.add_argument("--alphabet", required=True, help="base symbols, e.g. 'a b'")
    p.add_argument("--input", required=True)
    add_engine(p)
    add_common(p)
    p.set_defaults(fn=_cmd_rna)

    p = sub.add_parser("osg", help="minimum stack operations printing a string")
    p.add_argument("--alphabet", required=True, help="symbols, e.g. 'A B C'")
    p.add_argument("--input", required=True)
    add_engine(p)
    add_common(p)
    p.set_defaults(fn=_cmd_osg)

    p = sub.add_parser("convolve", help="sequence (min,+)-convolution")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--which", choices=["a", "b"], required=True)
    p.add_argument("--w", type=int, required=True)
    p.add_argument("--out")
    p.add_argument("--oracle", action="store_true")
    add_common(p)
    p.set_defaults(fn=_cmd_convolve)

    p = sub.add_parser("bench", help="timing sweep over product parameters")
    p.add_argument("--sizes", default="128,256")
    p.add_argument("--deltas", default="auto")
    p.add_argument("--rhos", default="auto")
    p.add_argument("--modes", default="randomized,deterministic")
    p.add_argument("--w", type=int, default=_int_env("w") or 1)
    p.add_argument("--out")
    p.add_argument("--verify-max", type=int, default=256)
    add_common(p)
    p.set_defaults(fn=_cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _apply_threads(args.threads)

    from .matrix_core import (
        BDViolationError,
        FormatError,
        OracleMismatchError,
        PreconditionError,
    )

    try:
        return args.fn(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except FormatError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except BDViolationError as exc:
        print(f"precondition violated: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except PreconditionError as exc:
        print(f"precondition violated: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except OracleMismatchError as exc:
        print(f"oracle mismatch (library bug): {exc}", file=sys.stderr)
        return EXIT_ORACLE


def console_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_entry()

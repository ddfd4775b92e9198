"""Bounded-difference (min,+) matrix products, scored parsing, and applications."""

from .matrix_core import (
    INF,
    BDViolationError,
    BDWitness,
    FiniteOverflowError,
    FormatError,
    OracleMismatchError,
    PreconditionError,
    check_bd,
    minplus_identity,
    naive_minplus,
    pad_to_multiple,
    read_matrix,
    small_entry_minplus,
    write_matrix,
)
from .bd_minplus import (
    BDProductConfig,
    BlockScheme,
    RoundRecord,
    bd_cols_product,
    bd_convolution,
    bd_product,
    bd_rows_product,
    contiguous_groups,
    derandomized_pick,
    naive_convolution,
    phase1_block_approx,
    phase2_rounds,
    phase3_repair,
    random_bd_matrix,
)
from .scored_grammar import (
    GrammarClass,
    Production,
    ScoredGrammar,
    bd_width_probe,
    classify,
    eliminate_epsilon,
    eliminate_start_rhs,
    eliminate_units,
    epsilon_scores,
    format_grammar,
    parse_grammar,
    read_grammar,
    to_cnf,
    write_grammar,
)
from .scored_parser import (
    DotStats,
    FunctionMatrix,
    IndexView,
    cyk_all_scores,
    cyk_oracle,
    cyk_scores,
    dot,
    parse_score,
    seed_matrix,
    union_fold,
    valiant_closure,
)
from .applications import (
    EditModel,
    RnaAlphabet,
    build_led_grammar,
    build_osg_grammar,
    build_rna_grammar,
    led_distance,
    nussinov_oracle,
    osg_min_ops,
    osg_search_oracle,
    rna_fold,
)

__all__ = [
    "INF",
    "BDProductConfig",
    "BDViolationError",
    "BDWitness",
    "BlockScheme",
    "DotStats",
    "EditModel",
    "FiniteOverflowError",
    "FormatError",
    "FunctionMatrix",
    "GrammarClass",
    "IndexView",
    "OracleMismatchError",
    "PreconditionError",
    "Production",
    "RnaAlphabet",
    "RoundRecord",
    "ScoredGrammar",
    "bd_cols_product",
    "bd_convolution",
    "bd_product",
    "bd_rows_product",
    "bd_width_probe",
    "build_led_grammar",
    "build_osg_grammar",
    "build_rna_grammar",
    "check_bd",
    "classify",
    "contiguous_groups",
    "cyk_all_scores",
    "cyk_oracle",
    "cyk_scores",
    "derandomized_pick",
    "dot",
    "eliminate_epsilon",
    "eliminate_start_rhs",
    "eliminate_units",
    "epsilon_scores",
    "format_grammar",
    "led_distance",
    "minplus_identity",
    "naive_convolution",
    "naive_minplus",
    "nussinov_oracle",
    "osg_min_ops",
    "osg_search_oracle",
    "pad_to_multiple",
    "parse_grammar",
    "parse_score",
    "phase1_block_approx",
    "phase2_rounds",
    "phase3_repair",
    "random_bd_matrix",
    "read_grammar",
    "read_matrix",
    "rna_fold",
    "seed_matrix",
    "small_entry_minplus",
    "to_cnf",
    "union_fold",
    "valiant_closure",
    "write_grammar",
    "write_matrix",
]

__version__ = "0.1.0"

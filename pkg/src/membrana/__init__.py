"""Membrane (P system) simulator with a comparator and an online membrane sorter."""

from .core import (EMPTY, Membrane, Multiset, MultisetError, MultisetUnderflow,
                   MultiplicityOverflow, StructureError, SymbolError, classify_structure,
                   format_structure, multiset_equal, multiset_from_string, parse_structure)
from .rules import CloneKind, CloneRule, RewriteRule, apply_clone, apply_rewrite, instances
from .engine import (MAXIMAL, MINIMAL, SEQUENTIAL, Configuration, EngineError, HaltedError,
                     Mode, ReplayError, bounded, is_halted, read_trace, replay, run_to_halt,
                     step, write_trace)
from .dsl import DslError, SystemSpec, parse_system, serialize_system
from .comparator import (ComparatorResult, build_max_comparator, build_min_comparator,
                         compare, run_comparator, settle_steps)
from .sorter import SorterError, depth, insert, new_sorter, read_sorted, sort_stream

__version__ = "0.1.0"

"""Two-spin random ensemble: sampling, gauge fixing, solvers and ensemble statistics."""

from .errors import *  # noqa: F401,F403
from .graph import InteractionGraph, build_chain, build_graph, build_ring, cycle_rank, parameter_count
from .ensemble import TsreSample, sample
from .gauge import CanonicalForm, apply_gauge, canonicalize
from .hamiltonian import HamiltonianOperator, SpinState
from .eigensolver import GroundSolution, lowest_two
from .observables import correlation_fluctuation, effective_rank, entanglement_entropy
from .harness import EnsembleRecord, SweepConfig, run_sweep

__version__ = "0.1.0"

# Core modules for cooperative-enhancement verification
from .hilbert import SpaceLayout, StateVector, OperatorMatrix, build_layout, make_layout
from .hamiltonians import model_hamiltonian, dicke_hamiltonian, hopping_hamiltonian, full_hamiltonian
from .sectors import decompose, decompose_spec, verify_scaling
from .dynamics import evolve, short_time_rate, dephasing_evolve, measure_decoherence_scaling
from .diffusion import simulate_walk, sweep
from .experiment_engine import ExperimentEngine
from .report_writer import ReportWriter

__all__ = [
    'SpaceLayout',
    'StateVector',
    'OperatorMatrix',
    'build_layout',
    'make_layout',
    'model_hamiltonian',
    'dicke_hamiltonian',
    'hopping_hamiltonian',
    'full_hamiltonian',
    'decompose',
    'decompose_spec',
    'verify_scaling',
    'evolve',
    'short_time_rate',
    'dephasing_evolve',
    'measure_decoherence_scaling',
    'simulate_walk',
    'sweep',
    'ExperimentEngine',
    'ReportWriter'
]

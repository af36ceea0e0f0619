"""QUBO/Ising modeling toolkit with an emulated optical annealer.

Builds penalized binary models for flexible job-shop scheduling and
peptide mass composition, solves them with a seeded stochastic annealer
(with signed 8-bit input quantization and optional readout noise) or an
exact enumerator, and drives closed-loop constraint-weight tuning with
memory and pluggable decision policies.
"""

from .errors import (
    BudgetExceededError,
    DegenerateMatrixError,
    DimensionError,
    InfeasibleHorizonError,
    PolicyError,
)
from .qubo import (
    IsingConvention,
    IsingModel,
    QuantizationReport,
    QuantizedQubo,
    QuboBuilder,
    QuboMatrix,
    add_squared_penalty,
    bits_to_spins,
    coefficient_stats,
    flip_convention,
    ising_energy,
    quantize_int8,
    qubo_energy,
    qubo_to_ising,
    spins_to_bits,
)
from .solver import (
    SolveResult,
    SolverConfig,
    apply_readout_noise,
    solve_annealed,
    solve_exact,
    solve_quantized,
)

__version__ = "0.1.0"

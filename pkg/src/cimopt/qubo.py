"""Core QUBO and Ising value types.

Energy evaluation, squared-penalty assembly, convention-tagged conversion
between the binary and spin pictures, signed 8-bit quantization, and
coefficient diagnostics. All types are immutable values; all operations are
pure functions.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

from .errors import DegenerateMatrixError, DimensionError

__all__ = [
    "IsingConvention",
    "QuboMatrix",
    "QuboBuilder",
    "IsingModel",
    "QuantizedQubo",
    "QuantizationReport",
    "CoefficientStats",
    "qubo_energy",
    "add_squared_penalty",
    "qubo_to_ising",
    "ising_energy",
    "flip_convention",
    "quantize_int8",
    "coefficient_stats",
    "bits_to_spins",
    "spins_to_bits",
    "qubo_to_doc",
    "qubo_from_doc",
    "ising_to_doc",
    "ising_from_doc",
    "quantized_to_doc",
]

INT8_MIN = -128
INT8_MAX = 127


class IsingConvention(enum.Enum):
    """Sign convention of a spin Hamiltonian.

    POSITIVE_SUM:  E(s) = sum_i h_i s_i + sum_{i<j} J_ij s_i s_j + offset
    NEGATED_SUM:   E(s) = -sum_{i<j} J_ij s_i s_j - sum_i h_i s_i + offset

    Flipping the convention negates h and J and leaves every energy
    unchanged. The tag exists so exports to annealer-style solvers, which
    expect the negated form, cannot silently invert the energy landscape.
    """

    POSITIVE_SUM = "positive_sum"
    NEGATED_SUM = "negated_sum"


def _check_pairs(n: int, pairs: Mapping[tuple[int, int], float], what: str) -> None:
    for key, value in pairs.items():
        i, j = key
        if not (0 <= i < j < n):
            raise ValueError(f"{what} key {key} is not an upper-triangular pair for n={n}")
        if not math.isfinite(value):
            raise ValueError(f"{what} coefficient at {key} is not finite: {value!r}")


@dataclass(frozen=True)
class QuboMatrix:
    """Upper-triangular quadratic form over n binary variables.

    ``diag[i]`` is the linear coefficient of x_i, ``upper[(i, j)]`` with
    i < j the coefficient of x_i*x_j, and ``offset`` a constant added to
    every energy. Coefficients are stored sparsely: an absent key means 0.
    """

    n: int
    diag: tuple[float, ...]
    upper: Mapping[tuple[int, int], float]
    offset: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"need at least one variable, got n={self.n}")
        if len(self.diag) != self.n:
            raise DimensionError(f"diag has {len(self.diag)} entries for n={self.n}")
        for i, value in enumerate(self.diag):
            if not math.isfinite(value):
                raise ValueError(f"diag[{i}] is not finite: {value!r}")
        if not math.isfinite(self.offset):
            raise ValueError(f"offset is not finite: {self.offset!r}")
        _check_pairs(self.n, self.upper, "upper")

    def coefficients(self) -> Iterator[float]:
        """All stored coefficients, diagonal first. The offset is not one."""
        yield from self.diag
        yield from self.upper.values()


@dataclass(frozen=True)
class IsingModel:
    """Spin Hamiltonian with local fields h, couplings J, and a sign tag."""

    n: int
    h: tuple[float, ...]
    J: Mapping[tuple[int, int], float]
    offset: float = 0.0
    convention: IsingConvention = IsingConvention.POSITIVE_SUM

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"need at least one spin, got n={self.n}")
        if len(self.h) != self.n:
            raise DimensionError(f"h has {len(self.h)} entries for n={self.n}")
        for i, value in enumerate(self.h):
            if not math.isfinite(value):
                raise ValueError(f"h[{i}] is not finite: {value!r}")
        if not math.isfinite(self.offset):
            raise ValueError(f"offset is not finite: {self.offset!r}")
        _check_pairs(self.n, self.J, "J")


@dataclass(frozen=True)
class QuantizationReport:
    """What signed 8-bit rounding did to a coefficient matrix.

    ``zeroed_fraction`` counts only originally nonzero coefficients that
    rounded to integer 0; those lose all constraint information.
    """

    zeroed_fraction: float
    dynamic_range_orders: float
    max_abs_original: float

    def to_doc(self) -> dict:
        return {
            "zeroed_fraction": self.zeroed_fraction,
            "dynamic_range_orders": self.dynamic_range_orders,
            "max_abs_original": self.max_abs_original,
        }


@dataclass(frozen=True)
class QuantizedQubo:
    """Integer coefficient matrix in [-128, 127] plus its scale.

    ``original ~= integer / scale`` up to rounding. The offset of the source
    matrix is intentionally not quantized; solvers rank by relative energy.
    """

    n: int
    int_diag: tuple[int, ...]
    int_upper: Mapping[tuple[int, int], int]
    scale: float
    report: QuantizationReport

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale!r}")
        for value in list(self.int_diag) + list(self.int_upper.values()):
            if not INT8_MIN <= value <= INT8_MAX:
                raise ValueError(f"quantized value {value} outside [{INT8_MIN}, {INT8_MAX}]")

    def to_matrix(self) -> QuboMatrix:
        """The integer coefficients as a QuboMatrix with zero offset."""
        return QuboMatrix(
            n=self.n,
            diag=tuple(float(v) for v in self.int_diag),
            upper={k: float(v) for k, v in self.int_upper.items() if v != 0},
            offset=0.0,
        )


@dataclass(frozen=True)
class CoefficientStats:
    max_abs: float
    min_nonzero_abs: float
    dynamic_range_orders: float
    near_zero_fraction: float
    threshold: float


class QuboBuilder:
    """Mutable accumulator for assembling a QuboMatrix term by term."""

    def __init__(self, n: int):
        if n < 1:
            raise ValueError(f"need at least one variable, got n={n}")
        self.n = n
        self._diag = [0.0] * n
        self._upper: dict[tuple[int, int], float] = {}
        self._offset = 0.0

    def add_offset(self, value: float) -> None:
        self._offset += value

    def add_diag(self, i: int, value: float) -> None:
        self._diag[i] += value

    def add_pair(self, i: int, j: int, value: float) -> None:
        if i == j:
            raise ValueError(f"pair ({i}, {j}) is not off-diagonal")
        key = (i, j) if i < j else (j, i)
        self._upper[key] = self._upper.get(key, 0.0) + value

    def add_squared(self, coeffs: Mapping[int, float], constant: float, weight: float) -> None:
        """Add weight * (sum_i coeffs[i] x_i + constant)^2.

        The expansion folds x_i^2 = x_i onto the diagonal and absorbs
        weight * constant^2 into the offset.
        """
        items = [(i, c) for i, c in coeffs.items() if c != 0.0]
        for i, c in items:
            self._diag[i] += weight * c * (c + 2.0 * constant)
        for a in range(len(items)):
            i, ci = items[a]
            for b in range(a + 1, len(items)):
                j, cj = items[b]
                self.add_pair(i, j, 2.0 * weight * ci * cj)
        self._offset += weight * constant * constant

    def build(self) -> QuboMatrix:
        upper = {k: v for k, v in self._upper.items() if v != 0.0}
        return QuboMatrix(self.n, tuple(self._diag), upper, self._offset)


def qubo_energy(q: QuboMatrix, x: Sequence[int]) -> float:
    """Evaluate sum_i Q_ii x_i + sum_{i<j} Q_ij x_i x_j + offset.

    Raises DimensionError when len(x) != q.n.
    """
    if len(x) != q.n:
        raise DimensionError(f"assignment has {len(x)} entries for n={q.n}")
    energy = q.offset
    for i, d in enumerate(q.diag):
        if x[i]:
            energy += d
    for (i, j), v in q.upper.items():
        if x[i] and x[j]:
            energy += v
    return energy


def add_squared_penalty(
    q: QuboMatrix, coeffs: Sequence[float], constant: float, weight: float
) -> QuboMatrix:
    """Return q plus the penalty weight * (sum_i coeffs[i] x_i + constant)^2.

    weight must be strictly positive; penalties never reward violations.
    """
    if len(coeffs) != q.n:
        raise DimensionError(f"coeffs has {len(coeffs)} entries for n={q.n}")
    if not weight > 0:
        raise ValueError(f"penalty weight must be positive, got {weight!r}")
    builder = QuboBuilder(q.n)
    for i, d in enumerate(q.diag):
        builder.add_diag(i, d)
    for (i, j), v in q.upper.items():
        builder.add_pair(i, j, v)
    builder.add_offset(q.offset)
    builder.add_squared({i: c for i, c in enumerate(coeffs)}, constant, weight)
    return builder.build()


def qubo_to_ising(
    q: QuboMatrix, convention: IsingConvention = IsingConvention.POSITIVE_SUM
) -> IsingModel:
    """Map the binary form to spins via x_i = (s_i + 1) / 2.

    Under POSITIVE_SUM the substitution gives

        h_i = Q_ii / 2 + (1/4) sum_{j != i} Q_ij
        J_ij = Q_ij / 4
        offset' = offset + sum_i Q_ii / 2 + (1/4) sum_{i<j} Q_ij

    and qubo_energy(q, x) == ising_energy(result, 2x - 1) for every x, up
    to floating round-off. NEGATED_SUM negates h and J on top, preserving
    all energies.
    """
    h = [d / 2.0 for d in q.diag]
    J: dict[tuple[int, int], float] = {}
    off = q.offset + sum(q.diag) / 2.0
    for (i, j), v in q.upper.items():
        quarter = v / 4.0
        J[(i, j)] = quarter
        h[i] += quarter
        h[j] += quarter
        off += quarter
    if convention is IsingConvention.NEGATED_SUM:
        h = [-value for value in h]
        J = {k: -v for k, v in J.items()}
    return IsingModel(q.n, tuple(h), J, off, convention)


def ising_energy(m: IsingModel, s: Sequence[int]) -> float:
    """Evaluate the spin Hamiltonian under the model's convention tag."""
    if len(s) != m.n:
        raise DimensionError(f"spin vector has {len(s)} entries for n={m.n}")
    for i, v in enumerate(s):
        if v != 1 and v != -1:
            raise ValueError(f"spin {i} is {v!r}, expected -1 or +1")
    field = 0.0
    for i, hv in enumerate(m.h):
        field += hv * s[i]
    coupling = 0.0
    for (i, j), jv in m.J.items():
        coupling += jv * s[i] * s[j]
    if m.convention is IsingConvention.POSITIVE_SUM:
        return field + coupling + m.offset
    return -coupling - field + m.offset


def flip_convention(m: IsingModel) -> IsingModel:
    """Re-express the model in the other convention; energies are unchanged."""
    other = (
        IsingConvention.NEGATED_SUM
        if m.convention is IsingConvention.POSITIVE_SUM
        else IsingConvention.POSITIVE_SUM
    )
    return IsingModel(
        m.n,
        tuple(-v for v in m.h),
        {k: -v for k, v in m.J.items()},
        m.offset,
        other,
    )


def _round_half_away(x: float) -> int:
    # symmetric +/- coefficients must quantize symmetrically
    if x >= 0:
        return int(math.floor(x + 0.5))
    return int(math.ceil(x - 0.5))


def quantize_int8(q: QuboMatrix) -> QuantizedQubo:
    """Linearly scale coefficients into signed 8-bit integers.

    scale = 127 / max|coefficient|; each coefficient maps to
    clamp(round_half_away_from_zero(c * scale), -128, 127). The offset is
    carried outside the integer matrix. Raises DegenerateMatrixError when
    every coefficient is zero (the scale is undefined).
    """
    values = list(q.coefficients())
    max_abs = max(abs(v) for v in values)
    if max_abs == 0.0:
        raise DegenerateMatrixError("all coefficients are zero; quantization scale is undefined")
    scale = INT8_MAX / max_abs
    if not math.isfinite(scale):
        raise DegenerateMatrixError(
            f"coefficients are too small to quantize (largest magnitude {max_abs!r})"
        )

    def to_int(c: float) -> int:
        return max(INT8_MIN, min(INT8_MAX, _round_half_away(c * scale)))

    int_diag = tuple(to_int(v) for v in q.diag)
    int_upper = {k: to_int(v) for k, v in q.upper.items()}

    nonzero = [v for v in values if v != 0.0]
    zeroed = sum(1 for v in q.diag if v != 0.0 and to_int(v) == 0)
    zeroed += sum(1 for v in q.upper.values() if v != 0.0 and to_int(v) == 0)
    min_nonzero = min(abs(v) for v in nonzero)
    report = QuantizationReport(
        zeroed_fraction=zeroed / len(nonzero),
        dynamic_range_orders=math.log10(max_abs / min_nonzero),
        max_abs_original=max_abs,
    )
    return QuantizedQubo(q.n, int_diag, int_upper, scale, report)


def coefficient_stats(q: QuboMatrix, near_zero_threshold: float = 1e-4) -> CoefficientStats:
    """Magnitude statistics over all stored coefficients.

    ``near_zero_fraction`` counts coefficients with |c| <= threshold *
    max|c|, so it is a statement about the max-abs-normalized matrix.
    """
    values = list(q.coefficients())
    max_abs = max(abs(v) for v in values)
    if max_abs == 0.0:
        return CoefficientStats(0.0, 0.0, 0.0, 1.0, near_zero_threshold)
    min_nonzero = min(abs(v) for v in values if v != 0.0)
    near = sum(1 for v in values if abs(v) <= near_zero_threshold * max_abs)
    return CoefficientStats(
        max_abs=max_abs,
        min_nonzero_abs=min_nonzero,
        dynamic_range_orders=math.log10(max_abs / min_nonzero),
        near_zero_fraction=near / len(values),
        threshold=near_zero_threshold,
    )


def bits_to_spins(x: Iterable[int]) -> tuple[int, ...]:
    """s_i = 2 x_i - 1."""
    out = []
    for i, b in enumerate(x):
        if b != 0 and b != 1:
            raise ValueError(f"bit {i} is {b!r}, expected 0 or 1")
        out.append(2 * b - 1)
    return tuple(out)


def spins_to_bits(s: Iterable[int]) -> tuple[int, ...]:
    """x_i = (s_i + 1) / 2."""
    out = []
    for i, v in enumerate(s):
        if v != 1 and v != -1:
            raise ValueError(f"spin {i} is {v!r}, expected -1 or +1")
        out.append((v + 1) // 2)
    return tuple(out)


# --- JSON documents -------------------------------------------------------
#
# QUBO and Ising share one document shape; "convention" is present only for
# Ising models. A quantized export replaces the real arrays with integers
# and adds "scale".


def _upper_to_list(upper: Mapping[tuple[int, int], float]) -> list[list]:
    return [[i, j, v] for (i, j), v in sorted(upper.items())]


def qubo_to_doc(q: QuboMatrix) -> dict:
    return {
        "n": q.n,
        "diag": list(q.diag),
        "upper": _upper_to_list(q.upper),
        "offset": q.offset,
    }


def qubo_from_doc(doc: Mapping) -> QuboMatrix:
    try:
        n = int(doc["n"])
        diag = tuple(float(v) for v in doc["diag"])
        upper = {(int(i), int(j)): float(v) for i, j, v in doc.get("upper", [])}
        offset = float(doc.get("offset", 0.0))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed QUBO document: {exc}") from exc
    return QuboMatrix(n, diag, upper, offset)


def ising_to_doc(m: IsingModel) -> dict:
    return {
        "n": m.n,
        "diag": list(m.h),
        "upper": _upper_to_list(m.J),
        "offset": m.offset,
        "convention": m.convention.value,
    }


def ising_from_doc(doc: Mapping) -> IsingModel:
    try:
        n = int(doc["n"])
        h = tuple(float(v) for v in doc["diag"])
        J = {(int(i), int(j)): float(v) for i, j, v in doc.get("upper", [])}
        offset = float(doc.get("offset", 0.0))
        convention = IsingConvention(doc["convention"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed Ising document: {exc}") from exc
    return IsingModel(n, h, J, offset, convention)


def quantized_to_doc(qq: QuantizedQubo) -> dict:
    return {
        "n": qq.n,
        "diag": [int(v) for v in qq.int_diag],
        "upper": [[i, j, int(v)] for (i, j), v in sorted(qq.int_upper.items())],
        "scale": qq.scale,
        "report": qq.report.to_doc(),
    }

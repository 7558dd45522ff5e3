"""Monte-Carlo validation of the pipeline's probabilistic error bounds.

Synthetic fields have a known truth; each machine annotator errs
independently with its own probability, and two erring annotators emit
the identical wrong value with an explicit collision probability. The
agreement gate, jury, cross-system comparison, and expert are applied
exactly as in the live pipeline, and the observed silent / final error
rates are compared against the analytic bounds:

    per-system silent rate  <= eps1 * eps2
    final gold error rate   <= (eps1a * eps2a) * (eps1b * eps2b)

Collision is a free parameter rather than emergent from a string model
because the bounds are agnostic to how collisions arise; with collision
probability kappa < 1 the observed silent rate drops to kappa * eps1 *
eps2, which makes the conservativeness of the bound directly testable.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import UsageError

_CHUNK = 1 << 20


def _check_probability(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise UsageError(f"{name} must be in [0, 1], got {value}")


@dataclass(frozen=True)
class ErrorModel:
    """Per-field behavior of one system's two machine annotators.

    eps1/eps2: error probabilities of the two annotators.
    kappa: probability that two erring annotators collide on the same
        wrong value (else their wrong values are forced distinct).
    eta: jury error probability on fields routed to it.
    vocab_size: size of the wrong-value vocabulary used when synthetic
        corpora are materialized into concrete strings; the rate
        simulation itself only needs the collision probabilities.
    """

    eps1: float
    eps2: float
    kappa: float = 1.0
    eta: float = 0.0
    vocab_size: int = 1000

    def __post_init__(self):
        _check_probability("eps1", self.eps1)
        _check_probability("eps2", self.eps2)
        _check_probability("kappa", self.kappa)
        _check_probability("eta", self.eta)
        if self.vocab_size < 2:
            raise UsageError("vocab_size must be at least 2")


@dataclass(frozen=True)
class SystemSimResult:
    """Tallies of one simulated Layer-1 system (counts are exact ints)."""

    n_fields: int
    silent_errors: int  # consensus-accepted yet wrong
    jury_routed: int
    post_jury_errors: int

    @property
    def silent_error_rate(self) -> float:
        return self.silent_errors / self.n_fields

    @property
    def jury_load_rate(self) -> float:
        return self.jury_routed / self.n_fields

    @property
    def post_jury_error_rate(self) -> float:
        return self.post_jury_errors / self.n_fields


@dataclass(frozen=True)
class CascadeSimResult:
    system_a: SystemSimResult
    system_b: SystemSimResult
    n_fields: int
    golden: int
    expert_routed: int
    final_errors: int

    @property
    def golden_rate(self) -> float:
        return self.golden / self.n_fields

    @property
    def expert_load_rate(self) -> float:
        return self.expert_routed / self.n_fields

    @property
    def final_error_rate(self) -> float:
        return self.final_errors / self.n_fields


def consensus_error_bound(model: ErrorModel) -> float:
    return model.eps1 * model.eps2


def cascade_error_bound(model_a: ErrorModel, model_b: ErrorModel) -> float:
    return consensus_error_bound(model_a) * consensus_error_bound(model_b)


def _seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def _chunk_system(model: ErrorModel, size: int, rng: np.random.Generator):
    """One chunk of per-field outcomes for a single system.

    Returns (wrong_after_jury, silent, routed) boolean arrays. A field is
    consensus when neither annotator errs, or both err and collide; only
    the collided case is a silent error. Routed fields come back wrong
    when the jury errs.
    """
    e1 = rng.random(size) < model.eps1
    e2 = rng.random(size) < model.eps2
    both = e1 & e2
    silent = both & (rng.random(size) < model.kappa)
    routed = (e1 | e2) & ~silent
    jury_wrong = routed & (rng.random(size) < model.eta)
    wrong = silent | jury_wrong
    return wrong, silent, routed


def _chunks(n_fields: int):
    done = 0
    while done < n_fields:
        size = min(_CHUNK, n_fields - done)
        done += size
        yield size


def simulate_system(model: ErrorModel, n_fields: int, seed) -> SystemSimResult:
    """Simulate one annotation triangle over n_fields synthetic fields.

    Deterministic in (model, n_fields, seed); identical seeds reproduce
    bit-identical tallies. seed may be an int or a numpy SeedSequence.
    """
    if n_fields < 1:
        raise UsageError("n_fields must be positive")
    rng = np.random.default_rng(_seed_sequence(seed))
    silent_n = routed_n = wrong_n = 0
    for size in _chunks(n_fields):
        wrong, silent, routed = _chunk_system(model, size, rng)
        silent_n += int(np.count_nonzero(silent))
        routed_n += int(np.count_nonzero(routed))
        wrong_n += int(np.count_nonzero(wrong))
    return SystemSimResult(n_fields, silent_n, routed_n, wrong_n)


def simulate_double_triangle(
    model_a: ErrorModel,
    model_b: ErrorModel,
    cross_kappa: float,
    n_fields: int,
    seed,
    expert_eta: float = 0.0,
) -> CascadeSimResult:
    """Simulate both layers over a shared truth stream.

    The Layer-2 gate passes only identical labels: when both systems end
    up wrong on a field they agree (and silently pass) with probability
    cross_kappa, otherwise the field is a conflict and goes to the
    expert, who errs with probability expert_eta (0 = perfect expert).
    """
    if n_fields < 1:
        raise UsageError("n_fields must be positive")
    _check_probability("cross_kappa", cross_kappa)
    _check_probability("expert_eta", expert_eta)
    ss = _seed_sequence(seed)
    seed_a, seed_b, seed_cross, seed_expert = ss.spawn(4)
    rng_a = np.random.default_rng(seed_a)
    rng_b = np.random.default_rng(seed_b)
    rng_c = np.random.default_rng(seed_cross)
    rng_e = np.random.default_rng(seed_expert)

    counts_a = [0, 0, 0]
    counts_b = [0, 0, 0]
    golden_n = conflict_n = final_n = 0
    for size in _chunks(n_fields):
        wrong_a, silent_a, routed_a = _chunk_system(model_a, size, rng_a)
        wrong_b, silent_b, routed_b = _chunk_system(model_b, size, rng_b)
        for counts, masks in (
            (counts_a, (silent_a, routed_a, wrong_a)),
            (counts_b, (silent_b, routed_b, wrong_b)),
        ):
            counts[0] += int(np.count_nonzero(masks[0]))
            counts[1] += int(np.count_nonzero(masks[1]))
            counts[2] += int(np.count_nonzero(masks[2]))
        both_wrong = wrong_a & wrong_b
        agree_wrong = both_wrong & (rng_c.random(size) < cross_kappa)
        conflict = (wrong_a ^ wrong_b) | (both_wrong & ~agree_wrong)
        expert_wrong = conflict & (rng_e.random(size) < expert_eta)
        final_wrong = agree_wrong | expert_wrong
        golden_n += size - int(np.count_nonzero(conflict))
        conflict_n += int(np.count_nonzero(conflict))
        final_n += int(np.count_nonzero(final_wrong))

    return CascadeSimResult(
        system_a=SystemSimResult(n_fields, counts_a[0], counts_a[1], counts_a[2]),
        system_b=SystemSimResult(n_fields, counts_b[0], counts_b[1], counts_b[2]),
        n_fields=n_fields,
        golden=golden_n,
        expert_routed=conflict_n,
        final_errors=final_n,
    )


@dataclass(frozen=True)
class SweepGrid:
    """Cartesian grid of symmetric double-triangle parameterizations."""

    eps1: tuple[float, ...]
    eps2: tuple[float, ...]
    kappa: tuple[float, ...] = (1.0,)
    eta: tuple[float, ...] = (0.0,)
    cross_kappa: float | None = None  # None -> use the cell's kappa


@dataclass(frozen=True)
class SweepRow:
    eps1: float
    eps2: float
    kappa: float
    eta: float
    silent_rate: float
    bound: float
    jury_load: float
    final_rate: float
    cascade_bound: float
    result: CascadeSimResult


def sweep(grid: SweepGrid, n_fields: int, seed) -> list[SweepRow]:
    """Run simulate_double_triangle on every grid cell, derived seeds per cell.

    Both systems use the cell's ErrorModel (symmetric configuration); a
    one-cell grid is exactly simulate_double_triangle on that cell with
    the first spawned seed.
    """
    cells = list(itertools.product(grid.eps1, grid.eps2, grid.kappa, grid.eta))
    if not cells:
        raise UsageError("sweep grid is empty")
    seeds = _seed_sequence(seed).spawn(len(cells))
    rows: list[SweepRow] = []
    for (eps1, eps2, kappa, eta), cell_seed in zip(cells, seeds):
        model = ErrorModel(eps1=eps1, eps2=eps2, kappa=kappa, eta=eta)
        cross = grid.cross_kappa if grid.cross_kappa is not None else kappa
        result = simulate_double_triangle(model, model, cross, n_fields, cell_seed)
        rows.append(
            SweepRow(
                eps1=eps1,
                eps2=eps2,
                kappa=kappa,
                eta=eta,
                silent_rate=result.system_a.silent_error_rate,
                bound=consensus_error_bound(model),
                jury_load=result.system_a.jury_load_rate,
                final_rate=result.final_error_rate,
                cascade_bound=cascade_error_bound(model, model),
                result=result,
            )
        )
    return rows


_TABLE_COLUMNS = (
    "eps1", "eps2", "kappa", "eta",
    "silent_rate", "bound", "jury_load", "final_rate", "cascade_bound",
)


def render_sweep_table(rows: Sequence[SweepRow]) -> str:
    """Fixed-width report table, one line per sweep cell."""
    header = "  ".join(f"{c:>13}" for c in _TABLE_COLUMNS)
    lines = [header, "-" * len(header)]
    for r in rows:
        values = (
            f"{r.eps1:.4f}", f"{r.eps2:.4f}", f"{r.kappa:.4f}", f"{r.eta:.4f}",
            f"{r.silent_rate:.6f}", f"{r.bound:.6f}", f"{r.jury_load:.6f}",
            f"{r.final_rate:.8f}", f"{r.cascade_bound:.8f}",
        )
        lines.append("  ".join(f"{v:>13}" for v in values))
    return "\n".join(lines)

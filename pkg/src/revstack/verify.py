"""Independent verification of announced strategies.

Nothing here reuses the synthesis algebra: best responses are found by
brute force (dense grid plus shrinking-step coordinate descent) on the
substituted objectives, hyperplane membership and sublevel one-sidedness
are checked by seeded sampling, and realization is evaluated directly.
A strategy chain is 'verified' when every check lands inside its tolerance.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .calculus import gradient
from .equilibrium import team_optimum
from .errors import DimensionError
from .geometry import SampleSpec, SublevelProbe, leader_existence_check
from .model import (
    DecisionPoint,
    GameProblem,
    evaluate_many,
)
from .synthesis import AffineStrategy, reduce_problem

__all__ = [
    "GridSpec",
    "OracleResult",
    "InequalityStats",
    "StrategyCheck",
    "ResponseCheck",
    "VerificationReport",
    "oracle_best_response",
    "sublevel_inequality_check",
    "verify_full",
]

ARGMIN_TOL = 1e-4      # componentwise distance for oracle argmin agreement
ALGEBRAIC_TOL = 1e-9   # scale-normalized residuals (realization, membership)


@dataclass(frozen=True)
class GridSpec:
    """Search window for the brute-force oracle.

    Axes default to anchor +- radius with ``points`` nodes each; explicit
    per-coordinate ``bounds`` override that.  Refinement is coordinate
    descent from the best node: steps start at the grid spacing and halve
    after every sweep without improvement.
    """

    radius: float = 10.0
    points: int = 41
    refine_iters: int = 60
    refine_shrink: float = 0.5
    refine_floor: float = 1e-13
    bounds: Optional[Tuple[Tuple[float, float], ...]] = None


@dataclass(frozen=True, eq=False)
class OracleResult:
    argmin: DecisionPoint       # blocks for the free levels
    value: float
    grid_argmin: np.ndarray     # flat coordinates of the best grid node
    refinement_drift: float     # max |refined - grid best| per coordinate
    evaluations: int


@dataclass(frozen=True, eq=False)
class InequalityStats:
    samples: int
    violations: int
    min_value: float
    min_point: np.ndarray       # flat lower-level coordinates of the minimum
    threshold: float


def _check_chain(announced: Sequence[AffineStrategy], upto: int, levels: int) -> None:
    if len(announced) < upto:
        raise DimensionError(
            "need announced strategies for levels 1..%d, got %d" % (upto, len(announced))
        )
    for i in range(upto):
        s = announced[i]
        if s.level != i + 1:
            raise DimensionError(
                "announced strategy %d has level %d, expected %d" % (i, s.level, i + 1)
            )
        if len(s.coeffs) != levels - (i + 1):
            raise DimensionError(
                "strategy at level %d maps %d lower levels, expected %d"
                % (s.level, len(s.coeffs), levels - (i + 1))
            )


def _substitute_chain(problem: GameProblem, announced: Sequence[AffineStrategy],
                      level: int, free_blocks: List[np.ndarray]) -> List[np.ndarray]:
    """Fill blocks for levels 1..level-1 from the announced strategies (batched)."""
    n = problem.levels
    blocks: List[Optional[np.ndarray]] = [None] * n
    for j in range(level, n + 1):
        blocks[j - 1] = free_blocks[j - level]
    for lev in range(level - 1, 0, -1):
        lower = [blocks[j - 1] for j in range(lev + 1, n + 1)]
        blocks[lev - 1] = announced[lev - 1].batch(lower)
    return blocks  # type: ignore[return-value]


def oracle_best_response(problem: GameProblem,
                         announced: Sequence[AffineStrategy],
                         level: int,
                         grid: Optional[GridSpec] = None,
                         anchor: Optional[DecisionPoint] = None) -> OracleResult:
    """Brute-force best response of the player at ``level``.

    Substitutes the announced upper strategies, then minimizes that player's
    cost over all free blocks (its own and everything below) on a dense
    grid, refined by shrinking-step coordinate descent.  Grid ties go to the
    lexicographically smallest node index; the whole procedure is
    deterministic.
    """
    n = problem.levels
    if not 2 <= level <= n:
        raise DimensionError("oracle level must be in 2..%d" % n)
    _check_chain(announced, level - 1, n)
    grid = grid or GridSpec()
    free_widths = problem.dims.m[level - 1 :]
    D = sum(free_widths)
    if anchor is None:
        center = np.zeros(D)
    else:
        if sum(anchor.widths) != D:
            raise DimensionError("anchor does not match the free blocks")
        center = anchor.concat()

    axes = []
    for i in range(D):
        if grid.bounds is not None:
            lo, hi = grid.bounds[i]
        else:
            lo, hi = center[i] - grid.radius, center[i] + grid.radius
        axes.append(np.linspace(lo, hi, grid.points))
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)

    offs = np.concatenate([[0], np.cumsum(free_widths)])
    free_blocks = [pts[:, offs[i] : offs[i + 1]] for i in range(len(free_widths))]
    blocks = _substitute_chain(problem, announced, level, free_blocks)
    values = np.asarray(evaluate_many(problem.objective(level), blocks), dtype=float)
    evaluations = pts.shape[0]
    i0 = int(np.argmin(values))
    x0 = pts[i0].copy()

    def point_value(x: np.ndarray) -> float:
        fb = [x[offs[i] : offs[i + 1]].reshape(1, -1) for i in range(len(free_widths))]
        bl = _substitute_chain(problem, announced, level, fb)
        return float(np.asarray(evaluate_many(problem.objective(level), bl))[0])

    x = x0.copy()
    fx = float(values[i0])
    # one step size per coordinate, starting at the grid spacing
    steps = np.array([(axes[i][-1] - axes[i][0]) / (grid.points - 1) if grid.points > 1
                      else 1.0 for i in range(D)])
    for _ in range(grid.refine_iters):
        if steps.max(initial=0.0) < grid.refine_floor:
            break
        improved = False
        for i in range(D):
            for delta in (steps[i], -steps[i]):
                trial = x.copy()
                trial[i] += delta
                f_trial = point_value(trial)
                evaluations += 1
                if f_trial < fx:
                    x, fx = trial, f_trial
                    improved = True
                    break
        if not improved:
            steps *= grid.refine_shrink
    drift = float(np.abs(x - x0).max(initial=0.0))
    argmin = DecisionPoint.from_concat(free_widths, x)
    return OracleResult(argmin, fx, x0, drift, evaluations)


def sublevel_inequality_check(probe: SublevelProbe, strategy: AffineStrategy,
                              sampler: SampleSpec,
                              tol: float = ALGEBRAIC_TOL) -> InequalityStats:
    """One-sidedness of the follower cost on the strategy's graph.

    Samples lower-level points around the anchor (the anchor itself is
    always sample 0), lifts them through the strategy, and counts values
    below threshold - tol.  Zero violations is the expected outcome when
    the strategy's graph sits on the supporting side of the sublevel set.
    """
    lower_anchor = probe.anchor.blocks[1:]
    if len(lower_anchor) != len(strategy.coeffs):
        raise DimensionError("probe anchor and strategy disagree on lower levels")
    base = np.concatenate(lower_anchor)
    rng = np.random.default_rng(sampler.seed)
    pts = base + rng.uniform(-sampler.radius, sampler.radius, (sampler.count, base.size))
    pts[0] = base
    widths = [b.size for b in lower_anchor]
    offs = np.concatenate([[0], np.cumsum(widths)])
    lower = [pts[:, offs[i] : offs[i + 1]] for i in range(len(widths))]
    own = strategy.batch(lower)
    values = np.asarray(evaluate_many(probe.objective, [own] + lower), dtype=float)
    violations = int(np.count_nonzero(values < probe.threshold - tol))
    imin = int(np.argmin(values))
    return InequalityStats(
        samples=sampler.count,
        violations=violations,
        min_value=float(values[imin]),
        min_point=pts[imin].copy(),
        threshold=probe.threshold,
    )


# ---------------------------------------------------------------------------
# full verification
# ---------------------------------------------------------------------------

@dataclass
class StrategyCheck:
    """Per-announcing-level algebra checks (levels 1..n-1)."""

    level: int
    existence_passed: bool
    existence_norm: float
    convexity: str
    realization_residual: float
    membership_residual: float     # scale-normalized, max over samples
    inequality_violations: int
    inequality_min: float
    passed: bool

    def to_dict(self) -> Dict:
        return {
            "level": self.level,
            "existence_passed": self.existence_passed,
            "existence_norm": self.existence_norm,
            "convexity": self.convexity,
            "realization_residual": self.realization_residual,
            "membership_residual": self.membership_residual,
            "inequality_violations": self.inequality_violations,
            "inequality_min": self.inequality_min,
            "passed": self.passed,
        }


@dataclass
class ResponseCheck:
    """Oracle best-response agreement for responding levels (2..n)."""

    level: int
    argmin: List[List[float]]
    distance: float
    value: float
    refinement_drift: float
    low_confidence: bool
    passed: bool

    def to_dict(self) -> Dict:
        return {
            "level": self.level,
            "argmin": self.argmin,
            "distance": self.distance,
            "value": self.value,
            "refinement_drift": self.refinement_drift,
            "low_confidence": self.low_confidence,
            "passed": self.passed,
        }


@dataclass
class VerificationReport:
    verified: bool
    verdict: str                    # "verified" | "failed"
    reasons: List[str]
    desired: List[List[float]]
    strategy_checks: List[StrategyCheck]
    response_checks: List[ResponseCheck]
    tolerances: Dict[str, float]

    def to_dict(self) -> Dict:
        return {
            "verified": self.verified,
            "verdict": self.verdict,
            "reasons": list(self.reasons),
            "desired": self.desired,
            "strategy_checks": [c.to_dict() for c in self.strategy_checks],
            "response_checks": [c.to_dict() for c in self.response_checks],
            "tolerances": dict(self.tolerances),
        }


def _membership_residual(stage: GameProblem, stage_d: DecisionPoint,
                         strategy: AffineStrategy, seed: int,
                         count: int, radius: float) -> float:
    """Max scale-normalized hyperplane residual of the strategy graph.

    Residual at x: <g_1, gamma(x) - d_1> + sum_j <g_j, x_j - d_j> where g
    is the second-stage-objective gradient at the stage anchor.  A zero
    gradient supports trivially (residual 0).
    """
    g = gradient(stage.objective(2), stage_d)
    if g.norm() == 0.0:
        return 0.0
    rng = np.random.default_rng(seed)
    lower_anchor = stage_d.blocks[1:]
    base = np.concatenate(lower_anchor)
    pts = base + rng.uniform(-radius, radius, (count, base.size))
    widths = [b.size for b in lower_anchor]
    offs = np.concatenate([[0], np.cumsum(widths)])
    lower = [pts[:, offs[i] : offs[i + 1]] for i in range(len(widths))]
    own = strategy.batch(lower)
    terms = [(own - stage_d.blocks[0]) @ g.blocks[0]]
    for Xj, dj, gj in zip(lower, lower_anchor, g.blocks[1:]):
        terms.append((Xj - dj) @ gj)
    total = np.sum(terms, axis=0)
    scale = np.sum([np.abs(t) for t in terms], axis=0)
    return float(np.max(np.abs(total) / (1.0 + scale)))


def verify_full(problem: GameProblem, strategies: Sequence[AffineStrategy],
                tol: float = ARGMIN_TOL,
                grid: Optional[GridSpec] = None,
                desired: Optional[DecisionPoint] = None,
                seed: int = 0,
                membership_samples: int = 100,
                inequality_samples: int = 2000,
                sample_radius: float = 5.0) -> VerificationReport:
    """Run every check against a full strategy chain (levels 1..n-1).

    In order: realization residuals, hyperplane membership, oracle best
    responses (each responding level must land on the desired blocks within
    ``tol`` componentwise), and sublevel one-sidedness sampling.  Existence
    verdicts are reported for context but do not gate the verdict — a
    working strategy for a degenerate game is still verified.
    """
    n = problem.levels
    if len(strategies) != n - 1:
        raise DimensionError(
            "need one strategy per announcing level (1..%d), got %d"
            % (n - 1, len(strategies))
        )
    _check_chain(strategies, n - 1, n)
    grid = grid or GridSpec()
    d = desired if desired is not None else team_optimum(problem).point

    reasons: List[str] = []
    strategy_checks: List[StrategyCheck] = []
    stage = problem
    for lev in range(1, n):
        strategy = strategies[lev - 1]
        stage_d = d.tail(lev)
        verdict = leader_existence_check(stage, stage_d)
        own_desired = d.block(lev)
        realized = strategy(d.tail(lev + 1))
        realization = float(np.linalg.norm(realized - own_desired))
        realization_ok = realization <= ALGEBRAIC_TOL * (
            1.0 + float(np.linalg.norm(own_desired))
        )
        membership = _membership_residual(
            stage, stage_d, strategy, seed + 17 * lev, membership_samples, sample_radius
        )
        membership_ok = membership <= ALGEBRAIC_TOL
        probe = SublevelProbe.at(stage.objective(2), stage_d)
        stats = sublevel_inequality_check(
            probe, strategy,
            SampleSpec(inequality_samples, sample_radius, seed + 31 * lev),
        )
        inequality_ok = stats.violations == 0
        passed = realization_ok and membership_ok and inequality_ok
        if not realization_ok:
            reasons.append(
                "level %d: realization residual %.3g" % (lev, realization)
            )
        if not membership_ok:
            reasons.append(
                "level %d: hyperplane membership residual %.3g" % (lev, membership)
            )
        if not inequality_ok:
            reasons.append(
                "level %d: %d sampled graph points dip below the anchor value"
                % (lev, stats.violations)
            )
        strategy_checks.append(StrategyCheck(
            level=lev,
            existence_passed=verdict.passed,
            existence_norm=verdict.block_norm,
            convexity=verdict.convexity,
            realization_residual=realization,
            membership_residual=membership,
            inequality_violations=stats.violations,
            inequality_min=stats.min_value,
            passed=passed,
        ))
        if lev < n - 1:
            stage = reduce_problem(stage, dataclasses.replace(strategy, level=1))

    response_checks: List[ResponseCheck] = []
    spacing = 2.0 * grid.radius / max(grid.points - 1, 1)
    for lev in range(2, n + 1):
        target = d.tail(lev)
        oracle = oracle_best_response(problem, strategies, lev, grid, anchor=target)
        distance = float(
            np.abs(oracle.argmin.concat() - target.concat()).max(initial=0.0)
        )
        low_conf = oracle.refinement_drift > 2.0 * spacing
        passed = distance <= tol
        if not passed:
            reasons.append(
                "level %d: oracle argmin is %.3g away from the desired blocks"
                % (lev, distance)
            )
        response_checks.append(ResponseCheck(
            level=lev,
            argmin=[list(map(float, b)) for b in oracle.argmin.blocks],
            distance=distance,
            value=oracle.value,
            refinement_drift=oracle.refinement_drift,
            low_confidence=low_conf,
            passed=passed,
        ))

    verified = all(c.passed for c in strategy_checks) and all(
        c.passed for c in response_checks
    )
    return VerificationReport(
        verified=verified,
        verdict="verified" if verified else "failed",
        reasons=reasons,
        desired=[list(map(float, b)) for b in d.blocks],
        strategy_checks=strategy_checks,
        response_checks=response_checks,
        tolerances={
            "argmin": tol,
            "algebraic": ALGEBRAIC_TOL,
            "grid_radius": grid.radius,
            "grid_points": float(grid.points),
        },
    )

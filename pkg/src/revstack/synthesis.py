"""Affine strategy construction for multilevel games.

A player at level L announces an affine map from every lower block into its
own block, stored in deviation form around the desired equilibrium d:

    u^L = d^L - sum_{j>L} Q_j (u^j - d^j)

so the realization condition (announcing at d returns d^L) holds by
construction.  The deviation gains Q_j come from the follower-objective
gradient at d: the rank-one choice Q_j = g_1 g_j^T / <g_1, g_1> places the
whole graph of the strategy inside the follower's supporting hyperplane,
and the full solution set is the rank-one particular solution plus an
orthonormal null-space basis of the leading gradient block times free
parameter matrices.  Substituting the top strategy into the remaining
objectives yields a game with one level fewer; iterating gives the n-level
cascade.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .calculus import gradient
from .equilibrium import team_optimum
from .errors import DimensionError, ExistenceError, SynthesisError
from .geometry import ExistenceVerdict, grad_tol, leader_existence_check
from .model import (
    Constant,
    DecisionPoint,
    Dims,
    ExprObjective,
    GameProblem,
    LinearConstraints,
    Negate,
    Node,
    Objective,
    Power,
    Product,
    QuadraticObjective,
    Sum,
    Var,
)

__all__ = [
    "AffineStrategy",
    "ReducedGradients",
    "StrategyFamily",
    "reduced_gradients",
    "synthesize_single_leader",
    "synthesize_single_middle",
    "synthesize_family_leader",
    "instantiate",
    "select_parameters",
    "reduce_problem",
    "synthesize_cascade",
]


@dataclass(frozen=True, eq=False)
class AffineStrategy:
    """Deviation-form affine strategy of the player at ``level``.

    ``anchor`` holds the desired blocks for this level and everything below
    it; ``coeffs`` holds one deviation gain Q_j per lower level, in order.
    """

    level: int
    anchor: DecisionPoint
    coeffs: Tuple[np.ndarray, ...]

    def __post_init__(self):
        coeffs = tuple(np.atleast_2d(np.asarray(Q, dtype=float)) for Q in self.coeffs)
        object.__setattr__(self, "coeffs", coeffs)
        if self.level < 1:
            raise DimensionError("strategy level must be >= 1")
        if len(self.anchor.blocks) != 1 + len(coeffs):
            raise DimensionError(
                "anchor has %d blocks but the strategy maps %d lower levels"
                % (len(self.anchor.blocks), len(coeffs))
            )
        m_own = self.anchor.blocks[0].size
        for Q, dj in zip(coeffs, self.anchor.blocks[1:]):
            if Q.shape != (m_own, dj.size):
                raise DimensionError(
                    "deviation gain has shape %s, expected (%d, %d)"
                    % (Q.shape, m_own, dj.size)
                )

    @property
    def own_anchor(self) -> np.ndarray:
        return self.anchor.blocks[0]

    @property
    def lower_anchor(self) -> DecisionPoint:
        return DecisionPoint(self.anchor.blocks[1:])

    def _lower_blocks(self, lower) -> Tuple[np.ndarray, ...]:
        blocks = lower.blocks if isinstance(lower, DecisionPoint) else tuple(
            np.atleast_1d(np.asarray(b, dtype=float)) for b in lower
        )
        if len(blocks) != len(self.coeffs):
            raise DimensionError(
                "expected %d lower blocks, got %d" % (len(self.coeffs), len(blocks))
            )
        return blocks

    def __call__(self, lower) -> np.ndarray:
        """Announced own block for the given lower-level blocks."""
        blocks = self._lower_blocks(lower)
        out = self.own_anchor.copy()
        for Q, xj, dj in zip(self.coeffs, blocks, self.anchor.blocks[1:]):
            out -= Q @ (xj - dj)
        return out

    def batch(self, lower: Sequence[np.ndarray]) -> np.ndarray:
        """Vectorized evaluation: lower blocks shaped (P, m_j) -> (P, m_own)."""
        P = lower[0].shape[0]
        out = np.tile(self.own_anchor, (P, 1))
        for Q, xj, dj in zip(self.coeffs, lower, self.anchor.blocks[1:]):
            out -= (xj - dj) @ Q.T
        return out

    def as_affine(self) -> Tuple[np.ndarray, Tuple[np.ndarray, ...]]:
        """Offset form: returns (offset, linear) with u^L = offset + sum C_j u^j."""
        offset = self.own_anchor.copy()
        linear = []
        for Q, dj in zip(self.coeffs, self.anchor.blocks[1:]):
            offset += Q @ dj
            linear.append(-Q)
        return offset, tuple(linear)

    @classmethod
    def from_affine(cls, level: int, offset, linear: Sequence[np.ndarray],
                    anchor_lower: DecisionPoint) -> "AffineStrategy":
        """Build from offset form, anchored at the given lower-level point.

        The strategy's own anchor block is its value at ``anchor_lower``, so
        a map that misses the desired point keeps its realization error.
        """
        offset = np.atleast_1d(np.asarray(offset, dtype=float))
        C = [np.atleast_2d(np.asarray(M, dtype=float)) for M in linear]
        if len(C) != len(anchor_lower.blocks):
            raise DimensionError(
                "%d coefficient blocks for %d lower levels"
                % (len(C), len(anchor_lower.blocks))
            )
        own = offset.copy()
        for M, dj in zip(C, anchor_lower.blocks):
            if M.shape != (offset.size, dj.size):
                raise DimensionError(
                    "coefficient block has shape %s, expected (%d, %d)"
                    % (M.shape, offset.size, dj.size)
                )
            own += M @ dj
        anchor = DecisionPoint((own,) + anchor_lower.blocks)
        return cls(level, anchor, tuple(-M for M in C))

    def describe(self, lower_widths: Optional[Sequence[int]] = None) -> List[str]:
        """Human-readable component lines, e.g. ``u1 = 12 - u2 - 3*u3``."""
        offset, linear = self.as_affine()
        widths = [d.size for d in self.anchor.blocks[1:]]
        m_own = offset.size

        def vname(level: int, index: int, width: int) -> str:
            return "u%d" % level if width == 1 else "u%d_%d" % (level, index)

        lines = []
        for r in range(m_own):
            lhs = vname(self.level, r + 1, m_own)
            parts = ["%.10g" % offset[r]]
            for off_level, (C, w) in enumerate(zip(linear, widths)):
                j = self.level + 1 + off_level
                for c in range(w):
                    coef = C[r, c]
                    if coef == 0.0:
                        continue
                    sign = "+" if coef > 0 else "-"
                    mag = abs(coef)
                    term = vname(j, c + 1, w)
                    if mag != 1.0:
                        term = "%.10g*%s" % (mag, term)
                    parts.append("%s %s" % (sign, term))
            lines.append("%s = %s" % (lhs, " ".join(parts)))
        return lines


@dataclass(frozen=True, eq=False)
class ReducedGradients:
    """Gradient blocks of the bottom objective after top-strategy substitution.

    ``own`` is the block of the next announcing player (the middle), the
    remaining lower blocks follow in ``lower``.
    """

    own: np.ndarray
    lower: Tuple[np.ndarray, ...]

    def norm(self) -> float:
        return float(np.linalg.norm(np.concatenate((self.own,) + self.lower)))


def reduced_gradients(problem: GameProblem, leader: AffineStrategy,
                      d: DecisionPoint) -> ReducedGradients:
    """Chain-rule gradients of the third objective through the top strategy.

    With u^1 = gamma(u^2..u^n), the substituted bottom cost has blocks
    grad_j = grad_{u^j} J3(d) - Q_j^T grad_{u^1} J3(d).
    """
    if problem.levels < 3:
        raise DimensionError("reduced gradients need at least three levels")
    if leader.level != 1 or len(leader.coeffs) != problem.levels - 1:
        raise DimensionError("leader strategy does not span this hierarchy's top level")
    g = gradient(problem.objective(3), d)
    g1 = g.block(1)
    adjusted = [g.block(j) - leader.coeffs[j - 2].T @ g1
                for j in range(2, problem.levels + 1)]
    return ReducedGradients(adjusted[0], tuple(adjusted[1:]))


def synthesize_single_leader(problem: GameProblem, d: DecisionPoint,
                             tol: Optional[float] = None) -> AffineStrategy:
    """Minimum-norm (rank-one) top-level strategy anchored at ``d``.

    Refuses with the failed verdict when the top player's gradient block of
    the second objective vanishes at the anchor.
    """
    verdict = leader_existence_check(problem, d, tol)
    if not verdict.passed:
        raise ExistenceError(
            "; ".join(verdict.reasons) or "top-level existence condition failed",
            verdict=verdict,
            level=1,
        )
    g = gradient(problem.objective(2), d)
    g1 = g.block(1)
    denom = float(g1 @ g1)
    coeffs = tuple(
        np.outer(g1, g.block(j)) / denom for j in range(2, problem.levels + 1)
    )
    return AffineStrategy(1, d, coeffs)


def synthesize_single_middle(problem: GameProblem, leader: AffineStrategy,
                             d: DecisionPoint,
                             tol: Optional[float] = None) -> AffineStrategy:
    """Rank-one middle strategy of a 3-level game under the given top strategy."""
    if problem.levels != 3:
        raise DimensionError(
            "direct middle synthesis is for 3-level games; use synthesize_cascade"
        )
    rg = reduced_gradients(problem, leader, d)
    threshold = grad_tol(rg.norm(), tol)
    own_norm = float(np.linalg.norm(rg.own))
    if own_norm <= threshold:
        verdict = ExistenceVerdict(
            passed=False,
            block_norm=own_norm,
            tol=threshold,
            reasons=(
                "the middle player cannot influence the substituted bottom "
                "objective at the anchor: its gradient block has norm %.3g "
                "(tolerance %.3g)" % (own_norm, threshold),
            ),
            convexity="skipped",
        )
        raise ExistenceError(verdict.reasons[0], verdict=verdict, level=2)
    denom = float(rg.own @ rg.own)
    coeffs = tuple(np.outer(rg.own, gl) / denom for gl in rg.lower)
    return AffineStrategy(2, d.tail(2), coeffs)


# ---------------------------------------------------------------------------
# strategy families
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StrategyFamily:
    """All optimal deviation gains at one level, as an affine set.

    Member gains are ``particular[j] + null_basis @ T_j`` for free parameter
    matrices T_j of shape ``(m_top - 1, m_j)``; T = 0 recovers the
    minimum-norm rank-one member.
    """

    level: int
    anchor: DecisionPoint
    particular: Tuple[np.ndarray, ...]
    null_basis: np.ndarray  # (m_top, m_top - 1), orthonormal columns

    @property
    def param_shapes(self) -> Tuple[Tuple[int, int], ...]:
        cols = self.null_basis.shape[1]
        return tuple((cols, dj.size) for dj in self.anchor.blocks[1:])

    @property
    def is_single_point(self) -> bool:
        return self.null_basis.shape[1] == 0

    def membership(self, strategy: AffineStrategy
                   ) -> Tuple[Tuple[np.ndarray, ...], float]:
        """Least-squares parameters for a strategy plus the residual.

        Residual ~ 0 means the strategy's gains lie in the family's affine
        set (anchors are not compared).
        """
        if strategy.level != self.level or len(strategy.coeffs) != len(self.particular):
            raise DimensionError("strategy does not match the family's shape")
        params = []
        worst = 0.0
        for Q, Q0 in zip(strategy.coeffs, self.particular):
            rhs = Q - Q0
            if self.null_basis.shape[1] == 0:
                T = np.zeros((0, rhs.shape[1]))
            else:
                T = np.linalg.lstsq(self.null_basis, rhs, rcond=None)[0]
            worst = max(worst, float(np.abs(self.null_basis @ T - rhs).max(initial=0.0)))
            params.append(T)
        return tuple(params), worst


def synthesize_family_leader(problem: GameProblem, d: DecisionPoint,
                             tol: Optional[float] = None) -> StrategyFamily:
    """Complete affine family of optimal top-level deviation gains.

    The particular member is the rank-one strategy; the homogeneous part is
    spanned by an orthonormal basis of the hyperplane orthogonal to the top
    gradient block, obtained from a Householder QR factorization.
    """
    rank_one = synthesize_single_leader(problem, d, tol)
    g = gradient(problem.objective(2), d)
    g1 = g.block(1)
    Q_full, _ = np.linalg.qr(g1.reshape(-1, 1), mode="complete")
    basis = Q_full[:, 1:]
    return StrategyFamily(1, d, rank_one.coeffs, basis)


def instantiate(family: StrategyFamily,
                params: Sequence[np.ndarray]) -> AffineStrategy:
    """Member of the family for the given parameter matrices (one per lower level)."""
    shapes = family.param_shapes
    if len(params) != len(shapes):
        raise DimensionError(
            "expected %d parameter matrices, got %d" % (len(shapes), len(params))
        )
    coeffs = []
    for T, shape, Q0 in zip(params, shapes, family.particular):
        T = np.asarray(T, dtype=float)
        if T.size == 0 and 0 in shape:
            T = T.reshape(shape)
        T = np.atleast_2d(T)
        if T.shape != shape:
            raise DimensionError(
                "parameter matrix has shape %s, expected %s" % (T.shape, shape)
            )
        coeffs.append(Q0 + family.null_basis @ T)
    return AffineStrategy(family.level, family.anchor, tuple(coeffs))


def select_parameters(family: StrategyFamily, criterion: str = "min-frobenius",
                      score: Optional[Callable[[AffineStrategy], float]] = None,
                      grid: Optional[Sequence[Sequence[np.ndarray]]] = None,
                      ) -> Tuple[np.ndarray, ...]:
    """Pick parameter matrices for a family member.

    'min-frobenius' returns all-zero parameters (the rank-one member has
    minimal Frobenius norm).  'custom' scans a caller-supplied grid of
    parameter tuples and returns the first minimizer of ``score`` applied
    to the instantiated member.
    """
    if criterion == "min-frobenius":
        return tuple(np.zeros(s) for s in family.param_shapes)
    if criterion == "custom":
        if score is None or not grid:
            raise ValueError("custom selection needs a score and a non-empty grid")
        best = None
        for params in grid:
            member = instantiate(family, params)
            val = float(score(member))
            if best is None or val < best[0]:
                best = (val, tuple(np.asarray(T, dtype=float) for T in params))
        return best[1]
    raise ValueError("unknown criterion %r" % (criterion,))


# ---------------------------------------------------------------------------
# reduction and the cascade
# ---------------------------------------------------------------------------

def _substitute_quadratic(obj: QuadraticObjective, dims: Dims,
                          offset: np.ndarray, C: Sequence[np.ndarray],
                          ) -> QuadraticObjective:
    """Closed-form substitution of u^1 = offset + sum C_m u^m into a quadratic."""
    n = dims.levels
    new_m = dims.m[1:]
    A_new: Dict[Tuple[int, int], np.ndarray] = {}
    l_new = [np.zeros(w) for w in new_m]
    const = obj.const

    def add_block(p: int, q: int, mat: np.ndarray) -> None:
        # new-problem indices, p <= q enforced by callers
        key = (p, q)
        if key in A_new:
            A_new[key] = A_new[key] + mat
        else:
            A_new[key] = mat.copy()

    for (j, k), A in obj.A.items():
        if j == 1 and k == 1:
            const += float(offset @ (A @ offset))
            for m in range(2, n + 1):
                l_new[m - 2] += 2.0 * (C[m - 2].T @ (A @ offset))
            for m in range(2, n + 1):
                for r in range(m, n + 1):
                    mat = C[m - 2].T @ A @ C[r - 2]
                    if m == r:
                        add_block(m - 1, m - 1, mat)
                    else:
                        add_block(m - 1, r - 1, 2.0 * mat)
        elif j == 1:
            l_new[k - 2] += A.T @ offset
            for m in range(2, n + 1):
                mat = C[m - 2].T @ A
                if m < k:
                    add_block(m - 1, k - 1, mat)
                elif m == k:
                    add_block(k - 1, k - 1, 0.5 * (mat + mat.T))
                else:
                    add_block(k - 1, m - 1, mat.T)
        else:
            add_block(j - 1, k - 1, A)

    const += float(offset @ obj.l[0])
    for m in range(2, n + 1):
        l_new[m - 2] += C[m - 2].T @ obj.l[0]
        l_new[m - 2] += obj.l[m - 1]
    return QuadraticObjective(A=A_new, l=tuple(l_new), const=const)


def _substitute_expr(obj: ExprObjective, offset: np.ndarray,
                     C: Sequence[np.ndarray]) -> ExprObjective:
    """Tree substitution: the top block becomes affine in the shifted lower vars."""
    m_top = offset.size
    replacements: List[Node] = []
    for i in range(m_top):
        terms: List[Node] = []
        if offset[i] != 0.0:
            terms.append(Constant(float(offset[i])))
        for off_level, M in enumerate(C):
            for col in range(M.shape[1]):
                coef = float(M[i, col])
                if coef == 0.0:
                    continue
                var = Var(off_level + 1, col + 1)  # already in new numbering
                terms.append(var if coef == 1.0 else Product((Constant(coef), var)))
        if not terms:
            replacements.append(Constant(0.0))
        elif len(terms) == 1:
            replacements.append(terms[0])
        else:
            replacements.append(Sum(tuple(terms)))

    def walk(node: Node) -> Node:
        if isinstance(node, Constant):
            return node
        if isinstance(node, Var):
            if node.level == 1:
                return replacements[node.index - 1]
            return Var(node.level - 1, node.index)
        if isinstance(node, Sum):
            return Sum(tuple(walk(t) for t in node.terms))
        if isinstance(node, Product):
            return Product(tuple(walk(f) for f in node.factors))
        if isinstance(node, Power):
            return Power(walk(node.base), node.exponent)
        if isinstance(node, Negate):
            return Negate(walk(node.child))
        raise TypeError("not an expression node: %r" % (node,))

    return ExprObjective(walk(obj.root))


def reduce_problem(problem: GameProblem, strategy: AffineStrategy) -> GameProblem:
    """Substitute the top strategy and drop the top level.

    Quadratic objectives stay quadratic (closed block composition);
    expression objectives are rewritten by tree substitution; constraint
    rows absorb the substitution as well.  The result has n-1 levels with
    level indices shifted down by one.
    """
    if strategy.level != 1:
        raise DimensionError("reduction substitutes the top level; strategy has level %d"
                             % strategy.level)
    if len(strategy.coeffs) != problem.levels - 1:
        raise DimensionError("strategy does not map all lower levels of this problem")
    if strategy.anchor.widths != problem.dims.m:
        raise DimensionError(
            "strategy anchored for widths %s, problem has %s"
            % (strategy.anchor.widths, problem.dims.m)
        )
    offset, C = strategy.as_affine()
    new_dims = problem.dims.drop_top()
    new_objectives = []
    for obj in problem.objectives[1:]:
        if isinstance(obj, QuadraticObjective):
            new_objectives.append(_substitute_quadratic(obj, problem.dims, offset, C))
        elif isinstance(obj, ExprObjective):
            new_objectives.append(_substitute_expr(obj, offset, C))
        else:
            raise TypeError("not an objective: %r" % (obj,))
    new_cons = None
    cons = problem.constraints
    if cons is not None:
        A_top = cons.A[0]
        new_A = tuple(
            cons.A[m - 1] + A_top @ C[m - 2] for m in range(2, problem.levels + 1)
        )
        new_cons = LinearConstraints(new_A, cons.b - A_top @ offset)
    return GameProblem(new_dims, tuple(new_objectives), new_cons)


def synthesize_cascade(problem: GameProblem,
                       desired: Optional[DecisionPoint] = None,
                       tol: Optional[float] = None,
                       starts: Optional[Sequence[DecisionPoint]] = None,
                       ) -> List[AffineStrategy]:
    """Top-to-bottom synthesis: one rank-one strategy per announcing level.

    Computes the desired equilibrium (unless supplied), synthesizes the top
    strategy, substitutes it to get the one-smaller game, and repeats.  Each
    stage anchors at the corresponding tail of the original desired point.
    Existence failures carry the absolute level at which they occurred.
    """
    d = desired if desired is not None else team_optimum(problem, starts).point
    strategies: List[AffineStrategy] = []
    stage = problem
    stage_d = d
    for s in range(1, problem.levels):
        try:
            rel = synthesize_single_leader(stage, stage_d, tol)
        except ExistenceError as err:
            raise ExistenceError(
                "stage %d (announcing level %d): %s" % (s, s, err),
                verdict=err.verdict,
                level=s,
            ) from None
        strategies.append(rel if s == 1 else dataclasses.replace(rel, level=s))
        if s < problem.levels - 1:
            stage = reduce_problem(stage, rel)
            stage_d = stage_d.tail(2)
    return strategies

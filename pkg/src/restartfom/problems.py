"""Convex test problems: first-order oracles, projections, growth certificates.

Every instance answers two oracle queries at a feasible point ``x``:

* ``value(x)`` — the objective value alone (used for best-value reads that
  the complexity accounting treats as free), and
* ``evaluate(x)`` — the full oracle, returning the value together with one
  subgradient.  Oracle-call accounting throughout the package counts
  ``evaluate`` invocations.

Generated test problems additionally carry :class:`GrowthMetadata` with a
certified growth inequality

    f(x) - f_star >= mu * dist(x, X*)**d    on the initial sublevel set,

an analytic description of the optimal set (so distances are exact), and the
constants needed to evaluate complexity bounds (Lipschitz / smoothness /
Hölder-gradient constants).
"""

from __future__ import annotations

import dataclasses
import math
from typing import NamedTuple

import numpy as np

from restartfom.errors import (
    DimensionMismatchError,
    NonFiniteInputError,
    ParameterError,
    UnsupportedQueryError,
)

__all__ = [
    "AllSpace",
    "Ball",
    "Box",
    "CountingProblem",
    "Domain",
    "GrowthMetadata",
    "LeastSquaresProblem",
    "NormPowerProblem",
    "OracleOutput",
    "PiecewiseMaxProblem",
    "ProblemInstance",
    "distance_to_opt",
    "evaluate",
    "growth_envelope",
    "make_least_squares_problem",
    "make_norm_power_problem",
    "make_piecewise_max_problem",
    "project",
]


class OracleOutput(NamedTuple):
    """Objective value and one subgradient at the queried point."""

    value: float
    subgradient: np.ndarray


# ---------------------------------------------------------------------------
# Feasible sets
# ---------------------------------------------------------------------------


class Domain:
    """A closed convex feasible set with a Euclidean projection."""

    def project(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def contains(self, x: np.ndarray, tol: float = 1e-12) -> bool:
        return bool(np.linalg.norm(self.project(x) - x) <= tol * (1.0 + np.linalg.norm(x)))

    def describe(self) -> dict:
        raise NotImplementedError


class AllSpace(Domain):
    """The unconstrained domain; projection is the identity."""

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float)

    def contains(self, x: np.ndarray, tol: float = 1e-12) -> bool:
        return True

    def describe(self) -> dict:
        return {"kind": "all-space"}


class Ball(Domain):
    """Euclidean ball ``{x : ||x - center|| <= radius}``."""

    def __init__(self, center: np.ndarray, radius: float):
        if radius <= 0:
            raise ParameterError(f"ball radius must be positive, got {radius}")
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)

    def project(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        offset = x - self.center
        norm = float(np.linalg.norm(offset))
        if norm <= self.radius:
            return x
        return self.center + (self.radius / norm) * offset

    def describe(self) -> dict:
        return {"kind": "ball", "center": self.center.tolist(), "radius": self.radius}


class Box(Domain):
    """Axis-aligned box ``{x : lower <= x <= upper}`` (bounds may be infinite)."""

    def __init__(self, lower: np.ndarray, upper: np.ndarray):
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        if self.lower.shape != self.upper.shape:
            raise ParameterError("box bounds must have matching shapes")
        if np.any(self.lower > self.upper):
            raise ParameterError("box lower bounds exceed upper bounds")

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lower, self.upper)

    def describe(self) -> dict:
        return {"kind": "box", "lower": self.lower.tolist(), "upper": self.upper.tolist()}


# ---------------------------------------------------------------------------
# Growth metadata
# ---------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class GrowthMetadata:
    """Certified analytic constants of a test problem.

    Attributes
    ----------
    mu, d:
        Growth constants: ``f(x) - f_star >= mu * dist(x, X*)**d`` holds on
        the initial sublevel set.
    f_star:
        The optimal value.
    M:
        Bound on subgradient norms (sharp instances), when constant.
    L:
        Gradient Lipschitz constant (smooth instances).
    M_nu, nu:
        Hölder-gradient constant and exponent,
        ``||grad f(x) - grad f(y)|| <= M_nu * ||x - y||**nu``.
    dist_x0_to_opt:
        Distance from the run's start point to the optimal set; filled in by
        the harness when a bound's large-gap branch needs it.
    """

    mu: float
    d: float
    f_star: float = 0.0
    M: float | None = None
    L: float | None = None
    M_nu: float | None = None
    nu: float | None = None
    dist_x0_to_opt: float | None = None

    def __post_init__(self):
        if not (self.mu > 0):
            raise ParameterError(f"growth constant mu must be positive, got {self.mu}")
        if self.d < 1:
            raise ParameterError(f"growth degree must be >= 1, got {self.d}")
        if self.nu is not None:
            if not (0.0 <= self.nu <= 1.0):
                raise ParameterError(f"Hölder exponent must lie in [0, 1], got {self.nu}")
            if self.d < 1.0 + self.nu - 1e-15:
                raise ParameterError(
                    f"growth degree {self.d} is incompatible with Hölder exponent "
                    f"{self.nu} (requires d >= 1 + nu)"
                )

    def envelope(self, f_hat: float) -> float:
        """Radius of the sublevel set ``{f <= f_hat}`` around ``X*``.

        Returns ``((f_hat - f_star)/mu)**(1/d)``, which upper-bounds the true
        radius whenever the growth inequality holds and is exact for the
        radial norm-power family.
        """
        if f_hat < self.f_star:
            raise ParameterError(
                f"sublevel value {f_hat} lies below the optimal value {self.f_star}"
            )
        return ((f_hat - self.f_star) / self.mu) ** (1.0 / self.d)


# ---------------------------------------------------------------------------
# Problem instances
# ---------------------------------------------------------------------------


class ProblemInstance:
    """A convex objective over a closed convex domain, with oracles.

    Subclasses implement :meth:`value` and :meth:`_subgradient`; everything
    else (validation, projection, metadata plumbing) lives here.  Instances
    are immutable after construction and safe to share between copies.
    """

    def __init__(
        self,
        name: str,
        dimension: int,
        domain: Domain | None = None,
        metadata: GrowthMetadata | None = None,
    ):
        if dimension < 1:
            raise ParameterError(f"dimension must be a positive integer, got {dimension}")
        self.name = name
        self.dimension = int(dimension)
        self.domain = domain if domain is not None else AllSpace()
        self.metadata = metadata

    # -- oracle ------------------------------------------------------------

    def _check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dimension,):
            raise DimensionMismatchError(
                f"{self.name}: expected a point of shape ({self.dimension},), "
                f"got {x.shape}"
            )
        if not np.all(np.isfinite(x)):
            raise NonFiniteInputError(f"{self.name}: point has non-finite coordinates")
        return x

    def value(self, x) -> float:
        """Objective value alone (a free read in the oracle accounting)."""
        return self._value(self._check_point(x))

    def evaluate(self, x) -> OracleOutput:
        """Full oracle: objective value and one subgradient."""
        x = self._check_point(x)
        return OracleOutput(self._value(x), self._subgradient(x))

    def _value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def _subgradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # -- geometry ----------------------------------------------------------

    def project(self, x) -> np.ndarray:
        return self.domain.project(self._check_point(x))

    def distance_to_opt(self, x) -> float:
        """Exact Euclidean distance to the optimal set."""
        raise UnsupportedQueryError(
            f"{self.name}: no analytic description of the optimal set"
        )

    def growth_envelope(self, f_hat: float) -> float:
        if self.metadata is None:
            raise UnsupportedQueryError(f"{self.name}: no growth metadata")
        return self.metadata.envelope(f_hat)

    def subgradient_norm_bound(self, f_hat: float) -> float:
        """Upper bound on ``||g||`` over the sublevel set ``{f <= f_hat}``."""
        raise UnsupportedQueryError(
            f"{self.name}: no analytic subgradient-norm bound"
        )

    def point_at_gap(self, gap: float, *, direction=None, rng=None) -> np.ndarray:
        """A feasible point ``x`` with ``f(x) - f_star == gap`` (to float precision)."""
        raise UnsupportedQueryError(f"{self.name}: cannot place points by gap")

    def describe(self) -> dict:
        return {"name": self.name, "dimension": self.dimension, "domain": self.domain.describe()}

    def _unit_direction(self, direction, rng) -> np.ndarray:
        if direction is not None:
            u = np.asarray(direction, dtype=float)
            norm = float(np.linalg.norm(u))
            if norm == 0.0:
                raise ParameterError("direction must be nonzero")
            return u / norm
        if rng is None:
            raise ParameterError("point_at_gap needs a direction or an rng")
        u = rng.normal(size=self.dimension)
        return u / float(np.linalg.norm(u))


class NormPowerProblem(ProblemInstance):
    """Radial objective ``f(x) = mu * ||x - center||**d`` with ``X* = {center}``.

    The growth inequality holds with equality everywhere, so the growth
    envelope is the exact sublevel radius.  Carried constants:

    * ``d == 1``: subgradient norms equal ``mu`` (``M = mu``);
    * ``d == 2``: the gradient ``2*mu*(x - c)`` is ``2*mu``-Lipschitz;
    * ``1 < d <= 2``: the gradient is Hölder with exponent ``nu = d - 1`` and
      constant ``mu * d * 2**(1 - nu)`` (worst case at antipodal pairs).
    """

    def __init__(self, dimension: int, mu: float, d: float, center, domain: Domain | None = None):
        if mu <= 0:
            raise ParameterError(f"mu must be positive, got {mu}")
        if d < 1:
            raise ParameterError(f"growth degree must be >= 1, got {d}")
        center = np.asarray(center, dtype=float)
        nu = M = L = M_nu = None
        if d == 1:
            M = mu
        if 1 < d <= 2:
            nu = d - 1
            M_nu = mu * d * 2.0 ** (1.0 - nu)
        if d == 2:
            L = 2.0 * mu
        metadata = GrowthMetadata(mu=mu, d=d, f_star=0.0, M=M, L=L, M_nu=M_nu, nu=nu)
        super().__init__(f"norm-power(d={d:g})", dimension, domain, metadata)
        if center.shape != (self.dimension,):
            raise ParameterError("center dimension mismatch")
        if not self.domain.contains(center):
            raise ParameterError("center must be feasible")
        self.center = center
        self.mu = float(mu)
        self.d = float(d)

    def _value(self, x: np.ndarray) -> float:
        return self.mu * float(np.linalg.norm(x - self.center)) ** self.d

    def _subgradient(self, x: np.ndarray) -> np.ndarray:
        offset = x - self.center
        r = float(np.linalg.norm(offset))
        if r == 0.0:
            # 0 is a valid subgradient at the minimizer for every d >= 1.
            return np.zeros_like(offset)
        return (self.mu * self.d * r ** (self.d - 2.0)) * offset

    def distance_to_opt(self, x) -> float:
        return float(np.linalg.norm(self._check_point(x) - self.center))

    def subgradient_norm_bound(self, f_hat: float) -> float:
        if self.d == 1:
            return self.mu
        return self.mu * self.d * self.growth_envelope(f_hat) ** (self.d - 1.0)

    def point_at_gap(self, gap: float, *, direction=None, rng=None) -> np.ndarray:
        if gap < 0:
            raise ParameterError("gap must be nonnegative")
        u = self._unit_direction(direction, rng)
        x = self.center + (gap / self.mu) ** (1.0 / self.d) * u
        if not self.domain.contains(x, tol=1e-9):
            raise ParameterError("requested gap places the point outside the domain")
        return x

    def describe(self) -> dict:
        out = super().describe()
        out.update({"kind": "norm_power", "mu": self.mu, "d": self.d, "center": self.center.tolist()})
        return out


class PiecewiseMaxProblem(ProblemInstance):
    """Polyhedral objective ``f(x) = max_i (a_i' x + b_i)`` with sharp growth.

    ``minimizer`` must be the unique minimizer with ``f(minimizer) = 0``; the
    metadata's ``mu`` certifies ``f(x) >= mu * ||x - minimizer||``.  At kinks
    the oracle returns the gradient of the active piece with the lowest index.
    """

    def __init__(self, A, b, minimizer, mu: float, domain: Domain | None = None, name: str = "piecewise-max"):
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float)
        if A.ndim != 2 or b.shape != (A.shape[0],):
            raise ParameterError("A must be (pieces, dim) with matching offsets b")
        minimizer = np.asarray(minimizer, dtype=float)
        metadata = GrowthMetadata(
            mu=mu, d=1.0, f_star=0.0, M=float(np.linalg.norm(A, axis=1).max())
        )
        super().__init__(name, A.shape[1], domain, metadata)
        self.A = A
        self.b = b
        self.minimizer = minimizer
        value_at_min = self._value(minimizer)
        if abs(value_at_min) > 1e-9:
            raise ParameterError(f"f(minimizer) = {value_at_min}, expected 0")

    def _value(self, x: np.ndarray) -> float:
        return float(np.max(self.A @ x + self.b))

    def _subgradient(self, x: np.ndarray) -> np.ndarray:
        # np.argmax picks the first (lowest-index) maximal piece.
        idx = int(np.argmax(self.A @ x + self.b))
        return self.A[idx].copy()

    def distance_to_opt(self, x) -> float:
        return float(np.linalg.norm(self._check_point(x) - self.minimizer))

    def subgradient_norm_bound(self, f_hat: float) -> float:
        return float(self.metadata.M)

    def point_at_gap(self, gap: float, *, direction=None, rng=None) -> np.ndarray:
        if gap < 0:
            raise ParameterError("gap must be nonnegative")
        if gap == 0:
            return self.minimizer.copy()
        u = self._unit_direction(direction, rng)
        # Along the ray x = minimizer + t*u the objective is the max of the
        # affine functions t -> slopes*t - margins with nonnegative margins,
        # so the first time it reaches `gap` has the closed form below.
        slopes = self.A @ u
        margins = -(self.A @ self.minimizer + self.b)
        rising = slopes > 0
        if not np.any(rising):
            raise ParameterError("objective does not rise along the given direction")
        t = float(np.min((gap + margins[rising]) / slopes[rising]))
        x = self.minimizer + t * u
        if not self.domain.contains(x, tol=1e-9):
            raise ParameterError("requested gap places the point outside the domain")
        return x

    def describe(self) -> dict:
        out = super().describe()
        out.update({"kind": "piecewise_max", "pieces": int(self.A.shape[0]), "mu": self.metadata.mu})
        return out


class LeastSquaresProblem(ProblemInstance):
    """Smooth objective ``f(x) = 0.5*||A x - b||**2`` with consistent ``b``.

    ``X* = {x : A x = b}`` is affine; distances use the pseudoinverse.  The
    metadata is exact: ``L = sigma_max(A)**2``, quadratic growth with
    ``mu = sigma_min_positive(A)**2 / 2``, and the growth envelope equals the
    true sublevel radius.
    """

    def __init__(self, A, b, name: str = "least-squares"):
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float)
        if A.ndim != 2 or b.shape != (A.shape[0],):
            raise ParameterError("A must be (rows, dim) with a matching vector b")
        singular = np.linalg.svd(A, compute_uv=False)
        positive = singular[singular > singular.max() * 1e-12]
        if positive.size == 0:
            raise ParameterError("A must be nonzero")
        L = float(singular.max() ** 2)
        mu = float(positive.min() ** 2) / 2.0
        metadata = GrowthMetadata(mu=mu, d=2.0, f_star=0.0, L=L, M_nu=L, nu=1.0)
        super().__init__(name, A.shape[1], AllSpace(), metadata)
        self.A = A
        self.b = b
        self._pinv = np.linalg.pinv(A)
        residual = float(np.linalg.norm(A @ (self._pinv @ b) - b))
        if residual > 1e-8 * max(1.0, float(np.linalg.norm(b))):
            raise ParameterError("b must lie in the range of A (consistent system)")

    def _value(self, x: np.ndarray) -> float:
        r = self.A @ x - self.b
        return 0.5 * float(r @ r)

    def _subgradient(self, x: np.ndarray) -> np.ndarray:
        return self.A.T @ (self.A @ x - self.b)

    def distance_to_opt(self, x) -> float:
        x = self._check_point(x)
        return float(np.linalg.norm(self._pinv @ (self.A @ x - self.b)))

    def subgradient_norm_bound(self, f_hat: float) -> float:
        if f_hat < 0:
            raise ParameterError("sublevel value below the optimal value 0")
        return math.sqrt(float(self.metadata.L)) * math.sqrt(2.0 * f_hat)

    def point_at_gap(self, gap: float, *, direction=None, rng=None) -> np.ndarray:
        if gap < 0:
            raise ParameterError("gap must be nonnegative")
        u = self._unit_direction(direction, rng)
        # Keep the offset inside the row space so the step is well defined.
        u = self._pinv @ (self.A @ u)
        norm_Au = float(np.linalg.norm(self.A @ u))
        if norm_Au == 0.0:
            raise ParameterError("direction lies in the null space of A")
        x_sol = self._pinv @ self.b
        return x_sol + (math.sqrt(2.0 * gap) / norm_Au) * u

    def describe(self) -> dict:
        out = super().describe()
        out.update({"kind": "least_squares", "rows": int(self.A.shape[0])})
        return out


# ---------------------------------------------------------------------------
# Generators (deterministic in an explicit seed)
# ---------------------------------------------------------------------------


def make_norm_power_problem(
    dimension: int,
    mu: float,
    d: float,
    center=None,
    domain: Domain | None = None,
) -> NormPowerProblem:
    """Radial test problem ``f(x) = mu*||x - center||**d`` (default center 0)."""
    if center is None:
        center = np.zeros(dimension)
    return NormPowerProblem(dimension, mu, d, center, domain)


def _regular_simplex_directions(dimension: int) -> np.ndarray:
    """``dimension + 1`` unit vectors forming a regular simplex (sum zero)."""
    k = dimension
    centered = np.eye(k + 1) - np.full((k + 1, k + 1), 1.0 / (k + 1))
    # Orthonormal basis of the sum-zero subspace, via QR of the centered identity.
    q, _ = np.linalg.qr(centered[:, :k])
    coords = centered @ q  # rows: simplex vertices expressed in k coordinates
    return coords / np.linalg.norm(coords, axis=1, keepdims=True)


def make_piecewise_max_problem(dimension: int, num_pieces: int, seed: int) -> PiecewiseMaxProblem:
    """Random polyhedral sharp-growth instance with certified constants.

    The active core is a rotated, scaled cross-polytope (``2*dimension``
    pieces, growth constant ``scale/sqrt(dimension)``) when ``num_pieces``
    allows, else a regular simplex (``dimension + 1`` pieces, growth constant
    ``scale/dimension``).  Remaining pieces are random, strictly inactive at
    the minimizer, and never undercut the core, so the recorded constants are
    valid by construction for every seed.
    """
    if num_pieces < dimension + 1:
        raise ParameterError(
            f"need at least dimension + 1 = {dimension + 1} pieces, got {num_pieces}"
        )
    rng = np.random.default_rng(seed)
    scale = float(rng.uniform(0.5, 2.0))
    center = rng.normal(size=dimension)
    raw = rng.normal(size=(dimension, dimension))
    rotation, upper = np.linalg.qr(raw)
    rotation = rotation * np.sign(np.diag(upper))  # canonical sign choice

    if num_pieces >= 2 * dimension:
        axes = rotation.T  # rows are the rotated coordinate directions
        core = scale * np.vstack([axes, -axes])
        mu = scale / math.sqrt(dimension)
    else:
        core = scale * (_regular_simplex_directions(dimension) @ rotation.T)
        mu = scale / dimension

    extras = num_pieces - core.shape[0]
    if extras > 0:
        directions = rng.normal(size=(extras, dimension))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        directions *= scale * rng.uniform(0.2, 1.0, size=(extras, 1))
        offsets = scale * rng.uniform(0.1, 1.0, size=extras)
        A = np.vstack([core, directions])
        b = np.concatenate([-core @ center, -directions @ center - offsets])
    else:
        A = core
        b = -core @ center

    return PiecewiseMaxProblem(A, b, center, mu, name=f"piecewise-max(seed={seed})")


def make_least_squares_problem(
    dimension: int,
    num_rows: int,
    seed: int,
    *,
    rank: int | None = None,
    sigma_range: tuple[float, float] = (1.0, 2.0),
) -> LeastSquaresProblem:
    """Random consistent least-squares instance with controlled spectrum.

    Singular values are drawn uniformly from ``sigma_range`` (the extremes are
    always included, so ``L`` and ``mu`` are exactly the endpoints squared);
    ``rank < dimension`` makes the optimal set a proper affine subspace.
    """
    if num_rows < dimension:
        raise ParameterError("num_rows must be at least the dimension")
    if rank is None:
        rank = dimension
    if not (1 <= rank <= dimension):
        raise ParameterError(f"rank must lie in [1, {dimension}], got {rank}")
    lo, hi = sigma_range
    if not (0 < lo <= hi):
        raise ParameterError("sigma_range must satisfy 0 < lo <= hi")
    rng = np.random.default_rng(seed)
    left, _ = np.linalg.qr(rng.normal(size=(num_rows, num_rows)))
    right, _ = np.linalg.qr(rng.normal(size=(dimension, dimension)))
    sigma = np.sort(rng.uniform(lo, hi, size=rank))[::-1]
    if rank >= 2:
        sigma[0], sigma[-1] = hi, lo
    else:
        sigma[0] = hi
    A = left[:, :rank] @ np.diag(sigma) @ right[:, :rank].T
    x_sol = rng.normal(size=dimension)
    return LeastSquaresProblem(A, A @ x_sol, name=f"least-squares(seed={seed})")


# ---------------------------------------------------------------------------
# Module-level operation aliases and a counting wrapper
# ---------------------------------------------------------------------------


def evaluate(problem: ProblemInstance, x) -> OracleOutput:
    """Full oracle query; accounting of calls lives with the caller."""
    return problem.evaluate(x)


def project(problem: ProblemInstance, x) -> np.ndarray:
    """Euclidean projection of ``x`` onto the problem's feasible set."""
    return problem.project(x)


def distance_to_opt(problem: ProblemInstance, x) -> float:
    """Exact distance from ``x`` to the optimal set (test problems only)."""
    return problem.distance_to_opt(x)


def growth_envelope(problem: ProblemInstance, f_hat: float) -> float:
    """Growth-certified radius of the sublevel set ``{f <= f_hat}``."""
    return problem.growth_envelope(f_hat)


class CountingProblem:
    """Transparent wrapper counting oracle queries (used by accounting tests)."""

    def __init__(self, inner: ProblemInstance):
        self.inner = inner
        self.evaluate_calls = 0
        self.value_calls = 0

    def evaluate(self, x) -> OracleOutput:
        self.evaluate_calls += 1
        return self.inner.evaluate(x)

    def value(self, x) -> float:
        self.value_calls += 1
        return self.inner.value(x)

    def __getattr__(self, attr):
        return getattr(self.inner, attr)

"""Closed-form complexity bounds for the restart schemes.

Two layers live here.  The bottom layer is per-method iteration/time budgets
for reaching a target accuracy ``eps_bar`` from a start within distance
``delta`` of the optimal set: :func:`k_subgrad`, :func:`k_accel`,
:func:`k_univ`, and the oracle-call budget :func:`t_univ` with its
bookkeeping constant :func:`c_const`.  The top layer evaluates the guarantees
for whole scheme runs — synchronous period counts and asynchronous clock-time
budgets — as :class:`BoundReport` objects with per-term breakdowns, so a
violated guarantee can be localized to a single term.

Conventions shared by all scheme-level bounds:

* ``N`` is the ladder height (copies run for targets ``2**n * eps``,
  ``n = -1..N``); ``n_bar`` is the first rung whose windowed target already
  covers the initial gap.
* When ``f(x0) - f_star < 5 * 2**N * eps`` the "below-5-2^N" regime applies
  and sums run to ``n_bar``; otherwise the sums run to ``N`` and an add-on
  term charges for closing the extra initial distance (which requires
  ``dist_x0_to_opt`` in the metadata).
* Totals are left real-valued; only the inner per-epoch budgets are floored.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable

from restartfom.errors import ParameterError, UnsupportedQueryError
from restartfom.problems import GrowthMetadata

__all__ = [
    "BoundReport",
    "bound_async_theorem",
    "bound_cor_accel",
    "bound_cor_subgrad",
    "bound_cor_univ",
    "bound_sync_theorem",
    "c_const",
    "default_N",
    "k_accel",
    "k_subgrad",
    "k_univ",
    "l0_admissible",
    "n_bar",
    "t_univ",
]

REGIME_STAGED = "below-5-2^N"
REGIME_ADD_ON = "add-on"


# ---------------------------------------------------------------------------
# Per-method budgets
# ---------------------------------------------------------------------------


def _check_positive(**kwargs: float) -> None:
    for name, value in kwargs.items():
        if not (value > 0):
            raise ParameterError(f"{name} must be positive, got {value}")


def k_subgrad(M: float, delta: float, eps_bar: float) -> int:
    """Iterations sufficient for the projected subgradient method.

    ``floor((M*delta/eps_bar)**2)`` epochs of step size ``eps_bar/||g||^2``
    reach a point with gap ``<= eps_bar`` from any start within distance
    ``delta`` of the optimal set.
    """
    _check_positive(M=M, eps_bar=eps_bar)
    if delta < 0:
        raise ParameterError(f"delta must be nonnegative, got {delta}")
    return math.floor((M * delta / eps_bar) ** 2)


def k_accel(L: float, delta: float, eps_bar: float) -> int:
    """Iterations sufficient for the accelerated gradient method:
    ``floor(2*delta*sqrt(L/eps_bar))``."""
    _check_positive(L=L, eps_bar=eps_bar)
    if delta < 0:
        raise ParameterError(f"delta must be nonnegative, got {delta}")
    return math.floor(2.0 * delta * math.sqrt(L / eps_bar))


def k_univ(M_nu: float, nu: float, delta: float, eps_bar: float) -> int:
    """Iterations sufficient for the universal fast gradient method.

    ``floor(2**((3+5*nu)/(1+3*nu)) * (M_nu * delta**(1+nu) / eps_bar)**(2/(1+3*nu)))``.
    """
    _check_positive(M_nu=M_nu, eps_bar=eps_bar)
    if not (0.0 <= nu <= 1.0):
        raise ParameterError(f"nu must lie in [0, 1], got {nu}")
    if delta < 0:
        raise ParameterError(f"delta must be nonnegative, got {delta}")
    lead = 2.0 ** ((3.0 + 5.0 * nu) / (1.0 + 3.0 * nu))
    return math.floor(lead * (M_nu * delta ** (1.0 + nu) / eps_bar) ** (2.0 / (1.0 + 3.0 * nu)))


def _log2_or_zero(coefficient: float, base: float) -> float:
    # A zero coefficient annihilates its log term even when the base would be
    # awkward (e.g. delta terms at nu = 1); keep that exact.
    if coefficient == 0.0:
        return 0.0
    return coefficient * math.log2(base)


def c_const(delta: float, eps: float, nu: float, M_nu: float, L0: float) -> float:
    """Per-restart overhead constant of the universal method's line search.

    ``4 + log2(delta**((1-nu)/(2*(1+3*nu))) * (2/eps)**(3*(1-nu)/(1+3*nu))
    * M_nu**(4/(1+3*nu))) - 2*log2(L0)``; independent of ``eps`` when
    ``nu == 1``.
    """
    _check_positive(delta=delta, eps=eps, M_nu=M_nu, L0=L0)
    q = 1.0 + 3.0 * nu
    return (
        4.0
        + _log2_or_zero((1.0 - nu) / (2.0 * q), delta)
        + _log2_or_zero(3.0 * (1.0 - nu) / q, 2.0 / eps)
        + _log2_or_zero(4.0 / q, M_nu)
        - 2.0 * math.log2(L0)
    )


def t_univ(M_nu: float, nu: float, delta: float, eps_bar: float, L0: float) -> float:
    """Oracle calls sufficient for the universal fast gradient method.

    ``4*(k_univ + 1)`` plus the line-search logarithm terms.  Requires an
    admissible ``L0`` (see :func:`l0_admissible`).
    """
    _check_positive(delta=delta, eps_bar=eps_bar, M_nu=M_nu, L0=L0)
    q = 1.0 + 3.0 * nu
    logs = (
        _log2_or_zero((1.0 - nu) / (2.0 * q), delta)
        + _log2_or_zero(3.0 * (1.0 - nu) / q, 1.0 / eps_bar)
        + _log2_or_zero(4.0 / q, M_nu)
        - 2.0 * math.log2(L0)
    )
    return 4.0 * (k_univ(M_nu, nu, delta, eps_bar) + 1) + logs


def l0_admissible(M_nu: float, nu: float, eps_bar: float, L0: float) -> bool:
    """Whether the initial curvature guess is small enough for :func:`t_univ`.

    The budget assumes ``L0 <= ((1-nu)/(1+nu) * 1/eps_bar)**((1-nu)/(1+nu))
    * M_nu**(2/(1+nu))``, which degenerates to ``L0 <= M_nu`` at ``nu == 1``.
    """
    _check_positive(M_nu=M_nu, eps_bar=eps_bar, L0=L0)
    if not (0.0 <= nu <= 1.0):
        raise ParameterError(f"nu must lie in [0, 1], got {nu}")
    if nu == 1.0:
        return L0 <= M_nu
    ratio = (1.0 - nu) / (1.0 + nu)
    return L0 <= (ratio / eps_bar) ** ratio * M_nu ** (2.0 / (1.0 + nu))


# ---------------------------------------------------------------------------
# Ladder geometry
# ---------------------------------------------------------------------------


def default_N(eps: float) -> int:
    """Default ladder height ``max(-1, ceil(log2(1/eps)))``."""
    _check_positive(eps=eps)
    # Integer-exact: the smallest k with 2**(-k) <= eps, robust to log rounding.
    k = math.ceil(math.log2(1.0 / eps))
    while 2.0 ** (-k) > eps:
        k += 1
    while k > -10_000 and 2.0 ** (-(k - 1)) <= eps:
        k -= 1
    return max(-1, k)


def n_bar(f_x0_gap: float, eps: float) -> int:
    """Smallest integer ``n >= -1`` with ``f_x0_gap < 5 * 2**n * eps``."""
    _check_positive(f_x0_gap=f_x0_gap, eps=eps)
    n = -1
    while not (f_x0_gap < 5.0 * 2.0 ** n * eps):
        n += 1
    return n


# ---------------------------------------------------------------------------
# Scheme-level reports
# ---------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class BoundReport:
    """One evaluated guarantee: a total plus the per-term breakdown.

    ``total`` is always the sum of the term values.  ``regime`` records which
    branch applied; ``assumptions_ok`` is False when a hypothesis of the
    guarantee fails on this instance (initial gap not above ``eps``, or an
    inadmissible curvature guess), in which case the numbers are evaluated
    anyway but carry no promise.
    """

    which: str
    N_bar: int
    total: float
    terms: list[tuple[str, float]]
    regime: str
    assumptions_ok: bool

    def to_json(self) -> dict:
        return {
            "which": self.which,
            "n_bar": self.N_bar,
            "total": self.total,
            "terms": [[label, value] for label, value in self.terms],
            "regime": self.regime,
            "assumptions_ok": self.assumptions_ok,
        }


def _finish(which: str, nb: int, terms: list[tuple[str, float]], regime: str,
            assumptions_ok: bool) -> BoundReport:
    total = float(sum(value for _, value in terms))
    return BoundReport(which, nb, total, terms, regime, assumptions_ok)


def _require_metadata(metadata: GrowthMetadata | None, which: str) -> GrowthMetadata:
    if metadata is None:
        raise UnsupportedQueryError(f"{which}: problem carries no growth metadata")
    return metadata


def _gap(metadata: GrowthMetadata, f_x0: float, which: str) -> float:
    gap = f_x0 - metadata.f_star
    if gap <= 0:
        raise ParameterError(f"{which}: f(x0) = {f_x0} does not exceed f_star = {metadata.f_star}")
    return gap


def _dist_or_raise(metadata: GrowthMetadata, which: str) -> float:
    if metadata.dist_x0_to_opt is None:
        raise UnsupportedQueryError(
            f"{which}: large-gap regime needs dist_x0_to_opt in the metadata"
        )
    return metadata.dist_x0_to_opt


def bound_sync_theorem(
    metadata: GrowthMetadata,
    f_x0: float,
    eps: float,
    N: int,
    method_k: Callable[[float, float], float],
) -> BoundReport:
    """Synchronous guarantee: periods until some copy holds an eps-solution.

    ``method_k(delta, eps_bar)`` is the per-epoch iteration budget of the
    plugged-in method.  Staged regime: ``n_bar + 1`` startup periods plus
    ``3 * sum_n method_k(D_n, 2**n * eps)`` with
    ``D_n = min(envelope(5 * 2**n * eps), envelope(initial gap))``.  Large-gap
    regime: same shape with ``N`` in place of ``n_bar``, plus one epoch budget
    for closing the initial distance at the top rung.
    """
    metadata = _require_metadata(metadata, "bound_sync_theorem")
    _check_positive(eps=eps)
    gap = _gap(metadata, f_x0, "bound_sync_theorem")
    nb = n_bar(gap, eps)
    staged = gap < 5.0 * 2.0 ** N * eps
    top = nb if staged else N
    terms: list[tuple[str, float]] = [("startup", float(top + 1))]
    for n in range(-1, top + 1):
        eps_n = 2.0 ** n * eps
        D_n = metadata.envelope(metadata.f_star + min(5.0 * eps_n, gap))
        terms.append((f"copy[n={n}]", 3.0 * method_k(D_n, eps_n)))
    if not staged:
        dist = _dist_or_raise(metadata, "bound_sync_theorem")
        terms.append(("initial-distance add-on", float(method_k(dist, 2.0 ** N * eps))))
    return _finish("sync_theorem", nb, terms,
                   REGIME_STAGED if staged else REGIME_ADD_ON,
                   assumptions_ok=gap > eps)


def bound_cor_subgrad(metadata: GrowthMetadata, f_x0: float, eps: float, N: int) -> BoundReport:
    """Synchronous guarantee specialized to the subgradient method.

    Closed form in the growth constants; no per-rung envelope evaluation.
    Sharp growth (``d == 1``) gives a rung-independent epoch cost; ``d > 1``
    gives a geometric sum capped by ``n_bar + 5`` rungs.
    """
    metadata = _require_metadata(metadata, "bound_cor_subgrad")
    _check_positive(eps=eps)
    if metadata.M is None:
        raise UnsupportedQueryError("bound_cor_subgrad: metadata lacks the Lipschitz bound M")
    gap = _gap(metadata, f_x0, "bound_cor_subgrad")
    M, mu, d = metadata.M, metadata.mu, metadata.d
    nb = n_bar(gap, eps)
    staged = gap < 5.0 * 2.0 ** N * eps
    top = nb if staged else N
    terms: list[tuple[str, float]] = [("startup", float(top + 1))]
    if d == 1.0:
        terms.append(("epochs", 3.0 * (top + 2) * (5.0 * M / mu) ** 2))
    else:
        e = 1.0 - 1.0 / d
        lead = 3.0 * (5.0 ** (1.0 / d) * M / (mu ** (1.0 / d) * eps ** e)) ** 2
        terms.append(("epochs", lead * min(16.0 ** e / (4.0 ** e - 1.0), top + 5.0)))
    if not staged:
        dist = _dist_or_raise(metadata, "bound_cor_subgrad")
        terms.append(("initial-distance add-on", (M * dist / (2.0 ** N * eps)) ** 2))
    return _finish("cor_subgrad", nb, terms,
                   REGIME_STAGED if staged else REGIME_ADD_ON,
                   assumptions_ok=gap > eps)


def bound_cor_accel(metadata: GrowthMetadata, f_x0: float, eps: float, N: int) -> BoundReport:
    """Synchronous guarantee specialized to the accelerated gradient method.

    Requires smoothness, hence growth degree ``d >= 2``.
    """
    metadata = _require_metadata(metadata, "bound_cor_accel")
    _check_positive(eps=eps)
    if metadata.L is None:
        raise UnsupportedQueryError("bound_cor_accel: metadata lacks the smoothness constant L")
    if metadata.d < 2.0:
        raise ParameterError(
            f"bound_cor_accel: smooth objectives have growth degree >= 2, got {metadata.d}"
        )
    gap = _gap(metadata, f_x0, "bound_cor_accel")
    L, mu, d = metadata.L, metadata.mu, metadata.d
    nb = n_bar(gap, eps)
    staged = gap < 5.0 * 2.0 ** N * eps
    top = nb if staged else N
    terms: list[tuple[str, float]] = [("startup", float(top + 1))]
    if d == 2.0:
        terms.append(("epochs", 6.0 * (top + 2) * math.sqrt(5.0 * L / mu)))
    else:
        e = 0.5 - 1.0 / d
        lead = 6.0 * (5.0 / mu) ** (1.0 / d) * math.sqrt(L) / eps ** e
        terms.append(("epochs", lead * min(4.0 ** e / (2.0 ** e - 1.0), top + 3.0)))
    if not staged:
        dist = _dist_or_raise(metadata, "bound_cor_accel")
        terms.append(("initial-distance add-on",
                      2.0 * dist * math.sqrt(L / (2.0 ** N * eps))))
    return _finish("cor_accel", nb, terms,
                   REGIME_STAGED if staged else REGIME_ADD_ON,
                   assumptions_ok=gap > eps)


def bound_async_theorem(
    metadata: GrowthMetadata,
    f_x0: float,
    eps: float,
    N: int,
    tau_transit: float,
    tau_pause: float,
    method_t: Callable[[float, float], float],
) -> BoundReport:
    """Asynchronous guarantee: clock time until an eps-solution is in hand.

    ``method_t(delta, eps_bar)`` is the per-epoch oracle-call (time) budget.
    Adds transit and pause overhead to three times the per-rung budgets;
    the large-gap regime substitutes ``N`` for ``n_bar`` throughout and adds
    one top-rung budget for the initial distance.
    """
    metadata = _require_metadata(metadata, "bound_async_theorem")
    _check_positive(eps=eps)
    if tau_transit < 0 or tau_pause < 0:
        raise ParameterError("delay bounds must be nonnegative")
    gap = _gap(metadata, f_x0, "bound_async_theorem")
    nb = n_bar(gap, eps)
    staged = gap < 5.0 * 2.0 ** N * eps
    top = nb if staged else N
    terms: list[tuple[str, float]] = [
        ("transit", (top + 1) * tau_transit),
        ("pauses", 2.0 * (top + 2) * tau_pause),
    ]
    for n in range(-1, top + 1):
        eps_n = 2.0 ** n * eps
        D_n = metadata.envelope(metadata.f_star + min(5.0 * eps_n, gap))
        terms.append((f"copy[n={n}]", 3.0 * method_t(D_n, eps_n)))
    if not staged:
        dist = _dist_or_raise(metadata, "bound_async_theorem")
        terms.append(("initial-distance add-on", float(method_t(dist, 2.0 ** N * eps))))
    return _finish("async_theorem", nb, terms,
                   REGIME_STAGED if staged else REGIME_ADD_ON,
                   assumptions_ok=gap > eps)


def bound_cor_univ(
    metadata: GrowthMetadata,
    f_x0: float,
    eps: float,
    N: int,
    tau_transit: float,
    tau_pause: float,
    L0: float,
) -> BoundReport:
    """Asynchronous guarantee specialized to the universal method.

    Splits on whether the growth degree matches the Hölder exponent
    (``d == 1 + nu``, rung-independent epoch cost) or exceeds it (geometric
    sum capped at ``n_bar + 5`` rungs).  ``assumptions_ok`` additionally
    checks that ``L0`` is admissible at the tightest rung target ``eps/2``.
    """
    metadata = _require_metadata(metadata, "bound_cor_univ")
    _check_positive(eps=eps, L0=L0)
    if tau_transit < 0 or tau_pause < 0:
        raise ParameterError("delay bounds must be nonnegative")
    if metadata.M_nu is None or metadata.nu is None:
        raise UnsupportedQueryError("bound_cor_univ: metadata lacks Hölder constants")
    M_nu, nu, mu, d = metadata.M_nu, metadata.nu, metadata.mu, metadata.d
    if d < 1.0 + nu - 1e-15:
        raise ParameterError(f"bound_cor_univ: requires d >= 1 + nu, got d={d}, nu={nu}")
    gap = _gap(metadata, f_x0, "bound_cor_univ")
    nb = n_bar(gap, eps)
    staged = gap < 5.0 * 2.0 ** N * eps
    top = nb if staged else N
    q = 1.0 + 3.0 * nu
    lead = 2.0 ** ((3.0 + 5.0 * nu) / q)
    delta0 = metadata.envelope(f_x0)
    terms: list[tuple[str, float]] = [
        ("transit", (top + 1) * tau_transit),
        ("pauses", 2.0 * (top + 2) * tau_pause),
        ("line-search overhead", 3.0 * (top + 2) * c_const(delta0, eps, nu, M_nu, L0)),
    ]
    if abs(d - (1.0 + nu)) <= 1e-12:
        terms.append(("epochs", 12.0 * (top + 2) * lead * (5.0 * M_nu / mu) ** (2.0 / q)))
    else:
        e = (1.0 - (1.0 + nu) / d) * 2.0 / q
        body = (M_nu * (5.0 / mu) ** ((1.0 + nu) / d) / eps ** (1.0 - (1.0 + nu) / d)) ** (2.0 / q)
        terms.append(("epochs", 12.0 * lead * body * min(4.0 ** e / (2.0 ** e - 1.0), top + 5.0)))
    if not staged:
        dist = _dist_or_raise(metadata, "bound_cor_univ")
        eps_N = 2.0 ** N * eps
        add_on = (4.0 * lead * (M_nu * dist ** (1.0 + nu) / eps_N) ** (2.0 / q)
                  + c_const(dist, eps_N, nu, M_nu, L0))
        terms.append(("initial-distance add-on", add_on))
    ok = gap > eps and l0_admissible(M_nu, nu, 0.5 * eps, L0)
    return _finish("cor_univ", nb, terms,
                   REGIME_STAGED if staged else REGIME_ADD_ON,
                   assumptions_ok=ok)

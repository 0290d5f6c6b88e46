"""Per-interval heat/work/entropy accounting and second-law verification.

Sign convention: every quantity is energy added *to* the system side under
consideration.  Heat is defined from the entropy change of the measured
reservoir, Q = -dS_B/beta, with the reservoir entropy always evaluated in its
energy eigenbasis; work follows from W = dH_A - Q.  The measurement
back-action -gamma<H_AB> is booked as work, never as heat.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import PreconditionError
from .qcore import shannon_entropy, trace_distance, von_neumann_entropy
from .models import JointSystem

# Trace-distance threshold under which two states of A count as a cyclic return.
CYCLE_TOL = 1e-6


def _mat(x) -> np.ndarray:
    return np.asarray(getattr(x, "mat", x), dtype=complex)


def _diag_in_basis(rho, basis) -> np.ndarray:
    v = basis.eigenvectors
    pops = np.einsum("ij,jk,ki->i", v.conj().T, _mat(rho), v).real
    return np.clip(pops, 0.0, None)


@dataclass(frozen=True)
class IntervalLedger:
    """Energy and entropy bookkeeping for one measurement interval.

    Energies are angular-frequency units, entropies nats.  ``r`` is the
    combination dH_a + dH_b - dS_b/beta whose integral over any cyclic process
    is non-negative; its per-interval cyclic contribution is dH_b - dS_b/beta,
    which equals -w_therm.
    """

    dH_a: float
    dH_b: float
    w_meas: float
    dS_a: float
    dS_b: float
    q: float
    w_therm: float
    w: float
    r: float
    beta: float

    @property
    def heat_defined(self) -> bool:
        return self.beta > 0 and not math.isnan(self.q)

    @property
    def cyclic_r_contribution(self) -> float:
        """Free-energy gain of the reservoir reset: dH_b - dS_b/beta = -w_therm."""
        return self.r - self.dH_a


def ledger_for_interval(
    rho_a_start,
    rho_a_end,
    rho_b_start,
    rho_b_end,
    h_ab_expect_pre_meas: float,
    sys: JointSystem,
    beta: float,
    positivity_floor: float = -1e-8,
) -> IntervalLedger:
    """Account one interval from its boundary marginals.

    The reservoir marginals must be diagonal in the energy basis of H_B
    (the measurement dephases them); their entropy is the Shannon entropy of
    those populations.  With beta = 0 the heat is undefined and the
    heat-bearing fields are NaN.
    """
    basis_b = sys.basis_b
    pb0 = _diag_in_basis(rho_b_start, basis_b)
    pb1 = _diag_in_basis(rho_b_end, basis_b)
    for name, rho, pops in (("rho_b_start", rho_b_start, pb0), ("rho_b_end", rho_b_end, pb1)):
        m = _mat(rho)
        v = basis_b.eigenvectors
        off = v.conj().T @ m @ v
        off = off - np.diag(np.diag(off))
        if np.abs(off).max() > 1e-9:
            raise PreconditionError(f"{name} is not diagonal in the reservoir energy basis")

    e_b = sys.basis_b.eigenvalues
    dh_a = float(np.trace(sys.h_a.mat @ (_mat(rho_a_end) - _mat(rho_a_start))).real)
    dh_b = float(((pb1 - pb0) * e_b).sum())
    ds_a = (von_neumann_entropy(rho_a_end, positivity_floor)
            - von_neumann_entropy(rho_a_start, positivity_floor))
    ds_b = shannon_entropy(pb1) - shannon_entropy(pb0)
    w_meas = -sys.gamma * h_ab_expect_pre_meas

    if beta == 0:
        q = w_therm = w = r = math.nan
    elif math.isinf(beta):
        q, w_therm = 0.0, -dh_b
        w = w_therm + dh_a + dh_b
        r = dh_a + dh_b
    else:
        q = -ds_b / beta
        w_therm = -dh_b + ds_b / beta
        w = w_therm + dh_a + dh_b
        r = dh_a + dh_b - ds_b / beta
    return IntervalLedger(
        dH_a=dh_a, dH_b=dh_b, w_meas=w_meas, dS_a=ds_a, dS_b=ds_b,
        q=q, w_therm=w_therm, w=w, r=r, beta=beta,
    )


def s_tot(record_or_s_a, ledgers: Sequence[IntervalLedger] | None = None) -> np.ndarray:
    """Total entropy production at each measurement time.

    S_tot(t_k) = S_A(t_k) - S_A(0) - sum_{j<=k} beta_j Q_j, with S_A sampled at
    t_0 = 0 and after each of the len(ledgers) intervals.  Accepts either a
    run record (anything with ``s_a_series`` and ``ledgers``) or the explicit
    pair of sequences.
    """
    if ledgers is None:
        record = record_or_s_a
        s_a_series = record.s_a_series
        ledgers = record.ledgers
    else:
        s_a_series = record_or_s_a
    if len(s_a_series) != len(ledgers) + 1:
        raise ValueError("need one S_A sample per measurement time, including t = 0")
    for led in ledgers:
        if not led.heat_defined:
            raise ValueError("s_tot requires ledgers with finite nonzero beta")
    bq = np.array([led.beta * led.q for led in ledgers])
    out = np.empty(len(ledgers) + 1)
    out[0] = 0.0
    out[1:] = np.asarray(s_a_series[1:]) - s_a_series[0] - np.cumsum(bq)
    return out


def approx_heat_small_change(rho_b_start, rho_b_end, h_b, beta: float, basis=None) -> tuple[float, float]:
    """Linearized reservoir entropy and heat for a small population change.

    Valid when rho_b_start is canonical at beta:
    dS_B ~ -sum_j dp_j ln p_j  and  dQ ~ -dH_B.
    """
    from .qcore import Propagator

    basis = basis or Propagator.from_operator(h_b)
    p0 = _diag_in_basis(rho_b_start, basis)
    p1 = _diag_in_basis(rho_b_end, basis)
    if p0.min() <= 0:
        raise PreconditionError("linearization needs full support of the canonical start")
    dp = p1 - p0
    ds_lin = float(-(dp * np.log(p0)).sum())
    dq_lin = float(-((p1 - p0) * basis.eigenvalues).sum())
    return ds_lin, dq_lin


def traditional_qw(rho_a_series: Sequence, h_a) -> tuple[np.ndarray, np.ndarray]:
    """System-only accounting baseline for a time-independent Hamiltonian.

    Q_trad(t) = Tr[H_A (rho_A(t) - rho_A(0))] and W_trad(t) = 0; provided for
    comparison against the reservoir-based ledger.
    """
    h = _mat(h_a)
    rho0 = _mat(rho_a_series[0])
    q = np.array([float(np.trace(h @ (_mat(r) - rho0)).real) for r in rho_a_series])
    return q, np.zeros_like(q)


@dataclass(frozen=True)
class CyclicWindow:
    start: int          # interval index of the window's first interval
    stop: int           # one past the last interval index
    return_distance: float
    q_sum: float
    r_sum: float


@dataclass(frozen=True)
class SecondLawReport:
    """Outcome of the per-interval and cyclic second-law checks."""

    n_intervals: int
    min_entropy_production: float        # min over intervals of dS_a + dS_b
    min_cyclic_r_contribution: float     # min over intervals of dH_b - dS_b/beta
    max_w_therm: float                   # max of w_therm (should be <= ~0)
    max_backaction_residual: float       # max |w_meas - (dH_a + dH_b)| (exact runs)
    entropy_violations: tuple[int, ...]
    klein_violations: tuple[int, ...]
    backaction_violations: tuple[int, ...]
    windows: tuple[CyclicWindow, ...]
    cyclic_q_violations: tuple[int, ...]  # indices into windows

    @property
    def ok(self) -> bool:
        return not (self.entropy_violations or self.klein_violations
                    or self.backaction_violations or self.cyclic_q_violations)


def find_cyclic_windows(rho_a_snapshots: Sequence, tol: float = CYCLE_TOL) -> list[tuple[int, int, float]]:
    """Index pairs (i, j) with trace distance(rho_i, rho_j) < tol and i < j.

    Snapshots are the states of A at measurement times (len = n_intervals + 1);
    the window covers intervals i .. j-1.  Only the earliest non-overlapping
    windows are returned to keep the list short.
    """
    mats = [_mat(r) for r in rho_a_snapshots]
    out = []
    i = 0
    while i < len(mats) - 1:
        hit = None
        for j in range(i + 1, len(mats)):
            d = trace_distance(mats[i], mats[j])
            if d < tol:
                hit = (i, j, d)
                break
        if hit:
            out.append(hit)
            i = hit[1]
        else:
            i += 1
    return out


def second_law_suite(
    ledgers,
    rho_a_snapshots: Sequence | None = None,
    reservoir_thermal: bool = True,
    exact_dynamics: bool = True,
    entropy_tol: float = 1e-9,
    klein_tol: float = 1e-9,
    cycle_q_tol: float = 1e-8,
    backaction_tol: float = 1e-9,
) -> SecondLawReport:
    """Check the second-law structure of a run.

    Per interval: dS_a + dS_b >= 0 and, for a thermal reservoir input, the
    Klein positivity of the cyclic contribution dH_b - dS_b/beta.  For exact
    dynamics the back-action identity w_meas = dH_a + dH_b is also enforced.
    Over every detected cyclic window of A, sum(Q) <= 0.  A run record may be
    passed in place of the ledger list.
    """
    if hasattr(ledgers, "ledgers"):
        record = ledgers
        ledgers = record.ledgers
        if rho_a_snapshots is None:
            rho_a_snapshots = record.rho_a_snapshots
    ent_viol, klein_viol, back_viol = [], [], []
    min_ent, min_klein, max_wth, max_back = math.inf, math.inf, -math.inf, 0.0
    for k, led in enumerate(ledgers):
        ent = led.dS_a + led.dS_b
        min_ent = min(min_ent, ent)
        if ent < -entropy_tol:
            ent_viol.append(k)
        if reservoir_thermal and led.heat_defined:
            contrib = led.cyclic_r_contribution
            min_klein = min(min_klein, contrib)
            max_wth = max(max_wth, led.w_therm)
            if contrib < -klein_tol:
                klein_viol.append(k)
        if exact_dynamics:
            resid = abs(led.w_meas - (led.dH_a + led.dH_b))
            max_back = max(max_back, resid)
            if resid > backaction_tol:
                back_viol.append(k)

    windows: list[CyclicWindow] = []
    q_viol: list[int] = []
    if rho_a_snapshots is not None:
        for i, j, dist in find_cyclic_windows(rho_a_snapshots):
            q_sum = sum(led.q for led in ledgers[i:j])
            r_sum = sum(led.r for led in ledgers[i:j])
            windows.append(CyclicWindow(i, j, dist, q_sum, r_sum))
            if q_sum > cycle_q_tol:
                q_viol.append(len(windows) - 1)

    n = len(ledgers)
    return SecondLawReport(
        n_intervals=n,
        min_entropy_production=min_ent if n else 0.0,
        min_cyclic_r_contribution=min_klein if min_klein != math.inf else 0.0,
        max_w_therm=max_wth if max_wth != -math.inf else 0.0,
        max_backaction_residual=max_back,
        entropy_violations=tuple(ent_viol),
        klein_violations=tuple(klein_viol),
        backaction_violations=tuple(back_viol),
        windows=tuple(windows),
        cyclic_q_violations=tuple(q_viol),
    )


def backaction_as_heat_windows(
    ledgers: Sequence[IntervalLedger],
    rho_a_snapshots: Sequence,
) -> list[CyclicWindow]:
    """Diagnostic: book the measurement back-action as heat instead of work.

    The modified heat Q' = Q + w_meas summed over a cyclic window equals the
    window's R sum, which Klein positivity makes strictly positive for thermal
    reservoir inputs -- i.e. net heat *absorbed* over a cycle, a second-law
    violation.  Returns the windows so callers can exhibit sum(Q') > 0.
    """
    out = []
    for i, j, dist in find_cyclic_windows(rho_a_snapshots):
        q_mod = sum(led.q + led.w_meas for led in ledgers[i:j])
        r_sum = sum(led.r for led in ledgers[i:j])
        out.append(CyclicWindow(i, j, dist, q_mod, r_sum))
    return out

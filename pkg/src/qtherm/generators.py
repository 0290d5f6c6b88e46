"""Measurement-averaged generators of the reduced dynamics.

The coupling is split into frequency sectors V_omega connecting uncoupled
eigenstates whose energies differ by omega.  Averaging second-order
perturbation theory over exponential measurement times gives a dissipator
with coefficients

    d(w, w') = (lam - i w)(lam + i w')(lam - i (w - w'))
    s(w, w') = (2 lam - i (w - w')) / d
    a(w, w') = (w + w') / d

plus a first-order commutator with H_tilde = sum_w V_w / (lam - i w).  The
opposite, fast-measurement regime is an expansion in 1/lam whose second-order
term is a double-commutator dissipator.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import DegenerateSteadyStateError, NumericError, PreconditionError
from .models import JointSystem, thermal_state
from .qcore import Operator, DensityMatrix
from .thermo import IntervalLedger, ledger_for_interval


@dataclass(frozen=True)
class GeneratorSpec:
    """Frequency sectors and averaged coefficients for one (system, lam) pair.

    V_omega operators are stored in the storage basis of the joint space and
    satisfy V(-w) = V(w)^+ and sum_w V_w = H_AB.
    """

    sys: JointSystem
    lam: float
    frequencies: np.ndarray
    v_ops: tuple[np.ndarray, ...]
    s_coef: np.ndarray
    a_coef: np.ndarray
    d_coef: np.ndarray
    gamma: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "gamma", self.sys.gamma)

    @property
    def n_sectors(self) -> int:
        return len(self.frequencies)

    def h_tilde(self) -> np.ndarray:
        """Averaged first-order coupling sum_w V_w / (lam - i w)."""
        out = np.zeros((self.sys.dim, self.sys.dim), dtype=complex)
        for w, v in zip(self.frequencies, self.v_ops):
            out = out + v / (self.lam - 1j * w)
        return out


def decompose(sys: JointSystem, lam: float, tol: float | None = None) -> GeneratorSpec:
    """Split H_AB into frequency sectors of the uncoupled Hamiltonian.

    Frequencies closer than ``tol`` (default 1e-9 * max|omega|) are binned
    together; binning is symmetric so that V(-w) = V(w)^+ holds exactly.
    """
    if lam <= 0:
        raise ValueError("measurement rate must be positive")
    e_a = sys.basis_a.eigenvalues
    e_b = sys.basis_b.eigenvalues
    w0 = np.kron(sys.basis_a.eigenvectors, sys.basis_b.eigenvectors)
    e0 = (e_a[:, None] + e_b[None, :]).reshape(-1)
    hab_eig = w0.conj().T @ sys.h_ab.mat @ w0
    omega = e0[:, None] - e0[None, :]

    scale = float(np.abs(omega).max()) if omega.size else 0.0
    if tol is None:
        tol = 1e-9 * scale if scale > 0 else 1e-12
    if tol <= 0:
        raise ValueError("binning tolerance must be positive")

    # cluster |omega| so sectors come in symmetric +-pairs
    mags = np.sort(np.unique(np.abs(omega).ravel()))
    reps: list[float] = []
    group: list[float] = []
    for v in mags:
        if group and v - group[-1] > tol:
            reps.append(float(np.mean(group)))
            group = []
        group.append(v)
    if group:
        reps.append(float(np.mean(group)))
    reps = [0.0 if r < tol else r for r in reps]

    freqs: list[float] = []
    mats: list[np.ndarray] = []
    for r in reps:
        members = [r] if r == 0.0 else [r, -r]
        for w in members:
            if w == 0.0:
                mask = np.abs(omega) <= tol
            else:
                mask = (np.abs(np.abs(omega) - r) <= tol) & ((omega > 0) == (w > 0))
            block = np.where(mask, hab_eig, 0.0)
            if np.abs(block).max() <= 1e-14 * max(np.abs(hab_eig).max(), 1.0):
                continue
            freqs.append(w)
            mats.append(w0 @ block @ w0.conj().T)

    order = np.argsort(freqs)
    freqs_arr = np.array([freqs[i] for i in order])
    mats_tup = tuple(mats[i] for i in order)

    n = len(freqs_arr)
    d_coef = np.empty((n, n), complex)
    s_coef = np.empty((n, n), complex)
    a_coef = np.empty((n, n), complex)
    for i, w in enumerate(freqs_arr):
        for j, wp in enumerate(freqs_arr):
            d = (lam - 1j * w) * (lam + 1j * wp) * (lam - 1j * (w - wp))
            d_coef[i, j] = d
            s_coef[i, j] = (2 * lam - 1j * (w - wp)) / d
            a_coef[i, j] = (w + wp) / d
    return GeneratorSpec(sys=sys, lam=lam, frequencies=freqs_arr, v_ops=mats_tup,
                         s_coef=s_coef, a_coef=a_coef, d_coef=d_coef)


def _check_product(rho: np.ndarray, da: int, db: int) -> None:
    r = rho.reshape(da, db, da, db)
    rho_a = np.einsum("abcb->ac", r)
    rho_b = np.einsum("abad->bd", r)
    if np.abs(rho - np.kron(rho_a, rho_b)).max() > 1e-8:
        raise PreconditionError("input must be a product state rho_A (x) rho_B")


def dissipator_apply(spec: GeneratorSpec, rho: np.ndarray) -> np.ndarray:
    """Second-order averaged dissipator acting on a joint density matrix."""
    out = np.zeros_like(rho)
    for i, vi in enumerate(spec.v_ops):
        for j, vj in enumerate(spec.v_ops):
            s = spec.s_coef[i, j]
            a = spec.a_coef[i, j]
            vjd_vi = vj.conj().T @ vi
            out = out + s * (vi @ rho @ vj.conj().T
                             - 0.5 * (vjd_vi @ rho + rho @ vjd_vi))
            out = out + 0.5j * a * (vjd_vi @ rho - rho @ vjd_vi)
    return out


def weak_map(spec: GeneratorSpec, rho_ab0) -> np.ndarray:
    """Expected change of the joint state over one measured interval.

    Returns -i gamma [H_tilde, rho] + gamma^2 L'[rho]; trace-free, evaluated in
    the interaction frame of the uncoupled Hamiltonian.  The input must be a
    product state (the post-measurement form).
    """
    rho = np.asarray(getattr(rho_ab0, "mat", rho_ab0), dtype=complex)
    _check_product(rho, spec.sys.dim_a, spec.sys.dim_b)
    g = spec.gamma
    ht = spec.h_tilde()
    return -1j * g * (ht @ rho - rho @ ht) + g * g * dissipator_apply(spec, rho)


# ---------------------------------------------------------------------------
# Reduced (system-only) weak-coupling master equation


def _vec_kron(a: np.ndarray, b_conj_side: np.ndarray) -> np.ndarray:
    # row-major vec: vec(A rho B^+) = kron(A, conj(B)) vec(rho)
    return np.kron(a, b_conj_side.conj())


def assemble_reduced_generator(spec: GeneratorSpec, beta: float) -> np.ndarray:
    """Dense generator of d rho_A/dt = -i[H_A, rho_A] + gamma^2 lam Tr_B L'[rho_A (x) rho_B].

    Expressed in the energy eigenbasis of H_A acting on the row-major
    vectorization of rho_A.  The reservoir enters through its thermal
    populations at ``beta``.
    """
    sys = spec.sys
    da, db = sys.dim_a, sys.dim_b
    e_a = sys.basis_a.eigenvalues
    p_b = np.clip(np.diag(
        sys.basis_b.eigenvectors.conj().T
        @ thermal_state(sys.h_b, beta).mat
        @ sys.basis_b.eigenvectors).real, 0.0, None)
    w0 = np.kron(sys.basis_a.eigenvectors, sys.basis_b.eigenvectors)

    ident = np.eye(da)
    ha_d = np.diag(e_a).astype(complex)
    gen = -1j * (np.kron(ha_d, ident) - np.kron(ident, ha_d))

    v_eig = [w0.conj().T @ v @ w0 for v in spec.v_ops]
    blocks = [v.reshape(da, db, da, db) for v in v_eig]
    rate = spec.gamma ** 2 * spec.lam
    for i in range(spec.n_sectors):
        for j in range(spec.n_sectors):
            s = spec.s_coef[i, j]
            a = spec.a_coef[i, j]
            sand = np.zeros((da * da, da * da), complex)
            for b in range(db):
                for bp in range(db):
                    if p_b[bp] == 0.0:
                        continue
                    sand += p_b[bp] * _vec_kron(blocks[i][:, b, :, bp], blocks[j][:, b, :, bp])
            vjd_vi = (v_eig[j].conj().T @ v_eig[i]).reshape(da, db, da, db)
            k = np.zeros((da, da), complex)
            for b in range(db):
                k += p_b[b] * vjd_vi[:, b, :, b]
            left = np.kron(k, ident)
            right = np.kron(ident, k.T)
            gen = gen + rate * (s * (sand - 0.5 * (left + right))
                                + 0.5j * a * (left - right))
    return gen


def population_rates(gen: np.ndarray, da: int) -> np.ndarray:
    """Transition rates n -> m read off a vectorized generator's population block."""
    rates = np.empty((da, da))
    for m in range(da):
        for n in range(da):
            rates[m, n] = gen[m * da + m, n * da + n].real
    return rates


@dataclass(frozen=True)
class SteadyStateResult:
    """Null state of a generator plus the two lowest-level populations."""

    rho_ss: DensityMatrix
    p0: float
    p1: float
    beta_eff: float
    residual: float


def steady_state(superoperator: np.ndarray, h_a: Operator | np.ndarray | None = None) -> SteadyStateResult:
    """Steady state as the smallest singular vector of a vectorized generator.

    The result is Hermitized and trace-normalized; a null space of dimension
    greater than one raises DegenerateSteadyStateError.  When ``h_a`` is given,
    p0/p1 are the populations of its two lowest eigenstates and
    beta_eff = -ln(p1/p0) / (E1 - E0).
    """
    gen = np.asarray(superoperator, dtype=complex)
    d2 = gen.shape[0]
    da = int(round(math.sqrt(d2)))
    if da * da != d2:
        raise ValueError("superoperator must act on a vectorized square matrix")
    _, s, vh = np.linalg.svd(gen)
    snorm = float(s.max()) if s.size else 0.0
    null_dim = int((s <= snorm * 1e-10 + 1e-300).sum())
    if null_dim > 1:
        raise DegenerateSteadyStateError(null_dim)
    rho = vh[-1].conj().reshape(da, da)
    rho = 0.5 * (rho + rho.conj().T)
    tr = np.trace(rho).real
    if abs(tr) < 1e-14:
        raise NumericError("steady-state candidate has vanishing trace")
    rho = rho / tr
    residual = float(np.linalg.norm(gen @ rho.reshape(-1)))
    evals = np.linalg.eigvalsh(rho)
    if evals.min() < -1e-9:
        raise NumericError(f"steady state not positive: min eigenvalue {evals.min():.2e}")
    rho = rho - np.eye(da) * min(evals.min(), 0.0)
    rho = rho / np.trace(rho).real
    p0 = p1 = beta_eff = math.nan
    if h_a is not None:
        ham = np.asarray(getattr(h_a, "mat", h_a), dtype=complex)
        evals_a, vecs_a = np.linalg.eigh(ham)
        pops = np.einsum("ij,jk,ki->i", vecs_a.conj().T, rho, vecs_a).real
        p0, p1 = float(pops[0]), float(pops[1])
        gap = float(evals_a[1] - evals_a[0])
        if p0 > 0 and p1 > 0 and gap > 0:
            beta_eff = -math.log(p1 / p0) / gap
    return SteadyStateResult(rho_ss=DensityMatrix(rho), p0=p0, p1=p1,
                             beta_eff=beta_eff, residual=residual)


def lindblad_propagate(spec: GeneratorSpec, rho_a0, rho_b0, t_grid,
                       measurement_protocol: str = "continuous",
                       intervals: np.ndarray | None = None,
                       seed: int | None = None) -> np.ndarray:
    """Propagate the weak-coupling dynamics of rho_A over ``t_grid``.

    "continuous" integrates the reduced master equation with an adaptive
    explicit scheme.  "interval" evolves the joint state under the averaged
    second-order generator in measured intervals (drawn at rate lam from
    ``seed`` unless given explicitly), applying the reservoir-replacement map
    after each one; only the time-propagator differs from the exact process.
    Returns the stack of rho_A matrices at the grid times (storage basis).
    """
    t_grid = np.asarray(t_grid, dtype=float)
    sys = spec.sys
    da = sys.dim_a
    rho_a0 = np.asarray(getattr(rho_a0, "mat", rho_a0), dtype=complex)
    rho_b_mat = np.asarray(getattr(rho_b0, "mat", rho_b0), dtype=complex)
    if measurement_protocol == "continuous":
        beta = _beta_of_state(sys, rho_b_mat)
        gen = assemble_reduced_generator(spec, beta)
        va = sys.basis_a.eigenvectors
        y0 = (va.conj().T @ rho_a0 @ va).reshape(-1)

        def f(t, y):
            return gen @ y

        sol = solve_ivp(f, (float(t_grid[0]), float(t_grid[-1])), y0, t_eval=t_grid,
                        rtol=1e-10, atol=1e-12, method="RK45")
        if not sol.success:
            raise NumericError(f"continuous propagation failed: {sol.message}")
        out = np.empty((len(t_grid), da, da), complex)
        for i in range(len(t_grid)):
            r = sol.y[:, i].reshape(da, da)
            r = 0.5 * (r + r.conj().T)
            if np.linalg.eigvalsh(r).min() < -1e-7:
                raise NumericError("positivity violated beyond 1e-7 during propagation")
            out[i] = va @ r @ va.conj().T
        return out
    if measurement_protocol != "interval":
        raise ValueError("measurement_protocol must be 'continuous' or 'interval'")
    run = weak_interval_run(spec, rho_b_mat, rho_a0, horizon=float(t_grid[-1]),
                            seed=0 if seed is None else seed,
                            intervals=intervals, checkpoint_times=t_grid)
    # the averaged propagator works in the rotating frame of the uncoupled
    # Hamiltonian; restore the free phase so coherences read in the lab frame
    va = sys.basis_a.eigenvectors
    e_a = sys.basis_a.eigenvalues
    out = np.empty_like(run.checkpoint_rho_a)
    for i, t in enumerate(run.checkpoint_times):
        ph = np.exp(-1j * e_a * t)
        rt = va.conj().T @ run.checkpoint_rho_a[i] @ va
        out[i] = va @ (rt * np.outer(ph, ph.conj())) @ va.conj().T
    return out


def _beta_of_state(sys: JointSystem, rho_b: np.ndarray) -> float:
    """Inverse temperature of a reservoir state diagonal in the energy basis."""
    e_b = sys.basis_b.eigenvalues
    pops = np.clip(np.diag(sys.basis_b.eigenvectors.conj().T @ rho_b
                           @ sys.basis_b.eigenvectors).real, 1e-300, None)
    if sys.dim_b != 2:
        # fit: least squares of ln p against -beta e
        d = np.polyfit(e_b, np.log(pops), 1)
        return float(-d[0])
    return float(-(math.log(pops[1]) - math.log(pops[0])) / (e_b[1] - e_b[0]))


@dataclass
class WeakIntervalRun:
    """Interval-protocol weak-coupling run with per-interval ledgers.

    State snapshots live in the rotating frame of the uncoupled Hamiltonian;
    populations, energies and entropies are frame-invariant, only marginal
    coherence phases differ from the lab frame.
    """

    times: np.ndarray
    ledgers: list[IntervalLedger]
    rho_a_snapshots: np.ndarray
    checkpoint_times: np.ndarray
    checkpoint_rho_a: np.ndarray
    checkpoint_hab: np.ndarray
    checkpoint_hb: np.ndarray
    min_eig: float
    meta: dict


def assemble_joint_weak_generator(spec: GeneratorSpec) -> np.ndarray:
    """Joint-space generator of the averaged second-order updates at rate lam."""
    sys = spec.sys
    d = sys.dim
    ident = np.eye(d)
    g = spec.gamma
    ht = spec.h_tilde()
    gen = -1j * g * (np.kron(ht, ident) - np.kron(ident, ht.T))
    for i, vi in enumerate(spec.v_ops):
        for j, vj in enumerate(spec.v_ops):
            s = spec.s_coef[i, j]
            a = spec.a_coef[i, j]
            vjd_vi = vj.conj().T @ vi
            left = np.kron(vjd_vi, ident)
            right = np.kron(ident, vjd_vi.T)
            gen = gen + g * g * (s * (np.kron(vi, vj.conj()) - 0.5 * (left + right))
                                 + 0.5j * a * (left - right))
    return gen * spec.lam  # one averaged update per mean interval


def assemble_joint_fast_generator(sys: JointSystem, lam: float) -> np.ndarray:
    """Joint-space generator of the fast-measurement expansion at rate lam."""
    d = sys.dim
    ident = np.eye(d)
    g = sys.gamma
    hab = sys.h_ab.mat
    nested = sys.uncoupled_h @ hab - hab @ sys.uncoupled_h
    hab2 = hab @ hab
    c1 = np.kron(hab, ident) - np.kron(ident, hab.T)
    c2 = np.kron(nested, ident) - np.kron(ident, nested.T)
    diss = (2.0 * np.kron(hab, hab.conj())
            - np.kron(hab2, ident) - np.kron(ident, hab2.T))
    return lam * ((-1j * g / lam) * c1 + (g / lam ** 2) * c2 + (g * g / lam ** 2) * diss)


class _LinearPropagator:
    """exp(t G) for a vectorized generator G, via its eigendecomposition."""

    def __init__(self, gen: np.ndarray):
        self.gen = gen
        self.dim = int(round(math.sqrt(gen.shape[0])))
        evals, vr = np.linalg.eig(gen)
        self.evals = evals
        self.vr = vr
        self.vr_inv = np.linalg.inv(vr)
        self.cond_ok = np.linalg.cond(vr) < 1e10

    def apply(self, theta: np.ndarray, t: float) -> np.ndarray:
        d = self.dim
        if self.cond_ok:
            coeff = self.vr_inv @ theta.reshape(-1)
            coeff = coeff * np.exp(self.evals * t)
            out = (self.vr @ coeff).reshape(d, d)
        else:  # pragma: no cover - defensive fallback
            from scipy.linalg import expm
            out = (expm(self.gen * t) @ theta.reshape(-1)).reshape(d, d)
        return 0.5 * (out + out.conj().T)


def weak_interval_run(spec: GeneratorSpec, rho_b0, rho_a0, horizon: float,
                      seed: int = 0, intervals: np.ndarray | None = None,
                      checkpoint_times: np.ndarray | None = None,
                      beta: float | None = None,
                      generator: np.ndarray | None = None) -> WeakIntervalRun:
    """Run the averaged-propagator comparison protocol with full bookkeeping.

    Same cycle as the exact process -- couple, evolve one sampled interval,
    measure-and-replace -- except that the coupled propagator is replaced by
    the averaged second-order generator (or an explicitly supplied one).  Heat
    and work ledgers use the same reservoir-side definitions as the exact
    engine.
    """
    sys = spec.sys
    da, db = sys.dim_a, sys.dim_b
    rho_a = np.asarray(getattr(rho_a0, "mat", rho_a0), dtype=complex)
    rho_b = np.asarray(getattr(rho_b0, "mat", rho_b0), dtype=complex)
    if beta is None:
        beta = _beta_of_state(sys, rho_b)
    if generator is None:
        generator = assemble_joint_weak_generator(spec)
    prop = _LinearPropagator(generator)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed))
    grid = (np.asarray(checkpoint_times, dtype=float)
            if checkpoint_times is not None else np.linspace(0.0, horizon, 121))
    v_b = sys.basis_b.eigenvectors

    def hab_expect(theta: np.ndarray, tau: float) -> float:
        tot = 0.0 + 0.0j
        for w, v in zip(spec.frequencies, spec.v_ops):
            tot += np.exp(1j * w * tau) * np.trace(theta @ v)
        return float(tot.real)

    times = [0.0]
    ledgers: list[IntervalLedger] = []
    snaps = [rho_a]
    cp_rho = np.zeros((len(grid), da, da), complex)
    cp_hab = np.zeros(len(grid))
    cp_hb = np.zeros(len(grid))
    cp_done = 0
    min_eig = 0.0
    t_cum = 0.0
    k = 0
    while t_cum < horizon:
        if intervals is not None:
            if k >= len(intervals):
                break
            t_k = float(intervals[k])
        else:
            t_k = float(rng.exponential(1.0 / spec.lam))
        theta0 = np.kron(rho_a, rho_b)
        t_end = t_cum + t_k
        completes = t_end <= horizon
        limit = t_end if completes else horizon

        while cp_done < len(grid) and grid[cp_done] <= limit + 1e-12:
            delta = min(max(grid[cp_done] - t_cum, 0.0), t_k)
            th = prop.apply(theta0, delta)
            ra = np.einsum("abcb->ac", th.reshape(da, db, da, db))
            rb = np.einsum("abad->bd", th.reshape(da, db, da, db))
            cp_rho[cp_done] = 0.5 * (ra + ra.conj().T)
            cp_hab[cp_done] = spec.gamma * hab_expect(th, delta)
            cp_hb[cp_done] = float(np.trace(sys.h_b.mat @ rb).real)
            cp_done += 1

        if not completes:
            break
        theta = prop.apply(theta0, t_k)
        ev_min = float(np.linalg.eigvalsh(theta).min())
        min_eig = min(min_eig, ev_min)
        if ev_min < -1e-5:
            raise NumericError(f"joint state positivity lost ({ev_min:.2e}) in interval protocol")
        ra = np.einsum("abcb->ac", theta.reshape(da, db, da, db))
        ra = 0.5 * (ra + ra.conj().T)
        pops_b = np.clip(np.einsum(
            "ij,jk,ki->i", v_b.conj().T,
            np.einsum("abad->bd", theta.reshape(da, db, da, db)), v_b).real, 0.0, None)
        rho_b_end = (v_b * pops_b) @ v_b.conj().T
        ledgers.append(ledger_for_interval(
            rho_a, ra, rho_b, rho_b_end, hab_expect(theta, t_k), sys, beta,
            positivity_floor=-1e-5))
        rho_a = ra / np.trace(ra).real
        t_cum = t_end
        times.append(t_cum)
        snaps.append(rho_a)
        k += 1

    return WeakIntervalRun(
        times=np.array(times[1:]),
        ledgers=ledgers,
        rho_a_snapshots=np.array(snaps),
        checkpoint_times=grid[:cp_done],
        checkpoint_rho_a=cp_rho[:cp_done],
        checkpoint_hab=cp_hab[:cp_done],
        checkpoint_hb=cp_hb[:cp_done],
        min_eig=min_eig,
        meta={"lam": spec.lam, "beta": beta, "protocol": "interval"},
    )


def fast_interval_run(sys: JointSystem, lam: float, rho_b0, rho_a0, horizon: float,
                      seed: int = 0, intervals: np.ndarray | None = None,
                      checkpoint_times: np.ndarray | None = None,
                      beta: float | None = None) -> WeakIntervalRun:
    """Interval protocol driven by the fast-measurement generator instead."""
    spec = decompose(sys, lam)
    return weak_interval_run(spec, rho_b0, rho_a0, horizon, seed=seed,
                             intervals=intervals, checkpoint_times=checkpoint_times,
                             beta=beta, generator=assemble_joint_fast_generator(sys, lam))


# ---------------------------------------------------------------------------
# Fast measurement limit


def fast_map(sys: JointSystem, rho_ab0, lam: float) -> np.ndarray:
    """Expected interval change in the fast-measurement expansion.

    All terms through O(gamma^2/lam^2): the first-order commutators (trace-free
    and population-free) and the double-commutator dissipator
    2 H_AB rho H_AB - {H_AB^2, rho}.  Valid for lam >> gamma; a warning is
    emitted otherwise.
    """
    if lam <= 0:
        raise ValueError("measurement rate must be positive")
    g = sys.gamma
    if g > 0 and lam < 10 * g:
        warnings.warn("fast-measurement expansion used with lam < 10 gamma",
                      stacklevel=2)
    rho = np.asarray(getattr(rho_ab0, "mat", rho_ab0), dtype=complex)
    hab = sys.h_ab.mat
    h0 = sys.uncoupled_h
    comm1 = hab @ rho - rho @ hab
    nested = (h0 @ hab - hab @ h0)
    comm2 = nested @ rho - rho @ nested
    diss = 2.0 * hab @ rho @ hab - (hab @ hab @ rho + rho @ hab @ hab)
    return (-1j * g / lam) * comm1 + (g / lam ** 2) * comm2 + (g * g / lam ** 2) * diss


def fast_submatrices(sys: JointSystem) -> np.ndarray:
    """A-space sub-blocks V^{nm}_{ij} = [H_AB]_{(i,n),(j,m)} in the B energy basis."""
    da, db = sys.dim_a, sys.dim_b
    w0 = np.kron(np.eye(da), sys.basis_b.eigenvectors)
    hab = w0.conj().T @ sys.h_ab.mat @ w0
    return hab.reshape(da, db, da, db).transpose(1, 3, 0, 2)  # [n, m, i, j]


def fast_map_reduced(sys: JointSystem, rho_a, rho_b_pops: np.ndarray, lam: float) -> np.ndarray:
    """d rho_A/dt of the fast-measurement master equation (dissipator part).

    (gamma^2/lam) sum_{m,n} [ 2 p_n V^{mn} rho V^{mn+} - p_m {V^{mn} V^{mn+}, rho} ].
    """
    rho = np.asarray(getattr(rho_a, "mat", rho_a), dtype=complex)
    v = fast_submatrices(sys)
    p = np.asarray(rho_b_pops, dtype=float)
    db = sys.dim_b
    out = np.zeros_like(rho)
    for m in range(db):
        for n in range(db):
            vmn = v[m, n]
            vv = vmn @ vmn.conj().T
            out = out + 2.0 * p[n] * (vmn @ rho @ vmn.conj().T) \
                - p[m] * (vv @ rho + rho @ vv)
    return (sys.gamma ** 2 / lam) * out


# ---------------------------------------------------------------------------
# Low-temperature four-state model and the minimum temperature


def min_temp_predict(lam: float, omega: float) -> float:
    """Cold-reservoir limit of the excited/ground population ratio.

    p1/p0 -> (lam/2w)^2 / ((lam/2w)^2 + 1); the matching effective inverse
    temperature is -ln(p1/p0)/omega.
    """
    if lam <= 0 or omega <= 0:
        raise ValueError("lam and omega must be positive")
    u = (lam / (2.0 * omega)) ** 2
    return u / (u + 1.0)


def four_state_rate(lam: float, omega: float, gamma: float,
                    sigma_e: float, sigma_g: float,
                    p0: float, p1: float) -> tuple[float, float]:
    """Energy flow and steady ratio of the four lowest joint levels.

    Applies when the coupling drives both the resonant exchange (energy
    difference zero) and the simultaneous excitation (difference 2 omega) with
    equal weight:

    dH_A/dt = [2 (w/lam) gamma^2 / ((lam/2w)^2 + 1)]
              [ (lam/2w)^2 (p0 - p1) + sigma_e p0 - sigma_g p1 ]
    steady p1/p0 = ((lam/2w)^2 + sigma_e) / ((lam/2w)^2 + sigma_g).
    """
    if min(sigma_e, sigma_g, p0, p1) < 0:
        raise ValueError("probabilities must be non-negative")
    u = (lam / (2.0 * omega)) ** 2
    pref = 2.0 * (omega / lam) * gamma ** 2 / (u + 1.0)
    dha_dt = pref * (u * (p0 - p1) + sigma_e * p0 - sigma_g * p1)
    steady = (u + sigma_e) / (u + sigma_g)
    return dha_dt, steady


def simultaneous_excitation_mean(lam: float, omega: float, gamma: float,
                                 sigma_e: float, sigma_g: float, n_mean: float) -> float:
    """Average number of simultaneous cavity+qubit excitations per interval."""
    return 2.0 * gamma ** 2 / (lam ** 2 + (2.0 * omega) ** 2) * (
        sigma_g * (n_mean + 1.0) - sigma_e * n_mean)

"""Time evolution: Schrodinger, Lindblad, and Monte-Carlo wave function.

All integrators use fixed-step classical RK4. The step size is chosen from
two a-priori bounds: an oversampling rule for the fastest phase frequency
of the Hamiltonian, and a stability margin against its Gershgorin spectral
bound. Dissipators are given in the standard form r * D[O] with
D[O]rho = O rho O^dag - {O^dag O, rho}/2, which matches the -r/2 convention
of the master equation they came from.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import (
    DimensionMismatch,
    DimensionOverflow,
    RateNegative,
    StepSizeTooLarge,
    TraceDrift,
)
from .operators import PhasedOperator

DENSE_DENSITY_CAP = 4000
NORM_DRIFT_PER_STEP = 1e-6
TRACE_DRIFT_LIMIT = 1e-6
POSITIVITY_CHECK_DIM = 512
RK4_ACCURACY_THETA = 0.2


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step RK4 settings; dt=None derives the step from the rules below."""

    t_final: float
    n_output: int = 201
    dt: float | None = None
    oversample: float = 20.0
    stability_margin: float = 2.0
    seed: int = 0
    n_traj: int = 1
    n_workers: int = 1
    keep_states: bool = False

    def __post_init__(self):
        if self.t_final < 0:
            raise ValueError("t_final must be >= 0")
        if self.n_output < 1:
            raise ValueError("n_output must be >= 1")
        if self.oversample < 20.0:
            raise ValueError("oversample must be >= 20")


@dataclass
class TimeSeries:
    """Output grid plus named real channels; all channels share len(times)."""

    times: np.ndarray
    channels: dict
    metadata: dict = field(default_factory=dict)
    states: list | None = None

    def __post_init__(self):
        for name, vals in self.channels.items():
            if len(vals) != len(self.times):
                raise DimensionMismatch(f"channel {name} length != len(times)")


def _max_step(H: PhasedOperator, cfg: IntegratorConfig, extra_bound: float = 0.0) -> float:
    dt = math.inf
    w = H.max_phase_frequency
    if w > 0:
        dt = min(dt, 2.0 * math.pi / (w * cfg.oversample))
    bound = H.spectral_bound() + extra_bound
    if bound > 0:
        # stability (margin below the RK4 imaginary-axis limit 2*sqrt(2)) and
        # accuracy: |R4(i theta)| - 1 ~ theta^6/144, below NORM_DRIFT_PER_STEP
        # for theta <= 0.2
        dt = min(dt, cfg.stability_margin / bound, RK4_ACCURACY_THETA / bound)
    if cfg.dt is not None:
        dt = min(dt, cfg.dt)
    return dt


def _grid(cfg: IntegratorConfig, dt_max: float):
    if cfg.t_final == 0.0 or cfg.n_output == 1:
        return np.array([0.0]), 0, 0.0
    times = np.linspace(0.0, cfg.t_final, cfg.n_output)
    interval = times[1] - times[0]
    n_sub = max(1, math.ceil(interval / dt_max)) if math.isfinite(dt_max) else 1
    return times, n_sub, interval / n_sub


class _MonomialChannel:
    """Jump operator with at most one entry per row and per column.

    Every jump operator in the models here (level lowering, photon
    annihilation, sigma_z) has this shape, which makes O psi a gather and
    O rho O^dag a sub-block copy instead of sparse products.
    """

    # above this entry count the precomputed outer-product table gets too big
    OUTER_CACHE_NNZ = 1024

    def __init__(self, op: sp.csr_matrix, rate: float):
        coo = op.tocoo()
        self.rate = rate
        self.dst = coo.row.astype(np.int64)
        self.src = coo.col.astype(np.int64)
        self.vals = coo.data.astype(complex)
        self.dim = op.shape[0]
        self._src_ix = np.ix_(self.src, self.src)
        self._dst_ix = np.ix_(self.dst, self.dst)
        if len(self.vals) <= self.OUTER_CACHE_NNZ:
            self._outer = rate * (self.vals[:, None] * self.vals[None, :].conj())
        else:
            self._outer = None

    def apply_psi(self, psi: np.ndarray) -> np.ndarray:
        out = np.zeros_like(psi)
        out[self.dst] = self.vals * psi[self.src]
        return out

    def weight(self, psi: np.ndarray) -> float:
        return self.rate * float(np.sum(np.abs(self.vals * psi[self.src]) ** 2))

    def sandwich_into(self, rho: np.ndarray, out: np.ndarray):
        block = rho[self._src_ix]
        if self._outer is not None:
            out[self._dst_ix] += self._outer * block
        else:
            out[self._dst_ix] += self.rate * (
                self.vals[:, None] * self.vals[None, :].conj() * block
            )

    def decay_diagonal(self) -> np.ndarray:
        diag = np.zeros(self.dim)
        diag[self.src] += self.rate * np.abs(self.vals) ** 2
        return diag


def _is_monomial(op: sp.spmatrix) -> bool:
    coo = op.tocoo()
    return (
        len(np.unique(coo.row)) == coo.nnz and len(np.unique(coo.col)) == coo.nnz
    )


class _GeneralChannel:
    def __init__(self, op: sp.csr_matrix, rate: float):
        self.rate = rate
        self.op = op.tocsr()
        self.opd = op.conj().T.tocsr()

    def apply_psi(self, psi):
        return self.op @ psi

    def weight(self, psi):
        v = self.op @ psi
        return self.rate * float(np.vdot(v, v).real)

    def sandwich_into(self, rho, out):
        out += self.rate * ((self.op @ rho) @ self.opd)

    def decay_diagonal(self):
        raise NotImplementedError


def _prepare_channels(dissipators):
    channels = []
    k_diag = None
    k_sparse = None
    for op, rate in dissipators:
        if rate < 0:
            raise RateNegative(f"dissipation rate {rate} < 0")
        if rate == 0:
            continue
        op = sp.csr_matrix(op, dtype=complex)
        if _is_monomial(op):
            ch = _MonomialChannel(op, rate)
            channels.append(ch)
            k_diag = ch.decay_diagonal() if k_diag is None else k_diag + ch.decay_diagonal()
        else:
            ch = _GeneralChannel(op, rate)
            channels.append(ch)
            extra = rate * (ch.opd @ ch.op)
            k_sparse = extra if k_sparse is None else k_sparse + extra
    return channels, k_diag, k_sparse


SUPEROP_MAX_ELEMENTS = 4_000_000


def _dissipator_superop(dissipators, dim):
    """Dissipative Liouvillian on row-major vec(rho).

    sum_c rate_c * (O (x) O.conj()) - (K (x) I + I (x) K.conj())/2 with
    K = sum_c rate_c O^dag O, using (A rho B).ravel() = (A (x) B^T) vec(rho).
    """
    terms = []
    k_tot = None
    for op, rate in dissipators:
        if rate <= 0:
            continue
        o = sp.csr_matrix(op, dtype=complex)
        terms.append(rate * sp.kron(o, o.conj(), format="csr"))
        k = rate * (o.conj().T @ o)
        k_tot = k if k_tot is None else k_tot + k
    if not terms:
        return None
    eye = sp.identity(dim, format="csr", dtype=complex)
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    total = total - 0.5 * (
        sp.kron(k_tot, eye, format="csr") + sp.kron(eye, k_tot.conj(), format="csr")
    )
    total = total.tocsr()
    total.sum_duplicates()
    total.sort_indices()
    return total


def _channel_arrays(channel_set, moments, times, extra):
    if channel_set is None:
        channels = {}
    else:
        channels = channel_set.finalize_series(np.asarray(moments))
    channels.update(extra)
    return channels


def evolve_schrodinger(
    H: PhasedOperator, psi0: np.ndarray, cfg: IntegratorConfig, channel_set=None
) -> TimeSeries:
    """Integrate i d psi/dt = H(t) psi with per-step renormalization."""
    dim = H.space.dimension
    if psi0.shape != (dim,):
        raise DimensionMismatch(f"state shape {psi0.shape} != ({dim},)")
    psi = np.asarray(psi0, dtype=complex).copy()
    psi /= np.linalg.norm(psi)

    times, n_sub, dt = _grid(cfg, _max_step(H, cfg))
    static = H.is_static
    if static:
        m_start = m_mid = m_end = H.matrix(0.0)
    else:
        m_start = H.matrix(times[0])
        m_mid = H.matrix(times[0])
        m_end = H.matrix(times[0])

    moments = []
    norm_errs = []
    states = [] if cfg.keep_states else None
    cum_norm_err = 0.0

    def record():
        if channel_set is not None:
            moments.append(channel_set.moments_from_psi(psi))
        norm_errs.append(cum_norm_err)
        if states is not None:
            states.append(psi.copy())

    record()
    t = 0.0
    for k in range(len(times) - 1):
        for _ in range(n_sub):
            if not static:
                H.fill_data(t + 0.5 * dt, m_mid.data)
                H.fill_data(t + dt, m_end.data)
            k1 = -1j * (m_start @ psi)
            k2 = -1j * (m_mid @ (psi + (0.5 * dt) * k1))
            k3 = -1j * (m_mid @ (psi + (0.5 * dt) * k2))
            k4 = -1j * (m_end @ (psi + dt * k3))
            psi += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            nrm = np.linalg.norm(psi)
            drift = abs(nrm - 1.0)
            if drift > NORM_DRIFT_PER_STEP:
                raise StepSizeTooLarge(
                    f"norm drift {drift:.2e} in one step at t={t:.3e}; decrease dt"
                )
            cum_norm_err += drift
            psi /= nrm
            t += dt
            if not static:
                m_start, m_end = m_end, m_start
        t = times[k + 1]  # avoid accumulation of rounding in t
        if not static:
            H.fill_data(t, m_start.data)
        record()

    extra = {"norm_err": np.array(norm_errs)}
    channels = _channel_arrays(channel_set, moments, times, extra)
    meta = {"dt": dt, "n_sub": n_sub, "solver": "schrodinger"}
    return TimeSeries(times=times, channels=channels, metadata=meta, states=states)


def evolve_lindblad(
    H: PhasedOperator,
    dissipators,
    rho0: np.ndarray,
    cfg: IntegratorConfig,
    channel_set=None,
) -> TimeSeries:
    """Integrate the master equation on a dense density matrix.

    The trace is never renormalized; its drift is a quality signal and
    exceeding the tolerance raises TraceDrift.
    """
    dim = H.space.dimension
    if dim > DENSE_DENSITY_CAP:
        raise DimensionOverflow(
            f"dense density matrix of dimension {dim} exceeds cap {DENSE_DENSITY_CAP}"
        )
    rho = np.asarray(rho0, dtype=complex).copy()
    if rho.shape != (dim, dim):
        raise DimensionMismatch(f"rho shape {rho.shape} != ({dim}, {dim})")

    channels, k_diag, k_sparse = _prepare_channels(dissipators)
    extra_bound = 0.0
    if k_diag is not None:
        extra_bound += float(k_diag.max())
    if k_sparse is not None:
        extra_bound += float(np.abs(k_sparse).sum(axis=1).max())
    times, n_sub, dt = _grid(cfg, _max_step(H, cfg, extra_bound))
    static = H.is_static
    # matrices hold -i H(t), so the coherent stage is hr + hr^dag directly
    mats = [H.matrix(0.0) for _ in range(1 if static else 3)]
    for m in mats:
        m.data *= -1j

    def fill_scaled(t_eval, mat):
        H.fill_data(t_eval, mat.data)
        mat.data *= -1j

    # The dissipative part is time independent; for moderate dimensions one
    # sparse superoperator matvec on vec(rho) beats the per-channel block
    # copies inside the RK4 stages.
    d_super = _dissipator_superop(dissipators, dim) if dim * dim <= SUPEROP_MAX_ELEMENTS else None

    # (K_ii + K_jj)/2 prefactor of the anticommutator decay, one array pass
    k_half_sum = None
    if d_super is None and k_diag is not None:
        k_half_sum = 0.5 * (k_diag[:, None] + k_diag[None, :])

    def rhs(t_eval, r, mat):
        hr = mat @ r
        out = hr + hr.conj().T  # rho stays Hermitian along RK4 stages
        if d_super is not None:
            out += (d_super @ r.reshape(-1)).reshape(dim, dim)
            return out
        if k_half_sum is not None:
            out -= k_half_sum * r
        if k_sparse is not None:
            kr = k_sparse @ r
            out -= 0.5 * (kr + kr.conj().T)
        for ch in channels:
            ch.sandwich_into(r, out)
        return out

    moments = []
    trace_errs = []
    herm_errs = []
    states = [] if cfg.keep_states else None

    def record():
        if channel_set is not None:
            moments.append(channel_set.moments_from_rho(rho))
        terr = abs(np.trace(rho).real - 1.0)
        trace_errs.append(terr)
        herm_errs.append(float(np.max(np.abs(rho - rho.conj().T))))
        if states is not None:
            states.append(rho.copy())
        if terr > TRACE_DRIFT_LIMIT:
            raise TraceDrift(f"trace drift {terr:.2e} exceeds {TRACE_DRIFT_LIMIT}")

    record()
    t = 0.0
    for k in range(len(times) - 1):
        for _ in range(n_sub):
            if static:
                m_start = m_mid = m_end = mats[0]
            else:
                m_start, m_mid, m_end = mats
                fill_scaled(t + 0.5 * dt, m_mid)
                fill_scaled(t + dt, m_end)
            k1 = rhs(t, rho, m_start)
            k2 = rhs(t + 0.5 * dt, rho + (0.5 * dt) * k1, m_mid)
            k3 = rhs(t + 0.5 * dt, rho + (0.5 * dt) * k2, m_mid)
            k4 = rhs(t + dt, rho + dt * k3, m_end)
            rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t += dt
            if not static:
                mats = [mats[2], mats[1], mats[0]]
        t = times[k + 1]
        if not static:
            fill_scaled(t, mats[0])
        record()

    meta = {"dt": dt, "n_sub": n_sub, "solver": "lindblad"}
    if dim <= POSITIVITY_CHECK_DIM:
        min_eig = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0])
        meta["final_min_eigenvalue"] = min_eig
        if min_eig < -1e-6:
            meta["warnings"] = [f"final state min eigenvalue {min_eig:.2e}"]
    extra = {
        "trace_err": np.array(trace_errs),
        "herm_err": np.array(herm_errs),
    }
    channels_out = _channel_arrays(channel_set, moments, times, extra)
    return TimeSeries(times=times, channels=channels_out, metadata=meta, states=states)


# Trajectory blocks are sized so dim * n_columns stays below this, keeping
# the RK4 temporaries within ~400 MB.
TRAJECTORY_BLOCK_ELEMENTS = 4_000_000


def _run_trajectory_block(
    H, channels, k_diag, k_sparse, psi0, times, n_sub, dt, channel_set, seed, traj_indices
):
    """Propagate one block of trajectories column-wise through shared H(t).

    Each column keeps its own counter-derived RNG stream, so results do not
    depend on how trajectories are grouped into blocks.
    """
    n_cols = len(traj_indices)
    psi = np.repeat(psi0[:, None], n_cols, axis=1)
    rngs = [np.random.default_rng((seed, c)) for c in traj_indices]
    thresholds = np.array([rng.random() for rng in rngs])
    n_jumps = np.zeros(n_cols, dtype=np.int64)

    static = H.is_static
    if static:
        m_start = m_mid = m_end = H.matrix(0.0)
    else:
        m_start = H.matrix(times[0])
        m_mid = H.matrix(times[0])
        m_end = H.matrix(times[0])

    n_mom = len(channel_set.MOMENTS)
    moments = np.empty((n_cols, len(times), n_mom))
    for j in range(n_cols):
        moments[j, 0] = channel_set.moments_from_psi(psi[:, j])

    half_k = 0.5 * k_diag[:, None] if k_diag is not None else None

    def deriv(mat, vec):
        out = -1j * (mat @ vec)
        if half_k is not None:
            out -= half_k * vec
        if k_sparse is not None:
            out -= 0.5 * (k_sparse @ vec)
        return out

    t = 0.0
    for k in range(len(times) - 1):
        for _ in range(n_sub):
            if not static:
                H.fill_data(t + 0.5 * dt, m_mid.data)
                H.fill_data(t + dt, m_end.data)
            k1 = deriv(m_start, psi)
            k2 = deriv(m_mid, psi + (0.5 * dt) * k1)
            k3 = deriv(m_mid, psi + (0.5 * dt) * k2)
            k4 = deriv(m_end, psi + dt * k3)
            psi += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t += dt
            if not static:
                m_start, m_end = m_end, m_start
            nrm2 = np.einsum("ij,ij->j", psi.conj(), psi).real
            for j in np.nonzero(nrm2 <= thresholds)[0]:
                col = psi[:, j]
                weights = np.array([ch.weight(col) for ch in channels])
                total = weights.sum()
                if total > 0:
                    pick = rngs[j].choice(len(channels), p=weights / total)
                    col = channels[pick].apply_psi(col)
                psi[:, j] = col / np.linalg.norm(col)
                thresholds[j] = rngs[j].random()
                n_jumps[j] += 1
        t = times[k + 1]
        if not static:
            H.fill_data(t, m_start.data)
        nrm = np.sqrt(np.einsum("ij,ij->j", psi.conj(), psi).real)
        for j in range(n_cols):
            moments[j, k + 1] = channel_set.moments_from_psi(psi[:, j] / nrm[j])
    return moments, n_jumps


def evolve_mcwf(
    H: PhasedOperator,
    jumps,
    psi0: np.ndarray,
    cfg: IntegratorConfig,
    channel_set,
) -> TimeSeries:
    """Trajectory-averaged unraveling of the master equation.

    Jump times use the norm-threshold (waiting time) method on the
    non-Hermitian drift H - (i/2) sum_c r_c O_c^dag O_c. Channel means are
    formed from trajectory-averaged linear moments; nonlinear channels get
    a batch-resampled standard error, linear ones the plain standard error
    of the mean. Results are deterministic for a fixed (seed, n_traj):
    trajectory c uses its own counter-derived RNG stream and the reduction
    order is fixed by trajectory index.
    """
    if cfg.n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    dim = H.space.dimension
    if psi0.shape != (dim,):
        raise DimensionMismatch(f"state shape {psi0.shape} != ({dim},)")
    psi0 = np.asarray(psi0, dtype=complex) / np.linalg.norm(psi0)

    channels, k_diag, k_sparse = _prepare_channels(jumps)
    extra_bound = float(k_diag.max()) if k_diag is not None else 0.0
    if k_sparse is not None:
        extra_bound += float(np.abs(k_sparse).sum(axis=1).max())
    times, n_sub, dt = _grid(cfg, _max_step(H, cfg, extra_bound))

    all_moments = np.empty((cfg.n_traj, len(times), len(channel_set.MOMENTS)))
    total_jumps = 0
    block = max(1, TRAJECTORY_BLOCK_ELEMENTS // dim)
    chunks = [
        tuple(range(lo, min(lo + block, cfg.n_traj)))
        for lo in range(0, cfg.n_traj, block)
    ]
    if cfg.n_workers > 1 and len(chunks) > 1:
        from concurrent.futures import ProcessPoolExecutor

        args = [
            (H, channels, k_diag, k_sparse, psi0, times, n_sub, dt, channel_set, cfg.seed, idxs)
            for idxs in chunks
        ]
        with ProcessPoolExecutor(max_workers=cfg.n_workers) as pool:
            for idxs, (mom, nj) in zip(chunks, pool.map(_trajectory_entry, args)):
                all_moments[list(idxs)] = mom
                total_jumps += int(nj.sum())
    else:
        for idxs in chunks:
            mom, nj = _run_trajectory_block(
                H, channels, k_diag, k_sparse, psi0, times, n_sub, dt, channel_set, cfg.seed, idxs
            )
            all_moments[list(idxs)] = mom
            total_jumps += int(nj.sum())

    mean_moments = all_moments.mean(axis=0)
    channels_out = channel_set.finalize_series(mean_moments)

    n = cfg.n_traj
    if n > 1:
        mom_se = all_moments.std(axis=0, ddof=1) / math.sqrt(n)
        linear = [
            name for name in channel_set.channels if name not in channel_set.NONLINEAR
        ]
        # linear channels inherit the moment standard errors directly
        one_traj = channel_set.finalize_series(mean_moments + mom_se)
        base = channel_set.finalize_series(mean_moments)
        for name in linear:
            channels_out[f"{name}_stderr"] = np.abs(one_traj[name] - base[name])
        n_batch = min(20, n)
        if channel_set.NONLINEAR and n_batch >= 2:
            splits = np.array_split(np.arange(n), n_batch)
            batch_vals = {name: [] for name in channel_set.NONLINEAR}
            for idx in splits:
                bm = all_moments[idx].mean(axis=0)
                bser = channel_set.finalize_series(bm)
                for name in channel_set.NONLINEAR:
                    if name in bser:
                        batch_vals[name].append(bser[name])
            for name, vals in batch_vals.items():
                if vals:
                    arr = np.stack(vals)
                    channels_out[f"{name}_stderr"] = arr.std(axis=0, ddof=1) / math.sqrt(
                        len(vals)
                    )

    meta = {
        "dt": dt,
        "n_sub": n_sub,
        "solver": "mcwf",
        "n_traj": cfg.n_traj,
        "seed": cfg.seed,
        "mean_jumps_per_trajectory": total_jumps / cfg.n_traj,
    }
    return TimeSeries(times=times, channels=channels_out, metadata=meta)


def _trajectory_entry(packed):
    H, channels, k_diag, k_sparse, psi0, times, n_sub, dt, channel_set, seed, idxs = packed
    return _run_trajectory_block(
        H, channels, k_diag, k_sparse, psi0, times, n_sub, dt, channel_set, seed, idxs
    )

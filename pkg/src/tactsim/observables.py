"""Figures of merit: squeezing, overlap, two-mode criterion, entropy, Fisher information.

Everything here is a pure function of a state snapshot (vector or density
matrix); the channel evaluator classes package the per-snapshot moment
extraction used by the integrators so that trajectory averaging acts on
linear moments before any nonlinear quantity is formed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BasisMismatch, ChannelMissing, DimensionMismatch
from .operators import collective_spin_ops, number_diagonal, pair_spin_ops, top_fock_diagonal
from .spaces import AtomLevels, Dicke, HilbertSpace

DEGENERATE_SPIN_TOL = 1e-6
ENTROPY_EIGENVALUE_FLOOR = 1e-14


@dataclass(frozen=True)
class SqueezingResult:
    xi2: float
    xi2_db: float
    mean_spin: np.ndarray
    optimal_direction: np.ndarray | None
    degenerate: bool


@dataclass(frozen=True)
class TmssResult:
    delta_prime: float
    var_minus_x: float
    var_plus_y: float
    mean_plus_z: float


@dataclass(frozen=True)
class QfiResult:
    I: np.ndarray  # 2x2 for the generator pair (S+_x, S-_y)


def _perp_frame(n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ref = np.zeros(3)
    ref[int(np.argmin(np.abs(n)))] = 1.0
    e1 = np.cross(n, ref)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    return e1, e2


def squeezing_from_moments(means: np.ndarray, second: np.ndarray, S: float) -> SqueezingResult:
    """Squeezing parameter from first moments and symmetrized second moments.

    means = (<S_x>, <S_y>, <S_z>); second[a, b] = <{S_a, S_b}>/2. The
    transverse variance is minimized in closed form via the 2x2 covariance
    eigenproblem in the plane perpendicular to the mean spin.
    """
    means = np.asarray(means, dtype=float)
    second = np.asarray(second, dtype=float)
    norm = np.linalg.norm(means)
    if norm < DEGENERATE_SPIN_TOL * S:
        return SqueezingResult(math.nan, math.nan, means, None, True)
    n = means / norm
    e1, e2 = _perp_frame(n)
    frame = np.stack([e1, e2])  # 2 x 3
    cov = frame @ second @ frame.T  # transverse means vanish by construction
    cov = 0.5 * (cov + cov.T)
    evals, evecs = np.linalg.eigh(cov)
    xi2 = float(evals[0] / (S / 2.0))
    direction = evecs[0, 0] * e1 + evecs[1, 0] * e2
    xi2_db = 10.0 * math.log10(xi2) if xi2 > 0 else -math.inf
    return SqueezingResult(xi2, xi2_db, means, direction, False)


def _spin_moments_psi(psi, sx, sy, sz):
    vs = [sx @ psi, sy @ psi, sz @ psi]
    means = np.array([np.vdot(psi, v).real for v in vs])
    second = np.empty((3, 3))
    for a in range(3):
        for b in range(a, 3):
            second[a, b] = second[b, a] = np.vdot(vs[a], vs[b]).real
    return means, second


def _spin_moments_rho(rho, sx, sy, sz):
    ops = (sx, sy, sz)
    ws = [op @ rho for op in ops]
    means = np.array([np.trace(w).real for w in ws])
    second = np.empty((3, 3))
    for a in range(3):
        for b in range(a, 3):
            val = (ops[a].multiply(ws[b].T)).sum()
            second[a, b] = second[b, a] = val.real
    return means, second


def squeezing_parameter(
    state: np.ndarray,
    S: float,
    space: HilbertSpace | None = None,
    spin_ops=None,
    which_factor: int = 0,
    levels: tuple[int, int] = (0, 1),
) -> SqueezingResult:
    """Squeezing parameter of a pure state or density matrix."""
    if spin_ops is None:
        if space is None:
            raise DimensionMismatch("need either spin_ops or a space to build them from")
        spin_ops = collective_spin_ops(space, which_factor, levels)
    sx, sy, sz = spin_ops
    state = np.asarray(state)
    if state.ndim == 1:
        means, second = _spin_moments_psi(state, sx, sy, sz)
    elif state.ndim == 2:
        means, second = _spin_moments_rho(state, sx, sy, sz)
    else:
        raise DimensionMismatch(f"state has ndim {state.ndim}")
    return squeezing_from_moments(means, second, S)


def overlap_fidelity(psi0: np.ndarray, psit: np.ndarray) -> float:
    """|<psi0|psit>|, insensitive to global phase."""
    if psi0.shape != psit.shape:
        raise DimensionMismatch(f"{psi0.shape} vs {psit.shape}")
    return float(abs(np.vdot(psi0, psit)))


def tmss_delta(state: np.ndarray, space: HilbertSpace, pair=None) -> TmssResult:
    """Two-mode squeezing criterion; delta_prime < 0 certifies a TMSS state."""
    if pair is None:
        pair = pair_spin_ops(space)
    state = np.asarray(state)

    if state.ndim == 1:
        def mean(op):
            return np.vdot(state, op @ state).real

        def mean_sq(op):
            v = op @ state
            return np.vdot(v, v).real
    elif state.ndim == 2:
        def mean(op):
            return np.trace(op @ state).real

        def mean_sq(op):
            return (op.multiply((op @ state).T)).sum().real
    else:
        raise DimensionMismatch(f"state has ndim {state.ndim}")

    var_mx = mean_sq(pair.minus_x) - mean(pair.minus_x) ** 2
    var_py = mean_sq(pair.plus_y) - mean(pair.plus_y) ** 2
    mean_pz = mean(pair.plus_z)
    return TmssResult(var_mx + var_py - mean_pz, var_mx, var_py, mean_pz)


def entanglement_entropy(psi: np.ndarray, dim_left: int, dim_right: int) -> float:
    """Von Neumann entropy (natural log) of the left reduction of a pure state."""
    psi = np.asarray(psi)
    if psi.ndim != 1 or psi.size != dim_left * dim_right:
        raise DimensionMismatch(f"state size {psi.size} != {dim_left} * {dim_right}")
    svals = np.linalg.svd(psi.reshape(dim_left, dim_right), compute_uv=False)
    lam = svals**2
    lam = lam[lam > ENTROPY_EIGENVALUE_FLOOR]
    return float(-np.sum(lam * np.log(lam)))


def reduced_density_matrix(psi: np.ndarray, dim_left: int, dim_right: int, keep: str = "L"):
    m = np.asarray(psi).reshape(dim_left, dim_right)
    if keep == "L":
        return m @ m.conj().T
    return m.T @ m.conj()


def qfi_matrix(psi: np.ndarray, space: HilbertSpace, pair=None) -> QfiResult:
    """Two-parameter quantum Fisher information for the generators (S+_x, S-_y)."""
    if pair is None:
        pair = pair_spin_ops(space)
    gens = (pair.plus_x, pair.minus_y)
    vs = [g @ psi for g in gens]
    means = [np.vdot(psi, v).real for v in vs]
    out = np.empty((2, 2))
    for i in range(2):
        for j in range(2):
            anti = 2.0 * np.vdot(vs[i], vs[j]).real  # <{H_i, H_j}> via hermiticity
            out[i, j] = 2.0 * anti - 4.0 * means[i] * means[j]
    out = 0.5 * (out + out.T)
    return QfiResult(out)


def analytic_estimates(
    N: float, chi: float, g: float | None = None,
    delta: float | None = None, gamma_d: float | None = None,
) -> dict:
    """Optimal-squeezing time and effective atomic decay estimates.

    The decay estimate is reported per channel and, alongside, with the two
    decay channels summed; neither variant is preferred.
    """
    out = {"t_o": 1.58 * math.log(N) / (3.0 * N * chi)}
    if g is not None and delta is not None and gamma_d is not None:
        gamma_eff = (delta * chi / g**2) * gamma_d
        out["gamma_eff"] = gamma_eff
        out["t_decay"] = 1.0 / gamma_eff if gamma_eff > 0 else math.inf
        out["gamma_eff_two_channel"] = 2.0 * gamma_eff
        out["t_decay_two_channel"] = out["t_decay"] / 2.0
    return out


def channel_minimum(times: np.ndarray, values: np.ndarray) -> tuple[float, float]:
    """(min value, time at min) with parabolic refinement between neighbors."""
    values = np.asarray(values, dtype=float)
    finite = np.isfinite(values)
    if not finite.any():
        return math.nan, math.nan
    idx_pool = np.where(finite)[0]
    k = idx_pool[np.argmin(values[idx_pool])]
    if 0 < k < len(values) - 1 and finite[k - 1] and finite[k + 1]:
        t0, t1, t2 = times[k - 1 : k + 2]
        y0, y1, y2 = values[k - 1 : k + 2]
        denom = (y0 - 2 * y1 + y2)
        if denom > 0:
            # uniform-grid parabola through the three points
            h = 0.5 * (t2 - t0)
            shift = 0.5 * (y0 - y2) / denom
            shift = float(np.clip(shift, -1.0, 1.0))
            t_min = t1 + shift * h
            y_min = y1 - 0.25 * (y0 - y2) * shift
            return float(y_min), float(t_min)
    return float(values[k]), float(times[k])


def squeezing_summary(series) -> dict:
    """Global minima of the squeezing and two-mode channels of a time series."""
    out = {}
    if "xi2" in series.channels:
        xi2_min, t_min = channel_minimum(series.times, series.channels["xi2"])
        out["xi2_min"] = xi2_min
        out["t_at_min"] = t_min
        out["xi2_min_db"] = 10.0 * math.log10(xi2_min) if xi2_min > 0 else -math.inf
    if "delta_prime" in series.channels:
        dmin, t_dmin = channel_minimum(series.times, series.channels["delta_prime"])
        out["delta_prime_min"] = dmin
        out["t_at_dmin"] = t_dmin
    if not out:
        raise ChannelMissing("series has neither an xi2 nor a delta_prime channel")
    return out


class SpinChannels:
    """Per-snapshot spin/photon moment extraction for single-spin models.

    Moments are linear in the state (so Monte-Carlo trajectory averages of
    them converge to the density-matrix values); xi2 and xi2_db are the
    nonlinear channels formed from averaged moments afterwards.
    """

    MOMENTS = (
        "sx", "sy", "sz", "sxx", "syy", "szz", "sxy", "sxz", "syz",
        "photon", "topfock", "fid",
    )
    NONLINEAR = ("xi2", "xi2_db")

    def __init__(
        self,
        space: HilbertSpace,
        S: float,
        spin_factor: int = 0,
        levels: tuple[int, int] = (0, 1),
        fock_factor: int | None = None,
        psi0: np.ndarray | None = None,
        channels=None,
    ):
        self.space = space
        self.S = S
        self.sx, self.sy, self.sz = collective_spin_ops(space, spin_factor, levels)
        self.n_diag = number_diagonal(space, fock_factor) if fock_factor is not None else None
        self.top_diag = top_fock_diagonal(space, fock_factor) if fock_factor is not None else None
        self.psi0 = None if psi0 is None else np.asarray(psi0, dtype=complex)
        if channels is None:
            channels = ["xi2", "xi2_db", "mean_sz"]
            if psi0 is not None:
                channels.append("fidelity")
            if fock_factor is not None:
                channels += ["photon_number", "top_fock_pop"]
        self.channels = list(channels)

    def moments_from_psi(self, psi: np.ndarray) -> np.ndarray:
        means, second = _spin_moments_psi(psi, self.sx, self.sy, self.sz)
        out = np.empty(len(self.MOMENTS))
        out[0:3] = means
        out[3:6] = second[0, 0], second[1, 1], second[2, 2]
        out[6:9] = second[0, 1], second[0, 2], second[1, 2]
        prob = np.abs(psi) ** 2
        out[9] = float(self.n_diag @ prob) if self.n_diag is not None else 0.0
        out[10] = float(self.top_diag @ prob) if self.top_diag is not None else 0.0
        out[11] = overlap_fidelity(self.psi0, psi) if self.psi0 is not None else 0.0
        return out

    def moments_from_rho(self, rho: np.ndarray) -> np.ndarray:
        means, second = _spin_moments_rho(rho, self.sx, self.sy, self.sz)
        out = np.empty(len(self.MOMENTS))
        out[0:3] = means
        out[3:6] = second[0, 0], second[1, 1], second[2, 2]
        out[6:9] = second[0, 1], second[0, 2], second[1, 2]
        pops = np.diag(rho).real
        out[9] = float(self.n_diag @ pops) if self.n_diag is not None else 0.0
        out[10] = float(self.top_diag @ pops) if self.top_diag is not None else 0.0
        if self.psi0 is not None:
            out[11] = math.sqrt(max(np.vdot(self.psi0, rho @ self.psi0).real, 0.0))
        else:
            out[11] = 0.0
        return out

    def finalize_row(self, row: np.ndarray) -> dict:
        means = row[0:3]
        second = np.array(
            [
                [row[3], row[6], row[7]],
                [row[6], row[4], row[8]],
                [row[7], row[8], row[5]],
            ]
        )
        sq = squeezing_from_moments(means, second, self.S)
        full = {
            "xi2": sq.xi2,
            "xi2_db": sq.xi2_db,
            "mean_sz": row[2],
            "photon_number": row[9],
            "top_fock_pop": row[10],
            "fidelity": row[11],
        }
        return {name: full[name] for name in self.channels}

    def finalize_series(self, moments: np.ndarray) -> dict:
        rows = [self.finalize_row(m) for m in moments]
        return {name: np.array([r[name] for r in rows]) for name in self.channels}


class TmssChannels:
    """Per-snapshot channels of the two-Dicke models (pure states only)."""

    NONLINEAR = ()

    def __init__(self, space: HilbertSpace, psi0: np.ndarray | None = None, channels=None):
        dicke = [f for f in space.factors if isinstance(f, Dicke)]
        if len(dicke) != 2:
            raise BasisMismatch("TMSS channels need a space with two Dicke factors")
        self.space = space
        self.pair = pair_spin_ops(space)
        if len(space.factors) == 2:
            self.dims = (space.factor_dims[0], space.factor_dims[1])
        else:
            self.dims = None  # entropy needs a clean bipartition
        self.psi0 = None if psi0 is None else np.asarray(psi0, dtype=complex)
        if channels is None:
            channels = ["delta_prime", "qfi_11", "qfi_12", "qfi_22"]
            if self.dims is not None:
                channels.append("entropy_L")
            if psi0 is not None:
                channels.append("fidelity")
        self.channels = list(channels)
        self.MOMENTS = tuple(self.channels)

    def moments_from_psi(self, psi: np.ndarray) -> np.ndarray:
        res = tmss_delta(psi, self.space, self.pair)
        qfi = qfi_matrix(psi, self.space, self.pair)
        full = {
            "delta_prime": res.delta_prime,
            "var_minus_x": res.var_minus_x,
            "var_plus_y": res.var_plus_y,
            "mean_plus_z": res.mean_plus_z,
            "qfi_11": qfi.I[0, 0],
            "qfi_12": qfi.I[0, 1],
            "qfi_22": qfi.I[1, 1],
        }
        if "entropy_L" in self.channels:
            full["entropy_L"] = entanglement_entropy(psi, *self.dims)
        if "fidelity" in self.channels:
            full["fidelity"] = overlap_fidelity(self.psi0, psi)
        return np.array([full[name] for name in self.channels])

    def moments_from_rho(self, rho: np.ndarray) -> np.ndarray:
        raise BasisMismatch("TMSS channels are defined for pure states only")

    def finalize_row(self, row: np.ndarray) -> dict:
        return dict(zip(self.channels, row))

    def finalize_series(self, moments: np.ndarray) -> dict:
        return {name: moments[:, i].copy() for i, name in enumerate(self.channels)}

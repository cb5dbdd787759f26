"""Scenario execution: space/Hamiltonian assembly, solver routing, output files.

Solver routing policy: pure scenarios integrate the wavefunction; dissipative
ones use the dense density matrix when the dimension allows it and fall back
to trajectory averaging otherwise. The full four-level model is always
routed to trajectories once N >= 5, where the density matrix is hopeless.
"""

from __future__ import annotations

import dataclasses
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import (
    DENSE_DENSITY_CAP,
    IntegratorConfig,
    TimeSeries,
    evolve_lindblad,
    evolve_mcwf,
    evolve_schrodinger,
)
from .errors import ChannelMissing, TactsimError, ValidationError
from .model import (
    build_full_hamiltonian,
    build_intermediate_hamiltonian,
    build_lmg_hamiltonian,
    build_tmss_hamiltonian,
    build_two_cavity_hamiltonian,
    effective_coeffs,
    effective_dissipators,
    full_jump_operators,
    validate_regime,
)
from .observables import SpinChannels, TmssChannels, squeezing_summary
from .operators import PhasedOperator, boson_ops
from .scenario import Scenario
from .spaces import AtomLevels, Dicke, Fock, make_space

# Full-model trajectories become the only viable dissipative route here.
FULL_MODEL_MCWF_N = 5


@dataclass
class RunRecord:
    """One scenario execution with everything needed to reproduce it."""

    scenario_hash: str
    model: str
    solver: str
    seed: int
    wall_time: float
    series: TimeSeries
    summary: dict
    coeffs: dict | None = None
    regime: dict | None = None
    warnings: list = field(default_factory=list)
    companion: TimeSeries | None = None

    def to_dict(self) -> dict:
        def series_dict(s):
            return {
                "times": s.times.tolist(),
                "channels": {k: np.asarray(v).tolist() for k, v in s.channels.items()},
                "metadata": _jsonable(s.metadata),
            }

        out = {
            "scenario_hash": self.scenario_hash,
            "model": self.model,
            "solver": self.solver,
            "seed": self.seed,
            "wall_time": self.wall_time,
            "series": series_dict(self.series),
            "summary": _jsonable(self.summary),
            "coeffs": self.coeffs,
            "regime": self.regime,
            "warnings": list(self.warnings),
        }
        if self.companion is not None:
            out["companion"] = series_dict(self.companion)
        return out


@dataclass
class SweepResult:
    scenario_hash: str
    axis: str
    rows: list
    records: list

    def to_dict(self) -> dict:
        return {
            "scenario_hash": self.scenario_hash,
            "axis": self.axis,
            "rows": _jsonable(self.rows),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and obj != obj:
        return None
    return obj


def _integrator_config(sc: Scenario, seed: int | None, threads: int) -> IntegratorConfig:
    kw = dict(sc.integrator)
    if seed is not None:
        kw["seed"] = seed
    kw.setdefault("seed", 0)
    kw["n_workers"] = max(1, threads)
    return IntegratorConfig(**kw)


def _initial_state(sc: Scenario, space) -> np.ndarray:
    init = sc.initial_state
    if isinstance(init, dict):
        amps = np.array([complex(re, im) for re, im in init["amplitudes"]])
        if amps.shape != (space.dimension,):
            raise ValidationError(
                f"initial_state.amplitudes: length {amps.size} != dimension {space.dimension}"
            )
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise ValidationError("initial_state.amplitudes: zero vector")
        return amps / norm
    # Both named states put every atom in the lowest internal level with all
    # cavities in vacuum, which is flat index 0 in every basis used here.
    return space.basis_state((0,) * len(space.factors))


def _lmg_terms(sc: Scenario):
    """(c_z, c_x, c_y, phi, N, coeffs_or_None, params_or_None) of an lmg scenario."""
    if "g1" in sc.params:
        p = sc.drive_params()
        c = effective_coeffs(p, mode=sc.coeff_mode)
        return c.c_z, c.c_x, c.c_y, p.phi, p.N, c, p
    q = sc.params
    return q.get("c_z", 0.0), q["c_x"], q["c_y"], q.get("phi", 0.0), q["N"], None, None


def _build_problem(sc: Scenario):
    """Space, Hamiltonian, jump list, channel set, and metadata of a scenario."""
    warnings = []
    coeffs = regime = None
    d = sc.dissipation_params()
    dissipative = d is not None and (d.kappa > 0 or d.gamma_d > 0)

    if sc.model == "full":
        p = sc.drive_params()
        space = make_space([AtomLevels(4, p.N), Fock(p.n_max)])
        H = build_full_hamiltonian(p, space)
        jumps = full_jump_operators(space, d) if dissipative else []
        coeffs = effective_coeffs(p, mode=sc.coeff_mode)
        regime = validate_regime(p, coeffs)
        psi0 = _initial_state(sc, space)
        chans = SpinChannels(
            space, p.N / 2.0, spin_factor=0, levels=(0, 1), fock_factor=1,
            psi0=psi0, channels=sc.observables,
        )
        return space, H, jumps, chans, psi0, coeffs, regime, p.N, warnings

    if sc.model == "intermediate":
        p = sc.drive_params()
        coeffs = effective_coeffs(p, mode=sc.coeff_mode)
        regime = validate_regime(p, coeffs)
        space = make_space([Dicke(p.N / 2.0), Fock(p.n_max)])
        H = build_intermediate_hamiltonian(coeffs, p.phi, space)
        jumps = []
        if dissipative:
            if d.kappa > 0:
                a_op, _ = boson_ops(space, 1)
                jumps.append((a_op, d.kappa))
            if d.gamma_d > 0:
                warnings.append(
                    "intermediate model: per-atom decay is not representable in the "
                    "collective-spin sector and was ignored"
                )
        psi0 = _initial_state(sc, space)
        chans = SpinChannels(
            space, p.N / 2.0, spin_factor=0, fock_factor=1, psi0=psi0,
            channels=sc.observables,
        )
        return space, H, jumps, chans, psi0, coeffs, regime, p.N, warnings

    if sc.model in ("lmg", "oat"):
        if sc.model == "oat":
            c_z, c_x, c_y, phi, n_atoms = 0.0, -sc.params["chi"], 0.0, 0.0, sc.params["N"]
            c = p = None
        else:
            c_z, c_x, c_y, phi, n_atoms, c, p = _lmg_terms(sc)
            if c is not None:
                coeffs = c
                regime = validate_regime(p, c)
        need_individual = dissipative and d.gamma_d > 0 and p is not None
        if need_individual:
            space = make_space([AtomLevels(2, n_atoms)])
        else:
            space = make_space([Dicke(n_atoms / 2.0)])
            if dissipative and d.gamma_d > 0:
                warnings.append(
                    "single-spin model without drive parameters: per-atom decay "
                    "rates are unknown and gamma_d was ignored"
                )
        h = build_lmg_hamiltonian(c_z, c_x, c_y, phi, space, 0)
        H = PhasedOperator.constant(space, h)
        jumps = []
        if dissipative:
            if p is not None:
                jumps = effective_dissipators(p, d, space, 0, include_individual=need_individual)
            elif d.kappa > 0:
                warnings.append(
                    "single-spin model without drive parameters: cavity-mediated "
                    "collective rates are unknown and kappa was ignored"
                )
        psi0 = _initial_state(sc, space)
        chans = SpinChannels(space, n_atoms / 2.0, psi0=psi0, channels=sc.observables)
        return space, H, jumps, chans, psi0, coeffs, regime, n_atoms, warnings

    # Two-cavity family: pure-state only.
    if dissipative:
        raise ValidationError(f"dissipation is not supported for model {sc.model!r}")
    tc = sc.two_cavity_params()
    if sc.model == "tmss":
        space = make_space([Dicke(tc.S_L), Dicke(tc.S_R)])
        H = PhasedOperator.constant(space, build_tmss_hamiltonian(tc, space))
    else:
        space = make_space(
            [Dicke(tc.S_L), Fock(tc.n_max), Dicke(tc.S_R), Fock(tc.n_max)]
        )
        H = build_two_cavity_hamiltonian(tc, space)
    psi0 = _initial_state(sc, space)
    chans = TmssChannels(space, psi0=psi0, channels=sc.observables)
    return space, H, [], chans, psi0, None, None, None, warnings


def _pick_solver(sc: Scenario, jumps, space, n_atoms) -> str:
    if not jumps:
        return "schrodinger"
    if sc.model == "full" and n_atoms >= FULL_MODEL_MCWF_N:
        return "mcwf"
    if space.dimension > DENSE_DENSITY_CAP:
        return "mcwf"
    if sc.integrator.get("n_traj", 1) > 1:
        return "mcwf"
    return "lindblad"


def run_scenario(sc: Scenario, seed: int | None = None, threads: int = 1) -> RunRecord:
    """Execute a single (non-sweep) scenario and summarize its time series."""
    t0 = time.perf_counter()
    space, H, jumps, chans, psi0, coeffs, regime, n_atoms, warnings = _build_problem(sc)
    cfg = _integrator_config(sc, seed, threads)
    solver = _pick_solver(sc, jumps, space, n_atoms)

    if solver == "schrodinger":
        series = evolve_schrodinger(H, psi0, cfg, chans)
    elif solver == "lindblad":
        rho0 = np.outer(psi0, psi0.conj())
        series = evolve_lindblad(H, jumps, rho0, cfg, chans)
    else:
        if cfg.n_traj < 2:
            warnings.append("trajectory solver selected with n_traj=1; set integrator.n_traj")
        series = evolve_mcwf(H, jumps, psi0, cfg, chans)

    try:
        summary = squeezing_summary(series)
    except ChannelMissing:
        summary = {}

    companion = None
    if sc.companion_model is not None:
        p = sc.drive_params()
        c = coeffs if coeffs is not None else effective_coeffs(p, mode=sc.coeff_mode)
        cspace = make_space([Dicke(p.N / 2.0)])
        ch = build_lmg_hamiltonian(c.c_z, c.c_x, c.c_y, p.phi, cspace, 0)
        cpsi0 = cspace.basis_state((0,))
        cchans = SpinChannels(cspace, p.N / 2.0, psi0=cpsi0, channels=sc.observables)
        companion = evolve_schrodinger(
            PhasedOperator.constant(cspace, ch), cpsi0, cfg, cchans
        )
        if "xi2" in series.channels and "xi2" in companion.channels:
            diff = np.abs(
                np.asarray(series.channels["xi2"]) - np.asarray(companion.channels["xi2"])
            )
            summary["companion_max_xi2_diff"] = float(np.nanmax(diff))
            csum = squeezing_summary(companion)
            summary["companion_xi2_min"] = csum["xi2_min"]
            summary["companion_t_at_min"] = csum["t_at_min"]

    return RunRecord(
        scenario_hash=sc.hash,
        model=sc.model,
        solver=solver,
        seed=cfg.seed,
        wall_time=time.perf_counter() - t0,
        series=series,
        summary=summary,
        coeffs=None if coeffs is None else _jsonable(dataclasses.asdict(coeffs)),
        regime=None if regime is None else _jsonable(dataclasses.asdict(regime)),
        warnings=warnings,
        companion=companion,
    )


def _point_scenario(sc: Scenario, axis: str, value) -> Scenario:
    from .scenario import validate_scenario

    doc = json.loads(json.dumps(sc.raw))
    doc.pop("sweep")
    if axis == "N":
        doc["params"]["N"] = int(value)
    elif axis == "S_R":
        doc["params"]["S_R"] = value
    elif axis == "J":
        if sc.model == "tmss":
            doc["params"]["J"] = value
        else:
            tc = sc.two_cavity_params()
            doc["params"]["J_tilde"] = value * (tc.delta * tc.gamma) ** 0.5
    return validate_scenario(doc)


def run_sweep(sc: Scenario, seed: int | None = None, threads: int = 1) -> SweepResult:
    """Run one scenario per sweep point, in the declared order.

    A failing point is recorded with its error message and does not abort
    the remaining points.
    """
    if sc.sweep is None:
        raise ValidationError("scenario has no sweep block")
    axis, values = sc.sweep
    rows = []
    records = []
    for value in values:
        row = {"axis": axis, "value": value, "error": None}
        try:
            rec = run_scenario(_point_scenario(sc, axis, value), seed=seed, threads=threads)
        except TactsimError as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
            records.append(None)
        else:
            records.append(rec)
            row.update(rec.summary)
        rows.append(row)
    return SweepResult(scenario_hash=sc.hash, axis=axis, rows=rows, records=records)


def _atomic_write(path, text: str):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8", newline="\n")
    os.replace(tmp, path)


def write_series_csv(path, record: RunRecord):
    """Time-series CSV: '# scenario=<hash>' comment, then t plus one column
    per channel at 17 significant digits with LF line endings."""
    s = record.series
    names = list(s.channels)
    lines = [f"# scenario={record.scenario_hash} seed={record.seed}"]
    lines.append(",".join(["t"] + names))
    cols = [np.asarray(s.channels[n], dtype=float) for n in names]
    for i, t in enumerate(s.times):
        vals = [t] + [c[i] for c in cols]
        lines.append(",".join("%.17g" % v for v in vals))
    _atomic_write(path, "\n".join(lines) + "\n")


def write_record_json(path, record: RunRecord):
    _atomic_write(path, json.dumps(record.to_dict(), indent=2) + "\n")


def write_sweep_csv(path, result: SweepResult):
    """Sweep summary CSV: one row per point with the channel minima."""
    value_keys = []
    for row in result.rows:
        for k in row:
            if k not in ("axis", "value", "error") and k not in value_keys:
                value_keys.append(k)
    lines = [f"# scenario={result.scenario_hash}"]
    lines.append(",".join([result.axis] + value_keys + ["error"]))
    for row in result.rows:
        cells = ["%.17g" % row["value"]]
        for k in value_keys:
            v = row.get(k)
            cells.append("" if v is None else "%.17g" % v)
        cells.append(row["error"] or "")
        lines.append(",".join(cells))
    _atomic_write(path, "\n".join(lines) + "\n")


def write_sweep_json(path, result: SweepResult):
    _atomic_write(path, json.dumps(result.to_dict(), indent=2) + "\n")


def save_snapshot(path, state: np.ndarray, metadata: dict):
    """Binary state dump with a JSON sidecar describing what it is."""
    path = Path(path)
    with open(path, "wb") as fh:
        np.save(fh, np.asarray(state, dtype=complex))
    _atomic_write(path.with_suffix(path.suffix + ".json"), json.dumps(_jsonable(metadata), indent=2) + "\n")


def load_snapshot(path):
    path = Path(path)
    state = np.load(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text(encoding="utf-8"))
    return state, meta

"""Declarative scenario files: parsing, strict validation, and hashing.

Scenarios are JSON with a fixed schema; unknown keys and duplicate keys
are rejected so a file cannot silently change meaning. The scenario hash
is a digest of the canonicalized document, so whitespace and key order do
not affect it.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import ParseError, ValidationError
from .model import DissipationParams, DriveParams, TwoCavityParams, dissipation_from_drive

MODELS = ("full", "intermediate", "lmg", "oat", "two_cavity_full", "tmss")
INITIAL_STATES = ("stretched", "all_atoms_in_1_cavity_vacuum")
SWEEP_AXES = ("N", "J", "S_R")

_DRIVE_KEYS = {
    "g1", "g2", "Omega1", "Omega2", "Omega_tilde1", "Omega_tilde2",
    "Delta1", "Delta2", "delta1", "delta2", "gamma1", "gamma2", "N",
}
_DRIVE_OPT = {"phi", "n_max"}
_LMG_RAW_KEYS = {"c_x", "c_y", "N"}
_LMG_RAW_OPT = {"c_z", "phi"}
_OAT_KEYS = {"chi", "N"}
_TMSS_KEYS = {"chi", "J", "S_L", "S_R"}
_TWO_CAVITY_KEYS = {"A", "B", "delta", "gamma", "J_tilde", "S_L", "S_R"}
_TWO_CAVITY_OPT = {"n_max"}
_INTEGRATOR_KEYS = {"t_final"}
_INTEGRATOR_OPT = {"n_output", "dt", "oversample", "seed", "n_traj", "stability_margin"}
_TOP_KEYS = {"model", "params"}
_TOP_OPT = {
    "dissipation", "initial_state", "integrator", "observables", "sweep",
    "companion_model", "coeff_mode", "output",
}


def _no_duplicates(pairs):
    seen = set()
    for key, _ in pairs:
        if key in seen:
            raise ParseError(f"duplicate key {key!r}")
        seen.add(key)
    return dict(pairs)


def _check_keys(obj: dict, required: set, optional: set, where: str):
    if not isinstance(obj, dict):
        raise ValidationError(f"{where}: expected an object")
    missing = required - obj.keys()
    if missing:
        raise ValidationError(f"{where}: missing key(s) {sorted(missing)}")
    unknown = obj.keys() - required - optional
    if unknown:
        raise ValidationError(f"{where}: unknown key(s) {sorted(unknown)}")


def _finite_number(obj, key, where, integer=False):
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValidationError(f"{where}.{key}: expected a number, got {v!r}")
    if not math.isfinite(v):
        raise ValidationError(f"{where}.{key}: value must be finite")
    if integer and v != int(v):
        raise ValidationError(f"{where}.{key}: expected an integer")
    return int(v) if integer else float(v)


@dataclass(frozen=True)
class Scenario:
    raw: dict
    model: str
    params: dict
    dissipation: dict | None
    initial_state: object
    integrator: dict
    observables: list | None
    sweep: tuple | None  # (axis name, list of values)
    companion_model: str | None
    coeff_mode: str
    output: dict | None

    @property
    def hash(self) -> str:
        canonical = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]

    def drive_params(self) -> DriveParams:
        if self.model in ("full", "intermediate") or (
            self.model == "lmg" and "g1" in self.params
        ):
            return DriveParams(**self.params)
        raise ValidationError(f"scenario model {self.model!r} carries no drive parameters")

    def dissipation_params(self) -> DissipationParams | None:
        if self.dissipation is None:
            return None
        kappa = self.dissipation.get("kappa", 0.0)
        gamma_d = self.dissipation.get("gamma_d", 0.0)
        if self.model in ("full",):
            return DissipationParams(kappa=kappa, gamma_d=gamma_d)
        try:
            p = self.drive_params()
        except ValidationError:
            return DissipationParams(kappa=kappa, gamma_d=gamma_d)
        return dissipation_from_drive(p, kappa, gamma_d)

    def two_cavity_params(self) -> TwoCavityParams:
        if self.model == "tmss":
            return TwoCavityParams.balanced(
                chi=self.params["chi"], J=self.params["J"],
                S_L=self.params["S_L"], S_R=self.params["S_R"],
            )
        if self.model == "two_cavity_full":
            return TwoCavityParams(**self.params)
        raise ValidationError(f"scenario model {self.model!r} is not a two-cavity model")


def _validate_params(model: str, params: dict) -> dict:
    where = "params"
    if model in ("full", "intermediate"):
        _check_keys(params, _DRIVE_KEYS, _DRIVE_OPT, where)
        out = {k: _finite_number(params, k, where, integer=k in ("N", "n_max")) for k in params}
    elif model == "lmg":
        if "g1" in params or "c_x" not in params:
            _check_keys(params, _DRIVE_KEYS, _DRIVE_OPT, where)
            out = {
                k: _finite_number(params, k, where, integer=k in ("N", "n_max")) for k in params
            }
        else:
            _check_keys(params, _LMG_RAW_KEYS, _LMG_RAW_OPT, where)
            out = {k: _finite_number(params, k, where, integer=(k == "N")) for k in params}
    elif model == "oat":
        _check_keys(params, _OAT_KEYS, set(), where)
        out = {k: _finite_number(params, k, where, integer=(k == "N")) for k in params}
    elif model == "tmss":
        _check_keys(params, _TMSS_KEYS, set(), where)
        out = {k: _finite_number(params, k, where) for k in params}
    elif model == "two_cavity_full":
        _check_keys(params, _TWO_CAVITY_KEYS, _TWO_CAVITY_OPT, where)
        out = {k: _finite_number(params, k, where, integer=(k == "n_max")) for k in params}
    else:
        raise ValidationError(f"model: must be one of {MODELS}")
    return out


def validate_scenario(doc: dict) -> Scenario:
    _check_keys(doc, _TOP_KEYS, _TOP_OPT, "scenario")
    model = doc["model"]
    if model not in MODELS:
        raise ValidationError(f"model: {model!r} not one of {MODELS}")
    params = _validate_params(model, doc["params"])

    dissipation = doc.get("dissipation")
    if dissipation is not None:
        _check_keys(dissipation, set(), {"kappa", "gamma_d"}, "dissipation")
        dissipation = {
            k: _finite_number(dissipation, k, "dissipation") for k in dissipation
        }
        for k, v in dissipation.items():
            if v < 0:
                raise ValidationError(f"dissipation.{k}: must be >= 0")

    initial = doc.get("initial_state")
    if initial is None:
        initial = "all_atoms_in_1_cavity_vacuum" if model == "full" else "stretched"
    if isinstance(initial, dict):
        _check_keys(initial, {"amplitudes"}, set(), "initial_state")
        amps = initial["amplitudes"]
        if not isinstance(amps, list) or not all(
            isinstance(a, list) and len(a) == 2 for a in amps
        ):
            raise ValidationError("initial_state.amplitudes: expected a list of [re, im] pairs")
    elif initial not in INITIAL_STATES:
        raise ValidationError(f"initial_state: {initial!r} not one of {INITIAL_STATES}")
    if initial == "all_atoms_in_1_cavity_vacuum" and model != "full":
        raise ValidationError("initial_state: all_atoms_in_1_cavity_vacuum needs model=full")

    integrator = doc.get("integrator", {"t_final": 0.0})
    _check_keys(integrator, _INTEGRATOR_KEYS, _INTEGRATOR_OPT, "integrator")
    integrator = {
        k: _finite_number(
            integrator, k, "integrator", integer=k in ("n_output", "seed", "n_traj")
        )
        for k in integrator
    }
    if integrator["t_final"] < 0:
        raise ValidationError("integrator.t_final: must be >= 0")

    observables = doc.get("observables")
    if observables is not None and (
        not isinstance(observables, list) or not all(isinstance(o, str) for o in observables)
    ):
        raise ValidationError("observables: expected a list of channel names")

    sweep = doc.get("sweep")
    if sweep is not None:
        _check_keys(sweep, set(), set(SWEEP_AXES), "sweep")
        if len(sweep) != 1:
            raise ValidationError("sweep: exactly one axis required")
        axis, values = next(iter(sweep.items()))
        if not isinstance(values, list) or not values:
            raise ValidationError(f"sweep.{axis}: expected a non-empty list")
        values = [
            _finite_number({"v": v}, "v", f"sweep.{axis}", integer=axis in ("N",))
            for v in values
        ]
        if axis == "N" and model not in ("full", "intermediate", "lmg", "oat"):
            raise ValidationError("sweep.N: only for single-spin models")
        if axis in ("J", "S_R") and model not in ("tmss", "two_cavity_full"):
            raise ValidationError(f"sweep.{axis}: only for two-cavity models")
        sweep = (axis, values)

    companion = doc.get("companion_model")
    if companion is not None:
        if companion != "lmg":
            raise ValidationError("companion_model: only 'lmg' is supported")
        if model not in ("full", "intermediate"):
            raise ValidationError("companion_model: needs model=full or intermediate")

    coeff_mode = doc.get("coeff_mode", "approx")
    if coeff_mode not in ("approx", "exact"):
        raise ValidationError("coeff_mode: must be 'approx' or 'exact'")

    output = doc.get("output")
    if output is not None:
        _check_keys(output, {"path"}, {"format"}, "output")
        if output.get("format", "csv") not in ("csv", "json"):
            raise ValidationError("output.format: must be 'csv' or 'json'")

    return Scenario(
        raw=doc, model=model, params=params, dissipation=dissipation,
        initial_state=initial, integrator=integrator, observables=observables,
        sweep=sweep, companion_model=companion, coeff_mode=coeff_mode, output=output,
    )


def load_scenario(path) -> Scenario:
    """Parse and validate a scenario file."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text, object_pairs_hook=_no_duplicates)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: top level must be an object")
    try:
        return validate_scenario(doc)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from exc

"""Versioned JSON snapshots of trial state, written atomically.

Snapshots exclude posterior draws; because every MCMC refit and stage-2
randomization derives its stream deterministically from the trial seed and
the refit/cohort counters, a snapshot plus the audit log reproduces the
full in-memory state exactly.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict
from pathlib import Path
from typing import Optional

import numpy as np

from .models import DoseCombo, DoseWindow, EfficacyParams, MtdCurve, \
    ToxicityParamsClinical
from .inference import McmcConfig, PatientRecord, TrialData
from .design import DesignConfig, PendingAssignment, TrialState

SCHEMA_VERSION = 1


def state_to_dict(state: TrialState) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "config": asdict(state.config),
        "window": asdict(state.window),
        "mcmc": asdict(state.mcmc),
        "seed": state.seed,
        "phase": state.phase,
        "c1": state.c1,
        "c2": state.c2,
        "refits": state.refits,
        "stop_reason": state.stop_reason,
        "records": [
            {"index": r.index, "x": r.dose.x, "y": r.dose.y, "z": r.z,
             "e": r.e, "stage": r.stage, "cohort": r.cohort}
            for r in state.data.records
        ],
        "pending": [
            {"index": a.index, "x": a.dose.x, "y": a.dose.y,
             "stage": a.stage, "cohort": a.cohort, "alpha": a.alpha}
            for a in state.pending
        ],
        "medians_tox": asdict(state.medians_tox) if state.medians_tox else None,
        "medians_eff": asdict(state.medians_eff) if state.medians_eff else None,
        "medians_tox_prev": (asdict(state.medians_tox_prev)
                             if state.medians_tox_prev else None),
        "medians_eff_prev": (asdict(state.medians_eff_prev)
                             if state.medians_eff_prev else None),
        "curve": None if state.curve is None else {
            "x": state.curve.xs.tolist(),
            "y": state.curve.ys.tolist(),
            "empty_reason": state.curve.empty_reason,
        },
    }


def state_from_dict(doc: dict) -> TrialState:
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported state schema version: "
                         f"{doc.get('schema_version')!r}")
    config = DesignConfig(**doc["config"])
    window = DoseWindow(**doc["window"])
    mcmc = McmcConfig(**doc["mcmc"])
    data = TrialData(records=[
        PatientRecord(index=r["index"], dose=DoseCombo(r["x"], r["y"]),
                      z=r["z"], e=r["e"], stage=r["stage"], cohort=r["cohort"])
        for r in doc["records"]
    ])
    pending = [
        PendingAssignment(index=a["index"], dose=DoseCombo(a["x"], a["y"]),
                          stage=a["stage"], cohort=a["cohort"],
                          alpha=a.get("alpha"))
        for a in doc["pending"]
    ]
    medians_tox = (ToxicityParamsClinical(**doc["medians_tox"])
                   if doc.get("medians_tox") else None)
    medians_eff = (EfficacyParams(**doc["medians_eff"])
                   if doc.get("medians_eff") else None)
    curve: Optional[MtdCurve] = None
    if doc.get("curve") is not None and medians_tox is not None:
        c = doc["curve"]
        if c.get("empty_reason"):
            curve = MtdCurve(medians_tox, config.theta_z, np.empty(0),
                             np.empty(0), empty_reason=c["empty_reason"])
        else:
            curve = MtdCurve(medians_tox, config.theta_z,
                             np.asarray(c["x"]), np.asarray(c["y"]))
    state = TrialState(config=config, window=window, seed=doc["seed"],
                       mcmc=mcmc, data=data, phase=doc["phase"],
                       c1=doc["c1"], c2=doc["c2"], refits=doc["refits"],
                       pending=pending, medians_tox=medians_tox,
                       medians_eff=medians_eff,
                       medians_tox_prev=(ToxicityParamsClinical(**doc["medians_tox_prev"])
                                         if doc.get("medians_tox_prev") else None),
                       medians_eff_prev=(EfficacyParams(**doc["medians_eff_prev"])
                                         if doc.get("medians_eff_prev") else None),
                       curve=curve, stop_reason=doc.get("stop_reason"))
    return state


def write_state(state: TrialState, path: Path):
    """Atomic write: temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = json.dumps(state_to_dict(state), indent=2, sort_keys=True) + "\n"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(payload)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def read_state(path: Path) -> TrialState:
    return state_from_dict(json.loads(Path(path).read_text()))
